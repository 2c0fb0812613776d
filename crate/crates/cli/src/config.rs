//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use dicke_core::semiclassics::RateChoice;
use dicke_core::solvers::EIGEN_MAX_ATOMS;
use dicke_core::{ApproximationMode, ModelParams};

use crate::error::CliError;

/// Lines of this form in a result file carry the config echo.
pub const ECHO_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Evolve,
    Steady,
    Sweep,
    Stability,
    OracleCompare,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Evolve => "evolve",
            Task::Steady => "steady",
            Task::Sweep => "sweep",
            Task::Stability => "stability",
            Task::OracleCompare => "oracle-compare",
        }
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "evolve" => Task::Evolve,
            "steady" => Task::Steady,
            "sweep" => Task::Sweep,
            "stability" => Task::Stability,
            "oracle-compare" => Task::OracleCompare,
            _ => return Err(format!("unknown task '{s}'")),
        })
    }
}

pub fn parse_mode(s: &str) -> Result<ApproximationMode, String> {
    ApproximationMode::ALL
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| format!("unknown mode '{s}' (expected full, secular, large-detuning or secular-large-detuning)"))
}

fn rate_choice_name(c: RateChoice) -> &'static str {
    match c {
        RateChoice::Exact => "exact",
        RateChoice::LargeDetuningApprox => "large-detuning-approx",
    }
}

fn parse_rate_choice(s: &str) -> Result<RateChoice, String> {
    match s {
        "exact" => Ok(RateChoice::Exact),
        "large-detuning-approx" => Ok(RateChoice::LargeDetuningApprox),
        _ => Err(format!("unknown semiclassical_rates '{s}'")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    GSqrtN,
    Omega0,
    Kappa,
    NAtoms,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::GSqrtN => "g_sqrt_n",
            SweepAxis::Omega0 => "omega0",
            SweepAxis::Kappa => "kappa",
            SweepAxis::NAtoms => "n_atoms",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "g_sqrt_n" => SweepAxis::GSqrtN,
            "omega0" => SweepAxis::Omega0,
            "kappa" => SweepAxis::Kappa,
            "n_atoms" => SweepAxis::NAtoms,
            _ => return Err(format!("unknown sweep_axis '{s}'")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitTarget {
    None,
    Sx,
    Sy,
    Sz,
}

impl FromStr for FitTarget {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "none" => FitTarget::None,
            "sx" => FitTarget::Sx,
            "sy" => FitTarget::Sy,
            "sz" => FitTarget::Sz,
            _ => return Err(format!("unknown fit_observable '{s}'")),
        })
    }
}

impl FitTarget {
    fn name(self) -> &'static str {
        match self {
            FitTarget::None => "none",
            FitTarget::Sx => "sx",
            FitTarget::Sy => "sy",
            FitTarget::Sz => "sz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    G(f64),
    GSqrtN(f64),
}

/// Every recognised key, in echo order.
pub const KEYS: &[&str] = &[
    "task",
    "mode",
    "n_atoms",
    "omega0",
    "omega",
    "kappa",
    "g",
    "g_sqrt_n",
    "t_final",
    "samples",
    "tilt",
    "rtol",
    "atol",
    "fit_observable",
    "fit_max_residual",
    "positivity",
    "semiclassical_rates",
    "sweep_axis",
    "sweep_start",
    "sweep_stop",
    "sweep_step",
    "sweep_values",
    "oracle_tolerance",
    "oracle_max_cutoff",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub mode: ApproximationMode,
    pub n_atoms: usize,
    pub omega0: f64,
    pub omega: f64,
    pub kappa: f64,
    pub coupling: Option<Coupling>,
    pub t_final: f64,
    pub samples: usize,
    pub tilt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub fit_observable: FitTarget,
    pub fit_max_residual: f64,
    /// Track the minimum eigenvalue of ρ (limited to small N).
    pub positivity: bool,
    pub semiclassical_rates: RateChoice,
    pub sweep_axis: SweepAxis,
    pub sweep_start: Option<f64>,
    pub sweep_stop: Option<f64>,
    pub sweep_step: Option<f64>,
    pub sweep_values: Option<Vec<f64>>,
    pub oracle_tolerance: f64,
    pub oracle_max_cutoff: usize,
}

/// Raw key/value pairs; later assignments win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(CliError::Config(format!("unknown key '{key}'")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// `KEY=VALUE` as given to `--set`.
    pub fn set_assignment(&mut self, text: &str) -> Result<(), CliError> {
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, got '{text}'")))?;
        self.set(k, v)
    }

    /// Parse a config file. A result file is accepted too: if it contains
    /// echo lines, only those are read.
    pub fn merge_text(&mut self, text: &str) -> Result<(), CliError> {
        let echoed: Vec<&str> = text.lines().filter_map(|l| l.strip_prefix(ECHO_PREFIX)).collect();
        if !echoed.is_empty() {
            for (k, line) in echoed.iter().enumerate() {
                self.merge_line(line, k + 1)?;
            }
            return Ok(());
        }
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.merge_line(line, k + 1)?;
        }
        Ok(())
    }

    fn merge_line(&mut self, line: &str, number: usize) -> Result<(), CliError> {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {number}: expected 'key = value'")))?;
        self.set(k, v).map_err(|e| CliError::Config(format!("line {number}: {e}")))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::Config(format!("{key}: {e}"))))
            .transpose()
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn build(&self) -> Result<RunConfig, CliError> {
        let task: Task = self.get("task")?.ok_or_else(|| CliError::Config("task is required".into()))?;
        let mode = match self.values.get("mode") {
            Some(m) => parse_mode(m).map_err(CliError::Config)?,
            None => ApproximationMode::Full,
        };
        let semiclassical_rates = match self.values.get("semiclassical_rates") {
            Some(s) => parse_rate_choice(s).map_err(CliError::Config)?,
            None => RateChoice::LargeDetuningApprox,
        };
        let coupling = match (self.get::<f64>("g")?, self.get::<f64>("g_sqrt_n")?) {
            (Some(_), Some(_)) => return Err(CliError::Config("set only one of g and g_sqrt_n".into())),
            (Some(g), None) => Some(Coupling::G(g)),
            (None, Some(x)) => Some(Coupling::GSqrtN(x)),
            (None, None) => None,
        };
        let sweep_values = self
            .values
            .get("sweep_values")
            .map(|s| {
                s.split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|e| CliError::Config(format!("sweep_values: {e}"))))
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;
        let cfg = RunConfig {
            task,
            mode,
            n_atoms: self.get_or("n_atoms", 16)?,
            omega0: self.get_or("omega0", 0.1)?,
            omega: self.get_or("omega", 1.0)?,
            kappa: self.get_or("kappa", 1.0)?,
            coupling,
            t_final: self.get_or("t_final", 1000.0)?,
            samples: self.get_or("samples", 1000)?,
            tilt: self.get_or("tilt", 1e-3)?,
            rtol: self.get_or("rtol", 1e-9)?,
            atol: self.get_or("atol", 1e-12)?,
            fit_observable: self.get_or("fit_observable", FitTarget::None)?,
            fit_max_residual: self.get_or("fit_max_residual", 0.05)?,
            positivity: self.get_or("positivity", true)?,
            semiclassical_rates,
            sweep_axis: self.get_or("sweep_axis", SweepAxis::GSqrtN)?,
            sweep_start: self.get("sweep_start")?,
            sweep_stop: self.get("sweep_stop")?,
            sweep_step: self.get("sweep_step")?,
            sweep_values,
            oracle_tolerance: self.get_or("oracle_tolerance", 1e-8)?,
            oracle_max_cutoff: self.get_or("oracle_max_cutoff", 256)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    fn uses_grid(&self) -> bool {
        matches!(self.task, Task::Sweep | Task::OracleCompare)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.samples == 0 {
            return bad("samples must be positive".into());
        }
        if !(self.t_final > 0.0) {
            return bad(format!("t_final must be positive, got {}", self.t_final));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return bad("rtol and atol must be positive".into());
        }
        if !(self.oracle_tolerance > 0.0) || self.oracle_max_cutoff < 2 {
            return bad("oracle_tolerance must be positive and oracle_max_cutoff at least 2".into());
        }
        if self.positivity && self.n_atoms > EIGEN_MAX_ATOMS {
            return bad(format!("positivity tracking is limited to n_atoms <= {EIGEN_MAX_ATOMS}; set positivity = false"));
        }
        if !(self.fit_max_residual > 0.0) {
            return bad("fit_max_residual must be positive".into());
        }
        if self.uses_grid() {
            let axis = if self.task == Task::OracleCompare {
                if self.sweep_axis != SweepAxis::GSqrtN {
                    return bad("oracle-compare sweeps g_sqrt_n only".into());
                }
                SweepAxis::GSqrtN
            } else {
                self.sweep_axis
            };
            if axis == SweepAxis::GSqrtN && self.coupling.is_some() {
                return bad("g and g_sqrt_n are set by the sweep; remove them".into());
            }
            if axis != SweepAxis::GSqrtN && self.coupling.is_none() {
                return bad("a coupling (g or g_sqrt_n) is required".into());
            }
            let grid = self.grid()?;
            if grid.is_empty() {
                return bad("sweep range is empty".into());
            }
            if self.positivity && axis == SweepAxis::NAtoms && grid.iter().any(|&n| n as usize > EIGEN_MAX_ATOMS) {
                return bad(format!("positivity tracking is limited to n_atoms <= {EIGEN_MAX_ATOMS}; set positivity = false"));
            }
        } else {
            if self.coupling.is_none() {
                return bad("a coupling (g or g_sqrt_n) is required".into());
            }
            if self.sweep_start.is_some() || self.sweep_stop.is_some() || self.sweep_step.is_some() || self.sweep_values.is_some() {
                return bad(format!("sweep keys are not used by task {}", self.task.name()));
            }
            self.params()?;
        }
        Ok(())
    }

    /// Sweep grid: explicit `sweep_values`, or `start + k·step` up to `stop`.
    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        let values = match (&self.sweep_values, self.sweep_start, self.sweep_stop, self.sweep_step) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(start), Some(stop), Some(step)) => {
                if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
                    return Err(CliError::Config("sweep_step must be positive and the range finite".into()));
                }
                if stop < start {
                    return Ok(Vec::new());
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..count).map(|k| start + k as f64 * step).collect()
            }
            (None, None, None, None) => return Err(CliError::Config("sweep needs sweep_values or sweep_start/stop/step".into())),
            _ => return Err(CliError::Config("use either sweep_values or all of sweep_start, sweep_stop, sweep_step".into())),
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Config("sweep values must be finite".into()));
        }
        if self.sweep_axis == SweepAxis::NAtoms && values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
            return Err(CliError::Config("n_atoms sweep values must be positive integers".into()));
        }
        Ok(values)
    }

    /// Parameters of a single run.
    pub fn params(&self) -> Result<ModelParams, CliError> {
        let coupling = self.coupling.ok_or_else(|| CliError::Config("a coupling (g or g_sqrt_n) is required".into()))?;
        self.params_with(self.n_atoms, self.omega0, self.kappa, coupling)
    }

    fn params_with(&self, n: usize, omega0: f64, kappa: f64, coupling: Coupling) -> Result<ModelParams, CliError> {
        let p = ModelParams::new(omega0, self.omega, kappa, 0.0, n).map_err(|e| CliError::Config(e.to_string()))?;
        let p = match coupling {
            Coupling::G(g) => p.with_g(g),
            Coupling::GSqrtN(x) => p.with_g_sqrt_n(x),
        };
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        // every task needs a decaying cavity and a positive splitting
        if !(p.omega0 > 0.0 && p.kappa > 0.0) {
            return Err(CliError::Config(format!("omega0 and kappa must be positive (got {}, {})", p.omega0, p.kappa)));
        }
        Ok(p)
    }

    /// Parameters at one sweep grid value.
    pub fn params_at(&self, value: f64) -> Result<ModelParams, CliError> {
        let c = self.coupling;
        let need = || c.ok_or_else(|| CliError::Config("a coupling (g or g_sqrt_n) is required".into()));
        match self.sweep_axis {
            SweepAxis::GSqrtN => self.params_with(self.n_atoms, self.omega0, self.kappa, Coupling::GSqrtN(value)),
            SweepAxis::Omega0 => self.params_with(self.n_atoms, value, self.kappa, need()?),
            SweepAxis::Kappa => self.params_with(self.n_atoms, self.omega0, value, need()?),
            SweepAxis::NAtoms => self.params_with(value as usize, self.omega0, self.kappa, need()?),
        }
    }

    /// Canonical `key = value` lines; re-parsing them rebuilds `self`.
    pub fn echo(&self) -> Vec<(String, String)> {
        fn f(x: f64) -> String {
            // shortest representation that round-trips
            format!("{x:?}")
        }
        let mut out: Vec<(&str, String)> = vec![
            ("task", self.task.name().into()),
            ("mode", self.mode.name().into()),
            ("n_atoms", self.n_atoms.to_string()),
            ("omega0", f(self.omega0)),
            ("omega", f(self.omega)),
            ("kappa", f(self.kappa)),
        ];
        match self.coupling {
            Some(Coupling::G(g)) => out.push(("g", f(g))),
            Some(Coupling::GSqrtN(x)) => out.push(("g_sqrt_n", f(x))),
            None => {}
        }
        out.extend([
            ("t_final", f(self.t_final)),
            ("samples", self.samples.to_string()),
            ("tilt", f(self.tilt)),
            ("rtol", f(self.rtol)),
            ("atol", f(self.atol)),
            ("fit_observable", self.fit_observable.name().into()),
            ("fit_max_residual", f(self.fit_max_residual)),
            ("positivity", self.positivity.to_string()),
            ("semiclassical_rates", rate_choice_name(self.semiclassical_rates).into()),
            ("sweep_axis", self.sweep_axis.name().into()),
        ]);
        for (key, v) in [("sweep_start", self.sweep_start), ("sweep_stop", self.sweep_stop), ("sweep_step", self.sweep_step)] {
            if let Some(v) = v {
                out.push((key, f(v)));
            }
        }
        if let Some(v) = &self.sweep_values {
            out.push(("sweep_values", v.iter().map(|&x| f(x)).collect::<Vec<_>>().join(",")));
        }
        out.push(("oracle_tolerance", f(self.oracle_tolerance)));
        out.push(("oracle_max_cutoff", self.oracle_max_cutoff.to_string()));
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}
