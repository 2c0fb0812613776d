//! Task dispatch: each task turns a config into a result table.

use dicke_core::fit::{fit_damping_with, FitOptions};
use dicke_core::oracle::{oracle_steady_state, CutoffPolicy};
use dicke_core::semiclassics::{fixed_points, stability, FixedPointKind, Stability};
use dicke_core::solvers::{evolve, steady_state, uniform_grid, EvolutionControls, Observable};
use dicke_core::{DickeDensityMatrix, GeneratorSpec, ModelParams};
use log::{debug, info};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::{FitTarget, RunConfig, Task};
use crate::error::CliError;
use crate::table::{Cell, ResultTable, Row};

/// Run a task. Sweep points that fail become failed rows; the caller
/// decides the exit code from [`ResultTable::failed_rows`].
pub fn run(config: &RunConfig, workers: usize) -> Result<ResultTable, CliError> {
    info!("task {} mode {}", config.task.name(), config.mode.name());
    match config.task {
        Task::Evolve => run_evolve(config),
        Task::Steady => {
            let mut table = ResultTable::new(&steady_columns(config));
            let row = steady_row(config, &config.params()?)?;
            table.push(row).map_err(CliError::NonFinite)?;
            Ok(table)
        }
        Task::Sweep => run_grid(config, workers, &steady_columns(config), steady_row),
        Task::Stability => run_stability(config),
        Task::OracleCompare => run_grid(config, workers, &ORACLE_COLUMNS, oracle_row),
    }
}

fn steady_columns(config: &RunConfig) -> Vec<&'static str> {
    let mut cols = vec![
        "n_atoms",
        "omega0",
        "kappa",
        "g_sqrt_n",
        "sz",
        "sz_norm",
        "sx",
        "sz2",
        "purity",
    ];
    if config.positivity {
        cols.push("min_eigenvalue");
    }
    cols.extend(["residual", "degenerate", "semiclassical_sz_norm"]);
    cols
}

/// `sz/ℓ` of the ordered branch, or `-1` when only the normal state exists.
fn semiclassical_sz_norm(config: &RunConfig, params: &ModelParams) -> Result<f64, CliError> {
    let fps = fixed_points(params, config.semiclassical_rates)?;
    Ok(fps
        .iter()
        .find(|fp| fp.kind == FixedPointKind::SuperradiantPlus)
        .map_or(-1.0, |fp| fp.spin.sz / params.spin()))
}

fn steady_row(config: &RunConfig, params: &ModelParams) -> Result<Vec<Cell>, CliError> {
    let spec = GeneratorSpec::new(params, config.mode)?;
    let ss = steady_state(&spec)?;
    let o = &ss.observables;
    debug!("steady N={} g√N={} residual {:e}", params.n_atoms, params.g_sqrt_n(), ss.residual);
    let mut row: Vec<Cell> = vec![
        params.n_atoms.into(),
        params.omega0.into(),
        params.kappa.into(),
        params.g_sqrt_n().into(),
        o.sz.into(),
        (o.sz / params.spin()).into(),
        o.sx.into(),
        o.sz2.into(),
        o.purity.into(),
    ];
    if config.positivity {
        let e = o
            .min_eigenvalue
            .ok_or_else(|| CliError::Config("positivity tracking unavailable at this N".into()))?;
        row.push(e.into());
    }
    row.extend::<[Cell; 3]>([
        ss.residual.into(),
        ss.degenerate.into(),
        semiclassical_sz_norm(config, params)?.into(),
    ]);
    Ok(row)
}

const ORACLE_COLUMNS: [&str; 7] = [
    "g_sqrt_n",
    "sz_oracle",
    "sz_atom_only",
    "abs_difference",
    "photons",
    "n_max",
    "residual",
];

fn oracle_row(config: &RunConfig, params: &ModelParams) -> Result<Vec<Cell>, CliError> {
    let policy = CutoffPolicy {
        initial: None,
        tolerance: config.oracle_tolerance,
        max_n: config.oracle_max_cutoff,
    };
    let joint = oracle_steady_state(params, &policy)?;
    let spec = GeneratorSpec::new(params, config.mode)?;
    let atom = steady_state(&spec)?;
    let (a, b) = (joint.observables.sz, atom.observables.sz);
    Ok(vec![
        params.g_sqrt_n().into(),
        a.into(),
        b.into(),
        (a - b).abs().into(),
        joint.observables.photons.into(),
        joint.n_max.into(),
        joint.residual.into(),
    ])
}

/// One row per grid value, computed in parallel and kept in grid order.
fn run_grid(
    config: &RunConfig,
    workers: usize,
    columns: &[&str],
    point: fn(&RunConfig, &ModelParams) -> Result<Vec<Cell>, CliError>,
) -> Result<ResultTable, CliError> {
    let grid = config.grid()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<Vec<Cell>, CliError>> = pool.install(|| {
        grid.par_iter()
            .map(|&v| config.params_at(v).and_then(|p| point(config, &p)))
            .collect()
    });
    let mut table = ResultTable::new(columns);
    table.note("sweep_axis", config.sweep_axis.name());
    for (index, (value, result)) in grid.iter().zip(results).enumerate() {
        let pushed = result.and_then(|cells| table.push(cells).map_err(CliError::NonFinite));
        if let Err(e) = pushed {
            eprintln!("sweep point {index} ({} = {value}) failed: {e}", config.sweep_axis.name());
            table.rows.push(Row::Failed {
                index,
                value: *value,
                reason: e.to_string(),
            });
        }
    }
    Ok(table)
}

fn run_evolve(config: &RunConfig) -> Result<ResultTable, CliError> {
    let params = config.params()?;
    let spec = GeneratorSpec::new(&params, config.mode)?;
    let rho0 = DickeDensityMatrix::tilted_down(params.n_atoms, config.tilt);
    let times = uniform_grid(config.t_final, config.samples);
    let controls = EvolutionControls {
        rtol: config.rtol,
        atol: config.atol,
        track_eigenvalues: config.positivity,
        ..Default::default()
    };
    let result = evolve(&spec, &rho0, &times, &controls)?;

    let mut cols = vec!["t", "sx", "sy", "sz", "purity", "trace_error"];
    if config.positivity {
        cols.push("min_eigenvalue");
    }
    let mut table = ResultTable::new(&cols);
    // the sign of the tilt picks which ordered branch the run can reach
    let branch = if config.tilt >= 0.0 { "superradiant_plus" } else { "superradiant_minus" };
    table.note("tilt_branch", branch);
    table.note("trace_flagged", result.flagged);
    table.note("resymmetrizations", result.resymmetrizations);
    for ((t, o), err) in result.times.iter().zip(&result.observables).zip(&result.trace_error) {
        let mut row: Vec<Cell> = vec![(*t).into(), o.sx.into(), o.sy.into(), o.sz.into(), o.purity.into(), (*err).into()];
        if let Some(e) = o.min_eigenvalue.filter(|_| config.positivity) {
            row.push(e.into());
        }
        table.push(row).map_err(CliError::NonFinite)?;
    }

    let which = match config.fit_observable {
        FitTarget::None => None,
        FitTarget::Sx => Some(Observable::Sx),
        FitTarget::Sy => Some(Observable::Sy),
        FitTarget::Sz => Some(Observable::Sz),
    };
    if let Some(which) = which {
        let opts = FitOptions {
            max_residual: config.fit_max_residual,
            ..Default::default()
        };
        let fit = fit_damping_with(&result.times, &result.series(which), &opts)?;
        table.note("fit_decay_rate", format!("{:.16e}", fit.decay_rate));
        table.note("fit_frequency", format!("{:.16e}", fit.frequency));
        table.note("fit_residual", format!("{:.16e}", fit.residual));
    }
    Ok(table)
}

fn kind_code(kind: FixedPointKind) -> usize {
    match kind {
        FixedPointKind::NormalDown => 0,
        FixedPointKind::NormalUp => 1,
        FixedPointKind::SuperradiantPlus => 2,
        FixedPointKind::SuperradiantMinus => 3,
    }
}

fn stability_code(s: Stability) -> usize {
    match s {
        Stability::Stable => 0,
        Stability::Unstable => 1,
        Stability::Marginal => 2,
    }
}

/// Pair each numerical eigenvalue with the nearest unused closed-form one.
fn pair_nearest(numeric: &[Complex64], closed: &[Complex64]) -> Vec<(Complex64, Complex64)> {
    let mut unused: Vec<Complex64> = closed.to_vec();
    numeric
        .iter()
        .map(|&z| {
            let k = (0..unused.len())
                .min_by(|&i, &j| (unused[i] - z).norm().total_cmp(&(unused[j] - z).norm()))
                .expect("same number of eigenvalues");
            (z, unused.swap_remove(k))
        })
        .collect()
}

fn run_stability(config: &RunConfig) -> Result<ResultTable, CliError> {
    let params = config.params()?;
    let mut table = ResultTable::new(&[
        "branch",
        "sx",
        "sy",
        "sz",
        "eigen_index",
        "numeric_re",
        "numeric_im",
        "closed_form_re",
        "closed_form_im",
        "stability",
    ]);
    table.note("branch_codes", "0 normal-down 1 normal-up 2 superradiant-plus 3 superradiant-minus");
    table.note("stability_codes", "0 stable 1 unstable 2 marginal");
    table.note("critical_g_sqrt_n", format!("{:.16e}", dicke_core::critical_coupling(&params)?));
    for fp in fixed_points(&params, config.semiclassical_rates)? {
        let report = stability(&params, &fp, config.semiclassical_rates)?;
        for (k, (num, closed)) in pair_nearest(&report.eigenvalues, &report.closed_form).into_iter().enumerate() {
            table
                .push(vec![
                    kind_code(fp.kind).into(),
                    fp.spin.sx.into(),
                    fp.spin.sy.into(),
                    fp.spin.sz.into(),
                    k.into(),
                    num.re.into(),
                    num.im.into(),
                    closed.re.into(),
                    closed.im.into(),
                    stability_code(report.classification).into(),
                ])
                .map_err(CliError::NonFinite)?;
        }
    }
    Ok(table)
}
