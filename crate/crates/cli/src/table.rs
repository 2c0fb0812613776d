//! Result tables and their CSV form.

use std::io::{self, Write};

use crate::config::{RunConfig, ECHO_PREFIX};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
}

impl Cell {
    fn render(&self) -> String {
        match *self {
            // 17 significant digits
            Cell::Float(x) => format!("{x:.16e}"),
            Cell::Int(k) => k.to_string(),
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            Cell::Float(x) => x.is_finite(),
            Cell::Int(_) => true,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(k: usize) -> Self {
        Cell::Int(k as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Int(b as i64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Row {
    Values(Vec<Cell>),
    /// A grid point whose computation failed.
    Failed { index: usize, value: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    /// Extra `# key: value` lines after the config echo.
    pub notes: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        ResultTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Append a row; non-finite values are refused.
    pub fn push(&mut self, cells: Vec<Cell>) -> Result<(), String> {
        if cells.len() != self.columns.len() {
            return Err(format!("row has {} cells, table has {} columns", cells.len(), self.columns.len()));
        }
        if let Some(k) = cells.iter().position(|c| !c.is_finite()) {
            return Err(format!("non-finite value in column '{}'", self.columns[k]));
        }
        self.rows.push(Row::Values(cells));
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| matches!(r, Row::Failed { .. })).count()
    }

    /// Metadata, header and rows. `timestamp` is the only line that varies
    /// between identical runs.
    pub fn write_csv<W: Write>(&self, mut out: W, config: &RunConfig, timestamp: &str) -> io::Result<()> {
        writeln!(out, "# dicke {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(out, "# timestamp: {timestamp}")?;
        for (k, v) in config.echo() {
            writeln!(out, "{ECHO_PREFIX}{k} = {v}")?;
        }
        for (k, v) in &self.notes {
            writeln!(out, "# {k}: {v}")?;
        }
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            match row {
                Row::Values(cells) => {
                    let line: Vec<String> = cells.iter().map(Cell::render).collect();
                    writeln!(out, "{}", line.join(","))?;
                }
                Row::Failed { index, value, reason } => {
                    let reason = reason.replace(['\n', ','], " ");
                    writeln!(out, "#failed,{index},{value:.16e},{reason}")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_at_17_digits() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = Cell::Float(x).render();
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn refuses_bad_rows() {
        let mut t = ResultTable::new(&["a", "b"]);
        assert!(t.push(vec![1.0.into()]).is_err());
        assert!(t.push(vec![1.0.into(), f64::NAN.into()]).is_err());
        assert!(t.push(vec![1.0.into(), 3usize.into()]).is_ok());
    }
}
