//! Table-shaped reports, printed for people and saved as JSON.

use std::fmt::Write as _;

use buildnet_core::training::{AblationRow, Metrics, STANDARD_KS};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorCell {
    pub k: usize,
    /// Percent.
    pub mean: f64,
    /// Sample standard deviation over runs, percent; zero for a single run.
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub label: String,
    pub runs: usize,
    pub errors: Vec<ErrorCell>,
}

impl TableRow {
    pub fn single(label: impl Into<String>, m: &Metrics) -> Self {
        let errors = m.top_k_error.iter().map(|(&k, &e)| ErrorCell { k, mean: 100.0 * e, std: 0.0 }).collect();
        TableRow { label: label.into(), runs: 1, errors }
    }

    pub fn ablation(row: &AblationRow) -> Self {
        let errors = row
            .mean
            .iter()
            .map(|(&k, &mean)| ErrorCell { k, mean: 100.0 * mean, std: 100.0 * row.std[&k] })
            .collect();
        TableRow { label: row.mask.to_string(), runs: row.runs.len(), errors }
    }

    pub fn error(&self, k: usize) -> Option<f64> {
        self.errors.iter().find(|c| c.k == k).map(|c| c.mean)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorTable {
    pub title: String,
    pub test_examples: usize,
    pub rows: Vec<TableRow>,
}

impl ErrorTable {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} ({} test examples)", self.title, self.test_examples);
        let _ = write!(out, "{:<16}", "inputs");
        for k in STANDARD_KS {
            let _ = write!(out, "{:>18}", format!("top-{k} error %"));
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<16}", row.label);
            for k in STANDARD_KS {
                let cell = row.errors.iter().find(|c| c.k == k);
                let text = match cell {
                    Some(c) if row.runs > 1 => format!("{:.2} ± {:.2}", c.mean, c.std),
                    Some(c) => format!("{:.2}", c.mean),
                    None => "-".into(),
                };
                let _ = write!(out, "{text:>18}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn renders_runs_with_deviation() {
        let m = Metrics { examples: 10, top_k_error: BTreeMap::from([(1, 0.5), (3, 0.25), (10, 0.0)]), ..Default::default() };
        let mut row = TableRow::single("a", &m);
        let table = ErrorTable { title: "t".into(), test_examples: 10, rows: vec![row.clone()] };
        assert!(table.render().contains("50.00"));
        row.runs = 5;
        row.errors[0].std = 1.5;
        let table = ErrorTable { title: "t".into(), test_examples: 10, rows: vec![row] };
        assert!(table.render().contains("50.00 ± 1.50"));
    }
}
