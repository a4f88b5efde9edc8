//! Grid runner over the component axes: seed selection, acquisition
//! strategy, pseudo labelling and quenching.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::acquisition::Strategy;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::stats::MeanStd;
use crate::trainer::{AggregateReport, PseudoMode, RunConfig, SeedingMode, run_experiment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub seeding: SeedingMode,
    /// `None` spends the whole budget on seeds.
    pub strategy: Option<Strategy>,
    pub pseudo: PseudoMode,
    pub quench: bool,
}

impl AblationRow {
    pub fn new(
        name: &str,
        seeding: SeedingMode,
        strategy: Option<Strategy>,
        pseudo: PseudoMode,
        quench: bool,
    ) -> Self {
        Self { name: name.into(), seeding, strategy, pseudo, quench }
    }

    fn strategy_label(&self) -> &'static str {
        self.strategy.map_or("-", Strategy::as_str)
    }
}

/// The five standard rows; the last one is the full mechanism.
pub fn standard_grid() -> Vec<AblationRow> {
    use PseudoMode::*;
    use SeedingMode::*;
    use Strategy::{IntegratedEntropy, LeastConfidence};
    vec![
        AblationRow::new("random_baseline", Random, None, Off, false),
        AblationRow::new("random_seeding", Random, Some(LeastConfidence), Dynamic, true),
        AblationRow::new("entropy_acquisition", Sparse, Some(IntegratedEntropy), Dynamic, true),
        AblationRow::new("static_pseudo", Sparse, Some(LeastConfidence), Static, false),
        AblationRow::new("full", Sparse, Some(LeastConfidence), Dynamic, true),
    ]
}

/// Applies `row` to `base` at a total annotation budget `total` (fraction of
/// the training split). Rows with an acquisition strategy keep the base seed
/// fraction (capped at `total`) and request the rest; rows without one spend
/// everything on seeds.
pub fn budget_config(base: &RunConfig, row: &AblationRow, total: f64) -> Result<RunConfig> {
    if !(total > 0.0 && total <= 1.0) {
        return Err(Error::config("budget", format!("{total} outside (0, 1]")));
    }
    let (seed_fraction, request_fraction, strategy) = match row.strategy {
        Some(s) => {
            let seed = base.seed_fraction.min(total);
            (seed, (total - seed).max(0.0), s)
        }
        None => (total, 0.0, base.strategy),
    };
    let cfg = RunConfig {
        seed_fraction,
        request_fraction,
        strategy,
        seeding: row.seeding,
        pseudo: row.pseudo,
        quench: row.quench,
        ..base.clone()
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub budget: f64,
    pub report: AggregateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
    pub budgets: Vec<f64>,
    /// `cells[row][budget]`.
    pub cells: Vec<Vec<AblationCell>>,
}

/// One `run_experiment` per (row, budget) with identical seeds across cells.
pub fn run_ablation(
    dataset: &Dataset,
    base: &RunConfig,
    grid: &[AblationRow],
    budgets: &[f64],
    n_repeats: usize,
    parallel: bool,
) -> Result<AblationResult> {
    if grid.is_empty() || budgets.is_empty() {
        return Err(Error::InvalidArgument("ablation grid and budgets must be non-empty".into()));
    }
    let mut cells = Vec::with_capacity(grid.len());
    for row in grid {
        let mut row_cells = Vec::with_capacity(budgets.len());
        for &budget in budgets {
            let cfg = budget_config(base, row, budget)?;
            log::info!("ablation row {} at budget {budget}", row.name);
            let report = run_experiment(dataset, &cfg, n_repeats, parallel)?;
            row_cells.push(AblationCell { budget, report });
        }
        cells.push(row_cells);
    }
    Ok(AblationResult { rows: grid.to_vec(), budgets: budgets.to_vec(), cells })
}

fn budget_label(b: f64) -> String {
    format!("{}%", (b * 1e4).round() / 1e2)
}

impl AblationResult {
    pub fn malignancy(&self, row: usize, budget: usize) -> MeanStd {
        self.cells[row][budget].report.malignancy_accuracy
    }

    /// Malignancy accuracy mean and std per budget, one line per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,seeding,strategy,pseudo,quench");
        for &b in &self.budgets {
            let l = budget_label(b);
            let _ = write!(out, ",malignancy_mean_{l},malignancy_std_{l}");
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                row.name,
                row.seeding,
                row.strategy_label(),
                row.pseudo,
                row.quench
            );
            for j in 0..self.budgets.len() {
                let m = self.malignancy(i, j);
                let _ = write!(out, ",{},{}", m.mean, m.std);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut header: Vec<String> =
            ["name", "seeding", "strategy", "pseudo", "quench"].map(String::from).to_vec();
        header.extend(self.budgets.iter().map(|&b| budget_label(b)));
        let mut lines = vec![header];
        for (i, row) in self.rows.iter().enumerate() {
            let mut cols = vec![
                row.name.clone(),
                row.seeding.to_string(),
                row.strategy_label().to_string(),
                row.pseudo.to_string(),
                if row.quench { "yes" } else { "no" }.to_string(),
            ];
            cols.extend((0..self.budgets.len()).map(|j| self.malignancy(i, j).to_string()));
            lines.push(cols);
        }
        align(&lines)
    }
}

/// Left-aligned columns separated by two spaces.
pub fn align(lines: &[Vec<String>]) -> String {
    let n = lines.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..n)
        .map(|c| lines.iter().filter_map(|l| l.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in lines {
        let mut s = String::new();
        for (c, cell) in line.iter().enumerate() {
            if c > 0 {
                s.push_str("  ");
            }
            let _ = write!(s, "{cell:<w$}", w = widths[c]);
        }
        out.push_str(s.trim_end());
        out.push('\n');
    }
    out
}
