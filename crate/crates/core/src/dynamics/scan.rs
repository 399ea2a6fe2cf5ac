//! Cutoff refinement at fixed box length.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::dressing::dress;
use super::{evolve, odd_hs_norm, pair_creation_probability, EvolutionConfig};
use crate::error::{Error, Result};
use crate::grid::{DenseBudget, Grid, GridSpec};
use crate::operator::Space;
use crate::parallel::ordered_map;
use crate::potential::FieldSource;
use crate::PhysicsParams;

pub const SCAN_CSV_HEADER: &str =
    "cutoff,n,raw_offdiag_hs,dressed_offdiag_hs,pair_probability,unitarity_defect";

/// Refinement points, either as grid sizes or as momentum cutoffs Λ = πn/L.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScanAxis {
    Points(Vec<usize>),
    Cutoffs(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub axis: ScanAxis,
    /// Relative increment on the last refinement below which a column saturates.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.02
}

impl ScanConfig {
    pub fn points(n: Vec<usize>) -> Self {
        ScanConfig {
            axis: ScanAxis::Points(n),
            threshold: default_threshold(),
        }
    }

    /// Grid sizes for a box of length `l`.
    pub fn grid_sizes(&self, l: f64) -> Result<Vec<usize>> {
        let ns = match &self.axis {
            ScanAxis::Points(v) => v.clone(),
            ScanAxis::Cutoffs(c) => c
                .iter()
                .map(|&lam| {
                    let x = lam * l / std::f64::consts::PI;
                    let n = x.round();
                    if !(x.is_finite()
                        && (x - n).abs() <= 1e-9 * x.abs().max(1.0)
                        && n >= 4.0
                        && n as u64 % 2 == 0)
                    {
                        Err(Error::InfeasibleCutoff(format!(
                            "cutoff {lam} gives n = {x}, not an even integer"
                        )))
                    } else {
                        Ok(n as usize)
                    }
                })
                .collect::<Result<_>>()?,
        };
        if ns.len() < 3 {
            return Err(Error::InfeasibleCutoff(format!(
                "need at least 3 points, got {}",
                ns.len()
            )));
        }
        if ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InfeasibleCutoff(
                "cutoffs must be strictly increasing".into(),
            ));
        }
        Ok(ns)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Saturating,
    Growing,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Saturating => "saturating",
            Classification::Growing => "growing",
        }
    }
}

/// Values below this are treated as exact zeros.
const ZERO_FLOOR: f64 = 1e-12;

/// Classifies by the relative increment between the last two values.
pub fn classify(values: &[f64], threshold: f64) -> Classification {
    match values {
        [.., a, b] => {
            let inc = if a.abs().max(b.abs()) < ZERO_FLOOR {
                0.0
            } else if *a == 0.0 {
                f64::INFINITY
            } else {
                (b - a).abs() / a.abs()
            };
            if inc < threshold {
                Classification::Saturating
            } else {
                Classification::Growing
            }
        }
        _ => Classification::Saturating,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub cutoff: f64,
    pub n: usize,
    pub raw_offdiag_hs: f64,
    pub dressed_offdiag_hs: f64,
    pub pair_probability: f64,
    pub unitarity_defect: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    pub threshold: f64,
    pub raw: Classification,
    pub dressed: Classification,
}

impl ScanResult {
    /// CSV body with [`SCAN_CSV_HEADER`]. Timing is kept out for reproducibility.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(SCAN_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:.12e},{},{:.12e},{:.12e},{:.12e},{:.6e}",
                r.cutoff,
                r.n,
                r.raw_offdiag_hs,
                r.dressed_offdiag_hs,
                r.pair_probability,
                r.unitarity_defect
            );
        }
        s
    }

    pub fn column(&self, f: impl Fn(&ScanRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// Relative increments of the raw and dressed columns between successive rows.
    pub fn increments(&self) -> (Vec<f64>, Vec<f64>) {
        let inc = |v: Vec<f64>| v.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect();
        (
            inc(self.column(|r| r.raw_offdiag_hs)),
            inc(self.column(|r| r.dressed_offdiag_hs)),
        )
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "threshold": self.threshold,
            "classification": { "raw": self.raw.as_str(), "dressed": self.dressed.as_str() },
            "wall_time": self.rows.iter().map(|r| r.wall_time).collect::<Vec<_>>(),
        })
    }
}

/// Evolves at every grid size with fixed box length and reports odd-block
/// norms before and after dressing. Rows run in parallel, ordered by cutoff.
pub fn cutoff_scan(
    src: &dyn FieldSource,
    base: &GridSpec,
    params: PhysicsParams,
    budget: DenseBudget,
    scan: &ScanConfig,
    cfg: &EvolutionConfig,
) -> Result<ScanResult> {
    cfg.validate()?;
    let ns = scan.grid_sizes(base.box_length)?;
    let specs: Vec<GridSpec> = ns.iter().map(|&n| GridSpec { n, ..base.clone() }).collect();
    for s in &specs {
        s.validate()?;
        budget.check(s)?;
    }
    let rows = ordered_map(specs.len(), |k| -> Result<ScanRow> {
        let start = Instant::now();
        let grid = Grid::build(&specs[k])?;
        let cutoff = grid.cutoff();
        let space: Arc<Space> = Space::with_budget(grid, params, budget)?;
        let u = evolve(src, cfg, &space)?.densified()?;
        let dressed = dress(src, cfg.t0, cfg.t1, &space, &u)?;
        Ok(ScanRow {
            cutoff,
            n: specs[k].n,
            raw_offdiag_hs: odd_hs_norm(&u)?,
            dressed_offdiag_hs: odd_hs_norm(&dressed)?,
            pair_probability: pair_creation_probability(&u)?,
            unitarity_defect: u.unitarity_defect()?,
            wall_time: start.elapsed().as_secs_f64(),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let raw: Vec<f64> = rows.iter().map(|r| r.raw_offdiag_hs).collect();
    let dressed: Vec<f64> = rows.iter().map(|r| r.dressed_offdiag_hs).collect();
    Ok(ScanResult {
        threshold: scan.threshold,
        raw: classify(&raw, scan.threshold),
        dressed: classify(&dressed, scan.threshold),
        rows,
    })
}
