//! Basis atoms of one (effect set, level) pair and their design columns.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::heredity::EffectResolution;
use crate::kernel::{Schedule, WendlandKernel};
use crate::sparse::SparseColumns;

/// Design entries below this are stored as structural zeros.
pub const STRUCTURAL_ZERO: f64 = 1e-12;

/// Kernel, schedule and size limits shared by every atom of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub kernel_k: u32,
    pub schedule: Schedule,
    pub d_max: usize,
    pub r_max: u32,
    /// Maximum `n_u(r)` for a single pair.
    pub atom_cap: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            kernel_k: 2,
            schedule: Schedule::default(),
            d_max: 10,
            r_max: 10,
            atom_cap: 100_000,
        }
    }
}

impl BasisConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.d_max == 0 || self.r_max == 0 {
            return Err(Error::ParameterRange(format!(
                "d_max and r_max must be >= 1 (got {}, {})",
                self.d_max, self.r_max
            )));
        }
        WendlandKernel::new(1, self.kernel_k)?;
        Ok(())
    }

    /// `n_u(r) = g(r)^|u|`, saturating.
    pub fn atom_count(&self, g: &EffectResolution) -> usize {
        let per_dim = self.schedule.center_count(g.level());
        (0..g.order()).fold(1usize, |acc, _| acc.saturating_mul(per_dim))
    }
}

/// One basis function `phi_u^{rk}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisAtom {
    pub owner: EffectResolution,
    /// Coordinates in the order of `owner.effects()`.
    pub center: Vec<f64>,
    pub bandwidth: f64,
    pub kernel: Arc<WendlandKernel>,
}

impl BasisAtom {
    /// Evaluates at a full input row (all `d` coordinates, scaled to `[0,1]`).
    #[inline]
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for (&j, &c) in self.owner.effects().iter().zip(&self.center) {
            let z = (x[j as usize] - c) / self.bandwidth;
            r2 += z * z;
            if r2 >= 1.0 {
                return 0.0;
            }
        }
        self.kernel.profile(r2.sqrt())
    }

    /// Evaluation with the design-matrix zero threshold applied.
    #[inline]
    pub fn design_value(&self, x: &[f64]) -> f64 {
        let v = self.evaluate(x);
        if v < STRUCTURAL_ZERO {
            0.0
        } else {
            v
        }
    }
}

/// Full factorial grid of the level-`r` centers over the coordinates of `u`,
/// lexicographic in center coordinates, bandwidth `h(r) * sqrt(|u|)`.
pub fn build_atoms(g: &EffectResolution, cfg: &BasisConfig) -> Result<Vec<BasisAtom>> {
    let m = g.order();
    if m > cfg.d_max {
        return Err(Error::ParameterRange(format!(
            "{g} has order {m} > d_max = {}",
            cfg.d_max
        )));
    }
    let level = cfg.schedule.level(g.level(), cfg.r_max)?;
    let n_atoms = cfg.atom_count(g);
    if n_atoms > cfg.atom_cap {
        return Err(Error::Capacity {
            group: g.clone(),
            n_atoms,
            cap: cfg.atom_cap,
        });
    }
    let kernel = Arc::new(WendlandKernel::new(m, cfg.kernel_k)?);
    let bandwidth = level.bandwidth * (m as f64).sqrt();
    let g1 = level.centers.len();
    let mut atoms = Vec::with_capacity(n_atoms);
    let mut digits = vec![0usize; m];
    for _ in 0..n_atoms {
        atoms.push(BasisAtom {
            owner: g.clone(),
            center: digits.iter().map(|&i| level.centers[i]).collect(),
            bandwidth,
            kernel: Arc::clone(&kernel),
        });
        // odometer with the last coordinate fastest
        for pos in (0..m).rev() {
            digits[pos] += 1;
            if digits[pos] < g1 {
                break;
            }
            digits[pos] = 0;
        }
    }
    Ok(atoms)
}

/// Evaluates each atom at every row of `x`; column order follows `atoms`.
pub fn design_columns(atoms: &[BasisAtom], x: &DataMatrix) -> Result<SparseColumns> {
    let d = x.ncols();
    for a in atoms {
        if let Some(&j) = a.owner.effects().last() {
            if j as usize >= d {
                return Err(Error::DimensionMismatch {
                    expected: j as usize + 1,
                    found: d,
                    context: "input columns for basis atom",
                });
            }
        }
    }
    let n = x.nrows();
    let columns: Vec<Vec<(u32, f64)>> = atoms
        .par_iter()
        .map(|a| {
            x.rows()
                .enumerate()
                .filter_map(|(i, row)| {
                    let v = a.design_value(row);
                    (v != 0.0).then_some((i as u32, v))
                })
                .collect()
        })
        .collect();
    let mut out = SparseColumns::new(n);
    for c in columns {
        out.push_column(c);
    }
    Ok(out)
}
