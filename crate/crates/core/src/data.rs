//! Row-major input matrices and the affine map onto the unit hypercube.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `n x d` matrix of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DataMatrix {
    pub fn new(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::DimensionMismatch {
                expected: nrows * ncols,
                found: data.len(),
                context: "matrix buffer length",
            });
        }
        Ok(Self { nrows, ncols, data })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for row in rows {
            if row.len() != ncols {
                return Err(Error::DimensionMismatch {
                    expected: ncols,
                    found: row.len(),
                    context: "row length",
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            nrows: rows.len(),
            ncols,
            data,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        let width = self.ncols.max(1);
        self.data
            .chunks_exact(width)
            .take(if self.ncols == 0 { 0 } else { self.nrows })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// New matrix holding the listed rows, in the listed order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.ncols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            nrows: idx.len(),
            ncols: self.ncols,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Per-column affine map `x -> (x - min) / (max - min)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaling {
    /// Declared ranges, one `(lo, hi)` pair per input.
    pub fn from_ranges(ranges: &[(f64, f64)]) -> Self {
        Self {
            min: ranges.iter().map(|r| r.0).collect(),
            max: ranges.iter().map(|r| r.1).collect(),
        }
    }

    /// Column-wise min/max of the training inputs.
    pub fn fit(x: &DataMatrix) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::Empty("training inputs"));
        }
        let d = x.ncols();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for row in x.rows() {
            for j in 0..d {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        if min.iter().chain(&max).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training inputs"));
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn unit_hypercube(d: usize) -> Self {
        Self {
            min: vec![0.0; d],
            max: vec![1.0; d],
        }
    }

    #[inline]
    fn scale_value(&self, j: usize, v: f64) -> f64 {
        let span = self.max[j] - self.min[j];
        // a constant column carries no information; park it at the origin
        if span > 0.0 {
            (v - self.min[j]) / span
        } else {
            0.0
        }
    }

    /// Rescales every row. The second value reports whether any scaled entry
    /// left `[0, 1]` (extrapolation) for each row.
    pub fn apply(&self, x: &DataMatrix) -> Result<(DataMatrix, Vec<bool>)> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.ncols(),
                context: "input columns",
            });
        }
        let mut out = x.clone();
        let mut outside = vec![false; x.nrows()];
        for (i, flag) in outside.iter_mut().enumerate() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = self.scale_value(j, *v);
                if !(-1e-12..=1.0 + 1e-12).contains(v) {
                    *flag = true;
                }
            }
        }
        Ok((out, outside))
    }
}
