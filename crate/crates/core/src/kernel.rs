//! Compactly supported Wendland kernels and the resolution-level schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest smoothness parameter accepted by [`WendlandKernel::new`].
pub const MAX_SMOOTHNESS: u32 = 4;
/// Largest effect dimension accepted by [`WendlandKernel::new`].
pub const MAX_KERNEL_DIM: usize = 64;

/// Radial profile `phi_{l,k}` with `l = floor(m/2) + k + 1`, normalized to 1
/// at the origin and zero for radius >= 1.
///
/// The polynomial is stored in the variable `s = 1 - t`, where the integral
/// recursion reads `p_{j+1}(s) = int_0^s (1 - v) p_j(v) dv` starting from
/// `p_0(s) = s^l`. Evaluating in `s` keeps the high-order zero at `t = 1`
/// free of cancellation.
#[derive(Debug, Clone, PartialEq)]
pub struct WendlandKernel {
    smoothness: u32,
    dim: usize,
    coeffs: Vec<f64>,
}

impl WendlandKernel {
    pub fn new(dim: usize, smoothness: u32) -> Result<Self> {
        if smoothness > MAX_SMOOTHNESS {
            return Err(Error::ParameterRange(format!(
                "Wendland smoothness k = {smoothness} (supported: 0..={MAX_SMOOTHNESS})"
            )));
        }
        if dim == 0 || dim > MAX_KERNEL_DIM {
            return Err(Error::ParameterRange(format!(
                "Wendland dimension m = {dim} (supported: 1..={MAX_KERNEL_DIM})"
            )));
        }
        let l = dim / 2 + smoothness as usize + 1;
        let mut coeffs = vec![0.0; l + 1];
        coeffs[l] = 1.0;
        for _ in 0..smoothness {
            // (1 - v) p(v)
            let mut prod = vec![0.0; coeffs.len() + 1];
            for (i, &c) in coeffs.iter().enumerate() {
                prod[i] += c;
                prod[i + 1] -= c;
            }
            // antiderivative vanishing at 0
            let mut integ = vec![0.0; prod.len() + 1];
            for (i, &c) in prod.iter().enumerate() {
                integ[i + 1] = c / (i + 1) as f64;
            }
            coeffs = integ;
        }
        let at_origin = coeffs.iter().rev().fold(0.0, |acc, &c| acc + c);
        for c in &mut coeffs {
            *c /= at_origin;
        }
        Ok(Self {
            smoothness,
            dim,
            coeffs,
        })
    }

    pub fn smoothness(&self) -> u32 {
        self.smoothness
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Exponent of the truncated power the recursion starts from.
    pub fn exponent(&self) -> usize {
        self.dim / 2 + self.smoothness as usize + 1
    }

    #[inline]
    pub fn profile(&self, radius: f64) -> f64 {
        if !(radius < 1.0) {
            return 0.0;
        }
        let s = 1.0 - radius.max(0.0);
        let v = self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c);
        v.clamp(0.0, 1.0)
    }
}

/// Normalized Wendland profile at `radius` for effect dimension `m` and
/// smoothness `k`.
pub fn wendland_profile(radius: f64, m: usize, k: u32) -> Result<f64> {
    if !(radius >= 0.0) {
        return Err(Error::ParameterRange(format!("radius {radius} must be >= 0")));
    }
    Ok(WendlandKernel::new(m, k)?.profile(radius))
}

/// Center counts `g0 * growth^(r-1)` and bandwidths `h0 * decay^(r-1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub g0: usize,
    pub growth: f64,
    pub h0: f64,
    pub decay: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            g0: 5,
            growth: 2.0,
            h0: 0.75,
            decay: 2.0 / 3.0,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.g0 < 2 || !(self.growth >= 1.0) || !(self.h0 > 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::ParameterRange(format!(
                "schedule requires g0 >= 2, growth >= 1, h0 > 0, 0 < decay <= 1 (got {self:?})"
            )));
        }
        Ok(())
    }

    pub fn center_count(&self, r: u32) -> usize {
        (self.g0 as f64 * self.growth.powi(r as i32 - 1)).round() as usize
    }

    pub fn bandwidth(&self, r: u32) -> f64 {
        self.h0 * self.decay.powi(r as i32 - 1)
    }

    /// One-dimensional level `r`, for `1 <= r <= r_max`.
    pub fn level(&self, r: u32, r_max: u32) -> Result<ResolutionLevel> {
        if r == 0 || r > r_max {
            return Err(Error::ParameterRange(format!(
                "resolution level {r} outside 1..={r_max}"
            )));
        }
        let g = self.center_count(r);
        let centers = (0..g).map(|i| i as f64 / (g - 1) as f64).collect();
        Ok(ResolutionLevel {
            level: r,
            centers,
            bandwidth: self.bandwidth(r),
        })
    }
}

/// Evenly spaced one-dimensional centers on `[0, 1]` and their bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionLevel {
    pub level: u32,
    pub centers: Vec<f64>,
    pub bandwidth: f64,
}

/// Level `r` of the default schedule.
pub fn level_schedule(r: u32, r_max: u32) -> Result<ResolutionLevel> {
    Schedule::default().level(r, r_max)
}
