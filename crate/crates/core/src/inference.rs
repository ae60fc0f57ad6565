//! Pointwise confidence intervals from the decorrelated score statistic.
//!
//! The feature vector of a row is the intercept followed by every atom of the
//! model's candidate groups, so the nuisance set matches what the path had
//! admitted at the selected lambda. The reduced systems for `w` are built
//! from the Gram matrix `M = sum phi_i phi_i^T`, or for the ridge with more
//! features than rows from the kernel matrix `Phi Phi^T`; the transformed
//! rows `(Z_i, Q_i)` are never materialized.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::basis::{build_atoms, BasisAtom};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::heredity::EffectResolution;
use crate::model::FittedModel;
use crate::path::{solve_path_on_grid, RegularizationPath};
use crate::selection::fold_assignment;

/// How the nuisance projection `w` is estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WMethod {
    /// Ridge solve; `None` picks `1e-6 * trace / dim`.
    Ridge { eta: Option<f64> },
    /// L1-penalized fit by coordinate descent; `None` picks lambda by
    /// cross-validation when fold statistics are available and
    /// `0.1 * lambda_max` otherwise.
    Lasso { lambda: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiVariant {
    Ridge,
    Lasso,
    /// Ridge intervals with the variance chosen by cross-validated coverage.
    Apley,
}

impl std::str::FromStr for CiVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ridge" | "ridge-w" => Ok(CiVariant::Ridge),
            "lasso" | "lasso-w" => Ok(CiVariant::Lasso),
            "apley" | "apley-corrected" => Ok(CiVariant::Apley),
            _ => Err(Error::ParameterRange(format!(
                "CI variant '{s}' not recognised; use ridge, lasso or apley"
            ))),
        }
    }
}

impl std::fmt::Display for CiVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CiVariant::Ridge => "ridge-w",
            CiVariant::Lasso => "lasso-w",
            CiVariant::Apley => "apley-corrected",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    /// Nominal level `1 - alpha`.
    pub level: f64,
    pub sigma2: f64,
    pub variant: CiVariant,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Index of the largest `|phi*_j|` (first one on ties), or `None` if all are
/// zero.
pub fn choose_pivot(phi_star: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, v) in phi_star.iter().enumerate() {
        if *v != 0.0 && best.is_none_or(|b| v.abs() > phi_star[b].abs()) {
            best = Some(j);
        }
    }
    best
}

/// `(Z, Q)` with `phi = A (Z, Q)` for `A = (phi*, unit vectors without the
/// pivot)`.
pub fn transform_row(phi_star: &[f64], pivot: usize, phi: &[f64]) -> (f64, Vec<f64>) {
    let z = phi[pivot] / phi_star[pivot];
    let q = (0..phi.len())
        .filter(|&k| k != pivot)
        .map(|k| phi[k] - z * phi_star[k])
        .collect();
    (z, q)
}

/// Gram matrices of held-out rows for choosing the lasso penalty.
#[derive(Debug, Clone)]
pub struct FoldStats {
    grams: Vec<DMatrix<f64>>,
    sizes: Vec<usize>,
}

/// Training features, coefficients and their sufficient statistics.
#[derive(Debug, Clone)]
pub struct Features {
    atoms: Vec<BasisAtom>,
    /// Intercept first, then one coefficient per atom.
    beta: Vec<f64>,
    phi: DMatrix<f64>,
    y: DVector<f64>,
    gram: OnceLock<DMatrix<f64>>,
    kernel: OnceLock<DMatrix<f64>>,
    n: usize,
}

impl Features {
    /// `x` must already be scaled to the unit box.
    pub fn new(atoms: Vec<BasisAtom>, intercept: f64, coefs: &[f64], x: &DataMatrix, y: &[f64]) -> Result<Self> {
        if coefs.len() != atoms.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                found: coefs.len(),
                context: "coefficients vs atoms",
            });
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
                context: "response length vs input rows",
            });
        }
        let n = x.nrows();
        if n < 2 {
            return Err(Error::Empty("inference needs at least two training rows"));
        }
        let p = atoms.len() + 1;
        let mut phi = DMatrix::zeros(n, p);
        phi.column_mut(0).fill(1.0);
        let cols: Vec<Vec<f64>> = atoms
            .par_iter()
            .map(|a| x.rows().map(|r| a.design_value(r)).collect())
            .collect();
        for (k, c) in cols.into_iter().enumerate() {
            phi.column_mut(k + 1).copy_from_slice(&c);
        }
        let mut beta = Vec::with_capacity(p);
        beta.push(intercept);
        beta.extend_from_slice(coefs);
        Ok(Self {
            atoms,
            beta,
            phi,
            y: DVector::from_column_slice(y),
            gram: OnceLock::new(),
            kernel: OnceLock::new(),
            n,
        })
    }

    /// Rebuilds the candidate atoms of `model` and evaluates them on the
    /// scaled training inputs.
    pub fn from_model(model: &FittedModel, x: &DataMatrix, y: &[f64]) -> Result<Self> {
        let mut atoms = Vec::new();
        let mut position: HashMap<(EffectResolution, usize), usize> = HashMap::new();
        for g in model.candidates() {
            for (k, a) in build_atoms(g, model.basis())?.into_iter().enumerate() {
                position.insert((g.clone(), k), atoms.len());
                atoms.push(a);
            }
        }
        let mut coefs = vec![0.0; atoms.len()];
        for t in model.terms() {
            let &col = position.get(&(t.group.clone(), t.atom_index)).ok_or_else(|| {
                Error::Schema(format!("term {} #{} is not in the candidate set", t.group, t.atom_index))
            })?;
            coefs[col] = t.coef;
        }
        Self::new(atoms, model.intercept(), &coefs, x, y)
    }

    /// Features of point `index` of a path fitted on `x`, `y`.
    pub fn from_path_point(path: &RegularizationPath, index: usize, x: &DataMatrix, y: &[f64]) -> Result<Self> {
        let point = &path.points[index];
        let atoms: Vec<BasisAtom> = path
            .dictionary
            .atom_list(point.n_candidates)
            .into_iter()
            .cloned()
            .collect();
        Self::new(atoms, point.intercept, &point.beta, x, y)
    }

    /// Feature dimension including the intercept.
    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    fn gram(&self) -> &DMatrix<f64> {
        self.gram.get_or_init(|| self.phi.tr_mul(&self.phi))
    }

    fn kernel(&self) -> &DMatrix<f64> {
        self.kernel.get_or_init(|| &self.phi * self.phi.transpose())
    }

    /// Intercept indicator followed by every atom evaluated at a scaled row.
    pub fn evaluate(&self, z: &[f64]) -> Vec<f64> {
        std::iter::once(1.0)
            .chain(self.atoms.iter().map(|a| a.design_value(z)))
            .collect()
    }

    /// Held-out Gram matrices for the given fold labels.
    pub fn fold_stats(&self, folds: &[usize], k: usize) -> FoldStats {
        let grams = (0..k)
            .into_par_iter()
            .map(|f| {
                let rows: Vec<usize> = (0..self.n).filter(|&i| folds[i] == f).collect();
                let sub = self.phi.select_rows(&rows);
                sub.tr_mul(&sub)
            })
            .collect();
        let sizes = (0..k).map(|f| folds.iter().filter(|&&v| v == f).count()).collect();
        FoldStats { grams, sizes }
    }

    /// Score statistics at a prediction point with features `phi_star`.
    pub fn context(&self, phi_star: &[f64], method: WMethod, folds: Option<&FoldStats>) -> Result<ScoreContext> {
        if phi_star.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: phi_star.len(),
                context: "prediction features",
            });
        }
        let j = choose_pivot(phi_star).ok_or(Error::DegeneratePoint)?;
        let pj = phi_star[j];
        let others: Vec<usize> = (0..self.dim()).filter(|&k| k != j).collect();
        let a: Vec<f64> = others.iter().map(|&k| phi_star[k] / pj).collect();

        let w = match method {
            WMethod::Ridge { eta } if others.len() > self.n => self.ridge_dual(phi_star, j, &a, eta)?,
            WMethod::Ridge { eta } => {
                let (g, c) = reduce(self.gram(), j, pj, &others, &a);
                ridge(&g, &c, eta)?
            }
            WMethod::Lasso { lambda } => {
                let (g, c) = reduce(self.gram(), j, pj, &others, &a);
                let l = match (lambda, folds) {
                    (Some(l), _) => l,
                    (None, Some(fs)) => {
                        let lmax = lasso_lambda_max(&g, &c, self.n);
                        self.lasso_cv(fs, j, pj, &others, &a, lmax)?
                    }
                    (None, None) => 0.1 * lasso_lambda_max(&g, &c, self.n),
                };
                lasso(&g, &c, self.n, l, None)?
            }
        };

        // g = e_j / phi*_j - T^T w and h = T^T beta_{-j}
        let lift = |v: &[f64]| -> DVector<f64> {
            let mut out = DVector::zeros(self.dim());
            let mut at_pivot = 0.0;
            for ((&k, &vk), &ak) in others.iter().zip(v).zip(&a) {
                out[k] = vk;
                at_pivot -= ak * vk;
            }
            out[j] = at_pivot;
            out
        };
        let mut gvec = -lift(&w);
        gvec[j] += 1.0 / pj;
        let beta_rest: Vec<f64> = others.iter().map(|&k| self.beta[k]).collect();
        let h = lift(&beta_rest);
        // g'M e_j and g'm - h'M g through Phi g
        let fg = &self.phi * &gvec;
        let nf = self.n as f64;
        let info = self.phi.column(j).dot(&fg) / pj / nf;
        let score = -fg.dot(&(&self.y - &self.phi * &h)) / nf;
        Ok(ScoreContext {
            pivot: j,
            w,
            score,
            info,
            n: self.n,
            sigma2: 1.0,
        })
    }

    fn lasso_cv(
        &self,
        fs: &FoldStats,
        j: usize,
        pj: f64,
        others: &[usize],
        a: &[f64],
        lmax: f64,
    ) -> Result<f64> {
        if !(lmax > 0.0) {
            return Ok(0.0);
        }
        let grid: Vec<f64> = (0..10).map(|t| lmax * 10f64.powf(-4.0 * t as f64 / 9.0)).collect();
        let mut loss = vec![0.0; grid.len()];
        for (m_f, &size) in fs.grams.iter().zip(&fs.sizes) {
            let train = self.gram() - m_f;
            let (g, c) = reduce(&train, j, pj, others, a);
            let mut w = vec![0.0; others.len()];
            for (t, &l) in grid.iter().enumerate() {
                w = lasso(&g, &c, self.n - size, l, Some(w))?;
                let mut gv = DVector::zeros(self.dim());
                let mut at_pivot = 1.0 / pj;
                for ((&k, &wk), &ak) in others.iter().zip(&w).zip(a) {
                    gv[k] = -wk;
                    at_pivot += ak * wk;
                }
                gv[j] = at_pivot;
                loss[t] += gv.dot(&(m_f * &gv));
            }
        }
        let mut best = 0;
        for t in 1..grid.len() {
            if loss[t] < loss[best] {
                best = t;
            }
        }
        Ok(grid[best])
    }
}

impl Features {
    /// Ridge `w` through the `n x n` system
    /// `w = Q^T (Q Q^T + eta I)^-1 Phi_j / phi*_j` with
    /// `Q = Phi_{-j} - Phi_j a^T`, equal to the reduced-Gram solve.
    fn ridge_dual(&self, phi_star: &[f64], j: usize, a: &[f64], eta: Option<f64>) -> Result<Vec<f64>> {
        let n = self.n;
        let q = a.len();
        let pj = phi_star[j];
        let phij = self.phi.column(j).into_owned();
        let mut at = DVector::from_iterator(phi_star.len(), phi_star.iter().map(|v| v / pj));
        at[j] = 0.0;
        let u = &self.phi * &at;
        let asq = at.norm_squared();
        let mut qq = self.kernel().clone();
        qq.ger(asq - 1.0, &phij, &phij, 1.0);
        qq.ger(-1.0, &u, &phij, 1.0);
        qq.ger(-1.0, &phij, &u, 1.0);
        let eta = match eta {
            Some(e) if e > 0.0 => e,
            Some(e) => return Err(Error::ParameterRange(format!("ridge eta must be positive, got {e}"))),
            None => {
                let tr = qq.trace();
                if !(tr > 0.0) {
                    return Ok(vec![0.0; q]);
                }
                1e-6 * tr / q as f64
            }
        };
        for i in 0..n {
            qq[(i, i)] += eta;
        }
        let chol = Cholesky::new(qq).ok_or(Error::Linalg("ridge system is not positive definite"))?;
        let alpha = chol.solve(&(phij / pj));
        let full = self.phi.tr_mul(&alpha);
        Ok((0..phi_star.len())
            .filter(|&k| k != j)
            .zip(a)
            .map(|(k, ak)| full[k] - ak * full[j])
            .collect())
    }
}

/// `T M T^T` and `T M e_j / phi*_j` with `T phi = phi_{-j} - a phi_j`.
fn reduce(m: &DMatrix<f64>, j: usize, pj: f64, others: &[usize], a: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let q = others.len();
    let mjj = m[(j, j)];
    let mut g = DMatrix::zeros(q, q);
    for (l, (&ol, &al)) in others.iter().zip(a).enumerate() {
        let mjl = m[(j, ol)];
        for (k, (&ok, &ak)) in others.iter().zip(a).enumerate().skip(l) {
            let v = m[(ok, ol)] - ak * mjl - al * m[(ok, j)] + ak * al * mjj;
            g[(k, l)] = v;
            g[(l, k)] = v;
        }
    }
    let c = DVector::from_iterator(q, others.iter().zip(a).map(|(&k, &ak)| (m[(k, j)] - ak * mjj) / pj));
    (g, c)
}

fn ridge(g: &DMatrix<f64>, c: &DVector<f64>, eta: Option<f64>) -> Result<Vec<f64>> {
    let q = c.len();
    if q == 0 {
        return Ok(Vec::new());
    }
    let eta = match eta {
        Some(e) if e > 0.0 => e,
        Some(e) => return Err(Error::ParameterRange(format!("ridge eta must be positive, got {e}"))),
        None => {
            let tr = g.trace();
            if !(tr > 0.0) {
                return Ok(vec![0.0; q]);
            }
            1e-6 * tr / q as f64
        }
    };
    let mut a = g.clone();
    for i in 0..q {
        a[(i, i)] += eta;
    }
    let chol = Cholesky::new(a).ok_or(Error::Linalg("ridge system is not positive definite"))?;
    Ok(chol.solve(c).iter().copied().collect())
}

/// Smallest penalty with an all-zero lasso solution.
fn lasso_lambda_max(g: &DMatrix<f64>, c: &DVector<f64>, n: usize) -> f64 {
    let n2 = (n as f64).powi(2);
    (g * c).iter().fold(0.0, |m: f64, v| m.max(2.0 * v.abs() / n2))
}

/// Minimizes `|(c - G w)/n|^2 + lambda |w|_1` by cyclic coordinate descent.
fn lasso(g: &DMatrix<f64>, c: &DVector<f64>, n: usize, lambda: f64, warm: Option<Vec<f64>>) -> Result<Vec<f64>> {
    if lambda < 0.0 {
        return Err(Error::ParameterRange(format!("lasso penalty must be >= 0, got {lambda}")));
    }
    let q = c.len();
    if q == 0 {
        return Ok(Vec::new());
    }
    let n2 = (n as f64).powi(2);
    let h = (g * g) / n2;
    let lin = (g * c) / n2;
    let mut w = warm.unwrap_or_else(|| vec![0.0; q]);
    let mut hw: DVector<f64> = &h * DVector::from_column_slice(&w);
    // stationarity is measured against the gradient scale at w = 0
    let scale = 2.0 * lin.amax();
    let tol = 1e-6 * scale;
    const MAX_SWEEPS: usize = 5_000;
    let mut violation = f64::INFINITY;
    for sweep in 0..MAX_SWEEPS {
        for k in 0..q {
            let hkk = h[(k, k)];
            if hkk <= 0.0 {
                continue;
            }
            let rho = lin[k] - (hw[k] - hkk * w[k]);
            let new = soft(rho, lambda / 2.0) / hkk;
            let step = new - w[k];
            if step != 0.0 {
                hw.axpy(step, &h.column(k), 1.0);
                w[k] = new;
            }
        }
        violation = (0..q)
            .map(|k| {
                let grad = 2.0 * (lin[k] - hw[k]);
                if w[k] != 0.0 {
                    (grad - lambda * w[k].signum()).abs()
                } else {
                    (grad.abs() - lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max);
        if violation <= tol {
            log::trace!("lasso w converged after {} sweeps", sweep + 1);
            return Ok(w);
        }
    }
    // H is the square of a Gram matrix, so nearly flat directions can keep
    // the coordinates creeping long after the objective has settled
    if violation <= 1e-3 * scale {
        log::debug!("lasso w stopped at {MAX_SWEEPS} sweeps with stationarity gap {violation:.3e}");
        return Ok(w);
    }
    Err(Error::NonConvergence {
        sweeps: MAX_SWEEPS,
        residual: violation,
        tolerance: tol,
    })
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Decorrelated score and information at one prediction point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreContext {
    pub pivot: usize,
    pub w: Vec<f64>,
    /// `S(0, eta_{-1})` for unit variance.
    pub score: f64,
    /// `b` for unit variance.
    pub info: f64,
    pub n: usize,
    pub sigma2: f64,
}

impl ScoreContext {
    pub fn with_sigma2(mut self, sigma2: f64) -> Self {
        self.sigma2 = sigma2;
        self
    }

    /// Score-implied point estimate `-S / b`, independent of the variance.
    pub fn center(&self) -> Result<f64> {
        if !(self.info > 0.0) {
            return Err(Error::IllConditionedInformation(self.info));
        }
        Ok(-self.score / self.info)
    }

    /// Half-width of the `1 - alpha` interval for unit variance.
    pub fn unit_half_width(&self, alpha: f64) -> Result<f64> {
        if !(self.info > 0.0) {
            return Err(Error::IllConditionedInformation(self.info));
        }
        Ok(z_quantile(alpha)? / (self.n as f64 * self.info).sqrt())
    }

    /// `[c_{alpha/2} / b, c_{1-alpha/2} / b]` with
    /// `c_q = -S + sqrt(b/n) Phi^{-1}(q)`.
    pub fn interval_at(&self, alpha: f64, variant: CiVariant) -> Result<Interval> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::ParameterRange(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        let b = self.info / self.sigma2;
        if !(b > 0.0) {
            return Err(Error::IllConditionedInformation(b));
        }
        let s = self.score / self.sigma2;
        let root = (b / self.n as f64).sqrt();
        let lo = (-s + root * -z_quantile(alpha)?) / b;
        let hi = (-s + root * z_quantile(alpha)?) / b;
        Ok(Interval {
            lower: lo,
            upper: hi,
            level: 1.0 - alpha,
            sigma2: self.sigma2,
            variant,
        })
    }
}

/// `Phi^{-1}(1 - alpha/2)`.
fn z_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::ParameterRange(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(1.0 - alpha / 2.0))
}

/// Interval score: width plus `2/alpha` times the miss distance.
pub fn interval_score(lower: f64, upper: f64, x: f64, alpha: f64) -> f64 {
    let mut s = upper - lower;
    if x < lower {
        s += 2.0 / alpha * (lower - x);
    }
    if x > upper {
        s += 2.0 / alpha * (x - upper);
    }
    s
}

/// Outcome of the coverage-matching variance search.
#[derive(Debug, Clone, PartialEq)]
pub struct ApleyOutcome {
    pub sigma2: f64,
    /// Cross-validated coverage at `sigma2`.
    pub coverage: f64,
    /// Every candidate variance gave the same coverage.
    pub flat: bool,
}

/// Chooses the variance whose K-fold coverage is closest to `1 - alpha`.
///
/// Held-out point `i` is covered exactly when `sigma >= t_i`, where `t_i` is
/// its absolute error over the unit-variance half-width, so coverage is a
/// step function of `sigma` and the search is an exact scan over the sorted
/// `t_i`. Ties go to the smaller variance.
pub fn apley_sigma2(
    model: &FittedModel,
    x: &DataMatrix,
    y: &[f64],
    alpha: f64,
    k: usize,
    seed: u64,
) -> Result<ApleyOutcome> {
    z_quantile(alpha)?;
    let (z, _) = model.scaling().apply(x)?;
    let n = y.len();
    if z.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: z.nrows(),
            found: n,
            context: "response length vs input rows",
        });
    }
    let folds = fold_assignment(n, k, seed)?;
    let per_fold: Vec<Vec<(usize, f64)>> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<Vec<(usize, f64)>> {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| folds[i] == f);
            let x_tr = z.select_rows(&train);
            let y_tr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let path = solve_path_on_grid(&x_tr, &y_tr, model.config(), model.lambda_grid())?;
            let feats = Features::from_path_point(&path, path.points.len() - 1, &x_tr, &y_tr)?;
            Ok(test
                .iter()
                .map(|&i| {
                    let t = feats
                        .context(&feats.evaluate(z.row(i)), WMethod::Ridge { eta: None }, None)
                        .and_then(|ctx| Ok((y[i] - ctx.center()?).abs() / ctx.unit_half_width(alpha)?))
                        .unwrap_or(f64::INFINITY);
                    (i, t)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut t: Vec<f64> = per_fold.into_iter().flatten().map(|(_, t)| t).collect();
    t.sort_by(|a, b| a.total_cmp(b));
    let target = 1.0 - alpha;
    let nf = n as f64;
    let mut best: Option<(f64, f64, f64)> = None; // (objective, sigma, coverage)
    let mut objectives = Vec::new();
    for (idx, &ti) in t.iter().enumerate() {
        if !(ti > 0.0 && ti.is_finite()) || t.get(idx + 1) == Some(&ti) {
            continue;
        }
        let cov = (idx + 1) as f64 / nf;
        let obj = (cov - target).abs();
        objectives.push(obj);
        if best.is_none_or(|b| obj < b.0) {
            best = Some((obj, ti, cov));
        }
    }
    let flat = objectives.windows(2).all(|w| w[0] == w[1]);
    match best {
        Some((_, sigma, coverage)) => Ok(ApleyOutcome {
            sigma2: sigma * sigma,
            coverage,
            flat,
        }),
        None => Ok(ApleyOutcome {
            sigma2: variance_floor(y),
            coverage: t.iter().filter(|v| **v == 0.0).count() as f64 / nf,
            flat: true,
        }),
    }
}

/// `1e-8 * Var(y)`, the smallest variance used for intervals.
pub fn variance_floor(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (1e-8 * var).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiOptions {
    pub alpha: f64,
    pub variant: CiVariant,
    /// Folds for the lasso penalty search and the coverage search.
    pub folds: usize,
    pub seed: u64,
    /// Overrides the model's stored variance.
    pub sigma2: Option<f64>,
}

impl Default for CiOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            variant: CiVariant::Ridge,
            folds: 10,
            seed: 0,
            sigma2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiRow {
    pub prediction: f64,
    pub interval: Option<Interval>,
    /// Why no interval could be formed.
    pub issue: Option<String>,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiReport {
    pub rows: Vec<CiRow>,
    pub sigma2: f64,
    /// Where the variance came from.
    pub sigma2_source: &'static str,
    /// The variance was raised to the deterministic floor.
    pub floored: bool,
    pub apley: Option<ApleyOutcome>,
}

/// Intervals at every row of `x_test` (original units) for a model fitted
/// on `x_train`, `y`.
pub fn confidence_intervals(
    model: &FittedModel,
    x_train: &DataMatrix,
    y: &[f64],
    x_test: &DataMatrix,
    opts: &CiOptions,
) -> Result<CiReport> {
    z_quantile(opts.alpha)?;
    let (z_train, _) = model.scaling().apply(x_train)?;
    let features = Features::from_model(model, &z_train, y)?;
    let folds = opts.folds.min(y.len());

    let mut apley = None;
    let (raw, source) = if let Some(s) = opts.sigma2 {
        (s, "user")
    } else if opts.variant == CiVariant::Apley {
        let out = apley_sigma2(model, x_train, y, opts.alpha, folds, opts.seed)?;
        let s = out.sigma2;
        apley = Some(out);
        (s, "coverage-matched")
    } else if let Some(s) = model.sigma2() {
        (s, "model")
    } else if model.n() > model.s() {
        (model.rss() / (model.n() - model.s()) as f64, "residual")
    } else {
        (0.0, "floor")
    };
    let floor = variance_floor(y);
    let floored = !(raw >= floor);
    let sigma2 = if floored { floor } else { raw };
    if floored {
        log::warn!("variance estimate {raw:.3e} raised to the floor {floor:.3e}; intervals are conservative only in name");
    }

    let method = match opts.variant {
        CiVariant::Lasso => WMethod::Lasso { lambda: None },
        _ => WMethod::Ridge { eta: None },
    };
    let fold_stats = (opts.variant == CiVariant::Lasso && folds >= 2)
        .then(|| fold_assignment(y.len(), folds, opts.seed).map(|f| features.fold_stats(&f, folds)))
        .transpose()?;
    let prediction = model.predict(x_test)?;
    let (z_test, _) = model.scaling().apply(x_test)?;
    let rows = (0..z_test.nrows())
        .into_par_iter()
        .map(|i| {
            let phi = features.evaluate(z_test.row(i));
            let result = features
                .context(&phi, method, fold_stats.as_ref())
                .and_then(|ctx| ctx.with_sigma2(sigma2).interval_at(opts.alpha, opts.variant));
            let (interval, issue) = match result {
                Ok(iv) => (Some(iv), None),
                Err(e) => (None, Some(e.to_string())),
            };
            CiRow {
                prediction: prediction.values[i],
                interval,
                issue,
                extrapolated: prediction.extrapolated[i],
            }
        })
        .collect();
    Ok(CiReport {
        rows,
        sigma2,
        sigma2_source: source,
        floored,
        apley,
    })
}
