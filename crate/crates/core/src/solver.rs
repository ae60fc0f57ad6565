//! Overlapping group lasso through duplicated coefficients.
//!
//! Every group `j` owns one slot per member coefficient. The fitted
//! coefficient of column `k` is the sum of its slots over all groups that
//! contain it, and the objective is
//!
//! ```text
//! (1/2n) ||y - b0 - Phi beta||^2 + lambda * sum_j w_j ||slots_j||_2
//! ```
//!
//! which is an ordinary (non-overlapping) group lasso in the slots. It is
//! minimized by block coordinate descent with exact block minimization: each
//! block solves `min 1/2 b'Gb - c'b + tau ||b||` through the eigensystem of
//! its Gram matrix and a scalar secular equation.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseColumns;

/// One penalty group: member column indices and the multiplier of lambda.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub members: Vec<usize>,
    pub weight: f64,
}

/// Design, response and groups of one problem instance.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    design: &'a SparseColumns,
    y: &'a [f64],
    groups: &'a [Group],
}

impl<'a> Problem<'a> {
    pub fn new(design: &'a SparseColumns, y: &'a [f64], groups: &'a [Group]) -> Result<Self> {
        if design.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                found: design.nrows(),
                context: "design rows vs response length",
            });
        }
        if y.is_empty() {
            return Err(Error::Empty("response"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response"));
        }
        for g in groups {
            if let Some(&k) = g.members.iter().find(|&&k| k >= design.ncols()) {
                return Err(Error::DimensionMismatch {
                    expected: design.ncols(),
                    found: k + 1,
                    context: "group member index vs design columns",
                });
            }
            if !(g.weight > 0.0 && g.weight.is_finite()) {
                return Err(Error::ParameterRange(format!("group weight {}", g.weight)));
            }
        }
        Ok(Self { design, y, groups })
    }

    pub fn design(&self) -> &SparseColumns {
        self.design
    }

    pub fn response(&self) -> &[f64] {
        self.y
    }

    pub fn groups(&self) -> &[Group] {
        self.groups
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn mean_y(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.n() as f64
    }
}

/// Slot vectors, one per group, aligned with `Group::members`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DuplicatedCoefficients {
    pub slots: Vec<Vec<f64>>,
}

impl DuplicatedCoefficients {
    pub fn zeros(groups: &[Group]) -> Self {
        Self {
            slots: groups.iter().map(|g| vec![0.0; g.members.len()]).collect(),
        }
    }

    /// Zero-fills slots for groups appended since this value was built.
    pub fn extend_to(&mut self, groups: &[Group]) {
        for g in &groups[self.slots.len()..] {
            self.slots.push(vec![0.0; g.members.len()]);
        }
    }

    pub fn group_norm(&self, j: usize) -> f64 {
        norm(&self.slots[j])
    }

    /// Indices of groups with a nonzero slot vector.
    pub fn nonzero_groups(&self) -> Vec<usize> {
        (0..self.slots.len())
            .filter(|&j| self.slots[j].iter().any(|&v| v != 0.0))
            .collect()
    }
}

/// Sums the replicate slots of every coefficient into a vector of length `p`.
pub fn collapse(coefs: &DuplicatedCoefficients, groups: &[Group], p: usize) -> Vec<f64> {
    let mut beta = vec![0.0; p];
    for (g, slots) in groups.iter().zip(&coefs.slots) {
        for (&k, &v) in g.members.iter().zip(slots) {
            beta[k] += v;
        }
    }
    beta
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Norm each group's penalty is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyNorm {
    /// Euclidean norm of the slot vector.
    Coefficient,
    /// Empirical norm `||Phi_j slots_j||_2 / sqrt(n)` of the group's fitted
    /// component; equivalent to orthonormalizing each block.
    #[default]
    Fitted,
}

pub const DEFAULT_FITTED_RIDGE: f64 = 1e-4;

fn default_fitted_ridge() -> f64 {
    DEFAULT_FITTED_RIDGE
}

/// Tolerances and limits for [`BcdSolver::fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// KKT tolerance, relative to `||y||_2 / sqrt(n)`.
    pub kkt_tol: f64,
    /// Relative objective change that ends a pass over the active groups.
    pub inner_tol: f64,
    pub max_sweeps: usize,
    pub fit_intercept: bool,
    /// Eigenvalues below `eig_floor * max eigenvalue` are treated as zero.
    pub eig_floor: f64,
    /// Blocks with more working columns than this take majorized
    /// proximal-gradient steps instead of exact minimization. Only used with
    /// [`PenaltyNorm::Coefficient`]; fitted-norm blocks are always exact.
    pub exact_block_max: usize,
    pub penalty: PenaltyNorm,
    /// Ridge added to each block Gram inside the fitted norm, relative to the
    /// block's mean Gram eigenvalue. Keeps directions the data barely see
    /// from going effectively unpenalized.
    #[serde(default = "default_fitted_ridge")]
    pub fitted_ridge: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-4,
            inner_tol: 1e-7,
            max_sweeps: 10_000,
            fit_intercept: true,
            eig_floor: 1e-12,
            exact_block_max: 600,
            penalty: PenaltyNorm::default(),
            fitted_ridge: DEFAULT_FITTED_RIDGE,
        }
    }
}

/// Coefficients plus the unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitState {
    pub coefs: DuplicatedCoefficients,
    pub intercept: f64,
}

impl FitState {
    pub fn zeros(groups: &[Group]) -> Self {
        Self {
            coefs: DuplicatedCoefficients::zeros(groups),
            intercept: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub sweeps: usize,
    pub kkt_residual: f64,
    pub kkt_tolerance: f64,
    pub objective: f64,
    /// Objective after every sweep, starting with the warm start.
    pub objective_trace: Vec<f64>,
}

/// Residual `y - b0 - Phi beta` for the collapsed coefficients of `state`.
pub fn residual(prob: &Problem, state: &FitState) -> Vec<f64> {
    let beta = collapse(&state.coefs, prob.groups, prob.design.ncols());
    let fitted = prob.design.mul_vec(&beta);
    prob.y
        .iter()
        .zip(&fitted)
        .map(|(y, f)| y - state.intercept - f)
        .collect()
}

pub fn objective(prob: &Problem, state: &FitState, lambda: f64, opts: &SolverOptions) -> f64 {
    let r = residual(prob, state);
    objective_from_residual(prob, &state.coefs, &r, lambda, opts)
}

/// Absolute ridge of the fitted norm for the given working columns.
fn block_ridge(prob: &Problem, cols: &[usize], opts: &SolverOptions) -> f64 {
    if opts.fitted_ridge == 0.0 || cols.is_empty() {
        return 0.0;
    }
    let trace: f64 = cols
        .iter()
        .map(|&k| prob.design.column(k).1.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / prob.n() as f64;
    opts.fitted_ridge * trace / cols.len() as f64
}

/// Penalty norm of group `j` (without its weight).
fn group_penalty(prob: &Problem, j: usize, coefs: &DuplicatedCoefficients, opts: &SolverOptions) -> f64 {
    let slots = &coefs.slots[j];
    match opts.penalty {
        PenaltyNorm::Coefficient => norm(slots),
        PenaltyNorm::Fitted => {
            if slots.iter().all(|&v| v == 0.0) {
                return 0.0;
            }
            let mut u = vec![0.0; prob.n()];
            for (&k, &v) in prob.groups[j].members.iter().zip(slots) {
                if v != 0.0 {
                    prob.design.axpy(k, v, &mut u);
                }
            }
            let fit2 = u.iter().map(|v| v * v).sum::<f64>() / prob.n() as f64;
            let cols: Vec<usize> = prob.groups[j]
                .members
                .iter()
                .copied()
                .filter(|&k| !prob.design.column_is_empty(k))
                .collect();
            let kappa = block_ridge(prob, &cols, opts);
            (fit2 + kappa * slots.iter().map(|v| v * v).sum::<f64>()).sqrt()
        }
    }
}

fn objective_from_residual(
    prob: &Problem,
    coefs: &DuplicatedCoefficients,
    r: &[f64],
    lambda: f64,
    opts: &SolverOptions,
) -> f64 {
    let loss = r.iter().map(|v| v * v).sum::<f64>() / (2.0 * prob.n() as f64);
    let pen: f64 = prob
        .groups
        .iter()
        .enumerate()
        .map(|(j, g)| g.weight * group_penalty(prob, j, coefs, opts))
        .sum();
    loss + lambda * pen
}

fn group_gradient(prob: &Problem, g: &Group, r: &[f64], out: &mut Vec<f64>) {
    let inv_n = 1.0 / prob.n() as f64;
    out.clear();
    out.extend(g.members.iter().map(|&k| prob.design.dot(k, r) * inv_n));
}

/// Smallest lambda at which all slots are zero at the optimum. For the
/// coefficient norm this is `max_j ||Phi_j' (y - mean y)|| / (n w_j)`.
pub fn lambda_max(prob: &Problem, opts: &SolverOptions) -> Result<f64> {
    BcdSolver::new(opts.clone()).lambda_max(prob)
}

/// Largest violation of the optimality conditions.
pub fn kkt_residual(prob: &Problem, state: &FitState, lambda: f64, opts: &SolverOptions) -> f64 {
    let r = residual(prob, state);
    BcdSolver::new(opts.clone()).kkt(prob, &state.coefs, &r, lambda)
}

/// `sqrt(a' (G + ridge I)^-1 a)` restricted to the numerical range of `G`.
fn whitened_norm(eigvecs: &DMatrix<f64>, eigvals: &[f64], ridge: f64, a: &DVector<f64>) -> f64 {
    let at = eigvecs.tr_mul(a);
    eigvals
        .iter()
        .zip(at.iter())
        .filter(|(l, _)| **l > 0.0)
        .map(|(l, v)| v * v / (l + ridge))
        .sum::<f64>()
        .sqrt()
}

/// Per-block data that does not depend on lambda or the residual.
#[derive(Debug, Clone)]
struct BlockCache {
    /// Positions within `Group::members` whose column has entries.
    working: Arc<Vec<usize>>,
    kind: Arc<BlockKind>,
}

impl BlockCache {
    fn clone_shallow(&self) -> Self {
        Self {
            working: Arc::clone(&self.working),
            kind: Arc::clone(&self.kind),
        }
    }
}

/// `(1/n) Phi'Phi` for one block, stored either directly or as the scaled
/// rows `B` with `G = B'B`, whichever is smaller.
#[derive(Debug, Clone)]
enum BlockGram {
    Full(DMatrix<f64>),
    Rows(DMatrix<f64>),
}

impl BlockGram {
    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            BlockGram::Full(g) => g * v,
            BlockGram::Rows(b) => b.tr_mul(&(b * v)),
        }
    }
}

#[derive(Debug, Clone)]
enum BlockKind {
    /// Block Gram and its eigenpairs with positive eigenvalue; eigenvectors
    /// are the columns of `eigvecs`.
    Exact {
        gram: BlockGram,
        eigvecs: DMatrix<f64>,
        eigvals: Vec<f64>,
        /// Absolute fitted-norm ridge; zero for the coefficient norm.
        ridge: f64,
    },
    /// Upper bound on the largest Gram eigenvalue.
    Majorized { lipschitz: f64 },
}

impl BlockCache {
    fn build(prob: &Problem, g: &Group, opts: &SolverOptions) -> Self {
        let design = prob.design;
        let working: Vec<usize> = (0..g.members.len())
            .filter(|&i| !design.column_is_empty(g.members[i]))
            .collect();
        if working.len() < g.members.len() {
            log::debug!(
                "{} all-zero design column(s) excluded from a group block",
                g.members.len() - working.len()
            );
        }
        let cols: Vec<usize> = working.iter().map(|&w| g.members[w]).collect();
        let kind = if opts.penalty == PenaltyNorm::Fitted || cols.len() <= opts.exact_block_max {
            let ridge = if opts.penalty == PenaltyNorm::Fitted {
                block_ridge(prob, &cols, opts)
            } else {
                0.0
            };
            exact_kind(prob, &cols, opts.eig_floor, ridge)
        } else {
            BlockKind::Majorized {
                lipschitz: lipschitz_bound(prob, &cols),
            }
        };
        Self {
            working: Arc::new(working),
            kind: Arc::new(kind),
        }
    }
}

fn exact_kind(prob: &Problem, block: &[usize], eig_floor: f64, ridge: f64) -> BlockKind {
    let design = prob.design;
    let m = block.len();
    let n = prob.n();
    let inv_n = 1.0 / n as f64;
    // row-compressed copy of the block
    let mut counts = vec![0usize; n + 1];
    for &k in block {
        for &i in design.column(k).0 {
            counts[i as usize + 1] += 1;
        }
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let mut fill = counts.clone();
    let total = counts[n];
    let mut cols = vec![0usize; total];
    let mut vals = vec![0.0; total];
    for (local, &k) in block.iter().enumerate() {
        let (rows, v) = design.column(k);
        for (&i, &x) in rows.iter().zip(v) {
            let slot = &mut fill[i as usize];
            cols[*slot] = local;
            vals[*slot] = x;
            *slot += 1;
        }
    }
    let touched: Vec<usize> = (0..n).filter(|&i| counts[i + 1] > counts[i]).collect();

    if touched.len() < m {
        // wide block: thin SVD of the scaled rows, rank <= touched rows
        let scale = inv_n.sqrt();
        let mut b = DMatrix::<f64>::zeros(touched.len(), m);
        for (r, &i) in touched.iter().enumerate() {
            for p in counts[i]..counts[i + 1] {
                b[(r, cols[p])] = vals[p] * scale;
            }
        }
        let svd = b.clone().svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors were requested");
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let floor = eig_floor * smax * smax;
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&k| svd.singular_values[k].powi(2) > floor)
            .collect();
        let eigvecs = DMatrix::from_fn(m, keep.len(), |a, k| v_t[(keep[k], a)]);
        let eigvals = keep.iter().map(|&k| svd.singular_values[k].powi(2)).collect();
        return BlockKind::Exact {
            gram: BlockGram::Rows(b),
            eigvecs,
            eigvals,
            ridge,
        };
    }

    let mut gram = DMatrix::<f64>::zeros(m, m);
    for i in 0..n {
        let (a, b) = (counts[i], counts[i + 1]);
        for p in a..b {
            let (cp, vp) = (cols[p], vals[p]);
            for q in p..b {
                gram[(cp, cols[q])] += vp * vals[q];
            }
        }
    }
    for a in 0..m {
        for b in a..m {
            // entries were accumulated into whichever triangle the column
            // order of each row put them
            let v = (gram[(a, b)] + if a == b { 0.0 } else { gram[(b, a)] }) * inv_n;
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let eig = SymmetricEigen::new(gram.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let floor = eig_floor * lmax;
    let keep: Vec<usize> = (0..m).filter(|&k| eig.eigenvalues[k] > floor).collect();
    let eigvecs = DMatrix::from_fn(m, keep.len(), |a, k| eig.eigenvectors[(a, keep[k])]);
    let eigvals = keep.iter().map(|&k| eig.eigenvalues[k]).collect();
    BlockKind::Exact {
        gram: BlockGram::Full(gram),
        eigvecs,
        eigvals,
        ridge,
    }
}

/// Power-iteration estimate of the largest eigenvalue of `(1/n) Phi'Phi`,
/// inflated and capped by the trace.
fn lipschitz_bound(prob: &Problem, block: &[usize]) -> f64 {
    let design = prob.design;
    let inv_n = 1.0 / prob.n() as f64;
    let trace: f64 = block
        .iter()
        .map(|&k| design.column(k).1.iter().map(|v| v * v).sum::<f64>() * inv_n)
        .sum();
    let mut v = vec![1.0 / (block.len() as f64).sqrt(); block.len()];
    let mut est = 0.0;
    let mut u = vec![0.0; prob.n()];
    for _ in 0..50 {
        u.iter_mut().for_each(|x| *x = 0.0);
        for (&k, &vk) in block.iter().zip(&v) {
            design.axpy(k, vk, &mut u);
        }
        let w: Vec<f64> = block.iter().map(|&k| design.dot(k, &u) * inv_n).collect();
        let wn = norm(&w);
        if wn == 0.0 {
            break;
        }
        est = w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        v = w.into_iter().map(|x| x / wn).collect();
    }
    (1.1 * est).min(trace).max(f64::MIN_POSITIVE)
}

/// Solves `min 1/2 b'Gb - c'b + tau ||b||_2` given `G = V diag(lam) V'`.
fn block_minimizer(
    eigvecs: &DMatrix<f64>,
    eigvals: &[f64],
    c: &DVector<f64>,
    tau: f64,
) -> DVector<f64> {
    let m = c.len();
    if norm(c.as_slice()) <= tau {
        return DVector::zeros(m);
    }
    let mut ct = eigvecs.tr_mul(c);
    // drop components along the numerical null space
    for (i, &l) in eigvals.iter().enumerate() {
        if l == 0.0 {
            ct[i] = 0.0;
        }
    }
    let cnorm = norm(ct.as_slice());
    if cnorm <= tau {
        return DVector::zeros(m);
    }
    let lam = eigvals;
    let r = ct.len();
    let active: Vec<usize> = (0..r).filter(|&i| ct[i] != 0.0).collect();
    let lmax = active.iter().map(|&i| lam[i]).fold(0.0, f64::max);
    let lmin = active.iter().map(|&i| lam[i]).fold(f64::INFINITY, f64::min);
    // mu * ||b(mu)|| = tau, with b(mu) = (G + mu I)^-1 c; the left side
    // increases from 0 to ||c|| and is bracketed by the extreme eigenvalues
    let q = |mu: f64| -> (f64, f64) {
        let mut t2 = 0.0;
        let mut t3 = 0.0;
        for &i in &active {
            let den = lam[i] + mu;
            let c2 = ct[i] * ct[i];
            t2 += c2 / (den * den);
            t3 += c2 / (den * den * den);
        }
        let t = t2.sqrt();
        (mu * t - tau, t - mu * t3 / t)
    };
    let gap = cnorm - tau;
    let mut lo = lmin * tau / cnorm.max(gap) * 0.5;
    let mut hi = lmax * tau / gap * 1.000001 + f64::MIN_POSITIVE;
    if lo <= 0.0 {
        lo = 0.0;
    }
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, df) = q(mu);
        if f > 0.0 {
            hi = mu;
        } else {
            lo = mu;
        }
        let mut next = mu - f / df;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - mu).abs() <= 1e-15 * mu.abs().max(f64::MIN_POSITIVE) || hi - lo <= 1e-15 * hi {
            mu = next;
            break;
        }
        mu = next;
    }
    let scaled = DVector::from_iterator(r, (0..r).map(|i| if ct[i] == 0.0 { 0.0 } else { ct[i] / (lam[i] + mu) }));
    eigvecs * scaled
}

/// Solves `min 1/2 b'Gb - c'b + tau sqrt(b'(G + ridge I)b)`. With a zero
/// ridge this is a block soft-threshold in whitened coordinates,
/// minimum-norm on the null space of `G`.
fn fitted_block_minimizer(
    eigvecs: &DMatrix<f64>,
    eigvals: &[f64],
    ridge: f64,
    c: &DVector<f64>,
    tau: f64,
) -> DVector<f64> {
    let m = c.len();
    let mut ct = eigvecs.tr_mul(c);
    // the loss is flat along the null space, so a gradient component there
    // is rounding noise
    for (v, &l) in ct.iter_mut().zip(eigvals) {
        if l == 0.0 {
            *v = 0.0;
        }
    }
    let r = ct.len();
    let w: Vec<f64> = eigvals.iter().map(|l| l + ridge).collect();
    let wn = whitened_norm(&DMatrix::identity(r, r), eigvals, ridge, &ct);
    if wn <= tau {
        return DVector::zeros(m);
    }
    if ridge == 0.0 {
        let shrink = 1.0 - tau / wn;
        let scaled = DVector::from_iterator(
            r,
            eigvals
                .iter()
                .zip(ct.iter())
                .map(|(&l, &v)| if l > 0.0 { shrink * v / l } else { 0.0 }),
        );
        return eigvecs * scaled;
    }
    // b_i = c_i / (l_i + mu w_i) where mu ||b||_W = tau; the left side rises
    // from 0 to ||c||_{W^-1} and reaches tau before mu = tau / (wn - tau)
    let q = |mu: f64| -> (f64, f64) {
        let mut t = 0.0;
        let mut t3 = 0.0;
        for i in (0..r).filter(|&i| ct[i] != 0.0) {
            let den = eigvals[i] + mu * w[i];
            let qi = ct[i] * ct[i] * w[i];
            t += qi / (den * den);
            t3 += qi * w[i] / (den * den * den);
        }
        let st = t.sqrt();
        (mu * st - tau, st - mu * t3 / st)
    };
    let mut lo = 0.0;
    let mut hi = tau / (wn - tau) * 1.000001;
    let mut mu = 0.5 * hi;
    for _ in 0..200 {
        let (f, df) = q(mu);
        if f > 0.0 {
            hi = mu;
        } else {
            lo = mu;
        }
        let mut next = mu - f / df;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - mu).abs() <= 1e-15 * mu || hi - lo <= 1e-15 * hi {
            mu = next;
            break;
        }
        mu = next;
    }
    let scaled = DVector::from_iterator(r, (0..r).map(|i| if ct[i] == 0.0 { 0.0 } else { ct[i] / (eigvals[i] + mu * w[i]) }));
    eigvecs * scaled
}

/// Block coordinate descent with cached block eigensystems.
///
/// Caches are keyed by group index, so a solver may be reused across calls
/// as long as groups are only ever appended and columns never change.
#[derive(Debug, Default)]
pub struct BcdSolver {
    opts: SolverOptions,
    caches: Vec<Option<BlockCache>>,
    /// Penalty norm of every group at the current iterate of `fit`.
    pens: Vec<f64>,
}

impl BcdSolver {
    pub fn new(opts: SolverOptions) -> Self {
        Self {
            opts,
            caches: Vec::new(),
            pens: Vec::new(),
        }
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    fn cache(&mut self, prob: &Problem, j: usize) -> &BlockCache {
        if self.caches.len() < prob.groups.len() {
            self.caches.resize_with(prob.groups.len(), || None);
        }
        let opts = &self.opts;
        self.caches[j].get_or_insert_with(|| BlockCache::build(prob, &prob.groups[j], opts))
    }

    /// Minimization over block `j`. Returns true if the block changed.
    fn update_block(
        &mut self,
        prob: &Problem,
        j: usize,
        lambda: f64,
        coefs: &mut DuplicatedCoefficients,
        r: &mut [f64],
        grad: &mut Vec<f64>,
    ) -> bool {
        let g = &prob.groups[j];
        let tau = lambda * g.weight;
        let was_zero = coefs.slots[j].iter().all(|&v| v == 0.0);
        if was_zero && self.opts.penalty == PenaltyNorm::Coefficient {
            group_gradient(prob, g, r, grad);
            if norm(grad) <= tau {
                return false;
            }
        }
        let inv_n = 1.0 / prob.n() as f64;
        let cache = self.cache(prob, j).clone_shallow();
        let m = cache.working.len();
        let gradient = |r: &[f64]| {
            DVector::from_iterator(
                m,
                cache
                    .working
                    .iter()
                    .map(|&w| prob.design.dot(g.members[w], r) * inv_n),
            )
        };
        let old = DVector::from_iterator(m, cache.working.iter().map(|&w| coefs.slots[j][w]));
        let (new, new_pen) = match &*cache.kind {
            BlockKind::Exact {
                gram,
                eigvecs,
                eigvals,
                ridge,
            } => {
                let a = gradient(r);
                let g_old = gram.apply(&old);
                let c = &a + &g_old;
                let (new, pen_old, pen_new) = match self.opts.penalty {
                    PenaltyNorm::Coefficient => {
                        let new = block_minimizer(eigvecs, eigvals, &c, tau);
                        let (po, pn) = (old.norm(), new.norm());
                        (new, po, pn)
                    }
                    PenaltyNorm::Fitted => {
                        let new = fitted_block_minimizer(eigvecs, eigvals, *ridge, &c, tau);
                        let po = (old.dot(&g_old) + ridge * old.norm_squared()).max(0.0).sqrt();
                        let pn = (new.dot(&gram.apply(&new)) + ridge * new.norm_squared()).max(0.0).sqrt();
                        (new, po, pn)
                    }
                };
                let delta = &new - &old;
                // the block model must not increase; guards against rounding
                // in the block solve
                let change =
                    0.5 * delta.dot(&gram.apply(&delta)) - a.dot(&delta) + tau * (pen_new - pen_old);
                if change > 0.0 {
                    return false;
                }
                (new, pen_new)
            }
            BlockKind::Majorized { lipschitz } => {
                let mut lip = *lipschitz;
                let a = gradient(r);
                let loss0 = r.iter().map(|v| v * v).sum::<f64>() * 0.5 * inv_n;
                let pen0 = tau * old.norm();
                let mut trial = r.to_vec();
                loop {
                    let v = &old + &a / lip;
                    let vn = v.norm();
                    let new = if vn * lip <= tau {
                        DVector::zeros(m)
                    } else {
                        v * (1.0 - tau / (lip * vn))
                    };
                    trial.copy_from_slice(r);
                    for (local, &w) in cache.working.iter().enumerate() {
                        let d = new[local] - old[local];
                        if d != 0.0 {
                            prob.design.axpy(g.members[w], -d, &mut trial);
                        }
                    }
                    let loss = trial.iter().map(|v| v * v).sum::<f64>() * 0.5 * inv_n;
                    let pen = new.norm();
                    if loss + tau * pen <= loss0 + pen0 {
                        break (new, pen);
                    }
                    // the eigenvalue estimate was too small
                    lip *= 2.0;
                    if !lip.is_finite() {
                        return false;
                    }
                    self.set_lipschitz(j, lip);
                }
            }
        };
        let delta = &new - &old;
        if delta.iter().all(|&v| v == 0.0) {
            return false;
        }
        self.pens[j] = new_pen;
        for (local, &w) in cache.working.iter().enumerate() {
            let d = delta[local];
            if d != 0.0 {
                prob.design.axpy(g.members[w], -d, r);
                coefs.slots[j][w] = new[local];
            }
        }
        true
    }

    fn set_lipschitz(&mut self, j: usize, value: f64) {
        if let Some(Some(BlockCache { kind, .. })) = self.caches.get_mut(j) {
            if let BlockKind::Majorized { lipschitz } = Arc::make_mut(kind) {
                *lipschitz = value;
            }
        }
    }

    /// Dual norm of the group gradient `a` (restricted to working columns for
    /// the fitted norm).
    fn dual_norm(&mut self, prob: &Problem, j: usize, a: &[f64]) -> f64 {
        match self.opts.penalty {
            PenaltyNorm::Coefficient => norm(a),
            PenaltyNorm::Fitted => {
                let cache = self.cache(prob, j);
                match &*cache.kind {
                    BlockKind::Exact {
                        eigvecs,
                        eigvals,
                        ridge,
                        ..
                    } => {
                        let aw = DVector::from_iterator(
                            cache.working.len(),
                            cache.working.iter().map(|&w| a[w]),
                        );
                        whitened_norm(eigvecs, eigvals, *ridge, &aw)
                    }
                    BlockKind::Majorized { .. } => unreachable!("fitted-norm blocks are exact"),
                }
            }
        }
    }

    /// Per-group `dual norm of the gradient at zero / weight`, with only the
    /// intercept fitted. A group's score is the lambda below which it would
    /// leave zero if it were the only group.
    pub fn entry_scores(&mut self, prob: &Problem) -> Vec<f64> {
        let ybar = prob.mean_y();
        let yc: Vec<f64> = prob.y.iter().map(|v| v - ybar).collect();
        let mut grad = Vec::new();
        (0..prob.groups.len())
            .map(|j| {
                let g = &prob.groups[j];
                group_gradient(prob, g, &yc, &mut grad);
                self.dual_norm(prob, j, &grad) / g.weight
            })
            .collect()
    }

    /// Smallest lambda at which every slot is zero at the optimum.
    pub fn lambda_max(&mut self, prob: &Problem) -> Result<f64> {
        if prob.groups.is_empty() {
            return Err(Error::Empty("candidate groups"));
        }
        Ok(self.entry_scores(prob).into_iter().fold(0.0, f64::max))
    }

    /// Largest violation of the optimality conditions given the residual.
    fn kkt(&mut self, prob: &Problem, coefs: &DuplicatedCoefficients, r: &[f64], lambda: f64) -> f64 {
        let mut worst: f64 = 0.0;
        if self.opts.fit_intercept {
            worst = (r.iter().sum::<f64>() / prob.n() as f64).abs();
        }
        let mut grad = Vec::new();
        for (j, g) in prob.groups.iter().enumerate() {
            group_gradient(prob, g, r, &mut grad);
            let tau = lambda * g.weight;
            let slots = &coefs.slots[j];
            let nonzero = slots.iter().any(|&v| v != 0.0);
            let v = match (self.opts.penalty, nonzero) {
                (_, false) => (self.dual_norm(prob, j, &grad) - tau).max(0.0),
                (PenaltyNorm::Coefficient, true) => {
                    let bn = norm(slots);
                    grad.iter()
                        .zip(slots)
                        .map(|(a, b)| (a - tau * b / bn).abs())
                        .fold(0.0, f64::max)
                }
                (PenaltyNorm::Fitted, true) => {
                    let cache = self.cache(prob, j);
                    let BlockKind::Exact { gram, ridge, .. } = &*cache.kind else {
                        unreachable!("fitted-norm blocks are exact")
                    };
                    let b = DVector::from_iterator(cache.working.len(), cache.working.iter().map(|&w| slots[w]));
                    let gb = gram.apply(&b) + &b * *ridge;
                    let fn_norm = b.dot(&gb).max(0.0).sqrt();
                    if fn_norm == 0.0 {
                        // slots lie in the null space of the block
                        (self.dual_norm(prob, j, &grad) - tau).max(0.0)
                    } else {
                        cache
                            .working
                            .iter()
                            .enumerate()
                            .map(|(l, &w)| (grad[w] - tau * gb[l] / fn_norm).abs())
                            .fold(0.0, f64::max)
                    }
                }
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Objective from the residual and the tracked group penalties.
    fn objective(&self, prob: &Problem, r: &[f64], lambda: f64) -> f64 {
        let loss = r.iter().map(|v| v * v).sum::<f64>() / (2.0 * prob.n() as f64);
        let pen: f64 = prob.groups.iter().zip(&self.pens).map(|(g, p)| g.weight * p).sum();
        loss + lambda * pen
    }

    fn update_intercept(&self, state: &mut FitState, r: &mut [f64]) {
        if !self.opts.fit_intercept {
            return;
        }
        let shift = r.iter().sum::<f64>() / r.len() as f64;
        if shift != 0.0 {
            state.intercept += shift;
            for v in r.iter_mut() {
                *v -= shift;
            }
        }
    }

    /// Minimizes the objective at `lambda`, starting from `state`.
    pub fn fit(&mut self, prob: &Problem, lambda: f64, state: &mut FitState) -> Result<FitReport> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::ParameterRange(format!("lambda = {lambda}")));
        }
        state.coefs.extend_to(prob.groups);
        let n = prob.n();
        let y_scale = (prob.y.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        let tol = self.opts.kkt_tol * y_scale.max(f64::MIN_POSITIVE);
        let mut r = residual(prob, state);
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design or warm start"));
        }
        self.update_intercept(state, &mut r);
        let mut grad = Vec::new();
        self.pens = (0..prob.groups.len())
            .map(|j| group_penalty(prob, j, &state.coefs, &self.opts))
            .collect();
        let mut trace = vec![self.objective(prob, &r, lambda)];
        let mut sweeps = 0;
        let all: Vec<usize> = (0..prob.groups.len()).collect();
        loop {
            let mut moved = false;
            for &j in &all {
                moved |= self.update_block(prob, j, lambda, &mut state.coefs, &mut r, &mut grad);
            }
            self.update_intercept(state, &mut r);
            sweeps += 1;
            trace.push(self.objective(prob, &r, lambda));

            loop {
                let active = state.coefs.nonzero_groups();
                if active.is_empty() || sweeps >= self.opts.max_sweeps {
                    break;
                }
                let before = *trace.last().unwrap();
                for &j in &active {
                    self.update_block(prob, j, lambda, &mut state.coefs, &mut r, &mut grad);
                }
                self.update_intercept(state, &mut r);
                sweeps += 1;
                let after = self.objective(prob, &r, lambda);
                trace.push(after);
                if before - after <= self.opts.inner_tol * after.abs() {
                    break;
                }
            }

            let kkt = self.kkt(prob, &state.coefs, &r, lambda);
            let obj = *trace.last().unwrap();
            if kkt <= tol {
                return Ok(FitReport {
                    sweeps,
                    kkt_residual: kkt,
                    kkt_tolerance: tol,
                    objective: obj,
                    objective_trace: trace,
                });
            }
            // a full pass that moves nothing cannot make further progress
            if sweeps >= self.opts.max_sweeps || !moved {
                return Err(Error::NonConvergence {
                    sweeps,
                    residual: kkt,
                    tolerance: tol,
                });
            }
        }
    }
}
