//! Decreasing-lambda path with heredity-driven candidate expansion.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::basis::{build_atoms, design_columns, BasisAtom, BasisConfig};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::heredity::{eligible_children, heredity_closure, EffectResolution, GroupStructure, LatticeBounds};
use crate::solver::{
    collapse, BcdSolver, DuplicatedCoefficients, FitState, Group, Problem, SolverOptions,
};
use crate::sparse::SparseColumns;

/// Path schedule, stopping rules and the basis it expands over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathConfig {
    pub basis: BasisConfig,
    /// Geometric decrease factor of lambda.
    pub rho: f64,
    /// The path stops below `lambda_min_ratio * lambda_max`.
    pub lambda_min_ratio: f64,
    /// Stop once this many collapsed coefficients are nonzero.
    pub max_terms: Option<usize>,
    /// Stop when RSS improves by less than this fraction over `rss_window`
    /// steps.
    pub rss_tol: f64,
    pub rss_window: usize,
    pub solver: SolverOptions,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            basis: BasisConfig::default(),
            rho: 0.96,
            lambda_min_ratio: 1e-4,
            max_terms: None,
            rss_tol: 1e-4,
            rss_window: 10,
            solver: SolverOptions::default(),
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::ParameterRange(format!("rho = {} must lie in (0, 1)", self.rho)));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::ParameterRange(format!(
                "lambda_min_ratio = {} must lie in (0, 1)",
                self.lambda_min_ratio
            )));
        }
        if self.rss_window == 0 || !(self.rss_tol >= 0.0) {
            return Err(Error::ParameterRange("rss_window must be >= 1 and rss_tol >= 0".into()));
        }
        if self.max_terms == Some(0) {
            return Err(Error::ParameterRange("max_terms must be >= 1".into()));
        }
        Ok(())
    }
}

/// Why the path ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LambdaMin,
    MaxTerms,
    RssPlateau,
    /// A candidate would have exceeded the per-group atom cap.
    Capacity,
    /// The solver failed to converge; the path keeps the points before it.
    Instability,
    /// A caller-supplied lambda grid was exhausted.
    GridExhausted,
}

/// One fitted point of the path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    pub coefs: DuplicatedCoefficients,
    /// Collapsed coefficients, one per design column known at this point.
    pub beta: Vec<f64>,
    pub intercept: f64,
    /// Heredity closure of the groups with nonzero slots, canonical order.
    pub active: Vec<EffectResolution>,
    /// Number of groups with a nonzero slot vector.
    pub nonzero_groups: usize,
    /// Candidates (a prefix of the dictionary) the fit ran over.
    pub n_candidates: usize,
    pub rss: f64,
    /// Number of nonzero collapsed coefficients.
    pub s: usize,
    pub sweeps: usize,
    pub kkt_residual: f64,
}

/// Candidate groups in insertion order with their atoms and column ranges.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    candidates: Vec<EffectResolution>,
    atoms: Vec<Vec<BasisAtom>>,
    offsets: Vec<usize>,
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[EffectResolution] {
        &self.candidates
    }

    pub fn atoms(&self, i: usize) -> &[BasisAtom] {
        &self.atoms[i]
    }

    /// Design columns owned by candidate `i`.
    pub fn columns(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i] + self.atoms[i].len()
    }

    /// Columns of the first `n_candidates` candidates.
    pub fn n_columns(&self, n_candidates: usize) -> usize {
        if n_candidates == 0 {
            0
        } else {
            self.columns(n_candidates - 1).end
        }
    }

    /// Every atom in column order, for the first `n_candidates` candidates.
    pub fn atom_list(&self, n_candidates: usize) -> Vec<&BasisAtom> {
        self.atoms[..n_candidates].iter().flatten().collect()
    }

    fn push(&mut self, g: EffectResolution, atoms: Vec<BasisAtom>) {
        let offset = self
            .offsets
            .last()
            .zip(self.atoms.last())
            .map_or(0, |(o, a)| o + a.len());
        self.candidates.push(g);
        self.atoms.push(atoms);
        self.offsets.push(offset);
    }
}

/// The fitted path plus everything needed to extend or reuse it.
#[derive(Debug, Clone)]
pub struct RegularizationPath {
    pub config: PathConfig,
    pub n: usize,
    pub d: usize,
    pub lambda_max: f64,
    /// Main effect attaining `lambda_max`, i.e. the first group to enter.
    pub first_entry: Option<EffectResolution>,
    pub points: Vec<PathPoint>,
    pub stop: StopReason,
    /// Human-readable detail for capacity or instability stops.
    pub stop_detail: Option<String>,
    pub dictionary: Dictionary,
    pub groups: Vec<Group>,
    /// Training design for every candidate in the dictionary.
    pub design: SparseColumns,
}

impl RegularizationPath {
    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda).collect()
    }

    pub fn last(&self) -> &PathPoint {
        self.points.last().expect("a path always has at least one point")
    }

    /// Fitted values of every path point at rows already scaled to the unit
    /// box, one vector per point.
    pub fn predict_all(&self, x: &DataMatrix) -> Result<Vec<Vec<f64>>> {
        let atoms: Vec<BasisAtom> = self
            .dictionary
            .atom_list(self.dictionary.len())
            .into_iter()
            .cloned()
            .collect();
        let design = design_columns(&atoms, x)?;
        Ok(self
            .points
            .iter()
            .map(|p| {
                let mut beta = p.beta.clone();
                beta.resize(design.ncols(), 0.0);
                design.mul_vec(&beta).into_iter().map(|f| p.intercept + f).collect()
            })
            .collect())
    }
}

enum Grid<'a> {
    Geometric,
    Fixed(&'a [f64]),
}

/// Fits the path on inputs already scaled to the unit hypercube.
pub fn solve_path(x: &DataMatrix, y: &[f64], config: &PathConfig) -> Result<RegularizationPath> {
    drive(x, y, config, Grid::Geometric)
}

/// Fits the path over a caller-supplied, strictly decreasing lambda grid.
/// Only capacity and instability end it early; the size and RSS rules are
/// not applied.
pub fn solve_path_on_grid(
    x: &DataMatrix,
    y: &[f64],
    config: &PathConfig,
    lambdas: &[f64],
) -> Result<RegularizationPath> {
    if lambdas.is_empty() {
        return Err(Error::Empty("lambda grid"));
    }
    if lambdas.windows(2).any(|w| !(w[1] < w[0])) || lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::ParameterRange("lambda grid must be nonnegative and strictly decreasing".into()));
    }
    drive(x, y, config, Grid::Fixed(lambdas))
}

fn check_inputs(x: &DataMatrix, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
            context: "response length vs input rows",
        });
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::Empty("training inputs"));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("training inputs"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response"));
    }
    let tol = 1e-9;
    if x.as_slice().iter().any(|&v| v < -tol || v > 1.0 + tol) {
        return Err(Error::ParameterRange(
            "training inputs must be rescaled to [0, 1]".into(),
        ));
    }
    Ok(())
}

struct Builder<'a> {
    x: &'a DataMatrix,
    cfg: &'a BasisConfig,
    structure: GroupStructure,
    dictionary: Dictionary,
    groups: Vec<Group>,
    design: SparseColumns,
}

impl Builder<'_> {
    /// Adds candidates in order. Stops at the first capacity violation and
    /// returns it, keeping the candidates added before it.
    fn add(&mut self, new: &[EffectResolution]) -> Result<Option<Error>> {
        for g in new {
            let atoms = match build_atoms(g, self.cfg) {
                Ok(a) => a,
                Err(e @ Error::Capacity { .. }) => return Ok(Some(e)),
                Err(e) => return Err(e),
            };
            let cols = design_columns(&atoms, self.x)?;
            self.design.append(&cols);
            let idx = self.structure.add_candidate(g.clone(), atoms.len());
            self.dictionary.push(g.clone(), atoms);
            let members: Vec<usize> = self
                .structure
                .members(idx)
                .into_iter()
                .flat_map(|c| self.dictionary.columns(c))
                .collect();
            let weight = (self.structure.group_weight(g)? as f64).sqrt();
            self.groups.push(Group { members, weight });
        }
        Ok(None)
    }
}

fn rss_of(design: &SparseColumns, y: &[f64], beta: &[f64], intercept: f64) -> f64 {
    let fitted = design.mul_vec(beta);
    y.iter()
        .zip(&fitted)
        .map(|(y, f)| {
            let r = y - intercept - f;
            r * r
        })
        .sum()
}

fn drive(x: &DataMatrix, y: &[f64], config: &PathConfig, grid: Grid) -> Result<RegularizationPath> {
    config.validate()?;
    check_inputs(x, y)?;
    let (n, d) = (x.nrows(), x.ncols());
    let bounds = LatticeBounds {
        d,
        d_max: config.basis.d_max.min(d),
        r_max: config.basis.r_max,
    };
    let mut b = Builder {
        x,
        cfg: &config.basis,
        structure: GroupStructure::new(),
        dictionary: Dictionary::default(),
        groups: Vec::new(),
        design: SparseColumns::new(n),
    };
    let mains: Vec<EffectResolution> = (0..d as u32).map(|j| EffectResolution::main(j, 1)).collect();
    if let Some(e) = b.add(&mains)? {
        return Err(e);
    }

    let mut solver = BcdSolver::new(config.solver.clone());
    let scores = solver.entry_scores(&Problem::new(&b.design, y, &b.groups)?);
    let lmax = scores.iter().cloned().fold(0.0, f64::max);
    // ties go to the earlier (canonical) candidate
    let first_entry = (lmax > 0.0)
        .then(|| scores.iter().position(|&v| v == lmax))
        .flatten()
        .map(|i| b.dictionary.candidates[i].clone());
    let lambda_floor = config.lambda_min_ratio * lmax;
    let mut state = FitState::zeros(&b.groups);
    let mut points: Vec<PathPoint> = Vec::new();
    let mut stop = None;
    let mut stop_detail = None;
    let mut step = 0usize;

    while stop.is_none() {
        let lambda = match grid {
            Grid::Geometric => {
                let l = lmax * config.rho.powi(step as i32);
                if lmax == 0.0 && step > 0 || l < lambda_floor && lmax > 0.0 {
                    stop = Some(StopReason::LambdaMin);
                    break;
                }
                l
            }
            Grid::Fixed(ls) => match ls.get(step) {
                Some(&l) => l,
                None => {
                    stop = Some(StopReason::GridExhausted);
                    break;
                }
            },
        };
        step += 1;

        let prob = Problem::new(&b.design, y, &b.groups)?;
        let report = match solver.fit(&prob, lambda, &mut state) {
            Ok(r) => r,
            Err(e @ Error::NonConvergence { .. }) if !points.is_empty() => {
                log::warn!("path stopped at lambda = {lambda:.6e}: {e}");
                stop_detail = Some(format!("lambda = {lambda:.6e}: {e}"));
                stop = Some(StopReason::Instability);
                break;
            }
            Err(e) => return Err(e),
        };
        let beta = collapse(&state.coefs, &b.groups, b.design.ncols());
        let rss = rss_of(&b.design, y, &beta, state.intercept);
        let nonzero = state.coefs.nonzero_groups();
        let active: BTreeSet<EffectResolution> =
            heredity_closure(nonzero.iter().map(|&j| &b.dictionary.candidates[j]));
        let s = beta.iter().filter(|v| **v != 0.0).count();
        if nonzero.len() > n {
            log::warn!("{} nonzero groups exceed n = {n}", nonzero.len());
        }
        points.push(PathPoint {
            lambda,
            coefs: state.coefs.clone(),
            beta,
            intercept: state.intercept,
            active: active.iter().cloned().collect(),
            nonzero_groups: nonzero.len(),
            n_candidates: b.dictionary.len(),
            rss,
            s,
            sweeps: report.sweeps,
            kkt_residual: report.kkt_residual,
        });

        if let Grid::Geometric = grid {
            if config.max_terms.is_some_and(|m| s >= m) {
                stop = Some(StopReason::MaxTerms);
                break;
            }
            let w = config.rss_window;
            if !nonzero.is_empty() && points.len() > w {
                let old = points[points.len() - 1 - w].rss;
                if old <= 0.0 || (old - rss) / old < config.rss_tol {
                    stop = Some(StopReason::RssPlateau);
                    break;
                }
            }
        }

        if &active != b.structure.active() {
            let candidates = b.structure.candidate_set();
            let children = eligible_children(&active, &candidates, bounds);
            b.structure.set_active(active);
            if let Some(e) = b.add(&children)? {
                log::warn!("path stopped: {e}");
                stop_detail = Some(e.to_string());
                stop = Some(StopReason::Capacity);
            }
            state.coefs.extend_to(&b.groups);
        }
    }

    Ok(RegularizationPath {
        config: config.clone(),
        n,
        d,
        lambda_max: lmax,
        first_entry,
        points,
        stop: stop.unwrap_or(StopReason::LambdaMin),
        stop_detail,
        dictionary: b.dictionary,
        groups: b.groups,
        design: b.design,
    })
}
