//! A selected path point frozen into a predictive model, plus its JSON file
//! format.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisAtom, BasisConfig};
use crate::data::{DataMatrix, Scaling};
use crate::error::{Error, Result};
use crate::heredity::EffectResolution;
use crate::kernel::{Schedule, WendlandKernel};
use crate::path::{PathConfig, RegularizationPath};
use crate::solver::SolverOptions;

/// Version written by [`FittedModel::save`]; [`FittedModel::load`] accepts
/// only this one.
pub const SCHEMA_VERSION: u64 = 1;

/// One atom with a nonzero collapsed coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub group: EffectResolution,
    /// Position of the atom within its group's lexicographic center grid.
    pub atom_index: usize,
    pub center: Vec<f64>,
    pub bandwidth: f64,
    pub coef: f64,
}

/// Output of [`FittedModel::predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub values: Vec<f64>,
    /// Rows with at least one scaled coordinate outside `[0, 1]`.
    pub extrapolated: Vec<bool>,
}

/// Immutable emulator built from one point of a regularization path.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    input_names: Vec<String>,
    scaling: Scaling,
    config: PathConfig,
    intercept: f64,
    terms: Vec<Term>,
    candidates: Vec<EffectResolution>,
    lambda_grid: Vec<f64>,
    rss: f64,
    n: usize,
    s: usize,
    sigma2: Option<f64>,
    criterion: String,
    perfect_fit: bool,
}

impl FittedModel {
    /// Freezes point `index` of `path`. `lambda_grid` keeps the path's
    /// lambdas up to and including the chosen one so fold refits can
    /// retrace it.
    pub fn from_path(
        path: &RegularizationPath,
        index: usize,
        scaling: Scaling,
        input_names: Vec<String>,
        criterion: &str,
    ) -> Result<Self> {
        let point = path.points.get(index).ok_or_else(|| {
            Error::ParameterRange(format!(
                "path point {index} does not exist (path has {})",
                path.points.len()
            ))
        })?;
        if scaling.dim() != path.d || input_names.len() != path.d {
            return Err(Error::DimensionMismatch {
                expected: path.d,
                found: if scaling.dim() != path.d { scaling.dim() } else { input_names.len() },
                context: "model inputs vs path",
            });
        }
        let mut terms = Vec::new();
        for c in 0..point.n_candidates {
            let cols = path.dictionary.columns(c);
            for (k, (atom, col)) in path.dictionary.atoms(c).iter().zip(cols).enumerate() {
                let coef = point.beta[col];
                if coef != 0.0 {
                    terms.push(Term {
                        group: atom.owner.clone(),
                        atom_index: k,
                        center: atom.center.clone(),
                        bandwidth: atom.bandwidth,
                        coef,
                    });
                }
            }
        }
        Ok(Self {
            input_names,
            scaling,
            config: path.config.clone(),
            intercept: point.intercept,
            terms,
            candidates: path.dictionary.candidates()[..point.n_candidates].to_vec(),
            lambda_grid: path.points[..=index].iter().map(|p| p.lambda).collect(),
            rss: point.rss,
            n: path.n,
            s: point.s,
            sigma2: None,
            criterion: criterion.to_string(),
            perfect_fit: point.rss == 0.0,
        })
    }

    pub fn with_sigma2(mut self, sigma2: Option<f64>) -> Self {
        self.sigma2 = sigma2;
        self
    }

    pub fn d(&self) -> usize {
        self.scaling.dim()
    }
    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }
    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }
    /// Path settings the model was fitted with.
    pub fn config(&self) -> &PathConfig {
        &self.config
    }
    pub fn basis(&self) -> &BasisConfig {
        &self.config.basis
    }
    pub fn intercept(&self) -> f64 {
        self.intercept
    }
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }
    /// Candidate groups the selected fit ran over, in dictionary order.
    pub fn candidates(&self) -> &[EffectResolution] {
        &self.candidates
    }
    pub fn lambda_grid(&self) -> &[f64] {
        &self.lambda_grid
    }
    pub fn lambda(&self) -> f64 {
        *self.lambda_grid.last().expect("grid is never empty")
    }
    pub fn rss(&self) -> f64 {
        self.rss
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn s(&self) -> usize {
        self.s
    }
    pub fn sigma2(&self) -> Option<f64> {
        self.sigma2
    }
    pub fn criterion(&self) -> &str {
        &self.criterion
    }
    pub fn perfect_fit(&self) -> bool {
        self.perfect_fit
    }

    /// Effect sets with at least one nonzero term, deduplicated and sorted.
    pub fn active_effects(&self) -> Vec<Vec<u32>> {
        let mut out: Vec<Vec<u32>> = self.terms.iter().map(|t| t.group.effects().to_vec()).collect();
        out.sort();
        out.dedup();
        out
    }

    fn term_atoms(&self) -> Result<Vec<BasisAtom>> {
        let mut kernels: HashMap<usize, Arc<WendlandKernel>> = HashMap::new();
        self.terms
            .iter()
            .map(|t| {
                let m = t.group.order();
                let kernel = match kernels.get(&m) {
                    Some(k) => Arc::clone(k),
                    None => {
                        let k = Arc::new(WendlandKernel::new(m, self.config.basis.kernel_k)?);
                        kernels.insert(m, Arc::clone(&k));
                        k
                    }
                };
                Ok(BasisAtom {
                    owner: t.group.clone(),
                    center: t.center.clone(),
                    bandwidth: t.bandwidth,
                    kernel,
                })
            })
            .collect()
    }

    /// Predicts at rows given in original units.
    pub fn predict(&self, x: &DataMatrix) -> Result<Prediction> {
        let (z, extrapolated) = self.scaling.apply(x)?;
        let n_out = extrapolated.iter().filter(|e| **e).count();
        if n_out > 0 {
            log::warn!("{n_out} prediction rows lie outside the training box");
        }
        Ok(Prediction {
            values: self.predict_scaled(&z)?,
            extrapolated,
        })
    }

    /// Predicts at rows already mapped by the model's scaling.
    pub fn predict_scaled(&self, z: &DataMatrix) -> Result<Vec<f64>> {
        if z.ncols() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                found: z.ncols(),
                context: "input columns",
            });
        }
        let atoms = self.term_atoms()?;
        let coefs: Vec<f64> = self.terms.iter().map(|t| t.coef).collect();
        Ok((0..z.nrows())
            .into_par_iter()
            .map(|i| {
                let row = z.row(i);
                let f = atoms
                    .iter()
                    .zip(&coefs)
                    .fold(0.0, |acc, (a, c)| acc + c * a.design_value(row));
                self.intercept + f
            })
            .collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, SeventeenDigits);
        self.to_record()
            .serialize(&mut ser)
            .map_err(|e| Error::Io(io::Error::other(e)))?;
        buf.push(b'\n');
        let mut file = fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Parses the model file format. The version is checked before anything
    /// else so that a future file reports a version error, not a schema one.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let found = value
            .get("schema_version")
            .ok_or_else(|| Error::Schema("missing schema_version".into()))?
            .as_u64()
            .ok_or_else(|| Error::Schema("schema_version must be a nonnegative integer".into()))?;
        if found != SCHEMA_VERSION {
            return Err(Error::VersionMismatch {
                found,
                supported: SCHEMA_VERSION,
            });
        }
        let rec: ModelRecord = serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
        Self::from_record(rec)
    }

    fn to_record(&self) -> ModelRecord {
        let one_based = |g: &EffectResolution| g.effects().iter().map(|j| j + 1).collect::<Vec<u32>>();
        let b = &self.config.basis;
        ModelRecord {
            schema_version: SCHEMA_VERSION,
            d: self.d(),
            input_names: self.input_names.clone(),
            scaling: self.scaling.clone(),
            kernel: KernelRecord { k: b.kernel_k },
            schedule: b.schedule.clone(),
            intercept: self.intercept,
            terms: self
                .terms
                .iter()
                .map(|t| TermRecord {
                    u: one_based(&t.group),
                    r: t.group.level(),
                    atom_index: t.atom_index,
                    center: t.center.clone(),
                    bandwidth: t.bandwidth,
                    coef: t.coef,
                })
                .collect(),
            lambda: self.lambda(),
            rss: self.rss,
            n: self.n,
            s: self.s,
            sigma2: self.sigma2,
            criterion: self.criterion.clone(),
            perfect_fit: self.perfect_fit,
            candidates: self
                .candidates
                .iter()
                .map(|g| GroupRecord { u: one_based(g), r: g.level() })
                .collect(),
            lambda_grid: self.lambda_grid.clone(),
            fit: FitRecord {
                d_max: b.d_max,
                r_max: b.r_max,
                atom_cap: b.atom_cap,
                rho: self.config.rho,
                lambda_min_ratio: self.config.lambda_min_ratio,
                max_terms: self.config.max_terms,
                rss_tol: self.config.rss_tol,
                rss_window: self.config.rss_window,
                solver: self.config.solver.clone(),
            },
        }
    }

    fn from_record(rec: ModelRecord) -> Result<Self> {
        let bad = |msg: String| Error::Schema(msg);
        let d = rec.d;
        if d == 0 || rec.scaling.min.len() != d || rec.scaling.max.len() != d || rec.input_names.len() != d {
            return Err(bad(format!(
                "d = {d} disagrees with scaling ({}, {}) or input_names ({})",
                rec.scaling.min.len(),
                rec.scaling.max.len(),
                rec.input_names.len()
            )));
        }
        let group = |u: &[u32], r: u32| -> Result<EffectResolution> {
            if u.iter().any(|&j| j == 0 || j as usize > d) {
                return Err(bad(format!("effect indices {u:?} outside 1..={d}")));
            }
            EffectResolution::new(u.iter().map(|j| j - 1).collect(), r).map_err(|e| bad(e.to_string()))
        };
        let config = PathConfig {
            basis: BasisConfig {
                kernel_k: rec.kernel.k,
                schedule: rec.schedule,
                d_max: rec.fit.d_max,
                r_max: rec.fit.r_max,
                atom_cap: rec.fit.atom_cap,
            },
            rho: rec.fit.rho,
            lambda_min_ratio: rec.fit.lambda_min_ratio,
            max_terms: rec.fit.max_terms,
            rss_tol: rec.fit.rss_tol,
            rss_window: rec.fit.rss_window,
            solver: rec.fit.solver,
        };
        config.validate().map_err(|e| bad(e.to_string()))?;
        let mut terms = Vec::with_capacity(rec.terms.len());
        for t in rec.terms {
            let g = group(&t.u, t.r)?;
            if t.center.len() != g.order() {
                return Err(bad(format!("term {g} has a center of length {}", t.center.len())));
            }
            if t.atom_index >= config.basis.atom_count(&g) {
                return Err(bad(format!("term {g} has atom_index {} out of range", t.atom_index)));
            }
            if !(t.bandwidth > 0.0) || !t.coef.is_finite() || t.center.iter().any(|c| !c.is_finite()) {
                return Err(bad(format!("term {g} has a non-finite or nonpositive field")));
            }
            terms.push(Term {
                group: g,
                atom_index: t.atom_index,
                center: t.center,
                bandwidth: t.bandwidth,
                coef: t.coef,
            });
        }
        let candidates = rec
            .candidates
            .iter()
            .map(|g| group(&g.u, g.r))
            .collect::<Result<Vec<_>>>()?;
        if rec.lambda_grid.last() != Some(&rec.lambda) {
            return Err(bad("lambda must equal the last entry of lambda_grid".into()));
        }
        if !rec.intercept.is_finite() || !(rec.rss >= 0.0) {
            return Err(bad("intercept and rss must be finite".into()));
        }
        Ok(Self {
            input_names: rec.input_names,
            scaling: rec.scaling,
            config,
            intercept: rec.intercept,
            terms,
            candidates,
            lambda_grid: rec.lambda_grid,
            rss: rec.rss,
            n: rec.n,
            s: rec.s,
            sigma2: rec.sigma2,
            criterion: rec.criterion,
            perfect_fit: rec.perfect_fit,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct KernelRecord {
    k: u32,
}

#[derive(Serialize, Deserialize)]
struct TermRecord {
    u: Vec<u32>,
    r: u32,
    atom_index: usize,
    center: Vec<f64>,
    bandwidth: f64,
    coef: f64,
}

#[derive(Serialize, Deserialize)]
struct GroupRecord {
    u: Vec<u32>,
    r: u32,
}

#[derive(Serialize, Deserialize)]
struct FitRecord {
    d_max: usize,
    r_max: u32,
    atom_cap: usize,
    rho: f64,
    lambda_min_ratio: f64,
    max_terms: Option<usize>,
    rss_tol: f64,
    rss_window: usize,
    solver: SolverOptions,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    schema_version: u64,
    d: usize,
    input_names: Vec<String>,
    scaling: Scaling,
    kernel: KernelRecord,
    schedule: Schedule,
    intercept: f64,
    terms: Vec<TermRecord>,
    lambda: f64,
    rss: f64,
    n: usize,
    s: usize,
    #[serde(default)]
    sigma2: Option<f64>,
    criterion: String,
    perfect_fit: bool,
    candidates: Vec<GroupRecord>,
    lambda_grid: Vec<f64>,
    fit: FitRecord,
}

/// Compact JSON with every float written as 17 significant digits.
struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::solve_path;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fitted() -> (FittedModel, DataMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.random::<f64>() * 4.0, rng.random::<f64>()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (r[0]).sin() + r[1] * r[1]).collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let scaling = Scaling::fit(&x).unwrap();
        let (z, _) = scaling.apply(&x).unwrap();
        let cfg = PathConfig {
            rho: 0.8,
            lambda_min_ratio: 1e-3,
            basis: BasisConfig { r_max: 3, ..BasisConfig::default() },
            ..PathConfig::default()
        };
        let path = solve_path(&z, &y, &cfg).unwrap();
        let idx = path.points.len() - 1;
        let m = FittedModel::from_path(&path, idx, scaling, vec!["a".into(), "b".into()], "deterministic").unwrap();
        (m, x, y)
    }

    #[test]
    fn training_prediction_reproduces_rss() {
        let (m, x, y) = fitted();
        let p = m.predict(&x).unwrap();
        let rss: f64 = y.iter().zip(&p.values).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((rss - m.rss()).abs() <= 1e-10 * m.rss().max(1e-300), "{rss} vs {}", m.rss());
        assert!(p.extrapolated.iter().all(|e| !e));
        assert!(!m.terms().is_empty());
    }

    #[test]
    fn zero_model_is_constant() {
        let (mut m, x, _) = fitted();
        m.terms.clear();
        let p = m.predict(&x).unwrap();
        assert!(p.values.iter().all(|v| *v == m.intercept()));
    }

    #[test]
    fn save_load_is_bit_identical() {
        let (m, x, _) = fitted();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("m.json");
        m.save(&file).unwrap();
        let back = FittedModel::load(&file).unwrap();
        assert_eq!(back, m);
        let a = m.predict(&x).unwrap().values;
        let b = back.predict(&x).unwrap().values;
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        let text = fs::read_to_string(&file).unwrap();
        m.save(&file).unwrap();
        assert_eq!(fs::read_to_string(&file).unwrap(), text);
    }

    #[test]
    fn truncated_and_future_files_fail_distinctly() {
        let (m, _, _) = fitted();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("m.json");
        m.save(&file).unwrap();
        let text = fs::read_to_string(&file).unwrap();
        assert!(matches!(FittedModel::from_json(&text[..text.len() / 2]), Err(Error::Schema(_))));
        let future = text.replacen("\"schema_version\":1", "\"schema_version\":7", 1);
        match FittedModel::from_json(&future) {
            Err(e @ Error::VersionMismatch { found: 7, supported: 1 }) => {
                let msg = e.to_string();
                assert!(msg.contains('7') && msg.contains('1'));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(FittedModel::load(dir.path().join("missing.json")), Err(Error::Io(_))));
    }

    #[test]
    fn extrapolation_is_flagged_not_clipped() {
        let (m, _, _) = fitted();
        let far = DataMatrix::from_rows(&[vec![100.0, 50.0]]).unwrap();
        let p = m.predict(&far).unwrap();
        assert_eq!(p.extrapolated, vec![true]);
        assert_eq!(p.values[0], m.intercept());
        assert!(m.predict(&DataMatrix::from_rows(&[vec![1.0]]).unwrap()).is_err());
    }
}
