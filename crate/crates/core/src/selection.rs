//! Choosing a point on the path: information criteria, K-fold
//! cross-validation, and the error-variance estimates derived from them.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::path::{solve_path_on_grid, PathPoint, RegularizationPath};

/// How the tuning parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Criterion {
    /// Smallest lambda the path reached.
    Deterministic,
    Aic,
    Bic,
    Cv { folds: usize },
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::Deterministic => write!(f, "det"),
            Criterion::Aic => write!(f, "aic"),
            Criterion::Bic => write!(f, "bic"),
            Criterion::Cv { folds } => write!(f, "cv:{folds}"),
        }
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "det" | "deterministic" => Ok(Criterion::Deterministic),
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => {
                let k = other
                    .strip_prefix("cv:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .ok_or_else(|| {
                        Error::ParameterRange(format!(
                            "criterion '{s}' not recognised; use det, aic, bic or cv:K"
                        ))
                    })?;
                if k < 2 {
                    return Err(Error::ParameterRange(format!("cv needs at least 2 folds, got {k}")));
                }
                Ok(Criterion::Cv { folds: k })
            }
        }
    }
}

impl TryFrom<String> for Criterion {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Criterion> for String {
    fn from(c: Criterion) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoCriterion {
    Aic,
    Bic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreRow {
    pub lambda: f64,
    pub rss: f64,
    pub s: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    pub criterion: String,
    /// One row per path point, in path order.
    pub table: Vec<ScoreRow>,
    pub chosen: usize,
    /// The chosen point interpolates the data (RSS = 0).
    pub perfect_fit: bool,
}

/// Index of the smallest score; equal scores go to the larger lambda.
fn argmin(table: &[ScoreRow]) -> usize {
    let mut best = 0;
    for (i, row) in table.iter().enumerate().skip(1) {
        let b = &table[best];
        if row.score < b.score || (row.score == b.score && row.lambda > b.lambda) {
            best = i;
        }
    }
    best
}

/// AIC `n log(RSS/n) + 2s` or BIC `n log(RSS/n) + s log n` for every point.
pub fn information_criterion(points: &[PathPoint], kind: InfoCriterion, n: usize) -> Result<SelectionReport> {
    if points.is_empty() {
        return Err(Error::Empty("path"));
    }
    if n == 0 {
        return Err(Error::Empty("training rows"));
    }
    let nf = n as f64;
    let per_term = match kind {
        InfoCriterion::Aic => 2.0,
        InfoCriterion::Bic => nf.ln(),
    };
    let table: Vec<ScoreRow> = points
        .iter()
        .map(|p| ScoreRow {
            lambda: p.lambda,
            rss: p.rss,
            s: p.s,
            score: if p.rss > 0.0 {
                nf * (p.rss / nf).ln() + per_term * p.s as f64
            } else {
                f64::NEG_INFINITY
            },
        })
        .collect();
    let chosen = argmin(&table);
    Ok(SelectionReport {
        criterion: match kind {
            InfoCriterion::Aic => "aic",
            InfoCriterion::Bic => "bic",
        }
        .into(),
        perfect_fit: table[chosen].rss == 0.0,
        table,
        chosen,
    })
}

/// Shuffles `0..n` with a seeded ChaCha stream and deals rows to folds in
/// turn, so fold sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::ParameterRange(format!("cross-validation needs K >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::EmptyFold { fold: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub report: SelectionReport,
    /// Minimum over lambda of the pooled held-out mean squared error.
    pub sigma2: f64,
    pub folds: Vec<usize>,
}

/// K-fold cross-validation over the lambda grid of `path`, which must have
/// been fitted on `x` (scaled) and `y`. Each fold refits on its complement;
/// a fold path that stops early contributes its last point to the remaining
/// lambdas.
pub fn cross_validate(
    x: &DataMatrix,
    y: &[f64],
    path: &RegularizationPath,
    k: usize,
    seed: u64,
) -> Result<CvOutcome> {
    let n = y.len();
    if x.nrows() != n || n != path.n {
        return Err(Error::DimensionMismatch {
            expected: path.n,
            found: x.nrows(),
            context: "cross-validation rows vs fitted path",
        });
    }
    let folds = fold_assignment(n, k, seed)?;
    let grid = path.lambdas();
    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| folds[i] == f);
            let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let fit = solve_path_on_grid(&x.select_rows(&train), &y_train, &path.config, &grid)?;
            let preds = fit.predict_all(&x.select_rows(&test))?;
            Ok((0..grid.len())
                .map(|t| {
                    let p = &preds[t.min(preds.len() - 1)];
                    test.iter().zip(p).map(|(&i, v)| (y[i] - v) * (y[i] - v)).sum()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let table: Vec<ScoreRow> = path
        .points
        .iter()
        .enumerate()
        .map(|(t, p)| ScoreRow {
            lambda: p.lambda,
            rss: p.rss,
            s: p.s,
            score: per_fold.iter().map(|sse| sse[t]).sum::<f64>() / n as f64,
        })
        .collect();
    let chosen = argmin(&table);
    let sigma2 = table[chosen].score;
    Ok(CvOutcome {
        report: SelectionReport {
            criterion: format!("cv:{k}"),
            perfect_fit: path.points[chosen].rss == 0.0,
            table,
            chosen,
        },
        sigma2,
        folds,
    })
}

/// Cross-validated error variance.
pub fn sigma2_cv(x: &DataMatrix, y: &[f64], path: &RegularizationPath, k: usize, seed: u64) -> Result<f64> {
    Ok(cross_validate(x, y, path, k, seed)?.sigma2)
}

/// `RSS / (n - s)`.
pub fn sigma2_residual(rss: f64, n: usize, s: usize) -> Result<f64> {
    if n <= s {
        return Err(Error::UndefinedDof { n, s });
    }
    Ok(rss / (n - s) as f64)
}

/// Applies `criterion` to a fitted path. The second value is the CV variance
/// estimate when cross-validation was run.
pub fn select(
    x: &DataMatrix,
    y: &[f64],
    path: &RegularizationPath,
    criterion: Criterion,
    seed: u64,
) -> Result<(SelectionReport, Option<f64>)> {
    match criterion {
        Criterion::Deterministic => {
            let table: Vec<ScoreRow> = path
                .points
                .iter()
                .map(|p| ScoreRow {
                    lambda: p.lambda,
                    rss: p.rss,
                    s: p.s,
                    score: p.lambda,
                })
                .collect();
            let chosen = table.len() - 1;
            Ok((
                SelectionReport {
                    criterion: "det".into(),
                    perfect_fit: table[chosen].rss == 0.0,
                    table,
                    chosen,
                },
                None,
            ))
        }
        Criterion::Aic => Ok((information_criterion(&path.points, InfoCriterion::Aic, path.n)?, None)),
        Criterion::Bic => Ok((information_criterion(&path.points, InfoCriterion::Bic, path.n)?, None)),
        Criterion::Cv { folds } => {
            let out = cross_validate(x, y, path, folds, seed)?;
            Ok((out.report, Some(out.sigma2)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisConfig;
    use crate::path::{solve_path, PathConfig};
    use crate::solver::DuplicatedCoefficients;

    fn point(lambda: f64, rss: f64, s: usize) -> PathPoint {
        PathPoint {
            lambda,
            coefs: DuplicatedCoefficients::default(),
            beta: vec![],
            intercept: 0.0,
            active: vec![],
            nonzero_groups: 0,
            n_candidates: 0,
            rss,
            s,
            sweeps: 0,
            kkt_residual: 0.0,
        }
    }

    #[test]
    fn aic_of_unit_rss_and_no_terms_is_zero() {
        let r = information_criterion(&[point(1.0, 10.0, 0)], InfoCriterion::Aic, 10).unwrap();
        assert_eq!(r.table[0].score, 0.0);
    }

    #[test]
    fn equal_rss_prefers_fewer_terms() {
        let pts = [point(2.0, 3.0, 5), point(1.0, 3.0, 3)];
        for kind in [InfoCriterion::Aic, InfoCriterion::Bic] {
            assert_eq!(information_criterion(&pts, kind, 20).unwrap().chosen, 1);
        }
    }

    #[test]
    fn scores_match_direct_formula() {
        let n = 37usize;
        let pts: Vec<PathPoint> = (0..5).map(|i| point(1.0 / (i + 1) as f64, 30.0 - 5.0 * i as f64, 2 * i)).collect();
        let aic = information_criterion(&pts, InfoCriterion::Aic, n).unwrap();
        let bic = information_criterion(&pts, InfoCriterion::Bic, n).unwrap();
        for (i, p) in pts.iter().enumerate() {
            let base = 37.0 * (p.rss / 37.0).ln();
            assert!((aic.table[i].score - (base + 2.0 * p.s as f64)).abs() < 1e-12);
            assert!((bic.table[i].score - (base + p.s as f64 * 37f64.ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_fit_selected_and_flagged() {
        let pts = [point(2.0, 1.0, 1), point(1.0, 0.0, 9), point(0.5, 0.0, 12)];
        let r = information_criterion(&pts, InfoCriterion::Bic, 10).unwrap();
        assert_eq!(r.chosen, 1);
        assert!(r.perfect_fit);
    }

    #[test]
    fn selection_ignores_point_order() {
        let pts = vec![point(3.0, 9.0, 1), point(2.0, 4.0, 3), point(1.0, 3.9, 8)];
        let r = information_criterion(&pts, InfoCriterion::Aic, 12).unwrap();
        let mut rev = pts.clone();
        rev.reverse();
        let q = information_criterion(&rev, InfoCriterion::Aic, 12).unwrap();
        assert_eq!(pts[r.chosen].lambda, rev[q.chosen].lambda);
    }

    #[test]
    fn residual_variance() {
        let rss: f64 = [1.0f64, -1.0, 1.0, -1.0].iter().map(|r| r * r).sum();
        assert_eq!(sigma2_residual(rss, 4, 0).unwrap(), 1.0);
        assert_eq!(sigma2_residual(0.0, 4, 2).unwrap(), 0.0);
        assert!(matches!(sigma2_residual(1.0, 3, 3), Err(Error::UndefinedDof { n: 3, s: 3 })));
    }

    #[test]
    fn folds_are_balanced_and_pure() {
        let a = fold_assignment(23, 5, 9).unwrap();
        assert_eq!(a, fold_assignment(23, 5, 9).unwrap());
        assert_ne!(a, fold_assignment(23, 5, 10).unwrap());
        for f in 0..5 {
            let c = a.iter().filter(|&&v| v == f).count();
            assert!(c == 4 || c == 5);
        }
        assert!(matches!(fold_assignment(3, 4, 0), Err(Error::EmptyFold { .. })));
        assert!(fold_assignment(3, 1, 0).is_err());
    }

    #[test]
    fn criterion_strings_round_trip() {
        for s in ["det", "aic", "bic", "cv:10"] {
            assert_eq!(s.parse::<Criterion>().unwrap().to_string(), s);
        }
        assert!("cv:1".parse::<Criterion>().is_err());
        assert!("gcv".parse::<Criterion>().is_err());
    }

    fn cfg() -> PathConfig {
        PathConfig {
            rho: 0.8,
            lambda_min_ratio: 1e-3,
            basis: BasisConfig { r_max: 3, ..BasisConfig::default() },
            ..PathConfig::default()
        }
    }

    #[test]
    fn cv_on_constant_response_picks_empty_model() {
        let x = DataMatrix::from_rows(&(0..12).map(|i| vec![i as f64 / 11.0]).collect::<Vec<_>>()).unwrap();
        let y = vec![2.0; 12];
        let path = solve_path(&x, &y, &cfg()).unwrap();
        let out = cross_validate(&x, &y, &path, 3, 1).unwrap();
        assert!(path.points[out.report.chosen].active.is_empty());
        assert_eq!(out.sigma2, 0.0);
    }

    #[test]
    fn leave_one_out_prefers_small_lambda_on_smooth_data() {
        let x = DataMatrix::from_rows(&(0..20).map(|i| vec![i as f64 / 19.0]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = (0..20).map(|i| (2.0 * i as f64 / 19.0).sin()).collect();
        let path = solve_path(&x, &y, &cfg()).unwrap();
        let out = cross_validate(&x, &y, &path, 20, 0).unwrap();
        assert!(out.report.table.iter().all(|r| r.score.is_finite()));
        assert!(out.report.chosen > path.points.len() / 2, "chosen {} of {}", out.report.chosen, path.points.len());
        assert!(out.sigma2 < 1e-3);
    }
}
