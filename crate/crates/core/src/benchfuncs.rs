//! Closed-form test functions, random designs and an end-to-end benchmark
//! harness.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::data::{DataMatrix, Scaling};
use crate::error::{Error, Result};
use crate::inference::{confidence_intervals, interval_score, CiOptions};
use crate::model::FittedModel;
use crate::path::{solve_path, PathConfig};
use crate::selection::{select, sigma2_residual, Criterion};

/// A named closed-form function with its declared input box.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub name: &'static str,
    pub input_names: &'static [&'static str],
    pub ranges: &'static [(f64, f64)],
    /// Standard deviation of additive Gaussian noise on training responses.
    pub noise_sd: f64,
    eval: fn(&[f64]) -> f64,
}

impl TestFunction {
    pub fn d(&self) -> usize {
        self.ranges.len()
    }

    /// Noise-free value; warns when `x` leaves the declared box.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                found: x.len(),
                context: "test function inputs",
            });
        }
        let tol = 1e-12;
        if x
            .iter()
            .zip(self.ranges)
            .any(|(v, (lo, hi))| *v < lo - tol * lo.abs().max(1.0) || *v > hi + tol * hi.abs().max(1.0))
        {
            log::warn!("{} evaluated outside its declared ranges at {x:?}", self.name);
        }
        Ok((self.eval)(x))
    }
}

fn additive10(x: &[f64]) -> f64 {
    (1.5 * x[0] * PI).sin() + 3.0 * (3.5 * x[1] * PI).cos() + 5.0 * x[2].exp()
        + 2.0 * (x[1] * PI).cos() * (x[2] * PI).sin()
}

fn borehole(x: &[f64]) -> f64 {
    let (rw, r, tu, hu, tl, hl, l, kw) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]);
    let log_ratio = (r / rw).ln();
    2.0 * PI * tu * (hu - hl) / (log_ratio * (1.0 + 2.0 * l * tu / (log_ratio * rw * rw * kw) + tu / tl))
}

fn gramacy_lee(x: &[f64]) -> f64 {
    (0.9 * (x[0] + 0.48)).powi(10).sin().exp() + x[1] * x[2] + x[3]
}

fn bending(x: &[f64]) -> f64 {
    let (l, b, h) = (x[0], x[1], x[2]);
    4e-9 * l.powi(3) / (b * h.powi(3))
}

fn otl(x: &[f64]) -> f64 {
    let (rb1, rb2, rf, rc1, rc2, beta) = (x[0], x[1], x[2], x[3], x[4], x[5]);
    let vb1 = 12.0 * rb2 / (rb1 + rb2);
    let k = beta * (rc2 + 9.0);
    let den = k + rf;
    (vb1 + 0.74) * k / den + 11.35 * rf / den + 0.74 * rf * k / (den * rc1)
}

/// Sweep angle in degrees.
fn wing(x: &[f64]) -> f64 {
    let (sw, wfw, a, sweep, q, taper, tc, nz, wdg, wp) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8], x[9]);
    let c = sweep.to_radians().cos();
    0.036
        * sw.powf(0.758)
        * wfw.powf(0.0035)
        * (a / (c * c)).powf(0.6)
        * q.powf(0.006)
        * taper.powf(0.04)
        * (100.0 * tc / c).powf(-0.3)
        * (nz * wdg).powf(0.49)
        + sw * wp
}

fn damped_cosine(x: &[f64]) -> f64 {
    (-1.4 * x[0]).exp() * (3.5 * PI * x[0]).cos()
}

const UNIT10: [(f64, f64); 10] = [(0.0, 1.0); 10];
const UNIT6: [(f64, f64); 6] = [(0.0, 1.0); 6];

static FUNCTIONS: &[TestFunction] = &[
    TestFunction {
        name: "additive10",
        input_names: &["x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9", "x10"],
        ranges: &UNIT10,
        noise_sd: 0.0,
        eval: additive10,
    },
    TestFunction {
        name: "borehole",
        input_names: &["rw", "r", "Tu", "Hu", "Tl", "Hl", "L", "Kw"],
        ranges: &[
            (0.05, 0.15),
            (100.0, 50000.0),
            (63070.0, 115600.0),
            (990.0, 1110.0),
            (63.1, 116.0),
            (700.0, 820.0),
            (1120.0, 1680.0),
            (9855.0, 12045.0),
        ],
        noise_sd: 0.0,
        eval: borehole,
    },
    TestFunction {
        name: "gramacy_lee",
        input_names: &["x1", "x2", "x3", "x4", "x5", "x6"],
        ranges: &UNIT6,
        noise_sd: 0.05,
        eval: gramacy_lee,
    },
    TestFunction {
        name: "bending",
        input_names: &["L", "b", "h"],
        ranges: &[(10.0, 20.0), (1.0, 2.0), (0.1, 0.2)],
        noise_sd: 0.0,
        eval: bending,
    },
    TestFunction {
        name: "otl",
        input_names: &["Rb1", "Rb2", "Rf", "Rc1", "Rc2", "beta"],
        ranges: &[(50.0, 150.0), (25.0, 70.0), (0.5, 3.0), (1.2, 2.5), (0.25, 1.2), (50.0, 300.0)],
        noise_sd: 0.0,
        eval: otl,
    },
    TestFunction {
        name: "wing",
        input_names: &["Sw", "Wfw", "A", "Lambda", "q", "R", "tc", "Nz", "Wdg", "Wp"],
        ranges: &[
            (150.0, 200.0),
            (220.0, 300.0),
            (6.0, 10.0),
            (-10.0, 10.0),
            (16.0, 45.0),
            (0.5, 1.0),
            (0.08, 0.18),
            (2.5, 6.0),
            (1700.0, 2500.0),
            (0.025, 0.08),
        ],
        noise_sd: 0.0,
        eval: wing,
    },
    TestFunction {
        name: "damped_cosine",
        input_names: &["x"],
        ranges: &[(0.0, 1.0)],
        noise_sd: 0.0,
        eval: damped_cosine,
    },
];

pub fn function_names() -> Vec<&'static str> {
    FUNCTIONS.iter().map(|f| f.name).collect()
}

pub fn lookup(name: &str) -> Result<&'static TestFunction> {
    FUNCTIONS
        .iter()
        .find(|f| f.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownFunction {
            name: name.to_string(),
            valid: function_names().join(", "),
        })
}

pub fn eval_function(name: &str, x: &[f64]) -> Result<f64> {
    lookup(name)?.eval(x)
}

/// Independent uniform draws over `ranges`.
pub fn generate_design(n: usize, ranges: &[(f64, f64)], seed: u64) -> DataMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = ranges.len();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        for &(lo, hi) in ranges {
            data.push(lo + (hi - lo) * rng.random::<f64>());
        }
    }
    DataMatrix::new(n, d, data).expect("shape is consistent by construction")
}

/// `m` unique uniform rows, each repeated `replicates` times in a row.
pub fn generate_replicated_design(m: usize, replicates: usize, ranges: &[(f64, f64)], seed: u64) -> DataMatrix {
    let unique = generate_design(m, ranges, seed);
    let rows: Vec<usize> = (0..m).flat_map(|i| std::iter::repeat_n(i, replicates)).collect();
    unique.select_rows(&rows)
}

/// Mean-zero Gaussian noise with standard deviation `sd`, reproducible from
/// `seed`.
pub fn noise(n: usize, sd: f64, seed: u64) -> Vec<f64> {
    if sd <= 0.0 {
        return vec![0.0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, sd).expect("positive sd");
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageMetrics {
    /// Percentage of truths inside their interval.
    pub coverage: f64,
    pub avg_width: f64,
    pub avg_score: f64,
}

pub fn coverage_metrics(intervals: &[(f64, f64)], truths: &[f64], alpha: f64) -> Result<CoverageMetrics> {
    if intervals.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: intervals.len(),
            found: truths.len(),
            context: "truths vs intervals",
        });
    }
    if intervals.is_empty() {
        return Err(Error::Empty("intervals"));
    }
    let m = intervals.len() as f64;
    let inside = intervals
        .iter()
        .zip(truths)
        .filter(|((l, u), t)| l <= t && *t <= u)
        .count();
    Ok(CoverageMetrics {
        coverage: 100.0 * inside as f64 / m,
        avg_width: intervals.iter().map(|(l, u)| u - l).sum::<f64>() / m,
        avg_score: intervals
            .iter()
            .zip(truths)
            .map(|((l, u), t)| interval_score(*l, *u, *t, alpha))
            .sum::<f64>()
            / m,
    })
}

/// Settings for [`run_benchmark`].
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub path: PathConfig,
    pub criterion: Criterion,
    /// Each unique training location is repeated this many times before
    /// noise is added; `n` must be a multiple of it.
    pub replicates: usize,
    /// Overrides the function's own noise level.
    pub noise_sd: Option<f64>,
    /// Uniform inputs appended to the design that the function ignores.
    pub extra_inert: usize,
    /// Intervals at the test points when set.
    pub ci: Option<CiOptions>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            path: PathConfig::default(),
            criterion: Criterion::Deterministic,
            replicates: 1,
            noise_sd: None,
            extra_inert: 0,
            ci: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub fit_seconds: f64,
    pub select_seconds: f64,
    pub predict_seconds: f64,
    pub rmse: Option<f64>,
    pub coverage: Option<f64>,
    pub avg_width: Option<f64>,
    pub avg_score: Option<f64>,
    pub criterion: String,
    pub lambda: f64,
    pub path_points: usize,
    pub stop: String,
    pub terms: usize,
    /// Active effect sets, 1-based, e.g. `{3} {2} {2,3}`.
    pub active_effects: String,
    /// For `additive10`: every active effect set lies within inputs 1-3.
    pub variable_detection: Option<bool>,
}

/// Design, fit, selection, prediction and metrics for one test function.
/// Inputs are scaled with the declared ranges, not the data.
pub fn run_benchmark(name: &str, n: usize, n_test: usize, seed: u64, cfg: &BenchConfig) -> Result<BenchResult> {
    let f = lookup(name)?;
    if n == 0 {
        return Err(Error::Empty("training design"));
    }
    if cfg.replicates == 0 || !n.is_multiple_of(cfg.replicates) {
        return Err(Error::ParameterRange(format!(
            "n = {n} is not a multiple of replicates = {}",
            cfg.replicates
        )));
    }
    let mut ranges = f.ranges.to_vec();
    ranges.extend(std::iter::repeat_n((0.0, 1.0), cfg.extra_inert));
    let d = ranges.len();
    let x = generate_replicated_design(n / cfg.replicates, cfg.replicates, &ranges, seed);
    let sd = cfg.noise_sd.unwrap_or(f.noise_sd);
    let eps = noise(n, sd, seed ^ 0x5eed_0001);
    let y: Vec<f64> = x
        .rows()
        .zip(&eps)
        .map(|(r, e)| f.eval(&r[..f.d()]).map(|v| v + e))
        .collect::<Result<_>>()?;
    let scaling = Scaling::from_ranges(&ranges);
    let (z, _) = scaling.apply(&x)?;

    let t0 = Instant::now();
    let path = solve_path(&z, &y, &cfg.path)?;
    let fit_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (report, cv_sigma2) = select(&z, &y, &path, cfg.criterion, seed)?;
    let select_seconds = t1.elapsed().as_secs_f64();
    let chosen = &path.points[report.chosen];
    let names: Vec<String> = (0..d)
        .map(|j| f.input_names.get(j).map_or_else(|| format!("z{}", j + 1), |s| s.to_string()))
        .collect();
    let sigma2 = sigma2_residual(chosen.rss, n, chosen.s).ok().or(cv_sigma2);
    let model = FittedModel::from_path(&path, report.chosen, scaling, names, &cfg.criterion.to_string())?
        .with_sigma2(sigma2);

    let active = model.active_effects();
    let variable_detection = (f.name == "additive10").then(|| active.iter().all(|u| u.iter().all(|&j| j < 3)));
    let active_effects = active
        .iter()
        .map(|u| {
            let inner: Vec<String> = u.iter().map(|j| (j + 1).to_string()).collect();
            format!("{{{}}}", inner.join(","))
        })
        .collect::<Vec<_>>()
        .join(" ");

    let mut result = BenchResult {
        name: f.name.to_string(),
        n,
        d,
        seed,
        fit_seconds,
        select_seconds,
        predict_seconds: 0.0,
        rmse: None,
        coverage: None,
        avg_width: None,
        avg_score: None,
        criterion: report.criterion.clone(),
        lambda: chosen.lambda,
        path_points: path.points.len(),
        stop: format!("{:?}", path.stop),
        terms: model.terms().len(),
        active_effects,
        variable_detection,
    };
    if n_test == 0 {
        return Ok(result);
    }
    let x_test = generate_design(n_test, &ranges, seed ^ 0x7e57_0002);
    let truth: Vec<f64> = x_test.rows().map(|r| f.eval(&r[..f.d()])).collect::<Result<_>>()?;
    let t2 = Instant::now();
    let pred = model.predict(&x_test)?;
    result.predict_seconds = t2.elapsed().as_secs_f64();
    let mse = pred.values.iter().zip(&truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n_test as f64;
    result.rmse = Some(mse.sqrt());
    if let Some(opts) = &cfg.ci {
        let ci = confidence_intervals(&model, &x, &y, &x_test, opts)?;
        let (ivs, ts): (Vec<(f64, f64)>, Vec<f64>) = ci
            .rows
            .iter()
            .zip(&truth)
            .filter_map(|(r, t)| r.interval.map(|iv| ((iv.lower, iv.upper), *t)))
            .unzip();
        if !ivs.is_empty() {
            let m = coverage_metrics(&ivs, &ts, opts.alpha)?;
            result.coverage = Some(m.coverage);
            result.avg_width = Some(m.avg_width);
            result.avg_score = Some(m.avg_score);
        }
    }
    Ok(result)
}
