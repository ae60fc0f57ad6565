use std::io::Write;
use std::path::{Path, PathBuf};

use mrfa::benchfuncs::{coverage_metrics, run_benchmark, BenchConfig, BenchResult};
use mrfa::data::Scaling;
use mrfa::inference::{confidence_intervals, CiOptions, CiVariant};
use mrfa::model::FittedModel;
use mrfa::path::{solve_path, RegularizationPath};
use mrfa::selection::{select, sigma2_residual, SelectionReport};

use crate::config::RunConfig;
use crate::table::{fmt_f64, output, Table};
use crate::{BenchArgs, CiArgs, CliError, FitArgs, PredictArgs};

fn ci_variant(cfg: &RunConfig) -> Result<CiVariant, CliError> {
    Ok(cfg.ci_variant.as_deref().unwrap_or("ridge").parse()?)
}

fn report_path(model: &Path) -> PathBuf {
    let stem = model.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    model.with_file_name(format!("{stem}.path.csv"))
}

pub fn fit(args: &FitArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let response = cfg.response.as_deref().ok_or_else(|| {
        CliError::Input("no response column given; pass --response NAME".into())
    })?;
    let table = Table::read(&args.train)?;
    let yj = table.column_index(response).ok_or_else(|| {
        CliError::Input(format!(
            "--response '{response}' is not a column of {} (columns: {})",
            args.train.display(),
            table.names.join(", ")
        ))
    })?;
    let input_names: Vec<String> = table.names.iter().filter(|n| *n != response).cloned().collect();
    if input_names.is_empty() {
        return Err(CliError::Input("training file has no input columns".into()));
    }
    let y = table.column(yj);
    let x = table.select(&input_names)?;
    let scaling = Scaling::fit(&x)?;
    let (z, _) = scaling.apply(&x)?;

    let path_cfg = cfg.path_config();
    let path = solve_path(&z, &y, &path_cfg)?;
    let criterion = cfg.criterion();
    let (report, cv_sigma2) = select(&z, &y, &path, criterion, cfg.seed())?;
    let chosen = &path.points[report.chosen];
    let sigma2 = sigma2_residual(chosen.rss, path.n, chosen.s).ok().or(cv_sigma2);
    let model = FittedModel::from_path(&path, report.chosen, scaling, input_names, &criterion.to_string())?
        .with_sigma2(sigma2);

    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("model.json"));
    model.save(&out)?;
    let rpath = args.report.clone().unwrap_or_else(|| report_path(&out));
    write_path_report(&path, &report, output(Some(&rpath))?)?;
    if report.perfect_fit {
        log::warn!("the selected model interpolates the training data");
    }
    println!(
        "path: {} points, stopped by {:?}; selected by {}: lambda {} with {} terms (RSS {})",
        path.points.len(),
        path.stop,
        report.criterion,
        fmt_f64(chosen.lambda),
        model.terms().len(),
        fmt_f64(chosen.rss)
    );
    println!("model written to {}; path report to {}", out.display(), rpath.display());
    Ok(())
}

fn write_path_report(path: &RegularizationPath, report: &SelectionReport, out: Box<dyn Write>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "lambda", "rss", "s", "groups", "score", "chosen", "active"])?;
    for (i, (p, row)) in path.points.iter().zip(&report.table).enumerate() {
        let active: Vec<String> = p.active.iter().map(ToString::to_string).collect();
        w.write_record([
            i.to_string(),
            fmt_f64(p.lambda),
            fmt_f64(p.rss),
            p.s.to_string(),
            p.nonzero_groups.to_string(),
            fmt_f64(row.score),
            u8::from(i == report.chosen).to_string(),
            active.join(" "),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn predict(args: &PredictArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let model = FittedModel::load(&args.model)?;
    let table = Table::read(&args.test)?;
    let x = table.select(model.input_names())?;
    let pred = model.predict(&x)?;
    let mut w = csv::Writer::from_writer(output(cfg.out.as_deref())?);
    w.write_record(["y_hat", "extrapolated"])?;
    for (v, e) in pred.values.iter().zip(&pred.extrapolated) {
        w.write_record([fmt_f64(*v), u8::from(*e).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn ci(args: &CiArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let model = FittedModel::load(&args.model)?;
    let train = Table::read(&args.train)?;
    let response = match &cfg.response {
        Some(r) => r.clone(),
        None => {
            let extra: Vec<&String> = train
                .names
                .iter()
                .filter(|n| !model.input_names().contains(n))
                .collect();
            match extra.as_slice() {
                [only] => (*only).clone(),
                _ => {
                    return Err(CliError::Input(
                        "cannot tell which training column is the response; pass --response NAME".into(),
                    ))
                }
            }
        }
    };
    let yj = train
        .column_index(&response)
        .ok_or_else(|| CliError::Input(format!("--response '{response}' is not a column of the training file")))?;
    let y = train.column(yj);
    let x_train = train.select(model.input_names())?;
    let test = Table::read(&args.test)?;
    let x_test = test.select(model.input_names())?;
    let truth_col = match &args.truth {
        Some(t) => Some(
            test.column_index(t)
                .ok_or_else(|| CliError::Input(format!("--truth '{t}' is not a column of the test file")))?,
        ),
        None => test.column_index(&response),
    };

    let alpha = cfg.alpha();
    let opts = CiOptions {
        alpha,
        variant: ci_variant(cfg)?,
        folds: args.folds,
        seed: cfg.seed(),
        sigma2: args.sigma2,
    };
    let report = confidence_intervals(&model, &x_train, &y, &x_test, &opts)?;
    log::info!("noise variance {} ({})", report.sigma2, report.sigma2_source);
    if report.floored {
        log::warn!("noise variance raised to the deterministic floor");
    }

    let mut w = csv::Writer::from_writer(output(cfg.out.as_deref())?);
    w.write_record(["y_hat", "lower", "upper", "extrapolated", "flag"])?;
    for row in &report.rows {
        let (lo, hi) = row
            .interval
            .map_or((String::new(), String::new()), |iv| (fmt_f64(iv.lower), fmt_f64(iv.upper)));
        w.write_record([
            fmt_f64(row.prediction),
            lo,
            hi,
            u8::from(row.extrapolated).to_string(),
            row.issue.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    let mut out = w.into_inner().map_err(|e| CliError::Write(e.into_error()))?;
    if let Some(tj) = truth_col {
        let truth = test.column(tj);
        let (ivs, ts): (Vec<(f64, f64)>, Vec<f64>) = report
            .rows
            .iter()
            .zip(&truth)
            .filter_map(|(r, t)| r.interval.map(|iv| ((iv.lower, iv.upper), *t)))
            .unzip();
        if ivs.is_empty() {
            writeln!(out, "# no intervals to score")?;
        } else {
            let m = coverage_metrics(&ivs, &ts, alpha)?;
            writeln!(out, "# rows_scored={}", ivs.len())?;
            writeln!(out, "# coverage_pct={}", fmt_f64(m.coverage))?;
            writeln!(out, "# avg_width={}", fmt_f64(m.avg_width))?;
            writeln!(out, "# avg_interval_score={}", fmt_f64(m.avg_score))?;
        }
    }
    out.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn bench(args: &BenchArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let bcfg = BenchConfig {
        path: cfg.path_config(),
        criterion: cfg.criterion(),
        replicates: args.replicates,
        noise_sd: args.noise_sd,
        extra_inert: 0,
        ci: args.ci.then(|| -> Result<CiOptions, CliError> {
            Ok(CiOptions {
                alpha: cfg.alpha(),
                variant: ci_variant(cfg)?,
                seed: cfg.seed(),
                ..CiOptions::default()
            })
        }).transpose()?,
    };
    let r: BenchResult = run_benchmark(&args.name, args.n, args.n_test, cfg.seed(), &bcfg)?;
    let mut w = csv::Writer::from_writer(output(cfg.out.as_deref())?);
    w.write_record([
        "name", "n", "d", "seed", "fit_seconds", "select_seconds", "predict_seconds", "rmse", "coverage_pct",
        "avg_width", "avg_interval_score", "criterion", "lambda", "path_points", "stop", "terms",
        "active_effects", "variable_detection",
    ])?;
    w.write_record([
        r.name.clone(),
        r.n.to_string(),
        r.d.to_string(),
        r.seed.to_string(),
        fmt_f64(r.fit_seconds),
        fmt_f64(r.select_seconds),
        fmt_f64(r.predict_seconds),
        opt(r.rmse),
        opt(r.coverage),
        opt(r.avg_width),
        opt(r.avg_score),
        r.criterion.clone(),
        fmt_f64(r.lambda),
        r.path_points.to_string(),
        r.stop.clone(),
        r.terms.to_string(),
        r.active_effects.clone(),
        r.variable_detection.map(|b| b.to_string()).unwrap_or_default(),
    ])?;
    w.flush()?;
    Ok(())
}
