//! The five verbs. Each loads its inputs, runs the library, and writes every
//! output at the end.

use std::path::{Path, PathBuf};

use serde::Serialize;

use dcm_core::analysis::{analyze, Analysis};
use dcm_core::bootstrap::{Instability, SummarySigma};
use dcm_core::dft::{dft_grid, prewhiten, SineFit};
use dcm_core::fit::Weighting;
use dcm_core::model::{parameter_names, signal_value, trend_value, SignalSummary};
use dcm_core::select::{
    format_qf, model_ladder, no_signal_test, prediction_test, FisherComparison, LadderReport, ModelRecord,
    NoSignalReport, Verdict,
};
use dcm_core::series::{load_series, ColumnLayout, TimeSeries};
use dcm_core::simulate::{file_name, simulate};

use crate::control::ControlFile;
use crate::error::CliError;
use crate::output::{flag_list, num, opt, Writer, VERSION};

/// What a verb produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Instability flags that matter for `--strict`.
    pub flags: Vec<Instability>,
}

fn generator() -> String {
    format!("dcm {VERSION}")
}

fn load_data(ctl: &ControlFile) -> Result<TimeSeries<f64>, CliError> {
    let path = ctl.data_path()?;
    load_series(path, ColumnLayout::Auto).map_err(|e| match e {
        dcm_core::Error::Io(source) => CliError::io(path, source),
        other => CliError::Data {
            path: path.to_path_buf(),
            source: other,
        },
    })
}

fn flag_codes(flags: &[Instability]) -> Vec<&'static str> {
    flags.iter().map(|f| f.code()).collect()
}

#[derive(Serialize)]
struct StageJson {
    stage: &'static str,
    z_min: f64,
    best_freqs: Vec<f64>,
    combinations_tested: u64,
}

#[derive(Serialize)]
struct ParamJson {
    name: String,
    value: f64,
    sigma: Option<f64>,
}

#[derive(Serialize)]
struct ParamsJson<'a> {
    generator: String,
    model: String,
    signals: usize,
    harmonics: usize,
    trend_order: i32,
    eta: usize,
    f_min: f64,
    f_max: f64,
    weighting: Weighting,
    n: usize,
    z: f64,
    statistic: f64,
    rank: usize,
    rank_deficient: bool,
    converged: bool,
    iterations: usize,
    search: Vec<StageJson>,
    parameters: Vec<ParamJson>,
    summary: &'a SignalSummary<f64>,
    summary_sigma: Option<&'a SummarySigma<f64>>,
    bootstrap_rounds: usize,
    bootstrap_failed: usize,
    flags: Vec<&'static str>,
}

fn params_json(a: &Analysis<f64>) -> ParamsJson<'_> {
    let names = parameter_names(&a.spec);
    let values = a.refined.beta.to_flat(&a.spec);
    let sigma = a.bootstrap.as_ref().map(|b| &b.param_sigma);
    let parameters = names
        .into_iter()
        .zip(values)
        .enumerate()
        .map(|(k, (name, value))| ParamJson {
            name,
            value,
            sigma: sigma.and_then(|s| s.get(k).copied()),
        })
        .collect();
    let search = [&a.long, &a.short]
        .into_iter()
        .flatten()
        .map(|p| StageJson {
            stage: p.stage.name(),
            z_min: p.z_min,
            best_freqs: p.best_freqs.clone(),
            combinations_tested: p.combinations_tested,
        })
        .collect();
    ParamsJson {
        generator: generator(),
        model: a.spec.label(),
        signals: a.spec.signals,
        harmonics: a.spec.harmonics,
        trend_order: a.spec.trend_order,
        eta: a.spec.eta(),
        f_min: a.spec.f_min,
        f_max: a.spec.f_max,
        weighting: a.weighting,
        n: a.n(),
        z: a.refined.fit.z,
        statistic: a.refined.fit.statistic(),
        rank: a.refined.fit.rank,
        rank_deficient: a.refined.fit.rank_deficient,
        converged: a.refined.converged,
        iterations: a.refined.iterations,
        search,
        parameters,
        summary: &a.summary,
        summary_sigma: a.bootstrap.as_ref().map(|b| &b.summary_sigma),
        bootstrap_rounds: a.bootstrap.as_ref().map_or(0, |b| b.rounds),
        bootstrap_failed: a.bootstrap.as_ref().map_or(0, |b| b.failed),
        flags: flag_codes(&a.flags),
    }
}

/// Slices, parameters, residuals, curves and bootstrap draws of one analysis.
fn write_analysis(out: &mut Writer, ts: &TimeSeries<f64>, a: &Analysis<f64>, curve_points: usize) -> Result<(), CliError> {
    for p in [&a.long, &a.short].into_iter().flatten() {
        for s in &p.slices {
            let i = s.signal + 1;
            let rows: Vec<Vec<String>> = s.freqs.iter().zip(&s.z).map(|(&f, &z)| vec![num(f), num(z)]).collect();
            out.csv(
                &format!("slice_{}_{i}.csv", p.stage.name()),
                &[format!("signal={i} stage={}", p.stage.name())],
                &["f", "z"],
                &rows,
            );
        }
    }
    out.json("params.json", &params_json(a))?;

    let spec = &a.spec;
    let beta = &a.refined.beta;
    let g = a.evaluate(ts.times()).map_err(CliError::analysis)?;
    let sig = ts.errors();
    let mut cols = vec!["t", "y"];
    if sig.is_some() {
        cols.push("sigma");
    }
    cols.extend(["g", "residual"]);
    let rows: Vec<Vec<String>> = (0..ts.len())
        .map(|k| {
            let mut r = vec![num(ts.times()[k]), num(ts.values()[k])];
            if let Some(s) = sig {
                r.push(num(s[k]));
            }
            r.push(num(g[k]));
            r.push(num(ts.values()[k] - g[k]));
            r
        })
        .collect();
    out.csv("residuals.csv", &[format!("model={}", spec.label())], &cols, &rows);

    let signal_cols: Vec<String> = (1..=spec.signals).map(|i| format!("h_{i}")).collect();
    let mut cols: Vec<&str> = vec!["t", "g", "p"];
    cols.extend(signal_cols.iter().map(String::as_str));
    let (t0, t1) = (a.stats.t_first(), a.stats.t_last());
    let rows: Vec<Vec<String>> = (0..curve_points)
        .map(|k| {
            let t = t0 + (t1 - t0) * k as f64 / (curve_points - 1) as f64;
            let p = trend_value(spec, beta, &a.frame, t);
            let h: Vec<f64> = (0..spec.signals).map(|i| signal_value(spec, beta, i, t)).collect();
            let mut r = vec![num(t), num(p + h.iter().sum::<f64>()), num(p)];
            r.extend(h.into_iter().map(num));
            r
        })
        .collect();
    out.csv("model_curve.csv", &[format!("model={}", spec.label())], &cols, &rows);

    // Data with the trend removed, next to the fitted signals.
    let mut cols: Vec<&str> = vec!["t", "y_minus_p", "h"];
    cols.extend(signal_cols.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = (0..ts.len())
        .map(|k| {
            let t = ts.times()[k];
            let p = trend_value(spec, beta, &a.frame, t);
            let h: Vec<f64> = (0..spec.signals).map(|i| signal_value(spec, beta, i, t)).collect();
            let mut r = vec![num(t), num(ts.values()[k] - p), num(h.iter().sum())];
            r.extend(h.into_iter().map(num));
            r
        })
        .collect();
    out.csv("detrended.csv", &[format!("model={}", spec.label())], &cols, &rows);

    if let Some(b) = &a.bootstrap {
        out.csv_body("bootstrap.csv", &b.draws_csv());
    }
    Ok(())
}

/// `dcm run`: the full pipeline for one model.
pub fn run_dcm(ctl: &ControlFile) -> Result<Outcome, CliError> {
    let spec = ctl.spec()?;
    let cfg = ctl.analysis()?;
    let ts = load_data(ctl)?;
    let a = analyze(&ts, &spec, &cfg).map_err(CliError::analysis)?;
    let mut out = Writer::new(&ctl.output, &ctl.path);
    write_analysis(&mut out, &ts, &a, ctl.curve_points)?;
    Ok(Outcome {
        files: out.finish()?,
        flags: a.flags,
    })
}

#[derive(Serialize)]
struct DftPassJson<'a> {
    pass: usize,
    best_f: f64,
    best_period: f64,
    best_power: f64,
    sines: &'a [SineFit<f64>],
    trend: &'a [f64],
    residual_variance: f64,
}

#[derive(Serialize)]
struct DftJson<'a> {
    generator: String,
    f_min: f64,
    f_max: f64,
    grid_points: usize,
    detrend_order: i32,
    passes: Vec<DftPassJson<'a>>,
}

/// `dcm dft`: Lomb-Scargle pre-whitening baseline.
pub fn run_dft(ctl: &ControlFile) -> Result<Outcome, CliError> {
    let (f_min, f_max) = ctl.frequency_range()?;
    let ts = load_data(ctl)?;
    let stats = ts.span_stats().map_err(CliError::analysis)?;
    let grid = dft_grid(f_min, f_max, stats.f0);
    let order = ctl.dft_order.unwrap_or(ctl.k3.max(0));
    if order < 0 {
        return Err(CliError::config("dft_order", format!("must be >= 0, got {order}")));
    }
    let passes_wanted = ctl.dft_signals.unwrap_or(ctl.k1.unwrap_or(1).max(1));
    if passes_wanted == 0 {
        return Err(CliError::config("dft_signals", "need at least one pass".into()));
    }
    let passes = prewhiten(&ts, order, passes_wanted, &grid).map_err(CliError::analysis)?;

    let mut out = Writer::new(&ctl.output, &ctl.path);
    for (k, p) in passes.iter().enumerate() {
        let rows: Vec<Vec<String>> = p.freqs.iter().zip(&p.power).map(|(&f, &w)| vec![num(f), num(w)]).collect();
        out.csv(&format!("dft_periodogram_{}.csv", k + 1), &[format!("pass={}", k + 1)], &["f", "power"], &rows);
    }
    let json = DftJson {
        generator: generator(),
        f_min,
        f_max,
        grid_points: grid.len(),
        detrend_order: order,
        passes: passes
            .iter()
            .enumerate()
            .map(|(k, p)| DftPassJson {
                pass: k + 1,
                best_f: p.best_f,
                best_period: 1.0 / p.best_f,
                best_power: p.best_power,
                sines: &p.sines,
                trend: &p.trend,
                residual_variance: p.residual_variance,
            })
            .collect(),
    };
    out.json("dft.json", &json)?;
    Ok(Outcome {
        files: out.finish()?,
        flags: Vec::new(),
    })
}

fn verdict_text(c: &FisherComparison) -> &'static str {
    match c.verdict {
        Verdict::RejectH0 => "reject H0",
        Verdict::RetainH0 => "retain H0",
        Verdict::NotApplicable if c.complex_preferred() => "no test, complex has lower statistic",
        Verdict::NotApplicable => "no test, simple has lower or equal statistic",
    }
}

fn comparison_rows(records: &[ModelRecord], comparisons: &[FisherComparison]) -> Vec<Vec<String>> {
    let flags_of = |label: &str| {
        records
            .iter()
            .find(|r| r.label == label)
            .map(|r| flag_list(&r.flags))
            .unwrap_or_default()
    };
    comparisons
        .iter()
        .map(|c| {
            vec![
                c.simple.clone(),
                c.complex.clone(),
                c.eta_simple.to_string(),
                c.eta_complex.to_string(),
                num(c.stat_simple),
                num(c.stat_complex),
                opt(c.f),
                format_qf(c.qf),
                verdict_text(c).to_string(),
                flags_of(&c.simple),
                flags_of(&c.complex),
            ]
        })
        .collect()
}

const COMPARISON_COLUMNS: [&str; 11] = [
    "simple",
    "complex",
    "eta_simple",
    "eta_complex",
    "stat_simple",
    "stat_complex",
    "F",
    "QF",
    "verdict",
    "flags_simple",
    "flags_complex",
];

#[derive(Serialize)]
struct LadderJson<'a> {
    generator: String,
    best: Option<&'a str>,
    candidates: Vec<&'a str>,
    report: &'a LadderReport,
    no_signal: Option<&'a NoSignalReport>,
}

/// `dcm ladder`: analyse every spec and compare them pairwise.
pub fn run_ladder(ctl: &ControlFile) -> Result<Outcome, CliError> {
    if ctl.models.is_empty() {
        return Err(CliError::config("models", "ladder needs a model list".into()));
    }
    let specs = ctl.specs()?;
    let cfg = ctl.analysis()?;
    let ts = load_data(ctl)?;
    let (analyses, report) = model_ladder(&ts, &specs, &cfg, ctl.gamma).map_err(CliError::analysis)?;

    let no_signal = match ctl.max_poly {
        None => None,
        Some(k) => {
            let signal = report
                .best
                .or_else(|| report.candidates.first().copied())
                .map(|b| &report.records[b])
                .filter(|r| r.signals > 0)
                .ok_or_else(|| CliError::config("max_poly", "no selected signal model to test against".into()))?;
            let weighting = analyses[report.records.iter().position(|r| r == signal).unwrap_or(0)].weighting;
            Some(no_signal_test(&ts, signal, k, weighting, ctl.gamma).map_err(CliError::analysis)?)
        }
    };

    let mut out = Writer::new(&ctl.output, &ctl.path);
    let model_rows: Vec<Vec<String>> = report
        .records
        .iter()
        .enumerate()
        .map(|(k, r)| {
            vec![
                r.label.clone(),
                r.eta.to_string(),
                num(r.statistic),
                num(r.z),
                flag_list(&r.flags),
                (report.best == Some(k)).to_string(),
            ]
        })
        .collect();
    out.csv(
        "ladder_models.csv",
        &[format!("n={} gamma={}", report.n, report.gamma)],
        &["model", "eta", "statistic", "z", "flags", "best"],
        &model_rows,
    );
    out.csv(
        "ladder.csv",
        &[format!("n={} gamma={}", report.n, report.gamma)],
        &COMPARISON_COLUMNS,
        &comparison_rows(&report.records, &report.comparisons),
    );
    if let Some(ns) = &no_signal {
        let mut records = ns.polynomials.clone();
        records.push(ns.signal.clone());
        out.csv(
            "no_signal.csv",
            &[format!("signal={} detected={}", ns.signal.label, ns.signal_detected)],
            &COMPARISON_COLUMNS,
            &comparison_rows(&records, &ns.comparisons),
        );
    }
    let label = |k: usize| report.records[k].label.as_str();
    out.json(
        "ladder.json",
        &LadderJson {
            generator: generator(),
            best: report.best.map(label),
            candidates: report.candidates.iter().map(|&k| label(k)).collect(),
            report: &report,
            no_signal: no_signal.as_ref(),
        },
    )?;

    let mut flags: Vec<Instability> = match report.best {
        Some(b) => report.records[b].flags.clone(),
        None => report.candidates.iter().flat_map(|&k| report.records[k].flags.clone()).collect(),
    };
    flags.sort();
    flags.dedup();
    Ok(Outcome {
        files: out.finish()?,
        flags,
    })
}

#[derive(Serialize)]
struct PredictionRowJson {
    model: String,
    eta: usize,
    n: usize,
    n_pred: usize,
    z: f64,
    z_pred: Option<f64>,
    m_pred: Option<f64>,
    freqs: Vec<f64>,
    flags: Vec<&'static str>,
}

#[derive(Serialize)]
struct PredictionJson {
    generator: String,
    split: usize,
    rows: Vec<PredictionRowJson>,
}

/// `dcm predict`: fit the first `split` points, score the rest.
pub fn run_predict(ctl: &ControlFile) -> Result<Outcome, CliError> {
    let split = ctl.split.ok_or_else(|| CliError::config("split", "missing".into()))?;
    let specs = ctl.specs()?;
    let cfg = ctl.analysis()?;
    let ts = load_data(ctl)?;
    if split < 2 || split > ts.len() {
        return Err(CliError::config("split", format!("need 2 <= split <= {}, got {split}", ts.len())));
    }
    let reports = prediction_test(&ts, split, &specs, &cfg).map_err(CliError::analysis)?;

    let mut out = Writer::new(&ctl.output, &ctl.path);
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.spec.eta().to_string(),
                r.n.to_string(),
                r.n_pred.to_string(),
                num(r.z),
                opt(r.z_pred),
                opt(r.m_pred),
                flag_list(&r.flags),
            ]
        })
        .collect();
    out.csv(
        "prediction.csv",
        &[format!("split={split}")],
        &["model", "eta", "n", "n_pred", "z", "z_pred", "m_pred", "flags"],
        &rows,
    );
    if split < ts.len() {
        let labels: Vec<String> = reports.iter().map(|r| format!("g[{}]", r.label)).collect();
        let mut cols = vec!["t", "y"];
        cols.extend(labels.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = (split..ts.len())
            .enumerate()
            .map(|(k, i)| {
                let mut row = vec![num(ts.times()[i]), num(ts.values()[i])];
                row.extend(reports.iter().map(|r| num(r.predicted[k])));
                row
            })
            .collect();
        out.csv("prediction_curve.csv", &[format!("split={split}")], &cols, &rows);
    }
    out.json(
        "prediction.json",
        &PredictionJson {
            generator: generator(),
            split,
            rows: reports
                .iter()
                .map(|r| PredictionRowJson {
                    model: r.label.clone(),
                    eta: r.spec.eta(),
                    n: r.n,
                    n_pred: r.n_pred,
                    z: r.z,
                    z_pred: r.z_pred,
                    m_pred: r.m_pred,
                    freqs: r.beta.freqs.clone(),
                    flags: flag_codes(&r.flags),
                })
                .collect(),
        },
    )?;
    let mut flags: Vec<Instability> = reports.iter().flat_map(|r| r.flags.clone()).collect();
    flags.sort();
    flags.dedup();
    Ok(Outcome {
        files: out.finish()?,
        flags,
    })
}

/// `dcm simulate`: write one of the seven model families to a data file.
pub fn run_simulate(ctl: &ControlFile) -> Result<Outcome, CliError> {
    let spec = ctl.simulation()?;
    let ts = simulate(&spec).map_err(CliError::analysis)?;
    let header = [
        format!("dcm {VERSION} control={}", ctl.path.display()),
        format!("model={} n={} sn={} seed={}", spec.model, spec.n, spec.sn, spec.seed),
    ];
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut out = Writer::new(&ctl.output, &ctl.path);
    out.raw(&file_name(&spec), dcm_core::series::format_series(&ts, &header));
    Ok(Outcome {
        files: out.finish()?,
        flags: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Run,
    Dft,
    Ladder,
    Predict,
    Simulate,
}

/// Command-line overrides of control-file values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

/// Loads the control file, applies overrides and runs `verb`.
pub fn execute(verb: Verb, control: &Path, overrides: Overrides) -> Result<Outcome, CliError> {
    let mut ctl = ControlFile::load(control)?;
    if let Some(w) = overrides.workers {
        ctl.workers = w;
    }
    if let Some(s) = overrides.seed {
        ctl.seed = s;
    }
    match verb {
        Verb::Run => run_dcm(&ctl),
        Verb::Dft => run_dft(&ctl),
        Verb::Ladder => run_ladder(&ctl),
        Verb::Predict => run_predict(&ctl),
        Verb::Simulate => run_simulate(&ctl),
    }
}
