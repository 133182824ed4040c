//! Acceptance criteria 1-10. Each test prints one `criterion N: PASS|FAIL`
//! line to stderr (uncaptured) before asserting.

use std::io::Write as _;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use dcm_core::analysis::{analyze, AnalysisConfig};
use dcm_core::bootstrap::{BootstrapConfig, Instability};
use dcm_core::dft::{dft_grid, prewhiten};
use dcm_core::fit::{Problem, Weighting};
use dcm_core::model::{Frame, ModelSpec, SignalSummary};
use dcm_core::search::{linear_grid, long_search, SearchConfig};
use dcm_core::select::{
    fisher_test, model_ladder, no_signal_test, prediction_test, ModelRecord, Verdict, DEFAULT_GAMMA,
};
use dcm_core::series::{write_series, TimeSeries};
use dcm_core::simulate::{model_definition, model_truth, simulate, SimulationSpec};

fn report(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n}: {verdict} {detail}");
}

fn sim(model: u8, n: usize, sn: f64, seed: u64) -> TimeSeries<f64> {
    simulate(&SimulationSpec { model, n, sn, seed }).unwrap()
}

fn record(label: &str, eta: usize, stat: f64) -> ModelRecord {
    ModelRecord {
        label: label.into(),
        signals: 0,
        harmonics: 1,
        trend_order: 0,
        eta,
        statistic: stat,
        z: 0.0,
        flags: Vec::new(),
    }
}

fn sig_round(v: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits - 1 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}

#[test]
fn criterion_01_fisher_arithmetic() {
    let start = Instant::now();
    let m1 = |chi2| record("g_{1,1,-1}", 3, chi2);
    let m2 = record("g_{1,1,0}", 4, 84.7422);
    let m3 = record("g_{1,1,1}", 5, 83.8104);
    let m4 = record("g_{1,1,2}", 6, 83.7686);

    // Table 2 prints chi2 = 738 for M1, three significant digits, so F is
    // only determined to within that rounding: check that the published
    // F = 733 lies in the image of [737.5, 738.5].
    let lo = fisher_test(&m1(737.5), &m2, 100, DEFAULT_GAMMA).unwrap();
    let hi = fisher_test(&m1(738.5), &m2, 100, DEFAULT_GAMMA).unwrap();
    let f12 = fisher_test(&m1(738.0), &m2, 100, DEFAULT_GAMMA).unwrap();
    let f23 = fisher_test(&m2, &m3, 100, DEFAULT_GAMMA).unwrap();
    let f34 = fisher_test(&m3, &m4, 100, DEFAULT_GAMMA).unwrap();
    let (f_lo, f_hi) = (lo.f.unwrap(), hi.f.unwrap());
    let ok_733 = sig_round(f_lo, 3) <= 733.0 && sig_round(f_hi, 3) >= 733.0;
    let ok_23 = sig_round(f23.f.unwrap(), 5) == 1.0451;
    let ok_34 = sig_round(f34.f.unwrap(), 3) == 0.0464;
    let ok_qf = f12.qf.unwrap() < 1e-16 && f12.verdict == Verdict::RejectH0;
    let elapsed = start.elapsed().as_secs_f64();
    let pass = ok_733 && ok_23 && ok_34 && ok_qf && elapsed < 1.0;
    report(
        1,
        pass,
        &format!(
            "F12 in [{f_lo:.2}, {f_hi:.2}] F23={:.5} F34={:.4} QF12={:e} ({elapsed:.3}s)",
            f23.f.unwrap(),
            f34.f.unwrap(),
            f12.qf.unwrap()
        ),
    );
    assert!(pass);
}

fn dcm() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dcm"));
    cmd.stdout(Stdio::null());
    cmd
}

fn write_control(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn criterion_02_model1_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("Model1n100SN100.dat");
    write_series(&data, &sim(1, 100, 100.0, 21), &["Model 1"]).unwrap();
    let ctl = dir.path().join("dcmModel1n100SN100.ctl");
    write_control(
        &ctl,
        "data = Model1n100SN100.dat\noutput = out\nK1 = 1\nK2 = 1\nK3 = 0\nPmin = 0.63\nPmax = 5.70\nnL = 200\nnS = 200\nnB = 100\nworkers = 1\n",
    );
    let start = Instant::now();
    let status = dcm().args(["run", "--control"]).arg(&ctl).status().unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let params: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/params.json")).unwrap()).unwrap();
    let s = &params["summary"]["signals"][0];
    let p = s["period"].as_f64().unwrap();
    let a = s["amplitude"].as_f64().unwrap();
    let tmax = s["t_max1"].as_f64().unwrap();
    let m0 = params["summary"]["trend"][0].as_f64().unwrap();
    let truth = model_truth(1).unwrap();
    let pass = status.success()
        && (p - truth.signals[0].period).abs() <= 0.06
        && (a - truth.signals[0].amplitude).abs() <= 0.08
        && (tmax - truth.signals[0].t_max1.unwrap()).abs() <= 0.005
        && (m0 - truth.trend[0]).abs() <= 0.05
        && elapsed < 10.0;
    report(2, pass, &format!("P1={p:.4} A1={a:.4} tmax={tmax:.4} M0={m0:.4} ({elapsed:.2}s)"));
    assert!(pass);
}

fn model3_data() -> TimeSeries<f64> {
    sim(3, 100, 100.0, 7)
}

#[test]
fn criterion_03_model3_close_frequencies() {
    let ts = model3_data();
    let spec = ModelSpec::from_periods(2, 1, 0, 0.053, 0.480).unwrap();
    let cfg = AnalysisConfig {
        search: SearchConfig {
            long_grid: 200,
            workers: 4,
            ..Default::default()
        },
        bootstrap: None,
        weighting: None,
    };
    let start = Instant::now();
    let a = analyze(&ts, &spec, &cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let p1 = a.summary.signals[0].period;
    let p2 = a.summary.signals[1].period;
    let pass = (p1 - 0.16).abs() <= 0.002 && (p2 - 0.17).abs() <= 0.003 && elapsed < 60.0;
    report(3, pass, &format!("P1={p1:.5} P2={p2:.5} ({elapsed:.2}s)"));
    assert!(pass);
}

#[test]
fn criterion_04_dft_failure_modes() {
    let first_period = |ts: &TimeSeries<f64>, p_min: f64, p_max: f64| {
        let f0 = ts.span_stats().unwrap().f0;
        let grid = dft_grid(1.0 / p_max, 1.0 / p_min, f0);
        1.0 / prewhiten(ts, 0, 1, &grid).unwrap()[0].best_f
    };
    let p3 = first_period(&model3_data(), 0.053, 0.480);
    let near_mean = (p3 / 0.165 - 1.0).abs() <= 0.10;
    let near_truth = (p3 / 0.16 - 1.0).abs() <= 0.02 || (p3 / 0.17 - 1.0).abs() <= 0.02;
    let p6 = first_period(&sim(6, 100, 100.0, 7), 0.053, 0.480);
    let half = (p6 / 0.080 - 1.0).abs() <= 0.05;
    let pass = near_mean && !near_truth && half;
    report(4, pass, &format!("Model 3 first pass P={p3:.5}; Model 6 first pass P={p6:.5}"));
    assert!(pass);
}

fn table2_specs() -> Vec<ModelSpec<f64>> {
    let mut specs = Vec::new();
    for k1 in 1..=2 {
        for k3 in -1..=2 {
            specs.push(ModelSpec::from_periods(k1, 1, k3, 0.63, 5.70).unwrap());
        }
    }
    specs
}

#[test]
fn criterion_05_ladder_selection() {
    let specs = table2_specs();
    let cfg = AnalysisConfig {
        search: SearchConfig {
            long_grid: 100,
            short_grid: 40,
            workers: 4,
            ..Default::default()
        },
        bootstrap: Some(BootstrapConfig {
            rounds: 30,
            short_grid: Some(20),
            ..Default::default()
        }),
        weighting: None,
    };
    let mut pass = true;
    let mut detail = Vec::new();
    for seed in 1..=5 {
        let ts = sim(1, 100, 100.0, seed);
        let (_, r) = model_ladder(&ts, &specs, &cfg, DEFAULT_GAMMA).unwrap();
        let best = r.best.map(|b| r.records[b].label.clone()).unwrap_or_else(|| "none".into());
        let unflagged: Vec<&str> = r
            .records
            .iter()
            .filter(|m| m.signals == 2 && m.flags.is_empty())
            .map(|m| m.label.as_str())
            .collect();
        pass &= best == "g_{1,1,0}" && unflagged.is_empty();
        detail.push(format!("seed {seed}: best {best}, unflagged K1=2 {unflagged:?}"));
    }
    report(5, pass, &detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_06_no_signal_rejection() {
    let ts = sim(1, 100, 100.0, 606);
    let spec = ModelSpec::from_periods(1, 1, 0, 0.63, 5.70).unwrap();
    let cfg = AnalysisConfig {
        bootstrap: None,
        ..Default::default()
    };
    let a = analyze(&ts, &spec, &cfg).unwrap();
    let r = no_signal_test(&ts, &ModelRecord::from_analysis(&a), 3, a.weighting, DEFAULT_GAMMA).unwrap();
    let mut pass = r.signal_detected;
    let mut detail = Vec::new();
    for (poly, c) in r.polynomials.iter().zip(&r.comparisons) {
        // Equal parameter counts (K3 = 3 against eta = 4) have no F test;
        // rejection is the chi-square comparison.
        let rejected = match c.qf {
            Some(q) => q < 1e-12 && c.verdict == Verdict::RejectH0,
            None => poly.statistic > r.signal.statistic,
        };
        pass &= rejected;
        detail.push(format!(
            "{} chi2={:.1} QF={}",
            poly.label,
            poly.statistic,
            c.qf.map_or("n/a".into(), |q| format!("{q:e}"))
        ));
    }
    report(6, pass, &detail.join("; "));
    assert!(pass);
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

#[test]
fn criterion_07_prediction_ordering() {
    let base = ModelSpec::from_periods(2, 1, 0, 0.053, 0.480).unwrap();
    let specs = [base.with_signals(1), base, base.with_signals(3)];
    let cfg = AnalysisConfig {
        search: SearchConfig {
            long_grid: 80,
            short_grid: 25,
            workers: 4,
            ..Default::default()
        },
        bootstrap: None,
        weighting: None,
    };
    let mut z = [Vec::new(), Vec::new(), Vec::new()];
    for seed in 1..=10 {
        let r = prediction_test(&sim(3, 50, 10.0, seed), 40, &specs, &cfg).unwrap();
        for (k, row) in r.iter().enumerate() {
            z[k].push(row.z_pred.unwrap());
        }
    }
    let [m1, m2, m3] = z.map(median);
    let pass = m2 < m3 && m3 < m1 && m1 > 3.0 * m2;
    report(7, pass, &format!("median zPred g110={m1:.3} g210={m2:.3} g310={m3:.3}"));
    assert!(pass);
}

/// Gauss-Jordan on the normal equations; independent of the QR path.
fn normal_equations_z(a_cols: &[Vec<f64>], y: &[f64], w: &[f64]) -> f64 {
    let m = a_cols.len();
    let mut ata = vec![vec![0.0; m + 1]; m];
    for i in 0..m {
        for j in 0..m {
            ata[i][j] = (0..y.len()).map(|k| w[k] * a_cols[i][k] * a_cols[j][k]).sum();
        }
        ata[i][m] = (0..y.len()).map(|k| w[k] * a_cols[i][k] * y[k]).sum();
    }
    for c in 0..m {
        let p = (c..m).max_by(|&a, &b| ata[a][c].abs().total_cmp(&ata[b][c].abs())).unwrap();
        ata.swap(c, p);
        let d = ata[c][c];
        for v in ata[c].iter_mut() {
            *v /= d;
        }
        let pivot = ata[c].clone();
        for (r, row) in ata.iter_mut().enumerate() {
            if r != c {
                let f = row[c];
                for (v, p) in row.iter_mut().zip(&pivot) {
                    *v -= f * p;
                }
            }
        }
    }
    let x: Vec<f64> = ata.iter().map(|row| row[m]).collect();
    let chi2: f64 = (0..y.len())
        .map(|k| {
            let g: f64 = (0..m).map(|i| x[i] * a_cols[i][k]).sum();
            w[k] * (y[k] - g) * (y[k] - g)
        })
        .sum();
    (chi2 / y.len() as f64).sqrt()
}

#[test]
fn criterion_08_oracle_equivalence() {
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut tuples = 0usize;
    for (seed, n, nl) in [(1u64, 20usize, 30usize), (2, 16, 25), (3, 12, 30)] {
        let ts = sim(1, n, 20.0, seed);
        let spec = ModelSpec::new(2, 1, 1, 0.3, 4.0).unwrap();
        let problem = Problem::new(&ts, &spec, Weighting::ChiSquare).unwrap();
        let cfg = SearchConfig {
            long_grid: nl,
            workers: 4,
            ..Default::default()
        };
        let fast = long_search(&problem, &cfg).unwrap();

        let grid = linear_grid(spec.f_min, spec.f_max, nl);
        let frame = Frame::from(&ts.span_stats().unwrap());
        let w: Vec<f64> = ts.errors().unwrap().iter().map(|s| 1.0 / (s * s)).collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for i in 0..nl {
            for j in i + 1..nl {
                let freqs = [grid[i], grid[j]];
                let z = problem.fit(&freqs).unwrap().z;
                if best.as_ref().is_none_or(|(bz, _)| z < *bz) {
                    best = Some((z, freqs.to_vec()));
                }
                let mut cols = Vec::new();
                for &f in &freqs {
                    let (c, s): (Vec<f64>, Vec<f64>) = ts
                        .times()
                        .iter()
                        .map(|&t| (std::f64::consts::TAU * f * t).sin_cos())
                        .map(|(s, c)| (c, s))
                        .unzip();
                    cols.push(c);
                    cols.push(s);
                }
                cols.push(vec![1.0; n]);
                cols.push(ts.times().iter().map(|&t| frame.scaled(t)).collect());
                let oracle = normal_equations_z(&cols, ts.values(), &w);
                let rel = (oracle - z).abs() / oracle;
                worst = worst.max(rel);
                pass &= rel <= 1e-10;
                tuples += 1;
            }
        }
        let (bz, bf) = best.unwrap();
        pass &= fast.z_min.to_bits() == bz.to_bits();
        pass &= fast.best_freqs.iter().zip(&bf).all(|(a, b)| a.to_bits() == b.to_bits());
    }
    report(8, pass, &format!("{tuples} tuples, worst relative z error {worst:e}"));
    assert!(pass);
}

#[test]
fn criterion_09_determinism_under_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    write_series(dir.path().join("m3.dat"), &sim(3, 100, 100.0, 9), &[]).unwrap();
    let ctl = dir.path().join("dcm.ctl");
    write_control(
        &ctl,
        "data = m3.dat\noutput = out\nK1 = 2\nK2 = 1\nK3 = 0\nPmin = 0.053\nPmax = 0.48\nnL = 120\nnS = 60\nnB = 20\nnB_grid = 20\nseed = 5\n",
    );
    let mut outputs = Vec::new();
    for workers in ["1", "2", "8"] {
        let status = dcm()
            .args(["run", "--workers", workers, "--control"])
            .arg(&ctl)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(dir.path().join("out/params.json")).unwrap());
    }
    let pass = outputs.windows(2).all(|w| w[0] == w[1]);
    report(9, pass, &format!("params.json sizes {:?}", outputs.iter().map(Vec::len).collect::<Vec<_>>()));
    assert!(pass);
}

/// Summary in the order of the published table rows.
fn table7_rows(s: &SignalSummary<f64>) -> Vec<f64> {
    let mut v = Vec::new();
    for x in &s.signals {
        v.extend([x.period, x.amplitude]);
        v.extend([x.t_min1, x.t_min2, x.t_max1, x.t_max2].map(Option::unwrap));
    }
    v.extend(&s.trend);
    v
}

#[test]
fn criterion_10_extreme_regimes() {
    // Table 7, n = 1000, SN = 10^6 errors. The printed sigma of P2 (0.00034)
    // is smaller than the n = 10^4 value (0.0014) and inconsistent with the
    // printed estimate 1.3986; we read it as 0.0034.
    let sigma = [
        0.00063, 0.14, 0.0043, 0.0067, 0.0039, 0.0050, 0.0034, 0.095, 0.0090, 0.012, 0.0039, 0.0042, 0.035, 0.0039,
        0.035,
    ];
    let ts = sim(7, 1000, 1e6, 2);
    let spec = model_definition(7).unwrap().spec;
    let cfg = AnalysisConfig {
        search: SearchConfig {
            long_grid: 100,
            short_grid: 40,
            workers: 4,
            ..Default::default()
        },
        bootstrap: Some(BootstrapConfig {
            rounds: 20,
            short_grid: Some(15),
            ..Default::default()
        }),
        weighting: None,
    };
    let a = analyze(&ts, &spec, &cfg).unwrap();
    let got = table7_rows(&a.summary);
    let truth = table7_rows(&model_truth(7).unwrap());
    // Which of two near-equal extrema counts as primary can flip between
    // fits, so each (primary, secondary) epoch pair is matched either way.
    let dev = |k: usize| (got[k] - truth[k]).abs() / (3.0 * sigma[k]);
    let pair = |a: usize, b: usize| {
        let straight = dev(a).max(dev(b));
        let swapped = ((got[a] - truth[b]).abs() / (3.0 * sigma[b])).max((got[b] - truth[a]).abs() / (3.0 * sigma[a]));
        straight.min(swapped)
    };
    let mut worst = [0, 1, 6, 7, 12, 13, 14].map(dev).into_iter().fold(0.0f64, f64::max);
    for (a, b) in [(2, 3), (4, 5), (8, 9), (10, 11)] {
        worst = worst.max(pair(a, b));
    }
    let model7_ok = worst <= 1.0;

    // Model 5 at high n and moderate SN may fail, but must finish and flag.
    let ts5 = sim(5, 10_000, 1e3, 1);
    let spec5 = model_definition(5).unwrap().spec;
    let a5 = analyze(&ts5, &spec5, &cfg);
    let (model5_ok, m5) = match &a5 {
        Ok(r) => {
            let sig = &r.bootstrap.as_ref().unwrap().summary_sigma;
            let amp_sigma: Vec<f64> = sig.signals.iter().map(|s| s.amplitude).collect();
            let ok = r.flags.contains(&Instability::DispersingAmplitudes);
            (ok, format!("flags {:?} sigma(A) {amp_sigma:?}", r.flags))
        }
        Err(e) => (false, format!("error {e}")),
    };
    let pass = model7_ok && model5_ok;
    report(10, pass, &format!("Model 7 worst |dev|/(3 sigma) = {worst:.3}; Model 5 {m5}"));
    assert!(pass);
}
