//! Model selection: Fisher tests between nested orders, the model ladder,
//! the no-signal test and the prediction test.

use serde::Serialize;

use crate::analysis::{analyze, Analysis, AnalysisConfig};
use crate::bootstrap::Instability;
use crate::error::{Error, Result};
use crate::fit::{Problem, Weighting};
use crate::model::{eval_model, BetaVector, Frame, ModelSpec};
use crate::scalar::Real;
use crate::stats::f_survival;
use crate::series::TimeSeries;

/// Default critical level for rejecting the simpler model.
pub const DEFAULT_GAMMA: f64 = 0.001;

/// Smallest critical level we print as a number.
pub const QF_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// The complex model is significantly better.
    RejectH0,
    RetainH0,
    /// Equal parameter counts; only the statistics can be compared.
    NotApplicable,
}

/// One fitted model as seen by the selection step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRecord {
    pub label: String,
    pub signals: usize,
    pub harmonics: usize,
    pub trend_order: i32,
    pub eta: usize,
    /// `chi2` or `R`, whichever the fit minimised.
    pub statistic: f64,
    pub z: f64,
    pub flags: Vec<Instability>,
}

impl ModelRecord {
    pub fn new<T: Real>(spec: &ModelSpec<T>, statistic: f64, z: f64, flags: Vec<Instability>) -> Self {
        Self {
            label: spec.label(),
            signals: spec.signals,
            harmonics: spec.harmonics,
            trend_order: spec.trend_order,
            eta: spec.eta(),
            statistic,
            z,
            flags,
        }
    }

    pub fn from_analysis<T: Real>(a: &Analysis<T>) -> Self {
        Self::new(&a.spec, a.refined.fit.statistic().as_f64(), a.refined.fit.z.as_f64(), a.flags.clone())
    }

    pub fn is_stable(&self) -> bool {
        self.flags.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FisherComparison {
    pub simple: String,
    pub complex: String,
    pub eta_simple: usize,
    pub eta_complex: usize,
    pub stat_simple: f64,
    pub stat_complex: f64,
    /// Absent when the parameter counts are equal.
    pub f: Option<f64>,
    pub qf: Option<f64>,
    pub verdict: Verdict,
}

impl FisherComparison {
    /// True when the data prefer the complex model: H0 rejected, or equal
    /// parameter counts and a strictly smaller statistic.
    pub fn complex_preferred(&self) -> bool {
        match self.verdict {
            Verdict::RejectH0 => true,
            Verdict::RetainH0 => false,
            Verdict::NotApplicable => self.stat_complex < self.stat_simple,
        }
    }
}

/// `F = (s1/s2 - 1) (n - eta2 - 1) / (eta2 - eta1)` with `nu1 = eta2 - eta1`,
/// `nu2 = n - eta2`, and `QF = P(F' > F)`.
///
/// Equal counts give `Verdict::NotApplicable`; a `simple` model with more
/// parameters than `complex` is a contract error.
pub fn fisher_test(simple: &ModelRecord, complex: &ModelRecord, n: usize, gamma: f64) -> Result<FisherComparison> {
    let (eta1, eta2) = (simple.eta, complex.eta);
    if eta1 > eta2 {
        return Err(Error::Contract(format!(
            "simple model {} has more parameters ({eta1}) than {} ({eta2})",
            simple.label, complex.label
        )));
    }
    let mut out = FisherComparison {
        simple: simple.label.clone(),
        complex: complex.label.clone(),
        eta_simple: eta1,
        eta_complex: eta2,
        stat_simple: simple.statistic,
        stat_complex: complex.statistic,
        f: None,
        qf: None,
        verdict: Verdict::NotApplicable,
    };
    if eta1 == eta2 {
        return Ok(out);
    }
    if n <= eta2 + 1 {
        return Err(Error::DegenerateDof { n, eta: eta2 });
    }
    if !(simple.statistic.is_finite() && complex.statistic.is_finite()) {
        return Err(Error::NonFinite("fit statistic"));
    }
    let nu1 = (eta2 - eta1) as f64;
    let nu2 = (n - eta2) as f64;
    let f = if complex.statistic > 0.0 {
        (simple.statistic / complex.statistic - 1.0) * (n - eta2 - 1) as f64 / nu1
    } else if simple.statistic > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let qf = f_survival(f, nu1, nu2);
    out.f = Some(f);
    out.qf = Some(qf);
    out.verdict = if qf < gamma { Verdict::RejectH0 } else { Verdict::RetainH0 };
    Ok(out)
}

/// `QF` for display; values below `1e-16` print as `<1e-16`.
pub fn format_qf(qf: Option<f64>) -> String {
    match qf {
        None => "n/a".into(),
        Some(q) if q < QF_FLOOR => format!("<{QF_FLOOR:e}"),
        Some(q) => format!("{q:.6e}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderReport {
    pub n: usize,
    pub gamma: f64,
    pub records: Vec<ModelRecord>,
    /// Every pair `(i, j)` with `i < j` in record order, simple model first.
    pub comparisons: Vec<FisherComparison>,
    /// Index of the single best model, if the tests identify one.
    pub best: Option<usize>,
    /// Models that are never beaten; more than one means the tests are
    /// inconclusive.
    pub candidates: Vec<usize>,
}

/// Runs every pairwise test and picks the model that is preferred over every
/// other. Models carrying instability flags are not eligible unless all
/// models are flagged.
pub fn ladder_from_records(records: Vec<ModelRecord>, n: usize, gamma: f64) -> Result<LadderReport> {
    let m = records.len();
    let any_stable = records.iter().any(ModelRecord::is_stable);
    let eligible: Vec<bool> = records.iter().map(|r| r.is_stable() || !any_stable).collect();
    let mut comparisons = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    // beaten[i]: some other eligible model is preferred over i.
    let mut beaten = vec![false; m];
    // dominant[i]: i is preferred over every other eligible model.
    let mut dominant = eligible.clone();
    for i in 0..m {
        for j in i + 1..m {
            let (s, x) = if records[i].eta <= records[j].eta { (i, j) } else { (j, i) };
            let c = fisher_test(&records[s], &records[x], n, gamma)?;
            if eligible[s] && eligible[x] {
                let tie = c.verdict == Verdict::NotApplicable && c.stat_complex == c.stat_simple;
                if tie {
                    dominant[s] = false;
                    dominant[x] = false;
                } else if c.complex_preferred() {
                    beaten[s] = true;
                    dominant[s] = false;
                } else {
                    beaten[x] = true;
                    dominant[x] = false;
                }
            }
            comparisons.push(c);
        }
    }
    let best = (0..m).find(|&i| dominant[i]);
    let candidates = match best {
        Some(b) => vec![b],
        None => (0..m).filter(|&i| eligible[i] && !beaten[i]).collect(),
    };
    Ok(LadderReport {
        n,
        gamma,
        records,
        comparisons,
        best,
        candidates,
    })
}

/// Analyses every spec on `ts` and ranks them.
pub fn model_ladder<T: Real>(
    ts: &TimeSeries<T>,
    specs: &[ModelSpec<T>],
    cfg: &AnalysisConfig,
    gamma: f64,
) -> Result<(Vec<Analysis<T>>, LadderReport)> {
    if specs.is_empty() {
        return Err(Error::Config("model ladder needs at least one model".into()));
    }
    let analyses = specs.iter().map(|s| analyze(ts, s, cfg)).collect::<Result<Vec<_>>>()?;
    let records = analyses.iter().map(ModelRecord::from_analysis).collect();
    let report = ladder_from_records(records, ts.len(), gamma)?;
    Ok((analyses, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoSignalReport {
    pub signal: ModelRecord,
    pub polynomials: Vec<ModelRecord>,
    /// One comparison per polynomial, in the same order.
    pub comparisons: Vec<FisherComparison>,
    /// The signal model beats every polynomial.
    pub signal_detected: bool,
}

/// Compares a signal model with pure polynomials of order `0..=max_order`.
pub fn no_signal_test<T: Real>(
    ts: &TimeSeries<T>,
    signal: &ModelRecord,
    max_order: i32,
    weighting: Weighting,
    gamma: f64,
) -> Result<NoSignalReport> {
    if max_order < 0 {
        return Err(Error::Config(format!("polynomial order must be >= 0, got {max_order}")));
    }
    let mut polynomials = Vec::new();
    let mut comparisons = Vec::new();
    let mut signal_detected = true;
    for k in 0..=max_order {
        let spec = ModelSpec::<T>::trend(k)?;
        if ts.len() < spec.eta() {
            return Err(Error::Underdetermined {
                points: ts.len(),
                params: spec.eta(),
            });
        }
        let fit = Problem::new(ts, &spec, weighting)?.fit(&[])?;
        let rec = ModelRecord::new(&spec, fit.statistic().as_f64(), fit.z.as_f64(), Vec::new());
        // When the polynomial has more parameters it plays the complex role.
        let (c, signal_wins) = if rec.eta <= signal.eta {
            let c = fisher_test(&rec, signal, ts.len(), gamma)?;
            let w = c.complex_preferred();
            (c, w)
        } else {
            let c = fisher_test(signal, &rec, ts.len(), gamma)?;
            let w = !c.complex_preferred();
            (c, w)
        };
        signal_detected &= signal_wins;
        polynomials.push(rec);
        comparisons.push(c);
    }
    Ok(NoSignalReport {
        signal: signal.clone(),
        polynomials,
        comparisons,
        signal_detected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionReport<T> {
    pub label: String,
    pub spec: ModelSpec<T>,
    /// Points in the predictive (fitted) part.
    pub n: usize,
    /// Points in the predicted part.
    pub n_pred: usize,
    pub z: T,
    /// Absent when there is nothing to predict.
    pub z_pred: Option<T>,
    /// Mean of the model over the predicted times.
    pub m_pred: Option<T>,
    pub beta: BetaVector<T>,
    /// Frame of the predictive part; used to extrapolate.
    pub frame: Frame<T>,
    pub flags: Vec<Instability>,
    /// Model values at the predicted times.
    pub predicted: Vec<T>,
}

/// Fits each spec to the first `split` points and scores it on the rest.
///
/// `z_pred` uses the same weighting as the fit. The ranking by `z_pred`
/// does not change if all predicted errors are scaled by a common factor.
pub fn prediction_test<T: Real>(
    ts: &TimeSeries<T>,
    split: usize,
    specs: &[ModelSpec<T>],
    cfg: &AnalysisConfig,
) -> Result<Vec<PredictionReport<T>>> {
    let (head, tail) = if split >= ts.len() {
        (ts.clone(), None)
    } else {
        let (h, t) = ts.split_at(split)?;
        (h, Some(t))
    };
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        if head.len() < spec.eta() + 2 {
            return Err(Error::Underdetermined {
                points: head.len(),
                params: spec.eta() + 2,
            });
        }
        let a = analyze(&head, spec, cfg)?;
        let (z_pred, m_pred, predicted) = match &tail {
            None => (None, None, Vec::new()),
            Some(tail) => {
                let g = eval_model(spec, &a.refined.beta, &a.frame, tail.times())?;
                let z = prediction_z(tail, &g, a.weighting)?;
                let m = mean(&g);
                (Some(z), Some(m), g)
            }
        };
        out.push(PredictionReport {
            label: spec.label(),
            spec: *spec,
            n: head.len(),
            n_pred: tail.as_ref().map_or(0, |t| t.len()),
            z: a.refined.fit.z,
            z_pred,
            m_pred,
            beta: a.refined.beta.clone(),
            frame: a.frame,
            flags: a.flags.clone(),
            predicted,
        });
    }
    Ok(out)
}

fn prediction_z<T: Real>(tail: &TimeSeries<T>, g: &[T], weighting: Weighting) -> Result<T> {
    let mut sum = T::zero();
    match (weighting, tail.errors()) {
        (Weighting::ChiSquare, Some(sig)) => {
            for ((y, g), s) in tail.values().iter().zip(g).zip(sig) {
                let r = (*y - *g) / *s;
                sum += r * r;
            }
        }
        (Weighting::ChiSquare, None) => {
            return Err(Error::Contract("chi-square prediction needs errors on the predicted points".into()));
        }
        (Weighting::Unweighted, _) => {
            for (y, g) in tail.values().iter().zip(g) {
                let r = *y - *g;
                sum += r * r;
            }
        }
    }
    Ok((sum / T::from_usize_lossy(tail.len())).sqrt())
}

fn mean<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &b| a + b) / T::from_usize_lossy(v.len().max(1))
}

/// Mean of the model over `samples` evenly spaced times in `[start, end]`.
pub fn predicted_mean<T: Real>(
    spec: &ModelSpec<T>,
    beta: &BetaVector<T>,
    frame: &Frame<T>,
    start: T,
    end: T,
    samples: usize,
) -> Result<T> {
    if samples == 0 || !(end >= start) {
        return Err(Error::Config(format!(
            "prediction window needs samples >= 1 and end >= start, got [{start}, {end}] with {samples}"
        )));
    }
    let t: Vec<T> = if samples == 1 {
        vec![start]
    } else {
        let step = (end - start) / T::from_usize_lossy(samples - 1);
        (0..samples).map(|i| start + step * T::from_usize_lossy(i)).collect()
    };
    Ok(mean(&eval_model(spec, beta, frame, &t)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::BootstrapConfig;
    use crate::search::SearchConfig;
    use crate::simulate::{model_definition, simulate, SimulationSpec};

    fn rec(label: &str, eta: usize, stat: f64) -> ModelRecord {
        ModelRecord {
            label: label.into(),
            signals: 0,
            harmonics: 1,
            trend_order: 0,
            eta,
            statistic: stat,
            z: (stat / 100.0).sqrt(),
            flags: Vec::new(),
        }
    }

    fn close(a: f64, b: f64, sig: f64) -> bool {
        ((a - b) / b).abs() < sig
    }

    // Published chi-square values of the Model 1 ladder, n = 100.
    fn table2() -> Vec<ModelRecord> {
        [
            ("g_{1,1,-1}", 3, 738.0),
            ("g_{1,1,0}", 4, 84.7422),
            ("g_{1,1,1}", 5, 83.8104),
            ("g_{1,1,2}", 6, 83.7686),
            ("g_{2,1,-1}", 6, 83.8123),
            ("g_{2,1,0}", 7, 83.7716),
            ("g_{2,1,1}", 8, 83.7176),
            ("g_{2,1,2}", 9, 81.2721),
        ]
        .iter()
        .map(|&(l, e, s)| rec(l, e, s))
        .collect()
    }

    #[test]
    fn replays_published_f_values() {
        let t = table2();
        let c = fisher_test(&t[0], &t[1], 100, DEFAULT_GAMMA).unwrap();
        assert!(close(c.f.unwrap(), 733.0, 2e-3), "{:?}", c.f);
        assert_eq!(c.verdict, Verdict::RejectH0);
        assert_eq!(format_qf(c.qf), "<1e-16");

        let c = fisher_test(&t[1], &t[2], 100, DEFAULT_GAMMA).unwrap();
        assert!(close(c.f.unwrap(), 1.0451, 1e-3), "{:?}", c.f);
        assert!(close(c.qf.unwrap(), 0.309, 5e-3), "{:?}", c.qf);
        assert_eq!(c.verdict, Verdict::RetainH0);

        let c = fisher_test(&t[2], &t[3], 100, DEFAULT_GAMMA).unwrap();
        assert!(close(c.f.unwrap(), 0.0464, 2e-3), "{:?}", c.f);
        assert!(close(c.qf.unwrap(), 0.830, 5e-3), "{:?}", c.qf);

        let c = fisher_test(&t[2], &t[4], 100, DEFAULT_GAMMA).unwrap();
        assert!(close(c.f.unwrap(), -0.0021, 5e-2), "{:?}", c.f);
        assert_eq!(c.qf, Some(1.0));

        let c = fisher_test(&t[3], &t[4], 100, DEFAULT_GAMMA).unwrap();
        assert_eq!(c.verdict, Verdict::NotApplicable);
        assert_eq!(c.f, None);
        assert_eq!(format_qf(c.qf), "n/a");
    }

    #[test]
    fn swapped_roles_are_rejected() {
        let t = table2();
        assert!(matches!(fisher_test(&t[5], &t[1], 100, DEFAULT_GAMMA), Err(Error::Contract(_))));
        assert!(fisher_test(&t[1], &t[5], 100, DEFAULT_GAMMA).is_ok());
    }

    #[test]
    fn table2_ladder_picks_g110() {
        let report = ladder_from_records(table2(), 100, DEFAULT_GAMMA).unwrap();
        assert_eq!(report.best, Some(1));
        assert_eq!(report.candidates, vec![1]);
        assert_eq!(report.comparisons.len(), 28);
    }

    #[test]
    fn polynomial_table_against_g110() {
        let signal = rec("g_{1,1,0}", 4, 84.7422);
        let polys = [169260.0, 97076.0, 1820.0, 469.0, 85.0787, 84.1265, 83.7794, 81.3819];
        let c = fisher_test(&rec("p0", 1, polys[0]), &signal, 100, DEFAULT_GAMMA).unwrap();
        assert!(close(c.f.unwrap(), 63218.0, 1e-3), "{:?}", c.f);
        let c = fisher_test(&rec("p3", 4, polys[3]), &signal, 100, DEFAULT_GAMMA).unwrap();
        assert_eq!(c.verdict, Verdict::NotApplicable);
        assert_eq!(c.complex, "g_{1,1,0}");
        assert!(c.complex_preferred());
        let c = fisher_test(&signal, &rec("p4", 5, polys[4]), 100, DEFAULT_GAMMA).unwrap();
        assert!(close(c.f.unwrap(), -0.3718, 2e-3), "{:?}", c.f);
        assert_eq!(c.qf, Some(1.0));
    }

    #[test]
    fn degenerate_dof() {
        let a = rec("a", 3, 10.0);
        let b = rec("b", 9, 5.0);
        assert!(matches!(fisher_test(&a, &b, 10, DEFAULT_GAMMA), Err(Error::DegenerateDof { n: 10, eta: 9 })));
        assert!(fisher_test(&a, &b, 11, DEFAULT_GAMMA).is_ok());
    }

    #[test]
    fn flagged_models_are_not_eligible() {
        let mut t = table2();
        // Pretend the chosen model were unstable and g_{2,1,2} much better.
        t[1].flags.push(Instability::IntersectingFrequencies);
        t[7].statistic = 40.0;
        t[7].flags.push(Instability::LeakingPeriods);
        let r = ladder_from_records(t, 100, DEFAULT_GAMMA).unwrap();
        assert!(r.best.is_some_and(|b| b != 1 && b != 7));
        let mut all = table2();
        for rec in &mut all {
            rec.flags.push(Instability::DispersingAmplitudes);
        }
        assert_eq!(ladder_from_records(all, 100, DEFAULT_GAMMA).unwrap().best, Some(1));
    }

    #[test]
    fn tie_is_ambiguous() {
        let r = ladder_from_records(vec![rec("a", 4, 10.0), rec("b", 4, 10.0)], 50, DEFAULT_GAMMA).unwrap();
        assert_eq!(r.best, None);
        assert_eq!(r.candidates, vec![0, 1]);
    }

    #[test]
    fn no_signal_on_model1() {
        let ts = simulate(&SimulationSpec {
            model: 1,
            n: 100,
            sn: 100.0,
            seed: 2,
        })
        .unwrap();
        let def = model_definition(1).unwrap();
        let cfg = AnalysisConfig {
            bootstrap: None,
            ..Default::default()
        };
        let a = analyze(&ts, &def.spec, &cfg).unwrap();
        let report = no_signal_test(&ts, &ModelRecord::from_analysis(&a), 3, a.weighting, DEFAULT_GAMMA).unwrap();
        assert!(report.signal_detected);
        for c in &report.comparisons[..3] {
            assert!(c.qf.unwrap() < 1e-12);
        }
    }

    #[test]
    fn predicted_mean_of_constant() {
        let spec = ModelSpec::<f64>::trend(0).unwrap();
        let beta = BetaVector::new(vec![], vec![2.5]);
        let m = predicted_mean(&spec, &beta, &Frame::new(0.0, 1.0), 1.0, 2.0, 7).unwrap();
        assert_eq!(m, 2.5);
        assert!(predicted_mean(&spec, &beta, &Frame::new(0.0, 1.0), 1.0, 2.0, 0).is_err());
    }

    #[test]
    fn prediction_scale_invariance() {
        let ts = simulate(&SimulationSpec {
            model: 3,
            n: 50,
            sn: 10.0,
            seed: 4,
        })
        .unwrap();
        let def = model_definition(3).unwrap();
        let specs = [def.spec.with_signals(1), def.spec];
        let cfg = AnalysisConfig {
            search: SearchConfig {
                long_grid: 80,
                short_grid: 30,
                ..Default::default()
            },
            bootstrap: None::<BootstrapConfig>,
            weighting: None,
        };
        let base = prediction_test(&ts, 40, &specs, &cfg).unwrap();
        assert_eq!(base[0].n, 40);
        assert_eq!(base[0].n_pred, 10);
        let errs: Vec<f64> = ts.errors().unwrap().iter().enumerate().map(|(i, &s)| if i >= 40 { s * 3.0 } else { s }).collect();
        let scaled = TimeSeries::new(ts.times().to_vec(), ts.values().to_vec(), Some(errs)).unwrap();
        let other = prediction_test(&scaled, 40, &specs, &cfg).unwrap();
        let order = |r: &[PredictionReport<f64>]| r[0].z_pred.unwrap() < r[1].z_pred.unwrap();
        assert_eq!(order(&base), order(&other));
        for (a, b) in base.iter().zip(&other) {
            assert!((a.z_pred.unwrap() / b.z_pred.unwrap() - 3.0).abs() < 1e-9);
        }
    }
}
