//! Full DCM pipeline for one model: long search, short search, refinement,
//! bootstrap and instability flags.

use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap, diagnose_stability, BootstrapConfig, BootstrapReport, Instability, SearchBounds, SummarySigma};
use crate::error::Result;
use crate::fit::{Problem, Weighting};
use crate::model::{BetaVector, Frame, ModelSpec, SignalSummary, summarize_signals};
use crate::refine::{refine, RefinedModel};
use crate::scalar::Real;
use crate::search::{long_search_in_pool, short_search_in_pool, with_pool, Periodogram, SearchConfig};
use crate::series::{SpanStats, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub search: SearchConfig,
    /// `None` skips the bootstrap.
    pub bootstrap: Option<BootstrapConfig>,
    /// `None` picks chi-square when the series has errors.
    pub weighting: Option<Weighting>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            bootstrap: Some(BootstrapConfig::default()),
            weighting: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis<T> {
    pub spec: ModelSpec<T>,
    pub weighting: Weighting,
    pub stats: SpanStats<T>,
    pub frame: Frame<T>,
    /// Absent for pure trend models.
    pub long: Option<Periodogram<T>>,
    pub short: Option<Periodogram<T>>,
    pub refined: RefinedModel<T>,
    pub summary: SignalSummary<T>,
    pub bootstrap: Option<BootstrapReport<T>>,
    pub flags: Vec<Instability>,
}

impl<T: Real> Analysis<T> {
    pub fn n(&self) -> usize {
        self.refined.fit.residuals.len()
    }

    /// Model values at arbitrary times, in the frame of the analysed data.
    pub fn evaluate(&self, t: &[T]) -> Result<Vec<T>> {
        crate::model::eval_model(&self.spec, &self.refined.beta, &self.frame, t)
    }
}

/// Runs the whole pipeline for `spec` on `ts`.
pub fn analyze<T: Real>(ts: &TimeSeries<T>, spec: &ModelSpec<T>, cfg: &AnalysisConfig) -> Result<Analysis<T>> {
    let weighting = cfg.weighting.unwrap_or_else(|| ts.weighting());
    let problem = Problem::new(ts, spec, weighting)?;
    if spec.signals > 0 {
        cfg.search.validate(spec.signals)?;
    }
    if ts.len() < spec.eta() {
        return Err(crate::error::Error::Underdetermined {
            points: ts.len(),
            params: spec.eta(),
        });
    }
    let stats = ts.span_stats()?;
    with_pool(cfg.search.workers, || -> Result<Analysis<T>> {
        let (long, short, initial) = if spec.signals == 0 {
            let fit = problem.fit(&[])?;
            (None, None, BetaVector::new(Vec::new(), fit.linear))
        } else {
            let long = long_search_in_pool(&problem, &cfg.search)?;
            let short = short_search_in_pool(&problem, &cfg.search, &long.best_freqs)?;
            let initial = BetaVector::new(short.best_freqs.clone(), short.best_fit.linear.clone());
            (Some(long), Some(short), initial)
        };
        let refined = refine(&problem, initial)?;
        let summary = summarize_signals(spec, &refined.beta, &stats)?;
        let bounds = SearchBounds::new(ts, spec, &cfg.search)?;

        let report = match (&cfg.bootstrap, &short) {
            (Some(bc), Some(short)) => Some(bootstrap(&problem, &refined, &short.grids, &bounds, bc, cfg.search.workers)?),
            (Some(bc), None) => Some(bootstrap(&problem, &refined, &[], &bounds, bc, cfg.search.workers)?),
            (None, _) => None,
        };
        let flags = match &report {
            Some(r) => r.flags.clone(),
            None => diagnose_stability(&empty_report(spec), spec, &refined, &bounds),
        };
        Ok(Analysis {
            spec: *spec,
            weighting,
            stats,
            frame: problem.frame,
            long,
            short,
            refined,
            summary,
            bootstrap: report,
            flags,
        })
    })?
}

fn empty_report<T: Real>(spec: &ModelSpec<T>) -> BootstrapReport<T> {
    BootstrapReport {
        rounds: 0,
        failed: 0,
        parameter_names: crate::model::parameter_names(spec),
        round_index: Vec::new(),
        draws: Vec::new(),
        summaries: Vec::new(),
        param_sigma: Vec::new(),
        summary_sigma: SummarySigma {
            signals: Vec::new(),
            trend: Vec::new(),
        },
        flags: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{model_definition, simulate, SimulationSpec};

    #[test]
    fn model1_pipeline_recovers_truth() {
        let ts = simulate(&SimulationSpec {
            model: 1,
            n: 100,
            sn: 100.0,
            seed: 3,
        })
        .unwrap();
        let def = model_definition(1).unwrap();
        let cfg = AnalysisConfig {
            bootstrap: Some(BootstrapConfig {
                rounds: 20,
                ..Default::default()
            }),
            ..Default::default()
        };
        let a = analyze(&ts, &def.spec, &cfg).unwrap();
        let s = &a.summary.signals[0];
        assert!((s.period - 1.9).abs() < 0.06, "P = {}", s.period);
        assert!((s.amplitude - 2.0).abs() < 0.08);
        assert!((s.t_max1.unwrap() - 0.4).abs() < 0.005);
        assert!(a.refined.fit.z <= a.short.as_ref().unwrap().z_min + 1e-12);
        assert!(a.flags.is_empty(), "{:?}", a.flags);
        let bs = a.bootstrap.as_ref().unwrap();
        assert_eq!(bs.failed, 0);
        assert!(bs.summary_sigma.signals[0].period > 0.0);
    }

    #[test]
    fn pure_trend_model() {
        let ts = simulate(&SimulationSpec {
            model: 2,
            n: 50,
            sn: 100.0,
            seed: 1,
        })
        .unwrap();
        let spec = ModelSpec::trend(2).unwrap();
        let cfg = AnalysisConfig {
            bootstrap: Some(BootstrapConfig {
                rounds: 5,
                ..Default::default()
            }),
            ..Default::default()
        };
        let a = analyze(&ts, &spec, &cfg).unwrap();
        assert!(a.long.is_none());
        assert_eq!(a.refined.beta.linear.len(), 3);
        assert_eq!(a.bootstrap.unwrap().param_sigma.len(), 3);
    }
}
