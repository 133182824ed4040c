//! Residual bootstrap and instability diagnosis.
//!
//! Round `r` draws from a ChaCha8 stream selected by `(seed, r)`, so the
//! first `k` rounds of a run with `n_B = 2k` equal a run with `n_B = k`, and
//! rounds can run in any order on any number of workers.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::Problem;
use crate::model::{eval_model, parameter_names, signal_value, BetaVector, ModelSpec, SignalSummary, summarize_signals};
use crate::refine::{refine, RefinedModel};
use crate::scalar::{mean_std, Real};
use crate::search::{linear_grid, search_product, with_pool, SearchConfig};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of rounds `n_B`.
    pub rounds: usize,
    pub seed: u64,
    /// Re-run the non-linear refinement after each round's grid search.
    pub refine: bool,
    /// Short-grid size for the rounds; `None` reuses the main search grids.
    pub short_grid: Option<usize>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            seed: 1,
            refine: true,
            short_grid: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Instability {
    IntersectingFrequencies,
    DispersingAmplitudes,
    LeakingPeriods,
}

impl Instability {
    pub fn code(self) -> &'static str {
        match self {
            Instability::IntersectingFrequencies => "IF",
            Instability::DispersingAmplitudes => "DA",
            Instability::LeakingPeriods => "LP",
        }
    }
}

/// Standard deviations of the physical signal parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalSigma<T> {
    pub period: T,
    pub amplitude: T,
    pub t_min1: Option<T>,
    pub t_max1: Option<T>,
    pub t_min2: Option<T>,
    pub t_max2: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummarySigma<T> {
    pub signals: Vec<SignalSigma<T>>,
    pub trend: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapReport<T> {
    /// Requested rounds.
    pub rounds: usize,
    /// Rounds whose search or refinement failed; excluded from the statistics.
    pub failed: usize,
    pub parameter_names: Vec<String>,
    /// Round index of each successful draw.
    pub round_index: Vec<usize>,
    /// Flat parameter vector per successful round.
    pub draws: Vec<Vec<T>>,
    #[serde(skip)]
    pub summaries: Vec<SignalSummary<T>>,
    pub param_sigma: Vec<T>,
    pub summary_sigma: SummarySigma<T>,
    pub flags: Vec<Instability>,
}

impl<T: Real> BootstrapReport<T> {
    /// `round,param_name,value` rows.
    pub fn draws_csv(&self) -> String {
        let mut out = String::from("round,param_name,value\n");
        for (r, draw) in self.round_index.iter().zip(&self.draws) {
            for (name, v) in self.parameter_names.iter().zip(draw) {
                let _ = writeln!(out, "{r},{name},{v}");
            }
        }
        out
    }
}

/// Context the instability checks need besides the bootstrap draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchBounds<T> {
    pub f_min: T,
    pub f_max: T,
    /// Long-grid spacing; closer frequencies count as intersecting.
    pub grid_step: T,
    /// Peak-to-peak range of the observed values.
    pub data_range: T,
    pub t_first: T,
    pub t_last: T,
}

impl<T: Real> SearchBounds<T> {
    pub fn new(ts: &TimeSeries<T>, spec: &ModelSpec<T>, cfg: &SearchConfig) -> Result<Self> {
        let stats = ts.span_stats()?;
        let (lo, hi) = ts
            .values()
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(a, b), &v| (a.min(v), b.max(v)));
        let steps = T::from_usize_lossy(cfg.long_grid.max(2) - 1);
        Ok(Self {
            f_min: spec.f_min,
            f_max: spec.f_max,
            grid_step: (spec.f_max - spec.f_min) / steps,
            data_range: hi - lo,
            t_first: stats.t_first(),
            t_last: stats.t_last(),
        })
    }
}

struct Draw<T> {
    round: usize,
    beta: BetaVector<T>,
    summary: SignalSummary<T>,
}

/// Bootstrap rounds around `refined`, searching on `grids` (the short-search grids).
pub fn bootstrap<T: Real>(
    problem: &Problem<'_, T>,
    refined: &RefinedModel<T>,
    grids: &[Vec<T>],
    bounds: &SearchBounds<T>,
    cfg: &BootstrapConfig,
    workers: usize,
) -> Result<BootstrapReport<T>> {
    if cfg.rounds < 2 {
        return Err(Error::Config(format!("bootstrap needs at least 2 rounds, got {}", cfg.rounds)));
    }
    let spec = problem.spec;
    let ts = problem.ts;
    let stats = ts.span_stats()?;
    let model = eval_model(spec, &refined.beta, &problem.frame, ts.times())?;
    let residuals = &refined.fit.residuals;
    let grids: Vec<Vec<T>> = match cfg.short_grid {
        Some(m) => grids
            .iter()
            .map(|g| linear_grid(*g.last().unwrap_or(&spec.f_min), *g.first().unwrap_or(&spec.f_max), m.max(3)))
            .collect(),
        None => grids.to_vec(),
    };

    let run_round = |round: usize| -> Result<Draw<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(round as u64);
        let n = residuals.len();
        let y: Vec<T> = model.iter().map(|&g| g + residuals[rng.random_range(0..n)]).collect();
        let sample = ts.with_values(y)?;
        let p = problem.with_series(&sample);
        let beta = if spec.signals == 0 {
            BetaVector::new(Vec::new(), p.fit(&[])?.linear)
        } else {
            let per = search_product(&p, grids.clone(), false)?;
            BetaVector::new(per.best_freqs, per.best_fit.linear)
        };
        let beta = if cfg.refine { refine(&p, beta)?.beta } else { beta };
        let summary = summarize_signals(spec, &beta, &stats)?;
        Ok(Draw { round, beta, summary })
    };

    let results: Vec<Result<Draw<T>>> = with_pool(workers, || (0..cfg.rounds).into_par_iter().map(run_round).collect())?;
    let failed = results.iter().filter(|r| r.is_err()).count();
    let draws: Vec<Draw<T>> = results.into_iter().filter_map(|r| r.ok()).collect();

    let reference = summarize_signals(spec, &refined.beta, &stats)?;
    let flat: Vec<Vec<T>> = draws.iter().map(|d| d.beta.to_flat(spec)).collect();
    let param_sigma = (0..spec.eta())
        .map(|k| mean_std(&flat.iter().map(|v| v[k]).collect::<Vec<_>>()).1)
        .collect();
    let summaries: Vec<SignalSummary<T>> = draws.iter().map(|d| d.summary.clone()).collect();
    let summary_sigma = summary_sigma(&reference, &summaries);

    let mut report = BootstrapReport {
        rounds: cfg.rounds,
        failed,
        parameter_names: parameter_names(spec),
        round_index: draws.iter().map(|d| d.round).collect(),
        draws: flat,
        summaries,
        param_sigma,
        summary_sigma,
        flags: Vec::new(),
    };
    report.flags = diagnose_stability(&report, spec, refined, bounds);
    Ok(report)
}

/// Moves `epoch` by whole periods to the copy nearest `reference`.
fn align_epoch<T: Real>(epoch: T, reference: T, period: T) -> T {
    epoch - period * ((epoch - reference) / period).round()
}

fn sigma_of<T: Real>(values: impl Iterator<Item = T>) -> T {
    let v: Vec<T> = values.collect();
    mean_std(&v).1
}

fn epoch_sigma<T: Real>(
    reference: Option<T>,
    draws: &[SignalSummary<T>],
    i: usize,
    pick: impl Fn(&crate::model::SignalParams<T>) -> Option<T>,
) -> Option<T> {
    let r = reference?;
    let aligned: Vec<T> = draws
        .iter()
        .filter_map(|d| {
            let s = d.signals.get(i)?;
            pick(s).map(|e| align_epoch(e, r, s.period))
        })
        .collect();
    (aligned.len() >= 2).then(|| mean_std(&aligned).1)
}

fn summary_sigma<T: Real>(reference: &SignalSummary<T>, draws: &[SignalSummary<T>]) -> SummarySigma<T> {
    let signals = reference
        .signals
        .iter()
        .enumerate()
        .map(|(i, r)| SignalSigma {
            period: sigma_of(draws.iter().map(|d| d.signals[i].period)),
            amplitude: sigma_of(draws.iter().map(|d| d.signals[i].amplitude)),
            t_min1: epoch_sigma(r.t_min1, draws, i, |s| s.t_min1),
            t_max1: epoch_sigma(r.t_max1, draws, i, |s| s.t_max1),
            t_min2: epoch_sigma(r.t_min2, draws, i, |s| s.t_min2),
            t_max2: epoch_sigma(r.t_max2, draws, i, |s| s.t_max2),
        })
        .collect();
    let trend = (0..reference.trend.len())
        .map(|k| sigma_of(draws.iter().map(|d| d.trend[k])))
        .collect();
    SummarySigma { signals, trend }
}

/// Points used to check whether two large signals cancel over the data span.
const CANCEL_SAMPLES: usize = 2000;

/// Instability signatures of a bootstrapped fit. Pure in its inputs.
pub fn diagnose_stability<T: Real>(
    report: &BootstrapReport<T>,
    spec: &ModelSpec<T>,
    refined: &RefinedModel<T>,
    bounds: &SearchBounds<T>,
) -> Vec<Instability> {
    let mut flags = Vec::new();
    let k1 = spec.signals;
    let freq_sets = std::iter::once(refined.beta.freqs.clone())
        .chain(report.draws.iter().map(|d| BetaVector::from_flat(spec, d).map(|b| b.freqs).unwrap_or_default()));

    let mut intersect = false;
    let mut leak = false;
    for freqs in freq_sets {
        for i in 0..freqs.len() {
            if freqs[i] < bounds.f_min || freqs[i] > bounds.f_max {
                leak = true;
            }
            for j in i + 1..freqs.len() {
                if (freqs[i] - freqs[j]).abs() < bounds.grid_step || freqs[i] <= freqs[j] {
                    intersect = true;
                }
            }
        }
    }
    if intersect {
        flags.push(Instability::IntersectingFrequencies);
    }

    let stats_amp: Vec<T> = (0..k1)
        .map(|i| {
            let beta = &refined.beta;
            let period = T::one() / beta.freqs[i];
            let step = period / T::lit(1000.0);
            let (lo, hi) = (0..1000).fold((T::infinity(), T::neg_infinity()), |(a, b), k| {
                let v = signal_value(spec, beta, i, step * T::from_usize_lossy(k));
                (a.min(v), b.max(v))
            });
            hi - lo
        })
        .collect();
    let mut dispersing = report
        .summary_sigma
        .signals
        .iter()
        .zip(&stats_amp)
        .any(|(s, &a)| s.amplitude > a);
    let big = T::lit(3.0) * bounds.data_range;
    for i in 0..k1 {
        for j in i + 1..k1 {
            if stats_amp[i] > big && stats_amp[j] > big {
                let span = bounds.t_last - bounds.t_first;
                let (lo, hi) = (0..=CANCEL_SAMPLES).fold((T::infinity(), T::neg_infinity()), |(a, b), k| {
                    let t = bounds.t_first + span * T::from_usize_lossy(k) / T::from_usize_lossy(CANCEL_SAMPLES);
                    let v = signal_value(spec, &refined.beta, i, t) + signal_value(spec, &refined.beta, j, t);
                    (a.min(v), b.max(v))
                });
                // Nearly cancelling: the sum is small next to either signal.
                if hi - lo < stats_amp[i].min(stats_amp[j]) / T::lit(3.0) {
                    dispersing = true;
                }
            }
        }
    }
    if dispersing {
        flags.push(Instability::DispersingAmplitudes);
    }
    if leak {
        flags.push(Instability::LeakingPeriods);
    }
    flags
}
