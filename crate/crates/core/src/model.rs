//! The periodic-plus-trend model and its parameter bookkeeping.
//!
//! A model with orders `(K1, K2, K3)` is the sum of `K1` periodic signals,
//! each a Fourier series with `K2` harmonics, and a polynomial trend of
//! order `K3` in the scaled time `T = 2 (t - t_mid) / delta_t`. Order
//! `K3 = -1` means no trend at all.
//!
//! Frequencies are the only parameters that enter non-linearly. For a fixed
//! frequency tuple the remaining amplitudes and trend coefficients solve a
//! linear least-squares problem, see [`crate::fit`].

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::series::SpanStats;

/// Model orders and the tested frequency interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelSpec<T> {
    /// Number of periodic signals, `K1`. Zero for a pure trend model.
    pub signals: usize,
    /// Harmonics per signal, `K2`.
    pub harmonics: usize,
    /// Polynomial trend order, `K3 >= -1`.
    pub trend_order: i32,
    pub f_min: T,
    pub f_max: T,
}

impl<T: Real> ModelSpec<T> {
    pub fn new(signals: usize, harmonics: usize, trend_order: i32, f_min: T, f_max: T) -> Result<Self> {
        let spec = Self {
            signals,
            harmonics,
            trend_order,
            f_min,
            f_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a spec from a period interval; `f_min = 1/p_max`, `f_max = 1/p_min`.
    pub fn from_periods(signals: usize, harmonics: usize, trend_order: i32, p_min: T, p_max: T) -> Result<Self> {
        if !(p_min > T::zero()) || !(p_max > T::zero()) {
            return Err(Error::Contract(format!("periods must be positive, got [{p_min}, {p_max}]")));
        }
        Self::new(signals, harmonics, trend_order, T::one() / p_max, T::one() / p_min)
    }

    /// A pure polynomial model `g(t) = p(t)`.
    pub fn trend(trend_order: i32) -> Result<Self> {
        Self::new(0, 1, trend_order, T::zero(), T::one())
    }

    pub fn validate(&self) -> Result<()> {
        if self.harmonics == 0 {
            return Err(Error::Contract("harmonic order K2 must be >= 1".into()));
        }
        if self.trend_order < -1 {
            return Err(Error::Contract(format!("trend order K3 = {} < -1", self.trend_order)));
        }
        if self.signals == 0 && self.trend_order < 0 {
            return Err(Error::Contract("a model with no signals needs a trend (K3 >= 0)".into()));
        }
        if !(self.f_min.is_finite() && self.f_max.is_finite() && self.f_min < self.f_max) {
            return Err(Error::Contract(format!(
                "frequency bounds must satisfy f_min < f_max, got [{}, {}]",
                self.f_min, self.f_max
            )));
        }
        if self.signals > 0 && !(self.f_min > T::zero()) {
            return Err(Error::Contract(format!("f_min must be positive, got {}", self.f_min)));
        }
        Ok(())
    }

    /// Number of free parameters.
    pub fn eta(&self) -> usize {
        eta(self)
    }

    /// Number of trend coefficients, `K3 + 1`.
    pub fn trend_terms(&self) -> usize {
        (self.trend_order + 1) as usize
    }

    /// Number of parameters that are linear once frequencies are fixed.
    pub fn linear_terms(&self) -> usize {
        2 * self.signals * self.harmonics + self.trend_terms()
    }

    /// The same orders with another signal count.
    pub fn with_signals(&self, signals: usize) -> Self {
        Self { signals, ..*self }
    }

    /// `g_{K1,K2,K3}` label.
    pub fn label(&self) -> String {
        format!("g_{{{},{},{}}}", self.signals, self.harmonics, self.trend_order)
    }
}

impl<T: Real> fmt::Display for ModelSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// `eta = K1 (2 K2 + 1) + K3 + 1`
pub fn eta<T: Real>(spec: &ModelSpec<T>) -> usize {
    spec.signals * (2 * spec.harmonics + 1) + spec.trend_terms()
}

/// Time origin and scale of the polynomial trend.
///
/// A fit remembers the frame of the data it was made on; predictions at new
/// times must reuse it rather than recompute it from the new times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Frame<T> {
    pub t_mid: T,
    pub delta_t: T,
}

impl<T: Real> Frame<T> {
    pub fn new(t_mid: T, delta_t: T) -> Self {
        Self { t_mid, delta_t }
    }

    #[inline]
    pub fn scaled(&self, t: T) -> T {
        T::lit(2.0) * (t - self.t_mid) / self.delta_t
    }
}

impl<T: Real> From<&SpanStats<T>> for Frame<T> {
    fn from(s: &SpanStats<T>) -> Self {
        Self::new(s.t_mid, s.delta_t)
    }
}

/// Phase `2 pi j f t`. Every evaluation of the harmonic basis goes through
/// here so the design matrix and the model agree bit for bit.
#[inline]
pub(crate) fn phase<T: Real>(freq: T, harmonic: usize, t: T) -> T {
    T::two_pi() * T::from_usize_lossy(harmonic) * freq * t
}

/// Full parameter vector, split into frequencies and linear parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaVector<T> {
    /// `[f_1, .., f_K1]`
    pub freqs: Vec<T>,
    /// `[B_11, C_11, .., B_K1K2, C_K1K2, M_0, .., M_K3]`
    pub linear: Vec<T>,
}

impl<T: Real> BetaVector<T> {
    pub fn new(freqs: Vec<T>, linear: Vec<T>) -> Self {
        Self { freqs, linear }
    }

    pub fn check(&self, spec: &ModelSpec<T>) -> Result<()> {
        if self.freqs.len() != spec.signals || self.linear.len() != spec.linear_terms() {
            return Err(Error::Contract(format!(
                "{} needs {} frequencies and {} linear parameters, got {} and {}",
                spec.label(),
                spec.signals,
                spec.linear_terms(),
                self.freqs.len(),
                self.linear.len()
            )));
        }
        Ok(())
    }

    /// `(B_ij, C_ij)` for signal `i` and harmonic `j`, both zero-based.
    pub fn harmonic(&self, spec: &ModelSpec<T>, i: usize, j: usize) -> (T, T) {
        let k = 2 * (i * spec.harmonics + j);
        (self.linear[k], self.linear[k + 1])
    }

    pub fn trend(&self, spec: &ModelSpec<T>) -> &[T] {
        &self.linear[2 * spec.signals * spec.harmonics..]
    }

    /// Parameters in the conventional order
    /// `[B_11, C_11, .., f_1, .., B_K1K2, C_K1K2, f_K1, M_0, .., M_K3]`.
    pub fn to_flat(&self, spec: &ModelSpec<T>) -> Vec<T> {
        let mut out = Vec::with_capacity(spec.eta());
        for i in 0..spec.signals {
            for j in 0..spec.harmonics {
                let (b, c) = self.harmonic(spec, i, j);
                out.push(b);
                out.push(c);
            }
            out.push(self.freqs[i]);
        }
        out.extend_from_slice(self.trend(spec));
        out
    }

    pub fn from_flat(spec: &ModelSpec<T>, flat: &[T]) -> Result<Self> {
        if flat.len() != spec.eta() {
            return Err(Error::Contract(format!(
                "{} has {} parameters, got {}",
                spec.label(),
                spec.eta(),
                flat.len()
            )));
        }
        let mut freqs = Vec::with_capacity(spec.signals);
        let mut linear = Vec::with_capacity(spec.linear_terms());
        let mut k = 0;
        for _ in 0..spec.signals {
            linear.extend_from_slice(&flat[k..k + 2 * spec.harmonics]);
            k += 2 * spec.harmonics;
            freqs.push(flat[k]);
            k += 1;
        }
        linear.extend_from_slice(&flat[k..]);
        Ok(Self { freqs, linear })
    }
}

/// Names matching [`BetaVector::to_flat`] (1-based indices).
pub fn parameter_names<T: Real>(spec: &ModelSpec<T>) -> Vec<String> {
    let mut out = Vec::with_capacity(spec.eta());
    for i in 1..=spec.signals {
        for j in 1..=spec.harmonics {
            out.push(format!("B_{i}_{j}"));
            out.push(format!("C_{i}_{j}"));
        }
        out.push(format!("f_{i}"));
    }
    for k in 0..spec.trend_terms() {
        out.push(format!("M_{k}"));
    }
    out
}

/// Value of signal `i` (zero-based) at time `t`.
pub fn signal_value<T: Real>(spec: &ModelSpec<T>, beta: &BetaVector<T>, i: usize, t: T) -> T {
    let f = beta.freqs[i];
    let mut acc = T::zero();
    for j in 0..spec.harmonics {
        let (b, c) = beta.harmonic(spec, i, j);
        let (s, co) = phase(f, j + 1, t).sin_cos();
        acc += b * co + c * s;
    }
    acc
}

/// Value of the trend at time `t`.
pub fn trend_value<T: Real>(spec: &ModelSpec<T>, beta: &BetaVector<T>, frame: &Frame<T>, t: T) -> T {
    let x = frame.scaled(t);
    beta.trend(spec)
        .iter()
        .enumerate()
        .map(|(k, &m)| m * x.powi(k as i32))
        .sum()
}

/// Evaluates `g(t) = h(t) + p(t)` at every time in `t`.
pub fn eval_model<T: Real>(spec: &ModelSpec<T>, beta: &BetaVector<T>, frame: &Frame<T>, t: &[T]) -> Result<Vec<T>> {
    beta.check(spec)?;
    Ok(t.iter()
        .map(|&ti| {
            let h: T = (0..spec.signals).map(|i| signal_value(spec, beta, i, ti)).sum();
            h + trend_value(spec, beta, frame, ti)
        })
        .collect())
}

/// Full range of the trend term `M_k T^k` over `T in [-1, 1]`, defined for `k > 1`.
pub fn trend_range<T: Real>(k: u32, coefficient: T) -> Result<T> {
    if k <= 1 {
        return Err(Error::Contract(format!("trend range is defined for k > 1, got k = {k}")));
    }
    let a = coefficient.abs();
    Ok(if k % 2 == 1 { T::lit(2.0) * a } else { a })
}

/// Physical description of one fitted signal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalParams<T> {
    pub period: T,
    /// Peak to peak amplitude.
    pub amplitude: T,
    /// Deeper primary minimum.
    pub t_min1: Option<T>,
    /// Higher primary maximum.
    pub t_max1: Option<T>,
    /// Secondary minimum, only for `K2 >= 2` curves that have one.
    pub t_min2: Option<T>,
    pub t_max2: Option<T>,
    /// Two minima or two maxima were equal; the earlier epoch was taken as primary.
    pub tie: bool,
}

/// Signal and trend parameters of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalSummary<T> {
    pub signals: Vec<SignalParams<T>>,
    /// `M_0 .. M_K3`
    pub trend: Vec<T>,
}

/// Number of phase samples used to locate extrema.
const EXTREMUM_SAMPLES: usize = 10_000;

/// Derives periods, amplitudes and extremum epochs from fitted parameters.
///
/// Extremum epochs lie in `[t_1, t_1 + P_i)` where `t_1` is the first
/// observing time of the series described by `stats`.
pub fn summarize_signals<T: Real>(spec: &ModelSpec<T>, beta: &BetaVector<T>, stats: &SpanStats<T>) -> Result<SignalSummary<T>> {
    beta.check(spec)?;
    let t1 = stats.t_first();
    let signals = (0..spec.signals)
        .map(|i| summarize_one(spec, beta, i, t1))
        .collect();
    Ok(SignalSummary {
        signals,
        trend: beta.trend(spec).to_vec(),
    })
}

#[derive(Clone, Copy)]
struct Extremum<T> {
    epoch: T,
    value: T,
}

fn summarize_one<T: Real>(spec: &ModelSpec<T>, beta: &BetaVector<T>, i: usize, t1: T) -> SignalParams<T> {
    let f = beta.freqs[i];
    let period = T::one() / f;
    let undefined = SignalParams {
        period,
        amplitude: T::zero(),
        t_min1: None,
        t_max1: None,
        t_min2: None,
        t_max2: None,
        tie: false,
    };
    if !(f > T::zero()) || !period.is_finite() {
        return undefined;
    }

    // 10 001 phases over one period; the last one repeats the first so the
    // scan below treats the samples as cyclic over the first 10 000.
    let step = period / T::from_usize_lossy(EXTREMUM_SAMPLES);
    let h: Vec<T> = (0..EXTREMUM_SAMPLES)
        .map(|k| signal_value(spec, beta, i, t1 + step * T::from_usize_lossy(k)))
        .collect();

    let n = h.len();
    let mut minima = Vec::new();
    let mut maxima = Vec::new();
    for k in 0..n {
        let prev = h[(k + n - 1) % n];
        let next = h[(k + 1) % n];
        let cur = h[k];
        let is_min = cur <= prev && cur < next;
        let is_max = cur >= prev && cur > next;
        if !(is_min || is_max) {
            continue;
        }
        // three-point parabola through (k-1, k, k+1)
        let denom = prev - T::lit(2.0) * cur + next;
        let delta = if denom != T::zero() {
            (T::lit(0.5) * (prev - next) / denom).max(-T::one()).min(T::one())
        } else {
            T::zero()
        };
        let value = cur - T::lit(0.25) * (prev - next) * delta;
        let mut epoch = t1 + step * (T::from_usize_lossy(k) + delta);
        while epoch < t1 {
            epoch += period;
        }
        while epoch >= t1 + period {
            epoch -= period;
        }
        let e = Extremum { epoch, value };
        if is_min {
            minima.push(e);
        } else {
            maxima.push(e);
        }
    }
    if minima.is_empty() || maxima.is_empty() {
        return undefined;
    }

    let lowest = minima.iter().map(|e| e.value).fold(T::infinity(), T::min);
    let highest = maxima.iter().map(|e| e.value).fold(T::neg_infinity(), T::max);
    let amplitude = highest - lowest;
    if !(amplitude > T::zero()) {
        return undefined;
    }
    let guard = T::lit(1e-9) * amplitude;

    let (min1, min2, min_tie) = rank_extrema(&minima, guard, |a, b| a < b);
    let (max1, max2, max_tie) = rank_extrema(&maxima, guard, |a, b| a > b);

    let secondary = spec.harmonics >= 2;
    let t_min2 = min2.filter(|e| secondary && highest_between(&maxima) - e.value > guard).map(|e| e.epoch);
    let t_max2 = max2.filter(|e| secondary && e.value - lowest_between(&minima) > guard).map(|e| e.epoch);

    SignalParams {
        period,
        amplitude,
        t_min1: Some(min1.epoch),
        t_max1: Some(max1.epoch),
        t_min2,
        t_max2,
        tie: min_tie || max_tie,
    }
}

/// Smallest local maximum: the ceiling a secondary minimum must sit below.
fn highest_between<T: Real>(maxima: &[Extremum<T>]) -> T {
    maxima.iter().map(|e| e.value).fold(T::infinity(), T::min)
}

fn lowest_between<T: Real>(minima: &[Extremum<T>]) -> T {
    minima.iter().map(|e| e.value).fold(T::neg_infinity(), T::max)
}

/// Orders extrema by depth (`better(a, b)` when `a` is more extreme). Values
/// within `guard` of each other tie and the earlier epoch wins.
fn rank_extrema<T: Real>(
    list: &[Extremum<T>],
    guard: T,
    better: impl Fn(T, T) -> bool,
) -> (Extremum<T>, Option<Extremum<T>>, bool) {
    let mut sorted = list.to_vec();
    sorted.sort_by(|a, b| {
        if (a.value - b.value).abs() <= guard {
            a.epoch.partial_cmp(&b.epoch).unwrap_or(std::cmp::Ordering::Equal)
        } else if better(a.value, b.value) {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        }
    });
    let tie = sorted.len() > 1 && (sorted[0].value - sorted[1].value).abs() <= guard;
    (sorted[0], sorted.get(1).copied(), tie)
}
