//! Normalized Lomb-Scargle periodogram, polynomial detrending and
//! pre-whitening. This is the single-sine baseline the DCM is compared with.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{fit_frequencies, Weighting};
use crate::model::{Frame, ModelSpec};
use crate::scalar::{mean_std, Real};
use crate::series::TimeSeries;

/// Frequencies from `f_min` to `f_max` in steps of `f0 / 10`.
pub fn dft_grid<T: Real>(f_min: T, f_max: T, f0: T) -> Vec<T> {
    let step = f0 / T::lit(10.0);
    let count = ((f_max - f_min) / step + T::lit(1e-9)).floor().to_usize().unwrap_or(0) + 1;
    (0..count).map(|k| f_min + step * T::from_usize_lossy(k)).collect()
}

/// Normalized power at each frequency of `grid`. `ts` should be mean-subtracted.
pub fn lomb_scargle<T: Real>(ts: &TimeSeries<T>, grid: &[T]) -> Result<Vec<T>> {
    let y = ts.values();
    let t = ts.times();
    let (mean, sd) = mean_std(y);
    let var = sd * sd;
    if !(var > T::zero()) {
        return Err(Error::ZeroVariance);
    }
    let two = T::lit(2.0);
    Ok(grid
        .par_iter()
        .map(|&f| {
            let w = T::two_pi() * f;
            let (s2, c2) = t.iter().fold((T::zero(), T::zero()), |(s, c), &ti| {
                let (a, b) = (two * w * ti).sin_cos();
                (s + a, c + b)
            });
            let tau = s2.atan2(c2) / (two * w);
            let (mut yc, mut ys, mut cc, mut ss) = (T::zero(), T::zero(), T::zero(), T::zero());
            for (&ti, &yi) in t.iter().zip(y) {
                let (s, c) = (w * (ti - tau)).sin_cos();
                let d = yi - mean;
                yc += d * c;
                ys += d * s;
                cc += c * c;
                ss += s * s;
            }
            let pc = if cc > T::zero() { yc * yc / cc } else { T::zero() };
            let ps = if ss > T::zero() { ys * ys / ss } else { T::zero() };
            (pc + ps) / (two * var)
        })
        .collect())
}

/// Polynomial trend removed from a series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detrended<T> {
    #[serde(skip)]
    pub series: TimeSeries<T>,
    /// `M_0 .. M_K3` in the scaled time of the series.
    pub coefficients: Vec<T>,
}

/// Least-squares polynomial of order `order` in `T = 2 (t - t_mid) / delta_t`, removed.
pub fn detrend<T: Real>(ts: &TimeSeries<T>, order: i32) -> Result<Detrended<T>> {
    if order < 0 {
        return Err(Error::Contract(format!("detrending order must be >= 0, got {order}")));
    }
    let terms = order as usize + 1;
    if ts.len() <= terms {
        return Err(Error::Underdetermined {
            points: ts.len(),
            params: terms,
        });
    }
    let spec = ModelSpec::trend(order)?;
    let frame = Frame::from(&ts.span_stats()?);
    let fit = fit_frequencies(&spec, &[], ts, &frame, Weighting::Unweighted)?;
    Ok(Detrended {
        series: ts.with_values(fit.residuals)?,
        coefficients: fit.linear,
    })
}

/// Sine fitted at a periodogram peak.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SineFit<T> {
    pub freq: T,
    /// Peak-to-peak amplitude.
    pub amplitude: T,
    /// Epoch of maximum in `[t_1, t_1 + 1/freq)`.
    pub t_max: T,
    pub b: T,
    pub c: T,
}

/// One pre-whitening pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DftResult<T> {
    pub freqs: Vec<T>,
    pub power: Vec<T>,
    pub best_f: T,
    pub best_power: T,
    /// All sines found so far, refitted jointly with the trend; the last one is new.
    pub sines: Vec<SineFit<T>>,
    pub trend: Vec<T>,
    /// `y - g_DFT` after this pass.
    pub residuals: Vec<T>,
    /// Sample variance of `residuals`.
    pub residual_variance: T,
}

/// Iterative single-frequency extraction: detrend, locate the highest peak,
/// refit trend plus every sine found so far to the original data, repeat on
/// the residuals.
pub fn prewhiten<T: Real>(ts: &TimeSeries<T>, order: i32, max_signals: usize, grid: &[T]) -> Result<Vec<DftResult<T>>> {
    if max_signals == 0 {
        return Err(Error::Contract("pre-whitening needs at least one pass".into()));
    }
    if grid.is_empty() {
        return Err(Error::Contract("empty frequency grid".into()));
    }
    let order = order.max(0);
    let frame = Frame::from(&ts.span_stats()?);
    let t1 = ts.times()[0];
    let plain = ts.without_errors();
    let mut current = plain.clone();
    let mut found: Vec<T> = Vec::new();
    let mut passes = Vec::with_capacity(max_signals);

    for _ in 0..max_signals {
        let detrended = detrend(&current, order)?;
        let power = lomb_scargle(&detrended.series, grid)?;
        let (k, &best_power) = power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal).then(b.0.cmp(&a.0)))
            .expect("non-empty grid");
        found.push(grid[k]);

        let spec = ModelSpec {
            signals: found.len(),
            harmonics: 1,
            trend_order: order,
            f_min: T::zero(),
            f_max: T::infinity(),
        };
        let fit = fit_frequencies(&spec, &found, &plain, &frame, Weighting::Unweighted)?;
        let sines = found
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                let (b, c) = (fit.linear[2 * i], fit.linear[2 * i + 1]);
                let period = T::one() / f;
                // b cos(wt) + c sin(wt) peaks where wt = atan2(c, b)
                let mut t_max = c.atan2(b) / (T::two_pi() * f);
                t_max = t_max + period * ((t1 - t_max) / period).ceil();
                if t_max >= t1 + period {
                    t_max -= period;
                }
                SineFit {
                    freq: f,
                    amplitude: T::lit(2.0) * (b * b + c * c).sqrt(),
                    t_max,
                    b,
                    c,
                }
            })
            .collect();
        let residual_variance = {
            let (_, sd) = mean_std(&fit.residuals);
            sd * sd
        };
        current = plain.with_values(fit.residuals.clone())?;
        passes.push(DftResult {
            freqs: grid.to_vec(),
            power,
            best_f: grid[k],
            best_power,
            sines,
            trend: fit.linear[2 * found.len()..].to_vec(),
            residuals: fit.residuals,
            residual_variance,
        });
    }
    Ok(passes)
}
