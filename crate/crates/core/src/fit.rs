//! Linear least squares for a fixed frequency tuple and the `z` statistic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq, Matrix};
use crate::model::{phase, Frame, ModelSpec};
use crate::scalar::Real;
use crate::series::TimeSeries;

/// Which residual sum defines `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `z = sqrt(R / n)` with `R` the plain residual sum of squares.
    Unweighted,
    /// `z = sqrt(chi2 / n)`; requires per-point errors.
    ChiSquare,
}

/// Result of one linear fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult<T> {
    /// `[B_11, C_11, .., M_0, ..]`
    pub linear: Vec<T>,
    /// `y_i - g(t_i)`
    pub residuals: Vec<T>,
    /// Sum of squared residuals.
    pub r: T,
    /// Error-weighted sum, present when the series carries errors.
    pub chi2: Option<T>,
    pub z: T,
    pub weighting: Weighting,
    pub rank: usize,
    /// Design matrix was numerically rank deficient; `linear` is the
    /// minimum-norm solution.
    pub rank_deficient: bool,
}

impl<T: Real> FitResult<T> {
    /// The residual sum that `z` is built from (`R` or `chi2`).
    pub fn statistic(&self) -> T {
        match self.weighting {
            Weighting::Unweighted => self.r,
            Weighting::ChiSquare => self.chi2.unwrap_or(self.r),
        }
    }
}

/// Basis columns of one signal, `[cos(2 pi j f t), sin(2 pi j f t)]` for `j = 1..=K2`.
pub(crate) fn signal_columns<T: Real>(freq: T, harmonics: usize, times: &[T]) -> Vec<Vec<T>> {
    let mut out = Vec::with_capacity(2 * harmonics);
    for j in 1..=harmonics {
        let (mut c, mut s) = (Vec::with_capacity(times.len()), Vec::with_capacity(times.len()));
        for &t in times {
            let (sn, cs) = phase(freq, j, t).sin_cos();
            c.push(cs);
            s.push(sn);
        }
        out.push(c);
        out.push(s);
    }
    out
}

/// Trend columns `T^0 .. T^K3`.
pub(crate) fn trend_columns<T: Real>(order: i32, frame: &Frame<T>, times: &[T]) -> Vec<Vec<T>> {
    (0..=order)
        .map(|k| times.iter().map(|&t| frame.scaled(t).powi(k)).collect())
        .collect()
}

pub(crate) fn matrix_from_columns<'a, T: Real>(rows: usize, cols: impl IntoIterator<Item = &'a [T]>) -> Matrix<T> {
    let cols: Vec<&[T]> = cols.into_iter().collect();
    let mut m = Matrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.col_mut(j).copy_from_slice(c);
    }
    m
}

/// Design matrix for `spec` at fixed frequencies: harmonic columns by signal,
/// then trend columns.
pub fn design_matrix<T: Real>(spec: &ModelSpec<T>, freqs: &[T], times: &[T], frame: &Frame<T>) -> Result<Matrix<T>> {
    if freqs.len() != spec.signals {
        return Err(Error::Contract(format!(
            "{} needs {} frequencies, got {}",
            spec.label(),
            spec.signals,
            freqs.len()
        )));
    }
    let mut cols = Vec::with_capacity(spec.linear_terms());
    for &f in freqs {
        cols.extend(signal_columns(f, spec.harmonics, times));
    }
    cols.extend(trend_columns(spec.trend_order, frame, times));
    Ok(matrix_from_columns(times.len(), cols.iter().map(Vec::as_slice)))
}

/// Solves the (weighted) least-squares problem `A x ~ y`.
pub fn solve_linear<T: Real>(a: &Matrix<T>, ts: &TimeSeries<T>, weighting: Weighting) -> Result<FitResult<T>> {
    let n = ts.len();
    if a.rows() != n {
        return Err(Error::Contract(format!("design matrix has {} rows for {} points", a.rows(), n)));
    }
    let y = ts.values();
    let solution = match weighting {
        Weighting::Unweighted => lstsq(a, y)?,
        Weighting::ChiSquare => {
            let sigma = ts
                .errors()
                .ok_or_else(|| Error::Contract("chi-square weighting needs per-point errors".into()))?;
            let w: Vec<T> = sigma.iter().map(|&s| T::one() / s).collect();
            let mut aw = a.clone();
            aw.scale_rows(&w);
            let yw: Vec<T> = y.iter().zip(&w).map(|(&v, &wi)| v * wi).collect();
            lstsq(&aw, &yw)?
        }
    };
    let fitted = a.mul_vec(&solution.x);
    let residuals: Vec<T> = y.iter().zip(&fitted).map(|(&v, &g)| v - g).collect();
    let r: T = residuals.iter().map(|&e| e * e).sum();
    let chi2 = ts
        .errors()
        .map(|s| residuals.iter().zip(s).map(|(&e, &si)| (e / si) * (e / si)).sum::<T>());
    let stat = match weighting {
        Weighting::Unweighted => r,
        Weighting::ChiSquare => chi2.unwrap_or(r),
    };
    let z = (stat / T::from_usize_lossy(n)).sqrt();
    if !z.is_finite() {
        return Err(Error::NonFinite("fit statistic"));
    }
    Ok(FitResult {
        rank_deficient: solution.rank_deficient(),
        rank: solution.rank,
        linear: solution.x,
        residuals,
        r,
        chi2,
        z,
        weighting,
    })
}

/// Fits `spec` to `ts` at the given frequencies.
pub fn fit_frequencies<T: Real>(
    spec: &ModelSpec<T>,
    freqs: &[T],
    ts: &TimeSeries<T>,
    frame: &Frame<T>,
    weighting: Weighting,
) -> Result<FitResult<T>> {
    let a = design_matrix(spec, freqs, ts.times(), frame)?;
    solve_linear(&a, ts, weighting)
}

/// A series, a model and the weighting mode: everything one fit needs
/// besides the frequencies.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a, T> {
    pub ts: &'a TimeSeries<T>,
    pub spec: &'a ModelSpec<T>,
    pub frame: Frame<T>,
    pub weighting: Weighting,
}

impl<'a, T: Real> Problem<'a, T> {
    /// Uses the frame of `ts` itself.
    pub fn new(ts: &'a TimeSeries<T>, spec: &'a ModelSpec<T>, weighting: Weighting) -> Result<Self> {
        spec.validate()?;
        if weighting == Weighting::ChiSquare && ts.errors().is_none() {
            return Err(Error::Contract("chi-square weighting needs per-point errors".into()));
        }
        let frame = Frame::from(&ts.span_stats()?);
        Ok(Self {
            ts,
            spec,
            frame,
            weighting,
        })
    }

    pub fn with_series<'b>(&self, ts: &'b TimeSeries<T>) -> Problem<'b, T>
    where
        'a: 'b,
    {
        Problem {
            ts,
            spec: self.spec,
            frame: self.frame,
            weighting: self.weighting,
        }
    }

    pub fn fit(&self, freqs: &[T]) -> Result<FitResult<T>> {
        fit_frequencies(self.spec, freqs, self.ts, &self.frame, self.weighting)
    }
}
