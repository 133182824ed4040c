//! Levenberg-Marquardt refinement by variable projection.
//!
//! Only the `K1` frequencies are iterated. At every trial frequency vector the
//! amplitudes and trend coefficients are solved exactly by the linear fit, and
//! the Jacobian of the projected residual is `-(I - P) dA/df x` (Kaufman).

use serde::Serialize;

use crate::error::Result;
use crate::fit::{FitResult, Problem, Weighting};
use crate::linalg::{lstsq, lstsq_with_tol, Matrix};
use crate::model::{eval_model, phase, BetaVector};
use crate::scalar::Real;

/// Outcome of [`refine`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinedModel<T> {
    pub beta: BetaVector<T>,
    /// Residuals and statistics at `beta`.
    pub fit: FitResult<T>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    pub max_iterations: usize,
    /// Relative change of `z` over an accepted step.
    pub z_tolerance: f64,
    /// Infinity norm of the gradient of `z^2`.
    pub gradient_tolerance: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            z_tolerance: 1e-12,
            gradient_tolerance: 1e-10,
        }
    }
}

const LAMBDA_START: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;

/// Residuals `y - g`, their weighted form and the cost at `beta`.
struct State<T> {
    beta: BetaVector<T>,
    residuals: Vec<T>,
    weighted: Vec<T>,
    cost: T,
}

fn weights<T: Real>(problem: &Problem<'_, T>) -> Option<Vec<T>> {
    match problem.weighting {
        Weighting::Unweighted => None,
        Weighting::ChiSquare => problem.ts.errors().map(|s| s.iter().map(|&v| T::one() / v).collect()),
    }
}

fn evaluate<T: Real>(problem: &Problem<'_, T>, w: Option<&[T]>, beta: BetaVector<T>) -> Result<State<T>> {
    let g = eval_model(problem.spec, &beta, &problem.frame, problem.ts.times())?;
    let residuals: Vec<T> = problem.ts.values().iter().zip(&g).map(|(&y, &gi)| y - gi).collect();
    let weighted: Vec<T> = match w {
        Some(w) => residuals.iter().zip(w).map(|(&r, &wi)| r * wi).collect(),
        None => residuals.clone(),
    };
    let cost = weighted.iter().map(|&e| e * e).sum();
    Ok(State {
        beta,
        residuals,
        weighted,
        cost,
    })
}

/// Jacobian of `g` in the order `[f_1..f_K1, linear..]`, rows weighted.
fn jacobian<T: Real>(problem: &Problem<'_, T>, w: Option<&[T]>, beta: &BetaVector<T>) -> Matrix<T> {
    let spec = problem.spec;
    let times = problem.ts.times();
    let k1 = spec.signals;
    let mut jac = Matrix::zeros(times.len(), k1 + spec.linear_terms());
    for (row, &t) in times.iter().enumerate() {
        let scale = w.map_or(T::one(), |w| w[row]);
        for i in 0..k1 {
            let f = beta.freqs[i];
            let mut df = T::zero();
            for j in 0..spec.harmonics {
                let (b, c) = beta.harmonic(spec, i, j);
                let (s, co) = phase(f, j + 1, t).sin_cos();
                let col = k1 + 2 * (i * spec.harmonics + j);
                jac[(row, col)] = co * scale;
                jac[(row, col + 1)] = s * scale;
                df += T::two_pi() * T::from_usize_lossy(j + 1) * t * (c * co - b * s);
            }
            jac[(row, i)] = df * scale;
        }
        let x = problem.frame.scaled(t);
        let base = k1 + 2 * k1 * spec.harmonics;
        let mut p = T::one();
        for k in 0..spec.trend_terms() {
            jac[(row, base + k)] = p * scale;
            p *= x;
        }
    }
    jac
}

fn finish<T: Real>(problem: &Problem<'_, T>, state: State<T>, rank: usize, converged: bool, iterations: usize) -> RefinedModel<T> {
    let n = T::from_usize_lossy(problem.ts.len());
    let r: T = state.residuals.iter().map(|&e| e * e).sum();
    let chi2 = problem
        .ts
        .errors()
        .map(|s| state.residuals.iter().zip(s).map(|(&e, &si)| (e / si) * (e / si)).sum::<T>());
    let stat = match problem.weighting {
        Weighting::Unweighted => r,
        Weighting::ChiSquare => chi2.unwrap_or(r),
    };
    let eta = problem.spec.eta();
    RefinedModel {
        fit: FitResult {
            linear: state.beta.linear.clone(),
            residuals: state.residuals,
            r,
            chi2,
            z: (stat / n).sqrt(),
            weighting: problem.weighting,
            rank,
            rank_deficient: rank < eta,
        },
        beta: state.beta,
        converged,
        iterations,
    }
}

/// Refines `initial` with the default options.
pub fn refine<T: Real>(problem: &Problem<'_, T>, initial: BetaVector<T>) -> Result<RefinedModel<T>> {
    refine_with(problem, initial, &RefineOptions::default())
}

/// Linear parameters solved exactly at `freqs`. The rank counts the
/// frequencies as identified, so it is `eta` unless the linear block is
/// rank deficient.
fn project<T: Real>(problem: &Problem<'_, T>, w: Option<&[T]>, freqs: Vec<T>) -> Result<(State<T>, usize)> {
    let fit = problem.fit(&freqs)?;
    let rank = fit.rank + freqs.len();
    let state = evaluate(problem, w, BetaVector::new(freqs, fit.linear))?;
    Ok((state, rank))
}

/// Derivative of the projected model with respect to each frequency,
/// `(I - P) dA/df_k x`, with `P` the projector on the linear columns.
fn projected_jacobian<T: Real>(problem: &Problem<'_, T>, w: Option<&[T]>, beta: &BetaVector<T>) -> Result<Matrix<T>> {
    let full = jacobian(problem, w, beta);
    let n = problem.ts.len();
    let k1 = problem.spec.signals;
    let lin = problem.spec.linear_terms();
    let mut a = Matrix::zeros(n, lin);
    for j in 0..lin {
        a.col_mut(j).copy_from_slice(full.col(k1 + j));
    }
    let mut out = Matrix::zeros(n, k1);
    for k in 0..k1 {
        let d = full.col(k);
        let fitted = a.mul_vec(&lstsq(&a, d)?.x);
        for ((o, &dv), &fv) in out.col_mut(k).iter_mut().zip(d).zip(&fitted) {
            *o = dv - fv;
        }
    }
    Ok(out)
}

/// Levenberg-Marquardt over the frequencies with the linear parameters
/// eliminated (variable projection). Steps are only accepted when they lower
/// the cost, so the result is never worse than `initial`.
pub fn refine_with<T: Real>(problem: &Problem<'_, T>, initial: BetaVector<T>, opts: &RefineOptions) -> Result<RefinedModel<T>> {
    initial.check(problem.spec)?;
    let w = weights(problem);
    let w = w.as_deref();
    let n = problem.ts.len();
    let k1 = problem.spec.signals;

    let given = evaluate(problem, w, initial)?;
    let (projected, mut rank) = project(problem, w, given.beta.freqs.clone())?;
    if given.cost == T::zero() {
        return Ok(finish(problem, given, rank, true, 0));
    }
    let mut state = if projected.cost < given.cost { projected } else { given };
    if k1 == 0 {
        return Ok(finish(problem, state, rank, true, 0));
    }

    let mut lambda = T::lit(LAMBDA_START);
    let mut diag = vec![T::zero(); k1];
    let mut iterations = 0;
    let grad_scale = T::lit(2.0) / T::from_usize_lossy(n);

    while iterations < opts.max_iterations {
        iterations += 1;
        let jac = projected_jacobian(problem, w, &state.beta)?;
        let grad = (0..k1)
            .map(|j| jac.col(j).iter().zip(&state.weighted).map(|(&a, &r)| a * r).sum::<T>().abs())
            .fold(T::zero(), T::max);
        if grad * grad_scale < T::lit(opts.gradient_tolerance) || state.cost == T::zero() {
            return Ok(finish(problem, state, rank, true, iterations));
        }
        for (j, d) in diag.iter_mut().enumerate() {
            let norm = jac.col(j).iter().map(|&v| v * v).sum::<T>().sqrt();
            *d = d.max(norm);
        }

        // Retry with growing damping until the cost drops. Solved in
        // variables scaled by `diag`, so the damping block is `sqrt(lambda) I`.
        loop {
            let mut aug = Matrix::zeros(n + k1, k1);
            let sl = lambda.sqrt();
            for j in 0..k1 {
                let d = if diag[j] > T::zero() { diag[j] } else { T::one() };
                for (dst, &v) in aug.col_mut(j)[..n].iter_mut().zip(jac.col(j)) {
                    *dst = v / d;
                }
                aug.col_mut(j)[n + j] = sl;
            }
            let mut rhs = state.weighted.clone();
            rhs.resize(n + k1, T::zero());
            let step = lstsq_with_tol(&aug, &rhs, T::epsilon())?.x;
            let freqs: Vec<T> = state
                .beta
                .freqs
                .iter()
                .zip(&step)
                .zip(&diag)
                .map(|((&f, &x), &d)| if d > T::zero() { f + x / d } else { f + x })
                .collect();
            let candidate = if freqs.iter().all(|f| f.is_finite()) {
                Some(project(problem, w, freqs)?)
            } else {
                None
            };
            if let Some((candidate, r)) = candidate.filter(|(c, _)| c.cost.is_finite() && c.cost < state.cost) {
                let z_old = state.cost.sqrt();
                let z_new = candidate.cost.sqrt();
                state = candidate;
                rank = r;
                lambda = (lambda / T::lit(10.0)).max(T::lit(1e-12));
                if (z_old - z_new) <= T::lit(opts.z_tolerance) * z_old {
                    return Ok(finish(problem, state, rank, true, iterations));
                }
                break;
            }
            lambda *= T::lit(10.0);
            if lambda > T::lit(LAMBDA_MAX) {
                // No descent direction left at any damping: a stationary point.
                return Ok(finish(problem, state, rank, true, iterations));
            }
        }
    }
    Ok(finish(problem, state, rank, false, iterations))
}
