//! Two-stage frequency search.
//!
//! The long stage fits every strictly descending `K1`-tuple drawn from an
//! evenly spaced grid on `[f_min, f_max]`. The short stage builds a dense grid
//! of half-width `a = c (f_max - f_min) / 2` around each long-stage best
//! frequency and fits every tuple of the Cartesian product that keeps the
//! descending order.
//!
//! Candidate tuples are identified by their rank in the enumeration order.
//! Reduction keeps the minimum of `(z, rank)`, so the winner does not depend
//! on how the rank space is split across workers.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{matrix_from_columns, signal_columns, solve_linear, trend_columns, FitResult, Problem};
use crate::scalar::{cmp_nan_last, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Long-grid size `n_L`.
    pub long_grid: usize,
    /// Short-grid size `n_S`, per signal.
    pub short_grid: usize,
    /// Short-interval half-width factor `c`.
    pub half_width_factor: f64,
    pub workers: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            long_grid: 200,
            short_grid: 200,
            half_width_factor: 0.05,
            workers: 1,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self, signals: usize) -> Result<()> {
        if self.long_grid < signals.max(1) {
            return Err(Error::Config(format!(
                "long grid of {} points cannot hold {} distinct frequencies",
                self.long_grid, signals
            )));
        }
        if self.short_grid < 3 {
            return Err(Error::Config(format!("short grid needs at least 3 points, got {}", self.short_grid)));
        }
        if !(self.half_width_factor > 0.0 && self.half_width_factor < 1.0) {
            return Err(Error::Config(format!(
                "half-width factor must lie in (0, 1), got {}",
                self.half_width_factor
            )));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Long,
    Short,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Long => "long",
            Stage::Short => "short",
        }
    }
}

/// One-dimensional cut `z_i(f)` with the other frequencies at their best values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Slice<T> {
    /// Zero-based signal index.
    pub signal: usize,
    pub freqs: Vec<T>,
    pub z: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Periodogram<T> {
    pub stage: Stage,
    /// Minimizing tuple, descending.
    pub best_freqs: Vec<T>,
    pub z_min: T,
    pub best_fit: FitResult<T>,
    pub slices: Vec<Slice<T>>,
    pub combinations_tested: u64,
    /// Per-signal frequency grids (descending). The long stage uses one grid for all signals.
    pub grids: Vec<Vec<T>>,
}

/// `n` evenly spaced points from `hi` down to `lo`.
pub fn linear_grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let step = (hi - lo) / T::from_usize_lossy(n - 1);
            (0..n)
                .map(|k| if k == n - 1 { lo } else { hi - step * T::from_usize_lossy(k) })
                .collect()
        }
    }
}

/// `C(n, k)`, or `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Combination of rank `r` in lexicographic order of ascending index tuples.
fn unrank_combination(mut r: u64, n: usize, k: usize, out: &mut [usize]) {
    let mut next = 0;
    for p in 0..k {
        let mut c = next;
        loop {
            let count = binomial(n - c - 1, k - p - 1).unwrap_or(u64::MAX);
            if r < count {
                break;
            }
            r -= count;
            c += 1;
        }
        out[p] = c;
        next = c + 1;
    }
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for p in (0..k).rev() {
        if idx[p] < n - k + p {
            idx[p] += 1;
            for q in p + 1..k {
                idx[q] = idx[q - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Precomputed harmonic columns for every frequency of a grid.
struct Basis<T> {
    columns: Vec<Vec<Vec<T>>>,
}

impl<T: Real> Basis<T> {
    fn new(grid: &[T], harmonics: usize, times: &[T]) -> Self {
        Self {
            columns: grid
                .par_iter()
                .map(|&f| signal_columns(f, harmonics, times))
                .collect(),
        }
    }
}

/// Fits one tuple given per-signal column sets.
fn fit_columns<T: Real>(problem: &Problem<'_, T>, signal_cols: &[&[Vec<T>]], trend: &[Vec<T>]) -> Result<FitResult<T>> {
    let cols = signal_cols
        .iter()
        .flat_map(|s| s.iter())
        .chain(trend.iter())
        .map(Vec::as_slice);
    let a = matrix_from_columns(problem.ts.len(), cols);
    solve_linear(&a, problem.ts, problem.weighting)
}

#[derive(Clone, Copy)]
struct Candidate<T> {
    z: T,
    rank: u64,
}

fn better<T: Real>(a: Option<Candidate<T>>, b: Option<Candidate<T>>) -> Option<Candidate<T>> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => match cmp_nan_last(x.z, y.z).then(x.rank.cmp(&y.rank)) {
            Ordering::Greater => Some(y),
            _ => Some(x),
        },
    }
}

/// Rank-space chunk size; small enough to balance, large enough to amortize.
const CHUNK: u64 = 512;

/// Runs `f` inside a pool of `workers` threads.
pub(crate) fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Long search over all descending tuples of an `n_L`-point grid.
pub fn long_search<T: Real>(problem: &Problem<'_, T>, cfg: &SearchConfig) -> Result<Periodogram<T>> {
    cfg.validate(problem.spec.signals)?;
    with_pool(cfg.workers, || long_search_in_pool(problem, cfg))?
}

pub(crate) fn long_search_in_pool<T: Real>(problem: &Problem<'_, T>, cfg: &SearchConfig) -> Result<Periodogram<T>> {
    let spec = problem.spec;
    let k = spec.signals;
    if k == 0 {
        return Err(Error::Config(format!("{} has no frequencies to search", spec.label())));
    }
    let n = cfg.long_grid;
    let total = binomial(n, k)
        .filter(|&c| c > 0)
        .ok_or_else(|| Error::Config(format!("C({n}, {k}) tuples is not a searchable count")))?;
    let grid = linear_grid(spec.f_min, spec.f_max, n);
    let times = problem.ts.times();
    let basis = Basis::new(&grid, spec.harmonics, times);
    let trend = trend_columns(spec.trend_order, &problem.frame, times);

    let chunks = total.div_ceil(CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Option<Candidate<T>>> {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(total);
            let mut idx = vec![0; k];
            unrank_combination(start, n, k, &mut idx);
            let mut local = None;
            let mut cols: Vec<&[Vec<T>]> = Vec::with_capacity(k);
            for rank in start..end {
                cols.clear();
                cols.extend(idx.iter().map(|&i| basis.columns[i].as_slice()));
                let fit = fit_columns(problem, &cols, &trend)?;
                local = better(local, Some(Candidate { z: fit.z, rank }));
                next_combination(&mut idx, n);
            }
            Ok(local)
        })
        .try_reduce(|| None, |a, b| Ok(better(a, b)))?
        .ok_or_else(|| Error::Config("long search tested no tuple".into()))?;

    let mut idx = vec![0; k];
    unrank_combination(best.rank, n, k, &mut idx);
    let best_freqs: Vec<T> = idx.iter().map(|&i| grid[i]).collect();
    let cols: Vec<&[Vec<T>]> = idx.iter().map(|&i| basis.columns[i].as_slice()).collect();
    let best_fit = fit_columns(problem, &cols, &trend)?;

    let slices = (0..k)
        .map(|axis| slice_with_basis(problem, &best_freqs, axis, &grid, &basis, &trend))
        .collect::<Result<Vec<_>>>()?;

    Ok(Periodogram {
        stage: Stage::Long,
        z_min: best_fit.z,
        best_freqs,
        best_fit,
        slices,
        combinations_tested: total,
        grids: vec![grid],
    })
}

/// Dense grids of the short stage around `mids`, clipped to the tested interval.
///
/// Each mid frequency is merged into its own grid so the short stage always
/// re-tests the long-stage optimum.
pub fn short_grids<T: Real>(problem: &Problem<'_, T>, cfg: &SearchConfig, mids: &[T]) -> Vec<Vec<T>> {
    let spec = problem.spec;
    let a = T::lit(cfg.half_width_factor) * (spec.f_max - spec.f_min) / T::lit(2.0);
    mids.iter()
        .map(|&m| {
            let lo = (m - a).max(spec.f_min);
            let hi = (m + a).min(spec.f_max);
            let mut g = linear_grid(lo, hi, cfg.short_grid);
            if lo <= m && m <= hi && !g.contains(&m) {
                g.push(m);
                g.sort_by(|x, y| y.partial_cmp(x).unwrap_or(Ordering::Equal));
            }
            g
        })
        .collect()
}

/// Short search on the dense grids around `mids`.
pub fn short_search<T: Real>(problem: &Problem<'_, T>, cfg: &SearchConfig, mids: &[T]) -> Result<Periodogram<T>> {
    cfg.validate(problem.spec.signals)?;
    with_pool(cfg.workers, || short_search_in_pool(problem, cfg, mids))?
}

pub(crate) fn short_search_in_pool<T: Real>(
    problem: &Problem<'_, T>,
    cfg: &SearchConfig,
    mids: &[T],
) -> Result<Periodogram<T>> {
    let grids = short_grids(problem, cfg, mids);
    search_product(problem, grids, true)
}

/// Fits every descending tuple of the Cartesian product of `grids`.
pub(crate) fn search_product<T: Real>(problem: &Problem<'_, T>, grids: Vec<Vec<T>>, with_slices: bool) -> Result<Periodogram<T>> {
    let spec = problem.spec;
    let k = spec.signals;
    if grids.len() != k || k == 0 {
        return Err(Error::Contract(format!(
            "{} needs {} short grids, got {}",
            spec.label(),
            k,
            grids.len()
        )));
    }
    let times = problem.ts.times();
    let bases: Vec<Basis<T>> = grids.iter().map(|g| Basis::new(g, spec.harmonics, times)).collect();
    let trend = trend_columns(spec.trend_order, &problem.frame, times);
    let sizes: Vec<u64> = grids.iter().map(|g| g.len() as u64).collect();
    let total = sizes
        .iter()
        .try_fold(1u64, |acc, &s| acc.checked_mul(s))
        .ok_or_else(|| Error::Config("short search product overflows".into()))?;

    let decode = |mut r: u64, idx: &mut [usize]| {
        for p in (0..k).rev() {
            idx[p] = (r % sizes[p]) as usize;
            r /= sizes[p];
        }
    };
    let ordered = |idx: &[usize]| (1..k).all(|p| grids[p - 1][idx[p - 1]] > grids[p][idx[p]]);

    let chunks = total.div_ceil(CHUNK);
    let (best, tested) = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<(Option<Candidate<T>>, u64)> {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(total);
            let mut idx = vec![0; k];
            let mut local = None;
            let mut tested = 0;
            let mut cols: Vec<&[Vec<T>]> = Vec::with_capacity(k);
            for rank in start..end {
                decode(rank, &mut idx);
                if !ordered(&idx) {
                    continue;
                }
                cols.clear();
                cols.extend(idx.iter().enumerate().map(|(p, &i)| bases[p].columns[i].as_slice()));
                let fit = fit_columns(problem, &cols, &trend)?;
                local = better(local, Some(Candidate { z: fit.z, rank }));
                tested += 1;
            }
            Ok((local, tested))
        })
        .try_reduce(|| (None, 0), |a, b| Ok((better(a.0, b.0), a.1 + b.1)))?;

    let best = best.ok_or_else(|| {
        Error::Instability("short-search intervals admit no tuple with descending frequencies".into())
    })?;
    let mut idx = vec![0; k];
    decode(best.rank, &mut idx);
    let best_freqs: Vec<T> = idx.iter().enumerate().map(|(p, &i)| grids[p][i]).collect();
    let cols: Vec<&[Vec<T>]> = idx.iter().enumerate().map(|(p, &i)| bases[p].columns[i].as_slice()).collect();
    let best_fit = fit_columns(problem, &cols, &trend)?;

    let slices = if with_slices {
        (0..k)
            .map(|axis| slice_with_basis(problem, &best_freqs, axis, &grids[axis], &bases[axis], &trend))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    Ok(Periodogram {
        stage: Stage::Short,
        z_min: best_fit.z,
        best_freqs,
        best_fit,
        slices,
        combinations_tested: tested,
        grids,
    })
}

fn slice_with_basis<T: Real>(
    problem: &Problem<'_, T>,
    best: &[T],
    axis: usize,
    grid: &[T],
    basis: &Basis<T>,
    trend: &[Vec<T>],
) -> Result<Slice<T>> {
    let times = problem.ts.times();
    let fixed: Vec<Option<Vec<Vec<T>>>> = best
        .iter()
        .enumerate()
        .map(|(p, &f)| (p != axis).then(|| signal_columns(f, problem.spec.harmonics, times)))
        .collect();
    let points: Vec<(T, T)> = grid
        .par_iter()
        .enumerate()
        .filter(|&(_, f)| !best.iter().enumerate().any(|(p, b)| p != axis && b == f))
        .map(|(g, &f)| -> Result<(T, T)> {
            let cols: Vec<&[Vec<T>]> = fixed
                .iter()
                .map(|c| c.as_deref().unwrap_or(basis.columns[g].as_slice()))
                .collect();
            Ok((f, fit_columns(problem, &cols, trend)?.z))
        })
        .collect::<Result<Vec<_>>>()?;
    let (freqs, z) = points.into_iter().unzip();
    Ok(Slice { signal: axis, freqs, z })
}

/// `z` along signal `axis` over `grid`, all other frequencies fixed at `best`.
///
/// Grid points equal to another signal's best frequency are skipped.
pub fn slice<T: Real>(problem: &Problem<'_, T>, best: &[T], axis: usize, grid: &[T]) -> Result<Slice<T>> {
    if axis >= problem.spec.signals || best.len() != problem.spec.signals {
        return Err(Error::Contract(format!(
            "slice axis {axis} out of range for {} frequencies",
            best.len()
        )));
    }
    let times = problem.ts.times();
    let basis = Basis::new(grid, problem.spec.harmonics, times);
    let trend = trend_columns(problem.spec.trend_order, &problem.frame, times);
    slice_with_basis(problem, best, axis, grid, &basis, &trend)
}

/// Long search followed by a short search around its minimum.
pub fn two_stage_search<T: Real>(problem: &Problem<'_, T>, cfg: &SearchConfig) -> Result<(Periodogram<T>, Periodogram<T>)> {
    cfg.validate(problem.spec.signals)?;
    with_pool(cfg.workers, || -> Result<_> {
        let long = long_search_in_pool(problem, cfg)?;
        let short = short_search_in_pool(problem, cfg, &long.best_freqs)?;
        Ok((long, short))
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::Weighting;
    use crate::model::ModelSpec;
    use crate::series::TimeSeries;
    use rand::{Rng, SeedableRng};

    fn series(n: usize, seed: u64, f: &[f64]) -> TimeSeries<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        t[0] = 0.0;
        t[1] = 1.0;
        let y: Vec<f64> = t
            .iter()
            .map(|&x| {
                1.0 + f
                    .iter()
                    .enumerate()
                    .map(|(i, &fi)| (1.0 - 0.3 * i as f64) * (std::f64::consts::TAU * fi * x + i as f64).cos())
                    .sum::<f64>()
                    + 0.05 * (rng.random::<f64>() - 0.5)
            })
            .collect();
        TimeSeries::new(t, y, Some(vec![0.05; n])).unwrap()
    }

    #[test]
    fn binomial_and_combinations() {
        assert_eq!(binomial(200, 2), Some(19900));
        assert_eq!(binomial(5, 5), Some(1));
        assert_eq!(binomial(3, 4), Some(0));
        let n = 7;
        let k = 3;
        let mut idx = vec![0, 1, 2];
        let mut r = 0;
        loop {
            let mut u = vec![0; k];
            unrank_combination(r, n, k, &mut u);
            assert_eq!(u, idx);
            r += 1;
            if !next_combination(&mut idx, n) {
                break;
            }
        }
        assert_eq!(r, binomial(n, k).unwrap());
    }

    #[test]
    fn grid_is_descending_and_exact_at_ends() {
        let g = linear_grid(0.5, 2.0, 4);
        assert_eq!(g, vec![2.0, 1.5, 1.0, 0.5]);
    }

    #[test]
    fn long_search_counts_tuples() {
        let ts = series(40, 1, &[3.0, 5.0]);
        let spec = ModelSpec::new(2, 1, 0, 1.0, 8.0).unwrap();
        let p = Problem::new(&ts, &spec, Weighting::ChiSquare).unwrap();
        let cfg = SearchConfig {
            long_grid: 200,
            ..Default::default()
        };
        let res = long_search(&p, &cfg).unwrap();
        assert_eq!(res.combinations_tested, 19900);
        assert!(res.best_freqs[0] > res.best_freqs[1]);

        let cfg = SearchConfig {
            long_grid: 2,
            ..Default::default()
        };
        assert_eq!(long_search(&p, &cfg).unwrap().combinations_tested, 1);

        let cfg = SearchConfig {
            long_grid: 1,
            ..Default::default()
        };
        assert!(matches!(long_search(&p, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn single_signal_found_within_one_step() {
        let t: Vec<f64> = (0..60).map(|i| (i as f64 * 0.618).fract()).chain([0.0, 1.0]).collect();
        let y: Vec<f64> = t.iter().map(|&x| (std::f64::consts::TAU * x / 0.16).cos()).collect();
        let ts = TimeSeries::new(t, y, None).unwrap();
        let spec = ModelSpec::from_periods(1, 1, 0, 0.053, 0.48).unwrap();
        let p = Problem::new(&ts, &spec, Weighting::Unweighted).unwrap();
        let res = long_search(&p, &SearchConfig::default()).unwrap();
        let step = (spec.f_max - spec.f_min) / 199.0;
        assert!((res.best_freqs[0] - 1.0 / 0.16).abs() <= step);
        // K1 = 1: the slice is the whole periodogram
        assert_eq!(res.slices[0].freqs.len(), 200);
        let short = short_search(&p, &SearchConfig::default(), &res.best_freqs).unwrap();
        assert!(short.z_min <= res.z_min);
        let width = short.grids[0][0] - short.grids[0].last().unwrap();
        assert!((width - 0.05 * (spec.f_max - spec.f_min)).abs() < 1e-9);
    }

    #[test]
    fn slice_reproduces_minimum() {
        let ts = series(30, 4, &[4.0, 6.5]);
        let spec = ModelSpec::new(2, 1, 1, 2.0, 9.0).unwrap();
        let p = Problem::new(&ts, &spec, Weighting::ChiSquare).unwrap();
        let cfg = SearchConfig {
            long_grid: 40,
            short_grid: 21,
            ..Default::default()
        };
        let (long, short) = two_stage_search(&p, &cfg).unwrap();
        for per in [&long, &short] {
            for s in &per.slices {
                let k = s.freqs.iter().position(|&f| f == per.best_freqs[s.signal]).unwrap();
                assert!((s.z[k] - per.z_min).abs() <= 1e-14 * per.z_min);
            }
        }
        assert!(short.z_min <= long.z_min);
        assert!(slice(&p, &long.best_freqs, 2, &[1.0]).is_err());
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let ts = series(35, 9, &[3.0, 7.0]);
        let spec = ModelSpec::new(2, 1, 0, 1.0, 9.0).unwrap();
        let p = Problem::new(&ts, &spec, Weighting::ChiSquare).unwrap();
        let run = |w| {
            let cfg = SearchConfig {
                long_grid: 60,
                short_grid: 30,
                workers: w,
                ..Default::default()
            };
            two_stage_search(&p, &cfg).unwrap()
        };
        let a = run(1);
        for w in [2, 8] {
            let b = run(w);
            assert_eq!(a.0.best_freqs, b.0.best_freqs);
            assert_eq!(a.1.best_freqs, b.1.best_freqs);
            assert_eq!(a.1.z_min.to_bits(), b.1.z_min.to_bits());
        }
    }

    #[test]
    fn disjoint_reversed_mids_are_unstable() {
        let ts = series(30, 2, &[3.0]);
        let spec = ModelSpec::new(2, 1, 0, 1.0, 9.0).unwrap();
        let p = Problem::new(&ts, &spec, Weighting::ChiSquare).unwrap();
        let r = short_search(&p, &SearchConfig::default(), &[2.0, 8.0]);
        assert!(matches!(r, Err(Error::Instability(_))));
    }
}
