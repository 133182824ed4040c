//! Observations and their derived span statistics.
//!
//! Data files are plain text with whitespace separated `t y [sigma]` columns.
//! Lines starting with `#` and blank lines are ignored. A file with two
//! columns yields an equal-weight series; a third column supplies per-point
//! errors and switches the fit statistic to chi-square.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::Weighting;
use crate::scalar::{mean_std, Real};

/// An immutable, time-sorted series of observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries<T> {
    t: Vec<T>,
    y: Vec<T>,
    sigma: Option<Vec<T>>,
}

impl<T: Real> TimeSeries<T> {
    /// Builds a validated series. Rows are sorted by time (stable, so exact
    /// duplicates keep their relative order).
    pub fn new(t: Vec<T>, y: Vec<T>, sigma: Option<Vec<T>>) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::Validation(format!(
                "{} times but {} values",
                t.len(),
                y.len()
            )));
        }
        if t.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 observations, got {}",
                t.len()
            )));
        }
        if t.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite time or value".into()));
        }
        if let Some(s) = &sigma {
            if s.len() != t.len() {
                return Err(Error::Validation(format!(
                    "{} errors for {} observations",
                    s.len(),
                    t.len()
                )));
            }
            if let Some(bad) = s.iter().position(|&v| !(v > T::zero()) || !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "error at row {} must be finite and > 0, got {}",
                    bad + 1,
                    s[bad]
                )));
            }
        }

        let sorted = t.windows(2).all(|w| w[0] <= w[1]);
        if sorted {
            return Ok(Self { t, y, sigma });
        }
        let mut order: Vec<usize> = (0..t.len()).collect();
        order.sort_by(|&a, &b| t[a].partial_cmp(&t[b]).expect("finite times"));
        let permute = |v: &[T]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(Self {
            t: permute(&t),
            y: permute(&y),
            sigma: sigma.as_deref().map(permute),
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.t
    }

    pub fn values(&self) -> &[T] {
        &self.y
    }

    pub fn errors(&self) -> Option<&[T]> {
        self.sigma.as_deref()
    }

    /// Chi-square when errors are present, plain residual sum otherwise.
    pub fn weighting(&self) -> Weighting {
        if self.sigma.is_some() {
            Weighting::ChiSquare
        } else {
            Weighting::Unweighted
        }
    }

    /// Same times and errors with new observed values.
    pub fn with_values(&self, y: Vec<T>) -> Result<Self> {
        if y.len() != self.len() {
            return Err(Error::Contract(format!(
                "replacement values have length {}, series has {}",
                y.len(),
                self.len()
            )));
        }
        Ok(Self {
            t: self.t.clone(),
            y,
            sigma: self.sigma.clone(),
        })
    }

    /// Drops the error column.
    pub fn without_errors(&self) -> Self {
        Self {
            t: self.t.clone(),
            y: self.y.clone(),
            sigma: None,
        }
    }

    /// Splits into the first `k` rows and the remainder.
    pub fn split_at(&self, k: usize) -> Result<(Self, Self)> {
        if k < 2 || k >= self.len() {
            return Err(Error::Contract(format!(
                "split index {k} leaves fewer than 2 leading or 1 trailing rows (n = {})",
                self.len()
            )));
        }
        let head = Self {
            t: self.t[..k].to_vec(),
            y: self.y[..k].to_vec(),
            sigma: self.sigma.as_ref().map(|s| s[..k].to_vec()),
        };
        let tail = Self {
            t: self.t[k..].to_vec(),
            y: self.y[k..].to_vec(),
            sigma: self.sigma.as_ref().map(|s| s[k..].to_vec()),
        };
        Ok((head, tail))
    }

    pub fn span_stats(&self) -> Result<SpanStats<T>> {
        span_stats(self)
    }
}

/// Time span and value statistics of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpanStats<T> {
    /// `t_n - t_1`
    pub delta_t: T,
    /// `t_1 + delta_t / 2`
    pub t_mid: T,
    /// Spacing of independent frequencies, `1 / delta_t`.
    pub f0: T,
    pub mean: T,
    pub std_dev: T,
}

impl<T: Real> SpanStats<T> {
    pub fn t_first(&self) -> T {
        self.t_mid - self.delta_t / T::lit(2.0)
    }

    pub fn t_last(&self) -> T {
        self.t_mid + self.delta_t / T::lit(2.0)
    }
}

pub fn span_stats<T: Real>(ts: &TimeSeries<T>) -> Result<SpanStats<T>> {
    let t = ts.times();
    let first = t[0];
    let last = t[t.len() - 1];
    let delta_t = last - first;
    if !(delta_t > T::zero()) {
        return Err(Error::DegenerateSpan);
    }
    let (mean, std_dev) = mean_std(ts.values());
    Ok(SpanStats {
        delta_t,
        t_mid: first + delta_t / T::lit(2.0),
        f0: T::one() / delta_t,
        mean,
        std_dev,
    })
}

/// Expected column layout of a data file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColumnLayout {
    /// Decide from the first data row.
    #[default]
    Auto,
    /// `t y`, equal weights.
    TwoColumn,
    /// `t y sigma`.
    ThreeColumn,
}

pub fn load_series<T: Real>(path: impl AsRef<Path>, layout: ColumnLayout) -> Result<TimeSeries<T>> {
    let text = std::fs::read_to_string(path)?;
    parse_series(&text, layout)
}

pub fn parse_series<T: Real>(text: &str, layout: ColumnLayout) -> Result<TimeSeries<T>> {
    let mut columns = match layout {
        ColumnLayout::Auto => None,
        ColumnLayout::TwoColumn => Some(2),
        ColumnLayout::ThreeColumn => Some(3),
    };
    let (mut t, mut y, mut s) = (Vec::new(), Vec::new(), Vec::new());

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let expected = *columns.get_or_insert(fields.len());
        if fields.len() != expected || !(2..=3).contains(&fields.len()) {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected {expected} columns, found {}", fields.len()),
            });
        }
        let mut nums = [T::zero(); 3];
        for (k, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("`{f}` is not a number"),
            })?;
            nums[k] = T::from_f64(v).ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("`{f}` is out of range"),
            })?;
        }
        t.push(nums[0]);
        y.push(nums[1]);
        if expected == 3 {
            s.push(nums[2]);
        }
    }

    let sigma = (columns == Some(3)).then_some(s);
    TimeSeries::new(t, y, sigma)
}

/// Renders a series in the data-file format. Values use the shortest
/// representation that parses back to the same float.
pub fn format_series<T: Real>(ts: &TimeSeries<T>, header: &[&str]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    for i in 0..ts.len() {
        match ts.errors() {
            Some(s) => {
                let _ = writeln!(out, "{} {} {}", ts.t[i], ts.y[i], s[i]);
            }
            None => {
                let _ = writeln!(out, "{} {}", ts.t[i], ts.y[i]);
            }
        }
    }
    out
}

pub fn write_series<T: Real>(path: impl AsRef<Path>, ts: &TimeSeries<T>, header: &[&str]) -> Result<()> {
    std::fs::write(path, format_series(ts, header))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_three_columns() {
        let text = (0..100)
            .map(|i| format!("{} {} 0.01\n", i as f64 / 99.0, i as f64))
            .collect::<String>();
        let ts: TimeSeries<f64> = parse_series(&text, ColumnLayout::Auto).unwrap();
        assert_eq!(ts.len(), 100);
        assert!(ts.errors().is_some());
        assert_eq!(ts.weighting(), Weighting::ChiSquare);
    }

    #[test]
    fn two_columns_mean_equal_weights() {
        let ts: TimeSeries<f64> = parse_series("# c\n0 1\n\n1 2\n", ColumnLayout::Auto).unwrap();
        assert!(ts.errors().is_none());
        assert_eq!(ts.weighting(), Weighting::Unweighted);
    }

    #[test]
    fn sorts_out_of_order_rows() {
        let ts: TimeSeries<f64> = parse_series("1 10 1\n0 5 2\n0.5 7 3\n", ColumnLayout::Auto).unwrap();
        assert_eq!(ts.times(), &[0.0, 0.5, 1.0]);
        assert_eq!(ts.values(), &[5.0, 7.0, 10.0]);
        assert_eq!(ts.errors().unwrap(), &[2.0, 3.0, 1.0]);
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse_series::<f64>("0 1\n# x\n1 abc\n", ColumnLayout::Auto).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_series::<f64>("0 1 1\n1 2\n", ColumnLayout::Auto).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_series::<f64>("0 1\n1 2\n", ColumnLayout::ThreeColumn).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn rejects_bad_errors_and_short_series() {
        assert!(matches!(
            parse_series::<f64>("0 1 0\n1 2 1\n", ColumnLayout::Auto),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_series::<f64>("0 1 -1\n1 2 1\n", ColumnLayout::Auto),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_series::<f64>("0 1\n", ColumnLayout::Auto),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn span_statistics() {
        let ts = TimeSeries::new(vec![0.0, 0.3, 1.0], vec![1.0, 2.0, 3.0], None).unwrap();
        let s = ts.span_stats().unwrap();
        assert_eq!(s.delta_t, 1.0);
        assert_eq!(s.t_mid, 0.5);
        assert_eq!(s.f0, 1.0);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std_dev, 1.0);

        let ts = TimeSeries::new(vec![10.0, 12.0, 20.0], vec![4.0; 3], None).unwrap();
        let s = ts.span_stats().unwrap();
        assert_eq!(s.delta_t, 10.0);
        assert_eq!(s.f0, 0.1);
        assert_eq!(s.mean, 4.0);
        assert_eq!(s.std_dev, 0.0);
    }

    #[test]
    fn zero_span_is_degenerate() {
        let ts = TimeSeries::new(vec![2.0, 2.0], vec![1.0, 3.0], None).unwrap();
        assert!(matches!(ts.span_stats(), Err(Error::DegenerateSpan)));
    }

    #[test]
    fn duplicates_pass_through() {
        let ts = TimeSeries::new(vec![0.0, 0.5, 0.5, 1.0], vec![1.0, 2.0, 2.0, 3.0], Some(vec![1.0; 4])).unwrap();
        assert_eq!(ts.len(), 4);
    }

    #[test]
    fn split_keeps_rows() {
        let ts = TimeSeries::new((0..10).map(f64::from).collect(), vec![0.0; 10], None).unwrap();
        let (a, b) = ts.split_at(8).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(b.times(), &[8.0, 9.0]);
        assert!(ts.split_at(10).is_err());
        assert!(ts.split_at(1).is_err());
    }

    proptest! {
        #[test]
        fn write_then_parse_is_bit_identical(
            rows in prop::collection::vec((-1e6f64..1e6, -1e12f64..1e12, 1e-9f64..1e3), 2..40)
        ) {
            let t = rows.iter().map(|r| r.0).collect();
            let y = rows.iter().map(|r| r.1).collect();
            let s = rows.iter().map(|r| r.2).collect();
            let ts = TimeSeries::new(t, y, Some(s)).unwrap();
            let back: TimeSeries<f64> = parse_series(&format_series(&ts, &["roundtrip"]), ColumnLayout::Auto).unwrap();
            prop_assert_eq!(back, ts);
        }

        #[test]
        fn span_stats_ignore_row_order(
            mut rows in prop::collection::vec((0f64..100.0, -50f64..50.0), 2..30),
            seed in any::<u64>()
        ) {
            prop_assume!(rows.iter().any(|r| r.0 != rows[0].0));
            let build = |rows: &[(f64, f64)]| {
                TimeSeries::new(rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect(), None).unwrap()
            };
            let a = build(&rows).span_stats().unwrap();
            // deterministic shuffle
            let mut state = seed | 1;
            for i in (1..rows.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                rows.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let b = build(&rows).span_stats().unwrap();
            prop_assert_eq!(a.delta_t, b.delta_t);
            prop_assert_eq!(a.t_mid, b.t_mid);
            prop_assert!((a.mean - b.mean).abs() <= 1e-12 * (1.0 + a.mean.abs()));
            prop_assert!((a.std_dev - b.std_dev).abs() <= 1e-10 * (1.0 + a.std_dev));
        }
    }
}
