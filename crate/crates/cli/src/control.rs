//! Control files: one `key = value` per line, `#` starts a comment.
//!
//! Keys are case-insensitive. Relative paths resolve against the directory
//! holding the control file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use dcm_core::analysis::AnalysisConfig;
use dcm_core::bootstrap::BootstrapConfig;
use dcm_core::fit::Weighting;
use dcm_core::model::ModelSpec;
use dcm_core::search::SearchConfig;
use dcm_core::simulate::SimulationSpec;

use crate::error::CliError;

/// Every accepted key with a one-line description, in documentation order.
pub const KEYS: &[(&str, &str)] = &[
    ("data", "input series: `t y` or `t y sigma` per line"),
    ("output", "output directory (default `dcm_out`)"),
    ("weighting", "`auto`, `chi2` or `unweighted` (default `auto`)"),
    ("k1", "number of signals"),
    ("k2", "harmonics per signal (default 1)"),
    ("k3", "trend order, -1 for none (default 0)"),
    ("fmin", "lowest tested frequency"),
    ("fmax", "highest tested frequency"),
    ("pmin", "shortest tested period; sets fmax = 1/pmin"),
    ("pmax", "longest tested period; sets fmin = 1/pmax"),
    ("nl", "long-grid size (default 200)"),
    ("ns", "short-grid size per signal (default 200)"),
    ("c", "short-interval half-width factor (default 0.05)"),
    ("nb", "bootstrap rounds, 0 to skip (default 100)"),
    ("nb_grid", "short-grid size inside bootstrap rounds (default ns)"),
    ("nb_refine", "refine each bootstrap round, `true`/`false` (default true)"),
    ("seed", "bootstrap and simulation seed (default 1)"),
    ("workers", "worker threads (default 1)"),
    ("models", "ladder/prediction specs `K1,K2,K3` separated by `;`"),
    ("gamma", "Fisher-test critical level (default 0.001)"),
    ("max_poly", "highest polynomial order of the no-signal test (ladder)"),
    ("split", "number of leading points fitted by the prediction test"),
    ("dft_signals", "pre-whitening passes (default max(K1, 1))"),
    ("dft_order", "DFT detrending order (default max(K3, 0))"),
    ("curve_points", "samples of the dense model curve (default 1000)"),
    ("model", "simulation model 1..7"),
    ("n", "simulated sample size"),
    ("sn", "simulated signal to noise ratio, `inf` for none"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightingMode {
    Auto,
    ChiSquare,
    Unweighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlFile {
    /// The control file itself, as given.
    pub path: PathBuf,
    pub data: Option<PathBuf>,
    pub output: PathBuf,
    pub weighting: WeightingMode,
    pub k1: Option<usize>,
    pub k2: usize,
    pub k3: i32,
    pub f_min: Option<f64>,
    pub f_max: Option<f64>,
    pub n_long: usize,
    pub n_short: usize,
    pub c: f64,
    pub n_boot: usize,
    pub boot_grid: Option<usize>,
    pub boot_refine: bool,
    pub seed: u64,
    pub workers: usize,
    pub models: Vec<(usize, usize, i32)>,
    pub gamma: f64,
    pub max_poly: Option<i32>,
    pub split: Option<usize>,
    pub dft_signals: Option<usize>,
    pub dft_order: Option<i32>,
    pub curve_points: usize,
    pub sim_model: Option<u8>,
    pub sim_n: Option<usize>,
    pub sim_sn: Option<f64>,
}

fn parse_value<V: std::str::FromStr>(key: &str, line: usize, value: &str) -> Result<V, CliError> {
    value
        .parse()
        .map_err(|_| CliError::config_at(key, line, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, line: usize, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::config_at(key, line, format!("expected true or false, got `{value}`"))),
    }
}

fn parse_models(line: usize, value: &str) -> Result<Vec<(usize, usize, i32)>, CliError> {
    value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.split(',').map(str::trim).collect();
            let bad = || CliError::config_at("models", line, format!("expected `K1,K2,K3`, got `{item}`"));
            if parts.len() != 3 {
                return Err(bad());
            }
            Ok((
                parts[0].parse().map_err(|_| bad())?,
                parts[1].parse().map_err(|_| bad())?,
                parts[2].parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

impl ControlFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses `text` as if read from `path`.
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut ctl = ControlFile {
            path: path.to_path_buf(),
            data: None,
            output: base.join("dcm_out"),
            weighting: WeightingMode::Auto,
            k1: None,
            k2: 1,
            k3: 0,
            f_min: None,
            f_max: None,
            n_long: 200,
            n_short: 200,
            c: 0.05,
            n_boot: 100,
            boot_grid: None,
            boot_refine: true,
            seed: 1,
            workers: 1,
            models: Vec::new(),
            gamma: dcm_core::select::DEFAULT_GAMMA,
            max_poly: None,
            split: None,
            dft_signals: None,
            dft_order: None,
            curve_points: 1000,
            sim_model: None,
            sim_n: None,
            sim_sn: None,
        };
        let mut seen = HashSet::new();
        let (mut p_min, mut p_max) = (None, None);

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| CliError::config_line(line, format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(CliError::config_at(&key, line, "unknown key".to_string()));
            }
            if !seen.insert(key.clone()) {
                return Err(CliError::config_at(&key, line, "duplicate key".to_string()));
            }
            if value.is_empty() {
                return Err(CliError::config_at(&key, line, "missing value".to_string()));
            }
            let k = key.as_str();
            match k {
                "data" => ctl.data = Some(base.join(value)),
                "output" => ctl.output = base.join(value),
                "weighting" => {
                    ctl.weighting = match value.to_ascii_lowercase().as_str() {
                        "auto" => WeightingMode::Auto,
                        "chi2" | "chisquare" | "chi-square" => WeightingMode::ChiSquare,
                        "unweighted" | "none" => WeightingMode::Unweighted,
                        _ => return Err(CliError::config_at(k, line, format!("unknown weighting `{value}`"))),
                    }
                }
                "k1" => ctl.k1 = Some(parse_value(k, line, value)?),
                "k2" => ctl.k2 = parse_value(k, line, value)?,
                "k3" => ctl.k3 = parse_value(k, line, value)?,
                "fmin" => ctl.f_min = Some(parse_value(k, line, value)?),
                "fmax" => ctl.f_max = Some(parse_value(k, line, value)?),
                "pmin" => p_min = Some((line, parse_value::<f64>(k, line, value)?)),
                "pmax" => p_max = Some((line, parse_value::<f64>(k, line, value)?)),
                "nl" => ctl.n_long = parse_value(k, line, value)?,
                "ns" => ctl.n_short = parse_value(k, line, value)?,
                "c" => ctl.c = parse_value(k, line, value)?,
                "nb" => ctl.n_boot = parse_value(k, line, value)?,
                "nb_grid" => ctl.boot_grid = Some(parse_value(k, line, value)?),
                "nb_refine" => ctl.boot_refine = parse_bool(k, line, value)?,
                "seed" => ctl.seed = parse_value(k, line, value)?,
                "workers" => ctl.workers = parse_value(k, line, value)?,
                "models" => ctl.models = parse_models(line, value)?,
                "gamma" => ctl.gamma = parse_value(k, line, value)?,
                "max_poly" => ctl.max_poly = Some(parse_value(k, line, value)?),
                "split" => ctl.split = Some(parse_value(k, line, value)?),
                "dft_signals" => ctl.dft_signals = Some(parse_value(k, line, value)?),
                "dft_order" => ctl.dft_order = Some(parse_value(k, line, value)?),
                "curve_points" => ctl.curve_points = parse_value(k, line, value)?,
                "model" => ctl.sim_model = Some(parse_value(k, line, value)?),
                "n" => ctl.sim_n = Some(parse_value(k, line, value)?),
                "sn" => {
                    ctl.sim_sn = Some(if value.eq_ignore_ascii_case("inf") {
                        f64::INFINITY
                    } else {
                        parse_value(k, line, value)?
                    })
                }
                _ => unreachable!("key list and match arms disagree on `{k}`"),
            }
        }

        for (key, period, freq) in [("pmax", p_max, &mut ctl.f_min), ("pmin", p_min, &mut ctl.f_max)] {
            if let Some((line, p)) = period {
                if freq.is_some() {
                    return Err(CliError::config_at(key, line, "give either periods or frequencies, not both".into()));
                }
                if p.is_nan() || p <= 0.0 {
                    return Err(CliError::config_at(key, line, format!("period must be positive, got {p}")));
                }
                *freq = Some(1.0 / p);
            }
        }
        if !(ctl.gamma > 0.0 && ctl.gamma < 1.0) {
            return Err(CliError::config("gamma", format!("must lie in (0, 1), got {}", ctl.gamma)));
        }
        if ctl.curve_points < 2 {
            return Err(CliError::config("curve_points", "need at least 2".into()));
        }
        Ok(ctl)
    }

    pub fn data_path(&self) -> Result<&Path, CliError> {
        self.data.as_deref().ok_or_else(|| CliError::config("data", "missing".into()))
    }

    pub fn frequency_range(&self) -> Result<(f64, f64), CliError> {
        let f_min = self.f_min.ok_or_else(|| CliError::config("fmin", "missing (give fmin or pmax)".into()))?;
        let f_max = self.f_max.ok_or_else(|| CliError::config("fmax", "missing (give fmax or pmin)".into()))?;
        if !(f_min > 0.0 && f_min < f_max && f_max.is_finite()) {
            return Err(CliError::config("fmin", format!("need 0 < fmin < fmax, got [{f_min}, {f_max}]")));
        }
        Ok((f_min, f_max))
    }

    fn build_spec(&self, k1: usize, k2: usize, k3: i32, key: &str) -> Result<ModelSpec<f64>, CliError> {
        let (f_min, f_max) = if k1 == 0 {
            self.frequency_range().unwrap_or((0.0, 1.0))
        } else {
            self.frequency_range()?
        };
        ModelSpec::new(k1, k2, k3, f_min, f_max).map_err(|e| CliError::config(key, e.to_string()))
    }

    /// The single model of `run`.
    pub fn spec(&self) -> Result<ModelSpec<f64>, CliError> {
        let k1 = self.k1.ok_or_else(|| CliError::config("k1", "missing".into()))?;
        self.build_spec(k1, self.k2, self.k3, "k1")
    }

    /// Specs of `ladder` and `predict`; falls back to the single model.
    pub fn specs(&self) -> Result<Vec<ModelSpec<f64>>, CliError> {
        if self.models.is_empty() {
            return Ok(vec![self.spec()?]);
        }
        self.models.iter().map(|&(a, b, c)| self.build_spec(a, b, c, "models")).collect()
    }

    pub fn search(&self) -> Result<SearchConfig, CliError> {
        let cfg = SearchConfig {
            long_grid: self.n_long,
            short_grid: self.n_short,
            half_width_factor: self.c,
            workers: self.workers,
        };
        if self.workers == 0 {
            return Err(CliError::config("workers", "must be at least 1".into()));
        }
        if self.n_short < 3 {
            return Err(CliError::config("ns", format!("need at least 3, got {}", self.n_short)));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(CliError::config("c", format!("must lie in (0, 1), got {}", self.c)));
        }
        if self.n_long == 0 {
            return Err(CliError::config("nl", "must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn analysis(&self) -> Result<AnalysisConfig, CliError> {
        let bootstrap = match self.n_boot {
            0 => None,
            1 => return Err(CliError::config("nb", "need 0 (off) or at least 2 rounds".into())),
            rounds => Some(BootstrapConfig {
                rounds,
                seed: self.seed,
                refine: self.boot_refine,
                short_grid: self.boot_grid,
            }),
        };
        if self.boot_grid.is_some_and(|g| g < 3) {
            return Err(CliError::config("nb_grid", "need at least 3".into()));
        }
        Ok(AnalysisConfig {
            search: self.search()?,
            bootstrap,
            weighting: match self.weighting {
                WeightingMode::Auto => None,
                WeightingMode::ChiSquare => Some(Weighting::ChiSquare),
                WeightingMode::Unweighted => Some(Weighting::Unweighted),
            },
        })
    }

    pub fn simulation(&self) -> Result<SimulationSpec, CliError> {
        let spec = SimulationSpec {
            model: self.sim_model.ok_or_else(|| CliError::config("model", "missing".into()))?,
            n: self.sim_n.ok_or_else(|| CliError::config("n", "missing".into()))?,
            sn: self.sim_sn.ok_or_else(|| CliError::config("sn", "missing".into()))?,
            seed: self.seed,
        };
        spec.validate().map_err(|e| CliError::config("model", e.to_string()))?;
        Ok(spec)
    }
}
