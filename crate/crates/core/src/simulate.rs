//! The seven simulated data families.
//!
//! Every model has peak-to-peak signal amplitude 2 on a unit time span, so
//! the noise level is `sigma = (A / 2) / SN = 1 / SN`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{eval_model, BetaVector, Frame, ModelSpec, SignalParams, SignalSummary};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    /// Model number, 1 to 7.
    pub model: u8,
    pub n: usize,
    /// Signal to noise ratio; infinite means noiseless data without an error column.
    pub sn: f64,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=7).contains(&self.model) {
            return Err(Error::UnknownModel(self.model));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("simulation needs n >= 2, got {}", self.n)));
        }
        if !(self.sn > 0.0) {
            return Err(Error::Config(format!("SN must be positive, got {}", self.sn)));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        1.0 / self.sn
    }
}

/// Closed-form model of one family, written in the fitting parameterization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelDefinition {
    pub spec: ModelSpec<f64>,
    pub beta: BetaVector<f64>,
    pub frame: Frame<f64>,
    pub p_min: f64,
    pub p_max: f64,
}

/// `(A/2) cos(2 pi (t - t_max) / P)` as `(B, C)`.
fn cosine(a: f64, t_max: f64, p: f64) -> [f64; 2] {
    let w = std::f64::consts::TAU * t_max / p;
    [a / 2.0 * w.cos(), a / 2.0 * w.sin()]
}

/// `c1 cos(2 pi t / P) + c2 cos(4 pi (t - c3) / P)` as `[B1, C1, B2, C2]`.
fn double_wave(c1: f64, c2: f64, c3: f64, p: f64) -> [f64; 4] {
    let w = 2.0 * std::f64::consts::TAU * c3 / p;
    [c1, 0.0, c2 * w.cos(), c2 * w.sin()]
}

const PARABOLA: [f64; 3] = [1.0, 0.25, 0.5];

pub fn model_definition(model: u8) -> Result<ModelDefinition> {
    let (signals, harmonics, order, freqs, mut linear, p_min, p_max): (usize, usize, i32, Vec<f64>, Vec<f64>, f64, f64) =
        match model {
            1 => (1, 1, 0, vec![1.0 / 1.9], cosine(2.0, 0.4, 1.9).to_vec(), 0.63, 5.70),
            2 => (1, 1, 2, vec![1.0 / 1.9], cosine(2.0, 0.4, 1.9).to_vec(), 0.63, 4.70),
            3 | 4 => (
                2,
                1,
                if model == 3 { 0 } else { 2 },
                vec![1.0 / 0.16, 1.0 / 0.17],
                [cosine(2.0, 0.03, 0.16), cosine(2.0, 0.05, 0.17)].concat(),
                0.053,
                0.48,
            ),
            5 => (
                2,
                1,
                2,
                vec![1.0 / 1.4, 1.0 / 1.9],
                [cosine(2.0, 0.4, 1.4), cosine(2.0, 0.6, 1.9)].concat(),
                0.47,
                4.20,
            ),
            6 => (1, 2, 0, vec![1.0 / 0.16], double_wave(0.3655, 0.7310, 0.3, 0.16).to_vec(), 0.053, 0.48),
            7 => (
                2,
                2,
                2,
                vec![1.0 / 1.2, 1.0 / 1.4],
                [double_wave(0.3687, 0.7374, 0.4, 1.2), double_wave(0.3708, 0.7416, 0.6, 1.4)].concat(),
                0.4,
                3.6,
            ),
            other => return Err(Error::UnknownModel(other)),
        };
    match (model, order) {
        (6, _) => linear.push(0.0),
        (_, 0) => linear.push(1.0),
        _ => linear.extend_from_slice(&PARABOLA),
    }
    Ok(ModelDefinition {
        spec: ModelSpec::from_periods(signals, harmonics, order, p_min, p_max)?,
        beta: BetaVector::new(freqs, linear),
        frame: Frame::new(0.5, 1.0),
        p_min,
        p_max,
    })
}

/// Draws a data set: uniform times on `[0, 1]` with the extremes pinned to
/// the ends, model values plus Gaussian noise.
pub fn simulate(spec: &SimulationSpec) -> Result<TimeSeries<f64>> {
    spec.validate()?;
    let def = model_definition(spec.model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut t: Vec<f64> = (0..spec.n).map(|_| rng.random::<f64>()).collect();
    t.sort_by(f64::total_cmp);
    t[0] = 0.0;
    t[spec.n - 1] = 1.0;
    let g = eval_model(&def.spec, &def.beta, &def.frame, &t)?;
    if spec.sn.is_infinite() {
        return TimeSeries::new(t, g, None);
    }
    let sigma = spec.sigma();
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
    let y = g.into_iter().map(|v| v + noise.sample(&mut rng)).collect();
    TimeSeries::new(t, y, Some(vec![sigma; spec.n]))
}

fn signal(period: f64, t_min1: f64, t_max1: f64, secondary: Option<(f64, f64)>) -> SignalParams<f64> {
    SignalParams {
        period,
        amplitude: 2.0,
        t_min1: Some(t_min1),
        t_max1: Some(t_max1),
        t_min2: secondary.map(|s| s.0),
        t_max2: secondary.map(|s| s.1),
        tie: false,
    }
}

/// Published ground truth of a model family.
pub fn model_truth(model: u8) -> Result<SignalSummary<f64>> {
    let (signals, trend) = match model {
        1 => (vec![signal(1.9, 1.35, 0.40, None)], vec![1.0]),
        2 => (vec![signal(1.9, 1.35, 0.40, None)], PARABOLA.to_vec()),
        3 | 4 => (
            vec![signal(0.16, 0.11, 0.03, None), signal(0.17, 0.135, 0.05, None)],
            if model == 3 { vec![1.0] } else { PARABOLA.to_vec() },
        ),
        5 => (vec![signal(1.4, 1.1, 0.4, None), signal(1.9, 1.55, 0.6, None)], PARABOLA.to_vec()),
        6 => (vec![signal(0.16, 0.0979, 0.1421, Some((0.0225, 0.0575)))], vec![0.0]),
        7 => (
            vec![
                signal(1.2, 0.6892, 1.0195, Some((0.1134, 0.3779))),
                signal(1.4, 0.9262, 1.3109, Some((0.2766, 0.5864))),
            ],
            PARABOLA.to_vec(),
        ),
        other => return Err(Error::UnknownModel(other)),
    };
    Ok(SignalSummary { signals, trend })
}

/// `Model{id}n{n}SN{sn}.dat`
pub fn file_name(spec: &SimulationSpec) -> String {
    let sn = if spec.sn.is_infinite() {
        "inf".to_string()
    } else if spec.sn.fract() == 0.0 && spec.sn < 1e15 {
        format!("{}", spec.sn as u64)
    } else {
        format!("{}", spec.sn)
    };
    format!("Model{}n{}SN{}.dat", spec.model, spec.n, sn)
}
