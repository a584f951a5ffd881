//! Seeded pick-and-place stand-in with injectable faults.
//!
//! Every "axis" contributes a joint position and a motor torque. Positions
//! are sums of logistic ramps whose onsets and heights depend on a random
//! can position plus small per-recording jitter; torques follow from the
//! velocity and a gravity-like `cos(position)` term.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::schema::SignalSchema;
use super::{Dataset, Sample, NORMAL_CATEGORY};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InjectionKind {
    /// Torque bias ramping up on one axis.
    Friction,
    /// All torques scaled up.
    Weight,
    /// Short torque spike with a small joint deflection.
    Collision,
    /// One torque partly loses its velocity dependence after a step.
    Miscommutation,
}

impl InjectionKind {
    pub const ALL: [InjectionKind; 4] = [
        InjectionKind::Friction,
        InjectionKind::Weight,
        InjectionKind::Collision,
        InjectionKind::Miscommutation,
    ];

    /// Category id of the fault this injector imitates.
    pub fn category(self) -> u8 {
        match self {
            InjectionKind::Friction => 0,
            InjectionKind::Weight => 1,
            InjectionKind::Collision => 2,
            InjectionKind::Miscommutation => 10,
        }
    }
}

impl fmt::Display for InjectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InjectionKind::Friction => "friction",
            InjectionKind::Weight => "weight",
            InjectionKind::Collision => "collision",
            InjectionKind::Miscommutation => "miscommutation",
        })
    }
}

impl FromStr for InjectionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "friction" => Ok(InjectionKind::Friction),
            "weight" => Ok(InjectionKind::Weight),
            "collision" => Ok(InjectionKind::Collision),
            "miscommutation" => Ok(InjectionKind::Miscommutation),
            _ => Err(Error::InvalidArgument(format!("unknown injection kind '{s}'"))),
        }
    }
}

/// Ground truth of one injected fault. `signal` is the affected column, or
/// `None` when all torques are touched; `t_star` is the onset (or centre for
/// collisions) in steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub sample_id: u32,
    pub kind: InjectionKind,
    pub signal: Option<usize>,
    pub t_star: usize,
    pub width: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_signals: usize,
    pub steps: usize,
    pub hz: u32,
    pub n_train: usize,
    pub n_normal_test: usize,
    pub n_anomalies: usize,
    /// Anomalies cycle through these kinds.
    pub kinds: Vec<InjectionKind>,
    /// Multiplies every fault magnitude; 0 yields normal-looking faults.
    pub magnitude_scale: f64,
    pub noise_std: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_signals: 8,
            steps: 256,
            hz: 100,
            n_train: 200,
            n_normal_test: 50,
            n_anomalies: 80,
            kinds: InjectionKind::ALL.to_vec(),
            magnitude_scale: 1.0,
            noise_std: 0.01,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_signals < 2 {
            return Err(Error::InvalidArgument("synthetic data needs at least 2 signals".into()));
        }
        if self.steps < 32 {
            return Err(Error::InvalidArgument("synthetic data needs at least 32 steps".into()));
        }
        if self.hz == 0 {
            return Err(Error::InvalidArgument("sampling rate must be positive".into()));
        }
        if self.n_train == 0 {
            return Err(Error::InvalidArgument("need at least one training sample".into()));
        }
        if self.n_anomalies > 0 && self.kinds.is_empty() {
            return Err(Error::InvalidArgument("anomalies requested but no injection kinds".into()));
        }
        if !(self.magnitude_scale >= 0.0 && self.noise_std >= 0.0) {
            return Err(Error::InvalidArgument("magnitude scale and noise must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub dataset: Dataset,
    pub injections: Vec<Injection>,
}

impl SynthDataset {
    pub fn injection(&self, sample_id: u32) -> Option<&Injection> {
        self.injections.iter().find(|i| i.sample_id == sample_id)
    }
}

struct Ramp {
    centre: f64,
    height: f64,
    width: f64,
}

struct Axis {
    offset: f64,
    ramps: Vec<Ramp>,
    kappa: f64,
    gamma: f64,
}

/// Per-dataset motion program shared by all recordings.
struct Program {
    axes: Vec<Axis>,
    steps: usize,
    n_signals: usize,
}

/// Per-recording randomness.
struct Motion {
    can: f64,
    onset_jitter: Vec<Vec<f64>>,
    height_jitter: Vec<Vec<f64>>,
    wobble: Vec<Vec<f64>>,
}

const RAMPS: usize = 3;
// share of a collision's torque spike seen as joint deflection
const COLLISION_DEFLECTION: f64 = 0.2;
const WOBBLE_STD: f64 = 0.05;
const WOBBLE_WIDTH: f64 = 4.0;

/// Hann bump of the collision's width centred on `t_star`.
fn hann(i: &Injection, t: usize) -> f64 {
    let w = i.width as f64;
    let u = (t as f64 - i.t_star as f64 + w / 2.0) / w;
    if (0.0..=1.0).contains(&u) {
        0.5 * (1.0 - (2.0 * std::f64::consts::PI * u).cos())
    } else {
        0.0
    }
}

/// Gaussian-smoothed white noise with unit marginal variance.
fn smooth_noise(rng: &mut ChaCha8Rng, len: usize, width: f64) -> Vec<f64> {
    let h = (3.0 * width).ceil() as usize;
    let kernel: Vec<f64> = (0..=2 * h)
        .map(|i| (-((i as f64 - h as f64) / width).powi(2) / 2.0).exp())
        .collect();
    let norm = kernel.iter().map(|k| k * k).sum::<f64>().sqrt();
    let white: Vec<f64> = (0..len + 2 * h).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    (0..len)
        .map(|t| kernel.iter().zip(&white[t..]).map(|(k, w)| k * w).sum::<f64>() / norm)
        .collect()
}

impl Program {
    fn draw(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let t = cfg.steps as f64;
        let axes = (0..cfg.n_signals.div_ceil(2))
            .map(|_| Axis {
                offset: rng.random_range(-1.0..1.0),
                ramps: (0..RAMPS)
                    .map(|k| {
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        Ramp {
                            centre: t * (k + 1) as f64 / (RAMPS + 1) as f64 + rng.random_range(-t / 16.0..t / 16.0),
                            height: sign * rng.random_range(0.5..1.5),
                            width: rng.random_range(6.0..14.0),
                        }
                    })
                    .collect(),
                kappa: rng.random_range(20.0..40.0),
                gamma: rng.random_range(0.3..0.8),
            })
            .collect();
        Program {
            axes,
            steps: cfg.steps,
            n_signals: cfg.n_signals,
        }
    }

    fn draw_motion(&self, rng: &mut ChaCha8Rng) -> Motion {
        let can = rng.random::<f64>();
        let mut jitter = |scale: f64| -> Vec<Vec<f64>> {
            self.axes
                .iter()
                .map(|_| (0..RAMPS).map(|_| scale * rng.random_range(-1.0..1.0)).collect())
                .collect()
        };
        let onset_jitter = jitter(6.0);
        let height_jitter = jitter(0.1);
        let wobble = self
            .axes
            .iter()
            .map(|_| smooth_noise(rng, self.steps, WOBBLE_WIDTH).into_iter().map(|v| WOBBLE_STD * v).collect())
            .collect();
        Motion {
            can,
            onset_jitter,
            height_jitter,
            wobble,
        }
    }

    fn draw_injection(&self, kind: InjectionKind, sample_id: u32, scale: f64, rng: &mut ChaCha8Rng) -> Injection {
        let t = self.steps;
        let torque_axes = self.n_signals / 2;
        let axis = rng.random_range(0..torque_axes);
        match kind {
            InjectionKind::Friction => Injection {
                sample_id,
                kind,
                signal: Some(2 * axis + 1),
                t_star: rng.random_range(0..t / 2),
                width: 0,
                magnitude: scale * rng.random_range(0.3..0.6),
            },
            InjectionKind::Weight => Injection {
                sample_id,
                kind,
                signal: None,
                t_star: 0,
                width: 0,
                magnitude: scale * rng.random_range(0.2..0.4),
            },
            InjectionKind::Collision => {
                let width = rng.random_range(5..=15);
                Injection {
                    sample_id,
                    kind,
                    signal: Some(2 * axis + 1),
                    t_star: rng.random_range(t / 10..t - t / 10),
                    width,
                    magnitude: scale * rng.random_range(0.8..1.6),
                }
            }
            InjectionKind::Miscommutation => Injection {
                sample_id,
                kind,
                signal: Some(2 * axis + 1),
                t_star: rng.random_range(t / 4..3 * t / 4),
                width: 0,
                magnitude: (scale * rng.random_range(0.5..0.9)).min(1.0),
            },
        }
    }

    /// Clean signals, faults applied, then sensor noise. Faults of
    /// magnitude zero leave the result bit-identical to the fault-free one.
    fn simulate(&self, m: &Motion, inj: Option<&Injection>, noise: &[f64]) -> Vec<f64> {
        let (t_len, s) = (self.steps, self.n_signals);
        let mut out = vec![0.0; t_len * s];
        let shift = m.can - 0.5;
        let mut pos = vec![0.0; t_len];
        for (a, axis) in self.axes.iter().enumerate() {
            for (t, p) in pos.iter_mut().enumerate() {
                let mut v = axis.offset;
                for (k, r) in axis.ramps.iter().enumerate() {
                    let centre = r.centre + shift * t_len as f64 / 4.0 + m.onset_jitter[a][k];
                    let height = r.height * (1.0 + 0.3 * shift * (k > 0) as u8 as f64) * (1.0 + m.height_jitter[a][k]);
                    v += height / (1.0 + (-(t as f64 - centre) / r.width).exp());
                }
                *p = v + m.wobble[a][t];
            }
            let hit = inj.filter(|i| i.kind == InjectionKind::Collision && i.signal == Some(2 * a + 1));
            if let Some(i) = hit {
                for (t, p) in pos.iter_mut().enumerate() {
                    *p += COLLISION_DEFLECTION * i.magnitude * hann(i, t);
                }
            }
            for (t, &p) in pos.iter().enumerate() {
                out[t * s + 2 * a] = p;
            }
            if 2 * a + 1 >= s {
                continue;
            }
            let col = 2 * a + 1;
            for t in 0..t_len {
                let (lo, hi) = (t.saturating_sub(1), (t + 1).min(t_len - 1));
                let vel = (pos[hi] - pos[lo]) / (hi - lo) as f64;
                let mut kappa = axis.kappa;
                let mut torque_scale = 1.0;
                let mut bias = 0.0;
                if let Some(i) = inj {
                    match i.kind {
                        InjectionKind::Miscommutation if i.signal == Some(col) && t >= i.t_star => {
                            kappa *= 1.0 - i.magnitude;
                        }
                        InjectionKind::Friction if i.signal == Some(col) && t >= i.t_star => {
                            bias = i.magnitude * (t - i.t_star) as f64 / (t_len - i.t_star) as f64;
                        }
                        InjectionKind::Weight => torque_scale = 1.0 + i.magnitude,
                        InjectionKind::Collision if i.signal == Some(col) => bias = i.magnitude * hann(i, t),
                        _ => {}
                    }
                }
                out[t * s + col] = torque_scale * (kappa * vel + axis.gamma * pos[t].cos()) + bias;
            }
        }
        for (o, n) in out.iter_mut().zip(noise) {
            *o += n;
        }
        out
    }
}

fn noise(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Builds train (normal only) and test (normal then anomalous) partitions.
/// Each recording draws from its own named stream, so the output does not
/// depend on thread scheduling.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<SynthDataset> {
    cfg.validate()?;
    let program = Program::draw(cfg, &mut rng::stream(seed, rng::SYNTH));
    let n_normal = cfg.n_train + cfg.n_normal_test;
    let total = n_normal + cfg.n_anomalies;
    let made: Vec<(Sample, Option<Injection>)> = (0..total)
        .into_par_iter()
        .map(|i| {
            let id = i as u32;
            let mut r = rng::stream(seed, &format!("{}/{id}", rng::SYNTH));
            let motion = program.draw_motion(&mut r);
            let inj = (i >= n_normal).then(|| {
                let kind = cfg.kinds[(i - n_normal) % cfg.kinds.len()];
                program.draw_injection(kind, id, cfg.magnitude_scale, &mut r)
            });
            let eps = noise(&mut r, cfg.steps * cfg.n_signals, cfg.noise_std);
            let values = Tensor::new(vec![cfg.steps, cfg.n_signals], program.simulate(&motion, inj.as_ref(), &eps))?;
            let (category, variant) = match &inj {
                Some(j) => (j.kind.category(), j.signal.map_or(0, |s| s as i64 / 2 + 1)),
                None => (NORMAL_CATEGORY, 0),
            };
            Ok((Sample::new(id, values, category, variant, cfg.hz)?, inj))
        })
        .collect::<Result<_>>()?;
    let mut train = Vec::with_capacity(cfg.n_train);
    let mut test = Vec::with_capacity(total - cfg.n_train);
    let mut injections = Vec::new();
    for (i, (s, inj)) in made.into_iter().enumerate() {
        if i < cfg.n_train {
            train.push(s);
        } else {
            test.push(s);
        }
        injections.extend(inj);
    }
    Ok(SynthDataset {
        dataset: Dataset {
            schema: SignalSchema::synthetic(cfg.n_signals),
            train,
            test,
        },
        injections,
    })
}
