//! The reverse (generative) trajectory.
//!
//! Each step predicts the noise in the current state, inverts the
//! anchored marginal to a clean-label estimate, and re-blends toward the
//! previous timestep:
//!
//! ```text
//! y0^ = (y_t - (1 - sqrt(ab_t)) y_hat - bb_t eps^) / sqrt(ab_t)
//! y_{t-1} = sqrt(ab_{t-1}) y0^ + (1 - sqrt(ab_{t-1})) y_hat + sigma_t e
//! ```
//!
//! with `sigma_t = bb_{t-1}`. In stochastic mode `e` is fresh Gaussian
//! noise, which makes the step exactly marginal-preserving whenever `y0^`
//! is the true label; deterministic mode reuses the predicted noise and
//! draws nothing. The prior enters every iteration through the
//! `(1 - sqrt(ab))` blend, which is what keeps trajectories inside a
//! bounded neighborhood of the anchor.

use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, DenoiserInput};
use crate::error::Result;
use crate::forward::noise_like;
use crate::rng::{self, Rng};
use crate::schedule::Schedule;
use crate::volume::{Volume, VolumeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Stochastic,
    Deterministic,
}

/// Reverse-run configuration. `n_samples` independent trajectories are
/// generated from RNG streams `seed/0..seed/n-1`, so any subset of
/// trajectories is reproducible in isolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub mode: SampleMode,
    pub clamp_y0: bool,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { mode: SampleMode::Stochastic, clamp_y0: true, n_samples: 16, seed: 0 }
    }
}

/// Inverts the anchored marginal around a noise prediction. With `clamp`
/// the estimate is clipped to the label range `[-1, 1]`.
pub fn reconstruct_y0(
    y_t: &Volume,
    y_hat: &Volume,
    eps_pred: &Volume,
    schedule: &Schedule,
    t: usize,
    clamp: bool,
) -> Result<Volume> {
    y_t.same_grid(y_hat)?;
    y_t.same_grid(eps_pred)?;
    schedule.check_step(t)?;
    let sa = schedule.alpha_bar(t).sqrt();
    let bb = schedule.beta_bar(t);
    let data: Vec<f64> = y_t
        .data()
        .iter()
        .zip(y_hat.data())
        .zip(eps_pred.data())
        .map(|((&yt, &yh), &e)| {
            let v = (yt - (1.0 - sa) * yh - bb * e) / sa;
            if clamp {
                v.clamp(-1.0, 1.0)
            } else {
                v
            }
        })
        .collect();
    let kind = if clamp { VolumeKind::Label } else { VolumeKind::Noise };
    Ok(y_t.with_data(kind, data))
}

/// The reverse blend with an explicit noise volume in place of the
/// `sigma_t e` term. Both sampling modes reduce to this.
pub fn reverse_step_with_noise(
    y0_pred: &Volume,
    y_hat: &Volume,
    noise: &Volume,
    schedule: &Schedule,
    t: usize,
) -> Result<Volume> {
    y0_pred.same_grid(y_hat)?;
    y0_pred.same_grid(noise)?;
    schedule.check_step(t)?;
    let sa_prev = schedule.alpha_bar(t - 1).sqrt();
    let sigma = schedule.beta_bar(t - 1);
    let data = y0_pred
        .data()
        .iter()
        .zip(y_hat.data())
        .zip(noise.data())
        .map(|((&y0, &yh), &e)| sa_prev * y0 + (1.0 - sa_prev) * yh + sigma * e)
        .collect();
    Ok(y0_pred.with_data(VolumeKind::Noise, data))
}

/// One reverse step `y_t -> y_{t-1}`. At `t = 1` the blend coefficients
/// are `(1, 0, 0)`, so the output equals `y0_pred` in both modes and no
/// randomness is consumed.
pub fn reverse_step(
    y0_pred: &Volume,
    y_hat: &Volume,
    eps_pred: &Volume,
    schedule: &Schedule,
    t: usize,
    mode: SampleMode,
    rng: &mut Rng,
) -> Result<Volume> {
    schedule.check_step(t)?;
    let sigma = schedule.beta_bar(t - 1);
    match mode {
        SampleMode::Deterministic => reverse_step_with_noise(y0_pred, y_hat, eps_pred, schedule, t),
        SampleMode::Stochastic => {
            let noise = if sigma > 0.0 {
                noise_like(y0_pred, rng)
            } else {
                Volume::zeros_like(y0_pred, VolumeKind::Noise)
            };
            reverse_step_with_noise(y0_pred, y_hat, &noise, schedule, t)
        }
    }
}

/// Draws the terminal state from the anchored marginal at `t = T` with
/// the label-domain midpoint as the nominal clean label:
/// `(1 - sqrt(ab_T)) y_hat + bb_T e`. For a floor `eta <= 1e-6` this is
/// `N(y_hat, I)` up to `O(sqrt(eta))` in the mean.
pub fn init_terminal(y_hat: &Volume, schedule: &Schedule, rng: &mut Rng) -> Volume {
    let t = schedule.steps();
    let sa = schedule.alpha_bar(t).sqrt();
    let bb = schedule.beta_bar(t);
    let data = y_hat
        .data()
        .iter()
        .map(|&h| (1.0 - sa) * h + bb * rng::standard_normal(rng))
        .collect();
    y_hat.with_data(VolumeKind::Noise, data)
}

/// Runs `cfg.n_samples` independent reverse trajectories and returns the
/// final label estimates. Trajectory `i` consumes only RNG stream
/// `(cfg.seed, i)`; with `clamp_y0` on, every output value is in
/// `[-1, 1]`.
pub fn sample(
    denoiser: &dyn Denoiser,
    x: Option<&Volume>,
    y_hat: &Volume,
    schedule: &Schedule,
    cfg: &SamplerConfig,
) -> Result<Vec<Volume>> {
    if cfg.n_samples == 0 {
        return Err(crate::error::VddError::InvalidConfig("n_samples must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let mut rng = rng::split(cfg.seed, i as u64);
        out.push(sample_one(denoiser, x, y_hat, schedule, cfg, &mut rng)?);
    }
    Ok(out)
}

fn sample_one(
    denoiser: &dyn Denoiser,
    x: Option<&Volume>,
    y_hat: &Volume,
    schedule: &Schedule,
    cfg: &SamplerConfig,
    rng: &mut Rng,
) -> Result<Volume> {
    let mut y = init_terminal(y_hat, schedule, rng);
    let mut y0 = Volume::zeros_like(y_hat, VolumeKind::Label);
    for t in (1..=schedule.steps()).rev() {
        let input = DenoiserInput::new(&y, x, y_hat, t);
        let eps_pred = denoiser.predict_eps(&input, schedule)?;
        y0 = reconstruct_y0(&y, y_hat, &eps_pred, schedule, t, cfg.clamp_y0)?;
        y = reverse_step(&y0, y_hat, &eps_pred, schedule, t, cfg.mode, rng)?;
    }
    // the t = 1 blend has coefficients (1, 0, 0); y is exactly y0
    debug_assert_eq!(y.data(), y0.data());
    Ok(y0)
}
