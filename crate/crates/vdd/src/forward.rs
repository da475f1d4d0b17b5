//! The anchored forward (noising) process.
//!
//! Instead of drifting the clean label `y0` toward isotropic noise, each
//! step pulls it toward a coarse prior `y_hat`:
//!
//! ```text
//! single step:  y_t = sqrt(a_t) y_{t-1} + (1 - sqrt(a_t)) y_hat + sqrt(1 - a_t) e_t
//! marginal:     y_t = sqrt(ab_t) y0     + (1 - sqrt(ab_t)) y_hat + bb_t e
//! expectation:  E[y_t] = sqrt(ab_t) y0  + (1 - sqrt(ab_t)) y_hat
//! ```
//!
//! with `ab_t` the cumulative product and `bb_t = sqrt(1 - ab_t)`. With
//! `y_hat == 0` the marginal collapses to the plain DDPM marginal, which
//! [`forward_marginal_ddpm`] provides as an explicit reference. Because
//! `ab_T` is pinned to the schedule floor, the process converges in
//! expectation to the prior at the terminal step.

use crate::error::Result;
use crate::rng::{standard_normal, Rng};
use crate::schedule::Schedule;
use crate::volume::{Volume, VolumeKind};

/// Draws a per-voxel i.i.d. standard-normal noise volume on `like`'s grid.
pub fn noise_like(like: &Volume, rng: &mut Rng) -> Volume {
    let data = (0..like.len()).map(|_| standard_normal(rng)).collect();
    like.with_data(VolumeKind::Noise, data)
}

/// One anchored transition `y_{t-1} -> y_t` with fresh noise.
pub fn forward_step(
    y_prev: &Volume,
    y_hat: &Volume,
    schedule: &Schedule,
    t: usize,
    rng: &mut Rng,
) -> Result<Volume> {
    y_prev.same_grid(y_hat)?;
    schedule.check_step(t)?;
    let alpha = schedule.lookup(t)?.alpha;
    let sa = alpha.sqrt();
    let sb = (1.0 - alpha).sqrt();
    let data = y_prev
        .data()
        .iter()
        .zip(y_hat.data())
        .map(|(&p, &h)| sa * p + (1.0 - sa) * h + sb * standard_normal(rng))
        .collect();
    Ok(y_prev.with_data(VolumeKind::Noise, data))
}

/// Closed-form marginal `q(y_t | y0, y_hat)` with caller-supplied noise,
/// so the `(y_t, eps)` training pair and the inversion identity are exact.
/// `t = 0` returns `y0` unchanged.
pub fn forward_marginal(
    y0: &Volume,
    y_hat: &Volume,
    schedule: &Schedule,
    t: usize,
    eps: &Volume,
) -> Result<Volume> {
    y0.same_grid(y_hat)?;
    y0.same_grid(eps)?;
    if t == 0 {
        return Ok(y0.clone());
    }
    schedule.check_step(t)?;
    let sa = schedule.alpha_bar(t).sqrt();
    let bb = schedule.beta_bar(t);
    let data = y0
        .data()
        .iter()
        .zip(y_hat.data())
        .zip(eps.data())
        .map(|((&y, &h), &e)| sa * y + (1.0 - sa) * h + bb * e)
        .collect();
    Ok(y0.with_data(VolumeKind::Noise, data))
}

/// Plain DDPM marginal `sqrt(ab_t) y0 + bb_t eps` (no anchor), the
/// reference the anchored marginal must reduce to when `y_hat == 0`.
pub fn forward_marginal_ddpm(
    y0: &Volume,
    schedule: &Schedule,
    t: usize,
    eps: &Volume,
) -> Result<Volume> {
    y0.same_grid(eps)?;
    if t == 0 {
        return Ok(y0.clone());
    }
    schedule.check_step(t)?;
    let sa = schedule.alpha_bar(t).sqrt();
    let bb = schedule.beta_bar(t);
    let data = y0
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&y, &e)| sa * y + bb * e)
        .collect();
    Ok(y0.with_data(VolumeKind::Noise, data))
}

/// Noise-free conditional expectation of the marginal, valid for
/// `0 <= t <= T`.
pub fn forward_expectation(
    y0: &Volume,
    y_hat: &Volume,
    schedule: &Schedule,
    t: usize,
) -> Result<Volume> {
    y0.same_grid(y_hat)?;
    if t == 0 {
        return Ok(y0.clone());
    }
    schedule.check_step(t)?;
    let sa = schedule.alpha_bar(t).sqrt();
    let data = y0
        .data()
        .iter()
        .zip(y_hat.data())
        .map(|(&y, &h)| sa * y + (1.0 - sa) * h)
        .collect();
    Ok(y0.with_data(y0.kind(), data))
}
