//! A small per-voxel noise regressor: a two-layer perceptron over local
//! patches of `(y_t, y_hat, x)` plus a sinusoidal timestep embedding.
//!
//! This is deliberately minimal machinery; it exists to exercise the
//! training objective and to give the ablation experiments a learnable
//! denoiser that runs in seconds on a CPU. Gradients are hand-derived and
//! checked against central finite differences in the test suite.

use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, DenoiserInput};
use crate::error::{Result, VddError};
use crate::schedule::Schedule;
use crate::volume::{Volume, VolumeKind};

/// Dimension of the sinusoidal timestep embedding.
pub const T_EMBED_DIM: usize = 8;

/// Patch-based epsilon regressor. The input feature vector at a voxel is
/// `[k^3 of y_t, k^3 of y_hat, k^3 of x, embed(t)]` with `k = 2r + 1`;
/// out-of-grid patch voxels are filled with the prior value at the center
/// voxel, and a missing conditioning image falls back to the prior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchRegressor {
    radius: usize,
    hidden: usize,
    /// First layer, `hidden x feat_dim`, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// Output layer, `hidden`.
    w2: Vec<f64>,
    b2: f64,
}

/// One training item: a noisy state with the noise that produced it and
/// the voxel sites the loss is evaluated at.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub y_t: Volume,
    pub x: Option<Volume>,
    pub y_hat: Volume,
    pub t: usize,
    pub eps: Volume,
    pub sites: Vec<usize>,
}

fn timestep_embedding(t: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), T_EMBED_DIM);
    let half = T_EMBED_DIM / 2;
    for i in 0..half {
        let freq = (10_000f64).powf(-(i as f64) / half as f64);
        out[2 * i] = (t as f64 * freq).sin();
        out[2 * i + 1] = (t as f64 * freq).cos();
    }
}

impl PatchRegressor {
    pub fn feat_dim(radius: usize) -> usize {
        let k = 2 * radius + 1;
        3 * k * k * k + T_EMBED_DIM
    }

    /// Random small-weight initialization.
    pub fn init(radius: usize, hidden: usize, rng: &mut crate::rng::Rng) -> Self {
        let d = Self::feat_dim(radius);
        let scale = 0.15;
        let w1 = (0..hidden * d)
            .map(|_| scale * crate::rng::standard_normal(rng))
            .collect();
        let w2 = (0..hidden)
            .map(|_| scale * crate::rng::standard_normal(rng))
            .collect();
        PatchRegressor { radius, hidden, w1, b1: vec![0.0; hidden], w2, b2: 0.0 }
    }

    /// All-zero weights; predicts zero noise everywhere.
    pub fn zeroed(radius: usize, hidden: usize) -> Self {
        let d = Self::feat_dim(radius);
        PatchRegressor {
            radius,
            hidden,
            w1: vec![0.0; hidden * d],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    // -- flat parameter view (w1, b1, w2, b2), used by the optimizer and
    //    by finite-difference checks --

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn param(&self, i: usize) -> f64 {
        let (n1, n2, n3) = (self.w1.len(), self.b1.len(), self.w2.len());
        if i < n1 {
            self.w1[i]
        } else if i < n1 + n2 {
            self.b1[i - n1]
        } else if i < n1 + n2 + n3 {
            self.w2[i - n1 - n2]
        } else {
            self.b2
        }
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        let (n1, n2, n3) = (self.w1.len(), self.b1.len(), self.w2.len());
        if i < n1 {
            self.w1[i] = v;
        } else if i < n1 + n2 {
            self.b1[i - n1] = v;
        } else if i < n1 + n2 + n3 {
            self.w2[i - n1 - n2] = v;
        } else {
            self.b2 = v;
        }
    }

    pub fn is_finite(&self) -> bool {
        (0..self.param_count()).all(|i| self.param(i).is_finite())
    }

    /// Writes the feature vector for `site` into `buf`.
    fn fill_features(&self, input: &DenoiserInput, site: usize, buf: &mut [f64]) {
        let dims = input.y_t.dims();
        let (dh, hw, w) = (dims[0], dims[1], dims[2]);
        let z = site / (hw * w);
        let y = (site / w) % hw;
        let x = site % w;
        let r = self.radius as isize;
        let fill = input.y_hat.data()[site];
        let x_chan = input.x.unwrap_or(input.y_hat);
        let chans = [input.y_t.data(), input.y_hat.data(), x_chan.data()];
        let k3 = (2 * self.radius + 1).pow(3);
        let mut j = 0;
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    let (zz, yy, xx) = (z as isize + dz, y as isize + dy, x as isize + dx);
                    let inside = zz >= 0
                        && zz < dh as isize
                        && yy >= 0
                        && yy < hw as isize
                        && xx >= 0
                        && xx < w as isize;
                    if inside {
                        let idx = ((zz as usize) * hw + yy as usize) * w + xx as usize;
                        for (c, chan) in chans.iter().enumerate() {
                            buf[c * k3 + j] = chan[idx];
                        }
                    } else {
                        for c in 0..3 {
                            buf[c * k3 + j] = fill;
                        }
                    }
                    j += 1;
                }
            }
        }
        timestep_embedding(input.t, &mut buf[3 * k3..]);
    }

    /// Hidden activations and scalar output for one feature vector.
    fn forward(&self, feat: &[f64], hidden_buf: &mut [f64]) -> f64 {
        let d = feat.len();
        for (h, hb) in hidden_buf.iter_mut().enumerate() {
            let row = &self.w1[h * d..(h + 1) * d];
            let mut acc = self.b1[h];
            for (w, f) in row.iter().zip(feat) {
                acc += w * f;
            }
            *hb = acc.tanh();
        }
        let mut out = self.b2;
        for (w, h) in self.w2.iter().zip(hidden_buf.iter()) {
            out += w * h;
        }
        out
    }

    /// Loss and flat gradient over a batch. The per-site loss is
    /// `wt * (pred - eps)^2` with `wt = 1 + lambda * bb_t^2 / ab_t`, the
    /// exact weight induced by adding `lambda *` (reconstructed-label MSE)
    /// to the plain noise MSE through the marginal inversion.
    pub fn loss_and_grads(
        &self,
        batch: &[TrainSample],
        schedule: &Schedule,
        lambda: f64,
    ) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(VddError::InvalidConfig("empty training batch".into()));
        }
        let d = Self::feat_dim(self.radius);
        let mut feat = vec![0.0; d];
        let mut hidden = vec![0.0; self.hidden];
        let mut grad = vec![0.0; self.param_count()];
        let (n1, n2, n3) = (self.w1.len(), self.b1.len(), self.w2.len());
        let total_sites: usize = batch.iter().map(|s| s.sites.len()).sum();
        if total_sites == 0 {
            return Err(VddError::InvalidConfig("training batch has no sites".into()));
        }
        let mut loss = 0.0;
        for sample in batch {
            let input = DenoiserInput::new(&sample.y_t, sample.x.as_ref(), &sample.y_hat, sample.t);
            input.validate(schedule)?;
            sample.y_t.same_grid(&sample.eps)?;
            let c = schedule.lookup(sample.t)?;
            let wt = 1.0 + lambda * c.beta_bar * c.beta_bar / c.alpha_bar;
            for &site in &sample.sites {
                self.fill_features(&input, site, &mut feat);
                let pred = self.forward(&feat, &mut hidden);
                let resid = pred - sample.eps.data()[site];
                loss += wt * resid * resid;
                let dout = 2.0 * wt * resid / total_sites as f64;
                // output layer
                for (h, &hv) in hidden.iter().enumerate() {
                    grad[n1 + n2 + h] += dout * hv;
                }
                grad[n1 + n2 + n3] += dout;
                // hidden layer
                for (h, &hv) in hidden.iter().enumerate() {
                    let da = dout * self.w2[h] * (1.0 - hv * hv);
                    grad[n1 + h] += da;
                    let row = &mut grad[h * d..(h + 1) * d];
                    for (g, &f) in row.iter_mut().zip(feat.iter()) {
                        *g += da * f;
                    }
                }
            }
        }
        loss /= total_sites as f64;
        if !loss.is_finite() {
            return Err(VddError::NonFiniteLoss);
        }
        Ok((loss, grad))
    }

    /// Batch loss only (used for monitoring and finite-difference checks).
    pub fn batch_loss(&self, batch: &[TrainSample], schedule: &Schedule, lambda: f64) -> Result<f64> {
        let d = Self::feat_dim(self.radius);
        let mut feat = vec![0.0; d];
        let mut hidden = vec![0.0; self.hidden];
        let total_sites: usize = batch.iter().map(|s| s.sites.len()).sum();
        if total_sites == 0 {
            return Err(VddError::InvalidConfig("training batch has no sites".into()));
        }
        let mut loss = 0.0;
        for sample in batch {
            let input = DenoiserInput::new(&sample.y_t, sample.x.as_ref(), &sample.y_hat, sample.t);
            let c = schedule.lookup(sample.t)?;
            let wt = 1.0 + lambda * c.beta_bar * c.beta_bar / c.alpha_bar;
            for &site in &sample.sites {
                self.fill_features(&input, site, &mut feat);
                let pred = self.forward(&feat, &mut hidden);
                let resid = pred - sample.eps.data()[site];
                loss += wt * resid * resid;
            }
        }
        loss /= total_sites as f64;
        if !loss.is_finite() {
            return Err(VddError::NonFiniteLoss);
        }
        Ok(loss)
    }
}

/// One full-batch gradient step. Returns the updated model and the loss
/// measured before the step. `lr = 0` reports the loss and leaves the
/// model unchanged.
pub fn train_step(
    model: &PatchRegressor,
    batch: &[TrainSample],
    schedule: &Schedule,
    lr: f64,
    lambda: f64,
) -> Result<(PatchRegressor, f64)> {
    if lr < 0.0 || !lr.is_finite() {
        return Err(VddError::InvalidConfig(format!("learning rate {lr} must be >= 0")));
    }
    let (loss, grad) = model.loss_and_grads(batch, schedule, lambda)?;
    let mut next = model.clone();
    if lr > 0.0 {
        for (i, g) in grad.iter().enumerate() {
            next.set_param(i, next.param(i) - lr * g);
        }
        if !next.is_finite() {
            return Err(VddError::NonFiniteLoss);
        }
    }
    Ok((next, loss))
}

impl Denoiser for PatchRegressor {
    fn predict_eps(&self, input: &DenoiserInput, schedule: &Schedule) -> Result<Volume> {
        input.validate(schedule)?;
        if !self.is_finite() {
            return Err(VddError::NonFiniteLoss);
        }
        let d = Self::feat_dim(self.radius);
        let mut feat = vec![0.0; d];
        let mut hidden = vec![0.0; self.hidden];
        let data = (0..input.y_t.len())
            .map(|site| {
                self.fill_features(input, site, &mut feat);
                self.forward(&feat, &mut hidden)
            })
            .collect();
        Ok(input.y_t.with_data(VolumeKind::Noise, data))
    }

    fn id(&self) -> String {
        format!("mlp(r={},h={})", self.radius, self.hidden)
    }
}
