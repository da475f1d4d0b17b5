//! Noise prediction: the `eps(y_t, x, y_hat, t)` interface, a rater-set
//! type for finite ground-truth distributions, and the closed-form
//! Bayes-optimal (MMSE) oracle those distributions admit.
//!
//! The oracle is the verification backbone of the crate: for a finite set
//! of plausible labels the exact posterior over raters is available in
//! closed form, so the reverse sampler can be tested against a known
//! target distribution without training anything.

use crate::error::{Result, VddError};
use crate::schedule::Schedule;
use crate::volume::{to_signed, BinaryMask, Volume, VolumeKind};

/// Everything a denoiser may condition on at one step. The conditioning
/// image `x` is optional; implementations that want it fall back to the
/// prior when it is absent.
#[derive(Debug, Clone, Copy)]
pub struct DenoiserInput<'a> {
    pub y_t: &'a Volume,
    pub x: Option<&'a Volume>,
    pub y_hat: &'a Volume,
    pub t: usize,
}

impl<'a> DenoiserInput<'a> {
    pub fn new(y_t: &'a Volume, x: Option<&'a Volume>, y_hat: &'a Volume, t: usize) -> Self {
        DenoiserInput { y_t, x, y_hat, t }
    }

    pub fn validate(&self, schedule: &Schedule) -> Result<()> {
        self.y_t.same_grid(self.y_hat)?;
        if let Some(x) = self.x {
            self.y_t.same_grid(x)?;
        }
        schedule.check_step(self.t)
    }
}

/// Predicts the noise component of `y_t`.
pub trait Denoiser {
    fn predict_eps(&self, input: &DenoiserInput, schedule: &Schedule) -> Result<Volume>;

    /// Stable identifier recorded in run manifests.
    fn id(&self) -> String;
}

/// `K` expert masks over one grid with normalized weights: the finite
/// support of the ground-truth label distribution.
#[derive(Debug, Clone)]
pub struct RaterSet {
    masks: Vec<BinaryMask>,
    signed: Vec<Volume>,
    weights: Vec<f64>,
}

impl RaterSet {
    pub fn new(masks: Vec<BinaryMask>, weights: Vec<f64>) -> Result<Self> {
        if masks.is_empty() {
            return Err(VddError::EmptyRaterSet);
        }
        if weights.len() != masks.len() {
            return Err(VddError::InvalidWeights(format!(
                "{} weights for {} masks",
                weights.len(),
                masks.len()
            )));
        }
        for m in &masks[1..] {
            masks[0].same_grid(m)?;
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(VddError::InvalidWeights("weights must be finite and >= 0".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(VddError::InvalidWeights("weights sum to zero".into()));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        debug_assert!((weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let signed = masks.iter().map(to_signed).collect();
        Ok(RaterSet { masks, signed, weights })
    }

    pub fn uniform(masks: Vec<BinaryMask>) -> Result<Self> {
        let k = masks.len();
        Self::new(masks, vec![1.0; k.max(1)])
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    /// Rater masks as signed `{-1, +1}` label volumes.
    pub fn signed(&self) -> &[Volume] {
        &self.signed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted mean of the signed rater volumes: the consensus label
    /// field in `[-1, 1]`.
    pub fn mean_signed(&self) -> Volume {
        let n = self.signed[0].len();
        let mut data = vec![0.0; n];
        for (w, v) in self.weights.iter().zip(&self.signed) {
            for (d, &s) in data.iter_mut().zip(v.data()) {
                *d += w * s;
            }
        }
        self.signed[0].with_data(VolumeKind::Label, data)
    }

    /// Weighted mean of the `{0, 1}` indicators: the rater uncertainty map.
    pub fn indicator_mean(&self) -> Vec<f64> {
        let n = self.masks[0].data().len();
        let mut data = vec![0.0; n];
        for (w, m) in self.weights.iter().zip(&self.masks) {
            for (d, &b) in data.iter_mut().zip(m.data()) {
                if b {
                    *d += w;
                }
            }
        }
        data
    }
}

/// Bayes-optimal noise predictor for a finite label distribution.
///
/// Under the anchored marginal, `y_t | y0 = r_k` is Gaussian with mean
/// `sqrt(ab_t) r_k + (1 - sqrt(ab_t)) y_hat` and variance `bb_t^2`, so the
/// posterior over raters is a softmax of whole-volume squared distances.
/// The MMSE noise estimate then inverts the marginal around the posterior
/// mean of `y0`.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    raters: RaterSet,
}

impl OracleDenoiser {
    pub fn new(raters: RaterSet) -> Self {
        OracleDenoiser { raters }
    }

    pub fn raters(&self) -> &RaterSet {
        &self.raters
    }

    /// Posterior probability of each rater given `y_t`, log-sum-exp
    /// stabilized and clipped at `1e-300` before normalization.
    pub fn posterior(&self, input: &DenoiserInput, schedule: &Schedule) -> Result<Vec<f64>> {
        input.validate(schedule)?;
        self.raters.signed()[0].same_grid(input.y_t)?;
        let sa = schedule.alpha_bar(input.t).sqrt();
        let bb = schedule.beta_bar(input.t);
        let inv_two_var = 1.0 / (2.0 * bb * bb);

        let log_post: Vec<f64> = self
            .raters
            .signed()
            .iter()
            .zip(self.raters.weights())
            .map(|(r, &w)| {
                let mut dist2 = 0.0;
                for ((&yt, &y0), &yh) in input.y_t.data().iter().zip(r.data()).zip(input.y_hat.data()) {
                    let d = yt - sa * y0 - (1.0 - sa) * yh;
                    dist2 += d * d;
                }
                w.ln() - dist2 * inv_two_var
            })
            .collect();

        let max = log_post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut post: Vec<f64> = log_post.iter().map(|&l| (l - max).exp().max(1e-300)).collect();
        let sum: f64 = post.iter().sum();
        for p in &mut post {
            *p /= sum;
        }
        Ok(post)
    }

    /// Posterior mean of `y0` given `y_t`.
    pub fn posterior_mean(&self, input: &DenoiserInput, schedule: &Schedule) -> Result<Volume> {
        let post = self.posterior(input, schedule)?;
        let n = input.y_t.len();
        let mut data = vec![0.0; n];
        for (p, r) in post.iter().zip(self.raters.signed()) {
            for (d, &v) in data.iter_mut().zip(r.data()) {
                *d += p * v;
            }
        }
        Ok(input.y_t.with_data(VolumeKind::Label, data))
    }
}

impl Denoiser for OracleDenoiser {
    fn predict_eps(&self, input: &DenoiserInput, schedule: &Schedule) -> Result<Volume> {
        let mean = self.posterior_mean(input, schedule)?;
        let sa = schedule.alpha_bar(input.t).sqrt();
        let bb = schedule.beta_bar(input.t);
        let data = input
            .y_t
            .data()
            .iter()
            .zip(mean.data())
            .zip(input.y_hat.data())
            .map(|((&yt, &m), &yh)| (yt - sa * m - (1.0 - sa) * yh) / bb)
            .collect();
        Ok(input.y_t.with_data(VolumeKind::Noise, data))
    }

    fn id(&self) -> String {
        format!("oracle(k={})", self.raters.len())
    }
}

/// Predicts zero noise everywhere. Useful as a baseline that isolates the
/// anchor term in the reverse process.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullDenoiser;

impl Denoiser for NullDenoiser {
    fn predict_eps(&self, input: &DenoiserInput, schedule: &Schedule) -> Result<Volume> {
        input.validate(schedule)?;
        Ok(Volume::zeros_like(input.y_t, VolumeKind::Noise))
    }

    fn id(&self) -> String {
        "null".into()
    }
}
