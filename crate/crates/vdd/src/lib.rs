//! Anchored volumetric diffusion for multi-rater segmentation
//! uncertainty.
//!
//! Instead of denoising from isotropic Gaussian noise, the generative
//! process here anchors its trajectory to a coarse prior segmentation:
//! the forward chain converges in expectation to the prior, and the
//! reverse chain explores label variations as residuals around it. The
//! crate provides
//!
//! - the anchored forward process and its closed-form marginal
//!   ([`forward`]),
//! - noise schedules with an exact terminal floor ([`schedule`]),
//! - the reverse sampler with stochastic and deterministic modes
//!   ([`sampler`]),
//! - a Bayes-optimal oracle denoiser for finite rater distributions and
//!   a small trainable patch regressor ([`denoiser`], [`patch`]),
//! - the uncertainty metric suite: Dice, HD95, generalized energy
//!   distance, collective insight, SNCC ([`metrics`]),
//! - deterministic synthetic multi-rater phantoms ([`synth`]),
//! - and a reproducible experiment driver ([`run`]) exposed by the `vdd`
//!   binary.
//!
//! Start with the runnable examples: `cargo run --release --example
//! oracle_sampling` walks the full pipeline on a synthetic case.

pub mod denoiser;
pub mod error;
pub mod forward;
pub mod metrics;
pub mod patch;
pub mod rng;
pub mod run;
pub mod sampler;
pub mod schedule;
pub mod synth;
pub mod volume;

pub use denoiser::{Denoiser, DenoiserInput, NullDenoiser, OracleDenoiser, RaterSet};
pub use error::{Result, VddError};
pub use forward::{forward_expectation, forward_marginal, forward_marginal_ddpm, forward_step};
pub use metrics::{ci_score, dice, ged, hd95, majority_mask, sncc, MetricReport};
pub use patch::{train_step, PatchRegressor, TrainSample};
pub use sampler::{init_terminal, reconstruct_y0, reverse_step, sample, SampleMode, SamplerConfig};
pub use schedule::{Schedule, ScheduleKind};
pub use synth::{make_image, make_prior, make_raters, make_shape_sdf, PriorDegrade, RaterModel, ShapeKind, ShapeSpec};
pub use volume::{binarize, read_volume, to_signed, write_volume, BinaryMask, Volume, VolumeKind};
