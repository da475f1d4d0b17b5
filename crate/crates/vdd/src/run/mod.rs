//! Reproducible experiment runs: configuration, the on-disk dataset
//! layout, a small training loop for the patch regressor, and the
//! commands behind the `vdd` binary.
//!
//! A run is fully determined by its JSON config plus the seeds inside
//! it. Any config key can be overridden on the command line with a
//! dotted path (`--set sampler.n_samples=4`), and the effective config
//! is echoed next to every output so results stay attributable.

mod commands;
mod dataset;

pub use commands::{
    cmd_check_forward, cmd_eval, cmd_report, cmd_sample, cmd_synth, ForwardDiagnostics,
};
pub use dataset::{load_case, load_samples, CaseData, CaseSpec, DatasetManifest};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoiser::RaterSet;
use crate::error::{Result, VddError};
use crate::forward::{forward_marginal, noise_like};
use crate::patch::{train_step, PatchRegressor, TrainSample};
use crate::rng;
use crate::sampler::SamplerConfig;
use crate::schedule::{Schedule, ScheduleKind, DEFAULT_ETA, DEFAULT_STEPS};
use crate::synth::{PriorDegrade, RaterModel};
use crate::volume::Volume;

/// Environment variable naming the default output root; relative output
/// and dataset paths are resolved against it when it is set.
pub const OUT_ROOT_ENV: &str = "VDD_OUT_ROOT";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ScheduleSection {
    pub kind: ScheduleKind,
    #[serde(rename = "T")]
    pub steps: usize,
    pub eta: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection { kind: ScheduleKind::Linear, steps: DEFAULT_STEPS, eta: DEFAULT_ETA }
    }
}

impl ScheduleSection {
    /// Builds the schedule. Floors above the validated range are allowed
    /// through the diagnostic constructor so `check-forward` can show the
    /// terminal test catching them; the sampler refuses such schedules.
    pub fn build_lenient(&self) -> Result<Schedule> {
        Schedule::make_with_floor(self.kind, self.steps, self.eta)
    }

    pub fn build(&self) -> Result<Schedule> {
        Schedule::make(self.kind, self.steps, self.eta)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DenoiserChoice {
    /// Closed-form posterior over the case's rater set.
    Oracle,
    /// A trained patch regressor loaded from JSON.
    Mlp { path: PathBuf },
    /// Zero noise prediction.
    Null,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    /// Anchor to the case prior (the full anchored process).
    Prior,
    /// Anchor to the zero volume: the plain-DDPM ablation arm.
    Zero,
}

/// Grid and rater-family parameters for the synthetic suite.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SynthSection {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub offsets: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub angular_amp: f64,
    pub degrade: PriorDegrade,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            dims: [16, 16, 16],
            spacing: [1.0, 1.0, 1.0],
            offsets: vec![-1.0, 0.0, 1.0],
            weights: None,
            angular_amp: 0.0,
            degrade: PriorDegrade::None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RunConfig {
    pub schedule: ScheduleSection,
    pub sampler: SamplerConfig,
    pub denoiser: DenoiserChoice,
    pub anchor: Anchor,
    pub synth: SynthSection,
    /// Dataset directory (written by `synth`, read by everything else).
    pub dataset: PathBuf,
    /// Output directory for samples and metric tables.
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schedule: ScheduleSection::default(),
            sampler: SamplerConfig::default(),
            denoiser: DenoiserChoice::Oracle,
            anchor: Anchor::Prior,
            synth: SynthSection::default(),
            dataset: PathBuf::from("dataset"),
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| VddError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| VddError::json(path, e))
    }

    /// Applies `key=value` overrides where `key` is a dotted path into the
    /// JSON form of the config (`sampler.n_samples=4`). Values parse as
    /// JSON when possible and fall back to strings.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut tree = serde_json::to_value(self).expect("config is serializable");
        for item in overrides {
            let (path, raw) = item.split_once('=').ok_or_else(|| {
                VddError::InvalidConfig(format!("override {item:?} is not key=value"))
            })?;
            let value: serde_json::Value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            let parts: Vec<&str> = path.split('.').collect();
            set_dotted(&mut tree, path, &parts, value)?;
        }
        serde_json::from_value(tree)
            .map_err(|e| VddError::InvalidConfig(format!("after overrides: {e}")))
    }

    /// Resolves relative dataset/output paths against `VDD_OUT_ROOT`.
    pub fn resolve_roots(&mut self) {
        if let Ok(root) = std::env::var(OUT_ROOT_ENV) {
            let root = PathBuf::from(root);
            if self.dataset.is_relative() {
                self.dataset = root.join(&self.dataset);
            }
            if self.out.is_relative() {
                self.out = root.join(&self.out);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sampler.n_samples == 0 {
            return Err(VddError::InvalidConfig("sampler.n_samples must be >= 1".into()));
        }
        if self.synth.offsets.is_empty() {
            return Err(VddError::InvalidConfig("synth.offsets must name >= 1 rater".into()));
        }
        if self.synth.dims.iter().any(|&d| d < 8) {
            return Err(VddError::InvalidConfig(format!(
                "synth.dims {:?}: every axis must be >= 8",
                self.synth.dims
            )));
        }
        if self.synth.spacing.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(VddError::InvalidConfig(format!(
                "synth.spacing {:?}: all components must be > 0",
                self.synth.spacing
            )));
        }
        Ok(())
    }

    pub fn rater_model(&self) -> RaterModel {
        RaterModel {
            offsets: self.synth.offsets.clone(),
            weights: self.synth.weights.clone(),
            angular_amp: self.synth.angular_amp,
        }
    }

    /// Deterministic per-case sampling seed.
    pub fn case_seed(&self, case_index: usize) -> u64 {
        self.sampler
            .seed
            .wrapping_add((case_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

fn set_dotted(
    node: &mut serde_json::Value,
    full_path: &str,
    parts: &[&str],
    value: serde_json::Value,
) -> Result<()> {
    let map = node.as_object_mut().ok_or_else(|| {
        VddError::InvalidConfig(format!("{full_path}: parent of {:?} is not an object", parts[0]))
    })?;
    if parts.len() == 1 {
        map.insert(parts[0].to_string(), value);
        return Ok(());
    }
    let child = map
        .entry(parts[0].to_string())
        .or_insert_with(|| serde_json::Value::Object(Default::default()));
    set_dotted(child, full_path, &parts[1..], value)
}

// ---------------------------------------------------------------------------
// Patch-regressor training loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainOpts {
    pub steps: usize,
    pub batch_size: usize,
    pub sites_per_sample: usize,
    pub radius: usize,
    pub hidden: usize,
    pub lr: f64,
    /// Weight of the reconstructed-label MSE term added to the noise MSE.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for TrainOpts {
    fn default() -> Self {
        TrainOpts {
            steps: 600,
            batch_size: 2,
            sites_per_sample: 256,
            radius: 1,
            hidden: 16,
            lr: 0.02,
            lambda: 0.0,
            seed: 0,
        }
    }
}

/// Trains a patch regressor on the anchored process of one case: each
/// step draws raters, timesteps and noise, forms marginal states, and
/// regresses the noise at randomly chosen voxel sites.
pub fn train_regressor(
    raters: &RaterSet,
    y_hat: &Volume,
    x: Option<&Volume>,
    schedule: &Schedule,
    opts: &TrainOpts,
) -> Result<PatchRegressor> {
    use rand::Rng as _;
    let mut r = rng::seeded(opts.seed);
    let mut model = PatchRegressor::init(opts.radius, opts.hidden, &mut r);
    let n_vox = y_hat.len();
    for _ in 0..opts.steps {
        let mut batch = Vec::with_capacity(opts.batch_size);
        for _ in 0..opts.batch_size {
            let k = pick_weighted(raters.weights(), &mut r);
            let y0 = &raters.signed()[k];
            let t = r.random_range(1..=schedule.steps());
            let eps = noise_like(y0, &mut r);
            let y_t = forward_marginal(y0, y_hat, schedule, t, &eps)?;
            let sites = (0..opts.sites_per_sample)
                .map(|_| r.random_range(0..n_vox))
                .collect();
            batch.push(TrainSample {
                y_t,
                x: x.cloned(),
                y_hat: y_hat.clone(),
                t,
                eps,
                sites,
            });
        }
        let (next, _loss) = train_step(&model, &batch, schedule, opts.lr, opts.lambda)?;
        model = next;
    }
    Ok(model)
}

fn pick_weighted(weights: &[f64], r: &mut rng::Rng) -> usize {
    use rand::Rng as _;
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}
