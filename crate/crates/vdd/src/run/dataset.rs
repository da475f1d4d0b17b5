//! On-disk layout of a synthetic dataset.
//!
//! ```text
//! <dataset>/
//!   dataset.json          manifest: case ids + the synth section used
//!   <case>/
//!     spec.json           shape + rater model + prior degradation
//!     rater_<k>.{json,f32}  signed rater masks (VDV1 label volumes)
//!     prior.{json,f32}    the anchor fed to the diffusion
//!     image.{json,f32}    conditioning intensity channel
//! ```
//!
//! Sample runs mirror the case directories under the output root with
//! `sample_<i>.{json,f32}` plus a `manifest.json` describing the run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::denoiser::RaterSet;
use crate::error::{Result, VddError};
use crate::synth::{PriorDegrade, RaterModel, ShapeKind, ShapeSpec};
use crate::volume::{binarize, read_volume, Volume};

use super::SynthSection;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CaseSpec {
    pub id: String,
    pub shape: ShapeSpec,
    pub raters: RaterModel,
    pub degrade: PriorDegrade,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub cases: Vec<String>,
    pub synth: SynthSection,
}

/// A case loaded back from disk.
#[derive(Debug, Clone)]
pub struct CaseData {
    pub spec: CaseSpec,
    pub raters: RaterSet,
    pub prior: Volume,
    pub image: Volume,
}

/// The standard three-morphotype suite on the configured grid: a sphere,
/// a dumbbell of two bridged lobes, and a spiculated lobe. Geometry
/// scales with the smallest grid axis.
pub fn default_cases(synth: &SynthSection) -> Vec<CaseSpec> {
    let m = *synth.dims.iter().min().expect("dims nonempty") as f64;
    let center = [
        (synth.dims[0] - 1) as f64 / 2.0,
        (synth.dims[1] - 1) as f64 / 2.0,
        (synth.dims[2] - 1) as f64 / 2.0,
    ];
    let raters = RaterModel {
        offsets: synth.offsets.clone(),
        weights: synth.weights.clone(),
        angular_amp: synth.angular_amp,
    };
    let shape = |kind: ShapeKind| ShapeSpec {
        kind,
        dims: synth.dims,
        spacing: synth.spacing,
        seed: synth.seed,
    };
    vec![
        CaseSpec {
            id: "sphere".into(),
            shape: shape(ShapeKind::Sphere { center, radius: 0.28 * m }),
            raters: raters.clone(),
            degrade: synth.degrade,
        },
        CaseSpec {
            id: "dumbbell".into(),
            shape: shape(ShapeKind::Dumbbell {
                centers: [
                    [center[0], center[1], center[2] - 0.20 * m],
                    [center[0], center[1], center[2] + 0.20 * m],
                ],
                radii: [0.17 * m, 0.17 * m],
            }),
            raters: raters.clone(),
            degrade: synth.degrade,
        },
        CaseSpec {
            id: "spiculated".into(),
            shape: shape(ShapeKind::Spiculated {
                center,
                radius: 0.20 * m,
                spike_count: 6,
                spike_length: 0.11 * m,
            }),
            raters,
            degrade: synth.degrade,
        },
    ]
}

pub(super) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| VddError::json(path, e))?;
    fs::write(path, text).map_err(|e| VddError::io(path, e))
}

pub(super) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| VddError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| VddError::json(path, e))
}

/// Loads one case directory back into memory.
pub fn load_case(case_dir: &Path) -> Result<CaseData> {
    let spec: CaseSpec = read_json(&case_dir.join("spec.json"))?;
    let k = spec.raters.offsets.len();
    let mut masks = Vec::with_capacity(k);
    for i in 0..k {
        let vol = read_volume(&case_dir.join(format!("rater_{i}")))?;
        masks.push(binarize(&vol));
    }
    let raters = match &spec.raters.weights {
        Some(w) => RaterSet::new(masks, w.clone())?,
        None => RaterSet::uniform(masks)?,
    };
    let prior = read_volume(&case_dir.join("prior"))?;
    let image = read_volume(&case_dir.join("image"))?;
    prior.same_grid(&image)?;
    prior.same_grid(&raters.signed()[0])?;
    Ok(CaseData { spec, raters, prior, image })
}

/// Loads the `n` sample volumes of a case's run directory.
pub fn load_samples(run_dir: &Path, n: usize) -> Result<Vec<Volume>> {
    (0..n)
        .map(|i| read_volume(&run_dir.join(format!("sample_{i:03}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cases_fit_their_grid() {
        let synth = SynthSection::default();
        let cases = default_cases(&synth);
        assert_eq!(cases.len(), 3);
        assert_eq!(cases[0].id, "sphere");
        for case in &cases {
            crate::synth::make_shape_sdf(&case.shape)
                .unwrap_or_else(|e| panic!("{}: {e}", case.id));
        }
    }

    #[test]
    fn default_cases_scale_to_larger_grids() {
        let synth = SynthSection { dims: [24, 24, 24], ..Default::default() };
        for case in default_cases(&synth) {
            crate::synth::make_shape_sdf(&case.shape)
                .unwrap_or_else(|e| panic!("{}: {e}", case.id));
        }
    }
}
