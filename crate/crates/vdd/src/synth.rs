//! Deterministic synthetic multi-rater phantoms.
//!
//! Shapes are signed-distance level sets (negative inside) in voxel
//! units: exact for spheres, min-composed for dumbbells, and radially
//! modulated for spiculated lobes. Raters are level-set offsets of one
//! shared field, so the ground-truth disagreement structure is known
//! exactly; the prior is the (optionally degraded) rater consensus.

use serde::{Deserialize, Serialize};

use crate::denoiser::RaterSet;
use crate::error::{Result, VddError};
use crate::rng;
use crate::volume::{binarize, to_signed, BinaryMask, Volume, VolumeKind};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShapeKind {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Dumbbell {
        centers: [[f64; 3]; 2],
        radii: [f64; 2],
    },
    Spiculated {
        center: [f64; 3],
        radius: f64,
        spike_count: usize,
        spike_length: f64,
    },
}

/// A shape on a concrete grid. `seed` drives the spike directions of
/// spiculated shapes; everything else is closed-form.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ShapeSpec {
    #[serde(flatten)]
    pub kind: ShapeKind,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    #[serde(default)]
    pub seed: u64,
}

/// Boundary-offset rater family over one shape field. Rater `k` takes the
/// level set `sdf <= offsets[k]`; a positive `angular_amp` additionally
/// modulates each rater's offset over the sphere of directions, which
/// breaks the nesting of the family.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RaterModel {
    pub offsets: Vec<f64>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub angular_amp: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum PriorDegrade {
    #[default]
    None,
    Erode1,
    Dilate1,
    Threshold {
        tau: f64,
    },
}

fn check_margin(spec: &ShapeSpec, center: [f64; 3], reach: f64) -> Result<()> {
    if reach <= 0.0 {
        return Err(VddError::ShapeOutOfBounds(format!("non-positive radius {reach}")));
    }
    for (axis, (&c, &dim)) in center.iter().zip(&spec.dims).enumerate() {
        let hi = (dim - 1) as f64 - 1.0;
        if c - reach < 1.0 || c + reach > hi {
            return Err(VddError::ShapeOutOfBounds(format!(
                "axis {axis}: center {c} reach {reach} vs grid 1..{hi}"
            )));
        }
    }
    Ok(())
}

fn sphere_sdf_at(p: [f64; 3], center: [f64; 3], radius: f64) -> f64 {
    let dz = p[0] - center[0];
    let dy = p[1] - center[1];
    let dx = p[2] - center[2];
    (dz * dz + dy * dy + dx * dx).sqrt() - radius
}

/// Evaluates the shape's signed distance field (negative inside) on the
/// grid, in voxel units.
pub fn make_shape_sdf(spec: &ShapeSpec) -> Result<Volume> {
    let n = spec.dims[0] * spec.dims[1] * spec.dims[2];
    if n == 0 {
        return Err(VddError::ShapeOutOfBounds("empty grid".into()));
    }
    // spike directions are fixed up front so the field is a pure function
    let spikes: Vec<[f64; 3]> = match &spec.kind {
        ShapeKind::Sphere { center, radius } => {
            check_margin(spec, *center, *radius)?;
            Vec::new()
        }
        ShapeKind::Dumbbell { centers, radii } => {
            check_margin(spec, centers[0], radii[0])?;
            check_margin(spec, centers[1], radii[1])?;
            Vec::new()
        }
        ShapeKind::Spiculated { center, radius, spike_count, spike_length } => {
            check_margin(spec, *center, radius + spike_length)?;
            let mut r = rng::seeded(spec.seed);
            (0..*spike_count)
                .map(|_| {
                    // uniform direction on the sphere
                    loop {
                        let v = [
                            rng::standard_normal(&mut r),
                            rng::standard_normal(&mut r),
                            rng::standard_normal(&mut r),
                        ];
                        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                        if norm > 1e-9 {
                            break [v[0] / norm, v[1] / norm, v[2] / norm];
                        }
                    }
                })
                .collect()
        }
    };

    let mut data = Vec::with_capacity(n);
    for z in 0..spec.dims[0] {
        for y in 0..spec.dims[1] {
            for x in 0..spec.dims[2] {
                let p = [z as f64, y as f64, x as f64];
                let v = match &spec.kind {
                    ShapeKind::Sphere { center, radius } => sphere_sdf_at(p, *center, *radius),
                    ShapeKind::Dumbbell { centers, radii } => sphere_sdf_at(p, centers[0], radii[0])
                        .min(sphere_sdf_at(p, centers[1], radii[1])),
                    ShapeKind::Spiculated { center, radius, spike_length, .. } => {
                        let dz = p[0] - center[0];
                        let dy = p[1] - center[1];
                        let dx = p[2] - center[2];
                        let dist = (dz * dz + dy * dy + dx * dx).sqrt();
                        let bump = if dist > 1e-9 {
                            let inv = 1.0 / dist;
                            spikes
                                .iter()
                                .map(|s| {
                                    let cosang = (dz * s[0] + dy * s[1] + dx * s[2]) * inv;
                                    if cosang > 0.0 {
                                        cosang.powi(12)
                                    } else {
                                        0.0
                                    }
                                })
                                .fold(0.0, f64::max)
                        } else {
                            0.0
                        };
                        dist - (radius + spike_length * bump)
                    }
                };
                data.push(v);
            }
        }
    }
    Volume::new(spec.dims, spec.spacing, VolumeKind::Image, data)
}

/// Conditioning image channel: the field rescaled into `[-1, 1]`.
pub fn make_image(sdf: &Volume) -> Volume {
    let scale = sdf.max_abs();
    let data = if scale > 0.0 {
        sdf.data().iter().map(|&v| v / scale).collect()
    } else {
        vec![0.0; sdf.len()]
    };
    sdf.with_data(VolumeKind::Image, data)
}

fn angular_field(dims: [usize; 3], phase: f64) -> impl Fn(usize, usize, usize) -> f64 {
    let c = [
        (dims[0] - 1) as f64 / 2.0,
        (dims[1] - 1) as f64 / 2.0,
        (dims[2] - 1) as f64 / 2.0,
    ];
    move |z, y, x| {
        let dz = z as f64 - c[0];
        let dy = y as f64 - c[1];
        let dx = x as f64 - c[2];
        let azimuth = dx.atan2(dy);
        let rho = (dx * dx + dy * dy).sqrt();
        let polar = rho.atan2(dz);
        (2.0 * azimuth + phase).sin() * polar.sin().powi(2)
    }
}

/// Thresholds the shared field at each rater's offset. With zero angular
/// amplitude the family is nested: a smaller offset yields a subset mask.
pub fn make_raters(sdf: &Volume, model: &RaterModel) -> Result<RaterSet> {
    if model.offsets.is_empty() {
        return Err(VddError::EmptyRaterSet);
    }
    let dims = sdf.dims();
    let k_total = model.offsets.len();
    let mut masks = Vec::with_capacity(k_total);
    for (k, &delta) in model.offsets.iter().enumerate() {
        let data: Vec<bool> = if model.angular_amp == 0.0 {
            sdf.data().iter().map(|&v| v <= delta).collect()
        } else {
            let phase = 2.0 * std::f64::consts::PI * k as f64 / k_total as f64;
            let field = angular_field(dims, phase);
            let mut out = Vec::with_capacity(sdf.len());
            for z in 0..dims[0] {
                for y in 0..dims[1] {
                    for x in 0..dims[2] {
                        let v = sdf.get(z, y, x);
                        out.push(v <= delta + model.angular_amp * field(z, y, x));
                    }
                }
            }
            out
        };
        if !data.iter().any(|&b| b) {
            return Err(VddError::DegenerateRater(delta));
        }
        masks.push(BinaryMask::new(dims, sdf.spacing(), data)?);
    }
    match &model.weights {
        Some(w) => RaterSet::new(masks, w.clone()),
        None => RaterSet::uniform(masks),
    }
}

fn erode1(mask: &BinaryMask) -> BinaryMask {
    let [d, h, w] = mask.dims();
    let data = mask.data();
    let mut out = vec![false; data.len()];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = (z * h + y) * w + x;
                if !data[i] {
                    continue;
                }
                let interior = (z > 0 && data[i - h * w])
                    && (z + 1 < d && data[i + h * w])
                    && (y > 0 && data[i - w])
                    && (y + 1 < h && data[i + w])
                    && (x > 0 && data[i - 1])
                    && (x + 1 < w && data[i + 1]);
                out[i] = interior;
            }
        }
    }
    BinaryMask::new(mask.dims(), mask.spacing(), out).expect("same grid")
}

fn dilate1(mask: &BinaryMask) -> BinaryMask {
    let [d, h, w] = mask.dims();
    let data = mask.data();
    let mut out = data.to_vec();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = (z * h + y) * w + x;
                if data[i] {
                    continue;
                }
                let touched = (z > 0 && data[i - h * w])
                    || (z + 1 < d && data[i + h * w])
                    || (y > 0 && data[i - w])
                    || (y + 1 < h && data[i + w])
                    || (x > 0 && data[i - 1])
                    || (x + 1 < w && data[i + 1]);
                out[i] = touched;
            }
        }
    }
    BinaryMask::new(mask.dims(), mask.spacing(), out).expect("same grid")
}

/// Consensus prior: the weighted mean of the signed rater volumes,
/// optionally degraded. Morphological degradations work on the binarized
/// consensus and re-sign it; thresholding re-cuts the mean at `tau`.
pub fn make_prior(raters: &RaterSet, degrade: PriorDegrade) -> Volume {
    let base = raters.mean_signed();
    match degrade {
        PriorDegrade::None => base,
        PriorDegrade::Erode1 => to_signed(&erode1(&binarize(&base))),
        PriorDegrade::Dilate1 => to_signed(&dilate1(&binarize(&base))),
        PriorDegrade::Threshold { tau } => {
            let mask = BinaryMask::new(
                base.dims(),
                base.spacing(),
                base.data().iter().map(|&v| v > tau).collect(),
            )
            .expect("same grid");
            to_signed(&mask)
        }
    }
}
