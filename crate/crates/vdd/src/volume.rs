//! Dense 3D scalar fields and binary masks on a physical grid, plus the
//! VDV1 on-disk format.
//!
//! One `Volume` carries everything the diffusion touches: clean labels
//! `y0`, priors, noisy states `y_t`, noise fields and conditioning
//! images. Values are kept as `f64` in memory; the VDV1 payload is
//! little-endian `f32` (see [`write_volume`]), so files are compact and
//! bit-stable while in-memory arithmetic keeps full precision.
//!
//! Indexing is row-major `zyx`: `index(z, y, x) = (z*H + y)*W + x`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VddError};

/// What the scalars of a volume mean. Labels live in `[-1, 1]`; noise is
/// unbounded; images are conditioning intensities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Label,
    Noise,
    Image,
}

/// Dense scalar field over a `(D, H, W)` voxel grid with physical spacing
/// `(sz, sy, sx)` in millimeters per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    kind: VolumeKind,
    data: Vec<f64>,
}

/// Boolean field on the same grid family as [`Volume`].
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<bool>,
}

fn check_spacing(spacing: [f64; 3]) -> Result<()> {
    if spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(VddError::InvalidSpacing(spacing))
    }
}

impl Volume {
    /// General constructor; validates grid geometry and finiteness, plus
    /// the `[-1, 1]` range when `kind` is `Label`.
    pub fn new(dims: [usize; 3], spacing: [f64; 3], kind: VolumeKind, data: Vec<f64>) -> Result<Self> {
        check_spacing(spacing)?;
        let want = dims[0] * dims[1] * dims[2];
        if data.len() != want {
            return Err(VddError::DataLength { dims, got: data.len(), want });
        }
        if kind != VolumeKind::Noise {
            if let Some(i) = data.iter().position(|v| !v.is_finite()) {
                return Err(VddError::NonFinite(i));
            }
        }
        if kind == VolumeKind::Label {
            if let Some(&v) = data.iter().find(|v| v.abs() > 1.0) {
                return Err(VddError::LabelRange(v));
            }
        }
        Ok(Volume { dims, spacing, kind, data })
    }

    /// Constant-valued volume.
    pub fn constant(dims: [usize; 3], spacing: [f64; 3], kind: VolumeKind, value: f64) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        Volume::new(dims, spacing, kind, vec![value; n])
    }

    /// All-zero volume on the same grid as `like`, with the given kind.
    pub fn zeros_like(like: &Volume, kind: VolumeKind) -> Self {
        Volume { dims: like.dims, spacing: like.spacing, kind, data: vec![0.0; like.data.len()] }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Row-major linear index of voxel `(z, y, x)`.
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(z, y, x)]
    }

    /// Checks that `other` lives on the identical grid (dims and spacing).
    pub fn same_grid(&self, other: &Volume) -> Result<()> {
        if self.dims != other.dims {
            return Err(VddError::DimMismatch(self.dims, other.dims));
        }
        if self.spacing != other.spacing {
            return Err(VddError::SpacingMismatch(self.spacing, other.spacing));
        }
        Ok(())
    }

    /// New volume on this grid from precomputed data, without re-running
    /// label validation (used by internal arithmetic that guarantees the
    /// range by construction, e.g. clamped reconstructions).
    pub(crate) fn with_data(&self, kind: VolumeKind, data: Vec<f64>) -> Volume {
        debug_assert_eq!(data.len(), self.data.len());
        Volume { dims: self.dims, spacing: self.spacing, kind, data }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl BinaryMask {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<bool>) -> Result<Self> {
        check_spacing(spacing)?;
        let want = dims[0] * dims[1] * dims[2];
        if data.len() != want {
            return Err(VddError::DataLength { dims, got: data.len(), want });
        }
        Ok(BinaryMask { dims, spacing, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.data[self.index(z, y, x)]
    }

    /// Number of foreground voxels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn same_grid(&self, other: &BinaryMask) -> Result<()> {
        if self.dims != other.dims {
            return Err(VddError::DimMismatch(self.dims, other.dims));
        }
        if self.spacing != other.spacing {
            return Err(VddError::SpacingMismatch(self.spacing, other.spacing));
        }
        Ok(())
    }
}

/// Maps `{false, true}` to `{-1.0, +1.0}` on the same grid.
pub fn to_signed(mask: &BinaryMask) -> Volume {
    let data = mask.data.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
    Volume { dims: mask.dims, spacing: mask.spacing, kind: VolumeKind::Label, data }
}

/// Thresholds at a strict zero: foreground iff `value > 0`.
pub fn binarize(v: &Volume) -> BinaryMask {
    BinaryMask {
        dims: v.dims,
        spacing: v.spacing,
        data: v.data.iter().map(|&x| x > 0.0).collect(),
    }
}

// ---------------------------------------------------------------------------
// VDV1 file format
// ---------------------------------------------------------------------------

const MAGIC: &str = "VDV1";

#[derive(Serialize, Deserialize)]
struct Header {
    magic: String,
    dims: [usize; 3],
    spacing: [f64; 3],
    dtype: String,
    order: String,
    kind: VolumeKind,
}

fn sidecar_paths(base: &Path) -> (PathBuf, PathBuf) {
    let mut json = base.as_os_str().to_owned();
    json.push(".json");
    let mut raw = base.as_os_str().to_owned();
    raw.push(".f32");
    (PathBuf::from(json), PathBuf::from(raw))
}

/// Writes `<base>.json` + `<base>.f32` (VDV1). The payload is the volume's
/// scalars rounded to nearest `f32`, little-endian, in `zyx` row-major
/// index order. Volumes whose values are exactly representable in `f32`
/// (all file-loaded volumes, signed masks, noise draws from this crate's
/// generators) round-trip bit-for-bit.
pub fn write_volume(v: &Volume, base: &Path) -> Result<()> {
    let (json_path, raw_path) = sidecar_paths(base);
    let header = Header {
        magic: MAGIC.to_string(),
        dims: v.dims,
        spacing: v.spacing,
        dtype: "f32".to_string(),
        order: "zyx-row-major".to_string(),
        kind: v.kind,
    };
    let text = serde_json::to_string_pretty(&header).map_err(|e| VddError::json(&json_path, e))?;
    fs::write(&json_path, text).map_err(|e| VddError::io(&json_path, e))?;

    let mut bytes = Vec::with_capacity(v.data.len() * 4);
    for &x in &v.data {
        bytes.extend_from_slice(&(x as f32).to_le_bytes());
    }
    fs::write(&raw_path, bytes).map_err(|e| VddError::io(&raw_path, e))?;
    Ok(())
}

/// Reads a VDV1 pair written by [`write_volume`]. Validates the header,
/// the payload size against the declared dims, and (for label volumes)
/// that every scalar is finite and within `[-1, 1]`.
pub fn read_volume(base: &Path) -> Result<Volume> {
    let (json_path, raw_path) = sidecar_paths(base);
    let text = fs::read_to_string(&json_path).map_err(|e| VddError::io(&json_path, e))?;
    let header: Header = serde_json::from_str(&text).map_err(|e| VddError::json(&json_path, e))?;
    if header.magic != MAGIC {
        return Err(VddError::MalformedHeader {
            path: json_path,
            reason: format!("magic {:?}, expected {MAGIC:?}", header.magic),
        });
    }
    if header.dtype != "f32" || header.order != "zyx-row-major" {
        return Err(VddError::MalformedHeader {
            path: json_path,
            reason: format!("unsupported dtype {:?} / order {:?}", header.dtype, header.order),
        });
    }
    check_spacing(header.spacing)?;

    let bytes = fs::read(&raw_path).map_err(|e| VddError::io(&raw_path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(VddError::MalformedHeader {
            path: raw_path,
            reason: format!("payload length {} is not a multiple of 4", bytes.len()),
        });
    }
    let want = header.dims[0] * header.dims[1] * header.dims[2];
    let got = bytes.len() / 4;
    if got != want {
        return Err(VddError::PayloadSize { path: raw_path, got, want });
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Volume::new(header.dims, header.spacing, header.kind, data)
}
