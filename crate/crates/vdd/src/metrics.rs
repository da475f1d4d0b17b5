//! Evaluation suite for sample sets against multi-rater references:
//! overlap (Dice), boundary distance (HD95), distributional distance
//! (generalized energy distance), collective insight, and uncertainty-map
//! correlation (SNCC).
//!
//! Conventions pinned here, because tests assert them bit-stably:
//! - Dice of two empty masks is 1; GED's ground distance `d = 1 - IoU`
//!   treats a both-empty pair as `d = 0`.
//! - HD95 pools the symmetric surface-to-surface distances of both
//!   directions (surfaces are 6-connectivity boundaries, distances in
//!   millimeters) and takes the 95th percentile with inclusive linear
//!   interpolation.
//! - GED uses exhaustive means over the finite sets, self-pairs included,
//!   with rater weights.
//! - CI is the harmonic combination of combined sensitivity, per-rater
//!   best Dice, and a variance-based diversity agreement with a 1-voxel
//!   floor; any zero component sends the score to 0.
//! - SNCC correlates the mean-indicator maps (samples unweighted, raters
//!   weighted) with population statistics.

use serde::Serialize;

use crate::denoiser::RaterSet;
use crate::error::{Result, VddError};
use crate::volume::BinaryMask;

/// One row of the evaluation table for a `(samples, raters)` pairing.
/// `hd95_mm` is missing when a surface is empty; the uncertainty columns
/// are missing at `n_samples = 1` (single samples carry no diversity) and
/// `sncc` additionally when either mean map is constant.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub n_samples: usize,
    pub dice_mean: f64,
    pub hd95_mm: Option<f64>,
    pub ged: Option<f64>,
    pub ci: Option<f64>,
    pub sncc: Option<f64>,
}

/// Dice overlap `2|A n B| / (|A| + |B|)`; two empty masks are identical,
/// hence 1.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.same_grid(b)?;
    let mut inter = 0usize;
    let mut na = 0usize;
    let mut nb = 0usize;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        na += x as usize;
        nb += y as usize;
        inter += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

fn iou_distance(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        0.0 // both empty: identical
    } else {
        1.0 - inter as f64 / union as f64
    }
}

/// Foreground voxels with at least one of their 6 face neighbors
/// background or outside the grid.
pub(crate) fn surface_voxels(mask: &BinaryMask) -> Vec<bool> {
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
                let exposed = (z == 0 || !data[i - h * w])
                    || (z + 1 == d || !data[i + h * w])
                    || (y == 0 || !data[i - w])
                    || (y + 1 == h || !data[i + w])
                    || (x == 0 || !data[i - 1])
                    || (x + 1 == w || !data[i + 1]);
                out[i] = exposed;
            }
        }
    }
    out
}

/// One pass of the exact 1D squared-distance transform (lower envelope of
/// parabolas), sites at physical positions `i * h`. `INF` rows stay `INF`.
fn edt_1d(cost: &[f64], h: f64, out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    for (q, &fq) in cost.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        let xq = q as f64 * h;
        loop {
            match sites.last() {
                None => {
                    sites.push(q);
                    bounds.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let xp = p as f64 * h;
                    let s = ((fq + xq * xq) - (cost[p] + xp * xp)) / (2.0 * (xq - xp));
                    if s <= *bounds.last().unwrap() {
                        sites.pop();
                        bounds.pop();
                    } else {
                        sites.push(q);
                        bounds.push(s);
                        break;
                    }
                }
            }
        }
    }
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let xi = i as f64 * h;
        while k + 1 < sites.len() && bounds[k + 1] < xi {
            k += 1;
        }
        let xs = sites[k] as f64 * h;
        *o = (xi - xs) * (xi - xs) + cost[sites[k]];
    }
}

/// Exact squared Euclidean distance (mm^2) from every voxel to the
/// nearest `true` seed voxel, separable over the three axes.
fn distance_transform(seeds: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let [d, h, w] = dims;
    let mut dist: Vec<f64> = seeds
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    let longest = d.max(h).max(w);
    let mut row = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut sites = Vec::with_capacity(longest);
    let mut bounds = Vec::with_capacity(longest);

    // along x
    for z in 0..d {
        for y in 0..h {
            let base = (z * h + y) * w;
            row[..w].copy_from_slice(&dist[base..base + w]);
            edt_1d(&row[..w], spacing[2], &mut out[..w], &mut sites, &mut bounds);
            dist[base..base + w].copy_from_slice(&out[..w]);
        }
    }
    // along y
    for z in 0..d {
        for x in 0..w {
            for y in 0..h {
                row[y] = dist[(z * h + y) * w + x];
            }
            edt_1d(&row[..h], spacing[1], &mut out[..h], &mut sites, &mut bounds);
            for y in 0..h {
                dist[(z * h + y) * w + x] = out[y];
            }
        }
    }
    // along z
    for y in 0..h {
        for x in 0..w {
            for z in 0..d {
                row[z] = dist[(z * h + y) * w + x];
            }
            edt_1d(&row[..d], spacing[0], &mut out[..d], &mut sites, &mut bounds);
            for z in 0..d {
                dist[(z * h + y) * w + x] = out[z];
            }
        }
    }
    dist
}

fn percentile_95(sorted: &[f64]) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = 0.95 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// 95th percentile of the pooled symmetric surface distances, in
/// millimeters. Errors if either mask has no surface.
pub fn hd95(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.same_grid(b)?;
    let surf_a = surface_voxels(a);
    let surf_b = surface_voxels(b);
    if !surf_a.iter().any(|&s| s) || !surf_b.iter().any(|&s| s) {
        return Err(VddError::EmptyMask);
    }
    let to_b = distance_transform(&surf_b, a.dims(), a.spacing());
    let to_a = distance_transform(&surf_a, a.dims(), a.spacing());
    let mut pooled: Vec<f64> = Vec::new();
    for (i, &on_a) in surf_a.iter().enumerate() {
        if on_a {
            pooled.push(to_b[i].sqrt());
        }
    }
    for (i, &on_b) in surf_b.iter().enumerate() {
        if on_b {
            pooled.push(to_a[i].sqrt());
        }
    }
    pooled.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(percentile_95(&pooled))
}

/// Generalized energy distance between the sample set and the weighted
/// rater set under `d = 1 - IoU`:
/// `GED^2 = 2 E[d(S, Y)] - E[d(S, S')] - E[d(Y, Y')]`, exhaustive means.
pub fn ged(samples: &[BinaryMask], raters: &RaterSet) -> Result<f64> {
    if samples.is_empty() {
        return Err(VddError::TooFew { what: "samples", need: 1, got: 0 });
    }
    for s in samples {
        s.same_grid(&raters.masks()[0])?;
    }
    let n = samples.len() as f64;
    let w = raters.weights();

    let mut cross = 0.0;
    for s in samples {
        for (r, &wk) in raters.masks().iter().zip(w) {
            cross += wk * iou_distance(s, r);
        }
    }
    cross /= n;

    let mut within_s = 0.0;
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            within_s += 2.0 * iou_distance(a, b); // symmetric, diagonal is 0
        }
    }
    within_s /= n * n;

    let mut within_r = 0.0;
    for (i, a) in raters.masks().iter().enumerate() {
        for (j, b) in raters.masks().iter().enumerate().skip(i + 1) {
            within_r += 2.0 * w[i] * w[j] * iou_distance(a, b);
        }
    }

    Ok((2.0 * cross - within_s - within_r).max(0.0).sqrt())
}

fn weighted_variance(counts: &[f64], weights: &[f64]) -> f64 {
    let mean: f64 = counts.iter().zip(weights).map(|(c, w)| c * w).sum();
    counts
        .iter()
        .zip(weights)
        .map(|(c, w)| w * (c - mean) * (c - mean))
        .sum()
}

/// Collective-insight score: the harmonic combination of
/// combined sensitivity `S_c`, per-rater best Dice `D_max`, and the
/// voxel-count diversity agreement `D_a`. Any zero component gives 0.
pub fn ci_score(samples: &[BinaryMask], raters: &RaterSet) -> Result<f64> {
    if samples.is_empty() {
        return Err(VddError::TooFew { what: "samples", need: 1, got: 0 });
    }
    for s in samples {
        s.same_grid(&raters.masks()[0])?;
    }
    let n_vox = samples[0].data().len();

    // combined sensitivity of the pooled foreground
    let mut union_s = vec![false; n_vox];
    for s in samples {
        for (u, &b) in union_s.iter_mut().zip(s.data()) {
            *u |= b;
        }
    }
    let mut union_r = vec![false; n_vox];
    for r in raters.masks() {
        for (u, &b) in union_r.iter_mut().zip(r.data()) {
            *u |= b;
        }
    }
    let nr = union_r.iter().filter(|&&b| b).count();
    let ns = union_s.iter().filter(|&&b| b).count();
    let hit = union_s
        .iter()
        .zip(&union_r)
        .filter(|(&s, &r)| s && r)
        .count();
    let sens = if nr == 0 {
        if ns == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        hit as f64 / nr as f64
    };

    // weighted mean over raters of the best-matching sample Dice
    let mut d_max = 0.0;
    for (r, &wk) in raters.masks().iter().zip(raters.weights()) {
        let best = samples
            .iter()
            .map(|s| dice(s, r).expect("grids checked above"))
            .fold(0.0, f64::max);
        d_max += wk * best;
    }

    // diversity agreement on voxel-count variances (1-voxel floor)
    let counts_s: Vec<f64> = samples.iter().map(|s| s.count() as f64).collect();
    let uniform = vec![1.0 / samples.len() as f64; samples.len()];
    let var_s = weighted_variance(&counts_s, &uniform);
    let counts_r: Vec<f64> = raters.masks().iter().map(|r| r.count() as f64).collect();
    let var_r = weighted_variance(&counts_r, raters.weights());
    let d_a = 1.0 - (var_s - var_r).abs() / var_s.max(var_r).max(1.0);

    if sens == 0.0 || d_max == 0.0 || d_a == 0.0 {
        return Ok(0.0);
    }
    Ok(3.0 * sens * d_max * d_a / (d_max * d_a + sens * d_a + sens * d_max))
}

/// Spatial normalized cross-correlation between the two mean-indicator
/// uncertainty maps. Needs at least two samples and two raters; errors if
/// either map is constant.
pub fn sncc(samples: &[BinaryMask], raters: &RaterSet) -> Result<f64> {
    if samples.len() < 2 {
        return Err(VddError::TooFew { what: "samples", need: 2, got: samples.len() });
    }
    if raters.len() < 2 {
        return Err(VddError::TooFew { what: "raters", need: 2, got: raters.len() });
    }
    for s in samples {
        s.same_grid(&raters.masks()[0])?;
    }
    let n_vox = samples[0].data().len() as f64;
    let mut u_pred = vec![0.0; samples[0].data().len()];
    for s in samples {
        for (u, &b) in u_pred.iter_mut().zip(s.data()) {
            if b {
                *u += 1.0;
            }
        }
    }
    for u in &mut u_pred {
        *u /= samples.len() as f64;
    }
    let u_gt = raters.indicator_mean();

    let mean_p: f64 = u_pred.iter().sum::<f64>() / n_vox;
    let mean_g: f64 = u_gt.iter().sum::<f64>() / n_vox;
    let mut cov = 0.0;
    let mut var_p = 0.0;
    let mut var_g = 0.0;
    for (&p, &g) in u_pred.iter().zip(&u_gt) {
        cov += (p - mean_p) * (g - mean_g);
        var_p += (p - mean_p) * (p - mean_p);
        var_g += (g - mean_g) * (g - mean_g);
    }
    if var_p == 0.0 || var_g == 0.0 {
        return Err(VddError::ConstantMap);
    }
    Ok(cov / (var_p.sqrt() * var_g.sqrt()))
}

/// Majority vote over sample indicators: foreground where the mean
/// indicator strictly exceeds one half.
pub fn majority_mask(samples: &[BinaryMask]) -> Result<BinaryMask> {
    if samples.is_empty() {
        return Err(VddError::TooFew { what: "samples", need: 1, got: 0 });
    }
    for s in &samples[1..] {
        samples[0].same_grid(s)?;
    }
    let half = samples.len() as f64 / 2.0;
    let mut votes = vec![0usize; samples[0].data().len()];
    for s in samples {
        for (v, &b) in votes.iter_mut().zip(s.data()) {
            *v += b as usize;
        }
    }
    BinaryMask::new(
        samples[0].dims(),
        samples[0].spacing(),
        votes.iter().map(|&v| v as f64 > half).collect(),
    )
}

/// Builds the evaluation row for one `(samples, raters)` pairing.
///
/// Accuracy columns compare the majority-vote fusion of the samples to
/// each rater (weighted means). Uncertainty columns are computed from the
/// full sets and omitted at `n_samples = 1`.
pub fn report(samples: &[BinaryMask], raters: &RaterSet) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(VddError::TooFew { what: "samples", need: 1, got: 0 });
    }
    let fused = majority_mask(samples)?;
    let mut dice_mean = 0.0;
    let mut hd_sum = 0.0;
    let mut hd_ok = true;
    for (r, &wk) in raters.masks().iter().zip(raters.weights()) {
        dice_mean += wk * dice(&fused, r)?;
        match hd95(&fused, r) {
            Ok(v) => hd_sum += wk * v,
            Err(VddError::EmptyMask) => hd_ok = false,
            Err(e) => return Err(e),
        }
    }
    let multi = samples.len() >= 2;
    Ok(MetricReport {
        n_samples: samples.len(),
        dice_mean,
        hd95_mm: hd_ok.then_some(hd_sum),
        ged: if multi { Some(ged(samples, raters)?) } else { None },
        ci: if multi { Some(ci_score(samples, raters)?) } else { None },
        sncc: if multi && raters.len() >= 2 {
            match sncc(samples, raters) {
                Ok(v) => Some(v),
                Err(VddError::ConstantMap) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        },
    })
}
