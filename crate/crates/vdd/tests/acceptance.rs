//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them on success).
//!
//! Every tolerance is pinned in code next to the check it gates. Brute
//! force reference implementations live in this file and are kept
//! independent of the library's computation paths.

use vdd::denoiser::{OracleDenoiser, RaterSet};
use vdd::forward::{forward_expectation, forward_marginal, forward_marginal_ddpm, forward_step, noise_like};
use vdd::metrics;
use vdd::patch::{train_step, PatchRegressor, TrainSample};
use vdd::rng;
use vdd::run::{self, cmd_eval, cmd_sample, cmd_synth, RunConfig, TrainOpts};
use vdd::sampler::{sample, SamplerConfig};
use vdd::schedule::{Schedule, ScheduleKind};
use vdd::synth::{make_raters, make_shape_sdf, RaterModel, ShapeKind, ShapeSpec};
use vdd::volume::{binarize, BinaryMask, Volume, VolumeKind};

fn check(name: &str, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    println!("{verdict}  {name}: {detail}");
    assert!(passed, "{name}: {detail}");
}

fn schedule50() -> Schedule {
    Schedule::make(ScheduleKind::Linear, 50, 1e-6).unwrap()
}

fn random_label(dims: [usize; 3], r: &mut rng::Rng) -> Volume {
    use rand::Rng as _;
    let n = dims[0] * dims[1] * dims[2];
    let data = (0..n).map(|_| r.random_range(-1.0..=1.0)).collect();
    Volume::new(dims, [1.0; 3], VolumeKind::Label, data).unwrap()
}

fn sphere_raters(dims: [usize; 3], radius: f64, offsets: &[f64]) -> RaterSet {
    let c = [
        (dims[0] - 1) as f64 / 2.0,
        (dims[1] - 1) as f64 / 2.0,
        (dims[2] - 1) as f64 / 2.0,
    ];
    let spec = ShapeSpec {
        kind: ShapeKind::Sphere { center: c, radius },
        dims,
        spacing: [1.0; 3],
        seed: 0,
    };
    let sdf = make_shape_sdf(&spec).unwrap();
    make_raters(
        &sdf,
        &RaterModel { offsets: offsets.to_vec(), weights: None, angular_amp: 0.0 },
    )
    .unwrap()
}

// -------------------------------------------------------------------------
// 1. Reconstruction identity
// -------------------------------------------------------------------------

#[test]
fn criterion_01_reconstruction_identity() {
    use rand::Rng as _;
    let s = schedule50();
    let mut r = rng::seeded(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let y0 = random_label([8, 8, 8], &mut r);
        let y_hat = random_label([8, 8, 8], &mut r);
        let eps = noise_like(&y0, &mut r);
        let t = r.random_range(1..=s.steps());
        let y_t = forward_marginal(&y0, &y_hat, &s, t, &eps).unwrap();
        let rec = vdd::reconstruct_y0(&y_t, &y_hat, &eps, &s, t, false).unwrap();
        for (a, b) in rec.data().iter().zip(y0.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    check(
        "criterion 1 (reconstruction identity)",
        worst <= 1e-4,
        &format!("max |reconstructed - y0| = {worst:.3e} over 100 random tuples (tol 1e-4)"),
    );
}

// -------------------------------------------------------------------------
// 2. Marginal/chain consistency
// -------------------------------------------------------------------------

#[test]
fn criterion_02_marginal_chain_consistency() {
    let s = schedule50();
    let mut r = rng::seeded(202);
    let y0 = random_label([4, 4, 4], &mut r);
    let y_hat = random_label([4, 4, 4], &mut r);
    let n = 10_000usize;
    let checkpoints = [1usize, 25, 50];
    let n_vox = y0.len();
    let mut sums = vec![vec![0.0; n_vox]; checkpoints.len()];
    let mut sqs = vec![vec![0.0; n_vox]; checkpoints.len()];
    for _ in 0..n {
        let mut y = y0.clone();
        for t in 1..=s.steps() {
            y = forward_step(&y, &y_hat, &s, t, &mut r).unwrap();
            if let Some(ci) = checkpoints.iter().position(|&c| c == t) {
                for (i, &v) in y.data().iter().enumerate() {
                    sums[ci][i] += v;
                    sqs[ci][i] += v * v;
                }
            }
        }
    }
    let nf = n as f64;
    let mut worst_mean_ratio = 0.0f64;
    let mut worst_var_rel = 0.0f64;
    for (ci, &t) in checkpoints.iter().enumerate() {
        let expect = forward_expectation(&y0, &y_hat, &s, t).unwrap();
        let bb2 = s.beta_bar(t).powi(2);
        let mean_bound = 4.0 * bb2.sqrt() / nf.sqrt();
        for i in 0..n_vox {
            let mean = sums[ci][i] / nf;
            let var = sqs[ci][i] / nf - mean * mean;
            worst_mean_ratio = worst_mean_ratio.max((mean - expect.data()[i]).abs() / mean_bound);
            worst_var_rel = worst_var_rel.max((var - bb2).abs() / bb2);
        }
    }
    check(
        "criterion 2 (marginal/chain consistency)",
        worst_mean_ratio <= 1.0 && worst_var_rel <= 0.05,
        &format!(
            "10^4 chains on 4^3 at t in {{1, 25, 50}}: worst mean err = {:.2} of the 4-sigma bound, worst variance deviation = {:.2}% (tol 5%)",
            worst_mean_ratio,
            100.0 * worst_var_rel
        ),
    );
}

// -------------------------------------------------------------------------
// 3. Terminal convergence
// -------------------------------------------------------------------------

#[test]
fn criterion_03_terminal_convergence() {
    let s = schedule50();
    assert_eq!(s.eta(), 1e-6);
    let mut r = rng::seeded(303);
    let y0 = random_label([4, 4, 4], &mut r);
    let y_hat = random_label([4, 4, 4], &mut r);
    let n = 10_000usize;
    let n_vox = y0.len();
    let mut sums = vec![0.0; n_vox];
    for _ in 0..n {
        let eps = noise_like(&y0, &mut r);
        let y_t = forward_marginal(&y0, &y_hat, &s, s.steps(), &eps).unwrap();
        for (acc, &v) in sums.iter_mut().zip(y_t.data()) {
            *acc += v;
        }
    }
    let nf = n as f64;
    let dmax: f64 = y0
        .data()
        .iter()
        .zip(y_hat.data())
        .map(|(&a, &b)| (a - b).abs())
        .fold(0.0, f64::max);
    let bound = 1e-6f64.sqrt() * dmax + 4.0 * s.beta_bar(s.steps()) / nf.sqrt();
    let mut worst = 0.0f64;
    for (i, &acc) in sums.iter().enumerate() {
        worst = worst.max((acc / nf - y_hat.data()[i]).abs());
    }
    check(
        "criterion 3 (terminal convergence)",
        worst <= bound,
        &format!("max |mean(y_T) - y_hat| = {worst:.4} <= sqrt(eta)*||y0-y_hat||_inf + 4 sigma = {bound:.4}"),
    );
}

// -------------------------------------------------------------------------
// 4. DDPM reduction
// -------------------------------------------------------------------------

#[test]
fn criterion_04_ddpm_reduction_bitwise() {
    let s = schedule50();
    let raters = sphere_raters([8, 8, 8], 2.5, &[0.0]);
    let y0 = raters.signed()[0].clone();
    let zeros = Volume::zeros_like(&y0, VolumeKind::Label);
    let mut r = rng::seeded(404);
    let mut all_equal = true;
    for t in 1..=s.steps() {
        let eps = noise_like(&y0, &mut r);
        let anchored = forward_marginal(&y0, &zeros, &s, t, &eps).unwrap();
        let plain = forward_marginal_ddpm(&y0, &s, t, &eps).unwrap();
        for (a, b) in anchored.data().iter().zip(plain.data()) {
            if a.to_bits() != b.to_bits() {
                all_equal = false;
            }
        }
    }
    check(
        "criterion 4 (DDPM reduction)",
        all_equal,
        "anchored marginal with y_hat = 0 is bitwise equal to the standard marginal at every t",
    );
}

// -------------------------------------------------------------------------
// 5. Oracle recovery
// -------------------------------------------------------------------------

#[test]
fn criterion_05_oracle_recovery() {
    let s = schedule50();

    // K = 1: every sample binarizes to the single rater exactly
    let raters1 = sphere_raters([16, 16, 16], 5.0, &[0.0]);
    let oracle1 = OracleDenoiser::new(raters1.clone());
    let cfg1 = SamplerConfig { n_samples: 8, seed: 505, ..Default::default() };
    let prior = raters1.mean_signed();
    let outs = sample(&oracle1, None, &prior, &s, &cfg1).unwrap();
    let mut all_exact = true;
    for o in &outs {
        let d = metrics::dice(&binarize(o), &raters1.masks()[0]).unwrap();
        if d != 1.0 {
            all_exact = false;
        }
    }

    // K = 2 boundary-offset raters: mode balance and small GED at N = 64
    let raters2 = sphere_raters([16, 16, 16], 5.0, &[-0.5, 0.5]);
    let differing = raters2.masks()[0]
        .data()
        .iter()
        .zip(raters2.masks()[1].data())
        .filter(|(a, b)| a != b)
        .count();
    assert!(differing >= 10, "rater geometry must differ on >= 10 voxels");
    let oracle2 = OracleDenoiser::new(raters2.clone());
    let prior2 = raters2.mean_signed();
    let cfg2 = SamplerConfig { n_samples: 64, seed: 2, ..Default::default() };
    let outs2 = sample(&oracle2, None, &prior2, &s, &cfg2).unwrap();
    let masks: Vec<BinaryMask> = outs2.iter().map(binarize).collect();
    let mut freq = [0usize; 2];
    for m in &masks {
        if m == &raters2.masks()[0] {
            freq[0] += 1;
        } else if m == &raters2.masks()[1] {
            freq[1] += 1;
        }
    }
    let ged = metrics::ged(&masks, &raters2).unwrap();
    let f0 = freq[0] as f64 / 64.0;
    let f1 = freq[1] as f64 / 64.0;
    let balanced = (0.3..=0.7).contains(&f0) && (0.3..=0.7).contains(&f1);
    check(
        "criterion 5 (oracle recovery)",
        all_exact && balanced && ged <= 0.05,
        &format!(
            "K=1: all 8 samples Dice 1.0 = {all_exact}; K=2 (N=64, {differing} differing voxels): mode frequencies ({f0:.2}, {f1:.2}) in [0.3, 0.7], GED = {ged:.4} <= 0.05"
        ),
    );
}

// -------------------------------------------------------------------------
// 6. Anchoring ablation ordering (trained patch regressor)
// -------------------------------------------------------------------------

struct ArmScore {
    ged: f64,
    hd95: f64,
}

fn run_arm(anchored: bool, dataset: &std::path::Path, s: &Schedule) -> ArmScore {
    let manifest: run::DatasetManifest =
        serde_json::from_str(&std::fs::read_to_string(dataset.join("dataset.json")).unwrap())
            .unwrap();
    let opts = TrainOpts { seed: 606, ..Default::default() };
    let mut ged_sum = 0.0;
    let mut hd_sum = 0.0;
    for id in &manifest.cases {
        let case = run::load_case(&dataset.join(id)).unwrap();
        let anchor = if anchored {
            case.prior.clone()
        } else {
            Volume::zeros_like(&case.prior, VolumeKind::Label)
        };
        let model =
            run::train_regressor(&case.raters, &anchor, Some(&case.image), s, &opts).unwrap();
        let cfg = SamplerConfig { n_samples: 16, seed: 707, ..Default::default() };
        let outs = sample(&model, Some(&case.image), &anchor, s, &cfg).unwrap();
        let masks: Vec<BinaryMask> = outs.iter().map(binarize).collect();
        ged_sum += metrics::ged(&masks, &case.raters).unwrap();
        let fused = metrics::majority_mask(&masks).unwrap();
        // an arm whose fused prediction has no surface gets the worst
        // possible boundary score: structure was destroyed outright
        let mut hd_case = 0.0;
        for (rater, &w) in case.raters.masks().iter().zip(case.raters.weights()) {
            hd_case += w * metrics::hd95(&fused, rater).unwrap_or(f64::INFINITY);
        }
        hd_sum += hd_case;
    }
    let n = manifest.cases.len() as f64;
    ArmScore { ged: ged_sum / n, hd95: hd_sum / n }
}

#[test]
fn criterion_06_anchoring_ablation_ordering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        dataset: tmp.path().join("dataset"),
        out: tmp.path().join("out"),
        ..Default::default()
    };
    cmd_synth(&cfg).unwrap();
    let s = schedule50();
    let anchored = run_arm(true, &cfg.dataset, &s);
    let gaussian = run_arm(false, &cfg.dataset, &s);
    check(
        "criterion 6 (anchoring ablation ordering)",
        gaussian.ged > anchored.ged && gaussian.hd95 > anchored.hd95,
        &format!(
            "zero-anchor arm GED {:.4} > anchored GED {:.4}; zero-anchor HD95 {:.2} > anchored HD95 {:.2} (N=16, trained regressor)",
            gaussian.ged, anchored.ged, gaussian.hd95, anchored.hd95
        ),
    );
}

// -------------------------------------------------------------------------
// 7. N-scaling monotonicity (oracle)
// -------------------------------------------------------------------------

#[test]
fn criterion_07_n_scaling_monotonicity() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        dataset: tmp.path().join("dataset"),
        out: tmp.path().join("out"),
        ..Default::default()
    };
    cmd_synth(&cfg).unwrap();
    let manifest: run::DatasetManifest =
        serde_json::from_str(&std::fs::read_to_string(cfg.dataset.join("dataset.json")).unwrap())
            .unwrap();
    let s = schedule50();

    let mut dice = [0.0f64; 3]; // N = 1, 4, 16
    let mut ged = [0.0f64; 2]; // N = 4, 16
    for id in &manifest.cases {
        let case = run::load_case(&cfg.dataset.join(id)).unwrap();
        let oracle = OracleDenoiser::new(case.raters.clone());
        let scfg = SamplerConfig { n_samples: 16, seed: 13, ..Default::default() };
        let outs = sample(&oracle, None, &case.prior, &s, &scfg).unwrap();
        let masks: Vec<BinaryMask> = outs.iter().map(binarize).collect();
        for (slot, n) in [(0usize, 1usize), (1, 4), (2, 16)] {
            let prefix = &masks[..n];
            let fused = metrics::majority_mask(prefix).unwrap();
            let mut dm = 0.0;
            for (rater, &w) in case.raters.masks().iter().zip(case.raters.weights()) {
                dm += w * metrics::dice(&fused, rater).unwrap();
            }
            dice[slot] += dm;
            if n == 4 {
                ged[0] += metrics::ged(prefix, &case.raters).unwrap();
            }
            if n == 16 {
                ged[1] += metrics::ged(prefix, &case.raters).unwrap();
            }
        }
    }
    let n_cases = manifest.cases.len() as f64;
    for v in dice.iter_mut() {
        *v /= n_cases;
    }
    for v in ged.iter_mut() {
        *v /= n_cases;
    }
    check(
        "criterion 7 (N-scaling monotonicity)",
        dice[2] >= dice[1] && dice[1] >= dice[0] && ged[1] <= ged[0],
        &format!(
            "mean Dice N=1/4/16 = {:.4}/{:.4}/{:.4} (non-decreasing); GED N=4/16 = {:.4}/{:.4} (non-increasing)",
            dice[0], dice[1], dice[2], ged[0], ged[1]
        ),
    );
}

// -------------------------------------------------------------------------
// 8. Metric oracles (brute force)
// -------------------------------------------------------------------------

mod brute {
    use vdd::denoiser::RaterSet;
    use vdd::volume::BinaryMask;

    pub fn dice(a: &BinaryMask, b: &BinaryMask) -> f64 {
        let mut inter = 0.0;
        let mut total = 0.0;
        for i in 0..a.data().len() {
            if a.data()[i] && b.data()[i] {
                inter += 1.0;
            }
            if a.data()[i] {
                total += 1.0;
            }
            if b.data()[i] {
                total += 1.0;
            }
        }
        if total == 0.0 {
            1.0
        } else {
            2.0 * inter / total
        }
    }

    fn boundary(m: &BinaryMask) -> Vec<[f64; 3]> {
        let [d, h, w] = m.dims();
        let mut out = Vec::new();
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    if !m.get(z, y, x) {
                        continue;
                    }
                    let neighbors: [[isize; 3]; 6] = [
                        [-1, 0, 0],
                        [1, 0, 0],
                        [0, -1, 0],
                        [0, 1, 0],
                        [0, 0, -1],
                        [0, 0, 1],
                    ];
                    let mut exposed = false;
                    for nb in neighbors {
                        let zz = z as isize + nb[0];
                        let yy = y as isize + nb[1];
                        let xx = x as isize + nb[2];
                        if zz < 0
                            || zz >= d as isize
                            || yy < 0
                            || yy >= h as isize
                            || xx < 0
                            || xx >= w as isize
                            || !m.get(zz as usize, yy as usize, xx as usize)
                        {
                            exposed = true;
                            break;
                        }
                    }
                    if exposed {
                        out.push([z as f64, y as f64, x as f64]);
                    }
                }
            }
        }
        out
    }

    pub fn hd95(a: &BinaryMask, b: &BinaryMask) -> Option<f64> {
        let sp = a.spacing();
        let sa = boundary(a);
        let sb = boundary(b);
        if sa.is_empty() || sb.is_empty() {
            return None;
        }
        let dist = |p: &[f64; 3], q: &[f64; 3]| {
            let dz = (p[0] - q[0]) * sp[0];
            let dy = (p[1] - q[1]) * sp[1];
            let dx = (p[2] - q[2]) * sp[2];
            (dz * dz + dy * dy + dx * dx).sqrt()
        };
        let mut pooled = Vec::new();
        for p in &sa {
            pooled.push(sb.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min));
        }
        for q in &sb {
            pooled.push(sa.iter().map(|p| dist(q, p)).fold(f64::INFINITY, f64::min));
        }
        pooled.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let rank = 0.95 * (pooled.len() - 1) as f64;
        let lo = rank.floor() as usize;
        let frac = rank - lo as f64;
        Some(if lo + 1 < pooled.len() {
            pooled[lo] + frac * (pooled[lo + 1] - pooled[lo])
        } else {
            pooled[lo]
        })
    }

    fn d_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
        let mut inter = 0.0;
        let mut union = 0.0;
        for i in 0..a.data().len() {
            if a.data()[i] && b.data()[i] {
                inter += 1.0;
            }
            if a.data()[i] || b.data()[i] {
                union += 1.0;
            }
        }
        if union == 0.0 {
            0.0
        } else {
            1.0 - inter / union
        }
    }

    pub fn ged(samples: &[BinaryMask], raters: &RaterSet) -> f64 {
        let n = samples.len() as f64;
        let w = raters.weights();
        let mut cross = 0.0;
        for s in samples {
            for (k, r) in raters.masks().iter().enumerate() {
                cross += w[k] * d_iou(s, r) / n;
            }
        }
        let mut ss = 0.0;
        for a in samples {
            for b in samples {
                ss += d_iou(a, b) / (n * n);
            }
        }
        let mut rr = 0.0;
        for (i, a) in raters.masks().iter().enumerate() {
            for (j, b) in raters.masks().iter().enumerate() {
                rr += w[i] * w[j] * d_iou(a, b);
            }
        }
        (2.0 * cross - ss - rr).max(0.0).sqrt()
    }

    pub fn ci(samples: &[BinaryMask], raters: &RaterSet) -> f64 {
        let nv = samples[0].data().len();
        let union = |set: &[BinaryMask]| -> Vec<bool> {
            let mut u = vec![false; nv];
            for m in set {
                for (i, &b) in m.data().iter().enumerate() {
                    u[i] |= b;
                }
            }
            u
        };
        let us = union(samples);
        let ur = union(raters.masks());
        let nr = ur.iter().filter(|&&b| b).count();
        let hit = us.iter().zip(&ur).filter(|(&s, &r)| s && r).count();
        let sens = if nr == 0 {
            if us.iter().any(|&b| b) {
                0.0
            } else {
                1.0
            }
        } else {
            hit as f64 / nr as f64
        };
        let mut dmax = 0.0;
        for (k, r) in raters.masks().iter().enumerate() {
            let mut best = 0.0f64;
            for s in samples {
                best = best.max(dice(s, r));
            }
            dmax += raters.weights()[k] * best;
        }
        let var = |counts: &[f64], weights: &[f64]| {
            let mean: f64 = counts.iter().zip(weights).map(|(c, w)| c * w).sum();
            counts
                .iter()
                .zip(weights)
                .map(|(c, w)| w * (c - mean) * (c - mean))
                .sum::<f64>()
        };
        let cs: Vec<f64> = samples.iter().map(|m| m.count() as f64).collect();
        let uw = vec![1.0 / samples.len() as f64; samples.len()];
        let vs = var(&cs, &uw);
        let cr: Vec<f64> = raters.masks().iter().map(|m| m.count() as f64).collect();
        let vr = var(&cr, raters.weights());
        let da = 1.0 - (vs - vr).abs() / vs.max(vr).max(1.0);
        if sens == 0.0 || dmax == 0.0 || da == 0.0 {
            return 0.0;
        }
        3.0 * sens * dmax * da / (dmax * da + sens * da + sens * dmax)
    }

    pub fn sncc(samples: &[BinaryMask], raters: &RaterSet) -> Option<f64> {
        let nv = samples[0].data().len() as f64;
        let up: Vec<f64> = (0..samples[0].data().len())
            .map(|i| {
                samples.iter().filter(|m| m.data()[i]).count() as f64 / samples.len() as f64
            })
            .collect();
        let ug: Vec<f64> = (0..samples[0].data().len())
            .map(|i| {
                raters
                    .masks()
                    .iter()
                    .zip(raters.weights())
                    .filter(|(m, _)| m.data()[i])
                    .map(|(_, &w)| w)
                    .sum()
            })
            .collect();
        let mp = up.iter().sum::<f64>() / nv;
        let mg = ug.iter().sum::<f64>() / nv;
        let cov: f64 = up.iter().zip(&ug).map(|(p, g)| (p - mp) * (g - mg)).sum();
        let vp: f64 = up.iter().map(|p| (p - mp) * (p - mp)).sum();
        let vg: f64 = ug.iter().map(|g| (g - mg) * (g - mg)).sum();
        if vp == 0.0 || vg == 0.0 {
            return None;
        }
        Some(cov / (vp.sqrt() * vg.sqrt()))
    }
}

#[test]
fn criterion_08_metric_oracles() {
    use rand::Rng as _;
    let mut r = rng::seeded(909);
    let mut worst: (f64, &str) = (0.0, "none");
    let mut verified = 0usize;
    for _ in 0..100 {
        let dims = [
            r.random_range(3..=12usize),
            r.random_range(3..=12usize),
            r.random_range(3..=12usize),
        ];
        let n = dims[0] * dims[1] * dims[2];
        let density = r.random_range(0.2..0.7);
        let mask = |r: &mut rng::Rng| {
            let data: Vec<bool> = (0..n).map(|_| r.random::<f64>() < density).collect();
            BinaryMask::new(dims, [1.0; 3], data).unwrap()
        };
        let n_samples = r.random_range(2..=4usize);
        let n_raters = r.random_range(2..=3usize);
        let samples: Vec<BinaryMask> = (0..n_samples).map(|_| mask(&mut r)).collect();
        let rmasks: Vec<BinaryMask> = (0..n_raters).map(|_| mask(&mut r)).collect();
        let weights: Vec<f64> = (0..n_raters).map(|_| r.random_range(0.2..1.0)).collect();
        let raters = RaterSet::new(rmasks, weights).unwrap();

        let mut track = |name: &'static str, diff: f64, tol: f64| {
            if diff > tol {
                worst = (diff, name);
            }
        };
        let d_fast = metrics::dice(&samples[0], raters.masks().first().unwrap()).unwrap();
        let d_brute = brute::dice(&samples[0], raters.masks().first().unwrap());
        track("dice", (d_fast - d_brute).abs(), 1e-6);

        match (metrics::hd95(&samples[0], &samples[1]), brute::hd95(&samples[0], &samples[1])) {
            (Ok(fast), Some(b)) => track("hd95", (fast - b).abs(), 1e-6),
            (Err(_), None) => {}
            other => panic!("hd95 emptiness disagreement: {other:?}"),
        }

        let g_fast = metrics::ged(&samples, &raters).unwrap();
        track("ged", (g_fast - brute::ged(&samples, &raters)).abs(), 1e-6);

        let c_fast = metrics::ci_score(&samples, &raters).unwrap();
        track("ci", (c_fast - brute::ci(&samples, &raters)).abs(), 1e-6);

        match (metrics::sncc(&samples, &raters), brute::sncc(&samples, &raters)) {
            (Ok(fast), Some(b)) => track("sncc", (fast - b).abs(), 1e-10),
            (Err(_), None) => {}
            other => panic!("sncc degeneracy disagreement: {other:?}"),
        }
        verified += 1;
    }
    check(
        "criterion 8 (metric oracles)",
        worst.1 == "none" && verified == 100,
        &format!("all metrics match brute force on {verified} random cases (worst offender: {})", worst.1),
    );
}

// -------------------------------------------------------------------------
// 9. Gradient check and overfit
// -------------------------------------------------------------------------

#[test]
fn criterion_09_gradient_check_and_overfit() {
    use rand::Rng as _;
    let s = schedule50();
    let mut worst_rel = 0.0f64;
    for input_seed in 0..5 {
        let mut r = rng::seeded(1000 + input_seed);
        let y0 = random_label([6, 6, 6], &mut r);
        let y_hat = random_label([6, 6, 6], &mut r);
        let eps = noise_like(&y0, &mut r);
        let t = r.random_range(1..=s.steps());
        let y_t = forward_marginal(&y0, &y_hat, &s, t, &eps).unwrap();
        let sites = (0..16).map(|_| r.random_range(0..y0.len())).collect();
        let batch = vec![TrainSample { y_t, x: None, y_hat, t, eps, sites }];
        let model = PatchRegressor::init(1, 6, &mut rng::seeded(2000 + input_seed));
        let (_, grad) = model.loss_and_grads(&batch, &s, 0.0).unwrap();
        let h = 1e-4;
        for _ in 0..20 {
            let i = r.random_range(0..model.param_count());
            let mut plus = model.clone();
            plus.set_param(i, model.param(i) + h);
            let mut minus = model.clone();
            minus.set_param(i, model.param(i) - h);
            let fd = (plus.batch_loss(&batch, &s, 0.0).unwrap()
                - minus.batch_loss(&batch, &s, 0.0).unwrap())
                / (2.0 * h);
            let denom = grad[i].abs().max(fd.abs()).max(1e-8);
            worst_rel = worst_rel.max(((grad[i] - fd) / denom).abs());
        }
    }

    // overfit one batch
    let mut r = rng::seeded(3000);
    let y0 = random_label([6, 6, 6], &mut r);
    let y_hat = random_label([6, 6, 6], &mut r);
    let eps = noise_like(&y0, &mut r);
    let y_t = forward_marginal(&y0, &y_hat, &s, 20, &eps).unwrap();
    let sites = (0..24).map(|_| r.random_range(0..y0.len())).collect();
    let batch = vec![TrainSample { y_t, x: None, y_hat, t: 20, eps, sites }];
    let mut model = PatchRegressor::init(1, 16, &mut rng::seeded(3001));
    let initial = model.batch_loss(&batch, &s, 0.0).unwrap();
    let mut lr = 2.0;
    let mut last = initial;
    for _ in 0..200 {
        let (candidate, _) = train_step(&model, &batch, &s, lr, 0.0).unwrap();
        let cand_loss = candidate.batch_loss(&batch, &s, 0.0).unwrap();
        if cand_loss > last {
            lr *= 0.5;
        } else {
            model = candidate;
            last = cand_loss;
        }
    }
    let drop = 1.0 - last / initial;
    check(
        "criterion 9 (gradient check + overfit)",
        worst_rel <= 1e-4 && drop >= 0.9,
        &format!(
            "max relative gradient error {worst_rel:.2e} <= 1e-4 over 5 inputs x 20 weights; overfit loss drop {:.1}% >= 90%",
            100.0 * drop
        ),
    );
}

// -------------------------------------------------------------------------
// 10. Reproducibility
// -------------------------------------------------------------------------

fn run_pipeline(root: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig {
        dataset: root.join("dataset"),
        out: root.join("out"),
        ..Default::default()
    };
    cfg.sampler.n_samples = 4;
    cfg.sampler.seed = 1010;
    cmd_synth(&cfg).unwrap();
    cmd_sample(&cfg).unwrap();
    cmd_eval(&cfg).unwrap();
    cfg
}

fn collect_files(root: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                if rel.ends_with("run_config.json") {
                    continue; // echoes the differing absolute roots by design
                }
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_10_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    run_pipeline(&tmp.path().join("a"));
    run_pipeline(&tmp.path().join("b"));
    let a = collect_files(&tmp.path().join("a"));
    let b = collect_files(&tmp.path().join("b"));
    let same_names = a.keys().collect::<Vec<_>>() == b.keys().collect::<Vec<_>>();
    let mut diff = Vec::new();
    for (name, bytes) in &a {
        if b.get(name) != Some(bytes) {
            diff.push(name.clone());
        }
    }
    check(
        "criterion 10 (reproducibility)",
        same_names && diff.is_empty(),
        &format!(
            "synth -> sample -> eval twice: {} files byte-identical (mismatches: {:?})",
            a.len(),
            diff
        ),
    );
}
