//! The five experiment commands behind the `vdd` binary. Each is an
//! ordinary library function so tests and examples can drive them
//! directly; the binary only parses arguments and maps errors to exit
//! codes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, NullDenoiser, OracleDenoiser};
use crate::error::{Result, VddError};
use crate::forward::{forward_expectation, forward_step};
use crate::metrics;
use crate::patch::PatchRegressor;
use crate::rng;
use crate::sampler::{sample, SamplerConfig};
use crate::schedule::{Schedule, ETA_MAX};
use crate::synth::{make_image, make_prior, make_raters, make_shape_sdf};
use crate::volume::{binarize, write_volume, Volume, VolumeKind};

use super::dataset::{default_cases, load_case, load_samples, read_json, write_json, DatasetManifest};
use super::{Anchor, DenoiserChoice, RunConfig};

/// Generates the synthetic dataset described by `cfg.synth` under
/// `cfg.dataset`: per-case rater masks, prior, image and spec, plus a
/// dataset manifest.
pub fn cmd_synth(cfg: &RunConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let cases = default_cases(&cfg.synth);
    fs::create_dir_all(&cfg.dataset).map_err(|e| VddError::io(&cfg.dataset, e))?;
    for case in &cases {
        let dir = cfg.dataset.join(&case.id);
        fs::create_dir_all(&dir).map_err(|e| VddError::io(&dir, e))?;
        let sdf = make_shape_sdf(&case.shape)?;
        let raters = make_raters(&sdf, &case.raters)?;
        let prior = make_prior(&raters, case.degrade);
        let image = make_image(&sdf);
        write_json(&dir.join("spec.json"), case)?;
        for (k, signed) in raters.signed().iter().enumerate() {
            write_volume(signed, &dir.join(format!("rater_{k}")))?;
        }
        write_volume(&prior, &dir.join("prior"))?;
        write_volume(&image, &dir.join("image"))?;
    }
    let manifest = DatasetManifest {
        cases: cases.iter().map(|c| c.id.clone()).collect(),
        synth: cfg.synth.clone(),
    };
    write_json(&cfg.dataset.join("dataset.json"), &manifest)?;
    Ok(manifest)
}

/// Monte-Carlo diagnostics of the forward process, written to
/// `<out>/forward_check.json`. `pass` requires all three checks to hold:
/// chain/marginal mean agreement within the 4-sigma bound, chain variance
/// within 5% of `bb_t^2`, and the terminal mean within
/// `sqrt(1e-6) * ||y0 - y_hat||_inf` plus Monte-Carlo slack of the prior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForwardDiagnostics {
    pub marginal_mean_err: f64,
    pub marginal_bound: f64,
    pub variance_rel_err: f64,
    pub variance_tol: f64,
    pub terminal_mean_err: f64,
    pub terminal_bound: f64,
    pub pass: bool,
}

const DIAG_CHAINS: usize = 10_000;

pub fn cmd_check_forward(cfg: &RunConfig) -> Result<ForwardDiagnostics> {
    let manifest: DatasetManifest = read_json(&cfg.dataset.join("dataset.json"))?;
    let first = manifest
        .cases
        .first()
        .ok_or_else(|| VddError::InvalidConfig("dataset has no cases".into()))?;
    let case = load_case(&cfg.dataset.join(first))?;
    // deliberately lenient: a mis-anchored floor must run and then fail
    let schedule = cfg.schedule.build_lenient()?;

    let y0_full = &case.raters.signed()[0];
    let crop = boundary_crop(y0_full, &case.prior, [4, 4, 4]);
    let y0 = crop_volume(y0_full, crop, [4, 4, 4]);
    let y_hat = crop_volume(&case.prior, crop, [4, 4, 4]);

    let t_max = schedule.steps();
    let mut checkpoints = vec![1, (t_max / 2).max(1), t_max];
    checkpoints.dedup();

    let n_vox = y0.len();
    let mut sums = vec![vec![0.0; n_vox]; checkpoints.len()];
    let mut sqs = vec![vec![0.0; n_vox]; checkpoints.len()];
    let mut r = rng::split(cfg.sampler.seed, 1 << 40);
    for _ in 0..DIAG_CHAINS {
        let mut y = y0.clone();
        for t in 1..=t_max {
            y = forward_step(&y, &y_hat, &schedule, t, &mut r)?;
            if let Some(ci) = checkpoints.iter().position(|&c| c == t) {
                for (i, &v) in y.data().iter().enumerate() {
                    sums[ci][i] += v;
                    sqs[ci][i] += v * v;
                }
            }
        }
    }

    let n = DIAG_CHAINS as f64;
    // report the (error, bound) pair of the worst checkpoint by ratio;
    // bounds are positive since beta_bar(t) > 0 for t >= 1
    let mut marginal_mean_err = 0.0f64;
    let mut marginal_bound = 1.0f64;
    let mut worst_ratio = -1.0f64;
    let mut variance_rel_err = 0.0f64;
    let mut marginal_ok = true;
    for (ci, &t) in checkpoints.iter().enumerate() {
        let expect = forward_expectation(&y0, &y_hat, &schedule, t)?;
        let bb2 = schedule.beta_bar(t).powi(2);
        let bound = 4.0 * bb2.sqrt() / n.sqrt();
        let mut err_t = 0.0f64;
        for i in 0..n_vox {
            let mean = sums[ci][i] / n;
            let var = sqs[ci][i] / n - mean * mean;
            err_t = err_t.max((mean - expect.data()[i]).abs());
            variance_rel_err = variance_rel_err.max((var - bb2).abs() / bb2);
        }
        if err_t > bound {
            marginal_ok = false;
        }
        if err_t / bound > worst_ratio {
            worst_ratio = err_t / bound;
            marginal_mean_err = err_t;
            marginal_bound = bound;
        }
    }

    // terminal convergence, measured on the chain's endpoint statistics
    let last = checkpoints.len() - 1;
    let dmax: f64 = y0
        .data()
        .iter()
        .zip(y_hat.data())
        .map(|(&a, &b)| (a - b).abs())
        .fold(0.0, f64::max);
    let terminal_bound = ETA_MAX.sqrt() * dmax + 4.0 * schedule.beta_bar(t_max) / n.sqrt();
    let mut terminal_mean_err = 0.0f64;
    for (&acc, &h) in sums[last].iter().zip(y_hat.data()) {
        terminal_mean_err = terminal_mean_err.max((acc / n - h).abs());
    }

    let diag = ForwardDiagnostics {
        marginal_mean_err,
        marginal_bound,
        variance_rel_err,
        variance_tol: 0.05,
        terminal_mean_err,
        terminal_bound,
        pass: marginal_ok
            && variance_rel_err <= 0.05
            && terminal_mean_err <= terminal_bound,
    };
    fs::create_dir_all(&cfg.out).map_err(|e| VddError::io(&cfg.out, e))?;
    write_json(&cfg.out.join("forward_check.json"), &diag)?;
    Ok(diag)
}

/// Picks the origin of a window that straddles the prior/rater
/// disagreement, so diagnostics see a nontrivial `y0 - y_hat`.
fn boundary_crop(y0: &Volume, y_hat: &Volume, window: [usize; 3]) -> [usize; 3] {
    let dims = y0.dims();
    let mut origin = [
        (dims[0].saturating_sub(window[0])) / 2,
        (dims[1].saturating_sub(window[1])) / 2,
        (dims[2].saturating_sub(window[2])) / 2,
    ];
    'outer: for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                let i = y0.index(z, y, x);
                if (y0.data()[i] - y_hat.data()[i]).abs() > 0.5 {
                    origin = [
                        z.saturating_sub(1).min(dims[0] - window[0]),
                        y.saturating_sub(1).min(dims[1] - window[1]),
                        x.saturating_sub(1).min(dims[2] - window[2]),
                    ];
                    break 'outer;
                }
            }
        }
    }
    origin
}

fn crop_volume(v: &Volume, origin: [usize; 3], window: [usize; 3]) -> Volume {
    let mut data = Vec::with_capacity(window[0] * window[1] * window[2]);
    for z in 0..window[0] {
        for y in 0..window[1] {
            for x in 0..window[2] {
                data.push(v.get(origin[0] + z, origin[1] + y, origin[2] + x));
            }
        }
    }
    Volume::new(window, v.spacing(), v.kind(), data).expect("crop stays valid")
}

/// Run manifest written next to each case's samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub case: String,
    pub seed: u64,
    pub mode: crate::sampler::SampleMode,
    #[serde(rename = "T")]
    pub steps: usize,
    pub n_samples: usize,
    pub schedule: Schedule,
    pub denoiser_id: String,
    pub anchor: Anchor,
}

fn build_denoiser(
    choice: &DenoiserChoice,
    case: &super::dataset::CaseData,
) -> Result<Box<dyn Denoiser>> {
    Ok(match choice {
        DenoiserChoice::Oracle => Box::new(OracleDenoiser::new(case.raters.clone())),
        DenoiserChoice::Null => Box::new(NullDenoiser),
        DenoiserChoice::Mlp { path } => {
            let model: PatchRegressor = read_json(path)?;
            Box::new(model)
        }
    })
}

/// Samples every case of the dataset into `<out>/<case>/sample_<i>` with
/// a per-case run manifest. The anchor is the case prior, or the zero
/// volume for the plain-DDPM ablation arm.
pub fn cmd_sample(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let manifest: DatasetManifest = read_json(&cfg.dataset.join("dataset.json"))?;
    let schedule = cfg.schedule.build()?;
    fs::create_dir_all(&cfg.out).map_err(|e| VddError::io(&cfg.out, e))?;
    write_json(&cfg.out.join("run_config.json"), cfg)?;
    for (index, id) in manifest.cases.iter().enumerate() {
        let case = load_case(&cfg.dataset.join(id))?;
        let denoiser = build_denoiser(&cfg.denoiser, &case)?;
        let anchor = match cfg.anchor {
            Anchor::Prior => case.prior.clone(),
            Anchor::Zero => Volume::zeros_like(&case.prior, VolumeKind::Label),
        };
        let sampler = SamplerConfig { seed: cfg.case_seed(index), ..cfg.sampler };
        let outputs = sample(denoiser.as_ref(), Some(&case.image), &anchor, &schedule, &sampler)?;
        let dir = cfg.out.join(id);
        fs::create_dir_all(&dir).map_err(|e| VddError::io(&dir, e))?;
        for (i, vol) in outputs.iter().enumerate() {
            write_volume(vol, &dir.join(format!("sample_{i:03}")))?;
        }
        write_json(
            &dir.join("manifest.json"),
            &RunManifest {
                case: id.clone(),
                seed: sampler.seed,
                mode: sampler.mode,
                steps: schedule.steps(),
                n_samples: sampler.n_samples,
                schedule: schedule.clone(),
                denoiser_id: denoiser.id(),
                anchor: cfg.anchor,
            },
        )?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Evaluates each case's samples against its raters and writes
/// `<out>/metrics.csv` with one row per case. Returns the CSV path.
pub fn cmd_eval(cfg: &RunConfig) -> Result<PathBuf> {
    let manifest: DatasetManifest = read_json(&cfg.dataset.join("dataset.json"))?;
    let csv_path = cfg.out.join("metrics.csv");
    let mut writer = csv::Writer::from_path(&csv_path).map_err(|e| {
        VddError::InvalidConfig(format!("cannot write {}: {e}", csv_path.display()))
    })?;
    writer
        .write_record(["case_id", "n_samples", "dice_mean", "hd95_mm", "ged", "ci", "sncc"])
        .map_err(|e| VddError::InvalidConfig(e.to_string()))?;
    for id in &manifest.cases {
        let case = load_case(&cfg.dataset.join(id))?;
        let run: RunManifest = read_json(&cfg.out.join(id).join("manifest.json"))?;
        let samples = load_samples(&cfg.out.join(id), run.n_samples)?;
        let masks: Vec<_> = samples.iter().map(binarize).collect();
        let report = metrics::report(&masks, &case.raters)?;
        writer
            .write_record([
                id.clone(),
                report.n_samples.to_string(),
                format!("{:.6}", report.dice_mean),
                fmt_opt(report.hd95_mm),
                fmt_opt(report.ged),
                fmt_opt(report.ci),
                fmt_opt(report.sncc),
            ])
            .map_err(|e| VddError::InvalidConfig(e.to_string()))?;
    }
    writer.flush().map_err(|e| VddError::io(&csv_path, e))?;
    Ok(csv_path)
}

#[derive(Debug, Clone, Default)]
struct TableRow {
    n_samples: usize,
    dice: MeanOpt,
    hd95: MeanOpt,
    ged: MeanOpt,
    ci: MeanOpt,
}

/// Mean over values where every contributing cell was present; one
/// missing cell makes the aggregate missing, mirroring the `-` entries
/// of single-sample rows.
#[derive(Debug, Clone, Default)]
struct MeanOpt {
    sum: f64,
    n: usize,
    missing: bool,
}

impl MeanOpt {
    fn push(&mut self, cell: &str) {
        if cell.is_empty() {
            self.missing = true;
        } else {
            self.sum += cell.parse::<f64>().unwrap_or(f64::NAN);
            self.n += 1;
        }
    }

    fn get(&self) -> Option<f64> {
        (!self.missing && self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Joins labelled `metrics.csv` files into one ablation table
/// (variant x N, columns Dice / HD95 / GED / CI averaged over cases),
/// writes it as CSV, and returns a rendered text table.
pub fn cmd_report(inputs: &[(String, PathBuf)], out: &Path) -> Result<String> {
    if inputs.is_empty() {
        return Err(VddError::InvalidConfig("report needs at least one label=csv input".into()));
    }
    let mut rows: Vec<(String, TableRow)> = Vec::new();
    for (label, path) in inputs {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| VddError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let mut row = TableRow::default();
        for record in reader.records() {
            let record = record.map_err(|e| VddError::InvalidConfig(e.to_string()))?;
            row.n_samples = record[1].parse().unwrap_or(0);
            row.dice.push(&record[2]);
            row.hd95.push(&record[3]);
            row.ged.push(&record[4]);
            row.ci.push(&record[5]);
        }
        rows.push((label.clone(), row));
    }

    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| VddError::io(parent, e))?;
        }
    }
    let mut writer = csv::Writer::from_path(out)
        .map_err(|e| VddError::InvalidConfig(format!("{}: {e}", out.display())))?;
    writer
        .write_record(["variant", "N", "dice", "hd95_mm", "ged", "ci"])
        .map_err(|e| VddError::InvalidConfig(e.to_string()))?;
    let mut text = format!(
        "{:<14} {:>3} {:>10} {:>10} {:>10} {:>10}\n",
        "variant", "N", "dice", "hd95_mm", "ged", "ci"
    );
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    for (label, row) in &rows {
        writer
            .write_record([
                label.clone(),
                row.n_samples.to_string(),
                fmt_opt(row.dice.get()),
                fmt_opt(row.hd95.get()),
                fmt_opt(row.ged.get()),
                fmt_opt(row.ci.get()),
            ])
            .map_err(|e| VddError::InvalidConfig(e.to_string()))?;
        text.push_str(&format!(
            "{:<14} {:>3} {:>10} {:>10} {:>10} {:>10}\n",
            label,
            row.n_samples,
            cell(row.dice.get()),
            cell(row.hd95.get()),
            cell(row.ged.get()),
            cell(row.ci.get()),
        ));
    }
    writer.flush().map_err(|e| VddError::io(out, e))?;
    Ok(text)
}
