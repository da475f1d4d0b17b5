//! Training the patch regressor on the anchored process of one synthetic
//! case, with a finite-difference gradient spot check. The trained model
//! is written as JSON so the CLI can sample with it:
//!
//! ```bash
//! cargo run --release --example train_denoiser
//! vdd sample --dataset <ds> --out <out> \
//!     --set 'denoiser={"kind":"mlp","path":"model.json"}'
//! ```

use rand::Rng as _;

use vdd::forward::{forward_marginal, noise_like};
use vdd::patch::{PatchRegressor, TrainSample};
use vdd::rng;
use vdd::run::{train_regressor, TrainOpts};
use vdd::schedule::{Schedule, ScheduleKind};
use vdd::synth::{make_image, make_prior, make_raters, make_shape_sdf, PriorDegrade, RaterModel, ShapeKind, ShapeSpec};

fn main() -> vdd::Result<()> {
    let spec = ShapeSpec {
        kind: ShapeKind::Sphere { center: [7.5, 7.5, 7.5], radius: 4.5 },
        dims: [16, 16, 16],
        spacing: [1.0; 3],
        seed: 0,
    };
    let sdf = make_shape_sdf(&spec)?;
    let raters = make_raters(
        &sdf,
        &RaterModel { offsets: vec![-1.0, 0.0, 1.0], weights: None, angular_amp: 0.0 },
    )?;
    let prior = make_prior(&raters, PriorDegrade::None);
    let image = make_image(&sdf);
    let schedule = Schedule::make(ScheduleKind::Linear, 50, 1e-6)?;

    // gradient spot check on a fresh model before training
    let mut r = rng::seeded(1);
    let model = PatchRegressor::init(1, 16, &mut r);
    let y0 = &raters.signed()[0];
    let eps = noise_like(y0, &mut r);
    let t = 20;
    let y_t = forward_marginal(y0, &prior, &schedule, t, &eps)?;
    let sites = (0..32).map(|_| r.random_range(0..y0.len())).collect();
    let batch = vec![TrainSample {
        y_t,
        x: Some(image.clone()),
        y_hat: prior.clone(),
        t,
        eps,
        sites,
    }];
    let (loss0, grad) = model.loss_and_grads(&batch, &schedule, 0.0)?;
    let h = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let i = r.random_range(0..model.param_count());
        let mut plus = model.clone();
        plus.set_param(i, model.param(i) + h);
        let mut minus = model.clone();
        minus.set_param(i, model.param(i) - h);
        let fd = (plus.batch_loss(&batch, &schedule, 0.0)?
            - minus.batch_loss(&batch, &schedule, 0.0)?)
            / (2.0 * h);
        worst = worst.max(((grad[i] - fd) / grad[i].abs().max(fd.abs()).max(1e-8)).abs());
    }
    println!("pre-training loss {loss0:.4}; worst gradient-vs-FD relative error {worst:.2e}");

    // full training run
    let opts = TrainOpts { steps: 600, seed: 7, ..Default::default() };
    println!(
        "training: {} steps, batch {}, {} sites/sample, hidden {}",
        opts.steps, opts.batch_size, opts.sites_per_sample, opts.hidden
    );
    let trained = train_regressor(&raters, &prior, Some(&image), &schedule, &opts)?;

    // loss before/after on a held-out batch
    let mut r2 = rng::seeded(99);
    let eval_batch: Vec<TrainSample> = (0..8)
        .map(|_| {
            let k = r2.random_range(0..raters.len());
            let y0 = &raters.signed()[k];
            let t = r2.random_range(1..=schedule.steps());
            let eps = noise_like(y0, &mut r2);
            let y_t = forward_marginal(y0, &prior, &schedule, t, &eps).unwrap();
            let sites = (0..128).map(|_| r2.random_range(0..y0.len())).collect();
            TrainSample { y_t, x: Some(image.clone()), y_hat: prior.clone(), t, eps, sites }
        })
        .collect();
    let fresh = PatchRegressor::init(1, opts.hidden, &mut rng::seeded(1));
    println!(
        "held-out noise MSE: untrained {:.4} -> trained {:.4}",
        fresh.batch_loss(&eval_batch, &schedule, 0.0)?,
        trained.batch_loss(&eval_batch, &schedule, 0.0)?
    );

    let path = std::env::temp_dir().join("vdd_patch_model.json");
    std::fs::write(&path, serde_json::to_string_pretty(&trained).expect("serializable"))
        .expect("model written");
    println!("model saved to {}", path.display());
    Ok(())
}
