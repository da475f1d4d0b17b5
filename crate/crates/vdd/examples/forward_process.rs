//! The anchored forward process at a glance: schedule tables, the
//! prior-anchored marginal, its reduction to plain DDPM, and terminal
//! convergence toward the prior.
//!
//! ```bash
//! cargo run --release --example forward_process
//! ```

use vdd::forward::{forward_expectation, forward_marginal, forward_marginal_ddpm, noise_like};
use vdd::rng;
use vdd::schedule::{Schedule, ScheduleKind};
use vdd::synth::{make_raters, make_shape_sdf, RaterModel, ShapeKind, ShapeSpec};
use vdd::volume::{Volume, VolumeKind};

fn main() -> vdd::Result<()> {
    // Both schedule families end exactly at the floor eta.
    for kind in [ScheduleKind::Linear, ScheduleKind::Cosine] {
        let s = Schedule::make(kind, 50, 1e-6)?;
        println!("{kind:?} schedule, T = 50, eta = 1e-6:");
        for t in [0, 1, 10, 25, 40, 49, 50] {
            let c = s.lookup(t)?;
            println!(
                "  t = {t:>2}: alpha_bar = {:>12.6e}  beta_bar = {:.6}",
                c.alpha_bar, c.beta_bar
            );
        }
    }

    // A sphere phantom with three boundary-offset raters.
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
    let y0 = raters.signed()[1].clone();
    let y_hat = raters.mean_signed();

    let s = Schedule::make(ScheduleKind::Linear, 50, 1e-6)?;
    let mut r = rng::seeded(42);
    let eps = noise_like(&y0, &mut r);

    println!("\nanchored marginal: distance of E[y_t] from y0 and from the prior");
    for t in [0, 10, 25, 40, 50] {
        let e = forward_expectation(&y0, &y_hat, &s, t)?;
        let d0 = max_abs_diff(&e, &y0);
        let dh = max_abs_diff(&e, &y_hat);
        println!("  t = {t:>2}: ||E - y0||_inf = {d0:.4}   ||E - prior||_inf = {dh:.4}");
    }
    println!("(mass moves from the label to the prior, not to zero)");

    // With a zero anchor the marginal is the plain DDPM one, bit for bit.
    let zeros = Volume::zeros_like(&y0, VolumeKind::Label);
    let anchored = forward_marginal(&y0, &zeros, &s, 25, &eps)?;
    let plain = forward_marginal_ddpm(&y0, &s, 25, &eps)?;
    let identical = anchored
        .data()
        .iter()
        .zip(plain.data())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!("\nzero-anchor marginal equals the DDPM marginal bitwise: {identical}");

    // Terminal convergence: the mean of many terminal draws is the prior.
    let n = 2000;
    let mut mean = vec![0.0; y0.len()];
    for _ in 0..n {
        let e = noise_like(&y0, &mut r);
        let y_t = forward_marginal(&y0, &y_hat, &s, 50, &e)?;
        for (m, &v) in mean.iter_mut().zip(y_t.data()) {
            *m += v / n as f64;
        }
    }
    let worst = mean
        .iter()
        .zip(y_hat.data())
        .map(|(&m, &h)| (m - h).abs())
        .fold(0.0f64, f64::max);
    println!("terminal draws ({n}): max |mean(y_T) - prior| = {worst:.4} (MC noise ~ {:.4})", 4.0 / (n as f64).sqrt());
    Ok(())
}

fn max_abs_diff(a: &Volume, b: &Volume) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs())
        .fold(0.0, f64::max)
}
