//! Writing the three-morphotype synthetic dataset to disk and reading it
//! back, including the VDV1 volume format round trip.
//!
//! ```bash
//! cargo run --release --example synthesize_dataset -- /tmp/vdd_dataset
//! ```

use vdd::run::{cmd_synth, load_case, RunConfig};
use vdd::synth::PriorDegrade;
use vdd::volume::{binarize, read_volume};

fn main() -> vdd::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("vdd_dataset"));

    // an eroded prior makes the anchor deliberately imperfect
    let mut cfg = RunConfig { dataset: root.clone(), ..Default::default() };
    cfg.synth.degrade = PriorDegrade::Erode1;
    let manifest = cmd_synth(&cfg)?;
    println!("wrote {:?} to {}", manifest.cases, root.display());

    for id in &manifest.cases {
        let case = load_case(&root.join(id))?;
        let prior_fg = binarize(&case.prior).count();
        println!(
            "{id:<11} K = {}, rater foreground = {:?}, prior foreground = {prior_fg}",
            case.raters.len(),
            case.raters.masks().iter().map(|m| m.count()).collect::<Vec<_>>(),
        );
    }

    // volumes are plain VDV1 pairs; any one can be loaded directly
    let prior = read_volume(&root.join("sphere").join("prior"))?;
    println!(
        "sphere prior: dims {:?}, spacing {:?}, kind {:?}, values in [{:.1}, {:.1}]",
        prior.dims(),
        prior.spacing(),
        prior.kind(),
        prior.data().iter().cloned().fold(f64::INFINITY, f64::min),
        prior.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(())
}
