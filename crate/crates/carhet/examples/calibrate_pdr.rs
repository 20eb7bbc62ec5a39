//! Monte-Carlo calibration of a packet-delivery-ratio surface for one
//! technology: a probe transmitter broadcasts through a fence of passive
//! receivers while a line of background stations raises the channel load
//! to each target level, all through the same CSMA machinery the highway
//! simulation runs.
//!
//! The full-resolution surface takes minutes per technology; this example
//! uses a coarse grid so it finishes in seconds. The `calibrate`
//! subcommand of the bundled binary produces and caches the full grids.
//!
//! Run with: `cargo run --example calibrate_pdr`

use carhet::link::{default_pathloss_for, CalibrationConfig};
use carhet::radio::{default_catalog, McsMode};

fn main() {
    let catalog = default_catalog();
    let pathloss = default_pathloss_for(&catalog);
    let profile = &catalog[1];

    let cfg = CalibrationConfig {
        cbr_levels: vec![0.0, 0.3, 0.6],
        distances_m: (0..=6).map(|k| k as f64 * 50.0).collect(),
        trials: 400,
        seed: 42,
        payload_bytes: 1024,
        mcs: McsMode::Highest,
    };

    println!(
        "calibrating {} over {} load levels x {} distances, {} probe frames per cell...",
        profile.name,
        cfg.cbr_levels.len(),
        cfg.distances_m.len(),
        cfg.trials
    );
    let family = carhet::link::calibrate_pdr(profile, &pathloss[1], &cfg)
        .expect("default profiles reach moderate load levels");

    print!("{:>10} ", "dist [m]");
    for cbr in &family.cbr_levels {
        print!("  load {cbr:.1}");
    }
    println!();
    for (di, d) in family.distances_m.iter().enumerate() {
        print!("{d:>10.0} ");
        for ci in 0..family.cbr_levels.len() {
            print!("{:>9.3}", family.pdr[ci * family.distances_m.len() + di]);
        }
        println!();
    }

    // The surface is isotonic-smoothed: delivery never improves with more
    // load or more distance, so bilinear lookups between grid points are
    // safe for the protocol's feasibility checks.
    assert!(family.is_monotone());
    println!(
        "\nlookup between grid points: PDR at load 0.45, 75 m = {:.3}",
        family.lookup(0.45, 75.0)
    );
}
