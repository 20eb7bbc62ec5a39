//! Packet-sensing probability vs distance for every technology in the
//! default catalog: the chance that a receiver's carrier-sense stage
//! registers a packet, under the two-slope pathloss model with
//! log-normal shadowing.
//!
//! These curves drive both the analytic capacity bounds (as interference
//! footprints) and the protocol's cost estimator (as the coupling between
//! a transmitter and each neighbor's channel).
//!
//! Run with: `cargo run --example psr_curves`

use carhet::link::default_pathloss_for;
use carhet::radio::{default_catalog, derive_psr, sensing_probability};

fn main() {
    let catalog = default_catalog();
    let pathloss = default_pathloss_for(&catalog);

    print!("{:>10} ", "dist [m]");
    for profile in &catalog {
        print!("{:>10}", profile.name);
    }
    println!();

    for distance in (0..=10).map(|k| k as f64 * 100.0) {
        print!("{distance:>10.0} ");
        for (profile, params) in catalog.iter().zip(&pathloss) {
            let p = sensing_probability(profile, params, distance.max(1.0));
            print!("{p:>10.3}");
        }
        println!();
    }

    // The same numbers as reusable curve objects, tabulated per metre —
    // this is what the rest of the toolkit consumes.
    let psr = derive_psr(&catalog[1], &pathloss[1], 3000.0);
    println!(
        "\n{} sensing probability at 50 m: {:.3}, at 400 m: {:.3}",
        catalog[1].name,
        psr.value_at(50.0),
        psr.value_at(400.0),
    );
    // Summing the curve over every metre (both road directions) gives the
    // technology's interference footprint: how many metres of road hear a
    // transmission, in full-sensing-equivalent terms.
    let footprint_m: f64 = 2.0 * (1..=3000).map(|d| psr.value_at(d as f64)).sum::<f64>();
    println!(
        "two-sided interference footprint of {}: {footprint_m:.0} m-equivalent",
        catalog[1].name,
    );
}
