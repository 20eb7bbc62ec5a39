//! A short end-to-end highway run: vehicles on a 1.5 km circular road
//! broadcast application data while the decentralized selection protocol
//! measures per-channel load, exchanges context packets, and moves
//! traffic onto the technologies that can still meet each vehicle's
//! delivery requirement.
//!
//! The run is deliberately small (60 vehicles, 40 simulated seconds) so
//! it completes in seconds; the `simulate` subcommand of the bundled
//! binary runs full-scale grids. A coarse delivery-ratio calibration for
//! all five technologies happens inline first.
//!
//! Run with: `cargo run --example highway_sim`

use carhet::link::{calibrate_pdr, default_pathloss_for, CalibrationConfig};
use carhet::radio::{default_catalog, McsMode};
use carhet::sim::{run_simulation, Scheme, SimAssets, SimConfig};

fn main() {
    let catalog = default_catalog();
    let pathloss = default_pathloss_for(&catalog);

    println!("calibrating coarse delivery surfaces (a few seconds per technology)...");
    let cfg = CalibrationConfig {
        cbr_levels: vec![0.0, 0.25, 0.5],
        distances_m: (0..=8).map(|k| k as f64 * 25.0).collect(),
        trials: 300,
        seed: 11,
        payload_bytes: 1024,
        mcs: McsMode::Highest,
    };
    let families: Vec<_> = catalog
        .iter()
        .zip(&pathloss)
        .map(|(p, pl)| calibrate_pdr(p, pl, &cfg).expect("moderate loads are reachable"))
        .collect();

    let assets = SimAssets {
        catalog,
        pathloss,
        families: Some(families),
    };

    for scheme in [Scheme::SingleRat { rat_id: 1 }, Scheme::Carhet] {
        let config = SimConfig {
            road_length_m: 1500.0,
            density_veh_per_km: 40.0,
            sim_time_s: 40.0,
            warmup_s: 10.0,
            seed: 3,
            scheme,
            ..SimConfig::default()
        };
        let report = run_simulation(&config, &assets).expect("valid configuration");

        println!("\nscheme: {}", report.scheme_label);
        println!("  vehicles: {}", report.n_vehicles);
        if let Some(medians) = report.median_cbr_per_rat() {
            let cells: Vec<String> = medians.iter().map(|m| format!("{m:.3}")).collect();
            println!("  median busy ratio per RAT: [{}]", cells.join(", "));
        }
        println!(
            "  fleet satisfaction: {:.1}% of measurable vehicles met their P*R floor",
            report.percent_satisfied()
        );
        println!(
            "  technology changes after warmup: {}",
            report.rat_change_intervals(report.warmup_s).len()
        );
        println!(
            "  frames generated {} / transmitted {}; in-range deliveries {} of {} offers",
            report.counters.app_frames_generated,
            report.counters.app_frames_transmitted,
            report.counters.pair_deliveries,
            report.counters.pair_offers
        );
    }
}
