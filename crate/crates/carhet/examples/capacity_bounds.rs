//! Analytic capacity bounds: how many vehicles per kilometre each
//! technology can carry before its channel saturates, and what the whole
//! catalog supports when every technology is used in parallel.
//!
//! The bound inverts the sensed-load model: a vehicle transmitting R bps
//! occupies its channel for a duty cycle R/link_rate, neighbors sense
//! that load weighted by the packet-sensing probability at their
//! distance, and the channel is full when the sensed sum hits 0.6.
//!
//! Run with: `cargo run --example capacity_bounds`

use carhet::capacity::{max_density_hetero, max_density_single, TrafficAssumption};
use carhet::radio::{default_catalog, derive_psr_catalog, McsMode};

fn main() {
    let catalog = default_catalog();
    // Sensing-probability curves out to 3 km, far beyond any technology's
    // sensing floor, so the interference footprint has fully converged.
    let psrs = derive_psr_catalog(&catalog, 3000.0);
    let payload_bytes = 1024;

    for (rate_bps, mcs, label) in [
        (500_000.0, McsMode::Highest, "0.5 Mbps at the highest MCS"),
        (1_000_000.0, McsMode::Highest, "1.0 Mbps at the highest MCS"),
        (1_500_000.0, McsMode::Highest, "1.5 Mbps at the highest MCS"),
        (16_000.0, McsMode::QpskHalf, "16 kbps beacons at QPSK 1/2"),
    ] {
        println!("application load: {label}");
        println!("  {:<10} {:>22}", "RAT", "max density [veh/km]");

        let mut items = Vec::new();
        for (i, profile) in catalog.iter().enumerate() {
            let t = TrafficAssumption::from_app_rate(rate_bps, payload_bytes, profile, mcs);
            let single = max_density_single(&t, &psrs[i]);
            println!("  {:<10} {:>22.1}", profile.name, single);
            items.push((t, &psrs[i]));
        }

        let combined = max_density_hetero(&items);
        println!("  {:<10} {:>22.1}", "combined", combined);

        let t_ref = TrafficAssumption::from_app_rate(rate_bps, payload_bytes, &catalog[1], mcs);
        let ratio = combined / max_density_single(&t_ref, &psrs[1]);
        println!("  combined / {} alone: {ratio:.2}x\n", catalog[1].name);
    }
}
