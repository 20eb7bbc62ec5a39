//! One pass through the decision pipeline a vehicle runs when its
//! evaluation timer fires: feasibility pre-selection against the
//! delivery-ratio surfaces, worst-neighbor cost estimation, and the
//! hysteresis-guarded final choice.
//!
//! The numbers are hand-built so every stage's effect is visible: RAT 1
//! is overloaded where this vehicle would transmit, RAT 0 cannot reach
//! the reliability target at the application's distance, and RAT 2 is
//! the cheap viable alternative.
//!
//! Run with: `cargo run --example rat_selection`

use carhet::link::PdrCurveFamily;
use carhet::protocol::{estimate_costs, preselect, select_rat, ContextTable, Geometry};
use carhet::radio::{default_catalog, derive_psr_catalog, packet_airtime, McsMode};

/// A synthetic delivery surface: perfect at zero load, degrading linearly
/// with load, and cut off beyond `reach_m`.
fn toy_family(rat_id: u8, reach_m: f64) -> PdrCurveFamily {
    let cbr_levels: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
    let distances_m: Vec<f64> = (0..=20).map(|i| i as f64 * 25.0).collect();
    let mut pdr = Vec::new();
    for &cbr in &cbr_levels {
        for &d in &distances_m {
            let reachable = if d <= reach_m { 1.0 - cbr } else { 0.0 };
            pdr.push(reachable);
        }
    }
    PdrCurveFamily {
        rat_id,
        cbr_levels,
        distances_m,
        pdr,
        samples: 0,
    }
}

fn main() {
    let catalog: Vec<_> = default_catalog().into_iter().take(3).collect();
    let psr = derive_psr_catalog(&catalog, 2000.0);
    let airtimes: Vec<f64> = catalog
        .iter()
        .map(|p| packet_airtime(p, 1024, McsMode::Highest))
        .collect();

    // RAT 0 only reaches 30 m; RATs 1 and 2 reach 400 m.
    let families = vec![toy_family(0, 30.0), toy_family(1, 400.0), toy_family(2, 400.0)];

    // This vehicle measures RAT 1 heavily loaded, the others quiet.
    let own_cbr = [0.05, 0.55, 0.10];
    let app_rate_hz = 500_000.0 / (1024.0 * 8.0); // packets per second
    let target_distance_m = 80.0;
    let reliability = 0.9;

    // Stage 1 — feasibility: can each RAT still deliver 90% at 80 m under
    // the load this vehicle currently sees? RAT 0 fails on reach, RAT 1
    // fails on load (PDR 0.45 < 0.9), RAT 2 passes.
    let candidates = preselect(&families, &own_cbr, target_distance_m, reliability);
    println!("feasible candidates: {candidates:?}");

    // Stage 2 — cost: what would the busiest neighbor's channel look like
    // if this vehicle moved its traffic there? The table carries two
    // neighbors, learned the only way rows ever arrive — from their own
    // context broadcasts. The one 50 m away reports RAT 2 at 0.30 busy.
    let mut table = ContextTable::new(7, catalog.len());
    for (id, x, cbr) in [
        (1u32, 50.0, [0.05, 0.50, 0.30]),
        (2u32, 200.0, [0.02, 0.40, 0.12]),
    ] {
        let cis = ContextTable::new(id, catalog.len()).build_cis(0, (x, 0.0), &cbr, 0);
        table.ingest_cis(&cis, 0);
    }

    let costs = estimate_costs(
        &table,
        &candidates,
        &psr,
        app_rate_hz,
        &airtimes,
        (0.0, 0.0),
        Geometry::Planar,
    );
    for (j, cost) in costs.iter().enumerate() {
        let note = if candidates.contains(&j) {
            "projected worst-neighbor load"
        } else {
            "not a candidate (pinned to the 1.0 sentinel)"
        };
        println!("RAT {j}: cost {cost:.3}  ({note})");
    }

    // Stage 3 — selection with hysteresis: currently on the overloaded
    // RAT 1, which pre-selection rejected, so its cost sits at the
    // sentinel and the vehicle flees to the cheapest viable RAT without
    // any margin test.
    let current = 1;
    let chosen = select_rat(&costs, current, 0.05);
    println!("currently on RAT {current}, selected RAT {chosen}");

    // Hysteresis in action: once on RAT 2, a rival that is only a whisker
    // cheaper is not worth the churn of switching.
    let mut near_tie = costs.clone();
    near_tie[0] = near_tie[2] - 0.01; // pretend RAT 0 became viable, barely cheaper
    let kept = select_rat(&near_tie, chosen, 0.05);
    assert_eq!(kept, chosen);
    println!("a 0.01 improvement does not beat the 0.05 hysteresis margin: staying on {kept}");
}
