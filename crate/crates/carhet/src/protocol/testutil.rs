//! Synthetic curves and table builders shared by the protocol test
//! modules. Test-only.

use super::table::{ContextTable, NS_PER_MS};
use super::wire::{cbr_to_byte, meters_to_fixed, CisEntry, CisPacket};
use crate::link::PdrCurveFamily;
use crate::radio::PsrCurve;

/// Rectangle PSR: 1.0 out to `range_m`, 0 beyond.
pub fn rect_psr(range_m: usize) -> PsrCurve {
    PsrCurve {
        min_distance_m: 0.0,
        step_m: 1.0,
        values: vec![1.0; range_m + 1],
    }
}

/// Linear-ramp PSR: 1.0 at 0 m falling to 0.0 at `range_m`.
pub fn ramp_psr(range_m: usize) -> PsrCurve {
    PsrCurve {
        min_distance_m: 0.0,
        step_m: 1.0,
        values: (0..=range_m)
            .map(|d| 1.0 - d as f64 / range_m as f64)
            .collect(),
    }
}

/// A delivery-ratio family whose PDR is `base - cbr` at every distance:
/// easy to reason about thresholds.
pub fn flat_family(rat_id: u8, base: f64) -> PdrCurveFamily {
    let cbr_levels: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    let distances: Vec<f64> = (0..=50).map(|i| (i * 10) as f64).collect();
    let mut pdr = Vec::new();
    for &c in &cbr_levels {
        for _ in &distances {
            pdr.push((base - c).clamp(0.0, 1.0));
        }
    }
    PdrCurveFamily {
        rat_id,
        cbr_levels,
        distances_m: distances,
        pdr,
        samples: 1000,
    }
}

/// Builds a context table by feeding one direct packet per neighbor at
/// t = 1 s.
pub fn table_from(neighbors: &[(u32, (f64, f64), Vec<f64>)], n_rat: usize) -> ContextTable {
    let mut table = ContextTable::new(0, n_rat);
    for (id, pos, cbr) in neighbors {
        let pkt = CisPacket {
            sender_id: *id,
            flag_hops: 0,
            entries: vec![CisEntry {
                vehicle_id: *id,
                ut_ms: 1_000,
                lat: meters_to_fixed(pos.1),
                lon: meters_to_fixed(pos.0),
                cbr: cbr.iter().map(|&c| cbr_to_byte(c)).collect(),
            }],
        };
        table.ingest_cis(&pkt, 1_000 * NS_PER_MS);
    }
    table
}
