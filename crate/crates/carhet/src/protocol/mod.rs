//! Decentralized RAT-selection protocol: context table, CIS codec, the
//! five decision stages (context acquisition, context sharing,
//! pre-selection, cost estimation, selection), and the randomized
//! evaluation trigger.
//!
//! Everything in this tree is a deterministic per-vehicle state machine:
//! no global state, no wall clock, all randomness injected through an
//! explicit RNG. Engines for distinct vehicles are independent and can be
//! stepped concurrently as long as packet delivery order per receiver is
//! preserved.

pub mod engine;
pub mod select;
pub mod table;
#[cfg(test)]
pub(crate) mod testutil;
pub mod wire;

pub use engine::{secs_to_ns, LastEval, SelectionConfig, SelectionState, TickInputs, TickOutcome};
pub use select::{estimate_costs, next_trigger_delay, preselect, select_rat};
pub use table::{ContextTable, NeighborEntry};
pub use wire::{CisEntry, CisPacket, WireError, MAX_ENTRIES, MAX_FLAG_HOPS};

/// Spatial layout used to turn stored positions into distances.
///
/// `Planar` is plain Euclidean distance. `Ring` wraps the x axis at
/// `length_m` — the circular-road trick that removes edge effects from a
/// linear highway segment — while y (lane offset) stays flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Planar,
    Ring { length_m: f64 },
}

impl Geometry {
    pub fn distance(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let dy = a.1 - b.1;
        let dx = match *self {
            Geometry::Planar => a.0 - b.0,
            Geometry::Ring { length_m } => {
                let mut d = (a.0 - b.0).rem_euclid(length_m);
                if d > length_m / 2.0 {
                    d = length_m - d;
                }
                d
            }
        };
        (dx * dx + dy * dy).sqrt()
    }
}
