//! Per-vehicle context table: what each vehicle knows about its
//! neighborhood, one row per neighbor.
//!
//! Rows carry hop depth (1 = heard directly, 2 = learned through a
//! relay), an update timestamp UT, a reception timestamp RT that exists
//! only for direct rows (and equals UT there), a planar position, and one
//! measured channel-busy-ratio value per RAT. A vehicle never stores a row
//! for itself; its own state is attached at packet-build time.
//!
//! Storage is a dense `Vec<Option<...>>` indexed by vehicle id. Tables are
//! ingested thousands of times per simulated second, and vehicle ids in
//! every supported scenario are small consecutive integers, so the dense
//! layout beats a map both on update cost and on deterministic iteration
//! order.

use super::wire::{
    byte_to_cbr, cbr_to_byte, fixed_to_meters, meters_to_fixed, CisEntry, CisPacket, MAX_ENTRIES,
};

pub const NS_PER_MS: u64 = 1_000_000;

/// One neighbor row.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborEntry {
    pub vehicle_id: u32,
    /// 1 = heard directly, 2 = relayed.
    pub hop_depth: u8,
    /// Present (and equal to `ut_ns`) only for direct rows.
    pub rt_ns: Option<u64>,
    /// When this row's information was generated.
    pub ut_ns: u64,
    /// Planar metres, x along the road (wire longitude), y across (latitude).
    pub pos_m: (f64, f64),
    /// Channel busy ratio per RAT, each in [0, 1].
    pub cbr: Vec<f64>,
}

/// Context table for one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextTable {
    own_id: u32,
    n_rat: usize,
    rows: Vec<Option<NeighborEntry>>,
    occupied: usize,
}

impl ContextTable {
    pub fn new(own_id: u32, n_rat: usize) -> Self {
        ContextTable {
            own_id,
            n_rat,
            rows: Vec::new(),
            occupied: 0,
        }
    }

    pub fn own_id(&self) -> u32 {
        self.own_id
    }

    pub fn n_rat(&self) -> usize {
        self.n_rat
    }

    /// Number of stored rows.
    pub fn len(&self) -> usize {
        self.occupied
    }

    pub fn is_empty(&self) -> bool {
        self.occupied == 0
    }

    pub fn get(&self, vehicle_id: u32) -> Option<&NeighborEntry> {
        self.rows.get(vehicle_id as usize)?.as_ref()
    }

    /// All rows in vehicle-id order.
    pub fn entries(&self) -> impl Iterator<Item = &NeighborEntry> {
        self.rows.iter().flatten()
    }

    fn slot_mut(&mut self, vehicle_id: u32) -> &mut Option<NeighborEntry> {
        let idx = vehicle_id as usize;
        if idx >= self.rows.len() {
            self.rows.resize(idx + 1, None);
        }
        &mut self.rows[idx]
    }

    fn store(&mut self, e: &CisEntry, hop_depth: u8, ut_ns: u64) {
        let rt_ns = (hop_depth == 1).then_some(ut_ns);
        let pos_m = (fixed_to_meters(e.lon), fixed_to_meters(e.lat));
        let slot = self.slot_mut(e.vehicle_id);
        match slot {
            Some(row) => {
                row.hop_depth = hop_depth;
                row.rt_ns = rt_ns;
                row.ut_ns = ut_ns;
                row.pos_m = pos_m;
                row.cbr.clear();
                row.cbr.extend(e.cbr.iter().map(|&b| byte_to_cbr(b)));
            }
            None => {
                *slot = Some(NeighborEntry {
                    vehicle_id: e.vehicle_id,
                    hop_depth,
                    rt_ns,
                    ut_ns,
                    pos_m,
                    cbr: e.cbr.iter().map(|&b| byte_to_cbr(b)).collect(),
                });
                self.occupied += 1;
            }
        }
    }

    /// Folds a received packet into the table.
    ///
    /// The sender's own row always refreshes: hearing a vehicle directly is
    /// by definition the newest information about it, so the row becomes
    /// hop depth 1 with RT = UT = `now_ns`. Rows the sender relayed about
    /// third vehicles apply only when their carried UT is strictly newer
    /// than what is stored, and land at hop depth 2 with no RT — including
    /// when that overwrites (demotes) a row previously heard directly.
    /// Rows about this vehicle itself are ignored.
    pub fn ingest_cis(&mut self, pkt: &CisPacket, now_ns: u64) {
        for e in &pkt.entries {
            if e.vehicle_id == self.own_id {
                continue;
            }
            if e.vehicle_id == pkt.sender_id {
                self.store(e, 1, now_ns);
            } else {
                let ut_ns = e.ut_ms as u64 * NS_PER_MS;
                let stale = self
                    .get(e.vehicle_id)
                    .is_some_and(|row| ut_ns <= row.ut_ns);
                if !stale {
                    self.store(e, 2, ut_ns);
                }
            }
        }
    }

    /// Assembles the packet this vehicle would broadcast: its own row
    /// first, then every direct (hop-1) row. Relayed rows never propagate
    /// further. If more direct rows exist than the wire format can carry,
    /// the freshest (newest UT, ties to the lowest id) are kept; emission
    /// order after the own row is ascending vehicle id either way.
    pub fn build_cis(
        &self,
        now_ns: u64,
        own_pos_m: (f64, f64),
        own_cbr: &[f64],
        flag_hops: u8,
    ) -> CisPacket {
        debug_assert_eq!(own_cbr.len(), self.n_rat);
        let mut one_hop: Vec<&NeighborEntry> =
            self.entries().filter(|r| r.hop_depth == 1).collect();
        if one_hop.len() > MAX_ENTRIES - 1 {
            one_hop.sort_by(|a, b| {
                b.ut_ns
                    .cmp(&a.ut_ns)
                    .then(a.vehicle_id.cmp(&b.vehicle_id))
            });
            one_hop.truncate(MAX_ENTRIES - 1);
            one_hop.sort_by_key(|r| r.vehicle_id);
        }
        let mut entries = Vec::with_capacity(one_hop.len() + 1);
        entries.push(CisEntry {
            vehicle_id: self.own_id,
            ut_ms: (now_ns / NS_PER_MS) as u32,
            lat: meters_to_fixed(own_pos_m.1),
            lon: meters_to_fixed(own_pos_m.0),
            cbr: own_cbr.iter().map(|&c| cbr_to_byte(c)).collect(),
        });
        entries.extend(one_hop.into_iter().map(|r| CisEntry {
            vehicle_id: r.vehicle_id,
            ut_ms: (r.ut_ns / NS_PER_MS) as u32,
            lat: meters_to_fixed(r.pos_m.1),
            lon: meters_to_fixed(r.pos_m.0),
            cbr: r.cbr.iter().map(|&c| cbr_to_byte(c)).collect(),
        }));
        CisPacket {
            sender_id: self.own_id,
            flag_hops,
            entries,
        }
    }

    /// Drops every row whose UT is older than `now - t_neigh`.
    pub fn prune_stale(&mut self, now_ns: u64, t_neigh_ns: u64) {
        let cutoff = now_ns.saturating_sub(t_neigh_ns);
        for slot in &mut self.rows {
            if slot.as_ref().is_some_and(|row| row.ut_ns < cutoff) {
                *slot = None;
                self.occupied -= 1;
            }
        }
    }
}
