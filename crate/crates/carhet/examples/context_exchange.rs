//! The context-sharing layer, packet by packet: vehicles periodically
//! broadcast context packets carrying their own channel measurements plus
//! every directly-heard neighbor row, so each listener learns a two-hop
//! picture of the load around it without any infrastructure.
//!
//! This example walks three vehicles in a chain (A hears B, B hears C,
//! but A cannot hear C) and shows how A still learns C's measurements at
//! hop depth 2, how the wire codec round-trips, and how stale rows age
//! out of the table.
//!
//! Run with: `cargo run --example context_exchange`

use carhet::protocol::{CisPacket, ContextTable, Geometry};

const N_RAT: usize = 5;
const SECOND: u64 = 1_000_000_000;

fn main() {
    let mut table_a = ContextTable::new(0, N_RAT);
    let mut table_b = ContextTable::new(1, N_RAT);

    // t = 1.0 s: C (id 2, at x = 500 m) broadcasts. Only B hears it.
    let table_c = ContextTable::new(2, N_RAT);
    let cis_c = table_c.build_cis(SECOND, (500.0, 0.0), &[0.05, 0.60, 0.10, 0.20, 0.00], 0);
    table_b.ingest_cis(&cis_c, SECOND);

    // t = 1.2 s: B (id 1, at x = 250 m) broadcasts its own row plus the
    // C row it heard directly. A hears it — and so learns about C.
    let cis_b = table_b.build_cis(
        SECOND + 200_000_000,
        (250.0, 0.0),
        &[0.10, 0.30, 0.10, 0.15, 0.05],
        0,
    );

    // The packet crosses the air as bytes; the codec round-trips exactly.
    let bytes = cis_b.encode_payload();
    let ids: Vec<u32> = cis_b.entries.iter().map(|e| e.vehicle_id).collect();
    let decoded = CisPacket::decode_payload(&bytes, N_RAT, cis_b.sender_id, &ids)
        .expect("self-built packets decode");
    assert_eq!(decoded, cis_b);
    println!(
        "B's context packet: {} entries, {} payload bytes",
        decoded.entries.len(),
        decoded.payload_len()
    );

    table_a.ingest_cis(&decoded, SECOND + 200_000_000);
    println!("\nA's table after hearing B:");
    for row in table_a.entries() {
        println!(
            "  vehicle {} at x={:>4.0} m, hop depth {}, busy ratio on RAT 1 = {:.2}",
            row.vehicle_id, row.pos_m.0, row.hop_depth, row.cbr[1]
        );
    }

    // A can reason about load around neighbors it has never heard: the
    // relayed C row reports RAT 1 at 0.60 busy 500 m away.
    let c_row = table_a.get(2).expect("C arrived via B");
    assert_eq!(c_row.hop_depth, 2);
    let d = Geometry::Planar.distance((0.0, 0.0), c_row.pos_m);
    println!("\nA-to-C distance from relayed position: {d:.0} m");

    // Rows expire once their information is a second old; pruning at
    // t = 2.1 s drops C's 1.0 s row while B's fresher 1.2 s row survives.
    table_a.prune_stale(SECOND + SECOND + 100_000_000, SECOND);
    println!(
        "table after pruning stale rows: {} entry (vehicle {})",
        table_a.len(),
        table_a.entries().next().expect("B remains").vehicle_id
    );
}
