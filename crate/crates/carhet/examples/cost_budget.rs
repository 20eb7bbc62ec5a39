//! What the selection protocol costs the vehicle that runs it: CPU
//! cycles per decision stage (counted line by line from the pseudo-code,
//! every branch taken, every loop at full trip count) and the on-air
//! overhead of hearing every neighbor's context packet.
//!
//! Run with: `cargo run --example cost_budget`

use carhet::cost::{
    cis_size_bits, cpu_usage, cycles_per_module, overhead_bps, total_cycles_per_second,
    CostInputs,
};

fn main() {
    // Five technologies, 50 one- and two-hop neighbors, context packets
    // five times a second, a 1 GHz vehicle CPU.
    let inputs = CostInputs::default();

    println!("per-stage cycle budget (worst case):");
    for stage in cycles_per_module(&inputs) {
        println!(
            "  {:<22} {:>7} cycles x {:>4.1}/s = {:>9.0} cycles/s",
            stage.label,
            stage.cycles_per_execution,
            stage.executions_per_second,
            stage.cycles_per_second()
        );
    }
    println!(
        "  total: {:.0} cycles/s = {:.4}% of a {:.0} MHz budget",
        total_cycles_per_second(&inputs),
        cpu_usage(&inputs) * 100.0,
        inputs.cpu_hz / 1e6
    );

    let (o_v, share) = overhead_bps(&inputs);
    println!(
        "\ncontext packet: {} bits with {} neighbor rows",
        cis_size_bits(&inputs),
        inputs.n1
    );
    println!(
        "worst-case receive overhead: {:.3} Mbps = {:.2}% of the combined {:.0} MHz of spectrum",
        o_v / 1e6,
        share * 100.0,
        inputs.total_bandwidth_hz / 1e6
    );

    // The sweep the `cost` subcommand writes as CSV, at one CPU speed.
    println!("\nneighbors vs CPU usage at 1 GHz:");
    for n in [0u64, 25, 50, 75, 100] {
        let inp = CostInputs {
            n1: n,
            n2: n,
            ..CostInputs::default()
        };
        println!(
            "  N = {n:>3}: {:>9.0} cycles/s  ({:.4}% CPU), overhead {:>6.3} Mbps",
            total_cycles_per_second(&inp),
            cpu_usage(&inp) * 100.0,
            overhead_bps(&inp).0 / 1e6
        );
    }
}
