//! The decision pipeline: RAT pre-selection, per-RAT cost estimation,
//! hysteretic selection, and the randomized evaluation trigger.

use super::table::ContextTable;
use super::Geometry;
use crate::link::PdrCurveFamily;
use crate::radio::PsrCurve;
use rand::Rng;

/// Stage one: keep only RATs that can deliver at least the required
/// fraction `reliability` of packets at the target distance, judging each
/// RAT by its calibrated delivery-ratio surface at the load this vehicle
/// currently measures on that RAT. Returns candidate RAT ids in ascending
/// order; `families` must be indexed by RAT id.
pub fn preselect(
    families: &[PdrCurveFamily],
    measured_cbr: &[f64],
    target_distance_m: f64,
    reliability: f64,
) -> Vec<usize> {
    debug_assert_eq!(families.len(), measured_cbr.len());
    families
        .iter()
        .enumerate()
        .filter(|(j, fam)| fam.lookup(measured_cbr[*j], target_distance_m) >= reliability)
        .map(|(j, _)| j)
        .collect()
}

/// Stage two: what the channel load around the worst-placed neighbor
/// would become if this vehicle transmitted on RAT j.
///
/// For each candidate j the cost is the maximum over every table row i of
///
/// ```text
/// L_ij = LE_ij + n · t_j · PSR_j(d_i)      (clamped to 1)
/// ```
///
/// where `LE_ij` is neighbor i's reported busy ratio on j, `n` is this
/// vehicle's packet rate, `t_j` the packet airtime on j, and `d_i` the
/// distance to neighbor i. Non-candidates are pinned to cost 1.0 so the
/// selection stage can never prefer them; an empty table leaves candidate
/// costs at 0.
pub fn estimate_costs(
    table: &ContextTable,
    candidates: &[usize],
    psr_set: &[PsrCurve],
    n_hz: f64,
    airtimes_s: &[f64],
    own_pos_m: (f64, f64),
    geometry: Geometry,
) -> Vec<f64> {
    debug_assert!(n_hz >= 0.0);
    let mut costs = vec![1.0f64; psr_set.len()];
    for &j in candidates {
        let mut c: f64 = 0.0;
        for row in table.entries() {
            let d = geometry.distance(own_pos_m, row.pos_m);
            let l = (row.cbr[j] + n_hz * airtimes_s[j] * psr_set[j].value_at(d)).min(1.0);
            c = c.max(l);
        }
        costs[j] = c;
    }
    costs
}

fn argmin_lowest_id(costs: &[f64]) -> usize {
    let mut best = 0;
    for (j, &c) in costs.iter().enumerate().skip(1) {
        if c < costs[best] {
            best = j;
        }
    }
    best
}

/// Stage three: pick the RAT with the lowest estimated cost, with
/// hysteresis against the currently used RAT.
///
/// While the current RAT is itself viable (cost below the 1.0 sentinel),
/// it is kept unless the best alternative undercuts it by strictly more
/// than `alpha`. A current RAT sitting at the sentinel is abandoned for
/// the cheapest viable RAT without any margin test — staying on a dead
/// RAT out of hysteresis would be absurd — and if nothing is viable the
/// current RAT is returned unchanged. Cost ties break to the lowest
/// RAT id.
pub fn select_rat(costs: &[f64], current: usize, alpha: f64) -> usize {
    debug_assert!(alpha >= 0.0);
    let best = argmin_lowest_id(costs);
    let current_cost = costs[current];
    if current_cost < 1.0 {
        if current_cost - costs[best] > alpha {
            best
        } else {
            current
        }
    } else if costs[best] < 1.0 {
        best
    } else {
        current
    }
}

/// Delay until the next scheduled evaluation: uniform on
/// `[t_update, t_update·(n_changes+1)]`. With no recent changes the
/// interval is degenerate and the delay is exactly `t_update`; each
/// consecutive change stretches the upper bound, de-synchronizing
/// vehicles that would otherwise oscillate in lockstep.
pub fn next_trigger_delay<R: Rng + ?Sized>(t_update_s: f64, n_changes: u32, rng: &mut R) -> f64 {
    debug_assert!(t_update_s > 0.0);
    if n_changes == 0 {
        return t_update_s;
    }
    rng.gen_range(t_update_s..=t_update_s * (n_changes as f64 + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::testutil::{flat_family, ramp_psr, rect_psr, table_from};
    use crate::protocol::wire::cbr_to_byte;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    // --- preselect -----------------------------------------------------

    #[test]
    fn preselect_filters_by_delivery_at_target_distance() {
        // base 0.9375: at zero load PDR = 0.9375 ≥ 0.875 → in.
        // base 0.5: PDR = 0.5 → out.
        // base 1.375 under 0.5 load: PDR = 0.875 exactly → in (the
        // threshold is ≥, and every value here is dyadic so the equality
        // is exact in floating point).
        let families = vec![
            flat_family(0, 0.9375),
            flat_family(1, 0.5),
            flat_family(2, 1.375),
        ];
        let got = preselect(&families, &[0.0, 0.0, 0.5], 40.0, 0.875);
        assert_eq!(got, vec![0, 2]);
    }

    #[test]
    fn preselect_reacts_to_measured_load() {
        let families = vec![flat_family(0, 0.95)];
        assert_eq!(preselect(&families, &[0.0], 40.0, 0.9), vec![0]);
        // Same RAT under 0.3 load: PDR 0.65 < 0.9 → rejected.
        assert_eq!(preselect(&families, &[0.3], 40.0, 0.9), Vec::<usize>::new());
    }

    // --- estimate_costs ------------------------------------------------

    #[test]
    fn cost_hand_value_single_neighbor() {
        // One neighbor reporting load 0.2 (51/255, exact on the wire
        // lattice), inside full sensing range; own traffic of 61.04
        // packets/s at 1.3653 ms airtime adds 61.04·0.0013653 ≈ 0.08334
        // of generated load, for a cost of 0.28334.
        let table = table_from(&[(1, (50.0, 0.0), vec![0.2])], 1);
        let costs = estimate_costs(
            &table,
            &[0],
            &[rect_psr(200)],
            61.04,
            &[0.0013653],
            (0.0, 0.0),
            Geometry::Planar,
        );
        assert!((costs[0] - (0.2 + 61.04 * 0.0013653)).abs() < 1e-15);
        assert!((costs[0] - 0.28334).abs() < 5e-6);
    }

    /// The stored LE comes back byte-quantized; mirror that in hand math.
    fn byte_to_cbr_exact(c: f64) -> f64 {
        crate::protocol::wire::byte_to_cbr(cbr_to_byte(c))
    }

    #[test]
    fn cost_clamps_at_one_and_pins_non_candidates() {
        let table = table_from(&[(1, (10.0, 0.0), vec![0.95, 0.2])], 2);
        let costs = estimate_costs(
            &table,
            &[0],
            &[rect_psr(100), rect_psr(100)],
            100.0,
            &[0.002, 0.002],
            (0.0, 0.0),
            Geometry::Planar,
        );
        assert_eq!(costs[0], 1.0); // 0.95 + 0.2 clamps
        assert_eq!(costs[1], 1.0); // non-candidate sentinel
    }

    #[test]
    fn cost_on_empty_table_is_zero_for_candidates() {
        let table = ContextTable::new(0, 2);
        let costs = estimate_costs(
            &table,
            &[1],
            &[rect_psr(10), rect_psr(10)],
            50.0,
            &[0.001, 0.001],
            (0.0, 0.0),
            Geometry::Planar,
        );
        assert_eq!(costs, vec![1.0, 0.0]);
    }

    #[test]
    fn cost_takes_the_worst_neighbor_not_the_nearest() {
        // Near neighbor lightly loaded, far neighbor (outside our PSR
        // footprint, so no generated load lands there) heavily loaded.
        let table = table_from(
            &[(1, (10.0, 0.0), vec![0.10]), (2, (500.0, 0.0), vec![0.80])],
            1,
        );
        let costs = estimate_costs(
            &table,
            &[0],
            &[rect_psr(100)],
            10.0,
            &[0.001],
            (0.0, 0.0),
            Geometry::Planar,
        );
        // Near: 0.10 + 10·0.001·1 = 0.11; far: 0.80 + 0 = 0.80.
        let far_le = byte_to_cbr_exact(0.80);
        assert!((costs[0] - far_le).abs() < 1e-12);
    }

    #[test]
    fn cost_distance_uses_ring_wrap_when_asked() {
        // Neighbor at x = 2990 on a 3000 m ring, observer at x = 10:
        // planar distance 2980 (out of range), ring distance 20 (in range).
        let table = table_from(&[(1, (2990.0, 0.0), vec![0.0])], 1);
        let planar = estimate_costs(
            &table,
            &[0],
            &[rect_psr(100)],
            100.0,
            &[0.002],
            (10.0, 0.0),
            Geometry::Planar,
        );
        let ring = estimate_costs(
            &table,
            &[0],
            &[rect_psr(100)],
            100.0,
            &[0.002],
            (10.0, 0.0),
            Geometry::Ring { length_m: 3000.0 },
        );
        assert_eq!(planar[0], 0.0);
        assert!((ring[0] - 0.2).abs() < 1e-12);
    }

    /// Brute-force oracle: loop over every entry × RAT applying the load
    /// formula directly, collect, then reduce — no shared code with the
    /// implementation's running-max loop. Exact equality on randomized
    /// tables of up to 200 entries.
    #[test]
    fn cost_matches_brute_force_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(0x0C0571);
        for _ in 0..300 {
            let n_rat = rng.gen_range(1..=5usize);
            let n_entries = rng.gen_range(0..=200usize);
            let neighbors: Vec<(u32, (f64, f64), Vec<f64>)> = (0..n_entries)
                .map(|i| {
                    (
                        i as u32 + 1,
                        (rng.gen_range(-3000.0..3000.0), rng.gen_range(-10.0..10.0)),
                        (0..n_rat).map(|_| rng.gen_range(0.0..1.0)).collect(),
                    )
                })
                .collect();
            let table = table_from(&neighbors, n_rat);
            let psr: Vec<PsrCurve> = (0..n_rat)
                .map(|j| ramp_psr(100 + 150 * j))
                .collect();
            let airtimes: Vec<f64> = (0..n_rat).map(|_| rng.gen_range(0.0001..0.002)).collect();
            let n_hz = rng.gen_range(0.0..200.0);
            let own = (rng.gen_range(-3000.0..3000.0), 0.0);
            let geometry = if rng.gen_bool(0.5) {
                Geometry::Planar
            } else {
                Geometry::Ring { length_m: 6000.0 }
            };
            let candidates: Vec<usize> = (0..n_rat).filter(|_| rng.gen_bool(0.7)).collect();

            let got = estimate_costs(&table, &candidates, &psr, n_hz, &airtimes, own, geometry);

            for j in 0..n_rat {
                if !candidates.contains(&j) {
                    assert_eq!(got[j], 1.0);
                    continue;
                }
                let loads: Vec<f64> = table
                    .entries()
                    .map(|row| {
                        let d = geometry.distance(own, row.pos_m);
                        (row.cbr[j] + n_hz * airtimes[j] * psr[j].value_at(d)).min(1.0)
                    })
                    .collect();
                let oracle = loads.into_iter().fold(0.0f64, f64::max);
                assert_eq!(got[j], oracle);
            }
        }
    }

    // --- select_rat ----------------------------------------------------

    #[test]
    fn select_keeps_current_inside_the_margin() {
        // Improvement 0.04 does not exceed α = 0.05.
        assert_eq!(select_rat(&[0.46, 0.50], 1, 0.05), 1);
        // Improvement 0.10 does.
        assert_eq!(select_rat(&[0.40, 0.50], 1, 0.05), 0);
        // Exactly α is not "strictly more".
        assert_eq!(select_rat(&[0.45, 0.50], 1, 0.05), 1);
    }

    #[test]
    fn select_keeps_current_on_uniform_costs() {
        assert_eq!(select_rat(&[0.4, 0.4, 0.4], 2, 0.05), 2);
        assert_eq!(select_rat(&[1.0, 1.0, 1.0], 1, 0.0), 1);
    }

    #[test]
    fn select_breaks_ties_to_the_lowest_id() {
        // RATs 0 and 2 tie at the minimum; 0 wins.
        assert_eq!(select_rat(&[0.2, 0.5, 0.2], 1, 0.05), 0);
    }

    #[test]
    fn select_abandons_a_saturated_current_without_margin() {
        // Current cost is the sentinel; the only viable RAT wins even
        // though 1.0 − 0.97 would not clear a margin of 0.05.
        assert_eq!(select_rat(&[0.97, 1.0], 1, 0.05), 0);
        // Nothing viable → stay put.
        assert_eq!(select_rat(&[1.0, 1.0], 1, 0.05), 1);
    }

    #[test]
    fn select_never_leaves_the_viable_set_unless_empty() {
        let mut rng = ChaCha12Rng::seed_from_u64(0x5E1EC7);
        for _ in 0..20_000 {
            let n = rng.gen_range(1..=6usize);
            let costs: Vec<f64> = (0..n)
                .map(|_| if rng.gen_bool(0.3) { 1.0 } else { rng.gen_range(0.0..1.0) })
                .collect();
            let current = rng.gen_range(0..n);
            let alpha = rng.gen_range(0.0..0.3);
            let chosen = select_rat(&costs, current, alpha);
            let viable: Vec<usize> = (0..n).filter(|&j| costs[j] < 1.0).collect();
            if viable.is_empty() {
                assert_eq!(chosen, current);
            } else {
                assert!(viable.contains(&chosen), "costs={costs:?} current={current} α={alpha} chose {chosen}");
            }
        }
    }

    #[test]
    fn select_hysteresis_is_monotone_in_the_margin() {
        // If the current RAT survives a cost vector, raising every
        // alternative by any ε must still keep it.
        let mut rng = ChaCha12Rng::seed_from_u64(0x4157);
        for _ in 0..20_000 {
            let n = rng.gen_range(2..=6usize);
            let costs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let current = rng.gen_range(0..n);
            let alpha = rng.gen_range(0.0..0.3);
            if select_rat(&costs, current, alpha) != current {
                continue;
            }
            let eps = rng.gen_range(1e-9..0.5);
            let bumped: Vec<f64> = costs
                .iter()
                .enumerate()
                .map(|(j, &c)| if j == current { c } else { (c + eps).min(1.0) })
                .collect();
            assert_eq!(select_rat(&bumped, current, alpha), current);
        }
    }

    #[test]
    fn select_is_translation_invariant_below_the_sentinel() {
        // Shifting every cost by the same constant — keeping the whole
        // vector inside [0, 1) — never changes the choice: both the argmin
        // and the improvement margin are differences.
        let mut rng = ChaCha12Rng::seed_from_u64(0x7124);
        for _ in 0..20_000 {
            let n = rng.gen_range(1..=6usize);
            let costs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.5)).collect();
            let current = rng.gen_range(0..n);
            let alpha = rng.gen_range(0.0..0.3);
            let shift = rng.gen_range(0.0..0.49);
            let shifted: Vec<f64> = costs.iter().map(|&c| c + shift).collect();
            assert!(shifted.iter().all(|&c| c < 1.0));
            assert_eq!(
                select_rat(&costs, current, alpha),
                select_rat(&shifted, current, alpha),
                "costs={costs:?} shift={shift}"
            );
        }
    }

    // --- next_trigger_delay --------------------------------------------

    #[test]
    fn trigger_is_exact_with_no_recent_changes() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(next_trigger_delay(1.0, 0, &mut rng), 1.0);
            assert_eq!(next_trigger_delay(0.25, 0, &mut rng), 0.25);
        }
    }

    #[test]
    fn trigger_stays_inside_the_stretched_interval() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let d = next_trigger_delay(1.0, 3, &mut rng);
            assert!((1.0..=4.0).contains(&d));
            let d2 = next_trigger_delay(0.5, 1, &mut rng);
            assert!((0.5..=1.0).contains(&d2));
        }
    }

    #[test]
    fn trigger_mean_matches_the_uniform_midpoint() {
        // Uniform on [1, 4] has mean 2.5; 10⁵ draws pin it to ±0.02.
        let mut rng = ChaCha12Rng::seed_from_u64(0x7121662);
        let n = 100_000;
        let sum: f64 = (0..n).map(|_| next_trigger_delay(1.0, 3, &mut rng)).sum();
        let mean = sum / n as f64;
        assert!((mean - 2.5).abs() < 0.02, "mean = {mean}");
    }
}
