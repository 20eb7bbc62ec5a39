//! Per-vehicle selection engine: owns the evaluation timer, the
//! consecutive-change counter, and the decision-flag plumbing, and runs
//! the pre-select → cost → select pipeline when the timer fires.

use super::select::{estimate_costs, next_trigger_delay, preselect, select_rat};
use super::table::ContextTable;
use super::wire::MAX_FLAG_HOPS;
use super::Geometry;
use crate::link::PdrCurveFamily;
use crate::radio::PsrCurve;
use rand::Rng;

pub fn secs_to_ns(s: f64) -> u64 {
    (s * 1e9).round() as u64
}

/// Application requirement and protocol timing knobs, fixed per vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    /// Offered application rate R in bits per second.
    pub app_rate_bps: f64,
    /// Payload size each packet carries.
    pub payload_bytes: u32,
    /// Distance D at which delivery must still meet `reliability`.
    pub target_distance_m: f64,
    /// Required delivery ratio P at the target distance.
    pub reliability: f64,
    /// Hysteresis margin: a switch needs an improvement above this.
    pub alpha: f64,
    /// Base evaluation period.
    pub t_update_s: f64,
    /// Context-broadcast period, also the postponement length.
    pub t_meas_s: f64,
    /// Neighbor rows older than this are pruned.
    pub t_neigh_s: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            app_rate_bps: 500_000.0,
            payload_bytes: 1024,
            target_distance_m: 40.0,
            reliability: 0.9,
            alpha: 0.05,
            t_update_s: 1.0,
            t_meas_s: 0.2,
            t_neigh_s: 1.0,
        }
    }
}

impl SelectionConfig {
    /// Packets per second the application offers.
    pub fn packet_rate_hz(&self) -> f64 {
        self.app_rate_bps / (8.0 * self.payload_bytes as f64)
    }

    pub fn t_update_ns(&self) -> u64 {
        secs_to_ns(self.t_update_s)
    }

    pub fn t_meas_ns(&self) -> u64 {
        secs_to_ns(self.t_meas_s)
    }

    pub fn t_neigh_ns(&self) -> u64 {
        secs_to_ns(self.t_neigh_s)
    }
}

/// Everything the pipeline reads at evaluation time. All borrowed: the
/// engine owns no curves or tables.
pub struct TickInputs<'a> {
    pub table: &'a ContextTable,
    /// Delivery-ratio surfaces, indexed by RAT id.
    pub families: &'a [PdrCurveFamily],
    /// Sensing-probability curves, indexed by RAT id.
    pub psr: &'a [PsrCurve],
    /// Data-packet airtime per RAT, seconds.
    pub airtimes_s: &'a [f64],
    /// This vehicle's own measured busy ratio per RAT.
    pub own_cbr: &'a [f64],
    pub own_pos_m: (f64, f64),
    pub geometry: Geometry,
}

/// What one evaluation did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickOutcome {
    /// A neighbor's change flag arrived since the last evaluation; the
    /// evaluation moved back by `t_meas_s` to let fresher context land.
    Postponed,
    /// Evaluation ran and kept the current RAT. `feasible` is false when
    /// no RAT survived pre-selection (the keep was forced).
    Kept { feasible: bool },
    /// Evaluation ran and moved to a different RAT.
    Switched { from: usize, to: usize },
}

/// Snapshot of the most recent completed evaluation (postponements do
/// not produce one). Lets callers audit decisions — e.g. assert that a
/// vehicle never transmits on a RAT it had strictly better options than.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LastEval {
    /// RATs that survived pre-selection, ascending.
    pub candidates: Vec<usize>,
    /// Whether at least one candidate's cost stayed below the clamp.
    pub viable: bool,
    /// The RAT the evaluation settled on.
    pub chosen: usize,
}

/// Mutable per-vehicle selection state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionState {
    pub current_rat: usize,
    /// Consecutive evaluations that changed RAT; stretches the trigger.
    pub n_changes: u32,
    /// When the next evaluation is due.
    pub next_eval_ns: u64,
    /// Whether the last timer expiry postponed instead of evaluating.
    pub postponed: bool,
    /// Highest flag hop count received since the last evaluation.
    flag_seen: u8,
    /// Flag hop count to stamp on the next outgoing context packet.
    flag_outgoing: u8,
    /// What the most recent completed evaluation saw and decided.
    last_eval: Option<LastEval>,
}

impl SelectionState {
    pub fn new(initial_rat: usize, first_eval_ns: u64) -> Self {
        SelectionState {
            current_rat: initial_rat,
            n_changes: 0,
            next_eval_ns: first_eval_ns,
            postponed: false,
            flag_seen: 0,
            flag_outgoing: 0,
            last_eval: None,
        }
    }

    /// The most recent completed evaluation, if any.
    pub fn last_eval(&self) -> Option<&LastEval> {
        self.last_eval.as_ref()
    }

    /// Call on every received context packet whose flag carries hops
    /// remaining. A zero flag is inert and may be skipped.
    pub fn note_flagged_cis(&mut self, flag_hops: u8) {
        if flag_hops > 0 {
            self.flag_seen = self.flag_seen.max(flag_hops.min(MAX_FLAG_HOPS));
        }
    }

    /// Flag value for the next outgoing context packet; reading it clears
    /// it, so each armed flag rides out exactly once.
    pub fn take_outgoing_flag(&mut self) -> u8 {
        std::mem::take(&mut self.flag_outgoing)
    }

    /// Runs when the evaluation timer expires.
    ///
    /// A flag received since the last evaluation postpones by `t_meas_s`
    /// (arming a decremented re-broadcast); otherwise the pipeline runs
    /// and the timer re-arms through the randomized trigger — exactly
    /// `t_update_s` ahead after a keep, a stretched uniform draw after a
    /// change. A change also arms an outgoing flag at full hop count.
    pub fn tick<R: Rng + ?Sized>(
        &mut self,
        cfg: &SelectionConfig,
        inputs: &TickInputs<'_>,
        now_ns: u64,
        rng: &mut R,
    ) -> TickOutcome {
        if self.flag_seen > 0 {
            self.flag_outgoing = self.flag_outgoing.max(self.flag_seen - 1);
            self.flag_seen = 0;
            self.postponed = true;
            self.next_eval_ns = now_ns + cfg.t_meas_ns();
            return TickOutcome::Postponed;
        }
        self.postponed = false;
        let candidates = preselect(
            inputs.families,
            inputs.own_cbr,
            cfg.target_distance_m,
            cfg.reliability,
        );
        let costs = estimate_costs(
            inputs.table,
            &candidates,
            inputs.psr,
            cfg.packet_rate_hz(),
            inputs.airtimes_s,
            inputs.own_pos_m,
            inputs.geometry,
        );
        let chosen = select_rat(&costs, self.current_rat, cfg.alpha);
        let feasible = !candidates.is_empty();
        self.last_eval = Some(LastEval {
            viable: candidates.iter().any(|&j| costs[j] < 1.0),
            candidates,
            chosen,
        });
        let outcome = if chosen != self.current_rat {
            let from = self.current_rat;
            self.current_rat = chosen;
            self.n_changes += 1;
            self.flag_outgoing = MAX_FLAG_HOPS;
            TickOutcome::Switched { from, to: chosen }
        } else {
            self.n_changes = 0;
            TickOutcome::Kept { feasible }
        };
        let delay = next_trigger_delay(cfg.t_update_s, self.n_changes, rng);
        self.next_eval_ns = now_ns + secs_to_ns(delay);
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::testutil::{flat_family, rect_psr, table_from};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    const S: u64 = 1_000_000_000;

    struct Fixture {
        families: Vec<crate::link::PdrCurveFamily>,
        psr: Vec<PsrCurve>,
        airtimes: Vec<f64>,
        own_cbr: Vec<f64>,
        table: ContextTable,
    }

    impl Fixture {
        /// Two viable RATs, empty table: evaluation keeps the current RAT.
        fn neutral() -> Self {
            Fixture {
                families: vec![flat_family(0, 0.95), flat_family(1, 0.95)],
                psr: vec![rect_psr(200), rect_psr(200)],
                airtimes: vec![0.001, 0.001],
                own_cbr: vec![0.0, 0.0],
                table: ContextTable::new(0, 2),
            }
        }

        /// One neighbor reporting `loads`; whichever RAT carries the
        /// lighter load wins by a wide margin.
        fn skewed(loads: [f64; 2]) -> Self {
            let mut f = Self::neutral();
            f.table = table_from(&[(1, (10.0, 0.0), loads.to_vec())], 2);
            f
        }

        /// Every RAT fails pre-selection.
        fn infeasible() -> Self {
            let mut f = Self::neutral();
            f.families = vec![flat_family(0, 0.5), flat_family(1, 0.5)];
            f
        }

        fn inputs(&self) -> TickInputs<'_> {
            TickInputs {
                table: &self.table,
                families: &self.families,
                psr: &self.psr,
                airtimes_s: &self.airtimes,
                own_cbr: &self.own_cbr,
                own_pos_m: (0.0, 0.0),
                geometry: Geometry::Planar,
            }
        }
    }

    #[test]
    fn keep_resets_counter_and_rearms_exactly_one_period() {
        let f = Fixture::neutral();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut st = SelectionState::new(0, S);
        st.n_changes = 4; // as if changes had piled up
        let out = st.tick(&SelectionConfig::default(), &f.inputs(), S, &mut rng);
        assert_eq!(out, TickOutcome::Kept { feasible: true });
        assert_eq!(st.n_changes, 0);
        assert_eq!(st.current_rat, 0);
        assert_eq!(st.next_eval_ns, 2 * S); // exactly one period later
        assert!(!st.postponed);
        assert_eq!(st.take_outgoing_flag(), 0);
    }

    #[test]
    fn switch_increments_counter_and_arms_the_flag() {
        // Current RAT 0 is heavily loaded at a neighbor; RAT 1 is clear.
        let f = Fixture::skewed([0.9, 0.0]);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let cfg = SelectionConfig::default();
        let mut st = SelectionState::new(0, S);
        let out = st.tick(&cfg, &f.inputs(), S, &mut rng);
        assert_eq!(out, TickOutcome::Switched { from: 0, to: 1 });
        assert_eq!(st.current_rat, 1);
        assert_eq!(st.n_changes, 1);
        assert_eq!(st.take_outgoing_flag(), 2);
        // Reading the flag cleared it.
        assert_eq!(st.take_outgoing_flag(), 0);
        // First change: delay drawn from [T, 2T].
        assert!(st.next_eval_ns >= 2 * S && st.next_eval_ns <= 3 * S);
    }

    #[test]
    fn consecutive_changes_stretch_the_trigger_window() {
        let cfg = SelectionConfig::default();
        let ping = Fixture::skewed([0.9, 0.0]);
        let pong = Fixture::skewed([0.0, 0.9]);
        // Drive two consecutive switches, then sample the next delay
        // distribution from clones of that state: the window keeps
        // stretching with each change, well past what a single change
        // could draw.
        let mut base = SelectionState::new(0, S);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        assert!(matches!(
            base.tick(&cfg, &ping.inputs(), S, &mut rng),
            TickOutcome::Switched { .. }
        ));
        assert!(matches!(
            base.tick(&cfg, &pong.inputs(), 3 * S, &mut rng),
            TickOutcome::Switched { .. }
        ));
        assert_eq!(base.n_changes, 2);
        let mut seen_beyond_3t = false;
        for seed in 0..500 {
            let mut st = base.clone();
            let mut r = ChaCha12Rng::seed_from_u64(seed);
            st.tick(&cfg, &ping.inputs(), 10 * S, &mut r);
            // That tick switched a third time, so the draw saw three
            // consecutive changes and must land in [T, 4T].
            let delay = st.next_eval_ns - 10 * S;
            assert!(delay >= S && delay <= 4 * S);
            if delay > 3 * S {
                seen_beyond_3t = true;
            }
        }
        assert!(
            seen_beyond_3t,
            "no draw used the stretched part of the window"
        );
    }

    #[test]
    fn flag_postpones_exactly_one_measurement_period() {
        let f = Fixture::skewed([0.9, 0.0]); // would switch if it ran
        let cfg = SelectionConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut st = SelectionState::new(0, S);
        st.note_flagged_cis(2);
        let out = st.tick(&cfg, &f.inputs(), S, &mut rng);
        assert_eq!(out, TickOutcome::Postponed);
        assert!(st.postponed);
        assert_eq!(st.current_rat, 0); // untouched
        assert_eq!(st.n_changes, 0);
        assert_eq!(st.next_eval_ns, S + 200_000_000); // + t_meas exactly
        // Re-broadcast armed one hop shorter.
        assert_eq!(st.take_outgoing_flag(), 1);
        // The postponement consumed the flag: next tick evaluates.
        let out = st.tick(&cfg, &f.inputs(), st.next_eval_ns, &mut rng);
        assert_eq!(out, TickOutcome::Switched { from: 0, to: 1 });
    }

    #[test]
    fn repeated_flags_arm_a_single_postponement() {
        let f = Fixture::neutral();
        let cfg = SelectionConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut st = SelectionState::new(0, S);
        st.note_flagged_cis(1);
        st.note_flagged_cis(2);
        st.note_flagged_cis(1);
        assert_eq!(st.tick(&cfg, &f.inputs(), S, &mut rng), TickOutcome::Postponed);
        // Highest hop count seen wins the re-broadcast decrement.
        assert_eq!(st.take_outgoing_flag(), 1);
        assert!(matches!(
            st.tick(&cfg, &f.inputs(), st.next_eval_ns, &mut rng),
            TickOutcome::Kept { .. }
        ));
    }

    /// The flag dies after two hops: originator → postpone+relay →
    /// postpone+nothing → no effect.
    #[test]
    fn flag_chain_stops_after_two_hops() {
        let cfg = SelectionConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(6);

        // Vehicle A switches and arms hops = 2.
        let fa = Fixture::skewed([0.9, 0.0]);
        let mut a = SelectionState::new(0, S);
        assert!(matches!(a.tick(&cfg, &fa.inputs(), S, &mut rng), TickOutcome::Switched { .. }));
        let hop1 = a.take_outgoing_flag();
        assert_eq!(hop1, 2);

        // B hears A's flagged packet: postpones, relays hops = 1.
        let fb = Fixture::neutral();
        let mut b = SelectionState::new(0, 2 * S);
        b.note_flagged_cis(hop1);
        assert_eq!(b.tick(&cfg, &fb.inputs(), 2 * S, &mut rng), TickOutcome::Postponed);
        let hop2 = b.take_outgoing_flag();
        assert_eq!(hop2, 1);

        // C hears B's relay: postpones, but the relay value is spent.
        let mut c = SelectionState::new(0, 3 * S);
        c.note_flagged_cis(hop2);
        assert_eq!(c.tick(&cfg, &fb.inputs(), 3 * S, &mut rng), TickOutcome::Postponed);
        let hop3 = c.take_outgoing_flag();
        assert_eq!(hop3, 0);

        // D receives a zero flag: nothing postpones, evaluation runs.
        let mut d = SelectionState::new(0, 4 * S);
        d.note_flagged_cis(hop3);
        assert!(matches!(
            d.tick(&cfg, &fb.inputs(), 4 * S, &mut rng),
            TickOutcome::Kept { .. }
        ));
    }

    #[test]
    fn infeasible_evaluation_keeps_current_and_reports_it() {
        let f = Fixture::infeasible();
        let cfg = SelectionConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut st = SelectionState::new(1, S);
        let out = st.tick(&cfg, &f.inputs(), S, &mut rng);
        assert_eq!(out, TickOutcome::Kept { feasible: false });
        assert_eq!(st.current_rat, 1);
        assert_eq!(st.next_eval_ns, 2 * S);
        assert_eq!(st.take_outgoing_flag(), 0);
    }

    #[test]
    fn eval_timer_strictly_increases_across_outcomes() {
        let cfg = SelectionConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let fixtures = [
            Fixture::neutral(),
            Fixture::skewed([0.9, 0.0]),
            Fixture::skewed([0.0, 0.9]),
            Fixture::infeasible(),
        ];
        let mut st = SelectionState::new(0, S);
        let mut prev = st.next_eval_ns;
        for i in 0..200 {
            let now = st.next_eval_ns;
            if i % 7 == 3 {
                st.note_flagged_cis(2);
            }
            st.tick(&cfg, &fixtures[i % 4].inputs(), now, &mut rng);
            assert!(st.next_eval_ns > prev);
            prev = st.next_eval_ns;
        }
    }

    #[test]
    fn packet_rate_follows_rate_and_payload() {
        let cfg = SelectionConfig {
            app_rate_bps: 500_000.0,
            payload_bytes: 1024,
            ..SelectionConfig::default()
        };
        assert!((cfg.packet_rate_hz() - 61.03515625).abs() < 1e-12);
        assert_eq!(cfg.t_update_ns(), 1_000_000_000);
        assert_eq!(cfg.t_meas_ns(), 200_000_000);
    }
}
