//! The packet-level discrete-event simulation.
//!
//! One seeded run walks a single event queue ordered by `(time, sequence)`
//! — nanosecond timestamps, a monotone sequence number breaking ties — so
//! every run with the same configuration and seed replays bit-identically.
//!
//! The moving parts, per vehicle: an application source emitting
//! fixed-size broadcast frames at its profile rate; one CSMA transmit
//! chain (see [`crate::sim::mac`]); per-RAT busy-time trackers fed by
//! every frame the vehicle senses; and, scheme-dependent, the context
//! table plus selection state driving RAT choices.
//!
//! Collisions resolve incrementally: when a frame starts, it exchanges
//! "kills" with every frame already in the air on the same RAT — a
//! receiver that senses both loses whichever frame is weaker than the
//! capture margin allows (with no margin configured, it loses both), and
//! a vehicle mid-transmission cannot receive anything on that RAT. When a
//! frame ends, its surviving receivers above the reception threshold take
//! delivery. Sensing, busy-time accounting, and reception therefore all
//! derive from one shadowing draw per (frame, receiver) pair, taken in
//! receiver-id order at the frame start.

use crate::link::PdrCurveFamily;
use crate::protocol::{
    secs_to_ns, ContextTable, Geometry, SelectionConfig, SelectionState, TickInputs, TickOutcome,
};
use crate::radio::{derive_psr, McsMode, PathlossParams, PsrCurve, RatProfile};
use crate::sim::airspace::{collide, InFlight};
use crate::sim::channel::BusyTracker;
use crate::sim::events::EventQueue;
use crate::sim::mac::{Frame, MacState, PendingData, TxQueue, BACKOFF_SLOTS, SLOT_NS};
use crate::sim::metrics::{
    mean_delivery_ratio, EvalRecord, MetricsReport, RatChange, RunCounters, WindowRow,
};
use crate::sim::mobility::RoadModel;
use crate::sim::phys::LinkSampler;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// How each vehicle picks the RAT it transmits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Everyone stays on one fixed RAT; no selection traffic at all.
    SingleRat { rat_id: usize },
    /// Re-draw uniformly over all RATs on a fixed update period.
    Random,
    /// The full context-aware pipeline: context packets, pre-selection,
    /// cost estimation, hysteresis.
    Carhet,
}

impl Scheme {
    pub fn label(&self) -> String {
        match self {
            Scheme::SingleRat { rat_id } => format!("single_rat_{rat_id}"),
            Scheme::Random => "random".into(),
            Scheme::Carhet => "carhet".into(),
        }
    }
}

/// One application class: a fraction of the fleet transmitting
/// `rate_bps`, requiring reliability `reliability` within
/// `target_distance_m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AppProfile {
    pub fraction: f64,
    pub rate_bps: f64,
    pub target_distance_m: f64,
    pub reliability: f64,
}

/// Full description of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub road_length_m: f64,
    pub lanes: usize,
    pub density_veh_per_km: f64,
    pub max_speed_kmh: f64,
    pub sim_time_s: f64,
    /// Measurements before this time are discarded from run aggregates.
    pub warmup_s: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub app_profiles: Vec<AppProfile>,
    pub payload_bytes: u32,
    pub mcs: McsMode,
    /// Channel-load measurement period (also the context-packet cadence).
    pub t_meas_s: f64,
    /// Base selection period.
    pub t_update_s: f64,
    /// Context rows older than this are dropped.
    pub t_neigh_s: f64,
    /// Hysteresis: minimum cost improvement to change RAT.
    pub alpha: f64,
    /// `Some(m)`: a receiver keeps a frame overlapped by another it also
    /// senses when the wanted frame is ≥ m dB stronger. `None`: any
    /// sensed overlap destroys both frames at that receiver.
    pub capture_margin_db: Option<f64>,
    pub metrics_window_s: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            road_length_m: 3000.0,
            lanes: 4,
            density_veh_per_km: 40.0,
            max_speed_kmh: 100.0,
            sim_time_s: 250.0,
            warmup_s: 20.0,
            seed: 1,
            scheme: Scheme::Carhet,
            app_profiles: vec![AppProfile {
                fraction: 1.0,
                rate_bps: 500_000.0,
                target_distance_m: 40.0,
                reliability: 0.9,
            }],
            payload_bytes: 1024,
            mcs: McsMode::Highest,
            t_meas_s: 0.2,
            t_update_s: 1.0,
            t_neigh_s: 1.0,
            alpha: 0.05,
            capture_margin_db: None,
            metrics_window_s: 1.0,
        }
    }
}

/// The static inputs a run needs besides its configuration.
pub struct SimAssets {
    pub catalog: Vec<RatProfile>,
    pub pathloss: Vec<PathlossParams>,
    /// Delivery-ratio curve families, indexed like the catalog. Required
    /// by the context-aware scheme, unused by the others.
    pub families: Option<Vec<PdrCurveFamily>>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("the context-aware scheme needs calibrated delivery-ratio curves")]
    MissingFamilies,
}

// ---------------------------------------------------------------------
// Event machinery
// ---------------------------------------------------------------------

#[derive(Debug)]
enum Ev {
    AppGen { v: u32 },
    CisBuild { v: u32 },
    Eval { v: u32 },
    MacTimer { v: u32 },
    TxEnd { v: u32, rat: u8 },
    WindowClose,
}

enum FrameKind {
    /// In-range receiver ids (ascending) the frame was offered to.
    Data { offered: Vec<u32> },
    Cis { pkt: crate::protocol::CisPacket },
}

fn candidates_mask(candidates: &[usize]) -> u32 {
    candidates.iter().fold(0, |m, &j| m | (1 << j))
}

// ---------------------------------------------------------------------
// The simulation itself
// ---------------------------------------------------------------------

struct Sim<'a> {
    cfg: &'a SimConfig,
    n: usize,
    n_rat: usize,
    window_ns: u64,
    warmup_ns: u64,
    t_meas_ns: u64,
    t_update_ns: u64,
    t_neigh_ns: u64,

    road: RoadModel,
    geometry: Geometry,
    sampler: LinkSampler,
    /// Data-frame airtime per RAT, exact seconds and rounded ns.
    airtimes_s: Vec<f64>,
    data_airtime_ns: Vec<u64>,
    psr: Vec<PsrCurve>,
    families: &'a [PdrCurveFamily],
    sel_cfgs: Vec<SelectionConfig>,

    profile_idx: Vec<usize>,
    interval_ns: Vec<u64>,
    current_rat: Vec<u8>,
    mac: Vec<MacState>,
    queues: Vec<TxQueue>,
    busy: Vec<BusyTracker>,
    last_meas_roll_ns: Vec<u64>,
    latest_cbr: Vec<f64>,
    tables: Vec<ContextTable>,
    sel: Vec<SelectionState>,

    in_flight: Vec<Vec<InFlight<FrameKind>>>,

    offered_w: Vec<u32>,
    delivered_w: Vec<u32>,
    offered_run: Vec<u64>,
    delivered_run: Vec<u64>,
    measured_windows: u64,
    cis_bits_received: Vec<u64>,
    windows: Vec<WindowRow>,
    changes: Vec<RatChange>,
    evals: Vec<EvalRecord>,
    counters: RunCounters,

    queue: EventQueue<Ev>,
    rng: ChaCha12Rng,
}

/// Runs one simulation to completion and returns its measurements.
pub fn run_simulation(cfg: &SimConfig, assets: &SimAssets) -> Result<MetricsReport, SimError> {
    let mut sim = Sim::new(cfg, assets)?;
    sim.run();
    Ok(sim.finish())
}

const NO_FAMILIES: &[PdrCurveFamily] = &[];

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig, assets: &'a SimAssets) -> Result<Self, SimError> {
        let n_rat = assets.catalog.len();
        let bad = |msg: String| Err(SimError::BadConfig(msg));
        if n_rat == 0 {
            return bad("the RAT catalog is empty".into());
        }
        if assets.pathloss.len() != n_rat {
            return bad(format!(
                "{} pathloss parameter sets for {} RATs",
                assets.pathloss.len(),
                n_rat
            ));
        }
        if cfg.road_length_m <= 0.0 || cfg.lanes == 0 {
            return bad("road needs positive length and at least one lane".into());
        }
        if cfg.sim_time_s <= 0.0 || cfg.warmup_s < 0.0 || cfg.warmup_s >= cfg.sim_time_s {
            return bad("need 0 ≤ warmup < sim_time".into());
        }
        if cfg.metrics_window_s <= 0.0 || cfg.t_meas_s <= 0.0 || cfg.t_update_s <= 0.0 {
            return bad("periods must be positive".into());
        }
        if cfg.payload_bytes == 0 {
            return bad("payload must be non-empty".into());
        }
        if cfg.app_profiles.is_empty() {
            return bad("need at least one application profile".into());
        }
        let frac_sum: f64 = cfg.app_profiles.iter().map(|p| p.fraction).sum();
        if (frac_sum - 1.0).abs() > 1e-6 || cfg.app_profiles.iter().any(|p| p.fraction < 0.0) {
            return bad(format!("profile fractions sum to {frac_sum}, expected 1"));
        }
        if let Scheme::SingleRat { rat_id } = cfg.scheme {
            if rat_id >= n_rat {
                return bad(format!("fixed RAT {rat_id} outside catalog of {n_rat}"));
            }
        }
        let families: &[PdrCurveFamily] = if cfg.scheme == Scheme::Carhet {
            let fams = assets.families.as_deref().ok_or(SimError::MissingFamilies)?;
            if fams.len() != n_rat {
                return bad(format!("{} curve families for {} RATs", fams.len(), n_rat));
            }
            for (i, f) in fams.iter().enumerate() {
                if f.rat_id as usize != i {
                    return bad(format!("curve family {i} carries rat_id {}", f.rat_id));
                }
            }
            fams
        } else {
            NO_FAMILIES
        };

        let n = (cfg.density_veh_per_km * cfg.road_length_m / 1000.0).round() as usize;
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        let road = RoadModel::build(
            cfg.road_length_m,
            cfg.lanes,
            n,
            cfg.max_speed_kmh / 3.6,
            &mut rng,
        );

        // Profile assignment: exact largest-block counts, then shuffled.
        let mut profile_idx = Vec::with_capacity(n);
        let mut prev = 0usize;
        let mut cum = 0.0;
        for (k, p) in cfg.app_profiles.iter().enumerate() {
            cum += p.fraction;
            let upto = (cum * n as f64).round().min(n as f64) as usize;
            profile_idx.extend(std::iter::repeat(k).take(upto - prev));
            prev = upto;
        }
        profile_idx.extend(std::iter::repeat(cfg.app_profiles.len() - 1).take(n - prev));
        profile_idx.shuffle(&mut rng);

        // Initial RATs: the fixed scheme pins them, the others draw.
        let current_rat: Vec<u8> = match cfg.scheme {
            Scheme::SingleRat { rat_id } => vec![rat_id as u8; n],
            _ => (0..n).map(|_| rng.gen_range(0..n_rat) as u8).collect(),
        };

        let max_dist = (cfg.road_length_m / 2.0).hypot(cfg.lanes as f64 * 3.5) + 10.0;
        let sampler = LinkSampler::new(&assets.catalog, &assets.pathloss, cfg.mcs, max_dist);
        let airtimes_s: Vec<f64> = sampler
            .rats
            .iter()
            .map(|r| r.airtime_s(cfg.payload_bytes))
            .collect();
        let data_airtime_ns: Vec<u64> = airtimes_s
            .iter()
            .map(|&a| (a * 1e9).round() as u64)
            .collect();
        let psr: Vec<PsrCurve> = assets
            .catalog
            .iter()
            .zip(&assets.pathloss)
            .map(|(p, pl)| derive_psr(p, pl, max_dist))
            .collect();
        let sel_cfgs: Vec<SelectionConfig> = cfg
            .app_profiles
            .iter()
            .map(|p| SelectionConfig {
                app_rate_bps: p.rate_bps,
                payload_bytes: cfg.payload_bytes,
                target_distance_m: p.target_distance_m,
                reliability: p.reliability,
                alpha: cfg.alpha,
                t_update_s: cfg.t_update_s,
                t_meas_s: cfg.t_meas_s,
                t_neigh_s: cfg.t_neigh_s,
            })
            .collect();

        let payload_bits = cfg.payload_bytes as u64 * 8;
        let interval_ns: Vec<u64> = profile_idx
            .iter()
            .map(|&k| {
                let rate = cfg.app_profiles[k].rate_bps;
                if rate <= 0.0 {
                    0
                } else {
                    (payload_bits as f64 / rate * 1e9).round() as u64
                }
            })
            .collect();

        let mut sim = Sim {
            cfg,
            n,
            n_rat,
            window_ns: secs_to_ns(cfg.metrics_window_s),
            warmup_ns: secs_to_ns(cfg.warmup_s),
            t_meas_ns: secs_to_ns(cfg.t_meas_s),
            t_update_ns: secs_to_ns(cfg.t_update_s),
            t_neigh_ns: secs_to_ns(cfg.t_neigh_s),
            road,
            geometry: Geometry::Ring {
                length_m: cfg.road_length_m,
            },
            sampler,
            airtimes_s,
            data_airtime_ns,
            psr,
            families,
            sel_cfgs,
            profile_idx,
            interval_ns,
            current_rat,
            mac: vec![MacState::Idle; n],
            queues: (0..n).map(|_| TxQueue::default()).collect(),
            busy: vec![BusyTracker::default(); n * n_rat],
            last_meas_roll_ns: vec![0; n],
            latest_cbr: vec![0.0; n * n_rat],
            tables: (0..n as u32).map(|v| ContextTable::new(v, n_rat)).collect(),
            sel: Vec::new(),
            in_flight: (0..n_rat).map(|_| Vec::new()).collect(),
            offered_w: vec![0; n * n],
            delivered_w: vec![0; n * n],
            offered_run: vec![0; n * n],
            delivered_run: vec![0; n * n],
            measured_windows: 0,
            cis_bits_received: vec![0; n],
            windows: Vec::new(),
            changes: Vec::new(),
            evals: Vec::new(),
            counters: RunCounters::default(),
            queue: EventQueue::new(secs_to_ns(cfg.sim_time_s)),
            rng,
        };

        // Per-vehicle phase draws, vehicle order, app → context → eval.
        for v in 0..n {
            if sim.interval_ns[v] > 0 {
                let phase = sim.rng.gen_range(0..sim.interval_ns[v]);
                sim.schedule(phase, Ev::AppGen { v: v as u32 });
            }
            if cfg.scheme == Scheme::Carhet {
                let phase = sim.rng.gen_range(0..sim.t_meas_ns);
                sim.schedule(phase, Ev::CisBuild { v: v as u32 });
            }
            if matches!(cfg.scheme, Scheme::Random | Scheme::Carhet) {
                let phase = sim.rng.gen_range(0..sim.t_update_ns);
                sim.sel
                    .push(SelectionState::new(sim.current_rat[v] as usize, phase));
                sim.schedule(phase, Ev::Eval { v: v as u32 });
            }
        }
        sim.schedule(sim.window_ns, Ev::WindowClose);
        Ok(sim)
    }

    fn schedule(&mut self, t_ns: u64, ev: Ev) {
        self.queue.push(t_ns, ev);
    }

    fn run(&mut self) {
        while let Some((now, ev)) = self.queue.pop() {
            match ev {
                Ev::AppGen { v } => self.on_app_gen(v as usize, now),
                Ev::CisBuild { v } => self.on_cis_build(v as usize, now),
                Ev::Eval { v } => self.on_eval(v as usize, now),
                Ev::MacTimer { v } => self.on_mac_timer(v as usize, now),
                Ev::TxEnd { v, rat } => self.on_tx_end(v as usize, rat as usize, now),
                Ev::WindowClose => self.on_window_close(now),
            }
        }
    }

    // -- event handlers -------------------------------------------------

    fn on_app_gen(&mut self, v: usize, now: u64) {
        self.counters.app_frames_generated += 1;
        if let Some(_old) = self.queues[v].push_data(PendingData { generated_ns: now }) {
            self.counters.app_frames_dropped += 1;
            // The dropped frame still counts as offered to everyone
            // currently in range — it was application load that never
            // arrived.
            self.account_offers(v, now);
        }
        let next = now + self.interval_ns[v];
        self.schedule(next, Ev::AppGen { v: v as u32 });
        if self.mac[v] == MacState::Idle {
            self.start_chain(v, now);
        }
    }

    /// Counts one offer toward every receiver within the sender's target
    /// distance right now; returns them (ascending id).
    fn account_offers(&mut self, v: usize, now: u64) -> Vec<u32> {
        let d_target = self.cfg.app_profiles[self.profile_idx[v]].target_distance_m;
        let pos = self.road.position_at(v, now);
        let mut offered = Vec::new();
        for w in 0..self.n {
            if w == v {
                continue;
            }
            let d = self.geometry.distance(pos, self.road.position_at(w, now));
            if d <= d_target {
                offered.push(w as u32);
                self.offered_w[v * self.n + w] += 1;
                self.counters.pair_offers += 1;
            }
        }
        offered
    }

    fn on_cis_build(&mut self, v: usize, now: u64) {
        // Close the protocol measurement span on every RAT.
        let elapsed = now - self.last_meas_roll_ns[v];
        for r in 0..self.n_rat {
            self.latest_cbr[v * self.n_rat + r] =
                self.busy[v * self.n_rat + r].roll_measurement(now, elapsed);
        }
        self.last_meas_roll_ns[v] = now;

        self.tables[v].prune_stale(now, self.t_neigh_ns);
        let flag = self.sel[v].take_outgoing_flag();
        let pkt = self.tables[v].build_cis(
            now,
            self.road.position_at(v, now),
            &self.latest_cbr[v * self.n_rat..(v + 1) * self.n_rat],
            flag,
        );
        self.queues[v].push_cis(pkt);
        self.schedule(now + self.t_meas_ns, Ev::CisBuild { v: v as u32 });
        if self.mac[v] == MacState::Idle {
            self.start_chain(v, now);
        }
    }

    fn on_eval(&mut self, v: usize, now: u64) {
        match self.cfg.scheme {
            Scheme::SingleRat { .. } => unreachable!("fixed scheme schedules no evaluations"),
            Scheme::Random => {
                let chosen = self.rng.gen_range(0..self.n_rat) as u8;
                self.evals.push(EvalRecord {
                    vehicle: v as u32,
                    t_ns: now,
                    candidates_mask: (1u32 << self.n_rat) - 1,
                    viable: true,
                    chosen,
                });
                let from = self.current_rat[v];
                if chosen != from {
                    self.changes.push(RatChange {
                        vehicle: v as u32,
                        t_ns: now,
                        from,
                        to: chosen,
                    });
                    self.current_rat[v] = chosen;
                }
                self.schedule(now + self.t_update_ns, Ev::Eval { v: v as u32 });
            }
            Scheme::Carhet => {
                self.tables[v].prune_stale(now, self.t_neigh_ns);
                let inputs = TickInputs {
                    table: &self.tables[v],
                    families: self.families,
                    psr: &self.psr,
                    airtimes_s: &self.airtimes_s,
                    own_cbr: &self.latest_cbr[v * self.n_rat..(v + 1) * self.n_rat],
                    own_pos_m: self.road.position_at(v, now),
                    geometry: self.geometry,
                };
                let outcome = self.sel[v].tick(
                    &self.sel_cfgs[self.profile_idx[v]],
                    &inputs,
                    now,
                    &mut self.rng,
                );
                match outcome {
                    TickOutcome::Postponed => {}
                    TickOutcome::Kept { .. } | TickOutcome::Switched { .. } => {
                        let le = self.sel[v].last_eval().expect("evaluation just completed");
                        self.evals.push(EvalRecord {
                            vehicle: v as u32,
                            t_ns: now,
                            candidates_mask: candidates_mask(&le.candidates),
                            viable: le.viable,
                            chosen: le.chosen as u8,
                        });
                        if let TickOutcome::Switched { from, to } = outcome {
                            self.changes.push(RatChange {
                                vehicle: v as u32,
                                t_ns: now,
                                from: from as u8,
                                to: to as u8,
                            });
                            self.current_rat[v] = to as u8;
                        }
                    }
                }
                self.schedule(self.sel[v].next_eval_ns, Ev::Eval { v: v as u32 });
            }
        }
    }

    fn channel_busy(&self, v: usize, rat: usize, now: u64) -> bool {
        self.busy[v * self.n_rat + rat].busy_until_ns() > now
    }

    /// Kicks the transmit chain from Idle. The channel is re-read at
    /// every step, always on the vehicle's *current* RAT, so a selection
    /// switch mid-chain carries the pending frame to the new channel.
    fn start_chain(&mut self, v: usize, now: u64) {
        debug_assert_eq!(self.mac[v], MacState::Idle);
        if self.queues[v].is_empty() {
            return;
        }
        let rat = self.current_rat[v] as usize;
        if self.channel_busy(v, rat, now) {
            self.mac[v] = MacState::WaitingIdle;
            let wake = self.busy[v * self.n_rat + rat].busy_until_ns();
            self.schedule(wake, Ev::MacTimer { v: v as u32 });
        } else {
            self.begin_backoff(v, now);
        }
    }

    fn begin_backoff(&mut self, v: usize, now: u64) {
        let slots = self.rng.gen_range(0..BACKOFF_SLOTS);
        if slots == 0 {
            self.transmit(v, now);
        } else {
            self.mac[v] = MacState::Backoff;
            self.schedule(now + slots * SLOT_NS, Ev::MacTimer { v: v as u32 });
        }
    }

    fn on_mac_timer(&mut self, v: usize, now: u64) {
        let rat = self.current_rat[v] as usize;
        match self.mac[v] {
            MacState::WaitingIdle | MacState::Backoff => {
                if self.channel_busy(v, rat, now) {
                    // Still (or again) busy: re-defer to the new busy end.
                    self.mac[v] = MacState::WaitingIdle;
                    let wake = self.busy[v * self.n_rat + rat].busy_until_ns();
                    self.schedule(wake, Ev::MacTimer { v: v as u32 });
                } else if self.mac[v] == MacState::WaitingIdle {
                    self.begin_backoff(v, now);
                } else {
                    self.transmit(v, now);
                }
            }
            MacState::Idle | MacState::Transmitting => {
                unreachable!("transmit chain timer fired in state {:?}", self.mac[v])
            }
        }
    }

    fn transmit(&mut self, v: usize, now: u64) {
        let Some(frame) = self.queues[v].pop() else {
            unreachable!("transmit chain ran with an empty queue")
        };
        let rat = self.current_rat[v] as usize;

        // A vehicle must never transmit on a RAT its own evaluation ruled
        // out while a strictly viable candidate existed.
        if self.cfg.scheme == Scheme::Carhet {
            if let Some(le) = self.sel[v].last_eval() {
                assert!(
                    !le.viable || le.candidates.contains(&rat),
                    "vehicle {v} transmitting on RAT {rat} against candidates {:?}",
                    le.candidates
                );
            }
        }

        let airtime_ns = match &frame {
            Frame::Data(_) => self.data_airtime_ns[rat],
            Frame::Cis(pkt) => {
                (self.sampler.rats[rat].airtime_s(pkt.payload_len() as u32) * 1e9).round() as u64
            }
        };
        let end = now + airtime_ns;
        let pos = self.road.position_at(v, now);

        // One shadowing draw per in-range receiver, ascending id; the
        // draw decides sensing (busy time) now and reception at frame end.
        let mut sensed = Vec::new();
        for w in 0..self.n {
            if w == v {
                continue;
            }
            let d = self.geometry.distance(pos, self.road.position_at(w, now));
            if let Some(p) = self.sampler.rats[rat].sample(d, &mut self.rng) {
                if p >= self.sampler.rats[rat].cs_threshold_dbm {
                    sensed.push((w as u32, p));
                    self.busy[w * self.n_rat + rat].sense(now, end);
                }
            }
        }
        self.busy[v * self.n_rat + rat].sense(now, end);

        let kind = match frame {
            Frame::Data(_) => {
                self.counters.app_frames_transmitted += 1;
                FrameKind::Data {
                    offered: self.account_offers(v, now),
                }
            }
            Frame::Cis(pkt) => {
                self.counters.cis_frames_sent += 1;
                FrameKind::Cis { pkt }
            }
        };

        let mut new = InFlight::new(v as u32, end, sensed, kind);

        // Exchange kills with everything already on this channel.
        let margin = self.cfg.capture_margin_db;
        for old in &mut self.in_flight[rat] {
            if old.end_ns <= now {
                continue; // ends exactly now: no shared airtime
            }
            collide(old, &mut new, margin);
        }
        self.in_flight[rat].push(new);

        self.mac[v] = MacState::Transmitting;
        self.schedule(
            end,
            Ev::TxEnd {
                v: v as u32,
                rat: rat as u8,
            },
        );
    }

    fn on_tx_end(&mut self, v: usize, rat: usize, now: u64) {
        let idx = self.in_flight[rat]
            .iter()
            .position(|f| f.tx == v as u32 && f.end_ns == now)
            .expect("transmission ended without an in-flight record");
        let frame = self.in_flight[rat].swap_remove(idx);
        let rx_floor = self.sampler.rats[rat].rx_threshold_dbm;

        match frame.kind {
            FrameKind::Data { offered } => {
                for (i, &(w, p)) in frame.sensed.iter().enumerate() {
                    if frame.alive[i] && p >= rx_floor && offered.binary_search(&w).is_ok() {
                        self.delivered_w[v * self.n + w as usize] += 1;
                        self.counters.pair_deliveries += 1;
                    }
                }
            }
            FrameKind::Cis { pkt } => {
                let bits = (pkt.payload_len() * 8) as u64;
                for (i, &(w, p)) in frame.sensed.iter().enumerate() {
                    if frame.alive[i] && p >= rx_floor {
                        let w = w as usize;
                        self.counters.cis_frames_delivered += 1;
                        self.cis_bits_received[w] += bits;
                        self.tables[w].ingest_cis(&pkt, now);
                        if pkt.flag_hops > 0 {
                            self.sel[w].note_flagged_cis(pkt.flag_hops);
                        }
                    }
                }
            }
        }

        self.mac[v] = MacState::Idle;
        if !self.queues[v].is_empty() {
            self.start_chain(v, now);
        }
    }

    fn on_window_close(&mut self, now: u64) {
        let start_ns = now - self.window_ns;
        let mut cbr = Vec::with_capacity(self.n * self.n_rat);
        for v in 0..self.n {
            for r in 0..self.n_rat {
                cbr.push(self.busy[v * self.n_rat + r].roll_window(now, self.window_ns));
            }
        }
        let mut throughput = Vec::with_capacity(self.n);
        let mut satisfied = Vec::with_capacity(self.n);
        for v in 0..self.n {
            let (thr, sat) = self.verdict(
                v,
                &self.offered_w[v * self.n..(v + 1) * self.n],
                &self.delivered_w[v * self.n..(v + 1) * self.n],
            );
            throughput.push(thr);
            satisfied.push(sat);
        }
        self.windows.push(WindowRow {
            start_ns,
            cbr,
            rat_in_use: self.current_rat.clone(),
            throughput_bps: throughput,
            satisfied,
        });

        if start_ns >= self.warmup_ns {
            self.measured_windows += 1;
            for i in 0..self.n * self.n {
                self.offered_run[i] += self.offered_w[i] as u64;
                self.delivered_run[i] += self.delivered_w[i] as u64;
            }
        }
        self.offered_w.fill(0);
        self.delivered_w.fill(0);
        self.schedule(now + self.window_ns, Ev::WindowClose);
    }

    /// Delivered application throughput toward the in-range audience:
    /// the mean, over receivers offered at least one frame, of each
    /// receiver's delivered/offered ratio, scaled by the application
    /// rate — so a receiver briefly in range counts by what it could
    /// have received while it was reachable. Satisfied when that mean
    /// clears the vehicle's P·R floor.
    fn verdict<O, D>(
        &self,
        v: usize,
        offered: &[O],
        delivered: &[D],
    ) -> (Option<f64>, Option<bool>)
    where
        O: Copy + Into<u64>,
        D: Copy + Into<u64>,
    {
        let pairs = offered
            .iter()
            .zip(delivered)
            .map(|(&o, &d)| (o.into(), d.into()));
        let Some(ratio) = mean_delivery_ratio(pairs) else {
            return (None, None);
        };
        let p = &self.cfg.app_profiles[self.profile_idx[v]];
        let thr = p.rate_bps * ratio;
        (Some(thr), Some(thr >= p.reliability * p.rate_bps))
    }

    fn finish(mut self) -> MetricsReport {
        self.counters.app_frames_unsent =
            self.queues.iter().map(|q| q.data_len() as u64).sum();
        self.counters.app_frames_in_flight = self
            .in_flight
            .iter()
            .flatten()
            .filter(|f| matches!(f.kind, FrameKind::Data { .. }))
            .count() as u64;

        let mut run_throughput = Vec::with_capacity(self.n);
        let mut run_satisfied = Vec::with_capacity(self.n);
        for v in 0..self.n {
            let (thr, sat) = self.verdict(
                v,
                &self.offered_run[v * self.n..(v + 1) * self.n],
                &self.delivered_run[v * self.n..(v + 1) * self.n],
            );
            run_throughput.push(thr);
            run_satisfied.push(sat);
        }

        MetricsReport {
            scheme_label: self.cfg.scheme.label(),
            density_veh_per_km: self.cfg.density_veh_per_km,
            n_vehicles: self.n,
            n_rat: self.n_rat,
            window_s: self.cfg.metrics_window_s,
            warmup_s: self.cfg.warmup_s,
            sim_time_s: self.cfg.sim_time_s,
            seed: self.cfg.seed,
            rate_bps: self
                .profile_idx
                .iter()
                .map(|&k| self.cfg.app_profiles[k].rate_bps)
                .collect(),
            reliability: self
                .profile_idx
                .iter()
                .map(|&k| self.cfg.app_profiles[k].reliability)
                .collect(),
            target_distance_m: self
                .profile_idx
                .iter()
                .map(|&k| self.cfg.app_profiles[k].target_distance_m)
                .collect(),
            profile_idx: self.profile_idx,
            windows: self.windows,
            changes: self.changes,
            evals: self.evals,
            run_throughput_bps: run_throughput,
            run_satisfied,
            cis_bits_received: self.cis_bits_received,
            counters: self.counters,
        }
    }
}
