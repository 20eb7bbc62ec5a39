//! Per-link signal sampling for the simulator.
//!
//! Mean received power is precomputed per metre for each RAT (the
//! pathloss involves logarithms; the event loop must not), and each
//! (frame, receiver) pair draws one shadowing value that is compared
//! against both the carrier-sense and the reception thresholds, so
//! sensing and decoding always agree with each other and — in
//! distribution — with the analytic sensing-probability curves derived
//! from the same parameters.
//!
//! Pairs beyond a per-RAT cutoff distance are not sampled at all: the
//! cutoff is where even a +5σ shadowing excursion stays below the
//! carrier-sense threshold, so the skipped probability mass is below
//! 3·10⁻⁷ per pair. Skipping is a deterministic function of distance,
//! which keeps the random stream reproducible.

use crate::radio::{mean_pathloss_db, McsMode, PathlossParams, RatProfile};
use rand::Rng;
use rand_distr::StandardNormal;

/// How many shadowing standard deviations above the mean still count as
/// reachable when deciding the sampling cutoff.
const CUTOFF_SIGMAS: f64 = 5.0;

/// Precomputed link model for one RAT.
pub struct RatPhy {
    /// Mean received power at integer metre distances, dBm.
    mean_rx_dbm: Vec<f64>,
    pub sigma_db: f64,
    pub cs_threshold_dbm: f64,
    pub rx_threshold_dbm: f64,
    /// Beyond this distance pairs are skipped entirely.
    pub cutoff_m: f64,
    pub bit_rate_bps: f64,
    pub per_packet_overhead_s: f64,
}

impl RatPhy {
    pub(crate) fn new(
        profile: &RatProfile,
        params: &PathlossParams,
        mcs: McsMode,
        max_distance_m: f64,
    ) -> Self {
        let max_m = max_distance_m.ceil() as usize;
        let mean_rx_dbm: Vec<f64> = (0..=max_m)
            .map(|d| {
                profile.tx_power_dbm
                    - mean_pathloss_db(params, profile.carrier_ghz, d as f64)
            })
            .collect();
        let headroom = CUTOFF_SIGMAS * params.shadow_sigma_db;
        let cutoff_m = mean_rx_dbm
            .iter()
            .rposition(|&p| p + headroom >= profile.cs_threshold_dbm)
            .map_or(0.0, |i| i as f64);
        RatPhy {
            mean_rx_dbm,
            sigma_db: params.shadow_sigma_db,
            cs_threshold_dbm: profile.cs_threshold_dbm,
            rx_threshold_dbm: profile.rx_threshold_dbm,
            cutoff_m,
            bit_rate_bps: profile.rate_bps(mcs),
            per_packet_overhead_s: profile.per_packet_overhead_s,
        }
    }

    /// Mean received power at an arbitrary distance (linear interpolation
    /// on the metre grid; beyond the table it is unreachable).
    pub fn mean_rx_dbm(&self, dist_m: f64) -> f64 {
        if dist_m <= 0.0 {
            return self.mean_rx_dbm[0];
        }
        let idx = dist_m as usize;
        match (self.mean_rx_dbm.get(idx), self.mean_rx_dbm.get(idx + 1)) {
            (Some(&a), Some(&b)) => a + (b - a) * (dist_m - idx as f64),
            (Some(&a), None) => a,
            _ => f64::NEG_INFINITY,
        }
    }

    /// Draws the received power for one (frame, receiver) pair, or `None`
    /// without touching the random stream when the pair sits beyond the
    /// cutoff.
    pub fn sample<R: Rng + ?Sized>(&self, dist_m: f64, rng: &mut R) -> Option<f64> {
        if dist_m > self.cutoff_m {
            return None;
        }
        let shadow: f64 = rng.sample(StandardNormal);
        Some(self.mean_rx_dbm(dist_m) + shadow * self.sigma_db)
    }

    /// Airtime of a frame carrying `payload_bytes`.
    pub fn airtime_s(&self, payload_bytes: u32) -> f64 {
        payload_bytes as f64 * 8.0 / self.bit_rate_bps + self.per_packet_overhead_s
    }
}

/// The full per-RAT link model set, indexed by RAT id.
pub struct LinkSampler {
    pub rats: Vec<RatPhy>,
}

impl LinkSampler {
    pub fn new(
        catalog: &[RatProfile],
        pathloss: &[PathlossParams],
        mcs: McsMode,
        max_distance_m: f64,
    ) -> Self {
        assert_eq!(catalog.len(), pathloss.len());
        LinkSampler {
            rats: catalog
                .iter()
                .zip(pathloss)
                .map(|(profile, params)| RatPhy::new(profile, params, mcs, max_distance_m))
                .collect(),
        }
    }
}
