//! Analytic channel-load and capacity bounds.
//!
//! The channel busy ratio (CBR) a vehicle senses is modelled as the sum of
//! every transmitter's duty cycle (packet rate × airtime) weighted by the
//! probability that its packets are sensed at the observer's position. For
//! a uniform vehicle density along a straight road this collapses to a
//! closed form over the PSR curve, which inverts into the maximum density a
//! technology can support before the sensed load exceeds a target CBR. The
//! heterogeneous bound is the sum of the per-technology maxima, since each
//! technology occupies its own channel.

use crate::radio::{packet_airtime, McsMode, PsrCurve, RatProfile};

/// Offered-load assumption for capacity bounds: each vehicle transmits
/// `n_pkt_hz` packets per second of `t_pkt_s` airtime each, and the channel
/// is considered full at `cbr_max` sensed load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficAssumption {
    pub n_pkt_hz: f64,
    pub t_pkt_s: f64,
    pub cbr_max: f64,
}

impl TrafficAssumption {
    /// Assumption for an application rate of `app_rate_bps` sent as
    /// `payload_bytes` packets on `profile` at `mcs`, against the
    /// conventional 0.6 busy-ratio ceiling.
    ///
    /// The duty cycle reduces to app_rate / link_rate: the payload size
    /// cancels between packet rate and airtime (zero per-packet overhead).
    pub fn from_app_rate(
        app_rate_bps: f64,
        payload_bytes: u32,
        profile: &RatProfile,
        mcs: McsMode,
    ) -> Self {
        TrafficAssumption {
            n_pkt_hz: app_rate_bps / (payload_bytes as f64 * 8.0),
            t_pkt_s: packet_airtime(profile, payload_bytes, mcs),
            cbr_max: 0.6,
        }
    }

    /// Duty cycle n·t: the fraction of time one vehicle occupies its channel.
    pub fn duty_cycle(&self) -> f64 {
        self.n_pkt_hz * self.t_pkt_s
    }
}

/// Sensed load at position `x` from an explicit list of transmitters
/// `(position_m, n_pkt_hz, t_pkt_s)`, clamped to [0, 1].
pub fn cbr_at_point(transmitters: &[(f64, f64, f64)], x: f64, psr: &PsrCurve) -> f64 {
    let sum: f64 = transmitters
        .iter()
        .map(|&(pos, n, t)| n * t * psr.value_at((pos - x).abs()))
        .sum();
    sum.min(1.0)
}

/// Two-sided PSR footprint in metres: 2·Σ_{i≥1} PSR(i·1 m), the effective
/// length of road whose transmitters a sensor hears at full weight.
fn psr_footprint_m(psr: &PsrCurve) -> f64 {
    let last = psr.min_distance_m + (psr.values.len().saturating_sub(1)) as f64 * psr.step_m;
    let mut one_sided = 0.0;
    let mut d = 1.0;
    while d <= last {
        one_sided += psr.value_at(d);
        d += 1.0;
    }
    2.0 * one_sided
}

/// Sensed load under a uniform density of identical transmitters along an
/// infinite straight road, clamped to [0, 1].
pub fn cbr_uniform(t: &TrafficAssumption, density_veh_per_km: f64, psr: &PsrCurve) -> f64 {
    (t.duty_cycle() * (density_veh_per_km / 1000.0) * psr_footprint_m(psr)).min(1.0)
}

/// Largest uniform density (veh/km) a single technology supports before the
/// sensed load crosses `cbr_max`.
pub fn max_density_single(t: &TrafficAssumption, psr: &PsrCurve) -> f64 {
    t.cbr_max / (t.duty_cycle() * psr_footprint_m(psr)) * 1000.0
}

/// Largest uniform density (veh/km) supported when every vehicle picks one
/// of several technologies on disjoint channels: the sum of the single-
/// technology maxima.
pub fn max_density_hetero(items: &[(TrafficAssumption, &PsrCurve)]) -> f64 {
    items.iter().map(|(t, psr)| max_density_single(t, psr)).sum()
}
