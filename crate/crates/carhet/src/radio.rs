//! Radio-layer primitives: the RAT catalog, packet airtime, the piecewise
//! log-distance pathloss model, and packet sensing ratio (PSR) curves.
//!
//! A [`RatProfile`] captures the PHY-level facts about one radio access
//! technology (carrier, bandwidth, power, thresholds, data rates). The
//! default five-technology catalog models two DSRC channels, two WiFi bands
//! and one TVWS channel on a shared highway scenario.
//!
//! Propagation is a two-slope log-distance model with log-normal shadowing
//! (WINNER+ B1 LOS urban-microcell parameterization by default). The PSR of
//! a link is the probability that a transmission is sensed above a receiver
//! threshold, i.e. the Gaussian tail of the shadowing margin; [`derive_psr`]
//! tabulates it per metre.

use serde::{Deserialize, Serialize};
use std::io::{self, Write};

/// Modulation/coding selector for a profile's data rate.
///
/// `Highest` is the top rate the technology is configured for; `QpskHalf`
/// is the robust fallback (QPSK, rate 1/2), scaled with channel bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McsMode {
    Highest,
    QpskHalf,
}

/// Static description of one radio access technology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatProfile {
    /// Stable small integer id; doubles as the index into per-RAT vectors.
    pub id: u8,
    pub name: String,
    pub carrier_ghz: f64,
    pub bandwidth_mhz: f64,
    pub tx_power_dbm: f64,
    pub noise_floor_dbm: f64,
    /// Minimum received power for a frame to be decodable.
    pub rx_threshold_dbm: f64,
    /// Carrier-sense threshold; defaults to `rx_threshold_dbm`.
    pub cs_threshold_dbm: f64,
    /// Data rate at the highest configured MCS, in Mbps.
    pub data_rate_mbps: f64,
    /// Data rate at QPSK 1/2, in Mbps (6 Mbps per 10 MHz of bandwidth).
    pub qpsk_half_rate_mbps: f64,
    /// Fixed per-packet overhead added to serialization time, in seconds.
    #[serde(default)]
    pub per_packet_overhead_s: f64,
}

impl RatProfile {
    /// Data rate in bit/s for the requested MCS mode.
    pub fn rate_bps(&self, mcs: McsMode) -> f64 {
        match mcs {
            McsMode::Highest => self.data_rate_mbps * 1e6,
            McsMode::QpskHalf => self.qpsk_half_rate_mbps * 1e6,
        }
    }
}

fn profile(
    id: u8,
    name: &str,
    carrier_ghz: f64,
    bandwidth_mhz: f64,
    tx_power_dbm: f64,
    noise_floor_dbm: f64,
    data_rate_mbps: f64,
) -> RatProfile {
    RatProfile {
        id,
        name: name.to_owned(),
        carrier_ghz,
        bandwidth_mhz,
        tx_power_dbm,
        noise_floor_dbm,
        // 3 dB above the noise floor for every technology in the catalog.
        rx_threshold_dbm: noise_floor_dbm + 3.0,
        cs_threshold_dbm: noise_floor_dbm + 3.0,
        data_rate_mbps,
        // QPSK 1/2 carries 6 Mbps in a 10 MHz channel; scale with bandwidth.
        qpsk_half_rate_mbps: 6.0 * bandwidth_mhz / 10.0,
        per_packet_overhead_s: 0.0,
    }
}

/// The default five-RAT catalog: two DSRC channels, two WiFi bands, TVWS.
///
/// Pure function: every call returns the same profiles, in id order.
pub fn default_catalog() -> Vec<RatProfile> {
    vec![
        profile(0, "DSRC-0.7", 0.7, 10.0, 10.0, -97.0, 18.0),
        profile(1, "DSRC-5.9", 5.9, 10.0, 23.0, -97.0, 27.0),
        profile(2, "WiFi-2.4", 2.4, 20.0, 20.0, -94.0, 54.0),
        profile(3, "WiFi-5.6", 5.6, 20.0, 17.0, -94.0, 54.0),
        profile(4, "TVWS", 0.46, 6.0, 20.0, -99.0, 7.2),
    ]
}

/// Airtime of a `payload_bytes` packet on `profile` at the given MCS:
/// serialization time plus the profile's fixed per-packet overhead. Seconds.
pub fn packet_airtime(profile: &RatProfile, payload_bytes: u32, mcs: McsMode) -> f64 {
    (payload_bytes as f64 * 8.0) / profile.rate_bps(mcs) + profile.per_packet_overhead_s
}

/// Two-slope log-distance pathloss with log-normal shadowing.
///
/// Mean loss at distance d (metres, clamped to `min_distance_m`):
///
/// ```text
/// d <= bp:  A·log10(d) + B + C·log10(f / f_ref)
/// d  > bp:  PL(bp) + A_after·log10(d / bp)
/// ```
///
/// which is continuous at the breakpoint by construction. Shadowing is a
/// zero-mean Gaussian in dB with `shadow_sigma_db`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathlossParams {
    /// Slope below the breakpoint, dB per decade of distance.
    pub slope_a: f64,
    /// Intercept at 1 m and the reference frequency, dB.
    pub intercept_b: f64,
    /// Frequency scaling, dB per decade of f/f_ref.
    pub freq_scale_c: f64,
    pub ref_freq_ghz: f64,
    /// Two-ray breakpoint distance, metres.
    pub breakpoint_m: f64,
    /// Slope beyond the breakpoint, dB per decade of distance.
    pub slope_a_after: f64,
    /// Log-normal shadowing standard deviation, dB. Zero disables shadowing.
    pub shadow_sigma_db: f64,
    /// Distances below this clamp to it (near-field guard), metres.
    pub min_distance_m: f64,
}

impl PathlossParams {
    /// WINNER+ B1 LOS (urban microcell) parameterization for a given carrier.
    ///
    /// The breakpoint is the two-ray distance 4·h'²·f/c with an effective
    /// antenna height h' of 1.0 m (roof-mounted vehicle antennas over a 1 m
    /// effective environment height). Because B1 LOS is continuous at its
    /// own breakpoint, carrying the pre-breakpoint frequency term through
    /// PL(bp) reproduces the published post-breakpoint curve exactly.
    pub fn winner_b1_los(carrier_ghz: f64) -> Self {
        const EFFECTIVE_ANTENNA_HEIGHT_M: f64 = 1.0;
        const SPEED_OF_LIGHT: f64 = 299_792_458.0;
        let h = EFFECTIVE_ANTENNA_HEIGHT_M;
        PathlossParams {
            slope_a: 22.7,
            intercept_b: 41.0,
            freq_scale_c: 20.0,
            ref_freq_ghz: 5.0,
            breakpoint_m: 4.0 * h * h * carrier_ghz * 1e9 / SPEED_OF_LIGHT,
            slope_a_after: 40.0,
            shadow_sigma_db: 3.0,
            min_distance_m: 1.0,
        }
    }
}

/// Mean (median) pathloss in dB at `dist_m` for a carrier at `carrier_ghz`.
pub fn mean_pathloss_db(p: &PathlossParams, carrier_ghz: f64, dist_m: f64) -> f64 {
    let d = dist_m.max(p.min_distance_m);
    let freq_term = p.freq_scale_c * (carrier_ghz / p.ref_freq_ghz).log10();
    if d <= p.breakpoint_m {
        p.slope_a * d.log10() + p.intercept_b + freq_term
    } else {
        let at_bp = p.slope_a * p.breakpoint_m.log10() + p.intercept_b + freq_term;
        at_bp + p.slope_a_after * (d / p.breakpoint_m).log10()
    }
}

/// Standard normal CDF Φ(x).
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Probability that a transmission on `profile` is sensed (received above
/// the carrier-sense threshold) at distance `dist_m`: the Gaussian tail of
/// the shadowing margin. With zero sigma this is a sharp indicator.
pub fn sensing_probability(profile: &RatProfile, p: &PathlossParams, dist_m: f64) -> f64 {
    let margin = profile.tx_power_dbm - mean_pathloss_db(p, profile.carrier_ghz, dist_m)
        - profile.cs_threshold_dbm;
    if p.shadow_sigma_db == 0.0 {
        if margin >= 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        normal_cdf(margin / p.shadow_sigma_db)
    }
}

/// PSR tabulated on a uniform distance grid.
///
/// `values[0]` is the PSR at `min_distance_m`; queries between grid points
/// interpolate linearly, queries beyond the last point return 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrCurve {
    pub min_distance_m: f64,
    pub step_m: f64,
    pub values: Vec<f64>,
}

impl PsrCurve {
    /// PSR at an arbitrary distance (linear interpolation on the grid).
    pub fn value_at(&self, dist_m: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let pos = (dist_m - self.min_distance_m) / self.step_m;
        if pos <= 0.0 {
            return self.values[0];
        }
        let i = pos.floor() as usize;
        if i + 1 >= self.values.len() {
            // At the last grid point exactly, return it; beyond, zero.
            return if i < self.values.len() && pos == i as f64 {
                self.values[i]
            } else {
                0.0
            };
        }
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Writes `distance_m,psr` rows (no header comments; callers prepend
    /// provenance lines).
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "distance_m,psr")?;
        for (i, v) in self.values.iter().enumerate() {
            let d = self.min_distance_m + i as f64 * self.step_m;
            writeln!(w, "{:?},{:?}", d, v)?;
        }
        Ok(())
    }
}

/// Tabulates the PSR of `profile` under `params` at 1 m steps from the
/// near-field clamp out to `max_distance_m`.
pub fn derive_psr(profile: &RatProfile, params: &PathlossParams, max_distance_m: f64) -> PsrCurve {
    let step = 1.0;
    let n = ((max_distance_m - params.min_distance_m) / step).floor() as usize + 1;
    let values = (0..n)
        .map(|i| sensing_probability(profile, params, params.min_distance_m + i as f64 * step))
        .collect();
    PsrCurve {
        min_distance_m: params.min_distance_m,
        step_m: step,
        values,
    }
}

/// Derives the PSR curve of every profile in a catalog (shared pathloss
/// coefficients, per-carrier breakpoint).
pub fn derive_psr_catalog(catalog: &[RatProfile], max_distance_m: f64) -> Vec<PsrCurve> {
    catalog
        .iter()
        .map(|p| derive_psr(p, &PathlossParams::winner_b1_los(p.carrier_ghz), max_distance_m))
        .collect()
}
