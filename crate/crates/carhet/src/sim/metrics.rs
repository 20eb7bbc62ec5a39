//! Per-run measurement collection and CSV emission.
//!
//! The report keeps window-resolution time series (per-vehicle, per-RAT
//! channel load; per-vehicle throughput and satisfaction), the full RAT
//! change and evaluation logs, and run-level aggregates. Everything is
//! plain data so that two runs with the same seed can be compared for
//! bit-identical equality.

use std::io::{self, Write};

/// One vehicle switching RAT.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RatChange {
    pub vehicle: u32,
    pub t_ns: u64,
    pub from: u8,
    pub to: u8,
}

/// One completed selection evaluation (kept or switched, not postponed).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalRecord {
    pub vehicle: u32,
    pub t_ns: u64,
    /// Bit j set ⇔ RAT j survived pre-selection.
    pub candidates_mask: u32,
    /// Whether any candidate's estimated cost stayed below the clamp.
    pub viable: bool,
    pub chosen: u8,
}

/// One metrics window across the fleet.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowRow {
    pub start_ns: u64,
    /// Channel busy ratio, flattened `[vehicle × n_rat + rat]`.
    pub cbr: Vec<f64>,
    /// RAT each vehicle's transmit chain pointed at when the window closed.
    pub rat_in_use: Vec<u8>,
    /// Mean per-receiver delivered application throughput, over receivers
    /// that had at least one packet addressed while within the sender's
    /// target distance. `None` when no receiver qualified this window.
    pub throughput_bps: Vec<Option<f64>>,
    /// Whether that mean met the vehicle's `P·R` floor.
    pub satisfied: Vec<Option<bool>>,
}

impl WindowRow {
    pub fn cbr_of(&self, vehicle: usize, n_rat: usize, rat: usize) -> f64 {
        self.cbr[vehicle * n_rat + rat]
    }
}

/// Frame-level totals for conservation checks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunCounters {
    pub app_frames_generated: u64,
    pub app_frames_transmitted: u64,
    pub app_frames_dropped: u64,
    /// Frames still queued when the run ended.
    pub app_frames_unsent: u64,
    /// Frames on the air when the run ended (never resolved).
    pub app_frames_in_flight: u64,
    /// (frame, in-range receiver) offers and deliveries.
    pub pair_offers: u64,
    pub pair_deliveries: u64,
    pub cis_frames_sent: u64,
    pub cis_frames_delivered: u64,
}

/// Everything one simulation run produced.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub scheme_label: String,
    pub density_veh_per_km: f64,
    pub n_vehicles: usize,
    pub n_rat: usize,
    pub window_s: f64,
    pub warmup_s: f64,
    pub sim_time_s: f64,
    pub seed: u64,
    /// Which application profile each vehicle drew.
    pub profile_idx: Vec<usize>,
    /// Per-vehicle application rate / reliability / target distance.
    pub rate_bps: Vec<f64>,
    pub reliability: Vec<f64>,
    pub target_distance_m: Vec<f64>,
    pub windows: Vec<WindowRow>,
    pub changes: Vec<RatChange>,
    pub evals: Vec<EvalRecord>,
    /// Run-level (post-warmup) mean per-receiver throughput; `None` when
    /// no receiver was ever within the target distance.
    pub run_throughput_bps: Vec<Option<f64>>,
    pub run_satisfied: Vec<Option<bool>>,
    /// Context-packet payload bits each vehicle successfully received.
    pub cis_bits_received: Vec<u64>,
    pub counters: RunCounters,
}

/// The satisfaction rule's core: the mean, over receivers offered at
/// least one frame, of each receiver's delivered/offered ratio. `None`
/// when nothing was offered to anybody. Scaling the result by the
/// application rate gives the delivered throughput toward the in-range
/// audience, comparable against the vehicle's `P·R` floor.
pub fn mean_delivery_ratio<I>(pairs: I) -> Option<f64>
where
    I: IntoIterator<Item = (u64, u64)>,
{
    let mut receivers = 0u64;
    let mut ratio_sum = 0.0f64;
    for (offered, delivered) in pairs {
        if offered > 0 {
            receivers += 1;
            ratio_sum += delivered as f64 / offered as f64;
        }
    }
    (receivers > 0).then(|| ratio_sum / receivers as f64)
}

/// Quantile with linear interpolation between order statistics
/// (the convention spreadsheet software uses). `sorted` must be
/// ascending and non-empty; `q` in [0, 1].
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

const SUMMARY_QUANTILES: [(f64, &str); 5] = [
    (0.05, "p5"),
    (0.25, "p25"),
    (0.50, "p50"),
    (0.75, "p75"),
    (0.95, "p95"),
];

impl MetricsReport {
    /// Fraction of measurable vehicles (those with at least one in-range
    /// receiver after warmup) that met their `P·R` floor, in percent.
    pub fn percent_satisfied(&self) -> f64 {
        let measured = self.run_satisfied.iter().flatten().count();
        if measured == 0 {
            return 0.0;
        }
        let happy = self
            .run_satisfied
            .iter()
            .filter(|s| **s == Some(true))
            .count();
        100.0 * happy as f64 / measured as f64
    }

    /// Times between consecutive RAT changes of the same vehicle, pooled
    /// across the fleet, counting only changes at or after `after_s`.
    pub fn rat_change_intervals(&self, after_s: f64) -> Vec<f64> {
        let after_ns = (after_s * 1e9).round() as u64;
        let mut last: Vec<Option<u64>> = vec![None; self.n_vehicles];
        let mut out = Vec::new();
        for ch in &self.changes {
            if ch.t_ns < after_ns {
                continue;
            }
            if let Some(prev) = last[ch.vehicle as usize] {
                out.push((ch.t_ns - prev) as f64 * 1e-9);
            }
            last[ch.vehicle as usize] = Some(ch.t_ns);
        }
        out
    }

    /// Mean time between RAT changes after `after_s`, if any vehicle
    /// changed at least twice.
    pub fn mean_tau_s(&self, after_s: f64) -> Option<f64> {
        let iv = self.rat_change_intervals(after_s);
        if iv.is_empty() {
            None
        } else {
            Some(iv.iter().sum::<f64>() / iv.len() as f64)
        }
    }

    /// Post-warmup channel-load samples pooled over vehicles and windows,
    /// one ascending-sorted vector per RAT.
    pub fn cbr_samples_per_rat(&self) -> Vec<Vec<f64>> {
        let warmup_ns = (self.warmup_s * 1e9).round() as u64;
        let mut per_rat = vec![Vec::new(); self.n_rat];
        for w in &self.windows {
            if w.start_ns < warmup_ns {
                continue;
            }
            for v in 0..self.n_vehicles {
                for (r, samples) in per_rat.iter_mut().enumerate() {
                    samples.push(w.cbr_of(v, self.n_rat, r));
                }
            }
        }
        for samples in &mut per_rat {
            samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
        per_rat
    }

    /// Post-warmup median channel load per RAT (`None` before any window
    /// closed).
    pub fn median_cbr_per_rat(&self) -> Option<Vec<f64>> {
        let pooled = self.cbr_samples_per_rat();
        if pooled.iter().any(|s| s.is_empty()) {
            return None;
        }
        Some(pooled.iter().map(|s| quantile(s, 0.5)).collect())
    }

    fn write_provenance<W: Write>(w: &mut W, provenance: &[String]) -> io::Result<()> {
        for line in provenance {
            writeln!(w, "# {line}")?;
        }
        Ok(())
    }

    /// Per-(vehicle, window) rows: the RAT in use, the load it saw on
    /// that RAT, and the delivered-throughput verdict. Empty fields mean
    /// the vehicle had no in-range receiver that window.
    pub fn write_metrics_csv<W: Write>(&self, w: &mut W, provenance: &[String]) -> io::Result<()> {
        Self::write_provenance(w, provenance)?;
        writeln!(w, "vehicle_id,window_start_s,rat_id,cbr,throughput_bps,satisfied")?;
        for row in &self.windows {
            let start_s = row.start_ns as f64 * 1e-9;
            for v in 0..self.n_vehicles {
                let rat = row.rat_in_use[v];
                let thr = row.throughput_bps[v]
                    .map(|t| format!("{t:.3}"))
                    .unwrap_or_default();
                let sat = row.satisfied[v]
                    .map(|s| if s { "1" } else { "0" })
                    .unwrap_or("");
                writeln!(
                    w,
                    "{v},{start_s:.3},{rat},{:.6},{thr},{sat}",
                    row.cbr_of(v, self.n_rat, rat as usize),
                )?;
            }
        }
        Ok(())
    }

    /// One row per RAT change across the whole run (warmup included).
    pub fn write_changes_csv<W: Write>(&self, w: &mut W, provenance: &[String]) -> io::Result<()> {
        Self::write_provenance(w, provenance)?;
        writeln!(w, "vehicle_id,time_s,from_rat,to_rat")?;
        for ch in &self.changes {
            writeln!(
                w,
                "{},{:.6},{},{}",
                ch.vehicle,
                ch.t_ns as f64 * 1e-9,
                ch.from,
                ch.to
            )?;
        }
        Ok(())
    }

    /// Single-row fleet summary: satisfaction, per-RAT load quantiles
    /// (the box-plot five-number summary), and mean change interval.
    pub fn write_summary_csv<W: Write>(&self, w: &mut W, provenance: &[String]) -> io::Result<()> {
        Self::write_provenance(w, provenance)?;
        let mut header = String::from("scheme,density_veh_per_km,percent_satisfied");
        for r in 0..self.n_rat {
            for (_, name) in SUMMARY_QUANTILES {
                header.push_str(&format!(",cbr_rat{r}_{name}"));
            }
        }
        header.push_str(",mean_tau_s");
        writeln!(w, "{header}")?;

        let mut row = format!(
            "{},{},{:.3}",
            self.scheme_label,
            self.density_veh_per_km,
            self.percent_satisfied()
        );
        let pooled = self.cbr_samples_per_rat();
        for samples in &pooled {
            for (q, _) in SUMMARY_QUANTILES {
                if samples.is_empty() {
                    row.push(',');
                } else {
                    row.push_str(&format!(",{:.6}", quantile(samples, q)));
                }
            }
        }
        match self.mean_tau_s(self.warmup_s) {
            Some(tau) => row.push_str(&format!(",{tau:.3}")),
            None => row.push(','),
        }
        writeln!(w, "{row}")
    }
}
