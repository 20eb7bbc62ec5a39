//! Per-vehicle, per-RAT channel-load bookkeeping.
//!
//! Every frame a vehicle senses (or transmits itself) contributes a busy
//! interval. Because sensing decisions are made at frame starts, the
//! intervals arrive ordered by start time, and their union can be kept as
//! a single high-water mark: a new span `(start, end]` adds
//! `end − max(start, watermark)` of fresh busy time whenever it extends
//! past the watermark. The ratio of accumulated busy time to elapsed time
//! over a window is the channel busy ratio the protocol consumes.
//!
//! Two accumulators run side by side: one over the protocol measurement
//! period (reset on use) and one over the fixed metrics window.

/// Running busy-time union for one (vehicle, RAT) channel.
#[derive(Clone, Debug, Default)]
pub struct BusyTracker {
    /// Latest busy instant seen so far (ns).
    busy_until_ns: u64,
    /// Busy time credited to the current protocol measurement span.
    meas_busy_ns: u64,
    /// Busy time credited to the current metrics window.
    window_busy_ns: u64,
}

impl BusyTracker {
    /// The latest instant up to which the channel is known busy. The
    /// channel is idle at time `t` iff this is ≤ `t`.
    pub fn busy_until_ns(&self) -> u64 {
        self.busy_until_ns
    }

    /// Records a sensed frame occupying `(start_ns, end_ns]`. Overlap with
    /// previously sensed frames is not double-counted.
    pub fn sense(&mut self, start_ns: u64, end_ns: u64) {
        if end_ns <= self.busy_until_ns {
            return;
        }
        let fresh = end_ns - start_ns.max(self.busy_until_ns);
        self.meas_busy_ns += fresh;
        self.window_busy_ns += fresh;
        self.busy_until_ns = end_ns;
    }

    /// Closes the protocol measurement span at `now_ns` and returns the
    /// busy ratio over the `elapsed_ns` that span covered. Busy time that
    /// extends past `now_ns` (a frame still in the air) is carried into
    /// the next span rather than counted early.
    pub fn roll_measurement(&mut self, now_ns: u64, elapsed_ns: u64) -> f64 {
        let overhang = self.busy_until_ns.saturating_sub(now_ns);
        let busy = self.meas_busy_ns - overhang;
        self.meas_busy_ns = overhang;
        if elapsed_ns == 0 {
            return 0.0;
        }
        busy as f64 / elapsed_ns as f64
    }

    /// Same as [`roll_measurement`](Self::roll_measurement) but for the
    /// metrics-window accumulator.
    pub fn roll_window(&mut self, now_ns: u64, elapsed_ns: u64) -> f64 {
        let overhang = self.busy_until_ns.saturating_sub(now_ns);
        let busy = self.window_busy_ns - overhang;
        self.window_busy_ns = overhang;
        if elapsed_ns == 0 {
            return 0.0;
        }
        busy as f64 / elapsed_ns as f64
    }
}

/// Union busy fraction of explicit intervals clipped to a window — a
/// direct (slower) reference for the watermark bookkeeping.
pub fn busy_fraction(intervals: &[(u64, u64)], window_start_ns: u64, window_end_ns: u64) -> f64 {
    if window_end_ns <= window_start_ns {
        return 0.0;
    }
    let mut clipped: Vec<(u64, u64)> = intervals
        .iter()
        .map(|&(s, e)| (s.max(window_start_ns), e.min(window_end_ns)))
        .filter(|&(s, e)| e > s)
        .collect();
    clipped.sort_unstable();
    let mut busy = 0u64;
    let mut reach = window_start_ns;
    for (s, e) in clipped {
        if e > reach {
            busy += e - s.max(reach);
            reach = e;
        }
    }
    busy as f64 / (window_end_ns - window_start_ns) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn idle_channel_reads_zero() {
        let mut t = BusyTracker::default();
        assert_eq!(t.roll_measurement(1_000_000_000, 1_000_000_000), 0.0);
        assert_eq!(t.roll_window(1_000_000_000, 1_000_000_000), 0.0);
    }

    #[test]
    fn back_to_back_frames_saturate_the_channel() {
        let mut t = BusyTracker::default();
        for k in 0..100u64 {
            t.sense(k * 10_000_000, (k + 1) * 10_000_000);
        }
        assert_eq!(t.roll_measurement(1_000_000_000, 1_000_000_000), 1.0);
    }

    #[test]
    fn single_frame_fraction_is_exact() {
        // One 5 ms frame in a 1 s window → 0.005.
        let mut t = BusyTracker::default();
        t.sense(200_000_000, 205_000_000);
        assert_eq!(t.roll_window(1_000_000_000, 1_000_000_000), 0.005);
    }

    #[test]
    fn overlapping_frames_count_once() {
        let mut t = BusyTracker::default();
        t.sense(100, 300);
        t.sense(150, 250); // fully inside the first
        t.sense(200, 400); // extends it by 100
        t.sense(400, 500); // touches exactly, no gap no overlap
        let ratio = t.roll_measurement(1000, 1000);
        assert_eq!(ratio, 0.4); // union (100, 500] = 400 of 1000
    }

    #[test]
    fn frame_spanning_the_boundary_is_split_across_spans() {
        let mut t = BusyTracker::default();
        // Frame (900, 1200] against a measurement roll at 1000.
        t.sense(900, 1200);
        assert_eq!(t.roll_measurement(1000, 1000), 0.1); // 100 of it
        assert_eq!(t.roll_measurement(2000, 1000), 0.2); // remaining 200
        // The window accumulator saw the same frame once, in full.
        assert_eq!(t.roll_window(2000, 2000), 0.15); // 300 of 2000
    }

    /// The watermark bookkeeping must agree exactly with a brute-force
    /// interval union, across random start-ordered frames and windows —
    /// including frames that straddle roll boundaries.
    #[test]
    fn watermark_matches_brute_force_union() {
        let mut rng = ChaCha12Rng::seed_from_u64(0xCB12);
        for _ in 0..300 {
            let window_ns: u64 = 1_000_000;
            let windows = 4u64;
            let mut starts: Vec<u64> = (0..120)
                .map(|_| rng.gen_range(0..window_ns * windows))
                .collect();
            starts.sort_unstable();
            let frames: Vec<(u64, u64)> = starts
                .iter()
                .map(|&s| (s, s + rng.gen_range(1..80_000)))
                .collect();

            let mut t = BusyTracker::default();
            let mut fed = 0usize;
            for w in 1..=windows {
                let end = w * window_ns;
                while fed < frames.len() && frames[fed].0 < end {
                    t.sense(frames[fed].0, frames[fed].1);
                    fed += 1;
                }
                let got = t.roll_measurement(end, window_ns);
                let want = busy_fraction(&frames, end - window_ns, end);
                assert!(
                    (got - want).abs() < 1e-12,
                    "window {w}: watermark {got} vs union {want}"
                );
            }
        }
    }

    #[test]
    fn measurement_and_window_accumulators_are_independent() {
        let mut t = BusyTracker::default();
        t.sense(0, 100);
        assert_eq!(t.roll_measurement(200, 200), 0.5);
        t.sense(300, 400);
        // Measurement span (200, 400] only saw the second frame…
        assert_eq!(t.roll_measurement(400, 200), 0.5);
        // …while the window span (0, 400] saw both.
        assert_eq!(t.roll_window(400, 400), 0.5);
    }
}
