//! Highway mobility: a multi-lane ring with constant per-vehicle speeds.
//!
//! The road is a straight segment whose ends wrap around, so density
//! stays uniform for the whole run and positions are a closed-form
//! function of time — no mobility events enter the scheduler. Lanes
//! alternate direction in pairs (two forward, two backward for the
//! default four-lane setup) with a fixed lateral spacing.

use rand::Rng;

/// Lateral spacing between adjacent lane centres, metres.
pub const LANE_WIDTH_M: f64 = 3.5;

/// One vehicle's motion state; position is derived, never stored.
#[derive(Clone, Debug)]
pub struct Vehicle {
    /// Longitudinal position at t = 0, metres along the ring.
    pub start_m: f64,
    /// Signed speed, m/s (negative for the opposing direction).
    pub speed_mps: f64,
    /// Constant lateral offset, metres.
    pub lane_y_m: f64,
}

/// The whole road: ring length plus every vehicle on it.
#[derive(Clone, Debug)]
pub struct RoadModel {
    pub length_m: f64,
    pub vehicles: Vec<Vehicle>,
}

impl RoadModel {
    /// Lays out `total` vehicles: uniform random longitudinal placement,
    /// speeds drawn uniformly from 80–100 % of `max_speed_mps`, lanes
    /// filled in contiguous blocks (remainders go to the lowest lanes)
    /// with directions alternating in pairs (+, +, −, −, …). Draws
    /// exactly `total` position values followed by `total` speed values
    /// from `rng`.
    pub fn build<R: Rng + ?Sized>(
        length_m: f64,
        lanes: usize,
        total: usize,
        max_speed_mps: f64,
        rng: &mut R,
    ) -> Self {
        let mut vehicles = Vec::with_capacity(total);
        for lane in 0..lanes {
            let count = total / lanes + usize::from(lane < total % lanes);
            let forward = (lane / 2) % 2 == 0;
            for _ in 0..count {
                vehicles.push(Vehicle {
                    start_m: rng.gen_range(0.0..length_m),
                    speed_mps: if forward { 1.0 } else { -1.0 },
                    lane_y_m: lane as f64 * LANE_WIDTH_M,
                });
            }
        }
        for v in &mut vehicles {
            let speed = max_speed_mps * rng.gen_range(0.8..1.0);
            v.speed_mps *= speed;
        }
        RoadModel { length_m, vehicles }
    }

    /// Position of vehicle `id` at `t_ns`: (x along ring, lane offset).
    pub fn position_at(&self, id: usize, t_ns: u64) -> (f64, f64) {
        let v = &self.vehicles[id];
        let t = t_ns as f64 * 1e-9;
        let x = (v.start_m + v.speed_mps * t).rem_euclid(self.length_m);
        (x, v.lane_y_m)
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Geometry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn road(seed: u64) -> RoadModel {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        RoadModel::build(3000.0, 4, 120, 100.0 / 3.6, &mut rng)
    }

    #[test]
    fn layout_is_reproducible_and_shaped_right() {
        let a = road(42);
        let b = road(42);
        assert_eq!(a.len(), 120);
        for id in 0..a.len() {
            assert_eq!(a.position_at(id, 777_000_000), b.position_at(id, 777_000_000));
        }
        // Lane offsets: 30 vehicles at each of 0, 3.5, 7, 10.5 m.
        for (id, v) in a.vehicles.iter().enumerate() {
            let lane = id / 30;
            assert_eq!(v.lane_y_m, lane as f64 * LANE_WIDTH_M);
            // Directions pair up: lanes 0–1 forward, 2–3 backward.
            if lane < 2 {
                assert!(v.speed_mps > 0.0);
            } else {
                assert!(v.speed_mps < 0.0);
            }
            let s = v.speed_mps.abs();
            assert!(s >= 0.8 * 100.0 / 3.6 && s < 100.0 / 3.6);
        }
    }

    #[test]
    fn uneven_totals_spread_across_the_low_lanes() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let r = RoadModel::build(3000.0, 4, 10, 20.0, &mut rng);
        let per_lane: Vec<usize> = (0..4)
            .map(|l| {
                r.vehicles
                    .iter()
                    .filter(|v| v.lane_y_m == l as f64 * LANE_WIDTH_M)
                    .count()
            })
            .collect();
        assert_eq!(per_lane, vec![3, 3, 2, 2]);
    }

    #[test]
    fn positions_wrap_and_advance() {
        let r = road(7);
        for id in [0, 45, 119] {
            let (x0, y0) = r.position_at(id, 0);
            assert_eq!(x0, r.vehicles[id].start_m);
            let (x1, y1) = r.position_at(id, 10_000_000_000);
            assert_eq!(y0, y1);
            assert!((0.0..3000.0).contains(&x1));
            let expect = (x0 + r.vehicles[id].speed_mps * 10.0).rem_euclid(3000.0);
            assert!((x1 - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn ring_distance_between_vehicles_never_exceeds_half_the_ring() {
        let r = road(3);
        let geo = Geometry::Ring { length_m: 3000.0 };
        for t in [0u64, 60_000_000_000, 250_000_000_000] {
            for (a, b) in [(0usize, 119usize), (10, 80), (31, 32)] {
                let d = geo.distance(r.position_at(a, t), r.position_at(b, t));
                let dy = r.vehicles[a].lane_y_m - r.vehicles[b].lane_y_m;
                assert!(d * d <= 1500.0f64 * 1500.0 + dy * dy + 1e-6);
            }
        }
    }
}
