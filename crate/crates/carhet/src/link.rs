//! Packet delivery ratio (PDR) curve families and their calibration.
//!
//! A [`PdrCurveFamily`] maps (channel load, transmitter-receiver distance)
//! to the probability that a packet is delivered, for one technology. The
//! families are produced by [`calibrate_pdr`], which runs the packet-level
//! channel machinery in a controlled scene: a probe transmitter, a fence of
//! passive probe receivers at the grid distances, and a line of background
//! broadcasters whose offered load is bisection-tuned until the ambient
//! load measured at the probe receiver hits each target CBR level. The raw
//! grid is then smoothed to be non-increasing in both axes, which is what
//! lets the selection logic treat it as a lookup table.

use crate::radio::{PathlossParams, RatProfile};
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};
use thiserror::Error;

mod calibrate;
pub use calibrate::{calibrate_pdr, CalibrationConfig};

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported pdr family version {0}")]
    Version(String),
    #[error("malformed pdr family row {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("pdr family grid for rat {rat} is not rectangular")]
    NotRectangular { rat: u8 },
    #[error("target cbr {target} is unreachable on rat {rat}: channel saturates at {reached:.3}")]
    UnreachableCbr { rat: u8, target: f64, reached: f64 },
    #[error("calibration grid is empty")]
    EmptyGrid,
}

/// File format marker written/checked by the CSV persistence functions.
pub const FAMILY_FORMAT_VERSION: u32 = 1;

/// PDR over a (CBR level × distance) grid for one technology.
///
/// `pdr` is row-major: `pdr[ci * distances_m.len() + di]` is the delivery
/// probability at `cbr_levels[ci]` and `distances_m[di]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdrCurveFamily {
    pub rat_id: u8,
    pub cbr_levels: Vec<f64>,
    pub distances_m: Vec<f64>,
    pub pdr: Vec<f64>,
    /// Probe transmissions behind each grid cell.
    pub samples: u32,
}

impl PdrCurveFamily {
    fn cell(&self, ci: usize, di: usize) -> f64 {
        self.pdr[ci * self.distances_m.len() + di]
    }

    /// Bilinear interpolation with clamping at the grid edges. An axis
    /// with a single grid point is treated as constant along that axis.
    pub fn lookup(&self, cbr: f64, dist_m: f64) -> f64 {
        let (ci, cf) = locate(&self.cbr_levels, cbr);
        let (di, df) = locate(&self.distances_m, dist_m);
        let ci1 = (ci + 1).min(self.cbr_levels.len() - 1);
        let di1 = (di + 1).min(self.distances_m.len() - 1);
        let c0 = self.cell(ci, di) * (1.0 - df) + self.cell(ci, di1) * df;
        let c1 = self.cell(ci1, di) * (1.0 - df) + self.cell(ci1, di1) * df;
        c0 * (1.0 - cf) + c1 * cf
    }

    /// Enforces PDR non-increasing in both distance and CBR.
    ///
    /// Alternates isotonic (pool-adjacent-violators) projections over rows
    /// and columns, then finishes with running-minimum sweeps so the result
    /// is exactly monotone in both axes rather than monotone in the limit.
    pub fn smooth_isotonic(&mut self) {
        let nd = self.distances_m.len();
        let nc = self.cbr_levels.len();
        if nd == 0 || nc == 0 {
            return;
        }
        let mut row = vec![0.0; nd];
        let mut col = vec![0.0; nc];
        for _ in 0..3 {
            for ci in 0..nc {
                row.copy_from_slice(&self.pdr[ci * nd..(ci + 1) * nd]);
                pava_non_increasing(&mut row);
                self.pdr[ci * nd..(ci + 1) * nd].copy_from_slice(&row);
            }
            for di in 0..nd {
                for ci in 0..nc {
                    col[ci] = self.cell(ci, di);
                }
                pava_non_increasing(&mut col);
                for ci in 0..nc {
                    self.pdr[ci * nd + di] = col[ci];
                }
            }
        }
        // Exactness sweeps: a running minimum along rows keeps values
        // non-increasing in distance, and a subsequent running minimum down
        // the columns preserves that property (the pointwise minimum of
        // non-increasing rows is non-increasing).
        for ci in 0..nc {
            for di in 1..nd {
                let prev = self.cell(ci, di - 1);
                let idx = ci * nd + di;
                if self.pdr[idx] > prev {
                    self.pdr[idx] = prev;
                }
            }
        }
        for di in 0..nd {
            for ci in 1..nc {
                let prev = self.cell(ci - 1, di);
                let idx = ci * nd + di;
                if self.pdr[idx] > prev {
                    self.pdr[idx] = prev;
                }
            }
        }
    }

    /// True if the grid is non-increasing along both axes.
    pub fn is_monotone(&self) -> bool {
        let nd = self.distances_m.len();
        let nc = self.cbr_levels.len();
        for ci in 0..nc {
            for di in 1..nd {
                if self.cell(ci, di) > self.cell(ci, di - 1) {
                    return false;
                }
            }
        }
        for di in 0..nd {
            for ci in 1..nc {
                if self.cell(ci, di) > self.cell(ci - 1, di) {
                    return false;
                }
            }
        }
        true
    }
}

/// PDR for one technology at a load/distance point (bilinear with edge
/// clamping).
pub fn pdr_lookup(family: &PdrCurveFamily, cbr: f64, dist_m: f64) -> f64 {
    family.lookup(cbr, dist_m)
}

/// Finds the interpolation cell for `x` on an ascending `grid`: returns the
/// lower index and the fractional position, clamped to the grid edges.
fn locate(grid: &[f64], x: f64) -> (usize, f64) {
    if grid.len() < 2 {
        return (0, 0.0);
    }
    if x <= grid[0] {
        return (0, 0.0);
    }
    let last = grid.len() - 1;
    if x >= grid[last] {
        return (last - 1, 1.0);
    }
    let mut i = match grid.binary_search_by(|g| g.partial_cmp(&x).unwrap()) {
        Ok(i) => i,
        Err(i) => i - 1,
    };
    if i >= last {
        i = last - 1;
    }
    let frac = (x - grid[i]) / (grid[i + 1] - grid[i]);
    (i, frac)
}

/// In-place L2 isotonic regression to a non-increasing sequence.
fn pava_non_increasing(v: &mut [f64]) {
    // Pool adjacent violators on the negated sequence (non-decreasing).
    let n = v.len();
    if n < 2 {
        return;
    }
    // Blocks of (sum, count), merged while the mean order is violated.
    let mut sums: Vec<f64> = Vec::with_capacity(n);
    let mut counts: Vec<usize> = Vec::with_capacity(n);
    for &x in v.iter() {
        sums.push(x);
        counts.push(1);
        while sums.len() > 1 {
            let k = sums.len();
            let mean_last = sums[k - 1] / counts[k - 1] as f64;
            let mean_prev = sums[k - 2] / counts[k - 2] as f64;
            if mean_last <= mean_prev {
                break;
            }
            let s = sums.pop().unwrap();
            let c = counts.pop().unwrap();
            *sums.last_mut().unwrap() += s;
            *counts.last_mut().unwrap() += c;
        }
    }
    let mut idx = 0;
    for (s, c) in sums.iter().zip(counts.iter()) {
        let mean = s / *c as f64;
        for _ in 0..*c {
            v[idx] = mean;
            idx += 1;
        }
    }
}

/// Writes families as `rat_id,cbr,distance_m,pdr,samples` rows behind a
/// version marker. Values round-trip bit-exactly through [`read_families_csv`].
pub fn write_families_csv<W: Write>(w: &mut W, families: &[PdrCurveFamily]) -> io::Result<()> {
    writeln!(w, "# pdr_family_version={}", FAMILY_FORMAT_VERSION)?;
    writeln!(w, "rat_id,cbr,distance_m,pdr,samples")?;
    for f in families {
        for (ci, cbr) in f.cbr_levels.iter().enumerate() {
            for (di, d) in f.distances_m.iter().enumerate() {
                writeln!(w, "{},{:?},{:?},{:?},{}", f.rat_id, cbr, d, f.cell(ci, di), f.samples)?;
            }
        }
    }
    Ok(())
}

/// Parses the output of [`write_families_csv`] (tolerating extra leading
/// comment lines such as provenance headers).
pub fn read_families_csv<R: BufRead>(r: R) -> Result<Vec<PdrCurveFamily>, FamilyError> {
    let mut families: Vec<PdrCurveFamily> = Vec::new();
    let mut version_seen = false;
    let mut header_seen = false;
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("pdr_family_version=") {
                if v != FAMILY_FORMAT_VERSION.to_string() {
                    return Err(FamilyError::Version(v.to_owned()));
                }
                version_seen = true;
            }
            continue;
        }
        if !header_seen {
            if line != "rat_id,cbr,distance_m,pdr,samples" {
                return Err(FamilyError::Malformed {
                    line: ln + 1,
                    reason: format!("unexpected header {line:?}"),
                });
            }
            header_seen = true;
            continue;
        }
        let mut parts = line.split(',');
        let mut next = |what: &str| {
            parts.next().ok_or_else(|| FamilyError::Malformed {
                line: ln + 1,
                reason: format!("missing {what}"),
            })
        };
        let bad = |what: &str| FamilyError::Malformed {
            line: ln + 1,
            reason: format!("bad {what}"),
        };
        let rat_id: u8 = next("rat_id")?.parse().map_err(|_| bad("rat_id"))?;
        let cbr: f64 = next("cbr")?.parse().map_err(|_| bad("cbr"))?;
        let d: f64 = next("distance_m")?.parse().map_err(|_| bad("distance_m"))?;
        let pdr: f64 = next("pdr")?.parse().map_err(|_| bad("pdr"))?;
        let samples: u32 = next("samples")?.parse().map_err(|_| bad("samples"))?;

        if families.last().map(|f| f.rat_id) != Some(rat_id) {
            families.push(PdrCurveFamily {
                rat_id,
                cbr_levels: Vec::new(),
                distances_m: Vec::new(),
                pdr: Vec::new(),
                samples,
            });
        }
        let f = families.last_mut().unwrap();
        if f.cbr_levels.last() != Some(&cbr) {
            f.cbr_levels.push(cbr);
        }
        if f.cbr_levels.len() == 1 {
            f.distances_m.push(d);
        }
        f.pdr.push(pdr);
        f.samples = samples;
    }
    if !version_seen {
        return Err(FamilyError::Version("missing".to_owned()));
    }
    for f in &families {
        if f.pdr.len() != f.cbr_levels.len() * f.distances_m.len() {
            return Err(FamilyError::NotRectangular { rat: f.rat_id });
        }
    }
    Ok(families)
}

/// Derives per-carrier pathloss defaults for a catalog (helper shared by
/// calibration and the simulator).
pub fn default_pathloss_for(catalog: &[RatProfile]) -> Vec<PathlossParams> {
    catalog
        .iter()
        .map(|p| PathlossParams::winner_b1_los(p.carrier_ghz))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family_2x2() -> PdrCurveFamily {
        PdrCurveFamily {
            rat_id: 1,
            cbr_levels: vec![0.4, 0.5],
            distances_m: vec![100.0, 110.0],
            pdr: vec![0.90, 0.86, 0.80, 0.76],
            samples: 2000,
        }
    }

    #[test]
    fn bilinear_interpolation_hand_value() {
        // Midpoint of a 2x2 cell: the average of the four corners.
        let f = family_2x2();
        let v = pdr_lookup(&f, 0.45, 105.0);
        assert!((v - 0.83).abs() < 1e-12, "got {v}");
        // Exact grid points return the stored values.
        assert_eq!(pdr_lookup(&f, 0.4, 100.0), 0.90);
        assert_eq!(pdr_lookup(&f, 0.5, 110.0), 0.76);
    }

    #[test]
    fn lookup_clamps_at_the_grid_edges() {
        let f = family_2x2();
        assert_eq!(pdr_lookup(&f, 0.0, 100.0), 0.90); // below lowest level
        assert_eq!(pdr_lookup(&f, 0.9, 100.0), 0.80); // above highest level
        assert_eq!(pdr_lookup(&f, 0.4, 0.0), 0.90); // inside shortest distance
        assert_eq!(pdr_lookup(&f, 0.4, 500.0), 0.86); // beyond longest
        // Off both edges at once.
        assert_eq!(pdr_lookup(&f, 2.0, 5000.0), 0.76);
    }

    #[test]
    fn single_point_axes_are_constant() {
        // A 1x1 grid answers every query with its lone cell; a 1xN grid
        // still interpolates along its populated axis.
        let point = PdrCurveFamily {
            rat_id: 0,
            cbr_levels: vec![0.0],
            distances_m: vec![0.0],
            pdr: vec![0.7],
            samples: 1,
        };
        assert_eq!(point.lookup(0.0, 0.0), 0.7);
        assert_eq!(point.lookup(0.9, 400.0), 0.7);
        let line = PdrCurveFamily {
            rat_id: 0,
            cbr_levels: vec![0.2],
            distances_m: vec![0.0, 100.0],
            pdr: vec![1.0, 0.5],
            samples: 1,
        };
        assert_eq!(line.lookup(0.8, 50.0), 0.75);
        assert_eq!(line.lookup(0.0, 1e9), 0.5);
    }

    #[test]
    fn pava_pools_violators_to_block_means() {
        let mut v = vec![1.0, 0.8, 0.85, 0.2];
        pava_non_increasing(&mut v);
        // The 0.8/0.85 violation pools to its mean.
        assert_eq!(v, vec![1.0, 0.825, 0.825, 0.2]);
        let mut flat = vec![0.1, 0.9];
        pava_non_increasing(&mut flat);
        assert_eq!(flat, vec![0.5, 0.5]);
        let mut ok = vec![0.9, 0.5, 0.5, 0.1];
        pava_non_increasing(&mut ok);
        assert_eq!(ok, vec![0.9, 0.5, 0.5, 0.1]);
    }

    #[test]
    fn smoothing_yields_exact_joint_monotonicity() {
        // Noisy grid with violations along both axes.
        let mut f = PdrCurveFamily {
            rat_id: 0,
            cbr_levels: vec![0.0, 0.3, 0.6],
            distances_m: vec![0.0, 10.0, 20.0, 30.0],
            pdr: vec![
                0.95, 0.97, 0.90, 0.91, //
                0.96, 0.85, 0.86, 0.70, //
                0.80, 0.82, 0.60, 0.65,
            ],
            samples: 100,
        };
        assert!(!f.is_monotone());
        f.smooth_isotonic();
        assert!(f.is_monotone());
        // Values stay within [0, 1] and near the raw data.
        for v in &f.pdr {
            assert!((0.0..=1.0).contains(v));
        }
        // Smoothing an already monotone grid is the identity.
        let before = f.pdr.clone();
        f.smooth_isotonic();
        assert_eq!(before, f.pdr);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut f = family_2x2();
        // Values with awkward binary representations survive unchanged.
        f.pdr = vec![0.1 + 0.2, 1.0 / 3.0, 0.7724662799999999, 1e-17];
        let mut other = f.clone();
        other.rat_id = 3;
        let mut buf = Vec::new();
        write_families_csv(&mut buf, &[f.clone(), other.clone()]).unwrap();
        let parsed = read_families_csv(&buf[..]).unwrap();
        assert_eq!(parsed, vec![f, other]);
    }

    #[test]
    fn csv_reader_rejects_foreign_versions_and_garbage() {
        let data = "# pdr_family_version=99\nrat_id,cbr,distance_m,pdr,samples\n";
        assert!(matches!(
            read_families_csv(data.as_bytes()),
            Err(FamilyError::Version(_))
        ));
        let data = "rat_id,cbr,distance_m,pdr,samples\n0,0.0,0.0,1.0,10\n";
        assert!(matches!(
            read_families_csv(data.as_bytes()),
            Err(FamilyError::Version(_))
        ));
        let data = "# pdr_family_version=1\nrat_id,cbr,distance_m,pdr,samples\n0,zzz,0.0,1.0,10\n";
        assert!(matches!(
            read_families_csv(data.as_bytes()),
            Err(FamilyError::Malformed { .. })
        ));
    }
}
