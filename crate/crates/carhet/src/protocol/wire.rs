//! Context-information-sharing (CIS) packet wire format.
//!
//! Payload layout, big-endian throughout:
//!
//! ```text
//! byte 0:        [2 bits decision-flag hops remaining | 6 bits entry count]
//! per entry:     u32 update timestamp, milliseconds
//!                i32 latitude,  fixed-point 1e-7 degrees
//!                i32 longitude, fixed-point 1e-7 degrees
//!                one u8 per RAT: channel busy ratio, 0..=255 over [0, 1]
//! ```
//!
//! Vehicle identity (the sender id and one id per entry) travels as
//! link-layer framing alongside the payload, the way station ids live in a
//! PDU header; it is not part of the counted payload bytes. The codec is
//! bit-exact: encoding a decoded payload reproduces it byte for byte.

use thiserror::Error;

/// The 6-bit entry-count field caps a packet at 63 rows.
pub const MAX_ENTRIES: usize = 63;

/// Decision flags carry at most this many hops.
pub const MAX_FLAG_HOPS: u8 = 2;

/// Metres per fixed-point position unit (1e-7 degree at the equator-scale
/// metre-per-degree constant used for the planar mapping).
pub const METERS_PER_UNIT: f64 = 111_320.0 * 1e-7;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("payload empty")]
    Empty,
    #[error("payload length {got} does not match {expected} for {entries} entries x {n_rat} RATs")]
    LengthMismatch {
        expected: usize,
        got: usize,
        entries: usize,
        n_rat: usize,
    },
    #[error("flag hops {0} out of range (max {MAX_FLAG_HOPS})")]
    FlagOutOfRange(u8),
    #[error("framing carries {ids} ids for {entries} entries")]
    IdCountMismatch { ids: usize, entries: usize },
}

/// One table row on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CisEntry {
    /// Link-layer framing, not counted in the payload.
    pub vehicle_id: u32,
    pub ut_ms: u32,
    /// Fixed-point 1e-7 degrees; maps to planar y metres.
    pub lat: i32,
    /// Fixed-point 1e-7 degrees; maps to planar x metres.
    pub lon: i32,
    /// One byte per RAT.
    pub cbr: Vec<u8>,
}

/// A decoded CIS packet. `entries[0]` is the sender's own row by
/// construction of the table builder, though the codec does not rely on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CisPacket {
    /// Link-layer framing, not counted in the payload.
    pub sender_id: u32,
    pub flag_hops: u8,
    pub entries: Vec<CisEntry>,
}

impl CisPacket {
    /// Counted payload size in bytes for a given shape.
    pub fn payload_len_bytes(entries: usize, n_rat: usize) -> usize {
        1 + entries * (12 + n_rat)
    }

    /// Counted payload size of this packet in bytes.
    pub fn payload_len(&self) -> usize {
        let n_rat = self.entries.first().map_or(0, |e| e.cbr.len());
        Self::payload_len_bytes(self.entries.len(), n_rat)
    }

    /// Serializes the counted payload.
    pub fn encode_payload(&self) -> Vec<u8> {
        debug_assert!(self.entries.len() <= MAX_ENTRIES);
        debug_assert!(self.flag_hops <= MAX_FLAG_HOPS);
        let mut out = Vec::with_capacity(self.payload_len());
        out.push((self.flag_hops << 6) | (self.entries.len() as u8 & 0x3f));
        for e in &self.entries {
            out.extend_from_slice(&e.ut_ms.to_be_bytes());
            out.extend_from_slice(&e.lat.to_be_bytes());
            out.extend_from_slice(&e.lon.to_be_bytes());
            out.extend_from_slice(&e.cbr);
        }
        out
    }

    /// Parses a counted payload plus its id framing (`sender_id` and one id
    /// per entry, in entry order).
    pub fn decode_payload(
        buf: &[u8],
        n_rat: usize,
        sender_id: u32,
        entry_ids: &[u32],
    ) -> Result<CisPacket, WireError> {
        let &header = buf.first().ok_or(WireError::Empty)?;
        let flag_hops = header >> 6;
        let count = (header & 0x3f) as usize;
        if flag_hops > MAX_FLAG_HOPS {
            return Err(WireError::FlagOutOfRange(flag_hops));
        }
        let expected = Self::payload_len_bytes(count, n_rat);
        if buf.len() != expected {
            return Err(WireError::LengthMismatch {
                expected,
                got: buf.len(),
                entries: count,
                n_rat,
            });
        }
        if entry_ids.len() != count {
            return Err(WireError::IdCountMismatch {
                ids: entry_ids.len(),
                entries: count,
            });
        }
        let mut entries = Vec::with_capacity(count);
        let mut off = 1;
        for &vehicle_id in entry_ids {
            let u32_at = |o: usize| u32::from_be_bytes(buf[o..o + 4].try_into().unwrap());
            entries.push(CisEntry {
                vehicle_id,
                ut_ms: u32_at(off),
                lat: u32_at(off + 4) as i32,
                lon: u32_at(off + 8) as i32,
                cbr: buf[off + 12..off + 12 + n_rat].to_vec(),
            });
            off += 12 + n_rat;
        }
        Ok(CisPacket {
            sender_id,
            flag_hops,
            entries,
        })
    }
}

/// Planar metres to fixed-point position units (round to nearest).
pub fn meters_to_fixed(m: f64) -> i32 {
    (m / METERS_PER_UNIT).round() as i32
}

/// Fixed-point position units back to planar metres.
pub fn fixed_to_meters(v: i32) -> f64 {
    v as f64 * METERS_PER_UNIT
}

/// CBR fraction to its wire byte: scaled to 0..=255, round half up.
pub fn cbr_to_byte(cbr: f64) -> u8 {
    (cbr.clamp(0.0, 1.0) * 255.0 + 0.5).floor().min(255.0) as u8
}

/// Wire byte back to a CBR fraction.
pub fn byte_to_cbr(b: u8) -> f64 {
    b as f64 / 255.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn entry(id: u32, ut_ms: u32, lat: i32, lon: i32, cbr: Vec<u8>) -> CisEntry {
        CisEntry {
            vehicle_id: id,
            ut_ms,
            lat,
            lon,
            cbr,
        }
    }

    #[test]
    fn payload_size_hand_values() {
        // Four rows (own + 3 neighbors) at five RATs:
        // (32 + 32 + 32 + 5·8) bits · 4 = 544 bits = 68 bytes, + 1 header.
        assert_eq!(CisPacket::payload_len_bytes(4, 5), 69);
        assert_eq!((CisPacket::payload_len_bytes(4, 5) - 1) * 8, 544);
        // Four rows at three RATs: 480 bits of entries.
        assert_eq!((CisPacket::payload_len_bytes(4, 3) - 1) * 8, 480);
        // Empty packet is just the header byte.
        assert_eq!(CisPacket::payload_len_bytes(0, 5), 1);
    }

    #[test]
    fn header_packs_flag_and_count() {
        let pkt = CisPacket {
            sender_id: 7,
            flag_hops: 2,
            entries: vec![entry(7, 1000, -5, 9, vec![0, 128, 255])],
        };
        let bytes = pkt.encode_payload();
        assert_eq!(bytes.len(), pkt.payload_len());
        assert_eq!(bytes[0], (2 << 6) | 1);
        // Big-endian field layout.
        assert_eq!(&bytes[1..5], &1000u32.to_be_bytes());
        assert_eq!(&bytes[5..9], &(-5i32).to_be_bytes());
        assert_eq!(&bytes[9..13], &9i32.to_be_bytes());
        assert_eq!(&bytes[13..16], &[0, 128, 255]);
    }

    #[test]
    fn decode_rejects_malformed_payloads() {
        assert_eq!(
            CisPacket::decode_payload(&[], 5, 0, &[]),
            Err(WireError::Empty)
        );
        // Count says 2 entries but only one is present.
        let short = vec![2u8; 1 + 17];
        assert!(matches!(
            CisPacket::decode_payload(&short, 5, 0, &[1, 2]),
            Err(WireError::LengthMismatch { .. })
        ));
        // Entry count inconsistent with the RAT count: 1 entry of 17 bytes
        // read as 3 RATs expects 16.
        let pkt = CisPacket {
            sender_id: 0,
            flag_hops: 0,
            entries: vec![entry(1, 5, 0, 0, vec![1, 2, 3, 4, 5])],
        };
        let bytes = pkt.encode_payload();
        assert!(matches!(
            CisPacket::decode_payload(&bytes, 3, 0, &[1]),
            Err(WireError::LengthMismatch { .. })
        ));
        // Flag value 3 never appears in well-formed traffic.
        let mut bad_flag = bytes.clone();
        bad_flag[0] = (3 << 6) | 1;
        assert_eq!(
            CisPacket::decode_payload(&bad_flag, 5, 0, &[1]),
            Err(WireError::FlagOutOfRange(3))
        );
        // Id framing must cover every entry.
        assert!(matches!(
            CisPacket::decode_payload(&bytes, 5, 0, &[]),
            Err(WireError::IdCountMismatch { .. })
        ));
    }

    #[test]
    fn fixed_point_position_mapping() {
        // One unit is 1.1132 cm; a 3 km road maps well inside i32 range.
        assert_eq!(meters_to_fixed(0.0), 0);
        let v = meters_to_fixed(1500.0);
        assert!((fixed_to_meters(v) - 1500.0).abs() < METERS_PER_UNIT);
        // Quantization is idempotent: re-encoding a decoded value is exact.
        for m in [0.0, 1.0, 2999.97, -250.3, 123.456789] {
            let q = fixed_to_meters(meters_to_fixed(m));
            assert_eq!(meters_to_fixed(q), meters_to_fixed(m));
            assert!((q - m).abs() <= METERS_PER_UNIT / 2.0 + 1e-12);
        }
    }

    #[test]
    fn cbr_byte_mapping_rounds_half_up() {
        assert_eq!(cbr_to_byte(0.0), 0);
        assert_eq!(cbr_to_byte(1.0), 255);
        assert_eq!(cbr_to_byte(2.0), 255); // clamped
        assert_eq!(cbr_to_byte(-0.5), 0); // clamped
        // 0.5 · 255 = 127.5 rounds half up to 128.
        assert_eq!(cbr_to_byte(0.5), 128);
        assert_eq!(byte_to_cbr(128), 128.0 / 255.0);
        // Quantization is idempotent through the round trip.
        for b in 0..=255u8 {
            assert_eq!(cbr_to_byte(byte_to_cbr(b)), b);
        }
    }

    /// Randomized round-trip fuzz over well-formed packets: decode after
    /// encode is the identity, across the full field ranges, for at least
    /// 100 000 packets.
    #[test]
    fn codec_round_trip_fuzz() {
        let mut rng = ChaCha12Rng::seed_from_u64(0xC15);
        for case in 0u32..100_000 {
            let n_rat = rng.gen_range(1..=8usize);
            let count = rng.gen_range(0..=MAX_ENTRIES);
            let entries: Vec<CisEntry> = (0..count)
                .map(|_| CisEntry {
                    vehicle_id: rng.gen(),
                    ut_ms: rng.gen(),
                    lat: rng.gen(),
                    lon: rng.gen(),
                    cbr: (0..n_rat).map(|_| rng.gen()).collect(),
                })
                .collect();
            let pkt = CisPacket {
                sender_id: rng.gen(),
                flag_hops: rng.gen_range(0..=MAX_FLAG_HOPS),
                entries,
            };
            let bytes = pkt.encode_payload();
            assert_eq!(bytes.len(), CisPacket::payload_len_bytes(count, n_rat));
            let ids: Vec<u32> = pkt.entries.iter().map(|e| e.vehicle_id).collect();
            let back = CisPacket::decode_payload(&bytes, n_rat, pkt.sender_id, &ids)
                .unwrap_or_else(|e| panic!("case {case}: {e}"));
            assert_eq!(back, pkt, "case {case}");
            // Bit-exact in the other direction too.
            assert_eq!(back.encode_payload(), bytes, "case {case}");
        }
    }
}
