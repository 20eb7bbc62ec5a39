//! Frames on the air and the destruction algebra between them.
//!
//! A frame's fate at each receiver is decided incrementally: when a new
//! frame starts, it exchanges kills with every frame already in flight on
//! the same channel ([`collide`]); when a frame ends, whatever is still
//! alive above the reception threshold is delivered. Because overlap is
//! tested when the later frame *starts*, no bookkeeping ever looks back
//! at frames that already ended.

/// One frame currently on the air.
pub struct InFlight<K> {
    /// Transmitting station.
    pub tx: u32,
    pub end_ns: u64,
    /// Stations that sensed the frame (ascending id) with the shadowing
    /// draw that decided it — reused as the reception power at frame end.
    pub sensed: Vec<(u32, f64)>,
    /// Parallel to `sensed`: not yet destroyed by an overlapping frame.
    pub alive: Vec<bool>,
    /// Caller-defined payload (what to do at delivery time).
    pub kind: K,
}

impl<K> InFlight<K> {
    pub fn new(tx: u32, end_ns: u64, sensed: Vec<(u32, f64)>, kind: K) -> Self {
        InFlight {
            tx,
            end_ns,
            alive: vec![true; sensed.len()],
            sensed,
            kind,
        }
    }
}

/// Index of station `w` in an ascending sensed list.
pub fn sensed_index(sensed: &[(u32, f64)], w: u32) -> Option<usize> {
    sensed.binary_search_by_key(&w, |&(id, _)| id).ok()
}

/// Exchanges destruction between two frames sharing a channel and some
/// airtime. A receiver sensing both keeps a frame only when a capture
/// margin is configured and that frame is at least the margin stronger
/// than the other; and a transmitter can never receive while on the air.
pub fn collide<A, B>(old: &mut InFlight<A>, new: &mut InFlight<B>, margin_db: Option<f64>) {
    let (mut i, mut j) = (0, 0);
    while i < old.sensed.len() && j < new.sensed.len() {
        let (wo, po) = old.sensed[i];
        let (wn, pn) = new.sensed[j];
        match wo.cmp(&wn) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                match margin_db {
                    None => {
                        old.alive[i] = false;
                        new.alive[j] = false;
                    }
                    Some(m) => {
                        if po < pn + m {
                            old.alive[i] = false;
                        }
                        if pn < po + m {
                            new.alive[j] = false;
                        }
                    }
                }
                i += 1;
                j += 1;
            }
        }
    }
    if let Some(i) = sensed_index(&old.sensed, new.tx) {
        old.alive[i] = false;
    }
    if let Some(j) = sensed_index(&new.sensed, old.tx) {
        new.alive[j] = false;
    }
}
