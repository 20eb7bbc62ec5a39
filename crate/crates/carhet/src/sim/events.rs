//! Deterministic event queue with a hard time horizon.
//!
//! Events pop in strict `(time, insertion-sequence)` order, so two runs
//! that push the same events in the same order replay identically.
//! Pushes beyond the horizon are silently dropped — the run simply never
//! sees them.

use std::collections::BinaryHeap;

pub struct EventQueue<E> {
    heap: BinaryHeap<Entry<E>>,
    seq: u64,
    horizon_ns: u64,
}

struct Entry<E> {
    t_ns: u64,
    seq: u64,
    ev: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.t_ns == other.t_ns && self.seq == other.seq
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    /// Reversed so the max-heap pops the earliest (time, sequence).
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .t_ns
            .cmp(&self.t_ns)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl<E> EventQueue<E> {
    pub fn new(horizon_ns: u64) -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            seq: 0,
            horizon_ns,
        }
    }

    pub fn horizon_ns(&self) -> u64 {
        self.horizon_ns
    }

    /// Schedules `ev` at `t_ns`; events beyond the horizon are dropped.
    pub fn push(&mut self, t_ns: u64, ev: E) {
        if t_ns <= self.horizon_ns {
            self.heap.push(Entry {
                t_ns,
                seq: self.seq,
                ev,
            });
            self.seq += 1;
        }
    }

    pub fn pop(&mut self) -> Option<(u64, E)> {
        self.heap.pop().map(|e| (e.t_ns, e.ev))
    }
}
