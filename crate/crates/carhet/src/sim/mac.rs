//! Broadcast CSMA medium access: transmit queue and chain state.
//!
//! Each vehicle runs one transmit chain regardless of how many RATs it
//! carries — it transmits on at most one channel at a time (the one its
//! selection logic currently points at) while receiving on all of them.
//! The chain is a simplified 802.11-style broadcast CSMA: wait for the
//! channel to go idle, hold a random backoff of 0–15 slots, re-check,
//! transmit. The backoff counter does not freeze when the channel turns
//! busy mid-count; the chain simply re-defers at the end of the count.
//! Broadcast frames are never acknowledged or retransmitted.

use crate::protocol::CisPacket;
use std::collections::VecDeque;

/// Backoff slot duration.
pub const SLOT_NS: u64 = 50_000;

/// Backoff is drawn uniformly from `0..BACKOFF_SLOTS` slots.
pub const BACKOFF_SLOTS: u64 = 16;

/// Application frames queued beyond this are dropped oldest-first.
pub const DATA_QUEUE_CAP: usize = 3;

/// One queued application frame.
#[derive(Clone, Debug)]
pub struct PendingData {
    pub generated_ns: u64,
}

/// What the chain pulls next: control traffic rides ahead of data.
#[derive(Debug)]
pub enum Frame {
    Data(PendingData),
    Cis(CisPacket),
}

/// Per-vehicle transmit queue: at most one unsent context packet (a
/// fresher build replaces it) ahead of a bounded data queue.
#[derive(Debug, Default)]
pub struct TxQueue {
    cis: Option<CisPacket>,
    data: VecDeque<PendingData>,
}

impl TxQueue {
    /// Queues an application frame; returns the frame dropped to make
    /// room when the queue was full (the oldest one).
    pub fn push_data(&mut self, frame: PendingData) -> Option<PendingData> {
        let dropped = if self.data.len() == DATA_QUEUE_CAP {
            self.data.pop_front()
        } else {
            None
        };
        self.data.push_back(frame);
        dropped
    }

    /// Queues a context packet, displacing any unsent predecessor.
    /// Returns true when a stale packet was replaced.
    pub fn push_cis(&mut self, pkt: CisPacket) -> bool {
        self.cis.replace(pkt).is_some()
    }

    /// Next frame to put on the air: context first, then oldest data.
    pub fn pop(&mut self) -> Option<Frame> {
        if let Some(pkt) = self.cis.take() {
            return Some(Frame::Cis(pkt));
        }
        self.data.pop_front().map(Frame::Data)
    }

    pub fn is_empty(&self) -> bool {
        self.cis.is_none() && self.data.is_empty()
    }

    /// Frames still waiting (for end-of-run accounting).
    pub fn len(&self) -> usize {
        usize::from(self.cis.is_some()) + self.data.len()
    }

    /// Application frames still waiting, excluding any context packet.
    pub fn data_len(&self) -> usize {
        self.data.len()
    }
}

/// Where the transmit chain currently stands. The timestamps live in the
/// scheduled timer events; the state names which phase an expiry belongs
/// to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MacState {
    /// Nothing queued; no timer armed.
    Idle,
    /// Channel was busy; timer armed at the busy high-water mark.
    WaitingIdle,
    /// Counting a backoff; timer armed at its end.
    Backoff,
    /// On the air; the frame-end event closes the chain step.
    Transmitting,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cis(sender: u32) -> CisPacket {
        CisPacket {
            sender_id: sender,
            flag_hops: 0,
            entries: vec![],
        }
    }

    #[test]
    fn data_queue_drops_oldest_beyond_capacity() {
        let mut q = TxQueue::default();
        for t in 0..3u64 {
            assert!(q.push_data(PendingData { generated_ns: t }).is_none());
        }
        let dropped = q.push_data(PendingData { generated_ns: 3 }).unwrap();
        assert_eq!(dropped.generated_ns, 0);
        assert_eq!(q.len(), 3);
        match q.pop() {
            Some(Frame::Data(d)) => assert_eq!(d.generated_ns, 1),
            other => panic!("expected data frame, got {other:?}"),
        }
    }

    #[test]
    fn fresher_context_packet_replaces_the_unsent_one() {
        let mut q = TxQueue::default();
        assert!(!q.push_cis(cis(7)));
        assert!(q.push_cis(cis(8)));
        assert_eq!(q.len(), 1);
        match q.pop() {
            Some(Frame::Cis(p)) => assert_eq!(p.sender_id, 8),
            other => panic!("expected context frame, got {other:?}"),
        }
        assert!(q.is_empty());
    }

    #[test]
    fn context_rides_ahead_of_queued_data() {
        let mut q = TxQueue::default();
        q.push_data(PendingData { generated_ns: 1 });
        q.push_cis(cis(9));
        assert!(matches!(q.pop(), Some(Frame::Cis(_))));
        assert!(matches!(q.pop(), Some(Frame::Data(_))));
        assert!(q.pop().is_none());
    }
}
