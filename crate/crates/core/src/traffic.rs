//! Per-node FCFS transmit queue with a per-path time slot.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::Packet;
use crate::routing::{PathSet, PathStatus, MAX_PATHS};

#[derive(Debug, Clone, PartialEq)]
pub struct QueuedPacket {
    pub packet: Packet,
    pub arrival_round: u64,
    pub order: u64,
    /// Set when an earlier attempt failed.
    pub retry: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enqueued {
    Queued,
    /// The queue was full; the new packet was dropped.
    Overflow,
    /// The node is dead; the packet was dropped.
    Closed,
}

#[derive(Debug, Clone, Default)]
pub struct TxQueue {
    entries: VecDeque<QueuedPacket>,
    last_tx_round: [Option<u64>; MAX_PATHS],
    cap: Option<usize>,
    next_order: u64,
    closed: bool,
    pub losses: u64,
    /// Rounds in which a waiting packet found no eligible path.
    pub stalls: u64,
}

impl TxQueue {
    pub fn new(cap: Option<usize>) -> Self {
        Self {
            cap,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn iter(&self) -> impl Iterator<Item = &QueuedPacket> {
        self.entries.iter()
    }

    pub fn last_tx_round(&self, path: usize) -> Option<u64> {
        self.last_tx_round.get(path).copied().flatten()
    }

    pub fn enqueue(&mut self, packet: Packet, round: u64) -> Enqueued {
        if self.closed {
            self.losses += 1;
            return Enqueued::Closed;
        }
        if self.cap.is_some_and(|c| self.entries.len() >= c) {
            self.losses += 1;
            return Enqueued::Overflow;
        }
        let order = self.next_order;
        self.next_order += 1;
        self.entries.push_back(QueuedPacket {
            packet,
            arrival_round: round,
            order,
            retry: false,
        });
        Enqueued::Queued
    }

    /// Puts a packet whose transmission failed back at the head of the line.
    /// When that overfills a capped queue the newest entry is dropped.
    pub fn requeue_front(&mut self, mut entry: QueuedPacket) {
        if self.closed {
            self.losses += 1;
            return;
        }
        entry.retry = true;
        self.entries.push_front(entry);
        if self.cap.is_some_and(|c| self.entries.len() > c) {
            self.entries.pop_back();
            self.losses += 1;
        }
    }

    pub fn pop_front(&mut self) -> Option<QueuedPacket> {
        self.entries.pop_front()
    }

    /// Drops everything and refuses further packets. Returns the number of
    /// packets discarded.
    pub fn close(&mut self) -> usize {
        self.closed = true;
        let n = self.entries.len();
        self.entries.clear();
        self.losses += n as u64;
        n
    }

    /// Forgets slot history, for use after the path set was rebuilt.
    pub fn reset_slots(&mut self) {
        self.last_tx_round = [None; MAX_PATHS];
    }

    /// Assigns queued packets to paths for this round, head of line first.
    ///
    /// Each packet takes the first path in failover order that is Usable and
    /// whose last transmission lies at least `slot_gap` rounds back. The path
    /// is then Busy for the rest of the round. Scheduling stops at the first
    /// packet that finds no path.
    pub fn schedule(&mut self, paths: &mut PathSet, round: u64, slot_gap: u64) -> Result<Vec<(QueuedPacket, usize)>> {
        if slot_gap == 0 {
            return Err(Error::InvalidInput("slot_gap must be at least one round".into()));
        }
        let mut out = Vec::new();
        while !self.entries.is_empty() {
            let Some(i) = self.free_path(paths, round, slot_gap) else {
                self.stalls += 1;
                break;
            };
            self.occupy(paths, i, round);
            let entry = self.entries.pop_front().expect("non-empty queue");
            out.push((entry, i));
        }
        Ok(out)
    }

    /// The first path that could carry a packet this round, if any.
    pub fn free_path(&self, paths: &PathSet, round: u64, slot_gap: u64) -> Option<usize> {
        paths.paths().enumerate().position(|(i, p)| {
            p.status == PathStatus::Usable
                && self.last_tx_round[i].is_none_or(|last| round.saturating_sub(last) >= slot_gap)
        })
    }

    /// Marks path `i` as carrying a frame this round.
    pub fn occupy(&mut self, paths: &mut PathSet, i: usize, round: u64) {
        if let Some(p) = paths.get_mut(i) {
            p.status = PathStatus::Busy;
        }
        self.last_tx_round[i] = Some(round);
    }
}
