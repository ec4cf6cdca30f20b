use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::scalar::{cmp_scalar, Scalar};
use crate::stream::{ServerId, VideoId};

/// Event kinds in tie-break order: at equal timestamps earlier variants run
/// first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    SamplingTick,
    FrameDelivery,
    FrameRelease,
    /// Servers drain their queues into the network.
    ServiceTick,
    RequestArrival,
    ReplicationComplete,
    MeasureBucketClose,
}

impl EventKind {
    pub const COUNT: usize = 7;

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    None,
    Session(u32),
    Request(u32),
    Replication {
        source: ServerId,
        target: ServerId,
        video: VideoId,
    },
    Bucket(u32),
}

#[derive(Debug, Clone, Copy)]
pub struct Event<T> {
    pub time: T,
    pub kind: EventKind,
    pub seq: u64,
    pub payload: Payload,
}

impl<T: Scalar> PartialEq for Event<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Event<T> {}

impl<T: Scalar> PartialOrd for Event<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Event<T> {
    /// Reversed so that `BinaryHeap` pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_scalar(other.time, self.time)
            .then(other.kind.cmp(&self.kind))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Min-queue ordered by `(time, kind, insertion sequence)`.
#[derive(Debug)]
pub struct EventQueue<T: Scalar> {
    heap: BinaryHeap<Event<T>>,
    next_seq: u64,
}

impl<T: Scalar> Default for EventQueue<T> {
    fn default() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
        }
    }
}

impl<T: Scalar> EventQueue<T> {
    pub fn push(&mut self, time: T, kind: EventKind, payload: Payload) {
        assert!(!time.is_nan(), "NaN event time");
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event {
            time,
            kind,
            seq,
            payload,
        });
    }

    pub fn pop(&mut self) -> Option<Event<T>> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<T> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_break_by_kind_then_sequence() {
        let mut q = EventQueue::<f64>::default();
        q.push(1.0, EventKind::MeasureBucketClose, Payload::Bucket(0));
        q.push(1.0, EventKind::RequestArrival, Payload::Request(1));
        q.push(1.0, EventKind::RequestArrival, Payload::Request(2));
        q.push(0.5, EventKind::MeasureBucketClose, Payload::Bucket(9));
        q.push(1.0, EventKind::SamplingTick, Payload::None);
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|e| (e.kind, e.payload)).collect();
        assert_eq!(
            order,
            vec![
                (EventKind::MeasureBucketClose, Payload::Bucket(9)),
                (EventKind::SamplingTick, Payload::None),
                (EventKind::RequestArrival, Payload::Request(1)),
                (EventKind::RequestArrival, Payload::Request(2)),
                (EventKind::MeasureBucketClose, Payload::Bucket(0)),
            ]
        );
    }
}
