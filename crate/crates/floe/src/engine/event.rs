//! Global engine event log: a totally ordered record of deliveries,
//! invocations and behavior-reported marks, used by tests to assert
//! ordering properties (streaming starts, barrier gating, update landmark
//! placement).

use super::message::MessageKind;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// External message accepted into a source pellet's queue.
    Ingest { pellet: String, port: String },
    /// Message enqueued at a sink in-port, attributed to a graph edge.
    Deliver {
        from: String,
        from_port: String,
        to: String,
        to_port: String,
        seq: u64,
        kind: MessageKind,
        /// Payload rendered lossily; lets tests distinguish message origins.
        tag: String,
    },
    /// A behavior invocation started.
    Invoke { pellet: String },
    /// Message stamped and handed to routing.
    Emit {
        pellet: String,
        port: String,
        seq: u64,
        kind: MessageKind,
    },
    /// Behavior-reported note via the context, e.g. superstep bookkeeping.
    Note { pellet: String, note: String },
    /// Message or invocation counted as failed.
    Failed { pellet: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    /// Position in the global order.
    pub seq: u64,
    /// Engine-clock timestamp.
    pub at: f64,
    pub kind: EventKind,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{} @{:.3}] {:?}", self.seq, self.at, self.kind)
    }
}

#[derive(Debug, Default)]
pub struct EventLog {
    next: AtomicU64,
    events: Mutex<Vec<Event>>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, at: f64, kind: EventKind) -> u64 {
        let seq = self.next.fetch_add(1, Ordering::SeqCst);
        self.events.lock().unwrap().push(Event { seq, at, kind });
        seq
    }

    pub fn snapshot(&self) -> Vec<Event> {
        self.events.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.events.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Deliveries on one edge, in delivery order. Convenience for per-edge
/// ordering assertions.
pub fn edge_deliveries<'a>(
    events: &'a [Event],
    from: &'a str,
    to: &'a str,
) -> impl Iterator<Item = &'a Event> + 'a {
    events.iter().filter(move |e| {
        matches!(&e.kind, EventKind::Deliver { from: f, to: t, .. } if f == from && t == to)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_in_global_order() {
        let log = EventLog::new();
        log.record(0.0, EventKind::Invoke { pellet: "a".into() });
        log.record(
            0.5,
            EventKind::Note {
                pellet: "a".into(),
                note: "x".into(),
            },
        );
        let events = log.snapshot();
        assert_eq!(events.len(), 2);
        assert!(events[0].seq < events[1].seq);
    }

    #[test]
    fn filters_edge_deliveries() {
        let log = EventLog::new();
        log.record(
            0.0,
            EventKind::Deliver {
                from: "a".into(),
                from_port: "out".into(),
                to: "b".into(),
                to_port: "in".into(),
                seq: 0,
                kind: MessageKind::Data,
                tag: "m".into(),
            },
        );
        log.record(0.0, EventKind::Invoke { pellet: "b".into() });
        let events = log.snapshot();
        assert_eq!(edge_deliveries(&events, "a", "b").count(), 1);
        assert_eq!(edge_deliveries(&events, "b", "a").count(), 0);
    }
}
