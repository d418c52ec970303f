//! Message movement between flakes: split strategies for fan-out, alignment
//! for synchronous merge, and the superstep barrier used by BSP dataflows.

use crate::engine::{Message, MessageKind};
use crate::graph::SplitMode;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use thiserror::Error;

/// FNV-1a 64-bit. Fixed constants keep key placement bit-exact across runs
/// and platforms: offset basis 14695981039346656037, prime 1099511628211.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    const OFFSET_BASIS: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut hash = OFFSET_BASIS;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

#[derive(Debug, Error, PartialEq)]
pub enum RouteError {
    #[error("no route registered for {pellet}.{port}")]
    UnknownSource { pellet: String, port: String },
    #[error("key-hash split at {pellet}.{port} needs a non-empty message key")]
    MissingKey { pellet: String, port: String },
}

/// Deterministic bucket for a routing key: hash mod fan_out.
pub fn key_hash_index(key: &[u8], fan_out: usize) -> Result<usize, RouteError> {
    debug_assert!(fan_out >= 1);
    if key.is_empty() {
        return Err(RouteError::MissingKey {
            pellet: String::new(),
            port: String::new(),
        });
    }
    Ok((fnv1a_64(key) % fan_out as u64) as usize)
}

/// Where an edge delivers: target in-port plus the engine's stable edge id,
/// used for per-edge delivery logs and boundary blocking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteSink {
    pub pellet: String,
    pub port: String,
    pub edge: usize,
}

struct Route {
    sinks: Vec<RouteSink>,
    mode: SplitMode,
    cursor: AtomicUsize,
}

/// Routes per (source pellet, out-port). Cursor updates are atomic, so
/// concurrent emits from parallel instances are safe on a shared table.
#[derive(Default)]
pub struct RouteTable {
    routes: BTreeMap<(String, String), Route>,
}

impl RouteTable {
    pub fn new() -> Self {
        RouteTable::default()
    }

    /// Register the outgoing edges of one out-port, in declaration order.
    pub fn add_route(
        &mut self,
        pellet: impl Into<String>,
        port: impl Into<String>,
        mode: SplitMode,
        sinks: Vec<RouteSink>,
    ) {
        self.routes.insert(
            (pellet.into(), port.into()),
            Route {
                sinks,
                mode,
                cursor: AtomicUsize::new(0),
            },
        );
    }

    /// Pick the sinks for one message. Data messages follow the split mode;
    /// landmarks and control messages always go to every edge. An out-port
    /// with no edges routes to nothing.
    pub fn route(&self, pellet: &str, port: &str, msg: &Message) -> Result<Vec<&RouteSink>, RouteError> {
        let route = self
            .routes
            .get(&(pellet.to_owned(), port.to_owned()))
            .ok_or_else(|| RouteError::UnknownSource {
                pellet: pellet.to_owned(),
                port: port.to_owned(),
            })?;
        if route.sinks.is_empty() {
            return Ok(Vec::new());
        }
        if msg.kind != MessageKind::Data {
            return Ok(route.sinks.iter().collect());
        }
        match route.mode {
            SplitMode::Duplicate => Ok(route.sinks.iter().collect()),
            SplitMode::RoundRobin => {
                let i = route.cursor.fetch_add(1, Ordering::Relaxed) % route.sinks.len();
                Ok(vec![&route.sinks[i]])
            }
            SplitMode::KeyHash => {
                let key = msg.key.as_deref().unwrap_or(&[]);
                let i = key_hash_index(key, route.sinks.len()).map_err(|_| {
                    RouteError::MissingKey {
                        pellet: pellet.to_owned(),
                        port: port.to_owned(),
                    }
                })?;
                Ok(vec![&route.sinks[i]])
            }
        }
    }

    pub fn fan_out(&self, pellet: &str, port: &str) -> usize {
        self.routes
            .get(&(pellet.to_owned(), port.to_owned()))
            .map(|r| r.sinks.len())
            .unwrap_or(0)
    }
}

/// Synchronous merge: one FIFO per input port, released as a port-indexed
/// tuple once every port has a message. Heads pair strictly in FIFO order.
#[derive(Debug, Clone)]
pub struct AlignBuffer {
    queues: BTreeMap<String, VecDeque<Message>>,
}

impl AlignBuffer {
    pub fn new(ports: impl IntoIterator<Item = impl Into<String>>) -> Self {
        AlignBuffer {
            queues: ports
                .into_iter()
                .map(|p| (p.into(), VecDeque::new()))
                .collect(),
        }
    }

    pub fn push(&mut self, port: &str, msg: Message) {
        self.queues
            .get_mut(port)
            .unwrap_or_else(|| panic!("align buffer has no port `{port}`"))
            .push_back(msg);
    }

    /// Total buffered messages across ports.
    pub fn len(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pop one aligned tuple if every port has a pending message.
    pub fn align(&mut self) -> Option<BTreeMap<String, Message>> {
        if self.queues.is_empty() || self.queues.values().any(VecDeque::is_empty) {
            return None;
        }
        Some(
            self.queues
                .iter_mut()
                .map(|(port, q)| (port.clone(), q.pop_front().unwrap()))
                .collect(),
        )
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BarrierError {
    #[error("`{pellet}` is not a superstep participant")]
    UnknownSender { pellet: String },
    #[error("expected a control message labeled done:<pellet> or halt:<pellet>, got `{label}`")]
    BadLabel { label: String },
    #[error("barrier already terminated")]
    Halted,
}

#[derive(Debug, PartialEq)]
pub enum BarrierAction {
    /// Vote recorded; waiting for the rest.
    Pending,
    /// Same pellet already voted this superstep; nothing changed. Callers
    /// should log this, it usually means a duplicated control edge.
    AlreadyRecorded,
    /// Every participant finished: broadcast starts the next superstep.
    Advance { superstep: u64, broadcast: Message },
    /// Every participant voted halt: broadcast terminates the dataflow.
    Terminate { broadcast: Message },
}

/// Superstep synchronization point. A manager pellet feeds worker "done" and
/// "halt" control messages in and broadcasts the returned action on its
/// control out-port; workers gate their next round's data on that broadcast.
#[derive(Debug, Clone)]
pub struct BarrierState {
    superstep: u64,
    expected: BTreeSet<String>,
    done: BTreeSet<String>,
    halt_votes: BTreeSet<String>,
    halted: bool,
}

impl BarrierState {
    pub fn new(expected: impl IntoIterator<Item = impl Into<String>>) -> Self {
        BarrierState {
            superstep: 0,
            expected: expected.into_iter().map(Into::into).collect(),
            done: BTreeSet::new(),
            halt_votes: BTreeSet::new(),
            halted: false,
        }
    }

    pub fn superstep(&self) -> u64 {
        self.superstep
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    /// Record one `done:<pellet>` or `halt:<pellet>` control message. A halt
    /// vote counts as done; the barrier terminates only when every
    /// participant halts in the same superstep.
    pub fn barrier_step(&mut self, ctrl: &Message) -> Result<BarrierAction, BarrierError> {
        if self.halted {
            return Err(BarrierError::Halted);
        }
        let label = ctrl.text().to_owned();
        let (halt, pellet) = if ctrl.kind != MessageKind::Control {
            return Err(BarrierError::BadLabel { label });
        } else if let Some(p) = label.strip_prefix("done:") {
            (false, p.to_owned())
        } else if let Some(p) = label.strip_prefix("halt:") {
            (true, p.to_owned())
        } else {
            return Err(BarrierError::BadLabel { label });
        };
        if !self.expected.contains(&pellet) {
            return Err(BarrierError::UnknownSender { pellet });
        }
        if !self.done.insert(pellet.clone()) {
            return Ok(BarrierAction::AlreadyRecorded);
        }
        if halt {
            self.halt_votes.insert(pellet);
        }
        if self.done != self.expected {
            return Ok(BarrierAction::Pending);
        }
        if self.halt_votes == self.expected {
            self.halted = true;
            return Ok(BarrierAction::Terminate {
                broadcast: Message::control("terminate"),
            });
        }
        self.superstep += 1;
        self.done.clear();
        self.halt_votes.clear();
        Ok(BarrierAction::Advance {
            superstep: self.superstep,
            broadcast: Message::control(&format!("advance:{}", self.superstep)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sink(pellet: &str, port: &str, edge: usize) -> RouteSink {
        RouteSink {
            pellet: pellet.into(),
            port: port.into(),
            edge,
        }
    }

    fn table(mode: SplitMode, fan_out: usize) -> RouteTable {
        let mut t = RouteTable::new();
        let sinks = (0..fan_out).map(|i| sink(&format!("s{i}"), "in", i)).collect();
        t.add_route("src", "out", mode, sinks);
        t
    }

    #[test]
    fn fnv1a_64_published_vectors() {
        assert_eq!(fnv1a_64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a_64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a_64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn duplicate_delivers_to_all() {
        let t = table(SplitMode::Duplicate, 3);
        let out = t.route("src", "out", &Message::data("x")).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].pellet, "s0");
        assert_eq!(out[2].pellet, "s2");
    }

    #[test]
    fn round_robin_rotates() {
        let t = table(SplitMode::RoundRobin, 2);
        let picks: Vec<String> = (0..4)
            .map(|_| t.route("src", "out", &Message::data("x")).unwrap()[0].pellet.clone())
            .collect();
        assert_eq!(picks, ["s0", "s1", "s0", "s1"]);
    }

    #[test]
    fn round_robin_fairness() {
        let t = table(SplitMode::RoundRobin, 3);
        let mut counts = [0usize; 3];
        for _ in 0..3 * 7 {
            let s = t.route("src", "out", &Message::data("x")).unwrap();
            assert_eq!(s.len(), 1);
            counts[s[0].edge] += 1;
        }
        assert_eq!(counts, [7, 7, 7]);
    }

    #[test]
    fn key_hash_affinity_and_fan_out_one() {
        let t = table(SplitMode::KeyHash, 5);
        let a = t.route("src", "out", &Message::keyed("user-17", "x")).unwrap();
        let b = t.route("src", "out", &Message::keyed("user-17", "y")).unwrap();
        assert_eq!(a[0].edge, b[0].edge);

        let t1 = table(SplitMode::KeyHash, 1);
        for k in ["a", "b", "zebra"] {
            let s = t1.route("src", "out", &Message::keyed(k, "x")).unwrap();
            assert_eq!(s[0].edge, 0);
        }
    }

    #[test]
    fn key_hash_requires_key() {
        let t = table(SplitMode::KeyHash, 2);
        let err = t.route("src", "out", &Message::data("x")).unwrap_err();
        assert!(matches!(err, RouteError::MissingKey { .. }));
        let err = t.route("src", "out", &Message::keyed("", "x")).unwrap_err();
        assert!(matches!(err, RouteError::MissingKey { .. }));
    }

    #[test]
    fn key_hash_distribution() {
        // 10,000 distinct keys from a seeded generator over 4 buckets.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut buckets = [0usize; 4];
        for _ in 0..10_000 {
            state = state.wrapping_mul(6364136136223846793).wrapping_add(1442695040888963407);
            let key = format!("k{state:x}");
            buckets[key_hash_index(key.as_bytes(), 4).unwrap()] += 1;
        }
        for (i, &n) in buckets.iter().enumerate() {
            assert!(
                (2200..=2800).contains(&n),
                "bucket {i} got {n}, want 2500 +/- 300"
            );
        }
    }

    #[test]
    fn landmarks_and_control_bypass_split() {
        for mode in [SplitMode::RoundRobin, SplitMode::KeyHash] {
            let t = table(mode, 3);
            let l = t.route("src", "out", &Message::landmark("update:1")).unwrap();
            assert_eq!(l.len(), 3);
            let c = t.route("src", "out", &Message::control("advance:1")).unwrap();
            assert_eq!(c.len(), 3);
        }
    }

    #[test]
    fn empty_route_and_unknown_source() {
        let mut t = RouteTable::new();
        t.add_route("src", "out", SplitMode::RoundRobin, Vec::new());
        assert_eq!(t.route("src", "out", &Message::data("x")).unwrap().len(), 0);
        assert!(matches!(
            t.route("other", "out", &Message::data("x")),
            Err(RouteError::UnknownSource { .. })
        ));
    }

    #[test]
    fn align_releases_only_full_tuples() {
        let mut buf = AlignBuffer::new(["a", "b"]);
        buf.push("a", Message::data("m1"));
        assert_eq!(buf.align(), None);

        buf.push("a", Message::data("m2"));
        buf.push("b", Message::data("n1"));
        let t = buf.align().unwrap();
        assert_eq!(t["a"].text(), "m1");
        assert_eq!(t["b"].text(), "n1");
        assert_eq!(buf.align(), None);
        assert_eq!(buf.len(), 1);
    }

    #[test]
    fn align_pairs_fifo() {
        let mut buf = AlignBuffer::new(["a", "b"]);
        for m in ["m1", "m2"] {
            buf.push("a", Message::data(m));
        }
        for n in ["n1", "n2"] {
            buf.push("b", Message::data(n));
        }
        let t1 = buf.align().unwrap();
        let t2 = buf.align().unwrap();
        assert_eq!((t1["a"].text(), t1["b"].text()), ("m1", "n1"));
        assert_eq!((t2["a"].text(), t2["b"].text()), ("m2", "n2"));
        assert!(buf.is_empty());
    }

    #[test]
    fn barrier_advances_when_all_done() {
        let mut st = BarrierState::new(["p1", "p2"]);
        let a = st.barrier_step(&Message::control("done:p1")).unwrap();
        assert_eq!(a, BarrierAction::Pending);
        assert_eq!(st.superstep(), 0);

        let a = st.barrier_step(&Message::control("done:p2")).unwrap();
        match a {
            BarrierAction::Advance { superstep, broadcast } => {
                assert_eq!(superstep, 1);
                assert_eq!(broadcast.text(), "advance:1");
            }
            other => panic!("expected advance, got {other:?}"),
        }
    }

    #[test]
    fn barrier_duplicate_done_is_idempotent() {
        let mut st = BarrierState::new(["p1", "p2"]);
        st.barrier_step(&Message::control("done:p1")).unwrap();
        let a = st.barrier_step(&Message::control("done:p1")).unwrap();
        assert_eq!(a, BarrierAction::AlreadyRecorded);
        assert_eq!(st.superstep(), 0);
    }

    #[test]
    fn barrier_rejects_strangers_and_bad_labels() {
        let mut st = BarrierState::new(["p1"]);
        assert!(matches!(
            st.barrier_step(&Message::control("done:p9")),
            Err(BarrierError::UnknownSender { .. })
        ));
        assert!(matches!(
            st.barrier_step(&Message::control("ready:p1")),
            Err(BarrierError::BadLabel { .. })
        ));
        assert!(matches!(
            st.barrier_step(&Message::data("done:p1")),
            Err(BarrierError::BadLabel { .. })
        ));
    }

    #[test]
    fn barrier_terminates_on_unanimous_halt() {
        let mut st = BarrierState::new(["p1", "p2"]);
        // Mixed round: p1 halts but p2 does not; keep running.
        st.barrier_step(&Message::control("halt:p1")).unwrap();
        let a = st.barrier_step(&Message::control("done:p2")).unwrap();
        assert!(matches!(a, BarrierAction::Advance { superstep: 1, .. }));
        assert!(!st.halted());

        st.barrier_step(&Message::control("halt:p2")).unwrap();
        let a = st.barrier_step(&Message::control("halt:p1")).unwrap();
        match a {
            BarrierAction::Terminate { broadcast } => assert_eq!(broadcast.text(), "terminate"),
            other => panic!("expected terminate, got {other:?}"),
        }
        assert!(st.halted());
        assert!(matches!(
            st.barrier_step(&Message::control("done:p1")),
            Err(BarrierError::Halted)
        ));
    }
}
