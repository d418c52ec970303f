//! The flake: runtime cell serving exactly one pellet. Owns per-port input
//! queues, the pellet's instance budget, its state object, and its metrics
//! samples. Work is claimed under the flake lock and executed outside it.

use super::behavior::{PelletBehavior, WorkInput};
use super::message::{Message, MessageKind};
use super::metrics::FlakeMetrics;
use crate::graph::{PelletSpec, Trigger, WindowSpec};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};

/// Per-edge emitted/consumed tallies, indexed by graph edge position.
#[derive(Debug)]
pub struct EdgeCounters {
    pub emitted: Vec<AtomicU64>,
    pub consumed: Vec<AtomicU64>,
}

impl EdgeCounters {
    pub fn new(edges: usize) -> Self {
        EdgeCounters {
            emitted: (0..edges).map(|_| AtomicU64::new(0)).collect(),
            consumed: (0..edges).map(|_| AtomicU64::new(0)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct QueuedMessage {
    msg: Message,
    arrived: f64,
    /// Graph edge that delivered the message; None for external ingest.
    edge: Option<usize>,
}

/// One claimed unit of work. The behavior Arc is captured at claim time so
/// an async update never changes logic mid-invocation.
pub enum Work {
    Push {
        input: WorkInput,
        behavior: Arc<dyn PelletBehavior>,
        epoch: u64,
    },
    Pull {
        chunk: Vec<(String, Message)>,
        behavior: Arc<dyn PelletBehavior>,
        epoch: u64,
    },
    /// A landmark reached the head of a push pellet's queue: forward it on
    /// every out-port without invoking the behavior.
    ForwardLandmark(Message),
}

impl Work {
    pub fn message_count(&self) -> u64 {
        match self {
            Work::Push { input, .. } => input.message_count(),
            Work::Pull { chunk, .. } => chunk.len() as u64,
            Work::ForwardLandmark(_) => 1,
        }
    }
}

struct FlakeCore {
    queues: BTreeMap<String, VecDeque<QueuedMessage>>,
    claim_cursor: usize,
    /// Ports whose intake is held during a subgraph update.
    blocked: BTreeSet<String>,
    state: Option<Vec<u8>>,
    behavior: Arc<dyn PelletBehavior>,
    /// Bumped on every behavior swap; stamped into landmark payloads.
    epoch: u64,
    /// Emissions from invocations claimed before this epoch are dropped.
    discard_before: u64,
    cores: u32,
    active: u32,
    paused: bool,
    closed: bool,
    /// Drain shutdown: partial windows may fire as final batches.
    flush_windows: bool,
    arrivals: VecDeque<f64>,
    /// (finish time, seconds per message)
    latencies: VecDeque<(f64, f64)>,
    processed_total: u64,
    emitted_total: u64,
    failed_total: u64,
    high_water: u32,
    budget_violations: u64,
}

pub struct Flake {
    pub id: String,
    pub spec: PelletSpec,
    /// Index of the hosting container; flakes never migrate.
    pub container: usize,
    alpha: u32,
    metrics_window: f64,
    in_port_order: Vec<String>,
    in_degrees: BTreeMap<String, usize>,
    seq_counters: BTreeMap<String, AtomicU64>,
    interrupt: AtomicBool,
    core: Mutex<FlakeCore>,
    cv: Condvar,
}

impl Flake {
    pub fn new(
        spec: PelletSpec,
        behavior: Arc<dyn PelletBehavior>,
        container: usize,
        cores: u32,
        alpha: u32,
        metrics_window: f64,
        in_degrees: BTreeMap<String, usize>,
    ) -> Self {
        let in_port_order: Vec<String> =
            spec.in_ports().map(|p| p.name.clone()).collect();
        let queues = in_port_order
            .iter()
            .map(|p| (p.clone(), VecDeque::new()))
            .collect();
        let seq_counters = spec
            .out_ports()
            .map(|p| (p.name.clone(), AtomicU64::new(0)))
            .collect();
        Flake {
            id: spec.id.clone(),
            container,
            alpha,
            metrics_window,
            in_port_order,
            in_degrees,
            seq_counters,
            interrupt: AtomicBool::new(false),
            core: Mutex::new(FlakeCore {
                queues,
                claim_cursor: 0,
                blocked: BTreeSet::new(),
                state: None,
                behavior,
                epoch: 0,
                discard_before: 0,
                cores,
                active: 0,
                paused: false,
                closed: false,
                flush_windows: false,
                arrivals: VecDeque::new(),
                latencies: VecDeque::new(),
                processed_total: 0,
                emitted_total: 0,
                failed_total: 0,
                high_water: 0,
                budget_violations: 0,
            }),
            cv: Condvar::new(),
            spec,
        }
    }

    fn budget_of(&self, cores: u32) -> u32 {
        let budget = cores.saturating_mul(self.alpha);
        if self.spec.ordered {
            budget.min(1)
        } else {
            budget
        }
    }

    /// Next sequence number for an out-port.
    pub fn next_seq(&self, port: &str) -> u64 {
        self.seq_counters
            .get(port)
            .expect("declared out-port")
            .fetch_add(1, Ordering::SeqCst)
    }

    pub fn has_out_port(&self, port: &str) -> bool {
        self.seq_counters.contains_key(port)
    }

    pub fn in_degree(&self, port: &str) -> usize {
        self.in_degrees.get(port).copied().unwrap_or(0)
    }

    pub fn interrupted(&self) -> bool {
        self.interrupt.load(Ordering::SeqCst)
    }

    /// Enqueue a message into an in-port. Returns false when the flake is
    /// closed and the message was dropped.
    pub fn enqueue(
        &self,
        port: &str,
        msg: Message,
        edge: Option<usize>,
        now: f64,
        counters: &EdgeCounters,
    ) -> bool {
        let mut core = self.core.lock().unwrap();
        if core.closed {
            core.failed_total += 1;
            return false;
        }
        if let Some(e) = edge {
            counters.emitted[e].fetch_add(1, Ordering::SeqCst);
        }
        core.arrivals.push_back(now);
        let window = self.metrics_window;
        while core.arrivals.front().is_some_and(|&t| t < now - window) {
            core.arrivals.pop_front();
        }
        core.queues
            .get_mut(port)
            .expect("declared in-port")
            .push_back(QueuedMessage { msg, arrived: now, edge });
        drop(core);
        self.cv.notify_all();
        true
    }

    /// Claim one unit of work if the budget and queues allow it. Pops the
    /// claimed messages and bumps the active count under the lock; the
    /// caller executes the behavior without holding it.
    pub fn claim(&self, now: f64, counters: &EdgeCounters) -> Option<Work> {
        let mut core = self.core.lock().unwrap();
        if core.closed || core.paused {
            return None;
        }
        let budget = self.budget_of(core.cores);

        if self.spec.trigger == Trigger::Pull {
            if core.active >= budget {
                return None;
            }
            let mut chunk = Vec::new();
            for port in &self.in_port_order {
                if core.blocked.contains(port) {
                    continue;
                }
                let q = core.queues.get_mut(port).unwrap();
                while let Some(item) = q.pop_front() {
                    if let Some(e) = item.edge {
                        counters.consumed[e].fetch_add(1, Ordering::SeqCst);
                    }
                    chunk.push((port.clone(), item.msg));
                }
            }
            if chunk.is_empty() {
                return None;
            }
            core.active += 1;
            core.high_water = core.high_water.max(core.active);
            if core.active > budget {
                core.budget_violations += 1;
            }
            return Some(Work::Pull {
                chunk,
                behavior: Arc::clone(&core.behavior),
                epoch: core.epoch,
            });
        }

        // Push trigger. Scan ports starting after the last claimed one so a
        // busy port cannot starve the others.
        let n = self.in_port_order.len();
        for k in 0..n {
            let idx = (core.claim_cursor + k) % n;
            let port = self.in_port_order[idx].clone();
            if core.blocked.contains(&port) {
                continue;
            }
            let Some(head_kind) = core.queues[&port].front().map(|m| m.msg.kind) else {
                continue;
            };

            // Landmarks forward only once in-flight work has drained, so
            // every output caused by earlier inputs precedes them downstream.
            if head_kind == MessageKind::Landmark {
                if core.active > 0 {
                    continue;
                }
                let item = core.queues.get_mut(&port).unwrap().pop_front().unwrap();
                if let Some(e) = item.edge {
                    counters.consumed[e].fetch_add(1, Ordering::SeqCst);
                }
                core.claim_cursor = idx + 1;
                core.processed_total += 1;
                return Some(Work::ForwardLandmark(item.msg));
            }
            if core.active >= budget {
                return None;
            }

            // Control messages bypass alignment and windows.
            if head_kind == MessageKind::Control {
                let item = core.queues.get_mut(&port).unwrap().pop_front().unwrap();
                if let Some(e) = item.edge {
                    counters.consumed[e].fetch_add(1, Ordering::SeqCst);
                }
                core.claim_cursor = idx + 1;
                core.active += 1;
                core.high_water = core.high_water.max(core.active);
                return Some(Work::Push {
                    input: WorkInput::Single { port, msg: item.msg },
                    behavior: Arc::clone(&core.behavior),
                    epoch: core.epoch,
                });
            }

            if self.spec.align_inputs {
                // Synchronous merge: one data message per in-port.
                let ready = self
                    .in_port_order
                    .iter()
                    .all(|p| core.queues[p].front().is_some_and(|m| m.msg.kind == MessageKind::Data));
                if !ready {
                    return None;
                }
                let mut tuple = BTreeMap::new();
                for p in &self.in_port_order {
                    let item = core.queues.get_mut(p).unwrap().pop_front().unwrap();
                    if let Some(e) = item.edge {
                        counters.consumed[e].fetch_add(1, Ordering::SeqCst);
                    }
                    tuple.insert(p.clone(), item.msg);
                }
                core.active += 1;
                core.high_water = core.high_water.max(core.active);
                return Some(Work::Push {
                    input: WorkInput::Tuple(tuple),
                    behavior: Arc::clone(&core.behavior),
                    epoch: core.epoch,
                });
            }

            if let Some(window) = self.spec.windows.get(&port) {
                let q = &core.queues[&port];
                let take = match *window {
                    WindowSpec::Count { width } => {
                        if (q.len() as u64) >= width {
                            width as usize
                        } else if core.flush_windows && !q.is_empty() {
                            q.len()
                        } else {
                            continue;
                        }
                    }
                    WindowSpec::Time { width_secs } => {
                        let first = q.front().unwrap().arrived;
                        if now >= first + width_secs {
                            q.iter().take_while(|m| m.arrived < first + width_secs).count()
                        } else if core.flush_windows {
                            q.len()
                        } else {
                            continue;
                        }
                    }
                };
                let q = core.queues.get_mut(&port).unwrap();
                let mut msgs = Vec::with_capacity(take);
                for _ in 0..take {
                    let item = q.pop_front().unwrap();
                    if let Some(e) = item.edge {
                        counters.consumed[e].fetch_add(1, Ordering::SeqCst);
                    }
                    msgs.push(item.msg);
                }
                core.claim_cursor = idx + 1;
                core.active += 1;
                core.high_water = core.high_water.max(core.active);
                return Some(Work::Push {
                    input: WorkInput::Batch { port, msgs },
                    behavior: Arc::clone(&core.behavior),
                    epoch: core.epoch,
                });
            }

            let item = core.queues.get_mut(&port).unwrap().pop_front().unwrap();
            if let Some(e) = item.edge {
                counters.consumed[e].fetch_add(1, Ordering::SeqCst);
            }
            core.claim_cursor = idx + 1;
            core.active += 1;
            core.high_water = core.high_water.max(core.active);
            return Some(Work::Push {
                input: WorkInput::Single { port, msg: item.msg },
                behavior: Arc::clone(&core.behavior),
                epoch: core.epoch,
            });
        }
        None
    }

    /// Record the end of an invocation: duration covers `messages` inputs.
    pub fn finish(&self, messages: u64, duration: f64, now: f64, ok: bool) {
        let mut core = self.core.lock().unwrap();
        core.active -= 1;
        if ok {
            core.processed_total += messages;
        } else {
            core.failed_total += messages;
        }
        if messages > 0 {
            core.latencies.push_back((now, duration / messages as f64));
        }
        let window = self.metrics_window;
        while core.latencies.front().is_some_and(|&(t, _)| t < now - window) {
            core.latencies.pop_front();
        }
        drop(core);
        self.cv.notify_all();
    }

    pub fn count_emit(&self) {
        self.core.lock().unwrap().emitted_total += 1;
    }

    pub fn count_failed(&self) {
        self.core.lock().unwrap().failed_total += 1;
    }

    /// Emissions stamped with an epoch before this are dropped (stale
    /// invocations outliving a forced update).
    pub fn discard_threshold(&self) -> u64 {
        self.core.lock().unwrap().discard_before
    }

    pub fn metrics(&self, now: f64) -> FlakeMetrics {
        let mut core = self.core.lock().unwrap();
        let window = self.metrics_window;
        while core.arrivals.front().is_some_and(|&t| t < now - window) {
            core.arrivals.pop_front();
        }
        while core.latencies.front().is_some_and(|&(t, _)| t < now - window) {
            core.latencies.pop_front();
        }
        let queue_length: u64 = core.queues.values().map(|q| q.len() as u64).sum();
        let arrival_rate = core.arrivals.len() as f64 / window;
        let mean_latency = if core.latencies.is_empty() {
            self.spec.latency_hint.unwrap_or(0.0)
        } else {
            core.latencies.iter().map(|&(_, l)| l).sum::<f64>() / core.latencies.len() as f64
        };
        FlakeMetrics {
            queue_length,
            arrival_rate,
            mean_latency,
            instances: self.budget_of(core.cores),
            processed_total: core.processed_total,
            emitted_total: core.emitted_total,
        }
    }

    pub fn cores(&self) -> u32 {
        self.core.lock().unwrap().cores
    }

    pub fn failed_total(&self) -> u64 {
        self.core.lock().unwrap().failed_total
    }

    pub fn budget_violations(&self) -> u64 {
        self.core.lock().unwrap().budget_violations
    }

    pub fn high_water(&self) -> u32 {
        self.core.lock().unwrap().high_water
    }

    pub fn queue_length(&self) -> u64 {
        let core = self.core.lock().unwrap();
        core.queues.values().map(|q| q.len() as u64).sum()
    }

    pub fn active(&self) -> u32 {
        self.core.lock().unwrap().active
    }

    /// Apply a new core allocation. In-flight invocations above the new
    /// budget run to completion; claims stall until under budget.
    pub fn set_cores(&self, cores: u32) {
        self.core.lock().unwrap().cores = cores;
        self.cv.notify_all();
    }

    pub fn peek_state(&self) -> Option<Vec<u8>> {
        self.core.lock().unwrap().state.clone()
    }

    pub fn get_state(&self) -> Option<Vec<u8>> {
        self.core.lock().unwrap().state.clone()
    }

    pub fn put_state(&self, state: Vec<u8>) {
        self.core.lock().unwrap().state = Some(state);
    }

    pub fn pause(&self) {
        let mut core = self.core.lock().unwrap();
        core.paused = true;
        self.interrupt.store(true, Ordering::SeqCst);
    }

    pub fn resume(&self) {
        let mut core = self.core.lock().unwrap();
        core.paused = false;
        self.interrupt.store(false, Ordering::SeqCst);
        drop(core);
        self.cv.notify_all();
    }

    pub fn block_ports(&self, ports: &[String]) {
        let mut core = self.core.lock().unwrap();
        core.blocked.extend(ports.iter().cloned());
    }

    pub fn unblock_all(&self) {
        let mut core = self.core.lock().unwrap();
        core.blocked.clear();
        drop(core);
        self.cv.notify_all();
    }

    /// Wait until no invocation is in flight, up to `grace` wall seconds.
    /// Returns true when drained; on timeout, stale emissions are discarded
    /// from now on and false is returned.
    pub fn drain_in_flight(&self, grace: std::time::Duration) -> bool {
        let deadline = std::time::Instant::now() + grace;
        let mut core = self.core.lock().unwrap();
        while core.active > 0 {
            let left = deadline.saturating_duration_since(std::time::Instant::now());
            if left.is_zero() {
                core.discard_before = core.epoch + 1;
                return false;
            }
            let (c, _) = self.cv.wait_timeout(core, left).unwrap();
            core = c;
        }
        true
    }

    /// Swap in a new behavior; returns the new update epoch.
    pub fn swap_behavior(&self, behavior: Arc<dyn PelletBehavior>) -> u64 {
        let mut core = self.core.lock().unwrap();
        core.behavior = behavior;
        core.epoch += 1;
        core.epoch
    }

    pub fn epoch(&self) -> u64 {
        self.core.lock().unwrap().epoch
    }

    /// Messages retained across an update, per port (for queue transfer
    /// during subgraph replacement).
    pub fn take_queue(&self, port: &str) -> Vec<(Message, f64, Option<usize>)> {
        let mut core = self.core.lock().unwrap();
        core.queues
            .get_mut(port)
            .map(|q| q.drain(..).map(|i| (i.msg, i.arrived, i.edge)).collect())
            .unwrap_or_default()
    }

    pub fn set_flush_windows(&self, on: bool) {
        self.core.lock().unwrap().flush_windows = on;
        self.cv.notify_all();
    }

    pub fn close(&self) {
        let mut core = self.core.lock().unwrap();
        core.closed = true;
        drop(core);
        self.cv.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.core.lock().unwrap().closed
    }

    /// Quiescent: nothing queued on unblocked ports and nothing in flight.
    pub fn is_quiescent(&self) -> bool {
        let core = self.core.lock().unwrap();
        core.active == 0
            && core
                .queues
                .iter()
                .all(|(p, q)| q.is_empty() || core.blocked.contains(p))
    }
}
