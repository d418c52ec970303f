//! In-process execution of a deployed dataflow graph: one flake per pellet
//! packed into logical containers, a shared worker pool (or single-threaded
//! deterministic stepping), routing between flakes, and live control
//! operations (core scaling, behavior updates, drain shutdown).

mod behavior;
mod clock;
mod container;
mod event;
mod flake;
mod message;
mod metrics;

pub use behavior::{BehaviorError, BehaviorRegistry, PelletBehavior, PelletContext, WorkInput};
pub use clock::{Clock, VirtualClock};
pub use container::{place, Container, PlacementError};
pub use event::{edge_deliveries, Event, EventKind, EventLog};
pub use flake::{EdgeCounters, Flake, Work};
pub use message::{Message, MessageKind};
pub use metrics::FlakeMetrics;

use crate::graph::{validate_graph, DataflowGraph, PortDirection, Severity};
use crate::graph::wiring::wiring_order;
use crate::routing::{RouteError, RouteSink, RouteTable};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;
use thiserror::Error;

pub const METRICS_CSV_HEADER: &str = "time,pellet,queue_len,D,L,N,cores,processed,emitted";

#[derive(Debug, Error)]
pub enum DeployError {
    #[error("graph validation failed:\n{0}")]
    Validation(String),
    #[error("pellet {pellet} uses unregistered impl {name}")]
    UnregisteredImpl { pellet: String, name: String },
    #[error(transparent)]
    Placement(#[from] PlacementError),
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("unknown pellet: {0}")]
    UnknownPellet(String),
    #[error("unknown port: {0}.{1}")]
    UnknownPort(String, String),
    #[error("pellet {0} is not a source")]
    NotASource(String),
    #[error("dataflow not running")]
    NotRunning,
    #[error("{pellet} cannot take {requested} cores: container {container} has {available} available")]
    ExceedsCapacity {
        pellet: String,
        requested: u32,
        container: usize,
        available: u32,
    },
}

/// Engine-wide configuration fixed at deploy time.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Instances per core.
    pub alpha: u32,
    /// Worker threads; 0 selects single-threaded deterministic stepping.
    pub workers: usize,
    pub clock: Clock,
    /// How long a sync update or drain waits for in-flight work.
    pub grace: Duration,
    /// Sliding window for the D and L metrics, seconds.
    pub metrics_window: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            alpha: 4,
            workers: 4,
            clock: Clock::real(),
            grace: Duration::from_secs(30),
            metrics_window: 1.0,
        }
    }
}

impl EngineConfig {
    /// Single-threaded stepping on a caller-held virtual clock.
    pub fn deterministic(clock: VirtualClock) -> Self {
        EngineConfig {
            workers: 0,
            clock: Clock::Virtual(clock),
            ..EngineConfig::default()
        }
    }
}

pub(crate) struct Shared {
    pub(crate) graph: DataflowGraph,
    pub(crate) flakes: BTreeMap<String, Arc<Flake>>,
    /// Pellet ids in wiring order (downstream before upstream).
    pub(crate) order: Vec<String>,
    pub(crate) sources: BTreeSet<String>,
    pub(crate) routes: RouteTable,
    pub(crate) events: EventLog,
    pub(crate) counters: EdgeCounters,
    pub(crate) clock: Clock,
    pub(crate) grace: Duration,
    running: AtomicBool,
    accepting: AtomicBool,
    pub(crate) containers: Mutex<Vec<Container>>,
    /// Update serialization: pellet ids currently being updated.
    pub(crate) updating: Mutex<BTreeSet<String>>,
    tick: Mutex<u64>,
    tick_cv: Condvar,
}

impl Shared {
    pub(crate) fn now(&self) -> f64 {
        self.clock.now()
    }

    /// Wake idle workers after new work appears.
    pub(crate) fn wake(&self) {
        let mut t = self.tick.lock().unwrap();
        *t += 1;
        drop(t);
        self.tick_cv.notify_all();
    }

    fn wait_for_work(&self, timeout: Duration) {
        let t = self.tick.lock().unwrap();
        let _ = self.tick_cv.wait_timeout(t, timeout).unwrap();
    }

    /// Route a stamped message out of (pellet, port) and enqueue at every
    /// selected sink. Returns the number of deliveries.
    pub(crate) fn deliver(
        &self,
        from: &str,
        from_port: &str,
        msg: &Message,
    ) -> Result<usize, RouteError> {
        let sinks: Vec<RouteSink> = self
            .routes
            .route(from, from_port, msg)?
            .into_iter()
            .cloned()
            .collect();
        let now = self.now();
        for sink in &sinks {
            self.events.record(
                now,
                EventKind::Deliver {
                    from: from.to_string(),
                    from_port: from_port.to_string(),
                    to: sink.pellet.clone(),
                    to_port: sink.port.clone(),
                    seq: msg.seq,
                    kind: msg.kind,
                    tag: lossy_tag(&msg.payload),
                },
            );
            self.flakes[&sink.pellet].enqueue(
                &sink.port,
                msg.clone(),
                Some(sink.edge),
                now,
                &self.counters,
            );
        }
        self.wake();
        Ok(sinks.len())
    }

    /// Stamp a message as an emission of (pellet, port) and deliver it.
    /// Failures on key-hash routes are absorbed as failed messages.
    pub(crate) fn emit_from(&self, flake: &Flake, port: &str, mut msg: Message) {
        msg.seq = flake.next_seq(port);
        msg.source = flake.id.clone();
        self.events.record(
            self.now(),
            EventKind::Emit {
                pellet: flake.id.clone(),
                port: port.to_string(),
                seq: msg.seq,
                kind: msg.kind,
            },
        );
        flake.count_emit();
        if let Err(e) = self.deliver(&flake.id, port, &msg) {
            flake.count_failed();
            self.events.record(
                self.now(),
                EventKind::Failed {
                    pellet: flake.id.clone(),
                    reason: e.to_string(),
                },
            );
        }
    }

    /// Claim-execute one unit of work on one flake. Returns false when the
    /// flake had nothing claimable.
    pub(crate) fn run_one(&self, flake: &Arc<Flake>) -> bool {
        let Some(work) = flake.claim(self.now(), &self.counters) else {
            return false;
        };
        match work {
            Work::ForwardLandmark(msg) => {
                let ports: Vec<String> =
                    flake.spec.out_ports().map(|p| p.name.clone()).collect();
                for port in ports {
                    self.emit_from(flake, &port, msg.clone());
                }
            }
            Work::Push {
                input,
                behavior,
                epoch,
            } => {
                self.events.record(
                    self.now(),
                    EventKind::Invoke {
                        pellet: flake.id.clone(),
                    },
                );
                let count = input.message_count();
                let started = self.now();
                let mut ctx = Ctx {
                    shared: self,
                    flake,
                    epoch,
                };
                let result = behavior.on_push(input, &mut ctx);
                let now = self.now();
                if let Err(e) = &result {
                    self.events.record(
                        now,
                        EventKind::Failed {
                            pellet: flake.id.clone(),
                            reason: e.to_string(),
                        },
                    );
                }
                flake.finish(count, now - started, now, result.is_ok());
            }
            Work::Pull {
                chunk,
                behavior,
                epoch,
            } => {
                self.events.record(
                    self.now(),
                    EventKind::Invoke {
                        pellet: flake.id.clone(),
                    },
                );
                let count = chunk.len() as u64;
                let started = self.now();
                let mut ctx = Ctx {
                    shared: self,
                    flake,
                    epoch,
                };
                let mut iter = chunk.into_iter();
                let result = behavior.on_pull(&mut iter, &mut ctx);
                let now = self.now();
                if let Err(e) = &result {
                    self.events.record(
                        now,
                        EventKind::Failed {
                            pellet: flake.id.clone(),
                            reason: e.to_string(),
                        },
                    );
                }
                flake.finish(count, now - started, now, result.is_ok());
            }
        }
        true
    }
}

fn lossy_tag(payload: &[u8]) -> String {
    let s = String::from_utf8_lossy(payload);
    s.chars().take(40).collect()
}

/// Invocation context: emission, state, interruption, introspection.
struct Ctx<'a> {
    shared: &'a Shared,
    flake: &'a Arc<Flake>,
    epoch: u64,
}

impl PelletContext for Ctx<'_> {
    fn emit(&mut self, port: &str, msg: Message) -> Result<(), BehaviorError> {
        if !self.flake.has_out_port(port) {
            return Err(BehaviorError::UnknownPort(port.to_string()));
        }
        // Stale invocations outliving a forced update: output discarded.
        if self.epoch < self.flake.discard_threshold() {
            self.flake.count_failed();
            return Ok(());
        }
        self.shared.emit_from(self.flake, port, msg);
        Ok(())
    }

    fn get_state(&self) -> Result<Option<Vec<u8>>, BehaviorError> {
        if !self.flake.spec.stateful {
            return Err(BehaviorError::Stateless);
        }
        Ok(self.flake.get_state())
    }

    fn put_state(&mut self, state: Vec<u8>) -> Result<(), BehaviorError> {
        if !self.flake.spec.stateful {
            return Err(BehaviorError::Stateless);
        }
        self.flake.put_state(state);
        Ok(())
    }

    fn interrupted(&self) -> bool {
        self.flake.interrupted()
    }

    fn in_degree(&self, port: &str) -> usize {
        self.flake.in_degree(port)
    }

    fn note(&mut self, note: &str) {
        self.shared.events.record(
            self.shared.now(),
            EventKind::Note {
                pellet: self.flake.id.clone(),
                note: note.to_string(),
            },
        );
    }
}

/// A deployed, running dataflow.
pub struct Engine {
    shared: Arc<Shared>,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

impl Engine {
    /// Validate, place, wire and activate a graph. Flakes are created in
    /// wiring order, so by the time sources can run their consumers exist.
    pub fn deploy(
        graph: &DataflowGraph,
        registry: &BehaviorRegistry,
        capacities: &[u32],
        config: EngineConfig,
    ) -> Result<Engine, DeployError> {
        let report = validate_graph(graph);
        if !report.ok() {
            let text = report
                .diagnostics
                .iter()
                .filter(|d| d.severity == Severity::Error)
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("\n");
            return Err(DeployError::Validation(text));
        }
        for p in graph.pellets.values() {
            if registry.get(&p.impl_name).is_none() {
                return Err(DeployError::UnregisteredImpl {
                    pellet: p.id.clone(),
                    name: p.impl_name.clone(),
                });
            }
        }

        let requests: Vec<(String, u32)> = graph
            .pellets
            .values()
            .map(|p| (p.id.clone(), p.core_hint.unwrap_or(1)))
            .collect();
        let containers = place(&requests, capacities)?;
        let mut host: BTreeMap<String, usize> = BTreeMap::new();
        for c in &containers {
            for pellet in c.allocated.keys() {
                host.insert(pellet.clone(), c.id);
            }
        }

        let mut routes = RouteTable::new();
        for p in graph.pellets.values() {
            for port in p.out_ports() {
                let sinks: Vec<RouteSink> = graph
                    .edges_from(&p.id, &port.name)
                    .map(|(idx, e)| RouteSink {
                        pellet: e.to.pellet.clone(),
                        port: e.to.port.clone(),
                        edge: idx,
                    })
                    .collect();
                routes.add_route(&p.id, &port.name, graph.split_mode(&p.id, &port.name), sinks);
            }
        }

        let order = wiring_order(graph);
        let mut flakes = BTreeMap::new();
        for id in &order {
            let spec = graph.pellets[id].clone();
            let in_degrees: BTreeMap<String, usize> = spec
                .in_ports()
                .map(|port| {
                    (
                        port.name.clone(),
                        graph.edges_into(id, &port.name).count(),
                    )
                })
                .collect();
            let behavior = registry.get(&spec.impl_name).unwrap();
            let cores = spec.core_hint.unwrap_or(1);
            let flake = Flake::new(
                spec,
                behavior,
                host[id],
                cores,
                config.alpha,
                config.metrics_window,
                in_degrees,
            );
            flakes.insert(id.clone(), Arc::new(flake));
        }

        let shared = Arc::new(Shared {
            sources: graph.source_pellets().into_iter().collect(),
            counters: EdgeCounters::new(graph.edges.len()),
            graph: graph.clone(),
            flakes,
            order,
            routes,
            events: EventLog::new(),
            clock: config.clock.clone(),
            grace: config.grace,
            running: AtomicBool::new(true),
            accepting: AtomicBool::new(true),
            containers: Mutex::new(containers),
            updating: Mutex::new(BTreeSet::new()),
            tick: Mutex::new(0),
            tick_cv: Condvar::new(),
        });

        let mut workers = Vec::new();
        for seed in 0..config.workers {
            let shared = Arc::clone(&shared);
            workers.push(std::thread::spawn(move || worker_loop(shared, seed)));
        }
        Ok(Engine {
            shared,
            workers: Mutex::new(workers),
        })
    }

    pub(crate) fn shared(&self) -> &Arc<Shared> {
        &self.shared
    }

    pub fn is_running(&self) -> bool {
        self.shared.running.load(Ordering::SeqCst)
    }

    /// Feed an external message into a source pellet's in-port.
    pub fn ingest(&self, pellet: &str, port: &str, msg: Message) -> Result<(), EngineError> {
        if !self.shared.accepting.load(Ordering::SeqCst) {
            return Err(EngineError::NotRunning);
        }
        let flake = self
            .shared
            .flakes
            .get(pellet)
            .ok_or_else(|| EngineError::UnknownPellet(pellet.to_string()))?;
        if !self.shared.sources.contains(pellet) {
            return Err(EngineError::NotASource(pellet.to_string()));
        }
        if flake.spec.port(port, PortDirection::In).is_none() {
            return Err(EngineError::UnknownPort(pellet.to_string(), port.to_string()));
        }
        let now = self.shared.now();
        self.shared.events.record(
            now,
            EventKind::Ingest {
                pellet: pellet.to_string(),
                port: port.to_string(),
            },
        );
        flake.enqueue(port, msg, None, now, &self.shared.counters);
        self.shared.wake();
        Ok(())
    }

    /// Change a pellet's core allocation within its container's capacity.
    /// Zero suspends the flake (no new invocations) without undeploying it.
    pub fn set_cores(&self, pellet: &str, cores: u32) -> Result<(), EngineError> {
        let flake = self
            .shared
            .flakes
            .get(pellet)
            .ok_or_else(|| EngineError::UnknownPellet(pellet.to_string()))?;
        let mut containers = self.shared.containers.lock().unwrap();
        let c = &mut containers[flake.container];
        let current = c.allocated.get(pellet).copied().unwrap_or(0);
        let available = c.free() + current;
        if cores > available {
            return Err(EngineError::ExceedsCapacity {
                pellet: pellet.to_string(),
                requested: cores,
                container: c.id,
                available,
            });
        }
        c.allocated.insert(pellet.to_string(), cores);
        drop(containers);
        flake.set_cores(cores);
        self.shared.wake();
        Ok(())
    }

    pub fn metrics(&self, pellet: &str) -> Result<FlakeMetrics, EngineError> {
        self.shared
            .flakes
            .get(pellet)
            .map(|f| f.metrics(self.shared.now()))
            .ok_or_else(|| EngineError::UnknownPellet(pellet.to_string()))
    }

    /// Metrics for every pellet, in wiring order.
    pub fn metrics_all(&self) -> Vec<(String, FlakeMetrics)> {
        let now = self.shared.now();
        self.shared
            .order
            .iter()
            .map(|id| (id.clone(), self.shared.flakes[id].metrics(now)))
            .collect()
    }

    /// One CSV row per pellet: `time,pellet,queue_len,D,L,N,cores,processed,emitted`.
    pub fn metrics_csv_rows(&self) -> Vec<String> {
        let now = self.shared.now();
        self.shared
            .order
            .iter()
            .map(|id| {
                let f = &self.shared.flakes[id];
                let m = f.metrics(now);
                format!(
                    "{:.3},{},{},{:.3},{:.4},{},{},{},{}",
                    now,
                    id,
                    m.queue_length,
                    m.arrival_rate,
                    m.mean_latency,
                    m.instances,
                    f.cores(),
                    m.processed_total,
                    m.emitted_total
                )
            })
            .collect()
    }

    pub fn event_log(&self) -> Vec<Event> {
        self.shared.events.snapshot()
    }

    /// (emitted, consumed) per graph edge, indexed like `graph.edges`.
    pub fn edge_counts(&self) -> Vec<(u64, u64)> {
        self.shared
            .counters
            .emitted
            .iter()
            .zip(&self.shared.counters.consumed)
            .map(|(e, c)| (e.load(Ordering::SeqCst), c.load(Ordering::SeqCst)))
            .collect()
    }

    pub fn budget_violations(&self) -> u64 {
        self.shared
            .flakes
            .values()
            .map(|f| f.budget_violations())
            .sum()
    }

    pub fn failed_total(&self, pellet: &str) -> Result<u64, EngineError> {
        self.shared
            .flakes
            .get(pellet)
            .map(|f| f.failed_total())
            .ok_or_else(|| EngineError::UnknownPellet(pellet.to_string()))
    }

    /// Read a stateful pellet's current state object (introspection).
    pub fn peek_state(&self, pellet: &str) -> Result<Option<Vec<u8>>, EngineError> {
        self.shared
            .flakes
            .get(pellet)
            .map(|f| f.peek_state())
            .ok_or_else(|| EngineError::UnknownPellet(pellet.to_string()))
    }

    pub fn placements(&self) -> Vec<Container> {
        self.shared.containers.lock().unwrap().clone()
    }

    /// Source pellets and their in-ports, the endpoints `ingest` accepts.
    pub fn source_endpoints(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for id in &self.shared.sources {
            for port in self.shared.flakes[id].spec.in_ports() {
                out.push((id.clone(), port.name.clone()));
            }
        }
        out
    }

    /// Deterministic mode: claim-execute at most one unit of work per flake,
    /// scanning in wiring order. Returns true if anything ran.
    pub fn step(&self) -> bool {
        let mut progressed = false;
        for id in &self.shared.order {
            if self.shared.run_one(&self.shared.flakes[id]) {
                progressed = true;
            }
        }
        progressed
    }

    /// Deterministic mode: step until no flake makes progress. Returns the
    /// number of passes; stops at `max_passes` to keep cyclic flows bounded.
    pub fn run_until_quiescent(&self, max_passes: usize) -> usize {
        let mut passes = 0;
        while passes < max_passes && self.step() {
            passes += 1;
        }
        passes
    }

    fn pump_until(&self, cond: impl Fn() -> bool, cap: Duration) {
        let threaded = !self.workers.lock().unwrap().is_empty();
        let deadline = std::time::Instant::now() + cap;
        while !cond() && std::time::Instant::now() < deadline {
            if threaded {
                std::thread::sleep(Duration::from_micros(200));
            } else if !self.step() {
                // Single-threaded and no progress: nothing will change.
                break;
            }
        }
    }

    /// Stop the dataflow. With `drain`, intake closes first and flakes are
    /// drained and closed in reverse wiring order (sources before their
    /// consumers), flushing partial windows as final batches; without it,
    /// everything stops immediately. Idempotent. Returns final metrics.
    pub fn shutdown(&self, drain: bool) -> BTreeMap<String, FlakeMetrics> {
        self.shared.accepting.store(false, Ordering::SeqCst);
        if self.shared.running.load(Ordering::SeqCst) && drain {
            for id in self.shared.order.clone().iter().rev() {
                let flake = Arc::clone(&self.shared.flakes[id]);
                flake.set_flush_windows(true);
                self.shared.wake();
                self.pump_until(
                    || flake.queue_length() == 0 && flake.active() == 0,
                    self.shared.grace,
                );
                flake.close();
            }
        }
        self.shared.running.store(false, Ordering::SeqCst);
        for id in &self.shared.order {
            self.shared.flakes[id].close();
        }
        self.shared.wake();
        let workers: Vec<JoinHandle<()>> = self.workers.lock().unwrap().drain(..).collect();
        for w in workers {
            let _ = w.join();
        }
        let now = self.shared.now();
        self.shared
            .flakes
            .iter()
            .map(|(id, f)| (id.clone(), f.metrics(now)))
            .collect()
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        if self.shared.running.load(Ordering::SeqCst) {
            self.shutdown(false);
        }
    }
}

fn worker_loop(shared: Arc<Shared>, seed: usize) {
    let ids = shared.order.clone();
    let mut offset = seed;
    while shared.running.load(Ordering::SeqCst) {
        let mut progressed = false;
        for k in 0..ids.len() {
            let id = &ids[(offset + k) % ids.len()];
            if shared.run_one(&shared.flakes[id]) {
                progressed = true;
            }
        }
        offset = offset.wrapping_add(1);
        if !progressed {
            shared.wait_for_work(Duration::from_millis(1));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse::parse_graph;
    use std::sync::Arc;

    struct Identity;
    impl PelletBehavior for Identity {
        fn on_push(
            &self,
            input: WorkInput,
            ctx: &mut dyn PelletContext,
        ) -> Result<(), BehaviorError> {
            match input {
                WorkInput::Single { msg, .. } => ctx.emit("out", msg),
                WorkInput::Tuple(t) => {
                    for (_, msg) in t {
                        ctx.emit("out", msg)?;
                    }
                    Ok(())
                }
                WorkInput::Batch { msgs, .. } => {
                    // One output per full window batch: the batch size.
                    let n = msgs.len();
                    ctx.emit("out", Message::data(n.to_string()))
                }
            }
        }
    }

    struct Sink;
    impl PelletBehavior for Sink {
        fn on_push(
            &self,
            _input: WorkInput,
            _ctx: &mut dyn PelletContext,
        ) -> Result<(), BehaviorError> {
            Ok(())
        }
    }

    fn registry() -> BehaviorRegistry {
        let mut reg = BehaviorRegistry::new();
        reg.register("identity", Arc::new(Identity));
        reg.register("sink", Arc::new(Sink));
        reg
    }

    fn linear_graph() -> DataflowGraph {
        parse_graph(
            "graph t\n\
             pellet A impl=identity trigger=push\n\
             pellet B impl=sink trigger=push\n\
             port A.in in\nport A.out out\nport B.in in\n\
             edge A.out -> B.in\n",
        )
        .unwrap()
    }

    fn det_engine(graph: &DataflowGraph) -> (Engine, VirtualClock) {
        let clock = VirtualClock::new();
        let engine = Engine::deploy(
            graph,
            &registry(),
            &[8],
            EngineConfig::deterministic(clock.clone()),
        )
        .unwrap();
        (engine, clock)
    }

    #[test]
    fn deploy_rejects_unregistered_impl() {
        let graph = parse_graph(
            "graph t\npellet A impl=mystery trigger=push\nport A.in in\n",
        )
        .unwrap();
        let clock = VirtualClock::new();
        let err = Engine::deploy(
            &graph,
            &registry(),
            &[4],
            EngineConfig::deterministic(clock),
        )
        .unwrap_err();
        assert!(matches!(err, DeployError::UnregisteredImpl { .. }));
    }

    #[test]
    fn ingest_flows_through_to_sink() {
        let graph = linear_graph();
        let (engine, _clock) = det_engine(&graph);
        for i in 0..5 {
            engine
                .ingest("A", "in", Message::data(format!("m{i}")))
                .unwrap();
        }
        engine.run_until_quiescent(100);
        let a = engine.metrics("A").unwrap();
        let b = engine.metrics("B").unwrap();
        assert_eq!(a.processed_total, 5);
        assert_eq!(a.emitted_total, 5);
        assert_eq!(b.processed_total, 5);
        assert_eq!(b.queue_length, 0);
        // Edge emitted == consumed after the flow settles.
        assert_eq!(engine.edge_counts(), vec![(5, 5)]);
    }

    #[test]
    fn ingest_rejects_bad_endpoints() {
        let graph = linear_graph();
        let (engine, _clock) = det_engine(&graph);
        assert_eq!(
            engine.ingest("B", "in", Message::data("x")).unwrap_err(),
            EngineError::NotASource("B".into())
        );
        assert_eq!(
            engine.ingest("A", "zap", Message::data("x")).unwrap_err(),
            EngineError::UnknownPort("A".into(), "zap".into())
        );
        engine.shutdown(false);
        assert_eq!(
            engine.ingest("A", "in", Message::data("x")).unwrap_err(),
            EngineError::NotRunning
        );
    }

    #[test]
    fn suspended_flake_holds_messages_until_resumed() {
        let graph = linear_graph();
        let (engine, _clock) = det_engine(&graph);
        engine.set_cores("A", 0).unwrap();
        for _ in 0..3 {
            engine.ingest("A", "in", Message::data("x")).unwrap();
        }
        engine.run_until_quiescent(50);
        assert_eq!(engine.metrics("A").unwrap().queue_length, 3);
        engine.set_cores("A", 1).unwrap();
        engine.run_until_quiescent(50);
        assert_eq!(engine.metrics("A").unwrap().queue_length, 0);
        assert_eq!(engine.metrics("B").unwrap().processed_total, 3);
    }

    #[test]
    fn set_cores_respects_container_capacity() {
        let graph = linear_graph();
        let (engine, _clock) = det_engine(&graph);
        // Container of 8, two flakes at 1 core each: max for A is 7.
        assert!(engine.set_cores("A", 7).is_ok());
        let err = engine.set_cores("A", 8).unwrap_err();
        assert!(matches!(err, EngineError::ExceedsCapacity { available: 8, .. }));
    }

    #[test]
    fn count_window_fires_full_batches_and_flushes_on_drain() {
        let graph = parse_graph(
            "graph t\n\
             pellet A impl=identity trigger=push\n\
             pellet B impl=sink trigger=push\n\
             port A.in in\nport A.out out\nport B.in in\n\
             window A.in count 3\n\
             edge A.out -> B.in\n",
        )
        .unwrap();
        let (engine, _clock) = det_engine(&graph);
        for _ in 0..7 {
            engine.ingest("A", "in", Message::data("x")).unwrap();
        }
        engine.run_until_quiescent(100);
        // Two full windows fire; one message held.
        assert_eq!(engine.metrics("A").unwrap().processed_total, 6);
        assert_eq!(engine.metrics("A").unwrap().queue_length, 1);
        let final_metrics = engine.shutdown(true);
        // Drain flushes the partial window as a final batch.
        assert_eq!(final_metrics["A"].processed_total, 7);
        assert_eq!(final_metrics["A"].queue_length, 0);
        assert_eq!(final_metrics["A"].emitted_total, 3);
    }

    #[test]
    fn time_window_fires_when_width_elapses() {
        let graph = parse_graph(
            "graph t\n\
             pellet A impl=identity trigger=push\n\
             pellet B impl=sink trigger=push\n\
             port A.in in\nport A.out out\nport B.in in\n\
             window A.in time 2\n\
             edge A.out -> B.in\n",
        )
        .unwrap();
        let (engine, clock) = det_engine(&graph);
        engine.ingest("A", "in", Message::data("a")).unwrap();
        engine.ingest("A", "in", Message::data("b")).unwrap();
        engine.run_until_quiescent(20);
        assert_eq!(engine.metrics("A").unwrap().processed_total, 0, "window open");
        clock.advance(2.5);
        engine.run_until_quiescent(20);
        assert_eq!(engine.metrics("A").unwrap().processed_total, 2);
    }

    #[test]
    fn landmark_forwards_on_all_out_edges_after_drain() {
        let graph = parse_graph(
            "graph t\n\
             pellet A impl=identity trigger=push\n\
             pellet B impl=sink trigger=push\n\
             pellet C impl=sink trigger=push\n\
             port A.in in\nport A.out out\nport B.in in\nport C.in in\n\
             edge A.out -> B.in\nedge A.out -> C.in\n",
        )
        .unwrap();
        let (engine, _clock) = det_engine(&graph);
        engine.ingest("A", "in", Message::data("d1")).unwrap();
        engine.ingest("A", "in", Message::landmark("end")).unwrap();
        engine.run_until_quiescent(100);
        // Round-robin sends the data message to one sink; the landmark
        // bypasses the split and reaches both.
        let events = engine.event_log();
        let to_b: Vec<_> = edge_deliveries(&events, "A", "B").collect();
        let to_c: Vec<_> = edge_deliveries(&events, "A", "C").collect();
        let landmarks_b = to_b.iter().filter(|e| matches!(e.kind, EventKind::Deliver { kind: MessageKind::Landmark, .. })).count();
        let landmarks_c = to_c.iter().filter(|e| matches!(e.kind, EventKind::Deliver { kind: MessageKind::Landmark, .. })).count();
        assert_eq!(landmarks_b, 1);
        assert_eq!(landmarks_c, 1);
        assert_eq!(to_b.len() + to_c.len(), 3, "1 data + 2 landmark copies");
    }

    #[test]
    fn threaded_run_processes_under_budget() {
        let graph = linear_graph();
        let engine = Engine::deploy(
            &graph,
            &registry(),
            &[8],
            EngineConfig {
                workers: 4,
                ..EngineConfig::default()
            },
        )
        .unwrap();
        for i in 0..200 {
            engine
                .ingest("A", "in", Message::data(format!("m{i}")))
                .unwrap();
        }
        let final_metrics = engine.shutdown(true);
        assert_eq!(final_metrics["B"].processed_total, 200);
        assert_eq!(engine.budget_violations(), 0);
        assert_eq!(engine.edge_counts(), vec![(200, 200)]);
    }

    #[test]
    fn shutdown_is_idempotent() {
        let graph = linear_graph();
        let (engine, _clock) = det_engine(&graph);
        engine.ingest("A", "in", Message::data("x")).unwrap();
        let first = engine.shutdown(true);
        let second = engine.shutdown(true);
        assert_eq!(first["B"].processed_total, 1);
        assert_eq!(second["B"].processed_total, 1);
    }
}
