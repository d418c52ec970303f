//! Dataflow graph description: pellets, ports, edges, split annotations.
//!
//! A graph is parsed from the line-oriented `.graph` format (see [`parse_graph`]),
//! validated ([`validate_graph`]) and given an activation order ([`wiring_order`])
//! before it can be deployed.

mod parse;
mod validate;
mod wiring;

pub use parse::{parse_fragment, parse_graph, serialize_graph, FragmentSpec, ParseError};
pub use validate::{validate_graph, Diagnostic, Severity, ValidationReport};
pub use wiring::{back_edges, wiring_order};

use std::collections::BTreeMap;
use std::fmt;

/// Direction of a pellet port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PortDirection {
    In,
    Out,
}

impl fmt::Display for PortDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortDirection::In => write!(f, "in"),
            PortDirection::Out => write!(f, "out"),
        }
    }
}

/// A named input or output port on a pellet.
#[derive(Debug, Clone, PartialEq)]
pub struct PortSpec {
    pub name: String,
    pub direction: PortDirection,
}

/// How a pellet is triggered on incoming messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Trigger {
    /// The framework invokes the pellet once per message (or tuple, or window batch).
    #[default]
    Push,
    /// The pellet iterates over its input stream in a long-running instance.
    Pull,
}

/// Message batching window attached to an input port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowSpec {
    /// Fires a batch every `width` messages.
    Count { width: u64 },
    /// Fires a batch of all messages that arrived within `width_secs` of the
    /// first buffered message, once that much time has elapsed.
    Time { width_secs: f64 },
}

/// One task vertex of the dataflow graph.
#[derive(Debug, Clone, PartialEq)]
pub struct PelletSpec {
    pub id: String,
    /// Registered behavior name this pellet runs.
    pub impl_name: String,
    pub trigger: Trigger,
    pub stateful: bool,
    /// Sequential execution: the pellet's flake runs at most one instance so
    /// output order matches input order.
    pub ordered: bool,
    /// Synchronous merge: one message per input port is aligned into a tuple.
    pub align_inputs: bool,
    pub ports: Vec<PortSpec>,
    /// Optional window per input port.
    pub windows: BTreeMap<String, WindowSpec>,
    pub core_hint: Option<u32>,
    /// Seconds of processing per message for a single instance.
    pub latency_hint: Option<f64>,
    /// Output messages emitted per input message.
    pub selectivity_hint: Option<f64>,
}

impl PelletSpec {
    /// Minimal pellet with defaults (push trigger, stateless, unordered).
    pub fn new(id: impl Into<String>, impl_name: impl Into<String>) -> Self {
        PelletSpec {
            id: id.into(),
            impl_name: impl_name.into(),
            trigger: Trigger::Push,
            stateful: false,
            ordered: false,
            align_inputs: false,
            ports: Vec::new(),
            windows: BTreeMap::new(),
            core_hint: None,
            latency_hint: None,
            selectivity_hint: None,
        }
    }

    pub fn with_port(mut self, name: impl Into<String>, direction: PortDirection) -> Self {
        self.ports.push(PortSpec {
            name: name.into(),
            direction,
        });
        self
    }

    pub fn port(&self, name: &str, direction: PortDirection) -> Option<&PortSpec> {
        self.ports
            .iter()
            .find(|p| p.name == name && p.direction == direction)
    }

    pub fn in_ports(&self) -> impl Iterator<Item = &PortSpec> {
        self.ports
            .iter()
            .filter(|p| p.direction == PortDirection::In)
    }

    pub fn out_ports(&self) -> impl Iterator<Item = &PortSpec> {
        self.ports
            .iter()
            .filter(|p| p.direction == PortDirection::Out)
    }
}

/// One endpoint of an edge: a pellet id plus a port name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub pellet: String,
    pub port: String,
}

impl Endpoint {
    pub fn new(pellet: impl Into<String>, port: impl Into<String>) -> Self {
        Endpoint {
            pellet: pellet.into(),
            port: port.into(),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.pellet, self.port)
    }
}

/// How messages travel along an edge: pushed by the source or retrieved by the
/// sink. The in-process channel treats both the same; the annotation is kept
/// for composition-time intent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transport {
    #[default]
    Push,
    Pull,
}

/// A directed data channel from an out-port to an in-port.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub from: Endpoint,
    pub to: Endpoint,
    pub transport: Transport,
}

/// Edge-selection strategy when an out-port fans out to several edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Every outgoing edge receives a copy.
    Duplicate,
    /// Exactly one edge receives the message, rotating per message.
    RoundRobin,
    /// Exactly one edge receives the message, chosen by a hash of its key.
    KeyHash,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitMode::Duplicate => write!(f, "duplicate"),
            SplitMode::RoundRobin => write!(f, "roundrobin"),
            SplitMode::KeyHash => write!(f, "keyhash"),
        }
    }
}

/// Split annotation for one out-port.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub pellet: String,
    pub port: String,
    pub mode: SplitMode,
}

/// A parsed dataflow graph. Structure only; semantic checks live in
/// [`validate_graph`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataflowGraph {
    pub name: String,
    pub pellets: Vec<PelletSpec>,
    pub edges: Vec<EdgeSpec>,
    pub splits: Vec<SplitSpec>,
}

impl DataflowGraph {
    pub fn pellet(&self, id: &str) -> Option<&PelletSpec> {
        self.pellets.iter().find(|p| p.id == id)
    }

    /// Declared split mode for an out-port, or the default: round-robin.
    pub fn split_mode(&self, pellet: &str, port: &str) -> SplitMode {
        self.splits
            .iter()
            .find(|s| s.pellet == pellet && s.port == port)
            .map(|s| s.mode)
            .unwrap_or(SplitMode::RoundRobin)
    }

    /// Edges leaving `pellet`.`port`, in declaration order.
    pub fn edges_from<'a>(
        &'a self,
        pellet: &'a str,
        port: &'a str,
    ) -> impl Iterator<Item = (usize, &'a EdgeSpec)> + 'a {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.from.pellet == pellet && e.from.port == port)
    }

    /// Edges entering `pellet`.`port`, in declaration order.
    pub fn edges_into<'a>(
        &'a self,
        pellet: &'a str,
        port: &'a str,
    ) -> impl Iterator<Item = (usize, &'a EdgeSpec)> + 'a {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.to.pellet == pellet && e.to.port == port)
    }

    /// Pellets with no inbound edges: the ingest endpoints of the dataflow.
    pub fn source_pellets(&self) -> Vec<&PelletSpec> {
        self.pellets
            .iter()
            .filter(|p| !self.edges.iter().any(|e| e.to.pellet == p.id))
            .collect()
    }
}

/// `[A-Za-z_][A-Za-z0-9_]*`
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifier_syntax() {
        assert!(is_identifier("I0"));
        assert!(is_identifier("_x9"));
        assert!(!is_identifier("9x"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("a-b"));
    }

    #[test]
    fn default_split_is_round_robin() {
        let g = DataflowGraph::default();
        assert_eq!(g.split_mode("a", "out"), SplitMode::RoundRobin);
    }
}
