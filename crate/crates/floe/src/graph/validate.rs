//! Semantic checks over a parsed graph. All findings are collected into a
//! report; nothing short-circuits.

use super::{DataflowGraph, PortDirection, SplitMode, Trigger};
use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Error => write!(f, "error"),
            Severity::Warning => write!(f, "warning"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    /// What the finding is about, e.g. `pellet B` or `edge A.out -> B.in`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.severity, self.location, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    /// True iff no error-severity diagnostics.
    pub fn ok(&self) -> bool {
        self.diagnostics
            .iter()
            .all(|d| d.severity != Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
    }

    fn error(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.diagnostics.push(Diagnostic {
            severity: Severity::Error,
            location: location.into(),
            message: message.into(),
        });
    }

    fn warning(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.diagnostics.push(Diagnostic {
            severity: Severity::Warning,
            location: location.into(),
            message: message.into(),
        });
    }
}

pub fn validate_graph(g: &DataflowGraph) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut seen_ids = HashSet::new();
    for p in &g.pellets {
        let loc = format!("pellet {}", p.id);
        if !seen_ids.insert(p.id.as_str()) {
            report.error(&loc, "duplicate pellet id");
        }
        if p.ports.is_empty() {
            report.error(&loc, "pellet declares no ports");
        }
        if p.trigger == Trigger::Push && p.stateful {
            report.error(&loc, "push pellets are implicitly stateless");
        }
        let mut seen_ports = HashSet::new();
        for port in &p.ports {
            if !seen_ports.insert((port.name.as_str(), port.direction)) {
                report.error(
                    format!("port {}.{}", p.id, port.name),
                    format!("duplicate {} port", port.direction),
                );
            }
        }
        for wport in p.windows.keys() {
            if p.port(wport, PortDirection::In).is_none() {
                report.error(
                    format!("window {}.{}", p.id, wport),
                    "window must reference a declared input port",
                );
            }
        }
        if p.align_inputs && !p.windows.is_empty() {
            report.warning(&loc, "align takes precedence over windows on this pellet");
        }
    }

    for e in &g.edges {
        let loc = format!("edge {} -> {}", e.from, e.to);
        match g.pellet(&e.from.pellet) {
            None => report.error(&loc, format!("unknown pellet `{}`", e.from.pellet)),
            Some(p) => {
                if p.port(&e.from.port, PortDirection::Out).is_none() {
                    report.error(&loc, format!("`{}` is not a declared output port", e.from));
                }
            }
        }
        match g.pellet(&e.to.pellet) {
            None => report.error(&loc, format!("unknown pellet `{}`", e.to.pellet)),
            Some(p) => {
                if p.port(&e.to.port, PortDirection::In).is_none() {
                    report.error(&loc, format!("`{}` is not a declared input port", e.to));
                }
            }
        }
    }

    for s in &g.splits {
        let loc = format!("split {}.{}", s.pellet, s.port);
        let declared = g
            .pellet(&s.pellet)
            .and_then(|p| p.port(&s.port, PortDirection::Out))
            .is_some();
        if !declared {
            report.error(
                &loc,
                format!("`{}.{}` is not a declared output port", s.pellet, s.port),
            );
            continue;
        }
        let fan_out = g.edges_from(&s.pellet, &s.port).count();
        match s.mode {
            SplitMode::KeyHash => {
                if fan_out == 0 {
                    report.error(&loc, "keyhash split requires at least one outgoing edge");
                } else {
                    report.warning(&loc, "keyhash requires message keys; checked at runtime");
                }
            }
            SplitMode::Duplicate | SplitMode::RoundRobin => {
                if fan_out < 2 {
                    report.warning(
                        &loc,
                        format!("{} split has no effect at fan-out {fan_out}", s.mode),
                    );
                }
            }
        }
    }

    // Reachability from source pellets (forward BFS). Skipped when the graph
    // has no sources at all: a fully cyclic graph is legal and has no natural
    // ingest point to start from.
    let sources = g.source_pellets();
    if !sources.is_empty() {
        let mut adjacency: HashMap<&str, Vec<&str>> = HashMap::new();
        for e in &g.edges {
            adjacency
                .entry(e.from.pellet.as_str())
                .or_default()
                .push(e.to.pellet.as_str());
        }
        let mut reached: HashSet<&str> = HashSet::new();
        let mut queue: VecDeque<&str> = sources.iter().map(|p| p.id.as_str()).collect();
        reached.extend(queue.iter().copied());
        while let Some(id) = queue.pop_front() {
            for next in adjacency.get(id).into_iter().flatten() {
                if reached.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        for p in &g.pellets {
            if !reached.contains(p.id.as_str()) {
                report.warning(
                    format!("pellet {}", p.id),
                    "unreachable from any source pellet",
                );
            }
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::super::parse_graph;
    use super::*;

    fn validate(text: &str) -> ValidationReport {
        validate_graph(&parse_graph(text).unwrap())
    }

    #[test]
    fn valid_graph_is_ok() {
        let report = validate(
            "graph g\npellet A impl=x\nport A.out out\npellet B impl=y\nport B.in in\nedge A.out -> B.in\n",
        );
        assert!(report.ok(), "{:?}", report.diagnostics);
    }

    #[test]
    fn dangling_port_reference() {
        let report = validate(
            "graph g\npellet A impl=x\nport A.out out\npellet B impl=y\nport B.in in\nedge A.out -> B.q\n",
        );
        assert!(!report.ok());
        let err = report.errors().next().unwrap();
        assert!(err.location.contains("B.q"));
        assert!(err.message.contains("not a declared input port"));
    }

    #[test]
    fn push_stateful_rejected() {
        let report = validate("graph g\npellet A impl=x stateful\nport A.in in\n");
        assert!(!report.ok());
        assert!(report
            .errors()
            .any(|d| d.message == "push pellets are implicitly stateless"));
    }

    #[test]
    fn pull_stateful_allowed() {
        let report = validate("graph g\npellet A impl=x trigger=pull stateful\nport A.in in\n");
        assert!(report.ok(), "{:?}", report.diagnostics);
    }

    #[test]
    fn cycle_is_legal() {
        let report = validate(
            "graph g\n\
             pellet A impl=x\nport A.in in\nport A.out out\n\
             pellet B impl=y\nport B.in in\nport B.out out\n\
             edge A.out -> B.in\nedge B.out -> A.in\n",
        );
        assert!(report.ok(), "{:?}", report.diagnostics);
    }

    #[test]
    fn duplicate_pellet_id() {
        let report = validate("graph g\npellet A impl=x\nport A.in in\npellet A impl=y\n");
        assert!(report.errors().any(|d| d.message == "duplicate pellet id"));
    }

    #[test]
    fn keyhash_warning_and_fanout_error() {
        let report = validate(
            "graph g\npellet A impl=x\nport A.out out\npellet B impl=y\nport B.in in\n\
             edge A.out -> B.in\nsplit A.out keyhash\n",
        );
        assert!(report.ok());
        assert!(report
            .diagnostics
            .iter()
            .any(|d| d.severity == Severity::Warning && d.message.contains("keys")));

        let report = validate("graph g\npellet A impl=x\nport A.out out\nsplit A.out keyhash\n");
        assert!(report
            .errors()
            .any(|d| d.message.contains("at least one outgoing edge")));
    }

    #[test]
    fn unreachable_pellet_warning() {
        let report = validate(
            "graph g\npellet S impl=src\nport S.out out\npellet A impl=x\nport A.in in\n\
             edge S.out -> A.in\n\
             pellet L1 impl=x\nport L1.in in\nport L1.out out\n\
             pellet L2 impl=y\nport L2.in in\nport L2.out out\n\
             edge L1.out -> L2.in\nedge L2.out -> L1.in\n",
        );
        assert!(report.ok());
        let unreachable: Vec<_> = report
            .diagnostics
            .iter()
            .filter(|d| d.message.contains("unreachable"))
            .collect();
        assert_eq!(unreachable.len(), 2);
    }

    #[test]
    fn repeated_validation_identical() {
        let g = parse_graph("graph g\npellet A impl=x stateful\nport A.in in\n").unwrap();
        assert_eq!(validate_graph(&g), validate_graph(&g));
    }
}
