//! Line-oriented parser for the `.graph` format and its update fragments.
//!
//! ```text
//! graph <name>
//! pellet <id> impl=<name> trigger=push|pull [stateful] [ordered] [align] [cores=<n>] [latency=<sec>] [selectivity=<r>]
//! port <pellet>.<name> in|out
//! window <pellet>.<port> count|time <width>
//! edge <pellet>.<outport> -> <pellet>.<inport> [pull]
//! split <pellet>.<outport> duplicate|roundrobin|keyhash
//! ```
//!
//! `#` starts a comment. Unknown keywords are errors. Defaults: trigger=push,
//! transport=push, split=roundrobin when out-degree >= 2.

use super::{
    is_identifier, DataflowGraph, EdgeSpec, Endpoint, PelletSpec, PortDirection, PortSpec,
    SplitMode, SplitSpec, Transport, Trigger, WindowSpec,
};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            message: message.into(),
        }
    }
}

/// A replacement fragment for a running dataflow: pellets to remove, new
/// pellets/edges to deploy, and a mapping from old boundary ports to fragment
/// ports.
///
/// Fragments reuse the graph directives plus two of their own:
///
/// ```text
/// remove <pellet-id>
/// map <old-pellet>.<port> -> <new-pellet>.<port>
/// ```
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FragmentSpec {
    pub remove: Vec<String>,
    pub fragment: DataflowGraph,
    /// Old boundary endpoint -> replacement endpoint.
    pub port_map: Vec<(Endpoint, Endpoint)>,
}

/// Parse a complete graph file. The `graph <name>` directive must come before
/// any other directive and appear exactly once.
pub fn parse_graph(text: &str) -> Result<DataflowGraph, ParseError> {
    let mut graph = DataflowGraph::default();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let Some(tokens) = tokenize(raw) else { continue };
        if tokens[0] == "graph" {
            if saw_header {
                return Err(ParseError::new(line_no, "duplicate graph directive"));
            }
            graph.name = parse_header(line_no, &tokens)?;
            saw_header = true;
            continue;
        }
        if !saw_header {
            return Err(ParseError::new(
                line_no,
                "expected graph directive before other directives",
            ));
        }
        parse_directive(&mut graph, line_no, &tokens)?;
    }
    if !saw_header {
        return Err(ParseError::new(1, "missing graph directive"));
    }
    Ok(graph)
}

/// Parse an update fragment: graph directives without a header, plus `remove`
/// and `map` lines.
pub fn parse_fragment(text: &str) -> Result<FragmentSpec, ParseError> {
    let mut spec = FragmentSpec::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let Some(tokens) = tokenize(raw) else { continue };
        match tokens[0].as_str() {
            "graph" => {
                return Err(ParseError::new(
                    line_no,
                    "graph directive not allowed in a fragment",
                ))
            }
            "remove" => {
                if tokens.len() != 2 || !is_identifier(&tokens[1]) {
                    return Err(ParseError::new(line_no, "expected: remove <pellet-id>"));
                }
                spec.remove.push(tokens[1].clone());
            }
            "map" => {
                if tokens.len() != 4 || tokens[2] != "->" {
                    return Err(ParseError::new(
                        line_no,
                        "expected: map <pellet>.<port> -> <pellet>.<port>",
                    ));
                }
                let from = parse_endpoint(line_no, &tokens[1])?;
                let to = parse_endpoint(line_no, &tokens[3])?;
                spec.port_map.push((from, to));
            }
            _ => parse_directive(&mut spec.fragment, line_no, &tokens)?,
        }
    }
    Ok(spec)
}

/// Render a graph back to the file format. `parse_graph(serialize_graph(g))`
/// reproduces `g` exactly.
pub fn serialize_graph(g: &DataflowGraph) -> String {
    let mut out = String::new();
    out.push_str(&format!("graph {}\n", g.name));
    for p in &g.pellets {
        out.push_str(&format!("pellet {} impl={}", p.id, p.impl_name));
        if p.trigger == Trigger::Pull {
            out.push_str(" trigger=pull");
        }
        if p.stateful {
            out.push_str(" stateful");
        }
        if p.ordered {
            out.push_str(" ordered");
        }
        if p.align_inputs {
            out.push_str(" align");
        }
        if let Some(c) = p.core_hint {
            out.push_str(&format!(" cores={c}"));
        }
        if let Some(l) = p.latency_hint {
            out.push_str(&format!(" latency={l}"));
        }
        if let Some(s) = p.selectivity_hint {
            out.push_str(&format!(" selectivity={s}"));
        }
        out.push('\n');
        for port in &p.ports {
            out.push_str(&format!("port {}.{} {}\n", p.id, port.name, port.direction));
        }
        for (port, w) in &p.windows {
            match w {
                WindowSpec::Count { width } => {
                    out.push_str(&format!("window {}.{} count {}\n", p.id, port, width))
                }
                WindowSpec::Time { width_secs } => {
                    out.push_str(&format!("window {}.{} time {}\n", p.id, port, width_secs))
                }
            }
        }
    }
    for e in &g.edges {
        out.push_str(&format!("edge {} -> {}", e.from, e.to));
        if e.transport == Transport::Pull {
            out.push_str(" pull");
        }
        out.push('\n');
    }
    for s in &g.splits {
        out.push_str(&format!("split {}.{} {}\n", s.pellet, s.port, s.mode));
    }
    out
}

/// Strip comment, split on whitespace. Returns None for blank lines.
fn tokenize(raw: &str) -> Option<Vec<String>> {
    let code = match raw.find('#') {
        Some(i) => &raw[..i],
        None => raw,
    };
    let tokens: Vec<String> = code.split_whitespace().map(str::to_owned).collect();
    if tokens.is_empty() {
        None
    } else {
        Some(tokens)
    }
}

fn parse_header(line: usize, tokens: &[String]) -> Result<String, ParseError> {
    if tokens.len() != 2 || !is_identifier(&tokens[1]) {
        return Err(ParseError::new(line, "expected: graph <name>"));
    }
    Ok(tokens[1].clone())
}

fn parse_directive(
    graph: &mut DataflowGraph,
    line: usize,
    tokens: &[String],
) -> Result<(), ParseError> {
    match tokens[0].as_str() {
        "pellet" => parse_pellet(graph, line, tokens),
        "port" => parse_port(graph, line, tokens),
        "window" => parse_window(graph, line, tokens),
        "edge" => parse_edge(graph, line, tokens),
        "split" => parse_split(graph, line, tokens),
        other => Err(ParseError::new(line, format!("unknown keyword `{other}`"))),
    }
}

fn parse_pellet(
    graph: &mut DataflowGraph,
    line: usize,
    tokens: &[String],
) -> Result<(), ParseError> {
    if tokens.len() < 3 {
        return Err(ParseError::new(
            line,
            "expected: pellet <id> impl=<name> [attrs]",
        ));
    }
    let id = &tokens[1];
    if !is_identifier(id) {
        return Err(ParseError::new(line, format!("invalid pellet id `{id}`")));
    }
    let mut pellet = PelletSpec::new(id.clone(), String::new());
    for tok in &tokens[2..] {
        match tok.split_once('=') {
            Some(("impl", v)) => {
                // behavior names allow dashes (e.g. wordcount-map)
                if v.is_empty() || !v.chars().all(|c| c.is_ascii_alphanumeric() || "_-".contains(c))
                {
                    return Err(ParseError::new(line, format!("invalid impl name `{v}`")));
                }
                pellet.impl_name = v.to_owned();
            }
            Some(("trigger", "push")) => pellet.trigger = Trigger::Push,
            Some(("trigger", "pull")) => pellet.trigger = Trigger::Pull,
            Some(("trigger", v)) => {
                return Err(ParseError::new(line, format!("invalid trigger `{v}`")))
            }
            Some(("cores", v)) => {
                let n: u32 = v
                    .parse()
                    .map_err(|_| ParseError::new(line, format!("invalid cores `{v}`")))?;
                if n == 0 {
                    return Err(ParseError::new(line, "cores must be positive"));
                }
                pellet.core_hint = Some(n);
            }
            Some(("latency", v)) => {
                let l: f64 = v
                    .parse()
                    .map_err(|_| ParseError::new(line, format!("invalid latency `{v}`")))?;
                if !l.is_finite() || l < 0.0 {
                    return Err(ParseError::new(line, "latency must be non-negative"));
                }
                pellet.latency_hint = Some(l);
            }
            Some(("selectivity", v)) => {
                let s: f64 = v
                    .parse()
                    .map_err(|_| ParseError::new(line, format!("invalid selectivity `{v}`")))?;
                if !s.is_finite() || s < 0.0 {
                    return Err(ParseError::new(line, "selectivity must be >= 0"));
                }
                pellet.selectivity_hint = Some(s);
            }
            Some((k, _)) => return Err(ParseError::new(line, format!("unknown keyword `{k}`"))),
            None => match tok.as_str() {
                "stateful" => pellet.stateful = true,
                "ordered" => pellet.ordered = true,
                "align" => pellet.align_inputs = true,
                other => return Err(ParseError::new(line, format!("unknown keyword `{other}`"))),
            },
        }
    }
    if pellet.impl_name.is_empty() {
        return Err(ParseError::new(line, "pellet requires impl=<name>"));
    }
    graph.pellets.push(pellet);
    Ok(())
}

fn parse_port(graph: &mut DataflowGraph, line: usize, tokens: &[String]) -> Result<(), ParseError> {
    if tokens.len() != 3 {
        return Err(ParseError::new(line, "expected: port <pellet>.<name> in|out"));
    }
    let ep = parse_endpoint(line, &tokens[1])?;
    let direction = match tokens[2].as_str() {
        "in" => PortDirection::In,
        "out" => PortDirection::Out,
        other => {
            return Err(ParseError::new(
                line,
                format!("invalid port direction `{other}`"),
            ))
        }
    };
    let pellet = graph
        .pellets
        .iter_mut()
        .find(|p| p.id == ep.pellet)
        .ok_or_else(|| ParseError::new(line, format!("unknown pellet `{}`", ep.pellet)))?;
    pellet.ports.push(PortSpec {
        name: ep.port,
        direction,
    });
    Ok(())
}

fn parse_window(
    graph: &mut DataflowGraph,
    line: usize,
    tokens: &[String],
) -> Result<(), ParseError> {
    if tokens.len() != 4 {
        return Err(ParseError::new(
            line,
            "expected: window <pellet>.<port> count|time <width>",
        ));
    }
    let ep = parse_endpoint(line, &tokens[1])?;
    let window = match tokens[2].as_str() {
        "count" => {
            let width: u64 = tokens[3]
                .parse()
                .map_err(|_| ParseError::new(line, format!("invalid width `{}`", tokens[3])))?;
            if width == 0 {
                return Err(ParseError::new(line, "width must be positive"));
            }
            WindowSpec::Count { width }
        }
        "time" => {
            let width_secs: f64 = tokens[3]
                .parse()
                .map_err(|_| ParseError::new(line, format!("invalid width `{}`", tokens[3])))?;
            if !width_secs.is_finite() || width_secs <= 0.0 {
                return Err(ParseError::new(line, "width must be positive"));
            }
            WindowSpec::Time { width_secs }
        }
        other => {
            return Err(ParseError::new(
                line,
                format!("invalid window kind `{other}`"),
            ))
        }
    };
    let pellet = graph
        .pellets
        .iter_mut()
        .find(|p| p.id == ep.pellet)
        .ok_or_else(|| ParseError::new(line, format!("unknown pellet `{}`", ep.pellet)))?;
    if pellet.windows.insert(ep.port.clone(), window).is_some() {
        return Err(ParseError::new(
            line,
            format!("duplicate window for port `{}`", ep.port),
        ));
    }
    Ok(())
}

fn parse_edge(graph: &mut DataflowGraph, line: usize, tokens: &[String]) -> Result<(), ParseError> {
    if !(tokens.len() == 4 || tokens.len() == 5) || tokens[2] != "->" {
        return Err(ParseError::new(
            line,
            "expected: edge <pellet>.<outport> -> <pellet>.<inport> [pull]",
        ));
    }
    let from = parse_endpoint(line, &tokens[1])?;
    let to = parse_endpoint(line, &tokens[3])?;
    let transport = match tokens.get(4).map(String::as_str) {
        None => Transport::Push,
        Some("pull") => Transport::Pull,
        Some(other) => {
            return Err(ParseError::new(
                line,
                format!("invalid transport `{other}`"),
            ))
        }
    };
    graph.edges.push(EdgeSpec {
        from,
        to,
        transport,
    });
    Ok(())
}

fn parse_split(
    graph: &mut DataflowGraph,
    line: usize,
    tokens: &[String],
) -> Result<(), ParseError> {
    if tokens.len() != 3 {
        return Err(ParseError::new(
            line,
            "expected: split <pellet>.<outport> duplicate|roundrobin|keyhash",
        ));
    }
    let ep = parse_endpoint(line, &tokens[1])?;
    let mode = match tokens[2].as_str() {
        "duplicate" => SplitMode::Duplicate,
        "roundrobin" => SplitMode::RoundRobin,
        "keyhash" => SplitMode::KeyHash,
        other => {
            return Err(ParseError::new(
                line,
                format!("invalid split mode `{other}`"),
            ))
        }
    };
    graph.splits.push(SplitSpec {
        pellet: ep.pellet,
        port: ep.port,
        mode,
    });
    Ok(())
}

fn parse_endpoint(line: usize, token: &str) -> Result<Endpoint, ParseError> {
    let Some((pellet, port)) = token.split_once('.') else {
        return Err(ParseError::new(
            line,
            format!("expected <pellet>.<port>, got `{token}`"),
        ));
    };
    if !is_identifier(pellet) || !is_identifier(port) {
        return Err(ParseError::new(
            line,
            format!("expected <pellet>.<port>, got `{token}`"),
        ));
    }
    Ok(Endpoint::new(pellet, port))
}
