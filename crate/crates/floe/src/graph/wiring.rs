//! Activation order for deployment: downstream pellets are wired before the
//! pellets that feed them, so no message is emitted into a channel that does
//! not exist yet.

use super::DataflowGraph;
use std::collections::{HashMap, HashSet};

/// Indices (into `g.edges`) of edges classified as back-edges by a
/// depth-first traversal. Traversal starts from source pellets in
/// lexicographic order, or from the lexicographically smallest pellet when
/// the graph has no sources; any pellets left unvisited (cycles detached from
/// all sources) seed further traversals, smallest id first. An edge u -> v is
/// a back-edge iff v is on the DFS stack when the edge is examined.
pub fn back_edges(g: &DataflowGraph) -> HashSet<usize> {
    let mut out_edges: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, e) in g.edges.iter().enumerate() {
        out_edges.entry(e.from.pellet.as_str()).or_default().push(i);
    }

    let mut roots: Vec<&str> = g.source_pellets().iter().map(|p| p.id.as_str()).collect();
    roots.sort_unstable();
    if roots.is_empty() && !g.pellets.is_empty() {
        let smallest = g.pellets.iter().map(|p| p.id.as_str()).min().unwrap();
        roots.push(smallest);
    }

    let mut back = HashSet::new();
    let mut visited: HashSet<&str> = HashSet::new();
    let mut on_stack: HashSet<&str> = HashSet::new();

    // Iterative DFS; each frame tracks how many out-edges it has examined.
    fn dfs<'a>(
        root: &'a str,
        g: &'a DataflowGraph,
        out_edges: &HashMap<&str, Vec<usize>>,
        visited: &mut HashSet<&'a str>,
        on_stack: &mut HashSet<&'a str>,
        back: &mut HashSet<usize>,
    ) {
        let mut stack: Vec<(&str, usize)> = vec![(root, 0)];
        visited.insert(root);
        on_stack.insert(root);
        while let Some((node, cursor)) = stack.last_mut() {
            let edges = out_edges.get(node).map(Vec::as_slice).unwrap_or(&[]);
            if *cursor >= edges.len() {
                on_stack.remove(*node);
                stack.pop();
                continue;
            }
            let edge_idx = edges[*cursor];
            *cursor += 1;
            let target = g.edges[edge_idx].to.pellet.as_str();
            if on_stack.contains(target) {
                back.insert(edge_idx);
            } else if visited.insert(target) {
                on_stack.insert(target);
                stack.push((target, 0));
            }
        }
    }

    for root in roots {
        if !visited.contains(root) {
            dfs(root, g, &out_edges, &mut visited, &mut on_stack, &mut back);
        }
    }
    // Cycles not reachable from any source.
    loop {
        let mut rest: Vec<&str> = g
            .pellets
            .iter()
            .map(|p| p.id.as_str())
            .filter(|id| !visited.contains(id))
            .collect();
        if rest.is_empty() {
            break;
        }
        rest.sort_unstable();
        dfs(rest[0], g, &out_edges, &mut visited, &mut on_stack, &mut back);
    }
    back
}

/// Pellet ids in deployment order: sinks first, sources last.
///
/// Levels are longest-path distances to a sink over the graph minus its
/// back-edges (so a pellet always lands strictly after everything it feeds,
/// even across skip edges); ties break lexicographically.
pub fn wiring_order(g: &DataflowGraph) -> Vec<String> {
    let back = back_edges(g);
    let index: HashMap<&str, usize> = g
        .pellets
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.as_str(), i))
        .collect();

    // levels[i] = longest path from pellet i to a sink, via Kahn's algorithm
    // on the forward DAG: a pellet's level is final once all successors are.
    let n = g.pellets.len();
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut out_degree: Vec<usize> = vec![0; n];
    let mut predecessors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, e) in g.edges.iter().enumerate() {
        if back.contains(&i) {
            continue;
        }
        let (Some(&u), Some(&v)) = (
            index.get(e.from.pellet.as_str()),
            index.get(e.to.pellet.as_str()),
        ) else {
            continue;
        };
        successors[u].push(v);
        predecessors[v].push(u);
        out_degree[u] += 1;
    }

    let mut levels: Vec<u64> = vec![0; n];
    let mut ready: Vec<usize> = (0..n).filter(|&i| out_degree[i] == 0).collect();
    while let Some(v) = ready.pop() {
        for &u in &predecessors[v] {
            levels[u] = levels[u].max(levels[v] + 1);
            out_degree[u] -= 1;
            if out_degree[u] == 0 {
                ready.push(u);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        levels[a]
            .cmp(&levels[b])
            .then_with(|| g.pellets[a].id.cmp(&g.pellets[b].id))
    });
    order.into_iter().map(|i| g.pellets[i].id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::super::parse_graph;
    use super::*;

    fn order_of(text: &str) -> Vec<String> {
        wiring_order(&parse_graph(text).unwrap())
    }

    #[test]
    fn linear_chain() {
        let order = order_of(
            "graph g\n\
             pellet A impl=x\nport A.out out\n\
             pellet B impl=x\nport B.in in\nport B.out out\n\
             pellet C impl=x\nport C.in in\n\
             edge A.out -> B.in\nedge B.out -> C.in\n",
        );
        assert_eq!(order, ["C", "B", "A"]);
    }

    #[test]
    fn diamond_lexicographic_tie_break() {
        let order = order_of(
            "graph g\n\
             pellet A impl=x\nport A.out out\n\
             pellet B impl=x\nport B.in in\nport B.out out\n\
             pellet C impl=x\nport C.in in\nport C.out out\n\
             pellet D impl=x\nport D.in in\n\
             edge A.out -> B.in\nedge A.out -> C.in\n\
             edge B.out -> D.in\nedge C.out -> D.in\n",
        );
        assert_eq!(order, ["D", "B", "C", "A"]);
    }

    #[test]
    fn cycle_with_external_source() {
        // S -> A -> B -> A; back-edge B->A is ignored for ordering.
        let g = parse_graph(
            "graph g\n\
             pellet S impl=src\nport S.out out\n\
             pellet A impl=x\nport A.in in\nport A.out out\n\
             pellet B impl=x\nport B.in in\nport B.out out\n\
             edge S.out -> A.in\nedge A.out -> B.in\nedge B.out -> A.in\n",
        )
        .unwrap();
        let back = back_edges(&g);
        assert_eq!(back.len(), 1);
        assert!(back.contains(&2), "B->A is the back-edge: {back:?}");
        assert_eq!(wiring_order(&g), ["B", "A", "S"]);
    }

    #[test]
    fn skip_edge_respects_dependencies() {
        // A -> B -> C plus A -> C: A must still come after both.
        let order = order_of(
            "graph g\n\
             pellet A impl=x\nport A.out out\n\
             pellet B impl=x\nport B.in in\nport B.out out\n\
             pellet C impl=x\nport C.in in\n\
             edge A.out -> B.in\nedge B.out -> C.in\nedge A.out -> C.in\n",
        );
        assert_eq!(order, ["C", "B", "A"]);
    }

    #[test]
    fn detached_cycle_gets_ordered() {
        let g = parse_graph(
            "graph g\n\
             pellet X impl=x\nport X.in in\nport X.out out\n\
             pellet Y impl=x\nport Y.in in\nport Y.out out\n\
             edge X.out -> Y.in\nedge Y.out -> X.in\n",
        )
        .unwrap();
        let back = back_edges(&g);
        // DFS starts at X (lex smallest); Y->X is the back-edge.
        assert_eq!(back.len(), 1);
        assert!(back.contains(&1));
        assert_eq!(wiring_order(&g), ["Y", "X"]);
    }

    #[test]
    fn every_pellet_appears_once() {
        let g = parse_graph(
            "graph g\n\
             pellet A impl=x\nport A.out out\n\
             pellet B impl=x\nport B.in in\n\
             pellet Z impl=x\nport Z.in in\n\
             edge A.out -> B.in\nedge A.out -> Z.in\n",
        )
        .unwrap();
        let order = wiring_order(&g);
        assert_eq!(order.len(), 3);
        let set: std::collections::HashSet<_> = order.iter().collect();
        assert_eq!(set.len(), 3);
    }
}
