//! Layered flow network for single-commodity sustainability and an
//! Edmonds-Karp solver on real capacities.

use std::collections::VecDeque;

use super::{check_inputs_1c, FeasibilityError};
use crate::model::ExchangeGraph;

/// Residual capacities at or below this are treated as saturated.
pub const FLOW_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    pub n_nodes: usize,
    pub source: usize,
    pub sink: usize,
    pub arcs: Vec<FlowArc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxFlow {
    pub value: f64,
    /// Flow on each arc, indexed like `FlowNetwork::arcs`.
    pub arc_flows: Vec<f64>,
    /// Nodes reachable from the source in the final residual graph.
    pub source_side: Vec<bool>,
}

/// Node layout of [`build_maxflow_network`] for an economy with `n` entities:
/// source `S`, consumer layer, producer layer, sink `D`.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub n: usize,
}

impl Layout {
    pub fn source(&self) -> usize {
        0
    }
    pub fn consumer(&self, i: usize) -> usize {
        1 + i
    }
    pub fn producer(&self, j: usize) -> usize {
        1 + self.n + j
    }
    pub fn sink(&self) -> usize {
        1 + 2 * self.n
    }
}

/// `S -> i` with capacity `a_i`, `i -> j'` with capacity `a_i` for each edge
/// `(j, i)`, and `j' -> D` with capacity `b_j`. Arcs are ordered source arcs,
/// middle arcs by (consumer, producer), then sink arcs.
pub fn build_maxflow_network(
    graph: &ExchangeGraph,
    a: &[f64],
    b: &[f64],
) -> Result<FlowNetwork, FeasibilityError> {
    check_inputs_1c(graph, a, b)?;
    let n = graph.n_entities();
    let layout = Layout { n };
    let mut arcs = Vec::with_capacity(2 * n + graph.n_edges());
    for (i, &ai) in a.iter().enumerate() {
        arcs.push(FlowArc {
            from: layout.source(),
            to: layout.consumer(i),
            capacity: ai,
        });
    }
    for (i, &ai) in a.iter().enumerate() {
        for &j in graph.producers_of(i) {
            arcs.push(FlowArc {
                from: layout.consumer(i),
                to: layout.producer(j),
                capacity: ai,
            });
        }
    }
    for (j, &bj) in b.iter().enumerate() {
        arcs.push(FlowArc {
            from: layout.producer(j),
            to: layout.sink(),
            capacity: bj,
        });
    }
    Ok(FlowNetwork {
        n_nodes: 2 * n + 2,
        source: layout.source(),
        sink: layout.sink(),
        arcs,
    })
}

/// Maximum source-sink flow by shortest augmenting paths.
pub fn max_flow(net: &FlowNetwork) -> Result<MaxFlow, FeasibilityError> {
    if net.source >= net.n_nodes || net.sink >= net.n_nodes || net.source == net.sink {
        return Err(FeasibilityError::InvalidInput("bad source or sink".into()));
    }
    for (e, arc) in net.arcs.iter().enumerate() {
        if arc.from >= net.n_nodes || arc.to >= net.n_nodes {
            return Err(FeasibilityError::InvalidInput(format!("arc {e} leaves the node set")));
        }
        if !arc.capacity.is_finite() || arc.capacity < 0.0 {
            return Err(FeasibilityError::InvalidInput(format!(
                "arc {e} capacity must be finite and >= 0"
            )));
        }
    }

    // Residual edges come in pairs: 2e forward, 2e + 1 backward.
    let mut to = Vec::with_capacity(2 * net.arcs.len());
    let mut residual = Vec::with_capacity(2 * net.arcs.len());
    let mut adj = vec![Vec::new(); net.n_nodes];
    for arc in &net.arcs {
        adj[arc.from].push(to.len());
        to.push(arc.to);
        residual.push(arc.capacity);
        adj[arc.to].push(to.len());
        to.push(arc.from);
        residual.push(0.0);
    }

    let mut value = 0.0;
    let mut parent_edge = vec![usize::MAX; net.n_nodes];
    loop {
        parent_edge.iter_mut().for_each(|p| *p = usize::MAX);
        let mut seen = vec![false; net.n_nodes];
        seen[net.source] = true;
        let mut queue = VecDeque::from([net.source]);
        while let Some(u) = queue.pop_front() {
            if u == net.sink {
                break;
            }
            for &e in &adj[u] {
                let v = to[e];
                if !seen[v] && residual[e] > FLOW_EPS {
                    seen[v] = true;
                    parent_edge[v] = e;
                    queue.push_back(v);
                }
            }
        }
        if !seen[net.sink] {
            let arc_flows = net
                .arcs
                .iter()
                .enumerate()
                .map(|(e, arc)| (arc.capacity - residual[2 * e]).max(0.0))
                .collect();
            return Ok(MaxFlow {
                value,
                arc_flows,
                source_side: seen,
            });
        }
        let mut bottleneck = f64::INFINITY;
        let mut v = net.sink;
        while v != net.source {
            let e = parent_edge[v];
            bottleneck = bottleneck.min(residual[e]);
            v = to[e ^ 1];
        }
        let mut v = net.sink;
        while v != net.source {
            let e = parent_edge[v];
            residual[e] -= bottleneck;
            residual[e ^ 1] += bottleneck;
            v = to[e ^ 1];
        }
        value += bottleneck;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2() -> ExchangeGraph {
        ExchangeGraph::complete(2).unwrap()
    }

    #[test]
    fn layered_network_shape() {
        let net = build_maxflow_network(&fig2(), &[2.4, 2.4], &[2.0, 3.0]).unwrap();
        assert_eq!(net.n_nodes, 6);
        assert_eq!(net.arcs.len(), 8);
        let l = Layout { n: 2 };
        assert_eq!(net.arcs[0], FlowArc { from: 0, to: l.consumer(0), capacity: 2.4 });
        assert_eq!(net.arcs[1], FlowArc { from: 0, to: l.consumer(1), capacity: 2.4 });
        let middle: Vec<_> = net.arcs[2..6].iter().map(|a| (a.from, a.to, a.capacity)).collect();
        assert_eq!(
            middle,
            vec![
                (l.consumer(0), l.producer(0), 2.4),
                (l.consumer(0), l.producer(1), 2.4),
                (l.consumer(1), l.producer(0), 2.4),
                (l.consumer(1), l.producer(1), 2.4),
            ]
        );
        assert_eq!(net.arcs[6], FlowArc { from: l.producer(0), to: l.sink(), capacity: 2.0 });
        assert_eq!(net.arcs[7], FlowArc { from: l.producer(1), to: l.sink(), capacity: 3.0 });
    }

    #[test]
    fn self_loops_give_a_perfect_matching() {
        let g = ExchangeGraph::self_loops_only(3).unwrap();
        let net = build_maxflow_network(&g, &[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap();
        let l = Layout { n: 3 };
        let middle: Vec<_> = net.arcs[3..6].iter().map(|a| (a.from, a.to)).collect();
        assert_eq!(
            middle,
            (0..3).map(|i| (l.consumer(i), l.producer(i))).collect::<Vec<_>>()
        );
    }

    #[test]
    fn single_entity_chain() {
        let g = ExchangeGraph::self_loops_only(1).unwrap();
        let net = build_maxflow_network(&g, &[1.5], &[1.0]).unwrap();
        assert_eq!(net.n_nodes, 4);
        assert_eq!(net.arcs.len(), 3);
        assert!((max_flow(&net).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fig2_flow_values() {
        let f = max_flow(&build_maxflow_network(&fig2(), &[2.4, 2.4], &[2.0, 3.0]).unwrap()).unwrap();
        assert!((f.value - 4.8).abs() < 1e-9);
        let f = max_flow(&build_maxflow_network(&fig2(), &[2.6, 2.6], &[2.0, 3.0]).unwrap()).unwrap();
        assert!((f.value - 5.0).abs() < 1e-9);
        let f = max_flow(&build_maxflow_network(&fig2(), &[0.0, 0.0], &[0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(f.value, 0.0);
    }

    #[test]
    fn flow_is_conserved_and_capacity_feasible() {
        let g = ExchangeGraph::new(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        let net = build_maxflow_network(&g, &[1.0, 2.5, 0.7], &[1.2, 0.4, 3.0]).unwrap();
        let f = max_flow(&net).unwrap();
        let mut balance = vec![0.0; net.n_nodes];
        for (arc, &fl) in net.arcs.iter().zip(&f.arc_flows) {
            assert!(fl >= 0.0 && fl <= arc.capacity + 1e-12);
            balance[arc.from] -= fl;
            balance[arc.to] += fl;
        }
        for (v, b) in balance.iter().enumerate() {
            if v != net.source && v != net.sink {
                assert!(b.abs() < 1e-9, "node {v} imbalance {b}");
            }
        }
        assert!((balance[net.sink] - f.value).abs() < 1e-9);
    }
}
