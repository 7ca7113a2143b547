use std::collections::BTreeSet;

use super::ModelError;

/// Directed exchange graph. An edge `(j, i)` means producer `j` may serve
/// consumer `i`. Every node carries a self-loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExchangeGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    consumers_of: Vec<Vec<usize>>,
    producers_of: Vec<Vec<usize>>,
}

impl ExchangeGraph {
    /// Builds the graph from `(producer, consumer)` pairs; self-loops are
    /// added for every node whether or not they are listed.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::InvalidGraph("graph needs at least one entity".into()));
        }
        let mut set: BTreeSet<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        for (j, i) in edges {
            if j >= n || i >= n {
                return Err(ModelError::InvalidGraph(format!(
                    "edge ({j}, {i}) has an endpoint outside [0, {n})"
                )));
            }
            set.insert((j, i));
        }
        let mut consumers_of = vec![Vec::new(); n];
        let mut producers_of = vec![Vec::new(); n];
        for &(j, i) in &set {
            consumers_of[j].push(i);
            producers_of[i].push(j);
        }
        for list in producers_of.iter_mut() {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            edges: set,
            consumers_of,
            producers_of,
        })
    }

    /// Every producer may serve every consumer.
    pub fn complete(n: usize) -> Result<Self, ModelError> {
        Self::new(n, (0..n).flat_map(|j| (0..n).map(move |i| (j, i))))
    }

    /// No exchange: each entity serves only itself.
    pub fn self_loops_only(n: usize) -> Result<Self, ModelError> {
        Self::new(n, std::iter::empty())
    }

    /// The same node set restricted to self-service.
    pub fn without_exchange(&self) -> Self {
        Self::self_loops_only(self.n).expect("n >= 1 already checked")
    }

    pub fn n_entities(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, producer: usize, consumer: usize) -> bool {
        self.edges.contains(&(producer, consumer))
    }

    /// Consumers reachable from producer `j`, ascending.
    pub fn consumers_of(&self, j: usize) -> &[usize] {
        &self.consumers_of[j]
    }

    /// Producers able to serve consumer `i`, ascending.
    pub fn producers_of(&self, i: usize) -> &[usize] {
        &self.producers_of[i]
    }

    /// Number of producers serving `i`, self-loop included.
    pub fn in_degree(&self, i: usize) -> usize {
        self.producers_of[i].len()
    }
}
