//! Bipartite client/server graphs, capacities and integral assignments.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An edge between a client and a server. Ordering is lexicographic on
/// `(client, server)`, which is the canonical iteration order everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub client: usize,
    pub server: usize,
}

impl Edge {
    pub const fn new(client: usize, server: usize) -> Self {
        Edge { client, server }
    }
}

/// A weighted bipartite graph `G = (C, S, E)` with integer client weights.
///
/// `edges` keeps the order in which the edges were supplied; that order is
/// the stream order used by [`crate::stream::EdgeStream`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphSpec {
    num_clients: usize,
    num_servers: usize,
    weights: Vec<u64>,
    edges: Vec<Edge>,
    sorted: Vec<Edge>,
}

impl GraphSpec {
    pub fn new(
        num_clients: usize,
        num_servers: usize,
        weights: Vec<u64>,
        edges: Vec<Edge>,
    ) -> Result<Self> {
        if num_clients == 0 || num_servers == 0 {
            return Err(Error::Validation(
                "a graph needs at least one client and one server".into(),
            ));
        }
        if weights.len() != num_clients {
            return Err(Error::Validation(format!(
                "{} weights given for {} clients",
                weights.len(),
                num_clients
            )));
        }
        if let Some((client, &weight)) = weights.iter().enumerate().find(|(_, &w)| w < 1) {
            return Err(Error::InvalidWeight { client, weight });
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for &e in &edges {
            if e.client >= num_clients || e.server >= num_servers {
                return Err(Error::UnknownEdge(e));
            }
            if !seen.insert(e) {
                return Err(Error::DuplicateEdge(e));
            }
        }
        let mut sorted = edges.clone();
        sorted.sort_unstable();
        Ok(GraphSpec {
            num_clients,
            num_servers,
            weights,
            edges,
            sorted,
        })
    }

    pub fn num_clients(&self) -> usize {
        self.num_clients
    }

    pub fn num_servers(&self) -> usize {
        self.num_servers
    }

    pub fn num_vertices(&self) -> usize {
        self.num_clients + self.num_servers
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn weight(&self, client: usize) -> u64 {
        self.weights[client]
    }

    /// `w(C)`.
    pub fn total_weight(&self) -> u64 {
        self.weights.iter().sum()
    }

    /// Edges in stream order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edges in ascending `(client, server)` order.
    pub fn sorted_edges(&self) -> &[Edge] {
        &self.sorted
    }

    pub fn has_edge(&self, edge: Edge) -> bool {
        self.sorted.binary_search(&edge).is_ok()
    }

    /// Servers adjacent to `client`, ascending.
    pub fn neighbors(&self, client: usize) -> &[Edge] {
        let lo = self.sorted.partition_point(|e| e.client < client);
        let hi = self.sorted.partition_point(|e| e.client <= client);
        &self.sorted[lo..hi]
    }

    pub fn client_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_clients];
        for e in &self.edges {
            deg[e.client] += 1;
        }
        deg
    }

    /// Same graph with the stream order permuted by `order` (a permutation of
    /// edge positions).
    pub fn with_edge_order(&self, order: &[usize]) -> Result<Self> {
        let edges = order
            .iter()
            .map(|&i| {
                self.edges
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("edge position {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        GraphSpec::new(self.num_clients, self.num_servers, self.weights.clone(), edges)
    }

    /// Renders the graph in the line-oriented text format read by
    /// [`crate::stream::parse_graph_str`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "p lb {} {} {}",
            self.num_clients,
            self.num_servers,
            self.edges.len()
        );
        for (c, &w) in self.weights.iter().enumerate() {
            if w != 1 {
                let _ = writeln!(out, "w {c} {w}");
            }
        }
        for e in &self.edges {
            let _ = writeln!(out, "e {} {}", e.client, e.server);
        }
        out
    }
}

/// Client capacities `κ` and server capacities `τ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CapacityProfile {
    pub client_cap: Vec<f64>,
    pub server_cap: Vec<f64>,
}

impl CapacityProfile {
    pub fn new(client_cap: Vec<f64>, server_cap: Vec<f64>) -> Result<Self> {
        let bad = client_cap
            .iter()
            .chain(&server_cap)
            .any(|&c| !(c >= 0.0) || !c.is_finite());
        if bad {
            return Err(Error::Validation(
                "capacities must be finite and nonnegative".into(),
            ));
        }
        Ok(CapacityProfile {
            client_cap,
            server_cap,
        })
    }

    /// Client capacities `κ` with the same capacity `tau` on every server.
    pub fn uniform_servers(client_cap: Vec<f64>, num_servers: usize, tau: f64) -> Result<Self> {
        Self::new(client_cap, vec![tau; num_servers])
    }

    /// Client capacities equal to the client weights, server capacity `tau`.
    pub fn weighted(weights: &[u64], num_servers: usize, tau: f64) -> Result<Self> {
        Self::uniform_servers(weights.iter().map(|&w| w as f64).collect(), num_servers, tau)
    }

    pub fn num_clients(&self) -> usize {
        self.client_cap.len()
    }

    pub fn num_servers(&self) -> usize {
        self.server_cap.len()
    }

    /// The same client capacities with every server capacity multiplied by `factor`.
    pub fn scale_servers(&self, factor: f64) -> Self {
        CapacityProfile {
            client_cap: self.client_cap.clone(),
            server_cap: self.server_cap.iter().map(|t| t * factor).collect(),
        }
    }
}

/// An integral assignment: `servers[c]` is the server client `c` is assigned to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment {
    servers: Vec<usize>,
}

impl Assignment {
    /// Builds an assignment and checks that every pair is an edge of `graph`.
    pub fn for_graph(graph: &GraphSpec, servers: Vec<usize>) -> Result<Self> {
        let a = Assignment { servers };
        a.check(graph)?;
        Ok(a)
    }

    /// Builds an assignment without validating it against a graph.
    pub fn from_servers(servers: Vec<usize>) -> Self {
        Assignment { servers }
    }

    pub fn check(&self, graph: &GraphSpec) -> Result<()> {
        if self.servers.len() != graph.num_clients() {
            return Err(Error::Validation(format!(
                "assignment covers {} clients, graph has {}",
                self.servers.len(),
                graph.num_clients()
            )));
        }
        for e in self.edges() {
            if !graph.has_edge(e) {
                return Err(Error::UnknownEdge(e));
            }
        }
        Ok(())
    }

    pub fn server_of(&self, client: usize) -> usize {
        self.servers[client]
    }

    pub fn servers(&self) -> &[usize] {
        &self.servers
    }

    pub fn num_clients(&self) -> usize {
        self.servers.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.servers
            .iter()
            .enumerate()
            .map(|(c, &s)| Edge::new(c, s))
    }

    /// `A^{-1}(s)`.
    pub fn clients_of(&self, server: usize) -> Vec<usize> {
        self.servers
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == server)
            .map(|(c, _)| c)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(nc: usize, ns: usize) -> Vec<Edge> {
        (0..nc)
            .flat_map(|c| (0..ns).map(move |s| Edge::new(c, s)))
            .collect()
    }

    #[test]
    fn rejects_duplicates_and_bad_weights() {
        let dup = vec![Edge::new(0, 0), Edge::new(0, 0)];
        assert!(matches!(
            GraphSpec::new(1, 1, vec![1], dup),
            Err(Error::DuplicateEdge(_))
        ));
        assert!(matches!(
            GraphSpec::new(1, 1, vec![0], vec![Edge::new(0, 0)]),
            Err(Error::InvalidWeight { client: 0, weight: 0 })
        ));
        assert!(matches!(
            GraphSpec::new(1, 1, vec![1], vec![Edge::new(0, 3)]),
            Err(Error::UnknownEdge(_))
        ));
    }

    #[test]
    fn neighbors_are_sorted_slices() {
        let g = GraphSpec::new(
            2,
            3,
            vec![1, 2],
            vec![Edge::new(1, 2), Edge::new(0, 1), Edge::new(1, 0)],
        )
        .unwrap();
        assert_eq!(g.neighbors(1), &[Edge::new(1, 0), Edge::new(1, 2)]);
        assert_eq!(g.neighbors(0), &[Edge::new(0, 1)]);
        assert_eq!(g.total_weight(), 3);
        assert_eq!(g.edges()[0], Edge::new(1, 2));
    }

    #[test]
    fn assignment_must_use_graph_edges() {
        let g = GraphSpec::new(2, 2, vec![1, 1], vec![Edge::new(0, 0), Edge::new(1, 1)]).unwrap();
        assert!(Assignment::for_graph(&g, vec![0, 1]).is_ok());
        assert!(matches!(
            Assignment::for_graph(&g, vec![1, 1]),
            Err(Error::UnknownEdge(e)) if e == Edge::new(0, 1)
        ));
        let a = Assignment::for_graph(&GraphSpec::new(2, 2, vec![1, 1], complete(2, 2)).unwrap(), vec![0, 0]).unwrap();
        assert_eq!(a.clients_of(0), vec![0, 1]);
    }

    #[test]
    fn text_roundtrip_keeps_stream_order() {
        let g = GraphSpec::new(2, 2, vec![2, 1], vec![Edge::new(1, 1), Edge::new(0, 0)]).unwrap();
        let back = crate::stream::parse_graph_str(&g.to_text()).unwrap().0;
        assert_eq!(back, g);
    }
}
