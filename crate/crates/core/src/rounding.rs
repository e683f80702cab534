//! From the averaged MWU output to an integral assignment.
//!
//! [`normalize_clients`] turns `z̄` (every client covered to at least
//! `1 - ε`) into an exact fractional assignment, and [`lst_round`] rounds a
//! fractional assignment so that every server gains at most one extra
//! client: `‖L_A‖_p <= ‖L_z‖_p + ‖w‖_p` for every `p`.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph::{Assignment, Edge};
use crate::load::fractional_loads;
use crate::vector::{SparseEdgeVector, TOL};

/// Entries at or below this value are treated as zero.
const ZERO: f64 = 1e-12;

/// `z(cs) = z̄(cs) / z̄(δ(c))`, so that every client sums to exactly 1.
pub fn normalize_clients(z_bar: &SparseEdgeVector, eps: f64) -> Result<SparseEdgeVector> {
    let floor = 1.0 - eps - TOL;
    if let Some((c, &cov)) = z_bar
        .client_sums()
        .iter()
        .enumerate()
        .find(|(_, &cov)| cov < floor)
    {
        return Err(Error::Precondition(format!(
            "client {c} is covered to {cov}, below 1 - eps"
        )));
    }
    Ok(z_bar.map_values(|e, v| v / z_bar.client_sum(e.client)))
}

#[derive(Clone, Debug)]
pub struct RoundingOutcome {
    pub assignment: Assignment,
    /// The fractional assignment after cycle cancellation; its support is a forest.
    pub forest: SparseEdgeVector,
    pub cycles_cancelled: usize,
    /// Largest change of any server load caused by cycle cancellation.
    pub max_load_drift: f64,
}

/// Rounds a fractional assignment.
///
/// Cycles in the support are cancelled by moving mass around them in a way
/// that keeps every client sum and every server load fixed, until the
/// support is a forest. Each tree is then rooted at a server; clients with a
/// single support edge keep it, and every fractional client goes to its
/// lowest-index child server.
pub fn lst_round(z: &SparseEdgeVector, weights: &[u64]) -> Result<RoundingOutcome> {
    let nc = z.num_clients();
    if weights.len() != nc {
        return Err(Error::Validation("one weight per client is required".into()));
    }
    if let Some((c, &s)) = z
        .client_sums()
        .iter()
        .enumerate()
        .find(|(_, &s)| (s - 1.0).abs() > TOL)
    {
        return Err(Error::Precondition(format!(
            "client {c} sums to {s}, not 1; input is not a fractional assignment"
        )));
    }
    let before = fractional_loads(z, weights);
    let mut forest = Forest::new(nc, z.num_servers());
    let mut cycles_cancelled = 0;
    for (e, v) in z.iter() {
        if v <= ZERO {
            continue;
        }
        if forest.add_or_cancel(e, v, weights) {
            cycles_cancelled += 1;
        }
    }
    let forest_vec = forest.to_vector();
    let after = fractional_loads(&forest_vec, weights);
    let max_load_drift = before
        .as_slice()
        .iter()
        .zip(after.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let assignment = forest.round();
    Ok(RoundingOutcome {
        assignment,
        forest: forest_vec,
        cycles_cancelled,
        max_load_drift,
    })
}

/// The support graph kept acyclic as edges arrive. Vertices are clients
/// `0..nc` followed by servers `nc..nc+ns`.
struct Forest {
    nc: usize,
    ns: usize,
    adj: Vec<Vec<(usize, f64)>>,
}

impl Forest {
    fn new(nc: usize, ns: usize) -> Self {
        Forest {
            nc,
            ns,
            adj: vec![Vec::new(); nc + ns],
        }
    }

    fn value(&self, a: usize, b: usize) -> f64 {
        self.adj[a]
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, v)| v)
            .unwrap_or(0.0)
    }

    fn set(&mut self, a: usize, b: usize, v: f64) {
        for (x, y) in [(a, b), (b, a)] {
            if v <= ZERO {
                self.adj[x].retain(|&(n, _)| n != y);
            } else if let Some(slot) = self.adj[x].iter_mut().find(|(n, _)| *n == y) {
                slot.1 = v;
            } else {
                self.adj[x].push((y, v));
            }
        }
    }

    /// Tree path from `from` to `to`, as a vertex list, if connected.
    fn path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let mut prev = vec![usize::MAX; self.adj.len()];
        prev[from] = from;
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            if u == to {
                let mut path = vec![to];
                let mut cur = to;
                while cur != from {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for &(n, _) in &self.adj[u] {
                if prev[n] == usize::MAX {
                    prev[n] = u;
                    queue.push_back(n);
                }
            }
        }
        None
    }

    /// Inserts edge `e` with value `v`. If it closes a cycle, mass is shifted
    /// around the cycle until some edge reaches zero. Returns whether a cycle
    /// was cancelled.
    fn add_or_cancel(&mut self, e: Edge, v: f64, weights: &[u64]) -> bool {
        let (c, s) = (e.client, self.nc + e.server);
        let Some(path) = self.path(s, c) else {
            self.set(c, s, v);
            return false;
        };
        self.set(c, s, v);
        // Cycle c -> s -> ... -> c. Walking it, edges alternate between
        // increasing and decreasing; a client's two cycle edges move by the
        // same z amount, a server's two cycle edges by the same mass amount.
        let mut cycle = vec![c];
        cycle.extend(path);
        let edges: Vec<(usize, usize)> = cycle.windows(2).map(|w| (w[0], w[1])).collect();
        let nc = self.nc;
        let client_of = move |a: usize, b: usize| if a < nc { a } else { b };
        // Edge 0 (c, s) decreases, edge 1 increases, and so on. Moving mass
        // `u` changes edge (c', s') by `u / w(c')`.
        let u = edges
            .iter()
            .step_by(2)
            .map(|&(a, b)| self.value(a, b) * weights[client_of(a, b)] as f64)
            .fold(f64::INFINITY, f64::min);
        for (idx, &(a, b)) in edges.iter().enumerate() {
            let cl = client_of(a, b);
            let delta = u / weights[cl] as f64;
            let old = self.value(a, b);
            let new = if idx % 2 == 0 { old - delta } else { old + delta };
            self.set(a, b, if new <= ZERO { 0.0 } else { new });
        }
        true
    }

    fn to_vector(&self) -> SparseEdgeVector {
        let mut entries = Vec::new();
        for c in 0..self.nc {
            for &(n, v) in &self.adj[c] {
                entries.push((Edge::new(c, n - self.nc), v));
            }
        }
        entries.sort_unstable_by_key(|&(e, _)| e);
        SparseEdgeVector::from_sorted_unchecked(self.nc, self.ns, entries)
    }

    fn round(&self) -> Assignment {
        let mut servers = vec![usize::MAX; self.nc];
        let mut seen = vec![false; self.adj.len()];
        for root in self.nc..self.nc + self.ns {
            if seen[root] {
                continue;
            }
            seen[root] = true;
            let mut queue = VecDeque::from([root]);
            while let Some(u) = queue.pop_front() {
                let mut children: Vec<usize> = self.adj[u]
                    .iter()
                    .map(|&(n, _)| n)
                    .filter(|&n| !seen[n])
                    .collect();
                children.sort_unstable();
                if u < self.nc {
                    let server = if self.adj[u].len() == 1 {
                        self.adj[u][0].0
                    } else {
                        children[0]
                    };
                    servers[u] = server - self.nc;
                }
                for n in children {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        debug_assert!(servers.iter().all(|&s| s != usize::MAX));
        Assignment::from_servers(servers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::load::{lp_norm, weight_norm, NormOrder};
    use proptest::prelude::*;

    fn vec_of(nc: usize, ns: usize, entries: &[((usize, usize), f64)]) -> SparseEdgeVector {
        SparseEdgeVector::from_entries(nc, ns, entries.iter().map(|&((c, s), v)| (Edge::new(c, s), v)))
            .unwrap()
    }

    #[test]
    fn normalize_examples() {
        let z = vec_of(1, 2, &[((0, 0), 0.25), ((0, 1), 0.75)]);
        assert_eq!(normalize_clients(&z, 0.0625).unwrap(), z);

        let z = vec_of(1, 2, &[((0, 0), 0.5), ((0, 1), 0.45)]);
        let n = normalize_clients(&z, 0.0625).unwrap();
        assert!((n.get(Edge::new(0, 0)) - 0.5 / 0.95).abs() < 1e-12);
        assert!((n.client_sum(0) - 1.0).abs() < 1e-12);

        let low = vec_of(1, 1, &[((0, 0), 0.9)]);
        assert!(matches!(normalize_clients(&low, 0.0625), Err(Error::Precondition(_))));
        let edge = vec_of(1, 1, &[((0, 0), 15.0 / 16.0)]);
        let n = normalize_clients(&edge, 0.0625).unwrap();
        assert!((n.get(Edge::new(0, 0)) / edge.get(Edge::new(0, 0)) - 16.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn integral_input_is_unchanged() {
        let z = vec_of(3, 2, &[((0, 0), 1.0), ((1, 1), 1.0), ((2, 0), 1.0)]);
        let out = lst_round(&z, &[1, 2, 3]).unwrap();
        assert_eq!(out.assignment.servers(), &[0, 1, 0]);
        assert_eq!(out.cycles_cancelled, 0);
    }

    #[test]
    fn one_fractional_client() {
        let z = vec_of(1, 2, &[((0, 0), 0.5), ((0, 1), 0.5)]);
        let out = lst_round(&z, &[3]).unwrap();
        let s = out.assignment.server_of(0);
        assert!(s == 0 || s == 1);
    }

    #[test]
    fn three_half_split_clients() {
        let z = vec_of(
            3,
            2,
            &[((0, 0), 0.5), ((0, 1), 0.5), ((1, 0), 0.5), ((1, 1), 0.5), ((2, 0), 0.5), ((2, 1), 0.5)],
        );
        let w = [1, 1, 1];
        let out = lst_round(&z, &w).unwrap();
        assert!(out.cycles_cancelled >= 1);
        assert!(out.max_load_drift <= 1e-9);
        let mut loads = [0.0f64; 2];
        for (c, &s) in out.assignment.servers().iter().enumerate() {
            loads[s] += w[c] as f64;
        }
        let max = loads[0].max(loads[1]);
        assert!(max <= 2.5);
        assert!(max <= 2.0);
    }

    #[test]
    fn rejects_non_assignments() {
        let z = vec_of(1, 2, &[((0, 0), 0.5), ((0, 1), 0.4)]);
        assert!(matches!(lst_round(&z, &[1]), Err(Error::Precondition(_))));
    }

    fn fractional_assignment() -> impl Strategy<Value = (SparseEdgeVector, Vec<u64>)> {
        (1usize..7, 1usize..5).prop_flat_map(|(nc, ns)| {
            (
                prop::collection::vec(prop::collection::vec(0.0f64..1.0, ns), nc),
                prop::collection::vec(1u64..5, nc),
                prop::collection::vec(0usize..ns, nc),
            )
                .prop_map(move |(raw, weights, forced)| {
                    let mut entries = vec![];
                    for (c, row) in raw.iter().enumerate() {
                        let mut row = row.clone();
                        row[forced[c]] += 0.1;
                        let mut row: Vec<f64> = row.iter().map(|&v| if v < 0.3 { 0.0 } else { v }).collect();
                        if row.iter().all(|&v| v == 0.0) {
                            row[forced[c]] = 1.0;
                        }
                        let sum: f64 = row.iter().sum();
                        for (s, v) in row.iter().enumerate() {
                            if *v > 0.0 {
                                entries.push((Edge::new(c, s), v / sum));
                            }
                        }
                    }
                    (SparseEdgeVector::from_entries(nc, ns, entries).unwrap(), weights)
                })
        })
    }

    proptest! {
        #[test]
        fn rounding_is_additive_in_every_norm((z, w) in fractional_assignment()) {
            let out = lst_round(&z, &w).unwrap();
            prop_assert!(out.max_load_drift <= 1e-9);
            for c in 0..z.num_clients() {
                prop_assert!(z.get(Edge::new(c, out.assignment.server_of(c))) > 0.0);
                prop_assert!((out.forest.client_sum(c) - 1.0).abs() <= 1e-9);
            }
            let lz = fractional_loads(&z, &w);
            let a = SparseEdgeVector::from_edges(z.num_clients(), z.num_servers(), out.assignment.edges(), |_| 1.0).unwrap();
            let la = fractional_loads(&a, &w);
            for s in 0..z.num_servers() {
                let wmax = *w.iter().max().unwrap() as f64;
                prop_assert!(la.as_slice()[s] <= lz.as_slice()[s] + wmax + 1e-9);
            }
            for p in NormOrder::standard() {
                prop_assert!(lp_norm(&la, p) <= lp_norm(&lz, p) + weight_norm(&w, p) + 1e-9);
            }
            let again = lst_round(&z, &w).unwrap();
            prop_assert_eq!(again.assignment, out.assignment);
        }
    }
}
