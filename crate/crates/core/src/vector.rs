//! Sparse nonnegative vectors indexed by edges: fractional matchings,
//! fractional assignments and the intermediate iterates of the oracle.

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::graph::{CapacityProfile, Edge};
use crate::error::{Error, Result};

/// Absolute tolerance used for all equality and feasibility checks.
pub const TOL: f64 = 1e-9;

/// A function `x : E -> R_+` with finite support.
///
/// Entries are kept sorted by edge and every stored value is strictly
/// positive. Per-vertex sums `x(δ(c))` and `x(δ(s))` are cached densely.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseEdgeVector {
    entries: Vec<(Edge, f64)>,
    client_sum: Vec<f64>,
    server_sum: Vec<f64>,
}

impl SparseEdgeVector {
    pub fn zeros(num_clients: usize, num_servers: usize) -> Self {
        SparseEdgeVector {
            entries: Vec::new(),
            client_sum: vec![0.0; num_clients],
            server_sum: vec![0.0; num_servers],
        }
    }

    /// Builds a vector from arbitrary-order entries. Zero entries are
    /// dropped; negative or non-finite values and repeated edges are errors.
    pub fn from_entries(
        num_clients: usize,
        num_servers: usize,
        entries: impl IntoIterator<Item = (Edge, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(Edge, f64)> = entries.into_iter().collect();
        for &(e, v) in &entries {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!(
                    "edge ({}, {}) has invalid value {v}",
                    e.client, e.server
                )));
            }
            if e.client >= num_clients || e.server >= num_servers {
                return Err(Error::UnknownEdge(e));
            }
        }
        entries.retain(|&(_, v)| v > 0.0);
        entries.sort_unstable_by_key(|&(e, _)| e);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateEdge(w[0].0));
        }
        Ok(Self::from_sorted_unchecked(num_clients, num_servers, entries))
    }

    /// `entries` must be sorted by edge, distinct, in range and positive.
    pub(crate) fn from_sorted_unchecked(
        num_clients: usize,
        num_servers: usize,
        entries: Vec<(Edge, f64)>,
    ) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        let mut client_sum = vec![0.0; num_clients];
        let mut server_sum = vec![0.0; num_servers];
        for &(e, v) in &entries {
            client_sum[e.client] += v;
            server_sum[e.server] += v;
        }
        SparseEdgeVector {
            entries,
            client_sum,
            server_sum,
        }
    }

    /// Indicator-style vector with value `value(c)` on each listed edge.
    pub fn from_edges(
        num_clients: usize,
        num_servers: usize,
        edges: impl IntoIterator<Item = Edge>,
        value: impl Fn(Edge) -> f64,
    ) -> Result<Self> {
        Self::from_entries(
            num_clients,
            num_servers,
            edges.into_iter().map(|e| (e, value(e))),
        )
    }

    pub fn num_clients(&self) -> usize {
        self.client_sum.len()
    }

    pub fn num_servers(&self) -> usize {
        self.server_sum.len()
    }

    pub fn get(&self, edge: Edge) -> f64 {
        match self.entries.binary_search_by_key(&edge, |&(e, _)| e) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn entries(&self) -> &[(Edge, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (Edge, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn support(&self) -> impl Iterator<Item = Edge> + '_ {
        self.entries.iter().map(|&(e, _)| e)
    }

    /// `|supp(x)|`.
    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `x(E)`.
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v).sum()
    }

    /// `x(E')` where `E'` is the set of edges whose client satisfies `keep`.
    pub fn total_where(&self, mut keep: impl FnMut(usize) -> bool) -> f64 {
        self.entries
            .iter()
            .filter(|(e, _)| keep(e.client))
            .map(|&(_, v)| v)
            .sum()
    }

    /// `x(δ(c))`.
    pub fn client_sum(&self, client: usize) -> f64 {
        self.client_sum[client]
    }

    /// `x(δ(s))`.
    pub fn server_sum(&self, server: usize) -> f64 {
        self.server_sum[server]
    }

    pub fn client_sums(&self) -> &[f64] {
        &self.client_sum
    }

    pub fn server_sums(&self) -> &[f64] {
        &self.server_sum
    }

    /// Checks that the cached degree sums agree with a fresh summation.
    pub fn sums_consistent(&self) -> bool {
        let fresh = Self::from_sorted_unchecked(
            self.num_clients(),
            self.num_servers(),
            self.entries.clone(),
        );
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= TOL);
        close(&fresh.client_sum, &self.client_sum) && close(&fresh.server_sum, &self.server_sum)
    }

    /// Whether `x` is a fractional `(κ, τ)`-matching within [`TOL`].
    pub fn is_feasible(&self, caps: &CapacityProfile) -> bool {
        self.feasibility_violation(caps).is_none()
    }

    pub fn check_feasible(&self, caps: &CapacityProfile, name: &str) -> Result<()> {
        match self.feasibility_violation(caps) {
            None => Ok(()),
            Some(msg) => Err(Error::Precondition(format!("{name} is infeasible: {msg}"))),
        }
    }

    fn feasibility_violation(&self, caps: &CapacityProfile) -> Option<String> {
        if caps.num_clients() != self.num_clients() || caps.num_servers() != self.num_servers() {
            return Some("capacity profile has the wrong dimensions".into());
        }
        for (c, (&sum, &cap)) in self.client_sum.iter().zip(&caps.client_cap).enumerate() {
            if sum > cap + TOL {
                return Some(format!("client {c} carries {sum} > {cap}"));
            }
        }
        for (s, (&sum, &cap)) in self.server_sum.iter().zip(&caps.server_cap).enumerate() {
            if sum > cap + TOL {
                return Some(format!("server {s} carries {sum} > {cap}"));
            }
        }
        None
    }

    /// `self >= other` pointwise, within [`TOL`].
    pub fn contains(&self, other: &SparseEdgeVector) -> bool {
        other.iter().all(|(e, v)| self.get(e) + TOL >= v)
    }

    /// `(self - other)^+(E)`.
    pub fn positive_excess(&self, other: &SparseEdgeVector) -> f64 {
        self.iter().map(|(e, v)| (v - other.get(e)).max(0.0)).sum()
    }

    /// Pointwise `min(self, other)`.
    pub fn pointwise_min(&self, other: &SparseEdgeVector) -> SparseEdgeVector {
        let entries = self
            .iter()
            .filter_map(|(e, v)| {
                let m = v.min(other.get(e));
                (m > 0.0).then_some((e, m))
            })
            .collect();
        Self::from_sorted_unchecked(self.num_clients(), self.num_servers(), entries)
    }

    /// `self + factor * other`, with both supports merged.
    pub fn add_scaled(&self, other: &SparseEdgeVector, factor: f64) -> SparseEdgeVector {
        let mut out = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        loop {
            let next = match (a.peek(), b.peek()) {
                (Some(&&(ea, va)), Some(&&(eb, vb))) => {
                    if ea < eb {
                        a.next();
                        (ea, va)
                    } else if eb < ea {
                        b.next();
                        (eb, factor * vb)
                    } else {
                        a.next();
                        b.next();
                        (ea, va + factor * vb)
                    }
                }
                (Some(&&(ea, va)), None) => {
                    a.next();
                    (ea, va)
                }
                (None, Some(&&(eb, vb))) => {
                    b.next();
                    (eb, factor * vb)
                }
                (None, None) => break,
            };
            if next.1 > 0.0 {
                out.push(next);
            }
        }
        Self::from_sorted_unchecked(self.num_clients(), self.num_servers(), out)
    }

    /// Every entry multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> SparseEdgeVector {
        self.map_values(|_, v| v * factor)
    }

    /// Applies `f` to every stored entry; non-positive results are dropped.
    pub fn map_values(&self, mut f: impl FnMut(Edge, f64) -> f64) -> SparseEdgeVector {
        let entries = self
            .iter()
            .map(|(e, v)| (e, f(e, v)))
            .filter(|&(_, v)| v > 0.0)
            .collect();
        Self::from_sorted_unchecked(self.num_clients(), self.num_servers(), entries)
    }

    /// Whether every stored value is within [`TOL`] of an integer.
    pub fn is_integral(&self) -> bool {
        self.iter().all(|(_, v)| (v - v.round()).abs() <= TOL)
    }
}

impl Serialize for SparseEdgeVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.entries.len()))?;
        for &(e, v) in &self.entries {
            seq.serialize_element(&(e.client, e.server, v))?;
        }
        seq.end()
    }
}

/// A working copy of a vector that allows in-place increases, used by the
/// greedy merge procedures. Positions refer to a fixed, sorted support.
#[derive(Clone, Debug)]
pub(crate) struct DenseOnSupport {
    pub edges: Vec<Edge>,
    pub values: Vec<f64>,
    pub client_sum: Vec<f64>,
    pub server_sum: Vec<f64>,
}

impl DenseOnSupport {
    /// `x` laid out on `supp(x) ∪ supp(y)`.
    pub fn union_of(x: &SparseEdgeVector, y: &SparseEdgeVector) -> Self {
        let mut edges: Vec<Edge> = x.support().chain(y.support()).collect();
        edges.sort_unstable();
        edges.dedup();
        let values = edges.iter().map(|&e| x.get(e)).collect();
        DenseOnSupport {
            edges,
            values,
            client_sum: x.client_sum.clone(),
            server_sum: x.server_sum.clone(),
        }
    }

    pub fn position(&self, edge: Edge) -> usize {
        self.edges
            .binary_search(&edge)
            .expect("edge is part of the merged support")
    }

    /// Raises entry `pos` by the smallest amount that saturates its client,
    /// saturates its server, or reaches `ceiling`.
    pub fn raise_until_blocked(&mut self, pos: usize, ceiling: f64, caps: &CapacityProfile) {
        let e = self.edges[pos];
        let room = (caps.client_cap[e.client] - self.client_sum[e.client])
            .min(caps.server_cap[e.server] - self.server_sum[e.server])
            .min(ceiling - self.values[pos]);
        if room > 0.0 {
            self.values[pos] += room;
            self.client_sum[e.client] += room;
            self.server_sum[e.server] += room;
        }
    }

    pub fn into_sparse(self) -> SparseEdgeVector {
        let nc = self.client_sum.len();
        let ns = self.server_sum.len();
        let entries = self
            .edges
            .into_iter()
            .zip(self.values)
            .filter(|&(_, v)| v > 0.0)
            .collect();
        SparseEdgeVector::from_sorted_unchecked(nc, ns, entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(entries: &[((usize, usize), f64)]) -> SparseEdgeVector {
        SparseEdgeVector::from_entries(
            3,
            3,
            entries.iter().map(|&((c, s), x)| (Edge::new(c, s), x)),
        )
        .unwrap()
    }

    #[test]
    fn zeros_are_absent_and_sums_cached() {
        let x = v(&[((1, 0), 0.5), ((0, 0), 0.0), ((0, 2), 1.5)]);
        assert_eq!(x.support_len(), 2);
        assert_eq!(x.entries()[0].0, Edge::new(0, 2));
        assert_eq!(x.client_sum(0), 1.5);
        assert_eq!(x.server_sum(0), 0.5);
        assert!(x.sums_consistent());
        assert_eq!(x.total(), 2.0);
    }

    #[test]
    fn rejects_negative_and_repeated_entries() {
        assert!(SparseEdgeVector::from_entries(1, 1, [(Edge::new(0, 0), -1.0)]).is_err());
        assert!(matches!(
            SparseEdgeVector::from_entries(1, 1, [(Edge::new(0, 0), 1.0), (Edge::new(0, 0), 2.0)]),
            Err(Error::DuplicateEdge(_))
        ));
    }

    #[test]
    fn add_scaled_merges_supports() {
        let x = v(&[((0, 0), 1.0), ((1, 1), 2.0)]);
        let y = v(&[((0, 0), 1.0), ((2, 2), 4.0)]);
        let s = x.add_scaled(&y, 0.5);
        assert_eq!(s.get(Edge::new(0, 0)), 1.5);
        assert_eq!(s.get(Edge::new(1, 1)), 2.0);
        assert_eq!(s.get(Edge::new(2, 2)), 2.0);
        assert!(s.sums_consistent());
    }

    #[test]
    fn excess_and_containment() {
        let x = v(&[((0, 0), 2.0), ((1, 1), 1.0)]);
        let y = v(&[((0, 0), 1.5), ((1, 1), 3.0)]);
        assert!((x.positive_excess(&y) - 0.5).abs() < 1e-12);
        assert!(!x.contains(&y));
        assert!(x.contains(&x.pointwise_min(&y)));
    }

    #[test]
    fn feasibility_uses_both_sides() {
        let x = v(&[((0, 0), 1.0), ((1, 0), 1.0)]);
        let loose = CapacityProfile::uniform_servers(vec![1.0; 3], 3, 2.0).unwrap();
        let tight = CapacityProfile::uniform_servers(vec![1.0; 3], 3, 1.0).unwrap();
        assert!(x.is_feasible(&loose));
        assert!(!x.is_feasible(&tight));
    }
}
