//! Exact reference solutions for small instances: maximum b-matchings by
//! max-flow, and `ℓ_p`-optimal assignments by enumeration.

use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Assignment, CapacityProfile, Edge, GraphSpec};
use crate::hierarchy::NestedMatchingHierarchy;
use crate::load::{lp_norm, LoadVector, NormOrder};
use crate::oracle::LevelSets;
use crate::vector::{SparseEdgeVector, TOL};

/// Largest number of assignments [`brute_force_opt`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u64 = 10_000_000;

fn integral_cap(v: f64, what: &str) -> Result<i64> {
    if v.fract() != 0.0 || v < 0.0 || v > 1e15 {
        return Err(Error::Precondition(format!(
            "{what} capacity {v} is not a nonnegative integer"
        )));
    }
    Ok(v as i64)
}

struct FlowNetwork {
    head: Vec<usize>,
    cap: Vec<i64>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        FlowNetwork {
            head: Vec::new(),
            cap: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: i64) {
        self.adj[from].push(self.head.len());
        self.head.push(to);
        self.cap.push(cap);
        self.adj[to].push(self.head.len());
        self.head.push(from);
        self.cap.push(0);
    }

    /// Shortest augmenting paths.
    fn max_flow(&mut self, source: usize, sink: usize) -> i64 {
        let mut total = 0;
        loop {
            let mut via = vec![usize::MAX; self.adj.len()];
            let mut queue = VecDeque::from([source]);
            let mut reached = false;
            while let Some(u) = queue.pop_front() {
                for &arc in &self.adj[u] {
                    let v = self.head[arc];
                    if self.cap[arc] > 0 && v != source && via[v] == usize::MAX {
                        via[v] = arc;
                        if v == sink {
                            reached = true;
                            break;
                        }
                        queue.push_back(v);
                    }
                }
                if reached {
                    break;
                }
            }
            if !reached {
                return total;
            }
            let mut bottleneck = i64::MAX;
            let mut v = sink;
            while v != source {
                let arc = via[v];
                bottleneck = bottleneck.min(self.cap[arc]);
                v = self.head[arc ^ 1];
            }
            let mut v = sink;
            while v != source {
                let arc = via[v];
                self.cap[arc] -= bottleneck;
                self.cap[arc ^ 1] += bottleneck;
                v = self.head[arc ^ 1];
            }
            total += bottleneck;
        }
    }
}

/// Size of a maximum fractional `(κ, τ)`-matching of the edges accepted by
/// `edge_filter`. Capacities must be integers.
pub fn exact_max_bmatching(
    graph: &GraphSpec,
    caps: &CapacityProfile,
    edge_filter: Option<&dyn Fn(Edge) -> bool>,
) -> Result<f64> {
    let (nc, ns) = (graph.num_clients(), graph.num_servers());
    if caps.num_clients() != nc || caps.num_servers() != ns {
        return Err(Error::Validation("capacity profile does not match the graph".into()));
    }
    let source = nc + ns;
    let sink = source + 1;
    let mut net = FlowNetwork::new(nc + ns + 2);
    let mut unbounded = 0i64;
    for (c, &k) in caps.client_cap.iter().enumerate() {
        let k = integral_cap(k, "client")?;
        unbounded += k;
        net.add(source, c, k);
    }
    for (s, &t) in caps.server_cap.iter().enumerate() {
        net.add(nc + s, sink, integral_cap(t, "server")?);
    }
    for &e in graph.sorted_edges() {
        if edge_filter.map_or(true, |keep| keep(e)) {
            net.add(e.client, nc + e.server, unbounded);
        }
    }
    Ok(net.max_flow(source, sink) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptEntry {
    pub p: NormOrder,
    pub value: f64,
    pub witness: Assignment,
}

/// `OPT_p` for every requested `p`, with an optimal assignment for each.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BruteForceOpt {
    pub entries: Vec<OptEntry>,
    pub assignments_checked: u64,
}

impl BruteForceOpt {
    pub fn value(&self, p: NormOrder) -> Option<f64> {
        self.entries.iter().find(|e| e.p == p).map(|e| e.value)
    }

    pub fn witness(&self, p: NormOrder) -> Option<&Assignment> {
        self.entries.iter().find(|e| e.p == p).map(|e| &e.witness)
    }
}

/// Number of assignments of `graph`, as a float to avoid overflow.
pub fn assignment_count(graph: &GraphSpec) -> f64 {
    graph.client_degrees().iter().map(|&d| d as f64).product()
}

/// Enumerates every assignment and keeps the `ℓ_p`-minimal one for each `p`.
pub fn brute_force_opt(graph: &GraphSpec, p_list: &[NormOrder]) -> Result<BruteForceOpt> {
    if let Some(c) = graph.client_degrees().iter().position(|&d| d == 0) {
        return Err(Error::Infeasible { client: c });
    }
    let count = assignment_count(graph);
    if count > BRUTE_FORCE_LIMIT as f64 {
        return Err(Error::TooLarge {
            assignments: count,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let nc = graph.num_clients();
    let nbrs: Vec<&[Edge]> = (0..nc).map(|c| graph.neighbors(c)).collect();
    let w = graph.weights();
    let mut digits = vec![0usize; nc];
    let mut loads = vec![0.0; graph.num_servers()];
    for c in 0..nc {
        loads[nbrs[c][0].server] += w[c] as f64;
    }
    let mut best: Vec<(f64, Vec<usize>)> = vec![(f64::INFINITY, Vec::new()); p_list.len()];
    let mut checked = 0u64;
    loop {
        checked += 1;
        let lv = LoadVector::new(loads.clone())?;
        for (slot, &p) in best.iter_mut().zip(p_list) {
            let v = lp_norm(&lv, p);
            if v < slot.0 {
                *slot = (v, digits.clone());
            }
        }
        // Mixed-radix increment, moving one client at a time.
        let mut c = 0;
        loop {
            if c == nc {
                let entries = best
                    .into_iter()
                    .zip(p_list)
                    .map(|((value, d), &p)| OptEntry {
                        p,
                        value,
                        witness: Assignment::from_servers(
                            d.iter().enumerate().map(|(c, &i)| nbrs[c][i].server).collect(),
                        ),
                    })
                    .collect();
                return Ok(BruteForceOpt {
                    entries,
                    assignments_checked: checked,
                });
            }
            let wc = w[c] as f64;
            loads[nbrs[c][digits[c]].server] -= wc;
            digits[c] += 1;
            if digits[c] < nbrs[c].len() {
                loads[nbrs[c][digits[c]].server] += wc;
                break;
            }
            digits[c] = 0;
            loads[nbrs[c][0].server] += wc;
            c += 1;
        }
    }
}

/// One size-factor comparison: `α · x(E^(j))` against the maximum
/// b-matching of `G^(j)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeFactorMargin {
    /// Hierarchy level, when checking a hierarchy.
    pub i: Option<usize>,
    pub j: usize,
    pub scaled_mass: f64,
    pub optimum: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SizeFactorReport {
    pub margins: Vec<SizeFactorMargin>,
}

impl SizeFactorReport {
    pub fn failures(&self) -> impl Iterator<Item = &SizeFactorMargin> {
        self.margins.iter().filter(|m| m.margin < -TOL)
    }

    pub fn all_pass(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn min_margin(&self) -> f64 {
        self.margins.iter().map(|m| m.margin).fold(f64::INFINITY, f64::min)
    }
}

/// Checks size factors against exact optima, caching one flow value per
/// distinct `(C^(j), capacities)` pair across calls on the same graph.
pub struct SizeFactorVerifier<'g> {
    graph: &'g GraphSpec,
    cache: HashMap<(Vec<bool>, Vec<u64>), f64>,
}

impl<'g> SizeFactorVerifier<'g> {
    pub fn new(graph: &'g GraphSpec) -> Self {
        SizeFactorVerifier {
            graph,
            cache: HashMap::new(),
        }
    }

    fn optimum(&mut self, members: &[bool], caps: &CapacityProfile) -> Result<f64> {
        let key = (
            members.to_vec(),
            caps.client_cap
                .iter()
                .chain(&caps.server_cap)
                .map(|c| c.to_bits())
                .collect(),
        );
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        let filter = |e: Edge| members[e.client];
        let v = exact_max_bmatching(self.graph, caps, Some(&filter))?;
        self.cache.insert(key, v);
        Ok(v)
    }

    fn check_levels(&self, levels: &LevelSets) -> Result<()> {
        if levels.num_clients() != self.graph.num_clients() {
            return Err(Error::Validation("level sets do not match the graph".into()));
        }
        Ok(())
    }

    fn push_margins(
        &mut self,
        report: &mut SizeFactorReport,
        i: Option<usize>,
        x: &SparseEdgeVector,
        levels: &LevelSets,
        caps: &CapacityProfile,
        alpha: f64,
    ) -> Result<()> {
        let nc = self.graph.num_clients();
        let mut members = vec![false; nc];
        let (mut optimum, mut mass) = (0.0, 0.0);
        for j in 0..=levels.k() {
            let joined: Vec<usize> = (0..nc).filter(|&c| levels.level_of(c) == Some(j)).collect();
            if j == 0 || !joined.is_empty() {
                for c in joined {
                    members[c] = true;
                }
                optimum = self.optimum(&members, caps)?;
                mass = x.total_where(|c| members[c]);
            }
            let scaled_mass = alpha * mass;
            report.margins.push(SizeFactorMargin {
                i,
                j,
                scaled_mass,
                optimum,
                margin: scaled_mass - optimum,
            });
        }
        Ok(())
    }

    /// Checks `α · x(E^(j)) >= max b-matching of G^(j)` for every level `j`.
    pub fn check_vector(
        &mut self,
        x: &SparseEdgeVector,
        levels: &LevelSets,
        caps: &CapacityProfile,
        alpha: f64,
    ) -> Result<SizeFactorReport> {
        self.check_levels(levels)?;
        let mut report = SizeFactorReport::default();
        self.push_margins(&mut report, None, x, levels, caps, alpha)?;
        Ok(report)
    }

    /// [`Self::check_vector`] for every level `x_i` of a hierarchy, with
    /// capacities `(κ, 2^i)`.
    pub fn check_hierarchy(
        &mut self,
        h: &NestedMatchingHierarchy,
        levels: &LevelSets,
        alpha: f64,
    ) -> Result<SizeFactorReport> {
        self.check_levels(levels)?;
        let mut report = SizeFactorReport::default();
        for (i, x) in h.levels().iter().enumerate() {
            let caps = CapacityProfile::uniform_servers(
                h.client_caps().to_vec(),
                self.graph.num_servers(),
                2f64.powi(i as i32),
            )?;
            self.push_margins(&mut report, Some(i), x, levels, &caps, alpha)?;
        }
        Ok(report)
    }
}

/// Checks `α · x(E^(j)) >= max b-matching of G^(j)` for every level `j`.
pub fn verify_size_factor(
    graph: &GraphSpec,
    x: &SparseEdgeVector,
    levels: &LevelSets,
    caps: &CapacityProfile,
    alpha: f64,
) -> Result<SizeFactorReport> {
    SizeFactorVerifier::new(graph).check_vector(x, levels, caps, alpha)
}

/// [`verify_size_factor`] for every level of a hierarchy.
pub fn verify_hierarchy_size_factor(
    graph: &GraphSpec,
    h: &NestedMatchingHierarchy,
    levels: &LevelSets,
    alpha: f64,
) -> Result<SizeFactorReport> {
    SizeFactorVerifier::new(graph).check_hierarchy(h, levels, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::compute_nmh;
    use crate::stream::{generate_instance, EdgeStream, GeneratorKind, GeneratorParams};
    use proptest::prelude::*;

    fn graph(nc: usize, ns: usize, w: Vec<u64>, edges: &[(usize, usize)]) -> GraphSpec {
        GraphSpec::new(nc, ns, w, edges.iter().map(|&(c, s)| Edge::new(c, s)).collect()).unwrap()
    }

    fn caps(k: &[f64], t: &[f64]) -> CapacityProfile {
        CapacityProfile::new(k.to_vec(), t.to_vec()).unwrap()
    }

    #[test]
    fn flow_examples() {
        let g = graph(1, 1, vec![1], &[(0, 0)]);
        assert_eq!(exact_max_bmatching(&g, &caps(&[1.0], &[1.0]), None).unwrap(), 1.0);
        let g = graph(2, 1, vec![1, 1], &[(0, 0), (1, 0)]);
        assert_eq!(exact_max_bmatching(&g, &caps(&[1.0, 1.0], &[1.0]), None).unwrap(), 1.0);
        let g = graph(2, 2, vec![1, 1], &[(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(
            exact_max_bmatching(&g, &caps(&[2.0, 3.0], &[2.0, 2.0]), None).unwrap(),
            4.0
        );
        let only_first = |e: Edge| e.client == 0;
        assert_eq!(
            exact_max_bmatching(&g, &caps(&[2.0, 3.0], &[2.0, 2.0]), Some(&only_first)).unwrap(),
            2.0
        );
        assert!(matches!(
            exact_max_bmatching(&g, &caps(&[1.5, 1.0], &[1.0, 1.0]), None),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn brute_force_examples() {
        let inf = NormOrder::Infinity;
        let two = NormOrder::Finite(2.0);
        let g = graph(2, 2, vec![1, 1], &[(0, 0), (0, 1), (1, 0), (1, 1)]);
        let opt = brute_force_opt(&g, &[inf]).unwrap();
        assert_eq!(opt.value(inf), Some(1.0));
        assert_eq!(opt.assignments_checked, 4);

        let g = graph(2, 1, vec![1, 1], &[(0, 0), (1, 0)]);
        assert_eq!(brute_force_opt(&g, &[inf]).unwrap().value(inf), Some(2.0));

        let g = graph(3, 2, vec![1, 1, 1], &[(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)]);
        let opt = brute_force_opt(&g, &[two, inf]).unwrap();
        assert!((opt.value(two).unwrap() - 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(opt.value(inf), Some(2.0));
        assert_eq!(opt.assignments_checked, 8);
        let witness = opt.witness(two).unwrap();
        witness.check(&g).unwrap();
    }

    #[test]
    fn brute_force_guard() {
        let edges: Vec<(usize, usize)> = (0..12).flat_map(|c| (0..4).map(move |s| (c, s))).collect();
        let g = graph(12, 4, vec![1; 12], &edges);
        assert!(matches!(
            brute_force_opt(&g, &[NormOrder::Infinity]),
            Err(Error::TooLarge { .. })
        ));
        let isolated = graph(2, 1, vec![1, 1], &[(0, 0)]);
        assert!(matches!(
            brute_force_opt(&isolated, &[NormOrder::Infinity]),
            Err(Error::Infeasible { client: 1 })
        ));
    }

    #[test]
    fn size_factor_reports() {
        let g = graph(2, 2, vec![1, 1], &[(0, 0), (0, 1), (1, 0), (1, 1)]);
        let levels = LevelSets::single(2);
        let c = caps(&[1.0, 1.0], &[1.0, 1.0]);
        let opt = SparseEdgeVector::from_entries(2, 2, [(Edge::new(0, 0), 1.0), (Edge::new(1, 1), 1.0)]).unwrap();
        assert!(verify_size_factor(&g, &opt, &levels, &c, 1.0).unwrap().all_pass());
        let empty = SparseEdgeVector::zeros(2, 2);
        let r = verify_size_factor(&g, &empty, &levels, &c, 8.0).unwrap();
        assert_eq!(r.failures().count(), 1);
    }

    #[test]
    fn nmh_on_random_instance_has_size_factor_8() {
        let g = generate_instance(
            GeneratorKind::Random,
            GeneratorParams { clients: 6, servers: 3, max_weight: 3 },
            7,
        )
        .unwrap();
        let values: Vec<f64> = (0..6).map(|c| 1.0 + c as f64).collect();
        let levels = crate::oracle::build_level_sets(&values, g.weights(), 0.0625).unwrap();
        let kappa: Vec<f64> = g.weights().iter().map(|&w| w as f64).collect();
        let h = compute_nmh(&mut EdgeStream::from_graph(&g), &kappa, &levels).unwrap();
        let r = verify_hierarchy_size_factor(&g, &h, &levels, 8.0).unwrap();
        assert!(r.all_pass(), "min margin {}", r.min_margin());
        assert_eq!(r.margins.len(), (h.depth() + 1) * (levels.k() + 1));
    }

    /// Maximum integral b-matching by enumerating integer edge values.
    fn enumerate_max(g: &GraphSpec, c: &CapacityProfile) -> f64 {
        let edges = g.sorted_edges();
        let bound: Vec<i64> = edges
            .iter()
            .map(|e| c.client_cap[e.client].min(c.server_cap[e.server]) as i64)
            .collect();
        let mut vals = vec![0i64; edges.len()];
        let mut best = 0;
        loop {
            let mut cs = vec![0i64; g.num_clients()];
            let mut ss = vec![0i64; g.num_servers()];
            for (e, &v) in edges.iter().zip(&vals) {
                cs[e.client] += v;
                ss[e.server] += v;
            }
            let ok = cs.iter().zip(&c.client_cap).all(|(&a, &k)| a as f64 <= k)
                && ss.iter().zip(&c.server_cap).all(|(&a, &t)| a as f64 <= t);
            if ok {
                best = best.max(vals.iter().sum());
            }
            let mut i = 0;
            loop {
                if i == vals.len() {
                    return best as f64;
                }
                vals[i] += 1;
                if vals[i] <= bound[i] {
                    break;
                }
                vals[i] = 0;
                i += 1;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn flow_matches_enumeration(
            nc in 1usize..4,
            ns in 1usize..4,
            mask in 1u32..512,
            kappa in prop::collection::vec(1u8..3, 3),
            tau in prop::collection::vec(1u8..3, 3),
        ) {
            let mut edges = vec![];
            for c in 0..nc {
                for s in 0..ns {
                    if mask >> (c * 3 + s) & 1 == 1 && edges.len() < 8 {
                        edges.push(Edge::new(c, s));
                    }
                }
            }
            // Every client needs an edge.
            for c in 0..nc {
                if !edges.iter().any(|e| e.client == c) {
                    edges.push(Edge::new(c, 0));
                }
            }
            prop_assume!(edges.len() <= 8);
            let g = GraphSpec::new(nc, ns, vec![1; nc], edges).unwrap();
            let c = CapacityProfile::new(
                kappa[..nc].iter().map(|&k| k as f64).collect(),
                tau[..ns].iter().map(|&t| t as f64).collect(),
            ).unwrap();
            prop_assert_eq!(exact_max_bmatching(&g, &c, None).unwrap(), enumerate_max(&g, &c));
        }
    }
}
