//! Nested matching hierarchies: `x_0 <= x_1 <= ... <= x_ℓ` where `x_i` is a
//! fractional `(κ, 2^i)`-matching.

use serde::Serialize;

use crate::bmatch::{fold_levels, greedy_per_level, vector_words};
use crate::error::{Error, Result};
use crate::graph::{Assignment, CapacityProfile, GraphSpec};
use crate::load::NormOrder;
use crate::oracle::LevelSets;
use crate::stream::EdgeStream;
use crate::vector::{DenseOnSupport, SparseEdgeVector, TOL};

/// Number of levels above the base: `ℓ = ⌈log₂ max(w(C), 2)⌉`, so that
/// `2^ℓ >= w(C)` and server capacities never bind at the top level.
pub fn hierarchy_depth(total_weight: f64) -> usize {
    total_weight.max(2.0).log2().ceil() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NestedMatchingHierarchy {
    levels: Vec<SparseEdgeVector>,
    #[serde(skip)]
    client_caps: Vec<f64>,
}

impl NestedMatchingHierarchy {
    /// Validates feasibility of every level at server capacity `2^i` and
    /// the nesting `x_i <= x_{i+1}`.
    pub fn new(levels: Vec<SparseEdgeVector>, client_caps: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Validation("a hierarchy needs at least one level".into()));
        }
        for (i, x) in levels.iter().enumerate() {
            let caps = CapacityProfile::uniform_servers(
                client_caps.clone(),
                x.num_servers(),
                2f64.powi(i as i32),
            )?;
            x.check_feasible(&caps, &format!("level {i}"))?;
        }
        if let Some(i) = (1..levels.len()).find(|&i| !levels[i].contains(&levels[i - 1])) {
            return Err(Error::Precondition(format!("level {i} does not contain level {}", i - 1)));
        }
        Ok(NestedMatchingHierarchy {
            levels,
            client_caps,
        })
    }

    /// `ℓ`.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, i: usize) -> &SparseEdgeVector {
        &self.levels[i]
    }

    pub fn levels(&self) -> &[SparseEdgeVector] {
        &self.levels
    }

    pub fn top(&self) -> &SparseEdgeVector {
        self.levels.last().expect("nonempty")
    }

    pub fn client_caps(&self) -> &[f64] {
        &self.client_caps
    }

    pub fn words(&self) -> usize {
        self.levels.iter().map(vector_words).sum()
    }

    /// `(x_i - x_{i-1})(E)` with `x_{-1} = 0`.
    fn increment(&self, i: usize) -> f64 {
        let below = if i == 0 { 0.0 } else { self.levels[i - 1].total() };
        self.levels[i].total() - below
    }

    /// `Σ_s x_ℓ(δ(s))^p`.
    pub fn top_power_sum(&self, p: f64) -> f64 {
        self.top().server_sums().iter().map(|&d| d.powf(p)).sum()
    }
}

/// Merges `y` into `x` by decreasing density class.
///
/// `x` must be a `(κ, τ)`-matching and `y` a `(κ, 2τ)`-matching, with
/// `caps` holding `(κ, 2τ)`. Edges of `y` are visited class by class
/// (`C^(0)` first), ascending within a class, and each is raised until its
/// client or server saturates or it reaches `x(cs) + y(cs)`.
pub fn h_merge_into(
    x: &SparseEdgeVector,
    y: &SparseEdgeVector,
    caps: &CapacityProfile,
    levels: &LevelSets,
) -> Result<SparseEdgeVector> {
    x.check_feasible(&caps.scale_servers(0.5), "x")?;
    y.check_feasible(caps, "y")?;
    if levels.num_clients() != y.num_clients() {
        return Err(Error::Validation("level sets do not match the vectors".into()));
    }
    let mut order: Vec<(usize, usize)> = y
        .entries()
        .iter()
        .enumerate()
        .filter_map(|(idx, (e, _))| levels.level_of(e.client).map(|j| (j, idx)))
        .collect();
    // Stable on ascending edges, so ties within a class keep edge order.
    order.sort_by_key(|&(j, _)| j);

    let mut out = DenseOnSupport::union_of(x, y);
    for (_, idx) in order {
        let (e, yv) = y.entries()[idx];
        let pos = out.position(e);
        out.raise_until_blocked(pos, x.get(e) + yv, caps);
    }
    Ok(out.into_sparse())
}

/// One pass: a `(κ, 2^i)`-nested matching hierarchy of size factor 8 with
/// respect to `C^(0..=k)`, with `ℓ` from [`hierarchy_depth`] of `Σ κ`.
pub fn compute_nmh(
    stream: &mut EdgeStream,
    client_caps: &[f64],
    levels: &LevelSets,
) -> Result<NestedMatchingHierarchy> {
    let depth = hierarchy_depth(client_caps.iter().sum());
    compute_nmh_with_depth(stream, client_caps, levels, depth)
}

/// [`compute_nmh`] with an explicit number of levels `ℓ`.
pub fn compute_nmh_with_depth(
    stream: &mut EdgeStream,
    client_caps: &[f64],
    levels: &LevelSets,
    depth: usize,
) -> Result<NestedMatchingHierarchy> {
    if client_caps.iter().any(|&k| !(k > 0.0)) {
        return Err(Error::Precondition("client capacities must be positive".into()));
    }
    let caps: Vec<CapacityProfile> = (0..=depth)
        .map(|i| {
            CapacityProfile::uniform_servers(
                client_caps.to_vec(),
                stream.num_servers(),
                2f64.powi(i as i32),
            )
        })
        .collect::<Result<_>>()?;

    // All (ℓ+1)(k+1) greedy matchings share the single pass.
    let per_level = greedy_per_level(stream, &caps, levels)?;

    let mut size_factor_4 = Vec::with_capacity(depth + 1);
    for (i, cap) in caps.iter().enumerate() {
        size_factor_4.push(fold_levels(&per_level, i, cap, stream)?);
    }

    let mut merged: Vec<SparseEdgeVector> = Vec::with_capacity(depth + 1);
    for (i, xi) in size_factor_4.into_iter().enumerate() {
        let next = match merged.last() {
            None => xi,
            Some(prev) => {
                let m = h_merge_into(prev, &xi, &caps[i], levels)?;
                stream.space_mut().charge(vector_words(&m));
                stream.space_mut().release(vector_words(&xi));
                m
            }
        };
        merged.push(next);
    }
    let h = NestedMatchingHierarchy::new(merged, client_caps.to_vec()).map_err(|e| {
        Error::Invariant(format!("constructed hierarchy is not nested: {e}"))
    })?;
    stream.space_mut().release(h.words());
    Ok(h)
}

/// The maximally-nested `(w, 2^i)`-hierarchy decomposition of a full
/// assignment: `x_ℓ(cs) = w(c)` on assigned edges, and each lower level
/// copies the level above as far as server capacity `2^i` permits.
pub fn nmh_decompose(graph: &GraphSpec, assignment: &Assignment) -> Result<NestedMatchingHierarchy> {
    nmh_decompose_with_depth(
        graph,
        assignment,
        hierarchy_depth(graph.total_weight() as f64),
    )
}

pub fn nmh_decompose_with_depth(
    graph: &GraphSpec,
    assignment: &Assignment,
    depth: usize,
) -> Result<NestedMatchingHierarchy> {
    assignment.check(graph)?;
    let (nc, ns) = (graph.num_clients(), graph.num_servers());
    let top = SparseEdgeVector::from_edges(nc, ns, assignment.edges(), |e| graph.weight(e.client) as f64)?;
    let mut levels = vec![top];
    for i in (0..depth).rev() {
        let cap = 2f64.powi(i as i32);
        let above = levels.last().expect("nonempty");
        let mut room = vec![cap; ns];
        let entries: Vec<_> = above
            .iter()
            .filter_map(|(e, v)| {
                let take = v.min(room[e.server]);
                room[e.server] -= take;
                (take > 0.0).then_some((e, take))
            })
            .collect();
        levels.push(SparseEdgeVector::from_sorted_unchecked(nc, ns, entries));
    }
    levels.reverse();
    let client_caps = graph.weights().iter().map(|&w| w as f64).collect();
    NestedMatchingHierarchy::new(levels, client_caps)
}

/// Whether `x_{i+1}(δ(s)) != x_i(δ(s))` implies `x_i(δ(s)) = 2^i` for every
/// server `s` and level `i < ℓ`.
pub fn is_maximally_nested(h: &NestedMatchingHierarchy) -> bool {
    h.levels.windows(2).enumerate().all(|(i, pair)| {
        let cap = 2f64.powi(i as i32);
        pair[0]
            .server_sums()
            .iter()
            .zip(pair[1].server_sums())
            .all(|(&lo, &hi)| (hi - lo).abs() <= TOL || (lo - cap).abs() <= TOL)
    })
}

fn finite_order(p: NormOrder) -> Result<f64> {
    match p {
        NormOrder::Finite(p) => Ok(p),
        NormOrder::Infinity => Err(Error::Domain(
            "power sums are defined for finite p only".into(),
        )),
    }
}

/// `p x_0(E) + Σ_{i>=1} p 2^{i(p-1)} (x_i - x_{i-1})(E)`, an upper bound on
/// `Σ_s x_ℓ(δ(s))^p` for any fractional `(w, 2^i)`-hierarchy.
pub fn nmh_power_sum_upper(h: &NestedMatchingHierarchy, p: NormOrder) -> Result<f64> {
    let p = finite_order(p)?;
    Ok((0..=h.depth())
        .map(|i| p * 2f64.powf(i as f64 * (p - 1.0)) * h.increment(i))
        .sum())
}

/// `x_0(E) + Σ_{i>=1} p 2^{(i-1)(p-1)} (x_i - x_{i-1})(E)`, a lower bound on
/// `Σ_s x_ℓ(δ(s))^p` for maximally-nested integral hierarchies.
pub fn nmh_power_sum_lower(h: &NestedMatchingHierarchy, p: NormOrder) -> Result<f64> {
    let p = finite_order(p)?;
    if !is_maximally_nested(h) {
        return Err(Error::Precondition("hierarchy is not maximally nested".into()));
    }
    if !h.levels.iter().all(SparseEdgeVector::is_integral) {
        return Err(Error::Precondition("hierarchy is not integral".into()));
    }
    Ok(h.increment(0)
        + (1..=h.depth())
            .map(|i| p * 2f64.powf((i - 1) as f64 * (p - 1.0)) * h.increment(i))
            .sum::<f64>())
}
