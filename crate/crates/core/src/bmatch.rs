//! Single-pass greedy fractional b-matchings, the greedy merge combiner,
//! and matchings with size factor 4 across all level graphs `G^(j)`.

use crate::error::{Error, Result};
use crate::graph::{CapacityProfile, Edge};
use crate::oracle::LevelSets;
use crate::stream::EdgeStream;
use crate::vector::{DenseOnSupport, SparseEdgeVector};

/// Words held by a stored vector: its entries plus the cached vertex sums.
pub(crate) fn vector_words(x: &SparseEdgeVector) -> usize {
    x.support_len() + x.num_clients() + x.num_servers()
}

/// State of one greedy maximal matching fed edge by edge.
#[derive(Clone, Debug)]
pub(crate) struct GreedyBMatching {
    client_room: Vec<f64>,
    server_room: Vec<f64>,
    entries: Vec<(Edge, f64)>,
}

impl GreedyBMatching {
    pub fn new(caps: &CapacityProfile) -> Self {
        GreedyBMatching {
            client_room: caps.client_cap.clone(),
            server_room: caps.server_cap.clone(),
            entries: Vec::new(),
        }
    }

    /// Sets `x(e)` as large as the residual capacities allow. A positive
    /// insertion always saturates at least one endpoint exactly.
    pub fn offer(&mut self, e: Edge) {
        let rc = self.client_room[e.client];
        let rs = self.server_room[e.server];
        let room = rc.min(rs);
        if room > 0.0 {
            self.entries.push((e, room));
            if rc <= rs {
                self.client_room[e.client] = 0.0;
                self.server_room[e.server] = rs - room;
            } else {
                self.server_room[e.server] = 0.0;
                self.client_room[e.client] = rc - room;
            }
        }
    }

    pub fn words(&self) -> usize {
        self.client_room.len() + self.server_room.len() + self.entries.len()
    }

    pub fn finish(mut self) -> SparseEdgeVector {
        self.entries.sort_unstable_by_key(|&(e, _)| e);
        SparseEdgeVector::from_sorted_unchecked(
            self.client_room.len(),
            self.server_room.len(),
            self.entries,
        )
    }
}

fn check_dims(stream: &EdgeStream, caps: &CapacityProfile) -> Result<()> {
    if caps.num_clients() != stream.num_clients() || caps.num_servers() != stream.num_servers() {
        return Err(Error::Validation(format!(
            "capacity profile is {}x{}, stream is {}x{}",
            caps.num_clients(),
            caps.num_servers(),
            stream.num_clients(),
            stream.num_servers()
        )));
    }
    Ok(())
}

/// One pass: greedy maximal fractional `(κ, τ)`-matching over the edges
/// accepted by `edge_filter` (all edges when `None`).
pub fn greedy_maximal_bmatching(
    stream: &mut EdgeStream,
    caps: &CapacityProfile,
    edge_filter: Option<&dyn Fn(Edge) -> bool>,
) -> Result<SparseEdgeVector> {
    check_dims(stream, caps)?;
    let mut greedy = GreedyBMatching::new(caps);
    stream.space_mut().charge(greedy.words());
    stream.pass(|e| {
        if edge_filter.map_or(true, |keep| keep(e)) {
            greedy.offer(e);
        }
    })?;
    let base = caps.num_clients() + caps.num_servers();
    stream.space_mut().charge(greedy.words() - base);
    let x = greedy.finish();
    stream.space_mut().release(vector_words(&x));
    Ok(x)
}

/// Greedily adds the entries of `y` into `x`.
///
/// Entries of `supp(y)` are visited in ascending edge order, and each is
/// raised until its client or server is saturated or it reaches
/// `x(cs) + y(cs)`. The result contains `x` and has at least half the size
/// of `y`.
pub fn merge_into(
    x: &SparseEdgeVector,
    y: &SparseEdgeVector,
    caps: &CapacityProfile,
) -> Result<SparseEdgeVector> {
    x.check_feasible(caps, "x")?;
    y.check_feasible(caps, "y")?;
    let mut out = DenseOnSupport::union_of(x, y);
    for (e, yv) in y.iter() {
        let pos = out.position(e);
        out.raise_until_blocked(pos, x.get(e) + yv, caps);
    }
    Ok(out.into_sparse())
}

/// Greedy matchings of every level graph `G^(j)`, stored once per distinct
/// class: `C^(j) = C^(j-1)` whenever no client has level exactly `j`, and
/// greedy runs over identical edge sequences give identical results.
pub(crate) struct PerLevel {
    /// `distinct[i][r]`: the matching for capacity profile `i` and the
    /// `r`-th distinct class.
    pub distinct: Vec<Vec<SparseEdgeVector>>,
    /// `rep[j]`: index into `distinct[i]` of the matching of `G^(j)`.
    pub rep: Vec<usize>,
}

impl PerLevel {
    /// `x^(j)` for capacity profile `i`.
    #[cfg(test)]
    pub fn get(&self, i: usize, j: usize) -> &SparseEdgeVector {
        &self.distinct[i][self.rep[j]]
    }

    /// Words held by all `(i, j)` matchings, counting each level separately.
    fn words(&self) -> usize {
        self.distinct
            .iter()
            .map(|per_cap| self.rep.iter().map(|&r| vector_words(&per_cap[r])).sum::<usize>())
            .sum()
    }
}

/// Runs one greedy matching per `(capacity profile, level)` pair over a
/// single pass: edge `cs` is offered to level `j` iff `c ∈ C^(j)`.
pub(crate) fn greedy_per_level(
    stream: &mut EdgeStream,
    caps: &[CapacityProfile],
    levels: &LevelSets,
) -> Result<PerLevel> {
    for c in caps {
        check_dims(stream, c)?;
    }
    if levels.num_clients() != stream.num_clients() {
        return Err(Error::Validation("level sets do not match the stream".into()));
    }
    let k = levels.k();
    let mut starts = vec![false; k + 1];
    starts[0] = true;
    for j in levels.levels().iter().flatten() {
        starts[*j] = true;
    }
    let mut rep = Vec::with_capacity(k + 1);
    let mut count = 0;
    for &s in &starts {
        if s {
            count += 1;
        }
        rep.push(count - 1);
    }
    let first_distinct: Vec<Option<usize>> = levels
        .levels()
        .iter()
        .map(|l| l.map(|j| rep[j]))
        .collect();

    let mut states: Vec<Vec<GreedyBMatching>> = caps
        .iter()
        .map(|c| (0..count).map(|_| GreedyBMatching::new(c)).collect())
        .collect();
    let words = |states: &Vec<Vec<GreedyBMatching>>| -> usize {
        states
            .iter()
            .map(|per_cap| rep.iter().map(|&r| per_cap[r].words()).sum::<usize>())
            .sum()
    };
    let before = words(&states);
    stream.space_mut().charge(before);
    stream.pass(|e| {
        if let Some(first) = first_distinct[e.client] {
            for per_cap in states.iter_mut() {
                for state in &mut per_cap[first..] {
                    state.offer(e);
                }
            }
        }
    })?;
    let after = words(&states);
    stream.space_mut().charge(after - before);
    let out = PerLevel {
        distinct: states
            .into_iter()
            .map(|per_cap| per_cap.into_iter().map(GreedyBMatching::finish).collect())
            .collect(),
        rep,
    };
    stream.space_mut().release(after - out.words());
    Ok(out)
}

/// Folds per-level matchings left to right: `x̃^(0) = x^(0)`,
/// `x̃^(j) = merge_into(x̃^(j-1), x^(j))`. Returns every `x̃^(j)`.
pub fn merge_chain(
    per_level: &[SparseEdgeVector],
    caps: &CapacityProfile,
) -> Result<Vec<SparseEdgeVector>> {
    let mut chain: Vec<SparseEdgeVector> = Vec::with_capacity(per_level.len());
    for x in per_level {
        let next = match chain.last() {
            None => {
                x.check_feasible(caps, "x^(0)")?;
                x.clone()
            }
            Some(prev) => merge_into(prev, x, caps)?,
        };
        chain.push(next);
    }
    Ok(chain)
}

/// Folds the level matchings of capacity profile `i` and returns only
/// `x̃^(k)`, releasing the space of the inputs.
///
/// The fold runs in place on one working copy laid out over the union of
/// all supports: merging `x^(j)` raises each of its edges by at most
/// `x^(j)(e)` above the current value, which is exactly [`merge_into`].
/// Inputs are feasible by construction, so the checks are skipped.
pub(crate) fn fold_levels(
    per_level: &PerLevel,
    i: usize,
    caps: &CapacityProfile,
    stream: &mut EdgeStream,
) -> Result<SparseEdgeVector> {
    let distinct = &per_level.distinct[i];
    let first = distinct
        .first()
        .ok_or_else(|| Error::Validation("no levels to merge".into()))?;
    let mut edges: Vec<Edge> = distinct.iter().flat_map(|x| x.support()).collect();
    edges.sort_unstable();
    edges.dedup();
    let mut acc = DenseOnSupport::union_of(first, first);
    acc.values = edges.iter().map(|&e| first.get(e)).collect();
    acc.edges = edges;
    let working = acc.edges.len() + first.num_clients() + first.num_servers();
    stream.space_mut().charge(working);
    for &r in &per_level.rep[1..] {
        for (e, yv) in distinct[r].iter() {
            let pos = acc.position(e);
            let ceiling = acc.values[pos] + yv;
            acc.raise_until_blocked(pos, ceiling, caps);
        }
    }
    let out = acc.into_sparse();
    let inputs: usize = per_level.rep.iter().map(|&r| vector_words(&distinct[r])).sum();
    stream.space_mut().charge(vector_words(&out));
    stream.space_mut().release(working + inputs);
    Ok(out)
}

/// One pass: a `(κ, τ)`-matching with size factor 4 with respect to the
/// level graphs `G^(0..=k)`.
pub fn size_factor_matching(
    stream: &mut EdgeStream,
    caps: &CapacityProfile,
    levels: &LevelSets,
) -> Result<SparseEdgeVector> {
    let per_level = greedy_per_level(stream, std::slice::from_ref(caps), levels)?;
    let x = fold_levels(&per_level, 0, caps, stream)?;
    stream.space_mut().release(vector_words(&x));
    Ok(x)
}
