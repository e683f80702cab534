//! The all-norm oracle: given client values `λ`, produce `z : E -> R_+`
//! that satisfies the combined client covering constraint
//! `Σ_c λ(c) z(δ(c)) >= Σ_c λ(c)` while keeping every `ℓ_p`-norm of the
//! load within a constant factor of optimal.
//!
//! The oracle computes a nested matching hierarchy `y` of size factor `α`
//! in one pass, then copies `y` into `x` class by class (densest clients
//! first) under the budget `x(E^(j)) <= w(C^(j))/α`, and finally rescales.

mod levels;

pub use levels::{build_level_sets, LevelSets};

use serde::Serialize;

use crate::bmatch::vector_words;
use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::hierarchy::{compute_nmh, NestedMatchingHierarchy};
use crate::stream::EdgeStream;
use crate::vector::{SparseEdgeVector, TOL};

/// Size factor of the hierarchies built by [`compute_nmh`].
pub const DEFAULT_ALPHA: f64 = 8.0;

/// Values recorded at the end of outer iteration `j`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OuterIteration {
    pub j: usize,
    /// `x(E^(j))`.
    pub mass: f64,
    /// `w(C^(j))`.
    pub class_weight: f64,
}

/// Outcomes of the checks run during one oracle call.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OracleChecks {
    /// `|x(E^(j)) - w(C^(j))/α| <= 1e-9` at the end of every outer iteration.
    pub assertion: bool,
    pub max_assertion_gap: f64,
    /// `x(E^(j)) <= w(C^(j))/α` throughout outer iteration `j`.
    pub budget: bool,
    /// After inner iteration `(j, i)`: budget met or `x >= y_i` on `E^(j)`.
    pub saturation: bool,
    /// `x` only ever increases.
    pub monotone: bool,
    /// After outer iteration `j`, `supp(x) ⊆ E^(j)`.
    pub support: bool,
    /// `x <= y_ℓ` at the end.
    pub domination: bool,
    /// `x(δ(c)) <= w(c)`.
    pub client_cap: bool,
    /// `Σ λ(c) z(δ(c)) >= Σ λ(c)`.
    pub ccc: bool,
    pub ccc_lhs: f64,
    pub ccc_rhs: f64,
    /// `|z(δ(c)) - 1| <= d` with `d = (1+ε)²α`.
    pub width: bool,
    pub max_coverage: f64,
}

impl OracleChecks {
    pub fn all_pass(&self) -> bool {
        self.assertion
            && self.budget
            && self.saturation
            && self.monotone
            && self.support
            && self.domination
            && self.client_cap
            && self.ccc
            && self.width
    }

    /// `(name, passed)` pairs in a fixed order.
    pub fn named(&self) -> [(&'static str, bool); 9] {
        [
            ("oracle.assertion", self.assertion),
            ("oracle.budget", self.budget),
            ("oracle.saturation", self.saturation),
            ("oracle.monotone", self.monotone),
            ("oracle.support", self.support),
            ("oracle.domination", self.domination),
            ("oracle.clientCap", self.client_cap),
            ("oracle.ccc", self.ccc),
            ("oracle.width", self.width),
        ]
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OracleOutput {
    /// The returned solution.
    pub z: SparseEdgeVector,
    /// The pre-scaling iterate.
    pub x: SparseEdgeVector,
    #[serde(skip)]
    pub hierarchy: NestedMatchingHierarchy,
    #[serde(skip)]
    pub levels: LevelSets,
    /// `α`.
    pub alpha: f64,
    pub outer: Vec<OuterIteration>,
    pub checks: OracleChecks,
}

/// Looser of `1e-9` absolute and `1e-6` relative to `scale`.
pub(crate) fn loose_tol(scale: f64) -> f64 {
    TOL.max(1e-6 * scale.abs())
}

/// One oracle call: exactly one pass over `stream`.
///
/// `values` are rescaled internally so that the largest density is 1; the
/// class structure depends only on density ratios, and the combined
/// covering constraint is homogeneous in `λ`, so the output is the same
/// for every positive multiple of `values`.
pub fn all_norm_oracle(
    stream: &mut EdgeStream,
    weights: &[u64],
    values: &[f64],
    eps: f64,
    alpha: f64,
) -> Result<OracleOutput> {
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha must be at least 1, got {alpha}")));
    }
    if weights.len() != stream.num_clients() || values.len() != weights.len() {
        return Err(Error::Validation("weights and values must cover every client".into()));
    }
    let raw_max = values
        .iter()
        .zip(weights)
        .map(|(&v, &w)| v / w as f64)
        .fold(0.0, f64::max);
    if !(raw_max > 0.0) || !raw_max.is_finite() {
        return Err(Error::DegenerateValues);
    }
    let scaled: Vec<f64> = values.iter().map(|v| v / raw_max).collect();
    let levels = build_level_sets(&scaled, weights, eps)?;
    let kappa: Vec<f64> = weights.iter().map(|&w| w as f64).collect();
    let y = compute_nmh(stream, &kappa, &levels)?;
    stream.space_mut().charge(y.words());

    let top = y.top();
    for c in levels.clients_in(levels.k()) {
        if top.client_sum(c) <= 0.0 {
            return Err(Error::Infeasible { client: c });
        }
    }

    let filled = water_fill(&y, &levels, weights, alpha);
    let (nc, ns) = (stream.num_clients(), stream.num_servers());
    let x = SparseEdgeVector::from_sorted_unchecked(
        nc,
        ns,
        top.support()
            .zip(&filled.x)
            .filter(|&(_, &v)| v > 0.0)
            .map(|(e, &v)| (e, v))
            .collect(),
    );
    let scale = (1.0 + eps).powi(2) * alpha;
    let z = x.map_values(|e, v| scale * v / weights[e.client] as f64);
    stream.space_mut().charge(vector_words(&x) + vector_words(&z) + filled.outer.len());

    let mut checks = filled.checks;
    checks.domination = x.iter().all(|(e, v)| v <= top.get(e) + TOL);
    checks.client_cap = (0..nc).all(|c| x.client_sum(c) <= weights[c] as f64 + TOL);
    checks.ccc_lhs = values.iter().zip(z.client_sums()).map(|(l, s)| l * s).sum();
    checks.ccc_rhs = values.iter().sum();
    checks.ccc = checks.ccc_lhs >= checks.ccc_rhs - loose_tol(checks.ccc_rhs);
    let width = oracle_width(eps, alpha);
    checks.max_coverage = z.client_sums().iter().copied().fold(0.0, f64::max);
    checks.width = z.client_sums().iter().all(|&s| (s - 1.0).abs() <= width + TOL);

    stream.space_mut().release(
        y.words() + vector_words(&x) + vector_words(&z) + filled.outer.len(),
    );
    Ok(OracleOutput {
        z,
        x,
        hierarchy: y,
        levels,
        alpha,
        outer: filled.outer,
        checks,
    })
}

/// `d = (1+ε)²α`: oracle outputs satisfy `0 <= z(δ(c)) <= d`, hence
/// `|z(δ(c)) - 1| <= d`.
pub fn oracle_width(eps: f64, alpha: f64) -> f64 {
    (1.0 + eps).powi(2) * alpha
}

struct Filled {
    x: Vec<f64>,
    outer: Vec<OuterIteration>,
    checks: OracleChecks,
}

/// The budgeted copy of `y` into `x`, laid out on `supp(y_ℓ)`.
fn water_fill(
    y: &NestedMatchingHierarchy,
    levels: &LevelSets,
    weights: &[u64],
    alpha: f64,
) -> Filled {
    let edges: Vec<Edge> = y.top().support().collect();
    let class: Vec<usize> = edges
        .iter()
        .map(|e| levels.level_of(e.client).unwrap_or(usize::MAX))
        .collect();
    let caps: Vec<Vec<f64>> = y
        .levels()
        .iter()
        .map(|yi| edges.iter().map(|&e| yi.get(e)).collect())
        .collect();
    let class_weight = levels.class_weights(weights);

    let mut x = vec![0.0; edges.len()];
    let mut mass = 0.0;
    let mut outer = Vec::with_capacity(levels.k() + 1);
    let mut checks = OracleChecks {
        assertion: true,
        max_assertion_gap: 0.0,
        budget: true,
        saturation: true,
        monotone: true,
        support: true,
        domination: true,
        client_cap: true,
        ccc: true,
        ccc_lhs: 0.0,
        ccc_rhs: 0.0,
        width: true,
        max_coverage: 0.0,
    };

    for j in 0..=levels.k() {
        let target = class_weight[j] / alpha;
        checks.budget &= mass <= target + TOL;
        for yi in &caps {
            if target - mass <= 0.0 {
                break;
            }
            for (pos, &cls) in class.iter().enumerate() {
                if cls > j {
                    continue;
                }
                let remaining = target - mass;
                if remaining <= 0.0 {
                    break;
                }
                let gap = yi[pos] - x[pos];
                if gap > 0.0 {
                    let inc = gap.min(remaining);
                    checks.monotone &= inc >= 0.0;
                    x[pos] += inc;
                    mass += inc;
                }
            }
            checks.budget &= mass <= target + TOL;
            checks.saturation &= target - mass <= TOL
                || class
                    .iter()
                    .enumerate()
                    .all(|(pos, &cls)| cls > j || x[pos] + TOL >= yi[pos]);
        }
        let on_class: f64 = class
            .iter()
            .zip(&x)
            .filter(|(&cls, _)| cls <= j)
            .map(|(_, &v)| v)
            .sum();
        checks.support &= class.iter().zip(&x).all(|(&cls, &v)| cls <= j || v == 0.0);
        let gap = (on_class - target).abs();
        checks.max_assertion_gap = checks.max_assertion_gap.max(gap);
        checks.assertion &= gap <= TOL;
        outer.push(OuterIteration {
            j,
            mass: on_class,
            class_weight: class_weight[j],
        });
    }
    Filled { x, outer, checks }
}
