//! Server load vectors and their `ℓ_p`-norms.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::{Assignment, GraphSpec};
use crate::vector::SparseEdgeVector;

/// The exponent of an `ℓ_p`-norm: a finite `p >= 1` or infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormOrder {
    Finite(f64),
    Infinity,
}

impl NormOrder {
    pub fn finite(p: f64) -> Result<Self> {
        if p >= 1.0 && p.is_finite() {
            Ok(NormOrder::Finite(p))
        } else {
            Err(Error::Domain(format!("norm order must be at least 1, got {p}")))
        }
    }

    /// The orders reported by the pipeline: 1, 2, 3, 4 and infinity.
    pub fn standard() -> [NormOrder; 5] {
        [
            NormOrder::Finite(1.0),
            NormOrder::Finite(2.0),
            NormOrder::Finite(3.0),
            NormOrder::Finite(4.0),
            NormOrder::Infinity,
        ]
    }

    /// `1 - 1/p`, which is 1 for `p = ∞`.
    pub fn conjugate_exponent(self) -> f64 {
        match self {
            NormOrder::Finite(p) => 1.0 - 1.0 / p,
            NormOrder::Infinity => 1.0,
        }
    }

    /// Stable textual key: `"1"`, `"2.5"`, `"inf"`.
    pub fn key(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for NormOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormOrder::Finite(p) => write!(f, "{p}"),
            NormOrder::Infinity => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for NormOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "infinity" | "∞" => Ok(NormOrder::Infinity),
            _ => s
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("cannot parse norm order {s:?}")))
                .and_then(NormOrder::finite),
        }
    }
}

impl Serialize for NormOrder {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Per-server nonnegative loads.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct LoadVector(Vec<f64>);

impl LoadVector {
    pub fn new(loads: Vec<f64>) -> Result<Self> {
        if loads.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::Validation("loads must be finite and nonnegative".into()));
        }
        Ok(LoadVector(loads))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn norm(&self, p: NormOrder) -> f64 {
        lp_norm(self, p)
    }
}

/// Something whose server loads can be computed.
#[derive(Clone, Copy, Debug)]
pub enum LoadSource<'a> {
    Integral(&'a Assignment),
    Fractional(&'a SparseEdgeVector),
}

impl<'a> From<&'a Assignment> for LoadSource<'a> {
    fn from(a: &'a Assignment) -> Self {
        LoadSource::Integral(a)
    }
}

impl<'a> From<&'a SparseEdgeVector> for LoadSource<'a> {
    fn from(z: &'a SparseEdgeVector) -> Self {
        LoadSource::Fractional(z)
    }
}

/// `L(s) = Σ_c w(c) z(cs)`; for an assignment, the total weight assigned to `s`.
pub fn load_vector<'a>(graph: &GraphSpec, source: impl Into<LoadSource<'a>>) -> Result<LoadVector> {
    let mut loads = vec![0.0; graph.num_servers()];
    match source.into() {
        LoadSource::Integral(a) => {
            a.check(graph)?;
            for e in a.edges() {
                loads[e.server] += graph.weight(e.client) as f64;
            }
        }
        LoadSource::Fractional(z) => {
            for (e, v) in z.iter() {
                if !graph.has_edge(e) {
                    return Err(crate::Error::UnknownEdge(e));
                }
                loads[e.server] += graph.weight(e.client) as f64 * v;
            }
        }
    }
    Ok(LoadVector(loads))
}

/// Loads of a fractional vector from weights alone, without checking edges
/// against a graph.
pub fn fractional_loads(z: &SparseEdgeVector, weights: &[u64]) -> LoadVector {
    let mut loads = vec![0.0; z.num_servers()];
    for (e, v) in z.iter() {
        loads[e.server] += weights[e.client] as f64 * v;
    }
    LoadVector(loads)
}

/// `(Σ_s L(s)^p)^{1/p}`, or `max_s L(s)` for `p = ∞`.
///
/// The maximum load is factored out before exponentiating so that large
/// `p` neither overflows nor underflows.
pub fn lp_norm(loads: &LoadVector, p: NormOrder) -> f64 {
    norm_of(&loads.0, p)
}

pub(crate) fn norm_of(values: &[f64], p: NormOrder) -> f64 {
    let max = values.iter().copied().fold(0.0, f64::max);
    match p {
        NormOrder::Infinity => max,
        _ if max == 0.0 => 0.0,
        NormOrder::Finite(p) if p == 1.0 => values.iter().sum(),
        NormOrder::Finite(p) => {
            let s: f64 = values.iter().map(|&v| (v / max).powf(p)).sum();
            max * s.powf(1.0 / p)
        }
    }
}

/// `‖w‖_p` of the client weight vector.
pub fn weight_norm(weights: &[u64], p: NormOrder) -> f64 {
    let w: Vec<f64> = weights.iter().map(|&w| w as f64).collect();
    norm_of(&w, p)
}
