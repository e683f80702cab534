use serde::Serialize;

use crate::error::{Error, Result};

/// Client classes by value-per-unit-weight `ρ(c) = λ(c)/w(c)`.
///
/// `C^(j) = { c : ρ(c) >= R e^{-εj} }` for `j = 0..=k`, where `R` is the
/// largest density. Clients below the last threshold, and clients with
/// zero value, belong to no class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSets {
    max_density: f64,
    eps: f64,
    k: usize,
    level_of: Vec<Option<usize>>,
}

/// Rounding slack so that densities sitting exactly on a threshold
/// `R e^{-εj}` land in class `j` despite floating error.
const THRESHOLD_SLACK: f64 = 1e-12;

pub fn build_level_sets(values: &[f64], weights: &[u64], eps: f64) -> Result<LevelSets> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    if values.len() != weights.len() {
        return Err(Error::Validation(format!(
            "{} values for {} clients",
            values.len(),
            weights.len()
        )));
    }
    if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Validation("client values must be finite and nonnegative".into()));
    }
    if weights.iter().any(|&w| w < 1) {
        return Err(Error::Validation("client weights must be at least 1".into()));
    }
    let density: Vec<f64> = values
        .iter()
        .zip(weights)
        .map(|(&v, &w)| v / w as f64)
        .collect();
    let max_density = density.iter().copied().fold(0.0, f64::max);
    if max_density <= 0.0 {
        return Err(Error::DegenerateValues);
    }
    let total_weight: u64 = weights.iter().sum();
    let k = ((max_density * total_weight as f64 / eps).ln() / eps).ceil().max(0.0) as usize;
    let level_of = density
        .iter()
        .map(|&rho| {
            if rho <= 0.0 {
                return None;
            }
            let j = ((max_density / rho).ln() / eps - THRESHOLD_SLACK).ceil().max(0.0);
            (j <= k as f64).then_some(j as usize)
        })
        .collect();
    Ok(LevelSets {
        max_density,
        eps,
        k,
        level_of,
    })
}

impl LevelSets {
    /// Explicit class assignment, used to drive the matching routines with
    /// hand-built level structures.
    pub fn from_levels(level_of: Vec<Option<usize>>, k: usize) -> Result<Self> {
        if level_of.iter().flatten().any(|&j| j > k) {
            return Err(Error::Validation(format!("a client level exceeds k = {k}")));
        }
        Ok(LevelSets {
            max_density: 1.0,
            eps: 1.0,
            k,
            level_of,
        })
    }

    /// Every client in `C^(0)` and `k = 0`.
    pub fn single(num_clients: usize) -> Self {
        LevelSets {
            max_density: 1.0,
            eps: 1.0,
            k: 0,
            level_of: vec![Some(0); num_clients],
        }
    }

    /// `R = max_c ρ(c)`.
    pub fn max_density(&self) -> f64 {
        self.max_density
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Index of the last class.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_clients(&self) -> usize {
        self.level_of.len()
    }

    /// Smallest `j` with `c ∈ C^(j)`, or `None` if `c ∉ C^(k)`.
    pub fn level_of(&self, client: usize) -> Option<usize> {
        self.level_of[client]
    }

    pub fn levels(&self) -> &[Option<usize>] {
        &self.level_of
    }

    /// Whether `client ∈ C^(j)`.
    pub fn contains(&self, j: usize, client: usize) -> bool {
        matches!(self.level_of[client], Some(l) if l <= j)
    }

    /// `r_j = R e^{-εj}`.
    pub fn threshold(&self, j: usize) -> f64 {
        self.max_density * (-self.eps * j as f64).exp()
    }

    pub fn clients_in(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.level_of.len()).filter(move |&c| self.contains(j, c))
    }

    /// `w(C^(j))` for every `j = 0..=k`.
    pub fn class_weights(&self, weights: &[u64]) -> Vec<f64> {
        let mut per_level = vec![0.0; self.k + 1];
        for (c, l) in self.level_of.iter().enumerate() {
            if let Some(l) = *l {
                per_level[l] += weights[c] as f64;
            }
        }
        let mut acc = 0.0;
        per_level
            .into_iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_client_sixteenth() {
        let l = build_level_sets(&[1.0], &[1], 1.0 / 16.0).unwrap();
        assert_eq!(l.max_density(), 1.0);
        // 16 ln 16 = 44.36
        assert_eq!(l.k(), 45);
        assert_eq!(l.level_of(0), Some(0));
    }

    #[test]
    fn ties_share_the_top_class() {
        let l = build_level_sets(&[2.0, 1.0], &[2, 1], 0.1).unwrap();
        assert_eq!(l.levels(), &[Some(0), Some(0)]);
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        let eps: f64 = 1.0 / 16.0;
        let l = build_level_sets(&[1.0, (-eps).exp()], &[1, 1], eps).unwrap();
        assert_eq!(l.levels(), &[Some(0), Some(1)]);
        assert!(l.contains(1, 1) && !l.contains(0, 1));
    }

    #[test]
    fn zero_values_and_degenerate_input() {
        let l = build_level_sets(&[1.0, 0.0], &[1, 1], 0.5).unwrap();
        assert_eq!(l.level_of(1), None);
        assert!(matches!(
            build_level_sets(&[0.0, 0.0], &[1, 1], 0.5),
            Err(Error::DegenerateValues)
        ));
        assert!(build_level_sets(&[1.0], &[1], 1.5).is_err());
    }

    #[test]
    fn classes_are_nested_and_cover_value() {
        let values = [5.0, 1.0, 0.3, 1e-9, 2.5, 0.07];
        let weights = [1, 2, 1, 3, 4, 1];
        let eps = 0.25;
        let l = build_level_sets(&values, &weights, eps).unwrap();
        for j in 0..l.k() {
            assert!(l.clients_in(j).all(|c| l.contains(j + 1, c)));
        }
        for c in 0..values.len() {
            let rho = values[c] / weights[c] as f64;
            for j in 0..=l.k() {
                assert_eq!(l.contains(j, c), rho >= l.threshold(j) * (1.0 - 1e-12), "c={c} j={j}");
            }
        }
        let total: f64 = values.iter().sum();
        let kept: f64 = l.clients_in(l.k()).map(|c| values[c]).sum();
        assert!(kept >= total - eps);
        let cw = l.class_weights(&weights);
        assert_eq!(cw.len(), l.k() + 1);
        assert!(cw.windows(2).all(|w| w[0] <= w[1]));
    }
}
