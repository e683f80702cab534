//! Multiplicative weights over the client covering constraints
//! `z(δ(c)) >= 1`, driven by the all-norm oracle.

use serde::Serialize;

use crate::bmatch::vector_words;
use crate::error::{Error, Result};
use crate::oracle::{all_norm_oracle, oracle_width, OracleOutput, DEFAULT_ALPHA};
use crate::stream::EdgeStream;
use crate::vector::SparseEdgeVector;

/// Iterations between renormalizations of `λ` to mean 1.
pub const RENORMALIZE_EVERY: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct MwuConfig {
    pub eps: f64,
    pub alpha: f64,
    /// Replaces the worst-case iteration budget `T`.
    pub t_override: Option<usize>,
    /// Stop as soon as the running average covers every client to `1 - ε`.
    pub early_stop: bool,
    /// Keep one [`TraceRow`] per iteration.
    pub trace: bool,
}

impl Default for MwuConfig {
    fn default() -> Self {
        MwuConfig {
            eps: 1.0 / 16.0,
            alpha: DEFAULT_ALPHA,
            t_override: None,
            early_stop: true,
            trace: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceRow {
    pub t: usize,
    pub min_coverage: f64,
    pub passes: usize,
}

/// Aggregated oracle check failures over all iterations.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckTally {
    pub calls: usize,
    /// `(check name, number of failing calls)`.
    pub failures: Vec<(String, usize)>,
    pub max_assertion_gap: f64,
    pub max_coverage: f64,
}

impl CheckTally {
    fn record(&mut self, out: &OracleOutput) {
        self.calls += 1;
        if self.failures.is_empty() {
            self.failures = out
                .checks
                .named()
                .iter()
                .map(|(n, _)| (n.to_string(), 0))
                .collect();
        }
        for ((_, count), (_, ok)) in self.failures.iter_mut().zip(out.checks.named()) {
            if !ok {
                *count += 1;
            }
        }
        self.max_assertion_gap = self.max_assertion_gap.max(out.checks.max_assertion_gap);
        self.max_coverage = self.max_coverage.max(out.checks.max_coverage);
    }

    pub fn all_pass(&self) -> bool {
        self.failures.iter().all(|(_, n)| *n == 0)
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MwuOutcome {
    /// `z̄ = (1/T) Σ_t z^(t)`.
    pub z_bar: SparseEdgeVector,
    /// Iterations actually run.
    pub iterations: usize,
    /// The iteration budget `T`.
    pub budget: usize,
    pub early_stopped: bool,
    pub min_coverage: f64,
    /// Stream passes consumed by this call.
    pub passes: usize,
    /// `max |m_c^(t)|` over all iterations.
    pub max_abs_loss: f64,
    pub checks: CheckTally,
    pub trace: Vec<TraceRow>,
}

/// `T = ⌈8 d² ln n / ε²⌉`, at least 1.
pub fn iteration_budget(eps: f64, width: f64, num_clients: usize) -> usize {
    let t = (8.0 * width * width * (num_clients as f64).ln() / (eps * eps)).ceil();
    (t as usize).max(1)
}

pub fn mwu_solve(stream: &mut EdgeStream, weights: &[u64], config: &MwuConfig) -> Result<MwuOutcome> {
    mwu_solve_with(stream, weights, config, |_, _| Ok(()))
}

/// [`mwu_solve`] with a hook that sees every oracle output.
pub fn mwu_solve_with<F>(
    stream: &mut EdgeStream,
    weights: &[u64],
    config: &MwuConfig,
    mut inspect: F,
) -> Result<MwuOutcome>
where
    F: FnMut(usize, &OracleOutput) -> Result<()>,
{
    let MwuConfig {
        eps,
        alpha,
        t_override,
        early_stop,
        trace,
    } = *config;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    if t_override == Some(0) {
        return Err(Error::Validation("the iteration override must be at least 1".into()));
    }
    let n = stream.num_clients();
    let width = oracle_width(eps, alpha);
    let eta = eps / (4.0 * width);
    let budget = t_override.unwrap_or_else(|| iteration_budget(eps, width, n));

    let start_passes = stream.passes();
    let mut lambda = vec![1.0; n];
    let mut coverage_sum = vec![0.0; n];
    let mut running = SparseEdgeVector::zeros(n, stream.num_servers());
    let mut outcome_trace = Vec::new();
    let mut tally = CheckTally::default();
    let mut max_abs_loss: f64 = 0.0;
    let mut iterations = 0;
    let mut min_coverage = 0.0;
    let mut early_stopped = false;
    stream.space_mut().charge(3 * n + vector_words(&running));

    for t in 1..=budget {
        let out = all_norm_oracle(stream, weights, &lambda, eps, alpha)?;
        inspect(t, &out)?;
        tally.record(&out);

        let before = vector_words(&running);
        running = running.add_scaled(&out.z, 1.0);
        stream.space_mut().charge(vector_words(&running));
        stream.space_mut().release(before);

        for c in 0..n {
            let cov = out.z.client_sum(c);
            coverage_sum[c] += cov;
            // Over-covered clients lose value, under-covered ones gain it.
            let loss = (cov - 1.0) / width;
            max_abs_loss = max_abs_loss.max(loss.abs());
            if loss.abs() > 1.0 + 1e-12 {
                return Err(Error::Invariant(format!(
                    "loss {loss} of client {c} exceeds 1 in iteration {t}"
                )));
            }
            lambda[c] *= 1.0 - eta * loss;
        }
        if t % RENORMALIZE_EVERY == 0 {
            let mean = lambda.iter().sum::<f64>() / n as f64;
            lambda.iter_mut().for_each(|l| *l /= mean);
        }

        iterations = t;
        min_coverage = coverage_sum.iter().copied().fold(f64::INFINITY, f64::min) / t as f64;
        log::debug!(
            "mwu t={t} min_coverage={min_coverage:.6} passes={}",
            stream.passes()
        );
        if trace {
            outcome_trace.push(TraceRow {
                t,
                min_coverage,
                passes: stream.passes() - start_passes,
            });
        }
        if early_stop && min_coverage >= 1.0 - eps {
            early_stopped = t < budget;
            break;
        }
    }

    let z_bar = running.scaled(1.0 / iterations as f64);
    stream.space_mut().release(3 * n + vector_words(&running));
    Ok(MwuOutcome {
        z_bar,
        iterations,
        budget,
        early_stopped,
        min_coverage,
        passes: stream.passes() - start_passes,
        max_abs_loss,
        checks: tally,
        trace: outcome_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, GraphSpec};

    #[test]
    fn budget_formula() {
        let d = oracle_width(1.0 / 16.0, 8.0);
        assert_eq!(d, 9.03125);
        let expect = (8.0 * d * d * 8f64.ln() * 256.0).ceil() as usize;
        assert_eq!(iteration_budget(1.0 / 16.0, d, 8), expect);
        assert_eq!(iteration_budget(1.0 / 16.0, d, 1), 1);
    }

    #[test]
    fn single_edge_is_over_covered() {
        let g = GraphSpec::new(1, 1, vec![1], vec![Edge::new(0, 0)]).unwrap();
        let mut s = EdgeStream::from_graph(&g);
        let out = mwu_solve(&mut s, g.weights(), &MwuConfig::default()).unwrap();
        assert!((out.z_bar.client_sum(0) - 1.12890625).abs() < 1e-12);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.passes, 1);
    }

    #[test]
    fn single_iteration_override_returns_first_oracle_output() {
        let g = GraphSpec::new(2, 2, vec![1, 2], vec![Edge::new(0, 0), Edge::new(1, 1), Edge::new(1, 0)]).unwrap();
        let mut s = EdgeStream::from_graph(&g);
        let cfg = MwuConfig { t_override: Some(1), early_stop: false, ..MwuConfig::default() };
        let out = mwu_solve(&mut s, g.weights(), &cfg).unwrap();
        let mut s2 = EdgeStream::from_graph(&g);
        let first = all_norm_oracle(&mut s2, g.weights(), &[1.0, 1.0], cfg.eps, cfg.alpha).unwrap();
        assert_eq!(out.z_bar, first.z);
        assert!(matches!(
            mwu_solve(&mut s, g.weights(), &MwuConfig { t_override: Some(0), ..cfg }),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn perfect_matching_reaches_coverage() {
        let g = GraphSpec::new(2, 2, vec![1, 1], vec![Edge::new(0, 0), Edge::new(1, 1)]).unwrap();
        let mut s = EdgeStream::from_graph(&g);
        let out = mwu_solve(&mut s, g.weights(), &MwuConfig { trace: true, ..MwuConfig::default() }).unwrap();
        for c in 0..2 {
            assert!(out.z_bar.client_sum(c) >= 15.0 / 16.0);
        }
        assert!(out.checks.all_pass());
        assert_eq!(out.trace.len(), out.iterations);
        assert!(out.max_abs_loss <= 1.0);
    }
}
