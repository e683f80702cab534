//! The full solver: degree check, scan, MWU, normalization and rounding.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::baseline::{assignment_count, brute_force_opt, BruteForceOpt, SizeFactorVerifier};
use crate::error::{Error, Result};
use crate::graph::{Assignment, GraphSpec};
use crate::load::{fractional_loads, load_vector, lp_norm, weight_norm, NormOrder};
use crate::mwu::{mwu_solve_with, MwuConfig, MwuOutcome, TraceRow};
use crate::oracle::{OracleOutput, DEFAULT_ALPHA};
use crate::rounding::{lst_round, normalize_clients, RoundingOutcome};
use crate::stream::EdgeStream;
use crate::vector::{SparseEdgeVector, TOL};

/// Instances with at most this many assignments get brute-force ratios
/// even without `verify`.
pub const TINY_ASSIGNMENTS: f64 = 65_536.0;

/// Ratio every norm of the final assignment must stay within.
pub const ALL_NORM_BOUND: f64 = 19.2;

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub eps: f64,
    pub alpha: f64,
    pub t_override: Option<usize>,
    pub early_stop: bool,
    /// Require brute-force ratios and check every hierarchy's size factor.
    pub verify: bool,
    /// Feed the edges in a seeded random order.
    pub shuffle_seed: Option<u64>,
    pub trace: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            eps: 1.0 / 16.0,
            alpha: DEFAULT_ALPHA,
            t_override: None,
            early_stop: true,
            verify: false,
            shuffle_seed: None,
            trace: false,
        }
    }
}

impl SolveConfig {
    fn mwu(&self) -> MwuConfig {
        MwuConfig {
            eps: self.eps,
            alpha: self.alpha,
            t_override: self.t_override,
            early_stop: self.early_stop,
            trace: self.trace,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct InstanceSummary {
    pub clients: usize,
    pub servers: usize,
    pub edges: usize,
    pub total_weight: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ParamSummary {
    pub eps: f64,
    pub alpha: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub iterations: usize,
    pub early_stopped: bool,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SolveReport {
    pub instance: InstanceSummary,
    pub params: ParamSummary,
    pub assignment: Assignment,
    pub loads: Vec<f64>,
    pub norms: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opt: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratios: Option<BTreeMap<String, f64>>,
    pub passes: usize,
    pub peak_words: usize,
    pub wall_millis: u64,
    pub checks: BTreeMap<String, &'static str>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
    #[serde(skip)]
    pub mwu: Option<MwuOutcome>,
    /// The normalized fractional assignment that was rounded.
    #[serde(skip)]
    pub fractional: Option<SparseEdgeVector>,
    #[serde(skip)]
    pub rounding: Option<RoundingOutcome>,
}

impl SolveReport {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.values().all(|&v| v == "pass")
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|(_, &v)| v != "pass")
            .map(|(k, _)| k.as_str())
            .collect()
    }

    /// The report as pretty JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Wall clock for `wallMillis`. Browsers without a host clock report 0.
struct Stopwatch(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    fn start() -> Self {
        Stopwatch(std::time::Instant::now())
    }

    #[cfg(target_arch = "wasm32")]
    fn start() -> Self {
        Stopwatch()
    }

    #[cfg(not(target_arch = "wasm32"))]
    fn millis(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }

    #[cfg(target_arch = "wasm32")]
    fn millis(&self) -> u64 {
        0
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

/// Runs the whole pipeline on `graph`, reading edges from `stream`.
///
/// Passes used: one degree check, one scan, then one per MWU iteration.
pub fn run_pipeline(graph: &GraphSpec, stream: EdgeStream, config: &SolveConfig) -> Result<SolveReport> {
    run_pipeline_with(graph, stream, config, |_, _| Ok(()))
}

/// [`run_pipeline`] with a hook that sees every oracle output.
pub fn run_pipeline_with<F>(
    graph: &GraphSpec,
    stream: EdgeStream,
    config: &SolveConfig,
    mut inspect: F,
) -> Result<SolveReport>
where
    F: FnMut(usize, &OracleOutput) -> Result<()>,
{
    let started = Stopwatch::start();
    if stream.num_clients() != graph.num_clients() || stream.num_servers() != graph.num_servers() {
        return Err(Error::Validation("stream does not match the graph".into()));
    }
    let opt_needed = config.verify || assignment_count(graph) <= TINY_ASSIGNMENTS;
    let opt: Option<BruteForceOpt> = if opt_needed {
        Some(brute_force_opt(graph, &NormOrder::standard())?)
    } else {
        None
    };

    let mut stream = match config.shuffle_seed {
        Some(seed) => stream.shuffled(seed)?,
        None => stream,
    };
    let start_passes = stream.passes();
    let (nc, ns) = (graph.num_clients(), graph.num_servers());

    let mut degrees = vec![0usize; nc];
    stream.space_mut().charge(nc);
    stream.pass(|e| degrees[e.client] += 1)?;
    stream.space_mut().release(nc);
    if let Some(c) = degrees.iter().position(|&d| d == 0) {
        return Err(Error::Infeasible { client: c });
    }

    let weights = graph.weights();
    let mut edges = 0usize;
    let mut scanned_weight = 0u64;
    let mut seen = vec![false; nc];
    stream.space_mut().charge(nc + 2);
    stream.pass(|e| {
        edges += 1;
        if !seen[e.client] {
            seen[e.client] = true;
            scanned_weight += weights[e.client];
        }
    })?;
    stream.space_mut().release(nc + 2);
    if edges != graph.edges().len() || scanned_weight != graph.total_weight() {
        return Err(Error::Validation("stream disagrees with the graph header".into()));
    }

    let mut size_factor_ok = true;
    let verify = config.verify;
    let mut verifier = SizeFactorVerifier::new(graph);
    let mwu = mwu_solve_with(&mut stream, weights, &config.mwu(), |t, out| {
        inspect(t, out)?;
        if verify {
            let report = verifier.check_hierarchy(&out.hierarchy, &out.levels, out.alpha)?;
            size_factor_ok &= report.all_pass();
        }
        Ok(())
    })?;

    if mwu.min_coverage < 1.0 - config.eps - TOL {
        return Err(Error::Invariant(format!(
            "covering stopped at {} after {} iterations, below 1 - eps",
            mwu.min_coverage, mwu.iterations
        )));
    }
    let z = normalize_clients(&mwu.z_bar, config.eps)?;
    let rounded = lst_round(&z, weights)?;
    let assignment = rounded.assignment.clone();
    assignment.check(graph)?;

    let loads = load_vector(graph, &assignment)?;
    let frac = fractional_loads(&z, weights);
    let mut norms = BTreeMap::new();
    let mut additive = true;
    for p in NormOrder::standard() {
        let v = lp_norm(&loads, p);
        additive &= v <= lp_norm(&frac, p) + weight_norm(weights, p) + TOL;
        norms.insert(p.key(), v);
    }

    let mut checks = BTreeMap::new();
    for (name, failures) in &mwu.checks.failures {
        checks.insert(name.clone(), verdict(*failures == 0));
    }
    checks.insert("mwu.coverage".into(), verdict(mwu.min_coverage >= 1.0 - config.eps - TOL));
    checks.insert("mwu.loss".into(), verdict(mwu.max_abs_loss <= 1.0 + 1e-12));
    checks.insert("rounding.loadPreservation".into(), verdict(rounded.max_load_drift <= TOL));
    checks.insert("rounding.additive".into(), verdict(additive));
    let passes = stream.passes() - start_passes;
    checks.insert("passes".into(), verdict(passes == mwu.iterations + 2));

    let (opt_map, ratios) = match &opt {
        Some(o) => {
            let opt_map: BTreeMap<String, f64> =
                o.entries.iter().map(|e| (e.p.key(), e.value)).collect();
            let ratios: BTreeMap<String, f64> = opt_map
                .iter()
                .map(|(k, &v)| (k.clone(), norms[k] / v))
                .collect();
            (Some(opt_map), Some(ratios))
        }
        None => (None, None),
    };
    if let Some(r) = &ratios {
        checks.insert(
            "allNorm".into(),
            verdict(r.values().all(|&v| v <= ALL_NORM_BOUND + TOL)),
        );
    }
    if verify {
        checks.insert("nmh.sizeFactor".into(), verdict(size_factor_ok));
    }

    Ok(SolveReport {
        instance: InstanceSummary {
            clients: nc,
            servers: ns,
            edges,
            total_weight: graph.total_weight(),
        },
        params: ParamSummary {
            eps: config.eps,
            alpha: config.alpha,
            t: mwu.budget,
            iterations: mwu.iterations,
            early_stopped: mwu.early_stopped,
        },
        assignment,
        loads: loads.as_slice().to_vec(),
        norms,
        opt: opt_map,
        ratios,
        passes,
        peak_words: stream.space().peak_words(),
        wall_millis: started.millis(),
        checks,
        trace: mwu.trace.clone(),
        mwu: Some(mwu),
        fractional: Some(z),
        rounding: Some(rounded),
    })
}
