//! Browser bindings for the solver. Every operation takes the graph in the
//! text format read by the CLI and returns a JSON string.
//!
//! The plain functions are usable from Rust; the `#[wasm_bindgen]` wrappers
//! turn their errors into JavaScript exceptions.

use allnorm::hierarchy::compute_nmh;
use allnorm::load::fractional_loads;
use allnorm::oracle::{all_norm_oracle, build_level_sets, DEFAULT_ALPHA};
use allnorm::{
    generate_instance, lp_norm, parse_graph_str, run_pipeline, EdgeStream, GeneratorParams, GraphSpec, NormOrder,
    SolveConfig,
};
use serde_json::{json, Map, Value};
use wasm_bindgen::prelude::*;

/// The parsed graph, its stream, and a JSON shape for drawing.
fn load(text: &str) -> Result<(GraphSpec, EdgeStream, Value), String> {
    let (graph, stream) = parse_graph_str(text).map_err(|e| e.to_string())?;
    let edges: Vec<[usize; 2]> = graph.edges().iter().map(|e| [e.client, e.server]).collect();
    let shape = json!({
        "clients": graph.num_clients(),
        "servers": graph.num_servers(),
        "weights": graph.weights(),
        "edges": edges,
    });
    Ok((graph, stream, shape))
}

/// A generated instance in the graph text format.
pub fn generate(kind: &str, clients: usize, servers: usize, max_weight: u64, seed: u64) -> Result<String, String> {
    let kind = kind.parse().map_err(|e: allnorm::Error| e.to_string())?;
    let params = GeneratorParams { clients, servers, max_weight };
    generate_instance(kind, params, seed)
        .map(|g| g.to_text())
        .map_err(|e| e.to_string())
}

/// Runs the full solver. The result holds the solve report under `report`
/// and the graph shape under `graph`.
pub fn solve(text: &str, eps: f64, shuffle_seed: Option<u64>) -> Result<String, String> {
    let (graph, stream, shape) = load(text)?;
    let config = SolveConfig { eps, shuffle_seed, ..SolveConfig::default() };
    let report = run_pipeline(&graph, stream, &config).map_err(|e| e.to_string())?;
    let report: Value = serde_json::from_str(&report.to_json()).map_err(|e| e.to_string())?;
    Ok(json!({ "graph": shape, "report": report }).to_string())
}

/// One oracle call with client values `values`.
pub fn oracle(text: &str, values: &[f64], eps: f64) -> Result<String, String> {
    let (graph, mut stream, shape) = load(text)?;
    if values.len() != graph.num_clients() {
        return Err(format!("expected {} values, got {}", graph.num_clients(), values.len()));
    }
    let out = all_norm_oracle(&mut stream, graph.weights(), values, eps, DEFAULT_ALPHA).map_err(|e| e.to_string())?;
    let loads = fractional_loads(&out.z, graph.weights());
    let norms: Map<String, Value> = NormOrder::standard()
        .into_iter()
        .map(|p| (p.key(), json!(lp_norm(&loads, p))))
        .collect();
    Ok(json!({
        "graph": shape,
        "z": out.z,
        "levelOf": out.levels.levels(),
        "loads": loads.as_slice(),
        "norms": norms,
        "checksPass": out.checks.all_pass(),
    })
    .to_string())
}

/// The nested matching hierarchy computed in one pass with unit values.
pub fn hierarchy(text: &str, eps: f64) -> Result<String, String> {
    let (graph, mut stream, shape) = load(text)?;
    let levels = build_level_sets(&vec![1.0; graph.num_clients()], graph.weights(), eps).map_err(|e| e.to_string())?;
    let kappa: Vec<f64> = graph.weights().iter().map(|&w| w as f64).collect();
    let h = compute_nmh(&mut stream, &kappa, &levels).map_err(|e| e.to_string())?;
    let dump: Vec<Value> = h
        .levels()
        .iter()
        .enumerate()
        .map(|(i, x)| {
            json!({
                "i": i,
                "serverCapacity": 2f64.powi(i as i32),
                "mass": x.total(),
                "serverSums": x.server_sums(),
                "entries": x,
            })
        })
        .collect();
    Ok(json!({ "graph": shape, "depth": h.depth(), "levels": dump }).to_string())
}

fn js<T>(r: Result<T, String>) -> Result<T, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = generate)]
pub fn generate_js(kind: &str, clients: usize, servers: usize, max_weight: u32, seed: u32) -> Result<String, JsValue> {
    js(generate(kind, clients, servers, max_weight as u64, seed as u64))
}

/// `shuffle_seed < 0` keeps the input edge order.
#[wasm_bindgen(js_name = solve)]
pub fn solve_js(text: &str, eps: f64, shuffle_seed: i32) -> Result<String, JsValue> {
    js(solve(text, eps, u64::try_from(shuffle_seed).ok()))
}

#[wasm_bindgen(js_name = oracle)]
pub fn oracle_js(text: &str, values: Vec<f64>, eps: f64) -> Result<String, JsValue> {
    js(oracle(text, &values, eps))
}

#[wasm_bindgen(js_name = hierarchy)]
pub fn hierarchy_js(text: &str, eps: f64) -> Result<String, JsValue> {
    js(hierarchy(text, eps))
}
