use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use allnorm::baseline::{brute_force_opt, exact_max_bmatching, SizeFactorVerifier};
use allnorm::bmatch::{greedy_maximal_bmatching, size_factor_matching};
use allnorm::hierarchy::{
    compute_nmh, is_maximally_nested, nmh_decompose, nmh_power_sum_lower, nmh_power_sum_upper,
};
use allnorm::load::{fractional_loads, lp_norm};
use allnorm::mwu::TraceRow;
use allnorm::oracle::{all_norm_oracle, build_level_sets, OracleOutput};
use allnorm::{
    generate_instance, parse_graph, CapacityProfile, Error, GeneratorKind, GeneratorParams,
    GraphSpec, NormOrder, SolveConfig, SolveReport,
};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "allnorm", version, about = "Semi-streaming all-norm load balancing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic instance in the text graph format.
    Gen(GenArgs),
    /// Solve an instance and print the JSON report.
    Solve(SolveArgs),
    /// Run the oracle once with client values read from a file.
    Oracle(OracleArgs),
    /// Dump the nested matching hierarchy of one oracle pass as JSON.
    Nmh(NmhArgs),
    /// Check every building block against exact references on a tiny instance.
    Verify(VerifyArgs),
    /// Solve every graph in a directory and print a CSV summary.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// random, complete, nested-star or regular(d).
    #[arg(long, default_value = "random")]
    kind: GeneratorKind,
    #[arg(long, default_value_t = 8)]
    clients: usize,
    #[arg(long, default_value_t = 4)]
    servers: usize,
    #[arg(long, default_value_t = 1)]
    max_weight: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SolveFlags {
    #[arg(long, default_value_t = 0.0625)]
    eps: f64,
    #[arg(long, default_value_t = 8.0)]
    alpha: f64,
    /// Run exactly this many MWU iterations at most instead of the worst-case budget.
    #[arg(long)]
    t_override: Option<usize>,
    /// Run all iterations even after every client is covered.
    #[arg(long)]
    no_early_stop: bool,
    /// Compute brute-force optima and check every hierarchy against max-flow.
    #[arg(long)]
    verify: bool,
    /// Feed edges in a seeded random order.
    #[arg(long)]
    shuffle_seed: Option<u64>,
}

impl SolveFlags {
    fn config(&self, trace: bool) -> SolveConfig {
        SolveConfig {
            eps: self.eps,
            alpha: self.alpha,
            t_override: self.t_override,
            early_stop: !self.no_early_stop,
            verify: self.verify,
            shuffle_seed: self.shuffle_seed,
            trace,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    graph: PathBuf,
    #[command(flatten)]
    flags: SolveFlags,
    /// Also write the report here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write a per-iteration CSV trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    graph: PathBuf,
    /// Lines `l <client> <value>`; unlisted clients get value 0.
    lambda: PathBuf,
    #[arg(long, default_value_t = 0.0625)]
    eps: f64,
    #[arg(long, default_value_t = 8.0)]
    alpha: f64,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct NmhArgs {
    graph: PathBuf,
    /// Client values; all 1 when omitted.
    #[arg(long)]
    lambda: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0625)]
    eps: f64,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    graph: PathBuf,
    #[command(flatten)]
    flags: SolveFlags,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    dir: PathBuf,
    #[command(flatten)]
    flags: SolveFlags,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// A command failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_validation() { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

/// Writes to stdout; a closed pipe is not an error.
fn print_out(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn emit(json: &str, path: Option<&Path>) -> Result<(), Failure> {
    if let Some(p) = path {
        write_file(p, json)?;
    }
    print_out(json);
    print_out("\n");
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

/// Parses `l <client> <value>` lines.
fn read_lambda(path: &Path, num_clients: usize) -> Result<Vec<f64>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let mut values = vec![0.0; num_clients];
    let mut seen = vec![false; num_clients];
    let bad = |line: usize, msg: String| Failure {
        code: 2,
        message: format!("{}:{line}: {msg}", path.display()),
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [tag, client, value] = fields[..] else {
            return Err(bad(idx + 1, format!("expected `l <client> <value>`, got {line:?}")));
        };
        if tag != "l" {
            return Err(bad(idx + 1, format!("unknown record {tag:?}")));
        }
        let c: usize = client
            .parse()
            .map_err(|_| bad(idx + 1, format!("bad client index {client:?}")))?;
        let v: f64 = value
            .parse()
            .map_err(|_| bad(idx + 1, format!("bad value {value:?}")))?;
        if c >= num_clients {
            return Err(bad(idx + 1, format!("client {c} out of range")));
        }
        if !(v >= 0.0) || !v.is_finite() {
            return Err(bad(idx + 1, format!("value {v} must be finite and nonnegative")));
        }
        if std::mem::replace(&mut seen[c], true) {
            return Err(bad(idx + 1, format!("client {c} listed twice")));
        }
        values[c] = v;
    }
    Ok(values)
}

fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("t,minCoverage,passes\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.t, r.min_coverage, r.passes));
    }
    out
}

fn solve_file(path: &Path, config: &SolveConfig) -> Result<(GraphSpec, SolveReport), Failure> {
    let (graph, stream) = parse_graph(path)?;
    let report = allnorm::run_pipeline(&graph, stream, config)?;
    Ok((graph, report))
}

fn checks_failure(report: &SolveReport) -> Result<(), Failure> {
    if report.all_checks_pass() {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            message: format!("checks failed: {}", report.failed_checks().join(", ")),
        })
    }
}

fn run_gen(args: GenArgs) -> Result<(), Failure> {
    let params = GeneratorParams {
        clients: args.clients,
        servers: args.servers,
        max_weight: args.max_weight,
    };
    let graph = generate_instance(args.kind, params, args.seed)?;
    let text = graph.to_text();
    match &args.output {
        Some(p) => write_file(p, &text),
        None => {
            print_out(&text);
            Ok(())
        }
    }
}

fn run_solve(args: SolveArgs) -> Result<(), Failure> {
    let (_, report) = solve_file(&args.graph, &args.flags.config(args.trace.is_some()))?;
    emit(&report.to_json(), args.json.as_deref())?;
    if let Some(p) = &args.trace {
        write_file(p, &trace_csv(&report.trace))?;
    }
    checks_failure(&report)
}

fn oracle_json(graph: &GraphSpec, out: &OracleOutput) -> serde_json::Value {
    let loads = fractional_loads(&out.z, graph.weights());
    let norms: serde_json::Map<String, serde_json::Value> = NormOrder::standard()
        .into_iter()
        .map(|p| (p.key(), json!(lp_norm(&loads, p))))
        .collect();
    json!({
        "z": out.z,
        "x": out.x,
        "alpha": out.alpha,
        "k": out.levels.k(),
        "depth": out.hierarchy.depth(),
        "levelOf": out.levels.levels(),
        "outer": out.outer,
        "loads": loads.as_slice(),
        "norms": norms,
        "checks": out.checks,
    })
}

fn run_oracle(args: OracleArgs) -> Result<(), Failure> {
    let (graph, mut stream) = parse_graph(&args.graph)?;
    let values = read_lambda(&args.lambda, graph.num_clients())?;
    let out = all_norm_oracle(&mut stream, graph.weights(), &values, args.eps, args.alpha)?;
    emit(&pretty(&oracle_json(&graph, &out)), args.json.as_deref())?;
    if out.checks.all_pass() {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            message: "oracle checks failed".into(),
        })
    }
}

fn run_nmh(args: NmhArgs) -> Result<(), Failure> {
    let (graph, mut stream) = parse_graph(&args.graph)?;
    let values = match &args.lambda {
        Some(p) => read_lambda(p, graph.num_clients())?,
        None => vec![1.0; graph.num_clients()],
    };
    let levels = build_level_sets(&values, graph.weights(), args.eps)?;
    let kappa: Vec<f64> = graph.weights().iter().map(|&w| w as f64).collect();
    let h = compute_nmh(&mut stream, &kappa, &levels)?;
    let dump = json!({
        "depth": h.depth(),
        "k": levels.k(),
        "levelOf": levels.levels(),
        "levels": h.levels().iter().enumerate().map(|(i, x)| json!({
            "i": i,
            "serverCapacity": 2f64.powi(i as i32),
            "mass": x.total(),
            "entries": x,
        })).collect::<Vec<_>>(),
        "passes": stream.passes(),
    });
    emit(&pretty(&dump), args.json.as_deref())
}

#[derive(Serialize)]
struct VerifyReport {
    checks: Vec<(String, bool, String)>,
    solve: serde_json::Value,
}

fn run_verify(args: VerifyArgs) -> Result<(), Failure> {
    let (graph, stream) = parse_graph(&args.graph)?;
    let mut checks: Vec<(String, bool, String)> = Vec::new();
    let weights = graph.weights();
    let eps = args.flags.eps;

    let caps = CapacityProfile::weighted(weights, graph.num_servers(), 1.0)?;
    let x = greedy_maximal_bmatching(&mut stream.clone(), &caps, None)?;
    let best = exact_max_bmatching(&graph, &caps, None)?;
    checks.push((
        "greedy.twoApprox".into(),
        2.0 * x.total() >= best - 1e-9,
        format!("2 * {} vs {best}", x.total()),
    ));

    let values: Vec<f64> = (0..graph.num_clients()).map(|c| 1.0 / (1 + c) as f64).collect();
    let levels = build_level_sets(&values, weights, eps)?;
    let mut verifier = SizeFactorVerifier::new(&graph);
    let sf = size_factor_matching(&mut stream.clone(), &caps, &levels)?;
    let r = verifier.check_vector(&sf, &levels, &caps, 4.0)?;
    checks.push(("bmatch.sizeFactor4".into(), r.all_pass(), format!("min margin {}", r.min_margin())));

    let kappa: Vec<f64> = weights.iter().map(|&w| w as f64).collect();
    let h = compute_nmh(&mut stream.clone(), &kappa, &levels)?;
    let r = verifier.check_hierarchy(&h, &levels, 8.0)?;
    checks.push(("nmh.sizeFactor8".into(), r.all_pass(), format!("min margin {}", r.min_margin())));

    let out = all_norm_oracle(&mut stream.clone(), weights, &values, eps, args.flags.alpha)?;
    for (name, ok) in out.checks.named() {
        checks.push((name.into(), ok, String::new()));
    }

    let opt = brute_force_opt(&graph, &NormOrder::standard())?;
    let loads = fractional_loads(&out.z, weights);
    for p in [NormOrder::Finite(1.0), NormOrder::Finite(2.0), NormOrder::Finite(4.0), NormOrder::Infinity] {
        let growth = match p {
            NormOrder::Finite(p) => 1.0 - 1.0 / p,
            NormOrder::Infinity => 1.0,
        };
        let bound = (1.0 + eps).powi(2) * (2.0 * args.flags.alpha).powf(growth) * opt.value(p).unwrap_or(0.0);
        let got = lp_norm(&loads, p);
        checks.push((format!("oracle.norm.{}", p.key()), got <= bound + 1e-9, format!("{got} vs {bound}")));
    }

    if weights.iter().all(|&w| w == 1) {
        let witness = opt.witness(NormOrder::Finite(2.0)).expect("requested").clone();
        let d = nmh_decompose(&graph, &witness)?;
        checks.push(("nmh.maximallyNested".into(), is_maximally_nested(&d), String::new()));
        for p in [1.0, 2.0, 3.0, 4.0] {
            let order = NormOrder::Finite(p);
            let actual = d.top_power_sum(p);
            let lo = nmh_power_sum_lower(&d, order)?;
            let hi = nmh_power_sum_upper(&d, order)?;
            let slack = 1e-9 * actual.max(1.0);
            checks.push((
                format!("nmh.sandwich.{p}"),
                lo <= actual + slack && actual <= hi + slack,
                format!("{lo} <= {actual} <= {hi}"),
            ));
        }
    }

    let config = SolveConfig {
        verify: true,
        ..args.flags.config(false)
    };
    let report = allnorm::run_pipeline(&graph, stream, &config)?;
    for (name, v) in &report.checks {
        checks.push((format!("solve.{name}"), *v == "pass", String::new()));
    }

    let all_pass = checks.iter().all(|(_, ok, _)| *ok);
    let summary = VerifyReport {
        checks: checks.clone(),
        solve: serde_json::from_str(&report.to_json()).expect("valid json"),
    };
    if let Some(p) = &args.json {
        write_file(p, &pretty(&summary))?;
    }
    for (name, ok, detail) in &checks {
        let line = format!("{} {name} {detail}", if *ok { "pass" } else { "FAIL" });
        print_out(&format!("{}\n", line.trim_end()));
    }
    if all_pass {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            message: "verification failed".into(),
        })
    }
}

const CSV_HEADER: &str = "file,clients,servers,edges,totalWeight,T,iterations,earlyStopped,passes,peakWords,wallMillis,norm1,norm2,norm3,norm4,normInf,ratioInf,checks";

fn csv_row(name: &str, r: &SolveReport) -> String {
    let ratio = r
        .ratios
        .as_ref()
        .map(|m| m["inf"].to_string())
        .unwrap_or_default();
    format!(
        "{name},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{ratio},{}",
        r.instance.clients,
        r.instance.servers,
        r.instance.edges,
        r.instance.total_weight,
        r.params.t,
        r.params.iterations,
        r.params.early_stopped,
        r.passes,
        r.peak_words,
        r.wall_millis,
        r.norms["1"],
        r.norms["2"],
        r.norms["3"],
        r.norms["4"],
        r.norms["inf"],
        if r.all_checks_pass() { "pass" } else { "fail" },
    )
}

fn run_bench(args: BenchArgs) -> Result<(), Failure> {
    let mut files: Vec<PathBuf> = fs::read_dir(&args.dir)
        .map_err(|e| io_failure(&args.dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    let config = args.flags.config(false);
    let rows: Vec<Result<String, (String, Failure)>> = files
        .par_iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            solve_file(p, &config)
                .map(|(_, r)| csv_row(&name, &r))
                .map_err(|f| (name, f))
        })
        .collect();
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let mut worst = 0;
    for row in rows {
        match row {
            Ok(line) => {
                if line.ends_with(",fail") {
                    worst = worst.max(3);
                }
                csv.push_str(&line);
            }
            Err((name, f)) => {
                eprintln!("{name}: {}", f.message);
                worst = worst.max(f.code);
                csv.push_str(&format!("{name},error,,,,,,,,,,,,,,,,"));
            }
        }
        csv.push('\n');
    }
    match &args.csv {
        Some(p) => write_file(p, &csv)?,
        None => print_out(&csv),
    }
    if worst == 0 {
        Ok(())
    } else {
        Err(Failure {
            code: worst,
            message: "some instances failed".into(),
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => run_gen(a),
        Command::Solve(a) => run_solve(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Nmh(a) => run_nmh(a),
        Command::Verify(a) => run_verify(a),
        Command::Bench(a) => run_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
