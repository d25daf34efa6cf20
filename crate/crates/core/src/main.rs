use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use bellns::behavior::{make_family, mix, Behavior, Family, Scenario};
use bellns::corrbasis::{chsh_from_fixed, z0_from_behavior};
use bellns::lp_baseline::{ns_distance, LpError};
use bellns::quantify::{
    benchmark_scaling, benchmark_weights, critical_visibility, fit_exp, neg_of_behavior,
    records_to_csv, Method, QuantifyError, LOCAL_NEG_TOL, LOCAL_NS_TOL,
};
use bellns::sparse_solver::SolverConfig;

const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "bellns",
    about = "Locality analysis of bipartite no-signalling behaviors",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a behavior JSON file: no-signalling check, negativity, locality
    Analyze(AnalyzeArgs),
    /// Generate a behavior JSON file from a named family or mixture
    Gen(GenArgs),
    /// Run the scaling benchmark and write a CSV plus fit summary
    Bench(BenchArgs),
    /// Visibility sweep of target mixed with noise; CSV of (v, negativity)
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SolverArgs {
    /// Solver method: nesta or lp
    #[arg(long, default_value = "nesta")]
    method: String,
    /// Final smoothing parameter for the first-order solver
    #[arg(long)]
    mu_final: Option<f64>,
    /// Number of continuation stages
    #[arg(long)]
    continuation_steps: Option<usize>,
    /// Iteration cap per continuation stage
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative objective-change stopping tolerance
    #[arg(long)]
    stop_tol: Option<f64>,
}

impl SolverArgs {
    fn method(&self) -> Result<Method, String> {
        Method::parse(&self.method).ok_or_else(|| format!("unknown method `{}`", self.method))
    }

    fn config(&self) -> SolverConfig {
        let mut config = SolverConfig::default();
        if let Some(v) = self.mu_final {
            config.mu_final = v;
        }
        if let Some(v) = self.continuation_steps {
            config.continuation_steps = v;
        }
        if let Some(v) = self.max_iters {
            config.max_iters_per_stage = v;
        }
        if let Some(v) = self.stop_tol {
            config.stop_tol = v;
        }
        config
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Behavior JSON file
    input: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Negativity below this counts as local
    #[arg(long, default_value_t = LOCAL_NEG_TOL)]
    locality_threshold: f64,
    /// Also compute the LP distance to the local polytope
    #[arg(long)]
    ns_distance: bool,
    /// Write the result JSON here instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Family: whitenoise, localdet, pr, or mix
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Mixture weights c0,c1,c2 over whitenoise,localdet,pr (family = mix)
    #[arg(long)]
    weights: Option<String>,
    /// Seed for a random simplex draw when weights are omitted
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 2)]
    n_min: usize,
    #[arg(long, default_value_t = 4)]
    n_max: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated list, e.g. nesta,lp
    #[arg(long, default_value = "nesta,lp")]
    methods: String,
    /// CSV output path
    #[arg(long)]
    out: PathBuf,
    /// Worker pool size for the benchmark
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Target behavior JSON (defaults to the PR box at --n/--m)
    #[arg(long)]
    target: Option<PathBuf>,
    /// Noise behavior JSON (defaults to white noise at the target scenario)
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Number of grid points over v in [0, 1]
    #[arg(long, default_value_t = 21)]
    steps: usize,
    /// Bisection width for the critical visibility
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// CSV output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Serialize)]
struct AnalyzeOutput {
    behavior_id: String,
    is_no_signalling: bool,
    negativity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ns_distance: Option<f64>,
    is_local: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    chsh: Option<f64>,
    method: Method,
    timing: f64,
}

fn input_err(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_INPUT)
}

fn solver_err(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("solver error: {msg}");
    ExitCode::from(EXIT_SOLVER)
}

fn write_output(path: &Option<PathBuf>, content: &str) -> Result<(), std::io::Error> {
    match path {
        Some(p) => std::fs::write(p, content),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

fn cmd_analyze(args: &AnalyzeArgs) -> ExitCode {
    let method = match args.solver.method() {
        Ok(m) => m,
        Err(e) => return input_err(e),
    };
    let text = match std::fs::read_to_string(&args.input) {
        Ok(t) => t,
        Err(e) => return input_err(format!("{}: {e}", args.input.display())),
    };
    let behavior = match Behavior::from_json(&text) {
        Ok(b) => b,
        Err(e) => return input_err(e),
    };
    let ns_report = behavior.check_no_signalling(1e-9);
    if !ns_report.is_ns {
        return input_err(format!(
            "behavior is signalling (max violation {:.3e})",
            ns_report.max_violation
        ));
    }
    let start = Instant::now();
    let record = match neg_of_behavior(&behavior, method, &args.solver.config()) {
        Ok(r) => r,
        Err(e) => return solver_err(e),
    };
    let dist = if args.ns_distance || method == Method::Lp {
        match ns_distance(&behavior) {
            Ok(d) => Some(d),
            Err(LpError::ProblemTooLarge { .. }) => None,
            Err(e) => return solver_err(e),
        }
    } else {
        None
    };
    let is_local = match (method, dist) {
        (Method::Lp, Some(d)) => d <= LOCAL_NS_TOL,
        _ => record.negativity <= args.locality_threshold,
    };
    let scenario = behavior.scenario();
    let chsh = if scenario.n == 2 && scenario.m == 2 {
        z0_from_behavior(&behavior)
            .ok()
            .and_then(|fixed| chsh_from_fixed(&fixed).ok())
    } else {
        None
    };
    let out = AnalyzeOutput {
        behavior_id: args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        is_no_signalling: true,
        negativity: record.negativity,
        ns_distance: dist,
        is_local,
        chsh,
        method,
        timing: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&out).expect("serializable");
    match write_output(&args.output, &json) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => input_err(e),
    }
}

fn parse_weights(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|w| w.trim().parse::<f64>().map_err(|e| format!("bad weight `{w}`: {e}")))
        .collect()
}

fn cmd_gen(args: &GenArgs) -> ExitCode {
    let scenario = match Scenario::new(args.n, args.m) {
        Ok(s) => s,
        Err(e) => return input_err(e),
    };
    let behavior = match args.family.to_ascii_lowercase().as_str() {
        "whitenoise" => make_family(Family::WhiteNoise, scenario),
        "localdet" => make_family(Family::LocalDeterministic, scenario),
        "pr" => make_family(Family::GeneralizedPr, scenario),
        "mix" => {
            let weights = match &args.weights {
                Some(w) => match parse_weights(w) {
                    Ok(v) => v,
                    Err(e) => return input_err(e),
                },
                None => {
                    let w = benchmark_weights(args.n, 1, args.seed)[0];
                    vec![w.0, w.1, w.2]
                }
            };
            if weights.len() != 3 {
                return input_err("mix requires exactly three weights c0,c1,c2");
            }
            let parts: Result<Vec<_>, _> = [
                Family::WhiteNoise,
                Family::LocalDeterministic,
                Family::GeneralizedPr,
            ]
            .iter()
            .map(|&f| make_family(f, scenario))
            .collect();
            match parts {
                Ok(p) => mix(&p, &weights),
                Err(e) => Err(e),
            }
        }
        other => return input_err(format!("unknown family `{other}`")),
    };
    let behavior = match behavior {
        Ok(b) => b,
        Err(e) => return input_err(e),
    };
    match write_output(&args.output, &behavior.to_json()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => input_err(e),
    }
}

#[derive(Serialize)]
struct FitSummary {
    method: Method,
    a: f64,
    b: f64,
    residual: f64,
}

#[derive(Serialize)]
struct BenchSummary {
    n_min: usize,
    n_max: usize,
    m: usize,
    samples: usize,
    seed: u64,
    rows: usize,
    skipped: usize,
    fits: Vec<FitSummary>,
}

fn cmd_bench(args: &BenchArgs) -> ExitCode {
    let methods: Result<Vec<Method>, String> = args
        .methods
        .split(',')
        .map(|s| Method::parse(s.trim()).ok_or_else(|| format!("unknown method `{s}`")))
        .collect();
    let methods = match methods {
        Ok(m) if !m.is_empty() => m,
        Ok(_) => return input_err("no methods given"),
        Err(e) => return input_err(e),
    };
    if args.n_min < 2 || args.n_max < args.n_min {
        return input_err("need 2 <= n_min <= n_max");
    }
    if args.jobs == 0 {
        return input_err("--jobs must be at least 1");
    }
    let n_values: Vec<usize> = (args.n_min..=args.n_max).collect();
    let config = args.solver.config();
    let records = if args.jobs <= 1 {
        benchmark_scaling(&n_values, args.m, args.samples, args.seed, &methods, &config)
    } else {
        // per-n parallelism; record order is restored by n afterwards
        std::thread::scope(|scope| {
            let handles: Vec<_> = n_values
                .chunks(n_values.len().div_ceil(args.jobs))
                .map(|chunk| {
                    let methods = &methods;
                    let config = &config;
                    scope.spawn(move || {
                        benchmark_scaling(chunk, args.m, args.samples, args.seed, methods, config)
                    })
                })
                .collect();
            let mut all = Vec::new();
            for h in handles {
                match h.join().expect("benchmark worker panicked") {
                    Ok(mut r) => all.append(&mut r),
                    Err(e) => return Err(e),
                }
            }
            Ok(all)
        })
    };
    let records = match records {
        Ok(r) => r,
        Err(e) => return solver_err(e),
    };
    if let Err(e) = std::fs::write(&args.out, records_to_csv(&records)) {
        return input_err(format!("{}: {e}", args.out.display()));
    }
    let skipped = records.iter().filter(|r| r.negativity.is_nan()).count();
    if skipped > 0 {
        eprintln!("warning: {skipped} rows skipped (problem over solver caps)");
    }
    let mut fits = Vec::new();
    for &method in &methods {
        let points: Vec<(f64, f64)> = n_values
            .iter()
            .map(|&n| {
                let times: Vec<f64> = records
                    .iter()
                    .filter(|r| r.n == n && r.method == method && !r.negativity.is_nan())
                    .map(|r| r.wall_time_s)
                    .collect();
                (n as f64, times.iter().sum::<f64>() / times.len().max(1) as f64)
            })
            .filter(|&(_, t)| t > 0.0)
            .collect();
        match fit_exp(&points) {
            Ok(fit) => fits.push(FitSummary {
                method,
                a: fit.a,
                b: fit.b,
                residual: fit.residual,
            }),
            Err(e) => eprintln!("warning: no fit for {method}: {e}"),
        }
    }
    let summary = BenchSummary {
        n_min: args.n_min,
        n_max: args.n_max,
        m: args.m,
        samples: args.samples,
        seed: args.seed,
        rows: records.len(),
        skipped,
        fits,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("serializable")
    );
    ExitCode::SUCCESS
}

fn load_behavior(path: &PathBuf) -> Result<Behavior, String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Behavior::from_json(&text).map_err(|e| e.to_string())
}

fn cmd_sweep(args: &SweepArgs) -> ExitCode {
    let method = match args.solver.method() {
        Ok(m) => m,
        Err(e) => return input_err(e),
    };
    if args.steps < 2 {
        return input_err("--steps must be at least 2");
    }
    let target = match &args.target {
        Some(p) => match load_behavior(p) {
            Ok(b) => b,
            Err(e) => return input_err(e),
        },
        None => {
            let scenario = match Scenario::new(args.n, args.m) {
                Ok(s) => s,
                Err(e) => return input_err(e),
            };
            match make_family(Family::GeneralizedPr, scenario) {
                Ok(b) => b,
                Err(e) => return input_err(e),
            }
        }
    };
    let noise = match &args.noise {
        Some(p) => match load_behavior(p) {
            Ok(b) => b,
            Err(e) => return input_err(e),
        },
        None => match make_family(Family::WhiteNoise, target.scenario()) {
            Ok(b) => b,
            Err(e) => return input_err(e),
        },
    };
    let config = args.solver.config();
    let mut csv = String::from("v,negativity\n");
    for i in 0..args.steps {
        let v = i as f64 / (args.steps - 1) as f64;
        let blend = match mix(&[target.clone(), noise.clone()], &[v, 1.0 - v]) {
            Ok(b) => b,
            Err(e) => return input_err(e),
        };
        let record = match neg_of_behavior(&blend, method, &config) {
            Ok(r) => r,
            Err(e) => return solver_err(e),
        };
        csv.push_str(&format!("{v:.6},{:.12e}\n", record.negativity));
    }
    if let Err(e) = write_output(&args.out, csv.trim_end()) {
        return input_err(e);
    }
    match critical_visibility(&target, &noise, method, args.tol, &config) {
        Ok(v) => {
            eprintln!("critical visibility: {v:.6}");
            ExitCode::SUCCESS
        }
        Err(QuantifyError::TargetAlreadyLocal) => {
            eprintln!("target is local at v = 1; no critical visibility");
            ExitCode::SUCCESS
        }
        Err(e) => solver_err(e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}
