//! Argument parsing for the `ibp` binary.

use std::ffi::OsString;
use std::io::{self, BufReader};
use std::net::TcpListener;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::commands::{self, EXIT_CONFIG};
use super::config::*;
use crate::error::{Error, Result};
use crate::extproto::{EndpointDescriptor, Fault, RefMode, RefPredictor};
use crate::metrics::MetricKind;
use crate::shapley::{AuditConfig, SamplesPerQuery, SegmentScheme};
use crate::stats;
use crate::types::{AgentState, ApproachRate};

#[derive(Parser, Debug)]
#[command(name = "ibp", version, about = "Conditional vs. interventional prediction on a two-car IDM system")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "IBP_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Write joint or intervened rollouts as CSV.
    Simulate(SimulateArgs),
    /// Conditional vs. interventional distributions for one scenario and plan.
    ToyCompare(ToyCompareArgs),
    /// Generate a synthetic scenario dataset with ground truths.
    GenDataset(GenDatasetArgs),
    /// Shapley audit of a predictor on a dataset.
    Audit(AuditArgs),
    /// Accuracy table with audit verdicts.
    Bench(BenchArgs),
    /// Conformance checks against an external endpoint.
    Probe(ProbeArgs),
    /// Run the reference endpoint on stdin/stdout or a TCP port.
    ServeRef(ServeRefArgs),
}

#[derive(Args, Debug)]
pub struct Common {
    /// Re-run from a saved config.json. Other options except --out are ignored.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    PaperToy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ApproachArg {
    ClosingSpeed,
    AsPrinted,
}

#[derive(Args, Debug)]
pub struct ScenarioArgs {
    /// Named parameter preset; paper-toy is also the default.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Acceleration noise std (m/s²).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Initial human state as `s,v`.
    #[arg(long, value_parser = parse_state)]
    pub human: Option<AgentState>,
    /// Initial robot state as `s,v`.
    #[arg(long, value_parser = parse_state)]
    pub robot: Option<AgentState>,
    /// Plan acceleration (m/s²).
    #[arg(long)]
    pub accel: Option<f64>,
    /// Plan speed cap (m/s).
    #[arg(long)]
    pub v_max: Option<f64>,
    /// Explicit plan speeds for steps 1..T, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub speeds: Option<Vec<f64>>,
    /// Use the robot trajectory of one joint rollout as the plan.
    #[arg(long)]
    pub natural_plan: bool,
    #[arg(long, value_enum)]
    pub approach_rate: Option<ApproachArg>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Impose the plan instead of simulating the reactive robot.
    #[arg(long)]
    pub intervene: bool,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
}

#[derive(Args, Debug)]
pub struct ToyCompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    /// Position histogram bins as `lo,hi,count`.
    #[arg(long, value_parser = parse_bins)]
    pub position_bins: Option<Vec<f64>>,
    /// Minimum-distance histogram bins as `lo,hi,count`.
    #[arg(long, value_parser = parse_bins)]
    pub distance_bins: Option<Vec<f64>>,
    #[arg(long)]
    pub no_plots: bool,
}

#[derive(Args, Debug)]
pub struct GenDatasetArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub horizon: usize,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Initial distance range as `lo,hi`.
    #[arg(long, value_parser = parse_range)]
    pub s0: Option<(f64, f64)>,
    /// Initial speed range as `lo,hi`.
    #[arg(long, value_parser = parse_range)]
    pub v0: Option<(f64, f64)>,
}

#[derive(Args, Debug)]
pub struct AuditOptions {
    /// Hybrid queries per subset.
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    /// Segment cut points, e.g. 4,7,10.
    #[arg(long, value_delimiter = ',', default_value = "4,7,10")]
    pub cuts: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "ade,fde,kde-nll")]
    pub metrics: Vec<String>,
    /// Metrics whose late-segment credit is gated by epsilon.
    #[arg(long, value_delimiter = ',', default_value = "fde")]
    pub gate: Vec<String>,
    /// Draw independent random numbers per subset.
    #[arg(long)]
    pub no_crn: bool,
    /// Predictor samples per hybrid query for ADE/FDE.
    #[arg(long, default_value_t = 1)]
    pub k_pred: usize,
    /// Predictor samples per hybrid query for KDE-NLL.
    #[arg(long, default_value_t = 16)]
    pub k_pred_kde: usize,
    /// JSON plan set replacing the unconditioned marginal sampler.
    #[arg(long)]
    pub plan_set: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, required_unless_present = "config")]
    pub dataset: Option<PathBuf>,
    /// Built-in tag (ibp, cbp, unconditioned, cv) or cmd:<template> / tcp:<addr>.
    #[arg(long, default_value = "ibp")]
    pub predictor: String,
    /// Threshold on mean late-segment credit (m for FDE).
    #[arg(long, required_unless_present = "config")]
    pub epsilon: Option<f64>,
    #[command(flatten)]
    pub options: AuditOptions,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, required_unless_present = "config")]
    pub dataset: Option<PathBuf>,
    /// Predictors to compare (repeatable).
    #[arg(long = "predictor", default_values = ["ibp", "cbp"])]
    pub predictors: Vec<String>,
    /// Samples per prediction.
    #[arg(long = "samples", default_value_t = 16)]
    pub samples: usize,
    /// Samples entering minADE/minFDE.
    #[arg(long, default_value_t = 6)]
    pub min_k: usize,
    /// Run the audit with this threshold for the verdict column.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[command(flatten)]
    pub options: AuditOptions,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: Common,
    /// cmd:<template> or tcp:<host:port>.
    #[arg(long, required_unless_present = "config")]
    pub endpoint: Option<String>,
    /// Template substitution `name=value` (repeatable).
    #[arg(long = "arg", value_parser = parse_kv)]
    pub args: Vec<(String, String)>,
    /// Seconds to wait for each reply.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
}

#[derive(Args, Debug)]
pub struct ServeRefArgs {
    #[arg(long, default_value = "causal-cv")]
    pub mode: RefMode,
    #[arg(long)]
    pub fault: Option<Fault>,
    /// Listen on this address instead of stdin/stdout.
    #[arg(long)]
    pub tcp: Option<String>,
}

fn parse_state(s: &str) -> std::result::Result<AgentState, String> {
    let (a, b) = parse_range(s)?;
    Ok(AgentState::new(a, b))
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [a, b] => Ok((
            a.trim().parse().map_err(|e| format!("`{a}`: {e}"))?,
            b.trim().parse().map_err(|e| format!("`{b}`: {e}"))?,
        )),
        _ => Err(format!("expected two comma-separated numbers, got `{s}`")),
    }
}

fn parse_bins(s: &str) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(format!("expected lo,hi,count, got `{s}`"));
    };
    let lo: f64 = lo.trim().parse().map_err(|e| format!("`{lo}`: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("`{hi}`: {e}"))?;
    let n: usize = n.trim().parse().map_err(|e| format!("`{n}`: {e}"))?;
    if n == 0 || hi <= lo {
        return Err(format!("need count >= 1 and hi > lo, got `{s}`"));
    }
    Ok(stats::uniform_edges(lo, hi, n))
}

fn parse_kv(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected name=value, got `{s}`"))
}

fn apply_scenario(args: &ScenarioArgs, scenario: &mut crate::types::Scenario, plan: &mut PlanSpec) {
    if let Some(Preset::PaperToy) = args.preset {
        *scenario = crate::types::Scenario::paper_toy();
        *plan = PlanSpec::paper();
    }
    if let Some(sigma) = args.sigma {
        scenario.params.noise_std = sigma;
    }
    if let Some(h) = args.horizon {
        scenario.horizon = h;
    }
    if let Some(x) = args.human {
        scenario.human0 = x;
    }
    if let Some(x) = args.robot {
        scenario.robot0 = x;
    }
    if let Some(a) = args.approach_rate {
        scenario.params.approach_rate = match a {
            ApproachArg::ClosingSpeed => ApproachRate::ClosingSpeed,
            ApproachArg::AsPrinted => ApproachRate::AsPrinted,
        };
    }
    if let PlanSpec::Accelerate { accel, v_max } = plan {
        if let Some(a) = args.accel {
            *accel = a;
        }
        if let Some(v) = args.v_max {
            *v_max = v;
        }
    }
    if let Some(speeds) = &args.speeds {
        *plan = PlanSpec::Speeds { speeds: speeds.clone() };
    }
    if args.natural_plan {
        *plan = PlanSpec::Natural;
    }
}

fn metric_list(names: &[String]) -> Result<Vec<MetricKind>> {
    names.iter().map(|n| n.parse()).collect()
}

fn audit_config(o: &AuditOptions, epsilon: f64) -> Result<AuditConfig> {
    Ok(AuditConfig {
        scheme: SegmentScheme::new(o.cuts.clone())?,
        metrics: metric_list(&o.metrics)?,
        k: o.k,
        samples_per_query: SamplesPerQuery {
            displacement: o.k_pred,
            kde: o.k_pred_kde,
        },
        epsilon,
        gated: metric_list(&o.gate)?,
        common_random_numbers: !o.no_crn,
        bandwidth: Default::default(),
    })
}

fn marginal(o: &AuditOptions) -> MarginalSpec {
    match &o.plan_set {
        Some(path) => MarginalSpec::PlanSet { path: path.clone() },
        None => MarginalSpec::Unconditioned,
    }
}

fn default_out(name: &str) -> PathBuf {
    PathBuf::from("out").join(name)
}

/// Resolves the arguments of a run command into a [`RunConfig`].
pub fn build_config(cmd: &Cmd) -> Result<RunConfig> {
    let (common, name) = match cmd {
        Cmd::Simulate(a) => (&a.common, "simulate"),
        Cmd::ToyCompare(a) => (&a.common, "toy-compare"),
        Cmd::GenDataset(a) => (&a.common, "gen-dataset"),
        Cmd::Audit(a) => (&a.common, "audit"),
        Cmd::Bench(a) => (&a.common, "bench"),
        Cmd::Probe(a) => (&a.common, "probe"),
        Cmd::ServeRef(_) => return Err(Error::Config("serve-ref has no run config".into())),
    };
    if let Some(path) = &common.config {
        let mut config = RunConfig::load(path)?;
        if config.command.name() != name {
            return Err(Error::Config(format!(
                "{} holds a `{}` config, not `{name}`",
                path.display(),
                config.command.name()
            )));
        }
        if let Some(out) = &common.out {
            config.out_dir = out.clone();
        }
        return Ok(config);
    }
    let out = common.out.clone().unwrap_or_else(|| default_out(name));
    let command = match cmd {
        Cmd::Simulate(a) => {
            let mut c = paper_toy_simulate();
            apply_scenario(&a.scenario, &mut c.scenario, &mut c.plan);
            c.trials = a.trials;
            if a.intervene {
                c.mode = SimMode::Intervened;
            }
            CommandConfig::Simulate(c)
        }
        Cmd::ToyCompare(a) => {
            let mut c = paper_toy_compare();
            apply_scenario(&a.scenario, &mut c.scenario, &mut c.plan);
            c.trials = a.trials;
            if let Some(e) = &a.position_bins {
                c.bins.position_edges = e.clone();
            }
            if let Some(e) = &a.distance_bins {
                c.bins.distance_edges = e.clone();
            }
            c.plots = !a.no_plots;
            CommandConfig::ToyCompare(c)
        }
        Cmd::GenDataset(a) => {
            let mut c = default_gen_dataset();
            c.n_scenarios = a.n;
            c.horizon = a.horizon;
            if let Some(s) = a.sigma {
                c.params.noise_std = s;
            }
            if let Some(r) = a.s0 {
                c.ranges.s0 = r;
            }
            if let Some(r) = a.v0 {
                c.ranges.v0 = r;
            }
            CommandConfig::GenDataset(c)
        }
        Cmd::Audit(a) => CommandConfig::Audit(AuditRunConfig {
            dataset: a.dataset.clone().expect("required by clap"),
            predictor: PredictorSpec::parse(&a.predictor)?,
            marginal: marginal(&a.options),
            audit: audit_config(&a.options, a.epsilon.expect("required by clap"))?,
        }),
        Cmd::Bench(a) => CommandConfig::Bench(BenchConfig {
            dataset: a.dataset.clone().expect("required by clap"),
            predictors: a
                .predictors
                .iter()
                .map(|p| PredictorSpec::parse(p))
                .collect::<Result<_>>()?,
            k: a.samples,
            min_k: a.min_k,
            marginal: marginal(&a.options),
            audit: a.epsilon.map(|e| audit_config(&a.options, e)).transpose()?,
        }),
        Cmd::Probe(a) => {
            let mut endpoint = EndpointDescriptor::parse(a.endpoint.as_deref().expect("required by clap"))?;
            endpoint.timeout_secs = a.timeout;
            for (k, v) in &a.args {
                endpoint = endpoint.with_arg(k, v);
            }
            CommandConfig::Probe(ProbeConfig { endpoint })
        }
        Cmd::ServeRef(_) => unreachable!(),
    };
    Ok(RunConfig::new(common.seed, out, command))
}

fn serve_ref(args: &ServeRefArgs) -> io::Result<()> {
    let mut fixture = RefPredictor::new(args.mode);
    fixture.fault = args.fault;
    match &args.tcp {
        None => fixture.serve(io::stdin().lock(), io::stdout().lock()),
        Some(addr) => {
            let listener = TcpListener::bind(addr)?;
            eprintln!("serving on {}", listener.local_addr()?);
            for stream in listener.incoming() {
                let stream = stream?;
                let mut fixture = fixture.clone();
                std::thread::spawn(move || -> io::Result<()> {
                    let reader = BufReader::new(stream.try_clone()?);
                    fixture.serve(reader, stream)
                });
            }
            Ok(())
        }
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return EXIT_CONFIG;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    if let Cmd::ServeRef(a) = &cli.command {
        return match serve_ref(a) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        };
    }
    let result = build_config(&cli.command).and_then(|config| commands::run(&config));
    match &result {
        Ok(report) => print!("{}", report.summary),
        Err(e) => eprintln!("error: {e}"),
    }
    commands::exit_code(&result)
}
