//! The command implementations behind the `ibp` binary. Each command writes
//! its resolved config plus numeric outputs into the configured directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::*;
use super::svg;
use crate::error::{Error, Result};
use crate::extproto::{self, ConformanceReport};
use crate::idm;
use crate::inference::{self, DistributionSummary};
use crate::metrics::{self, BandwidthRule, HorizonPrefix, MetricKind};
use crate::predictors::{PredictionQuery, Predictor};
use crate::seed::SeedKey;
use crate::shapley::{self, ShapleyReport, Verdict};
use crate::stats::Histogram;
use crate::types::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    Fail,
    PredictorFailure,
}

#[derive(Debug, Clone)]
pub struct CommandReport {
    pub outcome: Outcome,
    /// Human-readable summary for the terminal.
    pub summary: String,
    pub files: Vec<PathBuf>,
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PREDICTOR: i32 = 3;

pub fn exit_code(result: &Result<CommandReport>) -> i32 {
    match result {
        Ok(r) => match r.outcome {
            Outcome::Pass => EXIT_PASS,
            Outcome::Fail => EXIT_FAIL,
            Outcome::PredictorFailure => EXIT_PREDICTOR,
        },
        Err(Error::Predictor { .. } | Error::Protocol(_)) => EXIT_PREDICTOR,
        Err(_) => EXIT_CONFIG,
    }
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn create(config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(&config.out_dir)?;
        let mut out = Self {
            dir: config.out_dir.clone(),
            files: Vec::new(),
        };
        out.write(CONFIG_FILE, &config.to_json())?;
        Ok(out)
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }
}

/// Validates `config` and runs its command.
pub fn run(config: &RunConfig) -> Result<CommandReport> {
    config.validate()?;
    match &config.command {
        CommandConfig::Simulate(c) => cmd_simulate(config, c),
        CommandConfig::ToyCompare(c) => cmd_toy_compare(config, c),
        CommandConfig::GenDataset(c) => cmd_gen_dataset(config, c),
        CommandConfig::Audit(c) => cmd_audit(config, c),
        CommandConfig::Bench(c) => cmd_bench(config, c),
        CommandConfig::Probe(c) => cmd_probe(config, c),
    }
}

/// `t,s_h,v_h,s_r,v_r` rows, `t` being the step index.
pub fn trajectory_csv(human: &Trajectory, robot: &Trajectory) -> String {
    let mut out = String::from("t,s_h,v_h,s_r,v_r\n");
    for (t, (h, r)) in human.states.iter().zip(&robot.states).enumerate() {
        let _ = writeln!(out, "{t},{},{},{},{}", h.s, h.v, r.s, r.v);
    }
    out
}

fn cmd_simulate(config: &RunConfig, c: &SimulateConfig) -> Result<CommandReport> {
    let seed = config.seed_key();
    let plan = match c.mode {
        SimMode::Joint => None,
        SimMode::Intervened => Some(c.plan.build(&c.scenario, seed)?),
    };
    let rollouts = (0..c.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let key = seed.with_trial(trial);
            match &plan {
                None => idm::rollout_joint(&c.scenario, key),
                Some(p) => Ok((idm::rollout_intervened(&c.scenario, p, key)?, p.as_trajectory())),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Output::create(config)?;
    for (trial, (human, robot)) in rollouts.iter().enumerate() {
        let name = if c.trials == 1 {
            "trajectory.csv".to_string()
        } else {
            format!("trajectory_{trial:05}.csv")
        };
        out.write(&name, &trajectory_csv(human, robot))?;
    }
    let (human, robot) = &rollouts[0];
    let summary = format!(
        "simulated {} {} rollout(s) over {} steps; trial 0 ends with human at s={:.3} m, robot at s={:.3} m\n",
        c.trials,
        match c.mode {
            SimMode::Joint => "joint",
            SimMode::Intervened => "intervened",
        },
        c.scenario.horizon,
        human.states[human.horizon()].s,
        robot.states[robot.horizon()].s,
    );
    Ok(CommandReport {
        outcome: Outcome::Pass,
        summary,
        files: out.files,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub collision_probability: f64,
    pub non_yield_probability: f64,
    pub deceleration_onset: Option<usize>,
    pub mean_speed: Vec<f64>,
    pub mean_position: Vec<f64>,
    /// Largest deviation of a histogram's total mass (in range plus
    /// overflow) from 1.
    pub max_mass_error: f64,
    /// Smallest in-range mass over all histograms.
    pub min_in_range_mass: f64,
}

impl From<&DistributionSummary> for DistributionStats {
    fn from(s: &DistributionSummary) -> Self {
        let all: Vec<&Histogram> = s
            .position_histograms
            .iter()
            .chain(std::iter::once(&s.min_distance_histogram))
            .collect();
        Self {
            collision_probability: s.collision_probability,
            non_yield_probability: s.non_yield_probability,
            deceleration_onset: s.deceleration_onset,
            mean_speed: s.mean_speed.clone(),
            mean_position: s.mean_position.clone(),
            max_mass_error: all.iter().map(|h| (h.total_mass() - 1.0).abs()).fold(0.0, f64::max),
            min_in_range_mass: all.iter().map(|h| h.in_range_mass()).fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyCompareReport {
    pub trials: usize,
    pub ess: f64,
    pub warnings: Vec<String>,
    pub conditional: DistributionStats,
    pub interventional: DistributionStats,
}

fn histogram_rows(out: &mut String, prefix: &str, h: &Histogram) {
    for (b, m) in h.masses.iter().enumerate() {
        let _ = writeln!(out, "{prefix}{},{},{m}", h.edges[b], h.edges[b + 1]);
    }
}

fn cmd_toy_compare(config: &RunConfig, c: &ToyCompareConfig) -> Result<CommandReport> {
    let seed = config.seed_key();
    let plan = c.plan.build(&c.scenario, seed)?;
    let cmp = inference::compare(&c.scenario, &plan, c.trials, &c.bins, seed)?;
    let report = ToyCompareReport {
        trials: c.trials,
        ess: cmp.ess,
        warnings: cmp.warnings.iter().map(ToString::to_string).collect(),
        conditional: DistributionStats::from(&cmp.conditional),
        interventional: DistributionStats::from(&cmp.interventional),
    };
    let mut out = Output::create(config)?;
    out.write_json("report.json", &report)?;

    let mut positions = String::from("distribution,t,bin_lo,bin_hi,mass\n");
    let mut distances = String::from("distribution,bin_lo,bin_hi,mass\n");
    for (name, s) in [("conditional", &cmp.conditional), ("interventional", &cmp.interventional)] {
        for (t, h) in s.position_histograms.iter().enumerate() {
            histogram_rows(&mut positions, &format!("{name},{},", t + 1), h);
        }
        histogram_rows(&mut distances, &format!("{name},"), &s.min_distance_histogram);
    }
    out.write("position_histograms.csv", &positions)?;
    out.write("min_distance_histogram.csv", &distances)?;
    let mut speeds = String::from("t,conditional,interventional\n");
    for t in 0..=c.scenario.horizon {
        let _ = writeln!(
            speeds,
            "{t},{},{}",
            cmp.conditional.mean_speed[t], cmp.interventional.mean_speed[t]
        );
    }
    out.write("mean_speed.csv", &speeds)?;

    if c.plots {
        out.write(
            "min_distance.svg",
            &svg::histogram_svg(
                "minimum distance between the cars",
                "distance (m)",
                &[
                    ("conditional", &cmp.conditional.min_distance_histogram),
                    ("interventional", &cmp.interventional.min_distance_histogram),
                ],
            ),
        )?;
        let series = |s: &DistributionSummary| -> Vec<(f64, f64)> {
            s.mean_speed.iter().enumerate().map(|(t, v)| (t as f64, *v)).collect()
        };
        out.write(
            "mean_speed.svg",
            &svg::line_svg(
                "mean human speed",
                "step",
                "speed (m/s)",
                &[
                    ("conditional", series(&cmp.conditional)),
                    ("interventional", series(&cmp.interventional)),
                ],
            ),
        )?;
        for t in [c.scenario.horizon / 2, c.scenario.horizon] {
            if t == 0 {
                continue;
            }
            out.write(
                &format!("position_t{t:02}.svg"),
                &svg::histogram_svg(
                    &format!("human position at step {t}"),
                    "s_h (m)",
                    &[
                        ("conditional", &cmp.conditional.position_histograms[t - 1]),
                        ("interventional", &cmp.interventional.position_histograms[t - 1]),
                    ],
                ),
            )?;
        }
    }

    let mut summary = String::new();
    for w in &report.warnings {
        let _ = writeln!(summary, "WARNING: {w}");
    }
    let onset = |o: Option<usize>| o.map_or("none".to_string(), |t| t.to_string());
    let _ = writeln!(summary, "trials: {}   conditional ESS: {:.1}", c.trials, report.ess);
    let _ = writeln!(summary, "{:<26}{:>14}{:>16}", "", "conditional", "interventional");
    for (label, a, b) in [
        (
            "P(human does not yield)",
            report.conditional.non_yield_probability,
            report.interventional.non_yield_probability,
        ),
        (
            "P(collision)",
            report.conditional.collision_probability,
            report.interventional.collision_probability,
        ),
    ] {
        let _ = writeln!(summary, "{label:<26}{a:>14.4e}{b:>16.4e}");
    }
    let _ = writeln!(
        summary,
        "{:<26}{:>14}{:>16}",
        "deceleration onset (step)",
        onset(report.conditional.deceleration_onset),
        onset(report.interventional.deceleration_onset)
    );
    let _ = writeln!(
        summary,
        "histogram mass check: max |total - 1| = {:.2e}",
        report.conditional.max_mass_error.max(report.interventional.max_mass_error)
    );
    Ok(CommandReport {
        outcome: Outcome::Pass,
        summary,
        files: out.files,
    })
}

pub const DATASET_FILE: &str = "dataset.json";

fn cmd_gen_dataset(config: &RunConfig, c: &GenDatasetConfig) -> Result<CommandReport> {
    let items = shapley::dataset_generate(c.n_scenarios, c.ranges, c.params, c.horizon, config.seed_key())?;
    let file = DatasetFile {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        generator: c.clone(),
        items,
    };
    let mut out = Output::create(config)?;
    out.write_json(DATASET_FILE, &file)?;
    Ok(CommandReport {
        outcome: Outcome::Pass,
        summary: format!(
            "wrote {} scenarios to {}\n",
            file.items.len(),
            config.out_dir.join(DATASET_FILE).display()
        ),
        files: out.files,
    })
}

fn load_dataset(path: &Path) -> Result<DatasetFile> {
    DatasetFile::load(path)
}

fn run_audit(
    predictor: &dyn Predictor,
    dataset: &DatasetFile,
    marginal: &MarginalSpec,
    audit: &shapley::AuditConfig,
    seed: SeedKey,
) -> Result<ShapleyReport> {
    let sampler = marginal.resolve(dataset.generator.horizon)?;
    shapley::audit(predictor, &dataset.items, audit, sampler.as_ref(), seed)
}

fn cmd_audit(config: &RunConfig, c: &AuditRunConfig) -> Result<CommandReport> {
    let dataset = load_dataset(&c.dataset)?;
    if dataset.items.is_empty() {
        return Err(Error::Config(format!("dataset: {} has no scenarios", c.dataset.display())));
    }
    let predictor = c.predictor.resolve()?;
    let report = run_audit(predictor.as_ref(), &dataset, &c.marginal, &c.audit, config.seed_key())?;
    let mut out = Output::create(config)?;
    out.write_json("shapley_report.json", &report)?;
    let table = report.to_table();
    out.write("shapley_table.txt", &table)?;
    let mut summary = table;
    for f in &report.failures {
        let _ = writeln!(summary, "scenario {} skipped: {}", f.id, f.message);
    }
    Ok(CommandReport {
        outcome: match report.verdict {
            Verdict::Pass => Outcome::Pass,
            Verdict::Fail => Outcome::Fail,
        },
        summary,
        files: out.files,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub predictor: String,
    pub ade: f64,
    pub fde: f64,
    pub kde_nll: f64,
    pub min_ade: f64,
    pub min_fde: f64,
    pub verdict: Option<Verdict>,
}

impl BenchRow {
    fn values(&self) -> [f64; 5] {
        [self.ade, self.fde, self.kde_nll, self.min_ade, self.min_fde]
    }
}

const BENCH_TAG: u64 = 0xBE7C;

/// Accuracy of `predictor` on the ground-truth robot futures, averaged over
/// the dataset, over the full horizon.
pub fn bench_accuracy(predictor: &dyn Predictor, dataset: &DatasetFile, k: usize, min_k: usize, seed: SeedKey) -> Result<[f64; 5]> {
    if dataset.items.is_empty() {
        return Err(Error::Config("dataset has no scenarios".into()));
    }
    let per_item = dataset
        .items
        .par_iter()
        .map(|item| -> Result<[f64; 5]> {
            let query = PredictionQuery {
                scenario: item.scenario,
                robot_future: item.truth_robot.clone(),
                k,
                seed: seed.with_scenario(item.id).derive(BENCH_TAG),
            };
            let samples = predictor.predict(&query)?;
            if samples.len() != k {
                return Err(Error::predictor(
                    predictor.tag(),
                    format!("returned {} samples, expected {k}", samples.len()),
                ));
            }
            let prefix = HorizonPrefix(item.scenario.horizon);
            let truth = &item.truth_human;
            let first = crate::types::SampleSet::uniform(samples.samples[..min_k].to_vec())?;
            Ok([
                metrics::ade(&samples, truth, prefix)?,
                metrics::fde(&samples, truth, prefix)?,
                metrics::kde_nll(&samples, truth, prefix, BandwidthRule::default())?,
                metrics::min_variant(MetricKind::MinAde, &first, truth, prefix)?,
                metrics::min_variant(MetricKind::MinFde, &first, truth, prefix)?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_item.len() as f64;
    let mut mean = [0.0; 5];
    for row in &per_item {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    Ok(mean)
}

/// Table II layout: one row per predictor, each metric with its relative
/// change against the unconditioned baseline, plus the audit verdict.
pub fn bench_table(rows: &[BenchRow], baseline: &BenchRow, min_k: usize) -> String {
    let headers = [
        "ADE".to_string(),
        "FDE".to_string(),
        "KDE-NLL".to_string(),
        format!("minADE_{min_k}"),
        format!("minFDE_{min_k}"),
    ];
    let mut out = format!("{:<34}", "predictor");
    for h in &headers {
        let _ = write!(out, "{h:>20}");
    }
    let _ = writeln!(out, "{:>10}", "audit");
    for row in std::iter::once(baseline).chain(rows.iter()) {
        let _ = write!(out, "{:<34}", row.predictor);
        for (v, b) in row.values().iter().zip(baseline.values()) {
            let cell = if std::ptr::eq(row, baseline) {
                format!("{v:.4}")
            } else {
                format!("{v:.4} ({:+.1}%)", 100.0 * (v - b) / b.abs())
            };
            let _ = write!(out, "{cell:>20}");
        }
        let verdict = match row.verdict {
            Some(Verdict::Pass) => "PASS",
            Some(Verdict::Fail) => "FAIL",
            None => "-",
        };
        let _ = writeln!(out, "{verdict:>10}");
    }
    out
}

fn cmd_bench(config: &RunConfig, c: &BenchConfig) -> Result<CommandReport> {
    let dataset = load_dataset(&c.dataset)?;
    if dataset.items.is_empty() {
        return Err(Error::Config(format!("dataset: {} has no scenarios", c.dataset.display())));
    }
    let seed = config.seed_key();
    let evaluate = |spec: &PredictorSpec| -> Result<BenchRow> {
        let predictor = spec.resolve()?;
        let [ade, fde, kde_nll, min_ade, min_fde] = bench_accuracy(predictor.as_ref(), &dataset, c.k, c.min_k, seed)?;
        let verdict = match &c.audit {
            Some(a) => Some(run_audit(predictor.as_ref(), &dataset, &c.marginal, a, seed)?.verdict),
            None => None,
        };
        Ok(BenchRow {
            predictor: spec.label(),
            ade,
            fde,
            kde_nll,
            min_ade,
            min_fde,
            verdict,
        })
    };
    let baseline_spec = PredictorSpec::Builtin {
        tag: "unconditioned-oracle".into(),
    };
    let mut baseline = evaluate(&baseline_spec)?;
    baseline.predictor = "unconditioned-oracle (baseline)".into();
    let rows = c
        .predictors
        .iter()
        .filter(|p| **p != baseline_spec)
        .map(evaluate)
        .collect::<Result<Vec<_>>>()?;

    let mut out = Output::create(config)?;
    let mut csv = String::from("predictor,ade,fde,kde_nll,min_ade,min_fde,audit\n");
    for row in std::iter::once(&baseline).chain(&rows) {
        let verdict = row.verdict.map_or("", |v| if v == Verdict::Pass { "PASS" } else { "FAIL" });
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{verdict}",
            row.predictor, row.ade, row.fde, row.kde_nll, row.min_ade, row.min_fde
        );
    }
    out.write("bench.csv", &csv)?;
    let table = bench_table(&rows, &baseline, c.min_k);
    out.write("bench_table.txt", &table)?;
    Ok(CommandReport {
        outcome: Outcome::Pass,
        summary: table,
        files: out.files,
    })
}

fn cmd_probe(config: &RunConfig, c: &ProbeConfig) -> Result<CommandReport> {
    let report: ConformanceReport = extproto::probe(&c.endpoint);
    let mut out = Output::create(config)?;
    out.write_json("probe_report.json", &report)?;
    let text = report.to_text();
    out.write("probe_report.txt", &text)?;
    let outcome = if report.capabilities.is_none() {
        Outcome::PredictorFailure
    } else if report.conformant() {
        Outcome::Pass
    } else {
        Outcome::Fail
    };
    Ok(CommandReport {
        outcome,
        summary: text,
        files: out.files,
    })
}
