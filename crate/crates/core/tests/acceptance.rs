//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test --release --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use common::criteria;
use common::{timed, Check};

const BIN: &str = env!("CARGO_BIN_EXE_ibp");

fn report(name: &str, check: &Check) -> bool {
    println!("{} {name}: {}", if check.pass { "PASS" } else { "FAIL" }, check.detail);
    check.pass
}

fn ibp(threads: usize, args: &[&str]) -> i32 {
    let out = Command::new(BIN)
        .arg("--threads")
        .arg(threads.to_string())
        .args(args)
        .output()
        .expect("run ibp");
    if !matches!(out.status.code(), Some(0 | 1)) {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap_or(-1)
}

fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "config.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

/// Runs every command once from flags, then twice from the saved config (one
/// and four threads), and compares every output file byte for byte.
fn reproducibility() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |name: &str| -> PathBuf { tmp.path().join(name) };
    let data = dir("data");
    let dataset = data.join("dataset.json").to_string_lossy().into_owned();
    let endpoint = format!("cmd:{BIN} serve-ref --mode causal-cv");
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("gen-dataset", vec!["--n", "8", "--seed", "5"]),
        ("simulate", vec!["--trials", "3", "--seed", "5"]),
        ("toy-compare", vec!["--trials", "2000", "--seed", "5"]),
        ("audit", vec!["--dataset", &dataset, "--predictor", "cbp", "--k", "8", "--epsilon", "0.01"]),
        ("bench", vec!["--dataset", &dataset, "--samples", "8", "--epsilon", "0.01", "--k", "4"]),
        ("probe", vec!["--endpoint", &endpoint]),
    ];
    let mut problems = Vec::new();
    let mut compared = 0;
    for (cmd, args) in &runs {
        let first = if *cmd == "gen-dataset" { data.clone() } else { dir(cmd) };
        let first_s = first.to_string_lossy().into_owned();
        let mut argv = vec![*cmd];
        argv.extend(args.iter().copied());
        argv.extend(["--out", &first_s]);
        let code = ibp(4, &argv);
        if !matches!(code, 0 | 1) {
            problems.push(format!("{cmd}: exit {code}"));
            continue;
        }
        let reference = outputs(&first);
        let config = first.join("config.json").to_string_lossy().into_owned();
        for threads in [1usize, 4] {
            let again = dir(&format!("{cmd}-{threads}"));
            let again_s = again.to_string_lossy().into_owned();
            let rerun = ibp(threads, &[cmd, "--config", &config, "--out", &again_s]);
            if rerun != code {
                problems.push(format!("{cmd}: exit {rerun} on rerun vs {code}"));
            }
            let got = outputs(&again);
            if got != reference {
                let differing: Vec<&String> = reference.keys().filter(|k| got.get(*k) != reference.get(*k)).collect();
                problems.push(format!("{cmd} at {threads} threads differs in {differing:?}"));
            }
            compared += got.len();
        }
    }
    Check::new(
        problems.is_empty(),
        format!(
            "{} commands, {compared} output files compared at 1 and 4 threads{}",
            runs.len(),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

fn main() {
    let mut all = true;

    all &= report("toy study", &criteria::toy_study(10_000));
    println!("INFO toy study with the printed approach rate: {}", criteria::toy_study_as_printed(10_000));

    all &= report("likelihood weighting vs quadrature", &criteria::lw_vs_quadrature(6, 20_000, 1));

    all &= report("shapley axioms", &criteria::shapley_axioms(1000));

    let (pattern, secs) = timed(|| criteria::table_pattern(100, 64));
    let pattern_ok = pattern.lines.iter().all(|(ok, _)| *ok);
    all &= report(
        "masked-row pattern",
        &Check::new(pattern_ok, format!("100 scenarios, K=64, {secs:.1}s")),
    );
    for (ok, line) in &pattern.lines {
        println!("    {} {line}", if *ok { "ok  " } else { "FAIL" });
    }

    all &= report("metric unit suite", &criteria::metric_suite());

    all &= report("temporal independence", &criteria::temporal_independence(100));

    all &= report("reproducibility", &reproducibility());

    if !all {
        println!("acceptance: some criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
