//! Accuracy of the oracle predictors next to their audit verdicts: the most
//! accurate predictor is not the one that passes.
//!
//! ```text
//! cargo run --release --example bench_table -- [n_scenarios]
//! ```

use ibp::app::commands::{bench_accuracy, bench_table, BenchRow};
use ibp::app::config::{default_gen_dataset, DatasetFile, SCHEMA_VERSION};
use ibp::predictors::{make_cbp_oracle, make_ibp_oracle, make_unconditioned_oracle, Predictor};
use ibp::shapley::{audit, dataset_generate, AuditConfig, DatasetRanges};
use ibp::{IdmParams, SeedKey};

fn main() -> ibp::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(40, |a| a.parse().expect("n_scenarios"));
    let seed = SeedKey::new(11);
    let items = dataset_generate(n, DatasetRanges::default(), IdmParams::paper(), 10, seed)?;
    let dataset = DatasetFile {
        schema_version: SCHEMA_VERSION,
        seed: 11,
        generator: default_gen_dataset(),
        items,
    };
    let sampler = make_unconditioned_oracle();
    let config = AuditConfig { k: 32, ..AuditConfig::default() };

    let ibp_oracle = make_ibp_oracle();
    let cbp_oracle = make_cbp_oracle();
    let predictors: [&dyn Predictor; 3] = [sampler.as_ref(), ibp_oracle.as_ref(), cbp_oracle.as_ref()];
    let mut rows = Vec::new();
    for predictor in predictors {
        let [ade, fde, kde_nll, min_ade, min_fde] = bench_accuracy(predictor, &dataset, 16, 6, seed)?;
        let verdict = audit(predictor, &dataset.items, &config, sampler.as_ref(), seed)?.verdict;
        rows.push(BenchRow {
            predictor: predictor.tag().to_string(),
            ade,
            fde,
            kde_nll,
            min_ade,
            min_fde,
            verdict: Some(verdict),
        });
    }
    print!("{}", bench_table(&rows[1..], &rows[0], 6));
    Ok(())
}
