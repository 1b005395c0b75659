//! Shapley audit of the interventional and conditional oracles on a synthetic
//! dataset, with and without common random numbers.
//!
//! ```text
//! cargo run --release --example audit_oracles -- [n_scenarios] [k]
//! ```

use std::time::Instant;

use ibp::predictors::{make_cbp_oracle, make_ibp_oracle, make_unconditioned_oracle, Predictor};
use ibp::shapley::{audit, dataset_generate, AuditConfig, DatasetRanges};
use ibp::{IdmParams, SeedKey};

fn main() -> ibp::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(100), |a| a.parse()).expect("n_scenarios");
    let k: usize = args.next().map_or(Ok(64), |a| a.parse()).expect("k");

    let seed = SeedKey::new(2024);
    let dataset = dataset_generate(n, DatasetRanges::default(), IdmParams::paper(), 10, seed)?;
    let sampler = make_unconditioned_oracle();
    let ibp_oracle = make_ibp_oracle();
    let cbp_oracle = make_cbp_oracle();

    let mut config = AuditConfig {
        k,
        ..AuditConfig::default()
    };
    let predictors: [(&str, &dyn Predictor); 2] = [("ibp", ibp_oracle.as_ref()), ("cbp", cbp_oracle.as_ref())];
    for crn in [true, false] {
        config.common_random_numbers = crn;
        for (name, predictor) in predictors {
            let start = Instant::now();
            let report = audit(predictor, &dataset, &config, sampler.as_ref(), seed)?;
            println!("== {name}, common random numbers: {crn} ({:.1?})", start.elapsed());
            print!("{}", report.to_table());
            for s in &report.summaries {
                println!("noise floor {}: {:?}", s.metric.name(), s.noise_floor);
            }
        }
    }
    Ok(())
}
