//! Exact Shapley values of small set functions, and the per-segment
//! attribution of one scenario for both oracle predictors.
//!
//! ```text
//! cargo run --release --example shapley_values
//! ```

use ibp::metrics::MetricKind;
use ibp::predictors::{make_cbp_oracle, make_ibp_oracle, make_unconditioned_oracle, Predictor};
use ibp::shapley::{dataset_generate, scenario_attribution, shapley_exact, AuditConfig, DatasetRanges};
use ibp::{IdmParams, SeedKey};

fn main() -> ibp::Result<()> {
    // Player 1 alone carries all the value.
    let nu = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
    println!("lone contributor: {:?}", shapley_exact(&nu, 3)?);
    // Players 1 and 2 only pay off together.
    let nu = [0.0, 0.0, 0.0, 6.0, 0.0, 0.0, 0.0, 6.0];
    println!("complements:      {:?}", shapley_exact(&nu, 3)?);

    let seed = SeedKey::new(7);
    let item = &dataset_generate(1, DatasetRanges::default(), IdmParams::paper(), 10, seed)?[0];
    let config = AuditConfig::default();
    let sampler = make_unconditioned_oracle();
    let ibp_oracle = make_ibp_oracle();
    let cbp_oracle = make_cbp_oracle();
    let predictors: [&dyn Predictor; 2] = [ibp_oracle.as_ref(), cbp_oracle.as_ref()];
    for predictor in predictors {
        let a = scenario_attribution(predictor, item, &config, sampler.as_ref(), seed)?;
        for (metric, phi) in &a.phi {
            if *metric == MetricKind::Fde {
                println!("{:>12} FDE credit per segment: {:?}", predictor.tag(), phi);
            }
        }
    }
    Ok(())
}
