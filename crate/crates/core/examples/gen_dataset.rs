//! Synthetic scenarios with ground truths from the reactive system.
//!
//! ```text
//! cargo run --example gen_dataset -- [n] [seed]
//! ```

use ibp::shapley::{dataset_generate, DatasetRanges};
use ibp::{IdmParams, SeedKey};

fn main() -> ibp::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(5, |a| a.parse().expect("n"));
    let run: u64 = args.next().map_or(0, |a| a.parse().expect("seed"));
    let items = dataset_generate(n, DatasetRanges::default(), IdmParams::paper(), 10, SeedKey::new(run))?;
    for item in &items {
        let sc = &item.scenario;
        let last = item.truth_human.states[sc.horizon];
        println!(
            "#{:<3} human ({:.1} m, {:.1} m/s) robot ({:.1} m, {:.1} m/s) -> human ends at {:.2} m",
            item.id, sc.human0.s, sc.human0.v, sc.robot0.s, sc.robot0.v, last.s
        );
    }
    Ok(())
}
