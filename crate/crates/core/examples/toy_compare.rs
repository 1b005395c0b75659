//! The full toy-study command through the library API, writing reports and
//! plots to a directory.
//!
//! ```text
//! cargo run --release --example toy_compare -- [out_dir]
//! ```

use ibp::app::commands::run;
use ibp::app::config::{paper_toy_compare, CommandConfig, RunConfig};

fn main() -> ibp::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/toy-compare".into());
    let config = RunConfig::new(0, out, CommandConfig::ToyCompare(paper_toy_compare()));
    let report = run(&config)?;
    print!("{}", report.summary);
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
