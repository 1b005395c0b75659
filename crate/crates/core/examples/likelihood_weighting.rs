//! Seeing vs. doing: the human's future given the aggressive plan as evidence
//! (likelihood weighting) and under the plan as an action (rollouts).
//!
//! ```text
//! cargo run --release --example likelihood_weighting -- [trials]
//! ```

use ibp::idm::plan_accelerate;
use ibp::inference::{compare, CompareBins};
use ibp::{Scenario, SeedKey};

fn main() -> ibp::Result<()> {
    let trials: usize = std::env::args().nth(1).map_or(10_000, |a| a.parse().expect("trials"));
    let sc = Scenario::paper_toy();
    let plan = plan_accelerate(&sc, 5.0, 10.0)?;
    let cmp = compare(&sc, &plan, trials, &CompareBins::default(), SeedKey::new(0))?;

    println!("effective sample size of the weighted set: {:.1} of {trials}", cmp.ess);
    for w in &cmp.warnings {
        println!("warning: {w}");
    }
    println!("{:>3} {:>12} {:>12}", "t", "E[v_h|plan]", "E[v_h|do]");
    for (t, (c, i)) in cmp.conditional.mean_speed.iter().zip(&cmp.interventional.mean_speed).enumerate() {
        println!("{t:>3} {c:>12.3} {i:>12.3}");
    }
    for (name, d) in [("conditional", &cmp.conditional), ("interventional", &cmp.interventional)] {
        println!(
            "{name:>15}: P(human first) {:.4}, P(collision) {:.3e}, onset {:?}",
            d.non_yield_probability, d.collision_probability, d.deceleration_onset
        );
    }
    Ok(())
}
