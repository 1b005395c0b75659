//! One joint rollout of the two-car system next to the same human noise
//! played against an imposed aggressive robot plan.
//!
//! ```text
//! cargo run --example idm_rollout -- [seed]
//! ```

use ibp::idm::{plan_accelerate, right_of_way, rollout_intervened, rollout_joint};
use ibp::{Scenario, SeedKey};

fn main() -> ibp::Result<()> {
    let run: u64 = std::env::args().nth(1).map_or(0, |a| a.parse().expect("seed"));
    let sc = Scenario::paper_toy();
    let seed = SeedKey::new(run);

    let (human, robot) = rollout_joint(&sc, seed)?;
    let plan = plan_accelerate(&sc, 5.0, 10.0)?;
    let forced = rollout_intervened(&sc, &plan, seed)?;

    println!("  t |  joint s_h   v_h  s_r   v_r  row   | do(plan) s_h   v_h  s_r   v_r");
    for t in 0..=sc.horizon {
        let (h, r) = (human.states[t], robot.states[t]);
        let (f, p) = (forced.states[t], plan.states[t]);
        println!(
            "{t:>3} | {:>9.2} {:>5.2} {:>5.2} {:>5.2} {:<6} | {:>9.2} {:>5.2} {:>5.2} {:>5.2}",
            h.s,
            h.v,
            r.s,
            r.v,
            format!("{:?}", right_of_way(&h, &r).owner),
            f.s,
            f.v,
            p.s,
            p.v
        );
    }
    Ok(())
}
