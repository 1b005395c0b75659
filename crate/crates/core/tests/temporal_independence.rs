mod common;

use common::criteria::{self, random_triple};
use ibp::idm;
use ibp::predictors::{make_cbp_oracle, make_ibp_oracle, PredictionQuery, Predictor};
use proptest::prelude::*;

#[test]
fn hundred_triples_bit_exact() {
    let check = criteria::temporal_independence(100);
    assert!(check.pass, "{}", check.detail);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The human state at step t reads the robot only up to step t-1, so
    /// plans sharing steps 1..k give identical human states through k+1.
    #[test]
    fn intervened_rollout_shares_one_extra_step(seed in any::<u64>()) {
        let t = random_triple(&mut common::rng(seed));
        let a = idm::rollout_intervened(&t.scenario, &t.a, t.seed).unwrap();
        let b = idm::rollout_intervened(&t.scenario, &t.b, t.seed).unwrap();
        prop_assert_eq!(&a.states[..=t.k + 1], &b.states[..=t.k + 1]);
    }
}

/// The conditional oracle is not prefix-independent: changing only late plan
/// steps moves some early predictions.
#[test]
fn conditional_oracle_leaks_somewhere() {
    let mut r = common::rng(21);
    let cbp = make_cbp_oracle();
    let ibp = make_ibp_oracle();
    let mut leaks = 0;
    for _ in 0..20 {
        let t = random_triple(&mut r);
        let q = |plan: &idm::RobotPlan| PredictionQuery { scenario: t.scenario, robot_future: plan.clone(), k: 8, seed: t.seed };
        let (Ok(pa), Ok(pb)) = (cbp.predict(&q(&t.a)), cbp.predict(&q(&t.b))) else { continue };
        if pa.samples.iter().zip(&pb.samples).any(|(x, y)| x.states[1] != y.states[1]) {
            leaks += 1;
        }
        let (ia, ib) = (ibp.predict(&q(&t.a)).unwrap(), ibp.predict(&q(&t.b)).unwrap());
        assert!(ia.samples.iter().zip(&ib.samples).all(|(x, y)| x.states[1] == y.states[1]));
    }
    assert!(leaks > 0);
}
