//! One function per acceptance criterion. Each returns a [`Check`] with a
//! one-line detail string; the focused integration tests call the same
//! functions at reduced sizes.

use ibp::idm::{self, plan_accelerate, RobotPlan};
use ibp::inference::{self, CompareBins};
use ibp::metrics::{self, BandwidthRule, HorizonPrefix, MetricKind};
use ibp::predictors::{make_cbp_oracle, make_ibp_oracle, make_unconditioned_oracle, PredictionQuery};
use ibp::shapley::{self, audit, dataset_generate, AuditConfig, DatasetRanges, Verdict};
use ibp::{AgentState, ApproachRate, IdmParams, SampleSet, Scenario, SeedKey, Trajectory};
use rand::Rng;

use super::*;

pub struct ToyOutcome {
    pub cond_non_yield: f64,
    pub int_non_yield: f64,
    pub cond_collision: f64,
    pub int_collision: f64,
    pub cond_resampled_collisions: usize,
    pub cond_onset: Option<usize>,
    pub int_onset: Option<usize>,
    pub ess: f64,
    pub secs: f64,
}

pub fn toy_outcome(params: IdmParams, trials: usize, run: u64) -> ToyOutcome {
    let sc = Scenario { params, ..Scenario::paper_toy() };
    let plan = plan_accelerate(&sc, 5.0, 10.0).unwrap();
    let seed = SeedKey::new(run);
    let ((cmp, resampled), secs) = timed(|| {
        let cmp = inference::compare(&sc, &plan, trials, &CompareBins::default(), seed).unwrap();
        // Resample the conditional set to count colliding draws directly.
        let est = inference::conditional_lw(&sc, &plan, trials, seed).unwrap();
        let set = inference::systematic_resample(&est.samples, trials, seed).unwrap();
        let collisions = set
            .samples
            .iter()
            .filter(|h| idm::min_distance(&h.states, &plan.states, sc.geometry).unwrap() < sc.collision_threshold)
            .count();
        (cmp, collisions)
    });
    ToyOutcome {
        cond_non_yield: cmp.conditional.non_yield_probability,
        int_non_yield: cmp.interventional.non_yield_probability,
        cond_collision: cmp.conditional.collision_probability,
        int_collision: cmp.interventional.collision_probability,
        cond_resampled_collisions: resampled,
        cond_onset: cmp.conditional.deceleration_onset,
        int_onset: cmp.interventional.deceleration_onset,
        ess: cmp.ess,
        secs,
    }
}

impl ToyOutcome {
    pub fn part_a(&self) -> bool {
        self.cond_non_yield < 0.01
    }

    /// A conditional collision estimate below one sample's worth of mass and
    /// no colliding draw after resampling counts as zero within the sample.
    pub fn part_b(&self, trials: usize) -> bool {
        self.int_non_yield > 0.05
            && self.int_collision > 0.0
            && self.cond_collision < 1.0 / trials as f64
            && self.cond_resampled_collisions == 0
    }

    pub fn part_c(&self) -> bool {
        match (self.cond_onset, self.int_onset) {
            (Some(c), Some(i)) => i > c,
            (Some(_), None) => true,
            _ => false,
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "non-yield cond {:.4} int {:.4}; collision cond {:.3e} (resampled {}) int {:.4}; onset cond {:?} int {:?}; ESS {:.1}; {:.1}s",
            self.cond_non_yield,
            self.int_non_yield,
            self.cond_collision,
            self.cond_resampled_collisions,
            self.int_collision,
            self.cond_onset,
            self.int_onset,
            self.ess,
            self.secs
        )
    }
}

pub fn toy_study(trials: usize) -> Check {
    let o = toy_outcome(IdmParams::paper(), trials, 0);
    let (a, b, c) = (o.part_a(), o.part_b(trials), o.part_c());
    Check::new(
        a && b && c && o.secs < 30.0,
        format!("(a) {} (b) {} (c) {}; {}", ok(a), ok(b), ok(c), o.describe()),
    )
}

pub fn toy_study_as_printed(trials: usize) -> String {
    let o = toy_outcome(IdmParams::paper().with_approach_rate(ApproachRate::AsPrinted), trials, 0);
    format!(
        "(a) {} (b) {} (c) {}; {}",
        ok(o.part_a()),
        ok(o.part_b(trials)),
        ok(o.part_c()),
        o.describe()
    )
}

fn ok(b: bool) -> &'static str {
    if b { "ok" } else { "FAIL" }
}

/// Posterior mean and variance of `s_{h,T}` for `T ∈ {1, 2}` against the
/// quadrature oracle, `plans` evidence plans per horizon.
pub fn lw_vs_quadrature(plans: usize, samples: usize, seed: u64) -> Check {
    let p = IdmParams::paper();
    let mut r = rng(seed);
    let mut worst_ratio: f64 = 0.0;
    let mut failures = Vec::new();
    let (_, secs) = timed(|| {
        for horizon in [1usize, 2] {
            for case_id in 0..plans {
                let case = random_evidence(&mut r, horizon, &p);
                let h0 = AgentState::new(case.human0.0, case.human0.1);
                let r0 = AgentState::new(case.robot0.0, case.robot0.1);
                let sc = Scenario::new(h0, r0, p, horizon);
                let plan = RobotPlan::from_speeds(r0, &case.speeds, p.dt).unwrap();
                let robot: Vec<(f64, f64)> = plan.states.iter().map(|s| (s.s, s.v)).collect();
                let (q_mean, q_var) = quadrature_posterior(case.human0, &robot, &p, 400_001);
                let est =
                    inference::conditional_lw(&sc, &plan, samples, SeedKey::new(seed).derive(case_id as u64)).unwrap();
                let x = est.samples.positions_at(horizon);
                let (mean, var, se_mean, se_var) = weighted_moments(&x, &est.samples.weight_vec());
                for (what, got, want, se) in [("mean", mean, q_mean, se_mean), ("var", var, q_var, se_var)] {
                    let tol = (3.0 * se).max(1e-9);
                    let err = (got - want).abs();
                    worst_ratio = worst_ratio.max(err / tol);
                    if err > tol {
                        failures.push(format!("T={horizon} case {case_id} {what}: {got:.6} vs {want:.6} (tol {tol:.2e})"));
                    }
                }
            }
        }
    });
    Check::new(
        failures.is_empty() && secs < 60.0,
        format!(
            "{} plans x T in {{1,2}}, worst |err|/tol {:.2}, {:.1}s{}",
            plans,
            worst_ratio,
            secs,
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

pub fn library_shapley(values: &[f64], m: usize) -> Vec<f64> {
    shapley::shapley_exact(values, m).unwrap()
}

pub fn shapley_axioms(games: usize) -> Check {
    let worst3 = axiom_sweep(games, 3, 31, library_shapley);
    let worst4 = axiom_sweep(games, 4, 41, library_shapley);
    let hand = library_shapley(&[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0], 3);
    let hand_ok = hand == vec![1.0, 0.0, 0.0];
    Check::new(
        worst3 <= 1e-9 && worst4 <= 1e-9 && hand_ok,
        format!("{games} games each at m=3 (max dev {worst3:.1e}) and m=4 (max dev {worst4:.1e}); hand example {hand:?}"),
    )
}

pub struct TablePattern {
    pub lines: Vec<(bool, String)>,
    pub secs: f64,
}

/// The masked-row pattern: exact dummies for the interventional oracle under
/// common random numbers, noise-level values without them, and a positive
/// late-segment credit for the conditional oracle.
pub fn table_pattern(n: usize, k: usize) -> TablePattern {
    let seed = SeedKey::new(2024);
    let dataset = dataset_generate(n, DatasetRanges::default(), IdmParams::paper(), 10, seed).unwrap();
    let sampler = make_unconditioned_oracle();
    let ibp_oracle = make_ibp_oracle();
    let cbp_oracle = make_cbp_oracle();
    let crn = AuditConfig { k, epsilon: 0.01, ..AuditConfig::default() };
    let independent = AuditConfig { common_random_numbers: false, ..crn.clone() };
    let ((ibp_crn, ibp_ind, cbp_crn), secs) = timed(|| {
        (
            audit(ibp_oracle.as_ref(), &dataset, &crn, sampler.as_ref(), seed).unwrap(),
            audit(ibp_oracle.as_ref(), &dataset, &independent, sampler.as_ref(), seed).unwrap(),
            audit(cbp_oracle.as_ref(), &dataset, &crn, sampler.as_ref(), seed).unwrap(),
        )
    });
    let mut lines = Vec::new();

    let max_dummy = ibp_crn
        .scenarios
        .iter()
        .flat_map(|s| s.phi.iter().flat_map(|(_, phi)| phi[1..].iter().map(|x| x.abs())))
        .fold(0.0f64, f64::max);
    lines.push((
        max_dummy <= 1e-12 && ibp_crn.failures.is_empty(),
        format!("ibp with CRN: max |phi_j|, j>=2, over all scenarios and metrics = {max_dummy:.1e}"),
    ));

    let mut below = true;
    let mut parts = Vec::new();
    for s in &ibp_ind.summaries {
        for j in 1..s.mean.len() {
            below &= s.mean[j].abs() < s.noise_floor[j];
            parts.push(format!("{}_{} {:.4}/{:.4}", s.metric.name(), j + 1, s.mean[j], s.noise_floor[j]));
        }
    }
    lines.push((below, format!("ibp without CRN: |mean| / noise floor: {}", parts.join(", "))));

    let floor = &ibp_ind.summary(MetricKind::Fde).unwrap().noise_floor;
    let cbp = &cbp_crn.summary(MetricKind::Fde).unwrap().mean;
    let above = (1..cbp.len()).all(|j| cbp[j] > 0.0 && cbp[j] > 3.0 * floor[j]);
    lines.push((
        above,
        format!(
            "cbp FDE phi_2 {:.4}, phi_3 {:.4} vs 3x ibp floor {:.4}, {:.4}",
            cbp[1],
            cbp[2],
            3.0 * floor[1],
            3.0 * floor[2]
        ),
    ));

    lines.push((
        ibp_crn.verdict == Verdict::Pass && cbp_crn.verdict == Verdict::Fail,
        format!("verdicts at eps 0.01: ibp {:?}, cbp {:?}", ibp_crn.verdict, cbp_crn.verdict),
    ));
    lines.push((secs < 600.0, format!("runtime {secs:.1}s")));
    TablePattern { lines, secs }
}

fn line(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    points.to_vec()
}

fn along(s: &[f64]) -> Vec<[f64; 2]> {
    s.iter().map(|x| [*x, 0.0]).collect()
}

fn traj(s: &[f64]) -> Trajectory {
    Trajectory::new(s.iter().map(|x| AgentState::new(*x, 1.0)).collect()).unwrap()
}

/// Every worked metric example, plus the prefix and ordering properties.
pub fn metric_suite() -> Check {
    let mut failures = Vec::new();
    let mut expect = |name: &str, got: f64, want: f64, tol: f64| {
        if !((got - want).abs() <= tol) {
            failures.push(format!("{name}: {got} vs {want}"));
        }
    };
    let truth_s = [20.0, 18.0, 16.5, 15.0, 13.0];
    let truth = along(&truth_s);
    let p4 = HorizonPrefix(4);
    let shifted = |dx: f64, dy: f64| -> Vec<[f64; 2]> { truth.iter().map(|q| [q[0] + dx, q[1] + dy]).collect() };

    expect("ade truth", metrics::ade_paths(&[truth.clone()], None, &truth, p4).unwrap(), 0.0, 1e-9);
    expect("ade lateral 3", metrics::ade_paths(&[shifted(0.0, 3.0)], None, &truth, p4).unwrap(), 3.0, 1e-9);
    expect(
        "ade offsets 1,3",
        metrics::ade_paths(&[shifted(0.0, 1.0), shifted(0.0, 3.0)], None, &truth, p4).unwrap(),
        2.0,
        1e-9,
    );

    expect("fde truth", metrics::fde_paths(&[truth.clone()], None, &truth, p4).unwrap(), 0.0, 1e-9);
    let mut final_only = truth.clone();
    final_only[4][1] += 5.0;
    expect("fde offset 5 at t1", metrics::fde_paths(&[final_only], None, &truth, p4).unwrap(), 5.0, 1e-9);
    let mut a = truth.clone();
    a[4][0] += 2.0;
    let mut b = truth.clone();
    b[4][0] -= 6.0;
    expect(
        "fde weights 1,3",
        metrics::fde_paths(&[a, b], Some(&[1.0, 3.0]), &truth, p4).unwrap(),
        5.0,
        1e-9,
    );

    let h = metrics::BANDWIDTH_FLOOR;
    let stack = vec![truth.clone(); 5];
    let closed = (2.0 * std::f64::consts::PI * h * h).ln();
    expect(
        "kde at kernel center",
        metrics::kde_nll_paths(&stack, None, &truth, p4, BandwidthRule::default()).unwrap(),
        closed,
        1e-6,
    );
    expect(
        "kde fixed floor bandwidth",
        metrics::kde_nll_paths(&stack, None, &truth, p4, BandwidthRule::Fixed { h }).unwrap(),
        closed,
        1e-6,
    );
    expect(
        "kde far away",
        metrics::kde_nll_paths(&[shifted(1e6, 0.0), shifted(1e6, 1.0)], None, &truth, p4, BandwidthRule::default())
            .unwrap(),
        20.0,
        1e-6,
    );
    let spread = vec![shifted(0.3, -0.2), shifted(-0.5, 0.4), shifted(1.1, 0.0)];
    let base = metrics::kde_nll_paths(&spread, None, &truth, p4, BandwidthRule::default()).unwrap();
    let moved: Vec<Vec<[f64; 2]>> = spread.iter().map(|p| p.iter().map(|q| [q[0] + 7.5, q[1] - 3.25]).collect()).collect();
    let moved_truth: Vec<[f64; 2]> = truth.iter().map(|q| [q[0] + 7.5, q[1] - 3.25]).collect();
    expect(
        "kde translation invariance",
        metrics::kde_nll_paths(&moved, None, &moved_truth, p4, BandwidthRule::default()).unwrap(),
        base,
        1e-9,
    );

    let truth_t = traj(&truth_s);
    let with_truth = SampleSet::uniform(vec![traj(&[20.0, 19.0, 18.0, 17.0, 16.0]), truth_t.clone()]).unwrap();
    expect(
        "minADE with truth",
        metrics::min_variant(MetricKind::MinAde, &with_truth, &truth_t, p4).unwrap(),
        0.0,
        1e-9,
    );
    let offsets = SampleSet::uniform(vec![
        traj(&truth_s.map(|s| s + 1.0)),
        traj(&truth_s.map(|s| s + 3.0)),
    ])
    .unwrap();
    for kind in [MetricKind::MinAde, MetricKind::MinFde] {
        expect(kind.name(), metrics::min_variant(kind, &offsets, &truth_t, p4).unwrap(), 1.0, 1e-9);
    }
    let weighted = SampleSet::weighted(vec![truth_t.clone(), truth_t.clone()], vec![1.0, 3.0]).unwrap();
    if metrics::min_variant(MetricKind::MinFde, &weighted, &truth_t, p4).is_ok() {
        failures.push("min over a weighted set accepted".into());
    }
    if metrics::ade_paths(&[truth.clone()], None, &truth, HorizonPrefix(0)).is_ok() {
        failures.push("empty prefix accepted".into());
    }

    // Randomized properties.
    let mut r = rng(77);
    for _ in 0..200 {
        let k = r.random_range(1..8);
        let paths: Vec<Vec<[f64; 2]>> = (0..k)
            .map(|_| line(&truth.iter().map(|q| [q[0] + r.random_range(-3.0..3.0), r.random_range(-1.0..1.0)]).collect::<Vec<_>>()))
            .collect();
        let ade = metrics::ade_paths(&paths, None, &truth, p4).unwrap();
        let fde = metrics::fde_paths(&paths, None, &truth, p4).unwrap();
        if metrics::min_paths(MetricKind::MinAde, &paths, &truth, p4).unwrap() > ade
            || metrics::min_paths(MetricKind::MinFde, &paths, &truth, p4).unwrap() > fde
        {
            failures.push("min exceeds mean".into());
        }
        let mut late = paths.clone();
        let mut late_truth = truth.clone();
        for p in &mut late {
            p[4][0] += 1.0;
            p[4][1] -= 2.0;
        }
        late_truth[4][1] += 0.5;
        let p3 = HorizonPrefix(3);
        for (kind, f) in [
            ("ade", metrics::ade_paths as fn(&metrics::Paths, Option<&[f64]>, &[[f64; 2]], HorizonPrefix) -> ibp::Result<f64>),
            ("fde", metrics::fde_paths),
        ] {
            if f(&paths, None, &truth, p3).unwrap().to_bits() != f(&late, None, &late_truth, p3).unwrap().to_bits() {
                failures.push(format!("{kind} reads past the prefix"));
            }
        }
        let kde = |p: &[Vec<[f64; 2]>], t: &[[f64; 2]]| metrics::kde_nll_paths(p, None, t, p3, BandwidthRule::default()).unwrap();
        if kde(&paths, &truth).to_bits() != kde(&late, &late_truth).to_bits() {
            failures.push("kde reads past the prefix".into());
        }
    }
    failures.dedup();
    Check::new(
        failures.is_empty(),
        if failures.is_empty() {
            "all worked examples and properties hold".to_string()
        } else {
            failures.join("; ")
        },
    )
}

/// Random scenario, seed and pair of plans sharing steps `1..=k`.
pub struct Triple {
    pub scenario: Scenario,
    pub seed: SeedKey,
    pub a: RobotPlan,
    pub b: RobotPlan,
    pub k: usize,
}

pub fn random_triple(r: &mut impl Rng) -> Triple {
    let p = IdmParams::paper();
    let horizon = r.random_range(3..=15);
    let human0 = AgentState::new(r.random_range(5.0..30.0), r.random_range(0.0..12.0));
    let robot0 = AgentState::new(r.random_range(5.0..30.0), r.random_range(0.0..12.0));
    let scenario = Scenario::new(human0, robot0, p, horizon);
    let k = r.random_range(1..horizon);
    let shared: Vec<f64> = (0..k).map(|_| r.random_range(0.0..12.0)).collect();
    let mut tail = |_| -> Vec<f64> { (k..horizon).map(|_| r.random_range(0.0..12.0)).collect() };
    let a: Vec<f64> = shared.iter().copied().chain(tail(0)).collect();
    let b: Vec<f64> = shared.iter().copied().chain(tail(1)).collect();
    Triple {
        scenario,
        seed: SeedKey::new(r.random()).with_scenario(r.random_range(0..1000)),
        a: RobotPlan::from_speeds(robot0, &a, p.dt).unwrap(),
        b: RobotPlan::from_speeds(robot0, &b, p.dt).unwrap(),
        k,
    }
}

fn same_prefix(x: &Trajectory, y: &Trajectory, k: usize) -> bool {
    (1..=k).all(|t| {
        x.states[t].s.to_bits() == y.states[t].s.to_bits() && x.states[t].v.to_bits() == y.states[t].v.to_bits()
    })
}

pub fn temporal_independence(triples: usize) -> Check {
    let mut r = rng(9);
    let ibp_oracle = make_ibp_oracle();
    let mut mismatches = Vec::new();
    let mut late_differences = 0;
    for i in 0..triples {
        let t = random_triple(&mut r);
        let ra = idm::rollout_intervened(&t.scenario, &t.a, t.seed).unwrap();
        let rb = idm::rollout_intervened(&t.scenario, &t.b, t.seed).unwrap();
        if !same_prefix(&ra, &rb, t.k) {
            mismatches.push(format!("rollout triple {i}"));
        }
        let query = |plan: &RobotPlan| PredictionQuery { scenario: t.scenario, robot_future: plan.clone(), k: 8, seed: t.seed };
        let pa = ibp_oracle.predict(&query(&t.a)).unwrap();
        let pb = ibp_oracle.predict(&query(&t.b)).unwrap();
        if !pa.samples.iter().zip(&pb.samples).all(|(x, y)| same_prefix(x, y, t.k)) {
            mismatches.push(format!("oracle triple {i}"));
        }
        if ra.states[t.scenario.horizon] != rb.states[t.scenario.horizon] {
            late_differences += 1;
        }
    }
    Check::new(
        mismatches.is_empty(),
        format!(
            "{triples} triples, {} prefix mismatches; final states differ in {late_differences}{}",
            mismatches.len(),
            if mismatches.is_empty() { String::new() } else { format!(": {}", mismatches.join(", ")) }
        ),
    )
}
