//! Independent reference implementations shared by the integration tests and
//! the acceptance harness. Nothing here calls into the library's dynamics,
//! inference or Shapley code; only plain data types are borrowed.

#![allow(dead_code)]

pub mod criteria;

use std::time::Instant;

use ibp::{IdmParams, SeedKey};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Outcome of one acceptance check.
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

// ---------------------------------------------------------------------------
// Scalar IDM written from the model equations.

pub mod scalar {
    use super::*;

    pub fn headway(s: f64, v: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else if v == 0.0 {
            f64::INFINITY
        } else {
            s / v
        }
    }

    /// Whether the human holds the right-of-way (ties favor the human).
    pub fn human_owns(h: (f64, f64), r: (f64, f64)) -> bool {
        headway(h.0, h.1) <= headway(r.0, r.1)
    }

    /// IDM speed update without noise, approach rate = own speed.
    pub fn mean_speed(s: f64, v: f64, target: f64, p: &IdmParams) -> f64 {
        let desired = p.min_gap + (v * p.time_headway + v * v / (2.0 * (p.max_accel * p.comfort_decel).sqrt())).max(0.0);
        let mut gap = s - target;
        if target == 0.0 && gap < 0.1 {
            gap = 0.1;
        }
        v + p.dt * p.max_accel * (1.0 - (v / p.desired_speed).powf(p.accel_exponent) - (desired / gap).powi(2))
    }

    pub fn human_mean(h: (f64, f64), r: (f64, f64), p: &IdmParams) -> f64 {
        let target = if !human_owns(h, r) && r.0 > 0.0 { 0.0 } else { p.far_target };
        mean_speed(h.0, h.1, target, p)
    }

    pub fn robot_mean(h: (f64, f64), r: (f64, f64), p: &IdmParams) -> f64 {
        let target = if human_owns(h, r) && h.0 > 0.0 { 0.0 } else { p.far_target };
        mean_speed(r.0, r.1, target, p)
    }

    pub fn gauss(x: f64, mean: f64, std: f64) -> f64 {
        let z = (x - mean) / std;
        (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
    }
}

/// Posterior mean and variance of the human position at the horizon
/// (`T ∈ {1, 2}`) given robot speed evidence, by trapezoidal quadrature over
/// the human's first noise draw. The second draw never reaches `s_{h,2}`.
pub fn quadrature_posterior(
    human0: (f64, f64),
    robot: &[(f64, f64)],
    p: &IdmParams,
    grid: usize,
) -> (f64, f64) {
    let horizon = robot.len() - 1;
    let s1 = human0.0 - p.dt * human0.1;
    if horizon == 1 {
        return (s1, 0.0);
    }
    assert_eq!(horizon, 2, "oracle covers T <= 2");
    let m0 = scalar::human_mean(human0, robot[0], p);
    let noise = p.dt * p.noise_std;
    let (lo, hi) = (-12.0, 12.0);
    let step = (hi - lo) / (grid - 1) as f64;
    let (mut z0, mut z1, mut z2) = (0.0, 0.0, 0.0);
    for i in 0..grid {
        let z = lo + step * i as f64;
        let v1 = (m0 + noise * z).max(0.0);
        let s2 = s1 - p.dt * v1;
        let like = scalar::gauss(robot[2].1, scalar::robot_mean((s1, v1), robot[1], p), noise);
        let w = if i == 0 || i == grid - 1 { 0.5 } else { 1.0 } * scalar::gauss(z, 0.0, 1.0) * like;
        z0 += w;
        z1 += w * s2;
        z2 += w * s2 * s2;
    }
    let mean = z1 / z0;
    (mean, (z2 / z0 - mean * mean).max(0.0))
}

/// A random evidence setting for the quadrature check: initial states and
/// robot speeds for `horizon` steps, chosen so the right-of-way at step 1 is
/// genuinely uncertain and the two robot hypotheses differ in likelihood.
pub struct EvidenceCase {
    pub human0: (f64, f64),
    pub robot0: (f64, f64),
    pub speeds: Vec<f64>,
}

pub fn random_evidence(r: &mut ChaCha8Rng, horizon: usize, p: &IdmParams) -> EvidenceCase {
    let human0 = (r.random_range(8.0..20.0), r.random_range(4.0..10.0));
    let robot0 = (r.random_range(5.0..12.0), r.random_range(3.0..9.0));
    let r1s = robot0.0 - p.dt * robot0.1;
    let m0 = scalar::human_mean(human0, robot0, p);
    let s1 = human0.0 - p.dt * human0.1;
    // Robot speed that puts the headway tie near the human's mean speed.
    let tie = r1s * m0.max(0.5) / s1;
    let v1 = (tie * r.random_range(0.9..1.1)).max(0.5);
    let mut speeds = vec![v1];
    if horizon == 2 {
        let yielding = scalar::mean_speed(r1s, v1, 0.0, p);
        let free = scalar::mean_speed(r1s, v1, p.far_target, p);
        let u = r.random_range(0.15..0.45);
        let v2 = yielding + u * (free - yielding);
        speeds.push(v2.max(0.05));
    }
    EvidenceCase { human0, robot0, speeds }
}

/// Weighted mean, variance and their delta-method standard errors.
pub fn weighted_moments(x: &[f64], w: &[f64]) -> (f64, f64, f64, f64) {
    let total: f64 = w.iter().sum();
    let mean = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total;
    let var = x.iter().zip(w).map(|(a, b)| b * (a - mean).powi(2)).sum::<f64>() / total;
    let se_mean = x.iter().zip(w).map(|(a, b)| (b * (a - mean)).powi(2)).sum::<f64>().sqrt() / total;
    let se_var = x
        .iter()
        .zip(w)
        .map(|(a, b)| (b * ((a - mean).powi(2) - var)).powi(2))
        .sum::<f64>()
        .sqrt()
        / total;
    (mean, var, se_mean, se_var)
}

// ---------------------------------------------------------------------------
// Shapley values by brute force over orderings.

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out
}

/// Average marginal contribution over all `m!` orderings; `nu` is indexed by
/// subset bitmask.
pub fn shapley_by_orderings(nu: &[f64], m: usize) -> Vec<f64> {
    let perms = permutations(m);
    let mut phi = vec![0.0; m];
    for p in &perms {
        let mut mask = 0usize;
        for &player in p {
            let before = nu[mask];
            mask |= 1 << player;
            phi[player] += nu[mask] - before;
        }
    }
    phi.iter().map(|x| x / perms.len() as f64).collect()
}

pub fn random_game(r: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..1usize << m).map(|_| r.random_range(-5.0..5.0)).collect()
}

pub fn swap_players(mask: usize, i: usize, j: usize) -> usize {
    let bi = (mask >> i) & 1;
    let bj = (mask >> j) & 1;
    let cleared = mask & !(1 << i) & !(1 << j);
    cleared | (bi << j) | (bj << i)
}

/// Runs the four axioms plus the ordering oracle on `games` random set
/// functions of size `m` against `shapley(values, m)`. Returns the largest
/// deviation seen.
pub fn axiom_sweep(
    games: usize,
    m: usize,
    seed: u64,
    shapley: impl Fn(&[f64], usize) -> Vec<f64>,
) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let full = (1usize << m) - 1;
    for _ in 0..games {
        let nu = random_game(&mut r, m);
        let phi = shapley(&nu, m);
        // Ordering oracle.
        for (a, b) in phi.iter().zip(shapley_by_orderings(&nu, m)) {
            worst = worst.max((a - b).abs());
        }
        // Efficiency.
        worst = worst.max((phi.iter().sum::<f64>() - (nu[full] - nu[0])).abs());
        // Symmetry.
        let i = r.random_range(0..m);
        let j = (i + r.random_range(1..m)) % m;
        let sym: Vec<f64> = (0..=full).map(|s| 0.5 * (nu[s] + nu[swap_players(s, i, j)])).collect();
        let phi_sym = shapley(&sym, m);
        worst = worst.max((phi_sym[i] - phi_sym[j]).abs());
        // Dummy: player d adds a constant c to every coalition it joins.
        let d = r.random_range(0..m);
        let c = if r.random_bool(0.5) { 0.0 } else { r.random_range(-2.0..2.0) };
        let dummy: Vec<f64> = (0..=full)
            .map(|s| {
                let base = nu[s & !(1 << d)];
                if s & (1 << d) != 0 { base + c } else { base }
            })
            .collect();
        worst = worst.max((shapley(&dummy, m)[d] - c).abs());
        // Linearity.
        let other = random_game(&mut r, m);
        let alpha = r.random_range(-3.0..3.0);
        let combo: Vec<f64> = nu.iter().zip(&other).map(|(a, b)| alpha * a + b).collect();
        let phi_other = shapley(&other, m);
        for ((x, a), b) in shapley(&combo, m).iter().zip(&phi).zip(&phi_other) {
            worst = worst.max((x - (alpha * a + b)).abs());
        }
    }
    worst
}

pub fn seed(run: u64) -> SeedKey {
    SeedKey::new(run)
}
