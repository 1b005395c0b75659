//! The stochastic two-car intelligent driver model.
//!
//! Two cars approach a shared collision point on straight paths. At every step
//! the car with the smaller time headway gets the right-of-way; the other car
//! targets the collision point (as long as the right-of-way holder has not
//! passed it) while the right-of-way holder targets a point far ahead. Both
//! cars then take one explicit-Euler IDM step with additive Gaussian
//! acceleration noise.
//!
//! [`rollout_joint`] runs the natural system in which both cars react to each
//! other. [`rollout_intervened`] performs the do-operator: the robot's states
//! are read from a fixed [`RobotPlan`] and are never recomputed, so only the
//! human reacts.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{SeedKey, SeedRole, StreamRng};
use crate::types::{AgentState, ApproachRate, IdmParams, Scenario, Trajectory};

/// Gap floor used when a yielding car is within this distance of the point.
pub const MIN_YIELD_GAP: f64 = 0.1;

/// Tolerance of the `s[t+1] = s[t] − dt·v[t]` check on plans.
pub const POSITION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Agent {
    Human,
    Robot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RightOfWay {
    pub owner: Agent,
}

/// `max(s/v, 0)`; `+∞` for a stopped car before the point.
pub fn time_headway(state: &AgentState) -> f64 {
    if state.s <= 0.0 {
        0.0
    } else if state.v == 0.0 {
        f64::INFINITY
    } else {
        (state.s / state.v).max(0.0)
    }
}

/// The car with strictly smaller headway owns the right-of-way; ties go to
/// the human.
pub fn right_of_way(human: &AgentState, robot: &AgentState) -> RightOfWay {
    let owner = if time_headway(robot) < time_headway(human) {
        Agent::Robot
    } else {
        Agent::Human
    };
    RightOfWay { owner }
}

/// Target position `d` for `me`: the collision point while the other car owns
/// the right-of-way and has not passed the point, a far target otherwise.
pub fn target_offset(me: Agent, other: &AgentState, row: RightOfWay, params: &IdmParams) -> f64 {
    if row.owner != me && other.s > 0.0 {
        0.0
    } else {
        params.far_target
    }
}

/// Deterministic part of the next speed, before the nonnegativity clamp.
pub fn step_mean_velocity(state: &AgentState, d: f64, params: &IdmParams) -> Result<f64> {
    let v = state.v;
    let dv = match params.approach_rate {
        ApproachRate::AsPrinted => v - params.desired_speed,
        ApproachRate::ClosingSpeed => v,
    };
    let desired_gap = params.min_gap
        + (v * params.time_headway
            + v * dv / (2.0 * (params.max_accel * params.comfort_decel).sqrt()))
        .max(0.0);
    let mut gap = state.s - d;
    if d == 0.0 && gap < MIN_YIELD_GAP {
        gap = MIN_YIELD_GAP;
    }
    let free = 1.0 - (v / params.desired_speed).powf(params.accel_exponent);
    let interaction = (desired_gap / gap).powi(2);
    let mean = v + params.dt * params.max_accel * (free - interaction);
    if mean.is_finite() {
        Ok(mean)
    } else {
        Err(Error::NumericBlowup {
            s: state.s,
            v,
            d,
            omega: 0.0,
        })
    }
}

/// One explicit-Euler IDM step with acceleration noise `omega`.
pub fn idm_step(state: &AgentState, d: f64, params: &IdmParams, omega: f64) -> Result<AgentState> {
    let blowup = || Error::NumericBlowup {
        s: state.s,
        v: state.v,
        d,
        omega,
    };
    let mean = step_mean_velocity(state, d, params).map_err(|_| blowup())?;
    let v = (mean + params.dt * omega).max(0.0);
    let s = state.s - params.dt * state.v;
    if v.is_finite() && s.is_finite() {
        Ok(AgentState { s, v })
    } else {
        Err(blowup())
    }
}

/// Mean next speed of the robot given both current states; the likelihood
/// mean used by the conditional estimator.
pub fn robot_mean_velocity(
    human: &AgentState,
    robot: &AgentState,
    params: &IdmParams,
) -> Result<f64> {
    let row = right_of_way(human, robot);
    let d = target_offset(Agent::Robot, human, row, params);
    step_mean_velocity(robot, d, params)
}

/// Human's next state given both current states and a standard-normal draw.
pub fn human_step(
    human: &AgentState,
    robot: &AgentState,
    params: &IdmParams,
    z: f64,
) -> Result<AgentState> {
    let row = right_of_way(human, robot);
    let d = target_offset(Agent::Human, robot, row, params);
    idm_step(human, d, params, params.noise_std * z)
}

pub(crate) fn normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Robot states for `t = 0 … T_H` that the robot executes verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotPlan {
    pub states: Vec<AgentState>,
}

impl RobotPlan {
    /// Validates states and position consistency against `dt`.
    pub fn new(states: Vec<AgentState>, dt: f64) -> Result<Self> {
        let plan = Self {
            states: Trajectory::new(states)?.states,
        };
        plan.check_consistency(dt)?;
        Ok(plan)
    }

    /// Builds a consistent plan from `initial` and speeds for steps `1 … T_H`.
    pub fn from_speeds(initial: AgentState, speeds: &[f64], dt: f64) -> Result<Self> {
        let mut states = Vec::with_capacity(speeds.len() + 1);
        states.push(initial);
        for &v in speeds {
            let prev = states[states.len() - 1];
            states.push(AgentState::new(prev.s - dt * prev.v, v));
        }
        Self::new(states, dt)
    }

    pub fn check_consistency(&self, dt: f64) -> Result<()> {
        for (t, w) in self.states.windows(2).enumerate() {
            let expected = w[0].s - dt * w[0].v;
            if (w[1].s - expected).abs() > POSITION_TOLERANCE {
                return Err(Error::Shape(format!(
                    "plan position at step {} is {} but s - dt*v gives {expected}",
                    t + 1,
                    w[1].s
                )));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.states.iter().map(|x| x.v).collect()
    }

    pub fn as_trajectory(&self) -> Trajectory {
        Trajectory {
            states: self.states.clone(),
        }
    }

    /// Checks the plan against a scenario's horizon, initial robot state and `dt`.
    pub fn check_against(&self, scenario: &Scenario) -> Result<()> {
        if self.horizon() != scenario.horizon {
            return Err(Error::Shape(format!(
                "plan horizon {} != scenario horizon {}",
                self.horizon(),
                scenario.horizon
            )));
        }
        if self.states[0] != scenario.robot0 {
            return Err(Error::Shape(format!(
                "plan starts at {:?} but scenario robot starts at {:?}",
                self.states[0], scenario.robot0
            )));
        }
        self.check_consistency(scenario.params.dt)
    }
}

impl From<Trajectory> for RobotPlan {
    fn from(t: Trajectory) -> Self {
        Self { states: t.states }
    }
}

/// Both cars follow the IDM and react to each other.
pub fn rollout_joint(scenario: &Scenario, seed: SeedKey) -> Result<(Trajectory, Trajectory)> {
    scenario.validate()?;
    let params = &scenario.params;
    let mut human_rng = seed.with_role(SeedRole::HumanNoise).rng();
    let mut robot_rng = seed.with_role(SeedRole::RobotNoise).rng();
    let mut human = Vec::with_capacity(scenario.horizon + 1);
    let mut robot = Vec::with_capacity(scenario.horizon + 1);
    human.push(scenario.human0);
    robot.push(scenario.robot0);
    for t in 0..scenario.horizon {
        let (h, r) = (human[t], robot[t]);
        let row = right_of_way(&h, &r);
        let dh = target_offset(Agent::Human, &r, row, params);
        let dr = target_offset(Agent::Robot, &h, row, params);
        let zh = normal(&mut human_rng);
        let zr = normal(&mut robot_rng);
        human.push(idm_step(&h, dh, params, params.noise_std * zh)?);
        robot.push(idm_step(&r, dr, params, params.noise_std * zr)?);
    }
    Ok((Trajectory { states: human }, Trajectory { states: robot }))
}

/// The human follows the IDM; the robot executes `plan` regardless of the
/// human's reaction.
pub fn rollout_intervened(scenario: &Scenario, plan: &RobotPlan, seed: SeedKey) -> Result<Trajectory> {
    scenario.validate()?;
    plan.check_against(scenario)?;
    let mut rng = seed.with_role(SeedRole::HumanNoise).rng();
    rollout_human_against(scenario, &plan.states, &mut rng)
}

pub(crate) fn rollout_human_against(
    scenario: &Scenario,
    robot: &[AgentState],
    rng: &mut StreamRng,
) -> Result<Trajectory> {
    let mut human = Vec::with_capacity(scenario.horizon + 1);
    human.push(scenario.human0);
    for t in 0..scenario.horizon {
        let z = normal(rng);
        human.push(human_step(&human[t], &robot[t], &scenario.params, z)?);
    }
    Ok(Trajectory { states: human })
}

/// Robot accelerates at `accel` until it reaches `v_max`.
pub fn plan_accelerate(scenario: &Scenario, accel: f64, v_max: f64) -> Result<RobotPlan> {
    if !(accel > 0.0 && accel.is_finite()) {
        return Err(Error::InvalidParams(format!("accel must be > 0, got {accel}")));
    }
    if !(v_max >= scenario.robot0.v) {
        return Err(Error::InvalidParams(format!(
            "v_max {v_max} below initial robot speed {}",
            scenario.robot0.v
        )));
    }
    let dt = scenario.params.dt;
    let mut speeds = Vec::with_capacity(scenario.horizon);
    let mut v = scenario.robot0.v;
    for _ in 0..scenario.horizon {
        v = (v + dt * accel).min(v_max);
        speeds.push(v);
    }
    RobotPlan::from_speeds(scenario.robot0, &speeds, dt)
}

/// Planar position of the human: its path runs along the x axis.
pub fn human_position(s: f64) -> [f64; 2] {
    [s, 0.0]
}

/// Planar position of the robot: its path meets the human's at `angle`.
pub fn robot_position(s: f64, angle: f64) -> [f64; 2] {
    [s * angle.cos(), s * angle.sin()]
}

/// Minimum Euclidean distance between the cars over all steps.
pub fn min_distance(human: &[AgentState], robot: &[AgentState], angle: f64) -> Result<f64> {
    if human.len() != robot.len() {
        return Err(Error::Shape(format!(
            "human has {} states, robot {}",
            human.len(),
            robot.len()
        )));
    }
    Ok(human
        .iter()
        .zip(robot)
        .map(|(h, r)| {
            let a = human_position(h.s);
            let b = robot_position(r.s, angle);
            (a[0] - b[0]).hypot(a[1] - b[1])
        })
        .fold(f64::INFINITY, f64::min))
}

/// First step at which a trajectory reaches or passes the collision point.
pub fn first_crossing(states: &[AgentState]) -> Option<usize> {
    states.iter().position(|x| x.s <= 0.0)
}

/// Whether the human reached the point no later than the robot. A human that
/// never reaches it within the horizon yielded; so did one that the robot
/// beat by at least one step.
pub fn human_passed_first(human: &[AgentState], robot: &[AgentState]) -> bool {
    match (first_crossing(human), first_crossing(robot)) {
        (None, _) => false,
        (Some(_), None) => true,
        (Some(h), Some(r)) => h <= r,
    }
}
