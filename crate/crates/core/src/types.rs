//! Domain types shared by the simulator, the estimators and the audit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State of one car on its approach path.
///
/// `s` is the displacement to the collision point (positive before the point,
/// negative once the car has passed it) and `v` the speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub s: f64,
    pub v: f64,
}

impl AgentState {
    pub const fn new(s: f64, v: f64) -> Self {
        Self { s, v }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.s.is_finite() || !self.v.is_finite() {
            return Err(Error::InvalidState(format!(
                "non-finite state (s={}, v={})",
                self.s, self.v
            )));
        }
        if self.v < 0.0 {
            return Err(Error::InvalidState(format!("negative speed v={}", self.v)));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }
}

/// How the velocity-difference term inside the desired-gap function is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ApproachRate {
    /// `Δv = v − v0`.
    AsPrinted,
    /// `Δv = v`: the closing speed toward a stationary target, as in the
    /// standard IDM.
    #[default]
    ClosingSpeed,
}

/// Intelligent-driver-model parameters plus the simulation step and noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// Desired speed `v0` (m/s).
    pub desired_speed: f64,
    /// Desired time headway `T` (s).
    pub time_headway: f64,
    /// Minimum gap `s0` (m).
    pub min_gap: f64,
    /// Acceleration exponent `δ`.
    pub accel_exponent: f64,
    /// Maximum acceleration `a` (m/s²).
    pub max_accel: f64,
    /// Comfortable deceleration `b` (m/s²).
    pub comfort_decel: f64,
    /// Time step (s).
    pub dt: f64,
    /// Standard deviation of the additive acceleration noise (m/s²).
    pub noise_std: f64,
    /// Target position used by a car that does not have to yield (m).
    pub far_target: f64,
    #[serde(default)]
    pub approach_rate: ApproachRate,
}

impl IdmParams {
    /// v0=10, T=2, s0=4, δ=4, a=1, b=1.5, dt=0.2, σ=4, far target −10⁴ m.
    pub fn paper() -> Self {
        Self {
            desired_speed: 10.0,
            time_headway: 2.0,
            min_gap: 4.0,
            accel_exponent: 4.0,
            max_accel: 1.0,
            comfort_decel: 1.5,
            dt: 0.2,
            noise_std: 4.0,
            far_target: -1.0e4,
            approach_rate: ApproachRate::ClosingSpeed,
        }
    }

    pub fn with_noise(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }

    pub fn with_approach_rate(mut self, approach_rate: ApproachRate) -> Self {
        self.approach_rate = approach_rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("desired_speed", self.desired_speed),
            ("time_headway", self.time_headway),
            ("min_gap", self.min_gap),
            ("max_accel", self.max_accel),
            ("comfort_decel", self.comfort_decel),
            ("dt", self.dt),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be > 0, got {value}")));
            }
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        if !(self.accel_exponent.is_finite() && self.accel_exponent >= 1.0) {
            return Err(Error::InvalidParams(format!(
                "accel_exponent must be >= 1, got {}",
                self.accel_exponent
            )));
        }
        if !(self.far_target.is_finite() && self.far_target < -100.0 * self.min_gap) {
            return Err(Error::InvalidParams(format!(
                "far_target must be < -100 * min_gap, got {}",
                self.far_target
            )));
        }
        Ok(())
    }
}

impl Default for IdmParams {
    fn default() -> Self {
        Self::paper()
    }
}

/// Initial conditions, dynamics and geometry of one two-car encounter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub human0: AgentState,
    pub robot0: AgentState,
    pub params: IdmParams,
    /// Number of simulated steps `T_H`.
    pub horizon: usize,
    /// Angle between the two approach paths (radians).
    pub geometry: f64,
    /// Distance below which the cars are counted as colliding (m).
    pub collision_threshold: f64,
}

pub const DEFAULT_COLLISION_THRESHOLD: f64 = 2.0;

impl Scenario {
    pub fn new(human0: AgentState, robot0: AgentState, params: IdmParams, horizon: usize) -> Self {
        Self {
            human0,
            robot0,
            params,
            horizon,
            geometry: std::f64::consts::FRAC_PI_2,
            collision_threshold: DEFAULT_COLLISION_THRESHOLD,
        }
    }

    /// Both cars 15 m from the point, human at 8 m/s, robot at 5 m/s, ten steps.
    pub fn paper_toy() -> Self {
        Self::new(
            AgentState::new(15.0, 8.0),
            AgentState::new(15.0, 5.0),
            IdmParams::paper(),
            10,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.human0.validate()?;
        self.robot0.validate()?;
        self.params.validate()?;
        if self.horizon < 1 {
            return Err(Error::InvalidParams("horizon must be >= 1".into()));
        }
        if !(self.geometry > 0.0 && self.geometry <= std::f64::consts::PI) {
            return Err(Error::InvalidParams(format!(
                "geometry angle must be in (0, pi], got {}",
                self.geometry
            )));
        }
        if !(self.collision_threshold.is_finite() && self.collision_threshold > 0.0) {
            return Err(Error::InvalidParams(format!(
                "collision_threshold must be > 0, got {}",
                self.collision_threshold
            )));
        }
        Ok(())
    }
}

/// States at `t = 0 … T_H`; index 0 is the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<AgentState>,
}

impl Trajectory {
    pub fn new(states: Vec<AgentState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Shape("trajectory needs at least the initial state".into()));
        }
        for (t, state) in states.iter().enumerate() {
            state
                .validate()
                .map_err(|e| Error::InvalidState(format!("step {t}: {e}")))?;
        }
        Ok(Self { states })
    }

    /// Number of steps after the initial state.
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|x| x.s)
    }

    /// Flat `[s0, v0, s1, v1, …]` layout used on the wire.
    pub fn to_flat(&self) -> Vec<f64> {
        self.states.iter().flat_map(|x| [x.s, x.v]).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 || flat.is_empty() {
            return Err(Error::Shape(format!(
                "flat trajectory needs an even, nonzero length, got {}",
                flat.len()
            )));
        }
        Self::new(
            flat.chunks_exact(2)
                .map(|c| AgentState::new(c[0], c[1]))
                .collect(),
        )
    }

    /// Largest violation of `s[t+1] = s[t] − dt·v[t]`.
    pub fn position_residual(&self, dt: f64) -> f64 {
        self.states
            .windows(2)
            .map(|w| (w[1].s - (w[0].s - dt * w[0].v)).abs())
            .fold(0.0, f64::max)
    }
}

/// K sampled human trajectories with optional importance weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub samples: Vec<Trajectory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl SampleSet {
    pub fn uniform(samples: Vec<Trajectory>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Shape("sample set must be nonempty".into()));
        }
        let horizon = samples[0].horizon();
        if let Some(i) = samples.iter().position(|t| t.horizon() != horizon) {
            return Err(Error::Shape(format!(
                "sample {i} has horizon {} but sample 0 has {horizon}",
                samples[i].horizon()
            )));
        }
        Ok(Self {
            samples,
            weights: None,
        })
    }

    pub fn weighted(samples: Vec<Trajectory>, weights: Vec<f64>) -> Result<Self> {
        let mut set = Self::uniform(samples)?;
        if weights.len() != set.samples.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} samples",
                weights.len(),
                set.samples.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::DegenerateWeights);
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::DegenerateWeights);
        }
        set.weights = Some(weights);
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.samples[0].horizon()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    /// Weights as a vector, ones when the set is unweighted.
    pub fn weight_vec(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0; self.samples.len()],
        }
    }

    /// True when every sample carries the same weight.
    pub fn is_uniform(&self) -> bool {
        match &self.weights {
            None => true,
            Some(w) => w.iter().all(|x| *x == w[0]),
        }
    }

    /// Values of one step's position across samples.
    pub fn positions_at(&self, t: usize) -> Vec<f64> {
        self.samples.iter().map(|x| x.states[t].s).collect()
    }

    pub fn speeds_at(&self, t: usize) -> Vec<f64> {
        self.samples.iter().map(|x| x.states[t].v).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_params_are_valid() {
        IdmParams::paper().validate().unwrap();
        Scenario::paper_toy().validate().unwrap();
    }

    #[test]
    fn rejects_invalid_params() {
        let mut p = IdmParams::paper();
        p.accel_exponent = 0.5;
        assert!(p.validate().is_err());
        let mut p = IdmParams::paper();
        p.far_target = -100.0;
        assert!(p.validate().is_err());
        let mut s = Scenario::paper_toy();
        s.horizon = 0;
        assert!(s.validate().is_err());
        s.horizon = 3;
        s.geometry = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn negative_speed_is_invalid() {
        assert!(AgentState::new(1.0, -0.1).validate().is_err());
        assert!(AgentState::new(f64::NAN, 1.0).validate().is_err());
        assert!(AgentState::new(-5.0, 0.0).validate().is_ok());
    }

    #[test]
    fn flat_layout_round_trips() {
        let t = Trajectory::new(vec![AgentState::new(1.0, 2.0), AgentState::new(0.6, 3.0)]).unwrap();
        assert_eq!(t.to_flat(), vec![1.0, 2.0, 0.6, 3.0]);
        assert_eq!(Trajectory::from_flat(&t.to_flat()).unwrap(), t);
        assert!(Trajectory::from_flat(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn weighted_set_rejects_bad_weights() {
        let t = Trajectory::new(vec![AgentState::new(1.0, 1.0)]).unwrap();
        assert!(SampleSet::weighted(vec![t.clone()], vec![0.0]).is_err());
        assert!(SampleSet::weighted(vec![t.clone()], vec![-1.0]).is_err());
        assert!(SampleSet::weighted(vec![t.clone()], vec![1.0, 1.0]).is_err());
        assert!(SampleSet::uniform(vec![]).is_err());
    }
}
