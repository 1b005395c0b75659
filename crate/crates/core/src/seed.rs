//! Counter-based seeding.
//!
//! Every random stream in the crate is addressed by a [`SeedKey`] instead of
//! being split off a shared generator, so a trial produces the same numbers no
//! matter which thread runs it or in which order trials are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedRole {
    HumanNoise,
    RobotNoise,
    MarginalSample,
    Resample,
}

impl SeedRole {
    fn code(self) -> u64 {
        match self {
            SeedRole::HumanNoise => 1,
            SeedRole::RobotNoise => 2,
            SeedRole::MarginalSample => 3,
            SeedRole::Resample => 4,
        }
    }
}

/// Address of one random stream.
///
/// `run` is the user-facing seed; the other fields locate the stream inside a
/// run. Equal keys give identical streams, distinct keys independent ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedKey {
    pub run: u64,
    pub scenario_id: u64,
    pub trial: u64,
    pub role: SeedRole,
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(words: &[u64]) -> u64 {
    words.iter().fold(0x6A09_E667_F3BC_C908, |h, w| {
        let mut state = h ^ w;
        splitmix(&mut state)
    })
}

impl SeedKey {
    pub fn new(run: u64) -> Self {
        Self {
            run,
            scenario_id: 0,
            trial: 0,
            role: SeedRole::HumanNoise,
        }
    }

    pub fn with_scenario(mut self, scenario_id: u64) -> Self {
        self.scenario_id = scenario_id;
        self
    }

    pub fn with_trial(mut self, trial: u64) -> Self {
        self.trial = trial;
        self
    }

    pub fn with_role(mut self, role: SeedRole) -> Self {
        self.role = role;
        self
    }

    /// A child key for sub-stream `tag`. The current role is folded into the
    /// trial, so children of keys that differ only by role stay distinct even
    /// after the role is later overwritten.
    pub fn derive(self, tag: u64) -> Self {
        Self {
            trial: mix(&[self.trial, self.role.code(), tag]),
            ..self
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut state = mix(&[self.run, self.scenario_id, self.trial, self.role.code()]);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
        }
        StreamRng::from_seed(seed)
    }
}
