//! Episode store for off-policy training.
//!
//! A [`ReplayPool`] holds complete episodes only. Episodes are validated in
//! full before they are appended, so samplers never observe a partially
//! written rollout. Sampling is uniform with replacement, either over all
//! stored transitions or over episodes.

mod file;

pub use file::{load_pool, read_pool, save_pool, write_pool, POOL_MAGIC, POOL_VERSION};

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PoolError {
    #[error("invalid episode: {0}")]
    InvalidEpisode(String),
    #[error("pool is empty")]
    Empty,
    #[error("pool file: bad magic bytes")]
    BadMagic,
    #[error("pool file: version {found} does not match supported version {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("pool file: truncated")]
    Truncated,
    #[error("pool file: checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("pool file io: {0}")]
    Io(String),
}

/// Gripper pose `(x, y, z, phi)` in bin units and radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub phi: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, phi: f64) -> Self {
        Pose { x, y, z, phi }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.z, self.phi]
    }
}

/// Observation features. Shared so that a step's `next_obs` and the
/// following step's `obs` occupy one allocation.
pub type Features = Arc<[f64]>;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Features,
    /// 1-based step index within the episode.
    pub timestep: u32,
    /// Continuous action components, or a single discrete index.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Features,
    pub done: bool,
    /// Gripper pose at `obs`, before the action is applied.
    pub gripper_pose: Option<Pose>,
    pub episode_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    InitialRandom,
    OnPolicy,
}

impl Provenance {
    fn tag(self) -> u8 {
        match self {
            Provenance::InitialRandom => 0,
            Provenance::OnPolicy => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Provenance::InitialRandom),
            1 => Some(Provenance::OnPolicy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: u64,
    pub transitions: Vec<Transition>,
    pub outcome: f64,
    /// Pose at which the episode ended (where the gripper closed).
    pub final_pose: Option<Pose>,
    /// Shape seeds of the objects present in the bin.
    pub object_seeds: Vec<u64>,
    pub provenance: Provenance,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    /// Checks the structural invariants. With `binary_rewards`, rewards must
    /// be 0 or 1 and only the final transition may carry a nonzero reward.
    pub fn validate(&self, binary_rewards: bool) -> Result<(), PoolError> {
        let bad = |msg: String| Err(PoolError::InvalidEpisode(msg));
        if self.transitions.is_empty() {
            return bad("episode has no transitions".into());
        }
        let last = self.transitions.len() - 1;
        for (i, t) in self.transitions.iter().enumerate() {
            if t.episode_id != self.id {
                return bad(format!(
                    "transition {i} has episode id {} but episode is {}",
                    t.episode_id, self.id
                ));
            }
            if t.timestep as usize != i + 1 {
                return bad(format!("transition {i} has timestep {}, expected {}", t.timestep, i + 1));
            }
            if t.done != (i == last) {
                return bad(format!("transition {i}: done={} but last index is {last}", t.done));
            }
            if !t.reward.is_finite() {
                return bad(format!("transition {i} has non-finite reward"));
            }
            if binary_rewards {
                if t.reward != 0.0 && t.reward != 1.0 {
                    return bad(format!("transition {i} has non-binary reward {}", t.reward));
                }
                if i != last && t.reward != 0.0 {
                    return bad(format!("transition {i} carries reward before the final step"));
                }
            }
        }
        if self.outcome != self.transitions[last].reward {
            return bad(format!(
                "outcome {} differs from final reward {}",
                self.outcome, self.transitions[last].reward
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCounters {
    pub initial_random: u64,
    pub on_policy_added: u64,
}

/// Append-only episode store with an optional FIFO cap.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayPool {
    episodes: Vec<Episode>,
    /// `offsets[i]` is the flattened index of episode `i`'s first transition.
    offsets: Vec<usize>,
    total_transitions: usize,
    capacity: Option<usize>,
    counters: PoolCounters,
    binary_rewards: bool,
    descriptor_hash: u64,
}

impl Default for ReplayPool {
    fn default() -> Self {
        Self::new()
    }
}

impl ReplayPool {
    pub fn new() -> Self {
        ReplayPool {
            episodes: Vec::new(),
            offsets: Vec::new(),
            total_transitions: 0,
            capacity: None,
            counters: PoolCounters::default(),
            binary_rewards: false,
            descriptor_hash: 0,
        }
    }

    /// Pool for grasping data: rewards must be sparse and binary.
    pub fn for_grasping(descriptor_hash: u64) -> Self {
        ReplayPool {
            binary_rewards: true,
            descriptor_hash,
            ..Self::new()
        }
    }

    /// Keeps at most `capacity` episodes, dropping the oldest first.
    pub fn with_capacity_cap(mut self, capacity: usize) -> Self {
        assert!(capacity > 0);
        self.capacity = Some(capacity);
        self
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn binary_rewards(&self) -> bool {
        self.binary_rewards
    }

    pub fn descriptor_hash(&self) -> u64 {
        self.descriptor_hash
    }

    pub fn counters(&self) -> PoolCounters {
        self.counters
    }

    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.total_transitions
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn success_rate(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        let wins = self.episodes.iter().filter(|e| e.outcome > 0.0).count();
        wins as f64 / self.episodes.len() as f64
    }

    /// Appends a complete episode. Nothing is written if validation fails.
    pub fn add_episode(&mut self, episode: Episode) -> Result<(), PoolError> {
        episode.validate(self.binary_rewards)?;
        if let Some(cap) = self.capacity {
            if self.episodes.len() == cap {
                let evicted = self.episodes.remove(0);
                match evicted.provenance {
                    Provenance::InitialRandom => self.counters.initial_random -= 1,
                    Provenance::OnPolicy => self.counters.on_policy_added -= 1,
                }
                self.rebuild_offsets();
            }
        }
        match episode.provenance {
            Provenance::InitialRandom => self.counters.initial_random += 1,
            Provenance::OnPolicy => self.counters.on_policy_added += 1,
        }
        self.offsets.push(self.total_transitions);
        self.total_transitions += episode.len();
        self.episodes.push(episode);
        Ok(())
    }

    pub fn extend<I: IntoIterator<Item = Episode>>(&mut self, episodes: I) -> Result<(), PoolError> {
        for e in episodes {
            self.add_episode(e)?;
        }
        Ok(())
    }

    fn rebuild_offsets(&mut self) {
        self.offsets.clear();
        let mut acc = 0;
        for e in &self.episodes {
            self.offsets.push(acc);
            acc += e.len();
        }
        self.total_transitions = acc;
    }

    /// Transition at a flattened index.
    pub fn transition(&self, index: usize) -> &Transition {
        let ep = self.offsets.partition_point(|&o| o <= index) - 1;
        &self.episodes[ep].transitions[index - self.offsets[ep]]
    }

    /// Flattened indices drawn uniformly with replacement.
    pub fn sample_transition_indices<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>, PoolError> {
        if self.total_transitions == 0 {
            return Err(PoolError::Empty);
        }
        Ok((0..batch_size)
            .map(|_| rng.gen_range(0..self.total_transitions))
            .collect())
    }

    pub fn sample_transitions<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&Transition>, PoolError> {
        Ok(self
            .sample_transition_indices(batch_size, rng)?
            .into_iter()
            .map(|i| self.transition(i))
            .collect())
    }

    pub fn sample_episodes<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<&Episode>, PoolError> {
        if self.episodes.is_empty() {
            return Err(PoolError::Empty);
        }
        Ok((0..n)
            .map(|_| &self.episodes[rng.gen_range(0..self.episodes.len())])
            .collect())
    }

    pub(crate) fn from_parts(
        episodes: Vec<Episode>,
        capacity: Option<usize>,
        counters: PoolCounters,
        binary_rewards: bool,
        descriptor_hash: u64,
    ) -> Self {
        let mut pool = ReplayPool {
            episodes,
            offsets: Vec::new(),
            total_transitions: 0,
            capacity,
            counters,
            binary_rewards,
            descriptor_hash,
        };
        pool.rebuild_offsets();
        pool
    }
}
