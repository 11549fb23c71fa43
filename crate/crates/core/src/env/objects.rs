//! Procedural object shapes, train/test splits and the per-episode object schedule.

use std::collections::HashSet;
use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EnvConfig, Task};
use crate::util::{mix_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    RandomBlob,
    TargetCross,
    Distractor,
}

/// Identity of an object: its kind plus the seed its geometry is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectTemplate {
    pub shape_seed: u64,
    pub kind: ObjectKind,
}

impl ObjectTemplate {
    pub fn new(shape_seed: u64, kind: ObjectKind) -> Self {
        ObjectTemplate { shape_seed, kind }
    }

    /// `(major, minor)` radii in bin units, a pure function of the seed.
    pub fn extent(&self) -> (f64, f64) {
        let mut rng = rng_from_seed(mix_seed(self.shape_seed, 0x5A4E));
        match self.kind {
            ObjectKind::RandomBlob | ObjectKind::Distractor => {
                let major = rng.gen_range(0.04..0.075);
                let ratio: f64 = rng.gen_range(0.45..1.0);
                (major, major * ratio)
            }
            ObjectKind::TargetCross => {
                let arm = rng.gen_range(0.05..0.065);
                (arm, 0.3 * arm)
            }
        }
    }
}

/// A placed object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape_seed: u64,
    pub kind: ObjectKind,
    pub position: (f64, f64),
    pub rotation: f64,
    pub extent: (f64, f64),
}

impl ObjectSpec {
    pub fn aspect_ratio(&self) -> f64 {
        self.extent.0 / self.extent.1
    }

    /// Radius of the disk used for placement and pushing.
    pub fn bounding_radius(&self) -> f64 {
        self.extent.0
    }

    /// Rotational symmetry period of the footprint.
    pub fn symmetry_period(&self) -> f64 {
        match self.kind {
            ObjectKind::TargetCross => PI / 2.0,
            _ => PI,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.position.0;
        let dy = y - self.position.1;
        let r = self.extent.0;
        if dx * dx + dy * dy > r * r * 2.0 {
            return false;
        }
        let (s, c) = self.rotation.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        let (a, b) = self.extent;
        match self.kind {
            ObjectKind::TargetCross => {
                (u.abs() <= a && v.abs() <= b) || (u.abs() <= b && v.abs() <= a)
            }
            _ => (u / a).powi(2) + (v / b).powi(2) <= 1.0,
        }
    }
}

/// Disjoint train and test shape seeds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSplits {
    pub train: Vec<u64>,
    pub test: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl ObjectSplits {
    pub fn seeds(&self, split: Split) -> &[u64] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

pub fn generate_object_splits(n_train: usize, n_test: usize, master_seed: u64) -> ObjectSplits {
    assert!(n_train > 0 && n_test > 0, "split sizes must be positive");
    let mut rng = rng_from_seed(mix_seed(master_seed, 0x5EED_5917));
    let mut seen = HashSet::with_capacity(n_train + n_test);
    let mut all = Vec::with_capacity(n_train + n_test);
    while all.len() < n_train + n_test {
        let s: u64 = rng.gen();
        if seen.insert(s) {
            all.push(s);
        }
    }
    let test = all.split_off(n_train);
    ObjectSplits { train: all, test }
}

/// Decides which objects populate the bin in each episode.
///
/// Regular task: a fresh set of five objects is drawn from the active split
/// every `rotate_every` episodes. Targeted task: the same three crosses and
/// four distractors in every episode.
#[derive(Debug, Clone)]
pub struct ObjectSchedule {
    task: Task,
    pool: Vec<u64>,
    rotate_every: usize,
    objects_per_episode: usize,
    stream_seed: u64,
    fixed: Vec<ObjectTemplate>,
}

pub const REGULAR_OBJECT_COUNT: usize = 5;
pub const TARGETED_OBJECT_COUNT: usize = 7;
pub const TARGETED_TARGET_COUNT: usize = 3;

impl ObjectSchedule {
    pub fn new(cfg: &EnvConfig, splits: &ObjectSplits, split: Split, stream_seed: u64) -> Self {
        let pool = splits.seeds(split).to_vec();
        let fixed = targeted_objects(cfg.master_seed);
        ObjectSchedule {
            task: cfg.task,
            pool,
            rotate_every: cfg.rotate_every.max(1),
            objects_per_episode: REGULAR_OBJECT_COUNT.min(splits.seeds(split).len()),
            stream_seed,
            fixed,
        }
    }

    /// Index of the object set used by `episode`.
    pub fn block(&self, episode: usize) -> usize {
        match self.task {
            Task::Regular => episode / self.rotate_every,
            Task::Targeted => 0,
        }
    }

    pub fn templates_for_episode(&self, episode: usize) -> Vec<ObjectTemplate> {
        match self.task {
            Task::Targeted => self.fixed.clone(),
            Task::Regular => {
                let block = self.block(episode) as u64;
                let mut rng = rng_from_seed(mix_seed(self.stream_seed, block));
                sample(&mut rng, self.pool.len(), self.objects_per_episode)
                    .into_iter()
                    .map(|i| ObjectTemplate::new(self.pool[i], ObjectKind::RandomBlob))
                    .collect()
            }
        }
    }
}

/// The fixed object identities of the targeted task.
pub fn targeted_objects(master_seed: u64) -> Vec<ObjectTemplate> {
    let mut rng = rng_from_seed(mix_seed(master_seed, 0x7A59_E7ED));
    (0..TARGETED_OBJECT_COUNT)
        .map(|i| {
            let kind = if i < TARGETED_TARGET_COUNT {
                ObjectKind::TargetCross
            } else {
                ObjectKind::Distractor
            };
            ObjectTemplate::new(rng.gen(), kind)
        })
        .collect()
}
