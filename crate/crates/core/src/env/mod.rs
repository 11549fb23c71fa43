//! Desk-scale sequential bin grasping.
//!
//! A gripper starts above the middle of a unit bin and moves by clipped,
//! scaled Cartesian displacements `[dx, dy, dz, dphi]`. When it drops below
//! `close_threshold` it closes and the episode ends; the episode also ends
//! after `horizon` steps. The reward is 1 on the closing step if the closed
//! gripper holds an object, 0 otherwise.
//!
//! Instead of camera images the agent sees a gripper-centred occupancy grid
//! (one channel for any object, one for target objects) plus the normalised
//! timestep and the gripper's height and wrist angle.
//!
//! Objects are pushed kinematically: when the lowered gripper moves into an
//! object it displaces it along the contact normal, and overlapping objects
//! are then separated pairwise. There are no dynamics.

mod collect;
mod objects;

pub use collect::{collect_random_grasps, run_episode, RandomGraspPolicy};
pub use objects::{
    generate_object_splits, targeted_objects, ObjectKind, ObjectSchedule, ObjectSpec,
    ObjectSplits, ObjectTemplate, Split, REGULAR_OBJECT_COUNT, TARGETED_OBJECT_COUNT,
    TARGETED_TARGET_COUNT,
};

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::replay::Pose;
use crate::util::{fnv1a64, mix_seed, rng_from_seed, wrap_angle};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("could not place object {index} after {attempts} attempts (bin too crowded)")]
    Placement { index: usize, attempts: usize },
    #[error("step called after the episode finished")]
    EpisodeDone,
    #[error("action must have 4 finite components, got {0:?}")]
    InvalidAction(Vec<f64>),
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
}

pub const PLACEMENT_ATTEMPTS: usize = 1000;
pub const ACTION_DIM: usize = 4;
/// Extra features appended after the grid: t/T, z/start_height, cos 2phi, sin 2phi.
pub const EXTRA_FEATURES: usize = 4;
pub const GRID_CHANNELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regular,
    Targeted,
}

/// Success geometry and motion scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Geometry {
    pub bin_width: f64,
    pub start_height: f64,
    /// The gripper closes once its height drops below this value.
    pub close_threshold: f64,
    pub dz_scale: f64,
    pub dphi_scale: f64,
    pub grasp_radius: f64,
    pub align_tol: f64,
    /// Objects with a larger major/minor ratio need wrist alignment.
    pub aspect_threshold: f64,
    /// Below this height the fingers touch objects and can push them.
    pub push_height: f64,
    pub finger_radius: f64,
    /// Fraction of the summed bounding radii two objects may overlap at placement.
    pub placement_overlap_tol: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            bin_width: 1.0,
            start_height: 1.0,
            close_threshold: 0.1,
            dz_scale: 0.2,
            dphi_scale: PI / 4.0,
            grasp_radius: 0.07,
            align_tol: PI / 6.0,
            aspect_threshold: 1.5,
            push_height: 0.25,
            finger_radius: 0.02,
            placement_overlap_tol: 0.2,
        }
    }
}

impl Geometry {
    /// Maximum lateral displacement per step.
    pub fn dxy_scale(&self) -> f64 {
        self.bin_width / 6.0
    }
}

/// Environment configuration, stored as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub task: Task,
    pub grid_size: usize,
    pub horizon: usize,
    /// Width of the gripper-centred view window in bin units.
    pub view_width: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub master_seed: u64,
    /// Regular task: episodes between object-set changes.
    pub rotate_every: usize,
    /// Added to the random policy's dz component before clipping.
    pub random_dz_drift: f64,
    pub geometry: Geometry,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            task: Task::Regular,
            grid_size: 12,
            horizon: 15,
            view_width: 1.0,
            n_train: 90,
            n_test: 10,
            master_seed: 0,
            rotate_every: 20,
            random_dz_drift: -0.6,
            geometry: Geometry::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if self.grid_size == 0 {
            return bad("grid_size must be positive");
        }
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if self.n_train == 0 || self.n_test == 0 {
            return bad("split sizes must be positive");
        }
        if self.task == Task::Regular && self.n_train.min(self.n_test) < REGULAR_OBJECT_COUNT {
            return bad("each split needs at least 5 objects for the regular task");
        }
        let g = &self.geometry;
        if !(g.close_threshold < g.start_height) || g.bin_width <= 0.0 || g.grasp_radius <= 0.0 {
            return bad("inconsistent geometry");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self, EnvError> {
        let cfg: EnvConfig =
            toml::from_str(text).map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        Self::from_toml(&text)
    }

    /// Fingerprint stored in pool files.
    pub fn descriptor_hash(&self) -> u64 {
        fnv1a64(self.to_toml().as_bytes())
    }

    pub fn descriptor(&self) -> ObservationDescriptor {
        ObservationDescriptor {
            grid_size: self.grid_size,
            channels: GRID_CHANNELS,
            extras: EXTRA_FEATURES,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.descriptor().len()
    }

    pub fn splits(&self) -> ObjectSplits {
        generate_object_splits(self.n_train, self.n_test, self.master_seed)
    }
}

/// Layout of the observation vector: `channels × G × G` grid values in
/// channel-major, row-major order, followed by `extras` scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationDescriptor {
    pub grid_size: usize,
    pub channels: usize,
    pub extras: usize,
}

impl ObservationDescriptor {
    pub fn len(&self) -> usize {
        self.channels * self.grid_size * self.grid_size + self.extras
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
}

/// Clipped continuous action `[dx, dy, dz, dphi]` in action units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionVec(pub [f64; ACTION_DIM]);

impl ActionVec {
    pub fn from_slice(a: &[f64]) -> Result<Self, EnvError> {
        if a.len() != ACTION_DIM || a.iter().any(|x| !x.is_finite()) {
            return Err(EnvError::InvalidAction(a.to_vec()));
        }
        let mut out = [0.0; ACTION_DIM];
        for (o, &x) in out.iter_mut().zip(a) {
            *o = x.clamp(-1.0, 1.0);
        }
        Ok(ActionVec(out))
    }

    pub fn zero() -> Self {
        ActionVec([0.0; ACTION_DIM])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
}

/// Simulator state.
#[derive(Debug, Clone, PartialEq)]
pub struct BinWorld {
    config: EnvConfig,
    objects: Vec<ObjectSpec>,
    gripper: Pose,
    step: usize,
    done: bool,
}

impl BinWorld {
    /// Resets with objects drawn for episode 0 of the training split,
    /// deterministically from `(config, seed)`.
    pub fn reset(config: &EnvConfig, seed: u64) -> Result<(BinWorld, Observation), EnvError> {
        config.validate()?;
        let splits = config.splits();
        let schedule = ObjectSchedule::new(config, &splits, Split::Train, seed);
        Self::reset_with(config, &schedule.templates_for_episode(0), seed)
    }

    /// Resets with the given object identities at random poses.
    pub fn reset_with(
        config: &EnvConfig,
        templates: &[ObjectTemplate],
        seed: u64,
    ) -> Result<(BinWorld, Observation), EnvError> {
        let g = &config.geometry;
        let mut rng = rng_from_seed(mix_seed(seed, 0xB1A5));
        let mut objects: Vec<ObjectSpec> = Vec::with_capacity(templates.len());
        for (index, t) in templates.iter().enumerate() {
            let extent = t.extent();
            let r = extent.0;
            let mut placed = None;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let lo = r;
                let hi = g.bin_width - r;
                if hi <= lo {
                    break;
                }
                let pos = (rng.gen_range(lo..hi), rng.gen_range(lo..hi));
                let clear = objects.iter().all(|o| {
                    let d = dist(pos, o.position);
                    d >= (r + o.bounding_radius()) * (1.0 - g.placement_overlap_tol)
                });
                if clear {
                    placed = Some(pos);
                    break;
                }
            }
            let position = placed.ok_or(EnvError::Placement {
                index,
                attempts: PLACEMENT_ATTEMPTS,
            })?;
            objects.push(ObjectSpec {
                shape_seed: t.shape_seed,
                kind: t.kind,
                position,
                rotation: rng.gen_range(0.0..PI),
                extent,
            });
        }
        let world = BinWorld {
            config: config.clone(),
            objects,
            gripper: Self::start_pose(config),
            step: 0,
            done: false,
        };
        let obs = world.observe();
        Ok((world, obs))
    }

    pub fn start_pose(config: &EnvConfig) -> Pose {
        let w = config.geometry.bin_width;
        Pose::new(w / 2.0, w / 2.0, config.geometry.start_height, 0.0)
    }

    /// Builds a world from explicit parts; used for scripted scenarios.
    pub fn from_parts(config: &EnvConfig, objects: Vec<ObjectSpec>, gripper: Pose) -> BinWorld {
        BinWorld {
            config: config.clone(),
            objects,
            gripper,
            step: 0,
            done: false,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn objects(&self) -> &[ObjectSpec] {
        &self.objects
    }

    pub fn gripper(&self) -> Pose {
        self.gripper
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn is_closed(&self) -> bool {
        self.gripper.z < self.config.geometry.close_threshold
    }

    pub fn object_seeds(&self) -> Vec<u64> {
        self.objects.iter().map(|o| o.shape_seed).collect()
    }

    pub fn step(&mut self, action: &[f64]) -> Result<(Observation, StepResult), EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let ActionVec(a) = ActionVec::from_slice(action)?;
        let g = self.config.geometry.clone();
        let old = self.gripper;
        let new = Pose::new(
            (old.x + a[0] * g.dxy_scale()).clamp(0.0, g.bin_width),
            (old.y + a[1] * g.dxy_scale()).clamp(0.0, g.bin_width),
            (old.z + a[2] * g.dz_scale).clamp(0.0, g.start_height),
            wrap_angle(old.phi + a[3] * g.dphi_scale, 2.0 * PI),
        );
        if old.z < g.push_height && new.z < g.push_height {
            self.push_objects((old.x, old.y), (new.x, new.y));
        }
        self.gripper = new;
        self.step += 1;
        let closed = self.is_closed();
        self.done = closed || self.step >= self.config.horizon;
        let reward = if self.done && closed && self.grasp_success() {
            1.0
        } else {
            0.0
        };
        Ok((self.observe(), StepResult { reward, done: self.done }))
    }

    fn push_objects(&mut self, from: (f64, f64), to: (f64, f64)) {
        let g = &self.config.geometry;
        let moved = dist(from, to);
        if moved == 0.0 {
            return;
        }
        let dir = ((to.0 - from.0) / moved, (to.1 - from.1) / moved);
        for o in self.objects.iter_mut() {
            let contact = g.finger_radius + 0.5 * (o.extent.0 + o.extent.1);
            let d_new = dist(to, o.position);
            // Only objects the gripper runs into; ones it started on top of stay.
            if d_new < contact && dist(from, o.position) >= contact {
                let mut n = if d_new > 1e-12 {
                    ((o.position.0 - to.0) / d_new, (o.position.1 - to.1) / d_new)
                } else {
                    dir
                };
                // The gripper passed the centre: carry the object ahead of it.
                if n.0 * dir.0 + n.1 * dir.1 < 0.0 {
                    n = dir;
                }
                o.position = (to.0 + n.0 * contact, to.1 + n.1 * contact);
            }
        }
        self.separate_objects();
    }

    fn separate_objects(&mut self) {
        let w = self.config.geometry.bin_width;
        for _ in 0..8 {
            let mut moved = false;
            for i in 0..self.objects.len() {
                for j in (i + 1)..self.objects.len() {
                    let (a, b) = (self.objects[i], self.objects[j]);
                    let min_d = 0.5 * (a.extent.0 + a.extent.1) + 0.5 * (b.extent.0 + b.extent.1);
                    let d = dist(a.position, b.position);
                    if d < min_d {
                        let n = if d > 1e-12 {
                            ((b.position.0 - a.position.0) / d, (b.position.1 - a.position.1) / d)
                        } else {
                            (1.0, 0.0)
                        };
                        let shift = 0.5 * (min_d - d);
                        self.objects[i].position.0 -= n.0 * shift;
                        self.objects[i].position.1 -= n.1 * shift;
                        self.objects[j].position.0 += n.0 * shift;
                        self.objects[j].position.1 += n.1 * shift;
                        moved = true;
                    }
                }
            }
            for o in self.objects.iter_mut() {
                let r = o.bounding_radius().min(w / 2.0);
                o.position.0 = o.position.0.clamp(r, w - r);
                o.position.1 = o.position.1.clamp(r, w - r);
            }
            if !moved {
                break;
            }
        }
    }

    /// Whether the closed gripper holds an object. Always false while the
    /// gripper is above the closing height.
    pub fn grasp_success(&self) -> bool {
        if !self.is_closed() {
            return false;
        }
        let g = &self.config.geometry;
        let p = self.gripper;
        self.objects.iter().any(|o| {
            if self.config.task == Task::Targeted && o.kind != ObjectKind::TargetCross {
                return false;
            }
            if dist((p.x, p.y), o.position) > g.grasp_radius {
                return false;
            }
            if o.aspect_ratio() > g.aspect_threshold {
                let period = o.symmetry_period();
                wrap_angle(p.phi - o.rotation, period).abs() <= g.align_tol
            } else {
                true
            }
        })
    }

    /// Renders the current observation.
    pub fn observe(&self) -> Observation {
        const SUB: usize = 3;
        let cfg = &self.config;
        let n = cfg.grid_size;
        let cell = cfg.view_width / n as f64;
        let x0 = self.gripper.x - cfg.view_width / 2.0;
        let y0 = self.gripper.y - cfg.view_width / 2.0;
        let mut features = vec![0.0; cfg.obs_dim()];
        let (any, rest) = features.split_at_mut(n * n);
        let target = &mut rest[..n * n];
        let weight = 1.0 / (SUB * SUB) as f64;
        for o in &self.objects {
            let r = o.bounding_radius() * std::f64::consts::SQRT_2;
            let lo_c = (((o.position.0 - r - x0) / cell).floor().max(0.0)) as usize;
            let hi_c = (((o.position.0 + r - x0) / cell).ceil().max(0.0) as usize).min(n);
            let lo_r = (((o.position.1 - r - y0) / cell).floor().max(0.0)) as usize;
            let hi_r = (((o.position.1 + r - y0) / cell).ceil().max(0.0) as usize).min(n);
            for row in lo_r..hi_r {
                for col in lo_c..hi_c {
                    let mut hits = 0usize;
                    for sy in 0..SUB {
                        for sx in 0..SUB {
                            let x = x0 + (col as f64 + (sx as f64 + 0.5) / SUB as f64) * cell;
                            let y = y0 + (row as f64 + (sy as f64 + 0.5) / SUB as f64) * cell;
                            if o.contains(x, y) {
                                hits += 1;
                            }
                        }
                    }
                    if hits > 0 {
                        let idx = row * n + col;
                        let v = hits as f64 * weight;
                        any[idx] = (any[idx] + v).min(1.0);
                        if o.kind == ObjectKind::TargetCross {
                            target[idx] = (target[idx] + v).min(1.0);
                        }
                    }
                }
            }
        }
        let base = GRID_CHANNELS * n * n;
        features[base] = self.step as f64 / cfg.horizon as f64;
        features[base + 1] = self.gripper.z / cfg.geometry.start_height;
        features[base + 2] = (2.0 * self.gripper.phi).cos();
        features[base + 3] = (2.0 * self.gripper.phi).sin();
        Observation { features }
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}
