use rand::Rng;

use super::{BinWorld, EnvConfig, EnvError, Observation, ObjectSchedule, Split, ACTION_DIM};
use crate::replay::{Episode, Features, Provenance, Transition};
use crate::util::{mix_seed, rng_from_seed, Rng as StreamRng};

/// Scripted data-collection policy: each component uniform in `[-1, 1]`,
/// with a constant drift added to `dz` before clipping so that a useful
/// fraction of episodes ends in a grasp attempt.
#[derive(Debug, Clone)]
pub struct RandomGraspPolicy {
    pub dz_drift: f64,
}

impl RandomGraspPolicy {
    pub fn new(dz_drift: f64) -> Self {
        RandomGraspPolicy { dz_drift }
    }

    pub fn act<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut a: Vec<f64> = (0..ACTION_DIM).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        a[2] = (a[2] + self.dz_drift).clamp(-1.0, 1.0);
        a
    }
}

/// Rolls `world` forward from `obs` until done, recording every transition.
pub fn run_episode<F>(
    world: &mut BinWorld,
    mut obs: Observation,
    episode_id: u64,
    provenance: Provenance,
    mut policy: F,
) -> Result<Episode, EnvError>
where
    F: FnMut(&BinWorld, &Observation) -> Vec<f64>,
{
    let mut transitions = Vec::with_capacity(world.config().horizon);
    let mut features: Features = obs.features.as_slice().into();
    loop {
        let pose = world.gripper();
        let raw = policy(world, &obs);
        let action = super::ActionVec::from_slice(&raw)?.0.to_vec();
        let (next, res) = world.step(&action)?;
        let next_features: Features = next.features.as_slice().into();
        transitions.push(Transition {
            obs: features,
            timestep: world.step_count() as u32,
            action,
            reward: res.reward,
            next_obs: next_features.clone(),
            done: res.done,
            gripper_pose: Some(pose),
            episode_id,
        });
        features = next_features;
        obs = next;
        if res.done {
            break;
        }
    }
    let outcome = transitions.last().map(|t| t.reward).unwrap_or(0.0);
    Ok(Episode {
        id: episode_id,
        transitions,
        outcome,
        final_pose: Some(world.gripper()),
        object_seeds: world.object_seeds(),
        provenance,
    })
}

/// Collects `n_episodes` random-policy grasps on the training objects.
///
/// Episode `i` uses the object set scheduled for index `i` and a world seed
/// derived from `(seed, i)`, so the pool is a pure function of its inputs.
pub fn collect_random_grasps(
    config: &EnvConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<Episode>, EnvError> {
    config.validate()?;
    let splits = config.splits();
    let schedule = ObjectSchedule::new(config, &splits, Split::Train, mix_seed(seed, 1));
    let policy = RandomGraspPolicy::new(config.random_dz_drift);
    let mut rng: StreamRng = rng_from_seed(mix_seed(seed, 2));
    (0..n_episodes)
        .map(|i| {
            let templates = schedule.templates_for_episode(i);
            let (mut world, obs) =
                BinWorld::reset_with(config, &templates, mix_seed(seed, 1000 + i as u64))?;
            run_episode(&mut world, obs, i as u64, Provenance::InitialRandom, |_, _| {
                policy.act(&mut rng)
            })
        })
        .collect()
}
