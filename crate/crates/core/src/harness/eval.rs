//! Greedy evaluation on a named object split.

use std::collections::BTreeSet;

use super::HarnessError;
use crate::env::{run_episode, BinWorld, EnvConfig, ObjectSchedule, Observation, Split};
use crate::replay::Provenance;
use crate::util::mix_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub episodes: usize,
    pub successes: usize,
    /// Every object shape seed that appeared during evaluation.
    pub object_seeds: BTreeSet<u64>,
}

impl EvalOutcome {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.episodes as f64
    }
}

/// Runs `n` episodes of `policy` (no exploration noise) on objects from
/// `split`. Episode `i` uses the split's object schedule at index `i` and a
/// world seed derived from `(seed, i)`.
pub fn evaluate<P>(
    mut policy: P,
    env: &EnvConfig,
    n: usize,
    seed: u64,
    split: Split,
) -> Result<EvalOutcome, HarnessError>
where
    P: FnMut(&BinWorld, &Observation) -> Result<Vec<f64>, HarnessError>,
{
    if n == 0 {
        return Err(HarnessError::Config("evaluation needs at least one episode".into()));
    }
    env.validate()?;
    let splits = env.splits();
    let schedule = ObjectSchedule::new(env, &splits, split, mix_seed(seed, 0xE7A1));
    let mut out = EvalOutcome {
        episodes: n,
        successes: 0,
        object_seeds: BTreeSet::new(),
    };
    for i in 0..n {
        let templates = schedule.templates_for_episode(i);
        let (mut world, obs) = BinWorld::reset_with(env, &templates, mix_seed(seed, 0xE7A1_0000 + i as u64))?;
        let mut failure = None;
        let episode = run_episode(&mut world, obs, i as u64, Provenance::OnPolicy, |w, o| {
            if failure.is_some() {
                return vec![0.0; 4];
            }
            policy(w, o).unwrap_or_else(|e| {
                failure = Some(e);
                vec![0.0; 4]
            })
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        out.object_seeds.extend(episode.object_seeds.iter().copied());
        if episode.outcome == 1.0 {
            out.successes += 1;
        }
    }
    Ok(out)
}
