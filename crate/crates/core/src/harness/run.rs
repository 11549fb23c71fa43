//! A single training run: pool, optimizer steps, on-policy collection and
//! periodic held-out evaluation.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{evaluate, HarnessError, MetricRow};
use crate::algo::{AlgoConfig, AlgoState, PoseScales};
use crate::env::{collect_random_grasps, run_episode, BinWorld, EnvConfig, ObjectSchedule, Split};
use crate::replay::{load_pool, Provenance, ReplayPool};
use crate::select::{explore, ActionSpace, ExplorationSchedule};
use crate::util::{fnv1a64, mix_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// The pool is frozen after initialisation.
    OffPolicy,
    /// Greedy-plus-noise episodes are appended during training.
    OnPolicy,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::OffPolicy => "off_policy",
            Regime::OnPolicy => "on_policy",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off_policy" => Ok(Regime::OffPolicy),
            "on_policy" => Ok(Regime::OnPolicy),
            _ => Err(HarnessError::Config(format!("unknown regime {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub algo: AlgoConfig,
    pub env: EnvConfig,
    /// Random episodes in the initial pool.
    pub pool_size: usize,
    /// Seed of the initial pool. Kept separate from `seed` so runs that
    /// differ only in their training seed share one dataset.
    pub pool_seed: u64,
    /// Load the initial pool from this file instead of collecting it.
    pub pool_path: Option<PathBuf>,
    pub regime: Regime,
    pub train_steps: u64,
    pub collect_every: u64,
    pub collect_count: usize,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub explore_duration: u64,
    pub explore_scale: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algo: AlgoConfig::default(),
            env: EnvConfig::default(),
            pool_size: 5000,
            pool_seed: 0,
            pool_path: None,
            regime: Regime::OffPolicy,
            train_steps: 20_000,
            collect_every: 1000,
            collect_count: 50,
            eval_every: 1000,
            eval_episodes: 50,
            explore_duration: 10_000,
            explore_scale: 0.2,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.env.validate()?;
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.pool_size == 0 && self.pool_path.is_none() {
            return bad("pool_size must be positive");
        }
        if self.train_steps == 0 {
            return bad("train_steps must be positive");
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("evaluation cadence and episode count must be positive");
        }
        if self.regime == Regime::OnPolicy && (self.collect_every == 0 || self.collect_count == 0) {
            return bad("on-policy collection needs collect_every > 0 and collect_count > 0");
        }
        if self.explore_duration == 0 || !(self.explore_scale >= 0.0) {
            return bad("exploration needs a positive duration and a non-negative scale");
        }
        if !(self.algo.gamma > 0.0 && self.algo.gamma <= 1.0) || !(self.algo.learning_rate > 0.0) {
            return bad("gamma must be in (0, 1] and the learning rate positive");
        }
        if self.algo.hidden.iter().any(|&w| w == 0) {
            return bad("hidden widths must be positive");
        }
        self.algo.cem.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    /// The config with every open default filled in, as run.
    pub fn resolved(&self) -> RunConfig {
        let mut c = self.clone();
        if c.algo.nu_anneal_steps.is_none() {
            c.algo.nu_anneal_steps = Some((c.train_steps / 2).max(1));
        }
        if c.algo.pcl_d.is_none() && c.algo.kind == crate::algo::EstimatorKind::Pcl {
            c.algo.pcl_d = Some(c.env.horizon);
        }
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml(&text)
    }

    /// Fingerprint of the resolved config.
    pub fn config_hash(&self) -> u64 {
        fnv1a64(self.resolved().to_toml().as_bytes())
    }

    pub fn run_id(&self) -> String {
        format!(
            "{}-{}-p{}-s{}-{:08x}",
            self.algo.kind,
            self.regime.name(),
            self.pool_size,
            self.seed,
            self.config_hash() as u32
        )
    }
}

/// The initial pool for `config`: loaded from `pool_path`, or collected with
/// the random policy on the training objects.
pub fn initial_pool(config: &RunConfig) -> Result<ReplayPool, HarnessError> {
    if let Some(path) = &config.pool_path {
        let pool = load_pool(path)?;
        if pool.descriptor_hash() != config.env.descriptor_hash() {
            return Err(HarnessError::Config(format!(
                "pool {} was collected for a different observation layout",
                path.display()
            )));
        }
        return Ok(pool);
    }
    let mut pool = ReplayPool::for_grasping(config.env.descriptor_hash());
    pool.extend(collect_random_grasps(&config.env, config.pool_size, config.pool_seed)?)?;
    Ok(pool)
}

/// One on-policy collection: `episodes` appended after optimizer step `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectionEvent {
    pub step: u64,
    pub episodes: usize,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub rows: Vec<MetricRow>,
    pub collections: Vec<CollectionEvent>,
    pub state: AlgoState,
    pub pool: ReplayPool,
}

/// A run aborted by a component error at `step`. `rows` holds the metrics
/// recorded before the failure.
#[derive(Debug, thiserror::Error)]
#[error("run {run_id} failed at step {step}: {source}")]
pub struct RunFailure {
    pub run_id: String,
    pub step: u64,
    pub rows: Vec<MetricRow>,
    #[source]
    pub source: HarnessError,
}

pub fn run_training(config: &RunConfig) -> Result<RunOutcome, RunFailure> {
    let fail = |source: HarnessError| RunFailure {
        run_id: config.run_id(),
        step: 0,
        rows: Vec::new(),
        source,
    };
    config.validate().map_err(fail)?;
    let pool = initial_pool(config).map_err(fail)?;
    run_training_on(config, pool)
}

/// [`run_training`] starting from an existing pool (cloned by the caller
/// when it is shared).
pub fn run_training_on(config: &RunConfig, mut pool: ReplayPool) -> Result<RunOutcome, RunFailure> {
    let cfg = config.resolved();
    let run_id = config.run_id();
    let config_hash = config.config_hash();
    let mut rows = Vec::new();
    let mut collections = Vec::new();
    let mut step = 0;
    let result = (|| -> Result<AlgoState, HarnessError> {
        cfg.validate()?;
        let env = &cfg.env;
        let space = ActionSpace::grasp();
        let mut rng = rng_from_seed(mix_seed(cfg.seed, 0x7A11));
        let mut state = AlgoState::new(cfg.algo.clone(), env.obs_dim(), space.clone(), env.horizon, &mut rng)?
            .with_pose_scales(PoseScales::from_geometry(&env.geometry));
        state.set_anneal_steps(cfg.algo.nu_anneal_steps.unwrap_or(1));
        let schedule = ExplorationSchedule::new(cfg.explore_duration, cfg.explore_scale);
        let splits = env.splits();
        let collect_objects = ObjectSchedule::new(env, &splits, Split::Train, mix_seed(cfg.seed, 0xC011));
        let mut collected = 0usize;
        let mut act_rng = rng_from_seed(mix_seed(cfg.seed, 0xAC7));
        let started = Instant::now();
        let mut loss_sum = 0.0;
        let mut loss_n = 0u64;
        while step < cfg.train_steps {
            loss_sum += state.train_step(&pool, &mut rng)?.loss;
            loss_n += 1;
            step += 1;
            if cfg.regime == Regime::OnPolicy && step % cfg.collect_every == 0 {
                for _ in 0..cfg.collect_count {
                    let templates = collect_objects.templates_for_episode(collected);
                    let world_seed = mix_seed(cfg.seed, 0xC011_0000 + collected as u64);
                    let (mut world, obs) = BinWorld::reset_with(env, &templates, world_seed)?;
                    let policy = state.greedy_policy();
                    let mut failure = None;
                    let id = pool.num_episodes() as u64;
                    let episode = run_episode(&mut world, obs, id, Provenance::OnPolicy, |_, o| {
                        match policy.act(&o.features, &mut act_rng) {
                            Ok(a) => explore(&a, step, &schedule, &space, &mut act_rng),
                            Err(e) => {
                                failure.get_or_insert(e);
                                vec![0.0; space.action_dim()]
                            }
                        }
                    })?;
                    if let Some(e) = failure {
                        return Err(e.into());
                    }
                    pool.add_episode(episode)?;
                    collected += 1;
                }
                collections.push(CollectionEvent {
                    step,
                    episodes: cfg.collect_count,
                });
            }
            if step % cfg.eval_every == 0 || step == cfg.train_steps {
                let policy = state.greedy_policy();
                // same test episodes at every evaluation
                let mut eval_rng = rng_from_seed(mix_seed(cfg.seed, 0xE7A1));
                let outcome = evaluate(
                    |_, o| Ok(policy.act(&o.features, &mut eval_rng)?),
                    env,
                    cfg.eval_episodes,
                    mix_seed(cfg.seed, 0xE7A2),
                    Split::Test,
                )?;
                rows.push(MetricRow {
                    run_id: run_id.clone(),
                    config_hash: format!("{config_hash:016x}"),
                    algo: cfg.algo.kind.name().to_string(),
                    pool_size: cfg.pool_size,
                    regime: cfg.regime.name().to_string(),
                    seed: cfg.seed,
                    step,
                    train_loss: loss_sum / loss_n.max(1) as f64,
                    success_rate: outcome.success_rate(),
                    wall_clock_s: started.elapsed().as_secs_f64(),
                    status: "ok".into(),
                });
                loss_sum = 0.0;
                loss_n = 0;
            }
        }
        Ok(state)
    })();
    match result {
        Ok(state) => Ok(RunOutcome {
            rows,
            collections,
            state,
            pool,
        }),
        Err(source) => Err(RunFailure {
            run_id,
            step,
            rows,
            source,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::EstimatorKind;
    use crate::replay::Provenance;

    fn small(kind: EstimatorKind, regime: Regime) -> RunConfig {
        RunConfig {
            algo: AlgoConfig {
                hidden: vec![8],
                ..AlgoConfig::for_kind(kind)
            },
            pool_size: 30,
            regime,
            train_steps: 30,
            collect_every: 10,
            collect_count: 2,
            eval_every: 10,
            eval_episodes: 3,
            ..RunConfig::default()
        }
    }

    #[test]
    fn off_policy_pool_is_frozen() {
        let out = run_training(&small(EstimatorKind::Mc, Regime::OffPolicy)).unwrap();
        assert_eq!(out.pool.num_episodes(), 30);
        assert_eq!(out.pool.counters().on_policy_added, 0);
        assert_eq!(out.rows.len(), 3);
        assert_eq!(out.rows.iter().map(|r| r.step).collect::<Vec<_>>(), [10, 20, 30]);
    }

    #[test]
    fn on_policy_collects_on_schedule() {
        let out = run_training(&small(EstimatorKind::Dql, Regime::OnPolicy)).unwrap();
        let c = out.pool.counters();
        assert_eq!((c.initial_random, c.on_policy_added), (30, 6));
        let steps: Vec<u64> = out.collections.iter().map(|e| e.step).collect();
        assert_eq!(steps, [10, 20, 30]);
        assert!(out.pool.episodes()[30..].iter().all(|e| e.provenance == Provenance::OnPolicy));
    }

    #[test]
    fn identical_configs_give_identical_histories() {
        let cfg = small(EstimatorKind::Dql, Regime::OnPolicy);
        let strip = |rows: Vec<MetricRow>| {
            rows.into_iter()
                .map(|r| MetricRow { wall_clock_s: 0.0, ..r })
                .collect::<Vec<_>>()
        };
        let a = run_training(&cfg).unwrap();
        let b = run_training(&cfg).unwrap();
        assert_eq!(strip(a.rows), strip(b.rows));
        assert_eq!(a.pool.episodes(), b.pool.episodes());
    }

    #[test]
    fn resolved_config_fills_anneal_and_window() {
        let mut cfg = small(EstimatorKind::Pcl, Regime::OffPolicy);
        cfg.train_steps = 400;
        let r = cfg.resolved();
        assert_eq!(r.algo.nu_anneal_steps, Some(200));
        assert_eq!(r.algo.pcl_d, Some(cfg.env.horizon));
        assert_eq!(RunConfig::from_toml(&r.to_toml()).unwrap(), r);
    }

    #[test]
    fn component_error_records_failing_step() {
        let mut cfg = small(EstimatorKind::Dql, Regime::OffPolicy);
        cfg.algo.argmax_samples = 0;
        let err = run_training(&cfg).unwrap_err();
        assert_eq!(err.step, 0);
        assert!(err.rows.is_empty());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = small(EstimatorKind::Mc, Regime::OffPolicy);
        cfg.train_steps = 0;
        assert!(matches!(run_training(&cfg).unwrap_err().source, HarnessError::Config(_)));
    }
}
