//! The six Q-function estimators behind one training interface.
//!
//! | kind        | target                               | action selection |
//! |-------------|--------------------------------------|------------------|
//! | supervised  | episode outcome, synthetic action    | CEM              |
//! | dql         | double-Q bootstrap                   | CEM              |
//! | mc          | discounted return                    | CEM              |
//! | corr_mc     | return minus discounted advantages   | CEM              |
//! | ddpg        | bootstrap through the lagged actor   | actor            |
//! | pcl         | path consistency, Gaussian policy    | policy mean      |

pub mod ddpg;
pub mod pcl;
pub mod targets;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{
    load_checkpoint, save_checkpoint, HiddenActivation, LaggedCopy, MlpNetwork, NnError, OptimizerState,
    OutputActivation,
};
use crate::replay::{Episode, PoolError, ReplayPool, Transition};
use crate::select::{cem_argmax, ActionSpace, CemConfig, NetworkCritic, SelectError};
use crate::util::Rng;

pub use ddpg::{actor_action, actor_step, ActionCritic};
pub use pcl::{gaussian_log_density, pcl_gradients, pcl_residuals, GaussianPolicyRef, LOG_STD_FLOOR};
pub use targets::{
    advantages, corr_mc_targets, corrected_returns, dql_targets, mc_targets, nu_schedule,
    regression_gradients, supervised_targets, PoseScales, SupervisedExample,
};

#[derive(Debug, Error, PartialEq)]
pub enum AlgoError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error("episode {episode} has no gripper pose (step {step:?})")]
    MissingPose { episode: u64, step: Option<usize> },
    #[error("episode {0} does not end in a terminal transition")]
    IncompleteEpisode(u64),
    #[error("consistency window d = {d} outside 1..={horizon}")]
    WindowOutOfRange { d: usize, horizon: usize },
    #[error("this estimator needs a continuous action space")]
    UnsupportedSpace,
    #[error("unknown estimator {0:?}")]
    UnknownKind(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Supervised,
    Dql,
    Mc,
    CorrMc,
    Ddpg,
    Pcl,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Supervised,
        EstimatorKind::Dql,
        EstimatorKind::Mc,
        EstimatorKind::CorrMc,
        EstimatorKind::Ddpg,
        EstimatorKind::Pcl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Supervised => "supervised",
            EstimatorKind::Dql => "dql",
            EstimatorKind::Mc => "mc",
            EstimatorKind::CorrMc => "corr_mc",
            EstimatorKind::Ddpg => "ddpg",
            EstimatorKind::Pcl => "pcl",
        }
    }

    /// Whether batches are whole episodes rather than transitions.
    pub fn samples_episodes(self) -> bool {
        !matches!(self, EstimatorKind::Dql | EstimatorKind::Ddpg)
    }

    /// Whether the discount factor changes what is learned. Supervised
    /// labels ignore it and MC is run at a fixed discount in sweeps.
    pub fn sweeps_gamma(self) -> bool {
        !matches!(self, EstimatorKind::Supervised | EstimatorKind::Mc)
    }

    fn has_critic(self) -> bool {
        self != EstimatorKind::Pcl
    }

    fn has_critic_target(self) -> bool {
        matches!(self, EstimatorKind::Dql | EstimatorKind::CorrMc | EstimatorKind::Ddpg)
    }

    fn has_actor(self) -> bool {
        matches!(self, EstimatorKind::Ddpg | EstimatorKind::Pcl)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = AlgoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| AlgoError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgoConfig {
    pub kind: EstimatorKind,
    pub gamma: f64,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    /// Overrides the per-kind default (64 transitions or 8 episodes).
    pub batch_size: Option<usize>,
    pub argmax_samples: usize,
    pub cem: CemConfig,
    pub target_lag: usize,
    /// `None`: the harness uses half of the total training steps.
    pub nu_anneal_steps: Option<u64>,
    pub tau: f64,
    /// Consistency window; `None` runs every window to the episode end.
    pub pcl_d: Option<usize>,
    pub trust_region: bool,
    /// Initial policy std as a fraction of each axis range.
    pub init_std_fraction: f64,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        AlgoConfig {
            kind: EstimatorKind::Dql,
            gamma: 0.9,
            learning_rate: 1e-3,
            hidden: vec![64, 64],
            hidden_activation: HiddenActivation::Relu,
            batch_size: None,
            argmax_samples: 16,
            cem: CemConfig::default(),
            target_lag: crate::nn::DEFAULT_LAG_PERIOD,
            nu_anneal_steps: None,
            tau: 0.01,
            pcl_d: None,
            trust_region: true,
            init_std_fraction: 0.3,
        }
    }
}

pub const DEFAULT_TRANSITION_BATCH: usize = 64;
pub const DEFAULT_EPISODE_BATCH: usize = 8;

impl AlgoConfig {
    pub fn for_kind(kind: EstimatorKind) -> Self {
        AlgoConfig {
            kind,
            ..AlgoConfig::default()
        }
    }

    pub fn effective_batch_size(&self) -> usize {
        self.batch_size.unwrap_or(if self.kind.samples_episodes() {
            DEFAULT_EPISODE_BATCH
        } else {
            DEFAULT_TRANSITION_BATCH
        })
    }
}

/// A network with its optimizer.
#[derive(Debug, Clone)]
pub struct Trainable {
    pub net: MlpNetwork,
    pub opt: OptimizerState,
}

impl Trainable {
    fn new(net: MlpNetwork, lr: f64) -> Self {
        Trainable {
            net,
            opt: OptimizerState::adam(lr),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlgoState {
    pub config: AlgoConfig,
    pub space: ActionSpace,
    pub obs_dim: usize,
    pub horizon: usize,
    pub pose_scales: PoseScales,
    pub q: Option<Trainable>,
    pub q_target: Option<LaggedCopy>,
    pub actor: Option<Trainable>,
    pub actor_target: Option<LaggedCopy>,
    pub value: Option<Trainable>,
    pub policy_log_std: Option<Vec<f64>>,
    log_std_opt: OptimizerState,
    /// Trust-PCL prior: lagged mean network and the log-std at its last sync.
    prior: Option<(LaggedCopy, Vec<f64>)>,
    pub nu: f64,
    pub global_step: u64,
    pub anneal_steps: u64,
}

/// Statistics of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    /// DDPG: mean Q of the actor's actions before its step.
    pub actor_objective: Option<f64>,
}

impl AlgoState {
    /// Fresh networks for `kind` on an `obs_dim` observation and `space`.
    pub fn new(
        config: AlgoConfig,
        obs_dim: usize,
        space: ActionSpace,
        horizon: usize,
        rng: &mut Rng,
    ) -> Result<Self, AlgoError> {
        let kind = config.kind;
        if matches!(kind, EstimatorKind::Ddpg | EstimatorKind::Pcl) && space.is_discrete() {
            return Err(AlgoError::UnsupportedSpace);
        }
        let d = config.pcl_d.unwrap_or(horizon);
        if kind == EstimatorKind::Pcl && (d == 0 || d > horizon) {
            return Err(AlgoError::WindowOutOfRange { d, horizon });
        }
        let sizes = |input: usize, output: usize| {
            let mut s = vec![input];
            s.extend(&config.hidden);
            s.push(output);
            s
        };
        let lr = config.learning_rate;
        let q = if kind.has_critic() {
            let out = if kind == EstimatorKind::Supervised {
                OutputActivation::Sigmoid
            } else {
                OutputActivation::Identity
            };
            let net = MlpNetwork::new(
                &sizes(obs_dim + space.encoded_dim(), 1),
                config.hidden_activation,
                out,
                rng,
            )?;
            Some(Trainable::new(net, lr))
        } else {
            None
        };
        let q_target = match (&q, kind.has_critic_target()) {
            (Some(q), true) => Some(LaggedCopy::new(&q.net, config.target_lag)),
            _ => None,
        };
        let actor = if kind.has_actor() {
            let net = MlpNetwork::new(
                &sizes(obs_dim, space.action_dim()),
                config.hidden_activation,
                OutputActivation::Sigmoid,
                rng,
            )?;
            Some(Trainable::new(net, lr))
        } else {
            None
        };
        let actor_target = match (&actor, kind) {
            (Some(a), EstimatorKind::Ddpg) => Some(LaggedCopy::new(&a.net, config.target_lag)),
            _ => None,
        };
        let (value, policy_log_std, prior) = if kind == EstimatorKind::Pcl {
            let v = MlpNetwork::new(&sizes(obs_dim, 1), config.hidden_activation, OutputActivation::Identity, rng)?;
            let log_std: Vec<f64> = (0..space.action_dim())
                .map(|k| (config.init_std_fraction * space.range(k)).ln())
                .collect();
            let prior = config.trust_region.then(|| {
                (
                    LaggedCopy::new(&actor.as_ref().unwrap().net, config.target_lag),
                    log_std.clone(),
                )
            });
            (Some(Trainable::new(v, lr)), Some(log_std), prior)
        } else {
            (None, None, None)
        };
        Ok(AlgoState {
            log_std_opt: OptimizerState::adam(lr),
            anneal_steps: config.nu_anneal_steps.unwrap_or(1).max(1),
            config,
            space,
            obs_dim,
            horizon,
            pose_scales: PoseScales::default(),
            q,
            q_target,
            actor,
            actor_target,
            value,
            policy_log_std,
            prior,
            nu: 0.0,
            global_step: 0,
        })
    }

    pub fn kind(&self) -> EstimatorKind {
        self.config.kind
    }

    pub fn with_pose_scales(mut self, scales: PoseScales) -> Self {
        self.pose_scales = scales;
        self
    }

    /// Sets the ν anneal length (used when the config leaves it open).
    pub fn set_anneal_steps(&mut self, steps: u64) {
        self.anneal_steps = steps.max(1);
        self.nu = nu_schedule(self.global_step, self.anneal_steps);
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        for t in [&mut self.q, &mut self.actor, &mut self.value].into_iter().flatten() {
            t.opt.learning_rate = lr;
        }
        self.log_std_opt.learning_rate = lr;
    }

    pub fn critic(&self) -> Option<NetworkCritic<'_>> {
        self.q.as_ref().map(|q| NetworkCritic::new(&q.net, &self.space))
    }

    fn pcl_window(&self) -> usize {
        self.config.pcl_d.unwrap_or(self.horizon)
    }

    /// One optimizer step on a batch drawn from `pool`.
    pub fn train_step(&mut self, pool: &ReplayPool, rng: &mut Rng) -> Result<StepStats, AlgoError> {
        let bs = self.config.effective_batch_size();
        let stats = if self.kind().samples_episodes() {
            let episodes = pool.sample_episodes(bs, rng)?;
            self.update_on_episodes(&episodes, rng)?
        } else {
            let batch = pool.sample_transitions(bs, rng)?;
            self.update_on_transitions(&batch, rng)?
        };
        self.global_step += 1;
        self.nu = nu_schedule(self.global_step, self.anneal_steps);
        Ok(stats)
    }

    /// The update for episode-batch kinds, without touching the step counter.
    pub fn update_on_episodes(&mut self, episodes: &[&Episode], rng: &mut Rng) -> Result<StepStats, AlgoError> {
        let cfg = &self.config;
        let (inputs, targets): (Vec<Vec<f64>>, Vec<f64>) = match cfg.kind {
            EstimatorKind::Supervised => supervised_targets(episodes, &self.pose_scales)?
                .into_iter()
                .map(|ex| (self.critic_input(&ex.obs, &ex.action), ex.label))
                .unzip(),
            EstimatorKind::Mc | EstimatorKind::CorrMc => {
                let mut inputs = Vec::new();
                let mut targets = Vec::new();
                for e in episodes {
                    let y = if cfg.kind == EstimatorKind::Mc {
                        mc_targets(e, cfg.gamma)?
                    } else {
                        let lagged = NetworkCritic::new(self.q_target.as_ref().unwrap().network(), &self.space);
                        corr_mc_targets(e, &lagged, &self.space, cfg.gamma, self.nu, cfg.argmax_samples, rng)?
                    };
                    for t in &e.transitions {
                        inputs.push(self.critic_input(&t.obs, &t.action));
                    }
                    targets.extend(y);
                }
                (inputs, targets)
            }
            EstimatorKind::Pcl => return self.pcl_update(episodes),
            EstimatorKind::Dql | EstimatorKind::Ddpg => {
                let batch: Vec<&Transition> = episodes.iter().flat_map(|e| &e.transitions).collect();
                return self.update_on_transitions(&batch, rng);
            }
        };
        let loss = self.regress_critic(&inputs, &targets)?;
        Ok(StepStats {
            loss,
            actor_objective: None,
        })
    }

    /// The update for transition-batch kinds, without touching the step counter.
    pub fn update_on_transitions(&mut self, batch: &[&Transition], rng: &mut Rng) -> Result<StepStats, AlgoError> {
        let cfg = self.config.clone();
        match cfg.kind {
            EstimatorKind::Dql => {
                let q = self.q.as_ref().unwrap();
                let y = dql_targets(
                    batch,
                    &q.net,
                    self.q_target.as_ref().unwrap().network(),
                    &self.space,
                    cfg.gamma,
                    cfg.argmax_samples,
                    rng,
                )?;
                let inputs: Vec<Vec<f64>> = batch.iter().map(|t| self.critic_input(&t.obs, &t.action)).collect();
                let loss = self.regress_critic(&inputs, &y)?;
                Ok(StepStats {
                    loss,
                    actor_objective: None,
                })
            }
            EstimatorKind::Ddpg => self.ddpg_update(batch),
            _ => Err(AlgoError::UnknownKind(format!(
                "{} trains on whole episodes",
                cfg.kind
            ))),
        }
    }

    fn critic_input(&self, obs: &[f64], action: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(obs.len() + self.space.encoded_dim());
        x.extend_from_slice(obs);
        x.extend(self.space.encode(action));
        x
    }

    fn regress_critic(&mut self, inputs: &[Vec<f64>], targets: &[f64]) -> Result<f64, AlgoError> {
        let q = self.q.as_mut().unwrap();
        let (loss, grads) = regression_gradients(&q.net, inputs, targets)?;
        q.opt.step_network(&mut q.net, &grads)?;
        if let Some(t) = self.q_target.as_mut() {
            t.maybe_sync(&q.net);
        }
        Ok(loss)
    }

    /// Critic regression onto `r + γ Q'(s', π'(s'))`, then one actor step
    /// through the updated critic.
    pub fn ddpg_update(&mut self, batch: &[&Transition]) -> Result<StepStats, AlgoError> {
        let gamma = self.config.gamma;
        let y = {
            let lagged_q = NetworkCritic::new(self.q_target.as_ref().unwrap().network(), &self.space);
            let lagged_pi = self.actor_target.as_ref().unwrap().network();
            batch
                .iter()
                .map(|t| {
                    if t.done {
                        return Ok(t.reward);
                    }
                    let a = actor_action(lagged_pi, &t.next_obs, &self.space)?;
                    let (q, _) = lagged_q.value_and_action_grad(&t.next_obs, &a)?;
                    Ok(t.reward + gamma * q)
                })
                .collect::<Result<Vec<f64>, AlgoError>>()?
        };
        let inputs: Vec<Vec<f64>> = batch.iter().map(|t| self.critic_input(&t.obs, &t.action)).collect();
        let loss = self.regress_critic(&inputs, &y)?;

        let obs: Vec<&[f64]> = batch.iter().map(|t| &*t.obs).collect();
        let critic = NetworkCritic::new(&self.q.as_ref().unwrap().net, &self.space);
        let actor = self.actor.as_mut().unwrap();
        let objective = actor_step(&mut actor.net, &mut actor.opt, &critic, &obs, &self.space)?;
        self.actor_target.as_mut().unwrap().maybe_sync(&actor.net);
        Ok(StepStats {
            loss,
            actor_objective: Some(objective),
        })
    }

    /// One consistency step on the policy mean, log-stds and value net.
    pub fn pcl_update(&mut self, episodes: &[&Episode]) -> Result<StepStats, AlgoError> {
        let d = self.pcl_window();
        if d == 0 || d > self.horizon {
            return Err(AlgoError::WindowOutOfRange { d, horizon: self.horizon });
        }
        let actor = self.actor.as_mut().unwrap();
        let value = self.value.as_mut().unwrap();
        let log_std = self.policy_log_std.as_mut().unwrap();
        let g = pcl_gradients(
            episodes,
            &value.net,
            GaussianPolicyRef {
                mean: &actor.net,
                log_std,
            },
            self.prior.as_ref().map(|(net, ls)| GaussianPolicyRef {
                mean: net.network(),
                log_std: ls,
            }),
            &self.space,
            self.config.gamma,
            self.config.tau,
            d,
        )?;
        value.opt.step_network(&mut value.net, &g.value)?;
        actor.opt.step_network(&mut actor.net, &g.actor)?;
        self.log_std_opt.apply(&mut [log_std.as_mut_slice()], &[&g.log_std])?;
        for ls in log_std.iter_mut() {
            *ls = ls.max(LOG_STD_FLOOR);
        }
        if let Some((lagged, prior_std)) = self.prior.as_mut() {
            if lagged.maybe_sync(&actor.net) {
                prior_std.clone_from(log_std);
            }
        }
        Ok(StepStats {
            loss: g.loss,
            actor_objective: None,
        })
    }

    /// The evaluation-time policy.
    pub fn greedy_policy(&self) -> GreedyPolicy<'_> {
        GreedyPolicy { state: self }
    }

    /// Networks by role, for checkpointing. The PCL log-stds are stored as a
    /// single bias-only layer.
    pub fn networks(&self) -> Vec<(&'static str, MlpNetwork)> {
        let mut out = Vec::new();
        if let Some(q) = &self.q {
            out.push(("critic", q.net.clone()));
        }
        if let Some(t) = &self.q_target {
            out.push(("critic_target", t.network().clone()));
        }
        if let Some(a) = &self.actor {
            out.push(("actor", a.net.clone()));
        }
        if let Some(t) = &self.actor_target {
            out.push(("actor_target", t.network().clone()));
        }
        if let Some(v) = &self.value {
            out.push(("value", v.net.clone()));
        }
        if let Some(ls) = &self.policy_log_std {
            let mut net = MlpNetwork::zeros(&[1, ls.len()], HiddenActivation::Relu, OutputActivation::Identity)
                .expect("positive sizes");
            net.biases_mut(0).copy_from_slice(ls);
            out.push(("policy_log_std", net));
        }
        out
    }

    pub fn save_checkpoints(&self, dir: impl AsRef<Path>, prefix: &str) -> Result<(), AlgoError> {
        std::fs::create_dir_all(dir.as_ref()).map_err(|e| AlgoError::Checkpoint(e.to_string()))?;
        for (role, net) in self.networks() {
            save_checkpoint(&net, dir.as_ref().join(format!("{prefix}{role}.ckpt")))?;
        }
        Ok(())
    }

    /// Replaces the online networks with saved ones (targets are re-synced).
    pub fn load_checkpoints(&mut self, dir: impl AsRef<Path>, prefix: &str) -> Result<(), AlgoError> {
        let path = |role: &str| dir.as_ref().join(format!("{prefix}{role}.ckpt"));
        let replace = |slot: &mut MlpNetwork, role: &str| -> Result<(), AlgoError> {
            let net = load_checkpoint(path(role))?;
            if net.layer_sizes() != slot.layer_sizes() {
                return Err(AlgoError::Checkpoint(format!(
                    "{role}: layer sizes {:?} do not match {:?}",
                    net.layer_sizes(),
                    slot.layer_sizes()
                )));
            }
            *slot = net;
            Ok(())
        };
        if let Some(q) = self.q.as_mut() {
            replace(&mut q.net, "critic")?;
            if let Some(t) = self.q_target.as_mut() {
                *t = LaggedCopy::new(&q.net, self.config.target_lag);
            }
        }
        if let Some(a) = self.actor.as_mut() {
            replace(&mut a.net, "actor")?;
            if let Some(t) = self.actor_target.as_mut() {
                *t = LaggedCopy::new(&a.net, self.config.target_lag);
            }
        }
        if let Some(v) = self.value.as_mut() {
            replace(&mut v.net, "value")?;
        }
        if let Some(ls) = self.policy_log_std.as_mut() {
            let net = load_checkpoint(path("policy_log_std"))?;
            if net.biases(0).len() != ls.len() {
                return Err(AlgoError::Checkpoint("policy_log_std: wrong length".into()));
            }
            ls.copy_from_slice(net.biases(0));
        }
        Ok(())
    }
}

/// Greedy action selection for a trained state.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy<'a> {
    state: &'a AlgoState,
}

impl GreedyPolicy<'_> {
    /// CEM over the critic for the value-based kinds; the actor (or the
    /// Gaussian mean) otherwise.
    pub fn act(&self, obs: &[f64], rng: &mut Rng) -> Result<Vec<f64>, AlgoError> {
        let s = self.state;
        match s.kind() {
            EstimatorKind::Ddpg | EstimatorKind::Pcl => actor_action(&s.actor.as_ref().unwrap().net, obs, &s.space),
            _ => {
                let critic = s.critic().unwrap();
                Ok(cem_argmax(&critic, obs, &s.space, &s.config.cem, rng)?.action)
            }
        }
    }
}
