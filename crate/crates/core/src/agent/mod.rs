//! Double-DQN policy selector.
//!
//! Every `decision_interval` requests the agent observes the ensemble's recent
//! virtual hit ratios plus two context features and picks the policy that
//! controls the primary cache until the next decision.

mod replay;
mod reward;
mod state;
mod train;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::error::{Error, Result};
use crate::lstm::{LstmIntModel, LstmReqModel};
use crate::nn::{
    argmax, huber, huber_grad, Activation, Adam, AdamConfig, LayerSpec, NetInput, Network,
    NetworkSpec,
};
use crate::policy::PolicyContext;
use crate::virtual_cache::{EnsembleConfig, WINDOW_SLOTS};

pub use replay::{Experience, ReplayBuffer};
pub use reward::{fif_rank_reward, policy_scores};
pub use state::{build_state, top_items, RequestLog, SelectorState, VolumeNorm};
pub use train::{
    run_episode, train_cec, write_training_log, DecisionRecord, EpisodeMode, EpisodeOutcome,
};

const MAGIC: &[u8; 8] = b"CECAGNT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Requests between policy decisions (`n`).
    pub decision_interval: usize,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of all training decisions over which epsilon anneals linearly.
    pub epsilon_anneal: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Train steps between target-network copies (`C`).
    pub target_update: u64,
    pub train_steps_per_decision: usize,
    pub learning_rate: f64,
    pub lstm_hidden: usize,
    pub dense_hidden: usize,
    /// Passes over the training trace.
    pub episodes: usize,
    /// Store a transition for every policy, not only the selected one. Valid
    /// because the observation does not depend on the action.
    pub counterfactual: bool,
    pub reward_candidates: CandidateSource,
}

/// Where each policy's eviction candidate for the reward comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateSource {
    /// Every policy proposes a victim from the primary cache at each primary
    /// eviction, so all candidates come from the same contents.
    Primary,
    /// Each policy's own virtual-cache eviction; policies whose virtual cache
    /// evicted nothing get the mean score.
    Virtual,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            decision_interval: 100,
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_anneal: 0.5,
            replay_capacity: 10_000,
            batch_size: 32,
            target_update: 200,
            train_steps_per_decision: 1,
            learning_rate: 1e-3,
            lstm_hidden: 64,
            dense_hidden: 64,
            episodes: 1,
            counterfactual: false,
            reward_candidates: CandidateSource::Primary,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.decision_interval == 0 {
            return Err(Error::config("decision interval must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma must lie in [0, 1)"));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(Error::config(
                "replay capacity must hold at least one batch",
            ));
        }
        if self.target_update == 0 || self.episodes == 0 {
            return Err(Error::config(
                "target update period and episodes must be positive",
            ));
        }
        Ok(())
    }

    /// Epsilon at training decision `d` out of `total`.
    pub fn epsilon(&self, d: usize, total: usize) -> f64 {
        let span = self.epsilon_anneal * total as f64;
        let frac = if span > 0.0 {
            (d as f64 / span).min(1.0)
        } else {
            1.0
        };
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SelectMode {
    Train { epsilon: f64 },
    Eval,
}

/// `r + γ · Q_target(s', argmax_a Q_online(s', a))`.
pub fn ddqn_target(reward: f64, gamma: f64, q_online_next: &[f64], q_target_next: &[f64]) -> f64 {
    reward + gamma * q_target_next[argmax(q_online_next)]
}

pub fn q_network_spec(num_policies: usize, config: &AgentConfig) -> NetworkSpec {
    NetworkSpec::sequence(
        num_policies,
        config.lstm_hidden,
        2,
        vec![
            LayerSpec::new(config.dense_hidden, Activation::Relu),
            LayerSpec::new(num_policies, Activation::Identity),
        ],
    )
}

#[derive(Clone, Debug)]
pub struct DdqnAgent {
    config: AgentConfig,
    ensemble: EnsembleConfig,
    volume_norm: VolumeNorm,
    online: Network,
    target: Network,
    adam: Adam,
    replay: ReplayBuffer,
    train_steps: u64,
}

#[derive(Serialize, Deserialize)]
struct AgentMeta {
    config: AgentConfig,
    ensemble: EnsembleConfig,
    volume_norm: VolumeNorm,
    train_steps: u64,
    lstm_req: usize,
}

impl DdqnAgent {
    pub fn new(
        ensemble: EnsembleConfig,
        config: AgentConfig,
        volume_norm: VolumeNorm,
        seed: u64,
    ) -> Result<Self> {
        ensemble.validate()?;
        config.validate()?;
        let online = Network::new(q_network_spec(ensemble.len(), &config), seed)?;
        Ok(Self::from_parts(ensemble, config, volume_norm, online))
    }

    /// Wraps an existing online network; the target starts as a copy.
    pub fn from_parts(
        ensemble: EnsembleConfig,
        config: AgentConfig,
        volume_norm: VolumeNorm,
        online: Network,
    ) -> Self {
        let adam = Adam::new(
            AdamConfig::with_lr(config.learning_rate),
            online.params().len(),
        );
        let replay = ReplayBuffer::new(config.replay_capacity);
        Self {
            target: online.clone(),
            online,
            adam,
            replay,
            train_steps: 0,
            config,
            ensemble,
            volume_norm,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn ensemble(&self) -> &EnsembleConfig {
        &self.ensemble
    }

    pub fn volume_norm(&self) -> &VolumeNorm {
        &self.volume_norm
    }

    pub fn online(&self) -> &Network {
        &self.online
    }

    pub fn target(&self) -> &Network {
        &self.target
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    fn check_state(&self, state: &SelectorState) {
        assert_eq!(
            state.dim(),
            WINDOW_SLOTS * self.ensemble.len() + 2,
            "state dimension must be 10·|E|+2"
        );
    }

    fn q(net: &Network, state: &SelectorState) -> Vec<f64> {
        let ctx = state.context();
        net.predict(NetInput {
            sequence: &state.hit_matrix,
            context: &ctx,
        })
        .expect("state shape checked against the ensemble")
    }

    pub fn q_values(&self, state: &SelectorState) -> Vec<f64> {
        self.check_state(state);
        Self::q(&self.online, state)
    }

    /// Greedy (lowest index on ties) or epsilon-greedy.
    pub fn select_policy<R: Rng + ?Sized>(
        &self,
        state: &SelectorState,
        mode: SelectMode,
        rng: &mut R,
    ) -> usize {
        if let SelectMode::Train { epsilon } = mode {
            if rng.random::<f64>() < epsilon {
                return rng.random_range(0..self.ensemble.len());
            }
        }
        argmax(&self.q_values(state))
    }

    pub fn remember(&mut self, experience: Experience) {
        assert!(
            experience.action < self.ensemble.len(),
            "action out of range"
        );
        assert!(experience.reward.is_finite(), "non-finite reward");
        self.check_state(&experience.state);
        self.replay.push(experience);
    }

    /// One DDQN update on a uniformly sampled batch; `None` while the buffer
    /// holds less than one batch.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<f64> {
        let batch = self.config.batch_size;
        if self.replay.len() < batch {
            return None;
        }
        let indices = self.replay.sample_indices(batch, rng);
        let mut grads = self.online.zero_grads();
        let mut loss = 0.0;
        for i in indices {
            let e = self.replay.get(i);
            let y = ddqn_target(
                e.reward,
                self.config.gamma,
                &Self::q(&self.online, &e.next_state),
                &Self::q(&self.target, &e.next_state),
            );
            let ctx = e.state.context();
            let (q, cache) = self
                .online
                .forward(NetInput {
                    sequence: &e.state.hit_matrix,
                    context: &ctx,
                })
                .expect("stored states match the network");
            loss += huber(q[e.action], y, 1.0);
            let mut d = vec![0.0; q.len()];
            d[e.action] = huber_grad(q[e.action], y, 1.0) / batch as f64;
            self.online
                .backward(&cache, &d, &mut grads)
                .expect("cache from this network");
        }
        self.adam.step(self.online.params_mut(), &grads);
        self.train_steps += 1;
        if self.train_steps.is_multiple_of(self.config.target_update) {
            self.sync_target();
        }
        Some(loss / batch as f64)
    }

    pub fn sync_target(&mut self) {
        self.target.clone_from(&self.online);
    }

    /// Checkpoint: online and target networks, ensemble, normalisation,
    /// hyperparameters and any LSTM models the ensemble needs.
    pub fn to_bytes(&self, ctx: &PolicyContext) -> Result<Vec<u8>> {
        let meta = serde_json::to_value(AgentMeta {
            config: self.config.clone(),
            ensemble: self.ensemble.clone(),
            volume_norm: self.volume_norm,
            train_steps: self.train_steps,
            lstm_req: ctx.lstm_req.len(),
        })?;
        let mut bundle = Bundle::new(*MAGIC, meta);
        bundle.push("online", self.online.to_bytes()?);
        bundle.push("target", self.target.to_bytes()?);
        if let Some(m) = &ctx.lstm_int {
            bundle.push("lstm-int", m.to_bytes()?);
        }
        for (i, m) in ctx.lstm_req.iter().enumerate() {
            bundle.push(format!("lstm-req-{i}"), m.to_bytes()?);
        }
        bundle.to_bytes()
    }

    /// Inverse of [`DdqnAgent::to_bytes`]; the context carries the embedded
    /// LSTM models (no future oracle).
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, PolicyContext)> {
        let bundle = Bundle::from_bytes(bytes, MAGIC)?;
        let meta: AgentMeta = serde_json::from_value(bundle.meta.clone())?;
        let section = |name: &str| {
            bundle
                .section(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing section `{name}`")))
        };
        let online = Network::from_bytes(section("online")?)?;
        let target = Network::from_bytes(section("target")?)?;
        if online.output_size() != meta.ensemble.len() {
            return Err(Error::Checkpoint(
                "Q-network width does not match the ensemble".into(),
            ));
        }
        let mut ctx = PolicyContext::default();
        if let Some(bytes) = bundle.section("lstm-int") {
            ctx.lstm_int = Some(LstmIntModel::from_bytes(bytes)?.into());
        }
        for i in 0..meta.lstm_req {
            ctx.lstm_req
                .push(LstmReqModel::from_bytes(section(&format!("lstm-req-{i}"))?)?.into());
        }
        let mut agent = Self::from_parts(meta.ensemble, meta.config, meta.volume_norm, online);
        agent.target = target;
        agent.train_steps = meta.train_steps;
        Ok((agent, ctx))
    }

    pub fn save(&self, path: impl AsRef<Path>, ctx: &PolicyContext) -> Result<()> {
        std::fs::write(path, self.to_bytes(ctx)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PolicyContext)> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{LfuWindow, PolicyId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ensemble(n: usize) -> EnsembleConfig {
        EnsembleConfig::new((1..=n).map(PolicyId::Lru).collect())
    }

    #[test]
    fn ddqn_target_uses_online_argmax() {
        assert_eq!(
            ddqn_target(3.0, 0.9, &[1.0, 2.0], &[7.0, 2.0]),
            3.0 + 0.9 * 2.0
        );
        assert_eq!(ddqn_target(3.0, 0.0, &[1.0, 2.0], &[7.0, 2.0]), 3.0);
    }

    #[test]
    fn uniform_exploration() {
        let agent = DdqnAgent::new(
            ensemble(8),
            AgentConfig::default(),
            VolumeNorm { cap: 10.0 },
            1,
        )
        .unwrap();
        let state = SelectorState::zeros(8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 8];
        for _ in 0..10_000 {
            counts[agent.select_policy(&state, SelectMode::Train { epsilon: 1.0 }, &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e4 - 0.125).abs() <= 0.02, "{counts:?}");
        }
    }

    #[test]
    fn epsilon_schedule_is_linear_then_flat() {
        let cfg = AgentConfig::default();
        assert_eq!(cfg.epsilon(0, 100), 1.0);
        assert!((cfg.epsilon(25, 100) - 0.525).abs() < 1e-12);
        assert!((cfg.epsilon(50, 100) - 0.05).abs() < 1e-12);
        assert!((cfg.epsilon(99, 100) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip() {
        let ens = EnsembleConfig::new(vec![PolicyId::Lfu(LfuWindow::Infinite), PolicyId::Lru(1)]);
        let agent =
            DdqnAgent::new(ens, AgentConfig::default(), VolumeNorm { cap: 42.0 }, 3).unwrap();
        let bytes = agent.to_bytes(&PolicyContext::default()).unwrap();
        let (back, ctx) = DdqnAgent::from_bytes(&bytes).unwrap();
        assert_eq!(back.online(), agent.online());
        assert_eq!(back.ensemble(), agent.ensemble());
        assert_eq!(back.volume_norm().cap, 42.0);
        assert!(ctx.lstm_int.is_none());
        assert_eq!(back.to_bytes(&ctx).unwrap(), bytes);
    }

    #[test]
    fn train_step_waits_for_a_full_batch() {
        let mut agent = DdqnAgent::new(
            ensemble(2),
            AgentConfig::default(),
            VolumeNorm { cap: 1.0 },
            0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(agent.train_step(&mut rng).is_none());
        let s = SelectorState::zeros(2);
        for _ in 0..32 {
            agent.remember(Experience {
                state: s.clone(),
                action: 0,
                reward: 1.0,
                next_state: s.clone(),
            });
        }
        let before = agent.target().clone();
        assert!(agent.train_step(&mut rng).is_some());
        assert_ne!(agent.online(), &before);
        assert_eq!(agent.target(), &before);
    }
}
