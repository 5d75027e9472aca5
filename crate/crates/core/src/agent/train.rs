use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    build_state, fif_rank_reward, AgentConfig, CandidateSource, DdqnAgent, Experience, RequestLog,
    SelectMode, SelectorState, VolumeNorm,
};
use crate::error::{Error, Result};
use crate::policy::{serve_request, CacheSet, PolicyContext, PolicyId};
use crate::trace::{derive_seed, FutureIndex, ItemId, Trace};
use crate::virtual_cache::{EnsembleConfig, VirtualCacheBank};

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRecord {
    pub decision_idx: usize,
    pub epsilon: f64,
    /// Sum of the selected policy's FIF-rank scores over the decision window.
    pub reward: f64,
    pub loss: Option<f64>,
    pub selected: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpisodeMode {
    /// Epsilon-greedy with learning; `first_decision` indexes into an
    /// annealing schedule of `total_decisions`.
    Train {
        first_decision: usize,
        total_decisions: usize,
    },
    Eval,
}

#[derive(Clone, Debug, Default)]
pub struct EpisodeOutcome {
    /// Primary-cache hit per request.
    pub hits: Vec<bool>,
    pub decisions: Vec<DecisionRecord>,
}

impl EpisodeOutcome {
    /// Share of decisions that picked each policy.
    pub fn selection_rates(&self, num_policies: usize) -> Vec<f64> {
        let mut counts = vec![0usize; num_policies];
        for d in &self.decisions {
            counts[d.selected] += 1;
        }
        let total = self.decisions.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / total).collect()
    }
}

/// One pass of the CEC loop over `trace`: the primary cache is driven by the
/// selected policy while every ensemble policy runs its virtual cache; the
/// selector is consulted every `decision_interval` requests.
pub fn run_episode(
    trace: &Trace,
    capacity: usize,
    agent: &mut DdqnAgent,
    ctx: &PolicyContext,
    mode: EpisodeMode,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeOutcome> {
    let cfg = agent.config().clone();
    let n = cfg.decision_interval;
    let num_policies = agent.ensemble().len();
    let future = Arc::new(FutureIndex::new(trace));
    let ctx = PolicyContext {
        future: Some(future.clone()),
        ..ctx.clone()
    };
    let mut bank = VirtualCacheBank::new(agent.ensemble().clone(), capacity, &ctx)?;
    let mut primary = CacheSet::new(capacity);
    let mut log = RequestLog::new();
    let mut next_index: Vec<Option<usize>> = vec![None; trace.catalog_size()];
    let reward_scale = 1.0 / (n as f64 * num_policies.saturating_sub(1).max(1) as f64);
    let norm = *agent.volume_norm();

    let mut outcome = EpisodeOutcome {
        hits: Vec::with_capacity(trace.len()),
        decisions: Vec::new(),
    };
    let mut pending: Option<(SelectorState, usize, f64)> = None;
    let mut acc = vec![0.0; num_policies];
    let mut action = 0;
    let mut last_time = trace.start_time();

    let close_decision = |agent: &mut DdqnAgent,
                          pending: (SelectorState, usize, f64),
                          acc: &[f64],
                          next: Option<&SelectorState>,
                          rng: &mut ChaCha8Rng,
                          outcome: &mut EpisodeOutcome| {
        let (state, selected, epsilon) = pending;
        let mut loss = None;
        if let (EpisodeMode::Train { .. }, Some(next)) = (mode, next) {
            let actions: Vec<usize> = if cfg.counterfactual {
                (0..num_policies).collect()
            } else {
                vec![selected]
            };
            for a in actions {
                agent.remember(Experience {
                    state: state.clone(),
                    action: a,
                    reward: acc[a] * reward_scale,
                    next_state: next.clone(),
                });
            }
            for _ in 0..cfg.train_steps_per_decision {
                if let Some(l) = agent.train_step(rng) {
                    loss = Some(l);
                }
            }
        }
        outcome.decisions.push(DecisionRecord {
            decision_idx: outcome.decisions.len(),
            epsilon,
            reward: acc[selected],
            loss,
            selected,
        });
    };

    for (pos, req) in trace.requests().iter().enumerate() {
        if pos % n == 0 {
            let state = build_state(&bank, &mut log, last_time, &norm);
            if let Some(p) = pending.take() {
                close_decision(agent, p, &acc, Some(&state), rng, &mut outcome);
            }
            let (select, epsilon) = match mode {
                EpisodeMode::Train {
                    first_decision,
                    total_decisions,
                } => {
                    let eps =
                        cfg.epsilon(first_decision + outcome.decisions.len(), total_decisions);
                    (SelectMode::Train { epsilon: eps }, eps)
                }
                EpisodeMode::Eval => (SelectMode::Eval, 0.0),
            };
            action = agent.select_policy(&state, select, rng);
            pending = Some((state, action, epsilon));
            acc.iter_mut().for_each(|a| *a = 0.0);
        }

        log.push(req);
        let virtual_outcomes = bank.process_request(pos, req)?;
        let evicts = !primary.contains(req.item) && primary.is_full();
        let candidates: Vec<Option<ItemId>> = match (evicts, cfg.reward_candidates) {
            (false, _) => Vec::new(),
            (true, CandidateSource::Virtual) => {
                virtual_outcomes.iter().map(|o| o.candidate).collect()
            }
            (true, CandidateSource::Primary) => (0..num_policies)
                .map(|i| {
                    bank.policy(i)
                        .choose_victim(&primary, req.timestamp)
                        .map(|d| Some(d.evicted))
                })
                .collect::<Result<_>>()?,
        };
        let served = serve_request(&mut primary, bank.policy(action), pos, req)?;
        if evicts {
            let scores = fif_rank_reward(
                &candidates,
                |item| next_index[item.index()].map(|j| future.time(j)),
                req.timestamp,
            );
            for (a, s) in acc.iter_mut().zip(scores) {
                *a += s;
            }
        }
        next_index[req.item.index()] = future.next_index(pos);
        outcome.hits.push(served.hit);
        last_time = req.timestamp;
        if bank.sync_due() {
            bank.sync_to_primary(&primary);
        }
    }
    if let Some(p) = pending.take() {
        close_decision(agent, p, &acc, None, rng, &mut outcome);
    }
    Ok(outcome)
}

/// Trains a fresh agent on `trace`. Returns the agent and the per-decision
/// training log of every episode.
pub fn train_cec(
    trace: &Trace,
    capacity: usize,
    ensemble: EnsembleConfig,
    ctx: &PolicyContext,
    config: AgentConfig,
    seed: u64,
) -> Result<(DdqnAgent, Vec<DecisionRecord>)> {
    config.validate()?;
    let per_episode = trace.len().div_ceil(config.decision_interval);
    if trace.len() / config.decision_interval < 100 {
        return Err(Error::config(format!(
            "training needs at least 100 decisions ({} requests); trace has {}",
            100 * config.decision_interval,
            trace.len()
        )));
    }
    let norm = VolumeNorm::fit(trace);
    let episodes = config.episodes;
    let mut agent = DdqnAgent::new(ensemble, config, norm, derive_seed(seed, 0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let total = per_episode * episodes;
    let mut records = Vec::with_capacity(total);
    for ep in 0..episodes {
        let mode = EpisodeMode::Train {
            first_decision: ep * per_episode,
            total_decisions: total,
        };
        let out = run_episode(trace, capacity, &mut agent, ctx, mode, &mut rng)?;
        let offset = records.len();
        records.extend(out.decisions.into_iter().map(|mut d| {
            d.decision_idx += offset;
            d
        }));
        log::info!(
            "episode {}/{episodes}: hit ratio {:.4}",
            ep + 1,
            out.hits.iter().filter(|h| **h).count() as f64 / out.hits.len().max(1) as f64
        );
    }
    Ok((agent, records))
}

/// CSV `decision_idx,epsilon,reward,loss,selected_policy`; loss is empty
/// for decisions without a train step.
pub fn write_training_log<W: Write>(
    records: &[DecisionRecord],
    policies: &[PolicyId],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record([
        "decision_idx",
        "epsilon",
        "reward",
        "loss",
        "selected_policy",
    ])
    .map_err(io)?;
    for r in records {
        w.write_record([
            r.decision_idx.to_string(),
            r.epsilon.to_string(),
            r.reward.to_string(),
            r.loss.map(|l| l.to_string()).unwrap_or_default(),
            policies[r.selected].to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
