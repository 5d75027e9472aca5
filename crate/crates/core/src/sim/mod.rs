//! End-to-end runs over a trace: a single policy, the trained selector, or the
//! oracle selector; plus the reports they produce.

mod report;

use std::cmp::Reverse;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{run_episode, DdqnAgent, EpisodeMode};
use crate::error::{Error, Result};
use crate::policy::{build_policy, serve_request, CachePolicy, CacheSet, PolicyContext, PolicyId};
use crate::trace::{derive_seed, FutureIndex, ItemId, Trace};
use crate::virtual_cache::EnsembleConfig;

pub use report::{compare, relative_improvement, Comparison, ComparisonRow, SimulationReport};

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub capacity: usize,
    /// Requests per instantaneous hit-ratio slot.
    pub slot_size: usize,
    /// Leading requests excluded from every metric.
    pub warmup: usize,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            slot_size: 500,
            warmup: 0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::config("cache capacity must be at least 1"));
        }
        if self.slot_size == 0 {
            return Err(Error::config("slot size must be at least 1"));
        }
        Ok(())
    }
}

/// Runs `policy` on a cold cache of `capacity`, calling `observer` after every
/// request with the request index, the cache contents and whether it hit.
pub fn replay_policy(
    trace: &Trace,
    capacity: usize,
    policy: &mut dyn CachePolicy,
    mut observer: impl FnMut(usize, &CacheSet, bool),
) -> Result<Vec<bool>> {
    if capacity == 0 {
        return Err(Error::config("cache capacity must be at least 1"));
    }
    let mut cache = CacheSet::new(capacity);
    let mut hits = Vec::with_capacity(trace.len());
    for (pos, req) in trace.requests().iter().enumerate() {
        policy.observe(pos, req);
        let served = serve_request(&mut cache, policy, pos, req)?;
        observer(pos, &cache, served.hit);
        hits.push(served.hit);
    }
    Ok(hits)
}

/// Context with the future oracle of `trace` added.
fn with_future(trace: &Trace, ctx: &PolicyContext) -> PolicyContext {
    PolicyContext {
        future: Some(Arc::new(FutureIndex::new(trace))),
        ..ctx.clone()
    }
}

/// Single-policy run; never builds virtual caches or an agent.
pub fn run_simulation(
    trace: &Trace,
    config: &SimulationConfig,
    policy: PolicyId,
    ctx: &PolicyContext,
) -> Result<SimulationReport> {
    config.validate()?;
    let ctx = if policy.needs_future() {
        with_future(trace, ctx)
    } else {
        ctx.clone()
    };
    let mut p = build_policy(policy, &ctx)?;
    let hits = replay_policy(trace, config.capacity, p.as_mut(), |_, _, _| {})?;
    Ok(SimulationReport::from_hits(
        trace,
        config,
        policy.to_string(),
        &hits,
        None,
    ))
}

/// Oracle selector: on every eviction, each ensemble policy proposes a victim
/// from the primary cache and the one requested farthest in the future (never
/// again first) is evicted. Ties fall back to insertion stamp, then item.
pub fn run_fif_selector(
    trace: &Trace,
    config: &SimulationConfig,
    ensemble: &EnsembleConfig,
    ctx: &PolicyContext,
) -> Result<SimulationReport> {
    config.validate()?;
    if ensemble.is_empty() {
        return Err(Error::config("the selector needs at least one policy"));
    }
    let future = Arc::new(FutureIndex::new(trace));
    let ctx = PolicyContext {
        future: Some(future.clone()),
        ..ctx.clone()
    };
    let mut policies = ensemble
        .policies
        .iter()
        .map(|id| build_policy(*id, &ctx))
        .collect::<Result<Vec<_>>>()?;
    let mut next_index: Vec<Option<usize>> = vec![None; trace.catalog_size()];
    let mut cache = CacheSet::new(config.capacity);
    let mut hits = Vec::with_capacity(trace.len());
    for (pos, req) in trace.requests().iter().enumerate() {
        for p in policies.iter_mut() {
            p.observe(pos, req);
        }
        let hit = cache.contains(req.item);
        if !hit {
            if cache.is_full() {
                let mut best: Option<(Reverse<usize>, u64, ItemId)> = None;
                for p in &policies {
                    let victim = p.choose_victim(&cache, req.timestamp)?.evicted;
                    let key = (
                        Reverse(next_index[victim.index()].unwrap_or(usize::MAX)),
                        cache.stamp(victim).expect("victim is cached"),
                        victim,
                    );
                    if best.is_none_or(|b| key < b) {
                        best = Some(key);
                    }
                }
                let (_, _, victim) = best.expect("ensemble is not empty");
                cache.remove(victim);
            }
            cache.insert(req.item, pos as u64);
        }
        next_index[req.item.index()] = future.next_index(pos);
        hits.push(hit);
    }
    Ok(SimulationReport::from_hits(
        trace,
        config,
        "fif-selector".into(),
        &hits,
        None,
    ))
}

/// Greedy run of a trained selector. Selection rates count decisions made
/// after the warm-up.
pub fn run_cec(
    trace: &Trace,
    config: &SimulationConfig,
    agent: &DdqnAgent,
    ctx: &PolicyContext,
) -> Result<SimulationReport> {
    config.validate()?;
    let mut agent = agent.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2));
    let out = run_episode(
        trace,
        config.capacity,
        &mut agent,
        ctx,
        EpisodeMode::Eval,
        &mut rng,
    )?;
    let n = agent.config().decision_interval;
    let mut counts = vec![0usize; agent.ensemble().len()];
    for d in &out.decisions {
        if d.decision_idx * n >= config.warmup {
            counts[d.selected] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let rates = agent
        .ensemble()
        .policies
        .iter()
        .zip(&counts)
        .map(|(id, c)| {
            (
                id.to_string(),
                if total == 0 {
                    0.0
                } else {
                    *c as f64 / total as f64
                },
            )
        })
        .collect();
    Ok(SimulationReport::from_hits(
        trace,
        config,
        "cec".into(),
        &out.hits,
        Some(rates),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::LfuWindow;
    use crate::trace::RawRequest;

    fn trace(items: &[&str]) -> Trace {
        Trace::from_raw(
            items
                .iter()
                .enumerate()
                .map(|(i, n)| RawRequest::new(i as f64, *n))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn large_cache_only_misses_compulsorily() {
        let t = trace(&["a", "b", "a", "c", "b", "a", "c", "d"]);
        let r = run_simulation(
            &t,
            &SimulationConfig::new(10),
            PolicyId::Lru(1),
            &PolicyContext::default(),
        )
        .unwrap();
        assert_eq!(r.hit_ratio, 1.0 - 4.0 / 8.0);
    }

    #[test]
    fn capacity_one_thrashes() {
        let t = trace(&["a", "b", "a", "b", "a", "b"]);
        for id in [
            PolicyId::Lru(1),
            PolicyId::Lfu(LfuWindow::Infinite),
            PolicyId::Fif,
        ] {
            let r = run_simulation(&t, &SimulationConfig::new(1), id, &PolicyContext::default())
                .unwrap();
            assert_eq!(r.hits, 0);
        }
    }

    #[test]
    fn zero_capacity_is_rejected() {
        let t = trace(&["a"]);
        assert!(run_simulation(
            &t,
            &SimulationConfig::new(0),
            PolicyId::Fif,
            &PolicyContext::default()
        )
        .is_err());
    }

    #[test]
    fn selector_with_fif_equals_fif() {
        let t = trace(&["a", "b", "c", "a", "d", "b", "a", "c", "d", "e", "a", "b"]);
        let cfg = SimulationConfig::new(2);
        let fif = run_simulation(&t, &cfg, PolicyId::Fif, &PolicyContext::default()).unwrap();
        let ens = EnsembleConfig::new(vec![PolicyId::Lru(1), PolicyId::Fif]);
        let sel = run_fif_selector(&t, &cfg, &ens, &PolicyContext::default()).unwrap();
        assert_eq!(sel.hits, fif.hits);
    }
}
