//! Score-based eviction.
//!
//! Every policy maps a cached item to a caching score; on a miss with a full
//! cache the item with the lowest score is evicted. Ties go to the item whose
//! latest insertion is oldest, then to the smallest [`ItemId`] (which is the
//! lexicographically smallest name).
//!
//! Policies only observe the request stream; the cache membership lives in a
//! separate [`CacheSet`], so one policy instance can score any number of
//! caches fed by the same stream.

mod cache;
mod fif;
mod lfu;
mod lru;
pub mod scores;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::lstm::{LstmIntModel, LstmIntPolicy, LstmReqModel, LstmReqPolicy};
use crate::trace::{FutureIndex, ItemId, Request};

pub use cache::{serve_request, CacheSet, ServeOutcome};
pub use fif::FifPolicy;
pub use lfu::{LfuDeltaPolicy, LfuWindow};
pub use lru::LruNPolicy;
pub use scores::{fif_score, lfu_delta_score, lru_n_score};

/// A caching score for one item; higher means more worth keeping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyScore {
    pub item: ItemId,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvictionDecision {
    pub evicted: ItemId,
    pub score: f64,
    /// Scores of every cached item, when requested for diagnostics.
    pub snapshot: Option<Vec<PolicyScore>>,
}

pub trait CachePolicy: Send + Sync {
    fn id(&self) -> PolicyId;

    /// Records request number `position` (0-based index into the trace).
    /// Must be called for every request, before any eviction it triggers.
    fn observe(&mut self, position: usize, request: &Request);

    fn score(&self, item: ItemId, now: f64) -> f64;

    fn choose_victim(&self, cache: &CacheSet, now: f64) -> Result<EvictionDecision> {
        pick_eviction(cache, |item| self.score(item, now))
    }

    fn clone_box(&self) -> Box<dyn CachePolicy>;
}

impl Clone for Box<dyn CachePolicy> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Evicts the cached item with the minimum score.
pub fn pick_eviction(
    cache: &CacheSet,
    mut scorer: impl FnMut(ItemId) -> f64,
) -> Result<EvictionDecision> {
    let mut best: Option<(f64, u64, ItemId)> = None;
    for (item, stamp) in cache.iter() {
        let score = scorer(item);
        debug_assert!(!score.is_nan(), "NaN caching score for {item}");
        let key = (score, stamp, item);
        if best.is_none_or(|b| eviction_order(&key, &b).is_lt()) {
            best = Some(key);
        }
    }
    let (score, _, evicted) =
        best.ok_or_else(|| Error::usage("cannot evict from an empty cache"))?;
    Ok(EvictionDecision {
        evicted,
        score,
        snapshot: None,
    })
}

/// Same as [`pick_eviction`] but keeps the full score snapshot, sorted by item.
pub fn pick_eviction_with_snapshot(
    cache: &CacheSet,
    mut scorer: impl FnMut(ItemId) -> f64,
) -> Result<EvictionDecision> {
    let mut snapshot: Vec<PolicyScore> = cache
        .iter()
        .map(|(item, _)| PolicyScore {
            item,
            score: scorer(item),
        })
        .collect();
    snapshot.sort_by_key(|s| s.item);
    let mut decision = pick_eviction(cache, |item| {
        snapshot[snapshot.binary_search_by_key(&item, |s| s.item).unwrap()].score
    })?;
    decision.snapshot = Some(snapshot);
    Ok(decision)
}

/// `(score, insertion stamp, item)` compared lexicographically; `-0.0 == 0.0`.
pub(crate) fn eviction_order(a: &(f64, u64, ItemId), b: &(f64, u64, ItemId)) -> std::cmp::Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.1.cmp(&b.1))
        .then(a.2.cmp(&b.2))
}

/// Policy identifiers as they appear in configuration files and reports:
/// `lfu-inf`, `lfu-<Δ>`, `lru-<n>`, `fif`, `lstm-int`, `lstm-req-<b seconds>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolicyId {
    Lfu(LfuWindow),
    Lru(usize),
    Fif,
    LstmInt,
    LstmReq(f64),
}

impl PolicyId {
    pub fn needs_future(&self) -> bool {
        matches!(self, PolicyId::Fif)
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyId::Lfu(LfuWindow::Infinite) => write!(f, "lfu-inf"),
            PolicyId::Lfu(LfuWindow::Requests(d)) => write!(f, "lfu-{d}"),
            PolicyId::Lru(n) => write!(f, "lru-{n}"),
            PolicyId::Fif => write!(f, "fif"),
            PolicyId::LstmInt => write!(f, "lstm-int"),
            PolicyId::LstmReq(b) => write!(f, "lstm-req-{b}"),
        }
    }
}

impl FromStr for PolicyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("unknown policy id `{s}`"));
        if s == "fif" {
            return Ok(PolicyId::Fif);
        }
        if s == "lstm-int" {
            return Ok(PolicyId::LstmInt);
        }
        if s == "lfu-inf" {
            return Ok(PolicyId::Lfu(LfuWindow::Infinite));
        }
        if let Some(b) = s.strip_prefix("lstm-req-") {
            let b: f64 = b.parse().map_err(|_| bad())?;
            if !b.is_finite() || b <= 0.0 {
                return Err(bad());
            }
            return Ok(PolicyId::LstmReq(b));
        }
        if let Some(d) = s.strip_prefix("lfu-") {
            let d: u64 = d.parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(PolicyId::Lfu(LfuWindow::Requests(d)));
        }
        if let Some(n) = s.strip_prefix("lru-") {
            let n: usize = n.parse().map_err(|_| bad())?;
            if n == 0 {
                return Err(bad());
            }
            return Ok(PolicyId::Lru(n));
        }
        Err(bad())
    }
}

impl Serialize for PolicyId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PolicyId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Shared, read-only resources some policies need: the future oracle for
/// `fif` and trained models for the LSTM policies.
#[derive(Clone, Default)]
pub struct PolicyContext {
    pub future: Option<Arc<FutureIndex>>,
    pub lstm_int: Option<Arc<LstmIntModel>>,
    pub lstm_req: Vec<Arc<LstmReqModel>>,
}

impl PolicyContext {
    pub fn with_future(future: Arc<FutureIndex>) -> Self {
        Self {
            future: Some(future),
            ..Self::default()
        }
    }
}

pub fn build_policy(id: PolicyId, ctx: &PolicyContext) -> Result<Box<dyn CachePolicy>> {
    Ok(match id {
        PolicyId::Lfu(w) => Box::new(LfuDeltaPolicy::new(w)),
        PolicyId::Lru(n) => Box::new(LruNPolicy::new(n)?),
        PolicyId::Fif => {
            let future = ctx
                .future
                .clone()
                .ok_or_else(|| Error::config("`fif` needs the full trace as a future oracle"))?;
            Box::new(FifPolicy::new(future))
        }
        PolicyId::LstmInt => {
            let model = ctx
                .lstm_int
                .clone()
                .ok_or_else(|| Error::config("`lstm-int` needs a trained LSTM-Int model"))?;
            Box::new(LstmIntPolicy::new(model))
        }
        PolicyId::LstmReq(b) => {
            let model = ctx
                .lstm_req
                .iter()
                .find(|m| m.slot_seconds() == b)
                .cloned()
                .ok_or_else(|| {
                    Error::config(format!(
                        "`lstm-req-{b}` needs a trained LSTM-Req model with b={b}"
                    ))
                })?;
            Box::new(LstmReqPolicy::new(model))
        }
    })
}
