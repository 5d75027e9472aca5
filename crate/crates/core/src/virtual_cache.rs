//! Key-only shadow caches, one per ensemble policy, fed the same request
//! stream as the primary cache. They measure what each policy would have hit
//! and never influence the primary.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{build_policy, serve_request, CachePolicy, CacheSet, PolicyContext, PolicyId};
use crate::trace::{ItemId, Request};

pub const SLOT_REQUESTS: usize = 100;
pub const WINDOW_SLOTS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub policies: Vec<PolicyId>,
    /// Requests between forced resynchronizations to the primary cache.
    pub sync_period: usize,
}

impl EnsembleConfig {
    pub fn new(policies: Vec<PolicyId>) -> Self {
        Self {
            policies,
            sync_period: 10_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.policies.len() < 2 {
            return Err(Error::config("an ensemble needs at least two policies"));
        }
        let unique: BTreeSet<String> = self.policies.iter().map(|p| p.to_string()).collect();
        if unique.len() != self.policies.len() {
            return Err(Error::config("ensemble policies must be unique"));
        }
        if self.sync_period == 0 {
            return Err(Error::config("sync period must be at least 1"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    /// Reads an ensemble file: a JSON list of policy ids.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let policies: Vec<PolicyId> = serde_json::from_str(&text)?;
        let cfg = Self::new(policies);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Hit ratios of the last [`WINDOW_SLOTS`] completed slots of
/// [`SLOT_REQUESTS`] requests each.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HitWindow {
    ring: std::collections::VecDeque<f64>,
    slot_hits: usize,
    slot_requests: usize,
}

impl HitWindow {
    /// Returns the finished slot's ratio when this request completes a slot.
    pub fn record(&mut self, hit: bool) -> Option<f64> {
        self.slot_hits += usize::from(hit);
        self.slot_requests += 1;
        if self.slot_requests < SLOT_REQUESTS {
            return None;
        }
        let ratio = self.slot_hits as f64 / SLOT_REQUESTS as f64;
        if self.ring.len() == WINDOW_SLOTS {
            self.ring.pop_front();
        }
        self.ring.push_back(ratio);
        self.slot_hits = 0;
        self.slot_requests = 0;
        Some(ratio)
    }

    /// Oldest first, zero-padded at the front before warm-up.
    pub fn ratios(&self) -> [f64; WINDOW_SLOTS] {
        let mut out = [0.0; WINDOW_SLOTS];
        let pad = WINDOW_SLOTS - self.ring.len();
        for (i, r) in self.ring.iter().enumerate() {
            out[pad + i] = *r;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VirtualOutcome {
    pub hit: bool,
    /// Item the policy evicted from its virtual cache, if any.
    pub candidate: Option<ItemId>,
}

#[derive(Clone)]
pub struct VirtualCacheBank {
    config: EnsembleConfig,
    policies: Vec<Box<dyn CachePolicy>>,
    caches: Vec<CacheSet>,
    windows: Vec<HitWindow>,
    hits: Vec<u64>,
    processed: u64,
    since_sync: usize,
    /// Ratio of every completed slot, per policy.
    slot_log: Vec<Vec<f64>>,
}

impl VirtualCacheBank {
    pub fn new(config: EnsembleConfig, capacity: usize, ctx: &PolicyContext) -> Result<Self> {
        config.validate()?;
        let policies = config
            .policies
            .iter()
            .map(|id| build_policy(*id, ctx))
            .collect::<Result<Vec<_>>>()?;
        Self::from_policies(config, capacity, policies)
    }

    /// Builds a bank from ready-made policy instances (one per ensemble entry).
    pub fn from_policies(
        config: EnsembleConfig,
        capacity: usize,
        policies: Vec<Box<dyn CachePolicy>>,
    ) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("cache capacity must be at least 1"));
        }
        if policies.len() != config.len() || policies.is_empty() {
            return Err(Error::config("one policy instance per ensemble entry"));
        }
        let n = policies.len();
        Ok(Self {
            config,
            policies,
            caches: vec![CacheSet::new(capacity); n],
            windows: vec![HitWindow::default(); n],
            hits: vec![0; n],
            processed: 0,
            since_sync: 0,
            slot_log: Vec::new(),
        })
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn policy(&self, index: usize) -> &dyn CachePolicy {
        self.policies[index].as_ref()
    }

    pub fn cache(&self, index: usize) -> &CacheSet {
        &self.caches[index]
    }

    pub fn hits(&self, index: usize) -> u64 {
        self.hits[index]
    }

    pub fn misses(&self, index: usize) -> u64 {
        self.processed - self.hits[index]
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    /// True once `sync_period` requests have passed since the last sync.
    pub fn sync_due(&self) -> bool {
        self.since_sync >= self.config.sync_period
    }

    /// Feeds request number `position` to every policy and its virtual cache.
    pub fn process_request(
        &mut self,
        position: usize,
        request: &Request,
    ) -> Result<Vec<VirtualOutcome>> {
        let mut outcomes = Vec::with_capacity(self.policies.len());
        let mut completed = Vec::new();
        for i in 0..self.policies.len() {
            self.policies[i].observe(position, request);
            let served = serve_request(
                &mut self.caches[i],
                self.policies[i].as_ref(),
                position,
                request,
            )?;
            self.hits[i] += u64::from(served.hit);
            if let Some(ratio) = self.windows[i].record(served.hit) {
                completed.push(ratio);
            }
            outcomes.push(VirtualOutcome {
                hit: served.hit,
                candidate: served.eviction.map(|e| e.evicted),
            });
        }
        if !completed.is_empty() {
            self.slot_log.push(completed);
        }
        self.processed += 1;
        self.since_sync += 1;
        Ok(outcomes)
    }

    /// Overwrites every virtual cache's membership (and insertion stamps)
    /// with the primary's. Policy bookkeeping and hit windows are kept.
    pub fn sync_to_primary(&mut self, primary: &CacheSet) {
        for cache in &mut self.caches {
            cache.copy_membership(primary);
        }
        self.since_sync = 0;
    }

    /// `WINDOW_SLOTS × |E|` ratios, rows oldest to newest, columns in ensemble order.
    pub fn hit_ratio_features(&self) -> Vec<[f64; WINDOW_SLOTS]> {
        self.windows.iter().map(HitWindow::ratios).collect()
    }

    /// Row-major `WINDOW_SLOTS × |E|` matrix: one row per slot.
    pub fn hit_matrix(&self) -> Vec<f64> {
        let cols = self.hit_ratio_features();
        let mut m = Vec::with_capacity(WINDOW_SLOTS * cols.len());
        for slot in 0..WINDOW_SLOTS {
            m.extend(cols.iter().map(|c| c[slot]));
        }
        m
    }

    /// Diagnostics dump: `slot,policy,hit_ratio` for every completed slot.
    pub fn write_slot_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "policy", "hit_ratio"])
            .map_err(csv_err)?;
        for (slot, ratios) in self.slot_log.iter().enumerate() {
            for (id, r) in self.config.policies.iter().zip(ratios) {
                w.write_record([slot.to_string(), id.to_string(), r.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
