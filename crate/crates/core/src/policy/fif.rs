use std::cmp::Reverse;
use std::sync::Arc;

use super::{CachePolicy, CacheSet, EvictionDecision, PolicyId};
use crate::error::{Error, Result};
use crate::trace::{FutureIndex, ItemId, Request};

/// Farthest-in-Future (Belady) with access to the whole trace.
#[derive(Clone, Debug)]
pub struct FifPolicy {
    future: Arc<FutureIndex>,
    next: Vec<Option<usize>>,
}

impl FifPolicy {
    pub fn new(future: Arc<FutureIndex>) -> Self {
        Self {
            future,
            next: Vec::new(),
        }
    }

    /// Trace index of the item's next request after the last observed one.
    pub fn next_index(&self, item: ItemId) -> Option<usize> {
        self.next.get(item.index()).copied().flatten()
    }
}

impl CachePolicy for FifPolicy {
    fn id(&self) -> PolicyId {
        PolicyId::Fif
    }

    fn observe(&mut self, position: usize, request: &Request) {
        let idx = request.item.index();
        if self.next.len() <= idx {
            self.next.resize(idx + 1, None);
        }
        self.next[idx] = self.future.next_index(position);
    }

    fn score(&self, item: ItemId, now: f64) -> f64 {
        super::fif_score(self.next_index(item).map(|j| self.future.time(j)), now)
    }

    /// Equal timestamps are resolved by trace order so the choice is exactly
    /// Belady's.
    fn choose_victim(&self, cache: &CacheSet, now: f64) -> Result<EvictionDecision> {
        let key = |item: ItemId, stamp: u64| {
            let next = self.next_index(item);
            // farther next request first; never-again items first of all
            (Reverse(next.map_or(usize::MAX, |j| j)), stamp, item)
        };
        let (_, _, evicted) = cache
            .iter()
            .map(|(item, stamp)| key(item, stamp))
            .min()
            .ok_or_else(|| Error::usage("cannot evict from an empty cache"))?;
        Ok(EvictionDecision {
            evicted,
            score: self.score(evicted, now),
            snapshot: None,
        })
    }

    fn clone_box(&self) -> Box<dyn CachePolicy> {
        Box::new(self.clone())
    }
}
