use std::collections::VecDeque;

use super::{CachePolicy, PolicyId};
use crate::error::{Error, Result};
use crate::trace::{ItemId, Request};

/// LRU-n: score is minus the time elapsed since the item's n-th most recent
/// request (fewer requests: the oldest one). Keeps the last n arrival times
/// per item.
#[derive(Clone, Debug)]
pub struct LruNPolicy {
    n: usize,
    recent: Vec<VecDeque<f64>>,
}

impl LruNPolicy {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("LRU-n needs n >= 1"));
        }
        Ok(Self {
            n,
            recent: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

impl CachePolicy for LruNPolicy {
    fn id(&self) -> PolicyId {
        PolicyId::Lru(self.n)
    }

    fn observe(&mut self, _position: usize, request: &Request) {
        let idx = request.item.index();
        if self.recent.len() <= idx {
            self.recent.resize_with(idx + 1, VecDeque::new);
        }
        let ring = &mut self.recent[idx];
        if ring.len() == self.n {
            ring.pop_front();
        }
        ring.push_back(request.timestamp);
    }

    fn score(&self, item: ItemId, now: f64) -> f64 {
        match self.recent.get(item.index()).and_then(|r| r.front()) {
            Some(oldest) => (oldest - now) + 0.0,
            None => f64::NEG_INFINITY,
        }
    }

    fn clone_box(&self) -> Box<dyn CachePolicy> {
        Box::new(self.clone())
    }
}
