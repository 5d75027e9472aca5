use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::trace::{ItemId, Request, Trace};
use crate::virtual_cache::{VirtualCacheBank, WINDOW_SLOTS};

pub const OVERLAP_WINDOW: usize = 1000;
pub const OVERLAP_TOP: usize = 100;
pub const VOLUME_SECONDS: f64 = 300.0;

/// Observation fed to the Q-network.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectorState {
    /// Row-major `WINDOW_SLOTS × |E|`, oldest slot first.
    pub hit_matrix: Vec<f64>,
    pub overlap: f64,
    pub volume: f64,
}

impl SelectorState {
    pub fn zeros(num_policies: usize) -> Self {
        Self {
            hit_matrix: vec![0.0; WINDOW_SLOTS * num_policies],
            overlap: 0.0,
            volume: 0.0,
        }
    }

    pub fn num_policies(&self) -> usize {
        self.hit_matrix.len() / WINDOW_SLOTS
    }

    pub fn dim(&self) -> usize {
        self.hit_matrix.len() + 2
    }

    pub fn context(&self) -> [f64; 2] {
        [self.overlap, self.volume]
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.hit_matrix.clone();
        v.extend(self.context());
        v
    }
}

/// `log1p(count) / log1p(cap)`, clipped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeNorm {
    pub cap: f64,
}

impl VolumeNorm {
    /// Cap = the largest number of requests in any five-minute window of `trace`.
    pub fn fit(trace: &Trace) -> Self {
        let reqs = trace.requests();
        let mut best = 0;
        let mut lo = 0;
        for hi in 0..reqs.len() {
            while reqs[hi].timestamp - reqs[lo].timestamp >= VOLUME_SECONDS {
                lo += 1;
            }
            best = best.max(hi - lo + 1);
        }
        Self {
            cap: (best as f64).max(1.0),
        }
    }

    pub fn normalize(&self, count: usize) -> f64 {
        ((count as f64).ln_1p() / self.cap.ln_1p()).clamp(0.0, 1.0)
    }
}

/// Trailing request history needed by the context features.
#[derive(Clone, Debug, Default)]
pub struct RequestLog {
    items: VecDeque<ItemId>,
    times: VecDeque<f64>,
    seen: u64,
}

impl RequestLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, request: &Request) {
        if self.items.len() == 2 * OVERLAP_WINDOW {
            self.items.pop_front();
        }
        self.items.push_back(request.item);
        self.volume(request.timestamp);
        self.times.push_back(request.timestamp);
        self.seen += 1;
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// Requests in `(now − 300 s, now]`.
    pub fn volume(&mut self, now: f64) -> usize {
        while self
            .times
            .front()
            .is_some_and(|t| *t <= now - VOLUME_SECONDS)
        {
            self.times.pop_front();
        }
        self.times.len()
    }

    /// Shared members of the top-100 sets of the two most recent
    /// 1000-request windows, divided by 100; 0 before 2000 requests.
    pub fn overlap(&self) -> f64 {
        if self.items.len() < 2 * OVERLAP_WINDOW {
            return 0.0;
        }
        let (older, newer): (Vec<ItemId>, Vec<ItemId>) = {
            let all: Vec<ItemId> = self.items.iter().copied().collect();
            (
                all[..OVERLAP_WINDOW].to_vec(),
                all[OVERLAP_WINDOW..].to_vec(),
            )
        };
        let a = top_items(&older, OVERLAP_TOP);
        let b = top_items(&newer, OVERLAP_TOP);
        let shared = a.iter().filter(|i| b.binary_search(i).is_ok()).count();
        shared as f64 / OVERLAP_TOP as f64
    }
}

/// The `k` most frequent items, frequency ties to the smaller id; sorted by id.
pub fn top_items(window: &[ItemId], k: usize) -> Vec<ItemId> {
    let mut counts: HashMap<ItemId, usize> = HashMap::new();
    for item in window {
        *counts.entry(*item).or_default() += 1;
    }
    let mut ranked: Vec<(ItemId, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut top: Vec<ItemId> = ranked.into_iter().take(k).map(|(i, _)| i).collect();
    top.sort_unstable();
    top
}

pub fn build_state(
    bank: &VirtualCacheBank,
    log: &mut RequestLog,
    now: f64,
    norm: &VolumeNorm,
) -> SelectorState {
    let volume = norm.normalize(log.volume(now));
    SelectorState {
        hit_matrix: bank.hit_matrix(),
        overlap: log.overlap(),
        volume,
    }
}
