use std::collections::VecDeque;

use super::{CachePolicy, PolicyId};
use crate::trace::{ItemId, Request};

/// History window of LFU-Δ, counted in global requests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LfuWindow {
    Requests(u64),
    Infinite,
}

/// LFU over the last Δ requests: a ring of the window's item ids plus
/// per-item counters, O(1) per request.
#[derive(Clone, Debug)]
pub struct LfuDeltaPolicy {
    window: LfuWindow,
    recent: VecDeque<ItemId>,
    counts: Vec<u64>,
}

impl LfuDeltaPolicy {
    pub fn new(window: LfuWindow) -> Self {
        Self {
            window,
            recent: VecDeque::new(),
            counts: Vec::new(),
        }
    }

    pub fn window(&self) -> LfuWindow {
        self.window
    }

    pub fn count(&self, item: ItemId) -> u64 {
        self.counts.get(item.index()).copied().unwrap_or(0)
    }
}

impl CachePolicy for LfuDeltaPolicy {
    fn id(&self) -> PolicyId {
        PolicyId::Lfu(self.window)
    }

    fn observe(&mut self, _position: usize, request: &Request) {
        let idx = request.item.index();
        if self.counts.len() <= idx {
            self.counts.resize(idx + 1, 0);
        }
        self.counts[idx] += 1;
        if let LfuWindow::Requests(delta) = self.window {
            self.recent.push_back(request.item);
            if self.recent.len() as u64 > delta {
                let old = self.recent.pop_front().expect("window is non-empty");
                self.counts[old.index()] -= 1;
            }
        }
    }

    fn score(&self, item: ItemId, _now: f64) -> f64 {
        self.count(item) as f64
    }

    fn clone_box(&self) -> Box<dyn CachePolicy> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(t: f64, item: u32) -> Request {
        Request {
            timestamp: t,
            item: ItemId(item),
            watch_duration: None,
        }
    }

    #[test]
    fn window_drops_old_requests() {
        let mut p = LfuDeltaPolicy::new(LfuWindow::Requests(3));
        for (i, item) in [0, 0, 1, 2, 0].iter().enumerate() {
            p.observe(i, &req(i as f64, *item));
        }
        // window holds [1, 2, 0]
        assert_eq!(p.score(ItemId(0), 0.0), 1.0);
        assert_eq!(p.score(ItemId(1), 0.0), 1.0);
        assert_eq!(p.score(ItemId(7), 0.0), 0.0);
    }

    #[test]
    fn observing_never_lowers_the_requested_items_score() {
        let mut p = LfuDeltaPolicy::new(LfuWindow::Requests(2));
        p.observe(0, &req(0.0, 4));
        p.observe(1, &req(1.0, 4));
        let before = p.score(ItemId(4), 1.0);
        p.observe(2, &req(2.0, 4));
        assert!(p.score(ItemId(4), 2.0) >= before);
    }
}
