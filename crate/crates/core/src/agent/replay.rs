use rand::Rng;

use super::SelectorState;

#[derive(Clone, Debug, PartialEq)]
pub struct Experience {
    pub state: SelectorState,
    pub action: usize,
    pub reward: f64,
    pub next_state: SelectorState,
}

/// Fixed-capacity FIFO of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Experience>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(e);
        } else {
            self.items[self.next] = e;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, index: usize) -> &Experience {
        &self.items[index]
    }

    /// `k` distinct indices, uniformly.
    pub fn sample_indices<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<usize> {
        rand::seq::index::sample(rng, self.items.len(), k).into_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(reward: f64) -> Experience {
        let s = SelectorState::zeros(2);
        Experience {
            state: s.clone(),
            action: 0,
            reward,
            next_state: s,
        }
    }

    #[test]
    fn oldest_entries_are_overwritten() {
        let mut buf = ReplayBuffer::new(3);
        for r in 0..5 {
            buf.push(exp(r as f64));
        }
        let mut rewards: Vec<f64> = (0..3).map(|i| buf.get(i).reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }
}
