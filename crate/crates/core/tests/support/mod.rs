//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};

use cec_core::nn::{NetInput, Network};
use cec_core::trace::{
    generate_from_spec, zipf_weights, GeneratorSpec, ItemId, PopularityShape, ShotNoiseContent,
    Trace,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Zipf IRM plus a shot-noise overlay, cut to exactly `len` requests.
pub fn mixed_trace(seed: u64, len: usize) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zipf_len = len * 3 / 4;
    let horizon = zipf_len as f64;
    let contents = (0..(len / 25))
        .map(|i| {
            ShotNoiseContent::new(
                rng.random::<f64>() * horizon * 0.9,
                rng.random_range(10.0..50.0),
                PopularityShape::Exponential {
                    mean_lifespan: rng.random_range(20.0..400.0),
                },
            )
            .named(format!("s{i:05}"))
        })
        .collect();
    let spec = GeneratorSpec::Merge {
        parts: vec![
            GeneratorSpec::ZipfIrm {
                catalog_size: rng.random_range(100..400),
                exponent: rng.random_range(0.6..1.2),
                num_requests: zipf_len,
                mean_rate: 1.0,
                prefix: "z".into(),
            },
            GeneratorSpec::ShotNoise { horizon, contents },
        ],
    };
    let t = generate_from_spec(&spec, seed).unwrap();
    assert!(t.len() >= len, "generated {} < {len}", t.len());
    t.slice(0, len).unwrap()
}

/// Small IRM trace with a random catalog, length and skew.
pub fn small_zipf_trace(seed: u64, max_len: usize) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = GeneratorSpec::ZipfIrm {
        catalog_size: rng.random_range(5..80),
        exponent: rng.random_range(0.3..1.3),
        num_requests: rng.random_range(max_len / 4..=max_len),
        mean_rate: 1.0,
        prefix: String::new(),
    };
    generate_from_spec(&spec, seed).unwrap()
}

/// Sum of the `k` largest Zipf probabilities.
pub fn zipf_top_mass(n: usize, s: f64, k: usize) -> f64 {
    let h: f64 = (1..=n).map(|i| (i as f64).powf(-s)).sum();
    (1..=k).map(|i| (i as f64).powf(-s)).sum::<f64>() / h
}

/// Textbook LFU with lifetime counts; ties go to the earliest admission,
/// then the smaller id.
pub struct ClassicLfu {
    capacity: usize,
    counts: HashMap<ItemId, u64>,
    cache: Vec<(ItemId, usize)>,
}

impl ClassicLfu {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            counts: HashMap::new(),
            cache: Vec::new(),
        }
    }

    pub fn request(&mut self, position: usize, item: ItemId) -> bool {
        *self.counts.entry(item).or_default() += 1;
        if self.cache.iter().any(|(i, _)| *i == item) {
            return true;
        }
        if self.cache.len() == self.capacity {
            let victim = self
                .cache
                .iter()
                .enumerate()
                .min_by_key(|(_, (i, admitted))| (self.counts[i], *admitted, *i))
                .map(|(k, _)| k)
                .unwrap();
            self.cache.swap_remove(victim);
        }
        self.cache.push((item, position));
        false
    }

    pub fn contents(&self) -> BTreeSet<ItemId> {
        self.cache.iter().map(|(i, _)| *i).collect()
    }
}

/// Textbook LRU as a recency list (front = least recent).
pub struct ClassicLru {
    capacity: usize,
    order: VecDeque<ItemId>,
}

impl ClassicLru {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            order: VecDeque::new(),
        }
    }

    pub fn request(&mut self, item: ItemId) -> bool {
        if let Some(k) = self.order.iter().position(|i| *i == item) {
            self.order.remove(k);
            self.order.push_back(item);
            return true;
        }
        if self.order.len() == self.capacity {
            self.order.pop_front();
        }
        self.order.push_back(item);
        false
    }

    pub fn contents(&self) -> BTreeSet<ItemId> {
        self.order.iter().copied().collect()
    }
}

/// Belady's algorithm by forward scan, independent of the crate's indices.
pub fn belady_hits(trace: &Trace, capacity: usize) -> usize {
    let reqs = trace.requests();
    let mut cache: Vec<ItemId> = Vec::new();
    let mut hits = 0;
    for (pos, r) in reqs.iter().enumerate() {
        if cache.contains(&r.item) {
            hits += 1;
            continue;
        }
        if cache.len() == capacity {
            let next_use = |item: ItemId| {
                reqs[pos + 1..]
                    .iter()
                    .position(|q| q.item == item)
                    .unwrap_or(usize::MAX)
            };
            let k = (0..cache.len())
                .max_by_key(|k| next_use(cache[*k]))
                .unwrap();
            cache.swap_remove(k);
        }
        cache.push(r.item);
    }
    hits
}

/// Ranking rule written out as a sort: walk candidates from lowest FIF score
/// up, handing out |E|−1, |E|−2, ...; members of a tie group all take the
/// score of the group's first member. Missing candidates take the mean.
pub fn brute_force_policy_scores(fif: &[Option<f64>]) -> Vec<f64> {
    let e = fif.len();
    let mut order: Vec<usize> = (0..e).filter(|i| fif[*i].is_some()).collect();
    order.sort_by(|a, b| fif[*a].unwrap().partial_cmp(&fif[*b].unwrap()).unwrap());
    let mut scores: Vec<Option<f64>> = vec![None; e];
    let mut next = e as f64 - 1.0;
    let mut k = 0;
    while k < order.len() {
        let v = fif[order[k]].unwrap();
        let group_score = next;
        while k < order.len() && fif[order[k]].unwrap() == v {
            scores[order[k]] = Some(group_score);
            next -= 1.0;
            k += 1;
        }
    }
    let assigned: Vec<f64> = scores.iter().flatten().copied().collect();
    let mean = if assigned.is_empty() {
        0.0
    } else {
        assigned.iter().sum::<f64>() / assigned.len() as f64
    };
    scores.into_iter().map(|s| s.unwrap_or(mean)).collect()
}

/// Tabular Q-learning with a periodically copied target table, for a
/// single-state bandit fed a fixed sequence of (action, reward) pairs.
pub fn tabular_double_q(
    stream: &[(usize, f64)],
    arms: usize,
    gamma: f64,
    lr: f64,
    copy_every: usize,
) -> Vec<f64> {
    let mut q = vec![0.0; arms];
    let mut target = q.clone();
    for (step, (a, r)) in stream.iter().enumerate() {
        let best = (0..arms).fold(0, |b, i| if q[i] > q[b] { i } else { b });
        let y = r + gamma * target[best];
        q[*a] += lr * (y - q[*a]);
        if (step + 1) % copy_every == 0 {
            target.clone_from(&q);
        }
    }
    q
}

/// Largest relative error between backprop and central differences of the
/// scalar `Σ wᵢ·outᵢ` over every parameter.
pub fn gradient_check(net: &Network, input: NetInput<'_>, weights: &[f64]) -> f64 {
    let objective = |n: &Network| -> f64 {
        n.predict(input)
            .unwrap()
            .iter()
            .zip(weights)
            .map(|(o, w)| o * w)
            .sum()
    };
    let (_, cache) = net.forward(input).unwrap();
    let mut grads = net.zero_grads();
    net.backward(&cache, weights, &mut grads).unwrap();
    let mut probe = net.clone();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..net.params().len() {
        let orig = probe.params().values()[k];
        probe.params_mut().values_mut()[k] = orig + h;
        let up = objective(&probe);
        probe.params_mut().values_mut()[k] = orig - h;
        let down = objective(&probe);
        probe.params_mut().values_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.values()[k];
        let scale = analytic.abs().max(numeric.abs());
        if scale > 1e-7 {
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    worst
}

/// Zipf probabilities from the crate, for cross-checking the oracle above.
pub fn crate_zipf(n: usize, s: f64) -> Vec<f64> {
    zipf_weights(n, s)
}
