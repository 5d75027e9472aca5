mod support;

use cec_core::policy::{CacheSet, PolicyContext};
use cec_core::trace::ItemId;
use cec_core::virtual_cache::{EnsembleConfig, VirtualCacheBank, SLOT_REQUESTS, WINDOW_SLOTS};
use proptest::prelude::*;

fn ensemble() -> EnsembleConfig {
    EnsembleConfig::new(
        ["lru-1", "lru-2", "lfu-inf", "lfu-200"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect(),
    )
}

/// Hit-ratio ring rebuilt from raw per-request outcomes: the last ten full
/// slots, oldest first, zero-padded at the front.
fn ring_from_log(log: &[bool]) -> [f64; WINDOW_SLOTS] {
    let ratios: Vec<f64> = log
        .chunks_exact(SLOT_REQUESTS)
        .map(|c| c.iter().filter(|h| **h).count() as f64 / SLOT_REQUESTS as f64)
        .collect();
    let mut ring = [0.0; WINDOW_SLOTS];
    let keep = ratios.len().min(WINDOW_SLOTS);
    ring[WINDOW_SLOTS - keep..].copy_from_slice(&ratios[ratios.len() - keep..]);
    ring
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn features_match_the_raw_hit_log(seed in 0u64..1000, len in 0usize..2600, capacity in 1usize..30) {
        let trace = support::mixed_trace(seed, 2600);
        let mut bank = VirtualCacheBank::new(ensemble(), capacity, &PolicyContext::default()).unwrap();
        let mut logs = vec![Vec::new(); bank.len()];
        for (pos, req) in trace.requests()[..len].iter().enumerate() {
            let out = bank.process_request(pos, req).unwrap();
            for (log, o) in logs.iter_mut().zip(&out) {
                log.push(o.hit);
            }
        }
        let features = bank.hit_ratio_features();
        for (i, log) in logs.iter().enumerate() {
            prop_assert_eq!(features[i], ring_from_log(log));
            let hits = log.iter().filter(|h| **h).count() as u64;
            prop_assert_eq!(bank.hits(i), hits);
            prop_assert_eq!(bank.hits(i) + bank.misses(i), len as u64);
        }
        prop_assert_eq!(bank.processed(), len as u64);
        let m = bank.hit_matrix();
        for slot in 0..WINDOW_SLOTS {
            for i in 0..bank.len() {
                prop_assert_eq!(m[slot * bank.len() + i], features[i][slot]);
            }
        }
        let mut csv = Vec::new();
        bank.write_slot_csv(&mut csv).unwrap();
        let rows = String::from_utf8(csv).unwrap().lines().count();
        prop_assert_eq!(rows, 1 + (len / SLOT_REQUESTS) * bank.len());
    }

    #[test]
    fn virtual_caches_respect_capacity(seed in 0u64..1000, capacity in 1usize..30) {
        let trace = support::mixed_trace(seed, 1500);
        let mut bank = VirtualCacheBank::new(ensemble(), capacity, &PolicyContext::default()).unwrap();
        for (pos, req) in trace.requests().iter().enumerate() {
            let out = bank.process_request(pos, req).unwrap();
            for (i, o) in out.iter().enumerate() {
                let cache = bank.cache(i);
                prop_assert!(cache.len() <= capacity && cache.contains(req.item));
                if let Some(c) = o.candidate {
                    prop_assert!(!o.hit && !cache.contains(c));
                }
            }
        }
    }
}

#[test]
fn sync_to_a_partly_filled_primary() {
    let trace = support::mixed_trace(5, 400);
    let mut bank = VirtualCacheBank::new(ensemble(), 10, &PolicyContext::default()).unwrap();
    for (pos, req) in trace.requests().iter().enumerate() {
        bank.process_request(pos, req).unwrap();
    }
    let before = bank.hit_ratio_features();
    let mut primary = CacheSet::new(10);
    primary.insert(ItemId(3), 7);
    primary.insert(ItemId(1), 2);
    bank.sync_to_primary(&primary);
    for i in 0..bank.len() {
        assert_eq!(bank.cache(i).items(), primary.items());
        assert_eq!(bank.cache(i).stamp(ItemId(3)), Some(7));
    }
    assert_eq!(bank.hit_ratio_features(), before);
    assert!(!bank.sync_due());
}

#[test]
fn sync_becomes_due_after_the_period() {
    let trace = support::mixed_trace(6, 400);
    let mut cfg = ensemble();
    cfg.sync_period = 150;
    let mut bank = VirtualCacheBank::new(cfg, 10, &PolicyContext::default()).unwrap();
    for (pos, req) in trace.requests().iter().enumerate() {
        assert_eq!(
            bank.sync_due(),
            pos >= 150 && pos % 150 == 0,
            "request {pos}"
        );
        if bank.sync_due() {
            let primary = bank.cache(0).clone();
            bank.sync_to_primary(&primary);
        }
        bank.process_request(pos, req).unwrap();
    }
}

#[test]
fn ensembles_need_two_distinct_policies() {
    let one = EnsembleConfig::new(vec!["lru-1".parse().unwrap()]);
    assert!(VirtualCacheBank::new(one, 5, &PolicyContext::default()).is_err());
    let dup = EnsembleConfig::new(vec!["lru-1".parse().unwrap(), "lru-1".parse().unwrap()]);
    assert!(VirtualCacheBank::new(dup, 5, &PolicyContext::default()).is_err());
}
