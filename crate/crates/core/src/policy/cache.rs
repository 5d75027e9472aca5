use std::collections::BTreeSet;

use super::{CachePolicy, EvictionDecision};
use crate::error::Result;
use crate::trace::{ItemId, Request};

const ABSENT: u32 = u32::MAX;

/// Key-only cache membership with per-item insertion stamps.
#[derive(Clone, Debug, PartialEq)]
pub struct CacheSet {
    capacity: usize,
    members: Vec<(ItemId, u64)>,
    slot_of: Vec<u32>,
}

impl CacheSet {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            members: Vec::with_capacity(capacity),
            slot_of: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.members.len() >= self.capacity
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.slot_of.get(item.index()).is_some_and(|s| *s != ABSENT)
    }

    /// `(item, insertion stamp)` pairs in unspecified order.
    pub fn iter(&self) -> impl Iterator<Item = (ItemId, u64)> + '_ {
        self.members.iter().copied()
    }

    pub fn stamp(&self, item: ItemId) -> Option<u64> {
        let s = *self.slot_of.get(item.index())?;
        (s != ABSENT).then(|| self.members[s as usize].1)
    }

    pub fn items(&self) -> BTreeSet<ItemId> {
        self.members.iter().map(|(i, _)| *i).collect()
    }

    /// Adds `item`; the caller keeps `len() <= capacity()`.
    pub fn insert(&mut self, item: ItemId, stamp: u64) {
        if self.contains(item) {
            return;
        }
        assert!(
            self.members.len() < self.capacity,
            "insert into a full cache"
        );
        if self.slot_of.len() <= item.index() {
            self.slot_of.resize(item.index() + 1, ABSENT);
        }
        self.slot_of[item.index()] = self.members.len() as u32;
        self.members.push((item, stamp));
    }

    pub fn remove(&mut self, item: ItemId) -> bool {
        let Some(&slot) = self.slot_of.get(item.index()) else {
            return false;
        };
        if slot == ABSENT {
            return false;
        }
        self.slot_of[item.index()] = ABSENT;
        self.members.swap_remove(slot as usize);
        if let Some((moved, _)) = self.members.get(slot as usize) {
            self.slot_of[moved.index()] = slot;
        }
        true
    }

    /// Replaces the contents; every item gets the same stamp.
    pub fn reset_to(&mut self, items: &[ItemId], stamp: u64) {
        self.clear();
        for item in items.iter().take(self.capacity) {
            self.insert(*item, stamp);
        }
    }

    /// Copies membership and insertion stamps from another cache.
    pub fn copy_membership(&mut self, other: &CacheSet) {
        self.clear();
        let mut members: Vec<_> = other.iter().collect();
        members.sort_by_key(|(item, _)| *item);
        for (item, stamp) in members.into_iter().take(self.capacity) {
            self.insert(item, stamp);
        }
    }

    pub fn clear(&mut self) {
        for (item, _) in self.members.drain(..) {
            self.slot_of[item.index()] = ABSENT;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServeOutcome {
    pub hit: bool,
    pub eviction: Option<EvictionDecision>,
}

/// Demand caching step: hit, or admit the item and evict the policy's victim
/// if the cache is full. The policy must already have observed `request`.
pub fn serve_request(
    cache: &mut CacheSet,
    policy: &dyn CachePolicy,
    position: usize,
    request: &Request,
) -> Result<ServeOutcome> {
    if cache.contains(request.item) {
        return Ok(ServeOutcome {
            hit: true,
            eviction: None,
        });
    }
    let eviction = if cache.is_full() {
        let decision = policy.choose_victim(cache, request.timestamp)?;
        cache.remove(decision.evicted);
        Some(decision)
    } else {
        None
    };
    cache.insert(request.item, position as u64);
    Ok(ServeOutcome {
        hit: false,
        eviction,
    })
}
