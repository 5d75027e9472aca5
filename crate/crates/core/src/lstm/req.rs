use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{fit, Sample, Target, TrainConfig, TrainingSummary};
use crate::bundle::Bundle;
use crate::error::{Error, Result};
use crate::nn::{Activation, LayerSpec, NetInput, Network, NetworkSpec};
use crate::policy::{CachePolicy, PolicyId};
use crate::trace::{ItemId, Request, Trace};

const MAGIC: &[u8; 8] = b"LSTMREQ1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmReqConfig {
    /// Slot length `b` in seconds.
    pub slot_seconds: f64,
    pub window: usize,
    pub hidden: usize,
    pub train: TrainConfig,
}

impl LstmReqConfig {
    pub fn new(slot_seconds: f64) -> Self {
        Self {
            slot_seconds,
            window: 2,
            hidden: 32,
            train: TrainConfig::default(),
        }
    }
}

/// Slot of a request at `t`: slot `i ≥ 1` covers `(origin + (i−1)b, origin + ib]`,
/// slot 0 also holds `origin` itself.
fn slot_of(t: f64, origin: f64, b: f64) -> usize {
    let x = ((t - origin) / b).ceil();
    if x <= 1.0 {
        0
    } else {
        x as usize - 1
    }
}

/// Sparse per-item slot counts: `(slot, count)` in increasing slot order.
struct SlotCounts {
    num_slots: usize,
    items: Vec<Vec<(usize, f64)>>,
}

impl SlotCounts {
    fn new(trace: &Trace, b: f64) -> Self {
        let mut items: Vec<Vec<(usize, f64)>> = vec![Vec::new(); trace.catalog_size()];
        let origin = trace.start_time();
        let mut num_slots = 1;
        for r in trace.requests() {
            let s = slot_of(r.timestamp, origin, b);
            num_slots = num_slots.max(s + 1);
            let series = &mut items[r.item.index()];
            match series.last_mut() {
                Some((last, c)) if *last == s => *c += 1.0,
                _ => series.push((s, 1.0)),
            }
        }
        Self { num_slots, items }
    }

    /// Counts of slots `s−w .. s` (exclusive), zero before the first slot.
    fn window(series: &[(usize, f64)], s: usize, w: usize) -> Vec<f64> {
        (0..w)
            .map(|k| {
                let slot = (s + k).checked_sub(w);
                slot.and_then(|slot| {
                    series
                        .binary_search_by_key(&slot, |e| e.0)
                        .ok()
                        .map(|i| series[i].1)
                })
                .unwrap_or(0.0)
            })
            .collect()
    }

    fn count(series: &[(usize, f64)], s: usize) -> f64 {
        series
            .binary_search_by_key(&s, |e| e.0)
            .map_or(0.0, |i| series[i].1)
    }

    /// Slots `s ≥ 1` at which the item is active: requested in one of the
    /// previous `w` slots.
    fn active_slots(&self, series: &[(usize, f64)], w: usize) -> Vec<usize> {
        let mut out: Vec<usize> = series
            .iter()
            .flat_map(|(slot, _)| (slot + 1)..=(slot + w))
            .filter(|s| *s < self.num_slots)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmReqModel {
    net: Network,
    slot_seconds: f64,
    window: usize,
    /// Counts are divided by this before entering the network.
    scale: f64,
}

#[derive(Serialize, Deserialize)]
struct LstmReqMeta {
    slot_seconds: f64,
    window: usize,
    scale: f64,
}

impl LstmReqModel {
    pub fn untrained(config: &LstmReqConfig, scale: f64) -> Result<Self> {
        if !(config.slot_seconds > 0.0 && config.slot_seconds.is_finite()) {
            return Err(Error::config("LSTM-Req slot length must be positive"));
        }
        if config.window == 0 {
            return Err(Error::config("LSTM-Req window must be at least 1"));
        }
        let spec = NetworkSpec::sequence(
            1,
            config.hidden,
            0,
            vec![LayerSpec::new(1, Activation::Identity)],
        );
        Ok(Self {
            net: Network::new(spec, config.train.seed)?,
            slot_seconds: config.slot_seconds,
            window: config.window,
            scale: scale.max(1.0),
        })
    }

    pub fn slot_seconds(&self) -> f64 {
        self.slot_seconds
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    fn encode(&self, counts: &[f64]) -> Vec<f64> {
        counts.iter().map(|c| c / self.scale).collect()
    }

    /// Predicted request count of the next slot given the last `window()`
    /// slot counts, oldest first. Never negative.
    pub fn predict(&self, counts: &[f64]) -> f64 {
        let out = self
            .net
            .predict(NetInput::sequence(&self.encode(counts)))
            .expect("count window matches the model");
        (out[0] * self.scale).max(0.0)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_value(LstmReqMeta {
            slot_seconds: self.slot_seconds,
            window: self.window,
            scale: self.scale,
        })?;
        let mut bundle = Bundle::new(*MAGIC, meta);
        bundle.push("net", self.net.to_bytes()?);
        bundle.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bundle = Bundle::from_bytes(bytes, MAGIC)?;
        let meta: LstmReqMeta = serde_json::from_value(bundle.meta.clone())?;
        let net = Network::from_bytes(
            bundle
                .section("net")
                .ok_or_else(|| Error::Checkpoint("missing network section".into()))?,
        )?;
        Ok(Self {
            net,
            slot_seconds: meta.slot_seconds,
            window: meta.window,
            scale: meta.scale,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Trains the next-slot count regressor on every (item, slot) pair where the
/// item is active.
pub fn train_lstm_req(
    trace: &Trace,
    config: &LstmReqConfig,
) -> Result<(LstmReqModel, TrainingSummary)> {
    if config.slot_seconds.is_nan() || config.slot_seconds <= 0.0 {
        return Err(Error::config("LSTM-Req slot length must be positive"));
    }
    let counts = SlotCounts::new(trace, config.slot_seconds);
    let scale = counts
        .items
        .iter()
        .flatten()
        .map(|(_, c)| *c)
        .fold(1.0, f64::max);
    let mut model = LstmReqModel::untrained(config, scale)?;
    let w = config.window;
    if counts.num_slots <= w {
        log::warn!(
            "trace spans {} slot(s), fewer than w+1 = {}",
            counts.num_slots,
            w + 1
        );
    }
    let mut samples = Vec::new();
    for series in &counts.items {
        for s in counts.active_slots(series, w) {
            samples.push(Sample {
                sequence: model.encode(&SlotCounts::window(series, s, w)),
                target: Target::Value(SlotCounts::count(series, s) / model.scale),
            });
        }
    }
    let summary = fit(&mut model.net, samples, &config.train)?;
    Ok((model, summary))
}

/// Predicted counts of the active items, indexed by slot.
pub type SlotScores = Vec<Vec<(ItemId, f64)>>;

/// Scores in force during each slot: `scores[s]` lists the active items of
/// slot `s` and their predicted counts. Slot 0 has no history and is empty.
pub fn lstm_req_slot_scores(trace: &Trace, model: &LstmReqModel) -> SlotScores {
    let counts = SlotCounts::new(trace, model.slot_seconds);
    let mut scores = vec![Vec::new(); counts.num_slots];
    for (idx, series) in counts.items.iter().enumerate() {
        for s in counts.active_slots(series, model.window) {
            let predicted = model.predict(&SlotCounts::window(series, s, model.window));
            scores[s].push((ItemId(idx as u32), predicted));
        }
    }
    scores
}

pub fn train_and_score_lstm_req(
    trace: &Trace,
    config: &LstmReqConfig,
) -> Result<(LstmReqModel, SlotScores)> {
    let (model, _) = train_lstm_req(trace, config)?;
    let scores = lstm_req_slot_scores(trace, &model);
    Ok((model, scores))
}

/// LSTM-Req as a cache policy: at each slot boundary the model runs once per
/// active item; scores stay fixed within the slot; inactive items score 0.
#[derive(Clone)]
pub struct LstmReqPolicy {
    model: Arc<LstmReqModel>,
    origin: Option<f64>,
    slot: usize,
    /// Counts of the current and previous `w` slots for recently seen items.
    recent: BTreeMap<ItemId, VecDeque<(usize, f64)>>,
    scores: BTreeMap<ItemId, f64>,
}

impl LstmReqPolicy {
    pub fn new(model: Arc<LstmReqModel>) -> Self {
        Self {
            model,
            origin: None,
            slot: 0,
            recent: BTreeMap::new(),
            scores: BTreeMap::new(),
        }
    }

    pub fn current_slot(&self) -> usize {
        self.slot
    }

    fn enter_slot(&mut self, s: usize) {
        let w = self.model.window;
        self.slot = s;
        self.scores.clear();
        self.recent.retain(|_, q| {
            while q.front().is_some_and(|(slot, _)| slot + w < s) {
                q.pop_front();
            }
            !q.is_empty()
        });
        for (item, q) in &self.recent {
            let series: Vec<(usize, f64)> = q.iter().copied().collect();
            let predicted = self.model.predict(&SlotCounts::window(&series, s, w));
            self.scores.insert(*item, predicted);
        }
    }
}

impl CachePolicy for LstmReqPolicy {
    fn id(&self) -> PolicyId {
        PolicyId::LstmReq(self.model.slot_seconds)
    }

    fn observe(&mut self, _position: usize, request: &Request) {
        let origin = *self.origin.get_or_insert(request.timestamp);
        let s = slot_of(request.timestamp, origin, self.model.slot_seconds);
        if s > self.slot {
            self.enter_slot(s);
        }
        let q = self.recent.entry(request.item).or_default();
        match q.back_mut() {
            Some((last, c)) if *last == self.slot => *c += 1.0,
            _ => q.push_back((self.slot, 1.0)),
        }
    }

    fn score(&self, item: ItemId, _now: f64) -> f64 {
        self.scores.get(&item).copied().unwrap_or(0.0)
    }

    fn clone_box(&self) -> Box<dyn CachePolicy> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::RawRequest;

    #[test]
    fn slots_are_left_open_right_closed() {
        assert_eq!(slot_of(0.0, 0.0, 10.0), 0);
        assert_eq!(slot_of(10.0, 0.0, 10.0), 0);
        assert_eq!(slot_of(10.5, 0.0, 10.0), 1);
        assert_eq!(slot_of(20.0, 0.0, 10.0), 1);
    }

    fn trace(rows: &[(f64, &str)]) -> Trace {
        Trace::from_raw(rows.iter().map(|(t, n)| RawRequest::new(*t, *n)).collect()).unwrap()
    }

    #[test]
    fn whole_trace_in_one_slot_has_no_prediction() {
        let t = trace(&[(0.0, "a"), (4.0, "b"), (10.0, "a")]);
        let mut cfg = LstmReqConfig::new(10.0);
        cfg.train.epochs = 1;
        let (_, scores) = train_and_score_lstm_req(&t, &cfg).unwrap();
        assert_eq!(scores.len(), 1);
        assert!(scores[0].is_empty());
    }

    #[test]
    fn inactive_items_score_zero() {
        let t = trace(&[(0.0, "a"), (1.0, "b"), (35.0, "b"), (45.0, "b")]);
        let model = Arc::new(LstmReqModel::untrained(&LstmReqConfig::new(10.0), 1.0).unwrap());
        let mut p = LstmReqPolicy::new(model.clone());
        for (i, r) in t.requests().iter().enumerate() {
            p.observe(i, r);
        }
        // slot 4: `a` was last seen in slot 0, outside the previous two slots
        assert_eq!(p.current_slot(), 4);
        assert_eq!(p.score(ItemId(0), 45.0), 0.0);
        let offline = lstm_req_slot_scores(&t, &model);
        let b_slot4 = offline[4].iter().find(|(i, _)| *i == ItemId(1)).unwrap().1;
        assert_eq!(p.score(ItemId(1), 45.0), b_slot4);
        assert!(offline[4].iter().all(|(i, _)| *i != ItemId(0)));
    }
}
