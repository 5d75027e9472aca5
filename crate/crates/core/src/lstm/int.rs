use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{fit, QuantilePartitioner, Sample, Target, TrainConfig, TrainingSummary};
use crate::bundle::Bundle;
use crate::error::{Error, Result};
use crate::nn::{argmax, softmax, Activation, LayerSpec, NetInput, Network, NetworkSpec};
use crate::policy::{
    eviction_order, CachePolicy, CacheSet, EvictionDecision, LfuDeltaPolicy, LfuWindow, PolicyId,
};
use crate::trace::{item_history_index, ItemHistory, ItemId, Request, Trace};

const MAGIC: &[u8; 8] = b"LSTMINT1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmIntConfig {
    /// Number of past gaps fed to the network.
    pub window: usize,
    pub partitions: usize,
    pub hidden: usize,
    /// LFU-Δ window used for items without a valid prediction; `None` is Δ = ∞.
    pub fallback_window: Option<u64>,
    pub train: TrainConfig,
}

impl Default for LstmIntConfig {
    fn default() -> Self {
        Self {
            window: 2,
            partitions: 16,
            hidden: 32,
            fallback_window: Some(5000),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapPrediction {
    pub bin: usize,
    /// Decoded gap `δ̂`: the bin's representative value.
    pub gap: f64,
    /// The bin is the widest, top partition.
    pub top: bool,
}

/// Anything that maps the last `window()` gaps (oldest first) to a gap bin.
pub trait GapPredictor: Send + Sync {
    fn window(&self) -> usize;
    fn predict(&self, recent_gaps: &[f64]) -> GapPrediction;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FallbackReason {
    ColdStart,
    TopPartition,
    Stale,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreFlag {
    Valid,
    Fallback(FallbackReason),
}

/// Scores a prediction made at the item's last request `last`.
fn classify(
    last: f64,
    prediction: &GapPrediction,
    now: f64,
    fallback_score: f64,
) -> (f64, ScoreFlag) {
    if prediction.top {
        return (
            fallback_score,
            ScoreFlag::Fallback(FallbackReason::TopPartition),
        );
    }
    let expected = last + prediction.gap;
    if now > last + 2.0 * prediction.gap {
        return (fallback_score, ScoreFlag::Fallback(FallbackReason::Stale));
    }
    (now - expected, ScoreFlag::Valid)
}

/// LSTM-Int caching score `now − (τ_last + δ̂)`, or `fallback_score` (the
/// item's LFU-Δ score) with the reason it was needed.
pub fn lstm_int_score(
    history: &ItemHistory,
    now: f64,
    model: &dyn GapPredictor,
    fallback_score: f64,
) -> (f64, ScoreFlag) {
    let gaps = history.inter_arrivals();
    let w = model.window();
    if gaps.len() < w + 1 {
        return (
            fallback_score,
            ScoreFlag::Fallback(FallbackReason::ColdStart),
        );
    }
    let prediction = model.predict(&gaps[gaps.len() - w..]);
    let last = history.last_arrival().expect("history has arrivals");
    classify(last, &prediction, now, fallback_score)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmIntModel {
    net: Network,
    partitioner: QuantilePartitioner,
    window: usize,
    fallback_window: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct LstmIntMeta {
    window: usize,
    fallback_window: Option<u64>,
    partitioner: QuantilePartitioner,
}

impl LstmIntModel {
    fn spec(partitioner: &QuantilePartitioner, hidden: usize) -> NetworkSpec {
        let p = partitioner.num_bins();
        NetworkSpec::sequence(p, hidden, 0, vec![LayerSpec::new(p, Activation::Identity)])
    }

    pub fn untrained(partitioner: QuantilePartitioner, config: &LstmIntConfig) -> Result<Self> {
        if config.window == 0 {
            return Err(Error::config("LSTM-Int window must be at least 1"));
        }
        let net = Network::new(Self::spec(&partitioner, config.hidden), config.train.seed)?;
        Ok(Self {
            net,
            partitioner,
            window: config.window,
            fallback_window: config.fallback_window,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn partitioner(&self) -> &QuantilePartitioner {
        &self.partitioner
    }

    pub fn fallback_window(&self) -> LfuWindow {
        self.fallback_window
            .map_or(LfuWindow::Infinite, LfuWindow::Requests)
    }

    fn encode(&self, gaps: &[f64]) -> Vec<f64> {
        gaps.iter()
            .flat_map(|g| self.partitioner.one_hot(*g))
            .collect()
    }

    /// Softmax over bins for the next gap.
    pub fn probabilities(&self, recent_gaps: &[f64]) -> Result<Vec<f64>> {
        let logits = self
            .net
            .predict(NetInput::sequence(&self.encode(recent_gaps)))?;
        Ok(softmax(&logits))
    }

    pub fn predict_bin(&self, recent_gaps: &[f64]) -> usize {
        let logits = self
            .net
            .predict(NetInput::sequence(&self.encode(recent_gaps)))
            .expect("input encoded with the model's own partitioner");
        argmax(&logits)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_value(LstmIntMeta {
            window: self.window,
            fallback_window: self.fallback_window,
            partitioner: self.partitioner.clone(),
        })?;
        let mut bundle = Bundle::new(*MAGIC, meta);
        bundle.push("net", self.net.to_bytes()?);
        bundle.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bundle = Bundle::from_bytes(bytes, MAGIC)?;
        let meta: LstmIntMeta = serde_json::from_value(bundle.meta.clone())?;
        let net = Network::from_bytes(
            bundle
                .section("net")
                .ok_or_else(|| Error::Checkpoint("missing network section".into()))?,
        )?;
        if net.output_size() != meta.partitioner.num_bins() {
            return Err(Error::Checkpoint(
                "network output does not match partitioner".into(),
            ));
        }
        Ok(Self {
            net,
            partitioner: meta.partitioner,
            window: meta.window,
            fallback_window: meta.fallback_window,
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

impl GapPredictor for LstmIntModel {
    fn window(&self) -> usize {
        self.window
    }

    fn predict(&self, recent_gaps: &[f64]) -> GapPrediction {
        let bin = self.predict_bin(recent_gaps);
        GapPrediction {
            bin,
            gap: self.partitioner.representative(bin),
            top: bin == self.partitioner.top_bin(),
        }
    }
}

/// Per-item gap series with at least `window + 1` gaps: `(inputs, target)`
/// pairs built item by item.
fn training_series(trace: &Trace, window: usize) -> Vec<Vec<f64>> {
    item_history_index(trace)
        .iter()
        .map(|(_, h)| h.inter_arrivals())
        .filter(|g| g.len() > window)
        .collect()
}

/// Fits the partitioner (unless given) on every gap of the eligible items and
/// trains the next-bin classifier with categorical cross-entropy.
pub fn train_lstm_int(
    trace: &Trace,
    config: &LstmIntConfig,
    partitioner: Option<QuantilePartitioner>,
) -> Result<(LstmIntModel, TrainingSummary)> {
    let series = training_series(trace, config.window);
    if series.is_empty() {
        return Err(Error::Training(format!(
            "no item has the {} requests needed for a training sequence",
            config.window + 2
        )));
    }
    let partitioner = match partitioner {
        Some(p) => p,
        None => {
            let gaps: Vec<f64> = series.iter().flatten().copied().collect();
            QuantilePartitioner::fit(&gaps, config.partitions.min(gaps.len()))?
        }
    };
    let mut model = LstmIntModel::untrained(partitioner, config)?;
    let w = config.window;
    let mut samples = Vec::new();
    for gaps in &series {
        for i in w..gaps.len() {
            samples.push(Sample {
                sequence: model.encode(&gaps[i - w..i]),
                target: Target::Class(model.partitioner.bin(gaps[i])),
            });
        }
    }
    let summary = fit(&mut model.net, samples, &config.train)?;
    Ok((model, summary))
}

#[derive(Clone, Debug, Default)]
struct ItemState {
    last: Option<f64>,
    recent: VecDeque<f64>,
    gap_count: usize,
    prediction: Option<GapPrediction>,
}

/// LSTM-Int as a cache policy. The network runs once per request, for the
/// requested item only; other items keep their last prediction.
#[derive(Clone)]
pub struct LstmIntPolicy {
    predictor: Arc<dyn GapPredictor>,
    lfu: LfuDeltaPolicy,
    items: Vec<ItemState>,
}

impl LstmIntPolicy {
    pub fn new(model: Arc<LstmIntModel>) -> Self {
        let window = model.fallback_window();
        Self::with_predictor(model, window)
    }

    pub fn with_predictor(predictor: Arc<dyn GapPredictor>, fallback_window: LfuWindow) -> Self {
        Self {
            predictor,
            lfu: LfuDeltaPolicy::new(fallback_window),
            items: Vec::new(),
        }
    }

    pub fn scored(&self, item: ItemId, now: f64) -> (f64, ScoreFlag) {
        let fallback = self.lfu.score(item, now);
        let Some(state) = self.items.get(item.index()) else {
            return (fallback, ScoreFlag::Fallback(FallbackReason::ColdStart));
        };
        match (&state.prediction, state.last) {
            (Some(p), Some(last)) => classify(last, p, now, fallback),
            _ => (fallback, ScoreFlag::Fallback(FallbackReason::ColdStart)),
        }
    }
}

impl CachePolicy for LstmIntPolicy {
    fn id(&self) -> PolicyId {
        PolicyId::LstmInt
    }

    fn observe(&mut self, position: usize, request: &Request) {
        self.lfu.observe(position, request);
        let idx = request.item.index();
        if self.items.len() <= idx {
            self.items.resize_with(idx + 1, ItemState::default);
        }
        let w = self.predictor.window();
        let state = &mut self.items[idx];
        if let Some(last) = state.last {
            if state.recent.len() == w {
                state.recent.pop_front();
            }
            state.recent.push_back(request.timestamp - last);
            state.gap_count += 1;
        }
        state.last = Some(request.timestamp);
        state.prediction = if state.gap_count > w {
            let gaps: Vec<f64> = state.recent.iter().copied().collect();
            Some(self.predictor.predict(&gaps))
        } else {
            None
        };
    }

    fn score(&self, item: ItemId, now: f64) -> f64 {
        self.scored(item, now).0
    }

    /// Items without a valid prediction go first, by their LFU-Δ score.
    fn choose_victim(&self, cache: &CacheSet, now: f64) -> Result<EvictionDecision> {
        let mut fallback_best: Option<(f64, u64, ItemId)> = None;
        let mut valid_best: Option<(f64, u64, ItemId)> = None;
        for (item, stamp) in cache.iter() {
            let (score, flag) = self.scored(item, now);
            let slot = match flag {
                ScoreFlag::Valid => &mut valid_best,
                ScoreFlag::Fallback(_) => &mut fallback_best,
            };
            let key = (score, stamp, item);
            if slot.is_none_or(|b| eviction_order(&key, &b).is_lt()) {
                *slot = Some(key);
            }
        }
        let (score, _, evicted) = fallback_best
            .or(valid_best)
            .ok_or_else(|| Error::usage("cannot evict from an empty cache"))?;
        Ok(EvictionDecision {
            evicted,
            score,
            snapshot: None,
        })
    }

    fn clone_box(&self) -> Box<dyn CachePolicy> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct FixedBin {
        window: usize,
        prediction: GapPrediction,
    }

    impl GapPredictor for FixedBin {
        fn window(&self) -> usize {
            self.window
        }
        fn predict(&self, _: &[f64]) -> GapPrediction {
            self.prediction
        }
    }

    fn stub(gap: f64, top: bool) -> FixedBin {
        FixedBin {
            window: 2,
            prediction: GapPrediction { bin: 0, gap, top },
        }
    }

    #[test]
    fn valid_score_is_time_to_predicted_arrival() {
        let h = ItemHistory::from_arrivals(&[40.0, 60.0, 80.0, 100.0]);
        let (s, flag) = lstm_int_score(&h, 110.0, &stub(20.0, false), 7.0);
        assert_eq!(flag, ScoreFlag::Valid);
        assert_eq!(s, -10.0);
    }

    #[test]
    fn stale_prediction_falls_back() {
        let h = ItemHistory::from_arrivals(&[40.0, 60.0, 80.0, 100.0]);
        let (s, flag) = lstm_int_score(&h, 145.0, &stub(20.0, false), 7.0);
        assert_eq!(flag, ScoreFlag::Fallback(FallbackReason::Stale));
        assert_eq!(s, 7.0);
        // exactly at the threshold is still valid
        assert_eq!(
            lstm_int_score(&h, 140.0, &stub(20.0, false), 7.0).1,
            ScoreFlag::Valid
        );
    }

    #[test]
    fn cold_start_and_top_partition_fall_back() {
        let one = ItemHistory::from_arrivals(&[5.0]);
        assert_eq!(
            lstm_int_score(&one, 6.0, &stub(1.0, false), 1.0).1,
            ScoreFlag::Fallback(FallbackReason::ColdStart)
        );
        let h = ItemHistory::from_arrivals(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            lstm_int_score(&h, 4.5, &stub(1.0, true), 1.0).1,
            ScoreFlag::Fallback(FallbackReason::TopPartition)
        );
    }

    fn req(t: f64, item: u32) -> Request {
        Request {
            timestamp: t,
            item: ItemId(item),
            watch_duration: None,
        }
    }

    #[test]
    fn fallback_items_are_evicted_first() {
        let mut p = LstmIntPolicy::with_predictor(Arc::new(stub(1.0, false)), LfuWindow::Infinite);
        let mut pos = 0;
        // items 0..3 get four requests each (valid), item 3 only one (cold start)
        for round in 0..4 {
            for item in 0..3 {
                p.observe(pos, &req(round as f64 + item as f64 * 0.1, item));
                pos += 1;
            }
        }
        p.observe(pos, &req(3.5, 3));
        let mut cache = CacheSet::new(4);
        for item in 0..4 {
            cache.insert(ItemId(item), item as u64);
        }
        let d = p.choose_victim(&cache, 3.6).unwrap();
        assert_eq!(d.evicted, ItemId(3));

        cache.remove(ItemId(3));
        // all valid: the earliest predicted arrival is the most worth keeping
        let d = p.choose_victim(&cache, 3.6).unwrap();
        let scores: Vec<f64> = (0..3).map(|i| p.score(ItemId(i), 3.6)).collect();
        let min = (0..3)
            .min_by(|a, b| scores[*a].partial_cmp(&scores[*b]).unwrap())
            .unwrap();
        assert_eq!(d.evicted, ItemId(min as u32));
    }
}
