//! LSTM popularity predictors used as eviction policies.
//!
//! - LSTM-Int predicts the bin of an item's next inter-arrival gap and scores
//!   the item by its predicted next request time, falling back to LFU-Δ
//!   whenever that prediction is missing or unreliable.
//! - LSTM-Req predicts each active item's request count in the next time slot
//!   and uses it directly as the caching score.
//!
//! Both are trained offline on a trace and then run read-only.

mod int;
mod partition;
mod req;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{cross_entropy_class, huber, huber_grad, Adam, AdamConfig, NetInput, Network};

pub use int::{
    lstm_int_score, train_lstm_int, FallbackReason, GapPrediction, GapPredictor, LstmIntConfig,
    LstmIntModel, LstmIntPolicy, ScoreFlag,
};
pub use partition::QuantilePartitioner;
pub use req::{
    lstm_req_slot_scores, train_and_score_lstm_req, train_lstm_req, LstmReqConfig, LstmReqModel,
    LstmReqPolicy, SlotScores,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Training samples beyond this are subsampled (seeded).
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.01,
            max_samples: 20_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub samples: usize,
    pub initial_loss: f64,
    /// Mean training-set loss after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainingSummary {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses
            .last()
            .copied()
            .unwrap_or(self.initial_loss)
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Target {
    Class(usize),
    Value(f64),
}

pub(crate) struct Sample {
    pub sequence: Vec<f64>,
    pub target: Target,
}

fn sample_loss(net: &Network, s: &Sample) -> Result<f64> {
    let out = net.predict(NetInput::sequence(&s.sequence))?;
    Ok(match s.target {
        Target::Class(c) => cross_entropy_class(&out, c)?.0,
        Target::Value(v) => huber(out[0], v, 1.0),
    })
}

fn dataset_loss(net: &Network, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in samples {
        total += sample_loss(net, s)?;
    }
    Ok(total / samples.len() as f64)
}

/// Mini-batch Adam with mean reduction over each batch.
pub(crate) fn fit(
    net: &mut Network,
    mut samples: Vec<Sample>,
    cfg: &TrainConfig,
) -> Result<TrainingSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if samples.len() > cfg.max_samples {
        samples.shuffle(&mut rng);
        samples.truncate(cfg.max_samples);
    }
    let mut summary = TrainingSummary {
        samples: samples.len(),
        initial_loss: dataset_loss(net, &samples)?,
        epoch_losses: Vec::with_capacity(cfg.epochs),
    };
    if samples.is_empty() {
        return Ok(summary);
    }
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.learning_rate), net.params().len());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch = cfg.batch_size.max(1);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut grads = net.zero_grads();
            for &i in chunk {
                let s = &samples[i];
                let (out, cache) = net.forward(NetInput::sequence(&s.sequence))?;
                let d_out = match s.target {
                    Target::Class(c) => cross_entropy_class(&out, c)?.1,
                    Target::Value(v) => vec![huber_grad(out[0], v, 1.0)],
                };
                net.backward(&cache, &d_out, &mut grads)?;
            }
            grads.scale(1.0 / chunk.len() as f64);
            adam.step(net.params_mut(), &grads);
        }
        summary.epoch_losses.push(dataset_loss(net, &samples)?);
    }
    Ok(summary)
}
