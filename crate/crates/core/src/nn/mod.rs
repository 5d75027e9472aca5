//! Minimal differentiable networks: dense layers, one LSTM layer, losses and
//! first-order optimisers, all in `f64` with hand-derived gradients.
//!
//! Every network is described by a [`NetworkSpec`]: an optional LSTM layer
//! that consumes a sequence, whose final hidden state is concatenated with a
//! plain context vector and fed through a stack of dense layers. With no LSTM
//! the network is an ordinary MLP over the context vector.

mod checkpoint;
mod layers;
mod loss;
mod optim;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use layers::{Dense, DenseCache, Lstm, LstmCache};
pub use loss::{cross_entropy_class, huber, huber_grad, softmax, softmax_cross_entropy};
pub use optim::{sgd_step, Adam, AdamConfig};

/// Location of one named tensor inside a [`ParameterSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    fn range(self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Named tensors stored back to back in one flat `f64` buffer.
///
/// Gradients use a `ParameterSet` with the same layout, so optimisers and
/// checkpoints only ever see the flat buffer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    entries: Vec<ParamEntry>,
    values: Vec<f64>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, name: impl Into<String>, shape: &[usize]) -> Slot {
        let len = shape.iter().product();
        let slot = Slot {
            offset: self.values.len(),
            len,
        };
        self.entries.push(ParamEntry {
            name: name.into(),
            shape: shape.to_vec(),
        });
        self.values.resize(self.values.len() + len, 0.0);
        slot
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self.entries.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, slot: Slot) -> &[f64] {
        &self.values[slot.range()]
    }

    pub fn get_mut(&mut self, slot: Slot) -> &mut [f64] {
        &mut self.values[slot.range()]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.values.iter_mut().for_each(|v| *v = value);
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn add_assign(&mut self, other: &ParameterSet) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn copy_from(&mut self, other: &ParameterSet) -> Result<()> {
        if self.entries != other.entries {
            return Err(Error::usage("parameter layouts differ"));
        }
        self.values.copy_from_slice(&other.values);
        Ok(())
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmLayerSpec {
    pub input_size: usize,
    pub hidden_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        Self { width, activation }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Sequence encoder; the LSTM returns its last hidden state.
    pub lstm: Option<LstmLayerSpec>,
    /// Width of the non-sequential input appended after the LSTM state.
    pub context: usize,
    /// Dense head; the last layer's width is the network output width.
    pub head: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn mlp(input: usize, head: Vec<LayerSpec>) -> Self {
        Self {
            lstm: None,
            context: input,
            head,
        }
    }

    pub fn sequence(
        input_size: usize,
        hidden_size: usize,
        context: usize,
        head: Vec<LayerSpec>,
    ) -> Self {
        Self {
            lstm: Some(LstmLayerSpec {
                input_size,
                hidden_size,
            }),
            context,
            head,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.head.is_empty() {
            return Err(Error::config("network needs at least one dense layer"));
        }
        if self.head.iter().any(|l| l.width == 0) {
            return Err(Error::config("dense layer widths must be at least 1"));
        }
        if let Some(l) = self.lstm {
            if l.hidden_size == 0 || l.input_size == 0 {
                return Err(Error::config("LSTM sizes must be at least 1"));
            }
        } else if self.context == 0 {
            return Err(Error::config("MLP input width must be at least 1"));
        }
        if self.head[..self.head.len() - 1]
            .iter()
            .any(|l| l.activation == Activation::Softmax)
        {
            return Err(Error::config("softmax is only allowed on the output layer"));
        }
        Ok(())
    }

    pub fn output_size(&self) -> usize {
        self.head.last().map_or(0, |l| l.width)
    }
}

/// Input to [`Network::forward`]: a flattened `steps × input_size` sequence
/// (empty when the network has no LSTM) and a context vector.
#[derive(Clone, Copy, Debug)]
pub struct NetInput<'a> {
    pub sequence: &'a [f64],
    pub context: &'a [f64],
}

impl<'a> NetInput<'a> {
    pub fn vector(context: &'a [f64]) -> Self {
        Self {
            sequence: &[],
            context,
        }
    }

    pub fn sequence(sequence: &'a [f64]) -> Self {
        Self {
            sequence,
            context: &[],
        }
    }
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    lstm: Option<LstmCache>,
    dense: Vec<DenseCache>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    lstm: Option<Lstm>,
    head: Vec<Dense>,
    params: ParameterSet,
}

impl Network {
    /// Builds the layout with all parameters zero.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut params = ParameterSet::new();
        let lstm = spec
            .lstm
            .map(|l| Lstm::alloc(&mut params, "lstm", l.input_size, l.hidden_size));
        let mut width = spec.lstm.map_or(0, |l| l.hidden_size) + spec.context;
        let mut head = Vec::with_capacity(spec.head.len());
        for (i, layer) in spec.head.iter().enumerate() {
            head.push(Dense::alloc(
                &mut params,
                &format!("dense{i}"),
                width,
                layer.width,
                layer.activation,
            ));
            width = layer.width;
        }
        Ok(Self {
            spec,
            lstm,
            head,
            params,
        })
    }

    /// Uniform `±1/√fan_in` initialisation; LSTM forget-gate biases start at 1.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Some(lstm) = &net.lstm {
            lstm.init(&mut net.params, &mut rng);
        }
        for layer in &net.head {
            layer.init(&mut net.params, &mut rng);
        }
        Ok(net)
    }

    pub(crate) fn from_parts(spec: NetworkSpec, values: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        if values.len() != net.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                net.params.len(),
                values.len()
            )));
        }
        net.params.values_mut().copy_from_slice(&values);
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn zero_grads(&self) -> ParameterSet {
        self.params.zeros_like()
    }

    pub fn output_size(&self) -> usize {
        self.spec.output_size()
    }

    pub fn forward(&self, input: NetInput<'_>) -> Result<(Vec<f64>, ForwardCache)> {
        if input.context.len() != self.spec.context {
            return Err(Error::Dimension {
                layer: "context".into(),
                expected: self.spec.context,
                got: input.context.len(),
            });
        }
        let (mut x, lstm_cache) = match &self.lstm {
            Some(lstm) => {
                let (h, cache) = lstm.forward(&self.params, input.sequence)?;
                let mut x = h;
                x.extend_from_slice(input.context);
                (x, Some(cache))
            }
            None => {
                if !input.sequence.is_empty() {
                    return Err(Error::Dimension {
                        layer: "sequence".into(),
                        expected: 0,
                        got: input.sequence.len(),
                    });
                }
                (input.context.to_vec(), None)
            }
        };
        let mut dense = Vec::with_capacity(self.head.len());
        for layer in &self.head {
            let (y, cache) = layer.forward(&self.params, &x)?;
            dense.push(cache);
            x = y;
        }
        Ok((
            x,
            ForwardCache {
                lstm: lstm_cache,
                dense,
            },
        ))
    }

    pub fn predict(&self, input: NetInput<'_>) -> Result<Vec<f64>> {
        self.forward(input).map(|(y, _)| y)
    }

    /// Accumulates `∂loss/∂θ` into `grads` given `∂loss/∂output`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_output: &[f64],
        grads: &mut ParameterSet,
    ) -> Result<()> {
        if cache.dense.len() != self.head.len() || cache.lstm.is_some() != self.lstm.is_some() {
            return Err(Error::usage(
                "forward cache does not belong to this network",
            ));
        }
        if grads.len() != self.params.len() {
            return Err(Error::usage(
                "gradient buffer layout does not match the network",
            ));
        }
        if d_output.len() != self.output_size() {
            return Err(Error::Dimension {
                layer: "output".into(),
                expected: self.output_size(),
                got: d_output.len(),
            });
        }
        let mut dy = d_output.to_vec();
        for (layer, c) in self.head.iter().zip(&cache.dense).rev() {
            dy = layer.backward(&self.params, c, &dy, grads);
        }
        if let (Some(lstm), Some(c)) = (&self.lstm, &cache.lstm) {
            let dh = &dy[..lstm.hidden];
            lstm.backward(&self.params, c, dh, grads);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        checkpoint::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        checkpoint::decode(bytes)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub(crate) fn uniform_fill(values: &mut [f64], bound: f64, rng: &mut impl Rng) {
    for v in values {
        *v = rng.random_range(-bound..=bound);
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
