//! Synthetic trace generators: shot-noise popularity pulses and stationary
//! Zipf IRM streams, plus a small JSON spec language composing them.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use super::{RawRequest, Trace};
use crate::error::{Error, Result};

/// Normalised popularity profile `λ(age)` of one content item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", content = "params", rename_all = "kebab-case")]
pub enum PopularityShape {
    /// `λ(s) = exp(-s/L) / L`.
    Exponential { mean_lifespan: f64 },
    /// `λ(s) = 1/D` on `[0, D)`.
    Box { duration: f64 },
    /// `λ(s) = C (1+s)^-α` on `[0, T]`, `C` normalising the integral to one.
    PowerLaw { exponent: f64, cutoff: f64 },
}

impl PopularityShape {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            PopularityShape::Exponential { mean_lifespan } => mean_lifespan > 0.0,
            PopularityShape::Box { duration } => duration > 0.0,
            PopularityShape::PowerLaw { exponent, cutoff } => exponent > 0.0 && cutoff > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "shape parameters must be positive: {self:?}"
            )))
        }
    }

    fn power_law_norm(exponent: f64, cutoff: f64) -> f64 {
        let integral = if (exponent - 1.0).abs() < 1e-12 {
            (1.0 + cutoff).ln()
        } else {
            ((1.0 + cutoff).powf(1.0 - exponent) - 1.0) / (1.0 - exponent)
        };
        1.0 / integral
    }

    pub fn density(&self, age: f64) -> f64 {
        if age < 0.0 {
            return 0.0;
        }
        match *self {
            PopularityShape::Exponential { mean_lifespan } => {
                (-age / mean_lifespan).exp() / mean_lifespan
            }
            PopularityShape::Box { duration } => {
                if age < duration {
                    1.0 / duration
                } else {
                    0.0
                }
            }
            PopularityShape::PowerLaw { exponent, cutoff } => {
                if age <= cutoff {
                    Self::power_law_norm(exponent, cutoff) * (1.0 + age).powf(-exponent)
                } else {
                    0.0
                }
            }
        }
    }

    /// Supremum of [`Self::density`]; every shape peaks at age zero.
    pub fn max_density(&self) -> f64 {
        self.density(0.0)
    }

    pub fn support(&self) -> f64 {
        match *self {
            PopularityShape::Exponential { .. } => f64::INFINITY,
            PopularityShape::Box { duration } => duration,
            PopularityShape::PowerLaw { cutoff, .. } => cutoff,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotNoiseContent {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Birth time `τ_c` in seconds.
    pub birth: f64,
    /// Expected total request count `V_c`.
    pub volume: f64,
    #[serde(flatten)]
    pub shape: PopularityShape,
}

impl ShotNoiseContent {
    pub fn new(birth: f64, volume: f64, shape: PopularityShape) -> Self {
        Self {
            name: None,
            birth,
            volume,
            shape,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// Instantaneous request rate `V_c λ(t − τ_c)`.
    pub fn rate(&self, t: f64) -> f64 {
        self.volume * self.shape.density(t - self.birth)
    }
}

fn pad_width(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len()
}

/// SplitMix64 finaliser, used to derive independent child seeds.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sample_shot_noise(
    contents: &[ShotNoiseContent],
    horizon: f64,
    seed: u64,
) -> Result<Vec<RawRequest>> {
    if horizon.is_nan() || horizon <= 0.0 {
        return Err(Error::config("horizon must be positive"));
    }
    if contents.is_empty() {
        return Err(Error::config(
            "shot-noise generator needs at least one content",
        ));
    }
    let width = pad_width(contents.len());
    let mut rows = Vec::new();
    for (idx, content) in contents.iter().enumerate() {
        content.shape.validate()?;
        if content.volume.is_nan() || content.volume <= 0.0 {
            return Err(Error::config(format!(
                "content {idx}: volume must be positive"
            )));
        }
        let name = content
            .name
            .clone()
            .unwrap_or_else(|| format!("c{idx:0width$}"));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64);

        // Thinning against the constant bound V_c · max λ.
        let bound = content.volume * content.shape.max_density();
        let gap = Exp::new(bound).map_err(|e| Error::config(e.to_string()))?;
        let end = horizon.min(content.birth + content.shape.support());
        let mut t = content.birth.max(0.0);
        loop {
            t += gap.sample(&mut rng);
            if t >= end {
                break;
            }
            let accept: f64 = rng.random();
            if accept * bound < content.rate(t) {
                rows.push(RawRequest::new(t, name.clone()));
            }
        }
    }
    rows.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(rows)
}

/// Merges independent inhomogeneous Poisson streams with rates `V_c λ(t − τ_c)`
/// over `[0, horizon)`.
pub fn generate_shot_noise_trace(
    contents: &[ShotNoiseContent],
    horizon: f64,
    seed: u64,
) -> Result<Trace> {
    Trace::from_raw(sample_shot_noise(contents, horizon, seed)?)
}

/// Normalised Zipf probabilities `p_i ∝ i^-s`, `i = 1..=n`.
pub fn zipf_weights(catalog_size: usize, exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=catalog_size)
        .map(|i| (i as f64).powf(-exponent))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn sample_zipf(
    catalog_size: usize,
    exponent: f64,
    num_requests: usize,
    mean_rate: f64,
    prefix: &str,
    seed: u64,
) -> Result<Vec<RawRequest>> {
    if catalog_size == 0 {
        return Err(Error::config("catalog_size must be at least 1"));
    }
    if exponent.is_nan() || exponent <= 0.0 || mean_rate.is_nan() || mean_rate <= 0.0 {
        return Err(Error::config(
            "zipf exponent and mean_rate must be positive",
        ));
    }
    let width = pad_width(catalog_size);
    let names: Vec<String> = (0..catalog_size)
        .map(|i| format!("{prefix}{i:0width$}"))
        .collect();
    let picker = WeightedIndex::new(zipf_weights(catalog_size, exponent))
        .map_err(|e| Error::config(e.to_string()))?;
    let gap = Exp::new(mean_rate).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0;
    let mut rows = Vec::with_capacity(num_requests);
    for _ in 0..num_requests {
        t += gap.sample(&mut rng);
        rows.push(RawRequest::new(t, names[picker.sample(&mut rng)].clone()));
    }
    Ok(rows)
}

/// Stationary IRM stream: items drawn i.i.d. from Zipf(`exponent`), Poisson
/// arrivals at `mean_rate` requests per second. Item `i` (0-based rank) is
/// named by its zero-padded rank.
pub fn generate_zipf_irm_trace(
    catalog_size: usize,
    zipf_exponent: f64,
    num_requests: usize,
    mean_rate: f64,
    seed: u64,
) -> Result<Trace> {
    Trace::from_raw(sample_zipf(
        catalog_size,
        zipf_exponent,
        num_requests,
        mean_rate,
        "",
        seed,
    )?)
}

/// JSON description of a synthetic trace, consumed by `cec gen-trace`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    ShotNoise {
        horizon: f64,
        contents: Vec<ShotNoiseContent>,
    },
    ZipfIrm {
        catalog_size: usize,
        exponent: f64,
        num_requests: usize,
        mean_rate: f64,
        /// Prepended to every item name; distinct prefixes give disjoint catalogs.
        #[serde(default)]
        prefix: String,
    },
    /// Superposition of the parts on a common clock.
    Merge { parts: Vec<GeneratorSpec> },
    /// Parts played one after another, each shifted to start where the
    /// previous one ended.
    Concat { parts: Vec<GeneratorSpec> },
}

impl GeneratorSpec {
    fn sample(&self, seed: u64) -> Result<Vec<RawRequest>> {
        match self {
            GeneratorSpec::ShotNoise { horizon, contents } => {
                sample_shot_noise(contents, *horizon, seed)
            }
            GeneratorSpec::ZipfIrm {
                catalog_size,
                exponent,
                num_requests,
                mean_rate,
                prefix,
            } => sample_zipf(
                *catalog_size,
                *exponent,
                *num_requests,
                *mean_rate,
                prefix,
                seed,
            ),
            GeneratorSpec::Merge { parts } => {
                let mut rows = Vec::new();
                for (i, part) in parts.iter().enumerate() {
                    rows.extend(part.sample(derive_seed(seed, i as u64))?);
                }
                rows.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
                Ok(rows)
            }
            GeneratorSpec::Concat { parts } => {
                let mut rows: Vec<RawRequest> = Vec::new();
                let mut offset = 0.0;
                for (i, part) in parts.iter().enumerate() {
                    let part_rows = part.sample(derive_seed(seed, i as u64))?;
                    let shift = offset;
                    rows.extend(part_rows.into_iter().map(|mut r| {
                        r.timestamp += shift;
                        r
                    }));
                    offset = rows.last().map_or(offset, |r| r.timestamp);
                }
                Ok(rows)
            }
        }
    }
}

pub fn generate_from_spec(spec: &GeneratorSpec, seed: u64) -> Result<Trace> {
    Trace::from_raw(spec.sample(seed)?)
}
