use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equal-mass partition of inter-arrival gaps into categorical bins.
///
/// `boundaries` are strictly increasing; a gap `δ` falls in bin
/// `#{b ∈ boundaries : b ≤ δ}`. Each bin carries the median of the training
/// gaps that fell into it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantilePartitioner {
    pub requested: usize,
    pub boundaries: Vec<f64>,
    pub representatives: Vec<f64>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

impl QuantilePartitioner {
    pub fn fit(samples: &[f64], partitions: usize) -> Result<Self> {
        if partitions == 0 {
            return Err(Error::config("need at least one partition"));
        }
        if samples.len() < partitions {
            return Err(Error::usage(format!(
                "{} samples cannot fill {partitions} partitions",
                samples.len()
            )));
        }
        if samples.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::usage("gaps must be finite and non-negative"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();

        let mut boundaries: Vec<f64> = Vec::with_capacity(partitions - 1);
        for i in 1..partitions {
            // first index of the upper part at quantile i/P
            let k = ((i * n) as f64 / partitions as f64).round() as usize;
            let k = k.clamp(1, n - 1);
            let (lo, hi) = (sorted[k - 1], sorted[k]);
            let b = if lo < hi {
                0.5 * (lo + hi)
            } else {
                // tie straddles the quantile: split above the tied value
                match sorted[k..].iter().find(|v| **v > lo) {
                    Some(next) => 0.5 * (lo + next),
                    None => continue,
                }
            };
            if boundaries.last().is_none_or(|last| b > *last) {
                boundaries.push(b);
            }
        }
        if boundaries.len() + 1 < partitions {
            log::warn!(
                "only {} distinct partitions out of {partitions} requested; duplicate boundaries collapsed",
                boundaries.len() + 1
            );
        }

        let mut representatives = Vec::with_capacity(boundaries.len() + 1);
        let mut start = 0;
        for bin in 0..=boundaries.len() {
            let end = if bin < boundaries.len() {
                sorted.partition_point(|v| *v < boundaries[bin])
            } else {
                n
            };
            representatives.push(median(&sorted[start..end]));
            start = end;
        }
        Ok(Self {
            requested: partitions,
            boundaries,
            representatives,
        })
    }

    /// Effective number of bins after collapsing duplicates.
    pub fn num_bins(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn bin(&self, gap: f64) -> usize {
        self.boundaries.partition_point(|b| *b <= gap)
    }

    pub fn representative(&self, bin: usize) -> f64 {
        self.representatives[bin]
    }

    pub fn top_bin(&self) -> usize {
        self.num_bins() - 1
    }

    pub fn one_hot(&self, gap: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.num_bins()];
        v[self.bin(gap)] = 1.0;
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn midpoint_boundaries() {
        let p = QuantilePartitioner::fit(&[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0], 4).unwrap();
        assert_eq!(p.boundaries, vec![1.5, 2.5, 3.5]);
        assert_eq!(p.bin(2.2) + 1, 2);
        assert_eq!(p.representatives, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn single_partition() {
        let p = QuantilePartitioner::fit(&[5.0, 1.0, 3.0], 1).unwrap();
        assert!(p.boundaries.is_empty());
        assert_eq!(p.bin(1e9), 0);
        assert_eq!(p.representative(0), 3.0);
    }

    #[test]
    fn duplicates_collapse() {
        let mut samples = vec![1.0; 50];
        samples.extend(vec![10.0; 50]);
        let p = QuantilePartitioner::fit(&samples, 16).unwrap();
        assert_eq!(p.boundaries, vec![5.5]);
        assert_eq!(p.num_bins(), 2);
        assert_eq!(p.representatives, vec![1.0, 10.0]);
        let constant = QuantilePartitioner::fit(&[2.0; 20], 4).unwrap();
        assert_eq!(constant.num_bins(), 1);
    }

    #[test]
    fn too_few_samples() {
        assert!(QuantilePartitioner::fit(&[1.0, 2.0], 3).is_err());
        assert!(QuantilePartitioner::fit(&[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn uniform_occupancy() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let p = QuantilePartitioner::fit(&samples, 16).unwrap();
        let mut occ = vec![0usize; p.num_bins()];
        for s in &samples {
            occ[p.bin(*s)] += 1;
        }
        assert_eq!(occ.len(), 16);
        for o in occ {
            assert!((o as f64 - 625.0).abs() / 625.0 <= 0.05, "occupancy {o}");
        }
    }

    proptest! {
        #[test]
        fn bins_are_monotone_and_nonempty(xs in prop::collection::vec((0u32..50).prop_map(f64::from), 16..300), a in 0.0f64..60.0, b in 0.0f64..60.0) {
            let p = QuantilePartitioner::fit(&xs, 16).unwrap();
            prop_assert!(p.boundaries.windows(2).all(|w| w[0] < w[1]));
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(p.bin(lo) <= p.bin(hi));
            let mut occ = vec![0usize; p.num_bins()];
            for s in &xs { occ[p.bin(*s)] += 1; }
            prop_assert!(occ.iter().all(|o| *o >= 1));
        }

        #[test]
        fn distinct_samples_are_balanced(n in 16usize..400, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 100.0).collect();
            let p = QuantilePartitioner::fit(&xs, 16).unwrap();
            prop_assert_eq!(p.num_bins(), 16);
            let mut occ = vec![0usize; 16];
            for s in &xs { occ[p.bin(*s)] += 1; }
            let target = n as f64 / 16.0;
            prop_assert!(occ.iter().all(|o| (*o as f64 - target).abs() <= 1.0), "{:?}", occ);
        }
    }
}
