use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// One labelled example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

/// The local shard held by one device. Never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceDataset {
    samples: Vec<Sample>,
}

impl DeviceDataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = samples[0].features.len();
        if let Some(bad) = samples.iter().find(|s| s.features.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.features.len(),
            });
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Number of local samples.
    pub fn beta(&self) -> usize {
        self.samples.len()
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }
}

/// Counts labels `0..classes`; labels outside the range are ignored.
pub fn label_histogram(samples: &[Sample], classes: usize) -> Vec<usize> {
    let mut hist = vec![0; classes];
    for s in samples {
        if s.label < classes {
            hist[s.label] += 1;
        }
    }
    hist
}

/// Balanced Gaussian-mixture classification task.
///
/// Class means are drawn once from `N(0, separation^2 I)`; each sample is its class mean
/// plus `N(0, noise^2 I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub input_dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub separation: f64,
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            input_dim: 20,
            train_per_class: 300,
            test_per_class: 100,
            separation: 1.0,
            noise: 1.0,
        }
    }
}

/// Draws `(train, test)` for `spec`. Samples come out grouped by class, class 0 first.
pub fn gaussian_mixture(spec: &SyntheticSpec, rng: &mut SimRng) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if spec.classes == 0 || spec.input_dim == 0 || spec.train_per_class == 0 {
        return Err(Error::InvalidArgument(
            "synthetic task needs classes, input_dim and train_per_class > 0".into(),
        ));
    }
    let centre =
        Normal::new(0.0, spec.separation).map_err(|e| Error::InvalidArgument(format!("separation: {e}")))?;
    let jitter = Normal::new(0.0, spec.noise).map_err(|e| Error::InvalidArgument(format!("noise: {e}")))?;

    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..spec.input_dim).map(|_| centre.sample(rng)).collect())
        .collect();

    let draw = |count: usize, rng: &mut SimRng| {
        let mut out = Vec::with_capacity(count * spec.classes);
        for (label, mean) in means.iter().enumerate() {
            for _ in 0..count {
                let features = mean.iter().map(|m| m + jitter.sample(rng)).collect();
                out.push(Sample::new(features, label));
            }
        }
        out
    };
    let train = draw(spec.train_per_class, rng);
    let test = draw(spec.test_per_class, rng);
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn empty_shard_is_rejected() {
        assert!(matches!(DeviceDataset::new(vec![]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn ragged_features_are_rejected() {
        let r = DeviceDataset::new(vec![Sample::new(vec![0.0; 3], 0), Sample::new(vec![0.0; 2], 1)]);
        assert!(matches!(
            r,
            Err(Error::DimensionMismatch {
                expected: 3,
                actual: 2
            })
        ));
    }

    #[test]
    fn mixture_is_balanced_and_reproducible() {
        let spec = SyntheticSpec {
            train_per_class: 7,
            test_per_class: 3,
            ..SyntheticSpec::default()
        };
        let (train, test) = gaussian_mixture(&spec, &mut seeded(1)).unwrap();
        assert_eq!(label_histogram(&train, 10), vec![7; 10]);
        assert_eq!(label_histogram(&test, 10), vec![3; 10]);
        let (again, _) = gaussian_mixture(&spec, &mut seeded(1)).unwrap();
        assert_eq!(train, again);
    }
}
