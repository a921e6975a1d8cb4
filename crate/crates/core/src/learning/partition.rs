use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::data::{DeviceDataset, Sample};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Splits `dataset` into label-skewed shards.
///
/// The labels present are shuffled into a class order, and device `d` is handed the
/// `classes_per_device` consecutive entries starting at `d * classes_per_device`, wrapping
/// around when there are more slots than classes. Each class's samples are shuffled and dealt
/// in near-equal contiguous chunks to the devices that hold it, so every sample lands in
/// exactly one shard.
///
/// A single device receives the whole dataset unchanged.
pub fn partition_noniid(
    dataset: &[Sample],
    n_devices: usize,
    classes_per_device: usize,
    rng: &mut SimRng,
) -> Result<Vec<DeviceDataset>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if classes_per_device < 1 {
        return Err(Error::InvalidArgument(
            "classes_per_device must be at least 1".into(),
        ));
    }
    if n_devices < 1 {
        return Err(Error::InvalidArgument("n_devices must be at least 1".into()));
    }
    if n_devices == 1 {
        return Ok(vec![DeviceDataset::new(dataset.to_vec())?]);
    }

    let mut by_label: BTreeMap<usize, Vec<&Sample>> = BTreeMap::new();
    for s in dataset {
        by_label.entry(s.label).or_default().push(s);
    }
    let mut order: Vec<usize> = by_label.keys().copied().collect();
    let slots = n_devices * classes_per_device;
    if slots < order.len() {
        return Err(Error::InvalidArgument(format!(
            "{n_devices} devices x {classes_per_device} classes cannot cover {} labels",
            order.len()
        )));
    }
    order.shuffle(rng);

    let device_labels: Vec<Vec<usize>> = (0..n_devices)
        .map(|d| {
            let mut labels: Vec<usize> = (0..classes_per_device)
                .map(|j| order[(d * classes_per_device + j) % order.len()])
                .collect();
            labels.sort_unstable();
            labels.dedup();
            labels
        })
        .collect();

    let mut shards: Vec<Vec<Sample>> = vec![Vec::new(); n_devices];
    for (&label, samples) in by_label.iter_mut() {
        samples.shuffle(rng);
        let holders: Vec<usize> = (0..n_devices)
            .filter(|d| device_labels[*d].contains(&label))
            .collect();
        let per = samples.len() / holders.len();
        let extra = samples.len() % holders.len();
        let mut cursor = 0;
        for (i, &d) in holders.iter().enumerate() {
            let take = per + usize::from(i < extra);
            shards[d].extend(samples[cursor..cursor + take].iter().map(|s| (*s).clone()));
            cursor += take;
        }
    }

    shards
        .into_iter()
        .enumerate()
        .map(|(d, shard)| {
            DeviceDataset::new(shard).map_err(|_| {
                Error::InvalidArgument(format!("device {d} received no samples; dataset too small"))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::label_histogram;
    use crate::rng::seeded;

    fn balanced(classes: usize, per_class: usize) -> Vec<Sample> {
        (0..classes * per_class)
            .map(|i| Sample::new(vec![i as f64], i / per_class))
            .collect()
    }

    fn sorted_keys(samples: &[Sample]) -> Vec<(usize, u64)> {
        let mut keys: Vec<_> = samples
            .iter()
            .map(|s| (s.label, s.features[0].to_bits()))
            .collect();
        keys.sort_unstable();
        keys
    }

    #[test]
    fn ten_devices_one_class_each_are_single_label() {
        let data = balanced(10, 900);
        let shards = partition_noniid(&data, 10, 1, &mut seeded(0)).unwrap();
        assert_eq!(shards.len(), 10);
        for shard in &shards {
            let hist = label_histogram(shard.samples(), 10);
            assert_eq!(hist.iter().filter(|c| **c > 0).count(), 1);
            assert_eq!(shard.beta(), 900);
        }
    }

    #[test]
    fn single_device_is_identity() {
        let data = balanced(3, 5);
        let shards = partition_noniid(&data, 1, 1, &mut seeded(0)).unwrap();
        assert_eq!(shards[0].samples(), data.as_slice());
    }

    #[test]
    fn four_devices_two_classes_cover_each_class_once() {
        let data = balanced(8, 20);
        let shards = partition_noniid(&data, 4, 2, &mut seeded(5)).unwrap();
        let mut owners = [0usize; 8];
        for shard in &shards {
            let hist = label_histogram(shard.samples(), 8);
            assert!(hist.iter().filter(|c| **c > 0).count() <= 2);
            for (c, n) in hist.iter().enumerate() {
                if *n > 0 {
                    owners[c] += 1;
                    assert_eq!(*n, 20);
                }
            }
        }
        assert_eq!(owners, [1; 8]);
    }

    #[test]
    fn partition_preserves_the_multiset_and_is_deterministic() {
        let data = balanced(10, 31);
        let a = partition_noniid(&data, 7, 2, &mut seeded(3)).unwrap();
        let b = partition_noniid(&data, 7, 2, &mut seeded(3)).unwrap();
        assert_eq!(a, b);
        let merged: Vec<Sample> = a.into_iter().flat_map(|s| s.into_samples()).collect();
        assert_eq!(sorted_keys(&merged), sorted_keys(&data));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            partition_noniid(&[], 2, 1, &mut seeded(0)),
            Err(Error::EmptyDataset)
        ));
        let data = balanced(4, 2);
        assert!(partition_noniid(&data, 2, 0, &mut seeded(0)).is_err());
        assert!(partition_noniid(&data, 2, 1, &mut seeded(0)).is_err());
    }
}
