use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ManifestRow, Split};

use super::{LearnError, LearnResult};

/// Some class had fewer than two samples, so the split fell back to a
/// global shuffle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratifyWarning {
    pub small_classes: Vec<String>,
}

impl std::fmt::Display for StratifyWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "classes with fewer than 2 samples ({}); using an unstratified split",
            self.small_classes.join(", ")
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    pub warning: Option<StratifyWarning>,
}

fn train_count(n: usize, ratio: f64) -> usize {
    let k = (ratio * n as f64).round() as usize;
    if n >= 2 {
        k.clamp(1, n - 1)
    } else {
        k.min(n)
    }
}

/// Seeded stratified split of row indices by label. Each class keeps
/// `round(ratio * n_c)` rows for training, clamped so a class with two or
/// more rows lands in both partitions. Indices come back in ascending order.
pub fn split_indices<S: AsRef<str>>(labels: &[S], ratio: f64, seed: u64) -> LearnResult<SplitOutcome<usize>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(LearnError::Config(format!("split ratio {ratio} must lie in (0, 1)")));
    }
    if labels.is_empty() {
        return Err(LearnError::Config("cannot split an empty dataset".into()));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l.as_ref()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let small: Vec<String> = by_class
        .iter()
        .filter(|(_, idx)| idx.len() < 2)
        .map(|(l, _)| l.to_string())
        .collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let warning = if small.is_empty() {
        for idx in by_class.values_mut() {
            idx.shuffle(&mut rng);
            let k = train_count(idx.len(), ratio);
            train.extend_from_slice(&idx[..k]);
            test.extend_from_slice(&idx[k..]);
        }
        None
    } else {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        let k = train_count(all.len(), ratio);
        train.extend_from_slice(&all[..k]);
        test.extend_from_slice(&all[k..]);
        let w = StratifyWarning { small_classes: small };
        log::warn!("{w}");
        Some(w)
    };
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitOutcome { train, test, warning })
}

/// Splits manifest rows and marks each with its partition.
pub fn split_dataset(rows: &[ManifestRow], ratio: f64, seed: u64) -> LearnResult<SplitOutcome<ManifestRow>> {
    let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    let idx = split_indices(&labels, ratio, seed)?;
    let take = |ids: &[usize], split: Split| -> Vec<ManifestRow> {
        ids.iter()
            .map(|&i| ManifestRow {
                split,
                ..rows[i].clone()
            })
            .collect()
    };
    Ok(SplitOutcome {
        train: take(&idx.train, Split::Train),
        test: take(&idx.test, Split::Test),
        warning: idx.warning,
    })
}
