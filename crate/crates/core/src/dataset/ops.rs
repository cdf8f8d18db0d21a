use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Condition, Dataset, DatasetError, ImageRecord};

/// Number of training records for a split of `n` records.
///
/// Truncates toward zero: 911 records at 0.70 yields 637 training records.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    // The epsilon absorbs representation error such as 0.7 * 800 = 559.999...
    ((train_fraction * n as f64) + 1e-9).floor() as usize
}

/// Seeded random partition into `(train, val)`. Both halves keep the original
/// record order.
pub fn split_dataset(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::Argument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if ds.len() < 2 {
        return Err(DatasetError::Argument(format!(
            "cannot split dataset '{}' with {} record(s)",
            ds.name(),
            ds.len()
        )));
    }
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = train_count(n, train_fraction);
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let (mut train, mut val) = (Vec::with_capacity(n_train), Vec::with_capacity(n - n_train));
    for (i, r) in ds.records().iter().enumerate() {
        if in_train[i] {
            train.push(r.clone());
        } else {
            val.push(r.clone());
        }
    }
    let meta = ds.metadata().clone();
    Ok((
        Dataset::new(format!("{}_train", ds.name()), ds.condition(), ds.class_map().clone(), train)?
            .with_metadata(meta.clone()),
        Dataset::new(format!("{}_val", ds.name()), ds.condition(), ds.class_map().clone(), val)?
            .with_metadata(meta),
    ))
}

/// Concatenates datasets. With more than one part, record ids are namespaced
/// as `<part name>/<id>`; the result is `mixed` unless every part shares a
/// condition.
pub fn merge_datasets(parts: &[Dataset]) -> Result<Dataset, DatasetError> {
    let Some(first) = parts.first() else {
        return Err(DatasetError::Merge("nothing to merge".into()));
    };
    if parts.len() == 1 {
        return Ok(first.clone());
    }
    for p in &parts[1..] {
        if p.class_map() != first.class_map() {
            return Err(DatasetError::Merge(format!(
                "class map of '{}' differs from '{}'",
                p.name(),
                first.name()
            )));
        }
    }
    let mut names = BTreeSet::new();
    for p in parts {
        if !names.insert(p.name()) {
            return Err(DatasetError::Merge(format!("part name '{}' appears twice", p.name())));
        }
    }
    let condition = if parts.iter().all(|p| p.condition() == first.condition()) {
        first.condition()
    } else {
        Condition::Mixed
    };
    let records: Vec<ImageRecord> = parts
        .iter()
        .flat_map(|p| {
            p.records().iter().map(move |r| ImageRecord {
                id: format!("{}/{}", p.name(), r.id),
                ..r.clone()
            })
        })
        .collect();
    let name = parts.iter().map(|p| p.name()).collect::<Vec<_>>().join("+");
    Dataset::new(name, condition, first.class_map().clone(), records)
        .map_err(|e| DatasetError::Merge(e.to_string()))
}
