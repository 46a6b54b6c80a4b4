use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::index::{DatasetIndex, DatasetRecord};
use super::{class_name, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::seeding::mix_seeds;

/// Stratified train/validation split.
///
/// Per class the train share is `floor(train_frac * class_count)`, then +1
/// is granted to the classes with the largest fractional remainders (ties
/// broken by ascending class id) until the global train total equals
/// `round(train_frac * total)`. Which samples land where is driven only by
/// `seed`; the two result indexes are disjoint and their union is the input.
pub fn stratified_split(
    index: &DatasetIndex,
    train_frac: f64,
    seed: u64,
) -> Result<(DatasetIndex, DatasetIndex)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config {
            what: format!("train fraction must be strictly between 0 and 1, got {train_frac}"),
        });
    }
    if index.is_empty() {
        return Err(Error::Split { what: "index has no records".into() });
    }
    let counts = index.per_class_counts();
    for &class in index.declared_classes() {
        if counts[class] == 0 {
            return Err(Error::Split {
                what: format!("class {} has no images", class_name(class).unwrap_or("?")),
            });
        }
    }

    // per-class record positions
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, r) in index.records().iter().enumerate() {
        by_class[r.class_id].push(i);
    }

    let total_train = (train_frac * index.len() as f64).round() as usize;
    let mut base: Vec<usize> = Vec::with_capacity(NUM_CLASSES);
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    for (class, positions) in by_class.iter().enumerate() {
        let exact = train_frac * positions.len() as f64;
        let b = exact.floor() as usize;
        base.push(b);
        if !positions.is_empty() {
            remainders.push((class, exact - b as f64));
        }
    }
    let assigned: usize = base.iter().sum();
    let mut need = total_train.saturating_sub(assigned);
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (class, _) in remainders {
        if need == 0 {
            break;
        }
        if base[class] < by_class[class].len() {
            base[class] += 1;
            need -= 1;
        }
    }

    let mut train_records: Vec<DatasetRecord> = Vec::with_capacity(total_train);
    let mut val_records: Vec<DatasetRecord> = Vec::with_capacity(index.len() - total_train);
    for (class, positions) in by_class.iter().enumerate() {
        if positions.is_empty() {
            continue;
        }
        let mut shuffled = positions.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seeds(&[seed, class as u64, 0x5917]));
        shuffled.shuffle(&mut rng);
        for (rank, &pos) in shuffled.iter().enumerate() {
            let record = index.records()[pos].clone();
            if rank < base[class] {
                train_records.push(record);
            } else {
                val_records.push(record);
            }
        }
    }

    let train = DatasetIndex::from_records(index.root(), train_records)?;
    let val = DatasetIndex::from_records(index.root(), val_records)?;
    Ok((train, val))
}
