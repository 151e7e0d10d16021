use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, Stream, TrainingError};
use crate::signal_io::Label;

/// Validation share in per-mille.
pub const VALID_PERMILLE: usize = 150;
/// Test share in per-mille.
pub const TEST_PERMILLE: usize = 100;
/// Smallest class size a split plan accepts.
pub const MIN_PER_CLASS: usize = 10;

/// `(train, valid, test)` sizes for one class of `n` items.
///
/// Valid and test round half-up from 15 % and 10 %; train takes the rest.
pub fn class_split_sizes(n: usize) -> (usize, usize, usize) {
    let valid = (n * VALID_PERMILLE + 500) / 1000;
    let test = (n * TEST_PERMILLE + 500) / 1000;
    (n - valid - test, valid, test)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// K independent stratified shuffle splits over item indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub seed: u64,
    pub folds: Vec<FoldSplit>,
}

pub fn make_splits(labels: &[Label], folds: usize, seed: u64) -> Result<SplitPlan, TrainingError> {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, l) in labels.iter().enumerate() {
        by_class[l.as_u8() as usize].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < MIN_PER_CLASS {
            return Err(TrainingError::TooFewSamples {
                label: Label::from_u8(c as u8).unwrap(),
                count: members.len(),
                needed: MIN_PER_CLASS,
            });
        }
    }
    let folds = (0..folds)
        .map(|k| {
            let mut fold = FoldSplit {
                train: Vec::new(),
                valid: Vec::new(),
                test: Vec::new(),
            };
            for (c, members) in by_class.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Split, k as u64, c as u64));
                let mut shuffled = members.clone();
                shuffled.shuffle(&mut rng);
                let (_, valid, test) = class_split_sizes(shuffled.len());
                fold.test.extend_from_slice(&shuffled[..test]);
                fold.valid.extend_from_slice(&shuffled[test..test + valid]);
                fold.train.extend_from_slice(&shuffled[test + valid..]);
            }
            fold.train.sort_unstable();
            fold.valid.sort_unstable();
            fold.test.sort_unstable();
            fold
        })
        .collect();
    Ok(SplitPlan { seed, folds })
}
