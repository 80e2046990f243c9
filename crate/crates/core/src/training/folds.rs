use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified `k`-fold split.
///
/// Each class is shuffled with the seed and dealt round-robin over the
/// folds, continuing where the previous class stopped, so every fold holds
/// `⌊n_c/k⌋` or `⌈n_c/k⌉` samples of class `c` and fold sizes differ by at
/// most one. Index lists are sorted.
pub fn kfold_split(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Fold>> {
    if folds < 2 {
        return Err(Error::Contract(format!("need at least 2 folds, got {folds}")));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let present: Vec<&Vec<usize>> = by_class.iter().filter(|c| !c.is_empty()).collect();
    let smallest = present.iter().map(|c| c.len()).min().unwrap_or(0);
    if folds > smallest {
        return Err(Error::Contract(format!("{folds} folds but the smallest class has {smallest} samples")));
    }
    let mut rng = substream(seed, "kfold");
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); folds];
    let mut slot = 0;
    for members in present {
        let mut members = members.clone();
        members.shuffle(&mut rng);
        for i in members {
            tests[slot % folds].push(i);
            slot += 1;
        }
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; labels.len()];
            test.iter().for_each(|&i| in_test[i] = true);
            let train = (0..labels.len()).filter(|&i| !in_test[i]).collect();
            Fold { train, test }
        })
        .collect())
}
