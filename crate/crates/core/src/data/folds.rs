use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, STREAM_FOLDS, STREAM_HOLDOUT};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }
}

/// Shuffles each class with a seeded RNG and deals it round-robin over the
/// folds. The dealing position carries over from one class to the next so
/// fold sizes stay within one of each other as well.
pub fn stratified_k_fold(labels: &[u8], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("k_folds must be at least 2, got {k}")));
    }
    let mut rng = stream_rng(seed, STREAM_FOLDS);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::Data(format!(
                "class {class} has {} members, fewer than k = {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for row in members {
            assignment[row] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { k, assignment, seed })
}

/// Splits `rows` into (train, holdout), moving `round(fraction * count)`
/// members of each class (at least one, never all) into the holdout.
pub fn stratified_holdout(rows: &[usize], labels: &[u8], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("holdout fraction must lie in (0, 1), got {fraction}")));
    }
    let mut rng = stream_rng(seed, STREAM_HOLDOUT);
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for class in [0u8, 1] {
        let mut members: Vec<usize> = rows.iter().copied().filter(|&r| labels[r] == class).collect();
        if members.len() < 2 {
            return Err(Error::Data(format!(
                "class {class} has {} rows; cannot carve a stratified holdout",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let take = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        holdout.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    holdout.sort_unstable();
    Ok((train, holdout))
}
