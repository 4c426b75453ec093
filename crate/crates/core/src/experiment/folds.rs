use rand::seq::SliceRandom;

use crate::util::rng;
use crate::{Error, Result};

/// Stratified fold assignment: every class is shuffled and dealt round-robin,
/// continuing where the previous class stopped so fold sizes stay balanced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    assignment: Vec<usize>,
    n_folds: usize,
}

const STREAM_FOLDS: u64 = 20;

impl FoldPlan {
    pub fn stratified(labels: &[u32], n_folds: usize, seed: u64) -> Result<FoldPlan> {
        if n_folds < 2 {
            return Err(Error::param("n_folds", "must be >= 2"));
        }
        let mut classes: Vec<u32> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let mut r = rng(seed, STREAM_FOLDS);
        let mut assignment = vec![0; labels.len()];
        let mut next = 0;
        for c in classes {
            let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            if members.len() < n_folds {
                return Err(Error::Degenerate(format!(
                    "class {c} has {} trials, fewer than {n_folds} folds",
                    members.len()
                )));
            }
            members.shuffle(&mut r);
            for i in members {
                assignment[i] = next % n_folds;
                next += 1;
            }
        }
        Ok(FoldPlan {
            assignment,
            n_folds,
        })
    }

    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn fold_of(&self, trial: usize) -> usize {
        self.assignment[trial]
    }

    pub fn test(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    /// Fails if any of `trials` belongs to the held-out `fold`.
    pub fn check_training_provenance(&self, fold: usize, trials: &[usize]) -> Result<()> {
        match trials.iter().find(|&&t| self.assignment[t] == fold) {
            Some(t) => Err(Error::Degenerate(format!(
                "trial {t} of held-out fold {fold} reached training"
            ))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn folds_are_stratified(counts in proptest::collection::vec(5usize..40, 2..5), k in 2usize..6, seed in 0u64..100) {
            let labels: Vec<u32> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c as u32, n)).collect();
            let plan = FoldPlan::stratified(&labels, k, seed).unwrap();
            for (c, &n) in counts.iter().enumerate() {
                for f in 0..k {
                    let in_fold = plan.test(f).iter().filter(|&&i| labels[i] == c as u32).count() as f64;
                    prop_assert!((in_fold - n as f64 / k as f64).abs() <= 1.0);
                }
            }
            for f in 0..k {
                let train = plan.train(f);
                prop_assert!(plan.check_training_provenance(f, &train).is_ok());
                prop_assert_eq!(train.len() + plan.test(f).len(), labels.len());
            }
        }
    }

    #[test]
    fn too_few_trials_per_class() {
        assert!(FoldPlan::stratified(&[0, 0, 1, 1, 1], 3, 0).is_err());
    }

    #[test]
    fn provenance_violation_is_detected() {
        let labels = [0, 0, 0, 1, 1, 1];
        let plan = FoldPlan::stratified(&labels, 3, 0).unwrap();
        assert!(plan.check_training_provenance(0, &plan.test(0)).is_err());
    }
}
