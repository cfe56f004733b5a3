use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::SubjectId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test_subject: SubjectId,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per subject, in order of first appearance; `subjects[i]` is the
/// owner of segment `i`.
pub fn loso_folds(subjects: &[SubjectId]) -> Result<Vec<Fold>> {
    let mut order: Vec<&SubjectId> = Vec::new();
    let mut seen = HashSet::new();
    for s in subjects {
        if seen.insert(s) {
            order.push(s);
        }
    }
    if order.len() < 2 {
        return Err(Error::invalid(format!("leave-one-subject-out needs >= 2 subjects, found {}", order.len())));
    }
    let folds: Vec<Fold> = order
        .into_iter()
        .map(|held| {
            let (test, train) = (0..subjects.len()).partition(|&i| &subjects[i] == held);
            Fold { test_subject: held.clone(), train, test }
        })
        .collect();
    for f in &folds {
        check_fold(f, subjects)?;
    }
    Ok(folds)
}

/// Runtime leak check: the held-out subject owns exactly the test segments
/// and none of the training ones.
pub fn check_fold(fold: &Fold, subjects: &[SubjectId]) -> Result<()> {
    let leak = fold.train.iter().any(|&i| subjects[i] == fold.test_subject)
        || fold.test.iter().any(|&i| subjects[i] != fold.test_subject);
    let covered = fold.train.len() + fold.test.len() == subjects.len();
    if leak || !covered {
        return Err(Error::invalid(format!("fold for subject {} mixes train and test subjects", fold.test_subject)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<SubjectId> {
        v.iter().map(|s| SubjectId::new(*s).unwrap()).collect()
    }

    #[test]
    fn two_subjects() {
        let s = ids(&["a", "a", "b", "a", "b", "b"]);
        let folds = loso_folds(&s).unwrap();
        assert_eq!(folds.len(), 2);
        assert_eq!(folds[0].test, vec![0, 1, 3]);
        assert_eq!(folds[0].train, vec![2, 4, 5]);
        assert_eq!(folds[1].test.len(), 3);
    }

    #[test]
    fn single_subject_fails() {
        assert!(loso_folds(&ids(&["a", "a"])).is_err());
        assert!(loso_folds(&[]).is_err());
    }

    #[test]
    fn leak_detected() {
        let s = ids(&["a", "b"]);
        let bad = Fold { test_subject: s[0].clone(), train: vec![0, 1], test: vec![] };
        assert!(check_fold(&bad, &s).is_err());
    }
}
