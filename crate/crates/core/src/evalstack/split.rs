use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EvalError, NUM_CLASSES};
use crate::lexmodel::SentimentClass;
use crate::senti::LabeledSentence;

pub trait Labeled {
    fn label(&self) -> Option<SentimentClass>;
}

impl Labeled for LabeledSentence {
    fn label(&self) -> Option<SentimentClass> {
        self.label
    }
}

impl Labeled for SentimentClass {
    fn label(&self) -> Option<SentimentClass> {
        Some(*self)
    }
}

/// Stratified split: each class contributes `round(ratio * n_class)` samples
/// to the training side, chosen by a seeded shuffle. Both sides keep the
/// input order.
pub fn split_dataset<T: Labeled + Clone>(samples: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>), EvalError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(EvalError::Ratio(ratio));
    }
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut by_class: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, s) in samples.iter().enumerate() {
        let label = s.label().ok_or(EvalError::Unlabeled(i))?;
        by_class[label.index()].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; samples.len()];
    for indices in &mut by_class {
        indices.shuffle(&mut rng);
        let n_train = (ratio * indices.len() as f64).round() as usize;
        for &i in &indices[..n_train] {
            in_train[i] = true;
        }
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (s, &t) in samples.iter().zip(&in_train) {
        if t {
            train.push(s.clone());
        } else {
            test.push(s.clone());
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use SentimentClass::{Negative as N, Neutral as U, Positive as P};

    fn count(xs: &[SentimentClass], c: SentimentClass) -> usize {
        xs.iter().filter(|x| **x == c).count()
    }

    #[test]
    fn exact_stratification() {
        let samples: Vec<SentimentClass> = [P; 5].into_iter().chain([N; 5]).collect();
        let (train, test) = split_dataset(&samples, 0.8, 1).unwrap();
        assert_eq!((count(&train, P), count(&train, N)), (4, 4));
        assert_eq!((count(&test, P), count(&test, N)), (1, 1));
    }

    #[test]
    fn deterministic_for_seed() {
        let samples: Vec<LabeledSentence> = (0..40)
            .map(|i| LabeledSentence::new(i.to_string(), "x", crate::Language::Zulu, Some(SentimentClass::ORDER[i % 3])))
            .collect();
        let a = split_dataset(&samples, 0.8, 42).unwrap();
        let b = split_dataset(&samples, 0.8, 42).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&samples, 0.8, 43).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn per_class_rounding() {
        let samples: Vec<SentimentClass> =
            [P].repeat(562).into_iter().chain([U].repeat(310)).chain([N].repeat(128)).collect();
        let (train, test) = split_dataset(&samples, 0.8, 7).unwrap();
        assert_eq!((count(&train, P), count(&train, U), count(&train, N)), (450, 248, 102));
        assert_eq!(train.len() + test.len(), 1000);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(split_dataset(&[P], 1.0, 0), Err(EvalError::Ratio(_))));
        assert!(matches!(split_dataset::<SentimentClass>(&[], 0.8, 0), Err(EvalError::Empty)));
        let unlabeled = LabeledSentence::new("a", "x", crate::Language::Zulu, None);
        assert!(matches!(split_dataset(&[unlabeled], 0.8, 0), Err(EvalError::Unlabeled(0))));
    }
}
