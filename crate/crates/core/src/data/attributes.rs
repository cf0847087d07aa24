use rand::seq::SliceRandom;
use rand::Rng;
use tch::Tensor;

use crate::error::{Error, Result};

/// Ordered attribute names; the order is the one-hot order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
}

impl Vocabulary {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.contains(char::is_whitespace) {
                return Err(Error::validation(format!("attribute name {n:?} must be non-empty without whitespace")));
            }
            if names[..i].contains(n) {
                return Err(Error::validation(format!("duplicate attribute name {n:?}")));
            }
        }
        Ok(Vocabulary { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// One-hot vector of a single attribute.
    pub fn one_hot(&self, name: &str) -> Result<Vec<f32>> {
        encode_attributes(&[name], self)
    }
}

/// Binary vector with a 1 at the index of each label.
pub fn encode_attributes<S: AsRef<str>>(labels: &[S], vocabulary: &Vocabulary) -> Result<Vec<f32>> {
    let mut v = vec![0.0; vocabulary.len()];
    for label in labels {
        let label = label.as_ref();
        let i = vocabulary
            .index_of(label)
            .ok_or_else(|| Error::validation(format!("unknown attribute label {label:?}")))?;
        v[i] = 1.0;
    }
    Ok(v)
}

/// Uniformly random permutation of `0..n`.
pub fn sample_target_permutation(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Target attributes for a batch: its own label rows in random order, so
/// every target is a label combination that occurs in the data.
pub fn sample_target_attributes(batch_labels: &Tensor, rng: &mut impl Rng) -> Tensor {
    let n = batch_labels.size()[0] as usize;
    let perm: Vec<i64> = sample_target_permutation(n, rng).into_iter().map(|i| i as i64).collect();
    batch_labels.index_select(0, &Tensor::from_slice(&perm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::layers::init_rng;
    use std::collections::HashMap;

    fn expressions() -> Vocabulary {
        Vocabulary::new(["angry", "contemptuous", "disgusted", "fearful", "happiness", "neutral", "sadness", "surprised"]).unwrap()
    }

    #[test]
    fn encodes_one_hot() {
        let v = expressions();
        let y = encode_attributes(&["happiness"], &v).unwrap();
        assert_eq!(y, vec![0., 0., 0., 0., 1., 0., 0., 0.]);
        assert_eq!(encode_attributes::<&str>(&[], &v).unwrap(), vec![0.0; 8]);
        assert_eq!(encode_attributes(&["angry", "sadness"], &v).unwrap(), encode_attributes(&["sadness", "angry"], &v).unwrap());
        let err = encode_attributes(&["joy"], &v).unwrap_err().to_string();
        assert!(err.contains("joy"));
        assert!(Vocabulary::new(["a", "a"]).is_err());
    }

    #[test]
    fn single_sample_target_is_source() {
        let mut rng = init_rng(0, 0);
        let y = Tensor::from_slice(&[0.0f32, 1.0, 0.0]).view([1, 3]);
        assert!(sample_target_attributes(&y, &mut rng).equal(&y));
    }

    #[test]
    fn targets_are_a_permutation_of_sources() {
        let mut rng = init_rng(1, 0);
        let y = Tensor::from_slice(&[1.0f32, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0]).view([4, 2]);
        for _ in 0..20 {
            let t = sample_target_attributes(&y, &mut rng);
            let key = |m: &Tensor| {
                let mut rows: Vec<Vec<i64>> = (0..4).map(|i| Vec::<i64>::try_from(m.get(i).to_kind(tch::Kind::Int64)).unwrap()).collect();
                rows.sort();
                rows
            };
            assert_eq!(key(&t), key(&y));
        }
    }

    #[test]
    fn permutations_are_uniform() {
        let mut rng = init_rng(2, 0);
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            *counts.entry(sample_target_permutation(3, &mut rng)).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = draws as f64 / 6.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 5 degrees of freedom, p = 0.001 critical value.
        assert!(chi2 < 20.52, "chi2 = {chi2}");
        for &c in counts.values() {
            assert!((c as f64 / draws as f64 - 1.0 / 6.0).abs() < 0.02);
        }
    }
}
