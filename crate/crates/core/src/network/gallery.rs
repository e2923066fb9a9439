use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{forward_partitioned, FeatureVector, NetworkParams};
use crate::error::{invalid, mismatch, Result};
use crate::skeleton::PartitionedSequence;

/// Labeled reference features for 1-NN classification.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Gallery {
    pub entries: Vec<(FeatureVector, u32)>,
}

impl Gallery {
    pub fn new(entries: Vec<(FeatureVector, u32)>) -> Result<Self> {
        if let Some((first, _)) = entries.first() {
            if entries.iter().any(|(f, _)| f.dim() != first.dim()) {
                return Err(mismatch("gallery features differ in dimension"));
            }
        }
        Ok(Gallery { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.entries.first().map(|(f, _)| f.dim())
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<u32> {
        let mut c: Vec<u32> = self.entries.iter().map(|e| e.1).collect();
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// Features for every sequence, in order.
pub fn build_gallery(sequences: &[PartitionedSequence], labels: &[u32], params: &NetworkParams) -> Result<Gallery> {
    if sequences.len() != labels.len() {
        return Err(mismatch(format!("{} sequences but {} labels", sequences.len(), labels.len())));
    }
    let features = sequences
        .par_iter()
        .map(|s| forward_partitioned(s, params))
        .collect::<Result<Vec<_>>>()?;
    Gallery::new(features.into_iter().zip(labels.iter().copied()).collect())
}

/// Label of the Euclidean-nearest gallery entry; ties go to the lowest index.
pub fn knn_classify(feature: &FeatureVector, gallery: &Gallery) -> Result<u32> {
    let mut best: Option<(f64, u32)> = None;
    for (f, label) in &gallery.entries {
        if f.dim() != feature.dim() {
            return Err(mismatch(format!("query of dimension {} against gallery of dimension {}", feature.dim(), f.dim())));
        }
        let d = f.0.iter().zip(&feature.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, *label));
        }
    }
    best.map(|(_, l)| l).ok_or_else(|| invalid("empty gallery"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector(v.to_vec())
    }

    #[test]
    fn examples() {
        let g = Gallery::new(vec![(fv(&[0.0, 0.0]), 0), (fv(&[10.0, 10.0]), 1)]).unwrap();
        assert_eq!(knn_classify(&fv(&[1.0, 1.0]), &g).unwrap(), 0);
        assert_eq!(knn_classify(&fv(&[10.0, 10.0]), &g).unwrap(), 1);
        assert!(knn_classify(&fv(&[1.0]), &Gallery::default()).is_err());
        assert!(knn_classify(&fv(&[1.0]), &g).is_err());
        assert!(Gallery::new(vec![(fv(&[0.0]), 0), (fv(&[0.0, 1.0]), 1)]).is_err());
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        let g = Gallery::new(vec![(fv(&[1.0]), 7), (fv(&[-1.0]), 3)]).unwrap();
        assert_eq!(knn_classify(&fv(&[0.0]), &g).unwrap(), 7);
    }

    fn random_gallery(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Gallery {
        Gallery::new((0..n).map(|_| (FeatureVector((0..dim).map(|_| rng.random_range(-5.0..5.0)).collect()), rng.random_range(0..5))).collect()).unwrap()
    }

    #[test]
    fn agrees_with_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let n = rng.random_range(1..30);
            let g = random_gallery(&mut rng, n, 4);
            let q = FeatureVector((0..4).map(|_| rng.random_range(-5.0..5.0)).collect());
            let dists: Vec<f64> = g.entries.iter().map(|(f, _)| f.distance(&q)).collect();
            let min = dists.iter().copied().fold(f64::INFINITY, f64::min);
            let idx = dists.iter().position(|&d| d == min).unwrap();
            assert_eq!(knn_classify(&q, &g).unwrap(), g.entries[idx].1);
        }
    }

    #[test]
    fn invariant_under_global_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let dim = 5;
            let g = random_gallery(&mut rng, 20, dim);
            let q = FeatureVector((0..dim).map(|_| rng.random_range(-5.0..5.0)).collect());
            let rot = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0)).qr().q();
            let shift: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let map = |f: &FeatureVector| {
                let v = &rot * nalgebra::DVector::from_column_slice(&f.0);
                FeatureVector(v.iter().zip(&shift).map(|(a, b)| a + b).collect())
            };
            let moved = Gallery::new(g.entries.iter().map(|(f, l)| (map(f), *l)).collect()).unwrap();
            assert_eq!(knn_classify(&q, &g).unwrap(), knn_classify(&map(&q), &moved).unwrap());
        }
    }
}
