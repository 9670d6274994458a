//! Agreement between two partitions of the same items.

use std::collections::BTreeMap;
use std::hash::Hash;

fn contingency<A: Ord + Hash, B: Ord + Hash>(a: &[A], b: &[B]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), b.len(), "partitions of different lengths");
    let mut joint: BTreeMap<(&A, &B), f64> = BTreeMap::new();
    let mut ra: BTreeMap<&A, f64> = BTreeMap::new();
    let mut rb: BTreeMap<&B, f64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    (
        joint.into_values().collect(),
        ra.into_values().collect(),
        rb.into_values().collect(),
    )
}

fn entropy(counts: &[f64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| -(c / n) * (c / n).ln())
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization. Two
/// single-cluster partitions score 1.
pub fn normalized_mutual_info<A: Ord + Hash, B: Ord + Hash>(a: &[A], b: &[B]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 1.0;
    }
    let (_, ca, cb) = contingency(a, b);
    if ca.len() == 1 && cb.len() == 1 {
        return 1.0;
    }
    let mut ia: BTreeMap<&A, usize> = BTreeMap::new();
    let mut ib: BTreeMap<&B, usize> = BTreeMap::new();
    for x in a {
        let k = ia.len();
        ia.entry(x).or_insert(k);
    }
    for y in b {
        let k = ib.len();
        ib.entry(y).or_insert(k);
    }
    let mut joint = vec![vec![0.0; ib.len()]; ia.len()];
    let mut ma = vec![0.0; ia.len()];
    let mut mb = vec![0.0; ib.len()];
    for (x, y) in a.iter().zip(b) {
        joint[ia[x]][ib[y]] += 1.0;
        ma[ia[x]] += 1.0;
        mb[ib[y]] += 1.0;
    }
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0.0 {
                mi += nij / n * (n * nij / (ma[i] * mb[j])).ln();
            }
        }
    }
    let denom = 0.5 * (entropy(&ca, n) + entropy(&cb, n));
    if denom <= 0.0 {
        return 0.0;
    }
    (mi / denom).clamp(0.0, 1.0)
}

fn pairs(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index.
pub fn adjusted_rand_index<A: Ord + Hash, B: Ord + Hash>(a: &[A], b: &[B]) -> f64 {
    let (joint, ca, cb) = contingency(a, b);
    let n = a.len() as f64;
    let sum_joint: f64 = joint.iter().map(|&c| pairs(c)).sum();
    let sum_a: f64 = ca.iter().map(|&c| pairs(c)).sum();
    let sum_b: f64 = cb.iter().map(|&c| pairs(c)).sum();
    let expected = sum_a * sum_b / pairs(n).max(1.0);
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (sum_joint - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_up_to_renaming() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = ["x", "x", "z", "z", "y", "y"];
        assert!((normalized_mutual_info(&a, &b) - 1.0).abs() < 1e-12);
        assert!((adjusted_rand_index(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_partitions() {
        let a = [0, 0, 1, 1];
        let b = [0, 1, 0, 1];
        assert!(normalized_mutual_info(&a, &b).abs() < 1e-12);
        assert!(adjusted_rand_index(&a, &b) < 0.0);
    }

    #[test]
    fn known_value() {
        // reference value from the standard definition
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 1, 2, 2];
        assert!((adjusted_rand_index(&a, &b) - 0.24242424242424243).abs() < 1e-12);
        assert!((normalized_mutual_info(&a, &b) - 0.5158037429793889).abs() < 1e-9);
    }
}
