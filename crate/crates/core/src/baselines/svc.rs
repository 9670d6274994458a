//! One-vs-rest linear SVM trained by dual coordinate descent on the hinge
//! loss.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvcConfig {
    pub c: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SvcConfig {
    fn default() -> Self {
        SvcConfig {
            c: 1.0,
            max_iter: 1000,
            tol: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvc {
    /// Sorted class labels.
    pub classes: Vec<String>,
    /// One row per class: weights followed by the bias.
    pub weights: Array2<f64>,
}

fn augmented_dot(w: ArrayView1<f64>, x: ArrayView1<f64>) -> f64 {
    let d = x.len();
    w.iter().take(d).zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

fn binary(x: ArrayView2<f64>, y: &[f64], config: &SvcConfig, seed: u64) -> Vec<f64> {
    let (n, d) = x.dim();
    let mut w = vec![0.0; d + 1];
    let mut alpha = vec![0.0; n];
    let q: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r) + 1.0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = seeded(seed);
    for _ in 0..config.max_iter {
        order.shuffle(&mut r);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let xi = x.row(i);
            let wx: f64 = w.iter().take(d).zip(xi).map(|(a, b)| a * b).sum::<f64>() + w[d];
            let g = y[i] * wx - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == config.c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, config.c);
                let delta = (alpha[i] - old) * y[i];
                for (wj, xj) in w.iter_mut().zip(xi) {
                    *wj += delta * xj;
                }
                w[d] += delta;
            }
        }
        if pg_max - pg_min < config.tol {
            break;
        }
    }
    w
}

impl LinearSvc {
    pub fn predict_row(&self, x: ArrayView1<f64>) -> &str {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (k, w) in self.weights.rows().into_iter().enumerate() {
            let s = augmented_dot(w, x);
            if s > best_score {
                best = k;
                best_score = s;
            }
        }
        &self.classes[best]
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<String> {
        x.rows().into_iter().map(|r| self.predict_row(r).to_string()).collect()
    }
}

pub fn train_svc(x: ArrayView2<f64>, labels: &[String], config: &SvcConfig) -> Result<LinearSvc> {
    if x.nrows() != labels.len() {
        return Err(Error::invalid("svc rows and labels differ in length"));
    }
    if !(config.c > 0.0) {
        return Err(Error::Config("svc c must be positive".into()));
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid("svc needs at least two classes"));
    }
    let d = x.ncols();
    let mut weights = Array2::zeros((classes.len(), d + 1));
    for (k, class) in classes.iter().enumerate() {
        let y: Vec<f64> = labels.iter().map(|l| if l == class { 1.0 } else { -1.0 }).collect();
        let seed = crate::rng::derive_seed(config.seed, &format!("svc/{class}"));
        let w = binary(x, &y, config, seed);
        weights.row_mut(k).assign(&ArrayView1::from(&w));
    }
    Ok(LinearSvc { classes, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separable_two_classes() {
        let x = array![[0.0, 0.0], [0.2, 0.1], [0.1, 0.3], [3.0, 3.0], [2.8, 3.2], [3.1, 2.7]];
        let y: Vec<String> = ["a", "a", "a", "b", "b", "b"].iter().map(|s| s.to_string()).collect();
        let svc = train_svc(x.view(), &y, &SvcConfig::default()).unwrap();
        assert_eq!(svc.predict(x.view()), y);
    }

    #[test]
    fn three_classes_one_vs_rest() {
        let x = array![[5.0, 0.0], [6.0, 0.5], [0.0, 5.0], [0.5, 6.0], [-5.0, -5.0], [-6.0, -5.5]];
        let y: Vec<String> = ["r", "r", "u", "u", "d", "d"].iter().map(|s| s.to_string()).collect();
        let svc = train_svc(x.view(), &y, &SvcConfig::default()).unwrap();
        assert_eq!(svc.predict(x.view()), y);
        assert_eq!(svc.classes, vec!["d", "r", "u"]);
    }

    #[test]
    fn single_class_is_an_error() {
        let x = array![[0.0], [1.0]];
        assert!(train_svc(x.view(), &["a".into(), "a".into()], &SvcConfig::default()).is_err());
    }
}
