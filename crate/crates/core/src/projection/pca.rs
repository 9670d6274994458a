use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Principal component projection fitted on a data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Array1<f64>,
    /// `input_dims x dims`, columns are unit principal axes by decreasing
    /// variance.
    pub components: Array2<f64>,
    pub explained_variance: Array1<f64>,
}

impl Pca {
    pub fn fit(data: ArrayView2<f64>, dims: usize) -> Result<Pca> {
        let (n, d) = data.dim();
        if n == 0 {
            return Err(Error::invalid("pca needs at least one row"));
        }
        if dims == 0 || dims > d {
            return Err(Error::invalid(format!(
                "pca output dims {dims} must be in 1..={d}"
            )));
        }
        let mean = data.mean_axis(Axis(0)).unwrap();
        let centered = &data - &mean;
        let cov = centered.t().dot(&centered) / (n.max(2) - 1) as f64;
        let m = DMatrix::from_row_iterator(d, d, cov.iter().copied());
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let mut components = Array2::zeros((d, dims));
        let mut explained = Array1::zeros(dims);
        for (out, &src) in order.iter().take(dims).enumerate() {
            let col = eig.eigenvectors.column(src);
            // sign convention: the largest-magnitude loading is positive
            let mut pivot = 0;
            for i in 0..d {
                if col[i].abs() > col[pivot].abs() + 1e-12 {
                    pivot = i;
                }
            }
            let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..d {
                components[[i, out]] = sign * col[i];
            }
            explained[out] = eig.eigenvalues[src].max(0.0);
        }
        Ok(Pca {
            mean,
            components,
            explained_variance: explained,
        })
    }

    pub fn transform(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        if data.ncols() != self.mean.len() {
            return Err(Error::invalid(format!(
                "pca fitted on {} dims, got {}",
                self.mean.len(),
                data.ncols()
            )));
        }
        Ok((&data - &self.mean).dot(&self.components))
    }

    pub fn inverse_transform(&self, reduced: ArrayView2<f64>) -> Array2<f64> {
        reduced.dot(&self.components.t()) + &self.mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn rank_one_data_lies_on_a_line() {
        let mut r = crate::rng::seeded(1);
        let dir = array![1.0, 2.0, -1.0, 0.5];
        let ts: Vec<f64> = (0..50).map(|_| r.random_range(-3.0..3.0)).collect();
        let data = Array2::from_shape_fn((50, 4), |(i, j)| ts[i] * dir[j] + 7.0);
        let pca = Pca::fit(data.view(), 2).unwrap();
        let out = pca.transform(data.view()).unwrap();
        let second = out.column(1);
        let m = second.mean().unwrap();
        let var = second.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 50.0;
        assert!(var < 1e-9, "{var}");
    }

    #[test]
    fn dropping_one_component_loses_its_variance_only() {
        let mut r = crate::rng::seeded(2);
        let data = Array2::from_shape_fn((40, 5), |(_, j)| r.random_range(-1.0..1.0) * (j + 1) as f64);
        let pca = Pca::fit(data.view(), 4).unwrap();
        let full = Pca::fit(data.view(), 5).unwrap();
        let back = pca.inverse_transform(pca.transform(data.view()).unwrap().view());
        let err = (&data - &back).mapv(|x| x * x).sum() / 39.0;
        assert!(err <= full.explained_variance[4] + 1e-9, "{err}");
    }

    #[test]
    fn too_many_dims_is_an_error() {
        let data = Array2::<f64>::zeros((5, 3));
        assert!(Pca::fit(data.view(), 4).is_err());
    }
}
