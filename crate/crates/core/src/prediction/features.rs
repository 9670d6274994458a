use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::projection::{Projection, ProjectionMethod, UmapParams};

/// Row `u` holds the Euclidean distances from `u` to every row.
pub fn pairwise_projection(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let d = x
                .row(i)
                .iter()
                .zip(x.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}

/// Zero mean, unit population variance per column. Constant columns become
/// zero.
pub fn standardize(x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    if x.nrows() == 0 {
        return out;
    }
    let mean = x.mean_axis(Axis(0)).unwrap();
    let std = x.std_axis(Axis(0), 0.0);
    let mut constant = 0;
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        if std[j] <= 1e-12 * mean[j].abs().max(1.0) {
            col.fill(0.0);
            constant += 1;
        } else {
            col.mapv_inplace(|v| (v - mean[j]) / std[j]);
        }
    }
    if constant > 0 {
        log::warn!("standardize: {constant} constant column(s) set to zero");
    }
    out
}

/// Reduces to `dims` columns.
pub fn reduce(
    x: ArrayView2<f64>,
    dims: usize,
    method: ProjectionMethod,
    params: &UmapParams,
    seed: u64,
) -> Result<Array2<f64>> {
    if dims == 0 || dims >= x.ncols() {
        return Err(Error::invalid(format!(
            "reduction to {dims} dims needs more input dims than that, got {}",
            x.ncols()
        )));
    }
    Ok(Projection::fit(x, dims, method, params, seed)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn line_points_distances() {
        let x = array![[0.0], [1.0], [3.0]];
        let d = pairwise_projection(x.view());
        assert_eq!(d, array![[0.0, 1.0, 3.0], [1.0, 0.0, 2.0], [3.0, 2.0, 0.0]]);
        let same = array![[1.0, 2.0], [1.0, 2.0]];
        assert_eq!(pairwise_projection(same.view()), Array2::<f64>::zeros((2, 2)));
    }

    #[test]
    fn two_point_column_becomes_minus_one_one() {
        let x = array![[1.0, 5.0], [3.0, 5.0]];
        let s = standardize(x.view());
        assert_eq!(s, array![[-1.0, 0.0], [1.0, 0.0]]);
    }

    #[test]
    fn reduce_rejects_non_reducing_dims() {
        let x = Array2::<f64>::zeros((40, 3));
        assert!(reduce(x.view(), 3, ProjectionMethod::Pca, &UmapParams::default(), 0).is_err());
    }
}
