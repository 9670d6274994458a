//! Dimensionality reduction behind a common interface: UMAP (default) and
//! PCA (deterministic fallback).

mod pca;
mod umap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use pca::Pca;
pub use umap::{find_ab_params, Umap, UmapParams};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    #[default]
    Umap,
    Pca,
}

/// A projection fitted on training rows that can place further rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Umap(Umap),
    Pca(Pca),
}

impl Projection {
    /// Fits on `data` and returns the fitted model with the training rows'
    /// coordinates.
    pub fn fit(
        data: ArrayView2<f64>,
        dims: usize,
        method: ProjectionMethod,
        params: &UmapParams,
        seed: u64,
    ) -> Result<(Projection, Array2<f64>)> {
        match method {
            ProjectionMethod::Umap => {
                let u = Umap::fit(data, dims, params, seed)?;
                let emb = u.embedding().clone();
                Ok((Projection::Umap(u), emb))
            }
            ProjectionMethod::Pca => {
                let p = Pca::fit(data, dims)?;
                let emb = p.transform(data)?;
                Ok((Projection::Pca(p), emb))
            }
        }
    }

    pub fn transform(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Projection::Umap(u) => u.transform(data),
            Projection::Pca(p) => p.transform(data),
        }
    }
}
