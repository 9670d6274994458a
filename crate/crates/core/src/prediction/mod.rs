//! Party and pole predictions from user vectors: clustering in the ideology
//! space with pivot-based cluster labeling, and the nearest-pivot rule.

mod cluster;
mod features;
mod labeling;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use cluster::{estimate_bandwidth, gaussian_mixture, kmeans, kmeans_n_init, mean_shift, KMeansFit};
pub use features::{pairwise_projection, reduce, standardize};
pub use labeling::label_clusters;

use crate::corpus::PartyCatalog;
use crate::error::{Error, Result};
use crate::ideology::{cosine_similarity, to_matrix, UserVector};
use crate::io::{fmt_f64, read_csv, CsvBuffer};
use crate::projection::{ProjectionMethod, UmapParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Party,
    Pole,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Party => "party",
            Task::Pole => "pole",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Kmeans,
    GaussianMixture,
    MeanShift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub use_pairwise_projection: bool,
    pub reduce_dims: Option<usize>,
    pub reduce_method: ProjectionMethod,
    pub standardize: bool,
    pub algorithm: Algorithm,
    pub n_clusters: Option<usize>,
    pub seed: u64,
    pub umap: UmapParams,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            use_pairwise_projection: false,
            reduce_dims: None,
            reduce_method: ProjectionMethod::Umap,
            standardize: true,
            algorithm: Algorithm::Kmeans,
            n_clusters: Some(8),
            seed: 0,
            umap: UmapParams::default(),
        }
    }
}

impl ClusteringConfig {
    /// Standardized vectors clustered with k-means, one cluster per party.
    pub fn party_default(n_parties: usize) -> Self {
        ClusteringConfig {
            n_clusters: Some(n_parties),
            ..Default::default()
        }
    }

    /// Pairwise distances reduced to 64 dims, k-means with one cluster per
    /// pole.
    pub fn pole_default(n_poles: usize) -> Self {
        ClusteringConfig {
            use_pairwise_projection: true,
            reduce_dims: Some(64),
            standardize: false,
            n_clusters: Some(n_poles),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.algorithm, self.n_clusters) {
            (Algorithm::Kmeans | Algorithm::GaussianMixture, None) => Err(Error::Config(
                "n_clusters is required for kmeans and gaussian_mixture".into(),
            )),
            (Algorithm::Kmeans | Algorithm::GaussianMixture, Some(0)) => {
                Err(Error::Config("n_clusters must be positive".into()))
            }
            (Algorithm::MeanShift, Some(_)) => Err(Error::Config(
                "n_clusters must not be set for mean_shift".into(),
            )),
            _ if self.reduce_dims == Some(0) => {
                Err(Error::Config("reduce_dims must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Label emitted for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub user_id: String,
    pub party: Option<String>,
    pub pole: Option<String>,
    pub confidence: f64,
    pub normalized_distance: f64,
}

impl Prediction {
    /// A prediction for `task`; a party label also fills in its pole.
    pub fn new(
        user_id: &str,
        label: &str,
        task: Task,
        catalog: &PartyCatalog,
        normalized_distance: f64,
    ) -> Prediction {
        let (party, pole) = match task {
            Task::Party => (
                Some(label.to_string()),
                catalog.pole_of(label).map(str::to_string),
            ),
            Task::Pole => (None, Some(label.to_string())),
        };
        Prediction {
            user_id: user_id.to_string(),
            party,
            pole,
            confidence: 1.0 - normalized_distance,
            normalized_distance,
        }
    }

    pub fn label(&self, task: Task) -> Option<&str> {
        match task {
            Task::Party => self.party.as_deref(),
            Task::Pole => self.pole.as_deref(),
        }
    }
}

/// Applies the feature steps of `config` and clusters the rows.
pub fn cluster_rows(x: ArrayView2<f64>, config: &ClusteringConfig) -> Result<(Vec<usize>, Array2<f64>)> {
    config.validate()?;
    let mut f = if config.use_pairwise_projection {
        pairwise_projection(x)
    } else {
        x.to_owned()
    };
    if let Some(dims) = config.reduce_dims {
        f = reduce(f.view(), dims, config.reduce_method, &config.umap, config.seed)?;
    }
    if config.standardize {
        f = standardize(f.view());
    }
    let assignment = match config.algorithm {
        Algorithm::Kmeans => kmeans(f.view(), config.n_clusters.unwrap(), config.seed)?.labels,
        Algorithm::GaussianMixture => {
            gaussian_mixture(f.view(), config.n_clusters.unwrap(), config.seed)?
        }
        Algorithm::MeanShift => mean_shift(f.view(), None, config.seed)?,
    };
    Ok((assignment, f))
}

fn task_label<'a>(catalog: &'a PartyCatalog, party: &'a str, task: Task) -> &'a str {
    match task {
        Task::Party => party,
        Task::Pole => catalog.pole_of(party).expect("catalog party"),
    }
}

/// Cosine distance from every user row to its nearest pivot row.
pub fn nearest_pivot_distances(users: ArrayView2<f64>, pivots: ArrayView2<f64>) -> Vec<f64> {
    users
        .rows()
        .into_iter()
        .map(|u| {
            let u = u.to_vec();
            pivots
                .rows()
                .into_iter()
                .map(|p| 1.0 - cosine_similarity(&u, &p.to_vec()))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Min-max normalization of `d` over `population`.
pub fn normalized_pivot_distance(d: f64, population: &[f64]) -> f64 {
    let lo = population.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = population.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return 0.0;
    }
    ((d - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Normalized nearest-pivot distance of every user row.
pub fn normalized_pivot_distances(users: ArrayView2<f64>, pivots: ArrayView2<f64>) -> Vec<f64> {
    let d = nearest_pivot_distances(users, pivots);
    d.iter().map(|x| normalized_pivot_distance(*x, &d)).collect()
}

/// Clusters users together with the pivots and labels clusters by the
/// pivots they contain. `pivots` rows follow catalog order.
pub fn predict_clustering_matrix(
    user_ids: &[String],
    users: ArrayView2<f64>,
    pivots: ArrayView2<f64>,
    catalog: &PartyCatalog,
    config: &ClusteringConfig,
    task: Task,
) -> Result<Vec<Prediction>> {
    if pivots.nrows() != catalog.len() {
        return Err(Error::invalid("one pivot row per catalog party is required"));
    }
    if user_ids.len() != users.nrows() {
        return Err(Error::invalid("user ids and user rows differ in length"));
    }
    let all = concatenate(Axis(0), &[users, pivots])
        .map_err(|e| Error::invalid(format!("user and pivot features differ in width: {e}")))?;
    let (assignment, features) = cluster_rows(all.view(), config)?;
    let n = users.nrows();
    let pivot_rows: Vec<(usize, String)> = catalog
        .parties()
        .iter()
        .enumerate()
        .map(|(i, p)| (n + i, task_label(catalog, &p.label, task).to_string()))
        .collect();
    let labels = label_clusters(&assignment, features.view(), &pivot_rows)?;
    let norm = normalized_pivot_distances(users, pivots);
    Ok(user_ids
        .iter()
        .enumerate()
        .map(|(i, id)| Prediction::new(id, &labels[i], task, catalog, norm[i]))
        .collect())
}

fn pivot_matrix(pivots: &BTreeMap<String, UserVector>, catalog: &PartyCatalog) -> Result<Array2<f64>> {
    let rows: Vec<&UserVector> = catalog
        .parties()
        .iter()
        .map(|p| {
            pivots
                .get(&p.label)
                .ok_or_else(|| Error::invalid(format!("missing pivot vector for {}", p.label)))
        })
        .collect::<Result<_>>()?;
    to_matrix(&rows)
}

pub fn predict_clustering(
    users: &[&UserVector],
    pivots: &BTreeMap<String, UserVector>,
    catalog: &PartyCatalog,
    config: &ClusteringConfig,
    task: Task,
) -> Result<Vec<Prediction>> {
    let ids: Vec<String> = users.iter().map(|u| u.user_id.clone()).collect();
    predict_clustering_matrix(
        &ids,
        to_matrix(users)?.view(),
        pivot_matrix(pivots, catalog)?.view(),
        catalog,
        config,
        task,
    )
}

/// Assigns each user the party (or its pole) of the nearest pivot by cosine
/// distance; ties go to the smaller party label.
pub fn predict_nearest_pivot_matrix(
    user_ids: &[String],
    users: ArrayView2<f64>,
    pivots: ArrayView2<f64>,
    catalog: &PartyCatalog,
    task: Task,
) -> Result<Vec<Prediction>> {
    if pivots.nrows() != catalog.len() {
        return Err(Error::invalid("one pivot row per catalog party is required"));
    }
    let norm = normalized_pivot_distances(users, pivots);
    let parties = catalog.parties();
    Ok(users
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, u)| {
            let u = u.to_vec();
            let mut best: Option<(f64, &str)> = None;
            for (p, row) in parties.iter().zip(pivots.rows()) {
                let d = 1.0 - cosine_similarity(&u, &row.to_vec());
                let better = match best {
                    None => true,
                    Some((bd, bl)) => d < bd || (d == bd && p.label.as_str() < bl),
                };
                if better {
                    best = Some((d, &p.label));
                }
            }
            let party = best.expect("non-empty catalog").1;
            Prediction::new(&user_ids[i], task_label(catalog, party, task), task, catalog, norm[i])
        })
        .collect())
}

pub fn predict_nearest_pivot(
    users: &[&UserVector],
    pivots: &BTreeMap<String, UserVector>,
    catalog: &PartyCatalog,
    task: Task,
) -> Result<Vec<Prediction>> {
    let ids: Vec<String> = users.iter().map(|u| u.user_id.clone()).collect();
    predict_nearest_pivot_matrix(
        &ids,
        to_matrix(users)?.view(),
        pivot_matrix(pivots, catalog)?.view(),
        catalog,
        task,
    )
}

pub const PREDICTION_HEADER: [&str; 5] = ["user_id", "party", "pole", "confidence", "normalized_distance"];

pub fn predictions_csv(predictions: &[Prediction], provenance: Option<&str>) -> Result<Vec<u8>> {
    let mut csv = CsvBuffer::new(provenance, &PREDICTION_HEADER)?;
    for p in predictions {
        csv.row([
            p.user_id.as_str(),
            p.party.as_deref().unwrap_or(""),
            p.pole.as_deref().unwrap_or(""),
            &fmt_f64(p.confidence),
            &fmt_f64(p.normalized_distance),
        ])?;
    }
    csv.into_bytes()
}

pub fn write_predictions(path: &Path, predictions: &[Prediction], provenance: Option<&str>) -> Result<()> {
    crate::io::write_atomic(path, &predictions_csv(predictions, provenance)?)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let (header, rows) = read_csv(path)?;
    if header != PREDICTION_HEADER {
        return Err(Error::Validation(format!(
            "{}: unexpected prediction header {header:?}",
            path.display()
        )));
    }
    let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let num = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 2,
                    message: e.to_string(),
                })
            };
            Ok(Prediction {
                user_id: r[0].clone(),
                party: opt(&r[1]),
                pole: opt(&r[2]),
                confidence: num(&r[3])?,
                normalized_distance: num(&r[4])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Party;
    use ndarray::array;

    fn catalog() -> PartyCatalog {
        PartyCatalog::new(vec![
            Party {
                label: "A".into(),
                pole: "L".into(),
                pivot_user_id: "pa".into(),
            },
            Party {
                label: "B".into(),
                pole: "R".into(),
                pivot_user_id: "pb".into(),
            },
        ])
        .unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = ClusteringConfig::party_default(8);
        c.validate().unwrap();
        c.algorithm = Algorithm::MeanShift;
        assert!(c.validate().is_err());
        c.n_clusters = None;
        c.validate().unwrap();
        c.algorithm = Algorithm::GaussianMixture;
        assert!(c.validate().is_err());
    }

    #[test]
    fn coincident_user_gets_pivot_with_full_confidence() {
        let ids = vec!["u1".to_string(), "u2".to_string()];
        let users = array![[1.0, 0.0], [0.5, 0.6]];
        let pivots = array![[1.0, 0.0], [0.0, 1.0]];
        let p = predict_nearest_pivot_matrix(&ids, users.view(), pivots.view(), &catalog(), Task::Party).unwrap();
        assert_eq!(p[0].party.as_deref(), Some("A"));
        assert_eq!(p[0].pole.as_deref(), Some("L"));
        assert_eq!(p[0].confidence, 1.0);
        assert_eq!(p[1].party.as_deref(), Some("B"));
        assert_eq!(p[1].normalized_distance, 1.0);
    }

    #[test]
    fn equidistant_user_takes_smaller_label() {
        let ids = vec!["u".to_string()];
        let users = array![[1.0, 1.0]];
        let pivots = array![[0.0, 1.0], [1.0, 0.0]];
        let p = predict_nearest_pivot_matrix(&ids, users.view(), pivots.view(), &catalog(), Task::Pole).unwrap();
        assert_eq!(p[0].pole.as_deref(), Some("L"));
        assert_eq!(p[0].party, None);
    }

    #[test]
    fn normalization_bounds() {
        let pop = [0.2, 0.5, 0.8];
        assert_eq!(normalized_pivot_distance(0.2, &pop), 0.0);
        assert_eq!(normalized_pivot_distance(0.8, &pop), 1.0);
        assert_eq!(normalized_pivot_distance(0.3, &[0.3, 0.3]), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let preds = vec![
            Prediction {
                user_id: "u".into(),
                party: Some("A".into()),
                pole: Some("L".into()),
                confidence: 0.25,
                normalized_distance: 0.75,
            },
            Prediction {
                user_id: "v".into(),
                party: None,
                pole: None,
                confidence: 0.0,
                normalized_distance: 1.0,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_predictions(&path, &preds, Some("test")).unwrap();
        assert_eq!(read_predictions(&path).unwrap(), preds);
    }
}
