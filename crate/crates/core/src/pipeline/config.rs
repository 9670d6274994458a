use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::baselines::{EmbeddingConfig, SvcConfig};
use crate::classifier::{ClassifierConfig, PIVOT_CAP};
use crate::corpus::{SplitMode, SynthConfig};
use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_GRID_POINTS;
use crate::prediction::ClusteringConfig;
use crate::projection::{ProjectionMethod, UmapParams};

use super::Method;

pub const OUTPUT_DIR_ENV: &str = "LEANING_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Input corpus files. When `tweets` is unset the corpus comes from the
    /// synthetic generator.
    pub tweets: Option<PathBuf>,
    pub likes: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    /// Labeled accounts evaluated through the fitted pipeline.
    pub external_accounts: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            tweets: None,
            likes: None,
            catalog: None,
            stopwords: None,
            external_accounts: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub mode: SplitMode,
    /// Train, validation and test fractions.
    pub fractions: [f64; 3],
    /// Time-wise mode: test users tweeted only after this instant.
    pub threshold: Option<DateTime<Utc>>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            mode: SplitMode::Stratified,
            fractions: [0.90, 0.03, 0.07],
            threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionSpec {
    pub method: ProjectionMethod,
    pub umap: UmapParams,
}

impl Default for ProjectionSpec {
    fn default() -> Self {
        ProjectionSpec {
            method: ProjectionMethod::Umap,
            umap: UmapParams::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringSpec {
    /// Unset means the preset with one cluster per party.
    pub party: Option<ClusteringConfig>,
    /// Unset means the preset with one cluster per pole.
    pub pole: Option<ClusteringConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSpec {
    pub distance_points: usize,
    /// Users with at least this many tweets, one point per value.
    pub tweet_grid: Vec<usize>,
    /// Retweet-count bin edges.
    pub retweet_bins: Vec<usize>,
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        EvaluationSpec {
            distance_points: DEFAULT_GRID_POINTS,
            tweet_grid: vec![25, 40, 60, 80, 100, 120, 140, 160, 180, 200],
            retweet_bins: vec![0, 5, 10, 15, 20, 30, 50, 100, 201],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub louvain_resolution: f64,
    pub split: SplitSpec,
    pub classifier: ClassifierConfig,
    pub pivot_cap: usize,
    /// Fraction of the pivot tweets held out to validate the classifier.
    pub classifier_holdout: f64,
    pub k: usize,
    pub th: f64,
    pub percentile: f64,
    pub projection: ProjectionSpec,
    pub clustering: ClusteringSpec,
    pub embedding: EmbeddingConfig,
    pub svc: SvcConfig,
    pub methods: Vec<Method>,
    pub evaluation: EvaluationSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            paths: Paths::default(),
            synth: SynthConfig::default(),
            louvain_resolution: 1.0,
            split: SplitSpec::default(),
            classifier: ClassifierConfig::default(),
            pivot_cap: PIVOT_CAP,
            classifier_holdout: 0.1,
            k: 5,
            th: 0.5,
            percentile: 99.0,
            projection: ProjectionSpec::default(),
            clustering: ClusteringSpec::default(),
            embedding: EmbeddingConfig::default(),
            svc: SvcConfig::default(),
            methods: Method::ALL.to_vec(),
            evaluation: EvaluationSpec::default(),
        }
    }
}

fn field(path: &str, message: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {message}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| field(&path.display().to_string(), format!("cannot read config: {e}")))?;
        serde_json::from_str(&text).map_err(|e| field(&path.display().to_string(), e))
    }

    /// Applies `--a.b value` style overrides. Values are parsed as JSON when
    /// possible and taken as strings otherwise.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut root = serde_json::to_value(self)?;
        for (key, raw) in overrides {
            let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            let mut node = &mut root;
            let parts: Vec<&str> = key.split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let obj = node
                    .as_object_mut()
                    .ok_or_else(|| field(key, "not an object path"))?;
                if i + 1 == parts.len() {
                    if !obj.contains_key(*part) {
                        return Err(field(key, "unknown field"));
                    }
                    obj.insert(part.to_string(), value.clone());
                    break;
                }
                let next = obj.get_mut(*part).ok_or_else(|| field(key, "unknown field"))?;
                if next.is_null() {
                    *next = Value::Object(Default::default());
                }
                node = next;
            }
        }
        serde_json::from_value(root).map_err(|e| Error::Config(format!("override: {e}")))
    }

    /// Field-level checks of the whole configuration.
    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(field("seed", "is required"));
        }
        if self.k == 0 {
            return Err(field("k", "must be positive"));
        }
        if !(self.th > 0.0 && self.th < 1.0) {
            return Err(field("th", "must lie in (0, 1)"));
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(field("percentile", "must lie in (0, 100)"));
        }
        if !(self.classifier_holdout > 0.0 && self.classifier_holdout < 1.0) {
            return Err(field("classifier_holdout", "must lie in (0, 1)"));
        }
        if self.pivot_cap == 0 {
            return Err(field("pivot_cap", "must be positive"));
        }
        if !(self.louvain_resolution > 0.0) {
            return Err(field("louvain_resolution", "must be positive"));
        }
        let sum: f64 = self.split.fractions.iter().sum();
        if self.split.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (sum - 1.0).abs() > 1e-9 {
            return Err(field("split.fractions", "must lie in [0, 1] and sum to 1"));
        }
        if self.split.mode == SplitMode::TimeWise && self.split.threshold.is_none() {
            return Err(field("split.threshold", "is required in time-wise mode"));
        }
        self.classifier.validate().map_err(|e| field("classifier", e))?;
        self.embedding.validate().map_err(|e| field("embedding", e))?;
        if !(self.svc.c > 0.0) {
            return Err(field("svc.c", "must be positive"));
        }
        for (name, c) in [("clustering.party", &self.clustering.party), ("clustering.pole", &self.clustering.pole)] {
            if let Some(c) = c {
                c.validate().map_err(|e| field(name, e))?;
            }
        }
        if self.evaluation.distance_points == 0 {
            return Err(field("evaluation.distance_points", "must be positive"));
        }
        for (name, g) in [
            ("evaluation.tweet_grid", &self.evaluation.tweet_grid),
            ("evaluation.retweet_bins", &self.evaluation.retweet_bins),
        ] {
            if g.is_empty() || g.windows(2).any(|w| w[0] >= w[1]) {
                return Err(field(name, "must be non-empty and strictly increasing"));
            }
        }
        if self.evaluation.retweet_bins.len() < 2 {
            return Err(field("evaluation.retweet_bins", "needs at least two edges"));
        }
        let inputs = [
            ("paths.tweets", &self.paths.tweets),
            ("paths.likes", &self.paths.likes),
            ("paths.catalog", &self.paths.catalog),
        ];
        let given = inputs.iter().filter(|(_, p)| p.is_some()).count();
        if given != 0 && given != inputs.len() {
            return Err(field("paths", "tweets, likes and catalog must be given together"));
        }
        for (name, p) in inputs.iter().copied().chain([
            ("paths.stopwords", &self.paths.stopwords),
            ("paths.external_accounts", &self.paths.external_accounts),
        ]) {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(field(name, format!("{} does not exist", p.display())));
                }
            }
        }
        if self.paths.tweets.is_none() {
            self.synth.validate().map_err(|e| field("synth", e))?;
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config has a seed")
    }

    /// SHA-256 of the canonical JSON of the configuration without its output
    /// directory, so relocating a run leaves its artifacts unchanged.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        hex::encode(digest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        RunConfig {
            seed: Some(1),
            ..Default::default()
        }
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(RunConfig::default().validate().is_err());
        base().validate().unwrap();
    }

    #[test]
    fn dotted_overrides() {
        let c = base()
            .with_overrides(&[
                ("classifier.epochs".into(), "3".into()),
                ("paths.output_dir".into(), "/tmp/x".into()),
                ("methods".into(), "[\"random\"]".into()),
            ])
            .unwrap();
        assert_eq!(c.classifier.epochs, 3);
        assert_eq!(c.paths.output_dir, PathBuf::from("/tmp/x"));
        assert_eq!(c.methods, vec![Method::Random]);
        assert!(base().with_overrides(&[("classifier.nope".into(), "1".into())]).is_err());
        assert!(base().with_overrides(&[("k".into(), "\"five\"".into())]).is_err());
    }

    #[test]
    fn optional_sections_can_be_overridden() {
        let c = base()
            .with_overrides(&[("clustering.party".into(), "{\"algorithm\":\"mean_shift\",\"n_clusters\":null}".into())])
            .unwrap();
        c.validate().unwrap();
        assert!(base()
            .with_overrides(&[("clustering.party.n_clusters".into(), "3".into())])
            .is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut a = base();
        let h = a.hash();
        a.paths.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), h);
        a.k = 7;
        assert_ne!(a.hash(), h);
    }

    #[test]
    fn field_level_messages() {
        let mut c = base();
        c.th = 1.5;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("th"), "{msg}");
    }
}
