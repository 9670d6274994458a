//! Stage orchestration with on-disk artifacts.
//!
//! Every stage reads its inputs from the output directory and writes its
//! artifacts there, so running the stages one by one produces the same files
//! as `pipeline`. Each artifact records the configuration hash and the seed.

mod config;
mod external;
mod methods;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{
    ClusteringSpec, EvaluationSpec, Paths, ProjectionSpec, RunConfig, SplitSpec, OUTPUT_DIR_ENV,
};
pub use external::{load_external_accounts, ExternalAccount};
pub use methods::{merge_tasks, Method};

use crate::classifier::{
    build_pivot_training_set, fit_encoder, retrain_enriched, train, Classifier, LabeledTweetSet, TrainingLog,
};
use crate::corpus::{
    generate_synthetic_corpus, load_corpus, load_corpus_with_report, save_corpus, stratified_split,
    timewise_split, Corpus, SplitAssignment, SplitMode,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    count_sensitivity, distance_sensitivity, evaluate_both, CountGrid, CurveAxis, EvalReport,
};
use crate::groundtruth::{label_communities, louvain, project_bipartite};
use crate::ideology::{
    pivot_vectors, project_ideology, read_user_vectors, score_users, select_enrichment_tweets_scored,
    select_enrichment_users, write_ideology_points, write_user_vectors, UserVector,
};
use crate::io::{read_csv, write_atomic, write_json_atomic, CsvBuffer};
use crate::prediction::{read_predictions, write_predictions, Prediction};
use crate::rng::derive_seed;

/// Configuration hash and seed recorded in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
    pub stage: String,
}

/// A JSON artifact with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub provenance: Provenance,
    pub content: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Ingest,
    Groundtruth,
    Train,
    Enrich,
    Vectorize,
    Project,
    Predict,
    Evaluate,
    Compare,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Groundtruth => "groundtruth",
            Stage::Train => "train",
            Stage::Enrich => "enrich",
            Stage::Vectorize => "vectorize",
            Stage::Project => "project",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::Compare => "compare",
        }
    }
}

/// The method whose predictions the `predict` and `evaluate` stages produce.
pub const MAIN_METHOD: Method = Method::PartiesEnrichedClustering;

/// A validated configuration bound to an output directory.
pub struct Run {
    pub config: RunConfig,
    pub out: PathBuf,
    hash: String,
}

/// A failure tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {} failed: {}", self.stage.name(), self.error)
    }
}

impl Run {
    pub fn new(config: RunConfig) -> Result<Run> {
        config.validate()?;
        let out = config.paths.output_dir.clone();
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let hash = config.hash();
        Ok(Run { config, out, hash })
    }

    pub fn seed(&self) -> u64 {
        self.config.seed()
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn seed_for(&self, label: &str) -> u64 {
        derive_seed(self.seed(), label)
    }

    pub fn provenance(&self, stage: Stage) -> Provenance {
        Provenance {
            config_sha256: self.hash.clone(),
            seed: self.seed(),
            stage: stage.name().into(),
        }
    }

    /// The one-line provenance written at the top of CSV artifacts.
    pub fn provenance_line(&self, stage: Stage) -> String {
        format!(
            "provenance config_sha256={} seed={} stage={}",
            self.hash,
            self.seed(),
            stage.name()
        )
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn write_json<T: Serialize>(&self, rel: &str, stage: Stage, content: T) -> Result<()> {
        let path = self.path(rel);
        ensure_parent(&path)?;
        write_json_atomic(
            &path,
            &Artifact {
                provenance: self.provenance(stage),
                content,
            },
        )
    }

    fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(rel);
        ensure_parent(&path)?;
        write_atomic(&path, bytes)
    }

    /// Stage-specific provenance file inside an artifact directory.
    fn stamp_dir(&self, rel: &str, stage: Stage) -> Result<()> {
        self.write_json(&format!("{rel}/provenance.json"), stage, ())
    }

    pub fn corpus(&self) -> Result<Corpus> {
        let dir = self.path("corpus");
        load_corpus(&dir.join("tweets.jsonl"), &dir.join("likes.jsonl"), &dir.join("catalog.json"))
    }

    pub fn truth(&self) -> Result<BTreeMap<String, String>> {
        let (_, rows) = read_csv(&self.path("groundtruth/labels.csv"))?;
        Ok(rows.into_iter().map(|r| (r[0].clone(), r[1].clone())).collect())
    }

    pub fn split(&self) -> Result<SplitAssignment> {
        let path = self.path("groundtruth/split.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn classifier(&self, name: &str) -> Result<Classifier> {
        Classifier::load(&self.path(&format!("models/{name}")))
    }

    pub fn vectors(&self, name: &str) -> Result<BTreeMap<String, UserVector>> {
        Ok(read_user_vectors(&self.path(&format!("vectors/{name}.csv")))?
            .into_iter()
            .map(|v| (v.user_id.clone(), v))
            .collect())
    }

    /// Pivot vectors keyed by party label.
    pub fn pivot_vectors(&self, name: &str) -> Result<BTreeMap<String, UserVector>> {
        let corpus_catalog = self.corpus()?.catalog;
        let by_user = self.vectors(&format!("pivots_{name}"))?;
        corpus_catalog
            .parties()
            .iter()
            .map(|p| {
                by_user
                    .get(&p.pivot_user_id)
                    .cloned()
                    .map(|v| (p.label.clone(), v))
                    .ok_or_else(|| Error::Validation(format!("no pivot vector for {}", p.label)))
            })
            .collect()
    }

    pub fn predictions(&self, method: Method) -> Result<Vec<Prediction>> {
        read_predictions(&self.path(&format!("predictions/{}.csv", method.name())))
    }

    pub fn run_stage(&self, stage: Stage) -> std::result::Result<(), StageError> {
        log::info!("stage {}", stage.name());
        let result = match stage {
            Stage::Synth => self.synth(),
            Stage::Ingest => self.ingest(),
            Stage::Groundtruth => self.groundtruth(),
            Stage::Train => self.train(),
            Stage::Enrich => self.enrich(),
            Stage::Vectorize => self.vectorize(),
            Stage::Project => self.project(),
            Stage::Predict => self.predict(),
            Stage::Evaluate => self.evaluate(),
            Stage::Compare => self.compare(),
        };
        result.map_err(|error| StageError { stage, error })
    }

    /// Every stage in order. Synthesis runs only without input corpus files;
    /// comparison only with a non-empty method roster.
    pub fn pipeline(&self) -> std::result::Result<(), StageError> {
        let mut stages = Vec::new();
        if self.config.paths.tweets.is_none() {
            stages.push(Stage::Synth);
        }
        stages.extend([
            Stage::Ingest,
            Stage::Groundtruth,
            Stage::Train,
            Stage::Enrich,
            Stage::Vectorize,
            Stage::Project,
            Stage::Predict,
            Stage::Evaluate,
        ]);
        if !self.config.methods.is_empty() {
            stages.push(Stage::Compare);
        }
        for s in stages {
            self.run_stage(s)?;
        }
        Ok(())
    }

    pub fn synth(&self) -> Result<()> {
        let out = generate_synthetic_corpus(&self.config.synth, self.seed_for("synth"))?;
        save_corpus(&out.corpus, &self.path("corpus"))?;
        self.stamp_dir("corpus", Stage::Synth)?;
        let mut csv = CsvBuffer::new(Some(&self.provenance_line(Stage::Synth)), &["user_id", "party", "political_share"])?;
        for (user, party) in &out.planted {
            let share = out.political_share.get(user).copied().unwrap_or(0.0);
            csv.row([user.as_str(), party.as_str(), &crate::io::fmt_f64(share)])?;
        }
        self.write_bytes("synth/planted.csv", &csv.into_bytes()?)
    }

    pub fn ingest(&self) -> Result<()> {
        let p = &self.config.paths;
        let dir = self.path("corpus");
        let (corpus, report) = match (&p.tweets, &p.likes, &p.catalog) {
            (Some(t), Some(l), Some(c)) => load_corpus_with_report(t, l, c)?,
            _ => load_corpus_with_report(
                &dir.join("tweets.jsonl"),
                &dir.join("likes.jsonl"),
                &dir.join("catalog.json"),
            )?,
        };
        save_corpus(&corpus, &dir)?;
        self.stamp_dir("corpus", Stage::Ingest)?;
        self.write_json("ingest_report.json", Stage::Ingest, report)
    }

    pub fn groundtruth(&self) -> Result<()> {
        let mut corpus = self.corpus()?;
        let network = project_bipartite(&corpus.likes);
        let partition = louvain(&network, self.config.louvain_resolution, self.seed_for("groundtruth"))?;
        let labels = label_communities(&partition, &corpus.likes, &corpus.catalog)?;
        let labels: BTreeMap<String, String> = labels
            .into_iter()
            .filter(|(u, _)| corpus.timelines.contains_key(u))
            .collect();
        let unlabeled = corpus.n_users() - labels.len();
        if unlabeled > 0 {
            log::warn!("{unlabeled} users have no like-based label and are left out of the splits");
        }
        corpus.retain_users(|u| labels.contains_key(u));
        if labels.is_empty() {
            return Err(Error::Validation("no user received a ground-truth label".into()));
        }
        let spec = &self.config.split;
        let seed = self.seed_for("split");
        let split = match spec.mode {
            SplitMode::Stratified => stratified_split(&corpus, &labels, spec.fractions, seed)?,
            SplitMode::TimeWise => timewise_split(
                &corpus,
                &labels,
                spec.threshold.expect("validated"),
                [spec.fractions[0], spec.fractions[1]],
                seed,
            )?,
        };
        let mut csv = CsvBuffer::new(Some(&self.provenance_line(Stage::Groundtruth)), &["user_id", "party", "community"])?;
        for (u, l) in &labels {
            csv.row([u.as_str(), l.as_str(), &partition.assignment[u].to_string()])?;
        }
        self.write_bytes("groundtruth/labels.csv", &csv.into_bytes()?)?;
        #[derive(Serialize)]
        struct SplitFile<'a> {
            #[serde(flatten)]
            split: &'a SplitAssignment,
            provenance: Provenance,
        }
        let path = self.path("groundtruth/split.json");
        write_json_atomic(
            &path,
            &SplitFile {
                split: &split,
                provenance: self.provenance(Stage::Groundtruth),
            },
        )?;
        network.write_edge_list(
            &self.path("groundtruth/network.csv"),
            Some(&self.provenance_line(Stage::Groundtruth)),
        )?;
        #[derive(Serialize)]
        struct Summary {
            modularity: f64,
            n_communities: usize,
            n_labeled: usize,
            n_unlabeled: usize,
            split_sizes: [usize; 3],
        }
        self.write_json(
            "groundtruth/summary.json",
            Stage::Groundtruth,
            Summary {
                modularity: partition.modularity,
                n_communities: partition.n_communities(),
                n_labeled: labels.len(),
                n_unlabeled: unlabeled,
                split_sizes: [split.train.len(), split.validation.len(), split.test.len()],
            },
        )
    }

    /// Pivot training set split into (training, held-out validation).
    fn pivot_sets(&self, corpus: &Corpus) -> Result<(LabeledTweetSet, LabeledTweetSet)> {
        let set = build_pivot_training_set(corpus, self.config.pivot_cap)?;
        Ok(set.split_holdout(self.config.classifier_holdout, self.seed_for("classifier/holdout")))
    }

    fn classifier_config(&self) -> crate::classifier::ClassifierConfig {
        let mut c = self.config.classifier.clone();
        c.seed = self.seed_for("train");
        c
    }

    fn save_model(&self, name: &str, model: &Classifier, log: &TrainingLog, stage: Stage) -> Result<()> {
        let dir = format!("models/{name}");
        model.save(&self.path(&dir))?;
        self.stamp_dir(&dir, stage)?;
        self.write_bytes(
            &format!("{dir}/training_log.csv"),
            &log.to_csv(Some(&self.provenance_line(stage)))?,
        )
    }

    pub fn train(&self) -> Result<()> {
        let corpus = self.corpus()?;
        let (rest, held) = self.pivot_sets(&corpus)?;
        let encoder = fit_encoder(rest.texts(), self.config.classifier.min_char_freq);
        let (model, log) = train(&rest, &encoder, &self.classifier_config(), &held, &corpus.catalog.labels())?;
        log::info!("base classifier validation accuracy {:.4}", log.best_accuracy());
        self.save_model("base", &model, &log, Stage::Train)
    }

    fn write_vectors(&self, name: &str, vectors: &[UserVector], stage: Stage) -> Result<()> {
        let path = self.path(&format!("vectors/{name}.csv"));
        ensure_parent(&path)?;
        let refs: Vec<&UserVector> = vectors.iter().collect();
        write_user_vectors(&path, &refs, Some(&self.provenance_line(stage)))
    }

    /// Vectors of every ordinary user and of the pivots under `classifier`.
    fn vectorize_with(&self, classifier: &Classifier, corpus: &Corpus, name: &str, stage: Stage) -> Result<()> {
        let k = self.config.k;
        let vectors: Vec<UserVector> = corpus
            .timelines
            .values()
            .map(|t| crate::ideology::user_vector(classifier, t, k))
            .collect::<Result<_>>()?;
        self.write_vectors(name, &vectors, stage)?;
        let pivots: Vec<UserVector> = pivot_vectors(classifier, corpus, k)?.into_values().collect();
        self.write_vectors(&format!("pivots_{name}"), &pivots, stage)
    }

    /// Also writes the base-classifier vectors, which enrichment consumes.
    pub fn enrich(&self) -> Result<()> {
        let corpus = self.corpus()?;
        let split = self.split()?;
        let base = self.classifier("base")?;
        self.vectorize_with(&base, &corpus, "base", Stage::Enrich)?;
        let all = self.vectors("base")?;
        let train_vectors: Vec<UserVector> = split.train.iter().filter_map(|u| all.get(u).cloned()).collect();
        let pivots = self.pivot_vectors("base")?;
        let selected = select_enrichment_users(&train_vectors, &pivots, &corpus.catalog, self.config.percentile)?;
        let scores = score_users(&base, &corpus, selected.keys().map(String::as_str))?;
        let tweets = select_enrichment_tweets_scored(&scores, &selected, &corpus, self.config.th)?;
        log::info!("enrichment: {} users, {} tweets", selected.len(), tweets.len());

        let mut csv = CsvBuffer::new(Some(&self.provenance_line(Stage::Enrich)), &["user_id", "party"])?;
        for (u, p) in &selected {
            csv.row([u, p])?;
        }
        self.write_bytes("enrich/selected_users.csv", &csv.into_bytes()?)?;
        self.write_bytes("enrich/tweets.jsonl", &tweets.to_jsonl()?)?;
        self.stamp_dir("enrich", Stage::Enrich)?;

        let (rest, held) = self.pivot_sets(&corpus)?;
        let (model, log) = retrain_enriched(
            &rest,
            &tweets,
            base.encoder(),
            &self.classifier_config(),
            &held,
            &corpus.catalog.labels(),
        )?;
        log::info!("enriched classifier validation accuracy {:.4}", log.best_accuracy());
        self.save_model("enriched", &model, &log, Stage::Enrich)
    }

    pub fn vectorize(&self) -> Result<()> {
        let corpus = self.corpus()?;
        let enriched = self.classifier("enriched")?;
        self.vectorize_with(&enriched, &corpus, "enriched", Stage::Vectorize)
    }

    /// 2-D ideology coordinates fitted on training users and pivots; other
    /// split users are placed through the fitted projection.
    pub fn project(&self) -> Result<()> {
        let split = self.split()?;
        let users = self.vectors("enriched")?;
        let pivots = self.pivot_vectors("enriched")?;
        let mut fit: Vec<&UserVector> = split.train.iter().filter_map(|u| users.get(u)).collect();
        fit.extend(pivots.values());
        let extra: Vec<&UserVector> = split
            .validation
            .iter()
            .chain(&split.test)
            .filter_map(|u| users.get(u))
            .collect();
        let p = &self.config.projection;
        let points = project_ideology(&fit, &extra, p.method, &p.umap, self.seed_for("project"))?;
        let corpus = self.corpus()?;
        let path = self.path("ideology/points.csv");
        ensure_parent(&path)?;
        write_ideology_points(
            &path,
            &points,
            &corpus.catalog,
            &self.truth()?,
            Some(&self.provenance_line(Stage::Project)),
        )
    }

    fn write_method_predictions(&self, dir: &str, method: Method, predictions: &[Prediction], stage: Stage) -> Result<()> {
        let path = self.path(&format!("{dir}/{}.csv", method.name()));
        ensure_parent(&path)?;
        write_predictions(&path, predictions, Some(&self.provenance_line(stage)))
    }

    pub fn predict(&self) -> Result<()> {
        let mut inputs = methods::Inputs::new(self)?;
        let predictions = inputs.run(MAIN_METHOD)?;
        self.write_method_predictions("predictions", MAIN_METHOD, &predictions, Stage::Predict)
    }

    fn write_report(
        &self,
        dir: &str,
        name: &str,
        stage: Stage,
        party: EvalReport,
        pole: EvalReport,
    ) -> Result<(EvalReport, EvalReport)> {
        self.write_bytes(
            &format!("{dir}/{name}_party_confusion.csv"),
            &party.confusion.to_csv(Some(&self.provenance_line(stage)))?,
        )?;
        self.write_bytes(
            &format!("{dir}/{name}_pole_confusion.csv"),
            &pole.confusion.to_csv(Some(&self.provenance_line(stage)))?,
        )?;
        #[derive(Serialize)]
        struct Both<'a> {
            method: &'a str,
            party: &'a EvalReport,
            pole: &'a EvalReport,
        }
        self.write_json(
            &format!("{dir}/{name}.json"),
            stage,
            Both {
                method: name,
                party: &party,
                pole: &pole,
            },
        )?;
        Ok((party, pole))
    }

    /// Reports, confusion matrices and sensitivity curves of the main
    /// method, plus the external-account report when configured.
    pub fn evaluate(&self) -> Result<()> {
        let corpus = self.corpus()?;
        let truth = self.truth()?;
        let predictions = self.predictions(MAIN_METHOD)?;
        let (party, pole) = evaluate_both(&predictions, &truth, &corpus.catalog)?;
        self.write_report("reports", MAIN_METHOD.name(), Stage::Evaluate, party, pole)?;

        let e = &self.config.evaluation;
        let prov = self.provenance_line(Stage::Evaluate);
        let curve = distance_sensitivity(&predictions, &truth, &corpus.catalog, e.distance_points)?;
        self.write_bytes("reports/curve_distance.csv", &curve.to_csv(Some(&prov))?)?;
        let tweets: BTreeMap<String, usize> =
            corpus.timelines.iter().map(|(u, t)| (u.clone(), t.len())).collect();
        let retweets: BTreeMap<String, usize> =
            corpus.timelines.iter().map(|(u, t)| (u.clone(), t.retweet_count())).collect();
        let curve = count_sensitivity(
            &predictions,
            &truth,
            &corpus.catalog,
            &tweets,
            &CountGrid::AtLeast(e.tweet_grid.clone()),
            CurveAxis::Tweets,
        )?;
        self.write_bytes("reports/curve_tweets.csv", &curve.to_csv(Some(&prov))?)?;
        let curve = count_sensitivity(
            &predictions,
            &truth,
            &corpus.catalog,
            &retweets,
            &CountGrid::Bins(e.retweet_bins.clone()),
            CurveAxis::Retweets,
        )?;
        self.write_bytes("reports/curve_retweets.csv", &curve.to_csv(Some(&prov))?)?;

        if let Some(path) = &self.config.paths.external_accounts {
            let (party, pole) = external::evaluate_external(self, path)?;
            self.write_report("reports", "external", Stage::Evaluate, party, pole)?;
        }
        Ok(())
    }

    /// Runs the method roster and writes a ranking table.
    pub fn compare(&self) -> Result<()> {
        let corpus = self.corpus()?;
        let truth = self.truth()?;
        let mut inputs = methods::Inputs::new(self)?;
        let mut rows = Vec::new();
        for &method in &self.config.methods {
            log::info!("method {}", method.name());
            let predictions = inputs.run(method)?;
            self.write_method_predictions("compare/predictions", method, &predictions, Stage::Compare)?;
            let (party, pole) = evaluate_both(&predictions, &truth, &corpus.catalog)?;
            rows.push((method, self.write_report("compare/reports", method.name(), Stage::Compare, party, pole)?));
        }
        rows.sort_by(|a, b| {
            let (pa, pb) = ((a.1).0.micro.f1, (b.1).0.micro.f1);
            pb.total_cmp(&pa).then(a.0.cmp(&b.0))
        });
        self.write_bytes("compare/ranking.csv", &methods::ranking_csv(&rows, &self.provenance_line(Stage::Compare))?)
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}
