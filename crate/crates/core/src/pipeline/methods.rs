use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Run, Stage};
use crate::baselines::{
    load_stopwords, pivot_retweet_vectors, predict_majority, predict_random, predict_retweet_clustering,
    retweet_clustering_config, retweet_vectors, supervised_feedback_enrichment, train_embeddings, train_svc,
    word2vec_pivot_vectors, word2vec_user_vectors,
};
use crate::classifier::{retrain_enriched, LabeledTweetSet, Provenance as TweetProvenance};
use crate::corpus::{Corpus, SplitAssignment};
use crate::error::{Error, Result};
use crate::evaluation::{pole_truth, task_labels, EvalReport};
use crate::ideology::{to_matrix, UserVector};
use crate::io::{fmt_f64, CsvBuffer};
use crate::prediction::{
    normalized_pivot_distances, predict_clustering, predict_nearest_pivot, ClusteringConfig, Prediction, Task,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Random,
    Majority,
    PartiesClustering,
    PartiesEnrichedClustering,
    PartiesEnrichedDistance,
    SupervisedEnrichedClustering,
    Word2vecClustering,
    RetweetsClustering,
    PartiesSvc,
    PartiesEnrichedSvc,
    SupervisedEnrichedSvc,
    Word2vecSvc,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::Random,
        Method::Majority,
        Method::PartiesClustering,
        Method::PartiesEnrichedClustering,
        Method::PartiesEnrichedDistance,
        Method::SupervisedEnrichedClustering,
        Method::Word2vecClustering,
        Method::RetweetsClustering,
        Method::PartiesSvc,
        Method::PartiesEnrichedSvc,
        Method::SupervisedEnrichedSvc,
        Method::Word2vecSvc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Majority => "majority",
            Method::PartiesClustering => "parties_clustering",
            Method::PartiesEnrichedClustering => "parties_enriched_clustering",
            Method::PartiesEnrichedDistance => "parties_enriched_distance",
            Method::SupervisedEnrichedClustering => "supervised_enriched_clustering",
            Method::Word2vecClustering => "word2vec_clustering",
            Method::RetweetsClustering => "retweets_clustering",
            Method::PartiesSvc => "parties_svc",
            Method::PartiesEnrichedSvc => "parties_enriched_svc",
            Method::SupervisedEnrichedSvc => "supervised_enriched_svc",
            Method::Word2vecSvc => "word2vec_svc",
        }
    }

    pub fn display(self) -> &'static str {
        match self {
            Method::Random => "random classifier",
            Method::Majority => "majority classifier",
            Method::PartiesClustering => "parties + clustering",
            Method::PartiesEnrichedClustering => "parties enriched + clustering",
            Method::PartiesEnrichedDistance => "parties enriched + distance",
            Method::SupervisedEnrichedClustering => "supervised enriched + clustering",
            Method::Word2vecClustering => "word2vec + clustering",
            Method::RetweetsClustering => "retweets + clustering",
            Method::PartiesSvc => "parties + SVC",
            Method::PartiesEnrichedSvc => "parties enriched + SVC",
            Method::SupervisedEnrichedSvc => "supervised enriched + SVC",
            Method::Word2vecSvc => "word2vec + SVC",
        }
    }

    pub fn is_supervised(self) -> bool {
        matches!(
            self,
            Method::Majority
                | Method::SupervisedEnrichedClustering
                | Method::PartiesSvc
                | Method::PartiesEnrichedSvc
                | Method::SupervisedEnrichedSvc
                | Method::Word2vecSvc
        )
    }
}

/// Party labels from the party-task predictions, pole labels from the
/// pole-task predictions; confidence and distance from the party side.
pub fn merge_tasks(party: Vec<Prediction>, pole: Vec<Prediction>) -> Result<Vec<Prediction>> {
    if party.len() != pole.len() {
        return Err(Error::invalid("party and pole predictions differ in length"));
    }
    party
        .into_iter()
        .zip(pole)
        .map(|(mut a, b)| {
            if a.user_id != b.user_id {
                return Err(Error::invalid("party and pole predictions are not aligned"));
            }
            a.pole = b.pole;
            Ok(a)
        })
        .collect()
}

struct VectorSet {
    users: BTreeMap<String, UserVector>,
    pivots: BTreeMap<String, UserVector>,
}

/// Inputs shared by the roster, loaded or computed on first use.
pub(super) struct Inputs<'a> {
    run: &'a Run,
    corpus: Corpus,
    split: SplitAssignment,
    truth: BTreeMap<String, String>,
    sets: BTreeMap<&'static str, VectorSet>,
}

impl<'a> Inputs<'a> {
    pub(super) fn new(run: &'a Run) -> Result<Self> {
        Ok(Inputs {
            run,
            corpus: run.corpus()?,
            split: run.split()?,
            truth: run.truth()?,
            sets: BTreeMap::new(),
        })
    }

    fn test_users(&self) -> Vec<String> {
        self.split.test.iter().cloned().collect()
    }

    fn clustering(&self, task: Task, method: Method) -> ClusteringConfig {
        let spec = &self.run.config.clustering;
        let catalog = &self.corpus.catalog;
        let mut c = match task {
            Task::Party => spec.party.clone().unwrap_or_else(|| ClusteringConfig::party_default(catalog.len())),
            Task::Pole => spec.pole.clone().unwrap_or_else(|| ClusteringConfig::pole_default(catalog.poles().len())),
        };
        c.seed = self.run.seed_for(&format!("predict/{}/{}", method.name(), task.name()));
        c
    }

    fn vector_set(&mut self, name: &'static str) -> Result<&VectorSet> {
        if !self.sets.contains_key(name) {
            let set = match name {
                "word2vec" => self.word2vec()?,
                "supervised" => self.supervised()?,
                _ => VectorSet {
                    users: self.run.vectors(name)?,
                    pivots: self.run.pivot_vectors(name)?,
                },
            };
            self.sets.insert(name, set);
        }
        Ok(&self.sets[name])
    }

    fn word2vec(&self) -> Result<VectorSet> {
        let stopwords = match &self.run.config.paths.stopwords {
            Some(p) => load_stopwords(p)?,
            None => Default::default(),
        };
        let model = train_embeddings(
            &self.corpus,
            &self.run.config.embedding,
            &stopwords,
            self.run.seed_for("word2vec"),
        )?;
        model.save(&self.run.path("models/word2vec"))?;
        self.run.stamp_dir("models/word2vec", Stage::Compare)?;
        let users: Vec<String> = self.split.train.iter().chain(&self.split.test).cloned().collect();
        let vectors = word2vec_user_vectors(&model, &self.corpus, &users)?;
        Ok(VectorSet {
            users: vectors.into_iter().map(|v| (v.user_id.clone(), v)).collect(),
            pivots: word2vec_pivot_vectors(&model, &self.corpus)?,
        })
    }

    /// Classifier retrained with the confidently wrong tweets of the
    /// validation users, labeled with their ground truth.
    fn supervised(&self) -> Result<VectorSet> {
        let run = self.run;
        let base = run.classifier("base")?;
        let mut labeled = LabeledTweetSet::default();
        for u in &self.split.validation {
            let party = &self.truth[u];
            for t in &self.corpus.timelines[u].tweets {
                labeled.push(t.clone(), party.clone(), TweetProvenance::SupervisedFeedback);
            }
        }
        let feedback = supervised_feedback_enrichment(&base, &labeled, run.config.th);
        log::info!("supervised feedback: {} tweets", feedback.len());
        let (rest, held) = run.pivot_sets(&self.corpus)?;
        let (model, log) = retrain_enriched(
            &rest,
            &feedback,
            base.encoder(),
            &run.classifier_config(),
            &held,
            &self.corpus.catalog.labels(),
        )?;
        run.save_model("supervised", &model, &log, Stage::Compare)?;
        let k = run.config.k;
        let users = self
            .split
            .train
            .iter()
            .chain(&self.split.test)
            .map(|u| crate::ideology::user_vector(&model, &self.corpus.timelines[u], k).map(|v| (u.clone(), v)))
            .collect::<Result<_>>()?;
        Ok(VectorSet {
            users,
            pivots: crate::ideology::pivot_vectors(&model, &self.corpus, k)?,
        })
    }

    fn rows<'s>(set: &'s VectorSet, users: &[String]) -> Result<Vec<&'s UserVector>> {
        users
            .iter()
            .map(|u| {
                set.users
                    .get(u)
                    .ok_or_else(|| Error::Validation(format!("no vector for user {u}")))
            })
            .collect()
    }

    fn clustered(&mut self, name: &'static str, method: Method) -> Result<Vec<Prediction>> {
        let test = self.test_users();
        let party_cfg = self.clustering(Task::Party, method);
        let pole_cfg = self.clustering(Task::Pole, method);
        let catalog = self.corpus.catalog.clone();
        let set = self.vector_set(name)?;
        let users = Self::rows(set, &test)?;
        merge_tasks(
            predict_clustering(&users, &set.pivots, &catalog, &party_cfg, Task::Party)?,
            predict_clustering(&users, &set.pivots, &catalog, &pole_cfg, Task::Pole)?,
        )
    }

    fn svc(&mut self, name: &'static str, method: Method) -> Result<Vec<Prediction>> {
        let test = self.test_users();
        let train: Vec<String> = self.split.train.iter().cloned().collect();
        let party_train: Vec<String> = train.iter().map(|u| self.truth[u].clone()).collect();
        let poles = pole_truth(&self.truth, &self.corpus.catalog)?;
        let pole_train: Vec<String> = train.iter().map(|u| poles[u].clone()).collect();
        let catalog = self.corpus.catalog.clone();
        let mut svc_cfg = self.run.config.svc.clone();
        let set = self.vector_set(name)?;
        let x_train = to_matrix(&Self::rows(set, &train)?)?;
        let test_rows = Self::rows(set, &test)?;
        let x_test = to_matrix(&test_rows)?;
        let pivot_rows: Vec<&UserVector> = catalog.parties().iter().map(|p| &set.pivots[&p.label]).collect();
        let dist = normalized_pivot_distances(x_test.view(), to_matrix(&pivot_rows)?.view());
        let mut out = Vec::new();
        for (task, labels) in [(Task::Party, &party_train), (Task::Pole, &pole_train)] {
            svc_cfg.seed = self.run.seed_for(&format!("predict/{}/{}", method.name(), task.name()));
            let model = train_svc(x_train.view(), labels, &svc_cfg)?;
            let predicted = model.predict(x_test.view());
            out.push(
                test.iter()
                    .zip(&predicted)
                    .zip(&dist)
                    .map(|((u, l), d)| Prediction::new(u, l, task, &catalog, *d))
                    .collect::<Vec<_>>(),
            );
        }
        let pole = out.pop().unwrap();
        merge_tasks(out.pop().unwrap(), pole)
    }

    pub(super) fn run(&mut self, method: Method) -> Result<Vec<Prediction>> {
        let test = self.test_users();
        let catalog = self.corpus.catalog.clone();
        match method {
            Method::Random => {
                let seed = |t: &str| self.run.seed_for(&format!("predict/random/{t}"));
                merge_tasks(
                    predict_random(&test, &task_labels(&catalog, Task::Party), Task::Party, &catalog, seed("party"))?,
                    predict_random(&test, &task_labels(&catalog, Task::Pole), Task::Pole, &catalog, seed("pole"))?,
                )
            }
            Method::Majority => {
                let party: Vec<String> = self.split.train.iter().map(|u| self.truth[u].clone()).collect();
                let poles = pole_truth(&self.truth, &catalog)?;
                let pole: Vec<String> = self.split.train.iter().map(|u| poles[u].clone()).collect();
                merge_tasks(
                    predict_majority(&party, &test, Task::Party, &catalog)?,
                    predict_majority(&pole, &test, Task::Pole, &catalog)?,
                )
            }
            Method::PartiesClustering => self.clustered("base", method),
            Method::PartiesEnrichedClustering => self.clustered("enriched", method),
            Method::SupervisedEnrichedClustering => self.clustered("supervised", method),
            Method::Word2vecClustering => self.clustered("word2vec", method),
            Method::PartiesEnrichedDistance => {
                let set = self.vector_set("enriched")?;
                let users = Self::rows(set, &test)?;
                merge_tasks(
                    predict_nearest_pivot(&users, &set.pivots, &catalog, Task::Party)?,
                    predict_nearest_pivot(&users, &set.pivots, &catalog, Task::Pole)?,
                )
            }
            Method::RetweetsClustering => {
                let all = retweet_vectors(&self.corpus);
                let pivots = pivot_retweet_vectors(&self.corpus, &all);
                let test_vectors: Vec<_> = all.into_iter().filter(|v| self.split.test.contains(&v.user_id)).collect();
                let cfg = |t: Task| retweet_clustering_config(self.run.seed_for(&format!("predict/retweets/{}", t.name())));
                let (party_cfg, pole_cfg) = (cfg(Task::Party), cfg(Task::Pole));
                merge_tasks(
                    predict_retweet_clustering(&test_vectors, &pivots, &catalog, &party_cfg, Task::Party)?,
                    predict_retweet_clustering(&test_vectors, &pivots, &catalog, &pole_cfg, Task::Pole)?,
                )
            }
            Method::PartiesSvc => self.svc("base", method),
            Method::PartiesEnrichedSvc => self.svc("enriched", method),
            Method::SupervisedEnrichedSvc => self.svc("supervised", method),
            Method::Word2vecSvc => self.svc("word2vec", method),
        }
    }
}

pub(super) fn ranking_csv(rows: &[(Method, (EvalReport, EvalReport))], provenance: &str) -> Result<Vec<u8>> {
    let mut csv = CsvBuffer::new(
        Some(provenance),
        &[
            "rank",
            "method",
            "supervised",
            "party_macro_precision",
            "party_macro_recall",
            "party_macro_f1",
            "party_micro_precision",
            "party_micro_recall",
            "party_micro_f1",
            "pole_macro_precision",
            "pole_macro_recall",
            "pole_macro_f1",
            "pole_micro_precision",
            "pole_micro_recall",
            "pole_micro_f1",
        ],
    )?;
    for (i, (method, (party, pole))) in rows.iter().enumerate() {
        let mut fields = vec![(i + 1).to_string(), method.display().to_string(), method.is_supervised().to_string()];
        for r in [party, pole] {
            for a in [&r.macro_avg, &r.micro] {
                fields.extend([fmt_f64(a.precision), fmt_f64(a.recall), fmt_f64(a.f1)]);
            }
        }
        csv.row(fields)?;
    }
    csv.into_bytes()
}
