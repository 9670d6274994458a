//! Comparison methods: chance and majority predictors, word2vec and retweet
//! ideologies, supervised feedback enrichment and a linear SVM.

mod svc;
mod word2vec;

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng as _;

pub use svc::{train_svc, LinearSvc, SvcConfig};
pub use word2vec::{
    embed_user, load_stopwords, tokenize, train_embeddings, train_embeddings_on, EmbeddingConfig,
    EmbeddingModel, EMBEDDING_FORMAT, MAX_VOCABULARY,
};

use crate::classifier::{Classifier, LabeledTweetSet, Provenance};
use crate::corpus::{Corpus, PartyCatalog};
use crate::error::{Error, Result};
use crate::ideology::UserVector;
use crate::prediction::{
    predict_clustering_matrix, Algorithm, ClusteringConfig,
    Prediction, Task,
};
use crate::rng::seeded;

/// Uniform independent draws from `labels`.
pub fn predict_random(
    users: &[String],
    labels: &[String],
    task: Task,
    catalog: &PartyCatalog,
    seed: u64,
) -> Result<Vec<Prediction>> {
    if labels.is_empty() {
        return Err(Error::invalid("random baseline needs at least one label"));
    }
    let mut r = seeded(seed);
    Ok(users
        .iter()
        .map(|u| {
            let label = &labels[r.random_range(0..labels.len())];
            Prediction::new(u, label, task, catalog, 1.0)
        })
        .collect())
}

/// Most frequent training label; ties go to the smaller label.
pub fn majority_label(train_labels: &[String]) -> Result<&str> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in train_labels {
        *counts.entry(l).or_default() += 1;
    }
    counts
        .into_iter()
        .fold(None, |best: Option<(&str, usize)>, (l, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((l, c)),
        })
        .map(|(l, _)| l)
        .ok_or_else(|| Error::invalid("majority baseline needs training labels"))
}

pub fn predict_majority(
    train_labels: &[String],
    users: &[String],
    task: Task,
    catalog: &PartyCatalog,
) -> Result<Vec<Prediction>> {
    let label = majority_label(train_labels)?;
    Ok(users
        .iter()
        .map(|u| Prediction::new(u, label, task, catalog, 1.0))
        .collect())
}

/// Tweets the classifier gets wrong with max score at least `th`, relabeled
/// with their true label.
pub fn supervised_feedback_enrichment(
    classifier: &Classifier,
    labeled: &LabeledTweetSet,
    th: f64,
) -> LabeledTweetSet {
    let mut out = LabeledTweetSet::default();
    for item in &labeled.items {
        let scores = classifier.classify_text(&item.tweet.text);
        let predicted = &classifier.labels()[scores.argmax()];
        if scores.max() >= th && *predicted != item.label {
            out.push(item.tweet.clone(), item.label.clone(), Provenance::SupervisedFeedback);
        }
    }
    out
}

/// Word2vec user vectors for `users`.
pub fn word2vec_user_vectors(model: &EmbeddingModel, corpus: &Corpus, users: &[String]) -> Result<Vec<UserVector>> {
    users
        .iter()
        .map(|u| {
            let tl = corpus
                .timelines
                .get(u)
                .ok_or_else(|| Error::invalid(format!("unknown user {u}")))?;
            Ok(UserVector {
                user_id: u.clone(),
                components: embed_user(model, tl),
            })
        })
        .collect()
}

/// Word2vec vectors of the pivot timelines, keyed by party label.
pub fn word2vec_pivot_vectors(model: &EmbeddingModel, corpus: &Corpus) -> Result<BTreeMap<String, UserVector>> {
    corpus
        .catalog
        .parties()
        .iter()
        .map(|p| {
            let tl = corpus
                .pivot_timelines
                .get(&p.label)
                .ok_or_else(|| Error::invalid(format!("missing pivot timeline for {}", p.label)))?;
            Ok((
                p.label.clone(),
                UserVector {
                    user_id: p.pivot_user_id.clone(),
                    components: embed_user(model, tl),
                },
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetweetVector {
    pub user_id: String,
    /// Retweeted account → number of retweets.
    pub counts: BTreeMap<String, usize>,
}

impl RetweetVector {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

fn count_retweets(user_id: &str, tl: &crate::corpus::Timeline) -> RetweetVector {
    let mut counts = BTreeMap::new();
    for t in &tl.tweets {
        if let Some(src) = &t.retweet_of_user {
            *counts.entry(src.clone()).or_default() += 1;
        }
    }
    RetweetVector {
        user_id: user_id.to_string(),
        counts,
    }
}

/// Retweet counts of every ordinary user.
pub fn retweet_vectors(corpus: &Corpus) -> Vec<RetweetVector> {
    corpus
        .timelines
        .iter()
        .map(|(u, tl)| count_retweets(u, tl))
        .collect()
}

/// Pivot rows for the retweet space: the pivot's own retweets plus its own
/// account, counted as often as an average user retweets in total.
pub fn pivot_retweet_vectors(corpus: &Corpus, users: &[RetweetVector]) -> BTreeMap<String, RetweetVector> {
    let active: Vec<usize> = users.iter().map(RetweetVector::total).filter(|&t| t > 0).collect();
    let self_count = if active.is_empty() {
        1
    } else {
        (active.iter().sum::<usize>() as f64 / active.len() as f64).round().max(1.0) as usize
    };
    corpus
        .catalog
        .parties()
        .iter()
        .map(|p| {
            let mut v = match corpus.pivot_timelines.get(&p.label) {
                Some(tl) => count_retweets(&p.pivot_user_id, tl),
                None => RetweetVector {
                    user_id: p.pivot_user_id.clone(),
                    counts: BTreeMap::new(),
                },
            };
            *v.counts.entry(p.pivot_user_id.clone()).or_default() += self_count;
            (p.label.clone(), v)
        })
        .collect()
}

/// Pairwise distances clustered by mean shift, as used for retweet vectors.
pub fn retweet_clustering_config(seed: u64) -> ClusteringConfig {
    ClusteringConfig {
        use_pairwise_projection: true,
        reduce_dims: None,
        standardize: false,
        algorithm: Algorithm::MeanShift,
        n_clusters: None,
        seed,
        ..Default::default()
    }
}

fn retweet_matrix(rows: &[&RetweetVector], columns: &BTreeMap<&str, usize>) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), columns.len()));
    for (i, v) in rows.iter().enumerate() {
        for (acc, c) in &v.counts {
            m[[i, columns[acc.as_str()]]] = *c as f64;
        }
    }
    m
}

/// Clusters users with retweets together with the pivots. Users without
/// retweets fall back to the nearest pivot of a zero vector with zero
/// confidence.
pub fn predict_retweet_clustering(
    users: &[RetweetVector],
    pivots: &BTreeMap<String, RetweetVector>,
    catalog: &PartyCatalog,
    config: &ClusteringConfig,
    task: Task,
) -> Result<Vec<Prediction>> {
    let pivot_rows: Vec<&RetweetVector> = catalog
        .parties()
        .iter()
        .map(|p| {
            pivots
                .get(&p.label)
                .ok_or_else(|| Error::invalid(format!("missing pivot retweet vector for {}", p.label)))
        })
        .collect::<Result<_>>()?;
    let (active, idle): (Vec<&RetweetVector>, Vec<&RetweetVector>) =
        users.iter().partition(|v| !v.counts.is_empty());
    let mut columns: BTreeMap<&str, usize> = BTreeMap::new();
    for v in active.iter().chain(&pivot_rows) {
        for acc in v.counts.keys() {
            columns.entry(acc.as_str()).or_default();
        }
    }
    for (i, c) in columns.values_mut().enumerate() {
        *c = i;
    }
    let pivot_m = retweet_matrix(&pivot_rows, &columns);
    let mut out: BTreeMap<String, Prediction> = BTreeMap::new();
    if !active.is_empty() {
        let ids: Vec<String> = active.iter().map(|v| v.user_id.clone()).collect();
        let m = retweet_matrix(&active, &columns);
        for p in predict_clustering_matrix(&ids, m.view(), pivot_m.view(), catalog, config, task)? {
            out.insert(p.user_id.clone(), p);
        }
    }
    // a zero vector is equally far from every pivot: the smallest label wins
    let fallback = catalog.labels().into_iter().min().expect("non-empty catalog");
    let label = match task {
        Task::Party => fallback.as_str(),
        Task::Pole => catalog.pole_of(&fallback).expect("catalog party"),
    };
    for v in idle {
        out.insert(v.user_id.clone(), Prediction::new(&v.user_id, label, task, catalog, 1.0));
    }
    Ok(users.iter().map(|v| out.remove(&v.user_id).expect("predicted")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("u{i}")).collect()
    }

    #[test]
    fn random_single_label_and_determinism() {
        let cat = PartyCatalog::italian();
        let one = vec![cat.labels()[0].clone()];
        let p = predict_random(&ids(20), &one, Task::Party, &cat, 3).unwrap();
        assert!(p.iter().all(|x| x.party.as_deref() == Some(one[0].as_str())));
        let labels = cat.labels();
        let a = predict_random(&ids(50), &labels, Task::Party, &cat, 9).unwrap();
        let b = predict_random(&ids(50), &labels, Task::Party, &cat, 9).unwrap();
        assert_eq!(a, b);
        assert!(predict_random(&ids(1), &[], Task::Party, &cat, 0).is_err());
    }

    #[test]
    fn majority_prefers_mode_then_smaller_label() {
        let l = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(majority_label(&l(&["b", "a", "b", "c", "b"])).unwrap(), "b");
        assert_eq!(majority_label(&l(&["b", "a", "a", "b"])).unwrap(), "a");
        assert!(majority_label(&[]).is_err());
    }
}
