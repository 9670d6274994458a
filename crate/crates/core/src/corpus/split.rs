use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    #[serde(rename = "stratified")]
    Stratified,
    #[serde(rename = "time-wise")]
    TimeWise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub mode: SplitMode,
}

impl SplitAssignment {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn partition_of(&self, user: &str) -> Option<&'static str> {
        if self.train.contains(user) {
            Some("train")
        } else if self.validation.contains(user) {
            Some("validation")
        } else if self.test.contains(user) {
            Some("test")
        } else {
            None
        }
    }
}

fn check_fractions(fractions: [f64; 3]) -> Result<()> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Config(format!(
            "split fractions must lie in [0, 1], got {fractions:?}"
        )));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

/// Splits `users` (with their labels) into train/validation/test keeping each
/// label's proportions. Labels with fewer members than the number of
/// non-empty splits go entirely to train.
fn stratify(
    users: &BTreeMap<String, String>,
    fractions: [f64; 3],
    seed: u64,
) -> [BTreeSet<String>; 3] {
    let mut by_label: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (user, label) in users {
        by_label.entry(label).or_default().push(user);
    }
    let active = fractions.iter().filter(|f| **f > 0.0).count();
    let mut out: [BTreeSet<String>; 3] = Default::default();
    for (label, mut members) in by_label {
        if members.len() < active {
            warn!(
                "label {label} has {} members, fewer than {active} splits; assigning to train",
                members.len()
            );
            out[0].extend(members.iter().map(|m| m.to_string()));
            continue;
        }
        let mut r = rng::seeded(rng::derive_seed(seed, label));
        members.shuffle(&mut r);
        let n = members.len() as f64;
        let n_val = (n * fractions[1]).round() as usize;
        let n_test = ((n * fractions[2]).round() as usize).min(members.len() - n_val);
        let (val, rest) = members.split_at(n_val);
        let (test, train) = rest.split_at(n_test);
        out[0].extend(train.iter().map(|m| m.to_string()));
        out[1].extend(val.iter().map(|m| m.to_string()));
        out[2].extend(test.iter().map(|m| m.to_string()));
    }
    out
}

fn labels_for_corpus(
    corpus: &Corpus,
    labels: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, String>> {
    let mut missing = Vec::new();
    let mut out = BTreeMap::new();
    for user in corpus.user_ids() {
        match labels.get(user) {
            Some(l) => {
                out.insert(user.to_string(), l.clone());
            }
            None => missing.push(user),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "{} users have no label (e.g. {})",
            missing.len(),
            missing[0]
        )));
    }
    Ok(out)
}

/// Stratified random split over the corpus users. `fractions` are
/// (train, validation, test).
pub fn stratified_split(
    corpus: &Corpus,
    labels: &BTreeMap<String, String>,
    fractions: [f64; 3],
    seed: u64,
) -> Result<SplitAssignment> {
    check_fractions(fractions)?;
    let users = labels_for_corpus(corpus, labels)?;
    let [train, validation, test] = stratify(&users, fractions, seed);
    Ok(SplitAssignment {
        train,
        validation,
        test,
        mode: SplitMode::Stratified,
    })
}

/// Time-wise split: test holds users whose every tweet is strictly after
/// `threshold`; everyone else is stratified into train and validation with
/// proportions `train_validation`.
pub fn timewise_split(
    corpus: &Corpus,
    labels: &BTreeMap<String, String>,
    threshold: DateTime<Utc>,
    train_validation: [f64; 2],
    seed: u64,
) -> Result<SplitAssignment> {
    let users = labels_for_corpus(corpus, labels)?;
    let mut test = BTreeSet::new();
    let mut pool = BTreeMap::new();
    for (user, label) in users {
        let timeline = &corpus.timelines[&user];
        if timeline.tweets.iter().all(|t| t.created_at > threshold) {
            test.insert(user);
        } else {
            pool.insert(user, label);
        }
    }
    if test.is_empty() {
        return Err(Error::Validation(format!(
            "no user tweeted only after {threshold}; choose an earlier threshold"
        )));
    }
    let total = train_validation[0] + train_validation[1];
    if total <= 0.0 {
        return Err(Error::Config("train/validation fractions are both zero".into()));
    }
    let fr = [train_validation[0] / total, train_validation[1] / total, 0.0];
    check_fractions(fr)?;
    let [train, validation, _] = stratify(&pool, fr, seed);
    Ok(SplitAssignment {
        train,
        validation,
        test,
        mode: SplitMode::TimeWise,
    })
}
