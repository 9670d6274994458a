use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Tweet};
use crate::error::{Error, Result};
use crate::rng;

/// Default number of most recent tweets taken from each pivot.
pub const PIVOT_CAP: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Pivot,
    Enrichment,
    SupervisedFeedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTweet {
    pub tweet: Tweet,
    pub label: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledTweetSet {
    pub items: Vec<LabeledTweet>,
}

impl LabeledTweetSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, tweet: Tweet, label: impl Into<String>, provenance: Provenance) {
        self.items.push(LabeledTweet {
            tweet,
            label: label.into(),
            provenance,
        });
    }

    /// Concatenation without deduplication.
    pub fn union(&self, other: &LabeledTweetSet) -> LabeledTweetSet {
        let mut items = self.items.clone();
        items.extend(other.items.iter().cloned());
        LabeledTweetSet { items }
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.tweet.text.as_str())
    }

    pub fn label_counts(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for i in &self.items {
            *out.entry(i.label.as_str()).or_default() += 1;
        }
        out
    }

    /// Splits off a stratified held-out part of roughly `fraction` of every
    /// label. Returns `(rest, held_out)`.
    pub fn split_holdout(&self, fraction: f64, seed: u64) -> (LabeledTweetSet, LabeledTweetSet) {
        let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, item) in self.items.iter().enumerate() {
            by_label.entry(item.label.as_str()).or_default().push(i);
        }
        let mut held = vec![false; self.items.len()];
        for (label, mut idx) in by_label {
            let mut r = rng::seeded(rng::derive_seed(seed, label));
            idx.shuffle(&mut r);
            let n = ((idx.len() as f64) * fraction).round() as usize;
            for &i in idx.iter().take(n.min(idx.len().saturating_sub(1))) {
                held[i] = true;
            }
        }
        let (mut rest, mut out) = (LabeledTweetSet::default(), LabeledTweetSet::default());
        for (item, h) in self.items.iter().zip(held) {
            if h {
                out.items.push(item.clone());
            } else {
                rest.items.push(item.clone());
            }
        }
        (rest, out)
    }

    /// JSON-lines dump, one labeled tweet per line.
    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for item in &self.items {
            serde_json::to_writer(&mut out, item)?;
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<LabeledTweetSet> {
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            items.push(serde_json::from_str(line).map_err(|e| Error::Parse {
                path: "<labeled tweets>".into(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(LabeledTweetSet { items })
    }
}

/// Distant supervision: every pivot tweet is labeled with the pivot's party.
/// Takes at most `per_party_cap` most recent tweets of each pivot.
pub fn build_pivot_training_set(corpus: &Corpus, per_party_cap: usize) -> Result<LabeledTweetSet> {
    let mut set = LabeledTweetSet::default();
    for party in corpus.catalog.parties() {
        let timeline = corpus
            .pivot_timelines
            .get(&party.label)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| {
                Error::InvalidInput(format!("pivot of party {} has no tweets", party.label))
            })?;
        for tweet in timeline.tweets.iter().take(per_party_cap) {
            set.push(tweet.clone(), party.label.clone(), Provenance::Pivot);
        }
    }
    Ok(set)
}
