//! Data model, file ingestion, dataset splits and the synthetic corpus
//! generator.

mod catalog;
mod io;
mod split;
mod synth;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use catalog::{Party, PartyCatalog};
pub use io::{load_corpus, load_corpus_with_report, load_tweets, save_corpus, IngestReport};
pub use split::{stratified_split, timewise_split, SplitAssignment, SplitMode};
pub use synth::{generate_synthetic_corpus, SynthConfig, SynthOutput};

use crate::error::{Error, Result};
use crate::groundtruth::LikeGraph;

/// Minimum number of valid tweets for an ordinary user to be kept.
pub const MIN_TWEETS: usize = 25;
/// Ordinary-user timelines are truncated to this many most recent tweets.
pub const MAX_TWEETS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub tweet_id: String,
    pub user_id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub is_retweet: bool,
    pub retweet_of_user: Option<String>,
}

impl Tweet {
    /// Checks the per-record invariants. Returns a reason on failure.
    pub fn check(&self) -> std::result::Result<(), &'static str> {
        if self.text.trim().is_empty() {
            return Err("empty text");
        }
        if self.is_retweet != self.retweet_of_user.is_some() {
            return Err("retweet_of_user must be present iff is_retweet");
        }
        Ok(())
    }
}

/// A user's tweets, most recent first.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub user_id: String,
    pub tweets: Vec<Tweet>,
}

impl Timeline {
    /// Builds a timeline, sorting tweets by `created_at` descending. Ties are
    /// ordered by tweet id so the order is total.
    pub fn new(user_id: impl Into<String>, mut tweets: Vec<Tweet>) -> Self {
        tweets.sort_by(|a, b| {
            b.created_at
                .cmp(&a.created_at)
                .then_with(|| a.tweet_id.cmp(&b.tweet_id))
        });
        Timeline {
            user_id: user_id.into(),
            tweets,
        }
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.tweets.iter().map(|t| t.text.as_str())
    }

    pub fn retweet_count(&self) -> usize {
        self.tweets.iter().filter(|t| t.is_retweet).count()
    }

    pub fn truncate_recent(&mut self, n: usize) {
        self.tweets.truncate(n);
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub timelines: BTreeMap<String, Timeline>,
    /// Pivot timelines keyed by party label. Not truncated.
    pub pivot_timelines: BTreeMap<String, Timeline>,
    pub likes: LikeGraph,
    pub catalog: PartyCatalog,
}

impl Corpus {
    /// Checks the cross-record invariants.
    pub fn validate(&self) -> Result<()> {
        for pivot in self.catalog.parties() {
            if self.timelines.contains_key(&pivot.pivot_user_id) {
                return Err(Error::Validation(format!(
                    "pivot account {} also appears as an ordinary user",
                    pivot.pivot_user_id
                )));
            }
        }
        for (user, timeline) in &self.timelines {
            if timeline.tweets.iter().any(|t| &t.user_id != user) {
                return Err(Error::Validation(format!(
                    "timeline of {user} contains tweets of another user"
                )));
            }
        }
        let mut missing: Vec<&str> = self
            .likes
            .edges()
            .filter(|(_, t)| !self.likes.tweet_party().contains_key(*t))
            .map(|(_, t)| t)
            .collect();
        missing.dedup();
        if !missing.is_empty() {
            return Err(Error::Validation(format!(
                "likes reference unknown pivot tweets: {}",
                missing.join(", ")
            )));
        }
        Ok(())
    }

    pub fn user_ids(&self) -> impl Iterator<Item = &str> {
        self.timelines.keys().map(String::as_str)
    }

    pub fn n_users(&self) -> usize {
        self.timelines.len()
    }

    /// Keeps only the users accepted by `keep`.
    pub fn retain_users(&mut self, mut keep: impl FnMut(&str) -> bool) {
        self.timelines.retain(|id, _| keep(id));
    }
}
