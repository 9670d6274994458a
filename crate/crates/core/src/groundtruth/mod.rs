//! Ground-truth party labels from likes to pivot tweets.
//!
//! The bipartite user/pivot-tweet like graph is projected onto users (edge
//! weight = number of co-liked tweets), clustered with Louvain, and every
//! community is labeled with the party its members like most.

mod labels;
mod louvain;
mod projection;

use std::collections::{BTreeMap, BTreeSet};

pub use labels::label_communities;
pub use louvain::{louvain, modularity, Partition};
pub use projection::{project_bipartite, SimilarityNetwork};

/// Likes from users to pivot tweets, with the party of every pivot tweet.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LikeGraph {
    edges: BTreeSet<(String, String)>,
    tweet_party: BTreeMap<String, String>,
}

impl LikeGraph {
    pub fn new(tweet_party: BTreeMap<String, String>) -> Self {
        LikeGraph {
            edges: BTreeSet::new(),
            tweet_party,
        }
    }

    /// Adds a like. Duplicates are ignored. Returns false for unknown tweets.
    pub fn add_like(&mut self, user: impl Into<String>, tweet: impl Into<String>) -> bool {
        let tweet = tweet.into();
        if !self.tweet_party.contains_key(&tweet) {
            return false;
        }
        self.edges.insert((user.into(), tweet));
        true
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(u, t)| (u.as_str(), t.as_str()))
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn tweet_party(&self) -> &BTreeMap<String, String> {
        &self.tweet_party
    }

    pub fn users(&self) -> BTreeSet<&str> {
        self.edges.iter().map(|(u, _)| u.as_str()).collect()
    }

    pub fn likes_of<'a>(&'a self, user: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .range((user.to_string(), String::new())..)
            .take_while(move |(u, _)| u == user)
            .map(|(_, t)| t.as_str())
    }

    /// Per-party like counts of a user.
    pub fn party_counts(&self, user: &str) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for t in self.likes_of(user) {
            if let Some(p) = self.tweet_party.get(t) {
                *counts.entry(p.as_str()).or_default() += 1;
            }
        }
        counts
    }
}
