//! Seeded planted-vocabulary corpus generator.
//!
//! Every party owns a vocabulary (its own words plus words shared with the
//! other parties of its pole). Political tweets draw each token from the
//! party vocabulary with probability `separation` and from a shared political
//! vocabulary otherwise. Pivots post clean, formally styled political tweets;
//! ordinary users mix neutral chatter, informal political tweets, retweets and
//! negative tweets that attack an opposing party with that party's own words.
//! Likes point at pivot tweets of the planted party with probability
//! `like_rate`, otherwise at a random other party.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distr::{Distribution, Uniform};
use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use super::io::build_corpus;
use super::{Corpus, Party, PartyCatalog, Tweet};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_parties: usize,
    pub n_users: usize,
    /// Inclusive range of timeline sizes, within [25, 200].
    pub tweets_per_user: [usize; 2],
    /// Vocabulary separation in [0, 1]. 1 means political tokens come only
    /// from the party vocabulary, 0 means every party speaks the shared one.
    pub separation: f64,
    /// Mean share of a user's own (non-retweet) tweets that are political.
    pub political_fraction: f64,
    /// Relative spread of the per-user political share around the mean.
    pub political_spread: f64,
    /// Share of political tweets that attack an opposing party.
    pub negative_fraction: f64,
    pub retweet_rate: f64,
    /// Probability that a retweet comes from the user's own party.
    pub retweet_loyalty: f64,
    pub like_rate: f64,
    pub likes_per_user: f64,
    pub pivot_tweets: usize,
    pub balanced: bool,
    pub party_words: usize,
    pub pole_words: usize,
    pub pole_word_share: f64,
    pub shared_words: usize,
    pub neutral_words: usize,
    /// Per-token typo probability in ordinary users' own tweets.
    pub typo_rate: f64,
    /// Share of users whose whole timeline falls after 2019-08-15.
    pub late_user_fraction: f64,
    pub influencers_per_party: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_parties: 8,
            n_users: 1600,
            tweets_per_user: [100, 100],
            separation: 0.8,
            political_fraction: 0.3,
            political_spread: 0.6,
            negative_fraction: 0.2,
            retweet_rate: 0.1,
            retweet_loyalty: 0.85,
            like_rate: 0.9,
            likes_per_user: 8.0,
            pivot_tweets: 300,
            balanced: true,
            party_words: 30,
            pole_words: 15,
            pole_word_share: 0.3,
            shared_words: 120,
            neutral_words: 800,
            typo_rate: 0.05,
            late_user_fraction: 0.1,
            influencers_per_party: 3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("separation", self.separation)?;
        unit("political_fraction", self.political_fraction)?;
        unit("political_spread", self.political_spread)?;
        unit("negative_fraction", self.negative_fraction)?;
        unit("retweet_rate", self.retweet_rate)?;
        unit("retweet_loyalty", self.retweet_loyalty)?;
        unit("like_rate", self.like_rate)?;
        unit("pole_word_share", self.pole_word_share)?;
        unit("typo_rate", self.typo_rate)?;
        unit("late_user_fraction", self.late_user_fraction)?;
        let [lo, hi] = self.tweets_per_user;
        if lo < super::MIN_TWEETS || hi > super::MAX_TWEETS || lo > hi {
            return Err(Error::Config(format!(
                "tweets_per_user must be a range within [25, 200], got [{lo}, {hi}]"
            )));
        }
        if self.n_parties < 2 {
            return Err(Error::Config("n_parties must be at least 2".into()));
        }
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be positive".into()));
        }
        if self.pivot_tweets == 0 && (self.like_rate > 0.0 || self.likes_per_user > 0.0) {
            return Err(Error::Config(
                "likes requested but pivots post no tweets (pivot_tweets = 0)".into(),
            ));
        }
        if self.pivot_tweets == 0 {
            return Err(Error::Config("pivot_tweets must be positive".into()));
        }
        if self.likes_per_user < 1.0 {
            return Err(Error::Config(
                "likes_per_user must be at least 1 so every user is labelable".into(),
            ));
        }
        if self.party_words == 0 || self.shared_words == 0 || self.neutral_words == 0 {
            return Err(Error::Config("vocabulary sizes must be positive".into()));
        }
        if self.pole_word_share > 0.0 && self.pole_words == 0 {
            return Err(Error::Config(
                "pole_word_share > 0 requires pole_words > 0".into(),
            ));
        }
        Ok(())
    }

    fn catalog(&self) -> PartyCatalog {
        if self.n_parties == 8 {
            return PartyCatalog::italian();
        }
        let n_poles = self.n_parties.min(3);
        let parties = (0..self.n_parties)
            .map(|i| Party {
                label: format!("P{}", i + 1),
                pole: format!("POLE{}", i * n_poles / self.n_parties + 1),
                pivot_user_id: format!("pivot_p{}", i + 1),
            })
            .collect();
        PartyCatalog::new(parties).expect("generated catalog is valid")
    }
}

/// Generated corpus with its planted ground truth.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: Corpus,
    /// Planted party per ordinary user.
    pub planted: BTreeMap<String, String>,
    /// Per-user probability that an own tweet is political.
    pub political_share: BTreeMap<String, f64>,
}

const CONSONANTS: &[u8] = b"bcdfglmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const NEGATIONS: &[&str] = &["no", "basta", "vergogna", "mai", "contro", "ridicoli"];
const USER_ENDINGS: &[&str] = &["", "", "!!", "...", "?", "!!!"];

struct Vocabulary {
    own: Vec<Vec<String>>,
    pole: BTreeMap<String, Vec<String>>,
    shared: Vec<String>,
    neutral: Vec<String>,
}

fn make_word(r: &mut Rng, used: &mut BTreeSet<String>) -> String {
    loop {
        let syllables = r.random_range(2..=4);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(*CONSONANTS.choose(r).unwrap() as char);
            w.push(*VOWELS.choose(r).unwrap() as char);
        }
        if r.random_bool(0.3) {
            w.push(*CONSONANTS.choose(r).unwrap() as char);
        }
        if !NEGATIONS.contains(&w.as_str()) && used.insert(w.clone()) {
            return w;
        }
    }
}

fn make_words(r: &mut Rng, used: &mut BTreeSet<String>, n: usize) -> Vec<String> {
    (0..n).map(|_| make_word(r, used)).collect()
}

/// Picks a word with a skew toward the head of the list.
fn skewed<'a>(r: &mut Rng, words: &'a [String]) -> &'a str {
    let u: f64 = r.random();
    let i = ((u * u) * words.len() as f64) as usize;
    &words[i.min(words.len() - 1)]
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    catalog: PartyCatalog,
    vocab: Vocabulary,
    r: Rng,
}

impl Generator<'_> {
    fn party_token(&mut self, party: usize) -> String {
        if self.r.random_bool(self.cfg.separation) {
            let pole = self.catalog.parties()[party].pole.clone();
            let pole_words = &self.vocab.pole[&pole];
            if !pole_words.is_empty() && self.r.random_bool(self.cfg.pole_word_share) {
                skewed(&mut self.r, pole_words).to_string()
            } else {
                skewed(&mut self.r, &self.vocab.own[party]).to_string()
            }
        } else {
            skewed(&mut self.r, &self.vocab.shared).to_string()
        }
    }

    fn political_tokens(&mut self, party: usize, n: usize) -> Vec<String> {
        let mut tokens: Vec<String> = (0..n).map(|_| self.party_token(party)).collect();
        if self.r.random_bool(0.3) {
            let tag = self.party_token(party);
            tokens.push(format!("#{tag}"));
        }
        tokens
    }

    fn formal(mut tokens: Vec<String>) -> String {
        if let Some(first) = tokens.first_mut() {
            let mut chars = first.chars();
            if let Some(c) = chars.next() {
                *first = c.to_uppercase().chain(chars).collect();
            }
        }
        let mut s = tokens.join(" ");
        s.push('.');
        s
    }

    fn typo(&mut self, word: &str) -> String {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() < 3 || word.starts_with('#') {
            return word.to_string();
        }
        let i = self.r.random_range(1..chars.len() - 1);
        let mut out = chars.clone();
        match self.r.random_range(0..3) {
            0 => {
                out.remove(i);
            }
            1 => out.insert(i, chars[i]),
            _ => out.swap(i, i + 1),
        }
        out.into_iter().collect()
    }

    fn informal(&mut self, tokens: Vec<String>) -> String {
        let tokens: Vec<String> = tokens
            .into_iter()
            .map(|t| {
                if self.r.random_bool(self.cfg.typo_rate) {
                    self.typo(&t)
                } else {
                    t
                }
            })
            .collect();
        let ending = *USER_ENDINGS.choose(&mut self.r).unwrap();
        format!("{}{ending}", tokens.join(" "))
    }

    fn pivot_tweet_text(&mut self, party: usize) -> String {
        let n = self.r.random_range(6..=12);
        let tokens = self.political_tokens(party, n);
        Self::formal(tokens)
    }

    fn user_political(&mut self, party: usize) -> String {
        let n = self.r.random_range(5..=11);
        let tokens = self.political_tokens(party, n);
        self.informal(tokens)
    }

    fn opponent(&mut self, party: usize) -> usize {
        let pole = &self.catalog.parties()[party].pole;
        let others: Vec<usize> = (0..self.catalog.len())
            .filter(|&q| &self.catalog.parties()[q].pole != pole)
            .collect();
        if others.is_empty() {
            let rest: Vec<usize> = (0..self.catalog.len()).filter(|&q| q != party).collect();
            *rest.choose(&mut self.r).unwrap()
        } else {
            *others.choose(&mut self.r).unwrap()
        }
    }

    fn user_negative(&mut self, party: usize) -> String {
        let target = self.opponent(party);
        let mut tokens = vec![NEGATIONS.choose(&mut self.r).unwrap().to_string()];
        let n = self.r.random_range(4..=9);
        tokens.extend(self.political_tokens(target, n));
        if self.r.random_bool(0.5) {
            tokens.push(NEGATIONS.choose(&mut self.r).unwrap().to_string());
        }
        self.informal(tokens)
    }

    fn user_neutral(&mut self) -> String {
        let n = self.r.random_range(5..=14);
        let mut tokens: Vec<String> = (0..n)
            .map(|_| skewed(&mut self.r, &self.vocab.neutral).to_string())
            .collect();
        if self.r.random_bool(0.2) {
            let who = self.r.random_range(0..5000);
            tokens.insert(0, format!("@user{who}"));
        }
        if self.r.random_bool(0.15) {
            let slug: String = (0..8)
                .map(|_| *b"abcdefghijklmnopqrstuvwxyz0123456789".choose(&mut self.r).unwrap() as char)
                .collect();
            tokens.push(format!("https://t.co/{slug}"));
        }
        self.informal(tokens)
    }

    fn random_time(&mut self, from: DateTime<Utc>, to: DateTime<Utc>) -> DateTime<Utc> {
        let span = (to - from).num_seconds();
        from + Duration::seconds(self.r.random_range(0..span))
    }
}

fn party_weights(n: usize, balanced: bool) -> Vec<f64> {
    if balanced {
        return vec![1.0; n];
    }
    if n == 8 {
        // liker counts per party of the Italian catalog, in catalog order
        return vec![1326.0, 4335.0, 2377.0, 3206.0, 746.0, 2705.0, 2507.0, 2997.0];
    }
    (0..n).map(|i| (n - i) as f64).collect()
}

fn pick_weighted(r: &mut Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = r.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Generates a corpus and its planted labels. Fully determined by
/// `(config, seed)`.
pub fn generate_synthetic_corpus(config: &SynthConfig, seed: u64) -> Result<SynthOutput> {
    config.validate()?;
    let catalog = config.catalog();
    let mut r = rng::seeded(seed);

    let mut used = BTreeSet::new();
    let own = (0..catalog.len())
        .map(|_| make_words(&mut r, &mut used, config.party_words))
        .collect();
    let mut pole = BTreeMap::new();
    for p in catalog.poles() {
        pole.insert(p.clone(), make_words(&mut r, &mut used, config.pole_words));
    }
    let shared = make_words(&mut r, &mut used, config.shared_words);
    let neutral = make_words(&mut r, &mut used, config.neutral_words);
    let mut g = Generator {
        cfg: config,
        catalog: catalog.clone(),
        vocab: Vocabulary {
            own,
            pole,
            shared,
            neutral,
        },
        r,
    };

    let start = Utc.with_ymd_and_hms(2019, 8, 1, 0, 0, 0).unwrap();
    let late_start = Utc.with_ymd_and_hms(2019, 8, 16, 0, 0, 0).unwrap();
    let end = Utc.with_ymd_and_hms(2019, 10, 10, 0, 0, 0).unwrap();
    let pivot_start = start - Duration::days(45);

    let mut tweets = Vec::new();
    let mut pivot_texts: Vec<Vec<String>> = Vec::new();
    let mut pivot_ids: Vec<Vec<String>> = Vec::new();
    for (pi, party) in catalog.parties().iter().enumerate() {
        let mut texts = Vec::new();
        let mut ids = Vec::new();
        for j in 0..config.pivot_tweets {
            let text = g.pivot_tweet_text(pi);
            let id = format!("{}-{j:04}", party.pivot_user_id);
            tweets.push(Tweet {
                tweet_id: id.clone(),
                user_id: party.pivot_user_id.clone(),
                text: text.clone(),
                created_at: g.random_time(pivot_start, end),
                is_retweet: false,
                retweet_of_user: None,
            });
            texts.push(text);
            ids.push(id);
        }
        pivot_texts.push(texts);
        pivot_ids.push(ids);
    }

    let weights = party_weights(catalog.len(), config.balanced);
    let n_range = Uniform::new_inclusive(config.tweets_per_user[0], config.tweets_per_user[1])
        .expect("validated range");
    let mut planted = BTreeMap::new();
    let mut political_share = BTreeMap::new();
    let mut likes = Vec::new();
    let like_count = Poisson::new((config.likes_per_user - 1.0).max(1e-9))
        .map_err(|e| Error::Config(format!("likes_per_user: {e}")))?;

    for ui in 0..config.n_users {
        let user = format!("u{ui:05}");
        let party = pick_weighted(&mut g.r, &weights);
        let n = n_range.sample(&mut g.r);
        let late = g.r.random_bool(config.late_user_fraction);
        let spread = config.political_spread * config.political_fraction;
        let share = (config.political_fraction + g.r.random_range(-1.0..=1.0) * spread).clamp(0.0, 1.0);
        let from = if late { late_start } else { start };
        for j in 0..n {
            let (text, rt_of) = if g.r.random_bool(config.retweet_rate) {
                let src_party = if g.r.random_bool(config.retweet_loyalty) {
                    party
                } else {
                    let others: Vec<usize> = (0..catalog.len()).filter(|&q| q != party).collect();
                    *others.choose(&mut g.r).unwrap()
                };
                let n_inf = config.influencers_per_party;
                let slot = g.r.random_range(0..=n_inf);
                let (source, body) = if slot == n_inf {
                    let body = pivot_texts[src_party].choose(&mut g.r).unwrap().clone();
                    (catalog.parties()[src_party].pivot_user_id.clone(), body)
                } else {
                    let body = g.pivot_tweet_text(src_party);
                    (format!("inf_{}_{slot}", src_party + 1), body)
                };
                (format!("RT @{source}: {body}"), Some(source))
            } else if g.r.random_bool(share) {
                if g.r.random_bool(config.negative_fraction) {
                    (g.user_negative(party), None)
                } else {
                    (g.user_political(party), None)
                }
            } else {
                (g.user_neutral(), None)
            };
            tweets.push(Tweet {
                tweet_id: format!("{user}-{j:03}"),
                user_id: user.clone(),
                text,
                created_at: g.random_time(from, end),
                is_retweet: rt_of.is_some(),
                retweet_of_user: rt_of,
            });
        }

        let n_likes = 1 + like_count.sample(&mut g.r) as usize;
        let mut liked = BTreeSet::new();
        for _ in 0..n_likes {
            let target = if g.r.random_bool(config.like_rate) {
                party
            } else {
                let others: Vec<usize> = (0..catalog.len()).filter(|&q| q != party).collect();
                *others.choose(&mut g.r).unwrap()
            };
            liked.insert(pivot_ids[target].choose(&mut g.r).unwrap().clone());
        }
        likes.extend(liked.into_iter().map(|t| (user.clone(), t)));
        planted.insert(user.clone(), catalog.parties()[party].label.clone());
        political_share.insert(user, share);
    }

    let (corpus, _) = build_corpus(catalog, tweets, likes)?;
    Ok(SynthOutput {
        corpus,
        planted,
        political_share,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_users: 60,
            tweets_per_user: [25, 40],
            pivot_tweets: 50,
            ..Default::default()
        }
    }

    #[test]
    fn generates_valid_corpus_with_planted_labels() {
        let out = generate_synthetic_corpus(&small(), 1).unwrap();
        assert_eq!(out.corpus.n_users(), 60);
        assert_eq!(out.planted.len(), 60);
        assert_eq!(out.corpus.pivot_timelines.len(), 8);
        for t in out.corpus.timelines.values() {
            assert!((25..=40).contains(&t.len()));
        }
        for user in out.corpus.user_ids() {
            assert!(out.corpus.likes.likes_of(user).next().is_some());
        }
    }

    #[test]
    fn full_separation_uses_only_party_vocabulary() {
        let cfg = SynthConfig {
            separation: 1.0,
            ..small()
        };
        let out = generate_synthetic_corpus(&cfg, 4).unwrap();
        // Pivot tweets of different parties share no word outside the pole
        // vocabulary of their pole.
        let words = |label: &str| -> BTreeSet<String> {
            out.corpus.pivot_timelines[label]
                .texts()
                .flat_map(|t| t.split_whitespace())
                .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
                .collect()
        };
        let prc = words("PRC");
        let cpi = words("CPI");
        assert!(prc.is_disjoint(&cpi), "left and right parties overlap");
    }

    #[test]
    fn zero_separation_makes_parties_indistinguishable() {
        let cfg = SynthConfig {
            separation: 0.0,
            ..small()
        };
        let out = generate_synthetic_corpus(&cfg, 4).unwrap();
        let words = |label: &str| -> BTreeSet<String> {
            out.corpus.pivot_timelines[label]
                .texts()
                .flat_map(|t| t.split_whitespace())
                .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
                .collect()
        };
        let a = words("PRC");
        let b = words("CPI");
        let overlap = a.intersection(&b).count() as f64 / a.len().min(b.len()) as f64;
        assert!(overlap > 0.5, "overlap {overlap}");
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = generate_synthetic_corpus(&small(), 9).unwrap();
        let b = generate_synthetic_corpus(&small(), 9).unwrap();
        super::super::save_corpus(&a.corpus, &dir.path().join("a")).unwrap();
        super::super::save_corpus(&b.corpus, &dir.path().join("b")).unwrap();
        for f in ["tweets.jsonl", "likes.jsonl", "catalog.json"] {
            let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
            let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
            assert!(x == y, "{f} differs");
        }
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let bad = [
            SynthConfig {
                pivot_tweets: 0,
                ..small()
            },
            SynthConfig {
                tweets_per_user: [10, 40],
                ..small()
            },
            SynthConfig {
                separation: 1.5,
                ..small()
            },
            SynthConfig {
                n_parties: 1,
                ..small()
            },
        ];
        for cfg in bad {
            assert!(matches!(
                generate_synthetic_corpus(&cfg, 0),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn retweets_name_their_source() {
        let cfg = SynthConfig {
            retweet_rate: 0.5,
            ..small()
        };
        let out = generate_synthetic_corpus(&cfg, 2).unwrap();
        let mut n = 0;
        for t in out.corpus.timelines.values().flat_map(|t| &t.tweets) {
            if t.is_retweet {
                n += 1;
                let src = t.retweet_of_user.as_ref().unwrap();
                assert!(t.text.starts_with(&format!("RT @{src}:")));
            }
        }
        assert!(n > 0);
    }

    #[test]
    fn custom_party_count_builds_generic_catalog() {
        let cfg = SynthConfig {
            n_parties: 4,
            ..small()
        };
        let out = generate_synthetic_corpus(&cfg, 2).unwrap();
        assert_eq!(out.corpus.catalog.len(), 4);
        assert_eq!(out.corpus.catalog.poles().len(), 3);
    }
}
