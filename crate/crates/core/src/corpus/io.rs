use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{Corpus, PartyCatalog, Timeline, Tweet, MAX_TWEETS, MIN_TWEETS};
use crate::error::{Error, Result};
use crate::groundtruth::LikeGraph;
use crate::io::write_atomic;

#[derive(Debug, Serialize, Deserialize)]
struct LikeRecord {
    user_id: String,
    pivot_tweet_id: String,
}

/// What ingestion dropped or trimmed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub n_tweets_read: usize,
    pub n_invalid_tweets: usize,
    pub n_users_kept: usize,
    /// Users below the minimum tweet count, with their valid tweet count.
    pub dropped_users: Vec<(String, usize)>,
    pub n_truncated_users: usize,
    pub n_likes: usize,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Reads a tweets JSON-lines file. Malformed records are errors; records
/// violating tweet invariants are returned as well and filtered later.
pub fn load_tweets(path: &Path) -> Result<Vec<Tweet>> {
    read_jsonl(path)
}

pub fn load_corpus(tweets_path: &Path, likes_path: &Path, catalog_path: &Path) -> Result<Corpus> {
    load_corpus_with_report(tweets_path, likes_path, catalog_path).map(|(c, _)| c)
}

pub fn load_corpus_with_report(
    tweets_path: &Path,
    likes_path: &Path,
    catalog_path: &Path,
) -> Result<(Corpus, IngestReport)> {
    let catalog = PartyCatalog::load(catalog_path)?;
    let tweets = load_tweets(tweets_path)?;
    let likes: Vec<LikeRecord> = read_jsonl(likes_path)?;
    build_corpus(catalog, tweets, likes.into_iter().map(|l| (l.user_id, l.pivot_tweet_id)))
}

pub(crate) fn build_corpus(
    catalog: PartyCatalog,
    tweets: Vec<Tweet>,
    likes: impl IntoIterator<Item = (String, String)>,
) -> Result<(Corpus, IngestReport)> {
    let mut report = IngestReport {
        n_tweets_read: tweets.len(),
        ..Default::default()
    };
    let mut by_user: BTreeMap<String, Vec<Tweet>> = BTreeMap::new();
    for tweet in tweets {
        if let Err(reason) = tweet.check() {
            warn!("dropping tweet {}: {reason}", tweet.tweet_id);
            report.n_invalid_tweets += 1;
            continue;
        }
        by_user.entry(tweet.user_id.clone()).or_default().push(tweet);
    }

    let mut timelines = BTreeMap::new();
    let mut pivot_timelines = BTreeMap::new();
    for (user, tweets) in by_user {
        if let Some(party) = catalog.party_of_pivot(&user) {
            pivot_timelines.insert(party.label.clone(), Timeline::new(user, tweets));
            continue;
        }
        if tweets.len() < MIN_TWEETS {
            report.dropped_users.push((user, tweets.len()));
            continue;
        }
        let mut timeline = Timeline::new(user.clone(), tweets);
        if timeline.len() > MAX_TWEETS {
            timeline.truncate_recent(MAX_TWEETS);
            report.n_truncated_users += 1;
        }
        timelines.insert(user, timeline);
    }
    if !report.dropped_users.is_empty() {
        warn!(
            "dropped {} users with fewer than {MIN_TWEETS} valid tweets",
            report.dropped_users.len()
        );
    }
    report.n_users_kept = timelines.len();

    let mut tweet_party = BTreeMap::new();
    for (party, timeline) in &pivot_timelines {
        for t in &timeline.tweets {
            tweet_party.insert(t.tweet_id.clone(), party.clone());
        }
    }
    let mut graph = LikeGraph::new(tweet_party);
    let mut unknown = Vec::new();
    for (user, tweet) in likes {
        if graph.tweet_party().contains_key(&tweet) {
            graph.add_like(user, tweet);
        } else {
            unknown.push(format!("{user}->{tweet}"));
        }
    }
    if !unknown.is_empty() {
        return Err(Error::Validation(format!(
            "{} likes reference unknown pivot tweets: {}",
            unknown.len(),
            unknown.join(", ")
        )));
    }
    report.n_likes = graph.n_edges();

    let corpus = Corpus {
        timelines,
        pivot_timelines,
        likes: graph,
        catalog,
    };
    corpus.validate()?;
    Ok((corpus, report))
}

/// Writes a corpus in the ingestion file layout (`tweets.jsonl`,
/// `likes.jsonl`, `catalog.json`) under `dir`.
pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tweets = Vec::new();
    let pivots = corpus.pivot_timelines.values();
    for timeline in pivots.chain(corpus.timelines.values()) {
        for t in &timeline.tweets {
            serde_json::to_writer(&mut tweets, t)?;
            tweets.push(b'\n');
        }
    }
    write_atomic(&dir.join("tweets.jsonl"), &tweets)?;

    let mut likes = Vec::new();
    for (user, tweet) in corpus.likes.edges() {
        let record = LikeRecord {
            user_id: user.to_string(),
            pivot_tweet_id: tweet.to_string(),
        };
        serde_json::to_writer(&mut likes, &record)?;
        likes.push(b'\n');
    }
    write_atomic(&dir.join("likes.jsonl"), &likes)?;

    let mut catalog = serde_json::to_vec_pretty(&corpus.catalog)?;
    catalog.write_all(b"\n").expect("vec write");
    write_atomic(&dir.join("catalog.json"), &catalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone, Utc};

    fn tweet(user: &str, i: usize) -> Tweet {
        Tweet {
            tweet_id: format!("{user}-{i}"),
            user_id: user.into(),
            text: format!("hello {i}"),
            created_at: Utc.with_ymd_and_hms(2019, 8, 1, 0, 0, 0).unwrap() + Duration::hours(i as i64),
            is_retweet: false,
            retweet_of_user: None,
        }
    }

    fn pivot_tweets() -> Vec<Tweet> {
        let c = PartyCatalog::italian();
        c.parties()
            .iter()
            .flat_map(|p| (0..3).map(move |i| tweet(&p.pivot_user_id, i)))
            .collect()
    }

    #[test]
    fn short_timelines_are_dropped_and_long_ones_truncated() {
        let mut tweets = pivot_tweets();
        tweets.extend((0..24).map(|i| tweet("short", i)));
        tweets.extend((0..300).map(|i| tweet("long", i)));
        let (corpus, report) =
            build_corpus(PartyCatalog::italian(), tweets, Vec::<(String, String)>::new()).unwrap();
        assert!(!corpus.timelines.contains_key("short"));
        let long = &corpus.timelines["long"];
        assert_eq!(long.len(), 200);
        // most recent first: tweet 299 is the newest
        assert_eq!(long.tweets[0].tweet_id, "long-299");
        assert_eq!(long.tweets[199].tweet_id, "long-100");
        assert_eq!(report.dropped_users, vec![("short".to_string(), 24)]);
        assert_eq!(corpus.likes.n_edges(), 0);
    }

    #[test]
    fn invalid_tweets_do_not_count_toward_minimum() {
        let mut tweets = pivot_tweets();
        tweets.extend((0..25).map(|i| tweet("u", i)));
        tweets[30].text = "   ".into();
        let (corpus, report) =
            build_corpus(PartyCatalog::italian(), tweets, Vec::<(String, String)>::new()).unwrap();
        assert!(corpus.timelines.is_empty());
        assert_eq!(report.n_invalid_tweets, 1);
    }

    #[test]
    fn unknown_pivot_tweet_in_likes_is_reported() {
        let mut tweets = pivot_tweets();
        tweets.extend((0..25).map(|i| tweet("u", i)));
        let likes = vec![
            ("u".to_string(), "pdnetwork-0".to_string()),
            ("u".to_string(), "nope-1".to_string()),
        ];
        let err = build_corpus(PartyCatalog::italian(), tweets, likes).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("nope-1"), "{msg}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let good = serde_json::to_string(&tweet("a", 0)).unwrap();
        std::fs::write(&path, format!("{good}\n{{not json}}\n")).unwrap();
        match load_tweets(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
