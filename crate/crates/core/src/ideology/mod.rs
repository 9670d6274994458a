//! User vectors built from tweet scores, unsupervised training-set
//! enrichment and the 2-D ideology space.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, LabeledTweetSet, Provenance, ScoreVector};
use crate::corpus::{Corpus, PartyCatalog, Timeline};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvBuffer};
use crate::projection::{Projection, ProjectionMethod, UmapParams};

/// Per-tweet scores of every timeline, keyed by user id.
pub type TimelineScores = BTreeMap<String, Vec<ScoreVector>>;

/// The k best scores of one party over a timeline, descending.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyTopK {
    pub party_label: String,
    pub scores: Vec<f64>,
}

/// Concatenated per-party top-k blocks in catalog order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserVector {
    pub user_id: String,
    pub components: Vec<f64>,
}

impl UserVector {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Per-party top-k of a timeline's scores.
pub fn party_top_k(scores: &[ScoreVector], labels: &[String], k: usize) -> Result<Vec<PartyTopK>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if scores.len() < k {
        return Err(Error::invalid(format!(
            "timeline has {} tweets, fewer than k = {k}",
            scores.len()
        )));
    }
    labels
        .iter()
        .enumerate()
        .map(|(p, label)| {
            let mut col: Vec<f64> = scores.iter().map(|s| s.scores[p]).collect();
            col.sort_by(|a, b| b.total_cmp(a));
            col.truncate(k);
            Ok(PartyTopK {
                party_label: label.clone(),
                scores: col,
            })
        })
        .collect()
}

/// User vector from precomputed tweet scores.
pub fn vector_from_scores(
    user_id: &str,
    scores: &[ScoreVector],
    labels: &[String],
    k: usize,
) -> Result<UserVector> {
    let blocks = party_top_k(scores, labels, k)?;
    Ok(UserVector {
        user_id: user_id.to_string(),
        components: blocks.into_iter().flat_map(|b| b.scores).collect(),
    })
}

pub fn user_vector(classifier: &Classifier, timeline: &Timeline, k: usize) -> Result<UserVector> {
    let scores = classifier.score_timeline(timeline);
    vector_from_scores(&timeline.user_id, &scores, classifier.labels(), k)
}

/// Scores every tweet of the given users.
pub fn score_users<'a>(
    classifier: &Classifier,
    corpus: &Corpus,
    users: impl IntoIterator<Item = &'a str>,
) -> Result<TimelineScores> {
    users
        .into_iter()
        .map(|u| {
            let t = corpus
                .timelines
                .get(u)
                .ok_or_else(|| Error::invalid(format!("unknown user {u}")))?;
            Ok((u.to_string(), classifier.score_timeline(t)))
        })
        .collect()
}

/// Pivot vectors keyed by party label.
pub fn pivot_vectors(
    classifier: &Classifier,
    corpus: &Corpus,
    k: usize,
) -> Result<BTreeMap<String, UserVector>> {
    corpus
        .catalog
        .parties()
        .iter()
        .map(|p| {
            let t = corpus.pivot_timelines.get(&p.label).ok_or_else(|| {
                Error::invalid(format!("no pivot timeline for party {}", p.label))
            })?;
            Ok((p.label.clone(), user_vector(classifier, t, k)?))
        })
        .collect()
}

/// Cosine similarity. A zero-norm operand gives 0.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine of vectors with different lengths");
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        log::warn!("cosine similarity with a zero vector, using 0");
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Users strictly above each party's similarity percentile, labeled with
/// that party. A user above several cutoffs takes the party of maximum
/// similarity (ties: earlier catalog party).
pub fn select_enrichment_users(
    user_vectors: &[UserVector],
    pivot_vectors: &BTreeMap<String, UserVector>,
    catalog: &PartyCatalog,
    percentile_q: f64,
) -> Result<BTreeMap<String, String>> {
    if !(percentile_q > 0.0 && percentile_q < 100.0) {
        return Err(Error::Config(format!(
            "percentile must be in (0, 100), got {percentile_q}"
        )));
    }
    let mut best: BTreeMap<&str, (f64, &str)> = BTreeMap::new();
    for party in catalog.parties() {
        let pivot = pivot_vectors
            .get(&party.label)
            .ok_or_else(|| Error::invalid(format!("missing pivot vector for {}", party.label)))?;
        let sims: Vec<f64> = user_vectors
            .iter()
            .map(|u| cosine_similarity(&u.components, &pivot.components))
            .collect();
        let cutoff = percentile(&sims, percentile_q);
        let mut n = 0;
        for (u, &s) in user_vectors.iter().zip(&sims) {
            if s > cutoff {
                n += 1;
                let e = best.entry(u.user_id.as_str()).or_insert((f64::NEG_INFINITY, ""));
                if s > e.0 {
                    *e = (s, party.label.as_str());
                }
            }
        }
        if n == 0 {
            log::warn!("no user above the similarity cutoff of party {}", party.label);
        }
    }
    Ok(best
        .into_iter()
        .map(|(u, (_, p))| (u.to_string(), p.to_string()))
        .collect())
}

/// Tweets of the selected users whose maximum party score reaches `th`,
/// labeled with the author's assigned party.
pub fn select_enrichment_tweets_scored(
    scores: &TimelineScores,
    selected: &BTreeMap<String, String>,
    corpus: &Corpus,
    th: f64,
) -> Result<LabeledTweetSet> {
    let mut set = LabeledTweetSet::default();
    for (user, label) in selected {
        let timeline = corpus
            .timelines
            .get(user)
            .ok_or_else(|| Error::invalid(format!("unknown user {user}")))?;
        let s = scores
            .get(user)
            .ok_or_else(|| Error::invalid(format!("no scores for user {user}")))?;
        for (tweet, sv) in timeline.tweets.iter().zip(s) {
            if sv.max() >= th {
                set.push(tweet.clone(), label.clone(), Provenance::Enrichment);
            }
        }
    }
    Ok(set)
}

pub fn select_enrichment_tweets(
    classifier: &Classifier,
    selected: &BTreeMap<String, String>,
    corpus: &Corpus,
    th: f64,
) -> Result<LabeledTweetSet> {
    let scores = score_users(classifier, corpus, selected.keys().map(String::as_str))?;
    select_enrichment_tweets_scored(&scores, selected, corpus, th)
}

/// Selected users and their tweets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnrichmentSelection {
    pub selected_users: BTreeMap<String, String>,
    pub selected_tweets: LabeledTweetSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdeologyPoint {
    pub user_id: String,
    pub x: f64,
    pub y: f64,
}

pub fn to_matrix(vectors: &[&UserVector]) -> Result<Array2<f64>> {
    let d = vectors.first().map_or(0, |v| v.len());
    if vectors.iter().any(|v| v.len() != d) {
        return Err(Error::invalid("user vectors have different lengths"));
    }
    Ok(Array2::from_shape_fn((vectors.len(), d), |(i, j)| {
        vectors[i].components[j]
    }))
}

/// 2-D coordinates: the projection is fitted on `fit` (training users and
/// pivots) and `extra` users are placed through the fitted model.
pub fn project_ideology(
    fit: &[&UserVector],
    extra: &[&UserVector],
    method: ProjectionMethod,
    params: &UmapParams,
    seed: u64,
) -> Result<Vec<IdeologyPoint>> {
    let x = to_matrix(fit)?;
    let (model, emb) = Projection::fit(x.view(), 2, method, params, seed)?;
    let mut out: Vec<IdeologyPoint> = fit
        .iter()
        .zip(emb.rows())
        .map(|(v, r)| IdeologyPoint {
            user_id: v.user_id.clone(),
            x: r[0],
            y: r[1],
        })
        .collect();
    if !extra.is_empty() {
        let placed = model.transform(to_matrix(extra)?.view())?;
        out.extend(extra.iter().zip(placed.rows()).map(|(v, r)| IdeologyPoint {
            user_id: v.user_id.clone(),
            x: r[0],
            y: r[1],
        }));
    }
    Ok(out)
}

pub fn write_user_vectors(path: &Path, vectors: &[&UserVector], provenance: Option<&str>) -> Result<()> {
    let d = vectors.first().map_or(0, |v| v.len());
    let mut header = vec!["user_id".to_string()];
    header.extend((0..d).map(|i| format!("c{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = CsvBuffer::new(provenance, &header)?;
    for v in vectors {
        let mut row = vec![v.user_id.clone()];
        row.extend(v.components.iter().map(|x| fmt_f64(*x)));
        csv.row(row)?;
    }
    csv.write_to(path)
}

pub fn read_user_vectors(path: &Path) -> Result<Vec<UserVector>> {
    let (_, rows) = crate::io::read_csv(path)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, row)| {
            let mut it = row.into_iter();
            let user_id = it.next().unwrap_or_default();
            let components = it
                .map(|c| {
                    c.parse::<f64>().map_err(|e| Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 2,
                        message: e.to_string(),
                    })
                })
                .collect::<Result<_>>()?;
            Ok(UserVector {
                user_id,
                components,
            })
        })
        .collect()
}

/// Plot data: `user_id,x,y,is_pivot,truth_label`.
pub fn write_ideology_points(
    path: &Path,
    points: &[IdeologyPoint],
    catalog: &PartyCatalog,
    truth: &BTreeMap<String, String>,
    provenance: Option<&str>,
) -> Result<()> {
    let mut csv = CsvBuffer::new(provenance, &["user_id", "x", "y", "is_pivot", "truth_label"])?;
    for p in points {
        let pivot = catalog.party_of_pivot(&p.user_id);
        let truth_label = pivot
            .map(|party| party.label.as_str())
            .or_else(|| truth.get(&p.user_id).map(String::as_str))
            .unwrap_or("");
        csv.row([
            p.user_id.as_str(),
            &fmt_f64(p.x),
            &fmt_f64(p.y),
            if pivot.is_some() { "true" } else { "false" },
            truth_label,
        ])?;
    }
    csv.write_to(path)
}
