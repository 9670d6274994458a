//! Skip-gram with negative sampling, trained from scratch on the corpus.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Timeline};
use crate::error::{Error, Result};
use crate::io::{write_atomic, write_json_atomic};
use crate::rng::seeded;

pub const EMBEDDING_FORMAT: &str = "leaning-word2vec/1";
pub const MAX_VOCABULARY: usize = 50_000;
const TABLE_SIZE: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    /// Frequent-token subsampling threshold; 0 disables it.
    pub sample: f64,
    pub max_vocabulary: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 100,
            window: 5,
            epochs: 5,
            negatives: 5,
            learning_rate: 0.025,
            sample: 1e-3,
            max_vocabulary: MAX_VOCABULARY,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.epochs == 0 {
            return Err(Error::Config("embedding dim, window and epochs must be positive".into()));
        }
        if self.max_vocabulary == 0 || self.max_vocabulary > MAX_VOCABULARY {
            return Err(Error::Config(format!(
                "max_vocabulary must be in 1..={MAX_VOCABULARY}"
            )));
        }
        if !(self.learning_rate > 0.0) || self.sample < 0.0 {
            return Err(Error::Config("invalid embedding learning_rate or sample".into()));
        }
        Ok(())
    }
}

/// Lowercased word tokens with surrounding punctuation removed. Links are
/// dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter(|w| !w.starts_with("http"))
        .map(|w| {
            w.trim_matches(|c: char| !(c.is_alphanumeric() || c == '#' || c == '@' || c == '_'))
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// One stopword per line; blank lines ignored.
pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    /// Tokens by decreasing frequency; the position is the row in `vectors`.
    pub tokens: Vec<String>,
    pub index: HashMap<String, usize>,
    pub vectors: Array2<f32>,
    pub stopwords: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    dim: usize,
    n_tokens: usize,
}

impl EmbeddingModel {
    fn from_parts(tokens: Vec<String>, vectors: Array2<f32>, stopwords: BTreeSet<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        EmbeddingModel {
            tokens,
            index,
            vectors,
            stopwords,
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vector(&self, token: &str) -> Option<ndarray::ArrayView1<'_, f32>> {
        self.index.get(token).map(|&i| self.vectors.row(i))
    }

    /// Mean of the in-vocabulary token vectors; zero when there are none.
    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut sum = vec![0.0f64; self.dim()];
        let mut n = 0usize;
        for t in tokenize(text) {
            if let Some(v) = self.vector(&t) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += *x as f64;
                }
                n += 1;
            }
        }
        if n > 0 {
            sum.iter_mut().for_each(|s| *s /= n as f64);
        }
        sum
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json_atomic(
            &dir.join("manifest.json"),
            &Manifest {
                format: EMBEDDING_FORMAT.into(),
                dim: self.dim(),
                n_tokens: self.tokens.len(),
            },
        )?;
        write_json_atomic(&dir.join("vocab.json"), &self.tokens)?;
        write_json_atomic(&dir.join("stopwords.json"), &self.stopwords)?;
        let mut bytes = Vec::with_capacity(self.vectors.len() * 4);
        for x in self.vectors.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        write_atomic(&dir.join("vectors.bin"), &bytes)
    }

    pub fn load(dir: &Path) -> Result<EmbeddingModel> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read(&p).map_err(|e| Error::io(&p, e))
        };
        let manifest: Manifest = serde_json::from_slice(&read("manifest.json")?)?;
        if manifest.format != EMBEDDING_FORMAT {
            return Err(Error::Validation(format!(
                "unsupported embedding format {:?}",
                manifest.format
            )));
        }
        let tokens: Vec<String> = serde_json::from_slice(&read("vocab.json")?)?;
        let stopwords: BTreeSet<String> = serde_json::from_slice(&read("stopwords.json")?)?;
        let bytes = read("vectors.bin")?;
        if tokens.len() != manifest.n_tokens || bytes.len() != tokens.len() * manifest.dim * 4 {
            return Err(Error::Validation("embedding files are inconsistent".into()));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let vectors = Array2::from_shape_vec((tokens.len(), manifest.dim), values)
            .map_err(|e| Error::Validation(e.to_string()))?;
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("non-finite embedding values".into()));
        }
        Ok(EmbeddingModel::from_parts(tokens, vectors, stopwords))
    }
}

fn sentences<'a>(texts: impl Iterator<Item = &'a str>, stopwords: &BTreeSet<String>) -> Vec<Vec<String>> {
    texts
        .map(|t| tokenize(t).into_iter().filter(|w| !stopwords.contains(w)).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x.clamp(-30.0, 30.0)).exp())
}

/// Trains embeddings on the given texts.
pub fn train_embeddings_on<'a>(
    texts: impl Iterator<Item = &'a str>,
    config: &EmbeddingConfig,
    stopwords: &BTreeSet<String>,
    seed: u64,
) -> Result<EmbeddingModel> {
    config.validate()?;
    let sentences = sentences(texts, stopwords);
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for s in &sentences {
        for w in s {
            *counts.entry(w).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::invalid("no tokens left after stopword filtering"));
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.truncate(config.max_vocabulary);
    let tokens: Vec<String> = ranked.iter().map(|(t, _)| t.to_string()).collect();
    let freq: Vec<u64> = ranked.iter().map(|(_, c)| *c).collect();
    let index: HashMap<&str, usize> = ranked.iter().enumerate().map(|(i, (t, _))| (*t, i)).collect();
    let corpus: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|w| index.get(w.as_str()).copied()).collect())
        .collect();
    let total: u64 = freq.iter().sum();

    // unigram^0.75 table for negative draws
    let powered: Vec<f64> = freq.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let norm: f64 = powered.iter().sum();
    let mut table = Vec::with_capacity(TABLE_SIZE);
    let mut acc = 0.0;
    for (i, p) in powered.iter().enumerate() {
        acc += p / norm;
        while table.len() < TABLE_SIZE && (table.len() as f64) < acc * TABLE_SIZE as f64 {
            table.push(i);
        }
    }
    table.resize(TABLE_SIZE, freq.len() - 1);

    let keep_prob: Vec<f64> = freq
        .iter()
        .map(|&c| {
            if config.sample <= 0.0 {
                1.0
            } else {
                let f = c as f64 / (config.sample * total as f64);
                ((f.sqrt() + 1.0) / f).min(1.0)
            }
        })
        .collect();

    let (v, d) = (tokens.len(), config.dim);
    let mut r = seeded(seed);
    let mut input = Array2::<f32>::from_shape_fn((v, d), |_| (r.random::<f32>() - 0.5) / d as f32);
    let mut output = Array2::<f32>::zeros((v, d));
    let words_per_epoch: usize = corpus.iter().map(Vec::len).sum();
    let total_steps = (words_per_epoch * config.epochs).max(1) as f64;
    let lr0 = config.learning_rate;
    let mut step = 0usize;
    let mut grad = vec![0.0f32; d];
    for _ in 0..config.epochs {
        for sentence in &corpus {
            let kept: Vec<usize> = sentence
                .iter()
                .copied()
                .filter(|&w| keep_prob[w] >= 1.0 || r.random::<f64>() < keep_prob[w])
                .collect();
            step += sentence.len();
            let lr = (lr0 * (1.0 - step as f64 / total_steps)).max(lr0 * 1e-4) as f32;
            for (pos, &center) in kept.iter().enumerate() {
                let reach = r.random_range(1..=config.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(kept.len() - 1);
                for (cpos, &context) in kept.iter().enumerate().take(hi + 1).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for n in 0..=config.negatives {
                        let (target, label) = if n == 0 {
                            (center, 1.0)
                        } else {
                            let t = table[r.random_range(0..TABLE_SIZE)];
                            if t == center {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let x = input.row(context);
                        let mut o = output.row_mut(target);
                        let dot: f32 = x.iter().zip(o.iter()).map(|(a, b)| a * b).sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for ((gi, oi), xi) in grad.iter_mut().zip(o.iter_mut()).zip(x.iter()) {
                            *gi += g * *oi;
                            *oi += g * xi;
                        }
                    }
                    for (xi, gi) in input.row_mut(context).iter_mut().zip(&grad) {
                        *xi += gi;
                    }
                }
            }
        }
    }
    if input.iter().any(|x| !x.is_finite()) {
        return Err(Error::Training("word2vec produced non-finite vectors".into()));
    }
    Ok(EmbeddingModel::from_parts(tokens, input, stopwords.clone()))
}

/// Trains on every ordinary and pivot timeline of the corpus.
pub fn train_embeddings(
    corpus: &Corpus,
    config: &EmbeddingConfig,
    stopwords: &BTreeSet<String>,
    seed: u64,
) -> Result<EmbeddingModel> {
    let texts = corpus
        .timelines
        .values()
        .chain(corpus.pivot_timelines.values())
        .flat_map(|t| t.texts());
    train_embeddings_on(texts, config, stopwords, seed)
}

/// Mean over tweets of the mean in-vocabulary token vector.
pub fn embed_user(model: &EmbeddingModel, timeline: &Timeline) -> Vec<f64> {
    let mut sum = vec![0.0; model.dim()];
    for text in timeline.texts() {
        for (s, x) in sum.iter_mut().zip(model.embed_text(text)) {
            *s += x;
        }
    }
    if !timeline.is_empty() {
        sum.iter_mut().for_each(|s| *s /= timeline.len() as f64);
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn model(tokens: &[&str], vectors: Array2<f32>) -> EmbeddingModel {
        EmbeddingModel::from_parts(
            tokens.iter().map(|s| s.to_string()).collect(),
            vectors,
            BTreeSet::new(),
        )
    }

    #[test]
    fn tokenizer_strips_punctuation() {
        assert_eq!(tokenize("Ciao, MONDO! #voto http://x.y"), vec!["ciao", "mondo", "#voto"]);
    }

    #[test]
    fn stopwords_and_cap() {
        let texts = ["a b b c c c", "c d"];
        let stop: BTreeSet<String> = ["d".to_string()].into();
        let cfg = EmbeddingConfig {
            dim: 4,
            max_vocabulary: 2,
            epochs: 1,
            ..Default::default()
        };
        let m = train_embeddings_on(texts.iter().copied(), &cfg, &stop, 0).unwrap();
        assert_eq!(m.tokens, vec!["c", "b"]);
        let all_stop: BTreeSet<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        assert!(train_embeddings_on(texts.iter().copied(), &cfg, &all_stop, 0).is_err());
    }

    #[test]
    fn two_level_mean() {
        let m = model(&["a", "b"], array![[1.0, 0.0], [0.0, 2.0]]);
        let t = |text: &str| crate::corpus::Tweet {
            tweet_id: text.into(),
            user_id: "u".into(),
            text: text.into(),
            created_at: chrono::DateTime::from_timestamp(0, 0).unwrap(),
            is_retweet: false,
            retweet_of_user: None,
        };
        let single = Timeline::new("u", vec![t("a")]);
        assert_eq!(embed_user(&m, &single), vec![1.0, 0.0]);
        let tl = Timeline::new("u", vec![t("a b"), t("b zz"), t("zz")]);
        // tweet means: (0.5, 1), (0, 2), (0, 0)
        assert_eq!(embed_user(&m, &tl), vec![0.5 / 3.0, 1.0]);
    }

    #[test]
    fn save_load_round_trip() {
        let m = model(&["x", "y"], array![[1.5, -2.0], [0.25, 3.0]]);
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        assert_eq!(EmbeddingModel::load(dir.path()).unwrap(), m);
    }
}
