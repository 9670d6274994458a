//! Distant-supervised party tweet classifier.
//!
//! Tweets from party accounts are labeled with the party, a character-level
//! network is trained on them, and every tweet is then scored with a
//! probability per party.

mod config;
mod dataset;
mod encoder;
mod model;
pub mod network;
mod train;

pub use config::ClassifierConfig;
pub use dataset::{build_pivot_training_set, LabeledTweet, LabeledTweetSet, Provenance, PIVOT_CAP};
pub use encoder::{fit_encoder, CharEncoder, MAX_LEN};
pub use model::{Classifier, ScoreVector, FORMAT_TAG};
pub use train::{retrain_enriched, train, EpochRecord, TrainingLog};

use crate::corpus::Tweet;

/// Party scores of one tweet.
pub fn classify(classifier: &Classifier, tweet: &Tweet) -> ScoreVector {
    classifier.classify_text(&tweet.text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn tweet(id: usize, text: &str) -> Tweet {
        Tweet {
            tweet_id: format!("t{id}"),
            user_id: "u".into(),
            text: text.into(),
            created_at: Utc.timestamp_opt(1_500_000_000 + id as i64, 0).unwrap(),
            is_retweet: false,
            retweet_of_user: None,
        }
    }

    /// Two parties writing with disjoint alphabets.
    fn two_party_set(n: usize, seed: u64) -> LabeledTweetSet {
        use rand::Rng;
        let mut r = crate::rng::seeded(seed);
        let mut set = LabeledTweetSet::default();
        let alphabets = [("A", "abcdefg"), ("B", "tuvwxyz")];
        for i in 0..n {
            let (label, letters) = alphabets[i % 2];
            let letters: Vec<char> = letters.chars().collect();
            let len = r.random_range(8..30);
            let text: String = (0..len)
                .map(|k| {
                    if k % 5 == 4 {
                        ' '
                    } else {
                        letters[r.random_range(0..letters.len())]
                    }
                })
                .collect();
            set.push(tweet(i, &text), label, Provenance::Pivot);
        }
        set
    }

    fn small_config() -> ClassifierConfig {
        ClassifierConfig {
            embedding_dim: 8,
            conv_filters: 8,
            conv_width: 3,
            model_dim: 8,
            ffn_dim: 16,
            transformer_layers: 1,
            attention_heads: 2,
            dense_dim: 8,
            epochs: 6,
            batch_size: 16,
            learning_rate: 3e-3,
            seed: 5,
            ..Default::default()
        }
    }

    fn labels() -> Vec<String> {
        vec!["A".into(), "B".into()]
    }

    #[test]
    fn disjoint_vocabularies_are_learned() {
        let set = two_party_set(200, 1);
        let val = two_party_set(60, 2);
        let enc = fit_encoder(set.texts(), 1);
        let (clf, log) = train(&set, &enc, &small_config(), &val, &labels()).unwrap();
        assert!(log.best_accuracy() >= 0.95, "{log:?}");
        let first = log.epochs.first().unwrap().train_loss;
        let last = log.epochs.last().unwrap().train_loss;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
        let s = classify(&clf, &tweet(0, "abc defg"));
        assert_eq!(s.scores.len(), 2);
        assert!((s.scores.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert_eq!(clf.predict_label("abc defg"), "A");
    }

    #[test]
    fn same_seed_same_trace() {
        let set = two_party_set(60, 1);
        let val = two_party_set(20, 2);
        let enc = fit_encoder(set.texts(), 1);
        let mut cfg = small_config();
        cfg.epochs = 2;
        let (a, la) = train(&set, &enc, &cfg, &val, &labels()).unwrap();
        let (b, lb) = train(&set, &enc, &cfg, &val, &labels()).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_rejected() {
        let mut set = two_party_set(20, 1);
        set.items.retain(|i| i.label == "A");
        let enc = fit_encoder(set.texts(), 1);
        let err = train(&set, &enc, &small_config(), &set, &labels()).unwrap_err();
        assert!(matches!(err, crate::Error::Training(_)));
    }

    #[test]
    fn empty_and_unknown_text_still_scores() {
        let set = two_party_set(20, 1);
        let enc = fit_encoder(set.texts(), 1);
        let mut cfg = small_config();
        cfg.epochs = 1;
        let (clf, _) = train(&set, &enc, &cfg, &set, &labels()).unwrap();
        for text in ["", "ЖЖЖ", &"q".repeat(500)] {
            let s = clf.classify_text(text);
            assert!((s.scores.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(s.scores.iter().all(|x| *x > 0.0 && *x < 1.0));
        }
    }

    #[test]
    fn artifact_round_trip() {
        let set = two_party_set(20, 1);
        let enc = fit_encoder(set.texts(), 1);
        let mut cfg = small_config();
        cfg.epochs = 1;
        let (clf, _) = train(&set, &enc, &cfg, &set, &labels()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        clf.save(dir.path()).unwrap();
        let back = Classifier::load(dir.path()).unwrap();
        assert_eq!(back, clf);
        std::fs::write(dir.path().join("weights.bin"), b"LNWT").unwrap();
        assert!(Classifier::load(dir.path()).is_err());
    }

    #[test]
    fn permuted_labels_permute_scores() {
        let set = two_party_set(80, 3);
        let val = two_party_set(20, 4);
        let enc = fit_encoder(set.texts(), 1);
        let mut cfg = small_config();
        cfg.epochs = 2;
        let (a, _) = train(&set, &enc, &cfg, &val, &labels()).unwrap();
        let swapped = vec!["B".to_string(), "A".to_string()];
        let (b, _) = train(&set, &enc, &cfg, &val, &swapped).unwrap();
        for item in &val.items {
            assert_eq!(
                a.predict_label(&item.tweet.text),
                b.predict_label(&item.tweet.text)
            );
        }
    }

    #[test]
    fn empty_enrichment_matches_base_training() {
        let set = two_party_set(40, 1);
        let enc = fit_encoder(set.texts(), 1);
        let mut cfg = small_config();
        cfg.epochs = 1;
        let empty = LabeledTweetSet::default();
        let (a, _) = train(&set, &enc, &cfg, &set, &labels()).unwrap();
        let (b, _) = retrain_enriched(&set, &empty, &enc, &cfg, &set, &labels()).unwrap();
        assert_eq!(a, b);
        assert_eq!(set.union(&set).len(), 80);
    }
}
