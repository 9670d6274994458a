mod common;

use std::collections::{BTreeMap, BTreeSet};

use leaning::baselines::{embed_user, predict_random, retweet_vectors, train_embeddings_on, EmbeddingConfig};
use leaning::corpus::{generate_synthetic_corpus, PartyCatalog, SynthConfig};
use leaning::evaluation::{evaluate, evaluate_both, pole_truth, task_labels};
use leaning::prediction::{nearest_pivot_distances, predict_nearest_pivot_matrix, standardize, Task};
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rows(n: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-10.0f64..10.0, n * d).prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_ignore_prediction_order(seed in any::<u64>(), n in 1usize..50, abstain in 0.0f64..0.5) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (mut preds, truth) = common::random_instance(&mut r, n, abstain);
        let labels = PartyCatalog::italian().labels();
        let a = evaluate(&preds, &truth, &labels, Task::Party).unwrap();
        preds.shuffle(&mut r);
        let b = evaluate(&preds, &truth, &labels, Task::Party).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn pole_confusion_is_party_blocks_summed(seed in any::<u64>(), n in 1usize..50, abstain in 0.0f64..0.5) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (preds, truth) = common::random_instance(&mut r, n, abstain);
        let catalog = PartyCatalog::italian();
        let (party, pole) = evaluate_both(&preds, &truth, &catalog).unwrap();
        let parties = task_labels(&catalog, Task::Party);
        let poles = task_labels(&catalog, Task::Pole);
        let pole_idx = |party: &str| poles.iter().position(|p| p == catalog.pole_of(party).unwrap()).unwrap();
        let mut want = vec![vec![0usize; poles.len() + 1]; poles.len()];
        for (i, a) in parties.iter().enumerate() {
            for (j, b) in parties.iter().enumerate() {
                want[pole_idx(a)][pole_idx(b)] += party.confusion.counts[i][j];
            }
            want[pole_idx(a)][poles.len()] += party.confusion.counts[i][parties.len()];
        }
        prop_assert_eq!(&pole.confusion.counts, &want);
        prop_assert_eq!(pole.n_abstained, party.n_abstained);
        let pt = pole_truth(&truth, &catalog).unwrap();
        prop_assert_eq!(pole, evaluate(&preds, &pt, &poles, Task::Pole).unwrap());
    }

    #[test]
    fn micro_recall_counts_abstentions_as_misses(seed in any::<u64>(), n in 1usize..50) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (preds, truth) = common::random_instance(&mut r, n, 0.3);
        let labels = PartyCatalog::italian().labels();
        let rep = evaluate(&preds, &truth, &labels, Task::Party).unwrap();
        let answered: Vec<_> = preds.iter().filter(|p| p.party.is_some()).cloned().collect();
        let ans = evaluate(&answered, &truth, &labels, Task::Party).unwrap();
        prop_assert_eq!(rep.micro.precision, ans.micro.precision);
        prop_assert!(rep.micro.recall <= ans.micro.recall);
    }

    #[test]
    fn standardize_is_idempotent(x in rows(12, 4)) {
        let once = standardize(x.view());
        let twice = standardize(once.view());
        for (a, b) in once.iter().zip(twice.iter()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn nearest_pivot_matches_brute_force(users in rows(15, 5), pivots in rows(8, 5)) {
        let users = users.mapv(f64::abs);
        let pivots = pivots.mapv(f64::abs);
        let catalog = PartyCatalog::italian();
        let ids: Vec<String> = (0..users.nrows()).map(|i| format!("u{i}")).collect();
        let preds = predict_nearest_pivot_matrix(&ids, users.view(), pivots.view(), &catalog, Task::Party).unwrap();
        let d = nearest_pivot_distances(users.view(), pivots.view());
        let labels = catalog.labels();
        for (i, u) in users.rows().into_iter().enumerate() {
            let cos = |p: ndarray::ArrayView1<f64>| {
                let dot: f64 = u.iter().zip(p.iter()).map(|(a, b)| a * b).sum();
                let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
                let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
                1.0 - dot / (nu * np)
            };
            let dist: Vec<f64> = pivots.rows().into_iter().map(cos).collect();
            let best = dist.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!((d[i] - best).abs() < 1e-12);
            let label = preds[i].party.as_deref().unwrap();
            let j = labels.iter().position(|l| l == label).unwrap();
            prop_assert!(dist[j] - best < 1e-12);
            let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let want = if hi > lo { (d[i] - lo) / (hi - lo) } else { 0.0 };
            prop_assert!((preds[i].normalized_distance - want).abs() < 1e-12);
            prop_assert!((preds[i].confidence - (1.0 - want)).abs() < 1e-12);
        }
    }
}

#[test]
fn random_baseline_frequencies_within_three_sigma() {
    let catalog = PartyCatalog::italian();
    let users: Vec<String> = (0..8000).map(|i| format!("u{i}")).collect();
    for (task, seed) in [(Task::Party, 1), (Task::Pole, 2)] {
        let labels = task_labels(&catalog, task);
        let preds = predict_random(&users, &labels, task, &catalog, seed).unwrap();
        let p = 1.0 / labels.len() as f64;
        let n = users.len() as f64;
        let sigma = (n * p * (1.0 - p)).sqrt();
        for l in &labels {
            let c = preds.iter().filter(|x| x.label(task) == Some(l.as_str())).count() as f64;
            assert!((c - n * p).abs() <= 3.0 * sigma, "{l}: {c} vs {}", n * p);
        }
        assert_eq!(preds, predict_random(&users, &labels, task, &catalog, seed).unwrap());
    }
}

#[test]
fn embedding_ignores_duplicated_tweets() {
    let texts = [
        "tasse lavoro sud", "scuola lavoro europa", "tasse confini sicurezza",
        "europa ambiente scuola", "sud lavoro sicurezza", "confini tasse ambiente",
    ];
    let mut corpus = Vec::new();
    for _ in 0..30 {
        corpus.extend(texts.iter().copied());
    }
    let cfg = EmbeddingConfig { dim: 8, epochs: 2, ..Default::default() };
    let model = train_embeddings_on(corpus.into_iter(), &cfg, &BTreeSet::new(), 5).unwrap();
    let once = common::timeline("a", &texts[..4]);
    let doubled: Vec<&str> = texts[..4].iter().flat_map(|t| [*t, *t]).collect();
    let twice = common::timeline("a", &doubled);
    let a = embed_user(&model, &once);
    let b = embed_user(&model, &twice);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-9);
    }
    assert!(a.iter().any(|x| *x != 0.0));
}

#[test]
fn retweet_totals_match_timelines() {
    let cfg = SynthConfig { n_users: 80, tweets_per_user: [25, 60], pivot_tweets: 30, ..Default::default() };
    let corpus = generate_synthetic_corpus(&cfg, 9).unwrap().corpus;
    let vectors = retweet_vectors(&corpus);
    assert_eq!(vectors.len(), corpus.n_users());
    let mut seen = BTreeMap::new();
    for v in &vectors {
        let tl = &corpus.timelines[&v.user_id];
        assert_eq!(v.total(), tl.retweet_count());
        seen.insert(v.user_id.clone(), v.total());
    }
    assert!(seen.values().sum::<usize>() > 0);
}
