//! Acceptance suite. Each test prints one PASS/FAIL line per criterion to
//! the real stdout, so the lines show up without `--nocapture`.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use leaning::classifier::network::{Dims, Network};
use leaning::classifier::{build_pivot_training_set, fit_encoder, train, Classifier, ClassifierConfig, ScoreVector};
use leaning::corpus::{generate_synthetic_corpus, PartyCatalog, SynthConfig, Timeline};
use leaning::evaluation::{evaluate, micro_f1_where, normalized_mutual_info, pole_truth, task_labels};
use leaning::groundtruth::{louvain, SimilarityNetwork};
use leaning::ideology::{user_vector, vector_from_scores};
use leaning::pipeline::{Method, Run, RunConfig};
use leaning::prediction::{read_predictions, Prediction, Task};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n}: {verdict} {detail}");
}

fn config_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run_pipeline(config: &str, out: &Path, overrides: &[(&str, &str)]) -> Run {
    let mut pairs = vec![("paths.output_dir".to_string(), serde_json::to_string(out.to_str().unwrap()).unwrap())];
    pairs.extend(overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    let cfg = RunConfig::load(&config_file(config)).unwrap().with_overrides(&pairs).unwrap();
    let run = Run::new(cfg).unwrap();
    run.pipeline().unwrap_or_else(|e| panic!("stage {} failed: {}", e.stage.name(), e.error));
    run
}

#[test]
fn criterion_1_metric_oracle() {
    let t0 = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let catalog = PartyCatalog::italian();
    let parties = task_labels(&catalog, Task::Party);
    let poles = task_labels(&catalog, Task::Pole);
    let mut failures = Vec::new();
    let mut with_abstentions = 0;
    for i in 0..1000 {
        let n = r.random_range(1..=50);
        let abstain = if i % 2 == 0 { 0.0 } else { r.random_range(0.05..0.5) };
        let (preds, truth) = common::random_instance(&mut r, n, abstain);
        with_abstentions += preds.iter().any(|p| p.party.is_none()) as usize;
        let rep = evaluate(&preds, &truth, &parties, Task::Party).unwrap();
        if let Some(m) = common::mismatch(&rep, &common::brute_force(&preds, &truth, &parties, Task::Party)) {
            failures.push(format!("instance {i} party: {m}"));
        }
        let pt = pole_truth(&truth, &catalog).unwrap();
        let rep = evaluate(&preds, &pt, &poles, Task::Pole).unwrap();
        if let Some(m) = common::mismatch(&rep, &common::brute_force(&preds, &pt, &poles, Task::Pole)) {
            failures.push(format!("instance {i} pole: {m}"));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 60.0;
    report(
        1,
        pass,
        &format!("1000 instances ({with_abstentions} with abstentions), {} mismatches, {secs:.1}s", failures.len()),
    );
    assert!(pass, "{failures:?}");
}

fn brute_force_vector(scores: &[ScoreVector], parties: usize, k: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for p in 0..parties {
        let mut col: Vec<f64> = scores.iter().map(|s| s.scores[p]).collect();
        // Selection by repeated maximum; independent of the library's sort.
        for _ in 0..k {
            let (i, v) = col
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
            out.push(v);
            col.remove(i);
        }
    }
    out
}

fn tiny_classifier() -> (Classifier, leaning::corpus::Corpus) {
    let cfg = SynthConfig { n_users: 200, tweets_per_user: [25, 120], pivot_tweets: 40, ..Default::default() };
    let corpus = generate_synthetic_corpus(&cfg, 12).unwrap().corpus;
    let set = build_pivot_training_set(&corpus, 40).unwrap();
    let (tr, val) = set.split_holdout(0.2, 2);
    let enc = fit_encoder(tr.texts(), 1);
    let mut c = ClassifierConfig::compact();
    c.epochs = 1;
    let (clf, _) = train(&tr, &enc, &c, &val, &corpus.catalog.labels()).unwrap();
    (clf, corpus)
}

fn score_sets() -> impl Strategy<Value = Vec<ScoreVector>> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, 8), 5..40)
        .prop_map(|rows| rows.into_iter().map(|scores| ScoreVector { scores }).collect())
}

#[test]
fn criterion_2_vectorization_oracle() {
    let (clf, corpus) = tiny_classifier();
    let labels = clf.labels().to_vec();
    let k = 5;
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let users: Vec<&Timeline> = corpus.timelines.values().collect();
    let mut exact = 0;
    for i in 0..200 {
        // Random sub-timelines of the synthetic users.
        let src = users[i % users.len()];
        let keep: Vec<_> = src.tweets.iter().filter(|_| r.random_bool(0.7)).cloned().collect();
        let tl = Timeline::new(src.user_id.clone(), if keep.len() >= k { keep } else { src.tweets.clone() });
        let got = user_vector(&clf, &tl, k).unwrap();
        let scores: Vec<ScoreVector> = tl.tweets.iter().map(|t| clf.classify_text(&t.text)).collect();
        exact += (got.components == brute_force_vector(&scores, labels.len(), k)) as usize;
    }

    let mut runner = TestRunner::new(PropConfig::with_cases(500));
    let monotone = runner.run(&(score_sets(), score_sets()), |(a, extra)| {
        let before = vector_from_scores("u", &a, &labels, k).unwrap();
        let mut all = a.clone();
        all.extend(extra);
        let after = vector_from_scores("u", &all, &labels, k).unwrap();
        for (x, y) in before.components.iter().zip(&after.components) {
            prop_assert!(y >= x);
        }
        Ok(())
    });
    let mut runner = TestRunner::new(PropConfig::with_cases(500));
    let order = runner.run(&(score_sets(), any::<u64>()), |(a, seed)| {
        use rand::seq::SliceRandom;
        let mut b = a.clone();
        b.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(
            vector_from_scores("u", &a, &labels, k).unwrap(),
            vector_from_scores("u", &b, &labels, k).unwrap()
        );
        Ok(())
    });
    let pass = exact == 200 && monotone.is_ok() && order.is_ok();
    report(
        2,
        pass,
        &format!(
            "{exact}/200 timelines exact, monotonicity {}, order invariance {}",
            if monotone.is_ok() { "ok" } else { "failed" },
            if order.is_ok() { "ok" } else { "failed" }
        ),
    );
    assert!(pass, "{monotone:?} {order:?}");
}

#[test]
fn criterion_3_louvain_recovery() {
    let t0 = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let n = 400;
    let nodes: Vec<String> = (0..n).map(|i| format!("n{i:03}")).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if i / 50 == j / 50 { 0.3 } else { 0.01 };
            if r.random_bool(p) {
                edges.push((i, j, 1));
            }
        }
    }
    let planted = louvain(&SimilarityNetwork::from_edges(nodes.clone(), edges), 1.0, 3).unwrap();
    let truth: Vec<usize> = (0..n).map(|i| i / 50).collect();
    let found: Vec<usize> = nodes.iter().map(|x| planted.assignment[x]).collect();
    let nmi = normalized_mutual_info(&truth, &found);

    let clique_nodes: Vec<String> = (0..12).map(|i| format!("c{i:02}")).collect();
    let mut clique_edges = Vec::new();
    for c in 0..2 {
        for i in 0..6 {
            for j in i + 1..6 {
                clique_edges.push((c * 6 + i, c * 6 + j, 1));
            }
        }
    }
    clique_edges.push((5, 6, 1));
    let two = louvain(&SimilarityNetwork::from_edges(clique_nodes.clone(), clique_edges), 1.0, 3).unwrap();
    let exact = two.n_communities() == 2
        && (0..12).all(|i| (two.assignment[&clique_nodes[i]] == two.assignment[&clique_nodes[0]]) == (i < 6));
    let secs = t0.elapsed().as_secs_f64();
    let pass = nmi >= 0.95 && exact && secs < 30.0;
    report(
        3,
        pass,
        &format!(
            "planted NMI {nmi:.4} ({} communities), two cliques {}, {secs:.1}s",
            planted.n_communities(),
            if exact { "exact" } else { "not recovered" }
        ),
    );
    assert!(pass);
}

fn gradient_error(dims: Dims, seed: u64, tokens: &[usize], len: usize, label: usize) -> f64 {
    let mut net = Network::<f64>::init(dims, seed);
    let (_, grads) = net.loss_and_grad(tokens, len, label);
    let analytic: Vec<f64> = grads.slices().concat();
    let mut numeric = Vec::new();
    let h = 1e-5;
    for t in 0..net.params.slices().len() {
        for i in 0..net.params.slices()[t].len() {
            let orig = net.params.slices()[t][i];
            net.params.slices_mut()[t][i] = orig + h;
            let up = net.loss(tokens, len, label);
            net.params.slices_mut()[t][i] = orig - h;
            let down = net.loss(tokens, len, label);
            net.params.slices_mut()[t][i] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / (norm(&analytic) + norm(&numeric))
}

#[test]
fn criterion_4_classifier_learnability() {
    let t0 = Instant::now();
    let dims = Dims {
        vocab: 12,
        classes: 8,
        max_len: 14,
        embedding: 4,
        filters: 5,
        width: 3,
        pool: 2,
        model: 4,
        heads: 2,
        layers: 1,
        ffn: 6,
        dense: 3,
    };
    let tokens = [2, 7, 3, 9, 4, 1, 5, 8, 11, 10, 0, 0, 0, 0];
    let grad_err = gradient_error(dims, 4, &tokens, 10, 5);

    let cfg = SynthConfig { n_users: 16, tweets_per_user: [25, 25], pivot_tweets: 450, separation: 1.0, ..Default::default() };
    let corpus = generate_synthetic_corpus(&cfg, 4).unwrap().corpus;
    let set = build_pivot_training_set(&corpus, 450).unwrap();
    let (tr, val) = set.split_holdout(50.0 / 450.0, 4);
    let enc = fit_encoder(tr.texts(), 1);
    let labels = corpus.catalog.labels();
    let (clf, log) = train(&tr, &enc, &ClassifierConfig::compact(), &val, &labels).unwrap();
    let hits = val.items.iter().filter(|it| clf.predict_label(&it.tweet.text) == it.label).count();
    let acc = hits as f64 / val.items.len() as f64;
    let secs = t0.elapsed().as_secs_f64();
    let pass = acc >= 0.90 && grad_err <= 1e-3 && secs < 600.0;
    report(
        4,
        pass,
        &format!(
            "validation accuracy {acc:.3} on {} tweets ({} train, {} epochs), gradient rel. error {grad_err:.2e}, {secs:.0}s",
            val.items.len(),
            tr.items.len(),
            log.epochs.len()
        ),
    );
    assert!(pass);
}

fn scores(preds: &[Prediction], truth: &BTreeMap<String, String>, catalog: &PartyCatalog) -> (f64, f64) {
    let (party, pole, _) = micro_f1_where(preds, truth, catalog, |_| true).unwrap();
    (party, pole)
}

#[test]
fn criteria_5_to_7_synthetic_pipeline() {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let run = run_pipeline("synthetic.json", tmp.path(), &[]);
    let secs = t0.elapsed().as_secs_f64();
    let truth = run.truth().unwrap();
    let catalog = run.corpus().unwrap().catalog;
    let compare = |m: Method| {
        read_predictions(&tmp.path().join("compare/predictions").join(format!("{}.csv", m.name()))).unwrap()
    };
    let main = run.predictions(Method::PartiesEnrichedClustering).unwrap();
    let (party, pole) = scores(&main, &truth, &catalog);
    let random = scores(&compare(Method::Random), &truth, &catalog);
    let w2v = scores(&compare(Method::Word2vecClustering), &truth, &catalog);
    let plain = scores(&compare(Method::PartiesClustering), &truth, &catalog);

    let pass5 = party >= 0.60
        && pole >= 0.85
        && party > 0.125
        && pole > 1.0 / 3.0
        && party > random.0
        && pole > random.1
        && party > w2v.0
        && pole > w2v.1
        && secs < 1200.0;
    report(
        5,
        pass5,
        &format!(
            "party {party:.3} pole {pole:.3} on {} test users; random {:.3}/{:.3}; word2vec+clustering {:.3}/{:.3}; {secs:.0}s",
            main.len(),
            random.0,
            random.1,
            w2v.0,
            w2v.1
        ),
    );

    let pass6 = party >= plain.0 - 0.02 && pole >= plain.1 - 0.02;
    report(
        6,
        pass6,
        &format!("enriched {party:.3}/{pole:.3} vs non-enriched {:.3}/{:.3}", plain.0, plain.1),
    );

    let (near_party, near_pole, near_n) =
        micro_f1_where(&main, &truth, &catalog, |p| p.normalized_distance <= 0.2).unwrap();
    let pass7 = near_n > 0 && near_party >= party && near_pole >= pole;
    report(
        7,
        pass7,
        &format!("distance <= 0.2: {near_n} users, party {near_party:.3} pole {near_pole:.3} vs all {party:.3}/{pole:.3}"),
    );
    assert!(pass5 && pass6 && pass7);
}

fn files_under(root: &Path, dir: &str) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.join(dir)];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if matches!(p.extension().and_then(|x| x.to_str()), Some("csv" | "json")) {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_8_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_pipeline("smoke.json", &a, &[]);
    run_pipeline("smoke.json", &b, &[]);
    let mut compared = 0;
    let mut differing = Vec::new();
    for dir in ["predictions", "reports", "compare"] {
        let fa = files_under(&a, dir);
        assert_eq!(fa, files_under(&b, dir), "{dir} file sets differ");
        for rel in fa {
            compared += 1;
            if std::fs::read(a.join(&rel)).unwrap() != std::fs::read(b.join(&rel)).unwrap() {
                differing.push(rel.display().to_string());
            }
        }
    }
    let pass = compared > 0 && differing.is_empty();
    report(8, pass, &format!("{compared} prediction and report files compared, {} differ", differing.len()));
    assert!(pass, "{differing:?}");
}

#[test]
fn criterion_9_tweet_count_sensitivity() {
    let tmp = tempfile::tempdir().unwrap();
    let run = run_pipeline(
        "synthetic.json",
        tmp.path(),
        // A low political share makes short timelines short on political
        // tweets too; the larger test share gives the <40 bin enough users.
        &[
            ("synth.tweets_per_user", "[25, 200]"),
            ("synth.political_fraction", "0.1"),
            ("split.fractions", "[0.5, 0.1, 0.4]"),
            ("methods", "[]"),
        ],
    );
    let truth = run.truth().unwrap();
    let corpus = run.corpus().unwrap();
    let preds = run.predictions(Method::PartiesEnrichedClustering).unwrap();
    let count = |p: &Prediction| corpus.timelines[&p.user_id].len();
    let (many_party, many_pole, many_n) = micro_f1_where(&preds, &truth, &corpus.catalog, |p| count(p) >= 100).unwrap();
    let (few_party, few_pole, few_n) = micro_f1_where(&preds, &truth, &corpus.catalog, |p| count(p) < 40).unwrap();
    let pass = many_n > 0 && few_n > 0 && many_party >= few_party && many_pole >= few_pole;
    report(
        9,
        pass,
        &format!(
            ">=100 tweets: {many_n} users, party {many_party:.3} pole {many_pole:.3}; <40 tweets: {few_n} users, party {few_party:.3} pole {few_pole:.3}"
        ),
    );
    assert!(pass);
}
