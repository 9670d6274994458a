#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use leaning::corpus::{PartyCatalog, Timeline, Tweet};
use leaning::evaluation::EvalReport;
use leaning::prediction::{Prediction, Task};
use rand::Rng;

pub fn tweet(user: &str, i: usize, text: &str) -> Tweet {
    Tweet {
        tweet_id: format!("{user}-{i}"),
        user_id: user.into(),
        text: text.into(),
        created_at: Utc.timestamp_opt(1_500_000_000 + i as i64 * 60, 0).unwrap(),
        is_retweet: false,
        retweet_of_user: None,
    }
}

pub fn timeline(user: &str, texts: &[&str]) -> Timeline {
    Timeline::new(user, texts.iter().enumerate().map(|(i, t)| tweet(user, i, t)).collect())
}

/// Random party truth and predictions over the built-in catalog. Roughly
/// `abstain` of the predictions abstain.
pub fn random_instance(
    r: &mut impl Rng,
    n_users: usize,
    abstain: f64,
) -> (Vec<Prediction>, BTreeMap<String, String>) {
    let catalog = PartyCatalog::italian();
    let labels = catalog.labels();
    let mut truth = BTreeMap::new();
    let mut preds = Vec::new();
    for u in 0..n_users {
        let id = format!("u{u:03}");
        truth.insert(id.clone(), labels[r.random_range(0..labels.len())].clone());
        if r.random_bool(abstain) {
            preds.push(Prediction {
                user_id: id,
                party: None,
                pole: None,
                confidence: 0.0,
                normalized_distance: 1.0,
            });
        } else {
            let l = &labels[r.random_range(0..labels.len())];
            preds.push(Prediction::new(&id, l, Task::Party, &catalog, r.random()));
        }
    }
    (preds, truth)
}

/// Independent tally of `evaluate`: compares labels as strings user by user.
pub struct Tally {
    pub counts: Vec<Vec<usize>>,
    pub precision: BTreeMap<String, f64>,
    pub recall: BTreeMap<String, f64>,
    pub f1: BTreeMap<String, f64>,
    pub macro_f1: f64,
    pub macro_p: f64,
    pub macro_r: f64,
    pub micro_p: f64,
    pub micro_r: f64,
    pub micro_f1: f64,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

pub fn brute_force(
    preds: &[Prediction],
    truth: &BTreeMap<String, String>,
    labels: &[String],
    task: Task,
) -> Tally {
    let l = labels.len();
    let mut counts = vec![vec![0usize; l + 1]; l];
    for p in preds {
        let t = labels.iter().position(|x| *x == truth[&p.user_id]).unwrap();
        let c = match p.label(task) {
            Some(x) => labels.iter().position(|y| y == x).unwrap(),
            None => l,
        };
        counts[t][c] += 1;
    }
    let mut out = Tally {
        counts: counts.clone(),
        precision: BTreeMap::new(),
        recall: BTreeMap::new(),
        f1: BTreeMap::new(),
        macro_f1: 0.0,
        macro_p: 0.0,
        macro_r: 0.0,
        micro_p: 0.0,
        micro_r: 0.0,
        micro_f1: 0.0,
    };
    let (mut present, mut tp_all, mut answered) = (0usize, 0usize, 0usize);
    for label in labels {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for p in preds {
            let t = &truth[&p.user_id] == label;
            let y = p.label(task) == Some(label.as_str());
            match (t, y) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        tp_all += tp;
        answered += tp + fp;
        let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
        if tp + fp + fn_ > 0 {
            out.macro_p += p;
            out.macro_r += r;
            out.macro_f1 += f1(p, r);
            present += 1;
        }
        out.precision.insert(label.clone(), p);
        out.recall.insert(label.clone(), r);
        out.f1.insert(label.clone(), f1(p, r));
    }
    let present = present.max(1) as f64;
    out.macro_p /= present;
    out.macro_r /= present;
    out.macro_f1 /= present;
    out.micro_p = if answered > 0 { tp_all as f64 / answered as f64 } else { 0.0 };
    out.micro_r = if preds.is_empty() { 0.0 } else { tp_all as f64 / preds.len() as f64 };
    out.micro_f1 = f1(out.micro_p, out.micro_r);
    out
}

/// First mismatch between a report and its brute-force tally.
pub fn mismatch(report: &EvalReport, tally: &Tally) -> Option<String> {
    if report.confusion.counts != tally.counts {
        return Some("confusion counts".into());
    }
    for (label, m) in &report.per_class {
        if m.precision != tally.precision[label] || m.recall != tally.recall[label] || m.f1 != tally.f1[label] {
            return Some(format!("class {label}"));
        }
    }
    let a = &report.macro_avg;
    if (a.precision, a.recall, a.f1) != (tally.macro_p, tally.macro_r, tally.macro_f1) {
        return Some("macro averages".into());
    }
    let m = &report.micro;
    if (m.precision, m.recall, m.f1) != (tally.micro_p, tally.micro_r, tally.micro_f1) {
        return Some("micro averages".into());
    }
    None
}
