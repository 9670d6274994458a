//! Multiclass metrics with abstentions, confusion matrices and sensitivity
//! curves.
//!
//! A prediction without a label is an abstention: it counts as a false
//! negative for the true class and as nobody's false positive, so micro
//! precision and recall separate once anyone abstains. Undefined ratios
//! (no predictions, no support) are reported as 0 and flagged.

mod agreement;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use agreement::{adjusted_rand_index, normalized_mutual_info};

use crate::corpus::PartyCatalog;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvBuffer};
use crate::prediction::{Prediction, Task};

pub const ABSTAIN: &str = "(abstain)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Counts of truth (rows) against prediction (columns); the last column holds
/// abstentions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
}

impl Confusion {
    pub fn to_csv(&self, provenance: Option<&str>) -> Result<Vec<u8>> {
        let mut header = vec!["truth".to_string()];
        header.extend(self.labels.iter().cloned());
        header.push(ABSTAIN.into());
        header.push("total".into());
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut csv = CsvBuffer::new(provenance, &header_refs)?;
        for (label, (row, sum)) in self.labels.iter().zip(self.counts.iter().zip(&self.row_sums)) {
            let mut fields = vec![label.clone()];
            fields.extend(row.iter().map(usize::to_string));
            fields.push(sum.to_string());
            csv.row(fields)?;
        }
        let mut total = vec!["total".to_string()];
        total.extend(self.col_sums.iter().map(usize::to_string));
        total.push(self.row_sums.iter().sum::<usize>().to_string());
        csv.row(total)?;
        csv.into_bytes()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub per_class: BTreeMap<String, ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: Averages,
    pub micro: Averages,
    pub confusion: Confusion,
    pub n_users: usize,
    pub n_abstained: usize,
    /// Classes whose precision or recall was undefined and reported as 0.
    pub undefined: Vec<String>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Pole truth from party truth.
pub fn pole_truth(truth: &BTreeMap<String, String>, catalog: &PartyCatalog) -> Result<BTreeMap<String, String>> {
    truth
        .iter()
        .map(|(u, party)| {
            let pole = catalog
                .pole_of(party)
                .ok_or_else(|| Error::Validation(format!("truth label {party} of {u} is not in the catalog")))?;
            Ok((u.clone(), pole.to_string()))
        })
        .collect()
}

/// Labels that are valid for `task` in catalog order.
pub fn task_labels(catalog: &PartyCatalog, task: Task) -> Vec<String> {
    match task {
        Task::Party => catalog.labels(),
        Task::Pole => catalog.poles().to_vec(),
    }
}

/// `(truth, predicted)` pairs; `None` is an abstention.
fn pairs<'a>(
    predictions: &'a [Prediction],
    truth: &'a BTreeMap<String, String>,
    labels: &[String],
    task: Task,
) -> Result<Vec<(usize, Option<usize>)>> {
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let lookup = |l: &str| {
        index
            .get(l)
            .copied()
            .ok_or_else(|| Error::Validation(format!("label {l} is not a {} label", task.name())))
    };
    predictions
        .iter()
        .map(|p| {
            let t = truth
                .get(&p.user_id)
                .ok_or_else(|| Error::Validation(format!("no truth label for user {}", p.user_id)))?;
            Ok((lookup(t)?, p.label(task).map(lookup).transpose()?))
        })
        .collect()
}

pub fn confusion_with_marginals(
    predictions: &[Prediction],
    truth: &BTreeMap<String, String>,
    labels: &[String],
    task: Task,
) -> Result<Confusion> {
    let l = labels.len();
    let mut counts = vec![vec![0usize; l + 1]; l];
    for (t, p) in pairs(predictions, truth, labels, task)? {
        counts[t][p.unwrap_or(l)] += 1;
    }
    let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums = (0..=l).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
    Ok(Confusion {
        labels: labels.to_vec(),
        counts,
        row_sums,
        col_sums,
    })
}

/// Per-class, macro and micro precision/recall/F1. Macro averages run over the
/// labels that occur in the truth or in the predictions.
pub fn evaluate(
    predictions: &[Prediction],
    truth: &BTreeMap<String, String>,
    labels: &[String],
    task: Task,
) -> Result<EvalReport> {
    let confusion = confusion_with_marginals(predictions, truth, labels, task)?;
    let l = labels.len();
    let mut per_class = BTreeMap::new();
    let mut undefined = Vec::new();
    let (mut macro_p, mut macro_r, mut macro_f, mut present) = (0.0, 0.0, 0.0, 0usize);
    let (mut tp_all, mut predicted_all) = (0usize, 0usize);
    for (i, label) in labels.iter().enumerate() {
        let tp = confusion.counts[i][i];
        let support = confusion.row_sums[i];
        let predicted = confusion.col_sums[i];
        tp_all += tp;
        predicted_all += predicted;
        let p = ratio(tp, predicted);
        let r = ratio(tp, support);
        if p.is_none() || r.is_none() {
            undefined.push(label.clone());
        }
        let (p, r) = (p.unwrap_or(0.0), r.unwrap_or(0.0));
        let m = ClassMetrics {
            precision: p,
            recall: r,
            f1: f1(p, r),
            support,
        };
        if support > 0 || predicted > 0 {
            macro_p += m.precision;
            macro_r += m.recall;
            macro_f += m.f1;
            present += 1;
        }
        per_class.insert(label.clone(), m);
    }
    let n_users = predictions.len();
    let n_abstained = confusion.col_sums[l];
    let present = present.max(1) as f64;
    let micro_p = ratio(tp_all, predicted_all).unwrap_or(0.0);
    let micro_r = ratio(tp_all, n_users).unwrap_or(0.0);
    Ok(EvalReport {
        task,
        per_class,
        macro_avg: Averages {
            precision: macro_p / present,
            recall: macro_r / present,
            f1: macro_f / present,
        },
        micro: Averages {
            precision: micro_p,
            recall: micro_r,
            f1: f1(micro_p, micro_r),
        },
        confusion,
        n_users,
        n_abstained,
        undefined,
    })
}

/// Evaluates both tasks against party truth.
pub fn evaluate_both(
    predictions: &[Prediction],
    party_truth: &BTreeMap<String, String>,
    catalog: &PartyCatalog,
) -> Result<(EvalReport, EvalReport)> {
    let party = evaluate(predictions, party_truth, &task_labels(catalog, Task::Party), Task::Party)?;
    let pole = evaluate(
        predictions,
        &pole_truth(party_truth, catalog)?,
        &task_labels(catalog, Task::Pole),
        Task::Pole,
    )?;
    Ok((party, pole))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveAxis {
    Distance,
    Tweets,
    Retweets,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub micro_f1_party: f64,
    pub micro_f1_pole: f64,
    pub n_users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub axis: CurveAxis,
    pub points: Vec<CurvePoint>,
}

impl SensitivityCurve {
    pub fn to_csv(&self, provenance: Option<&str>) -> Result<Vec<u8>> {
        let mut csv = CsvBuffer::new(provenance, &["threshold", "n_users", "micro_f1_party", "micro_f1_pole"])?;
        for p in &self.points {
            csv.row([
                fmt_f64(p.threshold),
                p.n_users.to_string(),
                fmt_f64(p.micro_f1_party),
                fmt_f64(p.micro_f1_pole),
            ])?;
        }
        csv.into_bytes()
    }
}

pub const DEFAULT_GRID_POINTS: usize = 20;

/// Party and pole micro F1 over the predictions kept by `keep`.
pub fn micro_f1_where(
    predictions: &[Prediction],
    party_truth: &BTreeMap<String, String>,
    catalog: &PartyCatalog,
    mut keep: impl FnMut(&Prediction) -> bool,
) -> Result<(f64, f64, usize)> {
    let subset: Vec<Prediction> = predictions.iter().filter(|p| keep(p)).cloned().collect();
    let (party, pole) = evaluate_both(&subset, party_truth, catalog)?;
    Ok((party.micro.f1, pole.micro.f1, subset.len()))
}

/// Metrics over users whose normalized pivot distance is at most each of
/// `n_points` evenly spaced thresholds in (0, 1].
pub fn distance_sensitivity(
    predictions: &[Prediction],
    party_truth: &BTreeMap<String, String>,
    catalog: &PartyCatalog,
    n_points: usize,
) -> Result<SensitivityCurve> {
    if n_points == 0 {
        return Err(Error::invalid("sensitivity grid needs at least one point"));
    }
    let points = (1..=n_points)
        .map(|i| {
            let threshold = i as f64 / n_points as f64;
            let (party, pole, n) = micro_f1_where(predictions, party_truth, catalog, |p| {
                p.normalized_distance <= threshold
            })?;
            Ok(CurvePoint {
                threshold,
                micro_f1_party: party,
                micro_f1_pole: pole,
                n_users: n,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SensitivityCurve {
        axis: CurveAxis::Distance,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountGrid {
    /// One point per value: users with count ≥ value.
    AtLeast(Vec<usize>),
    /// One point per `[edge_i, edge_{i+1})` bin, keyed by its lower edge.
    Bins(Vec<usize>),
}

/// Metrics grouped by a per-user count (tweets or retweets).
pub fn count_sensitivity(
    predictions: &[Prediction],
    party_truth: &BTreeMap<String, String>,
    catalog: &PartyCatalog,
    counts: &BTreeMap<String, usize>,
    grid: &CountGrid,
    axis: CurveAxis,
) -> Result<SensitivityCurve> {
    let values = match grid {
        CountGrid::AtLeast(v) | CountGrid::Bins(v) => v,
    };
    if values.is_empty() || values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("count grid must be non-empty and strictly increasing"));
    }
    let count = |p: &Prediction| counts.get(&p.user_id).copied().unwrap_or(0);
    let ranges: Vec<(usize, usize)> = match grid {
        CountGrid::AtLeast(v) => v.iter().map(|&lo| (lo, usize::MAX)).collect(),
        CountGrid::Bins(v) => v.windows(2).map(|w| (w[0], w[1])).collect(),
    };
    let points = ranges
        .into_iter()
        .map(|(lo, hi)| {
            let (party, pole, n) = micro_f1_where(predictions, party_truth, catalog, |p| {
                (lo..hi).contains(&count(p))
            })?;
            Ok(CurvePoint {
                threshold: lo as f64,
                micro_f1_party: party,
                micro_f1_pole: pole,
                n_users: n,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SensitivityCurve { axis, points })
}

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    crate::io::write_json_atomic(path, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(user: &str, party: Option<&str>) -> Prediction {
        Prediction {
            user_id: user.into(),
            party: party.map(str::to_string),
            pole: None,
            confidence: 1.0,
            normalized_distance: 0.0,
        }
    }

    fn labels() -> Vec<String> {
        vec!["A".into(), "B".into()]
    }

    fn truth(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(u, l)| (u.to_string(), l.to_string())).collect()
    }

    #[test]
    fn worked_example() {
        let p = [pred("1", Some("A")), pred("2", Some("A")), pred("3", Some("B"))];
        let t = truth(&[("1", "A"), ("2", "B"), ("3", "B")]);
        let r = evaluate(&p, &t, &labels(), Task::Party).unwrap();
        for v in [r.micro.precision, r.micro.recall, r.micro.f1, r.macro_avg.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-12);
        }
        assert!((r.macro_avg.precision - 0.75).abs() < 1e-12);
        assert!((r.macro_avg.recall - 0.75).abs() < 1e-12);
    }

    #[test]
    fn all_abstained() {
        let p = [pred("1", None), pred("2", None)];
        let t = truth(&[("1", "A"), ("2", "B")]);
        let r = evaluate(&p, &t, &labels(), Task::Party).unwrap();
        assert_eq!(r.micro.recall, 0.0);
        assert_eq!(r.micro.precision, 0.0);
        assert_eq!(r.n_abstained, 2);
        assert_eq!(r.undefined, labels());
    }

    #[test]
    fn unknown_label_or_user_is_an_error() {
        let t = truth(&[("1", "A")]);
        assert!(evaluate(&[pred("1", Some("Z"))], &t, &labels(), Task::Party).is_err());
        assert!(evaluate(&[pred("2", Some("A"))], &t, &labels(), Task::Party).is_err());
    }

    #[test]
    fn confusion_csv_has_marginals() {
        let p = [pred("1", Some("A")), pred("2", None)];
        let t = truth(&[("1", "A"), ("2", "B")]);
        let c = confusion_with_marginals(&p, &t, &labels(), Task::Party).unwrap();
        let text = String::from_utf8(c.to_csv(None).unwrap()).unwrap();
        assert_eq!(text, "truth,A,B,(abstain),total\nA,1,0,0,1\nB,0,0,1,1\ntotal,1,0,1,2\n");
    }
}
