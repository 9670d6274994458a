use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Label of the pivot nearest to `point`; ties go to the smaller label.
fn nearest_label<'a>(
    point: ArrayView1<f64>,
    features: ArrayView2<f64>,
    candidates: impl Iterator<Item = &'a (usize, String)>,
) -> &'a str {
    let mut best: Option<(f64, &str)> = None;
    for (row, label) in candidates {
        let d = sq_dist(point, features.row(*row));
        let better = match best {
            None => true,
            Some((bd, bl)) => d < bd || (d == bd && label.as_str() < bl),
        };
        if better {
            best = Some((d, label));
        }
    }
    best.expect("at least one candidate pivot").1
}

/// Labels every row from the pivots sharing its cluster.
///
/// `pivots` lists `(row, label)` of the pivot rows of `features`. A cluster
/// whose pivots all carry one label takes that label. A cluster with pivots
/// of several labels labels each member by its nearest contained pivot. A
/// cluster without pivots takes the label of the pivot nearest to its
/// centroid.
pub fn label_clusters(
    assignment: &[usize],
    features: ArrayView2<f64>,
    pivots: &[(usize, String)],
) -> Result<Vec<String>> {
    if pivots.is_empty() {
        return Err(Error::invalid("cluster labeling needs at least one pivot"));
    }
    if assignment.len() != features.nrows() {
        return Err(Error::invalid("assignment and feature rows differ in length"));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in assignment.iter().enumerate() {
        members.entry(*c).or_default().push(i);
    }
    let mut out = vec![String::new(); assignment.len()];
    for (cluster, rows) in members {
        let inside: Vec<&(usize, String)> = pivots
            .iter()
            .filter(|(row, _)| assignment[*row] == cluster)
            .collect();
        let labels: BTreeSet<&str> = inside.iter().map(|(_, l)| l.as_str()).collect();
        match labels.len() {
            0 => {
                let mut centroid = Array1::<f64>::zeros(features.ncols());
                for &r in &rows {
                    centroid += &features.row(r);
                }
                centroid /= rows.len() as f64;
                let label = nearest_label(centroid.view(), features, pivots.iter());
                for r in rows {
                    out[r] = label.to_string();
                }
            }
            1 => {
                let label = labels.into_iter().next().unwrap();
                for r in rows {
                    out[r] = label.to_string();
                }
            }
            _ => {
                for r in rows {
                    out[r] = nearest_label(features.row(r), features, inside.iter().copied())
                        .to_string();
                }
            }
        }
    }
    Ok(out)
}
