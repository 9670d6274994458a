use std::collections::BTreeMap;

use super::{LikeGraph, Partition};
use crate::corpus::PartyCatalog;
use crate::error::{Error, Result};

/// Party a single user likes most; ties go to the smaller label.
fn member_vote<'a>(likes: &'a LikeGraph, user: &str) -> Option<&'a str> {
    let counts = likes.party_counts(user);
    // BTreeMap iterates labels ascending, so strict `>` keeps the smaller one.
    let mut best: Option<(&str, usize)> = None;
    for (party, n) in counts {
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((party, n));
        }
    }
    best.map(|(p, _)| p)
}

/// Labels every community with the party preferred by the plurality of its
/// members. Ties are broken by total likes of the community toward each
/// party, then by the lexicographically smaller label. Members inherit the
/// community label.
pub fn label_communities(
    partition: &Partition,
    likes: &LikeGraph,
    catalog: &PartyCatalog,
) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (community, members) in partition.members() {
        let mut votes: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for user in &members {
            if let Some(p) = member_vote(likes, user) {
                votes.entry(p).or_default().0 += 1;
            }
            for (p, n) in likes.party_counts(user) {
                votes.entry(p).or_default().1 += n;
            }
        }
        let mut best: Option<(&str, (usize, usize))> = None;
        for (party, score) in votes {
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((party, score));
            }
        }
        let Some((label, _)) = best else {
            return Err(Error::Validation(format!(
                "community {community} has no likes to label it"
            )));
        };
        if catalog.index_of(label).is_none() {
            return Err(Error::Validation(format!(
                "pivot tweet party {label} is not in the catalog"
            )));
        }
        for user in members {
            out.insert(user.to_string(), label.to_string());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Party;

    fn catalog() -> PartyCatalog {
        PartyCatalog::new(
            ["A", "B", "C"]
                .iter()
                .map(|l| Party {
                    label: l.to_string(),
                    pole: "X".into(),
                    pivot_user_id: format!("pivot{l}"),
                })
                .collect(),
        )
        .unwrap()
    }

    fn likes(rows: &[(&str, &str)]) -> LikeGraph {
        let mut tp = BTreeMap::new();
        for p in ["A", "B", "C"] {
            for i in 0..10 {
                tp.insert(format!("{p}{i}"), p.to_string());
            }
        }
        let mut g = LikeGraph::new(tp);
        for (u, t) in rows {
            assert!(g.add_like(*u, *t));
        }
        g
    }

    fn partition(rows: &[(&str, usize)]) -> Partition {
        Partition {
            assignment: rows.iter().map(|(u, c)| (u.to_string(), *c)).collect(),
            modularity: 0.0,
        }
    }

    #[test]
    fn plurality_of_members_labels_the_community() {
        let mut rows = Vec::new();
        let users: Vec<String> = (0..10).map(|i| format!("u{i}")).collect();
        let tweets: Vec<String> = (0..10).map(|i| format!("A{i}")).collect();
        for (i, u) in users.iter().enumerate() {
            if i < 9 {
                rows.push((u.as_str(), tweets[i].as_str()));
            } else {
                rows.push((u.as_str(), "B0"));
            }
        }
        let g = likes(&rows);
        let p = partition(&users.iter().map(|u| (u.as_str(), 0)).collect::<Vec<_>>());
        let labels = label_communities(&p, &g, &catalog()).unwrap();
        assert!(labels.values().all(|l| l == "A"));
        assert_eq!(labels.len(), 10);
    }

    #[test]
    fn member_tie_broken_by_total_likes() {
        // one member votes A (1 like), one votes B (3 likes)
        let g = likes(&[("x", "A0"), ("y", "B0"), ("y", "B1"), ("y", "B2")]);
        let p = partition(&[("x", 0), ("y", 0)]);
        let labels = label_communities(&p, &g, &catalog()).unwrap();
        assert_eq!(labels["x"], "B");
    }

    #[test]
    fn exact_tie_goes_to_smaller_label() {
        let g = likes(&[("x", "B0"), ("y", "A0")]);
        let p = partition(&[("x", 0), ("y", 0)]);
        let labels = label_communities(&p, &g, &catalog()).unwrap();
        assert_eq!(labels["x"], "A");
        assert_eq!(labels["y"], "A");
    }

    #[test]
    fn labeling_is_pure() {
        let g = likes(&[("x", "C0"), ("y", "A0"), ("y", "A1")]);
        let p = partition(&[("x", 0), ("y", 1)]);
        let a = label_communities(&p, &g, &catalog()).unwrap();
        let b = label_communities(&p, &g, &catalog()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a["x"], "C");
        assert_eq!(a["y"], "A");
    }
}
