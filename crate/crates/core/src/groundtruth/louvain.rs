//! Louvain community detection on weighted undirected graphs.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::SimilarityNetwork;
use crate::error::{Error, Result};
use crate::rng;

/// Community assignment of every network node.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub assignment: BTreeMap<String, usize>,
    pub modularity: f64,
}

impl Partition {
    pub fn n_communities(&self) -> usize {
        self.assignment
            .values()
            .copied()
            .max()
            .map_or(0, |m| m + 1)
    }

    pub fn members(&self) -> BTreeMap<usize, Vec<&str>> {
        let mut out: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
        for (user, c) in &self.assignment {
            out.entry(*c).or_default().push(user);
        }
        out
    }
}

/// Weighted graph at one aggregation level. `adj` excludes self loops;
/// `loops[i]` holds the self-loop weight counted in both directions.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    loops: Vec<f64>,
}

impl Level {
    fn degree(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|(_, w)| w).sum::<f64>() + self.loops[i]
    }
}

/// Standard weighted modularity with resolution `gamma`.
pub fn modularity(network: &SimilarityNetwork, assignment: &[usize], gamma: f64) -> f64 {
    let m: f64 = network.edges().iter().map(|e| e.2 as f64).sum();
    if m == 0.0 {
        return 0.0;
    }
    let n_comm = assignment.iter().copied().max().map_or(0, |c| c + 1);
    let mut internal = vec![0.0; n_comm];
    let mut degree = vec![0.0; n_comm];
    for &(u, v, w) in network.edges() {
        let w = w as f64;
        degree[assignment[u]] += w;
        degree[assignment[v]] += w;
        if assignment[u] == assignment[v] {
            internal[assignment[u]] += w;
        }
    }
    (0..n_comm)
        .map(|c| internal[c] / m - gamma * (degree[c] / (2.0 * m)).powi(2))
        .sum()
}

/// Local moving phase. Returns the community of every node and whether any
/// node moved.
fn move_nodes(level: &Level, gamma: f64, order: &[usize]) -> (Vec<usize>, bool) {
    let n = level.adj.len();
    let k: Vec<f64> = (0..n).map(|i| level.degree(i)).collect();
    let m2: f64 = k.iter().sum();
    let mut community: Vec<usize> = (0..n).collect();
    let mut total = k.clone();
    let mut any_move = false;
    if m2 == 0.0 {
        return (community, false);
    }

    let mut weight_to = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    loop {
        let mut moved = false;
        for &i in order {
            let ci = community[i];
            for &(j, w) in &level.adj[i] {
                let cj = community[j];
                if weight_to[cj] == 0.0 {
                    touched.push(cj);
                }
                weight_to[cj] += w;
            }
            total[ci] -= k[i];
            let mut best = ci;
            let mut best_gain = weight_to[ci] - gamma * total[ci] * k[i] / m2;
            for &c in &touched {
                let gain = weight_to[c] - gamma * total[c] * k[i] / m2;
                if gain > best_gain + 1e-12 {
                    best = c;
                    best_gain = gain;
                }
            }
            total[best] += k[i];
            community[i] = best;
            if best != ci {
                moved = true;
                any_move = true;
            }
            for &c in &touched {
                weight_to[c] = 0.0;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    (community, any_move)
}

/// Renumbers communities densely in order of first appearance.
fn renumber(community: &mut [usize]) -> usize {
    let mut map = BTreeMap::new();
    let mut next = 0;
    for c in community.iter_mut() {
        let id = *map.entry(*c).or_insert_with(|| {
            next += 1;
            next - 1
        });
        *c = id;
    }
    next
}

fn aggregate(level: &Level, community: &[usize], n_comm: usize) -> Level {
    let mut loops = vec![0.0; n_comm];
    let mut weights: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n_comm];
    for (i, neighbors) in level.adj.iter().enumerate() {
        let ci = community[i];
        loops[ci] += level.loops[i];
        for &(j, w) in neighbors {
            let cj = community[j];
            if ci == cj {
                loops[ci] += w;
            } else {
                *weights[ci].entry(cj).or_default() += w;
            }
        }
    }
    Level {
        adj: weights.into_iter().map(|m| m.into_iter().collect()).collect(),
        loops,
    }
}

/// Multi-level Louvain. Node visiting order is shuffled with `seed`.
pub fn louvain(network: &SimilarityNetwork, resolution: f64, seed: u64) -> Result<Partition> {
    if network.n_nodes() == 0 {
        return Err(Error::invalid("louvain needs a non-empty network"));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::invalid(format!("resolution must be positive, got {resolution}")));
    }
    let mut r = rng::seeded(seed);
    let mut level = Level {
        adj: network.adjacency(),
        loops: vec![0.0; network.n_nodes()],
    };
    // node -> community at the current top level
    let mut assignment: Vec<usize> = (0..network.n_nodes()).collect();
    loop {
        let mut order: Vec<usize> = (0..level.adj.len()).collect();
        order.shuffle(&mut r);
        let (mut community, moved) = move_nodes(&level, resolution, &order);
        if !moved {
            break;
        }
        let n_comm = renumber(&mut community);
        for a in assignment.iter_mut() {
            *a = community[*a];
        }
        level = aggregate(&level, &community, n_comm);
    }
    renumber(&mut assignment);
    let q = modularity(network, &assignment, resolution);
    let map = network
        .nodes()
        .iter()
        .cloned()
        .zip(assignment)
        .collect();
    Ok(Partition {
        assignment: map,
        modularity: q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clique_pair(n: usize) -> SimilarityNetwork {
        let nodes: Vec<String> = (0..2 * n).map(|i| format!("n{i:03}")).collect();
        let mut edges = Vec::new();
        for block in 0..2 {
            for i in 0..n {
                for j in i + 1..n {
                    edges.push((block * n + i, block * n + j, 1));
                }
            }
        }
        SimilarityNetwork::from_edges(nodes, edges)
    }

    #[test]
    fn two_disjoint_cliques_are_recovered_exactly() {
        let net = clique_pair(10);
        let p = louvain(&net, 1.0, 3).unwrap();
        assert_eq!(p.n_communities(), 2);
        let a = p.assignment["n000"];
        for i in 0..10 {
            assert_eq!(p.assignment[&format!("n{i:03}")], a);
            assert_ne!(p.assignment[&format!("n{:03}", i + 10)], a);
        }
        assert!((p.modularity - 0.5).abs() < 1e-12);
    }

    #[test]
    fn edgeless_graph_keeps_singletons_with_zero_modularity() {
        let nodes = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let net = SimilarityNetwork::from_edges(nodes, vec![]);
        let p = louvain(&net, 1.0, 0).unwrap();
        assert_eq!(p.n_communities(), 3);
        assert_eq!(p.modularity, 0.0);
        assert_eq!(modularity(&net, &[0, 1, 2], 1.0), 0.0);
    }

    #[test]
    fn isolated_node_gets_its_own_community() {
        let mut net = clique_pair(5);
        let mut nodes = net.nodes().to_vec();
        nodes.push("zzz".into());
        net = SimilarityNetwork::from_edges(nodes, net.edges().to_vec());
        let p = louvain(&net, 1.0, 1).unwrap();
        let z = p.assignment["zzz"];
        assert_eq!(p.assignment.values().filter(|c| **c == z).count(), 1);
    }

    #[test]
    fn same_seed_same_partition() {
        let net = clique_pair(8);
        assert_eq!(louvain(&net, 1.0, 5).unwrap(), louvain(&net, 1.0, 5).unwrap());
    }

    #[test]
    fn empty_network_is_an_error() {
        assert!(louvain(&SimilarityNetwork::default(), 1.0, 0).is_err());
    }
}
