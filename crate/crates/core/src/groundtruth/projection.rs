use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::LikeGraph;
use crate::error::Result;
use crate::io::CsvBuffer;

/// Weighted undirected user-similarity network.
///
/// Nodes are sorted user ids; edges are stored once with `u < v` (by node
/// index) and weight = number of pivot tweets liked by both users.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimilarityNetwork {
    nodes: Vec<String>,
    edges: Vec<(usize, usize, u64)>,
}

impl SimilarityNetwork {
    pub fn from_edges(nodes: Vec<String>, mut edges: Vec<(usize, usize, u64)>) -> Self {
        for e in &mut edges {
            if e.0 > e.1 {
                *e = (e.1, e.0, e.2);
            }
        }
        edges.retain(|e| e.0 != e.1 && e.2 > 0);
        edges.sort_unstable();
        SimilarityNetwork { nodes, edges }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize, u64)] {
        &self.edges
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn weight(&self, a: &str, b: &str) -> u64 {
        let (Ok(i), Ok(j)) = (
            self.nodes.binary_search_by(|n| n.as_str().cmp(a)),
            self.nodes.binary_search_by(|n| n.as_str().cmp(b)),
        ) else {
            return 0;
        };
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search_by(|e| (e.0, e.1).cmp(&key))
            .map(|k| self.edges[k].2)
            .unwrap_or(0)
    }

    /// Adjacency lists with both directions.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(u, v, w) in &self.edges {
            adj[u].push((v, w as f64));
            adj[v].push((u, w as f64));
        }
        adj
    }

    /// Edge-list CSV `u,v,w` for external visualization.
    pub fn write_edge_list(&self, path: &Path, provenance: Option<&str>) -> Result<()> {
        let mut csv = CsvBuffer::new(provenance, &["u", "v", "w"])?;
        for &(u, v, w) in &self.edges {
            csv.row([self.nodes[u].as_str(), self.nodes[v].as_str(), &w.to_string()])?;
        }
        csv.write_to(path)
    }
}

/// Projects the bipartite like graph onto its users.
pub fn project_bipartite(likes: &LikeGraph) -> SimilarityNetwork {
    let nodes: Vec<String> = likes.users().into_iter().map(str::to_string).collect();
    let index: HashMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut likers: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (user, tweet) in likes.edges() {
        likers.entry(tweet).or_default().push(index[user]);
    }
    let mut weights: HashMap<(usize, usize), u64> = HashMap::new();
    for users in likers.values() {
        for (a, &u) in users.iter().enumerate() {
            for &v in &users[a + 1..] {
                *weights.entry((u.min(v), u.max(v))).or_default() += 1;
            }
        }
    }
    let edges = weights.into_iter().map(|((u, v), w)| (u, v, w)).collect();
    SimilarityNetwork::from_edges(nodes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::BTreeSet;

    fn graph(likes: &[(&str, &str)]) -> LikeGraph {
        let tweets: BTreeSet<&str> = likes.iter().map(|l| l.1).collect();
        let tp = tweets
            .into_iter()
            .map(|t| (t.to_string(), "P".to_string()))
            .collect();
        let mut g = LikeGraph::new(tp);
        for (u, t) in likes {
            g.add_like(*u, *t);
        }
        g
    }

    #[test]
    fn co_likes_become_weights() {
        let g = graph(&[("a", "t1"), ("a", "t2"), ("b", "t1"), ("b", "t2"), ("c", "t3")]);
        let net = project_bipartite(&g);
        assert_eq!(net.weight("a", "b"), 2);
        assert_eq!(net.weight("b", "a"), 2);
        assert_eq!(net.weight("a", "c"), 0);
        assert_eq!(net.edges().len(), 1);
        assert_eq!(net.n_nodes(), 3);
    }

    #[test]
    fn empty_graph_projects_to_empty_network() {
        let net = project_bipartite(&LikeGraph::default());
        assert_eq!(net.n_nodes(), 0);
        assert!(net.edges().is_empty());
    }

    #[test]
    fn random_graph_matches_pairwise_intersections() {
        let mut r = crate::rng::seeded(11);
        let users = ["u0", "u1", "u2", "u3", "u4"];
        let tweets: Vec<String> = (0..8).map(|i| format!("t{i}")).collect();
        let mut pairs = Vec::new();
        for _ in 0..20 {
            let u = users[r.random_range(0..5)];
            let t = tweets[r.random_range(0..8)].clone();
            pairs.push((u, t));
        }
        let tp = tweets.iter().map(|t| (t.clone(), "P".to_string())).collect();
        let mut g = LikeGraph::new(tp);
        for (u, t) in &pairs {
            g.add_like(*u, t.clone());
        }
        let net = project_bipartite(&g);
        for a in users {
            for b in users {
                if a >= b {
                    continue;
                }
                let la: BTreeSet<_> = pairs.iter().filter(|p| p.0 == a).map(|p| &p.1).collect();
                let lb: BTreeSet<_> = pairs.iter().filter(|p| p.0 == b).map(|p| &p.1).collect();
                let expected = la.intersection(&lb).count() as u64;
                assert_eq!(net.weight(a, b), expected, "{a} {b}");
            }
        }
    }
}
