use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::graph::RoadGraph;

/// Raw directed betweenness per node, in graph node order.
#[derive(Debug, Clone, PartialEq)]
pub struct BetweennessScores {
    pub node_ids: Vec<u64>,
    pub scores: Vec<f64>,
}

impl BetweennessScores {
    pub fn get(&self, node_id: u64) -> Option<f64> {
        self.node_ids.iter().position(|&n| n == node_id).map(|i| self.scores[i])
    }

    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(0.0, f64::max)
    }
}

/// Path-count arithmetic for the Brandes accumulation.
pub trait PathCount:
    Clone + Zero + One + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
}

impl PathCount for f64 {}
impl PathCount for BigRational {}

#[derive(PartialEq)]
struct Pending {
    dist: f64,
    node: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Brandes accumulation over a weighted directed adjacency list.
///
/// Distances are compared exactly, so ties only count as equal-length
/// paths when their sums are bit-identical.
pub fn brandes<T: PathCount>(adjacency: &[Vec<(usize, f64)>]) -> Vec<T> {
    let n = adjacency.len();
    let mut score = vec![T::zero(); n];
    let mut dist = vec![f64::INFINITY; n];
    let mut sigma = vec![T::zero(); n];
    let mut delta = vec![T::zero(); n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut settled = vec![false; n];
    for s in 0..n {
        for v in 0..n {
            dist[v] = f64::INFINITY;
            sigma[v] = T::zero();
            delta[v] = T::zero();
            preds[v].clear();
            settled[v] = false;
        }
        order.clear();
        dist[s] = 0.0;
        sigma[s] = T::one();
        let mut heap = BinaryHeap::new();
        heap.push(Pending { dist: 0.0, node: s });
        while let Some(Pending { dist: d, node: v }) = heap.pop() {
            if settled[v] || d > dist[v] {
                continue;
            }
            settled[v] = true;
            order.push(v);
            for &(w, len) in &adjacency[v] {
                let nd = d + len;
                if nd < dist[w] {
                    dist[w] = nd;
                    sigma[w] = sigma[v].clone();
                    preds[w].clear();
                    preds[w].push(v);
                    heap.push(Pending { dist: nd, node: w });
                } else if nd == dist[w] && !settled[w] {
                    sigma[w] = sigma[w].clone() + sigma[v].clone();
                    preds[w].push(v);
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                let share = sigma[v].clone() / sigma[w].clone() * (T::one() + delta[w].clone());
                delta[v] = delta[v].clone() + share;
            }
            if w != s {
                score[w] = score[w].clone() + delta[w].clone();
            }
        }
    }
    score
}

/// Adjacency by node index with arc lengths as weights. Parallel arcs are
/// kept, so they count as distinct shortest paths.
pub fn adjacency(graph: &RoadGraph) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); graph.node_count()];
    for a in &graph.arcs {
        adj[a.from as usize].push((a.to as usize, a.length_m));
    }
    adj
}

pub fn betweenness(graph: &RoadGraph) -> BetweennessScores {
    BetweennessScores {
        node_ids: graph.nodes.iter().map(|n| n.id).collect(),
        scores: brandes::<f64>(&adjacency(graph)),
    }
}

/// Same accumulation with exact rational path counts.
pub fn betweenness_exact(graph: &RoadGraph) -> Vec<BigRational> {
    brandes::<BigRational>(&adjacency(graph))
}

pub fn rational_from_int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// `k` node ids by descending score, ties by ascending id.
pub fn top_k_critical(scores: &BetweennessScores, k: usize) -> Vec<u64> {
    let mut ranked: Vec<(u64, f64)> = scores.node_ids.iter().copied().zip(scores.scores.iter().copied()).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().take(k).map(|(id, _)| id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::graph::{EdgeSpec, Node};

    fn graph(n: u64, edges: &[(u64, u64, f64, bool)]) -> RoadGraph {
        let nodes = (0..n).map(|id| Node { id, lat: 0.0, lon: 0.0 }).collect();
        let edges = edges
            .iter()
            .enumerate()
            .map(|(i, &(from, to, length_m, oneway))| EdgeSpec {
                id: i as u64,
                from,
                to,
                length_m,
                oneway,
                lanes: 1,
                capacity_per_step: 1,
            })
            .collect();
        RoadGraph::from_parts(nodes, edges).unwrap()
    }

    #[test]
    fn path_of_three() {
        let g = graph(3, &[(0, 1, 10.0, false), (1, 2, 10.0, false)]);
        let s = betweenness(&g);
        assert_eq!(s.scores, vec![0.0, 2.0, 0.0]);
        assert_eq!(top_k_critical(&s, 1), vec![1]);
        assert!(top_k_critical(&s, 0).is_empty());
        assert_eq!(top_k_critical(&s, 10), vec![1, 0, 2]);
    }

    #[test]
    fn star_center_counts_ordered_leaf_pairs() {
        let g = graph(4, &[(0, 1, 5.0, false), (0, 2, 5.0, false), (0, 3, 5.0, false)]);
        let s = betweenness(&g);
        assert_eq!(s.get(0), Some(6.0));
        assert_eq!(s.get(1), Some(0.0));
    }

    #[test]
    fn isolated_node_scores_zero() {
        let g = graph(3, &[(0, 1, 1.0, false)]);
        assert_eq!(betweenness(&g).get(2), Some(0.0));
    }

    #[test]
    fn equal_paths_split_credit() {
        // square 0-1-3 and 0-2-3, both length 2
        let g = graph(
            4,
            &[(0, 1, 1.0, true), (1, 3, 1.0, true), (0, 2, 1.0, true), (2, 3, 1.0, true)],
        );
        let s = betweenness_exact(&g);
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        assert_eq!(s[1], half);
        assert_eq!(s[2], half);
    }
}
