use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::graph::RoadGraph;

pub const NO_ARC: u32 = u32::MAX;

/// Static next-arc table: `next[dest * n + node]` is the first arc of a
/// shortest path from `node` to `dest`. Built with one reverse Dijkstra
/// per destination; ties prefer the lower arc index.
#[derive(Debug, Clone)]
pub struct RoutingTable {
    n: usize,
    next: Vec<u32>,
}

#[derive(PartialEq)]
struct Item(f64, u32);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl RoutingTable {
    pub fn build(graph: &RoadGraph) -> RoutingTable {
        let n = graph.node_count();
        let mut next = vec![NO_ARC; n * n];
        let mut dist = vec![f64::INFINITY; n];
        for dest in 0..n {
            dist.iter_mut().for_each(|d| *d = f64::INFINITY);
            let row = &mut next[dest * n..(dest + 1) * n];
            dist[dest] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(Item(0.0, dest as u32));
            while let Some(Item(d, v)) = heap.pop() {
                if d > dist[v as usize] {
                    continue;
                }
                for &a in graph.in_arcs(v) {
                    let arc = graph.arc(a);
                    let u = arc.from as usize;
                    let nd = d + arc.length_m;
                    if nd < dist[u] || (nd == dist[u] && a < row[u]) {
                        if nd < dist[u] {
                            heap.push(Item(nd, u as u32));
                        }
                        dist[u] = nd;
                        row[u] = a;
                    }
                }
            }
        }
        RoutingTable { n, next }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// `None` when `node == dest` or `dest` is unreachable.
    pub fn next_arc(&self, node: u32, dest: u32) -> Option<u32> {
        let a = self.next[dest as usize * self.n + node as usize];
        (a != NO_ARC).then_some(a)
    }

    pub fn reachable(&self, node: u32, dest: u32) -> bool {
        node == dest || self.next_arc(node, dest).is_some()
    }

    /// Node sequence after `node` up to and including `dest`.
    pub fn route(&self, graph: &RoadGraph, node: u32, dest: u32) -> Vec<u32> {
        let mut out = Vec::new();
        let mut at = node;
        while let Some(a) = self.next_arc(at, dest) {
            at = graph.arc(a).to;
            out.push(at);
            if out.len() > self.n {
                break;
            }
        }
        out
    }
}
