//! Synthetic road networks for demos and tests.

use super::graph::{EdgeSpec, Node, RoadGraph};

const METERS_PER_DEGREE: f64 = 111_195.0;

fn node(id: u64, x_m: f64, y_m: f64) -> Node {
    Node {
        id,
        lat: y_m / METERS_PER_DEGREE,
        lon: x_m / METERS_PER_DEGREE,
    }
}

/// `cols × rows` lattice of two-way streets. Node id = y·cols + x.
pub fn grid(cols: u64, rows: u64, spacing_m: f64, capacity_per_step: u32) -> RoadGraph {
    let mut nodes = Vec::new();
    for y in 0..rows {
        for x in 0..cols {
            nodes.push(node(y * cols + x, x as f64 * spacing_m, y as f64 * spacing_m));
        }
    }
    let mut edges = Vec::new();
    let mut push = |from: u64, to: u64| {
        edges.push(EdgeSpec {
            id: edges.len() as u64,
            from,
            to,
            length_m: spacing_m,
            oneway: false,
            lanes: 1,
            capacity_per_step,
        })
    };
    for y in 0..rows {
        for x in 0..cols {
            let id = y * cols + x;
            if x + 1 < cols {
                push(id, id + 1);
            }
            if y + 1 < rows {
                push(id, id + cols);
            }
        }
    }
    RoadGraph::from_parts(nodes, edges).expect("grid is well formed")
}

/// One-way ring of `n` nodes; arc i runs from node i to node i+1 mod n.
pub fn ring(n: u64, arc_length_m: f64, capacity_per_step: u32) -> RoadGraph {
    let radius = n as f64 * arc_length_m / std::f64::consts::TAU;
    let nodes = (0..n)
        .map(|i| {
            let a = i as f64 / n as f64 * std::f64::consts::TAU;
            node(i, radius * a.cos(), radius * a.sin())
        })
        .collect();
    let edges = (0..n)
        .map(|i| EdgeSpec {
            id: i,
            from: i,
            to: (i + 1) % n,
            length_m: arc_length_m,
            oneway: true,
            lanes: 1,
            capacity_per_step,
        })
        .collect();
    RoadGraph::from_parts(nodes, edges).expect("ring is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arc_count() {
        let g = grid(36, 36, 100.0, 2);
        assert_eq!(g.arc_count(), 2 * 2 * 36 * 35);
        assert_eq!(g.node_count(), 1296);
    }

    #[test]
    fn ring_is_one_way_cycle() {
        let g = ring(5, 75.0, 2);
        assert_eq!(g.arc_count(), 5);
        assert_eq!(g.downstream(4), &[0]);
        assert_eq!(g.upstream(0), &[4]);
    }
}
