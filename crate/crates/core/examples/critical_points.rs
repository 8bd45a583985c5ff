//! Rank the intersections of a generated grid by betweenness and check the
//! float scores against exact rational arithmetic.
//!
//! cargo run --example critical_points -- 6 4

use melsim::traffic::generators::grid;
use melsim::traffic::{betweenness, betweenness_exact, top_k_critical};
use num_traits::ToPrimitive;

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("grid size"));
    let cols = args.next().unwrap_or(6);
    let rows = args.next().unwrap_or(4);
    let g = grid(cols, rows, 150.0, 2);
    let scores = betweenness(&g);
    let exact = betweenness_exact(&g);
    println!("{cols}x{rows} grid: {} nodes, {} arcs", g.node_count(), g.arc_count());

    let worst = scores
        .scores
        .iter()
        .zip(&exact)
        .map(|(f, q)| (f - q.to_f64().unwrap()).abs())
        .fold(0.0, f64::max);
    println!("largest float vs exact difference: {worst:e}");

    println!("rank  node  score");
    for (rank, id) in top_k_critical(&scores, 5).into_iter().enumerate() {
        println!("{:>4}  {:>4}  {:.1}", rank + 1, id, scores.get(id).unwrap());
    }
}
