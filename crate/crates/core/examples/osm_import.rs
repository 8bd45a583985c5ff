//! Import an OpenStreetMap-style JSON extract, print the resulting arcs and
//! the most central junction.
//!
//! cargo run --example osm_import [-- path/to/extract.json]

use std::path::PathBuf;

use melsim::traffic::{betweenness, load_graph, top_k_critical, GraphFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/osm_extract.json"));
    let g = load_graph(&std::fs::read(&path)?, GraphFormat::OsmExtract)?;
    println!("{}: {} junctions, {} arcs", path.display(), g.node_count(), g.arc_count());
    println!("arc  edge_id  from -> to  length_m  lanes  cells");
    for a in &g.arcs {
        println!(
            "{:>3}  {:>7}  {:>4} -> {:<3} {:>8.1}  {:>5}  {:>5}",
            a.index,
            a.edge_id,
            g.nodes[a.from as usize].id,
            g.nodes[a.to as usize].id,
            a.length_m,
            a.lanes,
            a.cell_count
        );
    }
    let scores = betweenness(&g);
    if let Some(&hub) = top_k_critical(&scores, 1).first() {
        println!("most central junction: node {hub} (score {})", scores.get(hub).unwrap());
    }
    Ok(())
}
