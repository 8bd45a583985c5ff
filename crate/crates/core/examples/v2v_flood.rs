//! Hazard flood over unit-disk V2V links among vehicles spread along a
//! straight road.
//!
//! cargo run --example v2v_flood -- 250

use melsim::kernel::EntityId;
use melsim::kernel::RandomStream;
use melsim::traffic::{wireless_neighbors, FloodState};

fn main() {
    let range: f64 = std::env::args().nth(1).map_or(250.0, |a| a.parse().expect("range in m"));
    let mut rng = RandomStream::new(3, EntityId(0), 0);
    let mut positions: Vec<(f64, f64)> = (0..60).map(|_| (rng.uniform() * 3000.0, rng.uniform() * 10.0)).collect();
    positions.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ids: Vec<EntityId> = (0..positions.len() as u64).map(EntityId).collect();

    let degree: usize = wireless_neighbors(&positions, range).iter().map(Vec::len).sum();
    println!("{} vehicles, range {range} m, mean degree {:.1}", ids.len(), degree as f64 / ids.len() as f64);

    let mut flood = FloodState::start(ids[0], 0);
    let mut f = 0;
    while !flood.pending.is_empty() {
        flood.advance(&ids, &positions, range, f);
        f += 1;
        println!("fine step {f:>2}: informed {:>2}", flood.informed.len());
    }
    println!(
        "reached {}/{} vehicles, {} broadcasts, {} deliveries, max latency {} steps",
        flood.informed.len(),
        ids.len(),
        flood.broadcasts,
        flood.deliveries,
        flood.max_latency()
    );
}
