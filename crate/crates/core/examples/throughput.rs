//! Coarse-only city-scale run: 25,000 vehicles on a generated grid of about
//! 5,000 arcs, measured on a configurable number of LPs.
//!
//! cargo run --release --example throughput -- 4 100

use std::time::Instant;

use melsim::kernel::RunOptions;
use melsim::pads::{run_parallel, make_partition, PartitionStrategy};
use melsim::traffic::generators::grid;
use melsim::traffic::ScenarioSpec;

fn main() -> melsim::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("number"));
    let lps = args.next().unwrap_or(4) as usize;
    let horizon = args.next().unwrap_or(100);

    let mut spec = ScenarioSpec::new(1, grid(36, 36, 120.0, 2), 25_000);
    spec.fine_step = None;
    let t = Instant::now();
    let sc = spec.build()?;
    println!("built {} links with 25000 vehicles in {:.2} s", sc.state.len(), t.elapsed().as_secs_f64());

    let p = make_partition(&sc.state.entity_ids(), lps, PartitionStrategy::Block)?;
    let t = Instant::now();
    let report = run_parallel(&sc.model, sc.state, &p, &RunOptions::new(horizon))?;
    let secs = t.elapsed().as_secs_f64();
    let last = report.metrics.last().expect("non-empty run");
    let remote: u64 = report.metrics.iter().map(|m| m.remote_msgs).sum();
    let local: u64 = report.metrics.iter().map(|m| m.local_msgs).sum();
    println!(
        "{horizon} steps on {lps} LPs in {secs:.2} s ({:.1} steps/s), vehicles {}, messages {} local / {} remote",
        horizon as f64 / secs,
        last.population,
        local,
        remote
    );
    Ok(())
}
