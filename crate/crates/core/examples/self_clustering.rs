//! Two cliques start interleaved over two LPs; migration pulls each clique
//! onto one LP and the remote-message share falls toward the 5% floor.

use melsim::kernel::{init_simulation, KernelConfig, RunOptions};
use melsim::migration::MigrationParams;
use melsim::models::ChatterModel;
use melsim::pads::{make_partition, run_parallel, PartitionStrategy};

fn main() -> melsim::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let model = ChatterModel::two_cliques(64);
    let state = init_simulation(&KernelConfig { seed }, model.entities())?;
    let partition = make_partition(&state.entity_ids(), 2, PartitionStrategy::RoundRobin)?;
    let mut opts = RunOptions::new(200);
    opts.migration = Some(MigrationParams::default());
    let report = run_parallel(&model, state, &partition, &opts)?;

    let window = 10;
    for chunk in report.metrics.chunks(window) {
        let local: u64 = chunk.iter().map(|m| m.local_msgs).sum();
        let remote: u64 = chunk.iter().map(|m| m.remote_msgs).sum();
        let last = chunk.last().expect("non-empty chunk");
        println!(
            "steps {:>3}-{:>3}  remote ratio {:.3}  loads {:?}",
            chunk[0].step,
            last.step,
            remote as f64 / (local + remote).max(1) as f64,
            last.lp_loads
        );
    }
    println!("{} migrations", report.migrations.len());
    Ok(())
}
