//! Run the same model sequentially and on several LPs, with and without
//! migration, and compare trace digests.
//!
//! cargo run --release --example sequential_vs_parallel

use std::time::Instant;

use melsim::kernel::{advance_sequential, init_simulation, KernelConfig, RunOptions};
use melsim::migration::MigrationParams;
use melsim::models::ChatterModel;
use melsim::pads::{advance_parallel, make_partition, PartitionStrategy};
use melsim::traffic::ring_demo;

fn main() -> melsim::Result<()> {
    let model = ChatterModel {
        publish_every: Some(7),
        max_latency: 2,
        ..ChatterModel::two_cliques(64)
    };
    let state = init_simulation(&KernelConfig { seed: 42 }, model.entities())?;
    let mut opts = RunOptions::new(150);
    opts.topics = model.topics();
    let seq = advance_sequential(&model, &mut state.clone(), &opts)?;
    println!("chatter sequential  {}", seq.trace.final_hash());
    for n in [1, 2, 4, 8] {
        for migrate in [false, true] {
            let mut o = opts.clone();
            o.migration = migrate.then(MigrationParams::default);
            let p = make_partition(&state.entity_ids(), n, PartitionStrategy::RoundRobin)?;
            let t = Instant::now();
            let par = advance_parallel(&model, &mut state.clone(), &p, &o)?;
            println!(
                "chatter lps={n} migration={migrate:<5} {} {} moves={} ({:.0} ms)",
                par.trace.final_hash(),
                if par.trace == seq.trace { "match" } else { "MISMATCH" },
                par.migrations.len(),
                t.elapsed().as_secs_f64() * 1e3
            );
        }
    }

    let sc = ring_demo(5, 100).build()?;
    let mut opts = RunOptions::new(60);
    opts.coordinator = sc.coordinator.clone();
    let seq = advance_sequential(&sc.model, &mut sc.state.clone(), &opts)?;
    println!("traffic sequential  {}", seq.trace.final_hash());
    for n in [2, 4] {
        let p = make_partition(&sc.state.entity_ids(), n, PartitionStrategy::Block)?;
        let par = advance_parallel(&sc.model, &mut sc.state.clone(), &p, &opts)?;
        match par.trace.first_divergence(&seq.trace) {
            None => println!("traffic lps={n} match"),
            Some(d) => println!("traffic lps={n} diverges at {:?}", d),
        }
    }
    Ok(())
}
