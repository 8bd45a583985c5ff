//! Refine a stretch of a ring road to the cellular model for thirty coarse
//! steps and print the conservation audit plus fine-step samples.
//!
//! cargo run --example refinement_session

use melsim::kernel::{advance_sequential, RunOptions};
use melsim::traffic::ring_demo;

fn main() -> melsim::Result<()> {
    let sc = ring_demo(5, 100).build()?;
    let mut opts = RunOptions::new(60);
    opts.coordinator = sc.coordinator.clone();
    let ratio = sc.model.net.ratio;
    let report = advance_sequential(&sc.model, &mut sc.state.clone(), &opts)?;

    for s in &report.sessions {
        let region: Vec<_> = s.region.iter().map(|e| e.0).collect();
        println!(
            "session {} arcs {region:?} steps [{}, {}): in {} out {}, fine steps {} (R={ratio})",
            s.id, s.s0, s.s1, s.vehicles_in, s.vehicles_out, s.fine_steps
        );
        println!("  fine  vehicles  mean_speed  emissions_g  informed");
        for d in s.detail.iter().step_by(10) {
            println!(
                "  {:>4}  {:>8}  {:>10.2}  {:>11.1}  {:>8}",
                d.fine_step, d.population, d.mean_speed_mps, d.emissions_g, d.informed
            );
        }
    }
    println!("off-boundary cross-level deliveries: {}", report.counters.off_boundary_deliveries);
    let pops: Vec<_> = report.metrics.iter().map(|m| m.population).collect();
    println!("population min {} max {}", pops.iter().min().unwrap(), pops.iter().max().unwrap());
    Ok(())
}
