//! Drive the batch harness from a configuration file: analyze, simulate and
//! verify into one output directory.
//!
//! cargo run --example config_run [-- path/to/config.json]

use std::path::PathBuf;

use melsim::harness::{cmd_analyze, cmd_simulate, cmd_verify, load_config, render_verify};

fn main() -> melsim::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/small_town.json"));
    let cfg = load_config(&path)?;
    let out = std::env::temp_dir().join("melsim-config-run");

    let a = cmd_analyze(&cfg, &out)?;
    println!("analyze: {} nodes, {} arcs, top node {:?}", a.nodes, a.arcs, a.ranking.first());
    let s = cmd_simulate(&cfg, &out, None, false)?;
    println!(
        "simulate: {} steps, {} sessions, {} migrations, final {}",
        s.report.trace.len(),
        s.report.sessions.len(),
        s.report.migrations.len(),
        s.report.trace.final_hash()
    );
    let v = cmd_verify(&cfg, &out, &[1, 2, 3], None, false)?;
    render_verify(&v, std::io::stdout().lock())?;
    println!("outputs in {}", out.display());
    Ok(())
}
