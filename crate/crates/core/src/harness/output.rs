//! CSV and digest writers. Nothing here depends on wall-clock time except
//! `timing.csv`, so repeated runs produce identical files.

use std::io::Write;

use crate::error::{Result, SimError};
use crate::kernel::{RunCounters, SessionRecord, StepMetrics, Trace};

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn row<W: Write, I, T>(w: &mut csv::Writer<W>, fields: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(fields).map_err(|e| SimError::Io(e.into()))
}

pub const METRICS_HEADER: [&str; 8] =
    ["step", "lp_loads", "local_msgs", "remote_msgs", "bytes_remote", "active_sessions", "vehicles", "emissions_g"];

/// One row per coarse step. Per-LP loads are `;`-joined in LP order.
pub fn write_metrics<W: Write>(metrics: &[StepMetrics], w: W) -> Result<()> {
    let mut w = writer(w);
    row(&mut w, METRICS_HEADER)?;
    for m in metrics {
        let loads = m.lp_loads.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(";");
        row(
            &mut w,
            [
                m.step.to_string(),
                loads,
                m.local_msgs.to_string(),
                m.remote_msgs.to_string(),
                m.bytes_remote.to_string(),
                m.active_sessions.to_string(),
                m.population.to_string(),
                format!("{:.6}", m.quantity),
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing<W: Write>(metrics: &[StepMetrics], w: W) -> Result<()> {
    let mut w = writer(w);
    row(&mut w, ["step", "wall_ms"])?;
    for m in metrics {
        row(&mut w, [m.step.to_string(), format!("{:.3}", m.wall_ms)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sessions<W: Write>(sessions: &[SessionRecord], ratio: u64, w: W) -> Result<()> {
    let mut w = writer(w);
    row(
        &mut w,
        ["session", "trigger", "s0", "s1", "region", "vehicles_in", "vehicles_out", "fine_steps", "expected_fine_steps"],
    )?;
    for s in sessions {
        let region = s.region.iter().map(|e| e.0.to_string()).collect::<Vec<_>>().join(";");
        row(
            &mut w,
            [
                s.id.to_string(),
                s.trigger.as_str().to_string(),
                s.s0.to_string(),
                s.s1.to_string(),
                region,
                s.vehicles_in.to_string(),
                s.vehicles_out.to_string(),
                s.fine_steps.to_string(),
                (ratio * (s.s1 - s.s0)).to_string(),
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Fine-step samples of one session.
pub fn write_session_detail<W: Write>(s: &SessionRecord, w: W) -> Result<()> {
    let mut w = writer(w);
    row(&mut w, ["fine_step", "vehicles", "mean_speed_mps", "emissions_g", "informed"])?;
    for d in &s.detail {
        row(
            &mut w,
            [
                d.fine_step.to_string(),
                d.population.to_string(),
                format!("{:.6}", d.mean_speed_mps),
                format!("{:.6}", d.emissions_g),
                d.informed.to_string(),
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_counters<W: Write>(c: &RunCounters, w: W) -> Result<()> {
    let mut w = writer(w);
    row(&mut w, ["counter", "value"])?;
    for (k, v) in [
        ("sent", c.sent),
        ("delivered", c.delivered),
        ("dropped_at_horizon", c.dropped_at_horizon),
        ("causality_violations", c.causality_violations),
        ("max_eos_spread", c.max_eos_spread),
        ("off_boundary_deliveries", c.off_boundary_deliveries),
        ("publications", c.publications),
        ("publication_deliveries", c.publication_deliveries),
    ] {
        row(&mut w, [k.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Text digest summary: step count, initial and final chained hashes, then
/// one `step hash` line per step.
pub fn write_digest_file<W: Write>(trace: &Trace, mut w: W) -> Result<()> {
    writeln!(w, "steps {}", trace.len())?;
    writeln!(w, "initial {}", trace.initial.hash)?;
    writeln!(w, "final {}", trace.final_hash())?;
    for r in &trace.steps {
        writeln!(w, "{} {}", r.step, r.hash)?;
    }
    w.flush()?;
    Ok(())
}
