//! Batch front end: configuration loading plus the analyze, simulate and
//! verify commands. Every command writes CSV files into an output
//! directory and returns a summary the caller can turn into an exit code.

pub mod config;
mod output;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::info;

pub use config::{parse_config, Config, ConfigErrors, GraphSource, LevelConfig, RegionSelector, ScenarioConfig, SessionConfig, TriggerConfig};
pub use output::{write_digest_file, write_metrics, write_sessions, write_timing};

use crate::error::{Result, SimError};
use crate::kernel::{advance_sequential, Divergence, EntityId, Progress, RunOptions, RunReport};
use crate::migration::write_migration_log;
use crate::multilevel::LevelKind;
use crate::pads::{advance_parallel, geographic_partition, make_partition, FaultHook, Partition, PartitionStrategy};
use crate::traffic::centrality::top_k_critical;
use crate::traffic::generators::{grid, ring};
use crate::traffic::{betweenness, load_graph, AutoTrigger, DemandTable, RoadGraph, Scenario, ScenarioSpec, ScheduledSession, TrafficParams};

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(parse_config(&text, base)?)
}

pub fn load_scenario_graph(source: &GraphSource) -> Result<RoadGraph> {
    match source {
        GraphSource::File { path, format } => {
            let bytes = fs::read(path).map_err(|e| SimError::Config(format!("scenario.graph: {}: {e}", path.display())))?;
            load_graph(&bytes, *format).map_err(|e| SimError::Config(format!("scenario.graph: {}: {e}", path.display())))
        }
        GraphSource::Grid {
            cols,
            rows,
            spacing_m,
            capacity,
        } => Ok(grid(*cols, *rows, *spacing_m, *capacity)),
        GraphSource::Ring {
            arcs,
            arc_length_m,
            capacity,
        } => Ok(ring(*arcs, *arc_length_m, *capacity)),
    }
}

/// Translates a validated configuration into a runnable scenario description.
pub fn scenario_spec(cfg: &Config) -> Result<ScenarioSpec> {
    let sc = &cfg.scenario;
    let graph = load_scenario_graph(&sc.graph)?;
    let mut spec = ScenarioSpec::new(cfg.seed, graph, sc.vehicles);
    spec.params = TrafficParams {
        nasch: sc.nasch,
        speed_limit_mps: sc.speed_limit_mps,
        closed: sc.closed,
        emissions: sc.emissions,
        v2v_range_m: sc.v2v_range_m,
        ..TrafficParams::default()
    };
    spec.demand = DemandTable::new(sc.demand.iter().copied());
    spec.coarse_step = cfg.levels[0].step_size;
    spec.fine_step = cfg.levels.get(1).filter(|l| l.kind == LevelKind::TimeStepped).map(|l| l.step_size);
    match &sc.trigger {
        TriggerConfig::None => {}
        TriggerConfig::Manual(sessions) => {
            for (i, s) in sessions.iter().enumerate() {
                let region = match &s.region {
                    RegionSelector::Arcs(a) => a.clone(),
                    RegionSelector::AroundNode(node) => {
                        let idx = spec.graph.node_index(*node).ok_or_else(|| {
                            SimError::Config(format!("scenario.trigger.sessions[{i}].around_node: no node with id {node}"))
                        })?;
                        spec.region_around(idx)
                    }
                };
                spec.sessions.push(ScheduledSession { region, s0: s.s0, s1: s.s1 });
            }
        }
        TriggerConfig::Automatic {
            density_threshold,
            top_k,
            min_session_len,
        } => {
            spec.auto = Some(AutoTrigger {
                density_threshold: *density_threshold,
                top_k: *top_k,
                min_session_len: *min_session_len,
            })
        }
    }
    Ok(spec)
}

/// Initial LP assignment for a traffic scenario. Geographic partitioning
/// places each link at its arc midpoint.
pub fn scenario_partition(scenario: &Scenario, n_lps: usize, strategy: PartitionStrategy) -> Result<Partition> {
    let ids = scenario.state.entity_ids();
    if strategy != PartitionStrategy::Geographic {
        return make_partition(&ids, n_lps, strategy);
    }
    let g = &scenario.model.net.graph;
    let origin = g.nodes.first().map_or((0.0, 0.0), |n| (n.lat, n.lon));
    let has_coords = g.nodes.iter().any(|n| n.lat != origin.0 || n.lon != origin.1);
    if !has_coords {
        return make_partition(&ids, n_lps, PartitionStrategy::Block);
    }
    let placed: Vec<(EntityId, (f64, f64))> = ids
        .iter()
        .map(|&id| {
            let p = if (id.0 as usize) < g.arc_count() {
                g.arc_point_m(id.0 as u32, 0.5, origin)
            } else {
                (0.0, 0.0)
            };
            (id, p)
        })
        .collect();
    let mut p = geographic_partition(&placed, n_lps)?;
    p.strategy = PartitionStrategy::Geographic;
    Ok(p)
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| SimError::Config(format!("output directory {}: {e}", out.display())))
}

fn csv_err(e: csv::Error) -> SimError {
    SimError::Io(e.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeSummary {
    pub nodes: usize,
    pub arcs: usize,
    pub max_score: f64,
    /// Node ids by descending score.
    pub ranking: Vec<u64>,
}

/// Betweenness scores, the critical-node ranking and graph statistics.
pub fn cmd_analyze(cfg: &Config, out: &Path) -> Result<AnalyzeSummary> {
    let graph = load_scenario_graph(&cfg.scenario.graph)?;
    create_dir(out)?;
    let scores = betweenness(&graph);
    let k = cfg.scenario.top_k.unwrap_or(scores.node_ids.len());
    let ranking = top_k_critical(&scores, k);

    let mut w = csv::Writer::from_path(out.join("scores.csv")).map_err(csv_err)?;
    w.write_record(["node_id", "score"]).map_err(csv_err)?;
    for (id, s) in scores.node_ids.iter().zip(&scores.scores) {
        w.write_record([id.to_string(), s.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("critical.csv")).map_err(csv_err)?;
    w.write_record(["rank", "node_id", "score"]).map_err(csv_err)?;
    for (rank, id) in ranking.iter().enumerate() {
        let s = scores.get(*id).unwrap_or(0.0);
        w.write_record([(rank + 1).to_string(), id.to_string(), s.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;

    let summary = AnalyzeSummary {
        nodes: graph.node_count(),
        arcs: graph.arc_count(),
        max_score: scores.max(),
        ranking,
    };
    let mut w = csv::Writer::from_path(out.join("summary.csv")).map_err(csv_err)?;
    w.write_record(["nodes", "arcs", "max_score"]).map_err(csv_err)?;
    w.write_record([summary.nodes.to_string(), summary.arcs.to_string(), summary.max_score.to_string()]).map_err(csv_err)?;
    w.flush()?;
    info!("analyze: {} nodes, {} arcs, max score {}", summary.nodes, summary.arcs, summary.max_score);
    Ok(summary)
}

/// Prints completed steps per second to stderr until dropped.
struct ProgressPrinter {
    stop: Arc<AtomicBool>,
    handle: Option<thread::JoinHandle<()>>,
}

impl ProgressPrinter {
    fn start(progress: Progress, horizon: u64, label: String) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = thread::spawn(move || {
            let started = Instant::now();
            let mut last = (0u64, Instant::now());
            while !flag.load(Ordering::Relaxed) {
                thread::sleep(Duration::from_millis(200));
                if last.1.elapsed() < Duration::from_secs(1) {
                    continue;
                }
                let done = progress.completed();
                let rate = (done - last.0.min(done)) as f64 / last.1.elapsed().as_secs_f64();
                eprintln!("{label}: step {done}/{horizon}, {rate:.1} steps/s");
                last = (done, Instant::now());
            }
            let done = progress.completed();
            let secs = started.elapsed().as_secs_f64().max(1e-9);
            eprintln!("{label}: {done}/{horizon} steps in {secs:.2} s, {:.1} steps/s", done as f64 / secs);
        });
        ProgressPrinter { stop, handle: Some(handle) }
    }
}

impl Drop for ProgressPrinter {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn run_options(cfg: &Config, scenario: &Scenario) -> RunOptions {
    let mut o = RunOptions::new(cfg.horizon);
    o.coordinator = scenario.coordinator.clone();
    o.migration = cfg.migration;
    o
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub report: RunReport,
    pub n_lps: usize,
    pub ratio: u64,
    pub files: Vec<PathBuf>,
}

/// Checks the invariants a finished run must satisfy.
pub fn check_run(report: &RunReport, ratio: u64, expected_population: Option<u64>) -> Result<()> {
    let c = &report.counters;
    let last = report.metrics.last().map_or(0, |m| m.step);
    if c.causality_violations != 0 {
        return Err(SimError::Invariant {
            module: "pads-runtime",
            step: last,
            detail: format!("{} messages arrived for completed steps", c.causality_violations),
        });
    }
    if c.max_eos_spread > 1 {
        return Err(SimError::Invariant {
            module: "pads-runtime",
            step: last,
            detail: format!("end-of-step spread reached {}", c.max_eos_spread),
        });
    }
    if c.off_boundary_deliveries != 0 {
        return Err(SimError::Invariant {
            module: "multilevel-coordinator",
            step: last,
            detail: format!("{} cross-level deliveries off a coarse boundary", c.off_boundary_deliveries),
        });
    }
    for s in &report.sessions {
        if s.vehicles_in != s.vehicles_out {
            return Err(SimError::Invariant {
                module: "multilevel-coordinator",
                step: s.s1,
                detail: format!("session {} took in {} vehicles and returned {}", s.id, s.vehicles_in, s.vehicles_out),
            });
        }
        if s.fine_steps != ratio * (s.s1 - s.s0) {
            return Err(SimError::Invariant {
                module: "multilevel-coordinator",
                step: s.s1,
                detail: format!("session {} ran {} fine steps, expected {}", s.id, s.fine_steps, ratio * (s.s1 - s.s0)),
            });
        }
    }
    if let Some(n) = expected_population {
        if let Some(m) = report.metrics.iter().find(|m| m.population != n) {
            return Err(SimError::Invariant {
                module: "traffic-scenario",
                step: m.step,
                detail: format!("closed network holds {} vehicles, expected {n}", m.population),
            });
        }
    }
    Ok(())
}

/// Runs the configured scenario on `n_lps` threads (the config value unless
/// overridden) and writes every output file. Files are written before the
/// invariant check so a failing run can still be inspected.
pub fn cmd_simulate(cfg: &Config, out: &Path, n_lps: Option<usize>, progress: bool) -> Result<SimulateSummary> {
    let spec = scenario_spec(cfg)?;
    let scenario = spec.build()?;
    let n = n_lps.unwrap_or(cfg.n_lps);
    let partition = scenario_partition(&scenario, n, cfg.partition)?;
    let mut opts = run_options(cfg, &scenario);
    let ratio = scenario.model.net.ratio;
    create_dir(out)?;

    info!("simulate: {} entities, {} steps, {} LPs ({})", scenario.state.len(), cfg.horizon, n, cfg.partition);
    let printer = progress.then(|| {
        let p = Progress::default();
        opts.progress = Some(p.clone());
        ProgressPrinter::start(p, cfg.horizon, "simulate".into())
    });
    let mut state = scenario.state.clone();
    let report = advance_parallel(&scenario.model, &mut state, &partition, &opts);
    drop(printer);
    let report = report?;

    let mut files = Vec::new();
    let mut path = |name: &str| {
        let p = out.join(name);
        files.push(p.clone());
        p
    };
    write_metrics(&report.metrics, fs::File::create(path("metrics.csv"))?)?;
    write_sessions(&report.sessions, ratio, fs::File::create(path("sessions.csv"))?)?;
    for s in &report.sessions {
        output::write_session_detail(s, fs::File::create(path(&format!("session_{}.csv", s.id)))?)?;
    }
    write_migration_log(&report.migrations, fs::File::create(path("migrations.csv"))?)?;
    write_digest_file(&report.trace, fs::File::create(path("trace_digest.txt"))?)?;
    report.trace.write_binary(std::io::BufWriter::new(fs::File::create(path("trace.bin"))?))?;
    output::write_counters(&report.counters, fs::File::create(path("counters.csv"))?)?;
    write_timing(&report.metrics, fs::File::create(path("timing.csv"))?)?;

    // Vehicles stranded at a dead end leave even a closed network, so the
    // head count is only fixed when every node reaches every other.
    let n_nodes = scenario.model.net.graph.node_count() as u32;
    let routing = &scenario.model.net.routing;
    let strongly_connected = (0..n_nodes).all(|a| (0..n_nodes).all(|b| a == b || routing.reachable(a, b)));
    if !strongly_connected {
        info!("simulate: network is not strongly connected, skipping the vehicle count check");
    }
    let expected =
        (cfg.scenario.closed && cfg.scenario.demand.is_empty() && strongly_connected).then_some(cfg.scenario.vehicles);
    check_run(&report, ratio, expected)?;
    info!("simulate: final digest {}", report.trace.final_hash());
    Ok(SimulateSummary { report, n_lps: n, ratio, files })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyRow {
    pub n_lps: usize,
    pub matched: bool,
    pub divergence: Option<Divergence>,
    pub final_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub sequential_digest: String,
    pub rows: Vec<VerifyRow>,
}

impl VerifyReport {
    pub fn all_match(&self) -> bool {
        self.rows.iter().all(|r| r.matched)
    }
}

fn fmt_divergence(d: &Divergence) -> (String, String) {
    (
        d.step.map_or_else(|| "initial".to_string(), |s| s.to_string()),
        d.entity.map_or_else(String::new, |e| e.0.to_string()),
    )
}

/// Runs the scenario sequentially once and in parallel for each LP count,
/// comparing traces. `fault` perturbs the parallel runs on purpose.
pub fn cmd_verify(cfg: &Config, out: &Path, lp_counts: &[usize], fault: Option<FaultHook>, progress: bool) -> Result<VerifyReport> {
    if lp_counts.is_empty() {
        return Err(SimError::Config("--lps: need at least one LP count".into()));
    }
    let scenario = scenario_spec(cfg)?.build()?;
    let base = run_options(cfg, &scenario);
    create_dir(out)?;

    let run = |label: String, f: &dyn Fn(&RunOptions) -> Result<RunReport>| -> Result<RunReport> {
        let mut o = base.clone();
        let printer = progress.then(|| {
            let p = Progress::default();
            o.progress = Some(p.clone());
            ProgressPrinter::start(p, cfg.horizon, label)
        });
        let r = f(&o);
        drop(printer);
        r
    };
    let seq = run("verify sequential".into(), &|o| advance_sequential(&scenario.model, &mut scenario.state.clone(), o))?;
    let mut rows = Vec::new();
    for &n in lp_counts {
        let partition = scenario_partition(&scenario, n, cfg.partition)?;
        let par = run(format!("verify {n} LPs"), &|o| {
            let mut o = o.clone();
            o.fault = fault;
            advance_parallel(&scenario.model, &mut scenario.state.clone(), &partition, &o)
        })?;
        let divergence = par.trace.first_divergence(&seq.trace);
        match &divergence {
            None => info!("verify: {n} LPs match"),
            Some(d) => {
                let (s, e) = fmt_divergence(d);
                info!("verify: {n} LPs diverge at step {s} entity {e}");
            }
        }
        rows.push(VerifyRow {
            n_lps: n,
            matched: divergence.is_none(),
            divergence,
            final_digest: par.trace.final_hash().to_string(),
        });
    }

    let mut w = csv::Writer::from_path(out.join("verify.csv")).map_err(csv_err)?;
    w.write_record(["n_lps", "match", "first_divergent_step", "first_divergent_entity", "final_digest", "sequential_digest"])
        .map_err(csv_err)?;
    let seq_digest = seq.trace.final_hash().to_string();
    for r in &rows {
        let (s, e) = r.divergence.as_ref().map(fmt_divergence).unwrap_or_default();
        w.write_record([r.n_lps.to_string(), r.matched.to_string(), s, e, r.final_digest.clone(), seq_digest.clone()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(VerifyReport {
        sequential_digest: seq_digest,
        rows,
    })
}

/// Renders a verify report for humans, one line per LP count.
pub fn render_verify(report: &VerifyReport, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "sequential {}", report.sequential_digest)?;
    for r in &report.rows {
        match &r.divergence {
            None => writeln!(w, "lps={} match {}", r.n_lps, r.final_digest)?,
            Some(d) => {
                let (s, e) = fmt_divergence(d);
                let e = if e.is_empty() { "-".to_string() } else { e };
                writeln!(w, "lps={} MISMATCH first divergent step {s} entity {e}", r.n_lps)?
            }
        }
    }
    Ok(())
}
