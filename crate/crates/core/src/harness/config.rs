//! Experiment configuration: a JSON document validated eagerly, reporting
//! every problem with its field path.

use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::SimError;
use crate::kernel::EntityId;
use crate::migration::MigrationParams;
use crate::multilevel::{alignment_ratio, parse_step_size, LevelKind, StepSize};
use crate::pads::PartitionStrategy;
use crate::traffic::{DemandEntry, EmissionCoeffs, GraphFormat, NaschParams};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub horizon: u64,
    pub n_lps: usize,
    pub partition: PartitionStrategy,
    pub migration: Option<MigrationParams>,
    pub levels: Vec<LevelConfig>,
    pub scenario: ScenarioConfig,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelConfig {
    pub step_size: StepSize,
    pub kind: LevelKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    File { path: PathBuf, format: GraphFormat },
    Grid { cols: u64, rows: u64, spacing_m: f64, capacity: u32 },
    Ring { arcs: u64, arc_length_m: f64, capacity: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegionSelector {
    Arcs(Vec<EntityId>),
    /// All arcs touching the node with this id.
    AroundNode(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub region: RegionSelector,
    pub s0: u64,
    pub s1: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TriggerConfig {
    None,
    Manual(Vec<SessionConfig>),
    Automatic {
        density_threshold: f64,
        top_k: usize,
        min_session_len: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub graph: GraphSource,
    pub vehicles: u64,
    pub closed: bool,
    pub demand: Vec<DemandEntry>,
    pub trigger: TriggerConfig,
    pub nasch: NaschParams,
    pub emissions: EmissionCoeffs,
    pub v2v_range_m: Option<f64>,
    pub speed_limit_mps: f64,
    /// Rows in the analyze ranking; `None` ranks every node.
    pub top_k: Option<usize>,
}

/// Every violation found in a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl From<ConfigErrors> for SimError {
    fn from(e: ConfigErrors) -> Self {
        SimError::Config(e.to_string())
    }
}

struct Checker {
    errors: Vec<String>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Checker {
    fn err(&mut self, path: &str, msg: impl fmt::Display) {
        self.errors.push(format!("{path}: {msg}"));
    }

    fn object<'v>(&mut self, path: &str, v: &'v Value, allowed: &[&str]) -> Option<&'v Map<String, Value>> {
        let Some(map) = v.as_object() else {
            self.err(path, "expected an object");
            return None;
        };
        for k in map.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(&join(path, k), format!("unknown key (allowed: {})", allowed.join(", ")));
            }
        }
        Some(map)
    }

    fn u64_field(&mut self, map: &Map<String, Value>, path: &str, key: &str, default: Option<u64>) -> u64 {
        let p = join(path, key);
        match map.get(key) {
            None => match default {
                Some(d) => d,
                None => {
                    self.err(&p, "required");
                    0
                }
            },
            Some(v) => match v.as_u64() {
                Some(x) => x,
                None => {
                    self.err(&p, format!("expected a non-negative integer, got {v}"));
                    default.unwrap_or(0)
                }
            },
        }
    }

    fn f64_field(&mut self, map: &Map<String, Value>, path: &str, key: &str, default: f64) -> f64 {
        match map.get(key) {
            None => default,
            Some(v) => match v.as_f64() {
                Some(x) if x.is_finite() => x,
                _ => {
                    self.err(&join(path, key), format!("expected a number, got {v}"));
                    default
                }
            },
        }
    }

    fn bool_field(&mut self, map: &Map<String, Value>, path: &str, key: &str, default: bool) -> bool {
        match map.get(key) {
            None => default,
            Some(Value::Bool(b)) => *b,
            Some(v) => {
                self.err(&join(path, key), format!("expected true or false, got {v}"));
                default
            }
        }
    }

    fn str_field<'v>(&mut self, map: &'v Map<String, Value>, path: &str, key: &str) -> Option<&'v str> {
        match map.get(key) {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(v) => {
                self.err(&join(path, key), format!("expected a string, got {v}"));
                None
            }
        }
    }

    fn u32_field(&mut self, map: &Map<String, Value>, path: &str, key: &str, default: Option<u32>) -> u32 {
        let v = self.u64_field(map, path, key, default.map(u64::from));
        u32::try_from(v).unwrap_or_else(|_| {
            self.err(&join(path, key), "does not fit in 32 bits");
            0
        })
    }
}

/// Parses and validates a configuration document. Relative graph and
/// output paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<Config, ConfigErrors> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ConfigErrors(vec![format!("document: {e}")]))?;
    let mut c = Checker { errors: Vec::new() };
    let Some(root) = c.object(
        "",
        &doc,
        &["seed", "horizon", "n_lps", "partition", "migration", "levels", "scenario", "output"],
    ) else {
        return Err(ConfigErrors(c.errors.iter().map(|e| format!("document{e}")).collect()));
    };

    let seed = c.u64_field(root, "", "seed", None);
    let horizon = c.u64_field(root, "", "horizon", None);
    let n_lps = c.u64_field(root, "", "n_lps", Some(1)) as usize;
    if n_lps == 0 {
        c.err("n_lps", "must be at least 1");
    }
    let partition = match c.str_field(root, "", "partition") {
        None => PartitionStrategy::Block,
        Some(s) => s.parse().unwrap_or_else(|_| {
            c.err("partition", format!("unknown strategy {s:?} (round-robin, block or geographic)"));
            PartitionStrategy::Block
        }),
    };
    let migration = root.get("migration").and_then(|v| parse_migration(&mut c, v));
    let levels = parse_levels(&mut c, root.get("levels"));
    let scenario = match root.get("scenario") {
        Some(v) => parse_scenario(&mut c, v, base_dir),
        None => {
            c.err("scenario", "required (must at least name a graph)");
            None
        }
    };
    let output = c.str_field(root, "", "output").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
    let output = if output.is_absolute() { output } else { base_dir.join(output) };

    if let Some(sc) = &scenario {
        let has_fine = levels.get(1).is_some_and(|l| l.kind == LevelKind::TimeStepped);
        if !has_fine && !matches!(sc.trigger, TriggerConfig::None) {
            c.err("scenario.trigger", "refinement needs a time-stepped levels[1]");
        }
        if let TriggerConfig::Manual(sessions) = &sc.trigger {
            for (i, s) in sessions.iter().enumerate() {
                if s.s0 >= horizon && horizon > 0 {
                    c.err(&format!("scenario.trigger.sessions[{i}].s0"), format!("starts at or after horizon {horizon}"));
                }
            }
        }
    }

    match (c.errors.is_empty(), scenario) {
        (true, Some(scenario)) => Ok(Config {
            seed,
            horizon,
            n_lps,
            partition,
            migration,
            levels,
            scenario,
            output,
        }),
        _ => Err(ConfigErrors(c.errors)),
    }
}

fn parse_migration(c: &mut Checker, v: &Value) -> Option<MigrationParams> {
    let path = "migration";
    let map = c.object(path, v, &["window", "theta", "beta", "cooldown", "max_per_boundary"])?;
    let d = MigrationParams::default();
    let p = MigrationParams {
        window: c.u64_field(map, path, "window", Some(d.window)),
        theta: c.f64_field(map, path, "theta", d.theta),
        beta: c.f64_field(map, path, "beta", d.beta),
        cooldown: c.u64_field(map, path, "cooldown", Some(d.cooldown)),
        max_per_boundary: c.u64_field(map, path, "max_per_boundary", Some(d.max_per_boundary as u64)) as usize,
    };
    if p.window == 0 {
        c.err("migration.window", "must be at least 1");
    }
    if !(p.theta > 0.5 && p.theta <= 1.0) {
        c.err(
            "migration.theta",
            format!("must satisfy 0.5 < theta <= 1 so at most one target LP qualifies (got {})", p.theta),
        );
    }
    if p.beta < 0.0 {
        c.err("migration.beta", format!("must be >= 0 (got {})", p.beta));
    }
    Some(p)
}

fn parse_levels(c: &mut Checker, v: Option<&Value>) -> Vec<LevelConfig> {
    let default = vec![
        LevelConfig {
            step_size: StepSize::from_integer(3),
            kind: LevelKind::TimeStepped,
        },
        LevelConfig {
            step_size: StepSize::from_integer(1),
            kind: LevelKind::TimeStepped,
        },
    ];
    let Some(v) = v else { return default };
    let Some(items) = v.as_array() else {
        c.err("levels", "expected an array");
        return default;
    };
    if items.is_empty() || items.len() > 3 {
        c.err("levels", format!("expected 1 to 3 levels, got {}", items.len()));
        return default;
    }
    let mut out: Vec<LevelConfig> = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let path = format!("levels[{i}]");
        let Some(map) = c.object(&path, item, &["step_size", "kind"]) else { continue };
        let sp = join(&path, "step_size");
        let step = match map.get("step_size") {
            Some(Value::Number(n)) => parse_step_size(&n.to_string()).map_err(|e| e.to_string()),
            Some(Value::String(s)) => parse_step_size(s.trim_end_matches('s')).map_err(|e| e.to_string()),
            Some(other) => Err(format!("expected seconds as a number or string, got {other}")),
            None => Err("required".to_string()),
        };
        let kind = match c.str_field(map, &path, "kind") {
            None | Some("stepped") => LevelKind::TimeStepped,
            Some("continuous") => LevelKind::Continuous,
            Some(other) => {
                c.err(&join(&path, "kind"), format!("unknown kind {other:?} (stepped or continuous)"));
                LevelKind::TimeStepped
            }
        };
        let step = match step {
            Ok(s) => s,
            Err(e) => {
                c.err(&sp, e);
                continue;
            }
        };
        if i == 0 && kind != LevelKind::TimeStepped {
            c.err(&join(&path, "kind"), "level 0 must be stepped");
        }
        if let Some(parent) = out.last() {
            if kind == LevelKind::TimeStepped && parent.kind == LevelKind::Continuous {
                c.err(&join(&path, "kind"), "a stepped level cannot refine a continuous one");
            }
            if let Err(e) = alignment_ratio(parent.step_size, step) {
                let msg = e.to_string();
                c.err(&sp, msg.trim_start_matches("configuration error: "));
            }
        }
        out.push(LevelConfig { step_size: step, kind });
    }
    if out.len() == items.len() {
        out
    } else {
        default
    }
}

fn parse_graph(c: &mut Checker, map: &Map<String, Value>, base_dir: &Path) -> Option<GraphSource> {
    let path = "scenario.graph";
    let format = match c.str_field(map, "scenario", "graph_format") {
        None | Some("native") => GraphFormat::Native,
        Some("osm") => GraphFormat::OsmExtract,
        Some(other) => {
            c.err("scenario.graph_format", format!("unknown format {other:?} (native or osm)"));
            GraphFormat::Native
        }
    };
    match map.get("graph") {
        None => {
            c.err(path, "required");
            None
        }
        Some(Value::String(p)) => {
            let p = PathBuf::from(p);
            let path = if p.is_absolute() { p } else { base_dir.join(p) };
            Some(GraphSource::File { path, format })
        }
        Some(v @ Value::Object(_)) => {
            let gm = c.object(path, v, &["generator", "cols", "rows", "spacing_m", "capacity", "arcs", "arc_length_m"])?;
            match c.str_field(gm, path, "generator") {
                Some("grid") => {
                    let g = GraphSource::Grid {
                        cols: c.u64_field(gm, path, "cols", None),
                        rows: c.u64_field(gm, path, "rows", None),
                        spacing_m: c.f64_field(gm, path, "spacing_m", 150.0),
                        capacity: c.u32_field(gm, path, "capacity", Some(2)),
                    };
                    if let GraphSource::Grid { cols, rows, spacing_m, capacity } = g {
                        if cols < 2 || rows < 1 {
                            c.err(path, "grid needs cols >= 2 and rows >= 1");
                        }
                        if spacing_m <= 0.0 {
                            c.err(&join(path, "spacing_m"), "must be positive");
                        }
                        if capacity == 0 {
                            c.err(&join(path, "capacity"), "must be at least 1");
                        }
                    }
                    Some(g)
                }
                Some("ring") => {
                    let arcs = c.u64_field(gm, path, "arcs", None);
                    let arc_length_m = c.f64_field(gm, path, "arc_length_m", 150.0);
                    let capacity = c.u32_field(gm, path, "capacity", Some(2));
                    if arcs < 2 {
                        c.err(&join(path, "arcs"), "ring needs at least 2 arcs");
                    }
                    if arc_length_m <= 0.0 {
                        c.err(&join(path, "arc_length_m"), "must be positive");
                    }
                    if capacity == 0 {
                        c.err(&join(path, "capacity"), "must be at least 1");
                    }
                    Some(GraphSource::Ring {
                        arcs,
                        arc_length_m,
                        capacity,
                    })
                }
                Some(other) => {
                    c.err(&join(path, "generator"), format!("unknown generator {other:?} (grid or ring)"));
                    None
                }
                None => {
                    c.err(&join(path, "generator"), "required for generated graphs");
                    None
                }
            }
        }
        Some(other) => {
            c.err(path, format!("expected a file path or generator object, got {other}"));
            None
        }
    }
}

fn parse_trigger(c: &mut Checker, v: &Value) -> TriggerConfig {
    let path = "scenario.trigger";
    let Some(map) = c.object(path, v, &["mode", "sessions", "density_threshold", "top_k", "min_session_len"]) else {
        return TriggerConfig::None;
    };
    match c.str_field(map, path, "mode") {
        None | Some("none") => TriggerConfig::None,
        Some("manual") => {
            let mut sessions = Vec::new();
            match map.get("sessions") {
                Some(Value::Array(items)) => {
                    for (i, item) in items.iter().enumerate() {
                        let sp = format!("{path}.sessions[{i}]");
                        let Some(sm) = c.object(&sp, item, &["arcs", "around_node", "s0", "s1"]) else { continue };
                        let s0 = c.u64_field(sm, &sp, "s0", None);
                        let s1 = c.u64_field(sm, &sp, "s1", None);
                        if s0 >= s1 {
                            c.err(&join(&sp, "s1"), format!("must be greater than s0 ({s0})"));
                        }
                        let region = match (sm.get("arcs"), sm.get("around_node")) {
                            (Some(Value::Array(arcs)), None) => {
                                let ids: Vec<_> = arcs.iter().filter_map(Value::as_u64).map(EntityId).collect();
                                if ids.len() != arcs.len() || ids.is_empty() {
                                    c.err(&join(&sp, "arcs"), "expected a non-empty array of arc indices");
                                }
                                RegionSelector::Arcs(ids)
                            }
                            (None, Some(n)) => match n.as_u64() {
                                Some(n) => RegionSelector::AroundNode(n),
                                None => {
                                    c.err(&join(&sp, "around_node"), "expected a node id");
                                    RegionSelector::Arcs(Vec::new())
                                }
                            },
                            _ => {
                                c.err(&sp, "needs exactly one of arcs or around_node");
                                RegionSelector::Arcs(Vec::new())
                            }
                        };
                        sessions.push(SessionConfig { region, s0, s1 });
                    }
                }
                Some(_) => c.err(&join(path, "sessions"), "expected an array"),
                None => c.err(&join(path, "sessions"), "required for manual mode"),
            }
            TriggerConfig::Manual(sessions)
        }
        Some("automatic") => {
            let density_threshold = c.f64_field(map, path, "density_threshold", f64::NAN);
            if density_threshold.is_nan() {
                c.err(&join(path, "density_threshold"), "required for automatic mode");
            } else if density_threshold <= 0.0 {
                c.err(&join(path, "density_threshold"), "must be positive");
            }
            let top_k = c.u64_field(map, path, "top_k", Some(1)) as usize;
            let min_session_len = c.u64_field(map, path, "min_session_len", Some(20));
            if min_session_len == 0 {
                c.err(&join(path, "min_session_len"), "must be at least 1");
            }
            TriggerConfig::Automatic {
                density_threshold,
                top_k,
                min_session_len,
            }
        }
        Some(other) => {
            c.err(&join(path, "mode"), format!("unknown mode {other:?} (none, manual or automatic)"));
            TriggerConfig::None
        }
    }
}

fn parse_scenario(c: &mut Checker, v: &Value, base_dir: &Path) -> Option<ScenarioConfig> {
    let path = "scenario";
    let map = c.object(
        path,
        v,
        &[
            "graph",
            "graph_format",
            "vehicles",
            "closed",
            "demand",
            "trigger",
            "nasch",
            "emissions",
            "v2v_range_m",
            "speed_limit_mps",
            "top_k",
        ],
    )?;
    let graph = parse_graph(c, map, base_dir);
    let vehicles = c.u64_field(map, path, "vehicles", Some(0));
    let closed = c.bool_field(map, path, "closed", true);

    let mut demand = Vec::new();
    match map.get("demand") {
        None => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                let dp = format!("scenario.demand[{i}]");
                let Some(dm) = c.object(&dp, item, &["arc", "from_step", "to_step", "per_step"]) else { continue };
                let e = DemandEntry {
                    arc: c.u32_field(dm, &dp, "arc", None),
                    from_step: c.u64_field(dm, &dp, "from_step", Some(0)),
                    to_step: c.u64_field(dm, &dp, "to_step", None),
                    per_step: c.u32_field(dm, &dp, "per_step", None),
                };
                if e.from_step >= e.to_step {
                    c.err(&join(&dp, "to_step"), format!("must be greater than from_step ({})", e.from_step));
                }
                demand.push(e);
            }
        }
        Some(_) => c.err("scenario.demand", "expected an array"),
    }

    let trigger = match map.get("trigger") {
        Some(v) => parse_trigger(c, v),
        None => TriggerConfig::None,
    };

    let nd = NaschParams::default();
    let nasch = match map.get("nasch") {
        None => nd,
        Some(v) => match c.object("scenario.nasch", v, &["vmax", "p_brake"]) {
            None => nd,
            Some(m) => {
                let p = NaschParams {
                    vmax: c.u32_field(m, "scenario.nasch", "vmax", Some(nd.vmax)),
                    p_brake: c.f64_field(m, "scenario.nasch", "p_brake", nd.p_brake),
                };
                if p.vmax == 0 {
                    c.err("scenario.nasch.vmax", "must be at least 1");
                }
                if !(0.0..=1.0).contains(&p.p_brake) {
                    c.err("scenario.nasch.p_brake", format!("must be in [0, 1] (got {})", p.p_brake));
                }
                p
            }
        },
    };

    let ed = EmissionCoeffs::default();
    let emissions = match map.get("emissions") {
        None => ed,
        Some(v) => match c.object("scenario.emissions", v, &["a", "b", "c", "d"]) {
            None => ed,
            Some(m) => EmissionCoeffs {
                a: c.f64_field(m, "scenario.emissions", "a", ed.a),
                b: c.f64_field(m, "scenario.emissions", "b", ed.b),
                c: c.f64_field(m, "scenario.emissions", "c", ed.c),
                d: c.f64_field(m, "scenario.emissions", "d", ed.d),
            },
        },
    };

    let v2v_range_m = match map.get("v2v_range_m") {
        None => Some(250.0),
        Some(Value::Null) => None,
        Some(v) => match v.as_f64() {
            Some(r) if r > 0.0 => Some(r),
            _ => {
                c.err("scenario.v2v_range_m", format!("expected a positive number or null, got {v}"));
                None
            }
        },
    };
    let speed_limit_mps = c.f64_field(map, path, "speed_limit_mps", 13.89);
    if speed_limit_mps <= 0.0 {
        c.err("scenario.speed_limit_mps", "must be positive");
    }
    let top_k = match map.get("top_k") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_u64() {
            Some(k) => Some(k as usize),
            None => {
                c.err("scenario.top_k", format!("expected a non-negative integer or null, got {v}"));
                None
            }
        },
    };

    Some(ScenarioConfig {
        graph: graph?,
        vehicles,
        closed,
        demand,
        trigger,
        nasch,
        emissions,
        v2v_range_m,
        speed_limit_mps,
        top_k,
    })
}
