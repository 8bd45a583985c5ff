use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Length of one lattice cell (one car plus headway).
pub const CELL_LENGTH_M: f64 = 7.5;
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u64,
    pub lat: f64,
    pub lon: f64,
}

/// An input edge before direction expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub id: u64,
    pub from: u64,
    pub to: u64,
    pub length_m: f64,
    pub oneway: bool,
    pub lanes: u32,
    pub capacity_per_step: u32,
}

/// A directed arc. Arc indices double as level-0 entity ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub index: u32,
    pub edge_id: u64,
    /// Node indices, not external ids.
    pub from: u32,
    pub to: u32,
    pub length_m: f64,
    pub oneway: bool,
    pub lanes: u32,
    pub capacity_per_step: u32,
    pub cell_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadGraph {
    pub nodes: Vec<Node>,
    pub arcs: Vec<Arc>,
    out_arcs: Vec<Vec<u32>>,
    in_arcs: Vec<Vec<u32>>,
    index_of: BTreeMap<u64, u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Native,
    OsmExtract,
}

pub fn cell_count(length_m: f64) -> u32 {
    ((length_m / CELL_LENGTH_M).round() as u32).max(1)
}

/// Great-circle distance in meters.
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

impl RoadGraph {
    /// Validates the input and expands two-way edges into two arcs.
    pub fn from_parts(nodes: Vec<Node>, edges: Vec<EdgeSpec>) -> Result<RoadGraph> {
        let mut index_of = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index_of.insert(n.id, i as u32).is_some() {
                return Err(SimError::parse(format!("node {}", n.id), "duplicate node id"));
            }
            if !(n.lat.is_finite() && n.lon.is_finite()) {
                return Err(SimError::parse(format!("node {}", n.id), "coordinates must be finite"));
            }
        }
        let mut seen_edges = BTreeSet::new();
        let mut arcs = Vec::with_capacity(edges.len() * 2);
        for e in &edges {
            let record = format!("edge {}", e.id);
            if !seen_edges.insert(e.id) {
                return Err(SimError::parse(record, "duplicate edge id"));
            }
            let from = *index_of
                .get(&e.from)
                .ok_or_else(|| SimError::parse(&record, format!("references missing node {}", e.from)))?;
            let to = *index_of
                .get(&e.to)
                .ok_or_else(|| SimError::parse(&record, format!("references missing node {}", e.to)))?;
            if !(e.length_m.is_finite() && e.length_m > 0.0) {
                return Err(SimError::parse(record, format!("length_m must be positive, got {}", e.length_m)));
            }
            if e.lanes == 0 {
                return Err(SimError::parse(record, "lanes must be at least 1"));
            }
            if e.capacity_per_step == 0 {
                return Err(SimError::parse(record, "capacity_per_step must be at least 1"));
            }
            let mut push = |from: u32, to: u32| {
                arcs.push(Arc {
                    index: arcs.len() as u32,
                    edge_id: e.id,
                    from,
                    to,
                    length_m: e.length_m,
                    oneway: e.oneway,
                    lanes: e.lanes,
                    capacity_per_step: e.capacity_per_step,
                    cell_count: cell_count(e.length_m),
                });
            };
            push(from, to);
            if !e.oneway {
                push(to, from);
            }
        }
        let mut out_arcs = vec![Vec::new(); nodes.len()];
        let mut in_arcs = vec![Vec::new(); nodes.len()];
        for a in &arcs {
            out_arcs[a.from as usize].push(a.index);
            in_arcs[a.to as usize].push(a.index);
        }
        Ok(RoadGraph {
            nodes,
            arcs,
            out_arcs,
            in_arcs,
            index_of,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn arc(&self, index: u32) -> &Arc {
        &self.arcs[index as usize]
    }

    pub fn node_index(&self, id: u64) -> Option<u32> {
        self.index_of.get(&id).copied()
    }

    pub fn out_arcs(&self, node: u32) -> &[u32] {
        &self.out_arcs[node as usize]
    }

    pub fn in_arcs(&self, node: u32) -> &[u32] {
        &self.in_arcs[node as usize]
    }

    /// Arcs that feed `arc`.
    pub fn upstream(&self, arc: u32) -> &[u32] {
        self.in_arcs(self.arc(arc).from)
    }

    /// Arcs `arc` can discharge into.
    pub fn downstream(&self, arc: u32) -> &[u32] {
        self.out_arcs(self.arc(arc).to)
    }

    /// Arcs touching a node, in or out, sorted.
    pub fn incident_arcs(&self, node: u32) -> Vec<u32> {
        let mut v: Vec<u32> = self.in_arcs(node).iter().chain(self.out_arcs(node)).copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Position of a point `fraction` along an arc, in meters on a local
    /// equirectangular projection centered on `origin` (lat, lon).
    pub fn arc_point_m(&self, arc: u32, fraction: f64, origin: (f64, f64)) -> (f64, f64) {
        let a = self.arc(arc);
        let p = self.node_point_m(a.from, origin);
        let q = self.node_point_m(a.to, origin);
        (p.0 + (q.0 - p.0) * fraction, p.1 + (q.1 - p.1) * fraction)
    }

    pub fn node_point_m(&self, node: u32, origin: (f64, f64)) -> (f64, f64) {
        let n = &self.nodes[node as usize];
        let x = (n.lon - origin.1).to_radians() * origin.0.to_radians().cos() * EARTH_RADIUS_M;
        let y = (n.lat - origin.0).to_radians() * EARTH_RADIUS_M;
        (x, y)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeDoc {
    nodes: Vec<NativeNode>,
    edges: Vec<NativeEdge>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeNode {
    id: u64,
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeEdge {
    id: u64,
    from: u64,
    to: u64,
    length_m: f64,
    #[serde(default)]
    oneway: bool,
    #[serde(default = "one")]
    lanes: u32,
    capacity_per_step: Option<u32>,
}

fn one() -> u32 {
    1
}

pub fn load_graph(source: &[u8], format: GraphFormat) -> Result<RoadGraph> {
    match format {
        GraphFormat::Native => load_native(source),
        GraphFormat::OsmExtract => load_osm_extract(source),
    }
}

fn load_native(source: &[u8]) -> Result<RoadGraph> {
    let doc: NativeDoc = serde_json::from_slice(source).map_err(|e| SimError::parse("graph document", e.to_string()))?;
    let nodes = doc
        .nodes
        .into_iter()
        .map(|n| Node {
            id: n.id,
            lat: n.lat,
            lon: n.lon,
        })
        .collect();
    let edges = doc
        .edges
        .into_iter()
        .map(|e| EdgeSpec {
            id: e.id,
            from: e.from,
            to: e.to,
            length_m: e.length_m,
            oneway: e.oneway,
            lanes: e.lanes,
            capacity_per_step: e.capacity_per_step.unwrap_or(e.lanes),
        })
        .collect();
    RoadGraph::from_parts(nodes, edges)
}

#[derive(Deserialize)]
struct OsmDoc {
    elements: Vec<OsmElement>,
}

#[derive(Deserialize)]
struct OsmElement {
    #[serde(rename = "type")]
    kind: String,
    id: u64,
    lat: Option<f64>,
    lon: Option<f64>,
    #[serde(default)]
    nodes: Vec<u64>,
    #[serde(default)]
    tags: BTreeMap<String, String>,
}

enum Direction {
    Both,
    Forward,
    Backward,
}

fn way_direction(tags: &BTreeMap<String, String>) -> Direction {
    match tags.get("oneway").map(String::as_str) {
        Some("yes" | "true" | "1") => Direction::Forward,
        Some("-1" | "reverse") => Direction::Backward,
        _ => Direction::Both,
    }
}

/// Imports the element-array form of a map extract: keeps highway ways,
/// splits them at shared nodes and measures segments by great-circle distance.
fn load_osm_extract(source: &[u8]) -> Result<RoadGraph> {
    let doc: OsmDoc = serde_json::from_slice(source).map_err(|e| SimError::parse("osm extract", e.to_string()))?;
    let mut coords: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    let mut ways = Vec::new();
    for el in doc.elements {
        match el.kind.as_str() {
            "node" => {
                let (Some(lat), Some(lon)) = (el.lat, el.lon) else {
                    return Err(SimError::parse(format!("node {}", el.id), "missing lat/lon"));
                };
                if coords.insert(el.id, (lat, lon)).is_some() {
                    return Err(SimError::parse(format!("node {}", el.id), "duplicate node id"));
                }
            }
            "way" if el.tags.contains_key("highway") => ways.push(el),
            _ => {}
        }
    }

    // A way node becomes a graph node if it is a way endpoint or is used more than once.
    let mut uses: BTreeMap<u64, u32> = BTreeMap::new();
    for w in &ways {
        if w.nodes.len() < 2 {
            return Err(SimError::parse(format!("way {}", w.id), "needs at least two nodes"));
        }
        for n in &w.nodes {
            if !coords.contains_key(n) {
                return Err(SimError::parse(format!("way {}", w.id), format!("references missing node {n}")));
            }
            *uses.entry(*n).or_default() += 1;
        }
    }
    let mut is_junction: BTreeSet<u64> = uses.iter().filter(|(_, &c)| c > 1).map(|(&n, _)| n).collect();
    for w in &ways {
        is_junction.insert(w.nodes[0]);
        is_junction.insert(*w.nodes.last().unwrap());
    }

    let mut edges = Vec::new();
    for w in &ways {
        let dir = way_direction(&w.tags);
        let lanes = w.tags.get("lanes").and_then(|l| l.parse::<u32>().ok()).filter(|&l| l > 0).unwrap_or(1);
        let mut seg_start = w.nodes[0];
        let mut length = 0.0;
        let mut segment = 0u64;
        for pair in w.nodes.windows(2) {
            length += haversine_m(coords[&pair[0]], coords[&pair[1]]);
            if is_junction.contains(&pair[1]) {
                if length > 0.0 && seg_start != pair[1] {
                    let (from, to) = match dir {
                        Direction::Backward => (pair[1], seg_start),
                        _ => (seg_start, pair[1]),
                    };
                    edges.push(EdgeSpec {
                        id: w.id * 10_000 + segment,
                        from,
                        to,
                        length_m: length,
                        oneway: !matches!(dir, Direction::Both),
                        lanes,
                        capacity_per_step: lanes,
                    });
                    segment += 1;
                }
                seg_start = pair[1];
                length = 0.0;
            }
        }
    }

    let nodes = is_junction
        .iter()
        .map(|id| Node {
            id: *id,
            lat: coords[id].0,
            lon: coords[id].1,
        })
        .collect();
    RoadGraph::from_parts(nodes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_way_edge_expands_to_two_arcs() {
        let doc = br#"{"nodes":[{"id":1,"lat":0,"lon":0},{"id":2,"lat":0,"lon":0.001}],
                       "edges":[{"id":10,"from":1,"to":2,"length_m":75,"oneway":false,"lanes":1,"capacity_per_step":2}]}"#;
        let g = load_graph(doc, GraphFormat::Native).unwrap();
        assert_eq!(g.arc_count(), 2);
        assert!(g.arcs.iter().all(|a| a.cell_count == 10));
        assert_eq!((g.arcs[1].from, g.arcs[1].to), (1, 0));
    }

    #[test]
    fn oneway_edge_stays_single() {
        let doc = br#"{"nodes":[{"id":1,"lat":0,"lon":0},{"id":2,"lat":0,"lon":0.001}],
                       "edges":[{"id":10,"from":1,"to":2,"length_m":30,"oneway":true}]}"#;
        let g = load_graph(doc, GraphFormat::Native).unwrap();
        assert_eq!(g.arc_count(), 1);
        assert_eq!(g.arcs[0].cell_count, 4);
        assert_eq!(g.arcs[0].capacity_per_step, 1);
    }

    #[test]
    fn validation_names_the_record() {
        let missing = br#"{"nodes":[{"id":1,"lat":0,"lon":0}],
                           "edges":[{"id":7,"from":1,"to":9,"length_m":30}]}"#;
        let e = load_graph(missing, GraphFormat::Native).unwrap_err().to_string();
        assert!(e.contains("edge 7") && e.contains("missing node 9"), "{e}");

        let dup = br#"{"nodes":[{"id":1,"lat":0,"lon":0},{"id":1,"lat":1,"lon":1}],"edges":[]}"#;
        let e = load_graph(dup, GraphFormat::Native).unwrap_err().to_string();
        assert!(e.contains("node 1") && e.contains("duplicate"), "{e}");

        let short = br#"{"nodes":[{"id":1,"lat":0,"lon":0},{"id":2,"lat":0,"lon":0}],
                         "edges":[{"id":3,"from":1,"to":2,"length_m":0}]}"#;
        let e = load_graph(short, GraphFormat::Native).unwrap_err().to_string();
        assert!(e.contains("edge 3") && e.contains("positive"), "{e}");

        let typo = br#"{"nodes":[],"edges":[],"extra":1}"#;
        assert!(load_graph(typo, GraphFormat::Native).is_err());
    }

    #[test]
    fn tiny_edges_keep_one_cell() {
        assert_eq!(cell_count(1.0), 1);
        assert_eq!(cell_count(7.5 * 2.4), 2);
        assert_eq!(cell_count(7.5 * 2.5), 3);
    }

    #[test]
    fn osm_ways_split_at_shared_nodes() {
        // way 100: a-b-c, way 200: b-d (oneway), node e is not on a highway
        let doc = br#"{"elements":[
            {"type":"node","id":1,"lat":43.8400,"lon":13.0100},
            {"type":"node","id":2,"lat":43.8410,"lon":13.0100},
            {"type":"node","id":3,"lat":43.8420,"lon":13.0100},
            {"type":"node","id":4,"lat":43.8410,"lon":13.0115},
            {"type":"node","id":5,"lat":43.0,"lon":13.0},
            {"type":"way","id":100,"nodes":[1,2,3],"tags":{"highway":"residential"}},
            {"type":"way","id":200,"nodes":[2,4],"tags":{"highway":"service","oneway":"yes","lanes":"2"}},
            {"type":"way","id":300,"nodes":[1,5],"tags":{"building":"yes"}}
        ]}"#;
        let g = load_graph(doc, GraphFormat::OsmExtract).unwrap();
        assert_eq!(g.node_count(), 4);
        // 100 splits into 1-2 and 2-3 (two-way: 4 arcs), 200 is one arc
        assert_eq!(g.arc_count(), 5);
        let one_way: Vec<_> = g.arcs.iter().filter(|a| a.oneway).collect();
        assert_eq!(one_way.len(), 1);
        assert_eq!(one_way[0].lanes, 2);
        let expected = haversine_m((43.8400, 13.0100), (43.8410, 13.0100));
        assert!((g.arcs[0].length_m - expected).abs() < 1e-9);
        assert!((expected - 111.19).abs() < 0.1, "{expected}");
    }

    #[test]
    fn osm_reverse_oneway() {
        let doc = br#"{"elements":[
            {"type":"node","id":1,"lat":0.0,"lon":0.0},
            {"type":"node","id":2,"lat":0.0,"lon":0.001},
            {"type":"way","id":9,"nodes":[1,2],"tags":{"highway":"primary","oneway":"-1"}}
        ]}"#;
        let g = load_graph(doc, GraphFormat::OsmExtract).unwrap();
        assert_eq!(g.arc_count(), 1);
        assert_eq!(g.nodes[g.arcs[0].from as usize].id, 2);
    }

    #[test]
    fn osm_dangling_reference_is_reported() {
        let doc = br#"{"elements":[{"type":"node","id":1,"lat":0.0,"lon":0.0},
            {"type":"way","id":9,"nodes":[1,2],"tags":{"highway":"primary"}}]}"#;
        let e = load_graph(doc, GraphFormat::OsmExtract).unwrap_err().to_string();
        assert!(e.contains("way 9"), "{e}");
    }
}
