//! Lane graphs, map files and intention (candidate path) extraction.
//!
//! Map file layout (TOML):
//!
//! ```toml
//! name = "t-junction"
//! nodes = [ { id = 0, x = 0.0, y = 0.0 }, { id = 1, x = 40.0, y = 0.0 } ]
//! edges = [ { from = 0, to = 1, speed_limit = 6.0 } ]
//! ego_paths = [ { name = "main", nodes = [0, 1] } ]
//! ```

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Polyline, Vec2};

#[derive(Debug, Error)]
pub enum MapError {
    #[error("failed to read map {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse map: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("duplicate node id {0}")]
    DuplicateNode(u32),
    #[error("edge {edge} references unknown node {node}")]
    UnknownNode { edge: usize, node: u32 },
    #[error("edge {0} has zero length")]
    DegenerateEdge(usize),
    #[error("edge {0} has non-positive speed limit")]
    BadSpeedLimit(usize),
    #[error("ego path {name:?}: {reason}")]
    BadEgoPath { name: String, reason: String },
    #[error("no ego path named {0:?}")]
    UnknownEgoPath(String),
    #[error("no lane within {snap} m of ({x:.2}, {y:.2})")]
    OffMap { x: f64, y: f64, snap: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: u32,
    pub to: u32,
    pub speed_limit: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EgoPathRecord {
    pub name: String,
    pub nodes: Vec<u32>,
}

/// On-disk representation of a map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapFile {
    pub name: String,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    #[serde(default)]
    pub ego_paths: Vec<EgoPathRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneEdge {
    pub from: usize,
    pub to: usize,
    pub speed_limit: f64,
    pub length: f64,
}

/// Limits on intention extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathExtraction {
    /// Arc length of every extracted path (shorter only at dead ends).
    pub length: f64,
    /// Maximum distance from the agent to its nearest lane point.
    pub snap_distance: f64,
}

impl Default for PathExtraction {
    fn default() -> Self {
        Self {
            length: 30.0,
            snap_distance: 3.0,
        }
    }
}

/// A forward traversal of the lane graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub edges: Vec<usize>,
    pub path: Polyline,
}

#[derive(Debug, Clone)]
pub struct LaneGraph {
    name: String,
    node_ids: Vec<u32>,
    nodes: Vec<Vec2>,
    edges: Vec<LaneEdge>,
    /// Outgoing edge indices per node, ascending.
    successors: Vec<Vec<usize>>,
    ego_paths: Vec<(String, Vec<usize>)>,
}

impl LaneGraph {
    pub fn from_file_data(file: MapFile) -> Result<Self, MapError> {
        let mut index = HashMap::new();
        let mut nodes = Vec::with_capacity(file.nodes.len());
        let mut node_ids = Vec::with_capacity(file.nodes.len());
        for n in &file.nodes {
            if index.insert(n.id, nodes.len()).is_some() {
                return Err(MapError::DuplicateNode(n.id));
            }
            nodes.push(Vec2::new(n.x, n.y));
            node_ids.push(n.id);
        }
        let mut edges = Vec::with_capacity(file.edges.len());
        let mut successors = vec![Vec::new(); nodes.len()];
        for (i, e) in file.edges.iter().enumerate() {
            let from = *index
                .get(&e.from)
                .ok_or(MapError::UnknownNode { edge: i, node: e.from })?;
            let to = *index
                .get(&e.to)
                .ok_or(MapError::UnknownNode { edge: i, node: e.to })?;
            let length = nodes[from].distance(nodes[to]);
            if length <= 0.0 {
                return Err(MapError::DegenerateEdge(i));
            }
            if !(e.speed_limit > 0.0) {
                return Err(MapError::BadSpeedLimit(i));
            }
            successors[from].push(i);
            edges.push(LaneEdge {
                from,
                to,
                speed_limit: e.speed_limit,
                length,
            });
        }
        let mut ego_paths = Vec::new();
        for p in &file.ego_paths {
            let seq: Vec<usize> = p
                .nodes
                .iter()
                .map(|id| {
                    index.get(id).copied().ok_or_else(|| MapError::BadEgoPath {
                        name: p.name.clone(),
                        reason: format!("unknown node {id}"),
                    })
                })
                .collect::<Result<_, _>>()?;
            if seq.len() < 2 {
                return Err(MapError::BadEgoPath {
                    name: p.name.clone(),
                    reason: "needs at least two nodes".into(),
                });
            }
            for w in seq.windows(2) {
                if !successors[w[0]].iter().any(|&e| edges[e].to == w[1]) {
                    return Err(MapError::BadEgoPath {
                        name: p.name.clone(),
                        reason: format!("no edge {} -> {}", node_ids[w[0]], node_ids[w[1]]),
                    });
                }
            }
            ego_paths.push((p.name.clone(), seq));
        }
        Ok(Self {
            name: file.name,
            node_ids,
            nodes,
            edges,
            successors,
            ego_paths,
        })
    }

    pub fn parse(text: &str) -> Result<Self, MapError> {
        Self::from_file_data(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, MapError> {
        let text = std::fs::read_to_string(path).map_err(|source| MapError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn node_id(&self, index: usize) -> u32 {
        self.node_ids[index]
    }

    pub fn edges(&self) -> &[LaneEdge] {
        &self.edges
    }

    pub fn ego_path_names(&self) -> impl Iterator<Item = &str> {
        self.ego_paths.iter().map(|(n, _)| n.as_str())
    }

    /// Reference polyline of a named ego path.
    pub fn ego_path(&self, name: &str) -> Result<Polyline, MapError> {
        let (_, seq) = self
            .ego_paths
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| MapError::UnknownEgoPath(name.to_string()))?;
        let points: Vec<Vec2> = seq.iter().map(|&i| self.nodes[i]).collect();
        let limits: Vec<f64> = seq
            .windows(2)
            .map(|w| {
                let e = self.successors[w[0]]
                    .iter()
                    .find(|&&e| self.edges[e].to == w[1])
                    .unwrap();
                self.edges[*e].speed_limit
            })
            .collect();
        Polyline::new(points, limits).ok_or_else(|| MapError::BadEgoPath {
            name: name.to_string(),
            reason: "degenerate geometry".into(),
        })
    }

    /// Nearest lane point: `(edge index, fraction along edge, distance)`.
    /// Lowest edge index wins ties.
    pub fn nearest_lane_point(&self, p: Vec2) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, e) in self.edges.iter().enumerate() {
            let a = self.nodes[e.from];
            let ab = self.nodes[e.to] - a;
            let t = ((p - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
            let d = (a + ab * t).distance(p);
            if best.map_or(true, |(_, _, bd)| d < bd) {
                best = Some((i, t, d));
            }
        }
        best
    }

    /// All distinct forward traversals from the lane point nearest to
    /// `position`, each cut at `cfg.length` metres of arc (or ending at a dead
    /// end). Routes are ordered lexicographically by edge index sequence.
    pub fn candidate_routes(&self, position: Vec2, cfg: &PathExtraction) -> Result<Vec<Route>, MapError> {
        let (edge, t, _) = self
            .nearest_lane_point(position)
            .filter(|&(_, _, d)| d <= cfg.snap_distance)
            .ok_or(MapError::OffMap {
                x: position.x,
                y: position.y,
                snap: cfg.snap_distance,
            })?;
        let e = self.edges[edge];
        let start = self.nodes[e.from] + (self.nodes[e.to] - self.nodes[e.from]) * t;
        let mut routes = Vec::new();
        let mut edges = vec![edge];
        let mut points = vec![start];
        let mut limits = Vec::new();
        self.extend_routes(
            edge,
            (1.0 - t) * e.length,
            cfg.length,
            &mut edges,
            &mut points,
            &mut limits,
            &mut routes,
        );
        Ok(routes)
    }

    /// Candidate intention paths for an agent at `position`.
    pub fn candidate_paths(&self, position: Vec2, cfg: &PathExtraction) -> Result<Vec<Polyline>, MapError> {
        Ok(self
            .candidate_routes(position, cfg)?
            .into_iter()
            .map(|r| r.path)
            .collect())
    }

    #[allow(clippy::too_many_arguments)]
    fn extend_routes(
        &self,
        edge: usize,
        available: f64,
        remaining: f64,
        edges: &mut Vec<usize>,
        points: &mut Vec<Vec2>,
        limits: &mut Vec<f64>,
        out: &mut Vec<Route>,
    ) {
        let e = self.edges[edge];
        let from = *points.last().unwrap();
        if available >= remaining {
            // path ends inside this edge
            let dir = self.nodes[e.to] - self.nodes[e.from];
            let end = from + dir * (remaining / e.length);
            self.push_route(edges, points, limits, end, e.speed_limit, out);
            return;
        }
        let succ = &self.successors[e.to];
        if succ.is_empty() {
            self.push_route(edges, points, limits, self.nodes[e.to], e.speed_limit, out);
            return;
        }
        let node = self.nodes[e.to];
        let pushed_point = available > 1e-9;
        if pushed_point {
            points.push(node);
            limits.push(e.speed_limit);
        }
        for &next in succ {
            edges.push(next);
            let len = self.edges[next].length;
            self.extend_routes(next, len, remaining - available, edges, points, limits, out);
            edges.pop();
        }
        if pushed_point {
            points.pop();
            limits.pop();
        }
    }

    fn push_route(
        &self,
        edges: &[usize],
        points: &[Vec2],
        limits: &[f64],
        end: Vec2,
        limit: f64,
        out: &mut Vec<Route>,
    ) {
        let mut pts = points.to_vec();
        let mut lims = limits.to_vec();
        pts.push(end);
        lims.push(limit);
        if let Some(path) = Polyline::new(pts, lims) {
            out.push(Route {
                edges: edges.to_vec(),
                path,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FORK: &str = r#"
        name = "fork"
        nodes = [
            { id = 0, x = 0.0, y = 0.0 },
            { id = 1, x = 20.0, y = 0.0 },
            { id = 2, x = 60.0, y = 0.0 },
            { id = 3, x = 20.0, y = 40.0 },
            { id = 4, x = -40.0, y = 0.0 },
        ]
        edges = [
            { from = 0, to = 1, speed_limit = 5.0 },
            { from = 1, to = 2, speed_limit = 5.0 },
            { from = 1, to = 3, speed_limit = 4.0 },
            { from = 4, to = 0, speed_limit = 5.0 },
        ]
        ego_paths = [ { name = "main", nodes = [4, 0, 1, 2] } ]
    "#;

    fn fork() -> LaneGraph {
        LaneGraph::parse(FORK).unwrap()
    }

    #[test]
    fn single_chain_gives_one_path() {
        let g = fork();
        let paths = g.candidate_paths(Vec2::new(-30.0, 0.5), &PathExtraction::default()).unwrap();
        assert_eq!(paths.len(), 1);
        assert!((paths[0].length() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn fork_gives_two_paths_in_edge_order() {
        let g = fork();
        let routes = g.candidate_routes(Vec2::new(10.0, 0.0), &PathExtraction::default()).unwrap();
        assert_eq!(routes.len(), 2);
        assert_eq!(routes[0].edges, vec![0, 1]);
        assert_eq!(routes[1].edges, vec![0, 2]);
        for r in &routes {
            assert!((r.path.length() - 30.0).abs() < 1e-9);
        }
        assert_eq!(routes[1].path.point_at(30.0), Vec2::new(20.0, 20.0));
        assert_eq!(routes[1].path.speed_limit_at(25.0), 4.0);
    }

    #[test]
    fn far_agent_is_off_map() {
        let g = fork();
        let err = g.candidate_paths(Vec2::new(0.0, 100.0), &PathExtraction::default());
        assert!(matches!(err, Err(MapError::OffMap { .. })));
    }

    #[test]
    fn dead_end_truncates() {
        let g = fork();
        let paths = g.candidate_paths(Vec2::new(50.0, 0.0), &PathExtraction::default()).unwrap();
        assert_eq!(paths.len(), 1);
        assert!((paths[0].length() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn ego_path_follows_node_sequence() {
        let g = fork();
        let p = g.ego_path("main").unwrap();
        assert!((p.length() - 100.0).abs() < 1e-9);
        assert!(g.ego_path("nope").is_err());
    }

    #[test]
    fn invalid_maps_are_rejected() {
        let bad = FORK.replace("{ from = 1, to = 3, speed_limit = 4.0 }", "{ from = 1, to = 9, speed_limit = 4.0 }");
        assert!(matches!(LaneGraph::parse(&bad), Err(MapError::UnknownNode { .. })));
        let bad = FORK.replace("nodes = [4, 0, 1, 2]", "nodes = [4, 1]");
        assert!(matches!(LaneGraph::parse(&bad), Err(MapError::BadEgoPath { .. })));
    }

    #[test]
    fn paths_ignore_speed_and_heading() {
        // output depends on position only
        let g = fork();
        let a = g.candidate_paths(Vec2::new(10.0, 1.0), &PathExtraction::default()).unwrap();
        let b = g.candidate_paths(Vec2::new(10.0, 1.0), &PathExtraction::default()).unwrap();
        assert_eq!(a, b);
    }
}
