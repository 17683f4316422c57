//! MER routing over a road network with Dijkstra's algorithm.
//!
//! Road network file:
//!
//! ```text
//! [nodes]
//! node,role,bus        # role: depot | bus | junction
//! depot-1,depot,
//! r650,bus,650
//! [edges]
//! node_a,node_b,minutes
//! depot-1,r650,15
//! ```
//!
//! Edges are undirected with strictly positive travel times. Among
//! equal-time routes the lexicographically smallest node sequence wins.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("road network line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown road node '{0}'")]
    UnknownNode(String),
    #[error("feeder bus '{0}' has no road node")]
    UnmappedBus(String),
    #[error("no route from '{from}' to '{to}'")]
    Unreachable { from: String, to: String },
    #[error("road network has no depot")]
    NoDepot,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug)]
pub struct RoadNetwork {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    /// Position of each node id in sorted order, for path tie-breaks.
    rank: Vec<usize>,
    depots: Vec<usize>,
    bus_node: HashMap<String, usize>,
    adj: Vec<Vec<(usize, f64)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Route {
    pub depot: String,
    pub target: String,
    pub path: Vec<String>,
    pub travel_minutes: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseDelay {
    Hours(f64),
    Unreachable,
}

impl ResponseDelay {
    pub fn hours(self) -> Option<f64> {
        match self {
            ResponseDelay::Hours(h) => Some(h),
            ResponseDelay::Unreachable => None,
        }
    }
}

/// Travel plus installation time in hours.
pub fn response_delay(route: Option<&Route>, installation_minutes: f64) -> ResponseDelay {
    match route {
        Some(r) => ResponseDelay::Hours((r.travel_minutes + installation_minutes) / 60.0),
        None => ResponseDelay::Unreachable,
    }
}

impl RoadNetwork {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RoutingError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RoutingError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, RoutingError> {
        #[derive(PartialEq)]
        enum Part {
            None,
            Nodes,
            Edges,
        }
        let mut part = Part::None;
        let mut builder = Builder::default();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let row = raw.split('#').next().unwrap_or("").trim();
            if row.is_empty() {
                continue;
            }
            let err = |message: String| RoutingError::Parse { line, message };
            match row {
                "[nodes]" => {
                    part = Part::Nodes;
                    continue;
                }
                "[edges]" => {
                    part = Part::Edges;
                    continue;
                }
                _ => {}
            }
            let fields: Vec<&str> = row.split(',').map(str::trim).collect();
            match part {
                Part::None => return Err(err("row before [nodes] or [edges]".into())),
                Part::Nodes => {
                    if fields.first() == Some(&"node") {
                        continue;
                    }
                    if fields.len() < 2 || fields.len() > 3 {
                        return Err(err("expected node,role[,bus]".into()));
                    }
                    let bus = fields.get(2).copied().filter(|b| !b.is_empty());
                    builder.node(fields[0], fields[1], bus).map_err(err)?;
                }
                Part::Edges => {
                    if fields.first() == Some(&"node_a") {
                        continue;
                    }
                    if fields.len() != 3 {
                        return Err(err("expected node_a,node_b,minutes".into()));
                    }
                    let minutes: f64 = fields[2]
                        .parse()
                        .map_err(|_| err(format!("'{}' is not a number", fields[2])))?;
                    builder.edge(fields[0], fields[1], minutes).map_err(err)?;
                }
            }
        }
        builder.finish()
    }

    /// Builds a network programmatically: `nodes` are (id, is_depot, bus),
    /// `edges` are (a, b, minutes).
    pub fn from_parts(
        nodes: &[(&str, bool, Option<&str>)],
        edges: &[(&str, &str, f64)],
    ) -> Result<Self, RoutingError> {
        let mut b = Builder::default();
        let wrap = |message| RoutingError::Parse { line: 0, message };
        for &(id, depot, bus) in nodes {
            let role = if depot { "depot" } else if bus.is_some() { "bus" } else { "junction" };
            b.node(id, role, bus).map_err(wrap)?;
        }
        for &(a, c, m) in edges {
            b.edge(a, c, m).map_err(wrap)?;
        }
        b.finish()
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.ids
    }

    pub fn depots(&self) -> impl Iterator<Item = &str> {
        self.depots.iter().map(|&d| self.ids[d].as_str())
    }

    pub fn node_for_bus(&self, bus: &str) -> Option<&str> {
        self.bus_node.get(bus).map(|&i| self.ids[i].as_str())
    }

    /// Minimum-time route from `depot` to `target`.
    pub fn shortest_route(&self, depot: &str, target: &str) -> Result<Route, RoutingError> {
        let from = self.lookup(depot)?;
        let to = self.lookup(target)?;
        let (dist, path) = self.dijkstra(from, Some(to));
        match &path[to] {
            Some(p) => Ok(Route {
                depot: depot.to_string(),
                target: target.to_string(),
                path: p.iter().map(|&i| self.ids[i].clone()).collect(),
                travel_minutes: dist[to],
            }),
            None => Err(RoutingError::Unreachable {
                from: depot.to_string(),
                to: target.to_string(),
            }),
        }
    }

    /// Route from whichever depot reaches `target` soonest; ties go to the
    /// smaller depot id.
    pub fn nearest_depot_route(&self, target: &str) -> Result<Route, RoutingError> {
        let mut depots: Vec<&str> = self.depots().collect();
        depots.sort_unstable();
        let mut best: Option<Route> = None;
        for d in depots {
            match self.shortest_route(d, target) {
                Ok(r) => {
                    if best.as_ref().is_none_or(|b| r.travel_minutes < b.travel_minutes) {
                        best = Some(r);
                    }
                }
                Err(RoutingError::Unreachable { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        best.ok_or_else(|| RoutingError::Unreachable {
            from: "any depot".into(),
            to: target.to_string(),
        })
    }

    /// Nearest-depot route to the road node hosting feeder bus `bus`.
    pub fn route_to_bus(&self, bus: &str) -> Result<Route, RoutingError> {
        let node = self
            .node_for_bus(bus)
            .ok_or_else(|| RoutingError::UnmappedBus(bus.to_string()))?;
        self.nearest_depot_route(node)
    }

    /// Travel minutes from `source` to every node (infinite when unreachable).
    pub fn distances_from(&self, source: &str) -> Result<Vec<f64>, RoutingError> {
        let s = self.lookup(source)?;
        Ok(self.dijkstra(s, None).0)
    }

    fn lookup(&self, id: &str) -> Result<usize, RoutingError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| RoutingError::UnknownNode(id.to_string()))
    }

    fn dijkstra(&self, source: usize, stop: Option<usize>) -> (Vec<f64>, Vec<Option<Vec<usize>>>) {
        let n = self.ids.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut path: Vec<Option<Vec<usize>>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        path[source] = Some(vec![source]);
        heap.push(Entry(0.0, source));
        while let Some(Entry(d, u)) = heap.pop() {
            if done[u] || d > dist[u] {
                continue;
            }
            done[u] = true;
            if Some(u) == stop {
                break;
            }
            for &(v, w) in &self.adj[u] {
                if done[v] {
                    continue;
                }
                let nd = d + w;
                let better = match nd.total_cmp(&dist[v]) {
                    Ordering::Less => true,
                    Ordering::Equal => {
                        let cand = path[u].as_ref().expect("settled node has a path");
                        let cur = path[v].as_ref().expect("reached node has a path");
                        self.lex_less_extended(cand, v, cur)
                    }
                    Ordering::Greater => false,
                };
                if better {
                    dist[v] = nd;
                    let mut p = path[u].clone().expect("settled node has a path");
                    p.push(v);
                    path[v] = Some(p);
                    heap.push(Entry(nd, v));
                }
            }
        }
        (dist, path)
    }

    /// Is `prefix ++ [last]` lexicographically before `other`?
    fn lex_less_extended(&self, prefix: &[usize], last: usize, other: &[usize]) -> bool {
        let cand = prefix.iter().chain(std::iter::once(&last)).map(|&i| self.rank[i]);
        let cur = other.iter().map(|&i| self.rank[i]);
        cand.lt(cur)
    }
}

/// Min-heap entry ordered by distance, then node index.
#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Default)]
struct Builder {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    depots: Vec<usize>,
    bus_node: HashMap<String, usize>,
    edges: Vec<(usize, usize, f64)>,
}

impl Builder {
    fn node(&mut self, id: &str, role: &str, bus: Option<&str>) -> Result<(), String> {
        if id.is_empty() {
            return Err("empty node id".into());
        }
        if self.index.contains_key(id) {
            return Err(format!("duplicate node '{id}'"));
        }
        let i = self.ids.len();
        match role {
            "depot" => self.depots.push(i),
            "bus" if bus.is_none() => return Err(format!("bus node '{id}' needs a bus id")),
            "bus" | "junction" | "" => {}
            other => return Err(format!("unknown role '{other}'")),
        }
        if let Some(b) = bus {
            if self.bus_node.insert(b.to_string(), i).is_some() {
                return Err(format!("feeder bus '{b}' mapped to more than one road node"));
            }
        }
        self.index.insert(id.to_string(), i);
        self.ids.push(id.to_string());
        Ok(())
    }

    fn edge(&mut self, a: &str, b: &str, minutes: f64) -> Result<(), String> {
        let ia = *self.index.get(a).ok_or_else(|| format!("unknown node '{a}'"))?;
        let ib = *self.index.get(b).ok_or_else(|| format!("unknown node '{b}'"))?;
        if !(minutes > 0.0 && minutes.is_finite()) {
            return Err(format!("travel time must be positive and finite, got {minutes}"));
        }
        self.edges.push((ia, ib, minutes));
        Ok(())
    }

    fn finish(self) -> Result<RoadNetwork, RoutingError> {
        if self.depots.is_empty() {
            return Err(RoutingError::NoDepot);
        }
        let n = self.ids.len();
        let mut adj = vec![Vec::new(); n];
        for &(a, b, w) in &self.edges {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        let mut sorted: Vec<usize> = (0..n).collect();
        sorted.sort_by(|&a, &b| self.ids[a].cmp(&self.ids[b]));
        let mut rank = vec![0; n];
        for (r, &i) in sorted.iter().enumerate() {
            rank[i] = r;
        }
        Ok(RoadNetwork {
            ids: self.ids,
            index: self.index,
            rank,
            depots: self.depots,
            bus_node: self.bus_node,
            adj,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> RoadNetwork {
        RoadNetwork::from_parts(
            &[("d", true, None), ("m", false, None), ("t", false, Some("650"))],
            &[("d", "m", 1.0), ("m", "t", 1.0), ("d", "t", 3.0)],
        )
        .unwrap()
    }

    #[test]
    fn depot_equals_target() {
        let r = triangle().shortest_route("d", "d").unwrap();
        assert_eq!(r.travel_minutes, 0.0);
        assert_eq!(r.path, vec!["d"]);
    }

    #[test]
    fn two_hops_beat_direct_edge() {
        let r = triangle().shortest_route("d", "t").unwrap();
        assert_eq!(r.travel_minutes, 2.0);
        assert_eq!(r.path, vec!["d", "m", "t"]);
        assert_eq!(triangle().route_to_bus("650").unwrap(), r);
    }

    #[test]
    fn equal_cost_paths_break_ties_lexicographically() {
        let net = RoadNetwork::from_parts(
            &[("d", true, None), ("b", false, None), ("a", false, None), ("t", false, None)],
            &[("d", "b", 1.0), ("b", "t", 1.0), ("d", "a", 1.0), ("a", "t", 1.0)],
        )
        .unwrap();
        for _ in 0..3 {
            assert_eq!(net.shortest_route("d", "t").unwrap().path, vec!["d", "a", "t"]);
        }
    }

    #[test]
    fn unreachable_target() {
        let net = RoadNetwork::from_parts(&[("d", true, None), ("x", false, Some("9"))], &[]).unwrap();
        assert!(matches!(net.shortest_route("d", "x"), Err(RoutingError::Unreachable { .. })));
        assert!(matches!(net.route_to_bus("9"), Err(RoutingError::Unreachable { .. })));
        assert!(matches!(net.route_to_bus("10"), Err(RoutingError::UnmappedBus(_))));
    }

    #[test]
    fn nearest_depot_wins() {
        let net = RoadNetwork::from_parts(
            &[("d1", true, None), ("d2", true, None), ("t", false, Some("b"))],
            &[("d1", "t", 30.0), ("d2", "t", 12.0)],
        )
        .unwrap();
        let r = net.route_to_bus("b").unwrap();
        assert_eq!(r.depot, "d2");
        assert_eq!(r.travel_minutes, 12.0);
    }

    #[test]
    fn delays() {
        let zero = Route { depot: "d".into(), target: "d".into(), path: vec!["d".into()], travel_minutes: 0.0 };
        assert_eq!(response_delay(Some(&zero), 15.0), ResponseDelay::Hours(0.25));
        let r = Route { travel_minutes: 45.0, ..zero };
        assert_eq!(response_delay(Some(&r), 15.0), ResponseDelay::Hours(1.0));
        assert_eq!(response_delay(None, 15.0), ResponseDelay::Unreachable);
    }

    #[test]
    fn parse_file_format() {
        let text = "# roads\n[nodes]\nnode,role,bus\ndep,depot,\nr1,bus,1\nj,junction,\n[edges]\nnode_a,node_b,minutes\ndep,j,4\nj,r1,2.5\n";
        let net = RoadNetwork::parse(text).unwrap();
        assert_eq!(net.node_count(), 3);
        assert_eq!(net.route_to_bus("1").unwrap().travel_minutes, 6.5);
        assert!(matches!(RoadNetwork::parse("[nodes]\nx,bus,\n"), Err(RoutingError::Parse { line: 2, .. })));
        assert!(matches!(RoadNetwork::parse("[nodes]\nx,junction,\n"), Err(RoutingError::NoDepot)));
        assert!(RoadNetwork::parse("[nodes]\nd,depot,\n[edges]\nd,q,1\n").is_err());
        assert!(RoadNetwork::parse("[nodes]\nd,depot,\ne,junction,\n[edges]\nd,e,0\n").is_err());
        assert!(RoadNetwork::parse("[nodes]\nd,depot,\na,bus,1\nb,bus,1\n").is_err());
    }
}
