//! Road-graph geometry: polyline maps, grid generation, shortest paths.
//!
//! All coordinates are planar meters. Graphs are undirected and must be
//! connected; every mobility model in the simulator moves on these graphs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use thiserror::Error;

/// Endpoints closer than this are merged into one vertex when loading a map.
pub const MERGE_TOLERANCE_M: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("map parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("road graph is disconnected (component sizes: {sizes:?})")]
    Disconnected { sizes: Vec<usize> },
    #[error("invalid grid dimensions: rows and cols must be >= 2 and spacing > 0 (got {rows}x{cols}, spacing {spacing})")]
    InvalidDimension { rows: usize, cols: usize, spacing: f64 },
    #[error("unknown vertex id {0}")]
    UnknownVertex(VertexId),
    #[error("vertex {to} unreachable from {from}")]
    Unreachable { from: VertexId, to: VertexId },
    #[error("graph has no vertices")]
    EmptyGraph,
}

/// Planar map coordinate in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: Point) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(&self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u32);

impl VertexId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Undirected edge between two vertices, with its Euclidean length cached.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    pub a: VertexId,
    pub b: VertexId,
    pub length: f64,
}

/// Undirected planar road network. Immutable once built.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    vertices: Vec<Point>,
    edges: Vec<Edge>,
    // adjacency[v] = (neighbor, edge length), sorted by neighbor id
    adjacency: Vec<Vec<(VertexId, f64)>>,
}

/// A walk along graph edges; consecutive vertices always share an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub vertices: Vec<VertexId>,
    pub total_length: f64,
}

impl Path {
    pub fn single(v: VertexId) -> Self {
        Self { vertices: vec![v], total_length: 0.0 }
    }
}

impl RoadGraph {
    fn build(vertices: Vec<Point>, mut raw_edges: Vec<(VertexId, VertexId)>) -> Result<Self, GeoError> {
        if vertices.is_empty() {
            return Err(GeoError::EmptyGraph);
        }
        // normalize to a < b and drop duplicates
        for e in raw_edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        raw_edges.sort();
        raw_edges.dedup();

        let mut edges = Vec::with_capacity(raw_edges.len());
        let mut adjacency = vec![Vec::new(); vertices.len()];
        for (a, b) in raw_edges {
            let length = vertices[a.index()].distance(vertices[b.index()]);
            edges.push(Edge { a, b, length });
            adjacency[a.index()].push((b, length));
            adjacency[b.index()].push((a, length));
        }
        for adj in adjacency.iter_mut() {
            adj.sort_by_key(|(v, _)| *v);
        }

        let graph = Self { vertices, edges, adjacency };
        let sizes = graph.component_sizes();
        if sizes.len() > 1 {
            return Err(GeoError::Disconnected { sizes });
        }
        Ok(graph)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn position(&self, v: VertexId) -> Point {
        self.vertices[v.index()]
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> {
        (0..self.vertices.len() as u32).map(VertexId)
    }

    pub fn neighbors(&self, v: VertexId) -> &[(VertexId, f64)] {
        &self.adjacency[v.index()]
    }

    /// Smallest-x, smallest-y corner and largest-x, largest-y corner.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        (min, max)
    }

    fn component_sizes(&self) -> Vec<usize> {
        let n = self.vertices.len();
        let mut seen = vec![false; n];
        let mut sizes = Vec::new();
        let mut stack = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut size = 0usize;
            seen[start] = true;
            stack.push(start);
            while let Some(v) = stack.pop() {
                size += 1;
                for &(w, _) in &self.adjacency[v] {
                    if !seen[w.index()] {
                        seen[w.index()] = true;
                        stack.push(w.index());
                    }
                }
            }
            sizes.push(size);
        }
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }

    fn check_vertex(&self, v: VertexId) -> Result<(), GeoError> {
        if v.index() < self.vertices.len() {
            Ok(())
        } else {
            Err(GeoError::UnknownVertex(v))
        }
    }

    /// Distance from every vertex to `target` (Dijkstra).
    fn distances_to(&self, target: VertexId) -> Vec<f64> {
        let n = self.vertices.len();
        let mut dist = vec![f64::INFINITY; n];
        dist[target.index()] = 0.0;

        struct Item(f64, VertexId);
        impl PartialEq for Item {
            fn eq(&self, other: &Self) -> bool {
                self.0 == other.0 && self.1 == other.1
            }
        }
        impl Eq for Item {}
        impl PartialOrd for Item {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Item {
            fn cmp(&self, other: &Self) -> Ordering {
                // min-heap on distance, then vertex id
                other
                    .0
                    .total_cmp(&self.0)
                    .then_with(|| other.1.cmp(&self.1))
            }
        }

        let mut heap = BinaryHeap::new();
        heap.push(Item(0.0, target));
        while let Some(Item(d, v)) = heap.pop() {
            if d > dist[v.index()] {
                continue;
            }
            for &(w, len) in &self.adjacency[v.index()] {
                let nd = d + len;
                if nd < dist[w.index()] {
                    dist[w.index()] = nd;
                    heap.push(Item(nd, w));
                }
            }
        }
        dist
    }

    /// Minimal-length path from `from` to `to`; among equal-length paths the
    /// lexicographically smallest vertex-id sequence is returned.
    pub fn shortest_path(&self, from: VertexId, to: VertexId) -> Result<Path, GeoError> {
        self.check_vertex(from)?;
        self.check_vertex(to)?;
        if from == to {
            return Ok(Path::single(from));
        }
        let dist = self.distances_to(to);
        let total = dist[from.index()];
        if !total.is_finite() {
            return Err(GeoError::Unreachable { from, to });
        }
        let eps = 1e-9 * total.max(1.0);

        // Greedy walk: at each vertex take the smallest-id neighbor that still
        // admits a completion of minimal total length.
        let mut vertices = vec![from];
        let mut covered = 0.0;
        let mut v = from;
        while v != to {
            let mut next = None;
            for &(w, len) in &self.adjacency[v.index()] {
                if covered + len + dist[w.index()] <= total + eps {
                    next = Some((w, len));
                    break; // adjacency sorted by id
                }
            }
            let (w, len) = next.expect("shortest-path walk lost optimality");
            covered += len;
            vertices.push(w);
            v = w;
        }
        Ok(Path { vertices, total_length: covered })
    }

    /// Vertex closest to `p` by Euclidean distance; ties go to the smaller id.
    pub fn nearest_vertex(&self, p: Point) -> VertexId {
        let mut best = VertexId(0);
        let mut best_d2 = self.vertices[0].distance_sq(p);
        for (i, q) in self.vertices.iter().enumerate().skip(1) {
            let d2 = q.distance_sq(p);
            if d2 < best_d2 {
                best_d2 = d2;
                best = VertexId(i as u32);
            }
        }
        best
    }

    /// Writes the map in the polyline format accepted by [`load_map`],
    /// one edge per line.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let pa = self.position(e.a);
            let pb = self.position(e.b);
            out.push_str(&format!("{},{} {},{}\n", pa.x, pa.y, pb.x, pb.y));
        }
        out
    }
}

/// Parses a polyline map: one polyline per line, points as `x,y` separated by
/// spaces, `#` comments and blank lines ignored. Endpoints within
/// [`MERGE_TOLERANCE_M`] are merged into a single vertex.
pub fn load_map(text: &str) -> Result<RoadGraph, GeoError> {
    let mut vertices: Vec<Point> = Vec::new();
    let mut edges: Vec<(VertexId, VertexId)> = Vec::new();

    let mut intern = |p: Point| -> VertexId {
        for (i, q) in vertices.iter().enumerate() {
            if q.distance_sq(p) <= MERGE_TOLERANCE_M * MERGE_TOLERANCE_M {
                return VertexId(i as u32);
            }
        }
        vertices.push(p);
        VertexId(vertices.len() as u32 - 1)
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |tok: &str| -> Result<Point, GeoError> {
            let err = |m: String| GeoError::Parse { line: lineno + 1, message: m };
            let (xs, ys) = tok
                .split_once(',')
                .ok_or_else(|| err(format!("expected x,y pair, got {tok:?}")))?;
            let x: f64 = xs
                .parse()
                .map_err(|_| err(format!("bad x coordinate {xs:?}")))?;
            let y: f64 = ys
                .parse()
                .map_err(|_| err(format!("bad y coordinate {ys:?}")))?;
            if !x.is_finite() || !y.is_finite() {
                return Err(err(format!("non-finite coordinate in {tok:?}")));
            }
            Ok(Point::new(x, y))
        };

        let mut prev: Option<VertexId> = None;
        let mut points = 0usize;
        for tok in line.split_whitespace() {
            let p = parse(tok)?;
            let v = intern(p);
            if let Some(pv) = prev {
                if pv == v {
                    return Err(GeoError::Parse {
                        line: lineno + 1,
                        message: format!("zero-length segment at {tok:?}"),
                    });
                }
                edges.push((pv, v));
            }
            prev = Some(v);
            points += 1;
        }
        if points < 2 {
            return Err(GeoError::Parse {
                line: lineno + 1,
                message: format!("polyline needs at least 2 points, got {points}"),
            });
        }
    }

    if vertices.is_empty() {
        return Err(GeoError::EmptyGraph);
    }
    RoadGraph::build(vertices, edges)
}

/// Manhattan grid of `rows` x `cols` vertices spaced `spacing` meters apart.
/// Vertex ids are row-major: id = row * cols + col, at (col*spacing, row*spacing).
pub fn generate_grid_map(rows: usize, cols: usize, spacing: f64) -> Result<RoadGraph, GeoError> {
    if rows < 2 || cols < 2 || !(spacing > 0.0) {
        return Err(GeoError::InvalidDimension { rows, cols, spacing });
    }
    let mut vertices = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            vertices.push(Point::new(c as f64 * spacing, r as f64 * spacing));
        }
    }
    let id = |r: usize, c: usize| VertexId((r * cols + c) as u32);
    let mut edges = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    RoadGraph::build(vertices, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_map_merges_shared_endpoints() {
        let g = load_map("0,0 100,0\n100,0 100,100\n").unwrap();
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn load_map_collinear_chain() {
        let g = load_map("0,0 500,0 1000,0\n").unwrap();
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.edge_count(), 2);
        for e in g.edges() {
            assert_eq!(e.length, 500.0);
        }
    }

    #[test]
    fn load_map_rejects_disconnected() {
        let err = load_map("0,0 1,0\n5,5 6,5\n").unwrap_err();
        match err {
            GeoError::Disconnected { sizes } => assert_eq!(sizes, vec![2, 2]),
            other => panic!("expected Disconnected, got {other}"),
        }
    }

    #[test]
    fn load_map_reports_line_numbers() {
        let err = load_map("# comment\n0,0 1,0\n0,0 bogus\n").unwrap_err();
        match err {
            GeoError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected Parse, got {other}"),
        }
    }

    #[test]
    fn grid_unit_square() {
        let g = generate_grid_map(2, 2, 500.0).unwrap();
        assert_eq!(g.vertex_count(), 4);
        assert_eq!(g.edge_count(), 4);
        for e in g.edges() {
            assert_eq!(e.length, 500.0);
        }
    }

    #[test]
    fn grid_edge_count_matches_enumeration() {
        // oracle: count adjacent lattice pairs directly
        let rows = 7usize;
        let cols = 9usize;
        let mut expected = 0usize;
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    expected += 1;
                }
                if r + 1 < rows {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 110);

        let g = generate_grid_map(rows, cols, 500.0).unwrap();
        assert_eq!(g.vertex_count(), 63);
        assert_eq!(g.edge_count(), expected);
        let (min, max) = g.bounding_box();
        assert_eq!((max.x - min.x, max.y - min.y), (4000.0, 3000.0));
    }

    #[test]
    fn grid_rejects_degenerate_dimensions() {
        assert!(matches!(
            generate_grid_map(1, 5, 500.0),
            Err(GeoError::InvalidDimension { .. })
        ));
        assert!(matches!(
            generate_grid_map(2, 2, 0.0),
            Err(GeoError::InvalidDimension { .. })
        ));
    }

    #[test]
    fn shortest_path_identity() {
        let g = generate_grid_map(2, 2, 500.0).unwrap();
        let p = g.shortest_path(VertexId(3), VertexId(3)).unwrap();
        assert_eq!(p.vertices, vec![VertexId(3)]);
        assert_eq!(p.total_length, 0.0);
    }

    #[test]
    fn shortest_path_breaks_ties_lexicographically() {
        // opposite corners of a square: via vertex 1 and via vertex 2 are both
        // 1000 m; the smaller intermediate id must win
        let g = generate_grid_map(2, 2, 500.0).unwrap();
        let p = g.shortest_path(VertexId(0), VertexId(3)).unwrap();
        assert_eq!(p.vertices, vec![VertexId(0), VertexId(1), VertexId(3)]);
        assert_eq!(p.total_length, 1000.0);
    }

    /// Oracle: enumerate every simple path and keep the best by
    /// (length, vertex sequence).
    fn brute_force_path(g: &RoadGraph, from: VertexId, to: VertexId) -> Path {
        fn rec(
            g: &RoadGraph,
            v: VertexId,
            to: VertexId,
            visited: &mut Vec<bool>,
            current: &mut Vec<VertexId>,
            length: f64,
            best: &mut Option<Path>,
        ) {
            if v == to {
                let better = match best {
                    None => true,
                    Some(b) => {
                        let eps = 1e-9 * b.total_length.max(1.0);
                        if length < b.total_length - eps {
                            true
                        } else if length > b.total_length + eps {
                            false
                        } else {
                            current.as_slice() < b.vertices.as_slice()
                        }
                    }
                };
                if better {
                    *best = Some(Path { vertices: current.clone(), total_length: length });
                }
                return;
            }
            for &(w, len) in g.neighbors(v) {
                if !visited[w.index()] {
                    visited[w.index()] = true;
                    current.push(w);
                    rec(g, w, to, visited, current, length + len, best);
                    current.pop();
                    visited[w.index()] = false;
                }
            }
        }
        let mut visited = vec![false; g.vertex_count()];
        visited[from.index()] = true;
        let mut current = vec![from];
        let mut best = None;
        rec(g, from, to, &mut visited, &mut current, 0.0, &mut best);
        best.expect("connected graph")
    }

    #[test]
    fn shortest_path_matches_brute_force_enumeration() {
        // a handful of small random graphs, all pairs
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = 6usize;
            let mut vertices = Vec::new();
            for _ in 0..n {
                vertices.push(Point::new(
                    rng.gen_range(0.0..1000.0),
                    rng.gen_range(0.0..1000.0),
                ));
            }
            // spanning chain plus random extra edges keeps it connected
            let mut edges = Vec::new();
            for i in 1..n {
                edges.push((VertexId(i as u32 - 1), VertexId(i as u32)));
            }
            for _ in 0..4 {
                let a = rng.gen_range(0..n as u32);
                let b = rng.gen_range(0..n as u32);
                if a != b {
                    edges.push((VertexId(a), VertexId(b)));
                }
            }
            let g = RoadGraph::build(vertices, edges).unwrap();
            for a in 0..n as u32 {
                for b in 0..n as u32 {
                    let got = g.shortest_path(VertexId(a), VertexId(b)).unwrap();
                    let want = brute_force_path(&g, VertexId(a), VertexId(b));
                    assert_eq!(got.vertices, want.vertices, "{a} -> {b}");
                    assert!((got.total_length - want.total_length).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn nearest_vertex_exact_and_tie() {
        let g = generate_grid_map(2, 2, 500.0).unwrap();
        assert_eq!(g.nearest_vertex(Point::new(500.0, 0.0)), VertexId(1));
        // equidistant between vertex 0 (0,0) and vertex 1 (500,0)
        assert_eq!(g.nearest_vertex(Point::new(250.0, 0.0)), VertexId(0));
    }

    #[test]
    fn nearest_vertex_matches_linear_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let g = generate_grid_map(5, 4, 133.0).unwrap();
        for _ in 0..20 {
            let p = Point::new(rng.gen_range(-100.0..700.0), rng.gen_range(-100.0..800.0));
            // independent scan over ids in reverse, strict improvement only
            let mut best = None;
            for v in (0..g.vertex_count() as u32).rev() {
                let d = g.position(VertexId(v)).distance(p);
                match best {
                    None => best = Some((d, VertexId(v))),
                    Some((bd, bv)) => {
                        if d < bd || (d == bd && v < bv.0) {
                            best = Some((d, VertexId(v)));
                        }
                    }
                }
            }
            assert_eq!(g.nearest_vertex(p), best.unwrap().1);
        }
    }

    #[test]
    fn serialize_round_trips_grid() {
        let g = generate_grid_map(3, 4, 250.0).unwrap();
        let reloaded = load_map(&g.serialize()).unwrap();
        assert_eq!(reloaded.vertex_count(), g.vertex_count());
        assert_eq!(reloaded.edge_count(), g.edge_count());
        // identical coordinates, possibly renumbered
        for v in g.vertex_ids() {
            let p = g.position(v);
            let nearest = reloaded.nearest_vertex(p);
            assert_eq!(reloaded.position(nearest), p);
        }
    }
}
