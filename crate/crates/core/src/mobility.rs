//! Node movement: stationary infrastructure, randomly roaming cars, and
//! fixed-route buses, all moving along the road graph.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::geo::{GeoError, Path, Point, RoadGraph, VertexId};

#[derive(Debug, Error)]
pub enum MobilityError {
    #[error("invalid speed range [{min}, {max}] m/s")]
    BadSpeedRange { min: f64, max: f64 },
    #[error("invalid pause range [{min}, {max}] s")]
    BadPauseRange { min: f64, max: f64 },
    #[error("fixed route needs at least 2 stops")]
    RouteTooShort,
    #[error("fixed route repeats stop {0} consecutively")]
    RouteRepeatsStop(VertexId),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Movement behavior of one node.
#[derive(Debug, Clone)]
pub enum MovementModel {
    /// Never moves; sensors and PoPs.
    Stationary { at: Point },
    /// Repeatedly picks a uniform-random graph vertex and drives the shortest
    /// path to it at a per-leg uniform-random speed, pausing at each waypoint.
    MapRandomWaypoint {
        speed_min: f64,
        speed_max: f64,
        pause_min: f64,
        pause_max: f64,
    },
    /// Cycles through an ordered stop list forever along shortest paths.
    FixedRoute {
        stops: Vec<VertexId>,
        speed_min: f64,
        speed_max: f64,
        pause_min: f64,
        pause_max: f64,
    },
}

impl MovementModel {
    fn speed_range(&self) -> Option<(f64, f64)> {
        match self {
            MovementModel::Stationary { .. } => None,
            MovementModel::MapRandomWaypoint { speed_min, speed_max, .. }
            | MovementModel::FixedRoute { speed_min, speed_max, .. } => {
                Some((*speed_min, *speed_max))
            }
        }
    }

    fn pause_range(&self) -> Option<(f64, f64)> {
        match self {
            MovementModel::Stationary { .. } => None,
            MovementModel::MapRandomWaypoint { pause_min, pause_max, .. }
            | MovementModel::FixedRoute { pause_min, pause_max, .. } => {
                Some((*pause_min, *pause_max))
            }
        }
    }

    fn validate(&self, graph: &RoadGraph) -> Result<(), MobilityError> {
        if let Some((min, max)) = self.speed_range() {
            if !(min > 0.0 && min <= max) {
                return Err(MobilityError::BadSpeedRange { min, max });
            }
        }
        if let Some((min, max)) = self.pause_range() {
            if !(min >= 0.0 && min <= max) {
                return Err(MobilityError::BadPauseRange { min, max });
            }
        }
        if let MovementModel::FixedRoute { stops, .. } = self {
            if stops.len() < 2 {
                return Err(MobilityError::RouteTooShort);
            }
            for s in stops {
                if s.index() >= graph.vertex_count() {
                    return Err(GeoError::UnknownVertex(*s).into());
                }
            }
            // consecutive stops (cyclically) must differ or a leg has zero length
            for i in 0..stops.len() {
                let next = stops[(i + 1) % stops.len()];
                if stops[i] == next {
                    return Err(MobilityError::RouteRepeatsStop(next));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    /// Pause with `remaining` seconds left; infinity for stationary nodes.
    Paused { remaining: f64 },
    Traversing { path: Path, covered: f64, speed: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovementState {
    pub position: Point,
    phase: Phase,
    /// Vertex the node last arrived at (meaningless for Stationary).
    at_vertex: VertexId,
    /// FixedRoute: index into `stops` of the next stop to head for.
    next_stop: usize,
}

/// Places a node according to its model. Random draws (in order): start
/// vertex for MapRandomWaypoint, then the initial pause duration.
pub fn init_state(
    model: &MovementModel,
    graph: &RoadGraph,
    rng: &mut ChaCha12Rng,
) -> Result<MovementState, MobilityError> {
    model.validate(graph)?;
    match model {
        MovementModel::Stationary { at } => Ok(MovementState {
            position: *at,
            phase: Phase::Paused { remaining: f64::INFINITY },
            at_vertex: VertexId(0),
            next_stop: 0,
        }),
        MovementModel::MapRandomWaypoint { pause_min, pause_max, .. } => {
            let start = VertexId(rng.gen_range(0..graph.vertex_count() as u32));
            let pause = rng.gen_range(*pause_min..=*pause_max);
            Ok(MovementState {
                position: graph.position(start),
                phase: Phase::Paused { remaining: pause },
                at_vertex: start,
                next_stop: 0,
            })
        }
        MovementModel::FixedRoute { stops, pause_min, pause_max, .. } => {
            let start = stops[0];
            let pause = rng.gen_range(*pause_min..=*pause_max);
            Ok(MovementState {
                position: graph.position(start),
                phase: Phase::Paused { remaining: pause },
                at_vertex: start,
                next_stop: 1,
            })
        }
    }
}

/// Point `covered` meters along `path` from its first vertex.
fn point_along(graph: &RoadGraph, path: &Path, covered: f64) -> Point {
    let mut left = covered;
    for pair in path.vertices.windows(2) {
        let a = graph.position(pair[0]);
        let b = graph.position(pair[1]);
        let len = a.distance(b);
        if left <= len {
            let t = if len > 0.0 { left / len } else { 0.0 };
            return Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
        }
        left -= len;
    }
    graph.position(*path.vertices.last().expect("non-empty path"))
}

/// Picks the destination and speed for the next leg. Draws (in order):
/// destination vertex (MapRandomWaypoint only), then leg speed.
fn next_leg(
    model: &MovementModel,
    state: &mut MovementState,
    graph: &RoadGraph,
    rng: &mut ChaCha12Rng,
) -> (Path, f64) {
    match model {
        MovementModel::Stationary { .. } => unreachable!("stationary nodes never start a leg"),
        MovementModel::MapRandomWaypoint { speed_min, speed_max, .. } => {
            let n = graph.vertex_count() as u32;
            // uniform over vertices other than the current one
            let mut dest = rng.gen_range(0..n - 1);
            if dest >= state.at_vertex.0 {
                dest += 1;
            }
            let speed = rng.gen_range(*speed_min..=*speed_max);
            let path = graph
                .shortest_path(state.at_vertex, VertexId(dest))
                .expect("connected graph");
            (path, speed)
        }
        MovementModel::FixedRoute { stops, speed_min, speed_max, .. } => {
            let dest = stops[state.next_stop];
            state.next_stop = (state.next_stop + 1) % stops.len();
            let speed = rng.gen_range(*speed_min..=*speed_max);
            let path = graph
                .shortest_path(state.at_vertex, dest)
                .expect("connected graph");
            (path, speed)
        }
    }
}

/// Advances one node by `dt` seconds. Arrival mid-step rolls the leftover
/// time into the next pause, so no time is lost at step boundaries.
pub fn advance(
    state: &mut MovementState,
    model: &MovementModel,
    graph: &RoadGraph,
    rng: &mut ChaCha12Rng,
    dt: f64,
) {
    debug_assert!(dt > 0.0);
    let mut budget = dt;
    loop {
        match &mut state.phase {
            Phase::Paused { remaining } => {
                if *remaining > budget {
                    *remaining -= budget;
                    return;
                }
                budget -= *remaining;
                let (path, speed) = next_leg(model, state, graph, rng);
                state.phase = Phase::Traversing { path, covered: 0.0, speed };
            }
            Phase::Traversing { path, covered, speed } => {
                let leg_left = path.total_length - *covered;
                let need = leg_left / *speed;
                if need > budget {
                    *covered += *speed * budget;
                    state.position = point_along(graph, path, *covered);
                    return;
                }
                budget -= need;
                let arrived = *path.vertices.last().expect("non-empty path");
                state.at_vertex = arrived;
                state.position = graph.position(arrived);
                let (pmin, pmax) = model.pause_range().expect("moving model");
                let pause = rng.gen_range(pmin..=pmax);
                state.phase = Phase::Paused { remaining: pause };
                if budget <= 0.0 {
                    return;
                }
            }
        }
    }
}

/// Parses a routes file: one route per line, a route name followed by the
/// vertex ids of its stops, whitespace-separated. `#` comments and blank
/// lines are ignored.
pub fn load_routes(text: &str) -> Result<Vec<(String, Vec<VertexId>)>, MobilityError> {
    let mut routes = Vec::new();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let name = parts.next().expect("non-empty line").to_string();
        let stops: Vec<VertexId> = parts
            .map(|tok| tok.parse::<u32>().map(VertexId))
            .collect::<Result<_, _>>()
            .map_err(|_| MobilityError::RouteTooShort)?;
        if stops.len() < 2 {
            return Err(MobilityError::RouteTooShort);
        }
        routes.push((name, stops));
    }
    Ok(routes)
}
