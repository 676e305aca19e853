//! Scenario configuration: the default city setup, a flat key=value file
//! format with bracketed sections, and validation.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geo::Point;
use crate::net::LinkProfile;
use crate::routing::{Policy, SprayMode};

/// Nominal placements farther than this from any road vertex are an error.
pub const SNAP_LIMIT_M: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone)]
pub enum MapSource {
    Grid { rows: usize, cols: usize, spacing: f64 },
    Text(String),
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct SimParams {
    pub duration_s: f64,
    pub warmup_s: f64,
    pub step_dt_s: f64,
    pub land_area_km2: f64,
}

#[derive(Debug, Clone)]
pub struct RadioParams {
    pub zigbee: LinkProfile,
    pub itsg5: LinkProfile,
}

#[derive(Debug, Clone)]
pub struct SensorParams {
    pub buffer_bytes: u64,
    pub message_bytes: u64,
    pub interval_s: f64,
    pub window_s: f64,
    pub ttl_s: f64,
    pub positions: Vec<Point>,
}

#[derive(Debug, Clone)]
pub struct CarParams {
    pub count: u32,
    pub speed_min_ms: f64,
    pub speed_max_ms: f64,
    pub pause_min_s: f64,
    pub pause_max_s: f64,
    pub buffer_bytes: u64,
}

#[derive(Debug, Clone)]
pub struct BusParams {
    pub per_route: u32,
    pub routes: Vec<Vec<u32>>,
    pub speed_min_ms: f64,
    pub speed_max_ms: f64,
    pub pause_min_s: f64,
    pub pause_max_s: f64,
    pub buffer_bytes: u64,
}

#[derive(Debug, Clone)]
pub struct PopParams {
    pub buffer_bytes: u64,
    pub positions: Vec<Point>,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub sim: SimParams,
    pub map: MapSource,
    pub radio: RadioParams,
    pub sensors: SensorParams,
    pub cars: CarParams,
    pub buses: BusParams,
    pub pops: PopParams,
    pub policy: Policy,
}

const KMH: f64 = 1.0 / 3.6;

impl ScenarioConfig {
    /// The default city: a 7x9 road grid at 500 m spacing, 37 sensors spread
    /// over the grid, 4 buses on two crossing routes, 5 PoPs at the route
    /// termini and the central crossing, and roaming cars.
    pub fn city_default() -> Self {
        let (rows, cols, spacing) = (7usize, 9usize, 500.0);
        let vertex_point = |id: usize| {
            Point::new((id % cols) as f64 * spacing, (id / cols) as f64 * spacing)
        };
        // 37 sensors spread evenly over the 63 grid vertices
        let sensor_positions: Vec<Point> =
            (0..37).map(|i| vertex_point((i * 124 + 36) / 72)).collect();
        let pop_positions = vec![
            Point::new(2000.0, 1500.0), // central crossing
            Point::new(0.0, 1500.0),    // west terminus, route 1
            Point::new(4000.0, 1500.0), // east terminus, route 1
            Point::new(2000.0, 0.0),    // north terminus, route 2
            Point::new(2000.0, 3000.0), // south terminus, route 2
        ];
        Self {
            sim: SimParams {
                duration_s: 43_200.0,
                warmup_s: 200.0,
                step_dt_s: 1.0,
                land_area_km2: 9.0,
            },
            map: MapSource::Grid { rows, cols, spacing },
            radio: RadioParams {
                zigbee: LinkProfile::new("zigbee", 10.0, 250_000.0),
                itsg5: LinkProfile::new("itsg5", 300.0, 6_000_000.0),
            },
            sensors: SensorParams {
                buffer_bytes: 64 * 1024,
                message_bytes: 10,
                interval_s: 300.0,
                window_s: 25_200.0,
                ttl_s: 18_000.0,
                positions: sensor_positions,
            },
            cars: CarParams {
                count: 90,
                speed_min_ms: 10.0 * KMH,
                speed_max_ms: 50.0 * KMH,
                pause_min_s: 60.0,
                pause_max_s: 7_200.0,
                buffer_bytes: 5 * 1024 * 1024,
            },
            buses: BusParams {
                per_route: 2,
                routes: vec![vec![27, 35], vec![4, 58]],
                speed_min_ms: 10.0 * KMH,
                speed_max_ms: 30.0 * KMH,
                pause_min_s: 10.0,
                pause_max_s: 20.0,
                buffer_bytes: 25 * 1024 * 1024,
            },
            pops: PopParams {
                buffer_bytes: 100 * 1024 * 1024,
                positions: pop_positions,
            },
            policy: Policy::DirectDelivery,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let inv = |m: String| Err(ScenarioError::Invalid(m));
        let sim = &self.sim;
        if !(sim.step_dt_s > 0.0) {
            return inv(format!("step_dt_s must be > 0, got {}", sim.step_dt_s));
        }
        if !(sim.duration_s >= 0.0) || !(sim.warmup_s >= 0.0) {
            return inv("duration_s and warmup_s must be >= 0".into());
        }
        if sim.duration_s > 0.0 && sim.warmup_s >= sim.duration_s {
            return inv(format!(
                "warmup_s ({}) must be below duration_s ({})",
                sim.warmup_s, sim.duration_s
            ));
        }
        if self.sensors.window_s > sim.duration_s - sim.warmup_s {
            return inv(format!(
                "generation window ({} s) exceeds duration minus warmup ({} s)",
                self.sensors.window_s,
                sim.duration_s - sim.warmup_s
            ));
        }
        if !(sim.land_area_km2 > 0.0) {
            return inv("land_area_km2 must be > 0".into());
        }
        if !(self.sensors.interval_s > 0.0) {
            return inv("sensor interval_s must be > 0".into());
        }
        if self.sensors.message_bytes == 0 || !(self.sensors.ttl_s > 0.0) {
            return inv("sensor messages need size > 0 and ttl > 0".into());
        }
        if let Policy::SprayAndWait { copies, .. } = self.policy {
            if copies == 0 {
                return inv("spray_and_wait needs copies >= 1".into());
            }
        }
        if self.buses.per_route > 0 {
            for (i, r) in self.buses.routes.iter().enumerate() {
                if r.len() < 2 {
                    return inv(format!("bus route {i} needs at least 2 stops"));
                }
            }
        }
        Ok(())
    }
}

/// Parses a policy token: `direct`, `first_contact`, `epidemic`,
/// `spray_standard[:L]`, or `spray_binary[:L]`.
pub fn parse_policy_token(tok: &str) -> Result<Policy, String> {
    let (name, l) = match tok.split_once(':') {
        Some((n, l)) => {
            let copies: u32 = l.parse().map_err(|_| format!("bad copy count {l:?}"))?;
            (n, copies)
        }
        None => (tok, 6),
    };
    match name {
        "direct" => Ok(Policy::DirectDelivery),
        "first_contact" => Ok(Policy::FirstContact),
        "epidemic" => Ok(Policy::Epidemic),
        "spray_standard" => Ok(Policy::SprayAndWait { mode: SprayMode::Standard, copies: l }),
        "spray_binary" | "spray_and_wait" => {
            Ok(Policy::SprayAndWait { mode: SprayMode::Binary, copies: l })
        }
        other => Err(format!("unknown policy {other:?}")),
    }
}

fn parse_point(tok: &str) -> Result<Point, String> {
    let (xs, ys) = tok.split_once(',').ok_or_else(|| format!("expected x,y, got {tok:?}"))?;
    let x: f64 = xs.trim().parse().map_err(|_| format!("bad x in {tok:?}"))?;
    let y: f64 = ys.trim().parse().map_err(|_| format!("bad y in {tok:?}"))?;
    Ok(Point::new(x, y))
}

/// Parses scenario text over the city defaults. `base_dir` anchors relative
/// paths named by `file` keys; the map itself stays a path until the world
/// is built.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = ScenarioConfig::city_default();
    let mut section = String::new();
    // the first explicit position/route line clears the built-in defaults
    let mut sensors_cleared = false;
    let mut pops_cleared = false;
    let mut routes_cleared = false;
    let mut policy_mode: Option<SprayMode> = None;
    let mut policy_copies: Option<u32> = None;
    let mut policy_name: Option<String> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| ScenarioError::Parse { line: lineno + 1, message: m };
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(err(format!("malformed section header {line:?}")));
            }
            section = line[1..line.len() - 1].trim().to_string();
            match section.as_str() {
                "sim" | "map" | "radio" | "sensors" | "cars" | "buses" | "pops" | "policy" => {}
                other => return Err(err(format!("unknown section [{other}]"))),
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
        if value.is_empty() {
            return Err(err(format!("empty value for {key}")));
        }
        let f = |v: &str| -> Result<f64, ScenarioError> {
            v.parse().map_err(|_| err(format!("bad number {v:?} for {key}")))
        };
        let u = |v: &str| -> Result<u64, ScenarioError> {
            v.parse().map_err(|_| err(format!("bad integer {v:?} for {key}")))
        };

        match (section.as_str(), key) {
            ("sim", "duration_s") => cfg.sim.duration_s = f(value)?,
            ("sim", "warmup_s") => cfg.sim.warmup_s = f(value)?,
            ("sim", "step_dt_s") => cfg.sim.step_dt_s = f(value)?,
            ("sim", "land_area_km2") => cfg.sim.land_area_km2 = f(value)?,

            ("map", "grid") => {
                // ROWSxCOLS@SPACING, e.g. 7x9@500
                let parse = || -> Option<(usize, usize, f64)> {
                    let (dims, spacing) = value.split_once('@')?;
                    let (r, c) = dims.split_once('x')?;
                    Some((r.parse().ok()?, c.parse().ok()?, spacing.parse().ok()?))
                };
                let (rows, cols, spacing) =
                    parse().ok_or_else(|| err(format!("bad grid spec {value:?}, want RxC@S")))?;
                cfg.map = MapSource::Grid { rows, cols, spacing };
            }
            ("map", "file") => cfg.map = MapSource::File(base_dir.join(value)),

            ("radio", "zigbee_range_m") => cfg.radio.zigbee.range_m = f(value)?,
            ("radio", "zigbee_rate_bps") => cfg.radio.zigbee.rate_bps = f(value)?,
            ("radio", "itsg5_range_m") => cfg.radio.itsg5.range_m = f(value)?,
            ("radio", "itsg5_rate_bps") => cfg.radio.itsg5.rate_bps = f(value)?,

            ("sensors", "buffer_bytes") => cfg.sensors.buffer_bytes = u(value)?,
            ("sensors", "message_bytes") => cfg.sensors.message_bytes = u(value)?,
            ("sensors", "interval_s") => cfg.sensors.interval_s = f(value)?,
            ("sensors", "window_s") => cfg.sensors.window_s = f(value)?,
            ("sensors", "ttl_s") => cfg.sensors.ttl_s = f(value)?,
            ("sensors", "position") => {
                if !sensors_cleared {
                    cfg.sensors.positions.clear();
                    sensors_cleared = true;
                }
                cfg.sensors.positions.push(parse_point(value).map_err(err)?);
            }

            ("cars", "count") => cfg.cars.count = u(value)? as u32,
            ("cars", "speed_min_kmh") => cfg.cars.speed_min_ms = f(value)? * KMH,
            ("cars", "speed_max_kmh") => cfg.cars.speed_max_ms = f(value)? * KMH,
            ("cars", "pause_min_s") => cfg.cars.pause_min_s = f(value)?,
            ("cars", "pause_max_s") => cfg.cars.pause_max_s = f(value)?,
            ("cars", "buffer_bytes") => cfg.cars.buffer_bytes = u(value)?,

            ("buses", "per_route") => cfg.buses.per_route = u(value)? as u32,
            ("buses", "speed_min_kmh") => cfg.buses.speed_min_ms = f(value)? * KMH,
            ("buses", "speed_max_kmh") => cfg.buses.speed_max_ms = f(value)? * KMH,
            ("buses", "pause_min_s") => cfg.buses.pause_min_s = f(value)?,
            ("buses", "pause_max_s") => cfg.buses.pause_max_s = f(value)?,
            ("buses", "buffer_bytes") => cfg.buses.buffer_bytes = u(value)?,
            ("buses", "route") => {
                if !routes_cleared {
                    cfg.buses.routes.clear();
                    routes_cleared = true;
                }
                let stops: Vec<u32> = value
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| err(format!("bad vertex id {t:?}"))))
                    .collect::<Result<_, _>>()?;
                cfg.buses.routes.push(stops);
            }
            ("buses", "routes_file") => {
                let path = base_dir.join(value);
                let text = std::fs::read_to_string(&path)
                    .map_err(|source| ScenarioError::Io { path: path.clone(), source })?;
                let routes = crate::mobility::load_routes(&text)
                    .map_err(|e| err(format!("bad routes file {}: {e}", path.display())))?;
                cfg.buses.routes = routes.into_iter().map(|(_, stops)| {
                    stops.into_iter().map(|v| v.0).collect()
                }).collect();
                routes_cleared = true;
            }

            ("pops", "buffer_bytes") => cfg.pops.buffer_bytes = u(value)?,
            ("pops", "position") => {
                if !pops_cleared {
                    cfg.pops.positions.clear();
                    pops_cleared = true;
                }
                cfg.pops.positions.push(parse_point(value).map_err(err)?);
            }

            ("policy", "protocol") => policy_name = Some(value.to_string()),
            ("policy", "mode") => {
                policy_mode = Some(match value {
                    "standard" => SprayMode::Standard,
                    "binary" => SprayMode::Binary,
                    other => return Err(err(format!("unknown spray mode {other:?}"))),
                })
            }
            ("policy", "copies") => policy_copies = Some(u(value)? as u32),

            ("", k) => return Err(err(format!("key {k:?} appears before any [section]"))),
            (s, k) => return Err(err(format!("unknown key {k:?} in section [{s}]"))),
        }
    }

    if let Some(name) = policy_name {
        let mut policy = parse_policy_token(&name)
            .map_err(|m| ScenarioError::Parse { line: 0, message: m })?;
        if let Policy::SprayAndWait { mode, copies } = &mut policy {
            if let Some(m) = policy_mode {
                *mode = m;
            }
            if let Some(c) = policy_copies {
                *copies = c;
            }
        }
        cfg.policy = policy;
    }

    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a scenario file; relative paths inside it resolve
/// against its own directory.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scenario(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_sized_right() {
        let cfg = ScenarioConfig::city_default();
        cfg.validate().unwrap();
        assert_eq!(cfg.sensors.positions.len(), 37);
        assert_eq!(cfg.pops.positions.len(), 5);
        assert_eq!(cfg.buses.routes.len(), 2);
        assert_eq!(cfg.cars.count, 90);
        // distinct sensor spots
        let mut seen = std::collections::BTreeSet::new();
        for p in &cfg.sensors.positions {
            assert!(seen.insert((p.x.to_bits(), p.y.to_bits())));
        }
    }

    #[test]
    fn parse_overlays_defaults() {
        let text = "\
[sim]
duration_s = 3600
warmup_s = 100

[sensors]
window_s = 1200
position = 0,0
position = 500,0

[cars]
count = 7
speed_max_kmh = 40

[policy]
protocol = spray_and_wait
mode = standard
copies = 4
";
        let cfg = parse_scenario(text, Path::new(".")).unwrap();
        assert_eq!(cfg.sim.duration_s, 3600.0);
        assert_eq!(cfg.sensors.positions.len(), 2);
        assert_eq!(cfg.cars.count, 7);
        assert_eq!(cfg.cars.speed_max_ms, 40.0 / 3.6);
        assert_eq!(
            cfg.policy,
            Policy::SprayAndWait { mode: SprayMode::Standard, copies: 4 }
        );
        // untouched defaults survive
        assert_eq!(cfg.buses.per_route, 2);
        assert_eq!(cfg.pops.positions.len(), 5);
    }

    #[test]
    fn parse_rejects_unknown_keys_and_sections() {
        let e = parse_scenario("[sim]\nbogus = 1\n", Path::new(".")).unwrap_err();
        assert!(matches!(e, ScenarioError::Parse { line: 2, .. }), "{e}");
        let e = parse_scenario("[nope]\n", Path::new(".")).unwrap_err();
        assert!(matches!(e, ScenarioError::Parse { line: 1, .. }), "{e}");
        let e = parse_scenario("stray = 1\n", Path::new(".")).unwrap_err();
        assert!(matches!(e, ScenarioError::Parse { line: 1, .. }), "{e}");
    }

    #[test]
    fn validation_catches_window_overrun() {
        let text = "[sim]\nduration_s = 1000\nwarmup_s = 200\n";
        // default window (25200) no longer fits
        let e = parse_scenario(text, Path::new(".")).unwrap_err();
        assert!(matches!(e, ScenarioError::Invalid(_)), "{e}");
    }

    #[test]
    fn policy_tokens_parse() {
        assert_eq!(parse_policy_token("direct").unwrap(), Policy::DirectDelivery);
        assert_eq!(parse_policy_token("first_contact").unwrap(), Policy::FirstContact);
        assert_eq!(parse_policy_token("epidemic").unwrap(), Policy::Epidemic);
        assert_eq!(
            parse_policy_token("spray_binary:8").unwrap(),
            Policy::SprayAndWait { mode: SprayMode::Binary, copies: 8 }
        );
        assert_eq!(
            parse_policy_token("spray_standard").unwrap(),
            Policy::SprayAndWait { mode: SprayMode::Standard, copies: 6 }
        );
        assert!(parse_policy_token("gossip").is_err());
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = parse_scenario("# top\n\n[sim] # trailing\nduration_s = 100 # note\nwarmup_s = 0\n\n[sensors]\nwindow_s = 50\n", Path::new(".")).unwrap();
        assert_eq!(cfg.sim.duration_s, 100.0);
        assert_eq!(cfg.sensors.window_s, 50.0);
    }
}
