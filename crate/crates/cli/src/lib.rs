//! Command plumbing for the simulator binary: single runs, density sweeps,
//! and map generation. Everything here is also callable from tests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use vdtn_sim::geo;
use vdtn_sim::metrics::{kpi_report, report_to_csv, rows_to_csv, sweep_aggregate, RunRecord};
use vdtn_sim::routing::Policy;
use vdtn_sim::scenario::{load_scenario, parse_policy_token, ScenarioConfig};

/// Parsed sweep description: the cross product of policies, car counts, and
/// seeds over one base scenario.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub cars: Vec<u32>,
    pub policies: Vec<Policy>,
    pub seeds: Vec<u64>,
    /// 0 means one worker per available core.
    pub workers: usize,
}

impl SweepSpec {
    pub fn combinations(&self) -> usize {
        self.policies.len() * self.cars.len() * self.seeds.len()
    }
}

/// Parses a sweep spec file. Format, one `key = value` per line:
///
/// ```text
/// base = city_default.scn   # scenario path (or "default"), relative to the spec
/// policies = direct first_contact epidemic spray_binary:6
/// cars = 3 6 9 18 36 54 72 90
/// seeds = 1 2 3 4 5
/// workers = 0               # optional
/// ```
pub fn parse_sweep_spec(text: &str, base_dir: &Path) -> Result<SweepSpec> {
    let mut base: Option<ScenarioConfig> = None;
    let mut cars: Vec<u32> = Vec::new();
    let mut policies: Vec<Policy> = Vec::new();
    let mut seeds: Vec<u64> = Vec::new();
    let mut workers = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |m: String| anyhow::anyhow!("sweep spec line {}: {m}", lineno + 1);
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
        match key {
            "base" => {
                base = Some(if value == "default" {
                    ScenarioConfig::city_default()
                } else {
                    load_scenario(&base_dir.join(value))
                        .map_err(|e| at(format!("cannot load base scenario: {e}")))?
                });
            }
            "cars" => {
                for tok in value.split_whitespace() {
                    let n: u32 =
                        tok.parse().map_err(|_| at(format!("bad car count {tok:?}")))?;
                    if cars.contains(&n) {
                        return Err(at(format!("car count {n} listed twice")));
                    }
                    cars.push(n);
                }
            }
            "policies" => {
                for tok in value.split_whitespace() {
                    let p = parse_policy_token(tok).map_err(|m| at(m))?;
                    if policies.contains(&p) {
                        return Err(at(format!("policy {tok} listed twice")));
                    }
                    policies.push(p);
                }
            }
            "seeds" => {
                for tok in value.split_whitespace() {
                    let s: u64 = tok.parse().map_err(|_| at(format!("bad seed {tok:?}")))?;
                    if seeds.contains(&s) {
                        return Err(at(format!("seed {s} listed twice")));
                    }
                    seeds.push(s);
                }
            }
            "workers" => {
                workers = value.parse().map_err(|_| at(format!("bad worker count {value:?}")))?;
            }
            other => return Err(at(format!("unknown key {other:?}"))),
        }
    }

    if cars.is_empty() || policies.is_empty() || seeds.is_empty() {
        bail!("sweep spec needs non-empty cars, policies, and seeds");
    }
    Ok(SweepSpec {
        base: base.unwrap_or_else(ScenarioConfig::city_default),
        cars,
        policies,
        seeds,
        workers,
    })
}

/// Runs every (policy, car count, seed) combination and returns the per-run
/// KPIs in deterministic (policy, cars, seed) input order. Individual run
/// failures don't stop the rest; they come back as one combined error after
/// all runs finish.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<RunRecord>> {
    let mut combos: Vec<(Policy, u32, u64)> = Vec::with_capacity(spec.combinations());
    for &policy in &spec.policies {
        for &cars in &spec.cars {
            for &seed in &spec.seeds {
                combos.push((policy, cars, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .context("building sweep worker pool")?;
    let results: Vec<Result<RunRecord, String>> = pool.install(|| {
        combos
            .par_iter()
            .map(|&(policy, cars, seed)| {
                let mut cfg = spec.base.clone();
                cfg.policy = policy;
                cfg.cars.count = cars;
                let log = vdtn_sim::simulate(cfg, seed).map_err(|e| {
                    format!("policy {} cars {cars} seed {seed}: {e}", policy.label())
                })?;
                let report = kpi_report(&log.records).map_err(|e| {
                    format!("policy {} cars {cars} seed {seed}: {e}", policy.label())
                })?;
                Ok(RunRecord { policy, cars, seed, report })
            })
            .collect()
    });

    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(msg) => failures.push(msg),
        }
    }
    if !failures.is_empty() {
        bail!("{} of {} runs failed:\n  {}", failures.len(), combos.len(), failures.join("\n  "));
    }
    Ok(records)
}

pub fn cmd_run(scenario: &Path, seed: u64, log_path: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_scenario(scenario)?;
    let policy = cfg.policy;
    let cars = cfg.cars.count;
    let log = vdtn_sim::simulate(cfg, seed)?;
    let report = kpi_report(&log.records)?;
    std::fs::write(out, report_to_csv(policy, cars, seed, &report))
        .with_context(|| format!("writing {}", out.display()))?;
    if let Some(p) = log_path {
        std::fs::write(p, log.to_tsv()).with_context(|| format!("writing {}", p.display()))?;
    }
    println!(
        "seed {seed}: generated {} delivered {} transmitted {} -> {}",
        report.generated,
        report.delivered,
        report.transmitted,
        out.display()
    );
    Ok(())
}

pub fn cmd_sweep(spec_path: &Path, out: &Path, workers: Option<usize>) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("cannot read {}", spec_path.display()))?;
    let base_dir = spec_path.parent().unwrap_or_else(|| Path::new("."));
    let mut spec = parse_sweep_spec(&text, base_dir)?;
    if let Some(w) = workers {
        spec.workers = w;
    }
    let started = Instant::now();
    let records = run_sweep(&spec)?;
    let rows = sweep_aggregate(&records, spec.base.sim.land_area_km2)?;
    std::fs::write(out, rows_to_csv(&rows)).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{} runs -> {} rows in {:.1?} -> {}",
        records.len(),
        rows.len(),
        started.elapsed(),
        out.display()
    );
    Ok(())
}

pub fn cmd_genmap(rows: usize, cols: usize, spacing: f64, out: &Path) -> Result<()> {
    let graph = geo::generate_grid_map(rows, cols, spacing)?;
    std::fs::write(out, graph.serialize()).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{} vertices, {} edges -> {}",
        graph.vertex_count(),
        graph.edge_count(),
        out.display()
    );
    Ok(())
}

/// Path helper for tests and docs: the repo-level scenarios directory.
pub fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[cfg(test)]
mod tests {
    use super::*;
    use vdtn_sim::routing::SprayMode;

    #[test]
    fn sweep_spec_parses_and_validates() {
        let text = "\
base = default
policies = direct spray_binary:4
cars = 3 6
seeds = 1 2 3
workers = 2
";
        let s = parse_sweep_spec(text, Path::new(".")).unwrap();
        assert_eq!(s.cars, vec![3, 6]);
        assert_eq!(s.seeds, vec![1, 2, 3]);
        assert_eq!(s.workers, 2);
        assert_eq!(s.policies[0], Policy::DirectDelivery);
        assert_eq!(s.policies[1], Policy::SprayAndWait { mode: SprayMode::Binary, copies: 4 });
        assert_eq!(s.combinations(), 12);
    }

    #[test]
    fn sweep_spec_rejects_duplicates_and_gaps() {
        let dup = "policies = direct\ncars = 3\nseeds = 1 1\n";
        assert!(parse_sweep_spec(dup, Path::new(".")).unwrap_err().to_string().contains("twice"));
        let empty = "policies = direct\ncars = 3\n";
        assert!(parse_sweep_spec(empty, Path::new(".")).is_err());
        let badpol = "policies = flooding\ncars = 3\nseeds = 1\n";
        assert!(parse_sweep_spec(badpol, Path::new(".")).is_err());
    }

    #[test]
    fn tiny_sweep_matches_single_runs() {
        let mut base = ScenarioConfig::city_default();
        base.sim.duration_s = 2000.0;
        base.sensors.window_s = 1500.0;
        base.cars.count = 3;
        let spec = SweepSpec {
            base: base.clone(),
            cars: vec![3],
            policies: vec![Policy::DirectDelivery],
            seeds: vec![1, 2],
            workers: 1,
        };
        let recs = run_sweep(&spec).unwrap();
        assert_eq!(recs.len(), 2);
        for rec in &recs {
            let mut cfg = base.clone();
            cfg.policy = rec.policy;
            cfg.cars.count = rec.cars;
            let log = vdtn_sim::simulate(cfg, rec.seed).unwrap();
            assert_eq!(kpi_report(&log.records).unwrap(), rec.report);
        }
    }
}
