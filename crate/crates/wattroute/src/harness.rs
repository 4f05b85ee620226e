// SPDX-License-Identifier: Apache-2.0

//! Experiment runner: flat key-value configs, reproducible runs, consumption
//! metrics, and plot-ready CSV output.
//!
//! A run generates its scenario from the config, serves every flow, audits
//! the solution, and writes four artifacts into the output directory:
//! `results.csv` (one row per flow), `summary.csv` (one row per run),
//! `state.txt` (final on/off census) and `solution.txt` (a replayable record
//! that `validate` can audit later). Identical configs produce byte-identical
//! files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};
use thiserror::Error;

use crate::beam::{self, BeamConfig};
use crate::capacity::{validate_solution, Assignment};
use crate::exec;
use crate::model::{Bps, FlowId, LinkId, NodeId, Watts};
use crate::oracle::{self, OracleLimits};
use crate::power::{all_on, total_power, PowerMode, WeightParams};
use crate::scenarios::{self, Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {message}")]
    ConfigParse { line: usize, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("reference power is zero")]
    ZeroReference,
    #[error("baseline saves nothing; saved-power ratio undefined")]
    DegenerateBaseline,
    #[error("bad solution file: {0}")]
    BadSolutionFile(String),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
}

/// Consumption ratio: power of the run against the all-active reference.
pub fn eta(run_power: Watts, reference_power: Watts) -> Result<f64, HarnessError> {
    if reference_power <= 0.0 {
        return Err(HarnessError::ZeroReference);
    }
    Ok(run_power / reference_power)
}

/// Saved-power ratio of a configuration against the legacy baseline:
/// (1 - eta_min) / (1 - eta_min_baseline).
pub fn eta_bar(eta_min: f64, eta_min_baseline: f64) -> Result<f64, HarnessError> {
    if eta_min_baseline >= 1.0 {
        return Err(HarnessError::DegenerateBaseline);
    }
    Ok((1.0 - eta_min) / (1.0 - eta_min_baseline))
}

const KNOWN_KEYS: &[&str] = &[
    "size",
    "seed",
    "psi",
    "sdn_fraction",
    "flows",
    "rate_min_mbps",
    "rate_max_mbps",
    "rate_min_bps",
    "rate_max_bps",
    "cap_min_mbps",
    "cap_max_mbps",
    "cap_min_bps",
    "cap_max_bps",
    "tau",
    "link_pmax_watts",
    "access_count",
    "switch_count",
    "link_count",
    "backbone_count",
    "sgw_count",
    "pgw_count",
    "nfv_count",
    "ixp_count",
];

/// A parsed flat `key = value` config. Keys are applied on top of the chosen
/// size preset, so a config only states what it overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(HarnessError::ConfigParse {
                    line: lineno + 1,
                    message: "expected `key = value`".into(),
                });
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(HarnessError::UnknownKey(key));
            }
            entries.insert(key, value.trim().to_string());
        }
        Ok(Config { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, HarnessError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| HarnessError::ConfigParse {
                    line: 0,
                    message: format!("bad value for {key}: {v}"),
                }),
        }
    }

    /// One `key=value` line per entry, sorted; embedded into solution files.
    pub fn canonical_lines(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect()
    }

    /// Builds the scenario this config describes.
    pub fn build(&self) -> Result<Scenario, HarnessError> {
        let seed: u64 = self.parsed("seed")?.unwrap_or(1);
        let size = self.get("size").unwrap_or("small");
        if size == "fixture" {
            let ex = scenarios::stage_example();
            let mut spec = scenarios::structure_preset(1, seed);
            spec.name = "fixture".into();
            spec.psi = self.parsed("psi")?.unwrap_or(3);
            spec.seed = seed;
            return Ok(Scenario {
                spec,
                graph: ex.graph,
                catalog: ex.catalog,
                flows: vec![ex.flow],
                access: vec![NodeId(0)],
                ixps: Vec::new(),
            });
        }
        let mut spec = match size {
            "small" => scenarios::small(seed),
            "medium" => scenarios::medium(seed),
            "large" => scenarios::large(seed),
            s if s.starts_with("structure") => {
                let n: u8 = s.trim_start_matches("structure").parse().map_err(|_| {
                    HarnessError::ConfigParse {
                        line: 0,
                        message: format!("bad structure index in `{s}`"),
                    }
                })?;
                scenarios::structure_preset(n, seed)
            }
            other => {
                return Err(HarnessError::ConfigParse {
                    line: 0,
                    message: format!("unknown size `{other}`"),
                })
            }
        };
        if let Some(v) = self.parsed("psi")? {
            spec.psi = v;
        }
        if let Some(v) = self.parsed("sdn_fraction")? {
            spec.sdn_fraction = v;
        }
        if let Some(v) = self.parsed("flows")? {
            spec.flows = Some(v);
        }
        if let Some(v) = self.parsed::<Bps>("rate_min_mbps")? {
            spec.rate_min_bps = v * 1_000_000;
        }
        if let Some(v) = self.parsed::<Bps>("rate_max_mbps")? {
            spec.rate_max_bps = v * 1_000_000;
        }
        if let Some(v) = self.parsed("rate_min_bps")? {
            spec.rate_min_bps = v;
        }
        if let Some(v) = self.parsed("rate_max_bps")? {
            spec.rate_max_bps = v;
        }
        if let Some(v) = self.parsed::<Bps>("cap_min_mbps")? {
            spec.cap_min_bps = v * 1_000_000;
        }
        if let Some(v) = self.parsed::<Bps>("cap_max_mbps")? {
            spec.cap_max_bps = v * 1_000_000;
        }
        if let Some(v) = self.parsed("cap_min_bps")? {
            spec.cap_min_bps = v;
        }
        if let Some(v) = self.parsed("cap_max_bps")? {
            spec.cap_max_bps = v;
        }
        if let Some(v) = self.parsed("tau")? {
            spec.tau = v;
        }
        if let Some(v) = self.parsed("link_pmax_watts")? {
            spec.link_pmax = v;
        }
        if let Some(v) = self.parsed("access_count")? {
            spec.counts.access = v;
        }
        if let Some(v) = self.parsed("switch_count")? {
            spec.counts.switches = v;
        }
        if let Some(v) = self.parsed("link_count")? {
            spec.counts.links = v;
        }
        if let Some(v) = self.parsed("backbone_count")? {
            spec.counts.backbone = v;
        }
        if let Some(v) = self.parsed("sgw_count")? {
            spec.counts.sgw = v;
        }
        if let Some(v) = self.parsed("pgw_count")? {
            spec.counts.pgw = v;
        }
        if let Some(v) = self.parsed("nfv_count")? {
            spec.counts.nfv = v;
        }
        if let Some(v) = self.parsed("ixp_count")? {
            spec.counts.ixp = v;
        }
        Ok(scenarios::generate(&spec)?)
    }
}

/// Per-flow outcome row, mirrored into `results.csv`.
#[derive(Clone, Debug)]
pub struct FlowRow {
    pub flow: FlowId,
    pub source: NodeId,
    pub destination: NodeId,
    pub rate_bps: Bps,
    pub served: bool,
    pub weight: Option<f64>,
    pub reject_stage: Option<usize>,
    pub reject_reason: Option<String>,
    pub mdra_calls: u64,
}

/// Everything a run produced, plus the derived metrics.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub scenario: String,
    pub seed: u64,
    pub psi: usize,
    pub flow_rows: Vec<FlowRow>,
    pub assignments: Vec<Assignment>,
    pub objective_power: Watts,
    pub total_power: Watts,
    pub reference_power: Watts,
    pub eta: f64,
    pub nodes_on: usize,
    pub links_on: usize,
    pub violations: usize,
    pub mdra_calls: u64,
    pub wall: Duration,
}

impl ExperimentResult {
    pub fn served(&self) -> usize {
        self.flow_rows.iter().filter(|r| r.served).count()
    }
}

/// Runs one scenario end to end and, when `out_dir` is given, writes the
/// four run artifacts into it.
pub fn run_experiment(
    config: &Config,
    out_dir: Option<&Path>,
) -> Result<ExperimentResult, HarnessError> {
    let scenario = config.build()?;
    let started = Instant::now();
    let params = WeightParams::for_graph(&scenario.graph);
    let beam_config = BeamConfig::new(scenario.spec.psi.max(1));
    let report = beam::solve_all(
        &scenario.graph,
        &scenario.flows,
        &scenario.catalog,
        &beam_config,
        &params,
    );
    let wall = started.elapsed();

    let assignments = report.assignments();
    let audit = validate_solution(
        &scenario.graph,
        &scenario.catalog,
        &scenario.flows,
        &assignments,
    );
    let reference = all_on(&scenario.graph, &report.state);
    let reference_power =
        total_power(&scenario.graph, &reference, PowerMode::Total).unwrap_or(f64::NAN);
    let eta_value = eta(report.total_power, reference_power)?;

    let flow_rows: Vec<FlowRow> = scenario
        .flows
        .iter()
        .zip(report.results.iter())
        .map(|(flow, res)| match &res.outcome {
            Ok(served) => FlowRow {
                flow: flow.id,
                source: flow.source,
                destination: flow.destination,
                rate_bps: flow.rate,
                served: true,
                weight: Some(served.weight),
                reject_stage: None,
                reject_reason: None,
                mdra_calls: res.stats.mdra_calls,
            },
            Err(rej) => FlowRow {
                flow: flow.id,
                source: flow.source,
                destination: flow.destination,
                rate_bps: flow.rate,
                served: false,
                weight: None,
                reject_stage: Some(rej.stage),
                reject_reason: Some(rej.reason.to_string()),
                mdra_calls: res.stats.mdra_calls,
            },
        })
        .collect();

    let result = ExperimentResult {
        scenario: scenario.spec.name.clone(),
        seed: scenario.spec.seed,
        psi: scenario.spec.psi,
        mdra_calls: flow_rows.iter().map(|r| r.mdra_calls).sum(),
        flow_rows,
        assignments,
        objective_power: report.objective_power,
        total_power: report.total_power,
        reference_power,
        eta: eta_value,
        nodes_on: report.state.nodes_on(),
        links_on: report.state.links_on(),
        violations: audit.violations.len(),
        wall,
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_results_csv(&result, &dir.join("results.csv"))?;
        write_summary_csv(std::slice::from_ref(&result), &dir.join("summary.csv"))?;
        write_state_txt(&scenario, &report.state, &dir.join("state.txt"))?;
        write_solution_txt(config, &result, &dir.join("solution.txt"))?;
    }
    Ok(result)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub const RESULTS_HEADER: &[&str] = &[
    "flow",
    "source",
    "destination",
    "rate_bps",
    "served",
    "weight",
    "reject_stage",
    "reject_reason",
    "mdra_calls",
];

pub const SUMMARY_HEADER: &[&str] = &[
    "scenario",
    "seed",
    "psi",
    "flows",
    "served",
    "rejected",
    "violations",
    "objective_w",
    "total_w",
    "reference_w",
    "eta",
    "nodes_on",
    "links_on",
    "mdra_calls",
];

pub fn write_results_csv(result: &ExperimentResult, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_HEADER).map_err(csv_io)?;
    for row in &result.flow_rows {
        w.write_record(&[
            row.flow.to_string(),
            row.source.to_string(),
            row.destination.to_string(),
            row.rate_bps.to_string(),
            row.served.to_string(),
            row.weight.map(|x| x.to_string()).unwrap_or_default(),
            row.reject_stage.map(|s| s.to_string()).unwrap_or_default(),
            row.reject_reason.clone().unwrap_or_default(),
            row.mdra_calls.to_string(),
        ])
        .map_err(csv_io)?;
    }
    atomic_write(path, &w.into_inner().expect("vec writer"))
}

pub fn write_summary_csv(results: &[ExperimentResult], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).map_err(csv_io)?;
    for r in results {
        w.write_record(&[
            r.scenario.clone(),
            r.seed.to_string(),
            r.psi.to_string(),
            r.flow_rows.len().to_string(),
            r.served().to_string(),
            (r.flow_rows.len() - r.served()).to_string(),
            r.violations.to_string(),
            r.objective_power.to_string(),
            r.total_power.to_string(),
            r.reference_power.to_string(),
            r.eta.to_string(),
            r.nodes_on.to_string(),
            r.links_on.to_string(),
            r.mdra_calls.to_string(),
        ])
        .map_err(csv_io)?;
    }
    atomic_write(path, &w.into_inner().expect("vec writer"))
}

fn csv_io(err: csv::Error) -> HarnessError {
    HarnessError::Io(std::io::Error::other(err))
}

fn write_state_txt(
    scenario: &Scenario,
    state: &crate::capacity::NetworkState,
    path: &Path,
) -> Result<(), HarnessError> {
    let mut out = String::new();
    for node in scenario.graph.nodes() {
        out.push_str(&format!(
            "node {} {}\n",
            node.id,
            if state.node_on(node.id) { "on" } else { "off" }
        ));
    }
    for link in scenario.graph.links() {
        out.push_str(&format!(
            "link {} {}\n",
            link.id,
            if state.link_on(link.id) { "on" } else { "off" }
        ));
    }
    for (node, nf) in state.placed_vnfs() {
        out.push_str(&format!("vnf {node} {nf}\n"));
    }
    atomic_write(path, out.as_bytes())
}

fn write_solution_txt(
    config: &Config,
    result: &ExperimentResult,
    path: &Path,
) -> Result<(), HarnessError> {
    let mut out = String::from("# wattroute solution v1\n");
    for line in config.canonical_lines() {
        out.push_str(&format!("config {line}\n"));
    }
    let mut assigned = result.assignments.iter();
    for row in &result.flow_rows {
        if row.served {
            let a = assigned
                .find(|a| a.flow == row.flow)
                .expect("served flow has an assignment");
            let placements = a
                .placements
                .iter()
                .map(|(k, n)| format!("{k}:{n}"))
                .collect::<Vec<_>>()
                .join(",");
            let legs = a
                .route
                .iter()
                .map(|leg| {
                    if leg.is_empty() {
                        ".".to_string()
                    } else {
                        leg.iter()
                            .map(|l| l.to_string())
                            .collect::<Vec<_>>()
                            .join("-")
                    }
                })
                .collect::<Vec<_>>()
                .join(";");
            out.push_str(&format!(
                "flow {} served placements={placements} legs={legs}\n",
                row.flow
            ));
        } else {
            out.push_str(&format!(
                "flow {} rejected stage={} reason={}\n",
                row.flow,
                row.reject_stage.unwrap_or(0),
                row.reject_reason.clone().unwrap_or_default()
            ));
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Re-audits a previously written solution file against its regenerated
/// scenario. Returns the violation report text (empty when clean).
pub fn validate_solution_file(path: &Path) -> Result<String, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut config_lines = Vec::new();
    let mut assignments = Vec::new();
    let mut flow_lines = Vec::new();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("config ") {
            config_lines.push(rest.to_string());
        } else if let Some(rest) = line.strip_prefix("flow ") {
            flow_lines.push(rest.to_string());
        } else {
            return Err(HarnessError::BadSolutionFile(format!(
                "unexpected line: {line}"
            )));
        }
    }
    let config = Config::parse(&config_lines.join("\n"))?;
    let scenario = config.build()?;
    for rest in flow_lines {
        let fields: Vec<&str> = rest.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(HarnessError::BadSolutionFile(format!("short line: {rest}")));
        }
        let flow_id = FlowId(
            fields[0]
                .parse()
                .map_err(|_| HarnessError::BadSolutionFile(format!("bad flow id in: {rest}")))?,
        );
        if fields[1] != "served" {
            continue;
        }
        let mut placements = Vec::new();
        let mut route = Vec::new();
        for field in &fields[2..] {
            if let Some(spec) = field.strip_prefix("placements=") {
                for part in spec.split(',') {
                    let (k, n) = part.split_once(':').ok_or_else(|| {
                        HarnessError::BadSolutionFile(format!("bad placement `{part}`"))
                    })?;
                    placements.push((
                        k.parse().map_err(|_| {
                            HarnessError::BadSolutionFile(format!("bad position `{k}`"))
                        })?,
                        NodeId(n.parse().map_err(|_| {
                            HarnessError::BadSolutionFile(format!("bad node `{n}`"))
                        })?),
                    ));
                }
            } else if let Some(spec) = field.strip_prefix("legs=") {
                for leg in spec.split(';') {
                    if leg == "." {
                        route.push(Vec::new());
                    } else {
                        route.push(
                            leg.split('-')
                                .map(|l| {
                                    l.parse().map(LinkId).map_err(|_| {
                                        HarnessError::BadSolutionFile(format!("bad link `{l}`"))
                                    })
                                })
                                .collect::<Result<Vec<_>, _>>()?,
                        );
                    }
                }
            }
        }
        assignments.push(Assignment::new(&scenario.graph, flow_id, placements, route));
    }
    let report = validate_solution(
        &scenario.graph,
        &scenario.catalog,
        &scenario.flows,
        &assignments,
    );
    Ok(report.to_string())
}

/// Heuristic-versus-exact comparison on one instance.
#[derive(Clone, Debug)]
pub struct OracleComparison {
    pub scenario: String,
    pub flows: usize,
    pub heuristic_served: usize,
    pub heuristic_power: Option<Watts>,
    pub oracle_power: Option<Watts>,
    pub ratio: Option<f64>,
}

/// Runs the beam solver and the exact solver on the configured instance and
/// reports the power ratio. Both sides rejecting counts as agreement.
pub fn compare_with_oracle(
    config: &Config,
    limits: &OracleLimits,
) -> Result<OracleComparison, HarnessError> {
    let scenario = config.build()?;
    let params = WeightParams::for_graph(&scenario.graph);
    let report = beam::solve_all(
        &scenario.graph,
        &scenario.flows,
        &scenario.catalog,
        &BeamConfig::new(scenario.spec.psi.max(1)),
        &params,
    );
    let heuristic_power =
        (report.served() == scenario.flows.len()).then_some(report.objective_power);
    let oracle_power =
        match oracle::exhaustive_solve(&scenario.graph, &scenario.catalog, &scenario.flows, limits)
        {
            Ok(sol) => Some(sol.power),
            Err(oracle::OracleError::Infeasible) => None,
            Err(e) => return Err(e.into()),
        };
    let ratio = match (heuristic_power, oracle_power) {
        (Some(h), Some(o)) if o > 0.0 => Some(h / o),
        _ => None,
    };
    Ok(OracleComparison {
        scenario: scenario.spec.name,
        flows: scenario.flows.len(),
        heuristic_served: report.served(),
        heuristic_power,
        oracle_power,
        ratio,
    })
}

/// Runs a batch of independent configs through the worker pool, in input
/// order.
pub fn run_batch(configs: &[Config]) -> Vec<Result<ExperimentResult, HarnessError>> {
    exec::map_collect(configs.to_vec(), |cfg| run_experiment(&cfg, None))
}

/// Sequential twin of [`run_batch`], kept for debugging and for measuring
/// the parallel speedup.
pub fn run_batch_serial(configs: &[Config]) -> Vec<Result<ExperimentResult, HarnessError>> {
    configs
        .iter()
        .map(|cfg| run_experiment(cfg, None))
        .collect()
}

/// Runs one config per parameter value in a worker pool and writes a
/// combined `summary.csv` plus per-run artifacts under `out_dir`.
pub fn sweep(
    config: &Config,
    key: &str,
    values: &[String],
    out_dir: &Path,
) -> Result<Vec<ExperimentResult>, HarnessError> {
    fs::create_dir_all(out_dir)?;
    let runs: Vec<(String, Config)> = values
        .iter()
        .map(|v| {
            let mut c = config.clone();
            c.set(key, v);
            (v.clone(), c)
        })
        .collect();
    let outcomes = exec::map_collect(runs, |(value, cfg)| {
        let dir = out_dir.join(format!("{key}_{value}"));
        run_experiment(&cfg, Some(&dir))
    });
    let mut results = Vec::new();
    for outcome in outcomes {
        results.push(outcome?);
    }
    write_summary_csv(&results, &out_dir.join("summary.csv"))?;
    Ok(results)
}
