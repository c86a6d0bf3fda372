//! Closed-loop experiments: sample arrivals, ask the controller for an
//! action, round it, step the plant, record everything.
//!
//! Config files are TOML; `network` and `demand` paths are resolved
//! relative to the config file.
//!
//! ```toml
//! network = "umn_like_network.toml"
//! demand = "umn_like_demand.toml"
//! controller = "QMPC_QRef"
//! step_minutes = 2.0
//! horizon = 8
//! fleet = 125
//! refresh_minutes = 120.0   # optional
//! duration_steps = 360      # optional, defaults to the whole scenario
//! perturbation = 0.0        # optional
//! terminal = "hard_zero"    # optional, or { soft_penalty = 1000.0 }
//!
//! [seeds]
//! demand = 1
//! rounding = 2
//! perturbation = 3
//! ```

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::{active_lambda, sample_arrivals, total_expected_requests, DemandScenario, ScenarioFile};
use crate::error::{Error, Result};
use crate::iarr::solve_iarr_step;
use crate::model::{build_lti, Layout, LtiModel, StateVector};
use crate::mpc::{project_action, randomized_round_counted, solve_mpc_step, MpcConfig, TerminalMode};
use crate::network::{complete, read_network, CompleteNetwork};
use crate::plant::{sum_u32, waiting_metrics, BoxStats, ControlAction, Plant, SystemState, WaitingMetrics};
use crate::reference::{solve_reference, CostKind, EquilibriumReference};
use crate::solver::SolveStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Controller {
    #[serde(rename = "QMPC_QRef")]
    QmpcQref,
    #[serde(rename = "QMPC_LRef")]
    QmpcLref,
    #[serde(rename = "LMPC_QRef")]
    LmpcQref,
    #[serde(rename = "LMPC_LRef")]
    LmpcLref,
    #[serde(rename = "IARR")]
    Iarr,
}

impl Controller {
    pub const ALL: [Controller; 5] = [
        Controller::QmpcQref,
        Controller::QmpcLref,
        Controller::LmpcQref,
        Controller::LmpcLref,
        Controller::Iarr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Controller::QmpcQref => "QMPC_QRef",
            Controller::QmpcLref => "QMPC_LRef",
            Controller::LmpcQref => "LMPC_QRef",
            Controller::LmpcLref => "LMPC_LRef",
            Controller::Iarr => "IARR",
        }
    }

    /// `(stage cost, reference cost)` for the MPC variants.
    pub fn mpc_kinds(self) -> Option<(CostKind, CostKind)> {
        use CostKind::*;
        match self {
            Controller::QmpcQref => Some((Quadratic, Quadratic)),
            Controller::QmpcLref => Some((Quadratic, Linear)),
            Controller::LmpcQref => Some((Linear, Quadratic)),
            Controller::LmpcLref => Some((Linear, Linear)),
            Controller::Iarr => None,
        }
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Controller {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Controller::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown controller {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub demand: u64,
    pub rounding: u64,
    pub perturbation: u64,
}

fn default_refresh() -> f64 {
    120.0
}

fn default_terminal() -> TerminalMode {
    TerminalMode::HardZero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: PathBuf,
    pub demand: PathBuf,
    pub controller: Controller,
    pub step_minutes: f64,
    pub horizon: usize,
    pub fleet: u32,
    #[serde(default = "default_refresh")]
    pub refresh_minutes: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_steps: Option<usize>,
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default = "default_terminal")]
    pub terminal: TerminalMode,
    pub seeds: Seeds,
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.display().to_string(),
            message: e.to_string(),
        })?;
        let base = origin.parent().unwrap_or(Path::new(""));
        cfg.network = base.join(&cfg.network);
        cfg.demand = base.join(&cfg.demand);
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = Seeds {
            demand: seed,
            rounding: seed.wrapping_add(1),
            perturbation: seed.wrapping_add(2),
        };
        self
    }

    /// Reads the files and assembles the run setup.
    pub fn load(&self) -> Result<Setup> {
        let road = read_network(&self.network)?;
        let net = complete(&road, self.step_minutes)?;
        let scenario = ScenarioFile::read(&self.demand)?.to_scenario(self.step_minutes, self.seeds.demand)?;
        let refresh = self.refresh_minutes / self.step_minutes;
        if !(refresh >= 1.0 && (refresh - refresh.round()).abs() < 1e-9) {
            return Err(Error::Config(format!(
                "refresh interval of {} minutes is not a whole number of {}-minute steps",
                self.refresh_minutes, self.step_minutes
            )));
        }
        let setup = Setup {
            network: net,
            scenario,
            controller: self.controller,
            step_minutes: self.step_minutes,
            horizon: self.horizon,
            fleet: self.fleet,
            refresh_steps: refresh.round() as usize,
            duration_steps: self.duration_steps,
            perturbation: self.perturbation,
            terminal: self.terminal,
            seeds: self.seeds,
        };
        setup.validate()?;
        Ok(setup)
    }
}

/// Everything a run needs, already loaded.
#[derive(Debug, Clone)]
pub struct Setup {
    pub network: CompleteNetwork,
    pub scenario: DemandScenario,
    pub controller: Controller,
    pub step_minutes: f64,
    pub horizon: usize,
    pub fleet: u32,
    pub refresh_steps: usize,
    pub duration_steps: Option<usize>,
    pub perturbation: f64,
    pub terminal: TerminalMode,
    pub seeds: Seeds,
}

impl Setup {
    pub fn duration(&self) -> usize {
        self.duration_steps.unwrap_or(self.scenario.duration())
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario.pair_count() != self.network.link_count() {
            return Err(Error::Config(format!(
                "demand covers {} pairs but the network has {} links",
                self.scenario.pair_count(),
                self.network.link_count()
            )));
        }
        if self.duration() > self.scenario.duration() {
            return Err(Error::Config(format!(
                "duration of {} steps exceeds the scenario's {}",
                self.duration(),
                self.scenario.duration()
            )));
        }
        if self.refresh_steps == 0 {
            return Err(Error::Config("refresh interval must be at least one step".into()));
        }
        if !(self.step_minutes.is_finite() && self.step_minutes > 0.0) {
            return Err(Error::Config(format!("step_minutes must be positive, got {}", self.step_minutes)));
        }
        if self.fleet == 0 {
            return Err(Error::Config("fleet must be positive".into()));
        }
        let mpc = MpcConfig {
            horizon: self.horizon,
            cost_kind: CostKind::Linear,
            reference_kind: CostKind::Linear,
            terminal_mode: self.terminal,
            rounding_seed: self.seeds.rounding,
        };
        mpc.validate()
    }

    /// Largest minimum fleet over the demand blocks, for the reference cost
    /// this controller tracks (linear for the baseline).
    pub fn peak_min_fleet(&self) -> Result<f64> {
        let kind = self.controller.mpc_kinds().map_or(CostKind::Linear, |(_, r)| r);
        let mut peak: f64 = 0.0;
        for b in self.scenario.blocks() {
            let r = solve_reference(&self.network, &b.rates, kind, self.fleet as f64)?;
            peak = peak.max(r.m_min);
        }
        Ok(peak)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub step: usize,
    pub total_waiting: u64,
    pub mean_waiting: f64,
    pub idle: u64,
    pub in_transit: u64,
    pub dispatched: u64,
    pub rebalanced: u64,
    pub mean_dispatched: f64,
    pub mean_rebalanced: f64,
    pub cumulative_empty_miles: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub status: String,
    pub objective: f64,
    pub terminal_residual: f64,
    pub soft_terminal: bool,
    pub fallback: bool,
    pub repaired_units: u32,
    pub reference_refreshed: bool,
    pub iterations: u32,
    pub solve_seconds: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub controller: Controller,
    pub step_minutes: f64,
    pub duration_steps: usize,
    pub fleet: u32,
    pub peak_min_fleet: f64,
    pub fleet_below_minimum: bool,
    pub expected_requests: f64,
    pub requests: u64,
    pub avg_queue_length: f64,
    pub avg_wait_minutes: f64,
    pub boarded: usize,
    pub censored: usize,
    pub total_empty_miles: f64,
    pub total_rebalancing_trips: u64,
    pub soft_terminal_steps: usize,
    pub fallback_steps: usize,
    pub repaired_steps: usize,
    /// Hash of every step's arrival counts, equal across runs sharing a demand seed.
    pub arrival_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boxplots {
    pub controller: Controller,
    /// Waiting-time summary per link, in link order; `None` for links nobody boarded.
    pub per_pair: Vec<Option<BoxStats>>,
    /// Over all boarded customers.
    pub pooled: Option<BoxStats>,
    /// Over the per-link mean waits.
    pub pair_means: Option<BoxStats>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub series: Vec<SeriesRow>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub summary: Summary,
    pub boxplots: Boxplots,
    pub actions: Vec<ControlAction>,
    pub references: Vec<(usize, EquilibriumReference)>,
}

impl RunReport {
    /// Recomputes the summary's series-derived fields and reports the
    /// largest discrepancy.
    pub fn consistency_error(&self) -> f64 {
        let n = self.series.len();
        let avg_queue = if n == 0 {
            0.0
        } else {
            self.series.iter().map(|r| r.mean_waiting).sum::<f64>() / n as f64
        };
        let miles = self.series.last().map_or(0.0, |r| r.cumulative_empty_miles);
        let trips: u64 = self.series.iter().map(|r| r.rebalanced).sum();
        (avg_queue - self.summary.avg_queue_length)
            .abs()
            .max((miles - self.summary.total_empty_miles).abs())
            .max((trips as f64 - self.summary.total_rebalancing_trips as f64).abs())
    }
}

enum Policy {
    Mpc {
        model: Box<LtiModel>,
        cfg: MpcConfig,
        reference: Option<EquilibriumReference>,
    },
    Iarr,
}

fn state_vector(layout: &Layout, queue: &[u32], state: &SystemState) -> StateVector {
    let f = |xs: &[u32]| xs.iter().map(|&x| x as f64).collect::<Vec<_>>();
    layout.state(&f(queue), &f(&state.idle), &f(&state.in_transit))
}

pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    run_setup(&config.load()?)
}

pub fn run_setup(setup: &Setup) -> Result<RunReport> {
    setup.validate()?;
    let net = &setup.network;
    let (n, m) = (net.zone_count(), net.link_count());
    let layout = Layout::new(n);
    let duration = setup.duration();
    let peak_min_fleet = setup.peak_min_fleet()?;
    let fleet_below_minimum = (setup.fleet as f64) < peak_min_fleet.ceil();
    if fleet_below_minimum {
        log::warn!("fleet {} is below the peak minimum fleet {peak_min_fleet:.2}", setup.fleet);
    }

    let initial = SystemState::uniform(n, m, setup.fleet);
    let mut plant = Plant::new(net.clone(), initial, setup.perturbation, ChaCha8Rng::seed_from_u64(setup.seeds.perturbation))?;
    let mut rounding_rng = ChaCha8Rng::seed_from_u64(setup.seeds.rounding);
    let mut policy = match setup.controller.mpc_kinds() {
        Some((cost_kind, reference_kind)) => Policy::Mpc {
            model: Box::new(build_lti(net)),
            cfg: MpcConfig {
                horizon: setup.horizon,
                cost_kind,
                reference_kind,
                terminal_mode: setup.terminal,
                rounding_seed: setup.seeds.rounding,
            },
            reference: None,
        },
        None => Policy::Iarr,
    };

    let mut series = Vec::with_capacity(duration);
    let mut diagnostics = Vec::with_capacity(duration);
    let mut actions = Vec::with_capacity(duration);
    let mut references = Vec::new();
    let mut hasher = DefaultHasher::new();
    let mut empty_miles = 0.0;
    let mut requests = 0u64;

    for t in 0..duration {
        let step = |e: Error| e.at_step(t);
        let arrivals = sample_arrivals(&setup.scenario, t).map_err(step)?;
        arrivals.counts.hash(&mut hasher);
        requests += arrivals.total();
        let queue = plant.queue_with(&arrivals);
        let lambda = active_lambda(&setup.scenario, t).map_err(step)?;
        let x_now = state_vector(&layout, &queue, plant.state());
        let started = Instant::now();

        let (fractional, mut diag) = match &mut policy {
            Policy::Mpc { model, cfg, reference } => {
                let refreshed = reference.is_none() || t % setup.refresh_steps == 0;
                if refreshed {
                    let r = solve_reference(net, lambda, cfg.reference_kind, setup.fleet as f64).map_err(step)?;
                    references.push((t, r.clone()));
                    *reference = Some(r);
                }
                let reference = reference.as_ref().expect("set above");
                let (action, d) = solve_mpc_step(model, net, reference, &x_now, cfg).map_err(step)?;
                (
                    action,
                    DiagnosticsRow {
                        step: t,
                        status: status_name(d.status).into(),
                        objective: d.objective,
                        terminal_residual: d.terminal_residual,
                        soft_terminal: d.soft_terminal,
                        fallback: d.fallback,
                        repaired_units: 0,
                        reference_refreshed: refreshed,
                        iterations: d.iterations,
                        solve_seconds: d.solve_seconds,
                        wall_seconds: 0.0,
                    },
                )
            }
            Policy::Iarr => {
                let a = solve_iarr_step(net, &x_now, lambda).map_err(step)?;
                let mut action = a.fractional();
                let idle: Vec<f64> = plant.state().idle.iter().map(|&p| p as f64).collect();
                project_action(net, &mut action, x_now.waiting(&layout), &idle);
                (
                    action,
                    DiagnosticsRow {
                        step: t,
                        status: status_name(a.status).into(),
                        objective: a.objective,
                        terminal_residual: f64::NAN,
                        soft_terminal: false,
                        fallback: a.status != SolveStatus::Optimal,
                        repaired_units: 0,
                        reference_refreshed: false,
                        iterations: 0,
                        solve_seconds: a.solve_seconds,
                        wall_seconds: 0.0,
                    },
                )
            }
        };

        let (action, repaired) = randomized_round_counted(net, &fractional, &queue, &plant.state().idle, &mut rounding_rng);
        diag.repaired_units = repaired;
        diag.wall_seconds = started.elapsed().as_secs_f64();
        let state = plant.step_exact(&action, &arrivals).map_err(step)?;
        let found = state.fleet();
        if found != setup.fleet as u64 {
            return Err(Error::Conservation {
                expected: setup.fleet as u64,
                found,
            }
            .at_step(t));
        }
        let trip_miles: f64 = action.rebalance.iter().zip(net.distance()).map(|(&r, d)| r as f64 * d).sum();
        empty_miles += trip_miles;
        let dispatched = sum_u32(&action.dispatch);
        let rebalanced = sum_u32(&action.rebalance);
        let total_waiting = state.total_waiting();
        series.push(SeriesRow {
            step: t,
            total_waiting,
            mean_waiting: total_waiting as f64 / m as f64,
            idle: sum_u32(&state.idle),
            in_transit: sum_u32(&state.in_transit),
            dispatched,
            rebalanced,
            mean_dispatched: dispatched as f64 / m as f64,
            mean_rebalanced: rebalanced as f64 / m as f64,
            cumulative_empty_miles: empty_miles,
        });
        diagnostics.push(diag);
        actions.push(action);
    }

    let metrics: WaitingMetrics = waiting_metrics(plant.records(), m, duration, setup.step_minutes);
    let summary = Summary {
        controller: setup.controller,
        step_minutes: setup.step_minutes,
        duration_steps: duration,
        fleet: setup.fleet,
        peak_min_fleet,
        fleet_below_minimum,
        expected_requests: expected_requests_through(&setup.scenario, duration),
        requests,
        avg_queue_length: metrics.avg_queue_length,
        avg_wait_minutes: metrics.avg_wait_minutes,
        boarded: metrics.boarded,
        censored: metrics.censored,
        total_empty_miles: empty_miles,
        total_rebalancing_trips: series.iter().map(|r| r.rebalanced).sum(),
        soft_terminal_steps: diagnostics.iter().filter(|d| d.soft_terminal).count(),
        fallback_steps: diagnostics.iter().filter(|d| d.fallback).count(),
        repaired_steps: diagnostics.iter().filter(|d| d.repaired_units > 0).count(),
        arrival_hash: format!("{:016x}", hasher.finish()),
    };
    let boxplots = Boxplots {
        controller: setup.controller,
        per_pair: metrics.per_pair,
        pooled: metrics.pooled,
        pair_means: metrics.pair_means,
    };
    Ok(RunReport {
        series,
        diagnostics,
        summary,
        boxplots,
        actions,
        references,
    })
}

fn expected_requests_through(scenario: &DemandScenario, duration: usize) -> f64 {
    if duration == scenario.duration() {
        return total_expected_requests(scenario);
    }
    (0..duration)
        .map(|t| active_lambda(scenario, t).map_or(0.0, |l| l.iter().sum::<f64>()))
        .sum()
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::Unbounded => "unbounded",
        SolveStatus::NumericFailure => "numeric_failure",
    }
}

/// Metric-by-controller table from paired runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub controllers: Vec<Controller>,
    pub metrics: Vec<String>,
    /// `values[metric][controller]`.
    pub values: Vec<Vec<f64>>,
    pub summaries: Vec<Summary>,
}

impl Comparison {
    pub fn value(&self, metric: &str, controller: Controller) -> Option<f64> {
        let i = self.metrics.iter().position(|m| m == metric)?;
        let j = self.controllers.iter().position(|&c| c == controller)?;
        Some(self.values[i][j])
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string()];
        header.extend(self.controllers.iter().map(|c| c.to_string()));
        w.write_record(&header)?;
        for (name, row) in self.metrics.iter().zip(&self.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub const COMPARISON_METRICS: [&str; 5] = [
    "avg_queue_length",
    "avg_wait_minutes",
    "total_empty_miles",
    "censored",
    "total_rebalancing_trips",
];

fn comparison_values(s: &Summary) -> [f64; 5] {
    [
        s.avg_queue_length,
        s.avg_wait_minutes,
        s.total_empty_miles,
        s.censored as f64,
        s.total_rebalancing_trips as f64,
    ]
}

/// Runs configs that differ only in their controller on one arrival stream.
pub fn compare(configs: &[ExperimentConfig], demand_seed: Option<u64>) -> Result<Comparison> {
    let mut configs: Vec<ExperimentConfig> = configs.to_vec();
    if let Some(seed) = demand_seed {
        for c in &mut configs {
            c.seeds.demand = seed;
        }
    }
    if let Some(first) = configs.first() {
        for c in &configs[1..] {
            let mut same = c.clone();
            same.controller = first.controller;
            if same != *first {
                return Err(Error::MismatchedConfigs(format!(
                    "{} and {} differ in more than the controller",
                    first.controller, c.controller
                )));
            }
        }
    }
    let setups = configs.iter().map(|c| c.load()).collect::<Result<Vec<_>>>()?;
    compare_setups(&setups)
}

pub fn compare_setups(setups: &[Setup]) -> Result<Comparison> {
    let reports = setups.iter().map(run_setup).collect::<Result<Vec<_>>>()?;
    let summaries: Vec<Summary> = reports.into_iter().map(|r| r.summary).collect();
    let values = (0..COMPARISON_METRICS.len())
        .map(|i| summaries.iter().map(|s| comparison_values(s)[i]).collect())
        .collect();
    Ok(Comparison {
        controllers: summaries.iter().map(|s| s.controller).collect(),
        metrics: COMPARISON_METRICS.iter().map(|s| s.to_string()).collect(),
        values,
        summaries,
    })
}

/// Writes `series.csv`, `diagnostics.csv`, `summary.json`, `boxplots.json`
/// and three SVG plots into `out_dir`.
pub fn emit(report: &RunReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let path = out_dir.join("series.csv");
    let mut w = csv::Writer::from_path(&path)?;
    if report.series.is_empty() {
        w.write_record(SERIES_HEADER)?;
    }
    for row in &report.series {
        w.serialize(row)?;
    }
    w.flush()?;
    written.push(path);

    let path = out_dir.join("diagnostics.csv");
    let mut w = csv::Writer::from_path(&path)?;
    if report.diagnostics.is_empty() {
        w.write_record(DIAGNOSTICS_HEADER)?;
    }
    for row in &report.diagnostics {
        w.serialize(row)?;
    }
    w.flush()?;
    written.push(path);

    let path = out_dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report.summary)? + "\n")?;
    written.push(path);

    let path = out_dir.join("boxplots.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report.boxplots)? + "\n")?;
    written.push(path);

    let name = report.summary.controller.name();
    let minutes = report.summary.step_minutes;
    let plots: [(&str, &str, fn(&SeriesRow) -> f64); 3] = [
        ("queue.svg", "Average queue length per pair", |r| r.mean_waiting),
        ("rebalancing.svg", "Average rebalancing vehicles per link", |r| r.mean_rebalanced),
        ("empty_distance.svg", "Cumulative empty distance [mi]", |r| r.cumulative_empty_miles),
    ];
    for (file, title, value) in plots {
        let path = out_dir.join(file);
        let points: Vec<(f64, f64)> = report.series.iter().map(|r| (r.step as f64 * minutes, value(r))).collect();
        crate::plot::line_chart(&path, &format!("{title} ({name})"), "time [min]", &points)?;
        written.push(path);
    }
    Ok(written)
}

const SERIES_HEADER: [&str; 10] = [
    "step",
    "total_waiting",
    "mean_waiting",
    "idle",
    "in_transit",
    "dispatched",
    "rebalanced",
    "mean_dispatched",
    "mean_rebalanced",
    "cumulative_empty_miles",
];

const DIAGNOSTICS_HEADER: [&str; 11] = [
    "step",
    "status",
    "objective",
    "terminal_residual",
    "soft_terminal",
    "fallback",
    "repaired_units",
    "reference_refreshed",
    "iterations",
    "solve_seconds",
    "wall_seconds",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::DemandBlock;

    fn small_setup(controller: Controller, rates: Vec<f64>, duration: usize) -> Setup {
        let net = CompleteNetwork::from_links(3, vec![1, 2, 2, 1, 2, 3], vec![0.5, 1.0, 1.2, 0.4, 0.9, 1.5]).unwrap();
        Setup {
            network: net,
            scenario: DemandScenario::new(vec![DemandBlock { duration, rates }], 11).unwrap(),
            controller,
            step_minutes: 2.0,
            horizon: 4,
            fleet: 24,
            refresh_steps: 10,
            duration_steps: None,
            perturbation: 0.0,
            terminal: TerminalMode::HardZero,
            seeds: Seeds {
                demand: 11,
                rounding: 12,
                perturbation: 13,
            },
        }
    }

    #[test]
    fn zero_demand_keeps_everything_still() {
        for c in Controller::ALL {
            let report = run_setup(&small_setup(c, vec![0.0; 6], 20)).unwrap();
            assert!(report.series.iter().all(|r| r.total_waiting == 0 && r.rebalanced == 0 && r.idle == 24));
            assert_eq!(report.summary.total_empty_miles, 0.0);
        }
    }

    #[test]
    fn runs_are_deterministic_and_consistent() {
        let s = small_setup(Controller::LmpcLref, vec![0.3, 0.5, 0.1, 0.2, 0.4, 0.1], 40);
        let a = run_setup(&s).unwrap();
        let b = run_setup(&s).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(a.summary, b.summary);
        assert!(a.consistency_error() < 1e-9);
        assert!(a.series.iter().all(|r| r.idle + r.in_transit == 24));
    }

    #[test]
    fn controllers_share_the_arrival_stream() {
        let rates = vec![0.3, 0.5, 0.1, 0.2, 0.4, 0.1];
        let hashes: Vec<String> = [Controller::QmpcQref, Controller::Iarr]
            .into_iter()
            .map(|c| run_setup(&small_setup(c, rates.clone(), 30)).unwrap().summary.arrival_hash)
            .collect();
        assert_eq!(hashes[0], hashes[1]);
    }

    #[test]
    fn controller_names_round_trip() {
        for c in Controller::ALL {
            assert_eq!(c.name().parse::<Controller>().unwrap(), c);
        }
        assert!("MPC".parse::<Controller>().is_err());
    }
}
