//! The five subcommands.

use std::f64::consts::PI;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use roadfield_core::eigensolver::{
    averaging_identity_check, concavity_violation, constant_coefficient_oracle, eigenfunction_growth_check,
    principal_eigen_truncated, road_eigenvalue_lambda_alpha, sine_profile_misfit, whole_field_eigenvalue, EigenPair,
    ROAD_MIN_NODES,
};
use roadfield_core::grids::build_cell_operator;
use roadfield_core::model::{shift_constant_m, ModelParams};
use roadfield_core::simulator::{
    dt_max, evolve, inner_spreading_check, stationary_state, EvolveOutput, FrontTrace, InitialData, InnerReport,
    SimulationState, StationaryPair, Stepper,
};
use roadfield_core::speeds::{
    acceleration_threshold_scan, exp_decay_speed, truncated_field_reference_speed, truncated_speed, whole_field_speed,
    SpeedSummary, ThresholdReport,
};
use roadfield_core::{CellGrid, Error as CoreError, StripGrid, TopBoundary};
use serde::Serialize;

use crate::config::{CurveSelection, LoadedConfig};
use crate::error::Failure;
use crate::output::{flag, int, num, Sink, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Eigen,
    Speed,
    Simulate,
    Stationary,
    Verify,
}

/// Files written and a one-line summary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub summary: String,
}

pub fn run(cmd: Command, config_path: &Path) -> Result<Outcome, Failure> {
    let cfg = LoadedConfig::from_path(config_path).map_err(Failure::Config)?;
    run_loaded(cmd, &cfg)
}

pub fn run_loaded(cmd: Command, cfg: &LoadedConfig) -> Result<Outcome, Failure> {
    let mut sink = Sink::open(cfg).map_err(Failure::Config)?;
    let result = match cmd {
        Command::Eigen => cmd_eigen(cfg, &mut sink),
        Command::Speed => cmd_speed(cfg, &mut sink),
        Command::Simulate => cmd_simulate(cfg, &mut sink),
        Command::Stationary => cmd_stationary(cfg, &mut sink),
        Command::Verify => cmd_verify(cfg, &mut sink),
    };
    result.map(|summary| Outcome {
        written: sink.written().to_vec(),
        summary,
    })
}

fn core<T>(r: Result<T, CoreError>, context: impl Display) -> Result<T, Failure> {
    r.map_err(|e| Failure::from_core(e, context))
}

/// Collects parallel per-point results, reporting the first failure in input
/// order so that errors do not depend on scheduling.
fn first_error<T>(items: Vec<Result<T, Failure>>) -> Result<Vec<T>, Failure> {
    items.into_iter().collect()
}

fn alphas(cfg: &LoadedConfig) -> Result<Vec<f64>, Failure> {
    cfg.config
        .task
        .alphas
        .as_ref()
        .ok_or_else(|| Failure::config("task.alphas is required"))?
        .values()
        .map_err(Failure::Config)
}

// ---------------------------------------------------------------- eigen

#[derive(Debug, Clone, Serialize)]
pub struct DispersionRow {
    pub mode: &'static str,
    pub alpha: f64,
    pub minus_lambda: f64,
    /// `max(d alpha^2 + f'(0) [- d pi^2/R^2], D alpha^2 + g'(0) - lambda_alpha)`.
    pub lower_bound: f64,
    /// `M_alpha`.
    pub upper_bound: f64,
    pub bounds_ok: bool,
    pub height: f64,
    /// `-Lambda_R` at the largest `R`, equal to `minus_lambda` for truncated rows.
    pub minus_lambda_last: f64,
    pub tail: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn road_bound(p: &ModelParams, alpha: f64) -> Result<f64, Failure> {
    let road = core(
        road_eigenvalue_lambda_alpha(p, alpha, ROAD_MIN_NODES),
        format_args!("road eigenvalue at alpha = {alpha}"),
    )?;
    Ok(p.road_diffusion * alpha * alpha + p.gprime0() - road.lambda)
}

fn truncated_lower(p: &ModelParams, alpha: f64, height: f64) -> f64 {
    let d = p.field_diffusion;
    d * alpha * alpha + p.fprime0() - d * PI * PI / (height * height)
}

fn truncated_row(p: &ModelParams, pair: &EigenPair, road: f64) -> DispersionRow {
    let a = pair.alpha;
    let v = pair.minus_lambda();
    let lower = truncated_lower(p, a, pair.grid.height).max(road);
    let upper = shift_constant_m(a, p);
    let slack = 1e-8 * (1.0 + v.abs());
    DispersionRow {
        mode: "truncated",
        alpha: a,
        minus_lambda: v,
        lower_bound: lower,
        upper_bound: upper,
        bounds_ok: v > lower - slack && v < upper + slack,
        height: pair.grid.height,
        minus_lambda_last: v,
        tail: 0.0,
        residual: pair.residual,
        iterations: pair.iterations,
        converged: true,
    }
}

pub fn truncated_rows(cfg: &LoadedConfig, alphas: &[f64]) -> Result<Vec<DispersionRow>, Failure> {
    let grid = cfg.cell()?;
    let p = &cfg.params;
    let tol = cfg.config.tolerance.eigen;
    first_error(
        alphas
            .par_iter()
            .map(|&a| {
                let pair = core(principal_eigen_truncated(p, a, &grid, tol), format_args!("alpha = {a}"))?;
                Ok(truncated_row(p, &pair, road_bound(p, a)?))
            })
            .collect(),
    )
}

pub fn whole_field_rows(cfg: &LoadedConfig, alphas: &[f64]) -> Result<Vec<DispersionRow>, Failure> {
    let p = &cfg.params;
    let opts = cfg.whole_field_options();
    first_error(
        alphas
            .par_iter()
            .map(|&a| {
                let w = core(whole_field_eigenvalue(p, a, &opts), format_args!("alpha = {a}"))?;
                let v = w.minus_lambda();
                let d = p.field_diffusion;
                let lower = (d * a * a + p.fprime0()).max(road_bound(p, a)?);
                let upper = shift_constant_m(a, p);
                let slack = 3.0 * w.tail.abs() + opts.tol_r;
                Ok(DispersionRow {
                    mode: "whole_field",
                    alpha: a,
                    minus_lambda: v,
                    lower_bound: lower,
                    upper_bound: upper,
                    bounds_ok: v >= lower - slack && v <= upper + slack,
                    height: w.grid.height,
                    minus_lambda_last: -w.lambda_last,
                    tail: w.tail,
                    residual: w.levels.iter().map(|l| l.residual).fold(0.0, f64::max),
                    iterations: w.levels.iter().map(|l| l.iterations).sum(),
                    converged: w.converged,
                })
            })
            .collect(),
    )
}

fn cmd_eigen(cfg: &LoadedConfig, sink: &mut Sink) -> Result<String, Failure> {
    let alphas = alphas(cfg)?;
    let mode = cfg.config.task.mode;
    let mut rows = Vec::new();
    if matches!(mode, CurveSelection::Truncated | CurveSelection::Both) {
        rows.extend(truncated_rows(cfg, &alphas)?);
    }
    if matches!(mode, CurveSelection::WholeField | CurveSelection::Both) {
        rows.extend(whole_field_rows(cfg, &alphas)?);
    }
    if sink.wants_csv() {
        let mut t = Table::new(&[
            "mode",
            "alpha",
            "minus_lambda",
            "lower_bound",
            "upper_bound",
            "bounds_ok",
            "R",
            "minus_lambda_last",
            "tail",
            "residual",
            "iterations",
            "converged",
        ]);
        for r in &rows {
            t.push(vec![
                r.mode.into(),
                num(r.alpha),
                num(r.minus_lambda),
                num(r.lower_bound),
                num(r.upper_bound),
                flag(r.bounds_ok),
                num(r.height),
                num(r.minus_lambda_last),
                num(r.tail),
                num(r.residual),
                int(r.iterations),
                flag(r.converged),
            ]);
        }
        sink.csv("dispersion.csv", &t)?;
    }
    if sink.wants_json() {
        sink.json("dispersion.json", &rows)?;
    }
    let bad = rows.iter().filter(|r| !r.bounds_ok).count();
    Ok(format!("{} dispersion rows, {} outside the bounds", rows.len(), bad))
}

// ---------------------------------------------------------------- speed

#[derive(Debug, Clone, Serialize)]
pub struct ExpDecayRecord {
    pub alpha: f64,
    pub speed: f64,
    pub spectral: Option<f64>,
    pub closed_form: Option<f64>,
    /// `alpha >= alpha*`: the data spread at `c*`.
    pub uses_c_star: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeedResult {
    pub whole_field: Option<SpeedSummary>,
    pub truncated: Option<SpeedSummary>,
    pub exp_decay: Option<ExpDecayRecord>,
    pub threshold: Option<ThresholdReport>,
}

fn speed_table(summaries: &[&SpeedSummary]) -> Table {
    let mut t = Table::new(&[
        "mode",
        "D",
        "c_star",
        "alpha_star",
        "c_kpp",
        "accelerated",
        "bracket_lo",
        "bracket_hi",
        "truncated_speed",
    ]);
    for s in summaries {
        let mode = serde_json::to_value(s.mode)
            .ok()
            .and_then(|v| v["mode"].as_str().map(String::from))
            .unwrap_or_default();
        t.push(vec![
            mode,
            num(s.road_diffusion),
            num(s.c_star),
            num(s.alpha_star),
            num(s.c_kpp),
            flag(s.accelerated),
            num(s.bracket.0),
            num(s.bracket.1),
            s.truncated_speed.map(num).unwrap_or_default(),
        ]);
    }
    t
}

fn cmd_speed(cfg: &LoadedConfig, sink: &mut Sink) -> Result<String, Failure> {
    let p = &cfg.params;
    let task = &cfg.config.task;
    let opts = cfg.speed_options();
    let want_whole = matches!(task.mode, CurveSelection::WholeField | CurveSelection::Both) || task.exp_alpha.is_some();
    let whole = if want_whole {
        Some(core(whole_field_speed(p, &opts), "whole-field speed")?)
    } else {
        None
    };
    let truncated = if matches!(task.mode, CurveSelection::Truncated | CurveSelection::Both) {
        let grid = cfg.cell()?;
        Some(core(truncated_speed(p, &grid, &opts), "truncated speed")?)
    } else {
        None
    };
    let exp_decay = match (task.exp_alpha, &whole) {
        (Some(alpha), Some(s)) => Some(match exp_decay_speed(p, alpha, s, &opts.eigen) {
            Ok(e) => ExpDecayRecord {
                alpha,
                speed: e.speed,
                spectral: Some(e.spectral),
                closed_form: e.closed_form,
                uses_c_star: false,
            },
            Err(CoreError::UseCStar { .. }) => ExpDecayRecord {
                alpha,
                speed: s.c_star,
                spectral: None,
                closed_form: None,
                uses_c_star: true,
            },
            Err(e) => return Err(Failure::from_core(e, format_args!("exp_alpha = {alpha}"))),
        }),
        _ => None,
    };
    let threshold = match &task.d_sweep {
        Some(grid) => Some(core(acceleration_threshold_scan(p, grid, &opts), "task.d_sweep")?),
        None => None,
    };
    let whole_field = if matches!(task.mode, CurveSelection::Truncated) {
        None
    } else {
        whole
    };

    let result = SpeedResult {
        whole_field,
        truncated,
        exp_decay,
        threshold,
    };
    if sink.wants_csv() {
        let main: Vec<&SpeedSummary> = result.whole_field.iter().chain(result.truncated.iter()).collect();
        sink.csv("speed.csv", &speed_table(&main))?;
        if let Some(th) = &result.threshold {
            let rows: Vec<&SpeedSummary> = th.entries.iter().collect();
            sink.csv("threshold.csv", &speed_table(&rows))?;
        }
    }
    if sink.wants_json() {
        sink.json("speed.json", &result)?;
    }
    let mut parts = Vec::new();
    if let Some(s) = &result.whole_field {
        parts.push(format!("c* = {:.6} (accelerated: {})", s.c_star, s.accelerated));
    }
    if let Some(s) = &result.truncated {
        parts.push(format!("c*_R = {:.6}", s.c_star));
    }
    if let Some(e) = &result.exp_decay {
        parts.push(format!("c({}) = {:.6}", e.alpha, e.speed));
    }
    if let Some(th) = &result.threshold {
        parts.push(format!("onset {:?}", th.sign_changes.first()));
    }
    Ok(parts.join(", "))
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Serialize)]
pub struct TraceSummary {
    pub level: f64,
    pub fitted_speed: f64,
    pub fit_residual: f64,
    pub fit_window: (f64, f64),
    pub log_corrected_speed: f64,
    pub monotone_after_transient: bool,
    pub samples: usize,
}

impl From<&FrontTrace> for TraceSummary {
    fn from(t: &FrontTrace) -> Self {
        TraceSummary {
            level: t.level,
            fitted_speed: t.fitted_speed,
            fit_residual: t.fit_residual,
            fit_window: t.fit_window,
            log_corrected_speed: t.log_corrected_speed,
            monotone_after_transient: t.monotone_after_transient,
            samples: t.times.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub t_final: f64,
    pub steps: usize,
    pub dt: f64,
    pub reference: f64,
    pub envelope_k: f64,
    pub envelope_excess: f64,
    pub min_value: f64,
    pub traces: Vec<TraceSummary>,
    pub snapshot_times: Vec<f64>,
    pub inner: Option<InnerReport>,
}

fn state_tables(grid: &StripGrid, u: &[f64], v: &[f64], stride: usize) -> (Table, Table) {
    let mut road = Table::new(&["x", "u"]);
    for i in (0..grid.nx).step_by(stride) {
        road.push(vec![num(grid.x(i)), num(u[i])]);
    }
    let mut field = Table::new(&["x", "y", "v"]);
    for j in (0..grid.rows()).step_by(stride) {
        for i in (0..grid.nx).step_by(stride) {
            field.push(vec![num(grid.x(i)), num(grid.y(j)), num(v[grid.index(i, j)])]);
        }
    }
    (road, field)
}

pub fn simulation(cfg: &LoadedConfig) -> Result<(StripGrid, EvolveOutput), Failure> {
    let task = &cfg.config.task;
    let grid = cfg.strip()?;
    let initial = task
        .initial
        .as_ref()
        .ok_or_else(|| Failure::config("task.initial is required"))?;
    let t_final = task
        .t_final
        .ok_or_else(|| Failure::config("task.t_final is required"))?;
    let out = core(evolve(initial, &cfg.params, &grid, t_final, &task.trace), "simulate")?;
    Ok((grid, out))
}

fn cmd_simulate(cfg: &LoadedConfig, sink: &mut Sink) -> Result<String, Failure> {
    let task = &cfg.config.task;
    let (grid, out) = simulation(cfg)?;
    let inner = match task.inner {
        Some(b) => {
            let cell = core(
                CellGrid::new(grid.period, grid.height, grid.cells_per_period(), grid.ny),
                "stationary cell for task.inner",
            )?;
            let st = core(
                stationary_state(&cfg.params, &cell, grid.top, &cfg.stationary_options()),
                "stationary state",
            )?;
            Some(core(inner_spreading_check(&out, &st, b.c_test, b.y_max), "task.inner")?)
        }
        None => None,
    };

    let traces: Vec<&FrontTrace> = std::iter::once(&out.trace).chain(&out.extra_traces).collect();
    if sink.wants_csv() {
        let mut front = Table::new(&["level", "t", "x"]);
        for tr in &traces {
            for (t, x) in tr.times.iter().zip(&tr.positions) {
                front.push(vec![num(tr.level), num(*t), num(*x)]);
            }
        }
        sink.csv("front.csv", &front)?;
        for (k, s) in out.snapshots.iter().enumerate() {
            let (road, field) = state_tables(&grid, &s.u, &s.v, task.snapshot_stride);
            sink.csv(&format!("snapshot_{k:03}_road.csv"), &road)?;
            sink.csv(&format!("snapshot_{k:03}_field.csv"), &field)?;
        }
        let (road, field) = state_tables(&grid, &out.state.u, &out.state.v, task.snapshot_stride);
        sink.csv("final_road.csv", &road)?;
        sink.csv("final_field.csv", &field)?;
    }
    let summary = SimulationSummary {
        t_final: out.state.t,
        steps: out.state.step_count,
        dt: out.state.dt,
        reference: out.reference,
        envelope_k: out.envelope.k,
        envelope_excess: out.envelope_excess,
        min_value: out.min_value,
        traces: traces.iter().map(|t| TraceSummary::from(*t)).collect(),
        snapshot_times: out.snapshots.iter().map(|s| s.t).collect(),
        inner,
    };
    sink.json("summary.json", &summary)?;
    if sink.wants_json() {
        sink.json("front.json", &traces)?;
    }
    Ok(format!(
        "fitted speed {:.6} over t in [{:.2}, {:.2}]",
        out.trace.fitted_speed, out.trace.fit_window.0, out.trace.fit_window.1
    ))
}

// ---------------------------------------------------------------- stationary

#[derive(Debug, Clone, Serialize)]
pub struct StationarySummary {
    pub residual: f64,
    pub gap: f64,
    pub converged_from: roadfield_core::simulator::StartSide,
    pub time_below: f64,
    pub time_above: f64,
    pub monotone_below: bool,
    pub monotone_above: bool,
    pub min_u: f64,
    pub max_u: f64,
    pub min_v: f64,
    pub max_v: f64,
    /// `max |V - 1|` on the top row (reflecting top only).
    pub top_row_deviation: Option<f64>,
    pub envelope_k: f64,
    pub pair: StationaryPair,
}

fn summarize_stationary(pair: StationaryPair) -> StationarySummary {
    let (nx, ny) = (pair.grid.nx, pair.grid.ny);
    let fold = |xs: &[f64]| {
        xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
    };
    let (min_u, max_u) = fold(&pair.u);
    let interior = match pair.top {
        TopBoundary::Neumann => &pair.v[..],
        TopBoundary::Dirichlet => &pair.v[..ny * nx],
    };
    let (min_v, max_v) = fold(interior);
    let top_row_deviation =
        (pair.top == TopBoundary::Neumann).then(|| (0..nx).map(|i| (pair.v_at(i, ny) - 1.0).abs()).fold(0.0, f64::max));
    StationarySummary {
        residual: pair.residual,
        gap: pair.gap,
        converged_from: pair.converged_from,
        time_below: pair.time_below,
        time_above: pair.time_above,
        monotone_below: pair.monotone_below,
        monotone_above: pair.monotone_above,
        min_u,
        max_u,
        min_v,
        max_v,
        top_row_deviation,
        envelope_k: pair.envelope.k,
        pair,
    }
}

fn cmd_stationary(cfg: &LoadedConfig, sink: &mut Sink) -> Result<String, Failure> {
    let grid = cfg.cell()?;
    let pair = core(
        stationary_state(&cfg.params, &grid, cfg.config.grid.top, &cfg.stationary_options()),
        "stationary state",
    )?;
    let s = summarize_stationary(pair);
    if sink.wants_csv() {
        let stride = cfg.config.task.snapshot_stride;
        let mut road = Table::new(&["x", "U"]);
        for i in (0..grid.nx).step_by(stride) {
            road.push(vec![num(grid.x(i)), num(s.pair.u[i])]);
        }
        let mut field = Table::new(&["x", "y", "V"]);
        for j in (0..=grid.ny).step_by(stride) {
            for i in (0..grid.nx).step_by(stride) {
                field.push(vec![num(grid.x(i)), num(grid.y(j)), num(s.pair.v_at(i, j))]);
            }
        }
        sink.csv("stationary_road.csv", &road)?;
        sink.csv("stationary_field.csv", &field)?;
    }
    if sink.wants_json() {
        sink.json("stationary.json", &s)?;
    }
    Ok(format!(
        "U in [{:.6}, {:.6}], min V {:.6}, gap {:.2e}",
        s.min_u, s.max_u, s.min_v, s.gap
    ))
}

// ---------------------------------------------------------------- verify

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Computed and recorded, no pass/fail verdict.
    Reported,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyRecord {
    pub property: String,
    /// The statement being checked.
    pub anchor: &'static str,
    pub status: Status,
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub detail: String,
}

impl PropertyRecord {
    fn new(
        property: impl Into<String>,
        anchor: &'static str,
        pass: bool,
        value: f64,
        limit: f64,
        detail: String,
    ) -> Self {
        PropertyRecord {
            property: property.into(),
            anchor,
            status: if pass { Status::Pass } else { Status::Fail },
            value: Some(value),
            limit: Some(limit),
            detail,
        }
    }

    fn skipped(property: &str, anchor: &'static str, detail: impl Into<String>) -> Self {
        PropertyRecord {
            property: property.into(),
            anchor,
            status: Status::Skipped,
            value: None,
            limit: None,
            detail: detail.into(),
        }
    }

    fn failed(property: &str, anchor: &'static str, err: impl Display) -> Self {
        PropertyRecord {
            property: property.into(),
            anchor,
            status: Status::Fail,
            value: None,
            limit: None,
            detail: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub records: Vec<PropertyRecord>,
}

const ANCHOR_COOPERATIVE: &str = "discrete cell operator is cooperative (nonnegative off-diagonal couplings)";
const ANCHOR_POSITIVE: &str = "principal eigenfunction is positive and grows at most like 1 + (nu1/d) y";
const ANCHOR_BOUNDS: &str = "max(d a^2 + f'(0) - d pi^2/R^2, D a^2 + g'(0) - lambda_a) < -Lambda_R(a) < M_a";
const ANCHOR_MONOTONE_R: &str = "Lambda_R(a) decreases strictly as R grows";
const ANCHOR_CONCAVE: &str = "a -> Lambda_R(a) is concave";
const ANCHOR_AVERAGING: &str = "-d Phi'(0) = (D a^2 + g'(0) + Lambda) int U for the x-average Phi of V";
const ANCHOR_SINE: &str = "Phi is a multiple of sin(omega (R - y)) when omega^2 > 0";
const ANCHOR_ORACLE: &str = "constant coefficients: Lambda_R matches the transcendental dispersion relation";
const ANCHOR_FLAT: &str = "D <= d: -Lambda(a) = d a^2 + f'(0)";
const ANCHOR_COMPARISON: &str = "ordered data stay ordered and nonnegative under the scheme";
const ANCHOR_MASS: &str = "without reactions the total mass on road and field is conserved";
const ANCHOR_SPEED: &str = "compact data spread along the road at c* = min -Lambda(a)/a";
const ANCHOR_TRUNCATED_FIELD: &str = "truncated speed c*_R compared with 2 sqrt(d f'(0) - d^2 pi^2/(4 R^2))";

fn default_verify_alphas() -> Vec<f64> {
    (0..20).map(|k| 0.1 + 0.1 * k as f64).collect()
}

struct Suite<'a> {
    cfg: &'a LoadedConfig,
    p: &'a ModelParams,
    grid: CellGrid,
    alphas: Vec<f64>,
    records: Vec<PropertyRecord>,
}

impl<'a> Suite<'a> {
    fn alpha_mid(&self) -> f64 {
        self.alphas[self.alphas.len() / 2].max(1e-3)
    }

    fn record(&mut self, name: &str, anchor: &'static str, r: Result<PropertyRecord, CoreError>) {
        self.records
            .push(r.unwrap_or_else(|e| PropertyRecord::failed(name, anchor, e)));
    }

    fn cooperativity(&mut self) {
        let mut worst = Ok(0usize);
        for &a in &self.alphas {
            match build_cell_operator(&self.grid, self.p, a) {
                Ok(op) if op.is_cooperative() => {}
                Ok(_) => {
                    worst = Err(format!("operator at alpha = {a} has a negative off-diagonal entry"));
                    break;
                }
                Err(e) => {
                    worst = Err(format!("alpha = {a}: {e}"));
                    break;
                }
            }
        }
        self.records.push(match worst {
            Ok(_) => PropertyRecord::new(
                "cooperativity",
                ANCHOR_COOPERATIVE,
                true,
                self.alphas.len() as f64,
                self.alphas.len() as f64,
                "all sampled alphas".into(),
            ),
            Err(msg) => PropertyRecord::failed("cooperativity", ANCHOR_COOPERATIVE, msg),
        });
    }

    fn eigen_properties(&mut self) {
        let tol = self.cfg.config.tolerance.eigen;
        let pairs: Vec<Result<EigenPair, CoreError>> = self
            .alphas
            .par_iter()
            .map(|&a| principal_eigen_truncated(self.p, a, &self.grid, tol))
            .collect();
        let pairs: Vec<EigenPair> = match pairs.into_iter().collect::<Result<Vec<_>, _>>() {
            Ok(v) => v,
            Err(e) => {
                for (name, anchor) in [
                    ("eigen_positivity_growth", ANCHOR_POSITIVE),
                    ("truncated_bounds", ANCHOR_BOUNDS),
                    ("concavity", ANCHOR_CONCAVE),
                ] {
                    self.records.push(PropertyRecord::failed(name, anchor, &e));
                }
                return;
            }
        };

        let mut worst_excess = f64::NEG_INFINITY;
        let mut positive = true;
        let mut growth = true;
        let field_rows = self.grid.field_len();
        for pair in &pairs {
            positive &= pair.u.iter().all(|&w| w > 0.0) && pair.v[..field_rows].iter().all(|&w| w > 0.0);
            let g = eigenfunction_growth_check(pair, self.p);
            growth &= g.passes;
            worst_excess = worst_excess.max(g.max_excess);
        }
        self.records.push(PropertyRecord::new(
            "eigen_positivity_growth",
            ANCHOR_POSITIVE,
            positive && growth,
            worst_excess,
            0.0,
            format!("positive: {positive}, growth bound: {growth}"),
        ));

        let rows: Result<Vec<DispersionRow>, Failure> = pairs
            .iter()
            .map(|pair| Ok(truncated_row(self.p, pair, road_bound(self.p, pair.alpha)?)))
            .collect();
        match rows {
            Ok(rows) => {
                let margin = rows
                    .iter()
                    .map(|r| (r.minus_lambda - r.lower_bound).min(r.upper_bound - r.minus_lambda))
                    .fold(f64::INFINITY, f64::min);
                let bad: Vec<String> = rows
                    .iter()
                    .filter(|r| !r.bounds_ok)
                    .map(|r| format!("{}", r.alpha))
                    .collect();
                self.records.push(PropertyRecord::new(
                    "truncated_bounds",
                    ANCHOR_BOUNDS,
                    bad.is_empty(),
                    margin,
                    0.0,
                    if bad.is_empty() {
                        "smallest margin to either bound".into()
                    } else {
                        format!("violated at alpha = {}", bad.join(", "))
                    },
                ));
            }
            Err(e) => self
                .records
                .push(PropertyRecord::failed("truncated_bounds", ANCHOR_BOUNDS, e)),
        }

        if self.alphas.len() >= 3 {
            let lambdas: Vec<f64> = pairs.iter().map(|p| p.lambda).collect();
            let v = concavity_violation(&self.alphas, &lambdas);
            self.records.push(PropertyRecord::new(
                "concavity",
                ANCHOR_CONCAVE,
                v <= 1e-6,
                v,
                1e-6,
                format!("{} samples", lambdas.len()),
            ));
        } else {
            self.records.push(PropertyRecord::skipped(
                "concavity",
                ANCHOR_CONCAVE,
                "needs at least three alphas",
            ));
        }

        let mid = &pairs[pairs.len() / 2];
        let limit = self.cfg.config.tolerance.profile;
        self.records.push(match sine_profile_misfit(mid, self.p) {
            Some(m) => PropertyRecord::new(
                "sine_profile",
                ANCHOR_SINE,
                m < limit,
                m,
                limit,
                format!("alpha = {}", mid.alpha),
            ),
            None => PropertyRecord::skipped(
                "sine_profile",
                ANCHOR_SINE,
                format!("omega^2 <= 0 at alpha = {}", mid.alpha),
            ),
        });
    }

    fn monotone_in_height(&mut self) {
        let a = self.alpha_mid();
        let (p, grid, tol) = (self.p, self.grid, self.cfg.config.tolerance.eigen);
        let r = (|| {
            let mut values = Vec::new();
            for scale in [0.5, 1.0, 2.0] {
                let g = CellGrid::with_spacing(grid.period, grid.height * scale, grid.nx, grid.hy())?;
                values.push(principal_eigen_truncated(p, a, &g, tol)?.lambda);
            }
            let gap = values.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
            Ok(PropertyRecord::new(
                "monotone_in_height",
                ANCHOR_MONOTONE_R,
                gap > 0.0,
                gap,
                0.0,
                format!("alpha = {a}, R = {} x (0.5, 1, 2)", grid.height),
            ))
        })();
        self.record("monotone_in_height", ANCHOR_MONOTONE_R, r);
    }

    fn averaging(&mut self) {
        let a = self.alpha_mid();
        let (p, grid, tol) = (self.p, self.grid, self.cfg.config.tolerance.eigen);
        let limit = self.cfg.config.tolerance.averaging;
        let r = (|| {
            let coarse = averaging_identity_check(&principal_eigen_truncated(p, a, &grid, tol)?, p).residual;
            let fine = averaging_identity_check(&principal_eigen_truncated(p, a, &grid.refined()?, tol)?, p).residual;
            let ratio = coarse / fine;
            Ok(PropertyRecord::new(
                "averaging_identity",
                ANCHOR_AVERAGING,
                coarse < limit && ratio >= 3.0,
                coarse,
                limit,
                format!(
                    "alpha = {a}, residual {coarse:.3e} -> {fine:.3e} under refinement (ratio {ratio:.2}, needs >= 3)"
                ),
            ))
        })();
        self.record("averaging_identity", ANCHOR_AVERAGING, r);
    }

    fn oracle(&mut self) {
        let p = self.p;
        if !p.has_constant_exchange() || p.g.is_some() {
            self.records.push(PropertyRecord::skipped(
                "oracle_equivalence",
                ANCHOR_ORACLE,
                "needs constant exchange rates and no road reaction",
            ));
            return;
        }
        let a = self.alpha_mid();
        let (grid, tol) = (self.grid, self.cfg.config.tolerance.eigen);
        let limit = self.cfg.config.tolerance.oracle;
        let r = (|| {
            let exact = constant_coefficient_oracle(
                p.road_diffusion,
                p.field_diffusion,
                p.mu.eval(0.0),
                p.nu.eval(0.0),
                p.fprime0(),
                a,
                grid.height,
            )?;
            let mut errs = Vec::new();
            let mut g = grid;
            for level in 0..3 {
                if level > 0 {
                    g = CellGrid::with_spacing(g.period, g.height, g.nx, g.hy() / 2.0)?;
                }
                errs.push((principal_eigen_truncated(p, a, &g, tol.min(1e-12))?.lambda - exact).abs());
            }
            let order = (errs[1] / errs[2]).log2();
            let pass = errs[2] < limit && (errs[2] < 1e-11 || order >= 1.5);
            Ok(PropertyRecord::new(
                "oracle_equivalence",
                ANCHOR_ORACLE,
                pass,
                errs[2],
                limit,
                format!(
                    "alpha = {a}, errors {:.3e} {:.3e} {:.3e}, order {order:.2} (needs >= 1.5)",
                    errs[0], errs[1], errs[2]
                ),
            ))
        })();
        self.record("oracle_equivalence", ANCHOR_ORACLE, r);
    }

    fn flat(&mut self) {
        let p = self.p;
        if p.road_diffusion > p.field_diffusion || p.g.is_some() {
            self.records.push(PropertyRecord::skipped(
                "flat_dispersion",
                ANCHOR_FLAT,
                "applies when D <= d without road reaction",
            ));
            return;
        }
        let a = self.alpha_mid();
        let opts = self.cfg.whole_field_options();
        let r = whole_field_eigenvalue(p, a, &opts).map(|w| {
            let exact = p.field_diffusion * a * a + p.fprime0();
            let err = (w.minus_lambda() - exact).abs();
            PropertyRecord::new(
                "flat_dispersion",
                ANCHOR_FLAT,
                err < opts.tol_r,
                err,
                opts.tol_r,
                format!("alpha = {a}, R = {}", w.grid.height),
            )
        });
        self.record("flat_dispersion", ANCHOR_FLAT, r);
    }

    fn small_strip(&self) -> Result<StripGrid, CoreError> {
        match self.cfg.strip() {
            Ok(g) => Ok(g),
            Err(_) => StripGrid::new(self.p.period, 4, 4, 8, 5.0, 25, TopBoundary::Neumann),
        }
    }

    fn comparison_and_mass(&mut self) {
        let steps = 200;
        let r = (|| {
            let grid = self.small_strip()?;
            let dt = dt_max(self.p, grid.hy(), 1.0);
            let stepper = Stepper::strip(self.p, &grid, dt, 1.0)?;
            let bump = |h| InitialData::Compact {
                center: 0.5 * (grid.x_min + grid.x_max),
                radius: 0.25 * (grid.x_max - grid.x_min),
                height: h,
            };
            let mut lo = bump(0.5).sample(&grid);
            let mut hi = bump(1.0).sample(&grid);
            lo.dt = dt;
            hi.dt = dt;
            let mut violation: f64 = 0.0;
            for _ in 0..steps {
                stepper.step(&mut lo);
                stepper.step(&mut hi);
                violation = violation.max(ordering_violation(&lo, &hi));
            }
            Ok(PropertyRecord::new(
                "comparison",
                ANCHOR_COMPARISON,
                violation <= 0.0,
                violation,
                0.0,
                format!("{steps} steps, dt = {dt:.4e}"),
            ))
        })();
        self.record("comparison", ANCHOR_COMPARISON, r);

        let r = (|| {
            let mut grid = self.small_strip()?;
            grid.top = TopBoundary::Neumann;
            let p = self.p.with_reaction_disabled();
            let dt = dt_max(&p, grid.hy(), 1.0);
            let stepper = Stepper::strip(&p, &grid, dt, 1.0)?;
            let mut s = InitialData::Compact {
                center: 0.5 * (grid.x_min + grid.x_max),
                radius: 0.25 * (grid.x_max - grid.x_min),
                height: 1.0,
            }
            .sample(&grid);
            s.dt = dt;
            let m0 = grid.mass(&s.u, &s.v);
            for _ in 0..steps {
                stepper.step(&mut s);
            }
            let drift = (grid.mass(&s.u, &s.v) - m0).abs() / m0;
            Ok(PropertyRecord::new(
                "mass_conservation",
                ANCHOR_MASS,
                drift < 1e-12,
                drift,
                1e-12,
                format!("{steps} steps, reflecting top, relative drift"),
            ))
        })();
        self.record("mass_conservation", ANCHOR_MASS, r);
    }

    fn speed(&mut self) {
        if !self.cfg.config.task.verify_speed {
            self.records.push(PropertyRecord::skipped(
                "speed_cross_validation",
                ANCHOR_SPEED,
                "enable with task.verify_speed",
            ));
            return;
        }
        let limit = self.cfg.config.tolerance.speed;
        let spectral = whole_field_speed(self.p, &self.cfg.speed_options());
        let record = match (spectral, simulation(self.cfg)) {
            (Ok(s), Ok((_, run))) => {
                let err = (run.trace.fitted_speed - s.c_star).abs() / s.c_star;
                PropertyRecord::new(
                    "speed_cross_validation",
                    ANCHOR_SPEED,
                    err < limit,
                    err,
                    limit,
                    format!(
                        "fitted {:.6} vs c* {:.6}; log-corrected fit {:.6}",
                        run.trace.fitted_speed, s.c_star, run.trace.log_corrected_speed
                    ),
                )
            }
            (Err(e), _) => PropertyRecord::failed("speed_cross_validation", ANCHOR_SPEED, e),
            (_, Err(e)) => PropertyRecord::failed("speed_cross_validation", ANCHOR_SPEED, e),
        };
        self.records.push(record);
    }

    fn truncated_field(&mut self) {
        if !self.cfg.config.task.truncated_field {
            return;
        }
        let height = self.grid.height;
        let r = (|| {
            let c_r = truncated_speed(self.p, &self.grid, &self.cfg.speed_options())?.c_star;
            let c_kpp_r = truncated_field_reference_speed(self.p.field_diffusion, self.p.fprime0(), height)?;
            Ok(PropertyRecord {
                property: "truncated_field_speed".into(),
                anchor: ANCHOR_TRUNCATED_FIELD,
                status: Status::Reported,
                value: Some(c_r - c_kpp_r),
                limit: None,
                detail: format!("reported, not asserted: c*_R = {c_r:.6}, c*_KPP,R = {c_kpp_r:.6} at R = {height}"),
            })
        })();
        self.record("truncated_field_speed", ANCHOR_TRUNCATED_FIELD, r);
    }
}

fn ordering_violation(lo: &SimulationState, hi: &SimulationState) -> f64 {
    let neg = lo.min_value().min(hi.min_value()).min(0.0);
    let cross =
        lo.u.iter()
            .chain(&lo.v)
            .zip(hi.u.iter().chain(&hi.v))
            .map(|(a, b)| a - b)
            .fold(0.0, f64::max);
    cross.max(0.0 - neg)
}

pub fn verify_report(cfg: &LoadedConfig) -> Result<VerifyReport, Failure> {
    let grid = cfg.cell()?;
    let alphas = match &cfg.config.task.alphas {
        Some(a) => a.values().map_err(Failure::Config)?,
        None => default_verify_alphas(),
    };
    let mut suite = Suite {
        cfg,
        p: &cfg.params,
        grid,
        alphas,
        records: Vec::new(),
    };
    suite.cooperativity();
    suite.eigen_properties();
    suite.monotone_in_height();
    suite.averaging();
    suite.oracle();
    suite.flat();
    suite.comparison_and_mass();
    suite.speed();
    suite.truncated_field();
    let passed = suite.records.iter().all(|r| r.status != Status::Fail);
    Ok(VerifyReport {
        passed,
        records: suite.records,
    })
}

fn cmd_verify(cfg: &LoadedConfig, sink: &mut Sink) -> Result<String, Failure> {
    let report = verify_report(cfg)?;
    if sink.wants_json() {
        sink.json("verify.json", &report)?;
    }
    if sink.wants_csv() {
        let mut t = Table::new(&["property", "status", "value", "limit", "anchor", "detail"]);
        for r in &report.records {
            let status = serde_json::to_value(r.status)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default();
            t.push(vec![
                r.property.clone(),
                status,
                r.value.map(num).unwrap_or_default(),
                r.limit.map(num).unwrap_or_default(),
                csv_quote(r.anchor),
                csv_quote(&r.detail),
            ]);
        }
        sink.csv("verify.csv", &t)?;
    }
    let failed: Vec<String> = report
        .records
        .iter()
        .filter(|r| r.status == Status::Fail)
        .map(|r| r.property.clone())
        .collect();
    if failed.is_empty() {
        Ok(format!("{} properties checked, none failed", report.records.len()))
    } else {
        Err(Failure::Property { failed })
    }
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}
