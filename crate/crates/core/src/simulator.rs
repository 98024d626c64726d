//! Direct time integration of the nonlinear road-field system.
//!
//! One step applies the explicit part (exchange, Robin flux and reactions)
//! followed by implicit diffusion. On the half-strip the diffusion is split
//! into `x` and `y` line solves; on the periodic cell used for the stationary
//! state it is a single backward-Euler solve, so fixed points of the scheme are
//! exactly the discrete stationary solutions. Both variants are monotone for
//! `dt <= dt_max`, which gives positivity and the comparison principle.

use serde::{Deserialize, Serialize};

use crate::banded::{BandedLu, BandedMatrix};
use crate::eigensolver::{principal_eigen_truncated, road_principal_pair};
use crate::error::{Error, Result};
use crate::grids::{build_strip_operators, zigzag_positions, CellGrid, LineOperator, StripGrid, TopBoundary};
use crate::model::{ModelParams, WORKING_RANGE};

/// Discrete road and field densities at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationState {
    pub t: f64,
    pub u: Vec<f64>,
    /// Field values, `x` fastest, rows `0..=ny`.
    pub v: Vec<f64>,
    pub dt: f64,
    pub step_count: usize,
}

impl SimulationState {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Self {
        SimulationState {
            t: 0.0,
            u,
            v,
            dt: 0.0,
            step_count: 0,
        }
    }

    /// Smallest value over road and field.
    pub fn min_value(&self) -> f64 {
        self.u.iter().chain(&self.v).cloned().fold(f64::INFINITY, f64::min)
    }

    /// Largest value over road and field.
    pub fn max_value(&self) -> f64 {
        self.u.iter().chain(&self.v).cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Largest step for which the explicit part is monotone:
/// `0.9 / max(mu1 + Lip(g), 2 nu1/hy + Lip(f))`, Lipschitz constants taken on
/// `[0, range]`.
pub fn dt_max(params: &ModelParams, hy: f64, range: f64) -> f64 {
    let range = range.max(WORKING_RANGE);
    let lip_g = params.g.as_ref().map_or(0.0, |g| g.lipschitz_on(range));
    let road = params.mu1() + lip_g;
    let field = 2.0 * params.nu1() / hy + params.f.lipschitz_on(range);
    0.9 / road.max(field)
}

/// Thomas factorization of `I - dt c delta2` with reflecting ends.
struct Tridiagonal {
    lower: Vec<f64>,
    upper: Vec<f64>,
    inv_diag: Vec<f64>,
}

impl Tridiagonal {
    fn implicit(op: &LineOperator, dt: f64) -> Self {
        let n = op.n;
        let s = dt * op.coefficient / (op.h * op.h);
        let mut sub = vec![-s; n];
        let mut diag = vec![1.0 + 2.0 * s; n];
        let mut sup = vec![-s; n];
        sup[0] = -2.0 * s;
        if op.dirichlet_end {
            diag[n - 1] = 1.0;
            sub[n - 1] = 0.0;
        } else {
            sub[n - 1] = -2.0 * s;
        }
        let mut lower = vec![0.0; n];
        let mut inv_diag = vec![0.0; n];
        let mut pivot = diag[0];
        inv_diag[0] = 1.0 / pivot;
        for i in 1..n {
            lower[i] = sub[i] / pivot;
            pivot = diag[i] - lower[i] * sup[i - 1];
            inv_diag[i] = 1.0 / pivot;
        }
        Tridiagonal {
            lower,
            upper: sup,
            inv_diag,
        }
    }

    fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 1..n {
            x[i] -= self.lower[i] * x[i - 1];
        }
        x[n - 1] *= self.inv_diag[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (x[i] - self.upper[i] * x[i + 1]) * self.inv_diag[i];
        }
    }

    /// Solves along the slow index of a row-major block, one row at a time.
    fn solve_rows(&self, v: &mut [f64], width: usize) {
        let n = v.len() / width;
        for j in 1..n {
            let l = self.lower[j];
            let (done, rest) = v.split_at_mut(j * width);
            let prev = &done[(j - 1) * width..];
            for (a, b) in rest[..width].iter_mut().zip(prev) {
                *a -= l * b;
            }
        }
        let d = self.inv_diag[n - 1];
        v[(n - 1) * width..].iter_mut().for_each(|a| *a *= d);
        for j in (0..n - 1).rev() {
            let (up, d) = (self.upper[j], self.inv_diag[j]);
            let (head, tail) = v.split_at_mut((j + 1) * width);
            let next = &tail[..width];
            for (a, b) in head[j * width..].iter_mut().zip(next) {
                *a = (*a - up * b) * d;
            }
        }
    }
}

enum Diffusion {
    Strip {
        road: Tridiagonal,
        field_x: Tridiagonal,
        field_y: Tridiagonal,
    },
    Cell {
        road: BandedLu,
        road_pos: Vec<usize>,
        field: BandedLu,
    },
}

/// Cached factorizations for repeated steps with a fixed `dt`.
pub struct Stepper {
    params: ModelParams,
    dt: f64,
    hy: f64,
    nx: usize,
    rows: usize,
    mu: Vec<f64>,
    nu: Vec<f64>,
    dirichlet_top: bool,
    diffusion: Diffusion,
}

impl Stepper {
    fn check_dt(params: &ModelParams, dt: f64, hy: f64, range: f64) -> Result<()> {
        let bound = dt_max(params, hy, range);
        if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
            return Err(Error::TimeStep { dt, bound });
        }
        Ok(())
    }

    /// Stepper on the half-strip; `range` bounds the densities for the
    /// Lipschitz constants in the step bound.
    pub fn strip(params: &ModelParams, grid: &StripGrid, dt: f64, range: f64) -> Result<Self> {
        Self::check_dt(params, dt, grid.hy(), range)?;
        let ops = build_strip_operators(grid, params)?;
        Ok(Stepper {
            params: params.clone(),
            dt,
            hy: grid.hy(),
            nx: grid.nx,
            rows: grid.rows(),
            mu: ops.mu.clone(),
            nu: ops.nu.clone(),
            dirichlet_top: grid.top == TopBoundary::Dirichlet,
            diffusion: Diffusion::Strip {
                road: Tridiagonal::implicit(&ops.road, dt),
                field_x: Tridiagonal::implicit(&ops.field_x, dt),
                field_y: Tridiagonal::implicit(&ops.field_y, dt),
            },
        })
    }

    /// Stepper on the periodic cell `T x [0, Y]` with `ny + 1` rows, reflecting
    /// or Dirichlet top.
    pub fn cell(params: &ModelParams, grid: &CellGrid, top: TopBoundary, dt: f64, range: f64) -> Result<Self> {
        Self::check_dt(params, dt, grid.hy(), range)?;
        let (nx, ny) = (grid.nx, grid.ny);
        let (hx, hy) = (grid.hx(), grid.hy());
        let big_d = params.road_diffusion;
        let d = params.field_diffusion;

        let road_pos = zigzag_positions(nx);
        let mut road = BandedMatrix::zeros(nx, 2, 2);
        let sr = dt * big_d / (hx * hx);
        for i in 0..nx {
            let (p, pp, pm) = (road_pos[i], road_pos[(i + 1) % nx], road_pos[(i + nx - 1) % nx]);
            road.add(p, p, 1.0 + 2.0 * sr);
            road.add(p, pp, -sr);
            road.add(p, pm, -sr);
        }

        let rows = ny + 1;
        let mut field = BandedMatrix::zeros(nx * rows, nx, nx);
        let (sx, sy) = (dt * d / (hx * hx), dt * d / (hy * hy));
        for j in 0..rows {
            for i in 0..nx {
                let k = j * nx + i;
                if top == TopBoundary::Dirichlet && j == ny {
                    field.add(k, k, 1.0);
                    continue;
                }
                field.add(k, k, 1.0 + 2.0 * sx + 2.0 * sy);
                field.add(k, j * nx + (i + 1) % nx, -sx);
                field.add(k, j * nx + (i + nx - 1) % nx, -sx);
                if j == 0 {
                    field.add(k, nx + i, -2.0 * sy);
                } else if j == ny {
                    field.add(k, k - nx, -2.0 * sy);
                } else {
                    field.add(k, k - nx, -sy);
                    if !(top == TopBoundary::Dirichlet && j + 1 == ny) {
                        field.add(k, k + nx, -sy);
                    }
                }
            }
        }
        let mu = (0..nx).map(|i| params.mu.eval(grid.x(i))).collect();
        let nu = (0..nx).map(|i| params.nu.eval(grid.x(i))).collect();
        Ok(Stepper {
            params: params.clone(),
            dt,
            hy,
            nx,
            rows,
            mu,
            nu,
            dirichlet_top: top == TopBoundary::Dirichlet,
            diffusion: Diffusion::Cell {
                road: road.factor()?,
                road_pos,
                field: field.factor()?,
            },
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `state` by one step.
    pub fn step(&self, state: &mut SimulationState) {
        let (nx, dt) = (self.nx, self.dt);
        assert_eq!(state.u.len(), nx);
        assert_eq!(state.v.len(), nx * self.rows);
        let robin = 2.0 / self.hy;
        let mut u = state.u.clone();
        let mut v: Vec<f64> = state.v.iter().map(|&w| w + dt * self.params.f.eval(w)).collect();
        for i in 0..nx {
            let (ui, v0) = (state.u[i], state.v[i]);
            let exchange = self.nu[i] * v0 - self.mu[i] * ui;
            u[i] = ui + dt * (exchange + self.params.road_reaction(ui));
            v[i] -= dt * robin * exchange;
        }
        if self.dirichlet_top {
            v[(self.rows - 1) * nx..].iter_mut().for_each(|w| *w = 0.0);
        }
        match &self.diffusion {
            Diffusion::Strip { road, field_x, field_y } => {
                road.solve(&mut u);
                for row in v.chunks_mut(nx) {
                    field_x.solve(row);
                }
                field_y.solve_rows(&mut v, nx);
            }
            Diffusion::Cell { road, road_pos, field } => {
                let mut permuted = vec![0.0; nx];
                for i in 0..nx {
                    permuted[road_pos[i]] = u[i];
                }
                road.solve_in_place(&mut permuted);
                for i in 0..nx {
                    u[i] = permuted[road_pos[i]];
                }
                field.solve_in_place(&mut v);
            }
        }
        state.u = u;
        state.v = v;
        state.t += dt;
        state.dt = dt;
        state.step_count += 1;
    }
}

/// One step on the half-strip with the factorizations rebuilt; prefer
/// [`Stepper`] for repeated steps.
pub fn step(state: &SimulationState, params: &ModelParams, grid: &StripGrid) -> Result<SimulationState> {
    let range = state.max_value();
    let stepper = Stepper::strip(params, grid, state.dt, range)?;
    let mut next = state.clone();
    stepper.step(&mut next);
    Ok(next)
}

/// Supersolution `K (U0(x), C (1 + e^{-omega y}))`, where `U0` is the
/// principal eigenfunction of `-D d2 + mu` on one period (eigenvalue
/// `lambda0`, `max U0 = 1`), `C = lambda0 min U0 / (2 nu1)`, `omega` makes the
/// discrete Robin row dominated and `K` makes the reaction absorb the
/// vertical curvature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope {
    pub k: f64,
    pub c: f64,
    pub omega: f64,
    pub lambda0: f64,
    /// `U0` at the nodes of one period.
    pub road_profile: Vec<f64>,
    pub hy: f64,
}

impl Envelope {
    /// Builds the envelope for a lattice with `cells_per_period` road nodes per
    /// period, row spacing `hy`, height `height` and the given top boundary;
    /// `k_min` is a lower bound on `K` (to dominate initial data).
    pub fn build(
        params: &ModelParams,
        cells_per_period: usize,
        hy: f64,
        height: f64,
        top: TopBoundary,
        k_min: f64,
    ) -> Result<Self> {
        let road = road_principal_pair(params, 0.0, cells_per_period)?;
        let lambda0 = road.lambda;
        let umin = road.u.iter().cloned().fold(f64::INFINITY, f64::min);
        let c = lambda0 * umin / (2.0 * params.nu1());
        let d = params.field_diffusion;
        let z = hy * params.mu1() / (c * d);
        if !(z < 1.0 && c > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "hy = {hy} too coarse for the supersolution envelope (needs hy < {})",
                c * d / params.mu1()
            )));
        }
        let omega = -(1.0 - z).ln() / hy;
        let mut q = d * (2.0 * (omega * hy).cosh() - 2.0) / (hy * hy);
        if top == TopBoundary::Neumann {
            q = q.max(2.0 * d * ((omega * hy).exp() - 1.0) * (-omega * height).exp() / (hy * hy));
        }
        let ratio = |s: f64| params.f.eval(s) / s;
        let mut hi = 1.0;
        let mut tries = 0;
        while ratio(hi) > -q {
            hi *= 2.0;
            tries += 1;
            if tries > 200 {
                return Err(Error::Domain(
                    "field reaction does not decay fast enough for an envelope".into(),
                ));
            }
        }
        let mut lo = hi / 2.0;
        if ratio(lo) <= -q {
            lo = 1.0;
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if ratio(mid) <= -q {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mut k = (hi / c).max(1.0 / c).max(k_min);
        if params.g.is_some() {
            k = k.max(1.0 / umin);
        }
        Ok(Envelope {
            k,
            c,
            omega,
            lambda0,
            road_profile: road.u,
            hy,
        })
    }

    pub fn road(&self, period_index: usize) -> f64 {
        self.k * self.road_profile[period_index % self.road_profile.len()]
    }

    pub fn field(&self, y: f64) -> f64 {
        self.k * self.c * (1.0 + (-self.omega * y).exp())
    }

    /// Smallest `K` such that the envelope dominates `(u, v)` on a lattice
    /// whose node `i` sits at period index `(i + offset) mod n`.
    pub fn dominating_k(&self, u: &[f64], v: &[f64], offset: usize) -> f64 {
        let nx = u.len();
        let mut k: f64 = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            k = k.max(ui / self.road_profile[(i + offset) % self.road_profile.len()]);
        }
        for (j, row) in v.chunks(nx).enumerate() {
            let e = self.c * (1.0 + (-self.omega * j as f64 * self.hy).exp());
            for &w in row {
                k = k.max(w / e);
            }
        }
        k
    }

    /// Largest `state - envelope` over all nodes.
    pub fn excess(&self, u: &[f64], v: &[f64], offset: usize) -> f64 {
        let nx = u.len();
        let mut worst = f64::NEG_INFINITY;
        for (i, &ui) in u.iter().enumerate() {
            worst = worst.max(ui - self.road(i + offset));
        }
        for (j, row) in v.chunks(nx).enumerate() {
            let e = self.field(j as f64 * self.hy);
            for &w in row {
                worst = worst.max(w - e);
            }
        }
        worst
    }
}

/// Initial data of a Cauchy run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    /// `height * cos^2` bump of half-width `radius` centred at `(center, 0)`,
    /// on the road and in the field.
    Compact { center: f64, radius: f64, height: f64 },
    /// `m * min(e^{alpha x}, 1)` on the road and in the field.
    Exponential {
        alpha: f64,
        #[serde(default = "default_m")]
        m: f64,
    },
}

fn default_m() -> f64 {
    0.5
}

impl InitialData {
    /// Samples the data on a strip.
    pub fn sample(&self, grid: &StripGrid) -> SimulationState {
        let nx = grid.nx;
        let mut u = vec![0.0; nx];
        let mut v = vec![0.0; nx * grid.rows()];
        match *self {
            InitialData::Compact { center, radius, height } => {
                let bump = |s: f64| {
                    if s.abs() < radius {
                        (std::f64::consts::FRAC_PI_2 * s / radius).cos().powi(2)
                    } else {
                        0.0
                    }
                };
                for i in 0..nx {
                    let bx = bump(grid.x(i) - center);
                    u[i] = height * bx;
                    for j in 0..grid.rows() {
                        v[grid.index(i, j)] = height * bx * bump(grid.y(j));
                    }
                }
            }
            InitialData::Exponential { alpha, m } => {
                for i in 0..nx {
                    let w = m * (alpha * grid.x(i)).exp().min(1.0);
                    u[i] = w;
                    for j in 0..grid.rows() {
                        v[grid.index(i, j)] = w;
                    }
                }
            }
        }
        if grid.top == TopBoundary::Dirichlet {
            v[grid.ny * nx..].iter_mut().for_each(|w| *w = 0.0);
        }
        SimulationState::new(u, v)
    }
}

/// Signal whose level set is tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "signal", rename_all = "snake_case")]
pub enum Probe {
    Road,
    Field { row: usize },
}

impl Default for Probe {
    fn default() -> Self {
        Probe::Field { row: 1 }
    }
}

/// Which front is tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Left,
    Right,
}

/// Front tracking and recording settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceConfig {
    pub probe: Probe,
    /// Tracked levels as fractions of the stationary probe value; the first
    /// one gives the main trace.
    pub level_fractions: Vec<f64>,
    /// Stationary probe value; computed on a matching cell when absent.
    pub reference: Option<f64>,
    pub sample_interval: f64,
    /// Samples before this time are discarded; defaults to `5/f'(0)`.
    pub transient: Option<f64>,
    pub trailing_fraction: f64,
    pub edge_cells: usize,
    pub direction: Direction,
    pub snapshot_times: Vec<f64>,
    /// Time step; defaults to the admissible bound.
    pub dt: Option<f64>,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            probe: Probe::default(),
            level_fractions: vec![0.5],
            reference: None,
            sample_interval: 0.1,
            transient: None,
            trailing_fraction: 0.5,
            edge_cells: 10,
            direction: Direction::Left,
            snapshot_times: Vec::new(),
            dt: None,
        }
    }
}

/// Tracked level-set positions and the fitted speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontTrace {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub probe: Probe,
    pub level: f64,
    pub fitted_speed: f64,
    /// RMS residual of the linear fit.
    pub fit_residual: f64,
    pub fit_window: (f64, f64),
    /// Slope of the fit `x = a + s t + b ln t` on the same window, which
    /// absorbs the logarithmic delay of pulled fronts.
    pub log_corrected_speed: f64,
    /// Whether positions move monotonically outward after the transient.
    pub monotone_after_transient: bool,
}

/// Stored copy of the densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Result of [`evolve`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolveOutput {
    pub state: SimulationState,
    pub trace: FrontTrace,
    /// Traces for the remaining level fractions.
    pub extra_traces: Vec<FrontTrace>,
    pub grid: StripGrid,
    pub envelope: Envelope,
    /// Largest excess over the envelope seen at any step.
    pub envelope_excess: f64,
    /// Smallest value seen at any step.
    pub min_value: f64,
    pub snapshots: Vec<Snapshot>,
    pub reference: f64,
}

fn probe_signal(state: &SimulationState, grid: &StripGrid, probe: Probe) -> Vec<f64> {
    match probe {
        Probe::Road => state.u.clone(),
        Probe::Field { row } => state.v[row * grid.nx..(row + 1) * grid.nx].to_vec(),
    }
}

/// Outermost crossing of `level`, linearly interpolated; `Ok(None)` when the
/// signal stays below the level. Errors when the crossing is within
/// `edge_cells` of the window edge.
fn front_position(
    signal: &[f64],
    grid: &StripGrid,
    level: f64,
    direction: Direction,
    edge_cells: usize,
    t: f64,
) -> Result<Option<f64>> {
    let n = signal.len();
    let hx = grid.hx();
    let idx: Box<dyn Iterator<Item = usize>> = match direction {
        Direction::Left => Box::new(0..n),
        Direction::Right => Box::new((0..n).rev()),
    };
    let mut prev: Option<usize> = None;
    for i in idx {
        if signal[i] >= level {
            let from_edge = match direction {
                Direction::Left => i,
                Direction::Right => n - 1 - i,
            };
            if from_edge <= edge_cells {
                return Err(Error::WindowTooSmall { time: t });
            }
            let p = prev.expect("crossing away from the edge has a predecessor");
            let (a, b) = (signal[p], signal[i]);
            let w = (level - a) / (b - a);
            let xp = grid.x(p);
            let sign = if i > p { 1.0 } else { -1.0 };
            return Ok(Some(xp + sign * w * hx));
        }
        prev = Some(i);
    }
    Ok(None)
}

/// Least-squares fit of `x = a + s t + b ln t`; returns `s`.
fn log_corrected_fit(t: &[f64], x: &[f64]) -> f64 {
    if t.len() < 4 || t[0] <= 0.0 {
        return f64::NAN;
    }
    let cols = |k: usize, ti: f64| match k {
        0 => 1.0,
        1 => ti,
        _ => ti.ln(),
    };
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for (&ti, &xi) in t.iter().zip(x) {
        for r in 0..3 {
            b[r] += cols(r, ti) * xi;
            for c in 0..3 {
                a[r][c] += cols(r, ti) * cols(c, ti);
            }
        }
    }
    // Gaussian elimination with partial pivoting on the 3x3 normal equations.
    for k in 0..3 {
        let p = (k..3).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..3 {
            let m = a[i][k] / a[k][k];
            for c in k..3 {
                a[i][c] -= m * a[k][c];
            }
            b[i] -= m * b[k];
        }
    }
    let mut sol = [0.0; 3];
    for k in (0..3).rev() {
        let mut r = b[k];
        for c in k + 1..3 {
            r -= a[k][c] * sol[c];
        }
        sol[k] = r / a[k][k];
    }
    sol[1]
}

/// Least-squares line through `(t, x)`; returns `(slope, rms residual)`.
fn linear_fit(t: &[f64], x: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let xm = x.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut stx = 0.0;
    for (ti, xi) in t.iter().zip(x) {
        stt += (ti - tm) * (ti - tm);
        stx += (ti - tm) * (xi - xm);
    }
    let slope = stx / stt;
    let rss: f64 = t
        .iter()
        .zip(x)
        .map(|(ti, xi)| (xi - xm - slope * (ti - tm)).powi(2))
        .sum();
    (slope, (rss / n).sqrt())
}

fn finish_trace(
    times: Vec<f64>,
    positions: Vec<f64>,
    probe: Probe,
    level: f64,
    cfg: &TraceConfig,
    transient: f64,
    direction: Direction,
) -> FrontTrace {
    let kept: Vec<usize> = (0..times.len()).filter(|&k| times[k] >= transient).collect();
    let start = kept.len()
        - ((kept.len() as f64 * cfg.trailing_fraction).round() as usize)
            .max(2)
            .min(kept.len());
    let window = &kept[start..];
    let sign = match direction {
        Direction::Left => -1.0,
        Direction::Right => 1.0,
    };
    let (speed, residual, fit_window, log_speed) = if window.len() >= 2 {
        let t: Vec<f64> = window.iter().map(|&k| times[k]).collect();
        let x: Vec<f64> = window.iter().map(|&k| positions[k]).collect();
        let (slope, res) = linear_fit(&t, &x);
        let log_slope = log_corrected_fit(&t, &x);
        (sign * slope, res, (t[0], *t.last().unwrap()), sign * log_slope)
    } else {
        (f64::NAN, f64::NAN, (f64::NAN, f64::NAN), f64::NAN)
    };
    let outward = |a: f64, b: f64| match direction {
        Direction::Left => b <= a + 1e-12,
        Direction::Right => b >= a - 1e-12,
    };
    let monotone = kept.windows(2).all(|w| outward(positions[w[0]], positions[w[1]]));
    FrontTrace {
        times,
        positions,
        probe,
        level,
        fitted_speed: speed,
        fit_residual: residual,
        fit_window,
        log_corrected_speed: log_speed,
        monotone_after_transient: monotone,
    }
}

/// Stationary probe value on a strip-compatible cell: the minimum over one
/// period of the probed signal.
pub fn stationary_probe_value(stationary: &StationaryPair, probe: Probe) -> f64 {
    let nx = stationary.grid.nx;
    match probe {
        Probe::Road => stationary.u.iter().cloned().fold(f64::INFINITY, f64::min),
        Probe::Field { row } => stationary.v[row * nx..(row + 1) * nx]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min),
    }
}

/// Integrates from `initial` to `t_final`, tracking the front.
pub fn evolve(
    initial: &InitialData,
    params: &ModelParams,
    grid: &StripGrid,
    t_final: f64,
    cfg: &TraceConfig,
) -> Result<EvolveOutput> {
    let state = initial.sample(grid);
    evolve_from(state, params, grid, t_final, cfg)
}

/// [`evolve`] from an explicit initial state.
pub fn evolve_from(
    mut state: SimulationState,
    params: &ModelParams,
    grid: &StripGrid,
    t_final: f64,
    cfg: &TraceConfig,
) -> Result<EvolveOutput> {
    grid.validate()?;
    if !(t_final > 0.0) {
        return Err(Error::Domain("t_final must be positive".into()));
    }
    let cells = grid.cells_per_period();
    let offset = {
        let s = (grid.x_min / grid.period).round() as i64 * cells as i64;
        s.rem_euclid(cells as i64) as usize
    };
    let mut envelope = Envelope::build(params, cells, grid.hy(), grid.height, grid.top, 0.0)?;
    envelope.k = envelope.k.max(envelope.dominating_k(&state.u, &state.v, offset));

    let range = state.max_value().max(WORKING_RANGE);
    let bound = dt_max(params, grid.hy(), range);
    let dt_target = cfg.dt.unwrap_or(bound);
    let steps = (t_final / dt_target).ceil().max(1.0) as usize;
    let dt = t_final / steps as f64;
    let stepper = Stepper::strip(params, grid, dt, range)?;

    let reference = match cfg.reference {
        Some(r) => r,
        None => {
            let cell = CellGrid::new(grid.period, grid.height, cells, grid.ny)?;
            let st = stationary_state(params, &cell, grid.top, &StationaryOptions::default())?;
            stationary_probe_value(&st, cfg.probe)
        }
    };
    let levels: Vec<f64> = cfg.level_fractions.iter().map(|f| f * reference).collect();
    if levels.is_empty() {
        return Err(Error::Domain("at least one level fraction is required".into()));
    }
    let transient = cfg.transient.unwrap_or(5.0 / params.fprime0());
    let sample_every = ((cfg.sample_interval / dt).round() as usize).max(1);

    let mut times: Vec<Vec<f64>> = vec![Vec::new(); levels.len()];
    let mut positions: Vec<Vec<f64>> = vec![Vec::new(); levels.len()];
    let mut snapshots = Vec::new();
    let mut snapshot_queue: Vec<f64> = cfg.snapshot_times.clone();
    snapshot_queue.sort_by(|a, b| b.total_cmp(a));
    let mut excess = envelope.excess(&state.u, &state.v, offset);
    let mut min_value = state.min_value();

    let record = |state: &SimulationState, times: &mut Vec<Vec<f64>>, positions: &mut Vec<Vec<f64>>| -> Result<()> {
        let signal = probe_signal(state, grid, cfg.probe);
        for (k, &level) in levels.iter().enumerate() {
            if let Some(x) = front_position(&signal, grid, level, cfg.direction, cfg.edge_cells, state.t)? {
                times[k].push(state.t);
                positions[k].push(x);
            }
        }
        Ok(())
    };
    record(&state, &mut times, &mut positions)?;
    for n in 1..=steps {
        stepper.step(&mut state);
        excess = excess.max(envelope.excess(&state.u, &state.v, offset));
        min_value = min_value.min(state.min_value());
        if n % sample_every == 0 || n == steps {
            record(&state, &mut times, &mut positions)?;
        }
        while let Some(&ts) = snapshot_queue.last() {
            if state.t + 0.5 * dt >= ts {
                snapshots.push(Snapshot {
                    t: state.t,
                    u: state.u.clone(),
                    v: state.v.clone(),
                });
                snapshot_queue.pop();
            } else {
                break;
            }
        }
    }
    let mut traces: Vec<FrontTrace> = times
        .into_iter()
        .zip(positions)
        .zip(&levels)
        .map(|((t, x), &level)| finish_trace(t, x, cfg.probe, level, cfg, transient, cfg.direction))
        .collect();
    let trace = traces.remove(0);
    Ok(EvolveOutput {
        state,
        trace,
        extra_traces: traces,
        grid: *grid,
        envelope,
        envelope_excess: excess,
        min_value,
        snapshots,
        reference,
    })
}

/// Where a stationary run started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartSide {
    Below,
    Above,
}

/// Discrete stationary solution on one periodic cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationaryPair {
    pub u: Vec<f64>,
    /// Field on rows `0..=ny`, `x` fastest.
    pub v: Vec<f64>,
    pub grid: CellGrid,
    pub top: TopBoundary,
    /// Max-norm of the stationary equations at the returned state.
    pub residual: f64,
    pub converged_from: StartSide,
    /// Max-norm distance between the from-below and from-above limits.
    pub gap: f64,
    pub time_below: f64,
    pub time_above: f64,
    /// From-below run was nondecreasing at every node and step.
    pub monotone_below: bool,
    /// From-above run was nonincreasing at every node and step.
    pub monotone_above: bool,
    pub envelope: Envelope,
}

impl StationaryPair {
    pub fn v_at(&self, i: usize, j: usize) -> f64 {
        self.v[j * self.grid.nx + i]
    }
}

/// Settings of the stationary solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StationaryOptions {
    /// Stop when the time-derivative max-norm falls below this.
    pub tol: f64,
    pub t_max: f64,
    pub dt: Option<f64>,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions {
            tol: 1e-8,
            t_max: 2000.0,
            dt: None,
        }
    }
}

struct MonotoneRun {
    state: SimulationState,
    monotone: bool,
}

fn run_to_rest(
    stepper: &Stepper,
    mut state: SimulationState,
    side: StartSide,
    opts: &StationaryOptions,
) -> Result<MonotoneRun> {
    let mut monotone = true;
    let slack = 1e-13;
    loop {
        let prev = state.clone();
        stepper.step(&mut state);
        let mut rate: f64 = 0.0;
        for (a, b) in prev.u.iter().chain(&prev.v).zip(state.u.iter().chain(&state.v)) {
            let diff = b - a;
            rate = rate.max(diff.abs());
            let tol_ab = slack * (1.0 + a.abs());
            match side {
                StartSide::Below if diff < -tol_ab => monotone = false,
                StartSide::Above if diff > tol_ab => monotone = false,
                _ => {}
            }
        }
        let rate = rate / stepper.dt();
        if rate < opts.tol {
            return Ok(MonotoneRun { state, monotone });
        }
        if state.t > opts.t_max {
            return Err(Error::StationaryStalled { time: state.t, rate });
        }
    }
}

/// Residual of the discrete stationary equations.
pub fn stationary_residual(params: &ModelParams, grid: &CellGrid, top: TopBoundary, u: &[f64], v: &[f64]) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx(), grid.hy());
    let (big_d, d) = (params.road_diffusion, params.field_diffusion);
    let mut worst: f64 = 0.0;
    for i in 0..nx {
        let (ip, im) = ((i + 1) % nx, (i + nx - 1) % nx);
        let x = grid.x(i);
        let (mu, nu) = (params.mu.eval(x), params.nu.eval(x));
        let exchange = nu * v[i] - mu * u[i];
        let r = big_d * (u[ip] - 2.0 * u[i] + u[im]) / (hx * hx) + exchange + params.road_reaction(u[i]);
        worst = worst.max(r.abs());
        for j in 0..=ny {
            if top == TopBoundary::Dirichlet && j == ny {
                continue;
            }
            let k = j * nx + i;
            let lap_x = (v[j * nx + ip] - 2.0 * v[k] + v[j * nx + im]) / (hx * hx);
            let lap_y = if j == 0 {
                2.0 * (v[k + nx] - v[k]) / (hy * hy)
            } else if j == ny {
                2.0 * (v[k - nx] - v[k]) / (hy * hy)
            } else {
                (v[k + nx] - 2.0 * v[k] + v[k - nx]) / (hy * hy)
            };
            let mut r = d * (lap_x + lap_y) + params.f.eval(v[k]);
            if j == 0 {
                r -= 2.0 / hy * exchange;
            }
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Small multiple of the principal eigenfunction of the linearization at
/// zero on the cell with a Dirichlet top; a discrete subsolution of the
/// stationary problem.
fn subsolution(params: &ModelParams, grid: &CellGrid) -> Result<SimulationState> {
    let pair = principal_eigen_truncated(params, 0.0, grid, 1e-10)?;
    if pair.lambda >= 0.0 {
        return Err(Error::Domain(format!(
            "cell height {} too small: Lambda_R(0) = {} is not negative",
            grid.height, pair.lambda
        )));
    }
    let lam = pair.lambda;
    let fp = params.fprime0();
    let gp = params.gprime0();
    let vmax = pair.v.iter().cloned().fold(0.0, f64::max);
    let mut eps = 1.0 / vmax.max(1.0);
    for _ in 0..200 {
        let ok_field = pair
            .v
            .iter()
            .filter(|&&w| w > 0.0)
            .all(|&w| params.f.eval(eps * w) / (eps * w) >= fp + lam);
        let ok_road = params.g.is_none()
            || pair
                .u
                .iter()
                .all(|&w| params.road_reaction(eps * w) / (eps * w) >= gp + lam);
        if ok_field && ok_road {
            break;
        }
        eps *= 0.5;
    }
    Ok(SimulationState::new(
        pair.u.iter().map(|w| eps * w).collect(),
        pair.v.iter().map(|w| eps * w).collect(),
    ))
}

/// Unique positive stationary solution on the periodic cell `grid` (rows
/// `0..=ny`, height `Y`), reached monotonically from below and from above.
pub fn stationary_state(
    params: &ModelParams,
    grid: &CellGrid,
    top: TopBoundary,
    opts: &StationaryOptions,
) -> Result<StationaryPair> {
    let hy = grid.hy();
    let below = subsolution(params, grid)?;
    let envelope = Envelope::build(params, grid.nx, hy, grid.height, top, 0.0)?;
    let (nx, rows) = (grid.nx, grid.ny + 1);
    let mut above = SimulationState::new(
        (0..nx).map(|i| envelope.road(i)).collect(),
        (0..rows * nx).map(|k| envelope.field((k / nx) as f64 * hy)).collect(),
    );
    if top == TopBoundary::Dirichlet {
        above.v[grid.ny * nx..].iter_mut().for_each(|w| *w = 0.0);
    }

    let dt_for = |range: f64| {
        let b = dt_max(params, hy, range);
        opts.dt.map_or(b, |dt| dt.min(b))
    };
    let dt_below = dt_for(WORKING_RANGE);
    let dt_above = dt_for(above.max_value());
    let low = run_to_rest(
        &Stepper::cell(params, grid, top, dt_below, WORKING_RANGE)?,
        below,
        StartSide::Below,
        opts,
    )?;
    let high = run_to_rest(
        &Stepper::cell(params, grid, top, dt_above, above.max_value())?,
        above,
        StartSide::Above,
        opts,
    )?;

    let gap = low
        .state
        .u
        .iter()
        .chain(&low.state.v)
        .zip(high.state.u.iter().chain(&high.state.v))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let limit = 10.0 * opts.tol;
    if gap > limit {
        return Err(Error::NonUnique { gap, limit });
    }
    let residual = stationary_residual(params, grid, top, &low.state.u, &low.state.v);
    Ok(StationaryPair {
        residual,
        grid: *grid,
        top,
        converged_from: StartSide::Below,
        gap,
        time_below: low.state.t,
        time_above: high.state.t,
        monotone_below: low.monotone,
        monotone_above: high.monotone,
        envelope,
        u: low.state.u,
        v: low.state.v,
    })
}

/// Deviation of a run from the stationary state on the inner region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerReport {
    pub applicable: bool,
    pub note: String,
    pub times: Vec<f64>,
    /// `max |u - U| + max |v - V|` over `-c t <= x <= 0`, `0 <= y <= y_max`.
    pub deviations: Vec<f64>,
    pub decreasing: bool,
}

/// Compares the recorded snapshots of a run with the tiled stationary state on
/// `{-c_test t <= x <= 0, 0 <= y <= y_max}` (mirrored for right fronts).
pub fn inner_spreading_check(
    run: &EvolveOutput,
    stationary: &StationaryPair,
    c_test: f64,
    y_max: f64,
) -> Result<InnerReport> {
    let grid = &run.grid;
    if !(c_test < run.trace.fitted_speed) {
        return Ok(InnerReport {
            applicable: false,
            note: format!(
                "outside inner region: c_test = {c_test} is not below the fitted speed {}",
                run.trace.fitted_speed
            ),
            times: vec![],
            deviations: vec![],
            decreasing: false,
        });
    }
    let cells = grid.cells_per_period();
    if stationary.grid.nx != cells || stationary.grid.ny != grid.ny || (stationary.grid.hy() - grid.hy()).abs() > 1e-12
    {
        return Err(Error::InvalidGrid(
            "stationary cell does not match the strip lattice".into(),
        ));
    }
    let offset = ((grid.x_min / grid.period).round() as i64 * cells as i64).rem_euclid(cells as i64) as usize;
    let jmax = ((y_max / grid.hy()).floor() as usize).min(grid.ny);
    let right = run.trace.fitted_speed.is_finite() && matches!(run_direction(run), Direction::Right);
    let mut times = Vec::new();
    let mut deviations = Vec::new();
    for snap in &run.snapshots {
        let reach = c_test * snap.t;
        let mut du: f64 = 0.0;
        let mut dv: f64 = 0.0;
        for i in 0..grid.nx {
            let x = grid.x(i);
            let inside = if right {
                x >= 0.0 && x <= reach
            } else {
                x <= 0.0 && x >= -reach
            };
            if !inside {
                continue;
            }
            let ic = (i + offset) % cells;
            du = du.max((snap.u[i] - stationary.u[ic]).abs());
            for j in 0..=jmax {
                dv = dv.max((snap.v[grid.index(i, j)] - stationary.v_at(ic, j)).abs());
            }
        }
        times.push(snap.t);
        deviations.push(du + dv);
    }
    let decreasing = deviations.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Ok(InnerReport {
        applicable: true,
        note: String::new(),
        times,
        deviations,
        decreasing,
    })
}

fn run_direction(run: &EvolveOutput) -> Direction {
    match (run.trace.positions.first(), run.trace.positions.last()) {
        (Some(a), Some(b)) if b > a => Direction::Right,
        _ => Direction::Left,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_model, ModelSpec};

    fn baseline() -> ModelParams {
        make_model(&ModelSpec::constant(1.0, 1.0, 1.0, 1.0, 1.0)).unwrap()
    }

    #[test]
    fn step_bound_is_enforced() {
        let m = baseline();
        let grid = StripGrid::new(1.0, 2, 2, 8, 4.0, 40, TopBoundary::Neumann).unwrap();
        let bound = dt_max(&m, grid.hy(), 1.0);
        assert!((bound - 0.9 / 23.0).abs() < 1e-15);
        assert!(matches!(
            Stepper::strip(&m, &grid, 2.0 * bound, 1.0),
            Err(Error::TimeStep { .. })
        ));
    }

    #[test]
    fn balanced_constant_state_is_fixed() {
        let m = baseline();
        let grid = StripGrid::new(1.0, 2, 2, 8, 4.0, 20, TopBoundary::Neumann).unwrap();
        let stepper = Stepper::strip(&m, &grid, 0.02, 1.0).unwrap();
        let mut s = SimulationState::new(vec![1.0; grid.nx], vec![1.0; grid.nx * grid.rows()]);
        stepper.step(&mut s);
        assert!(s.u.iter().chain(&s.v).all(|w| (w - 1.0).abs() < 1e-12));
    }

    #[test]
    fn front_position_interpolates() {
        let grid = StripGrid::new(1.0, 4, 4, 4, 1.0, 4, TopBoundary::Neumann).unwrap();
        let signal: Vec<f64> = (0..grid.nx).map(|i| if i < 20 { 0.0 } else { 1.0 }).collect();
        let x = front_position(&signal, &grid, 0.5, Direction::Left, 2, 0.0)
            .unwrap()
            .unwrap();
        assert!((x - (grid.x(19) + 0.5 * grid.hx())).abs() < 1e-12);
        let edge: Vec<f64> = vec![1.0; grid.nx];
        assert!(matches!(
            front_position(&edge, &grid, 0.5, Direction::Left, 2, 3.0),
            Err(Error::WindowTooSmall { time }) if time == 3.0
        ));
    }

    #[test]
    fn linear_fit_recovers_slope() {
        let t: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let x: Vec<f64> = t.iter().map(|t| 3.0 - 2.0 * t).collect();
        let (s, r) = linear_fit(&t, &x);
        assert!((s + 2.0).abs() < 1e-12 && r < 1e-12);
        let t: Vec<f64> = (1..40).map(|k| k as f64).collect();
        let x: Vec<f64> = t.iter().map(|t| 1.0 - 2.0 * t + 1.5 * t.ln()).collect();
        assert!((log_corrected_fit(&t, &x) + 2.0).abs() < 1e-9);
    }
}
