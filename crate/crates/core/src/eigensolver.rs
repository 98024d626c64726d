//! Principal eigenvalues of the linearized road-field problem.
//!
//! For a decay rate `alpha` the exponential ansatz `e^{alpha x}(U, V)` turns the
//! linearization at zero into a cooperative elliptic system on the periodic
//! cell. Truncating the field at height `R` with a Dirichlet top gives a
//! principal eigenvalue `Lambda_R(alpha)` with positive eigenfunctions;
//! `-Lambda_R` increases with `R` and its limit defines `Lambda(alpha)`.
//!
//! The discrete problem is solved by inverse iteration on the shifted M-matrix
//! `A + M I` with `M = M_alpha + 1`, started from the all-ones vector. The
//! Collatz-Wielandt quotients `min_i (Ax)_i / x_i <= Lambda <= max_i (Ax)_i / x_i`
//! bound the eigenvalue at every step; the lower bound is reused as a new shift,
//! which keeps the shifted matrix an M-matrix while accelerating convergence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::grids::{build_cell_operator, build_road_operator, x_average, zigzag_positions, CellGrid};
use crate::model::{shift_constant_m, ModelParams};

/// Default eigen-solver tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Principal eigenpair of a truncated cell problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda: f64,
    /// Road eigenfunction, `max U = 1`.
    pub u: Vec<f64>,
    /// Field eigenfunction on all `ny + 1` rows, `x` fastest; the top row is zero.
    pub v: Vec<f64>,
    pub alpha: f64,
    pub height: f64,
    pub grid: CellGrid,
    /// `|A x - lambda x|_inf / ((1 + |lambda|) |x|_inf)`.
    pub residual: f64,
    pub iterations: usize,
    pub factorizations: usize,
    /// Collatz-Wielandt enclosure of the discrete eigenvalue.
    pub bracket: (f64, f64),
}

impl EigenPair {
    pub fn minus_lambda(&self) -> f64 {
        -self.lambda
    }

    /// Field value at node `(i, j)`.
    pub fn v_at(&self, i: usize, j: usize) -> f64 {
        self.v[j * self.grid.nx + i]
    }
}

/// Result of a bare power iteration.
#[derive(Debug, Clone)]
pub struct PowerResult {
    pub lambda: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub factorizations: usize,
    pub bracket: (f64, f64),
}

/// Iteration limits.
#[derive(Debug, Clone, Copy)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            tol: DEFAULT_TOL,
            max_iterations: 2000,
        }
    }
}

/// Smallest real eigenvalue of an irreducible Z-matrix `a` and its positive
/// eigenvector, by inverse iteration on `a + shift I`.
///
/// `shift` must make `a + shift I` a nonsingular M-matrix. The shift is moved
/// toward the eigenvalue using the Collatz-Wielandt lower bound, so it never
/// crosses it. The requested tolerance is floored at `64 eps |A|_inf / (1 + |Lambda|)`,
/// the level rounding allows for stiff operators.
pub fn principal_pair(a: &BandedMatrix, shift: f64, start: &[f64], opts: PowerOptions) -> Result<PowerResult> {
    let n = a.dim();
    assert_eq!(start.len(), n);
    if start.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Domain("start vector must be strictly positive".into()));
    }
    let shifted = |sigma: f64| {
        let mut m = a.clone();
        m.shift_diagonal(-sigma);
        m.factor()
    };
    // Work with sigma = -shift so that the iteration matrix is (A - sigma I)^{-1}.
    let mut sigma = -shift;
    let mut safe_sigma = sigma;
    let mut lu = shifted(sigma)?;
    let mut factorizations = 1;

    let mut x: Vec<f64> = start.to_vec();
    let scale = x.iter().cloned().fold(0.0, f64::max);
    x.iter_mut().for_each(|xi| *xi /= scale);
    let mut ax = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut last = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    let norm = (0..n)
        .map(|i| a.row(i).map(|(_, v)| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);

    for it in 1..=opts.max_iterations {
        y.copy_from_slice(&x);
        lu.solve_in_place(&mut y);
        if let Some((index, &value)) = y.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v.is_finite())) {
            if sigma > safe_sigma {
                // Rounding pushed the shift too close; fall back and retry.
                sigma = 0.5 * (sigma + safe_sigma);
                lu = shifted(sigma)?;
                factorizations += 1;
                continue;
            }
            return Err(Error::Positivity { index, value });
        }
        let ymax = y.iter().cloned().fold(0.0, f64::max);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ymax;
        }
        if let Some((index, &value)) = x.iter().enumerate().find(|(_, &v)| !(v >= f64::MIN_POSITIVE)) {
            return Err(Error::Positivity { index, value });
        }
        a.mul_vec(&x, &mut ax);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let q = ax[i] / x[i];
            lo = lo.min(q);
            hi = hi.max(q);
            num += x[i] * ax[i];
            den += x[i] * x[i];
        }
        let lambda = num / den;
        let residual = ax
            .iter()
            .zip(&x)
            .map(|(p, q)| (p - lambda * q).abs())
            .fold(0.0, f64::max)
            / (1.0 + lambda.abs());
        last = (lambda, residual, lo, hi);
        let scale = 1.0 + lambda.abs();
        let tol = opts.tol.max(64.0 * f64::EPSILON * norm / scale);
        if hi - lo <= tol * scale && residual <= tol {
            return Ok(PowerResult {
                lambda,
                vector: x,
                residual,
                iterations: it,
                factorizations,
                bracket: (lo, hi),
            });
        }
        let candidate = lo - 0.05 * (hi - lo) - 1e-13 * scale;
        if candidate > sigma && lambda - candidate < 0.5 * (lambda - sigma) {
            match shifted(candidate) {
                Ok(f) => {
                    safe_sigma = sigma;
                    sigma = candidate;
                    lu = f;
                    factorizations += 1;
                }
                Err(Error::Pivot { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        residual: last.1,
        bracket: last.3 - last.2,
    })
}

/// Principal eigenpair of the 1D road operator with its eigenfunction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoadEigen {
    pub lambda: f64,
    /// Positive eigenfunction in natural node order, `max = 1`.
    pub u: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Minimum road resolution for the `lambda_alpha` bound.
pub const ROAD_MIN_NODES: usize = 512;

/// `lambda_alpha`: principal eigenvalue of `-D d2 - 2 alpha D d + mu` on the torus,
/// on its own grid of `nx >= 512` nodes.
pub fn road_eigenvalue_lambda_alpha(params: &ModelParams, alpha: f64, nx: usize) -> Result<RoadEigen> {
    if nx < ROAD_MIN_NODES {
        return Err(Error::InvalidGrid(format!(
            "road grid needs at least {ROAD_MIN_NODES} nodes, got {nx}"
        )));
    }
    road_principal_pair(params, alpha, nx)
}

/// Road principal pair on any grid of at least 3 nodes.
pub fn road_principal_pair(params: &ModelParams, alpha: f64, nx: usize) -> Result<RoadEigen> {
    let op = build_road_operator(params, alpha, nx)?;
    let shift = 1.0;
    let res = principal_pair(&op.matrix, shift, &vec![1.0; nx], PowerOptions::default())?;
    let pos = zigzag_positions(nx);
    let mut u: Vec<f64> = (0..nx).map(|i| res.vector[pos[i]]).collect();
    let m = u.iter().cloned().fold(0.0, f64::max);
    u.iter_mut().for_each(|x| *x /= m);
    Ok(RoadEigen {
        lambda: res.lambda,
        u,
        residual: res.residual,
        iterations: res.iterations,
    })
}

/// `Lambda_R(alpha)` on the given cell, starting from the all-ones vector.
pub fn principal_eigen_truncated(params: &ModelParams, alpha: f64, grid: &CellGrid, tol: f64) -> Result<EigenPair> {
    principal_eigen_truncated_from(params, alpha, grid, tol, None)
}

/// As [`principal_eigen_truncated`] with an optional positive start vector
/// (stacked road then field unknowns).
pub fn principal_eigen_truncated_from(
    params: &ModelParams,
    alpha: f64,
    grid: &CellGrid,
    tol: f64,
    start: Option<&[f64]>,
) -> Result<EigenPair> {
    let op = build_cell_operator(grid, params, alpha)?;
    let m = shift_constant_m(alpha, params) + 1.0;
    let ones;
    let start = match start {
        Some(s) => s,
        None => {
            ones = vec![1.0; grid.unknowns()];
            &ones
        }
    };
    let opts = PowerOptions {
        tol,
        ..PowerOptions::default()
    };
    let res = principal_pair(&op.matrix, m, start, opts)?;
    let nx = grid.nx;
    let umax = res.vector[..nx].iter().cloned().fold(0.0, f64::max);
    let u: Vec<f64> = res.vector[..nx].iter().map(|x| x / umax).collect();
    let mut v: Vec<f64> = res.vector[nx..].iter().map(|x| x / umax).collect();
    v.resize(v.len() + nx, 0.0);
    for (index, &value) in u.iter().chain(&v[..grid.field_len()]).enumerate() {
        if !(value >= f64::MIN_POSITIVE) {
            return Err(Error::Positivity { index, value });
        }
    }
    Ok(EigenPair {
        lambda: res.lambda,
        u,
        v,
        alpha,
        height: grid.height,
        grid: *grid,
        residual: res.residual,
        iterations: res.iterations,
        factorizations: res.factorizations,
        bracket: res.bracket,
    })
}

/// Robin mismatch of an `x`-independent trial pair, as a function of `x = -Lambda`.
fn oracle_mismatch(big_d: f64, d: f64, mu: f64, nu: f64, fp: f64, alpha: f64, r: f64, x: f64) -> f64 {
    let w2 = (d * alpha * alpha + fp - x) / d;
    let h = if w2 > 0.0 {
        let w = w2.sqrt();
        w / (w * r).tan()
    } else if w2 < 0.0 {
        let k = (-w2).sqrt();
        k / (k * r).tanh()
    } else {
        1.0 / r
    };
    d * h + nu - mu * nu / (mu - big_d * alpha * alpha + x)
}

/// `Lambda_R(alpha)` for constant exchange rates from the scalar Robin equation.
///
/// With `omega^2 = (d alpha^2 + f'(0) + Lambda)/d` the field profile is
/// `sin(omega (R - y))` (or its hyperbolic counterpart when `omega^2 < 0`), the
/// road value is `nu V(0)/(mu - D alpha^2 - Lambda)`, and the Robin condition
/// leaves one equation in `Lambda`, increasing in `-Lambda` on the admissible
/// range, solved by bisection.
#[allow(clippy::too_many_arguments)]
pub fn constant_coefficient_oracle(
    road_diffusion: f64,
    field_diffusion: f64,
    mu: f64,
    nu: f64,
    fprime0: f64,
    alpha: f64,
    height: f64,
) -> Result<f64> {
    let (big_d, d, fp, r) = (road_diffusion, field_diffusion, fprime0, height);
    if !(mu > 0.0 && nu > 0.0 && d > 0.0 && big_d > 0.0 && r > 0.0) {
        return Err(Error::Domain("oracle needs positive D, d, mu, nu, R".into()));
    }
    let g = |x: f64| oracle_mismatch(big_d, d, mu, nu, fp, alpha, r, x);
    let x_field = d * alpha * alpha + fp - d * PI * PI / (r * r);
    let x_road = big_d * alpha * alpha - mu;
    let x_low = x_field.max(x_road);
    let x_flat = d * alpha * alpha + fp;
    let (mut lo, mut hi) = if x_flat > x_low && g(x_flat) > 0.0 {
        (x_low, x_flat)
    } else {
        let lo = x_low.max(x_flat);
        let mut step = 1.0 + lo.abs();
        let mut hi = lo + step;
        while g(hi) <= 0.0 {
            step *= 2.0;
            hi = lo + step;
            if step > 1e12 {
                return Err(Error::OracleBracket {
                    lo,
                    hi,
                    lo_value: g(lo),
                    hi_value: g(hi),
                });
            }
        }
        (lo, hi)
    };
    let (glo, ghi) = (g(lo + 1e-15 * (1.0 + lo.abs())), g(hi));
    if !(ghi > 0.0) || glo > 0.0 {
        return Err(Error::OracleBracket {
            lo,
            hi,
            lo_value: glo,
            hi_value: ghi,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(-0.5 * (lo + hi))
}

/// Settings of the `R`-sequence used for the whole-field limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WholeFieldOptions {
    pub nx: usize,
    pub hy: f64,
    pub r0: f64,
    pub r_max: f64,
    pub tol_r: f64,
    pub tol: f64,
}

impl Default for WholeFieldOptions {
    fn default() -> Self {
        WholeFieldOptions {
            nx: 16,
            hy: 0.05,
            r0: 10.0,
            r_max: 320.0,
            tol_r: 1e-5,
            tol: DEFAULT_TOL,
        }
    }
}

impl WholeFieldOptions {
    /// Cheaper defaults for constant exchange rates, whose eigenfunctions do not
    /// depend on `x`.
    pub fn for_params(params: &ModelParams) -> Self {
        let mut o = Self::default();
        if params.has_constant_exchange() {
            o.nx = 8;
        }
        o
    }
}

/// One level of the `R`-sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RLevel {
    pub height: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Whole-field eigenvalue with the truncation history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WholeFieldEigen {
    pub alpha: f64,
    /// `Lambda_R` at the largest computed `R`; `Lambda <= lambda_last`.
    pub lambda_last: f64,
    /// Estimated remaining decrease `Lambda_last - Lambda` from a geometric tail.
    pub tail: f64,
    pub levels: Vec<RLevel>,
    pub converged: bool,
    pub grid: CellGrid,
}

impl WholeFieldEigen {
    /// Best estimate of `Lambda(alpha)`.
    pub fn lambda(&self) -> f64 {
        self.lambda_last - self.tail
    }

    /// `-Lambda(alpha)`.
    pub fn minus_lambda(&self) -> f64 {
        -self.lambda()
    }

    /// `[Lambda_last - tail, Lambda_last]`; the upper end is rigorous by
    /// monotonicity in `R`, the lower end is the tail estimate.
    pub fn interval(&self) -> (f64, f64) {
        (self.lambda_last - self.tail, self.lambda_last)
    }
}

/// `Lambda(alpha)` as the limit of `Lambda_R` along `R = r0, 2 r0, 4 r0, ...`
/// with `hy` fixed. Stops when successive values differ by less than `tol_r`;
/// past `r_max` the best value is returned flagged unconverged.
pub fn whole_field_eigenvalue(params: &ModelParams, alpha: f64, opts: &WholeFieldOptions) -> Result<WholeFieldEigen> {
    if !(opts.r0 > 0.0 && opts.r_max >= opts.r0 && opts.hy > 0.0 && opts.tol_r > 0.0) {
        return Err(Error::Domain("invalid R-sequence settings".into()));
    }
    let mut levels: Vec<RLevel> = Vec::new();
    let mut r = opts.r0;
    let mut converged = false;
    let mut grid = CellGrid::with_spacing(params.period, r, opts.nx, opts.hy)?;
    while r <= opts.r_max * (1.0 + 1e-12) {
        grid = CellGrid::with_spacing(params.period, r, opts.nx, opts.hy)?;
        let pair = principal_eigen_truncated(params, alpha, &grid, opts.tol)?;
        levels.push(RLevel {
            height: r,
            lambda: pair.lambda,
            iterations: pair.iterations,
            residual: pair.residual,
        });
        if let [.., a, b] = levels.as_slice() {
            if (a.lambda - b.lambda).abs() < opts.tol_r {
                converged = true;
                break;
            }
        }
        r *= 2.0;
    }
    let tail = tail_estimate(&levels);
    Ok(WholeFieldEigen {
        alpha,
        lambda_last: levels.last().map(|l| l.lambda).unwrap_or(f64::NAN),
        tail,
        levels,
        converged,
        grid,
    })
}

/// Geometric tail `delta rho / (1 - rho)` of the last decrement, with the
/// observed contraction `rho` floored at 1/4 (the `R^-2` rate under doubling)
/// and capped at 0.9.
fn tail_estimate(levels: &[RLevel]) -> f64 {
    let n = levels.len();
    if n < 2 {
        return 0.0;
    }
    let delta = (levels[n - 2].lambda - levels[n - 1].lambda).max(0.0);
    let mut rho: f64 = 0.25;
    if n >= 3 {
        let prev = levels[n - 3].lambda - levels[n - 2].lambda;
        if prev > 0.0 {
            rho = rho.max(delta / prev);
        }
    }
    let rho = rho.min(0.9);
    delta * rho / (1.0 - rho)
}

/// Sampling mode of a dispersion curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CurveMode {
    Truncated { height: f64 },
    WholeField { r_max: f64, tol_r: f64 },
}

/// Sampled `alpha -> -Lambda(alpha)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispersionCurve {
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
    pub mode: CurveMode,
    /// Cell grid of each sample (the largest `R` in whole-field mode).
    pub grids: Vec<CellGrid>,
    pub residuals: Vec<f64>,
    pub iterations: Vec<usize>,
    /// Certified lower bounds on `-Lambda` (equal to `values` in truncated mode).
    pub lower: Vec<f64>,
}

/// Truncated dispersion curve on a fixed cell, samples solved in parallel.
pub fn dispersion_curve_truncated(
    params: &ModelParams,
    alphas: &[f64],
    grid: &CellGrid,
    tol: f64,
) -> Result<DispersionCurve> {
    check_increasing(alphas)?;
    let pairs: Vec<EigenPair> = alphas
        .par_iter()
        .map(|&a| principal_eigen_truncated(params, a, grid, tol))
        .collect::<Result<_>>()?;
    Ok(DispersionCurve {
        alphas: alphas.to_vec(),
        values: pairs.iter().map(|p| -p.lambda).collect(),
        mode: CurveMode::Truncated { height: grid.height },
        grids: vec![*grid; alphas.len()],
        residuals: pairs.iter().map(|p| p.residual).collect(),
        iterations: pairs.iter().map(|p| p.iterations).collect(),
        lower: pairs.iter().map(|p| -p.lambda).collect(),
    })
}

/// Whole-field dispersion curve, samples solved in parallel.
pub fn dispersion_curve_whole_field(
    params: &ModelParams,
    alphas: &[f64],
    opts: &WholeFieldOptions,
) -> Result<DispersionCurve> {
    check_increasing(alphas)?;
    let sols: Vec<WholeFieldEigen> = alphas
        .par_iter()
        .map(|&a| whole_field_eigenvalue(params, a, opts))
        .collect::<Result<_>>()?;
    Ok(DispersionCurve {
        alphas: alphas.to_vec(),
        values: sols.iter().map(|s| s.minus_lambda()).collect(),
        mode: CurveMode::WholeField {
            r_max: opts.r_max,
            tol_r: opts.tol_r,
        },
        grids: sols.iter().map(|s| s.grid).collect(),
        residuals: sols
            .iter()
            .map(|s| s.levels.iter().map(|l| l.residual).fold(0.0, f64::max))
            .collect(),
        iterations: sols
            .iter()
            .map(|s| s.levels.iter().map(|l| l.iterations).sum())
            .collect(),
        lower: sols.iter().map(|s| -s.lambda_last).collect(),
    })
}

fn check_increasing(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() || alphas.windows(2).any(|w| !(w[1] > w[0])) || alphas[0] < 0.0 {
        return Err(Error::Domain(
            "alpha grid must be nonnegative and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Outcome of the linear growth check on a field eigenfunction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub passes: bool,
    /// `max (V - (1 + nu1 y / d)) / (1 + nu1 y / d)` after normalization.
    pub max_excess: f64,
    /// Smallest `C` with `V <= C (1 + y)`.
    pub linear_constant: f64,
}

/// Checks `V(x, y) <= 1 + (nu1/d) y` after rescaling so that `max_x V(x, 0) = 1`.
pub fn eigenfunction_growth_check(pair: &EigenPair, params: &ModelParams) -> GrowthReport {
    growth_check_field(&pair.grid, &pair.v, params.nu1(), params.field_diffusion)
}

/// [`eigenfunction_growth_check`] on a raw field array with `ny + 1` rows.
pub fn growth_check_field(grid: &CellGrid, v: &[f64], nu1: f64, d: f64) -> GrowthReport {
    let nx = grid.nx;
    let base = v[..nx].iter().cloned().fold(0.0, f64::max);
    let mut max_excess = f64::NEG_INFINITY;
    let mut linear_constant: f64 = 0.0;
    for (j, row) in v.chunks(nx).enumerate() {
        let y = grid.y(j);
        let barrier = 1.0 + nu1 / d * y;
        for &value in row {
            let w = value / base;
            max_excess = max_excess.max((w - barrier) / barrier);
            linear_constant = linear_constant.max(w / (1.0 + y));
        }
    }
    GrowthReport {
        passes: max_excess <= 1e-8,
        max_excess,
        linear_constant,
    }
}

/// Both sides of the averaging identity `-d Phi'(0) = int (mu U - nu V0) = (D alpha^2 + g'(0) + Lambda) int U`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragingReport {
    /// `-d Phi'(0)` by the one-sided second-order difference.
    pub flux_from_profile: f64,
    /// `int (mu U - nu V(., 0))`.
    pub exchange: f64,
    /// `(D alpha^2 + g'(0) + Lambda) int U`.
    pub eigen_side: f64,
    /// `|flux_from_profile - eigen_side| / int (mu U + nu V0)`.
    pub residual: f64,
}

pub fn averaging_identity_check(pair: &EigenPair, params: &ModelParams) -> AveragingReport {
    let grid = &pair.grid;
    let (hx, hy) = (grid.hx(), grid.hy());
    let phi = x_average(grid, &pair.v);
    let dphi0 = (-3.0 * phi[0] + 4.0 * phi[1] - phi[2]) / (2.0 * hy);
    let flux = -params.field_diffusion * dphi0;
    let mut exchange = 0.0;
    let mut total = 0.0;
    let mut int_u = 0.0;
    for i in 0..grid.nx {
        let x = grid.x(i);
        let (mu, nu) = (params.mu.eval(x), params.nu.eval(x));
        let v0 = pair.v[i];
        exchange += hx * (mu * pair.u[i] - nu * v0);
        total += hx * (mu * pair.u[i] + nu * v0);
        int_u += hx * pair.u[i];
    }
    let a = pair.alpha;
    let eigen_side = (params.road_diffusion * a * a + params.gprime0() + pair.lambda) * int_u;
    AveragingReport {
        flux_from_profile: flux,
        exchange,
        eigen_side,
        residual: (flux - eigen_side).abs() / total,
    }
}

/// Relative L2 misfit of the `x`-average of `V` against `C sin(omega (R - y))`
/// with `omega^2 = (Lambda + d alpha^2 + f'(0))/d`; `None` when `omega^2 <= 0`.
pub fn sine_profile_misfit(pair: &EigenPair, params: &ModelParams) -> Option<f64> {
    let d = params.field_diffusion;
    let w2 = (pair.lambda + d * pair.alpha * pair.alpha + params.fprime0()) / d;
    if w2 <= 0.0 {
        return None;
    }
    let w = w2.sqrt();
    let grid = &pair.grid;
    let phi = x_average(grid, &pair.v);
    let s: Vec<f64> = (0..phi.len()).map(|j| (w * (grid.height - grid.y(j))).sin()).collect();
    let weight = |j: usize| if j == 0 || j + 1 == phi.len() { 0.5 } else { 1.0 };
    let (mut ps, mut ss, mut pp) = (0.0, 0.0, 0.0);
    for j in 0..phi.len() {
        ps += weight(j) * phi[j] * s[j];
        ss += weight(j) * s[j] * s[j];
        pp += weight(j) * phi[j] * phi[j];
    }
    let c = ps / ss;
    let mut err = 0.0;
    for j in 0..phi.len() {
        err += weight(j) * (phi[j] - c * s[j]).powi(2);
    }
    Some((err / pp).sqrt())
}

/// Largest violation of concavity of `Lambda` over all sample triples:
/// `max (t Lambda(a1) + (1 - t) Lambda(a2) - Lambda(t a1 + (1 - t) a2))`.
pub fn concavity_violation(alphas: &[f64], lambdas: &[f64]) -> f64 {
    let n = alphas.len();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        for k in i + 1..n {
            for j in k + 1..n {
                let t = (alphas[j] - alphas[k]) / (alphas[j] - alphas[i]);
                let chord = t * lambdas[i] + (1.0 - t) * lambdas[j];
                worst = worst.max(chord - lambdas[k]);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_model, ModelSpec};

    fn constant(big_d: f64) -> ModelParams {
        make_model(&ModelSpec::constant(big_d, 1.0, 1.0, 1.0, 1.0)).unwrap()
    }

    #[test]
    fn oracle_sits_in_the_truncated_bracket() {
        let lam = constant_coefficient_oracle(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0).unwrap();
        assert!(-lam < 2.0 && -lam > 2.0 - PI * PI / 100.0);
        assert!((-lam - 1.930_283_4).abs() < 1e-6);
    }

    #[test]
    fn oracle_monotone_branch_when_accelerated() {
        // D = 5, alpha = 1 lies past alpha(D) = 0.5.
        let lam = constant_coefficient_oracle(5.0, 1.0, 1.0, 1.0, 1.0, 1.0, 200.0).unwrap();
        assert!(-lam > 2.0 + 1e-3);
    }

    #[test]
    fn truncated_solve_matches_oracle() {
        let m = constant(1.0);
        let grid = CellGrid::with_spacing(1.0, 10.0, 8, 0.05).unwrap();
        let pair = principal_eigen_truncated(&m, 1.0, &grid, 1e-11).unwrap();
        let oracle = constant_coefficient_oracle(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0).unwrap();
        assert!((pair.lambda - oracle).abs() < 1e-4, "{} vs {}", pair.lambda, oracle);
        assert!(pair.u.iter().all(|&u| u > 0.0));
        assert!((pair.u.iter().cloned().fold(0.0, f64::max) - 1.0).abs() < 1e-15);
        assert!(pair.residual <= 1e-11);
    }

    #[test]
    fn road_eigenvalue_of_constant_rate() {
        let mut raw = ModelSpec::constant(2.0, 1.0, 0.5, 1.0, 1.0);
        raw.mu = "constant:0.5".into();
        let m = make_model(&raw).unwrap();
        for a in [0.0, 0.5, 1.0, 2.0] {
            let r = road_eigenvalue_lambda_alpha(&m, a, 512).unwrap();
            assert!((r.lambda - 0.5).abs() < 1e-9, "alpha {a}: {}", r.lambda);
        }
        assert!(road_eigenvalue_lambda_alpha(&m, 0.0, 64).is_err());
    }

    #[test]
    fn tail_uses_quarter_floor() {
        let lv = |l| RLevel {
            height: 1.0,
            lambda: l,
            iterations: 1,
            residual: 0.0,
        };
        let t = tail_estimate(&[lv(-1.0), lv(-1.3)]);
        assert!((t - 0.1).abs() < 1e-12);
    }

    #[test]
    fn concavity_violation_detects_convexity() {
        let a = [0.0, 1.0, 2.0];
        assert!(concavity_violation(&a, &[0.0, 1.0, 0.0]) < 0.0);
        assert!((concavity_violation(&a, &[0.0, -1.0, 0.0]) - 1.0).abs() < 1e-15);
    }
}
