//! Discrete geometry and finite-difference operators.
//!
//! Two geometries are used. The periodic cell `T x (0, R)` carries the linear
//! eigenproblem: the torus of length `L` sampled at `nx` nodes, `ny` cells in
//! `y` and a Dirichlet row at `y = R` that is eliminated from the unknowns. The
//! half-strip window carries the nonlinear simulation, with reflecting edges
//! and an optional Dirichlet top.
//!
//! Unknowns of the cell operator are stacked road first, then the field row by
//! row with `x` fastest: `U_i` sits at `i`, `V_{i,j}` at `nx + j*nx + i`. The
//! Robin condition at `y = 0` is folded in through a ghost row
//! `V_{i,-1} = V_{i,1} + (2 hy/d)(mu_i U_i - nu_i V_{i,0})`.

use serde::{Deserialize, Serialize};

use crate::banded::{BandedLu, BandedMatrix};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Periodic cell `T x [0, R]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    pub period: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
}

impl CellGrid {
    pub fn new(period: f64, height: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(Error::InvalidGrid(format!("need nx >= 8 and ny >= 8, got {nx} x {ny}")));
        }
        if !(period > 0.0 && height > 0.0 && period.is_finite() && height.is_finite()) {
            return Err(Error::InvalidGrid("period and height must be positive".into()));
        }
        Ok(CellGrid { period, height, nx, ny })
    }

    /// Grid of height `height` whose `y` spacing is as close as possible to `hy`.
    pub fn with_spacing(period: f64, height: f64, nx: usize, hy: f64) -> Result<Self> {
        let ny = (height / hy).round().max(1.0) as usize;
        Self::new(period, height, nx, ny)
    }

    pub fn hx(&self) -> f64 {
        self.period / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.height / self.ny as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy()
    }

    /// Number of field unknowns (rows `0..ny` of the lattice).
    pub fn field_len(&self) -> usize {
        self.nx * self.ny
    }

    /// Total number of unknowns of the cell operator.
    pub fn unknowns(&self) -> usize {
        self.nx + self.field_len()
    }

    #[inline]
    pub fn field_index(&self, i: usize, j: usize) -> usize {
        self.nx + j * self.nx + i
    }

    /// The same cell with both spacings halved.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.period, self.height, 2 * self.nx, 2 * self.ny)
    }
}

/// Which block structure an operator realizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OperatorKind {
    /// The coupled road/field/Robin operator `(L1, L2, E)` at decay rate `alpha`.
    Cell { alpha: f64 },
    /// The one-dimensional road operator `-D d2 - 2 alpha D d + mu`.
    Road { alpha: f64 },
}

/// An assembled banded operator and its metadata.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub matrix: BandedMatrix,
    pub kind: OperatorKind,
    pub grid: CellGrid,
}

impl DiscreteOperator {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.matrix.mul_vec(x, &mut y);
        y
    }

    /// True when every off-diagonal entry is nonpositive.
    pub fn is_cooperative(&self) -> bool {
        self.matrix.triplets().iter().all(|&(i, j, v)| i == j || v <= 0.0)
    }

    /// Factorization of `operator + shift * I`.
    pub fn factor_shifted(&self, shift: f64) -> Result<BandedLu> {
        let mut m = self.matrix.clone();
        m.shift_diagonal(shift);
        m.factor()
    }

    /// Coordinate-format dump, one `row col value` line per stored nonzero.
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::new();
        for (i, j, v) in self.matrix.triplets() {
            out.push_str(&format!("{i} {j} {v:.16e}\n"));
        }
        out
    }
}

fn check_alpha(alpha: f64, hx: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!(
            "alpha must be finite and nonnegative, got {alpha}"
        )));
    }
    if alpha * hx >= 1.0 {
        return Err(Error::DriftGuard {
            alpha,
            hx,
            product: alpha * hx,
        });
    }
    Ok(())
}

/// Assembles the coupled cell operator at decay rate `alpha`.
pub fn build_cell_operator(grid: &CellGrid, params: &ModelParams, alpha: f64) -> Result<DiscreteOperator> {
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx(), grid.hy());
    check_alpha(alpha, hx)?;
    if (grid.period - params.period).abs() > 1e-12 * params.period {
        return Err(Error::InvalidGrid(format!(
            "cell period {} differs from model period {}",
            grid.period, params.period
        )));
    }
    let big_d = params.road_diffusion;
    let d = params.field_diffusion;
    let fp = params.fprime0();
    let gp = params.gprime0();
    let mut a = BandedMatrix::zeros(grid.unknowns(), nx, nx);

    let road_off = |sign: f64| -big_d / (hx * hx) - sign * big_d * alpha / hx;
    let field_off = |sign: f64| -d / (hx * hx) - sign * d * alpha / hx;

    for i in 0..nx {
        let x = grid.x(i);
        let (mu, nu) = (params.mu.eval(x), params.nu.eval(x));
        let ip = (i + 1) % nx;
        let im = (i + nx - 1) % nx;

        // Road row.
        a.add(i, i, 2.0 * big_d / (hx * hx) - big_d * alpha * alpha + mu - gp);
        a.add(i, ip, road_off(1.0));
        a.add(i, im, road_off(-1.0));
        a.add(i, grid.field_index(i, 0), -nu);

        // Field rows.
        for j in 0..ny {
            let row = grid.field_index(i, j);
            a.add(
                row,
                row,
                2.0 * d / (hx * hx) + 2.0 * d / (hy * hy) - d * alpha * alpha - fp,
            );
            a.add(row, grid.field_index(ip, j), field_off(1.0));
            a.add(row, grid.field_index(im, j), field_off(-1.0));
            if j == 0 {
                a.add(row, grid.field_index(i, 1), -2.0 * d / (hy * hy));
                a.add(row, row, 2.0 * nu / hy);
                a.add(row, i, -2.0 * mu / hy);
            } else {
                a.add(row, grid.field_index(i, j - 1), -d / (hy * hy));
                if j + 1 < ny {
                    a.add(row, grid.field_index(i, j + 1), -d / (hy * hy));
                }
            }
        }
    }
    Ok(DiscreteOperator {
        matrix: a,
        kind: OperatorKind::Cell { alpha },
        grid: *grid,
    })
}

/// Storage positions of the periodic nodes in zig-zag order `0, n-1, 1, n-2, ...`,
/// which turns the periodic tridiagonal stencil into a band of half-width 2.
pub fn zigzag_positions(n: usize) -> Vec<usize> {
    let mut pos = vec![0; n];
    for p in 0..n {
        let node = if p % 2 == 0 { p / 2 } else { n - 1 - (p - 1) / 2 };
        pos[node] = p;
    }
    pos
}

/// Assembles `-D d2/dx2 - 2 alpha D d/dx + mu(x)` on `nx` torus nodes, stored in
/// zig-zag order (see [`zigzag_positions`]).
pub fn build_road_operator(params: &ModelParams, alpha: f64, nx: usize) -> Result<DiscreteOperator> {
    if nx < 3 {
        return Err(Error::InvalidGrid(format!("road grid needs nx >= 3, got {nx}")));
    }
    let grid = CellGrid {
        period: params.period,
        height: 1.0,
        nx,
        ny: 0,
    };
    let hx = grid.hx();
    check_alpha(alpha, hx)?;
    let big_d = params.road_diffusion;
    let pos = zigzag_positions(nx);
    let mut a = BandedMatrix::zeros(nx, 2, 2);
    for i in 0..nx {
        let ip = (i + 1) % nx;
        let im = (i + nx - 1) % nx;
        let mu = params.mu.eval(grid.x(i));
        a.add(pos[i], pos[i], 2.0 * big_d / (hx * hx) + mu);
        a.add(pos[i], pos[ip], -big_d / (hx * hx) - big_d * alpha / hx);
        a.add(pos[i], pos[im], -big_d / (hx * hx) + big_d * alpha / hx);
    }
    Ok(DiscreteOperator {
        matrix: a,
        kind: OperatorKind::Road { alpha },
        grid,
    })
}

/// Trapezoidal `x` integral of a cell field at every `y` node.
///
/// Accepts either the `nx * ny` unknown rows (the Dirichlet row is appended as
/// zero) or all `nx * (ny + 1)` lattice rows. Returns `ny + 1` values.
pub fn x_average(grid: &CellGrid, v: &[f64]) -> Vec<f64> {
    let nx = grid.nx;
    assert!(
        v.len() == nx * grid.ny || v.len() == nx * (grid.ny + 1),
        "field length {} does not match grid",
        v.len()
    );
    let hx = grid.hx();
    let mut phi: Vec<f64> = v.chunks(nx).map(|row| hx * row.iter().sum::<f64>()).collect();
    if phi.len() == grid.ny {
        phi.push(0.0);
    }
    phi
}

/// Boundary condition on the top edge of the strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TopBoundary {
    #[default]
    Neumann,
    Dirichlet,
}

/// Finite window `[x_min, x_max] x [0, Y]` of the half-plane.
///
/// Left and right edges are reflecting. `nx` counts nodes including both end
/// points and `ny` counts cells, so there are `ny + 1` rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripGrid {
    pub period: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub top: TopBoundary,
}

impl StripGrid {
    /// Window spanning `periods_left` periods to the left of the origin and
    /// `periods_right` to the right, with `cells_per_period` cells per period.
    pub fn new(
        period: f64,
        periods_left: usize,
        periods_right: usize,
        cells_per_period: usize,
        height: f64,
        ny: usize,
        top: TopBoundary,
    ) -> Result<Self> {
        let periods = periods_left + periods_right;
        if periods == 0 || cells_per_period == 0 {
            return Err(Error::InvalidGrid("empty strip window".into()));
        }
        let grid = StripGrid {
            period,
            x_min: -(periods_left as f64) * period,
            x_max: periods_right as f64 * period,
            height,
            nx: periods * cells_per_period + 1,
            ny,
            top,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Checks that the window tiles the period with whole cells.
    pub fn validate(&self) -> Result<()> {
        if !(self.height > 0.0 && self.x_max > self.x_min && self.period > 0.0) {
            return Err(Error::InvalidGrid("degenerate strip window".into()));
        }
        if self.nx < 3 || self.ny < 2 {
            return Err(Error::InvalidGrid(
                "strip needs at least 3 x nodes and 2 y cells".into(),
            ));
        }
        let periods = (self.x_max - self.x_min) / self.period;
        let whole = periods.round();
        if whole < 1.0 || (periods - whole).abs() > 1e-9 * periods.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "window width {} is not a whole number of periods {}",
                self.x_max - self.x_min,
                self.period
            )));
        }
        let start = self.x_min / self.period;
        if (start - start.round()).abs() > 1e-9 * start.abs().max(1.0) {
            return Err(Error::InvalidGrid("x_min must be a multiple of the period".into()));
        }
        let cells = (self.nx - 1) as f64 / whole;
        if (cells - cells.round()).abs() > 1e-9 {
            return Err(Error::InvalidGrid(format!(
                "{} cells do not divide evenly into {} periods",
                self.nx - 1,
                whole
            )));
        }
        Ok(())
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        self.height / self.ny as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy()
    }

    pub fn rows(&self) -> usize {
        self.ny + 1
    }

    pub fn cells_per_period(&self) -> usize {
        ((self.nx - 1) as f64 / ((self.x_max - self.x_min) / self.period)).round() as usize
    }

    /// Flat index of field node `(i, j)`, `x` fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Trapezoidal weight of road node `i`.
    pub fn road_weight(&self, i: usize) -> f64 {
        let h = self.hx();
        if i == 0 || i + 1 == self.nx {
            0.5 * h
        } else {
            h
        }
    }

    /// Trapezoidal weight of field row `j`.
    pub fn row_weight(&self, j: usize) -> f64 {
        let h = self.hy();
        if j == 0 || j == self.ny {
            0.5 * h
        } else {
            h
        }
    }

    /// Total mass `int u dx + int int v dx dy` by the trapezoidal rule.
    pub fn mass(&self, u: &[f64], v: &[f64]) -> f64 {
        let road: f64 = u.iter().enumerate().map(|(i, ui)| self.road_weight(i) * ui).sum();
        let mut field = 0.0;
        for j in 0..self.rows() {
            let mut row = 0.0;
            for i in 0..self.nx {
                row += self.road_weight(i) * v[self.index(i, j)];
            }
            field += self.row_weight(j) * row;
        }
        road + field
    }
}

/// Second-difference operator `c * delta2` on a line with reflecting ends,
/// optionally pinning the last node to zero.
#[derive(Debug, Clone)]
pub struct LineOperator {
    pub n: usize,
    pub h: f64,
    pub coefficient: f64,
    pub dirichlet_end: bool,
}

impl LineOperator {
    /// `y = c * delta2 x` with ghost-mirrored ends; a pinned end returns 0.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let s = self.coefficient / (self.h * self.h);
        y[0] = 2.0 * s * (x[1] - x[0]);
        for i in 1..n - 1 {
            y[i] = s * (x[i + 1] - 2.0 * x[i] + x[i - 1]);
        }
        y[n - 1] = if self.dirichlet_end {
            0.0
        } else {
            2.0 * s * (x[n - 2] - x[n - 1])
        };
    }

    /// Factorization of `I - dt * c * delta2`.
    pub fn implicit(&self, dt: f64) -> Result<BandedLu> {
        let n = self.n;
        let s = dt * self.coefficient / (self.h * self.h);
        let mut a = BandedMatrix::zeros(n, 1, 1);
        for i in 0..n {
            a.add(i, i, 1.0);
        }
        a.add(0, 0, 2.0 * s);
        a.add(0, 1, -2.0 * s);
        for i in 1..n - 1 {
            a.add(i, i, 2.0 * s);
            a.add(i, i - 1, -s);
            a.add(i, i + 1, -s);
        }
        if !self.dirichlet_end {
            a.add(n - 1, n - 1, 2.0 * s);
            a.add(n - 1, n - 2, -2.0 * s);
        }
        a.factor()
    }
}

/// Diffusion and exchange operators of the strip.
#[derive(Debug, Clone)]
pub struct StripOperators {
    pub grid: StripGrid,
    pub road: LineOperator,
    pub field_x: LineOperator,
    pub field_y: LineOperator,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
}

/// Assembles the strip diffusion lines and samples the exchange rates.
pub fn build_strip_operators(grid: &StripGrid, params: &ModelParams) -> Result<StripOperators> {
    grid.validate()?;
    if (grid.period - params.period).abs() > 1e-12 * params.period {
        return Err(Error::InvalidGrid("strip period differs from model period".into()));
    }
    let mu = (0..grid.nx).map(|i| params.mu.eval(grid.x(i))).collect();
    let nu = (0..grid.nx).map(|i| params.nu.eval(grid.x(i))).collect();
    Ok(StripOperators {
        grid: *grid,
        road: LineOperator {
            n: grid.nx,
            h: grid.hx(),
            coefficient: params.road_diffusion,
            dirichlet_end: false,
        },
        field_x: LineOperator {
            n: grid.nx,
            h: grid.hx(),
            coefficient: params.field_diffusion,
            dirichlet_end: false,
        },
        field_y: LineOperator {
            n: grid.rows(),
            h: grid.hy(),
            coefficient: params.field_diffusion,
            dirichlet_end: grid.top == TopBoundary::Dirichlet,
        },
        mu,
        nu,
    })
}

impl StripOperators {
    /// Exchange rates: the road gains `nu v0 - mu u`, the Robin row gains
    /// `mu u - nu v0` (to be scaled by `2/hy` on the bottom field row).
    pub fn exchange(&self, u: &[f64], v0: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let road: Vec<f64> = (0..self.grid.nx)
            .map(|i| self.nu[i] * v0[i] - self.mu[i] * u[i])
            .collect();
        let robin = road.iter().map(|r| -r).collect();
        (road, robin)
    }

    /// Diffusion terms `D u_xx` and `d (v_xx + v_yy)`; the bottom row uses the
    /// homogeneous part of the Robin ghost (exchange is added separately).
    pub fn diffusion(&self, u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let mut du = vec![0.0; g.nx];
        self.road.apply(u, &mut du);
        let mut dv = vec![0.0; v.len()];
        let mut line = vec![0.0; g.nx];
        for j in 0..g.rows() {
            let row = &v[j * g.nx..(j + 1) * g.nx];
            self.field_x.apply(row, &mut line);
            dv[j * g.nx..(j + 1) * g.nx].copy_from_slice(&line);
        }
        let mut col = vec![0.0; g.rows()];
        let mut out = vec![0.0; g.rows()];
        for i in 0..g.nx {
            for j in 0..g.rows() {
                col[j] = v[g.index(i, j)];
            }
            self.field_y.apply(&col, &mut out);
            for j in 0..g.rows() {
                dv[g.index(i, j)] += out[j];
            }
        }
        if g.top == TopBoundary::Dirichlet {
            for i in 0..g.nx {
                dv[g.index(i, g.ny)] = 0.0;
            }
        }
        (du, dv)
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
    fn constants_are_annihilated_at_alpha_zero() {
        let m = baseline();
        let grid = CellGrid::new(1.0, 4.0, 8, 16).unwrap();
        let op = build_cell_operator(&grid, &m, 0.0).unwrap();
        let y = op.apply(&vec![1.0; grid.unknowns()]);
        for i in 0..grid.nx {
            assert!(y[i].abs() < 1e-12, "road row {i}: {}", y[i]);
        }
        for j in 1..grid.ny - 1 {
            for i in 0..grid.nx {
                assert!((y[grid.field_index(i, j)] + 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn drift_guard_rejects_coarse_grid() {
        let m = baseline();
        let grid = CellGrid::new(1.0, 4.0, 8, 16).unwrap();
        assert!(matches!(
            build_cell_operator(&grid, &m, 8.0),
            Err(Error::DriftGuard { .. })
        ));
        assert!(build_cell_operator(&grid, &m, 7.9).is_ok());
    }

    #[test]
    fn operator_is_cooperative() {
        let mut raw = ModelSpec::constant(3.0, 1.0, 1.0, 1.0, 1.0);
        raw.mu = "cosine:1,1".into();
        let m = make_model(&raw).unwrap();
        let grid = CellGrid::new(1.0, 3.0, 16, 12).unwrap();
        for alpha in [0.0, 1.0, 5.0, 15.0] {
            assert!(build_cell_operator(&grid, &m, alpha).unwrap().is_cooperative());
        }
    }

    #[test]
    fn zigzag_is_a_permutation_with_narrow_band() {
        for n in [8, 9, 16, 33] {
            let pos = zigzag_positions(n);
            let mut seen = pos.clone();
            seen.sort();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
            for i in 0..n {
                let j = (i + 1) % n;
                assert!(pos[i].abs_diff(pos[j]) <= 2);
            }
        }
    }

    #[test]
    fn x_average_examples() {
        let grid = CellGrid::new(2.0, 5.0, 16, 10).unwrap();
        let ones = vec![1.0; grid.field_len()];
        let phi = x_average(&grid, &ones);
        assert_eq!(phi.len(), 11);
        assert!(phi[..10].iter().all(|p| (p - 2.0).abs() < 1e-14));
        assert_eq!(phi[10], 0.0);
        let mut mode = vec![0.0; grid.field_len()];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                mode[j * grid.nx + i] = (std::f64::consts::PI * grid.x(i)).cos() * (1.0 + grid.y(j));
            }
        }
        assert!(x_average(&grid, &mode).iter().all(|p| p.abs() < 1e-12));
    }

    #[test]
    fn strip_window_must_tile() {
        let ok = StripGrid::new(1.0, 3, 1, 10, 5.0, 20, TopBoundary::Neumann).unwrap();
        assert_eq!(ok.nx, 41);
        assert_eq!(ok.cells_per_period(), 10);
        let bad = StripGrid { x_max: 1.5, ..ok };
        assert!(build_strip_operators(&bad, &baseline()).is_err());
    }

    #[test]
    fn constant_state_has_no_diffusion() {
        let m = baseline();
        let grid = StripGrid::new(1.0, 2, 2, 8, 3.0, 12, TopBoundary::Neumann).unwrap();
        let ops = build_strip_operators(&grid, &m).unwrap();
        let u = vec![0.3; grid.nx];
        let v = vec![0.7; grid.nx * grid.rows()];
        let (du, dv) = ops.diffusion(&u, &v);
        assert!(du.iter().chain(&dv).all(|x| x.abs() < 1e-12));
        let (road, robin) = ops.exchange(&u, &v[..grid.nx]);
        assert!(road.iter().all(|r| (r - 0.4).abs() < 1e-15));
        assert!(robin.iter().all(|r| (r + 0.4).abs() < 1e-15));
    }

    #[test]
    fn dirichlet_top_is_pinned() {
        let m = baseline();
        let grid = StripGrid::new(1.0, 1, 1, 8, 3.0, 12, TopBoundary::Dirichlet).unwrap();
        let ops = build_strip_operators(&grid, &m).unwrap();
        let lu = ops.field_y.implicit(0.1).unwrap();
        let mut col = vec![1.0; grid.rows()];
        col[grid.ny] = 0.0;
        lu.solve_in_place(&mut col);
        assert_eq!(col[grid.ny], 0.0);
        assert!(col[..grid.ny].iter().all(|&c| c > 0.0 && c <= 1.0));
    }

    #[test]
    fn reflecting_lines_conserve_weighted_sum() {
        let line = LineOperator {
            n: 21,
            h: 0.1,
            coefficient: 2.0,
            dirichlet_end: false,
        };
        let x: Vec<f64> = (0..21).map(|i| ((i * i) % 7) as f64).collect();
        let mut y = vec![0.0; 21];
        line.apply(&x, &mut y);
        let w = |i: usize| if i == 0 || i == 20 { 0.05 } else { 0.1 };
        let s: f64 = (0..21).map(|i| w(i) * y[i]).sum();
        assert!(s.abs() < 1e-12);
        let mut z = x.clone();
        line.implicit(0.3).unwrap().solve_in_place(&mut z);
        let before: f64 = (0..21).map(|i| w(i) * x[i]).sum();
        let after: f64 = (0..21).map(|i| w(i) * z[i]).sum();
        assert!((before - after).abs() < 1e-12 * before);
    }
}
