use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use roadfield_core::eigensolver::road_eigenvalue_lambda_alpha;
use roadfield_core::grids::{build_cell_operator, build_road_operator, build_strip_operators, x_average};
use roadfield_core::model::{make_model, shift_constant_m, ModelParams, ModelSpec};
use roadfield_core::{CellGrid, Error, StripGrid, TopBoundary};

fn model(big_d: f64, d: f64, mu: &str, nu: &str, alpha_free: bool) -> ModelParams {
    let mut spec = ModelSpec::constant(big_d, d, 1.0, 1.0, 1.0);
    spec.mu = mu.into();
    spec.nu = nu.into();
    if !alpha_free {
        spec.g = Some("linear:0.2".into());
    }
    make_model(&spec).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cell_operator_is_cooperative(
        big_d in 0.1f64..20.0, d in 0.2f64..3.0, a in 0.2f64..2.0, frac in 0.0f64..1.0,
        alpha in 0.0f64..3.0, nx in 8usize..20, ny in 8usize..24, g in proptest::bool::ANY,
    ) {
        let m = model(big_d, d, &format!("cosine:{a},{}", a * frac), "square:1,0.5,0.3", g);
        let grid = CellGrid::new(1.0, 5.0, nx, ny).unwrap();
        let op = build_cell_operator(&grid, &m, alpha).unwrap();
        prop_assert!(op.is_cooperative());
        prop_assert_eq!(op.matrix.dim(), nx * (ny + 1));
    }

    #[test]
    fn shifted_operator_has_positive_inverse(
        big_d in 0.1f64..10.0, alpha in 0.0f64..2.0, a in 0.2f64..2.0, col in 0usize..100,
    ) {
        let m = model(big_d, 1.0, &format!("cosine:{a},{a}"), "constant:1", true);
        let grid = CellGrid::new(1.0, 4.0, 8, 10).unwrap();
        let op = build_cell_operator(&grid, &m, alpha).unwrap();
        let lu = op.factor_shifted(shift_constant_m(alpha, &m) + 1.0).unwrap();
        let n = op.matrix.dim();
        let mut e = vec![0.0; n];
        e[col % n] = 1.0;
        lu.solve_in_place(&mut e);
        prop_assert!(e.iter().all(|&w| w > 0.0), "inverse column has a nonpositive entry");
    }

    #[test]
    fn road_operator_is_cooperative(big_d in 0.1f64..50.0, alpha in 0.0f64..3.0, nx in 3usize..64) {
        let m = model(big_d, 1.0, "cosine:1,0.5", "constant:1", true);
        match build_road_operator(&m, alpha, nx) {
            Ok(op) => prop_assert!(op.is_cooperative()),
            Err(Error::DriftGuard { product, .. }) => prop_assert!(product >= 1.0),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn strip_diffusion_preserves_trapezoid_mass(seed in 0u64..1000, top in proptest::bool::ANY) {
        let top = if top { TopBoundary::Dirichlet } else { TopBoundary::Neumann };
        let grid = StripGrid::new(1.0, 2, 1, 4, 2.0, 6, top).unwrap();
        let m = model(2.0, 1.0, "constant:1", "constant:1", true);
        let ops = build_strip_operators(&grid, &m).unwrap();
        let mut x = seed;
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (x >> 11) as f64 / (1u64 << 53) as f64
        };
        let u: Vec<f64> = (0..grid.nx).map(|_| next()).collect();
        let mut v: Vec<f64> = (0..grid.nx * grid.rows()).map(|_| next()).collect();
        if top == TopBoundary::Dirichlet {
            v[grid.ny * grid.nx..].iter_mut().for_each(|w| *w = 0.0);
        }
        let (du, dv) = ops.diffusion(&u, &v);
        let road: f64 = du.iter().enumerate().map(|(i, w)| grid.road_weight(i) * w).sum();
        prop_assert!(road.abs() < 1e-10);
        if top == TopBoundary::Neumann {
            prop_assert!(grid.mass(&vec![0.0; grid.nx], &dv).abs() < 1e-10);
        }
    }
}

#[test]
fn drift_guard_rejects_coarse_grids() {
    let m = model(1.0, 1.0, "constant:1", "constant:1", true);
    let grid = CellGrid::new(1.0, 5.0, 8, 8).unwrap();
    match build_cell_operator(&grid, &m, 8.0) {
        Err(Error::DriftGuard { alpha, hx, product }) => {
            assert_eq!((alpha, hx, product), (8.0, 0.125, 1.0));
        }
        other => panic!("expected drift guard, got {other:?}"),
    }
    assert!(build_cell_operator(&grid, &m, 7.9).is_ok());
}

#[test]
fn coordinate_dump_lists_every_stored_entry() {
    let m = model(1.0, 1.0, "constant:1", "constant:1", true);
    let grid = CellGrid::new(1.0, 2.0, 8, 8).unwrap();
    let op = build_cell_operator(&grid, &m, 0.5).unwrap();
    let text = op.to_coordinate_text();
    assert_eq!(text.lines().count(), op.matrix.triplets().len());
    let first: Vec<&str> = text.lines().next().unwrap().split(' ').collect();
    assert_eq!(first.len(), 3);
}

/// Maximum truncation error on interior field rows and on the Robin row for a
/// smooth pair satisfying the Robin condition exactly.
fn truncation_errors(nx: usize, ny: usize) -> (f64, f64, f64) {
    let (big_d, d, alpha, r) = (1.7, 0.8, 0.6, 2.0);
    let m = model(big_d, d, "constant:1.3", "constant:0.7", true);
    let (mu, nu, fp) = (1.3, 0.7, 1.0);
    let k = 2.0 * PI;
    let p = |x: f64| 2.0 + (k * x).cos();
    let p1 = |x: f64| -k * (k * x).sin();
    let p2 = |x: f64| -k * k * (k * x).cos();
    let w = PI / (2.0 * r);
    let q = |y: f64| (w * y).cos() + 0.3 * (2.0 * w * y).sin();
    let q1 = |y: f64| -w * (w * y).sin() + 0.6 * w * (2.0 * w * y).cos();
    let q2 = |y: f64| -w * w * (w * y).cos() - 1.2 * w * w * (2.0 * w * y).sin();
    let s = (nu * q(0.0) - d * q1(0.0)) / mu;

    let grid = CellGrid::new(1.0, r, nx, ny).unwrap();
    let op = build_cell_operator(&grid, &m, alpha).unwrap();
    let mut x = vec![0.0; grid.unknowns()];
    for i in 0..nx {
        x[i] = s * p(grid.x(i));
        for j in 0..ny {
            x[grid.field_index(i, j)] = p(grid.x(i)) * q(grid.y(j));
        }
    }
    let y = op.apply(&x);
    let (mut road, mut robin, mut interior) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..nx {
        let xi = grid.x(i);
        let l1 = s * (-big_d * p2(xi) - 2.0 * big_d * alpha * p1(xi) + (-big_d * alpha * alpha + mu) * p(xi))
            - nu * p(xi) * q(0.0);
        road = road.max((y[i] - l1).abs());
        for j in 0..ny {
            let yj = grid.y(j);
            let l2 = -d * (p2(xi) * q(yj) + p(xi) * q2(yj)) - 2.0 * d * alpha * p1(xi) * q(yj)
                + (-d * alpha * alpha - fp) * p(xi) * q(yj);
            let e = (y[grid.field_index(i, j)] - l2).abs();
            if j == 0 {
                robin = robin.max(e);
            } else {
                interior = interior.max(e);
            }
        }
    }
    (road, interior, robin)
}

#[test]
fn cell_operator_consistency_orders() {
    let coarse = truncation_errors(16, 16);
    let fine = truncation_errors(32, 32);
    let order = |a: f64, b: f64| (a / b).log2();
    assert!(order(coarse.0, fine.0) > 1.9, "road order {}", order(coarse.0, fine.0));
    assert!(
        order(coarse.1, fine.1) > 1.9,
        "interior order {}",
        order(coarse.1, fine.1)
    );
    assert!(
        order(coarse.2, fine.2) > 0.9,
        "Robin row order {}",
        order(coarse.2, fine.2)
    );
}

#[test]
fn x_average_appends_the_dirichlet_row() {
    let grid = CellGrid::new(2.0, 1.0, 8, 8).unwrap();
    let v = vec![1.0; grid.field_len()];
    let phi = x_average(&grid, &v);
    assert_eq!(phi.len(), 9);
    assert!((phi[0] - 2.0).abs() < 1e-14);
    assert_eq!(phi[8], 0.0);
}

/// Principal eigenvalue of `-D u'' - 2 alpha D u' + (a + b cos(2 pi x)) u` on
/// the unit torus in a truncated real Fourier basis.
fn fourier_lambda_alpha(big_d: f64, alpha: f64, a: f64, b: f64, modes: usize) -> f64 {
    let n = 2 * modes + 1;
    let cos_idx = |k: usize| 2 * k - 1;
    let sin_idx = |k: usize| 2 * k;
    let mut m = DMatrix::<f64>::zeros(n, n);
    m[(0, 0)] = a;
    if modes >= 1 {
        m[(cos_idx(1), 0)] += b;
    }
    for k in 1..=modes {
        let w = 2.0 * PI * k as f64;
        let (c, s) = (cos_idx(k), sin_idx(k));
        m[(c, c)] += big_d * w * w + a;
        m[(s, c)] += 2.0 * alpha * big_d * w;
        m[(s, s)] += big_d * w * w + a;
        m[(c, s)] -= 2.0 * alpha * big_d * w;
        // b cos(2 pi x) times cos_k and sin_k.
        if k < modes {
            m[(cos_idx(k + 1), c)] += 0.5 * b;
            m[(sin_idx(k + 1), s)] += 0.5 * b;
        }
        if k == 1 {
            m[(0, c)] += 0.5 * b;
        } else {
            m[(cos_idx(k - 1), c)] += 0.5 * b;
            m[(sin_idx(k - 1), s)] += 0.5 * b;
        }
    }
    m.complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < 1e-8)
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn road_lambda_matches_fourier_oracle() {
    for &(big_d, alpha, a, b) in &[(1.0, 0.5, 1.0, 1.0), (8.0, 0.3, 1.5, 1.0), (0.3, 2.0, 2.0, 0.5)] {
        let m = model(big_d, 1.0, &format!("cosine:{a},{b}"), "constant:1", true);
        let oracle = fourier_lambda_alpha(big_d, alpha, a, b, 24);
        let coarse = road_eigenvalue_lambda_alpha(&m, alpha, 512).unwrap().lambda;
        let fine = road_eigenvalue_lambda_alpha(&m, alpha, 1024).unwrap().lambda;
        assert!((coarse - oracle).abs() < 1e-4, "D {big_d}: {coarse} vs {oracle}");
        let order = ((coarse - oracle).abs() / (fine - oracle).abs()).log2();
        assert!(order > 1.8, "D {big_d}: order {order}");
    }
}

#[test]
fn road_lambda_needs_resolution() {
    let m = model(1.0, 1.0, "constant:1", "constant:1", true);
    assert!(matches!(
        road_eigenvalue_lambda_alpha(&m, 0.5, 256),
        Err(Error::InvalidGrid(_))
    ));
    let r = road_eigenvalue_lambda_alpha(&m, 0.5, 512).unwrap();
    assert!((r.lambda - 1.0).abs() < 1e-10);
    assert!(r.u.iter().all(|&w| (w - 1.0).abs() < 1e-8));
}
