use std::f64::consts::PI;

use proptest::prelude::*;
use roadfield_core::eigensolver::{
    averaging_identity_check, concavity_violation, constant_coefficient_oracle, dispersion_curve_truncated,
    eigenfunction_growth_check, principal_eigen_truncated, principal_eigen_truncated_from, sine_profile_misfit,
    whole_field_eigenvalue, WholeFieldOptions,
};
use roadfield_core::grids::build_cell_operator;
use roadfield_core::model::{make_model, ModelParams, ModelSpec};
use roadfield_core::CellGrid;

fn model(big_d: f64, mu: &str, nu: &str) -> ModelParams {
    let mut spec = ModelSpec::constant(big_d, 1.0, 1.0, 1.0, 1.0);
    spec.mu = mu.into();
    spec.nu = nu.into();
    make_model(&spec).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn eigenpair_positive_and_consistent(
        big_d in 0.2f64..10.0, a in 0.2f64..2.0, frac in 0.0f64..1.0, alpha in 0.0f64..2.0,
    ) {
        let m = model(big_d, &format!("cosine:{a},{}", a * frac), "square:1.5,0.5,0.4");
        let grid = CellGrid::new(1.0, 6.0, 12, 30).unwrap();
        let p = principal_eigen_truncated(&m, alpha, &grid, 1e-11).unwrap();
        prop_assert!(p.u.iter().all(|&w| w > 0.0));
        prop_assert!(p.v[..grid.field_len()].iter().all(|&w| w > 0.0));
        prop_assert!(p.v[grid.field_len()..].iter().all(|&w| w == 0.0));
        prop_assert!(p.bracket.0 <= p.lambda + 1e-9 && p.lambda <= p.bracket.1 + 1e-9);
        prop_assert!(eigenfunction_growth_check(&p, &m).passes);

        let op = build_cell_operator(&grid, &m, alpha).unwrap();
        let x: Vec<f64> = p.u.iter().chain(&p.v[..grid.field_len()]).cloned().collect();
        let ax = op.apply(&x);
        let res = ax.iter().zip(&x).map(|(a, b)| (a - p.lambda * b).abs()).fold(0.0, f64::max);
        prop_assert!(res < 1e-8 * (1.0 + p.lambda.abs()) * 10.0, "residual {res}");
    }

    #[test]
    fn eigenpair_independent_of_start(big_d in 0.2f64..10.0, alpha in 0.0f64..2.0, seed in 1u64..1000) {
        let m = model(big_d, "cosine:1,1", "constant:1");
        let grid = CellGrid::new(1.0, 5.0, 10, 25).unwrap();
        let a = principal_eigen_truncated(&m, alpha, &grid, 1e-11).unwrap();
        let mut s = seed;
        let start: Vec<f64> = (0..grid.unknowns())
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                0.1 + (s >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        let b = principal_eigen_truncated_from(&m, alpha, &grid, 1e-11, Some(&start)).unwrap();
        prop_assert!((a.lambda - b.lambda).abs() < 1e-9 * (1.0 + a.lambda.abs()));
        prop_assert!(max_abs_diff(&a.u, &b.u) < 1e-6);
        prop_assert!(max_abs_diff(&a.v, &b.v) < 1e-6);
    }

    #[test]
    fn truncated_eigenvalue_decreases_in_height(big_d in 0.2f64..10.0, alpha in 0.0f64..2.0) {
        let m = model(big_d, "constant:1", "constant:1");
        let mut prev = f64::INFINITY;
        for &r in &[2.0, 4.0, 8.0, 16.0] {
            let grid = CellGrid::with_spacing(1.0, r, 8, 0.1).unwrap();
            let l = principal_eigen_truncated(&m, alpha, &grid, 1e-11).unwrap().lambda;
            // Once the eigenfunction has decayed to round-off the values tie.
            prop_assert!(l < prev || (l - prev).abs() <= 1e-10 * (1.0 + l.abs()), "{l} after {prev}");
            prev = l;
        }
    }

    #[test]
    fn truncated_bracket_for_d_at_most_field(big_d in 0.1f64..1.0, alpha in 0.0f64..2.0, r in 3.0f64..15.0) {
        let m = model(big_d, "constant:1", "constant:1");
        let grid = CellGrid::with_spacing(1.0, r.round(), 8, 0.1).unwrap();
        let x = principal_eigen_truncated(&m, alpha, &grid, 1e-11).unwrap().minus_lambda();
        let flat = alpha * alpha + 1.0;
        let rr = r.round();
        prop_assert!(x < flat && x > flat - PI * PI / (rr * rr) - 1e-8);
    }

    #[test]
    fn lambda_r_is_concave(big_d in 0.2f64..10.0, a in 0.2f64..2.0) {
        let m = model(big_d, &format!("cosine:{a},{a}"), "constant:1");
        let grid = CellGrid::with_spacing(1.0, 6.0, 12, 0.2).unwrap();
        let alphas: Vec<f64> = (0..12).map(|k| 0.1 + 0.2 * k as f64).collect();
        let curve = dispersion_curve_truncated(&m, &alphas, &grid, 1e-12).unwrap();
        let lambdas: Vec<f64> = curve.values.iter().map(|v| -v).collect();
        prop_assert!(concavity_violation(&alphas, &lambdas) <= 1e-6);
    }

    #[test]
    fn oracle_agrees_with_truncated_solve(big_d in 0.2f64..6.0, mu in 0.3f64..2.0, nu in 0.3f64..2.0, alpha in 0.0f64..1.5) {
        let mut spec = ModelSpec::constant(big_d, 1.0, mu, nu, 1.0);
        spec.field_diffusion = 1.0;
        let m = make_model(&spec).unwrap();
        let oracle = constant_coefficient_oracle(big_d, 1.0, mu, nu, 1.0, alpha, 5.0).unwrap();
        let err = |hy: f64| {
            let grid = CellGrid::with_spacing(1.0, 5.0, 8, hy).unwrap();
            (principal_eigen_truncated(&m, alpha, &grid, 1e-12).unwrap().lambda - oracle).abs()
        };
        let (coarse, mid, fine) = (err(0.05), err(0.025), err(0.0125));
        prop_assert!(fine < 1e-4, "error {fine}");
        prop_assert!(coarse < 1e-9 || coarse / mid > 3.0, "{coarse} -> {mid}");
        prop_assert!(mid < 1e-9 || mid / fine > 3.0, "{mid} -> {fine}");
    }
}

#[test]
fn oracle_convergence_is_second_order() {
    let m = model(3.0, "constant:1", "constant:1");
    let oracle = constant_coefficient_oracle(3.0, 1.0, 1.0, 1.0, 1.0, 0.7, 8.0).unwrap();
    let errs: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&hy| {
            let grid = CellGrid::with_spacing(1.0, 8.0, 8, hy).unwrap();
            (principal_eigen_truncated(&m, 0.7, &grid, 1e-12).unwrap().lambda - oracle).abs()
        })
        .collect();
    assert!((errs[0] / errs[1]).log2() >= 1.5);
    assert!((errs[1] / errs[2]).log2() >= 1.5);
}

#[test]
fn averaging_identity_and_sine_profile() {
    let m = model(4.0, "cosine:1,1", "constant:1");
    let mut residuals = Vec::new();
    for &(nx, hy) in &[(16, 0.1), (32, 0.05)] {
        let grid = CellGrid::with_spacing(1.0, 10.0, nx, hy).unwrap();
        let p = principal_eigen_truncated(&m, 0.5, &grid, 1e-12).unwrap();
        let rep = averaging_identity_check(&p, &m);
        assert!((rep.exchange - rep.eigen_side).abs() < 1e-8 * rep.exchange.abs().max(1.0));
        residuals.push(rep.residual);
        assert!(sine_profile_misfit(&p, &m).unwrap() < 5e-3);
    }
    assert!(residuals[0] < 5e-3 && residuals[0] / residuals[1] > 3.0);
}

#[test]
fn sine_fit_inapplicable_when_accelerated_region_is_exponential() {
    let m = model(20.0, "constant:1", "constant:1");
    let grid = CellGrid::with_spacing(1.0, 20.0, 8, 0.1).unwrap();
    let p = principal_eigen_truncated(&m, 1.5, &grid, 1e-12).unwrap();
    assert!(p.minus_lambda() > 1.5 * 1.5 + 1.0);
    assert_eq!(sine_profile_misfit(&p, &m), None);
}

#[test]
fn whole_field_interval_brackets_the_flat_value() {
    let m = model(1.0, "constant:1", "constant:1");
    let w = whole_field_eigenvalue(&m, 1.0, &WholeFieldOptions::for_params(&m)).unwrap();
    let n = w.levels.len();
    let last_step = (w.levels[n - 1].lambda - w.levels[n - 2].lambda).abs();
    assert_eq!(w.converged, last_step < 1e-5);
    let (lo, hi) = w.interval();
    assert!(lo <= hi);
    assert!((w.minus_lambda() - 2.0).abs() < 1e-3);
    assert!(w.levels.windows(2).all(|p| p[1].lambda < p[0].lambda));
}

#[test]
fn whole_field_exceeds_flat_when_road_is_fast() {
    let m = model(8.0, "constant:1", "constant:1");
    let w = whole_field_eigenvalue(&m, 1.0, &WholeFieldOptions::for_params(&m)).unwrap();
    let oracle = constant_coefficient_oracle(8.0, 1.0, 1.0, 1.0, 1.0, 1.0, w.grid.height).unwrap();
    assert!(w.converged);
    assert!(w.minus_lambda() > 2.0 + 1e-3);
    let coarse = (w.lambda_last - oracle).abs();
    assert!(coarse < 1e-3, "{coarse}");
    let fine_grid = CellGrid::with_spacing(1.0, w.grid.height, w.grid.nx, w.grid.hy() / 2.0).unwrap();
    let fine = (principal_eigen_truncated(&m, 1.0, &fine_grid, 1e-12).unwrap().lambda - oracle).abs();
    assert!(coarse / fine > 3.5, "{coarse} -> {fine}");
}
