//! Spreading speeds from the dispersion relation.
//!
//! The spreading speed along the road is `c* = min_{alpha > 0} -Lambda(alpha)/alpha`.
//! The bounds `max(d alpha^2 + f'(0), D alpha^2 - lambda_alpha) <= -Lambda(alpha) <= M_alpha`
//! make the ratio blow up at both ends, which is what localizes the
//! golden-section search below.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::eigensolver::{
    principal_eigen_truncated, whole_field_eigenvalue, DispersionCurve, WholeFieldEigen, WholeFieldOptions,
};
use crate::error::{Error, Result};
use crate::grids::CellGrid;
use crate::model::{critical_alpha, kpp_speed, shift_constant_m, ModelParams};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimizes a unimodal `f` on `[a, b]`; returns `(x, f(x), evaluations)`.
pub fn golden_section_min<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64, usize)
where
    F: FnMut(f64) -> f64,
{
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut evals = 2;
    while (b - a).abs() > xtol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        evals += 1;
    }
    if fc <= fd {
        (c, fc, evals)
    } else {
        (d, fd, evals)
    }
}

/// Which eigenvalue the speed was minimized over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SpeedMode {
    Truncated { height: f64 },
    WholeField,
    Curve,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeedSummary {
    pub c_star: f64,
    pub alpha_star: f64,
    pub mode: SpeedMode,
    pub c_kpp: f64,
    pub accelerated: bool,
    pub alpha_of_d: Option<f64>,
    pub bracket: (f64, f64),
    /// Margin used for the `accelerated` verdict.
    pub verdict_tol: f64,
    /// Speed from the truncated eigenvalue at the largest computed `R`
    /// (whole-field mode), a lower estimate of `c_star`.
    pub truncated_speed: Option<f64>,
    pub road_diffusion: f64,
    pub evaluations: usize,
}

/// Options of the speed search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedOptions {
    pub eigen: WholeFieldOptions,
    /// Golden-section tolerance on `ln alpha`.
    pub log_alpha_tol: f64,
}

impl Default for SpeedOptions {
    fn default() -> Self {
        SpeedOptions {
            eigen: WholeFieldOptions::default(),
            log_alpha_tol: 1e-3,
        }
    }
}

impl SpeedOptions {
    pub fn for_params(params: &ModelParams) -> Self {
        SpeedOptions {
            eigen: WholeFieldOptions::for_params(params),
            ..Self::default()
        }
    }
}

fn verdict_tol(c_kpp: f64, extrapolation: f64, alpha_star: f64) -> f64 {
    (1e-4 * c_kpp).max(3.0 * extrapolation / alpha_star)
}

/// Lower bound on `-Lambda(alpha)` usable without solving.
fn lower_bound(params: &ModelParams, alpha: f64) -> f64 {
    let d = params.field_diffusion;
    let field = d * alpha * alpha + params.fprime0();
    let road = params.road_diffusion * alpha * alpha + params.gprime0() - params.mu1();
    field.max(road)
}

/// Interval of `alpha` outside which the ratio lower bound exceeds the best
/// ratio upper bound `min M_alpha / alpha`, so the minimizer lies inside.
pub fn alpha_search_bracket(params: &ModelParams) -> (f64, f64) {
    let samples = 4000;
    let (lo_exp, hi_exp) = (-4.0_f64, 4.0_f64);
    let at = |k: usize| 10f64.powf(lo_exp + (hi_exp - lo_exp) * k as f64 / samples as f64);
    let c_up = (0..=samples)
        .map(|k| {
            let a = at(k);
            shift_constant_m(a, params) / a
        })
        .fold(f64::INFINITY, f64::min);
    let inside = |a: f64| lower_bound(params, a) / a <= c_up;
    let first = (0..=samples).find(|&k| inside(at(k))).unwrap_or(0);
    let last = (0..=samples).rev().find(|&k| inside(at(k))).unwrap_or(samples);
    let a_lo = if first == 0 { at(0) } else { at(first - 1) };
    let a_hi = if last == samples { at(samples) } else { at(last + 1) };
    (a_lo, a_hi)
}

fn drift_limit(period: f64, nx: usize) -> f64 {
    0.9 * nx as f64 / period
}

/// Whole-field spreading speed `c*(D)` by golden-section search on `ln alpha`.
pub fn whole_field_speed(params: &ModelParams, opts: &SpeedOptions) -> Result<SpeedSummary> {
    let (a_lo, mut a_hi) = alpha_search_bracket(params);
    let limit = drift_limit(params.period, opts.eigen.nx);
    let clamped = a_hi > limit;
    if clamped {
        a_hi = limit;
    }
    if a_lo >= a_hi {
        return Err(Error::SpeedBracket(format!(
            "bracket [{a_lo}, {a_hi}] is empty; increase nx"
        )));
    }
    let mut cache: Vec<(f64, WholeFieldEigen)> = Vec::new();
    let mut failure: Option<Error> = None;
    let (la, fa, evals) = golden_section_min(
        |la| {
            let a = la.exp();
            match whole_field_eigenvalue(params, a, &opts.eigen) {
                Ok(w) => {
                    let r = w.minus_lambda() / a;
                    cache.push((a, w));
                    r
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            }
        },
        a_lo.ln(),
        a_hi.ln(),
        opts.log_alpha_tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let alpha_star = la.exp();
    if clamped && (a_hi.ln() - la) < 2.0 * opts.log_alpha_tol {
        return Err(Error::SpeedBracket(format!(
            "minimizer reached the drift limit alpha = {a_hi}; increase nx"
        )));
    }
    let best = cache
        .iter()
        .min_by(|p, q| (p.1.minus_lambda() / p.0).total_cmp(&(q.1.minus_lambda() / q.0)))
        .expect("golden section evaluates at least twice");
    let tail = best.1.tail;
    let truncated = cache
        .iter()
        .map(|(a, w)| -w.lambda_last / a)
        .fold(f64::INFINITY, f64::min);
    let c_kpp = kpp_speed(params.field_diffusion, params.fprime0());
    let tol = verdict_tol(c_kpp, tail, alpha_star);
    let err = tail / alpha_star + 1e-6 * fa;
    Ok(SpeedSummary {
        c_star: fa,
        alpha_star,
        mode: SpeedMode::WholeField,
        c_kpp,
        accelerated: fa > c_kpp + tol,
        alpha_of_d: critical_alpha(params.road_diffusion, params.field_diffusion, params.fprime0()),
        bracket: (truncated.min(fa - err), fa + err),
        verdict_tol: tol,
        truncated_speed: Some(truncated),
        road_diffusion: params.road_diffusion,
        evaluations: evals,
    })
}

/// Truncated spreading speed `c*_R = min -Lambda_R(alpha)/alpha` on a fixed cell.
pub fn truncated_speed(params: &ModelParams, grid: &CellGrid, opts: &SpeedOptions) -> Result<SpeedSummary> {
    let (a_lo, mut a_hi) = alpha_search_bracket(params);
    a_hi = a_hi.min(drift_limit(params.period, grid.nx));
    let mut failure: Option<Error> = None;
    let (la, fa, evals) = golden_section_min(
        |la| {
            let a = la.exp();
            match principal_eigen_truncated(params, a, grid, opts.eigen.tol) {
                Ok(p) => -p.lambda / a,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            }
        },
        a_lo.ln(),
        a_hi.ln(),
        opts.log_alpha_tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let c_kpp = kpp_speed(params.field_diffusion, params.fprime0());
    let alpha_star = la.exp();
    let tol = verdict_tol(c_kpp, 0.0, alpha_star);
    Ok(SpeedSummary {
        c_star: fa,
        alpha_star,
        mode: SpeedMode::Truncated { height: grid.height },
        c_kpp,
        accelerated: fa > c_kpp + tol,
        alpha_of_d: critical_alpha(params.road_diffusion, params.field_diffusion, params.fprime0()),
        bracket: (fa - 1e-6 * fa, fa + 1e-6 * fa),
        verdict_tol: tol,
        truncated_speed: None,
        road_diffusion: params.road_diffusion,
        evaluations: evals,
    })
}

/// Lagrange interpolant through `pts` evaluated at `x`.
fn lagrange(pts: &[(f64, f64)], x: f64) -> f64 {
    let mut s = 0.0;
    for (i, &(xi, yi)) in pts.iter().enumerate() {
        let mut w = 1.0;
        for (j, &(xj, _)) in pts.iter().enumerate() {
            if i != j {
                w *= (x - xj) / (xi - xj);
            }
        }
        s += w * yi;
    }
    s
}

/// Speed from a sampled curve: the minimum of `-Lambda/alpha` with `-Lambda`
/// interpolated quadratically around the best sample. The error estimate
/// compares against a cubic interpolant.
pub fn speed_from_curve(curve: &DispersionCurve, params: &ModelParams) -> Result<SpeedSummary> {
    let n = curve.alphas.len();
    if n < 3 {
        return Err(Error::SpeedBracket("curve needs at least three samples".into()));
    }
    let pts: Vec<(f64, f64)> = curve.alphas.iter().cloned().zip(curve.values.iter().cloned()).collect();
    let k = (0..n)
        .min_by(|&i, &j| (pts[i].1 / pts[i].0).total_cmp(&(pts[j].1 / pts[j].0)))
        .unwrap();
    if k == 0 || k + 1 == n {
        return Err(Error::SpeedBracket(format!(
            "ratio minimum at the end of the sampled range (alpha = {})",
            pts[k].0
        )));
    }
    let (a, b) = (pts[k - 1].0, pts[k + 1].0);
    let xtol = 1e-10 * b;
    let quad = &pts[k - 1..=k + 1];
    let (x3, c3, _) = golden_section_min(|x| lagrange(quad, x) / x, a, b, xtol);
    let cubic: Option<&[(f64, f64)]> = if k + 2 < n {
        Some(&pts[k - 1..=k + 2])
    } else if k >= 2 {
        Some(&pts[k - 2..=k + 1])
    } else {
        None
    };
    let err = cubic.map_or(0.0, |c| {
        (golden_section_min(|x| lagrange(c, x) / x, a, b, xtol).1 - c3).abs()
    });
    let tail = curve
        .values
        .iter()
        .zip(&curve.lower)
        .map(|(v, l)| v - l)
        .fold(0.0, f64::max);
    let c_kpp = kpp_speed(params.field_diffusion, params.fprime0());
    let tol = verdict_tol(c_kpp, tail + err * x3, x3);
    let mode = match curve.mode {
        crate::eigensolver::CurveMode::Truncated { height } => SpeedMode::Truncated { height },
        crate::eigensolver::CurveMode::WholeField { .. } => SpeedMode::WholeField,
    };
    Ok(SpeedSummary {
        c_star: c3,
        alpha_star: x3,
        mode,
        c_kpp,
        accelerated: c3 > c_kpp + tol,
        alpha_of_d: critical_alpha(params.road_diffusion, params.field_diffusion, params.fprime0()),
        bracket: (c3 - err - tail / x3, c3 + err),
        verdict_tol: tol,
        truncated_speed: None,
        road_diffusion: params.road_diffusion,
        evaluations: 0,
    })
}

/// `c(alpha) = -Lambda(alpha)/alpha` with no restriction on `alpha`.
pub fn dispersion_speed(params: &ModelParams, alpha: f64, opts: &WholeFieldOptions) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Domain("alpha must be positive".into()));
    }
    Ok(whole_field_eigenvalue(params, alpha, opts)?.minus_lambda() / alpha)
}

/// Front speed of initial data decaying like `e^{alpha x}`, valid for
/// `alpha < alpha*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpDecaySpeed {
    pub alpha: f64,
    pub speed: f64,
    /// Spectral value `-Lambda(alpha)/alpha`.
    pub spectral: f64,
    /// `d alpha + f'(0)/alpha` when the flat regime applies.
    pub closed_form: Option<f64>,
}

/// Speed `c(alpha)` for exponentially decaying data, given the whole-field
/// speed summary that supplies `alpha*`. In the flat regime (`D <= d`, or
/// `alpha <= alpha(D)`) the spectral value is checked against the closed
/// form, which is returned.
pub fn exp_decay_speed(
    params: &ModelParams,
    alpha: f64,
    summary: &SpeedSummary,
    opts: &WholeFieldOptions,
) -> Result<ExpDecaySpeed> {
    if !(alpha > 0.0) {
        return Err(Error::Domain("alpha must be positive".into()));
    }
    if alpha >= summary.alpha_star {
        return Err(Error::UseCStar {
            alpha,
            alpha_star: summary.alpha_star,
        });
    }
    let w = whole_field_eigenvalue(params, alpha, opts)?;
    let spectral = w.minus_lambda() / alpha;
    let d = params.field_diffusion;
    let flat = match critical_alpha(params.road_diffusion, d, params.fprime0()) {
        None => true,
        Some(a) => alpha <= a * (1.0 + 1e-12),
    };
    let closed_form = (flat && params.g.is_none()).then(|| d * alpha + params.fprime0() / alpha);
    if let Some(cf) = closed_form {
        let tol = (1e-3 * cf).max(3.0 * w.tail / alpha);
        if (spectral - cf).abs() > tol {
            return Err(Error::Domain(format!(
                "spectral c({alpha}) = {spectral} disagrees with the closed form {cf} beyond {tol}"
            )));
        }
    }
    Ok(ExpDecaySpeed {
        alpha,
        speed: closed_form.unwrap_or(spectral),
        spectral,
        closed_form,
    })
}

/// Result of a scan of `c*(D)` across road diffusivities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub field_diffusion: f64,
    pub entries: Vec<SpeedSummary>,
    /// Smallest grid `D` flagged accelerated.
    pub first_accelerated: Option<f64>,
    /// Consecutive grid pairs across which the verdict flips.
    pub sign_changes: Vec<(f64, f64)>,
    /// Whether the first flip `(D_prev, D_next]` contains `2d` as `D_prev <= 2d < D_next`.
    pub brackets_2d: bool,
    /// `c*(D)` nondecreasing along the grid (reported only).
    pub monotone: bool,
    /// Whether the grid spans `[d, 4d]` with at least nine points including `2d`.
    pub grid_adequate: bool,
}

/// Computes `c*(D)` along `d_grid` (in parallel) and locates the acceleration onset.
pub fn acceleration_threshold_scan(
    template: &ModelParams,
    d_grid: &[f64],
    opts: &SpeedOptions,
) -> Result<ThresholdReport> {
    if d_grid.windows(2).any(|w| !(w[1] > w[0])) || d_grid.is_empty() {
        return Err(Error::Domain("D grid must be strictly increasing".into()));
    }
    let d = template.field_diffusion;
    let entries: Vec<SpeedSummary> = d_grid
        .par_iter()
        .map(|&big_d| whole_field_speed(&template.with_road_diffusion(big_d), opts))
        .collect::<Result<_>>()?;
    let sign_changes: Vec<(f64, f64)> = entries
        .windows(2)
        .filter(|w| w[0].accelerated != w[1].accelerated)
        .map(|w| (w[0].road_diffusion, w[1].road_diffusion))
        .collect();
    let first_accelerated = entries.iter().find(|e| e.accelerated).map(|e| e.road_diffusion);
    let brackets_2d = match sign_changes.first() {
        Some(&(lo, hi)) => {
            let first_is_onset = !entries[0].accelerated;
            first_is_onset && lo <= 2.0 * d * (1.0 + 1e-12) && 2.0 * d < hi
        }
        None => false,
    };
    let monotone = entries
        .windows(2)
        .all(|w| w[1].c_star >= w[0].c_star - w[0].verdict_tol);
    let has_2d = d_grid.iter().any(|&x| (x - 2.0 * d).abs() <= 1e-12 * d);
    let grid_adequate = d_grid.len() >= 9
        && has_2d
        && d_grid[0] <= d * (1.0 + 1e-12)
        && *d_grid.last().unwrap() >= 4.0 * d * (1.0 - 1e-12);
    Ok(ThresholdReport {
        field_diffusion: d,
        entries,
        first_accelerated,
        sign_changes,
        brackets_2d,
        monotone,
        grid_adequate,
    })
}

/// One row of the large-`D` table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LargeDRow {
    pub road_diffusion: f64,
    pub c_star: f64,
    pub ratio: f64,
    pub band: (f64, f64),
    pub in_band: bool,
    /// `D sqrt(f'(0)/(D - d))`, the speed of the explicit test exponent.
    pub witness: f64,
    pub below_witness: bool,
}

/// `c*(D)/sqrt(D)` per `D`, with the band `[f'(0)/sqrt(f'(0) + mu1), sqrt(f'(0))]`
/// widened by `tol`.
pub fn large_d_scaling(
    template: &ModelParams,
    d_list: &[f64],
    opts: &SpeedOptions,
    tol: f64,
) -> Result<Vec<LargeDRow>> {
    let fp = template.fprime0();
    let band = (fp / (fp + template.mu1()).sqrt(), fp.sqrt());
    d_list
        .par_iter()
        .map(|&big_d| {
            let s = whole_field_speed(&template.with_road_diffusion(big_d), opts)?;
            let ratio = s.c_star / big_d.sqrt();
            let witness = if big_d > template.field_diffusion {
                big_d * (fp / (big_d - template.field_diffusion)).sqrt()
            } else {
                f64::INFINITY
            };
            Ok(LargeDRow {
                road_diffusion: big_d,
                c_star: s.c_star,
                ratio,
                band,
                in_band: ratio >= band.0 - tol && ratio <= band.1 + tol,
                witness,
                below_witness: s.c_star <= witness + s.verdict_tol,
            })
        })
        .collect()
}

/// `2 sqrt(d f'(0) - d^2 pi^2 / (4 R^2))`, the field speed in a strip of height `R`
/// with a Dirichlet top.
pub fn truncated_field_reference_speed(d: f64, fprime0: f64, height: f64) -> Result<f64> {
    let radicand = d * fprime0 - d * d * PI * PI / (4.0 * height * height);
    if !(radicand > 0.0) || !(d > 0.0) {
        return Err(Error::Domain(format!(
            "no truncated field speed for d = {d}, f'(0) = {fprime0}, R = {height}"
        )));
    }
    Ok(2.0 * radicand.sqrt())
}

/// `sqrt((f'(0) - d pi^2 / (4 R^2)) / (D - d))`, `None` when `D <= d`.
pub fn truncated_critical_alpha(road_diffusion: f64, d: f64, fprime0: f64, height: f64) -> Result<Option<f64>> {
    let num = fprime0 - d * PI * PI / (4.0 * height * height);
    if !(num > 0.0) {
        return Err(Error::Domain(format!(
            "R = {height} too small for a truncated critical decay"
        )));
    }
    Ok((road_diffusion > d).then(|| (num / (road_diffusion - d)).sqrt()))
}

/// Road diffusivity above which a road reaction with rate `g'(0)` accelerates
/// spreading: `2d - d g'(0)/f'(0)`.
pub fn road_reaction_threshold(d: f64, fprime0: f64, gprime0: f64) -> f64 {
    2.0 * d - d * gprime0 / fprime0
}

/// Number of sign changes of `-Lambda(alpha) - c alpha` along a sampled curve.
pub fn count_speed_roots(curve: &DispersionCurve, c: f64) -> usize {
    let g: Vec<f64> = curve.alphas.iter().zip(&curve.values).map(|(a, v)| v - c * a).collect();
    g.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolver::CurveMode;
    use crate::model::{make_model, ModelSpec};

    fn analytic_curve(alphas: &[f64]) -> DispersionCurve {
        let values: Vec<f64> = alphas.iter().map(|a| a * a + 1.0).collect();
        DispersionCurve {
            alphas: alphas.to_vec(),
            lower: values.clone(),
            values,
            mode: CurveMode::WholeField { r_max: 0.0, tol_r: 0.0 },
            grids: vec![],
            residuals: vec![0.0; alphas.len()],
            iterations: vec![0; alphas.len()],
        }
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let (x, fx, _) = golden_section_min(|x| (x - 0.3).powi(2) + 1.0, -1.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-15);
    }

    #[test]
    fn curve_speed_of_kpp_relation() {
        let m = make_model(&ModelSpec::constant(1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        let alphas: Vec<f64> = (1..40).map(|k| 0.1 * k as f64).collect();
        let s = speed_from_curve(&analytic_curve(&alphas), &m).unwrap();
        assert!((s.c_star - 2.0).abs() < 1e-9);
        assert!((s.alpha_star - 1.0).abs() < 1e-4);
        assert!(!s.accelerated);
    }

    #[test]
    fn curve_speed_needs_interior_minimum() {
        let m = make_model(&ModelSpec::constant(1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        let alphas = [0.1, 0.2, 0.3, 0.4];
        assert!(matches!(
            speed_from_curve(&analytic_curve(&alphas), &m),
            Err(Error::SpeedBracket(_))
        ));
    }

    #[test]
    fn root_counts_around_the_minimum() {
        let alphas: Vec<f64> = (1..60).map(|k| 0.05 * k as f64).collect();
        let c = analytic_curve(&alphas);
        assert_eq!(count_speed_roots(&c, 1.9), 0);
        assert_eq!(count_speed_roots(&c, 2.2), 2);
    }

    #[test]
    fn closed_form_anchors() {
        assert!((truncated_field_reference_speed(1.0, 1.0, PI).unwrap() - 3f64.sqrt()).abs() < 1e-12);
        assert!((truncated_field_reference_speed(1.0, 1.0, 1e9).unwrap() - 2.0).abs() < 1e-12);
        assert!(truncated_field_reference_speed(1.0, 1.0, 1.0).is_err());
        assert_eq!(road_reaction_threshold(1.0, 1.0, 0.0), 2.0);
        assert_eq!(road_reaction_threshold(1.0, 1.0, 1.0), 1.0);
        assert_eq!(road_reaction_threshold(1.0, 1.0, 0.5), 1.5);
        assert_eq!(truncated_critical_alpha(1.0, 1.0, 1.0, 10.0).unwrap(), None);
        let a = truncated_critical_alpha(2.0, 1.0, 1.0, 1e9).unwrap().unwrap();
        assert!((a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn search_bracket_contains_kpp_minimizer() {
        let m = make_model(&ModelSpec::constant(1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        let (lo, hi) = alpha_search_bracket(&m);
        assert!(lo < 1.0 && hi > 1.0);
        assert!(lo > 0.05 && hi < 20.0);
    }
}
