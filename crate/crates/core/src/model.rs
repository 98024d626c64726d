//! Physical data of the road-field system.
//!
//! A [`ModelParams`] bundles the road diffusivity `D`, the field diffusivity
//! `d`, the period `L`, the exchange rates `mu` (road to field) and `nu`
//! (field to road), the field reaction `f` and an optional road reaction `g`.
//! Everything is validated once at construction and immutable afterwards.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of equispaced samples used to validate a profile over one period.
pub const PROFILE_SAMPLES: usize = 4096;

/// Upper end of the density range on which reactions are checked.
pub const WORKING_RANGE: f64 = 2.0;

type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum ProfileKind {
    Constant(f64),
    Cosine { a: f64, b: f64 },
    Square { a: f64, b: f64, duty: f64 },
    Table(Vec<f64>),
    Custom(Evaluator),
}

/// An `L`-periodic, nonnegative exchange coefficient.
#[derive(Clone)]
pub struct ExchangeProfile {
    kind: ProfileKind,
    period: f64,
    min_value: f64,
    max_value: f64,
    spec: String,
}

impl fmt::Debug for ExchangeProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExchangeProfile")
            .field("spec", &self.spec)
            .field("period", &self.period)
            .field("min", &self.min_value)
            .field("max", &self.max_value)
            .finish()
    }
}

impl ExchangeProfile {
    /// Parses one of `constant:c`, `cosine:a,b`, `square:a,b,duty` or
    /// `table:[v0,v1,...]` and validates it on one period.
    pub fn parse(spec: &str, period: f64, field: &str) -> Result<Self> {
        let spec = spec.trim();
        let (name, args) = spec.split_once(':').unwrap_or((spec, ""));
        let kind = match name.trim() {
            "constant" => {
                let v = parse_numbers(args, field)?;
                expect_len(&v, 1, field, spec)?;
                ProfileKind::Constant(v[0])
            }
            "cosine" => {
                let v = parse_numbers(args, field)?;
                expect_len(&v, 2, field, spec)?;
                ProfileKind::Cosine { a: v[0], b: v[1] }
            }
            "square" => {
                let v = parse_numbers(args, field)?;
                expect_len(&v, 3, field, spec)?;
                if !(v[2] > 0.0 && v[2] < 1.0) {
                    return Err(Error::model(field, "square duty must lie in (0, 1)"));
                }
                ProfileKind::Square {
                    a: v[0],
                    b: v[1],
                    duty: v[2],
                }
            }
            "table" => {
                let inner = args.trim().trim_start_matches('[').trim_end_matches(']');
                let v = parse_numbers(inner, field)?;
                if v.len() < 2 {
                    return Err(Error::model(field, "table needs at least two samples"));
                }
                ProfileKind::Table(v)
            }
            other => {
                return Err(Error::model(field, format!("unknown profile `{other}`")));
            }
        };
        Self::build(kind, period, spec.to_string(), field)
    }

    /// Constant profile `c`.
    pub fn constant(c: f64, period: f64) -> Result<Self> {
        Self::build(ProfileKind::Constant(c), period, format!("constant:{c}"), "profile")
    }

    /// Wraps an arbitrary evaluator; periodicity is checked at sample points.
    pub fn custom<F>(name: &str, period: f64, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::build(ProfileKind::Custom(Arc::new(f)), period, name.to_string(), name)
    }

    fn build(kind: ProfileKind, period: f64, spec: String, field: &str) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::model("L", "period must be finite and positive"));
        }
        let mut profile = ExchangeProfile {
            kind,
            period,
            min_value: 0.0,
            max_value: 0.0,
            spec,
        };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..PROFILE_SAMPLES {
            let x = period * k as f64 / PROFILE_SAMPLES as f64;
            let value = profile.eval(x);
            if !value.is_finite() {
                return Err(Error::model(field, format!("non-finite sample at x = {x}")));
            }
            if value < 0.0 {
                return Err(Error::model(field, format!("negative sample {value} at x = {x}")));
            }
            let shifted = profile.eval(x + period);
            if (shifted - value).abs() > 1e-10 * (1.0 + value.abs()) {
                return Err(Error::model(field, format!("not {period}-periodic at x = {x}")));
            }
            lo = lo.min(value);
            hi = hi.max(value);
        }
        if hi <= 0.0 {
            return Err(Error::model(field, "identically zero on one period"));
        }
        profile.min_value = lo;
        profile.max_value = hi;
        Ok(profile)
    }

    /// Coefficient value at position `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let s = (x / self.period).rem_euclid(1.0);
        match &self.kind {
            ProfileKind::Constant(c) => *c,
            ProfileKind::Cosine { a, b } => a + b * (2.0 * PI * s).cos(),
            ProfileKind::Square { a, b, duty } => {
                if s < *duty {
                    *a
                } else {
                    *b
                }
            }
            ProfileKind::Table(v) => {
                let n = v.len();
                let pos = s * n as f64;
                let k = (pos.floor() as usize).min(n - 1);
                let w = pos - k as f64;
                (1.0 - w) * v[k] + w * v[(k + 1) % n]
            }
            ProfileKind::Custom(f) => f(x),
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Sampled infimum over one period.
    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    /// Sampled supremum over one period.
    pub fn max_value(&self) -> f64 {
        self.max_value
    }

    pub fn is_constant(&self) -> bool {
        self.max_value == self.min_value
    }

    pub fn spec(&self) -> &str {
        &self.spec
    }
}

fn parse_numbers(args: &str, field: &str) -> Result<Vec<f64>> {
    args.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::model(field, format!("cannot parse number `{}`", s.trim())))
                .and_then(|v| {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::model(field, "non-finite number"))
                    }
                })
        })
        .collect()
}

fn expect_len(v: &[f64], n: usize, field: &str, spec: &str) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(Error::model(
            field,
            format!("`{spec}` expects {n} argument(s), got {}", v.len()),
        ))
    }
}

#[derive(Clone)]
enum ReactionKind {
    Fisher { r: f64 },
    Power { r: f64, p: f64 },
    Linear { r: f64 },
    Zero,
    Custom(Evaluator),
}

/// Whether a reaction acts in the field (must vanish at 1) or on the road.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReactionRole {
    Field,
    Road,
}

/// A KPP-type reaction term, extended linearly to negative densities.
#[derive(Clone)]
pub struct Nonlinearity {
    kind: ReactionKind,
    derivative_at_zero: f64,
    lipschitz_bound: f64,
    spec: String,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("spec", &self.spec)
            .field("derivative_at_zero", &self.derivative_at_zero)
            .field("lipschitz_bound", &self.lipschitz_bound)
            .finish()
    }
}

impl Nonlinearity {
    /// Parses `fisher:r`, `power:r,p` (r·v·(1 − v^p)), `linear:r` or `zero`.
    pub fn parse(spec: &str, role: ReactionRole, field: &str) -> Result<Self> {
        let spec = spec.trim();
        let (name, args) = spec.split_once(':').unwrap_or((spec, ""));
        let v = parse_numbers(args, field)?;
        let kind = match name.trim() {
            "fisher" | "logistic" => match v.as_slice() {
                [] => ReactionKind::Fisher { r: 1.0 },
                [r] => ReactionKind::Fisher { r: *r },
                _ => return Err(Error::model(field, "fisher takes one rate")),
            },
            "power" => match v.as_slice() {
                [r, p] if *p > 0.0 => ReactionKind::Power { r: *r, p: *p },
                _ => return Err(Error::model(field, "power takes a rate and an exponent p > 0")),
            },
            "linear" => match v.as_slice() {
                [r] => ReactionKind::Linear { r: *r },
                _ => return Err(Error::model(field, "linear takes one rate")),
            },
            "zero" => ReactionKind::Zero,
            other => return Err(Error::model(field, format!("unknown reaction `{other}`"))),
        };
        Self::build(kind, spec.to_string(), role, field)
    }

    /// The logistic reaction `r v (1 − v)`.
    pub fn fisher(r: f64) -> Result<Self> {
        Self::build(
            ReactionKind::Fisher { r },
            format!("fisher:{r}"),
            ReactionRole::Field,
            "f",
        )
    }

    /// An arbitrary evaluator with a stated derivative at zero.
    pub fn custom<F>(name: &str, fprime0: f64, role: ReactionRole, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let mut n = Nonlinearity {
            kind: ReactionKind::Custom(Arc::new(f)),
            derivative_at_zero: fprime0,
            lipschitz_bound: 0.0,
            spec: name.to_string(),
        };
        n.validate(role, name)?;
        n.lipschitz_bound = n.lipschitz_on(WORKING_RANGE);
        Ok(n)
    }

    pub(crate) fn zero() -> Self {
        Nonlinearity {
            kind: ReactionKind::Zero,
            derivative_at_zero: 0.0,
            lipschitz_bound: 0.0,
            spec: "zero".into(),
        }
    }

    fn build(kind: ReactionKind, spec: String, role: ReactionRole, field: &str) -> Result<Self> {
        let derivative_at_zero = match &kind {
            ReactionKind::Fisher { r } | ReactionKind::Power { r, .. } | ReactionKind::Linear { r } => *r,
            ReactionKind::Zero => 0.0,
            ReactionKind::Custom(_) => unreachable!("custom reactions use Nonlinearity::custom"),
        };
        if !derivative_at_zero.is_finite() {
            return Err(Error::model(field, "non-finite rate"));
        }
        let mut n = Nonlinearity {
            kind,
            derivative_at_zero,
            lipschitz_bound: 0.0,
            spec,
        };
        n.validate(role, field)?;
        n.lipschitz_bound = n.lipschitz_on(WORKING_RANGE);
        Ok(n)
    }

    fn validate(&self, role: ReactionRole, field: &str) -> Result<()> {
        if self.eval(0.0) != 0.0 {
            return Err(Error::model(field, "reaction must vanish at 0"));
        }
        if role == ReactionRole::Field {
            if self.eval(1.0).abs() > 1e-12 {
                return Err(Error::model(field, "field reaction must vanish at 1"));
            }
            if self.derivative_at_zero <= 0.0 {
                return Err(Error::model(field, "f'(0) must be positive"));
            }
        }
        let mut previous = f64::INFINITY;
        for k in 1..=PROFILE_SAMPLES {
            let v = WORKING_RANGE * k as f64 / PROFILE_SAMPLES as f64;
            let ratio = self.eval(v) / v;
            if !ratio.is_finite() {
                return Err(Error::model(field, format!("non-finite reaction at v = {v}")));
            }
            if ratio > previous + 1e-12 * (1.0 + previous.abs()) {
                return Err(Error::model(field, format!("f(v)/v increases near v = {v}")));
            }
            previous = ratio;
        }
        if self.eval(1e-9) / 1e-9 > self.derivative_at_zero + 1e-6 * self.derivative_at_zero.abs() + 1e-12 {
            return Err(Error::model(field, "stated f'(0) is below f(v)/v near 0"));
        }
        Ok(())
    }

    /// Reaction rate at density `v`; negative densities use `f'(0)·v`.
    pub fn eval(&self, v: f64) -> f64 {
        if v < 0.0 {
            return self.derivative_at_zero * v;
        }
        match &self.kind {
            ReactionKind::Fisher { r } => r * v * (1.0 - v),
            ReactionKind::Power { r, p } => r * v * (1.0 - v.powf(*p)),
            ReactionKind::Linear { r } => r * v,
            ReactionKind::Zero => 0.0,
            ReactionKind::Custom(f) => f(v),
        }
    }

    pub fn derivative_at_zero(&self) -> f64 {
        self.derivative_at_zero
    }

    /// Lipschitz constant on `[0, WORKING_RANGE]` (and on the linear negative extension).
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    /// Lipschitz constant on `(-inf, vmax]`.
    pub fn lipschitz_on(&self, vmax: f64) -> f64 {
        let vmax = vmax.max(0.0);
        let base = self.derivative_at_zero.abs();
        match &self.kind {
            ReactionKind::Fisher { r } => base.max((r * (1.0 - 2.0 * vmax)).abs()),
            ReactionKind::Power { r, p } => base.max((r * (1.0 - (p + 1.0) * vmax.powf(*p))).abs()),
            ReactionKind::Linear { r } => r.abs(),
            ReactionKind::Zero => 0.0,
            ReactionKind::Custom(_) => {
                let n = PROFILE_SAMPLES;
                let h = vmax / n as f64;
                let mut lip = base;
                if h > 0.0 {
                    let mut prev = self.eval(0.0);
                    for k in 1..=n {
                        let cur = self.eval(k as f64 * h);
                        lip = lip.max((cur - prev).abs() / h);
                        prev = cur;
                    }
                }
                lip
            }
        }
    }

    pub fn spec(&self) -> &str {
        &self.spec
    }
}

/// Raw parameter record as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(rename = "D")]
    pub road_diffusion: f64,
    #[serde(rename = "d")]
    pub field_diffusion: f64,
    #[serde(rename = "L", default = "default_period")]
    pub period: f64,
    pub mu: String,
    pub nu: String,
    #[serde(default = "default_reaction")]
    pub f: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,
}

fn default_period() -> f64 {
    1.0
}

fn default_reaction() -> String {
    "fisher:1".into()
}

impl ModelSpec {
    /// Constant-coefficient record with the logistic field reaction.
    pub fn constant(road_diffusion: f64, field_diffusion: f64, mu: f64, nu: f64, rate: f64) -> Self {
        ModelSpec {
            road_diffusion,
            field_diffusion,
            period: 1.0,
            mu: format!("constant:{mu}"),
            nu: format!("constant:{nu}"),
            f: format!("fisher:{rate}"),
            g: None,
        }
    }
}

/// Validated physical parameters.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub road_diffusion: f64,
    pub field_diffusion: f64,
    pub period: f64,
    pub mu: ExchangeProfile,
    pub nu: ExchangeProfile,
    pub f: Nonlinearity,
    pub g: Option<Nonlinearity>,
}

/// Validates a raw record into [`ModelParams`].
pub fn make_model(raw: &ModelSpec) -> Result<ModelParams> {
    for (name, value) in [("D", raw.road_diffusion), ("d", raw.field_diffusion), ("L", raw.period)] {
        if !value.is_finite() {
            return Err(Error::model(name, "must be finite"));
        }
        if value <= 0.0 {
            return Err(Error::model(name, format!("must be positive, got {value}")));
        }
    }
    let mu = ExchangeProfile::parse(&raw.mu, raw.period, "mu")?;
    let nu = ExchangeProfile::parse(&raw.nu, raw.period, "nu")?;
    let f = Nonlinearity::parse(&raw.f, ReactionRole::Field, "f")?;
    let g = match &raw.g {
        Some(spec) => Some(Nonlinearity::parse(spec, ReactionRole::Road, "g")?),
        None => None,
    };
    Ok(ModelParams {
        road_diffusion: raw.road_diffusion,
        field_diffusion: raw.field_diffusion,
        period: raw.period,
        mu,
        nu,
        f,
        g,
    })
}

impl ModelParams {
    /// Assembles parameters from already validated parts.
    pub fn new(
        road_diffusion: f64,
        field_diffusion: f64,
        mu: ExchangeProfile,
        nu: ExchangeProfile,
        f: Nonlinearity,
        g: Option<Nonlinearity>,
    ) -> Result<Self> {
        if !(road_diffusion > 0.0 && road_diffusion.is_finite()) {
            return Err(Error::model("D", "must be positive"));
        }
        if !(field_diffusion > 0.0 && field_diffusion.is_finite()) {
            return Err(Error::model("d", "must be positive"));
        }
        if (mu.period() - nu.period()).abs() > 1e-14 * mu.period() {
            return Err(Error::model("nu", "mu and nu must share the period"));
        }
        if f.derivative_at_zero() <= 0.0 {
            return Err(Error::model("f", "f'(0) must be positive"));
        }
        Ok(ModelParams {
            road_diffusion,
            field_diffusion,
            period: mu.period(),
            mu,
            nu,
            f,
            g,
        })
    }

    /// Same model with `D` replaced.
    pub fn with_road_diffusion(&self, road_diffusion: f64) -> Self {
        ModelParams {
            road_diffusion,
            ..self.clone()
        }
    }

    /// Same geometry and exchange with both reactions switched off, for
    /// mass-conservation checks.
    pub fn with_reaction_disabled(&self) -> Self {
        ModelParams {
            f: Nonlinearity::zero(),
            g: None,
            ..self.clone()
        }
    }

    pub fn fprime0(&self) -> f64 {
        self.f.derivative_at_zero()
    }

    /// `g'(0)`, zero when there is no road reaction.
    pub fn gprime0(&self) -> f64 {
        self.g.as_ref().map_or(0.0, |g| g.derivative_at_zero())
    }

    pub fn mu0(&self) -> f64 {
        self.mu.min_value()
    }

    pub fn mu1(&self) -> f64 {
        self.mu.max_value()
    }

    pub fn nu0(&self) -> f64 {
        self.nu.min_value()
    }

    pub fn nu1(&self) -> f64 {
        self.nu.max_value()
    }

    pub fn has_constant_exchange(&self) -> bool {
        self.mu.is_constant() && self.nu.is_constant()
    }

    /// Road reaction at `u`, zero without `g`.
    pub fn road_reaction(&self, u: f64) -> f64 {
        self.g.as_ref().map_or(0.0, |g| g.eval(u))
    }
}

/// The field-only KPP speed `2 sqrt(d f'(0))`.
pub fn kpp_speed(d: f64, fprime0: f64) -> f64 {
    2.0 * (d * fprime0).sqrt()
}

/// Decay rate `sqrt(f'(0)/(D - d))` below which the road does not change the
/// dispersion relation; `None` when `D <= d`.
pub fn critical_alpha(road_diffusion: f64, field_diffusion: f64, fprime0: f64) -> Option<f64> {
    (road_diffusion > field_diffusion).then(|| (fprime0 / (road_diffusion - field_diffusion)).sqrt())
}

/// Shift `M_alpha` making the shifted cell operator invertible with a
/// positive inverse.
pub fn shift_constant_m(alpha: f64, params: &ModelParams) -> f64 {
    let d = params.field_diffusion;
    let field = d * (alpha * alpha + 1.0) + params.fprime0();
    let road = params.road_diffusion * alpha * alpha + 2.0 * params.mu1() * params.nu1() / d + params.gprime0();
    field.max(road)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn baseline() -> ModelParams {
        make_model(&ModelSpec::constant(1.0, 1.0, 1.0, 1.0, 1.0)).unwrap()
    }

    #[test]
    fn constant_profiles_cache_bounds() {
        let m = baseline();
        assert_eq!((m.mu0(), m.mu1(), m.nu0(), m.nu1()), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(m.fprime0(), 1.0);
    }

    #[test]
    fn cosine_profile_may_touch_zero() {
        let mut raw = ModelSpec::constant(1.0, 1.0, 1.0, 1.0, 1.0);
        raw.mu = "cosine:1,1".into();
        let m = make_model(&raw).unwrap();
        assert!(m.mu0().abs() < 1e-12);
        assert!((m.mu1() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_records() {
        let mut raw = ModelSpec::constant(1.0, 1.0, 1.0, 1.0, 1.0);
        raw.mu = "constant:0".into();
        assert!(matches!(make_model(&raw), Err(Error::InvalidModel { field, .. }) if field == "mu"));
        let mut raw = ModelSpec::constant(1.0, -1.0, 1.0, 1.0, 1.0);
        assert!(matches!(make_model(&raw), Err(Error::InvalidModel { field, .. }) if field == "d"));
        raw.field_diffusion = 1.0;
        raw.road_diffusion = 0.0;
        assert!(make_model(&raw).is_err());
        raw.road_diffusion = 1.0;
        raw.nu = "cosine:0.5,1".into();
        assert!(make_model(&raw).is_err());
        raw.nu = "constant:1".into();
        raw.f = "linear:1".into();
        assert!(make_model(&raw).is_err());
        raw.f = "fisher:0".into();
        assert!(make_model(&raw).is_err());
    }

    #[test]
    fn square_and_table_profiles() {
        let sq = ExchangeProfile::parse("square:2,0,0.5", 1.0, "mu").unwrap();
        assert_eq!(sq.eval(0.25), 2.0);
        assert_eq!(sq.eval(0.75), 0.0);
        assert_eq!(sq.eval(1.25), 2.0);
        let t = ExchangeProfile::parse("table:[0,2]", 2.0, "mu").unwrap();
        assert!((t.eval(1.0) - 2.0).abs() < 1e-15);
        assert!((t.eval(0.5) - 1.0).abs() < 1e-15);
        assert!((t.eval(4.0) - 0.0).abs() < 1e-15);
        assert_eq!(t.max_value(), 2.0);
    }

    #[test]
    fn custom_profile_must_be_periodic() {
        assert!(ExchangeProfile::custom("ramp", 1.0, |x| 1.0 + x.abs()).is_err());
        assert!(ExchangeProfile::custom("wave", 1.0, |x| 1.0 + (2.0 * PI * x).sin().powi(2)).is_ok());
    }

    #[test]
    fn closed_forms() {
        assert_eq!(kpp_speed(1.0, 1.0), 2.0);
        assert_eq!(kpp_speed(4.0, 1.0), 4.0);
        assert_eq!(kpp_speed(1.0, 0.25), 1.0);
        assert_eq!(critical_alpha(2.0, 1.0, 1.0), Some(1.0));
        assert_eq!(critical_alpha(1.0, 1.0, 1.0), None);
        assert_eq!(critical_alpha(5.0, 1.0, 1.0), Some(0.5));
    }

    #[test]
    fn shift_constant_examples() {
        let m = baseline();
        assert_eq!(shift_constant_m(1.0, &m), 3.0);
        assert_eq!(shift_constant_m(0.0, &m), 2.0);
        let mut raw = ModelSpec::constant(4.0, 1.0, 2.0, 1.0, 1.0);
        raw.mu = "constant:2".into();
        let m = make_model(&raw).unwrap();
        assert_eq!(shift_constant_m(2.0, &m), 20.0);
    }

    #[test]
    fn road_reaction_enters_shift() {
        let mut raw = ModelSpec::constant(1.0, 1.0, 1.0, 1.0, 1.0);
        raw.g = Some("fisher:0.5".into());
        let m = make_model(&raw).unwrap();
        assert_eq!(m.gprime0(), 0.5);
        assert_eq!(shift_constant_m(1.0, &m), 3.5);
    }

    #[test]
    fn negative_extension_is_linear() {
        let f = Nonlinearity::fisher(2.0).unwrap();
        assert_eq!(f.eval(-0.5), -1.0);
        assert_eq!(f.lipschitz_bound(), 6.0);
        assert_eq!(f.lipschitz_on(0.5), 2.0);
    }

    #[test]
    fn power_reaction_is_kpp() {
        let f = Nonlinearity::parse("power:1,2", ReactionRole::Field, "f").unwrap();
        assert!((f.eval(0.5) - 0.375).abs() < 1e-15);
        assert!(Nonlinearity::parse("power:1,0", ReactionRole::Field, "f").is_err());
    }

    #[test]
    fn non_kpp_custom_reaction_rejected() {
        // Allee-type reaction: f(v)/v increases near 0.
        let allee = |v: f64| v * v * (1.0 - v);
        assert!(Nonlinearity::custom("allee", 1.0, ReactionRole::Field, allee).is_err());
    }

    #[test]
    fn spec_roundtrips_through_json() {
        let raw = ModelSpec::constant(2.0, 1.0, 1.0, 1.0, 1.0);
        let text = serde_json::to_string(&raw).unwrap();
        assert!(text.contains("\"D\":2.0"));
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, raw);
    }
}
