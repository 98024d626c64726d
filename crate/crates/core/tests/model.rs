use proptest::prelude::*;
use roadfield_core::model::{
    critical_alpha, kpp_speed, make_model, shift_constant_m, ExchangeProfile, ModelSpec, Nonlinearity, ReactionRole,
};
use roadfield_core::Error;

fn field_of(e: Error) -> String {
    match e {
        Error::InvalidModel { field, .. } => field,
        other => panic!("expected a model error, got {other:?}"),
    }
}

#[test]
fn spec_json_with_periodic_exchange() {
    let spec: ModelSpec = serde_json::from_str(
        r#"{"D": 2.5, "d": 1, "L": 2, "mu": "cosine:1,1", "nu": "square:2,0.5,0.25", "f": "fisher:1.5", "g": "linear:0.3"}"#,
    )
    .unwrap();
    let m = make_model(&spec).unwrap();
    assert_eq!(m.period, 2.0);
    assert_eq!((m.mu0(), m.mu1()), (0.0, 2.0));
    assert_eq!((m.nu0(), m.nu1()), (0.5, 2.0));
    assert_eq!(m.fprime0(), 1.5);
    assert_eq!(m.gprime0(), 0.3);
    assert!(!m.has_constant_exchange());
    assert!((m.mu.eval(1.0) - 0.0).abs() < 1e-12);
    assert_eq!(m.nu.eval(0.4), 2.0);
    assert_eq!(m.nu.eval(0.6), 0.5);
}

#[test]
fn unknown_keys_are_rejected() {
    let err = serde_json::from_str::<ModelSpec>(r#"{"D": 1, "d": 1, "mu": "constant:1", "nu": "constant:1", "dd": 3}"#);
    assert!(err.is_err());
}

#[test]
fn diagnostics_name_the_offending_field() {
    let mut spec = ModelSpec::constant(1.0, -1.0, 1.0, 1.0, 1.0);
    assert_eq!(field_of(make_model(&spec).unwrap_err()), "d");
    spec = ModelSpec::constant(0.0, 1.0, 1.0, 1.0, 1.0);
    assert_eq!(field_of(make_model(&spec).unwrap_err()), "D");
    spec = ModelSpec::constant(1.0, 1.0, 1.0, 1.0, 1.0);
    spec.nu = "constant:0".into();
    assert_eq!(field_of(make_model(&spec).unwrap_err()), "nu");
    spec = ModelSpec::constant(1.0, 1.0, 1.0, 1.0, 1.0);
    spec.mu = "cosine:1,2".into();
    assert_eq!(field_of(make_model(&spec).unwrap_err()), "mu");
    spec = ModelSpec::constant(1.0, 1.0, 1.0, 1.0, 1.0);
    spec.f = "linear:1".into();
    assert_eq!(field_of(make_model(&spec).unwrap_err()), "f");
}

#[test]
fn custom_reactions_validated() {
    let bistable = Nonlinearity::custom("allee", 0.1, ReactionRole::Field, |v| {
        v * (1.0 - v) * (v - 0.1).max(0.0) + 0.0
    });
    assert!(bistable.is_err());
    let ok = Nonlinearity::custom("sqrt-logistic", 2.0, ReactionRole::Field, |v: f64| {
        2.0 * v * (1.0 - v.max(0.0).sqrt())
    });
    assert!(ok.is_ok());
    let g = Nonlinearity::parse("linear:-0.5", ReactionRole::Road, "g").unwrap();
    assert_eq!(g.derivative_at_zero(), -0.5);
}

#[test]
fn critical_alpha_only_above_d() {
    assert_eq!(critical_alpha(1.0, 1.0, 1.0), None);
    assert_eq!(critical_alpha(5.0, 1.0, 1.0), Some(0.5));
    assert_eq!(kpp_speed(1.0, 1.0), 2.0);
}

proptest! {
    #[test]
    fn constant_profile_is_flat(c in 0.01f64..10.0, x in -50.0f64..50.0, period in 0.1f64..5.0) {
        let p = ExchangeProfile::parse(&format!("constant:{c}"), period, "mu").unwrap();
        prop_assert_eq!(p.eval(x), c);
        prop_assert!(p.is_constant());
        prop_assert_eq!((p.min_value(), p.max_value()), (c, c));
    }

    #[test]
    fn profiles_are_periodic(a in 0.5f64..3.0, frac in 0.0f64..1.0, x in -20.0f64..20.0, k in -5i32..5, period in 0.2f64..4.0) {
        let spec = format!("cosine:{a},{}", a * frac);
        let p = ExchangeProfile::parse(&spec, period, "mu").unwrap();
        let y = x + k as f64 * period;
        prop_assert!((p.eval(x) - p.eval(y)).abs() < 1e-9);
        prop_assert!(p.eval(x) >= p.min_value() - 1e-12 && p.eval(x) <= p.max_value() + 1e-12);
        let q = ExchangeProfile::parse(&format!("table:[{a},{},{}]", 2.0 * a, a * frac), period, "nu").unwrap();
        prop_assert!((q.eval(x) - q.eval(y)).abs() < 1e-9);
    }

    #[test]
    fn negative_profiles_rejected(a in 0.1f64..3.0, excess in 0.01f64..2.0) {
        let spec = format!("cosine:{a},{}", a + excess);
        prop_assert!(ExchangeProfile::parse(&spec, 1.0, "mu").is_err());
    }

    #[test]
    fn fisher_and_power_are_kpp(r in 0.1f64..5.0, p in 0.2f64..4.0, v in 0.0f64..2.0) {
        let f = Nonlinearity::parse(&format!("power:{r},{p}"), ReactionRole::Field, "f").unwrap();
        prop_assert_eq!(f.derivative_at_zero(), r);
        prop_assert!(f.eval(v) <= r * v + 1e-12);
        prop_assert!(f.eval(1.0).abs() < 1e-12);
        let lip = f.lipschitz_bound();
        let dv = 1e-6;
        prop_assert!(((f.eval(v + dv) - f.eval(v)) / dv).abs() <= lip * (1.0 + 1e-4) + 1e-6);
    }

    #[test]
    fn negative_densities_use_the_linearization(r in 0.1f64..5.0, v in -10.0f64..-1e-6) {
        let f = Nonlinearity::fisher(r).unwrap();
        prop_assert_eq!(f.eval(v), r * v);
    }

    #[test]
    fn shift_dominates_both_blocks(big_d in 0.1f64..50.0, d in 0.1f64..5.0, mu in 0.1f64..3.0, nu in 0.1f64..3.0, alpha in 0.0f64..3.0) {
        let m = make_model(&ModelSpec::constant(big_d, d, mu, nu, 1.0)).unwrap();
        let s = shift_constant_m(alpha, &m);
        prop_assert!(s >= d * alpha * alpha + 1.0);
        prop_assert!(s >= big_d * alpha * alpha);
    }

    #[test]
    fn critical_alpha_solves_its_equation(big_d in 1.01f64..100.0, d in 0.1f64..1.0, fp in 0.1f64..3.0) {
        let a = critical_alpha(big_d, d, fp).unwrap();
        prop_assert!((big_d * a * a - (d * a * a + fp)).abs() < 1e-10 * big_d);
    }
}
