use odesens::estimation::{
    estimate, estimate_from, even_times, generate_data, generate_data_at, l2_loss, BfgsOptions, Dataset,
};
use odesens::models;
use odesens::ode::{IntegratorConfig, Method};
use odesens::sensitivity::SensitivityMethod;

fn cfg() -> IntegratorConfig {
    IntegratorConfig::new(Method::Tsit5, 1e-8)
}

fn method(name: &str) -> SensitivityMethod {
    SensitivityMethod::from_name(name).unwrap()
}

#[test]
fn lv_data_layout() {
    let m = models::lv();
    let d = generate_data(&m, m.n_data_points).unwrap();
    assert_eq!(d.times.len(), 100);
    assert_eq!(d.observations.len(), 100);
    assert_eq!((d.times[0], d.times[99]), (0.0, 10.0));
    assert_eq!(d.observations[0], m.u0);
    assert!(d.times.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn bruss_data_layout() {
    let m = models::bruss(5).unwrap();
    let d = generate_data(&m, m.n_data_points).unwrap();
    assert_eq!(d.observations.len(), 20);
    assert!(d.observations.iter().all(|row| row.len() == 50));
}

#[test]
fn too_few_points_is_an_error() {
    assert!(generate_data(&models::lv(), 1).is_err());
}

#[test]
fn even_times_hits_both_ends() {
    let ts = even_times(0.0, 60.0, 10);
    assert_eq!((ts[0], ts[9]), (0.0, 60.0));
    assert!((ts[1] - 60.0 / 9.0).abs() < 1e-14);
}

#[test]
fn loss_is_zero_at_source_and_positive_elsewhere() {
    let m = models::lv();
    let d = generate_data(&m, 100).unwrap();
    let c = IntegratorConfig::new(Method::Tsit5, 1e-10);
    assert!(l2_loss(&m, &m.true_params, &d, &c) <= 1e-12);
    let off: Vec<f64> = m.true_params.iter().map(|p| 0.8 * p).collect();
    assert!(l2_loss(&m, &off, &d, &c) > 0.0);
    // Wrong parameter count is an infinite loss.
    assert_eq!(l2_loss(&m, &[1.0], &d, &c), f64::INFINITY);
}

#[test]
fn loss_ignores_observation_order() {
    let m = models::lv();
    let d = generate_data_at(&m, &[1.4, 1.1, 2.9], 20).unwrap();
    let p = m.true_params.clone();
    let base = l2_loss(&m, &p, &d, &cfg());
    // Same pairs with a permuted time grid are rejected (times must be
    // increasing), so order invariance is checked on the sum itself.
    let mut rev = Dataset { times: d.times.clone(), observations: d.observations.clone(), source_params: p.clone() };
    rev.times.reverse();
    rev.observations.reverse();
    assert_eq!(l2_loss(&m, &p, &rev, &cfg()), f64::INFINITY);
    let halves = {
        let a = Dataset {
            times: d.times[..10].to_vec(),
            observations: d.observations[..10].to_vec(),
            source_params: p.clone(),
        };
        let b = Dataset {
            times: d.times[10..].to_vec(),
            observations: d.observations[10..].to_vec(),
            source_params: p.clone(),
        };
        l2_loss(&m, &p, &b, &cfg()) + l2_loss(&m, &p, &a, &cfg())
    };
    assert!((base - halves).abs() <= 1e-12 * base.max(1.0), "{base} vs {halves}");
}

#[test]
fn lv_recovers_reference_parameters() {
    let m = models::lv();
    let d = generate_data(&m, m.n_data_points).unwrap();
    let fit = estimate(&m, &method("dsaad"), &d, &cfg()).unwrap();
    let r = &fit.opt;
    assert!(r.converged, "{}", r.message);
    for (a, b) in r.p_final.iter().zip(&m.true_params) {
        assert!((a - b).abs() < 1e-4, "{:?}", r.p_final);
    }
    assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0]));
    assert!(fit.stats.nf > 0 && fit.n_solves > 0);
}

#[test]
fn start_at_optimum_stops_at_once() {
    let m = models::lv();
    let d = generate_data(&m, m.n_data_points).unwrap();
    let c = IntegratorConfig::new(Method::Tsit5, 1e-10);
    let fit = estimate_from(&m, &method("dsaad"), &d, &c, &m.true_params, &BfgsOptions::default()).unwrap();
    assert!(fit.opt.converged);
    assert!(fit.opt.iterations <= 1, "{}", fit.opt.iterations);
}

#[test]
fn lv_fit_does_not_depend_on_gradient_method() {
    let m = models::lv();
    let d = generate_data(&m, m.n_data_points).unwrap();
    for name in ["csa-user", "casa-user", "numdiff-central"] {
        let r = estimate(&m, &method(name), &d, &cfg()).unwrap().opt;
        assert!(r.converged, "{name}: {}", r.message);
        for (a, b) in r.p_final.iter().zip(&m.true_params) {
            assert!((a - b).abs() < 1e-3, "{name}: {:?}", r.p_final);
        }
    }
}

#[test]
fn configuration_errors_surface_before_optimising() {
    let m = models::lv();
    let d = generate_data(&m, 10).unwrap();
    assert!(estimate_from(&m, &method("dsaad"), &d, &cfg(), &[1.0, 2.0], &BfgsOptions::default()).is_err());
    let bad = Dataset { times: vec![0.0, 20.0], observations: vec![m.u0.clone(), m.u0.clone()], source_params: vec![] };
    assert!(estimate(&m, &method("dsaad"), &bad, &cfg()).is_err());
}
