use irsrob_core::channel_model::{
    generate_scenario, EstimatedChannels, ErrorKind, ErrorModel, Geometry, QosSpec, SystemDims,
};
use irsrob_core::validation::{
    feasibility_rate, mc_outage, wilson_halfwidth, wilson_interval, worst_case_rate, GridPoint, SearchBudget,
    ValidationReport, Z95,
};
use irsrob_core::worst_case::nominal_precoder;
use irsrob_core::{AoOptions, BeamformingSolution, CMat, Method, ScaledProblem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instance() -> (EstimatedChannels, QosSpec, BeamformingSolution) {
    let dims = SystemDims::new(3, 3, 2).unwrap();
    let est = EstimatedChannels::from(&generate_scenario(dims, &Geometry::default(), 2).unwrap());
    let qos = QosSpec::uniform(2, 1.0, -80.0, 0.05);
    let prob = ScaledProblem::new(&est, &ErrorModel::exact(ErrorKind::Bounded, 2), &qos);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let e = irsrob_core::linalg::random_phases(&mut rng, 3);
    let nom = nominal_precoder(&prob, &e, 1e-9).unwrap();
    // a little headroom over the nominal optimum
    let f = prob.to_physical(&nom.f) * num_complex::Complex64::from(1.01f64.sqrt());
    let power = f.norm_squared();
    (est, qos, BeamformingSolution { f, e, power })
}

#[test]
fn wilson_interval_basics() {
    let (lo, hi) = wilson_interval(50, 100, Z95);
    assert!(lo < 0.5 && hi > 0.5);
    assert!(((lo + hi) / 2.0 - 0.5).abs() < 1e-12);
    let (lo, hi) = wilson_interval(0, 100, Z95);
    assert_eq!(lo, 0.0);
    assert!(hi > 0.0 && hi < 0.05);
    assert!(wilson_halfwidth(10, 10_000, Z95) < wilson_halfwidth(10, 100, Z95));
}

#[test]
fn outage_of_exact_feasible_design_is_zero() {
    let (est, qos, sol) = instance();
    let model = ErrorModel::exact(ErrorKind::Statistical, 2);
    let out = mc_outage(&sol, &est, &model, &qos, 1000, 3).unwrap();
    assert!(out.outage.iter().all(|&p| p == 0.0));
}

#[test]
fn outage_of_zero_precoder_is_one() {
    let (est, qos, mut sol) = instance();
    sol.f = CMat::zeros(3, 2);
    let model = ErrorModel::from_estimates(ErrorKind::Statistical, &est, 0.05, 0.0, 0.05).unwrap();
    let out = mc_outage(&sol, &est, &model, &qos, 500, 3).unwrap();
    assert!(out.outage.iter().all(|&p| p == 1.0));
}

#[test]
fn checks_refuse_the_wrong_error_model() {
    let (est, qos, sol) = instance();
    let bounded = ErrorModel::exact(ErrorKind::Bounded, 2);
    let stat = ErrorModel::exact(ErrorKind::Statistical, 2);
    assert!(mc_outage(&sol, &est, &bounded, &qos, 10, 0).is_err());
    assert!(worst_case_rate(&sol, &est, &stat, &qos, &SearchBudget::default(), 0).is_err());
}

#[test]
fn zero_radius_search_returns_nominal_rate() {
    let (est, qos, sol) = instance();
    let model = ErrorModel::exact(ErrorKind::Bounded, 2);
    let rates = worst_case_rate(&sol, &est, &model, &qos, &SearchBudget::default(), 0).unwrap();
    for (k, r) in rates.iter().enumerate() {
        let want = irsrob_core::channel_model::achievable_rate(
            &sol.f,
            &sol.e,
            &est.direct_est[k],
            &est.cascaded_est[k],
            qos.noise_power[k],
            k,
        )
        .unwrap();
        assert_eq!(*r, want);
    }
}

#[test]
fn search_refutes_a_starved_design() {
    let (est, qos, mut sol) = instance();
    sol.f *= num_complex::Complex64::from(0.5f64.sqrt());
    let model = ErrorModel::from_estimates(ErrorKind::Bounded, &est, 0.01, 0.0, 0.05).unwrap();
    let budget = SearchBudget { starts: 20, steps: 20, ..Default::default() };
    let rates = worst_case_rate(&sol, &est, &model, &qos, &budget, 1).unwrap();
    assert!(rates.iter().any(|&r| r < 1.0));
}

#[test]
fn search_is_reproducible() {
    let (est, qos, sol) = instance();
    let model = ErrorModel::from_estimates(ErrorKind::Bounded, &est, 0.01, 0.0, 0.05).unwrap();
    let budget = SearchBudget { starts: 5, steps: 10, ..Default::default() };
    let a = worst_case_rate(&sol, &est, &model, &qos, &budget, 7).unwrap();
    let b = worst_case_rate(&sol, &est, &model, &qos, &budget, 7).unwrap();
    assert_eq!(a, b);
    let stat = ErrorModel::from_estimates(ErrorKind::Statistical, &est, 0.01, 0.0, 0.05).unwrap();
    let x = mc_outage(&sol, &est, &stat, &qos, 2000, 4).unwrap();
    let y = mc_outage(&sol, &est, &stat, &qos, 2000, 4).unwrap();
    assert_eq!(x, y);
    let rep = ValidationReport::from_parts(Some(&x), Some(&a), &budget);
    assert_eq!(rep.search_budget, 50);
    let back: ValidationReport = serde_json::from_str(&rep.to_json()).unwrap();
    assert_eq!(back, rep);
    assert_eq!(rep.to_csv().lines().count(), 3);
}

#[test]
fn nominal_grid_is_always_feasible() {
    let point = GridPoint {
        dims: SystemDims::new(3, 3, 2).unwrap(),
        geometry: Geometry::default(),
        delta_g: 0.0,
        delta_h: 0.0,
        rate: 1.0,
        noise_dbm: -80.0,
        rho: 0.05,
    };
    let rate = feasibility_rate(Method::PcuStat, &[point], 20, 100, &AoOptions::default()).unwrap();
    assert_eq!(rate, vec![1.0]);
}
