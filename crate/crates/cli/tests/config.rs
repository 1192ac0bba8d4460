use irsrob_cli::{Axis, ExperimentConfig, Figure};
use irsrob_core::Method;

#[test]
fn empty_document_gives_defaults() {
    let cfg = ExperimentConfig::from_json("{}").unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    assert_eq!((cfg.n, cfg.m, cfg.k), (6, 6, 2));
    assert_eq!(cfg.methods.len(), 4);
    assert_eq!(cfg.noise_dbm, -80.0);
    assert_eq!(cfg.rho, 0.05);
    assert_eq!(cfg.tolerance, 1e-4);
    assert_eq!(cfg.points().len(), 1);
}

#[test]
fn convergence_preset_fills_everything() {
    let cfg = ExperimentConfig::from_json(r#"{"figure": "convergence"}"#).unwrap();
    assert_eq!(cfg.figure, Some(Figure::Convergence));
    assert_eq!((cfg.n, cfg.m, cfg.k), (6, 6, 3));
    assert_eq!((cfg.delta_g, cfg.delta_h), (0.01, 0.02));
    assert!(cfg.per_iteration);
    assert_eq!(cfg.methods, vec![Method::PcuBounded, Method::FcuBounded, Method::PcuStat, Method::FcuStat]);
}

#[test]
fn user_fields_override_the_preset() {
    let cfg = ExperimentConfig::from_json(r#"{"figure": "convergence", "k": 2, "n_instances": 3}"#).unwrap();
    assert_eq!(cfg.k, 2);
    assert_eq!(cfg.n_instances, 3);
    assert_eq!(cfg.n, 6);
}

#[test]
fn user_grid_replaces_the_preset_grid() {
    let cfg = ExperimentConfig::from_json(r#"{"figure": "power-vs-m", "grid": {"m": [4, 8]}}"#).unwrap();
    assert_eq!(cfg.grid.len(), 1);
    assert_eq!(cfg.grid[&Axis::M], vec![4.0, 8.0]);
    assert_eq!(cfg.delta_h, 0.0);
    assert!(cfg.post_filter);
}

#[test]
fn grid_points_are_a_product_in_axis_order() {
    let cfg = ExperimentConfig::from_json(r#"{"grid": {"rate": [1, 2], "k": [2, 3]}}"#).unwrap();
    let pts = cfg.points();
    assert_eq!(pts.len(), 4);
    // k sorts before rate, rate varies fastest
    let got: Vec<(usize, f64)> = pts.iter().map(|p| (p.k, p.rate)).collect();
    assert_eq!(got, vec![(2, 1.0), (2, 2.0), (3, 1.0), (3, 2.0)]);
}

#[test]
fn bad_documents_are_rejected() {
    for text in [
        "[1, 2]",
        "not json",
        r#"{"typo_field": 1}"#,
        r#"{"figure": "fig9"}"#,
        r#"{"rho": 1.5}"#,
        r#"{"methods": []}"#,
        r#"{"n_instances": 0}"#,
        r#"{"grid": {"m": []}}"#,
        r#"{"grid": {"delta_g": [1.2]}}"#,
        r#"{"grid": {"n": [2.5]}}"#,
        r#"{"k": 0}"#,
    ] {
        assert!(ExperimentConfig::from_json(text).is_err(), "{text}");
    }
}

#[test]
fn json_round_trip() {
    let cfg = ExperimentConfig::from_json(r#"{"figure": "power-vs-rate", "seed": 9}"#).unwrap();
    let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn ao_options_follow_the_config() {
    let cfg = ExperimentConfig::from_json(r#"{"tolerance": 1e-3, "max_iter": 7}"#).unwrap();
    let o = cfg.ao_options();
    assert_eq!((o.tol, o.max_iter), (1e-3, 7));
}
