use rfcd::eval::{Method, MethodSettings};
use rfcd_cli::config::{RegionConfig, RuleConfig, RunConfig, ScenarioName, Snr, Tau, TauRule};

fn config_error(json: &str) -> String {
    let err = RunConfig::from_json(json).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
    err.to_string()
}

#[test]
fn empty_config_gives_library_defaults() {
    let cfg = RunConfig::from_json("{}").unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.method_settings(), MethodSettings::default());
    assert_eq!(cfg.methods(), Method::ALL.to_vec());
    assert_eq!(cfg.cva.tau, Tau::Rule(TauRule::Otsu));
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let msg = config_error(r#"{"fusion": {"lambda": 2.0, "lamda": 3.0}}"#);
    assert!(
        msg.contains("fusion.lamda") || msg.contains("fusion:"),
        "{msg}"
    );
    assert!(msg.contains("lamda"), "{msg}");
    let msg = config_error(
        r#"{"simulation": {"masks": [{"kind": "square", "row": 1, "col": 1, "size": 2, "x": 0}]}}"#,
    );
    assert!(msg.contains("simulation.masks[0]"), "{msg}");
    let msg = config_error(r#"{"bogus": 1}"#);
    assert!(msg.contains("bogus"), "{msg}");
}

#[test]
fn type_errors_carry_the_key_path() {
    let msg = config_error(r#"{"outer": {"iters": "ten"}}"#);
    assert!(msg.contains("outer.iters"), "{msg}");
}

#[test]
fn validation_errors_name_the_key() {
    for (json, key) in [
        (r#"{"sensors": {"kernel_size": 4}}"#, "sensors.kernel_size"),
        (r#"{"fusion": {"lambda": -1}}"#, "fusion.lambda"),
        (r#"{"fusion": {"tol": 2}}"#, "fusion.tol"),
        (r#"{"cva": {"tau": -0.5}}"#, "cva.tau"),
        (
            r#"{"evaluation": {"methods": ["RF", "XX"]}}"#,
            "evaluation.methods[1]",
        ),
        (
            r#"{"simulation": {"rule": {"kind": "rescale", "i": 0, "factor": 0}}}"#,
            "simulation.rule.factor",
        ),
    ] {
        let msg = config_error(json);
        assert!(msg.contains(key), "{json}: {msg}");
    }
}

#[test]
fn threshold_and_snr_forms() {
    let cfg = RunConfig::from_json(r#"{"cva": {"tau": "roc"}, "simulation": {"snr_db": "inf"}}"#)
        .unwrap();
    assert_eq!(cfg.cva.tau, Tau::Rule(TauRule::Roc));
    assert_eq!(
        cfg.simulation.snr_db,
        Snr::Infinite(rfcd_cli::config::Infinite::Inf)
    );
    assert!(cfg.simulation_settings().noiseless());
    let cfg =
        RunConfig::from_json(r#"{"cva": {"tau": 0.25}, "simulation": {"snr_db": 25}}"#).unwrap();
    assert_eq!(cfg.cva.tau, Tau::Fixed(0.25));
    assert_eq!(cfg.simulation_settings().snr_db, 25.0);
    config_error(r#"{"cva": {"tau": "median"}}"#);
}

#[test]
fn parse_serialize_parse_is_identical() {
    let text = r#"{
        "sensors": {"ratio": 4, "kernel_size": 3, "kernel_sigma": 0.8},
        "fusion": {"lambda": 1.5, "tol": 1e-9, "iters": 7, "interpolation": "nearest"},
        "correction": {"gamma": 0.3, "steps": 20, "tol": 0.0, "policy": "backtracking"},
        "outer": {"iters": 4, "tol": 1e-6},
        "cva": {"radius": 1, "tau": 0.125},
        "simulation": {
            "scene": {"rows": 32, "cols": 24, "bands": 8, "seed": 11},
            "scenario": "ms", "snr_db": "inf", "epoch": "tj", "seed": 99,
            "masks": [{"kind": "pixel", "row": 1, "col": 2},
                      {"kind": "rect", "row": 3, "col": 4, "height": 2, "width": 5},
                      {"kind": "triangle", "row": 10, "col": 10, "size": 4}],
            "rule": {"kind": "swap", "i": 0, "j": 2}
        },
        "evaluation": {"methods": ["RF", "wc"]},
        "benchmark": {"n_masks": 3},
        "paths": {"out": "/tmp/out", "input": "data"}
    }"#;
    let a = RunConfig::from_json(text).unwrap();
    let b = RunConfig::from_json(&a.to_json()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.simulation.scenario, ScenarioName::Ms);
    assert_eq!(a.simulation.rule, RuleConfig::Swap { i: 0, j: 2 });
    assert_eq!(
        a.simulation.masks[1],
        RegionConfig::Rect {
            row: 3,
            col: 4,
            height: 2,
            width: 5
        }
    );
    assert_eq!(a.methods(), vec![Method::Rf, Method::Wc]);
    let s = a.method_settings();
    assert_eq!(
        (
            s.weights.lambda,
            s.weights.gamma,
            s.outer_iters,
            s.smoothing_radius
        ),
        (1.5, 0.3, 4, 1)
    );
    assert_eq!(
        (
            s.solver.fusion_tol,
            s.solver.fusion_max_iters,
            s.solver.correction_steps
        ),
        (1e-9, 7, 20)
    );
    let d = RunConfig::default();
    assert_eq!(RunConfig::from_json(&d.to_json()).unwrap(), d);
}

#[test]
fn default_mask_fits_the_scene() {
    let cfg = RunConfig::default();
    let shape = rfcd::GridShape::new(40, 40).unwrap();
    let mask = rfcd::sim::rasterize_mask(&cfg.mask_spec(shape)).unwrap();
    assert_eq!(mask.count(), 25);
}
