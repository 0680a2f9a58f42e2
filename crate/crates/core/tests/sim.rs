mod common;

use common::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use rfcd::degradation::DecimationGrid;
use rfcd::robust::ChangeMask;
use rfcd::sim::{
    apply_change_rule, benchmark_suite, decimate_mask, mix, pan_band_count, rasterize_mask,
    simulate_pair, synthetic_reference, unmix, ChangeEpoch, ChangeRule, EndmemberModel, MaskSpec,
    PairPlan, Region, Scenario, SceneSettings, SimulationSettings, Simulator,
};
use rfcd::{GridShape, MultiBandImage};

fn shape(r: usize, c: usize) -> GridShape {
    GridShape::new(r, c).unwrap()
}

/// Random simplex columns; the first `r` pixels are pure.
fn random_model(bands: usize, r: usize, grid: GridShape, seed: u64) -> EndmemberModel {
    let mut g = rng(seed);
    let n = grid.pixel_count();
    let m = Array2::from_shape_fn((bands, r), |_| g.random_range(0.05..1.0));
    let mut a = Array2::zeros((r, n));
    for p in 0..n {
        if p < r {
            a[(p, p)] = 1.0;
            continue;
        }
        let w: Vec<f64> = (0..r)
            .map(|_| g.random_range(0.0f64..1.0).powi(2))
            .collect();
        let s: f64 = w.iter().sum();
        for k in 0..r {
            a[(k, p)] = w[k] / s;
        }
    }
    EndmemberModel::new(m, a, grid).unwrap()
}

fn small_scene() -> MultiBandImage {
    synthetic_reference(
        &SceneSettings {
            rows: 30,
            cols: 30,
            bands: 12,
            ..SceneSettings::default()
        },
        2,
    )
    .unwrap()
    .image
}

#[test]
fn exact_mixture_is_recovered() {
    for seed in 0..3 {
        let model = random_model(10, 4, shape(12, 12), seed);
        let x = mix(&model);
        let u = unmix(&x, 4, 200, seed).unwrap();
        assert!(
            u.relative_error <= 1e-3,
            "seed {seed}: {}",
            u.relative_error
        );
        let back = mix(&u.model);
        assert!(back.subtract(&x).unwrap().frobenius_norm() / x.frobenius_norm() <= 1e-3);
    }
}

#[test]
fn constant_image_needs_one_endmember() {
    let x = MultiBandImage::filled(6, shape(5, 5), 0.4);
    let u = unmix(&x, 2, 20, 0).unwrap();
    assert!(u.relative_error <= 1e-6);
    assert!(unmix(&x, 7, 20, 0).is_err());
    assert!(unmix(&x, 1, 20, 0).is_err());
}

#[test]
fn unmixing_is_deterministic_and_consistent_on_the_test_scene() {
    let x = small_scene();
    let a = unmix(&x, 5, 50, 9).unwrap();
    let b = unmix(&x, 5, 50, 9).unwrap();
    assert_eq!(a.model, b.model);
    assert!(a.relative_error <= 0.05, "{}", a.relative_error);
}

#[test]
fn mix_matches_product_loop() {
    let model = random_model(7, 3, shape(4, 5), 4);
    let x = mix(&model);
    let (m, a) = (model.endmembers(), model.abundances());
    for b in 0..7 {
        for p in 0..20 {
            let want: f64 = (0..3).map(|k| m[(b, k)] * a[(k, p)]).sum();
            assert!((x.get(b, p / 5, p % 5) - want).abs() <= 1e-12);
        }
    }
    let dark = EndmemberModel::new(Array2::zeros((7, 3)), a.clone(), shape(4, 5)).unwrap();
    assert!(mix(&dark).as_slice().iter().all(|v| *v == 0.0));
}

fn pair(
    rows: usize,
    spec: MaskSpec,
    rule: ChangeRule,
    scenario: Scenario,
    snr_db: f64,
) -> rfcd::sim::SimulatedPair {
    let x = synthetic_reference(
        &SceneSettings {
            rows,
            cols: rows,
            bands: 12,
            ..SceneSettings::default()
        },
        2,
    )
    .unwrap()
    .image;
    simulate_pair(
        &x,
        &spec,
        rule,
        ChangeEpoch::Ti,
        scenario,
        snr_db,
        SimulationSettings::default(),
        3,
    )
    .unwrap()
}

#[test]
fn identity_rule_injects_no_change() {
    let spec = MaskSpec {
        shape: shape(30, 30),
        regions: vec![Region::square(5, 5, 10)],
    };
    let p = pair(30, spec, ChangeRule::Identity, Scenario::Pan, f64::INFINITY);
    assert!(p
        .latent_ti
        .subtract(&p.latent_tj)
        .unwrap()
        .as_slice()
        .iter()
        .all(|v| *v == 0.0));
    assert!(p.truth_mask.is_empty());
}

#[test]
fn truth_is_support_of_latent_difference() {
    let spec = MaskSpec {
        shape: shape(30, 30),
        regions: vec![Region::square(10, 12, 10)],
    };
    let p = pair(
        30,
        spec.clone(),
        ChangeRule::Swap { i: 0, j: 3 },
        Scenario::Ms,
        f64::INFINITY,
    );
    let diff = p.latent_ti.subtract(&p.latent_tj).unwrap();
    let support: Vec<bool> = diff.column_norms().iter().map(|e| *e > 1e-9).collect();
    assert_eq!(support, p.truth_mask.as_slice());
    assert!(p.truth_mask.count() > 0);
    let region = rasterize_mask(&spec).unwrap();
    assert!(p
        .truth_mask
        .as_slice()
        .iter()
        .zip(region.as_slice())
        .all(|(t, r)| !*t || *r));
    assert_eq!(p.y_hr.bands(), 4);
    assert_eq!(p.y_lr.shape(), shape(6, 6));
}

#[test]
fn pan_band_is_mean_of_leading_bands() {
    let spec = MaskSpec {
        shape: shape(20, 20),
        regions: vec![],
    };
    let p = pair(20, spec, ChangeRule::Identity, Scenario::Pan, f64::INFINITY);
    let k = pan_band_count(12);
    assert_eq!(k, 6);
    assert_eq!(pan_band_count(93), 43);
    assert_eq!(p.y_hr.bands(), 1);
    for r in 0..20 {
        for c in 0..20 {
            let mut s = 0.0;
            for b in 0..k {
                s += p.latent_ti.get(b, r, c);
            }
            assert!((p.y_hr.get(0, r, c) - s / k as f64).abs() <= 1e-12);
        }
    }
}

#[test]
fn suite_enumeration_and_reproducibility() {
    let x = small_scene();
    let one = benchmark_suite(&x, 1, 4).unwrap();
    assert_eq!(one.len(), 2);
    assert_eq!(one[0].scenario, Scenario::Pan);
    assert_eq!(one[1].scenario, Scenario::Ms);

    let a = benchmark_suite(&x, 3, 4).unwrap();
    let b = benchmark_suite(&x, 3, 4).unwrap();
    assert_eq!(a.len(), 6);
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(p.y_hr, q.y_hr);
        assert_eq!(p.y_lr, q.y_lr);
        assert_eq!(p.truth_mask, q.truth_mask);
        assert!(p.truth_mask.count() > 0);
    }
    let epochs: Vec<ChangeEpoch> = a.iter().map(|p| p.epoch).collect();
    assert!(epochs.contains(&ChangeEpoch::Ti) && epochs.contains(&ChangeEpoch::Tj));
}

#[test]
fn noise_seed_changes_noise_but_not_truth() {
    let scene = synthetic_reference(
        &SceneSettings {
            rows: 20,
            cols: 20,
            bands: 8,
            ..SceneSettings::default()
        },
        1,
    )
    .unwrap();
    let sim = Simulator::from_model(scene.model, SimulationSettings::default()).unwrap();
    let mut plan = PairPlan {
        mask: MaskSpec {
            shape: shape(20, 20),
            regions: vec![Region::Triangle {
                row: 3,
                col: 4,
                size: 6,
            }],
        },
        rule: ChangeRule::Replace { i: 1, j: 2 },
        epoch: ChangeEpoch::Tj,
        scenario: Scenario::Pan,
        seed: 1,
    };
    let a = sim.simulate(&plan).unwrap();
    plan.seed = 2;
    let b = sim.simulate(&plan).unwrap();
    assert_ne!(a.y_hr, b.y_hr);
    assert_eq!(a.truth_mask, b.truth_mask);
    assert_eq!(a.latent_tj, b.latent_tj);
}

#[test]
fn decimated_mask_matches_block_scan() {
    let mut g = rng(8);
    let hr = shape(12, 15);
    let mask = ChangeMask::new((0..180).map(|_| g.random_bool(0.05)).collect(), hr).unwrap();
    let grid = DecimationGrid::new(3, 5).unwrap();
    let lr = decimate_mask(&mask, &grid).unwrap();
    assert_eq!(lr.shape(), shape(4, 3));
    for i in 0..4 {
        for j in 0..3 {
            let mut any = false;
            for p in 0..180 {
                if mask.as_slice()[p] && (p / 15) / 3 == i && (p % 15) / 5 == j {
                    any = true;
                }
            }
            assert_eq!(lr.get(i, j), any);
        }
    }
}

fn rule_strategy(r: usize) -> impl Strategy<Value = ChangeRule> {
    prop_oneof![
        Just(ChangeRule::Identity),
        (0..r, 0..r).prop_map(|(i, j)| ChangeRule::Swap { i, j }),
        (0..r, 0..r).prop_map(|(i, j)| ChangeRule::Replace { i, j }),
        (0..r, 0.01f64..5.0).prop_map(|(i, factor)| ChangeRule::Rescale { i, factor }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rules_are_local_and_stay_on_the_simplex(
        seed in 0u64..10_000,
        bits in prop::collection::vec(any::<bool>(), 30),
        rule in rule_strategy(4),
    ) {
        let grid = shape(5, 6);
        let model = random_model(6, 4, grid, seed);
        let mask = ChangeMask::new(bits, grid).unwrap();
        let out = apply_change_rule(&model, &mask, rule).unwrap();
        for p in 0..30 {
            let col = out.abundances().column(p);
            if !mask.as_slice()[p] {
                prop_assert_eq!(col, model.abundances().column(p));
            }
            prop_assert!(col.iter().all(|v| *v >= 0.0));
            prop_assert!((col.sum() - 1.0).abs() <= 1e-6);
        }
        prop_assert_eq!(out.endmembers(), model.endmembers());
    }

    #[test]
    fn simulated_latents_agree_outside_the_truth(
        row in 0usize..14,
        col in 0usize..14,
        size in 1usize..7,
        k in 0usize..3,
        ms in any::<bool>(),
        tj in any::<bool>(),
    ) {
        let scene = synthetic_reference(&SceneSettings { rows: 20, cols: 20, bands: 8, ..SceneSettings::default() }, 5).unwrap();
        let sim = Simulator::from_model(scene.model, SimulationSettings { ratio: 4, ..SimulationSettings::default() }).unwrap();
        let spec = MaskSpec { shape: shape(20, 20), regions: vec![Region::square(row, col, size)] };
        let rule = sim.rule_for(&rasterize_mask(&spec).unwrap(), k);
        let p = sim.simulate(&PairPlan {
            mask: spec,
            rule,
            epoch: if tj { ChangeEpoch::Tj } else { ChangeEpoch::Ti },
            scenario: if ms { Scenario::Ms } else { Scenario::Pan },
            seed: 7,
        }).unwrap();
        let n = 400;
        for pix in 0..n {
            if !p.truth_mask.as_slice()[pix] {
                for b in 0..8 {
                    prop_assert_eq!(
                        p.latent_ti.as_slice()[b * n + pix].to_bits(),
                        p.latent_tj.as_slice()[b * n + pix].to_bits()
                    );
                }
            }
        }
    }
}
