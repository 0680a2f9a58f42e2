mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use rfcd::correction::{solve_correction, WhitenedSpectralOp};
use rfcd::degradation::{apply_forward, spectral_degrade, SpectralResponse};
use rfcd::fusion::{build_normal_system, solve_fusion};
use rfcd::robust::{
    corrected_hr, energy_image, objective, objective_terms, otsu_threshold, robust_fusion, scva,
    threshold_map, ChangeScores, RelativeWeights, RobustFusionProblem,
};
use rfcd::sim::{
    synthetic_reference, ChangeEpoch, ChangeRule, MaskSpec, PairPlan, Region, Scenario,
    SceneSettings, SimulationSettings, Simulator,
};
use rfcd::{ChangeImage, GridShape, MultiBandImage};

fn shape(r: usize, c: usize) -> GridShape {
    GridShape::new(r, c).unwrap()
}

fn problem(inst: &FusionInstance, lambda: f64, gamma: f64) -> RobustFusionProblem {
    let (hr, lr) = inst.sensors();
    let mut p = RobustFusionProblem::new(
        inst.y_chr.clone(),
        inst.y_lr.clone(),
        hr,
        lr,
        RelativeWeights::default(),
    )
    .unwrap();
    p.fusion.lambda_reg = lambda;
    p.correction.gamma = gamma;
    p
}

fn spectral_dense(l: &SpectralResponse) -> Vec<Vec<f64>> {
    l.matrix().rows().into_iter().map(|r| r.to_vec()).collect()
}

#[test]
fn corrected_hr_examples() {
    let mut r = rng(1);
    let hr = shape(4, 5);
    let l = SpectralResponse::new(ndarray::Array2::from_shape_fn((2, 6), |(i, j)| {
        0.1 + (i * 6 + j) as f64 * 0.03
    }))
    .unwrap();
    let y = uniform_image(2, hr, -1.0, 1.0, &mut r);
    assert_eq!(corrected_hr(&y, &l, &ChangeImage::zeros(6, hr)).unwrap(), y);

    let dx = ChangeImage::new(uniform_image(6, hr, -1.0, 1.0, &mut r));
    let ldx = spectral_degrade(&dx, &l).unwrap();
    let zero = corrected_hr(&ldx, &l, &dx).unwrap();
    assert!(zero.frobenius_norm() < 1e-14);
    let got = corrected_hr(&y, &l, &dx).unwrap();
    let want = y.subtract(&ldx).unwrap();
    assert!(got.subtract(&want).unwrap().frobenius_norm() <= 1e-14 * want.frobenius_norm());
    assert!(corrected_hr(&y, &l, &ChangeImage::zeros(5, hr)).is_err());
}

#[test]
fn objective_vanishes_on_zero_data() {
    let inst = FusionInstance::random(3, 2, shape(4, 4), 2, 3, 2);
    let mut p = problem(&inst, 0.5, 0.5);
    p.y_hr = MultiBandImage::zeros(2, shape(4, 4));
    p.y_lr = MultiBandImage::zeros(3, shape(2, 2));
    let z = MultiBandImage::zeros(3, shape(4, 4));
    assert_eq!(
        objective(&z, &ChangeImage::zeros(3, shape(4, 4)), &p, &z).unwrap(),
        0.0
    );
}

#[test]
fn objective_is_zero_data_fit_on_consistent_observations() {
    let inst = FusionInstance::random(4, 2, shape(6, 6), 2, 3, 3);
    let mut p = problem(&inst, 0.7, 0.3);
    let x = inst.xbar.clone();
    p.y_hr = apply_forward(&x, &p.hr_sensor, None).unwrap();
    p.y_lr = apply_forward(&x, &p.lr_sensor, None).unwrap();
    let t = objective_terms(&x, &ChangeImage::zeros(4, x.shape()), &p, &x).unwrap();
    assert_eq!(t.reg_latent, 0.0);
    assert_eq!(t.reg_change, 0.0);
    assert!(t.data_hr < 1e-24 && t.data_lr < 1e-24, "{t:?}");
}

/// Term-by-term accumulation with the dense blur and selection matrices.
fn objective_oracle(
    inst: &FusionInstance,
    x: &MultiBandImage,
    dx: &MultiBandImage,
    lambda: f64,
    gamma: f64,
) -> f64 {
    let hr = inst.y_chr.shape();
    let n = hr.pixel_count();
    let l = spectral_dense(&inst.l);
    let mut data_hr = 0.0;
    for (b, row) in l.iter().enumerate() {
        for p in 0..n {
            let pred: f64 = row
                .iter()
                .enumerate()
                .map(|(k, w)| w * (x.as_slice()[k * n + p] + dx.as_slice()[k * n + p]))
                .sum();
            data_hr += (inst.y_chr.as_slice()[b * n + p] - pred).powi(2) / inst.hr_var[b];
        }
    }
    let r = blur_matrix(&inst.kernel, hr) * selection_matrix(&inst.grid, hr);
    let xd = to_dense(x) * r;
    let yl = to_dense(&inst.y_lr);
    let mut data_lr = 0.0;
    for b in 0..xd.nrows() {
        for q in 0..xd.ncols() {
            data_lr += (yl[(b, q)] - xd[(b, q)]).powi(2) / inst.lr_var[b];
        }
    }
    let mut reg = 0.0;
    for (a, c) in x.as_slice().iter().zip(inst.xbar.as_slice()) {
        reg += (a - c).powi(2);
    }
    let mut l21 = 0.0;
    for p in 0..n {
        l21 += (0..dx.bands())
            .map(|k| dx.as_slice()[k * n + p].powi(2))
            .sum::<f64>()
            .sqrt();
    }
    data_hr + data_lr + lambda * reg + gamma * l21
}

#[test]
fn objective_matches_term_by_term_oracle() {
    for seed in 0..5 {
        let inst = FusionInstance::random(5, 3, shape(6, 8), 2, 3, 10 + seed);
        let mut r = rng(seed);
        let p = problem(&inst, 0.4, 0.9);
        let x = uniform_image(5, shape(6, 8), -1.0, 1.0, &mut r);
        let dx = uniform_image(5, shape(6, 8), -0.5, 0.5, &mut r);
        let got = objective(&x, &ChangeImage::new(dx.clone()), &p, &inst.xbar).unwrap();
        let want = objective_oracle(&inst, &x, &dx, 0.4, 0.9);
        assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
    }
}

#[test]
fn one_outer_iteration_is_fusion_then_correction() {
    let inst = FusionInstance::random(4, 2, shape(8, 8), 2, 3, 20);
    let mut p = problem(&inst, 0.3, 0.8);
    p.outer_iters = 1;
    let res = robust_fusion(&p).unwrap();
    assert_eq!(res.objective_trace.len(), 2);

    let xbar = p.coarse_estimate().unwrap();
    let sys = build_normal_system(
        &p.y_lr,
        &p.y_hr,
        &p.hr_sensor,
        &p.lr_sensor,
        &p.fusion,
        &xbar,
    )
    .unwrap();
    let x = solve_fusion(&sys).unwrap();
    let w = WhitenedSpectralOp::from_sensor(&p.hr_sensor, 4).unwrap();
    let dy = p
        .y_hr
        .subtract(&spectral_degrade(&x, &inst.l).unwrap())
        .unwrap();
    let dx = solve_correction(&ChangeImage::zeros(4, x.shape()), &dy, &w, &p.correction).unwrap();
    assert!(rel_diff(&to_dense(&res.latent), &to_dense(&x)) < 1e-12);
    let diff = res.change.subtract(&dx).unwrap().frobenius_norm();
    assert!(diff <= 1e-12 * dx.frobenius_norm().max(1.0));
}

fn null_pair(
    epoch: ChangeEpoch,
    scenario: Scenario,
    ratio: usize,
    rows: usize,
    bands: usize,
    parcel_weight: f64,
) -> rfcd::sim::SimulatedPair {
    let scene = synthetic_reference(
        &SceneSettings {
            rows,
            cols: rows,
            bands,
            parcel_weight,
            ..SceneSettings::default()
        },
        3,
    )
    .unwrap();
    let settings = SimulationSettings {
        ratio,
        snr_db: f64::INFINITY,
        ..SimulationSettings::default()
    };
    let sim = Simulator::from_model(scene.model, settings).unwrap();
    sim.simulate(&PairPlan {
        mask: MaskSpec {
            shape: shape(rows, rows),
            regions: vec![Region::square(2, 2, 4)],
        },
        rule: ChangeRule::Identity,
        epoch,
        scenario,
        seed: 1,
    })
    .unwrap()
}

/// A single PAN band leaves the high frequencies outside its response
/// unobserved, so only the MS scenario pins the latent image down to a few
/// percent; both must report no change.
#[test]
fn noiseless_no_change_pair_recovers_latent() {
    for scenario in [Scenario::Pan, Scenario::Ms] {
        let pair = null_pair(ChangeEpoch::Ti, scenario, 2, 16, 8, 0.0);
        let truth = pair.latent_tj.clone();
        let p = RobustFusionProblem::new(
            pair.y_hr,
            pair.y_lr,
            pair.hr_sensor,
            pair.lr_sensor,
            RelativeWeights::default(),
        )
        .unwrap();
        let res = robust_fusion(&p).unwrap();
        let ratio = res.change.frobenius_norm() / res.latent.frobenius_norm();
        let err = |x: &MultiBandImage| {
            x.subtract(&truth).unwrap().frobenius_norm() / truth.frobenius_norm()
        };
        assert!(ratio <= 1e-3, "{}: change ratio {ratio}", scenario.name());
        assert!(
            err(&res.latent) < err(&res.xbar),
            "{}: fusion did not improve on interpolation",
            scenario.name()
        );
        if scenario == Scenario::Ms {
            assert!(
                err(&res.latent) <= 0.05,
                "latent error {}",
                err(&res.latent)
            );
        }
    }
}

#[test]
fn null_mask_is_empty_whichever_epoch_is_high_resolution() {
    for epoch in [ChangeEpoch::Ti, ChangeEpoch::Tj] {
        let pair = null_pair(epoch, Scenario::Pan, 4, 32, 12, 0.7);
        let p = RobustFusionProblem::new(
            pair.y_hr,
            pair.y_lr,
            pair.hr_sensor,
            pair.lr_sensor,
            RelativeWeights::default(),
        )
        .unwrap();
        let e = energy_image(&robust_fusion(&p).unwrap().change);
        assert!(threshold_map(&e, otsu_threshold(&e, 256)).is_empty());
    }
}

#[test]
fn noiseless_energy_peaks_inside_the_change() {
    let scene = synthetic_reference(
        &SceneSettings {
            rows: 40,
            cols: 40,
            bands: 16,
            ..SceneSettings::default()
        },
        4,
    )
    .unwrap();
    let settings = SimulationSettings {
        ratio: 4,
        snr_db: f64::INFINITY,
        ..SimulationSettings::default()
    };
    let sim = Simulator::from_model(scene.model, settings).unwrap();
    for plan in sim.suite_plan(3, 8).unwrap() {
        let pair = sim.simulate(&plan).unwrap();
        let truth = pair.truth_mask.clone();
        let p = RobustFusionProblem::new(
            pair.y_hr,
            pair.y_lr,
            pair.hr_sensor,
            pair.lr_sensor,
            RelativeWeights::default(),
        )
        .unwrap();
        let e = energy_image(&robust_fusion(&p).unwrap().change);
        let argmax = e
            .energy()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(
            truth.as_slice()[argmax],
            "{:?}: peak at {argmax} outside the mask",
            plan.rule
        );
    }
}

#[test]
fn energy_image_examples() {
    let hr = shape(2, 3);
    assert!(energy_image(&ChangeImage::zeros(2, hr))
        .energy()
        .iter()
        .all(|e| *e == 0.0));
    let mut r = rng(5);
    let dx = uniform_image(7, shape(5, 6), -1.0, 1.0, &mut r);
    let e = energy_image(&ChangeImage::new(dx.clone()));
    for p in 0..30 {
        let mut s = 0.0;
        for b in 0..7 {
            s += dx.get(b, p / 6, p % 6).powi(2);
        }
        assert!((e.energy()[p] - s.sqrt()).abs() <= 1e-12 * s.sqrt());
    }
}

#[test]
fn scva_examples() {
    let grid = shape(7, 8);
    let mut r = rng(6);
    let s = ChangeScores::new((0..56).map(|_| r.random_range(0.0..3.0)).collect(), grid).unwrap();
    assert_eq!(scva(&s, 0, 1.5), threshold_map(&s, 1.5));
    let flat = ChangeScores::new(vec![2.5; 56], grid).unwrap();
    assert_eq!(scva(&flat, 2, 2.5).count(), 56);

    // spike of energy E averages to E/9 over every 3×3 window containing it
    let e = 9.0;
    let mut v = vec![0.0; 56];
    v[3 * 8 + 4] = e;
    let spike = ChangeScores::new(v, grid).unwrap();
    let m = scva(&spike, 1, e / 9.0 - 1e-9);
    assert_eq!(m.count(), 9);
    for dr in 2..=4 {
        for dc in 3..=5 {
            assert!(m.get(dr, dc));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn outer_objective_never_increases(
        seed in 0u64..1000,
        lambda in 0.01f64..2.0,
        gamma in 0.0f64..3.0,
        d in 1usize..=2,
    ) {
        let inst = FusionInstance::random(5, 2, shape(8, 8), d, 3, seed);
        let mut p = problem(&inst, lambda, gamma);
        p.outer_iters = 6;
        p.outer_tol = 0.0;
        let res = robust_fusion(&p).unwrap();
        prop_assert!(res.objective_trace.len() <= p.outer_iters + 1);
        for w in res.half_steps.windows(2) {
            let (a, b) = (w[0].terms.total(), w[1].terms.total());
            prop_assert!(b <= a + 1e-9 * a.abs(), "{a} -> {b}");
        }
    }

    #[test]
    fn detections_shrink_as_threshold_grows(
        energy in prop::collection::vec(0.0f64..10.0, 12),
        t1 in 0.0f64..10.0,
        t2 in 0.0f64..10.0,
        radius in 0usize..3,
    ) {
        let s = ChangeScores::new(energy, shape(3, 4)).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        for (a, b) in [(threshold_map(&s, lo), threshold_map(&s, hi)), (scva(&s, radius, lo), scva(&s, radius, hi))] {
            prop_assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| *x || !*y));
        }
    }

    #[test]
    fn energies_are_nonnegative_column_norms(values in prop::collection::vec(-5.0f64..5.0, 24)) {
        let dx = ChangeImage::new(MultiBandImage::new(4, shape(2, 3), values).unwrap());
        let e = energy_image(&dx);
        prop_assert!(e.energy().iter().all(|v| *v >= 0.0 && v.is_finite()));
        prop_assert_eq!(e.energy().to_vec(), dx.column_norms());
    }
}
