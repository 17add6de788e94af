//! Randomized invariants over small dense systems.

use icmor::benchmarks::{random_stable_system, RandomSystemSpec};
use icmor::estimator::{build_error_gramian, EstimatorOptions};
use icmor::linalg;
use icmor::reduction::{balanced_truncation, bt_aug_with, hankel_singular_values, split_reduce, InterpOptions, UncontrolledMethod};
use icmor::simulate::{
    cumulative_l2, cumulative_l2_error, error_energy, integrate_exponential, integrate_lti, make_log_mesh, Horizon, Input,
    IntegratorOptions, TimeMesh,
};
use icmor::solvers::{GramianFactors, GramianMode, LowRankOptions, Orientation};
use icmor::system::{project, BiorthPolicy, LtiSystem, ReducedModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn system(rng: &mut ChaCha8Rng, n: usize, inputs: usize, outputs: usize) -> LtiSystem {
    random_stable_system(rng, &RandomSystemSpec { n, inputs, outputs, margin: 0.1 })
}

fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn dense_p(sys: &LtiSystem) -> GramianFactors {
    GramianFactors::controllability(&sys.a, &sys.b, &GramianMode::Dense).unwrap()
}

fn dense_q(sys: &LtiSystem) -> GramianFactors {
    GramianFactors::observability(&sys.a, &sys.c, &GramianMode::Dense).unwrap()
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config(20))]

    #[test]
    fn superposition_of_state_and_input_responses(seed in any::<u64>(), n in 2usize..=20, q in 1usize..=3) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, q, 2);
        let input = Input::random_sines(&mut r, q, 4, 3.0, 8.0);
        let mesh = TimeMesh::uniform(10.0, 400).unwrap();
        let opts = IntegratorOptions::accurate();
        let total = integrate_lti(&sys, &input, &mesh, &opts).unwrap();
        let free = integrate_lti(&sys, &Input::zero(q), &mesh, &opts).unwrap();
        let forced = integrate_lti(&sys.with_x0(DVector::zeros(n)).unwrap(), &input, &mesh, &opts).unwrap();
        let gap = cumulative_l2(mesh.points(), &(&total.y - &free.y - &forced.y));
        let scale = cumulative_l2(mesh.points(), &total.y).last().copied().unwrap().max(1.0);
        prop_assert!(*gap.last().unwrap() <= 10.0 * opts.rtol * scale, "gap {:e}", gap.last().unwrap());
    }

    #[test]
    fn identity_projection_is_lossless(seed in any::<u64>(), n in 1usize..=15) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, 2, 2);
        let eye = DMatrix::identity(n, n);
        let rom = project(&sys, &eye, &eye, BiorthPolicy::Reject).unwrap();
        prop_assert!((&rom.ar - sys.a.to_dense()).amax() <= 1e-14 * sys.a.to_dense().amax());
        prop_assert!((&rom.br - &sys.b).amax() <= 1e-14 * sys.b.amax());
        prop_assert!((&rom.cr - &sys.c).amax() <= 1e-14 * sys.c.amax());
        prop_assert!((&rom.x0r - &sys.x0).amax() <= 1e-14 * sys.x0.amax());
    }

    #[test]
    fn dense_gramians_are_psd(seed in any::<u64>(), n in 1usize..=30) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, 2, 3);
        for g in [dense_p(&sys), dense_q(&sys)] {
            let x = g.dense.clone().unwrap();
            prop_assert!((&x - x.transpose()).amax() == 0.0);
            let (ev, _) = linalg::symmetric_eigen(&x);
            let top = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(ev.iter().all(|&v| v >= -1e-10 * top));
        }
    }

    #[test]
    fn bt_roms_are_hurwitz_and_biorthogonal(seed in any::<u64>(), n in 3usize..=25, frac in 0.1f64..0.9) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, 2, 2);
        let order = ((n as f64 * frac) as usize).max(1);
        let (rom, rep) = balanced_truncation(&sys, order, &dense_p(&sys), &dense_q(&sys)).unwrap();
        prop_assert!(rom.stability().unwrap().is_hurwitz());
        prop_assert!(rom.biorthogonality_error().unwrap() <= 1e-10);
        let hsv = &rep.hankel_values;
        prop_assert!(hsv.iter().all(|&s| s >= 0.0));
        prop_assert!(hsv.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(rep.alpha.unwrap() >= 0.0);
    }

    #[test]
    fn bt_bound_holds_from_rest(seed in any::<u64>(), n in 4usize..=16) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, 2, 2).with_x0(DVector::zeros(n)).unwrap();
        let (rom, rep) = balanced_truncation(&sys, n / 2, &dense_p(&sys), &dense_q(&sys)).unwrap();
        let input = Input::random_sines(&mut r, 2, 4, 2.0, 15.0);
        let opts = IntegratorOptions::accurate();
        let en = error_energy(&sys, &rom, &input, Horizon::Finite(15.0), &opts).unwrap();
        prop_assert!(en.error() <= rep.alpha.unwrap() * en.input_norm() + 10.0 * opts.rtol);
    }

    #[test]
    fn hankel_values_survive_state_transformation(seed in any::<u64>(), n in 2usize..=12) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, 2, 2);
        let t = loop {
            let t = DMatrix::identity(n, n) + gauss(&mut r, n, n) * (0.3 / (n as f64).sqrt());
            let sv = linalg::singular_values(&t);
            if sv[0] <= 1e3 * sv[n - 1] {
                break t;
            }
        };
        let ti = t.clone().try_inverse().unwrap();
        let moved = LtiSystem::new(&ti * sys.a.to_dense() * &t, &ti * &sys.b, &sys.c * &t, &ti * &sys.x0).unwrap();
        let h1 = hankel_singular_values(&dense_p(&sys), &dense_q(&sys));
        let h2 = hankel_singular_values(&dense_p(&moved), &dense_q(&moved));
        let drift = h1.iter().zip(h2.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(drift <= 1e-8 * h1[0], "drift {drift:e}");
    }

    #[test]
    fn empty_training_leaves_bt_unchanged(seed in any::<u64>(), n in 3usize..=15) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, 2, 2);
        let (p, q) = (dense_p(&sys), dense_q(&sys));
        let (plain, _) = balanced_truncation(&sys, 2, &p, &q).unwrap();
        let (aug, _) = bt_aug_with(&sys, &DMatrix::zeros(n, 0), 2, &p, &q).unwrap();
        prop_assert!((&plain.ar - &aug.ar).amax() <= 1e-12 * plain.ar.amax());
        prop_assert!((&plain.cr - &aug.cr).amax() <= 1e-12 * plain.cr.amax());
    }
}

proptest! {
    #![proptest_config(config(10))]

    #[test]
    fn output_energy_is_the_gramian_form(seed in any::<u64>(), n in 2usize..=12) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, 1, 2);
        let q = dense_q(&sys).dense.unwrap();
        let empty = ReducedModel::empty(n, 2, 1);
        let en = error_energy(&sys, &empty, &Input::zero(1), Horizon::Infinite { t_max: 1e4 }, &IntegratorOptions::accurate()).unwrap();
        let form = sys.x0.dot(&(&q * &sys.x0));
        prop_assert!(en.decayed);
        prop_assert!((en.error_sq - form).abs() <= 1e-6 * form);
    }

    #[test]
    fn estimator_matches_simulated_error(seed in any::<u64>(), n in 3usize..=12) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, 1, 2);
        let q = dense_q(&sys);
        let (rom, _) = balanced_truncation(&sys, 1 + n / 4, &dense_p(&sys), &q).unwrap();
        let off = build_error_gramian(&sys, &rom, q, &EstimatorOptions::default()).unwrap();
        let est = off.estimate(&sys.x0).unwrap();
        prop_assert_eq!(est.delta, est.raw_square.max(0.0).sqrt());
        prop_assert!(est.upper_bound.unwrap() >= est.delta);
        let rom = rom.with_x0(&sys.x0).unwrap();
        let e = error_energy(&sys, &rom, &Input::zero(1), Horizon::Infinite { t_max: 1e4 }, &IntegratorOptions::accurate()).unwrap().error();
        prop_assert!((est.delta - e).abs() <= 1e-6 * e, "Δ {} vs E {}", est.delta, e);
    }

    #[test]
    fn worst_case_direction_attains_z_norm(seed in any::<u64>(), n in 4usize..=12, k in 1usize..=5) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, 1, 2);
        let q = dense_q(&sys);
        let (rom, _) = balanced_truncation(&sys, 2, &dense_p(&sys), &q).unwrap();
        let off = build_error_gramian(&sys, &rom, q, &EstimatorOptions { gap_bound: false }).unwrap();
        let x0bar = gauss(&mut r, n, k);
        let z = off.z_matrix(&x0bar).unwrap();
        let delta = off.estimate(&(&x0bar * &z.worst_v0)).unwrap().delta;
        prop_assert!((delta - z.sqrt_norm * z.worst_v0.norm()).abs() <= 1e-10 * z.sqrt_norm.max(1e-300));
    }

    #[test]
    fn error_curve_is_non_decreasing(seed in any::<u64>(), n in 3usize..=15) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, 1, 2);
        let (rom, _) = balanced_truncation(&sys, 1, &dense_p(&sys), &dense_q(&sys)).unwrap();
        let rom = rom.with_x0(&sys.x0).unwrap();
        let mesh = make_log_mesh(20.0).unwrap();
        let opts = IntegratorOptions::exploratory();
        let yf = integrate_lti(&sys, &Input::zero(1), &mesh, &opts).unwrap();
        let yr = integrate_lti(&rom.as_system(), &Input::zero(1), &mesh, &opts).unwrap();
        let e = cumulative_l2_error(&yf, &yr).unwrap();
        prop_assert!(e.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(mesh.points()[0] == 0.0 && mesh.points().windows(2).all(|w| w[1] > w[0]));
        prop_assert!(yf.y.iter().all(|v| v.is_finite()) && yf.y.ncols() == mesh.len());
    }

    #[test]
    fn adaptive_and_exponential_integrators_agree(seed in any::<u64>(), n in 2usize..=40) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, 2, 2);
        let input = Input::pulse(0.5, 2.0, vec![1.0, -0.5]).unwrap();
        let mesh = TimeMesh::uniform(5.0, 100).unwrap();
        let ad = integrate_lti(&sys, &input, &mesh, &IntegratorOptions::accurate()).unwrap();
        let ex = integrate_exponential(&sys, &input, &mesh).unwrap();
        prop_assert!((&ad.y - &ex.y).amax() <= 1e-8 * ex.y.amax());
    }

    #[test]
    fn low_rank_gramian_matches_dense(seed in any::<u64>(), n in 5usize..=40) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, 1, 2);
        let opts = LowRankOptions { tol: 1e-10, ..Default::default() };
        let lr = GramianFactors::low_rank(&sys.a, &sys.c, Orientation::Observability, &opts).unwrap();
        let q = dense_q(&sys).dense.unwrap();
        let gap = linalg::spectral_norm(&(lr.factor.tr_mul(&lr.factor) - &q));
        let qn = linalg::spectral_norm(&q);
        prop_assert!(gap <= (10.0 * opts.tol * qn).max(1e-9), "gap {gap:e}");
    }

    #[test]
    fn split_error_obeys_triangle_inequality(seed in any::<u64>(), n in 6usize..=14) {
        let mut r = rng(seed);
        let sys = system(&mut r, n, 1, 2);
        let x0_train = gauss(&mut r, n, 3);
        let q = dense_q(&sys);
        let (split, rep) = split_reduce(&sys, &x0_train, 2, 2, UncontrolledMethod::Bt, &q, &GramianMode::Dense, &InterpOptions::default()).unwrap();
        let uc = split.uncontrolled.with_x0(&sys.x0).unwrap();
        let off = build_error_gramian(&sys, &uc, q, &EstimatorOptions { gap_bound: false }).unwrap();
        let delta = off.estimate(&sys.x0).unwrap().delta;
        let mut full = split.combined();
        full.x0r.rows_mut(0, uc.order()).copy_from(&uc.x0r);
        let input = Input::random_sines(&mut r, 1, 3, 2.0, 10.0);
        let opts = IntegratorOptions::accurate();
        let total = error_energy(&sys, &full, &input, Horizon::Finite(10.0), &opts).unwrap();
        let slack = 10.0 * opts.rtol;
        let alpha_c = rep.controlled.as_ref().and_then(|c| c.alpha).unwrap();
        prop_assert!(total.error() <= alpha_c * total.input_norm() + delta + slack,
            "E {} vs bound {}", total.error(), alpha_c * total.input_norm() + delta);
    }
}

#[test]
fn full_order_error_gramian_flips_sign() {
    let mut r = rng(11);
    let sys = system(&mut r, 8, 1, 2);
    let q = dense_q(&sys);
    let qd = q.dense.clone().unwrap();
    let eye = DMatrix::identity(8, 8);
    let rom = ReducedModel { ar: sys.a.to_dense(), br: sys.b.clone(), cr: sys.c.clone(), w: Some(eye.clone()), v: Some(eye), x0r: sys.x0.clone() };
    let off = build_error_gramian(&sys, &rom, q, &EstimatorOptions::default()).unwrap();
    assert!((&off.qbar + &qd).norm() <= 1e-9 * qd.norm());
    assert!(off.estimate(&sys.x0).unwrap().delta <= 1e-6 * sys.x0.dot(&(&qd * &sys.x0)).sqrt());
}
