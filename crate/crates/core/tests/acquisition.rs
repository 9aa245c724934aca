use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slidebo::acquisition::{c_ei, c_ei_terms, expected_improvement, maximize, select_candidates};
use slidebo::{
    AcquisitionConfig, FittedModel, Generator, GuidanceState, KernelParams, LatentVector, PriorSpec,
    ProceduralGenerator,
};

fn v(x: &[f64]) -> LatentVector {
    LatentVector::new(x.to_vec()).unwrap()
}

fn plain() -> AcquisitionConfig {
    AcquisitionConfig { sigma1: 0.0, sigma2: 0.0, ..Default::default() }
}

fn unit_line() -> PriorSpec {
    PriorSpec::uniform_box(vec![(0.0, 1.0)]).unwrap()
}

fn grid_max(model: &FittedModel, cfg: &AcquisitionConfig, prior: &PriorSpec) -> (f64, f64) {
    let n = 10_000;
    (0..=n)
        .map(|i| {
            let x = i as f64 / n as f64;
            (x, c_ei(&v(&[x]), model, cfg, prior, None, None).unwrap())
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

#[test]
fn ei_examples() {
    assert_eq!(expected_improvement(0.0, 0.0, 1.0).unwrap(), 0.0);
    let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    assert!((expected_improvement(0.4, 1.0, 0.4).unwrap() - phi0).abs() < 1e-12);
    assert!((phi0 - 0.398942).abs() < 1e-6);
}

#[test]
fn ei_matches_monte_carlo_example() {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 1_000_000;
    let mc: f64 = (0..n)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            (0.3 + 0.5 * e - 0.5).max(0.0)
        })
        .sum::<f64>()
        / n as f64;
    assert!((expected_improvement(0.3, 0.25, 0.5).unwrap() - mc).abs() < 1e-3);
}

proptest! {
    #[test]
    fn ei_nonnegative_and_monotone(
        mean in -5.0f64..5.0, var in 0.0f64..9.0, inc in -5.0f64..5.0,
        dm in 0.0f64..2.0, dv in 0.0f64..2.0,
    ) {
        let ei = expected_improvement(mean, var, inc).unwrap();
        prop_assert!(ei >= 0.0);
        prop_assert!(expected_improvement(mean + dm, var, inc).unwrap() >= ei - 1e-12);
        if mean <= inc {
            prop_assert!(expected_improvement(mean, var + dv, inc).unwrap() >= ei - 1e-12);
        }
    }

    #[test]
    fn c_ei_decomposes(
        seed in 0u64..1000, s1 in 0.0f64..3.0, s2 in 0.0f64..3.0,
        z in proptest::collection::vec(-3.0f64..3.0, 8),
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = ProceduralGenerator::new(8, 12, 12).unwrap();
        let pts: Vec<LatentVector> = (0..3)
            .map(|_| LatentVector::new((0..8).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap())
            .collect();
        let model = FittedModel::new(pts, vec![0.2, -0.4, 0.1], KernelParams::new(0.6, 0.5, 1e-6).unwrap()).unwrap();
        let guide_z = LatentVector::new((0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let guidance = GuidanceState::new(&gen.render(&guide_z).unwrap());
        let cfg = AcquisitionConfig { sigma1: s1, sigma2: s2, ..Default::default() };
        let t = c_ei_terms(&v(&z), &model, &cfg, &PriorSpec::StandardNormal, Some(&guidance), Some(&gen)).unwrap();
        prop_assert!((t.value + s1 * t.content + s2 * t.penalty - t.ei).abs() < 1e-10);
        prop_assert!(t.content >= 0.0 && t.penalty >= 0.0);
    }
}

#[test]
fn content_term_vanishes_on_own_render() {
    let gen = ProceduralGenerator::new(8, 16, 16).unwrap();
    let model = FittedModel::new(
        vec![v(&[0.5; 8]), v(&[0.4; 8])],
        vec![0.3, 0.0],
        KernelParams::new(0.5, 0.5, 1e-6).unwrap(),
    )
    .unwrap();
    let z = v(&[0.3, -0.2, 0.1, 0.9, -1.1, 0.0, 0.5, 0.2]);
    let guidance = GuidanceState::new(&gen.render(&z).unwrap());
    let cfg = AcquisitionConfig { sigma1: 1.0, sigma2: 0.5, ..Default::default() };
    let prior = PriorSpec::StandardNormal;
    let t = c_ei_terms(&z, &model, &cfg, &prior, Some(&guidance), Some(&gen)).unwrap();
    assert_eq!(t.content, 0.0);
    assert!((t.value - (t.ei - 0.5 * t.penalty)).abs() < 1e-12);
}

#[test]
fn maximize_matches_dense_grid_in_1d() {
    let prior = unit_line();
    let p = KernelParams::new(0.5, 0.15, 1e-6).unwrap();
    let model = FittedModel::new(vec![v(&[0.2]), v(&[0.7])], vec![0.5, -0.2], p).unwrap();
    let (_, best) = grid_max(&model, &plain(), &prior);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = maximize(&model, &plain(), &prior, None, None, &mut rng).unwrap();
    assert!((m.value - best).abs() < 1e-2, "maximize {} grid {best}", m.value);
    assert!(m.value >= best - 1e-2);
}

#[test]
fn maximize_improves_on_the_only_observation() {
    let prior = PriorSpec::StandardNormal;
    let model = FittedModel::new(vec![v(&[0.5, 0.5])], vec![0.0], KernelParams::default()).unwrap();
    let origin = v(&[0.0, 0.0]);
    let at_origin = c_ei(&origin, &model, &plain(), &prior, None, None).unwrap();
    let m = maximize(&model, &plain(), &prior, None, None, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert!(c_ei(&m.point, &model, &plain(), &prior, None, None).unwrap() >= at_origin);
}

#[test]
fn huge_penalty_pins_point_to_the_mode() {
    let prior = PriorSpec::StandardNormal;
    // Observations away from the origin so EI alone would pull outward.
    let model = FittedModel::new(
        vec![v(&[0.7, 0.7]), v(&[0.3, 0.8])],
        vec![0.4, -0.3],
        KernelParams::new(0.5, 0.2, 1e-6).unwrap(),
    )
    .unwrap();
    let cfg = AcquisitionConfig { sigma1: 0.0, sigma2: 1e6, ..Default::default() };
    for seed in 0..5 {
        let m = maximize(&model, &cfg, &prior, None, None, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let norm = m.point.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 0.5, "seed {seed}: |z| = {norm}");
    }
}

#[test]
fn single_candidate_equals_maximize() {
    let prior = unit_line();
    let model = FittedModel::new(vec![v(&[0.4])], vec![0.1], KernelParams::new(0.5, 0.2, 1e-6).unwrap()).unwrap();
    let a = maximize(&model, &plain(), &prior, None, None, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = select_candidates(&model, 1, &plain(), &prior, None, None, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(b, vec![a.point]);
}

#[test]
fn later_liar_candidates_have_lower_plain_ei() {
    let prior = unit_line();
    let p = KernelParams::new(0.5, 0.15, 1e-6).unwrap();
    let model = FittedModel::new(vec![v(&[0.3]), v(&[0.7])], vec![0.0, 0.0], p).unwrap();
    let (_, grid_best) = grid_max(&model, &plain(), &prior);
    let cands = select_candidates(&model, 3, &plain(), &prior, None, None, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let ei = |z: &LatentVector| c_ei(z, &model, &plain(), &prior, None, None).unwrap();
    assert!((ei(&cands[0]) - grid_best).abs() < 1e-2);
    assert!(ei(&cands[1]) <= ei(&cands[0]) + 1e-9);
    assert!(ei(&cands[2]) <= ei(&cands[0]) + 1e-9);
}

#[test]
fn selection_is_reproducible_with_guidance() {
    let gen = ProceduralGenerator::new(8, 12, 12).unwrap();
    let prior = PriorSpec::StandardNormal;
    let pts = vec![v(&[0.5; 8]), v(&[0.45; 8])];
    let model = FittedModel::new(pts, vec![0.2, 0.0], KernelParams::default()).unwrap();
    let guidance = GuidanceState::new(&gen.render(&v(&[0.0; 8])).unwrap());
    let cfg = AcquisitionConfig { restarts: 2, max_iters: 15, ..Default::default() };
    let run = || {
        select_candidates(&model, 3, &cfg, &prior, Some(&guidance), Some(&gen), &mut ChaCha8Rng::seed_from_u64(6))
            .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    for (x, y) in a.iter().zip(&b) {
        for (p, q) in x.iter().zip(y.iter()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }
}
