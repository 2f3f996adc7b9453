use rand::Rng;

use super::*;
use crate::model::{Architecture, ModelSpec};
use crate::rng::normal_tensor;

fn sched() -> NoiseSchedule {
    NoiseSchedule::cosine(10).unwrap()
}

fn quad_spec(dim: usize) -> ModelSpec {
    ModelSpec {
        arch: Architecture::Quadratic,
        width: 1,
        depth: 1,
        x_dim: 1,
        y_dim: dim,
        levels: 10,
    }
}

/// `E = ½‖y − √ᾱ_k·c‖²`: the level-aware quadratic head with target `c`.
fn annealed_quadratic(c: &[f64]) -> EnergyModel {
    let mut m = EnergyModel::build(quad_spec(c.len()), 0).unwrap();
    m.set_param("target.b", Tensor::vector(c.to_vec())).unwrap();
    m
}

/// `E = ½‖y − c‖²` at every level.
fn flat_quadratic(c: &[f64]) -> EnergyModel {
    let mut m = annealed_quadratic(c);
    m.set_param("level.mean", Tensor::ones(&[11])).unwrap();
    m
}

fn x0() -> Tensor {
    Tensor::vector(vec![0.0])
}

#[test]
fn quadratic_single_steps() {
    let m = flat_quadratic(&[2.0, -1.0]);
    let (y, _) = optimize_landscape(&m, &x0(), &Tensor::vector(vec![5.0, 7.0]), 3, 1, 1.0, true).unwrap();
    assert_eq!(y.data(), &[2.0, -1.0]);

    let m = flat_quadratic(&[2.0]);
    let (y, t) = optimize_landscape(&m, &x0(), &Tensor::vector(vec![0.0]), 3, 1, 0.5, true).unwrap();
    assert_eq!(y.data(), &[1.0]);
    assert!(t.steps[0].accepted);

    // proposal 3 has E = 2 > E(0) = 0.5
    let m = flat_quadratic(&[1.0]);
    let (y, t) = optimize_landscape(&m, &x0(), &Tensor::vector(vec![0.0]), 3, 1, 3.0, true).unwrap();
    assert_eq!(y.data(), &[0.0]);
    assert_eq!(t.steps[0].energy_before, 0.5);
    assert_eq!(t.steps[0].energy_after, 2.0);
    assert!(!t.steps[0].accepted);
    let (y, _) = optimize_landscape(&m, &x0(), &Tensor::vector(vec![0.0]), 3, 1, 3.0, false).unwrap();
    assert_eq!(y.data(), &[3.0]);
}

#[test]
fn zero_steps_only_rescale_the_noise() {
    let s = sched();
    let m = annealed_quadratic(&[1.0, 2.0, 3.0]);
    let cfg = SolveConfig::constant(10, 1.0, 0, 4);
    let (y, trace) = anneal_solve(&m, &x0(), &s, &cfg).unwrap();
    let noise = initial_noise(4, &[0], 3);
    let mut expected = noise.reshape(&[3]).unwrap();
    for k in (1..10).rev() {
        expected = expected.scale(s.rescale_factor(k, k - 1).unwrap());
    }
    assert_eq!(y, expected);
    assert_eq!(trace.landscapes.len(), 9);
    assert!(trace.landscapes.iter().all(|l| l.steps.is_empty()));
}

#[test]
fn one_exact_step_per_landscape_returns_the_target() {
    let c = [0.5, -2.0, 4.0];
    let m = annealed_quadratic(&c);
    let (y, _) = anneal_solve(&m, &x0(), &sched(), &SolveConfig::constant(10, 1.0, 1, 9)).unwrap();
    for (a, b) in y.data().iter().zip(&c) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn quadratic_converges_to_the_analytic_optimum() {
    let s = sched();
    let mut rng = stream(1, &[]);
    for seed in 0..20u64 {
        let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let m = annealed_quadratic(&c);
        let lambda = rng.gen_range(0.1..=1.0);
        let steps = rng.gen_range(25..=40);
        let (y, _) = anneal_solve(&m, &x0(), &s, &SolveConfig::constant(10, lambda, steps, seed)).unwrap();
        for (a, b) in y.data().iter().zip(&c) {
            assert!((a - b).abs() < 1e-8, "lambda {lambda}, T {steps}: {a} vs {b}");
        }
    }
}

fn held_energies_non_increasing(trace: &SolveTrace) {
    for l in &trace.landscapes {
        let mut held = f64::INFINITY;
        for s in &l.steps {
            assert!(s.energy_before <= held);
            held = if s.accepted { s.energy_after } else { s.energy_before };
            assert!(held <= s.energy_before);
        }
    }
}

#[test]
fn accepted_energies_never_increase() {
    let spec = ModelSpec {
        arch: Architecture::MlpEnergy,
        width: 8,
        depth: 2,
        x_dim: 3,
        y_dim: 3,
        levels: 10,
    };
    let s = sched();
    for seed in 0..10 {
        let m = EnergyModel::build(spec.clone(), seed).unwrap();
        let xs = normal_tensor(&mut stream(seed, &[99]), &[4, 3]);
        let cfg = SolveConfig::scaled(&s, 5.0, 6, seed);
        let (_, traces) = anneal_solve_batch(&m, &xs, &s, &cfg, &[0, 1, 2, 3]).unwrap();
        traces.iter().for_each(held_energies_non_increasing);
    }
}

#[test]
fn more_steps_never_raise_the_final_energy() {
    let s = sched();
    let mut rng = stream(2, &[]);
    for seed in 0..100u64 {
        let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let m = annealed_quadratic(&c);
        let lambda = rng.gen_range(0.02..0.3);
        let t1 = rng.gen_range(1..8);
        let t2 = rng.gen_range(t1 + 1..=8);
        let final_energy = |t| {
            let (_, tr) = anneal_solve(&m, &x0(), &s, &SolveConfig::constant(10, lambda, t, seed)).unwrap();
            tr.landscapes.last().unwrap().final_energy().unwrap()
        };
        assert!(final_energy(t2) <= final_energy(t1));
    }
}

#[test]
fn solves_are_deterministic() {
    let spec = ModelSpec {
        arch: Architecture::EdgeRelationalEnergy,
        width: 4,
        depth: 1,
        x_dim: 9,
        y_dim: 9,
        levels: 10,
    };
    let m = EnergyModel::build(spec, 3).unwrap();
    let s = sched();
    let xs = Tensor::new(vec![2, 9], (0..18).map(|i| (i % 3 == 0) as u8 as f64).collect()).unwrap();
    let cfg = SolveConfig::scaled(&s, 1.0, 3, 5);
    let (a, ta) = anneal_solve_batch(&m, &xs, &s, &cfg, &[7, 8]).unwrap();
    let (b, tb) = anneal_solve_batch(&m, &xs, &s, &cfg, &[7, 8]).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
}

#[test]
fn final_reverse_step_is_deterministic() {
    let s = sched();
    let y = Tensor::vector(vec![0.3, -1.2]);
    let e = Tensor::vector(vec![0.1, 0.2]);
    let a = reverse_update(&y, &e, 1, &s, &mut stream(1, &[])).unwrap();
    let b = reverse_update(&y, &e, 1, &s, &mut stream(2, &[])).unwrap();
    assert_eq!(a, b);
    assert!(reverse_update(&y, &e, 0, &s, &mut stream(1, &[])).is_err());
}

#[test]
fn zero_predictor_reverse_step_scales_plus_noise() {
    let s = sched();
    let y = Tensor::vector(vec![0.3, -1.2]);
    let m = EnergyModel::zeroed(quad_spec(2)).unwrap();
    let out = noisy_reverse_step(&m, &x0(), &y, 1, &s, &mut stream(1, &[])).unwrap();
    let f = 1.0 / s.alpha_bar(1).sqrt();
    for (a, b) in out.data().iter().zip(y.data()) {
        assert!((a - f * b).abs() < 1e-12);
    }
    // above the final level the same scaling gets Gaussian noise
    let k = 5;
    let rng = stream(3, &[]);
    let out = noisy_reverse_step(&m, &x0(), &y, k, &s, &mut rng.clone()).unwrap();
    let z = normal_vec(&mut rng.clone(), 2);
    let (ab, abp) = (s.alpha_bar(k), s.alpha_bar(k - 1));
    let alpha = ab / abp;
    let scale = abp.sqrt() * (1.0 - alpha) / (1.0 - ab) / ab.sqrt() + alpha.sqrt() * (1.0 - abp) / (1.0 - ab);
    let std = ((1.0 - alpha) * (1.0 - abp) / (1.0 - ab)).sqrt();
    for i in 0..2 {
        assert!((out.data()[i] - (scale * y.data()[i] + std * z[i])).abs() < 1e-12);
    }
}

#[test]
fn perfect_denoiser_chain_recovers_the_label() {
    let s = sched();
    let c = [1.5, -0.5, 2.0];
    // ∇_y E = (y − √ᾱ_k·c)/σ_k is the exact noise at every level k ≥ 1
    let mut m = annealed_quadratic(&c);
    let stiff = (0..=10).map(|k| if k == 0 { 1.0 } else { 1.0 / s.sigma(k) }).collect();
    m.set_param("level.stiffness", Tensor::vector(stiff)).unwrap();
    for seed in 0..5 {
        let mut rng = stream(seed, &[]);
        let eps = normal_tensor(&mut rng, &[3]);
        let mut y = s.corrupt(&Tensor::vector(c.to_vec()), 10, &eps).unwrap();
        for k in (1..=10).rev() {
            y = noisy_reverse_step(&m, &x0(), &y, k, &s, &mut rng).unwrap();
        }
        for (a, b) in y.data().iter().zip(&c) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn noisy_mode_runs_one_update_per_level() {
    let s = sched();
    let m = annealed_quadratic(&[1.0, 2.0]);
    let mut cfg = SolveConfig::constant(10, 1.0, 5, 0);
    cfg.noisy_mode = true;
    let (y, trace) = anneal_solve(&m, &x0(), &s, &cfg).unwrap();
    assert_eq!(trace.landscapes.len(), 9);
    assert!(y.is_finite());
}

#[test]
fn polish_descends_the_clean_level() {
    let s = sched();
    let m = annealed_quadratic(&[1.0, 2.0]);
    let mut cfg = SolveConfig::constant(10, 0.5, 3, 0);
    cfg.polish = true;
    let (_, trace) = anneal_solve(&m, &x0(), &s, &cfg).unwrap();
    assert_eq!(trace.landscapes.len(), 10);
    assert_eq!(trace.landscapes.last().unwrap().level, 0);
}

#[test]
fn non_finite_energy_aborts_with_trace() {
    let mut m = annealed_quadratic(&[1.0]);
    m.set_param("level.stiffness", Tensor::full(&[11], f64::INFINITY)).unwrap();
    let err = anneal_solve(&m, &x0(), &sched(), &SolveConfig::constant(10, 0.5, 2, 0)).unwrap_err();
    match err {
        Error::NonFiniteEnergy { level, step, trace } => {
            assert_eq!((level, step), (9, 0));
            assert_eq!(trace.landscapes.len(), 1);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn config_validation() {
    let s = sched();
    let m = annealed_quadratic(&[1.0]);
    let bad = SolveConfig::constant(10, 0.0, 1, 0);
    assert!(anneal_solve(&m, &x0(), &s, &bad).is_err());
    let short = SolveConfig::constant(5, 1.0, 1, 0);
    assert!(anneal_solve(&m, &x0(), &s, &short).is_err());
}
