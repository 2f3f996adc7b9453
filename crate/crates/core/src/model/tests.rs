use rand::Rng;

use super::*;
use crate::rng::{normal_tensor, stream};

fn mlp_spec(x_dim: usize, y_dim: usize, width: usize) -> ModelSpec {
    ModelSpec {
        arch: Architecture::MlpEnergy,
        width,
        depth: 3,
        x_dim,
        y_dim,
        levels: 10,
    }
}

fn spec_for(arch: Architecture) -> ModelSpec {
    let (x_dim, y_dim) = match arch {
        Architecture::MlpEnergy | Architecture::Quadratic => (5, 3),
        Architecture::BoardEnergy => (80, 64),
        Architecture::EdgeRelationalEnergy => (9, 9),
        Architecture::PlanRelationalEnergy => (15, 9),
    };
    ModelSpec {
        arch,
        width: 6,
        depth: 2,
        x_dim,
        y_dim,
        levels: 4,
    }
}

const ALL: [Architecture; 5] = [
    Architecture::MlpEnergy,
    Architecture::BoardEnergy,
    Architecture::EdgeRelationalEnergy,
    Architecture::PlanRelationalEnergy,
    Architecture::Quadratic,
];

/// Inputs with 0/1 structure where the architecture reads adjacency.
fn sample_x(spec: &ModelSpec, rng: &mut impl Rng) -> Tensor {
    let data = (0..spec.x_dim)
        .map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 })
        .collect();
    Tensor::vector(data)
}

fn central_diff(f: impl Fn(&Tensor) -> f64, y: &Tensor, h: f64) -> Vec<f64> {
    (0..y.numel())
        .map(|i| {
            let mut up = y.clone();
            up.data_mut()[i] += h;
            let mut dn = y.clone();
            dn.data_mut()[i] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn build_is_deterministic_per_seed() {
    for arch in ALL {
        let a = EnergyModel::build(spec_for(arch), 3).unwrap();
        let b = EnergyModel::build(spec_for(arch), 3).unwrap();
        assert_eq!(a, b);
    }
    let a = EnergyModel::build(spec_for(Architecture::MlpEnergy), 3).unwrap();
    let c = EnergyModel::build(spec_for(Architecture::MlpEnergy), 4).unwrap();
    assert_ne!(a, c);
}

#[test]
fn mlp_parameter_count() {
    // 12·64 + 64 (input layer) + 2·(64·64 + 64) (hidden) + 65 (head) + 11·64 (levels)
    let spec = mlp_spec(8, 4, 64);
    let m = EnergyModel::build(spec.clone(), 0).unwrap();
    assert_eq!(m.params().count(), 9921);
    assert_eq!(spec.mlp_param_count(), 9921);
}

#[test]
fn zeroed_model_is_constant_with_zero_gradient() {
    let mut rng = stream(1, &[]);
    for arch in ALL {
        let spec = spec_for(arch);
        let m = EnergyModel::zeroed(spec.clone()).unwrap();
        let x0 = sample_x(&spec, &mut rng);
        let y0 = normal_tensor(&mut rng, &[spec.y_dim]);
        let e0 = m.eval(&x0, &y0, 0).unwrap();
        for k in 0..=spec.levels {
            let x = sample_x(&spec, &mut rng);
            let y = normal_tensor(&mut rng, &[spec.y_dim]);
            assert_eq!(m.eval(&x, &y, k).unwrap(), e0, "{arch:?}");
            assert!(m.gradient_y(&x, &y, k).unwrap().data().iter().all(|&g| g == 0.0));
        }
    }
}

#[test]
fn quadratic_head_gradient() {
    let spec = ModelSpec {
        arch: Architecture::Quadratic,
        width: 1,
        depth: 1,
        x_dim: 2,
        y_dim: 2,
        levels: 10,
    };
    let mut m = EnergyModel::build(spec, 0).unwrap();
    m.set_param("target.w", Tensor::eye(2)).unwrap();
    let g = m
        .gradient_y(&Tensor::vector(vec![0.0, 3.0]), &Tensor::vector(vec![1.0, 3.0]), 0)
        .unwrap();
    assert_eq!(g.data(), &[1.0, 0.0]);
}

#[test]
fn half_squared_norm_convention() {
    let g = Graph::new();
    let o = g.constant(Tensor::vector(vec![3.0, 4.0]));
    let e = half_sq_norm_per_instance(o, 1).unwrap();
    assert_eq!(e.value().data(), &[12.5]);
}

#[test]
fn gradient_y_matches_finite_differences() {
    let mut rng = stream(2, &[]);
    for arch in ALL {
        let spec = spec_for(arch);
        let mut m = EnergyModel::build(spec.clone(), 11).unwrap();
        if arch == Architecture::Quadratic {
            let w = normal_tensor(&mut rng, &[spec.x_dim, spec.y_dim]);
            m.set_param("target.w", w).unwrap();
        }
        for k in [0, 2, spec.levels] {
            let x = sample_x(&spec, &mut rng);
            let y = normal_tensor(&mut rng, &[spec.y_dim]);
            let g = m.gradient_y(&x, &y, k).unwrap();
            let fd = central_diff(|yy| m.eval(&x, yy, k).unwrap(), &y, 1e-5);
            let scale = fd.iter().fold(1e-3f64, |a, v| a.max(v.abs()));
            for (a, b) in g.data().iter().zip(&fd) {
                assert!((a - b).abs() / scale < 1e-4, "{arch:?} k={k}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn score_jacobian_is_symmetric() {
    let mut rng = stream(3, &[]);
    let archs = [
        Architecture::MlpEnergy,
        Architecture::EdgeRelationalEnergy,
        Architecture::PlanRelationalEnergy,
    ];
    let mut checked = 0;
    for trial in 0..12 {
        let arch = archs[trial % archs.len()];
        let spec = spec_for(arch);
        assert!(spec.y_dim <= 9);
        let m = EnergyModel::build(spec.clone(), 100 + trial as u64).unwrap();
        let x = sample_x(&spec, &mut rng);
        let y = normal_tensor(&mut rng, &[spec.y_dim]);
        let k = rng.gen_range(0..=spec.levels);
        let d = spec.y_dim.min(6);
        // J[i][j] = ∂g_i/∂y_j over the first `d` coordinates
        let mut jac = vec![vec![0.0; d]; d];
        for j in 0..d {
            let h = 1e-5;
            let mut up = y.clone();
            up.data_mut()[j] += h;
            let mut dn = y.clone();
            dn.data_mut()[j] -= h;
            let gu = m.gradient_y(&x, &up, k).unwrap();
            let gd = m.gradient_y(&x, &dn, k).unwrap();
            for i in 0..d {
                jac[i][j] = (gu.data()[i] - gd.data()[i]) / (2.0 * h);
            }
        }
        let scale = jac.iter().flatten().fold(1e-3f64, |a, v| a.max(v.abs()));
        for i in 0..d {
            for j in 0..i {
                assert!((jac[i][j] - jac[j][i]).abs() / scale < 1e-3, "{arch:?}");
            }
        }
        checked += 1;
    }
    assert!(checked >= 10);
}

#[test]
fn head_scaling_scales_gradient() {
    let spec = mlp_spec(4, 3, 8);
    let m = EnergyModel::build(spec.clone(), 5).unwrap();
    let mut scaled = m.clone();
    let c = 2.5;
    for name in ["head.w", "head.b"] {
        let t = scaled.params().get(name).unwrap().scale(c);
        scaled.set_param(name, t).unwrap();
    }
    let mut rng = stream(4, &[]);
    let x = normal_tensor(&mut rng, &[4]);
    let y = normal_tensor(&mut rng, &[3]);
    let g = m.gradient_y(&x, &y, 3).unwrap();
    let gs = scaled.gradient_y(&x, &y, 3).unwrap();
    for (a, b) in g.data().iter().zip(gs.data()) {
        assert!((a * c - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn eval_is_bit_identical_across_calls() {
    let spec = spec_for(Architecture::BoardEnergy);
    let m = EnergyModel::build(spec.clone(), 8).unwrap();
    let mut rng = stream(5, &[]);
    let x = sample_x(&spec, &mut rng);
    let y = normal_tensor(&mut rng, &[spec.y_dim]);
    assert_eq!(
        m.eval(&x, &y, 2).unwrap().to_bits(),
        m.eval(&x, &y, 2).unwrap().to_bits()
    );
}

#[test]
fn rejects_bad_shapes_and_levels() {
    let spec = mlp_spec(4, 3, 8);
    let m = EnergyModel::build(spec, 0).unwrap();
    let x = Tensor::vector(vec![0.0; 4]);
    assert!(matches!(
        m.eval(&x, &Tensor::vector(vec![0.0; 5]), 0),
        Err(Error::ShapeMismatch { .. })
    ));
    assert!(matches!(
        m.eval(&x, &Tensor::vector(vec![0.0; 3]), 11),
        Err(Error::Level { .. })
    ));
    let bad = ModelSpec {
        arch: Architecture::BoardEnergy,
        width: 4,
        depth: 1,
        x_dim: 10,
        y_dim: 64,
        levels: 10,
    };
    assert!(EnergyModel::build(bad, 0).is_err());
    let zero_width = ModelSpec { width: 0, ..mlp_spec(4, 3, 8) };
    assert!(EnergyModel::build(zero_width, 0).is_err());
}

#[test]
fn relational_models_accept_other_sizes() {
    let spec = spec_for(Architecture::EdgeRelationalEnergy);
    let m = EnergyModel::build(spec, 1).unwrap();
    let x = Tensor::vector(vec![0.0; 16]);
    let y = Tensor::vector(vec![0.5; 16]);
    assert!(m.eval(&x, &y, 1).unwrap().is_finite());

    let spec = spec_for(Architecture::PlanRelationalEnergy);
    let m = EnergyModel::build(spec, 1).unwrap();
    // 4 nodes, horizon 5
    let x = Tensor::vector(vec![1.0; 24]);
    let y = Tensor::vector(vec![0.1; 20]);
    assert!(m.eval(&x, &y, 1).unwrap().is_finite());
}

#[test]
fn from_parts_checks_layout() {
    let spec = spec_for(Architecture::MlpEnergy);
    let m = EnergyModel::build(spec.clone(), 1).unwrap();
    let rebuilt = EnergyModel::from_parts(spec.clone(), m.params().clone()).unwrap();
    assert_eq!(rebuilt, m);
    let other = EnergyModel::build(spec_for(Architecture::Quadratic), 1).unwrap();
    assert!(EnergyModel::from_parts(spec, other.params().clone()).is_err());
}
