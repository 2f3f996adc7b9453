use ired_core::gradcheck::{numeric_gradient, relative_error, RandomProgram};
use ired_core::infer::{anneal_solve, SolveConfig};
use ired_core::model::{Architecture, EnergyModel, ModelSpec};
use ired_core::rng::{normal_tensor, stream};
use ired_core::{NoiseSchedule, Tensor};
use proptest::prelude::*;

fn ulps_close(a: f64, b: f64, ulps: f64) -> bool {
    (a - b).abs() <= ulps * f64::EPSILON * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reverse_mode_matches_central_differences(seed in any::<u64>(), len in 1usize..12) {
        let p = RandomProgram::generate(seed, len);
        let x = p.random_input(seed);
        let analytic = p.gradient(&x).unwrap();
        let numeric = numeric_gradient(|v| p.eval(v).unwrap(), &x, 1e-5);
        let err = relative_error(&analytic, &numeric, 1e-6);
        prop_assert!(err < 1e-4, "relative error {err} for {p:?}");
    }

    #[test]
    fn schedule_invariants(levels in 1usize..=64, y in -10.0f64..10.0) {
        let s = NoiseSchedule::cosine(levels).unwrap();
        prop_assert_eq!(s.alpha_bar(0), 1.0);
        prop_assert_eq!(s.alpha_bar(levels), 0.0);
        prop_assert_eq!(s.sigma(0), 0.0);
        prop_assert_eq!(s.sigma(levels), 1.0);
        for k in 1..=levels {
            prop_assert!(s.alpha_bar(k) < s.alpha_bar(k - 1));
            prop_assert!(s.sigma(k) > s.sigma(k - 1));
        }
        let zero = Tensor::vector(vec![0.0]);
        let yv = Tensor::vector(vec![y]);
        for k in 1..levels {
            let up = s.rescale_between(&s.corrupt(&yv, k, &zero).unwrap(), k, k - 1).unwrap();
            let direct = s.corrupt(&yv, k - 1, &zero).unwrap();
            prop_assert!(ulps_close(up.data()[0], direct.data()[0], 4.0), "k {}: {} vs {}", k, up.data()[0], direct.data()[0]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn second_order_matches_differences_of_the_gradient(seed in any::<u64>(), len in 1usize..8) {
        let p = RandomProgram::generate(seed, len);
        let x = p.random_input(seed ^ 1);
        let analytic = p.gradient_norm_gradient(&x).unwrap();
        let sq_norm = |v: &[f64]| p.gradient(v).unwrap().iter().map(|g| g * g).sum::<f64>();
        let numeric = numeric_gradient(sq_norm, &x, 1e-5);
        let err = relative_error(&analytic, &numeric, 1e-6);
        prop_assert!(err < 1e-3, "relative error {err} for {p:?}");
    }

    #[test]
    fn solving_is_deterministic(seed in any::<u64>(), steps in 0usize..4) {
        let spec = ModelSpec {
            arch: Architecture::MlpEnergy,
            width: 6,
            depth: 2,
            x_dim: 3,
            y_dim: 2,
            levels: 6,
        };
        let m = EnergyModel::build(spec, seed).unwrap();
        let s = NoiseSchedule::cosine(6).unwrap();
        let x = normal_tensor(&mut stream(seed, &[1]), &[3]);
        let cfg = SolveConfig::scaled(&s, 0.5, steps, seed);
        let (a, ta) = anneal_solve(&m, &x, &s, &cfg).unwrap();
        let (b, tb) = anneal_solve(&m, &x, &s, &cfg).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(ta, tb);
    }

    #[test]
    fn accepted_steps_never_raise_the_energy(seed in any::<u64>(), lambda0 in 0.1f64..20.0) {
        let spec = ModelSpec {
            arch: Architecture::MlpEnergy,
            width: 8,
            depth: 2,
            x_dim: 2,
            y_dim: 3,
            levels: 10,
        };
        let m = EnergyModel::build(spec, seed).unwrap();
        let s = NoiseSchedule::cosine(10).unwrap();
        let x = normal_tensor(&mut stream(seed, &[2]), &[2]);
        let (_, trace) = anneal_solve(&m, &x, &s, &SolveConfig::scaled(&s, lambda0, 4, seed)).unwrap();
        for l in &trace.landscapes {
            for st in &l.steps {
                if st.accepted {
                    prop_assert!(st.energy_after < st.energy_before);
                } else {
                    prop_assert!(st.energy_after >= st.energy_before);
                }
            }
            let held: Vec<f64> = l.steps.iter().map(|st| if st.accepted { st.energy_after } else { st.energy_before }).collect();
            prop_assert!(held.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
