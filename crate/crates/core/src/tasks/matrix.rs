//! Continuous matrix tasks: addition, low-rank completion, inversion.

use rand::seq::SliceRandom;
use rand::Rng;

use super::linalg;
use super::{Difficulty, Meta, ProblemInstance, TaskKind};
use crate::error::{Error, Result};
use crate::rng::{normal_vec, stream, tag};
use crate::tensor::Tensor;

fn instance(kind: TaskKind, x: Vec<f64>, y: Vec<f64>, meta: Meta) -> ProblemInstance {
    ProblemInstance {
        kind,
        difficulty: Difficulty::Standard,
        x: Tensor::vector(x),
        y_star: Tensor::vector(y),
        meta,
    }
}

/// `x = [vec A, vec B]`, `y* = vec(A + B)` with entries uniform in
/// `[−magnitude, magnitude]`.
pub fn gen_addition(n: usize, magnitude: f64, count: usize, seed: u64) -> Result<Vec<ProblemInstance>> {
    if n == 0 || !(magnitude > 0.0) {
        return Err(Error::Task(format!("addition needs n >= 1 and magnitude > 0, got {n}, {magnitude}")));
    }
    let d = n * n;
    Ok((0..count)
        .map(|i| {
            let mut rng = stream(seed, &[tag::DATA, i as u64]);
            let x: Vec<f64> = (0..2 * d).map(|_| rng.gen_range(-magnitude..=magnitude)).collect();
            addition_instance(n, x)
        })
        .collect())
}

pub fn addition_instance(n: usize, x: Vec<f64>) -> ProblemInstance {
    let d = n * n;
    let y = (0..d).map(|j| x[j] + x[d + j]).collect();
    instance(TaskKind::Addition { n }, x, y, Meta::None)
}

pub fn addition_valid(n: usize, x: &Tensor, y: &Tensor) -> bool {
    let d = n * n;
    x.numel() == 2 * d && y.numel() == d && (0..d).all(|j| y.data()[j] == x.data()[j] + x.data()[d + j])
}

/// `M = U·Vᵀ` with Gaussian factors of variance `magnitude²/√rank`, so
/// `var(M) = magnitude⁴`. A fraction `mask_frac` of entries is hidden.
pub fn gen_completion(
    n: usize,
    rank: usize,
    mask_frac: f64,
    magnitude: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<ProblemInstance>> {
    if n == 0 || rank == 0 || rank > n {
        return Err(Error::Task(format!("completion needs 1 <= rank <= n, got rank {rank}, n {n}")));
    }
    if !(0.0..1.0).contains(&mask_frac) || !(magnitude > 0.0) {
        return Err(Error::Task(format!(
            "completion needs 0 <= mask_frac < 1 and magnitude > 0, got {mask_frac}, {magnitude}"
        )));
    }
    let d = n * n;
    let s = magnitude / (rank as f64).powf(0.25);
    let hidden = (mask_frac * d as f64).round() as usize;
    Ok((0..count)
        .map(|i| {
            let mut rng = stream(seed, &[tag::DATA, i as u64]);
            let u: Vec<f64> = normal_vec(&mut rng, n * rank).into_iter().map(|v| v * s).collect();
            let v: Vec<f64> = normal_vec(&mut rng, n * rank).into_iter().map(|v| v * s).collect();
            let mut order: Vec<usize> = (0..d).collect();
            order.shuffle(&mut rng);
            let mut mask = vec![1u8; d];
            for &j in &order[..hidden] {
                mask[j] = 0;
            }
            completion_instance(n, rank, &u, &v, mask)
        })
        .collect())
}

/// Instance from explicit factors `U, V ∈ n×rank` and an observation mask.
pub fn completion_instance(n: usize, rank: usize, u: &[f64], v: &[f64], mask: Vec<u8>) -> ProblemInstance {
    let m = linalg::matmul(u, &linalg::transpose(v, n, rank), n, rank, n);
    let mut x: Vec<f64> = m.iter().zip(&mask).map(|(&a, &k)| if k == 1 { a } else { 0.0 }).collect();
    x.extend(mask.iter().map(|&k| k as f64));
    instance(TaskKind::Completion { n, rank }, x, m, Meta::Completion { mask })
}

pub fn completion_valid(n: usize, x: &Tensor, y: &Tensor) -> bool {
    let d = n * n;
    x.numel() == 2 * d
        && y.numel() == d
        && (0..d).all(|j| {
            let observed = x.data()[d + j] == 1.0;
            !observed || x.data()[j] == y.data()[j]
        })
}

/// `A = Q₁·diag(s)·Q₂` with log singular values uniform in
/// `±½·ln(condition)`, the extremes pinned so `cond(A) = condition`.
pub fn gen_inverse(n: usize, condition: f64, count: usize, seed: u64) -> Result<Vec<ProblemInstance>> {
    if n == 0 || !(condition >= 1.0) {
        return Err(Error::Task(format!("inverse needs n >= 1 and condition >= 1, got {n}, {condition}")));
    }
    let half = 0.5 * condition.ln();
    Ok((0..count)
        .map(|i| {
            let mut rng = stream(seed, &[tag::DATA, i as u64]);
            let q1 = linalg::random_orthogonal(n, &mut rng);
            let q2 = linalg::random_orthogonal(n, &mut rng);
            let mut logs: Vec<f64> = (0..n).map(|_| rng.gen_range(-half..=half)).collect();
            if n >= 2 {
                logs[0] = half;
                logs[1] = -half;
            } else {
                logs[0] = 0.0;
            }
            let mut scaled = q1.clone();
            for r in 0..n {
                for c in 0..n {
                    scaled[r * n + c] *= logs[c].exp();
                }
            }
            let a = linalg::matmul(&scaled, &q2, n, n, n);
            inverse_instance(n, a).expect("well-conditioned by construction")
        })
        .collect())
}

pub fn inverse_instance(n: usize, a: Vec<f64>) -> Result<ProblemInstance> {
    let inv = linalg::inverse(&a, n).ok_or_else(|| Error::Task("singular matrix".into()))?;
    Ok(instance(TaskKind::Inverse { n }, a, inv, Meta::None))
}

/// `‖A·Y − I‖_∞ < tol`.
pub fn inverse_valid(n: usize, x: &Tensor, y: &Tensor, tol: f64) -> bool {
    if x.numel() != n * n || y.numel() != n * n {
        return false;
    }
    inverse_residual(n, x.data(), y.data()) < tol
}

pub fn inverse_residual(n: usize, a: &[f64], y: &[f64]) -> f64 {
    let p = linalg::matmul(a, y, n, n, n);
    p.iter()
        .zip(linalg::identity(n))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn addition_examples() {
        let z = addition_instance(1, vec![0.0, 0.0]);
        assert_eq!(z.y_star.data(), &[0.0]);
        // A = [[1, 2]] and B = [[3, 4]] as flattened 1×2 blocks
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = (0..2).map(|j| x[j] + x[2 + j]).collect();
        assert_eq!(y, vec![4.0, 6.0]);
    }

    #[test]
    fn completion_identity_factors() {
        let inst = completion_instance(3, 3, &linalg::identity(3), &linalg::identity(3), vec![1; 9]);
        assert_eq!(inst.y_star.data(), linalg::identity(3).as_slice());
        let full = gen_completion(4, 2, 0.0, 1.0, 1, 3).unwrap();
        assert_eq!(&full[0].x.data()[..16], full[0].y_star.data());
        assert!(gen_completion(3, 4, 0.5, 1.0, 1, 0).is_err());
    }

    #[test]
    fn completion_has_requested_rank() {
        for inst in gen_completion(6, 2, 0.5, 1.0, 20, 4).unwrap() {
            let sv = linalg::singular_values(inst.y_star.data(), 6);
            assert!(sv[1] > 1e-6);
            assert!(sv[2..].iter().all(|&s| s < 1e-8), "{sv:?}");
            let hidden = inst.x.data()[36..].iter().filter(|&&m| m == 0.0).count();
            assert_eq!(hidden, 18);
        }
    }

    #[test]
    fn inverse_examples() {
        let eye = inverse_instance(3, linalg::identity(3)).unwrap();
        assert_eq!(eye.y_star.data(), linalg::identity(3).as_slice());
        let d = inverse_instance(2, vec![2.0, 0.0, 0.0, 4.0]).unwrap();
        assert_eq!(d.y_star.data(), &[0.5, 0.0, 0.0, 0.25]);
    }

    #[test]
    fn inverse_residual_and_condition() {
        for cond in [4.0, 16.0] {
            for inst in gen_inverse(8, cond, 30, 5).unwrap() {
                assert!(inverse_residual(8, inst.x.data(), inst.y_star.data()) < 1e-8);
                let sv = linalg::singular_values(inst.x.data(), 8);
                let measured = sv[0] / sv[7];
                assert!((measured / cond - 1.0).abs() < 0.01, "{measured} vs {cond}");
            }
        }
    }
}
