//! Differentiable vector operations and their vector-Jacobian products.
//!
//! Every reduction sums left to right so identical inputs give bitwise
//! identical outputs.

use super::tensor::{check_len, Matrix, Vector};
use crate::error::{Error, Result};

/// `m v`
pub fn matvec(m: &Matrix, v: &Vector) -> Result<Vector> {
    if m.cols() != v.len() {
        return Err(Error::shape("matvec", m.shape_str(), v.shape_str()));
    }
    Ok((0..m.rows())
        .map(|i| m.row(i).iter().zip(v.iter()).map(|(a, b)| a * b).sum())
        .collect())
}

/// `m^T v`
pub fn matvec_t(m: &Matrix, v: &Vector) -> Result<Vector> {
    if m.rows() != v.len() {
        return Err(Error::shape("matvec_t", m.shape_str(), v.shape_str()));
    }
    let mut out = Vector::zeros(m.cols());
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (o, &mij) in out.as_mut_slice().iter_mut().zip(m.row(i)) {
            *o += mij * vi;
        }
    }
    Ok(out)
}

/// `m v + b`
pub fn affine(m: &Matrix, v: &Vector, b: &Vector) -> Result<Vector> {
    let mut out = matvec(m, v)?;
    out.add_scaled(1.0, b)?;
    Ok(out)
}

pub fn softmax(v: &Vector) -> Result<Vector> {
    if v.is_empty() {
        return Err(Error::shape("softmax", v.shape_str(), "non-empty vector"));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vector = v.map(|x| (x - max).exp());
    let z = exps.sum();
    Ok(exps.map(|x| x / z))
}

/// `log softmax(v)`, computed as `v - max - ln Σ exp(v - max)`.
pub fn log_softmax(v: &Vector) -> Result<Vector> {
    if v.is_empty() {
        return Err(Error::shape("log_softmax", v.shape_str(), "non-empty vector"));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    Ok(v.map(|x| x - lse))
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(v: &Vector) -> Vector {
    v.map(sigmoid_scalar)
}

pub fn tanh(v: &Vector) -> Vector {
    v.map(f64::tanh)
}

pub fn hadamard(a: &Vector, b: &Vector) -> Result<Vector> {
    check_len("hadamard", a, b)?;
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x * y).collect())
}

pub fn dot(a: &Vector, b: &Vector) -> Result<f64> {
    check_len("dot", a, b)?;
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x * y).sum())
}

/// `alpha x + y`
pub fn axpy(alpha: f64, x: &Vector, y: &Vector) -> Result<Vector> {
    check_len("axpy", x, y)?;
    Ok(x.iter().zip(y.iter()).map(|(a, b)| alpha * a + b).collect())
}

/// Negative log-likelihood of `target` under `softmax(logits)` together with
/// the gradient `softmax(logits) - onehot(target)` of that loss.
pub fn softmax_cross_entropy(logits: &Vector, target: usize) -> Result<(f64, Vector)> {
    if target >= logits.len() {
        return Err(Error::shape(
            "softmax_cross_entropy",
            logits.shape_str(),
            format!("target {target}"),
        ));
    }
    let logp = log_softmax(logits)?;
    let nll = -logp[target];
    let mut grad = logp.map(f64::exp);
    grad[target] -= 1.0;
    Ok((nll, grad))
}

// Vector-Jacobian products. `y` is always the forward output, `dy` the
// upstream gradient.

pub fn softmax_vjp(y: &Vector, dy: &Vector) -> Result<Vector> {
    let inner = dot(y, dy)?;
    Ok(y.iter().zip(dy.iter()).map(|(p, g)| p * (g - inner)).collect())
}

pub fn log_softmax_vjp(y: &Vector, dy: &Vector) -> Result<Vector> {
    check_len("log_softmax_vjp", y, dy)?;
    let total = dy.sum();
    Ok(y.iter().zip(dy.iter()).map(|(ly, g)| g - ly.exp() * total).collect())
}

pub fn sigmoid_vjp(y: &Vector, dy: &Vector) -> Result<Vector> {
    check_len("sigmoid_vjp", y, dy)?;
    Ok(y.iter().zip(dy.iter()).map(|(s, g)| g * s * (1.0 - s)).collect())
}

pub fn tanh_vjp(y: &Vector, dy: &Vector) -> Result<Vector> {
    check_len("tanh_vjp", y, dy)?;
    Ok(y.iter().zip(dy.iter()).map(|(t, g)| g * (1.0 - t * t)).collect())
}

/// Gradients of `m v` with respect to `m` and `v`.
pub fn matvec_vjp(m: &Matrix, v: &Vector, dy: &Vector) -> Result<(Matrix, Vector)> {
    let mut dm = Matrix::zeros(m.rows(), m.cols());
    dm.add_outer(1.0, dy, v)?;
    Ok((dm, matvec_t(m, dy)?))
}

/// Gradients of `a ⊙ b` with respect to `a` and `b`.
pub fn hadamard_vjp(a: &Vector, b: &Vector, dy: &Vector) -> Result<(Vector, Vector)> {
    Ok((hadamard(dy, b)?, hadamard(dy, a)?))
}


#[cfg(test)]
mod properties {
    use proptest::prelude::*;

    use super::*;
    use crate::math::gradcheck::{grad_check, DEFAULT_EPS};
    use crate::math::Rng;

    const TOL: f64 = 1e-4;

    fn vector(len: usize) -> impl Strategy<Value = Vector> {
        prop::collection::vec(-3.0..3.0f64, len).prop_map(Vector::from)
    }

    /// `<dy, f(x)>` checked against `vjp(x, dy)`.
    fn check_vjp(
        x: &Vector,
        dy: &Vector,
        f: impl Fn(&Vector) -> Result<Vector>,
        vjp: impl Fn(&Vector, &Vector) -> Result<Vector>,
    ) {
        let analytic = vjp(x, dy).unwrap();
        let report = grad_check(|p| dot(dy, &f(p)?), &analytic, x, DEFAULT_EPS, TOL).unwrap();
        assert!(report.passed(), "max rel error {}", report.max_relative_error());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn elementwise_vjps_match_finite_differences(x in vector(6), dy in vector(6)) {
            check_vjp(&x, &dy, softmax, |x, dy| softmax_vjp(&softmax(x)?, dy));
            check_vjp(&x, &dy, log_softmax, |x, dy| log_softmax_vjp(&log_softmax(x)?, dy));
            check_vjp(&x, &dy, |x| Ok(sigmoid(x)), |x, dy| sigmoid_vjp(&sigmoid(x), dy));
            check_vjp(&x, &dy, |x| Ok(tanh(x)), |x, dy| tanh_vjp(&tanh(x), dy));
        }

        #[test]
        fn bilinear_vjps_match_finite_differences(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let m = rng.uniform_matrix(3, 4, 2.0);
            let v = rng.uniform_vector(4, 2.0);
            let dy = rng.uniform_vector(3, 2.0);
            let (dm, dv) = matvec_vjp(&m, &v, &dy).unwrap();
            check_vjp(&v, &dy, |v| matvec(&m, v), |_, _| Ok(dv.clone()));
            let flat = Vector::from(m.as_slice().to_vec());
            let dm_flat = Vector::from(dm.as_slice().to_vec());
            check_vjp(
                &flat,
                &dy,
                |p| matvec(&Matrix::from_vec(3, 4, p.as_slice().to_vec())?, &v),
                |_, _| Ok(dm_flat.clone()),
            );

            let a = rng.uniform_vector(5, 2.0);
            let b = rng.uniform_vector(5, 2.0);
            let dy = rng.uniform_vector(5, 2.0);
            let (da, db) = hadamard_vjp(&a, &b, &dy).unwrap();
            check_vjp(&a, &dy, |a| hadamard(a, &b), |_, _| Ok(da.clone()));
            check_vjp(&b, &dy, |b| hadamard(&a, b), |_, _| Ok(db.clone()));
        }

        #[test]
        fn cross_entropy_gradient_matches(x in vector(7), target in 0usize..7) {
            let (_, grad) = softmax_cross_entropy(&x, target).unwrap();
            let report = grad_check(
                |p| Ok(softmax_cross_entropy(p, target)?.0),
                &grad, &x, DEFAULT_EPS, TOL,
            ).unwrap();
            prop_assert!(report.passed());
        }

        #[test]
        fn softmax_sums_to_one_and_is_permutation_equivariant(
            x in prop::collection::vec(-50.0..50.0f64, 1..12),
            seed in any::<u64>(),
        ) {
            let v = Vector::from(x.clone());
            let p = softmax(&v).unwrap();
            prop_assert!((p.sum() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&q| q >= 0.0));

            let mut perm: Vec<usize> = (0..x.len()).collect();
            Rng::new(seed).shuffle(&mut perm);
            let permuted: Vector = perm.iter().map(|&i| x[i]).collect();
            let q = softmax(&permuted).unwrap();
            // Equal up to the rounding of the normalizer's summation order.
            for (k, &i) in perm.iter().enumerate() {
                prop_assert!((q[k] - p[i]).abs() <= 1e-15 * p[i].max(f64::MIN_POSITIVE));
            }
        }

        #[test]
        fn hadamard_identity_and_zero(x in prop::collection::vec(-1e6..1e6f64, 0..10)) {
            let v = Vector::from(x);
            prop_assert_eq!(hadamard(&v, &Vector::filled(v.len(), 1.0)).unwrap(), v.clone());
            prop_assert_eq!(hadamard(&v, &Vector::zeros(v.len())).unwrap(), Vector::zeros(v.len()));
        }

        #[test]
        fn ops_are_deterministic(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let m = rng.uniform_matrix(4, 5, 3.0);
            let v = rng.uniform_vector(5, 3.0);
            let bits = |x: &Vector| x.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            let y = matvec(&m, &v).unwrap();
            prop_assert_eq!(bits(&y), bits(&matvec(&m, &v).unwrap()));
            prop_assert_eq!(bits(&softmax(&y).unwrap()), bits(&softmax(&y).unwrap()));
            prop_assert_eq!(bits(&log_softmax(&y).unwrap()), bits(&log_softmax(&y).unwrap()));
            prop_assert_eq!(bits(&sigmoid(&y)), bits(&sigmoid(&y)));
            prop_assert_eq!(bits(&tanh(&y)), bits(&tanh(&y)));
        }
    }
}
