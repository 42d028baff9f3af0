//! Squash nonlinearity and routing-by-agreement.
//!
//! Activity tensors keep the capsule vector on the last axis:
//! primary capsules are `[batch, count, dim]`, prediction vectors are
//! `[batch, primary, output, dim]`.

use crate::error::{Result as TensorResult, TensorError};
use crate::ops::softmax;
use crate::tensor::{Scalar, Tensor};

use super::ModelError;

/// Norm guard in the squash denominator.
pub const SQUASH_EPS: f64 = 1e-8;

/// A batch of capsule activity vectors, `[batch, count, dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CapsuleSet<T = f32> {
    pub activities: Tensor<T>,
}

impl<T: Scalar> CapsuleSet<T> {
    pub fn batch(&self) -> usize {
        self.activities.shape()[0]
    }

    pub fn count(&self) -> usize {
        self.activities.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.activities.shape()[2]
    }

    pub fn vector(&self, b: usize, c: usize) -> &[T] {
        let d = self.dim();
        let at = (b * self.count() + c) * d;
        &self.activities.data()[at..at + d]
    }

    /// Euclidean lengths, `[batch, count]`.
    pub fn lengths(&self) -> Tensor<T> {
        let d = self.dim();
        let data = self
            .activities
            .data()
            .chunks_exact(d)
            .map(|v| norm(v))
            .collect();
        Tensor::new(vec![self.batch(), self.count()], data).expect("consistent shape")
    }
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

fn squash_scale<T: Scalar>(n: T) -> T {
    let n2 = n * n;
    n2 / ((T::one() + n2) * (n + T::lit(SQUASH_EPS)))
}

/// `‖s‖²/(1+‖s‖²) · s/‖s‖`, with the zero vector mapped to zero.
pub fn squash<T: Scalar>(s: &[T]) -> Vec<T> {
    let k = squash_scale(norm(s));
    s.iter().map(|&x| k * x).collect()
}

/// Applies [`squash`] to every vector along the last axis.
pub fn squash_last_axis<T: Scalar>(s: &Tensor<T>) -> Tensor<T> {
    let d = *s.shape().last().expect("rank >= 1");
    let mut out = s.clone();
    for v in out.data_mut().chunks_exact_mut(d) {
        let k = squash_scale(norm(v));
        v.iter_mut().for_each(|x| *x *= k);
    }
    out
}

/// Gradient of [`squash_last_axis`] given its forward input.
pub fn squash_last_axis_backward<T: Scalar>(grad_out: &Tensor<T>, s: &Tensor<T>) -> TensorResult<Tensor<T>> {
    grad_out.expect_same_shape("squash_backward", s)?;
    let d = *s.shape().last().expect("rank >= 1");
    let eps = T::lit(SQUASH_EPS);
    let two = T::lit(2.0);
    let mut out = Tensor::zeros(s.shape());
    for ((gs, sv), gv) in out
        .data_mut()
        .chunks_exact_mut(d)
        .zip(s.data().chunks_exact(d))
        .zip(grad_out.data().chunks_exact(d))
    {
        let n = norm(sv);
        let n2 = n * n;
        let den = (T::one() + n2) * (n + eps);
        let scale = n2 / den;
        // (d scale / dn) / n, written without dividing by n
        let dden = two * n * (n + eps) + T::one() + n2;
        let radial = (two * den - n * dden) / (den * den);
        let dot: T = sv.iter().zip(gv).map(|(&a, &b)| a * b).sum();
        for ((g, &x), &go) in gs.iter_mut().zip(sv).zip(gv) {
            *g = scale * go + radial * dot * x;
        }
    }
    Ok(out)
}

/// Result of routing: output capsules plus what the backward pass needs.
#[derive(Clone, Debug)]
pub struct Routing<T = f32> {
    pub output: CapsuleSet<T>,
    /// Weighted sums before the final squash, `[batch, output, dim]`.
    pub pre_squash: Tensor<T>,
    /// Coupling coefficients of each iteration, `[batch, primary, output]`.
    pub couplings: Vec<Tensor<T>>,
}

/// Routing-by-agreement over prediction vectors `[batch, primary, output, dim]`.
pub fn dynamic_routing<T: Scalar>(predictions: &Tensor<T>, iterations: usize) -> Result<Routing<T>, ModelError> {
    if iterations < 1 {
        return Err(ModelError::Config("routing needs at least one iteration".into()));
    }
    predictions.expect_rank("dynamic_routing", 4)?;
    let sh = predictions.shape();
    let (nb, np, nc, d) = (sh[0], sh[1], sh[2], sh[3]);
    let u = predictions.data();
    let mut logits = Tensor::<T>::zeros(&[nb, np, nc]);
    let mut couplings = Vec::with_capacity(iterations);
    let mut s = Tensor::zeros(&[nb, nc, d]);
    let mut v = Tensor::zeros(&[nb, nc, d]);
    for it in 0..iterations {
        let c = softmax(&logits, 2)?;
        s.data_mut().fill(T::zero());
        for b in 0..nb {
            for i in 0..np {
                for j in 0..nc {
                    let cij = c.data()[(b * np + i) * nc + j];
                    let src = &u[((b * np + i) * nc + j) * d..][..d];
                    let dst = &mut s.data_mut()[(b * nc + j) * d..][..d];
                    for (acc, &x) in dst.iter_mut().zip(src) {
                        *acc += cij * x;
                    }
                }
            }
        }
        v = squash_last_axis(&s);
        if it + 1 < iterations {
            for b in 0..nb {
                for i in 0..np {
                    for j in 0..nc {
                        let src = &u[((b * np + i) * nc + j) * d..][..d];
                        let vj = &v.data()[(b * nc + j) * d..][..d];
                        let agree: T = src.iter().zip(vj).map(|(&x, &y)| x * y).sum();
                        logits.data_mut()[(b * np + i) * nc + j] += agree;
                    }
                }
            }
        }
        couplings.push(c);
    }
    Ok(Routing {
        output: CapsuleSet { activities: v },
        pre_squash: s,
        couplings,
    })
}

/// Gradient with respect to the predictions, holding the final couplings fixed.
pub fn routing_backward<T: Scalar>(grad_v: &Tensor<T>, routing: &Routing<T>, predictions_shape: &[usize]) -> TensorResult<Tensor<T>> {
    let g_s = squash_last_axis_backward(grad_v, &routing.pre_squash)?;
    let c = routing.couplings.last().ok_or(TensorError::shape("routing_backward", "no couplings"))?;
    let (nb, np, nc, d) = (
        predictions_shape[0],
        predictions_shape[1],
        predictions_shape[2],
        predictions_shape[3],
    );
    if c.shape() != [nb, np, nc] {
        return Err(TensorError::shape(
            "routing_backward",
            format!("couplings {:?} vs predictions {predictions_shape:?}", c.shape()),
        ));
    }
    let mut g_u = Tensor::zeros(predictions_shape);
    for b in 0..nb {
        for i in 0..np {
            for j in 0..nc {
                let cij = c.data()[(b * np + i) * nc + j];
                let src = &g_s.data()[(b * nc + j) * d..][..d];
                let dst = &mut g_u.data_mut()[((b * np + i) * nc + j) * d..][..d];
                for (o, &g) in dst.iter_mut().zip(src) {
                    *o = cij * g;
                }
            }
        }
    }
    Ok(g_u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::gradcheck;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn squash_anchor_values() {
        assert_eq!(squash(&[0.0f64, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
        let v = squash(&[1.0f64, 0.0]);
        assert!((v[0] - 0.5).abs() < 1e-8 && v[1] == 0.0);
        let v = squash(&[0.0f64, 3.0]);
        assert!(v[0] == 0.0 && (v[1] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn squash_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = Tensor::<f64>::from_fn(&[3, 4, 5], |_| rng.gen_range(-1.5..1.5));
        let probe = Tensor::from_fn(s.shape(), |_| rng.gen_range(-1.0..1.0));
        let g = squash_last_axis_backward(&probe, &s).unwrap();
        let loss = |p: &[Tensor<f64>]| {
            squash_last_axis(&p[0]).data().iter().zip(probe.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let r = gradcheck(loss, &[s], &[g]).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn squash_gradient_at_origin_is_finite() {
        let s = Tensor::<f64>::zeros(&[1, 4]);
        let g = squash_last_axis_backward(&Tensor::full(&[1, 4], 1.0), &s).unwrap();
        assert!(g.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_iteration_is_uniform_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (nb, np, nc, d) = (2, 5, 3, 4);
        let u = Tensor::<f32>::from_fn(&[nb, np, nc, d], |_| rng.gen_range(-1.0..1.0));
        let r = dynamic_routing(&u, 1).unwrap();
        let w = 1.0 / nc as f32;
        for b in 0..nb {
            for j in 0..nc {
                let mut s = vec![0.0f32; d];
                for i in 0..np {
                    for (k, acc) in s.iter_mut().enumerate() {
                        *acc += w * u.data()[((b * np + i) * nc + j) * d + k];
                    }
                }
                let expected = squash(&s);
                let got = r.output.vector(b, j);
                assert!(expected.iter().zip(got).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
        }
    }

    #[test]
    fn symmetric_predictions_give_equal_outputs() {
        let u = Tensor::<f64>::new(vec![1, 1, 2, 3], vec![0.4, -1.0, 2.0, 0.4, -1.0, 2.0]).unwrap();
        let r = dynamic_routing(&u, 1).unwrap();
        let half = squash(&[0.2, -0.5, 1.0]);
        assert_eq!(r.output.vector(0, 0), half.as_slice());
        assert_eq!(r.output.vector(0, 1), half.as_slice());
    }

    /// Plain-array routing-by-agreement for one sample: returns (outputs, final couplings).
    fn hand_rolled_routing(u: &[[[f64; 2]; 2]; 2], iters: usize) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
        let mut b = [[0.0f64; 2]; 2];
        let mut c = [[0.5f64; 2]; 2];
        let mut v = [[0.0f64; 2]; 2];
        for it in 0..iters {
            for i in 0..2 {
                let (e0, e1) = (b[i][0].exp(), b[i][1].exp());
                c[i] = [e0 / (e0 + e1), e1 / (e0 + e1)];
            }
            for j in 0..2 {
                let s = [
                    c[0][j] * u[0][j][0] + c[1][j] * u[1][j][0],
                    c[0][j] * u[0][j][1] + c[1][j] * u[1][j][1],
                ];
                let n2 = s[0] * s[0] + s[1] * s[1];
                let k = n2 / (1.0 + n2) / (n2.sqrt() + 1e-8);
                v[j] = [k * s[0], k * s[1]];
            }
            if it + 1 < iters {
                for i in 0..2 {
                    for j in 0..2 {
                        b[i][j] += u[i][j][0] * v[j][0] + u[i][j][1] * v[j][1];
                    }
                }
            }
        }
        (v, c)
    }

    #[test]
    fn three_iterations_follow_agreement() {
        // both primaries predict the same vector for output 0 and opposite ones for output 1
        let u = [[[1.5, 0.5], [0.0, 2.0]], [[1.5, 0.5], [0.0, -2.0]]];
        let flat: Vec<f64> = u.iter().flatten().flatten().copied().collect();
        let r = dynamic_routing(&Tensor::new(vec![1, 2, 2, 2], flat).unwrap(), 3).unwrap();
        let (v, c) = hand_rolled_routing(&u, 3);
        let last = r.couplings.last().unwrap().data();
        for i in 0..2 {
            assert!(c[i][0] > 0.5 && last[i * 2] > 0.5, "{c:?}");
            for j in 0..2 {
                assert!((last[i * 2 + j] - c[i][j]).abs() < 1e-6);
                for k in 0..2 {
                    assert!((r.output.activities.data()[j * 2 + k] - v[j][k]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn zero_iterations_is_a_config_error() {
        let u = Tensor::<f32>::zeros(&[1, 1, 1, 1]);
        assert!(matches!(dynamic_routing(&u, 0), Err(ModelError::Config(_))));
    }

    #[test]
    fn routing_backward_matches_finite_differences_for_one_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u = Tensor::<f64>::from_fn(&[2, 3, 2, 4], |_| rng.gen_range(-1.0..1.0));
        let probe = Tensor::from_fn(&[2, 2, 4], |_| rng.gen_range(-1.0..1.0));
        let r = dynamic_routing(&u, 1).unwrap();
        let g = routing_backward(&probe, &r, u.shape()).unwrap();
        let loss = |p: &[Tensor<f64>]| {
            let r = dynamic_routing(&p[0], 1).unwrap();
            r.output.activities.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let rep = gradcheck(loss, &[u], &[g]).unwrap();
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    }

    proptest! {
        #[test]
        fn squash_keeps_direction_and_shrinks(v in prop::collection::vec(-20.0f64..20.0, 1..10)) {
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let out = squash(&v);
            let m: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(m < 1.0);
            if n > 1e-6 {
                let cos = v.iter().zip(&out).map(|(a, b)| a * b).sum::<f64>() / (n * m);
                prop_assert!((cos - 1.0).abs() <= 1e-6);
            }
        }

        #[test]
        fn couplings_are_distributions(seed in any::<u64>(), iters in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = Tensor::<f32>::from_fn(&[2, 4, 3, 5], |_| rng.gen_range(-2.0..2.0));
            let r = dynamic_routing(&u, iters).unwrap();
            prop_assert_eq!(r.couplings.len(), iters);
            for c in &r.couplings {
                for row in c.data().chunks_exact(3) {
                    prop_assert!(row.iter().all(|&x| x >= 0.0));
                    let s: f64 = row.iter().map(|&x| f64::from(x)).sum();
                    prop_assert!((s - 1.0).abs() <= 1e-6);
                }
            }
        }
    }
}
