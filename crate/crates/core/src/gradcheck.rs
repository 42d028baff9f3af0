//! Central finite-difference gradient oracle.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Perturbation used for the central differences.
pub const STEP: f64 = 1e-3;

/// Denominator floor so that exactly-zero gradients compare by absolute error.
const REL_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (tensor index, flat coordinate) of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    /// Largest |analytic − numeric| over the checked coordinates.
    pub max_abs_error: f64,
    pub coordinates_checked: usize,
    /// Coordinates left out because the activation pattern changed within the step.
    pub skipped_at_kinks: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `f` at every coordinate of `point`.
pub fn gradcheck<F>(f: F, point: &[Tensor<f64>], analytic: &[Tensor<f64>]) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> f64,
{
    check_coords(|p: &[Tensor<f64>]| (f(p), ()), point, analytic, all_coords(point), STEP)
}

/// Like [`gradcheck`] but checks at most `per_tensor` seeded-random coordinates of each tensor.
pub fn gradcheck_sampled<F>(
    f: F,
    point: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> f64,
{
    check_coords(|p: &[Tensor<f64>]| (f(p), ()), point, analytic, sampled_coords(point, per_tensor, seed), STEP)
}

/// Checks a piecewise-smooth function whose pieces are identified by the pattern `f` returns
/// next to its value (e.g. the signs of every ReLU input).
///
/// A coordinate whose ±`step` evaluations land on a different piece than the unperturbed
/// point is not compared, since a central difference across a kink measures no derivative;
/// such coordinates are counted in [`GradCheckReport::skipped_at_kinks`].
/// `per_tensor` limits the check to that many seeded-random coordinates per tensor.
pub fn gradcheck_piecewise<F, S>(
    f: F,
    point: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    per_tensor: Option<usize>,
    seed: u64,
    step: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> (f64, S),
    S: PartialEq,
{
    let coords = match per_tensor {
        None => all_coords(point),
        Some(k) => sampled_coords(point, k, seed),
    };
    check_coords(f, point, analytic, coords, step)
}

fn all_coords(point: &[Tensor<f64>]) -> Vec<Vec<usize>> {
    point.iter().map(|t| (0..t.len()).collect()).collect()
}

fn sampled_coords(point: &[Tensor<f64>], per_tensor: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    point
        .iter()
        .map(|t| {
            if t.len() <= per_tensor {
                (0..t.len()).collect()
            } else {
                let mut idx = sample(&mut rng, t.len(), per_tensor).into_vec();
                idx.sort_unstable();
                idx
            }
        })
        .collect()
}

fn check_coords<F, S>(
    f: F,
    point: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    coords: Vec<Vec<usize>>,
    step: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> (f64, S),
    S: PartialEq,
{
    if point.len() != analytic.len() {
        return Err(TensorError::shape(
            "gradcheck",
            format!("{} inputs but {} gradients", point.len(), analytic.len()),
        ));
    }
    for (p, a) in point.iter().zip(analytic) {
        p.expect_same_shape("gradcheck", a)?;
    }
    let base = f(point).1;
    let mut work = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        max_abs_error: 0.0,
        coordinates_checked: 0,
        skipped_at_kinks: 0,
    };
    for (ti, idxs) in coords.into_iter().enumerate() {
        for i in idxs {
            let orig = work[ti].data()[i];
            work[ti].data_mut()[i] = orig + step;
            let (plus, plus_piece) = f(&work);
            work[ti].data_mut()[i] = orig - step;
            let (minus, minus_piece) = f(&work);
            work[ti].data_mut()[i] = orig;
            if plus_piece != base || minus_piece != base {
                report.skipped_at_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[ti].data()[i];
            let err = relative_error(a, numeric);
            report.coordinates_checked += 1;
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((ti, i));
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_quadratic() {
        let x = Tensor::<f64>::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let g = x.map(|v| 2.0 * v);
        let r = gradcheck(|p| p[0].data().iter().map(|v| v * v).sum(), &[x], &[g]).unwrap();
        assert!(r.max_rel_error < 1e-10);
        assert_eq!(r.coordinates_checked, 3);
    }

    #[test]
    fn flags_wrong_gradient() {
        let x = Tensor::<f64>::new(vec![2], vec![1.0, 1.0]).unwrap();
        let wrong = Tensor::new(vec![2], vec![2.0, 3.0]).unwrap();
        let r = gradcheck(|p| p[0].data().iter().map(|v| v * v).sum(), &[x], &[wrong]).unwrap();
        assert!(r.max_rel_error > 0.3);
        assert_eq!(r.worst, Some((0, 1)));
    }

    #[test]
    fn sampled_checks_requested_count() {
        let x = Tensor::<f64>::from_fn(&[50], |i| i as f64 * 0.1);
        let g = x.map(|v| v.cos());
        let r = gradcheck_sampled(|p| p[0].data().iter().map(|v| v.sin()).sum(), &[x], &[g], 7, 1).unwrap();
        assert_eq!(r.coordinates_checked, 7);
        assert!(r.max_rel_error < 1e-5);
    }

    #[test]
    fn piecewise_skips_coordinates_straddling_a_kink() {
        // |x| summed: the second coordinate sits within STEP of the kink at 0
        let x = Tensor::<f64>::new(vec![3], vec![0.5, 2e-4, -1.0]).unwrap();
        let g = x.map(f64::signum);
        let f = |p: &[Tensor<f64>]| {
            let d = p[0].data();
            (d.iter().map(|v| v.abs()).sum::<f64>(), d.iter().map(|&v| v > 0.0).collect::<Vec<_>>())
        };
        let r = gradcheck_piecewise(f, &[x.clone()], &[g], None, 0, STEP).unwrap();
        assert_eq!((r.coordinates_checked, r.skipped_at_kinks), (2, 1));
        assert!(r.max_rel_error < 1e-12);
        let r = gradcheck(|p| f(p).0, &[x.clone()], &[x.map(f64::signum)]).unwrap();
        assert!(r.max_rel_error > 0.5);
    }
}
