use crate::error::{Result, TensorError};
use crate::tensor::{Scalar, Tensor};

use super::CapsuleSet;

/// Length an active capsule is pushed above.
pub const MARGIN_HIGH: f64 = 0.9;
/// Length an inactive capsule is pushed below.
pub const MARGIN_LOW: f64 = 0.1;

/// Mean squared error over every element, with its gradient `2(pred−target)/count`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    pred.expect_same_shape("mse_loss", target)?;
    let count = T::from_usize(pred.len()).unwrap();
    let loss = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum::<T>()
        / count;
    let two = T::lit(2.0);
    let grad = pred.zip_map(target, |p, t| two * (p - t) / count)?;
    Ok((loss, grad))
}

/// Per-sample sum of capsule margin terms, averaged over the batch.
///
/// `targets` is `[batch, count]` with 1 for capsules that should be active.
/// Returns the loss and its gradient with respect to the capsule activities.
pub fn margin_loss<T: Scalar>(caps: &CapsuleSet<T>, targets: &Tensor<T>, lambda: T) -> Result<(T, Tensor<T>)> {
    let (nb, nc, d) = (caps.batch(), caps.count(), caps.dim());
    if targets.shape() != [nb, nc] {
        return Err(TensorError::shape(
            "margin_loss",
            format!("targets {:?}, capsules [{nb}, {nc}, ..]", targets.shape()),
        ));
    }
    let (hi, lo) = (T::lit(MARGIN_HIGH), T::lit(MARGIN_LOW));
    let two = T::lit(2.0);
    let scale = T::one() / T::from_usize(nb).unwrap();
    let mut loss = T::zero();
    let mut grad = Tensor::zeros(caps.activities.shape());
    for b in 0..nb {
        for c in 0..nc {
            let v = caps.vector(b, c);
            let len = v.iter().map(|&x| x * x).sum::<T>().sqrt();
            let t = targets.data()[b * nc + c];
            let up = (hi - len).max(T::zero());
            let down = (len - lo).max(T::zero());
            loss += t * up * up + lambda * (T::one() - t) * down * down;
            // d/d‖v‖, then chain through ‖v‖ = sqrt(v·v)
            let dlen = -two * t * up + two * lambda * (T::one() - t) * down;
            if len > T::zero() {
                let k = scale * dlen / len;
                let dst = &mut grad.data_mut()[(b * nc + c) * d..][..d];
                for (g, &x) in dst.iter_mut().zip(v) {
                    *g = k * x;
                }
            }
        }
    }
    Ok((loss * scale, grad))
}

/// One-hot capsule targets from the mean chroma angle of each normalized Lab patch.
///
/// The `a`/`b` plane is split into `count` equal angular sectors starting at
/// the positive `a` axis; the sector holding `atan2(b, a)` is the active capsule.
pub fn hue_sector_targets<T: Scalar>(lab: &Tensor<T>, count: usize) -> Result<Tensor<T>> {
    lab.expect_rank("hue_sector_targets", 4)?;
    if lab.shape()[1] != 3 {
        return Err(TensorError::shape(
            "hue_sector_targets",
            format!("expected 3 channels, got {:?}", lab.shape()),
        ));
    }
    let nb = lab.shape()[0];
    let plane = lab.shape()[2] * lab.shape()[3];
    let mut out = Tensor::zeros(&[nb, count]);
    for b in 0..nb {
        let mean = |ch: usize| {
            let s = &lab.data()[(b * 3 + ch) * plane..][..plane];
            s.iter().map(|x| x.to_f64().unwrap()).sum::<f64>() / plane as f64
        };
        // back to signed chroma units
        let a = mean(1) * 255.0 - 128.0;
        let bb = mean(2) * 255.0 - 128.0;
        let angle = bb.atan2(a).rem_euclid(std::f64::consts::TAU);
        let sector = ((angle / std::f64::consts::TAU * count as f64) as usize).min(count - 1);
        out.data_mut()[b * count + sector] = T::one();
    }
    Ok(out)
}
