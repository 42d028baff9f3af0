use crate::error::{Result, TensorError};
use crate::tensor::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, Scalar, Tensor};

fn dims<T: Scalar>(op: &'static str, x: &Tensor<T>, w: &Tensor<T>) -> Result<(usize, usize, usize)> {
    x.expect_rank(op, 2)?;
    w.expect_rank(op, 2)?;
    let (n, d) = (x.shape()[0], x.shape()[1]);
    if w.shape()[0] != d {
        return Err(TensorError::shape(
            op,
            format!("input {:?} incompatible with weight {:?}", x.shape(), w.shape()),
        ));
    }
    Ok((n, d, w.shape()[1]))
}

/// `x[N,D] · w[D,K] + b[K]`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, d, k) = dims("dense_forward", x, w)?;
    if b.shape() != [k] {
        return Err(TensorError::shape(
            "dense_forward",
            format!("bias {:?}, expected [{k}]", b.shape()),
        ));
    }
    let mut out = Tensor::zeros(&[n, k]);
    for row in out.data_mut().chunks_exact_mut(k) {
        row.copy_from_slice(b.data());
    }
    matmul_acc(x.data(), w.data(), out.data_mut(), n, d, k);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn dense_backward<T: Scalar>(grad_out: &Tensor<T>, x: &Tensor<T>, w: &Tensor<T>) -> Result<DenseGrads<T>> {
    let (n, d, k) = dims("dense_backward", x, w)?;
    if grad_out.shape() != [n, k] {
        return Err(TensorError::shape(
            "dense_backward",
            format!("grad_out {:?}, expected [{n}, {k}]", grad_out.shape()),
        ));
    }
    let mut gx = Tensor::zeros(&[n, d]);
    matmul_a_bt_acc(grad_out.data(), w.data(), gx.data_mut(), n, k, d);
    let mut gw = Tensor::zeros(&[d, k]);
    matmul_at_b_acc(x.data(), grad_out.data(), gw.data_mut(), n, d, k);
    let mut gb = Tensor::zeros(&[k]);
    for row in grad_out.data().chunks_exact(k) {
        for (acc, &g) in gb.data_mut().iter_mut().zip(row) {
            *acc += g;
        }
    }
    Ok(DenseGrads {
        input: gx,
        weights: gw,
        bias: gb,
    })
}
