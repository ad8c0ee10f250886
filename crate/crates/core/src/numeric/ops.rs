//! Forward and backward kernels for the layers the network is built from.
//!
//! Matrices are row-major `N×D` with points along rows. Weights are stored
//! `Din×Dout` so a layer is `y = x·W + b`.

use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

fn expect_matrix<T: Scalar>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::Shape {
            op,
            left: s.to_vec(),
            right: vec![0, 0],
        }),
    }
}

/// `y[i,j] = Σ_k x[i,k]·w[k,j] + b[j]`.
pub fn linear_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, din) = expect_matrix("linear_forward", x)?;
    let (wr, dout) = expect_matrix("linear_forward", w)?;
    if wr != din {
        return Err(Error::Shape {
            op: "linear_forward",
            left: x.shape().to_vec(),
            right: w.shape().to_vec(),
        });
    }
    if b.len() != dout {
        return Err(Error::Shape {
            op: "linear_forward(bias)",
            left: w.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut y = Tensor::zeros(&[n, dout]);
    for row in y.data_mut().chunks_exact_mut(dout) {
        row.copy_from_slice(b.data());
    }
    T::gemm(n, din, dout, x.data(), false, w.data(), false, y.data_mut(), true);
    Ok(y)
}

/// Gradients `(dx, dw, db)` of [`linear_forward`] given upstream `dy`.
pub fn linear_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, din) = (x.rows(), x.cols());
    let dout = w.cols();
    let mut dx = Tensor::zeros(&[n, din]);
    T::gemm(n, dout, din, dy.data(), false, w.data(), true, dx.data_mut(), false);
    let mut dw = Tensor::zeros(&[din, dout]);
    T::gemm(din, n, dout, x.data(), true, dy.data(), false, dw.data_mut(), false);
    let db = column_sums(dy);
    (dx, dw, db)
}

/// Linear layer over the per-row concatenation `[x_i ; c]` with one shared
/// conditioning vector `c`.
///
/// Equal to `linear_forward` on the explicitly concatenated input, but the
/// conditioning product `c·W[Dx..]` is evaluated once instead of per row.
pub fn conditioned_linear_forward<T: Scalar>(
    x: &Tensor<T>,
    cond: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, dx) = expect_matrix("conditioned_linear_forward", x)?;
    let (wr, dout) = expect_matrix("conditioned_linear_forward", w)?;
    let dc = cond.len();
    if wr != dx + dc || b.len() != dout {
        return Err(Error::Shape {
            op: "conditioned_linear_forward",
            left: vec![n, dx + dc],
            right: w.shape().to_vec(),
        });
    }
    let (w_x, w_c) = w.data().split_at(dx * dout);
    let mut offset = b.data().to_vec();
    T::gemm(1, dc, dout, cond.data(), false, w_c, false, &mut offset, true);
    let mut y = Tensor::zeros(&[n, dout]);
    for row in y.data_mut().chunks_exact_mut(dout) {
        row.copy_from_slice(&offset);
    }
    T::gemm(n, dx, dout, x.data(), false, w_x, false, y.data_mut(), true);
    Ok(y)
}

/// Gradients `(dx, dcond, dw, db)` of [`conditioned_linear_forward`].
pub fn conditioned_linear_backward<T: Scalar>(
    x: &Tensor<T>,
    cond: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, dx_cols) = (x.rows(), x.cols());
    let dc = cond.len();
    let dout = w.cols();
    let (w_x, w_c) = w.data().split_at(dx_cols * dout);

    let mut dx = Tensor::zeros(&[n, dx_cols]);
    T::gemm(n, dout, dx_cols, dy.data(), false, w_x, true, dx.data_mut(), false);

    let db = column_sums(dy);
    let mut dcond = Tensor::zeros(cond.shape());
    T::gemm(1, dout, dc, db.data(), false, w_c, true, dcond.data_mut(), false);

    let mut dw = Tensor::zeros(&[dx_cols + dc, dout]);
    {
        let (dw_x, dw_c) = dw.data_mut().split_at_mut(dx_cols * dout);
        T::gemm(dx_cols, n, dout, x.data(), true, dy.data(), false, dw_x, false);
        T::gemm(dc, 1, dout, cond.data(), false, db.data(), false, dw_c, false);
    }
    (dx, dcond, dw, db)
}

fn column_sums<T: Scalar>(m: &Tensor<T>) -> Tensor<T> {
    let cols = m.cols();
    let mut out = vec![T::zero(); cols];
    for row in m.data().chunks_exact(cols.max(1)) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
    Tensor::new(vec![cols], out).expect("column count matches")
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .map(|&v| if v > T::zero() { v } else { T::zero() })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Passes `dy` where the forward input was strictly positive.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Column-wise max over the rows of a `P×D` matrix.
///
/// Returns the pooled `D`-vector and, per column, the smallest row index
/// attaining the maximum.
pub fn maxpool_points<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (p, d) = expect_matrix("maxpool_points", x)?;
    if p == 0 {
        return Err(Error::Invalid("maxpool over zero points".into()));
    }
    let mut pooled = x.row(0).to_vec();
    let mut argmax = vec![0usize; d];
    for i in 1..p {
        for ((m, a), &v) in pooled.iter_mut().zip(argmax.iter_mut()).zip(x.row(i)) {
            if v > *m {
                *m = v;
                *a = i;
            }
        }
    }
    Ok((Tensor::new(vec![d], pooled)?, argmax))
}

/// Routes the pooled gradient back to the argmax rows.
pub fn maxpool_backward<T: Scalar>(rows: usize, argmax: &[usize], dpooled: &Tensor<T>) -> Tensor<T> {
    let d = argmax.len();
    let mut dx = Tensor::zeros(&[rows, d]);
    let data = dx.data_mut();
    for (j, (&i, &g)) in argmax.iter().zip(dpooled.data()).enumerate() {
        data[i * d + j] = data[i * d + j] + g;
    }
    dx
}
