//! Forward and backward kernels for every differentiable operation.
//!
//! Elementwise binary ops broadcast over leading axes only: the smaller operand's
//! shape must be a suffix of the larger one's (a scalar is a suffix of anything).

use super::{NumericsError, Tensor};

/// An operation recorded on a [`Tape`](super::Tape) or evaluated with [`apply`].
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    /// `[.., m, k] x [k, n]` (shared right operand) or `[b.., m, k] x [b.., k, n]` (batched).
    MatMul,
    /// Swap the last two axes.
    TransposeLast,
    Add,
    Sub,
    Mul,
    /// Multiply by a fixed constant.
    Scale(f64),
    Sigmoid,
    Tanh,
    Relu,
    /// Softmax over the last axis.
    Softmax,
    /// Log-sum-exp over the last axis; the axis is removed.
    LogSumExp,
    /// Maximum over `axis`; the axis is removed. Ties resolve to the lowest index.
    Max { axis: usize },
    /// Row lookup into a `[rows, width]` table, producing `[ids.len(), width]`.
    Gather { ids: Vec<usize> },
    /// `start..end` with `step` along `axis`.
    Slice {
        axis: usize,
        start: usize,
        end: usize,
        step: usize,
    },
    Reshape { shape: Vec<usize> },
    Concat { axis: usize },
    /// Sum of all entries, producing a scalar.
    Sum,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::TransposeLast => "transpose",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale(_) => "scale",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::Relu => "relu",
            OpKind::Softmax => "softmax",
            OpKind::LogSumExp => "logsumexp",
            OpKind::Max { .. } => "max",
            OpKind::Gather { .. } => "gather",
            OpKind::Slice { .. } => "slice",
            OpKind::Reshape { .. } => "reshape",
            OpKind::Concat { .. } => "concat",
            OpKind::Sum => "sum",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::Mul => Some(2),
            OpKind::Concat { .. } => None,
            _ => Some(1),
        }
    }
}

/// Evaluates `op` on concrete tensors without recording anything.
pub fn apply(op: &OpKind, inputs: &[&Tensor]) -> Result<Tensor, NumericsError> {
    forward(op, inputs).map(|(t, _)| t)
}

/// Values and argmax indices of a max over `axis`.
pub fn max_with_argmax(t: &Tensor, axis: usize) -> Result<(Tensor, Vec<usize>), NumericsError> {
    let (v, aux) = forward(&OpKind::Max { axis }, &[t])?;
    Ok((v, aux.unwrap_or_default()))
}

pub(crate) fn forward(
    op: &OpKind,
    inputs: &[&Tensor],
) -> Result<(Tensor, Option<Vec<usize>>), NumericsError> {
    if let Some(n) = op.arity() {
        if inputs.len() != n {
            return Err(NumericsError::Arity {
                op: op.name(),
                expected: n,
                got: inputs.len(),
            });
        }
    } else if inputs.is_empty() {
        return Err(NumericsError::Arity {
            op: op.name(),
            expected: 1,
            got: 0,
        });
    }
    let out = match op {
        OpKind::MatMul => matmul(inputs[0], inputs[1])?,
        OpKind::TransposeLast => transpose_last(inputs[0])?,
        OpKind::Add => binary(op, inputs[0], inputs[1], |a, b| a + b)?,
        OpKind::Sub => binary(op, inputs[0], inputs[1], |a, b| a - b)?,
        OpKind::Mul => binary(op, inputs[0], inputs[1], |a, b| a * b)?,
        OpKind::Scale(c) => inputs[0].map(|v| v * c),
        OpKind::Sigmoid => inputs[0].map(sigmoid),
        OpKind::Tanh => inputs[0].map(f64::tanh),
        OpKind::Relu => inputs[0].map(|v| if v > 0.0 { v } else { 0.0 }),
        OpKind::Softmax => softmax(inputs[0]),
        OpKind::LogSumExp => logsumexp(inputs[0]),
        OpKind::Max { axis } => {
            let (t, idx) = max_axis(inputs[0], *axis)?;
            return Ok((t, Some(idx)));
        }
        OpKind::Gather { ids } => gather(inputs[0], ids)?,
        OpKind::Slice {
            axis,
            start,
            end,
            step,
        } => slice(inputs[0], *axis, *start, *end, *step)?,
        OpKind::Reshape { shape } => inputs[0].clone().reshaped(shape)?,
        OpKind::Concat { axis } => concat(inputs, *axis)?,
        OpKind::Sum => Tensor::scalar(inputs[0].sum()),
    };
    Ok((out, None))
}

/// Gradients of the inputs given the gradient of the output. Entries are `None`
/// where `needs[i]` is false.
pub(crate) fn backward(
    op: &OpKind,
    inputs: &[&Tensor],
    output: &Tensor,
    aux: Option<&[usize]>,
    grad: &Tensor,
    needs: &[bool],
) -> Vec<Option<Tensor>> {
    let mut out: Vec<Option<Tensor>> = vec![None; inputs.len()];
    match op {
        OpKind::MatMul => {
            let (ga, gb) = matmul_backward(inputs[0], inputs[1], grad, needs[0], needs[1]);
            out[0] = ga;
            out[1] = gb;
        }
        OpKind::TransposeLast => {
            out[0] = Some(transpose_last(grad).expect("rank checked in forward"));
        }
        OpKind::Add | OpKind::Sub | OpKind::Mul => {
            let (a, b) = (inputs[0], inputs[1]);
            let n = grad.numel();
            let (na, nb) = (a.numel(), b.numel());
            let g = grad.data();
            if needs[0] {
                let mut ga = vec![0.0; na];
                match op {
                    OpKind::Mul => {
                        let bd = b.data();
                        for i in 0..n {
                            ga[i % na] += g[i] * bd[i % nb];
                        }
                    }
                    _ => {
                        for i in 0..n {
                            ga[i % na] += g[i];
                        }
                    }
                }
                out[0] = Some(Tensor::new(a.shape().to_vec(), ga).expect("shape of input"));
            }
            if needs[1] {
                let mut gb = vec![0.0; nb];
                match op {
                    OpKind::Mul => {
                        let ad = a.data();
                        for i in 0..n {
                            gb[i % nb] += g[i] * ad[i % na];
                        }
                    }
                    OpKind::Sub => {
                        for i in 0..n {
                            gb[i % nb] -= g[i];
                        }
                    }
                    _ => {
                        for i in 0..n {
                            gb[i % nb] += g[i];
                        }
                    }
                }
                out[1] = Some(Tensor::new(b.shape().to_vec(), gb).expect("shape of input"));
            }
        }
        OpKind::Scale(c) => out[0] = Some(grad.map(|g| g * c)),
        OpKind::Sigmoid => out[0] = Some(zip_map(grad, output, |g, y| g * y * (1.0 - y))),
        OpKind::Tanh => out[0] = Some(zip_map(grad, output, |g, y| g * (1.0 - y * y))),
        OpKind::Relu => {
            out[0] = Some(zip_map(grad, inputs[0], |g, x| if x > 0.0 { g } else { 0.0 }))
        }
        OpKind::Softmax => {
            let cols = *output.shape().last().expect("rank >= 1");
            let mut gi = vec![0.0; output.numel()];
            for ((gr, yr), dst) in grad
                .data()
                .chunks(cols)
                .zip(output.data().chunks(cols))
                .zip(gi.chunks_mut(cols))
            {
                let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                for j in 0..cols {
                    dst[j] = yr[j] * (gr[j] - dot);
                }
            }
            out[0] = Some(Tensor::new(output.shape().to_vec(), gi).expect("same shape"));
        }
        OpKind::LogSumExp => {
            let x = inputs[0];
            let cols = *x.shape().last().expect("rank >= 1");
            let mut gi = vec![0.0; x.numel()];
            for (r, (xr, dst)) in x.data().chunks(cols).zip(gi.chunks_mut(cols)).enumerate() {
                let lse = output.data()[r];
                let g = grad.data()[r];
                for j in 0..cols {
                    dst[j] = g * (xr[j] - lse).exp();
                }
            }
            out[0] = Some(Tensor::new(x.shape().to_vec(), gi).expect("same shape"));
        }
        OpKind::Max { axis } => {
            let x = inputs[0];
            let idx = aux.expect("max records argmax");
            let (outer, len, inner) = split_axis(x.shape(), *axis);
            let mut gi = vec![0.0; x.numel()];
            for o in 0..outer {
                for i in 0..inner {
                    let k = idx[o * inner + i];
                    gi[(o * len + k) * inner + i] += grad.data()[o * inner + i];
                }
            }
            out[0] = Some(Tensor::new(x.shape().to_vec(), gi).expect("same shape"));
        }
        OpKind::Gather { ids } => {
            let table = inputs[0];
            let width = table.shape()[1];
            let mut gt = vec![0.0; table.numel()];
            for (r, &id) in ids.iter().enumerate() {
                let src = &grad.data()[r * width..(r + 1) * width];
                let dst = &mut gt[id * width..(id + 1) * width];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
            out[0] = Some(Tensor::new(table.shape().to_vec(), gt).expect("same shape"));
        }
        OpKind::Slice {
            axis,
            start,
            step,
            ..
        } => {
            let x = inputs[0];
            let mut gi = vec![0.0; x.numel()];
            slice_backward_into(x.shape(), *axis, *start, *step, grad, &mut gi);
            out[0] = Some(Tensor::new(x.shape().to_vec(), gi).expect("same shape"));
        }
        OpKind::Reshape { .. } => {
            out[0] = Some(
                grad.clone()
                    .reshaped(inputs[0].shape())
                    .expect("numel preserved"),
            );
        }
        OpKind::Concat { axis } => {
            let (outer, total, inner) = split_axis(grad.shape(), *axis);
            let mut offset = 0;
            for (n, x) in inputs.iter().enumerate() {
                let len = x.shape()[*axis];
                if needs[n] {
                    let mut gi = Vec::with_capacity(x.numel());
                    for o in 0..outer {
                        let base = (o * total + offset) * inner;
                        gi.extend_from_slice(&grad.data()[base..base + len * inner]);
                    }
                    out[n] = Some(Tensor::new(x.shape().to_vec(), gi).expect("same shape"));
                }
                offset += len;
            }
        }
        OpKind::Sum => {
            let g = grad.item();
            out[0] = Some(Tensor::full_like(inputs[0], g));
        }
    }
    out
}

/// Adds the gradient of a slice into the gradient buffer of its input.
pub(crate) fn slice_backward_into(
    shape: &[usize],
    axis: usize,
    start: usize,
    step: usize,
    grad: &Tensor,
    acc: &mut [f64],
) {
    let (outer, len, inner) = split_axis(shape, axis);
    let out_len = grad.shape()[axis];
    let g = grad.data();
    for o in 0..outer {
        for j in 0..out_len {
            let k = start + j * step;
            let src = &g[(o * out_len + j) * inner..(o * out_len + j + 1) * inner];
            let dst = &mut acc[(o * len + k) * inner..(o * len + k + 1) * inner];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}

impl Tensor {
    fn full_like(t: &Tensor, v: f64) -> Tensor {
        Tensor::new(t.shape().to_vec(), vec![v; t.numel()]).expect("valid shape")
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn check_axis(op: &'static str, t: &Tensor, axis: usize) -> Result<(), NumericsError> {
    if axis >= t.rank() {
        Err(NumericsError::InvalidAxis {
            op,
            axis,
            shape: t.shape().to_vec(),
        })
    } else {
        Ok(())
    }
}

fn binary(
    op: &OpKind,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor, NumericsError> {
    let (big, small) = if a.rank() >= b.rank() { (a, b) } else { (b, a) };
    let suffix_ok = big.shape().ends_with(small.shape());
    if !suffix_ok {
        return Err(NumericsError::ShapeMismatch {
            op: op.name(),
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let n = big.numel();
    let (ad, bd) = (a.data(), b.data());
    let (na, nb) = (ad.len(), bd.len());
    let data = if na == nb {
        ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect()
    } else {
        (0..n).map(|i| f(ad[i % na], bd[i % nb])).collect()
    };
    Tensor::new(big.shape().to_vec(), data)
}

/// `c (+)= op(a) * op(b)` for row-major buffers, where `op` optionally transposes.
/// `a` is `m x k` after `op`, `b` is `k x n` after `op`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides above address exactly the m*k, k*n and m*n buffers
    // whose lengths are asserted on entry.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

enum MatMulLayout {
    Shared { rows: usize, k: usize, n: usize },
    Batched { batch: usize, m: usize, k: usize, n: usize },
}

fn matmul_layout(a: &Tensor, b: &Tensor) -> Result<MatMulLayout, NumericsError> {
    let mismatch = || NumericsError::ShapeMismatch {
        op: "matmul",
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    };
    if a.rank() < 2 || b.rank() < 2 {
        return Err(mismatch());
    }
    let (ar, br) = (a.rank(), b.rank());
    let k = a.shape()[ar - 1];
    if b.shape()[br - 2] != k {
        return Err(mismatch());
    }
    let n = b.shape()[br - 1];
    if br == 2 {
        Ok(MatMulLayout::Shared {
            rows: a.numel() / k,
            k,
            n,
        })
    } else if ar == br && a.shape()[..ar - 2] == b.shape()[..br - 2] {
        Ok(MatMulLayout::Batched {
            batch: a.shape()[..ar - 2].iter().product(),
            m: a.shape()[ar - 2],
            k,
            n,
        })
    } else {
        Err(mismatch())
    }
}

fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    let layout = matmul_layout(a, b)?;
    let mut shape = a.shape().to_vec();
    let last = shape.len() - 1;
    match layout {
        MatMulLayout::Shared { rows, k, n } => {
            let mut c = vec![0.0; rows * n];
            gemm(rows, k, n, a.data(), false, b.data(), false, &mut c, false);
            shape[last] = n;
            Tensor::new(shape, c)
        }
        MatMulLayout::Batched { batch, m, k, n } => {
            let mut c = vec![0.0; batch * m * n];
            for i in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &a.data()[i * m * k..(i + 1) * m * k],
                    false,
                    &b.data()[i * k * n..(i + 1) * k * n],
                    false,
                    &mut c[i * m * n..(i + 1) * m * n],
                    false,
                );
            }
            shape[last] = n;
            Tensor::new(shape, c)
        }
    }
}

fn matmul_backward(
    a: &Tensor,
    b: &Tensor,
    g: &Tensor,
    need_a: bool,
    need_b: bool,
) -> (Option<Tensor>, Option<Tensor>) {
    let layout = matmul_layout(a, b).expect("validated in forward");
    let mut ga = need_a.then(|| vec![0.0; a.numel()]);
    let mut gb = need_b.then(|| vec![0.0; b.numel()]);
    match layout {
        MatMulLayout::Shared { rows, k, n } => {
            if let Some(ga) = ga.as_mut() {
                gemm(rows, n, k, g.data(), false, b.data(), true, ga, false);
            }
            if let Some(gb) = gb.as_mut() {
                gemm(k, rows, n, a.data(), true, g.data(), false, gb, false);
            }
        }
        MatMulLayout::Batched { batch, m, k, n } => {
            for i in 0..batch {
                let gi = &g.data()[i * m * n..(i + 1) * m * n];
                if let Some(ga) = ga.as_mut() {
                    let bi = &b.data()[i * k * n..(i + 1) * k * n];
                    gemm(m, n, k, gi, false, bi, true, &mut ga[i * m * k..(i + 1) * m * k], false);
                }
                if let Some(gb) = gb.as_mut() {
                    let ai = &a.data()[i * m * k..(i + 1) * m * k];
                    gemm(k, m, n, ai, true, gi, false, &mut gb[i * k * n..(i + 1) * k * n], false);
                }
            }
        }
    }
    (
        ga.map(|d| Tensor::new(a.shape().to_vec(), d).expect("shape of a")),
        gb.map(|d| Tensor::new(b.shape().to_vec(), d).expect("shape of b")),
    )
}

fn transpose_last(t: &Tensor) -> Result<Tensor, NumericsError> {
    if t.rank() < 2 {
        return Err(NumericsError::InvalidAxis {
            op: "transpose",
            axis: 1,
            shape: t.shape().to_vec(),
        });
    }
    let r = t.rank();
    let (rows, cols) = (t.shape()[r - 2], t.shape()[r - 1]);
    let batch = t.numel() / (rows * cols);
    let mut data = vec![0.0; t.numel()];
    for b in 0..batch {
        let src = &t.data()[b * rows * cols..(b + 1) * rows * cols];
        let dst = &mut data[b * rows * cols..(b + 1) * rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                dst[j * rows + i] = src[i * cols + j];
            }
        }
    }
    let mut shape = t.shape().to_vec();
    shape.swap(r - 2, r - 1);
    Tensor::new(shape, data)
}

fn softmax(t: &Tensor) -> Tensor {
    let cols = *t.shape().last().unwrap_or(&1);
    let mut data = t.data().to_vec();
    for row in data.chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Tensor::new(t.shape().to_vec(), data).expect("same shape")
}

/// Numerically stable log-sum-exp of a slice.
pub fn logsumexp_slice(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn logsumexp(t: &Tensor) -> Tensor {
    let cols = *t.shape().last().unwrap_or(&1);
    let data: Vec<f64> = t.data().chunks(cols).map(logsumexp_slice).collect();
    let shape = t.shape()[..t.rank().saturating_sub(1)].to_vec();
    Tensor::new(shape, data).expect("row count")
}

fn max_axis(t: &Tensor, axis: usize) -> Result<(Tensor, Vec<usize>), NumericsError> {
    check_axis("max", t, axis)?;
    let (outer, len, inner) = split_axis(t.shape(), axis);
    let mut vals = vec![f64::NEG_INFINITY; outer * inner];
    let mut idx = vec![0usize; outer * inner];
    let d = t.data();
    for o in 0..outer {
        for k in 0..len {
            let base = (o * len + k) * inner;
            for i in 0..inner {
                let v = d[base + i];
                let slot = o * inner + i;
                if k == 0 || v > vals[slot] {
                    vals[slot] = v;
                    idx[slot] = k;
                }
            }
        }
    }
    let mut shape = t.shape().to_vec();
    shape.remove(axis);
    Ok((Tensor::new(shape, vals)?, idx))
}

fn gather(table: &Tensor, ids: &[usize]) -> Result<Tensor, NumericsError> {
    if table.rank() != 2 {
        return Err(NumericsError::InvalidAxis {
            op: "gather",
            axis: 0,
            shape: table.shape().to_vec(),
        });
    }
    let (rows, width) = (table.shape()[0], table.shape()[1]);
    let mut data = Vec::with_capacity(ids.len() * width);
    for &id in ids {
        if id >= rows {
            return Err(NumericsError::IndexOutOfRange { index: id, bound: rows });
        }
        data.extend_from_slice(table.row(id));
    }
    Tensor::new(vec![ids.len(), width], data)
}

fn slice(
    t: &Tensor,
    axis: usize,
    start: usize,
    end: usize,
    step: usize,
) -> Result<Tensor, NumericsError> {
    check_axis("slice", t, axis)?;
    let (outer, len, inner) = split_axis(t.shape(), axis);
    if step == 0 || start >= end || end > len {
        return Err(NumericsError::InvalidSlice {
            start,
            end,
            step,
            len,
        });
    }
    let out_len = (end - start).div_ceil(step);
    let mut data = Vec::with_capacity(outer * out_len * inner);
    let d = t.data();
    for o in 0..outer {
        if step == 1 {
            data.extend_from_slice(&d[(o * len + start) * inner..(o * len + end) * inner]);
        } else {
            for j in 0..out_len {
                let k = start + j * step;
                data.extend_from_slice(&d[(o * len + k) * inner..(o * len + k + 1) * inner]);
            }
        }
    }
    let mut shape = t.shape().to_vec();
    shape[axis] = out_len;
    Tensor::new(shape, data)
}

fn concat(inputs: &[&Tensor], axis: usize) -> Result<Tensor, NumericsError> {
    let first = inputs[0];
    check_axis("concat", first, axis)?;
    let mut total = 0;
    for x in inputs {
        let same_rest = x.rank() == first.rank()
            && x
                .shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !same_rest {
            return Err(NumericsError::ShapeMismatch {
                op: "concat",
                lhs: first.shape().to_vec(),
                rhs: x.shape().to_vec(),
            });
        }
        total += x.shape()[axis];
    }
    let (outer, _, inner) = split_axis(first.shape(), axis);
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for x in inputs {
            let len = x.shape()[axis];
            data.extend_from_slice(&x.data()[o * len * inner..(o + 1) * len * inner]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Tensor::new(shape, data)
}
