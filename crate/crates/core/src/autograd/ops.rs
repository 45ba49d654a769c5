//! The closed operation set. No op broadcasts: every shape rule is spelled
//! out on the function and violations return [`Error::ShapeMismatch`].

use std::rc::Rc;

use crate::autograd::kernels::{self, axis_split};
use crate::autograd::tensor::Tensor;
use crate::error::{Error, Result};

/// Fill value used by attention masks; `softmax` maps it to exactly zero.
pub const MASK_FILL: f32 = -1e9;

/// Layer-norm epsilon used throughout the model.
pub const LAYER_NORM_EPS: f32 = 1e-5;

pub(crate) enum Op {
    MatMul(Tensor, Tensor),
    Add(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Scale(Tensor, f32),
    AddBias(Tensor, Tensor),
    Sum(Tensor),
    Concat { parts: Vec<Tensor>, axis: usize },
    Slice { src: Tensor, axis: usize, start: usize },
    Reshape(Tensor),
    Transpose(Tensor),
    Relu(Tensor),
    Softmax { src: Tensor, axis: usize },
    LayerNorm { x: Tensor, gain: Tensor, bias: Tensor, xhat: Vec<f32>, rstd: Vec<f64> },
    MaskedFill { src: Tensor, mask: Rc<[bool]> },
    Embedding { table: Tensor, ids: Vec<u32> },
    CrossEntropy { logits: Tensor, targets: Vec<u32>, ignore: Option<u32>, probs: Vec<f32>, count: usize },
    MseMasked { pred: Tensor, target: Tensor, mask: Rc<[bool]>, count: usize },
}

fn need_2d(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::invalid(op, format!("expected a 2-d tensor, got shape {s:?}"))),
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn check_axis(op: &'static str, t: &Tensor, axis: usize) -> Result<()> {
    if axis >= t.shape().len() {
        return Err(Error::invalid(op, format!("axis {axis} out of range for shape {:?}", t.shape())));
    }
    Ok(())
}

impl Tensor {
    /// `[n,k] · [k,m] → [n,m]`
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (n, k) = need_2d("matmul", self)?;
        let (k2, m) = need_2d("matmul", rhs)?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(), rhs.shape()));
        }
        let out = kernels::gemm_nn(&self.data(), &rhs.data(), n, k, m);
        Ok(Tensor::from_op(out, vec![n, m], &[self, rhs], || Op::MatMul(self.clone(), rhs.clone())))
    }

    /// Elementwise sum; shapes must be identical.
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        same_shape("add", self, rhs)?;
        let out = self.data().iter().zip(rhs.data().iter()).map(|(a, b)| a + b).collect();
        Ok(Tensor::from_op(out, self.shape().to_vec(), &[self, rhs], || Op::Add(self.clone(), rhs.clone())))
    }

    /// Elementwise product; shapes must be identical.
    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, rhs)?;
        let out = self.data().iter().zip(rhs.data().iter()).map(|(a, b)| a * b).collect();
        Ok(Tensor::from_op(out, self.shape().to_vec(), &[self, rhs], || Op::Mul(self.clone(), rhs.clone())))
    }

    pub fn scale(&self, s: f32) -> Tensor {
        let out = self.data().iter().map(|a| a * s).collect();
        Tensor::from_op(out, self.shape().to_vec(), &[self], || Op::Scale(self.clone(), s))
    }

    /// `[n,m] + [m]`, the bias row added to every row.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let (_, m) = need_2d("add_bias", self)?;
        if bias.shape() != [m] {
            return Err(Error::shape("add_bias", self.shape(), bias.shape()));
        }
        let b = bias.data();
        let mut out = self.to_vec();
        for row in out.chunks_mut(m) {
            row.iter_mut().zip(b.iter()).for_each(|(x, y)| *x += y);
        }
        drop(b);
        Ok(Tensor::from_op(out, self.shape().to_vec(), &[self, bias], || Op::AddBias(self.clone(), bias.clone())))
    }

    /// Sum of all elements → `[1]`.
    pub fn sum(&self) -> Tensor {
        let s: f64 = self.data().iter().map(|&v| v as f64).sum();
        Tensor::from_op(vec![s as f32], vec![1], &[self], || Op::Sum(self.clone()))
    }

    /// Joins tensors along `axis`; all other dims must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat", "no inputs"))?;
        check_axis("concat", first, axis)?;
        for p in &parts[1..] {
            let ok = p.shape().len() == first.shape().len()
                && p.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape("concat", first.shape(), p.shape()));
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
        let (outer, _, inner) = axis_split(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        let datas: Vec<_> = parts.iter().map(|p| p.data()).collect();
        for o in 0..outer {
            for (p, d) in parts.iter().zip(&datas) {
                let chunk = p.shape()[axis] * inner;
                out.extend_from_slice(&d[o * chunk..(o + 1) * chunk]);
            }
        }
        drop(datas);
        let refs: Vec<&Tensor> = parts.iter().collect();
        Ok(Tensor::from_op(out, shape, &refs, || Op::Concat { parts: parts.to_vec(), axis }))
    }

    /// `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        check_axis("slice", self, axis)?;
        if start >= end || end > self.shape()[axis] {
            return Err(Error::invalid(
                "slice",
                format!("range {start}..{end} invalid for axis {axis} of {:?}", self.shape()),
            ));
        }
        let (outer, len, inner) = axis_split(self.shape(), axis);
        let d = self.data();
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = o * len * inner;
            out.extend_from_slice(&d[base + start * inner..base + end * inner]);
        }
        drop(d);
        let mut shape = self.shape().to_vec();
        shape[axis] = end - start;
        Ok(Tensor::from_op(out, shape, &[self], || Op::Slice { src: self.clone(), axis, start }))
    }

    /// Same values, new shape with equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(self.to_vec(), shape.to_vec(), &[self], || Op::Reshape(self.clone())))
    }

    /// `[r,c] → [c,r]`
    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = need_2d("transpose", self)?;
        let out = kernels::transpose(&self.data(), r, c);
        Ok(Tensor::from_op(out, vec![c, r], &[self], || Op::Transpose(self.clone())))
    }

    pub fn relu(&self) -> Tensor {
        let out = self.data().iter().map(|&v| v.max(0.0)).collect();
        Tensor::from_op(out, self.shape().to_vec(), &[self], || Op::Relu(self.clone()))
    }

    /// Softmax along `axis`, normalizer accumulated in f64.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        check_axis("softmax", self, axis)?;
        let (outer, len, inner) = axis_split(self.shape(), axis);
        let d = self.data();
        let mut out = vec![0f32; d.len()];
        let mut exps = vec![0f64; len];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| o * len * inner + j * inner + i;
                let max = (0..len).map(|j| d[idx(j)]).fold(f32::NEG_INFINITY, f32::max) as f64;
                let mut z = 0f64;
                for (j, e) in exps.iter_mut().enumerate() {
                    *e = (d[idx(j)] as f64 - max).exp();
                    z += *e;
                }
                for (j, e) in exps.iter().enumerate() {
                    out[idx(j)] = (e / z) as f32;
                }
            }
        }
        drop(d);
        Ok(Tensor::from_op(out, self.shape().to_vec(), &[self], || Op::Softmax { src: self.clone(), axis }))
    }

    /// Normalizes over the last axis, then applies `gain` and `bias` (both
    /// shaped `[d]`). Moments are computed in f64.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f32) -> Result<Tensor> {
        let d = self.cols();
        if gain.shape() != [d] {
            return Err(Error::shape("layer_norm", self.shape(), gain.shape()));
        }
        if bias.shape() != [d] {
            return Err(Error::shape("layer_norm", self.shape(), bias.shape()));
        }
        let x = self.data();
        let (g, b) = (gain.data(), bias.data());
        let rows = x.len() / d;
        let mut xhat = vec![0f32; x.len()];
        let mut rstd = vec![0f64; rows];
        let mut out = vec![0f32; x.len()];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
            let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps as f64).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let xh = ((row[j] as f64 - mean) * rs) as f32;
                xhat[r * d + j] = xh;
                out[r * d + j] = xh * g[j] + b[j];
            }
        }
        drop((x, g, b));
        Ok(Tensor::from_op(out, self.shape().to_vec(), &[self, gain, bias], || Op::LayerNorm {
            x: self.clone(),
            gain: gain.clone(),
            bias: bias.clone(),
            xhat,
            rstd,
        }))
    }

    /// Replaces entries where `mask` is true with `value`.
    pub fn masked_fill(&self, mask: &[bool], value: f32) -> Result<Tensor> {
        if mask.len() != self.numel() {
            return Err(Error::shape("masked_fill", self.shape(), &[mask.len()]));
        }
        let out = self.data().iter().zip(mask).map(|(&v, &m)| if m { value } else { v }).collect();
        Ok(Tensor::from_op(out, self.shape().to_vec(), &[self], || Op::MaskedFill {
            src: self.clone(),
            mask: mask.into(),
        }))
    }

    /// Gathers rows of a `[vocab, d]` table → `[ids.len(), d]`.
    pub fn embedding(table: &Tensor, ids: &[u32]) -> Result<Tensor> {
        let (vocab, d) = need_2d("embedding", table)?;
        if ids.is_empty() {
            return Err(Error::invalid("embedding", "empty id list"));
        }
        let t = table.data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id as usize >= vocab {
                return Err(Error::UnknownToken { id, vocab });
            }
            out.extend_from_slice(&t[id as usize * d..(id as usize + 1) * d]);
        }
        drop(t);
        Ok(Tensor::from_op(out, vec![ids.len(), d], &[table], || Op::Embedding {
            table: table.clone(),
            ids: ids.to_vec(),
        }))
    }

    /// Mean token cross-entropy of `[n, vocab]` logits against `n` targets;
    /// targets equal to `ignore` are skipped. Returns `[1]` (zero when every
    /// target is ignored).
    pub fn cross_entropy(logits: &Tensor, targets: &[u32], ignore: Option<u32>) -> Result<Tensor> {
        let (n, vocab) = need_2d("cross_entropy", logits)?;
        if targets.len() != n {
            return Err(Error::shape("cross_entropy", logits.shape(), &[targets.len()]));
        }
        let l = logits.data();
        let mut probs = vec![0f32; n * vocab];
        let mut total = 0f64;
        let mut count = 0usize;
        for r in 0..n {
            let row = &l[r * vocab..(r + 1) * vocab];
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
            let z: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
            for (p, &v) in probs[r * vocab..(r + 1) * vocab].iter_mut().zip(row) {
                *p = ((v as f64 - max).exp() / z) as f32;
            }
            let t = targets[r];
            if Some(t) == ignore {
                continue;
            }
            if t as usize >= vocab {
                return Err(Error::UnknownToken { id: t, vocab });
            }
            total += z.ln() + max - row[t as usize] as f64;
            count += 1;
        }
        drop(l);
        let loss = if count == 0 { 0.0 } else { (total / count as f64) as f32 };
        Ok(Tensor::from_op(vec![loss], vec![1], &[logits], || Op::CrossEntropy {
            logits: logits.clone(),
            targets: targets.to_vec(),
            ignore,
            probs,
            count,
        }))
    }

    /// Mean squared error over entries where `mask` is true → `[1]`.
    pub fn mse_masked(pred: &Tensor, target: &Tensor, mask: &[bool]) -> Result<Tensor> {
        same_shape("mse_masked", pred, target)?;
        if mask.len() != pred.numel() {
            return Err(Error::shape("mse_masked", pred.shape(), &[mask.len()]));
        }
        let (p, t) = (pred.data(), target.data());
        let mut total = 0f64;
        let mut count = 0usize;
        for ((&a, &b), &m) in p.iter().zip(t.iter()).zip(mask) {
            if m {
                total += (a as f64 - b as f64).powi(2);
                count += 1;
            }
        }
        drop((p, t));
        let loss = if count == 0 { 0.0 } else { (total / count as f64) as f32 };
        Ok(Tensor::from_op(vec![loss], vec![1], &[pred, target], || Op::MseMasked {
            pred: pred.clone(),
            target: target.clone(),
            mask: mask.into(),
            count,
        }))
    }
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<&Tensor> {
        match self {
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) | Op::AddBias(a, b) => vec![a, b],
            Op::Scale(a, _) | Op::Sum(a) | Op::Reshape(a) | Op::Transpose(a) | Op::Relu(a) => vec![a],
            Op::Concat { parts, .. } => parts.iter().collect(),
            Op::Slice { src, .. } | Op::Softmax { src, .. } | Op::MaskedFill { src, .. } => vec![src],
            Op::LayerNorm { x, gain, bias, .. } => vec![x, gain, bias],
            Op::Embedding { table, .. } => vec![table],
            Op::CrossEntropy { logits, .. } => vec![logits],
            Op::MseMasked { pred, target, .. } => vec![pred, target],
        }
    }

    /// Pushes `grad` (the gradient w.r.t. `out`) into the parents.
    pub(crate) fn backward(&self, out: &Tensor, grad: &[f32]) {
        match self {
            Op::MatMul(a, b) => {
                let (n, k) = (a.shape()[0], a.shape()[1]);
                let m = b.shape()[1];
                if a.requires_grad() {
                    a.accumulate_grad(&kernels::gemm_nt(grad, &b.data(), n, m, k));
                }
                if b.requires_grad() {
                    b.accumulate_grad(&kernels::gemm_tn(&a.data(), grad, n, k, m));
                }
            }
            Op::Add(a, b) => {
                for p in [a, b] {
                    if p.requires_grad() {
                        p.accumulate_grad(grad);
                    }
                }
            }
            Op::Mul(a, b) => {
                if a.requires_grad() {
                    let g: Vec<f32> = grad.iter().zip(b.data().iter()).map(|(g, y)| g * y).collect();
                    a.accumulate_grad(&g);
                }
                if b.requires_grad() {
                    let g: Vec<f32> = grad.iter().zip(a.data().iter()).map(|(g, x)| g * x).collect();
                    b.accumulate_grad(&g);
                }
            }
            Op::Scale(a, s) => {
                let g: Vec<f32> = grad.iter().map(|g| g * s).collect();
                a.accumulate_grad(&g);
            }
            Op::AddBias(x, b) => {
                if x.requires_grad() {
                    x.accumulate_grad(grad);
                }
                if b.requires_grad() {
                    let m = b.numel();
                    let mut acc = vec![0f64; m];
                    for row in grad.chunks(m) {
                        acc.iter_mut().zip(row).for_each(|(a, &g)| *a += g as f64);
                    }
                    let g: Vec<f32> = acc.into_iter().map(|v| v as f32).collect();
                    b.accumulate_grad(&g);
                }
            }
            Op::Sum(a) => a.accumulate_grad(&vec![grad[0]; a.numel()]),
            Op::Concat { parts, axis } => {
                let (outer, _, inner) = axis_split(out.shape(), *axis);
                let total = out.shape()[*axis] * inner;
                let mut offset = 0;
                for p in parts {
                    let chunk = p.shape()[*axis] * inner;
                    if p.requires_grad() {
                        let mut g = Vec::with_capacity(p.numel());
                        for o in 0..outer {
                            g.extend_from_slice(&grad[o * total + offset..o * total + offset + chunk]);
                        }
                        p.accumulate_grad(&g);
                    }
                    offset += chunk;
                }
            }
            Op::Slice { src, axis, start } => {
                let (outer, len, inner) = axis_split(src.shape(), *axis);
                let width = out.shape()[*axis] * inner;
                let mut g = vec![0f32; src.numel()];
                for o in 0..outer {
                    let base = o * len * inner + start * inner;
                    g[base..base + width].copy_from_slice(&grad[o * width..(o + 1) * width]);
                }
                src.accumulate_grad(&g);
            }
            Op::Reshape(a) => a.accumulate_grad(grad),
            Op::Transpose(a) => {
                let (r, c) = (a.shape()[0], a.shape()[1]);
                a.accumulate_grad(&kernels::transpose(grad, c, r));
            }
            Op::Relu(a) => {
                let g: Vec<f32> =
                    grad.iter().zip(a.data().iter()).map(|(&g, &x)| if x > 0.0 { g } else { 0.0 }).collect();
                a.accumulate_grad(&g);
            }
            Op::Softmax { src, axis } => {
                let (outer, len, inner) = axis_split(src.shape(), *axis);
                let y = out.data();
                let mut g = vec![0f32; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| o * len * inner + j * inner + i;
                        let dot: f64 = (0..len).map(|j| grad[idx(j)] as f64 * y[idx(j)] as f64).sum();
                        for j in 0..len {
                            g[idx(j)] = (y[idx(j)] as f64 * (grad[idx(j)] as f64 - dot)) as f32;
                        }
                    }
                }
                drop(y);
                src.accumulate_grad(&g);
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let d = gain.numel();
                if gain.requires_grad() || bias.requires_grad() {
                    let mut dg = vec![0f64; d];
                    let mut db = vec![0f64; d];
                    for (grow, xrow) in grad.chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            dg[j] += grow[j] as f64 * xrow[j] as f64;
                            db[j] += grow[j] as f64;
                        }
                    }
                    if gain.requires_grad() {
                        gain.accumulate_grad(&dg.iter().map(|&v| v as f32).collect::<Vec<_>>());
                    }
                    if bias.requires_grad() {
                        bias.accumulate_grad(&db.iter().map(|&v| v as f32).collect::<Vec<_>>());
                    }
                }
                if x.requires_grad() {
                    let g_w = gain.data();
                    let mut dx = vec![0f32; grad.len()];
                    for (r, (grow, xrow)) in grad.chunks(d).zip(xhat.chunks(d)).enumerate() {
                        let dxhat: Vec<f64> = (0..d).map(|j| grow[j] as f64 * g_w[j] as f64).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
                        let mean_dx = dxhat.iter().zip(xrow).map(|(a, &b)| a * b as f64).sum::<f64>() / d as f64;
                        for j in 0..d {
                            dx[r * d + j] = (rstd[r] * (dxhat[j] - mean_d - xrow[j] as f64 * mean_dx)) as f32;
                        }
                    }
                    drop(g_w);
                    x.accumulate_grad(&dx);
                }
            }
            Op::MaskedFill { src, mask } => {
                let g: Vec<f32> = grad.iter().zip(mask.iter()).map(|(&g, &m)| if m { 0.0 } else { g }).collect();
                src.accumulate_grad(&g);
            }
            Op::Embedding { table, ids } => {
                let d = table.shape()[1];
                let mut g = vec![0f32; table.numel()];
                for (r, &id) in ids.iter().enumerate() {
                    let dst = &mut g[id as usize * d..(id as usize + 1) * d];
                    dst.iter_mut().zip(&grad[r * d..(r + 1) * d]).for_each(|(a, b)| *a += b);
                }
                table.accumulate_grad(&g);
            }
            Op::CrossEntropy { logits, targets, ignore, probs, count } => {
                let vocab = logits.shape()[1];
                let mut g = vec![0f32; probs.len()];
                if *count > 0 {
                    let scale = grad[0] / *count as f32;
                    for (r, &t) in targets.iter().enumerate() {
                        if Some(t) == *ignore {
                            continue;
                        }
                        let row = &mut g[r * vocab..(r + 1) * vocab];
                        for (gv, &p) in row.iter_mut().zip(&probs[r * vocab..(r + 1) * vocab]) {
                            *gv = p * scale;
                        }
                        row[t as usize] -= scale;
                    }
                }
                logits.accumulate_grad(&g);
            }
            Op::MseMasked { pred, target, mask, count } => {
                let scale = if *count == 0 { 0.0 } else { 2.0 * grad[0] as f64 / *count as f64 };
                let (p, t) = (pred.data(), target.data());
                let g: Vec<f32> = p
                    .iter()
                    .zip(t.iter())
                    .zip(mask.iter())
                    .map(|((&a, &b), &m)| if m { ((a as f64 - b as f64) * scale) as f32 } else { 0.0 })
                    .collect();
                drop((p, t));
                if pred.requires_grad() {
                    pred.accumulate_grad(&g);
                }
                if target.requires_grad() {
                    target.accumulate_grad(&g.iter().map(|v| -v).collect::<Vec<_>>());
                }
            }
        }
    }
}
