//! Dense kernels shared by the mixer forward pass and the tape's backward
//! pass. Everything is f64, row-major, and single-threaded; matmul loops are
//! ordered so the inner dimension is contiguous for both operands.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::{arg_err, dim_err, Result, Tensor};

fn mat_dims(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match t.shape() {
        &[r, c] => Ok((r, c)),
        s => dim_err(format!("{what} must be rank 2, got {s:?}")),
    }
}

fn batch_dims(t: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    match t.shape() {
        &[b, r, c] => Ok((b, r, c)),
        s => dim_err(format!("{what} must be rank 3, got {s:?}")),
    }
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

/// `a @ transpose(b)` where `a` is [M,K] and `b` is [N,K].
fn matmul_nt_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            out[i * n + j] = acc;
        }
    }
}

/// `transpose(a) @ b` where `a` is [K,M] and `b` is [K,N].
fn matmul_tn_into(a: &[f64], b: &[f64], out: &mut [f64], k: usize, m: usize, n: usize) {
    for kk in 0..k {
        let arow = &a[kk * m..(kk + 1) * m];
        let brow = &b[kk * n..(kk + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, ka) = mat_dims(a, "matmul lhs")?;
    let (kb, n) = mat_dims(b, "matmul rhs")?;
    if ka != kb {
        return dim_err(format!("matmul inner dims disagree: {ka} vs {kb}"));
    }
    let mut out = Tensor::zeros(vec![m, n]);
    matmul_into(a.data(), b.data(), out.data_mut(), m, ka, n);
    Ok(out)
}

pub(crate) fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, ka) = mat_dims(a, "matmul_nt lhs")?;
    let (n, kb) = mat_dims(b, "matmul_nt rhs")?;
    if ka != kb {
        return dim_err(format!("matmul_nt inner dims disagree: {ka} vs {kb}"));
    }
    let mut out = Tensor::zeros(vec![m, n]);
    matmul_nt_into(a.data(), b.data(), out.data_mut(), m, ka, n);
    Ok(out)
}

pub(crate) fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ka, m) = mat_dims(a, "matmul_tn lhs")?;
    let (kb, n) = mat_dims(b, "matmul_tn rhs")?;
    if ka != kb {
        return dim_err(format!("matmul_tn leading dims disagree: {ka} vs {kb}"));
    }
    let mut out = Tensor::zeros(vec![m, n]);
    matmul_tn_into(a.data(), b.data(), out.data_mut(), ka, m, n);
    Ok(out)
}

/// Batched matmul: `[B,M,K] @ [B,K,N] -> [B,M,N]`.
pub fn bmm(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ba, m, ka) = batch_dims(a, "bmm lhs")?;
    let (bb, kb, n) = batch_dims(b, "bmm rhs")?;
    if ba != bb || ka != kb {
        return dim_err(format!(
            "bmm shapes disagree: {:?} vs {:?}",
            a.shape(),
            b.shape()
        ));
    }
    let mut out = Tensor::zeros(vec![ba, m, n]);
    for bi in 0..ba {
        matmul_into(
            &a.data()[bi * m * ka..(bi + 1) * m * ka],
            &b.data()[bi * ka * n..(bi + 1) * ka * n],
            &mut out.data_mut()[bi * m * n..(bi + 1) * m * n],
            m,
            ka,
            n,
        );
    }
    Ok(out)
}

/// Batched `a @ transpose(b)`: `[B,M,K] x [B,N,K] -> [B,M,N]`.
pub(crate) fn bmm_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ba, m, ka) = batch_dims(a, "bmm_nt lhs")?;
    let (bb, n, kb) = batch_dims(b, "bmm_nt rhs")?;
    if ba != bb || ka != kb {
        return dim_err(format!(
            "bmm_nt shapes disagree: {:?} vs {:?}",
            a.shape(),
            b.shape()
        ));
    }
    let mut out = Tensor::zeros(vec![ba, m, n]);
    for bi in 0..ba {
        matmul_nt_into(
            &a.data()[bi * m * ka..(bi + 1) * m * ka],
            &b.data()[bi * n * ka..(bi + 1) * n * ka],
            &mut out.data_mut()[bi * m * n..(bi + 1) * m * n],
            m,
            ka,
            n,
        );
    }
    Ok(out)
}

/// Batched `transpose(a) @ b`: `[B,K,M] x [B,K,N] -> [B,M,N]`.
pub(crate) fn bmm_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ba, ka, m) = batch_dims(a, "bmm_tn lhs")?;
    let (bb, kb, n) = batch_dims(b, "bmm_tn rhs")?;
    if ba != bb || ka != kb {
        return dim_err(format!(
            "bmm_tn shapes disagree: {:?} vs {:?}",
            a.shape(),
            b.shape()
        ));
    }
    let mut out = Tensor::zeros(vec![ba, m, n]);
    for bi in 0..ba {
        matmul_tn_into(
            &a.data()[bi * ka * m..(bi + 1) * ka * m],
            &b.data()[bi * ka * n..(bi + 1) * ka * n],
            &mut out.data_mut()[bi * m * n..(bi + 1) * m * n],
            ka,
            m,
            n,
        );
    }
    Ok(out)
}

/// Transposes the last two axes of a rank-3 tensor: `[B,R,C] -> [B,C,R]`.
pub fn swap_axes_12(t: &Tensor) -> Result<Tensor> {
    let (b, r, c) = batch_dims(t, "swap_axes_12 input")?;
    let mut out = Tensor::zeros(vec![b, c, r]);
    let src = t.data();
    let dst = out.data_mut();
    for bi in 0..b {
        let sbase = bi * r * c;
        let dbase = bi * c * r;
        for ri in 0..r {
            for ci in 0..c {
                dst[dbase + ci * r + ri] = src[sbase + ri * c + ci];
            }
        }
    }
    Ok(out)
}

fn zip_same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return dim_err(format!(
            "{what} operands differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        ));
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_same_shape(a, b, "add")?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_same_shape(a, b, "sub")?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_same_shape(a, b, "mul")?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub(crate) fn add_in_place(acc: &mut Tensor, rhs: &Tensor) {
    debug_assert_eq!(acc.shape(), rhs.shape());
    for (a, b) in acc.data_mut().iter_mut().zip(rhs.data()) {
        *a += b;
    }
}

pub fn scale(t: &Tensor, factor: f64) -> Tensor {
    t.map(|v| v * factor)
}

/// Broadcasts a rank-1 bias over the last axis of `t`.
pub fn add_bias(t: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let &[n] = bias.shape() else {
        return dim_err("bias must be rank 1");
    };
    let Some(&last) = t.shape().last() else {
        return dim_err("add_bias input must have at least one axis");
    };
    if last != n {
        return dim_err(format!(
            "bias of {n} entries does not match last axis {last}"
        ));
    }
    let mut out = t.clone();
    for row in out.data_mut().chunks_exact_mut(n) {
        for (o, &b) in row.iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Ok(out)
}

/// Reduces a gradient over all leading axes, leaving the bias shape `[N]`.
pub(crate) fn bias_grad(g: &Tensor) -> Tensor {
    let n = *g.shape().last().expect("gradient has at least one axis");
    let mut out = Tensor::zeros(vec![n]);
    for row in g.data().chunks_exact(n) {
        for (o, &v) in out.data_mut().iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

pub fn relu(t: &Tensor) -> Tensor {
    t.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn sigmoid(t: &Tensor) -> Tensor {
    t.map(|v| 1.0 / (1.0 + math::exp(-v)))
}

/// Softmax over the last axis with the usual max-shift for stability.
/// Each output row sums to 1 within round-off.
pub fn softmax_lastdim(t: &Tensor) -> Result<Tensor> {
    let Some(&n) = t.shape().last() else {
        return dim_err("softmax input must have at least one axis");
    };
    if n == 0 {
        return dim_err("softmax rows must be non-empty");
    }
    let mut out = t.clone();
    for row in out.data_mut().chunks_exact_mut(n) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = math::exp(*v - max);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Indices of the k largest values. Ties break toward the lower index, so
/// the result is fully deterministic; indices come back sorted ascending.
pub fn topk_indices(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > values.len() {
        return arg_err(format!(
            "cannot take top {k} of {} values",
            values.len()
        ));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    // Stable ordering: by value descending, then by index ascending.
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .expect("topk values must not be NaN")
            .then(a.cmp(&b))
    });
    let mut picked = order[..k].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// 0/1 mask keeping the k largest entries of each row along the last axis,
/// compared by absolute value when `by_abs` is set.
pub(crate) fn topk_mask_lastdim(t: &Tensor, k: usize, by_abs: bool) -> Result<Tensor> {
    let Some(&n) = t.shape().last() else {
        return dim_err("topk mask input must have at least one axis");
    };
    if k == 0 || k > n {
        return arg_err(format!("top-k width {k} outside 1..={n}"));
    }
    let mut out = Tensor::zeros(t.shape().to_vec());
    let mut keyed = vec![0.0; n];
    for (row, orow) in t
        .data()
        .chunks_exact(n)
        .zip(out.data_mut().chunks_exact_mut(n))
    {
        for (slot, &v) in keyed.iter_mut().zip(row) {
            *slot = if by_abs { math::abs(v) } else { v };
        }
        for idx in topk_indices(&keyed, k)? {
            orow[idx] = 1.0;
        }
    }
    Ok(out)
}

pub fn sum_all(t: &Tensor) -> f64 {
    t.data().iter().sum()
}

pub fn mean_all(t: &Tensor) -> f64 {
    sum_all(t) / t.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::vec::Vec;

    fn random(shape: Vec<usize>, seed: u64) -> Tensor {
        let mut rng = Rng::from_seed(seed);
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    /// Triple-loop reference product, independent of the kernels above.
    fn oracle_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        let mut out = Tensor::zeros(vec![m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for kk in 0..k {
                    acc += a.at(&[i, kk]) * b.at(&[kk, j]);
                }
                out.data_mut()[i * n + j] = acc;
            }
        }
        out
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = random(vec![3, 4], 1);
        let b = random(vec![4, 2], 2);
        let got = matmul(&a, &b).unwrap();
        assert!(got.max_abs_diff(&oracle_matmul(&a, &b)) < 1e-12);
    }

    #[test]
    fn transposed_variants_agree_with_explicit_transpose() {
        let a = random(vec![5, 3], 3);
        let b = random(vec![4, 3], 4);
        // a @ b^T
        let mut bt = Tensor::zeros(vec![3, 4]);
        for i in 0..4 {
            for j in 0..3 {
                bt.data_mut()[j * 4 + i] = b.at(&[i, j]);
            }
        }
        let got = matmul_nt(&a, &b).unwrap();
        assert!(got.max_abs_diff(&oracle_matmul(&a, &bt)) < 1e-12);

        // a^T @ c
        let c = random(vec![5, 2], 5);
        let mut at = Tensor::zeros(vec![3, 5]);
        for i in 0..5 {
            for j in 0..3 {
                at.data_mut()[j * 5 + i] = a.at(&[i, j]);
            }
        }
        let got = matmul_tn(&a, &c).unwrap();
        assert!(got.max_abs_diff(&oracle_matmul(&at, &c)) < 1e-12);
    }

    #[test]
    fn bmm_is_per_batch_matmul() {
        let a = random(vec![2, 3, 4], 6);
        let b = random(vec![2, 4, 5], 7);
        let got = bmm(&a, &b).unwrap();
        for bi in 0..2 {
            let asub = Tensor::new(vec![3, 4], (0..12).map(|i| a.data()[bi * 12 + i]).collect())
                .unwrap();
            let bsub = Tensor::new(vec![4, 5], (0..20).map(|i| b.data()[bi * 20 + i]).collect())
                .unwrap();
            let want = oracle_matmul(&asub, &bsub);
            for i in 0..3 {
                for j in 0..5 {
                    assert!((got.at(&[bi, i, j]) - want.at(&[i, j])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn swap_axes_is_involutive() {
        let t = random(vec![2, 3, 4], 8);
        let s = swap_axes_12(&t).unwrap();
        assert_eq!(s.shape(), &[2, 4, 3]);
        assert_eq!(s.at(&[1, 2, 1]), t.at(&[1, 1, 2]));
        let back = swap_axes_12(&s).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn elementwise_and_bias() {
        let a = random(vec![2, 3], 9);
        let b = random(vec![2, 3], 10);
        let s = add(&a, &b).unwrap();
        assert!((s.at(&[1, 2]) - (a.at(&[1, 2]) + b.at(&[1, 2]))).abs() < 1e-15);
        let bias = Tensor::new(vec![3], vec![1.0, -1.0, 0.5]).unwrap();
        let ab = add_bias(&a, &bias).unwrap();
        assert!((ab.at(&[0, 1]) - (a.at(&[0, 1]) - 1.0)).abs() < 1e-15);
        let g = bias_grad(&ab);
        assert_eq!(g.shape(), &[3]);
        assert!((g.data()[0] - (ab.at(&[0, 0]) + ab.at(&[1, 0]))).abs() < 1e-15);
        assert!(add(&a, &random(vec![3, 2], 11)).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let t = random(vec![4, 7], 12);
        let s = softmax_lastdim(&t).unwrap();
        for row in s.data().chunks_exact(7) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn softmax_of_equal_scores_is_uniform() {
        let t = Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
        let s = softmax_lastdim(&t).unwrap();
        assert!((s.data()[0] - 0.5).abs() < 1e-15);
        assert!((s.data()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let s = sigmoid(&Tensor::scalar(0.0));
        assert!((s.data()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn topk_picks_largest_with_low_index_ties() {
        assert_eq!(topk_indices(&[3.0, 1.0, 2.0], 2).unwrap(), vec![0, 2]);
        assert_eq!(topk_indices(&[5.0, 5.0, 1.0], 1).unwrap(), vec![0]);
        assert!(topk_indices(&[1.0], 2).is_err());
    }

    #[test]
    fn topk_matches_full_sort_oracle() {
        let mut rng = Rng::from_seed(13);
        let values: Vec<f64> = (0..96).map(|_| rng.uniform(-10.0, 10.0)).collect();
        let got = topk_indices(&values, 8).unwrap();
        // Oracle: sort (value desc, index asc) with a full sort and take 8.
        let mut order: Vec<usize> = (0..96).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        let mut want = order[..8].to_vec();
        want.sort_unstable();
        assert_eq!(got, want);
    }

    #[test]
    fn topk_mask_keeps_k_per_row() {
        let t = Tensor::new(vec![2, 3], vec![0.5, -2.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let m = topk_mask_lastdim(&t, 2, true).unwrap();
        assert_eq!(m.data(), &[0.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
    }
}
