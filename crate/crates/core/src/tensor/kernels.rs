//! Raw numeric kernels over `&[f64]` slices.
//!
//! Both the autodiff graph and the cache-based inference path call these.
//! Sharing one kernel per operation keeps the two paths bit-identical: each
//! output element is a sum over the same terms in the same order.

use crate::fmath;
use alloc::vec;
use alloc::vec::Vec;

/// C[m,n] += A[m,k] * B[k,n], row-major. The i-k-j loop order keeps B and C
/// accesses sequential and fixes the accumulation order over k.
pub fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                c_row[j] += a_ip * b_row[j];
            }
        }
    }
}

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    matmul_acc(a, b, m, k, n, &mut c);
    c
}

/// C[m,k] += A[m,n] * B[k,n]^T  (i.e. `a @ b.T` without materializing the
/// transpose). Used by matmul backward for the left operand.
pub fn matmul_nt_acc(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * k);
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        let c_row = &mut c[i * k..(i + 1) * k];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += a_row[j] * b_row[j];
            }
            c_row[p] += s;
        }
    }
}

/// C[k,n] += A[m,k]^T * B[m,n]. Used by matmul backward for the right operand.
pub fn matmul_tn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let c_row = &mut c[p * n..(p + 1) * n];
            for j in 0..n {
                c_row[j] += a_ip * b_row[j];
            }
        }
    }
}

/// tanh-approximation GELU, the fixed activation of the model.
#[inline]
pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + fmath::tanh(C * (x + 0.044715 * x * x * x)))
}

/// d gelu / dx.
#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = fmath::tanh(u);
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Softmax of one contiguous lane, max-subtracted for stability.
/// Writes into `out`, returns nothing. `out.len() == lane.len()`.
pub fn softmax_lane(lane: &[f64], out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for &v in lane {
        if v > max {
            max = v;
        }
    }
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(lane) {
        let e = fmath::exp(v - max);
        *o = e;
        sum += e;
    }
    let inv = 1.0 / sum;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

/// Layer normalization of one lane: `(x - mean) / sqrt(var + eps)`, then
/// gain/bias. Population variance (divide by n).
pub fn layer_norm_lane(lane: &[f64], gain: &[f64], bias: &[f64], eps: f64, out: &mut [f64]) {
    let n = lane.len() as f64;
    let mut mean = 0.0;
    for &v in lane {
        mean += v;
    }
    mean /= n;
    let mut var = 0.0;
    for &v in lane {
        let d = v - mean;
        var += d * d;
    }
    var /= n;
    let inv = 1.0 / fmath::sqrt(var + eps);
    for i in 0..lane.len() {
        out[i] = (lane[i] - mean) * inv * gain[i] + bias[i];
    }
}

/// log(sum(exp(lane))) with max subtraction.
pub fn log_sum_exp(lane: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &v in lane {
        if v > max {
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for &v in lane {
        sum += fmath::exp(v - max);
    }
    max + fmath::ln(sum)
}

/// Index of the largest element; ties resolve to the lowest index.
pub fn argmax(lane: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in lane.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}
