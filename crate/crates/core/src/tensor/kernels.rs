//! Dense kernels. Every output row is computed independently with a fixed
//! accumulation order, so parallel and sequential execution agree bit for bit.

use crate::par;

/// `a[m×k] · b[k×n]`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    par::for_each_row(&mut out, n, m * k * n, |i, row| {
        let ar = &a[i * k..(i + 1) * k];
        for (p, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let br = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    });
    out
}

/// `aᵀ · g` where `a` is `m×k` and `g` is `m×n`; result is `k×n`.
pub fn matmul_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    par::for_each_row(&mut out, n, m * k * n, |i, row| {
        for r in 0..m {
            let av = a[r * k + i];
            if av == 0.0 {
                continue;
            }
            let gr = &g[r * n..(r + 1) * n];
            for (o, &gv) in row.iter_mut().zip(gr) {
                *o += av * gv;
            }
        }
    });
    out
}

/// `g · bᵀ` where `g` is `m×n` and `b` is `k×n`; result is `m×k`.
pub fn matmul_nt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    par::for_each_row(&mut out, k, m * k * n, |i, row| {
        let gr = &g[i * n..(i + 1) * n];
        for (j, o) in row.iter_mut().enumerate() {
            *o = dot(gr, &b[j * n..(j + 1) * n]);
        }
    });
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent accumulators; fixed order keeps results reproducible
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        let xr = &x[i * cols..(i + 1) * cols];
        let or = &mut out[i * cols..(i + 1) * cols];
        let mx = xr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for (o, &v) in or.iter_mut().zip(xr) {
            *o = (v - mx).exp();
            s += *o;
        }
        let inv = 1.0 / s;
        or.iter_mut().for_each(|o| *o *= inv);
    }
    out
}

/// `log Σ exp(row)` computed stably.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
}
