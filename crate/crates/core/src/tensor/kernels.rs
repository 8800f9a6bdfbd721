//! Slice-level compute kernels shared by the tape's forward and backward
//! passes. Every reduction runs in a fixed order so results are
//! bit-reproducible.

use super::Real;

/// `c = a · b` with `a: m×k`, `b: k×n`. The inner sum for each `c[i,j]`
/// accumulates `t = 0..k` in ascending order starting from zero.
pub fn gemm<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T]) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    gemm_acc(m, k, n, a, b, &mut c);
    c
}

/// `c += a · b`.
pub fn gemm_acc<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    match n {
        1 => return gemm_acc_narrow::<T, 1>(k, a, b, c),
        2 => return gemm_acc_narrow::<T, 2>(k, a, b, c),
        3 => return gemm_acc_narrow::<T, 3>(k, a, b, c),
        4 => return gemm_acc_narrow::<T, 4>(k, a, b, c),
        6 => return gemm_acc_narrow::<T, 6>(k, a, b, c),
        8 => return gemm_acc_narrow::<T, 8>(k, a, b, c),
        12 => return gemm_acc_narrow::<T, 12>(k, a, b, c),
        16 => return gemm_acc_narrow::<T, 16>(k, a, b, c),
        _ => {}
    }
    for (arow, crow) in a.chunks_exact(k).zip(c.chunks_exact_mut(n)) {
        for (&av, brow) in arow.iter().zip(b.chunks_exact(n)) {
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// Same summation order as the general path, with the output row held in
/// registers for narrow outputs (attention heads).
fn gemm_acc_narrow<T: Real, const N: usize>(k: usize, a: &[T], b: &[T], c: &mut [T]) {
    for (arow, crow) in a.chunks_exact(k).zip(c.chunks_exact_mut(N)) {
        let mut acc = [T::zero(); N];
        acc.copy_from_slice(crow);
        for (&av, brow) in arow.iter().zip(b.chunks_exact(N)) {
            for j in 0..N {
                acc[j] += av * brow[j];
            }
        }
        crow.copy_from_slice(&acc);
    }
}

/// `c += aᵀ · b` with `a: m×k`, `b: m×n`, `c: k×n`.
pub fn gemm_tn_acc<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    if n <= 16 {
        let at = transpose(m, k, a);
        return gemm_acc(k, m, n, &at, b, c);
    }
    for (arow, brow) in a.chunks_exact(k).zip(b.chunks_exact(n)) {
        for (&av, crow) in arow.iter().zip(c.chunks_exact_mut(n)) {
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c += a · bᵀ` with `a: m×k`, `b: n×k`, `c: m×n`.
pub fn gemm_nt_acc<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    let bt = transpose(n, k, b);
    gemm_acc(m, k, n, a, &bt, c);
}

/// Transpose of a `rows×cols` matrix.
pub fn transpose<T: Real>(rows: usize, cols: usize, a: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows<T: Real>(cols: usize, x: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for (xr, or) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let max = xr.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for (o, &v) in or.iter_mut().zip(xr) {
            *o = (v - max).exp();
            sum += *o;
        }
        let inv = T::one() / sum;
        for o in or.iter_mut() {
            *o *= inv;
        }
    }
    out
}

/// Normalized rows and per-row inverse standard deviations.
pub fn layer_norm_stats<T: Real>(cols: usize, x: &[T], eps: T) -> (Vec<T>, Vec<T>) {
    let d = T::lit(cols as f64);
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = Vec::with_capacity(x.len() / cols);
    for (xr, hr) in x.chunks_exact(cols).zip(xhat.chunks_exact_mut(cols)) {
        let mean = xr.iter().copied().sum::<T>() / d;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / d;
        let is = T::one() / (var + eps).sqrt();
        for (h, &v) in hr.iter_mut().zip(xr) {
            *h = (v - mean) * is;
        }
        inv_std.push(is);
    }
    (xhat, inv_std)
}

/// Standard normal CDF.
pub fn normal_cdf<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    half * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

pub fn gelu<T: Real>(x: T) -> T {
    x * normal_cdf(x)
}

pub fn gelu_grad<T: Real>(x: T) -> T {
    let pdf = (-(x * x) * T::lit(0.5)).exp() * T::lit(0.398_942_280_401_432_7);
    normal_cdf(x) + x * pdf
}

/// Lay out every `k×k×c` neighbourhood of an `h×w×c` image as one row of a
/// `(h·w) × (k·k·c)` matrix, zero-filled outside the image.
pub fn im2col<T: Real>(h: usize, w: usize, c: usize, k: usize, x: &[T]) -> Vec<T> {
    let pad = (k / 2) as isize;
    let row_len = k * k * c;
    let mut cols = vec![T::zero(); h * w * row_len];
    for i in 0..h {
        for j in 0..w {
            let row = &mut cols[(i * w + j) * row_len..][..row_len];
            for dy in 0..k {
                let y = i as isize + dy as isize - pad;
                if y < 0 || y >= h as isize {
                    continue;
                }
                for dx in 0..k {
                    let xx = j as isize + dx as isize - pad;
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    let src = &x[(y as usize * w + xx as usize) * c..][..c];
                    row[(dy * k + dx) * c..][..c].copy_from_slice(src);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add columns back onto the image.
pub fn col2im<T: Real>(h: usize, w: usize, c: usize, k: usize, cols: &[T]) -> Vec<T> {
    let pad = (k / 2) as isize;
    let row_len = k * k * c;
    let mut x = vec![T::zero(); h * w * c];
    for i in 0..h {
        for j in 0..w {
            let row = &cols[(i * w + j) * row_len..][..row_len];
            for dy in 0..k {
                let y = i as isize + dy as isize - pad;
                if y < 0 || y >= h as isize {
                    continue;
                }
                for dx in 0..k {
                    let xx = j as isize + dx as isize - pad;
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    let dst = &mut x[(y as usize * w + xx as usize) * c..][..c];
                    for (d, &s) in dst.iter_mut().zip(&row[(dy * k + dx) * c..][..c]) {
                        *d += s;
                    }
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_involution() {
        let a: Vec<f64> = (0..12).map(f64::from).collect();
        let t = transpose(3, 4, &a);
        assert_eq!(t[1], 4.0);
        assert_eq!(transpose(4, 3, &t), a);
    }

    #[test]
    fn nt_and_tn_agree_with_explicit_transposes() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 * 0.5 - 1.0).collect(); // 2×3
        let b: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect(); // 4×3
        let mut c = vec![0.0; 8];
        gemm_nt_acc(2, 3, 4, &a, &b, &mut c);
        assert_eq!(c, gemm(2, 3, 4, &a, &transpose(4, 3, &b)));

        let b2: Vec<f64> = (0..8).map(|v| (v as f64).cos()).collect(); // 2×4
        let mut d = vec![0.0; 12];
        gemm_tn_acc(2, 3, 4, &a, &b2, &mut d);
        assert_eq!(d, gemm(3, 2, 4, &transpose(2, 3, &a), &b2));
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0f64), 0.0);
        assert!((gelu(10.0f64) - 10.0).abs() < 1e-6);
        // x·Φ(x) at x = 1, Φ(1) from a 30-digit erf evaluation
        assert!((gelu(1.0f64) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((gelu(-1.0f64) + 0.158_655_253_931_457_05).abs() < 1e-15);
    }
}
