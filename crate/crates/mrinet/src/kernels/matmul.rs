use crate::tensor::Scalar;

/// `out[M,N] = a[M,K] * b[K,N]`, row-major flat buffers.
///
/// ikj loop order keeps the inner loop contiguous over both `b` and `out`.
/// Accumulation order per output element is fixed (ascending k), so results
/// are bitwise reproducible.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for v in out.iter_mut() {
        *v = T::zero();
    }
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            if a_ik == T::zero() {
                continue;
            }
            let b_row = &b[kk * n..(kk + 1) * n];
            for (o, &b_kj) in out_row.iter_mut().zip(b_row.iter()) {
                *o += a_ik * b_kj;
            }
        }
    }
}

/// `out[K,N] = a^T[K,M] * b[M,N]` with `a` given as `[M,K]`.
pub fn matmul_at_b<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for v in out.iter_mut() {
        *v = T::zero();
    }
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            if a_ik == T::zero() {
                continue;
            }
            let out_row = &mut out[kk * n..(kk + 1) * n];
            for (o, &b_ij) in out_row.iter_mut().zip(b_row.iter()) {
                *o += a_ik * b_ij;
            }
        }
    }
}

/// `out[M,K] = a[M,N] * b^T[N,K]` with `b` given as `[K,N]`.
pub fn matmul_a_bt<T: Scalar>(a: &[T], b: &[T], m: usize, n: usize, k: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        let out_row = &mut out[i * k..(i + 1) * k];
        for (kk, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[kk * n..(kk + 1) * n];
            let mut acc = T::zero();
            for (&x, &y) in a_row.iter().zip(b_row.iter()) {
                acc += x * y;
            }
            *o = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut out = [0.0f64; 4];
        matmul(&a, &b, 2, 2, 2, &mut out);
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_variants_agree_with_plain() {
        let a = [1.0f64, -2.0, 0.5, 3.0, 4.0, -1.0]; // [2,3]
        let b = [2.0f64, 1.0, 0.0, -1.0, 1.5, 2.5]; // [3,2]
        let mut ab = [0.0f64; 4];
        matmul(&a, &b, 2, 3, 2, &mut ab);

        // a^T b with a^T given as a [2,3]: build at explicitly
        let at = [1.0f64, 3.0, -2.0, 4.0, 0.5, -1.0]; // [3,2]
        let mut atb = [0.0f64; 4];
        matmul_at_b(&at, &b, 3, 2, 2, &mut atb);
        let mut direct = [0.0f64; 4];
        matmul(&a, &b, 2, 3, 2, &mut direct);
        assert_eq!(atb, direct);

        // a * b^T with b^T given as b [3,2]: bt is [2,3]
        let bt = [2.0f64, 0.0, 1.5, 1.0, -1.0, 2.5]; // [2,3]
        let mut abt = [0.0f64; 4];
        matmul_a_bt(&a, &bt, 2, 3, 2, &mut abt);
        assert_eq!(abt, ab);
    }
}
