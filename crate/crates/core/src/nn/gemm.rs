//! Safe wrappers over the `matrixmultiply` f64 kernel for the three
//! orientations the conv layers need. All matrices are row-major slices.

/// `c = a·b + beta·c` with `a: (m, k)`, `b: (k, n)`, `c: (m, n)`.
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = aᵀ·b + beta·c` with `a` stored as `(k, m)`, `b: (k, n)`, `c: (m, n)`.
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    assert_eq!(a.len(), k * m);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = a·bᵀ + beta·c` with `a: (m, k)`, `b` stored as `(n, k)`, `c: (m, n)`.
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), n * k);
    assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orientations_agree_with_hand_math() {
        // a = [[1, 2], [3, 4], [5, 6]] (3x2), b = [[1, 0, 1], [2, 1, 0]] (2x3)
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 1.0, 2.0, 1.0, 0.0];
        let mut c = vec![0.0; 9];
        gemm_nn(3, 2, 3, &a, &b, 0.0, &mut c);
        assert_eq!(c, vec![5.0, 2.0, 1.0, 11.0, 4.0, 3.0, 17.0, 6.0, 5.0]);

        // aᵀ where a is stored (2, 3): same logical 3x2 as above.
        let a_t = [1.0, 3.0, 5.0, 2.0, 4.0, 6.0];
        let mut c2 = vec![0.0; 9];
        gemm_tn(3, 2, 3, &a_t, &b, 0.0, &mut c2);
        assert_eq!(c2, c);

        // bᵀ where b is stored (3, 2).
        let b_t = [1.0, 2.0, 0.0, 1.0, 1.0, 0.0];
        let mut c3 = vec![0.0; 9];
        gemm_nt(3, 2, 3, &a, &b_t, 0.0, &mut c3);
        assert_eq!(c3, c);
    }

    #[test]
    fn beta_accumulates() {
        let a = [1.0, 0.0, 0.0, 1.0];
        let b = [2.0, 0.0, 0.0, 2.0];
        let mut c = vec![1.0; 4];
        gemm_nn(2, 2, 2, &a, &b, 1.0, &mut c);
        assert_eq!(c, vec![3.0, 1.0, 1.0, 3.0]);
    }
}
