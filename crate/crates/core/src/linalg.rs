//! Minimal dense vector helpers shared by the model and baselines. Row-major
//! matrices are plain `Vec<T>` with explicit dimensions at the call site.

use crate::scalar::Scalar;

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).fold(T::zero(), |s, v| s + v)
}

pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Euclidean distance `||a - b||`.
pub fn euclidean<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(T::zero(), |s, v| s + v)
        .sqrt()
}

/// `dst += w * src`.
pub fn axpy<T: Scalar>(dst: &mut [T], w: T, src: &[T]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + w * s;
    }
}

/// `out = M x` for a row-major `rows x cols` matrix.
pub fn matvec<T: Scalar>(m: &[T], rows: usize, cols: usize, x: &[T], out: &mut [T]) {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for r in 0..rows {
        out[r] = dot(&m[r * cols..(r + 1) * cols], x);
    }
}

/// `out += M^T y` for a row-major `rows x cols` matrix.
pub fn matvec_transpose_acc<T: Scalar>(m: &[T], rows: usize, cols: usize, y: &[T], out: &mut [T]) {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(y.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for r in 0..rows {
        axpy(out, y[r], &m[r * cols..(r + 1) * cols]);
    }
}

/// Rank-one update `M += y x^T` for a row-major `rows x cols` matrix.
pub fn outer_acc<T: Scalar>(m: &mut [T], rows: usize, cols: usize, y: &[T], x: &[T]) {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(y.len(), rows);
    debug_assert_eq!(x.len(), cols);
    for r in 0..rows {
        axpy(&mut m[r * cols..(r + 1) * cols], y[r], x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_and_norm() {
        assert_eq!(dot(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]), 32.0);
        assert_eq!(norm2(&[3.0, 4.0]), 5.0);
        assert_eq!(euclidean(&[1.0, 1.0], &[4.0, 5.0]), 5.0);
    }

    #[test]
    fn matvec_agrees_with_manual_expansion() {
        // M = [[1, 2], [3, 4], [5, 6]], x = [10, 100]
        let m = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut out = [0.0; 3];
        matvec(&m, 3, 2, &[10.0, 100.0], &mut out);
        assert_eq!(out, [210.0, 430.0, 650.0]);

        let mut back = [0.0; 2];
        matvec_transpose_acc(&m, 3, 2, &[1.0, 1.0, 1.0], &mut back);
        assert_eq!(back, [9.0, 12.0]);
    }

    #[test]
    fn outer_accumulates() {
        let mut m = vec![0.0; 6];
        outer_acc(&mut m, 3, 2, &[1.0, 2.0, 3.0], &[10.0, 20.0]);
        assert_eq!(m, vec![10.0, 20.0, 20.0, 40.0, 30.0, 60.0]);
    }
}
