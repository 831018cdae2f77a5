//! Small dense kernels: SPD factorization and a thin SVD.
//!
//! Everything here works on row-major `ndarray` matrices in standard layout.

use ndarray::{Array1, Array2};

use crate::Real;

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Array2<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factorizes `a` in place. Only the lower triangle of `a` is read.
    /// Returns the failing pivot index when `a` is not numerically SPD.
    pub fn factor(mut a: Array2<T>) -> Result<Self, usize> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Cholesky needs a square matrix");
        if !a.is_standard_layout() {
            a = a.as_standard_layout().to_owned();
        }
        let buf = a.as_slice_mut().expect("standard layout");
        for i in 0..n {
            let (head, rest) = buf.split_at_mut(i * n);
            let row_i = &mut rest[..n];
            for j in 0..i {
                let row_j = &head[j * n..j * n + j];
                let s = row_i[j] - dot(&row_i[..j], row_j);
                row_i[j] = s / head[j * n + j];
            }
            let s = row_i[i] - dot(&row_i[..i], &row_i[..i]);
            if !(s > T::zero()) || !s.is_finite() {
                return Err(i);
            }
            row_i[i] = s.sqrt();
            for v in &mut row_i[i + 1..] {
                *v = T::zero();
            }
        }
        Ok(Cholesky { l: a })
    }

    pub fn lower(&self) -> &Array2<T> {
        &self.l
    }

    /// Solves `A X = B` for a row-major right-hand side with any column count.
    pub fn solve(&self, b: &Array2<T>) -> Array2<T> {
        let n = self.l.nrows();
        assert_eq!(b.nrows(), n, "right-hand side row count");
        let m = b.ncols();
        let mut x = b.as_standard_layout().to_owned();
        let l = self.l.as_slice().expect("standard layout");
        let xs = x.as_slice_mut().expect("standard layout");
        // forward: L y = b
        for i in 0..n {
            let (done, rest) = xs.split_at_mut(i * m);
            let xi = &mut rest[..m];
            for j in 0..i {
                let lij = l[i * n + j];
                if lij != T::zero() {
                    let xj = &done[j * m..(j + 1) * m];
                    for c in 0..m {
                        xi[c] -= lij * xj[c];
                    }
                }
            }
            let d = l[i * n + i];
            for v in xi.iter_mut() {
                *v /= d;
            }
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let d = l[i * n + i];
            let (head, rest) = xs.split_at_mut(i * m);
            let xi = &mut rest[..m];
            for v in xi.iter_mut() {
                *v /= d;
            }
            for j in 0..i {
                let lij = l[i * n + j];
                if lij != T::zero() {
                    let xj = &mut head[j * m..(j + 1) * m];
                    for c in 0..m {
                        xj[c] -= lij * xi[c];
                    }
                }
            }
        }
        x
    }
}

/// Thin SVD of an `m x k` matrix by one-sided Jacobi rotations.
/// Returns `(u, sigma, v)` with `a = u diag(sigma) v^T`; columns of `u` for zero singular values are zero.
pub fn thin_svd<T: Real>(a: &Array2<T>) -> (Array2<T>, Array1<T>, Array2<T>) {
    let (m, k) = a.dim();
    let mut u = a.clone();
    let mut v = Array2::<T>::eye(k);
    let two = T::lit(2.0);
    for _sweep in 0..64 {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..m {
                    alpha += u[[i, p]] * u[[i, p]];
                    beta += u[[i, q]] * u[[i, q]];
                    gamma += u[[i, p]] * u[[i, q]];
                }
                if gamma == T::zero() || gamma.abs() <= T::epsilon() * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (zeta * zeta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for i in 0..m {
                    let up = u[[i, p]];
                    let uq = u[[i, q]];
                    u[[i, p]] = c * up - s * uq;
                    u[[i, q]] = s * up + c * uq;
                }
                for i in 0..k {
                    let vp = v[[i, p]];
                    let vq = v[[i, q]];
                    v[[i, p]] = c * vp - s * vq;
                    v[[i, q]] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma = Array1::<T>::zeros(k);
    for j in 0..k {
        let norm = u.column(j).iter().map(|x| *x * *x).sum::<T>().sqrt();
        sigma[j] = norm;
        for i in 0..m {
            u[[i, j]] = if norm > T::zero() { u[[i, j]] / norm } else { T::zero() };
        }
    }
    (u, sigma, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0f64));
        m.dot(&m.t()) + Array2::<f64>::eye(n) * 0.5
    }

    #[test]
    fn cholesky_reconstructs_and_solves() {
        for (n, seed) in [(1, 1), (7, 2), (33, 3)] {
            let a = random_spd(n, seed);
            let ch = Cholesky::factor(a.clone()).unwrap();
            let l = ch.lower();
            let rebuilt = l.dot(&l.t());
            assert!((&rebuilt - &a).iter().all(|e| e.abs() < 1e-10));
            let b = Array2::from_shape_fn((n, 3), |(i, j)| (i + 2 * j) as f64 - 1.5);
            let x = ch.solve(&b);
            let r = a.dot(&x) - &b;
            assert!(r.iter().all(|e| e.abs() < 1e-9), "n={n}");
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert_eq!(Cholesky::factor(a).unwrap_err(), 1);
    }

    #[test]
    fn svd_reconstructs_tall_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Array2::from_shape_fn((20, 4), |_| rng.random_range(-2.0..2.0f64));
        let (u, s, v) = thin_svd(&a);
        let rebuilt = u.dot(&Array2::from_diag(&s)).dot(&v.t());
        assert!((&rebuilt - &a).iter().all(|e| e.abs() < 1e-10));
        let utu = u.t().dot(&u);
        assert!((&utu - &Array2::<f64>::eye(4)).iter().all(|e| e.abs() < 1e-10));
    }

    #[test]
    fn svd_of_rank_deficient_matrix() {
        let b = array![[1.0, 1.0], [2.0, 2.0], [-1.0, -1.0]];
        let (_, s, _) = thin_svd(&b);
        let top = s.iter().cloned().fold(0.0, f64::max);
        let low = s.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((top - 12f64.sqrt()).abs() < 1e-12);
        assert!(low < 1e-12);
    }
}
