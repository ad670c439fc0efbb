//! Householder QR with column pivoting on column norms (rank revealing).
//!
//! nalgebra's `ColPivQR` pivots on the largest single entry, which does not
//! give the decreasing `|R_kk|` needed to read off a numerical rank.

use nalgebra::DMatrix;

use crate::scalar::Real;

pub(crate) struct PivotedQr<T: Real> {
    /// `m × n`, column-major; `R` in the upper triangle.
    r: DMatrix<T>,
    /// Householder vectors for rows `k..m`, with their `τ`.
    reflectors: Vec<(Vec<T>, T)>,
    /// Column `k` of `R` is column `perm[k]` of the input.
    perm: Vec<usize>,
}

impl<T: Real> PivotedQr<T> {
    pub fn new(mut a: DMatrix<T>) -> Self {
        let (m, n) = a.shape();
        let steps = m.min(n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut reflectors = Vec::with_capacity(steps);
        for k in 0..steps {
            let data = a.as_mut_slice();
            let norm2 = |data: &[T], j: usize| -> T {
                data[j * m + k..(j + 1) * m].iter().map(|&v| v * v).sum()
            };
            let (pivot, _) =
                (k..n)
                    .map(|j| (j, norm2(data, j)))
                    .fold(
                        (k, -T::one()),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pivot != k {
                for i in 0..m {
                    data.swap(k * m + i, pivot * m + i);
                }
                perm.swap(k, pivot);
            }
            let x = &data[k * m + k..(k + 1) * m];
            let norm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
            if norm == T::zero() {
                reflectors.push((vec![T::zero(); m - k], T::zero()));
                continue;
            }
            let alpha = if x[0] > T::zero() { -norm } else { norm };
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vv: T = v.iter().map(|&e| e * e).sum();
            let tau = T::of(2.0) / vv;
            for j in k..n {
                let col = &mut data[j * m + k..(j + 1) * m];
                let s = tau * v.iter().zip(col.iter()).map(|(&a, &b)| a * b).sum::<T>();
                for (c, &vi) in col.iter_mut().zip(&v) {
                    *c -= s * vi;
                }
            }
            reflectors.push((v, tau));
        }
        PivotedQr {
            r: a,
            reflectors,
            perm,
        }
    }

    /// `|R_kk|`, nonincreasing.
    pub fn diagonal(&self) -> Vec<T> {
        (0..self.reflectors.len())
            .map(|k| self.r[(k, k)].abs())
            .collect()
    }

    /// Applies `Qᵀ` to every column of `b` in place.
    fn apply_qt(&self, b: &mut DMatrix<T>) {
        let m = b.nrows();
        let cols = b.ncols();
        let data = b.as_mut_slice();
        for (k, (v, tau)) in self.reflectors.iter().enumerate() {
            if *tau == T::zero() {
                continue;
            }
            for j in 0..cols {
                let col = &mut data[j * m + k..(j + 1) * m];
                let s = *tau * v.iter().zip(col.iter()).map(|(&a, &b)| a * b).sum::<T>();
                for (c, &vi) in col.iter_mut().zip(v) {
                    *c -= s * vi;
                }
            }
        }
    }

    /// Least-squares solution of `A X ≈ B` for a full-column-rank `A`.
    pub fn solve(&self, mut b: DMatrix<T>) -> DMatrix<T> {
        let n = self.r.ncols();
        self.apply_qt(&mut b);
        let r = &self.r;
        let mut x = DMatrix::zeros(n, b.ncols());
        for c in 0..b.ncols() {
            for k in (0..n).rev() {
                let mut s = b[(k, c)];
                for j in k + 1..n {
                    s -= r[(k, j)] * x[(self.perm[j], c)];
                }
                x[(self.perm[k], c)] = s / r[(k, k)];
            }
        }
        x
    }
}
