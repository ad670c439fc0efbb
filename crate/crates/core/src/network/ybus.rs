use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::Network;
use crate::scalar::Real;

/// Bus admittance matrix `G + jB` in compressed-row form.
///
/// Rows and columns follow the order of [`Network::buses`]. The pattern
/// holds the diagonal plus every bus pair joined by an in-service branch.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmittanceMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    g: Vec<T>,
    b: Vec<T>,
}

impl<T: Real> AdmittanceMatrix<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// `(G_ij, B_ij)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> (T, T) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(k) => (self.g[range.start + k], self.b[range.start + k]),
            Err(_) => (T::zero(), T::zero()),
        }
    }

    /// Nonzero entries of row `i` as `(j, G_ij, B_ij)`, ascending `j`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T, T)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.g[k], self.b[k]))
    }

    /// Column indices of row `i` (the structural pattern).
    pub fn pattern(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Admittance from bus `i` to ground: the row sum `Σ_k Y_ik`.
    ///
    /// Equals shunt plus half line-charging for plain lines; taps add their
    /// own asymmetric contribution.
    pub fn ground(&self, i: usize) -> (T, T) {
        self.row(i)
            .fold((T::zero(), T::zero()), |(gs, bs), (_, g, b)| {
                (gs + g, bs + b)
            })
    }

    pub fn dense_g(&self) -> DMatrix<T> {
        self.dense(|g, _| g)
    }

    pub fn dense_b(&self) -> DMatrix<T> {
        self.dense(|_, b| b)
    }

    fn dense(&self, pick: impl Fn(T, T) -> T) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, g, b) in self.row(i) {
                m[(i, j)] = pick(g, b);
            }
        }
        m
    }
}

/// Series admittance `1 / (r + jx)`.
pub(crate) fn series_admittance<T: Real>(r: T, x: T) -> (T, T) {
    let d = r * r + x * x;
    (r / d, -x / d)
}

/// Builds the bus admittance matrix.
///
/// Branch model: series admittance `y_s`, total charging `b_c`, tap `t` on
/// the from side. `Y_ff += (y_s + j b_c/2)/t²`, `Y_tt += y_s + j b_c/2`,
/// `Y_ft = Y_tf -= y_s/t`. Parallel branches accumulate. Bus shunts go on
/// the diagonal.
pub fn build_ybus<T: Real>(net: &Network<T>) -> AdmittanceMatrix<T> {
    let n = net.len();
    let mut acc: BTreeMap<(usize, usize), (T, T)> = BTreeMap::new();
    let mut add = |i: usize, j: usize, g: T, b: T| {
        let e = acc.entry((i, j)).or_insert((T::zero(), T::zero()));
        e.0 += g;
        e.1 += b;
    };
    for (i, bus) in net.buses().iter().enumerate() {
        add(i, i, bus.g_shunt, bus.b_shunt);
    }
    let half = T::of(0.5);
    for br in net.branches().iter().filter(|b| b.in_service) {
        let f = net.bus_index(br.from_bus).expect("validated endpoint");
        let t = net.bus_index(br.to_bus).expect("validated endpoint");
        let (gs, bs) = series_admittance(br.r, br.x);
        let bc = br.b_charging * half;
        let tap2 = br.tap * br.tap;
        add(f, f, gs / tap2, (bs + bc) / tap2);
        add(t, t, gs, bs + bc);
        add(f, t, -gs / br.tap, -bs / br.tap);
        add(t, f, -gs / br.tap, -bs / br.tap);
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(acc.len());
    let mut g = Vec::with_capacity(acc.len());
    let mut b = Vec::with_capacity(acc.len());
    row_ptr.push(0);
    let mut row = 0;
    for (&(i, j), &(gv, bv)) in &acc {
        while row < i {
            row_ptr.push(cols.len());
            row += 1;
        }
        cols.push(j);
        g.push(gv);
        b.push(bv);
    }
    while row < n {
        row_ptr.push(cols.len());
        row += 1;
    }
    AdmittanceMatrix {
        n,
        row_ptr,
        cols,
        g,
        b,
    }
}
