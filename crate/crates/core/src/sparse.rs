//! Compressed sparse row kernels for the master-equation right-hand side.
//!
//! All dense operands are square row-major `Array2<C64>` of matching
//! dimension; the hot paths work on raw slices.

use ndarray::Array2;

use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// y += a * x, elementwise over rows.
#[inline]
fn axpy(a: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += a * *xi;
    }
}

#[derive(Clone, Debug)]
pub struct Csr {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<C64>,
}

impl Csr {
    pub fn from_dense(a: &Array2<C64>, drop_tol: f64) -> Self {
        let dim = a.nrows();
        assert_eq!(a.ncols(), dim);
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for i in 0..dim {
            for j in 0..dim {
                let v = a[(i, j)];
                if v.norm() > drop_tol {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            dim,
            indptr,
            indices,
            data,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// y += scale * (A x) for dense square x, y.
    pub fn acc_mul(&self, scale: C64, x: &Array2<C64>, y: &mut Array2<C64>) {
        let d = self.dim;
        let xs = x.as_slice().expect("standard layout");
        let ys = y.as_slice_mut().expect("standard layout");
        for i in 0..d {
            let yrow = &mut ys[i * d..(i + 1) * d];
            for idx in self.indptr[i]..self.indptr[i + 1] {
                let k = self.indices[idx];
                let v = scale * self.data[idx];
                axpy(v, &xs[k * d..(k + 1) * d], yrow);
            }
        }
    }

    /// True if every nonzero connects indices with equal `diag` values.
    pub fn commutes_with_diagonal(&self, diag: &[f64]) -> bool {
        for i in 0..self.dim {
            for idx in self.indptr[i]..self.indptr[i + 1] {
                if (diag[i] - diag[self.indices[idx]]).abs() > 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// At most one nonzero per row? Then jump conjugation has a fast path.
    pub fn single_entry_rows(&self) -> Option<Vec<(usize, usize, C64)>> {
        let mut rows = Vec::new();
        for i in 0..self.dim {
            let n = self.indptr[i + 1] - self.indptr[i];
            match n {
                0 => {}
                1 => {
                    let idx = self.indptr[i];
                    rows.push((i, self.indices[idx], self.data[idx]));
                }
                _ => return None,
            }
        }
        Some(rows)
    }
}

/// CSR with a per-entry phase frequency: entry value at time t is
/// `data_k * exp(i * freq_k * t)`. Used for interaction-picture Hamiltonians
/// whose entries rotate at fixed Bohr frequencies.
#[derive(Clone, Debug)]
pub struct PhasedCsr {
    csr: Csr,
    freqs: Vec<f64>,
}

impl PhasedCsr {
    pub fn new(csr: Csr, freqs: Vec<f64>) -> Self {
        assert_eq!(csr.data.len(), freqs.len());
        Self { csr, freqs }
    }

    pub fn static_matrix(csr: Csr) -> Self {
        let n = csr.data.len();
        Self {
            csr,
            freqs: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.csr.dim
    }

    /// y += scale * A(t) x.
    pub fn acc_mul_at(&self, scale: C64, t: f64, x: &Array2<C64>, y: &mut Array2<C64>) {
        let d = self.csr.dim;
        let xs = x.as_slice().expect("standard layout");
        let ys = y.as_slice_mut().expect("standard layout");
        for i in 0..d {
            let yrow = &mut ys[i * d..(i + 1) * d];
            for idx in self.csr.indptr[i]..self.csr.indptr[i + 1] {
                let k = self.csr.indices[idx];
                let f = self.freqs[idx];
                let v = if f == 0.0 {
                    scale * self.csr.data[idx]
                } else {
                    scale * self.csr.data[idx] * C64::from_polar(1.0, f * t)
                };
                axpy(v, &xs[k * d..(k + 1) * d], yrow);
            }
        }
    }
}

/// A collapse-operator conjugation y += L x L†.
#[derive(Clone, Debug)]
pub enum JumpOp {
    /// L has at most one nonzero per row: direct gather.
    SingleEntry { dim: usize, rows: Vec<(usize, usize, C64)> },
    /// General CSR; uses y += (L (L x)†)†, valid for Hermitian x.
    General(Csr),
}

impl JumpOp {
    pub fn from_dense(a: &Array2<C64>, drop_tol: f64) -> Self {
        let csr = Csr::from_dense(a, drop_tol);
        match csr.single_entry_rows() {
            Some(rows) => JumpOp::SingleEntry {
                dim: csr.dim(),
                rows,
            },
            None => JumpOp::General(csr),
        }
    }

    /// y += L x L†. `x` must be Hermitian (holds for every RK stage value of
    /// a density matrix under a Lindblad RHS).
    pub fn acc_conjugate(&self, x: &Array2<C64>, y: &mut Array2<C64>, scratch: &mut Array2<C64>) {
        match self {
            JumpOp::SingleEntry { dim, rows } => {
                let d = *dim;
                let xs = x.as_slice().expect("standard layout");
                let ys = y.as_slice_mut().expect("standard layout");
                for &(i, ci, vi) in rows {
                    let xrow = &xs[ci * d..(ci + 1) * d];
                    let yrow = &mut ys[i * d..(i + 1) * d];
                    for &(j, cj, vj) in rows {
                        yrow[j] += vi * vj.conj() * xrow[cj];
                    }
                }
            }
            JumpOp::General(csr) => {
                let d = csr.dim();
                // scratch = L x
                scratch.fill(ZERO);
                csr.acc_mul(C64::new(1.0, 0.0), x, scratch);
                // tmp = L (scratch)†; then y += tmp†
                let mut st = Array2::<C64>::zeros((d, d));
                for i in 0..d {
                    for j in 0..d {
                        st[(i, j)] = scratch[(j, i)].conj();
                    }
                }
                let mut tmp = Array2::<C64>::zeros((d, d));
                csr.acc_mul(C64::new(1.0, 0.0), &st, &mut tmp);
                for i in 0..d {
                    for j in 0..d {
                        y[(i, j)] += tmp[(j, i)].conj();
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_dense(n: usize, seed: u64) -> Array2<C64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, n), |_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    fn random_hermitian(n: usize, seed: u64) -> Array2<C64> {
        let a = random_dense(n, seed);
        let ad = linalg::dagger(&a);
        (&a + &ad).mapv(|z| z * c(0.5, 0.0))
    }

    #[test]
    fn csr_matches_dense_product() {
        let a = array![
            [c(1.0, 0.0), c(0.0, 0.0), c(2.0, -1.0)],
            [c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 3.0), c(1.0, 1.0), c(0.0, 0.0)],
        ];
        let x = random_dense(3, 1);
        let want = a.dot(&x);
        let mut y = Array2::<C64>::zeros((3, 3));
        Csr::from_dense(&a, 0.0).acc_mul(c(1.0, 0.0), &x, &mut y);
        for (g, w) in y.iter().zip(want.iter()) {
            assert!((g - w).norm() < 1e-13);
        }
    }

    #[test]
    fn phased_csr_applies_phases() {
        let a = array![[c(0.0, 0.0), c(2.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        let freq = 3.0;
        let phased = PhasedCsr::new(Csr::from_dense(&a, 0.0), vec![freq]);
        let x = linalg::eye(2);
        let mut y = Array2::<C64>::zeros((2, 2));
        let t = 0.4;
        phased.acc_mul_at(c(1.0, 0.0), t, &x, &mut y);
        let want = c(2.0, 0.0) * C64::from_polar(1.0, freq * t);
        assert!((y[(0, 1)] - want).norm() < 1e-14);
    }

    #[test]
    fn jump_conjugation_matches_dense_both_paths() {
        // single-entry path: lowering-like operator
        let l_single = array![
            [c(0.0, 0.0), c(1.3, 0.2), c(0.0, 0.0)],
            [c(0.0, 0.0), c(0.0, 0.0), c(0.7, 0.0)],
            [c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        ];
        // general path: two entries in a row
        let l_general = array![
            [c(0.0, 0.0), c(1.0, 0.0), c(0.5, -0.5)],
            [c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.2, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        ];
        let x = random_hermitian(3, 5);
        for l in [l_single, l_general] {
            let ld = linalg::dagger(&l);
            let want = l.dot(&x).dot(&ld);
            let op = JumpOp::from_dense(&l, 0.0);
            let mut y = Array2::<C64>::zeros((3, 3));
            let mut scratch = Array2::<C64>::zeros((3, 3));
            op.acc_conjugate(&x, &mut y, &mut scratch);
            for (g, w) in y.iter().zip(want.iter()) {
                assert!((g - w).norm() < 1e-12);
            }
        }
    }
}
