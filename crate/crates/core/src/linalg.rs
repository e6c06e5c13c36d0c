//! Dense and banded complex linear algebra used across the crate.

use nalgebra::{DMatrix, SymmetricEigen, LU, SVD};
use num_complex::Complex64;

use crate::error::{QpError, Result};
use crate::logdet::LogDet;

pub type CMat = DMatrix<Complex64>;

/// Pivots below this magnitude are treated as exact zeros.
pub const PIVOT_FLOOR: f64 = 1e-300;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    let svd = SVD::new(m.clone(), false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Spectral norm.
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m)[0]
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖M − M*‖`.
pub fn hermitian_residual(m: &CMat) -> f64 {
    op_norm(&(m - m.adjoint()))
}

/// All `j`-subsets of `0..k` in lexicographic order.
pub fn subsets(k: usize, j: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if j > k {
        return out;
    }
    let mut idx: Vec<usize> = (0..j).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..j).rev().find(|&i| idx[i] < i + k - j) else {
            return out;
        };
        idx[i] += 1;
        for l in i + 1..j {
            idx[l] = idx[l - 1] + 1;
        }
    }
}

fn small_det(m: &CMat) -> Complex64 {
    match m.nrows() {
        0 => c(1.0, 0.0),
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => LU::new(m.clone()).determinant(),
    }
}

/// The `j`-th exterior power: the matrix of `j × j` minors indexed by
/// lexicographically ordered `j`-subsets of rows and columns.
pub fn exterior_power(m: &CMat, j: usize) -> Result<CMat> {
    let k = m.nrows();
    if m.ncols() != k {
        return Err(QpError::Dimension(format!(
            "exterior power needs a square matrix, got {}x{}",
            k,
            m.ncols()
        )));
    }
    if j == 0 || j > k {
        return Err(QpError::Dimension(format!(
            "exterior degree {j} outside 1..={k}"
        )));
    }
    if j == 1 {
        return Ok(m.clone());
    }
    let sets = subsets(k, j);
    let dim = sets.len();
    let mut out = CMat::zeros(dim, dim);
    let mut sub = CMat::zeros(j, j);
    for (a, rows) in sets.iter().enumerate() {
        for (b, cols) in sets.iter().enumerate() {
            for (p, &r) in rows.iter().enumerate() {
                for (q, &cc) in cols.iter().enumerate() {
                    sub[(p, q)] = m[(r, cc)];
                }
            }
            out[(a, b)] = small_det(&sub);
        }
    }
    Ok(out)
}

/// Log-determinant by partially pivoted dense LU.
pub fn dense_log_det(m: &CMat) -> LogDet {
    let n = m.nrows();
    if n == 0 {
        return LogDet::ONE;
    }
    let lu = LU::new(m.clone());
    let u = lu.u();
    let mut acc = LogDet::ONE;
    for i in 0..n {
        let p = u[(i, i)];
        if p.norm() < PIVOT_FLOOR {
            return LogDet::ZERO;
        }
        acc = acc * LogDet::from_value(p);
    }
    let sign: f64 = lu.p().determinant();
    acc.phase_unit *= sign;
    acc
}

/// Square matrix stored by rows restricted to a band, with room for the
/// fill-in created by partial pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl BandMatrix {
    /// `kl`, `ku`: lower and upper bandwidths of the matrix to be stored.
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![c(0.0, 0.0); n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        if off < 0 || off as usize >= self.width || j >= self.n {
            None
        } else {
            Some(i * self.width + off as usize)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.slot(i, j).map_or(c(0.0, 0.0), |s| self.data[s])
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        let s = self.slot(i, j).unwrap_or_else(|| {
            panic!("entry ({i},{j}) outside band kl={} ku={}", self.kl, self.ku)
        });
        self.data[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] += v;
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.n, self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.kl + self.ku).min(self.n - 1);
            for j in lo..=hi {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }

    /// Log-determinant by banded Gaussian elimination with partial pivoting.
    pub fn log_det(mut self) -> LogDet {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut acc = LogDet::ONE;
        for i in 0..n {
            let last_row = (i + kl).min(n - 1);
            let last_col = (i + kl + ku).min(n - 1);
            let mut piv = i;
            let mut best = self.get(i, i).norm();
            for r in i + 1..=last_row {
                let v = self.get(r, i).norm();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < PIVOT_FLOOR {
                return LogDet::ZERO;
            }
            if piv != i {
                for col in i..=last_col {
                    let a = self.get(i, col);
                    let b = self.get(piv, col);
                    self.set(i, col, b);
                    self.set(piv, col, a);
                }
                acc.phase_unit = -acc.phase_unit;
            }
            let p = self.get(i, i);
            acc = acc * LogDet::from_value(p);
            for r in i + 1..=last_row {
                let f = self.get(r, i) / p;
                if f == c(0.0, 0.0) {
                    continue;
                }
                self.set(r, i, c(0.0, 0.0));
                for col in i + 1..=last_col {
                    let v = self.get(i, col);
                    if v != c(0.0, 0.0) {
                        let s = self.slot(r, col).unwrap();
                        self.data[s] -= f * v;
                    }
                }
            }
        }
        acc
    }
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Eigenvalues of a general complex matrix (diagonal of its Schur form).
pub fn complex_eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::Schur::try_new(m.clone(), 1e-15, 100_000 * n)
        .ok_or_else(|| QpError::Numerical("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Hermitian inertia: number of negative eigenvalues of a small Hermitian block.
pub fn negative_count(m: &CMat) -> usize {
    if m.nrows() == 1 {
        return usize::from(m[(0, 0)].re < 0.0);
    }
    hermitian_eigenvalues(m).iter().filter(|&&x| x < 0.0).count()
}
