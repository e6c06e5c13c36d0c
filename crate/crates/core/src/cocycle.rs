//! Transfer matrices, log-scaled propagators and exterior-power products.
//!
//! The propagator `M_n(θ) = M(θ + (n-1)ω) ⋯ M(θ)` grows like `e^{nL}`, so
//! products are kept as [`ScaledMatrix`] values renormalized after every
//! step. For quantities that need the small singular values as well
//! (Lyapunov spectra) the product is accumulated in QR form, see
//! [`GradedProduct`].

use nalgebra::QR;
use num_complex::Complex64;

use crate::error::{QpError, Result};
use crate::family::OperatorFamily;
use crate::linalg::{c, exterior_power, frobenius, op_norm, singular_values, CMat};
use crate::sampling::Phase;

/// A measurable matrix cocycle over the rotation `θ ↦ θ + ω`.
pub trait Cocycle: Sync {
    fn dim(&self) -> usize;
    fn omega(&self) -> f64;
    fn strip_delta(&self) -> f64;
    /// `A(p)`; `step` labels errors.
    fn matrix_at(&self, p: Phase, step: usize) -> Result<CMat>;
}

/// The Jacobi block cocycle `M_E` of a family at energy `E`.
#[derive(Debug, Clone, Copy)]
pub struct TransferCocycle<'a> {
    pub family: &'a OperatorFamily,
    pub energy: Complex64,
}

impl<'a> TransferCocycle<'a> {
    pub fn new(family: &'a OperatorFamily, energy: Complex64) -> Self {
        TransferCocycle { family, energy }
    }
}

impl Cocycle for TransferCocycle<'_> {
    fn dim(&self) -> usize {
        2 * self.family.d()
    }
    fn omega(&self) -> f64 {
        self.family.omega()
    }
    fn strip_delta(&self) -> f64 {
        self.family.delta()
    }
    fn matrix_at(&self, p: Phase, step: usize) -> Result<CMat> {
        transfer_matrix_step(self.family, self.energy, p, step)
    }
}

/// A phase-independent cocycle `A(θ) ≡ A`.
#[derive(Debug, Clone)]
pub struct ConstantCocycle {
    pub matrix: CMat,
    pub omega: f64,
}

impl Cocycle for ConstantCocycle {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn omega(&self) -> f64 {
        self.omega
    }
    fn strip_delta(&self) -> f64 {
        f64::INFINITY
    }
    fn matrix_at(&self, _p: Phase, _step: usize) -> Result<CMat> {
        Ok(self.matrix.clone())
    }
}

/// ```text
/// M_E(θ) = [ (E − V(θ)) B(θ)^{-1}   −B^{(*)}(θ) ]
///          [ B(θ)^{-1}               0          ]
/// ```
pub fn transfer_matrix(fam: &OperatorFamily, energy: Complex64, p: Phase) -> Result<CMat> {
    transfer_matrix_step(fam, energy, p, 0)
}

fn transfer_matrix_step(fam: &OperatorFamily, energy: Complex64, p: Phase, step: usize) -> Result<CMat> {
    let d = fam.d();
    let (b_inv, _) = fam.b_inverse(p, step)?;
    let v = fam.v_at(p)?;
    let b_star = fam.b_star_at(p)?;
    let e_minus_v = CMat::identity(d, d) * energy - v;
    let mut m = CMat::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(&(e_minus_v * &b_inv));
    m.view_mut((0, d), (d, d)).copy_from(&(-b_star));
    m.view_mut((d, 0), (d, d)).copy_from(&b_inv);
    Ok(m)
}

/// Target Frobenius norm of a renormalized unit. For `k ≤ 9` this keeps the
/// operator norm inside `[1/2, 2]`.
const UNIT_FROBENIUS: f64 = 1.5;

/// A matrix stored as `exp(log_scale) · unit` with `‖unit‖ ∈ [1/2, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMatrix {
    pub unit: CMat,
    pub log_scale: f64,
}

impl ScaledMatrix {
    pub fn identity(k: usize) -> Self {
        let mut s = ScaledMatrix {
            unit: CMat::identity(k, k),
            log_scale: 0.0,
        };
        s.renormalize();
        s
    }

    pub fn from_matrix(m: CMat) -> Self {
        let mut s = ScaledMatrix {
            unit: m,
            log_scale: 0.0,
        };
        s.renormalize();
        s
    }

    pub fn dim(&self) -> usize {
        self.unit.nrows()
    }

    fn renormalize(&mut self) {
        let k = self.unit.nrows();
        let f = if k <= 9 {
            frobenius(&self.unit) / UNIT_FROBENIUS
        } else {
            op_norm(&self.unit)
        };
        if f > 0.0 && f.is_finite() {
            self.unit.unscale_mut(f);
            self.log_scale += f.ln();
        }
    }

    /// `self ← step · self`.
    pub fn push(&mut self, step: &CMat) {
        self.unit = step * &self.unit;
        self.renormalize();
    }

    /// `self · earlier`.
    pub fn compose(&self, earlier: &ScaledMatrix) -> ScaledMatrix {
        let mut out = ScaledMatrix {
            unit: &self.unit * &earlier.unit,
            log_scale: self.log_scale + earlier.log_scale,
        };
        out.renormalize();
        out
    }

    /// The represented matrix; overflows for `log_scale ≳ 700`.
    pub fn to_matrix(&self) -> CMat {
        &self.unit * c(self.log_scale.exp(), 0.0)
    }

    /// The represented matrix times `exp(-shift)`.
    pub fn rescaled(&self, shift: f64) -> CMat {
        &self.unit * c((self.log_scale - shift).exp(), 0.0)
    }

    /// `log ‖M‖` (spectral norm).
    pub fn log_norm(&self) -> f64 {
        self.log_scale + op_norm(&self.unit).ln()
    }

    pub fn trace(&self) -> crate::LogDet {
        let mut t = crate::LogDet::from_value(self.unit.trace());
        if !t.is_zero() {
            t.log_mag += self.log_scale;
        }
        t
    }
}

/// `M_n(p) = A(p + (n−1)ω) ⋯ A(p)` for any cocycle.
pub fn cocycle_product<C: Cocycle + ?Sized>(cocycle: &C, p: Phase, n: usize) -> Result<ScaledMatrix> {
    let mut acc = ScaledMatrix::identity(cocycle.dim());
    for j in 0..n {
        let a = cocycle.matrix_at(p.shifted(j as f64 * cocycle.omega()), j)?;
        acc.push(&a);
    }
    Ok(acc)
}

/// `M_{n,E}(p)` with per-step renormalization.
pub fn transfer_product(fam: &OperatorFamily, energy: Complex64, p: Phase, n: usize) -> Result<ScaledMatrix> {
    if n == 0 {
        return Err(QpError::Precondition("propagator length must be at least 1".into()));
    }
    cocycle_product(&TransferCocycle::new(fam, energy), p, n)
}

/// `⋀^j M_n(p)` accumulated as the product of the exterior powers of the
/// one-step matrices.
pub fn wedge_product<C: Cocycle + ?Sized>(cocycle: &C, p: Phase, n: usize, j: usize) -> Result<ScaledMatrix> {
    let k = cocycle.dim();
    let dim = crate::linalg::subsets(k, j).len();
    let mut acc = ScaledMatrix::identity(dim);
    for s in 0..n {
        let a = cocycle.matrix_at(p.shifted(s as f64 * cocycle.omega()), s)?;
        acc.push(&exterior_power(&a, j)?);
    }
    Ok(acc)
}

/// A propagator kept as `Q · S · W`: `Q` unitary, `S` a diagonal of row
/// scales (stored as logs) and `W` upper triangular with unit-norm rows.
///
/// Each row of the triangular factor carries its own scale, so singular
/// values many orders of magnitude below the top one remain resolved.
#[derive(Debug, Clone)]
pub struct GradedProduct {
    q: CMat,
    log_row_scales: Vec<f64>,
    rows: CMat,
}

impl GradedProduct {
    pub fn identity(k: usize) -> Self {
        GradedProduct {
            q: CMat::identity(k, k),
            log_row_scales: vec![0.0; k],
            rows: CMat::identity(k, k),
        }
    }

    /// `self ← step · self`.
    pub fn push(&mut self, step: &CMat) {
        let k = self.rows.nrows();
        let qr = QR::new(step * &self.q);
        let (q, r) = qr.unpack();
        let mut rows = CMat::zeros(k, k);
        let mut scales = vec![0.0; k];
        for i in 0..k {
            // row i of R · S · W, with the largest coefficient factored out
            let mut m = f64::NEG_INFINITY;
            for l in i..k {
                let a = r[(i, l)].norm();
                if a > 0.0 {
                    m = m.max(a.ln() + self.log_row_scales[l]);
                }
            }
            if m == f64::NEG_INFINITY {
                scales[i] = f64::NEG_INFINITY;
                continue;
            }
            for l in i..k {
                let a = r[(i, l)];
                if a.norm() == 0.0 {
                    continue;
                }
                let coef = a * (self.log_row_scales[l] - m).exp();
                for col in l..k {
                    rows[(i, col)] += coef * self.rows[(l, col)];
                }
            }
            let norm = rows.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for col in 0..k {
                rows[(i, col)] /= norm;
            }
            scales[i] = m + norm.ln();
        }
        self.q = q;
        self.rows = rows;
        self.log_row_scales = scales;
    }

    pub fn dim(&self) -> usize {
        self.rows.nrows()
    }

    /// `log ‖⋀^j M‖` for `j = 1..=k`.
    pub fn log_wedge_norms(&self) -> Vec<f64> {
        let k = self.dim();
        (1..=k)
            .map(|j| {
                let sets = crate::linalg::subsets(k, j);
                let logs: Vec<f64> = sets
                    .iter()
                    .map(|s| s.iter().map(|&i| self.log_row_scales[i]).sum())
                    .collect();
                let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let wedge = exterior_power(&self.rows, j).expect("valid degree");
                let mut scaled = wedge;
                for (a, &l) in logs.iter().enumerate() {
                    let f = (l - top).exp();
                    for b in 0..scaled.ncols() {
                        scaled[(a, b)] *= f;
                    }
                }
                top + op_norm(&scaled).ln()
            })
            .collect()
    }

    /// `log σ_j(M)`, descending.
    pub fn log_singular_values(&self) -> Vec<f64> {
        let w = self.log_wedge_norms();
        let mut out = Vec::with_capacity(w.len());
        let mut prev = 0.0;
        for x in w {
            out.push(x - prev);
            prev = x;
        }
        out
    }
}

pub fn graded_product<C: Cocycle + ?Sized>(cocycle: &C, p: Phase, n: usize) -> Result<GradedProduct> {
    let mut acc = GradedProduct::identity(cocycle.dim());
    for j in 0..n {
        let a = cocycle.matrix_at(p.shifted(j as f64 * cocycle.omega()), j)?;
        acc.push(&a);
    }
    Ok(acc)
}

/// `Ω = [[0, I_d], [−I_d, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymplecticForm {
    pub d: usize,
}

impl SymplecticForm {
    pub fn matrix(&self) -> CMat {
        let d = self.d;
        let mut m = CMat::zeros(2 * d, 2 * d);
        for i in 0..d {
            m[(i, d + i)] = c(1.0, 0.0);
            m[(d + i, i)] = c(-1.0, 0.0);
        }
        m
    }
}

/// `‖M^* Ω M − Ω‖`.
pub fn symplectic_defect(m: &CMat) -> Result<f64> {
    let k = m.nrows();
    if m.ncols() != k || !k.is_multiple_of(2) {
        return Err(QpError::Dimension(format!(
            "symplectic defect needs an even square matrix, got {}x{}",
            k,
            m.ncols()
        )));
    }
    let omega = SymplecticForm { d: k / 2 }.matrix();
    Ok(op_norm(&(m.adjoint() * &omega * m - &omega)))
}

/// Largest relative residual of the block recursion
/// `M_n(θ) = M_{n−1}(θ+ω) M_1(θ)` written blockwise in terms of `V`, `B^{-1}`
/// and `B^{(*)}`.
pub fn block_recursion_check(fam: &OperatorFamily, energy: Complex64, p: Phase, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(QpError::Precondition(format!(
            "block recursion needs n >= 2, got {n}"
        )));
    }
    let d = fam.d();
    let direct = transfer_product(fam, energy, p, n)?;
    let prev = transfer_product(fam, energy, fam.shift(p, 1), n - 1)?;
    let (b_inv, _) = fam.b_inverse(p, 0)?;
    let v_minus_e = fam.v_at(p)? - CMat::identity(d, d) * energy;
    let b_star = fam.b_star_at(p)?;

    let blk = |m: &CMat, r: usize, cc: usize| m.view((r * d, cc * d), (d, d)).into_owned();
    let pu = &prev.unit;
    let (p_ul, p_ur, p_ll, p_lr) = (blk(pu, 0, 0), blk(pu, 0, 1), blk(pu, 1, 0), blk(pu, 1, 1));
    let vb = &v_minus_e * &b_inv;
    let rec = [
        -&p_ul * &vb + &p_ur * &b_inv,
        -&p_ul * &b_star,
        -&p_ll * &vb + &p_lr * &b_inv,
        -&p_ll * &b_star,
    ];
    // bring the direct product to the scale of `prev`
    let shift = direct.log_scale - prev.log_scale;
    let scaled_direct = &direct.unit * c(shift.exp(), 0.0);
    let norm = op_norm(&scaled_direct);
    let positions = [(0, 0), (0, 1), (1, 0), (1, 1)];
    let worst = positions
        .iter()
        .zip(rec.iter())
        .map(|(&(r, cc), rb)| op_norm(&(blk(&scaled_direct, r, cc) - rb)))
        .fold(0.0, f64::max);
    Ok(worst / norm)
}

/// Descending singular values of a product's unit, shifted by its scale.
pub fn log_singular_values(m: &ScaledMatrix) -> Vec<f64> {
    singular_values(&m.unit)
        .into_iter()
        .map(|s| s.ln() + m.log_scale)
        .collect()
}
