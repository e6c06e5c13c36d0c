//! Finite-volume restrictions, their determinants, minors and Green's
//! functions.
//!
//! Sites are integers; with block size `d` a window of `n` sites is an
//! `nd × nd` matrix. Dirichlet restrictions are laid out in increasing site
//! order. Periodic restrictions on sites `ℓ..m` use the reversed layout in
//! which block row `r` holds site `m − 1 − r`:
//!
//! ```text
//! [ V(θ+(m−1)ω)   B^(*)(θ+(m−1)ω)                      B(θ+ℓω)     ]
//! [ B(θ+(m−1)ω)   V(θ+(m−2)ω)      ⋱                               ]
//! [                ⋱               ⋱          B^(*)(θ+(ℓ+1)ω)       ]
//! [ B^(*)(θ+ℓω)                    B(θ+(ℓ+1)ω)  V(θ+ℓω)             ]
//! ```
//!
//! For two sites the corner blocks add onto the off-diagonal ones.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cocycle::{transfer_product, wedge_product, TransferCocycle};
use crate::error::{QpError, Result};
use crate::family::OperatorFamily;
use crate::linalg::{c, dense_log_det, BandMatrix, CMat};
use crate::logdet::{log_sum, LogDet};
use crate::lyapunov::le_with_options;
use crate::sampling::Phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

/// An assembled restriction of the operator to `sites` consecutive sites
/// starting at `first_site`.
#[derive(Debug, Clone)]
pub struct FiniteOperator {
    pub boundary: Boundary,
    pub first_site: i64,
    pub sites: usize,
    pub d: usize,
    pub phase: Phase,
    pub matrix: CMat,
}

impl FiniteOperator {
    pub fn dim(&self) -> usize {
        self.sites * self.d
    }

    /// `H − E`.
    pub fn shifted(&self, energy: Complex64) -> CMat {
        let mut m = self.matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] -= energy;
        }
        m
    }
}

/// Calls `put(row_block, col_block, block)` for every nonzero block.
fn for_each_block<F>(fam: &OperatorFamily, first: i64, sites: usize, boundary: Boundary, p: Phase, mut put: F) -> Result<()>
where
    F: FnMut(usize, usize, &CMat),
{
    let at = |k: i64| fam.shift(p, k);
    match boundary {
        Boundary::Dirichlet => {
            for k in 0..sites {
                let s = first + k as i64;
                put(k, k, &fam.v_at(at(s))?);
                if k + 1 < sites {
                    put(k, k + 1, &fam.b_at(at(s + 1))?);
                    put(k + 1, k, &fam.b_star_at(at(s + 1))?);
                }
            }
        }
        Boundary::Periodic => {
            let last = first + sites as i64 - 1;
            for r in 0..sites {
                let s = last - r as i64;
                put(r, r, &fam.v_at(at(s))?);
                if r + 1 < sites {
                    put(r, r + 1, &fam.b_star_at(at(s))?);
                    put(r + 1, r, &fam.b_at(at(s))?);
                }
            }
            put(0, sites - 1, &fam.b_at(at(first))?);
            put(sites - 1, 0, &fam.b_star_at(at(first))?);
        }
    }
    Ok(())
}

fn check_sites(sites: usize, boundary: Boundary) -> Result<()> {
    match boundary {
        Boundary::Dirichlet if sites == 0 => Err(QpError::Precondition("empty interval".into())),
        Boundary::Periodic if sites < 2 => Err(QpError::Precondition(format!(
            "periodic restriction needs at least 2 blocks, got {sites}"
        ))),
        _ => Ok(()),
    }
}

pub fn assemble(fam: &OperatorFamily, first_site: i64, sites: usize, boundary: Boundary, p: Phase) -> Result<FiniteOperator> {
    check_sites(sites, boundary)?;
    let d = fam.d();
    let mut m = CMat::zeros(sites * d, sites * d);
    for_each_block(fam, first_site, sites, boundary, p, |r, cc, blk| {
        let mut view = m.view_mut((r * d, cc * d), (d, d));
        view += blk;
    })?;
    Ok(FiniteOperator {
        boundary,
        first_site,
        sites,
        d,
        phase: p,
        matrix: m,
    })
}

/// `D_n(θ, E) = det(H_θ|_{[0,n−1]} − E)`, by banded LU.
pub fn dirichlet_det(fam: &OperatorFamily, p: Phase, energy: Complex64, n: usize) -> Result<LogDet> {
    if n == 0 {
        return Err(QpError::Precondition("n must be at least 1".into()));
    }
    let d = fam.d();
    let w = 2 * d - 1;
    let mut band = BandMatrix::zeros(n * d, w, w);
    for_each_block(fam, 0, n, Boundary::Dirichlet, p, |r, cc, blk| {
        for i in 0..d {
            for j in 0..d {
                band.add(r * d + i, cc * d + j, blk[(i, j)]);
            }
        }
    })?;
    for i in 0..n * d {
        band.add(i, i, -energy);
    }
    Ok(band.log_det())
}

/// `f_n(θ, E) = det(H^p_θ|_{[0,nd−1]} − E)`, by dense LU.
pub fn periodic_block_det(fam: &OperatorFamily, p: Phase, energy: Complex64, n: usize) -> Result<LogDet> {
    let op = assemble(fam, 0, n, Boundary::Periodic, p)?;
    Ok(dense_log_det(&op.shifted(energy)))
}

/// `det(M − I)` of a propagator, as `Σ_j (−1)^j tr ⋀^j M`.
pub fn propagator_char_det(fam: &OperatorFamily, p: Phase, energy: Complex64, n: usize) -> Result<LogDet> {
    let tc = TransferCocycle::new(fam, energy);
    let k = 2 * fam.d();
    let mut terms = vec![LogDet::ONE];
    for j in 1..=k {
        let t = wedge_product(&tc, p, n, j)?.trace();
        terms.push(if j % 2 == 1 { t * LogDet::from_value(c(-1.0, 0.0)) } else { t });
    }
    Ok(log_sum(&terms))
}

/// `Σ_{j<n} log|det B(θ + jω)|`.
pub fn log_det_b_sum(fam: &OperatorFamily, p: Phase, n: usize) -> Result<f64> {
    (0..n as i64).map(|j| Ok(dense_log_det(&fam.b_at(fam.shift(p, j))?).log_mag)).sum()
}

/// `| log|f_n| − log|det(M_n − I)| − Σ log|det B(θ+jω)| |`. Infinite when
/// exactly one side vanishes.
pub fn detp_residual(fam: &OperatorFamily, p: Phase, energy: Complex64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(QpError::Precondition(format!("detP needs n >= 2, got {n}")));
    }
    let lhs = periodic_block_det(fam, p, energy, n)?;
    let rhs = propagator_char_det(fam, p, energy, n)?;
    match (lhs.is_zero(), rhs.is_zero()) {
        (true, true) => Ok(0.0),
        (true, false) | (false, true) => Ok(f64::INFINITY),
        _ => Ok((lhs.log_mag - rhs.log_mag - log_det_b_sum(fam, p, n)?).abs()),
    }
}

/// `(H_θ|_{[ℓ,m]} − E)^{-1}` by dense LU; rows and columns indexed from `ℓ d`.
pub fn dirichlet_resolvent(fam: &OperatorFamily, p: Phase, energy: Complex64, l: i64, m: i64) -> Result<CMat> {
    if m < l {
        return Err(QpError::Precondition("empty interval".into()));
    }
    let op = assemble(fam, l, (m - l + 1) as usize, Boundary::Dirichlet, p)?;
    let a = op.shifted(energy);
    if dense_log_det(&a).is_zero() {
        return Err(QpError::SingularEnergy { energy });
    }
    a.lu()
        .try_inverse()
        .ok_or(QpError::SingularEnergy { energy })
}

/// `G_{[ℓ,m]}(k, j)` for a scalar family, by the three-determinant formula
///
/// ```text
/// G(k,j) = (−1)^{j−k} b_{k+1}⋯b_j D_{k−ℓ}(θ+ℓω) D_{m−j}(θ+(j+1)ω) / D_{m−ℓ+1}(θ+ℓω)
/// ```
///
/// for `k < j`, with `b_i = B(θ+iω)` the couplings above the diagonal (the
/// lower couplings `B^(*)` for `k > j`).
pub fn green_entry_dirichlet(
    fam: &OperatorFamily,
    p: Phase,
    energy: Complex64,
    l: i64,
    m: i64,
    k: i64,
    j: i64,
) -> Result<Complex64> {
    if fam.d() != 1 {
        return Err(QpError::Dimension("the determinant formula needs d = 1".into()));
    }
    if !(l <= k && k <= m && l <= j && j <= m) {
        return Err(QpError::Precondition(format!("indices ({k},{j}) outside [{l},{m}]")));
    }
    let det = |start: i64, len: i64| -> Result<LogDet> {
        if len == 0 {
            Ok(LogDet::ONE)
        } else {
            dirichlet_det(fam, fam.shift(p, start), energy, len as usize)
        }
    };
    let denom = det(l, m - l + 1)?;
    if denom.is_zero() {
        return Err(QpError::SingularEnergy { energy });
    }
    let (lo, hi) = (k.min(j), k.max(j));
    let mut couplings = LogDet::ONE;
    for i in lo + 1..=hi {
        let q = fam.shift(p, i);
        let b = if k < j { fam.b_at(q)? } else { fam.b_star_at(q)? };
        couplings = couplings * LogDet::from_value(b[(0, 0)]);
    }
    let sign = if (hi - lo) % 2 == 0 { 1.0 } else { -1.0 };
    let num = couplings * det(l, lo - l)? * det(hi + 1, m - hi)?;
    Ok((num / denom).value() * sign)
}

/// `μ_{x,y}`: determinant of `H^p_θ|_{[ℓd, md−1]} − E` with row `x` and
/// column `y` deleted. Indices are absolute, in `[ℓd, md−1]`.
pub fn minor_mu(fam: &OperatorFamily, p: Phase, energy: Complex64, l: i64, m: i64, x: i64, y: i64) -> Result<LogDet> {
    let d = fam.d() as i64;
    let range = l * d..m * d;
    if !range.contains(&x) || !range.contains(&y) {
        return Err(QpError::Precondition(format!(
            "minor indices ({x},{y}) outside [{}, {}]",
            l * d,
            m * d - 1
        )));
    }
    let op = assemble(fam, l, (m - l) as usize, Boundary::Periodic, p)?;
    let a = op.shifted(energy);
    let (xr, yc) = ((x - l * d) as usize, (y - l * d) as usize);
    let sub = a.remove_row(xr).remove_column(yc);
    Ok(dense_log_det(&sub))
}

/// `(H^p_θ|_{[0,nd−1]} − E)^{-1}(x, y) = (−1)^{x+y} μ_{y,x} / f_n`.
pub fn cramer_entry(fam: &OperatorFamily, p: Phase, energy: Complex64, n: usize, x: usize, y: usize) -> Result<Complex64> {
    let f = periodic_block_det(fam, p, energy, n)?;
    if f.is_zero() {
        return Err(QpError::SingularEnergy { energy });
    }
    let mu = minor_mu(fam, p, energy, 0, n as i64, y as i64, x as i64)?;
    let sign = if (x + y).is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok((mu / f).value() * sign)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorBoundReport {
    pub n: usize,
    pub trials: usize,
    /// `L^{d−1}`, `L^d` and `⟨log|det B|⟩` used on the right-hand sides.
    pub lyap_lower: f64,
    pub lyap_d: f64,
    pub mean_log_det_b: f64,
    /// Largest `log|μ| − log(RHS)` for off-diagonal minors, without the constant.
    pub max_slack: f64,
    /// `exp(max_slack)`: the smallest constant making every sample satisfy the bound.
    pub fitted_constant: f64,
    /// Largest `log|μ_xx| − n(L^d + ⟨log|det B|⟩ + 5 n^{-1/2})`.
    pub max_diag_slack: f64,
}

/// Samples minors at random real phases against the off-diagonal and
/// diagonal upper bounds.
///
/// Off-diagonal samples take `x ∈ [0,d−1] ∪ [(n−1)d, nd−1]`,
/// `y ∈ [3d, (n−1)d−1]`; diagonal ones `x = y ∈ [2d, nd−2d−1]`. Lyapunov
/// sums are taken at scale `lyap_scale` on a `grid`-point phase grid.
#[allow(clippy::too_many_arguments)]
pub fn minor_bound_check<R: Rng>(
    fam: &OperatorFamily,
    energy: f64,
    n: usize,
    trials: usize,
    lyap_scale: usize,
    grid: usize,
    nu_gap: f64,
    rng: &mut R,
) -> Result<MinorBoundReport> {
    let d = fam.d();
    if n < 5 {
        return Err(QpError::Precondition(format!("minor bounds need n >= 5, got {n}")));
    }
    let e = c(energy, 0.0);
    let tc = TransferCocycle::new(fam, e);
    let le = le_with_options(&tc, 0.0, lyap_scale, grid, false)?;
    if le.exponents[d - 1] <= nu_gap {
        return Err(QpError::Precondition(format!(
            "L_{d} = {:.4} does not exceed the positivity threshold {nu_gap}",
            le.exponents[d - 1]
        )));
    }
    let lyap_lower = if d >= 2 { le.sums[d - 2] } else { 0.0 };
    let lyap_d = le.sums[d - 1];
    let mean_b = fam.mean_log_det_b(0.0, grid)?;
    let nf = n as f64;
    let (n_i, d_i) = (n as i64, d as i64);

    let mut max_slack = f64::NEG_INFINITY;
    let mut max_diag = f64::NEG_INFINITY;
    for _ in 0..trials {
        let p = Phase::real(rng.random_range(0.0..1.0));
        let x = if rng.random_bool(0.5) {
            rng.random_range(0..d_i)
        } else {
            rng.random_range((n_i - 1) * d_i..n_i * d_i)
        };
        let y = rng.random_range(3 * d_i..(n_i - 1) * d_i);
        let ell = (y / d_i) as f64;
        let mu = minor_mu(fam, p, e, 0, n_i, x, y)?;
        let a = ell * lyap_lower + (nf - ell) * lyap_d;
        let b = ell * lyap_d + (nf - ell) * lyap_lower;
        let rhs = nf * mean_b + a.max(b) + (1.0 + (-(a - b).abs()).exp()).ln();
        max_slack = max_slack.max(mu.log_mag - rhs);

        let xx = rng.random_range(2 * d_i..n_i * d_i - 2 * d_i);
        let mu = minor_mu(fam, p, e, 0, n_i, xx, xx)?;
        let rhs = nf * (lyap_d + mean_b + 5.0 / nf.sqrt());
        max_diag = max_diag.max(mu.log_mag - rhs);
    }
    Ok(MinorBoundReport {
        n,
        trials,
        lyap_lower,
        lyap_d,
        mean_log_det_b: mean_b,
        max_slack,
        fitted_constant: max_slack.exp(),
        max_diag_slack: max_diag,
    })
}

/// Log-magnitude gap between the banded and dense LU routes for `D_n`.
pub fn dirichlet_route_gap(fam: &OperatorFamily, p: Phase, energy: Complex64, n: usize) -> Result<f64> {
    let band = dirichlet_det(fam, p, energy, n)?;
    let dense = dense_log_det(&assemble(fam, 0, n, Boundary::Dirichlet, p)?.shifted(energy));
    Ok((band.log_mag - dense.log_mag).abs())
}

/// `log|det(M_n − I)|` from a single product, ignoring cancellation; used
/// only to cross-check [`propagator_char_det`] when no eigenvalue of `M_n`
/// is close to 1.
pub fn propagator_char_det_direct(fam: &OperatorFamily, p: Phase, energy: Complex64, n: usize) -> Result<LogDet> {
    let m = transfer_product(fam, energy, p, n)?;
    let k = m.dim();
    let shift = m.log_scale;
    let a = &m.unit - CMat::identity(k, k) * c((-shift).exp(), 0.0);
    let mut out = dense_log_det(&a);
    if !out.is_zero() {
        out.log_mag += k as f64 * shift;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::builtins;
    use crate::frequency::Frequency;
    use crate::linalg::hermitian_residual;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn free() -> OperatorFamily {
        builtins::free(Frequency::golden(), 0.1)
    }

    #[test]
    fn assembly_examples() {
        let f = free();
        let op = assemble(&f, 0, 3, Boundary::Dirichlet, Phase::real(0.3)).unwrap();
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        let tri = CMat::from_row_slice(3, 3, &[zero, one, zero, one, zero, one, zero, one, zero]);
        assert_eq!(op.matrix, tri);
        let op = assemble(&f, 0, 3, Boundary::Periodic, Phase::real(0.3)).unwrap();
        let cyc = CMat::from_row_slice(3, 3, &[zero, one, one, one, zero, one, one, one, zero]);
        assert_eq!(op.matrix, cyc);
        assert!(assemble(&f, 0, 1, Boundary::Periodic, Phase::real(0.3)).is_err());

        let fam = builtins::block_demo(1.0, 0.3, 0.5, Frequency::golden(), 0.1);
        let p = Phase::real(0.2);
        let op = assemble(&fam, 0, 2, Boundary::Periodic, p).unwrap();
        let corner = fam.b_at(p).unwrap() + fam.b_star_at(fam.shift(p, 1)).unwrap();
        assert_eq!(op.matrix.view((0, 2), (2, 2)).into_owned(), corner);
        assert!(hermitian_residual(&op.matrix) < 1e-12);
    }

    #[test]
    fn dirichlet_det_examples() {
        let amo = builtins::almost_mathieu(1.3, Frequency::golden(), 0.1);
        let p = Phase::real(0.17);
        let e = c(0.4, 0.0);
        let v = |k: i64| amo.v_at(amo.shift(p, k)).unwrap()[(0, 0)];
        let d1 = dirichlet_det(&amo, p, e, 1).unwrap().value();
        assert!((d1 - (v(0) - e)).norm() < 1e-13);
        let d2 = dirichlet_det(&amo, p, e, 2).unwrap().value();
        assert!((d2 - ((v(0) - e) * (v(1) - e) - 1.0)).norm() < 1e-12);

        let fam = builtins::random(&mut ChaCha8Rng::seed_from_u64(3), 2, Frequency::golden(), 0.1);
        for n in [10usize, 64, 128] {
            assert!(dirichlet_route_gap(&fam, Phase::new(0.4, 0.01), e, n).unwrap() < 1e-9);
        }
    }

    #[test]
    fn periodic_examples() {
        let f = free();
        let v = periodic_block_det(&f, Phase::real(0.0), c(0.0, 0.0), 3).unwrap();
        assert!((v.log_mag - 2f64.ln()).abs() < 1e-12);
        assert!(detp_residual(&f, Phase::real(0.0), c(0.0, 0.0), 3).unwrap() < 1e-12);

        let amo = builtins::almost_mathieu(2.0, Frequency::golden(), 0.1);
        let p = Phase::real(0.31);
        let e = c(0.2, 0.0);
        let op = assemble(&amo, 0, 2, Boundary::Periodic, p).unwrap().shifted(e);
        let direct = op[(0, 0)] * op[(1, 1)] - op[(0, 1)] * op[(1, 0)];
        assert!((op[(0, 1)] - 2.0).norm() < 1e-15);
        let f2 = periodic_block_det(&amo, p, e, 2).unwrap().value();
        assert!((f2 - direct).norm() < 1e-12);
    }

    #[test]
    fn detp_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [1usize, 2, 3] {
            let fam = builtins::random(&mut rng, d, Frequency::golden(), 0.1);
            for eps in [0.0, 0.01] {
                let p = Phase::new(rng.random_range(0.0..1.0), eps);
                let r = detp_residual(&fam, p, c(0.3, 0.0), 16).unwrap();
                assert!(r <= 1e-7, "d={d} eps={eps} r={r}");
            }
        }
    }

    #[test]
    fn poisson_sign_and_resolvent() {
        let f = free();
        let p = Phase::real(0.0);
        let e = c(3.0, 0.0);
        let g = green_entry_dirichlet(&f, p, e, 0, 1, 0, 1).unwrap();
        assert!((g - c(-1.0 / 8.0, 0.0)).norm() < 1e-14);
        let inv = dirichlet_resolvent(&f, p, e, 0, 1).unwrap();
        assert!((inv[(0, 1)] - g).norm() < 1e-14);

        let amo = builtins::almost_mathieu(1.7, Frequency::golden(), 0.1);
        let e = c(0.3, 0.05);
        let inv = dirichlet_resolvent(&amo, p, e, 2, 21).unwrap();
        for (k, j) in [(2, 21), (5, 9), (9, 5), (7, 7), (20, 3)] {
            let g = green_entry_dirichlet(&amo, p, e, 2, 21, k, j).unwrap();
            let o = inv[((k - 2) as usize, (j - 2) as usize)];
            assert!((g - o).norm() <= 1e-8 * o.norm(), "({k},{j}) {g} vs {o}");
            assert!(o.norm() <= 1.0 / 0.05 + 1e-12);
        }
    }

    #[test]
    fn minors_and_cramer() {
        let amo = builtins::almost_mathieu(1.7, Frequency::golden(), 0.1);
        let p = Phase::real(0.2);
        let e = c(0.1, 0.0);
        let op = assemble(&amo, 0, 2, Boundary::Periodic, p).unwrap().shifted(e);
        let mu = minor_mu(&amo, p, e, 0, 2, 0, 0).unwrap().value();
        assert!((mu - op[(1, 1)]).norm() < 1e-14);

        let fam = builtins::random(&mut ChaCha8Rng::seed_from_u64(4), 2, Frequency::golden(), 0.1);
        let e = c(0.3, 0.0);
        let n = 6;
        let a = assemble(&fam, 0, n, Boundary::Periodic, p).unwrap().shifted(e);
        let inv = a.lu().try_inverse().unwrap();
        for (x, y) in [(0, 5), (3, 3), (11, 2), (7, 0)] {
            let g = cramer_entry(&fam, p, e, n, x, y).unwrap();
            assert!((g - inv[(x, y)]).norm() <= 1e-8 * inv[(x, y)].norm().max(1e-3));
        }
        // shift covariance
        let a = minor_mu(&fam, p, e, 3, 9, 8, 13).unwrap();
        let b = minor_mu(&fam, fam.shift(p, 3), e, 0, 6, 2, 7).unwrap();
        assert!((a.log_mag - b.log_mag).abs() < 1e-9);
    }

    #[test]
    fn minor_bounds_amo() {
        let amo = builtins::almost_mathieu(3.0, Frequency::golden(), 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = minor_bound_check(&amo, 0.0, 64, 20, 256, 64, 0.05, &mut rng).unwrap();
        assert!(r.max_slack <= 0.1 * 64.0, "{r:?}");
        assert!(r.max_diag_slack <= 0.1 * 64.0, "{r:?}");
    }
}
