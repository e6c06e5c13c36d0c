//! Finite-volume spectra, the integrated density of states, spectral window
//! counts and the arithmetic of the frequency.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{graded_product, TransferCocycle};
use crate::determinants::{assemble, dirichlet_det, periodic_block_det, Boundary};
use crate::error::{QpError, Result};
use crate::family::OperatorFamily;
use crate::frequency::{torus_norm, Frequency};
use crate::linalg::{c, hermitian_eigenvalues, negative_count, CMat};
use crate::lyapunov::{acceleration, le_with_options, DEFAULT_STEP};
use crate::sampling::Phase;

/// Sorted eigenvalues of `H_θ` restricted to `sites` sites from `first_site`.
pub fn finite_volume_spectrum(fam: &OperatorFamily, theta: f64, first_site: i64, sites: usize, boundary: Boundary) -> Result<Vec<f64>> {
    let op = assemble(fam, first_site, sites, boundary, Phase::real(theta))?;
    Ok(hermitian_eigenvalues(&op.matrix))
}

/// Step function `E ↦ #{E_j < E} / #{E_j}` of one finite-volume spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdsCurve {
    pub n: usize,
    pub theta: f64,
    pub energies: Vec<f64>,
}

impl IdsCurve {
    pub fn new(fam: &OperatorFamily, theta: f64, n: usize) -> Result<Self> {
        Ok(IdsCurve {
            n,
            theta,
            energies: finite_volume_spectrum(fam, theta, 0, n, Boundary::Dirichlet)?,
        })
    }

    pub fn eval(&self, e: f64) -> f64 {
        self.energies.partition_point(|&x| x < e) as f64 / self.energies.len() as f64
    }
}

/// Blocks of the Dirichlet restriction to `[0, n−1]` at a real phase:
/// diagonal blocks and the blocks just above the diagonal.
fn tridiagonal_blocks(fam: &OperatorFamily, theta: f64, n: usize) -> Result<(Vec<CMat>, Vec<CMat>)> {
    let p = Phase::real(theta);
    let diag = (0..n as i64).map(|k| fam.v_at(fam.shift(p, k))).collect::<Result<Vec<_>>>()?;
    let upper = (1..n as i64).map(|k| fam.b_at(fam.shift(p, k))).collect::<Result<Vec<_>>>()?;
    Ok((diag, upper))
}

/// Number of eigenvalues `< e` by Sylvester inertia of the block `LDL^*`
/// factorization of `H − e`.
fn count_below(diag: &[CMat], upper: &[CMat], e: f64) -> usize {
    let d = diag[0].nrows();
    let shift = CMat::identity(d, d) * c(e, 0.0);
    if d == 1 {
        let mut count = 0;
        let mut s = 0.0;
        for k in 0..diag.len() {
            let mut x = diag[k][(0, 0)].re - e;
            if k > 0 {
                let b = upper[k - 1][(0, 0)].norm_sqr();
                // a zero pivot is moved to +0, which keeps the count strict
                x -= b / if s == 0.0 { f64::MIN_POSITIVE } else { s };
            }
            if x < 0.0 {
                count += 1;
            }
            s = x;
        }
        return count;
    }
    let mut count = 0;
    let mut s: Option<CMat> = None;
    for k in 0..diag.len() {
        let mut x = &diag[k] - &shift;
        if let Some(prev) = &s {
            let u = &upper[k - 1];
            let inv = prev.clone().lu().try_inverse().unwrap_or_else(|| {
                let mut p = prev.clone();
                for i in 0..d {
                    p[(i, i)] += c(1e-14, 0.0);
                }
                p.lu().try_inverse().expect("perturbed pivot block is invertible")
            });
            x -= u.adjoint() * inv * u;
            x = (&x + x.adjoint()) * c(0.5, 0.0);
        }
        count += negative_count(&x);
        s = Some(x);
    }
    count
}

/// `N_N(θ, E)`: fraction of the `dN` eigenvalues of `H_θ|_{[0,N−1]}` below `E`.
pub fn ids_estimate(fam: &OperatorFamily, theta: f64, e: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(QpError::Precondition("volume must be at least 1".into()));
    }
    let (diag, upper) = tridiagonal_blocks(fam, theta, n)?;
    Ok(count_below(&diag, &upper, e) as f64 / (n * fam.d()) as f64)
}

/// The eigenvalue of `H_θ|_{[0,N−1]}` closest to `target`, by bisection on
/// inertia counts.
pub fn nearest_eigenvalue(fam: &OperatorFamily, theta: f64, n: usize, target: f64) -> Result<f64> {
    let (diag, upper) = tridiagonal_blocks(fam, theta, n)?;
    let bound = diag.iter().map(crate::linalg::op_norm).fold(0.0, f64::max)
        + 2.0 * upper.iter().map(crate::linalg::op_norm).fold(0.0, f64::max)
        + 1.0;
    let total = n * fam.d();
    let below = count_below(&diag, &upper, target);
    // the eigenvalue with index i (0-based, ascending) is the smallest e with count_below(e) > i
    let kth = |i: usize| {
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if count_below(&diag, &upper, mid) > i {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let mut best: Option<f64> = None;
    for i in [below.checked_sub(1), (below < total).then_some(below)].into_iter().flatten() {
        let e = kth(i);
        if best.is_none_or(|b| (e - target).abs() < (b - target).abs()) {
            best = Some(e);
        }
    }
    best.ok_or_else(|| QpError::InsufficientData("empty spectrum".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowCount {
    pub energy: f64,
    pub eta: f64,
    /// `#{E_j ∈ [E−η, E+η)} / (dN)`.
    pub count: f64,
    /// `(2η / dN) Im tr (H − E − iη)^{-1}`.
    pub resolvent_estimate: f64,
}

/// `tr (H − z)^{-1}` for a block tridiagonal Hermitian `H`, from the left
/// and right Schur complements.
fn resolvent_trace(diag: &[CMat], upper: &[CMat], z: Complex64) -> Result<Complex64> {
    let n = diag.len();
    let d = diag[0].nrows();
    let zi = CMat::identity(d, d) * z;
    let shifted: Vec<CMat> = diag.iter().map(|a| a - &zi).collect();
    let inv = |m: &CMat| m.clone().lu().try_inverse().ok_or(QpError::SingularEnergy { energy: z });
    let mut left = vec![shifted[0].clone()];
    for k in 1..n {
        let u = &upper[k - 1];
        let prev = inv(&left[k - 1])?;
        left.push(&shifted[k] - u.adjoint() * prev * u);
    }
    let mut right = vec![CMat::zeros(d, d); n];
    right[n - 1] = shifted[n - 1].clone();
    for k in (0..n - 1).rev() {
        let u = &upper[k];
        let next = inv(&right[k + 1])?;
        right[k] = &shifted[k] - u * next * u.adjoint();
    }
    let mut tr = Complex64::new(0.0, 0.0);
    for k in 0..n {
        tr += inv(&(&left[k] + &right[k] - &shifted[k]))?.trace();
    }
    Ok(tr)
}

pub fn window_count(fam: &OperatorFamily, theta: f64, e: f64, eta: f64, n: usize) -> Result<WindowCount> {
    if eta <= 0.0 {
        return Err(QpError::Precondition(format!("window half-width must be positive, got {eta}")));
    }
    if n == 0 {
        return Err(QpError::Precondition("volume must be at least 1".into()));
    }
    let (diag, upper) = tridiagonal_blocks(fam, theta, n)?;
    let vol = (n * fam.d()) as f64;
    let inside = count_below(&diag, &upper, e + eta) - count_below(&diag, &upper, e - eta);
    let tr = resolvent_trace(&diag, &upper, c(e, eta))?;
    Ok(WindowCount {
        energy: e,
        eta,
        count: inside as f64 / vol,
        resolvent_estimate: 2.0 * eta * tr.im / vol,
    })
}

/// Least-squares line through `(x, y)`: `(slope, intercept, rms residual)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(QpError::InsufficientData(format!("{} points", x.len().min(y.len()))));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(QpError::InsufficientData("abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    Ok((slope, intercept, rms))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub energy: f64,
    pub n: usize,
    /// Window half-widths, strictly decreasing.
    pub eta_grid: Vec<f64>,
    /// Phase-averaged window counts.
    pub d_values: Vec<f64>,
    pub resolvent_values: Vec<f64>,
    pub beta_hat: f64,
    pub beta_bound: f64,
    pub kappa_rounded: i64,
    /// RMS residual of the log-log fit.
    pub confidence: f64,
    pub dropped: Vec<f64>,
}

/// Slope of `log d(η)` against `log 2η`; points with `d = 0` are dropped.
pub fn fit_power_law(eta: &[f64], d: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = Vec::new();
    for (&h, &v) in eta.iter().zip(d) {
        if v > 0.0 {
            xs.push((2.0 * h).ln());
            ys.push(v.ln());
        } else {
            dropped.push(h);
        }
    }
    if xs.len() < 3 {
        return Err(QpError::InsufficientData(format!(
            "only {} nonzero window counts",
            xs.len()
        )));
    }
    let (slope, _, rms) = fit_line(&xs, &ys)?;
    Ok((slope, rms, dropped))
}

/// Window counts at `E₀` averaged over `thetas`, and their power-law fit
/// against `β ≤ 1/(2κ)`.
pub fn holder_fit(fam: &OperatorFamily, e0: f64, eta_grid: &[f64], n: usize, thetas: &[f64], kappa_rounded: i64) -> Result<HolderReport> {
    if eta_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(QpError::Precondition("eta grid must be strictly decreasing".into()));
    }
    if thetas.is_empty() {
        return Err(QpError::Precondition("need at least one phase".into()));
    }
    let per_phase = thetas
        .par_iter()
        .map(|&t| {
            eta_grid
                .iter()
                .map(|&h| window_count(fam, t, e0, h, n))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let m = thetas.len() as f64;
    let d_values: Vec<f64> = (0..eta_grid.len())
        .map(|i| per_phase.iter().map(|row| row[i].count).sum::<f64>() / m)
        .collect();
    let resolvent_values: Vec<f64> = (0..eta_grid.len())
        .map(|i| per_phase.iter().map(|row| row[i].resolvent_estimate).sum::<f64>() / m)
        .collect();
    let (beta_hat, confidence, dropped) = fit_power_law(eta_grid, &d_values)?;
    Ok(HolderReport {
        energy: e0,
        n,
        eta_grid: eta_grid.to_vec(),
        d_values,
        resolvent_values,
        beta_hat,
        beta_bound: if kappa_rounded > 0 { 1.0 / (2.0 * kappa_rounded as f64) } else { f64::INFINITY },
        kappa_rounded,
        confidence,
        dropped,
    })
}

/// `count` log-spaced values from `hi` down to `lo`.
pub fn log_spaced_desc(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let (a, b) = (hi.ln(), lo.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// `L_d(E)` at `ε = 0`, rejected unless it exceeds `nu_gap`.
pub fn positivity_gate(fam: &OperatorFamily, e: f64, n: usize, grid: usize, nu_gap: f64) -> Result<f64> {
    let tc = TransferCocycle::new(fam, c(e, 0.0));
    let l = le_with_options(&tc, 0.0, n, grid, false)?.exponents[fam.d() - 1];
    if l <= nu_gap {
        return Err(QpError::Precondition(format!(
            "L_{}(E = {e}) = {l:.4} does not exceed the positivity threshold {nu_gap}",
            fam.d()
        )));
    }
    Ok(l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LdtKind {
    Propagator,
    Dirichlet,
    Periodic,
}

/// Per-phase values `(1/n) log X(θ + iε)` minus their grid mean, where `X`
/// is `‖⋀^d M_n‖`, `|D_n|` or `|f_n|`.
///
/// For the propagator the mean is `L^d_ε(n)`. For the determinants it
/// agrees with `L^d_ε(n) + ⟨log|det B|⟩` up to `O(log n / n)`; centring on
/// the mean keeps that boundary term out of the deviation.
pub fn ldt_deviations(fam: &OperatorFamily, e: f64, eps: f64, n: usize, grid: usize, kind: LdtKind) -> Result<Vec<f64>> {
    let d = fam.d();
    let energy = c(e, 0.0);
    let tc = TransferCocycle::new(fam, energy);
    let nf = n as f64;
    let vals = (0..grid)
        .into_par_iter()
        .map(|i| {
            let p = Phase::new(i as f64 / grid as f64, eps);
            Ok(match kind {
                LdtKind::Propagator => graded_product(&tc, p, n)?.log_wedge_norms()[d - 1],
                LdtKind::Dirichlet => dirichlet_det(fam, p, energy, n)?.log_mag,
                LdtKind::Periodic => periodic_block_det(fam, p, energy, n)?.log_mag,
            } / nf)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = vals.iter().sum::<f64>() / grid as f64;
    Ok(vals.into_iter().map(|v| v - mean).collect())
}

/// Fraction of the grid on which the deviation is at most `−deviation`.
pub fn ldt_measure(fam: &OperatorFamily, e: f64, eps: f64, n: usize, grid: usize, deviation: f64, kind: LdtKind) -> Result<f64> {
    Ok(ldt_profile(fam, e, eps, n, grid, &[deviation], kind)?[0])
}

pub fn ldt_profile(fam: &OperatorFamily, e: f64, eps: f64, n: usize, grid: usize, deviations: &[f64], kind: LdtKind) -> Result<Vec<f64>> {
    if grid == 0 {
        return Err(QpError::Precondition("grid must contain at least one phase".into()));
    }
    let devs = ldt_deviations(fam, e, eps, n, grid, kind)?;
    Ok(deviations
        .iter()
        .map(|&t| devs.iter().filter(|&&v| v <= -t).count() as f64 / grid as f64)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiophantineCertificate {
    pub a: f64,
    pub exponent: f64,
    pub k_max: u64,
    /// The `k` attaining `min ‖kω‖ |k|^A`.
    pub worst_k: u64,
}

impl DiophantineCertificate {
    /// Exhaustive check of `‖kω‖ ≥ a / k^A` for `0 < k ≤ k_max`.
    pub fn verify(&self, omega: f64) -> bool {
        (1..=self.k_max).all(|k| {
            let kf = k as f64;
            torus_norm(kf * omega) * kf.powf(self.exponent) >= self.a * (1.0 - 1e-12)
        })
    }
}

pub const EXPONENT_CANDIDATES: [f64; 9] = [1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0];

/// `min_{0<k≤k_max} ‖kω‖ k^A` for the smallest candidate `A` whose minimum
/// reaches `a_floor`; otherwise the candidate with the largest minimum.
///
/// For `A ≥ 1` the minimum is attained at a convergent denominator, so only
/// those are scanned.
pub fn diophantine_certificate(freq: &Frequency, k_max: u64, a_floor: f64) -> Result<DiophantineCertificate> {
    if k_max < 2 {
        return Err(QpError::Precondition(format!("k_max must be at least 2, got {k_max}")));
    }
    let omega = freq.omega();
    let mut qs: Vec<u64> = freq.convergents().into_iter().map(|(_, q)| q).filter(|&q| q <= k_max).collect();
    qs.insert(0, 1);
    qs.dedup();
    for &q in &qs {
        if torus_norm(q as f64 * omega) == 0.0 {
            return Err(QpError::NotDiophantine { omega, denominator: q });
        }
    }
    let floor = |a_exp: f64| {
        qs.iter()
            .map(|&q| (torus_norm(q as f64 * omega) * (q as f64).powf(a_exp), q))
            .fold((f64::INFINITY, 0), |acc, x| if x.0 < acc.0 { x } else { acc })
    };
    let mut best: Option<DiophantineCertificate> = None;
    for a_exp in EXPONENT_CANDIDATES {
        let (a, worst_k) = floor(a_exp);
        let cert = DiophantineCertificate { a, exponent: a_exp, k_max, worst_k };
        if a >= a_floor {
            return Ok(cert);
        }
        if best.as_ref().is_none_or(|b| a > b.a) {
            best = Some(cert);
        }
    }
    Ok(best.unwrap())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleScales {
    pub kappa0: f64,
    pub n0: u64,
    pub scales: Vec<u64>,
    /// Largest gap between consecutive members (and from `N₀` to the first).
    pub max_gap: u64,
    pub warnings: Vec<String>,
}

/// The first `count` integers `n ≥ N₀` with `‖nω‖ ≤ κ₀`.
pub fn admissible_scales(freq: &Frequency, kappa0: f64, n0: u64, count: usize) -> Result<AdmissibleScales> {
    if kappa0 <= 0.0 {
        return Err(QpError::Precondition(format!("kappa0 must be positive, got {kappa0}")));
    }
    let mut warnings = Vec::new();
    if kappa0 >= 0.5 {
        warnings.push("kappa0 >= 1/2: every scale is admissible".to_string());
    }
    let omega = freq.omega();
    let mut scales = Vec::with_capacity(count);
    let mut n = n0;
    let mut prev = n0;
    let mut max_gap = 0;
    while scales.len() < count {
        if torus_norm(n as f64 * omega) <= kappa0 {
            max_gap = max_gap.max(n - prev);
            scales.push(n);
            prev = n;
        }
        n += 1;
    }
    Ok(AdmissibleScales {
        kappa0,
        n0,
        scales,
        max_gap,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodCheck {
    pub energy: f64,
    pub eps: f64,
    pub lyap_d: f64,
    pub lyap_sum: f64,
    pub kappa: Option<i64>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodReport {
    pub e0: f64,
    pub radius: f64,
    /// `τ`, here `L_d(E₀)` at `ε = 0`.
    pub tau: f64,
    pub kappa0: i64,
    pub checks: Vec<NeighborhoodCheck>,
    pub warnings: Vec<String>,
}

/// Verifies, on `E ∈ {E₀ − r, E₀, E₀ + r}` and `ε ∈ {−δ/2, 0, δ/2}`:
/// `L_d ≥ τ/2`, `κ^d ≤ κ^d(E₀)` and `L^d_ε ≤ L^d_0 + 2πκ^d(E₀)|ε|`,
/// halving `r` (at most `shrinks` times) on any violation.
pub fn energy_neighborhood(
    fam: &OperatorFamily,
    e0: f64,
    radius: f64,
    n: usize,
    grid: usize,
    shrinks: usize,
) -> Result<NeighborhoodReport> {
    let d = fam.d();
    let delta = fam.delta();
    let h = DEFAULT_STEP.min(delta / 8.0);
    let at = |e: f64, eps: f64| le_with_options(&TransferCocycle::new(fam, c(e, 0.0)), eps, n, grid, false);
    let base = at(e0, 0.0)?;
    let tau = base.exponents[d - 1];
    let kappa0 = acceleration(&TransferCocycle::new(fam, c(e0, 0.0)), 0.0, n, grid, h)?[d - 1].kappa_rounded;
    let mut r = radius;
    let mut warnings = Vec::new();
    for attempt in 0..=shrinks {
        let mut checks = Vec::new();
        for e in [e0 - r, e0, e0 + r] {
            let l0 = at(e, 0.0)?.sums[d - 1];
            for eps in [-delta / 2.0, 0.0, delta / 2.0] {
                let p = at(e, eps)?;
                let kappa = if eps >= 0.0 && eps + 3.0 * h <= delta {
                    Some(acceleration(&TransferCocycle::new(fam, c(e, 0.0)), eps, n, grid, h)?[d - 1].kappa_rounded)
                } else {
                    None
                };
                let bound = l0 + std::f64::consts::TAU * kappa0 as f64 * eps.abs() + 1e-3;
                let ok = p.exponents[d - 1] >= tau / 2.0 && kappa.is_none_or(|k| k <= kappa0) && p.sums[d - 1] <= bound;
                checks.push(NeighborhoodCheck {
                    energy: e,
                    eps,
                    lyap_d: p.exponents[d - 1],
                    lyap_sum: p.sums[d - 1],
                    kappa,
                    ok,
                });
            }
        }
        if checks.iter().all(|c| c.ok) || attempt == shrinks {
            if !checks.iter().all(|c| c.ok) {
                warnings.push(format!("neighborhood conditions still violated at radius {r:.3e}"));
            }
            return Ok(NeighborhoodReport {
                e0,
                radius: r,
                tau,
                kappa0,
                checks,
                warnings,
            });
        }
        warnings.push(format!("shrinking neighborhood radius from {r:.3e}"));
        r /= 2.0;
    }
    unreachable!()
}
