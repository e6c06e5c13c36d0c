//! Zero counts of `z ↦ D_n(z, E)` and `z ↦ f_n(z, E)` by the argument
//! principle, where `z = exp(2πi(θ + iε))`.
//!
//! Both determinants are Laurent polynomials in `z`, so the number of zeros
//! in an annulus is the difference of the winding numbers on its two
//! boundary circles. Balls near the unit circle contain no pole and their
//! count is a single winding number.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::determinants::{assemble, dirichlet_det, periodic_block_det, Boundary};
use crate::error::{QpError, Result};
use crate::family::OperatorFamily;
use crate::frequency::torus_norm;
use crate::linalg::{c, complex_eigenvalues, CMat};
use crate::logdet::LogDet;
use crate::sampling::Phase;

/// Radius jitter factors tried when a contour passes too close to a zero.
pub const JITTER: [f64; 5] = [1.0, 0.97, 1.03, 0.94, 1.06];

/// `‖nω‖` above this triggers an admissibility warning for periodic counts.
pub const DEFAULT_KAPPA0: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindingConfig {
    pub initial_points: usize,
    pub max_depth: u32,
    /// Largest phase increment accepted between neighbouring samples.
    pub max_arg_step: f64,
    /// Largest change of `log|g|` accepted between neighbouring samples.
    pub max_log_step: f64,
}

impl Default for WindingConfig {
    fn default() -> Self {
        WindingConfig {
            initial_points: 64,
            max_depth: 30,
            max_arg_step: PI / 2.0,
            max_log_step: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Winding {
    pub winding: i64,
    pub residual: f64,
    pub points_used: usize,
    pub depth: u32,
    pub radius: f64,
}

struct Arc {
    turn: f64,
    points: usize,
    depth: u32,
}

fn refine<F>(f: &F, center: Complex64, radius: f64, ends: (f64, LogDet, f64, LogDet), depth: u32, cfg: &WindingConfig) -> Result<Arc>
where
    F: Fn(Complex64) -> Result<LogDet> + Sync,
{
    let (t0, u0, t1, u1) = ends;
    let turn = (u1.phase_unit / u0.phase_unit).arg();
    let dm = (u1.log_mag - u0.log_mag).abs();
    if turn.abs() < cfg.max_arg_step && dm < cfg.max_log_step {
        return Ok(Arc { turn, points: 0, depth });
    }
    if depth >= cfg.max_depth {
        return Err(QpError::ContourDegenerate(format!(
            "phase not resolved on |z - {center}| = {radius:.3e} near t = {t0:.6}"
        )));
    }
    let tm = 0.5 * (t0 + t1);
    let um = eval_on_circle(f, center, radius, tm)?;
    let a = refine(f, center, radius, (t0, u0, tm, um), depth + 1, cfg)?;
    let b = refine(f, center, radius, (tm, um, t1, u1), depth + 1, cfg)?;
    Ok(Arc {
        turn: a.turn + b.turn,
        points: a.points + b.points + 1,
        depth: a.depth.max(b.depth),
    })
}

fn eval_on_circle<F>(f: &F, center: Complex64, radius: f64, t: f64) -> Result<LogDet>
where
    F: Fn(Complex64) -> Result<LogDet> + Sync,
{
    let z = center + Complex64::from_polar(radius, TAU * t);
    let u = f(z)?;
    if u.is_zero() || !u.log_mag.is_finite() {
        return Err(QpError::ContourDegenerate(format!("function vanishes at z = {z}")));
    }
    Ok(u)
}

/// Winding number of `g` around `|z − center| = radius`.
pub fn winding_number<F>(f: &F, center: Complex64, radius: f64, cfg: &WindingConfig) -> Result<Winding>
where
    F: Fn(Complex64) -> Result<LogDet> + Sync,
{
    let n0 = cfg.initial_points.max(4);
    let ts: Vec<f64> = (0..=n0).map(|i| i as f64 / n0 as f64).collect();
    let mut vals = ts[..n0]
        .par_iter()
        .map(|&t| eval_on_circle(f, center, radius, t))
        .collect::<Result<Vec<_>>>()?;
    vals.push(vals[0]);
    let arcs = (0..n0)
        .into_par_iter()
        .map(|i| refine(f, center, radius, (ts[i], vals[i], ts[i + 1], vals[i + 1]), 0, cfg))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = arcs.iter().map(|a| a.turn).sum::<f64>() / TAU;
    let winding = total.round();
    let residual = (total - winding).abs();
    if residual >= 0.1 {
        return Err(QpError::ContourDegenerate(format!("winding residual {residual:.3}")));
    }
    Ok(Winding {
        winding: winding as i64,
        residual,
        points_used: n0 + arcs.iter().map(|a| a.points).sum::<usize>(),
        depth: arcs.iter().map(|a| a.depth).max().unwrap_or(0),
        radius,
    })
}

/// [`winding_number`], retrying on the radii `radius · JITTER`.
pub fn winding_with_jitter<F>(f: &F, center: Complex64, radius: f64, cfg: &WindingConfig) -> Result<Winding>
where
    F: Fn(Complex64) -> Result<LogDet> + Sync,
{
    let mut last = None;
    for j in JITTER {
        match winding_number(f, center, radius * j, cfg) {
            Ok(w) => return Ok(w),
            Err(e @ QpError::ContourDegenerate(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap())
}

/// `D_n` or `f_n` at `e^{2πikω} z`.
pub fn det_at_z(fam: &OperatorFamily, energy: Complex64, n: usize, kind: Boundary, shift: i64, z: Complex64) -> Result<LogDet> {
    let p = fam.shift(Phase::from_z(z), shift);
    match kind {
        Boundary::Dirichlet => dirichlet_det(fam, p, energy, n),
        Boundary::Periodic => periodic_block_det(fam, p, energy, n),
    }
}

/// `A_ε = {e^{2πi(θ+iε')} : |ε'| ≤ eps_half}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSpec {
    pub eps_half: f64,
}

impl AnnulusSpec {
    pub fn radii(&self) -> (f64, f64) {
        ((-TAU * self.eps_half).exp(), (TAU * self.eps_half).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroCountReport {
    pub n: usize,
    pub count: i64,
    /// `count / (2n)`.
    pub normalized: f64,
    pub kappa_ref: Option<f64>,
    pub discrepancy: Option<f64>,
    pub contour_points_used: usize,
    pub refinement_depth: u32,
    pub radii: (f64, f64),
    pub warnings: Vec<String>,
}

/// Zeros of the chosen determinant in `A_ε`, as outer minus inner winding.
pub fn annulus_zero_count(
    fam: &OperatorFamily,
    energy: Complex64,
    n: usize,
    spec: AnnulusSpec,
    kind: Boundary,
    kappa_ref: Option<f64>,
) -> Result<ZeroCountReport> {
    if spec.eps_half > fam.delta() / 2.0 + 1e-12 {
        return Err(QpError::StripViolation {
            eps: spec.eps_half,
            delta: fam.delta() / 2.0,
        });
    }
    let mut warnings = Vec::new();
    if kind == Boundary::Periodic {
        let dist = torus_norm(n as f64 * fam.omega());
        if dist > DEFAULT_KAPPA0 {
            warnings.push(format!(
                "n = {n} is not admissible: |n omega| = {dist:.3} > {DEFAULT_KAPPA0}"
            ));
        }
    }
    let (r_in, r_out) = spec.radii();
    let f = |z: Complex64| det_at_z(fam, energy, n, kind, 0, z);
    let cfg = WindingConfig {
        initial_points: (8 * fam.degree().max(1) as usize * n * fam.d()).max(64),
        ..WindingConfig::default()
    };
    let zero = Complex64::new(0.0, 0.0);
    let outer = winding_with_jitter(&f, zero, r_out, &cfg)?;
    let inner = winding_with_jitter(&f, zero, r_in, &cfg)?;
    let count = outer.winding - inner.winding;
    let normalized = count as f64 / (2 * n) as f64;
    Ok(ZeroCountReport {
        n,
        count,
        normalized,
        kappa_ref,
        discrepancy: kappa_ref.map(|k| (normalized - k).abs()),
        contour_points_used: outer.points_used + inner.points_used,
        refinement_depth: outer.depth.max(inner.depth),
        radii: (inner.radius, outer.radius),
        warnings,
    })
}

/// Zeros of `z ↦ det(e^{2πikω} z)` in `B(z0, r)`.
#[allow(clippy::too_many_arguments)]
pub fn ball_zero_count(
    fam: &OperatorFamily,
    energy: Complex64,
    n: usize,
    shift: i64,
    z0: Complex64,
    r: f64,
    kind: Boundary,
) -> Result<Winding> {
    let f = |z: Complex64| det_at_z(fam, energy, n, kind, shift, z);
    winding_with_jitter(&f, z0, r, &WindingConfig::default())
}

/// `r_n = exp(−(log n)^{c0})`, clamped to `[1e-4, 1e-2]`.
pub fn default_radius(n: usize, c0: f64) -> f64 {
    (-(n as f64).ln().powf(c0)).exp().clamp(1e-4, 1e-2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSearchResult {
    pub n: usize,
    pub center: Complex64,
    pub radius: f64,
    pub shift: i64,
    pub count: i64,
    /// Ring index `C₀`: no zeros in `B(z0, 4(C₀+1)r) \ B(z0, 4C₀r)`.
    pub ring_index: usize,
    pub ring_radii: (f64, f64),
    pub shifts_tried: usize,
    pub kind: Boundary,
}

/// `0, 1, −1, 2, −2, …` with `|k| < limit`.
fn shift_order(limit: f64) -> impl Iterator<Item = i64> {
    (0..)
        .flat_map(|k: i64| if k == 0 { vec![0] } else { vec![k, -k] })
        .take_while(move |k| (k.abs() as f64) < limit)
}

/// Scans shifts `k` for a ball `B(z0, r)` holding at most `kappa_cap` zeros
/// of `z ↦ D_n(e^{2πikω} z)` that is also surrounded by a zero-free ring.
#[allow(clippy::too_many_arguments)]
pub fn local_shift_search(
    fam: &OperatorFamily,
    energy: Complex64,
    n: usize,
    z0: Complex64,
    r: f64,
    eps_margin: f64,
    kappa_cap: usize,
    kind: Boundary,
) -> Result<LocalSearchResult> {
    let limit = (1.0 - eps_margin) * n as f64 / 2.0;
    let span = (2.0 * limit).ceil() as i64;
    let sep = (1..=span.max(1))
        .map(|j| torus_norm(j as f64 * fam.omega()))
        .fold(f64::INFINITY, f64::min);
    if sep <= 2.0 * r {
        return Err(QpError::Precondition(format!(
            "radius {r:.3e} not separated by the shifts: min |(k1-k2) omega| = {sep:.3e}"
        )));
    }
    let mut seen = Vec::new();
    for (index, k) in shift_order(limit).enumerate() {
        let tried = index + 1;
        let count = match ball_zero_count(fam, energy, n, k, z0, r, kind) {
            Ok(w) => w.winding,
            Err(QpError::ContourDegenerate(_)) => continue,
            Err(e) => return Err(e),
        };
        seen.push((k, count));
        if count < 0 || count as usize > kappa_cap {
            continue;
        }
        let mut prev: Option<i64> = None;
        for c0 in 1..=kappa_cap + 2 {
            let rad = 4.0 * c0 as f64 * r;
            let w = match ball_zero_count(fam, energy, n, k, z0, rad, kind) {
                Ok(w) => w.winding,
                Err(QpError::ContourDegenerate(_)) => {
                    prev = None;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if let Some(p) = prev {
                if p == w {
                    let ring = c0 - 1;
                    return Ok(LocalSearchResult {
                        n,
                        center: z0,
                        radius: r,
                        shift: k,
                        count,
                        ring_index: ring,
                        ring_radii: (4.0 * ring as f64 * r, rad),
                        shifts_tried: tried,
                        kind,
                    });
                }
            }
            prev = Some(w);
        }
    }
    Err(QpError::LemmaViolation(format!(
        "no shift |k| < {limit:.1} gives at most {kappa_cap} zeros in B({z0}, {r:.3e}) with a zero-free ring; counts {seen:?}"
    )))
}

/// Zeros of `g` inside `|z − center| < radius`, from the Fourier modes of
/// `log g` on the boundary circle.
///
/// With `u = (z − center)/radius` and `u_j` the enclosed zeros,
/// `log g − i m t` has negative modes `−s_p / p` where `s_p = Σ u_j^p`;
/// Newton's identities turn the power sums into a monic polynomial.
pub fn locate_zeros<F>(f: &F, center: Complex64, radius: f64) -> Result<Vec<Complex64>>
where
    F: Fn(Complex64) -> Result<LogDet> + Sync,
{
    let m = winding_with_jitter(f, center, radius, &WindingConfig::default())?;
    let radius = m.radius;
    let count = m.winding;
    if count < 0 {
        return Err(QpError::Numerical("negative zero count inside a pole-free disk".into()));
    }
    let count = count as usize;
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut npts = 256usize.max(8 * count);
    loop {
        let vals = (0..npts)
            .into_par_iter()
            .map(|i| eval_on_circle(f, center, radius, i as f64 / npts as f64))
            .collect::<Result<Vec<_>>>()?;
        let mut arg = vals[0].phase_unit.arg();
        let mut ok = true;
        let mut logs = Vec::with_capacity(npts);
        for i in 0..npts {
            if i > 0 {
                let step = (vals[i].phase_unit / vals[i - 1].phase_unit).arg();
                ok &= step.abs() < PI / 2.0;
                arg += step;
            }
            let t = TAU * i as f64 / npts as f64;
            logs.push(Complex64::new(vals[i].log_mag, arg - count as f64 * t));
        }
        if !ok && npts < 1 << 16 {
            npts *= 2;
            continue;
        }
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(npts).process(&mut logs);
        // forward FFT gives Σ x_i e^{−2πi k i / N}; mode −p sits at index p of the
        // inverse transform, i.e. index N − p of the forward one
        let power: Vec<Complex64> = (1..=count)
            .map(|p| -(p as f64) * logs[npts - p] / npts as f64)
            .collect();
        let mut e = vec![Complex64::new(1.0, 0.0)];
        for k in 1..=count {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 1..=k {
                let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
                acc += sign * e[k - i] * power[i - 1];
            }
            e.push(acc / k as f64);
        }
        // u^m − e1 u^{m−1} + e2 u^{m−2} − …
        let coeffs: Vec<Complex64> = (0..=count)
            .map(|k| if k % 2 == 0 { e[k] } else { -e[k] })
            .collect();
        let roots = poly_roots(&coeffs)?;
        return Ok(roots.into_iter().map(|u| center + u * radius).collect());
    }
}

/// Roots of `a_0 z^m + a_1 z^{m−1} + … + a_m` (leading first) from the
/// eigenvalues of the companion matrix.
pub fn poly_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let lead = coeffs
        .iter()
        .position(|a| a.norm() > 0.0)
        .ok_or_else(|| QpError::Numerical("zero polynomial".into()))?;
    let a = &coeffs[lead..];
    let m = a.len() - 1;
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut comp = CMat::zeros(m, m);
    for j in 0..m {
        comp[(0, j)] = -a[j + 1] / a[0];
    }
    for i in 1..m {
        comp[(i, i - 1)] = c(1.0, 0.0);
    }
    complex_eigenvalues(&comp)
}

/// All zeros of `z ↦ det(z)` for `nd · deg ≤ 64`, from the Laurent
/// coefficients obtained by an FFT of unit-circle samples.
pub fn fft_companion_roots(fam: &OperatorFamily, energy: Complex64, n: usize, kind: Boundary) -> Result<Vec<Complex64>> {
    let pole = fam.degree().max(0) as usize * n * fam.d();
    if pole == 0 {
        return Ok(Vec::new());
    }
    if pole > 64 {
        return Err(QpError::Precondition(format!(
            "FFT companion oracle limited to pole order 64, got {pole}"
        )));
    }
    let total = 2 * pole;
    let k = (total + 1).next_power_of_two() * 2;
    let vals = (0..k)
        .into_par_iter()
        .map(|t| det_at_z(fam, energy, n, kind, 0, Complex64::from_polar(1.0, TAU * t as f64 / k as f64)))
        .collect::<Result<Vec<_>>>()?;
    let top = vals.iter().map(|v| v.log_mag).fold(f64::NEG_INFINITY, f64::max);
    let mut buf: Vec<Complex64> = vals.iter().map(|v| v.scaled_value(top)).collect();
    FftPlanner::new().plan_fft_forward(k).process(&mut buf);
    // coefficient of z^j, j ∈ [−pole, pole], sits at index (k − j) mod k
    let coef = |j: i64| buf[((k as i64 - j).rem_euclid(k as i64)) as usize] / k as f64;
    let scale = (-(pole as i64)..=pole as i64).map(|j| coef(j).norm()).fold(0.0, f64::max);
    let mut poly: Vec<Complex64> = (-(pole as i64)..=pole as i64).rev().map(coef).collect();
    while poly.len() > 1 && poly[0].norm() < 1e-13 * scale {
        poly.remove(0);
    }
    while poly.len() > 1 && poly[poly.len() - 1].norm() < 1e-13 * scale {
        poly.pop();
    }
    poly_roots(&poly)
}

/// Matrices `A_m` with `H(z) = Σ_m z^m A_m` for the chosen restriction,
/// recovered exactly from `2·deg + 1` equispaced phases.
pub fn mode_decomposition(fam: &OperatorFamily, n: usize, kind: Boundary) -> Result<Vec<(i64, CMat)>> {
    let deg = fam.degree().max(0);
    let k = (2 * deg + 1) as usize;
    let mats = (0..k)
        .map(|t| Ok(assemble(fam, 0, n, kind, Phase::real(t as f64 / k as f64))?.matrix))
        .collect::<Result<Vec<_>>>()?;
    Ok((-deg..=deg)
        .map(|m| {
            let mut acc = CMat::zeros(mats[0].nrows(), mats[0].ncols());
            for (t, h) in mats.iter().enumerate() {
                let w = Complex64::from_polar(1.0, -TAU * (m * t as i64) as f64 / k as f64);
                acc += h * w;
            }
            (m, acc / c(k as f64, 0.0))
        })
        .collect())
}

/// All zeros of `z ↦ det(H(z) − E)` as eigenvalues of the block companion
/// linearization of `z^{deg} (H(z) − E)`.
pub fn linearized_roots(fam: &OperatorFamily, energy: Complex64, n: usize, kind: Boundary) -> Result<Vec<Complex64>> {
    let modes = mode_decomposition(fam, n, kind)?;
    let deg = modes.len() - 1;
    if deg == 0 {
        return Ok(Vec::new());
    }
    let dim = modes[0].1.nrows();
    let mut p: Vec<CMat> = modes.into_iter().map(|(_, a)| a).collect();
    let mid = deg / 2;
    for i in 0..dim {
        p[mid][(i, i)] -= energy;
    }
    let build = |coefs: &[CMat]| -> Option<CMat> {
        let lead = coefs[deg].clone().lu().try_inverse()?;
        let mut comp = CMat::zeros(dim * deg, dim * deg);
        for b in 0..deg - 1 {
            comp.view_mut((b * dim, (b + 1) * dim), (dim, dim))
                .copy_from(&CMat::identity(dim, dim));
        }
        for (b, pb) in coefs[..deg].iter().enumerate() {
            comp.view_mut(((deg - 1) * dim, b * dim), (dim, dim))
                .copy_from(&(-(&lead * pb)));
        }
        Some(comp)
    };
    if let Some(comp) = build(&p) {
        return complex_eigenvalues(&comp);
    }
    p.reverse();
    let comp = build(&p).ok_or_else(|| QpError::Numerical("both extreme mode matrices are singular".into()))?;
    Ok(complex_eigenvalues(&comp)?.into_iter().map(|w| 1.0 / w).collect())
}

/// Smallest sampled value of
/// `log|det(e^{2πik₀ω} z)| − n·lyap − Σ_j log|z − z_j|` over
/// `B(z0, (4C₀+3) r)`, the zeros `z_j` being those located in
/// `B(z0, (4C₀+2) r)`.
pub fn factorized_lower_bound_check<R: Rng>(
    fam: &OperatorFamily,
    energy: Complex64,
    search: &LocalSearchResult,
    lyap: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let k = search.shift;
    let f = |z: Complex64| det_at_z(fam, energy, search.n, search.kind, k, z);
    let r = search.radius;
    let c0 = search.ring_index as f64;
    let zeros = locate_zeros(&f, search.center, (4.0 * c0 + 2.0) * r)?;
    let outer = (4.0 * c0 + 3.0) * r;
    let guard = 1e-6 * r;
    let mut worst = f64::INFINITY;
    let mut taken = 0;
    while taken < samples {
        let rho = outer * rng.random_range(0.0f64..1.0).sqrt();
        let z = search.center + Complex64::from_polar(rho, TAU * rng.random_range(0.0..1.0));
        if zeros.iter().any(|zj| (z - zj).norm() < guard) {
            continue;
        }
        taken += 1;
        let v = f(z)?;
        let s: f64 = zeros.iter().map(|zj| (z - zj).norm().ln()).sum();
        worst = worst.min(v.log_mag - search.n as f64 * lyap - s);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaStability {
    pub equal: bool,
    pub counts: Vec<i64>,
    pub counts_eta: Vec<i64>,
}

/// Ball counts at `E` and `E + iη` on the radii `(4C₀ + 2 ± 1) r`.
pub fn eta_stability_check(fam: &OperatorFamily, energy: f64, eta: f64, search: &LocalSearchResult) -> Result<EtaStability> {
    let c0 = search.ring_index as f64;
    let radii = [(4.0 * c0 + 1.0) * search.radius, (4.0 * c0 + 3.0) * search.radius];
    let count = |e: Complex64| -> Result<Vec<i64>> {
        radii
            .iter()
            .map(|&rad| Ok(ball_zero_count(fam, e, search.n, search.shift, search.center, rad, search.kind)?.winding))
            .collect()
    };
    let counts = count(c(energy, 0.0))?;
    let counts_eta = if eta == 0.0 { counts.clone() } else { count(c(energy, eta))? };
    Ok(EtaStability {
        equal: counts == counts_eta,
        counts,
        counts_eta,
    })
}

/// Roots of `roots` inside the closed annulus `[r_in, r_out]`.
pub fn count_in_annulus(roots: &[Complex64], r_in: f64, r_out: f64) -> usize {
    roots.iter().filter(|z| (r_in..=r_out).contains(&z.norm())).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::builtins;
    use crate::frequency::Frequency;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn from_fn(g: impl Fn(Complex64) -> Complex64 + Sync) -> impl Fn(Complex64) -> Result<LogDet> + Sync {
        move |z| Ok(LogDet::from_value(g(z)))
    }

    #[test]
    fn winding_examples() {
        let cfg = WindingConfig::default();
        let o = Complex64::new(0.0, 0.0);
        assert_eq!(winding_number(&from_fn(|z| z.powi(5)), o, 1.0, &cfg).unwrap().winding, 5);
        assert_eq!(winding_number(&from_fn(|z| z.powi(-2)), o, 1.0, &cfg).unwrap().winding, -2);
        let g = from_fn(|z| (z - 0.5) * (z - 2.0));
        assert_eq!(winding_number(&g, o, 1.0, &cfg).unwrap().winding, 1);
        let lau = from_fn(|z| (z - 0.9) * (z - 2.0) / z);
        let w = winding_number(&lau, o, 1.5, &cfg).unwrap().winding - winding_number(&lau, o, 0.7, &cfg).unwrap().winding;
        assert_eq!(w, 1);
        let on = from_fn(|z| z - 1.0);
        assert!(matches!(winding_number(&on, o, 1.0, &cfg), Err(QpError::ContourDegenerate(_))));
        assert_eq!(winding_with_jitter(&on, o, 1.0, &cfg).unwrap().radius, 0.97);
    }

    #[test]
    fn locate_zeros_recovers_roots() {
        let roots = [c(0.1, 0.2), c(-0.3, 0.05), c(0.0, -0.4)];
        let g = from_fn(move |z| roots.iter().map(|r| z - r).product::<Complex64>() * (z * 0.3).exp());
        let found = locate_zeros(&g, c(0.0, 0.0), 0.8).unwrap();
        assert_eq!(found.len(), 3);
        for r in roots {
            assert!(found.iter().any(|f| (f - r).norm() < 1e-9));
        }
    }

    #[test]
    fn constant_family_has_no_zeros() {
        let f = builtins::constant(0.3, c(1.0, 0.0), Frequency::golden(), 0.1);
        let rep = annulus_zero_count(&f, c(0.1, 0.0), 16, AnnulusSpec { eps_half: 0.05 }, Boundary::Dirichlet, None).unwrap();
        assert_eq!(rep.count, 0);
        let z0 = Complex64::from_polar(1.0, 0.3);
        let s = local_shift_search(&f, c(0.1, 0.0), 16, z0, 1e-3, 0.1, 2, Boundary::Dirichlet).unwrap();
        assert_eq!((s.shift, s.count, s.ring_index), (0, 0, 1));
    }

    #[test]
    fn oracles_agree_with_winding() {
        let amo = builtins::almost_mathieu(3.0, Frequency::golden(), 0.1);
        let e = c(0.4, 0.0);
        for kind in [Boundary::Dirichlet, Boundary::Periodic] {
            let a = fft_companion_roots(&amo, e, 16, kind).unwrap();
            let b = linearized_roots(&amo, e, 16, kind).unwrap();
            assert_eq!(a.len(), 32);
            assert_eq!(b.len(), 32);
            let (r_in, r_out) = AnnulusSpec { eps_half: 0.05 }.radii();
            let rep = annulus_zero_count(&amo, e, 16, AnnulusSpec { eps_half: 0.05 }, kind, Some(1.0)).unwrap();
            assert_eq!(rep.count as usize, count_in_annulus(&b, r_in, r_out));
            assert_eq!(count_in_annulus(&a, r_in, r_out), count_in_annulus(&b, r_in, r_out));
        }
    }

    #[test]
    fn ball_counts_and_shift_equivariance() {
        let amo = builtins::almost_mathieu(3.0, Frequency::golden(), 0.1);
        let e = c(0.4, 0.0);
        let n = 16;
        let roots = linearized_roots(&amo, e, n, Boundary::Dirichlet).unwrap();
        // a ball around a root, and a ball between roots
        let z0 = roots.iter().min_by(|a, b| (a.norm() - 1.0).abs().total_cmp(&(b.norm() - 1.0).abs())).unwrap();
        let near = *z0 * c(1.0, 0.001);
        let rad = 0.02;
        let oracle = roots.iter().filter(|z| (*z - near).norm() < rad).count() as i64;
        let w = ball_zero_count(&amo, e, n, 0, near, rad, Boundary::Dirichlet).unwrap();
        assert_eq!(w.winding, oracle);
        let k = 3;
        let rot = Complex64::from_polar(1.0, TAU * k as f64 * amo.omega());
        let a = ball_zero_count(&amo, e, n, k, near, rad, Boundary::Dirichlet).unwrap();
        let b = ball_zero_count(&amo, e, n, 0, rot * near, rad, Boundary::Dirichlet).unwrap();
        assert_eq!(a.winding, b.winding);
    }

    #[test]
    fn local_search_and_lower_bound() {
        let amo = builtins::almost_mathieu(3.0, Frequency::golden(), 0.1);
        let e = c(0.4, 0.0);
        let n = 32;
        let r = default_radius(n, 1.5);
        let z0 = Complex64::from_polar(1.0, 1.1);
        let s = local_shift_search(&amo, e, n, z0, r, 0.1, 2, Boundary::Dirichlet).unwrap();
        assert!(s.count <= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let worst = factorized_lower_bound_check(&amo, e, &s, 3f64.ln(), 50, &mut rng).unwrap();
        assert!(worst >= -0.1 * n as f64 * 3.0, "{worst}");
        let st = eta_stability_check(&amo, 0.4, 1e-10, &s).unwrap();
        assert!(st.equal);
        let st0 = eta_stability_check(&amo, 0.4, 0.0, &s).unwrap();
        assert!(st0.equal);
    }

    #[test]
    fn kappa_cap_zero_around_a_zero_fails() {
        let amo = builtins::almost_mathieu(3.0, Frequency::golden(), 0.1);
        let e = c(0.4, 0.0);
        let n = 8;
        let roots = linearized_roots(&amo, e, n, Boundary::Dirichlet).unwrap();
        let z0 = roots.iter().min_by(|a, b| (a.norm() - 1.0).abs().total_cmp(&(b.norm() - 1.0).abs())).unwrap();
        // only k = 0 is scanned and the ball sits on a zero
        let r = local_shift_search(&amo, e, n, *z0, 0.01, 0.9, 0, Boundary::Dirichlet);
        assert!(matches!(r, Err(QpError::LemmaViolation(_))), "{r:?}");
        assert!(local_shift_search(&amo, e, n, c(1.0, 0.0), 0.9, 0.0, 0, Boundary::Dirichlet).is_err());
    }
}
