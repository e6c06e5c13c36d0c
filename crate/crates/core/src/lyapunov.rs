//! Finite-scale Lyapunov exponents, complexified profiles and accelerations.
//!
//! `L^j_ε(n) = (1/n) ∫ log ‖⋀^j M_n(θ + iε)‖ dθ` is approximated by an
//! equispaced average over `grid` phases. Individual exponents are the
//! differences `L_j = L^j − L^{j−1}`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{graded_product, wedge_product, Cocycle};
use crate::error::{QpError, Result};
use crate::sampling::Phase;

pub const DEFAULT_GRID: usize = 500;
pub const DEFAULT_STEP: f64 = 0.005;
pub const DEFAULT_RESIDUAL_THRESHOLD: f64 = 0.1;
/// Positivity threshold for `L_d` before routines that assume it.
pub const DEFAULT_NU_GAP: f64 = 0.05;

/// Exponents at one value of ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovPoint {
    pub eps: f64,
    /// `L_1 ≥ … ≥ L_k`.
    pub exponents: Vec<f64>,
    /// `L^1, …, L^k`.
    pub sums: Vec<f64>,
    /// `L^{k/2}` recomputed from products of `⋀^{k/2}` matrices.
    pub wedge_sum: Option<f64>,
}

impl LyapunovPoint {
    pub fn top(&self) -> f64 {
        self.exponents[0]
    }

    /// `max_j |L_j + L_{k+1−j}|`.
    pub fn duality_defect(&self) -> f64 {
        let k = self.exponents.len();
        (0..k)
            .map(|j| (self.exponents[j] + self.exponents[k - 1 - j]).abs())
            .fold(0.0, f64::max)
    }

    /// `|L^{k/2}` (singular values) `− L^{k/2}` (wedge products)`|`.
    pub fn route_gap(&self) -> Option<f64> {
        let d = (self.sums.len() / 2).max(1);
        self.wedge_sum.map(|w| (w - self.sums[d - 1]).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovProfile {
    pub n: usize,
    pub grid_size: usize,
    pub eps_values: Vec<f64>,
    pub points: Vec<LyapunovPoint>,
}

impl LyapunovProfile {
    /// Rows `(n, eps, j, L_j, L^j)` with `j` starting at 1.
    pub fn rows(&self) -> Vec<(usize, f64, usize, f64, f64)> {
        let mut out = Vec::new();
        for p in &self.points {
            for (j, (l, s)) in p.exponents.iter().zip(&p.sums).enumerate() {
                out.push((self.n, p.eps, j + 1, *l, *s));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelerationEstimate {
    pub j: usize,
    pub kappa_hat: f64,
    pub kappa_rounded: i64,
    pub slope_window: (f64, f64),
    /// Mismatch of the two consecutive secant slopes, in units of κ.
    pub residual: f64,
    pub degraded: bool,
}

fn check_strip<C: Cocycle + ?Sized>(c: &C, eps: f64) -> Result<()> {
    if eps.abs() > c.strip_delta() {
        return Err(QpError::StripViolation {
            eps,
            delta: c.strip_delta(),
        });
    }
    Ok(())
}

/// Per-phase `log ‖⋀^j M_n‖` for `j = 1..=k`, averaged in phase order.
fn grid_average<C, F>(c: &C, eps: f64, grid: usize, per_point: F) -> Result<Vec<f64>>
where
    C: Cocycle + ?Sized,
    F: Fn(Phase) -> Result<Vec<f64>> + Sync,
{
    if grid == 0 {
        return Err(QpError::Precondition("grid must contain at least one phase".into()));
    }
    check_strip(c, eps)?;
    let results: Vec<Result<Vec<f64>>> = (0..grid)
        .into_par_iter()
        .map(|i| per_point(Phase::new(i as f64 / grid as f64, eps)))
        .collect();
    let mut acc: Vec<f64> = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        let v = r.map_err(|e| QpError::GridPoint {
            index,
            source: Box::new(e),
        })?;
        if acc.is_empty() {
            acc = vec![0.0; v.len()];
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    for a in acc.iter_mut() {
        *a /= grid as f64;
    }
    Ok(acc)
}

/// All exponents of the cocycle at `θ + iε`, `θ` on an equispaced grid.
pub fn finite_scale_le<C: Cocycle + ?Sized>(c: &C, eps: f64, n: usize, grid: usize) -> Result<LyapunovPoint> {
    le_with_options(c, eps, n, grid, true)
}

pub fn le_with_options<C: Cocycle + ?Sized>(
    c: &C,
    eps: f64,
    n: usize,
    grid: usize,
    wedge_check: bool,
) -> Result<LyapunovPoint> {
    if n == 0 {
        return Err(QpError::Precondition("scale n must be at least 1".into()));
    }
    let k = c.dim();
    let d = (k / 2).max(1);
    let avg = grid_average(c, eps, grid, |p| {
        let mut logs = graded_product(c, p, n)?.log_wedge_norms();
        if wedge_check {
            logs.push(wedge_product(c, p, n, d)?.log_norm());
        }
        Ok(logs)
    })?;
    let nf = n as f64;
    let sums: Vec<f64> = avg[..k].iter().map(|x| x / nf).collect();
    let mut exponents = Vec::with_capacity(k);
    let mut prev = 0.0;
    for &s in &sums {
        exponents.push(s - prev);
        prev = s;
    }
    Ok(LyapunovPoint {
        eps,
        exponents,
        sums,
        wedge_sum: wedge_check.then(|| avg[k] / nf),
    })
}

pub fn profile<C: Cocycle + ?Sized>(c: &C, eps_values: &[f64], n: usize, grid: usize) -> Result<LyapunovProfile> {
    let points = eps_values
        .iter()
        .map(|&e| finite_scale_le(c, e, n, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(LyapunovProfile {
        n,
        grid_size: grid,
        eps_values: eps_values.to_vec(),
        points,
    })
}

/// One-sided slope of `ε ↦ L^j_ε(n)` over `ε0 + {h, 2h, 3h}`, divided by 2π,
/// for every `j`.
pub fn acceleration<C: Cocycle + ?Sized>(
    c: &C,
    eps0: f64,
    n: usize,
    grid: usize,
    h: f64,
) -> Result<Vec<AccelerationEstimate>> {
    acceleration_with_threshold(c, eps0, n, grid, h, DEFAULT_RESIDUAL_THRESHOLD)
}

pub fn acceleration_with_threshold<C: Cocycle + ?Sized>(
    c: &C,
    eps0: f64,
    n: usize,
    grid: usize,
    h: f64,
    threshold: f64,
) -> Result<Vec<AccelerationEstimate>> {
    if h <= 0.0 {
        return Err(QpError::Precondition(format!("step h must be positive, got {h}")));
    }
    if eps0 + 3.0 * h > c.strip_delta() {
        return Err(QpError::StripViolation {
            eps: eps0 + 3.0 * h,
            delta: c.strip_delta(),
        });
    }
    let eps: Vec<f64> = (1..=3).map(|i| eps0 + i as f64 * h).collect();
    let pts = eps
        .iter()
        .map(|&e| le_with_options(c, e, n, grid, false))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..c.dim())
        .map(|j| {
            let y: Vec<f64> = pts.iter().map(|p| p.sums[j]).collect();
            let kappa_hat = (y[2] - y[0]) / (2.0 * h) / (2.0 * PI);
            let residual = ((y[2] - y[1]) - (y[1] - y[0])).abs() / h / (2.0 * PI);
            AccelerationEstimate {
                j: j + 1,
                kappa_hat,
                kappa_rounded: kappa_hat.round() as i64,
                slope_window: (eps[0], eps[2]),
                residual,
                degraded: residual > threshold,
            }
        })
        .collect())
}

/// `n ↦ L^d_ε(n) − L^d_ε(n_max)`, with `d = k/2`.
pub fn convergence_gap<C: Cocycle + ?Sized>(
    c: &C,
    eps: f64,
    n_list: &[usize],
    grid: usize,
    nu_gap: f64,
) -> Result<Vec<(usize, f64)>> {
    if n_list.is_empty() {
        return Err(QpError::Precondition("empty scale list".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(QpError::Precondition("scale list must be strictly ascending".into()));
    }
    let d = (c.dim() / 2).max(1);
    let pts = n_list
        .iter()
        .map(|&n| le_with_options(c, eps, n, grid, false))
        .collect::<Result<Vec<_>>>()?;
    let last = pts.last().unwrap();
    if last.exponents[d - 1] <= nu_gap {
        return Err(QpError::Precondition(format!(
            "L_{d}(n={}) = {:.4} does not exceed the positivity threshold {nu_gap}",
            n_list.last().unwrap(),
            last.exponents[d - 1]
        )));
    }
    let reference = last.sums[d - 1];
    Ok(n_list
        .iter()
        .zip(&pts)
        .map(|(&n, p)| (n, p.sums[d - 1] - reference))
        .collect())
}

/// `max_θ (1/n) log ‖⋀^j M_n(θ+iε)‖ − L^j_ε(n_ref)` where the sweep runs over
/// `sweep` and the reference average over `reference`.
#[allow(clippy::too_many_arguments)]
pub fn upper_defect<C1, C2>(
    sweep: &C1,
    reference: &C2,
    eps: f64,
    n: usize,
    n_ref: usize,
    grid: usize,
    j: usize,
) -> Result<f64>
where
    C1: Cocycle + ?Sized,
    C2: Cocycle + ?Sized,
{
    if j == 0 || j > sweep.dim() {
        return Err(QpError::Dimension(format!("exterior degree {j} out of range")));
    }
    check_strip(sweep, eps)?;
    let r = le_with_options(reference, eps, n_ref, grid, false)?.sums[j - 1];
    let vals: Vec<Result<f64>> = (0..grid)
        .into_par_iter()
        .map(|i| {
            let p = Phase::new(i as f64 / grid as f64, eps);
            Ok(graded_product(sweep, p, n)?.log_wedge_norms()[j - 1] / n as f64)
        })
        .collect();
    let mut worst = f64::NEG_INFINITY;
    for (index, v) in vals.into_iter().enumerate() {
        let v = v.map_err(|e| QpError::GridPoint {
            index,
            source: Box::new(e),
        })?;
        worst = worst.max(v);
    }
    Ok(worst - r)
}

/// [`upper_defect`] at `j = d` for a single cocycle.
pub fn uniform_upper_defect<C: Cocycle + ?Sized>(
    c: &C,
    eps: f64,
    n: usize,
    n_ref: usize,
    grid: usize,
) -> Result<f64> {
    upper_defect(c, c, eps, n, n_ref, grid, (c.dim() / 2).max(1))
}

/// Largest difference quotient `|L^j_ε(n) − L^j_{ε'}(n)| / |ε − ε'|` over
/// consecutive points of `eps_grid`.
pub fn lipschitz_constant<C: Cocycle + ?Sized>(
    c: &C,
    eps_grid: &[f64],
    n: usize,
    grid: usize,
    j: usize,
) -> Result<f64> {
    if eps_grid.len() < 2 {
        return Err(QpError::InsufficientData("need at least two ε values".into()));
    }
    if j == 0 || j > c.dim() {
        return Err(QpError::Dimension(format!("exterior degree {j} out of range")));
    }
    let vals = eps_grid
        .iter()
        .map(|&e| le_with_options(c, e, n, grid, false).map(|p| p.sums[j - 1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(eps_grid
        .windows(2)
        .zip(vals.windows(2))
        .map(|(e, v)| (v[1] - v[0]).abs() / (e[1] - e[0]).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::{ConstantCocycle, TransferCocycle};
    use crate::family::builtins;
    use crate::frequency::Frequency;
    use crate::linalg::{c, CMat};

    fn diag_cocycle() -> ConstantCocycle {
        let m = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(2.0, 0.0), c(0.5, 0.0)]));
        ConstantCocycle {
            matrix: m,
            omega: Frequency::golden().omega(),
        }
    }

    #[test]
    fn constant_cocycle_exponents() {
        let cc = diag_cocycle();
        let p = finite_scale_le(&cc, 0.0, 50, 4).unwrap();
        assert!((p.exponents[0] - 2f64.ln()).abs() < 1e-12);
        assert!((p.exponents[1] + 2f64.ln()).abs() < 1e-12);
        for a in acceleration(&cc, 0.0, 50, 4, 0.01).unwrap() {
            assert_eq!(a.kappa_rounded, 0);
            assert!(a.kappa_hat.abs() < 1e-9);
        }
        let gaps = convergence_gap(&cc, 0.0, &[10, 20, 40], 4, DEFAULT_NU_GAP).unwrap();
        assert!(gaps.iter().all(|(_, g)| g.abs() < 1e-12));
        assert!(uniform_upper_defect(&cc, 0.0, 10, 40, 4).unwrap().abs() < 1e-9);
    }

    #[test]
    fn schrodinger_duality() {
        let amo = builtins::almost_mathieu(1.5, Frequency::golden(), 0.1);
        let tc = TransferCocycle::new(&amo, c(0.3, 0.0));
        let p = finite_scale_le(&tc, 0.0, 64, 32).unwrap();
        assert!(p.duality_defect() < 1e-9);
        assert!(p.route_gap().unwrap() < 1e-9);
    }

    #[test]
    fn amo_acceleration_is_one() {
        let amo = builtins::almost_mathieu(3.0, Frequency::golden(), 0.1);
        let tc = TransferCocycle::new(&amo, c(0.0, 0.0));
        let acc = acceleration(&tc, 0.01, 400, 100, DEFAULT_STEP).unwrap();
        assert_eq!(acc[0].kappa_rounded, 1, "{:?}", acc[0]);
        assert!(!acc[0].degraded);
    }

    #[test]
    fn errors() {
        let amo = builtins::almost_mathieu(3.0, Frequency::golden(), 0.05);
        let tc = TransferCocycle::new(&amo, c(0.0, 0.0));
        assert!(matches!(finite_scale_le(&tc, 0.2, 10, 4), Err(QpError::StripViolation { .. })));
        assert!(acceleration(&tc, 0.04, 10, 4, 0.005).is_err());
        assert!(finite_scale_le(&tc, 0.0, 10, 0).is_err());
        let single = convergence_gap(&tc, 0.0, &[50], 16, DEFAULT_NU_GAP).unwrap();
        assert_eq!(single, vec![(50, 0.0)]);
    }
}
