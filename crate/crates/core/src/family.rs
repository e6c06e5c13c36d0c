//! Operator families `(H Φ)_n = B_{n+1} Φ_{n+1} + B_n^{(*)} Φ_{n-1} + V_n Φ_n`
//! with `F_n(θ) = F(θ + nω)`.

use std::collections::BTreeMap;

use nalgebra::LU;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QpError, Result};
use crate::frequency::Frequency;
use crate::linalg::{c, frobenius, CMat};
use crate::sampling::{Phase, SamplingFunction};

pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

/// Phase grid used to certify invertibility of `B` at construction.
const VALIDATION_GRID: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilyRepr", into = "FamilyRepr")]
pub struct OperatorFamily {
    d: usize,
    omega: Frequency,
    b: SamplingFunction,
    v: SamplingFunction,
    delta: f64,
    condition_cap: f64,
}

impl OperatorFamily {
    pub fn new(omega: Frequency, b: SamplingFunction, v: SamplingFunction, delta: f64) -> Result<Self> {
        Self::with_condition_cap(omega, b, v, delta, DEFAULT_CONDITION_CAP)
    }

    pub fn with_condition_cap(
        omega: Frequency,
        b: SamplingFunction,
        v: SamplingFunction,
        delta: f64,
        condition_cap: f64,
    ) -> Result<Self> {
        let d = b.dim();
        if v.dim() != d {
            return Err(QpError::Dimension(format!(
                "B is {d}x{d} but V is {0}x{0}",
                v.dim()
            )));
        }
        if !v.is_hermitian() {
            return Err(QpError::InvalidSampling("V must be flagged Hermitian".into()));
        }
        if !(delta > 0.0) || delta > b.strip_delta() || delta > v.strip_delta() {
            return Err(QpError::Precondition(format!(
                "family strip {delta} must be positive and within the sampling strips ({}, {})",
                b.strip_delta(),
                v.strip_delta()
            )));
        }
        let fam = OperatorFamily {
            d,
            omega,
            b,
            v,
            delta,
            condition_cap,
        };
        fam.certify_invertible()?;
        Ok(fam)
    }

    fn certify_invertible(&self) -> Result<()> {
        if self.b.is_constant() {
            return self.b_inverse(Phase::real(0.0), 0).map(|_| ());
        }
        for &frac in &[-1.0, -0.5, 0.0, 0.5, 1.0] {
            for i in 0..VALIDATION_GRID {
                let p = Phase::new(i as f64 / VALIDATION_GRID as f64, frac * self.delta);
                self.b_inverse(p, 0)?;
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn frequency(&self) -> &Frequency {
        &self.omega
    }

    pub fn omega(&self) -> f64 {
        self.omega.omega()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn condition_cap(&self) -> f64 {
        self.condition_cap
    }

    pub fn b(&self) -> &SamplingFunction {
        &self.b
    }

    pub fn v(&self) -> &SamplingFunction {
        &self.v
    }

    /// `θ + jω`.
    pub fn shift(&self, p: Phase, j: i64) -> Phase {
        p.shifted(j as f64 * self.omega())
    }

    fn check_strip(&self, p: Phase) -> Result<()> {
        if p.eps.abs() > self.delta + 1e-12 {
            return Err(QpError::StripViolation {
                eps: p.eps,
                delta: self.delta,
            });
        }
        Ok(())
    }

    pub fn b_at(&self, p: Phase) -> Result<CMat> {
        self.check_strip(p)?;
        self.b.eval(p)
    }

    pub fn b_star_at(&self, p: Phase) -> Result<CMat> {
        self.check_strip(p)?;
        self.b.eval_star(p)
    }

    pub fn v_at(&self, p: Phase) -> Result<CMat> {
        self.check_strip(p)?;
        self.v.eval(p)
    }

    /// `B(p)^{-1}` and a condition estimate `‖B‖_F ‖B^{-1}‖_F`.
    /// `step` is only used to label the error.
    pub fn b_inverse(&self, p: Phase, step: usize) -> Result<(CMat, f64)> {
        let b = self.b_at(p)?;
        if self.d == 1 {
            // scalar case: compare |B| against the size of its Fourier data
            let x = b[(0, 0)];
            let scale: f64 = self
                .b
                .coefficients()
                .iter()
                .map(|(&m, cm)| cm[(0, 0)].norm() * (std::f64::consts::TAU * (m as f64) * p.eps).abs().exp())
                .sum();
            let cond = scale / x.norm();
            if !(cond <= self.condition_cap) {
                return Err(QpError::IllConditionedBlock {
                    step,
                    condition: cond,
                });
            }
            return Ok((CMat::from_element(1, 1, x.inv()), cond));
        }
        let inv = LU::new(b.clone()).try_inverse().ok_or(QpError::IllConditionedBlock {
            step,
            condition: f64::INFINITY,
        })?;
        let cond = frobenius(&b) * frobenius(&inv);
        if !(cond <= self.condition_cap) {
            return Err(QpError::IllConditionedBlock {
                step,
                condition: cond,
            });
        }
        Ok((inv, cond))
    }

    /// Largest Fourier degree among `B` and `V`.
    pub fn degree(&self) -> i64 {
        self.b.degree().max(self.v.degree())
    }

    /// True when neither `B` nor `V` depends on the phase.
    pub fn is_phase_independent(&self) -> bool {
        self.b.is_constant() && self.v.is_constant()
    }

    /// `log|det B(θ + iε)|` averaged over an equispaced grid of `grid` phases.
    pub fn mean_log_det_b(&self, eps: f64, grid: usize) -> Result<f64> {
        let grid = grid.max(1);
        let mut acc = 0.0;
        for i in 0..grid {
            let b = self.b_at(Phase::new(i as f64 / grid as f64, eps))?;
            acc += crate::linalg::dense_log_det(&b).log_mag;
        }
        Ok(acc / grid as f64)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyRepr {
    omega: f64,
    delta: f64,
    b: SamplingFunction,
    v: SamplingFunction,
    #[serde(default = "default_cap")]
    condition_cap: f64,
}

fn default_cap() -> f64 {
    DEFAULT_CONDITION_CAP
}

impl TryFrom<FamilyRepr> for OperatorFamily {
    type Error = QpError;
    fn try_from(r: FamilyRepr) -> Result<Self> {
        OperatorFamily::with_condition_cap(Frequency::new(r.omega)?, r.b, r.v, r.delta, r.condition_cap)
    }
}

impl From<OperatorFamily> for FamilyRepr {
    fn from(f: OperatorFamily) -> Self {
        FamilyRepr {
            omega: f.omega.omega(),
            delta: f.delta,
            b: f.b,
            v: f.v,
            condition_cap: f.condition_cap,
        }
    }
}

/// Ready-made families.
pub mod builtins {
    use super::*;

    /// `v ≡ 0`, `B ≡ 1`.
    pub fn free(omega: Frequency, delta: f64) -> OperatorFamily {
        OperatorFamily::new(
            omega,
            SamplingFunction::identity(1, delta),
            SamplingFunction::zero(1, delta),
            delta,
        )
        .expect("free family is valid")
    }

    /// Almost Mathieu: `v(θ) = 2λ cos(2πθ)`, `B ≡ 1`.
    pub fn almost_mathieu(lambda: f64, omega: Frequency, delta: f64) -> OperatorFamily {
        cosine(lambda, 1, omega, delta)
    }

    /// `v(θ) = 2λ cos(2π k θ)`, `B ≡ 1`.
    pub fn cosine(lambda: f64, k: i64, omega: Frequency, delta: f64) -> OperatorFamily {
        OperatorFamily::new(
            omega,
            SamplingFunction::identity(1, delta),
            SamplingFunction::cosine(lambda, k, delta),
            delta,
        )
        .expect("cosine family is valid")
    }

    /// Phase-independent scalar family `v ≡ v0`, `B ≡ b0`.
    pub fn constant(v0: f64, b0: Complex64, omega: Frequency, delta: f64) -> OperatorFamily {
        OperatorFamily::new(
            omega,
            SamplingFunction::constant(CMat::from_element(1, 1, b0), false, delta).unwrap(),
            SamplingFunction::constant(CMat::from_element(1, 1, c(v0, 0.0)), true, delta).unwrap(),
            delta,
        )
        .expect("constant family is valid")
    }

    /// Two-channel demo:
    ///
    /// ```text
    /// V(θ) = [ 2λ cos 2πθ        μ             ]
    ///        [ μ                 2λ cos 2π(θ+¼) ]
    /// B(θ) = [ 1   β e^{2πiθ} ]
    ///        [ 0   1          ]
    /// ```
    ///
    /// `det B ≡ 1` on the whole complex strip.
    pub fn block_demo(lambda: f64, mu: f64, beta: f64, omega: Frequency, delta: f64) -> OperatorFamily {
        let mut v = BTreeMap::new();
        // 2λ cos 2π(θ + ¼) = λ i e^{2πiθ} - λ i e^{-2πiθ}
        v.insert(
            1,
            CMat::from_row_slice(2, 2, &[c(lambda, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, lambda)]),
        );
        v.insert(
            -1,
            CMat::from_row_slice(2, 2, &[c(lambda, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -lambda)]),
        );
        v.insert(
            0,
            CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(mu, 0.0), c(mu, 0.0), c(0.0, 0.0)]),
        );
        let mut b = BTreeMap::new();
        b.insert(0, CMat::identity(2, 2));
        b.insert(
            1,
            CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(beta, 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
        );
        OperatorFamily::new(
            omega,
            SamplingFunction::new(2, b, false, delta).unwrap(),
            SamplingFunction::new(2, v, true, delta).unwrap(),
            delta,
        )
        .expect("block demo is valid")
    }

    /// A random family of block size `d`: `V` Hermitian with modes `-1..=1`
    /// and `B = I + small` with modes `-1..=1`.
    pub fn random<R: rand::Rng>(rng: &mut R, d: usize, omega: Frequency, delta: f64) -> OperatorFamily {
        let mut draw = |scale: f64| {
            CMat::from_fn(d, d, |_, _| {
                c(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
            })
        };
        let v1 = draw(1.0);
        let v0 = draw(1.5);
        let v0 = (&v0 + v0.adjoint()) * c(0.5, 0.0);
        let mut v = BTreeMap::new();
        v.insert(1, v1.clone());
        v.insert(-1, v1.adjoint());
        v.insert(0, v0);
        let mut b = BTreeMap::new();
        b.insert(0, CMat::identity(d, d) + draw(0.15));
        b.insert(1, draw(0.15));
        b.insert(-1, draw(0.15));
        OperatorFamily::new(
            omega,
            SamplingFunction::new(d, b, false, delta).unwrap(),
            SamplingFunction::new(d, v, true, delta).unwrap(),
            delta,
        )
        .expect("random family has invertible B")
    }
}
