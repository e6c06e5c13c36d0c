//! Matrix-valued trigonometric polynomials on the complexified torus.
//!
//! A [`SamplingFunction`] is a finite Fourier series
//! `F(x) = Σ_m c_m exp(2πi m x)` with `c_m` square complex matrices, evaluated
//! at `x = θ + iε`. General analytic sampling functions must be truncated to a
//! trigonometric polynomial before they can be used here.
//!
//! The companion [`SamplingFunction::eval_star`] evaluates the analytic
//! continuation of `F(θ)^*` off the real torus: coefficient `c_m^*` sits at
//! mode `-m`, so on the real torus it agrees with the conjugate transpose and
//! it stays analytic in `θ + iε`.
//!
//! # Serialized form
//!
//! ```json
//! { "dim": 1, "hermitian": true, "strip_delta": 0.1,
//!   "modes": [ { "mode": -1, "matrix": [[[3.0, 0.0]]] },
//!              { "mode":  1, "matrix": [[[3.0, 0.0]]] } ] }
//! ```
//!
//! `matrix` is row-major, each entry an `[re, im]` pair.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QpError, Result};
use crate::linalg::{c, CMat};

/// Tolerance on `c_{-m} = c_m^*` for functions flagged Hermitian.
const HERMITIAN_COEFF_TOL: f64 = 1e-12;

/// Slack allowed when checking `|eps| <= delta`.
const STRIP_SLACK: f64 = 1e-12;

/// A point `θ + iε` of the complexified torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub theta: f64,
    pub eps: f64,
}

impl Phase {
    pub fn new(theta: f64, eps: f64) -> Self {
        Phase { theta, eps }
    }

    pub fn real(theta: f64) -> Self {
        Phase { theta, eps: 0.0 }
    }

    /// Shift along the real direction.
    pub fn shifted(self, by: f64) -> Self {
        Phase {
            theta: self.theta + by,
            eps: self.eps,
        }
    }

    /// The phase with `z = exp(2πi(θ + iε))`.
    pub fn from_z(z: Complex64) -> Self {
        Phase {
            theta: z.arg() / TAU,
            eps: -z.norm().ln() / TAU,
        }
    }

    pub fn to_z(self) -> Complex64 {
        Complex64::from_polar((-TAU * self.eps).exp(), TAU * self.theta)
    }

    /// `exp(2πi m (θ + iε))`.
    fn mode_factor(self, m: i64) -> Complex64 {
        let mf = m as f64;
        Complex64::from_polar((-TAU * mf * self.eps).exp(), TAU * mf * self.theta.rem_euclid(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SamplingRepr", into = "SamplingRepr")]
pub struct SamplingFunction {
    dim: usize,
    coefficients: BTreeMap<i64, CMat>,
    hermitian: bool,
    strip_delta: f64,
}

impl SamplingFunction {
    pub fn new(
        dim: usize,
        coefficients: BTreeMap<i64, CMat>,
        hermitian: bool,
        strip_delta: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(QpError::InvalidSampling("dimension must be positive".into()));
        }
        if !(strip_delta > 0.0 && strip_delta.is_finite()) {
            return Err(QpError::InvalidSampling(format!(
                "strip half-width must be positive, got {strip_delta}"
            )));
        }
        for (m, cm) in &coefficients {
            if cm.shape() != (dim, dim) {
                return Err(QpError::InvalidSampling(format!(
                    "mode {m} has shape {:?}, expected {dim}x{dim}",
                    cm.shape()
                )));
            }
            if cm.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(QpError::InvalidSampling(format!("mode {m} is not finite")));
            }
        }
        let coefficients: BTreeMap<i64, CMat> = coefficients
            .into_iter()
            .filter(|(_, cm)| cm.iter().any(|z| *z != c(0.0, 0.0)))
            .collect();
        if hermitian {
            for (m, cm) in &coefficients {
                let partner = coefficients
                    .get(&-m)
                    .cloned()
                    .unwrap_or_else(|| CMat::zeros(dim, dim));
                let defect = (cm - partner.adjoint()).camax();
                if defect > HERMITIAN_COEFF_TOL * (1.0 + cm.camax()) {
                    return Err(QpError::InvalidSampling(format!(
                        "flagged Hermitian but c_{} != c_{}^* (defect {defect:.2e})",
                        -m, m
                    )));
                }
            }
        }
        Ok(SamplingFunction {
            dim,
            coefficients,
            hermitian,
            strip_delta,
        })
    }

    pub fn constant(m: CMat, hermitian: bool, strip_delta: f64) -> Result<Self> {
        let dim = m.nrows();
        Self::new(dim, BTreeMap::from([(0, m)]), hermitian, strip_delta)
    }

    pub fn identity(dim: usize, strip_delta: f64) -> Self {
        Self::constant(CMat::identity(dim, dim), true, strip_delta).expect("identity is valid")
    }

    pub fn zero(dim: usize, strip_delta: f64) -> Self {
        Self::new(dim, BTreeMap::new(), true, strip_delta).expect("zero is valid")
    }

    /// Scalar `2 λ cos(2π k θ) = λ e^{2πikθ} + λ e^{-2πikθ}`.
    pub fn cosine(lambda: f64, k: i64, strip_delta: f64) -> Self {
        let entry = CMat::from_element(1, 1, c(lambda, 0.0));
        let coeffs = if k == 0 {
            BTreeMap::from([(0, entry * c(2.0, 0.0))])
        } else {
            BTreeMap::from([(k, entry.clone()), (-k, entry)])
        };
        Self::new(1, coeffs, true, strip_delta).expect("cosine is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn strip_delta(&self) -> f64 {
        self.strip_delta
    }

    pub fn coefficients(&self) -> &BTreeMap<i64, CMat> {
        &self.coefficients
    }

    /// Largest `|m|` with a nonzero coefficient.
    pub fn degree(&self) -> i64 {
        self.coefficients.keys().map(|m| m.abs()).max().unwrap_or(0)
    }

    /// True when no mode other than 0 is present.
    pub fn is_constant(&self) -> bool {
        self.coefficients.keys().all(|&m| m == 0)
    }

    fn check_strip(&self, p: Phase) -> Result<()> {
        if p.eps.abs() > self.strip_delta + STRIP_SLACK || !p.eps.is_finite() {
            return Err(QpError::StripViolation {
                eps: p.eps,
                delta: self.strip_delta,
            });
        }
        Ok(())
    }

    /// `Σ_m c_m exp(2πi m (θ + iε))`.
    pub fn eval(&self, p: Phase) -> Result<CMat> {
        self.check_strip(p)?;
        let mut out = CMat::zeros(self.dim, self.dim);
        for (&m, cm) in &self.coefficients {
            out += cm * p.mode_factor(m);
        }
        Ok(out)
    }

    /// Analytic continuation of `F(θ)^*`: `Σ_m c_m^* exp(-2πi m (θ + iε))`.
    pub fn eval_star(&self, p: Phase) -> Result<CMat> {
        self.check_strip(p)?;
        let mut out = CMat::zeros(self.dim, self.dim);
        for (&m, cm) in &self.coefficients {
            out += cm.adjoint() * p.mode_factor(-m);
        }
        Ok(out)
    }

    /// Coefficients of the analytic continuation of `F^*`, keyed by mode.
    pub fn star_coefficients(&self) -> BTreeMap<i64, CMat> {
        self.coefficients
            .iter()
            .map(|(&m, cm)| (-m, cm.adjoint()))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeRepr {
    mode: i64,
    matrix: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplingRepr {
    dim: usize,
    #[serde(default)]
    hermitian: bool,
    strip_delta: f64,
    modes: Vec<ModeRepr>,
}

impl TryFrom<SamplingRepr> for SamplingFunction {
    type Error = QpError;

    fn try_from(r: SamplingRepr) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for mode in r.modes {
            if mode.matrix.len() != r.dim || mode.matrix.iter().any(|row| row.len() != r.dim) {
                return Err(QpError::InvalidSampling(format!(
                    "mode {} is not a {}x{} matrix",
                    mode.mode, r.dim, r.dim
                )));
            }
            let m = CMat::from_fn(r.dim, r.dim, |i, j| {
                let [re, im] = mode.matrix[i][j];
                c(re, im)
            });
            if coeffs.insert(mode.mode, m).is_some() {
                return Err(QpError::InvalidSampling(format!(
                    "mode {} listed twice",
                    mode.mode
                )));
            }
        }
        SamplingFunction::new(r.dim, coeffs, r.hermitian, r.strip_delta)
    }
}

impl From<SamplingFunction> for SamplingRepr {
    fn from(f: SamplingFunction) -> Self {
        let modes = f
            .coefficients
            .iter()
            .map(|(&mode, m)| ModeRepr {
                mode,
                matrix: (0..f.dim)
                    .map(|i| (0..f.dim).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                    .collect(),
            })
            .collect();
        SamplingRepr {
            dim: f.dim,
            hermitian: f.hermitian,
            strip_delta: f.strip_delta,
            modes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_residual;

    #[test]
    fn constant_identity() {
        let f = SamplingFunction::identity(3, 0.2);
        let v = f.eval(Phase::new(0.37, 0.1)).unwrap();
        assert_eq!(v, CMat::identity(3, 3));
    }

    #[test]
    fn cosine_values() {
        let f = SamplingFunction::cosine(1.0, 1, 0.5);
        assert!(f.eval(Phase::real(0.25)).unwrap()[(0, 0)].norm() < 1e-15);
        for &eps in &[-0.3, 0.0, 0.2] {
            let v = f.eval(Phase::new(0.0, eps)).unwrap()[(0, 0)];
            assert!((v - c(2.0 * (TAU * eps).cosh(), 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn strip_is_enforced() {
        let f = SamplingFunction::cosine(1.0, 1, 0.1);
        assert!(matches!(
            f.eval(Phase::new(0.0, 0.2)),
            Err(QpError::StripViolation { .. })
        ));
        assert!(f.eval_star(Phase::new(0.0, -0.11)).is_err());
    }

    #[test]
    fn star_is_adjoint_on_real_torus_and_analytic_off_it() {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(1, CMat::from_row_slice(2, 2, &[c(0.1, 0.2), c(0.3, 0.0), c(0.0, -0.4), c(0.2, 0.1)]));
        coeffs.insert(0, CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.5), c(0.2, 0.0), c(1.0, 0.3)]));
        let f = SamplingFunction::new(2, coeffs, false, 0.3).unwrap();
        let p = Phase::real(0.123);
        let diff = f.eval_star(p).unwrap() - f.eval(p).unwrap().adjoint();
        assert!(diff.camax() < 1e-14);
        // off the torus it is not the adjoint, but it is a polynomial in z
        let q = Phase::new(0.123, 0.2);
        let z = q.to_z();
        let direct = f.eval_star(q).unwrap();
        let from_z = f.star_coefficients().iter().fold(CMat::zeros(2, 2), |acc, (&m, cm)| {
            acc + cm * z.powi(m as i32)
        });
        assert!((direct - from_z).camax() < 1e-12);
    }

    #[test]
    fn hermitian_flag_requires_conjugate_pairs() {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(1, CMat::from_element(1, 1, c(1.0, 0.0)));
        assert!(SamplingFunction::new(1, coeffs.clone(), true, 0.1).is_err());
        coeffs.insert(-1, CMat::from_element(1, 1, c(1.0, 0.0)));
        let f = SamplingFunction::new(1, coeffs, true, 0.1).unwrap();
        assert!(hermitian_residual(&f.eval(Phase::real(0.3)).unwrap()) < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let f = SamplingFunction::cosine(3.0, 1, 0.1);
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"modes\""));
        let g: SamplingFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        let bad = r#"{"dim":1,"strip_delta":0.1,"modes":[],"extra":1}"#;
        assert!(serde_json::from_str::<SamplingFunction>(bad).is_err());
    }

    #[test]
    fn phase_z_round_trip() {
        let p = Phase::new(0.3, -0.05);
        let q = Phase::from_z(p.to_z());
        assert!((q.theta - p.theta).abs() < 1e-14 && (q.eps - p.eps).abs() < 1e-14);
    }
}
