//! Determinants carried as a log-magnitude and a unit phase.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Div, Mul};

/// `exp(log_mag) * phase_unit`. A vanishing determinant is the sentinel
/// `log_mag = -inf` (phase 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogDet {
    pub log_mag: f64,
    pub phase_unit: Complex64,
}

impl LogDet {
    pub const ONE: LogDet = LogDet {
        log_mag: 0.0,
        phase_unit: Complex64 { re: 1.0, im: 0.0 },
    };

    pub const ZERO: LogDet = LogDet {
        log_mag: f64::NEG_INFINITY,
        phase_unit: Complex64 { re: 1.0, im: 0.0 },
    };

    pub fn from_value(z: Complex64) -> Self {
        let r = z.norm();
        if r == 0.0 {
            Self::ZERO
        } else {
            LogDet {
                log_mag: r.ln(),
                phase_unit: z / r,
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.log_mag == f64::NEG_INFINITY
    }

    /// The represented value. Overflows to infinity for `log_mag > ~709`.
    pub fn value(&self) -> Complex64 {
        if self.is_zero() {
            Complex64::new(0.0, 0.0)
        } else {
            self.phase_unit * self.log_mag.exp()
        }
    }

    /// Principal complex logarithm `log_mag + i arg`.
    pub fn ln(&self) -> Complex64 {
        Complex64::new(self.log_mag, self.phase_unit.arg())
    }

    /// Value rescaled by `exp(-shift)`, useful to compare determinants of
    /// very different magnitudes without overflow.
    pub fn scaled_value(&self, shift: f64) -> Complex64 {
        if self.is_zero() {
            Complex64::new(0.0, 0.0)
        } else {
            self.phase_unit * (self.log_mag - shift).exp()
        }
    }

    pub fn renormalized(self) -> Self {
        let r = self.phase_unit.norm();
        LogDet {
            log_mag: self.log_mag,
            phase_unit: self.phase_unit / r,
        }
    }
}

impl Mul for LogDet {
    type Output = LogDet;
    fn mul(self, rhs: LogDet) -> LogDet {
        if self.is_zero() || rhs.is_zero() {
            return LogDet::ZERO;
        }
        LogDet {
            log_mag: self.log_mag + rhs.log_mag,
            phase_unit: self.phase_unit * rhs.phase_unit,
        }
        .renormalized()
    }
}

impl Div for LogDet {
    type Output = LogDet;
    fn div(self, rhs: LogDet) -> LogDet {
        if self.is_zero() {
            return LogDet::ZERO;
        }
        LogDet {
            log_mag: self.log_mag - rhs.log_mag,
            phase_unit: self.phase_unit / rhs.phase_unit,
        }
        .renormalized()
    }
}

/// Sum of terms given in log form, evaluated without overflow.
pub fn log_sum(terms: &[LogDet]) -> LogDet {
    let max = terms
        .iter()
        .filter(|t| !t.is_zero())
        .map(|t| t.log_mag)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return LogDet::ZERO;
    }
    let s: Complex64 = terms.iter().map(|t| t.scaled_value(max)).sum();
    let mut out = LogDet::from_value(s);
    if !out.is_zero() {
        out.log_mag += max;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_quotient() {
        let a = LogDet::from_value(Complex64::new(0.0, 2.0));
        let b = LogDet::from_value(Complex64::new(-4.0, 0.0));
        let p = (a * b).value();
        assert!((p - Complex64::new(0.0, -8.0)).norm() < 1e-12);
        let q = (a / b).value();
        assert!((q - Complex64::new(0.0, -0.5)).norm() < 1e-12);
        assert!((a * LogDet::ZERO).is_zero());
    }

    #[test]
    fn sum_of_huge_terms() {
        let big = LogDet {
            log_mag: 2000.0,
            phase_unit: Complex64::new(1.0, 0.0),
        };
        let s = log_sum(&[big, big]);
        assert!((s.log_mag - (2000.0 + 2f64.ln())).abs() < 1e-12);
        let cancel = log_sum(&[
            big,
            LogDet {
                log_mag: 2000.0,
                phase_unit: Complex64::new(-1.0, 0.0),
            },
        ]);
        assert!(cancel.is_zero());
    }
}
