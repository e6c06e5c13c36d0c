//! Rotation numbers and their continued-fraction data.

use serde::{Deserialize, Serialize};

use crate::error::{QpError, Result};

pub const DEFAULT_CF_DEPTH: usize = 30;

/// Remainders below this are taken as an exact termination of the expansion.
const RATIONAL_REMAINDER: f64 = 1e-10;

/// Distance to the nearest integer.
pub fn torus_norm(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// An irrational rotation number `omega` in `(0, 1)` with its continued
/// fraction `omega = [0; a_1, a_2, ...]` truncated at a fixed depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    omega: f64,
    partial_quotients: Vec<u64>,
}

impl Frequency {
    pub fn new(omega: f64) -> Result<Self> {
        Self::with_depth(omega, DEFAULT_CF_DEPTH)
    }

    /// Expands `omega` to `depth` partial quotients. An expansion that
    /// terminates earlier is reported as rational.
    pub fn with_depth(omega: f64, depth: usize) -> Result<Self> {
        if !(omega > 0.0 && omega < 1.0) {
            return Err(QpError::Precondition(format!(
                "frequency {omega} must lie in (0, 1)"
            )));
        }
        let mut quotients = Vec::with_capacity(depth);
        let mut x = omega;
        let (mut q_prev, mut q) = (0u64, 1u64);
        for _ in 0..depth {
            let inv = 1.0 / x;
            let a = inv.floor();
            if a > 1e15 {
                break;
            }
            let a = a as u64;
            quotients.push(a);
            let next = a.saturating_mul(q).saturating_add(q_prev);
            q_prev = q;
            q = next;
            x = inv - a as f64;
            if x < RATIONAL_REMAINDER {
                return Err(QpError::NotDiophantine {
                    omega,
                    denominator: q,
                });
            }
            // past this point the f64 expansion carries no information
            if q as f64 * q as f64 * f64::EPSILON > 1.0 {
                break;
            }
        }
        Ok(Frequency {
            omega,
            partial_quotients: quotients,
        })
    }

    /// `(sqrt(5) - 1) / 2`.
    pub fn golden() -> Self {
        let omega = (5f64.sqrt() - 1.0) / 2.0;
        Self::new(omega).expect("golden mean is irrational")
    }

    /// `[0; prefix..., 1, 1, 1, ...]`: the given partial quotients followed
    /// by a golden tail, so the number is irrational and the prefix exact.
    pub fn with_golden_tail(prefix: &[u64]) -> Result<Self> {
        if prefix.contains(&0) {
            return Err(QpError::Precondition(
                "partial quotients must be positive".into(),
            ));
        }
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut x = phi;
        for &a in prefix.iter().rev() {
            x = a as f64 + 1.0 / x;
        }
        let omega = 1.0 / x;
        let mut partial_quotients = prefix.to_vec();
        partial_quotients.extend(std::iter::repeat_n(1, DEFAULT_CF_DEPTH.saturating_sub(prefix.len())));
        Ok(Frequency {
            omega,
            partial_quotients,
        })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn partial_quotients(&self) -> &[u64] {
        &self.partial_quotients
    }

    /// Convergents `p_k / q_k`, `k >= 1`, with strictly increasing denominators.
    pub fn convergents(&self) -> Vec<(u64, u64)> {
        let mut out = Vec::with_capacity(self.partial_quotients.len());
        let (mut p_prev, mut p) = (1u64, 0u64);
        let (mut q_prev, mut q) = (0u64, 1u64);
        for &a in &self.partial_quotients {
            let p_next = a.saturating_mul(p).saturating_add(p_prev);
            let q_next = a.saturating_mul(q).saturating_add(q_prev);
            p_prev = p;
            p = p_next;
            q_prev = q;
            q = q_next;
            if out.last().is_some_and(|&(_, last)| q <= last) {
                break;
            }
            out.push((p, q));
        }
        out
    }

    /// `‖k ω‖_T`.
    pub fn distance(&self, k: i64) -> f64 {
        torus_norm(k as f64 * self.omega)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_expansion_is_all_ones() {
        let g = Frequency::golden();
        assert!(g.partial_quotients().len() >= 20);
        assert!(g.partial_quotients().iter().take(20).all(|&a| a == 1));
        let q: Vec<u64> = g.convergents().iter().map(|c| c.1).take(8).collect();
        assert_eq!(q, vec![1, 2, 3, 5, 8, 13, 21, 34]);
    }

    #[test]
    fn rational_is_rejected() {
        assert!(matches!(
            Frequency::new(0.5),
            Err(QpError::NotDiophantine { denominator: 2, .. })
        ));
        assert!(matches!(
            Frequency::new(3.0 / 7.0),
            Err(QpError::NotDiophantine { denominator: 7, .. })
        ));
        assert!(Frequency::new(1.5).is_err());
    }

    #[test]
    fn golden_tail_keeps_prefix() {
        let f = Frequency::with_golden_tail(&[1, 1_000_000]).unwrap();
        assert_eq!(&f.partial_quotients()[..3], &[1, 1_000_000, 1]);
        let re = Frequency::new(f.omega()).unwrap();
        assert_eq!(&re.partial_quotients()[..2], &[1, 1_000_000]);
        assert!(f.distance(1) < 1.1e-6);
    }

    #[test]
    fn convergent_denominators_increase() {
        let f = Frequency::new(std::f64::consts::PI - 3.0).unwrap();
        let c = f.convergents();
        assert_eq!(c[0], (1, 7));
        assert_eq!(c[1].1, 106);
        assert!(c.windows(2).all(|w| w[0].1 < w[1].1));
    }
}
