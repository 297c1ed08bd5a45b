use super::ComplexGain;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;

/// Default per-mode photon-number cutoff.
pub const DEFAULT_CUTOFF: usize = 6;

/// Population at the cutoff above which oracle results are rejected.
pub const LEAKAGE_LIMIT: f64 = 1e-6;

/// Dense two-mode Fock state truncated at `n <= cutoff` per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactKet {
    cutoff: usize,
    amps: DVector<Complex64>,
}

impl ExactKet {
    pub fn vacuum(cutoff: usize) -> Self {
        let dim = (cutoff + 1) * (cutoff + 1);
        let mut amps = DVector::zeros(dim);
        amps[0] = Complex64::new(1.0, 0.0);
        Self { cutoff, amps }
    }

    /// Build from a dense amplitude vector indexed `n_a * (cutoff + 1) + n_b`.
    pub fn from_amplitudes(cutoff: usize, amps: DVector<Complex64>) -> Result<Self> {
        let dim = (cutoff + 1) * (cutoff + 1);
        if amps.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: amps.len(),
            });
        }
        Ok(Self { cutoff, amps })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    fn index(&self, n_a: usize, n_b: usize) -> usize {
        n_a * (self.cutoff + 1) + n_b
    }

    pub fn amplitude(&self, n_a: usize, n_b: usize) -> Complex64 {
        if n_a > self.cutoff || n_b > self.cutoff {
            return Complex64::new(0.0, 0.0);
        }
        self.amps[self.index(n_a, n_b)]
    }

    pub fn population(&self, n_a: usize, n_b: usize) -> f64 {
        self.amplitude(n_a, n_b).norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// Mean photon number in mode `a`.
    pub fn mean_photons_a(&self) -> f64 {
        self.weighted(|n_a, _| n_a as f64)
    }

    /// Mean photon number in mode `b`.
    pub fn mean_photons_b(&self) -> f64 {
        self.weighted(|_, n_b| n_b as f64)
    }

    fn weighted(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        let mut acc = 0.0;
        for n_a in 0..=self.cutoff {
            for n_b in 0..=self.cutoff {
                acc += f(n_a, n_b) * self.population(n_a, n_b);
            }
        }
        acc
    }

    /// Total population with either mode at the cutoff.
    pub fn leakage(&self) -> f64 {
        let c = self.cutoff;
        (0..=c)
            .map(|n| self.population(c, n) + self.population(n, c))
            .sum::<f64>()
            - self.population(c, c)
    }

    pub fn check_leakage(&self) -> Result<()> {
        let leakage = self.leakage();
        if leakage > LEAKAGE_LIMIT {
            return Err(Error::CutoffLeakage {
                leakage,
                limit: LEAKAGE_LIMIT,
            });
        }
        Ok(())
    }

    /// Multiply `|n_a, n_b>` by `e^{i(n_a phi_a + n_b phi_b)}`.
    pub fn phase_shift(&self, phi_a: f64, phi_b: f64) -> Self {
        let mut out = self.clone();
        for n_a in 0..=self.cutoff {
            for n_b in 0..=self.cutoff {
                let idx = self.index(n_a, n_b);
                out.amps[idx] *= Complex64::from_polar(1.0, n_a as f64 * phi_a + n_b as f64 * phi_b);
            }
        }
        out
    }

    /// Overlap `<self|other>`.
    pub fn inner(&self, other: &ExactKet) -> Result<Complex64> {
        if self.cutoff != other.cutoff {
            return Err(Error::DimensionMismatch {
                expected: self.amps.len(),
                got: other.amps.len(),
            });
        }
        Ok(self.amps.dotc(&other.amps))
    }
}

/// Precomputed two-mode squeezing unitary `exp[g(e^{i theta} a†b† - e^{-i theta} ab)]`
/// on a fixed cutoff.
#[derive(Debug, Clone)]
pub struct TwoModeSqueezer {
    cutoff: usize,
    unitary: DMatrix<Complex64>,
}

impl TwoModeSqueezer {
    pub fn new(cutoff: usize, g: f64, theta: f64) -> Self {
        let d = cutoff + 1;
        let dim = d * d;
        let mut gen = DMatrix::<Complex64>::zeros(dim, dim);
        let up = Complex64::from_polar(g, theta);
        for n_a in 0..cutoff {
            for n_b in 0..cutoff {
                // a†b† |n_a, n_b> = sqrt((n_a+1)(n_b+1)) |n_a+1, n_b+1>
                let from = n_a * d + n_b;
                let to = (n_a + 1) * d + n_b + 1;
                let amp = (((n_a + 1) * (n_b + 1)) as f64).sqrt();
                gen[(to, from)] += up * amp;
                gen[(from, to)] -= up.conj() * amp;
            }
        }
        Self {
            cutoff,
            unitary: gen.exp(),
        }
    }

    /// Squeezer matching a perturbative OPA pass with the given gain and
    /// pump phase: to first order it adds `i |g| e^{i psi}` to `|1,1>`.
    pub fn from_gain(cutoff: usize, gain: ComplexGain, pump_phase: f64) -> Self {
        Self::new(
            cutoff,
            gain.magnitude(),
            gain.phase() + pump_phase + FRAC_PI_2,
        )
    }

    pub fn apply(&self, state: &ExactKet) -> Result<ExactKet> {
        if state.cutoff != self.cutoff {
            return Err(Error::DimensionMismatch {
                expected: (self.cutoff + 1) * (self.cutoff + 1),
                got: state.amps.len(),
            });
        }
        state.check_leakage()?;
        let out = ExactKet {
            cutoff: self.cutoff,
            amps: &self.unitary * &state.amps,
        };
        out.check_leakage()?;
        Ok(out)
    }
}

/// Apply one exact two-mode squeezing step to `state`.
pub fn exact_propagator_oracle(state: &ExactKet, g_effective: f64, phase: f64) -> Result<ExactKet> {
    TwoModeSqueezer::new(state.cutoff, g_effective, phase).apply(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_gain_is_identity() {
        let vac = ExactKet::vacuum(DEFAULT_CUTOFF);
        let shifted = exact_propagator_oracle(&vac, 0.0, 0.3).unwrap();
        assert!((shifted.amplitude(0, 0) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn matches_two_mode_squeezed_vacuum() {
        // c_n = (e^{i theta} tanh g)^n / cosh g
        let (g, theta) = (0.1, 0.4);
        let out = exact_propagator_oracle(&ExactKet::vacuum(DEFAULT_CUTOFF), g, theta).unwrap();
        for n in 0..4 {
            let expect = Complex64::from_polar(g.tanh().powi(n as i32), theta * n as f64) / g.cosh();
            assert!((out.amplitude(n, n) - expect).norm() < 1e-10, "n = {n}");
        }
        assert!((out.mean_photons_a() - g.sinh().powi(2)).abs() < 1e-10);
        assert!((out.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn inverse_squeeze_recovers_vacuum() {
        let once = exact_propagator_oracle(&ExactKet::vacuum(DEFAULT_CUTOFF), 0.1, 0.0).unwrap();
        let back = exact_propagator_oracle(&once, 0.1, PI).unwrap();
        assert!((back.population(0, 0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn leakage_is_rejected() {
        let err = exact_propagator_oracle(&ExactKet::vacuum(DEFAULT_CUTOFF), 1.5, 0.0).unwrap_err();
        assert!(matches!(err, Error::CutoffLeakage { .. }));
    }

    #[test]
    fn from_gain_matches_first_order_phase() {
        let gain = ComplexGain::new(0.01, 0.3).unwrap();
        let out = TwoModeSqueezer::from_gain(DEFAULT_CUTOFF, gain, 0.5)
            .apply(&ExactKet::vacuum(DEFAULT_CUTOFF))
            .unwrap();
        let first_order = Complex64::new(0.0, 0.01) * Complex64::from_polar(1.0, 0.8);
        assert!((out.amplitude(1, 1) - first_order).norm() < 1e-5);
    }

    #[test]
    fn dimension_checks() {
        assert!(ExactKet::from_amplitudes(2, DVector::zeros(5)).is_err());
        let s = TwoModeSqueezer::new(3, 0.1, 0.0);
        assert!(s.apply(&ExactKet::vacuum(4)).is_err());
    }
}
