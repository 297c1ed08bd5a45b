//! Biphoton state algebra for one signal-idler channel.
//!
//! [`PerturbativeKet`] carries the first-order-in-gain state used by every
//! QKD computation; [`ExactKet`] is a dense truncated Fock state used only to
//! validate the truncation.

mod exact;
mod perturbative;

pub use exact::{exact_propagator_oracle, ExactKet, TwoModeSqueezer, DEFAULT_CUTOFF};
pub use perturbative::{
    BeamsplitterConvention, Conditional, Occupation, Outcome, OutcomeDistribution,
    PerturbativeKet,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Gains above this magnitude are rejected outright.
pub const GAIN_HARD_LIMIT: f64 = 0.5;
/// Gains above this magnitude are accepted with a warning.
pub const GAIN_WARN_LIMIT: f64 = 0.3;

/// Which party's modes an operation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subsystem {
    Bob,
    Eve,
}

/// Signal (`+omega`) or idler (`-omega`) half of a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tone {
    Signal,
    Idler,
}

/// One of the four modes of a channel state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeId {
    pub subsystem: Subsystem,
    pub tone: Tone,
}

impl ModeId {
    pub const ALL: [ModeId; 4] = [
        ModeId::new(Subsystem::Bob, Tone::Signal),
        ModeId::new(Subsystem::Bob, Tone::Idler),
        ModeId::new(Subsystem::Eve, Tone::Signal),
        ModeId::new(Subsystem::Eve, Tone::Idler),
    ];

    pub const fn new(subsystem: Subsystem, tone: Tone) -> Self {
        Self { subsystem, tone }
    }

    /// Position of this mode inside an [`Occupation`] tuple.
    pub const fn slot(self) -> usize {
        let base = match self.subsystem {
            Subsystem::Bob => 0,
            Subsystem::Eve => 2,
        };
        match self.tone {
            Tone::Signal => base,
            Tone::Idler => base + 1,
        }
    }
}

/// Complex parametric gain of a signal-idler pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexGain {
    magnitude: f64,
    phase: f64,
}

impl ComplexGain {
    pub fn new(magnitude: f64, phase: f64) -> Result<Self> {
        if !magnitude.is_finite() || magnitude < 0.0 || magnitude > GAIN_HARD_LIMIT {
            return Err(Error::GainOutOfRange(magnitude));
        }
        if !phase.is_finite() {
            return Err(Error::Invalid(format!("gain phase must be finite, got {phase}")));
        }
        if magnitude > GAIN_WARN_LIMIT {
            log::warn!(
                "gain |g| = {magnitude} is above {GAIN_WARN_LIMIT}; first-order truncation error grows as |g|^2"
            );
        }
        Ok(Self {
            magnitude,
            phase: wrap_phase(phase),
        })
    }

    /// Real gain with zero phase.
    pub fn real(magnitude: f64) -> Result<Self> {
        Self::new(magnitude, 0.0)
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    /// Same phase, magnitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.magnitude * factor, self.phase)
    }
}

/// Map a phase into `[0, 2pi)`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gain_guards() {
        assert!(ComplexGain::real(0.0).is_ok());
        assert!(ComplexGain::real(0.35).is_ok());
        assert_eq!(
            ComplexGain::real(0.6).unwrap_err(),
            Error::GainOutOfRange(0.6)
        );
        assert!(ComplexGain::real(-0.1).is_err());
        let g = ComplexGain::new(0.1, -PI / 2.0).unwrap();
        assert!((g.phase() - 1.5 * PI).abs() < 1e-15);
    }

    #[test]
    fn mode_slots_are_distinct() {
        let mut slots: Vec<usize> = ModeId::ALL.iter().map(|m| m.slot()).collect();
        slots.sort();
        assert_eq!(slots, vec![0, 1, 2, 3]);
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(0.0), 0.0);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!(wrap_phase(2.0 * PI).abs() < 1e-15);
        assert!(wrap_phase(-1e-18) < TAU);
    }
}
