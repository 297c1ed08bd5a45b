//! Simulation kernels for frequency-multiplexed quantum key distribution and
//! continuous-variable teleportation over broadband squeezed light.

pub mod adversary;
pub mod error;
pub mod harness;
pub mod qkd;
pub mod quantum;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod teleport;

pub use adversary::AttackModel;
pub use error::{Error, Result};
pub use qkd::{Basis, Bit, Mode, SessionConfig, SessionReport};
pub use quantum::{ComplexGain, PerturbativeKet};
