use super::{ComplexGain, ModeId, Subsystem, Tone};
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Photon numbers `(n_sB, n_iB, n_sE, n_iE)`, each 0 or 1.
pub type Occupation = [u8; 4];

const N_TERMS: usize = 16;
const I: Complex64 = Complex64::new(0.0, 1.0);

fn index(occ: Occupation) -> usize {
    (occ[0] as usize) | (occ[1] as usize) << 1 | (occ[2] as usize) << 2 | (occ[3] as usize) << 3
}

fn occupation(idx: usize) -> Occupation {
    [
        (idx & 1) as u8,
        (idx >> 1 & 1) as u8,
        (idx >> 2 & 1) as u8,
        (idx >> 3 & 1) as u8,
    ]
}

fn subsystem_slots(subsystem: Subsystem) -> (usize, usize) {
    (
        ModeId::new(subsystem, Tone::Signal).slot(),
        ModeId::new(subsystem, Tone::Idler).slot(),
    )
}

/// Phase convention of the tapping beamsplitter.
///
/// Each Bob creation operator maps to `t a† + c b†`, with `c = i r` for
/// `Symmetric` and `c = r` for `RealAsymmetric`. The two conventions differ
/// only in the phase of Eve's pair term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamsplitterConvention {
    Symmetric,
    #[default]
    RealAsymmetric,
}

/// First-order biphoton state over the Bob and Eve signal-idler modes.
///
/// The vacuum amplitude is pinned to 1 and every other term is first order in
/// the gain; anything that would be second order is dropped as soon as it is
/// produced. Probabilities are normalised only in
/// [`PerturbativeKet::outcome_distribution`].
#[derive(Clone, PartialEq)]
pub struct PerturbativeKet {
    amps: [Complex64; N_TERMS],
}

impl fmt::Debug for PerturbativeKet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (occ, a) in self.terms() {
            m.entry(&occ, &a);
        }
        m.finish()
    }
}

impl Default for PerturbativeKet {
    fn default() -> Self {
        Self::vacuum()
    }
}

impl PerturbativeKet {
    pub fn vacuum() -> Self {
        let mut amps = [Complex64::new(0.0, 0.0); N_TERMS];
        amps[0] = Complex64::new(1.0, 0.0);
        Self { amps }
    }

    /// Build a ket from explicit first-order terms on top of the vacuum.
    ///
    /// Terms must be non-vacuum tuples with occupations in {0, 1}.
    pub fn from_terms<T>(terms: T) -> Result<Self>
    where
        T: IntoIterator<Item = (Occupation, Complex64)>,
    {
        let mut ket = Self::vacuum();
        for (occ, amp) in terms {
            if occ.iter().any(|&n| n > 1) {
                return Err(Error::OccupationOverflow(occ));
            }
            let idx = index(occ);
            if idx == 0 {
                return Err(Error::Invalid(
                    "vacuum amplitude is fixed at 1 and cannot be set".into(),
                ));
            }
            ket.amps[idx] += amp;
        }
        Ok(ket)
    }

    pub fn amplitude(&self, occ: Occupation) -> Complex64 {
        if occ.iter().any(|&n| n > 1) {
            return Complex64::new(0.0, 0.0);
        }
        self.amps[index(occ)]
    }

    /// Formal order in the gain of a present term.
    pub fn order(&self, occ: Occupation) -> Option<u8> {
        if occ.iter().any(|&n| n > 1) {
            return None;
        }
        let idx = index(occ);
        match idx {
            0 => Some(0),
            _ if self.amps[idx] != Complex64::new(0.0, 0.0) => Some(1),
            _ => None,
        }
    }

    /// Non-zero terms in tuple order, vacuum first.
    pub fn terms(&self) -> impl Iterator<Item = (Occupation, Complex64)> + '_ {
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, a)| *i == 0 || a.norm_sqr() > 0.0)
            .map(|(i, a)| (occupation(i), *a))
    }

    /// Unnormalised `<psi|psi>`.
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Apply one low-gain OPA pass to `subsystem`.
    ///
    /// Every order-0 term feeds `i |g| e^{i(arg g + pump_phase)}` times its
    /// amplitude into the term with both of the subsystem's modes raised by
    /// one. Order-1 sources would only produce order-2 targets and are
    /// skipped.
    pub fn opa_apply(
        &self,
        gain: ComplexGain,
        pump_phase: f64,
        subsystem: Subsystem,
    ) -> Result<Self> {
        let (s, i) = subsystem_slots(subsystem);
        let coupling = I * Complex64::from_polar(gain.magnitude(), gain.phase() + pump_phase);
        let mut out = self.clone();
        for idx in 0..N_TERMS {
            let occ = occupation(idx);
            if self.order(occ) != Some(0) {
                continue;
            }
            if occ[s] > 0 || occ[i] > 0 {
                let mut raised = occ;
                raised[s] += 1;
                raised[i] += 1;
                return Err(Error::OccupationOverflow(raised));
            }
            let mut target = occ;
            target[s] = 1;
            target[i] = 1;
            out.amps[index(target)] += coupling * self.amps[idx];
        }
        Ok(out)
    }

    /// Multiply each term by `e^{i(n_s phi_signal + n_i phi_idler)}` on the
    /// chosen subsystem. Pair terms pick up the phase-sum.
    pub fn phase_shift(&self, phi_signal: f64, phi_idler: f64, subsystem: Subsystem) -> Self {
        let (s, i) = subsystem_slots(subsystem);
        let mut out = self.clone();
        for (idx, amp) in out.amps.iter_mut().enumerate() {
            let occ = occupation(idx);
            let phase = occ[s] as f64 * phi_signal + occ[i] as f64 * phi_idler;
            if phase != 0.0 {
                *amp *= Complex64::from_polar(1.0, phase);
            }
        }
        out
    }

    /// Tap the Bob modes onto Eve's (vacuum) modes with reflectance `r_prob`.
    pub fn beamsplit_to_eve(
        &self,
        reflectance: f64,
        convention: BeamsplitterConvention,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&reflectance) || reflectance.is_nan() {
            return Err(Error::ReflectanceOutOfRange(reflectance));
        }
        let eve_population: f64 = self
            .terms()
            .filter(|(occ, _)| occ[2] > 0 || occ[3] > 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        if eve_population > 0.0 {
            return Err(Error::EveModesOccupied(eve_population));
        }
        let t = (1.0 - reflectance).sqrt();
        let r = reflectance.sqrt();
        let c = match convention {
            BeamsplitterConvention::Symmetric => Complex64::new(0.0, r),
            BeamsplitterConvention::RealAsymmetric => Complex64::new(r, 0.0),
        };
        let t = Complex64::new(t, 0.0);

        let mut out = [Complex64::new(0.0, 0.0); N_TERMS];
        for (occ, amp) in self.terms() {
            // Expand prod over occupied Bob tones of (t a† + c b†).
            let mut branches: Vec<(Occupation, Complex64)> = vec![([0, 0, 0, 0], amp)];
            for (bob_slot, eve_slot) in [(0usize, 2usize), (1, 3)] {
                if occ[bob_slot] == 0 {
                    continue;
                }
                branches = branches
                    .into_iter()
                    .flat_map(|(o, a)| {
                        let mut stay = o;
                        stay[bob_slot] = 1;
                        let mut tap = o;
                        tap[eve_slot] = 1;
                        [(stay, a * t), (tap, a * c)]
                    })
                    .collect();
            }
            for (o, a) in branches {
                out[index(o)] += a;
            }
        }
        Ok(Self { amps: out })
    }

    /// `sum n_mode |amp|^2` over all terms, not normalised.
    pub fn expected_pair_count(&self, subsystem: Subsystem, tone: Tone) -> f64 {
        let slot = ModeId::new(subsystem, tone).slot();
        self.terms()
            .map(|(occ, a)| occ[slot] as f64 * a.norm_sqr())
            .sum()
    }

    /// Normalised distribution of `(n_signal, n_idler)` on one subsystem,
    /// marginalised over the other.
    pub fn outcome_distribution(&self, subsystem: Subsystem) -> OutcomeDistribution {
        let (s, i) = subsystem_slots(subsystem);
        let mut weights = [0.0; 4];
        for (occ, a) in self.terms() {
            weights[Outcome::from_counts(occ[s], occ[i]) as usize] += a.norm_sqr();
        }
        OutcomeDistribution::from_weights(weights)
    }

    /// Project `subsystem` onto a measurement outcome and return the state
    /// left on the other subsystem, re-expressed on the Bob modes.
    pub fn project(&self, measured: Subsystem, outcome: Outcome) -> Conditional {
        let (ms, mi) = subsystem_slots(measured);
        let (ks, ki) = subsystem_slots(match measured {
            Subsystem::Bob => Subsystem::Eve,
            Subsystem::Eve => Subsystem::Bob,
        });
        let (want_s, want_i) = outcome.counts();
        let kept: Vec<((u8, u8), Complex64)> = self
            .terms()
            .filter(|(occ, a)| occ[ms] == want_s && occ[mi] == want_i && a.norm_sqr() > 0.0)
            .map(|(occ, a)| ((occ[ks], occ[ki]), a))
            .collect();

        match kept.iter().find(|(o, _)| *o == (0, 0)) {
            Some(&(_, vac)) => {
                let mut ket = Self::vacuum();
                for &((ns, ni), a) in &kept {
                    if (ns, ni) != (0, 0) && outcome == Outcome::None {
                        ket.amps[index([ns, ni, 0, 0])] = a / vac;
                    }
                }
                // A non-vacuum measured outcome leaves the remaining modes in
                // vacuum up to first order; everything else there is order 2.
                Conditional::Ket(ket)
            }
            None => Conditional::Photons(
                kept.into_iter()
                    .map(|((ns, ni), a)| ([ns, ni, 0, 0], a))
                    .collect(),
            ),
        }
    }
}

/// State left on the unmeasured modes after a projective measurement.
#[derive(Debug, Clone, PartialEq)]
pub enum Conditional {
    /// Vacuum-led first-order state (vacuum amplitude renormalised to 1).
    Ket(PerturbativeKet),
    /// No vacuum component: the listed unpaired photon terms.
    Photons(Vec<(Occupation, Complex64)>),
}

/// Photon-count outcome `(n_omega, n_-omega)` on one subsystem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    None = 0,
    Signal = 1,
    Idler = 2,
    Pair = 3,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [Outcome::None, Outcome::Signal, Outcome::Idler, Outcome::Pair];

    pub fn from_counts(n_signal: u8, n_idler: u8) -> Self {
        match (n_signal, n_idler) {
            (0, 0) => Outcome::None,
            (1, 0) => Outcome::Signal,
            (0, 1) => Outcome::Idler,
            _ => Outcome::Pair,
        }
    }

    pub fn counts(self) -> (u8, u8) {
        match self {
            Outcome::None => (0, 0),
            Outcome::Signal => (1, 0),
            Outcome::Idler => (0, 1),
            Outcome::Pair => (1, 1),
        }
    }
}

/// Normalised outcome probabilities for one subsystem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    probabilities: [f64; 4],
    z: f64,
}

impl OutcomeDistribution {
    /// Normalise non-negative weights indexed by [`Outcome`].
    pub fn from_weights(weights: [f64; 4]) -> Self {
        let z: f64 = weights.iter().sum();
        debug_assert!(z > 0.0 && weights.iter().all(|&w| w >= 0.0));
        Self {
            probabilities: weights.map(|w| w / z),
            z,
        }
    }

    pub fn probability(&self, outcome: Outcome) -> f64 {
        self.probabilities[outcome as usize]
    }

    /// Unnormalised weight `Z * P`.
    pub fn weight(&self, outcome: Outcome) -> f64 {
        self.probabilities[outcome as usize] * self.z
    }

    pub fn pair(&self) -> f64 {
        self.probability(Outcome::Pair)
    }

    pub fn split(&self) -> f64 {
        self.probability(Outcome::Signal) + self.probability(Outcome::Idler)
    }

    pub fn none(&self) -> f64 {
        self.probability(Outcome::None)
    }

    pub fn normalization(&self) -> f64 {
        self.z
    }

    pub fn probabilities(&self) -> [f64; 4] {
        self.probabilities
    }
}
