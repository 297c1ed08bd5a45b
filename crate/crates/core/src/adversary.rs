//! Eavesdropper models and their closed-form witnesses.
//!
//! Every attack is reduced to a list of [`Branch`]es: per-bit random choices
//! made by Eve (her basis, her click), each carrying Bob's mean per-slot pair
//! number in the two half-windows. Per-slot randomness (Eve's steal-resend
//! measurement outcome and guess) is already averaged inside a branch, since
//! independent slots make Bob's window counts binomial in the averaged slot
//! probability.

use crate::error::{Error, Result};
use crate::qkd::{alice_encode, Basis, Bit};
use crate::quantum::{
    wrap_phase, BeamsplitterConvention, ComplexGain, Conditional, Outcome, OutcomeDistribution,
    PerturbativeKet, Subsystem, Tone,
};
use crate::rng::{self, domain};
use crate::stats::{ContrastEstimate, Moments};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Eve's measurement phases, one per basis.
pub const EVE_BASIS_PHASES: [f64; 2] = [0.0, FRAC_PI_2];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AttackModel {
    #[default]
    None,
    InterceptResend,
    Steal {
        reflectance: f64,
    },
    StealResend {
        reflectance: f64,
    },
}

impl AttackModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AttackModel::Steal { reflectance } | AttackModel::StealResend { reflectance }
                if !(0.0..=1.0).contains(&reflectance) || reflectance.is_nan() =>
            {
                Err(Error::ReflectanceOutOfRange(reflectance))
            }
            _ => Ok(()),
        }
    }

    /// Fraction of the channel diverted to Eve (0 for attacks without a tap).
    pub fn reflectance(&self) -> f64 {
        match *self {
            AttackModel::Steal { reflectance } | AttackModel::StealResend { reflectance } => {
                reflectance
            }
            _ => 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttackModel::None => "none",
            AttackModel::InterceptResend => "intercept-resend",
            AttackModel::Steal { .. } => "steal",
            AttackModel::StealResend { .. } => "steal-resend",
        }
    }
}

/// Per-channel physical parameters an attack acts on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPhysics {
    pub gain: ComplexGain,
    pub convention: BeamsplitterConvention,
    /// Line transmission between Alice and Bob, excluding any tap.
    pub line_transmission: f64,
}

impl ChannelPhysics {
    pub fn new(gain: ComplexGain) -> Self {
        Self {
            gain,
            convention: BeamsplitterConvention::default(),
            line_transmission: 1.0,
        }
    }
}

/// One per-bit random branch of an attack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub weight: f64,
    /// Bob's mean per-slot pair number in half-windows 1 and 2.
    pub mean_photons: [f64; 2],
}

/// Eve's coarse-grained measurement result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EveOutcome {
    Pair,
    Split,
    None,
}

impl From<Outcome> for EveOutcome {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Pair => EveOutcome::Pair,
            Outcome::Signal | Outcome::Idler => EveOutcome::Split,
            Outcome::None => EveOutcome::None,
        }
    }
}

/// What Eve sends on to Bob after measuring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EveAction {
    GeneratePair { phi_a_prime: f64 },
    ReplaceState { phi_a_prime: f64 },
    Manipulate { phi_shift: f64, alpha: f64, phi_a_prime: f64 },
}

/// Closed-form case labels for Bob's steal-resend expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResendCase {
    Regenerated,
    ManipulatedWrongBasis,
    ManipulatedWrongBit,
    ManipulatedCorrect,
}

fn alice_ket(gain: ComplexGain, phi_a: f64) -> Result<PerturbativeKet> {
    Ok(PerturbativeKet::vacuum()
        .opa_apply(gain, 0.0, Subsystem::Bob)?
        .phase_shift(phi_a, 0.0, Subsystem::Bob))
}

/// Bob's phase setting, OPA and mean signal count for a ket on his modes.
pub fn bob_detect(ket: &PerturbativeKet, gain: ComplexGain, phi_b: f64) -> Result<f64> {
    Ok(ket
        .phase_shift(phi_b, 0.0, Subsystem::Bob)
        .opa_apply(gain, 0.0, Subsystem::Bob)?
        .expected_pair_count(Subsystem::Bob, Tone::Signal))
}

/// Beamsplitter tap onto Eve's vacuum modes.
pub fn steal_transform(
    ket: &PerturbativeKet,
    reflectance: f64,
    convention: BeamsplitterConvention,
) -> Result<PerturbativeKet> {
    ket.beamsplit_to_eve(reflectance, convention)
}

/// Probability that Eve's interferometer in basis `phi_e` registers the
/// constructive outcome, in the idealized one-photon regime.
pub fn intercept_click_probability(
    alice: &PerturbativeKet,
    gain: ComplexGain,
    phi_e: f64,
) -> Result<f64> {
    let g2 = gain.magnitude().powi(2);
    if g2 == 0.0 {
        return Ok(0.5);
    }
    let n_e = bob_detect(alice, gain, phi_e)?;
    Ok((n_e / (4.0 * g2)).clamp(0.0, 1.0))
}

/// Fresh single-pass state at Alice-like phase `phi_a_prime`.
pub fn regenerate(gain: ComplexGain, phi_a_prime: f64) -> Result<PerturbativeKet> {
    alice_ket(gain, phi_a_prime)
}

/// Intercept-resend on one bit: Eve reads the state in basis `phi_e` and
/// sends a regenerated state matching her reading.
pub fn intercept_resend<R: Rng + ?Sized>(
    alice: &PerturbativeKet,
    gain: ComplexGain,
    phi_e: f64,
    rng: &mut R,
) -> Result<(PerturbativeKet, f64)> {
    let q = intercept_click_probability(alice, gain, phi_e)?;
    let guess = if rng.random::<f64>() < q { 0.0 } else { PI };
    Ok((regenerate(gain, guess - phi_e)?, guess))
}

/// Joint Bob-Eve state after the tap, Eve's basis phase and Eve's OPA.
///
/// The basis phase is applied to Bob's modes as well as Eve's; Eve undoes it
/// on Bob's side when she manipulates the remaining state.
pub fn eve_measurement_state(
    alice: &PerturbativeKet,
    reflectance: f64,
    convention: BeamsplitterConvention,
    phi_e: f64,
    gain: ComplexGain,
) -> Result<PerturbativeKet> {
    steal_transform(alice, reflectance, convention)?
        .phase_shift(phi_e, 0.0, Subsystem::Eve)
        .phase_shift(phi_e, 0.0, Subsystem::Bob)
        .opa_apply(gain, 0.0, Subsystem::Eve)
}

/// Eve's outcome distribution computed from the state algebra.
pub fn derived_eve_outcome_probs(
    phi_ae: f64,
    reflectance: f64,
    gain: ComplexGain,
    convention: BeamsplitterConvention,
) -> Result<OutcomeDistribution> {
    let joint = eve_measurement_state(&alice_ket(gain, phi_ae)?, reflectance, convention, 0.0, gain)?;
    Ok(joint.outcome_distribution(Subsystem::Eve))
}

/// Index of a tabulated phase: 0, pi/2, pi, -pi/2.
fn tabulated(phi_ae: f64) -> Result<usize> {
    let w = wrap_phase(phi_ae);
    for (k, p) in [0.0, FRAC_PI_2, PI, 1.5 * PI, 2.0 * PI].into_iter().enumerate() {
        if (w - p).abs() < 1e-9 {
            return Ok(k % 4);
        }
    }
    Err(Error::UntabulatedPhase(phi_ae))
}

/// Tabulated closed form of Eve's outcome weights at `phi_ae` in
/// {0, pi/2, pi, -pi/2}, in units of `|g|^2`.
///
/// The no-photon weight is reproduced as tabulated, `(T - 1/|g|)^2`, which is
/// not the first-order value `1/|g|^2 + T^2`; compare with
/// [`derived_eve_outcome_probs`].
pub fn eve_outcome_probs(phi_ae: f64, reflectance: f64, g: f64) -> Result<OutcomeDistribution> {
    if !(0.0..=1.0).contains(&reflectance) {
        return Err(Error::ReflectanceOutOfRange(reflectance));
    }
    if !(g > 0.0) {
        return Err(Error::GainOutOfRange(g));
    }
    let r = reflectance;
    let t = 1.0 - r;
    // |R + e^{-i phi_AE}|^2
    let pair = match tabulated(phi_ae)? {
        0 => (r + 1.0).powi(2),
        2 => (r - 1.0).powi(2),
        _ => r * r + 1.0,
    };
    let split = 2.0 * r * t;
    let none = (t - 1.0 / g).powi(2);
    Ok(OutcomeDistribution::from_weights([
        none,
        split / 2.0,
        split / 2.0,
        pair,
    ]))
}

/// Eve's phase guess with its probability for each coarse outcome.
pub fn eve_guess_options(outcome: EveOutcome) -> &'static [(f64, f64)] {
    match outcome {
        EveOutcome::Pair => &[(1.0, 0.0)],
        EveOutcome::None => &[(1.0, PI)],
        EveOutcome::Split => &[(0.5, 0.0), (0.5, PI)],
    }
}

/// Eve's guess of `phi_AE`: 0 after a pair, pi after nothing, random after a
/// single photon.
pub fn eve_guess<R: Rng + ?Sized>(outcome: EveOutcome, rng: &mut R) -> f64 {
    match outcome {
        EveOutcome::Pair => 0.0,
        EveOutcome::None => PI,
        EveOutcome::Split => {
            if rng.random::<bool>() {
                0.0
            } else {
                PI
            }
        }
    }
}

/// Eve's concealing action for an outcome and guess in basis `phi_e`.
pub fn eve_action(outcome: EveOutcome, guess: f64, phi_e: f64, transmission: f64) -> EveAction {
    let phi_a_prime = wrap_phase(guess - phi_e);
    match outcome {
        EveOutcome::Pair => EveAction::GeneratePair { phi_a_prime },
        EveOutcome::Split => EveAction::ReplaceState { phi_a_prime },
        EveOutcome::None => EveAction::Manipulate {
            phi_shift: -phi_e,
            alpha: 1.0 - transmission,
            phi_a_prime,
        },
    }
}

/// Apply Eve's action to the state left on Bob's modes.
pub fn apply_action(
    action: EveAction,
    remaining: &Conditional,
    gain: ComplexGain,
) -> Result<PerturbativeKet> {
    match action {
        EveAction::GeneratePair { phi_a_prime } | EveAction::ReplaceState { phi_a_prime } => {
            regenerate(gain, phi_a_prime)
        }
        EveAction::Manipulate {
            phi_shift,
            alpha,
            phi_a_prime,
        } => {
            let Conditional::Ket(ket) = remaining else {
                return Err(Error::Invalid(
                    "manipulation needs a vacuum-led remaining state".into(),
                ));
            };
            ket.phase_shift(phi_shift, 0.0, Subsystem::Bob)
                .opa_apply(gain.scaled(alpha)?, phi_a_prime, Subsystem::Bob)
        }
    }
}

/// Replenish Bob's channel after Eve's measurement.
pub fn eve_replenish(
    outcome: EveOutcome,
    guess: f64,
    remaining: &Conditional,
    phi_e: f64,
    transmission: f64,
    gain: ComplexGain,
) -> Result<PerturbativeKet> {
    apply_action(eve_action(outcome, guess, phi_e, transmission), remaining, gain)
}

/// Bob's mean pair number in units of `|g|^2` for the enumerated
/// steal-resend cases. `phase_sum` is `phi_A' + phi_B` for a regenerated
/// state and `phi_A + phi_B` otherwise; the wrong-basis case averages Eve's
/// two possible wrong-basis guesses.
pub fn steal_resend_bob_expectation(case: ResendCase, transmission: f64, phase_sum: f64) -> f64 {
    let t = transmission;
    let r = 1.0 - t;
    let c = phase_sum.cos();
    match case {
        ResendCase::Regenerated => 2.0 + 2.0 * c,
        ResendCase::ManipulatedWrongBasis => 1.0 + t * t + r * r + 2.0 * t * c,
        ResendCase::ManipulatedWrongBit => (1.0 + (t - r) * c).powi(2) + ((t - r) * phase_sum.sin()).powi(2),
        ResendCase::ManipulatedCorrect => 2.0 + 2.0 * c,
    }
}

/// Bob's mean pair number in units of `|g|^2` after Eve manipulates with
/// guess `phi_a_prime`: `|1 + T e^{i(phi_A+phi_B)} + R e^{i(phi_A'+phi_B)}|^2`.
pub fn manipulated_expectation(transmission: f64, phi_a: f64, phi_a_prime: f64, phi_b: f64) -> f64 {
    let t = transmission;
    let r = 1.0 - t;
    let s = phi_a + phi_b;
    let s2 = phi_a_prime + phi_b;
    1.0 + t * t + r * r + 2.0 * t * s.cos() + 2.0 * r * s2.cos() + 2.0 * r * t * (phi_a - phi_a_prime).cos()
}

/// Bob's per-bit branches for `attack` given Alice's phase and Bob's two
/// half-window phases.
pub fn bob_branches(
    attack: &AttackModel,
    physics: &ChannelPhysics,
    phi_a: f64,
    phi_b: [f64; 2],
) -> Result<Vec<Branch>> {
    attack.validate()?;
    let gain = physics.gain;
    let line = physics.line_transmission;
    if !(0.0..=1.0).contains(&line) {
        return Err(Error::Config(format!("line transmission {line} outside [0, 1]")));
    }
    let alice = alice_ket(gain, phi_a)?;
    let detect_both = |ket: &PerturbativeKet| -> Result<[f64; 2]> {
        Ok([bob_detect(ket, gain, phi_b[0])?, bob_detect(ket, gain, phi_b[1])?])
    };

    match *attack {
        AttackModel::None | AttackModel::Steal { .. } => {
            let total_r = 1.0 - (1.0 - attack.reflectance()) * line;
            let ket = steal_transform(&alice, total_r, physics.convention)?;
            Ok(vec![Branch {
                weight: 1.0,
                mean_photons: detect_both(&ket)?,
            }])
        }
        _ if line < 1.0 => Err(Error::Config(format!(
            "line transmission {line} < 1 is only supported with no attack or a steal attack"
        ))),
        AttackModel::InterceptResend => {
            let mut out = Vec::with_capacity(4);
            for phi_e in EVE_BASIS_PHASES {
                let q = intercept_click_probability(&alice, gain, phi_e)?;
                for (w, guess) in [(q, 0.0), (1.0 - q, PI)] {
                    if w <= 0.0 {
                        continue;
                    }
                    let ket = regenerate(gain, guess - phi_e)?;
                    out.push(Branch {
                        weight: 0.5 * w,
                        mean_photons: detect_both(&ket)?,
                    });
                }
            }
            Ok(out)
        }
        AttackModel::StealResend { reflectance } => {
            let transmission = 1.0 - reflectance;
            let mut out = Vec::with_capacity(2);
            for phi_e in EVE_BASIS_PHASES {
                let joint =
                    eve_measurement_state(&alice, reflectance, physics.convention, phi_e, gain)?;
                let dist = joint.outcome_distribution(Subsystem::Eve);
                let mut mean = [0.0; 2];
                for outcome in Outcome::ALL {
                    let p = dist.probability(outcome);
                    if p <= 0.0 {
                        continue;
                    }
                    let remaining = joint.project(Subsystem::Eve, outcome);
                    let coarse = EveOutcome::from(outcome);
                    for &(w, guess) in eve_guess_options(coarse) {
                        let ket =
                            eve_replenish(coarse, guess, &remaining, phi_e, transmission, gain)?;
                        let n = detect_both(&ket)?;
                        mean[0] += p * w * n[0];
                        mean[1] += p * w * n[1];
                    }
                }
                out.push(Branch {
                    weight: 0.5,
                    mean_photons: mean,
                });
            }
            Ok(out)
        }
    }
}

/// Contrast seen by Bob under a plain tap of transmission `T`.
pub fn steal_contrast(transmission: f64) -> f64 {
    2.0 * transmission / (1.0 + transmission)
}

/// Contrast of Eve's own interferometer on the stolen fraction `R`.
pub fn eve_side_contrast(reflectance: f64) -> f64 {
    2.0 * reflectance / (1.0 + reflectance)
}

/// Contrast for unequal Alice and Bob gains at transmission `T`.
pub fn unequal_gain_contrast(g_alice: f64, g_bob: f64, transmission: f64) -> f64 {
    2.0 * g_alice * g_bob * transmission / (g_bob * g_bob + transmission * g_alice * g_alice)
}

fn matched_classes() -> impl Iterator<Item = (f64, f64)> {
    // Alice phase and Bob's constructive phase for each basis/bit pair.
    [Basis::B1, Basis::B2].into_iter().flat_map(|basis| {
        [Bit::One, Bit::Zero].into_iter().map(move |bit| {
            let phi_a = alice_encode(bit, basis);
            (phi_a, wrap_phase(-phi_a))
        })
    })
}

/// Mean Bob counts (units of `|g|^2`) at the constructive and destructive
/// settings, averaged over Alice's basis and bit and Eve's choices.
pub fn predicted_intensities(
    attack: &AttackModel,
    gain: ComplexGain,
    convention: BeamsplitterConvention,
) -> Result<(f64, f64)> {
    attack.validate()?;
    let mut n0 = 0.0;
    let mut npi = 0.0;
    let mut classes = 0.0;
    for (phi_a, phi_b) in matched_classes() {
        let [a, b] = match *attack {
            AttackModel::None => [4.0, 0.0],
            AttackModel::Steal { reflectance } => {
                let t = 1.0 - reflectance;
                [1.0 + 3.0 * t, 1.0 - t]
            }
            AttackModel::InterceptResend => {
                let mut acc = [0.0; 2];
                for phi_e in EVE_BASIS_PHASES {
                    let q = (1.0 + (phi_a + phi_e).cos()) / 2.0;
                    for (w, guess) in [(q, 0.0), (1.0 - q, PI)] {
                        let pa = guess - phi_e;
                        acc[0] += 0.5 * w * steal_resend_bob_expectation(ResendCase::Regenerated, 1.0, pa + phi_b);
                        acc[1] += 0.5 * w * steal_resend_bob_expectation(ResendCase::Regenerated, 1.0, pa + phi_b + PI);
                    }
                }
                acc
            }
            AttackModel::StealResend { reflectance } => {
                let t = 1.0 - reflectance;
                let mut acc = [0.0; 2];
                for phi_e in EVE_BASIS_PHASES {
                    let dist = derived_eve_outcome_probs(phi_a + phi_e, reflectance, gain, convention)?;
                    for outcome in Outcome::ALL {
                        let p = dist.probability(outcome);
                        let coarse = EveOutcome::from(outcome);
                        for &(w, guess) in eve_guess_options(coarse) {
                            let pa = guess - phi_e;
                            for (k, pb) in [phi_b, phi_b + PI].into_iter().enumerate() {
                                let n = match coarse {
                                    EveOutcome::None => manipulated_expectation(t, phi_a, pa, pb),
                                    _ => steal_resend_bob_expectation(ResendCase::Regenerated, t, pa + pb),
                                };
                                acc[k] += 0.5 * p * w * n;
                            }
                        }
                    }
                }
                acc
            }
        };
        n0 += a;
        npi += b;
        classes += 1.0;
    }
    Ok((n0 / classes, npi / classes))
}

/// Closed-form contrast witness for `attack`.
pub fn predicted_contrast(
    attack: &AttackModel,
    gain: ComplexGain,
    convention: BeamsplitterConvention,
) -> Result<f64> {
    let (a, b) = predicted_intensities(attack, gain, convention)?;
    Ok(crate::stats::contrast(a, b).unwrap_or(0.0))
}

/// Transmissions where the steal-resend contrast crosses the steal contrast,
/// located by bisection between sign changes on `grid`.
pub fn steal_resend_crossovers(
    gain: ComplexGain,
    convention: BeamsplitterConvention,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let diff = |t: f64| -> Result<f64> {
        let v = predicted_contrast(&AttackModel::StealResend { reflectance: 1.0 - t }, gain, convention)?;
        Ok(v - steal_contrast(t))
    };
    let mut out = Vec::new();
    for w in grid.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (mut dlo, dhi) = (diff(lo)?, diff(hi)?);
        if dlo == 0.0 {
            out.push(lo);
            continue;
        }
        if dlo.signum() == dhi.signum() {
            continue;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let dm = diff(mid)?;
            if dm.signum() == dlo.signum() {
                lo = mid;
                dlo = dm;
            } else {
                hi = mid;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    Ok(out)
}

/// Eve's mean per-slot pair number on the stolen fraction at `phi_ae`.
pub fn eve_tap_mean(
    reflectance: f64,
    phi_ae: f64,
    gain: ComplexGain,
    convention: BeamsplitterConvention,
) -> Result<f64> {
    Ok(steal_transform(&alice_ket(gain, phi_ae)?, reflectance, convention)?
        .opa_apply(gain, 0.0, Subsystem::Eve)?
        .expected_pair_count(Subsystem::Eve, Tone::Signal))
}

/// Monte Carlo estimate of Eve's own interference contrast: each trial
/// samples her constructive and destructive half-window counts.
pub fn eve_tap_contrast_mc(
    reflectance: f64,
    gain: ComplexGain,
    convention: BeamsplitterConvention,
    slots_per_window: u64,
    trials: u64,
    seed: u64,
) -> Result<ContrastEstimate> {
    let p_max = eve_tap_mean(reflectance, 0.0, gain, convention)?;
    let p_min = eve_tap_mean(reflectance, PI, gain, convention)?;
    if p_max > 1.0 {
        return Err(Error::SlotProbability(p_max));
    }
    let hi = Binomial::new(slots_per_window, p_max).map_err(|e| Error::Invalid(e.to_string()))?;
    let lo = Binomial::new(slots_per_window, p_min).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut max = Moments::default();
    let mut min = Moments::default();
    for i in 0..trials {
        let mut rng = rng::stream(seed, &[domain::EVE_TAP, i]);
        max.push(hi.sample(&mut rng) as f64);
        min.push(lo.sample(&mut rng) as f64);
    }
    Ok(ContrastEstimate::from_moments(&max, &min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(x: f64) -> ComplexGain {
        ComplexGain::real(x).unwrap()
    }

    #[test]
    fn attack_validation() {
        assert_eq!(
            AttackModel::Steal { reflectance: 1.3 }.validate(),
            Err(Error::ReflectanceOutOfRange(1.3))
        );
        assert!(AttackModel::StealResend { reflectance: 0.2 }.validate().is_ok());
    }

    #[test]
    fn steal_bob_expectation_examples() {
        let phys = ChannelPhysics::new(g(0.1));
        let b = bob_branches(&AttackModel::Steal { reflectance: 0.5 }, &phys, 0.0, [0.0, PI]).unwrap();
        assert_eq!(b.len(), 1);
        assert!((b[0].mean_photons[0] - 0.025).abs() < 1e-15);
        assert!((b[0].mean_photons[1] - 0.005).abs() < 1e-15);
    }

    #[test]
    fn table_examples() {
        let d = eve_outcome_probs(0.0, 0.3, 0.2).unwrap();
        assert!((d.weight(Outcome::Pair) - 1.69).abs() < 1e-12);
        assert!((d.weight(Outcome::Signal) + d.weight(Outcome::Idler) - 0.42).abs() < 1e-12);
        let d = eve_outcome_probs(PI, 0.3, 0.2).unwrap();
        assert!((d.weight(Outcome::Pair) - 0.49).abs() < 1e-12);
        assert_eq!(eve_outcome_probs(FRAC_PI_2, 0.3, 0.2).unwrap(), eve_outcome_probs(-FRAC_PI_2, 0.3, 0.2).unwrap());
        assert_eq!(eve_outcome_probs(0.3, 0.3, 0.2).unwrap_err(), Error::UntabulatedPhase(0.3));
    }

    #[test]
    fn derived_probabilities_match_table_for_photon_outcomes() {
        let r = 0.3;
        let gain = g(0.2);
        for phi in [0.0, FRAC_PI_2, PI, -FRAC_PI_2] {
            let table = eve_outcome_probs(phi, r, 0.2).unwrap();
            let derived = derived_eve_outcome_probs(phi, r, gain, BeamsplitterConvention::RealAsymmetric).unwrap();
            let g2 = 0.04;
            for o in [Outcome::Pair, Outcome::Signal, Outcome::Idler] {
                assert!((derived.weight(o) / g2 - table.weight(o)).abs() < 1e-12);
            }
            // Vacuum weight: 1/g^2 + T^2 rather than the tabulated (T - 1/g)^2.
            let vac = derived.weight(Outcome::None) / g2;
            assert!((vac - (1.0 / g2 + 0.49)).abs() < 1e-9);
        }
    }

    #[test]
    fn intercept_right_basis_is_untampered() {
        let gain = g(0.1);
        let alice = alice_ket(gain, PI).unwrap();
        assert!(intercept_click_probability(&alice, gain, 0.0).unwrap().abs() < 1e-12);
        let mut rng = rng::stream(1, &[0]);
        let (ket, guess) = intercept_resend(&alice, gain, 0.0, &mut rng).unwrap();
        assert_eq!(guess, PI);
        assert!((bob_detect(&ket, gain, 0.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn intercept_wrong_basis_gives_flat_counts() {
        let phys = ChannelPhysics::new(g(0.1));
        for bit_phase in [0.0, PI] {
            let b = bob_branches(&AttackModel::InterceptResend, &phys, bit_phase, [FRAC_PI_2, 1.5 * PI]).unwrap();
            // Bob measures in B2 while Alice used B1; the averaged counts are flat.
            let w1: f64 = b.iter().map(|x| x.weight * x.mean_photons[0]).sum();
            let w2: f64 = b.iter().map(|x| x.weight * x.mean_photons[1]).sum();
            assert!((w1 - 0.02).abs() < 1e-15 && (w2 - 0.02).abs() < 1e-15);
        }
        assert!((predicted_contrast(&AttackModel::InterceptResend, g(0.1), Default::default()).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn resend_closed_forms() {
        use ResendCase::*;
        let t = 0.5;
        assert!((steal_resend_bob_expectation(ManipulatedWrongBasis, t, 0.0) - 2.5).abs() < 1e-12);
        assert!((steal_resend_bob_expectation(ManipulatedWrongBasis, t, PI) - 0.5).abs() < 1e-12);
        assert!((steal_resend_bob_expectation(ManipulatedWrongBit, t, 0.0) - 1.0).abs() < 1e-12);
        assert!((steal_resend_bob_expectation(ManipulatedWrongBit, t, PI) - 1.0).abs() < 1e-12);
        assert!((steal_resend_bob_expectation(ManipulatedCorrect, t, 0.0) - 4.0).abs() < 1e-12);
        assert!((steal_resend_bob_expectation(Regenerated, t, FRAC_PI_2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn manipulate_with_correct_guess_restores_alice() {
        let gain = g(0.1);
        let phi_a = 0.0;
        let joint = eve_measurement_state(&alice_ket(gain, phi_a).unwrap(), 0.4, Default::default(), 0.0, gain).unwrap();
        let remaining = joint.project(Subsystem::Eve, Outcome::None);
        let ket = eve_replenish(EveOutcome::None, 0.0, &remaining, 0.0, 0.6, gain).unwrap();
        let original = alice_ket(gain, phi_a).unwrap();
        assert!((ket.amplitude([1, 1, 0, 0]) - original.amplitude([1, 1, 0, 0])).norm() < 1e-15);

        // Doing nothing or regenerating at the same guess is no closer.
        let untouched = match &remaining {
            Conditional::Ket(k) => k.clone(),
            _ => unreachable!(),
        };
        let d = |k: &PerturbativeKet| (k.amplitude([1, 1, 0, 0]) - original.amplitude([1, 1, 0, 0])).norm();
        assert!(d(&ket) <= d(&untouched));
        assert!(d(&ket) <= d(&regenerate(gain, 0.0).unwrap()) + 1e-15);
    }

    #[test]
    fn manipulation_limits() {
        let gain = g(0.1);
        let alice = alice_ket(gain, 0.3).unwrap();
        // T = 1 leaves the state unchanged.
        let joint = eve_measurement_state(&alice, 0.0, Default::default(), 0.0, gain).unwrap();
        let rem = joint.project(Subsystem::Eve, Outcome::None);
        let k = eve_replenish(EveOutcome::None, PI, &rem, 0.0, 1.0, gain).unwrap();
        assert!((k.amplitude([1, 1, 0, 0]) - alice.amplitude([1, 1, 0, 0])).norm() < 1e-15);
        // T = 0 degenerates to regeneration.
        let joint = eve_measurement_state(&alice, 1.0, Default::default(), 0.0, gain).unwrap();
        let rem = joint.project(Subsystem::Eve, Outcome::None);
        let k = eve_replenish(EveOutcome::None, PI, &rem, 0.0, 0.0, gain).unwrap();
        assert!((k.amplitude([1, 1, 0, 0]) - regenerate(gain, PI).unwrap().amplitude([1, 1, 0, 0])).norm() < 1e-15);
    }

    #[test]
    fn contrast_forms() {
        assert!((eve_side_contrast(0.05) - 0.1 / 1.05).abs() < 1e-15);
        assert_eq!(steal_contrast(1.0), 1.0);
        assert!((unequal_gain_contrast(0.1, 0.1, 0.5) - steal_contrast(0.5)).abs() < 1e-15);
        let v = predicted_contrast(&AttackModel::Steal { reflectance: 0.5 }, g(0.1), Default::default()).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(predicted_contrast(&AttackModel::None, g(0.1), Default::default()).unwrap(), 1.0);
    }

    #[test]
    fn unequal_gain_matches_pipeline() {
        let (ga, gb, t) = (0.08, 0.12, 0.7);
        let n = |phi_b: f64| {
            let ket = alice_ket(g(ga), 0.0)
                .unwrap()
                .beamsplit_to_eve(1.0 - t, Default::default())
                .unwrap();
            bob_detect(&ket, g(gb), phi_b).unwrap()
        };
        let v = crate::stats::contrast(n(0.0), n(PI)).unwrap();
        assert!((v - unequal_gain_contrast(ga, gb, t)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn steal_contrast_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(steal_contrast(lo) <= steal_contrast(hi));
            if hi < 1.0 {
                prop_assert!(steal_contrast(hi) < 1.0);
            }
        }

        #[test]
        fn wrong_basis_distributions_equal(r in 0.0f64..=1.0, gain in 0.01f64..0.4) {
            let gain = g(gain);
            for conv in [BeamsplitterConvention::Symmetric, BeamsplitterConvention::RealAsymmetric] {
                let a = derived_eve_outcome_probs(FRAC_PI_2, r, gain, conv).unwrap().probabilities();
                let b = derived_eve_outcome_probs(-FRAC_PI_2, r, gain, conv).unwrap().probabilities();
                for k in 0..4 {
                    prop_assert!((a[k] - b[k]).abs() < 1e-14);
                }
            }
        }

        #[test]
        fn manipulated_general_form_matches_pipeline(
            t in 0.0f64..=1.0,
            phi_a in 0.0f64..6.3,
            phi_a_prime in 0.0f64..6.3,
            phi_b in 0.0f64..6.3,
        ) {
            let gain = g(0.1);
            let joint = eve_measurement_state(&alice_ket(gain, phi_a).unwrap(), 1.0 - t, Default::default(), 0.7, gain).unwrap();
            let rem = joint.project(Subsystem::Eve, Outcome::None);
            let action = EveAction::Manipulate { phi_shift: -0.7, alpha: 1.0 - t, phi_a_prime };
            let ket = apply_action(action, &rem, gain).unwrap();
            let n = bob_detect(&ket, gain, phi_b).unwrap() / 0.01;
            prop_assert!((n - manipulated_expectation(t, phi_a, phi_a_prime, phi_b)).abs() < 1e-10);
        }
    }
}
