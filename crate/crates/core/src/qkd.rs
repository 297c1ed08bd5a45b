//! Frequency-multiplexed BB84-like session over SU(1,1) interference.
//!
//! Alice encodes each bit as a phase-sum on one channel, Bob picks a basis
//! phase and flips it by pi halfway through the integration window, and a
//! photon in exactly one half-window decodes the bit.

use crate::adversary::{bob_branches, AttackModel, Branch, ChannelPhysics};
use crate::error::{Error, Result};
use crate::quantum::{wrap_phase, BeamsplitterConvention, ComplexGain};
use crate::rng::{self, domain, StreamRng};
use crate::spectral::{blur_phases, CrosstalkMode, CrosstalkModel, LeakageMatrix};
use crate::stats::{ContrastEstimate, Moments};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    B1,
    B2,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::B1, Basis::B2];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn as_u8(self) -> u8 {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }

    pub fn flipped(self) -> Bit {
        match self {
            Bit::Zero => Bit::One,
            Bit::One => Bit::Zero,
        }
    }

    fn index(self) -> usize {
        self.as_u8() as usize
    }
}

/// Which half-window carries Bob's pi flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowOrder {
    #[default]
    FlipSecond,
    FlipFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Exact means and decode probabilities; no count sampling.
    #[default]
    Expectation,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HalfWindow {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decoded {
    Bit0,
    Bit1,
    Erasure,
    Inconclusive,
}

impl Decoded {
    pub fn bit(self) -> Option<Bit> {
        match self {
            Decoded::Bit0 => Some(Bit::Zero),
            Decoded::Bit1 => Some(Bit::One),
            _ => None,
        }
    }
}

/// Alice's phase for `bit` in `basis`.
pub fn alice_encode(bit: Bit, basis: Basis) -> f64 {
    match (basis, bit) {
        (Basis::B1, Bit::One) => 0.0,
        (Basis::B1, Bit::Zero) => PI,
        (Basis::B2, Bit::One) => 1.5 * PI,
        (Basis::B2, Bit::Zero) => FRAC_PI_2,
    }
}

/// Bob's phase in a half-window, with the flip on the second half.
pub fn bob_phase(basis: Basis, half: HalfWindow) -> f64 {
    bob_window_phases(basis, WindowOrder::FlipSecond)[match half {
        HalfWindow::First => 0,
        HalfWindow::Second => 1,
    }]
}

/// Bob's phases in half-windows 1 and 2.
pub fn bob_window_phases(basis: Basis, order: WindowOrder) -> [f64; 2] {
    let base = match basis {
        Basis::B1 => 0.0,
        Basis::B2 => FRAC_PI_2,
    };
    match order {
        WindowOrder::FlipSecond => [base, wrap_phase(base + PI)],
        WindowOrder::FlipFirst => [wrap_phase(base + PI), base],
    }
}

/// Bit decoded from a photon in half-window 1 only.
fn first_window_bit(order: WindowOrder) -> Bit {
    match order {
        WindowOrder::FlipSecond => Bit::One,
        WindowOrder::FlipFirst => Bit::Zero,
    }
}

/// Index of the half-window in which `bit` interferes constructively.
pub fn constructive_window(bit: Bit, order: WindowOrder) -> usize {
    if bit == first_window_bit(order) {
        0
    } else {
        1
    }
}

pub fn differential_decode(counts: [u64; 2], order: WindowOrder) -> Decoded {
    let to_decoded = |b: Bit| match b {
        Bit::Zero => Decoded::Bit0,
        Bit::One => Decoded::Bit1,
    };
    match (counts[0] > 0, counts[1] > 0) {
        (false, false) => Decoded::Erasure,
        (true, true) => Decoded::Inconclusive,
        (true, false) => to_decoded(first_window_bit(order)),
        (false, true) => to_decoded(first_window_bit(order).flipped()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub channels: usize,
    /// Gain magnitude used for every channel without an explicit entry.
    pub gain: f64,
    pub gain_phase: f64,
    /// Per-channel gain magnitudes; overrides `gain` when present.
    pub channel_gains: Option<Vec<f64>>,
    /// Coherence slots per bit, split evenly between the two half-windows.
    pub slots_per_bit: u64,
    pub detector_efficiency: f64,
    /// Dark-count probability per slot.
    pub dark_count: f64,
    pub bits_per_channel: u64,
    pub master_seed: u64,
    /// Line transmission Alice to Bob, excluding any eavesdropper tap.
    pub line_transmission: f64,
    pub convention: BeamsplitterConvention,
    pub window_order: WindowOrder,
    pub crosstalk: CrosstalkModel,
    pub mode: Mode,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            channels: 23,
            gain: 0.1,
            gain_phase: 0.0,
            channel_gains: None,
            slots_per_bit: 10_000,
            detector_efficiency: 1.0,
            dark_count: 0.0,
            bits_per_channel: 1_000,
            master_seed: 0,
            line_transmission: 1.0,
            convention: BeamsplitterConvention::default(),
            window_order: WindowOrder::default(),
            crosstalk: CrosstalkModel::default(),
            mode: Mode::default(),
        }
    }
}

impl SessionConfig {
    pub fn half_window_slots(&self) -> u64 {
        self.slots_per_bit / 2
    }

    pub fn channel_gain(&self, channel: usize) -> Result<ComplexGain> {
        let mag = match &self.channel_gains {
            Some(g) => g[channel],
            None => self.gain,
        };
        ComplexGain::new(mag, self.gain_phase)
    }

    pub fn physics(&self, channel: usize) -> Result<ChannelPhysics> {
        Ok(ChannelPhysics {
            gain: self.channel_gain(channel)?,
            convention: self.convention,
            line_transmission: self.line_transmission,
        })
    }

    pub fn leakage(&self) -> Result<LeakageMatrix> {
        self.crosstalk.matrix(self.channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("session needs at least one channel".into()));
        }
        if self.slots_per_bit < 2 || self.slots_per_bit % 2 != 0 {
            return Err(Error::Config(format!(
                "slots_per_bit must be even and >= 2, got {}",
                self.slots_per_bit
            )));
        }
        if !(0.0..=1.0).contains(&self.detector_efficiency) {
            return Err(Error::Config(format!(
                "detector_efficiency {} outside [0, 1]",
                self.detector_efficiency
            )));
        }
        if !(0.0..=1.0).contains(&self.dark_count) {
            return Err(Error::Config(format!("dark_count {} outside [0, 1]", self.dark_count)));
        }
        if !(0.0..=1.0).contains(&self.line_transmission) {
            return Err(Error::Config(format!(
                "line_transmission {} outside [0, 1]",
                self.line_transmission
            )));
        }
        if let Some(g) = &self.channel_gains {
            if g.len() != self.channels {
                return Err(Error::DimensionMismatch {
                    expected: self.channels,
                    got: g.len(),
                });
            }
        }
        for c in 0..self.channels {
            self.channel_gain(c)?;
        }
        self.crosstalk.validate()?;
        // Worst case per-slot probability: four times |g|^2.
        let g_max = (0..self.channels)
            .map(|c| self.channel_gain(c).map(|g| g.magnitude()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let worst = self.detector_efficiency * 4.0 * g_max * g_max + self.dark_count;
        if worst > 1.0 {
            return Err(Error::SlotProbability(worst));
        }
        Ok(())
    }
}

/// Exact decode probabilities of one record.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DecodeProbabilities {
    pub bit0: f64,
    pub bit1: f64,
    pub erasure: f64,
    pub inconclusive: f64,
}

impl DecodeProbabilities {
    fn from_branches(branches: &[(f64, [f64; 2])], half: u64, order: WindowOrder) -> Self {
        let h = half as f64;
        let mut first_only = 0.0;
        let mut second_only = 0.0;
        let mut erasure = 0.0;
        let mut inconclusive = 0.0;
        for &(w, [p1, p2]) in branches {
            let z1 = (h * (-p1).ln_1p()).exp();
            let z2 = (h * (-p2).ln_1p()).exp();
            first_only += w * (1.0 - z1) * z2;
            second_only += w * z1 * (1.0 - z2);
            erasure += w * z1 * z2;
            inconclusive += w * (1.0 - z1) * (1.0 - z2);
        }
        let (bit1, bit0) = match first_window_bit(order) {
            Bit::One => (first_only, second_only),
            Bit::Zero => (second_only, first_only),
        };
        Self {
            bit0,
            bit1,
            erasure,
            inconclusive,
        }
    }

    pub fn of(&self, bit: Bit) -> f64 {
        match bit {
            Bit::Zero => self.bit0,
            Bit::One => self.bit1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub channel: usize,
    pub bit_index: u64,
    pub alice_basis: Basis,
    pub bob_basis: Basis,
    pub alice_bit: Bit,
    pub counts_w1: u64,
    pub counts_w2: u64,
    /// Branch-averaged mean pair number per slot, before detection.
    pub expected_n: [f64; 2],
    /// Branch-averaged per-slot detection probability.
    pub slot_probability: [f64; 2],
    pub decode_probabilities: DecodeProbabilities,
}

impl DetectionRecord {
    pub fn matched(&self) -> bool {
        self.alice_basis == self.bob_basis
    }

    pub fn counts(&self) -> [u64; 2] {
        [self.counts_w1, self.counts_w2]
    }

    pub fn expected_counts(&self, half: u64) -> [f64; 2] {
        [half as f64 * self.slot_probability[0], half as f64 * self.slot_probability[1]]
    }
}

/// Branch tables for every (Alice basis, bit, Bob basis) of one channel.
#[derive(Debug, Clone)]
struct ChannelTable {
    branches: [[[Vec<Branch>; 2]; 2]; 2],
}

impl ChannelTable {
    fn build(config: &SessionConfig, attack: &AttackModel, channel: usize) -> Result<Self> {
        let physics = config.physics(channel)?;
        let cell = |a: Basis, bit: Bit, b: Basis| {
            bob_branches(
                attack,
                &physics,
                alice_encode(bit, a),
                bob_window_phases(b, config.window_order),
            )
        };
        let build_bob = |a: Basis, bit: Bit| -> Result<[Vec<Branch>; 2]> {
            Ok([cell(a, bit, Basis::B1)?, cell(a, bit, Basis::B2)?])
        };
        let build_bit = |a: Basis| -> Result<[[Vec<Branch>; 2]; 2]> {
            Ok([build_bob(a, Bit::Zero)?, build_bob(a, Bit::One)?])
        };
        Ok(Self {
            branches: [build_bit(Basis::B1)?, build_bit(Basis::B2)?],
        })
    }

    fn get(&self, a: Basis, bit: Bit, b: Basis) -> &[Branch] {
        &self.branches[a.index()][bit.index()][b.index()]
    }
}

struct Choice {
    alice_basis: Basis,
    bob_basis: Basis,
    alice_bit: Bit,
    rng: StreamRng,
}

fn random_basis(rng: &mut StreamRng) -> Basis {
    if rng.random::<bool>() {
        Basis::B2
    } else {
        Basis::B1
    }
}

fn draw_choice(config: &SessionConfig, channel: usize, bit_index: u64) -> Choice {
    let mut rng = rng::stream(config.master_seed, &[domain::QKD, channel as u64, bit_index]);
    let alice_bit = if rng.random::<bool>() { Bit::One } else { Bit::Zero };
    let alice_basis = random_basis(&mut rng);
    let bob_basis = random_basis(&mut rng);
    Choice {
        alice_basis,
        bob_basis,
        alice_bit,
        rng,
    }
}

fn pick_branch<'a>(branches: &'a [Branch], rng: &mut StreamRng) -> &'a Branch {
    if branches.len() == 1 {
        return &branches[0];
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for b in branches {
        acc += b.weight;
        if u < acc {
            return b;
        }
    }
    branches.last().expect("attack produced no branches")
}

fn averaged(branches: &[Branch]) -> [f64; 2] {
    branches.iter().fold([0.0; 2], |acc, b| {
        [acc[0] + b.weight * b.mean_photons[0], acc[1] + b.weight * b.mean_photons[1]]
    })
}

fn binomial(n: u64, p: f64, rng: &mut StreamRng) -> Result<u64> {
    if p <= 0.0 {
        return Ok(0);
    }
    Binomial::new(n, p)
        .map(|d| d.sample(rng))
        .map_err(|e| Error::Invalid(e.to_string()))
}

/// Precomputed per-session state shared by all bit positions.
pub struct SessionKernel<'a> {
    config: &'a SessionConfig,
    attack: AttackModel,
    tables: Vec<ChannelTable>,
    leakage: LeakageMatrix,
}

impl<'a> SessionKernel<'a> {
    pub fn new(config: &'a SessionConfig, attack: &AttackModel) -> Result<Self> {
        config.validate()?;
        attack.validate()?;
        let tables = (0..config.channels)
            .map(|c| ChannelTable::build(config, attack, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            attack: *attack,
            tables,
            leakage: config.leakage()?,
        })
    }

    /// Records of every channel at one bit position.
    pub fn simulate_position(&self, bit_index: u64) -> Result<Vec<DetectionRecord>> {
        let cfg = self.config;
        let n = cfg.channels;
        let half = cfg.half_window_slots();
        let eta = cfg.detector_efficiency;
        let mut choices: Vec<Choice> = (0..n).map(|c| draw_choice(cfg, c, bit_index)).collect();

        // Per-channel branch lists, which depend on neighbours only in the
        // phase-blur mode.
        let blur = cfg.crosstalk.mode == CrosstalkMode::PhaseBlur && !cfg.crosstalk.is_zero();
        let owned: Vec<Vec<Branch>> = if blur {
            let phases: Vec<f64> = choices
                .iter()
                .map(|ch| alice_encode(ch.alice_bit, ch.alice_basis))
                .collect();
            let blurred = blur_phases(&self.leakage, &phases)?;
            choices
                .iter()
                .enumerate()
                .map(|(c, ch)| {
                    bob_branches(
                        &self.attack,
                        &cfg.physics(c)?,
                        blurred[c],
                        bob_window_phases(ch.bob_basis, cfg.window_order),
                    )
                })
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let branches_of = |c: usize, ch: &Choice| -> &[Branch] {
            if blur {
                &owned[c]
            } else {
                self.tables[c].get(ch.alice_basis, ch.alice_bit, ch.bob_basis)
            }
        };

        let intensity_leak = cfg.crosstalk.mode == CrosstalkMode::Intensity && !cfg.crosstalk.is_zero();
        let mean_n: Vec<[f64; 2]> = choices
            .iter()
            .enumerate()
            .map(|(c, ch)| averaged(branches_of(c, ch)))
            .collect();

        let mut out = Vec::with_capacity(n);
        let sampled = cfg.mode == Mode::Sampled;
        let picked: Vec<[f64; 2]> = if sampled {
            choices
                .iter_mut()
                .enumerate()
                .map(|(c, ch)| {
                    let list = branches_of(c, ch);
                    pick_branch(list, &mut ch.rng).mean_photons
                })
                .collect()
        } else {
            Vec::new()
        };

        for (c, ch) in choices.iter_mut().enumerate() {
            let branches = branches_of(c, ch);
            // Neighbour contribution to the slot probability.
            let neighbour = |w: usize, source: &[[f64; 2]]| -> f64 {
                if !intensity_leak {
                    return 0.0;
                }
                self.leakage
                    .row(c)
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != c)
                    .map(|(k, l)| l * source[k][w])
                    .sum()
            };
            let own = if intensity_leak { self.leakage.get(c, c) } else { 1.0 };
            let slot_p = |own_n: [f64; 2], source: &[[f64; 2]]| -> Result<[f64; 2]> {
                let mut p = [0.0; 2];
                for w in 0..2 {
                    p[w] = eta * (own * own_n[w] + neighbour(w, source)) + cfg.dark_count;
                    if p[w] > 1.0 {
                        return Err(Error::SlotProbability(p[w]));
                    }
                }
                Ok(p)
            };

            let branch_p: Vec<(f64, [f64; 2])> = branches
                .iter()
                .map(|b| Ok((b.weight, slot_p(b.mean_photons, &mean_n)?)))
                .collect::<Result<_>>()?;
            let p_avg = branch_p.iter().fold([0.0; 2], |acc, (w, p)| [acc[0] + w * p[0], acc[1] + w * p[1]]);
            let decode_probabilities = DecodeProbabilities::from_branches(&branch_p, half, cfg.window_order);

            let (counts_w1, counts_w2) = if sampled {
                let p = slot_p(picked[c], &picked)?;
                (binomial(half, p[0], &mut ch.rng)?, binomial(half, p[1], &mut ch.rng)?)
            } else {
                (0, 0)
            };
            out.push(DetectionRecord {
                channel: c,
                bit_index,
                alice_basis: ch.alice_basis,
                bob_basis: ch.bob_basis,
                alice_bit: ch.alice_bit,
                counts_w1,
                counts_w2,
                expected_n: mean_n[c],
                slot_probability: p_avg,
                decode_probabilities,
            });
        }
        Ok(out)
    }
}

/// Single isolated channel bit (no crosstalk), with caller-chosen settings.
#[allow(clippy::too_many_arguments)]
pub fn simulate_bit(
    config: &SessionConfig,
    channel: usize,
    bit_index: u64,
    alice_bit: Bit,
    alice_basis: Basis,
    bob_basis: Basis,
    attack: &AttackModel,
    rng: &mut StreamRng,
) -> Result<DetectionRecord> {
    let physics = config.physics(channel)?;
    let branches = bob_branches(
        attack,
        &physics,
        alice_encode(alice_bit, alice_basis),
        bob_window_phases(bob_basis, config.window_order),
    )?;
    let half = config.half_window_slots();
    let eta = config.detector_efficiency;
    let to_p = |n: [f64; 2]| -> Result<[f64; 2]> {
        let p = [eta * n[0] + config.dark_count, eta * n[1] + config.dark_count];
        if p[0] > 1.0 || p[1] > 1.0 {
            return Err(Error::SlotProbability(p[0].max(p[1])));
        }
        Ok(p)
    };
    let branch_p: Vec<(f64, [f64; 2])> = branches
        .iter()
        .map(|b| Ok((b.weight, to_p(b.mean_photons)?)))
        .collect::<Result<_>>()?;
    let p_avg = branch_p.iter().fold([0.0; 2], |acc, (w, p)| [acc[0] + w * p[0], acc[1] + w * p[1]]);
    let (counts_w1, counts_w2) = match config.mode {
        Mode::Sampled => {
            let p = to_p(pick_branch(&branches, rng).mean_photons)?;
            (binomial(half, p[0], rng)?, binomial(half, p[1], rng)?)
        }
        Mode::Expectation => (0, 0),
    };
    Ok(DetectionRecord {
        channel,
        bit_index,
        alice_basis,
        bob_basis,
        alice_bit,
        counts_w1,
        counts_w2,
        expected_n: averaged(&branches),
        slot_probability: p_avg,
        decode_probabilities: DecodeProbabilities::from_branches(&branch_p, half, config.window_order),
    })
}

/// Expected statistics for one (Alice basis, bit) class of matched positions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct ClassSums {
    n: u64,
    constructive: f64,
    destructive: f64,
    error: f64,
    conclusive: f64,
    erasure: f64,
    inconclusive: f64,
}

impl ClassSums {
    fn merge(&mut self, o: &ClassSums) {
        self.n += o.n;
        self.constructive += o.constructive;
        self.destructive += o.destructive;
        self.error += o.error;
        self.conclusive += o.conclusive;
        self.erasure += o.erasure;
        self.inconclusive += o.inconclusive;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ChannelAccumulator {
    total: u64,
    matched: u64,
    sifted: u64,
    errors: u64,
    erasures: u64,
    inconclusive: u64,
    constructive: Moments,
    destructive: Moments,
    classes: [ClassSums; 4],
}

impl ChannelAccumulator {
    fn push(&mut self, r: &DetectionRecord, half: u64, order: WindowOrder, keys: Option<&mut (String, String)>) {
        self.total += 1;
        if !r.matched() {
            return;
        }
        self.matched += 1;
        let con = constructive_window(r.alice_bit, order);
        let counts = r.counts();
        self.constructive.push(counts[con] as f64);
        self.destructive.push(counts[1 - con] as f64);
        match differential_decode(counts, order) {
            Decoded::Erasure => self.erasures += 1,
            Decoded::Inconclusive => self.inconclusive += 1,
            d => {
                self.sifted += 1;
                let bob = d.bit().expect("conclusive decode");
                if bob != r.alice_bit {
                    self.errors += 1;
                }
                if let Some((a, b)) = keys {
                    a.push(if r.alice_bit == Bit::One { '1' } else { '0' });
                    b.push(if bob == Bit::One { '1' } else { '0' });
                }
            }
        }
        let expected = r.expected_counts(half);
        let dp = r.decode_probabilities;
        let class = &mut self.classes[r.alice_basis.index() * 2 + r.alice_bit.index()];
        class.n += 1;
        class.constructive += expected[con];
        class.destructive += expected[1 - con];
        class.error += dp.of(r.alice_bit.flipped());
        class.conclusive += dp.bit0 + dp.bit1;
        class.erasure += dp.erasure;
        class.inconclusive += dp.inconclusive;
    }

    fn merge(&mut self, o: &ChannelAccumulator) {
        self.total += o.total;
        self.matched += o.matched;
        self.sifted += o.sifted;
        self.errors += o.errors;
        self.erasures += o.erasures;
        self.inconclusive += o.inconclusive;
        self.constructive.merge(&o.constructive);
        self.destructive.merge(&o.destructive);
        for (a, b) in self.classes.iter_mut().zip(&o.classes) {
            a.merge(b);
        }
    }

    fn summarize(&self, mode: Mode) -> Summary {
        match mode {
            Mode::Sampled => {
                let m = self.matched.max(1) as f64;
                Summary {
                    qber: (self.sifted > 0).then(|| self.errors as f64 / self.sifted as f64),
                    qber_se: (self.sifted > 0).then(|| {
                        let q = self.errors as f64 / self.sifted as f64;
                        (q * (1.0 - q) / self.sifted as f64).sqrt()
                    }),
                    erasure_rate: self.erasures as f64 / m,
                    inconclusive_rate: self.inconclusive as f64 / m,
                    contrast: ContrastEstimate::from_moments(&self.constructive, &self.destructive),
                    expected_sifted: self.sifted as f64,
                }
            }
            Mode::Expectation => {
                // Equal weight per class removes the imbalance of the drawn
                // bits and bases from the ensemble averages.
                let present: Vec<&ClassSums> = self.classes.iter().filter(|c| c.n > 0).collect();
                let k = present.len().max(1) as f64;
                let avg = |f: &dyn Fn(&ClassSums) -> f64| present.iter().map(|c| f(c) / c.n as f64).sum::<f64>() / k;
                let err = avg(&|c| c.error);
                let conc = avg(&|c| c.conclusive);
                let expected_sifted: f64 = present.iter().map(|c| c.conclusive).sum();
                Summary {
                    qber: (conc > 0.0).then(|| err / conc),
                    qber_se: (conc > 0.0).then_some(0.0),
                    erasure_rate: avg(&|c| c.erasure),
                    inconclusive_rate: avg(&|c| c.inconclusive),
                    contrast: if present.is_empty() {
                        ContrastEstimate::from_moments(&Moments::default(), &Moments::default())
                    } else {
                        ContrastEstimate::exact(avg(&|c| c.constructive), avg(&|c| c.destructive))
                    },
                    expected_sifted,
                }
            }
        }
    }
}

struct Summary {
    qber: Option<f64>,
    qber_se: Option<f64>,
    erasure_rate: f64,
    inconclusive_rate: f64,
    contrast: ContrastEstimate,
    expected_sifted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub channel: usize,
    pub matched: u64,
    pub sifted: u64,
    pub qber: Option<f64>,
    pub erasure_rate: f64,
    pub inconclusive_rate: f64,
    pub contrast: ContrastEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub mode: Mode,
    pub attack: AttackModel,
    pub total_bits: u64,
    pub matched: u64,
    /// Conclusive matched positions; an expected count in expectation mode.
    pub sifted: f64,
    pub sift_fraction: f64,
    /// `None` when no position survives sifting.
    pub qber: Option<f64>,
    pub qber_se: Option<f64>,
    pub erasure_rate: f64,
    pub inconclusive_rate: f64,
    pub contrast: ContrastEstimate,
    pub channels: Vec<ChannelSummary>,
    /// Sifted keys as '0'/'1' strings (sampled mode only).
    pub sifted_key_alice: String,
    pub sifted_key_bob: String,
}

struct SessionAccumulator {
    channels: Vec<ChannelAccumulator>,
    keys: (String, String),
}

impl SessionAccumulator {
    fn new(n: usize) -> Self {
        Self {
            channels: vec![ChannelAccumulator::default(); n],
            keys: (String::new(), String::new()),
        }
    }

    fn push(&mut self, r: &DetectionRecord, config: &SessionConfig) {
        let keys = (config.mode == Mode::Sampled).then_some(&mut self.keys);
        self.channels[r.channel].push(r, config.half_window_slots(), config.window_order, keys);
    }

    fn merge(&mut self, o: SessionAccumulator) {
        for (a, b) in self.channels.iter_mut().zip(&o.channels) {
            a.merge(b);
        }
        self.keys.0.push_str(&o.keys.0);
        self.keys.1.push_str(&o.keys.1);
    }

    fn report(self, config: &SessionConfig, attack: &AttackModel) -> SessionReport {
        let mode = config.mode;
        let mut pooled = ChannelAccumulator::default();
        let channels = self
            .channels
            .iter()
            .enumerate()
            .map(|(c, acc)| {
                pooled.merge(acc);
                let s = acc.summarize(mode);
                ChannelSummary {
                    channel: c,
                    matched: acc.matched,
                    sifted: acc.sifted,
                    qber: s.qber,
                    erasure_rate: s.erasure_rate,
                    inconclusive_rate: s.inconclusive_rate,
                    contrast: s.contrast,
                }
            })
            .collect();
        let s = pooled.summarize(mode);
        SessionReport {
            mode,
            attack: *attack,
            total_bits: pooled.total,
            matched: pooled.matched,
            sifted: s.expected_sifted,
            sift_fraction: pooled.matched as f64 / pooled.total.max(1) as f64,
            qber: s.qber,
            qber_se: s.qber_se,
            erasure_rate: s.erasure_rate,
            inconclusive_rate: s.inconclusive_rate,
            contrast: s.contrast,
            channels,
            sifted_key_alice: self.keys.0,
            sifted_key_bob: self.keys.1,
        }
    }
}

/// Sift and score a set of records from one session.
pub fn sift_and_score(records: &[DetectionRecord], config: &SessionConfig, attack: &AttackModel) -> SessionReport {
    let mut acc = SessionAccumulator::new(config.channels);
    for r in records {
        acc.push(r, config);
    }
    acc.report(config, attack)
}

const POSITIONS_PER_TASK: u64 = 512;

/// Run a full session; the result depends only on the config and attack.
pub fn run_session(config: &SessionConfig, attack: &AttackModel) -> Result<SessionReport> {
    let kernel = SessionKernel::new(config, attack)?;
    let tasks = config.bits_per_channel.div_ceil(POSITIONS_PER_TASK);
    let parts: Vec<Result<SessionAccumulator>> = (0..tasks)
        .into_par_iter()
        .map(|t| {
            let mut acc = SessionAccumulator::new(config.channels);
            let end = ((t + 1) * POSITIONS_PER_TASK).min(config.bits_per_channel);
            for bit in t * POSITIONS_PER_TASK..end {
                for r in kernel.simulate_position(bit)? {
                    acc.push(&r, config);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = SessionAccumulator::new(config.channels);
    for p in parts {
        total.merge(p?);
    }
    Ok(total.report(config, attack))
}

/// All records of a session, ordered by bit position then channel.
pub fn session_records(config: &SessionConfig, attack: &AttackModel) -> Result<Vec<DetectionRecord>> {
    let kernel = SessionKernel::new(config, attack)?;
    let per: Vec<Result<Vec<DetectionRecord>>> = (0..config.bits_per_channel)
        .into_par_iter()
        .map(|bit| kernel.simulate_position(bit))
        .collect();
    let mut out = Vec::with_capacity((config.bits_per_channel as usize) * config.channels);
    for p in per {
        out.extend(p?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_map() {
        assert_eq!(alice_encode(Bit::One, Basis::B1), 0.0);
        assert_eq!(alice_encode(Bit::Zero, Basis::B1), PI);
        assert_eq!(alice_encode(Bit::Zero, Basis::B2), FRAC_PI_2);
        assert_eq!(bob_phase(Basis::B1, HalfWindow::First), 0.0);
        assert_eq!(bob_phase(Basis::B2, HalfWindow::First), FRAC_PI_2);
        assert_eq!(bob_phase(Basis::B1, HalfWindow::Second), PI);
    }

    #[test]
    fn bases_are_unbiased() {
        for bit in [Bit::Zero, Bit::One] {
            for (a, b) in [(Basis::B1, Basis::B2), (Basis::B2, Basis::B1)] {
                for w in bob_window_phases(b, WindowOrder::FlipSecond) {
                    assert!((alice_encode(bit, a) + w).cos().abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn decode_rules() {
        let o = WindowOrder::FlipSecond;
        assert_eq!(differential_decode([3, 0], o), Decoded::Bit1);
        assert_eq!(differential_decode([0, 2], o), Decoded::Bit0);
        assert_eq!(differential_decode([0, 0], o), Decoded::Erasure);
        assert_eq!(differential_decode([1, 2], o), Decoded::Inconclusive);
        assert_eq!(differential_decode([3, 0], WindowOrder::FlipFirst), Decoded::Bit0);
    }

    #[test]
    fn decode_round_trip_both_orders() {
        for order in [WindowOrder::FlipSecond, WindowOrder::FlipFirst] {
            for basis in Basis::ALL {
                for bit in [Bit::Zero, Bit::One] {
                    let phases = bob_window_phases(basis, order);
                    let con = constructive_window(bit, order);
                    assert!((alice_encode(bit, basis) + phases[con]).cos() > 0.999);
                    let mut counts = [0, 0];
                    counts[con] = 1;
                    assert_eq!(differential_decode(counts, order).bit(), Some(bit));
                }
            }
        }
    }

    fn cfg(mode: Mode) -> SessionConfig {
        SessionConfig {
            channels: 3,
            bits_per_channel: 200,
            mode,
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(SessionConfig { slots_per_bit: 3, ..cfg(Mode::Sampled) }.validate().is_err());
        assert!(SessionConfig { dark_count: 0.99, ..cfg(Mode::Sampled) }.validate().is_err());
        assert!(cfg(Mode::Sampled).validate().is_ok());
    }

    #[test]
    fn simulate_bit_examples() {
        let config = SessionConfig {
            gain: 0.005,
            slots_per_bit: 20_000,
            mode: Mode::Expectation,
            ..Default::default()
        };
        let mut rng = rng::stream(1, &[0]);
        // M 4 g^2 = 2 per bit, all in the constructive half.
        let r = simulate_bit(&config, 0, 0, Bit::One, Basis::B1, Basis::B1, &AttackModel::None, &mut rng).unwrap();
        let e = r.expected_counts(config.half_window_slots());
        assert!((e[0] - 10_000.0 * 4.0 * 0.005f64.powi(2)).abs() < 1e-12);
        assert!(e[1].abs() < 1e-15);
        let r = simulate_bit(&config, 0, 0, Bit::Zero, Basis::B1, Basis::B2, &AttackModel::None, &mut rng).unwrap();
        let e = r.expected_counts(config.half_window_slots());
        assert!((e[0] - e[1]).abs() < 1e-15);

        let dark = SessionConfig { gain: 0.0, mode: Mode::Sampled, ..Default::default() };
        let r = simulate_bit(&dark, 0, 0, Bit::One, Basis::B1, Basis::B1, &AttackModel::None, &mut rng).unwrap();
        assert_eq!(r.counts(), [0, 0]);
    }

    #[test]
    fn no_attack_sampled_is_error_free() {
        let report = run_session(&cfg(Mode::Sampled), &AttackModel::None).unwrap();
        assert_eq!(report.qber, Some(0.0));
        assert_eq!(report.sifted_key_alice, report.sifted_key_bob);
        assert!(report.sifted > 0.0);
    }

    #[test]
    fn expectation_contrast_matches_steal_formula() {
        let attack = AttackModel::Steal { reflectance: 0.5 };
        let report = run_session(&cfg(Mode::Expectation), &attack).unwrap();
        let v = report.contrast.contrast.unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        for ch in &report.channels {
            assert!((ch.contrast.contrast.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sessions_are_deterministic() {
        let a = run_session(&cfg(Mode::Sampled), &AttackModel::InterceptResend).unwrap();
        let b = run_session(&cfg(Mode::Sampled), &AttackModel::InterceptResend).unwrap();
        assert_eq!(a, b);
        let records = session_records(&cfg(Mode::Sampled), &AttackModel::InterceptResend).unwrap();
        let c = sift_and_score(&records, &cfg(Mode::Sampled), &AttackModel::InterceptResend);
        assert_eq!(a.sifted_key_bob.len(), c.sifted_key_bob.len());
        assert_eq!(a.qber, c.qber);
    }

    #[test]
    fn zero_sifted_bits_reports_undefined_qber() {
        let config = SessionConfig { gain: 0.0, ..cfg(Mode::Sampled) };
        let report = run_session(&config, &AttackModel::None).unwrap();
        assert_eq!(report.qber, None);
        assert_eq!(report.erasure_rate, 1.0);
    }
}
