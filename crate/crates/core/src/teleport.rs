//! Continuous-variable teleportation of one signal-idler channel in the
//! linearized Heisenberg picture.
//!
//! Field operators are written `a = x + i y†` and tracked as affine real
//! combinations of six independent source quadratures. Vacuum quadratures
//! have variance 1/4.

use crate::error::{Error, Result};
use crate::rng::{self, domain, StreamRng};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;
use std::ops::{Add, Mul, Neg, Sub};

/// Quadrature variance of a vacuum mode.
pub const VACUUM_VARIANCE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceLabel {
    Input,
    Opa1,
    Opa2,
}

/// One of the six independent source quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Symbol {
    InputX,
    InputY,
    Opa1X,
    Opa1Y,
    Opa2X,
    Opa2Y,
}

impl Symbol {
    pub const ALL: [Symbol; 6] = [
        Symbol::InputX,
        Symbol::InputY,
        Symbol::Opa1X,
        Symbol::Opa1Y,
        Symbol::Opa2X,
        Symbol::Opa2Y,
    ];

    pub fn x(label: SourceLabel) -> Symbol {
        match label {
            SourceLabel::Input => Symbol::InputX,
            SourceLabel::Opa1 => Symbol::Opa1X,
            SourceLabel::Opa2 => Symbol::Opa2X,
        }
    }

    pub fn y(label: SourceLabel) -> Symbol {
        match label {
            SourceLabel::Input => Symbol::InputY,
            SourceLabel::Opa1 => Symbol::Opa1Y,
            SourceLabel::Opa2 => Symbol::Opa2Y,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Affine real combination `c + sum_k a_k s_k` of source quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quadrature {
    pub coefficients: [f64; 6],
    pub constant: f64,
}

impl Quadrature {
    pub fn symbol(s: Symbol, coefficient: f64) -> Self {
        let mut q = Self::default();
        q.coefficients[s.index()] = coefficient;
        q
    }

    pub fn coefficient(&self, s: Symbol) -> f64 {
        self.coefficients[s.index()]
    }

    pub fn evaluate(&self, values: &[f64; 6]) -> f64 {
        self.constant + self.coefficients.iter().zip(values).map(|(a, v)| a * v).sum::<f64>()
    }

    /// Variance given independent symbols with the listed variances.
    pub fn variance(&self, variances: &[f64; 6]) -> f64 {
        self.coefficients.iter().zip(variances).map(|(a, v)| a * a * v).sum()
    }
}

impl Add for Quadrature {
    type Output = Quadrature;
    fn add(mut self, o: Quadrature) -> Quadrature {
        for (a, b) in self.coefficients.iter_mut().zip(o.coefficients) {
            *a += b;
        }
        self.constant += o.constant;
        self
    }
}

impl Neg for Quadrature {
    type Output = Quadrature;
    fn neg(self) -> Quadrature {
        self * -1.0
    }
}

impl Sub for Quadrature {
    type Output = Quadrature;
    fn sub(self, o: Quadrature) -> Quadrature {
        self + (-o)
    }
}

impl Mul<f64> for Quadrature {
    type Output = Quadrature;
    fn mul(mut self, k: f64) -> Quadrature {
        for a in &mut self.coefficients {
            *a *= k;
        }
        self.constant *= k;
        self
    }
}

/// Field operator `a = x + i y†` with each part an affine combination of
/// source quadratures; the constants form the classical displacement.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearQuadratureOperator {
    pub x: Quadrature,
    pub y: Quadrature,
}

impl LinearQuadratureOperator {
    pub fn new(x: Quadrature, y: Quadrature) -> Self {
        Self { x, y }
    }

    pub fn displacement(&self) -> Complex64 {
        Complex64::new(self.x.constant, self.y.constant)
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

impl Add for LinearQuadratureOperator {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for LinearQuadratureOperator {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for LinearQuadratureOperator {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    XStretched,
    YStretched,
}

/// Squeezing gain and output beamsplitter of the teleporter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeSettings {
    pub g: f64,
    pub t: f64,
    pub r: f64,
}

impl SqueezeSettings {
    /// From the transmission amplitude `t`; `r = sqrt(1 - t^2)`.
    pub fn new(g: f64, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("beamsplitter amplitude t = {t} outside [0, 1]")));
        }
        Self::checked(g, t, (1.0 - t * t).sqrt())
    }

    /// From the reflection amplitude `r`, which keeps `t` accurate when it
    /// is very close to 1.
    pub fn from_reflection(g: f64, r: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Config(format!("beamsplitter amplitude r = {r} outside [0, 1]")));
        }
        Self::checked(g, (1.0 - r * r).sqrt(), r)
    }

    fn checked(g: f64, t: f64, r: f64) -> Result<Self> {
        if !(g >= 0.0 && g.is_finite()) {
            return Err(Error::Config(format!("squeezing gain must be finite and >= 0, got {g}")));
        }
        Ok(Self { g, t, r })
    }

    /// Stretched factor `X = e^g`.
    pub fn stretched(&self) -> f64 {
        self.g.exp()
    }

    /// Squeezed factor `y = e^{-g}`.
    pub fn squeezed(&self) -> f64 {
        (-self.g).exp()
    }

    /// Displacement gain `alpha = t / r`.
    pub fn alpha(&self) -> Result<f64> {
        if self.r == 0.0 {
            return Err(Error::UndefinedShift);
        }
        Ok(self.t / self.r)
    }
}

/// `sqrt(2)(e^g x + i e^{-g} y†)` (x-stretched) or the swapped form, over
/// `label`'s own quadratures.
pub fn squeezed_source(g: f64, orientation: Orientation, label: SourceLabel) -> LinearQuadratureOperator {
    let (fx, fy) = match orientation {
        Orientation::XStretched => (g.exp(), (-g).exp()),
        Orientation::YStretched => ((-g).exp(), g.exp()),
    };
    LinearQuadratureOperator::new(
        Quadrature::symbol(Symbol::x(label), SQRT_2 * fx),
        Quadrature::symbol(Symbol::y(label), SQRT_2 * fy),
    )
}

/// Input operator `xi x_in + i eta y_in†`.
pub fn input_operator(xi: f64, eta: f64) -> LinearQuadratureOperator {
    LinearQuadratureOperator::new(
        Quadrature::symbol(Symbol::InputX, xi),
        Quadrature::symbol(Symbol::InputY, eta),
    )
}

/// `((a + b)/sqrt 2, (a - b)/sqrt 2)`.
pub fn mix_on_beamsplitter(
    a: &LinearQuadratureOperator,
    b: &LinearQuadratureOperator,
) -> (LinearQuadratureOperator, LinearQuadratureOperator) {
    ((*a + *b) * (1.0 / SQRT_2), (*a - *b) * (1.0 / SQRT_2))
}

/// Every intermediate operator of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeleportTrace {
    pub a_in: LinearQuadratureOperator,
    pub a1: LinearQuadratureOperator,
    pub a2: LinearQuadratureOperator,
    pub a3: LinearQuadratureOperator,
    pub a4: LinearQuadratureOperator,
    pub a5: LinearQuadratureOperator,
    pub a6: LinearQuadratureOperator,
    pub a7: LinearQuadratureOperator,
    pub a8: LinearQuadratureOperator,
}

pub fn teleport_trace(xi: f64, eta: f64, settings: &SqueezeSettings) -> Result<TeleportTrace> {
    let alpha = settings.alpha()?;
    let a_in = input_operator(xi, eta);
    let a1 = squeezed_source(settings.g, Orientation::XStretched, SourceLabel::Opa1);
    let a2 = squeezed_source(settings.g, Orientation::YStretched, SourceLabel::Opa2);
    let (a3, a4) = mix_on_beamsplitter(&a1, &a2);
    let (a6, a5) = mix_on_beamsplitter(&a_in, &a4);
    // Homodyne readout: x of a5 and y of a6 become classical values that
    // drive the displacement of the kept beam.
    let a7 = LinearQuadratureOperator::new(a5.x * (alpha * SQRT_2), a6.y * (alpha * SQRT_2));
    let a8 = a3 * settings.t + a7 * settings.r;
    Ok(TeleportTrace {
        a_in,
        a1,
        a2,
        a3,
        a4,
        a5,
        a6,
        a7,
        a8,
    })
}

/// Output operator of the full protocol.
pub fn teleport_symbolic(xi: f64, eta: f64, settings: &SqueezeSettings) -> Result<LinearQuadratureOperator> {
    Ok(teleport_trace(xi, eta, settings)?.a8)
}

/// Added noise per quadrature at unit transmission.
pub fn added_noise_variance(g: f64) -> f64 {
    (-2.0 * g).exp()
}

/// Gaussian input state of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianInput {
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
}

impl GaussianInput {
    pub fn coherent(x: f64, y: f64) -> Self {
        Self {
            mean: [x, y],
            covariance: [[VACUUM_VARIANCE, 0.0], [0.0, VACUUM_VARIANCE]],
        }
    }

    fn cholesky(&self) -> Result<[f64; 3]> {
        let [[a, b], [c, d]] = self.covariance;
        if (b - c).abs() > 1e-12 * (a.abs() + d.abs()).max(1.0) || a < 0.0 {
            return Err(Error::Config("input covariance must be symmetric positive semidefinite".into()));
        }
        let l11 = a.sqrt();
        let l21 = if l11 > 0.0 { b / l11 } else { 0.0 };
        let rest = d - l21 * l21;
        if rest < -1e-12 {
            return Err(Error::Config("input covariance must be symmetric positive semidefinite".into()));
        }
        Ok([l11, l21, rest.max(0.0).sqrt()])
    }
}

/// One Monte Carlo realization: the propagated classical values of every
/// stage, ending with the output quadratures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeleportSample {
    pub input: [f64; 2],
    pub output: [f64; 2],
}

fn normal(rng: &mut StreamRng, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sd * z
}

/// Propagate one draw of the six source quadratures through the protocol.
pub fn teleport_sample(
    input: &GaussianInput,
    chol: &[f64; 3],
    settings: &SqueezeSettings,
    alpha: f64,
    rng: &mut StreamRng,
) -> TeleportSample {
    let sd = VACUUM_VARIANCE.sqrt();
    let (big, small) = (settings.stretched(), settings.squeezed());
    let (z1, z2): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
    let x_in = input.mean[0] + chol[0] * z1;
    let y_in = input.mean[1] + chol[1] * z1 + chol[2] * z2;
    let a1 = [SQRT_2 * big * normal(rng, sd), SQRT_2 * small * normal(rng, sd)];
    let a2 = [SQRT_2 * small * normal(rng, sd), SQRT_2 * big * normal(rng, sd)];
    let a3 = [(a1[0] + a2[0]) / SQRT_2, (a1[1] + a2[1]) / SQRT_2];
    let a4 = [(a1[0] - a2[0]) / SQRT_2, (a1[1] - a2[1]) / SQRT_2];
    let m_x = (x_in - a4[0]) / SQRT_2;
    let m_y = (y_in + a4[1]) / SQRT_2;
    let a7 = [alpha * SQRT_2 * m_x, alpha * SQRT_2 * m_y];
    let out = [settings.t * a3[0] + settings.r * a7[0], settings.t * a3[1] + settings.r * a7[1]];
    TeleportSample {
        input: [x_in, y_in],
        output: out,
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments2 {
    n: u64,
    sum: [f64; 2],
    outer: [[f64; 2]; 2],
}

impl Moments2 {
    fn push(&mut self, v: [f64; 2]) {
        self.n += 1;
        for i in 0..2 {
            self.sum[i] += v[i];
            for j in 0..2 {
                self.outer[i][j] += v[i] * v[j];
            }
        }
    }

    fn merge(&mut self, o: &Moments2) {
        self.n += o.n;
        for i in 0..2 {
            self.sum[i] += o.sum[i];
            for j in 0..2 {
                self.outer[i][j] += o.outer[i][j];
            }
        }
    }

    fn mean(&self) -> [f64; 2] {
        let n = self.n as f64;
        [self.sum[0] / n, self.sum[1] / n]
    }

    fn covariance(&self) -> [[f64; 2]; 2] {
        let n = self.n as f64;
        let m = self.mean();
        let mut c = [[0.0; 2]; 2];
        if self.n < 2 {
            return c;
        }
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = (self.outer[i][j] - n * m[i] * m[j]) / (n - 1.0);
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeleportStats {
    pub samples: u64,
    pub input_mean: [f64; 2],
    pub input_covariance: [[f64; 2]; 2],
    pub output_mean: [f64; 2],
    pub output_covariance: [[f64; 2]; 2],
    pub output_mean_se: [f64; 2],
    /// `Var(out - in)` per quadrature.
    pub added_noise: [f64; 2],
    /// Approximate standard error of `added_noise` (Gaussian).
    pub added_noise_se: [f64; 2],
    /// `Var(out) - Var(in)` per quadrature.
    pub added_noise_naive: [f64; 2],
}

const SAMPLES_PER_BLOCK: u64 = 4096;

/// Gaussian Monte Carlo of the protocol with per-block RNG streams.
pub fn teleport_monte_carlo(
    input: &GaussianInput,
    settings: &SqueezeSettings,
    n_samples: u64,
    seed: u64,
) -> Result<TeleportStats> {
    if n_samples == 0 {
        return Err(Error::Config("teleportation Monte Carlo needs at least one sample".into()));
    }
    let alpha = settings.alpha()?;
    let chol = input.cholesky()?;
    let blocks = n_samples.div_ceil(SAMPLES_PER_BLOCK);
    let parts: Vec<(Moments2, Moments2, Moments2)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, &[domain::TELEPORT, b]);
            let mut m_in = Moments2::default();
            let mut m_out = Moments2::default();
            let mut m_diff = Moments2::default();
            let end = ((b + 1) * SAMPLES_PER_BLOCK).min(n_samples);
            for _ in b * SAMPLES_PER_BLOCK..end {
                let s = teleport_sample(input, &chol, settings, alpha, &mut rng);
                m_in.push(s.input);
                m_out.push(s.output);
                m_diff.push([s.output[0] - s.input[0], s.output[1] - s.input[1]]);
            }
            (m_in, m_out, m_diff)
        })
        .collect();
    let (mut m_in, mut m_out, mut m_diff) = (Moments2::default(), Moments2::default(), Moments2::default());
    for (a, b, c) in &parts {
        m_in.merge(a);
        m_out.merge(b);
        m_diff.merge(c);
    }
    let n = n_samples as f64;
    let ci = m_in.covariance();
    let co = m_out.covariance();
    let cd = m_diff.covariance();
    Ok(TeleportStats {
        samples: n_samples,
        input_mean: m_in.mean(),
        input_covariance: ci,
        output_mean: m_out.mean(),
        output_covariance: co,
        output_mean_se: [(co[0][0] / n).sqrt(), (co[1][1] / n).sqrt()],
        added_noise: [cd[0][0], cd[1][1]],
        added_noise_se: [cd[0][0] * (2.0 / (n - 1.0).max(1.0)).sqrt(), cd[1][1] * (2.0 / (n - 1.0).max(1.0)).sqrt()],
        added_noise_naive: [co[0][0] - ci[0][0], co[1][1] - ci[1][1]],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn source_examples() {
        let s = squeezed_source(0.0, Orientation::XStretched, SourceLabel::Opa1);
        assert!((s.x.coefficient(Symbol::Opa1X) - SQRT_2).abs() < 1e-15);
        let s = squeezed_source(1.0, Orientation::XStretched, SourceLabel::Opa1);
        assert!((s.x.coefficient(Symbol::Opa1X) - SQRT_2 * 1f64.exp()).abs() < 1e-15);
        assert!((s.y.coefficient(Symbol::Opa1Y) - SQRT_2 / 1f64.exp()).abs() < 1e-15);
        let t = squeezed_source(1.0, Orientation::YStretched, SourceLabel::Opa1);
        assert_eq!(t.x.coefficient(Symbol::Opa1X), s.y.coefficient(Symbol::Opa1Y));
    }

    #[test]
    fn mixing_examples() {
        let a = squeezed_source(0.7, Orientation::XStretched, SourceLabel::Opa1);
        assert!(mix_on_beamsplitter(&a, &a).1.x.coefficients.iter().all(|&c| c.abs() < 1e-15));
        let g = 1.3;
        let a1 = squeezed_source(g, Orientation::XStretched, SourceLabel::Opa1);
        let a2 = squeezed_source(g, Orientation::YStretched, SourceLabel::Opa2);
        let (a3, _) = mix_on_beamsplitter(&a1, &a2);
        let total: f64 = a3.x.coefficients.iter().sum();
        assert!((total - (g.exp() + (-g).exp())).abs() < 1e-12);
    }

    #[test]
    fn symbolic_output_form() {
        let s = SqueezeSettings::new(0.8, 0.95).unwrap();
        let out = teleport_symbolic(1.3, -0.4, &s).unwrap();
        let y = (-0.8f64).exp();
        assert!((out.x.coefficient(Symbol::InputX) - 0.95 * 1.3).abs() < 1e-12);
        assert!((out.x.coefficient(Symbol::Opa2X) - 0.95 * 2.0 * y).abs() < 1e-12);
        assert!((out.y.coefficient(Symbol::InputY) + 0.95 * 0.4).abs() < 1e-12);
        assert!((out.y.coefficient(Symbol::Opa1Y) - 0.95 * 2.0 * y).abs() < 1e-12);
        for sym in [Symbol::InputY, Symbol::Opa1X, Symbol::Opa1Y, Symbol::Opa2Y] {
            assert!(out.x.coefficient(sym).abs() < 1e-12);
        }
    }

    #[test]
    fn vacuum_input_leaves_residual_noise() {
        let s = SqueezeSettings::new(0.5, 0.9).unwrap();
        let out = teleport_symbolic(0.0, 0.0, &s).unwrap();
        let y = (-0.5f64).exp();
        assert!((out.x.variance(&[0.25; 6]) - 4.0 * 0.81 * y * y * 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_reflection_is_rejected() {
        let s = SqueezeSettings::new(1.0, 1.0).unwrap();
        assert_eq!(teleport_symbolic(1.0, 1.0, &s).unwrap_err(), Error::UndefinedShift);
    }

    #[test]
    fn added_noise_values() {
        assert_eq!(added_noise_variance(0.0), 1.0);
        assert!((added_noise_variance(1.0) - 0.13534).abs() < 1e-5);
        assert!(added_noise_variance(50.0) < 1e-40);
    }

    #[test]
    fn settings_invariants() {
        let s = SqueezeSettings::new(2.5, 0.99).unwrap();
        assert!((s.stretched() * s.squeezed() - 1.0).abs() < 1e-15);
        assert!((s.t * s.t + s.r * s.r - 1.0).abs() < 1e-15);
        assert!(SqueezeSettings::new(-1.0, 0.5).is_err());
    }

    #[test]
    fn monte_carlo_small_run() {
        let s = SqueezeSettings::new(1.0, 0.999).unwrap();
        let stats = teleport_monte_carlo(&GaussianInput::coherent(1.0, 0.0), &s, 20_000, 5).unwrap();
        assert!((stats.output_mean[0] - 0.999).abs() < 4.0 * stats.output_mean_se[0]);
        let expect = 0.999f64.powi(2) * added_noise_variance(1.0);
        assert!((stats.added_noise[0] - expect).abs() < 0.05 * expect);
    }

    proptest! {
        #[test]
        fn symbolic_matches_closed_form(
            xi in -3.0f64..3.0,
            eta in -3.0f64..3.0,
            g in 0.0f64..5.0,
            t in 0.05f64..0.999,
        ) {
            let s = SqueezeSettings::new(g, t).unwrap();
            let out = teleport_symbolic(xi, eta, &s).unwrap();
            let y = (-g).exp();
            let mut ex = Quadrature::symbol(Symbol::InputX, t * xi);
            ex.coefficients[Symbol::Opa2X.index()] = 2.0 * t * y;
            let mut ey = Quadrature::symbol(Symbol::InputY, t * eta);
            ey.coefficients[Symbol::Opa1Y.index()] = 2.0 * t * y;
            for k in 0..6 {
                prop_assert!((out.x.coefficients[k] - ex.coefficients[k]).abs() < 1e-12 * (1.0 + g.exp()));
                prop_assert!((out.y.coefficients[k] - ey.coefficients[k]).abs() < 1e-12 * (1.0 + g.exp()));
            }
            prop_assert_eq!(out.displacement(), Complex64::new(0.0, 0.0));
        }

        #[test]
        fn added_noise_decreasing(a in 0.0f64..20.0, d in 1e-3f64..5.0) {
            prop_assert!(added_noise_variance(a + d) < added_noise_variance(a));
        }
    }
}
