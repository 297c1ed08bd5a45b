//! Channel grid, crosstalk and optics calculators for the multiplexed layer.

use crate::error::{Error, Result};
use crate::quantum::{ComplexGain, GAIN_HARD_LIMIT};
use crate::rng::{self, domain};
use crate::stats::Moments;
use num_complex::Complex64;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const CAPACITY_TOLERANCE: f64 = 1e-9;

/// Number of channels of pitch `width + gap` fitting in `span`.
pub fn capacity(span: f64, width: f64, gap: f64) -> usize {
    let pitch = width + gap;
    if !(span > 0.0 && pitch > 0.0) {
        return 0;
    }
    (span / pitch + CAPACITY_TOLERANCE).floor() as usize
}

/// Spectral gain profile across the SPDC band.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GainEnvelope {
    #[default]
    Flat,
    /// `g(w) = g0 (1 - depth (1 - cos(pi w / w_max)) / 2)`.
    RaisedCosine { depth: f64 },
}

impl GainEnvelope {
    pub fn factor(&self, detuning: f64, half_band: f64) -> f64 {
        match *self {
            GainEnvelope::Flat => 1.0,
            GainEnvelope::RaisedCosine { depth } => {
                let x = (detuning / half_band).clamp(0.0, 1.0);
                1.0 - depth * (1.0 - (PI * x).cos()) / 2.0
            }
        }
    }
}

/// Named SPDC bandwidth presets.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthPreset {
    #[default]
    Nm150,
    Nm100,
}

impl BandwidthPreset {
    pub fn meters(self) -> f64 {
        match self {
            BandwidthPreset::Nm150 => 150e-9,
            BandwidthPreset::Nm100 => 100e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Usable modulator span, m.
    pub span: f64,
    pub channel_width: f64,
    pub channel_gap: f64,
    /// Requested channel count; `None` fills the span.
    pub n_channels: Option<usize>,
    pub center_wavelength: f64,
    pub bandwidth: BandwidthPreset,
    /// Overrides the preset when set, m.
    pub bandwidth_m: Option<f64>,
    pub gain: f64,
    pub envelope: GainEnvelope,
    /// Quadratic dispersion coefficient: `theta(w) = kappa w^2`, rad s^2.
    pub dispersion: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            span: 3.68e-3,
            channel_width: 130e-6,
            channel_gap: 30e-6,
            n_channels: None,
            center_wavelength: 1560e-9,
            bandwidth: BandwidthPreset::default(),
            bandwidth_m: None,
            gain: 0.1,
            envelope: GainEnvelope::Flat,
            dispersion: 0.0,
        }
    }
}

impl GridConfig {
    pub fn bandwidth_meters(&self) -> f64 {
        self.bandwidth_m.unwrap_or(self.bandwidth.meters())
    }

    /// Half of the SPDC band in angular detuning, rad/s.
    pub fn half_band(&self) -> f64 {
        let l = self.center_wavelength;
        0.5 * 2.0 * PI * SPEED_OF_LIGHT * self.bandwidth_meters() / (l * l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub index: usize,
    /// Detuning from half the pump frequency, rad/s.
    pub detuning: f64,
    pub gain: f64,
    /// Phase-sum offset from dispersion, rad.
    pub dispersion_phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGrid {
    pub channels: Vec<Channel>,
    pub channel_width: f64,
    pub channel_gap: f64,
    pub span: f64,
    pub half_band: f64,
    pub dispersion: f64,
}

impl ChannelGrid {
    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Angular detuning spacing between adjacent channel centres.
    pub fn spacing(&self) -> f64 {
        self.half_band / self.channels.len().max(1) as f64
    }

    /// Angular bandwidth of one channel (its share of the pitch).
    pub fn channel_bandwidth(&self) -> f64 {
        self.spacing() * self.channel_width / (self.channel_width + self.channel_gap)
    }

    pub fn gains(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.gain).collect()
    }
}

pub fn build_grid(config: &GridConfig) -> Result<ChannelGrid> {
    let GridConfig {
        span,
        channel_width: width,
        channel_gap: gap,
        ..
    } = *config;
    if !(span > 0.0 && width > 0.0 && gap >= 0.0) {
        return Err(Error::Config(format!(
            "grid needs positive span and width and non-negative gap (span {span}, width {width}, gap {gap})"
        )));
    }
    if !(config.center_wavelength > 0.0 && config.bandwidth_meters() > 0.0) {
        return Err(Error::Config("wavelength and bandwidth must be positive".into()));
    }
    ComplexGain::real(config.gain)?;
    let cap = capacity(span, width, gap);
    let n = config.n_channels.unwrap_or(cap);
    if n > cap {
        return Err(Error::ChannelOverlap {
            requested: n,
            pitch: width + gap,
            span,
        });
    }
    if n == 0 {
        return Err(Error::Config("grid has no channels".into()));
    }
    let half_band = config.half_band();
    let channels = (0..n)
        .map(|c| {
            let detuning = (c as f64 + 0.5) * half_band / n as f64;
            let gain = (config.gain * config.envelope.factor(detuning, half_band)).min(GAIN_HARD_LIMIT);
            Channel {
                index: c,
                detuning,
                gain,
                dispersion_phase: config.dispersion * detuning * detuning,
            }
        })
        .collect();
    Ok(ChannelGrid {
        channels,
        channel_width: width,
        channel_gap: gap,
        span,
        half_band,
        dispersion: config.dispersion,
    })
}

/// How leakage between neighbouring channels acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrosstalkMode {
    /// Measured intensity mixes with neighbours' intensities.
    #[default]
    Intensity,
    /// Encoded phase is replaced by the argument of the leakage-weighted
    /// phasor sum of neighbouring phases.
    PhaseBlur,
}

/// Nearest-neighbour leakage with fractions into channel `c` from `c - 1`
/// (`left`) and from `c + 1` (`right`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrosstalkModel {
    pub left: f64,
    pub right: f64,
    pub mode: CrosstalkMode,
}

impl CrosstalkModel {
    pub fn symmetric(eps: f64) -> Self {
        Self {
            left: eps,
            right: eps,
            mode: CrosstalkMode::Intensity,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.left == 0.0 && self.right == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.left >= 0.0 && self.right >= 0.0 && self.left + self.right <= 1.0) {
            return Err(Error::Config(format!(
                "leakage fractions must be non-negative with sum <= 1 (left {}, right {})",
                self.left, self.right
            )));
        }
        Ok(())
    }

    pub fn matrix(&self, n: usize) -> Result<LeakageMatrix> {
        self.validate()?;
        let mut rows = vec![vec![0.0; n]; n];
        for (c, row) in rows.iter_mut().enumerate() {
            let mut off = 0.0;
            if c > 0 {
                row[c - 1] = self.left;
                off += self.left;
            }
            if c + 1 < n {
                row[c + 1] = self.right;
                off += self.right;
            }
            row[c] = 1.0 - off;
        }
        LeakageMatrix::from_rows(rows)
    }
}

/// Row-stochastic leakage matrix `L`; measured `I~ = L I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageMatrix {
    rows: Vec<Vec<f64>>,
}

impl LeakageMatrix {
    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            let s: f64 = row.iter().sum();
            if row.iter().any(|&x| !(x >= 0.0)) || (s - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "leakage row {i} must be non-negative and sum to 1 (sum {s})"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }
}

pub fn apply_crosstalk(model: &LeakageMatrix, intensities: &[f64]) -> Result<Vec<f64>> {
    if intensities.len() != model.len() {
        return Err(Error::DimensionMismatch {
            expected: model.len(),
            got: intensities.len(),
        });
    }
    if let Some(bad) = intensities.iter().find(|&&x| !(x >= 0.0)) {
        return Err(Error::Invalid(format!("negative intensity {bad}")));
    }
    Ok(model
        .rows
        .iter()
        .map(|row| row.iter().zip(intensities).map(|(l, i)| l * i).sum())
        .collect())
}

/// Phase-blur variant: channel `c` carries `arg(sum_k L_ck e^{i phi_k})`.
pub fn blur_phases(model: &LeakageMatrix, phases: &[f64]) -> Result<Vec<f64>> {
    if phases.len() != model.len() {
        return Err(Error::DimensionMismatch {
            expected: model.len(),
            got: phases.len(),
        });
    }
    Ok(model
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .zip(phases)
                .map(|(l, p)| Complex64::from_polar(*l, *p))
                .sum::<Complex64>()
                .arg()
        })
        .collect())
}

/// Intensity samples of one channel over a full factorial `(phi_1, phi_2)`
/// grid, stored row-major with `phi_1` as the slow index.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGridSamples {
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub cells: Vec<Moments>,
}

impl PhaseGridSamples {
    pub fn new(phi1: Vec<f64>, phi2: Vec<f64>) -> Self {
        let cells = vec![Moments::default(); phi1.len() * phi2.len()];
        Self { phi1, phi2, cells }
    }

    pub fn from_values(phi1: Vec<f64>, phi2: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::new(phi1, phi2);
        for i in 0..out.phi1.len() {
            for j in 0..out.phi2.len() {
                let v = f(out.phi1[i], out.phi2[j]);
                out.cell_mut(i, j).push(v);
            }
        }
        out
    }

    pub fn cell(&self, i: usize, j: usize) -> &Moments {
        &self.cells[i * self.phi2.len() + j]
    }

    pub fn cell_mut(&mut self, i: usize, j: usize) -> &mut Moments {
        let n2 = self.phi2.len();
        &mut self.cells[i * n2 + j]
    }
}

/// `Err(phi_2)` curve with one-sigma uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub phi: Vec<f64>,
    pub err: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl ErrorCurve {
    pub fn amplitude(&self) -> f64 {
        self.err.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    /// Uncertainty of the point that sets the amplitude.
    pub fn amplitude_sigma(&self) -> f64 {
        self.err
            .iter()
            .zip(&self.sigma)
            .fold((0.0f64, 0.0), |(m, s), (e, sg)| if e.abs() > m { (e.abs(), *sg) } else { (m, s) })
            .1
    }
}

/// `Err(phi_2) = < I(phi_1, phi_2) - <I(phi_1, .)>_{phi_2} >_{phi_1}`.
pub fn crosstalk_error_metric(samples: &PhaseGridSamples) -> Result<ErrorCurve> {
    let (n1, n2) = (samples.phi1.len(), samples.phi2.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::Invalid("empty phase grid".into()));
    }
    let mut mean = vec![0.0; n1 * n2];
    let mut var = vec![0.0; n1 * n2];
    for i in 0..n1 {
        for j in 0..n2 {
            let c = samples.cell(i, j);
            let m = c
                .mean()
                .ok_or(Error::IncompleteGrid(samples.phi1[i], samples.phi2[j]))?;
            mean[i * n2 + j] = m;
            var[i * n2 + j] = c.sem().map_or(0.0, |s| s * s);
        }
    }
    let k = 1.0 / n2 as f64;
    let mut err = vec![0.0; n2];
    let mut sigma = vec![0.0; n2];
    for j in 0..n2 {
        let mut e = 0.0;
        let mut v = 0.0;
        for i in 0..n1 {
            let row = &mean[i * n2..(i + 1) * n2];
            let row_mean = row.iter().sum::<f64>() * k;
            e += row[j] - row_mean;
            for jj in 0..n2 {
                let coef = if jj == j { 1.0 - k } else { -k };
                v += coef * coef * var[i * n2 + jj];
            }
        }
        err[j] = e / n1 as f64;
        sigma[j] = v.sqrt() / n1 as f64;
    }
    Ok(ErrorCurve {
        phi: samples.phi2.clone(),
        err,
        sigma,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrosstalkScanConfig {
    pub leak: CrosstalkModel,
    pub phase_points: usize,
    pub shots_per_point: u64,
    pub gain: f64,
    pub slots_per_shot: u64,
    pub detector_efficiency: f64,
}

impl Default for CrosstalkScanConfig {
    fn default() -> Self {
        Self {
            leak: CrosstalkModel::default(),
            phase_points: 8,
            shots_per_point: 200,
            gain: 0.1,
            slots_per_shot: 10_000,
            detector_efficiency: 1.0,
        }
    }
}

/// Error curves of a two-channel scan: channel 1 against `phi_2` and
/// channel 2 against `phi_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkScan {
    pub err1_vs_phi2: ErrorCurve,
    pub err2_vs_phi1: ErrorCurve,
}

/// Sample both channels' photon counts over the phase grid with the
/// configured leakage applied to intensities.
pub fn crosstalk_scan(config: &CrosstalkScanConfig, seed: u64) -> Result<CrosstalkScan> {
    let gain = ComplexGain::real(config.gain)?;
    let g2 = gain.magnitude().powi(2);
    let l = config.leak.matrix(2)?;
    let n = config.phase_points.max(1);
    let phases: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
    let intensity = |phi: f64| g2 * (2.0 + 2.0 * phi.cos());

    let cells: Vec<Result<(Moments, Moments)>> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let raw = [intensity(phases[i]), intensity(phases[j])];
            let (p1, p2) = match config.leak.mode {
                CrosstalkMode::Intensity => {
                    let m = apply_crosstalk(&l, &raw)?;
                    (m[0], m[1])
                }
                CrosstalkMode::PhaseBlur => {
                    let b = blur_phases(&l, &[phases[i], phases[j]])?;
                    (intensity(b[0]), intensity(b[1]))
                }
            };
            let eta = config.detector_efficiency;
            let (p1, p2) = (eta * p1, eta * p2);
            if p1 > 1.0 || p2 > 1.0 {
                return Err(Error::SlotProbability(p1.max(p2)));
            }
            let d1 = Binomial::new(config.slots_per_shot, p1).map_err(|e| Error::Invalid(e.to_string()))?;
            let d2 = Binomial::new(config.slots_per_shot, p2).map_err(|e| Error::Invalid(e.to_string()))?;
            let mut rng = rng::stream(seed, &[domain::CROSSTALK, idx as u64]);
            let mut a = Moments::default();
            let mut b = Moments::default();
            for _ in 0..config.shots_per_point {
                a.push(d1.sample(&mut rng) as f64);
                b.push(d2.sample(&mut rng) as f64);
            }
            Ok((a, b))
        })
        .collect();

    let mut ch1 = PhaseGridSamples::new(phases.clone(), phases.clone());
    let mut ch2 = PhaseGridSamples::new(phases.clone(), phases.clone());
    for (idx, cell) in cells.into_iter().enumerate() {
        let (a, b) = cell?;
        let (i, j) = (idx / n, idx % n);
        *ch1.cell_mut(i, j) = a;
        // Channel 2's curve runs over phi_1, so its own phase is the slow axis.
        *ch2.cell_mut(j, i) = b;
    }
    Ok(CrosstalkScan {
        err1_vs_phi2: crosstalk_error_metric(&ch1)?,
        err2_vs_phi1: crosstalk_error_metric(&ch2)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsInput {
    /// Modulator pixel pitch, m.
    pub pixel_pitch: f64,
    /// Beam diameter on the grating, m.
    pub aperture: f64,
    pub wavelength: f64,
    /// Modulator span, m.
    pub span: f64,
    /// Detuning to be mapped to the span edge, rad/s.
    pub omega: f64,
    /// Pump angular frequency, rad/s.
    pub omega_pump: f64,
    #[serde(default = "default_width")]
    pub channel_width: f64,
    #[serde(default = "default_gap")]
    pub channel_gap: f64,
}

fn default_width() -> f64 {
    130e-6
}

fn default_gap() -> f64 {
    30e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticsDesign {
    pub focal_length: f64,
    pub grating_period: f64,
    pub capacity: usize,
}

pub fn design_optics(input: &OpticsInput) -> Result<OpticsDesign> {
    let OpticsInput {
        pixel_pitch,
        aperture,
        wavelength,
        span,
        omega,
        omega_pump,
        channel_width,
        channel_gap,
    } = *input;
    for (name, v) in [
        ("pixel pitch", pixel_pitch),
        ("aperture", aperture),
        ("wavelength", wavelength),
        ("span", span),
        ("pump frequency", omega_pump),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    if aperture <= span {
        return Err(Error::Config(format!(
            "aperture {aperture} m must exceed span {span} m to capture the full angular spectrum"
        )));
    }
    let half_pump = omega_pump / 2.0;
    if !(omega >= 0.0) || omega >= half_pump {
        return Err(Error::InvalidDetuning { omega, half_pump });
    }
    let focal_length = 0.4 * pixel_pitch * aperture / wavelength;
    let grating_period = (focal_length / span) * 4.0 * omega * PI * SPEED_OF_LIGHT
        / (omega_pump * omega_pump / 4.0 - omega * omega);
    Ok(OpticsDesign {
        focal_length,
        grating_period,
        capacity: capacity(span, channel_width, channel_gap),
    })
}

/// `|<e^{i kappa w^2}>|` over `[center - half_width, center + half_width]`.
pub fn band_contrast_multiplier(kappa: f64, center: f64, half_width: f64) -> f64 {
    const SAMPLES: usize = 513;
    if kappa == 0.0 || half_width == 0.0 {
        return 1.0;
    }
    // Composite Simpson over the band.
    let h = 2.0 * half_width / (SAMPLES - 1) as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..SAMPLES {
        let w = center - half_width + k as f64 * h;
        let weight = if k == 0 || k == SAMPLES - 1 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += Complex64::from_polar(weight, kappa * w * w);
    }
    (acc * h / 3.0 / (2.0 * half_width)).norm().min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compensation {
    pub grid: ChannelGrid,
    /// Contrast multiplier left by the intra-channel phase variation.
    pub residual_multiplier: Vec<f64>,
}

/// Subtract calibrated per-channel phase offsets and report the residual
/// intra-channel contrast loss.
pub fn dispersion_compensate(grid: &ChannelGrid, measured: &[f64]) -> Result<Compensation> {
    if measured.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: measured.len(),
        });
    }
    let mut out = grid.clone();
    for (c, m) in out.channels.iter_mut().zip(measured) {
        c.dispersion_phase -= m;
    }
    let half = grid.channel_bandwidth() / 2.0;
    let residual_multiplier = grid
        .channels
        .iter()
        .map(|c| band_contrast_multiplier(grid.dispersion, c.detuning, half))
        .collect();
    Ok(Compensation {
        grid: out,
        residual_multiplier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_grid_has_23_channels() {
        let grid = build_grid(&GridConfig::default()).unwrap();
        assert_eq!(grid.len(), 23);
        assert!(grid.channels.iter().all(|c| c.dispersion_phase == 0.0));
        let one = build_grid(&GridConfig {
            n_channels: Some(1),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(one.len(), 1);
        assert!(matches!(
            build_grid(&GridConfig {
                n_channels: Some(24),
                ..Default::default()
            }),
            Err(Error::ChannelOverlap { requested: 24, .. })
        ));
    }

    #[test]
    fn envelope_rolls_off() {
        let grid = build_grid(&GridConfig {
            envelope: GainEnvelope::RaisedCosine { depth: 0.5 },
            ..Default::default()
        })
        .unwrap();
        let g = grid.gains();
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert!(g[0] <= 0.1 && g[22] > 0.05);
    }

    #[test]
    fn crosstalk_matrix_rows() {
        let m = CrosstalkModel { left: 0.02, right: 0.1, mode: CrosstalkMode::Intensity }
            .matrix(5)
            .unwrap();
        for i in 0..5 {
            let s: f64 = m.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.get(2, 1), 0.02);
        assert_eq!(m.get(2, 3), 0.1);
        assert_eq!(m.get(0, 3), 0.0);
        assert!(apply_crosstalk(&m, &[1.0; 4]).is_err());
        let i = [0.3, 0.1, 0.5];
        assert_eq!(apply_crosstalk(&LeakageMatrix::identity(3), &i).unwrap(), i.to_vec());
    }

    #[test]
    fn right_leak_couples_channel_two_into_one() {
        let m = CrosstalkModel { left: 0.0, right: 0.1, mode: CrosstalkMode::Intensity }
            .matrix(2)
            .unwrap();
        let lo = apply_crosstalk(&m, &[1.0, 0.0]).unwrap()[0];
        let hi = apply_crosstalk(&m, &[1.0, 4.0]).unwrap()[0];
        assert!(hi > lo);
    }

    #[test]
    fn metric_of_exact_fields() {
        let phases: Vec<f64> = (0..6).map(|k| k as f64).collect();
        let flat = PhaseGridSamples::from_values(phases.clone(), phases.clone(), |_, _| 2.0);
        assert!(crosstalk_error_metric(&flat).unwrap().err.iter().all(|&e| e == 0.0));
        let own = PhaseGridSamples::from_values(phases.clone(), phases.clone(), |a, _| a.cos());
        assert!(crosstalk_error_metric(&own).unwrap().amplitude() < 1e-15);
        let leak = PhaseGridSamples::from_values(phases.clone(), phases.clone(), |a, b| a.cos() + 0.1 * b.cos());
        let curve = crosstalk_error_metric(&leak).unwrap();
        let mean_cos = phases.iter().map(|p| p.cos()).sum::<f64>() / 6.0;
        for (j, p) in phases.iter().enumerate() {
            assert!((curve.err[j] - 0.1 * (p.cos() - mean_cos)).abs() < 1e-14);
        }
    }

    #[test]
    fn incomplete_grid_rejected() {
        let mut s = PhaseGridSamples::new(vec![0.0, 1.0], vec![0.0, 2.0]);
        s.cell_mut(0, 0).push(1.0);
        s.cell_mut(0, 1).push(1.0);
        s.cell_mut(1, 0).push(1.0);
        assert_eq!(crosstalk_error_metric(&s).unwrap_err(), Error::IncompleteGrid(1.0, 2.0));
    }

    fn optics() -> OpticsInput {
        OpticsInput {
            pixel_pitch: 10e-6,
            aperture: 10e-3,
            wavelength: 1.56e-6,
            span: 3.68e-3,
            omega: 1.0e14,
            omega_pump: 2.4e15,
            channel_width: 130e-6,
            channel_gap: 30e-6,
        }
    }

    #[test]
    fn optics_examples() {
        let d = design_optics(&optics()).unwrap();
        assert!((d.focal_length - 0.0256410256).abs() < 1e-9);
        assert_eq!(d.capacity, 23);
        let oracle = (d.focal_length / 3.68e-3) * 4.0e14 * PI * SPEED_OF_LIGHT / (2.4e15f64.powi(2) / 4.0 - 1e28);
        assert!((d.grating_period - oracle).abs() < 1e-18);
        let doubled = design_optics(&OpticsInput { pixel_pitch: 20e-6, ..optics() }).unwrap();
        assert!((doubled.focal_length - 2.0 * d.focal_length).abs() < 1e-15);
        assert!(matches!(
            design_optics(&OpticsInput { omega: 1.2e15, ..optics() }),
            Err(Error::InvalidDetuning { .. })
        ));
        assert!(design_optics(&OpticsInput { aperture: 1e-3, ..optics() }).is_err());
    }

    #[test]
    fn dispersion_compensation() {
        let cfg = GridConfig { dispersion: 1e-28, ..Default::default() };
        let grid = build_grid(&cfg).unwrap();
        let measured: Vec<f64> = grid.channels.iter().map(|c| c.dispersion_phase).collect();
        let comp = dispersion_compensate(&grid, &measured).unwrap();
        assert!(comp.grid.channels.iter().all(|c| c.dispersion_phase.abs() < 1e-12));

        let flat = build_grid(&GridConfig::default()).unwrap();
        let none = dispersion_compensate(&flat, &vec![0.0; 23]).unwrap();
        assert_eq!(none.grid, flat);
        assert!(none.residual_multiplier.iter().all(|&m| m == 1.0));
        assert!(dispersion_compensate(&flat, &[0.0]).is_err());
    }

    #[test]
    fn large_intra_band_phase_reduces_contrast() {
        // Phase rising by pi across [0, w]: kappa w^2 = pi.
        let w = 1.0e12;
        let kappa = PI / (w * w);
        let m = band_contrast_multiplier(kappa, w / 2.0, w / 2.0);
        assert!(m < 0.9 && m > 0.0);
        // Fresnel-type oracle by brute-force midpoint sum.
        let n = 200_000;
        let s: Complex64 = (0..n)
            .map(|k| {
                let x = (k as f64 + 0.5) / n as f64 * w;
                Complex64::from_polar(1.0, kappa * x * x)
            })
            .sum();
        assert!((m - (s / n as f64).norm()).abs() < 1e-8);
    }

    #[test]
    fn zero_leak_scan_is_quiet() {
        let cfg = CrosstalkScanConfig { shots_per_point: 50, ..Default::default() };
        let scan = crosstalk_scan(&cfg, 3).unwrap();
        for (e, s) in scan.err1_vs_phi2.err.iter().zip(&scan.err1_vs_phi2.sigma) {
            assert!(e.abs() < 5.0 * s);
        }
    }

    proptest! {
        #[test]
        fn capacity_monotone(span in 1e-4f64..1e-2, pitch in 1e-5f64..1e-3, extra in 0.0f64..1e-3) {
            prop_assert!(capacity(span, pitch + extra, 0.0) <= capacity(span, pitch, 0.0));
            prop_assert!(capacity(span + extra, pitch, 0.0) >= capacity(span, pitch, 0.0));
        }

        #[test]
        fn symmetric_leak_preserves_total(eps in 0.0f64..0.5, i in proptest::collection::vec(0.0f64..10.0, 2..30)) {
            let m = CrosstalkModel::symmetric(eps).matrix(i.len()).unwrap();
            let out = apply_crosstalk(&m, &i).unwrap();
            let a: f64 = i.iter().sum();
            let b: f64 = out.iter().sum();
            prop_assert!((a - b).abs() < 1e-12 * a.max(1.0));
        }

        #[test]
        fn phase_independent_field_has_zero_metric(v in proptest::collection::vec(0.0f64..5.0, 4)) {
            let phases = vec![0.0, 1.0, 2.0, 3.0];
            let s = PhaseGridSamples::from_values(phases.clone(), phases, |a, _| v[(a as usize) % 4]);
            prop_assert!(crosstalk_error_metric(&s).unwrap().amplitude() < 1e-12);
        }
    }
}
