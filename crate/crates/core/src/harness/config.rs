use super::{HarnessError, HarnessResult};
use crate::adversary::AttackModel;
use crate::qkd::{Mode, SessionConfig};
use crate::spectral::{CrosstalkModel, CrosstalkScanConfig, GridConfig, OpticsInput, SPEED_OF_LIGHT};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    RunQkd,
    AttackSweep,
    RunTeleport,
    DesignSetup,
    CrosstalkTest,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::RunQkd => "run-qkd",
            Command::AttackSweep => "attack-sweep",
            Command::RunTeleport => "run-teleport",
            Command::DesignSetup => "design-setup",
            Command::CrosstalkTest => "crosstalk-test",
            Command::Validate => "validate",
        }
    }
}

/// Inclusive arithmetic grid `start, start + step, ..., stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn values(&self) -> HarnessResult<Vec<f64>> {
        let GridSpec { start, stop, step } = *self;
        if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
            return Err(HarnessError::Config(format!(
                "grid {start}:{stop}:{step} needs step > 0 and stop >= start"
            )));
        }
        let n = ((stop - start) / step).round() as usize + 1;
        Ok((0..n)
            .map(|i| if i + 1 == n { stop } else { start + i as f64 * step })
            .collect())
    }

    /// Parse `start:stop:step`.
    pub fn parse(s: &str) -> HarnessResult<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| HarnessError::Config(format!("bad grid value '{p}' in '{s}'")))
        };
        match parts.as_slice() {
            [a, b, c] => Ok(Self {
                start: num(a)?,
                stop: num(b)?,
                step: num(c)?,
            }),
            _ => Err(HarnessError::Config(format!(
                "grid '{s}' must have the form start:stop:step"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAttack {
    #[default]
    Steal,
    StealResend,
    InterceptResend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub attack: SweepAttack,
    /// Transmission grid `T = 1 - R` of the tap.
    pub t_grid: GridSpec,
    /// Channel-bit trials per grid point.
    pub trials_per_point: u64,
    /// Gain for the sweep; overrides the session gain when set.
    pub gain: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            attack: SweepAttack::Steal,
            t_grid: GridSpec {
                start: 0.0,
                stop: 1.0,
                step: 0.05,
            },
            trials_per_point: 100_000,
            gain: None,
        }
    }
}

impl SweepConfig {
    /// Attack for one grid transmission.
    pub fn attack_at(&self, t: f64) -> AttackModel {
        let reflectance = (1.0 - t).clamp(0.0, 1.0);
        match self.attack {
            SweepAttack::Steal => AttackModel::Steal { reflectance },
            SweepAttack::StealResend => AttackModel::StealResend { reflectance },
            SweepAttack::InterceptResend => AttackModel::InterceptResend,
        }
    }

    /// Grid points actually run. Intercept-resend involves no tap, so it
    /// runs once at `T = 1`.
    pub fn points(&self) -> HarnessResult<Vec<f64>> {
        match self.attack {
            SweepAttack::InterceptResend => Ok(vec![1.0]),
            _ => {
                let v = self.t_grid.values()?;
                if v.iter().any(|t| !(0.0..=1.0).contains(t)) {
                    return Err(HarnessError::Config(format!(
                        "transmission grid must lie in [0, 1], got {:?}",
                        self.t_grid
                    )));
                }
                Ok(v)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeleportConfig {
    pub g_grid: Vec<f64>,
    /// Output beamsplitter reflection amplitude.
    pub reflection: f64,
    pub samples: u64,
    pub input_mean: [f64; 2],
}

impl Default for TeleportConfig {
    fn default() -> Self {
        Self {
            g_grid: vec![0.0, 0.5, 1.0, 2.0],
            reflection: 1e-3,
            samples: 100_000,
            input_mean: [1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrosstalkTestConfig {
    pub leaks: Vec<CrosstalkModel>,
    pub scan: CrosstalkScanConfig,
    /// Bits per channel of the expectation-mode QKD run per leak.
    pub qkd_bits: u64,
}

impl Default for CrosstalkTestConfig {
    fn default() -> Self {
        Self {
            leaks: [0.0, 0.01, 0.05, 0.1].into_iter().map(CrosstalkModel::symmetric).collect(),
            scan: CrosstalkScanConfig::default(),
            qkd_bits: 400,
        }
    }
}

fn default_optics(grid: &GridConfig) -> OpticsInput {
    let lambda = grid.center_wavelength;
    OpticsInput {
        pixel_pitch: 10e-6,
        aperture: 10e-3,
        wavelength: lambda,
        span: grid.span,
        omega: grid.half_band(),
        omega_pump: 2.0 * 2.0 * PI * SPEED_OF_LIGHT / lambda,
        channel_width: grid.channel_width,
        channel_gap: grid.channel_gap,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub command: Command,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default)]
    pub attack: AttackModel,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub teleport: TeleportConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub optics: Option<OpticsInput>,
    #[serde(default)]
    pub crosstalk: CrosstalkTestConfig,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command,
            seed: None,
            mode: Mode::default(),
            output_dir: None,
            session: SessionConfig::default(),
            attack: AttackModel::default(),
            sweep: SweepConfig::default(),
            teleport: TeleportConfig::default(),
            grid: GridConfig::default(),
            optics: None,
            crosstalk: CrosstalkTestConfig::default(),
        }
    }

    pub fn optics_input(&self) -> OpticsInput {
        self.optics.unwrap_or_else(|| default_optics(&self.grid))
    }

    pub fn seed_value(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Session config with the run-level seed and mode folded in.
    pub fn effective_session(&self) -> SessionConfig {
        SessionConfig {
            master_seed: self.seed_value(),
            mode: self.mode,
            ..self.session.clone()
        }
    }

    /// Semantic checks beyond the schema.
    pub fn validate(&self) -> HarnessResult<()> {
        let cfg = |e: crate::Error| HarnessError::Config(e.to_string());
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.mode == Mode::Sampled && self.seed.is_none() {
            return Err(HarnessError::Config("a seed is required in sampled mode".into()));
        }
        self.attack.validate().map_err(cfg)?;
        let session = self.effective_session();
        session.validate().map_err(cfg)?;
        match self.command {
            Command::RunQkd => {
                let physics_check = crate::adversary::bob_branches(
                    &self.attack,
                    &session.physics(0).map_err(cfg)?,
                    0.0,
                    [0.0, PI],
                );
                physics_check.map_err(cfg)?;
            }
            Command::AttackSweep => {
                crate::adversary::bob_branches(
                    &self.sweep.attack_at(0.5),
                    &session.physics(0).map_err(cfg)?,
                    0.0,
                    [0.0, PI],
                )
                .map_err(cfg)?;
                self.sweep.points()?;
                if let Some(g) = self.sweep.gain {
                    crate::quantum::ComplexGain::real(g).map_err(cfg)?;
                }
                if self.sweep.trials_per_point == 0 {
                    return Err(HarnessError::Config("trials_per_point must be positive".into()));
                }
            }
            Command::RunTeleport => {
                if self.teleport.g_grid.iter().any(|g| !(*g >= 0.0)) {
                    return Err(HarnessError::Config("teleport g_grid values must be >= 0".into()));
                }
                crate::teleport::SqueezeSettings::from_reflection(0.0, self.teleport.reflection).map_err(cfg)?;
                if self.teleport.reflection == 0.0 {
                    return Err(HarnessError::Config(crate::Error::UndefinedShift.to_string()));
                }
            }
            Command::DesignSetup => {
                crate::spectral::build_grid(&self.grid).map_err(cfg)?;
                crate::spectral::design_optics(&self.optics_input()).map_err(cfg)?;
            }
            Command::CrosstalkTest => {
                for l in &self.crosstalk.leaks {
                    l.validate().map_err(cfg)?;
                }
            }
            Command::Validate => {}
        }
        Ok(())
    }
}

/// Command-line overrides applied on top of a parsed or default config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub output_dir: Option<PathBuf>,
    pub sweep_attack: Option<SweepAttack>,
    pub t_grid: Option<GridSpec>,
    pub g_grid: Option<Vec<f64>>,
    pub pixel: Option<f64>,
    pub aperture: Option<f64>,
    pub wavelength: Option<f64>,
    pub span: Option<f64>,
    pub leaks: Option<Vec<CrosstalkModel>>,
    pub sweep_gain: Option<f64>,
    pub trials_per_point: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            config.seed = Some(s);
        }
        if let Some(m) = self.mode {
            config.mode = m;
        }
        if let Some(o) = &self.output_dir {
            config.output_dir = Some(o.clone());
        }
        if let Some(a) = self.sweep_attack {
            config.sweep.attack = a;
        }
        if let Some(g) = self.sweep_gain {
            config.sweep.gain = Some(g);
        }
        if let Some(n) = self.trials_per_point {
            config.sweep.trials_per_point = n;
        }
        if let Some(t) = self.t_grid {
            config.sweep.t_grid = t;
        }
        if let Some(g) = &self.g_grid {
            config.teleport.g_grid = g.clone();
        }
        if self.pixel.is_some() || self.aperture.is_some() || self.wavelength.is_some() || self.span.is_some() {
            if let Some(span) = self.span {
                config.grid.span = span;
            }
            if let Some(l) = self.wavelength {
                config.grid.center_wavelength = l;
            }
            let mut o = config.optics_input();
            if let Some(p) = self.pixel {
                o.pixel_pitch = p;
            }
            if let Some(a) = self.aperture {
                o.aperture = a;
            }
            if let Some(l) = self.wavelength {
                o.wavelength = l;
                o.omega_pump = 2.0 * 2.0 * PI * SPEED_OF_LIGHT / l;
                o.omega = config.grid.half_band();
            }
            if let Some(s) = self.span {
                o.span = s;
            }
            config.optics = Some(o);
        }
        if let Some(l) = &self.leaks {
            config.crosstalk.leaks = l.clone();
        }
    }
}

/// Parse without semantic validation, for callers that apply overrides
/// before validating.
pub fn parse_config_raw(text: &str) -> HarnessResult<ExperimentConfig> {
    serde_json::from_str(text)
        .map_err(|e| HarnessError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))
}

pub fn parse_config_str(text: &str) -> HarnessResult<ExperimentConfig> {
    let config = parse_config_raw(text)?;
    config.validate()?;
    Ok(config)
}

/// Read a config file; `validate = false` skips the semantic checks.
pub fn read_config(path: &Path, validate: bool) -> HarnessResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parsed = if validate { parse_config_str(&text) } else { parse_config_raw(&text) };
    parsed.map_err(|e| match e {
        HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_config(path: &Path) -> HarnessResult<ExperimentConfig> {
    read_config(path, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config_str(r#"{"schema_version": 1, "command": "run-qkd", "session": {"channels": 23, "gain": 0.1}}"#).unwrap();
        assert_eq!(c.session.channels, 23);
        assert_eq!(c.session.slots_per_bit, 10_000);
        assert_eq!(c.attack, AttackModel::None);
    }

    #[test]
    fn bad_reflectance_rejected() {
        let e = parse_config_str(r#"{"schema_version": 1, "command": "run-qkd", "attack": {"kind": "steal", "reflectance": 1.3}}"#).unwrap_err();
        assert!(e.to_string().contains("reflectance out of range"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_rejected_with_position() {
        let e = parse_config_str("{\"schema_version\": 1,\n \"command\": \"validate\",\n \"bogus\": 3}").unwrap_err();
        let m = e.to_string();
        assert!(m.contains("bogus") && m.contains("line 3"), "{m}");
    }

    #[test]
    fn sampled_mode_needs_seed() {
        assert!(parse_config_str(r#"{"schema_version": 1, "command": "run-qkd", "mode": "sampled"}"#).is_err());
        assert!(parse_config_str(r#"{"schema_version": 1, "command": "run-qkd", "mode": "sampled", "seed": 4}"#).is_ok());
    }

    #[test]
    fn sweep_expansion() {
        let g = GridSpec::parse("0:1:0.05").unwrap();
        let v = g.values().unwrap();
        assert_eq!(v.len(), 21);
        assert_eq!(v[20], 1.0);
        assert!((v[7] - 0.35).abs() < 1e-15);
        assert!(GridSpec::parse("0:1").is_err());
        assert!(GridSpec { start: 0.0, stop: 1.0, step: 0.0 }.values().is_err());
    }

    #[test]
    fn wrong_schema_version() {
        assert!(parse_config_str(r#"{"schema_version": 9, "command": "validate"}"#).is_err());
    }
}
