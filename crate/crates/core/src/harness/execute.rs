use super::config::{Command, ExperimentConfig, SweepAttack, SCHEMA_VERSION};
use super::validate::{run_validation, CheckResult, CheckStatus};
use super::{HarnessError, HarnessResult};
use crate::adversary::{predicted_contrast, steal_contrast, steal_resend_crossovers, AttackModel};
use crate::qkd::{run_session, Mode, SessionConfig, SessionReport};
use crate::quantum::ComplexGain;
use crate::rng::{derive_seed, domain};
use crate::spectral::{build_grid, crosstalk_scan, design_optics, CrosstalkScanConfig};
use crate::teleport::{added_noise_variance, teleport_monte_carlo, teleport_trace, GaussianInput, SqueezeSettings, VACUUM_VARIANCE};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::time::Instant;

/// Numeric table emitted as CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Values of one column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub schema_version: u32,
    pub command: Command,
    pub seed: u64,
    pub mode: Mode,
    pub elapsed_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub metadata: RunMetadata,
    /// "ok" or "failed"; failed bundles may hold partial tables.
    pub status: String,
    pub error: Option<String>,
    pub exit_code: i32,
    pub results: serde_json::Value,
    pub tables: Vec<Table>,
    pub checks: Vec<CheckResult>,
}

impl ReportBundle {
    pub fn ok(&self) -> bool {
        self.exit_code == 0
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

struct Output {
    results: serde_json::Value,
    tables: Vec<Table>,
    checks: Vec<CheckResult>,
    failure: Option<HarnessError>,
}

impl Output {
    fn done(results: serde_json::Value, tables: Vec<Table>) -> Self {
        Self {
            results,
            tables,
            checks: Vec::new(),
            failure: None,
        }
    }
}

fn opt(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// Closed-form contrast including line loss, where defined.
fn closed_form_contrast(attack: &AttackModel, session: &SessionConfig) -> crate::Result<Option<f64>> {
    if session.channel_gains.is_some() || !session.crosstalk.is_zero() || session.dark_count > 0.0 {
        return Ok(None);
    }
    let gain = session.channel_gain(0)?;
    let line = session.line_transmission;
    let effective = match *attack {
        AttackModel::None | AttackModel::Steal { .. } => AttackModel::Steal {
            reflectance: 1.0 - (1.0 - attack.reflectance()) * line,
        },
        other => other,
    };
    predicted_contrast(&effective, gain, session.convention).map(Some)
}

fn channel_table(report: &SessionReport) -> Table {
    let mut t = Table::new(
        "channels",
        &["channel", "matched", "sifted", "qber", "erasure_rate", "inconclusive_rate", "contrast", "contrast_se"],
    );
    for c in &report.channels {
        t.rows.push(vec![
            c.channel as f64,
            c.matched as f64,
            c.sifted as f64,
            opt(c.qber),
            c.erasure_rate,
            c.inconclusive_rate,
            opt(c.contrast.contrast),
            opt(c.contrast.standard_error),
        ]);
    }
    t
}

fn run_qkd(config: &ExperimentConfig) -> HarnessResult<Output> {
    let session = config.effective_session();
    let report = run_session(&session, &config.attack)?;
    let predicted = closed_form_contrast(&config.attack, &session)?;
    let tables = vec![channel_table(&report)];
    Ok(Output::done(
        json!({ "session": to_json(&report), "contrast_closed_form": predicted }),
        tables,
    ))
}

fn attack_sweep(config: &ExperimentConfig) -> HarnessResult<Output> {
    let sweep = &config.sweep;
    let points = sweep.points()?;
    let mut base = config.effective_session();
    if let Some(g) = sweep.gain {
        base.gain = g;
        base.channel_gains = None;
    }
    base.bits_per_channel = sweep.trials_per_point.div_ceil(base.channels as u64);
    let mut table = Table::new("sweep", &["T", "V_mc", "V_sem", "V_closed_form", "qber", "qber_se"]);
    let mut failure = None;
    for (i, &t) in points.iter().enumerate() {
        let attack = sweep.attack_at(t);
        let session = SessionConfig {
            master_seed: derive_seed(config.seed_value(), &[domain::SWEEP, i as u64]),
            ..base.clone()
        };
        let row = run_session(&session, &attack).and_then(|r| {
            let closed = closed_form_contrast(&attack, &session)?;
            Ok(vec![
                t,
                opt(r.contrast.contrast),
                opt(r.contrast.standard_error),
                opt(closed),
                opt(r.qber),
                opt(r.qber_se),
            ])
        });
        match row {
            Ok(r) => table.rows.push(r),
            Err(e) => {
                log::error!("sweep point T = {t} failed: {e}");
                failure = Some(HarnessError::Module(e));
                break;
            }
        }
    }
    let crossovers = match sweep.attack {
        SweepAttack::StealResend if failure.is_none() => {
            let grid: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
            Some(steal_resend_crossovers(base.channel_gain(0)?, base.convention, &grid)?)
        }
        _ => None,
    };
    let steal_reference: Vec<f64> = points.iter().map(|&t| steal_contrast(t)).collect();
    Ok(Output {
        results: json!({
            "attack": sweep.attack,
            "points": points.len(),
            "trials_per_point": base.bits_per_channel * base.channels as u64,
            "gain": base.gain,
            "steal_reference": steal_reference,
            "crossovers": crossovers,
        }),
        tables: vec![table],
        checks: Vec::new(),
        failure,
    })
}

fn run_teleport(config: &ExperimentConfig) -> HarnessResult<Output> {
    let tc = &config.teleport;
    let input = GaussianInput::coherent(tc.input_mean[0], tc.input_mean[1]);
    let mut table = Table::new(
        "teleport",
        &["g", "added_var_mc", "added_var_se", "added_var_pred", "added_var_exact", "mean_x", "mean_y"],
    );
    let mut failure = None;
    for (i, &g) in tc.g_grid.iter().enumerate() {
        let row = (|| -> crate::Result<Vec<f64>> {
            let settings = SqueezeSettings::from_reflection(g, tc.reflection)?;
            let seed = derive_seed(config.seed_value(), &[domain::TELEPORT, i as u64]);
            let stats = teleport_monte_carlo(&input, &settings, tc.samples, seed)?;
            let trace = teleport_trace(1.0, 1.0, &settings)?;
            let exact = (trace.a8.x - trace.a_in.x).variance(&[VACUUM_VARIANCE; 6]);
            Ok(vec![
                g,
                stats.added_noise[0],
                stats.added_noise_se[0],
                added_noise_variance(g),
                exact,
                stats.output_mean[0],
                stats.output_mean[1],
            ])
        })();
        match row {
            Ok(r) => table.rows.push(r),
            Err(e) => {
                failure = Some(HarnessError::Module(e));
                break;
            }
        }
    }
    Ok(Output {
        results: json!({ "reflection": tc.reflection, "samples": tc.samples }),
        tables: vec![table],
        checks: Vec::new(),
        failure,
    })
}

fn design_setup(config: &ExperimentConfig) -> HarnessResult<Output> {
    let grid = build_grid(&config.grid)?;
    let input = config.optics_input();
    let design = design_optics(&input)?;
    let mut table = Table::new("channels", &["channel", "detuning", "gain", "dispersion_phase"]);
    for c in &grid.channels {
        table.rows.push(vec![c.index as f64, c.detuning, c.gain, c.dispersion_phase]);
    }
    Ok(Output::done(
        json!({
            "optics_input": to_json(&input),
            "design": to_json(&design),
            "channels": grid.len(),
            "spacing": grid.spacing(),
            "channel_bandwidth": grid.channel_bandwidth(),
            "half_band": grid.half_band,
        }),
        vec![table],
    ))
}

fn crosstalk_test(config: &ExperimentConfig) -> HarnessResult<Output> {
    let ct = &config.crosstalk;
    let mut curves = Table::new(
        "crosstalk_curves",
        &["eps_left", "eps_right", "phi", "err1", "sigma1", "err2", "sigma2"],
    );
    let mut summary = Table::new(
        "crosstalk_summary",
        &["eps_left", "eps_right", "amp1", "amp1_sigma", "amp2", "amp2_sigma", "qber"],
    );
    for (i, leak) in ct.leaks.iter().enumerate() {
        let scan_cfg = CrosstalkScanConfig {
            leak: *leak,
            ..ct.scan.clone()
        };
        let scan = crosstalk_scan(&scan_cfg, derive_seed(config.seed_value(), &[domain::CROSSTALK, i as u64]))?;
        let (c1, c2) = (&scan.err1_vs_phi2, &scan.err2_vs_phi1);
        for k in 0..c1.phi.len() {
            curves.rows.push(vec![leak.left, leak.right, c1.phi[k], c1.err[k], c1.sigma[k], c2.err[k], c2.sigma[k]]);
        }
        let session = SessionConfig {
            crosstalk: *leak,
            mode: Mode::Expectation,
            bits_per_channel: ct.qkd_bits,
            ..config.effective_session()
        };
        let report = run_session(&session, &AttackModel::None)?;
        summary.rows.push(vec![
            leak.left,
            leak.right,
            c1.amplitude(),
            c1.amplitude_sigma(),
            c2.amplitude(),
            c2.amplitude_sigma(),
            opt(report.qber),
        ]);
    }
    Ok(Output::done(json!({ "leaks": ct.leaks.len() }), vec![summary, curves]))
}

fn validate(config: &ExperimentConfig) -> HarnessResult<Output> {
    let checks = run_validation(config)?;
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| c.status == CheckStatus::Fail)
        .map(|c| c.name.as_str())
        .collect();
    let count = |s: CheckStatus| checks.iter().filter(|c| c.status == s).count();
    let results = json!({
        "pass": count(CheckStatus::Pass),
        "fail": count(CheckStatus::Fail),
        "report": count(CheckStatus::Report),
    });
    let failure = (!failed.is_empty()).then(|| HarnessError::Validation(failed.join(", ")));
    Ok(Output {
        results,
        tables: Vec::new(),
        checks,
        failure,
    })
}

/// Run one experiment. Hard errors before any result return `Err`; failures
/// after partial progress return a bundle marked failed.
pub fn execute(config: &ExperimentConfig) -> HarnessResult<ReportBundle> {
    config.validate()?;
    let start = Instant::now();
    log::info!("running {} (seed {}, {:?})", config.command.name(), config.seed_value(), config.mode);
    let out = match config.command {
        Command::RunQkd => run_qkd(config),
        Command::AttackSweep => attack_sweep(config),
        Command::RunTeleport => run_teleport(config),
        Command::DesignSetup => design_setup(config),
        Command::CrosstalkTest => crosstalk_test(config),
        Command::Validate => validate(config),
    }?;
    let metadata = RunMetadata {
        version: env!("CARGO_PKG_VERSION").into(),
        schema_version: SCHEMA_VERSION,
        command: config.command,
        seed: config.seed_value(),
        mode: config.mode,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    };
    let (status, error, exit_code) = match &out.failure {
        None => ("ok".to_string(), None, 0),
        Some(e) => ("failed".to_string(), Some(e.to_string()), e.exit_code()),
    };
    Ok(ReportBundle {
        metadata,
        status,
        error,
        exit_code,
        results: out.results,
        tables: out.tables,
        checks: out.checks,
    })
}

/// Gain helper shared with validation.
pub(super) fn real_gain(g: f64) -> crate::Result<ComplexGain> {
    ComplexGain::real(g)
}
