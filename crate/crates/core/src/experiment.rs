//! Declarative experiment presets and the sweep runner behind the CLI.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::analytic::BerModel;
use crate::channel::SystemConfig;
use crate::error::{Error, Result};
use crate::mc::{run_point, McOptions, Scenario};
use crate::pa::{optimize, PaOptions, PaProblem};

/// Which BER columns to fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analytic,
    Mc,
    Both,
}

impl Mode {
    pub fn analytic(self) -> bool {
        matches!(self, Mode::Analytic | Mode::Both)
    }

    pub fn mc(self) -> bool {
        matches!(self, Mode::Mc | Mode::Both)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Analytic => "analytic",
            Mode::Mc => "mc",
            Mode::Both => "both",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Mode::Analytic),
            "mc" => Ok(Mode::Mc),
            "both" => Ok(Mode::Both),
            _ => Err(Error::config(
                "mode",
                format!("unknown mode `{s}` (expected analytic, mc or both)"),
            )),
        }
    }
}

fn default_psi() -> f64 {
    2.2
}

fn default_sigma_n2() -> f64 {
    1.0
}

/// One experiment, as stored in a preset file.
///
/// Every user transmits at `x + sweep_offsets[k]` dB for each sweep value
/// `x`. With `pa` on, that value is the user's cap instead and the powers
/// come from the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPreset {
    pub name: String,
    pub scenario: Scenario,
    pub bits: Vec<u32>,
    pub reflectors: Vec<usize>,
    /// Optional consistency check on `sum(reflectors)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_reflectors: Option<usize>,
    pub d_user_ris: Vec<f64>,
    pub d_ris_bs: f64,
    #[serde(default = "default_psi")]
    pub psi: f64,
    #[serde(default = "default_sigma_n2")]
    pub sigma_n2: f64,
    pub sweep_start: f64,
    pub sweep_stop: f64,
    pub sweep_step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_offsets: Option<Vec<f64>>,
    pub mode: Mode,
    #[serde(default)]
    pub pa: bool,
    pub runs: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_errors: Option<u64>,
}

const MAX_SWEEP_POINTS: usize = 10_000;

impl ExperimentPreset {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("preset")
                .to_string();
            Error::Config {
                field,
                reason: e.to_string().trim_end().replace('\n', " | "),
            }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("preset serializes")
    }

    /// Lowercase hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn users(&self) -> usize {
        self.bits.len()
    }

    pub fn offsets(&self) -> Vec<f64> {
        self.sweep_offsets
            .clone()
            .unwrap_or_else(|| vec![0.0; self.users()])
    }

    /// Sweep values, `start + i step` up to `stop`.
    pub fn sweep(&self) -> Vec<f64> {
        if !(self.sweep_step > 0.0) || self.sweep_stop < self.sweep_start {
            return Vec::new();
        }
        let n = ((self.sweep_stop - self.sweep_start) / self.sweep_step + 1e-9).floor() as usize + 1;
        (0..n.min(MAX_SWEEP_POINTS + 1))
            .map(|i| self.sweep_start + i as f64 * self.sweep_step)
            .collect()
    }

    /// System configuration at sweep value `x`.
    pub fn config_at(&self, x: f64) -> SystemConfig {
        SystemConfig {
            bits: self.bits.clone(),
            reflectors: self.reflectors.clone(),
            d_user_ris: self.d_user_ris.clone(),
            d_ris_bs: self.d_ris_bs,
            psi: self.psi,
            sigma_n2: self.sigma_n2,
            powers_db: self.offsets().iter().map(|o| x + o).collect(),
        }
    }

    /// Full invariant check, without running anything.
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if let Some(off) = &self.sweep_offsets {
            if off.len() != self.users() {
                return Err(Error::config(
                    "sweep_offsets",
                    format!("expected {} entries (one per user), found {}", self.users(), off.len()),
                ));
            }
            if off.iter().any(|o| !o.is_finite()) {
                return Err(Error::config("sweep_offsets", "offsets must be finite"));
            }
        }
        for (field, v) in [
            ("sweep_start", self.sweep_start),
            ("sweep_stop", self.sweep_stop),
            ("sweep_step", self.sweep_step),
        ] {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        if !(self.sweep_step > 0.0) {
            return Err(Error::config("sweep_step", "must be positive"));
        }
        let sweep = self.sweep();
        if sweep.is_empty() {
            return Err(Error::config(
                "sweep_stop",
                format!(
                    "empty sweep: stop {} is below start {}",
                    self.sweep_stop, self.sweep_start
                ),
            ));
        }
        if sweep.len() > MAX_SWEEP_POINTS {
            return Err(Error::config(
                "sweep_step",
                format!("more than {MAX_SWEEP_POINTS} sweep points"),
            ));
        }
        self.config_at(self.sweep_start).validate()?;
        if let Some(total) = self.total_reflectors {
            let sum: usize = self.reflectors.iter().sum();
            if total != sum {
                return Err(Error::config(
                    "total_reflectors",
                    format!("{total} does not match sum(reflectors) = {sum}"),
                ));
            }
        }
        if self.scenario != Scenario::Noma {
            if self.mode != Mode::Mc {
                return Err(Error::config(
                    "mode",
                    format!("{} baselines are simulated only (use mode = \"mc\")", self.scenario),
                ));
            }
            if self.pa {
                return Err(Error::config("pa", "power allocation applies to the noma scenario only"));
            }
            if let Some(b) = self.bits.iter().find(|&&b| b * self.users() as u32 > 30) {
                return Err(Error::config(
                    "bits",
                    format!("OMA order 2^{} is too large", b * self.users() as u32),
                ));
            }
        }
        if self.mode.mc() && self.runs == 0 {
            return Err(Error::config("runs", "at least one run is required"));
        }
        if self.min_errors == Some(0) {
            return Err(Error::config("min_errors", "must be at least 1"));
        }
        Ok(())
    }
}

/// Command-line overrides applied on top of a preset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub runs: Option<u64>,
    pub seed: Option<u64>,
    pub pa: Option<bool>,
}

impl ExperimentPreset {
    pub fn with_overrides(&self, o: &Overrides) -> ExperimentPreset {
        ExperimentPreset {
            mode: o.mode.unwrap_or(self.mode),
            runs: o.runs.unwrap_or(self.runs),
            seed: o.seed.unwrap_or(self.seed),
            pa: o.pa.unwrap_or(self.pa),
            ..self.clone()
        }
    }
}

const PRESETS: &[(&str, &str)] = &[
    ("fig4_L70", include_str!("../presets/fig4_L70.toml")),
    ("fig4_L150", include_str!("../presets/fig4_L150.toml")),
    ("fig4_L70_pa", include_str!("../presets/fig4_L70_pa.toml")),
    ("fig4_L150_pa", include_str!("../presets/fig4_L150_pa.toml")),
    ("fig4_L70_oma1", include_str!("../presets/fig4_L70_oma1.toml")),
    ("fig4_L70_oma2", include_str!("../presets/fig4_L70_oma2.toml")),
    ("fig5_L70", include_str!("../presets/fig5_L70.toml")),
    ("fig5_L150", include_str!("../presets/fig5_L150.toml")),
    ("fig6_L80", include_str!("../presets/fig6_L80.toml")),
    ("fig6_L150", include_str!("../presets/fig6_L150.toml")),
    ("fig7_3user_L100", include_str!("../presets/fig7_3user_L100.toml")),
];

/// Names of the bundled presets.
pub fn list_presets() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn builtin_preset(name: &str) -> Option<ExperimentPreset> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ExperimentPreset::parse(text).expect("bundled preset parses"))
}

/// Loads a preset file, or a bundled preset by name when no such file
/// exists.
pub fn load_preset(path_or_name: &str) -> Result<ExperimentPreset> {
    let path = Path::new(path_or_name);
    if path.is_file() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("preset", format!("{}: {e}", path.display())))?;
        return ExperimentPreset::parse(&text);
    }
    builtin_preset(path_or_name).ok_or_else(|| {
        Error::config(
            "preset",
            format!("`{path_or_name}` is neither a file nor a bundled preset"),
        )
    })
}

/// Parses and validates a preset file.
pub fn validate(path_or_name: &str) -> Result<ExperimentPreset> {
    let p = load_preset(path_or_name)?;
    p.validate()?;
    Ok(p)
}

/// One CSV row: one user at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub preset: String,
    pub scenario: Scenario,
    pub user: usize,
    pub power_db: f64,
    pub ber_analytic: Option<f64>,
    pub ber_mc: Option<f64>,
    pub stderr_mc: Option<f64>,
    pub errors: Option<u64>,
    pub runs: Option<u64>,
    pub seed: u64,
}

/// Per-point details written as comment lines.
#[derive(Debug, Clone, PartialEq)]
pub struct PointReport {
    pub sweep: f64,
    /// Powers the point was evaluated at.
    pub powers_db: Vec<f64>,
    pub p_star: Option<Vec<f64>>,
    pub discarded_alignment_failures: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub preset: ExperimentPreset,
    pub rows: Vec<ResultRow>,
    pub points: Vec<PointReport>,
}

/// Seed of sweep point `i`.
pub fn point_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn run_single(preset: &ExperimentPreset, i: usize, x: f64) -> (Vec<ResultRow>, PointReport) {
    let cfg = preset.config_at(x);
    let k = preset.users();
    let seed = point_seed(preset.seed, i);
    let mut report = PointReport {
        sweep: x,
        powers_db: cfg.powers_db.clone(),
        p_star: None,
        discarded_alignment_failures: 0,
        error: None,
    };
    let mut analytic = None;
    let mut mc = None;
    let outcome = (|| -> Result<()> {
        let mut powers = cfg.powers_db.clone();
        if preset.pa {
            let problem = PaProblem::with_caps(&cfg, cfg.powers_db.clone())?;
            let sol = optimize(&problem, &PaOptions::default())?;
            powers = sol.p_star.clone();
            report.p_star = Some(sol.p_star);
        }
        report.powers_db = powers.clone();
        if preset.mode.analytic() {
            analytic = Some(BerModel::new(&cfg)?.ber_at(&powers)?);
        }
        if preset.mode.mc() {
            let mut opts = McOptions::new(preset.runs, seed);
            opts.min_errors = preset.min_errors;
            let r = run_point(&cfg, preset.scenario, &powers, opts)?;
            report.discarded_alignment_failures = r.discarded_alignment_failures;
            mc = Some(r);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        report.error = Some(e.to_string());
    }
    let rows = (0..k)
        .map(|u| ResultRow {
            preset: preset.name.clone(),
            scenario: preset.scenario,
            user: u + 1,
            power_db: cfg.powers_db[u],
            ber_analytic: analytic.as_ref().map(|b| b[u]),
            ber_mc: mc.as_ref().map(|r| r.users[u].ber),
            stderr_mc: mc.as_ref().map(|r| r.users[u].stderr),
            errors: mc.as_ref().map(|r| r.users[u].errors),
            runs: mc.as_ref().map(|r| r.runs),
            seed,
        })
        .collect();
    (rows, report)
}

/// Evaluates every sweep point of a validated preset. A failing point is
/// reported in its [`PointReport`] and leaves its BER columns empty.
pub fn run_experiment(preset: &ExperimentPreset) -> Result<ExperimentResult> {
    preset.validate()?;
    let sweep = preset.sweep();
    let per_point: Vec<(Vec<ResultRow>, PointReport)> = sweep
        .par_iter()
        .enumerate()
        .map(|(i, &x)| run_single(preset, i, x))
        .collect();
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for (r, p) in per_point {
        rows.extend(r);
        points.push(p);
    }
    Ok(ExperimentResult {
        preset: preset.clone(),
        rows,
        points,
    })
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

fn fmt_powers(p: &[f64]) -> String {
    p.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(",")
}

impl ExperimentResult {
    pub fn failed_points(&self) -> usize {
        self.points.iter().filter(|p| p.error.is_some()).count()
    }

    /// Writes `#`-prefixed metadata lines followed by the CSV table.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let p = &self.preset;
        let io = |e: std::io::Error| Error::Domain(format!("writing output: {e}"));
        writeln!(out, "# preset: {}", p.name).map_err(io)?;
        writeln!(out, "# generator: risnoma {}", env!("CARGO_PKG_VERSION")).map_err(io)?;
        writeln!(out, "# preset_sha256: {}", p.hash()).map_err(io)?;
        writeln!(
            out,
            "# scenario: {} mode: {} pa: {} runs: {} seed: {} min_errors: {}",
            p.scenario,
            p.mode,
            p.pa,
            p.runs,
            p.seed,
            opt(&p.min_errors)
        )
        .map_err(io)?;
        for line in p.to_toml().lines() {
            writeln!(out, "# | {line}").map_err(io)?;
        }
        for (i, pt) in self.points.iter().enumerate() {
            write!(out, "# point {i}: sweep_dB={} powers_dB={}", pt.sweep, fmt_powers(&pt.powers_db))
                .map_err(io)?;
            if let Some(ps) = &pt.p_star {
                write!(out, " p_star_dB={}", fmt_powers(ps)).map_err(io)?;
            }
            if pt.discarded_alignment_failures > 0 {
                write!(out, " discarded={}", pt.discarded_alignment_failures).map_err(io)?;
            }
            if let Some(e) = &pt.error {
                write!(out, " error=\"{e}\"").map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Domain(format!("writing output: {e}"));
        w.write_record([
            "preset",
            "scenario",
            "user",
            "power_dB",
            "ber_analytic",
            "ber_mc",
            "stderr_mc",
            "errors",
            "runs",
            "seed",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.preset.clone(),
                r.scenario.to_string(),
                r.user.to_string(),
                r.power_db.to_string(),
                r.ber_analytic.map_or_else(String::new, |v| format!("{v:e}")),
                r.ber_mc.map_or_else(String::new, |v| format!("{v:e}")),
                r.stderr_mc.map_or_else(String::new, |v| format!("{v:e}")),
                opt(&r.errors),
                opt(&r.runs),
                r.seed.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Domain(format!("writing output: {e}")))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}
