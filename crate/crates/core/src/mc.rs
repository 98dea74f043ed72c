//! Seeded Monte Carlo link simulation of the uplink NOMA scheme and the two
//! TDMA-OMA baselines.
//!
//! Runs are grouped into fixed-size batches; batch `b` draws from a ChaCha8
//! stream `b` of the point seed, so results do not depend on the number of
//! worker threads. Batches are merged in index order and early stopping is
//! checked after each one.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::channel::{align_channels, pathloss, db_to_linear, qam_scale, sample_normalized, SystemConfig};
use crate::constellation::{canonical, gray, pam_amplitude, ConstellationSpec};
use crate::error::{Error, Result};

/// Runs per batch.
pub const BATCH_RUNS: u64 = 10_000;

/// Multiple-access scheme of a simulation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Noma,
    /// TDMA, every reflector aligned to the transmitting user.
    Oma1,
    /// TDMA, only the user's own partition aligned to it.
    Oma2,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Noma => "noma",
            Scenario::Oma1 => "oma1",
            Scenario::Oma2 => "oma2",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noma" => Ok(Scenario::Noma),
            "oma1" => Ok(Scenario::Oma1),
            "oma2" => Ok(Scenario::Oma2),
            _ => Err(Error::config(
                "scenario",
                format!("unknown scenario `{s}` (expected noma, oma1 or oma2)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    /// Maximum number of channel realizations.
    pub runs: u64,
    pub seed: u64,
    /// Stop once every user has at least this many bit errors.
    pub min_errors: Option<u64>,
}

impl McOptions {
    pub fn new(runs: u64, seed: u64) -> Self {
        McOptions {
            runs,
            seed,
            min_errors: None,
        }
    }

    pub fn with_min_errors(self, min_errors: u64) -> Self {
        McOptions {
            min_errors: Some(min_errors),
            ..self
        }
    }
}

/// Error tally of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTally {
    pub errors: u64,
    pub bits: u64,
    pub ber: f64,
    /// `sqrt(ber (1 - ber) / bits)`.
    pub stderr: f64,
}

impl UserTally {
    fn new(errors: u64, bits: u64) -> Self {
        let ber = if bits == 0 { 0.0 } else { errors as f64 / bits as f64 };
        let stderr = if bits == 0 {
            0.0
        } else {
            (ber * (1.0 - ber) / bits as f64).sqrt()
        };
        UserTally {
            errors,
            bits,
            ber,
            stderr,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub users: Vec<UserTally>,
    pub seed: u64,
    /// Channel realizations drawn, including discarded ones.
    pub runs: u64,
    pub discarded_alignment_failures: u64,
}

/// One CSV output row.
#[derive(Debug, Clone, PartialEq)]
pub struct McRow {
    pub scenario: Scenario,
    pub user: usize,
    pub power_db: f64,
    pub runs: u64,
    pub errors: u64,
    pub ber: f64,
    pub stderr: f64,
    pub seed: u64,
}

impl McResult {
    /// Rows for user `k` at `powers_db[k]`, users numbered from 1.
    pub fn rows(&self, scenario: Scenario, powers_db: &[f64]) -> Vec<McRow> {
        self.users
            .iter()
            .enumerate()
            .map(|(k, t)| McRow {
                scenario,
                user: k + 1,
                power_db: powers_db[k],
                runs: self.runs,
                errors: t.errors,
                ber: t.ber,
                stderr: t.stderr,
                seed: self.seed,
            })
            .collect()
    }
}

pub fn write_rows<W: Write>(rows: &[McRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(["scenario", "user", "power_dB", "runs", "errors", "ber", "stderr", "seed"])
        .map_err(io_err)?;
    for r in rows {
        w.write_record([
            r.scenario.to_string(),
            r.user.to_string(),
            r.power_db.to_string(),
            r.runs.to_string(),
            r.errors.to_string(),
            format!("{:e}", r.ber),
            format!("{:e}", r.stderr),
            r.seed.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Domain(e.to_string()))
}

fn io_err(e: csv::Error) -> Error {
    Error::Domain(format!("csv output: {e}"))
}

/// Per-dimension detector tables for one superimposed constellation.
struct Detector {
    radix: Vec<usize>,
    thresholds: Vec<Vec<i64>>,
    /// `labels[r * K + k]`: user `k`'s Gray label at sorted level `r`.
    labels: Vec<u32>,
    users: usize,
}

impl Detector {
    fn new(spec: &ConstellationSpec) -> Self {
        let users = spec.users();
        Detector {
            radix: (0..users).map(|k| spec.levels_per_dim(k)).collect(),
            thresholds: spec.thresholds.clone(),
            labels: spec
                .levels
                .iter()
                .flat_map(|l| l.labels.iter().copied())
                .collect(),
            users,
        }
    }

    fn thresholds_at(&self, h: &[f64]) -> Vec<f64> {
        self.thresholds
            .iter()
            .map(|t| t.iter().zip(h).map(|(&a, &x)| a as f64 * x).sum())
            .collect()
    }

    /// Transmits one symbol per user over real gains `h` and adds the bit
    /// errors of each user to `errors`.
    ///
    /// Draw order: each user's in-phase then quadrature PAM index, then the
    /// in-phase and quadrature noise.
    fn transmit<R: Rng + ?Sized>(
        &self,
        h: &[f64],
        thr: &[f64],
        sigma_n: f64,
        rng: &mut R,
        idx: &mut [[usize; 2]],
        errors: &mut [u64],
    ) {
        let mut x = Complex64::new(0.0, 0.0);
        for k in 0..self.users {
            let m = self.radix[k];
            let i = rng.random_range(0..m);
            let q = rng.random_range(0..m);
            idx[k] = [i, q];
            x += Complex64::new(
                pam_amplitude(i, m) as f64 * h[k],
                pam_amplitude(q, m) as f64 * h[k],
            );
        }
        let ni: f64 = rng.sample(StandardNormal);
        let nq: f64 = rng.sample(StandardNormal);
        let y = x + Complex64::new(ni, nq) * sigma_n;
        let ri = ConstellationSpec::region(thr, y.re);
        let rq = ConstellationSpec::region(thr, y.im);
        for k in 0..self.users {
            let li = self.labels[ri * self.users + k];
            let lq = self.labels[rq * self.users + k];
            errors[k] += ((gray(idx[k][0] as u32) ^ li).count_ones()
                + (gray(idx[k][1] as u32) ^ lq).count_ones()) as u64;
        }
    }
}

#[derive(Debug, Clone, Default)]
struct BatchTally {
    runs: u64,
    discarded: u64,
    errors: Vec<u64>,
    /// Symbols delivered per user.
    symbols: Vec<u64>,
}

/// Runs batches in waves and merges them in order until `runs` is exhausted
/// or the early-stopping rule fires.
fn drive<F>(users: usize, bits: &[u32], opts: McOptions, batch: F) -> Result<McResult>
where
    F: Fn(&mut ChaCha8Rng, u64) -> BatchTally + Sync,
{
    if opts.runs == 0 {
        return Err(Error::config("runs", "at least one run is required"));
    }
    let n_batches = opts.runs.div_ceil(BATCH_RUNS);
    let wave = (rayon::current_num_threads() as u64 * 2).max(1);
    let mut errors = vec![0u64; users];
    let mut symbols = vec![0u64; users];
    let (mut runs, mut discarded) = (0u64, 0u64);
    let mut start = 0;
    'outer: while start < n_batches {
        let end = (start + wave).min(n_batches);
        let tallies: Vec<BatchTally> = (start..end)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(b);
                let len = BATCH_RUNS.min(opts.runs - b * BATCH_RUNS);
                batch(&mut rng, len)
            })
            .collect();
        for t in tallies {
            runs += t.runs;
            discarded += t.discarded;
            for k in 0..users {
                errors[k] += t.errors[k];
                symbols[k] += t.symbols[k];
            }
            if let Some(min) = opts.min_errors {
                if errors.iter().all(|&e| e >= min) {
                    break 'outer;
                }
            }
        }
        start = end;
    }
    Ok(McResult {
        users: (0..users)
            .map(|k| UserTally::new(errors[k], symbols[k] * bits[k] as u64))
            .collect(),
        seed: opts.seed,
        runs,
        discarded_alignment_failures: discarded,
    })
}

/// Simulates the NOMA uplink at `powers_db`.
///
/// Per run: one channel realization (aligned exactly), one uniformly drawn
/// QAM symbol per user, complex noise with variance `sigma_n2` per real
/// dimension, joint threshold detection. Realizations whose alignment fails
/// are discarded and counted.
pub fn run_noma_point(cfg: &SystemConfig, powers_db: &[f64], opts: McOptions) -> Result<McResult> {
    let cfg = cfg.with_powers(powers_db);
    cfg.validate()?;
    let scale = cfg.scale_factors()?;
    let det = Detector::new(&canonical(&cfg.bits)?);
    let users = cfg.users();
    let sigma_n = cfg.sigma_n();
    drive(users, &cfg.bits, opts, |rng, len| {
        let mut t = BatchTally {
            errors: vec![0; users],
            symbols: vec![0; users],
            ..Default::default()
        };
        let mut idx = vec![[0usize; 2]; users];
        for _ in 0..len {
            t.runs += 1;
            let mut gamma = sample_normalized(&cfg.reflectors, rng, false).gamma_hat;
            for (i, mut row) in gamma.row_iter_mut().enumerate() {
                row *= Complex64::new(scale[i], 0.0);
            }
            let Ok(aligned) = align_channels(&gamma) else {
                t.discarded += 1;
                continue;
            };
            let thr = det.thresholds_at(&aligned.h_eff);
            det.transmit(&aligned.h_eff, &thr, sigma_n, rng, &mut idx, &mut t.errors);
            for s in t.symbols.iter_mut() {
                *s += 1;
            }
        }
        t
    })
}

/// Simulates a TDMA-OMA baseline: each user transmits alone with a
/// `2^(K b_k)`-QAM symbol and is detected coherently on its own gain.
///
/// OMA1 phase-matches the whole panel to the active user. OMA2 matches only
/// the user's partition; the other partitions keep the phases matched to
/// their owners and add to the gain with random phase.
pub fn run_oma_point(
    cfg: &SystemConfig,
    variant: Scenario,
    powers_db: &[f64],
    opts: McOptions,
) -> Result<McResult> {
    if variant == Scenario::Noma {
        return Err(Error::Domain("run_oma_point needs an OMA variant".into()));
    }
    let cfg = cfg.with_powers(powers_db);
    cfg.validate()?;
    let users = cfg.users();
    let k_users = users as u32;
    let oma_bits: Vec<u32> = cfg.bits.iter().map(|&b| b * k_users).collect();
    if let Some(k) = oma_bits.iter().position(|&b| b > 30) {
        return Err(Error::config(
            "bits",
            format!("user {}: OMA order 2^{} is too large", k + 1, oma_bits[k]),
        ));
    }
    let scale: Vec<f64> = (0..users)
        .map(|k| {
            let beta = qam_scale(1u64 << oma_bits[k])?;
            let eta = pathloss(cfg.d_user_ris[k], cfg.d_ris_bs, cfg.psi)?;
            Ok((db_to_linear(cfg.powers_db[k]) * eta / beta).sqrt())
        })
        .collect::<Result<_>>()?;
    let dets: Vec<Detector> = oma_bits
        .iter()
        .map(|&b| Ok(Detector::new(&canonical(&[b])?)))
        .collect::<Result<_>>()?;
    let sigma_n = cfg.sigma_n();
    let full = variant == Scenario::Oma1;
    drive(users, &oma_bits, opts, |rng, len| {
        let mut t = BatchTally {
            errors: vec![0; users],
            symbols: vec![0; users],
            ..Default::default()
        };
        let mut idx = [[0usize; 2]];
        let mut err = [0u64];
        for _ in 0..len {
            t.runs += 1;
            let draw = sample_normalized(&cfg.reflectors, rng, full);
            for k in 0..users {
                let gain = match &draw.full_panel {
                    Some(panel) => panel[k],
                    None => draw.gamma_hat.row(k).iter().sum::<Complex64>().norm(),
                };
                let h = [scale[k] * gain];
                let thr = dets[k].thresholds_at(&h);
                err[0] = 0;
                dets[k].transmit(&h, &thr, sigma_n, rng, &mut idx, &mut err);
                t.errors[k] += err[0];
                t.symbols[k] += 1;
            }
        }
        t
    })
}

/// Dispatches on the scenario.
pub fn run_point(
    cfg: &SystemConfig,
    scenario: Scenario,
    powers_db: &[f64],
    opts: McOptions,
) -> Result<McResult> {
    match scenario {
        Scenario::Noma => run_noma_point(cfg, powers_db, opts),
        _ => run_oma_point(cfg, scenario, powers_db, opts),
    }
}

/// Simulates the superimposed constellation over fixed real gains `h_eff`.
pub fn run_fixed_channel(
    bits: &[u32],
    h_eff: &[f64],
    sigma_n: f64,
    opts: McOptions,
) -> Result<McResult> {
    if h_eff.len() != bits.len() {
        return Err(Error::Domain(format!(
            "{} gains for {} users",
            h_eff.len(),
            bits.len()
        )));
    }
    if !(sigma_n >= 0.0) {
        return Err(Error::Domain("noise deviation must be nonnegative".into()));
    }
    let det = Detector::new(&canonical(bits)?);
    let thr = det.thresholds_at(h_eff);
    let users = bits.len();
    drive(users, bits, opts, |rng, len| {
        let mut t = BatchTally {
            runs: len,
            errors: vec![0; users],
            symbols: vec![len; users],
            ..Default::default()
        };
        let mut idx = vec![[0usize; 2]; users];
        for _ in 0..len {
            det.transmit(h_eff, &thr, sigma_n, rng, &mut idx, &mut t.errors);
        }
        t
    })
}
