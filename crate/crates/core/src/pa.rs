//! Uplink power allocation minimizing the total average BER in dB over
//! per-user powers in dB, subject to per-user caps.
//!
//! The cap constraints enter through multipliers `xi_k` on the Lagrangian
//! `f(p) + sum_k xi_k (p_k - cap_k)`. Each outer iteration minimizes the
//! Lagrangian with damped Newton steps (finite-difference derivatives) and
//! then rescales `xi_k <- xi_k exp(eta (p_k - cap_k))`. A final projected
//! Newton pass on `f` inside the feasible box polishes the best feasible
//! iterate.

use nalgebra::{DMatrix, DVector};
use std::io::Write;

use crate::analytic::BerModel;
use crate::channel::SystemConfig;
use crate::error::{Error, Result};

/// Finite-difference step in dB.
pub const FD_STEP_DB: f64 = 0.05;
/// Lower bound on every power, in dB.
pub const POWER_FLOOR_DB: f64 = -50.0;
/// Room above the cap the Lagrangian iterates may explore, in dB.
const OVERSHOOT_DB: f64 = 10.0;
/// Largest Newton step per coordinate, in dB.
const MAX_STEP_DB: f64 = 5.0;
const COST_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaOptions {
    /// Inner stop: projected gradient infinity norm (dB per dB).
    pub grad_tol: f64,
    pub inner_max_iterations: usize,
    pub outer_max_iterations: usize,
    /// Multiplier update gain.
    pub eta: f64,
    /// Allowed cap violation in dB.
    pub feasibility_tol: f64,
    /// Outer stop: cost change between outer iterations in dB.
    pub cost_tol: f64,
}

impl Default for PaOptions {
    fn default() -> Self {
        PaOptions {
            grad_tol: 1e-4,
            inner_max_iterations: 200,
            outer_max_iterations: 40,
            eta: 0.5,
            feasibility_tol: 1e-3,
            cost_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PaProblem {
    pub model: BerModel,
    /// Per-user cap in dB.
    pub p_max_db: Vec<f64>,
    /// Initial multipliers.
    pub xi: Vec<f64>,
    /// Initial powers in dB.
    pub p0: Vec<f64>,
}

impl PaProblem {
    /// Same cap for every user. Powers start staggered below the cap,
    /// `cap - 10 (k - 1) / K` for user `k`, and multipliers start high.
    pub fn new(cfg: &SystemConfig, p_max_db: f64) -> Result<Self> {
        Self::with_caps(cfg, vec![p_max_db; cfg.users()])
    }

    pub fn with_caps(cfg: &SystemConfig, p_max_db: Vec<f64>) -> Result<Self> {
        let k = cfg.users();
        if p_max_db.len() != k {
            return Err(Error::config(
                "p_max",
                format!("expected {k} caps, found {}", p_max_db.len()),
            ));
        }
        if let Some(c) = p_max_db.iter().find(|c| !c.is_finite() || **c <= POWER_FLOOR_DB) {
            return Err(Error::config(
                "p_max",
                format!("cap {c} dB must be finite and above {POWER_FLOOR_DB} dB"),
            ));
        }
        let p0 = p_max_db
            .iter()
            .enumerate()
            .map(|(i, &c)| (c - 10.0 * i as f64 / k as f64).max(POWER_FLOOR_DB))
            .collect();
        Ok(PaProblem {
            model: BerModel::new(cfg)?,
            xi: vec![10.0; k],
            p0,
            p_max_db,
        })
    }

    pub fn users(&self) -> usize {
        self.p_max_db.len()
    }

    /// `10 log10(sum_k BER_k)` at powers `p_db`.
    pub fn cost(&self, p_db: &[f64]) -> Result<f64> {
        if p_db.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("powers must be finite".into()));
        }
        let total: f64 = self.model.ber_at(p_db)?.iter().sum();
        Ok(10.0 * total.max(COST_FLOOR).log10())
    }

    fn max_violation(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(&self.p_max_db)
            .map(|(p, c)| p - c)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn project(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.p_max_db)
            .map(|(p, c)| p.clamp(POWER_FLOOR_DB, *c))
            .collect()
    }
}

/// One optimizer iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub p: Vec<f64>,
    pub cost: f64,
    /// `max_k (p_k - cap_k)`; negative when strictly feasible.
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaSolution {
    pub p_star: Vec<f64>,
    pub cost: f64,
    pub ber: Vec<f64>,
    pub xi: Vec<f64>,
    pub trace: Vec<TraceEntry>,
}

pub fn write_trace<W: Write>(trace: &[TraceEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let k = trace.first().map_or(0, |t| t.p.len());
    let mut header = vec!["iteration".to_string()];
    header.extend((1..=k).map(|i| format!("p{i}_dB")));
    header.extend(["cost_dB".to_string(), "max_violation_dB".to_string()]);
    w.write_record(&header).map_err(csv_err)?;
    for t in trace {
        let mut rec = vec![t.iteration.to_string()];
        rec.extend(t.p.iter().map(|p| p.to_string()));
        rec.push(t.cost.to_string());
        rec.push(t.max_violation.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Domain(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Domain(format!("csv output: {e}"))
}

/// Objective with failures mapped to `+inf`.
fn safe<F: Fn(&[f64]) -> Result<f64>>(f: &F, p: &[f64]) -> f64 {
    match f(p) {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    }
}

/// Central-difference gradient and Hessian.
fn derivatives<F: Fn(&[f64]) -> Result<f64>>(f: &F, p: &[f64], f0: f64) -> (DVector<f64>, DMatrix<f64>) {
    let k = p.len();
    let h = FD_STEP_DB;
    let shifted = |moves: &[(usize, f64)]| {
        let mut q = p.to_vec();
        for &(i, d) in moves {
            q[i] += d;
        }
        safe(f, &q)
    };
    let mut g = DVector::zeros(k);
    let mut hess = DMatrix::zeros(k, k);
    for i in 0..k {
        let fp = shifted(&[(i, h)]);
        let fm = shifted(&[(i, -h)]);
        g[i] = (fp - fm) / (2.0 * h);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let v = (shifted(&[(i, h), (j, h)]) - shifted(&[(i, h), (j, -h)])
                - shifted(&[(i, -h), (j, h)])
                + shifted(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    (g, hess)
}

/// Solves `(H + mu I) d = -g`, raising `mu` until the shifted matrix is
/// positive definite.
fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = g.len();
    let scale = h.diagonal().abs().max().max(1e-8);
    let mut mu = 0.0;
    for _ in 0..30 {
        let shifted = h + DMatrix::identity(n, n) * mu;
        if let Some(ch) = shifted.cholesky() {
            let d = ch.solve(&(-g));
            if d.iter().all(|x| x.is_finite()) {
                return Some(d);
            }
        }
        mu = if mu == 0.0 { 1e-6 * scale } else { mu * 10.0 };
    }
    None
}

/// Damped projected Newton on `f` over the box `[lo, hi]`. Coordinates on a
/// bound whose gradient pushes outward are held fixed.
fn minimize_box<F, C>(
    f: &F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &PaOptions,
    mut record: C,
) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Result<f64>,
    C: FnMut(&[f64], f64),
{
    let k = x0.len();
    let clamp = |x: Vec<f64>| -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| v.clamp(lo[i], hi[i]))
            .collect()
    };
    let mut x = clamp(x0.to_vec());
    let mut fx = safe(f, &x);
    if !fx.is_finite() {
        return (x, fx);
    }
    for _ in 0..opts.inner_max_iterations {
        let (g, h) = derivatives(f, &x, fx);
        let free: Vec<usize> = (0..k)
            .filter(|&i| {
                let at_hi = x[i] >= hi[i] - 1e-12 && g[i] < 0.0;
                let at_lo = x[i] <= lo[i] + 1e-12 && g[i] > 0.0;
                !(at_hi || at_lo) && g[i].is_finite()
            })
            .collect();
        let pg = free.iter().map(|&i| g[i].abs()).fold(0.0, f64::max);
        if free.is_empty() || pg < opts.grad_tol {
            break;
        }
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
        let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
        let hf_ok = hf.iter().all(|v| v.is_finite());
        let df = if hf_ok { newton_direction(&gf, &hf) } else { None }.unwrap_or_else(|| -gf.clone());
        let longest = df.amax();
        let df = if longest > MAX_STEP_DB { df * (MAX_STEP_DB / longest) } else { df };
        let slope = gf.dot(&df);
        let (dir, slope) = if slope < 0.0 {
            (df, slope)
        } else {
            let sd = -gf.clone() * (MAX_STEP_DB / gf.amax().max(1e-300)).min(1.0);
            let s = gf.dot(&sd);
            (sd, s)
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let mut trial = x.clone();
            for (a, &i) in free.iter().enumerate() {
                trial[i] += t * dir[a];
            }
            let trial = clamp(trial);
            let ft = safe(f, &trial);
            if ft <= fx + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_)) = accepted else { break };
        let moved = xn.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = xn;
        fx = fn_;
        record(&x, fx);
        if moved < 1e-9 {
            break;
        }
    }
    (x, fx)
}

/// Runs the multiplier loop and returns the best feasible power vector.
///
/// Candidates include the starting point and the all-cap point, so the
/// returned cost never exceeds theirs.
pub fn optimize(problem: &PaProblem, opts: &PaOptions) -> Result<PaSolution> {
    let k = problem.users();
    if problem.xi.len() != k || problem.p0.len() != k {
        return Err(Error::Domain("multiplier and start vectors must have one entry per user".into()));
    }
    if problem.xi.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(Error::Domain("multipliers must be nonnegative".into()));
    }
    let cost = |p: &[f64]| problem.cost(p);
    let mut trace = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let consider = |p: &[f64], best: &mut Option<(Vec<f64>, f64)>| {
        let fp = problem.project(p);
        let c = safe(&cost, &fp);
        if c.is_finite() && best.as_ref().is_none_or(|(_, b)| c < *b) {
            *best = Some((fp, c));
        }
    };
    consider(&problem.p0, &mut best);
    consider(&problem.p_max_db, &mut best);
    if best.is_none() {
        return Err(Error::OptimizerDiverged {
            iterations: 0,
            reason: "cost is not finite at the starting point or at the caps".into(),
        });
    }

    let lo = vec![POWER_FLOOR_DB; k];
    let hi_lagr: Vec<f64> = problem.p_max_db.iter().map(|c| c + OVERSHOOT_DB).collect();
    let mut xi = problem.xi.clone();
    let mut p = problem.p0.clone();
    let mut iteration = 0;
    let mut last_cost = f64::INFINITY;
    for _ in 0..opts.outer_max_iterations {
        let xi_now = xi.clone();
        let lagrangian = |q: &[f64]| -> Result<f64> {
            let pen: f64 = q
                .iter()
                .zip(&problem.p_max_db)
                .zip(&xi_now)
                .map(|((q, c), x)| x * (q - c))
                .sum();
            Ok(problem.cost(q)? + pen)
        };
        let mut steps = Vec::new();
        let (pn, _) = minimize_box(&lagrangian, &p, &lo, &hi_lagr, opts, |x, _| steps.push(x.to_vec()));
        for s in &steps {
            iteration += 1;
            trace.push(TraceEntry {
                iteration,
                p: s.clone(),
                cost: safe(&cost, s),
                max_violation: problem.max_violation(s),
            });
            consider(s, &mut best);
        }
        p = pn;
        consider(&p, &mut best);
        let c = safe(&cost, &p);
        let viol = problem.max_violation(&p);
        for (x, (q, cap)) in xi.iter_mut().zip(p.iter().zip(&problem.p_max_db)) {
            *x *= (opts.eta * (q - cap)).exp();
        }
        if viol <= opts.feasibility_tol && (c - last_cost).abs() < opts.cost_tol {
            break;
        }
        last_cost = c;
    }

    let (start, _) = best.clone().expect("at least one finite candidate");
    let mut polish = Vec::new();
    let (pp, _) = minimize_box(&cost, &start, &lo, &problem.p_max_db, opts, |x, _| polish.push(x.to_vec()));
    for s in &polish {
        iteration += 1;
        trace.push(TraceEntry {
            iteration,
            p: s.clone(),
            cost: safe(&cost, s),
            max_violation: problem.max_violation(s),
        });
    }
    consider(&pp, &mut best);

    let (p_star, c) = best.expect("at least one finite candidate");
    let ber = problem.model.ber_at(&p_star)?;
    Ok(PaSolution {
        p_star,
        cost: c,
        ber,
        xi,
        trace,
    })
}
