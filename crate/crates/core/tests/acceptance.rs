//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero if any criterion fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risnoma::analytic::{assemble_cf, expected_q};
use risnoma::channel::gamma_params;
use risnoma::constellation::{conditional_ber, extract_ber_terms};
use risnoma::experiment::{builtin_preset, run_experiment, Overrides};
use risnoma::pa::{optimize, PaOptions, PaProblem};
use std::process::ExitCode;
use std::time::{Duration, Instant};

mod common;

use common::{
    channel_sums, constructive_expected_q, finite_difference_gap, golden, grid_minimum, ordered_h,
    region_oracle, TermCase, BIT_SETS,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn golden_expressions() -> Outcome {
    let checks = [
        golden::check_sign_bit(),
        golden::check_columns(),
        golden::check_merged(),
        golden::check_golden_file(),
    ];
    match checks.into_iter().find(|c| c.is_err()) {
        Some(Err(e)) => outcome(false, e),
        _ => outcome(true, "16/4-QAM terms match the hand derivation exactly".into()),
    }
}

fn region_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for bits in BIT_SETS {
        let exprs = extract_ber_terms(bits).unwrap();
        for _ in 0..100 {
            let h = ordered_h(bits, &mut rng);
            let sigma = rng.random_range(0.05..2.0);
            let want = region_oracle(bits, &h, sigma);
            for (e, w) in exprs.iter().zip(&want) {
                worst = worst.max((conditional_ber(e, &h, sigma) - w).abs());
            }
        }
    }
    outcome(worst <= 1e-12, format!("max abs deviation {worst:.2e} (limit 1e-12)"))
}

fn four_moments<F: Fn(&nalgebra::DMatrix<num_complex::Complex64>) -> f64 + Sync>(
    reflectors: &[usize],
    n: usize,
    seed: u64,
    pick: F,
) -> (f64, f64, f64) {
    let m = channel_sums(reflectors, n, seed, 4, |g, acc| {
        let x = pick(g);
        let mut p = 1.0;
        for v in acc.iter_mut() {
            p *= x;
            *v += p;
        }
    });
    let nf = n as f64;
    let mean = m[0] / nf;
    let var = m[1] / nf - mean * mean;
    let m4c = m[3] / nf - 4.0 * mean * m[2] / nf + 6.0 * mean * mean * m[1] / nf - 3.0 * mean.powi(4);
    (mean, var, m4c)
}

fn channel_statistics() -> Outcome {
    let n = 1_000_000;
    let l = 100;
    let (mean, var, m4c) = four_moments(&[l], n, 5, |g| g[(0, 0)].re);
    let (zeta, shape) = gamma_params(l, 1.0, 1.0, 1.0);
    let nf = n as f64;
    let z_mean = (mean - shape * zeta) / (var / nf).sqrt();
    let z_var = (var - shape * zeta * zeta) / ((m4c - var * var) / nf).sqrt();
    let mut pass = z_mean.abs() < 3.0 && z_var.abs() < 3.0;
    let mut detail = format!("own L=100: mean {z_mean:+.2} se, var {z_var:+.2} se;");
    for lj in [1usize, 4, 16] {
        let (_, v, _) = four_moments(&[1, lj], n, 40 + lj as u64, |g| g[(0, 1)].re);
        let rel = v / (lj as f64 / 2.0) - 1.0;
        pass &= rel.abs() < 0.02;
        detail += &format!(" cross L={lj}: var {:+.2}%", 100.0 * rel);
    }
    outcome(pass, detail)
}

fn inversion_integral() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case_no in 0..50 {
        let case = TermCase::random(&mut rng);
        let got = expected_q(&assemble_cf(&case.a, &case.stats()), case.sigma).unwrap();
        let (mc, se) = constructive_expected_q(&case, 1_000_000, 1000 + case_no);
        worst = worst.max(((got - mc) / se).abs());
    }
    let sym = TermCase {
        a: vec![0, 1, 2],
        s: vec![0.3, 0.2, 0.1],
        l: vec![10, 20, 30],
        sigma: 1.0,
    };
    let mut cf = assemble_cf(&sym.a, &sym.stats());
    cf.gamma_factors.clear();
    let half = (expected_q(&cf, 0.7).unwrap() - 0.5).abs();
    outcome(
        worst < 3.0 && half <= 1e-10,
        format!("50 term CFs within {worst:.2} se of sampling; symmetric |E - 1/2| = {half:.1e}"),
    )
}

fn floor_reproduction() -> Outcome {
    let preset = builtin_preset("fig4_L70").unwrap();
    let result = run_experiment(&preset).unwrap();
    let top = preset.sweep_stop;
    let target = [1.5e-3, 3e-3];
    let mut pass = true;
    let mut detail = String::new();
    let (mut agree, mut total) = (0, 0);
    for row in &result.rows {
        let (a, m, se) = (row.ber_analytic.unwrap(), row.ber_mc.unwrap(), row.stderr_mc.unwrap());
        total += 1;
        if (a - m).abs() <= 3.0 * se {
            agree += 1;
        }
        if row.power_db == top {
            let t = target[row.user - 1];
            let ok = |v: f64| v >= t / 2.0 && v <= 2.0 * t;
            pass &= ok(a) && ok(m);
            detail += &format!("U{} floor analytic {a:.3e} sim {m:.3e} (target {t:.1e}); ", row.user);
        }
    }
    let frac = agree as f64 / total as f64;
    pass &= frac >= 0.95;
    detail += &format!("3 se agreement at {agree}/{total} points ({:.0}%, need 95%)", 100.0 * frac);
    outcome(pass, detail)
}

fn floor_elimination() -> Outcome {
    let preset = builtin_preset("fig4_L70").unwrap();
    let cfg = preset.config_at(60.0);
    let problem = PaProblem::new(&cfg, 60.0).unwrap();
    let sol = optimize(&problem, &PaOptions::default()).unwrap();
    let (grid_p, grid_cost) = grid_minimum(&problem, 30.0, 60.0, 0.5);
    let pass = sol.ber.iter().all(|&b| b < 1e-5);
    outcome(
        pass,
        format!(
            "p* = ({:.2}, {:.2}) dB, BER = ({:.2e}, {:.2e}), limit 1e-5; grid optimum ({:.1}, {:.1}) dB cost {grid_cost:.3} dB vs {:.3} dB",
            sol.p_star[0], sol.p_star[1], sol.ber[0], sol.ber[1], grid_p[0], grid_p[1], sol.cost
        ),
    )
}

fn finite_difference_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for bits in BIT_SETS.iter().copied().chain([&[2u32][..], &[4], &[6, 4, 4]]) {
        for eps in [0.1, 0.01] {
            worst = worst.max(finite_difference_gap(bits, eps));
        }
    }
    outcome(worst < 1e-9, format!("max deviation from integer rows {worst:.1e}"))
}

fn determinism() -> Outcome {
    let mut detail = String::new();
    let mut pass = true;
    for (name, runs) in [("fig4_L70", 200_000), ("fig4_L70_oma2", 100_000), ("fig7_3user_L100", 50_000), ("fig4_L70_pa", 50_000)] {
        let preset = builtin_preset(name).unwrap().with_overrides(&Overrides {
            runs: Some(runs),
            ..Overrides::default()
        });
        let csv = || {
            let mut buf = Vec::new();
            run_experiment(&preset).unwrap().write_csv(&mut buf).unwrap();
            buf
        };
        let (a, b) = (csv(), csv());
        let same = a == b;
        pass &= same;
        detail += &format!("{name}: {} bytes {}; ", a.len(), if same { "identical" } else { "DIFFER" });
    }
    outcome(pass, detail.trim_end_matches("; ").to_string())
}

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check, Duration); 8] = [
        ("golden 16/4-QAM expressions", golden_expressions, Duration::from_secs(1)),
        ("decision-region oracle", region_oracle_equivalence, Duration::from_secs(30)),
        ("channel statistics", channel_statistics, Duration::from_secs(60)),
        ("inversion integral", inversion_integral, Duration::from_secs(300)),
        ("error floor reproduction", floor_reproduction, Duration::from_secs(1200)),
        ("floor elimination by power allocation", floor_elimination, Duration::from_secs(600)),
        ("finite-difference coefficients", finite_difference_equivalence, Duration::from_secs(1)),
        ("determinism", determinism, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let took = start.elapsed();
        let pass = o.pass && took <= limit;
        if !pass {
            failed += 1;
        }
        let time_note = if took > limit { " (over time limit)" } else { "" };
        println!(
            "criterion {}: {} {name} [{:.1} s{time_note}] {}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            o.detail
        );
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
