//! End-to-end acceptance checks on the benchmark system. Prints one line per
//! criterion and exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cdde_bound::certificate::{
    compute_certificate, compute_certificate_with, ultimate_bound, BoundCertificate,
    CertificateOptions,
};
use cdde_bound::envelope::gamma_component;
use cdde_bound::linalg::{DenseMatrix, DenseVector};
use cdde_bound::model::{example_system, SystemSpec};
use cdde_bound::simulator::{
    comparison_check, simulate, verify_domination, History, SignalKind, SignalSpec,
    SimulationScenario,
};
use cdde_bound::stability::alpha_max;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0x00c0_ffee;

const TOL_ETA: f64 = 5e-4;
const TOL_RUNTIME: Duration = Duration::from_millis(100);
const TOL_PQ: f64 = 5e-3;
const TOL_MU: f64 = 5e-4;
const TOL_T: f64 = 0.05;
const TOL_DECAY: f64 = 5e-4;
const TOL_FIRST_STEP: f64 = 1e-3;
const TOL_DOMINATION: f64 = 1e-6;
const TOL_GRID_REL: f64 = 0.02;
const TOL_INEQUALITY: f64 = 1e-10;
const TOL_SQUEEZE: f64 = 1e-3;
const TOL_SQUEEZE_ABOVE: f64 = 1e-9;
const TOL_INVARIANCE: f64 = 1e-6;
const TOL_ORDER: f64 = 1e-9;
const TOL_POSITIVITY: f64 = -1e-12;

const STEP: f64 = 1e-3;
const ALPHA_STEP: f64 = 1e-3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn vecd(v: &[f64]) -> DenseVector {
    DenseVector::new(v.to_vec()).unwrap()
}

fn max_abs_diff(a: &DenseVector, b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn reference_certificate() -> BoundCertificate {
    compute_certificate(&example_system(), ALPHA_STEP).unwrap()
}

fn criterion_1() -> Outcome {
    let spec = example_system();
    let start = Instant::now();
    let (eta, varsigma) = ultimate_bound(&spec).unwrap();
    let elapsed = start.elapsed();
    let err = max_abs_diff(&eta, &[0.7249, 1.4756, 0.5780])
        .max(max_abs_diff(&varsigma, &[3.7739, 1.1469]));
    outcome(
        err <= TOL_ETA && elapsed < TOL_RUNTIME,
        format!("eta={eta:.4} varsigma={varsigma:.4} max_err={err:.2e} runtime={elapsed:?}"),
    )
}

fn criterion_2() -> Outcome {
    let cert = reference_certificate();
    let err_pq = max_abs_diff(&cert.p, &[2.3951, 5.5118, 2.4220])
        .max(max_abs_diff(&cert.q, &[14.1659, 4.9990]));
    let err_mu = (cert.mu_raw - 0.0707).abs();
    outcome(
        err_pq <= TOL_PQ && err_mu <= TOL_MU,
        format!(
            "p={:.4} q={:.4} pq_err={err_pq:.2e} raw_mu={:.6} mu_err={err_mu:.2e}",
            cert.p, cert.q, cert.mu_raw
        ),
    )
}

fn criterion_3() -> Outcome {
    let cert = reference_certificate();
    let t = cert.convergence.t;
    outcome(
        (t - 1.2056).abs() <= TOL_T && cert.t_star == 2.0,
        format!("T={t:.4} T*={}", cert.t_star),
    )
}

fn criterion_4() -> Outcome {
    let cert = reference_certificate();
    let decay = cert.decay();
    let (x0, _) = cert.staircase(0.0).unwrap();
    let err = max_abs_diff(&x0, &[3.1200, 6.9874, 3.0000]);
    outcome(
        (decay - 0.9293).abs() <= TOL_DECAY && err <= TOL_FIRST_STEP,
        format!("1-mu={decay:.6} eta+p={x0:.4} err={err:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let spec = example_system();
    let cert = reference_certificate();
    let cases: Vec<(f64, f64)> = [0.0, 0.5, 1.0]
        .iter()
        .flat_map(|&a| [0.0, 1.0].map(move |b| (a, b)))
        .collect();
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = cases
            .iter()
            .map(|&(a, b)| {
                let (spec, cert) = (&spec, &cert);
                s.spawn(move || {
                    let traj =
                        simulate(&SimulationScenario::preset(spec, a, b, STEP, 40.0)).unwrap();
                    (a, b, verify_domination(&traj, cert))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let worst = results
        .iter()
        .map(|(_, _, r)| r.max_margin())
        .fold(f64::NEG_INFINITY, f64::max);
    let failures: Vec<String> = results
        .iter()
        .filter(|(_, _, r)| r.max_margin() > TOL_DOMINATION)
        .map(|(a, b, r)| format!("(a={a}, b={b}) margin {:.3e}", r.max_margin()))
        .collect();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("6 scenarios, worst margin {worst:.3e}")
        } else {
            failures.join("; ")
        },
    )
}

/// Random Metzler matrix with strictly dominant negative diagonal.
fn random_metzler_hurwitz(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i != j {
                let v = if rng.gen_bool(0.3) {
                    0.0
                } else {
                    rng.gen_range(0.0..2.0)
                };
                a[(i, j)] = v;
                row_sum += v;
            }
        }
        a[(i, i)] = -(row_sum + rng.gen_range(0.1..2.0));
    }
    a
}

/// Brute-force minimum of `(a·r)/(b·r)` over the simplex grid of the given
/// resolution.
fn simplex_grid_min(a: &DenseVector, b: &[f64], resolution: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..=resolution {
        for j in 0..=resolution - i {
            let k = resolution - i - j;
            let r = [i as f64, j as f64, k as f64].map(|v| v / resolution as f64);
            let den: f64 = b.iter().zip(&r).map(|(u, v)| u * v).sum();
            if den > 1e-12 {
                let num: f64 = a.iter().zip(&r).map(|(u, v)| u * v).sum();
                best = best.min(num / den);
            }
        }
    }
    best
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 6);
    let mut worst_gap: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..100 {
        let a = random_metzler_hurwitz(&mut rng, 3);
        let theta = vecd(&[0, 1, 2].map(|_| rng.gen_range(0.0..5.0)));
        let top = alpha_max(&a, ALPHA_STEP).unwrap();
        let alpha = (rng.gen_range(0.05..0.95) * top).max(ALPHA_STEP);
        let neg_inv = a
            .shift_diagonal(alpha)
            .unwrap()
            .inverse()
            .unwrap()
            .scale(-1.0);
        let numer = neg_inv.mul_vec(&theta).unwrap();
        for i in 0..3 {
            let gamma = gamma_component(&a, alpha, &theta, i).unwrap();
            let column: Vec<f64> = (0..3).map(|j| neg_inv[(j, i)]).collect();
            let grid = simplex_grid_min(&numer, &column, 100);
            let gap = grid - gamma;
            worst_gap = worst_gap.max(gap / (1.0 + gamma));
            // Allow round-off where the grid hits the exact minimiser.
            if gamma > grid + 1e-12 * (1.0 + gamma) || gap > TOL_GRID_REL * (1.0 + gamma) {
                failures += 1;
            }
        }
    }
    outcome(
        failures == 0,
        format!("300 components, {failures} failures, worst relative gap {worst_gap:.2e}"),
    )
}

fn criterion_7() -> Outcome {
    let spec = example_system();
    let mut certs = vec![reference_certificate()];
    certs.push(
        compute_certificate_with(
            &spec,
            &CertificateOptions {
                alpha_step: ALPHA_STEP,
                xi: Some(DenseVector::filled(5, 1.0)),
            },
        )
        .unwrap(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 7);
    for _ in 0..10 {
        let xi = vecd(&[0; 5].map(|_| rng.gen_range(0.2..3.0)));
        certs.push(
            compute_certificate_with(
                &spec,
                &CertificateOptions {
                    alpha_step: ALPHA_STEP,
                    xi: Some(xi),
                },
            )
            .unwrap(),
        );
    }
    let failures = certs
        .iter()
        .filter(|c| {
            !c.contraction_inequalities_hold(&spec, TOL_INEQUALITY)
                .unwrap()
        })
        .count();
    outcome(
        failures == 0,
        format!(
            "{} certificates, {failures} violate the contraction inequalities",
            certs.len()
        ),
    )
}

/// Constant maximal disturbances and zero initial data, with the benchmark's
/// time-varying delays.
fn squeeze_run(t_end: f64) -> (f64, f64) {
    let spec = example_system();
    let (eta, _) = ultimate_bound(&spec).unwrap();
    let delays = SimulationScenario::preset(&spec, 1.0, 1.0, STEP, t_end);
    let scenario = SimulationScenario {
        h1: delays.h1,
        h2: delays.h2,
        ..SimulationScenario::constant_inputs(
            &spec,
            DenseVector::zeros(3),
            DenseVector::zeros(2),
            STEP,
            t_end,
        )
    };
    let traj = simulate(&scenario).unwrap();
    let gap = max_abs_diff(&eta, traj.x(traj.len() - 1));
    let above = (0..traj.len())
        .flat_map(|k| {
            traj.x(k)
                .iter()
                .zip(eta.iter())
                .map(|(x, e)| x - e)
                .collect::<Vec<_>>()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    (gap, above)
}

fn criterion_8() -> Outcome {
    let (gap, above) = squeeze_run(60.0);
    // Reported only: the coupling loop C(-A)^-1 B + D has spectral radius
    // about 0.87 per delay interval, so the approach to eta is slow.
    let (late_gap, late_above) = squeeze_run(150.0);
    outcome(
        gap <= TOL_SQUEEZE && above <= TOL_SQUEEZE_ABOVE,
        format!(
            "|x(60)-eta|={gap:.3e} max(x-eta)={above:.3e} \
             (at t=150: |x-eta|={late_gap:.3e} max(x-eta)={late_above:.3e})"
        ),
    )
}

fn criterion_9() -> Outcome {
    let spec = example_system();
    let (eta, varsigma) = ultimate_bound(&spec).unwrap();
    let spec = spec.with_initial_bounds(eta.clone(), varsigma.clone());
    let scenario =
        SimulationScenario::constant_inputs(&spec, eta.clone(), varsigma.clone(), STEP, 20.0);
    let traj = simulate(&scenario).unwrap();
    let dev = (0..traj.len())
        .map(|k| max_abs_diff(&eta, traj.x(k)).max(max_abs_diff(&varsigma, traj.y(k))))
        .fold(0.0, f64::max);
    outcome(dev <= TOL_INVARIANCE, format!("max deviation {dev:.3e}"))
}

fn random_vec_below(rng: &mut ChaCha8Rng, upper: &DenseVector) -> DenseVector {
    vecd(
        &upper
            .iter()
            .map(|&u| rng.gen_range(0.0..=1.0) * u)
            .collect::<Vec<_>>(),
    )
}

fn criterion_10() -> Outcome {
    let spec = example_system();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 10);
    let pairs: Vec<(SimulationScenario, SimulationScenario)> = (0..20)
        .map(|_| {
            let (a, b) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
            let psi_hi = random_vec_below(&mut rng, &spec.psi_bar);
            let phi_hi = random_vec_below(&mut rng, &spec.phi_bar);
            let psi_lo = random_vec_below(&mut rng, &psi_hi);
            let phi_lo = random_vec_below(&mut rng, &phi_hi);
            let base = SimulationScenario::preset(&spec, a, b, STEP, 20.0);
            let lo = SimulationScenario {
                psi: psi_lo,
                phi: History::Constant(phi_lo),
                ..base.clone()
            };
            let hi = SimulationScenario {
                psi: psi_hi,
                phi: History::Constant(phi_hi),
                ..base
            };
            (lo, hi)
        })
        .collect();
    let ordered: Vec<bool> = std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .iter()
            .map(|(lo, hi)| s.spawn(move || comparison_check(lo, hi).unwrap()))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let bad = ordered.iter().filter(|ok| !**ok).count();
    outcome(
        bad == 0,
        format!("20 pairs on [0, 20], {bad} unordered (slack {TOL_ORDER:e})"),
    )
}

fn random_scenario(rng: &mut ChaCha8Rng, spec: &SystemSpec) -> SimulationScenario {
    let n = spec.n();
    let m = spec.m();
    let omega_amp: Vec<f64> = spec
        .omega_bar
        .iter()
        .map(|w| rng.gen_range(0.0..=1.0) * w)
        .collect();
    let d_amp: Vec<f64> = spec
        .d_bar
        .iter()
        .map(|w| rng.gen_range(0.0..=1.0) * w)
        .collect();
    let omega_freq: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let d_freq: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
    let h = spec.h_max;
    let o1 = rng.gen_range(0.0..=h / 2.0);
    let o2 = rng.gen_range(0.0..=h / 2.0);
    SimulationScenario {
        spec: spec.clone(),
        omega: SignalSpec::periodic(SignalKind::AbsSin, &omega_amp, &omega_freq, 0.0),
        d: SignalSpec::periodic(SignalKind::AbsCos, &d_amp, &d_freq, 0.0),
        h1: SignalSpec::scalar_abs_sin(o1, rng.gen_range(0.0..=h - o1), rng.gen_range(0.1..2.0)),
        h2: SignalSpec::scalar_abs_cos(o2, rng.gen_range(0.0..=h - o2), rng.gen_range(0.1..2.0)),
        psi: random_vec_below(rng, &spec.psi_bar),
        phi: History::Constant(random_vec_below(rng, &spec.phi_bar)),
        t_end: 20.0,
        step: STEP,
    }
}

fn criterion_11() -> Outcome {
    let spec = example_system();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 11);
    let scenarios: Vec<_> = (0..20).map(|_| random_scenario(&mut rng, &spec)).collect();
    let minima: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|sc| s.spawn(move || simulate(sc).unwrap().min_sample()))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let lowest = minima.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        lowest >= TOL_POSITIVITY,
        format!("20 scenarios on [0, 20], smallest sample {lowest:.3e}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("ultimate bound", criterion_1),
        ("comparison vectors and contraction factor", criterion_2),
        ("finite time and dwell", criterion_3),
        ("staircase coefficients", criterion_4),
        ("domination suite", criterion_5),
        ("envelope infimum vs simplex grid", criterion_6),
        ("contraction inequalities", criterion_7),
        ("ultimate bound squeeze", criterion_8),
        ("invariance", criterion_9),
        ("monotonicity", criterion_10),
        ("positivity", criterion_11),
    ];
    let mut failed = 0;
    for (idx, (name, run)) in criteria.iter().enumerate() {
        let result = run();
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag} {name}: {}", idx + 1, result.detail);
        if !result.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
