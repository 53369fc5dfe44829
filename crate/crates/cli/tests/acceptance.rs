//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Built with `harness = false` so the lines are
//! never swallowed by output capture.

use std::f64::consts::{E, PI};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use lpbound::estimators::{
    entropy_knn, innovation_mutual_information, lagged_mutual_information, mutual_information, EstimatorParams, SampleMatrix,
};
use lpbound::gaussian_oracle::{
    ar_spectrum, arma_spectrum, brute_force_conditional_entropy, conditional_entropy_rate, finite_horizon_conditional_entropy,
    masked_conditional_entropy, szego_entropy_rate, BayesLinearModel, LinearGaussianModel,
};
use lpbound::harness::{achievability_diagnostics, bound_report, generalization_experiment, BoundReport, EntropySource, Learner, ProcessSpec};
use lpbound::maxent::{entropy_to_lp_bound, lp_constant, MaxEntDistribution, PNorm};
use lpbound::predictors::{run_online, ArPlugin, NlmsPredictor, OnlinePredictor, PredictionTrace, PredictorSpec, ZeroPredictor};
use lpbound::processes::{gen_ar, Trajectory};
use lpbound::rng::derive_indexed;

/// One seed for every stochastic criterion; never tuned.
const SEED: u64 = 2024;
const AR_LENGTH: usize = 20_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within_time(o: Outcome, elapsed: Duration, limit: Option<Duration>) -> Outcome {
    match limit {
        Some(l) if elapsed > l => check(false, format!("{}; too slow: limit {:.0?}", o.detail, l)),
        _ => o,
    }
}

fn ar1(p: PNorm, length: usize) -> Trajectory {
    let law = MaxEntDistribution::new(p, 1.0).unwrap();
    gen_ar(&[0.9], &law, length, SEED).unwrap()
}

fn report(t: &Trajectory, predictor: &mut dyn OnlinePredictor, p: PNorm) -> (PredictionTrace, BoundReport) {
    let trace = run_online(t, predictor).unwrap();
    let r = bound_report(t, &trace, p, &EntropySource::Oracle, None).unwrap();
    (trace, r)
}

fn constants() -> Outcome {
    let cases = [
        ("p=1", PNorm::ONE, 2.0 * E, 5.436_563_656_918_09),
        ("p=2", PNorm::TWO, (2.0 * PI * E).sqrt(), 4.132_731_354_122_49),
        ("p=inf", PNorm::INFINITY, 2.0, 2.0),
    ];
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (name, p, exact, literal) in cases {
        let c = lp_constant(p);
        let rel = ((c - exact) / exact).abs().max(((c - literal) / literal).abs());
        worst = worst.max(rel);
        lines.push(format!("{name} {c:.12}"));
    }
    check(worst < 5e-12, format!("{}; worst relative error {worst:.1e}", lines.join(", ")))
}

fn gaussian_tightness() -> Outcome {
    let t = ar1(PNorm::TWO, AR_LENGTH);
    let (_, r) = report(&t, &mut ArPlugin::new(vec![0.9]), PNorm::TWO);
    let pass = (r.lower_bound - 1.0).abs() < 1e-12 && (0.98..=1.02).contains(&r.empirical_lp) && r.gap.abs() <= 0.02;
    check(pass, format!("bound {:.12}, rmse {:.4}, gap {:+.4}", r.lower_bound, r.empirical_lp, r.gap))
}

fn laplace_tightness() -> Outcome {
    let t = ar1(PNorm::ONE, AR_LENGTH);
    let (_, r) = report(&t, &mut ArPlugin::new(vec![0.9]), PNorm::ONE);
    let pass = (r.lower_bound - 1.0).abs() < 1e-12 && (r.empirical_lp - 1.0).abs() <= 0.03;
    check(pass, format!("bound {:.12}, mean |e| {:.4}", r.lower_bound, r.empirical_lp))
}

fn uniform_tightness() -> Outcome {
    let t = ar1(PNorm::INFINITY, 50_000);
    let (_, r) = report(&t, &mut ArPlugin::new(vec![0.9]), PNorm::INFINITY);
    let pass = (r.lower_bound - 1.0).abs() < 1e-12 && (0.99..=1.0).contains(&r.empirical_lp);
    check(pass, format!("bound {:.12}, max |e| {:.5}", r.lower_bound, r.empirical_lp))
}

fn strict_gaps() -> Outcome {
    let t = ar1(PNorm::TWO, AR_LENGTH);
    let rmse = 1.0 / 0.19f64.sqrt();
    let (_, zero) = report(&t, &mut ZeroPredictor, PNorm::TWO);
    let zero_ok = (zero.empirical_lp / rmse - 1.0).abs() <= 0.03 && (zero.gap / (rmse - 1.0) - 1.0).abs() <= 0.03;
    let (_, lms) = report(&t, &mut NlmsPredictor::new(0, 1, 0.5).unwrap(), PNorm::TWO);
    let mismatched = PredictorSpec::MismatchedKalman { transition: vec![vec![0.5]] };
    let (_, mis) = report(&t, mismatched.build(&t).unwrap().as_mut(), PNorm::TWO);
    let pass = zero_ok && lms.strictly_suboptimal() && mis.strictly_suboptimal();
    let z = |r: &BoundReport| r.gap / r.empirical_std_error;
    check(
        pass,
        format!(
            "zero rmse {:.4} (target {rmse:.4}), gap {:.4} (target {:.4}); lms gap {:.4} = {:.0} SE; mismatched gap {:.4} = {:.0} SE",
            zero.empirical_lp,
            zero.gap,
            rmse - 1.0,
            lms.gap,
            z(&lms),
            mis.gap,
            z(&mis)
        ),
    )
}

fn diagnostics() -> Outcome {
    const LAG: usize = 5;
    const TINY: f64 = 0.02;
    let params = EstimatorParams { k: 5, lag: LAG, ..EstimatorParams::default() };
    let t = ar1(PNorm::TWO, AR_LENGTH);
    let trace = run_online(&t, &mut ArPlugin::new(vec![0.9])).unwrap();
    let d = achievability_diagnostics(&t, &trace, &params).unwrap();
    let lagged: Vec<f64> = d.lagged_mi.iter().map(|l| l.estimate.reported()).collect();
    let raw: Vec<f64> = d.lagged_mi.iter().map(|l| (l.estimate.bits() * 1e4).round() / 1e4).collect();
    let plugin_ok = d.lagged_mi.len() == LAG
        && d.innovations_white()
        && d.inputs_exhausted()
        && lagged.iter().all(|&v| v < TINY)
        && d.innovation_mi.reported() < TINY
        && d.transfer_entropy.reported() < TINY;

    // The AR plug-in has no inputs, so its transfer entropy vanishes by
    // construction. The Kalman filter on an input-driven state-space model is
    // the plug-in predictor that actually has inputs to exhaust.
    let spec: ProcessSpec = serde_json::from_str(
        r#"{"generator":"lgssm","model":{"transition":[[0.7]],"state_noise":[[0.3]],"input_map":[[1.0]],"output_map":[1.0],"feedthrough":[0.8],"output_noise":0.2}}"#,
    )
    .unwrap();
    let s = spec.generate(AR_LENGTH, SEED).unwrap();
    let kalman = run_online(&s, PredictorSpec::Kalman { model: None }.build(&s).unwrap().as_mut()).unwrap();
    let te_params = EstimatorParams { lag: 2, ..params };
    let dk = achievability_diagnostics(&s, &kalman, &te_params).unwrap();
    let te_ok = dk.inputs_exhausted() && dk.transfer_entropy.reported() < TINY;

    let mis_spec = PredictorSpec::MismatchedKalman { transition: vec![vec![0.5]] };
    let mis = run_online(&t, mis_spec.build(&t).unwrap().as_mut()).unwrap();
    let joint = innovation_mutual_information(&mis.innovations, LAG, params.k).unwrap().bits();
    let lag1 = lagged_mutual_information(&mis.innovations, 1, params.k).unwrap().bits();
    let rho: f64 = 0.22 / 0.35;
    let closed = -0.5 * (1.0 - rho * rho).log2();
    let mis_ok = joint > 0.1 && (lag1 - closed).abs() <= 0.05;

    check(
        plugin_ok && te_ok && mis_ok,
        format!(
            "plug-in lagged MI raw {:?} (floor {:.4}), joint {:.4} (floor {:.4}), TE {:.4}; kalman TE {:.4} (floor {:.4}); mismatched MI {:.3}, lag-1 {:.4} vs {closed:.4}",
            raw,
            d.lagged_mi_floor.threshold,
            d.innovation_mi.reported(),
            d.innovation_mi_floor.threshold,
            d.transfer_entropy.reported(),
            dk.transfer_entropy.reported(),
            dk.transfer_entropy_floor.threshold,
            joint,
            lag1
        ),
    )
}

fn estimators() -> Outcome {
    let n = 50_000;
    let z = MaxEntDistribution::new(PNorm::TWO, 1.0).unwrap();
    let a = z.sample(n, derive_indexed(SEED, "calibration", 0)).unwrap();
    let b = z.sample(n, derive_indexed(SEED, "calibration", 1)).unwrap();
    let h = entropy_knn(&SampleMatrix::from_scalars(&a).unwrap(), 5).unwrap().bits();
    let h_exact = 0.5 * (2.0 * PI * E).log2();
    let rho: f64 = 0.9;
    let y: Vec<f64> = a.iter().zip(&b).map(|(x, w)| rho * x + (1.0 - rho * rho).sqrt() * w).collect();
    let mi = mutual_information(&SampleMatrix::from_scalars(&a).unwrap(), &SampleMatrix::from_scalars(&y).unwrap(), 5).unwrap().bits();
    let mi_exact = -0.5 * (1.0 - rho * rho).log2();
    let pass = (h - 2.0471).abs() <= 0.03 && (mi - 1.1980).abs() <= 0.05;
    check(pass, format!("KL entropy {h:.4} (exact {h_exact:.4}); KSG MI {mi:.4} (exact {mi_exact:.4})"))
}

fn monotone_labels() -> Outcome {
    const STEPS: usize = 10;
    const RANDOM_MASKS: u64 = 50;
    let model = LinearGaussianModel::scalar(0.9, 1.0, 1.0, 1.0).unwrap();
    let bound = |k: usize, observed: &[usize]| {
        entropy_to_lp_bound(masked_conditional_entropy(&model, k, observed).unwrap().entropy, PNorm::TWO)
    };
    let mut masks: Vec<Vec<bool>> = vec![vec![true; STEPS], vec![false; STEPS]];
    masks.extend((0..RANDOM_MASKS).map(|i| {
        let bits = derive_indexed(SEED, "mask", i);
        (0..STEPS).map(|j| bits >> j & 1 == 1).collect()
    }));
    let mut failures = Vec::new();
    let mut strict = 0;
    for (m, mask) in masks.iter().enumerate() {
        for k in 1..STEPS {
            let all: Vec<usize> = (0..k).collect();
            let seen: Vec<usize> = all.iter().copied().filter(|&j| mask[j]).collect();
            let (sup, semi, unsup) = (bound(k, &all), bound(k, &seen), bound(k, &[]));
            let ok = if seen.len() == k {
                semi == sup && sup < unsup
            } else if seen.is_empty() {
                semi == unsup && sup < semi
            } else {
                strict += 1;
                sup < semi && semi < unsup
            };
            if !ok {
                failures.push(format!("mask {m} step {k}: {sup} {semi} {unsup}"));
            }
        }
    }
    check(
        failures.is_empty(),
        format!("{} masks x {} steps, {strict} strictly interior cases; violations: {:?}", masks.len(), STEPS - 1, failures),
    )
}

fn generalization() -> Outcome {
    let model = BayesLinearModel::isotropic(3, 1.0, 0.01).unwrap();
    let bayes = generalization_experiment(&model, 50, Learner::Bayes, 2000, PNorm::TWO, SEED).unwrap();
    let zero = generalization_experiment(&model, 50, Learner::Zero, 2000, PNorm::TWO, SEED).unwrap();
    let rel = bayes.empirical_lp / bayes.lower_bound - 1.0;
    let pass = rel.abs() <= 0.05 && zero.gap > 0.0 && zero.gap >= 10.0 * zero.lower_bound;
    check(
        pass,
        format!(
            "bayes rms {:.5} vs mean bound {:.5} ({:+.2}%); zero gap {:.4} = {:.0}x bound",
            bayes.empirical_lp,
            bayes.lower_bound,
            100.0 * rel,
            zero.gap,
            zero.gap / zero.lower_bound
        ),
    )
}

fn oracle_consistency() -> Outcome {
    const GRID: usize = 1 << 14;
    let ar = LinearGaussianModel::ar(&[0.9], 1.0).unwrap();
    let arma = LinearGaussianModel::arma11(0.7, 0.4, 1.0).unwrap();
    let d_ar = (conditional_entropy_rate(&ar).unwrap().bits() - szego_entropy_rate(ar_spectrum(&[0.9], 1.0), GRID).unwrap().bits()).abs();
    let d_arma = (conditional_entropy_rate(&arma).unwrap().bits()
        - szego_entropy_rate(arma_spectrum(&[0.7], &[0.4], 1.0), GRID).unwrap().bits())
    .abs();
    let models = [
        LinearGaussianModel::scalar(0.9, 1.0, 1.0, 1.0).unwrap(),
        LinearGaussianModel::ar(&[0.5, 0.3], 1.0).unwrap(),
        arma,
    ];
    let mut worst: f64 = 0.0;
    let mut regularized = false;
    for m in &models {
        for k in 0..=30 {
            let brute = brute_force_conditional_entropy(m, k).unwrap();
            regularized |= brute.regularized;
            worst = worst.max((finite_horizon_conditional_entropy(m, k).bits() - brute.entropy.bits()).abs());
        }
    }
    let pass = d_ar <= 1e-6 && d_arma <= 1e-6 && worst <= 1e-9 && !regularized;
    check(pass, format!("szego vs riccati: ar {d_ar:.1e}, arma {d_arma:.1e}; finite horizon vs brute force {worst:.1e}"))
}

fn determinism() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/default.toml");
    let root = std::env::temp_dir().join(format!("lpbound-acceptance-{}", std::process::id()));
    let run = |name: &str| {
        let out = root.join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_lpbound"))
            .args(["--out", out.to_str().unwrap(), "bench", "--config", config.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        ["reports.csv", "plot_data.csv", "reports.json"].map(|f| fs::read(out.join(f)).unwrap())
    };
    let (a, b) = (run("a"), run("b"));
    let _ = fs::remove_dir_all(&root);
    let identical = a == b;
    check(identical, format!("{} bytes of CSV, identical: {identical}", a[0].len() + a[1].len()))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);
    let secs = Duration::from_secs;
    let criteria: [Criterion; 11] = [
        ("constant fidelity", constants, Some(secs(1))),
        ("tightness p=2", gaussian_tightness, Some(secs(10))),
        ("tightness p=1", laplace_tightness, Some(secs(10))),
        ("tightness p=inf", uniform_tightness, Some(secs(10))),
        ("strict gap for suboptimal predictors", strict_gaps, None),
        ("achievability diagnostics", diagnostics, None),
        ("estimator calibration", estimators, None),
        ("semi-supervised monotonicity", monotone_labels, Some(secs(5))),
        ("generalization", generalization, Some(secs(30))),
        ("oracle self-consistency", oracle_consistency, None),
        ("determinism", determinism, None),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            check(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let outcome = within_time(outcome, elapsed, limit);
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {verdict} {name} [{:.2?}]: {}", i + 1, elapsed, outcome.detail);
        failed += usize::from(!outcome.pass);
    }
    println!("acceptance: {} of {} criteria passed", 11 - failed, 11);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
