//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use supobs::engine::{convergence_metrics, run, write_trace_csv, Policy, ScenarioConfig, SimulationTrace};
use supobs::lmi::{check_certificate, check_pair, Certificate, CheckOptions, NSD_TOLERANCE};
use supobs::model::{case_study_system, pe_input, CaseStudyParams, InputSpec, LureSystem, SystemModel};
use supobs::observer::observer_step;
use supobs::sampling::{covering_radius, equidistant_samples, grid_samples, SamplingState};
use supobs::supervisor::MonitoringState;
use supobs::Vector;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit_s,
        format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64()),
    )
}

fn plant() -> LureSystem {
    case_study_system(&CaseStudyParams::default()).unwrap()
}

fn simulate(config: &ScenarioConfig) -> SimulationTrace {
    run(config, &config.system().unwrap(), &Certificate::case_study()).unwrap()
}

fn monitoring_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for lambda in [0.0, 0.5, 0.995] {
        for _ in 0..100 {
            let n = 3;
            let seq: Vec<Vec<Vector>> = (0..200)
                .map(|_| (0..n).map(|_| Vector::from_fn(2, |_, _| rng.random_range(-2.0..2.0))).collect())
                .collect();
            let mut m = MonitoringState::new(n, lambda).unwrap();
            for e in &seq {
                m.update(e, false);
            }
            for i in 0..n {
                let k = seq.len();
                let direct: f64 = (0..k)
                    .map(|j| lambda.powi((k - 1 - j) as i32) * seq[j][i].norm_squared())
                    .sum();
                worst = worst.max((m.mu[i] - direct).abs());
            }
        }
    }
    ensure(worst <= 1e-10, format!("max deviation {worst:e}"))?;
    within(start.elapsed(), 1.0)?;
    Ok(format!("max |recursive - direct| = {worst:.2e} over 300 sequences"))
}

fn sampling_density() -> Outcome {
    let start = Instant::now();
    let s = equidistant_samples(1.0, 50.0, 10).unwrap();
    let expected = [3.45, 8.35, 13.25, 18.15, 23.05, 27.95, 32.85, 37.75, 42.65, 47.55];
    for (a, b) in s.iter().zip(expected) {
        ensure((a - b).abs() <= 1e-12, format!("sample {a} differs from {b}"))?;
    }
    let bx = plant().parameter_box;
    let grid = grid_samples(&bx, 10).unwrap();
    let probes = 100_000;
    let radius = covering_radius(&bx, &grid, probes, Default::default()).unwrap();
    let probe_step = 49.0 / (probes - 1) as f64;
    ensure(
        (radius - 2.45).abs() <= probe_step,
        format!("covering radius {radius} vs 2.45 (probe step {probe_step:e})"),
    )?;
    within(start.elapsed(), 1.0)?;
    Ok(format!("samples 3.45..47.55, covering radius {radius:.6} (probe step {probe_step:.1e})"))
}

fn zoom_geometry() -> Outcome {
    let bx = plant().parameter_box;
    let mut state = SamplingState::new(bx.clone(), 10, 0.8, 0.0).unwrap();
    let mut worst_rel: f64 = 0.0;
    for m in 0..=10 {
        let expected = 24.5 * 0.8f64.powi(m);
        worst_rel = worst_rel.max((state.current_radius - expected).abs() / expected);
        let pick = state.samples[state.len() / 2].clone();
        state = state.zoom(pick.as_slice()).unwrap();
    }
    ensure(worst_rel <= 1e-12, format!("radius relative error {worst_rel:e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut zooms = 0;
    for run_index in 0..50 {
        let mut c = ScenarioConfig::case_study();
        c.policy = Policy::Dynamic;
        c.horizon = 1200;
        c.zoom_interval = Some(rng.random_range(50..=150));
        c.alpha = rng.random_range(0.3..0.95);
        c.true_parameter = vec![rng.random_range(1.0..50.0)];
        c.noise_inflation = rng.random_range(0.0..1.0);
        c.noise.delta_v = rng.random_range(0.0..0.02);
        c.noise.delta_w = rng.random_range(0.0..0.02);
        c.seed = rng.random();
        let t = simulate(&c);
        for pair in t.stages.windows(2) {
            let outer = supobs::model::ParameterBox::new(pair[0].lower.clone(), pair[0].upper.clone()).unwrap();
            let inner = supobs::model::ParameterBox::new(pair[1].lower.clone(), pair[1].upper.clone()).unwrap();
            ensure(inner.is_subset_of(&outer), format!("run {run_index}: stage {} box escapes its parent", pair[1].stage))?;
            zooms += 1;
        }
    }
    Ok(format!("radius relative error {worst_rel:.1e} for m <= 10; {zooms} nested zooms in 50 runs"))
}

fn certificate_checker() -> Outcome {
    let start = Instant::now();
    let sys = plant();
    let cert = Certificate::case_study();
    let report = check_certificate(&cert, &sys.parameter_box, &sys, CheckOptions::default()).unwrap();
    ensure(report.passed, report.to_text())?;
    let worst_vertex = report.vertex_checks.iter().map(|c| c.max_eigenvalue).fold(f64::NEG_INFINITY, f64::max);
    ensure(report.vertex_checks.len() == 4, "expected 4 vertex pairs")?;
    ensure(worst_vertex <= -1e-9, format!("vertex margin {worst_vertex:e}"))?;
    let mut worst_gap = report.vertex_checks.iter().filter_map(|c| c.schur_gap).fold(f64::NEG_INFINITY, f64::max);
    let mut worst_interior = f64::NEG_INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let p = rng.random_range(1.0..=50.0);
        let p_hat = rng.random_range(1.0..=50.0);
        let c = check_pair(&cert, &[p], &[p_hat], &sys, NSD_TOLERANCE, true).unwrap();
        ensure(c.pass, format!("interior pair ({p}, {p_hat}) fails with {:e}", c.max_eigenvalue))?;
        worst_interior = worst_interior.max(c.max_eigenvalue);
        worst_gap = worst_gap.max(c.schur_gap.unwrap());
    }
    ensure(worst_gap <= 1e-9, format!("Schur gap {worst_gap:e}"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "vertex lambda_max <= {worst_vertex:.3e}, interior <= {worst_interior:.3e}, Schur gap <= {worst_gap:.3e}"
    ))
}

fn matched_observer_decay() -> Outcome {
    let sys = plant();
    let cert = Certificate::case_study();
    let p = Vector::from_element(1, 21.0);
    let input = InputSpec::default();
    let mut x = Vector::from_vec(vec![0.5, -0.3]);
    let mut x_hat = &x + Vector::from_vec(vec![1.0, 0.0]);
    let lyap = |e: &Vector| (e.transpose() * &cert.p * e)[(0, 0)];
    let p_max = cert.p.symmetric_eigenvalues().max();
    let mut v_prev = lyap(&(&x_hat - &x));
    let mut floor_steps = 0;
    let zero_v = Vector::zeros(1);
    let zero_w = Vector::zeros(2);
    let mut reached = None;
    for k in 0..6000 {
        let u = pe_input(&input, k, sys.sampling_time);
        let y = sys.output(&x, &p, &u, &zero_w);
        let (next, _) = observer_step(&x_hat, &p, &u, &y, &cert.schedule, &sys);
        x = sys.step(&x, &p, &u, &zero_v);
        x_hat = next;
        let v = lyap(&(&x_hat - &x));
        let floor = p_max * (8.0 * f64::EPSILON * x.norm().max(1.0)).powi(2);
        if v > v_prev && v <= floor {
            floor_steps += 1;
        }
        ensure(v <= v_prev.max(floor), format!("V increased at k = {}: {v_prev:e} -> {v:e}", k + 1))?;
        v_prev = v;
        if reached.is_none() && (&x_hat - &x).norm() < 1e-6 {
            reached = Some(k + 1);
        }
    }
    let k = reached.ok_or("error never dropped below 1e-6")?;
    Ok(format!("|x~| < 1e-6 from k = {k}; V non-increasing over 6000 steps ({floor_steps} steps at round-off level)"))
}

fn static_convergence() -> Outcome {
    let start = Instant::now();
    let c = ScenarioConfig::case_study();
    let t = simulate(&c);
    let m = convergence_metrics(&t, 2.45);
    let entry = m.entry_time.ok_or("no entry time for margin 2.45")?;
    ensure(m.trailing_max_err_x <= 0.05, format!("noiseless trailing |x~| = {}", m.trailing_max_err_x))?;

    let mut noisy = c.clone();
    noisy.noise.delta_v = 0.01;
    noisy.noise.delta_w = 0.01;
    let tn = simulate(&noisy);
    let mn = convergence_metrics(&tn, 2.45 + noisy.noise_inflation);
    ensure(
        mn.trailing_max_err_p <= 2.45 + noisy.noise_inflation,
        format!("noisy trailing |p~| = {}", mn.trailing_max_err_p),
    )?;
    ensure(mn.trailing_max_err_x <= 0.5, format!("noisy trailing |x~| = {}", mn.trailing_max_err_x))?;
    within(start.elapsed() / 2, 10.0)?;
    Ok(format!(
        "noiseless entry k = {entry}, trailing |p~| {:.3} |x~| {:.2e}; noisy trailing |p~| {:.3} |x~| {:.2e}",
        m.trailing_max_err_p, m.trailing_max_err_x, mn.trailing_max_err_p, mn.trailing_max_err_x
    ))
}

fn dynamic_case() -> ScenarioConfig {
    let mut c = ScenarioConfig::case_study();
    c.policy = Policy::Dynamic;
    c.zoom_interval = Some(1000);
    c.alpha = 0.8;
    c
}

fn dynamic_improvement() -> Outcome {
    let start = Instant::now();
    let t = simulate(&dynamic_case());
    within(start.elapsed(), 10.0)?;
    let zooms = t.zoom_instants();
    ensure(zooms == vec![1000, 2000, 3000, 4000, 5000, 6000], format!("zoom instants {zooms:?}"))?;
    let mut last = None;
    for s in &t.stages {
        ensure(s.contains_true, format!("true parameter outside stage {} box", s.stage))?;
        if let Some(e) = s.end_error {
            let bound = s.delta / 10.0 + 1e-9;
            ensure(e <= bound, format!("stage {} ends with |p~| = {e} > {bound}", s.stage))?;
            last = Some(e);
        }
    }
    let last = last.ok_or("no completed stage")?;
    ensure(last < 2.45, format!("final stage-end error {last} not below 2.45"))?;
    let ends: Vec<String> = t.stages.iter().filter_map(|s| s.end_error).map(|e| format!("{e:.3}")).collect();
    Ok(format!("zooms at {zooms:?}, stage-end errors [{}]", ends.join(", ")))
}

fn reset_semantics() -> Outcome {
    let c = dynamic_case();
    let t = simulate(&c);
    let zooms: Vec<usize> = t.zoom_instants().into_iter().filter(|k| *k < c.horizon).collect();
    ensure(t.resets == zooms, format!("resets {:?} vs zooms {zooms:?}", t.resets))?;
    for k in 0..c.horizon {
        let next = &t.rows[k + 1].mu;
        let e = &t.output_error_sq[k];
        if zooms.contains(&k) {
            ensure(next == e, format!("mu after the zoom at k = {k} is not the fresh output error"))?;
        } else {
            let recursed: Vec<f64> = t.rows[k].mu.iter().zip(e).map(|(m, e)| c.lambda * m + e).collect();
            ensure(*next == recursed, format!("mu at k = {} does not follow the recursion", k + 1))?;
            // At k = 0 the signals start from zero, so both rules coincide.
            ensure(k == 0 || next != e, format!("mu at k = {} looks reset", k + 1))?;
        }
    }
    Ok(format!("resets exactly at {zooms:?}; recursion elsewhere"))
}

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join("scenarios")
}

fn determinism() -> Outcome {
    let mut names = Vec::new();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    ensure(!paths.is_empty(), "no bundled scenarios")?;
    for path in paths {
        let c = ScenarioConfig::from_path(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let csv = |c: &ScenarioConfig| {
            let mut buf = Vec::new();
            write_trace_csv(&simulate(c), &mut buf).unwrap();
            buf
        };
        let (a, b) = (csv(&c), csv(&c));
        ensure(a == b, format!("{} differs between runs", path.display()))?;
        names.push(path.file_name().unwrap().to_string_lossy().into_owned());
    }
    Ok(format!("byte-identical traces for {}", names.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("monitoring equivalence", monitoring_equivalence),
        ("sampling density", sampling_density),
        ("zoom geometry", zoom_geometry),
        ("certificate checker", certificate_checker),
        ("matched-observer decay", matched_observer_decay),
        ("static-policy convergence", static_convergence),
        ("dynamic-policy improvement", dynamic_improvement),
        ("reset semantics", reset_semantics),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} [{name}]: PASS ({secs:.2} s) {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {} [{name}]: FAIL ({secs:.2} s) {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
