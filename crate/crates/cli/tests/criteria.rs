//! Acceptance suite. Prints one PASS/FAIL line per criterion, then fails if
//! any criterion failed.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ladderprobe_core::constants::PLANCK;
use ladderprobe_core::dynamics::Tolerances;
use ladderprobe_core::extraction::degeneracy_groups;
use ladderprobe_core::states::random_phases;
use ladderprobe_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances.
const ORTHONORMALITY_TOL: f64 = 1e-10;
const BETA_NOMINAL: f64 = 0.3;
const BETA_REL_TOL: f64 = 0.12;
const CLUSTER_TOL: f64 = 1e-12;
const ORACLE_TOL: f64 = 1e-6;
const ORACLE_TRUNCATION: usize = 40;
const OVERSHOOT: f64 = 0.05;
const POPULATED_FRACTION: f64 = 0.01;
const MAX_POPULATED: usize = 4;
const CONSERVATION_TOL: f64 = 1e-6;
const CONSERVATION_STEPS: usize = 10_000;
const ROUND_TRIP_TOL: f64 = 1e-6;
const SUPPORT_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, budget_s: f64) -> bool {
    elapsed.as_secs_f64() < budget_s
}

fn reference_ladder(n_modes: usize, dispersion: Dispersion) -> LadderConfig {
    LadderConfig {
        nodes: 51,
        inductance: 254e-12,
        capacitance: 100e-15,
        impurity_ej: PLANCK * 3e9,
        impurity_nodes: (4, 5),
        impurity_flux: FRAC_PI_2,
        kappa: TAU * 1.2e3,
        drive_mode: n_modes,
        drive_strength: TAU * 18e3,
        n_modes,
        fn_denominator: FnDenominator::Derived,
        dispersion,
    }
}

fn reference_probe() -> ProbeConfig {
    let (z_p, w_p) = (126.0, TAU * 50e6);
    ProbeConfig {
        c_s: 10e-15,
        l_s: 100e-6,
        c_x: 10e-15,
        l_x: 100e-6,
        ej_p: PLANCK * 3e9,
        i_c: 1e-9,
        mutual: 10e-9,
        l_p: z_p / w_p,
        c_p: 1.0 / (z_p * w_p),
        e_m: PLANCK * 123e9,
        phi_ext: PhiExt::HalfPi,
        kappa_probe: 6e9,
        damping: Damping::LowPass,
        quasi_static: false,
    }
}

fn cli(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ladderprobe"))
        .args(["--preset", "ladder", "--preset", "probe", "--out-dir"])
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for nodes in [11, 51, 101] {
        let mut cfg = reference_ladder(nodes, Dispersion::Exact);
        cfg.nodes = nodes;
        let basis = build_mode_basis(&cfg).unwrap();
        worst = worst.max(basis.orthonormality_defect());
    }
    let elapsed = start.elapsed();
    outcome(
        worst < ORTHONORMALITY_TOL && within(elapsed, 1.0),
        format!("max defect {worst:.2e} over N in {{11, 51, 101}}, {elapsed:.2?}"),
    )
}

fn criterion_2(dir: &Path) -> Outcome {
    let start = Instant::now();
    let out = cli(dir, &["probe"]);
    let elapsed = start.elapsed();
    if !out.status.success() {
        return outcome(
            false,
            format!("probe exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)),
        );
    }
    let w0 = PI / (52.0 * (254e-12_f64 * 100e-15).sqrt());
    let spectrum = std::fs::read_to_string(dir.join("spectrum.csv")).unwrap();
    let bin: f64 = spectrum.lines().nth(2).unwrap().split(',').next().unwrap().parse().unwrap();
    let peaks: Vec<(f64, f64)> = std::fs::read_to_string(dir.join("peaks.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["omega"].as_f64().unwrap(), v["power"].as_f64().unwrap())
        })
        .collect();
    if peaks.len() < 5 {
        return outcome(false, format!("only {} peaks found", peaks.len()));
    }
    let mut top: Vec<f64> = peaks[..4].iter().map(|p| p.0).collect();
    top.sort_by(f64::total_cmp);
    let expected = [1.0, 6.0, 7.0, 8.0];
    let top_ok = top.iter().zip(expected).all(|(w, h)| (w - h * w0).abs() <= bin);
    let residual = peaks[4].0 / w0;
    let residual_ok = (2.0 - bin / w0..=4.0 + bin / w0).contains(&residual);
    let found: Vec<String> = top.iter().map(|w| format!("{:.3}", w / w0)).collect();
    outcome(
        top_ok && residual_ok && within(elapsed, 10.0),
        format!(
            "top four at [{}] omega0, strongest residual at {residual:.3} omega0 ({:.1e} of the weakest main peak), {elapsed:.2?}",
            found.join(", "),
            peaks[4].1 / peaks[3].1
        ),
    )
}

fn criterion_3() -> Outcome {
    let b = beta(&reference_probe(), 0.0).unwrap();
    let rel = (b - BETA_NOMINAL).abs() / BETA_NOMINAL;
    outcome(
        (b - 1.0 / 3.0).abs() < 1e-12 && rel <= BETA_REL_TOL,
        format!("beta(0) = {b:.6}, {:.1}% from the nominal 0.3", rel * 100.0),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let basis = build_mode_basis(&reference_ladder(10, Dispersion::Exact)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let alphas: Vec<Complex64> = (0..10)
            .map(|_| Complex64::from_polar(rng.random_range(0.0..3.0), rng.random_range(0.0..TAU)))
            .collect();
        let s = squeezing_measure(&correlations(&TrialState::Coherent { alphas }, &basis).unwrap());
        for _ in 0..16 {
            let t = rng.random_range(0.0..1e-8);
            for n in 1..=10 {
                for m in 1..=10 {
                    worst = worst.max(s.at(n, m, t).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < CLUSTER_TOL && within(elapsed, 5.0),
        format!("max |S| = {worst:.2e} over 100 states x 16 times, {elapsed:.2?}"),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let basis = build_mode_basis(&reference_ladder(3, Dispersion::Linear)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut polar = |max: f64, corner: bool| {
        let r = if corner { max } else { rng.random_range(0.0..max) };
        Complex64::from_polar(r, rng.random_range(0.0..TAU))
    };
    let mut states = Vec::new();
    for case in 0..8 {
        let corner = case == 0;
        let alphas: Vec<Complex64> = (0..3).map(|_| polar(2.0, corner)).collect();
        let xi = polar(0.5, corner);
        states.push(TrialState::Coherent { alphas: alphas.clone() });
        states.push(TrialState::Fock { occupations: vec![case as u32 % 4, 3, (case as u32 * 5) % 9] });
        states.push(TrialState::Squeezed { alphas, pairs: vec![SqueezePair { n: 1, m: 3, xi }] });
    }
    let mut worst = 0.0_f64;
    for state in &states {
        let closed = correlations(state, &basis).unwrap();
        match fock_space_oracle(state, &basis, ORACLE_TRUNCATION) {
            Ok(oracle) => worst = worst.max(closed.max_abs_diff(&oracle)),
            Err(e) => return outcome(false, format!("oracle failed on {}: {e}", state.label())),
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < ORACLE_TOL && within(elapsed, 60.0),
        format!(
            "max deviation {worst:.2e} over {} coherent/Fock/two-mode squeezed states, truncation {ORACLE_TRUNCATION}, {elapsed:.2?}",
            states.len()
        ),
    )
}

fn criterion_6(dir: &Path) -> Outcome {
    let start = Instant::now();
    let out = cli(dir, &["dynamics"]);
    let elapsed = start.elapsed();
    if !out.status.success() {
        return outcome(false, format!("dynamics exited {:?}", out.status.code()));
    }
    let csv = std::fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let drive = header.len() - 1;
    let driven: Vec<f64> =
        csv.lines().skip(1).map(|l| l.split(',').nth(drive).unwrap().parse().unwrap()).collect();
    let ss: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("steady_state.json")).unwrap()).unwrap();
    let pops: Vec<f64> = ss["populations"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let n_star = pops[drive - 1];
    let (peak_at, peak) =
        driven.iter().enumerate().fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let interior = peak_at > 0 && peak_at + 1 < driven.len();
    let overshoot = peak / n_star - 1.0;
    let max = pops.iter().cloned().fold(0.0, f64::max);
    let populated = pops.iter().filter(|&&n| n > POPULATED_FRACTION * max).count();
    outcome(
        interior && overshoot >= OVERSHOOT && populated <= MAX_POPULATED && within(elapsed, 30.0),
        format!(
            "driven-mode peak/steady - 1 = {:.2}% (interior: {interior}), {populated} modes above 1% of max, {elapsed:.2?}",
            overshoot * 100.0
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut cfg = reference_ladder(10, Dispersion::Exact);
    cfg.kappa = 0.0;
    cfg.drive_strength = 0.0;
    cfg.impurity_nodes = (7, 12);
    let basis = build_mode_basis(&cfg).unwrap();
    let tensor = build_coupling_tensor(&cfg, &basis).unwrap();
    let model = RateModel::from_config(&cfg, &basis, tensor, Some(1e6)).unwrap();
    let initial: Vec<f64> = (1..=10).map(|n| if n == 10 { 20.0 } else { 0.5 / n as f64 }).collect();
    let t_end = 1e-3;
    let tol = Tolerances { max_step: Some(t_end / CONSERVATION_STEPS as f64), ..Tolerances::default() };
    let traj = evolve(&initial, &model, t_end, &tol).unwrap();
    let weight = |p: &[f64]| p.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum::<f64>();
    let w0 = weight(&initial);
    let drift = traj.populations.iter().map(|p| (weight(p) - w0).abs() / w0).fold(0.0, f64::max);
    let moved = (traj.final_populations()[9] - 20.0).abs();
    let steps = traj.times.len() - 1;
    let elapsed = start.elapsed();
    outcome(
        drift < CONSERVATION_TOL && steps >= CONSERVATION_STEPS && moved > 1e-3 && within(elapsed, 10.0),
        format!(
            "max relative drift {drift:.2e} over {steps} steps (N_10 moved by {moved:.3}), {elapsed:.2?}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let cfg = reference_ladder(10, Dispersion::Linear);
    let basis = build_mode_basis(&cfg).unwrap();
    let tensor = build_coupling_tensor(&cfg, &basis).unwrap();
    let model = RateModel::from_config(&cfg, &basis, tensor.clone(), None).unwrap();
    let ss = steady_state(&model, &Tolerances::default()).unwrap();
    let alphas = alphas_from_populations(&ss.populations, &random_phases(10, 8)).unwrap();
    let truth_state = TrialState::squeezed_from_drive(alphas, 10, &tensor, 500e-9).unwrap();
    let truth = correlations(&truth_state, &basis).unwrap();
    let probe = reference_probe();
    let plan = plan_measurements(&basis, 10, &PlanOptions::default()).unwrap();
    let measured: Vec<Measurement> = plan
        .site_pairs
        .iter()
        .map(|&pair| {
            let ci = phase_observable_coefficients(&basis, pair.0, None).unwrap();
            let cj = phase_observable_coefficients(&basis, pair.1.unwrap(), None).unwrap();
            Measurement { pair, components: predicted_fourier_components(&truth, &ci, &cj, &probe).unwrap() }
        })
        .collect();
    let rec = assemble_and_solve(&plan, &measured, &basis, &probe).unwrap();
    let full_rank = rec.require_full_rank().is_ok();
    let mut recovered = rec.correlations;
    recovered.q = truth.q.clone();
    let scale =
        truth.normal.iter().chain(&truth.anomalous).flatten().fold(0.0_f64, |a, x| a.max(x.value.norm()));
    let err = recovered.max_abs_diff(&truth) / scale;

    let s = squeezing_measure(&recovered);
    let support = s.support(SUPPORT_TOL * s.max_abs());
    let mut wanted: BTreeSet<(usize, usize)> = (1..=9).map(|n| (n, 10 - n)).collect();
    wanted.insert((5, 5));
    let extra: Vec<_> = support.difference(&wanted).collect();
    let missing: Vec<_> = wanted.difference(&support).collect();
    let elapsed = start.elapsed();
    outcome(
        full_rank && err < ROUND_TRIP_TOL && extra.is_empty() && missing.is_empty() && within(elapsed, 30.0),
        format!(
            "{} pairs, max relative error {err:.2e}; S support outside anti-diagonal + (5,5): {extra:?}, missing: {missing:?}, {elapsed:.2?}",
            plan.site_pairs.len()
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut sizes = Vec::new();
    let mut seven = BTreeSet::new();
    for k in [10, 20, 40] {
        let basis = build_mode_basis(&reference_ladder(k, Dispersion::Linear)).unwrap();
        let table = degeneracy_groups(&basis, k).unwrap();
        if k == 10 {
            seven =
                table.group_near(7.0 * basis.omega0()).map(|g| g.anomalous().collect()).unwrap_or_default();
        }
        sizes.push(table.max_group_size() as i64);
    }
    let expected: BTreeSet<(usize, usize)> = [(3, 4), (2, 5), (1, 6)].into_iter().collect();
    let linear = (sizes[1] - 2 * sizes[0]).abs() <= 1 && (sizes[2] - 2 * sizes[1]).abs() <= 1;
    outcome(
        seven == expected && linear,
        format!("7 omega0 A-group {seven:?}, max group sizes {sizes:?} for n_modes 10/20/40"),
    )
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e != "toml"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_10(dir: &Path) -> Outcome {
    let config = dir.join("linear.toml");
    std::fs::write(&config, "[ladder]\ndispersion = \"linear\"\n[readout]\nsource = \"squeezed\"\nsites = [9, 30]\nperiods = 64\n").unwrap();
    let cfg = config.to_str().unwrap();
    let truth = dir.join("squeezed.jsonl");
    let runs: Vec<Vec<&str>> = vec![
        vec!["--config", cfg, "dynamics"],
        vec!["--config", cfg, "--seed", "3", "correlations"],
        vec!["--config", cfg, "probe"],
        vec!["--config", cfg, "--seed", "3", "plan"],
        vec!["--config", cfg, "--seed", "3", "extract", "--truth", truth.to_str().unwrap()],
        vec!["report"],
        vec!["--format", "json", "report"],
    ];
    let mut previous = None;
    for round in 0..2 {
        for args in &runs {
            let out = cli(dir, args);
            if !out.status.success() {
                return outcome(false, format!("{args:?} exited {:?} in round {round}", out.status.code()));
            }
        }
        let snap = snapshot(dir);
        if let Some(prev) = &previous {
            if prev != &snap {
                let differing: Vec<&String> = snap
                    .iter()
                    .zip(prev as &Vec<(String, Vec<u8>)>)
                    .filter(|(a, b)| a != b)
                    .map(|(a, _)| &a.0)
                    .collect();
                return outcome(false, format!("outputs differ between runs: {differing:?}"));
            }
        }
        previous = Some(snap);
    }
    let files = previous.map_or(0, |s| s.len());
    outcome(
        true,
        format!("{} subcommand runs, {files} output files byte-identical across two rounds", runs.len()),
    )
}

#[test]
fn acceptance_criteria() {
    let probe_dir = tempfile::tempdir().unwrap();
    let dynamics_dir = tempfile::tempdir().unwrap();
    let determinism_dir = tempfile::tempdir().unwrap();
    let results = [
        (1, "mode-basis orthonormality", criterion_1()),
        (2, "two-tone readout peaks", criterion_2(probe_dir.path())),
        (3, "coupler beta at DC", criterion_3()),
        (4, "clustering of coherent states", criterion_4()),
        (5, "oracle equivalence", criterion_5()),
        (6, "driven-mode overshoot and few populated modes", criterion_6(dynamics_dir.path())),
        (7, "weighted photon number conservation", criterion_7()),
        (8, "extraction round trip and squeezing support", criterion_8()),
        (9, "degeneracy counting", criterion_9()),
        (10, "CLI determinism", criterion_10(determinism_dir.path())),
    ];
    let mut failed = Vec::new();
    println!();
    for (id, name, r) in &results {
        println!("criterion {id:>2} {}: {name}: {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        if !r.pass {
            failed.push(*id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
