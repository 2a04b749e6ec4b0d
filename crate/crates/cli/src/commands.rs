//! Subcommand implementations. Every output is a pure function of the merged
//! config and the seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use ladderprobe_core::dynamics::Tolerances;
use ladderprobe_core::extraction::{MeasurementPlan, SitePair};
use ladderprobe_core::io::{self, SCHEMA_VERSION};
use ladderprobe_core::probe::{classical_phase, PhiExt, ReadoutOptions, TimeSeries};
use ladderprobe_core::states::random_phases;
use ladderprobe_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{self, check_positive, ConfigError, ExperimentConfig, Source, Tone};
use crate::{Format, GlobalArgs};

const STATES: [&str; 3] = ["coherent", "fock", "squeezed"];

fn load(global: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut sources = global.preset.iter().map(|p| config::preset(p)).collect::<Result<Vec<_>>>()?;
    if let Some(path) = &global.config {
        sources.push(config::file_source(path)?);
    }
    if sources.is_empty() {
        bail!(ConfigError("no configuration given; pass --preset and/or --config".into()));
    }
    config::load(&sources)
}

fn out_file(global: &GlobalArgs, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&global.out_dir)
        .with_context(|| format!("cannot create output directory {}", global.out_dir.display()))?;
    Ok(global.out_dir.join(name))
}

fn write(global: &GlobalArgs, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = out_file(global, name)?;
    std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn report_name(stem: &str, format: Format) -> String {
    match format {
        Format::Text => format!("{stem}.txt"),
        Format::Json => format!("{stem}.json"),
    }
}

fn pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn system(cfg: &ExperimentConfig) -> Result<(LadderConfig, ModeBasis)> {
    let ladder = cfg.ladder()?;
    let basis = build_mode_basis(&ladder)?;
    Ok((ladder, basis))
}

// ---------------------------------------------------------------- dynamics

#[derive(Debug, Serialize, Deserialize)]
pub struct SteadyStateFile {
    pub schema_version: u32,
    pub converged: bool,
    pub populations: Vec<f64>,
    /// `‖dN/dt‖_∞` (1/s).
    pub residual: f64,
    pub time: f64,
    /// Derived fundamental `π/((N+1)√(LC))` (rad/s).
    pub omega0: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub drive_strength: f64,
}

pub fn dynamics(global: &GlobalArgs) -> Result<()> {
    let cfg = load(global)?;
    let (ladder, basis) = system(&cfg)?;
    let tensor = build_coupling_tensor(&ladder, &basis)?;
    let model = RateModel::from_config(&ladder, &basis, tensor, cfg.ladder.gamma.map(|g| g.0))?;
    let d = &cfg.dynamics;
    let defaults = Tolerances::default();
    let tol = Tolerances {
        rtol: d.rtol.unwrap_or(defaults.rtol),
        atol: d.atol.unwrap_or(defaults.atol),
        max_step: d.max_step.map(|t| t.0),
        ..defaults
    };
    let t_end = match d.t_end {
        Some(t) => check_positive(t.0, "dynamics.t_end")?,
        None if ladder.kappa > 0.0 => 40.0 / ladder.kappa,
        None => bail!(ConfigError("dynamics.t_end is required when kappa is zero".into())),
    };
    let samples = d.samples.unwrap_or(401);
    if samples < 2 {
        bail!(ConfigError(format!("dynamics.samples must be at least 2, got {samples}")));
    }

    // Integrate window by window so that the table sits on a uniform grid.
    let step = t_end / (samples - 1) as f64;
    let mut y = vec![0.0; basis.n_modes()];
    let mut traj = PopulationTrajectory {
        times: vec![0.0],
        populations: vec![y.clone()],
        steady_state: None,
        rejected_steps: 0,
    };
    for k in 1..samples {
        let part = evolve(&y, &model, step, &tol)?;
        traj.rejected_steps += part.rejected_steps;
        y = part.final_populations().to_vec();
        traj.times.push(k as f64 * step);
        traj.populations.push(y.clone());
    }
    let mut csv = Vec::new();
    io::write_trajectory_csv(&mut csv, &traj)?;
    let path = write(global, "trajectory.csv", &csv)?;
    println!("omega0 (derived) = {:.6e} rad/s, Gamma = {:.6e} 1/s", basis.omega0(), model.gamma);
    println!("wrote {}", path.display());

    if !(model.kappa > 0.0 && model.drive_strength > 0.0) {
        println!("closed system (kappa or drive is zero): no steady state computed");
        return Ok(());
    }
    let file = |converged, populations: Vec<f64>, residual, time| SteadyStateFile {
        schema_version: SCHEMA_VERSION,
        converged,
        populations,
        residual,
        time,
        omega0: basis.omega0(),
        gamma: model.gamma,
        kappa: model.kappa,
        drive_strength: model.drive_strength,
    };
    match steady_state(&model, &tol) {
        Ok(ss) => {
            let path = write(
                global,
                "steady_state.json",
                &pretty(&file(true, ss.populations.clone(), ss.residual, ss.time))?,
            )?;
            let list: Vec<String> = ss.populations.iter().map(|n| format!("{n:.4}")).collect();
            println!("steady state: [{}]", list.join(", "));
            println!("wrote {}", path.display());
            Ok(())
        }
        Err(e @ Error::NotConverged { time, residual }) => {
            write(global, "steady_state.json", &pretty(&file(false, y, residual, time))?)?;
            Err(e.into())
        }
        Err(e) => Err(e.into()),
    }
}

// ------------------------------------------------------------ correlations

fn populations(cfg: &ExperimentConfig, global: &GlobalArgs, k: usize) -> Result<Vec<f64>> {
    let pops = match &cfg.state.populations {
        Some(p) => p.clone(),
        None => {
            let path =
                cfg.state.steady_state.clone().unwrap_or_else(|| global.out_dir.join("steady_state.json"));
            if !path.exists() {
                bail!(ConfigError(format!(
                    "missing upstream steady state {}; run `ladderprobe dynamics` first or set state.populations",
                    path.display()
                )));
            }
            let file: SteadyStateFile = serde_json::from_str(&config::read_to_string(&path, "steady state")?)
                .with_context(|| format!("malformed steady state {}", path.display()))?;
            if !file.converged {
                bail!(ConfigError(format!("steady state in {} did not converge", path.display())));
            }
            file.populations
        }
    };
    if pops.len() != k {
        bail!(ConfigError(format!("{} populations given for {k} modes", pops.len())));
    }
    Ok(pops)
}

pub fn correlations(global: &GlobalArgs) -> Result<()> {
    let cfg = load(global)?;
    let (ladder, basis) = system(&cfg)?;
    let k = basis.n_modes();
    let pops = populations(&cfg, global, k)?;
    let seed = cfg.seed(global.seed);
    let alphas = alphas_from_populations(&pops, &random_phases(k, seed))?;

    let occupations = match &cfg.state.occupations {
        Some(o) if o.len() != k => bail!(ConfigError(format!("{} occupations given for {k} modes", o.len()))),
        Some(o) => o.clone(),
        None => pops.iter().map(|n| n.round() as u32).collect(),
    };
    let t_star = check_positive(
        cfg.state.t_star.ok_or_else(|| ConfigError("missing `state.t_star`".into()))?.0,
        "state.t_star",
    )?;
    let tensor = build_coupling_tensor(&ladder, &basis)?;
    let squeezed = TrialState::squeezed_from_drive(alphas.clone(), ladder.drive_mode, &tensor, t_star)?;
    let max_xi = cfg.state.max_xi.unwrap_or(5.0);
    if let TrialState::Squeezed { pairs, .. } = &squeezed {
        if let Some(p) = pairs.iter().find(|p| p.xi.norm() > max_xi) {
            bail!(ConfigError(format!(
                "|xi({},{})| = {:.3e} exceeds state.max_xi = {max_xi}; reduce state.t_star",
                p.n,
                p.m,
                p.xi.norm()
            )));
        }
    }
    let states = [TrialState::Coherent { alphas }, TrialState::Fock { occupations }, squeezed];
    for state in &states {
        let set = ladderprobe_core::correlations(state, &basis)?;
        let mut buf = Vec::new();
        io::write_correlations(&mut buf, &set, state.label())?;
        let path = write(global, &format!("{}.jsonl", state.label()), &buf)?;
        println!("wrote {}", path.display());
    }
    let path = write(global, "states.json", &pretty(&states)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

// ------------------------------------------------------------------- probe

fn tone_series(tones: &[Tone], omega0: f64, dt: f64, len: usize) -> Result<TimeSeries> {
    let samples = (0..len)
        .map(|k| {
            let t = k as f64 * dt;
            tones
                .iter()
                .map(|tone| tone.amplitude.0 * (tone.harmonic * omega0 * t + tone.phase.0).cos())
                .sum()
        })
        .collect();
    Ok(TimeSeries::new(dt, samples)?)
}

fn read_set(path: &Path) -> Result<(String, CorrelationSet)> {
    if !path.exists() {
        bail!(ConfigError(format!(
            "missing correlation file {}; run `ladderprobe correlations` first",
            path.display()
        )));
    }
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    io::read_correlations(std::io::BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))
}

/// Rejects a correlation file whose mode frequencies do not belong to `basis`.
fn check_basis(set: &CorrelationSet, basis: &ModeBasis, path: &Path) -> Result<()> {
    if set.n_modes() != basis.n_modes() {
        bail!(ConfigError(format!(
            "{} holds {} modes but the ladder keeps {}",
            path.display(),
            set.n_modes(),
            basis.n_modes()
        )));
    }
    for (n, q) in set.q.iter().enumerate() {
        let w = basis.omega(n + 1);
        if (q.omega - w).abs() > 1e-9 * w {
            bail!(ConfigError(format!(
                "{} was written for a different ladder: mode {} sits at {:.9e} rad/s, not {w:.9e}",
                path.display(),
                n + 1,
                q.omega
            )));
        }
    }
    Ok(())
}

fn site_pair(sites: &[usize]) -> Result<SitePair> {
    match sites {
        [i] => Ok((*i, None)),
        [i, j] => Ok((*i, Some(*j))),
        _ => bail!(ConfigError(format!("readout.sites needs one or two sites, got {}", sites.len()))),
    }
}

fn pair_components(
    corr: &CorrelationSet,
    basis: &ModeBasis,
    pair: SitePair,
    probe: &ProbeConfig,
) -> Result<Vec<FourierComponent>> {
    let ci = phase_observable_coefficients(basis, pair.0, None)?;
    let cj = match pair.1 {
        Some(j) => phase_observable_coefficients(basis, j, None)?,
        None => vec![0.0; basis.n_modes()],
    };
    Ok(predicted_fourier_components(corr, &ci, &cj, probe)?)
}

/// One Fourier component of one readout, as exchanged between `probe` and
/// `extract`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub schema_version: u32,
    pub site_i: usize,
    pub site_j: Option<usize>,
    pub omega: f64,
    pub re: f64,
    pub im: f64,
}

fn measurement_lines(measurements: &[Measurement]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for m in measurements {
        for c in &m.components {
            let rec = MeasurementRecord {
                schema_version: SCHEMA_VERSION,
                site_i: m.pair.0,
                site_j: m.pair.1,
                omega: c.omega,
                re: c.amplitude.re,
                im: c.amplitude.im,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.push(b'\n');
        }
    }
    Ok(out)
}

fn read_measurements(path: &Path) -> Result<Vec<Measurement>> {
    let text = config::read_to_string(path, "measurements")?;
    let mut out: Vec<Measurement> = Vec::new();
    for (no, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: MeasurementRecord = serde_json::from_str(line)
            .map_err(|e| ConfigError(format!("{} line {}: {e}", path.display(), no + 1)))?;
        if rec.schema_version != SCHEMA_VERSION {
            bail!(ConfigError(format!(
                "{} line {}: unsupported schema_version {}",
                path.display(),
                no + 1,
                rec.schema_version
            )));
        }
        let pair = (rec.site_i, rec.site_j);
        let component = FourierComponent { omega: rec.omega, amplitude: Complex64::new(rec.re, rec.im) };
        match out.iter_mut().find(|m| m.pair == pair) {
            Some(m) => m.components.push(component),
            None => out.push(Measurement { pair, components: vec![component] }),
        }
    }
    Ok(out)
}

pub fn probe(global: &GlobalArgs) -> Result<()> {
    let cfg = load(global)?;
    let (ladder, basis) = system(&cfg)?;
    let probe = cfg.probe()?;
    for note in probe.diagnostics(basis.omega0(), ladder.impedance()) {
        eprintln!("note: {note}");
    }
    let r = &cfg.readout;
    let w0 = basis.omega0();
    let periods = r.periods.unwrap_or(256);
    let spp = r.samples_per_period.unwrap_or(512);
    if periods == 0 || spp < 2 {
        bail!(ConfigError(
            "readout.periods must be positive and readout.samples_per_period at least 2".into()
        ));
    }
    let dt = std::f64::consts::TAU / (w0 * spp as f64);
    let len = periods * spp;

    let (series, measurement) = match r.source.unwrap_or(Source::Tones) {
        Source::Tones => {
            let none = Vec::new();
            let (ti, tj) = (r.tones_i.as_ref().unwrap_or(&none), r.tones_j.as_ref().unwrap_or(&none));
            if ti.is_empty() && tj.is_empty() {
                bail!(ConfigError(
                    "readout.source = \"tones\" needs readout.tones_i or readout.tones_j".into()
                ));
            }
            let warmup = r.warmup.map(|t| t.0).unwrap_or(10.0 / probe.kappa_probe);
            let extra = (warmup / dt).ceil().max(1.0) as usize;
            let phi_i = tone_series(ti, w0, dt, len + extra)?;
            let phi_j = tone_series(tj, w0, dt, len + extra)?;
            // Half a sample short of `extra`, so the kept record is exactly `len` long.
            let opts = ReadoutOptions { warmup: Some((extra as f64 - 0.5) * dt) };
            let readout = simulate_readout(&phi_i, &phi_j, &probe, &opts)?;
            for w in &readout.warnings {
                eprintln!("warning: {w}");
            }
            println!("peak beta*|dphi| = {:.4}", readout.peak_scaled_phase);
            (readout.series, None)
        }
        source => {
            let label = source.state_label().expect("state source");
            let path =
                r.correlations.clone().unwrap_or_else(|| global.out_dir.join(format!("{label}.jsonl")));
            let (_, corr) = read_set(&path)?;
            check_basis(&corr, &basis, &path)?;
            let pair = site_pair(r.sites.as_deref().unwrap_or(&[]))?;
            let components = pair_components(&corr, &basis, pair, &probe)?;
            let w_max = components.iter().map(|c| c.omega).fold(0.0, f64::max);
            if w_max > 0.0 {
                let limit = std::f64::consts::TAU / (20.0 * w_max);
                if dt > limit {
                    return Err(Error::Undersampled { dt, limit }.into());
                }
            }
            let series = TimeSeries::synthesize(&components, dt, len)?;
            (series, Some(Measurement { pair, components }))
        }
    };

    let window = r.window.unwrap_or_default();
    let spectrum = power_spectrum(&series, window)?;
    let peaks = spectrum.peaks();
    let mut buf = Vec::new();
    io::write_time_series_csv(&mut buf, &series, "I_P")?;
    write(global, "readout.csv", &buf)?;
    buf.clear();
    io::write_spectrum_csv(&mut buf, &spectrum)?;
    write(global, "spectrum.csv", &buf)?;
    buf.clear();
    io::write_peaks(&mut buf, &peaks)?;
    write(global, "peaks.jsonl", &buf)?;
    if let Some(m) = measurement {
        write(global, "measurements.jsonl", &measurement_lines(&[m])?)?;
    }
    println!("strongest peaks (omega/omega0, power A^2):");
    for p in peaks.iter().take(6) {
        println!("  {:8.4}  {:.4e}", p.omega / w0, p.power);
    }
    println!("wrote readout.csv, spectrum.csv, peaks.jsonl to {}", global.out_dir.display());
    Ok(())
}

// -------------------------------------------------------------------- plan

fn plan_options(cfg: &ExperimentConfig, global: &GlobalArgs) -> Result<PlanOptions> {
    let e = &cfg.extract;
    let defaults = PlanOptions::default();
    let tolerance_fraction = e.tolerance_fraction.unwrap_or(defaults.tolerance_fraction);
    check_positive(tolerance_fraction, "extract.tolerance_fraction")?;
    Ok(PlanOptions {
        seed: cfg.seed(global.seed),
        slack: e.slack.unwrap_or(defaults.slack),
        active_modes: e.active_modes.clone(),
        tolerance_fraction,
        candidates: e.candidates.unwrap_or(defaults.candidates),
    })
}

fn plan_summary(plan: &MeasurementPlan, w0: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "plan: {} site pairs, {} groups, largest group {}",
        plan.site_pairs.len(),
        plan.table.groups.len(),
        plan.table.max_group_size()
    );
    for (w, missing) in &plan.deficient {
        let _ = writeln!(s, "  group at {:.4} omega0 still misses rank {missing}", w / w0);
    }
    s
}

pub fn plan(global: &GlobalArgs) -> Result<()> {
    let cfg = load(global)?;
    let (_, basis) = system(&cfg)?;
    let plan = plan_measurements(&basis, basis.n_modes(), &plan_options(&cfg, global)?)?;
    let path = write(global, "plan.json", &pretty(&plan)?)?;
    print!("{}", plan_summary(&plan, basis.omega0()));
    println!("wrote {}", path.display());
    if !plan.is_complete() {
        let bad: Vec<String> =
            plan.deficient.iter().map(|(w, r)| format!("{w:.6e} rad/s missing rank {r}")).collect();
        return Err(Error::RankDeficient(bad.join("; ")).into());
    }
    Ok(())
}

// ----------------------------------------------------------------- extract

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Ground-truth correlation file; measurements are synthesized from it.
    #[arg(long, conflicts_with = "measurements")]
    pub truth: Option<PathBuf>,
    /// Measured components (JSON lines, as written by `probe`).
    #[arg(long)]
    pub measurements: Option<PathBuf>,
    /// Plan file; computed from the config when absent.
    #[arg(long)]
    pub plan: Option<PathBuf>,
}

fn add_noise(measurements: &mut [Measurement], level: f64, seed: u64) {
    if level == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for m in measurements {
        for c in &mut m.components {
            let scale = level * c.amplitude.norm();
            let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            c.amplitude += Complex64::new(a, b) * scale;
        }
    }
}

fn squeezing_table(s: &SqueezingMeasure, tol: f64) -> Vec<serde_json::Value> {
    let k = s.normal.len();
    let mut rows = Vec::new();
    for n in 0..k {
        for m in 0..k {
            let (a, b) = (s.normal[n][m], s.anomalous[n][m]);
            if a.value.norm() > tol || b.value.norm() > tol {
                rows.push(json!({
                    "n": n + 1,
                    "m": m + 1,
                    "normal": [a.value.re, a.value.im],
                    "normal_omega": a.omega,
                    "anomalous": [b.value.re, b.value.im],
                    "anomalous_omega": b.omega,
                }));
            }
        }
    }
    rows
}

fn relative_error(rec: &CorrelationSet, truth: &CorrelationSet) -> f64 {
    let scale =
        truth.normal.iter().chain(&truth.anomalous).flatten().fold(0.0_f64, |a, x| a.max(x.value.norm()));
    let mut worst = 0.0_f64;
    for (r, t) in [(&rec.normal, &truth.normal), (&rec.anomalous, &truth.anomalous)] {
        for (rr, tr) in r.iter().zip(t) {
            for (x, y) in rr.iter().zip(tr) {
                worst = worst.max((x.value - y.value).norm());
            }
        }
    }
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

pub fn extract(global: &GlobalArgs, args: &ExtractArgs) -> Result<()> {
    let cfg = load(global)?;
    let (_, basis) = system(&cfg)?;
    let probe = cfg.probe()?;
    if probe.phi_ext != PhiExt::HalfPi {
        bail!(ConfigError("extraction needs probe.phi_ext = \"pi/2\"".into()));
    }
    let w0 = basis.omega0();
    let plan: MeasurementPlan = match &args.plan {
        Some(path) => serde_json::from_str(&config::read_to_string(path, "plan")?)
            .map_err(|e| ConfigError(format!("malformed plan {}: {e}", path.display())))?,
        None => plan_measurements(&basis, basis.n_modes(), &plan_options(&cfg, global)?)?,
    };

    let truth = match &args.truth {
        Some(path) => {
            let (_, set) = read_set(path)?;
            check_basis(&set, &basis, path)?;
            Some(set)
        }
        None => None,
    };
    let measured = match (&truth, &args.measurements) {
        (Some(t), _) => {
            let mut ms = plan
                .site_pairs
                .iter()
                .map(|&pair| Ok(Measurement { pair, components: pair_components(t, &basis, pair, &probe)? }))
                .collect::<Result<Vec<_>>>()?;
            add_noise(&mut ms, cfg.extract.noise.unwrap_or(0.0), cfg.seed(global.seed));
            write(global, "measurements.jsonl", &measurement_lines(&ms)?)?;
            ms
        }
        (None, Some(path)) => read_measurements(path)?,
        (None, None) => bail!(ConfigError("extract needs --truth or --measurements".into())),
    };

    let mut recovery = assemble_and_solve(&plan, &measured, &basis, &probe)?;

    // Quadratures come from a mean-phase record at one site.
    let mut flagged = Vec::new();
    if let Some(t) = &truth {
        let site = cfg.extract.quadrature_site.unwrap_or(plan.site_pairs.first().map_or(1, |p| p.0));
        let coeffs = phase_observable_coefficients(&basis, site, None)?;
        let dt = std::f64::consts::TAU / (basis.omega(basis.n_modes()) * 16.0);
        let len = (16.0 * std::f64::consts::TAU / basis.omega(1) / dt).ceil() as usize;
        let record = classical_phase(t, &coeffs, dt, len)?;
        let fit = extract_quadratures(&record, &basis, site)?;
        for (n, q) in fit.q.iter().enumerate() {
            if let Some(q) = q {
                recovery.correlations.q[n].value = *q;
            }
        }
        flagged = fit.flagged;
    }

    let mut buf = Vec::new();
    io::write_correlations(&mut buf, &recovery.correlations, "recovered")?;
    write(global, "recovered.jsonl", &buf)?;

    let s = squeezing_measure(&recovery.correlations);
    let tol = 1e-6 * s.max_abs().max(f64::MIN_POSITIVE);
    let error = truth.as_ref().map(|t| relative_error(&recovery.correlations, t));
    let groups: Vec<serde_json::Value> = recovery
        .groups
        .iter()
        .map(|g| {
            json!({
                "omega_over_omega0": g.omega / w0,
                "unknowns": g.unknowns.iter().map(|u| u.to_string()).collect::<Vec<_>>(),
                "rank": g.rank,
                "condition": if g.condition.is_finite() { json!(g.condition) } else { json!(null) },
                "residual": g.residual,
                "suggestions": g.suggestions,
            })
        })
        .collect();
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "site_pairs": plan.site_pairs,
        "groups": groups,
        "deficient_groups": recovery.deficient().count(),
        "max_relative_error": error,
        "quadrature_flagged_modes": flagged,
        "squeezing": squeezing_table(&s, tol),
    });
    let text = match global.format {
        Format::Json => pretty(&report)?,
        Format::Text => {
            let mut t = String::new();
            let _ = writeln!(t, "site pairs: {:?}", plan.site_pairs);
            let _ = writeln!(
                t,
                "{:>10} {:>5} {:>6} {:>12} {:>12}  unknowns",
                "omega/w0", "size", "rank", "condition", "residual"
            );
            for g in &recovery.groups {
                let names: Vec<String> = g.unknowns.iter().map(|u| u.to_string()).collect();
                let _ = writeln!(
                    t,
                    "{:>10.4} {:>5} {:>6} {:>12.4e} {:>12.4e}  {}",
                    g.omega / w0,
                    g.unknowns.len(),
                    g.rank,
                    g.condition,
                    g.residual,
                    names.join(" ")
                );
                if !g.suggestions.is_empty() {
                    let _ = writeln!(t, "{:>10} add site pairs {:?}", "", g.suggestions);
                }
            }
            if let Some(e) = error {
                let _ = writeln!(t, "max error relative to truth: {e:.3e}");
            }
            if !flagged.is_empty() {
                let _ = writeln!(t, "quadratures not recoverable at the fit site for modes {flagged:?}");
            }
            t.push_str(&squeezing_text(&s, tol));
            t.into_bytes()
        }
    };
    let path = write(global, &report_name("extract_report", global.format), &text)?;
    println!("wrote recovered.jsonl and {}", path.display());
    if let Some(e) = error {
        println!("max error relative to truth: {e:.3e}");
    }
    recovery.require_full_rank()?;
    Ok(())
}

// ------------------------------------------------------------------ report

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Correlation files; defaults to the trial-state and recovered files in
    /// the output directory.
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    /// Entries of S at or below this magnitude count as zero.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
}

fn squeezing_text(s: &SqueezingMeasure, tol: f64) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "S_nm support above {tol:.1e}:");
    let support = s.support(tol);
    if support.is_empty() {
        let _ = writeln!(t, "  none (state clusters)");
    }
    for (n, m) in support {
        let (a, b) = (s.normal[n - 1][m - 1].value, s.anomalous[n - 1][m - 1].value);
        let _ = writeln!(t, "  ({n},{m})  |S_N| = {:.6e}  |S_A| = {:.6e}", a.norm(), b.norm());
    }
    t
}

pub fn report(global: &GlobalArgs, args: &ReportArgs) -> Result<()> {
    let inputs: Vec<PathBuf> = if args.inputs.is_empty() {
        STATES
            .iter()
            .chain(&["recovered"])
            .map(|s| global.out_dir.join(format!("{s}.jsonl")))
            .filter(|p| p.exists())
            .collect()
    } else {
        args.inputs.clone()
    };
    if inputs.is_empty() {
        bail!(ConfigError(format!(
            "no correlation files in {}; run `ladderprobe correlations` first or pass --input",
            global.out_dir.display()
        )));
    }
    let mut sets = BTreeMap::new();
    let mut csv = String::from(
        "state,n,m,normal_re,normal_im,normal_omega,anomalous_re,anomalous_im,anomalous_omega\n",
    );
    let mut text = String::new();
    let mut entries = Vec::new();
    for path in &inputs {
        let (label, set) = read_set(path)?;
        let s = squeezing_measure(&set);
        let k = set.n_modes();
        for n in 0..k {
            for m in 0..k {
                let (a, b) = (s.normal[n][m], s.anomalous[n][m]);
                let _ = writeln!(
                    csv,
                    "{label},{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
                    n + 1,
                    m + 1,
                    a.value.re,
                    a.value.im,
                    a.omega,
                    b.value.re,
                    b.value.im,
                    b.omega
                );
            }
        }
        let _ = writeln!(text, "== {label} ({}) max |S| = {:.6e}", path.display(), s.max_abs());
        text.push_str(&squeezing_text(&s, args.tolerance));
        entries.push(json!({
            "state": label,
            "file": path.display().to_string(),
            "max_abs": s.max_abs(),
            "support": s.support(args.tolerance).into_iter().collect::<Vec<_>>(),
        }));
        sets.insert(label, set);
    }
    // Entries where squeezing changes the correlators of the coherent state.
    let mut diff = Vec::new();
    if let (Some(c), Some(s)) = (sets.get("coherent"), sets.get("squeezed")) {
        let k = c.n_modes();
        for n in 0..k {
            for m in 0..k {
                let dn = (s.normal[n][m].value - c.normal[n][m].value).norm();
                let da = (s.anomalous[n][m].value - c.anomalous[n][m].value).norm();
                if dn > args.tolerance || da > args.tolerance {
                    diff.push((n + 1, m + 1));
                }
            }
        }
        let _ = writeln!(text, "== squeezed vs coherent: entries that differ");
        let _ = writeln!(text, "  {diff:?}");
    }
    write(global, "squeezing.csv", csv.as_bytes())?;
    let body = match global.format {
        Format::Text => text.into_bytes(),
        Format::Json => pretty(&json!({
            "schema_version": SCHEMA_VERSION,
            "tolerance": args.tolerance,
            "states": entries,
            "squeezed_vs_coherent": diff,
        }))?,
    };
    let path = write(global, &report_name("report", global.format), &body)?;
    println!("wrote squeezing.csv and {}", path.display());
    Ok(())
}
