//! Recovering mode-space correlators from probe readouts.
//!
//! At `φ_ext = π/2` the readout component at frequency `Ω` is a linear
//! combination of every `N_nm` and `A_nm` rotating at `Ω`, weighted by
//! `s_n s_m` with `s_n = β(ω_n)(c_n(i) − c_n(j))`. Unknowns sharing a
//! frequency form a degeneracy group; each site pair contributes one row per
//! group, and every group is solved separately by SVD.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{phase_observable_coefficients, ModeBasis};
use crate::error::{Error, Result};
use crate::probe::{FourierComponent, PhiExt, ProbeConfig, TimeSeries};
use crate::states::CorrelationSet;

/// Relative singular-value cut below which a direction counts as missing.
const RANK_THRESHOLD: f64 = 1e-10;

/// One correlator unknown, canonicalized with `n ≤ m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "channel")]
pub enum Unknown {
    N { n: usize, m: usize },
    A { n: usize, m: usize },
}

impl Unknown {
    pub fn normal(n: usize, m: usize) -> Self {
        Unknown::N { n: n.min(m), m: n.max(m) }
    }

    pub fn anomalous(n: usize, m: usize) -> Self {
        Unknown::A { n: n.min(m), m: n.max(m) }
    }

    pub fn modes(self) -> (usize, usize) {
        match self {
            Unknown::N { n, m } | Unknown::A { n, m } => (n, m),
        }
    }

    pub fn frequency(self, basis: &ModeBasis) -> f64 {
        match self {
            Unknown::N { n, m } => (basis.omega(m) - basis.omega(n)).abs(),
            Unknown::A { n, m } => basis.omega(n) + basis.omega(m),
        }
    }

    /// Real unknowns sit at DC; the rest carry a complex amplitude.
    pub fn is_real(self) -> bool {
        matches!(self, Unknown::N { n, m } if n == m)
    }

    fn coefficient(self, s: &[f64]) -> f64 {
        let (n, m) = self.modes();
        let mult = if n == m { 1.0 } else { 2.0 };
        mult * s[n - 1] * s[m - 1]
    }
}

impl fmt::Display for Unknown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unknown::N { n, m } => write!(f, "N({n},{m})"),
            Unknown::A { n, m } => write!(f, "A({n},{m})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyGroup {
    /// Mean member frequency (rad/s).
    pub omega: f64,
    pub unknowns: Vec<Unknown>,
}

impl DegeneracyGroup {
    pub fn anomalous(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.unknowns.iter().filter_map(|u| match *u {
            Unknown::A { n, m } => Some((n, m)),
            Unknown::N { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyTable {
    pub tolerance: f64,
    /// Sorted by frequency.
    pub groups: Vec<DegeneracyGroup>,
}

impl DegeneracyTable {
    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(|g| g.unknowns.len()).max().unwrap_or(0)
    }

    /// Largest number of sum-frequency unknowns sharing one frequency.
    pub fn max_anomalous_group_size(&self) -> usize {
        self.groups.iter().map(|g| g.anomalous().count()).max().unwrap_or(0)
    }

    pub fn group_near(&self, omega: f64) -> Option<&DegeneracyGroup> {
        self.groups.iter().find(|g| (g.omega - omega).abs() <= self.tolerance)
    }

    pub fn unknown_count(&self) -> usize {
        self.groups.iter().map(|g| g.unknowns.len()).sum()
    }
}

/// Groups every `N_nm` and `A_nm` (`n ≤ m ≤ n_modes`) by frequency, merging
/// frequencies closer than `ω₀/100`.
pub fn degeneracy_groups(basis: &ModeBasis, n_modes: usize) -> Result<DegeneracyTable> {
    let modes: Vec<usize> = (1..=n_modes).collect();
    degeneracy_groups_for(basis, &modes, 0.01)
}

/// Same as [`degeneracy_groups`] over an explicit set of active modes and a
/// binning tolerance given as a fraction of `ω₀`.
pub fn degeneracy_groups_for(
    basis: &ModeBasis,
    modes: &[usize],
    tolerance_fraction: f64,
) -> Result<DegeneracyTable> {
    let set: BTreeSet<usize> = modes.iter().copied().collect();
    if let Some(&bad) = set.iter().find(|&&m| m == 0 || m > basis.n_modes()) {
        return Err(Error::OutOfRange { what: "mode", index: bad, max: basis.n_modes() });
    }
    let tolerance = tolerance_fraction * basis.omega0();
    let mut items: Vec<(f64, Unknown)> = Vec::new();
    for &n in &set {
        for &m in set.range(n..) {
            for u in [Unknown::normal(n, m), Unknown::anomalous(n, m)] {
                items.push((u.frequency(basis), u));
            }
        }
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut groups: Vec<(Vec<f64>, Vec<Unknown>)> = Vec::new();
    for (w, u) in items {
        match groups.last_mut() {
            Some((ws, us)) if w - ws.last().copied().unwrap_or(w) <= tolerance => {
                ws.push(w);
                us.push(u);
            }
            _ => groups.push((vec![w], vec![u])),
        }
    }
    let groups = groups
        .into_iter()
        .map(|(ws, mut unknowns)| {
            unknowns.sort();
            DegeneracyGroup { omega: ws.iter().sum::<f64>() / ws.len() as f64, unknowns }
        })
        .collect();
    Ok(DegeneracyTable { tolerance, groups })
}

/// A readout between `site_i` and `site_j` (ground when `None`).
pub type SitePair = (usize, Option<usize>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub seed: u64,
    /// Extra measurements allowed beyond the largest group size.
    pub slack: usize,
    /// Restrict unknowns to these modes (all modes when `None`).
    pub active_modes: Option<Vec<usize>>,
    /// Binning tolerance as a fraction of `ω₀`.
    pub tolerance_fraction: f64,
    /// Number of site pairs drawn from the seeded shuffle for the greedy
    /// search.
    pub candidates: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self { seed: 0, slack: 2, active_modes: None, tolerance_fraction: 0.01, candidates: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPlan {
    pub site_pairs: Vec<SitePair>,
    pub phi_ext: PhiExt,
    pub modes: Vec<usize>,
    pub table: DegeneracyTable,
    /// Groups still below full rank, with their missing rank.
    pub deficient: Vec<(f64, usize)>,
}

impl MeasurementPlan {
    pub fn is_complete(&self) -> bool {
        self.deficient.is_empty()
    }

    pub fn expected_frequencies(&self) -> Vec<f64> {
        self.table.groups.iter().map(|g| g.omega).collect()
    }
}

/// Site-difference coefficients `c(i) − c(j)` for every basis mode.
fn pair_coefficients(basis: &ModeBasis, pair: SitePair) -> Result<Vec<f64>> {
    phase_observable_coefficients(basis, pair.0, pair.1)
}

fn group_matrix(group: &DegeneracyGroup, rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), group.unknowns.len(), |r, c| group.unknowns[c].coefficient(&rows[r]))
}

/// Divides each column by its norm; returns the scales (1 for empty columns).
fn equilibrate(m: &mut DMatrix<f64>) -> Vec<f64> {
    (0..m.ncols())
        .map(|c| {
            let norm = m.column(c).norm();
            let scale = if norm > 0.0 { norm } else { 1.0 };
            m.column_mut(c).unscale_mut(scale);
            scale
        })
        .collect()
}

/// Singular values of the column-equilibrated matrix, descending.
fn singular_values(mut m: DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    equilibrate(&mut m);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

fn numerical_rank(sv: &[f64]) -> usize {
    match sv.first() {
        Some(&max) if max > 0.0 => sv.iter().filter(|&&s| s > RANK_THRESHOLD * max).count(),
        _ => 0,
    }
}

/// `σ_k/σ_1` with `k = min(rows, cols)`; 0 for an empty matrix.
fn conditioning_score(group: &DegeneracyGroup, rows: &[Vec<f64>]) -> f64 {
    let sv = singular_values(group_matrix(group, rows));
    let k = rows.len().min(group.unknowns.len());
    match (sv.first(), k) {
        (Some(&max), k) if k > 0 && max > 0.0 => sv[k - 1] / max,
        _ => 0.0,
    }
}

/// Smallest singular value a group can currently resolve (`σ_k`,
/// `k = min(rows, cols)`), without equilibration.
pub fn group_min_singular_value(group: &DegeneracyGroup, rows: &[Vec<f64>]) -> f64 {
    let m = group_matrix(group, rows);
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv[rows.len().min(group.unknowns.len()) - 1]
}

fn candidate_pairs(basis: &ModeBasis, seed: u64, count: usize) -> Vec<SitePair> {
    let nodes = basis.nodes();
    let mut all: Vec<SitePair> = (1..=nodes).map(|i| (i, None)).collect();
    for i in 1..=nodes {
        for j in i + 1..=nodes {
            all.push((i, Some(j)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    all.truncate(count.max(1));
    all
}

fn deficiencies(table: &DegeneracyTable, rows: &[Vec<f64>]) -> Vec<(f64, usize)> {
    table
        .groups
        .iter()
        .filter_map(|g| {
            let rank = numerical_rank(&singular_values(group_matrix(g, rows)));
            (rank < g.unknowns.len()).then_some((g.omega, g.unknowns.len() - rank))
        })
        .collect()
}

/// Greedy site-pair selection: each step adds the candidate that maximizes
/// the worst group's `σ_k/σ_1`. Stops once every group is full rank and at
/// least the largest group size has been reached, or after `slack` extra
/// measurements.
pub fn plan_measurements(
    basis: &ModeBasis,
    n_modes: usize,
    options: &PlanOptions,
) -> Result<MeasurementPlan> {
    if n_modes == 0 || n_modes > basis.n_modes() {
        return Err(Error::OutOfRange { what: "plan modes", index: n_modes, max: basis.n_modes() });
    }
    let modes: Vec<usize> = match &options.active_modes {
        Some(active) => {
            let mut m: Vec<usize> = active.iter().copied().filter(|&x| x <= n_modes).collect();
            m.sort_unstable();
            m.dedup();
            m
        }
        None => (1..=n_modes).collect(),
    };
    if modes.is_empty() {
        return Err(Error::InvalidConfig("no active modes to plan for".into()));
    }
    let table = degeneracy_groups_for(basis, &modes, options.tolerance_fraction)?;
    let target = table.max_group_size();
    let limit = target + options.slack;
    let candidates = candidate_pairs(basis, options.seed, options.candidates);
    let coeffs: Vec<Vec<f64>> =
        candidates.iter().map(|&p| pair_coefficients(basis, p)).collect::<Result<_>>()?;

    let mut chosen: Vec<usize> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    while rows.len() < limit {
        if rows.len() >= target && deficiencies(&table, &rows).is_empty() {
            break;
        }
        let mut best: Option<(f64, usize)> = None;
        for (idx, row) in coeffs.iter().enumerate() {
            if chosen.contains(&idx) {
                continue;
            }
            rows.push(row.clone());
            let floor = best.map_or(f64::NEG_INFINITY, |b| b.0);
            let mut score = f64::INFINITY;
            for g in &table.groups {
                score = score.min(conditioning_score(g, &rows));
                if score <= floor {
                    break;
                }
            }
            rows.pop();
            if score > floor {
                best = Some((score, idx));
            }
        }
        let Some((_, idx)) = best else { break };
        chosen.push(idx);
        rows.push(coeffs[idx].clone());
    }
    let deficient = deficiencies(&table, &rows);
    Ok(MeasurementPlan {
        site_pairs: chosen.iter().map(|&i| candidates[i]).collect(),
        phi_ext: PhiExt::HalfPi,
        modes,
        table,
        deficient,
    })
}

/// One readout: the Fourier components measured between a site pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub pair: SitePair,
    pub components: Vec<FourierComponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub omega: f64,
    pub unknowns: Vec<Unknown>,
    pub rank: usize,
    /// `σ_max/σ_min` of the equilibrated system (infinite when deficient).
    pub condition: f64,
    /// Least-squares residual norm in normalized readout units.
    pub residual: f64,
    /// Site pairs that would raise the rank, when deficient.
    pub suggestions: Vec<SitePair>,
}

impl GroupReport {
    pub fn missing_rank(&self) -> usize {
        self.unknowns.len() - self.rank
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    /// Recovered `N` and `A`; `q` is left at zero for the caller to fill.
    pub correlations: CorrelationSet,
    pub groups: Vec<GroupReport>,
}

impl Recovery {
    pub fn deficient(&self) -> impl Iterator<Item = &GroupReport> {
        self.groups.iter().filter(|g| g.rank < g.unknowns.len())
    }

    pub fn require_full_rank(&self) -> Result<()> {
        let bad: Vec<String> = self
            .deficient()
            .map(|g| format!("{:.6e} rad/s missing rank {}", g.omega, g.missing_rank()))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::RankDeficient(bad.join("; ")))
        }
    }
}

fn suggest_pairs(
    group: &DegeneracyGroup,
    rows: &[Vec<f64>],
    basis: &ModeBasis,
    missing: usize,
) -> Result<Vec<SitePair>> {
    let mut rows = rows.to_vec();
    let mut rank = numerical_rank(&singular_values(group_matrix(group, &rows)));
    let mut out = Vec::new();
    for pair in candidate_pairs(basis, 0, usize::MAX) {
        if out.len() == missing {
            break;
        }
        rows.push(pair_coefficients(basis, pair)?);
        let r = numerical_rank(&singular_values(group_matrix(group, &rows)));
        if r > rank {
            rank = r;
            out.push(pair);
        } else {
            rows.pop();
        }
    }
    Ok(out)
}

/// Solves every degeneracy group of `plan` from the measured readouts at
/// `φ_ext = π/2`.
///
/// The known DC offset `P(1 − ½Σ s_n²)`, including the zero-point term, is
/// subtracted before solving, and every component is divided by the damping
/// transfer at its own frequency.
pub fn assemble_and_solve(
    plan: &MeasurementPlan,
    measured: &[Measurement],
    basis: &ModeBasis,
    probe: &ProbeConfig,
) -> Result<Recovery> {
    probe.validate()?;
    if probe.phi_ext != PhiExt::HalfPi {
        return Err(Error::UnsupportedPhiExt(probe.phi_ext.radians()));
    }
    if measured.is_empty() {
        return Err(Error::InvalidConfig("no measurements supplied".into()));
    }
    let k = basis.n_modes();
    let p = probe.current_scale();
    let betas = basis.frequencies().iter().map(|&w| probe.beta_at(w)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(measured.len());
    let mut raw_rows = Vec::with_capacity(measured.len());
    for m in measured {
        let d = pair_coefficients(basis, m.pair)?;
        rows.push(d.iter().zip(&betas).map(|(x, b)| x * b).collect::<Vec<f64>>());
        raw_rows.push(d);
    }

    let mut corr = CorrelationSet::zeros(basis);
    let mut reports = Vec::with_capacity(plan.table.groups.len());
    for group in &plan.table.groups {
        let dc = group.unknowns.iter().all(|u| u.is_real());
        let rhs: Vec<Complex64> = measured
            .iter()
            .zip(&rows)
            .map(|(m, s)| {
                let mut y = Complex64::new(0.0, 0.0);
                for c in &m.components {
                    if (c.omega - group.omega).abs() <= plan.table.tolerance {
                        y += c.amplitude / probe.transfer(c.omega);
                    }
                }
                if dc {
                    let offset = p * (1.0 - 0.5 * s.iter().map(|x| x * x).sum::<f64>());
                    Complex64::new((offset - y.re) / p, 0.0)
                } else {
                    -y / p
                }
            })
            .collect();

        let mut a = group_matrix(group, &rows);
        let scales = equilibrate(&mut a);
        let svd = a.clone().svd(true, true);
        let sv_max = svd.singular_values.max();
        let cut = RANK_THRESHOLD * sv_max;
        let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
        let sv_min = svd.singular_values.iter().copied().filter(|&s| s > cut).fold(f64::INFINITY, f64::min);
        let solve = |b: DVector<f64>| -> DVector<f64> {
            svd.solve(&b, cut).unwrap_or_else(|_| DVector::zeros(group.unknowns.len()))
        };
        let re = DVector::from_iterator(rhs.len(), rhs.iter().map(|z| z.re));
        let im = DVector::from_iterator(rhs.len(), rhs.iter().map(|z| z.im));
        let (xr, xi) = (solve(re.clone()), solve(im.clone()));
        let residual = ((&a * &xr - re).norm_squared() + (&a * &xi - im).norm_squared()).sqrt();

        for (c, u) in group.unknowns.iter().enumerate() {
            let z = Complex64::new(xr[c], if dc { 0.0 } else { xi[c] }) / scales[c];
            let (n, m) = u.modes();
            match u {
                Unknown::N { .. } => {
                    corr.normal[n - 1][m - 1].value = z;
                    corr.normal[m - 1][n - 1].value = z.conj();
                }
                Unknown::A { .. } => {
                    corr.anomalous[n - 1][m - 1].value = z;
                    corr.anomalous[m - 1][n - 1].value = z;
                }
            }
        }
        let n_unknowns = group.unknowns.len();
        let suggestions = if rank < n_unknowns {
            suggest_pairs(group, &raw_rows, basis, n_unknowns - rank)?
        } else {
            Vec::new()
        };
        reports.push(GroupReport {
            omega: group.omega,
            unknowns: group.unknowns.clone(),
            rank,
            condition: if rank < n_unknowns { f64::INFINITY } else { sv_max / sv_min },
            residual,
            suggestions,
        });
    }
    debug_assert_eq!(corr.n_modes(), k);
    Ok(Recovery { correlations: corr, groups: reports })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureFit {
    /// `⟨a_n⟩` at `t = 0`, or `None` where the site sits near a node of mode
    /// `n`.
    pub q: Vec<Option<Complex64>>,
    pub flagged: Vec<usize>,
    pub residual_rms: f64,
}

/// Fits a `⟨φ_site⟩(t)` record to `Σ_n c_n cos ω_nt + s_n sin ω_nt` and
/// converts each tone to `⟨a_n⟩ = (c_n + i s_n)/(2γ_n(site))`.
///
/// Modes with `|γ_n(site)|` below `1e-3` of the site's largest coefficient
/// are flagged instead of divided.
pub fn extract_quadratures(record: &TimeSeries, basis: &ModeBasis, site: usize) -> Result<QuadratureFit> {
    let coeffs = phase_observable_coefficients(basis, site, None)?;
    let k = basis.n_modes();
    let period = std::f64::consts::TAU / basis.omega(1);
    if record.duration() < 10.0 * period {
        return Err(Error::InvalidConfig(format!(
            "record of {:.3e} s covers fewer than 10 periods of the lowest mode",
            record.duration()
        )));
    }
    let rows = record.len();
    let design = DMatrix::from_fn(rows, 2 * k, |r, c| {
        let t = r as f64 * record.dt;
        let w = basis.omega(c / 2 + 1);
        if c % 2 == 0 {
            (w * t).cos()
        } else {
            (w * t).sin()
        }
    });
    let y = DVector::from_column_slice(&record.samples);
    let svd = design.clone().svd(true, true);
    let cut = 1e-12 * svd.singular_values.max();
    let x = svd.solve(&y, cut).map_err(|e| Error::InvalidConfig(format!("quadrature fit failed: {e}")))?;
    let residual_rms = (&design * &x - &y).norm() / (rows as f64).sqrt();
    let scale = coeffs.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
    let mut flagged = Vec::new();
    let q = (0..k)
        .map(|n| {
            let g = coeffs[n];
            if g.abs() < 1e-3 * scale {
                flagged.push(n + 1);
                None
            } else {
                Some(Complex64::new(x[2 * n], x[2 * n + 1]) / (2.0 * g))
            }
        })
        .collect();
    Ok(QuadratureFit { q, flagged, residual_rms })
}

/// `⟨φ_iφ_j⟩ = (⟨φ_i²⟩ + ⟨φ_j²⟩ − ⟨(φ_i − φ_j)²⟩)/2`, applied component-wise.
pub fn cross_correlation(
    square_i: &[FourierComponent],
    square_j: &[FourierComponent],
    square_delta: &[FourierComponent],
) -> Vec<FourierComponent> {
    let mut out: Vec<FourierComponent> = Vec::new();
    let mut add = |c: &FourierComponent, w: f64| {
        let tol = 1e-9 * c.omega.max(1.0);
        match out.iter_mut().find(|o| (o.omega - c.omega).abs() <= tol) {
            Some(o) => o.amplitude += w * c.amplitude,
            None => out.push(FourierComponent { omega: c.omega, amplitude: w * c.amplitude }),
        }
    };
    for c in square_i.iter().chain(square_j) {
        add(c, 0.5);
    }
    for c in square_delta {
        add(c, -0.5);
    }
    out.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    out
}
