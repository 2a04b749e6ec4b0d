//! Trial many-body states and their single-frequency correlators.
//!
//! Every correlator is a real signal of the form `Re(z e^{-iωt})`, stored as
//! an [`Amplitude`] `(z, ω)`. With `Q_n = ½⟨a_n + a_n†⟩`,
//! `N_nm = ½⟨a_n†a_m + a_m†a_n⟩` and `A_nm = ½⟨a_n†a_m† + a_m a_n⟩`, the
//! amplitudes are `⟨a_n⟩`, `⟨a_n†a_m⟩` and `⟨a_n a_m⟩` at `t = 0`, rotating at
//! `ω_n`, `ω_m − ω_n` and `ω_n + ω_m`.

mod oracle;

use std::collections::BTreeSet;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{CouplingTensor, ModeBasis};
use crate::constants::HBAR;
use crate::error::{Error, Result};

pub use oracle::fock_space_oracle;

/// A real single-frequency signal `Re(value · e^{-i omega t})`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Amplitude {
    pub value: Complex64,
    pub omega: f64,
}

impl Amplitude {
    pub fn new(value: Complex64, omega: f64) -> Self {
        Self { value, omega }
    }

    pub fn at(&self, t: f64) -> f64 {
        (self.value * Complex64::from_polar(1.0, -self.omega * t)).re
    }
}

/// Two-mode (or, for `n == m`, single-mode) squeezer with parameter `xi` at
/// `t = 0`.
///
/// For `n ≠ m` the operator is `exp(ξ* a_n a_m − ξ a_n† a_m†)`; for `n == m` it
/// is the single-mode `exp(½(ξ* a_n² − ξ a_n†²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezePair {
    pub n: usize,
    pub m: usize,
    pub xi: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrialState {
    /// Product of coherent states `Π D_n(α_n)|0⟩`.
    Coherent { alphas: Vec<Complex64> },
    /// Product of number states.
    Fock { occupations: Vec<u32> },
    /// `Π D_l(α_l) Π S_nm(ξ_nm) |0⟩`: squeezers act first.
    Squeezed { alphas: Vec<Complex64>, pairs: Vec<SqueezePair> },
}

impl TrialState {
    /// Squeezed state driven by a dominant coherent mode `d`: every pair
    /// `{n, d − n}` with `n ≤ d/2` is squeezed with
    /// `ξ_nm = i α_d g A_{n,m,d} T*/ħ`.
    pub fn squeezed_from_drive(
        alphas: Vec<Complex64>,
        drive_mode: usize,
        tensor: &CouplingTensor,
        t_star: f64,
    ) -> Result<Self> {
        if drive_mode == 0 || drive_mode > alphas.len() {
            return Err(Error::OutOfRange { what: "drive mode", index: drive_mode, max: alphas.len() });
        }
        if !(t_star >= 0.0 && t_star.is_finite()) {
            return Err(Error::InvalidState(format!("T* must be non-negative, got {t_star}")));
        }
        let alpha_d = alphas[drive_mode - 1];
        let pairs = (1..=drive_mode / 2)
            .map(|n| {
                let m = drive_mode - n;
                let a = tensor.get(n, m, drive_mode);
                let xi = Complex64::i() * alpha_d * (tensor.g() * a * t_star / HBAR);
                SqueezePair { n, m, xi }
            })
            .collect();
        let state = TrialState::Squeezed { alphas, pairs };
        state.validate(state.n_modes())?;
        Ok(state)
    }

    pub fn n_modes(&self) -> usize {
        match self {
            TrialState::Coherent { alphas } | TrialState::Squeezed { alphas, .. } => alphas.len(),
            TrialState::Fock { occupations } => occupations.len(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TrialState::Coherent { .. } => "coherent",
            TrialState::Fock { .. } => "fock",
            TrialState::Squeezed { .. } => "squeezed",
        }
    }

    pub fn validate(&self, n_modes: usize) -> Result<()> {
        if self.n_modes() != n_modes {
            return Err(Error::DimensionMismatch { expected: n_modes, got: self.n_modes() });
        }
        if let TrialState::Squeezed { pairs, .. } = self {
            let mut seen = BTreeSet::new();
            for p in pairs {
                for mode in [p.n, p.m] {
                    if mode == 0 || mode > n_modes {
                        return Err(Error::OutOfRange { what: "squeezed mode", index: mode, max: n_modes });
                    }
                }
                let fresh = if p.n == p.m { seen.insert(p.n) } else { seen.insert(p.n) && seen.insert(p.m) };
                if !fresh {
                    return Err(Error::InvalidState(format!(
                        "mode in pair ({}, {}) already belongs to another squeezer",
                        p.n, p.m
                    )));
                }
                if !p.xi.norm().is_finite() {
                    return Err(Error::InvalidState(format!(
                        "non-finite squeezing parameter on ({}, {})",
                        p.n, p.m
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Quadratures and normal/anomalous correlators of one state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrelationSet {
    /// `q[n-1]` describes `Q_n(t)`.
    pub q: Vec<Amplitude>,
    /// `normal[n-1][m-1]` describes `N_nm(t)`.
    pub normal: Vec<Vec<Amplitude>>,
    /// `anomalous[n-1][m-1]` describes `A_nm(t)`.
    pub anomalous: Vec<Vec<Amplitude>>,
}

impl CorrelationSet {
    pub fn zeros(basis: &ModeBasis) -> Self {
        let w = basis.frequencies();
        let k = w.len();
        let zero = Complex64::new(0.0, 0.0);
        Self {
            q: w.iter().map(|&wn| Amplitude::new(zero, wn)).collect(),
            normal: (0..k).map(|n| (0..k).map(|m| Amplitude::new(zero, w[m] - w[n])).collect()).collect(),
            anomalous: (0..k).map(|n| (0..k).map(|m| Amplitude::new(zero, w[m] + w[n])).collect()).collect(),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self, n: usize) -> Amplitude {
        self.q[n - 1]
    }

    pub fn normal(&self, n: usize, m: usize) -> Amplitude {
        self.normal[n - 1][m - 1]
    }

    pub fn anomalous(&self, n: usize, m: usize) -> Amplitude {
        self.anomalous[n - 1][m - 1]
    }

    /// Largest absolute difference between corresponding complex amplitudes.
    pub fn max_abs_diff(&self, other: &CorrelationSet) -> f64 {
        let mut worst = 0.0_f64;
        for (a, b) in self.q.iter().zip(&other.q) {
            worst = worst.max((a.value - b.value).norm());
        }
        for (ra, rb) in self.normal.iter().zip(&other.normal) {
            for (a, b) in ra.iter().zip(rb) {
                worst = worst.max((a.value - b.value).norm());
            }
        }
        for (ra, rb) in self.anomalous.iter().zip(&other.anomalous) {
            for (a, b) in ra.iter().zip(rb) {
                worst = worst.max((a.value - b.value).norm());
            }
        }
        worst
    }
}

pub fn correlations(state: &TrialState, basis: &ModeBasis) -> Result<CorrelationSet> {
    let k = basis.n_modes();
    state.validate(k)?;
    let mut set = CorrelationSet::zeros(basis);
    match state {
        TrialState::Fock { occupations } => {
            for (n, &occ) in occupations.iter().enumerate() {
                set.normal[n][n].value = Complex64::new(occ as f64, 0.0);
            }
        }
        TrialState::Coherent { alphas } => fill_coherent(&mut set, alphas),
        TrialState::Squeezed { alphas, pairs } => {
            fill_coherent(&mut set, alphas);
            for p in pairs {
                let (r, theta) = (p.xi.norm(), p.xi.arg());
                let excess = r.sinh().powi(2);
                let pairing = Complex64::from_polar(-0.5 * (2.0 * r).sinh(), theta);
                let (n, m) = (p.n - 1, p.m - 1);
                set.normal[n][n].value += excess;
                set.anomalous[n][m].value += pairing;
                if n != m {
                    set.normal[m][m].value += excess;
                    set.anomalous[m][n].value += pairing;
                }
            }
        }
    }
    Ok(set)
}

fn fill_coherent(set: &mut CorrelationSet, alphas: &[Complex64]) {
    for (n, &an) in alphas.iter().enumerate() {
        set.q[n].value = an;
        for (m, &am) in alphas.iter().enumerate() {
            set.normal[n][m].value = an.conj() * am;
            set.anomalous[n][m].value = an * am;
        }
    }
}

/// `S_nm(t) = N_nm + A_nm − 2 Q_n Q_m`, split into its difference-frequency
/// (`normal`) and sum-frequency (`anomalous`) parts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SqueezingMeasure {
    pub normal: Vec<Vec<Amplitude>>,
    pub anomalous: Vec<Vec<Amplitude>>,
}

impl SqueezingMeasure {
    pub fn at(&self, n: usize, m: usize, t: f64) -> f64 {
        self.normal[n - 1][m - 1].at(t) + self.anomalous[n - 1][m - 1].at(t)
    }

    pub fn max_abs(&self) -> f64 {
        self.normal.iter().chain(&self.anomalous).flatten().fold(0.0_f64, |acc, a| acc.max(a.value.norm()))
    }

    /// Entries `(n, m)` where either channel exceeds `tol` in magnitude.
    pub fn support(&self, tol: f64) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for (n, (rn, ra)) in self.normal.iter().zip(&self.anomalous).enumerate() {
            for (m, (a, b)) in rn.iter().zip(ra).enumerate() {
                if a.value.norm() > tol || b.value.norm() > tol {
                    out.insert((n + 1, m + 1));
                }
            }
        }
        out
    }

    /// Entries whose sum-frequency part exceeds `tol`.
    pub fn anomalous_support(&self, tol: f64) -> BTreeSet<(usize, usize)> {
        support_of(&self.anomalous, tol)
    }

    /// Entries whose difference-frequency part exceeds `tol`.
    pub fn normal_support(&self, tol: f64) -> BTreeSet<(usize, usize)> {
        support_of(&self.normal, tol)
    }
}

fn support_of(channel: &[Vec<Amplitude>], tol: f64) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for (n, row) in channel.iter().enumerate() {
        for (m, a) in row.iter().enumerate() {
            if a.value.norm() > tol {
                out.insert((n + 1, m + 1));
            }
        }
    }
    out
}

pub fn squeezing_measure(corr: &CorrelationSet) -> SqueezingMeasure {
    let k = corr.n_modes();
    let mut normal = corr.normal.clone();
    let mut anomalous = corr.anomalous.clone();
    for n in 0..k {
        for m in 0..k {
            let (qn, qm) = (corr.q[n].value, corr.q[m].value);
            normal[n][m].value -= qn.conj() * qm;
            anomalous[n][m].value -= qn * qm;
        }
    }
    SqueezingMeasure { normal, anomalous }
}

/// Coherent amplitudes with `|α_n|² = N_n` and `arg α_n = phases[n]`.
pub fn alphas_from_populations(steady: &[f64], phases: &[f64]) -> Result<Vec<Complex64>> {
    if steady.len() != phases.len() {
        return Err(Error::DimensionMismatch { expected: steady.len(), got: phases.len() });
    }
    steady
        .iter()
        .zip(phases)
        .enumerate()
        .map(|(i, (&n, &phase))| {
            if n < 0.0 || n.is_nan() {
                Err(Error::NegativePopulation { mode: i + 1, value: n })
            } else {
                Ok(Complex64::from_polar(n.sqrt(), phase))
            }
        })
        .collect()
}

/// Uniform phases in `[0, 2π)` from a seeded ChaCha8 stream.
pub fn random_phases(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_mode_basis, Dispersion, FnDenominator, LadderConfig};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    pub(crate) fn basis(k: usize) -> ModeBasis {
        build_mode_basis(&LadderConfig {
            nodes: 51,
            inductance: 254e-12,
            capacitance: 100e-15,
            impurity_ej: 1e-24,
            impurity_nodes: (4, 5),
            impurity_flux: PI / 2.0,
            kappa: 1.0,
            drive_mode: 1,
            drive_strength: 1.0,
            n_modes: k,
            fn_denominator: FnDenominator::Derived,
            dispersion: Dispersion::Linear,
        })
        .unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn fock_correlators() {
        let b = basis(4);
        let set = correlations(&TrialState::Fock { occupations: vec![3, 0, 1, 7] }, &b).unwrap();
        for n in 1..=4 {
            assert_eq!(set.q(n).value, c(0.0, 0.0));
            for m in 1..=4 {
                assert_eq!(set.anomalous(n, m).value, c(0.0, 0.0));
                let expect = if n == m { [3.0, 0.0, 1.0, 7.0][n - 1] } else { 0.0 };
                assert_eq!(set.normal(n, m).value, c(expect, 0.0));
            }
        }
    }

    #[test]
    fn vacuum_coherent_is_zero() {
        let b = basis(3);
        let set = correlations(&TrialState::Coherent { alphas: vec![c(0.0, 0.0); 3] }, &b).unwrap();
        assert_eq!(set.max_abs_diff(&CorrelationSet::zeros(&b)), 0.0);
    }

    #[test]
    fn coherent_time_dependence_matches_definition() {
        let b = basis(3);
        let alphas = vec![c(0.3, -1.1), c(1.2, 0.4), c(-0.7, 0.2)];
        let set = correlations(&TrialState::Coherent { alphas: alphas.clone() }, &b).unwrap();
        let t = 0.37 / b.omega0();
        for n in 1..=3 {
            let an = alphas[n - 1] * Complex64::from_polar(1.0, -b.omega(n) * t);
            assert_relative_eq!(set.q(n).at(t), an.re, epsilon = 1e-12);
            for m in 1..=3 {
                let am = alphas[m - 1] * Complex64::from_polar(1.0, -b.omega(m) * t);
                assert_relative_eq!(set.normal(n, m).at(t), (an.conj() * am).re, epsilon = 1e-12);
                assert_relative_eq!(set.anomalous(n, m).at(t), (an * am).re, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn squeezed_pairs_on_antidiagonal() {
        let b = basis(10);
        let mut alphas = vec![c(0.2, 0.1); 10];
        alphas[9] = c(3.0, 0.0);
        let pairs = (1..=5).map(|n| SqueezePair { n, m: 10 - n, xi: c(0.0, 0.1 * n as f64) }).collect();
        let sq = TrialState::Squeezed { alphas: alphas.clone(), pairs };
        let cs = correlations(&sq, &b).unwrap();
        let cc = correlations(&TrialState::Coherent { alphas }, &b).unwrap();
        for n in 1..=10 {
            assert_eq!(cs.q(n), cc.q(n));
            for m in 1..=10 {
                let da = (cs.anomalous(n, m).value - cc.anomalous(n, m).value).norm();
                assert_eq!(da > 0.0, n + m == 10, "A({n},{m})");
                assert_eq!(cs.anomalous(n, m).omega, b.omega(n) + b.omega(m));
            }
        }
        let gain = cs.normal(5, 5).value.re - cc.normal(5, 5).value.re;
        assert_relative_eq!(gain, 0.5f64.sinh().powi(2), max_relative = 1e-14);
    }

    #[test]
    fn squeezing_measure_vanishes_for_coherent() {
        let b = basis(5);
        let alphas = vec![c(0.3, -1.1), c(1.2, 0.4), c(-0.7, 0.2), c(0.0, 2.0), c(0.5, 0.5)];
        let s = squeezing_measure(&correlations(&TrialState::Coherent { alphas }, &b).unwrap());
        assert!(s.max_abs() < 1e-15);
    }

    #[test]
    fn squeezing_measure_of_fock_is_diagonal_occupation() {
        let b = basis(3);
        let s =
            squeezing_measure(&correlations(&TrialState::Fock { occupations: vec![2, 0, 5] }, &b).unwrap());
        for n in 1..=3 {
            for m in 1..=3 {
                let expect = if n == m { [2.0, 0.0, 5.0][n - 1] } else { 0.0 };
                assert_eq!(s.at(n, m, 0.0), expect);
                assert_eq!(s.at(n, m, 1.7e-10), expect);
            }
        }
    }

    #[test]
    fn alphas_from_populations_basics() {
        assert_eq!(alphas_from_populations(&[0.0], &[1.0]).unwrap(), vec![c(0.0, 0.0)]);
        let a = alphas_from_populations(&[4.0], &[0.0]).unwrap();
        assert_eq!(a[0], c(2.0, 0.0));
        assert!(matches!(
            alphas_from_populations(&[1.0, -0.5], &[0.0, 0.0]),
            Err(Error::NegativePopulation { mode: 2, .. })
        ));
    }

    #[test]
    fn seeded_phases_are_reproducible() {
        let p1 = random_phases(10, 42);
        let p2 = random_phases(10, 42);
        assert_eq!(p1, p2);
        assert_ne!(p1, random_phases(10, 43));
        let a1 = alphas_from_populations(&[1.5; 10], &p1).unwrap();
        let a2 = alphas_from_populations(&[1.5; 10], &p2).unwrap();
        assert!(a1
            .iter()
            .zip(&a2)
            .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()));
    }

    #[test]
    fn overlapping_pairs_rejected() {
        let b = basis(4);
        let st = TrialState::Squeezed {
            alphas: vec![c(0.0, 0.0); 4],
            pairs: vec![
                SqueezePair { n: 1, m: 3, xi: c(0.1, 0.0) },
                SqueezePair { n: 3, m: 4, xi: c(0.1, 0.0) },
            ],
        };
        assert!(matches!(correlations(&st, &b), Err(Error::InvalidState(_))));
        let st = TrialState::Squeezed {
            alphas: vec![c(0.0, 0.0); 4],
            pairs: vec![SqueezePair { n: 1, m: 5, xi: c(0.1, 0.0) }],
        };
        assert!(matches!(correlations(&st, &b), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn derived_xi_magnitude() {
        let mut tensor = CouplingTensor::new(10, 2.0e-26);
        tensor.insert(3, 7, 0.4).unwrap();
        let mut alphas = vec![c(0.0, 0.0); 10];
        alphas[9] = Complex64::from_polar(2.5, 0.3);
        let st = TrialState::squeezed_from_drive(alphas, 10, &tensor, 1e-9).unwrap();
        let TrialState::Squeezed { pairs, .. } = st else { unreachable!() };
        assert_eq!(pairs.len(), 5);
        let p37 = pairs.iter().find(|p| p.n == 3).unwrap();
        assert_relative_eq!(p37.xi.norm(), 2.5 * 2.0e-26 * 0.4 * 1e-9 / HBAR, max_relative = 1e-14);
        assert_relative_eq!(p37.xi.arg(), 0.3 + PI / 2.0, max_relative = 1e-14);
        assert!(pairs.iter().filter(|p| p.n != 3).all(|p| p.xi.norm() == 0.0));
    }
}
