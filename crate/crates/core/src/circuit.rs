//! LC-ladder normal modes and the impurity three-wave-mixing tensor.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constants::{ELEMENTARY_CHARGE, REDUCED_FLUX_QUANTUM};
use crate::error::{Error, Result};

/// Denominator used inside the impurity profile `f_n`.
///
/// `Derived` uses `2(N+1)`, which is what `γ_n(i0) − γ_n(j0)` gives when
/// expanded from the mode shapes. `Literal` keeps the literal `2N+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FnDenominator {
    #[default]
    Derived,
    Literal,
}

impl FnDenominator {
    fn value(self, nodes: usize) -> f64 {
        match self {
            FnDenominator::Derived => 2.0 * (nodes as f64 + 1.0),
            FnDenominator::Literal => 2.0 * nodes as f64 + 1.0,
        }
    }
}

/// How mode frequencies are assigned.
///
/// `Exact` is the lattice dispersion `2/√(LC) sin(nπ/(2N+2))`; `Linear` is its
/// long-chain limit `n ω₀`, under which the rotating-wave resonances
/// `ω_n + ω_m = ω_{n+m}` hold exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dispersion {
    #[default]
    Exact,
    Linear,
}

/// Physical parameters of the ladder, impurity, drive and loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderConfig {
    /// Number of ladder nodes `N`.
    pub nodes: usize,
    /// Rung inductance (H).
    pub inductance: f64,
    /// Node capacitance (F).
    pub capacitance: f64,
    /// Impurity Josephson energy (J).
    pub impurity_ej: f64,
    /// Impurity nodes `(i0, j0)`, 1-based.
    pub impurity_nodes: (usize, usize),
    /// Impurity flux bias (rad).
    pub impurity_flux: f64,
    /// Photon loss rate (1/s).
    pub kappa: f64,
    /// Driven mode, 1-based.
    pub drive_mode: usize,
    /// Effective drive strength (1/s).
    pub drive_strength: f64,
    /// Number of retained low-lying modes.
    pub n_modes: usize,
    #[serde(default)]
    pub fn_denominator: FnDenominator,
    #[serde(default)]
    pub dispersion: Dispersion,
}

impl LadderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.nodes == 0 {
            return bad("ladder needs at least one node".into());
        }
        let (i0, j0) = self.impurity_nodes;
        for site in [i0, j0] {
            if site == 0 || site > self.nodes {
                return Err(Error::OutOfRange { what: "impurity node", index: site, max: self.nodes });
            }
        }
        if i0 == j0 {
            return bad(format!("impurity must bridge two distinct nodes, got {i0} twice"));
        }
        if self.n_modes == 0 || self.n_modes > self.nodes {
            return bad(format!("n_modes = {} must lie in 1..={}", self.n_modes, self.nodes));
        }
        if self.drive_mode == 0 || self.drive_mode > self.n_modes {
            return Err(Error::OutOfRange { what: "drive mode", index: self.drive_mode, max: self.n_modes });
        }
        for (name, v) in [("inductance", self.inductance), ("capacitance", self.capacitance)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be strictly positive, got {v}"));
            }
        }
        // Zero loss and zero drive describe the closed system.
        for (name, v) in [("kappa", self.kappa), ("drive strength", self.drive_strength)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.impurity_ej.is_finite() && self.impurity_ej >= 0.0) {
            return bad(format!("impurity E_J must be non-negative, got {}", self.impurity_ej));
        }
        Ok(())
    }

    /// `E_C = 4e²/(2C)`.
    pub fn charging_energy(&self) -> f64 {
        4.0 * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * self.capacitance)
    }

    /// `E_L = (Φ₀/2π)²/(2L)`.
    pub fn inductive_energy(&self) -> f64 {
        REDUCED_FLUX_QUANTUM * REDUCED_FLUX_QUANTUM / (2.0 * self.inductance)
    }

    /// Fundamental spacing `π/((N+1)√(LC))`.
    pub fn fundamental_frequency(&self) -> f64 {
        PI / ((self.nodes as f64 + 1.0) * (self.inductance * self.capacitance).sqrt())
    }

    /// Overall cubic coupling energy `g = E_J (E_C/E_L)^{3/4}`.
    pub fn coupling_energy(&self) -> f64 {
        self.impurity_ej * (self.charging_energy() / self.inductive_energy()).powf(0.75)
    }

    /// Characteristic impedance `√(L/C)` of one ladder section.
    pub fn impedance(&self) -> f64 {
        (self.inductance / self.capacitance).sqrt()
    }
}

/// Normal-mode data for the retained modes `1..=n_modes`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis {
    nodes: usize,
    omega0: f64,
    omega: Vec<f64>,
    profiles: DMatrix<f64>,
    gamma: DMatrix<f64>,
    phi_zpf: Vec<f64>,
    n_zpf: Vec<f64>,
}

impl ModeBasis {
    /// Mode shape `X_n(i) = √(2/(N+1)) sin(nπi/(N+1))`, valid also at the
    /// fictitious boundary sites `i = 0` and `i = N+1`.
    pub fn profile_formula(nodes: usize, n: usize, site: usize) -> f64 {
        let np1 = nodes as f64 + 1.0;
        (2.0 / np1).sqrt() * (n as f64 * PI * site as f64 / np1).sin()
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn n_modes(&self) -> usize {
        self.omega.len()
    }

    /// Fundamental spacing ω₀, always derived from `L`, `C` and `N`.
    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.omega
    }

    pub fn omega(&self, n: usize) -> f64 {
        self.omega[n - 1]
    }

    pub fn profile(&self, n: usize, site: usize) -> f64 {
        self.profiles[(n - 1, site - 1)]
    }

    /// `γ_n(i) = φ_zpf(n) X_n(i)`.
    pub fn gamma(&self, n: usize, site: usize) -> f64 {
        self.gamma[(n - 1, site - 1)]
    }

    pub fn phi_zpf(&self, n: usize) -> f64 {
        self.phi_zpf[n - 1]
    }

    pub fn n_zpf(&self, n: usize) -> f64 {
        self.n_zpf[n - 1]
    }

    pub fn profiles(&self) -> &DMatrix<f64> {
        &self.profiles
    }

    /// Largest deviation of `Σ_i X_n(i) X_m(i)` from `δ_nm`.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = &self.profiles * self.profiles.transpose();
        let k = self.n_modes();
        let mut worst = 0.0_f64;
        for n in 0..k {
            for m in 0..k {
                let target = if n == m { 1.0 } else { 0.0 };
                worst = worst.max((gram[(n, m)] - target).abs());
            }
        }
        worst
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site == 0 || site > self.nodes {
            Err(Error::OutOfRange { what: "ladder site", index: site, max: self.nodes })
        } else {
            Ok(())
        }
    }
}

/// Lattice dispersion `ω_n = (2/√(LC)) sin(nπ/(2N+2))`.
pub fn lattice_frequency(nodes: usize, n: usize, inductance: f64, capacitance: f64) -> f64 {
    2.0 / (inductance * capacitance).sqrt() * (n as f64 * PI / (2.0 * (nodes as f64 + 1.0))).sin()
}

pub fn build_mode_basis(config: &LadderConfig) -> Result<ModeBasis> {
    config.validate()?;
    let nodes = config.nodes;
    let k = config.n_modes;
    let np1 = nodes as f64 + 1.0;
    let omega0 = config.fundamental_frequency();
    let e_c = config.charging_energy();
    let e_l = config.inductive_energy();
    let omega = (1..=k)
        .map(|n| match config.dispersion {
            Dispersion::Exact => lattice_frequency(nodes, n, config.inductance, config.capacitance),
            Dispersion::Linear => n as f64 * omega0,
        })
        .collect();
    let profiles = DMatrix::from_fn(k, nodes, |r, c| ModeBasis::profile_formula(nodes, r + 1, c + 1));
    let phi_scale = (2.0 * e_c / e_l).powf(0.25);
    let n_scale = (e_l / (32.0 * e_c)).powf(0.25);
    let phi_zpf: Vec<f64> = (1..=k).map(|m| (np1 / (m as f64 * PI)).sqrt() * phi_scale).collect();
    let n_zpf = (1..=k).map(|m| (m as f64 * PI / np1).sqrt() * n_scale).collect();
    let gamma = DMatrix::from_fn(k, nodes, |r, c| phi_zpf[r] * profiles[(r, c)]);

    Ok(ModeBasis { nodes, omega0, omega, profiles, gamma, phi_zpf, n_zpf })
}

/// Coefficients `c_n` with `φ_i = Σ_n c_n (a_n† + a_n)`, or the same for
/// `Δφ_ij = φ_i − φ_j` when `site_j` is given.
pub fn phase_observable_coefficients(
    basis: &ModeBasis,
    site_i: usize,
    site_j: Option<usize>,
) -> Result<Vec<f64>> {
    basis.check_site(site_i)?;
    if let Some(j) = site_j {
        basis.check_site(j)?;
    }
    Ok((1..=basis.n_modes())
        .map(|n| {
            let gi = basis.gamma(n, site_i);
            match site_j {
                Some(j) => gi - basis.gamma(n, j),
                None => gi,
            }
        })
        .collect())
}

/// Impurity profile `f_n = n^{-1/2} sin(nπ(i0−j0)/D) cos(nπ(i0+j0)/D)` for
/// `n = 1..=n_modes`.
pub fn impurity_profile(
    nodes: usize,
    impurity_nodes: (usize, usize),
    n_modes: usize,
    denominator: FnDenominator,
) -> Vec<f64> {
    let d = denominator.value(nodes);
    let (i0, j0) = (impurity_nodes.0 as f64, impurity_nodes.1 as f64);
    (1..=n_modes)
        .map(|n| {
            let n = n as f64;
            (n * PI * (i0 - j0) / d).sin() * (n * PI * (i0 + j0) / d).cos() / n.sqrt()
        })
        .collect()
}

/// Prefactor `(√(2/π))³ · 2³ · 2^{3/4}` of `A_nml`.
pub fn coupling_prefactor() -> f64 {
    (2.0 / PI).sqrt().powi(3) * 8.0 * 2f64.powf(0.75)
}

/// Sparse cubic coupling `A_nml` restricted to `n + m = l`.
///
/// Only `n ≤ m` is stored; [`CouplingTensor::get`] is symmetric in the first
/// two indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CouplingTensor {
    n_modes: usize,
    entries: BTreeMap<(usize, usize), f64>,
    g: f64,
}

impl CouplingTensor {
    /// Empty tensor over `n_modes` modes with coupling energy `g`.
    pub fn new(n_modes: usize, g: f64) -> Self {
        Self { n_modes, entries: BTreeMap::new(), g }
    }

    /// All resonant triples built from a per-mode profile `f`.
    /// Entries that vanish exactly are not stored.
    pub fn from_profile(profile: &[f64], g: f64) -> Self {
        let k = profile.len();
        let pre = coupling_prefactor();
        let mut tensor = Self::new(k, g);
        for l in 2..=k {
            for n in 1..=l / 2 {
                let m = l - n;
                let value = pre * profile[n - 1] * profile[m - 1] * profile[l - 1];
                if value != 0.0 {
                    tensor.entries.insert((n, m), value);
                }
            }
        }
        tensor
    }

    /// Sets `A_{n,m,n+m}` (and by symmetry `A_{m,n,n+m}`).
    pub fn insert(&mut self, n: usize, m: usize, value: f64) -> Result<()> {
        let (a, b) = if n <= m { (n, m) } else { (m, n) };
        if a == 0 || a + b > self.n_modes {
            return Err(Error::OutOfRange { what: "coupling triple", index: a + b, max: self.n_modes });
        }
        self.entries.insert((a, b), value);
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Coupling energy `g` (J).
    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `A_nml`; zero unless `n + m = l`.
    pub fn get(&self, n: usize, m: usize, l: usize) -> f64 {
        if n + m != l {
            return 0.0;
        }
        let key = if n <= m { (n, m) } else { (m, n) };
        self.entries.get(&key).copied().unwrap_or(0.0)
    }

    /// Stored triples `(n, m, l, A)` with `n ≤ m`, ordered by `(n, m)`.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(n, m), &a)| (n, m, n + m, a))
    }
}

pub fn build_coupling_tensor(config: &LadderConfig, basis: &ModeBasis) -> Result<CouplingTensor> {
    config.validate()?;
    if (config.impurity_flux - PI / 2.0).abs() > 1e-12 {
        return Err(Error::UnsupportedFlux(config.impurity_flux));
    }
    if basis.n_modes() != config.n_modes || basis.nodes() != config.nodes {
        return Err(Error::DimensionMismatch { expected: config.n_modes, got: basis.n_modes() });
    }
    let profile =
        impurity_profile(config.nodes, config.impurity_nodes, config.n_modes, config.fn_denominator);
    Ok(CouplingTensor::from_profile(&profile, config.coupling_energy()))
}
