//! Classical probe: coupler scaling, flux-tuned junction and damped readout.
//!
//! Signals follow the convention `Re(z e^{-iωt})`. The junction output is
//! `I_P = P·sin(Δφ̃ + φ_ext)` with `P = Φ₀E_JP/(2πL_P E_M)`, passed through a
//! linear damping channel `H(ω)`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::constants::REDUCED_FLUX_QUANTUM;
use crate::error::{Error, Result};
use crate::states::CorrelationSet;

/// Control flux on the probe junction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiExt {
    /// Linear readout of `⟨φ_i − φ_j⟩`.
    Zero,
    /// Quadratic readout of `⟨(φ_i − φ_j)²⟩`.
    #[default]
    HalfPi,
}

impl PhiExt {
    pub fn radians(self) -> f64 {
        match self {
            PhiExt::Zero => 0.0,
            PhiExt::HalfPi => FRAC_PI_2,
        }
    }

    pub fn from_radians(value: f64) -> Result<Self> {
        if value.abs() < 1e-12 {
            Ok(PhiExt::Zero)
        } else if (value - FRAC_PI_2).abs() < 1e-12 {
            Ok(PhiExt::HalfPi)
        } else {
            Err(Error::UnsupportedPhiExt(value))
        }
    }
}

/// Photon-loss channel between the junction and the readout current.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Damping {
    /// `ẏ = κ(x − y)`.
    #[default]
    LowPass,
    /// Damped readout resonator `ÿ + κẏ + ω_P²y = ω_P²x` with
    /// `ω_P = 1/√(L_P C_P)`.
    TwoPole,
    /// No filtering.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Coupler series capacitance (F).
    pub c_s: f64,
    /// Coupler series inductance (H).
    pub l_s: f64,
    /// Coupler shunt capacitance (F).
    pub c_x: f64,
    /// Coupler shunt inductance (H).
    pub l_x: f64,
    /// Tuner junction energy (J).
    pub ej_p: f64,
    /// Tuner junction critical current (A).
    pub i_c: f64,
    /// Tuner-to-readout mutual inductance (H).
    pub mutual: f64,
    /// Readout loop inductance (H).
    pub l_p: f64,
    /// Readout loop capacitance (F).
    pub c_p: f64,
    /// Mutual-coupling energy (J). Always given explicitly.
    pub e_m: f64,
    pub phi_ext: PhiExt,
    /// Probe photon loss rate (1/s).
    pub kappa_probe: f64,
    #[serde(default)]
    pub damping: Damping,
    /// Freeze `β` at its `ω = 0` value instead of applying it per component.
    #[serde(default)]
    pub quasi_static: bool,
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c_s", self.c_s),
            ("l_s", self.l_s),
            ("c_x", self.c_x),
            ("l_x", self.l_x),
            ("ej_p", self.ej_p),
            ("i_c", self.i_c),
            ("l_p", self.l_p),
            ("c_p", self.c_p),
            ("e_m", self.e_m),
            ("kappa_probe", self.kappa_probe),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.mutual >= 0.0 && self.mutual.is_finite()) {
            return Err(Error::InvalidConfig(format!("mutual must be non-negative, got {}", self.mutual)));
        }
        Ok(())
    }

    /// Full-scale readout current `Φ₀E_JP/(2πL_P E_M)` (A).
    pub fn current_scale(&self) -> f64 {
        REDUCED_FLUX_QUANTUM * self.ej_p / (self.l_p * self.e_m)
    }

    /// Readout impedance `√(L_P/C_P)` (Ω).
    pub fn impedance(&self) -> f64 {
        (self.l_p / self.c_p).sqrt()
    }

    /// Readout frequency `1/√(L_P C_P)` (rad/s).
    pub fn readout_frequency(&self) -> f64 {
        1.0 / (self.l_p * self.c_p).sqrt()
    }

    /// Coupler resonance `1/√(L_X C_X)` (rad/s).
    pub fn coupler_resonance(&self) -> f64 {
        1.0 / (self.l_x * self.c_x).sqrt()
    }

    /// Damping transfer function for a component `e^{-iωt}`.
    pub fn transfer(&self, omega: f64) -> Complex64 {
        let k = self.kappa_probe;
        match self.damping {
            Damping::LowPass => Complex64::new(k, 0.0) / Complex64::new(k, -omega),
            Damping::TwoPole => {
                let wp2 = self.readout_frequency().powi(2);
                Complex64::new(wp2, 0.0) / Complex64::new(wp2 - omega * omega, -k * omega)
            }
            Damping::None => Complex64::new(1.0, 0.0),
        }
    }

    /// Coupler scale factor, frozen at `ω = 0` when `quasi_static` is set.
    pub fn beta_at(&self, omega: f64) -> Result<f64> {
        if self.quasi_static {
            beta(self, 0.0)
        } else {
            beta(self, omega)
        }
    }

    /// Human-readable notes on the impedance and frequency hierarchy against
    /// a system with fundamental `omega0` and impedance `z0`.
    pub fn diagnostics(&self, omega0: f64, z0: f64) -> Vec<String> {
        let mut out = Vec::new();
        let zp = self.impedance();
        if zp < 2.0 * z0 {
            out.push(format!(
                "probe impedance {zp:.1} ohm is not large compared with the system's {z0:.1} ohm"
            ));
        }
        let ratio = self.readout_frequency() / omega0;
        out.push(format!("readout-to-fundamental frequency ratio {ratio:.3e}"));
        out
    }
}

/// Coupler scale factor
/// `β = (1/L_S − C_Sω²)/((1/L_S + 2/L_X) − (C_S + 2C_X)ω²)`.
///
/// Even in `ω`. A common zero of numerator and denominator is resolved by its
/// limit; an isolated zero of the denominator is a pole.
pub fn beta(config: &ProbeConfig, omega: f64) -> Result<f64> {
    let w2 = omega * omega;
    let num_scale = 1.0 / config.l_s;
    let den_scale = 1.0 / config.l_s + 2.0 / config.l_x;
    let num = 1.0 / config.l_s - config.c_s * w2;
    let den = den_scale - (config.c_s + 2.0 * config.c_x) * w2;
    if den.abs() <= 1e-9 * den_scale {
        if num.abs() <= 1e-9 * num_scale {
            return Ok(config.c_s / (config.c_s + 2.0 * config.c_x));
        }
        return Err(Error::CouplerPole { omega, denominator: den });
    }
    if den.abs() <= 1e-6 * den_scale && num.abs() > 1e-6 * num_scale {
        return Err(Error::CouplerPole { omega, denominator: den });
    }
    Ok(num / den)
}

/// `I_J = I_c sin(Δφ̃ + φ_ext)`.
pub fn junction_current(delta_phi_scaled: f64, phi_ext: f64, i_c: f64) -> f64 {
    i_c * (delta_phi_scaled + phi_ext).sin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl TimeSeries {
    pub fn new(dt: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite sample at index {i}")));
        }
        Ok(Self { dt, samples })
    }

    /// Sum of single-frequency components sampled at `t = k·dt`.
    pub fn synthesize(components: &[FourierComponent], dt: f64, len: usize) -> Result<Self> {
        let samples = (0..len)
            .map(|k| {
                let t = k as f64 * dt;
                components.iter().map(|c| c.at(t)).sum()
            })
            .collect();
        Self::new(dt, samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.samples.len() as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |k| k as f64 * self.dt)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |a, x| a.max(x.abs()))
    }
}

/// A real signal `Re(amplitude · e^{-i omega t})` with `omega ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierComponent {
    pub omega: f64,
    pub amplitude: Complex64,
}

impl FourierComponent {
    pub fn at(&self, t: f64) -> f64 {
        (self.amplitude * Complex64::from_polar(1.0, -self.omega * t)).re
    }

    /// Mean-square power of the component.
    pub fn power(&self) -> f64 {
        if self.omega == 0.0 {
            self.amplitude.re.powi(2)
        } else {
            0.5 * self.amplitude.norm_sqr()
        }
    }
}

/// Accumulates components, merging frequencies that agree to `rel_tol` of
/// the largest frequency seen.
#[derive(Debug, Default)]
struct ComponentSum {
    items: Vec<FourierComponent>,
}

impl ComponentSum {
    fn add(&mut self, omega: f64, amplitude: Complex64) {
        if amplitude == Complex64::new(0.0, 0.0) {
            return;
        }
        let (omega, amplitude) = if omega < 0.0 { (-omega, amplitude.conj()) } else { (omega, amplitude) };
        let amplitude = if omega == 0.0 { Complex64::new(amplitude.re, 0.0) } else { amplitude };
        let tol = 1e-9 * omega.max(1.0);
        match self.items.iter_mut().find(|c| (c.omega - omega).abs() <= tol) {
            Some(c) => c.amplitude += amplitude,
            None => self.items.push(FourierComponent { omega, amplitude }),
        }
    }

    fn finish(mut self) -> Vec<FourierComponent> {
        self.items.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        self.items
    }
}

/// Leading-order readout components for a state with correlators `corr`,
/// measured between sites whose phase coefficients are `coeffs_i` and
/// `coeffs_j` (`φ_i = Σ_n c_n(i)(a_n† + a_n)`; pass zeros for ground).
///
/// At `φ_ext = 0` the output is `P β(ω_n) d_n ⟨a_n + a_n†⟩` per mode with
/// `d = c(i) − c(j)`. At `φ_ext = π/2` it is
/// `P(1 − ½ Σ_nm β_nβ_m d_nd_m (2N_nm + 2A_nm + δ_nm))`, including the
/// zero-point term in the DC component. Every component is multiplied by the
/// damping transfer `H(ω)`.
pub fn predicted_fourier_components(
    corr: &CorrelationSet,
    coeffs_i: &[f64],
    coeffs_j: &[f64],
    config: &ProbeConfig,
) -> Result<Vec<FourierComponent>> {
    config.validate()?;
    let k = corr.n_modes();
    for c in [coeffs_i, coeffs_j] {
        if c.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: c.len() });
        }
    }
    let p = config.current_scale();
    let d: Vec<f64> = coeffs_i.iter().zip(coeffs_j).map(|(a, b)| a - b).collect();
    let betas = corr.q.iter().map(|q| config.beta_at(q.omega)).collect::<Result<Vec<_>>>()?;
    let scaled: Vec<f64> = d.iter().zip(&betas).map(|(x, b)| x * b).collect();

    let mut sum = ComponentSum::default();
    match config.phi_ext {
        PhiExt::Zero => {
            for (n, q) in corr.q.iter().enumerate() {
                if scaled[n] != 0.0 {
                    sum.add(q.omega, 2.0 * p * scaled[n] * q.value);
                }
            }
        }
        PhiExt::HalfPi => {
            let mut dc = p;
            for n in 0..k {
                dc -= 0.5 * p * scaled[n] * scaled[n];
                for m in 0..k {
                    let w = -p * scaled[n] * scaled[m];
                    if w == 0.0 {
                        continue;
                    }
                    let nn = corr.normal[n][m];
                    let aa = corr.anomalous[n][m];
                    sum.add(nn.omega, w * nn.value);
                    sum.add(aa.omega, w * aa.value);
                }
            }
            sum.add(0.0, Complex64::new(dc, 0.0));
        }
    }
    let mut out = sum.finish();
    for c in &mut out {
        c.amplitude *= config.transfer(c.omega);
        if c.omega == 0.0 {
            c.amplitude.im = 0.0;
        }
    }
    Ok(out)
}

/// Mean phase `⟨φ⟩(t) = Σ_n c_n · 2Q_n(t)` of a state, as a classical input for
/// [`simulate_readout`].
pub fn classical_phase(corr: &CorrelationSet, coeffs: &[f64], dt: f64, len: usize) -> Result<TimeSeries> {
    if coeffs.len() != corr.n_modes() {
        return Err(Error::DimensionMismatch { expected: corr.n_modes(), got: coeffs.len() });
    }
    let comps: Vec<FourierComponent> = corr
        .q
        .iter()
        .zip(coeffs)
        .map(|(q, c)| FourierComponent { omega: q.omega, amplitude: 2.0 * c * q.value })
        .collect();
    TimeSeries::synthesize(&comps, dt, len)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReadoutOptions {
    /// Initial stretch dropped from the output while the filter settles (s).
    /// Defaults to `10/κ_probe`.
    pub warmup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub series: TimeSeries,
    /// `max_t |β Δφ(t)|`.
    pub peak_scaled_phase: f64,
    pub warnings: Vec<String>,
}

/// Stateful damping filter; feeding a record in chunks gives the same output
/// as feeding it whole.
#[derive(Debug, Clone)]
pub struct ReadoutFilter {
    damping: Damping,
    kappa: f64,
    omega_p: f64,
    dt: f64,
    state: Option<(f64, f64, f64)>,
}

impl ReadoutFilter {
    pub fn new(config: &ProbeConfig, dt: f64) -> Self {
        Self {
            damping: config.damping,
            kappa: config.kappa_probe,
            omega_p: config.readout_frequency(),
            dt,
            state: None,
        }
    }

    pub fn process(&mut self, chunk: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(chunk.len());
        for &x in chunk {
            let (y, v) = match self.state {
                // Start at the quasi-steady response to the first sample.
                None => (x, 0.0),
                Some((y, v, x_prev)) => self.step(y, v, x_prev, x),
            };
            self.state = Some((y, v, x));
            out.push(y);
        }
        out
    }

    fn step(&self, y: f64, v: f64, x0: f64, x1: f64) -> (f64, f64) {
        match self.damping {
            Damping::None => (x1, 0.0),
            Damping::LowPass => {
                // Exact for input linear between samples.
                let h = self.kappa * self.dt;
                let a = (-h).exp();
                let g = (1.0 - a) / h;
                (a * y + x0 * (g - a) + x1 * (1.0 - g), 0.0)
            }
            Damping::TwoPole => {
                let substeps = ((self.omega_p.max(self.kappa) * self.dt) / 0.1).ceil().max(1.0) as usize;
                let h = self.dt / substeps as f64;
                let (k, w2) = (self.kappa, self.omega_p * self.omega_p);
                let f = |s: f64, y: f64, v: f64| {
                    let x = x0 + (x1 - x0) * s;
                    (v, w2 * (x - y) - k * v)
                };
                let (mut y, mut v) = (y, v);
                for i in 0..substeps {
                    let s0 = i as f64 / substeps as f64;
                    let sh = (i as f64 + 0.5) / substeps as f64;
                    let s1 = (i + 1) as f64 / substeps as f64;
                    let k1 = f(s0, y, v);
                    let k2 = f(sh, y + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
                    let k3 = f(sh, y + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
                    let k4 = f(s1, y + h * k3.0, v + h * k3.1);
                    y += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
                    v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
                }
                (y, v)
            }
        }
    }
}

/// Applies `β(ω)` per FFT bin of a real record.
fn apply_beta(samples: &[f64], dt: f64, config: &ProbeConfig) -> Result<Vec<f64>> {
    if config.quasi_static {
        let b = beta(config, 0.0)?;
        return Ok(samples.iter().map(|x| b * x).collect());
    }
    let n = samples.len();
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let total: f64 = buf.iter().map(|z| z.norm_sqr()).sum();
    let d_omega = TAU / (n as f64 * dt);
    for (k, z) in buf.iter_mut().enumerate() {
        let kk = k.min(n - k);
        // Bins carrying no signal are not allowed to trip the pole check.
        if z.norm_sqr() <= 1e-24 * total {
            continue;
        }
        *z *= beta(config, kk as f64 * d_omega)?;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Ok(buf.iter().map(|z| z.re / n as f64).collect())
}

/// Highest angular frequency carrying more than `1e-8` of the peak
/// Hann-windowed power.
fn max_content_frequency(samples: &[f64], dt: f64) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let w = window_weights(Window::Hann, n);
    let mut buf: Vec<Complex64> =
        samples.iter().zip(&w).map(|(&x, &wi)| Complex64::new((x - mean) * wi, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = &buf[..=n / 2];
    let peak = half.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    let top = half.iter().rposition(|z| z.norm_sqr() > 1e-8 * peak).unwrap_or(0);
    top as f64 * TAU / (n as f64 * dt)
}

/// Time-domain readout current for classical phase records at sites `i`
/// and `j`.
///
/// Fails with [`Error::Undersampled`] when `dt > 1/(20 f_max)` for the
/// highest input frequency, and with [`Error::Regime`] when `β|Δφ|` reaches
/// 1. Values above 0.5 produce a warning.
pub fn simulate_readout(
    phi_i: &TimeSeries,
    phi_j: &TimeSeries,
    config: &ProbeConfig,
    options: &ReadoutOptions,
) -> Result<Readout> {
    config.validate()?;
    if phi_i.len() != phi_j.len() {
        return Err(Error::DimensionMismatch { expected: phi_i.len(), got: phi_j.len() });
    }
    if (phi_i.dt - phi_j.dt).abs() > 1e-12 * phi_i.dt {
        return Err(Error::InvalidConfig("input records use different sample spacings".into()));
    }
    if phi_i.len() < 2 {
        return Err(Error::InvalidConfig("records need at least two samples".into()));
    }
    let dt = phi_i.dt;
    let delta: Vec<f64> = phi_i.samples.iter().zip(&phi_j.samples).map(|(a, b)| a - b).collect();
    let f_max = max_content_frequency(&delta, dt) / TAU;
    if f_max > 0.0 {
        let limit = 1.0 / (20.0 * f_max);
        if dt > limit {
            return Err(Error::Undersampled { dt, limit });
        }
    }
    let scaled = apply_beta(&delta, dt, config)?;
    let peak = scaled.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let mut warnings = Vec::new();
    if peak >= 1.0 {
        return Err(Error::Regime(format!("beta*|dphi| reaches {peak:.3}; the junction is far from linear")));
    }
    if peak > 0.5 {
        warnings.push(format!("beta*|dphi| reaches {peak:.3}; higher-order distortion is significant"));
    }

    let scale = config.current_scale();
    let phi_ext = config.phi_ext.radians();
    let drive: Vec<f64> = scaled.iter().map(|&x| scale * (x + phi_ext).sin()).collect();
    let out = ReadoutFilter::new(config, dt).process(&drive);

    let warmup = options.warmup.unwrap_or(10.0 / config.kappa_probe);
    let skip = (warmup / dt).ceil() as usize;
    if skip + 2 > out.len() {
        return Err(Error::InvalidConfig(format!(
            "record of {:.3e} s is shorter than the {warmup:.3e} s warm-up",
            phi_i.duration()
        )));
    }
    Ok(Readout { series: TimeSeries::new(dt, out[skip..].to_vec())?, peak_scaled_phase: peak, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    #[default]
    Hann,
}

impl Window {
    /// Bins on either side of a peak that belong to its main lobe.
    fn lobe(self) -> usize {
        match self {
            Window::Rectangular => 0,
            Window::Hann => 1,
        }
    }
}

fn window_weights(window: Window, n: usize) -> Vec<f64> {
    match window {
        Window::Rectangular => vec![1.0; n],
        Window::Hann => (0..n).map(|k| 0.5 - 0.5 * (TAU * k as f64 / n as f64).cos()).collect(),
    }
}

/// One-sided power spectral density over angular frequency.
///
/// `psd[k] · bin_width` summed over all bins equals the window-weighted mean
/// square `Σ(w x)²/Σw²` of the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Bin centres (rad/s).
    pub frequencies: Vec<f64>,
    /// Power density (units² per rad/s).
    pub psd: Vec<f64>,
    pub bin_width: f64,
    pub window: Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub omega: f64,
    /// Power summed over the window's main lobe.
    pub power: f64,
}

impl Spectrum {
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.bin_width
    }

    pub fn bin_power(&self, k: usize) -> f64 {
        self.psd[k] * self.bin_width
    }

    /// Local maxima above DC, strongest first.
    pub fn peaks(&self) -> Vec<Peak> {
        let n = self.psd.len();
        let lobe = self.window.lobe();
        let mut out: Vec<Peak> = (1..n)
            .filter(|&k| {
                let left = self.psd[k - 1];
                let right = if k + 1 < n { self.psd[k + 1] } else { 0.0 };
                self.psd[k] > 0.0 && self.psd[k] >= left && self.psd[k] > right
            })
            .map(|k| {
                let lo = k.saturating_sub(lobe).max(1);
                let hi = (k + lobe).min(n - 1);
                Peak { omega: self.frequencies[k], power: (lo..=hi).map(|j| self.bin_power(j)).sum() }
            })
            .collect();
        out.sort_by(|a, b| b.power.total_cmp(&a.power).then(a.omega.total_cmp(&b.omega)));
        out
    }
}

pub fn power_spectrum(series: &TimeSeries, window: Window) -> Result<Spectrum> {
    let n = series.len();
    if n < 2 {
        return Err(Error::InvalidConfig("spectrum needs at least two samples".into()));
    }
    let w = window_weights(window, n);
    let norm: f64 = w.iter().map(|x| x * x).sum();
    let mut buf: Vec<Complex64> =
        series.samples.iter().zip(&w).map(|(&x, &wi)| Complex64::new(x * wi, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bin_width = TAU / (n as f64 * series.dt);
    let psd = (0..=n / 2)
        .map(|k| {
            let one_sided = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
            one_sided * buf[k].norm_sqr() / (n as f64 * norm) / bin_width
        })
        .collect();
    let frequencies = (0..=n / 2).map(|k| k as f64 * bin_width).collect();
    Ok(Spectrum { frequencies, psd, bin_width, window })
}

/// Sampling step and record length for `duration` seconds at
/// `samples_per_period` points per period of `omega_max`.
pub fn sampling_plan(omega_max: f64, samples_per_period: usize, duration: f64) -> (f64, usize) {
    let dt = 2.0 * PI / (omega_max * samples_per_period as f64);
    (dt, (duration / dt).ceil() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{
        build_mode_basis, phase_observable_coefficients, Dispersion, FnDenominator, LadderConfig,
    };
    use crate::states::{correlations, SqueezePair, TrialState};
    use approx::assert_relative_eq;

    pub(crate) fn reference_probe() -> ProbeConfig {
        let z_p = 126.0;
        let w_p = TAU * 50e6;
        ProbeConfig {
            c_s: 10e-15,
            l_s: 100e-6,
            c_x: 10e-15,
            l_x: 100e-6,
            ej_p: crate::constants::PLANCK * 3e9,
            i_c: 1e-9,
            mutual: 10e-9,
            l_p: z_p / w_p,
            c_p: 1.0 / (z_p * w_p),
            e_m: crate::constants::PLANCK * 123e9,
            phi_ext: PhiExt::HalfPi,
            kappa_probe: TAU * 1.2e3,
            damping: Damping::LowPass,
            quasi_static: false,
        }
    }

    fn unit_probe(kappa: f64, phi_ext: PhiExt) -> ProbeConfig {
        ProbeConfig { kappa_probe: kappa, phi_ext, ..reference_probe() }
    }

    #[test]
    fn beta_dc_and_limits() {
        let c = reference_probe();
        assert_relative_eq!(beta(&c, 0.0).unwrap(), 1.0 / 3.0, max_relative = 1e-15);
        // Numerator and denominator vanish together at 1/√(L_S C_S).
        let w = 1.0 / (c.l_s * c.c_s).sqrt();
        assert_relative_eq!(beta(&c, w).unwrap(), 1.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(beta(&c, 1e15).unwrap(), 1.0 / 3.0, max_relative = 1e-9);
    }

    #[test]
    fn beta_numerator_zero_and_pole() {
        let c = ProbeConfig { c_x: 5e-15, l_x: 30e-6, ..reference_probe() };
        let w0 = 1.0 / (c.l_s * c.c_s).sqrt();
        assert!(beta(&c, w0).unwrap().abs() < 1e-9);
        let den_scale = 1.0 / c.l_s + 2.0 / c.l_x;
        let pole = (den_scale / (c.c_s + 2.0 * c.c_x)).sqrt();
        assert!(matches!(beta(&c, pole), Err(Error::CouplerPole { .. })));
        let far = (c.c_s) / (c.c_s + 2.0 * c.c_x);
        assert_relative_eq!(beta(&c, 1e16).unwrap(), far, max_relative = 1e-6);
    }

    #[test]
    fn junction_current_cases() {
        assert_eq!(junction_current(0.0, FRAC_PI_2, 2e-9), 2e-9);
        assert_eq!(junction_current(0.0, 0.0, 2e-9), 0.0);
        let x: f64 = 0.05;
        let approx = 1.0 - x * x / 2.0;
        assert!((junction_current(x, FRAC_PI_2, 1.0) - approx).abs() < x.powi(4) / 24.0 + 1e-16);
    }

    #[test]
    fn current_scale_matches_readout_table() {
        let p = reference_probe().current_scale();
        assert!((p - 20e-12).abs() / 20e-12 < 0.01, "{p}");
    }

    #[test]
    fn pure_tone_single_bin() {
        let n = 1024;
        let dt = 1e-3;
        let w = TAU * 37.0 / (n as f64 * dt);
        let s = TimeSeries::new(dt, (0..n).map(|k| (w * k as f64 * dt).cos()).collect()).unwrap();
        let sp = power_spectrum(&s, Window::Rectangular).unwrap();
        assert!(sp.bin_power(37) / sp.total_power() > 0.999);
        assert_eq!(sp.peaks()[0].omega, sp.frequencies[37]);
    }

    #[test]
    fn parseval_both_windows() {
        let n = 777;
        let x: Vec<f64> = (0..n).map(|k| ((k * k) % 13) as f64 - 6.0 + 0.1 * k as f64).collect();
        let s = TimeSeries::new(2.5e-9, x.clone()).unwrap();
        for win in [Window::Rectangular, Window::Hann] {
            let sp = power_spectrum(&s, win).unwrap();
            let w = window_weights(win, n);
            let expect = x.iter().zip(&w).map(|(a, b)| (a * b).powi(2)).sum::<f64>()
                / w.iter().map(|b| b * b).sum::<f64>();
            assert_relative_eq!(sp.total_power(), expect, max_relative = 1e-9);
        }
    }

    #[test]
    fn white_noise_is_flat() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 1 << 14;
        let s = TimeSeries::new(1.0, (0..n).map(|_| normal.sample(&mut rng)).collect()).unwrap();
        let sp = power_spectrum(&s, Window::Rectangular).unwrap();
        let bins = &sp.psd[1..n / 2];
        let quarter = bins.len() / 4;
        let means: Vec<f64> =
            bins.chunks(quarter).take(4).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        let avg = means.iter().sum::<f64>() / 4.0;
        for m in means {
            assert!((m - avg).abs() / avg < 0.05, "{m} vs {avg}");
        }
    }

    #[test]
    fn filter_chunking_is_transparent() {
        for damping in [Damping::LowPass, Damping::TwoPole, Damping::None] {
            let c = ProbeConfig { damping, kappa_probe: 3e7, ..reference_probe() };
            let x: Vec<f64> = (0..500).map(|k| (k as f64 * 0.37).sin() + 0.2).collect();
            let whole = ReadoutFilter::new(&c, 1e-10).process(&x);
            let mut f = ReadoutFilter::new(&c, 1e-10);
            let mut parts = f.process(&x[..123]);
            parts.extend(f.process(&x[123..321]));
            parts.extend(f.process(&x[321..]));
            assert_eq!(whole, parts);
        }
    }

    #[test]
    fn lowpass_filter_matches_transfer() {
        let kappa = 2.0;
        let w = 5.0;
        let c = unit_probe(kappa, PhiExt::Zero);
        let dt = TAU / w / 200.0;
        let n = 20_000;
        let x: Vec<f64> = (0..n).map(|k| (w * k as f64 * dt).cos()).collect();
        let y = ReadoutFilter::new(&c, dt).process(&x);
        let h = c.transfer(w);
        for (k, &got) in y.iter().enumerate().skip(n - 200) {
            let t = k as f64 * dt;
            let expect = (h * Complex64::from_polar(1.0, -w * t)).re;
            assert!((got - expect).abs() < 1e-4, "{got} {expect}");
        }
    }

    #[test]
    fn zero_input_gives_full_scale_dc() {
        let c = unit_probe(1e8, PhiExt::HalfPi);
        let z = TimeSeries::new(1e-10, vec![0.0; 2000]).unwrap();
        let r = simulate_readout(&z, &z, &c, &ReadoutOptions::default()).unwrap();
        for &v in &r.series.samples {
            assert_relative_eq!(v, c.current_scale(), max_relative = 1e-12);
        }
    }

    #[test]
    fn linear_readout_is_odd_and_proportional() {
        let c = ProbeConfig { damping: Damping::None, ..unit_probe(1e8, PhiExt::Zero) };
        let (dt, n) = (1e-11, 4000);
        let amp = 0.3;
        let tone: Vec<f64> = (0..n).map(|k| amp * (2e9 * k as f64 * dt).sin()).collect();
        let pos = TimeSeries::new(dt, tone.clone()).unwrap();
        let neg = TimeSeries::new(dt, tone.iter().map(|x| -x).collect()).unwrap();
        let zero = TimeSeries::new(dt, vec![0.0; n]).unwrap();
        let opts = ReadoutOptions { warmup: Some(0.0) };
        let a = simulate_readout(&pos, &zero, &c, &opts).unwrap().series;
        let b = simulate_readout(&neg, &zero, &c, &opts).unwrap().series;
        let p = c.current_scale();
        let bound = (amp / 3.0f64).powi(2) / 6.0;
        for ((x, y), phi) in a.samples.iter().zip(&b.samples).zip(&tone) {
            assert!((x + y).abs() < 1e-15 * p);
            let lin = p * phi / 3.0;
            if lin.abs() > 1e-3 * p {
                assert!(((x - lin) / lin).abs() <= bound * 1.0001);
            }
        }
    }

    #[test]
    fn undersampled_and_regime_rejected() {
        let c = unit_probe(1e8, PhiExt::HalfPi);
        let n = 4000;
        let dt = 1e-10;
        let w = TAU / (8.0 * dt);
        let fast = TimeSeries::new(dt, (0..n).map(|k| 0.1 * (w * k as f64 * dt).cos()).collect()).unwrap();
        let zero = TimeSeries::new(dt, vec![0.0; n]).unwrap();
        assert!(matches!(
            simulate_readout(&fast, &zero, &c, &ReadoutOptions::default()),
            Err(Error::Undersampled { .. })
        ));
        let w = TAU / (100.0 * dt);
        let big = TimeSeries::new(dt, (0..n).map(|k| 4.0 * (w * k as f64 * dt).cos()).collect()).unwrap();
        assert!(matches!(
            simulate_readout(&big, &zero, &c, &ReadoutOptions::default()),
            Err(Error::Regime(_))
        ));
        let mid = TimeSeries::new(dt, big.samples.iter().map(|x| x * 0.5 / 1.0).collect()).unwrap();
        let r = simulate_readout(&mid, &zero, &c, &ReadoutOptions::default()).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }

    fn system(k: usize) -> crate::circuit::ModeBasis {
        build_mode_basis(&LadderConfig {
            nodes: 51,
            inductance: 254e-12,
            capacitance: 100e-15,
            impurity_ej: 1e-24,
            impurity_nodes: (4, 5),
            impurity_flux: FRAC_PI_2,
            kappa: 1.0,
            drive_mode: 1,
            drive_strength: 1.0,
            n_modes: k,
            fn_denominator: FnDenominator::Derived,
            dispersion: Dispersion::Linear,
        })
        .unwrap()
    }

    #[test]
    fn vacuum_gives_shifted_dc_only() {
        let b = system(6);
        let corr = correlations(&TrialState::Fock { occupations: vec![0; 6] }, &b).unwrap();
        let ci = phase_observable_coefficients(&b, 10, None).unwrap();
        let cj = phase_observable_coefficients(&b, 17, None).unwrap();
        let c = reference_probe();
        let comps = predicted_fourier_components(&corr, &ci, &cj, &c).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].omega, 0.0);
        let zp: f64 = ci.iter().zip(&cj).map(|(a, b)| ((a - b) / 3.0).powi(2)).sum();
        assert_relative_eq!(
            comps[0].amplitude.re,
            c.current_scale() * (1.0 - 0.5 * zp),
            max_relative = 1e-12
        );
    }

    #[test]
    fn single_coherent_mode_linear_readout() {
        let b = system(4);
        let mut alphas = vec![Complex64::new(0.0, 0.0); 4];
        alphas[2] = Complex64::new(0.5, 0.2);
        let corr = correlations(&TrialState::Coherent { alphas }, &b).unwrap();
        let ci = phase_observable_coefficients(&b, 10, None).unwrap();
        let c = ProbeConfig { phi_ext: PhiExt::Zero, ..reference_probe() };
        let comps = predicted_fourier_components(&corr, &ci, &[0.0; 4], &c).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].omega, b.omega(3));
    }

    #[test]
    fn squeezed_pair_adds_sum_frequency() {
        let b = system(10);
        let mut alphas = vec![Complex64::new(0.0, 0.0); 10];
        alphas[0] = Complex64::new(0.4, 0.0);
        let coherent = correlations(&TrialState::Coherent { alphas: alphas.clone() }, &b).unwrap();
        let squeezed = correlations(
            &TrialState::Squeezed {
                alphas,
                pairs: vec![SqueezePair { n: 3, m: 7, xi: Complex64::new(0.0, 0.2) }],
            },
            &b,
        )
        .unwrap();
        let ci = phase_observable_coefficients(&b, 10, None).unwrap();
        let cj = phase_observable_coefficients(&b, 23, None).unwrap();
        let c = reference_probe();
        let has_10 = |corr: &CorrelationSet| {
            predicted_fourier_components(corr, &ci, &cj, &c)
                .unwrap()
                .iter()
                .any(|x| (x.omega - 10.0 * b.omega0()).abs() < 1e-6 * b.omega0() && x.amplitude.norm() > 0.0)
        };
        assert!(!has_10(&coherent));
        assert!(has_10(&squeezed));
    }
}
