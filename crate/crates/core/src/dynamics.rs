//! Golden-rule rate equations for the mode populations.
//!
//! Each stored resonant triple `(n, m, l = n + m)` moves photons between the
//! parent mode `l` and the daughters `n`, `m` at the rate
//! `Γ A_nml² [(N_n+1)(N_m+1)N_l − N_n N_m (N_l+1)]`. Every event removes one
//! `l` photon and creates one `n` and one `m` photon, so `Σ_n n N_n` is
//! conserved by the down-conversion part alone. Drive pumps the driven mode at
//! the constant rate `Ω₀` and every mode decays at `κ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::circuit::{CouplingTensor, LadderConfig, ModeBasis};
use crate::constants::HBAR;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    pub tensor: CouplingTensor,
    /// Down-conversion rate scale `Γ` (1/s).
    pub gamma: f64,
    /// Loss rate `κ` (1/s).
    pub kappa: f64,
    /// Driven mode, 1-based.
    pub drive_mode: usize,
    /// Pumping rate `Ω₀` (1/s).
    pub drive_strength: f64,
}

impl RateModel {
    /// Builds the model from a ladder configuration. `gamma` overrides the
    /// default `Γ = g²/(ħ² ω₀)`.
    pub fn from_config(
        config: &LadderConfig,
        basis: &ModeBasis,
        tensor: CouplingTensor,
        gamma: Option<f64>,
    ) -> Result<Self> {
        let gamma = gamma.unwrap_or_else(|| default_gamma(tensor.g(), basis.omega0()));
        let model = Self {
            tensor,
            gamma,
            kappa: config.kappa,
            drive_mode: config.drive_mode,
            drive_strength: config.drive_strength,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.kappa >= 0.0 && self.drive_strength >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "rates must be non-negative (Γ = {}, κ = {}, Ω₀ = {})",
                self.gamma, self.kappa, self.drive_strength
            )));
        }
        if self.drive_mode == 0 || self.drive_mode > self.n_modes() {
            return Err(Error::OutOfRange {
                what: "drive mode",
                index: self.drive_mode,
                max: self.n_modes(),
            });
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.tensor.n_modes()
    }

    /// Full right-hand side: down-conversion, drive and loss.
    pub fn rhs(&self, populations: &[f64]) -> Result<Vec<f64>> {
        let mut out = downconversion_rhs(populations, self)?;
        for (d, &n) in out.iter_mut().zip(populations) {
            *d -= self.kappa * n;
        }
        out[self.drive_mode - 1] += self.drive_strength;
        Ok(out)
    }

    /// Analytic Jacobian of [`RateModel::rhs`].
    pub fn jacobian(&self, populations: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(populations)?;
        let k = self.n_modes();
        let mut jac = DMatrix::zeros(k, k);
        for (n, m, l, a) in self.tensor.triples() {
            let w = self.gamma * a * a;
            let (nn, nm, nl) = (populations[n - 1], populations[m - 1], populations[l - 1]);
            // ∂B/∂N for each slot; accumulated so that n == m doubles up
            let mut grad = [(n, nl - nm), (m, nl - nn), (l, nn + nm + 1.0)];
            if n == m {
                grad[0].1 = 2.0 * (nl - nn);
                grad[1].1 = 0.0;
                grad[2].1 = 2.0 * nn + 1.0;
            }
            let (gain_n, gain_m, loss_l) = if n == m { (1.0, 0.0, 0.5) } else { (1.0, 1.0, 1.0) };
            for &(col, db) in &grad {
                if db == 0.0 {
                    continue;
                }
                jac[(n - 1, col - 1)] += w * gain_n * db;
                jac[(m - 1, col - 1)] += w * gain_m * db;
                jac[(l - 1, col - 1)] -= w * loss_l * db;
            }
        }
        for i in 0..k {
            jac[(i, i)] -= self.kappa;
        }
        Ok(jac)
    }

    fn check_len(&self, populations: &[f64]) -> Result<()> {
        if populations.len() != self.n_modes() {
            return Err(Error::DimensionMismatch { expected: self.n_modes(), got: populations.len() });
        }
        Ok(())
    }
}

/// `Γ = g²/(ħ² ω₀)`.
pub fn default_gamma(g: f64, omega0: f64) -> f64 {
    g * g / (HBAR * HBAR * omega0)
}

/// Down-conversion contribution to `dN_n/dt` for every mode.
pub fn downconversion_rhs(populations: &[f64], model: &RateModel) -> Result<Vec<f64>> {
    model.check_len(populations)?;
    let mut out = vec![0.0; populations.len()];
    for (n, m, l, a) in model.tensor.triples() {
        let (nn, nm, nl) = (populations[n - 1], populations[m - 1], populations[l - 1]);
        let bracket = (nn + 1.0) * (nm + 1.0) * nl - nn * nm * (nl + 1.0);
        let rate = model.gamma * a * a * bracket;
        if n == m {
            out[n - 1] += rate;
            out[l - 1] -= 0.5 * rate;
        } else {
            out[n - 1] += rate;
            out[m - 1] += rate;
            out[l - 1] -= rate;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative error per step.
    pub rtol: f64,
    /// Absolute error per step (photons).
    pub atol: f64,
    /// Upper bound on the step size (s); `None` for unbounded.
    pub max_step: Option<f64>,
    /// Accepted-step budget.
    pub max_steps: usize,
    /// Steady-state residual, relative to `κ · max_n N_n`.
    pub steady_tol: f64,
    /// Initial settling time in units of `1/κ`.
    pub settle_time: f64,
    /// Give up after this many units of `1/κ`.
    pub max_time: f64,
    pub newton_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: None,
            max_steps: 2_000_000,
            steady_tol: 1e-8,
            settle_time: 20.0,
            max_time: 400.0,
            newton_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub populations: Vec<f64>,
    /// `‖dN/dt‖_∞` at `populations` (1/s).
    pub residual: f64,
    /// Integration time spent before the final refinement (s).
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTrajectory {
    pub times: Vec<f64>,
    /// `populations[k][n-1] = N_n(times[k])`.
    pub populations: Vec<Vec<f64>>,
    /// Set when the final state already satisfies the steady-state residual.
    pub steady_state: Option<SteadyState>,
    pub rejected_steps: usize,
}

impl PopulationTrajectory {
    pub fn final_populations(&self) -> &[f64] {
        self.populations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Time series of one mode, 1-based.
    pub fn mode(&self, n: usize) -> Vec<f64> {
        self.populations.iter().map(|p| p[n - 1]).collect()
    }
}

/// Right-hand side with the positivity guard: a mode at or below zero may not
/// be pushed further down.
fn guarded_rhs(model: &RateModel, y: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = y.iter().map(|&v| v.max(0.0)).collect();
    let mut f = model.rhs(&clipped).expect("length checked by caller");
    for (fi, &yi) in f.iter_mut().zip(y) {
        if yi <= 0.0 && *fi < 0.0 {
            *fi = 0.0;
        }
    }
    f
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

pub fn evolve(
    initial: &[f64],
    model: &RateModel,
    t_end: f64,
    tol: &Tolerances,
) -> Result<PopulationTrajectory> {
    model.validate()?;
    model.check_len(initial)?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidConfig(format!("t_end must be positive, got {t_end}")));
    }
    if let Some((mode, &value)) = initial.iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::NegativePopulation { mode: mode + 1, value });
    }
    let dim = initial.len();
    let mut t = 0.0;
    let mut y = initial.to_vec();
    let mut times = vec![0.0];
    let mut pops = vec![y.clone()];
    let mut rejected = 0;

    let max_step = tol.max_step.unwrap_or(t_end).min(t_end);
    let min_step = t_end * 1e-15;
    let mut k = [(); 7].map(|_| vec![0.0; dim]);
    k[0] = guarded_rhs(model, &y);
    let scale0 = y
        .iter()
        .zip(&k[0])
        .map(|(yi, fi)| fi.abs() / (tol.atol + tol.rtol * yi.abs()))
        .fold(0.0_f64, f64::max);
    let mut h = if scale0 > 0.0 { (0.01 / scale0).min(max_step) } else { max_step * 1e-3 };
    let mut stage = vec![0.0; dim];
    let mut accepted = 0;

    while t < t_end {
        if accepted >= tol.max_steps {
            return Err(Error::NotConverged { time: t, residual: f64::NAN });
        }
        let remaining = t_end - t;
        h = h.min(remaining).min(max_step);
        let last = h >= remaining;
        if h < min_step {
            return Err(Error::StepUnderflow { time: t, step: h });
        }
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += h * A[s][j] * kj[i];
                }
                stage[i] = acc;
            }
            k[s] = guarded_rhs(model, &stage);
            debug_assert!(C[s] >= 0.0);
        }
        // stage now holds the 5th-order solution (FSAL row)
        let mut err = 0.0_f64;
        for i in 0..dim {
            let mut e = 0.0;
            for s in 0..7 {
                e += h * (B5[s] - B4[s]) * k[s][i];
            }
            let sc = tol.atol + tol.rtol * y[i].abs().max(stage[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            h *= 0.1;
            rejected += 1;
            continue;
        }
        if err <= 1.0 {
            // Land on t_end exactly; `t + h` can fall short by one ulp.
            t = if last { t_end } else { t + h };
            y.copy_from_slice(&stage);
            k[0] = k[6].clone();
            times.push(t);
            pops.push(y.clone());
            accepted += 1;
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        } else {
            rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }

    let residual = inf_norm(&model.rhs(&y)?);
    let steady_state = (residual < steady_threshold(model, &y, tol)).then(|| SteadyState {
        populations: y.clone(),
        residual,
        time: t,
    });
    Ok(PopulationTrajectory { times, populations: pops, steady_state, rejected_steps: rejected })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}

fn steady_threshold(model: &RateModel, y: &[f64], tol: &Tolerances) -> f64 {
    let max_n = y.iter().cloned().fold(0.0_f64, f64::max);
    tol.steady_tol * (model.kappa * max_n).max(f64::MIN_POSITIVE)
}

/// Damped Newton refinement of `rhs(N) = 0` starting from `start`.
/// Returns the refined point and its residual.
fn newton_refine(model: &RateModel, start: &[f64], tol: &Tolerances) -> Result<(Vec<f64>, f64)> {
    let mut y = start.to_vec();
    let mut f = model.rhs(&y)?;
    let mut res = inf_norm(&f);
    for _ in 0..tol.newton_iterations {
        if res < steady_threshold(model, &y, tol) {
            break;
        }
        let jac = model.jacobian(&y)?;
        let rhs = DVector::from_iterator(f.len(), f.iter().map(|v| -v));
        let Some(step) = jac.lu().solve(&rhs) else {
            break;
        };
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial: Vec<f64> =
                y.iter().zip(step.iter()).map(|(yi, si)| (yi + lambda * si).max(0.0)).collect();
            let ft = model.rhs(&trial)?;
            let rt = inf_norm(&ft);
            if rt < res {
                y = trial;
                f = ft;
                res = rt;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((y, res))
}

/// Non-equilibrium steady state reached from vacuum.
///
/// Integrates for `settle_time/κ`, then Newton-refines. If the refinement does
/// not meet the residual, integration continues in doubling windows until
/// `max_time/κ`.
pub fn steady_state(model: &RateModel, tol: &Tolerances) -> Result<SteadyState> {
    model.validate()?;
    if !(model.kappa > 0.0 && model.drive_strength > 0.0) {
        return Err(Error::InvalidConfig("steady state needs κ > 0 and Ω₀ > 0".into()));
    }
    let mut y = vec![0.0; model.n_modes()];
    let mut elapsed = 0.0;
    let mut window = tol.settle_time / model.kappa;
    let limit = tol.max_time / model.kappa;
    let mut last_residual = f64::INFINITY;
    while elapsed < limit * (1.0 + 1e-12) {
        let window_tol = Tolerances { max_step: tol.max_step, ..*tol };
        let traj = evolve(&y, model, window, &window_tol)?;
        y = traj.final_populations().to_vec();
        elapsed += window;
        let (refined, res) = newton_refine(model, &y, tol)?;
        last_residual = res;
        if res < steady_threshold(model, &refined, tol) {
            return Ok(SteadyState { populations: refined, residual: res, time: elapsed });
        }
        window = window.min(limit - elapsed).max(0.0);
        if window <= 0.0 {
            break;
        }
    }
    Err(Error::NotConverged { time: elapsed, residual: last_residual })
}
