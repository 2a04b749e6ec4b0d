//! Brute-force correlators on a truncated Fock space.
//!
//! The trial states are products over independent blocks (a squeezed pair, a
//! single-mode squeezer, or one unpaired mode). Each block is built
//! numerically by applying the squeezer and then the displacements to the
//! vacuum with truncated ladder operators; correlators across blocks are
//! products of single-mode means.

use num_complex::Complex64;

use super::{CorrelationSet, TrialState};
use crate::circuit::ModeBasis;
use crate::error::{Error, Result};

/// Leak tolerated in the top Fock level of any block.
const EDGE_MASS: f64 = 1e-10;

struct Block {
    modes: Vec<usize>,
    dim: usize,
    psi: Vec<Complex64>,
}

impl Block {
    fn vacuum(modes: Vec<usize>, dim: usize) -> Self {
        let mut psi = vec![Complex64::new(0.0, 0.0); dim.pow(modes.len() as u32)];
        psi[0] = Complex64::new(1.0, 0.0);
        Self { modes, dim, psi }
    }

    fn stride(&self, slot: usize) -> usize {
        self.dim.pow(slot as u32)
    }

    fn level(&self, idx: usize, slot: usize) -> usize {
        (idx / self.stride(slot)) % self.dim
    }

    fn lower(&self, v: &[Complex64], slot: usize) -> Vec<Complex64> {
        let s = self.stride(slot);
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        for (idx, &x) in v.iter().enumerate() {
            let k = self.level(idx, slot);
            if k > 0 {
                out[idx - s] += x * (k as f64).sqrt();
            }
        }
        out
    }

    fn raise(&self, v: &[Complex64], slot: usize) -> Vec<Complex64> {
        let s = self.stride(slot);
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        for (idx, &x) in v.iter().enumerate() {
            let k = self.level(idx, slot);
            if k + 1 < self.dim {
                out[idx + s] += x * ((k + 1) as f64).sqrt();
            }
        }
        out
    }

    /// `ψ ← exp(G) ψ` with the generator applied matrix-free, using scaled
    /// Taylor steps of norm at most ½.
    fn apply_exp<F>(&mut self, generator: F, norm_bound: f64)
    where
        F: Fn(&Block, &[Complex64]) -> Vec<Complex64>,
    {
        let steps = (2.0 * norm_bound).ceil().max(1.0) as usize;
        let scale = 1.0 / steps as f64;
        for _ in 0..steps {
            let mut term = self.psi.clone();
            let mut acc = self.psi.clone();
            for k in 1..60 {
                term = generator(self, &term);
                let f = scale / k as f64;
                let mut size = 0.0_f64;
                for (t, a) in term.iter_mut().zip(acc.iter_mut()) {
                    *t *= f;
                    *a += *t;
                    size = size.max(t.norm());
                }
                if size < 1e-18 {
                    break;
                }
            }
            self.psi = acc;
        }
    }

    fn squeeze(&mut self, xi: Complex64) {
        let d = self.dim as f64;
        if self.modes.len() == 1 {
            // ½(ξ* a² − ξ a†²)
            self.apply_exp(
                |b, v| {
                    let aa = b.lower(&b.lower(v, 0), 0);
                    let cc = b.raise(&b.raise(v, 0), 0);
                    aa.iter().zip(&cc).map(|(x, y)| 0.5 * (xi.conj() * x - xi * y)).collect()
                },
                xi.norm() * d,
            );
        } else {
            // ξ* a b − ξ a† b†
            self.apply_exp(
                |b, v| {
                    let ab = b.lower(&b.lower(v, 1), 0);
                    let cd = b.raise(&b.raise(v, 1), 0);
                    ab.iter().zip(&cd).map(|(x, y)| xi.conj() * x - xi * y).collect()
                },
                2.0 * xi.norm() * d,
            );
        }
    }

    fn displace(&mut self, slot: usize, alpha: Complex64) {
        if alpha.norm() == 0.0 {
            return;
        }
        let bound = 2.0 * alpha.norm() * (self.dim as f64).sqrt();
        self.apply_exp(
            |b, v| {
                let up = b.raise(v, slot);
                let down = b.lower(v, slot);
                up.iter().zip(&down).map(|(x, y)| alpha * x - alpha.conj() * y).collect()
            },
            bound,
        );
    }

    fn edge_mass(&self) -> f64 {
        let top = self.dim - 1;
        (0..self.modes.len())
            .map(|slot| {
                self.psi
                    .iter()
                    .enumerate()
                    .filter(|(idx, _)| self.level(*idx, slot) == top)
                    .map(|(_, x)| x.norm_sqr())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    fn expect(&self, v: &[Complex64]) -> Complex64 {
        self.psi.iter().zip(v).map(|(p, x)| p.conj() * x).sum()
    }
}

/// Correlators of `state` computed by explicit construction in a Fock space
/// truncated at `cutoff` levels per mode.
///
/// Returns [`Error::TruncationOverflow`] when more than `1e-10` of the norm
/// sits in the top level of any mode.
pub fn fock_space_oracle(state: &TrialState, basis: &ModeBasis, cutoff: usize) -> Result<CorrelationSet> {
    let k = basis.n_modes();
    state.validate(k)?;
    if cutoff < 2 {
        return Err(Error::InvalidConfig(format!("cutoff must be at least 2, got {cutoff}")));
    }
    let mut blocks: Vec<Block> = Vec::new();
    let mut owner = vec![usize::MAX; k];
    let mut build = |modes: Vec<usize>, init: &dyn Fn(&mut Block)| -> Result<()> {
        let mut b = Block::vacuum(modes, cutoff);
        init(&mut b);
        let mass = b.edge_mass();
        if mass > EDGE_MASS {
            return Err(Error::TruncationOverflow { truncation: cutoff, mass });
        }
        for &m in &b.modes {
            owner[m - 1] = blocks.len();
        }
        blocks.push(b);
        Ok(())
    };
    match state {
        TrialState::Fock { occupations } => {
            for (i, &occ) in occupations.iter().enumerate() {
                if occ as usize + 1 >= cutoff {
                    return Err(Error::TruncationOverflow { truncation: cutoff, mass: 1.0 });
                }
                build(vec![i + 1], &|b: &mut Block| {
                    b.psi[0] = Complex64::new(0.0, 0.0);
                    b.psi[occ as usize] = Complex64::new(1.0, 0.0);
                })?;
            }
        }
        TrialState::Coherent { alphas } => {
            for (i, &a) in alphas.iter().enumerate() {
                build(vec![i + 1], &|b: &mut Block| b.displace(0, a))?;
            }
        }
        TrialState::Squeezed { alphas, pairs } => {
            let mut paired = vec![false; k];
            for p in pairs {
                let modes = if p.n == p.m { vec![p.n] } else { vec![p.n, p.m] };
                for &m in &modes {
                    paired[m - 1] = true;
                }
                build(modes.clone(), &|b: &mut Block| {
                    b.squeeze(p.xi);
                    for (slot, &m) in modes.iter().enumerate() {
                        b.displace(slot, alphas[m - 1]);
                    }
                })?;
            }
            for (i, &a) in alphas.iter().enumerate() {
                if !paired[i] {
                    build(vec![i + 1], &|b: &mut Block| b.displace(0, a))?;
                }
            }
        }
    }

    let slot_of = |n: usize| {
        let b = &blocks[owner[n - 1]];
        (b, b.modes.iter().position(|&m| m == n).unwrap())
    };
    let mean: Vec<Complex64> = (1..=k)
        .map(|n| {
            let (b, s) = slot_of(n);
            b.expect(&b.lower(&b.psi, s))
        })
        .collect();

    let mut set = CorrelationSet::zeros(basis);
    for n in 1..=k {
        set.q[n - 1].value = mean[n - 1];
        for m in 1..=k {
            let (normal, anomalous) = if owner[n - 1] == owner[m - 1] {
                let (b, sn) = slot_of(n);
                let (_, sm) = slot_of(m);
                let am = b.lower(&b.psi, sm);
                let an_am = b.lower(&am, sn);
                // ⟨a_n† a_m⟩ = ⟨a_n ψ | a_m ψ⟩
                let an = b.lower(&b.psi, sn);
                let nm: Complex64 = an.iter().zip(&am).map(|(x, y)| x.conj() * y).sum();
                (nm, b.expect(&an_am))
            } else {
                (mean[n - 1].conj() * mean[m - 1], mean[n - 1] * mean[m - 1])
            };
            set.normal[n - 1][m - 1].value = normal;
            set.anomalous[n - 1][m - 1].value = anomalous;
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::tests::basis;
    use crate::states::{correlations, SqueezePair};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn vacuum_is_exact() {
        let b = basis(3);
        let st = TrialState::Coherent { alphas: vec![c(0.0, 0.0); 3] };
        let o = fock_space_oracle(&st, &b, 4).unwrap();
        assert_eq!(o.max_abs_diff(&CorrelationSet::zeros(&b)), 0.0);
    }

    #[test]
    fn coherent_mean_and_number() {
        let b = basis(1);
        let alpha = c(1.1, -0.6);
        let o = fock_space_oracle(&TrialState::Coherent { alphas: vec![alpha] }, &b, 40).unwrap();
        assert!((o.q(1).value - alpha).norm() < 1e-12);
        assert!((o.normal(1, 1).value.re - alpha.norm_sqr()).abs() < 1e-12);
        assert!((o.anomalous(1, 1).value - alpha * alpha).norm() < 1e-12);
    }

    #[test]
    fn two_mode_squeezed_vacuum_matches_closed_form() {
        let b = basis(2);
        let r: f64 = 0.4;
        let st = TrialState::Squeezed {
            alphas: vec![c(0.0, 0.0); 2],
            pairs: vec![SqueezePair { n: 1, m: 2, xi: c(r, 0.0) }],
        };
        let o = fock_space_oracle(&st, &b, 40).unwrap();
        assert!((o.normal(1, 1).value.re - r.sinh().powi(2)).abs() < 1e-12);
        assert!((o.anomalous(1, 2).value.re + r.sinh() * r.cosh()).abs() < 1e-12);
    }

    #[test]
    fn overflow_detected() {
        let b = basis(1);
        let st = TrialState::Coherent { alphas: vec![c(3.0, 0.0)] };
        assert!(matches!(fock_space_oracle(&st, &b, 6), Err(Error::TruncationOverflow { .. })));
        let st = TrialState::Fock { occupations: vec![5] };
        assert!(fock_space_oracle(&st, &b, 6).is_err());
    }

    #[test]
    fn displaced_squeezed_agrees_with_closed_form() {
        let b = basis(6);
        let alphas = vec![c(0.2, 0.1), c(-0.3, 0.2), c(0.1, 0.0), c(0.0, -0.4), c(0.3, 0.3), c(0.8, 0.1)];
        let st = TrialState::Squeezed {
            alphas,
            pairs: vec![
                SqueezePair { n: 1, m: 5, xi: c(0.1, 0.25) },
                SqueezePair { n: 2, m: 4, xi: c(-0.2, 0.05) },
                SqueezePair { n: 3, m: 3, xi: c(0.0, 0.3) },
            ],
        };
        let exact = correlations(&st, &b).unwrap();
        let oracle = fock_space_oracle(&st, &b, 40).unwrap();
        assert!(exact.max_abs_diff(&oracle) < 1e-10, "{}", exact.max_abs_diff(&oracle));
    }
}
