//! Occupation-number basis over the circle modes `|n| ≤ K`.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{FockError, Result};

pub const DEFAULT_HARD_CAP: usize = 20_000;

fn default_cap() -> usize {
    DEFAULT_HARD_CAP
}

/// Truncation of the bosonic Fock space: modes `n = -K..=K`, at most
/// `n_max` quanta in total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FockBasisSpec {
    pub beta: f64,
    pub mass: f64,
    pub modes: usize,
    pub n_max: usize,
    #[serde(default = "default_cap")]
    pub hard_cap: usize,
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

impl FockBasisSpec {
    pub fn new(beta: f64, mass: f64, modes: usize, n_max: usize) -> Result<Self> {
        let s = FockBasisSpec {
            beta,
            mass,
            modes,
            n_max,
            hard_cap: DEFAULT_HARD_CAP,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.hard_cap = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(FockError::InvalidSpec(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(FockError::InvalidSpec(format!("mass must be positive, got {}", self.mass)));
        }
        if self.n_max > u8::MAX as usize {
            return Err(FockError::InvalidSpec(format!("n_max {} above 255", self.n_max)));
        }
        Ok(())
    }

    pub fn mode_count(&self) -> usize {
        2 * self.modes + 1
    }

    /// Number of occupation vectors with total at most `n_max`:
    /// `binom(n_max + M, M)` for `M` modes.
    pub fn dimension(&self) -> u128 {
        let m = self.mode_count() as u128;
        binomial(self.n_max as u128 + m, m)
    }

    pub fn matsubara(&self, n: i64) -> f64 {
        2.0 * PI * n as f64 / self.beta
    }

    /// `b_n = (ν_n² + m²)^{1/2}`.
    pub fn energy(&self, n: i64) -> f64 {
        self.matsubara(n).hypot(self.mass)
    }
}

/// Enumerated basis; state 0 is the Fock vacuum and states are ordered by
/// total quanta.
#[derive(Debug, Clone)]
pub struct FockBasis {
    spec: FockBasisSpec,
    nu: Vec<f64>,
    b: Vec<f64>,
    occ: Vec<u8>,
    index: HashMap<u128, usize>,
    radix: u128,
}

impl FockBasis {
    pub fn new(spec: FockBasisSpec) -> Result<Self> {
        spec.validate()?;
        let dim = spec.dimension();
        if dim > spec.hard_cap as u128 {
            return Err(FockError::DimensionOverflow { dim, cap: spec.hard_cap });
        }
        let m = spec.mode_count();
        let radix = spec.n_max as u128 + 1;
        if (m as f64) * (radix as f64).log2() > 127.0 {
            return Err(FockError::InvalidSpec("occupation key does not fit in 128 bits".into()));
        }
        let labels: Vec<i64> = (-(spec.modes as i64)..=spec.modes as i64).collect();
        let mut basis = FockBasis {
            spec,
            nu: labels.iter().map(|&n| spec.matsubara(n)).collect(),
            b: labels.iter().map(|&n| spec.energy(n)).collect(),
            occ: Vec::with_capacity(dim as usize * m),
            index: HashMap::with_capacity(dim as usize),
            radix,
        };
        let mut cur = vec![0u8; m];
        for total in 0..=spec.n_max {
            basis.enumerate(&mut cur, 0, total);
        }
        Ok(basis)
    }

    fn enumerate(&mut self, cur: &mut [u8], pos: usize, left: usize) {
        if pos + 1 == cur.len() {
            cur[pos] = left as u8;
            let key = self.key(cur);
            self.index.insert(key, self.index.len());
            self.occ.extend_from_slice(cur);
            cur[pos] = 0;
            return;
        }
        for k in (0..=left).rev() {
            cur[pos] = k as u8;
            self.enumerate(cur, pos + 1, left - k);
        }
        cur[pos] = 0;
    }

    pub fn key(&self, occ: &[u8]) -> u128 {
        occ.iter().fold(0u128, |acc, &o| acc * self.radix + o as u128)
    }

    pub fn spec(&self) -> &FockBasisSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn mode_count(&self) -> usize {
        self.nu.len()
    }

    /// Signed label `n` of mode slot `i`.
    pub fn label(&self, i: usize) -> i64 {
        i as i64 - self.spec.modes as i64
    }

    pub fn slot(&self, n: i64) -> Option<usize> {
        let i = n + self.spec.modes as i64;
        (0..self.nu.len() as i64).contains(&i).then_some(i as usize)
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn occupation(&self, state: usize) -> &[u8] {
        let m = self.mode_count();
        &self.occ[state * m..(state + 1) * m]
    }

    pub fn total(&self, state: usize) -> usize {
        self.occupation(state).iter().map(|&o| o as usize).sum()
    }

    /// Total circle momentum label `Σ n·occ_n`.
    pub fn momentum_label(&self, state: usize) -> i64 {
        self.occupation(state).iter().enumerate().map(|(i, &o)| self.label(i) * o as i64).sum()
    }

    pub fn find(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(&self.key(occ)).copied()
    }

    pub fn vacuum(&self) -> usize {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_formula_matches_enumeration() {
        for (k, n) in [(0, 5), (1, 4), (2, 3), (3, 2)] {
            let spec = FockBasisSpec::new(1.0, 1.0, k, n).unwrap();
            let b = FockBasis::new(spec).unwrap();
            assert_eq!(b.dim() as u128, spec.dimension());
            for s in 0..b.dim() {
                assert_eq!(b.find(b.occupation(s)), Some(s));
            }
        }
    }

    #[test]
    fn ordering_and_vacuum() {
        let b = FockBasis::new(FockBasisSpec::new(1.0, 1.0, 1, 3).unwrap()).unwrap();
        assert_eq!(b.occupation(0), &[0, 0, 0]);
        let totals: Vec<usize> = (0..b.dim()).map(|s| b.total(s)).collect();
        assert!(totals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn mode_energies() {
        let s = FockBasisSpec::new(1.0, 1.0, 1, 1).unwrap();
        assert_eq!(s.energy(0), 1.0);
        assert!((s.energy(1) - (4.0 * PI * PI + 1.0).sqrt()).abs() < 1e-14);
        assert!((s.energy(1) - 6.3623).abs() < 1e-4);
    }

    #[test]
    fn cap_is_enforced() {
        let spec = FockBasisSpec::new(1.0, 1.0, 4, 10).unwrap();
        assert!(matches!(FockBasis::new(spec), Err(FockError::DimensionOverflow { .. })));
        assert!(FockBasis::new(spec.with_cap(100_000)).is_ok());
    }
}
