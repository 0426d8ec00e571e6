//! Finite-support probability measures on the real line.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::stats::pairwise_sum;

/// Atoms closer than this are the same point.
pub const ATOM_MERGE_TOL: f64 = 1e-12;

/// Allowed deviation of the total mass from one.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub value: f64,
    pub probability: f64,
}

/// A probability measure with finitely many atoms, kept canonical: atoms are
/// sorted ascending, pairwise more than [`ATOM_MERGE_TOL`] apart, and carry
/// strictly positive mass.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<Atom>,
}

impl DiscreteDistribution {
    /// Builds a distribution from `(value, probability)` pairs, validating that
    /// the masses are positive and sum to one.
    pub fn new(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().collect();
        if pairs.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        for &(v, p) in &pairs {
            if !v.is_finite() {
                return Err(Error::InvalidDistribution(format!("non-finite atom {v}")));
            }
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidDistribution(format!(
                    "probability {p} of atom {v} outside (0, 1]"
                )));
            }
        }
        let dist = Self::from_weighted(pairs, ATOM_MERGE_TOL);
        let mass = dist.total_mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {mass}"
            )));
        }
        Ok(dist)
    }

    pub fn point_mass(value: f64) -> Self {
        Self { atoms: alloc::vec![Atom { value, probability: 1.0 }] }
    }

    /// Sorts and merges weighted atoms without checking the total mass.
    /// Atoms within `merge_tol` of the first atom of a run are absorbed into it;
    /// zero-mass atoms are dropped.
    pub fn from_weighted(mut pairs: Vec<(f64, f64)>, merge_tol: f64) -> Self {
        pairs.retain(|&(_, p)| p > 0.0);
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<Atom> = Vec::with_capacity(pairs.len());
        for (value, probability) in pairs {
            match atoms.last_mut() {
                Some(last) if value - last.value <= merge_tol => last.probability += probability,
                _ => atoms.push(Atom { value, probability }),
            }
        }
        Self { atoms }
    }

    /// Wraps atoms that are already canonical (sorted, distinct, positive).
    pub(crate) fn from_sorted_atoms(atoms: Vec<Atom>) -> Self {
        debug_assert!(atoms.windows(2).all(|w| w[0].value < w[1].value));
        Self { atoms }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.value)
    }

    pub fn total_mass(&self) -> f64 {
        let p: Vec<f64> = self.atoms.iter().map(|a| a.probability).collect();
        pairwise_sum(&p)
    }

    pub fn expectation(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let terms: Vec<f64> = self.atoms.iter().map(|a| a.probability * f(a.value)).collect();
        pairwise_sum(&terms)
    }

    pub fn mean(&self) -> f64 {
        self.expectation(|x| x)
    }

    /// Law of `map(X)` for `X` distributed according to `self`.
    pub fn pushforward(&self, mut map: impl FnMut(f64) -> f64) -> Self {
        let pairs = self.atoms.iter().map(|a| (map(a.value), a.probability)).collect();
        Self::from_weighted(pairs, ATOM_MERGE_TOL)
    }

    /// Index of the atom selected by a uniform draw `u ∈ [0, 1)` through the
    /// inverse cumulative distribution function.
    pub fn sample_index(&self, u: f64) -> usize {
        let mut cumulative = 0.0;
        for (i, atom) in self.atoms.iter().enumerate() {
            cumulative += atom.probability;
            if u < cumulative {
                return i;
            }
        }
        self.atoms.len() - 1
    }

    pub fn sample(&self, u: f64) -> f64 {
        self.atoms[self.sample_index(u)].value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_mass() {
        assert!(DiscreteDistribution::new([(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(DiscreteDistribution::new([(0.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(DiscreteDistribution::new([]).is_err());
        assert!(DiscreteDistribution::new([(f64::NAN, 1.0)]).is_err());
    }

    #[test]
    fn sorts_and_merges_close_atoms() {
        let d = DiscreteDistribution::new([(2.0, 0.25), (1.0, 0.25), (1.0 + 1e-13, 0.5)]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.atoms()[0], Atom { value: 1.0, probability: 0.75 });
        assert_eq!(d.atoms()[1].value, 2.0);
    }

    #[test]
    fn pushforward_examples() {
        let sq = |x: f64| x * x;
        assert_eq!(DiscreteDistribution::point_mass(3.0).pushforward(sq), DiscreteDistribution::point_mass(9.0));

        let sym = DiscreteDistribution::new([(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        assert_eq!(sym.pushforward(sq), DiscreteDistribution::point_mass(1.0));

        let noise = DiscreteDistribution::new([(1.0, 0.7), (0.25, 0.3)]).unwrap();
        assert_eq!(noise.pushforward(|x| x), noise);
    }

    #[test]
    fn inverse_cdf_sampling() {
        let noise = DiscreteDistribution::new([(1.0, 0.7), (0.25, 0.3)]).unwrap();
        assert_eq!(noise.sample(0.0), 0.25);
        assert_eq!(noise.sample(0.299), 0.25);
        assert_eq!(noise.sample(0.3), 1.0);
        assert_eq!(noise.sample(0.999_999), 1.0);
    }

    fn arb_distribution() -> impl Strategy<Value = DiscreteDistribution> {
        prop::collection::vec((-50.0f64..50.0, 0.01f64..1.0), 1..20).prop_map(|raw| {
            let total: f64 = raw.iter().map(|r| r.1).sum();
            DiscreteDistribution::from_weighted(
                raw.into_iter().map(|(v, w)| (v, w / total)).collect(),
                ATOM_MERGE_TOL,
            )
        })
    }

    proptest! {
        #[test]
        fn pushforward_preserves_mass(d in arb_distribution(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let image = d.pushforward(|x| a * x * x + b * x);
            prop_assert!((image.total_mass() - d.total_mass()).abs() <= MASS_TOL);
            prop_assert!(image.atoms().windows(2).all(|w| w[1].value - w[0].value > ATOM_MERGE_TOL));
        }
    }
}
