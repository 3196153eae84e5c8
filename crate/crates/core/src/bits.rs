//! Bit configurations, the Bernoulli product measure and the biased
//! Fourier basis `Psi_A(x) = prod_{i in A} x_i nu^{x_i}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::Lattice;

/// A point of `{-1,+1}^B`; `+1` is open, `-1` is closed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitConfig(Vec<i8>);

impl BitConfig {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| **v != 1 && **v != -1) {
            return Err(invalid("config", format!("bit value {bad} is not +1 or -1")));
        }
        Ok(Self(values))
    }

    pub fn all_open(len: usize) -> Self {
        Self(vec![1; len])
    }

    pub fn all_closed(len: usize) -> Self {
        Self(vec![-1; len])
    }

    /// Bit `i` is open iff bit `i` of `mask` is set.
    pub fn from_mask(mask: u64, len: usize) -> Self {
        Self((0..len).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect())
    }

    /// Inverse of [`BitConfig::from_mask`]; requires `len() <= 64`.
    pub fn to_mask(&self) -> u64 {
        debug_assert!(self.0.len() <= 64);
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == 1)
            .fold(0u64, |m, (i, _)| m | 1 << i)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> i8 {
        self.0[i]
    }

    #[inline]
    pub fn is_open(&self, i: usize) -> bool {
        self.0[i] == 1
    }

    #[inline]
    pub fn set_open(&mut self, i: usize, open: bool) {
        self.0[i] = if open { 1 } else { -1 };
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = -self.0[i];
    }

    pub fn values(&self) -> &[i8] {
        &self.0
    }
}

/// Bernoulli product measure `pi_{p,B}`: each bit open with probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ProductMeasure {
    p: f64,
    nu: f64,
}

impl ProductMeasure {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("p", format!("{p} is not in (0,1)")));
        }
        Ok(Self {
            p,
            nu: ((1.0 - p) / p).sqrt(),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }

    /// `nu_p = sqrt((1-p)/p)`.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `nu_p^2`, computed from `p` directly.
    pub fn nu_squared(&self) -> f64 {
        (1.0 - self.p) / self.p
    }

    /// Probability of a single bit value.
    pub fn bit_prob(&self, open: bool) -> f64 {
        if open {
            self.p
        } else {
            1.0 - self.p
        }
    }

    /// `pi_{p,B}(x)`.
    pub fn prob(&self, config: &BitConfig) -> f64 {
        config.values().iter().map(|&v| self.bit_prob(v == 1)).product()
    }

    /// Probability of a configuration given as a mask over `len` bits.
    pub fn mask_prob(&self, mask: u64, len: usize) -> f64 {
        let open = (mask & low_mask(len)).count_ones() as i32;
        self.p.powi(open) * (1.0 - self.p).powi(len as i32 - open)
    }

    /// One-bit basis function `psi(s) = s nu^s`.
    #[inline]
    pub fn psi(&self, open: bool) -> f64 {
        if open {
            self.nu
        } else {
            -1.0 / self.nu
        }
    }

    #[inline]
    pub fn sample_bit<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.gen_bool(self.p)
    }
}

impl TryFrom<f64> for ProductMeasure {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<ProductMeasure> for f64 {
    fn from(m: ProductMeasure) -> f64 {
        m.p
    }
}

pub(crate) fn low_mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

/// A subset `A` of the bit set, stored as strictly increasing ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct BitSubset(Vec<usize>);

impl BitSubset {
    /// Builds a subset of `0..num_bits`; ids may come in any order but must
    /// be distinct.
    pub fn new(mut ids: Vec<usize>, num_bits: usize) -> Result<Self> {
        ids.sort_unstable();
        if let Some(&id) = ids.iter().find(|&&id| id >= num_bits) {
            return Err(Error::EdgeOutOfRange { id, num_bits });
        }
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("subset", "repeated bit id"));
        }
        Ok(Self(ids))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn singleton(id: usize) -> Self {
        Self(vec![id])
    }

    pub fn from_mask(mask: u64) -> Self {
        Self((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }

    pub fn mask(&self) -> u64 {
        self.0.iter().fold(0, |m, &i| m | 1 << i)
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `Psi_A(x)`; equals 1 for the empty set.
pub fn basis_eval(subset: &BitSubset, config: &BitConfig, measure: &ProductMeasure) -> Result<f64> {
    if let Some(&id) = subset.ids().iter().find(|&&id| id >= config.len()) {
        return Err(Error::EdgeOutOfRange {
            id,
            num_bits: config.len(),
        });
    }
    Ok(subset.ids().iter().map(|&i| measure.psi(config.is_open(i))).product())
}

/// `Psi_A` for a subset mask and a configuration mask.
#[inline]
pub(crate) fn basis_eval_mask(subset: u64, config: u64, measure: &ProductMeasure) -> f64 {
    let open = (subset & config).count_ones() as i32;
    let closed = (subset & !config).count_ones() as i32;
    let magnitude = measure.nu().powi(open - closed);
    if closed % 2 == 0 {
        magnitude
    } else {
        -magnitude
    }
}

/// Exact draw from `pi_{p,B}` on the lattice's edges.
pub fn sample_config<R: Rng + ?Sized>(measure: &ProductMeasure, lattice: &Lattice, rng: &mut R) -> BitConfig {
    sample_bits(measure, lattice.num_edges(), rng)
}

pub fn sample_bits<R: Rng + ?Sized>(measure: &ProductMeasure, len: usize, rng: &mut R) -> BitConfig {
    BitConfig((0..len).map(|_| if measure.sample_bit(rng) { 1 } else { -1 }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;

    #[test]
    fn measure_validation() {
        assert!(ProductMeasure::new(0.0).is_err());
        assert!(ProductMeasure::new(1.0).is_err());
        assert!(ProductMeasure::new(f64::NAN).is_err());
        let m = ProductMeasure::new(0.2).unwrap();
        assert!((m.nu() - 2.0).abs() < 1e-15);
        assert!((m.nu() * m.nu() - m.nu_squared()).abs() < 1e-15);
    }

    #[test]
    fn basis_examples() {
        let half = ProductMeasure::new(0.5).unwrap();
        let x = BitConfig::new(vec![1, -1, -1, 1]).unwrap();
        let a = BitSubset::new(vec![0, 1, 2], 4).unwrap();
        assert_eq!(basis_eval(&a, &x, &half).unwrap(), 1.0);
        assert_eq!(
            basis_eval(&BitSubset::new(vec![1], 4).unwrap(), &x, &half).unwrap(),
            -1.0
        );
        let fifth = ProductMeasure::new(0.2).unwrap();
        let open = BitSubset::singleton(0);
        let closed = BitSubset::singleton(1);
        assert!((basis_eval(&open, &x, &fifth).unwrap() - 2.0).abs() < 1e-15);
        assert!((basis_eval(&closed, &x, &fifth).unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(basis_eval(&BitSubset::empty(), &x, &fifth).unwrap(), 1.0);
        assert!(matches!(
            basis_eval(&BitSubset::singleton(7), &x, &fifth),
            Err(Error::EdgeOutOfRange { id: 7, .. })
        ));
    }

    #[test]
    fn mask_basis_agrees_with_config_basis() {
        let m = ProductMeasure::new(0.3).unwrap();
        for a in 0..16u64 {
            for x in 0..16u64 {
                let direct = basis_eval(&BitSubset::from_mask(a), &BitConfig::from_mask(x, 4), &m).unwrap();
                assert!((direct - basis_eval_mask(a, x, &m)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orthonormality_exhaustive() {
        for &p in &[0.1, 0.3, 0.5, 0.77] {
            let m = ProductMeasure::new(p).unwrap();
            for n in 1..=6usize {
                let size = 1u64 << n;
                for a in 0..size {
                    for c in 0..size {
                        let ip: f64 = (0..size)
                            .map(|x| {
                                let cfg = BitConfig::from_mask(x, n);
                                m.prob(&cfg)
                                    * basis_eval(&BitSubset::from_mask(a), &cfg, &m).unwrap()
                                    * basis_eval(&BitSubset::from_mask(c), &cfg, &m).unwrap()
                            })
                            .sum();
                        let expected = if a == c { 1.0 } else { 0.0 };
                        assert!((ip - expected).abs() < 1e-12, "p={p} n={n} A={a} C={c}: {ip}");
                    }
                }
            }
        }
    }

    #[test]
    fn subset_validation() {
        assert_eq!(BitSubset::new(vec![3, 1], 4).unwrap().ids(), &[1, 3]);
        assert!(BitSubset::new(vec![1, 1], 4).is_err());
        assert!(matches!(BitSubset::new(vec![4], 4), Err(Error::EdgeOutOfRange { .. })));
    }

    #[test]
    fn sampling_frequencies_two_bits() {
        let m = ProductMeasure::new(0.5).unwrap();
        let lattice = Lattice::binary_tree(1).unwrap();
        let mut rng = replica_rng(11, 0);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[sample_config(&m, &lattice, &mut rng).to_mask() as usize] += 1;
        }
        let sigma = (0.25f64 * 0.75 / draws as f64).sqrt();
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.25).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn sampling_mean_and_determinism() {
        let p = 0.37;
        let m = ProductMeasure::new(p).unwrap();
        let mut rng = replica_rng(5, 2);
        let draws = 100_000;
        let open = (0..draws).filter(|_| sample_bits(&m, 1, &mut rng).is_open(0)).count();
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((open as f64 / draws as f64 - p).abs() < 3.0 * sigma);

        let lattice = Lattice::torus(2, 4).unwrap();
        let a = sample_config(&m, &lattice, &mut replica_rng(9, 1));
        let b = sample_config(&m, &lattice, &mut replica_rng(9, 1));
        assert_eq!(a, b);
    }
}
