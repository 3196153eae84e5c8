//! Real-valued functions of a bit configuration.

use crate::bits::{basis_eval, BitConfig, BitSubset, ProductMeasure};
use crate::error::{invalid, Result};
use crate::lattice::{ClusterCounter, Lattice};

/// `f : {-1,+1}^B -> R`. Evaluation takes `&mut self` so implementations
/// can keep scratch space between calls.
pub trait Observable {
    fn eval(&mut self, config: &BitConfig) -> f64;
}

impl<F: FnMut(&BitConfig) -> f64> Observable for F {
    fn eval(&mut self, config: &BitConfig) -> f64 {
        self(config)
    }
}

/// Size of the open cluster containing the lattice root.
#[derive(Debug, Clone)]
pub struct RootClusterSize<'a> {
    lattice: &'a Lattice,
    counter: ClusterCounter,
}

impl<'a> RootClusterSize<'a> {
    pub fn new(lattice: &'a Lattice) -> Self {
        Self {
            lattice,
            counter: ClusterCounter::new(),
        }
    }
}

impl Observable for RootClusterSize<'_> {
    fn eval(&mut self, config: &BitConfig) -> f64 {
        self.counter.root_cluster_size(self.lattice, config) as f64
    }
}

/// Function given by its values on every configuration mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    num_bits: usize,
    values: Vec<f64>,
}

impl TruthTable {
    pub fn new(num_bits: usize, values: Vec<f64>) -> Result<Self> {
        if num_bits > 30 || values.len() != 1usize << num_bits {
            return Err(invalid(
                "values",
                format!("expected 2^{num_bits} entries, got {}", values.len()),
            ));
        }
        Ok(Self { num_bits, values })
    }

    pub fn num_bits(&self) -> usize {
        self.num_bits
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at_mask(&self, mask: u64) -> f64 {
        self.values[mask as usize]
    }
}

impl Observable for TruthTable {
    fn eval(&mut self, config: &BitConfig) -> f64 {
        self.values[config.to_mask() as usize]
    }
}

/// Finite expansion `sum_A c_A Psi_A` in the biased basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierExpansion {
    measure: ProductMeasure,
    num_bits: usize,
    terms: Vec<(BitSubset, f64)>,
}

impl FourierExpansion {
    pub fn new(measure: ProductMeasure, num_bits: usize, terms: Vec<(BitSubset, f64)>) -> Result<Self> {
        for (subset, _) in &terms {
            if let Some(&id) = subset.ids().last() {
                if id >= num_bits {
                    return Err(crate::Error::EdgeOutOfRange { id, num_bits });
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        if !terms.iter().all(|(s, _)| seen.insert(s.clone())) {
            return Err(invalid("terms", "repeated subset in expansion"));
        }
        Ok(Self {
            measure,
            num_bits,
            terms,
        })
    }

    /// `n^{-gamma/2} Psi_{1} + sqrt(1 - n^{-gamma}) Psi_{[n]}`: a dictator
    /// plus parity mixture whose spectral weight sits on levels 1 and n.
    pub fn dictator_parity(measure: ProductMeasure, n: usize, gamma: f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", "dictator-parity mixture needs at least 2 bits"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(invalid("gamma", format!("{gamma} is not in (0,1)")));
        }
        let small = (n as f64).powf(-gamma);
        Self::new(
            measure,
            n,
            vec![
                (BitSubset::singleton(0), small.sqrt()),
                (BitSubset::new((0..n).collect(), n)?, (1.0 - small).sqrt()),
            ],
        )
    }

    pub fn measure(&self) -> &ProductMeasure {
        &self.measure
    }

    pub fn num_bits(&self) -> usize {
        self.num_bits
    }

    pub fn terms(&self) -> &[(BitSubset, f64)] {
        &self.terms
    }
}

impl Observable for FourierExpansion {
    fn eval(&mut self, config: &BitConfig) -> f64 {
        self.terms
            .iter()
            .map(|(subset, c)| c * basis_eval(subset, config, &self.measure).expect("subset validated at construction"))
            .sum()
    }
}
