//! Exhaustive Fourier analysis on the biased hypercube.
//!
//! Coefficients `<f, Psi_A>` are indexed by subset mask. The spectral-weight
//! distribution `P(W = k)` is the share of `var(f)` carried by level `k`, and
//! every autocorrelation quantity of both chains is a functional of it:
//!
//! * `rho(s)     = E (1 - W/|B|)^s`
//! * `tau        = |B| E(1/W) - 1/2`
//! * `rho~(t)    = E exp(-t W)`
//! * `tau~       = E(1/W)`

use std::io::Write;

use rayon::prelude::*;

use crate::bits::{basis_eval_mask, BitConfig, BitSubset, ProductMeasure};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::observable::{FourierExpansion, Observable};

/// Largest `|B|` enumerated exhaustively unless overridden.
pub const DEFAULT_ENUMERATION_CAP: usize = 22;

/// Above this many bits the fast transform replaces direct enumeration.
pub const DIRECT_METHOD_MAX_BITS: usize = 14;

/// Level masses below this fraction of the variance are reported as zero.
pub const WEIGHT_CLAMP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoefficientMethod {
    /// Direct for `|B| <= 14`, transform above.
    #[default]
    Auto,
    /// `O(4^|B|)` sum over all subset/configuration pairs.
    Direct,
    /// `O(|B| 2^|B|)` butterfly over the `{1, psi}` basis of each bit.
    Transform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationOptions {
    pub cap: usize,
    pub method: CoefficientMethod,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ENUMERATION_CAP,
            method: CoefficientMethod::Auto,
        }
    }
}

fn check_cap(num_bits: usize, cap: usize) -> Result<()> {
    // Masks are u64 and tables are indexed by usize.
    if num_bits > cap || num_bits > 40 {
        return Err(Error::CapExceeded { bits: num_bits, cap });
    }
    Ok(())
}

/// Values of `f` on every configuration, indexed by open-bit mask.
pub fn truth_table<O>(f: &O, num_bits: usize, cap: usize) -> Result<Vec<f64>>
where
    O: Observable + Clone + Send + Sync,
{
    check_cap(num_bits, cap)?;
    let size = 1usize << num_bits;
    let mut values = vec![0.0; size];
    const CHUNK: usize = 1 << 12;
    values.par_chunks_mut(CHUNK).enumerate().for_each_init(
        || f.clone(),
        |f, (ci, chunk)| {
            let mut config = BitConfig::all_closed(num_bits);
            for (j, slot) in chunk.iter_mut().enumerate() {
                let mask = (ci * CHUNK + j) as u64;
                for i in 0..num_bits {
                    config.set_open(i, mask >> i & 1 == 1);
                }
                *slot = f.eval(&config);
            }
        },
    );
    Ok(values)
}

/// `<f, Psi_A>` by direct summation over all `2^|B|` configurations.
pub fn fourier_coefficient<O: Observable + ?Sized>(
    f: &mut O,
    subset: &BitSubset,
    measure: &ProductMeasure,
    lattice: &Lattice,
) -> Result<f64> {
    let num_bits = lattice.num_edges();
    check_cap(num_bits, DEFAULT_ENUMERATION_CAP)?;
    if let Some(&id) = subset.ids().last() {
        if id >= num_bits {
            return Err(Error::EdgeOutOfRange { id, num_bits });
        }
    }
    let a = subset.mask();
    let mut config = BitConfig::all_closed(num_bits);
    let mut total = 0.0;
    for mask in 0..1u64 << num_bits {
        for i in 0..num_bits {
            config.set_open(i, mask >> i & 1 == 1);
        }
        total += measure.mask_prob(mask, num_bits) * f.eval(&config) * basis_eval_mask(a, mask, measure);
    }
    Ok(total)
}

/// In-place biased Walsh transform: on entry `values[x] = f(x)`, on exit
/// `values[A] = <f, Psi_A>`.
pub fn biased_walsh_transform(values: &mut [f64], measure: &ProductMeasure) {
    assert!(values.len().is_power_of_two(), "table length must be a power of two");
    let (p, q) = (measure.p(), measure.q());
    let root = (p * q).sqrt();
    let mut half = 1;
    while half < values.len() {
        for block in values.chunks_mut(2 * half) {
            let (closed, open) = block.split_at_mut(half);
            for (lo, hi) in closed.iter_mut().zip(open.iter_mut()) {
                let (b, a) = (*lo, *hi);
                *lo = p * a + q * b;
                *hi = root * (a - b);
            }
        }
        half *= 2;
    }
}

/// All coefficients by the `O(4^|B|)` definition; the independent check on
/// [`biased_walsh_transform`].
pub fn coefficients_direct(table: &[f64], num_bits: usize, measure: &ProductMeasure) -> Vec<f64> {
    let weighted: Vec<f64> = table
        .iter()
        .enumerate()
        .map(|(x, v)| measure.mask_prob(x as u64, num_bits) * v)
        .collect();
    (0..table.len() as u64)
        .into_par_iter()
        .map(|a| {
            weighted
                .iter()
                .enumerate()
                .map(|(x, w)| w * basis_eval_mask(a, x as u64, measure))
                .sum()
        })
        .collect()
}

/// Coefficients of a truth table by the requested method.
pub fn coefficients(table: &[f64], num_bits: usize, measure: &ProductMeasure, method: CoefficientMethod) -> Vec<f64> {
    let direct = match method {
        CoefficientMethod::Auto => num_bits <= DIRECT_METHOD_MAX_BITS,
        CoefficientMethod::Direct => true,
        CoefficientMethod::Transform => false,
    };
    if direct {
        coefficients_direct(table, num_bits, measure)
    } else {
        let mut out = table.to_vec();
        biased_walsh_transform(&mut out, measure);
        out
    }
}

/// Mean and variance of a truth table under `pi_{p,B}`.
pub fn table_moments(table: &[f64], num_bits: usize, measure: &ProductMeasure) -> (f64, f64) {
    let probs = |x: usize| measure.mask_prob(x as u64, num_bits);
    let mean: f64 = table.iter().enumerate().map(|(x, v)| probs(x) * v).sum();
    let var = table
        .iter()
        .enumerate()
        .map(|(x, v)| probs(x) * (v - mean) * (v - mean))
        .sum();
    (mean, var)
}

/// Distribution of the spectral level `W` of a non-constant observable.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralWeights {
    // f64 so that closed-form tree spectra with |B| ~ 2^n can be represented.
    num_bits: f64,
    variance: f64,
    // weights[k - 1] = P(W = k); levels past the end have zero mass.
    weights: Vec<f64>,
}

impl SpectralWeights {
    /// Normalizes per-level masses `m[k-1] = sum_{|A|=k} <f,Psi_A>^2`.
    pub fn from_level_masses(num_bits: f64, variance: f64, masses: &[f64]) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::ConstantObservable);
        }
        let mut weights: Vec<f64> = masses
            .iter()
            .map(|&m| {
                let w = m / variance;
                if w < WEIGHT_CLAMP {
                    0.0
                } else {
                    w
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ConstantObservable);
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            num_bits,
            variance,
            weights,
        })
    }

    /// Weights given directly as a probability vector over levels `1..`.
    pub fn from_distribution(num_bits: f64, variance: f64, weights: Vec<f64>) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::ConstantObservable);
        }
        if weights.len() as f64 > num_bits || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(crate::error::invalid(
                "weights",
                "weights must be nonnegative on levels 1..=|B|",
            ));
        }
        Ok(Self {
            num_bits,
            variance,
            weights,
        })
    }

    /// Weights from all `2^|B|` coefficients indexed by subset mask.
    pub fn from_coefficients(coefficients: &[f64], num_bits: usize) -> Result<Self> {
        let mut masses = vec![0.0; num_bits];
        for (a, c) in coefficients.iter().enumerate().skip(1) {
            masses[a.count_ones() as usize - 1] += c * c;
        }
        let variance: f64 = masses.iter().sum();
        Self::from_level_masses(num_bits as f64, variance, &masses)
    }

    /// Weights of a finite expansion, read off its coefficients.
    pub fn from_expansion(f: &FourierExpansion) -> Result<Self> {
        let mut masses = vec![0.0; f.num_bits()];
        for (subset, c) in f.terms() {
            if !subset.is_empty() {
                masses[subset.len() - 1] += c * c;
            }
        }
        let variance: f64 = masses.iter().sum();
        Self::from_level_masses(f.num_bits() as f64, variance, &masses)
    }

    pub fn num_bits(&self) -> f64 {
        self.num_bits
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// `P(W = k)` for `k >= 1`.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.weights.get(k - 1).copied().unwrap_or(0.0)
    }

    /// Weights for levels `1..=len`; trailing levels are zero.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn levels(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, w)| ((i + 1) as f64, *w))
    }

    /// `E(z^W)`.
    pub fn generating_function(&self, z: f64) -> f64 {
        self.levels().map(|(k, w)| w * z.powf(k)).sum()
    }

    /// Discrete-time autocorrelation `rho(s) = E(1 - W/|B|)^s`.
    pub fn rho_discrete(&self, s: u64) -> f64 {
        self.levels()
            .map(|(k, w)| {
                let r = 1.0 - k / self.num_bits;
                w * if s <= i32::MAX as u64 {
                    r.powi(s as i32)
                } else {
                    r.powf(s as f64)
                }
            })
            .sum()
    }

    /// Integrated time `tau = 1/2 + sum_{s>=1} rho(s)`, summed level by level
    /// as geometric series.
    pub fn tau_discrete(&self) -> f64 {
        0.5 + self
            .levels()
            .map(|(k, w)| {
                let gap = k / self.num_bits;
                w * (1.0 - gap) / gap
            })
            .sum::<f64>()
    }

    /// `tau / |B|`, finite even when `|B|` overflows.
    pub fn tau_discrete_per_bit(&self) -> f64 {
        self.mean_inverse() - 0.5 / self.num_bits
    }

    /// `rho~(t) = E exp(-t W)`.
    pub fn rho_continuous(&self, t: f64) -> f64 {
        self.levels().map(|(k, w)| w * (-t * k).exp()).sum()
    }

    /// `tau~ = E(1/W)`.
    pub fn tau_continuous(&self) -> f64 {
        self.mean_inverse()
    }

    pub fn mean_inverse(&self) -> f64 {
        self.levels().map(|(k, w)| w / k).sum()
    }

    pub fn mean(&self) -> f64 {
        self.levels().map(|(k, w)| w * k).sum()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// CSV rows `k,w` for `k = 1..=|B|` (or the stored support when `|B|` is
    /// astronomically large), preceded by `#` metadata lines.
    pub fn write_csv<W: Write>(&self, mut out: W, header: &[String]) -> std::io::Result<()> {
        for line in header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "# variance={}", self.variance)?;
        writeln!(out, "k,w")?;
        let rows = if self.num_bits <= (1u64 << 24) as f64 {
            self.num_bits as usize
        } else {
            self.weights.len()
        };
        for k in 1..=rows {
            writeln!(out, "{k},{}", self.weight(k))?;
        }
        Ok(())
    }
}

/// Spectral weights of a truth table.
pub fn spectral_weights_from_table(
    table: &[f64],
    num_bits: usize,
    measure: &ProductMeasure,
    method: CoefficientMethod,
) -> Result<SpectralWeights> {
    if table.iter().all(|v| *v == table[0]) {
        return Err(Error::ConstantObservable);
    }
    let (_, variance) = table_moments(table, num_bits, measure);
    let coefs = coefficients(table, num_bits, measure, method);
    let mut masses = vec![0.0; num_bits];
    for (a, c) in coefs.iter().enumerate().skip(1) {
        masses[a.count_ones() as usize - 1] += c * c;
    }
    SpectralWeights::from_level_masses(num_bits as f64, variance, &masses)
}

/// Spectral weights of `f` on the lattice's bits by exhaustive enumeration.
pub fn spectral_weights<O>(f: &O, measure: &ProductMeasure, lattice: &Lattice) -> Result<SpectralWeights>
where
    O: Observable + Clone + Send + Sync,
{
    spectral_weights_with(f, measure, lattice.num_edges(), EnumerationOptions::default())
}

pub fn spectral_weights_with<O>(
    f: &O,
    measure: &ProductMeasure,
    num_bits: usize,
    options: EnumerationOptions,
) -> Result<SpectralWeights>
where
    O: Observable + Clone + Send + Sync,
{
    let table = truth_table(f, num_bits, options.cap)?;
    spectral_weights_from_table(&table, num_bits, measure, options.method)
}

/// `h(x) = (-x - ln(1-x)) / x^2 = sum_l x^l / (l+2)` on `[0, 1)`.
pub fn h_function(x: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::Domain {
            function: "h",
            value: x,
        });
    }
    if x < 1e-4 {
        let mut sum = 0.0;
        let mut power = 1.0;
        for l in 0..8 {
            sum += power / (l as f64 + 2.0);
            power *= x;
        }
        return Ok(sum);
    }
    Ok((-x - (-x).ln_1p()) / (x * x))
}
