//! Closed forms for the root-cluster size on a perfect binary tree.
//!
//! Only subsets `A` lying on a root-to-vertex path carry Fourier mass. With
//! `g(d) = p^{2d} [sum_{j=0}^{n-d} (2p)^j]^2` the level masses are
//! `var * P(W = k) = nu^{2k} sum_d C(d-1, k-1) 2^d g(d)`, which collapse to
//! single sums for the generating function, the variance and `E(1/W)`.
//!
//! Everything is evaluated in log space: `2^d`, `p^{-d}` and `(2p)^n` leave
//! the range of `f64` long before the depths used for asymptotic checks.

use std::io::Write;

use num_rational::Ratio;

use crate::bits::ProductMeasure;
use crate::error::{invalid, Error, Result};
use crate::spectral::SpectralWeights;

/// `|p - 1/2|` below which the geometric sum is expanded around `2p = 1`.
const NEAR_CRITICAL: f64 = 1e-6;

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("p", format!("must lie in (0, 1), got {p}")));
    }
    Ok(())
}

fn check_depth(n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("depth", "must be at least 1"));
    }
    Ok(())
}

/// `ln sum_{j<m} x^j` for `x > 0`, `m >= 1`.
fn ln_geometric(x: f64, m: usize) -> f64 {
    let mf = m as f64;
    let delta = x - 1.0;
    if delta == 0.0 {
        return mf.ln();
    }
    if delta.abs() < 2.0 * NEAR_CRITICAL {
        // sum_{j<m} (1+delta)^j = sum_{k>=0} C(m, k+1) delta^k
        let mut term = mf;
        let mut sum = mf;
        for k in 1..m {
            term *= delta * (mf - k as f64) / (k as f64 + 1.0);
            sum += term;
            if term.abs() <= f64::EPSILON * sum.abs() * 1e-2 {
                break;
            }
        }
        return sum.ln();
    }
    let lx = x.ln();
    if x < 1.0 {
        (-(mf * lx).exp_m1()).ln() - (-delta).ln()
    } else {
        mf * lx + (-(-mf * lx).exp_m1()).ln() - delta.ln()
    }
}

/// `ln(e^x - 1)` for `x > 0` without overflow.
fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `ln g_{p,n}(d)`.
pub fn ln_g_factor(p: f64, n: usize, d: usize) -> Result<f64> {
    check_p(p)?;
    check_depth(n)?;
    if d == 0 || d > n {
        return Err(invalid("d", format!("must lie in 1..={n}, got {d}")));
    }
    Ok(2.0 * d as f64 * p.ln() + 2.0 * ln_geometric(2.0 * p, n + 1 - d))
}

/// `g_{p,n}(d) = p^{2d} [(1 - (2p)^{n+1-d}) / (1 - 2p)]^2`, and
/// `2^{-2d} (n+1-d)^2` at `p = 1/2`.
pub fn g_factor(p: f64, n: usize, d: usize) -> Result<f64> {
    ln_g_factor(p, n, d).map(f64::exp)
}

/// Exact spectral data of the root-cluster size on the depth-`n` tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSpectrum {
    depth: usize,
    measure: ProductMeasure,
    ln_g: Vec<f64>,
    ln_variance: f64,
}

impl TreeSpectrum {
    pub fn new(p: f64, n: usize) -> Result<Self> {
        check_p(p)?;
        check_depth(n)?;
        let measure = ProductMeasure::new(p)?;
        let ln_g: Vec<f64> = (1..=n)
            .map(|d| 2.0 * d as f64 * p.ln() + 2.0 * ln_geometric(2.0 * p, n + 1 - d))
            .collect();
        let mut spectrum = Self {
            depth: n,
            measure,
            ln_g,
            ln_variance: 0.0,
        };
        spectrum.ln_variance = spectrum.ln_mgf(1.0)?;
        Ok(spectrum)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn p(&self) -> f64 {
        self.measure.p()
    }

    /// `g(d)` for `d = 1..=n`.
    pub fn g(&self, d: usize) -> f64 {
        self.ln_g[d - 1].exp()
    }

    /// `|B_n| = 2^{n+1} - 2` (infinite once it leaves `f64` range).
    pub fn num_bits(&self) -> f64 {
        2f64.powi((self.depth + 1).min(2000) as i32) - 2.0
    }

    pub fn ln_variance(&self) -> f64 {
        self.ln_variance
    }

    pub fn variance(&self) -> f64 {
        self.ln_variance.exp()
    }

    fn ln_terms<'a>(&'a self, per_depth: impl Fn(f64) -> f64 + 'a) -> impl Iterator<Item = f64> + 'a {
        self.ln_g.iter().enumerate().map(move |(i, lg)| {
            let d = (i + 1) as f64;
            d * std::f64::consts::LN_2 + lg + per_depth(d)
        })
    }

    /// `ln(var * E z^W)` for `z` in `[0, 1]`.
    pub fn ln_mgf(&self, z: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::Domain {
                function: "tree_mgf",
                value: z,
            });
        }
        if z == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let a = z * self.measure.nu_squared();
        let ln_1a = a.ln_1p();
        let terms: Vec<f64> = self.ln_terms(|d| d * ln_1a).collect();
        Ok(a.ln() - ln_1a + log_sum_exp(&terms))
    }

    /// `var * E z^W`.
    pub fn mgf(&self, z: f64) -> Result<f64> {
        self.ln_mgf(z).map(f64::exp)
    }

    /// `E(1/W)` from `var * E(1/W) = sum_d 2^d g(d) (p^{-d} - 1) / d`.
    pub fn mean_inverse(&self) -> f64 {
        let lnp = self.measure.p().ln();
        let terms: Vec<f64> = self.ln_terms(|d| ln_expm1(-d * lnp) - d.ln()).collect();
        (log_sum_exp(&terms) - self.ln_variance).exp()
    }

    /// `tau = |B_n| E(1/W) - 1/2`.
    pub fn tau(&self) -> f64 {
        self.num_bits() * self.mean_inverse() - 0.5
    }

    /// `tau / |B_n|`, finite at every depth.
    pub fn tau_per_bit(&self) -> f64 {
        let n = self.depth as i32 + 1;
        // 1/|B| = 2^{-n} / (1 - 2^{1-n})
        let inv_bits = 2f64.powi(-n.min(2000)) / (1.0 - 2f64.powi(1 - n.min(2000)));
        self.mean_inverse() - 0.5 * inv_bits
    }

    /// Continuous-time autocorrelation `E exp(-t W)`.
    pub fn rho_continuous(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain {
                function: "rho_continuous",
                value: t,
            });
        }
        Ok((self.ln_mgf((-t).exp())? - self.ln_variance).exp())
    }

    /// `ln(var * P(W = k))` for `k = 1..=n`; `O(n^2)` work.
    pub fn ln_level_masses(&self) -> Vec<f64> {
        let n = self.depth;
        let mut ln_fact = vec![0.0; n + 1];
        for i in 1..=n {
            ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
        }
        let ln_binom = |a: usize, b: usize| ln_fact[a] - ln_fact[b] - ln_fact[a - b];
        let ln_nu2 = self.measure.nu_squared().ln();
        let mut terms = Vec::with_capacity(n);
        (1..=n)
            .map(|k| {
                terms.clear();
                terms.extend(
                    (k..=n).map(|d| ln_binom(d - 1, k - 1) + d as f64 * std::f64::consts::LN_2 + self.ln_g[d - 1]),
                );
                k as f64 * ln_nu2 + log_sum_exp(&terms)
            })
            .collect()
    }

    /// The full weight distribution, normalized by the closed-form variance.
    pub fn weights(&self) -> Result<SpectralWeights> {
        let weights = self
            .ln_level_masses()
            .into_iter()
            .map(|lm| (lm - self.ln_variance).exp())
            .collect();
        SpectralWeights::from_distribution(self.num_bits(), self.variance(), weights)
    }
}

pub fn tree_weights(p: f64, n: usize) -> Result<SpectralWeights> {
    TreeSpectrum::new(p, n)?.weights()
}

/// `var * E z^W`.
pub fn tree_mgf(p: f64, n: usize, z: f64) -> Result<f64> {
    TreeSpectrum::new(p, n)?.mgf(z)
}

pub fn tree_variance(p: f64, n: usize) -> Result<f64> {
    Ok(TreeSpectrum::new(p, n)?.variance())
}

pub fn tree_tau(p: f64, n: usize) -> Result<f64> {
    Ok(TreeSpectrum::new(p, n)?.tau())
}

pub fn tree_tau_per_bit(p: f64, n: usize) -> Result<f64> {
    Ok(TreeSpectrum::new(p, n)?.tau_per_bit())
}

/// `n(n+1)(2n+1)/12`.
pub fn critical_variance(n: usize) -> f64 {
    let n = n as f64;
    n * (n + 1.0) * (2.0 * n + 1.0) / 12.0
}

/// Variance at `p = 1/2` from the generating-function sum, in exact
/// rational arithmetic. Valid for `n <= 40`.
pub fn critical_variance_rational(n: usize) -> Result<Ratio<i128>> {
    check_depth(n)?;
    if n > 40 {
        return Err(invalid("depth", "exact evaluation supports depth <= 40"));
    }
    let half = Ratio::new(1i128, 2);
    let mut total = Ratio::from_integer(0i128);
    for d in 1..=n {
        // 2^d p^{-d} g(d) with p = 1/2 and g(d) = 4^{-d} (n+1-d)^2
        let m = (n + 1 - d) as i128;
        let g = Ratio::new(m * m, 1i128 << (2 * d));
        total += g * Ratio::from_integer(1i128 << (2 * d));
    }
    Ok(total * half)
}

/// Limit of `tau / |B_n|` as `n` grows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauAsymptote {
    /// Off-critical: a positive constant.
    Constant(f64),
    /// Critical: decays like [`critical_rate`].
    CriticalRate,
}

impl TauAsymptote {
    /// The limiting value of `tau / |B_n|` evaluated at depth `n`.
    pub fn at_depth(&self, n: usize) -> f64 {
        match *self {
            TauAsymptote::Constant(c) => c,
            TauAsymptote::CriticalRate => critical_rate(n),
        }
    }
}

pub fn tree_tau_asymptote(p: f64) -> Result<TauAsymptote> {
    check_p(p)?;
    let q = 1.0 - p;
    Ok(if p < 0.5 {
        let log = (-2.0 * p * p).ln_1p() - (-2.0 * p).ln_1p();
        TauAsymptote::Constant((1.0 - 2.0 * p) / (2.0 * p * q) * log)
    } else if p > 0.5 {
        let log = -(-q / p).ln_1p();
        TauAsymptote::Constant((2.0 * p - 1.0) / q * log)
    } else {
        TauAsymptote::CriticalRate
    })
}

/// `6 ln(n) / n`.
pub fn critical_rate(n: usize) -> f64 {
    let n = n as f64;
    6.0 * n.ln() / n
}

/// One line of the depth/parameter sweep table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeRow {
    pub depth: usize,
    pub p: f64,
    pub variance: f64,
    pub tau: f64,
    pub tau_per_bit: f64,
    pub limit_ratio: f64,
}

impl TreeRow {
    pub fn compute(p: f64, n: usize) -> Result<Self> {
        let spectrum = TreeSpectrum::new(p, n)?;
        let tau_per_bit = spectrum.tau_per_bit();
        Ok(Self {
            depth: n,
            p,
            variance: spectrum.variance(),
            tau: spectrum.tau(),
            tau_per_bit,
            limit_ratio: tau_per_bit / tree_tau_asymptote(p)?.at_depth(n),
        })
    }
}

pub fn write_tree_table<W: Write>(mut out: W, rows: &[TreeRow], header: &[String]) -> std::io::Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "n,p,var,tau,tau_per_bit,limit_ratio")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.depth, r.p, r.variance, r.tau, r.tau_per_bit, r.limit_ratio
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn g_examples() {
        assert!(rel(g_factor(0.5, 3, 1).unwrap(), 2.25) < 1e-15);
        assert!(rel(g_factor(0.5, 3, 2).unwrap(), 0.25) < 1e-15);
        assert!(rel(g_factor(0.5, 3, 3).unwrap(), 1.0 / 64.0) < 1e-15);
        assert!(rel(g_factor(1.0 / 3.0, 1, 1).unwrap(), 1.0 / 9.0) < 1e-14);
        for &p in &[0.1, 0.3, 0.7, 0.9] {
            assert!(rel(g_factor(p, 7, 7).unwrap(), p.powi(14)) < 1e-13);
        }
        assert!(g_factor(0.5, 3, 0).is_err());
        assert!(g_factor(0.5, 3, 4).is_err());
        assert!(g_factor(1.0, 3, 1).is_err());
    }

    #[test]
    fn g_continuous_through_half() {
        for n in [5usize, 50, 5000] {
            for d in [1, n / 2 + 1, n] {
                let at = g_factor(0.5, n, d).unwrap();
                for eps in [1e-9, 5e-7, 1.5e-6, 1e-5] {
                    for p in [0.5 - eps, 0.5 + eps] {
                        let g = g_factor(p, n, d).unwrap();
                        // Leading-order drift is linear in eps with slope O(n d).
                        let allowed = 4.0 * eps * (n * n) as f64 + 1e-12;
                        assert!(rel(g, at) < allowed, "n={n} d={d} p={p}: {g} vs {at}");
                    }
                }
            }
        }
    }

    #[test]
    fn series_branch_matches_closed_form_at_switch() {
        for m in [3usize, 40, 4000] {
            let inside = ln_geometric(1.0 + 1.999e-6, m);
            let outside = ln_geometric(1.0 + 2.001e-6, m);
            assert!((outside - inside).abs() < 1e-8 * m as f64);
            assert!(outside > inside);
        }
    }

    #[test]
    fn small_depth_weights() {
        let w = tree_weights(0.5, 2).unwrap();
        assert!(rel(w.weight(1), 0.9) < 1e-13);
        assert!(rel(w.weight(2), 0.1) < 1e-13);
        assert!(rel(w.variance(), 2.5) < 1e-13);
        let w = tree_weights(0.5, 3).unwrap();
        for (k, num) in [(1, 45.0), (2, 10.0), (3, 1.0)] {
            assert!(rel(w.weight(k), num / 56.0) < 1e-13);
        }
        assert!(rel(w.variance(), 7.0) < 1e-13);
        for &p in &[0.1, 0.5, 0.93] {
            let w = tree_weights(p, 1).unwrap();
            assert!(rel(w.weight(1), 1.0) < 1e-13);
            assert!(rel(tree_tau(p, 1).unwrap(), 1.5) < 1e-13);
        }
    }

    #[test]
    fn tau_examples() {
        assert!(rel(tree_tau(0.5, 2).unwrap(), 5.2) < 1e-13);
        assert!(rel(tree_tau(0.5, 3).unwrap(), 12.083333333333337) < 1e-13);
        let s = TreeSpectrum::new(0.3, 6).unwrap();
        let w = s.weights().unwrap();
        assert!(rel(s.tau(), w.tau_discrete()) < 1e-12);
        assert!(rel(s.tau_per_bit(), s.tau() / s.num_bits()) < 1e-13);
    }

    #[test]
    fn mgf_matches_weights() {
        for &p in &[0.2, 0.5, 0.8] {
            for n in [1usize, 4, 9] {
                let s = TreeSpectrum::new(p, n).unwrap();
                let w = s.weights().unwrap();
                assert!((w.total() - 1.0).abs() < 1e-12);
                for i in 0..=10 {
                    let z = i as f64 / 10.0;
                    let lhs = s.variance() * w.generating_function(z);
                    assert!((lhs - s.mgf(z).unwrap()).abs() <= 1e-10 * s.variance());
                }
            }
        }
        assert_eq!(tree_mgf(0.5, 3, 0.0).unwrap(), 0.0);
        assert!(tree_mgf(0.5, 3, 1.5).is_err());
    }

    #[test]
    fn critical_variance_forms() {
        for n in 1..=40 {
            let exact = critical_variance_rational(n).unwrap();
            let n128 = n as i128;
            assert_eq!(exact, Ratio::from_integer(n128 * (n128 + 1) * (2 * n128 + 1)) / 12);
        }
        for n in [1usize, 2, 10, 100, 1000] {
            assert!(rel(tree_variance(0.5, n).unwrap(), critical_variance(n)) < 1e-12);
        }
        assert!(rel(tree_mgf(0.5, 10, 1.0).unwrap(), 192.5) < 1e-13);
    }

    #[test]
    fn asymptote_constants() {
        let TauAsymptote::Constant(sub) = tree_tau_asymptote(0.25).unwrap() else {
            panic!("expected constant")
        };
        assert!((sub - 4.0 / 3.0 * 1.75f64.ln()).abs() < 1e-15);
        let TauAsymptote::Constant(sup) = tree_tau_asymptote(0.75).unwrap() else {
            panic!("expected constant")
        };
        assert!((sup - 2.0 * 1.5f64.ln()).abs() < 1e-15);
        assert_eq!(tree_tau_asymptote(0.5).unwrap(), TauAsymptote::CriticalRate);
        let TauAsymptote::Constant(tiny) = tree_tau_asymptote(1e-7).unwrap() else {
            panic!("expected constant")
        };
        assert!((tiny - 1.0).abs() < 1e-6);
    }

    #[test]
    fn large_depth_is_finite() {
        for &p in &[0.25, 0.5, 0.75] {
            let s = TreeSpectrum::new(p, 100_000).unwrap();
            assert!(s.tau_per_bit().is_finite() && s.tau_per_bit() > 0.0);
            assert!(s.ln_variance().is_finite());
        }
    }

    #[test]
    fn table_rows() {
        let row = TreeRow::compute(0.5, 2).unwrap();
        assert!(rel(row.variance, 2.5) < 1e-13);
        assert!(rel(row.tau, 5.2) < 1e-13);
        let mut buf = Vec::new();
        write_tree_table(&mut buf, &[row], &["p=0.5".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# p=0.5\nn,p,var,tau,tau_per_bit,limit_ratio\n2,0.5,"));
    }
}
