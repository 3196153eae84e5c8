//! Monte Carlo estimators of autocorrelation functions and integrated times.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::bits::{sample_config, ProductMeasure};
use crate::dynamics::{noise_for_time, noise_perturb_in_place};
use crate::error::{invalid, Error, Result};
use crate::lattice::Lattice;
use crate::observable::Observable;
use crate::rng::replica_rng;

/// Default self-consistency constant of the window rule.
pub const DEFAULT_WINDOW_CONSTANT: f64 = 10.0;

/// Lags for which Bartlett standard errors of `rho(s)` are reported.
pub const DEFAULT_REPORT_LAGS: usize = 10;

/// Lags evaluated per parallel batch while searching for the window.
const LAG_BLOCK: usize = 32;

/// Self-consistent truncation: the window is the smallest `M` with
/// `M >= c * tau(M)`, searched up to `max_lag` (default `T / 10`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRule {
    pub c: f64,
    pub max_lag: Option<usize>,
    pub report_lags: usize,
}

impl Default for WindowRule {
    fn default() -> Self {
        Self {
            c: DEFAULT_WINDOW_CONSTANT,
            max_lag: None,
            report_lags: DEFAULT_REPORT_LAGS,
        }
    }
}

impl WindowRule {
    pub fn with_constant(c: f64) -> Self {
        Self { c, ..Self::default() }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Eight independent accumulators: vectorizes, and the summation order
    // is fixed so results are reproducible.
    let mut acc = [0.0f64; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for i in 0..8 {
            acc[i] += ca[i] * cb[i];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Centered copy of the series and its biased variance.
fn center(series: &[f64]) -> Result<(Vec<f64>, f64)> {
    if series.iter().all(|v| *v == series[0]) {
        return Err(Error::ConstantSeries);
    }
    let t = series.len() as f64;
    let mean = series.iter().sum::<f64>() / t;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let var = dot(&centered, &centered) / t;
    if !(var > 0.0) {
        return Err(Error::ConstantSeries);
    }
    Ok((centered, var))
}

fn autocorr_range(centered: &[f64], var: f64, lags: std::ops::Range<usize>) -> Vec<f64> {
    let t = centered.len();
    lags.into_par_iter()
        .map(|s| dot(&centered[..t - s], &centered[s..]) / (t as f64 * var))
        .collect()
}

fn check_length(len: usize, lags: usize) -> Result<()> {
    let needed = 10 * lags.max(1);
    if len < needed {
        return Err(Error::SeriesTooShort { len, lags, needed });
    }
    Ok(())
}

/// `rho(s)` for `s = 0..=s_max`, biased (`1/T`) autocovariance over the
/// sample variance.
pub fn estimate_autocorr(series: &[f64], s_max: usize) -> Result<Vec<f64>> {
    check_length(series.len(), s_max)?;
    let (centered, var) = center(series)?;
    let mut rho = autocorr_range(&centered, var, 0..s_max + 1);
    rho[0] = 1.0;
    Ok(rho)
}

/// Bartlett standard error of `rho(s)`, summing over `m = 1..=window`.
/// `rho` must extend to lag `window + s`.
pub fn bartlett_se(rho: &[f64], s: usize, window: usize, len: usize) -> f64 {
    let at = |k: isize| rho[k.unsigned_abs()];
    let s_i = s as isize;
    let sum: f64 = (1..=window as isize)
        .map(|m| {
            let v = at(m + s_i) + at(m - s_i) - 2.0 * at(s_i) * at(m);
            v * v
        })
        .sum();
    (sum / len as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AutocorrEstimate {
    /// `rho(s)` for `s = 0..=window + report_lags`.
    pub rho: Vec<f64>,
    /// Bartlett standard errors for `s = 0..=report_lags`.
    pub rho_se: Vec<f64>,
    pub tau: f64,
    pub tau_se: f64,
    pub window: usize,
    pub len: usize,
    pub effective_samples: f64,
    /// Set when noise pushed the estimate below the white-noise value 1/2.
    pub below_half: bool,
}

/// Windowed integrated autocorrelation time with standard error
/// `sqrt(2(2M+1)/T) * tau`.
pub fn integrated_tau(series: &[f64], rule: WindowRule) -> Result<AutocorrEstimate> {
    if !(rule.c > 0.0) {
        return Err(invalid("c", "window constant must be positive"));
    }
    let len = series.len();
    let s_max = rule.max_lag.unwrap_or(len / 10).max(1);
    check_length(len, s_max)?;
    let (centered, var) = center(series)?;

    let mut rho = vec![1.0];
    let mut tau = 0.5;
    let mut window = None;
    'search: while rho.len() <= s_max {
        let start = rho.len();
        let end = (start + LAG_BLOCK).min(s_max + 1);
        let block = autocorr_range(&centered, var, start..end);
        for (i, r) in block.iter().enumerate() {
            tau += r;
            let m = start + i;
            if m as f64 >= rule.c * tau {
                rho.extend_from_slice(&block[..=i]);
                window = Some(m);
                break 'search;
            }
        }
        rho.extend_from_slice(&block);
    }
    let window = window.ok_or(Error::WindowNotClosed { s_max })?;

    let needed = (window + rule.report_lags).min(len - 1);
    if rho.len() <= needed {
        let extra = autocorr_range(&centered, var, rho.len()..needed + 1);
        rho.extend(extra);
    }
    let report = rule.report_lags.min(needed.saturating_sub(window));
    let rho_se = (0..=report).map(|s| bartlett_se(&rho, s, window, len)).collect();
    let tau_se = (2.0 * (2 * window + 1) as f64 / len as f64).sqrt() * tau;
    Ok(AutocorrEstimate {
        rho,
        rho_se,
        tau,
        tau_se,
        window,
        len,
        effective_samples: len as f64 / (2.0 * tau),
        below_half: tau < 0.5,
    })
}

impl AutocorrEstimate {
    /// CSV rows `s,rho,se` for the lags with a standard error.
    pub fn write_rho_csv<W: Write>(&self, mut out: W, header: &[String]) -> std::io::Result<()> {
        for line in header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "s,rho,se")?;
        for (s, se) in self.rho_se.iter().enumerate() {
            writeln!(out, "{s},{},{se}", self.rho[s])?;
        }
        Ok(())
    }

    /// One-row summary `tau,window,se,T`.
    pub fn write_summary_csv<W: Write>(&self, mut out: W, header: &[String]) -> std::io::Result<()> {
        for line in header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "tau,window,se,T")?;
        writeln!(out, "{},{},{},{}", self.tau, self.window, self.tau_se, self.len)
    }
}

/// Estimate of the continuous-time correlation at a single time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCorrelation {
    pub t: f64,
    pub estimate: f64,
    pub se: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl Moments {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    fn merge(mut self, o: &Moments) -> Self {
        self.n += o.n;
        self.sx += o.sx;
        self.sy += o.sy;
        self.sxx += o.sxx;
        self.syy += o.syy;
        self.sxy += o.sxy;
        self
    }

    fn correlation(&self) -> f64 {
        let (mx, my) = (self.sx / self.n, self.sy / self.n);
        let cov = self.sxy / self.n - mx * my;
        let vx = self.sxx / self.n - mx * mx;
        let vy = self.syy / self.n - my * my;
        cov / (vx * vy).sqrt()
    }
}

/// Correlation of `f(X)` and `f(X')` with `X ~ pi` and `X'` the
/// `(1 - e^{-t})`-noised copy, over `samples` independent pairs split into
/// `batches` seeded replicas. The standard error is the spread of the batch
/// correlations.
pub fn pair_correlation_continuous<O>(
    lattice: &Lattice,
    measure: &ProductMeasure,
    f: &O,
    t: f64,
    samples: usize,
    batches: usize,
    seed: u64,
) -> Result<PairCorrelation>
where
    O: Observable + Clone + Send + Sync,
{
    if !(t >= 0.0) {
        return Err(invalid("t", format!("must be nonnegative, got {t}")));
    }
    if batches < 2 || samples < 2 * batches {
        return Err(invalid("samples", "need at least two batches of two samples"));
    }
    if t == 0.0 {
        return Ok(PairCorrelation {
            t,
            estimate: 1.0,
            se: 0.0,
            samples,
        });
    }
    let eps = noise_for_time(t)?;
    let per_batch: Vec<usize> = (0..batches)
        .map(|b| samples / batches + usize::from(b < samples % batches))
        .collect();
    let moments: Vec<Moments> = per_batch
        .par_iter()
        .enumerate()
        .map(|(b, &count)| {
            let mut rng = replica_rng(seed, b as u64);
            let mut f = f.clone();
            let mut acc = Moments::default();
            for _ in 0..count {
                let x = sample_config(measure, lattice, &mut rng);
                let fx = f.eval(&x);
                let mut y = x;
                noise_perturb_in_place(&mut y, eps, measure, &mut rng);
                acc.push(fx, f.eval(&y));
            }
            acc
        })
        .collect();
    let total = moments.iter().fold(Moments::default(), |acc, m| acc.merge(m));
    if !(total.sxx / total.n - (total.sx / total.n).powi(2) > 0.0) {
        return Err(Error::ConstantSeries);
    }
    let corrs: Vec<f64> = moments.iter().map(Moments::correlation).collect();
    let mean = corrs.iter().sum::<f64>() / batches as f64;
    let spread = corrs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Ok(PairCorrelation {
        t,
        estimate: total.correlation(),
        se: (spread / batches as f64).sqrt(),
        samples,
    })
}
