//! Discrete-time heat-bath dynamics and the noise coupling that realizes the
//! continuous-time chain.

use std::io::Write;

use rand::Rng;

use crate::bits::{sample_bits, BitConfig, ProductMeasure};
use crate::error::{invalid, Result};
use crate::lattice::{Lattice, LatticeDescriptor};
use crate::observable::Observable;
use crate::rng::{replica_rng, SimRng};

/// State of one discrete-time chain: configuration, step counter and its
/// private random stream.
#[derive(Debug, Clone)]
pub struct ChainState {
    config: BitConfig,
    step: u64,
    rng: SimRng,
}

impl ChainState {
    /// Chain started from an exact draw of the stationary measure.
    pub fn stationary(num_bits: usize, measure: &ProductMeasure, mut rng: SimRng) -> Self {
        let config = sample_bits(measure, num_bits, &mut rng);
        Self { config, step: 0, rng }
    }

    pub fn from_config(config: BitConfig, rng: SimRng) -> Self {
        Self { config, step: 0, rng }
    }

    pub fn config(&self) -> &BitConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One heat-bath update: a uniformly chosen bit is redrawn from `pi_p`
    /// regardless of its current value. Returns the chosen bit and whether
    /// its value changed.
    pub fn step_discrete(&mut self, measure: &ProductMeasure) -> (usize, bool) {
        let n = self.config.len();
        let i = self.rng.gen_range(0..n);
        let open = measure.sample_bit(&mut self.rng);
        let changed = self.config.is_open(i) != open;
        self.config.set_open(i, open);
        self.step += 1;
        (i, changed)
    }
}

/// Keeps each bit with probability `1 - eps` and otherwise redraws it from
/// `pi_p`. With `eps = 1 - exp(-t)` the pair `(x, output)` has the law of
/// the continuous-time chain at times `0` and `t`.
pub fn noise_perturb<R: Rng + ?Sized>(
    config: &BitConfig,
    eps: f64,
    measure: &ProductMeasure,
    rng: &mut R,
) -> Result<BitConfig> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(invalid("eps", format!("{eps} is not in [0,1]")));
    }
    let mut out = config.clone();
    noise_perturb_in_place(&mut out, eps, measure, rng);
    Ok(out)
}

pub(crate) fn noise_perturb_in_place<R: Rng + ?Sized>(
    config: &mut BitConfig,
    eps: f64,
    measure: &ProductMeasure,
    rng: &mut R,
) {
    if eps == 0.0 {
        return;
    }
    for i in 0..config.len() {
        if eps == 1.0 || rng.gen_bool(eps) {
            let open = measure.sample_bit(rng);
            config.set_open(i, open);
        }
    }
}

/// `1 - exp(-t)`, the resampling probability matching continuous time `t`.
pub fn noise_for_time(t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("{t} is not a nonnegative time")));
    }
    Ok(-(-t).exp_m1())
}

/// Run provenance carried into CSV headers.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMeta {
    pub lattice: LatticeDescriptor,
    pub p: f64,
    pub seed: u64,
    pub steps: usize,
}

/// Observable values `f(Z_0), ..., f(Z_{T-1})` along a stationary chain.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub meta: SeriesMeta,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Single-column CSV. `extra_header` lines are written as `#` comments
    /// after the provenance line.
    pub fn write_csv<W: Write>(&self, mut out: W, extra_header: &[String]) -> std::io::Result<()> {
        let lattice = serde_json::to_string(&self.meta.lattice).expect("descriptor serializes");
        writeln!(
            out,
            "# lattice={lattice} p={} seed={} steps={}",
            self.meta.p, self.meta.seed, self.meta.steps
        )?;
        for line in extra_header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "value")?;
        for v in &self.values {
            writeln!(out, "{v}")?;
        }
        Ok(())
    }
}

/// Simulates `steps` values of `observable` along discrete-time dynamical
/// percolation started from the stationary measure. The observable must be a
/// deterministic function of the configuration; it is re-evaluated only when
/// an update changes a bit.
pub fn run_observable_series<O: Observable + ?Sized>(
    lattice: &Lattice,
    measure: &ProductMeasure,
    observable: &mut O,
    steps: usize,
    seed: u64,
) -> Result<TimeSeries> {
    run_replica_series(lattice, measure, observable, steps, seed, 0)
}

/// As [`run_observable_series`], on replica stream `replica` of `seed`.
pub fn run_replica_series<O: Observable + ?Sized>(
    lattice: &Lattice,
    measure: &ProductMeasure,
    observable: &mut O,
    steps: usize,
    seed: u64,
    replica: u64,
) -> Result<TimeSeries> {
    if steps < 1 {
        return Err(invalid("steps", "need at least one step"));
    }
    if lattice.num_edges() == 0 {
        return Err(invalid("lattice", "lattice has no edges"));
    }
    let mut chain = ChainState::stationary(lattice.num_edges(), measure, replica_rng(seed, replica));
    let mut values = Vec::with_capacity(steps);
    let mut current = observable.eval(chain.config());
    values.push(current);
    for _ in 1..steps {
        if chain.step_discrete(measure).1 {
            current = observable.eval(chain.config());
        }
        values.push(current);
    }
    Ok(TimeSeries {
        values,
        meta: SeriesMeta {
            lattice: lattice.descriptor(),
            p: measure.p(),
            seed,
            steps,
        },
    })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::observable::RootClusterSize;

    /// Exact one-step transition matrix of the heat-bath chain on masks.
    fn transition_matrix(n: usize, m: &ProductMeasure) -> Vec<Vec<f64>> {
        let size = 1usize << n;
        let mut p = vec![vec![0.0; size]; size];
        for (x, row) in p.iter_mut().enumerate() {
            for i in 0..n {
                for open in [false, true] {
                    let y = if open { x | 1 << i } else { x & !(1 << i) };
                    row[y] += m.bit_prob(open) / n as f64;
                }
            }
        }
        p
    }

    /// Exact `exp(tQ)` with `Q = |B|(P - I)`, by eigen-decomposition per bit:
    /// each bit independently keeps its value with probability `e^{-t}`.
    fn continuous_pair_law(n: usize, m: &ProductMeasure, t: f64) -> Vec<Vec<f64>> {
        let size = 1usize << n;
        let keep = (-t).exp();
        let mut law = vec![vec![0.0; size]; size];
        for x in 0..size {
            let px = m.mask_prob(x as u64, n);
            for y in 0..size {
                let mut k = 1.0;
                for i in 0..n {
                    let (xi, yi) = (x >> i & 1 == 1, y >> i & 1 == 1);
                    k *= keep * if xi == yi { 1.0 } else { 0.0 } + (1.0 - keep) * m.bit_prob(yi);
                }
                law[x][y] = px * k;
            }
        }
        law
    }

    #[test]
    fn one_bit_heat_bath_forgets_start() {
        let m = ProductMeasure::new(0.3).unwrap();
        let trials = 100_000;
        for start in [BitConfig::all_open(1), BitConfig::all_closed(1)] {
            let mut open = 0;
            for r in 0..trials {
                let mut c = ChainState::from_config(start.clone(), replica_rng(3, r));
                c.step_discrete(&m);
                assert_eq!(c.step_count(), 1);
                open += c.config().is_open(0) as usize;
            }
            let sigma = (0.3f64 * 0.7 / trials as f64).sqrt();
            assert!((open as f64 / trials as f64 - 0.3).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn two_bit_transition_frequency() {
        // From (+,+) the chain moves to (+,-) with probability 1/2 * 1/2 = 1/4.
        let m = ProductMeasure::new(0.5).unwrap();
        let exact = transition_matrix(2, &m)[0b11][0b01];
        assert!((exact - 0.25).abs() < 1e-15);
        let mut chain = ChainState::from_config(BitConfig::all_open(2), replica_rng(17, 0));
        let (mut from, mut hits) = (0usize, 0usize);
        for _ in 0..1_000_000 {
            let before = chain.config().to_mask();
            chain.step_discrete(&m);
            if before == 0b11 {
                from += 1;
                hits += (chain.config().to_mask() == 0b01) as usize;
            }
        }
        let freq = hits as f64 / from as f64;
        let sigma = (0.25f64 * 0.75 / from as f64).sqrt();
        assert!((freq - 0.25).abs() < 3.0 * sigma, "{freq} over {from}");
    }

    #[test]
    fn stationary_measure_is_invariant() {
        for &p in &[0.2, 0.5, 0.9] {
            let m = ProductMeasure::new(p).unwrap();
            for n in 1..=4 {
                let size = 1usize << n;
                let pm = transition_matrix(n, &m);
                for y in 0..size {
                    let mass: f64 = (0..size).map(|x| m.mask_prob(x as u64, n) * pm[x][y]).sum();
                    assert!((mass - m.mask_prob(y as u64, n)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn time_averaged_bit_mean() {
        let p = 0.3;
        let m = ProductMeasure::new(p).unwrap();
        let lattice = Lattice::binary_tree(1).unwrap();
        let mut bit = |c: &BitConfig| c.get(0) as f64;
        let series = run_observable_series(&lattice, &m, &mut bit, 1_000_000, 23).unwrap();
        let mean = series.values.iter().sum::<f64>() / series.len() as f64;
        // The bit's exact integrated autocorrelation time is |B| - 1/2.
        let var = 1.0 - (2.0 * p - 1.0f64).powi(2);
        let sigma = (2.0 * 1.5 * var / series.len() as f64).sqrt();
        assert!((mean - (2.0 * p - 1.0)).abs() < 3.0 * sigma, "{mean}");
    }

    #[test]
    fn noise_edge_cases() {
        let m = ProductMeasure::new(0.4).unwrap();
        let x = BitConfig::new(vec![1, -1, 1, 1, -1]).unwrap();
        let mut rng = replica_rng(1, 0);
        assert_eq!(noise_perturb(&x, 0.0, &m, &mut rng).unwrap(), x);
        assert!(noise_perturb(&x, 1.5, &m, &mut rng).is_err());
        assert!(noise_perturb(&x, -0.1, &m, &mut rng).is_err());
        // eps = 1 ignores the input: same stream gives the same output for any input.
        let a = noise_perturb(&x, 1.0, &m, &mut replica_rng(2, 0)).unwrap();
        let b = noise_perturb(&BitConfig::all_closed(5), 1.0, &m, &mut replica_rng(2, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_marginal_is_stationary() {
        let p = 0.35;
        let m = ProductMeasure::new(p).unwrap();
        let mut rng = replica_rng(4, 0);
        let draws = 100_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let x = sample_bits(&m, 1, &mut rng);
            total += noise_perturb(&x, 0.6, &m, &mut rng).unwrap().get(0) as f64;
        }
        let mean = total / draws as f64;
        let sigma = ((1.0 - (2.0 * p - 1.0f64).powi(2)) / draws as f64).sqrt();
        assert!((mean - (2.0 * p - 1.0)).abs() < 3.0 * sigma);
    }

    #[test]
    fn noise_pair_matches_continuous_kernel() {
        let m = ProductMeasure::new(0.5).unwrap();
        let t = 0.7;
        let eps = noise_for_time(t).unwrap();
        let law = continuous_pair_law(2, &m, t);
        let total: f64 = law.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let pairs = 1_000_000;
        let mut counts = [[0usize; 4]; 4];
        let mut rng = replica_rng(29, 0);
        for _ in 0..pairs {
            let x = sample_bits(&m, 2, &mut rng);
            let y = noise_perturb(&x, eps, &m, &mut rng).unwrap();
            counts[x.to_mask() as usize][y.to_mask() as usize] += 1;
        }
        for x in 0..4 {
            for y in 0..4 {
                let expect = law[x][y];
                let freq = counts[x][y] as f64 / pairs as f64;
                let sigma = (expect * (1.0 - expect) / pairs as f64).sqrt();
                assert!((freq - expect).abs() < 3.0 * sigma, "({x},{y}) {freq} vs {expect}");
            }
        }
    }

    #[test]
    fn series_is_reproducible() {
        let m = ProductMeasure::new(0.5).unwrap();
        let lattice = Lattice::binary_tree(2).unwrap();
        let a = run_observable_series(&lattice, &m, &mut RootClusterSize::new(&lattice), 5000, 77).unwrap();
        let b = run_observable_series(&lattice, &m, &mut RootClusterSize::new(&lattice), 5000, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5000);
        let mut csv = Vec::new();
        a.write_csv(&mut csv, &[]).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("# lattice={\"kind\":\"tree\",\"depth\":2} p=0.5 seed=77 steps=5000\nvalue\n"));
        assert_eq!(text.lines().count(), 5002);
    }
}
