use rand::distributions::{Distribution, WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Querier;
use crate::bits::{sample_bits, BitConfig, ProductMeasure};
use crate::error::{invalid, Error, Result};
use crate::observable::Observable;
use crate::rng::replica_rng;
use crate::spectral::{table_moments, DEFAULT_ENUMERATION_CAP};

/// Revealment and predictability of a plan, with Monte Carlo errors when
/// estimated by sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevealmentReport {
    pub delta: f64,
    pub epsilon: Option<f64>,
    pub per_bit: Vec<f64>,
    pub se: Option<ReportSe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSe {
    pub delta: f64,
    pub epsilon: Option<f64>,
    pub per_bit: Vec<f64>,
}

impl RevealmentReport {
    /// Bit attaining the revealment.
    pub fn argmax(&self) -> usize {
        self.per_bit
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (i, &v)| if v > best.1 { (i, v) } else { best },
            )
            .0
    }
}

/// One leaf of a plan's decision process: record, revealed bits, and their
/// values. `weight` is `P(record) * pi(x_J)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryEvent {
    pub record: usize,
    pub weight: f64,
    pub revealed: u64,
    pub values: u64,
}

fn check_bits(num_bits: usize) -> Result<()> {
    if num_bits > DEFAULT_ENUMERATION_CAP {
        return Err(Error::CapExceeded {
            bits: num_bits,
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    Ok(())
}

/// All distinct `(record, J, x_J)` outcomes of the plan. Fails if the
/// revealed set depends on bits outside it, since the weights would then
/// not sum to one.
pub fn enumerate_events(plan: &dyn Querier, measure: &ProductMeasure) -> Result<Vec<QueryEvent>> {
    let n = plan.num_bits();
    check_bits(n)?;
    let mut events = Vec::new();
    for (record, pr) in plan.record_probs().into_iter().enumerate() {
        let mut keys: Vec<(u64, u64)> = (0..1u64 << n)
            .into_par_iter()
            .map(|x| {
                let j = plan
                    .query(record, &BitConfig::from_mask(x, n))
                    .iter()
                    .fold(0u64, |m, &i| m | 1 << i);
                (j, x & j)
            })
            .collect();
        keys.par_sort_unstable();
        keys.dedup();
        events.extend(keys.into_iter().map(|(revealed, values)| {
            let weight = (0..n)
                .filter(|i| revealed >> i & 1 == 1)
                .map(|i| measure.bit_prob(values >> i & 1 == 1))
                .product::<f64>();
            QueryEvent {
                record,
                weight: pr * weight,
                revealed,
                values,
            }
        }));
    }
    let total: f64 = events.iter().map(|e| e.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(
            "plan",
            format!("revealed sets depend on unrevealed bits (event mass {total})"),
        ));
    }
    Ok(events)
}

/// Calls `visit(y, p)` for every completion `y` of the event with its
/// conditional probability.
fn for_each_completion(event: &QueryEvent, num_bits: usize, measure: &ProductMeasure, mut visit: impl FnMut(u64, f64)) {
    let full = if num_bits == 64 {
        u64::MAX
    } else {
        (1u64 << num_bits) - 1
    };
    let free = full & !event.revealed;
    let mut sub = free;
    loop {
        let p = (0..num_bits)
            .filter(|i| free >> i & 1 == 1)
            .map(|i| measure.bit_prob(sub >> i & 1 == 1))
            .product::<f64>();
        visit(event.values | sub, p);
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & free;
    }
}

/// Mean and variance under `pi` of `f_{J|x_J}`.
pub fn conditional_moments(table: &[f64], num_bits: usize, measure: &ProductMeasure, event: &QueryEvent) -> (f64, f64) {
    let mut mean = 0.0;
    for_each_completion(event, num_bits, measure, |y, p| mean += p * table[y as usize]);
    let mut var = 0.0;
    for_each_completion(event, num_bits, measure, |y, p| {
        let d = table[y as usize] - mean;
        var += p * d * d;
    });
    (mean, var)
}

fn per_bit_from_events(events: &[QueryEvent], num_bits: usize) -> Vec<f64> {
    let mut per_bit = vec![0.0; num_bits];
    for e in events {
        for (i, slot) in per_bit.iter_mut().enumerate() {
            if e.revealed >> i & 1 == 1 {
                *slot += e.weight;
            }
        }
    }
    per_bit
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Exact revealment by enumeration of records and configurations.
pub fn revealment_exact(plan: &dyn Querier, measure: &ProductMeasure) -> Result<RevealmentReport> {
    let events = enumerate_events(plan, measure)?;
    let per_bit = per_bit_from_events(&events, plan.num_bits());
    Ok(RevealmentReport {
        delta: max_of(&per_bit),
        epsilon: None,
        per_bit,
        se: None,
    })
}

/// Exact revealment and predictability of `f` given by its truth table.
pub fn exact_report(plan: &dyn Querier, measure: &ProductMeasure, table: &[f64]) -> Result<RevealmentReport> {
    let n = plan.num_bits();
    if table.len() != 1 << n {
        return Err(Error::LengthMismatch {
            expected: 1 << n,
            found: table.len(),
        });
    }
    let (_, var) = table_moments(table, n, measure);
    if table.iter().all(|v| *v == table[0]) || !(var > 0.0) {
        return Err(Error::ConstantObservable);
    }
    let events = enumerate_events(plan, measure)?;
    let residual: f64 = events
        .par_iter()
        .map(|e| e.weight * conditional_moments(table, n, measure, e).1)
        .collect::<Vec<_>>()
        .iter()
        .sum();
    let per_bit = per_bit_from_events(&events, n);
    Ok(RevealmentReport {
        delta: max_of(&per_bit),
        epsilon: Some(residual / var),
        per_bit,
        se: None,
    })
}

/// Returns `(E <g_{J|X_J}, h_{J|X_J}>, <g, h>)`.
pub fn random_inner_product(plan: &dyn Querier, measure: &ProductMeasure, g: &[f64], h: &[f64]) -> Result<(f64, f64)> {
    let n = plan.num_bits();
    if g.len() != 1 << n || h.len() != 1 << n {
        return Err(Error::LengthMismatch {
            expected: 1 << n,
            found: g.len().min(h.len()),
        });
    }
    let events = enumerate_events(plan, measure)?;
    let mut random = 0.0;
    for e in &events {
        let mut inner = 0.0;
        for_each_completion(e, n, measure, |y, p| inner += p * g[y as usize] * h[y as usize]);
        random += e.weight * inner;
    }
    let direct = (0..g.len()).map(|x| measure.mask_prob(x as u64, n) * g[x] * h[x]).sum();
    Ok((random, direct))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McOptions {
    pub runs: usize,
    pub batches: usize,
    pub seed: u64,
}

impl McOptions {
    pub fn new(runs: usize, seed: u64) -> Self {
        Self {
            runs,
            batches: 64,
            seed,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct BatchTally {
    runs: usize,
    counts: Vec<u64>,
    residual: f64,
    sum_f: f64,
    sum_f2: f64,
}

/// Monte Carlo revealment, and predictability when `f` is given.
///
/// Each outer sample draws `(record, X)`, runs the plan, and when `f` is
/// present completes the unrevealed bits twice independently; half the
/// squared difference is an unbiased estimate of the conditional variance.
/// The denominator is `variance` when supplied, else the sample variance of
/// `f(X)`.
pub fn monte_carlo_report<O>(
    plan: &dyn Querier,
    measure: &ProductMeasure,
    f: Option<&O>,
    variance: Option<f64>,
    options: McOptions,
) -> Result<RevealmentReport>
where
    O: Observable + Clone + Send + Sync,
{
    let McOptions { runs, batches, seed } = options;
    if batches < 2 || runs < 2 * batches {
        return Err(invalid("runs", "need at least two batches of two runs"));
    }
    let n = plan.num_bits();
    let probs = plan.record_probs();
    let records = WeightedIndex::new(&probs).map_err(|e| invalid("plan", e.to_string()))?;
    let tallies: Vec<BatchTally> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let count = runs / batches + usize::from(b < runs % batches);
            let mut rng = replica_rng(seed, b as u64);
            let mut f = f.cloned();
            let mut tally = BatchTally {
                runs: count,
                counts: vec![0; n],
                ..BatchTally::default()
            };
            let mut revealed = vec![false; n];
            for _ in 0..count {
                let record = records.sample(&mut rng);
                let x = sample_bits(measure, n, &mut rng);
                let j = plan.query(record, &x);
                for &i in &j {
                    tally.counts[i] += 1;
                }
                let Some(f) = f.as_mut() else { continue };
                for &i in &j {
                    revealed[i] = true;
                }
                let fx = f.eval(&x);
                tally.sum_f += fx;
                tally.sum_f2 += fx * fx;
                let mut pair = [0.0; 2];
                for slot in &mut pair {
                    let mut y = x.clone();
                    for i in (0..n).filter(|&i| !revealed[i]) {
                        y.set_open(i, measure.sample_bit(&mut rng));
                    }
                    *slot = f.eval(&y);
                }
                tally.residual += 0.5 * (pair[0] - pair[1]).powi(2);
                for &i in &j {
                    revealed[i] = false;
                }
            }
            tally
        })
        .collect();

    let total_runs = runs as f64;
    let mut counts = vec![0u64; n];
    for t in &tallies {
        for (c, v) in counts.iter_mut().zip(&t.counts) {
            *c += v;
        }
    }
    let per_bit: Vec<f64> = counts.iter().map(|&c| c as f64 / total_runs).collect();
    let per_bit_se: Vec<f64> = per_bit.iter().map(|&q| (q * (1.0 - q) / total_runs).sqrt()).collect();
    let best = per_bit
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
        .0;

    let (epsilon, epsilon_se) = if f.is_some() {
        let sum_f: f64 = tallies.iter().map(|t| t.sum_f).sum();
        let sum_f2: f64 = tallies.iter().map(|t| t.sum_f2).sum();
        let mean = sum_f / total_runs;
        let var = match variance {
            Some(v) => v,
            None => (sum_f2 / total_runs - mean * mean) * total_runs / (total_runs - 1.0),
        };
        if !(var > 0.0) {
            return Err(Error::ConstantObservable);
        }
        let residual: f64 = tallies.iter().map(|t| t.residual).sum();
        let ratios: Vec<f64> = tallies.iter().map(|t| t.residual / t.runs as f64 / var).collect();
        let m = ratios.iter().sum::<f64>() / batches as f64;
        let spread = ratios.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
        (
            Some(residual / total_runs / var),
            Some((spread / batches as f64).sqrt()),
        )
    } else {
        (None, None)
    };
    Ok(RevealmentReport {
        delta: per_bit[best],
        epsilon,
        se: Some(ReportSe {
            delta: per_bit_se[best],
            epsilon: epsilon_se,
            per_bit: per_bit_se,
        }),
        per_bit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{basis_eval_mask, BitSubset};
    use crate::lattice::Lattice;
    use crate::observable::RootClusterSize;
    use crate::query::{ClusterExplorer, FullReveal, MixturePlan, QueryTree, QueryTreeSpec};
    use crate::spectral::truth_table;

    fn two_tree_plan() -> MixturePlan {
        MixturePlan::uniform(2, vec![QueryTree::leaf(0, 2).unwrap(), QueryTree::leaf(1, 2).unwrap()]).unwrap()
    }

    fn psi_table(subset: u64, n: usize, m: &ProductMeasure) -> Vec<f64> {
        (0..1u64 << n).map(|x| basis_eval_mask(subset, x, m)).collect()
    }

    #[test]
    fn two_tree_example() {
        let m = ProductMeasure::new(0.5).unwrap();
        let r = exact_report(&two_tree_plan(), &m, &psi_table(1, 2, &m)).unwrap();
        assert!((r.delta - 0.5).abs() < 1e-15);
        assert!((r.epsilon.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(r.per_bit, vec![0.5, 0.5]);
    }

    #[test]
    fn full_reveal_has_no_residual() {
        let m = ProductMeasure::new(0.3).unwrap();
        let plan = FullReveal { num_bits: 3 };
        let r = exact_report(&plan, &m, &psi_table(0b101, 3, &m)).unwrap();
        assert!((r.delta - 1.0).abs() < 1e-12);
        assert!(r.epsilon.unwrap().abs() < 1e-15);
    }

    #[test]
    fn cluster_explorer_determines_root_cluster() {
        let lattice = Lattice::binary_tree(2).unwrap();
        let m = ProductMeasure::new(0.5).unwrap();
        let table = truth_table(&RootClusterSize::new(&lattice), 6, 22).unwrap();
        let r = exact_report(&ClusterExplorer::new(&lattice), &m, &table).unwrap();
        assert!(r.epsilon.unwrap().abs() < 1e-15);
        assert!((r.delta - 1.0).abs() < 1e-12);
        // Child edges of a root edge are queried iff that edge is open.
        assert!((r.per_bit[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn adaptivity_violation_is_detected() {
        struct Peeking;
        impl Querier for Peeking {
            fn num_bits(&self) -> usize {
                2
            }
            fn record_probs(&self) -> Vec<f64> {
                vec![1.0]
            }
            fn query(&self, _: usize, x: &BitConfig) -> Vec<usize> {
                if x.is_open(1) {
                    vec![0]
                } else {
                    vec![0, 1]
                }
            }
        }
        let m = ProductMeasure::new(0.5).unwrap();
        assert!(enumerate_events(&Peeking, &m).is_err());
    }

    #[test]
    fn inner_product_identity() {
        let m = ProductMeasure::new(0.4).unwrap();
        let spec = QueryTreeSpec {
            bit: 1,
            plus: Some(Box::new(QueryTreeSpec::leaf(0))),
            minus: Some(Box::new(QueryTreeSpec {
                bit: 2,
                plus: Some(Box::new(QueryTreeSpec::leaf(0))),
                minus: None,
            })),
        };
        let plan = MixturePlan::new(
            3,
            vec![
                (QueryTree::from_spec(&spec, 3).unwrap(), 0.6),
                (QueryTree::leaf(2, 3).unwrap(), 0.4),
            ],
        )
        .unwrap();
        let g: Vec<f64> = (0..8).map(|x| (x * x) as f64 - 3.0).collect();
        let h: Vec<f64> = (0..8).map(|x| ((x * 7) % 5) as f64).collect();
        let (random, direct) = random_inner_product(&plan, &m, &g, &h).unwrap();
        assert!((random - direct).abs() < 1e-12);
    }

    #[test]
    fn mc_agrees_with_exact() {
        let lattice = Lattice::binary_tree(2).unwrap();
        let m = ProductMeasure::new(0.5).unwrap();
        let f = RootClusterSize::new(&lattice);
        let table = truth_table(&f, 6, 22).unwrap();
        let trees = (0..6).map(|e| QueryTree::leaf(e, 6).unwrap()).collect();
        let plan = MixturePlan::uniform(6, trees).unwrap();
        let exact = exact_report(&plan, &m, &table).unwrap();
        let mc = monte_carlo_report(&plan, &m, Some(&f), None, McOptions::new(200_000, 4)).unwrap();
        let se = mc.se.as_ref().unwrap();
        for i in 0..6 {
            assert!((mc.per_bit[i] - exact.per_bit[i]).abs() < 4.0 * se.per_bit[i]);
        }
        let (e, s) = (mc.epsilon.unwrap(), se.epsilon.unwrap());
        assert!(
            (e - exact.epsilon.unwrap()).abs() < 4.0 * s,
            "{e} +- {s} vs {:?}",
            exact.epsilon
        );
        let again = monte_carlo_report(&plan, &m, Some(&f), None, McOptions::new(200_000, 4)).unwrap();
        assert_eq!(mc, again);
    }

    #[test]
    fn report_json_shape() {
        let m = ProductMeasure::new(0.5).unwrap();
        let r = revealment_exact(&two_tree_plan(), &m).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["delta", "epsilon", "per_bit", "se"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(r.argmax(), 0);
        let _ = BitSubset::empty();
    }
}
