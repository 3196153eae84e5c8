//! Randomized query procedures, revealment and predictability.
//!
//! A plan is a distribution over deterministic procedures, each identified
//! by a randomness record (a tree index, a radius, ...). Running a procedure
//! on a configuration yields the revealed set `J` in query order.

mod bounds;
mod measures;
mod torus;
mod tree;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::bits::BitConfig;
use crate::error::{invalid, Error, Result};
use crate::lattice::{Lattice, LatticeKind};

pub use bounds::{corollary_bounds, ss_bound_check, BoundSlack, CorollaryBounds};
pub use measures::{
    conditional_moments, enumerate_events, exact_report, monte_carlo_report, random_inner_product, revealment_exact,
    McOptions, QueryEvent, ReportSe, RevealmentReport,
};
pub use torus::{reachable_avoiding_closed, torus_query, torus_query_with, CubeGeometry, TorusOutcome, TorusQuery};
pub use tree::{QueryTree, QueryTreeSpec};

/// Default exponent in the radius cap `a = floor(L^kappa)`.
pub const DEFAULT_KAPPA: f64 = 0.24;

/// An adaptive bit-revealing procedure with finitely many randomness records.
pub trait Querier: Sync {
    fn num_bits(&self) -> usize;

    /// Probabilities of records `0..len`.
    fn record_probs(&self) -> Vec<f64>;

    /// Revealed bits in query order. Must depend only on the values of the
    /// bits it has already revealed.
    fn query(&self, record: usize, config: &BitConfig) -> Vec<usize>;
}

/// Finite mixture of explicit query trees.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePlan {
    num_bits: usize,
    trees: Vec<QueryTree>,
    probs: Vec<f64>,
}

impl MixturePlan {
    pub fn new(num_bits: usize, entries: Vec<(QueryTree, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("trees", "mixture needs at least one tree"));
        }
        if entries.iter().any(|(t, p)| t.num_bits() != num_bits || !(*p > 0.0)) {
            return Err(invalid(
                "trees",
                "trees must share the bit set and have positive probability",
            ));
        }
        let total: f64 = entries.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid("trees", format!("probabilities sum to {total}, not 1")));
        }
        let (trees, probs) = entries.into_iter().unzip();
        Ok(Self { num_bits, trees, probs })
    }

    pub fn uniform(num_bits: usize, trees: Vec<QueryTree>) -> Result<Self> {
        let p = 1.0 / trees.len() as f64;
        Self::new(num_bits, trees.into_iter().map(|t| (t, p)).collect())
    }

    pub fn trees(&self) -> &[QueryTree] {
        &self.trees
    }
}

impl Querier for MixturePlan {
    fn num_bits(&self) -> usize {
        self.num_bits
    }

    fn record_probs(&self) -> Vec<f64> {
        self.probs.clone()
    }

    fn query(&self, record: usize, config: &BitConfig) -> Vec<usize> {
        self.trees[record].query_path(config)
    }
}

/// Reveals every bit in id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FullReveal {
    pub num_bits: usize,
}

impl Querier for FullReveal {
    fn num_bits(&self) -> usize {
        self.num_bits
    }

    fn record_probs(&self) -> Vec<f64> {
        vec![1.0]
    }

    fn query(&self, _record: usize, _config: &BitConfig) -> Vec<usize> {
        (0..self.num_bits).collect()
    }
}

/// Breadth-first exploration of the root cluster: every edge incident to a
/// reached vertex is queried once. Determines the root cluster exactly.
#[derive(Debug, Clone, Copy)]
pub struct ClusterExplorer<'a> {
    lattice: &'a Lattice,
}

impl<'a> ClusterExplorer<'a> {
    pub fn new(lattice: &'a Lattice) -> Self {
        Self { lattice }
    }
}

impl Querier for ClusterExplorer<'_> {
    fn num_bits(&self) -> usize {
        self.lattice.num_edges()
    }

    fn record_probs(&self) -> Vec<f64> {
        vec![1.0]
    }

    fn query(&self, _record: usize, config: &BitConfig) -> Vec<usize> {
        let lattice = self.lattice;
        let mut seen_edge = vec![false; lattice.num_edges()];
        let mut seen_vertex = vec![false; lattice.num_vertices()];
        let mut out = Vec::new();
        let root = lattice.root();
        seen_vertex[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for inc in lattice.neighbors(v) {
                if seen_edge[inc.edge] {
                    continue;
                }
                seen_edge[inc.edge] = true;
                out.push(inc.edge);
                if config.is_open(inc.edge) && !seen_vertex[inc.neighbor] {
                    seen_vertex[inc.neighbor] = true;
                    queue.push_back(inc.neighbor);
                }
            }
        }
        out
    }
}

/// The two-stage torus procedure with radius uniform on `1..=a`.
#[derive(Debug, Clone)]
pub struct TorusQuerier<'a> {
    lattice: &'a Lattice,
    geometries: Vec<CubeGeometry>,
}

impl<'a> TorusQuerier<'a> {
    /// Radius cap `a = floor(L^kappa)`, which must satisfy `1 <= a < L/2`.
    pub fn new(lattice: &'a Lattice, kappa: f64) -> Result<Self> {
        let side = match lattice.kind() {
            LatticeKind::Torus { side, .. } => side,
            _ => return Err(Error::WrongLatticeKind { expected: "torus" }),
        };
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(invalid("kappa", format!("must lie in (0, 1), got {kappa}")));
        }
        Self::with_radius_cap(lattice, radius_cap(side, kappa))
    }

    pub fn with_radius_cap(lattice: &'a Lattice, cap: usize) -> Result<Self> {
        if cap == 0 {
            return Err(invalid("radius_cap", "must be at least 1"));
        }
        let geometries = (1..=cap)
            .map(|r| CubeGeometry::new(lattice, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lattice, geometries })
    }

    pub fn radius_cap(&self) -> usize {
        self.geometries.len()
    }

    pub fn geometry(&self, radius: usize) -> &CubeGeometry {
        &self.geometries[radius - 1]
    }

    /// Full result for radius `record + 1`.
    pub fn run(&self, record: usize, config: &BitConfig) -> TorusQuery {
        torus_query_with(self.lattice, &self.geometries[record], config)
    }
}

/// `floor(L^kappa)`, guarded against round-off at exact powers.
pub fn radius_cap(side: usize, kappa: f64) -> usize {
    let x = (side as f64).powf(kappa);
    (x * (1.0 + 1e-12)).floor() as usize
}

impl Querier for TorusQuerier<'_> {
    fn num_bits(&self) -> usize {
        self.lattice.num_edges()
    }

    fn record_probs(&self) -> Vec<f64> {
        let a = self.geometries.len();
        vec![1.0 / a as f64; a]
    }

    fn query(&self, record: usize, config: &BitConfig) -> Vec<usize> {
        self.run(record, config).queried
    }
}

/// Explicit query tree equivalent to one record of an algorithmic querier.
/// The tree has up to `2^|J|` nodes, so this is for small bit sets.
pub fn materialize(querier: &dyn Querier, record: usize) -> Result<QueryTree> {
    fn grow(querier: &dyn Querier, record: usize, known: &mut Vec<(usize, bool)>) -> Option<QueryTreeSpec> {
        let n = querier.num_bits();
        let mut config = BitConfig::all_closed(n);
        for &(bit, open) in known.iter() {
            config.set_open(bit, open);
        }
        let path = querier.query(record, &config);
        let &bit = path.get(known.len())?;
        let child = |open: bool, known: &mut Vec<(usize, bool)>| {
            known.push((bit, open));
            let spec = grow(querier, record, known).map(Box::new);
            known.pop();
            spec
        };
        let plus = child(true, known);
        let minus = child(false, known);
        Some(QueryTreeSpec { bit, plus, minus })
    }
    let spec = grow(querier, record, &mut Vec::new())
        .ok_or_else(|| Error::MalformedQueryTree("querier reveals no bits".into()))?;
    QueryTree::from_spec(&spec, querier.num_bits())
}

/// A probability-weighted tree in a JSON mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedTree {
    pub prob: f64,
    pub tree: QueryTreeSpec,
}

/// JSON description of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlanSpec {
    Mixture {
        trees: Vec<WeightedTree>,
    },
    FullReveal,
    ClusterBfs,
    TorusBfs {
        #[serde(default)]
        kappa: Option<f64>,
        #[serde(default)]
        radius_cap: Option<usize>,
    },
}

impl PlanSpec {
    pub fn build<'a>(&self, lattice: &'a Lattice) -> Result<Box<dyn Querier + 'a>> {
        let num_bits = lattice.num_edges();
        Ok(match self {
            PlanSpec::Mixture { trees } => {
                let entries = trees
                    .iter()
                    .map(|w| Ok((QueryTree::from_spec(&w.tree, num_bits)?, w.prob)))
                    .collect::<Result<Vec<_>>>()?;
                Box::new(MixturePlan::new(num_bits, entries)?)
            }
            PlanSpec::FullReveal => Box::new(FullReveal { num_bits }),
            PlanSpec::ClusterBfs => Box::new(ClusterExplorer::new(lattice)),
            PlanSpec::TorusBfs { kappa, radius_cap } => match radius_cap {
                Some(cap) => Box::new(TorusQuerier::with_radius_cap(lattice, *cap)?),
                None => Box::new(TorusQuerier::new(lattice, kappa.unwrap_or(DEFAULT_KAPPA))?),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_caps() {
        assert_eq!(radius_cap(8, 0.24), 1);
        assert_eq!(radius_cap(16, 0.24), 1);
        assert_eq!(radius_cap(32, 0.24), 2);
        assert_eq!(radius_cap(16, 0.25), 2);
        assert_eq!(radius_cap(16, 0.5), 4);
        assert_eq!(radius_cap(8, 0.5), 2);
        assert_eq!(radius_cap(32, 0.5), 5);
    }

    #[test]
    fn cluster_explorer_on_tree() {
        let lattice = Lattice::binary_tree(2).unwrap();
        let q = ClusterExplorer::new(&lattice);
        assert_eq!(q.query(0, &BitConfig::all_closed(6)), vec![0, 1]);
        assert_eq!(q.query(0, &BitConfig::all_open(6)), vec![0, 1, 2, 3, 4, 5]);
        // Only the left root edge open.
        assert_eq!(q.query(0, &BitConfig::from_mask(0b1, 6)), vec![0, 1, 2, 3]);
    }

    #[test]
    fn materialized_explorer_matches() {
        let lattice = Lattice::binary_tree(2).unwrap();
        let q = ClusterExplorer::new(&lattice);
        let tree = materialize(&q, 0).unwrap();
        for mask in 0..64 {
            let x = BitConfig::from_mask(mask, 6);
            assert_eq!(tree.query_path(&x), q.query(0, &x));
        }
    }

    #[test]
    fn plan_spec_json() {
        let lattice = Lattice::from_edges(3, vec![(0, 1), (1, 2)], 0).unwrap();
        let json = r#"{"kind":"mixture","trees":[{"prob":0.5,"tree":{"bit":0}},{"prob":0.5,"tree":{"bit":1}}]}"#;
        let spec: PlanSpec = serde_json::from_str(json).unwrap();
        let plan = spec.build(&lattice).unwrap();
        assert_eq!(plan.record_probs(), vec![0.5, 0.5]);
        let spec: PlanSpec = serde_json::from_str(r#"{"kind":"torus-bfs","kappa":0.5}"#).unwrap();
        assert!(spec.build(&lattice).is_err());
        let torus = Lattice::torus(2, 16).unwrap();
        assert_eq!(spec.build(&torus).unwrap().record_probs().len(), 4);
        let bad = r#"{"kind":"mixture","trees":[{"prob":0.7,"tree":{"bit":0}}]}"#;
        let spec: PlanSpec = serde_json::from_str(bad).unwrap();
        assert!(spec.build(&lattice).is_err());
    }

    #[test]
    fn torus_cap_must_fit() {
        let lattice = Lattice::torus(2, 8).unwrap();
        assert!(TorusQuerier::with_radius_cap(&lattice, 4).is_err());
        assert!(TorusQuerier::with_radius_cap(&lattice, 3).is_ok());
        assert!(TorusQuerier::with_radius_cap(&lattice, 0).is_err());
    }
}
