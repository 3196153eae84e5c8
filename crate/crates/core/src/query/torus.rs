//! Two-stage breadth-first query procedure for the origin cluster on a torus.
//!
//! Stage 1 explores, inside the sup-norm cube `B_r`, every component of the
//! induced `Z^d` subgraph that touches the cube boundary. Seeds are boundary
//! vertices in lexicographic order. If the origin is reached, stage 2 grows
//! the origin cluster over the whole torus, so its size is determined.

use std::collections::VecDeque;

use crate::bits::BitConfig;
use crate::error::{Error, Result};
use crate::lattice::{Incidence, Lattice, LatticeKind, TorusCodec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TorusOutcome {
    /// The origin reached the cube boundary; its cluster has this size.
    Determined { cluster_size: usize },
    /// The revealed closed edges separate the origin from the boundary.
    NotConnected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TorusQuery {
    /// Queried edge ids in query order.
    pub queried: Vec<usize>,
    /// Number of leading entries of `queried` made in stage 1.
    pub stage1_len: usize,
    pub outcome: TorusOutcome,
}

/// Geometry of `B_r` inside a torus, shared by all queries at one radius.
#[derive(Debug, Clone)]
pub struct CubeGeometry {
    radius: usize,
    dim: usize,
    in_cube: Vec<bool>,
    in_edges: Vec<bool>,
    boundary: Vec<usize>,
}

impl CubeGeometry {
    pub fn new(lattice: &Lattice, radius: usize) -> Result<Self> {
        let (dim, side) = match lattice.kind() {
            LatticeKind::Torus { dim, side } => (dim, side),
            _ => return Err(Error::WrongLatticeKind { expected: "torus" }),
        };
        if radius < 1 || 2 * radius >= side {
            return Err(Error::RadiusOutOfRange { radius, side });
        }
        let codec = TorusCodec { dim, side };
        let norms: Vec<usize> = (0..lattice.num_vertices()).map(|v| codec.sup_norm(v)).collect();
        let in_cube: Vec<bool> = norms.iter().map(|&n| n <= radius).collect();
        let high = codec.high();
        let mut coords = vec![0i64; dim];
        let in_edges = (0..lattice.num_edges())
            .map(|e| {
                let (u, v) = lattice.edge(e);
                codec.decode_into(u, &mut coords);
                // Wrap-around edges are not edges of Z^d.
                in_cube[u] && in_cube[v] && coords[e % dim] != high
            })
            .collect();
        // Vertex ids are lexicographic ranks, so id order is lexicographic.
        let boundary = (0..lattice.num_vertices()).filter(|&v| norms[v] == radius).collect();
        Ok(Self {
            radius,
            dim,
            in_cube,
            in_edges,
            boundary,
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains_vertex(&self, v: usize) -> bool {
        self.in_cube[v]
    }

    /// Whether edge `e` belongs to `E_r`.
    pub fn contains_edge(&self, e: usize) -> bool {
        self.in_edges[e]
    }

    /// Boundary vertices in lexicographic order.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }
}

const UNKNOWN: u8 = 2;

/// Runs both stages at radius `r`.
pub fn torus_query(lattice: &Lattice, r: usize, config: &BitConfig) -> Result<TorusQuery> {
    lattice.check_config(config)?;
    let geometry = CubeGeometry::new(lattice, r)?;
    Ok(torus_query_with(lattice, &geometry, config))
}

/// As [`torus_query`] with precomputed cube geometry. The config length is
/// not checked.
pub fn torus_query_with(lattice: &Lattice, geometry: &CubeGeometry, config: &BitConfig) -> TorusQuery {
    run_stages(lattice, geometry, config, |v| lattice.neighbors(v).iter())
}

/// Both stages, visiting the edges at each vertex in the order `neighbors`
/// yields them.
fn run_stages<'l, F, I>(lattice: &Lattice, geometry: &CubeGeometry, config: &BitConfig, neighbors: F) -> TorusQuery
where
    F: Fn(usize) -> I,
    I: Iterator<Item = &'l Incidence>,
{
    let mut state = vec![UNKNOWN; lattice.num_edges()];
    let mut queried = Vec::new();
    let reveal = |e: usize, state: &mut [u8], queried: &mut Vec<usize>| -> bool {
        if state[e] == UNKNOWN {
            state[e] = u8::from(config.is_open(e));
            queried.push(e);
        }
        state[e] == 1
    };

    // Stage 1: component labels inside the cube.
    let mut component = vec![usize::MAX; lattice.num_vertices()];
    let mut queue = VecDeque::new();
    for (label, &seed) in geometry.boundary().iter().enumerate() {
        if component[seed] != usize::MAX {
            continue;
        }
        component[seed] = label;
        queue.push_back(seed);
        while let Some(v) = queue.pop_front() {
            for inc in neighbors(v) {
                if !geometry.contains_edge(inc.edge) {
                    continue;
                }
                if reveal(inc.edge, &mut state, &mut queried) && component[inc.neighbor] == usize::MAX {
                    component[inc.neighbor] = label;
                    queue.push_back(inc.neighbor);
                }
            }
        }
    }
    let stage1_len = queried.len();
    let origin = lattice.root();
    let origin_label = component[origin];
    if origin_label == usize::MAX {
        return TorusQuery {
            queried,
            stage1_len,
            outcome: TorusOutcome::NotConnected,
        };
    }

    // Stage 2: restart from the boundary vertices joined to the origin,
    // now over every torus edge.
    let mut in_cluster = vec![false; lattice.num_vertices()];
    let mut size = 0;
    for v in 0..lattice.num_vertices() {
        if component[v] == origin_label {
            in_cluster[v] = true;
            size += 1;
        }
    }
    for &seed in geometry.boundary() {
        if component[seed] == origin_label {
            queue.push_back(seed);
        }
    }
    while let Some(v) = queue.pop_front() {
        for inc in neighbors(v) {
            if reveal(inc.edge, &mut state, &mut queried) && !in_cluster[inc.neighbor] {
                in_cluster[inc.neighbor] = true;
                size += 1;
                queue.push_back(inc.neighbor);
            }
        }
    }
    TorusQuery {
        queried,
        stage1_len,
        outcome: TorusOutcome::Determined { cluster_size: size },
    }
}

/// Whether the origin can reach the cube boundary using only edges of `E_r`
/// that are unqueried or queried open. False on a not-connected outcome
/// means the queried closed edges form a cut set.
pub fn reachable_avoiding_closed(
    lattice: &Lattice,
    geometry: &CubeGeometry,
    config: &BitConfig,
    queried: &[usize],
) -> bool {
    let mut known_closed = vec![false; lattice.num_edges()];
    for &e in queried {
        known_closed[e] = !config.is_open(e);
    }
    let mut seen = vec![false; lattice.num_vertices()];
    let origin = lattice.root();
    seen[origin] = true;
    let mut queue = VecDeque::from([origin]);
    let on_boundary = |v: usize| geometry.boundary().binary_search(&v).is_ok();
    while let Some(v) = queue.pop_front() {
        if on_boundary(v) {
            return true;
        }
        for inc in lattice.neighbors(v) {
            if geometry.contains_edge(inc.edge) && !known_closed[inc.edge] && !seen[inc.neighbor] {
                seen[inc.neighbor] = true;
                queue.push_back(inc.neighbor);
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ClusterCounter;

    #[test]
    fn all_closed_small_torus() {
        let lattice = Lattice::torus(2, 4).unwrap();
        let q = torus_query(&lattice, 1, &BitConfig::all_closed(32)).unwrap();
        assert_eq!(q.outcome, TorusOutcome::NotConnected);
        let mut j = q.queried.clone();
        j.sort_unstable();
        let geometry = CubeGeometry::new(&lattice, 1).unwrap();
        let expected: Vec<usize> = (0..32).filter(|&e| geometry.contains_edge(e)).collect();
        assert_eq!(expected.len(), 12);
        assert_eq!(j, expected);
    }

    #[test]
    fn all_open_small_torus() {
        let lattice = Lattice::torus(2, 4).unwrap();
        let q = torus_query(&lattice, 1, &BitConfig::all_open(32)).unwrap();
        assert_eq!(q.outcome, TorusOutcome::Determined { cluster_size: 16 });
        let mut j = q.queried.clone();
        j.sort_unstable();
        assert_eq!(j, (0..32).collect::<Vec<_>>());
        assert_eq!(q.stage1_len, 12);
    }

    #[test]
    fn side_three_excludes_wrap_edges() {
        let lattice = Lattice::torus(2, 3).unwrap();
        let geometry = CubeGeometry::new(&lattice, 1).unwrap();
        assert_eq!((0..18).filter(|&e| geometry.contains_edge(e)).count(), 12);
        assert_eq!(geometry.boundary().len(), 8);
    }

    #[test]
    fn radius_checks() {
        let lattice = Lattice::torus(2, 4).unwrap();
        assert_eq!(
            torus_query(&lattice, 2, &BitConfig::all_open(32)),
            Err(Error::RadiusOutOfRange { radius: 2, side: 4 })
        );
        assert!(torus_query(&lattice, 0, &BitConfig::all_open(32)).is_err());
        let tree = Lattice::binary_tree(2).unwrap();
        assert_eq!(
            torus_query(&tree, 1, &BitConfig::all_open(6)),
            Err(Error::WrongLatticeKind { expected: "torus" })
        );
    }

    #[test]
    fn queried_set_ignores_neighbor_order() {
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};

        let lattice = Lattice::torus(2, 7).unwrap();
        let mut rng = crate::rng::SimRng::seed_from_u64(5);
        for r in 1..=3 {
            let geometry = CubeGeometry::new(&lattice, r).unwrap();
            // A fixed but arbitrary order per vertex.
            let orders: Vec<Vec<&Incidence>> = (0..lattice.num_vertices())
                .map(|v| {
                    let mut o: Vec<&Incidence> = lattice.neighbors(v).iter().collect();
                    o.shuffle(&mut rng);
                    o
                })
                .collect();
            for _ in 0..200 {
                let p = rng.gen_range(0.3..0.7);
                let m = crate::bits::ProductMeasure::new(p).unwrap();
                let x = crate::bits::sample_bits(&m, lattice.num_edges(), &mut rng);
                let a = torus_query_with(&lattice, &geometry, &x);
                let b = run_stages(&lattice, &geometry, &x, |v| orders[v].iter().copied());
                let c = run_stages(&lattice, &geometry, &x, |v| lattice.neighbors(v).iter().rev());
                let sorted = |q: &TorusQuery| {
                    let mut j = q.queried.clone();
                    j.sort_unstable();
                    j
                };
                assert_eq!(sorted(&a), sorted(&b));
                assert_eq!(sorted(&a), sorted(&c));
                assert_eq!(a.outcome, b.outcome);
                assert_eq!(a.outcome, c.outcome);
            }
        }
    }

    #[test]
    fn exhaustive_side_three() {
        // Every configuration of T^2_3: no double query, determined sizes are
        // exact, and non-connected outcomes carry a cut set.
        let lattice = Lattice::torus(2, 3).unwrap();
        let geometry = CubeGeometry::new(&lattice, 1).unwrap();
        let mut counter = ClusterCounter::new();
        for mask in 0..1u64 << 18 {
            let x = BitConfig::from_mask(mask, 18);
            let q = torus_query_with(&lattice, &geometry, &x);
            let mut j = q.queried.clone();
            j.sort_unstable();
            j.dedup();
            assert_eq!(j.len(), q.queried.len());
            match q.outcome {
                TorusOutcome::Determined { cluster_size } => {
                    assert_eq!(cluster_size, counter.root_cluster_size(&lattice, &x));
                }
                TorusOutcome::NotConnected => {
                    assert!(!reachable_avoiding_closed(&lattice, &geometry, &x, &q.queried));
                    assert_eq!(q.stage1_len, q.queried.len());
                }
            }
        }
    }
}
