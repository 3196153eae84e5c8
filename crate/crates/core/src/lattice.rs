//! Edge-indexed graphs with a distinguished root vertex.
//!
//! Perfect binary trees store vertices in breadth-first order (root `0`,
//! children of `v` at `2v+1` and `2v+2`); edge `c - 1` joins child `c` to its
//! parent. Tori store vertices by lexicographic rank of their coordinates in
//! `[-L/2, L/2)^d`, and edge `rank * d + axis` joins a vertex to its
//! neighbour one step along `axis` (with wraparound).

use serde::{Deserialize, Serialize};

use crate::bits::BitConfig;
use crate::error::{invalid, Error, Result};

/// Serializable lattice description.
///
/// JSON forms: `{"kind":"tree","depth":n}`, `{"kind":"torus","d":d,"L":L}` and
/// `{"kind":"edges","vertices":v,"edges":[[a,b],...],"root":r}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LatticeDescriptor {
    Tree {
        depth: usize,
    },
    Torus {
        d: usize,
        #[serde(rename = "L")]
        side: usize,
    },
    Edges {
        vertices: usize,
        edges: Vec<(usize, usize)>,
        #[serde(default)]
        root: usize,
    },
}

impl LatticeDescriptor {
    pub fn build(&self) -> Result<Lattice> {
        match self {
            LatticeDescriptor::Tree { depth } => Lattice::binary_tree(*depth),
            LatticeDescriptor::Torus { d, side } => Lattice::torus(*d, *side),
            LatticeDescriptor::Edges { vertices, edges, root } => Lattice::from_edges(*vertices, edges.clone(), *root),
        }
    }
}

impl std::fmt::Display for LatticeDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LatticeDescriptor::Tree { depth } => write!(f, "tree(depth={depth})"),
            LatticeDescriptor::Torus { d, side } => write!(f, "torus(d={d},L={side})"),
            LatticeDescriptor::Edges { vertices, edges, .. } => write!(f, "edges(V={vertices},E={})", edges.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeKind {
    BinaryTree { depth: usize },
    Torus { dim: usize, side: usize },
    EdgeList,
}

/// A finite graph whose edges are the bits of the percolation configuration.
#[derive(Debug, Clone)]
pub struct Lattice {
    kind: LatticeKind,
    num_vertices: usize,
    edges: Vec<(usize, usize)>,
    root: usize,
    // CSR adjacency: neighbours of v are adj[offsets[v]..offsets[v+1]],
    // sorted by neighbour id.
    offsets: Vec<usize>,
    adj: Vec<Incidence>,
}

/// One entry of a vertex's adjacency list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub neighbor: usize,
    pub edge: usize,
}

impl Lattice {
    /// Perfect binary tree of the given depth (`depth >= 1`).
    pub fn binary_tree(depth: usize) -> Result<Self> {
        if depth < 1 {
            return Err(invalid("depth", "tree depth must be at least 1"));
        }
        if depth > 40 {
            return Err(invalid("depth", "tree depth above 40 cannot be materialized"));
        }
        let num_vertices = (1usize << (depth + 1)) - 1;
        let edges = (1..num_vertices).map(|c| ((c - 1) / 2, c)).collect();
        Ok(Self::assemble(
            LatticeKind::BinaryTree { depth },
            num_vertices,
            edges,
            0,
        ))
    }

    /// Discrete torus `T^d_L` with `d >= 1` and `L >= 3`.
    pub fn torus(dim: usize, side: usize) -> Result<Self> {
        if dim < 1 {
            return Err(invalid("d", "torus dimension must be at least 1"));
        }
        if side < 3 {
            return Err(invalid("L", "torus side must be at least 3"));
        }
        let num_vertices = side
            .checked_pow(dim as u32)
            .filter(|&n| n <= 1 << 28)
            .ok_or_else(|| invalid("L", "torus has too many vertices"))?;
        let codec = TorusCodec { dim, side };
        let mut edges = Vec::with_capacity(num_vertices * dim);
        let mut coords = vec![0i64; dim];
        for v in 0..num_vertices {
            codec.decode_into(v, &mut coords);
            for axis in 0..dim {
                let old = coords[axis];
                coords[axis] = codec.wrap(old + 1);
                edges.push((v, codec.encode(&coords)));
                coords[axis] = old;
            }
        }
        let origin = codec.encode(&vec![0; dim]);
        Ok(Self::assemble(
            LatticeKind::Torus { dim, side },
            num_vertices,
            edges,
            origin,
        ))
    }

    /// Arbitrary simple graph given by an explicit edge list.
    pub fn from_edges(num_vertices: usize, edges: Vec<(usize, usize)>, root: usize) -> Result<Self> {
        if num_vertices == 0 {
            return Err(invalid("vertices", "graph must have at least one vertex"));
        }
        if root >= num_vertices {
            return Err(invalid("root", format!("root {root} is not a vertex")));
        }
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &edges {
            if a >= num_vertices || b >= num_vertices {
                return Err(invalid("edges", format!("edge ({a},{b}) has an endpoint out of range")));
            }
            if a == b {
                return Err(invalid("edges", format!("self-loop at vertex {a}")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(invalid("edges", format!("repeated edge ({a},{b})")));
            }
        }
        Ok(Self::assemble(LatticeKind::EdgeList, num_vertices, edges, root))
    }

    fn assemble(kind: LatticeKind, num_vertices: usize, edges: Vec<(usize, usize)>, root: usize) -> Self {
        let mut degree = vec![0usize; num_vertices];
        for &(a, b) in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = Vec::with_capacity(num_vertices + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets.clone();
        let mut adj = vec![Incidence { neighbor: 0, edge: 0 }; offsets[num_vertices]];
        for (id, &(a, b)) in edges.iter().enumerate() {
            adj[fill[a]] = Incidence { neighbor: b, edge: id };
            fill[a] += 1;
            adj[fill[b]] = Incidence { neighbor: a, edge: id };
            fill[b] += 1;
        }
        for v in 0..num_vertices {
            adj[offsets[v]..offsets[v + 1]].sort_by_key(|inc| (inc.neighbor, inc.edge));
        }
        Self {
            kind,
            num_vertices,
            edges,
            root,
            offsets,
            adj,
        }
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn descriptor(&self) -> LatticeDescriptor {
        match self.kind {
            LatticeKind::BinaryTree { depth } => LatticeDescriptor::Tree { depth },
            LatticeKind::Torus { dim, side } => LatticeDescriptor::Torus { d: dim, side },
            LatticeKind::EdgeList => LatticeDescriptor::Edges {
                vertices: self.num_vertices,
                edges: self.edges.clone(),
                root: self.root,
            },
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    /// `|B|`, the number of bits.
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> (usize, usize) {
        self.edges[id]
    }

    /// Root of a tree, origin of a torus.
    pub fn root(&self) -> usize {
        self.root
    }

    pub fn neighbors(&self, v: usize) -> &[Incidence] {
        &self.adj[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Coordinate codec, present for tori only.
    pub fn torus_codec(&self) -> Option<TorusCodec> {
        match self.kind {
            LatticeKind::Torus { dim, side } => Some(TorusCodec { dim, side }),
            _ => None,
        }
    }

    pub fn check_config(&self, config: &BitConfig) -> Result<()> {
        if config.len() != self.num_edges() {
            return Err(Error::LengthMismatch {
                expected: self.num_edges(),
                found: config.len(),
            });
        }
        Ok(())
    }
}

/// Maps torus vertex ids to coordinates in `[-L/2, L/2)^d` and back.
///
/// Ids are lexicographic ranks with the first coordinate most significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusCodec {
    pub dim: usize,
    pub side: usize,
}

impl TorusCodec {
    /// Smallest coordinate value, `-floor(L/2)`.
    pub fn low(&self) -> i64 {
        -((self.side / 2) as i64)
    }

    pub fn high(&self) -> i64 {
        self.low() + self.side as i64 - 1
    }

    pub fn wrap(&self, c: i64) -> i64 {
        let l = self.side as i64;
        (c - self.low()).rem_euclid(l) + self.low()
    }

    pub fn encode(&self, coords: &[i64]) -> usize {
        coords
            .iter()
            .fold(0usize, |acc, &c| acc * self.side + (self.wrap(c) - self.low()) as usize)
    }

    pub fn decode_into(&self, mut id: usize, out: &mut [i64]) {
        for slot in out.iter_mut().rev() {
            *slot = (id % self.side) as i64 + self.low();
            id /= self.side;
        }
    }

    pub fn decode(&self, id: usize) -> Vec<i64> {
        let mut out = vec![0; self.dim];
        self.decode_into(id, &mut out);
        out
    }

    pub fn sup_norm(&self, id: usize) -> usize {
        self.decode(id)
            .iter()
            .map(|c| c.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }
}

/// Reusable breadth-first workspace for root-cluster queries.
///
/// Visit marks are generation-stamped so repeated calls do not clear memory.
#[derive(Debug, Clone, Default)]
pub struct ClusterCounter {
    stamp: Vec<u32>,
    generation: u32,
    queue: Vec<usize>,
}

impl ClusterCounter {
    pub fn new() -> Self {
        Self::default()
    }

    fn begin(&mut self, n: usize) {
        if self.stamp.len() != n {
            self.stamp = vec![0; n];
            self.generation = 0;
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        self.queue.clear();
    }

    /// Size of the open cluster containing `start`. The config length is
    /// not checked.
    pub fn cluster_size_from(&mut self, lattice: &Lattice, config: &BitConfig, start: usize) -> usize {
        self.begin(lattice.num_vertices());
        let generation = self.generation;
        self.stamp[start] = generation;
        self.queue.push(start);
        let mut head = 0;
        while head < self.queue.len() {
            let v = self.queue[head];
            head += 1;
            for inc in lattice.neighbors(v) {
                if config.is_open(inc.edge) && self.stamp[inc.neighbor] != generation {
                    self.stamp[inc.neighbor] = generation;
                    self.queue.push(inc.neighbor);
                }
            }
        }
        self.queue.len()
    }

    pub fn root_cluster_size(&mut self, lattice: &Lattice, config: &BitConfig) -> usize {
        self.cluster_size_from(lattice, config, lattice.root())
    }
}

/// Number of vertices in the open cluster of the root (always at least 1).
pub fn cluster_size_at_root(lattice: &Lattice, config: &BitConfig) -> Result<usize> {
    lattice.check_config(config)?;
    Ok(ClusterCounter::new().root_cluster_size(lattice, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consistent(lattice: &Lattice) {
        let total: usize = (0..lattice.num_vertices()).map(|v| lattice.degree(v)).sum();
        assert_eq!(total, 2 * lattice.num_edges());
        for (id, &(a, b)) in lattice.edges().iter().enumerate() {
            assert!(lattice.neighbors(a).contains(&Incidence { neighbor: b, edge: id }));
            assert!(lattice.neighbors(b).contains(&Incidence { neighbor: a, edge: id }));
        }
    }

    #[test]
    fn tree_counts() {
        for (n, v, e) in [(1, 3, 2), (2, 7, 6), (3, 15, 14)] {
            let t = Lattice::binary_tree(n).unwrap();
            assert_eq!(t.num_vertices(), v);
            assert_eq!(t.num_edges(), e);
            assert_eq!(t.root(), 0);
            consistent(&t);
        }
    }

    #[test]
    fn torus_counts_and_degrees() {
        let t = Lattice::torus(2, 3).unwrap();
        assert_eq!(t.num_vertices(), 9);
        assert_eq!(t.num_edges(), 18);
        assert!((0..9).all(|v| t.degree(v) == 4));
        consistent(&t);
        for (d, l) in [(1, 5), (2, 4), (3, 4), (2, 7)] {
            let t = Lattice::torus(d, l).unwrap();
            assert_eq!(t.num_edges(), d * t.num_vertices());
            assert!((0..t.num_vertices()).all(|v| t.degree(v) == 2 * d));
            consistent(&t);
        }
    }

    #[test]
    fn torus_origin_and_codec() {
        let t = Lattice::torus(2, 4).unwrap();
        let codec = t.torus_codec().unwrap();
        assert_eq!(codec.decode(t.root()), vec![0, 0]);
        assert_eq!(codec.low(), -2);
        assert_eq!(codec.high(), 1);
        for v in 0..t.num_vertices() {
            assert_eq!(codec.encode(&codec.decode(v)), v);
        }
        // Edge rank*d + axis points along +axis.
        let (a, b) = t.edge(t.root() * 2);
        assert_eq!(a, t.root());
        assert_eq!(codec.decode(b), vec![1, 0]);
        let odd = Lattice::torus(2, 3).unwrap().torus_codec().unwrap();
        assert_eq!((odd.low(), odd.high()), (-1, 1));
    }

    #[test]
    fn invalid_parameters() {
        assert!(matches!(
            Lattice::binary_tree(0),
            Err(Error::InvalidParameter { name: "depth", .. })
        ));
        assert!(matches!(
            Lattice::torus(0, 4),
            Err(Error::InvalidParameter { name: "d", .. })
        ));
        assert!(matches!(
            Lattice::torus(2, 2),
            Err(Error::InvalidParameter { name: "L", .. })
        ));
        assert!(Lattice::from_edges(2, vec![(0, 1), (1, 0)], 0).is_err());
        assert!(Lattice::from_edges(2, vec![(0, 0)], 0).is_err());
        assert!(Lattice::from_edges(2, vec![(0, 1)], 2).is_err());
    }

    #[test]
    fn cluster_examples() {
        let t = Lattice::binary_tree(1).unwrap();
        assert_eq!(cluster_size_at_root(&t, &BitConfig::all_open(2)).unwrap(), 3);
        assert_eq!(cluster_size_at_root(&t, &BitConfig::all_closed(2)).unwrap(), 1);
        let torus = Lattice::torus(2, 4).unwrap();
        assert_eq!(cluster_size_at_root(&torus, &BitConfig::all_open(32)).unwrap(), 16);
        assert_eq!(
            cluster_size_at_root(&t, &BitConfig::all_open(3)),
            Err(Error::LengthMismatch { expected: 2, found: 3 })
        );
    }

    #[test]
    fn descriptor_json() {
        let d: LatticeDescriptor = serde_json::from_str(r#"{"kind":"torus","d":2,"L":3}"#).unwrap();
        assert_eq!(d, LatticeDescriptor::Torus { d: 2, side: 3 });
        let t: LatticeDescriptor = serde_json::from_str(r#"{"kind":"tree","depth":2}"#).unwrap();
        assert_eq!(t.build().unwrap().num_edges(), 6);
        assert_eq!(serde_json::to_string(&t).unwrap(), r#"{"kind":"tree","depth":2}"#);
        assert_eq!(serde_json::to_string(&d).unwrap(), r#"{"kind":"torus","d":2,"L":3}"#);
    }
}
