use serde::{Deserialize, Serialize};

use crate::bits::BitConfig;
use crate::error::{Error, Result};

/// Nested JSON form of a query tree: `{"bit": 0, "plus": {...}, "minus": {...}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryTreeSpec {
    pub bit: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plus: Option<Box<QueryTreeSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minus: Option<Box<QueryTreeSpec>>,
}

impl QueryTreeSpec {
    pub fn leaf(bit: usize) -> Self {
        Self {
            bit,
            plus: None,
            minus: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Node {
    bit: usize,
    plus: Option<usize>,
    minus: Option<usize>,
}

/// Rooted tree whose vertices carry bit labels and whose edges carry a
/// value in `{-1, +1}`; a node has at most one child per value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryTree {
    num_bits: usize,
    nodes: Vec<Node>,
}

impl QueryTree {
    /// Checks labels are in range and that no label repeats along any
    /// root-to-leaf path.
    pub fn from_spec(spec: &QueryTreeSpec, num_bits: usize) -> Result<Self> {
        let mut tree = Self {
            num_bits,
            nodes: Vec::new(),
        };
        let mut path = Vec::new();
        tree.push(spec, &mut path)?;
        Ok(tree)
    }

    fn push(&mut self, spec: &QueryTreeSpec, path: &mut Vec<usize>) -> Result<usize> {
        if spec.bit >= self.num_bits {
            return Err(Error::MalformedQueryTree(format!(
                "label {} is out of range for {} bits",
                spec.bit, self.num_bits
            )));
        }
        if path.contains(&spec.bit) {
            return Err(Error::MalformedQueryTree(format!(
                "label {} repeats on a root-to-leaf path",
                spec.bit
            )));
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            bit: spec.bit,
            plus: None,
            minus: None,
        });
        path.push(spec.bit);
        if let Some(child) = &spec.plus {
            let c = self.push(child, path)?;
            self.nodes[id].plus = Some(c);
        }
        if let Some(child) = &spec.minus {
            let c = self.push(child, path)?;
            self.nodes[id].minus = Some(c);
        }
        path.pop();
        Ok(id)
    }

    /// Single node labeled `bit`.
    pub fn leaf(bit: usize, num_bits: usize) -> Result<Self> {
        Self::from_spec(&QueryTreeSpec::leaf(bit), num_bits)
    }

    pub fn to_spec(&self) -> QueryTreeSpec {
        fn build(nodes: &[Node], id: usize) -> QueryTreeSpec {
            let n = nodes[id];
            QueryTreeSpec {
                bit: n.bit,
                plus: n.plus.map(|c| Box::new(build(nodes, c))),
                minus: n.minus.map(|c| Box::new(build(nodes, c))),
            }
        }
        build(&self.nodes, 0)
    }

    pub fn num_bits(&self) -> usize {
        self.num_bits
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Labels along the query path of `config`, in visit order.
    pub fn query_path(&self, config: &BitConfig) -> Vec<usize> {
        let mut out = Vec::new();
        let mut at = Some(0);
        while let Some(id) = at {
            let node = self.nodes[id];
            out.push(node.bit);
            at = if config.is_open(node.bit) {
                node.plus
            } else {
                node.minus
            };
        }
        out
    }
}
