//! Node encoder: a two-layer MLP followed by one residual graph
//! convolution, `H = ReLU(Â·H_m·W) + H_m`, plus mean-pooled edge embeddings.

use std::fs;
use std::path::Path;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Graph, NormalizedAdjacency, Subgraph};
use crate::optim::Param;
use crate::tensor::{xavier_init, Tensor};

pub const MODEL_MAGIC: &[u8; 7] = b"SEGNN1\0";

/// Trainable encoder weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub mlp_w1: Param,
    pub mlp_b1: Param,
    pub mlp_w2: Param,
    pub mlp_b2: Param,
    pub gcn_w: Param,
}

/// Leaves registered for one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    pub mlp_w1: Var,
    pub mlp_b1: Var,
    pub mlp_w2: Var,
    pub mlp_b2: Var,
    pub gcn_w: Var,
}

impl EncoderVars {
    pub fn all(&self) -> [Var; 5] {
        [self.mlp_w1, self.mlp_b1, self.mlp_w2, self.mlp_b2, self.gcn_w]
    }
}

/// Final embeddings `h` and the pre-aggregation MLP output `h_mlp`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeEmbeddings {
    pub h: Tensor,
    pub h_mlp: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeEmbedding {
    pub edge: (usize, usize),
    pub vector: Vec<f64>,
}

impl EncoderParams {
    /// Xavier-initialised weights, zero biases.
    pub fn init(in_dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        let sub = |i: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i);
        Ok(EncoderParams {
            mlp_w1: Param::new(xavier_init(in_dim, hidden, sub(1))?),
            mlp_b1: Param::new(Tensor::zeros(1, hidden)),
            mlp_w2: Param::new(xavier_init(hidden, hidden, sub(2))?),
            mlp_b2: Param::new(Tensor::zeros(1, hidden)),
            gcn_w: Param::new(xavier_init(hidden, hidden, sub(3))?),
        })
    }

    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        EncoderParams {
            mlp_w1: Param::new(Tensor::zeros(in_dim, hidden)),
            mlp_b1: Param::new(Tensor::zeros(1, hidden)),
            mlp_w2: Param::new(Tensor::zeros(hidden, hidden)),
            mlp_b2: Param::new(Tensor::zeros(1, hidden)),
            gcn_w: Param::new(Tensor::zeros(hidden, hidden)),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.mlp_w1.value.rows()
    }

    pub fn hidden(&self) -> usize {
        self.mlp_w1.value.cols()
    }

    pub fn params(&self) -> [&Param; 5] {
        [&self.mlp_w1, &self.mlp_b1, &self.mlp_w2, &self.mlp_b2, &self.gcn_w]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 5] {
        [
            &mut self.mlp_w1,
            &mut self.mlp_b1,
            &mut self.mlp_w2,
            &mut self.mlp_b2,
            &mut self.gcn_w,
        ]
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> EncoderVars {
        let mut leaf = |p: &Param| tape.leaf(p.value.clone(), trainable);
        EncoderVars {
            mlp_w1: leaf(&self.mlp_w1),
            mlp_b1: leaf(&self.mlp_b1),
            mlp_w2: leaf(&self.mlp_w2),
            mlp_b2: leaf(&self.mlp_b2),
            gcn_w: leaf(&self.gcn_w),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&(self.in_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.hidden() as u32).to_le_bytes());
        for p in self.params() {
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = MODEL_MAGIC.len() + 8;
        if bytes.len() < header || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
            return Err(Error::Model("missing SEGNN1 magic".into()));
        }
        let word = |at: usize| {
            u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
        };
        let f = word(MODEL_MAGIC.len());
        let h = word(MODEL_MAGIC.len() + 4);
        let shapes = [(f, h), (1, h), (h, h), (1, h), (h, h)];
        let count: usize = shapes.iter().map(|(r, c)| r * c).sum();
        if bytes.len() != header + 8 * count {
            return Err(Error::Model(format!(
                "expected {} bytes for F={f}, hidden={h}, found {}",
                header + 8 * count,
                bytes.len()
            )));
        }
        let mut values = bytes[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut next = |(r, c): (usize, usize)| -> Result<Param> {
            let data: Vec<f64> = values.by_ref().take(r * c).collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Model("non-finite weight".into()));
            }
            Ok(Param::new(Tensor::from_vec(r, c, data)?))
        };
        Ok(EncoderParams {
            mlp_w1: next(shapes[0])?,
            mlp_b1: next(shapes[1])?,
            mlp_w2: next(shapes[2])?,
            mlp_b2: next(shapes[3])?,
            gcn_w: next(shapes[4])?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Records the encoder forward pass; returns `(H, H_m)` handles.
pub fn encode_on_tape(
    tape: &mut Tape,
    vars: &EncoderVars,
    features: Var,
    adj: &NormalizedAdjacency,
) -> Result<(Var, Var)> {
    let z1 = tape.matmul(features, vars.mlp_w1)?;
    let z1 = tape.add(z1, vars.mlp_b1)?;
    let a1 = tape.relu(z1)?;
    let z2 = tape.matmul(a1, vars.mlp_w2)?;
    let z2 = tape.add(z2, vars.mlp_b2)?;
    let h_mlp = tape.relu(z2)?;
    let agg = tape.sparse_matmul(adj.matrix().clone(), h_mlp)?;
    let conv = tape.matmul(agg, vars.gcn_w)?;
    let conv = tape.relu(conv)?;
    let h = tape.add(conv, h_mlp)?;
    Ok((h, h_mlp))
}

/// Inference-mode encoding (no gradients tracked).
pub fn encode_nodes(
    g: &Graph,
    adj: &NormalizedAdjacency,
    p: &EncoderParams,
) -> Result<NodeEmbeddings> {
    if g.feature_dim() != p.in_dim() {
        return Err(Error::Contract(format!(
            "graph has {} features but the encoder expects {}",
            g.feature_dim(),
            p.in_dim()
        )));
    }
    let mut tape = Tape::new();
    let vars = p.register(&mut tape, false);
    let x = tape.constant(g.features().clone());
    let (h, hm) = encode_on_tape(&mut tape, &vars, x, adj)?;
    Ok(NodeEmbeddings {
        h: tape.value(h).clone(),
        h_mlp: tape.value(hm).clone(),
    })
}

/// Mean of endpoint embeddings for every subgraph edge, in subgraph order.
pub fn embed_edges(sub: &Subgraph, h: &NodeEmbeddings) -> Vec<EdgeEmbedding> {
    sub.edges
        .iter()
        .map(|&e| EdgeEmbedding {
            edge: e,
            vector: edge_vector(&h.h, e.0, e.1),
        })
        .collect()
}

pub fn edge_vector(h: &Tensor, u: usize, v: usize) -> Vec<f64> {
    h.row(u)
        .iter()
        .zip(h.row(v))
        .map(|(a, b)| 0.5 * (a + b))
        .collect()
}

/// Edge embeddings of all listed edges as rows of one matrix.
pub fn edge_matrix(h: &Tensor, edges: &[(usize, usize)]) -> Tensor {
    let mut out = Tensor::zeros(edges.len(), h.cols());
    for (i, &(u, v)) in edges.iter().enumerate() {
        for ((d, a), b) in out.row_mut(i).iter_mut().zip(h.row(u)).zip(h.row(v)) {
            *d = 0.5 * (a + b);
        }
    }
    out
}
