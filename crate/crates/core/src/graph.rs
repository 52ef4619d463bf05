//! Speaker- and predicate-typed directed graph over utterances, with
//! attention edge weights and a two-step relational graph convolution.
//!
//! Matrices act on row vectors: a node feature `x` is transformed as `x·W`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;
use tensorcore::{Graph, ParamStore, Tensor, Var};

use crate::corpus::Conversation;
use crate::encoder::xavier;
use crate::error::{CsrlError, Result};

/// Edge label: (speaker of source, speaker of target, predicate involved).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RelationId {
    #[serde(rename = "from_spk")]
    pub from_speaker: usize,
    #[serde(rename = "to_spk")]
    pub to_speaker: usize,
    #[serde(rename = "pred")]
    pub pred_flag: bool,
}

impl RelationId {
    /// Number of relation types for `m` speakers: `2·m²`.
    pub fn count(num_speakers: usize) -> usize {
        2 * num_speakers * num_speakers
    }

    pub fn encode(&self, num_speakers: usize) -> usize {
        (self.from_speaker * num_speakers + self.to_speaker) * 2 + usize::from(self.pred_flag)
    }

    pub fn decode(id: usize, num_speakers: usize) -> Self {
        let pair = id / 2;
        RelationId {
            from_speaker: pair / num_speakers,
            to_speaker: pair % num_speakers,
            pred_flag: id % 2 == 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub relation: RelationId,
}

impl Edge {
    pub fn is_self_loop(&self) -> bool {
        self.from == self.to
    }
}

/// Graph structure for one (conversation, predicate) instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvGraph {
    pub num_vertices: usize,
    pub num_speakers: usize,
    pub predicate_utt: usize,
    pub speakers: Vec<usize>,
    pub edges: Vec<Edge>,
}

impl ConvGraph {
    pub fn relation_ids(&self) -> BTreeSet<usize> {
        self.edges
            .iter()
            .map(|e| e.relation.encode(self.num_speakers))
            .collect()
    }

    /// Incoming edges of `vertex`, self-loop included.
    pub fn in_edges(&self, vertex: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.to == vertex)
    }

    /// 0 on edges (self-loops included), `-inf` elsewhere; row = target.
    fn edge_mask(&self) -> Tensor {
        let k = self.num_vertices;
        let mut data = vec![f64::NEG_INFINITY; k * k];
        for e in &self.edges {
            data[e.to * k + e.from] = 0.0;
        }
        Tensor::new(vec![k, k], data).expect("square")
    }

    /// 1 on non-self edges; row = target.
    pub fn adjacency(&self) -> Tensor {
        let k = self.num_vertices;
        let mut data = vec![0.0; k * k];
        for e in self.edges.iter().filter(|e| !e.is_self_loop()) {
            data[e.to * k + e.from] = 1.0;
        }
        Tensor::new(vec![k, k], data).expect("square")
    }
}

/// Edges `j → i` for `j ∈ [max(0, i−window), i−1]` plus a self-loop per
/// vertex. An edge carries the predicate flag when either endpoint is the
/// predicate's utterance.
pub fn build_graph(conv: &Conversation, predicate_utt: usize, window: usize) -> ConvGraph {
    let k = conv.len();
    let speakers = conv.speakers();
    let mut edges = Vec::new();
    for i in 0..k {
        for j in i.saturating_sub(window)..=i {
            edges.push(Edge {
                from: j,
                to: i,
                relation: RelationId {
                    from_speaker: speakers[j],
                    to_speaker: speakers[i],
                    pred_flag: j == predicate_utt || i == predicate_utt,
                },
            });
        }
    }
    ConvGraph {
        num_vertices: k,
        num_speakers: conv.num_speakers.max(1),
        predicate_utt,
        speakers,
        edges,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphAblation {
    NoSpeakerDep,
    NoPredicateDep,
}

impl FromStr for GraphAblation {
    type Err = CsrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_speaker_dep" => Ok(GraphAblation::NoSpeakerDep),
            "no_predicate_dep" => Ok(GraphAblation::NoPredicateDep),
            other => Err(CsrlError::UnknownSwitch(other.to_string())),
        }
    }
}

impl fmt::Display for GraphAblation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphAblation::NoSpeakerDep => "no_speaker_dep",
            GraphAblation::NoPredicateDep => "no_predicate_dep",
        })
    }
}

/// Collapses one factor of every relation label: speakers to 0, or the
/// predicate flag to false.
pub fn ablate(graph: &ConvGraph, mode: GraphAblation) -> ConvGraph {
    let mut out = graph.clone();
    for e in &mut out.edges {
        match mode {
            GraphAblation::NoSpeakerDep => {
                e.relation.from_speaker = 0;
                e.relation.to_speaker = 0;
            }
            GraphAblation::NoPredicateDep => e.relation.pred_flag = false,
        }
    }
    out
}

/// How the per-relation normalizer `c_{i,r}` is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationNorm {
    /// `c_{i,r} = |N_i^r|`
    Count,
    /// `c_{i,r} = exp(θ_r)`, one trainable scalar per relation.
    Learnable,
}

#[derive(Clone, Debug)]
pub struct GraphParams {
    pub num_speakers: usize,
    pub w_e: usize,
    pub w_rel: Vec<usize>,
    pub w0_1: usize,
    pub w_2: usize,
    pub w0_2: usize,
    /// `[R, 1]` log-normalizers, present for [`RelationNorm::Learnable`].
    pub log_c: Option<usize>,
}

impl GraphParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        d_graph: usize,
        num_speakers: usize,
        norm: RelationNorm,
        rng: &mut R,
    ) -> Result<Self> {
        let d = d_graph;
        let w_e = store.insert("graph.w_e", xavier(d, d, rng))?;
        let w_rel = (0..RelationId::count(num_speakers))
            .map(|r| store.insert(format!("graph.w_rel{r}"), xavier(d, d, rng)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let w0_1 = store.insert("graph.w0_1", xavier(d, d, rng))?;
        let w_2 = store.insert("graph.w_2", xavier(d, d, rng))?;
        let w0_2 = store.insert("graph.w0_2", xavier(d, d, rng))?;
        let log_c = match norm {
            RelationNorm::Count => None,
            RelationNorm::Learnable => Some(store.insert(
                "graph.log_c",
                Tensor::zeros(&[RelationId::count(num_speakers), 1]),
            )?),
        };
        Ok(GraphParams {
            num_speakers,
            w_e,
            w_rel,
            w0_1,
            w_2,
            w0_2,
            log_c,
        })
    }

    pub fn slots(&self) -> Vec<usize> {
        let mut s = vec![self.w_e, self.w0_1, self.w_2, self.w0_2];
        s.extend(&self.w_rel);
        s.extend(self.log_c);
        s
    }
}

/// `α[i, j] = softmax_j(g_i · W_e · g_jᵀ)` over the in-neighbours `j` of `i`
/// (self-loop included); zero where there is no edge. Row = target vertex.
pub fn edge_weights(tape: &mut Graph, g: Var, graph: &ConvGraph, w_e: Var) -> Result<Var> {
    let gw = tape.matmul(g, w_e)?;
    let gt = tape.transpose(g)?;
    let scores = tape.matmul(gw, gt)?;
    let mask = tape.constant(graph.edge_mask());
    let masked = tape.add(scores, mask)?;
    Ok(tape.softmax(masked, 1)?)
}

/// First convolution step:
/// `h¹_i = ReLU(Σ_r Σ_{j∈N_i^r} α_ij / c_{i,r} · g_j W_r + α_ii · g_i W_0)`,
/// with `N_i^r` the non-self in-neighbours of `i` under relation `r`.
pub fn rgcn_layer1(
    tape: &mut Graph,
    g: Var,
    graph: &ConvGraph,
    alpha: Var,
    params: &GraphParams,
    vars: &[Var],
) -> Result<Var> {
    let k = graph.num_vertices;
    let mut identity = vec![0.0; k * k];
    for i in 0..k {
        identity[i * k + i] = 1.0;
    }
    let identity = tape.constant(Tensor::new(vec![k, k], identity)?);
    let self_alpha = tape.mul(alpha, identity)?;
    let self_msg = tape.matmul(g, vars[params.w0_1])?;
    let mut total = tape.matmul(self_alpha, self_msg)?;

    let used: BTreeSet<usize> = graph
        .edges
        .iter()
        .filter(|e| !e.is_self_loop())
        .map(|e| e.relation.encode(params.num_speakers))
        .collect();
    for r in used {
        let mut coeff = vec![0.0; k * k];
        for i in 0..k {
            let members: Vec<usize> = graph
                .in_edges(i)
                .filter(|e| !e.is_self_loop() && e.relation.encode(params.num_speakers) == r)
                .map(|e| e.from)
                .collect();
            let c = match params.log_c {
                None => members.len() as f64,
                Some(_) => 1.0,
            };
            for j in members {
                coeff[i * k + j] = 1.0 / c;
            }
        }
        let coeff = tape.constant(Tensor::new(vec![k, k], coeff)?);
        let mut agg = tape.mul(alpha, coeff)?;
        if let Some(slot) = params.log_c {
            let theta = tape.gather_rows(vars[slot], &[r])?;
            let neg = tape.scale(theta, -1.0);
            let inv_c = tape.exp(neg);
            agg = tape.mul(agg, inv_c)?;
        }
        let msg = tape.matmul(g, vars[params.w_rel[r]])?;
        let term = tape.matmul(agg, msg)?;
        total = tape.add(total, term)?;
    }
    Ok(tape.relu(total))
}

/// Second step: `h²_i = ReLU(Σ_{j∈N_i} h¹_j W + h¹_i W_0)`, relation-agnostic.
pub fn rgcn_layer2(
    tape: &mut Graph,
    h1: Var,
    graph: &ConvGraph,
    params: &GraphParams,
    vars: &[Var],
) -> Result<Var> {
    let adj = tape.constant(graph.adjacency());
    let msg = tape.matmul(h1, vars[params.w_2])?;
    let agg = tape.matmul(adj, msg)?;
    let own = tape.matmul(h1, vars[params.w0_2])?;
    let pre = tape.add(agg, own)?;
    Ok(tape.relu(pre))
}

/// `h = g + h²`.
pub fn residual_update(tape: &mut Graph, g: Var, h2: Var) -> Result<Var> {
    if tape.shape(g) != tape.shape(h2) {
        return Err(tensorcore::TensorError::Shape {
            op: "residual_update",
            shapes: vec![tape.shape(g).to_vec(), tape.shape(h2).to_vec()],
        }
        .into());
    }
    Ok(tape.add(g, h2)?)
}

#[derive(Clone, Debug)]
pub struct GraphOutput {
    pub alpha: Var,
    pub h1: Var,
    pub h2: Var,
    pub h: Var,
}

pub fn run_graph(
    tape: &mut Graph,
    g: Var,
    graph: &ConvGraph,
    params: &GraphParams,
    vars: &[Var],
) -> Result<GraphOutput> {
    let alpha = edge_weights(tape, g, graph, vars[params.w_e])?;
    let h1 = rgcn_layer1(tape, g, graph, alpha, params, vars)?;
    let h2 = rgcn_layer2(tape, h1, graph, params, vars)?;
    let h = residual_update(tape, g, h2)?;
    Ok(GraphOutput { alpha, h1, h2, h })
}

#[derive(Serialize)]
struct VertexDump {
    index: usize,
    speaker: usize,
    has_predicate: bool,
}

#[derive(Serialize)]
struct EdgeDump {
    from: usize,
    to: usize,
    relation: RelationId,
    relation_id: usize,
    alpha: f64,
}

#[derive(Serialize)]
struct GraphDump<'a> {
    id: &'a str,
    num_speakers: usize,
    vertices: Vec<VertexDump>,
    edges: Vec<EdgeDump>,
}

/// Debug view of a graph and its edge weights (`alpha` is the dense K×K
/// matrix from [`edge_weights`]).
pub fn dump_json(id: &str, graph: &ConvGraph, alpha: &Tensor) -> serde_json::Value {
    let dump = GraphDump {
        id,
        num_speakers: graph.num_speakers,
        vertices: (0..graph.num_vertices)
            .map(|index| VertexDump {
                index,
                speaker: graph.speakers[index],
                has_predicate: index == graph.predicate_utt,
            })
            .collect(),
        edges: graph
            .edges
            .iter()
            .map(|e| EdgeDump {
                from: e.from,
                to: e.to,
                relation: e.relation,
                relation_id: e.relation.encode(graph.num_speakers),
                alpha: alpha.get(e.to, e.from),
            })
            .collect(),
    };
    serde_json::to_value(dump).expect("serializable")
}
