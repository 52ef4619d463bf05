//! Training objectives: argument labeling, intra-argument labeling from local
//! features, and utterance-type classification, plus span decoding.

use rand::Rng;
use serde::{Deserialize, Serialize};
use tensorcore::{Graph, ParamStore, Tensor, Var};

use crate::corpus::{Conversation, Frame, UtteranceType};
use crate::encoder::xavier;
use crate::error::{CsrlError, Result};
use crate::tags::{repair, LabelSet, TagSequence};

#[derive(Clone, Debug)]
pub struct HeadParams {
    /// `(d_enc + d_graph) × L` over `[p_t ⊕ h_k]`
    pub srl_w: usize,
    pub srl_b: usize,
    /// `4·d_enc × L` over `[p, |p−e|, p⊙e, e]`
    pub intra_w: usize,
    pub intra_b: usize,
    /// `2·d_graph × 3` over `[g_k ⊕ h_k]`
    pub ut_w: usize,
    pub ut_b: usize,
}

impl HeadParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        d_enc: usize,
        d_graph: usize,
        num_labels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(HeadParams {
            srl_w: store.insert("head.srl_w", xavier(d_enc + d_graph, num_labels, rng))?,
            srl_b: store.insert("head.srl_b", Tensor::zeros(&[num_labels]))?,
            intra_w: store.insert("head.intra_w", xavier(4 * d_enc, num_labels, rng))?,
            intra_b: store.insert("head.intra_b", Tensor::zeros(&[num_labels]))?,
            ut_w: store.insert("head.ut_w", xavier(2 * d_graph, UtteranceType::COUNT, rng))?,
            ut_b: store.insert("head.ut_b", Tensor::zeros(&[UtteranceType::COUNT]))?,
        })
    }
}

/// Mixing coefficients of the three objectives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub srl: f64,
    pub intra: f64,
    pub ut: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            srl: 1.0,
            intra: 1.0,
            ut: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(srl: f64, intra: f64, ut: f64) -> Result<Self> {
        let w = [srl, intra, ut];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CsrlError::LossWeights(w));
        }
        Ok(LossWeights { srl, intra, ut })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

fn reduce(tape: &mut Graph, per_item: Var, count: usize, reduction: Reduction) -> Var {
    let total = tape.sum(per_item);
    match reduction {
        Reduction::Sum => total,
        Reduction::Mean => tape.scale(total, 1.0 / count.max(1) as f64),
    }
}

/// Logits of every token from `[p_t ⊕ h_{k(t)}]`.
pub fn srl_logits(
    tape: &mut Graph,
    p: Var,
    h: Var,
    utt_of_token: &[usize],
    head: &HeadParams,
    vars: &[Var],
) -> Result<Var> {
    let h_tok = tape.gather_rows(h, utt_of_token)?;
    let feats = tape.concat(&[p, h_tok], 1)?;
    let logits = tape.matmul(feats, vars[head.srl_w])?;
    Ok(tape.add(logits, vars[head.srl_b])?)
}

/// `−Σ_t log softmax(W_c [p_t ⊕ h_{k(t)}])[y_t]`.
#[allow(clippy::too_many_arguments)]
pub fn srl_loss(
    tape: &mut Graph,
    p: Var,
    h: Var,
    utt_of_token: &[usize],
    tags: &TagSequence,
    head: &HeadParams,
    vars: &[Var],
    reduction: Reduction,
) -> Result<Var> {
    let logits = srl_logits(tape, p, h, utt_of_token, head, vars)?;
    let nll = tape.cross_entropy(logits, &tags.labels)?;
    Ok(reduce(tape, nll, tags.len(), reduction))
}

/// `P = [p, |p − e|, p ⊙ e, e]`, one row per token.
pub fn intra_features(tape: &mut Graph, e: Var, p: Var) -> Result<Var> {
    let diff = tape.sub(p, e)?;
    let absdiff = tape.abs(diff);
    let prod = tape.mul(p, e)?;
    Ok(tape.concat(&[p, absdiff, prod, e], 1)?)
}

/// True for tokens inside an argument that shares the predicate's utterance.
pub fn intra_mask(conv: &Conversation, frame: &Frame) -> Vec<bool> {
    let offsets = conv.offsets();
    let mut mask = vec![false; conv.num_tokens()];
    for arg in frame.arguments.iter().filter(|a| !frame.is_cross(a)) {
        for t in arg.span.start..arg.span.end {
            mask[offsets[arg.utt_index] + t] = true;
        }
    }
    mask
}

/// `−Σ_t σ_t · log softmax(W_intra P_t)[y_t]` with `σ_t` from [`intra_mask`].
#[allow(clippy::too_many_arguments)]
pub fn intra_loss(
    tape: &mut Graph,
    e: Var,
    p: Var,
    tags: &TagSequence,
    mask: &[bool],
    head: &HeadParams,
    vars: &[Var],
    reduction: Reduction,
) -> Result<Var> {
    let feats = intra_features(tape, e, p)?;
    let logits = tape.matmul(feats, vars[head.intra_w])?;
    let logits = tape.add(logits, vars[head.intra_b])?;
    let nll = tape.cross_entropy(logits, &tags.labels)?;
    let sigma = tape.constant(Tensor::vector(
        mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
    ));
    let masked = tape.mul(nll, sigma)?;
    let active = mask.iter().filter(|&&m| m).count();
    Ok(reduce(tape, masked, active, reduction))
}

/// `−Σ_k log softmax(W_ut [g_k ⊕ h_k])[type_k]`.
#[allow(clippy::too_many_arguments)]
pub fn utterance_type_loss(
    tape: &mut Graph,
    g: Var,
    h: Var,
    types: &[UtteranceType],
    head: &HeadParams,
    vars: &[Var],
    reduction: Reduction,
) -> Result<Var> {
    let feats = tape.concat(&[g, h], 1)?;
    let logits = tape.matmul(feats, vars[head.ut_w])?;
    let logits = tape.add(logits, vars[head.ut_b])?;
    let targets: Vec<usize> = types.iter().map(|t| t.class_index()).collect();
    let nll = tape.cross_entropy(logits, &targets)?;
    Ok(reduce(tape, nll, types.len(), reduction))
}

pub fn total_loss_var(
    tape: &mut Graph,
    srl: Var,
    intra: Var,
    ut: Var,
    weights: &LossWeights,
) -> Result<Var> {
    let a = tape.scale(srl, weights.srl);
    let b = tape.scale(intra, weights.intra);
    let c = tape.scale(ut, weights.ut);
    let ab = tape.add(a, b)?;
    Ok(tape.add(ab, c)?)
}

/// `α1·L_srl + α2·L_intra + α3·L_ut` on plain numbers.
pub fn total_loss(l_srl: f64, l_intra: f64, l_ut: f64, weights: [f64; 3]) -> Result<f64> {
    let w = LossWeights::new(weights[0], weights[1], weights[2])?;
    Ok(w.srl * l_srl + w.intra * l_intra + w.ut * l_ut)
}

/// Greedy per-token argmax (ties to the lowest label id), then BIO repair.
pub fn decode_logits(logits: &Tensor, conv: &Conversation, labels: &LabelSet) -> TagSequence {
    let raw = TagSequence {
        labels: (0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                let mut best = 0;
                for (c, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect(),
    };
    repair(&raw, conv, labels)
}

#[allow(clippy::too_many_arguments)]
pub fn decode(
    tape: &mut Graph,
    p: Var,
    h: Var,
    conv: &Conversation,
    labels: &LabelSet,
    head: &HeadParams,
    vars: &[Var],
) -> Result<TagSequence> {
    let utt = conv.utterance_of_tokens();
    let logits = srl_logits(tape, p, h, &utt, head, vars)?;
    Ok(decode_logits(tape.value(logits), conv, labels))
}
