//! Token encoder: trainable embeddings, predicate-aware masked self-attention
//! and utterance pooling.
//!
//! Produces the local token representations `e`, the predicate-aware token
//! representations `p`, and the initial utterance features `g` (max-pooled
//! `p` projected to the graph width).

use rand::Rng;
use tensorcore::{Graph, ParamStore, Tensor, Var};

use crate::corpus::Conversation;
use crate::error::{CsrlError, Result};
use crate::model::ModelConfig;

#[derive(Clone, Debug)]
pub struct BlockParams {
    pub ln1_gain: usize,
    pub ln1_bias: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub ln2_gain: usize,
    pub ln2_bias: usize,
    pub ff1_w: usize,
    pub ff1_b: usize,
    pub ff2_w: usize,
    pub ff2_b: usize,
}

/// Parameter slots of the encoder inside a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub pred_emb: usize,
    pub blocks: Vec<BlockParams>,
    pub proj_w: usize,
    pub proj_b: usize,
}

/// Position rows start near zero: positions never seen in training stay close
/// to neutral.
pub const POSITION_INIT_SCALE: f64 = 0.02;

pub(crate) fn xavier<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let scale = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::uniform(&[rows, cols], scale, rng)
}

impl EncoderParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let d = cfg.d_enc;
        let tok_emb = store.insert(
            "enc.tok_emb",
            Tensor::uniform(&[cfg.vocab_size, d], 0.5, rng),
        )?;
        let pos_emb = store.insert(
            "enc.pos_emb",
            Tensor::uniform(&[cfg.max_len, d], POSITION_INIT_SCALE, rng),
        )?;
        let pred_emb = store.insert("enc.pred_emb", Tensor::uniform(&[2, d], 0.5, rng))?;
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for b in 0..cfg.blocks {
            let name = |s: &str| format!("enc.block{b}.{s}");
            blocks.push(BlockParams {
                ln1_gain: store.insert(name("ln1_gain"), Tensor::filled(&[d], 1.0))?,
                ln1_bias: store.insert(name("ln1_bias"), Tensor::zeros(&[d]))?,
                wq: store.insert(name("wq"), xavier(d, d, rng))?,
                wk: store.insert(name("wk"), xavier(d, d, rng))?,
                wv: store.insert(name("wv"), xavier(d, d, rng))?,
                wo: store.insert(name("wo"), xavier(d, d, rng))?,
                ln2_gain: store.insert(name("ln2_gain"), Tensor::filled(&[d], 1.0))?,
                ln2_bias: store.insert(name("ln2_bias"), Tensor::zeros(&[d]))?,
                ff1_w: store.insert(name("ff1_w"), xavier(d, cfg.d_ff, rng))?,
                ff1_b: store.insert(name("ff1_b"), Tensor::zeros(&[cfg.d_ff]))?,
                ff2_w: store.insert(name("ff2_w"), xavier(cfg.d_ff, d, rng))?,
                ff2_b: store.insert(name("ff2_b"), Tensor::zeros(&[d]))?,
            });
        }
        let proj_w = store.insert("enc.proj_w", xavier(d, cfg.d_graph, rng))?;
        let proj_b = store.insert("enc.proj_b", Tensor::zeros(&[cfg.d_graph]))?;
        Ok(EncoderParams {
            tok_emb,
            pos_emb,
            pred_emb,
            blocks,
            proj_w,
            proj_b,
        })
    }
}

/// Which key positions each query position may attend to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    n: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn full(n: usize) -> Self {
        AttentionMask {
            n,
            allowed: vec![true; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut allowed = vec![false; n * n];
        for i in 0..n {
            allowed[i * n + i] = true;
        }
        AttentionMask { n, allowed }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.n + j]
    }

    pub fn is_full(&self) -> bool {
        self.allowed.iter().all(|&a| a)
    }

    /// 0 where attention is allowed, `-inf` elsewhere; added to the scores.
    pub fn additive(&self) -> Tensor {
        let data = self
            .allowed
            .iter()
            .map(|&a| if a { 0.0 } else { f64::NEG_INFINITY })
            .collect();
        Tensor::new(vec![self.n, self.n], data).expect("square mask")
    }
}

/// Token `i` may attend to token `j` iff both lie in the same utterance or
/// `j` lies in the predicate's utterance.
pub fn build_predicate_mask(conv: &Conversation, predicate_utt: usize) -> AttentionMask {
    let utt = conv.utterance_of_tokens();
    let n = utt.len();
    let mut allowed = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            allowed[i * n + j] = utt[i] == utt[j] || utt[j] == predicate_utt;
        }
    }
    AttentionMask { n, allowed }
}

/// Integer view of one instance as the encoder consumes it.
#[derive(Clone, Debug)]
pub struct EncoderInput {
    pub token_ids: Vec<usize>,
    /// 1 for tokens inside the predicate span, else 0.
    pub predicate_indicator: Vec<usize>,
    pub utt_of_token: Vec<usize>,
    pub num_utterances: usize,
}

/// `e[t] = tok_emb[id_t] + pos_emb[t] + pred_emb[indicator_t]`.
pub fn embed_tokens(
    tape: &mut Graph,
    vars: &[Var],
    params: &EncoderParams,
    cfg: &ModelConfig,
    input: &EncoderInput,
) -> Result<Var> {
    let n = input.token_ids.len();
    if n > cfg.max_len {
        return Err(CsrlError::TooLong {
            len: n,
            max_len: cfg.max_len,
        });
    }
    let tok = tape.gather_rows(vars[params.tok_emb], &input.token_ids)?;
    let positions: Vec<usize> = (0..n).collect();
    let pos = tape.gather_rows(vars[params.pos_emb], &positions)?;
    let pred = tape.gather_rows(vars[params.pred_emb], &input.predicate_indicator)?;
    let sum = tape.add(tok, pos)?;
    Ok(tape.add(sum, pred)?)
}

pub struct BlockOutput {
    pub out: Var,
    /// Post-softmax attention weights, one n×n matrix per head.
    pub weights: Vec<Var>,
}

fn affine_norm(tape: &mut Graph, x: Var, gain: Var, bias: Var) -> Result<Var> {
    let normed = tape.layer_norm(x)?;
    let scaled = tape.mul(normed, gain)?;
    Ok(tape.add(scaled, bias)?)
}

/// Pre-norm transformer block: `x + MHA(LN(x))`, then `+ FFN(LN(·))`.
/// `mask` is the additive mask tensor from [`AttentionMask::additive`].
pub fn attention_block(
    tape: &mut Graph,
    x: Var,
    mask: Var,
    block: &BlockParams,
    vars: &[Var],
    heads: usize,
) -> Result<BlockOutput> {
    let d = tape.shape(x)[1];
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(CsrlError::Config(format!(
            "d_enc {d} is not divisible by {heads} heads"
        )));
    }
    let dh = d / heads;
    let h = affine_norm(tape, x, vars[block.ln1_gain], vars[block.ln1_bias])?;
    let q = tape.matmul(h, vars[block.wq])?;
    let k = tape.matmul(h, vars[block.wk])?;
    let v = tape.matmul(h, vars[block.wv])?;
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for head in 0..heads {
        let (lo, hi) = (head * dh, (head + 1) * dh);
        let qh = tape.slice_cols(q, lo, hi)?;
        let kh = tape.slice_cols(k, lo, hi)?;
        let vh = tape.slice_cols(v, lo, hi)?;
        let kt = tape.transpose(kh)?;
        let raw = tape.matmul(qh, kt)?;
        let scaled = tape.scale(raw, 1.0 / (dh as f64).sqrt());
        let masked = tape.add(scaled, mask)?;
        let attn = tape.softmax(masked, 1)?;
        weights.push(attn);
        outs.push(tape.matmul(attn, vh)?);
    }
    let merged = if outs.len() == 1 {
        outs[0]
    } else {
        tape.concat(&outs, 1)?
    };
    let projected = tape.matmul(merged, vars[block.wo])?;
    let x1 = tape.add(x, projected)?;

    let h2 = affine_norm(tape, x1, vars[block.ln2_gain], vars[block.ln2_bias])?;
    let f1 = tape.matmul(h2, vars[block.ff1_w])?;
    let f1 = tape.add(f1, vars[block.ff1_b])?;
    let f1 = tape.relu(f1);
    let f2 = tape.matmul(f1, vars[block.ff2_w])?;
    let f2 = tape.add(f2, vars[block.ff2_b])?;
    let out = tape.add(x1, f2)?;
    Ok(BlockOutput { out, weights })
}

#[derive(Clone, Debug)]
pub struct Encoded {
    pub e: Var,
    pub p: Var,
    /// Per-utterance max over `p` rows, before projection.
    pub pooled: Var,
    /// Initial node features, `K × d_graph`.
    pub g: Var,
    pub attention: Vec<Vec<Var>>,
}

/// Runs the full encoder. With `bypass_attention` the attention stack is
/// skipped and `p = e`.
pub fn encode(
    tape: &mut Graph,
    vars: &[Var],
    params: &EncoderParams,
    cfg: &ModelConfig,
    input: &EncoderInput,
    mask: &AttentionMask,
    bypass_attention: bool,
) -> Result<Encoded> {
    let e = embed_tokens(tape, vars, params, cfg, input)?;
    let mut p = e;
    let mut attention = Vec::new();
    if !bypass_attention {
        let mask_var = tape.constant(mask.additive());
        for block in &params.blocks {
            let out = attention_block(tape, p, mask_var, block, vars, cfg.heads)?;
            p = out.out;
            attention.push(out.weights);
        }
    }
    let pooled = tape.max_pool_segments(p, &input.utt_of_token, input.num_utterances)?;
    let g = tape.matmul(pooled, vars[params.proj_w])?;
    let g = tape.add(g, vars[params.proj_b])?;
    Ok(Encoded {
        e,
        p,
        pooled,
        g,
        attention,
    })
}
