//! Full model: encoder → utterance graph → heads, with architectural
//! ablation switches and checkpoint I/O.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tensorcore::{
    grad_check_sampled, GradCheckReport, Graph, ParamStore, Tensor, TensorError, Var,
};

use crate::corpus::{ArgumentSpan, Instance, UtteranceType};
use crate::encoder::{
    self, build_predicate_mask, AttentionMask, Encoded, EncoderInput, EncoderParams,
};
use crate::error::{CsrlError, Result};
use crate::graph::{
    self, ablate, build_graph, ConvGraph, GraphAblation, GraphOutput, GraphParams, RelationNorm,
};
use crate::objectives::{self, HeadParams, LossWeights, Reduction};
use crate::tags::{bio_to_spans, derive_tags, LabelSet, TagSequence};
use crate::vocab::Vocab;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_enc: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub blocks: usize,
    pub max_len: usize,
    pub d_graph: usize,
    /// Past-context window of the utterance graph.
    pub window: usize,
    /// Speakers the relation parameters are sized for.
    pub num_speakers: usize,
    pub relation_norm: RelationNorm,
    #[serde(default)]
    pub vocab_size: usize,
    #[serde(default)]
    pub num_labels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_enc: 64,
            heads: 4,
            d_ff: 128,
            blocks: 4,
            max_len: 256,
            d_graph: 100,
            window: 4,
            num_speakers: 2,
            relation_norm: RelationNorm::Count,
            vocab_size: 0,
            num_labels: 0,
        }
    }
}

/// Switches that change the forward computation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablations {
    /// every token attends to every token
    pub full_attention: bool,
    /// `h = g`, graph bypassed
    pub no_sagn: bool,
    /// `p = e`, attention stack bypassed
    pub no_predicate_rep: bool,
    pub no_speaker_dep: bool,
    pub no_predicate_dep: bool,
}

/// Everything derived from one instance ahead of the forward pass.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub input: EncoderInput,
    pub mask: AttentionMask,
    pub graph: ConvGraph,
    pub tags: TagSequence,
    pub intra_mask: Vec<bool>,
    pub utt_types: Vec<UtteranceType>,
}

pub struct ForwardOut {
    pub enc: Encoded,
    pub graph: Option<GraphOutput>,
    pub h: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub srl: Var,
    pub intra: Var,
    pub ut: Var,
    pub total: Var,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub srl: f64,
    pub intra: f64,
    pub ut: f64,
    pub total: f64,
}

impl LossValues {
    pub fn add(&mut self, other: &LossValues) {
        self.srl += other.srl;
        self.intra += other.intra;
        self.ut += other.ut;
        self.total += other.total;
    }

    pub fn is_finite(&self) -> bool {
        self.srl.is_finite()
            && self.intra.is_finite()
            && self.ut.is_finite()
            && self.total.is_finite()
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub ablations: Ablations,
    pub vocab: Vocab,
    pub labels: LabelSet,
    pub params: ParamStore,
    pub encoder: EncoderParams,
    pub graph: GraphParams,
    pub head: HeadParams,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    config: ModelConfig,
    ablations: Ablations,
    vocab: Vec<String>,
    roles: Vec<String>,
}

impl Model {
    pub fn new(
        mut config: ModelConfig,
        vocab: Vocab,
        labels: LabelSet,
        ablations: Ablations,
        seed: u64,
    ) -> Result<Self> {
        config.vocab_size = vocab.len();
        config.num_labels = labels.len();
        if config.heads == 0 || !config.d_enc.is_multiple_of(config.heads) {
            return Err(CsrlError::Config(format!(
                "d_enc {} must be a positive multiple of heads {}",
                config.d_enc, config.heads
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = EncoderParams::register(&mut params, &config, &mut rng)?;
        let graph = GraphParams::register(
            &mut params,
            config.d_graph,
            config.num_speakers.max(1),
            config.relation_norm,
            &mut rng,
        )?;
        let head = HeadParams::register(
            &mut params,
            config.d_enc,
            config.d_graph,
            labels.len(),
            &mut rng,
        )?;
        Ok(Model {
            config,
            ablations,
            vocab,
            labels,
            params,
            encoder,
            graph,
            head,
        })
    }

    pub fn prepare(&self, inst: &Instance) -> Result<Prepared> {
        let conv = &inst.conversation;
        let frame = &inst.frame;
        if conv.num_speakers > self.graph.num_speakers {
            return Err(CsrlError::TooManySpeakers {
                found: conv.num_speakers,
                max: self.graph.num_speakers,
            });
        }
        let offsets = conv.offsets();
        let pred_base = offsets[frame.predicate_utt];
        let mut predicate_indicator = vec![0; conv.num_tokens()];
        for t in frame.predicate_span.start..frame.predicate_span.end {
            predicate_indicator[pred_base + t] = 1;
        }
        let input = EncoderInput {
            token_ids: conv
                .utterances
                .iter()
                .flat_map(|u| u.tokens.iter().map(|t| self.vocab.id(t)))
                .collect(),
            predicate_indicator,
            utt_of_token: conv.utterance_of_tokens(),
            num_utterances: conv.len(),
        };
        let mask = if self.ablations.full_attention {
            AttentionMask::full(conv.num_tokens())
        } else {
            build_predicate_mask(conv, frame.predicate_utt)
        };
        let mut graph = build_graph(conv, frame.predicate_utt, self.config.window);
        graph.num_speakers = self.graph.num_speakers;
        if self.ablations.no_speaker_dep {
            graph = ablate(&graph, GraphAblation::NoSpeakerDep);
        }
        if self.ablations.no_predicate_dep {
            graph = ablate(&graph, GraphAblation::NoPredicateDep);
        }
        Ok(Prepared {
            input,
            mask,
            graph,
            tags: derive_tags(conv, frame, &self.labels)?,
            intra_mask: objectives::intra_mask(conv, frame),
            utt_types: crate::corpus::derive_utterance_types(conv, frame),
        })
    }

    pub fn forward(&self, tape: &mut Graph, vars: &[Var], prep: &Prepared) -> Result<ForwardOut> {
        let enc = encoder::encode(
            tape,
            vars,
            &self.encoder,
            &self.config,
            &prep.input,
            &prep.mask,
            self.ablations.no_predicate_rep,
        )?;
        if self.ablations.no_sagn {
            return Ok(ForwardOut {
                h: enc.g,
                enc,
                graph: None,
            });
        }
        let out = graph::run_graph(tape, enc.g, &prep.graph, &self.graph, vars)?;
        Ok(ForwardOut {
            h: out.h,
            enc,
            graph: Some(out),
        })
    }

    pub fn losses(
        &self,
        tape: &mut Graph,
        vars: &[Var],
        prep: &Prepared,
        fwd: &ForwardOut,
        weights: &LossWeights,
        reduction: Reduction,
    ) -> Result<LossVars> {
        let (e, p, g, h) = (fwd.enc.e, fwd.enc.p, fwd.enc.g, fwd.h);
        let srl = objectives::srl_loss(
            tape,
            p,
            h,
            &prep.input.utt_of_token,
            &prep.tags,
            &self.head,
            vars,
            reduction,
        )?;
        let intra = objectives::intra_loss(
            tape,
            e,
            p,
            &prep.tags,
            &prep.intra_mask,
            &self.head,
            vars,
            reduction,
        )?;
        let ut = objectives::utterance_type_loss(
            tape,
            g,
            h,
            &prep.utt_types,
            &self.head,
            vars,
            reduction,
        )?;
        let total = objectives::total_loss_var(tape, srl, intra, ut, weights)?;
        Ok(LossVars {
            srl,
            intra,
            ut,
            total,
        })
    }

    /// Loss values and parameter gradients (slot order) for one instance.
    pub fn gradients(
        &self,
        prep: &Prepared,
        weights: &LossWeights,
        reduction: Reduction,
    ) -> Result<(LossValues, Vec<Tensor>)> {
        let mut tape = Graph::new();
        let vars = self.params.bind(&mut tape);
        let fwd = self.forward(&mut tape, &vars, prep)?;
        let l = self.losses(&mut tape, &vars, prep, &fwd, weights, reduction)?;
        let values = LossValues {
            srl: tape.value(l.srl).item(),
            intra: tape.value(l.intra).item(),
            ut: tape.value(l.ut).item(),
            total: tape.value(l.total).item(),
        };
        tape.backward(l.total)?;
        Ok((values, self.params.collect_grads(&tape, &vars)))
    }

    /// Finite-difference check of the full pipeline's total loss on one
    /// instance, at most `per_param` elements per parameter.
    pub fn grad_check(
        &self,
        inst: &Instance,
        weights: &LossWeights,
        reduction: Reduction,
        per_param: usize,
        tolerance: f64,
    ) -> Result<GradCheckReport> {
        let prep = self.prepare(inst)?;
        let params: Vec<(String, Tensor)> = self
            .params
            .iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        let f = |tape: &mut Graph, vars: &[Var]| -> tensorcore::Result<Var> {
            let run = |tape: &mut Graph| -> Result<Var> {
                let fwd = self.forward(tape, vars, &prep)?;
                Ok(self
                    .losses(tape, vars, &prep, &fwd, weights, reduction)?
                    .total)
            };
            run(tape).map_err(|e| match e {
                CsrlError::Tensor(t) => t,
                other => TensorError::External(other.to_string()),
            })
        };
        Ok(grad_check_sampled(f, &params, tolerance, per_param)?)
    }

    pub fn predict_tags(&self, inst: &Instance) -> Result<TagSequence> {
        let prep = self.prepare(inst)?;
        let mut tape = Graph::new();
        let vars = self.params.bind(&mut tape);
        let fwd = self.forward(&mut tape, &vars, &prep)?;
        objectives::decode(
            &mut tape,
            fwd.enc.p,
            fwd.h,
            &inst.conversation,
            &self.labels,
            &self.head,
            &vars,
        )
    }

    pub fn predict(&self, inst: &Instance) -> Result<Vec<ArgumentSpan>> {
        let tags = self.predict_tags(inst)?;
        Ok(bio_to_spans(&tags, &inst.conversation, &self.labels))
    }

    /// Edge weights of an instance's graph (dense, row = target vertex).
    pub fn edge_weights(&self, inst: &Instance) -> Result<(ConvGraph, Tensor)> {
        let prep = self.prepare(inst)?;
        let mut tape = Graph::new();
        let vars = self.params.bind(&mut tape);
        let enc = encoder::encode(
            &mut tape,
            &vars,
            &self.encoder,
            &self.config,
            &prep.input,
            &prep.mask,
            self.ablations.no_predicate_rep,
        )?;
        let alpha = graph::edge_weights(&mut tape, enc.g, &prep.graph, vars[self.graph.w_e])?;
        Ok((prep.graph, tape.value(alpha).clone()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = CheckpointMeta {
            config: self.config.clone(),
            ablations: self.ablations,
            vocab: self.vocab.tokens().to_vec(),
            roles: self.labels.roles().to_vec(),
        };
        self.params.save(path, &serde_json::to_value(meta)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (stored, meta) = ParamStore::load(path)?;
        let meta: CheckpointMeta = serde_json::from_value(meta)?;
        let mut model = Model::new(
            meta.config,
            Vocab::from_tokens(meta.vocab)?,
            LabelSet::new(&meta.roles),
            meta.ablations,
            0,
        )?;
        model.params.assign_from(&stored)?;
        Ok(model)
    }
}
