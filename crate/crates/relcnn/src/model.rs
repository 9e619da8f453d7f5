//! The five classifier variants assembled from the tape primitives:
//!
//! - `binary`: one sigmoid output per (merged slot, inverse) pair,
//! - `multiclass`: softmax over the merged slots plus N,
//! - `multiclass+p`: multiclass plus type embeddings computed from argument
//!   type vectors,
//! - `multiclass+j`: multiclass plus a jointly trained typing network whose
//!   sigmoid scores feed the type embeddings,
//! - `multiclass+s`: entity and relation scores decoded by the chain CRF.
//!
//! All variants share one convolution filter bank across the three contexts
//! and receive the argument-order flag in the hidden layer.

use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use crate::crf::{self, ChainEmissions, ChainLabels, CrfParams};
use crate::embed::{EmbeddingTable, Vocabulary, PAD_ID};
use crate::encode::{reverse_arguments, EncodedExample};
use crate::error::{Error, Result};
use crate::nn::{glorot_radius, init_uniform, Activation};
use crate::rng::{sub_rng, uniform_sym};
use crate::schema::{EntityType, SlotSchema, NUM_TYPES};
use crate::tape::{CrfParamIds, Grads, NodeId, ParamId, ParamSet, Tape};
use crate::tensor::Tensor2;

pub const POOL_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Binary,
    Multiclass,
    MulticlassP,
    MulticlassJ,
    MulticlassS,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "binary" => Ok(Variant::Binary),
            "multiclass" => Ok(Variant::Multiclass),
            "multiclass+p" => Ok(Variant::MulticlassP),
            "multiclass+j" => Ok(Variant::MulticlassJ),
            "multiclass+s" => Ok(Variant::MulticlassS),
            other => Err(Error::InvalidVariant(format!(
                "unknown variant `{other}` (expected binary, multiclass, multiclass+p, multiclass+j, multiclass+s)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Binary => "binary",
            Variant::Multiclass => "multiclass",
            Variant::MulticlassP => "multiclass+p",
            Variant::MulticlassJ => "multiclass+j",
            Variant::MulticlassS => "multiclass+s",
        }
    }

    pub const ALL: [Variant; 5] = [
        Variant::Binary,
        Variant::Multiclass,
        Variant::MulticlassP,
        Variant::MulticlassJ,
        Variant::MulticlassS,
    ];
}

#[derive(Debug, Clone, Copy)]
pub struct ModelDims {
    pub filter_width: usize,
    pub num_filters: usize,
    pub emb_dim: usize,
    pub hidden_rel: usize,
    pub hidden_ent: usize,
}

#[derive(Debug, Clone, Copy)]
struct TypePathIds {
    v: ParamId,
    c: ParamId,
    w5: ParamId,
    w6: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct EntityHeadIds {
    w_a: ParamId,
    w_b: ParamId,
    bias: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct TypingIds {
    conv_f: ParamId,
    conv_b: ParamId,
    e1: EntityHeadIds,
    e2: EntityHeadIds,
}

#[derive(Debug, Clone, Copy)]
struct StructIds {
    e1: EntityHeadIds,
    e2: EntityHeadIds,
    crf: CrfParamIds,
}

#[derive(Debug, Clone)]
struct Ids {
    emb: ParamId,
    conv_f: ParamId,
    conv_b: ParamId,
    w1: ParamId,
    w2: ParamId,
    w3: ParamId,
    w4: ParamId,
    hidden_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
    type_path: Option<TypePathIds>,
    typing: Option<TypingIds>,
    structured: Option<StructIds>,
}

/// Everything needed to run a forward pass against a parameter set.
#[derive(Debug, Clone)]
struct Arch {
    variant: Variant,
    dims: ModelDims,
    ids: Ids,
}

/// Intermediate node handles of one forward pass.
pub struct Heads {
    /// Relation logits (multiclass family, length classes) or the binary logit.
    pub logits: NodeId,
    /// Softmax class probabilities / sigmoid probability.
    pub probs: NodeId,
    /// Typing logits and sigmoid scores for (first, second) sentence-order
    /// entity, +j only.
    pub typing: Option<TypingHeads>,
    /// Emission nodes (e1, rel, e2) for +s.
    pub emissions: Option<(NodeId, NodeId, NodeId)>,
}

pub struct TypingHeads {
    pub t1_logits: NodeId,
    pub t1_scores: NodeId,
    pub t2_logits: NodeId,
    pub t2_scores: NodeId,
}

pub struct Model {
    pub variant: Variant,
    pub schema: SlotSchema,
    pub vocab: Vocabulary,
    pub seed: u64,
    /// Merged slot id served by a binary model.
    pub binary_slot: Option<usize>,
    dims: ModelDims,
    arch: Arch,
    params: ParamSet,
}

/// The alpha-weighted joint objective of relation and typing losses.
pub fn joint_loss(l_rel: f64, l_t1: f64, l_t2: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((1.0 - alpha) * l_rel + alpha / 2.0 * l_t1 + alpha / 2.0 * l_t2)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(())
}

fn one_hot_vec(t: EntityType) -> Vec<f64> {
    t.one_hot().to_vec()
}

/// Sentence-order argument types: the entity appearing first in the sentence
/// and the one appearing second.
fn sentence_order_types(ex: &EncodedExample) -> (EntityType, EntityType) {
    if ex.v == 1 {
        (ex.type1, ex.type2)
    } else {
        (ex.type2, ex.type1)
    }
}

impl Model {
    /// Fresh model with seeded initialization. The embedding table supplies
    /// both the vocabulary and the (pre-trained or random) embedding rows;
    /// the pad row is forced to zero either way.
    pub fn new(
        variant: Variant,
        schema: SlotSchema,
        emb: EmbeddingTable,
        dims: ModelDims,
        seed: u64,
        binary_slot: Option<&str>,
    ) -> Result<Model> {
        if dims.filter_width < 1
            || dims.num_filters < 1
            || dims.emb_dim < 1
            || dims.hidden_rel < 1
            || dims.hidden_ent < 1
        {
            return Err(Error::InvalidConfig("model dimensions must be >= 1".into()));
        }
        if emb.dim != dims.emb_dim {
            return Err(Error::InvalidConfig(format!(
                "embedding table dim {} != configured emb_dim {}",
                emb.dim, dims.emb_dim
            )));
        }
        let binary_slot = match (variant, binary_slot) {
            (Variant::Binary, Some(name)) => {
                let (id, _) = schema.resolve(name)?;
                Some(id)
            }
            (Variant::Binary, None) => {
                return Err(Error::InvalidConfig(
                    "binary variant needs a target slot".into(),
                ))
            }
            (_, _) => None,
        };

        let mut emb_matrix = emb.matrix;
        emb_matrix.row_mut(PAD_ID).fill(0.0);

        let mut params = ParamSet::new();
        let mut rng = sub_rng(seed, "init");
        let num_classes = schema.num_classes();
        let out_dim = if variant == Variant::Binary { 1 } else { num_classes };
        let d = dims.emb_dim;
        let m = dims.num_filters;
        let w = dims.filter_width;
        let h = dims.hidden_rel;
        let he = dims.hidden_ent;
        let pooled = POOL_K * m;

        let reg = |params: &mut ParamSet, name: &str, rows: usize, cols: usize,
                       fan_in: usize, fan_out: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let mut t = Tensor2::zeros(rows, cols);
            init_uniform(&mut t, fan_in, fan_out, rng);
            params.register(name, t)
        };
        let reg_bias = |params: &mut ParamSet, name: &str, len: usize, fan_in: usize,
                        fan_out: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let r = glorot_radius(fan_in, fan_out);
            let data: Vec<f64> = (0..len).map(|_| uniform_sym(rng, r)).collect();
            params.register(name, Tensor2::col(&data))
        };

        let emb_id = params.register("emb", emb_matrix);
        let conv_f = reg(&mut params, "conv.filters", m, w * d, w * d, m, &mut rng);
        let conv_b = reg_bias(&mut params, "conv.bias", m, w * d, m, &mut rng);
        let w1 = reg(&mut params, "hidden.w1", pooled, h, pooled, h, &mut rng);
        let w2 = reg(&mut params, "hidden.w2", pooled, h, pooled, h, &mut rng);
        let w3 = reg(&mut params, "hidden.w3", pooled, h, pooled, h, &mut rng);
        let w4 = reg(&mut params, "hidden.w4", 1, h, 1, h, &mut rng);
        let hidden_b = reg_bias(&mut params, "hidden.bias", h, pooled, h, &mut rng);

        let type_path = match variant {
            Variant::MulticlassP | Variant::MulticlassJ => {
                let v = reg(&mut params, "type.v", NUM_TYPES, he, NUM_TYPES, he, &mut rng);
                let c = reg_bias(&mut params, "type.c", he, NUM_TYPES, he, &mut rng);
                let w5 = reg(&mut params, "hidden.w5", he, h, he, h, &mut rng);
                let w6 = reg(&mut params, "hidden.w6", he, h, he, h, &mut rng);
                Some(TypePathIds { v, c, w5, w6 })
            }
            _ => None,
        };

        let out_w = reg(&mut params, "out.w", h, out_dim, h, out_dim, &mut rng);
        let out_b = reg_bias(&mut params, "out.bias", out_dim, h, out_dim, &mut rng);

        let entity_head = |params: &mut ParamSet, prefix: &str,
                               rng: &mut rand_chacha::ChaCha8Rng| {
            let w_a = reg(params, &format!("{prefix}.w_a"), pooled, he, 2 * pooled, he, rng);
            let w_b = reg(params, &format!("{prefix}.w_b"), pooled, he, 2 * pooled, he, rng);
            let bias = reg_bias(params, &format!("{prefix}.bias"), he, 2 * pooled, he, rng);
            let out_w = reg(params, &format!("{prefix}.out.w"), he, NUM_TYPES, he, NUM_TYPES, rng);
            let out_b = reg_bias(params, &format!("{prefix}.out.bias"), NUM_TYPES, he, NUM_TYPES, rng);
            EntityHeadIds { w_a, w_b, bias, out_w, out_b }
        };

        let typing = if variant == Variant::MulticlassJ {
            let t_conv_f = reg(&mut params, "typing.conv.filters", m, w * d, w * d, m, &mut rng);
            let t_conv_b = reg_bias(&mut params, "typing.conv.bias", m, w * d, m, &mut rng);
            let e1 = entity_head(&mut params, "typing.e1", &mut rng);
            let e2 = entity_head(&mut params, "typing.e2", &mut rng);
            Some(TypingIds { conv_f: t_conv_f, conv_b: t_conv_b, e1, e2 })
        } else {
            None
        };

        let structured = if variant == Variant::MulticlassS {
            let e1 = entity_head(&mut params, "ent1", &mut rng);
            let e2 = entity_head(&mut params, "ent2", &mut rng);
            let begin = reg_bias(&mut params, "crf.begin", NUM_TYPES, 1, NUM_TYPES, &mut rng);
            let ent_rel = reg(&mut params, "crf.ent_rel", NUM_TYPES, num_classes, NUM_TYPES, num_classes, &mut rng);
            let rel_ent = reg(&mut params, "crf.rel_ent", num_classes, NUM_TYPES, num_classes, NUM_TYPES, &mut rng);
            let end = reg_bias(&mut params, "crf.end", NUM_TYPES, 1, NUM_TYPES, &mut rng);
            Some(StructIds {
                e1,
                e2,
                crf: CrfParamIds { begin, ent_rel, rel_ent, end },
            })
        } else {
            None
        };

        let ids = Ids {
            emb: emb_id,
            conv_f,
            conv_b,
            w1,
            w2,
            w3,
            w4,
            hidden_b,
            out_w,
            out_b,
            type_path,
            typing,
            structured,
        };
        Ok(Model {
            variant,
            schema,
            vocab: emb.vocab,
            seed,
            binary_slot,
            dims,
            arch: Arch { variant, dims, ids },
            params,
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    /// Contexts must be padded to at least this many tokens.
    pub fn min_ctx_len(&self) -> usize {
        self.dims.filter_width + POOL_K - 1
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.total_entries()
    }

    #[cfg(test)]
    fn zero_params(&mut self) {
        for id in self.params.ids() {
            self.params.get_mut(id).fill(0.0);
        }
    }

    /// Forward pass; returns the tape (holding all node values) plus the
    /// head node handles.
    pub fn forward(&self, ex: &EncodedExample) -> Result<(Tape<'_>, Heads)> {
        self.arch.forward(&self.params, ex, None)
    }

    /// Forward pass with explicit type vectors (pipeline variant).
    pub fn forward_with_types(
        &self,
        ex: &EncodedExample,
        t1: &[f64; NUM_TYPES],
        t2: &[f64; NUM_TYPES],
    ) -> Result<(Tape<'_>, Heads)> {
        if self.variant != Variant::MulticlassP {
            return Err(Error::InvalidVariant(format!(
                "explicit type vectors need multiclass+p, model is {}",
                self.variant.name()
            )));
        }
        self.arch.forward(&self.params, ex, Some((*t1, *t2)))
    }

    /// Class probabilities over merged slots plus N, in the example's own
    /// orientation. For +s these are the CRF relation marginals conditioned
    /// on the example's observed entity types (the chain's entity positions
    /// are clamped to them, mirroring the typed candidates the pipeline
    /// feeds the classifier).
    pub fn class_probabilities(&self, ex: &EncodedExample) -> Result<Vec<f64>> {
        if self.variant == Variant::Binary {
            return Err(Error::InvalidVariant(
                "binary models score a single slot; use forward_binary".into(),
            ));
        }
        let (tape, heads) = self.forward(ex)?;
        if self.variant == Variant::MulticlassS {
            let (e1, rel, e2) = heads.emissions.expect("structured heads");
            let em = tape.chain_emissions(e1, rel, e2);
            let crf_ids = self.arch.ids.structured.expect("structured ids").crf;
            let params = tape.crf_param_values(crf_ids);
            let (first, second) = sentence_order_types(ex);
            crf::relation_marginals_clamped(&em, &params, first.index(), second.index())
        } else {
            Ok(tape.value(heads.probs).data().to_vec())
        }
    }

    /// Unconditional per-position CRF marginals (+s only).
    pub fn chain_marginals(&self, ex: &EncodedExample) -> Result<crf::ChainMarginals> {
        let (tape, heads) = self.forward(ex)?;
        let (e1, rel, e2) = heads
            .emissions
            .ok_or_else(|| Error::InvalidVariant("model has no CRF layer".into()))?;
        let em = tape.chain_emissions(e1, rel, e2);
        let crf_ids = self.arch.ids.structured.expect("structured ids").crf;
        let params = tape.crf_param_values(crf_ids);
        crf::marginals(&em, &params)
    }

    /// Plain multiclass distribution (spec name).
    pub fn forward_multiclass(&self, ex: &EncodedExample) -> Result<Vec<f64>> {
        if self.variant != Variant::Multiclass {
            return Err(Error::InvalidVariant(format!(
                "forward_multiclass on a {} model",
                self.variant.name()
            )));
        }
        self.class_probabilities(ex)
    }

    /// Pipeline-variant distribution under explicit type vectors.
    pub fn forward_pipeline(
        &self,
        ex: &EncodedExample,
        t1: &[f64; NUM_TYPES],
        t2: &[f64; NUM_TYPES],
    ) -> Result<Vec<f64>> {
        let (tape, heads) = self.forward_with_types(ex, t1, t2)?;
        Ok(tape.value(heads.probs).data().to_vec())
    }

    /// Joint-variant outputs: relation distribution plus the two sigmoid
    /// type-score vectors (sentence order).
    pub fn forward_joint(
        &self,
        ex: &EncodedExample,
    ) -> Result<(Vec<f64>, [f64; NUM_TYPES], [f64; NUM_TYPES])> {
        if self.variant != Variant::MulticlassJ {
            return Err(Error::InvalidVariant(format!(
                "forward_joint on a {} model",
                self.variant.name()
            )));
        }
        let (tape, heads) = self.forward(ex)?;
        let typing = heads.typing.expect("typing heads");
        let mut t1 = [0.0; NUM_TYPES];
        let mut t2 = [0.0; NUM_TYPES];
        t1.copy_from_slice(tape.value(typing.t1_scores).data());
        t2.copy_from_slice(tape.value(typing.t2_scores).data());
        Ok((tape.value(heads.probs).data().to_vec(), t1, t2))
    }

    /// Structured-variant emissions.
    pub fn forward_structured(&self, ex: &EncodedExample) -> Result<ChainEmissions> {
        if self.variant != Variant::MulticlassS {
            return Err(Error::InvalidVariant(format!(
                "forward_structured on a {} model",
                self.variant.name()
            )));
        }
        let (tape, heads) = self.forward(ex)?;
        let (e1, rel, e2) = heads.emissions.expect("structured heads");
        Ok(tape.chain_emissions(e1, rel, e2))
    }

    /// The learned CRF transition tables (+s only).
    pub fn crf_params(&self) -> Result<CrfParams> {
        let ids = self
            .arch
            .ids
            .structured
            .ok_or_else(|| Error::InvalidVariant("model has no CRF layer".into()))?;
        let tape = Tape::new(&self.params);
        Ok(tape.crf_param_values(ids.crf))
    }

    /// Sigmoid probability of the binary model's slot.
    pub fn forward_binary(&self, ex: &EncodedExample) -> Result<f64> {
        if self.variant != Variant::Binary {
            return Err(Error::InvalidVariant(format!(
                "forward_binary on a {} model",
                self.variant.name()
            )));
        }
        let (tape, heads) = self.forward(ex)?;
        Ok(tape.value(heads.probs).data()[0])
    }

    /// Raw score of one merged slot on `ex` as given (no orientation
    /// handling beyond the variant's own semantics).
    fn raw_slot_score(&self, ex: &EncodedExample, merged: usize) -> Result<f64> {
        match self.variant {
            Variant::Binary => {
                let slot = self.binary_slot.expect("binary slot set at construction");
                if merged != slot {
                    return Err(Error::InvalidVariant(format!(
                        "binary model serves {}, queried {}",
                        self.schema.merged_name(slot),
                        self.schema.merged_name(merged)
                    )));
                }
                self.forward_binary(ex)
            }
            _ => Ok(self.class_probabilities(ex)?[merged]),
        }
    }

    /// Probability that `ex` expresses `queried` (an original or merged slot
    /// name). Inverse-oriented slots are answered on the tag-reversed
    /// example; self-inverse slots average both orientations so that the
    /// reversal identity holds exactly for them too. For +s the relation
    /// marginal is read.
    pub fn predict_slot_probability(&self, ex: &EncodedExample, queried: &str) -> Result<f64> {
        let (merged, reversed) = self.schema.resolve(queried)?;
        let oriented;
        let ex = if reversed {
            oriented = reverse_arguments(ex);
            &oriented
        } else {
            ex
        };
        if self.schema.is_self_inverse(merged) {
            let a = self.raw_slot_score(ex, merged)?;
            let b = self.raw_slot_score(&reverse_arguments(ex), merged)?;
            Ok((a + b) / 2.0)
        } else {
            self.raw_slot_score(ex, merged)
        }
    }

    /// Per-merged-slot probabilities for an example already in canonical
    /// orientation (used by the evaluator); self-inverse columns carry the
    /// orientation-averaged scores that `predict_slot_probability` exposes.
    /// Binary models fill only their own slot.
    pub fn slot_probabilities(&self, ex: &EncodedExample) -> Result<Vec<f64>> {
        let n = self.schema.num_merged();
        match self.variant {
            Variant::Binary => {
                let slot = self.binary_slot.expect("binary slot");
                let mut out = vec![0.0; n];
                out[slot] = if self.schema.is_self_inverse(slot) {
                    let a = self.forward_binary(ex)?;
                    let b = self.forward_binary(&reverse_arguments(ex))?;
                    (a + b) / 2.0
                } else {
                    self.forward_binary(ex)?
                };
                Ok(out)
            }
            _ => {
                let mut probs = self.class_probabilities(ex)?;
                probs.truncate(n);
                if (0..n).any(|m| self.schema.is_self_inverse(m)) {
                    let mut rev = self.class_probabilities(&reverse_arguments(ex))?;
                    rev.truncate(n);
                    for m in 0..n {
                        if self.schema.is_self_inverse(m) {
                            probs[m] = (probs[m] + rev[m]) / 2.0;
                        }
                    }
                }
                Ok(probs)
            }
        }
    }

    /// Loss tape for one example.
    pub fn loss(&self, ex: &EncodedExample, alpha: f64) -> Result<(Tape<'_>, NodeId)> {
        self.arch.loss(&self.params, ex, alpha, self.binary_slot)
    }

    pub fn loss_value(&self, ex: &EncodedExample, alpha: f64) -> Result<f64> {
        let (tape, node) = self.loss(ex, alpha)?;
        Ok(tape.scalar(node))
    }

    /// Summed loss and gradients over a batch.
    pub fn batch_loss_and_grads(
        &self,
        batch: &[&EncodedExample],
        alpha: f64,
        grads: &mut Grads,
    ) -> Result<f64> {
        let mut total = 0.0;
        for ex in batch {
            let (tape, node) = self.loss(ex, alpha)?;
            total += tape.scalar(node);
            tape.backward_into(node, grads)?;
        }
        Ok(total)
    }

    /// Max relative error of analytic vs central-difference gradients of the
    /// summed loss over `examples`.
    pub fn gradient_check(
        &mut self,
        examples: &[EncodedExample],
        alpha: f64,
        eps: f64,
    ) -> Result<f64> {
        let arch = self.arch.clone();
        let binary_slot = self.binary_slot;
        let total_loss = |params: &ParamSet| -> Result<f64> {
            let mut sum = 0.0;
            for ex in examples {
                let (tape, node) = arch.loss(params, ex, alpha, binary_slot)?;
                sum += tape.scalar(node);
            }
            Ok(sum)
        };
        let mut analytic = Grads::zeros_like(&self.params);
        for ex in examples {
            let (tape, node) = arch.loss(&self.params, ex, alpha, binary_slot)?;
            tape.backward_into(node, &mut analytic)?;
        }
        crate::optim::grad_check(&mut self.params, &analytic, total_loss, eps)
    }
}

/// Seeded random probe examples matching a model's vocabulary and minimum
/// context length (gradient checking, smoke tests).
pub fn random_examples(model: &Model, n: usize, seed: u64) -> Vec<EncodedExample> {
    use rand::Rng;
    let mut rng = sub_rng(seed, "probe-examples");
    let min = model.min_ctx_len();
    let vlen = model.vocab.len();
    let n_classes = model.schema.num_classes();
    (0..n)
        .map(|_| {
            let ctx = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<usize> {
                let len = min + rng.random_range(0..4usize);
                (0..len).map(|_| rng.random_range(0..vlen)).collect()
            };
            EncodedExample {
                left: ctx(&mut rng),
                middle: ctx(&mut rng),
                right: ctx(&mut rng),
                v: rng.random_range(0..2u8),
                gold: rng.random_range(0..n_classes),
                type1: EntityType::from_index(rng.random_range(0..NUM_TYPES)).unwrap(),
                type2: EntityType::from_index(rng.random_range(0..NUM_TYPES)).unwrap(),
            }
        })
        .collect()
}

impl Arch {
    fn pooled<'p>(
        &self,
        tape: &mut Tape<'p>,
        ids_seq: &[usize],
        conv_f: ParamId,
        conv_b: ParamId,
        emb_node: Option<NodeId>,
    ) -> Result<(NodeId, NodeId)> {
        let e = match emb_node {
            Some(n) => n,
            None => tape.embed(self.ids.emb, ids_seq)?,
        };
        let c = tape.conv(e, conv_f, conv_b, self.dims.filter_width)?;
        let p = tape.kmax(c, POOL_K)?;
        Ok((e, tape.flatten(p)))
    }

    /// Shared trunk and heads. `type_override` forces explicit type vectors
    /// into the type-embedding pathway (+p).
    fn forward<'p>(
        &self,
        params: &'p ParamSet,
        ex: &EncodedExample,
        type_override: Option<([f64; NUM_TYPES], [f64; NUM_TYPES])>,
    ) -> Result<(Tape<'p>, Heads)> {
        let mut tape = Tape::new(params);
        let ids = &self.ids;
        let (el, pl) = self.pooled(&mut tape, &ex.left, ids.conv_f, ids.conv_b, None)?;
        let (em, pm) = self.pooled(&mut tape, &ex.middle, ids.conv_f, ids.conv_b, None)?;
        let (er, pr) = self.pooled(&mut tape, &ex.right, ids.conv_f, ids.conv_b, None)?;
        let v = tape.constant_scalar(ex.v as f64);

        let mut hidden_terms = vec![
            (pl, ids.w1),
            (pm, ids.w2),
            (pr, ids.w3),
            (v, ids.w4),
        ];

        let mut typing_heads = None;
        match self.variant {
            Variant::MulticlassP => {
                let tp = ids.type_path.expect("type path ids");
                let (t1, t2) = match type_override {
                    Some((a, b)) => (a.to_vec(), b.to_vec()),
                    // Argument types travel with their tags: t1 belongs to
                    // <name>, t2 to <filler>.
                    None => (one_hot_vec(ex.type1), one_hot_vec(ex.type2)),
                };
                let t1 = tape.constant(Tensor2::col(&t1));
                let t2 = tape.constant(Tensor2::col(&t2));
                let e1 = tape.affine(&[(t1, tp.v)], tp.c, Activation::Tanh)?;
                let e2 = tape.affine(&[(t2, tp.v)], tp.c, Activation::Tanh)?;
                hidden_terms.push((e1, tp.w5));
                hidden_terms.push((e2, tp.w6));
            }
            Variant::MulticlassJ => {
                let tp = ids.type_path.expect("type path ids");
                let ty = ids.typing.expect("typing ids");
                // Separate filter bank over the shared embedded contexts.
                let (_, tpl) = self.pooled(&mut tape, &ex.left, ty.conv_f, ty.conv_b, Some(el))?;
                let (_, tpm) = self.pooled(&mut tape, &ex.middle, ty.conv_f, ty.conv_b, Some(em))?;
                let (_, tpr) = self.pooled(&mut tape, &ex.right, ty.conv_f, ty.conv_b, Some(er))?;
                let h1 = tape.affine(
                    &[(tpl, ty.e1.w_a), (tpm, ty.e1.w_b)],
                    ty.e1.bias,
                    Activation::Tanh,
                )?;
                let t1_logits = tape.affine(&[(h1, ty.e1.out_w)], ty.e1.out_b, Activation::Identity)?;
                let t1_scores = tape.sigmoid(t1_logits);
                let h2 = tape.affine(
                    &[(tpm, ty.e2.w_a), (tpr, ty.e2.w_b)],
                    ty.e2.bias,
                    Activation::Tanh,
                )?;
                let t2_logits = tape.affine(&[(h2, ty.e2.out_w)], ty.e2.out_b, Activation::Identity)?;
                let t2_scores = tape.sigmoid(t2_logits);
                let e1 = tape.affine(&[(t1_scores, tp.v)], tp.c, Activation::Tanh)?;
                let e2 = tape.affine(&[(t2_scores, tp.v)], tp.c, Activation::Tanh)?;
                hidden_terms.push((e1, tp.w5));
                hidden_terms.push((e2, tp.w6));
                typing_heads = Some(TypingHeads {
                    t1_logits,
                    t1_scores,
                    t2_logits,
                    t2_scores,
                });
            }
            _ => {}
        }

        let s = tape.affine(&hidden_terms, ids.hidden_b, Activation::Tanh)?;
        let logits = tape.affine(&[(s, ids.out_w)], ids.out_b, Activation::Identity)?;

        let mut emissions = None;
        let probs = match self.variant {
            Variant::Binary => tape.sigmoid(logits),
            Variant::MulticlassS => {
                let st = ids.structured.expect("structured ids");
                let h1 = tape.affine(
                    &[(pl, st.e1.w_a), (pm, st.e1.w_b)],
                    st.e1.bias,
                    Activation::Tanh,
                )?;
                let e1_em = tape.affine(&[(h1, st.e1.out_w)], st.e1.out_b, Activation::Identity)?;
                let h2 = tape.affine(
                    &[(pm, st.e2.w_a), (pr, st.e2.w_b)],
                    st.e2.bias,
                    Activation::Tanh,
                )?;
                let e2_em = tape.affine(&[(h2, st.e2.out_w)], st.e2.out_b, Activation::Identity)?;
                emissions = Some((e1_em, logits, e2_em));
                // Raw softmax of emissions; CRF marginals are computed by the
                // caller when proper chain posteriors are needed.
                tape.softmax_probs(logits)
            }
            _ => tape.softmax_probs(logits),
        };

        Ok((
            tape,
            Heads {
                logits,
                probs,
                typing: typing_heads,
                emissions,
            },
        ))
    }

    fn loss<'p>(
        &self,
        params: &'p ParamSet,
        ex: &EncodedExample,
        alpha: f64,
        binary_slot: Option<usize>,
    ) -> Result<(Tape<'p>, NodeId)> {
        let (mut tape, heads) = self.forward(params, ex, None)?;
        let node = match self.variant {
            Variant::Binary => {
                let slot = binary_slot.expect("binary slot");
                let target = if ex.gold == slot { 1.0 } else { 0.0 };
                tape.sigmoid_bce(heads.logits, vec![target])?
            }
            Variant::Multiclass | Variant::MulticlassP => {
                tape.softmax_nll(heads.logits, ex.gold)?
            }
            Variant::MulticlassJ => {
                check_alpha(alpha)?;
                let typing = heads.typing.as_ref().expect("typing heads");
                let (first, second) = sentence_order_types(ex);
                let l_rel = tape.softmax_nll(heads.logits, ex.gold)?;
                let l_t1 = tape.sigmoid_bce(typing.t1_logits, one_hot_vec(first))?;
                let l_t2 = tape.sigmoid_bce(typing.t2_logits, one_hot_vec(second))?;
                tape.weighted_sum(&[
                    (l_rel, 1.0 - alpha),
                    (l_t1, alpha / 2.0),
                    (l_t2, alpha / 2.0),
                ])?
            }
            Variant::MulticlassS => {
                let (e1, rel, e2) = heads.emissions.expect("structured heads");
                let st = self.ids.structured.expect("structured ids");
                let (first, second) = sentence_order_types(ex);
                let gold = ChainLabels {
                    e1: first.index(),
                    rel: ex.gold,
                    e2: second.index(),
                };
                tape.crf_nll(e1, rel, e2, st.crf, gold)?
            }
        };
        Ok((tape, node))
    }
}

// ---------------------------------------------------------------------------
// Serialization: versioned text format, 17 significant digits per value.
// ---------------------------------------------------------------------------

const MAGIC: &str = "relcnn model v1";

impl Model {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{MAGIC}")?;
        writeln!(f, "variant {}", self.variant.name())?;
        writeln!(f, "seed {}", self.seed)?;
        writeln!(
            f,
            "dims {} {} {} {} {}",
            self.dims.filter_width,
            self.dims.num_filters,
            self.dims.emb_dim,
            self.dims.hidden_rel,
            self.dims.hidden_ent
        )?;
        match self.binary_slot {
            Some(id) => writeln!(f, "binary_slot {}", self.schema.merged_name(id))?,
            None => writeln!(f, "binary_slot -")?,
        }
        writeln!(f, "vocab {}", self.vocab.len())?;
        for t in self.vocab.tokens() {
            writeln!(f, "{t}")?;
        }
        writeln!(f, "params {}", self.params.len())?;
        for (_, name, tensor) in self.params.iter() {
            writeln!(f, "param {name} {} {}", tensor.rows(), tensor.cols())?;
            for v in tensor.data() {
                writeln!(f, "{v:.16e}")?;
            }
        }
        writeln!(f, "end")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        let file = std::fs::File::open(path).map_err(|e| {
            Error::ModelFormat(format!("cannot open {}: {e}", path.display()))
        })?;
        let mut lines = BufReader::new(file).lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::ModelFormat("unexpected end of model file".into()))?
                .map_err(Error::Io)
        };
        if next()? != MAGIC {
            return Err(Error::ModelFormat("bad magic header".into()));
        }
        let variant_line = next()?;
        let variant = Variant::parse(
            variant_line
                .strip_prefix("variant ")
                .ok_or_else(|| Error::ModelFormat("missing variant line".into()))?,
        )?;
        let seed: u64 = next()?
            .strip_prefix("seed ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::ModelFormat("missing seed line".into()))?;
        let dims_line = next()?;
        let nums: Vec<usize> = dims_line
            .strip_prefix("dims ")
            .map(|s| s.split_whitespace().flat_map(|x| x.parse().ok()).collect())
            .ok_or_else(|| Error::ModelFormat("missing dims line".into()))?;
        if nums.len() != 5 {
            return Err(Error::ModelFormat("dims line needs 5 numbers".into()));
        }
        let dims = ModelDims {
            filter_width: nums[0],
            num_filters: nums[1],
            emb_dim: nums[2],
            hidden_rel: nums[3],
            hidden_ent: nums[4],
        };
        let binary_line = next()?;
        let binary_slot_name = binary_line
            .strip_prefix("binary_slot ")
            .ok_or_else(|| Error::ModelFormat("missing binary_slot line".into()))?
            .to_string();
        let vocab_len: usize = next()?
            .strip_prefix("vocab ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::ModelFormat("missing vocab line".into()))?;
        let mut vocab = Vocabulary::new();
        for i in 0..vocab_len {
            let tok = next()?;
            if i < 4 {
                // reserved tokens are created by Vocabulary::new
                continue;
            }
            vocab.add(&tok);
        }
        if vocab.len() != vocab_len {
            return Err(Error::ModelFormat("vocabulary size mismatch".into()));
        }

        let schema = SlotSchema::tac_kbp();
        let emb = EmbeddingTable {
            matrix: Tensor2::zeros(vocab.len(), dims.emb_dim),
            dim: dims.emb_dim,
            vocab,
        };
        let binary_slot = if binary_slot_name == "-" {
            None
        } else {
            Some(binary_slot_name.as_str())
        };
        let mut model = Model::new(variant, schema, emb, dims, seed, binary_slot)?;

        let param_count: usize = next()?
            .strip_prefix("params ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::ModelFormat("missing params line".into()))?;
        if param_count != model.params.len() {
            return Err(Error::ModelFormat(format!(
                "file has {param_count} parameter blocks, architecture expects {}",
                model.params.len()
            )));
        }
        for id in model.params.ids() {
            let header = next()?;
            let mut it = header.split_whitespace();
            if it.next() != Some("param") {
                return Err(Error::ModelFormat("expected param header".into()));
            }
            let name = it
                .next()
                .ok_or_else(|| Error::ModelFormat("param header missing name".into()))?;
            if name != model.params.name(id) {
                return Err(Error::ModelFormat(format!(
                    "parameter order mismatch: file has {name}, expected {}",
                    model.params.name(id)
                )));
            }
            let rows: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::ModelFormat("bad param rows".into()))?;
            let cols: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::ModelFormat("bad param cols".into()))?;
            let t = model.params.get_mut(id);
            if t.rows() != rows || t.cols() != cols {
                return Err(Error::ModelFormat(format!(
                    "parameter {name} is {rows}x{cols} in file, architecture expects {}x{}",
                    t.rows(),
                    t.cols()
                )));
            }
            for i in 0..rows * cols {
                let line = next()?;
                let v: f64 = line
                    .parse()
                    .map_err(|_| Error::ModelFormat(format!("bad value `{line}` in {name}")))?;
                t.data_mut()[i] = v;
            }
        }
        if next()? != "end" {
            return Err(Error::ModelFormat("missing end marker".into()));
        }
        Ok(model)
    }
}
