//! Reverse-mode gradient tape.
//!
//! A `Tape` records the forward steps of one loss computation eagerly; every
//! step stores its output value and enough bookkeeping to push adjoints back
//! through it. Replaying the record in reverse accumulates exact analytic
//! gradients for every registered parameter (and every intermediate node)
//! exactly once.
//!
//! Parameters live outside the tape in a [`ParamSet`]; ops reference them by
//! id, so a forward pass never copies parameter tensors.

use crate::crf::{self, ChainEmissions, ChainLabels, CrfParams};
use crate::error::{Error, Result};
use crate::nn::{kmax_indices, sigmoid, softmax, Activation};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// Named parameter tensors. Registration order is the serialization order.
#[derive(Debug, Clone)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor2>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, t: Tensor2) -> ParamId {
        let name = name.into();
        debug_assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor2 {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.tensors[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor2)> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    pub fn total_entries(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.all_finite())
    }

    /// Overwrite every tensor's values from an identically shaped set
    /// (snapshot restore during training).
    pub fn copy_values_from(&mut self, other: &ParamSet) {
        debug_assert_eq!(self.tensors.len(), other.tensors.len());
        for (a, b) in self.tensors.iter_mut().zip(other.tensors.iter()) {
            debug_assert!(a.same_shape(b));
            a.data_mut().copy_from_slice(b.data());
        }
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient accumulator aligned with a `ParamSet`.
#[derive(Debug, Clone)]
pub struct Grads {
    tensors: Vec<Tensor2>,
}

impl Grads {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Grads {
            tensors: params
                .tensors
                .iter()
                .map(|t| Tensor2::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor2 {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.tensors[id.0]
    }

    pub fn zero_all(&mut self) {
        for t in self.tensors.iter_mut() {
            t.fill(0.0);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.tensors.iter_mut() {
            t.scale(c);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.all_finite())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy)]
pub struct CrfParamIds {
    pub begin: ParamId,
    pub ent_rel: ParamId,
    pub rel_ent: ParamId,
    pub end: ParamId,
}

enum Op {
    Constant,
    Embed {
        table: ParamId,
        ids: Vec<usize>,
    },
    Conv {
        input: NodeId,
        filters: ParamId,
        bias: ParamId,
        width: usize,
    },
    KMax {
        input: NodeId,
        kept: Vec<usize>,
        k: usize,
    },
    /// act(sum_i W_i^T x_i + b) over column-vector inputs.
    AffineSum {
        terms: Vec<(NodeId, ParamId)>,
        bias: ParamId,
        act: Activation,
    },
    Concat {
        parts: Vec<NodeId>,
    },
    Flatten {
        input: NodeId,
    },
    Sigmoid {
        input: NodeId,
    },
    Softmax {
        input: NodeId,
    },
    SoftmaxNll {
        logits: NodeId,
        gold: usize,
        probs: Vec<f64>,
    },
    SigmoidBce {
        logits: NodeId,
        targets: Vec<f64>,
    },
    WeightedSum {
        terms: Vec<(NodeId, f64)>,
    },
    CrfNll {
        e1: NodeId,
        rel: NodeId,
        e2: NodeId,
        crf: CrfParamIds,
        grads: Box<crf::CrfGrads>,
    },
}

struct Node {
    value: Tensor2,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor2, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor2) -> NodeId {
        self.push(t, Op::Constant)
    }

    pub fn constant_scalar(&mut self, v: f64) -> NodeId {
        self.constant(Tensor2::col(&[v]))
    }

    /// Row gather from an embedding table parameter.
    pub fn embed(&mut self, table: ParamId, ids: &[usize]) -> Result<NodeId> {
        let t = self.params.get(table);
        let mut out = Tensor2::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            if id >= t.rows() {
                return Err(Error::InvalidLabel(format!(
                    "token id {} outside embedding table of {} rows",
                    id,
                    t.rows()
                )));
            }
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        Ok(self.push(
            out,
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Shared-filter tanh convolution; `filters` is m x (width * D).
    pub fn conv(
        &mut self,
        input: NodeId,
        filters: ParamId,
        bias: ParamId,
        width: usize,
    ) -> Result<NodeId> {
        let x = self.value(input);
        let f = self.params.get(filters);
        let b = self.params.get(bias);
        let d = x.cols();
        if f.cols() != width * d {
            return Err(Error::InvalidShape(format!(
                "conv filters have {} cols, expected width {} x dim {}",
                f.cols(),
                width,
                d
            )));
        }
        if b.rows() != f.rows() || b.cols() != 1 {
            return Err(Error::InvalidShape("conv bias shape mismatch".into()));
        }
        if x.rows() < width {
            return Err(Error::InvalidShape(format!(
                "conv input length {} < filter width {}",
                x.rows(),
                width
            )));
        }
        let m = f.rows();
        let out_len = x.rows() - width + 1;
        let mut out = Tensor2::zeros(m, out_len);
        for i in 0..m {
            let fr = f.row(i);
            for t in 0..out_len {
                let mut z = b.get(i, 0);
                for j in 0..width {
                    let xr = x.row(t + j);
                    let fj = &fr[j * d..(j + 1) * d];
                    for k in 0..d {
                        z += fj[k] * xr[k];
                    }
                }
                out.set(i, t, z.tanh());
            }
        }
        Ok(self.push(
            out,
            Op::Conv {
                input,
                filters,
                bias,
                width,
            },
        ))
    }

    /// Per-row k largest values in original order.
    pub fn kmax(&mut self, input: NodeId, k: usize) -> Result<NodeId> {
        let x = self.value(input);
        if x.cols() < k {
            return Err(Error::InvalidShape(format!(
                "k-max pooling needs >= {} columns, got {}",
                k,
                x.cols()
            )));
        }
        let mut out = Tensor2::zeros(x.rows(), k);
        let mut kept = Vec::with_capacity(x.rows() * k);
        for i in 0..x.rows() {
            let idx = kmax_indices(x.row(i), k);
            for (a, &t) in idx.iter().enumerate() {
                out.set(i, a, x.get(i, t));
            }
            kept.extend_from_slice(&idx);
        }
        Ok(self.push(out, Op::KMax { input, kept, k }))
    }

    pub fn affine(
        &mut self,
        terms: &[(NodeId, ParamId)],
        bias: ParamId,
        act: Activation,
    ) -> Result<NodeId> {
        let b = self.params.get(bias);
        if b.cols() != 1 {
            return Err(Error::InvalidShape("affine bias must be a column".into()));
        }
        let out_dim = b.rows();
        let mut pre: Vec<f64> = b.data().to_vec();
        for &(x_id, w_id) in terms {
            let x = self.value(x_id);
            let w = self.params.get(w_id);
            if x.cols() != 1 {
                return Err(Error::InvalidShape("affine input must be a column".into()));
            }
            if w.rows() != x.rows() || w.cols() != out_dim {
                return Err(Error::InvalidShape(format!(
                    "affine weight {}x{} incompatible with input len {} / output {}",
                    w.rows(),
                    w.cols(),
                    x.rows(),
                    out_dim
                )));
            }
            for i in 0..x.rows() {
                let xi = x.get(i, 0);
                let wr = w.row(i);
                for (j, p) in pre.iter_mut().enumerate() {
                    *p += wr[j] * xi;
                }
            }
        }
        for p in pre.iter_mut() {
            *p = act.apply(*p);
        }
        Ok(self.push(
            Tensor2::col(&pre),
            Op::AffineSum {
                terms: terms.to_vec(),
                bias,
                act,
            },
        ))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.cols() != 1 {
                return Err(Error::InvalidShape("concat expects column vectors".into()));
            }
            data.extend_from_slice(v.data());
        }
        Ok(self.push(
            Tensor2::col(&data),
            Op::Concat {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Row-major reshape of an m x k matrix into an (m*k) x 1 column.
    pub fn flatten(&mut self, input: NodeId) -> NodeId {
        let x = self.value(input);
        let data = x.data().to_vec();
        self.push(Tensor2::col(&data), Op::Flatten { input })
    }

    pub fn sigmoid(&mut self, input: NodeId) -> NodeId {
        let x = self.value(input);
        let out: Vec<f64> = x.data().iter().map(|&z| sigmoid(z)).collect();
        self.push(Tensor2::col(&out), Op::Sigmoid { input })
    }

    pub fn softmax_probs(&mut self, input: NodeId) -> NodeId {
        let x = self.value(input);
        let out = softmax(x.data());
        self.push(Tensor2::col(&out), Op::Softmax { input })
    }

    /// Fused softmax + NLL of the gold class; value is the scalar loss.
    pub fn softmax_nll(&mut self, logits: NodeId, gold: usize) -> Result<NodeId> {
        let z = self.value(logits);
        if gold >= z.rows() {
            return Err(Error::InvalidLabel(format!(
                "gold index {} for {} classes",
                gold,
                z.rows()
            )));
        }
        let probs = softmax(z.data());
        let loss = -probs[gold].ln();
        Ok(self.push(
            Tensor2::col(&[loss]),
            Op::SoftmaxNll {
                logits,
                gold,
                probs,
            },
        ))
    }

    /// Fused sigmoid + summed binary cross-entropy; value is the scalar loss.
    pub fn sigmoid_bce(&mut self, logits: NodeId, targets: Vec<f64>) -> Result<NodeId> {
        let z = self.value(logits);
        if z.rows() != targets.len() {
            return Err(Error::InvalidShape(format!(
                "bce targets len {} != logits len {}",
                targets.len(),
                z.rows()
            )));
        }
        let mut loss = 0.0;
        for (&zi, &t) in z.data().iter().zip(targets.iter()) {
            loss += zi.max(0.0) - zi * t + (-zi.abs()).exp().ln_1p();
        }
        Ok(self.push(Tensor2::col(&[loss]), Op::SigmoidBce { logits, targets }))
    }

    /// Weighted sum of scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId> {
        let mut v = 0.0;
        for &(id, w) in terms {
            let t = self.value(id);
            if t.len() != 1 {
                return Err(Error::InvalidShape("weighted_sum expects scalars".into()));
            }
            v += w * t.data()[0];
        }
        Ok(self.push(
            Tensor2::col(&[v]),
            Op::WeightedSum {
                terms: terms.to_vec(),
            },
        ))
    }

    fn crf_params(&self, ids: CrfParamIds) -> CrfParams {
        CrfParams {
            t_begin_ent: self.params.get(ids.begin).data().to_vec(),
            t_ent_rel: self.params.get(ids.ent_rel).clone(),
            t_rel_ent: self.params.get(ids.rel_ent).clone(),
            t_ent_end: self.params.get(ids.end).data().to_vec(),
        }
    }

    /// Chain CRF negative log-likelihood over emission nodes; exact gradients
    /// (marginal expectation minus gold indicator) are cached at forward time.
    pub fn crf_nll(
        &mut self,
        e1: NodeId,
        rel: NodeId,
        e2: NodeId,
        crf_ids: CrfParamIds,
        gold: ChainLabels,
    ) -> Result<NodeId> {
        let em = ChainEmissions {
            e1: self.value(e1).data().to_vec(),
            rel: self.value(rel).data().to_vec(),
            e2: self.value(e2).data().to_vec(),
        };
        let params = self.crf_params(crf_ids);
        let (loss, grads) = crf::nll_and_gradients(&em, &params, gold)?;
        Ok(self.push(
            Tensor2::col(&[loss]),
            Op::CrfNll {
                e1,
                rel,
                e2,
                crf: crf_ids,
                grads: Box::new(grads),
            },
        ))
    }

    /// Emissions read out of the tape plus CRF parameter values, for
    /// inference-time decoding outside the tape.
    pub fn chain_emissions(&self, e1: NodeId, rel: NodeId, e2: NodeId) -> ChainEmissions {
        ChainEmissions {
            e1: self.value(e1).data().to_vec(),
            rel: self.value(rel).data().to_vec(),
            e2: self.value(e2).data().to_vec(),
        }
    }

    pub fn crf_param_values(&self, ids: CrfParamIds) -> CrfParams {
        self.crf_params(ids)
    }

    /// Accumulate d(loss)/d(param) into `grads` for every parameter.
    pub fn backward_into(&self, loss: NodeId, grads: &mut Grads) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::InvalidShape("backward target must be scalar".into()));
        }
        let mut adj: Vec<Tensor2> = self
            .nodes
            .iter()
            .take(loss.0 + 1)
            .map(|n| Tensor2::zeros(n.value.rows(), n.value.cols()))
            .collect();
        adj[loss.0].set(0, 0, 1.0);

        for i in (0..=loss.0).rev() {
            let (lower, upper) = adj.split_at_mut(i);
            let gout = &upper[0];
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Embed { table, ids } => {
                    let gt = grads.get_mut(*table);
                    for (r, &id) in ids.iter().enumerate() {
                        let src = gout.row(r);
                        let dst = gt.row_mut(id);
                        for (d, s) in dst.iter_mut().zip(src.iter()) {
                            *d += s;
                        }
                    }
                }
                Op::Conv {
                    input,
                    filters,
                    bias,
                    width,
                } => {
                    let x = &self.nodes[input.0].value;
                    let f = self.params.get(*filters);
                    let d = x.cols();
                    let m = f.rows();
                    let out_len = x.rows() - width + 1;
                    let out = &node.value;
                    // dz = gout * (1 - out^2), then scatter into filter,
                    // bias and input gradients.
                    {
                        let gf = grads.get_mut(*filters);
                        for i_f in 0..m {
                            let gfr = gf.row_mut(i_f);
                            for t in 0..out_len {
                                let dz = gout.get(i_f, t)
                                    * (1.0 - out.get(i_f, t) * out.get(i_f, t));
                                if dz == 0.0 {
                                    continue;
                                }
                                for j in 0..*width {
                                    let xr = x.row(t + j);
                                    let gfj = &mut gfr[j * d..(j + 1) * d];
                                    for k in 0..d {
                                        gfj[k] += dz * xr[k];
                                    }
                                }
                            }
                        }
                    }
                    {
                        let gb = grads.get_mut(*bias);
                        for i_f in 0..m {
                            let mut s = 0.0;
                            for t in 0..out_len {
                                s += gout.get(i_f, t)
                                    * (1.0 - out.get(i_f, t) * out.get(i_f, t));
                            }
                            gb.add_at(i_f, 0, s);
                        }
                    }
                    let gx = &mut lower[input.0];
                    for i_f in 0..m {
                        let fr = f.row(i_f);
                        for t in 0..out_len {
                            let dz =
                                gout.get(i_f, t) * (1.0 - out.get(i_f, t) * out.get(i_f, t));
                            if dz == 0.0 {
                                continue;
                            }
                            for j in 0..*width {
                                let fj = &fr[j * d..(j + 1) * d];
                                let gxr = gx.row_mut(t + j);
                                for k in 0..d {
                                    gxr[k] += dz * fj[k];
                                }
                            }
                        }
                    }
                }
                Op::KMax { input, kept, k } => {
                    let gx = &mut lower[input.0];
                    for r in 0..node.value.rows() {
                        for a in 0..*k {
                            gx.add_at(r, kept[r * k + a], gout.get(r, a));
                        }
                    }
                }
                Op::AffineSum { terms, bias, act } => {
                    let out = &node.value;
                    let dpre: Vec<f64> = (0..out.rows())
                        .map(|j| gout.get(j, 0) * act.deriv_from_output(out.get(j, 0)))
                        .collect();
                    {
                        let gb = grads.get_mut(*bias);
                        for (j, &dp) in dpre.iter().enumerate() {
                            gb.add_at(j, 0, dp);
                        }
                    }
                    for &(x_id, w_id) in terms {
                        let x = &self.nodes[x_id.0].value;
                        let w = self.params.get(w_id);
                        {
                            let gw = grads.get_mut(w_id);
                            for i_x in 0..x.rows() {
                                let xi = x.get(i_x, 0);
                                if xi == 0.0 {
                                    continue;
                                }
                                let gwr = gw.row_mut(i_x);
                                for (j, &dp) in dpre.iter().enumerate() {
                                    gwr[j] += xi * dp;
                                }
                            }
                        }
                        let gx = &mut lower[x_id.0];
                        for i_x in 0..x.rows() {
                            let wr = w.row(i_x);
                            let mut s = 0.0;
                            for (j, &dp) in dpre.iter().enumerate() {
                                s += wr[j] * dp;
                            }
                            gx.add_at(i_x, 0, s);
                        }
                    }
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let gx = &mut lower[p.0];
                        for r in 0..gx.rows() {
                            gx.add_at(r, 0, gout.get(offset + r, 0));
                        }
                        offset += gx.rows();
                    }
                }
                Op::Flatten { input } => {
                    let gx = &mut lower[input.0];
                    let cols = gx.cols();
                    for r in 0..gx.rows() {
                        for c in 0..cols {
                            gx.add_at(r, c, gout.get(r * cols + c, 0));
                        }
                    }
                }
                Op::Sigmoid { input } => {
                    let out = &node.value;
                    let gx = &mut lower[input.0];
                    for r in 0..out.rows() {
                        let y = out.get(r, 0);
                        gx.add_at(r, 0, gout.get(r, 0) * y * (1.0 - y));
                    }
                }
                Op::Softmax { input } => {
                    let p = &node.value;
                    let dot: f64 = (0..p.rows())
                        .map(|r| p.get(r, 0) * gout.get(r, 0))
                        .sum();
                    let gx = &mut lower[input.0];
                    for r in 0..p.rows() {
                        gx.add_at(r, 0, p.get(r, 0) * (gout.get(r, 0) - dot));
                    }
                }
                Op::SoftmaxNll {
                    logits,
                    gold,
                    probs,
                } => {
                    let g = gout.get(0, 0);
                    let gx = &mut lower[logits.0];
                    for (r, &p) in probs.iter().enumerate() {
                        let ind = if r == *gold { 1.0 } else { 0.0 };
                        gx.add_at(r, 0, g * (p - ind));
                    }
                }
                Op::SigmoidBce { logits, targets } => {
                    let g = gout.get(0, 0);
                    let z = &self.nodes[logits.0].value;
                    let gx = &mut lower[logits.0];
                    for (r, &t) in targets.iter().enumerate() {
                        gx.add_at(r, 0, g * (sigmoid(z.get(r, 0)) - t));
                    }
                }
                Op::WeightedSum { terms } => {
                    let g = gout.get(0, 0);
                    for &(id, w) in terms {
                        lower[id.0].add_at(0, 0, g * w);
                    }
                }
                Op::CrfNll {
                    e1,
                    rel,
                    e2,
                    crf,
                    grads: cg,
                } => {
                    let g = gout.get(0, 0);
                    for (r, &v) in cg.d_e1.iter().enumerate() {
                        lower[e1.0].add_at(r, 0, g * v);
                    }
                    for (r, &v) in cg.d_rel.iter().enumerate() {
                        lower[rel.0].add_at(r, 0, g * v);
                    }
                    for (r, &v) in cg.d_e2.iter().enumerate() {
                        lower[e2.0].add_at(r, 0, g * v);
                    }
                    {
                        let gb = grads.get_mut(crf.begin);
                        for (r, &v) in cg.d_begin.iter().enumerate() {
                            gb.add_at(r, 0, g * v);
                        }
                    }
                    grads.get_mut(crf.ent_rel).add_scaled(&cg.d_ent_rel, g);
                    grads.get_mut(crf.rel_ent).add_scaled(&cg.d_rel_ent, g);
                    {
                        let ge = grads.get_mut(crf.end);
                        for (r, &v) in cg.d_end.iter().enumerate() {
                            ge.add_at(r, 0, g * v);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn backward(&self, loss: NodeId) -> Result<Grads> {
        let mut grads = Grads::zeros_like(self.params);
        self.backward_into(loss, &mut grads)?;
        Ok(grads)
    }
}
