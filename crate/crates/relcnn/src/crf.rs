//! Exact inference and learning for the length-3 heterogeneous linear chain
//! over [entity-1 class, relation class, entity-2 class].
//!
//! The chain is padded with virtual begin/end tags realized as learned
//! transition vectors; the two inner transition tables are the learned
//! entity<->relation couplings. All arithmetic is in log space with
//! max-shifted log-sum-exp.

use crate::error::{Error, Result};
use crate::nn::log_sum_exp;
use crate::tensor::Tensor2;

/// Transition tables. `t_ent_rel` is |E| x |R|, `t_rel_ent` is |R| x |E|;
/// begin/end are vectors over the entity label set.
#[derive(Debug, Clone)]
pub struct CrfParams {
    pub t_begin_ent: Vec<f64>,
    pub t_ent_rel: Tensor2,
    pub t_rel_ent: Tensor2,
    pub t_ent_end: Vec<f64>,
}

impl CrfParams {
    pub fn zeros(num_ent: usize, num_rel: usize) -> Self {
        CrfParams {
            t_begin_ent: vec![0.0; num_ent],
            t_ent_rel: Tensor2::zeros(num_ent, num_rel),
            t_rel_ent: Tensor2::zeros(num_rel, num_ent),
            t_ent_end: vec![0.0; num_ent],
        }
    }

    pub fn num_ent(&self) -> usize {
        self.t_begin_ent.len()
    }

    pub fn num_rel(&self) -> usize {
        self.t_ent_rel.cols()
    }
}

/// Per-position network activations in log space.
#[derive(Debug, Clone)]
pub struct ChainEmissions {
    pub e1: Vec<f64>,
    pub rel: Vec<f64>,
    pub e2: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainLabels {
    pub e1: usize,
    pub rel: usize,
    pub e2: usize,
}

fn check_dims(em: &ChainEmissions, params: &CrfParams) -> Result<()> {
    let ne = params.num_ent();
    let nr = params.num_rel();
    if em.e1.len() != ne || em.e2.len() != ne || em.rel.len() != nr {
        return Err(Error::InvalidShape(format!(
            "emissions ({}, {}, {}) incompatible with transition tables ({} ent, {} rel)",
            em.e1.len(),
            em.rel.len(),
            em.e2.len(),
            ne,
            nr
        )));
    }
    if params.t_ent_rel.rows() != ne || params.t_rel_ent.rows() != nr || params.t_rel_ent.cols() != ne
        || params.t_ent_end.len() != ne
    {
        return Err(Error::InvalidShape("inconsistent transition tables".into()));
    }
    Ok(())
}

fn check_labels(labels: ChainLabels, params: &CrfParams) -> Result<()> {
    if labels.e1 >= params.num_ent() || labels.e2 >= params.num_ent() || labels.rel >= params.num_rel() {
        return Err(Error::InvalidLabel(format!(
            "chain labels ({}, {}, {}) out of range for {} entity / {} relation classes",
            labels.e1,
            labels.rel,
            labels.e2,
            params.num_ent(),
            params.num_rel()
        )));
    }
    Ok(())
}

/// Score of one label sequence: four transitions plus three emissions.
pub fn chain_score(em: &ChainEmissions, params: &CrfParams, labels: ChainLabels) -> Result<f64> {
    check_dims(em, params)?;
    check_labels(labels, params)?;
    Ok(params.t_begin_ent[labels.e1]
        + em.e1[labels.e1]
        + params.t_ent_rel.get(labels.e1, labels.rel)
        + em.rel[labels.rel]
        + params.t_rel_ent.get(labels.rel, labels.e2)
        + em.e2[labels.e2]
        + params.t_ent_end[labels.e2])
}

struct ForwardPass {
    /// a1[i] = t_begin[i] + em1[i]
    a1: Vec<f64>,
    /// a2[j] = lse_i(a1[i] + T_er[i,j]) + emr[j]
    a2: Vec<f64>,
    /// a3[k] = lse_j(a2[j] + T_re[j,k]) + em2[k]
    a3: Vec<f64>,
    log_z: f64,
}

fn forward_pass(em: &ChainEmissions, params: &CrfParams) -> ForwardPass {
    let ne = params.num_ent();
    let nr = params.num_rel();
    let a1: Vec<f64> = (0..ne).map(|i| params.t_begin_ent[i] + em.e1[i]).collect();
    let mut a2 = vec![0.0; nr];
    let mut buf = vec![0.0; ne.max(nr)];
    for j in 0..nr {
        for (i, b) in buf[..ne].iter_mut().enumerate() {
            *b = a1[i] + params.t_ent_rel.get(i, j);
        }
        a2[j] = log_sum_exp(&buf[..ne]) + em.rel[j];
    }
    let mut a3 = vec![0.0; ne];
    for k in 0..ne {
        for (j, b) in buf[..nr].iter_mut().enumerate() {
            *b = a2[j] + params.t_rel_ent.get(j, k);
        }
        a3[k] = log_sum_exp(&buf[..nr]) + em.e2[k];
    }
    let end: Vec<f64> = (0..ne).map(|k| a3[k] + params.t_ent_end[k]).collect();
    let log_z = log_sum_exp(&end);
    ForwardPass { a1, a2, a3, log_z }
}

struct BackwardPass {
    /// b3[k] = t_end[k]
    b3: Vec<f64>,
    /// b2[j] = lse_k(T_re[j,k] + em2[k] + b3[k])
    b2: Vec<f64>,
    /// b1[i] = lse_j(T_er[i,j] + emr[j] + b2[j])
    b1: Vec<f64>,
}

fn backward_pass(em: &ChainEmissions, params: &CrfParams) -> BackwardPass {
    let ne = params.num_ent();
    let nr = params.num_rel();
    let b3 = params.t_ent_end.clone();
    let mut b2 = vec![0.0; nr];
    let mut buf = vec![0.0; ne.max(nr)];
    for j in 0..nr {
        for (k, b) in buf[..ne].iter_mut().enumerate() {
            *b = params.t_rel_ent.get(j, k) + em.e2[k] + b3[k];
        }
        b2[j] = log_sum_exp(&buf[..ne]);
    }
    let mut b1 = vec![0.0; ne];
    for i in 0..ne {
        for (j, b) in buf[..nr].iter_mut().enumerate() {
            *b = params.t_ent_rel.get(i, j) + em.rel[j] + b2[j];
        }
        b1[i] = log_sum_exp(&buf[..nr]);
    }
    BackwardPass { b3, b2, b1 }
}

/// log sum over all |E|*|R|*|E| sequences of exp(chain_score), by the forward
/// recursion.
pub fn log_partition(em: &ChainEmissions, params: &CrfParams) -> Result<f64> {
    check_dims(em, params)?;
    Ok(forward_pass(em, params).log_z)
}

/// Highest-scoring label sequence and its score. Ties are broken toward the
/// lowest label index at every decision.
pub fn viterbi(em: &ChainEmissions, params: &CrfParams) -> Result<(ChainLabels, f64)> {
    check_dims(em, params)?;
    let ne = params.num_ent();
    let nr = params.num_rel();
    let v1: Vec<f64> = (0..ne).map(|i| params.t_begin_ent[i] + em.e1[i]).collect();
    let mut v2 = vec![f64::NEG_INFINITY; nr];
    let mut bp2 = vec![0usize; nr];
    for j in 0..nr {
        for i in 0..ne {
            let s = v1[i] + params.t_ent_rel.get(i, j);
            if s > v2[j] {
                v2[j] = s;
                bp2[j] = i;
            }
        }
        v2[j] += em.rel[j];
    }
    let mut v3 = vec![f64::NEG_INFINITY; ne];
    let mut bp3 = vec![0usize; ne];
    for k in 0..ne {
        for j in 0..nr {
            let s = v2[j] + params.t_rel_ent.get(j, k);
            if s > v3[k] {
                v3[k] = s;
                bp3[k] = j;
            }
        }
        v3[k] += em.e2[k];
    }
    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..ne {
        let s = v3[k] + params.t_ent_end[k];
        if s > best {
            best = s;
            best_k = k;
        }
    }
    let rel = bp3[best_k];
    let labels = ChainLabels {
        e1: bp2[rel],
        rel,
        e2: best_k,
    };
    Ok((labels, best))
}

/// Per-position posterior distributions from forward-backward.
pub struct ChainMarginals {
    pub e1: Vec<f64>,
    pub rel: Vec<f64>,
    pub e2: Vec<f64>,
}

pub fn marginals(em: &ChainEmissions, params: &CrfParams) -> Result<ChainMarginals> {
    check_dims(em, params)?;
    let fwd = forward_pass(em, params);
    let bwd = backward_pass(em, params);
    let p1: Vec<f64> = fwd
        .a1
        .iter()
        .zip(bwd.b1.iter())
        .map(|(&a, &b)| (a + b - fwd.log_z).exp())
        .collect();
    let prel: Vec<f64> = fwd
        .a2
        .iter()
        .zip(bwd.b2.iter())
        .map(|(&a, &b)| (a + b - fwd.log_z).exp())
        .collect();
    let p2: Vec<f64> = fwd
        .a3
        .iter()
        .zip(bwd.b3.iter())
        .map(|(&a, &b)| (a + b - fwd.log_z).exp())
        .collect();
    Ok(ChainMarginals { e1: p1, rel: prel, e2: p2 })
}

/// Relation posterior with the two entity positions clamped to observed
/// labels (emissions masked to -inf off the observed classes).
pub fn relation_marginals_clamped(
    em: &ChainEmissions,
    params: &CrfParams,
    e1_obs: usize,
    e2_obs: usize,
) -> Result<Vec<f64>> {
    check_dims(em, params)?;
    if e1_obs >= params.num_ent() || e2_obs >= params.num_ent() {
        return Err(Error::InvalidLabel("clamped entity label out of range".into()));
    }
    let mut masked = em.clone();
    for i in 0..masked.e1.len() {
        if i != e1_obs {
            masked.e1[i] = f64::NEG_INFINITY;
        }
        if i != e2_obs {
            masked.e2[i] = f64::NEG_INFINITY;
        }
    }
    Ok(marginals(&masked, params)?.rel)
}

/// Gradient of the NLL with respect to emissions and transitions: model
/// expectation minus gold indicator for every entry.
pub struct CrfGrads {
    pub d_e1: Vec<f64>,
    pub d_rel: Vec<f64>,
    pub d_e2: Vec<f64>,
    pub d_begin: Vec<f64>,
    pub d_ent_rel: Tensor2,
    pub d_rel_ent: Tensor2,
    pub d_end: Vec<f64>,
}

/// Negative log-likelihood of the gold sequence plus its exact gradients.
pub fn nll_and_gradients(
    em: &ChainEmissions,
    params: &CrfParams,
    gold: ChainLabels,
) -> Result<(f64, CrfGrads)> {
    check_dims(em, params)?;
    check_labels(gold, params)?;
    let ne = params.num_ent();
    let nr = params.num_rel();
    let fwd = forward_pass(em, params);
    let bwd = backward_pass(em, params);
    let gold_score = chain_score(em, params, gold)?;
    let loss = fwd.log_z - gold_score;

    let mut g = CrfGrads {
        d_e1: vec![0.0; ne],
        d_rel: vec![0.0; nr],
        d_e2: vec![0.0; ne],
        d_begin: vec![0.0; ne],
        d_ent_rel: Tensor2::zeros(ne, nr),
        d_rel_ent: Tensor2::zeros(nr, ne),
        d_end: vec![0.0; ne],
    };
    // Unary marginals.
    for i in 0..ne {
        let p = (fwd.a1[i] + bwd.b1[i] - fwd.log_z).exp();
        g.d_e1[i] = p;
        g.d_begin[i] = p;
    }
    for j in 0..nr {
        g.d_rel[j] = (fwd.a2[j] + bwd.b2[j] - fwd.log_z).exp();
    }
    for k in 0..ne {
        let p = (fwd.a3[k] + bwd.b3[k] - fwd.log_z).exp();
        g.d_e2[k] = p;
        g.d_end[k] = p;
    }
    // Pairwise marginals for the two inner transition tables.
    for i in 0..ne {
        for j in 0..nr {
            let lp = fwd.a1[i] + params.t_ent_rel.get(i, j) + em.rel[j] + bwd.b2[j] - fwd.log_z;
            g.d_ent_rel.set(i, j, lp.exp());
        }
    }
    for j in 0..nr {
        for k in 0..ne {
            let lp = fwd.a2[j] + params.t_rel_ent.get(j, k) + em.e2[k] + bwd.b3[k] - fwd.log_z;
            g.d_rel_ent.set(j, k, lp.exp());
        }
    }
    // Subtract the gold indicators.
    g.d_e1[gold.e1] -= 1.0;
    g.d_begin[gold.e1] -= 1.0;
    g.d_rel[gold.rel] -= 1.0;
    g.d_e2[gold.e2] -= 1.0;
    g.d_end[gold.e2] -= 1.0;
    g.d_ent_rel.add_at(gold.e1, gold.rel, -1.0);
    g.d_rel_ent.add_at(gold.rel, gold.e2, -1.0);
    Ok((loss, g))
}
