//! Incremental training-data selection: batches of distantly supervised
//! candidates are admitted when a confidence model trained on the data
//! accepted so far agrees with the distant label.

use crate::dataset::RawExample;
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::Activation;
use crate::optim::sgd_step;
use crate::tape::{ParamId, ParamSet, Tape};
use crate::tensor::Tensor2;

/// Multinomial logistic regression over mean bag-of-embedding features.
/// Fixed random embeddings act as a seeded projection of the bag of words;
/// only the linear layer is trained (from zeros, so fitting is
/// deterministic).
pub struct LogisticScorer {
    dim: usize,
    seed: u64,
    epochs: usize,
    lr: f64,
    labels: Vec<String>,
    embed: Option<EmbeddingTable>,
    params: ParamSet,
    w: Option<ParamId>,
    b: Option<ParamId>,
}

impl LogisticScorer {
    pub fn new(dim: usize, seed: u64) -> LogisticScorer {
        LogisticScorer {
            dim,
            seed,
            epochs: 150,
            lr: 0.5,
            labels: Vec::new(),
            embed: None,
            params: ParamSet::new(),
            w: None,
            b: None,
        }
    }

    /// Fix the vocabulary and label set from the full corpus the selection
    /// will run over. Must be called before `fit`.
    pub fn prepare<'a>(&mut self, corpus: impl Iterator<Item = &'a RawExample>) {
        let mut vocab = crate::embed::Vocabulary::new();
        let mut labels: Vec<String> = Vec::new();
        for ex in corpus {
            for t in &ex.tokens {
                vocab.add(t);
            }
            if !labels.contains(&ex.slot) {
                labels.push(ex.slot.clone());
            }
        }
        let embed = EmbeddingTable::random(vocab, self.dim, self.seed);
        let mut params = ParamSet::new();
        let w = params.register("w", Tensor2::zeros(self.dim, labels.len()));
        let b = params.register("b", Tensor2::zeros(labels.len(), 1));
        self.labels = labels;
        self.embed = Some(embed);
        self.params = params;
        self.w = Some(w);
        self.b = Some(b);
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    fn features(&self, ex: &RawExample) -> Vec<f64> {
        let embed = self.embed.as_ref().expect("prepare() not called");
        let mut f = vec![0.0; self.dim];
        for t in &ex.tokens {
            let row = embed.matrix.row(embed.vocab.id(t));
            for (a, b) in f.iter_mut().zip(row.iter()) {
                *a += b;
            }
        }
        let n = ex.tokens.len().max(1) as f64;
        for a in f.iter_mut() {
            *a /= n;
        }
        f
    }

    fn label_id(&self, slot: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == slot)
            .ok_or_else(|| Error::InvalidLabel(format!("label {slot} unseen at prepare time")))
    }

    /// Full-batch gradient descent from zero weights.
    pub fn fit(&mut self, data: &[RawExample]) -> Result<()> {
        let (w, b) = (
            self.w.ok_or_else(|| Error::InvalidConfig("scorer not prepared".into()))?,
            self.b.expect("bias registered with weights"),
        );
        let feats: Vec<(Vec<f64>, usize)> = data
            .iter()
            .map(|ex| Ok((self.features(ex), self.label_id(&ex.slot)?)))
            .collect::<Result<_>>()?;
        self.params.get_mut(w).fill(0.0);
        self.params.get_mut(b).fill(0.0);
        let n = feats.len().max(1) as f64;
        for _ in 0..self.epochs {
            let mut grads = crate::tape::Grads::zeros_like(&self.params);
            for (x, gold) in &feats {
                let mut tape = Tape::new(&self.params);
                let xn = tape.constant(Tensor2::col(x));
                let logits = tape.affine(&[(xn, w)], b, Activation::Identity)?;
                let loss = tape.softmax_nll(logits, *gold)?;
                tape.backward_into(loss, &mut grads)?;
            }
            grads.scale(1.0 / n);
            sgd_step(&mut self.params, &grads, self.lr, 0.0);
        }
        Ok(())
    }

    /// Predicted label and its softmax confidence.
    pub fn predict(&self, ex: &RawExample) -> Result<(&str, f64)> {
        let (w, b) = (
            self.w.ok_or_else(|| Error::InvalidConfig("scorer not prepared".into()))?,
            self.b.expect("bias registered with weights"),
        );
        let x = self.features(ex);
        let mut tape = Tape::new(&self.params);
        let xn = tape.constant(Tensor2::col(&x));
        let logits = tape.affine(&[(xn, w)], b, Activation::Identity)?;
        let probs = tape.softmax_probs(logits);
        let p = tape.value(probs).data();
        let (best, conf) = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .expect("non-empty label set");
        Ok((&self.labels[best], *conf))
    }
}

/// Iterative selection: train the scorer on the accumulated data (starting
/// from the seed set), admit candidates of the next batch whose distant
/// label matches the prediction with confidence >= `tau`, retrain, repeat.
/// Returns the admitted candidates (the seed set is not repeated).
pub fn select_training_data(
    batches: &[Vec<RawExample>],
    seed_set: &[RawExample],
    scorer: &mut LogisticScorer,
    tau: f64,
) -> Result<Vec<RawExample>> {
    if seed_set.is_empty() {
        return Err(Error::InvalidConfig(
            "self-training needs a non-empty seed set".into(),
        ));
    }
    scorer.prepare(seed_set.iter().chain(batches.iter().flatten()));
    let mut accumulated: Vec<RawExample> = seed_set.to_vec();
    let mut selected = Vec::new();
    for batch in batches {
        scorer.fit(&accumulated)?;
        for cand in batch {
            let (pred, conf) = scorer.predict(cand)?;
            if pred == cand.slot && conf >= tau {
                selected.push(cand.clone());
                accumulated.push(cand.clone());
            }
        }
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::sub_rng;
    use crate::schema::EntityType;
    use rand::Rng;

    /// Three well-separated "slots" with disjoint token inventories.
    fn synth_example(class: usize, idx: usize, flip_to: Option<usize>) -> RawExample {
        let vocab: [&[&str]; 3] = [
            &["alpha", "ascend", "apex", "arrow"],
            &["brick", "bloom", "baton", "bridge"],
            &["cedar", "clamp", "crane", "cliff"],
        ];
        let words = vocab[class];
        let label = flip_to.unwrap_or(class);
        let tokens: Vec<String> = (0..6)
            .map(|k| words[(idx + k) % words.len()].to_string())
            .collect();
        RawExample {
            id: format!("{class}-{idx}"),
            slot: format!("slot{label}"),
            type1: EntityType::Person,
            type2: EntityType::Person,
            name_span: (0, 1),
            filler_span: (2, 3),
            tokens,
        }
    }

    fn seed_set() -> Vec<RawExample> {
        (0..3)
            .flat_map(|c| (0..8).map(move |i| synth_example(c, i, None)))
            .collect()
    }

    #[test]
    fn scorer_learns_separable_classes() {
        let seeds = seed_set();
        let mut scorer = LogisticScorer::new(16, 5);
        scorer.prepare(seeds.iter());
        scorer.fit(&seeds).unwrap();
        for ex in &seeds {
            let (pred, conf) = scorer.predict(ex).unwrap();
            assert_eq!(pred, ex.slot);
            assert!(conf > 0.5);
        }
    }

    #[test]
    fn unreachable_confidence_selects_nothing() {
        let batches = vec![(0..10).map(|i| synth_example(i % 3, i, None)).collect()];
        let mut scorer = LogisticScorer::new(16, 5);
        let out = select_training_data(&batches, &seed_set(), &mut scorer, 1.01).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn zero_threshold_with_agreeing_scorer_selects_all() {
        let batches: Vec<Vec<RawExample>> = vec![
            (0..9).map(|i| synth_example(i % 3, i + 10, None)).collect(),
            (0..9).map(|i| synth_example(i % 3, i + 40, None)).collect(),
        ];
        let total: usize = batches.iter().map(|b| b.len()).sum();
        let mut scorer = LogisticScorer::new(16, 5);
        let out = select_training_data(&batches, &seed_set(), &mut scorer, 0.0).unwrap();
        assert_eq!(out.len(), total);
    }

    #[test]
    fn empty_seed_set_is_invalid() {
        let batches = vec![vec![synth_example(0, 0, None)]];
        let mut scorer = LogisticScorer::new(16, 5);
        assert!(select_training_data(&batches, &[], &mut scorer, 0.9).is_err());
    }

    #[test]
    fn noisy_labels_are_filtered_out() {
        // 10% of candidate labels flipped; at tau = 0.9 the kept samples are
        // nearly all clean.
        let mut rng = sub_rng(11, "selftrain-noise");
        let mut batches = Vec::new();
        for b in 0..5 {
            let mut batch = Vec::new();
            for i in 0..30 {
                let class = rng.random_range(0..3usize);
                let flip = rng.random::<f64>() < 0.10;
                let flip_to = if flip { Some((class + 1) % 3) } else { None };
                batch.push(synth_example(class, b * 100 + i, flip_to));
            }
            batches.push(batch);
        }
        let mut scorer = LogisticScorer::new(16, 5);
        let out = select_training_data(&batches, &seed_set(), &mut scorer, 0.9).unwrap();
        assert!(!out.is_empty());
        // An example is clean when its label matches its token inventory.
        let clean = out
            .iter()
            .filter(|e| {
                let class = match e.tokens[0].chars().next().unwrap() {
                    'a' => 0,
                    'b' => 1,
                    _ => 2,
                };
                e.slot == format!("slot{class}")
            })
            .count();
        let ratio = clean as f64 / out.len() as f64;
        assert!(ratio >= 0.95, "clean ratio {ratio} over {} kept", out.len());
    }

    #[test]
    fn selection_is_monotone_in_tau() {
        let batches: Vec<Vec<RawExample>> =
            vec![(0..15).map(|i| synth_example(i % 3, i + 3, None)).collect()];
        let seeds = seed_set();
        let mut prev = usize::MAX;
        for tau in [0.0, 0.5, 0.9, 0.99, 1.01] {
            let mut scorer = LogisticScorer::new(16, 5);
            let out = select_training_data(&batches, &seeds, &mut scorer, tau).unwrap();
            assert!(out.len() <= prev, "tau {tau} selected more than a lower tau");
            prev = out.len();
        }
    }
}
