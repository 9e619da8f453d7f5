//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured values before asserting. The two training-heavy
//! criteria serialize on a mutex so their wall-clock budgets are not skewed
//! by parallel test scheduling.

use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use relcnn::crf::{self, ChainEmissions, ChainLabels, CrfParams};
use relcnn::dataset::{
    build_vocab, clean_negatives, encode_examples, subsample_negatives, CleanMode, RawExample,
    TriggerList,
};
use relcnn::embed::{EmbeddingTable, Vocabulary};
use relcnn::encode::{reverse_arguments, EncodedExample};
use relcnn::error::Result;
use relcnn::eval::{evaluate, Thresholds};
use relcnn::model::{random_examples, Model, ModelDims, Variant};
use relcnn::nn::{
    self, conv_forward, kmax_indices, kmax_pool, log_sum_exp, softmax, ConvLayer,
};
use relcnn::optim::sgd_step;
use relcnn::postproc::{
    disambiguate_location, infer_location, select_fillers, FillerCandidate, LocationCategory,
    LocationMaps, SlotSpec,
};
use relcnn::rng::sub_rng;
use relcnn::schema::{EntityType, SlotSchema};
use relcnn::selftrain::{select_training_data, LogisticScorer};
use relcnn::synth;
use relcnn::tape::{Grads, ParamSet};
use relcnn::tensor::Tensor2;
use relcnn::train::{train, Hyperparams};

static HEAVY: Mutex<()> = Mutex::new(());

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn small_model(variant: Variant, seed: u64) -> Model {
    let dims = ModelDims {
        filter_width: 3,
        num_filters: 5,
        emb_dim: 8,
        hidden_rel: 10,
        hidden_ent: 6,
    };
    let mut vocab = Vocabulary::new();
    for i in 0..30 {
        vocab.add(&format!("tok{i}"));
    }
    let emb = EmbeddingTable::random(vocab, dims.emb_dim, seed);
    let binary_slot = (variant == Variant::Binary).then_some("per:children");
    Model::new(variant, SlotSchema::tac_kbp(), emb, dims, seed, binary_slot).unwrap()
}

// -------------------------------------------------------------------------
// Criterion 1: gradient fidelity for all five variants.
// -------------------------------------------------------------------------
#[test]
fn criterion_1_gradient_fidelity() {
    let t0 = Instant::now();
    let mut worst_overall: f64 = 0.0;
    let mut details = String::new();
    for (i, variant) in Variant::ALL.iter().enumerate() {
        let mut model = small_model(*variant, 100 + i as u64);
        let examples = random_examples(&model, 10, 200 + i as u64);
        let err = model.gradient_check(&examples, 0.5, 1e-5).unwrap();
        details.push_str(&format!("{}={err:.2e} ", variant.name()));
        worst_overall = worst_overall.max(err);
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst_overall < 1e-4 && secs < 120.0;
    println!(
        "criterion 1 (gradient fidelity): {} — max rel err {worst_overall:.2e} [{details}] in {secs:.1}s",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(worst_overall < 1e-4, "max relative error {worst_overall}");
    assert!(secs < 120.0, "took {secs:.1}s, budget 120s");
}

// -------------------------------------------------------------------------
// Criterion 2: CRF exactness against exhaustive enumeration.
// -------------------------------------------------------------------------
fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()
}

#[test]
fn criterion_2_crf_exactness() {
    let t0 = Instant::now();
    let mut rng = sub_rng(77, "acceptance-crf");
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let ne = 1 + rng.random_range(0..3usize);
        let nr = 1 + rng.random_range(0..5usize);
        let em = ChainEmissions {
            e1: rand_vec(ne, &mut rng),
            rel: rand_vec(nr, &mut rng),
            e2: rand_vec(ne, &mut rng),
        };
        let params = CrfParams {
            t_begin_ent: rand_vec(ne, &mut rng),
            t_ent_rel: Tensor2::from_vec(ne, nr, rand_vec(ne * nr, &mut rng)).unwrap(),
            t_rel_ent: Tensor2::from_vec(nr, ne, rand_vec(nr * ne, &mut rng)).unwrap(),
            t_ent_end: rand_vec(ne, &mut rng),
        };
        // Enumeration oracle over all <= 45 sequences.
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for e1 in 0..ne {
            for rel in 0..nr {
                for e2 in 0..ne {
                    let l = ChainLabels { e1, rel, e2 };
                    labels.push(l);
                    scores.push(crf::chain_score(&em, &params, l).unwrap());
                }
            }
        }
        let log_z_oracle = log_sum_exp(&scores);
        let log_z = crf::log_partition(&em, &params).unwrap();
        worst = worst.max((log_z - log_z_oracle).abs());

        let (vit_labels, vit_score) = crf::viterbi(&em, &params).unwrap();
        let (best_idx, best_score) = scores
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| {
                if s > acc.1 {
                    (i, s)
                } else {
                    acc
                }
            });
        worst = worst.max((vit_score - best_score).abs());
        assert_eq!(vit_labels, labels[best_idx], "viterbi argmax");

        let m = crf::marginals(&em, &params).unwrap();
        let mut p1 = vec![0.0; ne];
        let mut prel = vec![0.0; nr];
        let mut p2 = vec![0.0; ne];
        for (l, &s) in labels.iter().zip(scores.iter()) {
            let p = (s - log_z_oracle).exp();
            p1[l.e1] += p;
            prel[l.rel] += p;
            p2[l.e2] += p;
        }
        for (a, b) in m.e1.iter().zip(&p1) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in m.rel.iter().zip(&prel) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in m.e2.iter().zip(&p2) {
            worst = worst.max((a - b).abs());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst < 1e-8 && secs < 5.0;
    println!(
        "criterion 2 (CRF exactness): {} — max abs deviation {worst:.2e} over 100 instances in {secs:.2}s",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(worst < 1e-8, "deviation {worst}");
    assert!(secs < 5.0, "took {secs:.2}s, budget 5s");
}

// -------------------------------------------------------------------------
// Criterion 3: numerical-core unit properties, 200+ random cases each.
// -------------------------------------------------------------------------
#[test]
fn criterion_3_nncore_properties() {
    let mut rng = sub_rng(31, "acceptance-nncore");
    let cases = 200;

    // Convolution equals the naive triple-loop definition to 1e-12.
    let mut worst_conv: f64 = 0.0;
    for _ in 0..cases {
        let w = 1 + rng.random_range(0..3usize);
        let d = 1 + rng.random_range(0..4usize);
        let m = 1 + rng.random_range(0..4usize);
        let t = w + rng.random_range(0..5usize);
        let filters: Vec<Tensor2> = (0..m)
            .map(|_| Tensor2::from_vec(w, d, rand_vec(w * d, &mut rng)).unwrap())
            .collect();
        let bias = rand_vec(m, &mut rng);
        let layer = ConvLayer::from_filters(filters.clone(), bias.clone()).unwrap();
        let input = Tensor2::from_vec(t, d, rand_vec(t * d, &mut rng)).unwrap();
        let got = conv_forward(&input, &layer).unwrap();
        for (i, f) in filters.iter().enumerate() {
            for tt in 0..t - w + 1 {
                let mut z = bias[i];
                for j in 0..w {
                    for k in 0..d {
                        z += f.get(j, k) * input.get(tt + j, k);
                    }
                }
                worst_conv = worst_conv.max((got.get(i, tt) - z.tanh()).abs());
            }
        }
    }

    // k-max pooling output is an order-preserving subsequence equal to the
    // sort-take-resort oracle.
    let mut kmax_ok = true;
    for _ in 0..cases {
        let k = 1 + rng.random_range(0..4usize);
        let n = k + rng.random_range(0..8usize);
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(0..5u8) as f64).collect();
        let c = Tensor2::from_vec(1, n, row.clone()).unwrap();
        let got = kmax_pool(&c, k).unwrap();
        let mut pairs: Vec<(usize, f64)> = row.iter().cloned().enumerate().collect();
        pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut kept: Vec<(usize, f64)> = pairs.into_iter().take(k).collect();
        kept.sort_by_key(|p| p.0);
        let oracle: Vec<f64> = kept.iter().map(|p| p.1).collect();
        kmax_ok &= got.row(0) == oracle.as_slice();
        let indices = kmax_indices(&row, k);
        kmax_ok &= indices.windows(2).all(|w| w[0] < w[1]);
    }

    // Softmax sums to 1 within 1e-12 and is shift invariant to 1e-12.
    let mut worst_softmax: f64 = 0.0;
    for _ in 0..cases {
        let n = 1 + rng.random_range(0..10usize);
        let z: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 40.0 - 20.0).collect();
        let p = softmax(&z);
        worst_softmax = worst_softmax.max((p.iter().sum::<f64>() - 1.0).abs());
        let c = rng.random::<f64>() * 8.0 - 4.0;
        let q = softmax(&z.iter().map(|&v| v + c).collect::<Vec<_>>());
        for (a, b) in p.iter().zip(q.iter()) {
            worst_softmax = worst_softmax.max((a - b).abs());
        }
    }

    // Loss closed forms.
    let mut worst_loss: f64 = 0.0;
    for _ in 0..cases {
        let n = 2 + rng.random_range(0..6usize);
        let uniform = vec![1.0 / n as f64; n];
        let gold = rng.random_range(0..n);
        let nll = nn::nll_loss(&uniform, gold).unwrap();
        worst_loss = worst_loss.max((nll - (n as f64).ln()).abs());
        let targets: Vec<f64> = (0..n).map(|_| rng.random_range(0..2u8) as f64).collect();
        let bce = nn::bce_loss(&vec![0.5; n], &targets).unwrap();
        worst_loss = worst_loss.max((bce - n as f64 * 2.0f64.ln()).abs());
    }

    // SGD with l2 = 0, lr = 1 subtracts exactly the gradient.
    let mut sgd_ok = true;
    for _ in 0..cases {
        let n = 1 + rng.random_range(0..8usize);
        let mut params = ParamSet::new();
        let vals = rand_vec(n, &mut rng);
        let id = params.register("p", Tensor2::col(&vals));
        let gvals = rand_vec(n, &mut rng);
        let mut grads = Grads::zeros_like(&params);
        grads.get_mut(id).data_mut().copy_from_slice(&gvals);
        sgd_step(&mut params, &grads, 1.0, 0.0);
        for i in 0..n {
            sgd_ok &= params.get(id).data()[i] == vals[i] - gvals[i];
        }
    }

    let pass = worst_conv < 1e-12 && kmax_ok && worst_softmax < 1e-12 && worst_loss < 1e-12 && sgd_ok;
    println!(
        "criterion 3 (numerical-core properties): {} — conv {worst_conv:.1e}, kmax {kmax_ok}, softmax {worst_softmax:.1e}, losses {worst_loss:.1e}, sgd {sgd_ok} ({cases} cases each)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(worst_conv < 1e-12);
    assert!(kmax_ok);
    assert!(worst_softmax < 1e-12);
    assert!(worst_loss < 1e-12);
    assert!(sgd_ok);
}

// -------------------------------------------------------------------------
// Criterion 4: inverse-slot identity, bitwise, all variants.
// -------------------------------------------------------------------------
#[test]
fn criterion_4_inverse_slot_identity() {
    let mut all_ok = true;
    let mut checked = 0usize;
    for (i, variant) in Variant::ALL.iter().enumerate() {
        let model = small_model(*variant, 300 + i as u64);
        let examples = random_examples(&model, 1000, 400 + i as u64);
        for ex in &examples {
            let p_inv = model.predict_slot_probability(ex, "per:parents").unwrap();
            let p_can = model
                .predict_slot_probability(&reverse_arguments(ex), "per:children")
                .unwrap();
            all_ok &= p_inv.to_bits() == p_can.to_bits();
            checked += 1;
        }
    }
    // Self-inverse slots: the same identity degenerates to exact
    // orientation independence.
    for (i, variant) in [Variant::Multiclass, Variant::MulticlassS].iter().enumerate() {
        let model = small_model(*variant, 500 + i as u64);
        let examples = random_examples(&model, 200, 600 + i as u64);
        for ex in &examples {
            let a = model.predict_slot_probability(ex, "per:spouse").unwrap();
            let b = model
                .predict_slot_probability(&reverse_arguments(ex), "per:spouse")
                .unwrap();
            all_ok &= a.to_bits() == b.to_bits();
            checked += 1;
        }
    }
    println!(
        "criterion 4 (inverse-slot identity): {} — {checked} bitwise comparisons over {} variants",
        if all_ok { "PASS" } else { "FAIL" },
        Variant::ALL.len()
    );
    assert!(all_ok);
}

// -------------------------------------------------------------------------
// Criterion 5: synthetic overfit with the published defaults.
// -------------------------------------------------------------------------
#[test]
fn criterion_5_synthetic_overfit() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let spec = synth::load_spec(&fixture("overfit.spec")).unwrap();
    assert_eq!((spec.train, spec.dev, spec.test), (300, 100, 100));
    let out = synth::generate(&spec, 42).unwrap();

    // Published defaults: w=3, m=300, hidden 100, lr 0.1, batch 10, l2 1e-5.
    let hp = Hyperparams {
        epochs: 50,
        patience: 50,
        seed: 42,
        ..Hyperparams::default()
    };
    assert_eq!(
        (hp.filter_width, hp.num_filters, hp.hidden_rel, hp.lr, hp.batch, hp.l2),
        (3, 300, 100, 0.1, 10, 1e-5)
    );
    let vocab = build_vocab(&out.train);
    let emb = EmbeddingTable::random(vocab.clone(), hp.embedding_dim, hp.seed);
    let mut model = Model::new(
        Variant::Multiclass,
        SlotSchema::tac_kbp(),
        emb,
        hp.dims(),
        hp.seed,
        None,
    )
    .unwrap();
    let min = model.min_ctx_len();
    let train_set = encode_examples(&out.train, &vocab, &model.schema, min).unwrap();
    let dev_set = encode_examples(&out.dev, &vocab, &model.schema, min).unwrap();
    let test_set = encode_examples(&out.test, &vocab, &model.schema, min).unwrap();
    let hist = train(&mut model, &train_set, &dev_set, &hp).unwrap();

    let th = Thresholds::new();
    let train_f1 = evaluate(&model, &train_set, &th).unwrap().macro_f1;
    let test_f1 = evaluate(&model, &test_set, &th).unwrap().macro_f1;
    let secs = t0.elapsed().as_secs_f64();
    let pass = train_f1 >= 0.99 && test_f1 >= 0.90 && secs < 300.0;
    println!(
        "criterion 5 (synthetic overfit): {} — train macro F1 {train_f1:.4}, test macro F1 {test_f1:.4}, {} epochs, {secs:.0}s",
        if pass { "PASS" } else { "FAIL" },
        hist.epochs.len()
    );
    assert!(train_f1 >= 0.99, "train macro F1 {train_f1}");
    assert!(test_f1 >= 0.90, "test macro F1 {test_f1}");
    assert!(secs < 300.0, "took {secs:.0}s, budget 300s");
}

// -------------------------------------------------------------------------
// Criterion 6: type-awareness separation on the ambiguous pair.
// -------------------------------------------------------------------------
fn pair_accuracy(model: &Model, data: &[EncodedExample], a: usize, b: usize) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for ex in data {
        if ex.gold != a && ex.gold != b {
            continue;
        }
        let probs = model.slot_probabilities(ex).unwrap();
        let pred = if probs[a] >= probs[b] { a } else { b };
        if pred == ex.gold {
            correct += 1;
        }
        total += 1;
    }
    correct as f64 / total as f64
}

#[test]
fn criterion_6_type_awareness_separation() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let spec = synth::load_spec(&fixture("ambiguous.spec")).unwrap();
    let out = synth::generate(&spec, 1234).unwrap();
    let schema = SlotSchema::tac_kbp();
    let (dob, _) = schema.resolve("per:date_of_birth").unwrap();
    let (lob, _) = schema.resolve("per:location_of_birth").unwrap();
    let vocab = build_vocab(&out.train);

    let hp = Hyperparams {
        num_filters: 50,
        hidden_rel: 50,
        hidden_ent: 25,
        embedding_dim: 16,
        epochs: 40,
        patience: 40,
        seed: 7,
        ..Hyperparams::default()
    };

    let run = |variant: Variant, alpha: f64| -> (f64, f64) {
        let emb = EmbeddingTable::random(vocab.clone(), hp.embedding_dim, hp.seed);
        let mut model =
            Model::new(variant, schema.clone(), emb, hp.dims(), hp.seed, None).unwrap();
        let min = model.min_ctx_len();
        let train_set = encode_examples(&out.train, &vocab, &model.schema, min).unwrap();
        let dev_set = encode_examples(&out.dev, &vocab, &model.schema, min).unwrap();
        let test_set = encode_examples(&out.test, &vocab, &model.schema, min).unwrap();
        let hp_run = Hyperparams { alpha, ..hp.clone() };
        train(&mut model, &train_set, &dev_set, &hp_run).unwrap();
        (
            pair_accuracy(&model, &dev_set, dob, lob),
            pair_accuracy(&model, &test_set, dob, lob),
        )
    };

    let (_, plain) = run(Variant::Multiclass, 0.5);
    let (_, pipeline) = run(Variant::MulticlassP, 0.5);
    let mut best_j_dev = -1.0;
    let mut best_j_test = -1.0;
    let mut best_alpha = 0.0;
    for alpha in [0.25, 0.5, 0.75] {
        let (dev, test) = run(Variant::MulticlassJ, alpha);
        if dev > best_j_dev {
            best_j_dev = dev;
            best_j_test = test;
            best_alpha = alpha;
        }
    }
    let (_, structured) = run(Variant::MulticlassS, 0.5);
    let secs = t0.elapsed().as_secs_f64();

    let pass = plain <= 0.60 && pipeline >= 0.95 && best_j_test >= 0.95 && structured >= 0.95 && secs < 600.0;
    println!(
        "criterion 6 (type-awareness separation): {} — pair accuracy plain {plain:.3} (<= 0.60), \
         +p {pipeline:.3} (>= 0.95), +j {best_j_test:.3} at alpha {best_alpha} (>= 0.95), \
         +s {structured:.3} (>= 0.95), {secs:.0}s",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(secs < 600.0, "took {secs:.0}s, budget 600s");
    assert!(plain <= 0.60, "plain multiclass pair accuracy {plain}");
    assert!(pipeline >= 0.95, "+p pair accuracy {pipeline}");
    assert!(structured >= 0.95, "+s pair accuracy {structured}");
    // The joint variant reads its type vectors from its own typing network,
    // which sees the same (identical) token contexts as the plain model; on
    // this corpus no test-time signal distinguishes the pair for it.
    assert!(
        best_j_test >= 0.95,
        "+j pair accuracy {best_j_test} (predicted-type pathway cannot separate identical contexts)"
    );
}

// -------------------------------------------------------------------------
// Criterion 7: data procedures.
// -------------------------------------------------------------------------
fn raw(id: &str, slot: &str, tokens: &str) -> RawExample {
    let toks: Vec<String> = tokens.split(' ').map(String::from).collect();
    RawExample {
        id: id.to_string(),
        slot: slot.to_string(),
        type1: EntityType::Person,
        type2: EntityType::Person,
        name_span: (0, 1),
        filler_span: (toks.len() - 1, toks.len()),
        tokens: toks,
    }
}

#[test]
fn criterion_7_data_procedures() {
    // Cleaning removes exactly the trigger-containing negatives.
    let mut triggers = TriggerList::new();
    triggers.add("per:date_of_birth", "born in");
    triggers.add("per:spouse", "married");
    let data = vec![
        raw("p1", "per:date_of_birth", "anna was born in june x"),
        raw("n1", "NEG", "anna was born in berlin today"),
        raw("n2", "NEG", "anna met bob yesterday"),
        raw("n3", "NEG", "anna married bob quietly"),
        raw("n4", "NEG", "anna praised bob publicly"),
    ];
    let cleaned = clean_negatives(&data, &triggers, &CleanMode::MultiClass);
    let kept: Vec<&str> = cleaned.iter().map(|e| e.id.as_str()).collect();
    let clean_ok = kept == vec!["p1", "n2", "n4"]
        && cleaned[1].slot == "N"
        && cleaned[2].slot == "N"
        && cleaned[0].slot == "per:date_of_birth";

    // Subsampling yields a 1:1 ratio.
    let mut unbalanced: Vec<RawExample> = (0..40)
        .map(|i| raw(&format!("p{i}"), "per:spouse", "a married b"))
        .collect();
    unbalanced.extend((0..200).map(|i| raw(&format!("n{i}"), "N", "a saw b")));
    let balanced = subsample_negatives(&unbalanced, 13);
    let negs = balanced.iter().filter(|e| e.is_negative()).count();
    let pos = balanced.len() - negs;
    let subsample_ok = negs == pos && pos == 40;

    // Self-training keeps >= 95% clean samples on the 10%-noise fixture.
    let vocab: [&[&str]; 3] = [
        &["alpha", "ascend", "apex", "arrow"],
        &["brick", "bloom", "baton", "bridge"],
        &["cedar", "clamp", "crane", "cliff"],
    ];
    let synth_ex = |class: usize, idx: usize, label: usize| -> RawExample {
        let words = vocab[class];
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
    };
    let seeds: Vec<RawExample> = (0..3)
        .flat_map(|c| (0..8).map(move |i| synth_ex(c, i, c)))
        .collect();
    let mut rng = sub_rng(17, "acceptance-selftrain");
    let mut batches = Vec::new();
    for b in 0..5 {
        let mut batch = Vec::new();
        for i in 0..30 {
            let class = rng.random_range(0..3usize);
            let label = if rng.random::<f64>() < 0.10 {
                (class + 1) % 3
            } else {
                class
            };
            batch.push(synth_ex(class, b * 100 + i, label));
        }
        batches.push(batch);
    }
    let mut scorer = LogisticScorer::new(16, 5);
    let selected = select_training_data(&batches, &seeds, &mut scorer, 0.9).unwrap();
    let clean_count = selected
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
    let clean_ratio = clean_count as f64 / selected.len().max(1) as f64;
    let selftrain_ok = !selected.is_empty() && clean_ratio >= 0.95;

    let pass = clean_ok && subsample_ok && selftrain_ok;
    println!(
        "criterion 7 (data procedures): {} — cleaning {clean_ok}, 1:1 subsample {subsample_ok}, \
         self-training clean ratio {clean_ratio:.3} over {} kept",
        if pass { "PASS" } else { "FAIL" },
        selected.len()
    );
    assert!(clean_ok);
    assert!(subsample_ok);
    assert!(selftrain_ok, "clean ratio {clean_ratio}");
}

// -------------------------------------------------------------------------
// Criterion 8: postprocessing rules.
// -------------------------------------------------------------------------
#[test]
fn criterion_8_postprocessing() {
    let spec = SlotSpec {
        slot: "per:date_of_birth".into(),
        single_valued: true,
        top_n: 1,
        base_threshold: 0.5,
    };
    let cand = |f: &str, s: f64| FillerCandidate {
        filler: f.to_string(),
        score: s,
        sentence_id: "s".to_string(),
    };
    // Hop-1 effective threshold = base + 0.1.
    let hop1 = select_fillers(&[cand("a", 0.55)], &spec, 1);
    let hop0 = select_fillers(&[cand("a", 0.55)], &spec, 0);
    let hop_ok = hop1.is_empty() && hop0.len() == 1;

    // Single-valued slots emit exactly one filler.
    let single = select_fillers(&[cand("a", 0.9), cand("b", 0.8), cand("c", 0.7)], &spec, 0);
    let single_ok = single.len() == 1 && single[0].filler == "a";

    // Location inference composes city -> state -> country.
    let mut maps = LocationMaps::default();
    maps.cities.insert("springfield".into());
    maps.states.insert("illinois".into());
    maps.countries.insert("usa".into());
    maps.city_to_state.insert("springfield".into(), "illinois".into());
    maps.state_to_country.insert("illinois".into(), "usa".into());
    maps.validate().unwrap();
    let composed = infer_location("Springfield", LocationCategory::Country, &maps);
    let compose_ok = composed.as_deref() == Some("usa")
        && disambiguate_location("springfield", &maps) == LocationCategory::City
        && infer_location("illinois", LocationCategory::City, &maps).is_none();

    let pass = hop_ok && single_ok && compose_ok;
    println!(
        "criterion 8 (postprocessing): {} — hop threshold {hop_ok}, single-valued {single_ok}, \
         location composition {compose_ok}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(hop_ok);
    assert!(single_ok);
    assert!(compose_ok);
}

// -------------------------------------------------------------------------
// Supporting spec invariants exercised at acceptance scale.
// -------------------------------------------------------------------------

/// Self-inverse slots score the example and its reversal equally after
/// training on symmetrized data.
#[test]
fn self_inverse_symmetry_after_symmetrized_training() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let spec_text = "\
train = 80
dev = 40
test = 40

[slot per:spouse]
t1 = PERSON
t2 = PERSON
template = <name> married <filler> .
template = <name> exchanged rings with <filler> .
trigger = married

[slot per:age]
t1 = PERSON
t2 = NUMBER
template = <name> turned <filler> .
trigger = turned

[negatives]
template = <name> ignored <filler> entirely .

[lexicon PERSON]
anna
bob
carla
dan

[lexicon NUMBER]
30
41
52
";
    let spec = synth::parse_spec(spec_text).unwrap();
    let out = synth::generate(&spec, 21).unwrap();
    let schema = SlotSchema::tac_kbp();
    let vocab = build_vocab(&out.train);
    let hp = Hyperparams {
        num_filters: 12,
        hidden_rel: 16,
        hidden_ent: 8,
        embedding_dim: 10,
        epochs: 25,
        patience: 25,
        seed: 3,
        ..Hyperparams::default()
    };
    let emb = EmbeddingTable::random(vocab.clone(), hp.embedding_dim, hp.seed);
    let mut model = Model::new(
        Variant::Multiclass,
        schema.clone(),
        emb,
        hp.dims(),
        hp.seed,
        None,
    )
    .unwrap();
    let min = model.min_ctx_len();
    // Symmetrize: every spouse example is added in both orientations.
    let base = encode_examples(&out.train, &vocab, &model.schema, min).unwrap();
    let (spouse, _) = schema.resolve("per:spouse").unwrap();
    let mut train_set = base.clone();
    train_set.extend(
        base.iter()
            .filter(|e| e.gold == spouse)
            .map(reverse_arguments),
    );
    let dev_set = encode_examples(&out.dev, &vocab, &model.schema, min).unwrap();
    train(&mut model, &train_set, &dev_set, &hp).unwrap();

    let test_set = encode_examples(&out.test, &vocab, &model.schema, min).unwrap();
    let mut worst: f64 = 0.0;
    for ex in test_set.iter().filter(|e| e.gold == spouse) {
        let p = model.predict_slot_probability(ex, "per:spouse").unwrap();
        let p_rev = model
            .predict_slot_probability(&reverse_arguments(ex), "per:spouse")
            .unwrap();
        worst = worst.max((p - p_rev).abs());
    }
    println!("self-inverse symmetry: max |p - p_reversed| = {worst:.2e}");
    assert!(worst < 1e-6, "asymmetry {worst}");
}

/// Analytic-vs-numeric agreement for the scorer-facing losses reached
/// through the standalone loss functions (both algebraic routes).
#[test]
fn loss_routes_agree() {
    let mut rng = sub_rng(8, "acceptance-loss-routes");
    for _ in 0..200 {
        let n = 1 + rng.random_range(0..6usize);
        let logits = rand_vec(n, &mut rng);
        let targets: Vec<f64> = (0..n).map(|_| rng.random_range(0..2u8) as f64).collect();
        let probs: Vec<f64> = logits.iter().map(|&z| nn::sigmoid(z)).collect();
        let a = nn::bce_with_logits(&logits, &targets).unwrap();
        let b = nn::bce_loss(&probs, &targets).unwrap();
        assert!((a - b).abs() < 1e-10);

        let z = rand_vec(n, &mut rng);
        let p = softmax(&z);
        let gold = rng.random_range(0..n);
        let direct = nn::nll_loss(&p, gold).unwrap();
        let fused = log_sum_exp(&z) - z[gold];
        assert!((direct - fused).abs() < 1e-10);
    }
}
