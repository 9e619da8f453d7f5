//! Command-line driver: data generation, training, grid search, evaluation,
//! prediction, gradient checking and slot-filler postprocessing.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numeric
//! failure (divergence or a failed gradient check).

use std::collections::HashMap;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use relcnn::config::{load_config, TrainConfig};
use relcnn::dataset::{encode_examples, load_dataset, RawExample, TriggerList};
use relcnn::embed::EmbeddingTable;
use relcnn::encode::encode;
use relcnn::error::{Error, Result};
use relcnn::eval::{evaluate, tune_thresholds, Thresholds};
use relcnn::grid::grid_search;
use relcnn::model::{Model, ModelDims, Variant};
use relcnn::postproc::{
    infer_location, load_slot_specs, location_target, select_fillers, FillerCandidate,
    LocationMaps,
};
use relcnn::schema::SlotSchema;
use relcnn::synth;
use relcnn::train::{prepare_training_data, train};

#[derive(Parser)]
#[command(
    name = "relcnn",
    version,
    about = "Type-aware convolutional relation classifiers for slot filling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (train/dev/test splits plus triggers)
    GenData(GenDataArgs),
    /// Train a model from a config file
    Train(TrainArgs),
    /// Exhaustive hyperparameter grid search
    Grid(GridArgs),
    /// Evaluate a stored model on a dataset
    Eval(EvalArgs),
    /// Per-example probabilities for one queried slot
    Predict(PredictArgs),
    /// Finite-difference check of all analytic gradients
    Gradcheck(GradcheckArgs),
    /// Threshold, rank and cut filler candidates; location inference
    Postprocess(PostprocessArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Synthetic corpus spec file
    #[arg(long)]
    spec: PathBuf,
    /// Random seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training config file (key = value lines)
    #[arg(long)]
    config: PathBuf,
    /// Where to write the trained model
    #[arg(long)]
    out: PathBuf,
    /// Also tune per-slot thresholds on dev and write them next to the model
    #[arg(long, default_value_t = false)]
    tune_thresholds: bool,
}

#[derive(Args)]
struct GridArgs {
    /// Training config file with grid_* ranges
    #[arg(long)]
    config: PathBuf,
    /// Where to write the per-configuration score table
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Stored model file
    #[arg(long)]
    model: PathBuf,
    /// Dataset to evaluate
    #[arg(long)]
    data: PathBuf,
    /// Per-slot thresholds file (slot<TAB>threshold); defaults to 0.5
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Where to write the tab-separated report
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Stored model file
    #[arg(long)]
    model: PathBuf,
    /// Dataset to score
    #[arg(long)]
    data: PathBuf,
    /// Queried slot (original or merged name)
    #[arg(long)]
    slot: String,
    /// Where to write id<TAB>gold<TAB>probability lines
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Model variant: binary, multiclass, multiclass+p, multiclass+j, multiclass+s
    #[arg(long)]
    variant: String,
    /// Random seed for the model and the probe examples
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of random probe examples
    #[arg(long, default_value_t = 10)]
    examples: usize,
    /// Pass/fail bound on the max relative error
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct PostprocessArgs {
    /// Candidate scores: slot<TAB>filler<TAB>score<TAB>sentence_id
    #[arg(long)]
    scores: PathBuf,
    /// Slot output policies: slot<TAB>single|list<TAB>top_n<TAB>threshold
    #[arg(long)]
    slotspec: PathBuf,
    /// Directory with location membership lists and mappings
    #[arg(long)]
    maps: Option<PathBuf>,
    /// Query hop (hop 1 raises thresholds by 0.1)
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    hop: u8,
    /// Where to write the selected fillers
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    return ExitCode::SUCCESS;
                }
                _ => 1,
            };
            eprint!("{e}");
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) | Error::Diverged { .. } => 3,
        _ => 2,
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => do_train(a),
        Command::Grid(a) => do_grid(a),
        Command::Eval(a) => do_eval(a),
        Command::Predict(a) => do_predict(a),
        Command::Gradcheck(a) => do_gradcheck(a),
        Command::Postprocess(a) => do_postprocess(a),
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let spec = synth::load_spec(&a.spec)?;
    synth::generate_to_dir(&spec, a.seed, &a.out)?;
    println!(
        "wrote train.tsv ({}), dev.tsv ({}), test.tsv ({}), triggers.tsv to {}",
        spec.train,
        spec.dev,
        spec.test,
        a.out.display()
    );
    Ok(())
}

/// Shared setup: load config, prepare data, build the model.
fn build_from_config(
    cfg: &TrainConfig,
) -> Result<(Model, Vec<RawExample>, Vec<RawExample>, Option<Vec<RawExample>>)> {
    let train_raw = load_dataset(&cfg.train)?;
    let dev_raw = load_dataset(&cfg.dev)?;
    let test_raw = cfg.test.as_deref().map(load_dataset).transpose()?;
    let triggers = cfg
        .triggers
        .as_deref()
        .map(TriggerList::load)
        .transpose()?;
    let prepared = prepare_training_data(
        &train_raw,
        if cfg.clean { triggers.as_ref() } else { None },
        cfg.variant,
        cfg.slot.as_deref(),
        cfg.subsample,
        cfg.hp.seed,
    );
    let emb = match &cfg.embeddings {
        Some(path) => {
            let table = EmbeddingTable::load(path, cfg.hp.seed)?;
            if table.dim != cfg.hp.embedding_dim {
                return Err(Error::InvalidConfig(format!(
                    "embedding file dim {} != embedding_dim {}",
                    table.dim, cfg.hp.embedding_dim
                )));
            }
            table
        }
        None => EmbeddingTable::random(
            relcnn::dataset::build_vocab(&prepared),
            cfg.hp.embedding_dim,
            cfg.hp.seed,
        ),
    };
    let model = Model::new(
        cfg.variant,
        SlotSchema::tac_kbp(),
        emb,
        cfg.hp.dims(),
        cfg.hp.seed,
        cfg.slot.as_deref(),
    )?;
    Ok((model, prepared, dev_raw, test_raw))
}

fn do_train(a: TrainArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let (mut model, prepared, dev_raw, test_raw) = build_from_config(&cfg)?;
    let min = model.min_ctx_len();
    let train_set = encode_examples(&prepared, &model.vocab, &model.schema, min)?;
    let dev_set = encode_examples(&dev_raw, &model.vocab, &model.schema, min)?;
    let history = train(&mut model, &train_set, &dev_set, &cfg.hp)?;
    for e in &history.epochs {
        println!(
            "epoch {:>3}  train_loss {:.6}  dev_macro_f1 {:.4}",
            e.epoch, e.train_loss, e.dev_macro_f1
        );
    }
    println!(
        "best epoch {} (dev macro F1 {:.4}); {} parameters",
        history.best_epoch,
        history.best_dev_f1,
        model.num_parameters()
    );
    model.save(&a.out)?;
    println!("model written to {}", a.out.display());
    if a.tune_thresholds {
        let th = tune_thresholds(&model, &dev_set, 0.05)?;
        let path = a.out.with_extension("thresholds.tsv");
        th.save(&path, &model.schema)?;
        println!("thresholds written to {}", path.display());
    }
    if let Some(test_raw) = test_raw {
        let test_set = encode_examples(&test_raw, &model.vocab, &model.schema, min)?;
        let report = evaluate(&model, &test_set, &Thresholds::new())?;
        print!("{}", report.to_table());
    }
    Ok(())
}

fn do_grid(a: GridArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let train_raw = load_dataset(&cfg.train)?;
    let dev_raw = load_dataset(&cfg.dev)?;
    let triggers = cfg
        .triggers
        .as_deref()
        .map(TriggerList::load)
        .transpose()?;
    let prepared = prepare_training_data(
        &train_raw,
        if cfg.clean { triggers.as_ref() } else { None },
        cfg.variant,
        cfg.slot.as_deref(),
        cfg.subsample,
        cfg.hp.seed,
    );
    let emb = match &cfg.embeddings {
        Some(path) => EmbeddingTable::load(path, cfg.hp.seed)?,
        None => EmbeddingTable::random(
            relcnn::dataset::build_vocab(&prepared),
            cfg.hp.embedding_dim,
            cfg.hp.seed,
        ),
    };
    let outcome = grid_search(
        cfg.variant,
        &SlotSchema::tac_kbp(),
        &emb,
        &prepared,
        &dev_raw,
        &cfg.hp,
        &cfg.grid,
        cfg.slot.as_deref(),
    )?;
    std::fs::write(&a.out, outcome.to_tsv())?;
    let best = outcome.best_hp();
    println!(
        "{} configurations; best: filter_width={} num_filters={} hidden_rel={} hidden_ent={} alpha={} (dev macro F1 {:.4})",
        outcome.rows.len(),
        best.filter_width,
        best.num_filters,
        best.hidden_rel,
        best.hidden_ent,
        best.alpha,
        outcome.rows[outcome.best].dev_macro_f1
    );
    println!("table written to {}", a.out.display());
    Ok(())
}

fn do_eval(a: EvalArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let data = load_dataset(&a.data)?;
    let encoded = encode_examples(&data, &model.vocab, &model.schema, model.min_ctx_len())?;
    let thresholds = match &a.thresholds {
        Some(path) => Thresholds::load(path, &model.schema)?,
        None => Thresholds::new(),
    };
    let report = evaluate(&model, &encoded, &thresholds)?;
    report.write_tsv(&a.out)?;
    print!("{}", report.to_table());
    println!("report written to {}", a.out.display());
    Ok(())
}

fn do_predict(a: PredictArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let data = load_dataset(&a.data)?;
    let min = model.min_ctx_len();
    let mut out = std::io::BufWriter::new(std::fs::File::create(&a.out)?);
    writeln!(out, "# id\tgold\tp({})", a.slot)?;
    for raw in &data {
        // Raw orientation: the queried slot decides any tag reversal.
        let ex = encode(
            &raw.tokens,
            raw.name_span,
            raw.filler_span,
            &model.vocab,
            min,
            model.schema.n_class(),
            raw.type1,
            raw.type2,
        )?;
        let p = model.predict_slot_probability(&ex, &a.slot)?;
        writeln!(out, "{}\t{}\t{:.6}", raw.id, raw.slot, p)?;
    }
    println!("predictions written to {}", a.out.display());
    Ok(())
}

fn do_gradcheck(a: GradcheckArgs) -> Result<()> {
    let variant = Variant::parse(&a.variant)?;
    let (mut model, examples) = gradcheck_fixture(variant, a.seed, a.examples)?;
    let err = model.gradient_check(&examples, 0.5, 1e-5)?;
    println!(
        "variant {} max relative gradient error {err:.3e} over {} examples ({} parameters)",
        variant.name(),
        examples.len(),
        model.num_parameters()
    );
    if err < a.tolerance {
        println!("PASS (tolerance {:.1e})", a.tolerance);
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "gradient check failed: {err:.3e} >= tolerance {:.1e}",
            a.tolerance
        )))
    }
}

/// Small random model plus probe examples for gradient checking.
fn gradcheck_fixture(
    variant: Variant,
    seed: u64,
    n_examples: usize,
) -> Result<(Model, Vec<relcnn::encode::EncodedExample>)> {
    let dims = ModelDims {
        filter_width: 3,
        num_filters: 5,
        emb_dim: 8,
        hidden_rel: 10,
        hidden_ent: 6,
    };
    let mut vocab = relcnn::embed::Vocabulary::new();
    for i in 0..30 {
        vocab.add(&format!("tok{i}"));
    }
    let emb = EmbeddingTable::random(vocab, dims.emb_dim, seed);
    let schema = SlotSchema::tac_kbp();
    let binary_slot = (variant == Variant::Binary).then_some("per:children");
    let model = Model::new(variant, schema, emb, dims, seed, binary_slot)?;
    let examples = relcnn::model::random_examples(&model, n_examples, seed);
    Ok((model, examples))
}

fn do_postprocess(a: PostprocessArgs) -> Result<()> {
    let specs = load_slot_specs(&a.slotspec)?;
    let spec_by_slot: HashMap<&str, &relcnn::postproc::SlotSpec> =
        specs.iter().map(|s| (s.slot.as_str(), s)).collect();
    let maps = a.maps.as_deref().map(LocationMaps::load_dir).transpose()?;

    let text = std::fs::read_to_string(&a.scores).map_err(|e| {
        Error::InvalidConfig(format!("cannot open scores {}: {e}", a.scores.display()))
    })?;
    // Group candidate rows by slot, keeping first-appearance order.
    let mut order: Vec<String> = Vec::new();
    let mut by_slot: HashMap<String, Vec<FillerCandidate>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(lineno, "expected slot\tfiller\tscore\tsentence_id"));
        }
        let score: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad score `{}`", fields[2])))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::parse(lineno, format!("score {score} outside [0, 1]")));
        }
        if !by_slot.contains_key(fields[0]) {
            order.push(fields[0].to_string());
        }
        by_slot.entry(fields[0].to_string()).or_default().push(FillerCandidate {
            filler: fields[1].to_string(),
            score,
            sentence_id: fields[3].to_string(),
        });
    }

    let mut out = std::io::BufWriter::new(std::fs::File::create(&a.out)?);
    writeln!(out, "# slot\tfiller\tscore\tsentence_id")?;
    for slot in &order {
        let spec = spec_by_slot.get(slot.as_str()).ok_or_else(|| {
            Error::InvalidConfig(format!("no slot spec entry for `{slot}`"))
        })?;
        let mut cands = by_slot.remove(slot).expect("grouped above");
        // Location slots with a specific granularity: map filler candidates
        // upward, dropping the ones that cannot be inferred.
        if let (Some(target), Some(maps)) = (location_target(slot), maps.as_ref()) {
            cands = cands
                .into_iter()
                .filter_map(|c| {
                    infer_location(&c.filler, target, maps).map(|filler| FillerCandidate {
                        filler,
                        ..c
                    })
                })
                .collect();
        }
        for c in select_fillers(&cands, spec, a.hop) {
            writeln!(out, "{slot}\t{}\t{:.4}\t{}", c.filler, c.score, c.sentence_id)?;
        }
    }
    println!("fillers written to {}", a.out.display());
    Ok(())
}
