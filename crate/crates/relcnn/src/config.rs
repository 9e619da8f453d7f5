//! Line-oriented `key = value` training configuration.
//!
//! Relative paths are resolved against the config file's directory. Unknown
//! keys are errors.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::Variant;
use crate::train::Hyperparams;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub variant: Variant,
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub triggers: Option<PathBuf>,
    /// Target slot for the binary variant.
    pub slot: Option<String>,
    /// Apply trigger-based negative cleaning before training.
    pub clean: bool,
    /// Subsample negatives to a 1:1 ratio before training.
    pub subsample: bool,
    pub hp: Hyperparams,
    pub grid: GridKeys,
}

/// Grid-search ranges; when a list is empty the appendix default range is
/// used by the grid runner.
#[derive(Debug, Clone, Default)]
pub struct GridKeys {
    pub filter_width: Vec<usize>,
    pub num_filters: Vec<usize>,
    pub hidden_rel: Vec<usize>,
    pub hidden_ent: Vec<usize>,
    pub alpha: Vec<f64>,
}

fn parse_list<T: std::str::FromStr>(v: &str, line: usize) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::parse(line, format!("bad list entry `{s}`")))
        })
        .collect()
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<TrainConfig> {
    let mut variant = None;
    let mut train = None;
    let mut dev = None;
    let mut test = None;
    let mut embeddings = None;
    let mut triggers = None;
    let mut slot = None;
    let mut clean = true;
    let mut subsample = true;
    let mut hp = Hyperparams::default();
    let mut grid = GridKeys::default();

    let resolve = |v: &str| -> PathBuf {
        let p = Path::new(v);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    };

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(lineno, "expected key = value"))?;
        let key = key.trim();
        let value = value.trim();
        let as_usize = || -> Result<usize> {
            value
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad integer `{value}`")))
        };
        let as_f64 = || -> Result<f64> {
            value
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad real `{value}`")))
        };
        let as_bool = || -> Result<bool> {
            match value {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(Error::parse(lineno, format!("bad bool `{value}`"))),
            }
        };
        match key {
            "variant" => variant = Some(Variant::parse(value)?),
            "train" => train = Some(resolve(value)),
            "dev" => dev = Some(resolve(value)),
            "test" => test = Some(resolve(value)),
            "embeddings" => embeddings = Some(resolve(value)),
            "triggers" => triggers = Some(resolve(value)),
            "slot" => slot = Some(value.to_string()),
            "clean" => clean = as_bool()?,
            "subsample" => subsample = as_bool()?,
            "filter_width" => hp.filter_width = as_usize()?,
            "num_filters" => hp.num_filters = as_usize()?,
            "hidden_rel" => hp.hidden_rel = as_usize()?,
            "hidden_ent" => hp.hidden_ent = as_usize()?,
            "alpha" => hp.alpha = as_f64()?,
            "lr" => hp.lr = as_f64()?,
            "batch" => hp.batch = as_usize()?,
            "l2" => hp.l2 = as_f64()?,
            "embedding_dim" => hp.embedding_dim = as_usize()?,
            "epochs" => hp.epochs = as_usize()?,
            "patience" => hp.patience = as_usize()?,
            "seed" => {
                hp.seed = value
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("bad seed `{value}`")))?
            }
            "grid_filter_width" => grid.filter_width = parse_list(value, lineno)?,
            "grid_num_filters" => grid.num_filters = parse_list(value, lineno)?,
            "grid_hidden_rel" => grid.hidden_rel = parse_list(value, lineno)?,
            "grid_hidden_ent" => grid.hidden_ent = parse_list(value, lineno)?,
            "grid_alpha" => grid.alpha = parse_list(value, lineno)?,
            other => {
                return Err(Error::parse(lineno, format!("unknown key `{other}`")));
            }
        }
    }

    let variant =
        variant.ok_or_else(|| Error::InvalidConfig("config needs `variant = ...`".into()))?;
    if variant == Variant::Binary && slot.is_none() {
        return Err(Error::InvalidConfig(
            "binary variant needs `slot = <name>`".into(),
        ));
    }
    hp.validate()?;
    Ok(TrainConfig {
        variant,
        train: train.ok_or_else(|| Error::InvalidConfig("config needs `train = ...`".into()))?,
        dev: dev.ok_or_else(|| Error::InvalidConfig("config needs `dev = ...`".into()))?,
        test,
        embeddings,
        triggers,
        slot,
        clean,
        subsample,
        hp,
        grid,
    })
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::InvalidConfig(format!("cannot open config {}: {e}", path.display()))
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&text, base)
}
