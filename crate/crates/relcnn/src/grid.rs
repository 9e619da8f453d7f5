//! Exhaustive hyperparameter grid search over the published ranges.

use crate::config::GridKeys;
use crate::dataset::{encode_examples, RawExample};
use crate::embed::EmbeddingTable;
use crate::error::Result;
use crate::model::{Model, Variant};
use crate::schema::SlotSchema;
use crate::train::{train, Hyperparams};

/// Published tuning ranges: filter width {3,5}, filters {100,300,1000,3000},
/// relation hidden units {100,300,1000}, entity hidden units {25,100}.
pub fn default_ranges(base: &Hyperparams) -> GridKeys {
    GridKeys {
        filter_width: vec![3, 5],
        num_filters: vec![100, 300, 1000, 3000],
        hidden_rel: vec![100, 300, 1000],
        hidden_ent: vec![25, 100],
        alpha: vec![base.alpha],
    }
}

fn effective(ranges: &GridKeys, base: &Hyperparams) -> GridKeys {
    let defaults = default_ranges(base);
    let pick = |given: &Vec<usize>, def: Vec<usize>| -> Vec<usize> {
        if given.is_empty() {
            def
        } else {
            given.clone()
        }
    };
    GridKeys {
        filter_width: pick(&ranges.filter_width, defaults.filter_width),
        num_filters: pick(&ranges.num_filters, defaults.num_filters),
        hidden_rel: pick(&ranges.hidden_rel, defaults.hidden_rel),
        hidden_ent: pick(&ranges.hidden_ent, defaults.hidden_ent),
        alpha: if ranges.alpha.is_empty() {
            defaults.alpha
        } else {
            ranges.alpha.clone()
        },
    }
}

#[derive(Debug, Clone)]
pub struct GridRow {
    pub hp: Hyperparams,
    pub dev_macro_f1: f64,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    /// One row per configuration, in grid order.
    pub rows: Vec<GridRow>,
    /// Index of the best row (ties keep the earliest configuration).
    pub best: usize,
}

impl GridOutcome {
    pub fn best_hp(&self) -> &Hyperparams {
        &self.rows[self.best].hp
    }

    pub fn to_tsv(&self) -> String {
        let mut out =
            String::from("# filter_width\tnum_filters\thidden_rel\thidden_ent\talpha\tdev_macro_f1\n");
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{:.4}{}\n",
                row.hp.filter_width,
                row.hp.num_filters,
                row.hp.hidden_rel,
                row.hp.hidden_ent,
                row.hp.alpha,
                row.dev_macro_f1,
                if i == self.best { "\tbest" } else { "" }
            ));
        }
        out
    }
}

/// Train one model per configuration in the product of the ranges, all with
/// the shared seed, and rank by dev macro F1. Examples are re-encoded per
/// configuration because the minimum context padding depends on the filter
/// width.
pub fn grid_search(
    variant: Variant,
    schema: &SlotSchema,
    emb: &EmbeddingTable,
    train_raw: &[RawExample],
    dev_raw: &[RawExample],
    base: &Hyperparams,
    ranges: &GridKeys,
    binary_slot: Option<&str>,
) -> Result<GridOutcome> {
    let ranges = effective(ranges, base);
    let mut rows = Vec::new();
    let mut best = 0usize;
    let mut best_f1 = f64::NEG_INFINITY;
    for &w in &ranges.filter_width {
        for &m in &ranges.num_filters {
            for &hr in &ranges.hidden_rel {
                for &he in &ranges.hidden_ent {
                    for &alpha in &ranges.alpha {
                        let hp = Hyperparams {
                            filter_width: w,
                            num_filters: m,
                            hidden_rel: hr,
                            hidden_ent: he,
                            alpha,
                            ..base.clone()
                        };
                        let mut model = Model::new(
                            variant,
                            schema.clone(),
                            emb.clone(),
                            hp.dims(),
                            hp.seed,
                            binary_slot,
                        )?;
                        let min = model.min_ctx_len();
                        let train_set =
                            encode_examples(train_raw, &model.vocab, &model.schema, min)?;
                        let dev_set = encode_examples(dev_raw, &model.vocab, &model.schema, min)?;
                        let hist = train(&mut model, &train_set, &dev_set, &hp)?;
                        let f1 = hist.best_dev_f1;
                        if f1 > best_f1 {
                            best_f1 = f1;
                            best = rows.len();
                        }
                        rows.push(GridRow { hp, dev_macro_f1: f1 });
                    }
                }
            }
        }
    }
    Ok(GridOutcome { rows, best })
}
