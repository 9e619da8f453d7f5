//! Slot-wise precision/recall/F1 with macro and micro aggregates, plus
//! per-slot decision-threshold tuning.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use crate::encode::EncodedExample;
use crate::error::{Error, Result};
use crate::model::Model;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// F1 = 2PR / (P + R), defined as 0 when P + R = 0.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-slot decision thresholds, defaulting to 0.5.
#[derive(Debug, Clone, Default)]
pub struct Thresholds {
    by_slot: HashMap<usize, f64>,
}

impl Thresholds {
    pub fn new() -> Thresholds {
        Thresholds::default()
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.by_slot.get(&slot).copied().unwrap_or(DEFAULT_THRESHOLD)
    }

    pub fn set(&mut self, slot: usize, t: f64) {
        self.by_slot.insert(slot, t);
    }

    /// TSV: merged-slot-name <TAB> threshold.
    pub fn load(path: &Path, schema: &crate::schema::SlotSchema) -> Result<Thresholds> {
        let file = std::fs::File::open(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot open thresholds {}: {e}", path.display()))
        })?;
        let mut t = Thresholds::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (slot, value) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(i + 1, "expected slot<TAB>threshold"))?;
            let (id, _) = schema.resolve(slot)?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad threshold `{value}`")))?;
            t.set(id, v);
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path, schema: &crate::schema::SlotSchema) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut ids: Vec<usize> = self.by_slot.keys().copied().collect();
        ids.sort_unstable();
        for id in ids {
            writeln!(f, "{}\t{:.2}", schema.merged_name(id), self.by_slot[&id])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotScore {
    pub slot: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Slots with at least one gold or predicted instance, in schema order.
    pub slots: Vec<SlotScore>,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
}

/// Predicted slot of one example: the argmax among slots whose probability
/// clears their threshold; `None` means the N class.
pub fn predict_slot(probs: &[f64], thresholds: &Thresholds) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (slot, &p) in probs.iter().enumerate() {
        if p >= thresholds.get(slot) {
            match best {
                Some((_, bp)) if bp >= p => {}
                _ => best = Some((slot, p)),
            }
        }
    }
    best.map(|(s, _)| s)
}

/// Evaluate a model over examples in canonical orientation.
pub fn evaluate(
    model: &Model,
    data: &[EncodedExample],
    thresholds: &Thresholds,
) -> Result<EvalReport> {
    let n = model.schema.num_merged();
    let mut tp = vec![0usize; n];
    let mut fp = vec![0usize; n];
    let mut fn_ = vec![0usize; n];
    for ex in data {
        let probs = model.slot_probabilities(ex)?;
        let pred = predict_slot(&probs, thresholds);
        if let Some(p) = pred {
            if p == ex.gold {
                tp[p] += 1;
            } else {
                fp[p] += 1;
                if ex.gold < n {
                    fn_[ex.gold] += 1;
                }
            }
        } else if ex.gold < n {
            fn_[ex.gold] += 1;
        }
    }
    Ok(report_from_counts(model, &tp, &fp, &fn_))
}

fn report_from_counts(model: &Model, tp: &[usize], fp: &[usize], fn_: &[usize]) -> EvalReport {
    let n = model.schema.num_merged();
    let mut slots = Vec::new();
    let mut macro_sum = 0.0;
    let mut active = 0usize;
    let (mut tps, mut fps, mut fns) = (0usize, 0usize, 0usize);
    for s in 0..n {
        tps += tp[s];
        fps += fp[s];
        fns += fn_[s];
        if tp[s] + fp[s] + fn_[s] == 0 {
            continue;
        }
        let p = safe_div(tp[s], tp[s] + fp[s]);
        let r = safe_div(tp[s], tp[s] + fn_[s]);
        let f = f1(p, r);
        macro_sum += f;
        active += 1;
        slots.push(SlotScore {
            slot: model.schema.merged_name(s).to_string(),
            precision: p,
            recall: r,
            f1: f,
            tp: tp[s],
            fp: fp[s],
            fn_: fn_[s],
        });
    }
    let micro_p = safe_div(tps, tps + fps);
    let micro_r = safe_div(tps, tps + fns);
    EvalReport {
        slots,
        macro_f1: if active == 0 { 0.0 } else { macro_sum / active as f64 },
        micro_precision: micro_p,
        micro_recall: micro_r,
        micro_f1: f1(micro_p, micro_r),
    }
}

fn safe_div(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    /// Machine-readable tab-separated form.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# slot\tprecision\trecall\tf1\ttp\tfp\tfn\n");
        for s in &self.slots {
            out.push_str(&format!(
                "{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\t{}\n",
                s.slot, s.precision, s.recall, s.f1, s.tp, s.fp, s.fn_
            ));
        }
        out.push_str(&format!("macro_f1\t{:.4}\n", self.macro_f1));
        out.push_str(&format!(
            "micro\t{:.4}\t{:.4}\t{:.4}\n",
            self.micro_precision, self.micro_recall, self.micro_f1
        ));
        out
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<34} {:>9} {:>9} {:>9} {:>5} {:>5} {:>5}\n",
            "slot", "precision", "recall", "f1", "tp", "fp", "fn"
        ));
        for s in &self.slots {
            out.push_str(&format!(
                "{:<34} {:>9.4} {:>9.4} {:>9.4} {:>5} {:>5} {:>5}\n",
                s.slot, s.precision, s.recall, s.f1, s.tp, s.fp, s.fn_
            ));
        }
        out.push_str(&format!("macro F1 {:.4}\n", self.macro_f1));
        out.push_str(&format!(
            "micro P {:.4} R {:.4} F1 {:.4}\n",
            self.micro_precision, self.micro_recall, self.micro_f1
        ));
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn slot_f1(&self, slot: &str) -> Option<f64> {
        self.slots.iter().find(|s| s.slot == slot).map(|s| s.f1)
    }
}

/// Per-slot threshold maximizing that slot's dev F1 over the grid
/// 0.05, 0.10, ..., 0.95 (ties resolved toward the higher, more precise
/// threshold). Slots without gold instances keep the default.
pub fn tune_thresholds(
    model: &Model,
    dev: &[EncodedExample],
    grid_step: f64,
) -> Result<Thresholds> {
    if !(grid_step > 0.0 && grid_step < 1.0) {
        return Err(Error::InvalidConfig(format!("bad grid step {grid_step}")));
    }
    let n = model.schema.num_merged();
    let probs: Vec<Vec<f64>> = dev
        .iter()
        .map(|ex| model.slot_probabilities(ex))
        .collect::<Result<_>>()?;
    let mut out = Thresholds::new();
    let steps = (1.0 / grid_step).round() as usize;
    for slot in 0..n {
        let has_gold = dev.iter().any(|ex| ex.gold == slot);
        if !has_gold {
            continue;
        }
        let mut best_t = DEFAULT_THRESHOLD;
        let mut best_f1 = -1.0;
        for k in 1..steps {
            let t = k as f64 * grid_step;
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            for (ex, p) in dev.iter().zip(probs.iter()) {
                let fired = p[slot] >= t;
                match (fired, ex.gold == slot) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let f = f1(safe_div(tp, tp + fp), safe_div(tp, tp + fn_));
            if f >= best_f1 {
                best_f1 = f;
                best_t = t;
            }
        }
        out.set(slot, best_t);
    }
    Ok(out)
}
