//! Dataset files, trigger lists, negative cleaning and subsampling.
//!
//! Dataset format: UTF-8, one example per line, 8 tab-separated fields:
//! id, slot-or-NEG, type1, type2, name-span `start:end` (end exclusive),
//! filler-span, `NAME_FIRST|FILLER_FIRST`, space-separated tokens.
//! Lines starting with `#` are comments.

use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use rand::seq::index::sample;

use crate::embed::Vocabulary;
use crate::encode::{encode, reverse_arguments, EncodedExample};
use crate::error::{Error, Result};
use crate::rng::sub_rng;
use crate::schema::{EntityType, SlotSchema};

pub const NEG_LABEL: &str = "NEG";

#[derive(Debug, Clone, PartialEq)]
pub struct RawExample {
    pub id: String,
    /// Original slot name, `NEG` (uncleaned negative) or `N`.
    pub slot: String,
    /// Type of the query entity (name span).
    pub type1: EntityType,
    /// Type of the filler candidate.
    pub type2: EntityType,
    pub name_span: (usize, usize),
    pub filler_span: (usize, usize),
    pub tokens: Vec<String>,
}

impl RawExample {
    pub fn is_negative(&self) -> bool {
        self.slot == NEG_LABEL || self.slot == crate::schema::N_LABEL
    }

    pub fn name_first(&self) -> bool {
        self.name_span.0 < self.filler_span.0
    }
}

fn parse_span(s: &str, line: usize) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::parse(line, format!("span `{s}` is not start:end")))?;
    let start = a
        .parse::<usize>()
        .map_err(|_| Error::parse(line, format!("bad span start `{a}`")))?;
    let end = b
        .parse::<usize>()
        .map_err(|_| Error::parse(line, format!("bad span end `{b}`")))?;
    Ok((start, end))
}

fn validate_spans(ex: &RawExample, line: usize) -> Result<()> {
    for (what, (s, e)) in [("name", ex.name_span), ("filler", ex.filler_span)] {
        if s >= e || e > ex.tokens.len() {
            return Err(Error::InvalidSpan(format!(
                "line {line}: {what} span {s}:{e} invalid for {} tokens",
                ex.tokens.len()
            )));
        }
    }
    let (n, f) = (ex.name_span, ex.filler_span);
    if n.0 < f.1 && f.0 < n.1 {
        return Err(Error::InvalidSpan(format!(
            "line {line}: name span {}:{} overlaps filler span {}:{}",
            n.0, n.1, f.0, f.1
        )));
    }
    Ok(())
}

pub fn parse_line(line: &str, lineno: usize) -> Result<RawExample> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 8 {
        return Err(Error::parse(
            lineno,
            format!("expected 8 tab-separated fields, got {}", fields.len()),
        ));
    }
    let ex = RawExample {
        id: fields[0].to_string(),
        slot: fields[1].to_string(),
        type1: EntityType::parse(fields[2]).map_err(|e| Error::parse(lineno, e.to_string()))?,
        type2: EntityType::parse(fields[3]).map_err(|e| Error::parse(lineno, e.to_string()))?,
        name_span: parse_span(fields[4], lineno)?,
        filler_span: parse_span(fields[5], lineno)?,
        tokens: fields[7].split(' ').map(|t| t.to_string()).collect(),
    };
    validate_spans(&ex, lineno)?;
    let flag = fields[6];
    let expect = if ex.name_first() { "NAME_FIRST" } else { "FILLER_FIRST" };
    if flag != expect {
        return Err(Error::parse(
            lineno,
            format!("order flag `{flag}` contradicts spans (expected {expect})"),
        ));
    }
    Ok(ex)
}

pub fn load_dataset(path: &Path) -> Result<Vec<RawExample>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::InvalidConfig(format!("cannot open dataset {}: {e}", path.display()))
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_line(&line, lineno)?);
    }
    Ok(out)
}

pub fn format_line(ex: &RawExample) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}:{}\t{}:{}\t{}\t{}",
        ex.id,
        ex.slot,
        ex.type1.name(),
        ex.type2.name(),
        ex.name_span.0,
        ex.name_span.1,
        ex.filler_span.0,
        ex.filler_span.1,
        if ex.name_first() { "NAME_FIRST" } else { "FILLER_FIRST" },
        ex.tokens.join(" ")
    )
}

pub fn save_dataset(path: &Path, examples: &[RawExample]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# id\tslot\ttype1\ttype2\tname_span\tfiller_span\torder\ttokens")?;
    for ex in examples {
        writeln!(f, "{}", format_line(ex))?;
    }
    Ok(())
}

/// Per-slot token-sequence trigger patterns, matched case-folded as
/// contiguous subsequences.
#[derive(Debug, Clone, Default)]
pub struct TriggerList {
    patterns: Vec<(String, Vec<String>)>,
}

impl TriggerList {
    pub fn new() -> TriggerList {
        TriggerList::default()
    }

    pub fn add(&mut self, slot: &str, pattern: &str) {
        let toks: Vec<String> = pattern
            .split_whitespace()
            .map(|t| t.to_lowercase())
            .collect();
        if !toks.is_empty() {
            self.patterns.push((slot.to_string(), toks));
        }
    }

    pub fn load(path: &Path) -> Result<TriggerList> {
        let file = std::fs::File::open(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot open triggers {}: {e}", path.display()))
        })?;
        let mut list = TriggerList::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (slot, pattern) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(i + 1, "expected slot<TAB>pattern"))?;
            list.add(slot, pattern);
        }
        Ok(list)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (slot, toks) in &self.patterns {
            writeln!(f, "{slot}\t{}", toks.join(" "))?;
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.patterns.iter().map(|(s, _)| s.as_str())
    }

    /// Does any trigger of `slot` occur in `tokens`?
    pub fn matches_slot(&self, slot: &str, tokens: &[String]) -> bool {
        let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
        self.patterns
            .iter()
            .filter(|(s, _)| s == slot)
            .any(|(_, pat)| contains_subsequence(&lower, pat))
    }

    /// Does any trigger of any slot occur in `tokens`?
    pub fn matches_any(&self, tokens: &[String]) -> bool {
        let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
        self.patterns
            .iter()
            .any(|(_, pat)| contains_subsequence(&lower, pat))
    }
}

fn contains_subsequence(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return needle.is_empty();
    }
    haystack
        .windows(needle.len())
        .any(|w| w.iter().zip(needle.iter()).all(|(a, b)| a == b))
}

#[derive(Debug, Clone)]
pub enum CleanMode {
    /// Negatives for one target slot: drop those containing a trigger of
    /// that slot.
    Binary { slot: String },
    /// Multi-class data: drop negatives containing a trigger of any slot,
    /// relabel survivors to the artificial class N.
    MultiClass,
}

/// Trigger-based cleaning of distantly supervised negatives. Positives pass
/// through untouched.
pub fn clean_negatives(
    examples: &[RawExample],
    triggers: &TriggerList,
    mode: &CleanMode,
) -> Vec<RawExample> {
    let mut out = Vec::with_capacity(examples.len());
    for ex in examples {
        if !ex.is_negative() {
            out.push(ex.clone());
            continue;
        }
        match mode {
            CleanMode::Binary { slot } => {
                if !triggers.matches_slot(slot, &ex.tokens) {
                    out.push(ex.clone());
                }
            }
            CleanMode::MultiClass => {
                if !triggers.matches_any(&ex.tokens) {
                    let mut kept = ex.clone();
                    kept.slot = crate::schema::N_LABEL.to_string();
                    out.push(kept);
                }
            }
        }
    }
    out
}

/// Downsample negatives to at most the number of non-negative examples,
/// uniformly without replacement, preserving original order. Deterministic
/// per seed.
pub fn subsample_negatives(examples: &[RawExample], seed: u64) -> Vec<RawExample> {
    let neg_idx: Vec<usize> = examples
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_negative())
        .map(|(i, _)| i)
        .collect();
    let pos = examples.len() - neg_idx.len();
    if neg_idx.len() <= pos {
        return examples.to_vec();
    }
    let mut rng = sub_rng(seed, "subsample");
    let mut chosen: Vec<usize> = sample(&mut rng, neg_idx.len(), pos)
        .into_iter()
        .map(|k| neg_idx[k])
        .collect();
    chosen.sort_unstable();
    let mut keep = vec![false; examples.len()];
    for (i, e) in examples.iter().enumerate() {
        if !e.is_negative() {
            keep[i] = true;
        }
    }
    for i in chosen {
        keep[i] = true;
    }
    examples
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(e, _)| e.clone())
        .collect()
}

/// Vocabulary over the token stream of a dataset, in first-appearance order.
pub fn build_vocab(examples: &[RawExample]) -> Vocabulary {
    Vocabulary::from_corpus(
        examples
            .iter()
            .flat_map(|e| e.tokens.iter().map(|t| t.as_str())),
    )
}

/// Encode raw examples into canonical orientation: tag substitution, context
/// split, then a tag reversal when the gold slot is inverse-oriented. The
/// gold label becomes the merged class id (N for negatives).
pub fn encode_examples(
    examples: &[RawExample],
    vocab: &Vocabulary,
    schema: &SlotSchema,
    min_ctx_len: usize,
) -> Result<Vec<EncodedExample>> {
    examples
        .iter()
        .map(|ex| encode_example(ex, vocab, schema, min_ctx_len))
        .collect()
}

pub fn encode_example(
    ex: &RawExample,
    vocab: &Vocabulary,
    schema: &SlotSchema,
    min_ctx_len: usize,
) -> Result<EncodedExample> {
    let (gold, reversed) = if ex.is_negative() {
        (schema.n_class(), false)
    } else {
        schema.resolve(&ex.slot)?
    };
    let enc = encode(
        &ex.tokens,
        ex.name_span,
        ex.filler_span,
        vocab,
        min_ctx_len,
        gold,
        ex.type1,
        ex.type2,
    )?;
    Ok(if reversed { reverse_arguments(&enc) } else { enc })
}
