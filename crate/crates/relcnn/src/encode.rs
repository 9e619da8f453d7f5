//! Input encoding: argument tag substitution, context split and padding,
//! the argument-order flag, and tag reversal for inverse slots.

use crate::embed::{Vocabulary, FILLER_ID, NAME_ID, PAD_ID};
use crate::error::{Error, Result};
use crate::schema::EntityType;

/// One classification instance. Each context includes its adjacent argument
/// tag: the left context ends with the first tag, the middle spans
/// tag-to-tag inclusive, the right context begins with the second tag.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub left: Vec<usize>,
    pub middle: Vec<usize>,
    pub right: Vec<usize>,
    /// 1 if the query entity (`<name>`) precedes the filler in the sentence.
    pub v: u8,
    /// Gold class index (merged slot, or the schema's N class).
    pub gold: usize,
    /// Type of the argument tagged `<name>`.
    pub type1: EntityType,
    /// Type of the argument tagged `<filler>`.
    pub type2: EntityType,
}

fn pad_front(mut seq: Vec<usize>, min_len: usize) -> Vec<usize> {
    if seq.len() < min_len {
        let mut padded = vec![PAD_ID; min_len - seq.len()];
        padded.append(&mut seq);
        padded
    } else {
        seq
    }
}

fn pad_back(mut seq: Vec<usize>, min_len: usize) -> Vec<usize> {
    while seq.len() < min_len {
        seq.push(PAD_ID);
    }
    seq
}

/// Replace the argument spans by `<name>`/`<filler>` tags, split into
/// left/middle/right contexts and pad each to at least `min_ctx_len` tokens.
///
/// Spans are token index ranges with exclusive ends. The caller fills in the
/// gold label and argument types afterwards (they default to N-ish neutral
/// values here would be wrong, so they are parameters).
pub fn encode(
    tokens: &[String],
    name_span: (usize, usize),
    filler_span: (usize, usize),
    vocab: &Vocabulary,
    min_ctx_len: usize,
    gold: usize,
    type1: EntityType,
    type2: EntityType,
) -> Result<EncodedExample> {
    let check_span = |(s, e): (usize, usize), what: &str| -> Result<()> {
        if s >= e || e > tokens.len() {
            return Err(Error::InvalidSpan(format!(
                "{what} span {s}:{e} invalid for {} tokens",
                tokens.len()
            )));
        }
        Ok(())
    };
    check_span(name_span, "name")?;
    check_span(filler_span, "filler")?;
    let overlap = name_span.0 < filler_span.1 && filler_span.0 < name_span.1;
    if overlap {
        return Err(Error::InvalidSpan(format!(
            "name span {}:{} overlaps filler span {}:{}",
            name_span.0, name_span.1, filler_span.0, filler_span.1
        )));
    }

    let name_first = name_span.0 < filler_span.0;
    let (first, second) = if name_first {
        (name_span, filler_span)
    } else {
        (filler_span, name_span)
    };
    let (first_tag, second_tag) = if name_first {
        (NAME_ID, FILLER_ID)
    } else {
        (FILLER_ID, NAME_ID)
    };

    let ids = |range: std::ops::Range<usize>| -> Vec<usize> {
        tokens[range].iter().map(|t| vocab.id(t)).collect()
    };

    let mut left = ids(0..first.0);
    left.push(first_tag);

    let mut middle = vec![first_tag];
    middle.extend(ids(first.1..second.0));
    middle.push(second_tag);

    let mut right = vec![second_tag];
    right.extend(ids(second.1..tokens.len()));

    left = pad_front(left, min_ctx_len);
    middle = pad_back(middle, min_ctx_len);
    right = pad_back(right, min_ctx_len);

    Ok(EncodedExample {
        left,
        middle,
        right,
        v: if name_first { 1 } else { 0 },
        gold,
        type1,
        type2,
    })
}

/// Swap the `<name>`/`<filler>` tags in place, flip the order flag and swap
/// the argument types; contexts are otherwise unchanged. An involution.
pub fn reverse_arguments(ex: &EncodedExample) -> EncodedExample {
    let swap = |seq: &[usize]| -> Vec<usize> {
        seq.iter()
            .map(|&id| match id {
                NAME_ID => FILLER_ID,
                FILLER_ID => NAME_ID,
                other => other,
            })
            .collect()
    };
    EncodedExample {
        left: swap(&ex.left),
        middle: swap(&ex.middle),
        right: swap(&ex.right),
        v: 1 - ex.v,
        gold: ex.gold,
        type1: ex.type2,
        type2: ex.type1,
    }
}
