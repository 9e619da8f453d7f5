//! Vocabulary with reserved tokens and the word embedding table.
//!
//! Embedding file format: first line `V D`, then one token followed by D
//! decimal reals per line. Reserved tokens that the file does not provide
//! are added with deterministic rows (zero for the pad token).

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::init_uniform;
use crate::rng::sub_rng;
use crate::tensor::Tensor2;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const NAME_TAG: &str = "<name>";
pub const FILLER_TAG: &str = "<filler>";

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const NAME_ID: usize = 2;
pub const FILLER_ID: usize = 3;

/// Token <-> id map. Ids 0..4 are always pad, unknown, `<name>`, `<filler>`.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Vocabulary {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in [PAD_TOKEN, UNK_TOKEN, NAME_TAG, FILLER_TAG] {
            v.add(t);
        }
        v
    }

    /// Insert a token if absent; returns its id.
    pub fn add(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    /// Id of a token; unknown tokens map to the reserved unknown id.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|s| s.as_str())
    }

    /// Build from a token stream in first-appearance order.
    pub fn from_corpus<'a>(tokens: impl Iterator<Item = &'a str>) -> Vocabulary {
        let mut v = Vocabulary::new();
        for t in tokens {
            v.add(t);
        }
        v
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

/// Vocabulary plus one embedding row per token.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub vocab: Vocabulary,
    pub dim: usize,
    pub matrix: Tensor2,
}

impl EmbeddingTable {
    /// Random table over an existing vocabulary; the pad row stays zero.
    pub fn random(vocab: Vocabulary, dim: usize, seed: u64) -> EmbeddingTable {
        let mut rng = sub_rng(seed, "embed-init");
        let mut matrix = Tensor2::zeros(vocab.len(), dim);
        init_uniform(&mut matrix, vocab.len(), dim, &mut rng);
        matrix.row_mut(PAD_ID).fill(0.0);
        EmbeddingTable { vocab, dim, matrix }
    }

    /// Load pre-trained vectors; reserved tokens missing from the file get
    /// deterministic rows (zero pad, seeded random for the others).
    pub fn load(path: &Path, seed: u64) -> Result<EmbeddingTable> {
        let file = std::fs::File::open(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot open embeddings {}: {e}", path.display()))
        })?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(1, "empty embedding file"))??;
        let mut it = header.split_whitespace();
        let v: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(1, "expected `V D` header"))?;
        let dim: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(1, "expected `V D` header"))?;

        let mut vocab = Vocabulary::new();
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts
                .next()
                .ok_or_else(|| Error::parse(lineno, "missing token"))?;
            let vals: Vec<f64> = parts
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::parse(lineno, format!("bad real `{s}`")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != dim {
                return Err(Error::parse(
                    lineno,
                    format!("expected {dim} values, got {}", vals.len()),
                ));
            }
            let id = vocab.add(token);
            rows.push((id, vals));
        }
        if vocab.len() > v + 4 {
            return Err(Error::parse(
                1,
                format!("header declares {v} tokens, file has more"),
            ));
        }
        let mut rng = sub_rng(seed, "embed-missing");
        let mut matrix = Tensor2::zeros(vocab.len(), dim);
        init_uniform(&mut matrix, vocab.len(), dim, &mut rng);
        matrix.row_mut(PAD_ID).fill(0.0);
        for (id, vals) in rows {
            matrix.row_mut(id).copy_from_slice(&vals);
        }
        Ok(EmbeddingTable { vocab, dim, matrix })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{} {}", self.vocab.len(), self.dim)?;
        for (id, token) in self.vocab.tokens().enumerate() {
            write!(f, "{token}")?;
            for v in self.matrix.row(id) {
                write!(f, " {v}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocabulary::new();
        assert_eq!(v.id(PAD_TOKEN), PAD_ID);
        assert_eq!(v.id(UNK_TOKEN), UNK_ID);
        assert_eq!(v.id(NAME_TAG), NAME_ID);
        assert_eq!(v.id(FILLER_TAG), FILLER_ID);
        assert_eq!(v.id("never-seen"), UNK_ID);
    }

    #[test]
    fn corpus_vocab_keeps_first_appearance_order() {
        let v = Vocabulary::from_corpus(["b", "a", "b", "c"].into_iter());
        assert_eq!(v.id("b"), 4);
        assert_eq!(v.id("a"), 5);
        assert_eq!(v.id("c"), 6);
    }

    #[test]
    fn random_table_zeroes_pad_row() {
        let t = EmbeddingTable::random(Vocabulary::new(), 8, 3);
        assert!(t.matrix.row(PAD_ID).iter().all(|&x| x == 0.0));
        assert!(t.matrix.row(NAME_ID).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn load_round_trips_and_adds_reserved_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        std::fs::write(&path, "2 3\nfoo 0.5 -1 2\nbar 1 2 3\n").unwrap();
        let t = EmbeddingTable::load(&path, 7).unwrap();
        assert_eq!(t.dim, 3);
        assert_eq!(t.vocab.len(), 6); // 4 reserved + 2 file tokens
        assert_eq!(t.matrix.row(t.vocab.id("foo")), &[0.5, -1.0, 2.0]);
        assert!(t.matrix.row(PAD_ID).iter().all(|&x| x == 0.0));

        let out = dir.path().join("emb2.txt");
        t.save(&out).unwrap();
        let t2 = EmbeddingTable::load(&out, 7).unwrap();
        assert_eq!(t2.matrix.row(t2.vocab.id("bar")), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn load_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        std::fs::write(&path, "1 3\nfoo 0.5 -1\n").unwrap();
        match EmbeddingTable::load(&path, 7) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
