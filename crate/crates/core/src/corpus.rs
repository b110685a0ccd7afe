//! Vocabulary, sentence encoding and perplexity.
//!
//! Corpora are UTF-8 text with one whitespace-tokenized sentence per line.
//! A sentence `w_1 .. w_n` is fed as `<s> w_1 .. w_n` and predicts
//! `w_1 .. w_n </s>`, so it contributes `n + 1` tokens to perplexity.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

pub const UNK_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;

const SPECIALS: [&str; 3] = [UNK, BOS, EOS];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        for (i, special) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*special) {
                return Err(Error::Ingestion(format!(
                    "vocabulary must start with {UNK}, {BOS}, {EOS}; line {} is {:?}",
                    i + 1,
                    tokens.get(i)
                )));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Ingestion(format!("invalid vocabulary entry {tok:?} on line {}", id + 1)));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::Ingestion(format!("duplicate vocabulary entry {tok:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or `<unk>`.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `None` for a line with no tokens; such lines are skipped.
    pub fn encode(&self, line: &str) -> Option<EncodedSentence> {
        let mut ids = vec![BOS_ID];
        ids.extend(line.split_whitespace().map(|w| self.id_or_unk(w)));
        if ids.len() == 1 {
            return None;
        }
        ids.push(EOS_ID);
        Some(EncodedSentence { ids })
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&id| self.token(id).unwrap_or(UNK)).collect()
    }

    /// File contents: one token per line, line number = id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for tok in &self.tokens {
            out.push_str(tok);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        Vocabulary::from_tokens(body.split('\n').map(str::to_owned).collect())
    }

    /// Hex SHA-256 of the file contents.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_text(&text)
    }
}

/// Most frequent tokens first, ties by first occurrence. `max_size` excludes
/// the three special tokens; tokens seen fewer than `min_count` times are
/// dropped.
pub fn build_vocab<I, S>(lines: I, max_size: Option<usize>, min_count: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    // token -> (count, first occurrence)
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    let mut seen = 0usize;
    for line in lines {
        for w in line.as_ref().split_whitespace() {
            seen += 1;
            if SPECIALS.contains(&w) {
                continue;
            }
            let next = counts.len();
            counts.entry(w.to_owned()).or_insert((0, next)).0 += 1;
        }
    }
    if seen == 0 {
        return Err(Error::Ingestion("corpus contains no tokens".into()));
    }
    let mut ranked: Vec<(String, usize, usize)> = counts
        .into_iter()
        .filter(|(_, (count, _))| *count >= min_count)
        .map(|(w, (count, first))| (w, count, first))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    if let Some(max) = max_size {
        ranked.truncate(max);
    }
    let tokens = SPECIALS
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().map(|(w, _, _)| w))
        .collect();
    Vocabulary::from_tokens(tokens)
}

/// `<s> w_1 .. w_n </s>` as ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSentence {
    ids: Vec<usize>,
}

impl EncodedSentence {
    pub fn from_ids(ids: Vec<usize>) -> Result<Self> {
        if ids.len() < 2 {
            return Err(Error::Domain(format!(
                "an encoded sentence needs at least a start and an end symbol, got {} ids",
                ids.len()
            )));
        }
        Ok(EncodedSentence { ids })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn inputs(&self) -> &[usize] {
        &self.ids[..self.ids.len() - 1]
    }

    pub fn targets(&self) -> &[usize] {
        &self.ids[1..]
    }

    /// Number of predicted tokens, `</s>` included.
    pub fn num_targets(&self) -> usize {
        self.ids.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub sentences: usize,
    /// Predicted tokens, `Σ (len - 1)` over encoded sentences.
    pub tokens: usize,
    /// Words per sentence, specials excluded.
    pub mean_length: f64,
}

/// Encoded sentences of one corpus file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub sentences: Vec<EncodedSentence>,
    /// Lines skipped for containing no tokens.
    pub skipped: usize,
}

impl Corpus {
    pub fn encode<I, S>(vocab: &Vocabulary, lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut corpus = Corpus::default();
        for line in lines {
            match vocab.encode(line.as_ref()) {
                Some(s) => corpus.sentences.push(s),
                None => corpus.skipped += 1,
            }
        }
        corpus
    }

    pub fn load(vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<Self> {
        let lines = read_lines(path)?;
        Ok(Corpus::encode(vocab, &lines))
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn stats(&self) -> CorpusStats {
        let tokens: usize = self.sentences.iter().map(EncodedSentence::num_targets).sum();
        let words = tokens - self.sentences.len();
        CorpusStats {
            sentences: self.sentences.len(),
            tokens,
            mean_length: if self.sentences.is_empty() {
                0.0
            } else {
                words as f64 / self.sentences.len() as f64
            },
        }
    }
}

pub fn read_lines(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

/// `exp(total_nll / token_count)`
pub fn perplexity(total_nll: f64, token_count: usize) -> Result<f64> {
    if token_count == 0 {
        return Err(Error::Domain("perplexity over zero tokens".into()));
    }
    Ok((total_nll / token_count as f64).exp())
}
