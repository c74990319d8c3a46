//! Line-delimited corpora of pre-tokenized ids and their encoding into
//! fixed-width [`TokenSequence`]s.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::TokenSequence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatMode {
    Single,
    Pair,
}

impl FormatMode {
    /// Number of special tokens added around the content.
    pub fn specials(self) -> usize {
        match self {
            FormatMode::Single => 2,
            FormatMode::Pair => 3,
        }
    }
}

impl fmt::Display for FormatMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormatMode::Single => "single",
            FormatMode::Pair => "pair",
        })
    }
}

impl FromStr for FormatMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(FormatMode::Single),
            "pair" => Ok(FormatMode::Pair),
            other => Err(Error::invalid(format!("unknown corpus mode `{other}`"))),
        }
    }
}

/// Ids of the special tokens. Roles are positional, so the ids only matter
/// for the embedding lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialIds {
    pub pad: u32,
    pub cls: u32,
    pub sep: u32,
}

impl Default for SpecialIds {
    fn default() -> Self {
        Self {
            pad: 0,
            cls: 1,
            sep: 2,
        }
    }
}

/// First id handed out by the hashing tokenizer and the synthetic generator.
pub const FIRST_CONTENT_ID: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ItemTokens {
    Single(Vec<u32>),
    Pair(Vec<u32>, Vec<u32>),
}

impl ItemTokens {
    pub fn content_len(&self) -> usize {
        match self {
            ItemTokens::Single(t) => t.len(),
            ItemTokens::Pair(a, b) => a.len() + b.len(),
        }
    }

    pub fn mode(&self) -> FormatMode {
        match self {
            ItemTokens::Single(_) => FormatMode::Single,
            ItemTokens::Pair(..) => FormatMode::Pair,
        }
    }

    /// Length once CLS and SEP tokens are added.
    pub fn encoded_len(&self) -> usize {
        self.content_len() + self.mode().specials()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub id: String,
    pub tokens: ItemTokens,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub mode: FormatMode,
    pub items: Vec<CorpusItem>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// One JSON object per line, in the format [`load_corpus`] reads.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            let value = match &item.tokens {
                ItemTokens::Single(t) => serde_json::json!({ "id": item.id, "tokens": t }),
                ItemTokens::Pair(a, b) => {
                    serde_json::json!({ "id": item.id, "tokens_a": a, "tokens_b": b })
                }
            };
            out.push_str(&value.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: Option<serde_json::Value>,
    tokens: Option<Vec<u32>>,
    tokens_a: Option<Vec<u32>>,
    tokens_b: Option<Vec<u32>>,
}

/// Reads a line-delimited corpus and truncates every item so that, with its
/// special tokens, it fits in `max_len` positions.
///
/// Blank lines are skipped. Items without an `id` are named by line number.
pub fn load_corpus(path: &Path, mode: FormatMode, max_len: usize) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, mode, max_len).map_err(|e| match e {
        Error::Corpus { line, message, .. } => Error::Corpus {
            path: path.to_path_buf(),
            line,
            message,
        },
        Error::EmptyCorpus(_) => Error::EmptyCorpus(path.to_path_buf()),
        other => other,
    })
}

/// [`load_corpus`] over in-memory text.
pub fn parse_corpus(text: &str, mode: FormatMode, max_len: usize) -> Result<Corpus> {
    let budget = max_len.checked_sub(mode.specials()).ok_or_else(|| {
        Error::invalid(format!(
            "max_len {max_len} leaves no room for special tokens"
        ))
    })?;
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Corpus {
            path: "<input>".into(),
            line: line_no,
            message,
        };
        let rec: Record = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let id = match rec.id {
            None => format!("line-{line_no}"),
            Some(serde_json::Value::String(s)) => s,
            Some(v @ serde_json::Value::Number(_)) => v.to_string(),
            Some(_) => return Err(bad("`id` must be a string or number".into())),
        };
        let tokens = match (mode, rec.tokens, rec.tokens_a, rec.tokens_b) {
            (FormatMode::Single, Some(t), None, None) => ItemTokens::Single(t),
            (FormatMode::Pair, None, Some(a), Some(b)) => ItemTokens::Pair(a, b),
            (FormatMode::Single, ..) => {
                return Err(bad("single mode expects only a `tokens` field".into()))
            }
            (FormatMode::Pair, ..) => {
                return Err(bad(
                    "pair mode expects `tokens_a` and `tokens_b` fields".into()
                ))
            }
        };
        items.push(CorpusItem {
            id,
            tokens: truncate(tokens, budget),
        });
    }
    if items.is_empty() {
        return Err(Error::EmptyCorpus("<input>".into()));
    }
    Ok(Corpus { mode, items })
}

/// Drops tokens from the tail until at most `budget` remain. Pairs are
/// trimmed from whichever side is longer, `tokens_a` on ties.
pub fn truncate(tokens: ItemTokens, budget: usize) -> ItemTokens {
    match tokens {
        ItemTokens::Single(mut t) => {
            t.truncate(budget);
            ItemTokens::Single(t)
        }
        ItemTokens::Pair(mut a, mut b) => {
            while a.len() + b.len() > budget {
                if a.len() >= b.len() {
                    a.pop();
                } else {
                    b.pop();
                }
            }
            ItemTokens::Pair(a, b)
        }
    }
}

/// `[CLS, t…, SEP, PAD…]` or `[CLS, a…, SEP, b…, SEP, PAD…]`, padded to `pad_to`.
pub fn encode_sequence(
    tokens: &ItemTokens,
    pad_to: usize,
    specials: SpecialIds,
) -> Result<TokenSequence> {
    let need = tokens.encoded_len();
    if need > pad_to {
        return Err(Error::SequenceTooLong {
            len: need,
            max: pad_to,
        });
    }
    let mut ids = Vec::with_capacity(pad_to);
    let mut protected = vec![0];
    ids.push(specials.cls);
    let parts: Vec<&[u32]> = match tokens {
        ItemTokens::Single(t) => vec![t],
        ItemTokens::Pair(a, b) => vec![a, b],
    };
    for part in parts {
        ids.extend_from_slice(part);
        protected.push(ids.len());
        ids.push(specials.sep);
    }
    let mut mask = vec![true; ids.len()];
    ids.resize(pad_to, specials.pad);
    mask.resize(pad_to, false);
    Ok(TokenSequence {
        ids,
        mask,
        protected,
    })
}

/// Whitespace tokenizer mapping each word to an id in
/// `[FIRST_CONTENT_ID, vocab)` by its 64-bit FNV-1a hash.
pub fn hash_tokenize(text: &str, vocab: usize) -> Vec<u32> {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let span = (vocab as u64)
        .saturating_sub(FIRST_CONTENT_ID as u64)
        .max(1);
    text.split_whitespace()
        .map(|w| {
            let h = w
                .bytes()
                .fold(OFFSET, |h, b| (h ^ b as u64).wrapping_mul(PRIME));
            FIRST_CONTENT_ID + (h % span) as u32
        })
        .collect()
}

/// `n` single-mode items with content lengths uniform in `[min_len, max_len]`
/// and ids uniform in `[FIRST_CONTENT_ID, vocab)`.
pub fn synthetic_corpus(
    n: usize,
    min_len: usize,
    max_len: usize,
    vocab: usize,
    seed: u64,
) -> Result<Corpus> {
    if n == 0 {
        return Err(Error::invalid("synthetic corpus needs at least one item"));
    }
    if min_len > max_len {
        return Err(Error::invalid(format!(
            "min_len {min_len} exceeds max_len {max_len}"
        )));
    }
    if vocab <= FIRST_CONTENT_ID as usize {
        return Err(Error::invalid(format!(
            "vocabulary of {vocab} has no content ids"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = (0..n)
        .map(|i| {
            let len = rng.gen_range(min_len..=max_len);
            let tokens = (0..len)
                .map(|_| rng.gen_range(FIRST_CONTENT_ID..vocab as u32))
                .collect();
            CorpusItem {
                id: format!("syn-{i}"),
                tokens: ItemTokens::Single(tokens),
            }
        })
        .collect();
    Ok(Corpus {
        mode: FormatMode::Single,
        items,
    })
}
