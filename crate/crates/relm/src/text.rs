//! Character-level text representation: vocabulary with reserved special
//! tokens and aligned sentence pairs in the `source<TAB>target` file format.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Token id. Character ids start after the specials and the prompt block.
pub type TokenId = usize;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("corpus is empty, cannot build a vocabulary")]
    EmptyCorpus,
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: TokenId, size: usize },
    #[error("line {line}: missing TAB separator")]
    MissingTab { line: usize },
    #[error("line {line}: source has {source_len} characters but target has {target_len}")]
    LengthMismatch {
        line: usize,
        source_len: usize,
        target_len: usize,
    },
    #[error("input is not valid UTF-8: {0}")]
    InvalidUtf8(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid vocab file: {0}")]
    InvalidVocabFile(String),
}

/// Bidirectional character/token-id mapping.
///
/// Id layout is fixed so that checkpoints are reproducible:
/// `PAD=0, UNK=1, SEP=2, MASK=3, CORRUPT=4, EOS=5`, then a contiguous block
/// of `prompt_capacity` prompt ids, then the corpus characters sorted by
/// code point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    chars: Vec<char>,
    id_of: HashMap<char, TokenId>,
    prompt_capacity: usize,
}

impl Vocab {
    pub const PAD: TokenId = 0;
    pub const UNK: TokenId = 1;
    pub const SEP: TokenId = 2;
    pub const MASK: TokenId = 3;
    pub const CORRUPT: TokenId = 4;
    pub const EOS: TokenId = 5;
    /// First id of the prompt block.
    pub const PROMPT_BASE: TokenId = 6;

    /// Build a vocabulary from a corpus of sentences. Characters are sorted
    /// by code point so the same corpus always yields the same table.
    pub fn build<S: AsRef<str>>(
        corpus: impl IntoIterator<Item = S>,
        prompt_capacity: usize,
    ) -> Result<Self, TextError> {
        let mut chars: Vec<char> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut any = false;
        for sentence in corpus {
            any = true;
            for c in sentence.as_ref().chars() {
                if seen.insert(c) {
                    chars.push(c);
                }
            }
        }
        if !any {
            return Err(TextError::EmptyCorpus);
        }
        chars.sort_unstable();
        Ok(Self::from_sorted_chars(chars, prompt_capacity))
    }

    /// Build directly from a list of distinct characters (sorted internally).
    pub fn from_chars(mut chars: Vec<char>, prompt_capacity: usize) -> Result<Self, TextError> {
        if chars.is_empty() {
            return Err(TextError::EmptyCorpus);
        }
        chars.sort_unstable();
        chars.dedup();
        Ok(Self::from_sorted_chars(chars, prompt_capacity))
    }

    fn from_sorted_chars(chars: Vec<char>, prompt_capacity: usize) -> Self {
        let base = Self::PROMPT_BASE + prompt_capacity;
        let id_of = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, base + i))
            .collect();
        Self {
            chars,
            id_of,
            prompt_capacity,
        }
    }

    /// First character id.
    pub fn char_base(&self) -> TokenId {
        Self::PROMPT_BASE + self.prompt_capacity
    }

    /// Total table size: specials + prompt block + characters.
    pub fn size(&self) -> usize {
        self.char_base() + self.chars.len()
    }

    pub fn n_chars(&self) -> usize {
        self.chars.len()
    }

    pub fn prompt_capacity(&self) -> usize {
        self.prompt_capacity
    }

    pub fn is_char_id(&self, id: TokenId) -> bool {
        id >= self.char_base() && id < self.size()
    }

    pub fn is_prompt_id(&self, id: TokenId) -> bool {
        id >= Self::PROMPT_BASE && id < self.char_base()
    }

    pub fn id_of(&self, c: char) -> Option<TokenId> {
        self.id_of.get(&c).copied()
    }

    /// Character for a character id; `None` for specials and prompt ids.
    pub fn char_of(&self, id: TokenId) -> Option<char> {
        if self.is_char_id(id) {
            Some(self.chars[id - self.char_base()])
        } else {
            None
        }
    }

    /// All characters in id order.
    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Encode text; unknown characters map to UNK, length is preserved.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        text.chars().map(|c| self.encode_char(c)).collect()
    }

    pub fn encode_char(&self, c: char) -> TokenId {
        self.id_of(c).unwrap_or(Self::UNK)
    }

    pub fn encode_chars(&self, chars: &[char]) -> Vec<TokenId> {
        chars.iter().map(|&c| self.encode_char(c)).collect()
    }

    /// Decode ids back to text. Specials render as placeholder glyphs:
    /// `⟨pad⟩ ⟨unk⟩ ⟨s⟩ ⟨m⟩ ⟨c⟩ ⟨eos⟩` and `⟨p0⟩, ⟨p1⟩, …` for prompt ids.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TextError> {
        let mut out = String::with_capacity(ids.len());
        for &id in ids {
            if let Some(c) = self.char_of(id) {
                out.push(c);
            } else if self.is_prompt_id(id) {
                write!(out, "⟨p{}⟩", id - Self::PROMPT_BASE).unwrap();
            } else {
                match id {
                    Self::PAD => out.push_str("⟨pad⟩"),
                    Self::UNK => out.push_str("⟨unk⟩"),
                    Self::SEP => out.push_str("⟨s⟩"),
                    Self::MASK => out.push_str("⟨m⟩"),
                    Self::CORRUPT => out.push_str("⟨c⟩"),
                    Self::EOS => out.push_str("⟨eos⟩"),
                    _ => {
                        return Err(TextError::IdOutOfRange {
                            id,
                            size: self.size(),
                        })
                    }
                }
            }
        }
        Ok(out)
    }

    /// Serialize as JSON (`{"prompt_capacity": …, "chars": "…"}`).
    pub fn to_json(&self) -> String {
        let file = VocabFile {
            prompt_capacity: self.prompt_capacity,
            chars: self.chars.iter().collect(),
        };
        serde_json::to_string_pretty(&file).expect("vocab serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TextError> {
        let file: VocabFile =
            serde_json::from_str(text).map_err(|e| TextError::InvalidVocabFile(e.to_string()))?;
        Self::from_chars(file.chars.chars().collect(), file.prompt_capacity)
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    prompt_capacity: usize,
    chars: String,
}

/// An aligned (source, target) pair of equal length. Error positions are
/// derived, never stored, so they cannot drift out of sync.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    source: Vec<char>,
    target: Vec<char>,
}

impl SentencePair {
    pub fn new(source: Vec<char>, target: Vec<char>) -> Result<Self, TextError> {
        if source.len() != target.len() {
            return Err(TextError::LengthMismatch {
                line: 0,
                source_len: source.len(),
                target_len: target.len(),
            });
        }
        Ok(Self { source, target })
    }

    pub fn from_strs(source: &str, target: &str) -> Result<Self, TextError> {
        Self::new(source.chars().collect(), target.chars().collect())
    }

    /// Pair with no errors (source == target).
    pub fn clean(text: Vec<char>) -> Self {
        Self {
            source: text.clone(),
            target: text,
        }
    }

    pub fn source(&self) -> &[char] {
        &self.source
    }

    pub fn target(&self) -> &[char] {
        &self.target
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    /// Indices where source and target disagree.
    pub fn error_positions(&self) -> Vec<usize> {
        self.source
            .iter()
            .zip(&self.target)
            .enumerate()
            .filter(|(_, (s, t))| s != t)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_error(&self) -> bool {
        self.source != self.target
    }

    pub fn source_string(&self) -> String {
        self.source.iter().collect()
    }

    pub fn target_string(&self) -> String {
        self.target.iter().collect()
    }
}

/// Parse the pair file format: UTF-8, one `source<TAB>target` per line,
/// blank lines ignored, lines starting with `#` are comments.
pub fn load_pairs<R: Read>(reader: R) -> Result<Vec<SentencePair>, TextError> {
    let mut pairs = Vec::new();
    let mut buf = Vec::new();
    let mut reader = BufReader::new(reader);
    let mut line_no = 0usize;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let line = std::str::from_utf8(&buf)
            .map_err(|e| TextError::InvalidUtf8(format!("line {line_no}: {e}")))?;
        let line = line.trim_end_matches('\n').trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (src, tgt) = line
            .split_once('\t')
            .ok_or(TextError::MissingTab { line: line_no })?;
        let source: Vec<char> = src.chars().collect();
        let target: Vec<char> = tgt.chars().collect();
        if source.len() != target.len() {
            return Err(TextError::LengthMismatch {
                line: line_no,
                source_len: source.len(),
                target_len: target.len(),
            });
        }
        pairs.push(SentencePair { source, target });
    }
    Ok(pairs)
}

/// Inverse of [`load_pairs`]: one `source<TAB>target` line per pair.
pub fn serialize_pairs(pairs: &[SentencePair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&p.source_string());
        out.push('\t');
        out.push_str(&p.target_string());
        out.push('\n');
    }
    out
}
