//! The text side of the bitstream: per-item name/detail pairs, the
//! whole-image description, and the item budget that caps how many
//! name-detail-map groups are kept.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

/// Word cap for an item name.
pub const NAME_MAX_WORDS: usize = 3;
/// Word cap for an item detail.
pub const DETAIL_MAX_WORDS: usize = 10;
/// Hard word cap for the whole-image description (soft target 50).
pub const DETAIL_ALL_MAX_WORDS: usize = 60;
pub const DETAIL_ALL_TARGET_WORDS: usize = 50;
/// Absolute item cap regardless of budget.
pub const MAX_ITEMS: usize = 3;

/// Byte caps implied by the length prefixes of the raw sub-layout.
pub const NAME_MAX_BYTES: usize = u8::MAX as usize;
pub const DETAIL_MAX_BYTES: usize = u8::MAX as usize;
pub const DETAIL_ALL_MAX_BYTES: usize = u16::MAX as usize;

/// Default frequency-threshold ratio (f_th / N_pix).
pub const DEFAULT_F_RATIO: f64 = 0.225;
/// Default expected item count per image.
pub const DEFAULT_EXPECTED_ITEMS: f64 = 12.5;

/// Upper bound on the inflated raw sub-layout.
const MAX_RAW_LEN: usize =
    1 + MAX_ITEMS * (2 + NAME_MAX_BYTES + DETAIL_MAX_BYTES) + 2 + DETAIL_ALL_MAX_BYTES;
const DEFLATE_LEVEL: u8 = 9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticError {
    #[error("item budget inputs must be finite and non-negative")]
    InvalidBudget,
    #[error("{count} items exceed the cap of {max}")]
    TooManyItems { count: usize, max: usize },
    #[error("{field} has {words} words, over the cap of {max}")]
    WordBudget { field: &'static str, words: usize, max: usize },
    #[error("{field} is {len} bytes, over the cap of {max}")]
    ByteBudget { field: &'static str, len: usize, max: usize },
    #[error("{field} contains control characters")]
    ControlCharacter { field: &'static str },
    #[error("text sub-layout truncated")]
    Truncated,
    #[error("text sub-layout has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("text is not valid UTF-8")]
    Utf8,
    #[error("compressed text stream is malformed")]
    Inflate,
}

/// One item: a short name (the index) and a short attribute description.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Item {
    pub name: String,
    pub detail: String,
}

impl Item {
    pub fn new(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { name: name.into(), detail: detail.into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SemanticPayload {
    pub items: Vec<Item>,
    pub detail_all: String,
}

impl SemanticPayload {
    pub fn new(items: Vec<Item>, detail_all: impl Into<String>) -> Self {
        Self { items, detail_all: detail_all.into() }
    }

    /// Number of name-detail-map groups.
    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    /// Checks item count, word and byte caps, and rejects control characters.
    pub fn validate(&self, j_max: usize) -> Result<(), SemanticError> {
        let max = j_max.min(MAX_ITEMS);
        if self.items.len() > max {
            return Err(SemanticError::TooManyItems { count: self.items.len(), max });
        }
        for item in &self.items {
            check_field("item name", &item.name, NAME_MAX_WORDS, NAME_MAX_BYTES)?;
            check_field("item detail", &item.detail, DETAIL_MAX_WORDS, DETAIL_MAX_BYTES)?;
        }
        check_field("detail_all", &self.detail_all, DETAIL_ALL_MAX_WORDS, DETAIL_ALL_MAX_BYTES)
    }
}

fn check_field(
    field: &'static str,
    text: &str,
    max_words: usize,
    max_bytes: usize,
) -> Result<(), SemanticError> {
    if text.chars().any(char::is_control) {
        return Err(SemanticError::ControlCharacter { field });
    }
    let words = word_count(text);
    if words > max_words {
        return Err(SemanticError::WordBudget { field, words, max: max_words });
    }
    if text.len() > max_bytes {
        return Err(SemanticError::ByteBudget { field, len: text.len(), max: max_bytes });
    }
    Ok(())
}

/// A word is a maximal run of non-whitespace; hyphenated tokens count once.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Item threshold `s_th = f_ratio * expected_items` and the derived item cap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ItemBudget {
    pub f_ratio: f64,
    pub expected_items: f64,
    pub s_th: f64,
    pub j_max: usize,
}

impl Default for ItemBudget {
    fn default() -> Self {
        item_budget(DEFAULT_F_RATIO, DEFAULT_EXPECTED_ITEMS).expect("default budget is valid")
    }
}

pub fn item_budget(f_ratio: f64, expected_items: f64) -> Result<ItemBudget, SemanticError> {
    let ok = |v: f64| v.is_finite() && v >= 0.0;
    if !ok(f_ratio) || !ok(expected_items) {
        return Err(SemanticError::InvalidBudget);
    }
    let s_th = f_ratio * expected_items;
    let j_max = (libm::ceil(s_th).min(MAX_ITEMS as f64)) as usize;
    Ok(ItemBudget { f_ratio, expected_items, s_th, j_max })
}

/// Result of [`sanitize`]; `detail_all_empty` flags a missing whole-image
/// description.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sanitized {
    pub payload: SemanticPayload,
    pub detail_all_empty: bool,
}

/// Normalizes untrusted describer output into a payload that satisfies every
/// cap. Items beyond `budget.j_max` are dropped in listed order.
pub fn sanitize<N, D>(raw_items: &[(N, D)], raw_detail_all: &str, budget: &ItemBudget) -> Sanitized
where
    N: AsRef<str>,
    D: AsRef<str>,
{
    let keep = budget.j_max.min(MAX_ITEMS);
    let items = raw_items
        .iter()
        .take(keep)
        .map(|(n, d)| Item {
            name: clamp_text(n.as_ref(), NAME_MAX_WORDS, NAME_MAX_BYTES),
            detail: clamp_text(d.as_ref(), DETAIL_MAX_WORDS, DETAIL_MAX_BYTES),
        })
        .collect();
    let detail_all = clamp_text(raw_detail_all, DETAIL_ALL_MAX_WORDS, DETAIL_ALL_MAX_BYTES);
    let detail_all_empty = detail_all.is_empty();
    Sanitized { payload: SemanticPayload { items, detail_all }, detail_all_empty }
}

/// Control characters become spaces, whitespace runs collapse to one space,
/// then word and byte caps are applied.
fn clamp_text(raw: &str, max_words: usize, max_bytes: usize) -> String {
    let mut out = String::new();
    let cleaned: String = raw.chars().map(|c| if c.is_control() { ' ' } else { c }).collect();
    for (i, word) in cleaned.split_whitespace().take(max_words).enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(word);
    }
    if out.len() > max_bytes {
        let mut cut = max_bytes;
        while !out.is_char_boundary(cut) {
            cut -= 1;
        }
        out.truncate(cut);
        let trimmed = out.trim_end().len();
        out.truncate(trimmed);
    }
    out
}

/// Raw sub-layout: `J: u8`, then per item `name_len: u8, name, detail_len:
/// u8, detail`, then `detail_all_len: u16 LE, detail_all`. With `compress`
/// set the raw bytes are passed through DEFLATE (raw stream, RFC 1951,
/// level 9).
pub fn pack_text(payload: &SemanticPayload, compress: bool) -> Result<Vec<u8>, SemanticError> {
    payload.validate(MAX_ITEMS)?;
    let raw = raw_layout(payload);
    Ok(if compress { miniz_oxide::deflate::compress_to_vec(&raw, DEFLATE_LEVEL) } else { raw })
}

pub fn unpack_text(bytes: &[u8], compressed: bool) -> Result<SemanticPayload, SemanticError> {
    if compressed {
        let raw = miniz_oxide::inflate::decompress_to_vec_with_limit(bytes, MAX_RAW_LEN)
            .map_err(|_| SemanticError::Inflate)?;
        parse_raw(&raw)
    } else {
        parse_raw(bytes)
    }
}

fn raw_layout(payload: &SemanticPayload) -> Vec<u8> {
    let mut out = Vec::with_capacity(3 + payload.detail_all.len());
    out.push(payload.items.len() as u8);
    for item in &payload.items {
        out.push(item.name.len() as u8);
        out.extend_from_slice(item.name.as_bytes());
        out.push(item.detail.len() as u8);
        out.extend_from_slice(item.detail.as_bytes());
    }
    out.extend_from_slice(&(payload.detail_all.len() as u16).to_le_bytes());
    out.extend_from_slice(payload.detail_all.as_bytes());
    out
}

fn parse_raw(bytes: &[u8]) -> Result<SemanticPayload, SemanticError> {
    let mut rest = bytes;
    let mut take = |n: usize| -> Result<&[u8], SemanticError> {
        if rest.len() < n {
            return Err(SemanticError::Truncated);
        }
        let (head, tail) = rest.split_at(n);
        rest = tail;
        Ok(head)
    };
    let j = take(1)?[0] as usize;
    if j > MAX_ITEMS {
        return Err(SemanticError::TooManyItems { count: j, max: MAX_ITEMS });
    }
    let mut items = Vec::with_capacity(j);
    for _ in 0..j {
        let n = take(1)?[0] as usize;
        let name = utf8(take(n)?)?;
        let d = take(1)?[0] as usize;
        let detail = utf8(take(d)?)?;
        items.push(Item { name, detail });
    }
    let len = take(2)?;
    let len = u16::from_le_bytes([len[0], len[1]]) as usize;
    let detail_all = utf8(take(len)?)?;
    if !rest.is_empty() {
        return Err(SemanticError::TrailingBytes(rest.len()));
    }
    Ok(SemanticPayload { items, detail_all })
}

fn utf8(bytes: &[u8]) -> Result<String, SemanticError> {
    core::str::from_utf8(bytes).map(ToString::to_string).map_err(|_| SemanticError::Utf8)
}
