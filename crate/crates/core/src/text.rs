//! Text normalization, word-level tokenizer, and vocabulary.
//!
//! Reports are normalized to a closed alphabet (lowercase letters, digits,
//! underscore, `. , :`, space), then split into words with those three
//! punctuation marks as standalone tokens. The vocabulary is word-level:
//! the report grammar is closed, so subword units would only obscure the
//! decoding analysis.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

/// Token id type. Dense in `[0, |V|)` with the reserved band below.
pub type TokenId = u32;
/// A tokenized text: ids in order; the length is the sequence length.
pub type TokenSeq = Vec<TokenId>;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const SEP: TokenId = 3;
pub const UNK: TokenId = 4;
/// First id available to real words.
pub const RESERVED: u32 = 5;

/// Printed forms of the reserved ids. Angle brackets cannot survive
/// [`preprocess_text`], so these never collide with corpus words.
pub const RESERVED_TOKENS: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<sep>", "<unk>"];

/// Normalize raw section text: lowercase, collapse each de-identification
/// span (a run of underscores) to a single `_`, drop every character
/// outside `[a-z0-9_.,: space]`, and collapse whitespace.
pub fn preprocess_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut prev_space = true; // suppresses leading whitespace
    let mut prev_underscore = false;
    for ch in raw.chars() {
        for ch in ch.to_lowercase() {
            let keep = match ch {
                'a'..='z' | '0'..='9' | '.' | ',' | ':' => true,
                '_' => {
                    if prev_underscore {
                        continue;
                    }
                    true
                }
                c if c.is_whitespace() => {
                    if !prev_space {
                        out.push(' ');
                        prev_space = true;
                    }
                    prev_underscore = false;
                    continue;
                }
                _ => false,
            };
            prev_underscore = ch == '_';
            if keep {
                out.push(ch);
                prev_space = false;
            }
        }
    }
    while out.ends_with(' ') {
        out.pop();
    }
    out
}

/// Split normalized text into words, emitting `.` `,` `:` as their own
/// tokens.
pub fn split_words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b' ' => {
                if start < i {
                    out.push(&text[start..i]);
                }
                start = i + 1;
            }
            b'.' | b',' | b':' => {
                if start < i {
                    out.push(&text[start..i]);
                }
                out.push(&text[i..i + 1]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if start < bytes.len() {
        out.push(&text[start..]);
    }
    out
}

/// Word-to-id maps with the fixed reserved band.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    to_id: BTreeMap<String, TokenId>,
    to_token: Vec<String>,
}

impl Vocab {
    /// Build from an iterator of normalized texts. Words are id-ordered
    /// lexicographically after the reserved band, so construction is
    /// deterministic regardless of input order.
    pub fn build<'t>(texts: impl IntoIterator<Item = &'t str>) -> Vocab {
        let mut words: BTreeMap<String, TokenId> = BTreeMap::new();
        for text in texts {
            for w in split_words(text) {
                words.entry(String::from(w)).or_insert(0);
            }
        }
        let mut to_token: Vec<String> = RESERVED_TOKENS.iter().map(|&s| String::from(s)).collect();
        for (word, id) in words.iter_mut() {
            *id = to_token.len() as TokenId;
            to_token.push(word.clone());
        }
        Vocab {
            to_id: words,
            to_token,
        }
    }

    /// Reconstruct from the id-ordered token list (ids are the positions).
    /// The first five entries must be the reserved tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Option<Vocab> {
        if tokens.len() < RESERVED as usize
            || tokens[..RESERVED as usize] != RESERVED_TOKENS.map(String::from)
        {
            return None;
        }
        let mut to_id = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate().skip(RESERVED as usize) {
            if to_id.insert(t.clone(), i as TokenId).is_some() {
                return None; // duplicate word
            }
        }
        Some(Vocab {
            to_id,
            to_token: tokens,
        })
    }

    pub fn len(&self) -> usize {
        self.to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the reserved band is always present
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.to_id.get(word).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.to_token[id as usize]
    }

    /// Tokens in id order, reserved band first.
    pub fn tokens(&self) -> &[String] {
        &self.to_token
    }

    /// Normalized text to ids; out-of-vocabulary words map to [`UNK`].
    pub fn encode(&self, text: &str) -> TokenSeq {
        split_words(text)
            .into_iter()
            .map(|w| self.id(w).unwrap_or(UNK))
            .collect()
    }

    /// Ids to text: words joined by spaces, with `.` `,` `:` attached to
    /// the preceding word. Reserved ids other than UNK render as nothing.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id < RESERVED && id != UNK {
                continue;
            }
            let tok = self.token(id);
            let is_punct = matches!(tok, "." | "," | ":");
            if !out.is_empty() && !is_punct {
                out.push(' ');
            }
            out.push_str(tok);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn preprocess_lowercases() {
        assert_eq!(
            preprocess_text("No acute cardiopulmonary process."),
            "no acute cardiopulmonary process."
        );
    }

    #[test]
    fn preprocess_strips_symbols_and_collapses_space() {
        assert_eq!(preprocess_text("IMPRESSION:  PICC @ tip!"), "impression: picc tip");
    }

    #[test]
    fn preprocess_empty_is_empty() {
        assert_eq!(preprocess_text(""), "");
    }

    #[test]
    fn preprocess_collapses_deid_spans() {
        assert_eq!(preprocess_text("seen by Dr. ___ on ___."), "seen by dr. _ on _.");
    }

    #[test]
    fn split_separates_punctuation() {
        assert_eq!(
            split_words("no acute process ."),
            vec!["no", "acute", "process", "."]
        );
        assert_eq!(
            split_words("impression: a. findings: b."),
            vec!["impression", ":", "a", ".", "findings", ":", "b", "."]
        );
    }

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocab::build(["alpha beta"]);
        assert_eq!((PAD, BOS, EOS, SEP, UNK), (0, 1, 2, 3, 4));
        assert_eq!(v.token(PAD), "<pad>");
        assert_eq!(v.token(UNK), "<unk>");
        assert_eq!(v.id("alpha"), Some(5));
        assert_eq!(v.id("beta"), Some(6));
    }

    #[test]
    fn encode_decode_round_trip_on_ids() {
        let v = Vocab::build(["the cat sat ."]);
        let ids = v.encode("cat sat , the cat .");
        assert_eq!(ids, v.encode(&v.decode(&ids)));
    }

    #[test]
    fn decode_attaches_punctuation() {
        let v = Vocab::build(["impression : picc tip ."]);
        let ids = v.encode("impression : picc tip .");
        assert_eq!(v.decode(&ids), "impression: picc tip.");
    }

    #[test]
    fn oov_maps_to_unk() {
        let v = Vocab::build(["known words"]);
        assert_eq!(v.encode("unknown words"), vec![UNK, v.id("words").unwrap()]);
    }

    #[test]
    fn vocab_is_input_order_independent() {
        let a = Vocab::build(["zebra apple", "mango"]);
        let b = Vocab::build(["mango", "apple zebra"]);
        assert_eq!(a, b);
    }

    #[test]
    fn vocab_round_trips_through_token_list() {
        let v = Vocab::build(["some words here ."]);
        let rebuilt = Vocab::from_tokens(v.tokens().to_vec()).unwrap();
        assert_eq!(v, rebuilt);
    }
}
