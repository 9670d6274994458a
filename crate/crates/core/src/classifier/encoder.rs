use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Maximum encoded tweet length in code points.
pub const MAX_LEN: usize = 280;

pub const PAD_INDEX: usize = 0;
pub const UNKNOWN_INDEX: usize = 1;

/// Maps code points to dense indices. Index 0 is padding, 1 is unknown and
/// known characters follow in code-point order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharEncoder {
    vocabulary: BTreeMap<char, usize>,
    max_len: usize,
}

impl CharEncoder {
    pub fn from_chars(chars: impl IntoIterator<Item = char>, max_len: usize) -> Self {
        let mut sorted: Vec<char> = chars.into_iter().collect();
        sorted.sort_unstable();
        sorted.dedup();
        let vocabulary = sorted
            .into_iter()
            .enumerate()
            .map(|(i, ch)| (ch, i + 2))
            .collect();
        CharEncoder {
            vocabulary,
            max_len,
        }
    }

    pub fn vocabulary(&self) -> &BTreeMap<char, usize> {
        &self.vocabulary
    }

    /// Number of indices including pad and unknown.
    pub fn size(&self) -> usize {
        self.vocabulary.len() + 2
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn pad_index(&self) -> usize {
        PAD_INDEX
    }

    pub fn unknown_index(&self) -> usize {
        UNKNOWN_INDEX
    }

    /// Index sequence of exactly `max_len` entries and the number of real
    /// (non-pad) positions. Text past `max_len` code points is dropped.
    pub fn encode_with_len(&self, text: &str) -> (Vec<usize>, usize) {
        let mut out = vec![PAD_INDEX; self.max_len];
        let mut n = 0;
        for (slot, ch) in out.iter_mut().zip(text.chars()) {
            *slot = self.vocabulary.get(&ch).copied().unwrap_or(UNKNOWN_INDEX);
            n += 1;
        }
        (out, n)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        self.encode_with_len(text).0
    }
}

/// Builds the character vocabulary from training texts, keeping code points
/// seen at least `min_char_freq` times.
pub fn fit_encoder<'a>(texts: impl IntoIterator<Item = &'a str>, min_char_freq: u64) -> CharEncoder {
    let mut counts: BTreeMap<char, u64> = BTreeMap::new();
    for t in texts {
        for ch in t.chars().take(MAX_LEN) {
            *counts.entry(ch).or_default() += 1;
        }
    }
    CharEncoder::from_chars(
        counts
            .into_iter()
            .filter(|(_, n)| *n >= min_char_freq)
            .map(|(ch, _)| ch),
        MAX_LEN,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_is_dense_after_pad_and_unknown() {
        let enc = fit_encoder(["aa bb"], 1);
        let chars: Vec<char> = enc.vocabulary().keys().copied().collect();
        assert_eq!(chars, vec![' ', 'a', 'b']);
        let mut idx: Vec<usize> = enc.vocabulary().values().copied().collect();
        idx.sort();
        assert_eq!(idx, vec![2, 3, 4]);
        assert_eq!(enc.size(), 5);
        assert_ne!(enc.pad_index(), enc.unknown_index());
    }

    #[test]
    fn huge_min_freq_keeps_only_reserved_indices() {
        let enc = fit_encoder(["hello"], 1_000_000_000);
        assert_eq!(enc.size(), 2);
        assert!(enc.encode("hi")[..2].iter().all(|i| *i == UNKNOWN_INDEX));
    }

    #[test]
    fn encode_pads_to_fixed_length() {
        let enc = fit_encoder(["hi"], 1);
        let (codes, n) = enc.encode_with_len("hi");
        assert_eq!(codes.len(), 280);
        assert_eq!(n, 2);
        assert_eq!(codes.iter().filter(|c| **c == PAD_INDEX).count(), 278);
    }

    #[test]
    fn long_text_keeps_first_code_points() {
        let enc = fit_encoder(["ab"], 1);
        let text: String = "a".repeat(280) + "b";
        let (codes, n) = enc.encode_with_len(&text);
        assert_eq!(n, 280);
        assert!(codes.iter().all(|c| *c == enc.vocabulary()[&'a']));
    }

    #[test]
    fn unseen_characters_map_to_unknown() {
        let enc = fit_encoder(["ab"], 1);
        assert_eq!(enc.encode("z")[0], UNKNOWN_INDEX);
        assert_eq!(enc.encode("é")[0], UNKNOWN_INDEX);
    }
}
