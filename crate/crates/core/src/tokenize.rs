//! Pluggable tokenization used for chunk arithmetic.
//!
//! Chunking only needs token boundaries, so a tokenizer reports byte spans
//! into the source text rather than ids.

use std::ops::Range;

/// Splits text into tokens, reported as byte ranges in ascending order.
pub trait Tokenizer: Send + Sync {
    fn spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.spans(text).len()
    }

    fn name(&self) -> &'static str;
}

/// Deterministic whitespace-plus-punctuation tokenizer.
///
/// A token is either a maximal run of alphanumeric characters or a single
/// non-whitespace, non-alphanumeric character. Whitespace is never a token.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespacePunct;

impl Tokenizer for WhitespacePunct {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut word_start: Option<usize> = None;
        for (i, ch) in text.char_indices() {
            if ch.is_alphanumeric() {
                if word_start.is_none() {
                    word_start = Some(i);
                }
                continue;
            }
            if let Some(s) = word_start.take() {
                out.push(s..i);
            }
            if !ch.is_whitespace() {
                out.push(i..i + ch.len_utf8());
            }
        }
        if let Some(s) = word_start {
            out.push(s..text.len());
        }
        out
    }

    fn name(&self) -> &'static str {
        "whitespace-punct"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(text: &str) -> Vec<&str> {
        WhitespacePunct
            .spans(text)
            .into_iter()
            .map(|r| &text[r])
            .collect()
    }

    #[test]
    fn splits_words_and_punctuation() {
        assert_eq!(
            toks("If total spend is at least $50, apply 10%"),
            vec!["If", "total", "spend", "is", "at", "least", "$", "50", ",", "apply", "10", "%"]
        );
    }

    #[test]
    fn whitespace_only_has_no_tokens() {
        assert!(toks(" \n\t ").is_empty());
        assert!(toks("").is_empty());
    }

    #[test]
    fn multibyte_characters() {
        assert_eq!(toks("naïve café—ok"), vec!["naïve", "café", "—", "ok"]);
    }
}
