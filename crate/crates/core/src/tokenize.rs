//! Tokenizers with character offsets.

/// One token as a half-open byte range into the tokenized text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub start: usize,
    pub end: usize,
}

pub trait Tokenizer {
    fn id(&self) -> &str;

    /// Tokens in text order. Offsets must be non-decreasing and lie on
    /// character boundaries.
    fn tokenize(&self, text: &str) -> Vec<Token>;

    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

/// Splits text into maximal alphanumeric runs and single punctuation
/// characters. Whitespace and zero-width format characters produce no
/// tokens.
///
/// Tokenizing any substring that starts and ends on token boundaries yields
/// exactly the corresponding slice of the full tokenization, which is what
/// segment-wise scoring of long documents relies on.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordTokenizer;

pub const WORD_TOKENIZER_ID: &str = "word-v1";

fn is_invisible(c: char) -> bool {
    c.is_whitespace() || matches!(c, '\u{200B}'..='\u{200D}' | '\u{2060}' | '\u{FEFF}')
}

impl Tokenizer for WordTokenizer {
    fn id(&self) -> &str {
        WORD_TOKENIZER_ID
    }

    fn tokenize(&self, text: &str) -> Vec<Token> {
        let mut tokens = Vec::new();
        let mut run: Option<usize> = None;
        for (off, c) in text.char_indices() {
            if c.is_alphanumeric() {
                run.get_or_insert(off);
                continue;
            }
            if let Some(start) = run.take() {
                tokens.push(Token { start, end: off });
            }
            if !is_invisible(c) {
                tokens.push(Token {
                    start: off,
                    end: off + c.len_utf8(),
                });
            }
        }
        if let Some(start) = run {
            tokens.push(Token {
                start,
                end: text.len(),
            });
        }
        tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(text: &str) -> Vec<&str> {
        WordTokenizer
            .tokenize(text)
            .iter()
            .map(|t| &text[t.start..t.end])
            .collect()
    }

    #[test]
    fn splits_words_and_punctuation() {
        assert_eq!(
            words("Hello, wörld! 42x"),
            ["Hello", ",", "wörld", "!", "42x"]
        );
        assert!(words(" \u{200B}\u{FEFF} ").is_empty());
    }

    #[test]
    fn substring_tokenization_is_a_slice() {
        let text = "The fire of 1871, in Chicago. It burned.";
        let all = WordTokenizer.tokenize(text);
        let (a, b) = (2, 7);
        let sub = &text[all[a].start..all[b].end];
        let part = WordTokenizer.tokenize(sub);
        assert_eq!(part.len(), b - a + 1);
        for (p, t) in part.iter().zip(&all[a..=b]) {
            assert_eq!(p.start + all[a].start, t.start);
        }
    }
}
