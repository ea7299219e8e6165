//! Splitting normalized requests into entity tokens.
//!
//! Runs of ASCII alphanumerics (and non-ASCII characters, which are treated
//! as word characters) form word or number tokens. Every other ASCII
//! character that is not whitespace becomes a token of its own. Whitespace
//! only separates; the exact separators are kept so the input can be rebuilt.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Word,
    Number,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityToken {
    pub text: String,
    pub position: usize,
    pub kind: TokenKind,
}

/// Entity tokens of one request plus the whitespace around them.
/// `separators[i]` precedes token `i`; the last entry trails the final token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntitySequence {
    pub tokens: Vec<EntityToken>,
    separators: Vec<String>,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || (!c.is_ascii() && !c.is_whitespace())
}

impl EntitySequence {
    pub fn parse(input: &str) -> Self {
        let mut tokens = Vec::new();
        let mut separators = vec![String::new()];
        let mut word = String::new();

        let flush = |word: &mut String, tokens: &mut Vec<EntityToken>, separators: &mut Vec<String>| {
            if !word.is_empty() {
                let kind = if word.bytes().all(|b| b.is_ascii_digit()) { TokenKind::Number } else { TokenKind::Word };
                tokens.push(EntityToken { text: std::mem::take(word), position: tokens.len(), kind });
                separators.push(String::new());
            }
        };

        for c in input.chars() {
            if is_word_char(c) {
                word.push(c);
            } else if c.is_whitespace() {
                flush(&mut word, &mut tokens, &mut separators);
                separators.last_mut().expect("separators never empty").push(c);
            } else {
                flush(&mut word, &mut tokens, &mut separators);
                tokens.push(EntityToken { text: c.to_string(), position: tokens.len(), kind: TokenKind::Punctuation });
                separators.push(String::new());
            }
        }
        flush(&mut word, &mut tokens, &mut separators);
        Self { tokens, separators }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// Rebuilds the text, substituting `replacement` for the token at `index`.
    pub fn render_with(&self, index: Option<usize>, replacement: &str) -> String {
        let mut out = String::new();
        for (i, token) in self.tokens.iter().enumerate() {
            out.push_str(&self.separators[i]);
            if Some(i) == index {
                out.push_str(replacement);
            } else {
                out.push_str(&token.text);
            }
        }
        out.push_str(&self.separators[self.tokens.len()]);
        out
    }

    pub fn detokenize(&self) -> String {
        self.render_with(None, "")
    }
}

pub fn tokenize_entities(normalized: &str) -> Vec<EntityToken> {
    EntitySequence::parse(normalized).tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(s: &str) -> Vec<String> {
        tokenize_entities(s).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn request_string() {
        assert_eq!(
            texts("get /pagar.jsp modo=insertar"),
            ["get", "/", "pagar", ".", "jsp", "modo", "=", "insertar"]
        );
    }

    #[test]
    fn empty() {
        assert!(tokenize_entities("").is_empty());
        assert!(tokenize_entities("   ").is_empty());
    }

    #[test]
    fn query_pairs() {
        assert_eq!(texts("a=1&b=2"), ["a", "=", "1", "&", "b", "=", "2"]);
        let kinds: Vec<_> = tokenize_entities("a=1").into_iter().map(|t| t.kind).collect();
        assert_eq!(kinds, [TokenKind::Word, TokenKind::Punctuation, TokenKind::Number]);
    }

    #[test]
    fn non_ascii_joins_words() {
        assert_eq!(texts("añadir al"), ["añadir", "al"]);
    }

    #[test]
    fn replacement_render() {
        let seq = EntitySequence::parse("get /pagar.jsp modo=insertar");
        assert_eq!(seq.render_with(Some(7), "<MASK>"), "get /pagar.jsp modo=<MASK>");
    }

    proptest! {
        #[test]
        fn round_trip_ascii(s in "[\\x00-\\x7f]{0,80}") {
            prop_assert_eq!(EntitySequence::parse(&s).detokenize(), s);
        }

        #[test]
        fn token_shape(s in "[\\x00-\\x7f]{0,80}") {
            for (i, t) in tokenize_entities(&s).iter().enumerate() {
                prop_assert_eq!(t.position, i);
                prop_assert!(!t.text.is_empty());
                let alnum = t.text.chars().filter(|c| c.is_ascii_alphanumeric()).count();
                if t.kind == TokenKind::Punctuation {
                    prop_assert_eq!(t.text.len(), 1);
                    prop_assert_eq!(alnum, 0);
                } else {
                    prop_assert_eq!(alnum, t.text.len());
                }
            }
        }
    }
}
