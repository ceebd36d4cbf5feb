// SPDX-License-Identifier: MIT OR Apache-2.0

//! Word/punctuation tokenizer over a closed vocabulary.
//!
//! Text is lowercased and split into runs of letters/digits, single
//! punctuation marks, and `<...>` special tokens; a newline becomes `<eol>`.
//! Whitespace is dropped. Unknown words map to `<unk>`.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::render::{RenderedPrompt, TEMPLATE_TEXT};
use super::RuntimeError;
use crate::datagen::lexicon;

pub const UNK: &str = "<unk>";
pub const EOL: &str = "<eol>";
pub const EOL_TRUE: &str = "<eol+>";
pub const EOL_FALSE: &str = "<eol->";
pub const SPECIALS: [&str; 4] = [UNK, EOL, EOL_TRUE, EOL_FALSE];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Byte range in the source text.
    pub span: Range<usize>,
}

/// Splits `text` into tokens with byte spans.
pub fn split(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < text.len() {
        let c = text[i..].chars().next().expect("char boundary");
        let width = c.len_utf8();
        if c == '\n' {
            out.push(Token { text: EOL.into(), span: i..i + 1 });
            i += 1;
        } else if c.is_whitespace() {
            i += width;
        } else if c == '<' {
            match text[i..].find('>') {
                Some(end) if !text[i..i + end].contains(char::is_whitespace) => {
                    out.push(Token { text: text[i..i + end + 1].to_string(), span: i..i + end + 1 });
                    i += end + 1;
                }
                _ => {
                    out.push(Token { text: "<".into(), span: i..i + 1 });
                    i += 1;
                }
            }
        } else if c.is_alphanumeric() {
            let start = i;
            while i < text.len() {
                let d = text[i..].chars().next().expect("char boundary");
                if !d.is_alphanumeric() {
                    break;
                }
                i += d.len_utf8();
            }
            out.push(Token { text: text[start..i].to_lowercase(), span: start..i });
        } else {
            out.push(Token { text: text[i..i + width].to_string(), span: i..i + width });
            i += width;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Specials first, then `words` in the given order without duplicates.
    pub fn new<I: IntoIterator<Item = String>>(words: I) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, u32> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        for w in words {
            if !index.contains_key(&w) {
                index.insert(w.clone(), tokens.len() as u32);
                tokens.push(w);
            }
        }
        Vocab { tokens, index }
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, RuntimeError> {
        for (i, s) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(RuntimeError::Format(format!("vocabulary must start with {SPECIALS:?}")));
            }
        }
        let index: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        if index.len() != tokens.len() {
            return Err(RuntimeError::Format("duplicate vocabulary entries".into()));
        }
        Ok(Vocab { tokens, index })
    }

    /// Every token the generators and templates can produce, sorted.
    pub fn closed() -> Self {
        let mut words: Vec<String> = lexicon::all_words().into_iter().map(|w| w.to_lowercase()).collect();
        words.extend(split(TEMPLATE_TEXT).into_iter().map(|t| t.text));
        words.extend(".,;:?!'\"-()".chars().map(|c| c.to_string()));
        words.retain(|w| !SPECIALS.contains(&w.as_str()));
        words.sort();
        words.dedup();
        Vocab::new(words)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn unk_id(&self) -> u32 {
        0
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        split(text).iter().map(|t| self.id(&t.text).unwrap_or(0)).collect()
    }

    /// First-token id of a word.
    pub fn first_token(&self, word: &str) -> Option<u32> {
        split(word).first().and_then(|t| self.id(&t.text))
    }
}

/// Token ids with anchor positions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptLayout {
    pub token_ids: Vec<u32>,
    pub pos_a0: usize,
    pub pos_a1: usize,
    pub pos_s: usize,
    pub pos_final: usize,
    /// Token range of the statement text.
    pub statement: Range<usize>,
    /// First-token ids of the two options.
    pub option_ids: [u32; 2],
    pub template_id: String,
}

fn resolve(tokens: &[Token], span: &Range<usize>, what: &str) -> Result<usize, RuntimeError> {
    tokens.iter().position(|t| t.span.start == span.start).ok_or_else(|| RuntimeError::SpanResolution {
        span: what.to_string(),
        start: span.start,
    })
}

/// Tokenizes a rendered prompt and resolves its span annotations.
pub fn tokenize(prompt: &RenderedPrompt, vocab: &Vocab) -> Result<PromptLayout, RuntimeError> {
    let tokens = split(&prompt.text);
    let ids: Vec<u32> = tokens.iter().map(|t| vocab.id(&t.text).unwrap_or(0)).collect();
    let spans = &prompt.spans;
    let pos_a0 = resolve(&tokens, &spans.a0, "a0")?;
    let pos_a1 = resolve(&tokens, &spans.a1, "a1")?;
    let pos_s = resolve(&tokens, &spans.eol, "eol")?;
    let stmt_start = resolve(&tokens, &spans.statement, "statement")?;
    let stmt_end = tokens
        .iter()
        .position(|t| t.span.end == spans.statement.end)
        .ok_or(RuntimeError::SpanResolution { span: "statement".into(), start: spans.statement.end })?;
    if tokens.is_empty() || pos_a0 == pos_a1 {
        return Err(RuntimeError::SpanResolution { span: "options".into(), start: spans.a0.start });
    }
    Ok(PromptLayout {
        option_ids: [ids[pos_a0], ids[pos_a1]],
        token_ids: ids,
        pos_a0,
        pos_a1,
        pos_s,
        pos_final: tokens.len() - 1,
        statement: stmt_start..stmt_end + 1,
        template_id: prompt.template_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(s: &str) -> Vec<String> {
        split(s).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn statement_line() {
        assert_eq!(texts("Polly is opaque.\n"), ["polly", "is", "opaque", ".", "<eol>"]);
    }

    #[test]
    fn specials_and_quotes() {
        assert_eq!(texts("Print 'yes' or 'no' only."), ["print", "'", "yes", "'", "or", "'", "no", "'", "only", "."]);
        assert_eq!(texts("quiet.<eol+>Answer:"), ["quiet", ".", "<eol+>", "answer", ":"]);
        assert_eq!(texts("a < b"), ["a", "<", "b"]);
    }

    #[test]
    fn deterministic_ids() {
        let v = Vocab::closed();
        assert_eq!(v.encode("Polly is opaque."), v.encode("Polly is opaque."));
        assert_ne!(v.first_token("true"), v.first_token("false"));
        assert!(v.first_token("true").unwrap() != v.unk_id());
        assert_eq!(v.encode("zzzqqq"), vec![v.unk_id()]);
    }

    #[test]
    fn vocab_round_trip() {
        let v = Vocab::closed();
        assert_eq!(Vocab::from_tokens(v.tokens().to_vec()).unwrap(), v);
        assert!(Vocab::from_tokens(vec!["x".into()]).is_err());
    }
}
