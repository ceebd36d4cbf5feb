// SPDX-License-Identifier: MIT OR Apache-2.0

//! Zero-shot prompt rendering with byte-span annotations for the anchors.
//!
//! Templates:
//! - `default`: the statement line ends with a newline, which tokenizes to `<eol>`.
//! - `marker`: the statement line ends with `<eol+>` or `<eol->` according to
//!   the gold answer. Only used to drive planted verification models.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::tokenizer::{EOL_FALSE, EOL_TRUE};
use super::RuntimeError;
use crate::datagen::{Answer, Family, LogicSample};

pub const TEMPLATES: [&str; 2] = ["default", "marker"];

/// Words the templates and the sentence renderers of every family may emit,
/// beyond the lexicon word lists.
pub const TEMPLATE_TEXT: &str = "Use provided context and answer whether the statement is true or false. \
    Use provided Context to answer the Question. Print 'yes' or 'no' only. Context: Statement: Question: Answer: \
    Every each everything that is not a an are or and. If someone is then they are. All people. \
    Does Is it true that? Do does not. It is not the case that. Either or. If a person, then if they, they. \
    All people, every person, each person, everyone, anyone who, everyone who, for anyone, for each person, \
    for every person, for everyone, only if they, no one, not everyone, some person, someone, \
    there is someone who, at least one person.";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpans {
    /// First occurrence of option a0 on the instruction line.
    pub a0: Range<usize>,
    pub a1: Range<usize>,
    /// Statement text, excluding the end-of-line symbol.
    pub statement: Range<usize>,
    /// End-of-line symbol right after the statement.
    pub eol: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub spans: PromptSpans,
    pub template_id: String,
}

fn instruction(family: Family) -> (&'static str, &'static str) {
    match family {
        Family::Mle => ("Use provided Context to answer the Question. Print 'yes' or 'no' only.", "Question"),
        _ => ("Use provided context and answer whether the statement is true or false.", "Statement"),
    }
}

fn word_span(line: &str, word: &str) -> Range<usize> {
    let bytes = line.as_bytes();
    let mut from = 0;
    while let Some(off) = line[from..].find(word) {
        let start = from + off;
        let end = start + word.len();
        let left_ok = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
        let right_ok = end == line.len() || !bytes[end].is_ascii_alphanumeric();
        if left_ok && right_ok {
            return start..end;
        }
        from = end;
    }
    panic!("instruction line lacks option word `{word}`")
}

pub fn render_prompt(sample: &LogicSample, template_id: &str) -> Result<RenderedPrompt, RuntimeError> {
    let eol = match template_id {
        "default" => "\n",
        "marker" => match sample.gold {
            Answer::A0 => EOL_TRUE,
            Answer::A1 => EOL_FALSE,
        },
        _ => {
            return Err(RuntimeError::TemplateMissing {
                template: template_id.to_string(),
                family: sample.family.to_string(),
            })
        }
    };
    let (header, label) = instruction(sample.family);
    let [w0, w1] = sample.family.options();
    // Options are located inside the fixed header, before any sample text.
    let a0 = word_span(header, w0);
    let a1 = word_span(header, w1);

    let mut text = String::with_capacity(256);
    text.push_str(header);
    text.push('\n');
    text.push_str("Context: ");
    text.push_str(&sample.context_text());
    text.push('\n');
    text.push_str(label);
    text.push_str(": ");
    let stmt_start = text.len();
    text.push_str(&sample.statement.text);
    let stmt_end = text.len();
    text.push_str(eol);
    let eol_end = text.len();
    if eol != "\n" {
        text.push('\n');
    }
    text.push_str("Answer:");
    Ok(RenderedPrompt {
        text,
        spans: PromptSpans { a0, a1, statement: stmt_start..stmt_end, eol: stmt_end..eol_end },
        template_id: template_id.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_prontoqa, GenConfig};

    fn sample() -> LogicSample {
        let mut c = GenConfig::new(Family::Pronto);
        c.n_calibration = 2;
        c.n_evaluation = 2;
        gen_prontoqa(&c).unwrap().calibration.remove(0)
    }

    #[test]
    fn pronto_layout() {
        let s = sample();
        let p = render_prompt(&s, "default").unwrap();
        assert!(p.text.starts_with("Use provided context and answer whether the statement is true or false.\n"));
        assert_eq!(&p.text[p.spans.a0.clone()], "true");
        assert_eq!(&p.text[p.spans.a1.clone()], "false");
        assert_eq!(&p.text[p.spans.statement.clone()], s.statement.text);
        assert_eq!(&p.text[p.spans.eol.clone()], "\n");
        assert!(p.text.ends_with("\nAnswer:"));
    }

    #[test]
    fn marker_encodes_gold() {
        let s = sample();
        let p = render_prompt(&s, "marker").unwrap();
        let want = if s.gold == Answer::A0 { EOL_TRUE } else { EOL_FALSE };
        assert_eq!(&p.text[p.spans.eol.clone()], want);
        assert!(matches!(render_prompt(&s, "fewshot"), Err(RuntimeError::TemplateMissing { .. })));
    }

    #[test]
    fn whole_word_match() {
        assert_eq!(word_span("Print 'yes' or 'no' only.", "no"), 16..18);
    }
}
