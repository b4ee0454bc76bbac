use std::sync::LazyLock;

use regex::Regex;

use crate::corpus::{normalize_answer, Answer, AnswerKind};

static FINAL_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)final\s+answer").unwrap());
static ANSWER_COLON: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\banswer\s*\**\s*:").unwrap());
static SEPARATOR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^[\s*:,=\-–—]*(?:(?:is|was|would\s+be|will\s+be|should\s+be)\b)?[\s*:,=\-–—]*").unwrap()
});

static YES_NO_HEAD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"(?i)^["'(\[]?\s*(yes|no|true|false)\b"#).unwrap());
static CHOICE_HEAD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?i:(?:option|choice|letter)\s*)?(?:\(([A-Za-z])\)|\[([A-Za-z])\]|([A-Za-z])(?:[).:,;]|\s|$))")
        .unwrap()
});
static WORD_HEAD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"^["'(]?([\p{L}\p{N}][\p{L}\p{N}'-]*)"#).unwrap());

static YES_NO_ANY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap());
static PAREN_LETTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(([A-Za-z])\)").unwrap());
static NAMED_LETTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(?:option|choice)\s+([A-Za-z])\b").unwrap());
static LONE_UPPER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([A-Z])\b").unwrap());
static LAST_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([\p{L}\p{N}][\p{L}\p{N}'-]*)[^\p{L}\p{N}]*$").unwrap());

/// Pulls the answer out of a free-text response.
///
/// An explicit marker ("final answer ...", "answer:") wins, latest first.
/// Otherwise the last standalone yes/no word, the last parenthesized or
/// lone capital choice letter, or for free-form text the last word.
pub fn extract_answer(text: &str, kind: impl Into<AnswerKind>) -> Answer {
    let kind = kind.into();
    for marker in [&*FINAL_MARKER, &*ANSWER_COLON] {
        let ends: Vec<usize> = marker.find_iter(text).map(|m| m.end()).collect();
        for &end in ends.iter().rev() {
            let rest = &text[end..];
            let rest = &rest[SEPARATOR.find(rest).map_or(0, |m| m.end())..];
            if let Some(answer) = head_answer(rest, kind) {
                return answer;
            }
        }
    }
    fallback(text, kind)
}

fn head_answer(fragment: &str, kind: AnswerKind) -> Option<Answer> {
    let raw = match kind {
        AnswerKind::YesNo => YES_NO_HEAD.captures(fragment)?.get(1)?.as_str(),
        AnswerKind::MultiChoice => {
            let caps = CHOICE_HEAD.captures(fragment)?;
            let (m, bare) = match (caps.get(1), caps.get(2), caps.get(3)) {
                (Some(m), _, _) | (_, Some(m), _) => (m, false),
                (_, _, Some(m)) => (m, true),
                _ => return None,
            };
            // A bare lowercase letter or "I" ahead of more words is an
            // article or pronoun, not a choice.
            if bare {
                let c = m.as_str().chars().next()?;
                let followed_by_word = fragment[m.end()..]
                    .strip_prefix(char::is_whitespace)
                    .and_then(|r| r.trim_start().chars().next())
                    .is_some_and(char::is_alphabetic);
                if followed_by_word && (c.is_ascii_lowercase() || c == 'I') {
                    return None;
                }
            }
            m.as_str()
        }
        AnswerKind::FreeForm => WORD_HEAD.captures(fragment)?.get(1)?.as_str(),
    };
    match normalize_answer(raw, kind) {
        Answer::Unparseable => None,
        found => Some(found),
    }
}

fn fallback(text: &str, kind: AnswerKind) -> Answer {
    let raw = match kind {
        AnswerKind::YesNo => YES_NO_ANY.captures_iter(text).last().and_then(|c| c.get(1)),
        AnswerKind::MultiChoice => {
            let lone = LONE_UPPER.captures_iter(text).filter_map(|c| c.get(1)).filter(|m| {
                let after = &text[m.end()..];
                let next_is_lower_word = after
                    .strip_prefix(' ')
                    .and_then(|r| r.chars().next())
                    .is_some_and(|c| c.is_lowercase());
                let contraction = after.starts_with('\'');
                m.as_str() != "I" && !next_is_lower_word && !contraction
            });
            PAREN_LETTER
                .captures_iter(text)
                .filter_map(|c| c.get(1))
                .chain(NAMED_LETTER.captures_iter(text).filter_map(|c| c.get(1)))
                .chain(lone)
                .max_by_key(|m| m.start())
        }
        AnswerKind::FreeForm => LAST_WORD.captures(text).and_then(|c| c.get(1)),
    };
    raw.map_or(Answer::Unparseable, |m| normalize_answer(m.as_str(), kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnswerKey;

    fn key(s: &str) -> Answer {
        Answer::Key(match s {
            "yes" => AnswerKey::yes(),
            "no" => AnswerKey::no(),
            l => AnswerKey::letter((l.as_bytes()[0] - b'A') as usize),
        })
    }

    #[test]
    fn free_form_last_word() {
        assert_eq!(
            extract_answer("The sky is blue", AnswerKind::FreeForm)
                .key()
                .map(AnswerKey::as_str),
            Some("blue")
        );
    }

    #[test]
    fn marker_examples() {
        assert_eq!(
            extract_answer(
                "Final answer, No. Non-residents cannot bring a handgun into New York.",
                AnswerKind::YesNo
            ),
            key("no")
        );
        assert_eq!(
            extract_answer("Final Answer: (D) a zygote.", AnswerKind::MultiChoice),
            key("D")
        );
    }

    #[test]
    fn marker_beats_later_mentions() {
        let text = "Final Answer: Yes. Someone might say no, but no.";
        assert_eq!(extract_answer(text, AnswerKind::YesNo), key("yes"));
    }

    #[test]
    fn article_is_not_a_choice() {
        assert_eq!(
            extract_answer("Final answer: a zygote, which is (D).", AnswerKind::MultiChoice),
            key("D")
        );
        assert_eq!(
            extract_answer("A zygote forms.", AnswerKind::MultiChoice),
            Answer::Unparseable
        );
        assert_eq!(
            extract_answer("I think so.", AnswerKind::MultiChoice),
            Answer::Unparseable
        );
    }

    #[test]
    fn nothing_found() {
        assert_eq!(extract_answer("It depends.", AnswerKind::YesNo), Answer::Unparseable);
        assert_eq!(extract_answer("", AnswerKind::FreeForm), Answer::Unparseable);
    }
}
