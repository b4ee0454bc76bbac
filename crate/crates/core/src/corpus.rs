//! Benchmark tasks, answer normalization and corpus splits.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing field {field} at line {line}")]
    MissingField { field: String, line: usize },
    #[error("invalid field {field} at line {line}: {reason}")]
    InvalidField { field: String, line: usize, reason: String },
    #[error("malformed record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unknown corpus format `{0}` (expected boolq_like or mc_like)")]
    UnknownFormat(String),
    #[error("unknown split `{0}` (expected train, validation or test)")]
    UnknownSplit(String),
    #[error("duplicate task id `{0}`")]
    DuplicateId(String),
    #[error("invalid task `{id}`: {reason}")]
    InvalidTask { id: String, reason: String },
    #[error("invalid split fractions test={test}, validation={validation}: {reason}")]
    InvalidFractions {
        test: f64,
        validation: f64,
        reason: &'static str,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    YesNo,
    MultiChoice,
}

/// The answer vocabulary used for normalization and extraction.
///
/// `FreeForm` is never a task kind; it exists so that extraction can be
/// exercised on open-ended text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnswerKind {
    YesNo,
    MultiChoice,
    FreeForm,
}

impl From<TaskKind> for AnswerKind {
    fn from(kind: TaskKind) -> Self {
        match kind {
            TaskKind::YesNo => AnswerKind::YesNo,
            TaskKind::MultiChoice => AnswerKind::MultiChoice,
        }
    }
}

/// Canonical answer token: `yes`/`no`, an uppercase choice letter, or a
/// lowercase free-form word.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnswerKey(String);

impl AnswerKey {
    pub fn yes() -> Self {
        AnswerKey("yes".into())
    }

    pub fn no() -> Self {
        AnswerKey("no".into())
    }

    /// Choice label for a zero-based choice index.
    pub fn letter(index: usize) -> Self {
        assert!(index < 26, "choice index {index} out of range");
        AnswerKey(((b'A' + index as u8) as char).to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Zero-based choice index for a letter key.
    pub fn choice_index(&self) -> Option<usize> {
        let mut chars = self.0.chars();
        match (chars.next(), chars.next()) {
            (Some(c @ 'A'..='Z'), None) => Some(c as usize - 'A' as usize),
            _ => None,
        }
    }

    /// Human-facing rendering used inside prompts and scripted responses:
    /// `Yes`/`No` or `(D)`.
    pub fn display_token(&self) -> String {
        match self.0.as_str() {
            "yes" => "Yes".into(),
            "no" => "No".into(),
            other if self.choice_index().is_some() => format!("({other})"),
            other => other.to_string(),
        }
    }
}

impl fmt::Display for AnswerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Result of normalizing or extracting an answer. Unparseable is a value,
/// never silently mapped onto a real key.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Option<AnswerKey>", into = "Option<AnswerKey>")]
pub enum Answer {
    Key(AnswerKey),
    Unparseable,
}

impl Answer {
    pub fn key(&self) -> Option<&AnswerKey> {
        match self {
            Answer::Key(k) => Some(k),
            Answer::Unparseable => None,
        }
    }

    /// Unparseable answers are never correct.
    pub fn is_correct(&self, gold: &AnswerKey) -> bool {
        self.key() == Some(gold)
    }
}

impl From<Option<AnswerKey>> for Answer {
    fn from(value: Option<AnswerKey>) -> Self {
        value.map_or(Answer::Unparseable, Answer::Key)
    }
}

impl From<Answer> for Option<AnswerKey> {
    fn from(value: Answer) -> Self {
        match value {
            Answer::Key(k) => Some(k),
            Answer::Unparseable => None,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Key(k) => k.fmt(f),
            Answer::Unparseable => f.write_str("<unparseable>"),
        }
    }
}

fn strip_wrapping(raw: &str) -> &str {
    raw.trim().trim_matches(|c: char| {
        c.is_whitespace()
            || matches!(
                c,
                '(' | ')' | '[' | ']' | '"' | '\'' | '*' | '.' | ',' | ':' | ';' | '!'
            )
    })
}

/// Maps a raw answer token onto the canonical vocabulary of `kind`.
///
/// Idempotent: normalizing a canonical key returns it unchanged.
pub fn normalize_answer(raw: &str, kind: impl Into<AnswerKind>) -> Answer {
    let token = strip_wrapping(raw);
    if token.is_empty() {
        return Answer::Unparseable;
    }
    match kind.into() {
        AnswerKind::YesNo => match token.to_ascii_lowercase().as_str() {
            "yes" | "true" | "y" => Answer::Key(AnswerKey::yes()),
            "no" | "false" | "n" => Answer::Key(AnswerKey::no()),
            _ => Answer::Unparseable,
        },
        AnswerKind::MultiChoice => {
            let lower = token.to_ascii_lowercase();
            let letter = lower
                .strip_prefix("option")
                .or_else(|| lower.strip_prefix("choice"))
                .map(strip_wrapping)
                .unwrap_or(&lower);
            let mut chars = letter.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii_alphabetic() => {
                    Answer::Key(AnswerKey(c.to_ascii_uppercase().to_string()))
                }
                _ => Answer::Unparseable,
            }
        }
        AnswerKind::FreeForm => {
            if token.chars().any(char::is_whitespace) {
                Answer::Unparseable
            } else {
                Answer::Key(AnswerKey(token.to_lowercase()))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: AnswerKey,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub kind: TaskKind,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passage: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<Choice>,
    pub answer_key: AnswerKey,
}

impl Task {
    pub fn yes_no(id: impl Into<String>, question: impl Into<String>, passage: Option<String>, answer: bool) -> Self {
        Task {
            id: id.into(),
            kind: TaskKind::YesNo,
            question: question.into(),
            passage,
            choices: Vec::new(),
            answer_key: if answer { AnswerKey::yes() } else { AnswerKey::no() },
        }
    }

    /// Builds a lettered multiple-choice task; labels are assigned A, B, C, ...
    pub fn multi_choice(
        id: impl Into<String>,
        question: impl Into<String>,
        passage: Option<String>,
        choices: Vec<String>,
        answer_index: usize,
    ) -> Result<Self, CorpusError> {
        let task = Task {
            id: id.into(),
            kind: TaskKind::MultiChoice,
            question: question.into(),
            passage,
            choices: choices
                .into_iter()
                .enumerate()
                .map(|(i, text)| Choice {
                    label: AnswerKey::letter(i.min(25)),
                    text,
                })
                .collect(),
            answer_key: AnswerKey::letter(answer_index.min(25)),
        };
        if answer_index >= task.choices.len() {
            return Err(CorpusError::InvalidTask {
                id: task.id,
                reason: format!("answer index {answer_index} outside {} choices", task.choices.len()),
            });
        }
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: String| CorpusError::InvalidTask {
            id: self.id.clone(),
            reason,
        };
        match self.kind {
            TaskKind::YesNo => {
                if !self.choices.is_empty() {
                    return Err(invalid("yes_no task must not carry choices".into()));
                }
                if self.answer_key != AnswerKey::yes() && self.answer_key != AnswerKey::no() {
                    return Err(invalid(format!("answer key `{}` is not yes/no", self.answer_key)));
                }
            }
            TaskKind::MultiChoice => {
                if self.choices.is_empty() || self.choices.len() > 26 {
                    return Err(invalid(format!("{} choices (need 1..=26)", self.choices.len())));
                }
                for (i, choice) in self.choices.iter().enumerate() {
                    if choice.label != AnswerKey::letter(i) {
                        return Err(invalid(format!(
                            "choice {i} has label `{}`, expected `{}`",
                            choice.label,
                            AnswerKey::letter(i)
                        )));
                    }
                }
                if self.answer_key.choice_index().is_none_or(|i| i >= self.choices.len()) {
                    return Err(invalid(format!(
                        "answer key `{}` is not a choice label",
                        self.answer_key
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every key a response to this task could legitimately produce.
    pub fn answer_space(&self) -> Vec<AnswerKey> {
        match self.kind {
            TaskKind::YesNo => vec![AnswerKey::yes(), AnswerKey::no()],
            TaskKind::MultiChoice => self.choices.iter().map(|c| c.label.clone()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::UnknownSplit(other.into())),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    name: String,
    split: Split,
    tasks: Vec<Task>,
}

#[derive(Serialize, Deserialize)]
struct CorpusHeader {
    corpus: String,
    split: Split,
}

impl Corpus {
    pub fn new(name: impl Into<String>, split: Split, tasks: Vec<Task>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(tasks.len());
        for task in &tasks {
            task.validate()?;
            if !seen.insert(task.id.as_str()) {
                return Err(CorpusError::DuplicateId(task.id.clone()));
            }
        }
        Ok(Corpus {
            name: name.into(),
            split,
            tasks,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Writes the canonical form: a header line followed by one task per line.
    pub fn write_jsonl(&self, writer: impl Write) -> Result<(), CorpusError> {
        let mut out = BufWriter::new(writer);
        let header = CorpusHeader {
            corpus: self.name.clone(),
            split: self.split,
        };
        serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        for task in &self.tasks {
            serde_json::to_writer(&mut out, task).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        self.write_jsonl(File::create(path)?)
    }

    pub fn read_jsonl(reader: impl BufRead) -> Result<Self, CorpusError> {
        let mut lines = reader.lines().enumerate();
        let header: CorpusHeader = loop {
            match lines.next() {
                Some((i, line)) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                        line: i + 1,
                        reason: format!("bad corpus header: {e}"),
                    })?;
                }
                None => {
                    return Err(CorpusError::Malformed {
                        line: 1,
                        reason: "empty corpus file".into(),
                    })
                }
            }
        };
        let mut tasks = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let task: Task = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: i + 1,
                reason: e.to_string(),
            })?;
            tasks.push(task);
        }
        Corpus::new(header.corpus, header.split, tasks)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        Self::read_jsonl(BufReader::new(File::open(path)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    BoolqLike,
    McLike,
}

impl FromStr for SourceFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "boolq_like" => Ok(SourceFormat::BoolqLike),
            "mc_like" => Ok(SourceFormat::McLike),
            other => Err(CorpusError::UnknownFormat(other.into())),
        }
    }
}

/// Field names to read from source records.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMap {
    pub id: String,
    pub question: String,
    pub passage: String,
    pub answer: String,
    pub choices: String,
    pub answer_index: String,
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            id: "id".into(),
            question: "question".into(),
            passage: "passage".into(),
            answer: "answer".into(),
            choices: "choices".into(),
            answer_index: "answer_index".into(),
        }
    }
}

/// Loads a raw line-delimited source file with the default field names.
pub fn load_corpus(path: impl AsRef<Path>, format: SourceFormat) -> Result<Corpus, CorpusError> {
    load_corpus_with(path, format, &FieldMap::default())
}

pub fn load_corpus_with(
    path: impl AsRef<Path>,
    format: SourceFormat,
    fields: &FieldMap,
) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    parse_records(BufReader::new(File::open(path)?), &name, format, fields)
}

/// Parses source records from any reader. Record count is preserved; any
/// malformed or unparseable record aborts ingestion.
pub fn parse_records(
    reader: impl BufRead,
    name: &str,
    format: SourceFormat,
    fields: &FieldMap,
) -> Result<Corpus, CorpusError> {
    let mut tasks = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Value = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        if !record.is_object() {
            return Err(CorpusError::Malformed {
                line: line_no,
                reason: "record is not an object".into(),
            });
        }
        let task = match format {
            SourceFormat::BoolqLike => parse_boolq(&record, line_no, name, fields)?,
            SourceFormat::McLike => parse_mc(&record, line_no, name, fields)?,
        };
        tasks.push(task);
    }
    Corpus::new(name, Split::Train, tasks)
}

fn required<'a>(record: &'a Value, field: &str, line: usize) -> Result<&'a Value, CorpusError> {
    match record.get(field) {
        Some(Value::Null) | None => Err(CorpusError::MissingField {
            field: field.into(),
            line,
        }),
        Some(v) => Ok(v),
    }
}

fn required_str<'a>(record: &'a Value, field: &str, line: usize) -> Result<&'a str, CorpusError> {
    required(record, field, line)?
        .as_str()
        .ok_or_else(|| CorpusError::InvalidField {
            field: field.into(),
            line,
            reason: "expected a string".into(),
        })
}

fn record_id(record: &Value, fields: &FieldMap, name: &str, line: usize) -> String {
    match record.get(&fields.id) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => format!("{name}-{line}"),
    }
}

fn optional_passage(record: &Value, fields: &FieldMap) -> Option<String> {
    record
        .get(&fields.passage)
        .and_then(Value::as_str)
        .filter(|s| !s.trim().is_empty())
        .map(str::to_string)
}

fn parse_boolq(record: &Value, line: usize, name: &str, fields: &FieldMap) -> Result<Task, CorpusError> {
    let question = required_str(record, &fields.question, line)?;
    let answer = match required(record, &fields.answer, line)? {
        Value::Bool(b) => *b,
        Value::String(s) => match normalize_answer(s, AnswerKind::YesNo) {
            Answer::Key(k) => k == AnswerKey::yes(),
            Answer::Unparseable => {
                return Err(CorpusError::InvalidField {
                    field: fields.answer.clone(),
                    line,
                    reason: format!("unparseable yes/no answer `{s}`"),
                })
            }
        },
        other => {
            return Err(CorpusError::InvalidField {
                field: fields.answer.clone(),
                line,
                reason: format!("expected boolean or yes/no string, got {other}"),
            })
        }
    };
    Ok(Task::yes_no(
        record_id(record, fields, name, line),
        question,
        optional_passage(record, fields),
        answer,
    ))
}

fn parse_mc(record: &Value, line: usize, name: &str, fields: &FieldMap) -> Result<Task, CorpusError> {
    let question = required_str(record, &fields.question, line)?;
    let choices = required(record, &fields.choices, line)?
        .as_array()
        .ok_or_else(|| CorpusError::InvalidField {
            field: fields.choices.clone(),
            line,
            reason: "expected an array".into(),
        })?
        .iter()
        .map(|c| match c {
            Value::String(s) => Ok(s.clone()),
            Value::Object(o) => o
                .get("text")
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| CorpusError::InvalidField {
                    field: fields.choices.clone(),
                    line,
                    reason: "choice object without text".into(),
                }),
            other => Err(CorpusError::InvalidField {
                field: fields.choices.clone(),
                line,
                reason: format!("unsupported choice {other}"),
            }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if choices.is_empty() || choices.len() > 26 {
        return Err(CorpusError::InvalidField {
            field: fields.choices.clone(),
            line,
            reason: format!("{} choices (need 1..=26)", choices.len()),
        });
    }
    let index = if let Some(v) = record.get(&fields.answer_index).filter(|v| !v.is_null()) {
        v.as_u64()
            .map(|i| i as usize)
            .ok_or_else(|| CorpusError::InvalidField {
                field: fields.answer_index.clone(),
                line,
                reason: "expected a non-negative integer".into(),
            })?
    } else if let Some(v) = record.get(&fields.answer).filter(|v| !v.is_null()) {
        let raw = v.as_str().ok_or_else(|| CorpusError::InvalidField {
            field: fields.answer.clone(),
            line,
            reason: "expected a choice letter".into(),
        })?;
        normalize_answer(raw, AnswerKind::MultiChoice)
            .key()
            .and_then(AnswerKey::choice_index)
            .ok_or_else(|| CorpusError::InvalidField {
                field: fields.answer.clone(),
                line,
                reason: format!("unparseable choice `{raw}`"),
            })?
    } else {
        return Err(CorpusError::MissingField {
            field: fields.answer_index.clone(),
            line,
        });
    };
    if index >= choices.len() {
        return Err(CorpusError::InvalidField {
            field: fields.answer_index.clone(),
            line,
            reason: format!("answer {index} outside {} choices", choices.len()),
        });
    }
    Task::multi_choice(
        record_id(record, fields, name, line),
        question,
        optional_passage(record, fields),
        choices,
        index,
    )
}

/// Partitions a corpus into (train, validation, test).
///
/// Sizes are `round(n * fraction)` for test and validation; train takes the
/// remainder. Membership depends only on the inputs and the seed; source
/// order is preserved within each part.
pub fn split_corpus(
    corpus: &Corpus,
    test_fraction: f64,
    validation_fraction: f64,
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus), CorpusError> {
    let bad = |reason| CorpusError::InvalidFractions {
        test: test_fraction,
        validation: validation_fraction,
        reason,
    };
    if !(test_fraction > 0.0 && validation_fraction > 0.0) {
        return Err(bad("fractions must be positive"));
    }
    if test_fraction + validation_fraction >= 1.0 {
        return Err(bad("fractions must sum to less than 1"));
    }
    let n = corpus.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    let n_val = ((n as f64 * validation_fraction).round() as usize).min(n - n_test);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![Split::Train; n];
    for &i in &order[..n_test] {
        assignment[i] = Split::Test;
    }
    for &i in &order[n_test..n_test + n_val] {
        assignment[i] = Split::Validation;
    }
    let part = |split: Split| {
        let tasks = corpus
            .tasks
            .iter()
            .zip(&assignment)
            .filter(|(_, s)| **s == split)
            .map(|(t, _)| t.clone())
            .collect();
        Corpus {
            name: corpus.name.clone(),
            split,
            tasks,
        }
    };
    Ok((part(Split::Train), part(Split::Validation), part(Split::Test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(lines: &str, format: SourceFormat) -> Result<Corpus, CorpusError> {
        parse_records(lines.as_bytes(), "t", format, &FieldMap::default())
    }

    #[test]
    fn boolean_answer_maps_to_yes() {
        let c = parse(
            r#"{"question":"is the sky blue","passage":"The sky is blue.","answer":true}"#,
            SourceFormat::BoolqLike,
        )
        .unwrap();
        let t = &c.tasks()[0];
        assert_eq!(t.kind, TaskKind::YesNo);
        assert_eq!(t.answer_key.as_str(), "yes");
        assert_eq!(t.passage.as_deref(), Some("The sky is blue."));
        assert!(t.choices.is_empty());
    }

    #[test]
    fn answer_index_maps_to_letter() {
        let c = parse(
            r#"{"question":"Fertilization produces a","choices":["gamete","ovum","nucleus","zygote"],"answer_index":3}"#,
            SourceFormat::McLike,
        )
        .unwrap();
        let t = &c.tasks()[0];
        assert_eq!(t.kind, TaskKind::MultiChoice);
        assert_eq!(t.answer_key.as_str(), "D");
        assert_eq!(t.choices[3].text, "zygote");
    }

    #[test]
    fn mc_accepts_letter_answer() {
        let c = parse(
            r#"{"question":"q","choices":["a","b","c"],"answer":"(b)"}"#,
            SourceFormat::McLike,
        )
        .unwrap();
        assert_eq!(c.tasks()[0].answer_key.as_str(), "B");
    }

    #[test]
    fn missing_answer_names_line() {
        let err = parse(
            "{\"question\":\"a\",\"answer\":false}\n{\"question\":\"b\",\"passage\":\"p\"}\n",
            SourceFormat::BoolqLike,
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "missing field answer at line 2");
    }

    #[test]
    fn unparseable_gold_aborts() {
        let err = parse(r#"{"question":"a","answer":"maybe"}"#, SourceFormat::BoolqLike).unwrap_err();
        assert!(matches!(err, CorpusError::InvalidField { line: 1, .. }), "{err}");
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let err = parse(
            r#"{"question":"q","choices":["a","b"],"answer_index":2}"#,
            SourceFormat::McLike,
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::InvalidField { .. }));
    }

    #[test]
    fn unknown_format_is_an_error() {
        assert!(matches!(
            "squad".parse::<SourceFormat>(),
            Err(CorpusError::UnknownFormat(_))
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = parse(
            "{\"id\":\"x\",\"question\":\"a\",\"answer\":true}\n{\"id\":\"x\",\"question\":\"b\",\"answer\":true}",
            SourceFormat::BoolqLike,
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId(id) if id == "x"));
    }

    #[test]
    fn custom_field_names() {
        let fields = FieldMap {
            question: "q".into(),
            answer: "label".into(),
            ..FieldMap::default()
        };
        let c = parse_records(
            r#"{"q":"is it","label":"No"}"#.as_bytes(),
            "x",
            SourceFormat::BoolqLike,
            &fields,
        )
        .unwrap();
        assert_eq!(c.tasks()[0].answer_key, AnswerKey::no());
    }

    #[test]
    fn normalization_table() {
        assert_eq!(normalize_answer("Yes", TaskKind::YesNo), Answer::Key(AnswerKey::yes()));
        assert_eq!(normalize_answer("YES", TaskKind::YesNo), Answer::Key(AnswerKey::yes()));
        assert_eq!(normalize_answer("true", TaskKind::YesNo), Answer::Key(AnswerKey::yes()));
        assert_eq!(normalize_answer("No.", TaskKind::YesNo), Answer::Key(AnswerKey::no()));
        assert_eq!(
            normalize_answer("(d)", TaskKind::MultiChoice),
            Answer::Key(AnswerKey::letter(3))
        );
        assert_eq!(
            normalize_answer("d", TaskKind::MultiChoice),
            Answer::Key(AnswerKey::letter(3))
        );
        assert_eq!(
            normalize_answer("D", TaskKind::MultiChoice),
            Answer::Key(AnswerKey::letter(3))
        );
        assert_eq!(
            normalize_answer("Option B", TaskKind::MultiChoice),
            Answer::Key(AnswerKey::letter(1))
        );
        assert_eq!(normalize_answer("maybe", TaskKind::YesNo), Answer::Unparseable);
        assert_eq!(normalize_answer("", TaskKind::MultiChoice), Answer::Unparseable);
        assert_eq!(normalize_answer("zygote", TaskKind::MultiChoice), Answer::Unparseable);
    }

    fn corpus_of(n: usize) -> Corpus {
        let tasks = (0..n)
            .map(|i| Task::yes_no(format!("t{i}"), format!("q{i}"), None, i % 2 == 0))
            .collect();
        Corpus::new("synthetic", Split::Train, tasks).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let c = corpus_of(100);
        let (train, val, test) = split_corpus(&c, 0.25, 0.10, 7).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (65, 10, 25));
        let again = split_corpus(&c, 0.25, 0.10, 7).unwrap();
        assert_eq!((train.clone(), val.clone(), test.clone()), again);
        let other = split_corpus(&c, 0.25, 0.10, 8).unwrap();
        assert_ne!(test, other.2);

        let mut ids: Vec<_> = train
            .tasks()
            .iter()
            .chain(val.tasks())
            .chain(test.tasks())
            .map(|t| t.id.clone())
            .collect();
        ids.sort();
        let mut all: Vec<_> = c.tasks().iter().map(|t| t.id.clone()).collect();
        all.sort();
        assert_eq!(ids, all);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let c = corpus_of(10);
        assert!(split_corpus(&c, 0.9, 0.2, 1).is_err());
        assert!(split_corpus(&c, 0.0, 0.2, 1).is_err());
        assert!(split_corpus(&c, 0.5, 0.5, 1).is_err());
    }

    fn arb_task() -> impl Strategy<Value = Task> {
        let yes_no = (
            "[a-z0-9]{1,8}",
            "[ -~]{1,40}",
            proptest::option::of("[ -~\n]{0,60}"),
            any::<bool>(),
        )
            .prop_map(|(id, q, p, a)| Task::yes_no(id, q, p, a));
        let mc = (
            "[a-z0-9]{1,8}",
            "[ -~]{1,40}",
            proptest::collection::vec("[ -~]{1,12}", 1..6),
            any::<proptest::sample::Index>(),
        )
            .prop_map(|(id, q, choices, idx)| {
                let i = idx.index(choices.len());
                Task::multi_choice(id, q, None, choices, i).unwrap()
            });
        prop_oneof![yes_no, mc]
    }

    proptest! {
        #[test]
        fn corpus_round_trips(tasks in proptest::collection::vec(arb_task(), 0..12)) {
            let mut seen = HashSet::new();
            let tasks: Vec<Task> = tasks.into_iter().filter(|t| seen.insert(t.id.clone())).collect();
            let corpus = Corpus::new("rt", Split::Validation, tasks).unwrap();
            let mut buf = Vec::new();
            corpus.write_jsonl(&mut buf).unwrap();
            let back = Corpus::read_jsonl(buf.as_slice()).unwrap();
            prop_assert_eq!(back, corpus);
        }

        #[test]
        fn normalization_is_idempotent(raw in "[ -~]{0,12}") {
            for kind in [AnswerKind::YesNo, AnswerKind::MultiChoice, AnswerKind::FreeForm] {
                if let Answer::Key(k) = normalize_answer(&raw, kind) {
                    prop_assert_eq!(normalize_answer(k.as_str(), kind), Answer::Key(k.clone()));
                }
            }
        }

        #[test]
        fn split_is_an_exact_partition(n in 0usize..200, seed in any::<u64>()) {
            let c = corpus_of(n);
            let (a, b, t) = split_corpus(&c, 0.25, 0.1, seed).unwrap();
            prop_assert_eq!(a.len() + b.len() + t.len(), n);
            let ids: HashSet<_> = a.tasks().iter().chain(b.tasks()).chain(t.tasks()).map(|t| &t.id).collect();
            prop_assert_eq!(ids.len(), n);
        }
    }
}
