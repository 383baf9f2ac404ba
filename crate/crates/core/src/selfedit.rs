//! Self-supervised data pipeline for teaching a model an edit.
//!
//! An incoming edit passes through four model-driven stages: a feasibility
//! filter rejects edits no future event could make true; augmentation
//! expands a feasible edit into the event that would explain it (a recall
//! of the superseded fact, triplet events, and a narrative paragraph);
//! question generation probes the event with five QA pairs whose last
//! question is deliberately undecidable and must be answered "I don't
//! know"; and a completion transform recasts any pair as a text-completion
//! item. Fine-tuning data comes from letting the model quiz itself about
//! the event and answer its own questions with the event in context, each
//! answer prefixed by a recitation of the event paragraph.
//!
//! Scoring utilities measure how well a tuned model abstains: an answer
//! counts as abstaining when, after stripping the recitation, it
//! normalizes to "I don't know" (or "unknown"), and abstention quality is
//! reported as precision/recall/F1 against gold undecidability labels.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lmprobe::{LmClient, ProbeError, SampleParams};

#[derive(Debug, Error)]
pub enum SelfEditError {
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("cannot tell whether the verdict is possible or impossible: {0:?}")]
    UnparseableVerdict(String),
    #[error("event output is missing its {0:?} section")]
    MissingSection(&'static str),
    #[error("malformed triplet event: {0:?}")]
    MalformedTriple(String),
    #[error("expected {expected} numbered entries, found {found}")]
    WrongCardinality { expected: usize, found: usize },
    #[error("the undecidable slot must abstain, got {0:?}")]
    MissingUnknown(String),
    #[error("entry {index} abstains but only the last one may")]
    UnexpectedUnknown { index: usize },
    #[error("line fits no expected shape: {0:?}")]
    UnrecognizedLine(String),
    #[error("completion output has no '|' separator: {0:?}")]
    MissingSeparator(String),
    #[error("predictions and gold labels disagree on ids: {0}")]
    IdMismatch(String),
    #[error("input line {line}: {reason}")]
    InvalidInput { line: usize, reason: String },
    #[error("no events to build a dataset from")]
    EmptyEvents,
    #[error("questions per event must be positive")]
    NoQuestions,
    #[error("model returned an empty answer for question {0:?}")]
    EmptyAnswer(String),
    #[error("every event failed; first error: {0}")]
    AllFailed(String),
}

// ---------- pipeline records ----------

/// One knowledge edit as it arrives from a benchmark file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEdit {
    pub id: String,
    pub subject: String,
    pub relation: String,
    pub object: String,
    /// The superseded fact, phrased as a sentence.
    pub past: String,
    /// The edited fact as a bare sentence; prompts add their own framing.
    pub latest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleEvent {
    pub subject: String,
    pub relation: String,
    pub object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qualifier: Option<String>,
}

/// An edit expanded into the event that would make it true.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventEdit {
    pub id: String,
    pub recall: String,
    pub triples: Vec<TripleEvent>,
    pub paragraph: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: String,
    pub answer: String,
    pub undecidable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionItem {
    pub prefix: String,
    pub target: String,
}

/// Which side of a training pair the loss applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMask {
    #[serde(rename = "question")]
    Question,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub question: String,
    pub answer: String,
    pub edit_id: String,
    pub loss_mask: LossMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feasibility {
    Possible,
    Impossible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedEvent {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetBuild {
    pub instances: Vec<TrainingInstance>,
    pub skipped: Vec<SkippedEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnknownScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrippedAnswer {
    pub text: String,
    pub had_marker: bool,
}

// ---------- prompt templates ----------

const FILTER_TEMPLATE: &str = include_str!("../prompts/filter.txt");
const AUGMENT_TEMPLATE: &str = include_str!("../prompts/augment.txt");
const QA_TEMPLATE: &str = include_str!("../prompts/qa.txt");
const COMPLETION_TEMPLATE: &str = include_str!("../prompts/completion.txt");
const UNCERTAINTY_TEMPLATE: &str = include_str!("../prompts/uncertainty.txt");
const SELF_PROMPT_TEMPLATE: &str = include_str!("../prompts/self_prompt.txt");
const ANSWER_TEMPLATE: &str = include_str!("../prompts/answer.txt");

/// Interpolates `{name}` slots. Slot positions come from the template
/// alone, so slot-shaped text inside a value is never re-expanded.
fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut cuts: Vec<(usize, usize, &str)> = Vec::new();
    for (name, value) in slots {
        let pattern = format!("{{{name}}}");
        let mut search = 0;
        while let Some(at) = template[search..].find(&pattern) {
            let start = search + at;
            cuts.push((start, start + pattern.len(), value));
            search = start + pattern.len();
        }
    }
    cuts.sort_by_key(|&(start, _, _)| start);
    let mut out = String::with_capacity(template.len());
    let mut prev = 0;
    for (start, end, value) in cuts {
        out.push_str(&template[prev..start]);
        out.push_str(value);
        prev = end;
    }
    out.push_str(&template[prev..]);
    out
}

fn render(template: &str, slots: &[(&str, &str)]) -> String {
    fill(template, slots).trim_end().to_string()
}

pub fn render_filter_prompt(edit: &InputEdit) -> String {
    render(FILTER_TEMPLATE, &[("edit", &edit.latest)])
}

pub fn render_augment_prompt(edit: &InputEdit) -> String {
    render(AUGMENT_TEMPLATE, &[("edit", &edit.latest)])
}

pub fn render_qa_prompt(past: &str, latest: &str, event: &str) -> String {
    render(
        QA_TEMPLATE,
        &[("past", past), ("latest", latest), ("event", event)],
    )
}

pub fn render_completion_prompt(question: &str, answer: &str) -> String {
    render(
        COMPLETION_TEMPLATE,
        &[("question", question), ("answer", answer)],
    )
}

pub fn render_uncertainty_prompt(context: &str, question: &str) -> String {
    render(
        UNCERTAINTY_TEMPLATE,
        &[("context", context), ("question", question)],
    )
}

pub fn render_self_prompt(count: usize, event: &str) -> String {
    render(
        SELF_PROMPT_TEMPLATE,
        &[("n", &count.to_string()), ("event", event)],
    )
}

pub fn render_answer_prompt(event: &str, question: &str) -> String {
    render(ANSWER_TEMPLATE, &[("event", event), ("question", question)])
}

fn clip(text: &str) -> String {
    const LIMIT: usize = 80;
    if text.chars().count() <= LIMIT {
        text.to_string()
    } else {
        let head: String = text.chars().take(LIMIT).collect();
        format!("{head}...")
    }
}

// ---------- feasibility filter ----------

const POSSIBLE_TAG: &str = "<Considered possible>";
const IMPOSSIBLE_TAG: &str = "<Considered impossible>";

/// Asks the model whether any future event could make the edit true.
pub fn filter_feasible(
    client: &dyn LmClient,
    edit: &InputEdit,
) -> Result<Feasibility, SelfEditError> {
    let prompt = render_filter_prompt(edit);
    let params = SampleParams {
        temperature: 0.0,
        max_tokens: 64,
    };
    let (text, _) = client.sample(&prompt, &params)?;
    match (text.contains(POSSIBLE_TAG), text.contains(IMPOSSIBLE_TAG)) {
        (true, false) => Ok(Feasibility::Possible),
        (false, true) => Ok(Feasibility::Impossible),
        _ => Err(SelfEditError::UnparseableVerdict(clip(&text))),
    }
}

// ---------- event augmentation ----------

const RECALL_MARKER: &str = "Recall:";
const TRIPLETS_MARKER: &str = "Triplet Events:";
const PARAGRAPH_MARKER: &str = "Paragraph Events:";

/// Expands an edit into the event that would make it true.
pub fn augment_event(client: &dyn LmClient, edit: &InputEdit) -> Result<EventEdit, SelfEditError> {
    let prompt = render_augment_prompt(edit);
    let params = SampleParams {
        temperature: 0.0,
        max_tokens: 512,
    };
    let (text, _) = client.sample(&prompt, &params)?;
    parse_event_output(&edit.id, &text)
}

fn parse_event_output(id: &str, text: &str) -> Result<EventEdit, SelfEditError> {
    let mut spans = Vec::new();
    for marker in [RECALL_MARKER, TRIPLETS_MARKER, PARAGRAPH_MARKER] {
        let at = text
            .find(marker)
            .ok_or(SelfEditError::MissingSection(marker))?;
        spans.push((at, marker));
    }
    // Each section runs from its marker to the nearest following marker,
    // so the three sections may appear in any order.
    let content = |marker: &str| -> &str {
        let (at, _) = *spans.iter().find(|&&(_, m)| m == marker).expect("known marker");
        let start = at + marker.len();
        let end = spans
            .iter()
            .map(|&(a, _)| a)
            .filter(|&a| a > at)
            .min()
            .unwrap_or(text.len());
        text[start..end].trim()
    };

    let recall_raw = content(RECALL_MARKER);
    let recall = recall_raw
        .strip_prefix('<')
        .and_then(|inner| inner.strip_suffix('>'))
        .unwrap_or(recall_raw)
        .trim()
        .to_string();
    if recall.is_empty() {
        return Err(SelfEditError::MissingSection(RECALL_MARKER));
    }
    let triples = parse_triples(content(TRIPLETS_MARKER))?;
    let paragraph = content(PARAGRAPH_MARKER).to_string();
    if paragraph.is_empty() {
        return Err(SelfEditError::MissingSection(PARAGRAPH_MARKER));
    }
    Ok(EventEdit {
        id: id.to_string(),
        recall,
        triples,
        paragraph,
    })
}

fn parse_triples(section: &str) -> Result<Vec<TripleEvent>, SelfEditError> {
    let mut triples = Vec::new();
    let mut rest = section;
    loop {
        rest = rest.trim_start();
        if rest.is_empty() {
            break;
        }
        if !rest.starts_with('<') {
            return Err(SelfEditError::MalformedTriple(clip(rest)));
        }
        let end = rest
            .find('>')
            .ok_or_else(|| SelfEditError::MalformedTriple(clip(rest)))?;
        let group = &rest[1..end];
        let spans: Vec<&str> = group.split('|').map(str::trim).collect();
        if spans.len() < 3 || spans.iter().any(|span| span.is_empty()) {
            return Err(SelfEditError::MalformedTriple(group.to_string()));
        }
        triples.push(TripleEvent {
            subject: spans[0].to_string(),
            relation: spans[1].to_string(),
            object: spans[2].to_string(),
            qualifier: (spans.len() > 3).then(|| spans[3..].join(" | ")),
        });
        rest = &rest[end + 1..];
    }
    if triples.is_empty() {
        return Err(SelfEditError::MalformedTriple(
            "no triplet groups found".to_string(),
        ));
    }
    Ok(triples)
}

// ---------- question-answer generation ----------

/// How many pairs a QA generation must produce; the last is undecidable.
pub const QA_PAIRS: usize = 5;

/// Generates the five probing pairs for an event. The first four answers
/// must be decidable from the event; the fifth must abstain.
pub fn gen_qa(
    client: &dyn LmClient,
    past: &str,
    latest: &str,
    event: &EventEdit,
) -> Result<Vec<QAPair>, SelfEditError> {
    let prompt = render_qa_prompt(past, latest, &event.paragraph);
    let params = SampleParams {
        temperature: 0.0,
        max_tokens: 768,
    };
    let (text, _) = client.sample(&prompt, &params)?;
    parse_qa_output(&text)
}

fn numbered_line<'a>(line: &'a str, label: &str) -> Option<(usize, &'a str)> {
    let rest = line.strip_prefix(label)?.strip_prefix(' ')?;
    let (number, value) = rest.split_once(':')?;
    let index: usize = number.trim().parse().ok()?;
    Some((index, value.trim()))
}

fn parse_qa_output(text: &str) -> Result<Vec<QAPair>, SelfEditError> {
    enum Slot {
        Question(usize),
        Answer(usize),
    }
    let mut questions: BTreeMap<usize, String> = BTreeMap::new();
    let mut answers: BTreeMap<usize, String> = BTreeMap::new();
    let mut last: Option<Slot> = None;
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            last = None;
            continue;
        }
        if questions.is_empty() && answers.is_empty() && line.trim_end_matches(':') == "Output" {
            continue;
        }
        if let Some((index, value)) = numbered_line(line, "Question") {
            questions.insert(index, value.to_string());
            last = Some(Slot::Question(index));
        } else if let Some((index, value)) = numbered_line(line, "Answer") {
            answers.insert(index, value.to_string());
            last = Some(Slot::Answer(index));
        } else {
            // A wrapped line continues whichever field came before it.
            let target = match last {
                Some(Slot::Question(i)) => questions.get_mut(&i),
                Some(Slot::Answer(i)) => answers.get_mut(&i),
                None => None,
            };
            match target {
                Some(buffer) => {
                    buffer.push(' ');
                    buffer.push_str(line);
                }
                None => return Err(SelfEditError::UnrecognizedLine(line.to_string())),
            }
        }
    }

    let expected = QA_PAIRS;
    let complete = (1..=expected)
        .filter(|i| questions.contains_key(i) && answers.contains_key(i))
        .count();
    let found = questions.len().max(answers.len());
    if complete != expected || found != expected {
        return Err(SelfEditError::WrongCardinality { expected, found });
    }

    let mut pairs = Vec::with_capacity(expected);
    for index in 1..=expected {
        let question = questions.remove(&index).expect("checked complete");
        let answer = answers.remove(&index).expect("checked complete");
        let abstains = is_unknown_answer(&answer);
        if index < expected && abstains {
            return Err(SelfEditError::UnexpectedUnknown { index });
        }
        if index == expected && !abstains {
            return Err(SelfEditError::MissingUnknown(answer));
        }
        pairs.push(QAPair {
            question,
            answer,
            undecidable: index == expected,
        });
    }
    Ok(pairs)
}

// ---------- completion transform ----------

const COMPLETION_MARKER: &str = "Text Completion:";

/// Recasts a QA pair as a text-completion item split at the model's '|'.
pub fn qa_to_completion(
    client: &dyn LmClient,
    pair: &QAPair,
) -> Result<CompletionItem, SelfEditError> {
    let prompt = render_completion_prompt(&pair.question, &pair.answer);
    let params = SampleParams {
        temperature: 0.0,
        max_tokens: 128,
    };
    let (text, _) = client.sample(&prompt, &params)?;
    parse_completion_output(&text, pair.undecidable)
}

fn parse_completion_output(
    text: &str,
    undecidable: bool,
) -> Result<CompletionItem, SelfEditError> {
    let line = match text.find(COMPLETION_MARKER) {
        Some(at) => text[at + COMPLETION_MARKER.len()..]
            .lines()
            .next()
            .unwrap_or(""),
        None => text
            .lines()
            .map(str::trim)
            .find(|line| !line.is_empty())
            .unwrap_or(""),
    };
    let (prefix, target) = line
        .split_once('|')
        .ok_or_else(|| SelfEditError::MissingSeparator(clip(line)))?;
    let prefix = prefix.trim().to_string();
    let target = target.trim().to_string();
    if prefix.is_empty() || target.is_empty() {
        return Err(SelfEditError::MissingSeparator(clip(line)));
    }
    if undecidable && !is_unknown_answer(&target) {
        return Err(SelfEditError::MissingUnknown(target));
    }
    Ok(CompletionItem { prefix, target })
}

// ---------- self-edit dataset ----------

#[derive(Debug, Clone, Copy)]
pub struct DatasetOptions {
    pub questions_per_event: usize,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            questions_per_event: 5,
        }
    }
}

/// A training answer recites the event before committing to its reply, so
/// tuning on it teaches the recitation along with the fact.
pub fn compose_answer(paragraph: &str, answer: &str) -> String {
    format!("This question is related to the following information: {paragraph} Answer: {answer}")
}

/// Builds fine-tuning data by having the model quiz itself about each
/// event and answer its own questions with the event in context. Events
/// that fail any stage are skipped with a reason rather than aborting the
/// build; a build where every event fails is an error.
pub fn build_selfedit_dataset(
    client: &dyn LmClient,
    events: &[EventEdit],
    options: &DatasetOptions,
) -> Result<DatasetBuild, SelfEditError> {
    if events.is_empty() {
        return Err(SelfEditError::EmptyEvents);
    }
    if options.questions_per_event == 0 {
        return Err(SelfEditError::NoQuestions);
    }
    let mut instances = Vec::new();
    let mut skipped = Vec::new();
    for event in events {
        match event_instances(client, event, options.questions_per_event) {
            Ok(mut batch) => instances.append(&mut batch),
            Err(err) => skipped.push(SkippedEvent {
                id: event.id.clone(),
                reason: err.to_string(),
            }),
        }
    }
    if instances.is_empty() {
        let first = skipped
            .first()
            .map(|skip| format!("{}: {}", skip.id, skip.reason))
            .unwrap_or_default();
        return Err(SelfEditError::AllFailed(first));
    }
    Ok(DatasetBuild { instances, skipped })
}

fn event_instances(
    client: &dyn LmClient,
    event: &EventEdit,
    count: usize,
) -> Result<Vec<TrainingInstance>, SelfEditError> {
    let prompt = render_self_prompt(count, &event.paragraph);
    let params = SampleParams {
        temperature: 0.0,
        max_tokens: 512,
    };
    let (text, _) = client.sample(&prompt, &params)?;
    let questions = parse_numbered_block(&text, count)?;

    let mut instances = Vec::with_capacity(count);
    for question in questions {
        let answer_prompt = render_answer_prompt(&event.paragraph, &question);
        let params = SampleParams {
            temperature: 0.0,
            max_tokens: 256,
        };
        let (raw, _) = client.sample(&answer_prompt, &params)?;
        let trimmed = raw.trim();
        let answer = trimmed
            .strip_prefix("Answer:")
            .map(str::trim)
            .unwrap_or(trimmed);
        if answer.is_empty() {
            return Err(SelfEditError::EmptyAnswer(question));
        }
        instances.push(TrainingInstance {
            question: question.clone(),
            answer: compose_answer(&event.paragraph, answer),
            edit_id: event.id.clone(),
            loss_mask: LossMask::Question,
        });
    }
    Ok(instances)
}

fn parse_numbered_block(text: &str, expected: usize) -> Result<Vec<String>, SelfEditError> {
    let mut questions: BTreeMap<usize, String> = BTreeMap::new();
    let mut last: Option<usize> = None;
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            last = None;
            continue;
        }
        if questions.is_empty() && matches!(line.trim_end_matches(':'), "Questions" | "Output") {
            continue;
        }
        if let Some((index, value)) = numbered_line(line, "Question") {
            questions.insert(index, value.to_string());
            last = Some(index);
        } else if let Some(i) = last {
            let buffer = questions.get_mut(&i).expect("continuation follows entry");
            buffer.push(' ');
            buffer.push_str(line);
        } else {
            return Err(SelfEditError::UnrecognizedLine(line.to_string()));
        }
    }
    let complete = (1..=expected).filter(|i| questions.contains_key(i)).count();
    if complete != expected || questions.len() != expected {
        return Err(SelfEditError::WrongCardinality {
            expected,
            found: questions.len(),
        });
    }
    Ok((1..=expected)
        .map(|index| questions.remove(&index).expect("checked complete"))
        .collect())
}

// ---------- abstention scoring ----------

/// Splits a tuned model's reply from its recitation: everything after the
/// last "Answer:" marker is the reply. Without a marker the text passes
/// through unchanged.
pub fn strip_recitation(answer: &str) -> StrippedAnswer {
    match answer.rfind("Answer:") {
        Some(at) => StrippedAnswer {
            text: answer[at + "Answer:".len()..].trim().to_string(),
            had_marker: true,
        },
        None => StrippedAnswer {
            text: answer.to_string(),
            had_marker: false,
        },
    }
}

fn normalize_abstention(text: &str) -> String {
    let lowered = text.trim().replace('\u{2019}', "'").to_lowercase();
    lowered
        .trim_end_matches(['.', '!', '?', ','])
        .trim()
        .to_string()
}

/// Whether a reply abstains, up to case, curly apostrophes, surrounding
/// whitespace, and trailing punctuation.
pub fn is_unknown_answer(text: &str) -> bool {
    matches!(
        normalize_abstention(text).as_str(),
        "i don't know" | "unknown"
    )
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Scores abstention quality: a prediction is positive when it abstains,
/// gold-positive when the question is undecidable. Ids must match
/// one-to-one between predictions and gold labels.
pub fn score_unknown(
    predictions: &[(String, String)],
    gold: &[(String, bool)],
) -> Result<UnknownScore, SelfEditError> {
    let mut labels: BTreeMap<&str, bool> = BTreeMap::new();
    for (id, undecidable) in gold {
        if labels.insert(id.as_str(), *undecidable).is_some() {
            return Err(SelfEditError::IdMismatch(format!(
                "duplicate gold id {id:?}"
            )));
        }
    }
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let (mut tp, mut fp, mut missed) = (0usize, 0usize, 0usize);
    for (id, text) in predictions {
        if !seen.insert(id.as_str()) {
            return Err(SelfEditError::IdMismatch(format!(
                "duplicate predicted id {id:?}"
            )));
        }
        let Some(&undecidable) = labels.get(id.as_str()) else {
            return Err(SelfEditError::IdMismatch(format!(
                "predicted id {id:?} has no gold label"
            )));
        };
        let abstained = is_unknown_answer(&strip_recitation(text).text);
        match (abstained, undecidable) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => missed += 1,
            (false, false) => {}
        }
    }
    if seen.len() != labels.len() {
        let missing: Vec<&str> = labels
            .keys()
            .filter(|id| !seen.contains(*id))
            .copied()
            .collect();
        return Err(SelfEditError::IdMismatch(format!(
            "gold ids without predictions: {missing:?}"
        )));
    }
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + missed > 0 {
        tp as f64 / (tp + missed) as f64
    } else {
        0.0
    };
    Ok(UnknownScore {
        precision,
        recall,
        f1: f1_score(precision, recall),
    })
}

// ---------- benchmark io ----------

/// Reads benchmark edits from JSONL text: one object per line, blank lines
/// skipped, every field required and nonempty.
pub fn read_input_edits(text: &str) -> Result<Vec<InputEdit>, SelfEditError> {
    let mut edits = Vec::new();
    for (offset, raw) in text.lines().enumerate() {
        let line = offset + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let edit: InputEdit =
            serde_json::from_str(raw).map_err(|err| SelfEditError::InvalidInput {
                line,
                reason: err.to_string(),
            })?;
        let fields = [
            ("id", &edit.id),
            ("subject", &edit.subject),
            ("relation", &edit.relation),
            ("object", &edit.object),
            ("past", &edit.past),
            ("latest", &edit.latest),
        ];
        for (field, value) in fields {
            if value.trim().is_empty() {
                return Err(SelfEditError::InvalidInput {
                    line,
                    reason: format!("field {field:?} is empty"),
                });
            }
        }
        edits.push(edit);
    }
    Ok(edits)
}

/// Serializes records as JSONL with a trailing newline; field order follows
/// the struct, so output is byte-stable.
pub fn write_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}





#[cfg(test)]
mod completion_tests {
    use super::*;
    use crate::lmprobe::MockLm;

    fn complete_with(pair: &QAPair, reply: &str) -> Result<CompletionItem, SelfEditError> {
        let prompt = render_completion_prompt(&pair.question, &pair.answer);
        let fixture = serde_json::json!({
            "samples": [{"prompt": prompt, "text": reply, "logprobs": [-0.1]}]
        });
        let mock = MockLm::from_json(&fixture.to_string()).expect("fixture parses");
        qa_to_completion(&mock, pair)
    }

    fn violin_pair() -> QAPair {
        QAPair {
            question: "What instrument did Toko Yasuda play until 2023?".to_string(),
            answer: "Toko Yasuda played the violin until 2023.".to_string(),
            undecidable: false,
        }
    }

    #[test]
    fn the_pipe_splits_prefix_from_target() {
        let item = complete_with(
            &violin_pair(),
            "Text Completion: The instrument that Toko Yasuda plays until 2023 is the | violin",
        )
        .expect("parses");
        assert_eq!(
            item.prefix,
            "The instrument that Toko Yasuda plays until 2023 is the"
        );
        assert_eq!(item.target, "violin");
    }

    #[test]
    fn a_bare_line_without_the_marker_still_parses() {
        let item = complete_with(
            &violin_pair(),
            "The time that Toko Yasuda started playing the piano is | 2024",
        )
        .expect("parses");
        assert_eq!(item.target, "2024");
    }

    #[test]
    fn a_missing_pipe_is_an_error() {
        assert!(matches!(
            complete_with(&violin_pair(), "Text Completion: no separator here"),
            Err(SelfEditError::MissingSeparator(_))
        ));
    }

    #[test]
    fn an_undecidable_pair_must_complete_to_unknown() {
        let pair = QAPair {
            question: "Does Antonella Costa love her home country?".to_string(),
            answer: "I don't know.".to_string(),
            undecidable: true,
        };
        let item = complete_with(
            &pair,
            "Text Completion: Whether Antonella Costa love her home country is | unknown",
        )
        .expect("parses");
        assert_eq!(item.target, "unknown");
        let pair_bad = QAPair {
            undecidable: true,
            ..violin_pair()
        };
        assert!(matches!(
            complete_with(
                &pair_bad,
                "Text Completion: The instrument that Toko Yasuda plays until 2023 is the | violin"
            ),
            Err(SelfEditError::MissingUnknown(target)) if target == "violin"
        ));
    }
}

#[cfg(test)]
mod dataset_tests {
    use super::*;
    use crate::lmprobe::MockLm;

    pub(super) const TOKO_PARAGRAPH: &str = "After being a professional violinist until 2023, \
Toko Yasuda discovered her passion for playing the piano in 2024. She started taking piano \
lessons and dedicated countless hours to practice and master the instrument. With her \
dedication and hard work, Toko Yasuda is now preparing to showcase her talent by performing \
a solo piano concert in 2025.";

    pub(super) const TOKO_QA: [(&str, &str); 5] = [
        (
            "What year did Toko Yasuda discover her passion for playing the piano?",
            "2024.",
        ),
        (
            "How many hours did Toko Yasuda dedicate to practicing and mastering the piano?",
            "I don't know",
        ),
        (
            "In what year is Toko Yasuda preparing to showcase her talent by performing a solo piano concert?",
            "2025.",
        ),
        (
            "What was Toko Yasuda's profession before she started playing the piano?",
            "Toko Yasuda was a professional violinist before she started playing the piano.",
        ),
        (
            "How long did Toko Yasuda play the violin professionally before discovering her passion for the piano?",
            "Toko Yasuda played the violin professionally for 10 years before discovering her passion for the piano in 2024.",
        ),
    ];

    pub(super) fn toko_event() -> EventEdit {
        EventEdit {
            id: "toko-piano".to_string(),
            recall: "Toko Yasuda plays the violin until 2023".to_string(),
            triples: vec![TripleEvent {
                subject: "Toko Yasuda".to_string(),
                relation: "started playing".to_string(),
                object: "the piano".to_string(),
                qualifier: Some("in 2024".to_string()),
            }],
            paragraph: TOKO_PARAGRAPH.to_string(),
        }
    }

    pub(super) fn toko_fixture() -> serde_json::Value {
        let questions_reply = TOKO_QA
            .iter()
            .enumerate()
            .map(|(i, (question, _))| format!("Question {}: {question}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let mut samples = vec![serde_json::json!({
            "prompt": render_self_prompt(5, TOKO_PARAGRAPH),
            "text": questions_reply,
            "logprobs": [-0.1],
        })];
        for (question, answer) in TOKO_QA {
            samples.push(serde_json::json!({
                "prompt": render_answer_prompt(TOKO_PARAGRAPH, question),
                "text": answer,
                "logprobs": [-0.1],
            }));
        }
        serde_json::json!({ "samples": samples })
    }

    #[test]
    fn one_event_yields_one_instance_per_question() {
        let mock = MockLm::from_json(&toko_fixture().to_string()).expect("fixture parses");
        let build = build_selfedit_dataset(&mock, &[toko_event()], &DatasetOptions::default())
            .expect("builds");
        assert_eq!(build.instances.len(), 5);
        assert!(build.skipped.is_empty());

        let first = &build.instances[0];
        assert_eq!(
            first.question,
            "What year did Toko Yasuda discover her passion for playing the piano?"
        );
        assert_eq!(first.answer, compose_answer(TOKO_PARAGRAPH, "2024."));
        assert!(first.answer.ends_with("Answer: 2024."));
        assert!(first.answer.contains(TOKO_PARAGRAPH));
        assert_eq!(first.edit_id, "toko-piano");

        // The model's own abstention survives composition untouched.
        assert!(build.instances[1].answer.ends_with("Answer: I don't know"));
        assert!(is_unknown_answer(
            &strip_recitation(&build.instances[1].answer).text
        ));
    }

    #[test]
    fn a_failing_event_is_skipped_and_the_rest_survive() {
        let mut fixture = toko_fixture();
        let broken = EventEdit {
            id: "broken".to_string(),
            paragraph: "A paragraph with no fixture entries.".to_string(),
            ..toko_event()
        };
        fixture["samples"]
            .as_array_mut()
            .expect("samples array")
            .push(serde_json::json!({
                "prompt": render_self_prompt(5, "A paragraph with no fixture entries."),
                "text": "Question 1: Only one?",
                "logprobs": [-0.1],
            }));
        let mock = MockLm::from_json(&fixture.to_string()).expect("fixture parses");
        let build = build_selfedit_dataset(
            &mock,
            &[toko_event(), broken],
            &DatasetOptions::default(),
        )
        .expect("builds");
        assert_eq!(build.instances.len(), 5);
        assert_eq!(build.skipped.len(), 1);
        assert_eq!(build.skipped[0].id, "broken");
        assert!(build.skipped[0].reason.contains("expected 5"));
    }

    #[test]
    fn every_event_failing_is_an_error() {
        let mock = MockLm::from_json("{}").expect("fixture parses");
        assert!(matches!(
            build_selfedit_dataset(&mock, &[toko_event()], &DatasetOptions::default()),
            Err(SelfEditError::AllFailed(_))
        ));
        assert!(matches!(
            build_selfedit_dataset(&mock, &[], &DatasetOptions::default()),
            Err(SelfEditError::EmptyEvents)
        ));
    }

    #[test]
    fn training_jsonl_is_byte_stable() {
        let instance = TrainingInstance {
            question: "Q?".to_string(),
            answer: "A.".to_string(),
            edit_id: "e1".to_string(),
            loss_mask: LossMask::Question,
        };
        assert_eq!(
            write_jsonl(&[instance]),
            "{\"question\":\"Q?\",\"answer\":\"A.\",\"edit_id\":\"e1\",\"loss_mask\":\"question\"}\n"
        );
    }
}
