//! Program generation: prompt an LLM, extract the program from its reply,
//! validate, and feed diagnostics back until a valid program appears or the
//! iteration budget runs out.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::validator::{check_text, render_feedback, Diagnostic, ValidProgram};

const BUILTIN_TEMPLATE: &str = include_str!("../assets/prompt.txt");
const BUILTIN_EXEMPLARS: &str = include_str!("../assets/exemplars.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub query: String,
    pub program: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TemplateError {
    #[error("template lacks the {0} slot")]
    MissingSlot(&'static str),
    #[error("exemplar block {index} is malformed: {detail}")]
    MalformedExemplar { index: usize, detail: String },
    #[error("exemplar for '{query}' is not a valid program ({} diagnostics)", diagnostics.len())]
    InvalidExemplar { query: String, diagnostics: Vec<Diagnostic> },
}

/// Parses blocks of `Query: ...` followed by program lines, separated by
/// blank lines.
pub fn parse_exemplars(text: &str) -> Result<Vec<Exemplar>, TemplateError> {
    let mut out = Vec::new();
    let normalized = text.replace("\r\n", "\n");
    for (index, block) in normalized.split("\n\n").map(str::trim).filter(|b| !b.is_empty()).enumerate() {
        let (head, body) = block.split_once('\n').unwrap_or((block, ""));
        let query = head
            .strip_prefix("Query:")
            .map(str::trim)
            .filter(|q| !q.is_empty())
            .ok_or_else(|| TemplateError::MalformedExemplar { index, detail: "missing 'Query:' line".into() })?;
        if body.trim().is_empty() {
            return Err(TemplateError::MalformedExemplar { index, detail: "no program lines".into() });
        }
        out.push(Exemplar { query: query.into(), program: body.trim().into() });
    }
    Ok(out)
}

/// Prompt text with `{{exemplars}}`, `{{query}}` and `{{feedback}}` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    text: String,
    exemplars: Vec<Exemplar>,
}

impl PromptTemplate {
    /// Every exemplar program must validate.
    pub fn new(text: impl Into<String>, exemplars: Vec<Exemplar>) -> Result<Self, TemplateError> {
        let text = text.into();
        for slot in ["{{query}}", "{{feedback}}"] {
            if !text.contains(slot) {
                return Err(TemplateError::MissingSlot(slot));
            }
        }
        for ex in &exemplars {
            if let Err(diagnostics) = check_text(&ex.program) {
                return Err(TemplateError::InvalidExemplar { query: ex.query.clone(), diagnostics });
            }
        }
        Ok(PromptTemplate { text, exemplars })
    }

    /// The template and exemplars shipped with the crate.
    pub fn builtin() -> Self {
        let exemplars = parse_exemplars(BUILTIN_EXEMPLARS).expect("builtin exemplars parse");
        PromptTemplate::new(BUILTIN_TEMPLATE, exemplars).expect("builtin template is valid")
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Fills the slots. `feedback`, when present, is placed on its own
    /// lines before the program cue.
    pub fn render(&self, query: &str, feedback: Option<&str>) -> String {
        let mut shots = String::new();
        for ex in &self.exemplars {
            shots.push_str(&format!("Query: {}\nProgram:\n{}\n\n", ex.query, ex.program));
        }
        let feedback = match feedback {
            Some(f) => format!("{}\n", f.trim_end()),
            None => String::new(),
        };
        // query last so braces inside it are never treated as slots
        self.text
            .replace("{{exemplars}}", &shots)
            .replace("{{feedback}}", &feedback)
            .replace("{{query}}", query)
    }

    pub fn messages(&self, query: &str, feedback: Option<&str>) -> Vec<Message> {
        alloc::vec![Message::user(self.render(query, feedback))]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("transport error: {0}")]
pub struct TransportError(pub String);

/// Request/response chat contract: messages in, reply text out.
pub trait ChatEndpoint {
    fn complete(&mut self, messages: &[Message]) -> Result<String, TransportError>;
}

impl<T: ChatEndpoint + ?Sized> ChatEndpoint for &mut T {
    fn complete(&mut self, messages: &[Message]) -> Result<String, TransportError> {
        (**self).complete(messages)
    }
}

/// Replays canned replies in order and records every request.
#[derive(Debug, Clone, Default)]
pub struct ScriptedEndpoint {
    replies: Vec<Result<String, TransportError>>,
    next: usize,
    /// Once the script runs out, keep returning the last reply.
    pub repeat_last: bool,
    pub requests: Vec<Vec<Message>>,
}

impl ScriptedEndpoint {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedEndpoint { replies: replies.into_iter().map(|s| Ok(s.into())).collect(), ..Default::default() }
    }

    pub fn with_results(replies: Vec<Result<String, TransportError>>) -> Self {
        ScriptedEndpoint { replies, ..Default::default() }
    }

    pub fn repeating(reply: impl Into<String>) -> Self {
        ScriptedEndpoint { repeat_last: true, ..Self::new([reply]) }
    }

    pub fn calls(&self) -> usize {
        self.requests.len()
    }
}

impl ChatEndpoint for ScriptedEndpoint {
    fn complete(&mut self, messages: &[Message]) -> Result<String, TransportError> {
        self.requests.push(messages.to_vec());
        let i = if self.next < self.replies.len() {
            self.next += 1;
            self.next - 1
        } else if self.repeat_last && !self.replies.is_empty() {
            self.replies.len() - 1
        } else {
            return Err(TransportError("script exhausted".into()));
        };
        self.replies[i].clone()
    }
}

fn is_statement_head(line: &str) -> bool {
    let line = line.trim();
    let Some((lhs, rhs)) = line.split_once('=') else { return false };
    let Some((op, _)) = rhs.split_once('(') else { return false };
    crate::ast::is_identifier(lhs.trim()) && crate::ast::is_identifier(op.trim())
}

/// The first contiguous run of lines shaped like `IDENT = IDENT(...`.
/// Fences and prose around the program are dropped; `None` if no line
/// matches.
pub fn extract_program_text(reply: &str) -> Option<String> {
    let lines: Vec<&str> = reply.lines().collect();
    let start = lines.iter().position(|l| is_statement_head(l))?;
    let end = lines[start..].iter().position(|l| !is_statement_head(l)).map_or(lines.len(), |n| start + n);
    let mut text = lines[start..end].iter().map(|l| l.trim()).collect::<Vec<_>>().join("\n");
    text.push('\n');
    Some(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenOptions {
    pub max_iters: u32,
    /// Extra tries per iteration when the endpoint fails to answer.
    pub transport_retries: u32,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions { max_iters: 5, transport_retries: 2 }
    }
}

/// One round trip: the prompt sent and the reply received.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Attempt {
    pub prompt: Vec<Message>,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GenResult {
    Success { program: ValidProgram, iterations_used: u32, attempts: Vec<Attempt> },
    Failure { last_diagnostics: Vec<Diagnostic>, attempts: Vec<Attempt> },
}

impl GenResult {
    pub fn attempts(&self) -> &[Attempt] {
        match self {
            GenResult::Success { attempts, .. } | GenResult::Failure { attempts, .. } => attempts,
        }
    }

    pub fn program(&self) -> Option<&ValidProgram> {
        match self {
            GenResult::Success { program, .. } => Some(program),
            GenResult::Failure { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenError {
    #[error("max_iters must be at least 1")]
    NoIterations,
    #[error("{error} after {tries} tries")]
    Transport { error: TransportError, tries: u32, attempts: Vec<Attempt> },
}

/// Generates and validates a program for `query`. A transport failure that
/// outlasts the retry budget is reported as [`GenError::Transport`], apart
/// from validation failure.
pub fn generate_program<E: ChatEndpoint + ?Sized>(
    query: &str,
    template: &PromptTemplate,
    llm: &mut E,
    opts: GenOptions,
) -> Result<GenResult, GenError> {
    if opts.max_iters == 0 {
        return Err(GenError::NoIterations);
    }
    let mut attempts = Vec::new();
    let mut feedback: Option<String> = None;
    let mut last_diagnostics = Vec::new();
    for iteration in 1..=opts.max_iters {
        let prompt = template.messages(query, feedback.as_deref());
        let mut tries = 0;
        let reply = loop {
            tries += 1;
            match llm.complete(&prompt) {
                Ok(r) => break r,
                Err(error) if tries > opts.transport_retries => {
                    return Err(GenError::Transport { error, tries, attempts });
                }
                Err(_) => {}
            }
        };
        let text = extract_program_text(&reply).unwrap_or_else(|| reply.to_owned());
        attempts.push(Attempt { prompt, reply });
        match check_text(&text) {
            Ok(program) => return Ok(GenResult::Success { program, iterations_used: iteration, attempts }),
            Err(diags) => {
                feedback = render_feedback(&diags, &text).ok();
                last_diagnostics = diags;
            }
        }
    }
    Ok(GenResult::Failure { last_diagnostics, attempts })
}

/// Fraction of results that are failures; `None` for an empty slice.
pub fn failure_rate(results: &[GenResult]) -> Option<f64> {
    if results.is_empty() {
        return None;
    }
    let failed = results.iter().filter(|r| matches!(r, GenResult::Failure { .. })).count();
    Some(failed as f64 / results.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    const VALID: &str = "B0 = FIND(object_name='cat')\nFINAL_RESULT = RESULT(object=B0)";
    const INVALID: &str = "B0 = FIND(object_name='cat')\nFINAL_RESULT = RESULT(object=B9)";

    #[test]
    fn builtin_template_has_eight_valid_exemplars() {
        let t = PromptTemplate::builtin();
        assert_eq!(t.exemplars().len(), 8);
        let rendered = t.render("the zebra", None);
        assert!(rendered.contains("Query: the zebra\nProgram:"));
        assert!(!rendered.contains("{{"));
    }

    #[test]
    fn template_rejects_invalid_exemplar() {
        let ex = alloc::vec![Exemplar { query: "q".into(), program: INVALID.into() }];
        assert!(matches!(PromptTemplate::new("{{query}}{{feedback}}", ex), Err(TemplateError::InvalidExemplar { .. })));
        assert_eq!(PromptTemplate::new("{{query}}", Vec::new()), Err(TemplateError::MissingSlot("{{feedback}}")));
    }

    #[test]
    fn extraction_skips_prose_and_fences() {
        let reply = "Sure, here it is:\n```\nB0 = FIND(object_name='cat')\n  FINAL_RESULT = RESULT(object=B0)\n```\nB1 = FIND(object_name='x')";
        assert_eq!(extract_program_text(reply).unwrap(), "B0 = FIND(object_name='cat')\nFINAL_RESULT = RESULT(object=B0)\n");
        assert_eq!(extract_program_text("no program here"), None);
        assert!(!is_statement_head("a == b(c)"));
        assert!(!is_statement_head("see `x = f(y)` below"));
    }

    #[test]
    fn happy_path() {
        let mut llm = ScriptedEndpoint::new([VALID]);
        let r = generate_program("cat", &PromptTemplate::builtin(), &mut llm, GenOptions::default()).unwrap();
        assert!(matches!(r, GenResult::Success { iterations_used: 1, .. }));
    }

    #[test]
    fn repair_carries_diagnostics() {
        let t = PromptTemplate::builtin();
        let mut llm = ScriptedEndpoint::new([INVALID, VALID]);
        let r = generate_program("cat", &t, &mut llm, GenOptions::default()).unwrap();
        assert!(matches!(r, GenResult::Success { iterations_used: 2, .. }));
        let diags = check_text(INVALID).unwrap_err();
        let fb = render_feedback(&diags, &extract_program_text(INVALID).unwrap()).unwrap();
        assert!(llm.requests[1][0].content.contains(&fb));
        assert!(!llm.requests[0][0].content.contains("invalid"));
    }

    #[test]
    fn always_invalid_fails_after_budget() {
        let mut llm = ScriptedEndpoint::repeating(INVALID);
        let r = generate_program("cat", &PromptTemplate::builtin(), &mut llm, GenOptions::default()).unwrap();
        match r {
            GenResult::Failure { attempts, last_diagnostics } => {
                assert_eq!(attempts.len(), 5);
                assert!(!last_diagnostics.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transport_retries_then_surfaces() {
        let err = || Err(TransportError("down".into()));
        let mut llm = ScriptedEndpoint::with_results(alloc::vec![err(), Ok(VALID.into())]);
        let r = generate_program("cat", &PromptTemplate::builtin(), &mut llm, GenOptions::default()).unwrap();
        assert!(matches!(r, GenResult::Success { iterations_used: 1, .. }));

        let mut llm = ScriptedEndpoint::with_results(alloc::vec![err(), err(), err()]);
        let e = generate_program("cat", &PromptTemplate::builtin(), &mut llm, GenOptions::default()).unwrap_err();
        assert!(matches!(e, GenError::Transport { tries: 3, .. }));
    }

    #[test]
    fn prompts_are_deterministic() {
        let t = PromptTemplate::builtin();
        let run = || {
            let mut llm = ScriptedEndpoint::new([INVALID, INVALID, VALID]);
            generate_program("q", &t, &mut llm, GenOptions::default()).unwrap();
            llm.requests
        };
        assert_eq!(run(), run());
    }
}
