//! Semantic checks over parsed programs, producing repair-loop diagnostics.
//!
//! All violations are reported in one pass, sorted by line then rule.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use crate::ast::{is_identifier, ArgClass, ArgValue, OperatorKind, Program, Statement, FINAL_RESULT};
use crate::parser::{parse_program, ParseError, ParseErrorKind};

/// Upper bound on rendered feedback, in characters.
pub const FEEDBACK_BUDGET: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Rule {
    SyntaxForm,
    UseBeforeDef,
    Redefinition,
    ArgType,
    ArgDomain,
    MissingArg,
    ExtraArg,
    UnknownOperatorArgs,
    FinalLineForm,
    EarlyResult,
    MissingResult,
}

impl Rule {
    pub const ALL: [Rule; 11] = [
        Rule::SyntaxForm,
        Rule::UseBeforeDef,
        Rule::Redefinition,
        Rule::ArgType,
        Rule::ArgDomain,
        Rule::MissingArg,
        Rule::ExtraArg,
        Rule::UnknownOperatorArgs,
        Rule::FinalLineForm,
        Rule::EarlyResult,
        Rule::MissingResult,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::SyntaxForm => "SyntaxForm",
            Rule::UseBeforeDef => "UseBeforeDef",
            Rule::Redefinition => "Redefinition",
            Rule::ArgType => "ArgType",
            Rule::ArgDomain => "ArgDomain",
            Rule::MissingArg => "MissingArg",
            Rule::ExtraArg => "ExtraArg",
            Rule::UnknownOperatorArgs => "UnknownOperatorArgs",
            Rule::FinalLineForm => "FinalLineForm",
            Rule::EarlyResult => "EarlyResult",
            Rule::MissingResult => "MissingResult",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Diagnostic {
    pub line: u32,
    pub rule: Rule,
    pub message: String,
    pub hint: String,
}

impl Diagnostic {
    fn new(line: u32, rule: Rule, message: String, hint: impl Into<String>) -> Self {
        Diagnostic { line, rule, message, hint: hint.into() }
    }
}

impl From<&ParseError> for Diagnostic {
    fn from(e: &ParseError) -> Self {
        let (rule, hint) = match e.kind {
            ParseErrorKind::UnknownOperator => (
                Rule::UnknownOperatorArgs,
                format!("use one of: {}", operator_list()),
            ),
            ParseErrorKind::EmptyProgram => (
                Rule::SyntaxForm,
                "write one statement per line, ending with FINAL_RESULT = RESULT(object=VAR)".to_string(),
            ),
            ParseErrorKind::MalformedAssignment | ParseErrorKind::BadArgumentSyntax => (
                Rule::SyntaxForm,
                "every line must look like VAR = OP(arg=value, ...)".to_string(),
            ),
        };
        Diagnostic { line: e.line, rule, message: format!("column {}: {}", e.column, e.message), hint }
    }
}

fn operator_list() -> String {
    let mut s = String::new();
    for (i, k) in OperatorKind::ALL.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(k.name());
    }
    s
}

/// Checks every rule family and returns all violations; empty means valid.
pub fn check_program(p: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut defined: BTreeSet<&str> = BTreeSet::new();
    let last = p.statements.len().checked_sub(1);

    for (idx, st) in p.statements.iter().enumerate() {
        let is_last = Some(idx) == last;
        let line = st.source_line;

        if !is_identifier(&st.target_var) {
            diags.push(Diagnostic::new(
                line,
                Rule::SyntaxForm,
                format!("'{}' is not a valid variable name", st.target_var),
                "variable names use letters, digits and '_' and do not start with a digit",
            ));
        }

        if is_last {
            check_final_line(st, &mut diags);
        } else {
            if st.op == OperatorKind::Result {
                diags.push(Diagnostic::new(
                    line,
                    Rule::EarlyResult,
                    "RESULT may only appear on the last line".to_string(),
                    "remove this RESULT and keep a single FINAL_RESULT = RESULT(object=VAR) at the end",
                ));
            }
            if st.target_var == FINAL_RESULT {
                diags.push(Diagnostic::new(
                    line,
                    Rule::FinalLineForm,
                    format!("{FINAL_RESULT} is reserved for the last line"),
                    "choose another name for this intermediate variable",
                ));
            }
        }

        check_args(st, &defined, &mut diags);

        if defined.contains(st.target_var.as_str()) {
            diags.push(Diagnostic::new(
                line,
                Rule::Redefinition,
                format!("variable '{}' is already defined", st.target_var),
                "give every statement a fresh variable name",
            ));
        }
        defined.insert(&st.target_var);
    }

    if p.statements.is_empty() {
        diags.push(Diagnostic::new(
            1,
            Rule::MissingResult,
            "program has no statements".to_string(),
            "end the program with FINAL_RESULT = RESULT(object=VAR)",
        ));
    }

    diags.sort_by_key(|d| (d.line, d.rule));
    diags
}

fn check_final_line(st: &Statement, diags: &mut Vec<Diagnostic>) {
    let line = st.source_line;
    if st.op != OperatorKind::Result {
        diags.push(Diagnostic::new(
            line,
            Rule::MissingResult,
            "program does not end with a RESULT statement".to_string(),
            "add FINAL_RESULT = RESULT(object=VAR) as the last line, where VAR is the answer variable",
        ));
    } else if st.target_var != FINAL_RESULT {
        diags.push(Diagnostic::new(
            line,
            Rule::FinalLineForm,
            format!("last line assigns RESULT to '{}' instead of {FINAL_RESULT}", st.target_var),
            "write the last line as FINAL_RESULT = RESULT(object=VAR)",
        ));
    }
}

fn check_args(st: &Statement, defined: &BTreeSet<&str>, diags: &mut Vec<Diagnostic>) {
    let line = st.source_line;
    let op = st.op;
    for spec in op.schema() {
        let Some(value) = st.args.get(spec.name) else {
            diags.push(Diagnostic::new(
                line,
                Rule::MissingArg,
                format!("{op} is missing required argument '{}'", spec.name),
                format!("{op} takes: {}", signature(op)),
            ));
            continue;
        };
        match (spec.class, value) {
            (ArgClass::VariableRef, ArgValue::VariableRef(name)) => {
                if !is_identifier(name) {
                    diags.push(Diagnostic::new(
                        line,
                        Rule::SyntaxForm,
                        format!("'{name}' is not a valid variable name"),
                        "variable names use letters, digits and '_'",
                    ));
                } else if !defined.contains(name.as_str()) {
                    diags.push(Diagnostic::new(
                        line,
                        Rule::UseBeforeDef,
                        format!("'{}' refers to variable '{name}', which is not defined on an earlier line", spec.name),
                        "only reference variables assigned on previous lines",
                    ));
                }
            }
            (ArgClass::StringLiteral, ArgValue::StringLiteral(s)) => {
                if s.trim().is_empty() {
                    diags.push(Diagnostic::new(
                        line,
                        Rule::ArgDomain,
                        format!("'{}' must not be an empty string", spec.name),
                        "put the noun phrase or description in quotes",
                    ));
                }
            }
            (ArgClass::PositiveInteger, ArgValue::Number(n)) => {
                if *n < 1 {
                    diags.push(Diagnostic::new(
                        line,
                        Rule::ArgDomain,
                        format!("'{}' must be a positive integer, got {n}", spec.name),
                        "ranks start at 1",
                    ));
                }
            }
            (ArgClass::Criteria(set), ArgValue::Criteria(c)) => {
                if c.set() != set {
                    diags.push(Diagnostic::new(
                        line,
                        Rule::ArgDomain,
                        format!("'{c}' is not a valid {op} criteria"),
                        format!("criteria must be one of: {}", members(set)),
                    ));
                }
            }
            (ArgClass::Criteria(set), ArgValue::StringLiteral(s)) => {
                diags.push(Diagnostic::new(
                    line,
                    Rule::ArgDomain,
                    format!("'{s}' is not a valid {op} criteria"),
                    format!("criteria must be one of: {}", members(set)),
                ));
            }
            (class, value) => {
                diags.push(Diagnostic::new(
                    line,
                    Rule::ArgType,
                    format!("'{}' expects {}, got {}", spec.name, class_phrase(class), value.class_name()),
                    type_hint(class),
                ));
            }
        }
    }
    for key in st.args.keys() {
        if op.arg_spec(key).is_none() {
            diags.push(Diagnostic::new(
                line,
                Rule::ExtraArg,
                format!("{op} has no argument named '{key}'"),
                format!("{op} takes: {}", signature(op)),
            ));
        }
    }
}

fn class_phrase(class: ArgClass) -> &'static str {
    match class {
        ArgClass::VariableRef => "a variable",
        ArgClass::StringLiteral => "a quoted string",
        ArgClass::PositiveInteger => "a positive integer",
        ArgClass::Criteria(_) => "a criteria keyword",
    }
}

fn type_hint(class: ArgClass) -> String {
    match class {
        ArgClass::VariableRef => "pass the name of an earlier variable, without quotes".to_string(),
        ArgClass::StringLiteral => "wrap the text in single quotes".to_string(),
        ArgClass::PositiveInteger => "write the number without quotes, e.g. rank=1".to_string(),
        ArgClass::Criteria(set) => format!("criteria must be one of: {}", members(set)),
    }
}

fn members(set: crate::ast::CriteriaSet) -> String {
    let mut s = String::new();
    for (i, c) in set.members().iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(c.as_str());
    }
    s
}

fn signature(op: OperatorKind) -> String {
    let mut s = String::new();
    for (i, a) in op.schema().iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(a.name);
    }
    s
}

/// A program that passed every check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidProgram(Program);

impl ValidProgram {
    pub fn program(&self) -> &Program {
        &self.0
    }

    pub fn into_inner(self) -> Program {
        self.0
    }
}

impl core::ops::Deref for ValidProgram {
    type Target = Program;
    fn deref(&self) -> &Program {
        &self.0
    }
}

pub fn validate_program(p: Program) -> Result<ValidProgram, Vec<Diagnostic>> {
    let diags = check_program(&p);
    if diags.is_empty() {
        Ok(ValidProgram(p))
    } else {
        Err(diags)
    }
}

/// Parse then validate; parse failures become `SyntaxForm` /
/// `UnknownOperatorArgs` diagnostics.
pub fn check_text(text: &str) -> Result<ValidProgram, Vec<Diagnostic>> {
    match parse_program(text) {
        Ok(p) => validate_program(p),
        Err(errs) => {
            let mut diags: Vec<Diagnostic> = errs.iter().map(Diagnostic::from).collect();
            diags.sort_by_key(|d| (d.line, d.rule));
            Err(diags)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("feedback requested with no diagnostics")]
pub struct NoDiagnostics;

/// Renders the correction block sent back to the model.
///
/// Hints are dropped first when the block would exceed [`FEEDBACK_BUDGET`];
/// after that the quoted program is shortened, and finally the text is cut.
pub fn render_feedback(diags: &[Diagnostic], original_text: &str) -> Result<String, NoDiagnostics> {
    if diags.is_empty() {
        return Err(NoDiagnostics);
    }
    let program = original_text.trim_end();
    let full = render(diags, program, true);
    if full.chars().count() <= FEEDBACK_BUDGET {
        return Ok(full);
    }
    let bare = render(diags, program, false);
    let over = bare.chars().count().saturating_sub(FEEDBACK_BUDGET);
    if over == 0 {
        return Ok(bare);
    }
    const ELLIPSIS: &str = "\n...";
    let keep = program.chars().count().saturating_sub(over + ELLIPSIS.len());
    let mut shortened: String = program.chars().take(keep).collect();
    shortened.push_str(ELLIPSIS);
    let text = render(diags, &shortened, false);
    Ok(text.chars().take(FEEDBACK_BUDGET).collect())
}

fn render(diags: &[Diagnostic], program: &str, with_hints: bool) -> String {
    let mut out = String::new();
    out.push_str("The previous program is invalid.\nProgram:\n");
    out.push_str(program);
    out.push_str("\nErrors:\n");
    for d in diags {
        let _ = write!(out, "- line {} [{}]: {}", d.line, d.rule, d.message);
        if with_hints && !d.hint.is_empty() {
            let _ = write!(out, " Hint: {}", d.hint);
        }
        out.push('\n');
    }
    out.push_str("Rewrite the whole program so that it fixes every error.");
    out
}
