//! Line-oriented parser and canonical serializer for program text.
//!
//! Grammar, one statement per physical line:
//!
//! ```text
//! statement := IDENT '=' IDENT '(' [ arg { ',' arg } [ ',' ] ] ')'
//! arg       := IDENT '=' value
//! value     := STRING | INTEGER | IDENT
//! STRING    := '\'' ... '\'' | '"' ... '"'      escapes: \' \" \\
//! IDENT     := [A-Za-z_][A-Za-z0-9_]*
//! ```
//!
//! Blank lines are skipped, as are `#` comment lines unless
//! [`ParseOptions::allow_comments`] is off. The parser checks shape only;
//! variable tracking and the final-line form are the validator's job.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::ast::{ArgClass, ArgValue, Criteria, OperatorKind, Program, Statement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum ParseErrorKind {
    MalformedAssignment,
    UnknownOperator,
    BadArgumentSyntax,
    EmptyProgram,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    /// 1-based.
    pub line: u32,
    /// 1-based, counted in characters.
    pub column: u32,
    pub kind: ParseErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    pub allow_comments: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { allow_comments: true }
    }
}

pub fn parse_program(text: &str) -> Result<Program, Vec<ParseError>> {
    parse_program_with(text, ParseOptions::default())
}

pub fn parse_program_with(text: &str, opts: ParseOptions) -> Result<Program, Vec<ParseError>> {
    let mut statements = Vec::new();
    let mut errors = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = (idx + 1) as u32;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim_start();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            if opts.allow_comments {
                continue;
            }
            let column = (line.chars().count() - trimmed.chars().count() + 1) as u32;
            errors.push(ParseError {
                line: line_no,
                column,
                kind: ParseErrorKind::MalformedAssignment,
                message: "comments are not allowed in strict mode".to_string(),
            });
            continue;
        }
        match LineParser::new(line, line_no).statement() {
            Ok(st) => statements.push(st),
            Err(e) => errors.push(e),
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    if statements.is_empty() {
        return Err(alloc::vec![ParseError {
            line: 1,
            column: 1,
            kind: ParseErrorKind::EmptyProgram,
            message: "program contains no statements".to_string(),
        }]);
    }
    Ok(Program { statements })
}

struct LineParser {
    chars: Vec<char>,
    pos: usize,
    line: u32,
}

impl LineParser {
    fn new(line: &str, line_no: u32) -> Self {
        LineParser { chars: line.chars().collect(), pos: 0, line: line_no }
    }

    fn err(&self, at: usize, kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column: (at + 1) as u32, kind, message: message.into() }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<String> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => self.pos += 1,
            _ => return None,
        }
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        Some(self.chars[start..self.pos].iter().collect())
    }

    fn describe_here(&self) -> String {
        match self.peek() {
            Some(c) => format!("'{c}'"),
            None => "end of line".to_string(),
        }
    }

    fn statement(mut self) -> Result<Statement, ParseError> {
        use ParseErrorKind::*;
        self.skip_ws();
        let target_at = self.pos;
        let target = self.ident().ok_or_else(|| {
            self.err(target_at, MalformedAssignment, "expected a variable name at the start of the line")
        })?;
        self.skip_ws();
        if !self.eat('=') {
            let at = self.pos;
            return Err(self.err(
                at,
                MalformedAssignment,
                format!("expected '=' after '{target}', found {}", self.describe_here()),
            ));
        }
        self.skip_ws();
        let op_at = self.pos;
        let op_name = self.ident().ok_or_else(|| {
            self.err(op_at, MalformedAssignment, format!("expected an operator call after '=', found {}", self.describe_here()))
        })?;
        let op = OperatorKind::from_name(&op_name)
            .ok_or_else(|| self.err(op_at, UnknownOperator, format!("unknown operator '{op_name}'")))?;
        self.skip_ws();
        if !self.eat('(') {
            let at = self.pos;
            return Err(self.err(at, BadArgumentSyntax, format!("expected '(' after {op_name}, found {}", self.describe_here())));
        }
        let mut args = BTreeMap::new();
        loop {
            self.skip_ws();
            if self.eat(')') {
                break;
            }
            let key_at = self.pos;
            let key = self
                .ident()
                .ok_or_else(|| self.err(key_at, BadArgumentSyntax, format!("expected an argument name, found {}", self.describe_here())))?;
            self.skip_ws();
            if !self.eat('=') {
                let at = self.pos;
                return Err(self.err(at, BadArgumentSyntax, format!("expected '=' after argument '{key}'")));
            }
            self.skip_ws();
            let value = self.value()?;
            if args.contains_key(&key) {
                return Err(self.err(key_at, BadArgumentSyntax, format!("argument '{key}' given more than once")));
            }
            args.insert(key, value);
            self.skip_ws();
            if self.eat(',') {
                continue;
            }
            if self.eat(')') {
                break;
            }
            let at = self.pos;
            return Err(self.err(at, BadArgumentSyntax, format!("expected ',' or ')', found {}", self.describe_here())));
        }
        self.skip_ws();
        if self.pos < self.chars.len() {
            let at = self.pos;
            return Err(self.err(at, BadArgumentSyntax, "unexpected text after ')'"));
        }
        coerce_criteria(op, &mut args);
        Ok(Statement { target_var: target, op, args, source_line: self.line })
    }

    fn value(&mut self) -> Result<ArgValue, ParseError> {
        use ParseErrorKind::BadArgumentSyntax;
        let at = self.pos;
        match self.peek() {
            Some(q @ ('\'' | '"')) => {
                self.pos += 1;
                let mut out = String::new();
                loop {
                    match self.peek() {
                        None => return Err(self.err(at, BadArgumentSyntax, "unterminated string literal")),
                        Some('\\') => {
                            let esc_at = self.pos;
                            self.pos += 1;
                            match self.peek() {
                                Some(c @ ('\'' | '"' | '\\')) => {
                                    out.push(c);
                                    self.pos += 1;
                                }
                                _ => return Err(self.err(esc_at, BadArgumentSyntax, "unsupported escape sequence")),
                            }
                        }
                        Some(c) if c == q => {
                            self.pos += 1;
                            return Ok(ArgValue::StringLiteral(out));
                        }
                        Some(c) => {
                            out.push(c);
                            self.pos += 1;
                        }
                    }
                }
            }
            Some(c) if c.is_ascii_digit() || c == '-' => {
                self.pos += 1;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                if self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                    return Err(self.err(at, BadArgumentSyntax, "malformed number (only integers are allowed)"));
                }
                let text: String = self.chars[at..self.pos].iter().collect();
                text.parse::<i64>()
                    .map(ArgValue::Number)
                    .map_err(|_| self.err(at, BadArgumentSyntax, format!("malformed integer '{text}'")))
            }
            Some(c) if c.is_ascii_alphabetic() || c == '_' => Ok(ArgValue::VariableRef(self.ident().unwrap_or_default())),
            _ => Err(self.err(at, BadArgumentSyntax, format!("expected a value, found {}", self.describe_here()))),
        }
    }
}

/// Criteria slots accept quoted or bare tokens in any case.
fn coerce_criteria(op: OperatorKind, args: &mut BTreeMap<String, ArgValue>) {
    for spec in op.schema() {
        if !matches!(spec.class, ArgClass::Criteria(_)) {
            continue;
        }
        if let Some(v) = args.get_mut(spec.name) {
            let token = match v {
                ArgValue::StringLiteral(s) | ArgValue::VariableRef(s) => Criteria::parse_token(s),
                _ => None,
            };
            if let Some(c) = token {
                *v = ArgValue::Criteria(c);
            }
        }
    }
}

fn write_quoted(out: &mut String, s: &str) {
    out.push('\'');
    for c in s.chars() {
        if c == '\'' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('\'');
}

fn write_value(out: &mut String, v: &ArgValue) {
    match v {
        ArgValue::VariableRef(name) => out.push_str(name),
        ArgValue::StringLiteral(s) => write_quoted(out, s),
        ArgValue::Number(n) => {
            let _ = write!(out, "{n}");
        }
        ArgValue::Criteria(c) => write_quoted(out, c.as_str()),
    }
}

/// Canonical single-line form of one statement; arguments in schema order,
/// then any non-schema arguments by name.
pub fn serialize_statement(st: &Statement) -> String {
    let mut out = String::new();
    let _ = write!(out, "{} = {}(", st.target_var, st.op.name());
    let schema = st.op.schema();
    let ordered = schema
        .iter()
        .filter_map(|spec| st.args.get_key_value(spec.name))
        .chain(st.args.iter().filter(|(k, _)| st.op.arg_spec(k).is_none()));
    for (i, (k, v)) in ordered.enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(k);
        out.push('=');
        write_value(&mut out, v);
    }
    out.push(')');
    out
}

pub fn serialize_program(p: &Program) -> String {
    let mut out = String::new();
    for st in &p.statements {
        out.push_str(&serialize_statement(st));
        out.push('\n');
    }
    out
}
