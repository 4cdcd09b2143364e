//! Typed syntax for operator programs.
//!
//! A program is a flat list of assignments `VAR = OP(arg=value, ...)` ending in
//! `FINAL_RESULT = RESULT(object=VAR)`. Every operator has a closed argument
//! schema; [`OperatorKind::schema`] is the single place those schemas live.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Reserved name of the variable bound by the terminating statement.
pub const FINAL_RESULT: &str = "FINAL_RESULT";

/// The closed operator set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum OperatorKind {
    Find,
    Locate,
    Order,
    AbsoluteDepth,
    Size,
    Property,
    FindDirection,
    FindNear,
    FindInside,
    RelativeDepth,
    Result,
}

/// Closed vocabularies for `criteria` arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CriteriaSet {
    Direction,
    Depth,
    Size,
}

/// What kind of value an argument slot accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgClass {
    VariableRef,
    StringLiteral,
    PositiveInteger,
    Criteria(CriteriaSet),
}

/// One named slot in an operator schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArgSpec {
    pub name: &'static str,
    pub class: ArgClass,
}

const fn arg(name: &'static str, class: ArgClass) -> ArgSpec {
    ArgSpec { name, class }
}

use ArgClass::{Criteria as Crit, PositiveInteger, StringLiteral, VariableRef};

const FIND_SCHEMA: &[ArgSpec] = &[arg("object_name", StringLiteral)];
const LOCATE_SCHEMA: &[ArgSpec] = &[arg("object", VariableRef), arg("position", StringLiteral)];
const ORDER_SCHEMA: &[ArgSpec] = &[
    arg("object", VariableRef),
    arg("criteria", Crit(CriteriaSet::Direction)),
    arg("rank", PositiveInteger),
];
const ABSOLUTE_DEPTH_SCHEMA: &[ArgSpec] =
    &[arg("object", VariableRef), arg("criteria", Crit(CriteriaSet::Depth))];
const SIZE_SCHEMA: &[ArgSpec] = &[arg("object", VariableRef), arg("criteria", Crit(CriteriaSet::Size))];
const PROPERTY_SCHEMA: &[ArgSpec] = &[arg("object", VariableRef), arg("attribute", StringLiteral)];
const FIND_DIRECTION_SCHEMA: &[ArgSpec] = &[
    arg("object", VariableRef),
    arg("reference_object", VariableRef),
    arg("criteria", Crit(CriteriaSet::Direction)),
];
const PAIR_SCHEMA: &[ArgSpec] = &[arg("object", VariableRef), arg("reference_object", VariableRef)];
const RELATIVE_DEPTH_SCHEMA: &[ArgSpec] = &[
    arg("object", VariableRef),
    arg("reference_object", VariableRef),
    arg("criteria", Crit(CriteriaSet::Depth)),
];
const RESULT_SCHEMA: &[ArgSpec] = &[arg("object", VariableRef)];

impl OperatorKind {
    pub const ALL: [OperatorKind; 11] = [
        OperatorKind::Find,
        OperatorKind::Locate,
        OperatorKind::Order,
        OperatorKind::AbsoluteDepth,
        OperatorKind::Size,
        OperatorKind::Property,
        OperatorKind::FindDirection,
        OperatorKind::FindNear,
        OperatorKind::FindInside,
        OperatorKind::RelativeDepth,
        OperatorKind::Result,
    ];

    /// Argument schema, in canonical serialization order.
    pub fn schema(self) -> &'static [ArgSpec] {
        match self {
            OperatorKind::Find => FIND_SCHEMA,
            OperatorKind::Locate => LOCATE_SCHEMA,
            OperatorKind::Order => ORDER_SCHEMA,
            OperatorKind::AbsoluteDepth => ABSOLUTE_DEPTH_SCHEMA,
            OperatorKind::Size => SIZE_SCHEMA,
            OperatorKind::Property => PROPERTY_SCHEMA,
            OperatorKind::FindDirection => FIND_DIRECTION_SCHEMA,
            OperatorKind::FindNear | OperatorKind::FindInside => PAIR_SCHEMA,
            OperatorKind::RelativeDepth => RELATIVE_DEPTH_SCHEMA,
            OperatorKind::Result => RESULT_SCHEMA,
        }
    }

    pub fn arg_spec(self, name: &str) -> Option<&'static ArgSpec> {
        self.schema().iter().find(|a| a.name == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Find => "FIND",
            OperatorKind::Locate => "LOCATE",
            OperatorKind::Order => "ORDER",
            OperatorKind::AbsoluteDepth => "ABSOLUTE_DEPTH",
            OperatorKind::Size => "SIZE",
            OperatorKind::Property => "PROPERTY",
            OperatorKind::FindDirection => "FIND_DIRECTION",
            OperatorKind::FindNear => "FIND_NEAR",
            OperatorKind::FindInside => "FIND_INSIDE",
            OperatorKind::RelativeDepth => "RELATIVE_DEPTH",
            OperatorKind::Result => "RESULT",
        }
    }

    /// Exact (case-sensitive) lookup by operator name.
    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Tokens accepted by `criteria` arguments. Stored lowercase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Criteria {
    Left,
    Right,
    Top,
    Bottom,
    Front,
    Behind,
    Big,
    Small,
}

impl Criteria {
    pub const ALL: [Criteria; 8] = [
        Criteria::Left,
        Criteria::Right,
        Criteria::Top,
        Criteria::Bottom,
        Criteria::Front,
        Criteria::Behind,
        Criteria::Big,
        Criteria::Small,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criteria::Left => "left",
            Criteria::Right => "right",
            Criteria::Top => "top",
            Criteria::Bottom => "bottom",
            Criteria::Front => "front",
            Criteria::Behind => "behind",
            Criteria::Big => "big",
            Criteria::Small => "small",
        }
    }

    /// Case-insensitive token lookup across every vocabulary.
    pub fn parse_token(text: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.as_str().eq_ignore_ascii_case(text))
    }

    pub fn set(self) -> CriteriaSet {
        match self {
            Criteria::Left | Criteria::Right | Criteria::Top | Criteria::Bottom => CriteriaSet::Direction,
            Criteria::Front | Criteria::Behind => CriteriaSet::Depth,
            Criteria::Big | Criteria::Small => CriteriaSet::Size,
        }
    }
}

impl CriteriaSet {
    pub fn members(self) -> &'static [Criteria] {
        match self {
            CriteriaSet::Direction => &[Criteria::Left, Criteria::Right, Criteria::Top, Criteria::Bottom],
            CriteriaSet::Depth => &[Criteria::Front, Criteria::Behind],
            CriteriaSet::Size => &[Criteria::Big, Criteria::Small],
        }
    }
}

impl fmt::Display for Criteria {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An argument value as written in program text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArgValue {
    VariableRef(String),
    StringLiteral(String),
    Number(i64),
    Criteria(Criteria),
}

impl ArgValue {
    pub fn class_name(&self) -> &'static str {
        match self {
            ArgValue::VariableRef(_) => "variable",
            ArgValue::StringLiteral(_) => "string",
            ArgValue::Number(_) => "number",
            ArgValue::Criteria(_) => "criteria",
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            ArgValue::VariableRef(v) => Some(v),
            _ => None,
        }
    }
}

/// `[A-Za-z_][A-Za-z0-9_]*`
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub target_var: String,
    pub op: OperatorKind,
    /// Keyed by argument name; equality does not depend on written order.
    pub args: BTreeMap<String, ArgValue>,
    /// 1-based line in the source text.
    pub source_line: u32,
}

impl Statement {
    pub fn new(target_var: impl Into<String>, op: OperatorKind, source_line: u32) -> Self {
        Statement { target_var: target_var.into(), op, args: BTreeMap::new(), source_line }
    }

    pub fn with_arg(mut self, name: impl Into<String>, value: ArgValue) -> Self {
        self.args.insert(name.into(), value);
        self
    }

    pub fn arg(&self, name: &str) -> Option<&ArgValue> {
        self.args.get(name)
    }

    /// Variable names this statement reads, in schema order.
    pub fn referenced_vars(&self) -> impl Iterator<Item = &str> {
        self.args.values().filter_map(ArgValue::as_var)
    }
}

/// A sequence of statements, executed in listed order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub statements: Vec<Statement>,
}

impl Program {
    pub fn new(statements: Vec<Statement>) -> Self {
        Program { statements }
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    /// Every `FIND` label in the program, in order of first appearance.
    pub fn find_labels(&self) -> Vec<&str> {
        self.string_args(OperatorKind::Find, "object_name")
    }

    /// Every `PROPERTY` attribute text, in order of first appearance.
    pub fn property_attributes(&self) -> Vec<&str> {
        self.string_args(OperatorKind::Property, "attribute")
    }

    fn string_args(&self, op: OperatorKind, key: &str) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for st in self.statements.iter().filter(|s| s.op == op) {
            if let Some(ArgValue::StringLiteral(s)) = st.arg(key) {
                if !out.contains(&s.as_str()) {
                    out.push(s);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schemas_match_operator_table() {
        assert_eq!(OperatorKind::Find.schema(), &[arg("object_name", StringLiteral)]);
        assert_eq!(OperatorKind::Result.schema(), &[arg("object", VariableRef)]);
        assert_eq!(
            OperatorKind::Order.schema(),
            &[
                arg("object", VariableRef),
                arg("criteria", Crit(CriteriaSet::Direction)),
                arg("rank", PositiveInteger)
            ]
        );
    }

    #[test]
    fn schema_is_total_and_names_round_trip() {
        for kind in OperatorKind::ALL {
            assert!(!kind.schema().is_empty());
            assert_eq!(OperatorKind::from_name(kind.name()), Some(kind));
            let mut names: Vec<_> = kind.schema().iter().map(|a| a.name).collect();
            names.sort_unstable();
            names.dedup();
            assert_eq!(names.len(), kind.schema().len(), "{kind} has duplicate slots");
        }
        assert_eq!(OperatorKind::from_name("find"), None);
    }

    #[test]
    fn criteria_tokens_are_case_insensitive() {
        assert_eq!(Criteria::parse_token("LEFT"), Some(Criteria::Left));
        assert_eq!(Criteria::parse_token("Behind"), Some(Criteria::Behind));
        assert_eq!(Criteria::parse_token("middle"), None);
        for set in [CriteriaSet::Direction, CriteriaSet::Depth, CriteriaSet::Size] {
            assert!(set.members().iter().all(|c| c.set() == set));
        }
    }

    #[test]
    fn identifier_rule() {
        assert!(is_identifier("BOXES0"));
        assert!(is_identifier("_x"));
        assert!(is_identifier(FINAL_RESULT));
        assert!(!is_identifier("0abc"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("a-b"));
    }
}
