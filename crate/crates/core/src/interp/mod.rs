//! Program execution over a single scene.
//!
//! Statements run in order and every binding is a proposal set. The first
//! statement that yields the empty set ends execution with
//! [`Outcome::NoTarget`]; later statements are recorded as skipped.

pub mod locate;
pub mod ops;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::ast::{ArgValue, Criteria, OperatorKind, Program, Statement};
use crate::scene::{BBox, MissingEntry, Proposal, Scene};
use crate::validator::ValidProgram;
use crate::verify::{self, CategoryBank, ThresholdTable, VerifyConfig, VerifyError};

pub use locate::{normalize_position, Axis, LocateRule, SynonymTable, Zone};

/// How `RESULT` picks one box out of several survivors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResultSelection {
    #[default]
    DetectorScore,
    UvScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpConfig {
    /// `FIND_NEAR` keeps pairs with center distance at most
    /// `near_eta * (diag(o) + diag(r)) / 2`.
    pub near_eta: f64,
    /// `FIND_INSIDE` minimum fraction of the object's area inside the reference.
    pub inside_gamma: f64,
    pub result_selection: ResultSelection,
    /// Stop at the first empty statement.
    pub early_exit: bool,
    /// Skip uncertainty verification and answer with the last non-empty
    /// binding instead of abstaining.
    pub forced_prediction: bool,
    pub synonyms: SynonymTable,
}

impl Default for InterpConfig {
    fn default() -> Self {
        InterpConfig {
            near_eta: 1.0,
            inside_gamma: 0.9,
            result_selection: ResultSelection::DetectorScore,
            early_exit: true,
            forced_prediction: false,
            synonyms: SynonymTable::default(),
        }
    }
}

/// Everything execution needs besides the program and scene.
#[derive(Debug, Clone, Default)]
pub struct ExecContext {
    pub verify: VerifyConfig,
    pub interp: InterpConfig,
    pub bank: CategoryBank,
    pub thresholds: Option<ThresholdTable>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Verdict {
    Passed,
    Empty,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TraceStep {
    pub line: u32,
    pub op: OperatorKind,
    /// Sizes of the variable inputs, in schema order. Empty when skipped.
    pub input_sizes: Vec<usize>,
    /// `None` when the step was skipped.
    pub output_size: Option<usize>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ExecutionTrace {
    pub steps: Vec<TraceStep>,
    /// Line of the first statement that produced the empty set.
    pub terminated_at: Option<u32>,
}

impl ExecutionTrace {
    pub fn computed_after_termination(&self) -> usize {
        match self.terminated_at {
            None => 0,
            Some(line) => self.steps.iter().filter(|s| s.line > line && s.verdict != Verdict::Skipped).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(tag = "outcome", rename_all = "snake_case"))]
pub enum Outcome {
    TargetBox {
        #[cfg_attr(feature = "serde", serde(rename = "box"))]
        bbox: BBox,
        trace: ExecutionTrace,
    },
    NoTarget {
        trace: ExecutionTrace,
    },
}

impl Outcome {
    pub fn trace(&self) -> &ExecutionTrace {
        match self {
            Outcome::TargetBox { trace, .. } | Outcome::NoTarget { trace } => trace,
        }
    }

    pub fn target(&self) -> Option<BBox> {
        match self {
            Outcome::TargetBox { bbox, .. } => Some(*bbox),
            Outcome::NoTarget { .. } => None,
        }
    }

    pub fn is_no_target(&self) -> bool {
        matches!(self, Outcome::NoTarget { .. })
    }

    /// The answer without its trace: box or none, plus the terminating line.
    pub fn answer(&self) -> (Option<BBox>, Option<u32>) {
        (self.target(), self.trace().terminated_at)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("missing scene data: {0}")]
    Missing(#[from] MissingEntry),
    #[error("unrecognized LOCATE position '{0}'")]
    UnrecognizedPosition(String),
    #[error("{0}")]
    Domain(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<VerifyError> for ExecError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Missing(m) => ExecError::Missing(m),
            VerifyError::Domain(d) => ExecError::Domain(d),
        }
    }
}

/// `FIND`: detections for `label` above the detection floor, then
/// uncertainty verification (skipped in forced-prediction mode).
pub fn exec_find(label: &str, scene: &Scene, ctx: &ExecContext) -> Result<Vec<Proposal>, ExecError> {
    let floor = ctx.verify.detection_floor;
    let raw: Vec<Proposal> = scene.lookup_detections(label)?.iter().filter(|p| p.score >= floor).cloned().collect();
    if ctx.interp.forced_prediction || raw.is_empty() {
        return Ok(raw);
    }
    Ok(verify::uv_filter(&raw, label, scene, &ctx.bank, &ctx.verify, ctx.thresholds.as_ref())?)
}

pub fn exec_locate(objs: &[Proposal], position: &str, scene: &Scene, synonyms: &SynonymTable) -> Result<Vec<Proposal>, ExecError> {
    let rule = synonyms.resolve(position).ok_or_else(|| ExecError::UnrecognizedPosition(position.into()))?;
    Ok(locate::apply_rule(objs, rule, scene.width(), scene.height()))
}

/// `RESULT`: the single survivor, or the best one by the configured key.
pub fn exec_result(objs: &[Proposal], scene: &Scene, ctx: &ExecContext) -> Result<Option<BBox>, ExecError> {
    if objs.len() <= 1 {
        return Ok(objs.first().map(|p| p.bbox));
    }
    let keys: Vec<f64> = match ctx.interp.result_selection {
        ResultSelection::DetectorScore => objs.iter().map(|p| p.score).collect(),
        ResultSelection::UvScore => objs
            .iter()
            .map(|p| verify::proposal_uv_score(p, &p.source_label, scene, &ctx.bank, ctx.verify.temperature))
            .collect::<Result<_, _>>()?,
    };
    Ok(ops::select_best(objs, &keys).map(|p| p.bbox))
}

struct Env<'p> {
    bindings: BTreeMap<&'p str, Vec<Proposal>>,
    /// Most recently bound non-empty set, for forced prediction.
    last_non_empty: Option<&'p str>,
}

fn shape(st: &Statement, what: &str) -> ExecError {
    ExecError::Internal(format!("line {}: {} {what}", st.source_line, st.op))
}

impl<'p> Env<'p> {
    fn input(&self, st: &'p Statement, key: &str) -> Result<&[Proposal], ExecError> {
        let name = st.arg(key).and_then(ArgValue::as_var).ok_or_else(|| shape(st, "lacks a variable argument"))?;
        self.bindings
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| shape(st, "reads an unbound variable"))
    }
}

fn string_arg<'a>(st: &'a Statement, key: &str) -> Result<&'a str, ExecError> {
    match st.arg(key) {
        Some(ArgValue::StringLiteral(s)) => Ok(s),
        _ => Err(shape(st, "lacks a string argument")),
    }
}

fn criteria_arg(st: &Statement) -> Result<Criteria, ExecError> {
    match st.arg("criteria") {
        Some(ArgValue::Criteria(c)) => Ok(*c),
        _ => Err(shape(st, "lacks a criteria argument")),
    }
}

fn rank_arg(st: &Statement) -> Result<usize, ExecError> {
    match st.arg("rank") {
        Some(ArgValue::Number(n)) if *n >= 1 => Ok(*n as usize),
        _ => Err(shape(st, "lacks a positive rank")),
    }
}

/// Variable inputs of a statement, in schema order.
fn input_keys(op: OperatorKind) -> &'static [&'static str] {
    match op {
        OperatorKind::Find => &[],
        OperatorKind::FindDirection | OperatorKind::FindNear | OperatorKind::FindInside | OperatorKind::RelativeDepth => {
            &["object", "reference_object"]
        }
        _ => &["object"],
    }
}

enum StepValue {
    Set(Vec<Proposal>),
    Answer(BBox),
}

fn run_statement(st: &Statement, inputs: &[&[Proposal]], scene: &Scene, ctx: &ExecContext) -> Result<StepValue, ExecError> {
    let cfg = &ctx.interp;
    let set = match st.op {
        OperatorKind::Find => exec_find(string_arg(st, "object_name")?, scene, ctx)?,
        OperatorKind::Property => verify::property_filter(inputs[0], string_arg(st, "attribute")?, scene, &ctx.verify)?,
        OperatorKind::Locate => exec_locate(inputs[0], string_arg(st, "position")?, scene, &cfg.synonyms)?,
        OperatorKind::Order => ops::order(inputs[0], criteria_arg(st)?, rank_arg(st)?),
        OperatorKind::AbsoluteDepth => ops::absolute_depth(inputs[0], criteria_arg(st)?, scene)?,
        OperatorKind::Size => ops::size(inputs[0], criteria_arg(st)?),
        OperatorKind::FindDirection => ops::find_direction(inputs[0], inputs[1], criteria_arg(st)?),
        OperatorKind::FindNear => ops::find_near(inputs[0], inputs[1], cfg.near_eta),
        OperatorKind::FindInside => ops::find_inside(inputs[0], inputs[1], cfg.inside_gamma),
        OperatorKind::RelativeDepth => ops::relative_depth(inputs[0], inputs[1], criteria_arg(st)?, scene)?,
        OperatorKind::Result => {
            return match exec_result(inputs[0], scene, ctx)? {
                Some(b) => Ok(StepValue::Answer(b)),
                None => Ok(StepValue::Set(Vec::new())),
            };
        }
    };
    Ok(StepValue::Set(set))
}

/// Runs a validated program on one scene.
pub fn execute(program: &ValidProgram, scene: &Scene, ctx: &ExecContext) -> Result<Outcome, ExecError> {
    execute_program(program.program(), scene, ctx)
}

/// Runs a program that is assumed valid; shape violations surface as
/// [`ExecError::Internal`].
pub fn execute_program(program: &Program, scene: &Scene, ctx: &ExecContext) -> Result<Outcome, ExecError> {
    let forced = ctx.interp.forced_prediction;
    let stop_on_empty = ctx.interp.early_exit || forced;
    let mut env = Env { bindings: BTreeMap::new(), last_non_empty: None };
    let mut trace = ExecutionTrace::default();
    let mut answer: Option<BBox> = None;
    let mut stopped = false;

    for st in &program.statements {
        if stopped {
            trace.steps.push(TraceStep { line: st.source_line, op: st.op, input_sizes: Vec::new(), output_size: None, verdict: Verdict::Skipped });
            continue;
        }
        let mut inputs = Vec::new();
        for key in input_keys(st.op) {
            inputs.push(env.input(st, key)?);
        }
        let input_sizes: Vec<usize> = inputs.iter().map(|s| s.len()).collect();
        // an empty input yields an empty output without running the operator
        let value = if inputs.iter().any(|s| s.is_empty()) {
            StepValue::Set(Vec::new())
        } else {
            run_statement(st, &inputs, scene, ctx)?
        };
        let (output_size, set) = match value {
            StepValue::Answer(b) => {
                answer = Some(b);
                (1, None)
            }
            StepValue::Set(s) => (s.len(), Some(s)),
        };
        let verdict = if output_size == 0 { Verdict::Empty } else { Verdict::Passed };
        trace.steps.push(TraceStep { line: st.source_line, op: st.op, input_sizes, output_size: Some(output_size), verdict });

        if verdict == Verdict::Empty {
            if trace.terminated_at.is_none() {
                trace.terminated_at = Some(st.source_line);
            }
            if stop_on_empty {
                stopped = true;
            }
        }
        if let Some(set) = set {
            if !set.is_empty() {
                env.last_non_empty = Some(&st.target_var);
            }
            env.bindings.insert(&st.target_var, set);
        }
    }

    if trace.terminated_at.is_some() {
        if forced {
            let fallback = env.last_non_empty.and_then(|name| env.bindings.get(name));
            if let Some(objs) = fallback {
                if let Some(bbox) = exec_result(objs, scene, ctx)? {
                    return Ok(Outcome::TargetBox { bbox, trace });
                }
            }
        }
        return Ok(Outcome::NoTarget { trace });
    }
    match answer {
        Some(bbox) => Ok(Outcome::TargetBox { bbox, trace }),
        None => Err(ExecError::Internal("program finished without a RESULT".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::SceneBuilder;
    use crate::validator::check_text;

    fn bank() -> CategoryBank {
        CategoryBank::new(["dog", "car"]).unwrap()
    }

    fn ctx() -> ExecContext {
        ExecContext { bank: bank(), ..Default::default() }
    }

    /// Scene where each listed proposal gets `target_sim` for its own
    /// label and 0.2 for the bank categories.
    fn scene(entries: &[(&str, &str, BBox, f64, f64)], extra_labels: &[&str]) -> Scene {
        let mut b = SceneBuilder::new("img", 300.0, 300.0);
        for l in extra_labels {
            b = b.label(l);
        }
        for (label, id, bbox, score, sim) in entries {
            b = b
                .detection(label, id, *bbox, *score)
                .similarity(id, label, *sim)
                .similarity(id, "dog", 0.2)
                .similarity(id, "car", 0.2)
                .depth(id, 1.0);
        }
        b.build().unwrap()
    }

    #[test]
    fn no_detections_terminates_at_line_one() {
        let p = check_text("B0 = FIND(object_name='elephant')\nB1 = LOCATE(object=B0, position='right')\nFINAL_RESULT = RESULT(object=B1)").unwrap();
        let s = scene(&[], &["elephant"]);
        let out = execute(&p, &s, &ctx()).unwrap();
        assert!(out.is_no_target());
        assert_eq!(out.trace().terminated_at, Some(1));
        assert_eq!(out.trace().steps.iter().map(|s| s.verdict).collect::<Vec<_>>(), [Verdict::Empty, Verdict::Skipped, Verdict::Skipped]);
        assert_eq!(out.trace().computed_after_termination(), 0);
    }

    #[test]
    fn single_find_returns_box() {
        let b = BBox::new(50.0, 50.0, 10.0, 10.0);
        let p = check_text("B0 = FIND(object_name='cat')\nFINAL_RESULT = RESULT(object=B0)").unwrap();
        let s = scene(&[("cat", "c1", b, 0.8, 0.3)], &[]);
        let out = execute(&p, &s, &ctx()).unwrap();
        assert_eq!(out.target(), Some(b));
        assert_eq!(out.trace().terminated_at, None);
    }

    #[test]
    fn direction_failure_terminates_at_relation_line() {
        let text = "B0 = FIND(object_name='person')\nB1 = FIND(object_name='elephant')\nB2 = FIND_DIRECTION(object=B0, reference_object=B1, criteria='left')\nFINAL_RESULT = RESULT(object=B2)";
        let p = check_text(text).unwrap();
        let s = scene(
            &[
                ("person", "p1", BBox::new(250.0, 150.0, 40.0, 100.0), 0.9, 0.3),
                ("elephant", "e1", BBox::new(100.0, 150.0, 120.0, 100.0), 0.9, 0.3),
            ],
            &[],
        );
        let out = execute(&p, &s, &ctx()).unwrap();
        assert!(out.is_no_target());
        assert_eq!(out.trace().terminated_at, Some(3));
    }

    #[test]
    fn detection_floor_and_uv_rejection() {
        let p = check_text("B0 = FIND(object_name='cat')\nFINAL_RESULT = RESULT(object=B0)").unwrap();
        // c1 below the floor, c2 rejected by verification (target sim below bank sims)
        let s = scene(
            &[("cat", "c1", BBox::new(10.0, 10.0, 5.0, 5.0), 0.1, 0.3), ("cat", "c2", BBox::new(30.0, 10.0, 5.0, 5.0), 0.9, 0.1)],
            &[],
        );
        assert!(execute(&p, &s, &ctx()).unwrap().is_no_target());

        let forced = ExecContext { interp: InterpConfig { forced_prediction: true, ..Default::default() }, ..ctx() };
        assert_eq!(execute(&p, &s, &forced).unwrap().target(), Some(BBox::new(30.0, 10.0, 5.0, 5.0)));
    }

    #[test]
    fn forced_prediction_falls_back_to_last_binding() {
        let text = "B0 = FIND(object_name='person')\nB1 = FIND(object_name='elephant')\nB2 = FIND_DIRECTION(object=B0, reference_object=B1, criteria='left')\nFINAL_RESULT = RESULT(object=B2)";
        let p = check_text(text).unwrap();
        let elephant = BBox::new(100.0, 150.0, 120.0, 100.0);
        let s = scene(
            &[("person", "p1", BBox::new(250.0, 150.0, 40.0, 100.0), 0.9, 0.3), ("elephant", "e1", elephant, 0.9, 0.3)],
            &[],
        );
        let forced = ExecContext { interp: InterpConfig { forced_prediction: true, ..Default::default() }, ..ctx() };
        assert_eq!(execute(&p, &s, &forced).unwrap().target(), Some(elephant));
    }

    #[test]
    fn early_exit_off_keeps_answer() {
        let text = "B0 = FIND(object_name='elephant')\nB1 = FIND(object_name='person')\nB2 = FIND_NEAR(object=B1, reference_object=B0)\nFINAL_RESULT = RESULT(object=B2)";
        let p = check_text(text).unwrap();
        let s = scene(&[("person", "p1", BBox::new(250.0, 150.0, 40.0, 100.0), 0.9, 0.3)], &["elephant"]);
        let on = execute(&p, &s, &ctx()).unwrap();
        let off = execute(&p, &s, &ExecContext { interp: InterpConfig { early_exit: false, ..Default::default() }, ..ctx() }).unwrap();
        assert_eq!(on.answer(), off.answer());
        assert_eq!(on.trace().computed_after_termination(), 0);
        assert_eq!(off.trace().steps[1].verdict, Verdict::Passed);
    }

    #[test]
    fn missing_data_is_an_error_not_no_target() {
        let p = check_text("B0 = FIND(object_name='zebra')\nFINAL_RESULT = RESULT(object=B0)").unwrap();
        let s = scene(&[], &[]);
        assert!(matches!(execute(&p, &s, &ctx()), Err(ExecError::Missing(MissingEntry::Detections { .. }))));
    }

    #[test]
    fn unrecognized_position() {
        let p = check_text("B0 = FIND(object_name='cat')\nB1 = LOCATE(object=B0, position='flibber')\nFINAL_RESULT = RESULT(object=B1)").unwrap();
        let s = scene(&[("cat", "c1", BBox::new(50.0, 150.0, 10.0, 10.0), 0.9, 0.3)], &[]);
        assert_eq!(execute(&p, &s, &ctx()), Err(ExecError::UnrecognizedPosition("flibber".into())));
    }

    #[test]
    fn locate_examples() {
        let syn = SynonymTable::default();
        let s = scene(&[("cat", "c1", BBox::new(50.0, 150.0, 10.0, 10.0), 0.9, 0.3)], &[]);
        let objs = s.lookup_detections("cat").unwrap();
        assert_eq!(exec_locate(objs, "left", &s, &syn).unwrap().len(), 1);
        assert_eq!(exec_locate(objs, "right", &s, &syn).unwrap().len(), 0);

        let s = scene(
            &[
                ("cat", "a", BBox::new(10.0, 150.0, 5.0, 5.0), 0.9, 0.3),
                ("cat", "b", BBox::new(30.0, 150.0, 5.0, 5.0), 0.8, 0.3),
                ("cat", "c", BBox::new(20.0, 150.0, 5.0, 5.0), 0.7, 0.3),
            ],
            &[],
        );
        let got = exec_locate(s.lookup_detections("cat").unwrap(), "middle", &s, &syn).unwrap();
        assert_eq!(got[0].bbox.x, 20.0);
    }

    #[test]
    fn result_picks_highest_score_then_area() {
        let s = scene(
            &[("cat", "a", BBox::new(10.0, 10.0, 10.0, 10.0), 0.4, 0.3), ("cat", "b", BBox::new(50.0, 10.0, 5.0, 5.0), 0.9, 0.3)],
            &[],
        );
        let objs = s.lookup_detections("cat").unwrap();
        assert_eq!(exec_result(objs, &s, &ctx()).unwrap(), Some(BBox::new(50.0, 10.0, 5.0, 5.0)));

        let s = scene(
            &[("cat", "a", BBox::new(10.0, 10.0, 10.0, 10.0), 0.5, 0.3), ("cat", "b", BBox::new(50.0, 10.0, 10.0, 5.0), 0.5, 0.3)],
            &[],
        );
        let objs = s.lookup_detections("cat").unwrap();
        assert_eq!(exec_result(objs, &s, &ctx()).unwrap(), Some(BBox::new(10.0, 10.0, 10.0, 10.0)));
    }

    #[test]
    fn shape_violations_are_internal_errors() {
        let p = Program::new(alloc::vec![Statement::new("FINAL_RESULT", OperatorKind::Result, 1)
            .with_arg("object", ArgValue::VariableRef("NOPE".into()))]);
        let s = scene(&[], &[]);
        assert!(matches!(execute_program(&p, &s, &ctx()), Err(ExecError::Internal(_))));
    }
}
