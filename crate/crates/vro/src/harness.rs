//! Batch execution and dataset evaluation.
//!
//! A query's program is obtained once and reused for every scene it is run
//! on, so program generation cost is paid per query, not per image.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use vro_core::interp::{execute, ExecContext, Outcome};
use vro_core::metrics::{self, Frame, GroundTruth, MetricsReport, Prediction, Verdict};
use vro_core::parser::serialize_program;
use vro_core::progen::{generate_program, ChatEndpoint, GenError, GenOptions, GenResult, PromptTemplate};
use vro_core::scene::{iou, BBox, Scene};
use vro_core::validator::{Diagnostic, ValidProgram};

use crate::canned::CannedPrograms;
use crate::scene_io::load_scene;

#[derive(Debug, Clone, thiserror::Error)]
pub enum SourceError {
    #[error("no canned program for query '{0}'")]
    NotCanned(String),
    #[error("no valid program after {attempts} attempts")]
    GenerationFailed { attempts: usize, diagnostics: Vec<Diagnostic> },
    #[error(transparent)]
    Transport(#[from] GenError),
}

/// Where programs come from.
pub trait ProgramSource {
    fn program_for(&mut self, query: &str) -> Result<ValidProgram, SourceError>;
}

pub struct CannedSource<'a>(pub &'a CannedPrograms);

impl ProgramSource for CannedSource<'_> {
    fn program_for(&mut self, query: &str) -> Result<ValidProgram, SourceError> {
        self.0.get(query).cloned().ok_or_else(|| SourceError::NotCanned(query.into()))
    }
}

/// Generates with an LLM; every result is kept in `log` for audit.
pub struct LlmSource<E> {
    pub endpoint: E,
    pub template: PromptTemplate,
    pub options: GenOptions,
    pub log: Vec<(String, GenResult)>,
}

impl<E: ChatEndpoint> LlmSource<E> {
    pub fn new(endpoint: E, template: PromptTemplate, options: GenOptions) -> Self {
        LlmSource { endpoint, template, options, log: Vec::new() }
    }
}

impl<E: ChatEndpoint> ProgramSource for LlmSource<E> {
    fn program_for(&mut self, query: &str) -> Result<ValidProgram, SourceError> {
        let result = generate_program(query, &self.template, &mut self.endpoint, self.options)?;
        let out = match &result {
            GenResult::Success { program, .. } => Ok(program.clone()),
            GenResult::Failure { last_diagnostics, attempts } => {
                Err(SourceError::GenerationFailed { attempts: attempts.len(), diagnostics: last_diagnostics.clone() })
            }
        };
        self.log.push((query.into(), result));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ItemResult {
    Done(Outcome),
    Failed { error: String },
}

impl ItemResult {
    pub fn prediction(&self) -> Prediction {
        match self {
            ItemResult::Done(o) => Prediction::from(o),
            ItemResult::Failed { .. } => Prediction::Failed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub pre_execution_s: f64,
    pub execution_s: f64,
    pub n: usize,
    /// Executions per second of execution time.
    pub fps: Option<f64>,
}

impl Timing {
    fn finish(mut self) -> Self {
        self.fps = (self.execution_s > 0.0).then(|| self.n as f64 / self.execution_s);
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchRun {
    pub query: String,
    pub program: Option<String>,
    pub results: Vec<ItemResult>,
    pub timing: Timing,
}

fn exec_all(program: &ValidProgram, scenes: &[&Scene], ctx: &ExecContext, jobs: usize) -> Vec<ItemResult> {
    let one = |s: &&Scene| match execute(program, s, ctx) {
        Ok(o) => ItemResult::Done(o),
        Err(e) => ItemResult::Failed { error: e.to_string() },
    };
    if jobs <= 1 {
        return scenes.iter().map(one).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| scenes.par_iter().map(one).collect()),
        Err(_) => scenes.iter().map(one).collect(),
    }
}

/// Runs one query over `scenes` in order. A scene whose execution fails is
/// marked failed on its own; a query without a program fails every scene.
pub fn run_batch(query: &str, scenes: &[Scene], source: &mut dyn ProgramSource, ctx: &ExecContext, jobs: usize) -> BatchRun {
    let refs: Vec<&Scene> = scenes.iter().collect();
    let t0 = Instant::now();
    let program = source.program_for(query);
    let pre = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (program_text, results) = match &program {
        Ok(p) => (Some(serialize_program(p)), exec_all(p, &refs, ctx, jobs)),
        Err(e) => (None, scenes.iter().map(|_| ItemResult::Failed { error: e.to_string() }).collect()),
    };
    let timing = Timing { pre_execution_s: pre, execution_s: t1.elapsed().as_secs_f64(), n: scenes.len(), fps: None }.finish();
    BatchRun { query: query.into(), program: program_text, results, timing }
}

/// One line of an evaluation file:
/// `{"query": "...", "scene": "scenes/a.json", "target": [x, y, w, h]}`.
/// `target` is `null` for no-target items or a list of boxes when several
/// are acceptable. `clip_id` and `frame_index` group video frames.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub query: String,
    pub scene: String,
    pub ground_truth: GroundTruth,
    pub clip_id: Option<String>,
    pub frame_index: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawItem {
    query: String,
    scene: String,
    target: Value,
    #[serde(default)]
    clip_id: Option<String>,
    #[serde(default)]
    frame_index: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("line {line}: {detail}")]
    Schema { line: usize, detail: String },
    #[error(transparent)]
    Length(#[from] metrics::LengthMismatch),
}

fn parse_target(v: Value) -> Result<GroundTruth, String> {
    if v.is_null() {
        return Ok(GroundTruth::NoTarget);
    }
    let as_box = |v: &Value| serde_json::from_value::<[f64; 4]>(v.clone()).ok().map(BBox::from).filter(BBox::is_valid);
    if let Some(b) = as_box(&v) {
        return Ok(GroundTruth::single(b));
    }
    match v.as_array() {
        Some(items) if !items.is_empty() => items
            .iter()
            .map(|i| as_box(i).ok_or_else(|| format!("bad box {i}")))
            .collect::<Result<Vec<_>, _>>()
            .map(GroundTruth::Boxes),
        _ => Err(format!("target must be null, a box [x, y, w, h] or a non-empty list of boxes, got {v}")),
    }
}

pub fn parse_eval_items(text: &str) -> Result<Vec<EvalItem>, EvalError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let r: RawItem = serde_json::from_str(raw).map_err(|e| EvalError::Schema { line, detail: e.to_string() })?;
        let ground_truth = parse_target(r.target).map_err(|detail| EvalError::Schema { line, detail })?;
        out.push(EvalItem { query: r.query, scene: r.scene, ground_truth, clip_id: r.clip_id, frame_index: r.frame_index });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ItemRecord {
    pub query: String,
    pub scene: String,
    pub verdict: Verdict,
    #[serde(rename = "box")]
    pub predicted: Option<BBox>,
    pub iou: Option<f64>,
    pub terminated_at: Option<u32>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClipScore {
    pub clip_id: String,
    pub frames: usize,
    pub stiou: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub config: BTreeMap<String, String>,
    pub metrics: MetricsReport,
    pub queries: usize,
    pub generation_failures: usize,
    pub clips: Vec<ClipScore>,
    pub mstiou: Option<f64>,
    pub acc_at_05_plus_n: Option<f64>,
    pub runtime: Timing,
}

pub struct EvalRun {
    pub report: EvalReport,
    pub items: Vec<ItemRecord>,
}

/// Evaluates every item. Scene paths are resolved against `base_dir`.
/// Items sharing a query share one program.
pub fn run_eval(
    items: &[EvalItem],
    base_dir: &Path,
    source: &mut dyn ProgramSource,
    ctx: &ExecContext,
    jobs: usize,
    config: BTreeMap<String, String>,
) -> Result<EvalRun, EvalError> {
    let mut scenes: HashMap<PathBuf, Result<Arc<Scene>, String>> = HashMap::new();
    let mut by_query: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, item) in items.iter().enumerate() {
        match by_query.iter_mut().find(|(q, _)| *q == item.query) {
            Some((_, v)) => v.push(i),
            None => by_query.push((&item.query, vec![i])),
        }
        let path = base_dir.join(&item.scene);
        scenes.entry(path.clone()).or_insert_with(|| load_scene(&path).map(Arc::new).map_err(|e| e.to_string()));
    }

    let mut results: Vec<Option<ItemResult>> = vec![None; items.len()];
    let mut timing = Timing { n: items.len(), ..Default::default() };
    let mut generation_failures = 0;
    for (query, idxs) in &by_query {
        let t0 = Instant::now();
        let program = source.program_for(query);
        timing.pre_execution_s += t0.elapsed().as_secs_f64();
        let program = match program {
            Ok(p) => p,
            Err(e) => {
                generation_failures += 1;
                for &i in idxs {
                    results[i] = Some(ItemResult::Failed { error: e.to_string() });
                }
                continue;
            }
        };
        let mut loaded = Vec::new();
        for &i in idxs {
            match &scenes[&base_dir.join(&items[i].scene)] {
                Ok(s) => loaded.push((i, Arc::clone(s))),
                Err(e) => results[i] = Some(ItemResult::Failed { error: e.clone() }),
            }
        }
        let refs: Vec<&Scene> = loaded.iter().map(|(_, s)| s.as_ref()).collect();
        let t1 = Instant::now();
        let outs = exec_all(&program, &refs, ctx, jobs);
        timing.execution_s += t1.elapsed().as_secs_f64();
        for ((i, _), r) in loaded.iter().zip(outs) {
            results[*i] = Some(r);
        }
    }
    let results: Vec<ItemResult> = results.into_iter().map(|r| r.expect("every item handled")).collect();

    let gts: Vec<GroundTruth> = items.iter().map(|i| i.ground_truth.clone()).collect();
    let preds: Vec<Prediction> = results.iter().map(ItemResult::prediction).collect();
    let (verdicts, metrics) = metrics::score(&gts, &preds)?;

    let records = items
        .iter()
        .zip(&results)
        .zip(&verdicts)
        .map(|((item, r), v)| {
            let (predicted, terminated_at, error) = match r {
                ItemResult::Done(o) => (o.target(), o.trace().terminated_at, None),
                ItemResult::Failed { error } => (None, None, Some(error.clone())),
            };
            let iou = predicted.filter(|_| item.ground_truth.is_present()).map(|b| item.ground_truth.best_iou(&b));
            ItemRecord { query: item.query.clone(), scene: item.scene.clone(), verdict: *v, predicted, iou, terminated_at, error }
        })
        .collect::<Vec<_>>();

    let (clips, all_frames) = video_frames(items, &records);
    let clip_frames: Vec<Vec<Frame>> = clips.iter().map(|(_, f)| f.clone()).collect();
    let report = EvalReport {
        config,
        metrics,
        queries: by_query.len(),
        generation_failures,
        clips: clips
            .iter()
            .map(|(id, f)| ClipScore { clip_id: id.clone(), frames: f.len(), stiou: metrics::stiou(f) })
            .collect(),
        mstiou: metrics::mstiou(&clip_frames),
        acc_at_05_plus_n: metrics::acc_at_05_plus_n(&all_frames),
        runtime: timing.finish(),
    };
    Ok(EvalRun { report, items: records })
}

/// Frames of items carrying a `clip_id`, grouped by clip and ordered by
/// frame index. Multi-box ground truth uses its best-overlapping box, or the
/// first box when nothing was predicted.
fn video_frames(items: &[EvalItem], records: &[ItemRecord]) -> (Vec<(String, Vec<Frame>)>, Vec<Frame>) {
    let mut clips: BTreeMap<String, Vec<(u64, Frame)>> = BTreeMap::new();
    for (item, rec) in items.iter().zip(records) {
        let Some(clip) = &item.clip_id else { continue };
        let gt = match &item.ground_truth {
            GroundTruth::NoTarget => None,
            GroundTruth::Boxes(bs) => match rec.predicted {
                Some(p) => bs.iter().copied().max_by(|a, b| iou(&p, a).total_cmp(&iou(&p, b))),
                None => bs.first().copied(),
            },
        };
        clips.entry(clip.clone()).or_default().push((item.frame_index.unwrap_or(0), (rec.predicted, gt)));
    }
    let mut all = Vec::new();
    let clips = clips
        .into_iter()
        .map(|(id, mut frames)| {
            frames.sort_by_key(|(i, _)| *i);
            let frames: Vec<Frame> = frames.into_iter().map(|(_, f)| f).collect();
            all.extend(frames.iter().copied());
            (id, frames)
        })
        .collect();
    (clips, all)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

/// Aligned two-column text rendering of a report.
pub fn render_text(r: &EvalReport) -> String {
    let m = &r.metrics;
    let mut rows: Vec<(String, String)> = vec![
        ("items".into(), m.items.to_string()),
        ("queries".into(), r.queries.to_string()),
        ("TP / TN / FP / FN".into(), format!("{} / {} / {} / {}", m.counts.tp, m.counts.tn, m.counts.fp, m.counts.fn_)),
        ("failed".into(), m.failed.to_string()),
        ("TPR (Acc@0.5)".into(), fmt_opt(m.tpr)),
        ("TNR".into(), fmt_opt(m.tnr)),
        ("FPR".into(), fmt_opt(m.fpr)),
        ("balanced accuracy".into(), fmt_opt(m.balanced_accuracy)),
        ("failure rate".into(), fmt_opt(m.failure_rate)),
        ("accuracy (inc. failures)".into(), fmt_opt(m.acc_inc)),
        ("accuracy (exc. failures)".into(), fmt_opt(m.acc_exc)),
    ];
    if !r.clips.is_empty() {
        rows.push(("mSTIoU".into(), fmt_opt(r.mstiou)));
        rows.push(("Acc@0.5+n".into(), fmt_opt(r.acc_at_05_plus_n)));
    }
    rows.push(("pre-execution s".into(), format!("{:.4}", r.runtime.pre_execution_s)));
    rows.push(("execution s".into(), format!("{:.4}", r.runtime.execution_s)));
    rows.push(("FPS".into(), fmt_opt(r.runtime.fps)));
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        out.push_str(&format!("{k:<width$}  {v}\n"));
    }
    out
}

/// Per-item verdicts as CSV.
pub fn render_csv(items: &[ItemRecord]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["query", "scene", "verdict", "x", "y", "w", "h", "iou", "terminated_at", "error"])?;
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for it in items {
        let b = it.predicted;
        w.write_record([
            it.query.clone(),
            it.scene.clone(),
            format!("{:?}", it.verdict),
            num(b.map(|b| b.x)),
            num(b.map(|b| b.y)),
            num(b.map(|b| b.w)),
            num(b.map(|b| b.h)),
            num(it.iou),
            it.terminated_at.map(|l| l.to_string()).unwrap_or_default(),
            it.error.clone().unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
