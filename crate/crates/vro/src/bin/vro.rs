//! `vro` command-line interface.
//!
//! Exit codes: 0 success, 1 invalid program (`validate`), 2 usage error,
//! 3 no target (`exec`), 4 generation failure (`gen`), 10 unreadable
//! input, 11 malformed input or config, 12 execution error, 13 transport
//! error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use vro_core::interp::{execute, Outcome};
use vro_core::parser::{parse_program_with, serialize_program, ParseOptions};
use vro_core::progen::{generate_program, GenError, GenResult, PromptTemplate, parse_exemplars};
use vro_core::scene::Scene;
use vro_core::validator::{validate_program, Diagnostic, ValidProgram};

use vro::canned::parse_canned;
use vro::config::{CliConfig, ConfigError, Source};
use vro::harness::{parse_eval_items, render_csv, render_text, run_batch, run_eval, CannedSource, ItemResult, LlmSource, ProgramSource};
use vro::http::HttpChatEndpoint;
use vro::scene_io::{load_scene, SceneIoError};
use vro::thresholds::{calibrate, parse_aux_scores, save_threshold_table};

#[derive(Parser)]
#[command(name = "vro", version, about = "Verified operator programs for visual grounding")]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, env = "VRO_CONFIG")]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct SourceArgs {
    /// JSONL file of {query, program} pairs.
    #[arg(long, conflicts_with = "endpoint")]
    canned: Option<PathBuf>,
    /// Chat-completions URL (overrides the `endpoint` config key).
    #[arg(long)]
    endpoint: Option<String>,
    /// Prompt template with {{query}}, {{feedback}} and {{exemplars}} slots.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Exemplar file: blocks of `Query: ...` plus program lines.
    #[arg(long)]
    exemplars: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validate a program file (`-` for stdin).
    Validate {
        program: PathBuf,
        #[arg(long)]
        json: bool,
        /// Reject `#` comment lines.
        #[arg(long)]
        strict: bool,
    },
    /// Execute a program on one scene file.
    Exec {
        program: PathBuf,
        scene: PathBuf,
        /// Include the per-step execution trace.
        #[arg(long)]
        trace: bool,
    },
    /// Generate a program for a query.
    Gen {
        query: String,
        #[command(flatten)]
        source: SourceArgs,
        /// Write every prompt and reply as JSON to this file.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run one query over every `*.json` scene in a directory.
    Batch {
        query: String,
        scene_dir: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Evaluate a JSONL file of items; scene paths are relative to it.
    Eval {
        items: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Also write per-item verdicts as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Build a threshold table from auxiliary scores.
    Calibrate {
        aux_scores: PathBuf,
        /// Top-k percent (defaults to the `k` config key).
        #[arg(long)]
        k: Option<f64>,
        #[arg(long, default_value = "unspecified")]
        aux_id: String,
        /// Output file; stdout if omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// An error with its exit code.
struct Fail(u8, String);

const INVALID: u8 = 1;
const USAGE: u8 = 2;
const NO_TARGET: u8 = 3;
const GEN_FAILED: u8 = 4;
const IO: u8 = 10;
const FORMAT: u8 = 11;
const EXEC: u8 = 12;
const TRANSPORT: u8 = 13;

type Res<T> = Result<T, Fail>;

fn read_text(path: &Path) -> Res<String> {
    if path == Path::new("-") {
        return std::io::read_to_string(std::io::stdin()).map_err(|e| Fail(IO, format!("stdin: {e}")));
    }
    std::fs::read_to_string(path).map_err(|e| Fail(IO, format!("{}: {e}", path.display())))
}

fn write_out(path: &Path, bytes: &[u8]) -> Res<()> {
    std::fs::write(path, bytes).map_err(|e| Fail(IO, format!("{}: {e}", path.display())))
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn format_diag(d: &Diagnostic) -> String {
    let mut s = format!("line {} [{}]: {}", d.line, d.rule, d.message);
    if !d.hint.is_empty() {
        s.push_str(&format!(" (hint: {})", d.hint));
    }
    s
}

fn check(text: &str, strict: bool) -> Result<ValidProgram, Vec<Diagnostic>> {
    let program = parse_program_with(text, ParseOptions { allow_comments: !strict })
        .map_err(|errs| {
            let mut d: Vec<Diagnostic> = errs.iter().map(Diagnostic::from).collect();
            d.sort_by_key(|d| (d.line, d.rule));
            d
        })?;
    validate_program(program)
}

fn load_program(path: &Path) -> Res<ValidProgram> {
    let text = read_text(path)?;
    check(&text, false).map_err(|diags| {
        let lines: Vec<String> = diags.iter().map(format_diag).collect();
        Fail(FORMAT, format!("{}: invalid program\n{}", path.display(), lines.join("\n")))
    })
}

fn scene_err(e: SceneIoError) -> Fail {
    match e {
        SceneIoError::Io { .. } => Fail(IO, e.to_string()),
        _ => Fail(FORMAT, e.to_string()),
    }
}

fn cfg_err(e: ConfigError) -> Fail {
    match e {
        ConfigError::Io { .. } => Fail(IO, e.to_string()),
        _ => Fail(FORMAT, e.to_string()),
    }
}

fn config(cli: &Cli) -> Res<CliConfig> {
    let mut c = CliConfig::default();
    if let Some(p) = &cli.config {
        c.apply_file(p).map_err(cfg_err)?;
    }
    c.apply_env(|k| std::env::var(k).ok());
    c.apply_overrides(cli.overrides.iter().map(String::as_str)).map_err(|e| Fail(USAGE, e.to_string()))?;
    Ok(c)
}

fn template(args: &SourceArgs) -> Res<PromptTemplate> {
    if args.template.is_none() && args.exemplars.is_none() {
        return Ok(PromptTemplate::builtin());
    }
    let builtin = PromptTemplate::builtin();
    let text = match &args.template {
        Some(p) => read_text(p)?,
        None => builtin.text().to_owned(),
    };
    let exemplars = match &args.exemplars {
        Some(p) => parse_exemplars(&read_text(p)?).map_err(|e| Fail(FORMAT, e.to_string()))?,
        None => builtin.exemplars().to_vec(),
    };
    PromptTemplate::new(text, exemplars).map_err(|e| Fail(FORMAT, e.to_string()))
}

fn source(args: &SourceArgs, cfg: &mut CliConfig) -> Res<Box<dyn ProgramSource>> {
    if let Some(p) = &args.canned {
        let canned = parse_canned(&read_text(p)?).map_err(|e| Fail(FORMAT, format!("{}: {e}", p.display())))?;
        // boxed source owns its table
        struct Owned(vro::canned::CannedPrograms);
        impl ProgramSource for Owned {
            fn program_for(&mut self, q: &str) -> Result<ValidProgram, vro::harness::SourceError> {
                CannedSource(&self.0).program_for(q)
            }
        }
        return Ok(Box::new(Owned(canned)));
    }
    if let Some(url) = &args.endpoint {
        cfg.set("endpoint", url.clone(), Source::Flag).map_err(|e| Fail(USAGE, e.to_string()))?;
    }
    let endpoint = http_endpoint(cfg)?;
    let opts = cfg.gen_options().map_err(cfg_err)?;
    Ok(Box::new(LlmSource::new(endpoint, template(args)?, opts)))
}

fn http_endpoint(cfg: &CliConfig) -> Res<HttpChatEndpoint> {
    let url = cfg
        .get("endpoint")
        .filter(|u| !u.is_empty())
        .ok_or_else(|| Fail(USAGE, "no program source: pass --canned FILE or --endpoint URL (or set `endpoint`)".into()))?;
    let temperature: f64 = cfg
        .get("llm_temperature")
        .unwrap_or("0")
        .parse()
        .map_err(|e| Fail(FORMAT, format!("llm_temperature: {e}")))?;
    let timeout = cfg.timeout().map_err(cfg_err)?;
    let token = cfg.get("auth_token").filter(|t| !t.is_empty()).map(str::to_owned);
    Ok(HttpChatEndpoint::new(url, token, cfg.get("model").unwrap_or("default"), temperature, timeout))
}

fn outcome_json(o: &Outcome, trace: bool) -> serde_json::Value {
    let mut v = json!({
        "outcome": if o.is_no_target() { "no_target" } else { "target_box" },
        "box": o.target(),
        "terminated_at": o.trace().terminated_at,
    });
    if trace {
        v["trace"] = serde_json::to_value(o.trace()).expect("trace serializes");
    }
    v
}

fn run(cli: Cli) -> Res<u8> {
    let mut cfg = config(&cli)?;
    match &cli.cmd {
        Cmd::Validate { program, json, strict } => {
            let text = read_text(program)?;
            let diags = check(&text, *strict).err().unwrap_or_default();
            if *json {
                print_json(&json!({"valid": diags.is_empty(), "diagnostics": diags}));
            } else {
                for d in &diags {
                    println!("{}", format_diag(d));
                }
            }
            Ok(if diags.is_empty() { 0 } else { INVALID })
        }
        Cmd::Exec { program, scene, trace } => {
            let program = load_program(program)?;
            let scene = load_scene(scene).map_err(scene_err)?;
            let ctx = cfg.exec_context().map_err(cfg_err)?;
            let out = execute(&program, &scene, &ctx).map_err(|e| Fail(EXEC, e.to_string()))?;
            print_json(&outcome_json(&out, *trace));
            Ok(if out.is_no_target() { NO_TARGET } else { 0 })
        }
        Cmd::Gen { query, source: args, log } => {
            if let Some(p) = &args.canned {
                let canned = parse_canned(&read_text(p)?).map_err(|e| Fail(FORMAT, format!("{}: {e}", p.display())))?;
                return match canned.get(query) {
                    Some(prog) => {
                        print!("{}", serialize_program(prog));
                        Ok(0)
                    }
                    None => Err(Fail(GEN_FAILED, format!("no canned program for '{query}'"))),
                };
            }
            if let Some(url) = &args.endpoint {
                cfg.set("endpoint", url.clone(), Source::Flag).map_err(|e| Fail(USAGE, e.to_string()))?;
            }
            let mut endpoint = http_endpoint(&cfg)?;
            let opts = cfg.gen_options().map_err(cfg_err)?;
            let result = match generate_program(query, &template(args)?, &mut endpoint, opts) {
                Ok(r) => r,
                Err(e @ GenError::Transport { .. }) => return Err(Fail(TRANSPORT, e.to_string())),
                Err(e) => return Err(Fail(USAGE, e.to_string())),
            };
            if let Some(p) = log {
                let bytes = serde_json::to_vec_pretty(result.attempts()).expect("attempts serialize");
                write_out(p, &bytes)?;
            }
            match result {
                GenResult::Success { program, .. } => {
                    print!("{}", serialize_program(&program));
                    Ok(0)
                }
                GenResult::Failure { last_diagnostics, attempts } => {
                    eprintln!("no valid program after {} attempts", attempts.len());
                    for d in &last_diagnostics {
                        eprintln!("{}", format_diag(d));
                    }
                    Ok(GEN_FAILED)
                }
            }
        }
        Cmd::Batch { query, scene_dir, source: args, jobs } => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(scene_dir)
                .map_err(|e| Fail(IO, format!("{}: {e}", scene_dir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            let scenes: Vec<Scene> = paths.iter().map(|p| load_scene(p)).collect::<Result<_, _>>().map_err(scene_err)?;
            let ctx = cfg.exec_context().map_err(cfg_err)?;
            let mut src = source(args, &mut cfg)?;
            let run = run_batch(query, &scenes, src.as_mut(), &ctx, *jobs);
            let results: Vec<_> = paths
                .iter()
                .zip(&run.results)
                .map(|(p, r)| match r {
                    ItemResult::Done(o) => {
                        let mut v = outcome_json(o, false);
                        v["scene"] = json!(p.display().to_string());
                        v
                    }
                    ItemResult::Failed { error } => json!({"scene": p.display().to_string(), "outcome": "failed", "error": error}),
                })
                .collect();
            let count = |f: fn(&ItemResult) -> bool| run.results.iter().filter(|r| f(r)).count();
            print_json(&json!({
                "config": cfg.effective(),
                "query": run.query,
                "program": run.program,
                "counts": {
                    "target_box": count(|r| matches!(r, ItemResult::Done(o) if !o.is_no_target())),
                    "no_target": count(|r| matches!(r, ItemResult::Done(o) if o.is_no_target())),
                    "failed": count(|r| matches!(r, ItemResult::Failed { .. })),
                },
                "results": results,
                "runtime": run.timing,
            }));
            Ok(if run.program.is_none() { GEN_FAILED } else { 0 })
        }
        Cmd::Eval { items, source: args, jobs, format, csv } => {
            let parsed = parse_eval_items(&read_text(items)?).map_err(|e| Fail(FORMAT, format!("{}: {e}", items.display())))?;
            let ctx = cfg.exec_context().map_err(cfg_err)?;
            let mut src = source(args, &mut cfg)?;
            let base = items.parent().unwrap_or(Path::new("."));
            let run = run_eval(&parsed, base, src.as_mut(), &ctx, *jobs, cfg.effective()).map_err(|e| Fail(FORMAT, e.to_string()))?;
            match format {
                Format::Json => print_json(&run.report),
                Format::Text => print!("{}", render_text(&run.report)),
            }
            if let Some(p) = csv {
                let text = render_csv(&run.items).map_err(|e| Fail(IO, e.to_string()))?;
                write_out(p, text.as_bytes())?;
            }
            Ok(0)
        }
        Cmd::Calibrate { aux_scores, k, aux_id, output } => {
            let aux = parse_aux_scores(read_text(aux_scores)?.as_bytes()).map_err(|e| Fail(FORMAT, e.to_string()))?;
            let k = match k {
                Some(k) => *k,
                None => cfg.verify_config().map_err(cfg_err)?.top_k_percent,
            };
            if !(k > 0.0 && k <= 100.0) {
                return Err(Fail(USAGE, format!("--k must lie in (0, 100], got {k}")));
            }
            let table = calibrate(&aux, k, aux_id).map_err(|e| Fail(FORMAT, e.to_string()))?;
            let bytes = save_threshold_table(&table);
            match output {
                Some(p) => write_out(p, &bytes)?,
                None => print!("{}", String::from_utf8_lossy(&bytes)),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
