//! Core of a program-driven visual grounding engine.
//!
//! A referring expression is compiled into a short operator program
//! ([`ast`], [`parser`], [`validator`]), generated by an LLM with a
//! validator-feedback loop ([`progen`]), and executed against precomputed
//! perception data ([`scene`]) by [`interp`]. Detector proposals are checked
//! by [`verify`] before use, and any step that comes back empty ends the run
//! with a no-target answer. [`metrics`] scores outcomes.
//!
//! The crate is `no_std` with `alloc`; file formats and IO live in the `vro`
//! crate.

#![no_std]

extern crate alloc;

pub mod ast;
pub mod interp;
pub mod metrics;
pub mod parser;
pub mod progen;
pub mod scene;
pub mod testkit;
pub mod validator;
pub mod verify;

pub use ast::{ArgValue, Criteria, OperatorKind, Program, Statement, FINAL_RESULT};
pub use interp::{execute, ExecContext, ExecError, ExecutionTrace, InterpConfig, Outcome};
pub use parser::{parse_program, serialize_program, ParseError};
pub use scene::{iou, BBox, MissingEntry, Proposal, Scene, SceneBuilder, SceneError};
pub use validator::{check_program, check_text, render_feedback, validate_program, Diagnostic, Rule, ValidProgram};
pub use verify::{CategoryBank, ThresholdTable, VerifyConfig, VerifyError};
