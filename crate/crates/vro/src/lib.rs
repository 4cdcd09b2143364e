//! File formats, program sources, batch evaluation and configuration around
//! [`vro_core`]. The `vro` binary is a thin layer over this crate.

pub mod canned;
pub mod config;
pub mod harness;
pub mod http;
pub mod scene_io;
pub mod thresholds;
