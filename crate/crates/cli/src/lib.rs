//! Command-line shell around the council engine: configuration, run
//! manifests and the `ask`, `eval`, `ablate`, `report`, `replay` and `synth`
//! commands.

pub mod commands;
pub mod config;
pub mod manifest;
