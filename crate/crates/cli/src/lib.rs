// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Campaign driver: reads a TOML campaign file, runs it on the simulated or
//! local backend and writes the event log plus utilization, overhead and
//! rate reports.

pub mod campaign;
pub mod config;
mod plot;
pub mod report;

pub use campaign::{run, RunOutput, Summary};
pub use config::{CampaignConfig, ConfigError, SCHEMA_VERSION};
