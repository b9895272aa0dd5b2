//! Disk formats, the study server, the scripted participant and the
//! analysis pipeline around `blockies-core`.

pub mod analysis;
pub mod client;
pub mod config;
pub mod data;
pub mod fsutil;
pub mod manifest;
pub mod pipeline;
pub mod provenance;
pub mod report;
pub mod server;
pub mod store;
