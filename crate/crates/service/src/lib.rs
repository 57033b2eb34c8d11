//! HTTP session service and command-line tools around the `callsim` engine.
//!
//! Sessions are persisted as append-only event files ([`store`]); replaying
//! a file rebuilds its [`record::SessionRecord`] exactly.

pub mod app;
pub mod cli;
pub mod config;
pub mod record;
pub mod store;
