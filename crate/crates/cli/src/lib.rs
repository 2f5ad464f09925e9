//! HTTP front end and command-line tools for the experiment platform.
//!
//! [`http::router`] exposes a [`fakebook_core::platform::Platform`] as a
//! JSON API; [`config::ServerConfig`] reads the deployment settings from the
//! environment; [`report`] backs the `stats-report` binary.

pub mod config;
pub mod http;
pub mod report;
