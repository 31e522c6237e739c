//! Runtime companion to `pragmaqa-core`: configuration, HTTP backends,
//! on-disk formats, the HTTP service and the command-line interface.

#![deny(unused_must_use, rust_2018_idioms)]

pub mod cli;
pub mod config;
pub mod http;
pub mod runtime;
pub mod service;
pub mod store;

pub use config::Config;
pub use runtime::{AskRequest, Runtime, RuntimeError};
