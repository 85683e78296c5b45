//! Worklist service for the chest X-ray triage pipeline: durable study and
//! feedback store, bounded worker pool, HTTP API and batch commands.

pub mod api;
pub mod blob;
pub mod cli;
pub mod config;
pub mod journal;
pub mod service;
pub mod store;

pub use config::ServiceConfig;
pub use service::{Service, WorkQueue};
