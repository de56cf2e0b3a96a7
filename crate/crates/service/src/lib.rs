//! HTTP query service over an NI-DM store, and a mediator that federates
//! queries across several such services.

use std::path::PathBuf;

pub mod api;
pub mod mediator;

pub use api::{build_state, router, serve, ApiConfig, AppState, ServiceHandle};
pub use mediator::{
    expand_query, federated_query, load_federation, parse_federation, probe, Conflict, EndpointDescriptor,
    EndpointStatus, FailureKind, FederatedResult, FederatedRow, FederationOptions, MediatorError, ProbeOutcome,
    ProbeReport, SourceReport,
};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error("cannot load {}: {message}", path.display())]
    Load { path: PathBuf, message: String },
    #[error("bad configuration: {0}")]
    Config(String),
}
