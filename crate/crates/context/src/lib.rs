//! Persistent context for tool-using agents: step-keyed artifacts with
//! provenance, dotted-path projection queries, a replayable journal, and
//! the HTTP service that exposes them.

pub mod server;
pub mod store;
pub mod wire;

pub use server::{router, serve, AppState, ServerConfig};
pub use store::{project, ContextArtifact, ContextStore, StoreError};
pub use wire::{CallRequest, CallResponse, Query, QueryRequest, QueryResponse, DEFAULT_RUN};
