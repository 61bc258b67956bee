//! HTTP service over a [`uqnet`] model store.
//!
//! [`api`] holds the request types and operations; the CLI calls the same
//! functions, so both surfaces return identical numbers. [`http`] maps them
//! onto routes with a `{code, message, context}` error envelope.

pub mod api;
pub mod http;

pub use http::{router, serve, AppState, ServerConfig};
