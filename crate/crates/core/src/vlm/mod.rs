//! Vision-language model clients: a wire client for chat-completion
//! endpoints and a scripted oracle for tests and simulation.

mod message;
mod oracle;
mod wire;

use std::collections::BTreeMap;

use thiserror::Error;

pub use message::{query_text, request_text, ImageRef, Message, Part, Role};
pub use oracle::{resolve_template, Matcher, OracleRule, OracleScript, RecordedRequest, ScriptedOracle};
pub use wire::{data_url, VlmConfig, WireClient};

use crate::geometry::{CameraModel, Point3};
use crate::marks::MarkSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VlmError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("api error {status}: {body}")]
    ApiError { status: u16, body: String },
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("config: {0}")]
    Config(String),
    #[error("oracle script: {0}")]
    Script(String),
}

pub type Result<T, E = VlmError> = std::result::Result<T, E>;

/// Scene-side facts available alongside a query. The wire client ignores
/// them; the scripted oracle uses them to resolve response templates.
#[derive(Clone, Debug, Default)]
pub struct QueryContext {
    pub markset: Option<MarkSet>,
    pub camera: Option<CameraModel>,
    /// World points keyed `object` or `object.part`.
    pub anchors: BTreeMap<String, Point3>,
}

pub trait VlmClient: Send + Sync {
    fn query(&self, messages: &[Message], ctx: &QueryContext) -> Result<String>;
}

impl<T: VlmClient + ?Sized> VlmClient for &T {
    fn query(&self, messages: &[Message], ctx: &QueryContext) -> Result<String> {
        (**self).query(messages, ctx)
    }
}

impl<T: VlmClient + ?Sized> VlmClient for Box<T> {
    fn query(&self, messages: &[Message], ctx: &QueryContext) -> Result<String> {
        (**self).query(messages, ctx)
    }
}
