//! State tracking and the mapping from attention state to how the chat
//! assistant should respond.

mod backend;
mod directive;
mod prompt;
mod tracker;

pub use backend::{
    BackendError, ChatBackend, EchoBackend, HttpBackend, HttpBackendConfig, ENV_API_KEY,
    ENV_ENDPOINT, ENV_MODEL, ENV_TIMEOUT_S,
};
pub use directive::{AdaptationDirective, DirectiveSet, TemplateError, VisualFeedback, DEFAULT_TEMPLATES};
pub use prompt::{compose_prompt, ChatMessage, ChatRequest, ChatTurn, PromptError, Role, DEFAULT_HISTORY_TURNS};
pub use tracker::{StateTracker, TrackerUpdate, DEFAULT_K, HISTORY_LEN};
