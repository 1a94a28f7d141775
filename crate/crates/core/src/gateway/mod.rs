//! Transport-agnostic access to chat-completions style vision/language models.

mod fixture;
mod frames;
mod message;
mod prompts;
mod session;
mod transport;

use thiserror::Error;

pub use fixture::{Fixture, FixtureMetadata, FixtureStore};
pub use frames::{encode_frame, list_frames, load_frame, sample_frames, DEFAULT_MAX_EDGE, DEFAULT_SAMPLE_COUNT};
pub use message::{ChatMessage, ChatRequest, ImageRef, Role};
pub use prompts::{PromptSet, PromptTemplate};
pub use session::{
    truncate_history, Exchange, SessionState, TokenEstimator, DEFAULT_MODEL_ID, DEFAULT_TOKEN_BUDGET,
};
pub use transport::{
    extract_content, Completion, FnTransport, LiveTransport, RecordingTransport, ReplayTransport,
    RetryPolicy, ScriptedTransport, Transport, TransportMode, API_KEY_ENV,
};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no fixture recorded for request {request_hash}")]
    FixtureMiss { request_hash: String },
    #[error("endpoint returned {status}: {body}")]
    EndpointError { status: u16, body: String },
    #[error("message needs {needed} tokens but the budget is {budget}")]
    BudgetExceeded { needed: usize, budget: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("template {template} has no value for [{placeholder}]")]
    MissingPlaceholder { template: String, placeholder: String },
    #[error("http: {0}")]
    Http(String),
    #[error("image: {0}")]
    Image(String),
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("scripted transport has no responses left")]
    ScriptExhausted,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sends a user message on `session` and returns the assistant reply.
///
/// The user message and reply are appended to the history, which is then
/// truncated to the session budget. On failure the session is left as it was.
pub fn send(
    session: &mut SessionState,
    message: ChatMessage,
    transport: &dyn Transport,
) -> Result<String, GatewayError> {
    if message.role != Role::User {
        return Err(GatewayError::InvalidArgument("only user messages can be sent".into()));
    }
    let needed = session.estimator.estimate(&message);
    if needed > session.budget {
        return Err(GatewayError::BudgetExceeded { needed, budget: session.budget });
    }
    let snapshot = session.clone();
    session.messages.push(message);
    if let Err(e) = session.truncate_history() {
        *session = snapshot;
        return Err(e);
    }
    let request = ChatRequest {
        model: session.model_id.clone(),
        messages: session.messages.clone(),
        temperature: session.temperature,
        max_tokens: None,
    };
    let completion = match transport.complete(&request) {
        Ok(c) => c,
        Err(e) => {
            *session = snapshot;
            return Err(e);
        }
    };
    session.messages.push(ChatMessage::assistant(completion.text.clone()));
    session.exchanges.push(Exchange {
        request_hash: completion.request_hash,
        model_id: completion.model_id,
        source: transport.mode().to_string(),
    });
    session.truncate_history()?;
    Ok(completion.text)
}
