use serde::{Deserialize, Serialize};

use super::message::{ChatMessage, Role};
use super::GatewayError;

pub const DEFAULT_MODEL_ID: &str = "gpt-4o";
pub const DEFAULT_TOKEN_BUDGET: usize = 8192;

/// Character-count token heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEstimator {
    pub chars_per_token: usize,
    pub tokens_per_image: usize,
}

impl Default for TokenEstimator {
    fn default() -> Self {
        TokenEstimator { chars_per_token: 4, tokens_per_image: 85 }
    }
}

impl TokenEstimator {
    pub fn estimate(&self, message: &ChatMessage) -> usize {
        let chars = message.text.chars().count();
        chars.div_ceil(self.chars_per_token.max(1)) + message.images.len() * self.tokens_per_image
    }
}

/// One completed request/response exchange, kept for provenance even after
/// the messages themselves are evicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub request_hash: String,
    pub model_id: String,
    pub source: String,
}

/// Conversation history under a token budget. The first message is the
/// system prompt and is never evicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub messages: Vec<ChatMessage>,
    pub token_estimate: usize,
    pub budget: usize,
    #[serde(default)]
    pub estimator: TokenEstimator,
    #[serde(default)]
    pub exchanges: Vec<Exchange>,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl SessionState {
    pub fn new(system_prompt: impl Into<String>, budget: usize) -> Self {
        Self::with_estimator(system_prompt, budget, TokenEstimator::default())
    }

    pub fn with_estimator(
        system_prompt: impl Into<String>,
        budget: usize,
        estimator: TokenEstimator,
    ) -> Self {
        let mut session = SessionState {
            messages: vec![ChatMessage::system(system_prompt)],
            token_estimate: 0,
            budget,
            estimator,
            exchanges: Vec::new(),
            model_id: DEFAULT_MODEL_ID.to_string(),
            temperature: None,
        };
        session.recompute();
        session
    }

    pub fn with_model(mut self, model_id: impl Into<String>, temperature: Option<f64>) -> Self {
        self.model_id = model_id.into();
        self.temperature = temperature;
        self
    }

    pub fn recompute(&mut self) {
        self.token_estimate = self.messages.iter().map(|m| self.estimator.estimate(m)).sum();
    }

    /// Number of complete user/assistant pairs after the system prompt.
    pub fn pair_count(&self) -> usize {
        self.messages
            .windows(2)
            .skip(1)
            .filter(|w| w[0].role == Role::User && w[1].role == Role::Assistant)
            .count()
    }

    pub fn last_assistant_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::Assistant)
            .map(|m| m.text.as_str())
    }

    fn evict_oldest_pair(&mut self) -> bool {
        let position = (1..self.messages.len().saturating_sub(1)).find(|&i| {
            self.messages[i].role == Role::User && self.messages[i + 1].role == Role::Assistant
        });
        match position {
            Some(i) => {
                self.messages.drain(i..i + 2);
                true
            }
            None => false,
        }
    }

    /// Evicts the oldest user/assistant pairs until the estimate fits the
    /// budget. Order among survivors is preserved.
    pub fn truncate_history(&mut self) -> Result<(), GatewayError> {
        self.recompute();
        let system_tokens = self
            .messages
            .first()
            .map(|m| self.estimator.estimate(m))
            .unwrap_or(0);
        if system_tokens > self.budget {
            return Err(GatewayError::BudgetExceeded {
                needed: system_tokens,
                budget: self.budget,
            });
        }
        while self.token_estimate > self.budget {
            if !self.evict_oldest_pair() {
                return Err(GatewayError::BudgetExceeded {
                    needed: self.token_estimate,
                    budget: self.budget,
                });
            }
            self.recompute();
        }
        Ok(())
    }
}

/// Functional form of [`SessionState::truncate_history`].
pub fn truncate_history(mut session: SessionState) -> Result<SessionState, GatewayError> {
    session.truncate_history()?;
    Ok(session)
}
