use serde::{Deserialize, Serialize};

use super::directive::AdaptationDirective;
use crate::state::AttentionState;
use crate::stream::Micros;

pub const DEFAULT_HISTORY_TURNS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
    System,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::System => "system",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub content: String,
    pub ts_us: Micros,
    pub state_at_send: AttentionState,
    /// Directive in force when the turn was sent.
    pub directive_id: String,
    /// The backend did not answer this user turn.
    #[serde(default)]
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// What the backend receives for one user message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub directive_id: String,
    pub system: String,
    pub history: Vec<ChatMessage>,
    pub user_msg: String,
}

impl ChatRequest {
    /// System message, history, then the new user message.
    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut out = Vec::with_capacity(self.history.len() + 2);
        out.push(ChatMessage {
            role: Role::System,
            content: self.system.clone(),
        });
        out.extend(self.history.iter().cloned());
        out.push(ChatMessage {
            role: Role::User,
            content: self.user_msg.clone(),
        });
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("empty message")]
    EmptyMessage,
}

/// Builds the backend request from the active directive and the last
/// `max_history` turns of the conversation.
pub fn compose_prompt(
    directive: &AdaptationDirective,
    conversation: &[ChatTurn],
    user_msg: &str,
    max_history: usize,
) -> Result<ChatRequest, PromptError> {
    if user_msg.trim().is_empty() {
        return Err(PromptError::EmptyMessage);
    }
    let skip = conversation.len().saturating_sub(max_history);
    Ok(ChatRequest {
        directive_id: directive.id.clone(),
        system: directive.system_prompt.clone(),
        history: conversation[skip..]
            .iter()
            .map(|t| ChatMessage {
                role: t.role,
                content: t.content.clone(),
            })
            .collect(),
        user_msg: user_msg.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::DirectiveSet;

    fn turn(i: usize) -> ChatTurn {
        ChatTurn {
            role: if i % 2 == 0 { Role::User } else { Role::Assistant },
            content: format!("turn {i}"),
            ts_us: i as Micros,
            state_at_send: AttentionState::StableAttention,
            directive_id: "stable_attention".into(),
            failed: false,
        }
    }

    #[test]
    fn history_is_bounded() {
        let set = DirectiveSet::builtin();
        let d = set.directive_for(AttentionState::StableAttention);
        let conv: Vec<_> = (0..25).map(turn).collect();
        let req = compose_prompt(d, &conv, "next", DEFAULT_HISTORY_TURNS).unwrap();
        assert_eq!(req.history.len(), 20);
        assert_eq!(req.history[0].content, "turn 5");
        assert_eq!(req.messages().len(), 22);
    }

    #[test]
    fn empty_message_rejected() {
        let set = DirectiveSet::builtin();
        let d = set.directive_for(AttentionState::StableAttention);
        assert_eq!(compose_prompt(d, &[], "  ", 20), Err(PromptError::EmptyMessage));
    }

    #[test]
    fn overload_prompt_asks_for_steps_and_summary() {
        let set = DirectiveSet::builtin();
        let req = compose_prompt(set.directive_for(AttentionState::CognitiveOverload), &[], "help", 20).unwrap();
        assert!(req.system.contains("step-by-step"));
        assert!(req.system.contains("Key Points Summary"));
    }
}
