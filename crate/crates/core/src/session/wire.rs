//! Feed protocol, version 1. Every message is one JSON object per websocket
//! text frame (or per line when written to a file) carrying `"v": 1` and a
//! `"type"` tag.
//!
//! Server to client:
//!
//! | type          | fields |
//! |---------------|--------|
//! | `hello`       | `session_id`, `mode`, `state`, `directive` (full directive object) |
//! | `state_update`| `state` (raw classification, null when degraded), `probs` (null when degraded), `emitted`, `changed`, `degraded`, `window_end_us` |
//! | `directive`   | `id`, `state`, `visual`, `style`, `structure`, `strategy`, `hooks` |
//! | `chat`        | `role`, `content`, `ts_us`, `state_at_send`, `directive_id`, `failed` |
//! | `probe`       | `onset_us`, `deadline_us` |
//! | `probe_ack`   | `onset_us`, `rating`, `expired` |
//! | `quality`     | `window_end_us`, `quality`, `low_quality`, `engagement`, `theta`, `alpha`, `beta`, `fixation_count` |
//! | `session_end` | `clock_us` |
//! | `error`       | `code`, `message` |
//!
//! Client to server:
//!
//! | type             | fields |
//! |------------------|--------|
//! | `user_msg`       | `content` |
//! | `probe_response` | `onset_us`, `rating` (1-5) |
//! | `steer`          | `state` (state name, or null to follow the script) |
//! | `pause`          | `paused` |
//!
//! State names are the variant names, e.g. `"DroppingAttention"`.

use serde::{Deserialize, Serialize};

use super::events::{Event, EventKind, SessionMode};
use crate::adapt::{AdaptationDirective, Role, VisualFeedback};
use crate::state::{AttentionState, NUM_STATES};
use crate::stream::Micros;

pub const WIRE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectiveMsg {
    pub id: String,
    pub state: AttentionState,
    pub visual: VisualFeedback,
    pub style: String,
    pub structure: String,
    pub strategy: String,
    pub hooks: Vec<String>,
}

impl From<&AdaptationDirective> for DirectiveMsg {
    fn from(d: &AdaptationDirective) -> Self {
        Self {
            id: d.id.clone(),
            state: d.state,
            visual: d.visual_feedback,
            style: d.interaction_style.clone(),
            structure: d.info_structure.clone(),
            strategy: d.engagement_strategy.clone(),
            hooks: d.hooks.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        session_id: String,
        mode: SessionMode,
        state: AttentionState,
        directive: DirectiveMsg,
    },
    StateUpdate {
        state: Option<AttentionState>,
        probs: Option<[f64; NUM_STATES]>,
        emitted: AttentionState,
        changed: bool,
        degraded: bool,
        window_end_us: Micros,
    },
    Directive(DirectiveMsg),
    Chat {
        role: Role,
        content: String,
        ts_us: Micros,
        state_at_send: AttentionState,
        directive_id: String,
        failed: bool,
    },
    Probe {
        onset_us: Micros,
        deadline_us: Micros,
    },
    ProbeAck {
        onset_us: Micros,
        rating: u8,
        expired: bool,
    },
    Quality {
        window_end_us: Micros,
        quality: f64,
        low_quality: bool,
        engagement: f64,
        theta: f64,
        alpha: f64,
        beta: f64,
        fixation_count: usize,
    },
    SessionEnd {
        clock_us: Micros,
    },
    Error {
        code: String,
        message: String,
    },
}

impl ServerMessage {
    /// Chat messages are never dropped from a slow client's queue.
    pub fn is_chat(&self) -> bool {
        matches!(self, ServerMessage::Chat { .. })
    }

    /// The feed projection of a log event. A state change rides on the
    /// classification's `state_update`, so it maps to nothing here.
    pub fn from_event(e: &Event, changed: bool) -> Option<Self> {
        Some(match &e.kind {
            EventKind::Window(w) => ServerMessage::Quality {
                window_end_us: w.end_us,
                quality: w.quality,
                low_quality: w.low_quality,
                engagement: w.features[3],
                theta: w.features[0],
                alpha: w.features[1],
                beta: w.features[2],
                fixation_count: w.fixation_count,
            },
            EventKind::Classification {
                window_end_us,
                state,
                probs,
                emitted,
            } => ServerMessage::StateUpdate {
                state: Some(*state),
                probs: Some(*probs),
                emitted: *emitted,
                changed,
                degraded: false,
                window_end_us: *window_end_us,
            },
            EventKind::Degraded {
                window_end_us,
                emitted,
                ..
            } => ServerMessage::StateUpdate {
                state: None,
                probs: None,
                emitted: *emitted,
                changed: false,
                degraded: true,
                window_end_us: *window_end_us,
            },
            EventKind::Directive(d) => ServerMessage::Directive(d.into()),
            EventKind::Chat { turn: t } => ServerMessage::Chat {
                role: t.role,
                content: t.content.clone(),
                ts_us: t.ts_us,
                state_at_send: t.state_at_send,
                directive_id: t.directive_id.clone(),
                failed: t.failed,
            },
            EventKind::Probe {
                onset_us,
                deadline_us,
            } => ServerMessage::Probe {
                onset_us: *onset_us,
                deadline_us: *deadline_us,
            },
            EventKind::ProbeResponse {
                onset_us,
                rating,
                expired,
            } => ServerMessage::ProbeAck {
                onset_us: *onset_us,
                rating: *rating,
                expired: *expired,
            },
            EventKind::SessionEnd { clock_us } => ServerMessage::SessionEnd {
                clock_us: *clock_us,
            },
            EventKind::Segment { .. }
            | EventKind::StateChange { .. }
            | EventKind::Steer { .. }
            | EventKind::Pause { .. } => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    UserMsg { content: String },
    ProbeResponse { onset_us: Micros, rating: u8 },
    Steer { state: Option<AttentionState> },
    Pause { paused: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub v: u32,
    #[serde(flatten)]
    pub msg: T,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WireError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    Version(u32),
}

pub fn encode(msg: &ServerMessage) -> String {
    serde_json::to_string(&Envelope {
        v: WIRE_VERSION,
        msg,
    })
    .expect("server messages serialize")
}

pub fn decode_server(text: &str) -> Result<ServerMessage, WireError> {
    decode(text)
}

pub fn encode_client(msg: &ClientMessage) -> String {
    serde_json::to_string(&Envelope {
        v: WIRE_VERSION,
        msg,
    })
    .expect("client messages serialize")
}

pub fn decode_client(text: &str) -> Result<ClientMessage, WireError> {
    decode(text)
}

fn decode<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, WireError> {
    let env: Envelope<T> =
        serde_json::from_str(text).map_err(|e| WireError::Malformed(e.to_string()))?;
    if env.v != WIRE_VERSION {
        return Err(WireError::Version(env.v));
    }
    Ok(env.msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn state_update_shape() {
        let m = ServerMessage::StateUpdate {
            state: Some(AttentionState::DroppingAttention),
            probs: Some([0.1, 0.1, 0.6, 0.1, 0.1]),
            emitted: AttentionState::StableAttention,
            changed: false,
            degraded: false,
            window_end_us: 6_000_000,
        };
        let v: serde_json::Value = serde_json::from_str(&encode(&m)).unwrap();
        assert_eq!(v["v"], 1);
        assert_eq!(v["type"], "state_update");
        assert_eq!(v["state"], "DroppingAttention");
        assert_eq!(v["probs"].as_array().unwrap().len(), 5);
        assert_eq!(v["window_end_us"], 6_000_000);
        assert_eq!(decode_server(&encode(&m)).unwrap(), m);
    }

    #[test]
    fn directive_carries_visual_name() {
        let set = crate::adapt::DirectiveSet::builtin();
        let m = ServerMessage::Directive(set.directive_for(AttentionState::DroppingAttention).into());
        let v: serde_json::Value = serde_json::from_str(&encode(&m)).unwrap();
        assert_eq!(v["type"], "directive");
        assert_eq!(v["visual"], "HighlightCues");
    }

    #[test]
    fn client_messages_parse() {
        let cases = [
            (json!({"v":1,"type":"user_msg","content":"hi"}), ClientMessage::UserMsg { content: "hi".into() }),
            (
                json!({"v":1,"type":"probe_response","onset_us":5,"rating":3}),
                ClientMessage::ProbeResponse { onset_us: 5, rating: 3 },
            ),
            (
                json!({"v":1,"type":"steer","state":"Distraction"}),
                ClientMessage::Steer { state: Some(AttentionState::Distraction) },
            ),
            (json!({"v":1,"type":"steer","state":null}), ClientMessage::Steer { state: None }),
            (json!({"v":1,"type":"pause","paused":true}), ClientMessage::Pause { paused: true }),
        ];
        for (text, want) in cases {
            assert_eq!(decode_client(&text.to_string()).unwrap(), want);
            assert_eq!(decode_client(&encode_client(&want)).unwrap(), want);
        }
    }

    #[test]
    fn version_and_garbage_rejected() {
        assert_eq!(
            decode_client(r#"{"v":2,"type":"pause","paused":true}"#),
            Err(WireError::Version(2))
        );
        assert!(matches!(decode_client("{"), Err(WireError::Malformed(_))));
        assert!(matches!(decode_client(r#"{"v":1,"type":"dance"}"#), Err(WireError::Malformed(_))));
    }
}
