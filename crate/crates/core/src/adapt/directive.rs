use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::state::AttentionState;

pub const DEFAULT_TEMPLATES: &str = include_str!("../../templates/default.toml");

/// UI treatment the dashboard applies for a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VisualFeedback {
    FocusMode,
    Default,
    HighlightCues,
    SoftenedUI,
    AnimatedCues,
}

impl VisualFeedback {
    pub fn for_state(state: AttentionState) -> Self {
        match state {
            AttentionState::HighAttention => Self::FocusMode,
            AttentionState::StableAttention => Self::Default,
            AttentionState::DroppingAttention => Self::HighlightCues,
            AttentionState::CognitiveOverload => Self::SoftenedUI,
            AttentionState::Distraction => Self::AnimatedCues,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::FocusMode => "FocusMode",
            Self::Default => "Default",
            Self::HighlightCues => "HighlightCues",
            Self::SoftenedUI => "SoftenedUI",
            Self::AnimatedCues => "AnimatedCues",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            Self::FocusMode,
            Self::Default,
            Self::HighlightCues,
            Self::SoftenedUI,
            Self::AnimatedCues,
        ]
        .into_iter()
        .find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptationDirective {
    pub state: AttentionState,
    /// Stable id, the state's snake_case name.
    pub id: String,
    pub interaction_style: String,
    pub info_structure: String,
    pub visual_feedback: VisualFeedback,
    pub engagement_strategy: String,
    pub hooks: Vec<String>,
    /// Preamble plus the state's instructions.
    pub system_prompt: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TemplateError {
    #[error("template parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("template has no section for state `{0}`")]
    MissingState(&'static str),
    #[error("template section `{state}` is missing field `{field}`")]
    MissingField { state: &'static str, field: &'static str },
    #[error("template section `{state}`: visual must be `{expected}`, got `{got}`")]
    VisualMismatch {
        state: &'static str,
        expected: &'static str,
        got: String,
    },
    #[error("template section `{0}` is not a known state")]
    UnknownSection(String),
    #[error("cannot read template file: {0}")]
    Io(String),
}

/// The complete state → directive mapping, validated at load time so no
/// lookup can fail later.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectiveSet {
    directives: Vec<AdaptationDirective>,
}

impl DirectiveSet {
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|e| TemplateError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| TemplateError::Parse {
            line: e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1),
            message: e.message().to_string(),
        })?;
        let preamble = table
            .get("preamble")
            .and_then(|v| v.as_str())
            .unwrap_or("")
            .trim();
        for key in table.keys() {
            if key != "preamble" && !AttentionState::ALL.iter().any(|s| s.id() == key) {
                return Err(TemplateError::UnknownSection(key.clone()));
            }
        }
        let mut directives = Vec::with_capacity(AttentionState::ALL.len());
        for state in AttentionState::ALL {
            let sid = state.id();
            let section = table
                .get(sid)
                .and_then(|v| v.as_table())
                .ok_or(TemplateError::MissingState(sid))?;
            let field = |name: &'static str| -> Result<String, TemplateError> {
                section
                    .get(name)
                    .and_then(|v| v.as_str())
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .ok_or(TemplateError::MissingField { state: sid, field: name })
            };
            let visual_text = field("visual")?;
            let expected = VisualFeedback::for_state(state);
            if VisualFeedback::parse(&visual_text) != Some(expected) {
                return Err(TemplateError::VisualMismatch {
                    state: sid,
                    expected: expected.name(),
                    got: visual_text,
                });
            }
            let hooks = section
                .get("hooks")
                .and_then(|v| v.as_array())
                .map(|a| a.iter().filter_map(|h| h.as_str().map(str::to_string)).collect())
                .unwrap_or_default();
            let body = field("system_prompt")?;
            let system_prompt = if preamble.is_empty() {
                body
            } else {
                format!("{preamble}\n\n{body}")
            };
            directives.push(AdaptationDirective {
                state,
                id: sid.to_string(),
                interaction_style: field("style")?,
                info_structure: field("structure")?,
                visual_feedback: expected,
                engagement_strategy: field("strategy")?,
                hooks,
                system_prompt,
            });
        }
        Ok(Self { directives })
    }

    pub fn directive_for(&self, state: AttentionState) -> &AdaptationDirective {
        &self.directives[state.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &AdaptationDirective> {
        self.directives.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_covers_every_state() {
        let set = DirectiveSet::builtin();
        for s in AttentionState::ALL {
            let d = set.directive_for(s);
            assert_eq!(d.state, s);
            assert_eq!(d.visual_feedback, VisualFeedback::for_state(s));
            assert!(d.system_prompt.starts_with("You are a study assistant"));
        }
    }

    #[test]
    fn missing_section_is_reported() {
        let text = DEFAULT_TEMPLATES.replace("[distraction]", "[not_a_state]");
        assert_eq!(
            DirectiveSet::parse(&text),
            Err(TemplateError::UnknownSection("not_a_state".into()))
        );
        let cut = &DEFAULT_TEMPLATES[..DEFAULT_TEMPLATES.find("[distraction]").unwrap()];
        assert_eq!(DirectiveSet::parse(cut), Err(TemplateError::MissingState("distraction")));
    }

    #[test]
    fn wrong_visual_is_rejected() {
        let text = DEFAULT_TEMPLATES.replacen("visual = \"FocusMode\"", "visual = \"Default\"", 1);
        assert!(matches!(
            DirectiveSet::parse(&text),
            Err(TemplateError::VisualMismatch { state: "high_attention", .. })
        ));
    }

    #[test]
    fn missing_field_is_reported() {
        let text = DEFAULT_TEMPLATES.replacen("strategy = \"curiosity_hook\"\n", "", 1);
        assert_eq!(
            DirectiveSet::parse(&text),
            Err(TemplateError::MissingField { state: "distraction", field: "strategy" })
        );
    }
}
