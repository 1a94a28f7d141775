//! Prompt templates with `[NAME]` placeholders.

use std::fs;
use std::path::Path;

use super::GatewayError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub text: String,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        PromptTemplate { name: name.into(), text: text.into() }
    }

    /// Placeholders (`[UPPER_CASE]` tokens) in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let bytes = self.text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'[' {
                if let Some(len) = self.text[i + 1..].find(']') {
                    let inner = &self.text[i + 1..i + 1 + len];
                    if !inner.is_empty()
                        && inner.chars().all(|c| c.is_ascii_uppercase() || c == '_')
                        && !out.iter().any(|p| p == inner)
                    {
                        out.push(inner.to_string());
                    }
                }
            }
            i += 1;
        }
        out
    }

    /// Substitutes every placeholder; all of them must be supplied.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, GatewayError> {
        let mut text = self.text.clone();
        for placeholder in self.placeholders() {
            let value = values
                .iter()
                .find(|(k, _)| *k == placeholder)
                .map(|(_, v)| *v)
                .ok_or_else(|| GatewayError::MissingPlaceholder {
                    template: self.name.clone(),
                    placeholder: placeholder.clone(),
                })?;
            text = text.replace(&format!("[{placeholder}]"), value);
        }
        Ok(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub system: PromptTemplate,
    pub video_analyzer: PromptTemplate,
    pub scene_analyzer: PromptTemplate,
    pub task_planner: PromptTemplate,
    pub feedback: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            system: PromptTemplate::new("system.txt", include_str!("../../assets/prompts/system.txt")),
            video_analyzer: PromptTemplate::new(
                "video_analyzer.txt",
                include_str!("../../assets/prompts/video_analyzer.txt"),
            ),
            scene_analyzer: PromptTemplate::new(
                "scene_analyzer.txt",
                include_str!("../../assets/prompts/scene_analyzer.txt"),
            ),
            task_planner: PromptTemplate::new(
                "task_planner.txt",
                include_str!("../../assets/prompts/task_planner.txt"),
            ),
            feedback: PromptTemplate::new("feedback.txt", include_str!("../../assets/prompts/feedback.txt")),
        }
    }
}

impl PromptSet {
    /// Built-in templates, overridden by any same-named file in `dir`.
    pub fn load(dir: Option<&Path>) -> Result<Self, GatewayError> {
        let mut set = PromptSet::default();
        let Some(dir) = dir else { return Ok(set) };
        for template in [
            &mut set.system,
            &mut set.video_analyzer,
            &mut set.scene_analyzer,
            &mut set.task_planner,
            &mut set.feedback,
        ] {
            let path = dir.join(&template.name);
            if path.exists() {
                template.text = fs::read_to_string(path)?;
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_placeholders() {
        let set = PromptSet::default();
        assert_eq!(set.scene_analyzer.placeholders(), vec!["ACTION"]);
        assert_eq!(set.task_planner.placeholders(), vec!["ACTION", "OBJECTS", "ENVIRONMENT"]);
        assert_eq!(set.feedback.placeholders(), vec!["FEEDBACK"]);
        assert!(set.video_analyzer.placeholders().is_empty());
    }

    #[test]
    fn render_substitutes_and_requires_all_values() {
        let t = PromptTemplate::new("t", "Do [ACTION] now. [ACTION]! keep [lower] and [1]");
        assert_eq!(
            t.render(&[("ACTION", "open the fridge")]).unwrap(),
            "Do open the fridge now. open the fridge! keep [lower] and [1]"
        );
        assert!(matches!(t.render(&[]), Err(GatewayError::MissingPlaceholder { .. })));
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("scene_analyzer.txt"), "custom [ACTION]").unwrap();
        let set = PromptSet::load(Some(dir.path())).unwrap();
        assert_eq!(set.scene_analyzer.text, "custom [ACTION]");
        assert_eq!(set.task_planner, PromptSet::default().task_planner);
    }
}
