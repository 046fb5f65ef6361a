//! Prompt assembly for the two reasoning stages and parsing of the model's
//! structured answers.
//!
//! The high-level query decomposes a task into subtasks. The low-level query
//! selects keypoints and waypoint tiles on an annotated observation. Prompt
//! texts ship as assets; in-context examples and ablations only add or
//! delete whole blocks around them.

mod parse;
mod store;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{
    extract_json, parse_high_level_response, parse_low_level_response, AffordanceResponse, Height, RESPONSE_FIELDS,
    TargetAngle,
};
pub use store::{select_in_context_examples, ExampleStore, StoredExample, DEFAULT_IN_CONTEXT_EXAMPLES};

use crate::marks::{AnnotatedImage, ObjectRole};
use crate::vlm::{ImageRef, Message, Part};

pub const HIGH_LEVEL_PROMPT: &str = include_str!("../../assets/prompts/high_level.txt");
pub const INPUT_DESCRIPTION: &str = include_str!("../../assets/prompts/input_description.txt");
pub const POINT_EXPLANATION: &str = include_str!("../../assets/prompts/explanation.txt");
pub const MOTION_OUTPUT: &str = include_str!("../../assets/prompts/motion_output.txt");
pub const STEP_BY_STEP: &str = include_str!("../../assets/prompts/step_by_step.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing field {0:?}")]
    MissingField(String),
    #[error("the plan has no subtasks")]
    EmptyPlan,
    #[error("{field}: unknown label {label:?}; valid labels are {valid:?}")]
    UnknownLabel { field: String, label: String, valid: Vec<String> },
    #[error("{field}: malformed tile name {value:?}")]
    MalformedTile { field: String, value: String },
    #[error("{field}: tile {value:?} is outside the grid")]
    TileOutOfRange { field: String, value: String },
    #[error("{field}: {value:?} is not one of {allowed}")]
    InvalidOption { field: String, value: String, allowed: String },
    #[error("inconsistent response: {0}")]
    ConsistencyViolation(String),
    #[error("marks do not match the subtask: {0}")]
    MarkMismatch(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T, E = PromptError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq)]
pub struct TaskRequest {
    pub instruction: String,
    pub observation: ImageRef,
}

/// One step of the high-level plan, with the field names the prompt asks for.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskSpec {
    pub instruction: String,
    pub object_grasped: String,
    pub object_unattached: String,
    pub motion_direction: String,
}

impl SubtaskSpec {
    pub fn has_grasped(&self) -> bool {
        !self.object_grasped.is_empty()
    }

    pub fn has_unattached(&self) -> bool {
        !self.object_unattached.is_empty()
    }

    /// The JSON dictionary placed in the low-level request.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("subtask serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HighLevelPlan {
    pub subtasks: Vec<SubtaskSpec>,
}

impl HighLevelPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

/// A prior successful exchange shown to the model before the live query.
#[derive(Clone, Debug, PartialEq)]
pub struct InContextExample {
    pub image: ImageRef,
    pub request_text: String,
    pub response_text: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    /// Skip decomposition and query the low level once with every object marked.
    pub disable_hierarchy: bool,
    /// Drop the block defining keypoints and waypoints.
    pub disable_point_description: bool,
    /// Drop the closing step-by-step paragraph.
    pub disable_cot: bool,
}

impl AblationConfig {
    pub fn count(&self) -> usize {
        [self.disable_hierarchy, self.disable_point_description, self.disable_cot]
            .iter()
            .filter(|f| **f)
            .count()
    }
}

pub fn high_level_text() -> &'static str {
    HIGH_LEVEL_PROMPT
}

/// The low-level prompt text with ablated blocks removed. Blocks are
/// separated by one blank line.
pub fn low_level_text(ablation: &AblationConfig) -> String {
    let mut blocks = vec![INPUT_DESCRIPTION];
    if !ablation.disable_point_description {
        blocks.push(POINT_EXPLANATION);
    }
    blocks.push(MOTION_OUTPUT);
    if !ablation.disable_cot {
        blocks.push(STEP_BY_STEP);
    }
    blocks.join("\n")
}

fn push_examples(parts: &mut Vec<Part>, examples: &[InContextExample]) {
    for ex in examples {
        if !ex.request_text.is_empty() {
            parts.push(Part::Text(ex.request_text.clone()));
        }
        parts.push(Part::Image(ex.image.clone()));
        parts.push(Part::Text(ex.response_text.clone()));
    }
}

/// `[prompt, examples.., instruction, observation]` as one user message.
pub fn build_high_level_prompt(task: &TaskRequest, examples: &[InContextExample]) -> Vec<Message> {
    let mut parts = vec![Part::Text(high_level_text().to_string())];
    push_examples(&mut parts, examples);
    parts.push(Part::Text(task.instruction.clone()));
    parts.push(Part::Image(task.observation.clone()));
    vec![Message::user(parts)]
}

/// `[prompt, examples.., subtask JSON, annotated observation]`.
pub fn build_low_level_prompt(
    subtask: &SubtaskSpec,
    annotated: &AnnotatedImage,
    examples: &[InContextExample],
    ablation: &AblationConfig,
) -> Result<Vec<Message>> {
    check_marks(subtask, annotated)?;
    Ok(low_level_message(subtask.to_json(), annotated, examples, ablation))
}

/// Low-level prompt without a decomposed subtask: the raw instruction takes
/// the place of the subtask dictionary.
pub fn build_flat_prompt(
    instruction: &str,
    annotated: &AnnotatedImage,
    examples: &[InContextExample],
    ablation: &AblationConfig,
) -> Vec<Message> {
    low_level_message(instruction.to_string(), annotated, examples, ablation)
}

fn low_level_message(
    request: String,
    annotated: &AnnotatedImage,
    examples: &[InContextExample],
    ablation: &AblationConfig,
) -> Vec<Message> {
    let mut parts = vec![Part::Text(low_level_text(ablation))];
    push_examples(&mut parts, examples);
    parts.push(Part::Text(request));
    parts.push(Part::Image(annotated_ref(annotated)));
    vec![Message::user(parts)]
}

/// The annotated observation as a message image, named after its base image.
pub fn annotated_ref(annotated: &AnnotatedImage) -> ImageRef {
    ImageRef::from_png(format!("{}_marked", annotated.markset.base_image_id), annotated.to_png())
}

fn check_marks(subtask: &SubtaskSpec, marks: &AnnotatedImage) -> Result<()> {
    let ms = &marks.markset;
    for (role, name) in [
        (ObjectRole::Grasped, &subtask.object_grasped),
        (ObjectRole::Unattached, &subtask.object_unattached),
    ] {
        if ms.has_role(role) != !name.is_empty() {
            return Err(PromptError::MarkMismatch(format!(
                "{role:?} marks present: {}, object named: {name:?}",
                ms.has_role(role)
            )));
        }
        if let Some(c) = ms.candidates.iter().find(|c| c.role == role && !c.object.is_empty() && c.object != *name) {
            return Err(PromptError::MarkMismatch(format!(
                "{} is on {:?}, expected {name:?}",
                c.label, c.object
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablations_drop_whole_blocks() {
        let full = low_level_text(&AblationConfig::default());
        let no_desc = low_level_text(&AblationConfig { disable_point_description: true, ..Default::default() });
        let no_cot = low_level_text(&AblationConfig { disable_cot: true, ..Default::default() });
        assert_eq!(full.replacen(&format!("{POINT_EXPLANATION}\n"), "", 1), no_desc);
        assert_eq!(full.replacen(&format!("\n{STEP_BY_STEP}"), "", 1), no_cot);
        assert!(!no_cot.contains("Think about this problem step by step"));
        assert!(!no_desc.contains("The definitions of these points"));
        assert!(full.contains("Think about this problem step by step"));
    }

    #[test]
    fn zero_example_high_level_layout() {
        let obs = ImageRef::from_png("s0", vec![1, 2, 3]);
        let task = TaskRequest { instruction: "Tidy up".into(), observation: obs.clone() };
        let msgs = build_high_level_prompt(&task, &[]);
        assert_eq!(msgs.len(), 1);
        assert_eq!(
            msgs[0].parts,
            vec![Part::Text(HIGH_LEVEL_PROMPT.into()), Part::Text("Tidy up".into()), Part::Image(obs)]
        );
    }

    #[test]
    fn subtask_json_field_order() {
        let s = SubtaskSpec {
            instruction: "a".into(),
            object_grasped: "b".into(),
            object_unattached: "".into(),
            motion_direction: "d".into(),
        };
        assert_eq!(
            s.to_json(),
            "{\n  \"instruction\": \"a\",\n  \"object_grasped\": \"b\",\n  \"object_unattached\": \"\",\n  \"motion_direction\": \"d\"\n}"
        );
    }
}
