use std::fmt;
use std::str::FromStr;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::{Map, Value};

use super::{HighLevelPlan, PromptError, Result, SubtaskSpec};
use crate::geometry::Vector3;
use crate::marks::{normalize_label, parse_tile_name, MarkSet, MarksError, ObjectRole, TileId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Height {
    Same,
    Above,
}

impl Height {
    pub const OPTIONS: [&'static str; 2] = ["same", "above"];

    pub fn as_str(self) -> &'static str {
        match self {
            Height::Same => "same",
            Height::Above => "above",
        }
    }
}

impl FromStr for Height {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "same" => Ok(Height::Same),
            "above" => Ok(Height::Above),
            _ => Err(()),
        }
    }
}

/// Direction the grasp-to-function axis should point during manipulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetAngle {
    Forward,
    Backward,
    Upside,
    Downside,
    Left,
    Right,
}

impl TargetAngle {
    pub const ALL: [TargetAngle; 6] = [
        TargetAngle::Forward,
        TargetAngle::Backward,
        TargetAngle::Upside,
        TargetAngle::Downside,
        TargetAngle::Left,
        TargetAngle::Right,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetAngle::Forward => "forward",
            TargetAngle::Backward => "backward",
            TargetAngle::Upside => "upside",
            TargetAngle::Downside => "downside",
            TargetAngle::Left => "left",
            TargetAngle::Right => "right",
        }
    }

    /// Unit axis in the robot frame: x forward, y left, z up.
    pub fn axis(self) -> Vector3 {
        match self {
            TargetAngle::Forward => Vector3::x(),
            TargetAngle::Backward => -Vector3::x(),
            TargetAngle::Left => Vector3::y(),
            TargetAngle::Right => -Vector3::y(),
            TargetAngle::Upside => Vector3::z(),
            TargetAngle::Downside => -Vector3::z(),
        }
    }
}

impl FromStr for TargetAngle {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        let s = s.trim().to_ascii_lowercase();
        TargetAngle::ALL.into_iter().find(|a| a.as_str() == s).ok_or(())
    }
}

impl fmt::Display for TargetAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A validated low-level answer. Empty fields are `None`; labels are in
/// canonical form (`P3`).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AffordanceResponse {
    pub grasp_keypoint: Option<String>,
    pub function_keypoint: Option<String>,
    pub target_keypoint: Option<String>,
    pub pre_contact_tile: Option<TileId>,
    pub post_contact_tile: Option<TileId>,
    pub pre_contact_height: Option<Height>,
    pub post_contact_height: Option<Height>,
    pub target_angle: Option<TargetAngle>,
    /// Free text the model wrote before the JSON payload.
    pub rationale_text: String,
}

pub const RESPONSE_FIELDS: [&str; 8] = [
    "grasp_keypoint",
    "function_keypoint",
    "target_keypoint",
    "pre_contact_tile",
    "post_contact_tile",
    "pre_contact_height",
    "post_contact_height",
    "target_angle",
];

impl AffordanceResponse {
    fn field_strings(&self) -> [String; 8] {
        let s = |o: &Option<String>| o.clone().unwrap_or_default();
        let t = |o: &Option<TileId>| o.map(|t| t.to_string()).unwrap_or_default();
        let h = |o: &Option<Height>| o.map(|h| h.as_str().to_string()).unwrap_or_default();
        [
            s(&self.grasp_keypoint),
            s(&self.function_keypoint),
            s(&self.target_keypoint),
            t(&self.pre_contact_tile),
            t(&self.post_contact_tile),
            h(&self.pre_contact_height),
            h(&self.post_contact_height),
            self.target_angle.map(|a| a.as_str().to_string()).unwrap_or_default(),
        ]
    }

    /// The eight-key dictionary, empty fields as `""`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("response serializes")
    }
}

impl Serialize for AffordanceResponse {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(8))?;
        for (k, v) in RESPONSE_FIELDS.iter().zip(self.field_strings()) {
            m.serialize_entry(k, &v)?;
        }
        m.end()
    }
}

/// Finds the first JSON value of the wanted kind in free text, skipping
/// prose and code fences. Returns the value and the prose before it.
pub fn extract_json(text: &str, want_array: bool) -> Result<(Value, String)> {
    let opener = if want_array { '[' } else { '{' };
    let mut first_err = None;
    for (i, c) in text.char_indices() {
        if c != opener {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(v)) if v.is_array() == want_array && v.is_object() != want_array => {
                return Ok((v, prose_before(&text[..i])));
            }
            Some(Err(e)) if first_err.is_none() => first_err = Some(e.to_string()),
            _ => {}
        }
    }
    Err(PromptError::MalformedJson(first_err.unwrap_or_else(|| {
        format!("no JSON {} found", if want_array { "array" } else { "object" })
    })))
}

fn prose_before(s: &str) -> String {
    let t = s.trim_end();
    let t = match t.rfind("```") {
        Some(i) if !t[i + 3..].contains(char::is_whitespace) => &t[..i],
        _ => t,
    };
    t.trim().to_string()
}

/// Parses the decomposition: a JSON list of subtask dictionaries.
pub fn parse_high_level_response(text: &str) -> Result<HighLevelPlan> {
    let (v, _) = extract_json(text, true)?;
    let items = v.as_array().expect("array");
    if items.is_empty() {
        return Err(PromptError::EmptyPlan);
    }
    let mut subtasks = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let obj = item
            .as_object()
            .ok_or_else(|| PromptError::MalformedJson(format!("subtask {i} is not a dictionary")))?;
        let spec = SubtaskSpec {
            instruction: string_field(obj, "instruction")?,
            object_grasped: string_field(obj, "object_grasped")?,
            object_unattached: string_field(obj, "object_unattached")?,
            motion_direction: string_field(obj, "motion_direction")?,
        };
        if spec.instruction.is_empty() {
            return Err(PromptError::ConsistencyViolation(format!("subtask {i} has no instruction")));
        }
        if !spec.has_grasped() && !spec.has_unattached() {
            return Err(PromptError::ConsistencyViolation(format!(
                "subtask {i} names neither object_grasped nor object_unattached"
            )));
        }
        subtasks.push(spec);
    }
    Ok(HighLevelPlan { subtasks })
}

/// Required key; `null` and blank strings read as empty.
fn string_field(obj: &Map<String, Value>, key: &str) -> Result<String> {
    match obj.get(key) {
        None => Err(PromptError::MissingField(key.to_string())),
        Some(Value::Null) => Ok(String::new()),
        Some(Value::String(s)) => Ok(s.trim().to_string()),
        Some(other) => Err(PromptError::MalformedJson(format!("{key} must be a string, got {other}"))),
    }
}

fn opt(s: String) -> Option<String> {
    (!s.is_empty()).then_some(s)
}

fn label_field(obj: &Map<String, Value>, key: &str, role: ObjectRole, ms: &MarkSet) -> Result<Option<String>> {
    let Some(raw) = opt(string_field(obj, key)?) else { return Ok(None) };
    let label = normalize_label(&raw);
    let ok = label.starts_with(role.prefix()) && ms.candidate(&label).is_some_and(|c| c.role == role);
    if !ok {
        return Err(PromptError::UnknownLabel {
            field: key.to_string(),
            label: raw,
            valid: ms.labels_for(role),
        });
    }
    Ok(Some(label))
}

fn tile_field(obj: &Map<String, Value>, key: &str, ms: &MarkSet) -> Result<Option<TileId>> {
    let Some(raw) = opt(string_field(obj, key)?) else { return Ok(None) };
    match parse_tile_name(&raw, &ms.grid) {
        Ok(t) => Ok(Some(t)),
        Err(MarksError::TileOutOfRange(_)) => Err(PromptError::TileOutOfRange { field: key.into(), value: raw }),
        Err(_) => Err(PromptError::MalformedTile { field: key.into(), value: raw }),
    }
}

fn option_field<T: FromStr>(obj: &Map<String, Value>, key: &str, allowed: &[&str]) -> Result<Option<T>> {
    let Some(raw) = opt(string_field(obj, key)?) else { return Ok(None) };
    raw.parse().map(Some).map_err(|_| PromptError::InvalidOption {
        field: key.into(),
        value: raw,
        allowed: allowed.join(", "),
    })
}

/// Parses and validates a low-level answer against the marks that were
/// shown.
///
/// With a subtask, field emptiness must follow the subtask's objects:
/// `grasp_keypoint` iff `object_grasped`, `target_keypoint` iff
/// `object_unattached`, `function_keypoint` iff both. Without one (the
/// undecomposed mode) the objects are inferred from which labels are
/// present, and `grasp_keypoint` and `function_keypoint` must lie on the
/// same object. When a target is given, both tiles and both heights are
/// required.
pub fn parse_low_level_response(
    text: &str,
    markset: &MarkSet,
    subtask: Option<&SubtaskSpec>,
) -> Result<AffordanceResponse> {
    let (v, rationale) = extract_json(text, false)?;
    let obj = v.as_object().expect("object");
    for key in RESPONSE_FIELDS {
        if !obj.contains_key(key) {
            return Err(PromptError::MissingField(key.to_string()));
        }
    }
    let angles: Vec<&str> = TargetAngle::ALL.iter().map(|a| a.as_str()).collect();
    let r = AffordanceResponse {
        grasp_keypoint: label_field(obj, "grasp_keypoint", ObjectRole::Grasped, markset)?,
        function_keypoint: label_field(obj, "function_keypoint", ObjectRole::Grasped, markset)?,
        target_keypoint: label_field(obj, "target_keypoint", ObjectRole::Unattached, markset)?,
        pre_contact_tile: tile_field(obj, "pre_contact_tile", markset)?,
        post_contact_tile: tile_field(obj, "post_contact_tile", markset)?,
        pre_contact_height: option_field(obj, "pre_contact_height", &Height::OPTIONS)?,
        post_contact_height: option_field(obj, "post_contact_height", &Height::OPTIONS)?,
        target_angle: option_field(obj, "target_angle", &angles)?,
        rationale_text: rationale,
    };
    check_consistency(&r, markset, subtask)?;
    Ok(r)
}

fn check_consistency(r: &AffordanceResponse, ms: &MarkSet, subtask: Option<&SubtaskSpec>) -> Result<()> {
    let violation = |m: String| Err(PromptError::ConsistencyViolation(m));
    let (grasped, unattached) = match subtask {
        Some(s) => (s.has_grasped(), s.has_unattached()),
        None => (r.grasp_keypoint.is_some(), r.target_keypoint.is_some()),
    };
    if r.grasp_keypoint.is_some() != grasped {
        return violation(format!(
            "grasp_keypoint must be {} because object_grasped is {}",
            if grasped { "set" } else { "empty" },
            if grasped { "set" } else { "empty" }
        ));
    }
    if r.target_keypoint.is_some() != unattached {
        return violation(format!(
            "target_keypoint must be {} because object_unattached is {}",
            if unattached { "set" } else { "empty" },
            if unattached { "set" } else { "empty" }
        ));
    }
    let need_function = grasped && unattached;
    if r.function_keypoint.is_some() != need_function {
        return violation(format!(
            "function_keypoint must be {} when object_grasped is {} and object_unattached is {}",
            if need_function { "set" } else { "empty" },
            if grasped { "set" } else { "empty" },
            if unattached { "set" } else { "empty" }
        ));
    }
    if subtask.is_none() {
        if !grasped && !unattached {
            return violation("no keypoint selected".into());
        }
        if let (Some(g), Some(f)) = (&r.grasp_keypoint, &r.function_keypoint) {
            let og = ms.candidate(g).map(|c| c.object.as_str());
            let of = ms.candidate(f).map(|c| c.object.as_str());
            if og != of {
                return violation(format!("grasp_keypoint {g} and function_keypoint {f} are on different objects"));
            }
        }
    }
    if unattached {
        let missing: Vec<&str> = [
            ("pre_contact_tile", r.pre_contact_tile.is_none()),
            ("post_contact_tile", r.post_contact_tile.is_none()),
            ("pre_contact_height", r.pre_contact_height.is_none()),
            ("post_contact_height", r.post_contact_height.is_none()),
        ]
        .into_iter()
        .filter_map(|(k, m)| m.then_some(k))
        .collect();
        if !missing.is_empty() {
            return violation(format!("target_keypoint is set but {} empty", missing.join(", ")));
        }
    }
    Ok(())
}
