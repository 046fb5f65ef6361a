use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{query_text, request_text, Message, QueryContext, Result, VlmClient, VlmError};
use crate::geometry::{ImagePoint, Point3, Vector3};
use crate::marks::{CandidateSource, ObjectRole};

/// Predicate over a request. `contains` looks at all text parts,
/// `query_contains` only at the last one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Contains(String),
    QueryContains(String),
    AllOf(Vec<Matcher>),
    AnyOf(Vec<Matcher>),
    Not(Box<Matcher>),
}

impl Matcher {
    pub fn matches(&self, full: &str, query: &str) -> bool {
        match self {
            Matcher::Contains(s) => full.contains(s.as_str()),
            Matcher::QueryContains(s) => query.contains(s.as_str()),
            Matcher::AllOf(ms) => ms.iter().all(|m| m.matches(full, query)),
            Matcher::AnyOf(ms) => ms.iter().any(|m| m.matches(full, query)),
            Matcher::Not(m) => !m.matches(full, query),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRule {
    #[serde(rename = "match")]
    pub matcher: Matcher,
    pub response: String,
}

/// Canned responses for a scripted stand-in model.
///
/// Responses may contain placeholders resolved against the query context,
/// so one script works across jittered scenes:
///
/// - `{{P@obj}}`, `{{Q@obj}}`: center candidate of that role on `obj`
/// - `{{P@obj.part}}`: candidate of that role on `obj` nearest to the
///   projected anchor `obj.part`
/// - `{{tile@obj.part}}`, `{{tile@obj+(dx,dy)}}`: tile holding the projected
///   anchor, optionally shifted by `(dx, dy)` meters in the world frame
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleScript {
    #[serde(default)]
    pub rules: Vec<OracleRule>,
    #[serde(default)]
    pub default_response: String,
}

impl OracleScript {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| VlmError::Config(format!("{}: {e}", path.as_ref().display())))?;
        serde_json::from_str(&text).map_err(|e| VlmError::Config(format!("oracle script: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecordedRequest {
    pub messages: Vec<Message>,
    /// Index of the rule that fired, `None` for the default response.
    pub rule: Option<usize>,
    pub response: String,
}

/// Deterministic scripted model. First matching rule wins; every request is
/// recorded.
pub struct ScriptedOracle {
    script: OracleScript,
    log: Mutex<Vec<RecordedRequest>>,
}

impl ScriptedOracle {
    pub fn new(script: OracleScript) -> Self {
        Self { script, log: Mutex::new(Vec::new()) }
    }

    pub fn script(&self) -> &OracleScript {
        &self.script
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.log.lock().expect("oracle log").clone()
    }

    pub fn clear(&self) {
        self.log.lock().expect("oracle log").clear();
    }
}

impl VlmClient for ScriptedOracle {
    fn query(&self, messages: &[Message], ctx: &QueryContext) -> Result<String> {
        let full = request_text(messages);
        let query = query_text(messages);
        let (rule, template) = self
            .script
            .rules
            .iter()
            .enumerate()
            .find(|(_, r)| r.matcher.matches(&full, query))
            .map(|(i, r)| (Some(i), r.response.as_str()))
            .unwrap_or((None, self.script.default_response.as_str()));
        let response = resolve_template(template, ctx)?;
        self.log.lock().expect("oracle log").push(RecordedRequest {
            messages: messages.to_vec(),
            rule,
            response: response.clone(),
        });
        Ok(response)
    }
}

/// Expands every `{{...}}` placeholder in `template`.
pub fn resolve_template(template: &str, ctx: &QueryContext) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| VlmError::Script(format!("unterminated placeholder in {template:?}")))?;
        out.push_str(&resolve_one(after[..end].trim(), ctx)?);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn resolve_one(expr: &str, ctx: &QueryContext) -> Result<String> {
    let err = |msg: &str| VlmError::Script(format!("{{{{{expr}}}}}: {msg}"));
    let (kind, target) = expr.split_once('@').ok_or_else(|| err("expected KIND@REF"))?;
    let markset = ctx.markset.as_ref().ok_or_else(|| err("no mark set in context"))?;
    match kind {
        "P" | "Q" => {
            let role = if kind == "P" { ObjectRole::Grasped } else { ObjectRole::Unattached };
            let (obj, part) = match target.split_once('.') {
                Some((o, p)) => (o, Some(p)),
                None => (target, None),
            };
            let mut on_obj = markset.candidates.iter().filter(|c| c.role == role && c.object == obj);
            match part {
                None => on_obj
                    .find(|c| c.source == CandidateSource::Center)
                    .map(|c| c.label.clone())
                    .ok_or_else(|| err("no such candidate")),
                Some(_) => {
                    let p = project(ctx, target, Vector3::zeros()).map_err(|m| err(&m))?;
                    on_obj
                        .min_by(|a, b| {
                            let da = sq(a.pixel.to_point(), p);
                            let db = sq(b.pixel.to_point(), p);
                            da.total_cmp(&db)
                        })
                        .map(|c| c.label.clone())
                        .ok_or_else(|| err("no such candidate"))
                }
            }
        }
        "tile" => {
            let (anchor, offset) = match target.split_once('+') {
                Some((a, off)) => (a, parse_offset(off).ok_or_else(|| err("bad offset"))?),
                None => (target, Vector3::zeros()),
            };
            let p = project(ctx, anchor, offset).map_err(|m| err(&m))?;
            let g = &markset.grid;
            let clamped = ImagePoint::new(
                p.u.clamp(0.0, g.width as f64 - 1.0),
                p.v.clamp(0.0, g.height as f64 - 1.0),
            );
            g.tile_of_point(clamped)
                .map(|t| t.to_string())
                .ok_or_else(|| err("point outside grid"))
        }
        _ => Err(err("unknown placeholder kind")),
    }
}

fn sq(a: ImagePoint, b: ImagePoint) -> f64 {
    (a.u - b.u).powi(2) + (a.v - b.v).powi(2)
}

fn project(ctx: &QueryContext, anchor: &str, offset: Vector3) -> std::result::Result<ImagePoint, String> {
    let cam = ctx.camera.as_ref().ok_or("no camera in context")?;
    let p: Point3 = *ctx.anchors.get(anchor).ok_or_else(|| format!("unknown anchor {anchor:?}"))?;
    cam.project_world(&(p + offset)).map_err(|e| e.to_string())
}

fn parse_offset(s: &str) -> Option<Vector3> {
    let inner = s.trim().strip_prefix('(')?.strip_suffix(')')?;
    let (a, b) = inner.split_once(',')?;
    Some(Vector3::new(a.trim().parse().ok()?, b.trim().parse().ok()?, 0.0))
}
