use serde::{Deserialize, Serialize};

use super::poly::{contains, Vec2};
use super::scene::{footprint_centroid, world_parts, SceneSpec};
use super::{ObjectState, SimState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// `[x_min, x_max, y_min, y_max]`
    Box([f64; 4]),
    /// The current footprint of another object.
    Object(String),
}

/// A check on the final state of a subtask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SuccessPredicate {
    /// The object's footprint centroid lies in the region.
    InsideRegion { object: String, region: Region },
    /// The centroid moved at least `distance` from its spawn position,
    /// measured along `direction` when given.
    DisplacedBeyond {
        object: String,
        distance: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Vec2>,
    },
    /// The articulation value lies in `[min, max]`.
    ArticulationAt {
        object: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
    },
    /// The fingertips or the held object touched the object.
    ContactMade { object: String },
}

impl SuccessPredicate {
    pub fn objects(&self) -> Vec<&str> {
        match self {
            SuccessPredicate::InsideRegion { object, region: Region::Object(r) } => vec![object, r],
            SuccessPredicate::InsideRegion { object, .. }
            | SuccessPredicate::DisplacedBeyond { object, .. }
            | SuccessPredicate::ArticulationAt { object, .. }
            | SuccessPredicate::ContactMade { object } => vec![object],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredicateOutcome {
    pub predicate: SuccessPredicate,
    pub satisfied: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub success: bool,
    pub outcomes: Vec<PredicateOutcome>,
}

fn check(spec: &SceneSpec, state: &SimState, p: &SuccessPredicate) -> (bool, String) {
    let find = |name: &str| spec.index_of(name).map(|i| (&spec.objects[i], &state.objects[i], i));
    let Some((o, st, i)) = find(p.objects()[0]) else {
        return (false, format!("unknown object {:?}", p.objects()[0]));
    };
    match p {
        SuccessPredicate::InsideRegion { region, .. } => {
            let c = footprint_centroid(o, st);
            let inside = match region {
                Region::Box([x0, x1, y0, y1]) => c[0] >= *x0 && c[0] <= *x1 && c[1] >= *y0 && c[1] <= *y1,
                Region::Object(r) => match find(r) {
                    Some((ro, rst, _)) => world_parts(ro, rst).iter().any(|part| contains(part, c)),
                    None => return (false, format!("unknown object {r:?}")),
                },
            };
            (inside, format!("centroid ({:.4}, {:.4})", c[0], c[1]))
        }
        SuccessPredicate::DisplacedBeyond { distance, direction, .. } => {
            let start = ObjectState { pose: state.initial_poses[i], ..st.clone() };
            let (a, b) = (footprint_centroid(o, &start), footprint_centroid(o, st));
            let d = [b[0] - a[0], b[1] - a[1]];
            let moved = match direction {
                Some(u) => {
                    let n = u[0].hypot(u[1]);
                    (d[0] * u[0] + d[1] * u[1]) / n
                }
                None => d[0].hypot(d[1]),
            };
            (moved >= *distance, format!("moved {moved:.4} m"))
        }
        SuccessPredicate::ArticulationAt { min, max, .. } => match st.articulation {
            Some(v) => (
                min.is_none_or(|m| v >= m) && max.is_none_or(|m| v <= m),
                format!("value {v:.4}"),
            ),
            None => (false, "no articulation".into()),
        },
        SuccessPredicate::ContactMade { object } => {
            let hit = state.contacts.contains(object);
            (hit, if hit { "touched".into() } else { "never touched".into() })
        }
    }
}

/// Conjunction of the predicates; an empty list holds.
pub(super) fn check_all(spec: &SceneSpec, state: &SimState, predicates: &[SuccessPredicate]) -> SuccessReport {
    let outcomes: Vec<PredicateOutcome> = predicates
        .iter()
        .map(|p| {
            let (satisfied, detail) = check(spec, state, p);
            PredicateOutcome { predicate: p.clone(), satisfied, detail }
        })
        .collect();
    SuccessReport { success: outcomes.iter().all(|o| o.satisfied), outcomes }
}
