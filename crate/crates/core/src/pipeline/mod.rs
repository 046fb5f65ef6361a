//! The end-to-end loop: decompose the task, then for each subtask annotate
//! the observation, query for an affordance, compile it to actions and run
//! them in the simulator. Also the run artifacts, in-context harvesting,
//! dataset export and replay.

mod artifacts;
mod dataset;
mod episode;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use artifacts::{harvest_in_context, write_artifacts, RunManifest};
pub use dataset::{export_dataset, DatasetManifest, DatasetRecord, DatasetStep, ExportOptions, MIN_EPISODES_PER_TASK};
pub use episode::{replay, EpisodeLog, SimEvent};

use crate::marks::{
    build_grid, render_marks, AnnotatedImage, MarkSet, MarkedObject, ObjectRole, DEFAULT_BOUNDARY_POINTS,
};
use crate::motion::{
    interpolate, lift_affordance, plan_grasp_phase, plan_manipulation_phase, AffordanceInstance, MotionConfig,
    MotionPlan, Trajectory,
};
use crate::prompts::{
    build_flat_prompt, build_high_level_prompt, build_low_level_prompt, parse_high_level_response,
    parse_low_level_response, select_in_context_examples, AblationConfig, AffordanceResponse, ExampleStore,
    HighLevelPlan, InContextExample, PromptError, SubtaskSpec, TaskRequest, DEFAULT_IN_CONTEXT_EXAMPLES,
};
use crate::sim::{Observation, SceneSpec, SimError, SimState, Simulator, SuccessPredicate, SuccessReport};
use crate::vlm::{
    query_text, request_text, ImageRef, Message, OracleScript, Part, QueryContext, Role, ScriptedOracle,
    VlmClient, VlmConfig, VlmError, WireClient,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Scene(#[from] SimError),
    #[error(transparent)]
    Vlm(#[from] VlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &std::path::Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io(format!("{}: {e}", path.display()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum VlmMode {
    Oracle { script: PathBuf },
    Wire {
        #[serde(default)]
        config: VlmConfig,
    },
}

impl Default for VlmMode {
    fn default() -> Self {
        VlmMode::Wire { config: VlmConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scene: PathBuf,
    /// Overrides the scene's own instruction.
    pub instruction: Option<String>,
    pub vlm: VlmMode,
    pub ablation: AblationConfig,
    /// Most in-context examples shown per low-level query.
    pub in_context: usize,
    pub example_store: Option<PathBuf>,
    /// Key for in-context retrieval; defaults to the scene's family.
    pub task_family: Option<String>,
    /// Seeds waypoint and grasp sampling.
    pub seed: u64,
    /// When set, the scene is jittered with this seed before the run.
    pub scene_seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub keypoints_per_object: usize,
    /// `[columns, rows]`
    pub grid: [u32; 2],
    /// Extra attempts after a response fails validation.
    pub max_retries: usize,
    pub motion: MotionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: PathBuf::new(),
            instruction: None,
            vlm: VlmMode::default(),
            ablation: AblationConfig::default(),
            in_context: DEFAULT_IN_CONTEXT_EXAMPLES,
            example_store: None,
            task_family: None,
            seed: 0,
            scene_seed: None,
            out_dir: None,
            keypoints_per_object: DEFAULT_BOUNDARY_POINTS,
            grid: [5, 5],
            max_retries: 2,
            motion: MotionConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn oracle(scene: impl Into<PathBuf>, script: impl Into<PathBuf>) -> Self {
        Self { scene: scene.into(), vlm: VlmMode::Oracle { script: script.into() }, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if let VlmMode::Oracle { script } = &self.vlm {
            if script.as_os_str().is_empty() {
                return Err(PipelineError::Config("oracle mode needs a script path".into()));
            }
        }
        if self.keypoints_per_object == 0 {
            return Err(PipelineError::Config("keypoints_per_object must be at least 1".into()));
        }
        self.motion.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if (self.motion.dt() - crate::sim::CONTROL_DT).abs() > 1e-12 {
            return Err(PipelineError::Config(format!(
                "motion control rate gives dt {} but the simulator steps {}",
                self.motion.dt(),
                crate::sim::CONTROL_DT
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// The client this config asks for.
    pub fn client(&self) -> Result<Box<dyn VlmClient>> {
        Ok(match &self.vlm {
            VlmMode::Oracle { script } => Box::new(ScriptedOracle::new(OracleScript::load(script)?)),
            VlmMode::Wire { config } => Box::new(WireClient::new(config.clone())?),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    #[default]
    None,
    /// The model's answers never passed validation, or named things that
    /// are not in the scene.
    Reasoning,
    /// A valid answer was executed but the scene did not end up as required.
    Execution,
}

/// One request and what came back.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryAttempt {
    pub request: String,
    pub images: Vec<ImageRef>,
    /// Raw text, stored before any parsing.
    pub response: String,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HighLevelRecord {
    pub attempts: Vec<QueryAttempt>,
    pub plan: Option<HighLevelPlan>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubtaskRecord {
    pub index: usize,
    /// Object names are the scene's.
    pub subtask: SubtaskSpec,
    /// The text that stood for the subtask in the request.
    pub request: String,
    pub observation: Option<ImageRef>,
    pub annotated_image: Option<ImageRef>,
    pub markset: Option<MarkSet>,
    pub attempts: Vec<QueryAttempt>,
    pub response: Option<AffordanceResponse>,
    pub instance: Option<AffordanceInstance>,
    pub plan: Option<MotionPlan>,
    pub trajectory: Option<Trajectory>,
    /// State after each executed phase.
    pub sampled_states: Vec<SimState>,
    pub report: Option<SuccessReport>,
    pub success: bool,
    pub failure_kind: FailureKind,
    pub error: Option<String>,
}

impl SubtaskRecord {
    fn new(index: usize, subtask: SubtaskSpec, request: String) -> Self {
        Self {
            index,
            subtask,
            request,
            observation: None,
            annotated_image: None,
            markset: None,
            attempts: Vec::new(),
            response: None,
            instance: None,
            plan: None,
            trajectory: None,
            sampled_states: Vec::new(),
            report: None,
            success: false,
            failure_kind: FailureKind::None,
            error: None,
        }
    }

    fn fail(&mut self, kind: FailureKind, error: impl ToString) {
        self.success = false;
        self.failure_kind = kind;
        self.error = Some(error.to_string());
    }

    /// Raw text of the accepted answer.
    pub fn accepted_response(&self) -> Option<&str> {
        self.response.as_ref()?;
        self.attempts.iter().rev().find(|a| a.error.is_none()).map(|a| a.response.as_str())
    }
}

/// Everything one run did, in order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryLog {
    pub scene: String,
    pub task_family: String,
    pub instruction: String,
    pub seed: u64,
    pub scene_seed: Option<u64>,
    pub ablation: AblationConfig,
    pub initial_image: ImageRef,
    /// Absent without hierarchy.
    pub high_level: Option<HighLevelRecord>,
    pub subtasks: Vec<SubtaskRecord>,
    /// Every stage's predicates on the final state.
    pub final_report: SuccessReport,
    pub success: bool,
    pub episode: EpisodeLog,
}

impl TrajectoryLog {
    pub fn failure_kind(&self) -> FailureKind {
        if self.success {
            return FailureKind::None;
        }
        if self.high_level.as_ref().is_some_and(|h| h.error.is_some()) {
            return FailureKind::Reasoning;
        }
        self.subtasks
            .iter()
            .map(|s| s.failure_kind)
            .find(|k| *k != FailureKind::None)
            .unwrap_or(FailureKind::Execution)
    }

    /// Number of low-level queries that were answered validly or not.
    pub fn low_level_queries(&self) -> usize {
        self.subtasks.iter().filter(|s| !s.attempts.is_empty()).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("log serializes")
    }
}

/// Maps a name the model used onto a scene object: exact, then
/// case-insensitive, then a unique containment either way.
pub fn resolve_object_name(name: &str, scene: &SceneSpec) -> Option<String> {
    let name = name.trim();
    if name.is_empty() {
        return None;
    }
    if scene.object(name).is_some() {
        return Some(name.to_string());
    }
    let lower = name.to_lowercase();
    let names = scene.objects.iter().map(|o| o.name.as_str());
    if let Some(n) = names.clone().find(|n| n.to_lowercase() == lower) {
        return Some(n.to_string());
    }
    let hits: Vec<&str> = names
        .filter(|n| {
            let n = n.to_lowercase();
            n.contains(&lower) || lower.contains(&n)
        })
        .collect();
    match hits.as_slice() {
        [one] => Some(one.to_string()),
        _ => None,
    }
}

fn resolve_subtask(sub: &SubtaskSpec, scene: &SceneSpec) -> std::result::Result<SubtaskSpec, String> {
    let map = |n: &str| -> std::result::Result<String, String> {
        if n.is_empty() {
            return Ok(String::new());
        }
        resolve_object_name(n, scene).ok_or_else(|| format!("no object in the scene matches {n:?}"))
    };
    Ok(SubtaskSpec {
        object_grasped: map(&sub.object_grasped)?,
        object_unattached: map(&sub.object_unattached)?,
        ..sub.clone()
    })
}

/// Sends `messages`, re-asking with the validation error until `parse`
/// accepts or the retries run out. A retry appends the rejected answer and
/// a user turn carrying the error and the original query.
fn query_with_retries<T>(
    client: &dyn VlmClient,
    mut messages: Vec<Message>,
    ctx: &QueryContext,
    max_retries: usize,
    mut parse: impl FnMut(&str) -> std::result::Result<T, PromptError>,
    attempts: &mut Vec<QueryAttempt>,
) -> Result<std::result::Result<T, PromptError>> {
    let original = query_text(&messages).to_string();
    let mut last_err = None;
    for attempt in 0..=max_retries {
        let raw = client.query(&messages, ctx)?;
        let parsed = parse(&raw);
        attempts.push(QueryAttempt {
            request: request_text(&messages),
            images: messages.iter().flat_map(|m| m.images().cloned()).collect(),
            response: raw.clone(),
            error: parsed.as_ref().err().map(|e| e.to_string()),
        });
        match parsed {
            Ok(v) => return Ok(Ok(v)),
            Err(e) => {
                tracing::info!(attempt, error = %e, "response rejected");
                messages.push(Message { role: Role::Assistant, parts: vec![Part::Text(raw)] });
                messages.push(Message::user(vec![Part::Text(format!(
                    "The answer above could not be used: {e}. Answer again in the required format.\n\n{original}"
                ))]));
                last_err = Some(e);
            }
        }
    }
    Ok(Err(last_err.expect("at least one attempt")))
}

/// Candidate keypoints on the named objects' masks plus the grid, drawn
/// onto the observation.
pub fn annotate_observation(
    obs: &Observation,
    marked: &[(&str, ObjectRole)],
    keypoints_per_object: usize,
    grid: [u32; 2],
    image_id: &str,
) -> Result<AnnotatedImage, String> {
    let (w, h) = (obs.rgb.width(), obs.rgb.height());
    let grid = build_grid(w, h, grid[0], grid[1]).map_err(|e| e.to_string())?;
    let mut objects = Vec::with_capacity(marked.len());
    for (name, role) in marked {
        let mask = obs.masks.get(*name).ok_or_else(|| format!("no object named {name:?}"))?;
        if mask.is_empty() {
            return Err(format!("{name:?} is not visible"));
        }
        objects.push(MarkedObject { name, mask, role: *role });
    }
    let ms = MarkSet::build(&objects, keypoints_per_object, grid, image_id).map_err(|e| e.to_string())?;
    render_marks(&obs.rgb, &ms).map_err(|e| e.to_string())
}

/// The scene as the first subtask sees it, annotated: the first object
/// carries `P` marks, the rest `Q` marks.
pub fn annotate_scene(scene: &SceneSpec, objects: &[String], cfg: &RunConfig) -> Result<AnnotatedImage> {
    let sim = Simulator::new(scene.clone())?;
    let state = sim.reset_to_neutral(&sim.initial_state());
    let obs = sim.render(&state);
    let marked: Vec<(&str, ObjectRole)> = objects
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), if i == 0 { ObjectRole::Grasped } else { ObjectRole::Unattached }))
        .collect();
    annotate_observation(&obs, &marked, cfg.keypoints_per_object, cfg.grid, "s1").map_err(PipelineError::Config)
}

struct Runner<'a> {
    sim: Simulator,
    client: &'a dyn VlmClient,
    cfg: &'a RunConfig,
    examples: &'a [InContextExample],
    state: SimState,
    events: Vec<SimEvent>,
}

impl Runner<'_> {
    fn reset(&mut self) {
        self.state = self.sim.reset_to_neutral(&self.state);
        self.events.push(SimEvent::Reset);
    }

    fn context(&self, markset: Option<MarkSet>) -> QueryContext {
        QueryContext {
            markset,
            camera: Some(*self.sim.camera()),
            anchors: self.sim.anchors(&self.state),
        }
    }

    fn annotate(&self, obs: &Observation, marked: &[(&str, ObjectRole)], image_id: &str) -> Result<AnnotatedImage, String> {
        annotate_observation(obs, marked, self.cfg.keypoints_per_object, self.cfg.grid, image_id)
    }

    /// Lifts, compiles and executes an accepted answer, then checks the
    /// predicates. Failures here are execution failures.
    fn execute(
        &mut self,
        rec: &mut SubtaskRecord,
        obs: &Observation,
        resp: &AffordanceResponse,
        predicates: &[SuccessPredicate],
        seeds: (u64, u64),
    ) -> std::result::Result<(), String> {
        let ms = rec.markset.as_ref().expect("marks were built");
        let cam = *self.sim.camera();
        let mcfg = &self.cfg.motion;
        let inst = lift_affordance(resp, ms, &obs.depth, &cam, seeds.0, mcfg).map_err(|e| e.to_string())?;
        rec.instance = Some(inst.clone());
        let grasp = match rec.subtask.object_grasped.as_str() {
            "" => None,
            name => Some(
                plan_grasp_phase(&inst, &obs.depth, &obs.masks[name], &cam, seeds.1, mcfg)
                    .map_err(|e| e.to_string())?,
            ),
        };
        let manipulation = match inst.target_point {
            Some(_) => Some(plan_manipulation_phase(&inst).map_err(|e| e.to_string())?),
            None => None,
        };
        let plan = MotionPlan::compile(self.state.gripper.pose(), &inst, grasp, manipulation, resp.pre_contact_height);
        rec.plan = Some(plan.clone());
        let traj = interpolate(&plan, mcfg).map_err(|e| e.to_string())?;
        rec.trajectory = Some(traj.clone());
        for phase in &traj.phases {
            self.state = self.sim.begin_stage(&self.state);
            self.events.push(SimEvent::BeginStage);
            for a in &phase.actions {
                self.state = self.sim.step(&self.state, a).map_err(|e| e.to_string())?;
                self.events.push(SimEvent::Step { action: *a });
            }
            rec.sampled_states.push(self.state.clone());
        }
        let report = self.sim.check_success(&self.state, predicates);
        let ok = report.success;
        rec.report = Some(report);
        if ok {
            Ok(())
        } else {
            Err("success predicates do not hold".into())
        }
    }

    fn subtask(
        &mut self,
        index: usize,
        sub: &SubtaskSpec,
        predicates: &[SuccessPredicate],
        seeds: (u64, u64),
    ) -> Result<SubtaskRecord> {
        let mut rec = SubtaskRecord::new(index, sub.clone(), sub.to_json());
        self.reset();
        let obs = self.sim.render(&self.state);
        let image_id = format!("s{}", index + 1);
        rec.observation = Some(ImageRef::from_rgb(&image_id, &obs.rgb));
        let mut marked = Vec::new();
        if sub.has_grasped() {
            marked.push((sub.object_grasped.as_str(), ObjectRole::Grasped));
        }
        if sub.has_unattached() {
            marked.push((sub.object_unattached.as_str(), ObjectRole::Unattached));
        }
        let annotated = match self.annotate(&obs, &marked, &image_id) {
            Ok(a) => a,
            Err(e) => {
                rec.fail(FailureKind::Execution, e);
                return Ok(rec);
            }
        };
        rec.annotated_image = Some(crate::prompts::annotated_ref(&annotated));
        rec.markset = Some(annotated.markset.clone());
        let messages = build_low_level_prompt(sub, &annotated, self.examples, &self.cfg.ablation)?;
        let ctx = self.context(Some(annotated.markset.clone()));
        let ms = &annotated.markset;
        let parsed = query_with_retries(
            self.client,
            messages,
            &ctx,
            self.cfg.max_retries,
            |raw| parse_low_level_response(raw, ms, Some(sub)),
            &mut rec.attempts,
        )?;
        let resp = match parsed {
            Ok(r) => r,
            Err(e) => {
                rec.fail(FailureKind::Reasoning, e);
                return Ok(rec);
            }
        };
        rec.response = Some(resp.clone());
        match self.execute(&mut rec, &obs, &resp, predicates, seeds) {
            Ok(()) => rec.success = true,
            Err(e) => rec.fail(FailureKind::Execution, e),
        }
        Ok(rec)
    }

    /// One low-level query on the raw instruction with every visible object
    /// marked as both a possible tool and a possible target.
    fn flat(&mut self, instruction: &str, predicates: &[SuccessPredicate], seeds: (u64, u64)) -> Result<SubtaskRecord> {
        let mut rec = SubtaskRecord::new(
            0,
            SubtaskSpec { instruction: instruction.to_string(), ..Default::default() },
            instruction.to_string(),
        );
        self.reset();
        let obs = self.sim.render(&self.state);
        rec.observation = Some(ImageRef::from_rgb("s1", &obs.rgb));
        let visible: Vec<&str> = self
            .sim
            .spec()
            .objects
            .iter()
            .map(|o| o.name.as_str())
            .filter(|n| !obs.masks[*n].is_empty())
            .collect();
        let marked: Vec<(&str, ObjectRole)> = [ObjectRole::Grasped, ObjectRole::Unattached]
            .into_iter()
            .flat_map(|role| visible.iter().map(move |n| (*n, role)))
            .collect();
        let annotated = match self.annotate(&obs, &marked, "s1") {
            Ok(a) => a,
            Err(e) => {
                rec.fail(FailureKind::Execution, e);
                return Ok(rec);
            }
        };
        rec.annotated_image = Some(crate::prompts::annotated_ref(&annotated));
        rec.markset = Some(annotated.markset.clone());
        let messages = build_flat_prompt(instruction, &annotated, self.examples, &self.cfg.ablation);
        let ctx = self.context(Some(annotated.markset.clone()));
        let ms = &annotated.markset;
        let parsed = query_with_retries(
            self.client,
            messages,
            &ctx,
            self.cfg.max_retries,
            |raw| parse_low_level_response(raw, ms, None),
            &mut rec.attempts,
        )?;
        let resp = match parsed {
            Ok(r) => r,
            Err(e) => {
                rec.fail(FailureKind::Reasoning, e);
                return Ok(rec);
            }
        };
        let object_of = |label: &Option<String>| {
            label
                .as_ref()
                .and_then(|l| ms.candidate(l))
                .map(|c| c.object.clone())
                .unwrap_or_default()
        };
        rec.subtask.object_grasped = object_of(&resp.grasp_keypoint);
        rec.subtask.object_unattached = object_of(&resp.target_keypoint);
        rec.response = Some(resp.clone());
        match self.execute(&mut rec, &obs, &resp, predicates, seeds) {
            Ok(()) => rec.success = true,
            Err(e) => rec.fail(FailureKind::Execution, e),
        }
        Ok(rec)
    }
}

/// Runs the whole loop on a loaded scene. `examples` go into every
/// low-level prompt.
pub fn run_scene(
    scene: &SceneSpec,
    client: &dyn VlmClient,
    cfg: &RunConfig,
    examples: &[InContextExample],
) -> Result<TrajectoryLog> {
    cfg.validate()?;
    let sim = Simulator::new(scene.clone())?;
    let instruction = cfg.instruction.clone().unwrap_or_else(|| scene.instruction.clone());
    if instruction.trim().is_empty() {
        return Err(PipelineError::Config("no task instruction given and the scene has none".into()));
    }
    let task_family = cfg.task_family.clone().unwrap_or_else(|| scene.task_family.clone());
    let state = sim.initial_state();
    let s0 = sim.render(&state);
    let initial_image = ImageRef::from_rgb("s0", &s0.rgb);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut runner = Runner { sim, client, cfg, examples, state, events: Vec::new() };
    let mut subtasks = Vec::new();
    let mut high_level = None;
    let stage_predicates = |k: usize| -> Vec<SuccessPredicate> {
        scene.stages.get(k).map(|s| s.predicates.clone()).unwrap_or_default()
    };

    if cfg.ablation.disable_hierarchy {
        let all: Vec<SuccessPredicate> = scene.stages.iter().flat_map(|s| s.predicates.clone()).collect();
        let seeds = (rng.gen(), rng.gen());
        subtasks.push(runner.flat(&instruction, &all, seeds)?);
    } else {
        let task = TaskRequest { instruction: instruction.clone(), observation: initial_image.clone() };
        let messages = build_high_level_prompt(&task, &[]);
        let ctx = runner.context(None);
        let mut rec = HighLevelRecord { attempts: Vec::new(), plan: None, error: None };
        let parsed = query_with_retries(
            client,
            messages,
            &ctx,
            cfg.max_retries,
            parse_high_level_response,
            &mut rec.attempts,
        )?;
        match parsed {
            Ok(plan) => rec.plan = Some(plan),
            Err(e) => rec.error = Some(e.to_string()),
        }
        let plan = rec.plan.clone();
        high_level = Some(rec);
        for (k, sub) in plan.iter().flat_map(|p| p.subtasks.iter()).enumerate() {
            let seeds = (rng.gen(), rng.gen());
            let record = match resolve_subtask(sub, scene) {
                Ok(resolved) => runner.subtask(k, &resolved, &stage_predicates(k), seeds)?,
                Err(e) => {
                    let mut r = SubtaskRecord::new(k, sub.clone(), sub.to_json());
                    r.fail(FailureKind::Reasoning, e);
                    r
                }
            };
            tracing::info!(subtask = k, success = record.success, kind = ?record.failure_kind, "subtask done");
            let ok = record.success;
            subtasks.push(record);
            if !ok {
                break;
            }
        }
    }

    let all: Vec<SuccessPredicate> = scene.stages.iter().flat_map(|s| s.predicates.clone()).collect();
    let final_report = runner.sim.check_success(&runner.state, &all);
    let high_ok = high_level.as_ref().is_none_or(|h| h.error.is_none());
    let success = high_ok && !subtasks.is_empty() && subtasks.iter().all(|s| s.success) && final_report.success;
    let episode = EpisodeLog {
        scene: scene.clone(),
        instruction: instruction.clone(),
        task_family: task_family.clone(),
        success,
        events: runner.events,
        final_state: runner.state,
    };
    Ok(TrajectoryLog {
        scene: scene.name.clone(),
        task_family,
        instruction,
        seed: cfg.seed,
        scene_seed: cfg.scene_seed,
        ablation: cfg.ablation,
        initial_image,
        high_level,
        subtasks,
        final_report,
        success,
        episode,
    })
}

/// Loads the scene (jittered when `scene_seed` is set), the client and the
/// in-context examples, runs, and writes artifacts when `out_dir` is set.
pub fn run_task(cfg: &RunConfig) -> Result<TrajectoryLog> {
    cfg.validate()?;
    let client = cfg.client()?;
    run_task_with(cfg, client.as_ref())
}

/// [`run_task`] with a caller-supplied client.
pub fn run_task_with(cfg: &RunConfig, client: &dyn VlmClient) -> Result<TrajectoryLog> {
    cfg.validate()?;
    let mut scene = SceneSpec::load(&cfg.scene)?;
    if let Some(s) = cfg.scene_seed {
        scene = scene.jittered(s)?;
    }
    let family = cfg.task_family.clone().unwrap_or_else(|| scene.task_family.clone());
    let examples = match &cfg.example_store {
        Some(path) if cfg.in_context > 0 => {
            select_in_context_examples(&ExampleStore::new(path), &family, cfg.in_context)?
        }
        _ => Vec::new(),
    };
    let log = run_scene(&scene, client, cfg, &examples)?;
    if let Some(dir) = &cfg.out_dir {
        write_artifacts(&log, dir)?;
    }
    Ok(log)
}

/// A run with exactly one ablation switched on.
pub fn run_ablation(cfg: &RunConfig) -> Result<TrajectoryLog> {
    check_single_ablation(&cfg.ablation)?;
    run_task(cfg)
}

pub fn check_single_ablation(a: &AblationConfig) -> Result<()> {
    match a.count() {
        1 => Ok(()),
        n => Err(PipelineError::Config(format!("an ablation run needs exactly one flag set, got {n}"))),
    }
}
