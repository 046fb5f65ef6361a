use serde::{Deserialize, Serialize};

use super::{io_err, PipelineError, Result};
use crate::motion::Action;
use crate::sim::{SceneSpec, SimState, Simulator};

/// One call made on the simulator during a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    Reset,
    BeginStage,
    Step { action: Action },
}

/// What it takes to re-execute a run: the scene as run, the simulator calls
/// in order, and the state they led to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub scene: SceneSpec,
    pub instruction: String,
    pub task_family: String,
    pub success: bool,
    pub events: Vec<SimEvent>,
    pub final_state: SimState,
}

impl EpisodeLog {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.events.iter().filter_map(|e| match e {
            SimEvent::Step { action } => Some(action),
            _ => None,
        })
    }
}

/// Visits every state the events pass through, starting from the spawn
/// state. `visit` sees the state before each event and the event.
pub(crate) fn walk(
    sim: &Simulator,
    events: &[SimEvent],
    mut visit: impl FnMut(&SimState, &SimEvent) -> Result<()>,
) -> Result<SimState> {
    let mut state = sim.initial_state();
    for ev in events {
        visit(&state, ev)?;
        state = match ev {
            SimEvent::Reset => sim.reset_to_neutral(&state),
            SimEvent::BeginStage => sim.begin_stage(&state),
            SimEvent::Step { action } => sim.step(&state, action)?,
        };
    }
    Ok(state)
}

/// Re-executes the logged simulator calls from the spawn state.
pub fn replay(episode: &EpisodeLog) -> Result<SimState> {
    let sim = Simulator::new(episode.scene.clone())?;
    walk(&sim, &episode.events, |_, _| Ok(()))
}
