use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::episode::walk;
use super::{io_err, EpisodeLog, Result, SimEvent};
use crate::motion::Action;
use crate::sim::{GripperState, SceneSpec, SimState, Simulator};

/// Demonstrations wanted per task family.
pub const MIN_EPISODES_PER_TASK: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportOptions {
    pub include_failed: bool,
    /// Width of the exported observations; height keeps the aspect ratio.
    pub image_size: u32,
    pub min_per_task: usize,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self { include_failed: false, image_size: 128, min_per_task: MIN_EPISODES_PER_TASK }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStep {
    /// PNG path relative to the dataset root, rendered before the action.
    pub observation: String,
    pub proprioception: GripperState,
    pub action: Action,
}

/// One line of `episodes.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub episode_id: String,
    pub language: String,
    pub task_family: String,
    pub success: bool,
    pub steps: Vec<DatasetStep>,
    pub scene: SceneSpec,
    pub events: Vec<SimEvent>,
    pub final_state: SimState,
}

impl DatasetRecord {
    pub fn episode(&self) -> EpisodeLog {
        EpisodeLog {
            scene: self.scene.clone(),
            instruction: self.language.clone(),
            task_family: self.task_family.clone(),
            success: self.success,
            events: self.events.clone(),
            final_state: self.final_state.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub episodes_file: String,
    pub episodes: usize,
    /// Exported episodes per task family.
    pub counts: BTreeMap<String, usize>,
    pub skipped_failed: usize,
    pub image_size: [u32; 2],
    pub warnings: Vec<String>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| super::PipelineError::Io(format!("{}: {e}", path.display())))
    }

    /// Reads every record of the exported `episodes.jsonl` under `root`.
    pub fn records(&self, root: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
        let path = root.as_ref().join(&self.episodes_file);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| super::PipelineError::Io(format!("{}: {e}", path.display()))))
            .collect()
    }
}

/// Writes `episodes.jsonl`, one observation PNG per action under
/// `observations/<episode>/`, and `manifest.json`. Observations are
/// re-rendered by replaying each episode at the export resolution.
pub fn export_dataset(episodes: &[EpisodeLog], out_dir: impl AsRef<Path>, opts: &ExportOptions) -> Result<DatasetManifest> {
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let jsonl_path = out.join("episodes.jsonl");
    let mut jsonl = std::io::BufWriter::new(std::fs::File::create(&jsonl_path).map_err(io_err(&jsonl_path))?);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut skipped = 0;
    let mut size = [opts.image_size, 0];
    for ep in episodes {
        if !ep.success && !opts.include_failed {
            skipped += 1;
            continue;
        }
        let n = counts.entry(ep.task_family.clone()).or_default();
        let id = format!("{}_{:05}", if ep.task_family.is_empty() { "task" } else { &ep.task_family }, *n);
        *n += 1;
        let scene = ep.scene.resized(opts.image_size)?;
        size[1] = scene.camera.height;
        let sim = Simulator::new(scene)?;
        let rel_dir = PathBuf::from("observations").join(&id);
        let dir = out.join(&rel_dir);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut steps = Vec::new();
        walk(&sim, &ep.events, |state, ev| {
            if let SimEvent::Step { action } = ev {
                let name = format!("{:04}.png", steps.len());
                let path = dir.join(&name);
                sim.render(state).rgb.save(&path).map_err(|e| super::PipelineError::Io(format!("{}: {e}", path.display())))?;
                steps.push(DatasetStep {
                    observation: rel_dir.join(&name).to_string_lossy().into_owned(),
                    proprioception: state.gripper,
                    action: *action,
                });
            }
            Ok(())
        })?;
        let rec = DatasetRecord {
            episode_id: id,
            language: ep.instruction.clone(),
            task_family: ep.task_family.clone(),
            success: ep.success,
            steps,
            scene: ep.scene.clone(),
            events: ep.events.clone(),
            final_state: ep.final_state.clone(),
        };
        let line = serde_json::to_string(&rec).expect("record serializes");
        writeln!(jsonl, "{line}").map_err(io_err(&jsonl_path))?;
    }
    jsonl.flush().map_err(io_err(&jsonl_path))?;
    let mut warnings = Vec::new();
    for (family, n) in &counts {
        if *n < opts.min_per_task {
            let w = format!("task {family:?} has {n} episodes, fewer than {}", opts.min_per_task);
            tracing::warn!("{w}");
            warnings.push(w);
        }
    }
    let manifest = DatasetManifest {
        episodes_file: "episodes.jsonl".into(),
        episodes: counts.values().sum(),
        counts,
        skipped_failed: skipped,
        image_size: size,
        warnings,
    };
    let path = out.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes")).map_err(io_err(&path))?;
    Ok(manifest)
}
