use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, FailureKind, Result, TrajectoryLog};
use crate::motion::actions_to_jsonl;
use crate::prompts::{ExampleStore, StoredExample};

/// `manifest.json` of a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scene: String,
    pub task_family: String,
    pub instruction: String,
    pub success: bool,
    pub failure_kind: FailureKind,
    pub subtasks: usize,
    /// Paths relative to the run directory.
    pub files: Vec<String>,
}

struct Writer<'a> {
    root: &'a Path,
    files: Vec<String>,
}

impl Writer<'_> {
    fn put(&mut self, rel: impl AsRef<Path>, bytes: impl AsRef<[u8]>) -> Result<()> {
        let rel = rel.as_ref();
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        self.files.push(rel.to_string_lossy().into_owned());
        Ok(())
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("artifact serializes")
}

/// Writes the transcript, the replayable episode, every image shown to the
/// model and per-subtask plans and actions under `dir`.
pub fn write_artifacts(log: &TrajectoryLog, dir: impl AsRef<Path>) -> Result<RunManifest> {
    let mut w = Writer { root: dir.as_ref(), files: Vec::new() };
    w.put("transcript.json", log.to_json())?;
    w.put("episode.json", json(&log.episode))?;
    w.put("s0.png", log.initial_image.png())?;
    if let Some(h) = &log.high_level {
        for (i, a) in h.attempts.iter().enumerate() {
            w.put(format!("high_level/request_{i}.txt"), &a.request)?;
            w.put(format!("high_level/response_{i}.txt"), &a.response)?;
        }
    }
    for s in &log.subtasks {
        let d = PathBuf::from(format!("subtask_{}", s.index + 1));
        if let Some(img) = &s.observation {
            w.put(d.join("observation.png"), img.png())?;
        }
        if let Some(img) = &s.annotated_image {
            w.put(d.join("marked.png"), img.png())?;
        }
        if let Some(ms) = &s.markset {
            w.put(d.join("markset.json"), ms.to_json())?;
        }
        for (i, a) in s.attempts.iter().enumerate() {
            w.put(d.join(format!("request_{i}.txt")), &a.request)?;
            w.put(d.join(format!("response_{i}.txt")), &a.response)?;
        }
        if let Some(p) = &s.plan {
            w.put(d.join("plan.json"), json(p))?;
        }
        if let Some(t) = &s.trajectory {
            w.put(d.join("actions.jsonl"), actions_to_jsonl(t.actions(), t.dt))?;
        }
    }
    let mut files = w.files.clone();
    files.push("manifest.json".into());
    let manifest = RunManifest {
        scene: log.scene.clone(),
        task_family: log.task_family.clone(),
        instruction: log.instruction.clone(),
        success: log.success,
        failure_kind: log.failure_kind(),
        subtasks: log.subtasks.len(),
        files,
    };
    w.put("manifest.json", json(&manifest))?;
    Ok(manifest)
}

/// Appends the annotated image, request and accepted answer of every
/// successful subtask to the store under the log's task family.
pub fn harvest_in_context(log: &TrajectoryLog, store: &ExampleStore) -> Result<usize> {
    let mut n = 0;
    for s in log.subtasks.iter().filter(|s| s.success) {
        let (Some(img), Some(response)) = (&s.annotated_image, s.accepted_response()) else {
            continue;
        };
        let rel = format!("images/{}.png", &img.sha256()[..16]);
        let path = store.dir().join(&rel);
        if let Some(d) = path.parent() {
            std::fs::create_dir_all(d).map_err(io_err(d))?;
        }
        std::fs::write(&path, img.png()).map_err(io_err(&path))?;
        store.append(&StoredExample {
            image_path: rel,
            request: s.request.clone(),
            response: response.to_string(),
            task_family: log.task_family.clone(),
            success: true,
        })?;
        n += 1;
    }
    Ok(n)
}
