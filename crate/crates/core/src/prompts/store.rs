use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{InContextExample, PromptError, Result};
use crate::vlm::ImageRef;

pub const DEFAULT_IN_CONTEXT_EXAMPLES: usize = 2;

/// One line of the example store.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredExample {
    /// Relative paths resolve against the store's directory.
    pub image_path: String,
    pub request: String,
    pub response: String,
    pub task_family: String,
    pub success: bool,
}

/// Append-only JSONL file of past exchanges.
#[derive(Clone, Debug)]
pub struct ExampleStore {
    path: PathBuf,
}

impl ExampleStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn dir(&self) -> PathBuf {
        self.path.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    pub fn append(&self, rec: &StoredExample) -> Result<()> {
        let io = |e: std::io::Error| PromptError::Io(format!("{}: {e}", self.path.display()));
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(io)?;
        let line = serde_json::to_string(rec).expect("record serializes");
        writeln!(f, "{line}").map_err(io)
    }

    /// All records in file order. A missing file is an empty store.
    pub fn records(&self) -> Result<Vec<StoredExample>> {
        let f = match std::fs::File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(PromptError::Io(e.to_string())),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| PromptError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| {
                PromptError::Io(format!("{}:{}: {e}", self.path.display(), i + 1))
            })?);
        }
        Ok(out)
    }

    fn resolve(&self, image_path: &str) -> PathBuf {
        let p = Path::new(image_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir().join(p)
        }
    }
}

/// The newest successful examples of a task family, newest first.
pub fn select_in_context_examples(
    store: &ExampleStore,
    task_family: &str,
    max_n: usize,
) -> Result<Vec<InContextExample>> {
    let records = store.records()?;
    records
        .iter()
        .rev()
        .filter(|r| r.success && r.task_family == task_family)
        .take(max_n)
        .map(|r| {
            let path = store.resolve(&r.image_path);
            let png = std::fs::read(&path).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(InContextExample {
                image: ImageRef::from_png(name, png),
                request_text: r.request.clone(),
                response_text: r.response.clone(),
            })
        })
        .collect()
}
