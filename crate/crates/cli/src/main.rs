use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use markpoint::pipeline::{
    annotate_scene, check_single_ablation, export_dataset, harvest_in_context, replay, run_task_with, EpisodeLog,
    ExportOptions, FailureKind, PipelineError, RunConfig, TrajectoryLog, VlmMode,
};
use markpoint::prompts::{ExampleStore, PromptError};
use markpoint::sim::{SceneSpec, SimError};
use markpoint::vlm::{VlmConfig, VlmError};

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_REASONING: u8 = 3;
const EXIT_EXECUTION: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(name = "markpoint", version, about = "Keypoint-prompted manipulation in a tabletop simulator")]
struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a task end to end and write its artifacts.
    Run(RunArgs),
    /// Run with exactly one ablation switched on.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Skip decomposition: one low-level query with every object marked.
        #[arg(long)]
        no_hierarchy: bool,
        /// Drop the keypoint and waypoint definitions from the prompt.
        #[arg(long)]
        no_point_description: bool,
        /// Drop the step-by-step paragraph from the prompt.
        #[arg(long)]
        no_cot: bool,
    },
    /// Write the annotated observation and its marks without querying.
    Annotate {
        #[arg(long)]
        scene: PathBuf,
        /// Comma-separated; the first gets P marks, the others Q marks.
        #[arg(long, value_delimiter = ',', required = true)]
        objects: Vec<String>,
        #[arg(long)]
        scene_seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Re-execute a logged episode and compare the final state.
    Replay {
        /// An `episode.json` or a run directory holding one.
        episode: PathBuf,
    },
    /// Export logged episodes as a demonstration dataset.
    ExportDataset {
        /// `episode.json` files or run directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        include_failed: bool,
        #[arg(long, default_value_t = 128)]
        image_size: u32,
        #[arg(long, default_value_t = markpoint::pipeline::MIN_EPISODES_PER_TASK)]
        min_per_task: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VlmKind {
    Oracle,
    Wire,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Task instruction; defaults to the scene's.
    #[arg(long)]
    task: Option<String>,
    #[arg(long, value_enum, default_value = "wire")]
    vlm: VlmKind,
    /// Scripted responses, required with `--vlm oracle`.
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Endpoint settings for `--vlm wire` as JSON. The key is read from the
    /// environment variable the file names.
    #[arg(long)]
    vlm_config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Jitter the scene with this seed first.
    #[arg(long)]
    scene_seed: Option<u64>,
    #[arg(long)]
    example_store: Option<PathBuf>,
    #[arg(long, default_value_t = markpoint::prompts::DEFAULT_IN_CONTEXT_EXAMPLES)]
    in_context: usize,
    #[arg(long)]
    task_family: Option<String>,
    #[arg(long, default_value_t = 2)]
    max_retries: usize,
    /// Append successful exchanges to the example store afterwards.
    #[arg(long, requires = "example_store")]
    harvest: bool,
    /// Parent of the timestamped run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Config(_) => EXIT_USAGE,
            PipelineError::Io(_) | PipelineError::Scene(SimError::Io(_)) | PipelineError::Prompt(PromptError::Io(_)) => {
                EXIT_IO
            }
            PipelineError::Scene(SimError::InvalidScene(_)) | PipelineError::Vlm(VlmError::Config(_)) => EXIT_USAGE,
            _ => EXIT_OTHER,
        };
        Failure { code, message: e.to_string() }
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

fn run_config(a: &RunArgs) -> Result<RunConfig, Failure> {
    let vlm = match a.vlm {
        VlmKind::Oracle => VlmMode::Oracle {
            script: a.oracle.clone().ok_or_else(|| usage("--vlm oracle needs --oracle PATH"))?,
        },
        VlmKind::Wire => {
            let config = match &a.vlm_config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(io(p))?;
                    serde_json::from_str::<VlmConfig>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
                }
                None => VlmConfig::default(),
            };
            VlmMode::Wire { config }
        }
    };
    Ok(RunConfig {
        scene: a.scene.clone(),
        instruction: a.task.clone(),
        vlm,
        in_context: a.in_context,
        example_store: a.example_store.clone(),
        task_family: a.task_family.clone(),
        seed: a.seed,
        scene_seed: a.scene_seed,
        max_retries: a.max_retries,
        ..RunConfig::default()
    })
}

/// A fresh `<parent>/<timestamp>-<scene>` directory.
fn run_dir(parent: &Path, scene: &Path) -> Result<PathBuf, Failure> {
    let stem = scene.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = parent.join(format!("{stamp}-{stem}"));
    let mut dir = base.clone();
    let mut n = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{n}", base.display()));
        n += 1;
    }
    std::fs::create_dir_all(&dir).map_err(io(&dir))?;
    Ok(dir)
}

fn execute(args: &RunArgs, mut cfg: RunConfig) -> Result<u8, Failure> {
    cfg.validate()?;
    let client = cfg.client()?;
    SceneSpec::load(&cfg.scene).map_err(PipelineError::from)?;
    let dir = run_dir(&args.out, &args.scene)?;
    cfg.out_dir = Some(dir.clone());
    let log: TrajectoryLog = run_task_with(&cfg, client.as_ref())?;
    if args.harvest {
        let store = ExampleStore::new(args.example_store.clone().expect("clap enforces --example-store"));
        let n = harvest_in_context(&log, &store)?;
        eprintln!("harvested {n} examples into {}", store.path().display());
    }
    let kind = log.failure_kind();
    println!("{}", dir.display());
    eprintln!(
        "{}: {} ({} subtasks, failure kind {:?})",
        log.scene,
        if log.success { "success" } else { "failed" },
        log.subtasks.len(),
        kind
    );
    Ok(match kind {
        FailureKind::None => 0,
        FailureKind::Reasoning => EXIT_REASONING,
        FailureKind::Execution => EXIT_EXECUTION,
    })
}

fn episode_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("episode.json")
    } else {
        p.to_path_buf()
    }
}

fn dispatch(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Run(args) => {
            let cfg = run_config(&args)?;
            execute(&args, cfg)
        }
        Command::Ablate { run, no_hierarchy, no_point_description, no_cot } => {
            let mut cfg = run_config(&run)?;
            cfg.ablation.disable_hierarchy = no_hierarchy;
            cfg.ablation.disable_point_description = no_point_description;
            cfg.ablation.disable_cot = no_cot;
            check_single_ablation(&cfg.ablation)?;
            execute(&run, cfg)
        }
        Command::Annotate { scene, objects, scene_seed, out } => {
            let mut spec = SceneSpec::load(&scene).map_err(PipelineError::from)?;
            if let Some(s) = scene_seed {
                spec = spec.jittered(s).map_err(PipelineError::from)?;
            }
            let annotated = annotate_scene(&spec, &objects, &RunConfig::default())?;
            std::fs::create_dir_all(&out).map_err(io(&out))?;
            let png = out.join("marked.png");
            std::fs::write(&png, annotated.to_png()).map_err(io(&png))?;
            let json = out.join("markset.json");
            std::fs::write(&json, annotated.markset.to_json()).map_err(io(&json))?;
            println!("{}\n{}", png.display(), json.display());
            Ok(0)
        }
        Command::Replay { episode } => {
            let ep = EpisodeLog::load(episode_path(&episode))?;
            let state = replay(&ep)?;
            if state == ep.final_state {
                println!("replay matches the logged final state ({} actions)", ep.actions().count());
                Ok(0)
            } else {
                Err(Failure { code: EXIT_OTHER, message: "replay diverged from the logged final state".into() })
            }
        }
        Command::ExportDataset { runs, out, include_failed, image_size, min_per_task } => {
            let episodes = runs
                .iter()
                .map(|p| EpisodeLog::load(episode_path(p)))
                .collect::<Result<Vec<_>, _>>()?;
            let opts = ExportOptions { include_failed, image_size, min_per_task };
            let m = export_dataset(&episodes, &out, &opts)?;
            println!("{} episodes written to {}", m.episodes, out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing_subscriber::filter::LevelFilter::WARN,
        1 => tracing_subscriber::filter::LevelFilter::INFO,
        _ => tracing_subscriber::filter::LevelFilter::DEBUG,
    };
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
