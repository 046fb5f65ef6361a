//! Runs a fixture scene under scripted answers across pose jitters.
//!
//! `cargo run --example jitter_batch -- sweep 20`

use markpoint::pipeline::{run_task, RunConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "sweep".into());
    let runs: u64 = args.next().and_then(|n| n.parse().ok()).unwrap_or(20);
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
    let mut ok = 0;
    for s in 0..runs {
        let cfg = RunConfig {
            scene_seed: Some(s),
            seed: s,
            ..RunConfig::oracle(format!("{root}/scenes/{name}.json"), format!("{root}/oracles/{name}.json"))
        };
        let log = run_task(&cfg).expect("run starts");
        if log.success {
            ok += 1;
        } else {
            let why = log.subtasks.iter().find_map(|r| r.error.clone()).unwrap_or_default();
            println!("jitter {s}: {:?} {why}", log.failure_kind());
        }
    }
    println!("{name}: {ok}/{runs}");
}
