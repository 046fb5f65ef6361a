//! Acceptance checks, one line per criterion. Run with
//! `cargo test -p markpoint --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use markpoint::geometry::{
    farthest_point_sampling, nearest_grasp, sample_antipodal_grasps, BinaryMask, CameraModel, Contour, DepthImage,
    GraspConfig, GraspProposal, ImagePoint, Pixel, Point3, RigidTransform, Vector3,
};
use markpoint::marks::{build_grid, parse_tile_name, tile_bounds, MarkSet, MarkedObject, ObjectRole, TileId};
use markpoint::motion::{
    integrate, interpolate, resolve_orientation, AffordanceInstance, GraspPose, GripperPose, ManipulationPlan,
    MotionConfig, MotionPlan, Phase, Trajectory, GRASP_PROPOSALS,
};
use markpoint::pipeline::{
    export_dataset, harvest_in_context, replay, run_task, run_task_with, DatasetManifest, DatasetRecord,
    ExportOptions, FailureKind, RunConfig, TrajectoryLog,
};
use markpoint::prompts::{
    high_level_text, low_level_text, parse_low_level_response, AblationConfig, ExampleStore, Height, PromptError,
    SubtaskSpec, TargetAngle, MOTION_OUTPUT, POINT_EXPLANATION, RESPONSE_FIELDS, STEP_BY_STEP,
};
use markpoint::sim::{SceneSpec, Simulator};
use markpoint::vlm::{OracleScript, Part, ScriptedOracle};
use nalgebra::{Rotation3, Unit, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIXTURES: [&str; 4] = ["sweep", "watch", "gift", "laptop"];
const JITTERS: u64 = 20;
const TOL_CAMERA: f64 = 1e-6;
const TOL_VIA: f64 = 1e-3;
const TOL_EXACT: f64 = 1e-9;

fn fixture(rel: &str) -> String {
    format!("{}/tests/fixtures/{rel}", env!("CARGO_MANIFEST_DIR"))
}

fn cfg(scene: &str, oracle: &str) -> RunConfig {
    RunConfig::oracle(fixture(&format!("scenes/{scene}.json")), fixture(&format!("oracles/{oracle}.json")))
}

fn jittered(name: &str, s: u64) -> RunConfig {
    RunConfig { scene_seed: Some(s), seed: s, ..cfg(name, name) }
}

fn oracle(name: &str) -> ScriptedOracle {
    ScriptedOracle::new(OracleScript::load(fixture(&format!("oracles/{name}.json"))).unwrap())
}

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Harness {
    failed: Vec<u32>,
}

impl Harness {
    fn run(&mut self, n: u32, name: &str, budget_s: u64, f: impl FnOnce() -> Check) {
        let budget = Duration::from_secs(budget_s);
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = t0.elapsed();
        let result = match result {
            Ok(d) if elapsed > budget => Err(format!("over the time budget; {d}")),
            r => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        println!(
            "criterion {n:>2} {tag} {name:<24} {:>7.3}s / {budget_s}s  {detail}",
            elapsed.as_secs_f64()
        );
        if result.is_err() {
            self.failed.push(n);
        }
    }
}

fn first_text(o: &ScriptedOracle, k: usize) -> String {
    let r = &o.requests()[k];
    match &r.messages[0].parts[0] {
        Part::Text(t) => t.clone(),
        _ => panic!("request {k} does not start with text"),
    }
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(fixture(&format!("golden/{name}.txt"))).unwrap()
}

/// `full` with `block` deleted together with one adjacent separator.
fn without_block(full: &str, block: &str) -> Vec<String> {
    let mut out = Vec::new();
    for pat in [format!("{block}\n"), format!("\n{block}")] {
        if let Some(i) = full.find(&pat) {
            out.push(format!("{}{}", &full[..i], &full[i + pat.len()..]));
        }
    }
    out
}

fn prompt_fidelity() -> Check {
    let full = golden("low_level");
    ensure(high_level_text() == golden("high_level"), || "high-level text differs from golden".into())?;
    let variants = [
        ("low_level", AblationConfig::default(), None),
        (
            "low_level_no_cot",
            AblationConfig { disable_cot: true, ..Default::default() },
            Some(STEP_BY_STEP),
        ),
        (
            "low_level_no_description",
            AblationConfig { disable_point_description: true, ..Default::default() },
            Some(POINT_EXPLANATION),
        ),
    ];
    for (name, ablation, deleted) in variants {
        let want = golden(name);
        ensure(low_level_text(&ablation) == want, || format!("{name}: assembled text differs from golden"))?;
        if let Some(block) = deleted {
            ensure(without_block(&full, block).contains(&want), || {
                format!("{name}: not the full prompt minus exactly its block")
            })?;
        }
        // The text that actually reaches the model.
        let mut c = cfg("sweep", "sweep");
        c.ablation = ablation;
        let o = oracle("sweep");
        run_task_with(&c, &o).map_err(|e| e.to_string())?;
        ensure(first_text(&o, 0) == golden("high_level"), || format!("{name}: sent high-level prompt differs"))?;
        ensure(first_text(&o, 1) == want, || format!("{name}: sent low-level prompt differs"))?;
    }
    ensure(full.contains(MOTION_OUTPUT), || "motion-output block missing".into())?;
    Ok("4 golden files byte-equal; 2 ablations are exact block deletions".into())
}

fn oracle_runs(logs: &mut Vec<(RunConfig, TrajectoryLog)>) -> Check {
    let mut subtasks = 0;
    let mut ok = 0;
    let mut failures = Vec::new();
    for name in FIXTURES {
        for s in 0..JITTERS {
            let c = jittered(name, s);
            let log = run_task(&c).map_err(|e| format!("{name} seed {s}: {e}"))?;
            subtasks += log.subtasks.len();
            ok += log.subtasks.iter().filter(|r| r.success).count();
            if !log.success {
                failures.push(format!("{name}/{s}"));
            }
            logs.push((c, log));
        }
    }
    let runs = logs.len();
    ensure(failures.is_empty(), || format!("failed runs: {failures:?}"))?;
    Ok(format!("{runs}/{runs} runs, {ok}/{subtasks} subtasks succeeded"))
}

fn fps_oracle(pts: &[Pixel], k: usize, centroid: Pixel) -> Vec<Pixel> {
    let d2 = |a: Pixel, b: Pixel| {
        let (du, dv) = (a.u as i64 - b.u as i64, a.v as i64 - b.v as i64);
        du * du + dv * dv
    };
    let mut best = 0;
    for i in 1..pts.len() {
        if d2(pts[i], centroid) > d2(pts[best], centroid) {
            best = i;
        }
    }
    let mut chosen = vec![pts[best]];
    while chosen.len() < k {
        let score = |p: Pixel| chosen.iter().map(|&c| d2(p, c)).min().unwrap();
        let mut best = 0;
        for i in 1..pts.len() {
            if score(pts[i]) > score(pts[best]) {
                best = i;
            }
        }
        chosen.push(pts[best]);
    }
    chosen
}

fn fps_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut total = 0;
    for trial in 0..200 {
        let n = rng.gen_range(3..=500);
        // Small coordinate ranges force distance ties.
        let span = if trial % 2 == 0 { 12 } else { 400 };
        let pts: Vec<Pixel> = (0..n).map(|_| Pixel::new(rng.gen_range(0..span), rng.gen_range(0..span))).collect();
        let k = rng.gen_range(1..=16.min(n));
        let centroid = Pixel::new(rng.gen_range(0..span), rng.gen_range(0..span));
        let got = farthest_point_sampling(&Contour { points: pts.clone() }, k, centroid).map_err(|e| e.to_string())?;
        let want = fps_oracle(&pts, k, centroid);
        ensure(got == want, || format!("trial {trial}: n={n} k={k} got {got:?}, oracle {want:?}"))?;
        total += k;
    }
    Ok(format!("200 contours, {total} picks, exact match"))
}

fn random_camera(rng: &mut ChaCha8Rng) -> (CameraModel, u32, u32) {
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    ));
    let ext = RigidTransform {
        rotation: q.to_rotation_matrix(),
        translation: Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.0..2.0)),
    };
    let (w, h) = (rng.gen_range(64..1280), rng.gen_range(48..960));
    let f = rng.gen_range(200.0..1500.0);
    let cam = CameraModel::new(f, f * rng.gen_range(0.9..1.1), w as f64 / 2.0, h as f64 / 2.0, ext).unwrap();
    (cam, w, h)
}

fn camera_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_px, mut worst_m) = (0.0f64, 0.0f64);
    for i in 0..10_000 {
        let (cam, w, h) = random_camera(&mut rng);
        let px = ImagePoint::new(rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
        let depth = rng.gen_range(0.1..5.0);
        let back = cam.project_world(&cam.deproject_world(px, depth).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        worst_px = worst_px.max((back.u - px.u).abs().max((back.v - px.v).abs()));

        // A world point inside the frustum, built from camera-frame coordinates.
        let z = rng.gen_range(0.1..5.0);
        let pc = Point3::new(
            (rng.gen_range(0.0..w as f64) - cam.cx) * z / cam.fx,
            (rng.gen_range(0.0..h as f64) - cam.cy) * z / cam.fy,
            z,
        );
        let pw = cam.camera_to_world(&pc);
        let img = cam.project_world(&pw).map_err(|e| e.to_string())?;
        let again = cam.deproject_world(img, z).map_err(|e| e.to_string())?;
        worst_m = worst_m.max((again - pw).amax());
        ensure(worst_px <= TOL_CAMERA && worst_m <= TOL_CAMERA, || {
            format!("sample {i}: pixel error {worst_px:e}, point error {worst_m:e}")
        })?;
    }
    Ok(format!("10000 samples, max error {worst_px:.1e} px / {worst_m:.1e} m (tol {TOL_CAMERA:e})"))
}

/// Fixture objects narrow enough for the gripper.
const GRASPABLE: [&str; 7] = ["glasses", "broom", "trash", "watch", "golden filler", "perfume", "cable"];

fn grasp_masks() -> Vec<(DepthImage, BinaryMask, CameraModel)> {
    let mut out = Vec::new();
    for name in FIXTURES {
        let scene = SceneSpec::load(fixture(&format!("scenes/{name}.json"))).unwrap();
        let sim = Simulator::new(scene).unwrap();
        let obs = sim.render(&sim.reset_to_neutral(&sim.initial_state()));
        for (name, mask) in &obs.masks {
            if GRASPABLE.contains(&name.as_str()) && !mask.is_empty() {
                out.push((obs.depth.clone(), mask.clone(), *sim.camera()));
            }
        }
    }
    // Rotated ellipses on a flat table, narrow enough to grasp.
    let cam = CameraModel::top_down(0.5, 0.0, 1.0, 500.0, 200, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..12 {
        let (a, b) = (rng.gen_range(10.0..40.0), rng.gen_range(5.0..18.0));
        let (cu, cv, th): (f64, f64, f64) = (rng.gen_range(60.0..140.0), rng.gen_range(60.0..140.0), rng.gen_range(0.0..3.14));
        let mask = BinaryMask::from_fn(200, 200, |u, v| {
            let (x, y) = (u as f64 - cu, v as f64 - cv);
            let (p, q) = (x * th.cos() + y * th.sin(), -x * th.sin() + y * th.cos());
            (p / a).powi(2) + (q / b).powi(2) <= 1.0
        });
        let mut depth = DepthImage::filled(200, 200, 1.0);
        for p in mask.pixels() {
            depth.set(p.u, p.v, 0.97);
        }
        out.push((depth, mask, cam));
    }
    out
}

fn linear_nearest(ps: &[GraspProposal], q: &Point3) -> usize {
    let mut best = 0;
    for i in 1..ps.len() {
        let (di, db) = ((ps[i].center - q).norm_squared(), (ps[best].center - q).norm_squared());
        if di < db || (di == db && ps[i].quality > ps[best].quality) {
            best = i;
        }
    }
    best
}

fn grasp_sampler() -> Check {
    let cfg = GraspConfig::default();
    let cone = cfg.friction_half_angle_deg.to_radians();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut proposals = 0;
    let mut queries = 0;
    for (i, (depth, mask, cam)) in grasp_masks().iter().enumerate() {
        let gcfg = GraspConfig { seed: i as u64, ..cfg };
        let ps = sample_antipodal_grasps(depth, mask, cam, GRASP_PROPOSALS, &gcfg).map_err(|e| format!("mask {i}: {e}"))?;
        ensure(ps.len() == 30, || format!("mask {i}: {} proposals", ps.len()))?;
        for (j, g) in ps.iter().enumerate() {
            let [a, b] = g.normals;
            let angle = (a[0] * b[0] + a[1] * b[1]).clamp(-1.0, 1.0).acos();
            ensure((angle - std::f64::consts::PI).abs() <= cone + TOL_EXACT, || {
                format!("mask {i} proposal {j}: normals {:.2} deg from anti-parallel", (std::f64::consts::PI - angle).to_degrees())
            })?;
            ensure(g.width <= cfg.max_aperture, || format!("mask {i} proposal {j}: width {}", g.width))?;
        }
        proposals += ps.len();
        for _ in 0..100 / 4 {
            let c = ps[rng.gen_range(0..ps.len())].center;
            let q = c + Vector3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.02..0.02));
            let got = nearest_grasp(&ps, &q).map_err(|e| e.to_string())?;
            ensure(got == ps[linear_nearest(&ps, &q)], || format!("mask {i}: nearest_grasp disagrees at {q:?}"))?;
            queries += 1;
        }
    }
    Ok(format!("{proposals} proposals all antipodal within {}deg and <= {} m; {queries} nearest queries match", cfg.friction_half_angle_deg, cfg.max_aperture))
}

fn grid_partition() -> Check {
    let mut pixels = 0;
    for (w, h) in [(400, 400), (640, 480), (333, 251)] {
        let grid = build_grid(w, h, 5, 5).map_err(|e| e.to_string())?;
        let tiles: Vec<TileId> = grid.tiles().collect();
        ensure(tiles.len() == 25, || format!("{w}x{h}: {} tiles", tiles.len()))?;
        let mut rects = Vec::new();
        for t in &tiles {
            let name = t.to_string();
            let parsed = parse_tile_name(&name, &grid).map_err(|e| e.to_string())?;
            let r = tile_bounds(&grid, parsed).map_err(|e| e.to_string())?;
            ensure(parsed == *t && grid.tile_of_point(r.center()) == Some(*t), || {
                format!("{w}x{h}: {name} does not round-trip")
            })?;
            rects.push((*t, r));
        }
        for v in 0..h {
            for u in 0..w {
                let p = Pixel::new(u, v);
                let hits: Vec<TileId> = rects.iter().filter(|(_, r)| r.contains(p)).map(|(t, _)| *t).collect();
                ensure(hits.len() == 1 && grid.tile_of(p) == Some(hits[0]), || {
                    format!("{w}x{h}: pixel ({u},{v}) is in {hits:?}")
                })?;
            }
        }
        pixels += (w * h) as usize;
    }
    Ok(format!("75 tile round trips; {pixels} pixels each in exactly one tile"))
}

fn parser_markset() -> MarkSet {
    let a = BinaryMask::from_fn(200, 200, |u, v| (20..80).contains(&u) && (20..60).contains(&v));
    let b = BinaryMask::from_fn(200, 200, |u, v| (110..180).contains(&u) && (100..170).contains(&v));
    MarkSet::build(
        &[
            MarkedObject { name: "broom", mask: &a, role: ObjectRole::Grasped },
            MarkedObject { name: "trash", mask: &b, role: ObjectRole::Unattached },
        ],
        8,
        build_grid(200, 200, 5, 5).unwrap(),
        "obs",
    )
    .unwrap()
}

fn pick<'a>(rng: &mut ChaCha8Rng, filled: f64, options: &[&'a str]) -> &'a str {
    if rng.gen_bool(filled) {
        options[rng.gen_range(0..options.len())]
    } else {
        ""
    }
}

fn parser_contract() -> Check {
    let ms = parser_markset();
    let p: Vec<String> = (0..8).map(|i| format!("P{i}")).collect();
    let q: Vec<String> = (0..8).map(|i| format!("Q{i}")).collect();
    let p: Vec<&str> = p.iter().map(String::as_str).collect();
    let q: Vec<&str> = q.iter().map(String::as_str).collect();
    let tiles: Vec<String> = "abcde".chars().flat_map(|c| (1..=5).map(move |r| format!("{c}{r}"))).collect();
    let tiles: Vec<&str> = tiles.iter().map(String::as_str).collect();
    let angles: Vec<&str> = TargetAngle::ALL.iter().map(|a| a.as_str()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut accepted, mut rejected) = (0, 0);
    for i in 0..1000 {
        let (g, u) = match rng.gen_range(0..3) {
            0 => ("broom", ""),
            1 => ("", "trash"),
            _ => ("broom", "trash"),
        };
        let sub = SubtaskSpec {
            instruction: "Sweep the trash".into(),
            object_grasped: g.into(),
            object_unattached: u.into(),
            motion_direction: "left".into(),
        };
        let fill = |want: bool| if want { 0.9 } else { 0.1 };
        let (fg, ff, ft) = (fill(!g.is_empty()), fill(!g.is_empty() && !u.is_empty()), fill(!u.is_empty()));
        let fields = [
            pick(&mut rng, fg, &p),
            pick(&mut rng, ff, &p),
            pick(&mut rng, ft, &q),
            pick(&mut rng, 0.93, &tiles),
            pick(&mut rng, 0.93, &tiles),
            pick(&mut rng, 0.93, &Height::OPTIONS),
            pick(&mut rng, 0.93, &Height::OPTIONS),
            pick(&mut rng, 0.7, &angles),
        ];
        let keys = RESPONSE_FIELDS;
        let body: serde_json::Map<String, serde_json::Value> =
            keys.iter().zip(fields).map(|(k, v)| (k.to_string(), v.into())).collect();
        let body = serde_json::Value::Object(body).to_string();
        // Independent statement of the emptiness rules.
        let set = |s: &str| !s.is_empty();
        let (gs, us) = (!g.is_empty(), !u.is_empty());
        let expect = set(fields[0]) == gs
            && set(fields[2]) == us
            && set(fields[1]) == (gs && us)
            && (!us || fields[3..7].iter().all(|f| set(f)));
        let plain = parse_low_level_response(&body, &ms, Some(&sub));
        let fenced = parse_low_level_response(&format!("```json\n{body}\n```"), &ms, Some(&sub));
        let prose = parse_low_level_response(&format!("I pick the bristles.\n```\n{body}\n```\n"), &ms, Some(&sub));
        ensure(plain == fenced, || format!("response {i}: fenced and unfenced differ"))?;
        let strip = |r: Result<_, PromptError>| r.map(|x: markpoint::prompts::AffordanceResponse| markpoint::prompts::AffordanceResponse { rationale_text: String::new(), ..x });
        ensure(strip(prose) == plain, || format!("response {i}: leading prose changes the result"))?;
        match plain {
            Ok(r) => {
                ensure(expect, || format!("response {i} accepted but violates the rules: {body}"))?;
                ensure(
                    r.grasp_keypoint.is_some() == gs
                        && r.target_keypoint.is_some() == us
                        && r.function_keypoint.is_some() == (gs && us),
                    || format!("response {i}: accepted fields break a biconditional"),
                )?;
                accepted += 1;
            }
            Err(e) => {
                ensure(!expect, || format!("response {i} rejected ({e}) but satisfies the rules: {body}"))?;
                ensure(matches!(e, PromptError::ConsistencyViolation(_)), || format!("response {i}: unexpected {e}"))?;
                rejected += 1;
            }
        }
    }
    ensure(accepted >= 200 && rejected >= 200, || format!("unbalanced sample: {accepted} accepted, {rejected} rejected"))?;

    let sweep = SubtaskSpec {
        instruction: "Sweep".into(),
        object_grasped: "broom".into(),
        object_unattached: "trash".into(),
        motion_direction: "left".into(),
    };
    let good = r#""grasp_keypoint":"P1","function_keypoint":"P4","target_keypoint":"Q2","pre_contact_tile":"b3","post_contact_tile":"d3","pre_contact_height":"same","post_contact_height":"same""#;
    let classes = [
        ("missing field", format!("{{{good}}}")),
        ("bad option", format!("{{{},\"target_angle\":\"sideways\"}}", good)),
        ("unknown label", format!("{{{},\"target_angle\":\"\"}}", good.replace("P4", "P99"))),
        ("malformed tile", format!("{{{},\"target_angle\":\"\"}}", good.replace("b3", "3b"))),
        ("tile out of range", format!("{{{},\"target_angle\":\"\"}}", good.replace("b3", "g3"))),
    ];
    let mut kinds = Vec::new();
    for (class, text) in &classes {
        let e = parse_low_level_response(text, &ms, Some(&sweep)).err().ok_or_else(|| format!("{class} was accepted"))?;
        let kind = match e {
            PromptError::MissingField(_) => "MissingField",
            PromptError::InvalidOption { .. } => "InvalidOption",
            PromptError::UnknownLabel { .. } => "UnknownLabel",
            PromptError::MalformedTile { .. } => "MalformedTile",
            PromptError::TileOutOfRange { .. } => "TileOutOfRange",
            other => return Err(format!("{class}: unexpected {other}")),
        };
        ensure(!kinds.contains(&kind), || format!("{class} shares error {kind}"))?;
        kinds.push(kind);
    }
    Ok(format!("1000 responses ({accepted} accepted, {rejected} rejected) agree with the rules; 5 malformed classes, 5 distinct errors"))
}

/// Function point after each action, given where it sits on the held object.
fn function_track(plan: &MotionPlan, traj: &Trajectory) -> Vec<Vec<Point3>> {
    let poses = integrate(&plan.start, traj.actions(), traj.dt);
    let grasp_yaw = plan.grasp.map(|g| g.yaw).unwrap_or(plan.start.yaw);
    let mut out = Vec::new();
    let mut k = 0;
    for ph in &traj.phases {
        let seg = &poses[k..k + ph.actions.len()];
        out.push(
            seg.iter()
                .map(|p| p.position + Rotation3::from_axis_angle(&Vector3::z_axis(), p.yaw - grasp_yaw) * plan.function_offset)
                .collect(),
        );
        k += ph.actions.len();
    }
    out
}

/// Max distance between the function point at the pre, target and post
/// keyframes and the via-points; errors if the keyframes are out of order.
fn via_error(plan: &MotionPlan, traj: &Trajectory) -> Result<f64, String> {
    let m = plan.manipulation.as_ref().ok_or("no manipulation phase")?;
    let track = function_track(plan, traj);
    let i = traj.phases.iter().position(|p| p.phase == Phase::Manipulate).ok_or("no manipulate phase")?;
    let keys = &traj.phases[i].keyframe_steps;
    let steps = [keys[1], keys[2], keys[3]];
    if !(steps[0] < steps[1] && steps[1] < steps[2]) && !(steps[0] <= steps[1] && steps[1] <= steps[2] && m.via[0] == m.via[1]) {
        return Err(format!("keyframes out of order: {steps:?}"));
    }
    let mut worst = 0.0f64;
    for (s, via) in steps.iter().zip(&m.via) {
        let at = if *s == 0 { return Err("keyframe at step 0".into()) } else { track[i][s - 1] };
        worst = worst.max((at - via).norm());
    }
    Ok(worst)
}

fn motion_ordering(logs: &[(RunConfig, TrajectoryLog)]) -> Check {
    let mcfg = MotionConfig::default();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut same = 0;
    let mut worst_z = 0.0f64;
    for (c, log) in logs {
        for s in &log.subtasks {
            let (Some(plan), Some(traj), Some(inst), Some(resp)) = (&s.plan, &s.trajectory, &s.instance, &s.response) else {
                continue;
            };
            if plan.manipulation.is_none() {
                continue;
            }
            worst = worst.max(via_error(plan, traj).map_err(|e| format!("{:?} subtask {}: {e}", c.scene_seed, s.index))?);
            checked += 1;
            let t = inst.target_point.unwrap();
            for (h, p) in [(resp.pre_contact_height, inst.pre_contact), (resp.post_contact_height, inst.post_contact)] {
                if h == Some(Height::Same) {
                    worst_z = worst_z.max((p.unwrap().z - t.z).abs());
                    same += 1;
                }
            }
        }
    }
    // Synthetic plans with random geometry, grasp and orientation.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let v = |r: f64, rng: &mut ChaCha8Rng| Vector3::new(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r));
    for _ in 0..200 {
        let gp = Point3::new(rng.gen_range(0.2..0.8), rng.gen_range(-0.3..0.3), rng.gen_range(0.01..0.05));
        let fp = gp + v(0.1, &mut rng);
        let target = Point3::new(rng.gen_range(0.2..0.8), rng.gen_range(-0.3..0.3), rng.gen_range(0.0..0.1));
        let inst = AffordanceInstance {
            grasp_point: Some(gp),
            function_point: Some(fp),
            target_point: Some(target),
            pre_contact: Some(target + v(0.1, &mut rng)),
            post_contact: Some(target + v(0.1, &mut rng)),
            target_angle: Some(TargetAngle::ALL[rng.gen_range(0..6)]),
            ..Default::default()
        };
        let grasp = GraspPose { position: gp, yaw: rng.gen_range(-1.5..1.5), width: 0.03 };
        let r = resolve_orientation(&inst).map_err(|e| e.to_string())?;
        let manip = ManipulationPlan { via: [inst.pre_contact.unwrap(), target, inst.post_contact.unwrap()], rotation: r };
        let start = GripperPose { position: Point3::new(0.3, 0.0, 0.4), yaw: 0.0 };
        let plan = MotionPlan::compile(start, &inst, Some(grasp), Some(manip), Some(Height::Same));
        let traj = interpolate(&plan, &mcfg).map_err(|e| e.to_string())?;
        worst = worst.max(via_error(&plan, &traj)?);
        checked += 1;
    }
    ensure(worst <= TOL_VIA, || format!("via error {worst:e} m"))?;
    ensure(same > 0 && worst_z <= TOL_EXACT, || format!("{same} same-height waypoints, z error {worst_z:e}"))?;

    let mut worst_r = 0.0f64;
    for angle in TargetAngle::ALL {
        let named = angle.axis();
        for j in 0..20 {
            let axis = if j == 0 { -named } else { v(1.0, &mut rng) };
            let g = Point3::new(0.5, 0.0, 0.05);
            let inst = AffordanceInstance {
                grasp_point: Some(g),
                function_point: Some(g + axis),
                target_angle: Some(angle),
                ..Default::default()
            };
            let r = resolve_orientation(&inst).map_err(|e| e.to_string())?;
            worst_r = worst_r.max((r * Unit::new_normalize(axis).into_inner() - named).norm());
        }
    }
    ensure(worst_r <= TOL_EXACT, || format!("orientation error {worst_r:e}"))?;
    Ok(format!(
        "{checked} trajectories in order, via error {worst:.1e} m; {same} same-height z error {worst_z:.1e}; 120 orientations error {worst_r:.1e}"
    ))
}

fn determinism_and_replay(logs: &[(RunConfig, TrajectoryLog)]) -> Check {
    for (c, log) in logs {
        let again = run_task(c).map_err(|e| e.to_string())?;
        ensure(again.to_json() == log.to_json(), || format!("{} seed {:?}: transcripts differ", log.scene, c.scene_seed))?;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let episodes: Vec<_> = logs.iter().map(|(_, l)| l.episode.clone()).collect();
    let m = export_dataset(&episodes, dir.path(), &ExportOptions { min_per_task: 0, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let records = m.records(dir.path()).map_err(|e| e.to_string())?;
    ensure(records.len() == logs.len(), || format!("{} of {} episodes exported", records.len(), logs.len()))?;
    for (r, (_, log)) in records.iter().zip(logs) {
        ensure(r.final_state == log.episode.final_state, || format!("{}: exported state differs", r.episode_id))?;
        let state = replay(&r.episode()).map_err(|e| e.to_string())?;
        ensure(state == log.episode.final_state, || format!("{}: replay diverges", r.episode_id))?;
    }
    Ok(format!("{} transcripts byte-identical; {} exported episodes replay exactly", logs.len(), records.len()))
}

fn failure_taxonomy() -> Check {
    let log = run_task(&cfg("sweep", "sweep_reasoning_failure")).map_err(|e| e.to_string())?;
    let s = &log.subtasks[0];
    ensure(log.failure_kind() == FailureKind::Reasoning && s.failure_kind == FailureKind::Reasoning, || {
        format!("invalid label gave {:?}", log.failure_kind())
    })?;
    ensure(s.attempts.len() == 3 && s.plan.is_none(), || format!("{} attempts", s.attempts.len()))?;
    let log = run_task(&cfg("sweep", "sweep_execution_failure")).map_err(|e| e.to_string())?;
    let s = &log.subtasks[0];
    ensure(log.failure_kind() == FailureKind::Execution && s.failure_kind == FailureKind::Execution, || {
        format!("wrong plan gave {:?}", log.failure_kind())
    })?;
    ensure(s.response.is_some() && s.plan.is_some() && !s.report.as_ref().unwrap().success, || {
        "execution failure without a valid plan and a false predicate".into()
    })?;
    Ok("invalid label -> reasoning after 3 attempts; valid wrong plan -> execution".into())
}

fn low_level_parts(o: &ScriptedOracle) -> Vec<Vec<Part>> {
    o.requests().into_iter().skip(1).map(|r| r.messages[0].parts.clone()).collect()
}

fn bootstrapping() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = ExampleStore::new(dir.path().join("examples.jsonl"));
    let c = cfg("sweep", "sweep");
    let o1 = oracle("sweep");
    let log = run_task_with(&c, &o1).map_err(|e| e.to_string())?;
    let n = harvest_in_context(&log, &store).map_err(|e| e.to_string())?;
    ensure(n == 2, || format!("harvested {n}"))?;
    let c2 = RunConfig { example_store: Some(store.path().to_path_buf()), ..c };
    let o2 = oracle("sweep");
    let log2 = run_task_with(&c2, &o2).map_err(|e| e.to_string())?;
    ensure(log2.success, || "re-run failed".into())?;
    let harvested: Vec<_> = log.subtasks.iter().rev().collect();
    for (q, (b, a)) in low_level_parts(&o1).iter().zip(&low_level_parts(&o2)).enumerate() {
        let mut expect = vec![b[0].clone()];
        for rec in &harvested {
            expect.push(Part::Text(rec.request.clone()));
            expect.push(Part::Image(rec.annotated_image.clone().unwrap()));
            expect.push(Part::Text(rec.accepted_response().unwrap().to_string()));
        }
        expect.extend_from_slice(&b[1..]);
        ensure(a.len() == expect.len(), || format!("query {q}: {} parts, expected {}", a.len(), expect.len()))?;
        for (k, (x, y)) in a.iter().zip(&expect).enumerate() {
            let same = match (x, y) {
                (Part::Image(x), Part::Image(y)) => x.sha256() == y.sha256(),
                _ => x == y,
            };
            ensure(same, || format!("query {q}: part {k} differs"))?;
        }
    }
    ensure(first_text(&o1, 0) == first_text(&o2, 0), || "high-level prompt changed".into())?;
    Ok("2 harvested pairs inserted; prompt text and query unchanged".into())
}

fn check_record_schema(line: &str) -> Result<(), String> {
    let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let o = v.as_object().ok_or("record is not an object")?;
    for (k, ok) in [
        ("episode_id", o.get("episode_id").is_some_and(|x| x.is_string())),
        ("language", o.get("language").is_some_and(|x| x.as_str().is_some_and(|s| !s.is_empty()))),
        ("task_family", o.get("task_family").is_some_and(|x| x.is_string())),
        ("success", o.get("success").is_some_and(|x| x.as_bool() == Some(true))),
        ("steps", o.get("steps").is_some_and(|x| x.as_array().is_some_and(|a| !a.is_empty()))),
    ] {
        ensure(ok, || format!("field {k} missing or mistyped"))?;
    }
    for step in o["steps"].as_array().unwrap() {
        let a = step["action"].as_array().ok_or("action is not an array")?;
        ensure(a.len() == 7 && a.iter().all(|x| x.is_f64() || x.is_i64()), || "action is not 7 numbers".into())?;
        ensure(step["observation"].is_string() && step["proprioception"].is_object(), || "step fields".into())?;
    }
    serde_json::from_str::<DatasetRecord>(line).map_err(|e| e.to_string())?;
    Ok(())
}

fn dataset_export() -> Check {
    let mut episodes = Vec::new();
    for s in 0..50 {
        let log = run_task(&jittered("sweep", 1000 + s)).map_err(|e| e.to_string())?;
        ensure(log.success, || format!("sweep seed {} failed", 1000 + s))?;
        episodes.push(log.episode);
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let m = export_dataset(&episodes, dir.path(), &ExportOptions::default()).map_err(|e| e.to_string())?;
    let loaded = DatasetManifest::load(dir.path().join("manifest.json")).map_err(|e| e.to_string())?;
    ensure(loaded == m && m.episodes == 50 && m.counts.get("sweep") == Some(&50) && m.warnings.is_empty(), || {
        format!("manifest: {} episodes, counts {:?}, warnings {:?}", m.episodes, m.counts, m.warnings)
    })?;
    let text = std::fs::read_to_string(dir.path().join(&m.episodes_file)).map_err(|e| e.to_string())?;
    let mut steps = 0;
    for (i, line) in text.lines().enumerate() {
        check_record_schema(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        let r: DatasetRecord = serde_json::from_str(line).unwrap();
        ensure(r.steps.iter().all(|s| dir.path().join(&s.observation).is_file()), || {
            format!("{}: missing observation file", r.episode_id)
        })?;
        steps += r.steps.len();
    }
    ensure(text.lines().count() == 50, || format!("{} lines", text.lines().count()))?;
    Ok(format!("manifest count 50, 50 schema-valid lines, {steps} observations"))
}

fn main() {
    let mut h = Harness { failed: Vec::new() };
    let mut logs = Vec::new();
    h.run(1, "prompt fidelity", 1, prompt_fidelity);
    h.run(2, "end-to-end oracle runs", 60, || oracle_runs(&mut logs));
    h.run(3, "fps oracle equivalence", 10, fps_equivalence);
    h.run(4, "camera round trip", 1, camera_round_trip);
    h.run(5, "grasp sampler", 5, grasp_sampler);
    h.run(6, "grid partition", 1, grid_partition);
    h.run(7, "parser contract", 5, parser_contract);
    h.run(8, "motion ordering", 5, || motion_ordering(&logs));
    h.run(9, "determinism and replay", 30, || determinism_and_replay(&logs));
    h.run(10, "failure taxonomy", 10, failure_taxonomy);
    h.run(11, "bootstrapping", 5, bootstrapping);
    h.run(12, "dataset export", 60, dataset_export);
    if h.failed.is_empty() {
        println!("all 12 criteria pass");
    } else {
        println!("failed criteria: {:?}", h.failed);
        std::process::exit(1);
    }
}
