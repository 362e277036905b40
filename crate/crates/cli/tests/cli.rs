use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn umbra(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_umbra"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ECLIPSE_THREADS")
        .output()
        .expect("spawn umbra")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SCENE: &str = r#"
seed = 3

[geometry]
kind = "sphere"
radius = 1.0

[material]
kind = "lambertian"
albedo = [0.5, 0.4, 0.3]

[environment]
kind = "procedural"
height = 6
width = 12

[occluders]
kind = "caps"
per_frame = 1
radius_min = 0.4
radius_max = 0.6
spread = 0.5

[cameras]
kind = "orbit"
count = 2
radius = 4.0
elevation = 0.5
spiral = true
fov_y = 0.6
size = 8

[render]
material_samples = 8
light_samples = 8
aa_passes = 2

[solver]
batch = 32
steps = 4
snapshot_every = 2
sh_degree = 2
mask_bias = 4.0
env_height = 6
env_width = 12
env_levels = 2
hidden_layers = 1
hidden_width = 8

[solver.render]
material_samples = 2
light_samples = 2
aa_passes = 1
"#;

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&umbra(&["--help"], dir.path()));
    for cmd in ["render", "solve", "flatland", "metrics", "relight"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn render_solve_metrics_relight_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("scene.toml"), SCENE).unwrap();
    ok(&umbra(&["render", "--config", "scene.toml", "--out", "data"], d));
    for f in ["manifest.toml", "frame_000.pfm", "frame_001.pfm", "mask_000.pfm", "truth_environment.pfm"] {
        assert!(d.join("data").join(f).exists(), "{f}");
    }

    let log = ok(&umbra(&["solve", "--manifest", "data", "--config", "scene.toml", "--out", "run"], d));
    assert!(log.contains("env rmse"), "{log}");
    let csv = fs::read_to_string(d.join("run/metrics.csv")).unwrap();
    // Header plus snapshots at steps 0, 2 and the final step.
    assert_eq!(csv.lines().count(), 4, "{csv}");
    assert!(d.join("run/checkpoint").is_dir());

    let report = ok(&umbra(&["metrics", "--checkpoint", "run/checkpoint", "--manifest", "data", "--out", "eval"], d));
    let row: Vec<f64> = report.lines().nth(1).unwrap().split(',').take(3).map(|v| v.parse().unwrap()).collect();
    assert!(row.iter().all(|v| v.is_finite()), "{report}");
    assert!(d.join("eval/mask_pairs.csv").exists());

    let env = d.join("data/truth_environment.pfm");
    let env = env.to_str().unwrap();
    ok(&umbra(
        &["relight", "--checkpoint", "run/checkpoint", "--manifest", "data", "--out", "relit", "--env", env, "--samples", "8"],
        d,
    ));
    assert!(d.join("relit/relit_000.pfm").exists() && d.join("relit/relit_001.pfm").exists());
}

#[test]
fn same_seed_renders_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("scene.toml"), SCENE).unwrap();
    for out in ["a", "b"] {
        ok(&umbra(&["render", "--config", "scene.toml", "--out", out, "--seed", "9"], d));
    }
    ok(&umbra(&["render", "--config", "scene.toml", "--out", "c", "--seed", "10"], d));
    let frame = |run: &str| fs::read(d.join(run).join("frame_001.pfm")).unwrap();
    assert_eq!(frame("a"), frame("b"));
    assert_ne!(frame("a"), frame("c"));
}

#[test]
fn no_occluder_baseline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("scene.toml"), SCENE).unwrap();
    ok(&umbra(&["render", "--config", "scene.toml", "--out", "data"], d));
    ok(&umbra(
        &["solve", "--manifest", "data", "--config", "scene.toml", "--out", "base", "--no-occluder-model", "--steps", "2"],
        d,
    ));
    assert!(d.join("base/checkpoint").is_dir());
}

#[test]
fn flatland_writes_tables_and_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let log = ok(&umbra(&["flatland", "--samples", "32", "--frames", "0,1,2", "--no-images", "--out", "flat"], d));
    assert!(log.contains("unnormalized spectra non-decreasing in T: holds"), "{log}");
    let spectra = fs::read_to_string(d.join("flat/spectra.csv")).unwrap();
    assert!(spectra.starts_with("scenario,rank,value"));
    assert_eq!(spectra.lines().filter(|l| l.starts_with("T=2,")).count(), 32);
    let summary = fs::read_to_string(d.join("flat/fourier_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4, "{summary}");
    assert!(!d.join("flat/gram_T1.pfm").exists());
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = umbra(&["solve", "--manifest", "nowhere", "--out", "x"], d);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error:"));

    let spectrum = umbra(&["flatland", "--samples", "8", "--spectrum", "pink", "--no-images", "--out", "f"], d);
    assert!(!spectrum.status.success());
    assert!(String::from_utf8_lossy(&spectrum.stderr).contains("power:<a>"));

    let threads = Command::new(env!("CARGO_BIN_EXE_umbra"))
        .args(["flatland", "--samples", "8", "--out", "f"])
        .current_dir(d)
        .env("ECLIPSE_THREADS", "many")
        .output()
        .unwrap();
    assert!(!threads.status.success());
    assert!(String::from_utf8_lossy(&threads.stderr).contains("ECLIPSE_THREADS"));
}
