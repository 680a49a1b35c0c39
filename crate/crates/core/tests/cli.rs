use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn leadvel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leadvel"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn small_scenario(dir: &Path) {
    fs::write(
        dir.join("scenario.toml"),
        "n_frames = 24\nimage_width = 320\nimage_height = 240\ndisparity_noise_px = 0.3\n",
    )
    .unwrap();
}

#[test]
fn generate_then_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_scenario(dir);
    let out = leadvel(dir, &["--config", "scenario.toml", "generate", "--out", "data", "--scenes", "3", "--seed", "5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for id in ["scene_000005", "scene_000006", "scene_000007"] {
        assert!(dir.join("data").join(id).join("scene.json").is_file());
    }

    let out = leadvel(
        dir,
        &[
            "evaluate", "--train", "data/scene_000005", "--train", "data/scene_000006",
            "--test", "data/scene_000007", "--model", "linear", "--tracker", "oracle", "--out", "ev",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("oracle") && stdout.contains("linear"), "{stdout}");
    assert!(dir.join("ev").join("report.csv").is_file());
}

#[test]
fn generation_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_scenario(dir);
    for out_dir in ["a", "b"] {
        let out = leadvel(dir, &["--config", "scenario.toml", "generate", "--out", out_dir, "--seed", "9"]);
        assert_eq!(code(&out), 0);
    }
    for name in ["scene.json", "disp_0010.pgm", "img_0023.pgm"] {
        assert_eq!(
            fs::read(dir.join("a/scene_000009").join(name)).unwrap(),
            fs::read(dir.join("b/scene_000009").join(name)).unwrap()
        );
    }
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&leadvel(dir, &["bogus"])), 1);
    assert_eq!(code(&leadvel(dir, &["evaluate", "--test", "missing"])), 1);
    fs::write(dir.join("bad.toml"), "[tracking]\ntracker = \"siamese\"\n").unwrap();
    assert_eq!(code(&leadvel(dir, &["--config", "bad.toml", "track", "--scenes", "x"])), 1);
    assert_eq!(code(&leadvel(dir, &["--help"])), 0);
}

#[test]
fn data_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_scenario(dir);
    assert_eq!(code(&leadvel(dir, &["--config", "scenario.toml", "generate", "--out", "d"])), 0);
    let scene = dir.join("d/scene_000000");
    fs::write(scene.join("scene.json"), "{ not json").unwrap();
    let out = leadvel(dir, &["track", "--scenes", "d/scene_000000", "--out", "t"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("JSON"));
}
