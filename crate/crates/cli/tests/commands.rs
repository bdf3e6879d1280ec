use std::path::{Path, PathBuf};
use std::process::Command;

use volquad::scenes::SceneSpec;
use volquad_cli::commands::{self, Options};
use volquad_cli::defaults;

fn scenes_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

fn small(out: &Path) -> Options {
    Options { out: out.to_path_buf(), instances: Some(4), samples: Some(2000), offsets: 8, ..Options::default() }
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn shipped_scenes_match_builtin_defaults() {
    for (file, scene) in [
        ("gaussian_bump.toml", defaults::gaussian_bump()),
        ("logistic_wall.toml", defaults::logistic_wall()),
        ("steep_sampler.toml", defaults::steep_sampler_fixture()),
        ("thin_uniform.toml", defaults::thin_uniform_fixture()),
        ("grazing_wall.toml", defaults::grazing_wall()),
    ] {
        let loaded = commands::load_scene(&scenes_dir().join(file)).unwrap();
        assert_eq!(loaded.to_spec(), scene.to_spec(), "{file}");
    }
    let multi = commands::load_scene(&scenes_dir().join("multi_distance.toml")).unwrap();
    assert!(multi.rig.is_some());
}

#[test]
fn scene_files_round_trip() {
    let spec = defaults::grazing_wall().to_spec();
    assert_eq!(SceneSpec::from_toml(&spec.to_toml().unwrap()).unwrap(), spec);
}

#[test]
fn every_command_writes_headed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = small(dir.path());
    for command in commands::COMMANDS {
        opts.n_coarse = match command {
            "convergence" => Some(64),
            "render" => Some(16),
            _ => None,
        };
        opts.n_fine = 8;
        let outcome = commands::run(command, &opts).unwrap();
        assert!(!outcome.checks.is_empty(), "{command}");
        let main = read(dir.path(), &format!("{command}.csv"));
        let header = main.lines().next().unwrap();
        assert!(header.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == ','), "{command}: {header}");
        let summary = read(dir.path(), &format!("{command}_summary.csv"));
        assert!(summary.starts_with("check,value,requirement,pass\n"));
        assert_eq!(summary.lines().count(), outcome.checks.len() + 1);
    }
    for image in ["render_oracle.pgm", "render_constant.pgm", "render_linear.pgm", "render_diff_linear.pgm"] {
        let text = read(dir.path(), image);
        assert!(text.starts_with("P2\n8 24\n255\n"), "{image}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for command in ["shift-sensitivity", "sampler-test", "grad-check", "depth"] {
        commands::run(command, &small(a.path())).unwrap();
        commands::run(command, &small(b.path())).unwrap();
        for name in [format!("{command}.csv"), format!("{command}_summary.csv")] {
            assert_eq!(read(a.path(), &name), read(b.path(), &name), "{name}");
        }
    }
}

#[test]
fn zero_offset_row_is_the_unshifted_render() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = commands::run("shift-sensitivity", &small(dir.path())).unwrap();
    let check = outcome.checks.iter().find(|c| c.name == "zero_offset_matches_unshifted").unwrap();
    assert!(check.pass);
}

#[test]
fn invalid_options_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = small(dir.path());
    opts.offsets = 0;
    assert!(commands::run("depth", &opts).is_err());
    let mut opts = small(dir.path());
    opts.scene = Some(dir.path().join("missing.toml"));
    assert!(commands::run("depth", &opts).is_err());
    assert!(commands::run("nonsense", &small(dir.path())).is_err());
    // a scene without a rig cannot be rendered
    let mut opts = small(dir.path());
    opts.scene = Some(scenes_dir().join("logistic_wall.toml"));
    assert!(commands::run("render", &opts).is_err());
}

fn volquad(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_volquad")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

#[test]
fn exit_code_reflects_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout) = volquad(&["quadratic-probe", "--out", out]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("ok")));

    let (code, stdout) = volquad(&["depth", "--out", out, "--offsets", "8"]);
    assert_eq!(code, 0, "{stdout}");

    // Only the selected model's slope is checked.
    let scene = scenes_dir().join("gaussian_bump.toml");
    let (code, _) = volquad(&["convergence", "--scene", scene.to_str().unwrap(), "--models", "constant", "--out", out]);
    assert_eq!(code, 0);

    // Exit status agrees with the printed verdicts.
    let (code, stdout) = volquad(&["shift-sensitivity", "--out", out]);
    let any_fail = stdout.lines().any(|l| l.starts_with("FAIL"));
    assert_eq!(code == 1, any_fail, "{stdout}");

    let (code, _) = volquad(&["depth", "--out", out, "--scene", "/nonexistent/scene.toml"]);
    assert_eq!(code, 2);
}
