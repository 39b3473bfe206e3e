use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hicrit(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hicrit"));
    cmd.args(args).env_remove("HICRIT_OUT_DIR");
    if let Some(dir) = out_env {
        cmd.env("HICRIT_OUT_DIR", dir);
    }
    cmd.output().expect("spawn hicrit")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn lists_all_kinds() {
    let out = hicrit(&["list-scenarios"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for kind in ["identities", "critical_search", "expansion_sweep", "scaling_fits", "torus_example"] {
        assert!(text.contains(kind), "{text}");
    }
}

#[test]
fn defaults_run_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    for kind in ["identities", "critical_search", "expansion_sweep", "torus_example"] {
        let out = hicrit(&["print-defaults", kind], None);
        assert!(out.status.success());
        let config = write(tmp.path(), &format!("{kind}.toml"), &String::from_utf8(out.stdout).unwrap());
        let run = hicrit(&["run", &config], Some(tmp.path()));
        assert!(run.status.success(), "{kind}: {}", String::from_utf8_lossy(&run.stdout));
        assert!(tmp.path().join(format!("{kind}.report.json")).exists());
    }
}

#[test]
fn unknown_kind_is_an_error() {
    assert_eq!(hicrit(&["print-defaults", "nope"], None).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let config = write(tmp.path(), "bad.toml", "kind = \"nope\"\n");
    let out = hicrit(&["run", &config], Some(tmp.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown variant"));
}

#[test]
fn empty_grid_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write(tmp.path(), "empty.toml", "kind = \"expansion_sweep\"\nepsilon_grid = []\n");
    let out = hicrit(&["run", &config], Some(tmp.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon_grid"));
}

#[test]
fn failing_check_sets_exit_status() {
    let tmp = tempfile::tempdir().unwrap();
    // expected point off the ellipse
    let config = write(
        tmp.path(),
        "miss.toml",
        r#"kind = "critical_search"
name = "miss"

[search]
seeds = [[1.0, 1.0]]
random_seeds = 0

[[search.expected]]
point = [0.0, 5.0]
stability = "max"
"#,
    );
    let out = hicrit(&["run", &config], Some(tmp.path()));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL search.expected0"));
    let report = fs::read_to_string(tmp.path().join("miss.report.json")).unwrap();
    assert!(report.contains("\"pass\": false"));
}

#[test]
fn symbolic_coefficient_fails_without_aborting() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write(
        tmp.path(),
        "symbolic.toml",
        "kind = \"expansion_sweep\"\nname = \"symbolic\"\n[sweep.coefficients]\nc1 = 1.0\n",
    );
    let out = hicrit(&["run", &config], Some(tmp.path()));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("symbolic"));
}

#[test]
fn reports_are_byte_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let text = String::from_utf8(hicrit(&["print-defaults", "torus_example"], None).stdout).unwrap();
    let config = write(tmp.path(), "t.toml", &text);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(hicrit(&["run", &config, "--out", a.to_str().unwrap()], None).status.success());
    assert!(hicrit(&["run", &config], Some(&b)).status.success());
    for file in ["torus_example.report.json", "torus_example.signs.csv", "torus_example.cross_sections.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn timing_is_opt_in() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write(tmp.path(), "t.toml", "kind = \"torus_example\"\nrecord_timing = true\n");
    assert!(hicrit(&["run", &config], Some(tmp.path())).status.success());
    let report = fs::read_to_string(tmp.path().join("torus_example.report.json")).unwrap();
    assert!(report.contains("wall_time_s"));
}

#[test]
fn shipped_configs_pass() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = tempfile::tempdir().unwrap();
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let out = hicrit(&["run", path.to_str().unwrap()], Some(tmp.path()));
            assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stdout));
            count += 1;
        }
    }
    assert_eq!(count, 5);
}
