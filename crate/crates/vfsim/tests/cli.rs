use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn vfsim(args: &[&str]) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_vfsim"))
        .args(args)
        .output()
        .expect("binary runs")
        .status;
    status.code().expect("exit code")
}

fn status(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("status.json")).unwrap()).unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_string_lossy().into_owned()
}

#[test]
fn odd_grid_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let code = vfsim(&["reduced", "--M", "1025", "--out", &out_arg(d.path())]);
    assert_eq!(code, 2);
    let s = status(d.path());
    assert_eq!(s["status"], "ConfigError");
    assert_eq!(s["path"], "grid.M");
}

#[test]
fn supersonic_wave_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let code = vfsim(&["traveling-wave", "--omega", "1", "--c2", "2.1", "--out", &out_arg(d.path())]);
    assert_eq!(code, 2);
    let s = status(d.path());
    assert_eq!(s["path"], "wave.c2");
    assert!(s["reason"].as_str().unwrap().contains("regime"));
}

#[test]
fn config_file_with_unknown_key_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.json");
    std::fs::write(&cfg, r#"{"scenario": "square", "grid": {"L": 32, "M": 256, "Z": 1}}"#).unwrap();
    let out = d.path().join("out");
    let code = vfsim(&["square", "--config", cfg.to_str().unwrap(), "--out", &out_arg(&out)]);
    assert_eq!(code, 2);
    assert_eq!(status(&out)["path"], "grid.Z");
}

#[test]
fn mismatched_scenario_tag_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.json");
    std::fs::write(&cfg, r#"{"scenario": "helix"}"#).unwrap();
    let code = vfsim(&["square", "--config", cfg.to_str().unwrap(), "--out", &out_arg(d.path())]);
    assert_eq!(code, 2);
}

#[test]
fn stability_preset_reports_unstable_octagon() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(vfsim(&["stability", "--out", &out_arg(d.path())]), 0);
    let s = status(d.path());
    assert_eq!(s["metrics"]["verdict"], "unstable");
    assert_eq!(s["acceptance"], serde_json::json!([2]));
    let csv = std::fs::read_to_string(d.path().join("stability.csv")).unwrap();
    assert!(csv.starts_with("N,verdict,max_real_part,dense_max_real_part\n8,unstable,"));
}

#[test]
fn stability_range_flags() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(vfsim(&["stability", "--N", "3", "--N-max", "10", "--out", &out_arg(d.path())]), 0);
    let s = status(d.path());
    for n in 3..=10 {
        let want = if n <= 7 { "stable" } else { "unstable" };
        assert_eq!(s["metrics"]["verdicts"][n.to_string()]["verdict"], want, "N = {n}");
    }
}

#[test]
fn collision_preset_exits_with_collision_code() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(vfsim(&["collision", "--out", &out_arg(d.path())]), 3);
    let s = status(d.path());
    assert_eq!(s["status"], "CollisionDetected");
    let t = s["hitting_times"]["collision"].as_f64().unwrap();
    assert!((t - 1.0).abs() <= 0.01, "{t}");
    assert!(d.path().join("energies.csv").exists());
}

#[test]
fn point_vortex_trajectory_csv() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(vfsim(&["point-vortex", "--T", "1", "--out", &out_arg(d.path())]), 0);
    let csv = std::fs::read_to_string(d.path().join("trajectory.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "t,re_X0,im_X0,re_X1,im_X1,re_X2,im_X2,re_X3,im_X3,center_re,center_im,ang_mom,log_sum,quad_sum"
    );
    // T = 1, dt = 1e-3, every 100 steps plus the initial row
    assert_eq!(csv.lines().count(), 1 + 11);
}

#[test]
fn wave_profile_to_named_file() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("profile.csv");
    let code = vfsim(&[
        "traveling-wave", "--omega", "1", "--c2", "1.9", "--L", "128", "--M", "2048", "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(&path).unwrap();
    assert!(csv.starts_with("sigma,eta,theta,re_v,im_v\n"));
    assert_eq!(csv.lines().count(), 2049);
    let s = status(d.path());
    assert!(s["metrics"]["residual_tw"].as_f64().unwrap() < 1e-6);
}

#[test]
fn wave_sweep_csv() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("sweep.csv");
    let code = vfsim(&[
        "traveling-wave", "--sweep", "c2=1.99:1.90:4", "--L", "256", "--M", "4096", "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(&path).unwrap();
    assert!(csv.starts_with("c2,sigma1,energy,phase_jump,residual\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn helix_needs_a_grid_wavenumber() {
    let d = tempfile::tempdir().unwrap();
    let code = vfsim(&["helix", "--nu", "0.1234", "--out", &out_arg(d.path())]);
    assert_eq!(code, 2);
    assert_eq!(status(d.path())["path"], "helix.nu");
}

#[test]
fn reduced_runs_are_byte_identical_and_manifest_is_complete() {
    let d = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = d.path().join(name);
        let code = vfsim(&[
            "reduced", "--L", "32", "--M", "256", "--T", "0.2", "--dump-fields", "--raw", "--out", &out_arg(&out),
        ]);
        assert_eq!(code, 0);
        out
    };
    let (a, b) = (run("a"), run("b"));
    let s = status(&a);
    let files = s["files"].as_array().unwrap();
    assert!(files.len() > 2);
    for f in files {
        let name = f["name"].as_str().unwrap();
        let bytes = std::fs::read(a.join(name)).unwrap();
        assert!(!bytes.is_empty(), "{name}");
        assert_eq!(bytes.len() as u64, f["bytes"].as_u64().unwrap());
        assert_eq!(bytes, std::fs::read(b.join(name)).unwrap(), "{name} differs between runs");
    }
    assert!(a.join("fields_t0.0000.csv").exists());
    assert!(a.join("fields_t0.2000.bin").exists());
}

#[test]
fn square_seed_changes_output_and_threads_do_not() {
    let d = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let out = d.path().join(name);
        let mut args = vec!["square", "--L", "32", "--M", "256", "--T", "0.05", "--out"];
        let o = out_arg(&out);
        args.push(&o);
        args.extend_from_slice(extra);
        assert_eq!(vfsim(&args), 0);
        std::fs::read(out.join("energies.csv")).unwrap()
    };
    let a = run("a", &[]);
    let b = run("b", &["--threads", "2"]);
    let c = run("c", &["--seed", "5"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}
