//! End-to-end checks of the `srploc` binary: simulate -> locate -> eval,
//! plus the error-reporting contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_srploc"))
}

fn workspace_file(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("srploc_cli_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn count_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().skip(1).filter(|l| !l.is_empty()).count()
}

#[test]
fn simulate_locate_eval_round_trip() {
    let geometry = workspace_file("geometries/robot_head_like_12ch.toml");
    let wav = scratch("scene.wav");
    let truth = scratch("truth.csv");
    let est = scratch("est.csv");

    run_ok(bin()
        .args(["simulate", "--geometry"])
        .arg(&geometry)
        .args(["--az", "40", "--el", "10", "--duration", "1.5", "--seed", "3"])
        .arg("--out")
        .arg(&wav)
        .arg("--truth")
        .arg(&truth));
    assert_eq!(count_rows(&truth), 16); // 0.0 .. 1.5 s at 100 ms

    let locate_out = run_ok(bin()
        .args(["locate", "--geometry"])
        .arg(&geometry)
        .arg("--input")
        .arg(&wav)
        .arg("--out")
        .arg(&est));
    let stderr = String::from_utf8_lossy(&locate_out.stderr);
    assert!(
        stderr.contains("using 66 of 66 microphone pairs"),
        "pair count missing from log: {stderr}"
    );
    // 1.5 s at 16 kHz: floor((24000 - 8192) / 4096) + 1 = 4 blocks.
    assert_eq!(count_rows(&est), 4);

    let eval_out = run_ok(bin()
        .args(["eval", "--est"])
        .arg(&est)
        .arg("--ref")
        .arg(&truth)
        .args(["--thresholds", "10,20"]));
    let table = String::from_utf8_lossy(&eval_out.stdout);
    assert!(table.contains("no thresh."), "table: {table}");
    assert!(table.lines().count() == 4, "table: {table}");

    let json_out = run_ok(bin()
        .args(["eval", "--est"])
        .arg(&est)
        .arg("--ref")
        .arg(&truth)
        .args(["--thresholds", "10,20", "--json"]));
    let text = String::from_utf8_lossy(&json_out.stdout);
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    let rows = parsed["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[1]["success_pct"].as_f64().unwrap() >= 99.9);
}

#[test]
fn locate_honours_query_timestamps() {
    let geometry = workspace_file("geometries/robot_head_like_12ch.toml");
    let wav = scratch("stamped.wav");
    let truth = scratch("stamped_truth.csv");
    let est = scratch("stamped_est.csv");
    let stamps = scratch("stamps.csv");
    std::fs::write(&stamps, "time_s\n0.1\n0.4\n0.7\n1.0\n1.3\n").unwrap();

    run_ok(bin()
        .args(["simulate", "--geometry"])
        .arg(&geometry)
        .args(["--az", "100", "--el", "-20", "--duration", "1.5", "--seed", "8"])
        .arg("--out")
        .arg(&wav)
        .arg("--truth")
        .arg(&truth));
    run_ok(bin()
        .args(["locate", "--geometry"])
        .arg(&geometry)
        .arg("--input")
        .arg(&wav)
        .arg("--out")
        .arg(&est)
        .args(["--grid-res", "5"])
        .arg("--timestamps")
        .arg(&stamps));
    let body = std::fs::read_to_string(&est).unwrap();
    let times: Vec<&str> =
        body.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(times, vec!["0.100000", "0.400000", "0.700000", "1.000000", "1.300000"]);
}

#[test]
fn spherical_preset_reports_240_pairs() {
    let geometry = workspace_file("geometries/eigenmike_like_32ch.toml");
    let wav = scratch("sphere.wav");
    let truth = scratch("sphere_truth.csv");
    let est = scratch("sphere_est.csv");
    run_ok(bin()
        .args(["simulate", "--geometry"])
        .arg(&geometry)
        .args(["--az", "220", "--el", "30", "--duration", "0.6", "--seed", "9"])
        .arg("--out")
        .arg(&wav)
        .arg("--truth")
        .arg(&truth));
    let out = run_ok(bin()
        .args(["locate", "--geometry"])
        .arg(&geometry)
        .arg("--input")
        .arg(&wav)
        .arg("--out")
        .arg(&est)
        .args(["--min-pair-angle", "90", "--grid-res", "10"]));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("using 240 of 496 microphone pairs"),
        "pair count missing from log: {stderr}"
    );
    // One 512 ms block fits in 0.6 s; the coarse-grid estimate lands on the
    // nearest grid point.
    let body = std::fs::read_to_string(&est).unwrap();
    let row: Vec<&str> = body.lines().nth(1).unwrap().split(',').collect();
    let az: f64 = row[1].parse().unwrap();
    let el: f64 = row[2].parse().unwrap();
    assert!((az - 220.0).abs() <= 10.0, "azimuth {az}");
    assert!((el - 30.0).abs() <= 10.0, "elevation {el}");
}

#[test]
fn simulate_follows_a_trajectory_file() {
    let geometry = workspace_file("geometries/robot_head_like_12ch.toml");
    let traj = scratch("traj.csv");
    std::fs::write(
        &traj,
        "time_s,azimuth_deg,elevation_deg\n0.0,10.0,0.0\n1.0,80.0,0.0\n",
    )
    .unwrap();
    let wav = scratch("traj_scene.wav");
    let truth = scratch("traj_truth.csv");
    run_ok(bin()
        .args(["simulate", "--geometry"])
        .arg(&geometry)
        .arg("--traj")
        .arg(&traj)
        .args(["--duration", "1.0", "--seed", "2"])
        .arg("--out")
        .arg(&wav)
        .arg("--truth")
        .arg(&truth));
    let body = std::fs::read_to_string(&truth).unwrap();
    assert_eq!(body.lines().count(), 12); // header + 0.0..1.0 s at 100 ms
    let mid: Vec<&str> = body.lines().nth(6).unwrap().split(',').collect();
    let az: f64 = mid[1].parse().unwrap();
    assert!((az - 45.0).abs() < 1.0, "mid-sweep azimuth {az}");
}

#[test]
fn channel_mismatch_prints_one_error_line() {
    let head = workspace_file("geometries/robot_head_like_12ch.toml");
    let two = scratch("two_mics.toml");
    std::fs::write(
        &two,
        "name = \"pair\"\n[[mics]]\npos = [0.0, 0.0, 0.0]\n[[mics]]\npos = [0.1, 0.0, 0.0]\n",
    )
    .unwrap();
    let wav = scratch("two_ch.wav");
    let truth = scratch("two_ch_truth.csv");
    run_ok(bin()
        .args(["simulate", "--geometry"])
        .arg(&two)
        .args(["--az", "0", "--el", "0", "--duration", "0.6", "--seed", "1"])
        .arg("--out")
        .arg(&wav)
        .arg("--truth")
        .arg(&truth));

    let out = bin()
        .args(["locate", "--geometry"])
        .arg(&head)
        .arg("--input")
        .arg(&wav)
        .arg("--out")
        .arg(scratch("unused.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let error_lines: Vec<&str> =
        stderr.lines().filter(|l| l.starts_with("error: ")).collect();
    assert_eq!(error_lines.len(), 1, "stderr: {stderr}");
    assert!(error_lines[0].contains("2 channels"), "line: {}", error_lines[0]);
    assert!(error_lines[0].contains("12 microphones"), "line: {}", error_lines[0]);
}

#[test]
fn high_rate_input_is_decimated_and_localized() {
    let geometry = workspace_file("geometries/robot_head_like_12ch.toml");
    let wav = scratch("fs48k.wav");
    let truth = scratch("fs48k_truth.csv");
    let est = scratch("fs48k_est.csv");
    run_ok(bin()
        .args(["simulate", "--geometry"])
        .arg(&geometry)
        .args(["--az", "300", "--el", "-35", "--duration", "1.0", "--fs", "48000", "--seed", "4"])
        .arg("--out")
        .arg(&wav)
        .arg("--truth")
        .arg(&truth));
    run_ok(bin()
        .args(["locate", "--geometry"])
        .arg(&geometry)
        .arg("--input")
        .arg(&wav)
        .arg("--out")
        .arg(&est)
        .args(["--grid-res", "2"]));
    let body = std::fs::read_to_string(&est).unwrap();
    let row: Vec<&str> = body.lines().nth(1).unwrap().split(',').collect();
    let az: f64 = row[1].parse().unwrap();
    let el: f64 = row[2].parse().unwrap();
    assert!((az - 300.0).abs() <= 4.0, "azimuth {az}");
    assert!((el + 35.0).abs() <= 4.0, "elevation {el}");
}

#[test]
fn unsupported_rate_names_both_rates() {
    let two = scratch("rate_geom.toml");
    std::fs::write(
        &two,
        "name = \"pair\"\n[[mics]]\npos = [0.0, 0.0, 0.0]\n[[mics]]\npos = [0.1, 0.0, 0.0]\n",
    )
    .unwrap();
    let wav = scratch("odd_rate.wav");
    let truth = scratch("odd_rate_truth.csv");
    run_ok(bin()
        .args(["simulate", "--geometry"])
        .arg(&two)
        .args(["--az", "0", "--el", "0", "--duration", "0.6", "--fs", "44100", "--seed", "1"])
        .arg("--out")
        .arg(&wav)
        .arg("--truth")
        .arg(&truth));
    let out = bin()
        .args(["locate", "--geometry"])
        .arg(&two)
        .arg("--input")
        .arg(&wav)
        .arg("--out")
        .arg(scratch("unused2.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("44100") && stderr.contains("16000"), "stderr: {stderr}");
}

#[test]
fn snr_requires_seed() {
    let geometry = workspace_file("geometries/robot_head_like_12ch.toml");
    let out = bin()
        .args(["simulate", "--geometry"])
        .arg(&geometry)
        .args(["--az", "0", "--el", "0", "--duration", "0.5", "--snr", "10"])
        .arg("--out")
        .arg(scratch("nope.wav"))
        .arg("--truth")
        .arg(scratch("nope.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}
