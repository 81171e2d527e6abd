use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn a3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_a3d"))
        .args(args)
        .env_remove("A3D_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = a3d(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    a3d(args).status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = "epochs = 1\nbatch_size = 8\n\n[data]\nkind = \"synth\"\nsamples_per_class = 1\nval_per_class = 1\n\n[calibration]\nbatches = 2\nbatch_size = 8\npasses = 1\n";

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, TINY).unwrap();
    p
}

#[test]
fn cost_reports_the_reference_network() {
    let line = ok(&["cost", "--arch", "slow8x8_r50", "--config", "1,1,1"]);
    let gflops: f64 = line.split(": ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
    assert!((gflops - 54.5).abs() / 54.5 < 0.10, "{line}");
    assert!(line.contains("32.5M params"), "{line}");
}

#[test]
fn cost_grid_has_96_rows() {
    let csv = ok(&["cost", "--arch", "slow8x8_r50", "--grid", "--range", "0.016"]);
    let rows = csv.lines().filter(|l| !l.starts_with('#') && !l.starts_with("gamma_w")).count();
    assert_eq!(rows, 96);
}

#[test]
fn validation_errors_exit_2() {
    assert_eq!(code(&["cost", "--config", "0,0,0"]), 2);
    assert_eq!(code(&["cost", "--arch", "resnet9000"]), 2);
    assert_eq!(code(&["cost", "--range", "0.5", "--grid"]), 2);
    assert_eq!(code(&["cost", "--no-such-flag"]), 2);
    assert_eq!(code(&["eval", "--checkpoint", "/nonexistent/ckpt.a3d"]), 4);
}

#[test]
fn manifest_replays_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.csv");
    ok(&["cost", "--grid", "--training-cost", "--samples", "2000", "--seed", "5", "--out", s(&out)]);
    let manifest = dir.path().join("grid.csv.manifest.json");
    let m = json(&manifest);
    assert_eq!(m["command"], "cost");
    assert_eq!(m["seed"], 5);
    let first = std::fs::read(&out).unwrap();
    let ratio = m["extra"]["training_cost"]["ratio"].as_f64().unwrap();
    std::fs::remove_file(&out).unwrap();
    ok(&["replay", s(&manifest)]);
    assert_eq!(std::fs::read(&out).unwrap(), first);
    assert_eq!(json(&manifest)["extra"]["training_cost"]["ratio"].as_f64().unwrap(), ratio);
}

#[test]
fn seed_environment_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_a3d"))
        .args(["cost", "--seed", "1", "--out", s(&out)])
        .env("A3D_SEED", "42")
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(json(&dir.path().join("c.csv.manifest.json"))["seed"], 42);
}

fn write_tradeoff(path: &Path, rows: &[(f64, f64, f64, f64, f64)]) {
    let mut text = String::from("gamma_w,gamma_s,gamma_t,frames,pixels,gflops,params,top1,top5\n");
    for &(w, s, t, g, top1) in rows {
        text += &format!("{w},{s},{t},{},{},{g},1000,{top1},\n", (8.0 * t) as usize, (32.0 * s) as usize);
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn plot_colours_segments_by_changed_factor() {
    let dir = tempfile::tempdir().unwrap();
    let single = dir.path().join("one.csv");
    write_tradeoff(&single, &[(1.0, 1.0, 1.0, 8.0, 70.0)]);
    let pair = dir.path().join("pair.csv");
    write_tradeoff(&pair, &[(1.0, 1.0, 1.0, 8.0, 70.0), (1.0, 1.0, 0.5, 4.0, 60.0)]);
    let svg = dir.path().join("p.svg");
    ok(&["plot", "--tradeoff", s(&single), s(&pair), "--out", s(&svg)]);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("class=\"segment temporal\"").count(), 1);
    assert_eq!(text.matches("class=\"segment").count(), 1);
    let m = json(&dir.path().join("p.svg.manifest.json"));
    assert_eq!(m["extra"]["curves"][0]["segments"].as_array().unwrap().len(), 0);
    assert_eq!(m["extra"]["curves"][1]["segments"][0], "temporal");

    let multi = dir.path().join("multi.csv");
    write_tradeoff(&multi, &[(1.0, 1.0, 1.0, 8.0, 70.0), (0.5, 1.0, 0.5, 1.0, 50.0)]);
    ok(&["plot", "--tradeoff", s(&multi), "--out", s(&svg)]);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("class=\"segment multiple\""));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "gamma_w,gflops\n1,x\n").unwrap();
    assert_eq!(code(&["plot", "--tradeoff", s(&bad), "--out", s(&svg)]), 2);
    assert_eq!(code(&["plot", "--tradeoff", s(&pair), "--out", s(&dir.path().join("p.png"))]), 2);
}

#[test]
fn train_modes_record_sampled_configurations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let ind = dir.path().join("ind");
    ok(&["train", "--config-file", s(&cfg), "--mode", "independent", "--out", s(&ind)]);
    std::fs::write(&cfg, format!("mode = \"independent\"\nconfig = \"0.5,0.57,0.5\"\n{TINY}")).unwrap();
    ok(&["train", "--config-file", s(&cfg), "--out", s(&ind)]);
    let h = &json(&ind.join("manifest.json"))["extra"]["sampled_configs"];
    assert_eq!(h["gamma_s"].as_object().unwrap().keys().collect::<Vec<_>>(), vec!["0.57"]);
    assert_eq!(h["gamma_t"].as_object().unwrap().keys().collect::<Vec<_>>(), vec!["0.5"]);
    assert_eq!(h["gamma_w"].as_object().unwrap().keys().collect::<Vec<_>>(), vec!["[0.5,0.6)"]);

    let nt = dir.path().join("nt");
    ok(&["train", "--config-file", s(&cfg), "--mode", "a3d_no_temporal", "--out", s(&nt)]);
    let m = json(&nt.join("manifest.json"));
    assert_eq!(m["config"]["mode"], "a3d_no_temporal");
    let t = m["extra"]["sampled_configs"]["gamma_t"].as_object().unwrap();
    assert_eq!(t.keys().collect::<Vec<_>>(), vec!["1"]);
    assert!(t["1"].as_u64().unwrap() >= 3);
    assert!(std::fs::read_to_string(nt.join("metrics.csv")).unwrap().starts_with("epoch,lr,ce,kl_mean,train_acc_full\n"));

    ok(&["train", "--out", s(&nt), "--resume", "--epochs", "2"]);
    let m = json(&nt.join("manifest.json"));
    assert_eq!((m["extra"]["epochs_run"].as_u64(), m["extra"]["epochs_total"].as_u64()), (Some(1), Some(2)));
    assert_eq!(code(&["train", "--out", s(&dir.path().join("none")), "--resume"]), 2);
}

#[test]
fn deployment_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let cfg = tiny_config(dir.path());
    ok(&["train", "--config-file", s(&cfg), "--out", s(&p("run"))]);
    let ckpt = p("run").join("checkpoint.a3d");

    let uncal = a3d(&["table", "--checkpoint", s(&ckpt), "--range", "full", "--out", s(&p("t0"))]);
    assert_eq!(uncal.status.code(), Some(2));
    let err = String::from_utf8_lossy(&uncal.stderr);
    assert!(err.contains("w1.0000_s1.0000_t1.0000") && err.contains("a3d calibrate"), "{err}");

    let cal = p("cal.a3d");
    ok(&["calibrate", "--checkpoint", s(&ckpt), "--range", "full", "--config", "0.5,0.57,0.5", "--out", s(&cal)]);
    ok(&["calibrate", "--checkpoint", s(&cal), "--range", "full", "--out", s(&cal)]);
    let m = json(&p("cal.a3d.manifest.json"));
    assert_eq!(m["extra"]["configs"].as_array().unwrap().len(), 1);
    let sub = ["eval", "--checkpoint", s(&cal), "--config", "0.5,0.57,0.5"];
    assert!(ok(&sub).contains("calibrated statistics"));
    assert!(ok(&[&sub[..], &["--uncalibrated"]].concat()).contains("full-prefix statistics"));
    assert_eq!(code(&["eval", "--checkpoint", s(&cal), "--config", "0.7,1,1"]), 2);

    ok(&["table", "--checkpoint", s(&cal), "--range", "full", "--out", s(&p("tab"))]);
    let table = json(&p("tab").join("budget_table.json"));
    assert_eq!(table["arch"], "toy_slow");
    assert_eq!(table["views"], serde_json::json!([1, 1]));
    let entry = &table["entries"][0];
    for key in ["gamma_w", "gamma_s", "gamma_t", "frames", "pixels", "gflops", "params", "top1"] {
        assert!(entry.get(key).is_some(), "missing {key}");
    }
    assert!(std::fs::read_to_string(p("tab").join("tradeoff_grid.csv")).unwrap().starts_with("S^2xT,1\n32^2x8,"));

    ok(&["synth", "--config-file", s(&cfg), "--format", "folder", "--out", s(&p("clips"))]);
    let class_dir = p("clips").join("val").join("05_square_back");
    let clip = std::fs::read_dir(&class_dir).unwrap().next().unwrap().unwrap().path();
    let table_path = p("tab").join("budget_table.json");
    let out = p("infer.json");
    ok(&["infer", "--checkpoint", s(&cal), "--table", s(&table_path), "--budget", "1e12", "--clip", s(&clip), "--out", s(&out)]);
    let r = json(&out);
    assert_eq!(r["config"], serde_json::json!({ "gamma_w": 1.0, "gamma_s": 1.0, "gamma_t": 1.0 }));
    assert!(r["class"].as_u64().unwrap() < 16);
    assert_eq!(
        code(&["infer", "--checkpoint", s(&cal), "--table", s(&table_path), "--budget", "1e-9", "--clip", s(&clip)]),
        3
    );

    ok(&["cam", "--checkpoint", s(&cal), "--planted", "3", "--label", "5", "--out", s(&p("cam"))]);
    let cam = json(&p("cam").join("cam.json"));
    assert_eq!(cam["temporal_profile"].as_array().unwrap().len(), 8);
    assert!(p("cam").join("frame_07.png").exists());
    assert!(p("cam").join("manifest.json").exists());
    assert_eq!(code(&["cam", "--checkpoint", s(&cal), "--planted", "9", "--out", s(&p("cam2"))]), 2);
    assert_eq!(code(&["cam", "--checkpoint", s(&cal), "--config", "0.5,0.57,0.5", "--clip", s(&clip), "--out", s(&p("cam3"))]), 0);
}
