use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dtpnet::forge::{read_segments, write_segments, Segment};
use dtpnet::model::{DtpNet, DtpNetConfig};
use dtpnet::trainer::{Checkpoint, TrainConfig};
use tempfile::TempDir;

fn dtpnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtpnet"))
        .args(args)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dtpnet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    dtpnet(args).status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const TINY_DATA: &str = r#"{"count": 20, "segment_len": 128, "fs": 128.0, "seed": 4}"#;
const TOY_RUN: &str = r#"{
  "model": {"N": 8, "L": 8, "H": 8, "P": 3, "M": 2, "R": 1, "B": 4},
  "train": {"batch_size": 4, "max_epochs": 3, "learning_rate": 0.001, "seed": 1}
}"#;

fn tiny_dataset(dir: &TempDir) -> PathBuf {
    let cfg = write(dir.path(), "data.json", TINY_DATA);
    let data = dir.path().join("data");
    ok(&["gen", "--config", s(&cfg), "--out", s(&data)]);
    data
}

#[test]
fn gen_default_split_sizes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("d");
    ok(&["gen", "--out", s(&out)]);
    for (split, n) in [("train", 80), ("val", 10), ("test", 10)] {
        for part in ["clean", "artifact", "contaminated"] {
            let segs = read_segments(out.join(format!("{split}_{part}.eegs"))).unwrap();
            assert_eq!(segs.len(), n, "{split}_{part}");
        }
    }
    assert!(out.join("manifest.json").exists());
}

#[test]
fn gen_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "data.json", TINY_DATA);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["gen", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["gen", "--config", s(&cfg), "--out", s(&b)]);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 14);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
    let c = dir.path().join("c");
    ok(&["gen", "--config", s(&cfg), "--out", s(&c), "--seed", "5"]);
    assert_ne!(
        fs::read(a.join("train_clean.eegs")).unwrap(),
        fs::read(c.join("train_clean.eegs")).unwrap()
    );
}

#[test]
fn gen_usage_and_config_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&["gen"]), 2);
    let bad = write(dir.path(), "bad.json", r#"{"count": 5}"#);
    assert_eq!(code(&["gen", "--config", s(&bad), "--out", s(&dir.path().join("o"))]), 2);
    let unknown = write(dir.path(), "unknown.json", r#"{"segments": 5}"#);
    assert_eq!(code(&["gen", "--config", s(&unknown), "--out", s(&dir.path().join("o"))]), 2);
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&["gen", "--config", s(&missing), "--out", s(&dir.path().join("o"))]), 3);
}

#[test]
fn train_writes_history_and_resumes_exactly() {
    let dir = TempDir::new().unwrap();
    let data = tiny_dataset(&dir);
    let run = write(dir.path(), "run.json", TOY_RUN);
    let full = dir.path().join("full");
    ok(&["train", "--config", s(&run), "--data", s(&data), "--out", s(&full), "--variant", "basenet"]);
    let history = fs::read_to_string(full.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 3);
    let trace = fs::read_to_string(full.join("freq_trace.csv")).unwrap();
    assert!(trace.starts_with("epoch,mean_peak_hz,val_loss\n"));
    assert_eq!(trace.lines().count(), 1 + 3);
    let ckpt = Checkpoint::load(full.join("checkpoint.dtpc")).unwrap();
    assert_eq!(ckpt.model.connectivity, dtpnet::model::Connectivity::None);

    let short_run = write(dir.path(), "short.json", &TOY_RUN.replace("\"max_epochs\": 3", "\"max_epochs\": 1"));
    let half = dir.path().join("half");
    ok(&["train", "--config", s(&short_run), "--data", s(&data), "--out", s(&half), "--variant", "basenet"]);
    let rest = dir.path().join("rest");
    let resume_from = half.join("checkpoint.dtpc");
    ok(&[
        "train", "--config", s(&run), "--data", s(&data), "--out", s(&rest), "--variant", "basenet", "--resume",
        s(&resume_from),
    ]);
    assert_eq!(
        fs::read(full.join("checkpoint.dtpc")).unwrap(),
        fs::read(rest.join("checkpoint.dtpc")).unwrap()
    );
    assert_eq!(fs::read(full.join("history.csv")).unwrap(), fs::read(rest.join("history.csv")).unwrap());
}

#[test]
fn divergence_exits_4_with_checkpoint() {
    let dir = TempDir::new().unwrap();
    let data = tiny_dataset(&dir);
    let run = write(dir.path(), "run.json", &TOY_RUN.replace("0.001", "1e36"));
    let out = dir.path().join("o");
    assert_eq!(code(&["train", "--config", s(&run), "--data", s(&data), "--out", s(&out)]), 4);
    let ckpt = Checkpoint::load(out.join("checkpoint.dtpc")).unwrap();
    assert!(ckpt.weights.iter().all(|w| w.all_finite()));
}

fn checkpoint_with(dir: &Path, cfg: DtpNetConfig) -> PathBuf {
    let model = DtpNet::<f32>::build(cfg, 3).unwrap();
    let p = dir.join("model.dtpc");
    Checkpoint::initial(&model, &TrainConfig::default()).save(&p).unwrap();
    p
}

#[test]
fn denoise_zero_file_and_odd_lengths() {
    let dir = TempDir::new().unwrap();
    let model = checkpoint_with(dir.path(), DtpNetConfig::new(8, 32, 8, 3, 2, 1).with_growth(4));
    let zeros = dir.path().join("zeros.eegs");
    write_segments(&zeros, &vec![Segment::new(vec![0.0; 1000], 256.0).unwrap(); 3]).unwrap();
    let out = dir.path().join("out/denoised.eegs");
    ok(&["denoise", "--model", s(&model), "--in", s(&zeros), "--out", s(&out)]);
    let back = read_segments(&out).unwrap();
    assert_eq!(back.len(), 3);
    assert!(back.iter().all(|s| s.len() == 1000 && s.samples.iter().all(|&v| v == 0.0)));
    assert!(dir.path().join("out/denoised.eegs.manifest.json").exists());

    let csv = write(dir.path(), "x.csv", &format!("{}\n", vec!["0.5"; 77].join(",")));
    let out_csv = dir.path().join("csv.eegs");
    ok(&["denoise", "--model", s(&model), "--in", s(&csv), "--out", s(&out_csv), "--fs", "128"]);
    assert_eq!(read_segments(&out_csv).unwrap()[0].len(), 77);

    let garbage = write(dir.path(), "garbage.eegs", "not a segment file");
    assert_eq!(code(&["denoise", "--model", s(&model), "--in", s(&garbage), "--out", s(&out)]), 3);
    assert_eq!(code(&["denoise", "--model", s(&garbage), "--in", s(&zeros), "--out", s(&out)]), 3);
}

#[test]
fn eval_baselines_hit_fixed_points() {
    let dir = TempDir::new().unwrap();
    let data = tiny_dataset(&dir);
    let oracle = dir.path().join("oracle.json");
    ok(&["eval", "--baseline", "oracle", "--data", s(&data), "--report", s(&oracle), "--split", "train"]);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&oracle).unwrap()).unwrap();
    assert_eq!(r["rrmse_t"], 0.0);
    assert_eq!(r["cc"], 1.0);
    assert!(r["snr_after_db"].is_null(), "infinite SNR is written as null");

    let identity = dir.path().join("identity.json");
    ok(&["eval", "--baseline", "identity", "--data", s(&data), "--report", s(&identity), "--split", "train"]);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&identity).unwrap()).unwrap();
    let groups = r["per_snr"].as_array().unwrap();
    assert!(!groups.is_empty());
    assert!(groups.iter().all(|g| g["delta_snr_db"] == 0.0));
    let levels: Vec<i64> = groups.iter().map(|g| g["snr_db"].as_i64().unwrap()).collect();
    let mut present: Vec<i64> = serde_json::from_str::<serde_json::Value>(
        &fs::read_to_string(data.join("train_mix.json")).unwrap(),
    )
    .unwrap()["snr_db"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap().round() as i64)
        .collect();
    present.sort();
    present.dedup();
    assert_eq!(levels, present);

    assert_eq!(code(&["eval", "--data", s(&data), "--report", s(&identity)]), 2);
}

#[test]
fn inspect_outputs() {
    let dir = TempDir::new().unwrap();
    let table = String::from_utf8(ok(&["inspect", "params"]).stdout).unwrap();
    let emg = table.lines().find(|l| l.contains("EMG") && !l.contains("EOG")).unwrap();
    assert!(emg.contains("45.6M"), "{emg}");
    assert_eq!(table.lines().count(), 5);

    let cfg = DtpNetConfig::new(8, 8, 8, 3, 3, 2).with_growth(4);
    let model = checkpoint_with(dir.path(), cfg);
    let filters = String::from_utf8(ok(&["inspect", "filters", "--model", s(&model)]).stdout).unwrap();
    assert_eq!(filters.lines().count(), 1 + 8);

    let data = tiny_dataset(&dir);
    let rlp_out = dir.path().join("probe/rlp.csv");
    ok(&["inspect", "rlp", "--model", s(&model), "--data", s(&data), "--out", s(&rlp_out)]);
    assert_eq!(fs::read_to_string(&rlp_out).unwrap().lines().count(), 1 + 6);

    let params = String::from_utf8(ok(&["inspect", "params", "--model", s(&model)]).stdout).unwrap();
    assert!(params.starts_with("params "));
    assert_eq!(code(&["inspect", "filters", "--model", s(&dir.path().join("missing"))]), 3);
}

#[test]
fn ablate_emits_a_row_per_variant() {
    let dir = TempDir::new().unwrap();
    let data = tiny_dataset(&dir);
    let run = write(dir.path(), "run.json", TOY_RUN);
    let out = dir.path().join("ab");
    let table = ok(&[
        "ablate", "--config", s(&run), "--data", s(&data), "--out", s(&out), "--steps", "4", "--seeds", "1,2",
    ]);
    let table = String::from_utf8(table.stdout).unwrap();
    for v in ["basenet", "tpb", "dense", "tpb_dense", "tpb_res"] {
        assert!(table.lines().any(|l| l.starts_with(&format!("{v} "))), "{v} missing from\n{table}");
    }
    let csv = fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 2);
}
