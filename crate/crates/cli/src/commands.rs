use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use dtpnet::forge::{load_split, make_dataset, read_segments, read_segments_csv, save_split, write_segments, DatasetParams, MixRecord, Segment};
use dtpnet::kernel::Tensor;
use dtpnet::metrics::{MetricReport, PsdParams};
use dtpnet::model::{flops_estimate, param_count, published_configs, DtpNet, DtpNetConfig, Variant};
use dtpnet::probe::{
    default_pad, encoder_filter_spectra, mean_filter_frequency, rlp, write_filter_spectra_csv, write_freq_trace_csv,
    write_rlp_csv, FreqTrace, FrequencyMode,
};
use dtpnet::trainer::{evaluate, evaluate_with, resume, train as run_training, Checkpoint, EpochRecord, TrainConfig, TrainError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, DIVERGED};
use crate::manifest::RunManifest;
use crate::{AblateArgs, Baseline, DenoiseArgs, EvalArgs, GenArgs, Globals, InspectCommand, TrainArgs};

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::from(e).context(path.display()))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(|e| CliError::from(e).context(path.display()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::from(e).context(dir.display()))
}

fn sibling_manifest(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    file.with_file_name(name)
}

fn load_records(data: &Path, split: &str) -> Result<Vec<MixRecord>, CliError> {
    load_split(data, split).map_err(|e| CliError::from(e).context(format!("{} split {split:?}", data.display())))
}

fn split_files(data: &Path, split: &str) -> Vec<PathBuf> {
    ["clean.eegs", "artifact.eegs", "contaminated.eegs", "mix.json"]
        .iter()
        .map(|f| data.join(format!("{split}_{f}")))
        .collect()
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::load(path).map_err(|e| CliError::from(e).context(path.display()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    model: DtpNetConfig,
    #[serde(default)]
    train: TrainConfig,
}

fn experiment(g: &Globals, path: &Path) -> Result<ExperimentConfig, CliError> {
    let mut cfg: ExperimentConfig = read_json(path)?;
    if let Some(s) = g.seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

pub fn gen(g: &Globals, a: &GenArgs) -> Result<(), CliError> {
    let mut params: DatasetParams = match &a.config {
        Some(p) => read_json(p)?,
        None => DatasetParams::default(),
    };
    if let Some(s) = g.seed {
        params.seed = s;
    }
    params.validate()?;
    let split = make_dataset(&params)?;
    create_dir(&a.out)?;
    let mut manifest = RunManifest::new("gen");
    if let Some(p) = &a.config {
        manifest.config(p)?;
    }
    manifest.seed("dataset", params.seed);
    for (name, records) in split.named() {
        save_split(&a.out, name, records)?;
        for f in split_files(&a.out, name) {
            manifest.output(&a.out, &f)?;
        }
        if !g.quiet {
            eprintln!("{name}: {} segments", records.len());
        }
    }
    let params_path = a.out.join("dataset.json");
    write_json(&params_path, &params)?;
    manifest.output(&a.out, &params_path)?;
    manifest.write(&a.out.join("manifest.json"))
}

fn write_history(path: &Path, history: &[EpochRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for r in history {
        w.write_record([r.epoch.to_string(), r.train_loss.to_string(), r.val_loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn train(g: &Globals, a: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = experiment(g, &a.config)?;
    if let Some(v) = &a.variant {
        let variant: Variant = v.parse()?;
        cfg.model = variant.apply(&cfg.model);
    }
    let train_set = load_records(&a.data, "train")?;
    let val_set = load_records(&a.data, "val")?;
    let fs = train_set.first().map_or(256.0, |r| r.clean.fs as f64);

    let start = match &a.resume {
        Some(p) => {
            let c = load_checkpoint(p)?;
            if c.model != cfg.model {
                return Err(CliError::usage(format!(
                    "{} was trained with a different model config",
                    p.display()
                )));
            }
            c
        }
        None => Checkpoint::initial(&DtpNet::build(cfg.model.clone(), cfg.train.seed)?, &cfg.train),
    };

    create_dir(&a.out)?;
    let mut trace = Vec::new();
    let quiet = g.quiet;
    let mut hook = |r: &EpochRecord, m: &DtpNet<f32>| {
        let hz = mean_filter_frequency(&m.encoder, fs, FrequencyMode::Peak).unwrap_or(f64::NAN);
        trace.push(FreqTrace {
            epoch: r.epoch,
            mean_peak_frequency_hz: hz,
            validation_loss: r.val_loss,
        });
        if !quiet {
            eprintln!(
                "epoch {:>4}  train {:.6}  val {:.6}  mean filter {:.2} Hz",
                r.epoch, r.train_loss, r.val_loss, hz
            );
        }
    };
    let result = resume(start, &train_set, &val_set, &cfg.train, &mut hook);

    let (checkpoint, failure) = match result {
        Ok(out) => {
            if !quiet {
                eprintln!("stopped: {:?} after {} epochs", out.stop, out.checkpoint.epoch);
            }
            (out.checkpoint, None)
        }
        Err(TrainError::Diverged {
            epoch,
            step,
            last_good,
        }) => (
            *last_good,
            Some(CliError::new(
                DIVERGED,
                format!("training diverged at epoch {epoch}, step {step}; last good state saved"),
            )),
        ),
        Err(e) => return Err(e.into()),
    };

    let mut manifest = RunManifest::new("train");
    manifest.config(&a.config)?;
    if let Some(p) = &a.resume {
        manifest.input(p)?;
    }
    for split in ["train", "val"] {
        for f in split_files(&a.data, split) {
            manifest.input(&f)?;
        }
    }
    manifest.seed("train", cfg.train.seed);
    let ckpt_path = a.out.join("checkpoint.dtpc");
    checkpoint.save(&ckpt_path).map_err(CliError::from)?;
    let history_path = a.out.join("history.csv");
    write_history(&history_path, &checkpoint.history)?;
    let trace_path = a.out.join("freq_trace.csv");
    write_freq_trace_csv(fs::File::create(&trace_path)?, &trace)?;
    for p in [&ckpt_path, &history_path, &trace_path] {
        manifest.output(&a.out, p)?;
    }
    manifest.write(&a.out.join("manifest.json"))?;
    failure.map_or(Ok(()), Err)
}

fn read_input(a: &DenoiseArgs) -> Result<Vec<Segment>, CliError> {
    let is_csv = a.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let segments = if is_csv {
        let fs = a.fs.ok_or_else(|| CliError::usage("--fs is required for CSV input"))?;
        read_segments_csv(&a.input, fs)
    } else {
        read_segments(&a.input)
    };
    segments.map_err(|e| CliError::io(e.to_string()).context(a.input.display()))
}

pub fn denoise(_g: &Globals, a: &DenoiseArgs) -> Result<(), CliError> {
    let model = load_checkpoint(&a.model)?.best_model()?;
    let input = read_input(a)?;
    let output = input
        .iter()
        .map(|s| {
            let y = model
                .denoise_any_length(&s.samples)
                .map_err(|e| CliError::io(e.to_string()))?;
            Segment::new(y, s.fs).map_err(|e| CliError::io(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_segments(&a.out, &output).map_err(|e| CliError::io(e.to_string()).context(a.out.display()))?;
    let mut manifest = RunManifest::new("denoise");
    manifest.input(&a.model)?;
    manifest.input(&a.input)?;
    let root = a.out.parent().unwrap_or(Path::new(""));
    manifest.output(root, &a.out)?;
    manifest.write(&sibling_manifest(&a.out))
}

pub fn eval(_g: &Globals, a: &EvalArgs) -> Result<(), CliError> {
    let records = load_records(&a.data, &a.split)?;
    let psd = PsdParams::default();
    let report: MetricReport = match (a.baseline, &a.model) {
        (Some(Baseline::Identity), _) => evaluate_with(&records, &psd, |r| Ok(r.contaminated.to_f64()))?,
        (Some(Baseline::Oracle), _) => evaluate_with(&records, &psd, |r| Ok(r.clean.to_f64()))?,
        (None, Some(path)) => evaluate(&load_checkpoint(path)?.best_model()?, &records, &psd)?,
        (None, None) => return Err(CliError::usage("either --model or --baseline is required")),
    };
    if let Some(dir) = a.report.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_json(&a.report, &report)?;
    let mut manifest = RunManifest::new("eval");
    if let Some(p) = &a.model {
        manifest.input(p)?;
    }
    for f in split_files(&a.data, &a.split) {
        manifest.input(&f)?;
    }
    let root = a.report.parent().unwrap_or(Path::new(""));
    manifest.output(root, &a.report)?;
    manifest.write(&sibling_manifest(&a.report))
}

#[derive(Debug, Clone, Serialize)]
struct AblationRow {
    variant: &'static str,
    seed: u64,
    params: u64,
    steps: u64,
    epochs: usize,
    delta_snr_db: f64,
    rrmse_t: f64,
    rrmse_s: f64,
    cc: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn ablate(g: &Globals, a: &AblateArgs) -> Result<(), CliError> {
    let cfg = experiment(g, &a.config)?;
    let seeds = if a.seeds.is_empty() { vec![cfg.train.seed] } else { a.seeds.clone() };
    let train_set = load_records(&a.data, "train")?;
    let val_set = load_records(&a.data, "val")?;
    let test_set = load_records(&a.data, "test")?;
    let psd = PsdParams::default();
    create_dir(&a.out)?;

    let mut rows = Vec::new();
    for variant in Variant::ALL {
        let model_cfg = variant.apply(&cfg.model);
        for &seed in &seeds {
            let tc = TrainConfig {
                seed,
                max_steps: a.steps.or(cfg.train.max_steps),
                ..cfg.train.clone()
            };
            let model = DtpNet::build(model_cfg.clone(), seed)?;
            let out = run_training(&model, &train_set, &val_set, &tc, &mut |_, _| {})?;
            let report = evaluate(&out.checkpoint.best_model()?, &test_set, &psd)?;
            let row = AblationRow {
                variant: variant.name(),
                seed,
                params: param_count(&model_cfg),
                steps: out.checkpoint.adam.t,
                epochs: out.checkpoint.epoch,
                delta_snr_db: report.overall.delta_snr_db,
                rrmse_t: report.overall.rrmse_t,
                rrmse_s: report.overall.rrmse_s,
                cc: report.overall.cc,
            };
            if !g.quiet {
                eprintln!(
                    "{:<10} seed {:<6} ΔSNR {:>7.3} dB  RRMSE_t {:.4}  CC {:.4}",
                    row.variant, seed, row.delta_snr_db, row.rrmse_t, row.cc
                );
            }
            rows.push(row);
        }
    }

    let csv_path = a.out.join("ablation.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let json_path = a.out.join("ablation.json");
    write_json(&json_path, &rows)?;

    let mut stdout = io::stdout().lock();
    writeln!(stdout, "{:<10} {:>10} {:>12} {:>10} {:>8}", "variant", "params", "median ΔSNR", "RRMSE_t", "CC")?;
    for variant in Variant::ALL {
        let of = |f: fn(&AblationRow) -> f64| median(rows.iter().filter(|r| r.variant == variant.name()).map(f).collect());
        writeln!(
            stdout,
            "{:<10} {:>10} {:>12.3} {:>10.4} {:>8.4}",
            variant.name(),
            param_count(&variant.apply(&cfg.model)),
            of(|r| r.delta_snr_db),
            of(|r| r.rrmse_t),
            of(|r| r.cc)
        )?;
    }

    let mut manifest = RunManifest::new("ablate");
    manifest.config(&a.config)?;
    for s in &seeds {
        manifest.seed(&format!("train_{s}"), *s);
    }
    for split in ["train", "val", "test"] {
        for f in split_files(&a.data, split) {
            manifest.input(&f)?;
        }
    }
    manifest.output(&a.out, &csv_path)?;
    manifest.output(&a.out, &json_path)?;
    manifest.write(&a.out.join("manifest.json"))
}

/// Writes to `out` when given, otherwise to stdout.
fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_dir(dir)?;
            }
            Box::new(fs::File::create(p).map_err(|e| CliError::from(e).context(p.display()))?)
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn model_config_from(path: &Path) -> Result<DtpNetConfig, CliError> {
    let value: serde_json::Value = read_json(path)?;
    let inner = value.get("model").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn millions(v: f64) -> String {
    format!("{:.1}M", v / 1e6)
}

pub fn inspect(_g: &Globals, c: &InspectCommand) -> Result<(), CliError> {
    match c {
        InspectCommand::Filters { model, fs, out } => {
            let m = load_checkpoint(model)?.best_model()?;
            let spectra = encoder_filter_spectra(&m.encoder, *fs, default_pad(m.config().filter_len))?;
            write_filter_spectra_csv(sink(out)?, &spectra)?;
        }
        InspectCommand::Rlp { model, data, split, out } => {
            let m = load_checkpoint(model)?.best_model()?;
            let records = load_records(data, split)?;
            let zs = records
                .iter()
                .map(|r| {
                    let mut x = r.contaminated.samples.clone();
                    x.resize(m.config().aligned_len(x.len()), 0.0);
                    m.encode(&Tensor::signal(&x))
                })
                .collect::<Result<Vec<_>, _>>()?;
            write_rlp_csv(sink(out)?, &rlp(&m, &zs)?)?;
        }
        InspectCommand::Params { model, config, len } => {
            let mut stdout = io::stdout().lock();
            let own = match (model, config) {
                (Some(p), _) => Some(load_checkpoint(p)?.model),
                (None, Some(p)) => Some(model_config_from(p)?),
                (None, None) => None,
            };
            match own {
                Some(cfg) => {
                    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
                    writeln!(stdout, "params {}", param_count(&cfg))?;
                    writeln!(stdout, "flops  {} (T = {len})", flops_estimate(&cfg, *len))?;
                }
                None => {
                    writeln!(
                        stdout,
                        "{:<24} {:>12} {:>9} {:>14} {:>9}",
                        "config", "params", "reported", "flops", "reported"
                    )?;
                    for p in published_configs() {
                        writeln!(
                            stdout,
                            "{:<24} {:>12} {:>9} {:>14} {:>9}",
                            p.name,
                            param_count(&p.config),
                            millions(p.reported_params),
                            flops_estimate(&p.config, p.segment_len),
                            millions(p.reported_flops)
                        )?;
                    }
                }
            }
        }
    }
    Ok(())
}
