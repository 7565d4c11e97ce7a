mod config;
mod dataset;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use keydyn::eval::{run_protocol, write_roc_csv, write_summary_csv, ProtocolConfig};
use keydyn::features::{FeatureConfig, FeatureMatrix};
use keydyn::ingest::Device;
use keydyn::keyboard::{default_qwerty, KeyboardLayout};
use keydyn::learner::{ForestConfig, GbmConfig};
use keydyn::pipeline::{extract, ExtractConfig};
use keydyn::selection::{rf_importance, split_70_30, ImportanceReport};
use keydyn::synth::{write_cohort, CohortSpec};
use keydyn::{seed, Error, Result};
use serde::Serialize;

use config::{EvaluateConfig, ExtractRun, FileConfig, SelectConfig, SynthConfig};

#[derive(Parser)]
#[command(name = "keydyn", version, about = "Keystroke-dynamics feature extraction, selection and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw key events and write one feature matrix per device.
    Extract(ExtractArgs),
    /// Rank features by random-forest importance and pick a subset.
    Select(SelectArgs),
    /// Cross-validate one-vs-rest authentication models.
    Evaluate(EvaluateArgs),
    /// Write a synthetic typist cohort as JSON lines.
    Synth(SynthArgs),
}

#[derive(Args, Clone, Default)]
pub struct Common {
    /// JSON file with default values; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (or file, for `synth`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed for every random stage.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Clone, Default)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub common: Common,
    /// Event file or directory of event files.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// bbmas | buffalo | jsonl; inferred from the file extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    /// Keep only this device.
    #[arg(long)]
    pub device: Option<String>,
    #[arg(long)]
    pub window_len: Option<usize>,
    #[arg(long)]
    pub max_flight_ms: Option<i64>,
    /// Keyboard layout JSON replacing the built-in QWERTY geometry.
    #[arg(long)]
    pub layout: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: Common,
    /// Feature CSV; defaults to `<out>/features_<device>.csv`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub device: Option<String>,
    /// `mass:<p>` or `top-k:<k>`.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub rf_trees: Option<usize>,
    #[arg(long)]
    pub rf_depth: Option<usize>,
}

#[derive(Args, Clone, Default)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Feature CSV; defaults to `<out>/features_<device>.csv`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub device: Option<String>,
    /// Importance report whose selected features are used; defaults to
    /// `<out>/importance_<device>.json`.
    #[arg(long)]
    pub selection: Option<PathBuf>,
    /// Use every feature instead of a selection.
    #[arg(long)]
    pub all_features: bool,
    /// Use whole families instead of a selection, e.g. `TEMP,NC`.
    #[arg(long)]
    pub families: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub gbm_trees: Option<usize>,
    #[arg(long)]
    pub gbm_depth: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub smote_k: Option<usize>,
}

#[derive(Args, Clone, Default)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub windows: Option<usize>,
    /// distinct | null
    #[arg(long)]
    pub signal: Option<String>,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    versions: Versions,
    config: &'a C,
    seeds: Vec<(String, u64)>,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct Versions {
    #[serde(rename = "keydyn-core")]
    core: &'static str,
    #[serde(rename = "keydyn-cli")]
    cli: &'static str,
}

fn write_manifest<C: Serialize>(
    path: &Path,
    command: &str,
    config: &C,
    seeds: Vec<(String, u64)>,
    outputs: &[PathBuf],
) -> Result<()> {
    let manifest = Manifest {
        command,
        versions: Versions { core: keydyn::VERSION, cli: env!("CARGO_PKG_VERSION") },
        config,
        seeds,
        outputs: outputs.iter().map(|p| file_name(p)).collect(),
    };
    write_json(path, &manifest)
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_layout(path: Option<&Path>) -> Result<KeyboardLayout> {
    match path {
        Some(p) => KeyboardLayout::from_json_file(p),
        None => Ok(default_qwerty()),
    }
}

fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    let file =
        File::open(path).map_err(|e| Error::Config(format!("cannot open feature file {}: {e}", path.display())))?;
    let matrix = FeatureMatrix::read_csv(std::io::BufReader::new(file))?;
    if matrix.is_empty() {
        return Err(Error::NoData(format!("{} has no rows", path.display())));
    }
    Ok(matrix)
}

fn matrix_device(matrix: &FeatureMatrix) -> Device {
    matrix.rows[0].device
}

fn cmd_extract(args: ExtractArgs) -> Result<()> {
    let cfg = ExtractRun::resolve(&args, &FileConfig::load(args.common.config.as_deref())?)?;
    let layout = load_layout(cfg.layout.as_deref())?;
    let events = dataset::load(&cfg.dataset, cfg.format)?;
    fs::create_dir_all(&cfg.out)?;

    let mut devices: Vec<Device> = events.iter().map(|e| e.device).collect();
    devices.sort();
    devices.dedup();
    if let Some(d) = cfg.device {
        devices.retain(|x| *x == d);
        if devices.is_empty() {
            return Err(Error::NoData(format!("no events for device `{d}` in {}", cfg.dataset.display())));
        }
    }
    if devices.is_empty() {
        return Err(Error::NoData(format!("no events in {}", cfg.dataset.display())));
    }

    let mut outputs = Vec::new();
    for device in devices {
        let extract_cfg = ExtractConfig {
            window_len: cfg.window_len,
            features: FeatureConfig { max_abs_flight_ms: cfg.max_flight_ms },
            device: Some(device),
        };
        let (matrix, summary) = extract(&events, &layout, &extract_cfg)?;
        let features = cfg.out.join(format!("features_{device}.csv"));
        let mut w = create(&features)?;
        matrix.write_csv(&mut w)?;
        w.flush()?;
        let summary_path = cfg.out.join(format!("ingest_summary_{device}.json"));
        write_json(&summary_path, &summary)?;
        println!(
            "{device}: {} users, {} windows, {} keystrokes ({} unmatched presses, {} orphan releases, {} of {} digraphs filtered)",
            summary.users.len(),
            summary.windows,
            summary.keystrokes,
            summary.dropped_downs,
            summary.orphan_ups,
            summary.filtered_digraphs,
            summary.digraphs,
        );
        outputs.push(features);
        outputs.push(summary_path);
    }
    write_manifest(&cfg.out.join("manifest_extract.json"), "extract", &cfg, Vec::new(), &outputs)
}

fn cmd_select(args: SelectArgs) -> Result<()> {
    let cfg = SelectConfig::resolve(&args, &FileConfig::load(args.common.config.as_deref())?)?;
    let matrix = read_matrix(&cfg.features)?;
    let device = matrix_device(&matrix);
    fs::create_dir_all(&cfg.out)?;

    let split_seed = seed::derive_label(cfg.seed, "split");
    let forest_seed = seed::derive_label(cfg.seed, "forest");
    let split = split_70_30(&matrix, split_seed);
    for w in &split.warnings {
        eprintln!("warning: {w}");
    }
    let forest = ForestConfig { n_trees: cfg.rf_trees, max_depth: cfg.rf_depth, seed: forest_seed, parallel: true };
    let mut report = rf_importance(&split.train, &forest)?;
    report.seed = cfg.seed;
    report.apply(cfg.policy)?;

    let path = cfg.out.join(format!("importance_{device}.json"));
    fs::write(&path, report.to_json()? + "\n")?;
    print_family_table(device, &report);
    write_manifest(
        &cfg.out.join(format!("manifest_select_{device}.json")),
        "select",
        &cfg,
        vec![("master".into(), cfg.seed), ("split".into(), split_seed), ("forest".into(), forest_seed)],
        &[path],
    )
}

fn print_family_table(device: Device, report: &ImportanceReport) {
    println!(
        "{device}: {} features selected ({})",
        report.selected().len(),
        report.policy.map(|p| p.to_string()).unwrap_or_default()
    );
    for family in ["DEFT", "CKP", "TEMP", "NC"] {
        println!("  {family:<5} {:>3}", report.family_counts.get(family).copied().unwrap_or(0));
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let cfg = EvaluateConfig::resolve(&args, &FileConfig::load(args.common.config.as_deref())?)?;
    let matrix = read_matrix(&cfg.features)?;
    let device = matrix_device(&matrix);
    let (label, names) = cfg.feature_set.resolve(&matrix, &cfg.out, device)?;
    fs::create_dir_all(&cfg.out)?;

    let protocol = ProtocolConfig {
        folds: cfg.folds,
        gbm: GbmConfig {
            n_trees: cfg.gbm_trees,
            max_depth: cfg.gbm_depth,
            learning_rate: cfg.learning_rate,
            parallel: false,
            ..GbmConfig::default()
        },
        smote_k: cfg.smote_k,
        seed: cfg.seed,
        label: label.clone(),
        ..ProtocolConfig::default()
    };
    let report = run_protocol(&matrix, &names, &protocol)?;
    for s in &report.skipped {
        eprintln!("warning: skipped {}: {}", s.user, s.reason);
    }

    let stem = format!("{device}_{}", label.replace('+', "-"));
    let report_path = cfg.out.join(format!("report_{stem}.json"));
    write_json(&report_path, &report)?;
    let summary_path = cfg.out.join(format!("summary_{stem}.csv"));
    let mut w = create(&summary_path)?;
    write_summary_csv(&mut w, std::slice::from_ref(&report))?;
    w.flush()?;
    let roc_path = cfg.out.join(format!("roc_{stem}.csv"));
    let mut w = create(&roc_path)?;
    write_roc_csv(&mut w, &report)?;
    w.flush()?;

    let a = &report.aggregate;
    println!(
        "{device} {label}: {} users, {} features  AUC {:.4}  EER {:.2}%  accuracy {:.2}%  F1 {:.2}%",
        report.users.len(),
        names.len(),
        a.auc.mean,
        100.0 * a.eer.mean,
        100.0 * a.accuracy.mean,
        100.0 * a.f1.mean,
    );
    write_manifest(
        &cfg.out.join(format!("manifest_evaluate_{stem}.json")),
        "evaluate",
        &cfg,
        vec![("master".into(), cfg.seed)],
        &[report_path, summary_path, roc_path],
    )
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig::resolve(&args, &FileConfig::load(args.common.config.as_deref())?)?;
    let spec = CohortSpec { n_users: cfg.users, windows_per_user: cfg.windows, seed: cfg.seed, signal: cfg.signal };
    if let Some(dir) = cfg.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = create(&cfg.out)?;
    write_cohort(&spec, &mut w)?;
    w.flush()?;
    println!("wrote {} users x {} keystrokes to {}", spec.n_users, spec.keystrokes_per_user(), cfg.out.display());
    let manifest = cfg.out.with_file_name(format!("{}.manifest.json", file_name(&cfg.out)));
    write_manifest(&manifest, "synth", &cfg, vec![("master".into(), cfg.seed)], std::slice::from_ref(&cfg.out))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Format(_) | Error::Layout(_) => 2,
        Error::NoData(_) => 3,
        Error::Parse { .. } | Error::Schema(_) | Error::Csv(_) | Error::Json(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Extract(a) => cmd_extract(a),
        Command::Select(a) => cmd_select(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
