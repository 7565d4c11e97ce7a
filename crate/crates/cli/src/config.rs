//! Run configuration: flags over config file over built-in defaults.

use std::path::{Path, PathBuf};

use keydyn::features::{Family, FeatureMatrix};
use keydyn::ingest::{Device, InputFormat, DEFAULT_MAX_FLIGHT_MS, DEFAULT_WINDOW_LEN};
use keydyn::learner::{ForestConfig, GbmConfig};
use keydyn::selection::{ImportanceReport, SelectionPolicy};
use keydyn::synth::Signal;
use keydyn::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::{EvaluateArgs, ExtractArgs, SelectArgs, SynthArgs};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_OUT: &str = "out";

/// Every key is optional; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub format: Option<String>,
    pub device: Option<String>,
    pub window_len: Option<usize>,
    pub max_flight_ms: Option<i64>,
    pub layout: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub selection: Option<PathBuf>,
    pub policy: Option<String>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub families: Option<String>,
    pub all_features: Option<bool>,
    pub rf_trees: Option<usize>,
    pub rf_depth: Option<usize>,
    pub gbm_trees: Option<usize>,
    pub gbm_depth: Option<usize>,
    pub learning_rate: Option<f64>,
    pub smote_k: Option<usize>,
    pub users: Option<usize>,
    pub windows: Option<usize>,
    pub signal: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn parse_device(s: Option<String>) -> Result<Option<Device>> {
    s.map(|s| s.parse::<Device>().map_err(|_| Error::Config(format!("unknown device `{s}`")))).transpose()
}

fn out_dir(flag: &Option<PathBuf>, file: &FileConfig) -> PathBuf {
    pick(flag.clone(), file.out.clone(), PathBuf::from(DEFAULT_OUT))
}

fn default_features(out: &Path, device: Option<Device>) -> PathBuf {
    out.join(format!("features_{}.csv", device.unwrap_or(Device::Desktop)))
}

#[derive(Debug, Serialize)]
pub struct ExtractRun {
    pub dataset: PathBuf,
    pub format: Option<InputFormat>,
    pub device: Option<Device>,
    pub window_len: usize,
    pub max_flight_ms: i64,
    pub layout: Option<PathBuf>,
    pub out: PathBuf,
}

impl ExtractRun {
    pub fn resolve(a: &ExtractArgs, f: &FileConfig) -> Result<Self> {
        let dataset =
            a.dataset.clone().or(f.dataset.clone()).ok_or_else(|| Error::Config("extract needs --dataset".into()))?;
        let format = a.format.clone().or(f.format.clone()).map(|s| s.parse::<InputFormat>()).transpose()?;
        Ok(Self {
            dataset,
            format,
            device: parse_device(a.device.clone().or(f.device.clone()))?,
            window_len: pick(a.window_len, f.window_len, DEFAULT_WINDOW_LEN),
            max_flight_ms: pick(a.max_flight_ms, f.max_flight_ms, DEFAULT_MAX_FLIGHT_MS),
            layout: a.layout.clone().or(f.layout.clone()),
            out: out_dir(&a.common.out, f),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct SelectConfig {
    pub features: PathBuf,
    pub policy: SelectionPolicy,
    pub rf_trees: usize,
    pub rf_depth: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl SelectConfig {
    pub fn resolve(a: &SelectArgs, f: &FileConfig) -> Result<Self> {
        let out = out_dir(&a.common.out, f);
        let device = parse_device(a.device.clone().or(f.device.clone()))?;
        let policy = match a.policy.clone().or(f.policy.clone()) {
            Some(p) => p.parse()?,
            None => SelectionPolicy::default(),
        };
        let rf = ForestConfig::default();
        Ok(Self {
            features: a.features.clone().or(f.features.clone()).unwrap_or_else(|| default_features(&out, device)),
            policy,
            rf_trees: pick(a.rf_trees, f.rf_trees, rf.n_trees),
            rf_depth: pick(a.rf_depth, f.rf_depth, rf.max_depth),
            seed: pick(a.common.seed, f.seed, DEFAULT_SEED),
            out,
        })
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    All,
    Families(Vec<Family>),
    Selection(PathBuf),
}

impl FeatureSet {
    /// Label for file names and reports, plus the feature names.
    pub fn resolve(&self, matrix: &FeatureMatrix, out: &Path, device: Device) -> Result<(String, Vec<String>)> {
        match self {
            FeatureSet::All => Ok(("all".into(), matrix.schema.names().to_vec())),
            FeatureSet::Families(fams) => {
                let label = fams.iter().map(Family::as_str).collect::<Vec<_>>().join("+");
                let names = matrix.schema.names_in(fams);
                if names.is_empty() {
                    return Err(Error::Config(format!("feature file has no {label} features")));
                }
                Ok((label, names))
            }
            FeatureSet::Selection(path) => {
                let path = if path.as_os_str().is_empty() {
                    out.join(format!("importance_{device}.json"))
                } else {
                    path.clone()
                };
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    Error::Config(format!(
                        "no selection at {} ({e}); run `select` first or pass --all-features or --families",
                        path.display()
                    ))
                })?;
                let report = ImportanceReport::from_json(&text)?;
                let names = report.selected();
                if names.is_empty() {
                    return Err(Error::Config(format!("{} selects no features", path.display())));
                }
                Ok(("selected".into(), names))
            }
        }
    }
}

pub fn parse_families(s: &str) -> Result<Vec<Family>> {
    let mut fams = Vec::new();
    for part in s.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
        let fam: Family = part.parse()?;
        if !fams.contains(&fam) {
            fams.push(fam);
        }
    }
    if fams.is_empty() {
        return Err(Error::Config(format!("no families in `{s}`")));
    }
    // Canonical order keeps labels stable however the flag was written.
    fams.sort_by_key(|f| Family::ALL.iter().position(|x| x == f));
    Ok(fams)
}

#[derive(Debug, Serialize)]
pub struct EvaluateConfig {
    pub features: PathBuf,
    pub feature_set: FeatureSet,
    pub folds: usize,
    pub gbm_trees: usize,
    pub gbm_depth: usize,
    pub learning_rate: f64,
    pub smote_k: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl EvaluateConfig {
    pub fn resolve(a: &EvaluateArgs, f: &FileConfig) -> Result<Self> {
        let out = out_dir(&a.common.out, f);
        let device = parse_device(a.device.clone().or(f.device.clone()))?;
        let all = a.all_features || f.all_features.unwrap_or(false);
        let families = a.families.clone().or(f.families.clone());
        let feature_set = match (all, families) {
            (true, Some(_)) => return Err(Error::Config("--all-features and --families are exclusive".into())),
            (true, None) => FeatureSet::All,
            (false, Some(s)) => FeatureSet::Families(parse_families(&s)?),
            (false, None) => FeatureSet::Selection(a.selection.clone().or(f.selection.clone()).unwrap_or_default()),
        };
        let gbm = GbmConfig::default();
        Ok(Self {
            features: a.features.clone().or(f.features.clone()).unwrap_or_else(|| default_features(&out, device)),
            feature_set,
            folds: pick(a.folds, f.folds, DEFAULT_FOLDS),
            gbm_trees: pick(a.gbm_trees, f.gbm_trees, gbm.n_trees),
            gbm_depth: pick(a.gbm_depth, f.gbm_depth, gbm.max_depth),
            learning_rate: pick(a.learning_rate, f.learning_rate, gbm.learning_rate),
            smote_k: pick(a.smote_k, f.smote_k, 5),
            seed: pick(a.common.seed, f.seed, DEFAULT_SEED),
            out,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct SynthConfig {
    pub users: usize,
    pub windows: usize,
    pub signal: Signal,
    pub seed: u64,
    pub out: PathBuf,
}

impl SynthConfig {
    pub fn resolve(a: &SynthArgs, f: &FileConfig) -> Result<Self> {
        let signal = match a.signal.clone().or(f.signal.clone()) {
            Some(s) => s.parse()?,
            None => Signal::Distinct,
        };
        Ok(Self {
            users: pick(a.users, f.users, 10),
            windows: pick(a.windows, f.windows, 40),
            signal,
            seed: pick(a.common.seed, f.seed, DEFAULT_SEED),
            out: pick(a.common.out.clone(), f.out.clone(), PathBuf::from("cohort.jsonl")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beats_default() {
        let file: FileConfig = serde_json::from_str(r#"{"folds": 3, "seed": 9, "gbm_trees": 7}"#).unwrap();
        let mut args = EvaluateArgs { all_features: true, ..Default::default() };
        args.common.seed = Some(11);
        let cfg = EvaluateConfig::resolve(&args, &file).unwrap();
        assert_eq!((cfg.folds, cfg.seed, cfg.gbm_trees), (3, 11, 7));
        assert_eq!(cfg.gbm_depth, 4);
        assert_eq!(cfg.features, PathBuf::from("out/features_desktop.csv"));
    }

    #[test]
    fn unknown_config_keys_rejected() {
        assert!(serde_json::from_str::<FileConfig>(r#"{"fold": 3}"#).is_err());
    }

    #[test]
    fn family_lists() {
        assert_eq!(parse_families("NC, TEMP").unwrap(), vec![Family::Temp, Family::Nc]);
        assert_eq!(parse_families("TEMP+NC+CKP").unwrap(), vec![Family::Temp, Family::Nc, Family::Ckp]);
        assert!(parse_families("").is_err());
        assert!(parse_families("TEMP,XYZ").is_err());
    }

    #[test]
    fn exclusive_feature_flags() {
        let args = EvaluateArgs { all_features: true, families: Some("TEMP".into()), ..Default::default() };
        assert!(matches!(EvaluateConfig::resolve(&args, &FileConfig::default()), Err(Error::Config(_))));
    }
}
