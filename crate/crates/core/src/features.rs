//! Per-window feature extraction.
//!
//! Four families are computed from each sample window:
//!
//! * `TEMP`: hold-time mean and spread, mean of each of the four flight
//!   latencies, and mean trigraph latency.
//! * `NC`: typing speed, backspace rate, negative-flight fractions and
//!   modifier usage.
//! * `CKP`: the four flight latencies of six common ordered key pairs.
//! * `DEFT`: the four flight latencies averaged per key-pair distance
//!   bucket (0..=3) and per hand (`LL`/`RR`). Cross-hand pairs are ignored.
//!
//! Aggregates over an empty set are `None` (missing) and are filled later by
//! [`impute`] using training-set means.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{digraphs, Device, DigraphRecord, SampleWindow, DEFAULT_MAX_FLIGHT_MS};
use crate::keyboard::{HandClass, KeyboardLayout};
use crate::matrix::Matrix;

pub const COMMON_KEY_PAIRS: [(&str, &str); 6] =
    [("T", "H"), ("I", "S"), ("H", "E"), ("A", "P"), ("L", "E"), ("C", "O")];
pub const DEFT_MAX_DISTANCE: u32 = 3;

const TEMP_NAMES: [&str; 7] = ["Hold_mean", "Hold_std", "F1_mean", "F2_mean", "F3_mean", "F4_mean", "Trigraph_mean"];
const NC_NAMES: [&str; 6] = ["WPM", "ErrorRate", "NegUD", "NegUU", "ShiftUsage", "CapsLockUsage"];
const CHARS_PER_WORD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "TEMP")]
    Temp,
    #[serde(rename = "NC")]
    Nc,
    #[serde(rename = "CKP")]
    Ckp,
    #[serde(rename = "DEFT")]
    Deft,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Temp, Family::Nc, Family::Ckp, Family::Deft];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Temp => "TEMP",
            Family::Nc => "NC",
            Family::Ckp => "CKP",
            Family::Deft => "DEFT",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TEMP" => Ok(Family::Temp),
            "NC" => Ok(Family::Nc),
            "CKP" => Ok(Family::Ckp),
            "DEFT" => Ok(Family::Deft),
            other => Err(Error::Config(format!("unknown feature family `{other}`"))),
        }
    }
}

pub fn ckp_names() -> Vec<String> {
    let mut names = Vec::with_capacity(24);
    for (a, b) in COMMON_KEY_PAIRS {
        for i in 1..=4 {
            names.push(format!("F{i}_{a}{b}"));
        }
    }
    names
}

/// `F{flight}_distance_{d}_{LL|RR}`, flight outermost and side innermost.
pub fn deft_names() -> Vec<String> {
    let mut names = Vec::with_capacity(32);
    for i in 1..=4 {
        for d in 0..=DEFT_MAX_DISTANCE {
            for side in ["LL", "RR"] {
                names.push(format!("F{i}_distance_{d}_{side}"));
            }
        }
    }
    names
}

/// Ordered feature names with their families.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    names: Vec<String>,
    families: Vec<Family>,
}

impl FeatureSchema {
    /// All 69 features, ordered TEMP, NC, CKP, DEFT.
    pub fn full() -> Self {
        let mut names = Vec::new();
        let mut families = Vec::new();
        let groups: [(Family, Vec<String>); 4] = [
            (Family::Temp, TEMP_NAMES.iter().map(|s| s.to_string()).collect()),
            (Family::Nc, NC_NAMES.iter().map(|s| s.to_string()).collect()),
            (Family::Ckp, ckp_names()),
            (Family::Deft, deft_names()),
        ];
        for (family, group) in groups {
            families.extend(std::iter::repeat_n(family, group.len()));
            names.extend(group);
        }
        Self { names, families }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn family_of(&self, name: &str) -> Option<Family> {
        self.index_of(name).map(|i| self.families[i])
    }

    /// Sub-schema in the order given, validating every name.
    pub fn subset<S: AsRef<str>>(&self, names: &[S]) -> Result<(Self, Vec<usize>)> {
        let mut idx = Vec::with_capacity(names.len());
        for n in names {
            let n = n.as_ref();
            let i = self.index_of(n).ok_or_else(|| Error::Schema(format!("unknown feature `{n}`")))?;
            if idx.contains(&i) {
                return Err(Error::Schema(format!("feature `{n}` listed twice")));
            }
            idx.push(i);
        }
        let schema = Self {
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            families: idx.iter().map(|&i| self.families[i]).collect(),
        };
        Ok((schema, idx))
    }

    /// Names of every feature in the given families, in schema order.
    pub fn names_in(&self, families: &[Family]) -> Vec<String> {
        self.names.iter().zip(&self.families).filter(|(_, f)| families.contains(f)).map(|(n, _)| n.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub user: String,
    pub device: Device,
    pub window: usize,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Digraphs with any flight beyond this bound are dropped; trigraphs use
    /// twice the bound.
    pub max_abs_flight_ms: i64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { max_abs_flight_ms: DEFAULT_MAX_FLIGHT_MS }
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn population_std(values: &[f64]) -> Option<f64> {
    let m = mean(values.iter().copied())?;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
    Some(var.sqrt())
}

pub fn temp_features(window: &SampleWindow, records: &[DigraphRecord], max_abs_flight_ms: i64) -> Vec<Option<f64>> {
    let holds: Vec<f64> = window.keystrokes.iter().map(|k| k.hold() as f64).collect();
    let mut out = vec![mean(holds.iter().copied()), population_std(&holds)];
    for i in 0..4 {
        out.push(mean(records.iter().map(|r| r.flights()[i] as f64)));
    }
    let trigraph_bound = 2 * max_abs_flight_ms;
    let trigraph = mean(
        window
            .keystrokes
            .windows(3)
            .map(|w| w[2].down_ts - w[0].down_ts)
            .filter(|t| t.abs() <= trigraph_bound)
            .map(|t| t as f64),
    );
    out.push(trigraph);
    out
}

pub fn nc_features(window: &SampleWindow, records: &[DigraphRecord]) -> Vec<Option<f64>> {
    let strokes = &window.keystrokes;
    let n = strokes.len() as f64;
    let wpm = match (strokes.first(), strokes.iter().map(|k| k.up_ts).max()) {
        (Some(first), Some(last_up)) if last_up > first.down_ts => {
            let minutes = (last_up - first.down_ts) as f64 / 60_000.0;
            Some(n / CHARS_PER_WORD / minutes)
        }
        _ => None,
    };
    let rate = |key: &str| (n > 0.0).then(|| strokes.iter().filter(|k| k.key == key).count() as f64 / n);
    let fraction = |pred: fn(&DigraphRecord) -> bool| {
        (!records.is_empty()).then(|| records.iter().filter(|r| pred(r)).count() as f64 / records.len() as f64)
    };
    vec![wpm, rate("BACKSPACE"), fraction(|r| r.f1 < 0), fraction(|r| r.f2 < 0), rate("SHIFT"), rate("CAPSLOCK")]
}

pub fn ckp_features(records: &[DigraphRecord]) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(24);
    for (a, b) in COMMON_KEY_PAIRS {
        let hits: Vec<&DigraphRecord> = records.iter().filter(|r| r.k1 == a && r.k2 == b).collect();
        for i in 0..4 {
            out.push(mean(hits.iter().map(|r| r.flights()[i] as f64)));
        }
    }
    out
}

pub fn deft_features(records: &[DigraphRecord], layout: &KeyboardLayout) -> Vec<Option<f64>> {
    const BUCKETS: usize = (DEFT_MAX_DISTANCE as usize + 1) * 2;
    let mut sums = [[0.0f64; BUCKETS]; 4];
    let mut counts = [0usize; BUCKETS];
    for r in records {
        let Ok(class) = layout.hand_class(&r.k1, &r.k2) else { continue };
        let side = match class {
            HandClass::LL => 0,
            HandClass::RR => 1,
            HandClass::LR => continue,
        };
        let Ok(d) = layout.key_distance(&r.k1, &r.k2) else { continue };
        if d > DEFT_MAX_DISTANCE {
            continue;
        }
        let bucket = d as usize * 2 + side;
        counts[bucket] += 1;
        for (i, f) in r.flights().iter().enumerate() {
            sums[i][bucket] += *f as f64;
        }
    }
    let mut out = Vec::with_capacity(4 * BUCKETS);
    for flight in &sums {
        for (sum, &count) in flight.iter().zip(&counts) {
            out.push((count > 0).then(|| sum / count as f64));
        }
    }
    out
}

/// All 69 features of one window, in [`FeatureSchema::full`] order.
pub fn extract_window(window: &SampleWindow, layout: &KeyboardLayout, cfg: &FeatureConfig) -> FeatureVector {
    let records = digraphs(window, cfg.max_abs_flight_ms);
    let mut values = temp_features(window, &records, cfg.max_abs_flight_ms);
    values.extend(nc_features(window, &records));
    values.extend(ckp_features(&records));
    values.extend(deft_features(&records, layout));
    FeatureVector { user: window.user.clone(), device: window.device, window: window.index, values }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub schema: FeatureSchema,
    pub rows: Vec<FeatureVector>,
    /// Per-feature means used to fill missing values, once imputed.
    pub imputation: Option<Vec<f64>>,
}

pub fn build_matrix(windows: &[SampleWindow], layout: &KeyboardLayout, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    if let Some(first) = windows.first() {
        if let Some(w) = windows.iter().find(|w| w.device != first.device) {
            return Err(Error::Config(format!("windows mix devices `{}` and `{}`", first.device, w.device)));
        }
    }
    let rows = windows.par_iter().map(|w| extract_window(w, layout, cfg)).collect();
    Ok(FeatureMatrix { schema: FeatureSchema::full(), rows, imputation: None })
}

/// Fill missing values with per-feature means.
///
/// With `means = None` the matrix is treated as training data: means are
/// computed from its present values (0 for all-missing columns). Otherwise
/// the given means are applied verbatim.
pub fn impute(matrix: &FeatureMatrix, means: Option<&[f64]>) -> Result<(FeatureMatrix, Vec<f64>)> {
    let d = matrix.schema.len();
    let means: Vec<f64> = match means {
        Some(m) if m.len() != d => {
            return Err(Error::Schema(format!("{} imputation means for {d} features", m.len())));
        }
        Some(m) => m.to_vec(),
        None => (0..d).map(|j| mean(matrix.rows.iter().filter_map(|r| r.values[j])).unwrap_or(0.0)).collect(),
    };
    let rows = matrix
        .rows
        .iter()
        .map(|r| FeatureVector {
            values: r.values.iter().zip(&means).map(|(v, m)| Some(v.unwrap_or(*m))).collect(),
            ..r.clone()
        })
        .collect();
    Ok((FeatureMatrix { schema: matrix.schema.clone(), rows, imputation: Some(means.clone()) }, means))
}

const META_COLUMNS: [&str; 3] = ["user", "device", "window"];

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.user.as_str()).collect()
    }

    /// Sorted distinct user identifiers.
    pub fn users(&self) -> Vec<String> {
        let mut users: Vec<String> = self.rows.iter().map(|r| r.user.clone()).collect();
        users.sort();
        users.dedup();
        users
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            imputation: self.imputation.clone(),
        }
    }

    /// Keep only the named features, in the order given.
    pub fn select_features<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let (schema, idx) = self.schema.subset(names)?;
        let rows = self
            .rows
            .iter()
            .map(|r| FeatureVector { values: idx.iter().map(|&i| r.values[i]).collect(), ..r.clone() })
            .collect();
        let imputation = self.imputation.as_ref().map(|m| idx.iter().map(|&i| m[i]).collect());
        Ok(Self { schema, rows, imputation })
    }

    /// Rows sorted by (user, device, window).
    pub fn sorted(&self) -> Self {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| (&a.user, a.device, a.window).cmp(&(&b.user, b.device, b.window)));
        Self { schema: self.schema.clone(), rows, imputation: self.imputation.clone() }
    }

    /// Dense values; fails if anything is still missing.
    pub fn to_dense(&self) -> Result<Matrix> {
        let d = self.schema.len();
        let mut data = Vec::with_capacity(self.rows.len() * d);
        for r in &self.rows {
            for (j, v) in r.values.iter().enumerate() {
                data.push(v.ok_or_else(|| {
                    Error::Schema(format!(
                        "feature `{}` missing for user {} window {}; impute first",
                        self.schema.names[j], r.user, r.window
                    ))
                })?);
            }
        }
        Matrix::new(data, self.rows.len(), d)
    }

    /// CSV with one column per feature followed by `user,device,window`.
    /// Missing values are empty fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<&str> = self.schema.names.iter().map(String::as_str).chain(META_COLUMNS).collect();
        w.write_record(&header)?;
        for r in &self.rows {
            let mut record: Vec<String> =
                r.values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()).collect();
            record.push(r.user.clone());
            record.push(r.device.to_string());
            record.push(r.window.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let header = reader.headers()?.clone();
        let mut meta = HashMap::new();
        let mut feature_cols = Vec::new();
        for (i, h) in header.iter().enumerate() {
            if META_COLUMNS.contains(&h) {
                meta.insert(h.to_string(), i);
            } else {
                feature_cols.push((i, h.to_string()));
            }
        }
        let col = |name: &str| meta.get(name).copied().ok_or_else(|| Error::Schema(format!("missing `{name}` column")));
        let (user_col, device_col, window_col) = (col("user")?, col("device")?, col("window")?);
        let names: Vec<&str> = feature_cols.iter().map(|(_, n)| n.as_str()).collect();
        let (schema, _) = FeatureSchema::full().subset(&names)?;

        let mut rows = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2;
            let record = record?;
            let bad = |what: &str| Error::Parse { line, message: what.to_string() };
            let values = feature_cols
                .iter()
                .map(|(i, name)| match record.get(*i).unwrap_or("") {
                    "" => Ok(None),
                    s => s.parse::<f64>().map(Some).map_err(|_| bad(&format!("invalid value `{s}` for `{name}`"))),
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(FeatureVector {
                user: record.get(user_col).unwrap_or("").to_string(),
                device: record.get(device_col).unwrap_or("").parse()?,
                window: record.get(window_col).unwrap_or("").parse().map_err(|_| bad("invalid window index"))?,
                values,
            });
        }
        Ok(Self { schema, rows, imputation: None })
    }
}
