//! Keystroke log ingestion.
//!
//! Raw press/release events are parsed from one of three formats, matched
//! into keystrokes with a per-key FIFO queue (so rollover typing pairs
//! correctly), cut into fixed-length windows and turned into digraph timing
//! records.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_LEN: usize = 100;
pub const DEFAULT_MAX_FLIGHT_MS: i64 = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Desktop,
    Mobile,
    Tablet,
    #[default]
    Unknown,
}

impl Device {
    pub fn as_str(&self) -> &'static str {
        match self {
            Device::Desktop => "desktop",
            Device::Mobile => "mobile",
            Device::Tablet => "tablet",
            Device::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Device {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "desktop" | "pc" | "computer" => Ok(Device::Desktop),
            "mobile" | "phone" => Ok(Device::Mobile),
            "tablet" => Ok(Device::Tablet),
            "unknown" | "" => Ok(Device::Unknown),
            other => Err(Error::Config(format!("unknown device `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Down,
    Up,
}

impl EventKind {
    fn parse_token(token: &str) -> Option<Self> {
        match token.trim().to_ascii_lowercase().as_str() {
            "0" | "down" | "keydown" | "press" | "pressed" => Some(EventKind::Down),
            "1" | "up" | "keyup" | "release" | "released" => Some(EventKind::Up),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEvent {
    pub user: String,
    #[serde(default)]
    pub device: Device,
    pub key: String,
    pub kind: EventKind,
    pub ts: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    BbmasCsv,
    BuffaloLog,
    JsonLines,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bbmas" | "bbmas-csv" | "bbmascsv" | "csv" => Ok(InputFormat::BbmasCsv),
            "buffalo" | "buffalo-log" | "buffalolog" => Ok(InputFormat::BuffaloLog),
            "jsonl" | "jsonlines" | "json-lines" => Ok(InputFormat::JsonLines),
            _ => Err(Error::Format(s.to_string())),
        }
    }
}

/// User and device for formats that carry them in the file path rather than
/// in each row. JSON lines without a device field fall back to this device.
#[derive(Debug, Clone, Default)]
pub struct SourceContext {
    pub user: String,
    pub device: Device,
}

/// Canonical key label: upper-cased, with common dataset spellings of
/// modifier and editing keys folded together.
pub fn normalize_key(raw: &str) -> String {
    if raw == " " {
        return "SPACE".into();
    }
    let upper = raw.trim().to_ascii_uppercase();
    let stripped = upper.strip_prefix("KEY.").unwrap_or(&upper);
    match stripped {
        "SHIFT" | "SHIFT_L" | "SHIFT_R" | "LSHIFT" | "RSHIFT" | "LEFTSHIFT" | "RIGHTSHIFT" => "SHIFT".into(),
        "BACKSPACE" | "BACK_SPACE" | "BACK" => "BACKSPACE".into(),
        "CAPSLOCK" | "CAPS_LOCK" | "CAPITAL" | "CAPS" => "CAPSLOCK".into(),
        "SPACE" | "SPACEBAR" => "SPACE".into(),
        "ENTER" | "RETURN" => "ENTER".into(),
        other => other.to_string(),
    }
}

/// Parse a decimal seconds string into integer milliseconds, rounding the
/// fourth fractional digit half-up. Works on the digits directly.
fn seconds_to_ms(text: &str) -> Option<i64> {
    let text = text.trim();
    if text.starts_with('-') {
        return None;
    }
    let text = text.strip_prefix('+').unwrap_or(text);
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let whole: i64 = if int_part.is_empty() { 0 } else { int_part.parse().ok()? };
    let mut digits = frac_part.bytes().map(|b| i64::from(b - b'0'));
    let mut ms = 0;
    for _ in 0..3 {
        ms = ms * 10 + digits.next().unwrap_or(0);
    }
    let round_up = digits.next().is_some_and(|d| d >= 5);
    whole.checked_mul(1000)?.checked_add(ms + i64::from(round_up))
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

pub fn parse_events<R: BufRead>(source: R, format: InputFormat, ctx: &SourceContext) -> Result<Vec<RawEvent>> {
    match format {
        InputFormat::BbmasCsv => parse_bbmas_csv(source, ctx),
        InputFormat::BuffaloLog => parse_buffalo(source, ctx),
        InputFormat::JsonLines => parse_json_lines(source, ctx),
    }
}

struct CsvColumns {
    key: usize,
    direction: usize,
    time: usize,
}

fn parse_bbmas_csv<R: BufRead>(source: R, ctx: &SourceContext) -> Result<Vec<RawEvent>> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(source);
    let mut columns: Option<CsvColumns> = None;
    let mut events = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if idx == 0 {
            let lower: Vec<String> = record.iter().map(|f| f.to_ascii_lowercase()).collect();
            let find = |name: &str| lower.iter().position(|f| f == name);
            if let (Some(key), Some(direction), Some(time)) = (find("key"), find("direction"), find("time")) {
                columns = Some(CsvColumns { key, direction, time });
                continue;
            }
        }
        let cols = match &columns {
            Some(c) => CsvColumns { key: c.key, direction: c.direction, time: c.time },
            None => {
                // Headerless rows: the last three fields are key, direction, time.
                if record.len() < 3 {
                    return Err(parse_err(line, format!("expected at least 3 fields, found {}", record.len())));
                }
                let n = record.len();
                CsvColumns { key: n - 3, direction: n - 2, time: n - 1 }
            }
        };
        let field = |i: usize| record.get(i).ok_or_else(|| parse_err(line, format!("missing column {}", i + 1)));
        let key = field(cols.key)?;
        if key.is_empty() {
            return Err(parse_err(line, "empty key"));
        }
        let direction = field(cols.direction)?;
        let kind = EventKind::parse_token(direction)
            .ok_or_else(|| parse_err(line, format!("unknown direction token `{direction}`")))?;
        let time = field(cols.time)?;
        let ts = seconds_to_ms(time).ok_or_else(|| parse_err(line, format!("invalid time `{time}`")))?;
        events.push(RawEvent { user: ctx.user.clone(), device: ctx.device, key: normalize_key(key), kind, ts });
    }
    Ok(events)
}

fn parse_buffalo<R: BufRead>(source: R, ctx: &SourceContext) -> Result<Vec<RawEvent>> {
    let mut events = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 3 {
            return Err(parse_err(lineno, format!("expected 3 fields, found {}", fields.len())));
        }
        let kind = EventKind::parse_token(fields[1])
            .ok_or_else(|| parse_err(lineno, format!("unknown direction token `{}`", fields[1])))?;
        let ts: i64 = fields[2]
            .parse()
            .ok()
            .filter(|t: &i64| *t >= 0)
            .ok_or_else(|| parse_err(lineno, format!("invalid timestamp `{}`", fields[2])))?;
        events.push(RawEvent { user: ctx.user.clone(), device: ctx.device, key: normalize_key(fields[0]), kind, ts });
    }
    Ok(events)
}

#[derive(Deserialize)]
struct JsonEvent {
    user: String,
    device: Option<Device>,
    key: String,
    kind: String,
    ts: i64,
}

fn parse_json_lines<R: BufRead>(source: R, ctx: &SourceContext) -> Result<Vec<RawEvent>> {
    let mut events = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: JsonEvent = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let kind = EventKind::parse_token(&ev.kind)
            .ok_or_else(|| parse_err(lineno, format!("unknown direction token `{}`", ev.kind)))?;
        if ev.ts < 0 {
            return Err(parse_err(lineno, format!("negative timestamp {}", ev.ts)));
        }
        events.push(RawEvent {
            user: ev.user,
            device: ev.device.unwrap_or(ctx.device),
            key: normalize_key(&ev.key),
            kind,
            ts: ev.ts,
        });
    }
    Ok(events)
}

/// Serialize events in the canonical JSON lines form.
pub fn write_json_lines<W: std::io::Write>(mut out: W, events: &[RawEvent]) -> Result<()> {
    for ev in events {
        serde_json::to_writer(&mut out, ev)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keystroke {
    pub key: String,
    pub down_ts: i64,
    pub up_ts: i64,
}

impl Keystroke {
    pub fn hold(&self) -> i64 {
        self.up_ts - self.down_ts
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingSummary {
    pub events: usize,
    pub downs: usize,
    pub ups: usize,
    pub keystrokes: usize,
    pub dropped_downs: usize,
    pub orphan_ups: usize,
}

/// Match each press to the earliest later release of the same key.
///
/// Events are stably sorted by timestamp first. The returned keystrokes are
/// ordered by press time.
pub fn pair_events(events: &[RawEvent]) -> (Vec<Keystroke>, PairingSummary) {
    let mut sorted: Vec<&RawEvent> = events.iter().collect();
    sorted.sort_by_key(|e| e.ts);

    let mut summary = PairingSummary { events: events.len(), ..Default::default() };
    let mut pending: HashMap<&str, VecDeque<usize>> = HashMap::new();
    // Slots in press order; None until the release arrives.
    let mut slots: Vec<(&str, i64, Option<i64>)> = Vec::new();

    for ev in sorted {
        match ev.kind {
            EventKind::Down => {
                summary.downs += 1;
                pending.entry(ev.key.as_str()).or_default().push_back(slots.len());
                slots.push((ev.key.as_str(), ev.ts, None));
            }
            EventKind::Up => {
                summary.ups += 1;
                match pending.get_mut(ev.key.as_str()).and_then(VecDeque::pop_front) {
                    Some(slot) => slots[slot].2 = Some(ev.ts),
                    None => summary.orphan_ups += 1,
                }
            }
        }
    }

    let keystrokes: Vec<Keystroke> = slots
        .into_iter()
        .filter_map(|(key, down_ts, up)| up.map(|up_ts| Keystroke { key: key.to_string(), down_ts, up_ts }))
        .collect();
    summary.keystrokes = keystrokes.len();
    summary.dropped_downs = summary.downs - summary.keystrokes;
    (keystrokes, summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWindow {
    pub user: String,
    pub device: Device,
    pub index: usize,
    pub keystrokes: Vec<Keystroke>,
}

/// Cut keystrokes into consecutive non-overlapping windows of `window_len`;
/// a trailing remainder shorter than a full window is discarded.
pub fn segment_samples(
    keystrokes: &[Keystroke],
    window_len: usize,
    user: &str,
    device: Device,
) -> Result<Vec<SampleWindow>> {
    if window_len == 0 {
        return Err(Error::Config("window length must be positive".into()));
    }
    Ok(keystrokes
        .chunks_exact(window_len)
        .enumerate()
        .map(|(index, chunk)| SampleWindow { user: user.to_string(), device, index, keystrokes: chunk.to_vec() })
        .collect())
}

/// Timing of two consecutive keystrokes.
///
/// `f1` up→down, `f2` up→up, `f3` down→down, `f4` down→up, all measured from
/// the first key to the second.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigraphRecord {
    pub k1: String,
    pub k2: String,
    pub f1: i64,
    pub f2: i64,
    pub f3: i64,
    pub f4: i64,
}

impl DigraphRecord {
    pub fn from_pair(a: &Keystroke, b: &Keystroke) -> Self {
        Self {
            k1: a.key.clone(),
            k2: b.key.clone(),
            f1: b.down_ts - a.up_ts,
            f2: b.up_ts - a.up_ts,
            f3: b.down_ts - a.down_ts,
            f4: b.up_ts - a.down_ts,
        }
    }

    pub fn flights(&self) -> [i64; 4] {
        [self.f1, self.f2, self.f3, self.f4]
    }

    pub fn within(&self, max_abs_flight_ms: i64) -> bool {
        self.flights().iter().all(|f| f.abs() <= max_abs_flight_ms)
    }
}

/// One record per consecutive pair, dropping any pair where a flight exceeds
/// the bound in absolute value.
pub fn digraphs(window: &SampleWindow, max_abs_flight_ms: i64) -> Vec<DigraphRecord> {
    window
        .keystrokes
        .windows(2)
        .map(|w| DigraphRecord::from_pair(&w[0], &w[1]))
        .filter(|r| r.within(max_abs_flight_ms))
        .collect()
}
