//! Locating and parsing event files.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use keydyn::ingest::{parse_events, Device, InputFormat, RawEvent, SourceContext};
use keydyn::{Error, Result};
use walkdir::WalkDir;

fn format_for_extension(path: &Path) -> Option<InputFormat> {
    match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
        "csv" => Some(InputFormat::BbmasCsv),
        "txt" | "log" => Some(InputFormat::BuffaloLog),
        "jsonl" | "json" => Some(InputFormat::JsonLines),
        _ => None,
    }
}

/// User and device implied by a path. Either `17_Desktop.csv` (user up to
/// the first underscore, device any recognizable word in the stem) or
/// `17/Desktop.csv` (stem is only a device word, user is the directory).
pub fn context_for(path: &Path) -> SourceContext {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let device = device_word(&stem);
    let parent = path.parent().and_then(Path::file_name).map(|n| n.to_string_lossy().into_owned());
    let user = match parent {
        Some(dir) if DEVICE_WORDS.contains(&stem.to_ascii_lowercase().as_str()) => dir,
        _ => stem.split('_').next().unwrap_or(&stem).to_string(),
    };
    SourceContext { user, device }
}

const DEVICE_WORDS: [&str; 4] = ["desktop", "phone", "mobile", "tablet"];

fn device_word(stem: &str) -> Device {
    let lower = stem.to_ascii_lowercase();
    if lower.contains("desktop") {
        Device::Desktop
    } else if lower.contains("phone") || lower.contains("mobile") {
        Device::Mobile
    } else if lower.contains("tablet") {
        Device::Tablet
    } else {
        Device::Unknown
    }
}

fn files(root: &Path, format: Option<InputFormat>) -> Result<Vec<(PathBuf, InputFormat)>> {
    if !root.exists() {
        return Err(Error::Config(format!("dataset {} does not exist", root.display())));
    }
    if root.is_file() {
        let format = format
            .or_else(|| format_for_extension(root))
            .ok_or_else(|| Error::Config(format!("cannot infer the format of {}; pass --format", root.display())))?;
        return Ok(vec![(root.to_path_buf(), format)]);
    }
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Config(format!("walking {}: {e}", root.display())))?;
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if !entry.file_type().is_file() || hidden {
            continue;
        }
        let found = format_for_extension(entry.path());
        match (format, found) {
            (Some(f), Some(g)) if f == g => out.push((entry.into_path(), f)),
            (None, Some(g)) => out.push((entry.into_path(), g)),
            _ => {}
        }
    }
    Ok(out)
}

/// Every event under `root`, file by file in path order.
pub fn load(root: &Path, format: Option<InputFormat>) -> Result<Vec<RawEvent>> {
    let files = files(root, format)?;
    if files.is_empty() {
        return Err(Error::NoData(format!("no event files under {}", root.display())));
    }
    let mut events = Vec::new();
    for (path, format) in files {
        let reader = BufReader::new(File::open(&path)?);
        let parsed = parse_events(reader, format, &context_for(&path)).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse { line, message: format!("{}: {message}", path.display()) },
            other => other,
        })?;
        events.extend(parsed);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_from_name() {
        let c = context_for(Path::new("data/17_Desktop_Keystroke.csv"));
        assert_eq!((c.user.as_str(), c.device), ("17", Device::Desktop));
        let c = context_for(Path::new("042_phone.txt"));
        assert_eq!(c.device, Device::Mobile);
        assert_eq!(context_for(Path::new("x.txt")).device, Device::Unknown);
        let c = context_for(Path::new("bbmas/23/Desktop.csv"));
        assert_eq!((c.user.as_str(), c.device), ("23", Device::Desktop));
        let c = context_for(Path::new("bbmas/23/Tablet.csv"));
        assert_eq!((c.user.as_str(), c.device), ("23", Device::Tablet));
    }
}
