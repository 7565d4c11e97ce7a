//! From raw events to a feature matrix, with bookkeeping for the ingest
//! summary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_matrix, FeatureConfig, FeatureMatrix};
use crate::ingest::{
    pair_events, segment_samples, Device, DigraphRecord, PairingSummary, RawEvent, DEFAULT_WINDOW_LEN,
};
use crate::keyboard::KeyboardLayout;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub window_len: usize,
    pub features: FeatureConfig,
    /// Keep only events from this device. Required when the input mixes
    /// devices.
    pub device: Option<Device>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self { window_len: DEFAULT_WINDOW_LEN, features: FeatureConfig::default(), device: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserIngest {
    pub user: String,
    pub pairing: PairingSummary,
    pub windows: usize,
    /// Consecutive keystroke pairs inside windows.
    pub digraphs: usize,
    /// Pairs dropped by the flight-time bound.
    pub filtered_digraphs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub device: Device,
    pub events: usize,
    pub keystrokes: usize,
    pub windows: usize,
    pub dropped_downs: usize,
    pub orphan_ups: usize,
    pub digraphs: usize,
    pub filtered_digraphs: usize,
    pub users: Vec<UserIngest>,
}

/// Pair, window and featurize `events`, one user at a time in sorted user
/// order.
pub fn extract(
    events: &[RawEvent],
    layout: &KeyboardLayout,
    cfg: &ExtractConfig,
) -> Result<(FeatureMatrix, IngestSummary)> {
    let kept: Vec<&RawEvent> = events.iter().filter(|e| cfg.device.is_none_or(|d| e.device == d)).collect();
    let Some(first) = kept.first() else {
        return Err(Error::NoData(match cfg.device {
            Some(d) => format!("no events for device `{d}`"),
            None => "no events".into(),
        }));
    };
    let device = first.device;
    if let Some(other) = kept.iter().find(|e| e.device != device) {
        return Err(Error::Config(format!(
            "input mixes devices `{device}` and `{}`; choose one with a device filter",
            other.device
        )));
    }

    let mut by_user: BTreeMap<&str, Vec<RawEvent>> = BTreeMap::new();
    for e in kept {
        by_user.entry(e.user.as_str()).or_default().push(e.clone());
    }
    let bound = cfg.features.max_abs_flight_ms;
    let mut windows = Vec::new();
    let mut users = Vec::new();
    for (user, user_events) in by_user {
        let (strokes, pairing) = pair_events(&user_events);
        let user_windows = segment_samples(&strokes, cfg.window_len, user, device)?;
        let (mut digraphs, mut filtered) = (0, 0);
        for w in &user_windows {
            for pair in w.keystrokes.windows(2) {
                digraphs += 1;
                if !DigraphRecord::from_pair(&pair[0], &pair[1]).within(bound) {
                    filtered += 1;
                }
            }
        }
        users.push(UserIngest {
            user: user.to_string(),
            pairing,
            windows: user_windows.len(),
            digraphs,
            filtered_digraphs: filtered,
        });
        windows.extend(user_windows);
    }
    if windows.is_empty() {
        return Err(Error::NoData(format!("no user has a full window of {} keystrokes", cfg.window_len)));
    }
    let matrix = build_matrix(&windows, layout, &cfg.features)?;
    let sum = |f: fn(&UserIngest) -> usize| users.iter().map(f).sum();
    let summary = IngestSummary {
        device,
        events: sum(|u| u.pairing.events),
        keystrokes: sum(|u| u.pairing.keystrokes),
        windows: windows.len(),
        dropped_downs: sum(|u| u.pairing.dropped_downs),
        orphan_ups: sum(|u| u.pairing.orphan_ups),
        digraphs: sum(|u| u.digraphs),
        filtered_digraphs: sum(|u| u.filtered_digraphs),
        users,
    };
    Ok((matrix, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::EventKind;
    use crate::keyboard::default_qwerty;

    fn stream(user: &str, device: Device, n: usize) -> Vec<RawEvent> {
        (0..n as i64)
            .flat_map(|i| {
                let key = ["A", "S", "D"][i as usize % 3].to_string();
                [(EventKind::Down, 200 * i), (EventKind::Up, 200 * i + 80)].map(|(kind, ts)| RawEvent {
                    user: user.into(),
                    device,
                    key: key.clone(),
                    kind,
                    ts,
                })
            })
            .collect()
    }

    #[test]
    fn counts_add_up() {
        let mut events = stream("b", Device::Desktop, 250);
        events.extend(stream("a", Device::Desktop, 100));
        let cfg = ExtractConfig::default();
        let (m, s) = extract(&events, &default_qwerty(), &cfg).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(s.windows, 3);
        assert_eq!(s.keystrokes, 350);
        assert_eq!(s.digraphs, 3 * 99);
        assert_eq!(s.filtered_digraphs, 0);
        assert_eq!(s.users[0].user, "a");
    }

    #[test]
    fn device_handling() {
        let mut events = stream("a", Device::Desktop, 100);
        events.extend(stream("a", Device::Mobile, 100));
        let layout = default_qwerty();
        assert!(matches!(extract(&events, &layout, &ExtractConfig::default()), Err(Error::Config(_))));
        let cfg = ExtractConfig { device: Some(Device::Mobile), ..Default::default() };
        assert_eq!(extract(&events, &layout, &cfg).unwrap().1.device, Device::Mobile);
        let cfg = ExtractConfig { device: Some(Device::Tablet), ..Default::default() };
        assert!(matches!(extract(&events, &layout, &cfg), Err(Error::NoData(_))));
        assert!(matches!(extract(&[], &layout, &ExtractConfig::default()), Err(Error::NoData(_))));
        assert!(matches!(
            extract(&stream("a", Device::Desktop, 50), &layout, &ExtractConfig::default()),
            Err(Error::NoData(_))
        ));
    }
}
