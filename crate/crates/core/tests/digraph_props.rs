use keydyn::features::{extract_window, FeatureConfig, FeatureSchema};
use keydyn::ingest::{digraphs, pair_events, Device, EventKind, Keystroke, RawEvent, SampleWindow};
use keydyn::keyboard::default_qwerty;
use proptest::prelude::*;

const KEYS: [&str; 8] = ["A", "S", "J", "K", "E", "O", "SHIFT", "SPACE"];

/// Keystrokes with increasing press times; a key is never pressed again
/// before its previous release.
fn strokes() -> impl Strategy<Value = Vec<Keystroke>> {
    prop::collection::vec((0..KEYS.len(), 0i64..7000, 1i64..6000), 2..40).prop_map(|spec| {
        let mut t = 0;
        let mut out: Vec<Keystroke> = Vec::new();
        for (k, gap, hold) in spec {
            t += gap + 1;
            if let Some(prev) = out.iter().rev().find(|s| s.key == KEYS[k]) {
                t = t.max(prev.up_ts + 1);
            }
            out.push(Keystroke { key: KEYS[k].into(), down_ts: t, up_ts: t + hold });
        }
        out
    })
}

fn events(strokes: &[Keystroke]) -> Vec<RawEvent> {
    strokes
        .iter()
        .flat_map(|k| {
            [(EventKind::Down, k.down_ts), (EventKind::Up, k.up_ts)].map(|(kind, ts)| RawEvent {
                user: "u".into(),
                device: Device::Desktop,
                key: k.key.clone(),
                kind,
                ts,
            })
        })
        .collect()
}

fn window(strokes: Vec<Keystroke>) -> SampleWindow {
    SampleWindow { user: "u".into(), device: Device::Desktop, index: 0, keystrokes: strokes }
}

proptest! {
    #[test]
    fn pairing_recovers_keystrokes(s in strokes()) {
        let mut ev = events(&s);
        ev.reverse();
        let (paired, summary) = pair_events(&ev);
        prop_assert_eq!(summary.dropped_downs + summary.orphan_ups, 0);
        prop_assert_eq!(paired, s);
    }

    #[test]
    fn flight_identities(s in strokes(), bound in 100i64..8000) {
        let holds: Vec<i64> = s.iter().map(Keystroke::hold).collect();
        let scan: Vec<usize> = (0..s.len() - 1)
            .filter(|&i| {
                let (a, b) = (&s[i], &s[i + 1]);
                [b.down_ts - a.up_ts, b.up_ts - a.up_ts, b.down_ts - a.down_ts, b.up_ts - a.down_ts]
                    .iter()
                    .all(|f| f.abs() <= bound)
            })
            .collect();
        let records = digraphs(&window(s), bound);
        prop_assert_eq!(records.len(), scan.len());
        for (r, &i) in records.iter().zip(&scan) {
            prop_assert_eq!(r.f2, r.f1 + holds[i + 1]);
            prop_assert_eq!(r.f3, r.f1 + holds[i]);
            prop_assert_eq!(r.f4, r.f3 + holds[i + 1]);
        }
    }

    #[test]
    fn every_window_has_a_full_row(s in strokes()) {
        let row = extract_window(&window(s), &default_qwerty(), &FeatureConfig::default());
        prop_assert_eq!(row.values.len(), FeatureSchema::full().len());
        for v in row.values.iter().flatten() {
            prop_assert!(v.is_finite());
        }
    }
}
