//! Synthetic typist cohorts.
//!
//! Text is a stream of letters drawn from English letter frequencies, with
//! the occasional SHIFT or BACKSPACE keystroke. The flight from one key's
//! release to the next key's press depends on the pair: same-hand letter
//! pairs at keyboard distance 0..=3 use the typist's per-distance, per-hand
//! distribution; every other pair uses a base distribution that may roll
//! over (press the next key before releasing the previous one).

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DEFT_MAX_DISTANCE;
use crate::ingest::{write_json_lines, Device, EventKind, RawEvent, DEFAULT_WINDOW_LEN};
use crate::keyboard::{default_qwerty, HandClass, KeyboardLayout};
use crate::seed;

#[rustfmt::skip]
const LETTER_FREQ: [(char, f64); 26] = [
    ('A', 8.2), ('B', 1.5), ('C', 2.8), ('D', 4.3), ('E', 12.7), ('F', 2.2), ('G', 2.0),
    ('H', 6.1), ('I', 7.0), ('J', 0.15), ('K', 0.77), ('L', 4.0), ('M', 2.4), ('N', 6.7),
    ('O', 7.5), ('P', 1.9), ('Q', 0.095), ('R', 6.0), ('S', 6.3), ('T', 9.1), ('U', 2.8),
    ('V', 0.98), ('W', 2.4), ('X', 0.15), ('Y', 2.0), ('Z', 0.074),
];

pub const MIN_ROLLOVER_MS: i64 = -500;
pub const MAX_FLIGHT_MS: i64 = 4500;
pub const HOLD_RANGE_MS: (i64, i64) = (30, 240);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypistProfile {
    /// Up-to-down flight for same-hand letter pairs, indexed by distance
    /// then side (0 = left, 1 = right).
    pub deft_flight: [[Timing; 2]; DEFT_MAX_DISTANCE as usize + 1],
    /// Flight for cross-hand pairs, distances beyond 3 and non-letters.
    pub base_flight: Timing,
    pub hold: Timing,
    pub backspace_rate: f64,
    pub shift_rate: f64,
    /// Chance that a base-distribution pair overlaps.
    pub rollover_prob: f64,
}

impl TypistProfile {
    pub fn validate(&self) -> Result<()> {
        let timings = self.deft_flight.iter().flatten().chain([&self.base_flight, &self.hold]);
        for t in timings {
            if !(t.mean > 0.0 && t.std >= 0.0 && t.mean.is_finite() && t.std.is_finite()) {
                return Err(Error::Config(format!("invalid timing {t:?}")));
            }
        }
        for r in [self.backspace_rate, self.shift_rate, self.rollover_prob] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("rate {r} outside [0, 1]")));
            }
        }
        if self.backspace_rate + self.shift_rate > 1.0 {
            return Err(Error::Config("backspace and shift rates leave no room for letters".into()));
        }
        Ok(())
    }

    pub fn flight_for(&self, class: HandClass, distance: u32) -> Option<Timing> {
        let side = match class {
            HandClass::LL => 0,
            HandClass::RR => 1,
            HandClass::LR => return None,
        };
        self.deft_flight.get(distance as usize).map(|d| d[side])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    /// Users differ in their same-hand, distance-conditioned flights.
    Distinct,
    /// Every user shares one profile.
    Null,
}

impl std::str::FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "distinct" => Ok(Signal::Distinct),
            "null" => Ok(Signal::Null),
            _ => Err(Error::Config(format!("unknown signal `{s}`; expected distinct or null"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_users: usize,
    pub windows_per_user: usize,
    pub seed: u64,
    pub signal: Signal,
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_users < 2 {
            return Err(Error::Config(format!("a cohort needs at least 2 users, got {}", self.n_users)));
        }
        if self.windows_per_user < 10 {
            return Err(Error::Config(format!("need at least 10 windows per user, got {}", self.windows_per_user)));
        }
        Ok(())
    }

    pub fn keystrokes_per_user(&self) -> usize {
        self.windows_per_user * DEFAULT_WINDOW_LEN
    }

    pub fn user_id(&self, i: usize) -> String {
        let width = self.n_users.to_string().len().max(2);
        format!("user{:0width$}", i + 1)
    }

    /// Profile of user `i` (0-based). In distinct mode the left-hand band
    /// for distance `d` is centred on `120 + 15 i + 40 d` ms and the
    /// right-hand bands run in the opposite user order, so a pooled flight
    /// mean carries much less of the signal than the per-distance means.
    pub fn profile(&self, i: usize) -> TypistProfile {
        let rank = |side: usize| match (self.signal, side) {
            (Signal::Null, _) => 0,
            (Signal::Distinct, 0) => i,
            (Signal::Distinct, _) => self.n_users - 1 - i,
        };
        let band =
            |d: usize, side: usize| Timing { mean: 120.0 + 15.0 * rank(side) as f64 + 40.0 * d as f64, std: 10.0 };
        TypistProfile {
            deft_flight: std::array::from_fn(|d| [band(d, 0), band(d, 1)]),
            base_flight: Timing { mean: 180.0, std: 60.0 },
            hold: Timing { mean: 100.0, std: 20.0 },
            backspace_rate: 0.02,
            shift_rate: 0.03,
            rollover_prob: 0.05,
        }
    }
}

fn normal(t: Timing) -> Normal<f64> {
    Normal::new(t.mean, t.std).expect("validated timing")
}

/// Key sequence and timestamps for one typist.
pub fn generate_user(
    user: &str,
    profile: &TypistProfile,
    n_keystrokes: usize,
    layout: &KeyboardLayout,
    seed: u64,
) -> Result<Vec<RawEvent>> {
    profile.validate()?;
    let mut rng = seed::rng(seed);
    let letters = WeightedIndex::new(LETTER_FREQ.iter().map(|(_, w)| *w)).expect("static weights");
    let hold = normal(profile.hold);
    let base = normal(profile.base_flight);

    let mut events = Vec::with_capacity(2 * n_keystrokes);
    let mut prev: Option<(String, i64, i64)> = None;
    // Latest release among keystrokes before `prev`; at most two keys are
    // ever down at once.
    let mut released_by = i64::MIN;
    for _ in 0..n_keystrokes {
        let key = draw_key(&mut rng, profile, &letters);
        let h = (hold.sample(&mut rng).round() as i64).clamp(HOLD_RANGE_MS.0, HOLD_RANGE_MS.1);
        let down = match &prev {
            None => 0,
            Some((prev_key, prev_down, prev_up)) => {
                let f1 = draw_flight(&mut rng, profile, layout, prev_key, &key, &base)?;
                // A repeated key must be released before it is pressed again.
                let floor = if *prev_key == key { 1 } else { MIN_ROLLOVER_MS.max(1 - (prev_up - prev_down)) };
                (prev_up + f1.clamp(floor, MAX_FLIGHT_MS)).max(released_by + 1)
            }
        };
        let up = down + h;
        for (kind, ts) in [(EventKind::Down, down), (EventKind::Up, up)] {
            events.push(RawEvent { user: user.to_string(), device: Device::Desktop, key: key.clone(), kind, ts });
        }
        if let Some((_, _, prev_up)) = prev {
            released_by = released_by.max(prev_up);
        }
        prev = Some((key, down, up));
    }
    events.sort_by_key(|e| e.ts);
    Ok(events)
}

fn draw_key(rng: &mut ChaCha8Rng, profile: &TypistProfile, letters: &WeightedIndex<f64>) -> String {
    let u: f64 = rng.random();
    if u < profile.backspace_rate {
        "BACKSPACE".into()
    } else if u < profile.backspace_rate + profile.shift_rate {
        "SHIFT".into()
    } else {
        LETTER_FREQ[letters.sample(rng)].0.to_string()
    }
}

fn draw_flight(
    rng: &mut ChaCha8Rng,
    profile: &TypistProfile,
    layout: &KeyboardLayout,
    k1: &str,
    k2: &str,
    base: &Normal<f64>,
) -> Result<i64> {
    if let Ok(class) = layout.hand_class(k1, k2) {
        if let Some(t) = profile.flight_for(class, layout.key_distance(k1, k2)?) {
            return Ok(normal(t).sample(rng).round() as i64);
        }
    }
    if k1 != k2 && rng.random::<f64>() < profile.rollover_prob {
        return Ok(rng.random_range(MIN_ROLLOVER_MS..0));
    }
    Ok(base.sample(rng).round() as i64)
}

/// Events for the whole cohort, user by user.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Vec<RawEvent>> {
    spec.validate()?;
    let layout = default_qwerty();
    let per_user: Vec<Result<Vec<RawEvent>>> = (0..spec.n_users)
        .into_par_iter()
        .map(|i| {
            let user = spec.user_id(i);
            let seed = seed::derive_label(spec.seed, &user);
            generate_user(&user, &spec.profile(i), spec.keystrokes_per_user(), &layout, seed)
        })
        .collect();
    let mut events = Vec::new();
    for user_events in per_user {
        events.extend(user_events?);
    }
    Ok(events)
}

/// Generate and write the cohort as JSON lines.
pub fn write_cohort<W: Write>(spec: &CohortSpec, out: W) -> Result<()> {
    write_json_lines(out, &generate_cohort(spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::pair_events;

    fn spec(signal: Signal) -> CohortSpec {
        CohortSpec { n_users: 10, windows_per_user: 10, seed: 7, signal }
    }

    #[test]
    fn null_profiles_are_shared() {
        let s = spec(Signal::Null);
        assert!((1..10).all(|i| s.profile(i) == s.profile(0)));
    }

    #[test]
    fn distinct_bands_differ() {
        let s = spec(Signal::Distinct);
        let mut means: Vec<f64> = (0..10).map(|i| s.profile(i).deft_flight[1][0].mean).collect();
        assert_eq!(means[3], 120.0 + 45.0 + 40.0);
        means.sort_by(f64::total_cmp);
        means.dedup();
        assert_eq!(means.len(), 10);
        assert_eq!(s.profile(0).deft_flight[0][1].mean, 120.0 + 15.0 * 9.0);
    }

    #[test]
    fn stream_pairs_cleanly() {
        let s = CohortSpec { n_users: 2, ..spec(Signal::Distinct) };
        let events = generate_cohort(&s).unwrap();
        assert_eq!(events.len(), 2 * 2 * 1000);
        for user in ["user01", "user02"] {
            let mine: Vec<RawEvent> = events.iter().filter(|e| e.user == user).cloned().collect();
            let (strokes, summary) = pair_events(&mine);
            assert_eq!(strokes.len(), 1000);
            assert_eq!((summary.dropped_downs, summary.orphan_ups), (0, 0));
        }
    }

    #[test]
    fn seeded() {
        let s = CohortSpec { n_users: 2, ..spec(Signal::Null) };
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_cohort(&s, &mut a).unwrap();
        write_cohort(&s, &mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        write_cohort(&CohortSpec { seed: 8, ..s }, &mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn spec_limits() {
        assert!(CohortSpec { n_users: 1, ..spec(Signal::Null) }.validate().is_err());
        assert!(CohortSpec { windows_per_user: 9, ..spec(Signal::Null) }.validate().is_err());
        assert_eq!(CohortSpec { n_users: 120, ..spec(Signal::Null) }.user_id(4), "user005");
    }
}
