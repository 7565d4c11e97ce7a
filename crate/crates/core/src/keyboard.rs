//! Keyboard geometry: key positions in key-pitch units, integer distance
//! buckets between keys, and left/right hand classification of digraphs.
//!
//! Positions are stored normalized by the key pitch, so a layout measured in
//! millimetres on a desktop keyboard and one measured in points on a tablet
//! produce the same distance buckets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard desktop key pitch in millimetres.
pub const DEFAULT_KEY_PITCH_MM: f64 = 19.05;

/// Slack added before flooring so that values that are a half-step in exact
/// arithmetic but land a hair below it after normalization still round up.
const ROUNDING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hand {
    Left,
    Right,
    Neutral,
}

/// Which hands typed a digraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HandClass {
    LL,
    RR,
    LR,
}

impl fmt::Display for HandClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            HandClass::LL => "LL",
            HandClass::RR => "RR",
            HandClass::LR => "LR",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyPosition {
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub hand: Hand,
}

/// Keys and their planar positions in key-pitch units.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyboardLayout {
    positions: BTreeMap<String, KeyPosition>,
    key_pitch: f64,
}

const TOP_ROW: &str = "QWERTYUIOP";
const HOME_ROW: &str = "ASDFGHJKL";
const BOTTOM_ROW: &str = "ZXCVBNM";
const LEFT_HAND: &str = "QWERTASDFGZXCVB";

/// On-disk layout description. A bare array is read as key-pitch units; the
/// object form carries physical coordinates plus the pitch used to normalize
/// them.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum LayoutFile {
    Normalized(Vec<KeyPosition>),
    Physical { key_pitch: f64, keys: Vec<KeyPosition> },
}

pub fn normalize_label(label: &str) -> String {
    label.trim().to_ascii_uppercase()
}

impl KeyboardLayout {
    /// Build a layout from positions already expressed in key-pitch units.
    pub fn new(positions: Vec<KeyPosition>, key_pitch: f64) -> Result<Self> {
        if !(key_pitch.is_finite() && key_pitch > 0.0) {
            return Err(Error::Layout(format!("key pitch must be positive, got {key_pitch}")));
        }
        let mut map = BTreeMap::new();
        for mut p in positions {
            p.label = normalize_label(&p.label);
            if p.label.is_empty() {
                return Err(Error::Layout("empty key label".into()));
            }
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::Layout(format!("non-finite coordinates for `{}`", p.label)));
            }
            if is_letter(&p.label) && p.hand == Hand::Neutral {
                return Err(Error::Layout(format!("letter `{}` must be left- or right-handed", p.label)));
            }
            let label = p.label.clone();
            if map.insert(label.clone(), p).is_some() {
                return Err(Error::Layout(format!("duplicate key label `{label}`")));
            }
        }
        for c in 'A'..='Z' {
            if !map.contains_key(&c.to_string()) {
                return Err(Error::Layout(format!("layout is missing letter `{c}`")));
            }
        }
        Ok(Self { positions: map, key_pitch })
    }

    /// Build a layout from physical coordinates (any unit), dividing every
    /// coordinate by `key_pitch` in the same unit.
    pub fn from_physical(positions: Vec<KeyPosition>, key_pitch: f64) -> Result<Self> {
        if !(key_pitch.is_finite() && key_pitch > 0.0) {
            return Err(Error::Layout(format!("key pitch must be positive, got {key_pitch}")));
        }
        let normalized =
            positions.into_iter().map(|p| KeyPosition { x: p.x / key_pitch, y: p.y / key_pitch, ..p }).collect();
        Self::new(normalized, key_pitch)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        match serde_json::from_str::<LayoutFile>(text)? {
            LayoutFile::Normalized(keys) => Self::new(keys, DEFAULT_KEY_PITCH_MM),
            LayoutFile::Physical { key_pitch, keys } => Self::from_physical(keys, key_pitch),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn key_pitch(&self) -> f64 {
        self.key_pitch
    }

    pub fn positions(&self) -> impl Iterator<Item = &KeyPosition> {
        self.positions.values()
    }

    pub fn position(&self, key: &str) -> Result<&KeyPosition> {
        let label = normalize_label(key);
        self.positions.get(&label).ok_or(Error::UnknownKey(label))
    }

    /// Euclidean distance between two keys in key-pitch units.
    pub fn euclidean(&self, k1: &str, k2: &str) -> Result<f64> {
        let a = self.position(k1)?;
        let b = self.position(k2)?;
        Ok((a.x - b.x).hypot(a.y - b.y))
    }

    /// Integer distance bucket: the Euclidean distance rounded half-up.
    pub fn key_distance(&self, k1: &str, k2: &str) -> Result<u32> {
        let d = self.euclidean(k1, k2)?;
        Ok((d + 0.5 + ROUNDING_SLACK).floor() as u32)
    }

    pub fn hand(&self, key: &str) -> Result<Hand> {
        self.position(key).map(|p| p.hand)
    }

    /// Classify a digraph of two letters by the hands that type it.
    pub fn hand_class(&self, k1: &str, k2: &str) -> Result<HandClass> {
        let h1 = self.letter_hand(k1)?;
        let h2 = self.letter_hand(k2)?;
        Ok(match (h1, h2) {
            (Hand::Left, Hand::Left) => HandClass::LL,
            (Hand::Right, Hand::Right) => HandClass::RR,
            _ => HandClass::LR,
        })
    }

    fn letter_hand(&self, key: &str) -> Result<Hand> {
        let label = normalize_label(key);
        if !is_letter(&label) {
            return Err(Error::NotHanded(label));
        }
        match self.positions.get(&label) {
            Some(p) if p.hand != Hand::Neutral => Ok(p.hand),
            _ => Err(Error::NotHanded(label)),
        }
    }
}

impl Default for KeyboardLayout {
    fn default() -> Self {
        default_qwerty()
    }
}

pub fn is_letter(label: &str) -> bool {
    let mut chars = label.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if c.is_ascii_alphabetic())
}

/// Staggered QWERTY: top row at y=0 from x=0, home row shifted by 0.25 and
/// bottom row by 0.75. The number row sits above at y=-1 without stagger.
pub fn default_qwerty() -> KeyboardLayout {
    let mut keys = Vec::new();
    let letter_rows = [(TOP_ROW, 0.0, 0.0), (HOME_ROW, 1.0, 0.25), (BOTTOM_ROW, 2.0, 0.75)];
    for (row, y, offset) in letter_rows {
        for (col, c) in row.chars().enumerate() {
            let hand = if LEFT_HAND.contains(c) { Hand::Left } else { Hand::Right };
            keys.push(KeyPosition { label: c.to_string(), x: col as f64 + offset, y, hand });
        }
    }
    for (col, c) in "1234567890".chars().enumerate() {
        keys.push(KeyPosition { label: c.to_string(), x: col as f64, y: -1.0, hand: Hand::Neutral });
    }
    let named = [
        ("BACKSPACE", 12.5, -1.0),
        ("TAB", -1.0, 0.0),
        ("CAPSLOCK", -1.0, 1.0),
        ("SHIFT", -1.0, 2.0),
        ("ENTER", 11.5, 1.0),
        ("SPACE", 4.5, 3.0),
        (";", 9.25, 1.0),
        ("'", 10.25, 1.0),
        (",", 7.75, 2.0),
        (".", 8.75, 2.0),
        ("/", 9.75, 2.0),
    ];
    for (label, x, y) in named {
        keys.push(KeyPosition { label: label.to_string(), x, y, hand: Hand::Neutral });
    }
    KeyboardLayout::new(keys, DEFAULT_KEY_PITCH_MM).expect("built-in layout is valid")
}
