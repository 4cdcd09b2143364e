//! Free-form position phrases for `LOCATE`.
//!
//! Phrases are normalized (lowercase, punctuation folded, leading
//! prepositions and trailing "side"/"corner"-style words dropped) and then
//! looked up in a [`SynonymTable`]. Zones split the image into a thirds grid.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::scene::Proposal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Zone {
    Left,
    Right,
    Top,
    Bottom,
    Center,
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LocateRule {
    /// Keep every box whose center lies in the zone.
    Zone(Zone),
    /// Singleton with the smallest (`max == false`) or largest coordinate.
    Extreme { axis: Axis, max: bool },
    /// Singleton at the lower median along the axis.
    Median(Axis),
}

impl LocateRule {
    pub fn token(self) -> &'static str {
        match self {
            LocateRule::Zone(Zone::Left) => "left",
            LocateRule::Zone(Zone::Right) => "right",
            LocateRule::Zone(Zone::Top) => "top",
            LocateRule::Zone(Zone::Bottom) => "bottom",
            LocateRule::Zone(Zone::Center) => "center",
            LocateRule::Zone(Zone::TopLeft) => "top-left",
            LocateRule::Zone(Zone::TopRight) => "top-right",
            LocateRule::Zone(Zone::BottomLeft) => "bottom-left",
            LocateRule::Zone(Zone::BottomRight) => "bottom-right",
            LocateRule::Extreme { axis: Axis::X, max: false } => "leftmost",
            LocateRule::Extreme { axis: Axis::X, max: true } => "rightmost",
            LocateRule::Extreme { axis: Axis::Y, max: false } => "uppermost",
            LocateRule::Extreme { axis: Axis::Y, max: true } => "lowest",
            LocateRule::Median(Axis::X) => "middle",
            LocateRule::Median(Axis::Y) => "vertical-middle",
        }
    }

    const ALL: [LocateRule; 15] = [
        LocateRule::Zone(Zone::Left),
        LocateRule::Zone(Zone::Right),
        LocateRule::Zone(Zone::Top),
        LocateRule::Zone(Zone::Bottom),
        LocateRule::Zone(Zone::Center),
        LocateRule::Zone(Zone::TopLeft),
        LocateRule::Zone(Zone::TopRight),
        LocateRule::Zone(Zone::BottomLeft),
        LocateRule::Zone(Zone::BottomRight),
        LocateRule::Extreme { axis: Axis::X, max: false },
        LocateRule::Extreme { axis: Axis::X, max: true },
        LocateRule::Extreme { axis: Axis::Y, max: false },
        LocateRule::Extreme { axis: Axis::Y, max: true },
        LocateRule::Median(Axis::X),
        LocateRule::Median(Axis::Y),
    ];
}

impl fmt::Display for LocateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for LocateRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        LocateRule::ALL
            .iter()
            .copied()
            .find(|r| r.token() == s)
            .ok_or_else(|| format!("unknown locate rule '{s}'"))
    }
}

const LEADING: [&str; 10] = ["at the ", "on the ", "in the ", "to the ", "towards the ", "at ", "on ", "in ", "to ", "the "];
const TRAILING: [&str; 8] = [" of the image", " of the picture", " of the photo", " of image", " side", " corner", " part", " area"];

/// Canonical lookup key for a position phrase.
pub fn normalize_position(phrase: &str) -> String {
    let mut folded = String::with_capacity(phrase.len());
    for c in phrase.chars() {
        match c {
            '\'' | '\u{2019}' | '"' | '.' => {}
            '-' | '_' | ',' => folded.push(' '),
            c => folded.extend(c.to_lowercase()),
        }
    }
    let mut s = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    loop {
        let before = s.len();
        for p in LEADING {
            if let Some(rest) = s.strip_prefix(p) {
                s = rest.to_string();
            }
        }
        for t in TRAILING {
            if let Some(rest) = s.strip_suffix(t) {
                s = rest.to_string();
            }
        }
        if s.len() == before {
            return s;
        }
    }
}

const HOUR_WORDS: [&str; 12] = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve"];

/// Versioned phrase → rule mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynonymTable {
    pub version: u32,
    entries: BTreeMap<String, LocateRule>,
}

impl SynonymTable {
    pub fn empty(version: u32) -> Self {
        SynonymTable { version, entries: BTreeMap::new() }
    }

    /// Adds or replaces a phrase; the key is normalized first.
    pub fn insert(&mut self, phrase: &str, rule: LocateRule) {
        self.entries.insert(normalize_position(phrase), rule);
    }

    pub fn resolve(&self, phrase: &str) -> Option<LocateRule> {
        self.entries.get(&normalize_position(phrase)).copied()
    }

    pub fn entries(&self) -> &BTreeMap<String, LocateRule> {
        &self.entries
    }
}

impl Default for SynonymTable {
    fn default() -> Self {
        use Axis::*;
        use LocateRule::*;
        let mut t = SynonymTable::empty(1);
        let groups: &[(LocateRule, &[&str])] = &[
            (Zone(self::Zone::Left), &["left", "on left", "left hand"]),
            (Zone(self::Zone::Right), &["right", "on right", "right hand"]),
            (Zone(self::Zone::Top), &["top", "up", "upper", "above", "top half"]),
            (Zone(self::Zone::Bottom), &["bottom", "down", "lower", "below", "bottom half"]),
            (Zone(self::Zone::Center), &["center", "centre", "central", "centered"]),
            (Zone(self::Zone::TopLeft), &["top left", "upper left", "left top"]),
            (Zone(self::Zone::TopRight), &["top right", "upper right", "right top"]),
            (Zone(self::Zone::BottomLeft), &["bottom left", "lower left", "left bottom"]),
            (Zone(self::Zone::BottomRight), &["bottom right", "lower right", "right bottom"]),
            (
                Extreme { axis: X, max: false },
                &["leftmost", "left most", "outmost left", "outermost left", "far left", "most left", "furthest left"],
            ),
            (
                Extreme { axis: X, max: true },
                &["rightmost", "right most", "outmost right", "outermost right", "far right", "most right", "furthest right"],
            ),
            (
                Extreme { axis: Y, max: false },
                &["uppermost", "topmost", "top most", "highest", "outmost top", "very top"],
            ),
            (
                Extreme { axis: Y, max: true },
                &["lowest", "bottommost", "bottom most", "lowermost", "outmost bottom", "very bottom"],
            ),
            (Median(X), &["middle", "in between", "between", "centermost", "middle one"]),
        ];
        for (rule, phrases) in groups {
            for p in *phrases {
                t.insert(p, *rule);
            }
        }
        // clock positions, 12 at the top
        let clock = |h: usize| match h {
            12 => Zone(self::Zone::Top),
            1 | 2 => Zone(self::Zone::TopRight),
            3 => Zone(self::Zone::Right),
            4 | 5 => Zone(self::Zone::BottomRight),
            6 => Zone(self::Zone::Bottom),
            7 | 8 => Zone(self::Zone::BottomLeft),
            9 => Zone(self::Zone::Left),
            _ => Zone(self::Zone::TopLeft),
        };
        for h in 1..=12 {
            let rule = clock(h);
            for name in [format!("{h}"), HOUR_WORDS[h - 1].to_string()] {
                t.insert(&format!("{name} oclock"), rule);
                t.insert(&format!("{name} o clock"), rule);
            }
        }
        t
    }
}

fn in_zone(zone: Zone, x: f64, y: f64, width: f64, height: f64) -> bool {
    let left = x < width / 3.0;
    let right = x > 2.0 * width / 3.0;
    let top = y < height / 3.0;
    let bottom = y > 2.0 * height / 3.0;
    match zone {
        Zone::Left => left,
        Zone::Right => right,
        Zone::Top => top,
        Zone::Bottom => bottom,
        Zone::Center => !left && !right && !top && !bottom,
        Zone::TopLeft => top && left,
        Zone::TopRight => top && right,
        Zone::BottomLeft => bottom && left,
        Zone::BottomRight => bottom && right,
    }
}

fn coord(p: &Proposal, axis: Axis) -> f64 {
    match axis {
        Axis::X => p.bbox.x,
        Axis::Y => p.bbox.y,
    }
}

/// Applies a resolved rule. `objs` must be non-empty for the singleton rules
/// to produce a result.
pub fn apply_rule(objs: &[Proposal], rule: LocateRule, width: f64, height: f64) -> Vec<Proposal> {
    match rule {
        LocateRule::Zone(z) => objs.iter().filter(|p| in_zone(z, p.bbox.x, p.bbox.y, width, height)).cloned().collect(),
        LocateRule::Extreme { axis, max } => {
            let best = objs.iter().min_by(|a, b| {
                let ord = coord(a, axis).total_cmp(&coord(b, axis));
                let ord = if max { ord.reverse() } else { ord };
                ord.then_with(|| a.id.cmp(&b.id))
            });
            best.cloned().into_iter().collect()
        }
        LocateRule::Median(axis) => {
            if objs.is_empty() {
                return Vec::new();
            }
            let mut sorted: Vec<&Proposal> = objs.iter().collect();
            sorted.sort_by(|a, b| coord(a, axis).total_cmp(&coord(b, axis)).then_with(|| a.id.cmp(&b.id)));
            alloc::vec![sorted[(sorted.len() - 1) / 2].clone()]
        }
    }
}
