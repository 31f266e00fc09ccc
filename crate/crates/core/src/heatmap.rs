//! Per-variable heat from recently learned clauses, and its colour mapping.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{Clause, ClauseEvent, EventBody, EventKind};
use crate::contraction::ContractionHierarchy;

#[derive(Debug, Error, PartialEq)]
pub enum HeatError {
    #[error("heat {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid colour {0:?} (expected #RRGGBB)")]
    BadColor(String),
    #[error("a palette needs at least two stops")]
    ShortPalette,
    #[error("window width must be at least 1")]
    ZeroWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeatMode {
    /// Occurrences over the last k learned clauses, divided by the maximum.
    #[default]
    WindowCount,
    /// 1.0 on touch, falling linearly to 0 over the next k events.
    Decay,
}

impl FromStr for HeatMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "window" | "window-count" => Ok(HeatMode::WindowCount),
            "decay" => Ok(HeatMode::Decay),
            other => Err(format!("unknown heat mode {other:?} (expected window or decay)")),
        }
    }
}

impl fmt::Display for HeatMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeatMode::WindowCount => "window",
            HeatMode::Decay => "decay",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Rgb(pub u8, pub u8, pub u8);

impl FromStr for Rgb {
    type Err = HeatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HeatError::BadColor(s.to_string());
        let hex = s.strip_prefix('#').ok_or_else(bad)?;
        if hex.len() != 6 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(bad());
        }
        let channel = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).map_err(|_| bad());
        Ok(Rgb(channel(0)?, channel(2)?, channel(4)?))
    }
}

impl TryFrom<String> for Rgb {
    type Error = HeatError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Rgb> for String {
    fn from(c: Rgb) -> String {
        c.to_string()
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }
}

/// Colour stops from cold to hot, evenly spaced over [0, 1].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Rgb>", into = "Vec<Rgb>")]
pub struct Palette(Vec<Rgb>);

impl Palette {
    pub fn new(stops: Vec<Rgb>) -> Result<Self, HeatError> {
        if stops.len() < 2 {
            return Err(HeatError::ShortPalette);
        }
        Ok(Palette(stops))
    }

    /// Parses a comma-separated list of `#RRGGBB` stops.
    pub fn parse_list(s: &str) -> Result<Self, HeatError> {
        let stops = s
            .split(',')
            .map(|t| t.trim().parse())
            .collect::<Result<Vec<Rgb>, _>>()?;
        Palette::new(stops)
    }

    pub fn stops(&self) -> &[Rgb] {
        &self.0
    }

    pub fn first(&self) -> Rgb {
        self.0[0]
    }

    pub fn last(&self) -> Rgb {
        self.0[self.0.len() - 1]
    }
}

impl FromStr for Palette {
    type Err = HeatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Palette::parse_list(s)
    }
}

impl Default for Palette {
    /// Dark blue, yellow, red.
    fn default() -> Self {
        Palette(vec![Rgb(0x00, 0x00, 0x8b), Rgb(0xff, 0xff, 0x00), Rgb(0xff, 0x00, 0x00)])
    }
}

impl TryFrom<Vec<Rgb>> for Palette {
    type Error = HeatError;

    fn try_from(v: Vec<Rgb>) -> Result<Self, Self::Error> {
        Palette::new(v)
    }
}

impl From<Palette> for Vec<Rgb> {
    fn from(p: Palette) -> Vec<Rgb> {
        p.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatConfig {
    pub mode: HeatMode,
    /// Window width in learned clauses, or decay span in events.
    pub k: usize,
    pub palette: Palette,
    /// Let deletions contribute occurrences as well; off by default.
    #[serde(default)]
    pub include_deletions: bool,
}

impl Default for HeatConfig {
    fn default() -> Self {
        HeatConfig {
            mode: HeatMode::WindowCount,
            k: 1000,
            palette: Palette::default(),
            include_deletions: false,
        }
    }
}

impl HeatConfig {
    pub fn validate(&self) -> Result<(), HeatError> {
        if self.k == 0 {
            return Err(HeatError::ZeroWindow);
        }
        Ok(())
    }
}

const NEVER: u64 = u64::MAX;

/// Heat bookkeeping for one event-log prefix.
///
/// Window mode keeps the last k contributing clauses with per-variable counts
/// and a histogram of counts, so the maximum is available in O(1). Decay mode
/// keeps the sequence number of each variable's last touch.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatState {
    mode: HeatMode,
    k: usize,
    include_deletions: bool,
    /// Sequence number of the latest event seen.
    now: Option<u64>,
    window: VecDeque<Clause>,
    counts: Vec<u32>,
    count_histogram: Vec<u32>,
    max_count: u32,
    last_touch: Vec<u64>,
}

impl HeatState {
    pub fn new(config: &HeatConfig) -> Self {
        HeatState {
            mode: config.mode,
            k: config.k.max(1),
            include_deletions: config.include_deletions,
            now: None,
            window: VecDeque::new(),
            counts: Vec::new(),
            count_histogram: vec![0],
            max_count: 0,
            last_touch: Vec::new(),
        }
    }

    pub fn mode(&self) -> HeatMode {
        self.mode
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn now(&self) -> Option<u64> {
        self.now
    }

    pub fn update(&mut self, event: &ClauseEvent) {
        self.now = Some(event.sequence);
        let contributes = event.kind == EventKind::Add || self.include_deletions;
        let EventBody::Clause(clause) = &event.body else {
            return;
        };
        if !contributes {
            return;
        }
        match self.mode {
            HeatMode::WindowCount => {
                for v in clause.variables() {
                    self.increment(v.node() as usize);
                }
                self.window.push_back(clause.clone());
                if self.window.len() > self.k {
                    let old = self.window.pop_front().expect("nonempty window");
                    for v in old.variables() {
                        self.decrement(v.node() as usize);
                    }
                }
            }
            HeatMode::Decay => {
                for v in clause.variables() {
                    let i = v.node() as usize;
                    if i >= self.last_touch.len() {
                        self.last_touch.resize(i + 1, NEVER);
                    }
                    self.last_touch[i] = event.sequence;
                }
            }
        }
    }

    fn increment(&mut self, i: usize) {
        if i >= self.counts.len() {
            self.counts.resize(i + 1, 0);
        }
        let c = self.counts[i] as usize;
        if c > 0 {
            self.count_histogram[c] -= 1;
        }
        if c + 1 >= self.count_histogram.len() {
            self.count_histogram.resize(c + 2, 0);
        }
        self.count_histogram[c + 1] += 1;
        self.counts[i] += 1;
        self.max_count = self.max_count.max(c as u32 + 1);
    }

    fn decrement(&mut self, i: usize) {
        let c = self.counts[i] as usize;
        self.count_histogram[c] -= 1;
        self.counts[i] -= 1;
        if c > 1 {
            self.count_histogram[c - 1] += 1;
        }
        if c as u32 == self.max_count && self.count_histogram[c] == 0 {
            self.max_count -= 1;
        }
    }

    /// Occurrences of a variable (zero-based node id) in the window.
    pub fn count(&self, node: u32) -> u32 {
        self.counts.get(node as usize).copied().unwrap_or(0)
    }

    pub fn max_count(&self) -> u32 {
        self.max_count
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn window(&self) -> impl Iterator<Item = &Clause> {
        self.window.iter()
    }

    pub fn last_touch(&self, node: u32) -> Option<u64> {
        self.last_touch
            .get(node as usize)
            .copied()
            .filter(|&t| t != NEVER)
    }

    /// Heat of a variable (zero-based node id), in [0, 1].
    pub fn value(&self, node: u32) -> f64 {
        match self.mode {
            HeatMode::WindowCount => {
                if self.max_count == 0 {
                    0.0
                } else {
                    self.count(node) as f64 / self.max_count as f64
                }
            }
            HeatMode::Decay => match (self.last_touch(node), self.now) {
                (Some(t), Some(now)) => (1.0 - (now - t) as f64 / self.k as f64).max(0.0),
                _ => 0.0,
            },
        }
    }

    pub fn values(&self, num_nodes: u32) -> Vec<f64> {
        (0..num_nodes).map(|v| self.value(v)).collect()
    }
}

/// Mean of member heats per supernode, using a level-0 → coarse map.
/// Fine nodes outside the map are skipped; supernodes without members get 0.
pub fn aggregate_by_map(map: &[u32], num_coarse: usize, fine: &[f64]) -> Vec<f64> {
    let mut sum = vec![0.0; num_coarse];
    let mut n = vec![0u32; num_coarse];
    for (f, &c) in map.iter().enumerate() {
        if let Some(h) = fine.get(f) {
            sum[c as usize] += h;
            n[c as usize] += 1;
        }
    }
    sum.iter()
        .zip(&n)
        .map(|(s, &k)| if k == 0 { 0.0 } else { s / k as f64 })
        .collect()
}

/// Heat of each top-level node: the mean heat of the variables it represents.
pub fn aggregate_heat(hierarchy: &ContractionHierarchy, fine: &[f64]) -> Vec<f64> {
    aggregate_by_map(&hierarchy.top_map(), hierarchy.top().num_nodes() as usize, fine)
}

/// Piecewise-linear interpolation between palette stops, rounding half up.
pub fn heat_to_color(heat: f64, palette: &Palette) -> Result<Rgb, HeatError> {
    if !(0.0..=1.0).contains(&heat) {
        return Err(HeatError::OutOfRange(heat));
    }
    let stops = palette.stops();
    let segments = stops.len() - 1;
    let pos = heat * segments as f64;
    let i = (pos.floor() as usize).min(segments - 1);
    let t = pos - i as f64;
    let (a, b) = (stops[i], stops[i + 1]);
    let mix = |x: u8, y: u8| {
        let v = x as f64 + (y as f64 - x as f64) * t;
        (v + 0.5).floor().clamp(0.0, 255.0) as u8
    };
    Ok(Rgb(mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2)))
}
