//! Playback over a growing event log.
//!
//! A [`Session`] owns the log, the graph and heat state at the playback
//! cursor, and the current picture (hierarchy plus positions). It is the only
//! mutator: callers feed it events and commands between ticks. Snapshots of
//! the state are kept every `checkpoint_interval` events so seeking costs at
//! most one interval of replay.

mod log;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::thread::JoinHandle;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{splitmix64, ClauseEvent, CnfFormula};
use crate::contraction::{build_hierarchy, ContractionConfig, ContractionHierarchy};
use crate::graph::{InteractionGraph, ReductionKind, WeightFunction};
use crate::heatmap::{aggregate_by_map, HeatConfig, HeatError, HeatState};
use crate::layout::{layout, relayout_from_session, LayoutConfig, LayoutError, Positions, RelayoutInput, RelayoutOutput};
use crate::wire::Ingest;

pub use self::log::EventLog;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("event index {target} outside [0, {len}]")]
    OutOfRange { target: i128, len: u64 },
    #[error("a relayout is already running")]
    AlreadyRunning,
    #[error(transparent)]
    Heat(#[from] HeatError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("invalid session configuration: {0}")]
    InvalidConfig(String),
    #[error("event log: {0}")]
    Io(#[from] std::io::Error),
}

/// How many buffered events one frame consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChunkPolicy {
    /// Everything that has arrived.
    #[default]
    Drain,
    /// At most this many.
    Fixed(u64),
}

impl FromStr for ChunkPolicy {
    type Err = String;

    /// `drain` or `fixed:N`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "drain" => Ok(ChunkPolicy::Drain),
            Some(("fixed", n)) => match n.parse() {
                Ok(n) if n > 0 => Ok(ChunkPolicy::Fixed(n)),
                _ => Err(format!("bad chunk size {n:?}")),
            },
            _ => Err(format!("unknown chunk policy {s:?} (expected drain or fixed:N)")),
        }
    }
}

impl fmt::Display for ChunkPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChunkPolicy::Drain => f.write_str("drain"),
            ChunkPolicy::Fixed(n) => write!(f, "fixed:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpillConfig {
    pub path: PathBuf,
    /// Events kept in memory before whole blocks move to disk.
    pub max_in_memory: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub reduction: ReductionKind,
    pub weights: WeightFunction,
    pub heat: HeatConfig,
    pub contraction: ContractionConfig,
    pub layout: LayoutConfig,
    pub checkpoint_interval: u64,
    pub frame_rate: u32,
    pub chunk: ChunkPolicy,
    pub spill: Option<SpillConfig>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            reduction: ReductionKind::default(),
            weights: WeightFunction::default(),
            heat: HeatConfig::default(),
            contraction: ContractionConfig::default(),
            layout: LayoutConfig::default(),
            checkpoint_interval: 10_000,
            frame_rate: 30,
            chunk: ChunkPolicy::default(),
            spill: None,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        self.heat.validate()?;
        self.layout.validate()?;
        if self.checkpoint_interval == 0 {
            return Err(SessionError::InvalidConfig("checkpoint interval must be at least 1".into()));
        }
        if self.frame_rate == 0 {
            return Err(SessionError::InvalidConfig("frame rate must be at least 1".into()));
        }
        if self.chunk == ChunkPolicy::Fixed(0) {
            return Err(SessionError::InvalidConfig("fixed chunk size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaybackStatus {
    Playing,
    Paused,
    Ended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub log_len: u64,
    pub live_clauses: u64,
    pub unknown_deletes: u64,
    pub producer_done: bool,
    pub relayout_running: bool,
    /// Wall-clock rate of the last tick; the only nondeterministic field.
    pub events_per_sec: f64,
}

/// One snapshot of what is on screen. Node arrays are indexed by display
/// node id; `edges` holds `(u, v, weight)` with `u < v`, sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameState {
    pub frame_index: u64,
    pub cursor: u64,
    pub status: PlaybackStatus,
    pub layout_version: u64,
    pub positions: Vec<[f64; 2]>,
    pub heats: Vec<f64>,
    /// Number of variables behind each display node.
    pub members: Vec<u32>,
    pub edges: Vec<(u32, u32, f64)>,
    pub stats: FrameStats,
}

impl FrameState {
    /// Zeroes the wall-clock field so frames can be compared across runs.
    pub fn without_timing(mut self) -> Self {
        self.stats.events_per_sec = 0.0;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Notification {
    Status { status: PlaybackStatus },
    RelayoutStarted,
    RelayoutDone { layout_version: u64, iterations_run: usize, budget_exhausted: bool },
    RelayoutFailed { message: String },
    ProducerClosed { clean: bool, error: Option<String> },
}

#[derive(Clone)]
struct Checkpoint {
    graph: InteractionGraph,
    heat: HeatState,
}

/// The picture: a hierarchy over the fine graph as it was at the last
/// layout, extended with singleton nodes for variables seen since.
struct Display {
    hierarchy: ContractionHierarchy,
    map: Vec<u32>,
    positions: Vec<[f64; 2]>,
    version: u64,
}

impl Display {
    fn new(hierarchy: ContractionHierarchy, positions: Vec<[f64; 2]>, version: u64) -> Self {
        let map = hierarchy.top_map();
        Display {
            hierarchy,
            map,
            positions,
            version,
        }
    }

    /// New variables get a fixed pseudo-random spot until the next relayout.
    fn extend(&mut self, num_fine: u32, seed: u64) {
        while (self.map.len() as u32) < num_fine {
            let v = self.map.len() as u64;
            let h = splitmix64(seed ^ splitmix64(v));
            let x = (h >> 40) as f64 / (1u64 << 24) as f64;
            let y = ((h >> 16) & 0xff_ffff) as f64 / (1u64 << 24) as f64;
            self.map.push(self.positions.len() as u32);
            self.positions.push([x, y]);
        }
    }
}

pub struct Session {
    config: SessionConfig,
    initial: InteractionGraph,
    log: EventLog,
    producer_done: bool,
    state: InteractionGraph,
    heat: HeatState,
    cursor: u64,
    checkpoints: Vec<Checkpoint>,
    status: PlaybackStatus,
    frame_index: u64,
    display: Display,
    relayout: Option<JoinHandle<Result<RelayoutOutput, LayoutError>>>,
    notifications: VecDeque<Notification>,
    last_tick: Option<Instant>,
    events_per_sec: f64,
}

impl Session {
    /// Builds the initial graph, hierarchy and layout for `formula`. The
    /// session starts paused at cursor 0.
    pub fn new(formula: &CnfFormula, config: SessionConfig) -> Result<Self, SessionError> {
        config.validate()?;
        let initial = InteractionGraph::from_formula(formula, config.reduction, config.weights);
        // Lay out the rebuilt graph so a relayout with no events reproduces it exactly.
        let base = initial.rebuild();
        let hierarchy = build_hierarchy(&base, &config.contraction);
        let positions = if hierarchy.top().num_nodes() == 0 {
            Vec::new()
        } else {
            layout(hierarchy.top(), &config.layout, None)?.positions.0
        };
        let log = match &config.spill {
            Some(s) => EventLog::with_spill(config.checkpoint_interval as usize, &s.path, s.max_in_memory)?,
            None => EventLog::new(config.checkpoint_interval as usize),
        };
        let heat = HeatState::new(&config.heat);
        let mut display = Display::new(hierarchy, positions, 0);
        display.extend(initial.graph.num_nodes(), config.layout.seed);
        Ok(Session {
            checkpoints: vec![Checkpoint {
                graph: initial.clone(),
                heat: heat.clone(),
            }],
            state: initial.clone(),
            initial,
            log,
            producer_done: false,
            heat,
            cursor: 0,
            status: PlaybackStatus::Paused,
            frame_index: 0,
            display,
            relayout: None,
            notifications: VecDeque::new(),
            last_tick: None,
            events_per_sec: 0.0,
            config,
        })
    }

    /// A session over a complete, already known event sequence.
    pub fn replay(
        formula: &CnfFormula,
        events: impl IntoIterator<Item = ClauseEvent>,
        config: SessionConfig,
    ) -> Result<Self, SessionError> {
        let mut s = Session::new(formula, config)?;
        for e in events {
            s.push_event(e)?;
        }
        s.finish_input();
        Ok(s)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn log_len(&self) -> u64 {
        self.log.len()
    }

    pub fn status(&self) -> PlaybackStatus {
        self.status
    }

    pub fn graph(&self) -> &InteractionGraph {
        &self.state
    }

    pub fn heat(&self) -> &HeatState {
        &self.heat
    }

    pub fn hierarchy(&self) -> &ContractionHierarchy {
        &self.display.hierarchy
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    /// Nodes currently on screen.
    pub fn display_nodes(&self) -> usize {
        self.display.positions.len()
    }

    pub fn layout_version(&self) -> u64 {
        self.display.version
    }

    pub fn producer_done(&self) -> bool {
        self.producer_done
    }

    pub fn relayout_running(&self) -> bool {
        self.relayout.is_some()
    }

    pub fn set_chunk(&mut self, chunk: ChunkPolicy) {
        self.config.chunk = chunk;
    }

    pub fn push_event(&mut self, event: ClauseEvent) -> Result<u64, SessionError> {
        Ok(self.log.push(event)?)
    }

    /// No more events will arrive.
    pub fn finish_input(&mut self) {
        self.producer_done = true;
        if self.status == PlaybackStatus::Playing && self.cursor == self.log.len() {
            self.set_status(PlaybackStatus::Ended);
        }
    }

    pub fn ingest(&mut self, msg: Ingest) -> Result<(), SessionError> {
        match msg {
            Ingest::Hello { version, num_variables } => {
                ::log::info!("producer connected: protocol {version}, {num_variables} variables announced");
            }
            Ingest::Event(e) => {
                self.push_event(e)?;
            }
            Ingest::Closed { clean, error } => {
                self.finish_input();
                self.notifications.push_back(Notification::ProducerClosed { clean, error });
            }
        }
        Ok(())
    }

    pub fn take_notifications(&mut self) -> Vec<Notification> {
        self.notifications.drain(..).collect()
    }

    fn set_status(&mut self, status: PlaybackStatus) {
        if self.status != status {
            self.status = status;
            self.notifications.push_back(Notification::Status { status });
        }
    }

    fn at_end(&self) -> bool {
        self.producer_done && self.cursor == self.log.len()
    }

    pub fn play(&mut self) {
        if self.at_end() {
            self.set_status(PlaybackStatus::Ended);
        } else {
            self.set_status(PlaybackStatus::Playing);
        }
    }

    pub fn pause(&mut self) {
        if self.status == PlaybackStatus::Playing {
            self.set_status(PlaybackStatus::Paused);
        }
    }

    /// Pause and rewind to the start.
    pub fn stop(&mut self) -> Result<FrameState, SessionError> {
        self.set_status(PlaybackStatus::Paused);
        self.seek(0)
    }

    /// Advances by one chunk when playing; otherwise returns the current frame.
    pub fn tick(&mut self) -> Result<FrameState, SessionError> {
        self.poll_relayout();
        if self.status != PlaybackStatus::Playing {
            return Ok(self.frame());
        }
        let available = self.log.len() - self.cursor;
        let n = match self.config.chunk {
            ChunkPolicy::Drain => available,
            ChunkPolicy::Fixed(k) => k.min(available),
        };
        let now = Instant::now();
        self.advance_to(self.cursor + n)?;
        if let Some(prev) = self.last_tick {
            let secs = now.duration_since(prev).as_secs_f64();
            self.events_per_sec = if secs > 0.0 { n as f64 / secs } else { 0.0 };
        }
        self.last_tick = Some(now);
        self.frame_index += 1;
        if self.at_end() {
            self.set_status(PlaybackStatus::Ended);
        }
        Ok(self.frame())
    }

    /// Moves the cursor to `target`, restoring the nearest checkpoint at or
    /// before it when moving backwards. Positions are left alone.
    pub fn seek(&mut self, target: u64) -> Result<FrameState, SessionError> {
        if target > self.log.len() {
            return Err(SessionError::OutOfRange {
                target: target as i128,
                len: self.log.len(),
            });
        }
        let c = self.config.checkpoint_interval;
        let k = ((target / c) as usize).min(self.checkpoints.len() - 1);
        let base = k as u64 * c;
        if self.cursor > target || self.cursor < base {
            let cp = &self.checkpoints[k];
            self.state = cp.graph.clone();
            self.heat = cp.heat.clone();
            self.cursor = base;
        }
        self.advance_to(target)?;
        if self.status == PlaybackStatus::Ended && !self.at_end() {
            self.set_status(PlaybackStatus::Paused);
        }
        Ok(self.frame())
    }

    /// `seek(cursor + n)`.
    pub fn step(&mut self, n: i64) -> Result<FrameState, SessionError> {
        let target = self.cursor as i128 + n as i128;
        if target < 0 || target > self.log.len() as i128 {
            return Err(SessionError::OutOfRange {
                target,
                len: self.log.len(),
            });
        }
        self.seek(target as u64)
    }

    fn advance_to(&mut self, target: u64) -> Result<(), SessionError> {
        let c = self.config.checkpoint_interval;
        loop {
            let i = self.cursor;
            if i.is_multiple_of(c) && (i / c) as usize == self.checkpoints.len() {
                self.checkpoints.push(Checkpoint {
                    graph: self.state.clone(),
                    heat: self.heat.clone(),
                });
            }
            if i >= target {
                return Ok(());
            }
            let event = self.log.get(i)?;
            self.state.apply(event);
            self.heat.update(event);
            self.cursor += 1;
        }
    }

    /// Replaces the heat configuration and recomputes heat for the whole
    /// played prefix, so seeking stays exact.
    pub fn set_heat_config(&mut self, heat: HeatConfig) -> Result<FrameState, SessionError> {
        heat.validate()?;
        self.config.heat = heat;
        let target = self.cursor;
        self.state = self.initial.clone();
        self.heat = HeatState::new(&self.config.heat);
        self.cursor = 0;
        self.checkpoints.clear();
        self.advance_to(target)?;
        Ok(self.frame())
    }

    /// Graph and heat after events `[0, target)`, computed from the initial
    /// state without checkpoints.
    pub fn scratch_state(&mut self, target: u64) -> Result<(InteractionGraph, HeatState), SessionError> {
        if target > self.log.len() {
            return Err(SessionError::OutOfRange {
                target: target as i128,
                len: self.log.len(),
            });
        }
        let mut graph = self.initial.clone();
        let mut heat = HeatState::new(&self.config.heat);
        for i in 0..target {
            let e = self.log.get(i)?;
            graph.apply(e);
            heat.update(e);
        }
        Ok((graph, heat))
    }

    /// Starts a relayout on a worker thread, pausing playback first. The
    /// result is swapped in by a later `tick`, `poll_relayout` or
    /// `wait_relayout`.
    pub fn trigger_relayout(&mut self) -> Result<(), SessionError> {
        if self.relayout.is_some() {
            return Err(SessionError::AlreadyRunning);
        }
        self.pause();
        let input = RelayoutInput {
            num_nodes: self.state.graph.num_nodes(),
            live: self.state.live.clone(),
            reduction: self.config.reduction,
            weights: self.config.weights,
            previous_map: self.display.map.clone(),
            previous_positions: Positions(self.display.positions.clone()),
            contraction: self.config.contraction,
            layout: self.config.layout.clone(),
        };
        let handle = std::thread::Builder::new()
            .name("relayout".into())
            .spawn(move || {
                if input.num_nodes == 0 {
                    return Err(LayoutError::EmptyGraph);
                }
                relayout_from_session(&input)
            })?;
        self.relayout = Some(handle);
        self.notifications.push_back(Notification::RelayoutStarted);
        Ok(())
    }

    /// Swaps in a finished relayout. Returns true if one completed.
    pub fn poll_relayout(&mut self) -> bool {
        match &self.relayout {
            Some(h) if h.is_finished() => {
                self.finish_relayout();
                true
            }
            _ => false,
        }
    }

    /// Blocks until the running relayout (if any) has been swapped in.
    pub fn wait_relayout(&mut self) -> bool {
        if self.relayout.is_some() {
            self.finish_relayout();
            true
        } else {
            false
        }
    }

    fn finish_relayout(&mut self) {
        let handle = self.relayout.take().expect("relayout running");
        let result = handle.join().unwrap_or_else(|_| {
            Err(LayoutError::InvalidConfig("relayout worker panicked".into()))
        });
        match result {
            Ok(out) => {
                let version = self.display.version + 1;
                let mut display = Display::new(out.hierarchy, out.outcome.positions.0, version);
                display.extend(self.state.graph.num_nodes(), self.config.layout.seed);
                self.display = display;
                self.notifications.push_back(Notification::RelayoutDone {
                    layout_version: version,
                    iterations_run: out.outcome.iterations_run,
                    budget_exhausted: out.outcome.budget_exhausted,
                });
            }
            Err(e) => {
                ::log::warn!("relayout failed: {e}");
                self.notifications.push_back(Notification::RelayoutFailed { message: e.to_string() });
            }
        }
    }

    /// The current frame, without advancing.
    pub fn frame(&mut self) -> FrameState {
        self.display.extend(self.state.graph.num_nodes(), self.config.layout.seed);
        let d = &self.display;
        let m = d.positions.len();
        let fine = self.heat.values(d.map.len() as u32);
        let heats = aggregate_by_map(&d.map, m, &fine);
        let mut members = vec![0u32; m];
        for &c in &d.map {
            members[c as usize] += 1;
        }
        let mut coarse: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for (u, v, w) in self.state.graph.edges() {
            let (a, b) = (d.map[u as usize], d.map[v as usize]);
            if a != b {
                *coarse.entry((a.min(b), a.max(b))).or_insert(0.0) += w;
            }
        }
        FrameState {
            frame_index: self.frame_index,
            cursor: self.cursor,
            status: self.status,
            layout_version: d.version,
            positions: d.positions.clone(),
            heats,
            members,
            edges: coarse.into_iter().map(|((u, v), w)| (u, v, w)).collect(),
            stats: FrameStats {
                log_len: self.log.len(),
                live_clauses: self.state.live.len(),
                unknown_deletes: self.state.unknown_deletes,
                producer_done: self.producer_done,
                relayout_running: self.relayout.is_some(),
                events_per_sec: self.events_per_sec,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn formula() -> CnfFormula {
        CnfFormula::from_ints(6, &[&[1, 2, -3], &[3, 4], &[-4, 5, 6], &[1, -6]])
    }

    fn events(n: u64) -> Vec<ClauseEvent> {
        (0..n)
            .map(|i| {
                let a = (i * 7 % 6) as i32 + 1;
                let b = (i * 5 % 6) as i32 + 1;
                if i % 4 == 3 {
                    ClauseEvent::delete(0, &[a, -b])
                } else {
                    ClauseEvent::add(0, &[a, -b, (i % 3) as i32 + 1])
                }
            })
            .collect()
    }

    fn config() -> SessionConfig {
        SessionConfig {
            checkpoint_interval: 16,
            heat: HeatConfig { k: 10, ..Default::default() },
            layout: LayoutConfig { iterations: 50, ..Default::default() },
            ..Default::default()
        }
    }

    fn session(n: u64, cfg: SessionConfig) -> Session {
        Session::replay(&formula(), events(n), cfg).unwrap()
    }

    #[test]
    fn drain_consumes_everything_buffered() {
        let mut s = Session::new(&formula(), config()).unwrap();
        for e in events(250) {
            s.push_event(e).unwrap();
        }
        s.play();
        assert_eq!(s.tick().unwrap().cursor, 250);
        assert_eq!(s.status(), PlaybackStatus::Playing);
        s.finish_input();
        assert_eq!(s.status(), PlaybackStatus::Ended);
    }

    #[test]
    fn fixed_chunks_advance_in_steps() {
        let mut s = session(250, SessionConfig { chunk: ChunkPolicy::Fixed(100), ..config() });
        s.play();
        let cursors: Vec<u64> = (0..3).map(|_| s.tick().unwrap().cursor).collect();
        assert_eq!(cursors, vec![100, 200, 250]);
        assert_eq!(s.status(), PlaybackStatus::Ended);
    }

    #[test]
    fn paused_tick_is_a_no_op() {
        let mut s = session(50, config());
        let before = s.frame().without_timing();
        assert_eq!(s.tick().unwrap().without_timing(), before);
        assert_eq!(s.cursor(), 0);
    }

    #[test]
    fn seek_zero_is_the_formula() {
        let mut s = session(100, config());
        s.seek(73).unwrap();
        let f = s.seek(0).unwrap();
        assert_eq!(s.graph().graph, InteractionGraph::from_formula(&formula(), s.config().reduction, s.config().weights).graph);
        assert!(f.heats.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn seek_matches_scratch_everywhere() {
        let mut s = session(120, config());
        for target in [0, 5, 16, 17, 120, 31, 64, 63, 2, 119, 48] {
            s.seek(target).unwrap();
            let (g, h) = s.scratch_state(target).unwrap();
            assert_eq!(s.graph().graph, g.graph, "target {target}");
            assert_eq!(s.graph().live, g.live);
            assert_eq!(s.heat(), &h);
        }
    }

    #[test]
    fn seek_to_cursor_changes_nothing() {
        let mut s = session(40, config());
        let f = s.seek(21).unwrap();
        assert_eq!(s.seek(21).unwrap(), f);
        assert!(matches!(s.seek(41), Err(SessionError::OutOfRange { .. })));
    }

    #[test]
    fn steps_compose() {
        let mut s = session(40, config());
        let f = s.seek(10).unwrap();
        s.step(1).unwrap();
        assert_eq!(s.step(-1).unwrap(), f);
        assert_eq!(s.step(0).unwrap(), f);
        let back = s.step(-10).unwrap();
        assert_eq!(back, s.seek(0).unwrap());
        assert!(matches!(s.step(-1), Err(SessionError::OutOfRange { target: -1, .. })));
    }

    #[test]
    fn seek_keeps_positions() {
        let mut s = session(40, config());
        let a = s.seek(30).unwrap();
        let b = s.seek(3).unwrap();
        assert_eq!(a.positions, b.positions);
        assert_ne!(a.edges, b.edges);
    }

    #[test]
    fn stop_rewinds_and_pauses() {
        let mut s = session(40, config());
        s.play();
        s.tick().unwrap();
        let f = s.stop().unwrap();
        assert_eq!((f.cursor, f.status), (0, PlaybackStatus::Paused));
    }

    #[test]
    fn relayout_with_no_events_matches_warm_layout() {
        let mut s = session(0, config());
        let before = s.frame();
        s.trigger_relayout().unwrap();
        assert!(s.wait_relayout());
        let after = s.frame();
        assert_eq!(after.layout_version, 1);
        let expected = layout(s.hierarchy().top(), &s.config().layout, Some(&Positions(before.positions))).unwrap();
        assert_eq!(after.positions, expected.positions.0);
    }

    #[test]
    fn relayout_pauses_and_stays_paused() {
        let mut s = session(100, SessionConfig { chunk: ChunkPolicy::Fixed(10), ..config() });
        s.play();
        s.tick().unwrap();
        s.take_notifications();
        s.trigger_relayout().unwrap();
        assert!(matches!(s.trigger_relayout(), Err(SessionError::AlreadyRunning)));
        s.wait_relayout();
        let cursor = s.cursor();
        s.tick().unwrap();
        assert_eq!(s.cursor(), cursor);
        let notes = s.take_notifications();
        assert_eq!(notes[0], Notification::Status { status: PlaybackStatus::Paused });
        assert_eq!(notes[1], Notification::RelayoutStarted);
        assert!(matches!(notes[2], Notification::RelayoutDone { layout_version: 1, .. }));
        assert_eq!(notes.len(), 3);
        assert_eq!(s.status(), PlaybackStatus::Paused);
    }

    #[test]
    fn heat_config_change_keeps_seek_exact() {
        let mut s = session(80, config());
        s.seek(50).unwrap();
        s.set_heat_config(HeatConfig {
            mode: crate::heatmap::HeatMode::Decay,
            k: 7,
            ..Default::default()
        })
        .unwrap();
        for target in [12, 79, 33] {
            s.seek(target).unwrap();
            let (_, h) = s.scratch_state(target).unwrap();
            assert_eq!(s.heat(), &h);
        }
    }

    #[test]
    fn new_variables_get_display_nodes() {
        let mut s = Session::new(&formula(), config()).unwrap();
        s.push_event(ClauseEvent::add(0, &[1, 9])).unwrap();
        s.play();
        let f = s.tick().unwrap();
        assert_eq!(f.positions.len(), f.heats.len());
        assert!(f.positions.len() >= 9);
        assert_eq!(f.members.iter().sum::<u32>(), 9);
        assert!(f.edges.iter().all(|&(u, v, _)| u < v && (v as usize) < f.positions.len()));
    }

    #[test]
    fn spilled_session_seeks_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SessionConfig {
            spill: Some(SpillConfig {
                path: dir.path().join("log.spill"),
                max_in_memory: 20,
            }),
            ..config()
        };
        let mut spilled = session(150, cfg);
        let mut plain = session(150, config());
        for t in [149, 3, 77, 150, 18] {
            assert_eq!(spilled.seek(t).unwrap(), plain.seek(t).unwrap());
        }
    }

    #[test]
    fn chunk_policy_parses() {
        assert_eq!("drain".parse::<ChunkPolicy>().unwrap(), ChunkPolicy::Drain);
        assert_eq!("fixed:25".parse::<ChunkPolicy>().unwrap(), ChunkPolicy::Fixed(25));
        assert!("fixed:0".parse::<ChunkPolicy>().is_err());
        assert!("burst".parse::<ChunkPolicy>().is_err());
        assert_eq!(ChunkPolicy::Fixed(4).to_string(), "fixed:4");
    }
}
