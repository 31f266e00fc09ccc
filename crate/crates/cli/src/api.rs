//! JSON control API over a running session.
//!
//! The [`Engine`] thread owns the [`Session`], ticks it at the frame rate,
//! feeds it producer input and executes commands between ticks. HTTP handlers
//! and WebSocket clients talk to it through an [`EngineHandle`].

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, TryRecvError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clauseviz_core::heatmap::{HeatConfig, HeatMode, Palette};
use clauseviz_core::session::{FrameState, Notification, PlaybackStatus, Session, SessionError};
use clauseviz_core::wire::Ingest;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{broadcast, oneshot};

use crate::config::lenient;

/// One request from a client. Serialized with a `cmd` tag, e.g.
/// `{"cmd": "seek", "index": 120}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Play,
    Pause,
    /// Pause and rewind to event 0.
    Stop,
    Seek {
        index: u64,
    },
    /// Relative seek; negative counts move backwards.
    Step {
        count: i64,
    },
    Relayout,
    /// Unset fields keep their current value.
    SetHeatConfig {
        #[serde(default, deserialize_with = "lenient", skip_serializing_if = "Option::is_none")]
        mode: Option<HeatMode>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
        #[serde(default, deserialize_with = "lenient", skip_serializing_if = "Option::is_none")]
        palette: Option<Palette>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        include_deletions: Option<bool>,
    },
    GetState,
    GetFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    OutOfRange,
    AlreadyRunning,
    InvalidConfig,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::OutOfRange | ErrorCode::InvalidConfig => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::AlreadyRunning => StatusCode::CONFLICT,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({ "ok": false, "error": self })
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::OutOfRange { .. } => ErrorCode::OutOfRange,
            SessionError::AlreadyRunning => ErrorCode::AlreadyRunning,
            SessionError::Heat(_) | SessionError::InvalidConfig(_) => ErrorCode::InvalidConfig,
            SessionError::Layout(_) | SessionError::Io(_) => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self.to_json())).into_response()
    }
}

/// Session summary returned by every command except `get_frame`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub status: PlaybackStatus,
    pub cursor: u64,
    pub log_len: u64,
    pub frame_index: u64,
    pub layout_version: u64,
    pub display_nodes: usize,
    pub variables: u32,
    pub live_clauses: u64,
    pub producer_done: bool,
    pub relayout_running: bool,
    pub heat: HeatConfig,
}

impl StateView {
    pub fn of(s: &Session) -> Self {
        StateView {
            status: s.status(),
            cursor: s.cursor(),
            log_len: s.log_len(),
            frame_index: s.frame_index(),
            layout_version: s.layout_version(),
            display_nodes: s.display_nodes(),
            variables: s.graph().graph.num_nodes(),
            live_clauses: s.graph().live.len(),
            producer_done: s.producer_done(),
            relayout_running: s.relayout_running(),
            heat: s.config().heat.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    State(StateView),
    Frame(Box<FrameState>),
}

impl Reply {
    pub fn to_json(&self) -> Value {
        match self {
            Reply::State(s) => json!({ "ok": true, "state": s }),
            Reply::Frame(f) => json!({ "ok": true, "frame": f }),
        }
    }
}

pub type CommandResult = Result<Reply, ApiError>;

pub fn result_json(r: &CommandResult) -> Value {
    match r {
        Ok(reply) => reply.to_json(),
        Err(e) => e.to_json(),
    }
}

pub fn parse_command(text: &str) -> Result<Command, ApiError> {
    serde_json::from_str(text).map_err(|e| ApiError::new(ErrorCode::BadRequest, e.to_string()))
}

/// Applies `cmd` to the session synchronously.
pub fn execute(session: &mut Session, cmd: Command) -> CommandResult {
    match cmd {
        Command::Play => session.play(),
        Command::Pause => session.pause(),
        Command::Stop => {
            session.stop()?;
        }
        Command::Seek { index } => {
            session.seek(index)?;
        }
        Command::Step { count } => {
            session.step(count)?;
        }
        Command::Relayout => session.trigger_relayout()?,
        Command::SetHeatConfig {
            mode,
            k,
            palette,
            include_deletions,
        } => {
            let mut heat = session.config().heat.clone();
            heat.mode = mode.unwrap_or(heat.mode);
            heat.k = k.unwrap_or(heat.k);
            heat.palette = palette.unwrap_or(heat.palette);
            heat.include_deletions = include_deletions.unwrap_or(heat.include_deletions);
            session.set_heat_config(heat)?;
        }
        Command::GetState => {}
        Command::GetFrame => return Ok(Reply::Frame(Box::new(session.frame()))),
    }
    Ok(Reply::State(StateView::of(session)))
}

/// What the engine broadcasts to stream subscribers.
#[derive(Debug, Clone)]
pub enum Push {
    Frame(Arc<FrameState>),
    Note(Notification),
}

#[derive(Debug, Clone, Copy)]
pub struct EngineOptions {
    /// Stop the engine once playback reaches the end of a finished log.
    pub exit_when_done: bool,
    /// Most ingest messages handled between two ticks.
    pub ingest_batch: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            exit_when_done: false,
            ingest_batch: 200_000,
        }
    }
}

type Request = (Command, oneshot::Sender<CommandResult>);

/// Cheap, cloneable access to a running engine.
#[derive(Clone)]
pub struct EngineHandle {
    requests: mpsc::Sender<Request>,
    pushes: broadcast::Sender<Push>,
}

impl EngineHandle {
    pub async fn request(&self, cmd: Command) -> CommandResult {
        let (tx, rx) = oneshot::channel();
        let gone = || ApiError::new(ErrorCode::Internal, "session has shut down");
        self.requests.send((cmd, tx)).map_err(|_| gone())?;
        rx.await.map_err(|_| gone())?
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Push> {
        self.pushes.subscribe()
    }
}

pub struct Engine {
    handle: EngineHandle,
    stop: Arc<AtomicBool>,
    thread: JoinHandle<Session>,
    finished: Option<oneshot::Receiver<()>>,
}

impl Engine {
    pub fn start(session: Session, ingest: Option<Receiver<Ingest>>, options: EngineOptions) -> Engine {
        let (requests, commands) = mpsc::channel();
        let (pushes, _) = broadcast::channel(64);
        let stop = Arc::new(AtomicBool::new(false));
        let (done_tx, done_rx) = oneshot::channel();
        let worker = Worker {
            session,
            commands,
            ingest,
            pushes: pushes.clone(),
            stop: stop.clone(),
            options,
        };
        let thread = thread::Builder::new()
            .name("session".into())
            .spawn(move || {
                let session = worker.run();
                done_tx.send(()).ok();
                session
            })
            .expect("spawn session thread");
        Engine {
            handle: EngineHandle { requests, pushes },
            stop,
            thread,
            finished: Some(done_rx),
        }
    }

    pub fn handle(&self) -> EngineHandle {
        self.handle.clone()
    }

    /// Resolves when the engine stops by itself (`exit_when_done`).
    pub fn finished(&mut self) -> oneshot::Receiver<()> {
        self.finished.take().expect("finished() called once")
    }

    /// Stops the tick loop and hands the session back.
    pub fn shutdown(self) -> Session {
        self.stop.store(true, Ordering::SeqCst);
        self.thread.join().expect("session thread panicked")
    }
}

struct Worker {
    session: Session,
    commands: Receiver<Request>,
    ingest: Option<Receiver<Ingest>>,
    pushes: broadcast::Sender<Push>,
    stop: Arc<AtomicBool>,
    options: EngineOptions,
}

impl Worker {
    fn run(mut self) -> Session {
        let period = Duration::from_secs_f64(1.0 / self.session.config().frame_rate as f64);
        let mut next_tick = Instant::now();
        let mut dirty = true;
        while !self.stop.load(Ordering::SeqCst) {
            dirty |= self.drain_ingest();
            // Serve commands until the next frame is due.
            loop {
                let wait = next_tick.saturating_duration_since(Instant::now());
                match self.commands.recv_timeout(wait) {
                    Ok((cmd, reply)) => {
                        let result = execute(&mut self.session, cmd);
                        reply.send(result).ok();
                        dirty = true;
                    }
                    Err(RecvTimeoutError::Timeout) => break,
                    Err(RecvTimeoutError::Disconnected) => {
                        thread::sleep(wait);
                        break;
                    }
                }
            }
            next_tick += period;
            if next_tick < Instant::now() {
                next_tick = Instant::now();
            }
            let playing = self.session.status() == PlaybackStatus::Playing;
            let frame = match self.session.tick() {
                Ok(f) => f,
                Err(e) => {
                    log::error!("tick failed: {e}");
                    self.session.pause();
                    self.session.frame()
                }
            };
            let notes = self.session.take_notifications();
            if (playing || dirty || !notes.is_empty()) && self.pushes.receiver_count() > 0 {
                self.pushes.send(Push::Frame(Arc::new(frame))).ok();
            }
            for n in notes {
                self.pushes.send(Push::Note(n)).ok();
            }
            dirty = false;
            if self.options.exit_when_done
                && self.session.status() == PlaybackStatus::Ended
                && !self.session.relayout_running()
            {
                break;
            }
        }
        self.session.wait_relayout();
        self.session
    }

    fn drain_ingest(&mut self) -> bool {
        let Some(rx) = &self.ingest else { return false };
        let mut any = false;
        for _ in 0..self.options.ingest_batch {
            match rx.try_recv() {
                Ok(msg) => {
                    any = true;
                    if let Err(e) = self.session.ingest(msg) {
                        log::error!("cannot store event: {e}");
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    self.ingest = None;
                    break;
                }
            }
        }
        any
    }
}

/// `POST /api/command`, `GET /api/state`, `GET /api/frame`, `GET /api/stream`.
pub fn router(handle: EngineHandle) -> Router {
    Router::new()
        .route("/api/command", post(command))
        .route("/api/state", get(state))
        .route("/api/frame", get(frame))
        .route("/api/stream", get(stream))
        .with_state(handle)
}

fn respond(result: CommandResult) -> Response {
    match result {
        Ok(reply) => Json(reply.to_json()).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn command(State(h): State<EngineHandle>, body: String) -> Response {
    match parse_command(&body) {
        Ok(cmd) => respond(h.request(cmd).await),
        Err(e) => e.into_response(),
    }
}

async fn state(State(h): State<EngineHandle>) -> Response {
    respond(h.request(Command::GetState).await)
}

async fn frame(State(h): State<EngineHandle>) -> Response {
    respond(h.request(Command::GetFrame).await)
}

async fn stream(State(h): State<EngineHandle>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| serve_stream(h, socket))
}

/// A frame message. Positions and members are only sent when the layout
/// changed since this client's last full frame.
pub fn frame_message(frame: &FrameState, full: bool) -> Value {
    let mut v = serde_json::to_value(frame).expect("frames serialize");
    let obj = v.as_object_mut().expect("frame is an object");
    if !full {
        obj.remove("positions");
        obj.remove("members");
    }
    obj.insert("type".into(), json!("frame"));
    v
}

async fn serve_stream(h: EngineHandle, mut socket: WebSocket) {
    let mut pushes = h.subscribe();
    let mut sent_layout: Option<u64> = None;
    // Start every client with a complete picture.
    if let Ok(Reply::Frame(f)) = h.request(Command::GetFrame).await {
        sent_layout = Some(f.layout_version);
        if send_json(&mut socket, frame_message(&f, true)).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            push = pushes.recv() => {
                let msg = match push {
                    Ok(Push::Frame(f)) => {
                        let full = sent_layout != Some(f.layout_version);
                        sent_layout = Some(f.layout_version);
                        frame_message(&f, full)
                    }
                    Ok(Push::Note(n)) => serde_json::to_value(&n).expect("notifications serialize"),
                    Err(broadcast::error::RecvError::Lagged(skipped)) => {
                        log::debug!("stream client lagged by {skipped} messages");
                        sent_layout = None;
                        continue;
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                };
                if send_json(&mut socket, msg).await.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let result = match parse_command(&text) {
                    Ok(cmd) => h.request(cmd).await,
                    Err(e) => Err(e),
                };
                let mut v = result_json(&result);
                v.as_object_mut().expect("reply is an object").insert("type".into(), json!("reply"));
                if send_json(&mut socket, v).await.is_err() {
                    break;
                }
            }
        }
    }
}

async fn send_json(socket: &mut WebSocket, v: Value) -> Result<(), axum::Error> {
    socket.send(Message::Text(v.to_string())).await
}
