//! Command-line front end: `produce`, `view`, `render` and `transform`.
//!
//! Exit status is 0 on success, 1 on a usage or configuration error and 2 on
//! a runtime failure. Diagnostics go to standard error; `--stats` prints one
//! JSON object to standard output.

pub mod api;
pub mod config;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clauseviz_core::cnf::{ClauseEvent, CnfFormula};
use clauseviz_core::contraction::build_hierarchy;
use clauseviz_core::formats::{parse_dimacs, parse_drat, FormatError};
use clauseviz_core::graph::InteractionGraph;
use clauseviz_core::layout::{layout, layout_hierarchy, LayoutError, Positions};
use clauseviz_core::render::{encoder_command, export_sequence, ExportOptions, ImageFormat, RenderError};
use clauseviz_core::session::{Session, SessionError};
use clauseviz_core::wire::{consumer_listener, producer_session, spawn_solver, ListenerOptions, NetError, ProducerOptions};
use serde_json::{json, Value};
use thiserror::Error;

use crate::api::{Engine, EngineOptions};
use crate::config::{ConfigError, Layer, Settings};

#[derive(Debug, Parser)]
#[command(name = "clauseviz", version, about = "Animate learned clauses on a SAT formula's variable interaction graph")]
pub struct Cli {
    /// More log output on standard error (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Print run statistics as JSON on standard output.
    #[arg(long, global = true)]
    pub stats: bool,
    /// JSON file with settings; keys are the setting flag names with underscores.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Layer,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stream a DRAT proof, or a solver's DRAT output, to a viewer.
    Produce(ProduceArgs),
    /// Receive a clause stream and serve the control API.
    View(ViewArgs),
    /// Write a frame sequence for a formula and proof, without a viewer.
    Render(RenderArgs),
    /// Export the interaction graph, its contraction and a layout.
    Transform(TransformArgs),
}

#[derive(Debug, Args)]
pub struct ProduceArgs {
    /// DRAT proof to replay.
    #[arg(long, value_name = "FILE", required_unless_present = "solver", conflicts_with = "solver")]
    pub proof: Option<PathBuf>,
    /// Solver command line, run through `sh -c`, whose stdout carries DRAT lines.
    #[arg(long, value_name = "CMD")]
    pub solver: Option<String>,
    #[arg(long, value_name = "HOST:PORT", default_value = "127.0.0.1:7700")]
    pub connect: String,
    /// Events per second; 0 sends as fast as the viewer accepts.
    #[arg(long, default_value_t = 0.0)]
    pub rate: f64,
    /// Variable count announced to the viewer.
    #[arg(long, default_value_t = 0)]
    pub num_vars: u64,
}

#[derive(Debug, Args)]
pub struct ViewArgs {
    #[arg(long, value_name = "FILE")]
    pub cnf: PathBuf,
    /// Replay this proof instead of listening for a producer.
    #[arg(long, value_name = "FILE")]
    pub proof: Option<PathBuf>,
    /// Address producers connect to.
    #[arg(long, value_name = "HOST:PORT", default_value = "127.0.0.1:7700")]
    pub listen: String,
    /// Address of the HTTP/WebSocket control API.
    #[arg(long, value_name = "HOST:PORT", default_value = "127.0.0.1:7800")]
    pub api: String,
    /// Start paused instead of playing.
    #[arg(long)]
    pub paused: bool,
    /// Quit once the producer has finished and playback reached the end.
    #[arg(long)]
    pub exit_when_done: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long, value_name = "FILE")]
    pub cnf: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub proof: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub frames: u64,
    /// Relayout after every N frames.
    #[arg(long, value_name = "N")]
    pub relayout_every: Option<u64>,
    /// png, svg or both.
    #[arg(long, default_value = "png")]
    pub format: ImageFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphFormat {
    /// `u v weight` lines.
    Edges,
    /// Graphviz.
    Dot,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long, value_name = "FILE")]
    pub cnf: PathBuf,
    /// Apply this proof's additions and deletions before exporting.
    #[arg(long, value_name = "FILE")]
    pub proof: Option<PathBuf>,
    /// Graph output; standard output if omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GraphFormat::Edges)]
    pub format: GraphFormat,
    /// Hierarchy level to export; 0 is the variable graph.
    #[arg(long, default_value_t = 0)]
    pub level: usize,
    /// Write one `level-N.map` file per contraction step into this directory.
    #[arg(long, value_name = "DIR")]
    pub maps: Option<PathBuf>,
    /// Lay out the exported level and write `node x y` lines here.
    #[arg(long, value_name = "FILE")]
    pub positions: Option<PathBuf>,
    /// Start the layout from these positions instead of the multilevel scheme.
    #[arg(long, value_name = "FILE", requires = "positions")]
    pub warm_start: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I, env: impl Fn(&str) -> Option<String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return code;
        }
    };
    init_logging(cli.verbose);
    match execute(cli, env) {
        Ok(stats) => {
            if let Some(stats) = stats {
                println!("{stats}");
            }
            0
        }
        Err(e) => {
            eprintln!("clauseviz: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).target(env_logger::Target::Stderr).try_init().ok();
}

/// Runs the parsed command; returns the `--stats` object if one was requested.
pub fn execute(cli: Cli, env: impl Fn(&str) -> Option<String>) -> Result<Option<Value>, CliError> {
    let settings = Settings::resolve(cli.settings, env, cli.config.as_deref())?;
    let start = Instant::now();
    let mut stats = match cli.command {
        Command::Produce(a) => produce(a)?,
        Command::View(a) => view(a, &settings)?,
        Command::Render(a) => render(a, &settings)?,
        Command::Transform(a) => transform(a, &settings)?,
    };
    stats["seconds"] = json!(start.elapsed().as_secs_f64());
    Ok(cli.stats.then_some(stats))
}

pub fn load_formula(path: &Path) -> Result<CnfFormula, CliError> {
    let file = File::open(path).map_err(io_err(format!("cannot open {}", path.display())))?;
    let parsed = parse_dimacs(BufReader::new(file)).map_err(|source| CliError::Format {
        path: path.to_path_buf(),
        source,
    })?;
    for w in &parsed.warnings {
        log::warn!("{}: {w:?}", path.display());
    }
    Ok(parsed.formula)
}

pub fn load_proof(path: &Path) -> Result<Vec<ClauseEvent>, CliError> {
    let file = File::open(path).map_err(io_err(format!("cannot open {}", path.display())))?;
    parse_drat(BufReader::new(file))
        .enumerate()
        .map(|(i, step)| {
            step.map(|s| s.into_event(i as u64)).map_err(|source| CliError::Format {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

fn produce(a: ProduceArgs) -> Result<Value, CliError> {
    let opts = ProducerOptions {
        rate: Some(a.rate).filter(|r| *r > 0.0),
        num_variables_hint: a.num_vars,
    };
    let report = match (&a.proof, &a.solver) {
        (Some(path), _) => {
            let file = File::open(path).map_err(io_err(format!("cannot open {}", path.display())))?;
            producer_session(parse_drat(BufReader::new(file)), a.connect.as_str(), opts)?
        }
        (None, Some(cmd)) => {
            let mut solver = spawn_solver(cmd).map_err(io_err(format!("cannot start {cmd:?}")))?;
            let report = producer_session(&mut solver, a.connect.as_str(), opts)?;
            let status = solver.wait().map_err(io_err("solver"))?;
            log::info!("solver exited with {status}");
            report
        }
        (None, None) => return Err(CliError::Usage("one of --proof or --solver is required".into())),
    };
    log::info!("sent {} events to {}", report.events_sent, a.connect);
    Ok(json!({ "events_sent": report.events_sent }))
}

fn session_stats(s: &Session) -> Value {
    json!({
        "events": s.log_len(),
        "cursor": s.cursor(),
        "frames": s.frame_index(),
        "layout_version": s.layout_version(),
        "variables": s.graph().graph.num_nodes(),
        "live_clauses": s.graph().live.len(),
        "unknown_deletes": s.graph().unknown_deletes,
    })
}

fn view(a: ViewArgs, settings: &Settings) -> Result<Value, CliError> {
    let formula = load_formula(&a.cnf)?;
    let (session, ingest, listener) = match &a.proof {
        Some(p) => (Session::replay(&formula, load_proof(p)?, settings.session.clone())?, None, None),
        None => {
            let session = Session::new(&formula, settings.session.clone())?;
            let (tx, rx) = mpsc::sync_channel(1 << 16);
            let listener = consumer_listener(a.listen.as_str(), tx, ListenerOptions::default())?;
            eprintln!("listening for producers on {}", listener.local_addr());
            (session, Some(rx), Some(listener))
        }
    };
    let mut session = session;
    if !a.paused {
        session.play();
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(io_err("cannot start runtime"))?;
    let mut engine = Engine::start(
        session,
        ingest,
        EngineOptions {
            exit_when_done: a.exit_when_done,
            ..Default::default()
        },
    );
    let finished = engine.finished();
    let app = api::router(engine.handle());
    let served: Result<(), CliError> = runtime.block_on(async {
        let tcp = tokio::net::TcpListener::bind(a.api.as_str())
            .await
            .map_err(|e| CliError::Net(NetError::BindFailure(e)))?;
        let addr: SocketAddr = tcp.local_addr().map_err(io_err("control API"))?;
        eprintln!("control API on http://{addr}/api");
        let shutdown = async move {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => log::info!("interrupted"),
                _ = finished => log::info!("playback finished"),
            }
        };
        axum::serve(tcp, app)
            .with_graceful_shutdown(shutdown)
            .await
            .map_err(io_err("control API"))
    });
    let session = engine.shutdown();
    if let Some(l) = listener {
        l.shutdown();
    }
    served?;
    Ok(session_stats(&session))
}

fn render(a: RenderArgs, settings: &Settings) -> Result<Value, CliError> {
    let formula = load_formula(&a.cnf)?;
    let events = load_proof(&a.proof)?;
    let mut session = Session::replay(&formula, events, settings.session.clone())?;
    let options = ExportOptions {
        fps: settings.session.frame_rate,
        frames: a.frames,
        relayout_every: a.relayout_every,
        format: a.format,
        style: settings.style.clone(),
    };
    let report = export_sequence(&mut session, &a.out, &options)?;
    if a.format != ImageFormat::Svg {
        eprintln!("encode with: {}", encoder_command(&a.out, options.fps));
    }
    let mut stats = session_stats(&session);
    stats["manifest"] = json!(report.manifest_path);
    stats["frames_written"] = json!(report.manifest.frames.len());
    stats["events_per_frame"] = json!(report.manifest.events_per_frame);
    Ok(stats)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(io_err(format!("cannot create {}", path.display())))
}

fn transform(a: TransformArgs, settings: &Settings) -> Result<Value, CliError> {
    let cfg = &settings.session;
    let formula = load_formula(&a.cnf)?;
    let mut ig = InteractionGraph::from_formula(&formula, cfg.reduction, cfg.weights);
    if let Some(p) = &a.proof {
        for e in load_proof(p)? {
            ig.apply(&e);
        }
    }
    let hierarchy = build_hierarchy(&ig.rebuild(), &cfg.contraction);
    if a.level >= hierarchy.depth() {
        return Err(CliError::Usage(format!(
            "--level {} but the hierarchy has only levels 0..{}",
            a.level,
            hierarchy.depth() - 1
        )));
    }
    let graph = &hierarchy.levels()[a.level];

    let write_graph = |out: &mut dyn Write| -> io::Result<()> {
        match a.format {
            GraphFormat::Edges => graph.write_edge_list(&mut *out, 1)?,
            GraphFormat::Dot => graph.write_dot(&mut *out, 1)?,
        }
        out.flush()
    };
    match &a.out {
        Some(path) => write_graph(&mut create(path)?),
        None => write_graph(&mut io::stdout().lock()),
    }
    .map_err(io_err("cannot write graph"))?;

    if let Some(dir) = &a.maps {
        fs::create_dir_all(dir).map_err(io_err(format!("cannot create {}", dir.display())))?;
        for level in 0..hierarchy.depth() - 1 {
            let path = dir.join(format!("level-{level}.map"));
            let mut out = create(&path)?;
            hierarchy
                .write_map(level, &mut out)
                .and_then(|_| out.flush())
                .map_err(io_err(format!("cannot write {}", path.display())))?;
        }
    }

    let mut iterations = None;
    if let Some(path) = &a.positions {
        let outcome = match &a.warm_start {
            Some(ws) => {
                let file = File::open(ws).map_err(io_err(format!("cannot open {}", ws.display())))?;
                let warm = Positions::read_text(BufReader::new(file))?;
                layout(graph, &cfg.layout, Some(&warm))?
            }
            None => layout_hierarchy(&hierarchy, &cfg.layout, a.level)?,
        };
        iterations = Some(outcome.iterations_run);
        let mut out = create(path)?;
        outcome
            .positions
            .write_text(&mut out)
            .and_then(|_| out.flush())
            .map_err(io_err(format!("cannot write {}", path.display())))?;
    }

    Ok(json!({
        "variables": ig.graph.num_nodes(),
        "live_clauses": ig.live.len(),
        "levels": hierarchy.levels().iter().map(|g| g.num_nodes()).collect::<Vec<_>>(),
        "nodes": graph.num_nodes(),
        "edges": graph.edge_count(),
        "layout_iterations": iterations,
    }))
}
