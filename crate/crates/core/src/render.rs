//! SVG and PNG snapshots of frames, and headless frame-sequence export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tiny_skia::{Color, FillRule, Paint, PathBuilder, Pixmap, Stroke, Transform};

use crate::heatmap::{heat_to_color, Palette, Rgb};
use crate::session::{ChunkPolicy, FrameState, Session, SessionConfig, SessionError};

/// Largest canvas we attempt to allocate, in pixels.
const MAX_PIXELS: u64 = 1 << 28;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("cannot allocate a {width}x{height} canvas")]
    AllocationFailure { width: u32, height: u32 },
    #[error("PNG encoding failed: {0}")]
    Encode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("invalid export options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusPolicy {
    Fixed(f64),
    /// `base · √members`, clamped to `[min, max]`.
    ScaledByMembers { base: f64, min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStyle {
    pub width: u32,
    pub height: u32,
    /// Empty border around the unit box, in pixels.
    pub margin: f64,
    pub background: Rgb,
    pub radius: RadiusPolicy,
    pub edge_color: Rgb,
    pub edge_width: f64,
    /// Edge opacity is weight over the frame's heaviest weight, clamped to this range.
    pub edge_opacity: (f64, f64),
    pub palette: Palette,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            width: 1920,
            height: 1080,
            margin: 40.0,
            background: Rgb(0x10, 0x10, 0x18),
            radius: RadiusPolicy::ScaledByMembers {
                base: 3.0,
                min: 2.0,
                max: 30.0,
            },
            edge_color: Rgb(0x9a, 0x9a, 0xb0),
            edge_width: 1.0,
            edge_opacity: (0.05, 1.0),
            palette: Palette::default(),
        }
    }
}

struct EdgeShape {
    from: (f64, f64),
    to: (f64, f64),
    opacity: f64,
}

struct NodeShape {
    center: (f64, f64),
    radius: f64,
    fill: Rgb,
}

/// Resolves a frame into draw order: edges by ascending `(weight, u, v)`,
/// then nodes by ascending `(heat, id)` so hot nodes sit on top.
fn scene(frame: &FrameState, style: &RenderStyle) -> (Vec<EdgeShape>, Vec<NodeShape>) {
    let (w, h) = (style.width as f64, style.height as f64);
    let side = (w - 2.0 * style.margin).min(h - 2.0 * style.margin).max(1.0);
    let (ox, oy) = ((w - side) / 2.0, (h - side) / 2.0);
    let at = |p: [f64; 2]| (ox + p[0] * side, oy + p[1] * side);

    let max_weight = frame.edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let mut edges: Vec<&(u32, u32, f64)> = frame.edges.iter().collect();
    edges.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let (lo, hi) = style.edge_opacity;
    let edges = edges
        .into_iter()
        .map(|&(u, v, wt)| EdgeShape {
            from: at(frame.positions[u as usize]),
            to: at(frame.positions[v as usize]),
            opacity: if max_weight > 0.0 { (wt / max_weight).clamp(lo, hi) } else { lo },
        })
        .collect();

    let mut order: Vec<usize> = (0..frame.positions.len()).collect();
    order.sort_by(|&a, &b| frame.heats[a].total_cmp(&frame.heats[b]).then(a.cmp(&b)));
    let nodes = order
        .into_iter()
        .map(|i| {
            let radius = match style.radius {
                RadiusPolicy::Fixed(r) => r,
                RadiusPolicy::ScaledByMembers { base, min, max } => {
                    let m = frame.members.get(i).copied().unwrap_or(1).max(1) as f64;
                    (base * m.sqrt()).clamp(min, max)
                }
            };
            let heat = if frame.heats[i].is_nan() { 0.0 } else { frame.heats[i].clamp(0.0, 1.0) };
            NodeShape {
                center: at(frame.positions[i]),
                radius,
                fill: heat_to_color(heat, &style.palette).expect("heat clamped to [0, 1]"),
            }
        })
        .collect();
    (edges, nodes)
}

/// Byte-for-byte deterministic SVG for a frame.
pub fn render_svg(frame: &FrameState, style: &RenderStyle) -> String {
    let (edges, nodes) = scene(frame, style);
    let (w, h) = (style.width, style.height);
    let mut s = String::with_capacity(128 + 96 * (edges.len() + nodes.len()));
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"{}\"/>", style.background);
    if !edges.is_empty() {
        let _ = writeln!(s, "<g stroke=\"{}\" stroke-width=\"{:.2}\">", style.edge_color, style.edge_width);
        for e in &edges {
            let _ = writeln!(
                s,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke-opacity=\"{:.3}\"/>",
                e.from.0, e.from.1, e.to.0, e.to.1, e.opacity
            );
        }
        s.push_str("</g>\n");
    }
    for n in &nodes {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"{}\"/>",
            n.center.0, n.center.1, n.radius, n.fill
        );
    }
    s.push_str("</svg>\n");
    s
}

fn color(c: Rgb, alpha: f64) -> Color {
    Color::from_rgba8(c.0, c.1, c.2, (alpha.clamp(0.0, 1.0) * 255.0).round() as u8)
}

/// Rasterizes the same scene as [`render_svg`] and encodes it as PNG.
pub fn render_png(frame: &FrameState, style: &RenderStyle) -> Result<Vec<u8>, RenderError> {
    let fail = RenderError::AllocationFailure {
        width: style.width,
        height: style.height,
    };
    if style.width as u64 * style.height as u64 > MAX_PIXELS {
        return Err(fail);
    }
    let mut pixmap = Pixmap::new(style.width, style.height).ok_or(fail)?;
    pixmap.fill(color(style.background, 1.0));
    let (edges, nodes) = scene(frame, style);

    let mut paint = Paint {
        anti_alias: true,
        ..Paint::default()
    };
    let stroke = Stroke {
        width: style.edge_width as f32,
        ..Stroke::default()
    };
    for e in &edges {
        let mut pb = PathBuilder::new();
        pb.move_to(e.from.0 as f32, e.from.1 as f32);
        pb.line_to(e.to.0 as f32, e.to.1 as f32);
        if let Some(path) = pb.finish() {
            paint.set_color(color(style.edge_color, e.opacity));
            pixmap.stroke_path(&path, &paint, &stroke, Transform::identity(), None);
        }
    }
    for n in &nodes {
        if let Some(path) = PathBuilder::from_circle(n.center.0 as f32, n.center.1 as f32, n.radius as f32) {
            paint.set_color(color(n.fill, 1.0));
            pixmap.fill_path(&path, &paint, FillRule::Winding, Transform::identity(), None);
        }
    }
    pixmap.encode_png().map_err(|e| RenderError::Encode(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    #[default]
    Png,
    Svg,
    Both,
}

impl FromStr for ImageFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "png" => Ok(ImageFormat::Png),
            "svg" => Ok(ImageFormat::Svg),
            "both" => Ok(ImageFormat::Both),
            _ => Err(format!("unknown image format {s:?} (expected png, svg or both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportOptions {
    pub fps: u32,
    /// Frames to write; the log is split evenly across them.
    pub frames: u64,
    /// Relayout after every this many frames.
    pub relayout_every: Option<u64>,
    pub format: ImageFormat,
    pub style: RenderStyle,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            fps: 30,
            frames: 300,
            relayout_every: None,
            format: ImageFormat::Png,
            style: RenderStyle::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub index: u64,
    pub cursor: u64,
    pub layout_version: u64,
    pub files: Vec<String>,
}

/// Everything needed to reproduce an export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub fps: u32,
    pub seed: u64,
    pub events: u64,
    pub events_per_frame: u64,
    pub relayout_every: Option<u64>,
    pub config: SessionConfig,
    pub style: RenderStyle,
    pub frames: Vec<ManifestFrame>,
    /// To be run from the output directory.
    pub encoder_command: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportReport {
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
}

/// The external encoder invocation that turns exported PNGs into a video.
pub fn encoder_command(dir: &Path, fps: u32) -> String {
    let d = dir.display();
    format!("ffmpeg -y -framerate {fps} -i {d}/frame-%06d.png -c:v libx264 -pix_fmt yuv420p {d}/clauseviz.mp4")
}

/// Plays the whole log of `session` from the start into `options.frames`
/// frames, relayouting on schedule, and writes images plus `manifest.json`.
pub fn export_sequence(session: &mut Session, out_dir: &Path, options: &ExportOptions) -> Result<ExportReport, RenderError> {
    if options.frames == 0 || options.fps == 0 {
        return Err(RenderError::InvalidOptions("frames and fps must be positive".into()));
    }
    if options.relayout_every == Some(0) {
        return Err(RenderError::InvalidOptions("relayout interval must be positive".into()));
    }
    fs::create_dir_all(out_dir)?;
    let events = session.log_len();
    let per_frame = events.div_ceil(options.frames).max(1);
    session.stop()?;
    session.set_chunk(ChunkPolicy::Fixed(per_frame));
    session.play();

    let mut frames = Vec::with_capacity(options.frames as usize);
    for i in 0..options.frames {
        let frame = session.tick()?;
        let mut files = Vec::new();
        if matches!(options.format, ImageFormat::Svg | ImageFormat::Both) {
            let name = format!("frame-{i:06}.svg");
            fs::write(out_dir.join(&name), render_svg(&frame, &options.style))?;
            files.push(name);
        }
        if matches!(options.format, ImageFormat::Png | ImageFormat::Both) {
            let name = format!("frame-{i:06}.png");
            fs::write(out_dir.join(&name), render_png(&frame, &options.style)?)?;
            files.push(name);
        }
        frames.push(ManifestFrame {
            index: i,
            cursor: frame.cursor,
            layout_version: frame.layout_version,
            files,
        });
        if options.relayout_every.is_some_and(|n| (i + 1) % n == 0) && i + 1 < options.frames {
            session.trigger_relayout()?;
            session.wait_relayout();
            session.play();
        }
    }
    let manifest = Manifest {
        fps: options.fps,
        seed: session.config().layout.seed,
        events,
        events_per_frame: per_frame,
        relayout_every: options.relayout_every,
        config: session.config().clone(),
        style: options.style.clone(),
        frames,
        // Relative, so the manifest does not depend on where it was written.
        encoder_command: encoder_command(Path::new("."), options.fps),
    };
    let manifest_path = out_dir.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&manifest_path, json)?;
    Ok(ExportReport { manifest_path, manifest })
}
