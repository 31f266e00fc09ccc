//! Layered settings: command-line flag over `CLAUSEVIZ_*` environment
//! variable over JSON config file over built-in default.
//!
//! Every tunable lives in [`Layer`] once; its flag is `--field-name`, its
//! environment variable `CLAUSEVIZ_FIELD_NAME` and its config-file key
//! `field_name`.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clauseviz_core::contraction::ContractionConfig;
use clauseviz_core::graph::{ReductionKind, WeightFunction};
use clauseviz_core::heatmap::{HeatConfig, HeatMode, Palette};
use clauseviz_core::layout::LayoutConfig;
use clauseviz_core::render::RenderStyle;
use clauseviz_core::session::{ChunkPolicy, SessionConfig, SpillConfig};
use serde::de::{DeserializeOwned, Error as _};
use serde::{Deserialize, Deserializer};
use thiserror::Error;

pub const ENV_PREFIX: &str = "CLAUSEVIZ_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config file {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("environment variable {key}: {message}")]
    Env { key: String, message: String },
    #[error("invalid settings: {0}")]
    Invalid(String),
}

/// Accepts either the value's native JSON form or a string in flag syntax,
/// so `"heat_mode": "decay"` and `"chunk": "fixed:100"` both work.
pub(crate) fn lenient<'de, D, T>(d: D) -> Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr + DeserializeOwned,
    T::Err: Display,
{
    match Option::<serde_json::Value>::deserialize(d)? {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(serde_json::Value::String(s)) => s.parse().map(Some).map_err(D::Error::custom),
        Some(other) => T::deserialize(other).map(Some).map_err(D::Error::custom),
    }
}

fn env_key(field: &str) -> String {
    format!("{ENV_PREFIX}{}", field.to_ascii_uppercase())
}

macro_rules! layer {
    ($( $(#[doc = $doc:literal])* $name:ident : $ty:ty, )*) => {
        /// One source of settings. Unset fields fall through to the layer below.
        #[derive(Debug, Clone, Default, PartialEq, clap::Args, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct Layer {
            $(
                $(#[doc = $doc])*
                #[arg(long, global = true, help_heading = "Settings")]
                #[serde(default, deserialize_with = "lenient")]
                pub $name: Option<$ty>,
            )*
        }

        impl Layer {
            /// Field names, which double as config-file keys.
            pub const KEYS: &'static [&'static str] = &[$(stringify!($name)),*];

            /// `self` wins wherever it is set.
            pub fn over(self, lower: Layer) -> Layer {
                Layer { $( $name: self.$name.or(lower.$name), )* }
            }

            pub fn from_env(lookup: impl Fn(&str) -> Option<String>) -> Result<Layer, ConfigError> {
                let mut layer = Layer::default();
                $(
                    let key = env_key(stringify!($name));
                    if let Some(raw) = lookup(&key) {
                        let parsed = raw.trim().parse::<$ty>().map_err(|e| ConfigError::Env {
                            key: key.clone(),
                            message: e.to_string(),
                        })?;
                        layer.$name = Some(parsed);
                    }
                )*
                Ok(layer)
            }
        }
    };
}

layer! {
    /// Hyperedge reduction: ring or clique.
    reduction: ReductionKind,
    /// Edge weight by clause size: inverse-size-minus-one, inverse-size or exponential.
    weight_fn: WeightFunction,
    /// Heat mode: window or decay.
    heat_mode: HeatMode,
    /// Heat window width (window mode) or decay span in events (decay mode).
    heat_k: usize,
    /// Comma-separated #RRGGBB colour stops from cold to hot.
    palette: Palette,
    /// Whether deleted clauses also add heat (true or false).
    heat_deletions: bool,
    /// Contract until at most this many supernodes remain.
    contract_target: u32,
    /// Maximum contraction levels.
    contract_levels: usize,
    /// Label-propagation rounds per contraction level.
    contract_rounds: usize,
    /// Seed for contraction and layout.
    seed: u64,
    /// Layout iterations.
    layout_iterations: usize,
    /// Barnes–Hut opening angle.
    layout_theta: f64,
    /// Spring strength multiplier.
    layout_attraction: f64,
    /// Pull toward the centroid.
    layout_gravity: f64,
    /// Initial step cap as a fraction of the bounding-box diagonal.
    layout_cooling: f64,
    /// Wall-clock cap on a layout run in milliseconds (non-deterministic).
    layout_budget_ms: u64,
    /// Events between state checkpoints.
    checkpoint_interval: u64,
    /// Frames per second.
    fps: u32,
    /// Events per frame: drain or fixed:N.
    chunk: ChunkPolicy,
    /// Spill old events to this file instead of keeping them all in memory.
    spill_path: PathBuf,
    /// Events kept in memory when spilling.
    spill_events: usize,
    /// Canvas width in pixels.
    width: u32,
    /// Canvas height in pixels.
    height: u32,
}

impl Layer {
    pub fn from_json(text: &str, path: &Path) -> Result<Layer, ConfigError> {
        serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn from_file(path: &Path) -> Result<Layer, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Layer::from_json(&text, path)
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub session: SessionConfig,
    pub style: RenderStyle,
}

impl Settings {
    /// Stacks `flags` over the environment over the optional config file.
    pub fn resolve(
        flags: Layer,
        env: impl Fn(&str) -> Option<String>,
        config_file: Option<&Path>,
    ) -> Result<Settings, ConfigError> {
        let file = match config_file {
            Some(p) => Layer::from_file(p)?,
            None => Layer::default(),
        };
        Settings::from_layer(flags.over(Layer::from_env(env)?.over(file)))
    }

    pub fn from_layer(l: Layer) -> Result<Settings, ConfigError> {
        let d = SessionConfig::default();
        let heat = HeatConfig {
            mode: l.heat_mode.unwrap_or(d.heat.mode),
            k: l.heat_k.unwrap_or(d.heat.k),
            palette: l.palette.clone().unwrap_or(d.heat.palette.clone()),
            include_deletions: l.heat_deletions.unwrap_or(d.heat.include_deletions),
        };
        let seed = l.seed.unwrap_or(0);
        let contraction = ContractionConfig {
            target_size: l.contract_target.unwrap_or(d.contraction.target_size),
            max_levels: l.contract_levels.unwrap_or(d.contraction.max_levels),
            max_rounds: l.contract_rounds.unwrap_or(d.contraction.max_rounds),
            seed,
            vote: d.contraction.vote,
        };
        let layout = LayoutConfig {
            iterations: l.layout_iterations.unwrap_or(d.layout.iterations),
            seed,
            attraction: l.layout_attraction.unwrap_or(d.layout.attraction),
            theta: l.layout_theta.unwrap_or(d.layout.theta),
            cooling: l.layout_cooling.unwrap_or(d.layout.cooling),
            gravity: l.layout_gravity.unwrap_or(d.layout.gravity),
            time_budget_ms: l.layout_budget_ms.or(d.layout.time_budget_ms),
        };
        let spill = match (l.spill_path, l.spill_events) {
            (Some(path), n) => Some(SpillConfig {
                path,
                max_in_memory: n.unwrap_or(1_000_000),
            }),
            (None, Some(_)) => return Err(ConfigError::Invalid("spill_events needs spill_path".into())),
            (None, None) => None,
        };
        let session = SessionConfig {
            reduction: l.reduction.unwrap_or(d.reduction),
            weights: l.weight_fn.unwrap_or(d.weights),
            heat,
            contraction,
            layout,
            checkpoint_interval: l.checkpoint_interval.unwrap_or(d.checkpoint_interval),
            frame_rate: l.fps.unwrap_or(d.frame_rate),
            chunk: l.chunk.unwrap_or(d.chunk),
            spill,
        };
        session.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let ds = RenderStyle::default();
        let style = RenderStyle {
            width: l.width.unwrap_or(ds.width),
            height: l.height.unwrap_or(ds.height),
            palette: session.heat.palette.clone(),
            ..ds
        };
        if style.width == 0 || style.height == 0 {
            return Err(ConfigError::Invalid("canvas size must be positive".into()));
        }
        Ok(Settings { session, style })
    }
}
