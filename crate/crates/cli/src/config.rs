//! Configuration file, command-line overrides and run metadata.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Args;
use focusdet::pipeline::PipelineConfig;
use focusdet::scenes::{OracleSpec, SceneSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// `[pipeline]`, `[oracle]` and `[scene]` tables; every key optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub pipeline: PipelineConfig,
    pub oracle: OracleSpec,
    pub scene: SceneSpec,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML file with [pipeline], [oracle] and [scene] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; chosen from the clock and recorded when omitted.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub grid_rows: Option<usize>,
    #[arg(long, global = true)]
    pub grid_cols: Option<usize>,
    /// Pixels added around each cluster envelope.
    #[arg(long, global = true)]
    pub margin: Option<f64>,
    /// Minimum visible fraction for a box to stay in a crop.
    #[arg(long, global = true)]
    pub keep_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub detector_width: Option<u32>,
    #[arg(long, global = true)]
    pub detector_height: Option<u32>,
    #[arg(long, global = true)]
    pub nms_iou: Option<f64>,
    #[arg(long, global = true)]
    pub ibs_region_iou: Option<f64>,
    #[arg(long, global = true)]
    pub ibs_box_iou: Option<f64>,
    /// NMS and IBS across classes.
    #[arg(long, global = true)]
    pub class_agnostic: bool,
    #[arg(long, global = true)]
    pub em_max_iterations: Option<usize>,
    #[arg(long, global = true)]
    pub em_tolerance: Option<f64>,
    #[arg(long, global = true)]
    pub em_restarts: Option<usize>,
    #[arg(long, global = true)]
    pub max_dets: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    pub file: ConfigFile,
    pub seed: u64,
    pub seed_source: SeedSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    Config,
    Auto,
}

fn clock_seed() -> u64 {
    let d = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    d.as_secs() ^ u64::from(d.subsec_nanos()).rotate_left(32)
}

fn read_config(path: &Path) -> Result<(ConfigFile, bool), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let file: ConfigFile =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))?;
    let raw: toml::Table = toml::from_str(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    let has_seed = raw
        .get("pipeline")
        .and_then(|t| t.as_table())
        .is_some_and(|t| t.contains_key("seed"));
    Ok((file, has_seed))
}

impl ConfigArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<Settings, CliError> {
        let (mut file, file_seed) = match &self.config {
            Some(p) => read_config(p)?,
            None => (ConfigFile::default(), false),
        };
        let p = &mut file.pipeline;
        macro_rules! over {
            ($($f:ident => $t:ident),* $(,)?) => {$(
                if let Some(v) = self.$f { p.$t = v; }
            )*};
        }
        over!(
            grid_rows => grid_rows,
            grid_cols => grid_cols,
            margin => margin,
            keep_threshold => keep_threshold,
            detector_width => detector_width,
            detector_height => detector_height,
            nms_iou => nms_iou,
            ibs_region_iou => ibs_region_iou,
            ibs_box_iou => ibs_box_iou,
            em_max_iterations => em_max_iterations,
            em_tolerance => em_tolerance,
            em_restarts => em_restarts,
            max_dets => max_dets,
        );
        if self.class_agnostic {
            p.per_class = false;
        }
        let (seed, seed_source) = match self.seed {
            Some(s) => (s, SeedSource::Flag),
            None if file_seed => (p.seed, SeedSource::Config),
            None => (clock_seed(), SeedSource::Auto),
        };
        p.seed = seed;
        p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        file.oracle.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Settings {
            file,
            seed,
            seed_source,
        })
    }
}

/// Provenance stored alongside every JSON output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub seed_source: String,
    pub config: PipelineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneSpec>,
}

impl Settings {
    pub fn meta(&self, command: &str) -> RunMeta {
        RunMeta {
            tool: "focusdet".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: self.seed,
            seed_source: serde_json::to_value(self.seed_source)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
            config: self.file.pipeline,
            oracle: None,
            scene: None,
        }
    }

    pub fn oracle(&self) -> OracleSpec {
        OracleSpec {
            rng_seed: self.seed,
            ..self.file.oracle.clone()
        }
    }

    pub fn scene(&self) -> SceneSpec {
        SceneSpec {
            rng_seed: self.seed,
            ..self.file.scene.clone()
        }
    }

    pub fn announce_seed(&self) {
        if self.seed_source == SeedSource::Auto {
            eprintln!("focusdet: no --seed given, using {}", self.seed);
        }
    }
}
