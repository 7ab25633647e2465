//! Run configuration (TOML).

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use chrono::NaiveDate;
use deimsense_core::detection::DEFAULT_JENKS_CLASSES;
use deimsense_core::temporal::parse_timezone;
use deimsense_core::{GridSpec, SelectionMethod, TemporalSpec, TimeUnit, TripSchema};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    #[serde(default)]
    pub schema: TripSchema,
    #[serde(default)]
    pub time: TimeSection,
    pub train: WindowSection,
    pub validation: Option<WindowSection>,
    /// Observation to analyse; the training window when absent.
    pub detect: Option<WindowSection>,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub min_longitude: f64,
    pub min_latitude: f64,
    pub max_longitude: Option<f64>,
    pub max_latitude: Option<f64>,
    pub num_cols: Option<usize>,
    pub num_rows: Option<usize>,
    #[serde(default = "default_cell")]
    pub cell_width_deg: f64,
    #[serde(default = "default_cell")]
    pub cell_height_deg: f64,
}

fn default_cell() -> f64 {
    deimsense_core::grid::DEFAULT_CELL_DEG
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default)]
    pub unit: TimeUnit,
    /// Zone whose local midnights bound the units; defaults to the schema zone.
    pub timezone: Option<String>,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            unit: TimeUnit::Day,
            timezone: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    /// Glob patterns of trip CSV files, relative to the config file.
    pub trips: Vec<String>,
    pub start: NaiveDate,
    pub units: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub q_min: usize,
    pub q_max: usize,
    #[serde(default)]
    pub method: SelectionMethod,
    /// Skip the sweep and use this sensor count.
    pub q: Option<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            q_min: 1,
            q_max: 20,
            method: SelectionMethod::Deim,
            q: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub top: usize,
    pub classes: usize,
    /// Write Event Index maps for every unit instead of the top ones.
    pub all_days: bool,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            top: 10,
            classes: DEFAULT_JENKS_CLASSES,
            all_days: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("run"),
        }
    }
}

/// A parsed config plus where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub path: PathBuf,
    pub sha256: String,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
        let text = std::str::from_utf8(&bytes).context("config is not UTF-8")?;
        let config: RunConfig =
            toml::from_str(text).with_context(|| format!("parsing config {}", path.display()))?;
        let loaded = LoadedConfig {
            config,
            path: path.to_path_buf(),
            sha256: crate::sha256_hex(&bytes),
        };
        loaded.validate_values()?;
        Ok(loaded)
    }

    fn base_dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    /// Paths are taken relative to the config file.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir().join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output.dir)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let g = &self.config.grid;
        let spec = match (g.max_longitude, g.max_latitude, g.num_cols, g.num_rows) {
            (Some(max_lon), Some(max_lat), None, None) => GridSpec::covering(
                g.min_longitude,
                g.min_latitude,
                max_lon,
                max_lat,
                g.cell_width_deg,
                g.cell_height_deg,
            )?,
            (None, None, Some(cols), Some(rows)) => GridSpec::new(
                g.min_longitude,
                g.min_latitude,
                g.cell_width_deg,
                g.cell_height_deg,
                cols,
                rows,
            )?,
            _ => bail!("[grid] needs either max_longitude/max_latitude or num_cols/num_rows"),
        };
        Ok(spec)
    }

    pub fn window(&self, which: Window) -> Result<&WindowSection> {
        match which {
            Window::Train => Ok(&self.config.train),
            Window::Validation => self
                .config
                .validation
                .as_ref()
                .context("config has no [validation] section"),
            Window::Detect => Ok(self.config.detect.as_ref().unwrap_or(&self.config.train)),
        }
    }

    pub fn temporal(&self, which: Window) -> Result<TemporalSpec> {
        let w = self.window(which)?;
        let zone = match &self.config.time.timezone {
            Some(name) => parse_timezone(name)?,
            None => self.config.schema.timezone,
        };
        Ok(TemporalSpec::new(
            w.start,
            w.units,
            self.config.time.unit,
            zone,
        )?)
    }

    /// Trip files of a window, sorted, after glob expansion.
    pub fn trip_files(&self, which: Window) -> Result<Vec<PathBuf>> {
        let w = self.window(which)?;
        expand_globs(w.trips.iter().map(|p| self.resolve(Path::new(p))))
            .with_context(|| format!("[{which}] trips"))
    }

    fn validate_values(&self) -> Result<()> {
        let c = &self.config;
        self.grid()?;
        for which in [Window::Train, Window::Validation, Window::Detect] {
            if which == Window::Validation && c.validation.is_none() {
                continue;
            }
            let w = self.window(which)?;
            ensure!(!w.trips.is_empty(), "[{which}] trips is empty");
            ensure!(w.units >= 1, "[{which}] units must be at least 1");
            self.temporal(which)?;
        }
        let s = &c.sweep;
        ensure!(
            1 <= s.q_min && s.q_min <= s.q_max,
            "[sweep] needs 1 <= q_min <= q_max, got {}..={}",
            s.q_min,
            s.q_max
        );
        if let Some(q) = s.q {
            ensure!(q >= 1, "[sweep] q must be at least 1");
        }
        ensure!(
            c.validation.is_some() || s.q.is_some(),
            "without a [validation] window the sensor count must be fixed with [sweep] q"
        );
        ensure!(c.report.classes >= 1, "[report] classes must be at least 1");
        ensure!(c.report.top >= 1, "[report] top must be at least 1");
        Ok(())
    }

    /// Fails when any configured trip glob matches nothing.
    pub fn check_inputs(&self) -> Result<()> {
        self.trip_files(Window::Train)?;
        if self.config.validation.is_some() {
            self.trip_files(Window::Validation)?;
        }
        if self.config.detect.is_some() {
            self.trip_files(Window::Detect)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Window {
    Train,
    Validation,
    Detect,
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Window::Train => "train",
            Window::Validation => "validation",
            Window::Detect => "detect",
        })
    }
}

pub fn expand_globs(patterns: impl IntoIterator<Item = PathBuf>) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for pattern in patterns {
        let text = pattern.to_string_lossy().into_owned();
        let before = files.len();
        for entry in glob::glob(&text).with_context(|| format!("bad glob '{text}'"))? {
            let path = entry?;
            if path.is_file() {
                files.push(path);
            }
        }
        ensure!(files.len() > before, "no trip files match '{text}'");
    }
    files.sort();
    files.dedup();
    Ok(files)
}

pub const TEMPLATE: &str = r#"# deimsense run configuration.
# Relative paths are resolved against this file's directory.

[grid]
# South-west corner of the grid in decimal degrees.
min_longitude = -74.05
min_latitude = 40.60
# Either the north-east bounds (the grid is extended to whole cells) ...
max_longitude = -73.75
max_latitude = 40.90
# ... or explicit counts:
# num_cols = 300
# num_rows = 300
# 0.001 degrees is about 110 m north-south and 80 m east-west in New York.
cell_width_deg = 0.001
cell_height_deg = 0.001

[schema]
# Trip CSV column names (header match is case-insensitive).
pickup_longitude = "Start_Lon"
pickup_latitude = "Start_Lat"
pickup_datetime = "Trip_Pickup_DateTime"
dropoff_longitude = "End_Lon"
dropoff_latitude = "End_Lat"
dropoff_datetime = "Trip_Dropoff_DateTime"
# chrono format; with %z the offset in the data is used, otherwise the
# timestamps are local times in `timezone`.
datetime_format = "%Y-%m-%d %H:%M:%S"
timezone = "America/New_York"

[time]
# "day" (local midnight to midnight) or "hour".
unit = "day"
# Zone for unit boundaries; defaults to [schema] timezone.
# timezone = "America/New_York"

[train]
# Glob patterns of trip files; the basis and sensors come from this window.
trips = ["data/2009/*.csv"]
start = "2009-01-01"
units = 365

[validation]
# External window used only to choose the sensor count.
trips = ["data/2010/*.csv"]
start = "2010-01-01"
units = 365

# Observation to analyse for events; the training window when omitted.
# [detect]
# trips = ["data/2009/*.csv"]
# start = "2009-01-01"
# units = 365

[sweep]
q_min = 1
q_max = 20
# "deim" or "naive".
method = "deim"
# Fixed sensor count; skips the sweep (required without [validation]).
# q = 13

[report]
# Ranked days that get an Event Index map.
top = 10
# Jenks classes for the Event Index maps.
classes = 7
all_days = false

[output]
dir = "run"
"#;

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(text: &str) -> Result<LoadedConfig> {
        let dir = tempfile::tempdir()?;
        let path = dir.path().join("c.toml");
        std::fs::write(&path, text)?;
        LoadedConfig::load(&path)
    }

    #[test]
    fn template_parses() {
        let c = load_str(TEMPLATE).unwrap();
        let g = c.grid().unwrap();
        assert_eq!((g.num_cols, g.num_rows), (300, 300));
        assert_eq!(c.config.sweep.q_max, 20);
        assert_eq!(
            c.temporal(Window::Detect).unwrap().start.to_string(),
            "2009-01-01"
        );
    }

    #[test]
    fn rejects_bad_values() {
        let bad_range = TEMPLATE.replace("q_min = 1", "q_min = 30");
        assert!(load_str(&bad_range).is_err());
        let no_validation = TEMPLATE.replace("[validation]", "[ignored]");
        assert!(load_str(&no_validation).is_err());
        let typo = TEMPLATE.replace("top = 10", "tpo = 10");
        assert!(load_str(&typo).is_err());
        let zone = TEMPLATE.replace("\"America/New_York\"", "\"Mars/Olympus\"");
        assert!(load_str(&zone).is_err());
    }

    #[test]
    fn missing_trips_are_reported() {
        let c = load_str(TEMPLATE).unwrap();
        let err = c.check_inputs().unwrap_err();
        assert!(
            format!("{err:#}").contains("no trip files match"),
            "{err:#}"
        );
    }
}
