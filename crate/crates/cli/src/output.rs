//! Input resolution, output files and the run manifest.

use crate::error::{CliError, CliResult};
use crate::plot;
use bathsmith_core::csvio::TOOL_VERSION;
use bathsmith_core::model::{parse_mode_table, parse_model};
use bathsmith_core::{data, ElectronicSystem, SpectralDensityModel};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Prefix selecting a bundled dataset instead of a file, e.g. `bundled:fmo_full`.
pub const BUNDLED: &str = "bundled:";

/// Exact bytes of an input, with where they came from.
pub struct Input {
    pub name: String,
    pub text: String,
    /// Directory for resolving relative references inside the input.
    pub dir: Option<PathBuf>,
}

impl Input {
    pub fn read(spec: &str) -> CliResult<Input> {
        Self::read_relative(spec, None)
    }

    pub fn read_relative(spec: &str, base: Option<&Path>) -> CliResult<Input> {
        if let Some(name) = spec.strip_prefix(BUNDLED) {
            let file = if name.contains('.') { name.to_string() } else { format!("{name}.json") };
            let text = data::load_text(&file).map_err(|e| CliError::Input(format!("{spec}: {e}")))?;
            return Ok(Input { name: spec.to_string(), text, dir: None });
        }
        let path = match base {
            Some(b) if Path::new(spec).is_relative() => b.join(spec),
            _ => PathBuf::from(spec),
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Ok(Input { name: path.display().to_string(), dir: path.parent().map(Path::to_path_buf), text })
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }

    pub fn model(&self) -> CliResult<SpectralDensityModel> {
        let parsed = if self.name.to_ascii_lowercase().ends_with(".csv") {
            let stem = Path::new(&self.name).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            parse_mode_table(&self.text, &stem, None)
        } else {
            parse_model(&self.text)
        };
        parsed.map_err(|e| CliError::Input(format!("{}: {e}", self.name)))
    }

    pub fn system(&self) -> CliResult<ElectronicSystem> {
        ElectronicSystem::parse(&self.text).map_err(|e| CliError::Input(format!("{}: {e}", self.name)))
    }
}

#[derive(Debug, Serialize)]
struct InputRecord {
    name: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a [String],
    inputs: &'a [InputRecord],
    seeds: &'a [u64],
    threads: usize,
    wall_time_s: f64,
    outputs: &'a [String],
}

/// Output directory of one invocation; records everything for the manifest.
pub struct Run {
    dir: PathBuf,
    plot: bool,
    command: Vec<String>,
    inputs: Vec<InputRecord>,
    seeds: Vec<u64>,
    outputs: Vec<String>,
    started: Instant,
}

impl Run {
    pub fn new(dir: &Path, plot: bool) -> CliResult<Run> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Run {
            dir: dir.to_path_buf(),
            plot,
            command: std::env::args().collect(),
            inputs: Vec::new(),
            seeds: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn input(&mut self, input: &Input) {
        self.inputs.push(InputRecord { name: input.name.clone(), sha256: input.sha256() });
    }

    pub fn seed(&mut self, seed: u64) {
        if !self.seeds.contains(&seed) {
            self.seeds.push(seed);
        }
    }

    pub fn write(&mut self, name: &str, text: &str) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes a CSV and, with `--plot`, an SVG of the given columns next to it.
    pub fn write_csv(&mut self, name: &str, text: &str, series: &[plot::Series], x_label: &str, y_label: &str) -> CliResult<()> {
        self.write(name, text)?;
        if self.plot {
            let svg = plot::line_plot(name, series, x_label, y_label);
            self.write(&name.replace(".csv", ".svg"), &svg)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> CliResult<PathBuf> {
        self.outputs.push("manifest.json".into());
        let m = Manifest {
            tool: "bathsmith",
            version: TOOL_VERSION,
            command: &self.command,
            inputs: &self.inputs,
            seeds: &self.seeds,
            threads: rayon::current_num_threads(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: &self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Numeric(e.to_string()))?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}
