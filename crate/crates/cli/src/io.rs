use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use nwfr_core::formats::{read_json, write_json, write_text, DatasetFile, Manifest};
use nwfr_core::graph::{read_edge_csv, Network};
use nwfr_core::model::DistanceProvider;
use nwfr_core::FunctionalDataset;
use serde_json::Value;

use crate::cli::{ModelArg, ProviderArgs};
use crate::error::{CliError, CliResult};

pub struct LoadedData {
    pub file: DatasetFile,
    pub dataset: FunctionalDataset,
}

pub fn load_dataset(path: &Path) -> CliResult<LoadedData> {
    let file: DatasetFile = read_json(path)?;
    let dataset = file.to_dataset()?;
    Ok(LoadedData { file, dataset })
}

pub fn load_network(path: &Path, n: usize) -> CliResult<Network> {
    let f = File::open(path).map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(read_edge_csv(BufReader::new(f), Some(n))?)
}

/// One coordinate row per vertex; fields split on commas or whitespace, `#` starts a comment.
pub fn load_coordinates(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).map(str::parse).collect();
        match row {
            Ok(r) => rows.push(r),
            // a non-numeric first line is a header
            Err(_) if rows.is_empty() && i == 0 => continue,
            Err(e) => return Err(CliError::Data(format!("{} line {}: {e}", path.display(), i + 1))),
        }
    }
    Ok(rows)
}

/// Network, edge file and partition source for one invocation.
pub struct ProviderSetup {
    pub provider: DistanceProvider,
    pub network: Option<Network>,
}

pub fn build_provider(args: &ProviderArgs, data: &LoadedData) -> CliResult<ProviderSetup> {
    let n = data.dataset.n_vertices();
    let network = args.network.as_deref().map(|p| load_network(p, n)).transpose()?;
    let provider = match args.model {
        ModelArg::Nwfr => {
            let g = network
                .as_ref()
                .ok_or_else(|| CliError::Usage("--network is required for --model nwfr".into()))?;
            if g.n_vertices() != n {
                return Err(CliError::Data(format!("network has {} vertices, dataset {n}", g.n_vertices())));
            }
            DistanceProvider::NetworkGeodesic(g.geodesic_matrix())
        }
        ModelArg::Gwfr => {
            let coords = match &args.coords {
                Some(p) => load_coordinates(p)?,
                None => data
                    .file
                    .coordinates
                    .clone()
                    .ok_or_else(|| CliError::Usage("coordinates required for --model gwfr (pass --coords)".into()))?,
            };
            if coords.len() != n {
                return Err(CliError::Data(format!("{} coordinate rows for {n} vertices", coords.len())));
            }
            DistanceProvider::spatial(coords).map_err(|e| CliError::Data(e.to_string()))?
        }
        ModelArg::Classic => DistanceProvider::Uniform,
    };
    Ok(ProviderSetup { provider, network })
}

/// Collects written artifacts and finishes with `manifest.json`.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::Data(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        write_json(&self.root.join(name), value)?;
        self.written.push(name.into());
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: &str) -> CliResult<()> {
        write_text(&self.root.join(name), text)?;
        self.written.push(name.into());
        Ok(())
    }

    /// Buffers a writer-based export into a file.
    pub fn with_writer(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> CliResult<()> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| CliError::Data(format!("{name}: {e}")))?;
        let text = String::from_utf8(buf).map_err(|e| CliError::Data(e.to_string()))?;
        self.text(name, &text)
    }

    pub fn finish(mut self, command: &str, config: Value) -> CliResult<PathBuf> {
        let manifest = Manifest::new(command, config, self.written.clone());
        let path = self.root.join("manifest.json");
        write_json(&path, &manifest)?;
        self.written.push("manifest.json".into());
        Ok(path)
    }
}
