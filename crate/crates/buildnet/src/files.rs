//! Reading and writing the on-disk artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use buildnet_core::catalog::BuildCatalog;
use buildnet_core::encoder::{Dataset, EncoderContext, GameRecord};
use buildnet_core::event_log::EventLog;
use buildnet_core::nn::Model;
use buildnet_core::norms::NormalizationTable;
use serde::Serialize;

use crate::parallel::par_map;

pub const EVENTS_EXTENSION: &str = "events";

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// The given catalog file, or the built-in one.
pub fn load_catalog(path: Option<&Path>) -> Result<BuildCatalog> {
    match path {
        None => Ok(BuildCatalog::default_pvt()),
        Some(p) => BuildCatalog::parse(&read_text(p)?).with_context(|| format!("parsing {}", p.display())),
    }
}

pub fn load_norms(path: Option<&Path>, catalog: &BuildCatalog) -> Result<NormalizationTable> {
    match path {
        None => Ok(NormalizationTable::default_for(catalog)),
        Some(p) => NormalizationTable::parse(&read_text(p)?, catalog).with_context(|| format!("parsing {}", p.display())),
    }
}

pub fn load_context(catalog: Option<&Path>, norms: Option<&Path>) -> Result<EncoderContext> {
    let catalog = load_catalog(catalog)?;
    let norms = load_norms(norms, &catalog)?;
    Ok(EncoderContext::new(catalog, norms))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Dataset::from_bytes(&bytes).with_context(|| format!("decoding dataset {}", path.display()))
}

pub fn save_dataset(path: &Path, d: &Dataset) -> Result<()> {
    fs::write(path, d.to_bytes()).with_context(|| format!("writing {}", path.display()))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Model::from_bytes(&bytes).with_context(|| format!("decoding model {}", path.display()))
}

pub fn save_model(path: &Path, m: &Model) -> Result<()> {
    fs::write(path, m.to_bytes()).with_context(|| format!("writing {}", path.display()))
}

pub fn save_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// `*.events` files directly inside `dir`, sorted by file name.
pub fn list_event_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == EVENTS_EXTENSION))
        .collect();
    files.sort();
    Ok(files)
}

pub fn write_corpus(dir: &Path, logs: &[EventLog], catalog: &BuildCatalog) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for log in logs {
        let path = dir.join(format!("{}.{EVENTS_EXTENSION}", log.game_id));
        fs::write(&path, log.to_text(catalog)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rejection {
    pub file: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    pub dataset: Dataset,
    pub rejected: Vec<Rejection>,
}

/// Parses and extracts every log in `dir`. Logs that fail are reported and
/// skipped; a directory without any `*.events` file is an error.
pub fn extract_corpus(dir: &Path, ctx: &EncoderContext, jobs: usize) -> Result<Extraction> {
    let files = list_event_files(dir)?;
    if files.is_empty() {
        bail!("no .{EVENTS_EXTENSION} files in {}", dir.display());
    }
    let results = par_map(&files, jobs, |path| -> std::result::Result<GameRecord, String> {
        let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
        let log = EventLog::parse(&text, &ctx.catalog).map_err(|e| e.to_string())?;
        GameRecord::from_log(&log, ctx).map_err(|e| e.to_string())
    });
    let mut dataset = Dataset::default();
    let mut rejected = Vec::new();
    for (path, result) in files.iter().zip(results) {
        match result {
            Ok(game) => dataset.games.push(game),
            Err(reason) => {
                let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                log::warn!("rejected {file}: {reason}");
                rejected.push(Rejection { file, reason });
            }
        }
    }
    Ok(Extraction { dataset, rejected })
}
