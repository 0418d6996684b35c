//! File plumbing shared by the commands.

use std::fs;
use std::path::{Path, PathBuf};

use ambiguity_core::bpmn::{parse_bpmn_with, ProcessModel};
use ambiguity_core::simulation::KpiConfig;
use serde::Serialize;

use crate::CliError;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn is_model_file(p: &Path) -> bool {
    p.is_file() && p.extension().is_some_and(|x| x == "bpmn" || x == "xml")
}

/// `*.bpmn` and `*.xml` files of a directory, sorted; a single file is
/// returned as is.
pub fn model_files(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| CliError::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_model_file(p))
        .collect();
    files.sort();
    Ok(files)
}

/// Parses a model file; the model id is the file stem.
pub fn load_model(path: &Path, kpi: &KpiConfig) -> Result<ProcessModel, CliError> {
    let xml = read_text(path)?;
    let mut m =
        parse_bpmn_with(&xml, &kpi.tag_table()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    m.model_id = stem(path);
    Ok(m)
}

/// Resolves a model argument: an existing file, or a model id looked up in
/// the models directory.
pub fn resolve_model(arg: &str, models_dir: Option<&Path>) -> Result<PathBuf, CliError> {
    let direct = Path::new(arg);
    if direct.is_file() {
        return Ok(direct.to_path_buf());
    }
    let Some(dir) = models_dir else {
        return Err(CliError::Usage(format!("model `{arg}` is not a file and no models directory is set")));
    };
    ["bpmn", "xml"]
        .iter()
        .map(|ext| dir.join(format!("{arg}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| CliError::Data(format!("model `{arg}` not found in {}", dir.display())))
}
