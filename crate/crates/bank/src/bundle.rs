//! A bundle is a directory of template JSON files, one per template.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::template::ProblemTemplate;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Schema {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {}", errors.join("; "))]
    Invalid { path: PathBuf, errors: Vec<String> },
}

pub fn parse_template(path: &Path, text: &str) -> Result<ProblemTemplate, BundleError> {
    serde_json::from_str(text).map_err(|source| BundleError::Schema {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_template(path: &Path) -> Result<ProblemTemplate, BundleError> {
    let text = fs::read_to_string(path).map_err(|source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_template(path, &text)
}

/// Loads `*.json` in file-name order.
pub fn bundle_load(dir: &Path) -> Result<Vec<ProblemTemplate>, BundleError> {
    let io = |source| BundleError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_template(p)).collect()
}

/// Like [`bundle_load`], also running the structural template checks.
pub fn bundle_load_checked(dir: &Path) -> Result<Vec<ProblemTemplate>, BundleError> {
    let templates = bundle_load(dir)?;
    for t in &templates {
        t.check(crate::instance::registry()).map_err(|errors| BundleError::Invalid {
            path: dir.join(format!("{}.json", t.id)),
            errors,
        })?;
    }
    Ok(templates)
}

pub fn bundle_save(dir: &Path, templates: &[ProblemTemplate]) -> Result<(), BundleError> {
    fs::create_dir_all(dir).map_err(|source| BundleError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for t in templates {
        let path = dir.join(format!("{}.json", t.id));
        let mut text = serde_json::to_string_pretty(t).expect("template serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|source| BundleError::Io { path, source })?;
    }
    Ok(())
}
