//! On-disk bug bundles:
//!
//! ```text
//! <corpus>/<bug_id>/source.txt
//! <corpus>/<bug_id>/traces/*.jsonl[.gz]
//! <corpus>/<bug_id>/fixed.txt      (optional)
//! <corpus>/<bug_id>/labels.json    (optional, {"buggy_lines": [...]})
//! <corpus>/manifest.json           (optional)
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::label_sources;
use crate::trace::{parse_trace_file_with, write_trace_file, BugRecord, ParseOptions};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    pub buggy_lines: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub bug_ids: Vec<String>,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub train_fraction: f64,
    pub seed: u64,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_source(path: &Path) -> Result<Vec<String>> {
    Ok(read_to_string(path)?.lines().map(String::from).collect())
}

fn trace_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".jsonl") || name.ends_with(".jsonl.gz")
        })
        .collect();
    files.sort();
    Ok(files)
}

fn read_trace_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Ground truth for a bundle: `labels.json`, else a diff against `fixed.txt`,
/// else empty.
pub fn bundle_labels(dir: &Path, source: &[String]) -> Result<BTreeSet<u32>> {
    let labels_path = dir.join("labels.json");
    if labels_path.exists() {
        let labels: Labels = serde_json::from_str(&read_to_string(&labels_path)?)
            .map_err(|e| Error::parse(labels_path.display().to_string(), e))?;
        return Ok(labels.buggy_lines);
    }
    let fixed_path = dir.join("fixed.txt");
    if fixed_path.exists() {
        let fixed = read_source(&fixed_path)?;
        return Ok(label_sources(source, &fixed));
    }
    Ok(BTreeSet::new())
}

pub fn load_bug(dir: &Path) -> Result<BugRecord> {
    let bug_id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Config(format!("bad bundle path {}", dir.display())))?
        .to_string();
    let wrap = |e: Error| e.in_bug(&bug_id);
    let source_lines = read_source(&dir.join("source.txt")).map_err(wrap)?;
    let mut traces = Vec::new();
    for file in trace_files(&dir.join("traces")).map_err(wrap)? {
        let bytes = read_trace_bytes(&file).map_err(wrap)?;
        let parsed = parse_trace_file_with(&bytes, ParseOptions::default())
            .map_err(|e| match e {
                Error::Validation(m) => Error::Validation(format!("{}: {m}", file.display())),
                e => Error::parse(file.display().to_string(), e),
            })
            .map_err(wrap)?;
        traces.extend(parsed);
    }
    let buggy_lines = bundle_labels(dir, &source_lines).map_err(wrap)?;
    let bug = BugRecord {
        bug_id: bug_id.clone(),
        source_lines,
        traces,
        buggy_lines,
    };
    bug.validate().map_err(wrap)?;
    Ok(bug)
}

/// Bundle directories (those holding a `source.txt`), sorted by name.
pub fn bundle_dirs(corpus: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(corpus)
        .map_err(|e| Error::io(corpus, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.join("source.txt").is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Loads every bundle under `corpus`, sorted by bug id.
pub fn load_corpus(corpus: &Path) -> Result<Vec<BugRecord>> {
    let dirs = bundle_dirs(corpus)?;
    if dirs.is_empty() {
        return Err(Error::Config(format!(
            "no bug bundles found under {}",
            corpus.display()
        )));
    }
    dirs.par_iter().map(|d| load_bug(d)).collect()
}

fn trace_file_name(index: usize, test_id: &str) -> String {
    let safe: String = test_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{index:04}_{safe}.jsonl")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a bundle, one trace file per test.
pub fn write_bug(corpus: &Path, bug: &BugRecord) -> Result<PathBuf> {
    let dir = corpus.join(&bug.bug_id);
    let traces_dir = dir.join("traces");
    fs::create_dir_all(&traces_dir).map_err(|e| Error::io(&traces_dir, e))?;
    let mut source = bug.source_lines.join("\n");
    source.push('\n');
    write_file(&dir.join("source.txt"), source.as_bytes())?;
    for (i, trace) in bug.traces.iter().enumerate() {
        let mut buf = Vec::new();
        write_trace_file(&mut buf, std::slice::from_ref(trace))
            .map_err(|e| Error::io(&traces_dir, e))?;
        write_file(&traces_dir.join(trace_file_name(i, &trace.test_id)), &buf)?;
    }
    write_labels(&dir, &bug.buggy_lines)?;
    Ok(dir)
}

pub fn write_labels(dir: &Path, buggy_lines: &BTreeSet<u32>) -> Result<()> {
    let labels = Labels {
        buggy_lines: buggy_lines.clone(),
    };
    let text = serde_json::to_string(&labels).expect("labels serialize");
    write_file(&dir.join("labels.json"), format!("{text}\n").as_bytes())
}

/// Derives `labels.json` from `fixed.txt` for every bundle lacking labels.
/// Returns the ids of bundles that were labeled.
pub fn label_bundles(corpus: &Path) -> Result<Vec<String>> {
    let mut labeled = Vec::new();
    for dir in bundle_dirs(corpus)? {
        if dir.join("labels.json").exists() || !dir.join("fixed.txt").exists() {
            continue;
        }
        let source = read_source(&dir.join("source.txt"))?;
        let labels = bundle_labels(&dir, &source)?;
        write_labels(&dir, &labels)?;
        labeled.push(dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
    }
    Ok(labeled)
}

pub fn read_manifest(corpus: &Path) -> Result<Option<CorpusManifest>> {
    let path = corpus.join(MANIFEST);
    if !path.exists() {
        return Ok(None);
    }
    let manifest = serde_json::from_str(&read_to_string(&path)?)
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    Ok(Some(manifest))
}

pub fn write_manifest(corpus: &Path, manifest: &CorpusManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_file(&corpus.join(MANIFEST), format!("{text}\n").as_bytes())
}
