//! Dataset directories: `<name>.seq.jsonl` streams with `<name>.ann.json`
//! annotations next to them.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use spd_motion::io::{read_sequence, AnnotationFile};
use spd_motion::skeleton::SkeletonSequence;

use crate::CliError;

pub const SEQ_SUFFIX: &str = ".seq.jsonl";
pub const ANN_SUFFIX: &str = ".ann.json";

pub struct Stream {
    pub name: String,
    pub seq: SkeletonSequence,
    pub ann: AnnotationFile,
}

pub fn stream_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}{SEQ_SUFFIX}")), dir.join(format!("{name}{ANN_SUFFIX}")))
}

fn read_seq(path: &Path) -> Result<SkeletonSequence, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_sequence(BufReader::new(f)).map_err(|e| CliError::at(path, e))
}

pub fn read_annotations(path: &Path) -> Result<AnnotationFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    AnnotationFile::from_json(&text).map_err(|e| CliError::at(path, e))
}

/// Every annotated stream in `dir`, sorted by name.
pub fn load_dir(dir: &Path) -> Result<Vec<Stream>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        if let Some(name) = entry.file_name().to_str().and_then(|n| n.strip_suffix(SEQ_SUFFIX)) {
            names.push(name.to_string());
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(CliError::new("argument", format!("no *{SEQ_SUFFIX} streams in {}", dir.display())));
    }
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let (sp, ap) = stream_paths(dir, &name);
        let seq = read_seq(&sp)?;
        let ann = read_annotations(&ap)?;
        if ann.total_frames != seq.len() {
            return Err(CliError::new("parse", format!("{}: annotations cover {} frames, stream has {}", ap.display(), ann.total_frames, seq.len())));
        }
        out.push(Stream { name, seq, ann });
    }
    let first = &out[0];
    if let Some(s) = out.iter().find(|s| s.ann.classes != first.ann.classes) {
        return Err(CliError::new("parse", format!("{} and {} use different class lists", s.name, first.name)));
    }
    if let Some(s) = out.iter().find(|s| s.seq.capture_rate() != first.seq.capture_rate() || s.seq.layout() != first.seq.layout()) {
        return Err(CliError::new("parse", format!("{} and {} differ in capture rate or joint layout", s.name, first.name)));
    }
    Ok(out)
}
