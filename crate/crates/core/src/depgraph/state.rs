//! Digests recorded after the last successful build, persisted between runs.
//!
//! File format, one entry per line, lines sorted, LF endings:
//!
//! ```text
//! <64-hex-digest> <node-kind>:<path-or-tag>
//! mode <draft|full>
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{BuildGraph, BuildPlan, ContentDigest, NodeId, NodeKind, Snapshot, StepKind};
use crate::manifest::BuildMode;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("state store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("state store line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StateStore {
    pub entries: BTreeMap<NodeId, ContentDigest>,
    /// Mode of the last successful results run.
    pub mode: Option<BuildMode>,
}

impl StateStore {
    pub fn get(&self, n: &NodeId) -> Option<&ContentDigest> {
        self.entries.get(n)
    }

    /// A missing file is an empty store.
    pub fn load(path: &Path) -> Result<StateStore, StateError> {
        match fs::read_to_string(path) {
            Ok(text) => StateStore::parse(&text),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(StateStore::default()),
            Err(source) => Err(StateError::Io {
                path: path.to_path_buf(),
                source,
            }),
        }
    }

    pub fn parse(text: &str) -> Result<StateStore, StateError> {
        let mut store = StateStore::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |message: &str| StateError::Parse {
                line: line_no,
                message: message.into(),
            };
            if line.is_empty() {
                continue;
            }
            if let Some(mode) = line.strip_prefix("mode ") {
                store.mode = Some(BuildMode::parse(mode).ok_or_else(|| err("unknown mode"))?);
                continue;
            }
            let (digest, node) = line
                .split_once(' ')
                .ok_or_else(|| err("expected `<digest> <node>`"))?;
            let digest: ContentDigest = digest.parse().map_err(|_| err("invalid digest"))?;
            let (kind, key) = node
                .split_once(':')
                .ok_or_else(|| err("expected `<kind>:<path>`"))?;
            let kind = NodeKind::parse(kind).ok_or_else(|| err("unknown node kind"))?;
            store.entries.insert(NodeId::new(kind, key), digest);
        }
        Ok(store)
    }

    pub fn serialize(&self) -> String {
        let mut lines: Vec<String> = self
            .entries
            .iter()
            .map(|(n, d)| format!("{d} {n}"))
            .collect();
        if let Some(mode) = self.mode {
            lines.push(format!("mode {mode}"));
        }
        lines.sort();
        let mut out = String::new();
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }

    /// Write to a sibling temporary file, sync, then rename over `path`, so a
    /// crash leaves either the old or the new store.
    pub fn save(&self, path: &Path) -> Result<(), StateError> {
        let io_err = |source| StateError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(self.serialize().as_bytes()).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
        drop(f);
        fs::rename(&tmp, path).map_err(io_err)
    }

    /// Record digests of every input and output of the executed steps.
    pub fn record(
        &mut self,
        executed: &BuildPlan,
        g: &BuildGraph,
        snapshot: &Snapshot,
        mode: BuildMode,
    ) {
        for step in g.steps.iter().filter(|s| executed.contains(s.kind)) {
            for n in step.inputs.iter().chain(&step.outputs) {
                match snapshot.get(n) {
                    Some(d) => {
                        self.entries.insert(n.clone(), d.clone());
                    }
                    None => {
                        self.entries.remove(n);
                    }
                }
            }
            if step.kind == StepKind::RunResults {
                self.mode = Some(mode);
            }
        }
    }

    /// Forget the file inputs of a step that did not complete, so it stays
    /// stale even when an upstream step refreshed those entries. The image
    /// entry belongs to the image build and is kept.
    pub fn invalidate(&mut self, g: &BuildGraph, kind: StepKind) {
        for n in g.step(kind).inputs.iter().filter(|n| n.is_file()) {
            self.entries.remove(n);
        }
        if kind == StepKind::RunResults {
            self.mode = None;
        }
    }
}
