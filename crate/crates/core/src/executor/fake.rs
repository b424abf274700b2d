//! Test double that records every request and writes step outputs as a pure
//! function of the step's input digests.
//!
//! The simulated results program writes every artifact the document
//! references plus every `<artifacts_dir>/...` path spelled out in a results
//! source, the way a real program writes what it names whether or not the
//! document uses it.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use super::{open_log, ExecError, Executor, ImageBuildSpec, RunResult, RunSpec};
use crate::depgraph::{
    build_graph, digest_if_exists, scan_latex_dependencies, BuildGraph, StepKind,
};
use crate::manifest::ProjectManifest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Invocation {
    BuildImage(ImageBuildSpec),
    Run(RunSpec),
}

#[derive(Debug)]
pub struct FakeExecutor {
    manifest: ProjectManifest,
    calls: Mutex<Vec<(StepKind, Invocation)>>,
    failing: Mutex<BTreeSet<StepKind>>,
}

impl FakeExecutor {
    pub fn new(manifest: &ProjectManifest) -> Self {
        FakeExecutor {
            manifest: manifest.clone(),
            calls: Mutex::new(Vec::new()),
            failing: Mutex::new(BTreeSet::new()),
        }
    }

    /// Make every request belonging to `step` exit with status 1.
    pub fn fail(&self, step: StepKind) {
        self.failing.lock().unwrap().insert(step);
    }

    pub fn heal(&self) {
        self.failing.lock().unwrap().clear();
    }

    pub fn invocations(&self) -> Vec<(StepKind, Invocation)> {
        self.calls.lock().unwrap().clone()
    }

    pub fn clear(&self) {
        self.calls.lock().unwrap().clear();
    }

    /// Steps that issued at least one request, in first-request order.
    pub fn executed_steps(&self) -> Vec<StepKind> {
        let mut out = Vec::new();
        for (k, _) in self.calls.lock().unwrap().iter() {
            if !out.contains(k) {
                out.push(*k);
            }
        }
        out
    }

    fn current_graph(&self, root: &Path) -> Result<BuildGraph, ExecError> {
        let tex = fs::read_to_string(root.join(&self.manifest.latex_main)).unwrap_or_default();
        let deps = scan_latex_dependencies(&tex, &self.manifest.artifacts_dir);
        build_graph(&self.manifest, &deps).map_err(|e| ExecError::InvalidSpec(e.to_string()))
    }

    fn classify(&self, spec: &RunSpec) -> StepKind {
        if spec.image == self.manifest.image_tag {
            StepKind::RunResults
        } else {
            StepKind::CompileLatex
        }
    }

    fn named_outputs(&self, root: &Path) -> BTreeSet<String> {
        let prefix = format!("{}/", self.manifest.artifacts_dir);
        let mut out = BTreeSet::new();
        for src in &self.manifest.results_sources {
            let text = fs::read_to_string(root.join(src)).unwrap_or_default();
            for word in text.split(|c: char| !(c.is_ascii_alphanumeric() || "._/-".contains(c))) {
                if word.len() > prefix.len()
                    && word.starts_with(&prefix)
                    && !word.ends_with('/')
                    && !word.contains("..")
                {
                    out.insert(word.to_string());
                }
            }
        }
        out
    }

    fn digest_lines(root: &Path, g: &BuildGraph, steps: &[StepKind]) -> Result<String, ExecError> {
        let mut out = String::new();
        for kind in steps {
            for n in g.step(*kind).inputs.iter().filter(|n| n.is_file()) {
                let path = root.join(&n.key);
                let d = digest_if_exists(&path).map_err(|source| ExecError::Io { path, source })?;
                let d = d.map(|d| d.to_string()).unwrap_or_else(|| "absent".into());
                out.push_str(&format!("{d} {}\n", n.key));
            }
        }
        Ok(out)
    }

    fn write(root: &Path, rel: &str, contents: &str) -> Result<(), ExecError> {
        let path = root.join(rel);
        let io_err = |source| ExecError::Io {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        fs::write(&path, contents).map_err(io_err)
    }

    fn result(&self, kind: StepKind, log_path: &Path) -> Result<RunResult, ExecError> {
        open_log(log_path)?;
        let failing = self.failing.lock().unwrap().contains(&kind);
        Ok(RunResult {
            exit_code: i32::from(failing),
            log_path: log_path.to_path_buf(),
        })
    }
}

impl Executor for FakeExecutor {
    fn name(&self) -> String {
        "fake".into()
    }

    fn build_image(&self, spec: &ImageBuildSpec) -> Result<RunResult, ExecError> {
        spec.validate()?;
        self.calls
            .lock()
            .unwrap()
            .push((StepKind::BuildImage, Invocation::BuildImage(spec.clone())));
        self.result(StepKind::BuildImage, &spec.log_path)
    }

    fn run(&self, spec: &RunSpec) -> Result<RunResult, ExecError> {
        spec.validate()?;
        let kind = self.classify(spec);
        self.calls
            .lock()
            .unwrap()
            .push((kind, Invocation::Run(spec.clone())));
        if self.failing.lock().unwrap().contains(&kind) {
            return self.result(kind, &spec.log_path);
        }
        let root = spec
            .host_workdir()
            .ok_or_else(|| ExecError::InvalidSpec("no working directory mount".into()))?
            .to_path_buf();
        let g = self.current_graph(&root)?;
        match kind {
            StepKind::RunResults => {
                let full = spec.env.get("FULL").map(String::as_str).unwrap_or("");
                let inputs =
                    Self::digest_lines(&root, &g, &[StepKind::BuildImage, StepKind::RunResults])?;
                let mut outputs: BTreeSet<String> = g
                    .step(StepKind::RunResults)
                    .outputs
                    .iter()
                    .map(|n| n.key.clone())
                    .collect();
                outputs.extend(self.named_outputs(&root));
                for key in &outputs {
                    Self::write(&root, key, &format!("fake:{key}\nFULL={full}\n{inputs}"))?;
                }
            }
            _ => {
                let engine = self.manifest.expand(&self.manifest.latex_engine_command);
                if spec.command.first() == engine.first() {
                    let inputs = Self::digest_lines(&root, &g, &[StepKind::CompileLatex])?;
                    let m = &self.manifest;
                    let pdf = format!(
                        "%PDF-1.5\n%fake\n{}%%EOF\n",
                        inputs
                            .lines()
                            .map(|l| format!("% {l}\n"))
                            .collect::<String>()
                    );
                    Self::write(&root, &m.pdf_rel(), &pdf)?;
                    Self::write(
                        &root,
                        &format!("{}/{}.aux", m.artifacts_dir, m.stem()),
                        "\\relax\n",
                    )?;
                }
            }
        }
        self.result(kind, &spec.log_path)
    }
}
