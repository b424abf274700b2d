//! End-to-end operations: build, clean, status, graph and verify.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::depgraph::{
    build_graph, plan, scan_latex_dependencies, staleness, BuildGraph, BuildPlan, ContentDigest,
    GraphError, NodeKind, Snapshot, Staleness, StateError, StateStore, StepKind,
};
use crate::executor::{
    ContainerExecutor, ExecError, Executor, ImageBuildSpec, LocalExecutor, RunSpec, Runtime,
};
use crate::latexbuild::{compile_document, CompileError, CompileRecipe};
use crate::manifest::{validate_manifest, BuildMode, ManifestError, ProjectManifest, Violation};
use crate::reprocheck::{diagnose, PdfError, ReproReport, REPORT_FILE_NAME};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("invalid project:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("{step} failed: {source}")]
    Compile {
        step: StepKind,
        #[source]
        source: CompileError,
    },
    #[error("{step} failed with exit code {exit_code}; see {}", log.display())]
    StepFailed {
        step: StepKind,
        exit_code: i32,
        log: PathBuf,
    },
    #[error("{step} succeeded but did not produce {}", missing.join(", "))]
    MissingOutputs {
        step: StepKind,
        missing: Vec<String>,
    },
    #[error("no results command: set results_command in document.conf or add a CMD to {0}")]
    NoResultsCommand(String),
    #[error("another build (pid {pid}) holds {}", path.display())]
    Locked { pid: u32, path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot diagnose {}: {source}", path.display())]
    Pdf {
        path: PathBuf,
        #[source]
        source: PdfError,
    },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    /// Process exit status for this error: 2 for configuration and usage
    /// problems, 1 for failures while executing a step.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Manifest(_)
            | Error::Invalid(_)
            | Error::Graph(_)
            | Error::NoResultsCommand(_)
            | Error::Locked { .. }
            | Error::Exec(ExecError::RuntimeNotFound(_) | ExecError::InvalidSpec(_)) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Auto,
    Docker,
    Podman,
    Local,
}

impl Backend {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "auto" => Some(Backend::Auto),
            "docker" => Some(Backend::Docker),
            "podman" => Some(Backend::Podman),
            "local" => Some(Backend::Local),
            _ => None,
        }
    }
}

pub fn open_executor(backend: Backend) -> Result<Box<dyn Executor>, ExecError> {
    let runtime = match backend {
        Backend::Local => return Ok(Box::new(LocalExecutor)),
        Backend::Auto => Runtime::Auto,
        Backend::Docker => Runtime::Docker,
        Backend::Podman => Runtime::Podman,
    };
    Ok(Box::new(ContainerExecutor::detect(runtime)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    pub mode: BuildMode,
    pub force: bool,
    /// Apply the determinism primitives and environment when compiling.
    pub reproducible: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            mode: BuildMode::Draft,
            force: false,
            reproducible: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub staleness: Staleness,
    pub executed: Vec<StepKind>,
    pub skipped: Vec<StepKind>,
    /// Source files modified by a step, which should only write artifacts.
    pub warnings: Vec<String>,
}

impl BuildOutcome {
    pub fn nothing_to_do(&self) -> bool {
        self.executed.is_empty()
    }
}

/// Advisory lock held for the duration of a build.
#[derive(Debug)]
pub struct BuildLock {
    path: PathBuf,
}

impl BuildLock {
    /// Take the lock at `path`. A lock left by a process that no longer
    /// exists is reclaimed with a warning.
    pub fn acquire(path: &Path) -> Result<BuildLock, Error> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        for _ in 0..2 {
            match fs::OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(path)
            {
                Ok(mut f) => {
                    writeln!(f, "{}", std::process::id()).map_err(io_err(path))?;
                    return Ok(BuildLock {
                        path: path.to_path_buf(),
                    });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    if let Some(pid) = live_holder(path) {
                        return Err(Error::Locked {
                            pid,
                            path: path.to_path_buf(),
                        });
                    }
                    log::warn!("reclaiming stale lock {}", path.display());
                    match fs::remove_file(path) {
                        Err(e) if e.kind() != io::ErrorKind::NotFound => {
                            return Err(io_err(path)(e))
                        }
                        _ => {}
                    }
                }
                Err(e) => return Err(io_err(path)(e)),
            }
        }
        Err(Error::Locked {
            pid: live_holder(path).unwrap_or(0),
            path: path.to_path_buf(),
        })
    }
}

impl Drop for BuildLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// PID recorded in the lock file, if that process is still running.
fn live_holder(path: &Path) -> Option<u32> {
    let text = fs::read_to_string(path).ok()?;
    let pid: u32 = text.trim().parse().ok()?;
    process_alive(pid).then_some(pid)
}

fn process_alive(pid: u32) -> bool {
    let proc_root = Path::new("/proc");
    if proc_root.join("self").exists() {
        proc_root.join(pid.to_string()).exists()
    } else {
        // Without procfs there is no cheap liveness probe; assume alive.
        true
    }
}

/// Command from the last `CMD` instruction of a containerfile. The exec
/// form is taken literally; the shell form runs under `sh -c`.
pub fn containerfile_cmd(text: &str) -> Option<Vec<String>> {
    let mut found = None;
    let mut logical = String::new();
    for line in text.lines() {
        let trimmed = line.trim_end();
        if let Some(cont) = trimmed.strip_suffix('\\') {
            logical.push_str(cont);
            continue;
        }
        logical.push_str(trimmed);
        let instr = logical.trim_start();
        let is_cmd = instr
            .get(..3)
            .is_some_and(|w| w.eq_ignore_ascii_case("CMD"))
            && instr.as_bytes().get(3).is_some_and(u8::is_ascii_whitespace);
        if is_cmd {
            let rest = instr[4..].trim();
            found = if rest.starts_with('[') {
                serde_json::from_str::<Vec<String>>(rest).ok()
            } else if rest.is_empty() {
                None
            } else {
                Some(vec!["sh".into(), "-c".into(), rest.to_string()])
            };
        }
        logical.clear();
    }
    found.filter(|c| !c.is_empty())
}

fn results_command(m: &ProjectManifest, executor: &dyn Executor) -> Result<Vec<String>, Error> {
    let cmd = m.expand(&m.results_command);
    if !cmd.is_empty() || executor.uses_images() {
        return Ok(cmd);
    }
    let path = m.path(&m.containerfile);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    containerfile_cmd(&text).ok_or_else(|| Error::NoResultsCommand(m.containerfile.clone()))
}

/// Validate the manifest and build the graph from the current LaTeX source.
pub fn project_graph(m: &ProjectManifest) -> Result<BuildGraph, Error> {
    let violations = validate_manifest(m);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    let main = m.path(&m.latex_main);
    let tex = fs::read(&main).map_err(io_err(&main))?;
    let deps = scan_latex_dependencies(&String::from_utf8_lossy(&tex), &m.artifacts_dir);
    Ok(build_graph(m, &deps)?)
}

fn take_snapshot(g: &BuildGraph, root: &Path) -> Result<Snapshot, Error> {
    Snapshot::take(g, root).map_err(io_err(root))
}

/// Staleness of every step without touching the filesystem.
pub fn status(m: &ProjectManifest, mode: BuildMode, force: bool) -> Result<Staleness, Error> {
    let g = project_graph(m)?;
    let store = StateStore::load(&m.state_store_path())?;
    let snapshot = take_snapshot(&g, &m.root)?;
    Ok(staleness(&g, &snapshot, &store, mode, force))
}

/// Graphviz rendering of the project's build graph.
pub fn graph_dot(m: &ProjectManifest) -> Result<String, Error> {
    Ok(project_graph(m)?.to_dot())
}

/// Remove the artifacts directory. Returns whether there was anything to
/// remove.
pub fn clean(m: &ProjectManifest) -> Result<bool, Error> {
    let dir = m.artifacts_path();
    if !dir.exists() {
        return Ok(false);
    }
    let lock = m.lock_path();
    if let Some(pid) = live_holder(&lock) {
        return Err(Error::Locked { pid, path: lock });
    }
    fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(true)
}

fn source_digests(g: &BuildGraph, snapshot: &Snapshot) -> BTreeMap<String, Option<ContentDigest>> {
    g.nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Source)
        .map(|n| (n.key.clone(), snapshot.get(n).cloned()))
        .collect()
}

fn step_log(m: &ProjectManifest, kind: StepKind) -> Result<PathBuf, Error> {
    let log = m.logs_path().join(format!("{}.log", kind.log_name()));
    match fs::remove_file(&log) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(io_err(&log)(e)),
        _ => {}
    }
    Ok(log)
}

fn check_result(step: StepKind, r: crate::executor::RunResult) -> Result<(), Error> {
    if r.success() {
        Ok(())
    } else {
        Err(Error::StepFailed {
            step,
            exit_code: r.exit_code,
            log: r.log_path,
        })
    }
}

fn run_step(
    m: &ProjectManifest,
    g: &BuildGraph,
    executor: &dyn Executor,
    kind: StepKind,
    opts: &BuildOptions,
) -> Result<(), Error> {
    let log = step_log(m, kind)?;
    match kind {
        StepKind::BuildImage => {
            let spec = ImageBuildSpec {
                context_dir: m.root.clone(),
                containerfile: m.path(&m.containerfile),
                tag: m.image_tag.clone(),
                log_path: log,
            };
            check_result(kind, executor.build_image(&spec)?)
        }
        StepKind::RunResults => {
            let artifacts = m.artifacts_path();
            fs::create_dir_all(&artifacts).map_err(io_err(&artifacts))?;
            let mut spec =
                RunSpec::in_project(&m.image_tag, &m.root, results_command(m, executor)?, log);
            if let Some((k, v)) = opts.mode.env() {
                spec.env.insert(k.into(), v.into());
            }
            check_result(kind, executor.run(&spec)?)?;
            let missing: Vec<String> = g
                .step(kind)
                .outputs
                .iter()
                .filter(|n| !m.path(&n.key).is_file())
                .map(|n| n.key.clone())
                .collect();
            if missing.is_empty() {
                Ok(())
            } else {
                Err(Error::MissingOutputs {
                    step: kind,
                    missing,
                })
            }
        }
        StepKind::CompileLatex => {
            let recipe = if opts.reproducible {
                CompileRecipe::deterministic(m)
            } else {
                CompileRecipe::without_reproducibility_flags(m)
            };
            compile_document(m, executor, &recipe, &log)
                .map(drop)
                .map_err(|source| Error::Compile { step: kind, source })
        }
    }
}

/// Bring the artifacts up to date, executing only stale steps.
///
/// Steps that succeed are recorded in the state store even when a later
/// step fails; the failed step and everything after it stay stale.
pub fn build(
    m: &ProjectManifest,
    executor: &dyn Executor,
    opts: &BuildOptions,
) -> Result<BuildOutcome, Error> {
    let g = project_graph(m)?;
    let _lock = BuildLock::acquire(&m.lock_path())?;
    let store_path = m.state_store_path();
    let store = StateStore::load(&store_path)?;
    let before = take_snapshot(&g, &m.root)?;
    let stale = staleness(&g, &before, &store, opts.mode, opts.force);
    let todo = plan(&g, &stale.stale_set());
    let skipped = StepKind::ALL
        .into_iter()
        .filter(|k| !todo.contains(*k))
        .collect();
    if todo.is_empty() {
        return Ok(BuildOutcome {
            staleness: stale,
            executed: Vec::new(),
            skipped,
            warnings: Vec::new(),
        });
    }

    let mut sources = source_digests(&g, &before);
    let mut warnings = Vec::new();
    let mut done = Vec::new();
    let mut failure = None;
    for &kind in &todo.steps {
        log::info!("running {kind}");
        if let Err(e) = run_step(m, &g, executor, kind, opts) {
            failure = Some((kind, e));
            break;
        }
        done.push(kind);
        if kind != StepKind::BuildImage {
            let now = source_digests(&g, &take_snapshot(&g, &m.root)?);
            for (key, digest) in &now {
                if sources.get(key) != Some(digest) {
                    let w = format!(
                        "{kind} modified source file {key}; steps should only write to {}/",
                        m.artifacts_dir
                    );
                    log::warn!("{w}");
                    warnings.push(w);
                }
            }
            sources = now;
        }
    }

    let after = take_snapshot(&g, &m.root)?;
    let mut next = store.clone();
    next.record(
        &BuildPlan {
            steps: done.clone(),
        },
        &g,
        &after,
        opts.mode,
    );
    for &kind in todo.steps.iter().filter(|k| !done.contains(k)) {
        next.invalidate(&g, kind);
    }
    next.save(&store_path)?;

    match failure {
        Some((_, e)) => Err(e),
        None => Ok(BuildOutcome {
            staleness: stale,
            executed: done,
            skipped,
            warnings,
        }),
    }
}

/// Paths used by a verify run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyPaths {
    pub current: PathBuf,
    pub previous: PathBuf,
    pub report: PathBuf,
}

impl VerifyPaths {
    pub fn new(m: &ProjectManifest) -> Self {
        let dir = m.artifacts_path();
        VerifyPaths {
            current: dir.join(format!("{}.pdf", m.stem())),
            previous: dir.join(format!("{}-previous.pdf", m.stem())),
            report: dir.join(REPORT_FILE_NAME),
        }
    }
}

/// Build, keep a copy of the PDF, forget all incremental state, build
/// again from scratch and compare the two PDFs. The report is also written
/// next to the PDF.
pub fn verify_reproducibility(
    m: &ProjectManifest,
    executor: &dyn Executor,
    opts: &BuildOptions,
) -> Result<ReproReport, Error> {
    let paths = VerifyPaths::new(m);
    // The state store does not track the compile recipe, so a PDF left by
    // a deterministic build must not stand in for a non-deterministic one.
    let first = BuildOptions {
        force: opts.force || !opts.reproducible,
        ..*opts
    };
    build(m, executor, &first)?;
    fs::copy(&paths.current, &paths.previous).map_err(io_err(&paths.current))?;
    let state = m.state_store_path();
    match fs::remove_file(&state) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(io_err(&state)(e)),
        _ => {}
    }
    build(m, executor, opts)?;
    let previous = fs::read(&paths.previous).map_err(io_err(&paths.previous))?;
    let current = fs::read(&paths.current).map_err(io_err(&paths.current))?;
    let report = diagnose(&previous, &current).map_err(|source| Error::Pdf {
        path: paths.current.clone(),
        source,
    })?;
    report
        .write_json(&paths.report)
        .map_err(io_err(&paths.report))?;
    Ok(report)
}

impl fmt::Display for BuildOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.nothing_to_do() {
            return writeln!(f, "nothing to do");
        }
        for kind in &self.executed {
            let reasons: Vec<String> = self
                .staleness
                .reasons(*kind)
                .iter()
                .map(|r| r.to_string())
                .collect();
            writeln!(f, "executed {kind} ({})", reasons.join("; "))?;
        }
        for kind in &self.skipped {
            writeln!(f, "skipped  {kind} (up to date)")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::FakeExecutor;
    use crate::manifest::discover;
    use crate::scaffold::init_project;

    fn scaffold() -> (tempfile::TempDir, ProjectManifest) {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("doc");
        init_project(&root, None).unwrap();
        let m = discover(&root).unwrap();
        (dir, m)
    }

    #[test]
    fn cmd_parsing() {
        assert_eq!(
            containerfile_cmd("FROM x\nCMD [\"python3\", \"main.py\"]\n").unwrap(),
            ["python3", "main.py"]
        );
        assert_eq!(
            containerfile_cmd("CMD python3 main.py\ncmd make \\\n  all\n").unwrap(),
            ["sh", "-c", "make   all"]
        );
        assert_eq!(containerfile_cmd("FROM x\n"), None);
        assert_eq!(containerfile_cmd("CMD []\n"), None);
        assert_eq!(containerfile_cmd("CMDX foo\n"), None);
        assert_eq!(containerfile_cmd("CM\u{e9} x\nCMD\n"), None);
    }

    #[test]
    fn fake_build_cycle() {
        let (_d, m) = scaffold();
        let ex = FakeExecutor::new(&m);
        let opts = BuildOptions::default();
        let out = build(&m, &ex, &opts).unwrap();
        assert_eq!(out.executed, StepKind::ALL);
        assert!(out.warnings.is_empty());
        assert!(m.path("artifacts/ms.pdf").is_file());
        assert!(m.path("artifacts/logs/compile-latex.log").is_file());
        assert!(!m.lock_path().exists());

        let again = build(&m, &ex, &opts).unwrap();
        assert!(again.nothing_to_do());
        assert_eq!(again.to_string(), "nothing to do\n");
        assert!(status(&m, BuildMode::Draft, false)
            .unwrap()
            .stale_set()
            .is_empty());

        fs::write(
            m.path("ms.tex"),
            fs::read_to_string(m.path("ms.tex")).unwrap() + "\n% edit\n",
        )
        .unwrap();
        assert_eq!(
            build(&m, &ex, &opts).unwrap().executed,
            [StepKind::CompileLatex]
        );

        assert!(clean(&m).unwrap());
        assert!(!clean(&m).unwrap());
        assert_eq!(build(&m, &ex, &opts).unwrap().executed, StepKind::ALL);
    }

    #[test]
    fn failure_keeps_failed_step_stale() {
        let (_d, m) = scaffold();
        let ex = FakeExecutor::new(&m);
        ex.fail(StepKind::CompileLatex);
        let err = build(&m, &ex, &BuildOptions::default()).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Compile {
                    step: StepKind::CompileLatex,
                    ..
                }
            ),
            "{err}"
        );
        assert_eq!(err.exit_code(), 1);
        assert_eq!(
            status(&m, BuildMode::Draft, false)
                .unwrap()
                .stale_set()
                .into_iter()
                .collect::<Vec<_>>(),
            [StepKind::CompileLatex]
        );
        ex.heal();
        ex.clear();
        build(&m, &ex, &BuildOptions::default()).unwrap();
        assert_eq!(ex.executed_steps(), [StepKind::CompileLatex]);
    }

    #[test]
    fn results_failure_reports_log() {
        let (_d, m) = scaffold();
        let ex = FakeExecutor::new(&m);
        ex.fail(StepKind::RunResults);
        match build(&m, &ex, &BuildOptions::default()).unwrap_err() {
            Error::StepFailed {
                step,
                exit_code,
                log,
            } => {
                assert_eq!((step, exit_code), (StepKind::RunResults, 1));
                assert!(log.ends_with("artifacts/logs/run-results.log"));
            }
            other => panic!("{other}"),
        }
        let s = status(&m, BuildMode::Draft, false).unwrap().stale_set();
        assert!(!s.contains(&StepKind::BuildImage));
        assert!(s.contains(&StepKind::RunResults) && s.contains(&StepKind::CompileLatex));
    }

    #[test]
    fn invalid_project_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = ProjectManifest::with_defaults(dir.path().to_path_buf());
        let err = build(&m, &FakeExecutor::new(&m), &BuildOptions::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(graph_dot(&m).is_err());
        assert!(!m.artifacts_path().exists());
    }

    #[test]
    fn lock_exclusion_and_reclaim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/.lock");
        let held = BuildLock::acquire(&path).unwrap();
        assert!(matches!(
            BuildLock::acquire(&path),
            Err(Error::Locked { .. })
        ));
        drop(held);
        assert!(!path.exists());

        // PIDs above the kernel maximum never exist.
        fs::write(&path, "4294967295\n").unwrap();
        let reclaimed = BuildLock::acquire(&path).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap().trim(),
            std::process::id().to_string()
        );
        drop(reclaimed);
        fs::write(&path, "garbage").unwrap();
        drop(BuildLock::acquire(&path).unwrap());
    }

    #[test]
    fn clean_refuses_while_locked() {
        let (_d, m) = scaffold();
        let _held = BuildLock::acquire(&m.lock_path()).unwrap();
        assert!(matches!(clean(&m), Err(Error::Locked { .. })));
    }

    #[test]
    fn verify_with_fake_executor() {
        let (_d, m) = scaffold();
        let ex = FakeExecutor::new(&m);
        let report = verify_reproducibility(&m, &ex, &BuildOptions::default()).unwrap();
        assert!(report.identical());
        let paths = VerifyPaths::new(&m);
        assert!(paths.previous.is_file());
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&paths.report).unwrap()).unwrap();
        assert_eq!(json["identical"], true);
        assert_eq!(ex.executed_steps(), StepKind::ALL);
    }
}
