//! Running image builds and commands, in a container runtime or on the host.
//!
//! Callers describe work with [`ImageBuildSpec`] and [`RunSpec`]; an
//! [`Executor`] carries it out and reports a [`RunResult`]. A nonzero exit
//! status is data, not an error. Errors are reserved for failing to start
//! the work at all.

mod container;
pub mod fake;
mod local;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};

use thiserror::Error;

pub use container::{
    build_image, resolve_runtime, run_container, ContainerExecutor, Flavor, ResolvedRuntime,
};
pub use fake::FakeExecutor;
pub use local::{run_local, LocalExecutor};

/// Container path the project root is mounted at.
pub const WORKDIR: &str = "/workdir";

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("no container runtime found on PATH (tried {0})")]
    RuntimeNotFound(String),
    #[error("invalid run specification: {0}")]
    InvalidSpec(String),
    #[error("failed to start `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Runtime {
    /// docker if present, otherwise podman.
    #[default]
    Auto,
    Docker,
    Podman,
}

impl Runtime {
    pub fn candidates(self) -> &'static [&'static str] {
        match self {
            Runtime::Auto => &["docker", "podman"],
            Runtime::Docker => &["docker"],
            Runtime::Podman => &["podman"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mount {
    pub host: PathBuf,
    pub container: String,
    pub writable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSpec {
    pub image: String,
    /// Empty runs the image's default command.
    pub command: Vec<String>,
    pub env: BTreeMap<String, String>,
    pub mounts: Vec<Mount>,
    pub workdir: String,
    /// Combined stdout and stderr are appended here.
    pub log_path: PathBuf,
}

impl RunSpec {
    /// Spec that mounts `root` read-write at [`WORKDIR`] and runs there.
    pub fn in_project(
        image: &str,
        root: &Path,
        command: Vec<String>,
        log_path: PathBuf,
    ) -> RunSpec {
        RunSpec {
            image: image.to_string(),
            command,
            env: BTreeMap::new(),
            mounts: vec![Mount {
                host: root.to_path_buf(),
                container: WORKDIR.into(),
                writable: true,
            }],
            workdir: WORKDIR.into(),
            log_path,
        }
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        for name in self.env.keys() {
            if !valid_env_name(name) {
                return Err(ExecError::InvalidSpec(format!(
                    "environment variable name `{name}` must match [A-Z_][A-Z0-9_]*"
                )));
            }
        }
        for m in &self.mounts {
            if !m.host.exists() {
                return Err(ExecError::InvalidSpec(format!(
                    "mount source {} does not exist",
                    m.host.display()
                )));
            }
        }
        Ok(())
    }

    /// Host directory mounted at the working directory, if any.
    pub fn host_workdir(&self) -> Option<&Path> {
        self.mounts
            .iter()
            .find(|m| m.container == self.workdir)
            .map(|m| m.host.as_path())
    }
}

fn valid_env_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase() || c == '_')
        && chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuildSpec {
    pub context_dir: PathBuf,
    pub containerfile: PathBuf,
    pub tag: String,
    pub log_path: PathBuf,
}

impl ImageBuildSpec {
    pub fn validate(&self) -> Result<(), ExecError> {
        let canon = |p: &Path| {
            p.canonicalize().map_err(|source| ExecError::Io {
                path: p.to_path_buf(),
                source,
            })
        };
        let ctx = canon(&self.context_dir)?;
        let file = canon(&self.containerfile)?;
        if !file.starts_with(&ctx) {
            return Err(ExecError::InvalidSpec(format!(
                "containerfile {} lies outside the build context {}",
                self.containerfile.display(),
                self.context_dir.display()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub exit_code: i32,
    pub log_path: PathBuf,
}

impl RunResult {
    pub fn success(&self) -> bool {
        self.exit_code == 0
    }
}

/// Where and how steps execute.
pub trait Executor {
    fn name(&self) -> String;

    fn build_image(&self, spec: &ImageBuildSpec) -> Result<RunResult, ExecError>;

    fn run(&self, spec: &RunSpec) -> Result<RunResult, ExecError>;

    /// Whether `RunSpec::image` is meaningful. The host backend ignores it.
    fn uses_images(&self) -> bool {
        true
    }
}

impl<E: Executor + ?Sized> Executor for &E {
    fn name(&self) -> String {
        (**self).name()
    }
    fn build_image(&self, spec: &ImageBuildSpec) -> Result<RunResult, ExecError> {
        (**self).build_image(spec)
    }
    fn run(&self, spec: &RunSpec) -> Result<RunResult, ExecError> {
        (**self).run(spec)
    }
    fn uses_images(&self) -> bool {
        (**self).uses_images()
    }
}

impl fmt::Debug for dyn Executor + '_ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Executor({})", self.name())
    }
}

/// Open `path` for appending, creating parent directories.
fn open_log(path: &Path) -> Result<fs::File, ExecError> {
    let io_err = |source| ExecError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err)
}

/// Run `cmd` with stdout and stderr interleaved into `log_path`.
fn spawn_logged(mut cmd: Command, log_path: &Path) -> Result<RunResult, ExecError> {
    let log = open_log(log_path)?;
    let err_log = log.try_clone().map_err(|source| ExecError::Io {
        path: log_path.to_path_buf(),
        source,
    })?;
    cmd.stdin(Stdio::null())
        .stdout(Stdio::from(log))
        .stderr(Stdio::from(err_log));
    let program = cmd.get_program().to_string_lossy().into_owned();
    let status = cmd
        .status()
        .map_err(|source| ExecError::Spawn { program, source })?;
    Ok(RunResult {
        exit_code: exit_code(status),
        log_path: log_path.to_path_buf(),
    })
}

fn exit_code(status: ExitStatus) -> i32 {
    if let Some(code) = status.code() {
        return code;
    }
    #[cfg(unix)]
    {
        use std::os::unix::process::ExitStatusExt;
        if let Some(sig) = status.signal() {
            return 128 + sig;
        }
    }
    -1
}

/// Search `PATH` for an executable named `program`.
pub fn find_on_path(program: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(program))
        .find(|candidate| is_executable(candidate))
}

fn is_executable(p: &Path) -> bool {
    let Ok(meta) = fs::metadata(p) else {
        return false;
    };
    if !meta.is_file() {
        return false;
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        meta.permissions().mode() & 0o111 != 0
    }
    #[cfg(not(unix))]
    {
        true
    }
}
