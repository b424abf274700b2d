use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::Command;

use super::{
    find_on_path, spawn_logged, ExecError, Executor, ImageBuildSpec, RunResult, RunSpec, Runtime,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Docker,
    Podman,
}

/// A runtime binary located on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedRuntime {
    pub program: PathBuf,
    pub flavor: Flavor,
}

impl ResolvedRuntime {
    pub fn new(program: impl Into<PathBuf>, flavor: Flavor) -> Self {
        ResolvedRuntime {
            program: program.into(),
            flavor,
        }
    }
}

/// Probe `PATH` for the requested runtime (`auto` tries docker, then podman).
pub fn resolve_runtime(runtime: Runtime) -> Result<ResolvedRuntime, ExecError> {
    for name in runtime.candidates() {
        if let Some(program) = find_on_path(name) {
            let flavor = if *name == "podman" {
                Flavor::Podman
            } else {
                Flavor::Docker
            };
            return Ok(ResolvedRuntime { program, flavor });
        }
    }
    Err(ExecError::RuntimeNotFound(runtime.candidates().join(", ")))
}

pub fn build_image(b: &ImageBuildSpec, runtime: Runtime) -> Result<RunResult, ExecError> {
    b.validate()?;
    ContainerExecutor::new(resolve_runtime(runtime)?).build_image(b)
}

pub fn run_container(r: &RunSpec, runtime: Runtime) -> Result<RunResult, ExecError> {
    r.validate()?;
    ContainerExecutor::new(resolve_runtime(runtime)?).run(r)
}

/// Drives the `docker` or `podman` command-line client.
#[derive(Debug, Clone)]
pub struct ContainerExecutor {
    runtime: ResolvedRuntime,
}

impl ContainerExecutor {
    pub fn new(runtime: ResolvedRuntime) -> Self {
        ContainerExecutor { runtime }
    }

    pub fn detect(runtime: Runtime) -> Result<Self, ExecError> {
        Ok(ContainerExecutor::new(resolve_runtime(runtime)?))
    }

    pub fn runtime(&self) -> &ResolvedRuntime {
        &self.runtime
    }

    pub fn build_args(b: &ImageBuildSpec) -> Vec<OsString> {
        vec![
            "build".into(),
            "-t".into(),
            b.tag.clone().into(),
            "-f".into(),
            b.containerfile.clone().into(),
            b.context_dir.clone().into(),
        ]
    }

    pub fn run_args(&self, r: &RunSpec) -> Vec<OsString> {
        let mut args: Vec<OsString> = vec!["run".into(), "--rm".into()];
        match self.runtime.flavor {
            Flavor::Podman => args.push("--userns=keep-id".into()),
            Flavor::Docker => match host_owner(r) {
                Some((uid, gid)) => {
                    args.push("--user".into());
                    args.push(format!("{uid}:{gid}").into());
                }
                None => log::warn!(
                    "cannot determine the owner of the project directory; container output may not be owned by you"
                ),
            },
        }
        for m in &r.mounts {
            let mut v = OsString::from(&m.host);
            v.push(":");
            v.push(&m.container);
            if !m.writable {
                v.push(":ro");
            }
            args.push("-v".into());
            args.push(v);
        }
        args.push("-w".into());
        args.push(r.workdir.clone().into());
        for (k, v) in &r.env {
            args.push("-e".into());
            args.push(format!("{k}={v}").into());
        }
        args.push(r.image.clone().into());
        args.extend(r.command.iter().map(OsString::from));
        args
    }
}

/// Owner of the writable working-directory mount, used for `--user`.
fn host_owner(r: &RunSpec) -> Option<(u32, u32)> {
    let dir: &Path = r.host_workdir()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::MetadataExt;
        let meta = std::fs::metadata(dir).ok()?;
        Some((meta.uid(), meta.gid()))
    }
    #[cfg(not(unix))]
    {
        let _ = dir;
        None
    }
}

impl Executor for ContainerExecutor {
    fn name(&self) -> String {
        match self.runtime.flavor {
            Flavor::Docker => "docker".into(),
            Flavor::Podman => "podman".into(),
        }
    }

    fn build_image(&self, b: &ImageBuildSpec) -> Result<RunResult, ExecError> {
        b.validate()?;
        let mut cmd = Command::new(&self.runtime.program);
        cmd.args(Self::build_args(b));
        spawn_logged(cmd, &b.log_path)
    }

    fn run(&self, r: &RunSpec) -> Result<RunResult, ExecError> {
        r.validate()?;
        let mut cmd = Command::new(&self.runtime.program);
        cmd.args(self.run_args(r));
        spawn_logged(cmd, &r.log_path)
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use std::fs;
    use std::os::unix::fs::PermissionsExt;

    /// Stand-in runtime client: echoes its arguments, writes to stderr, and
    /// exits with `exit`.
    fn fake_runtime(dir: &Path, exit: i32) -> PathBuf {
        let p = dir.join("fake-runtime");
        fs::write(&p, format!("#!/bin/sh\nfor a in \"$@\"; do echo \"arg:$a\"; done\necho oops >&2\nexit {exit}\n")).unwrap();
        fs::set_permissions(&p, fs::Permissions::from_mode(0o755)).unwrap();
        p
    }

    #[test]
    fn run_arguments() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = RunSpec::in_project(
            "doc-results",
            dir.path(),
            vec!["python3".into(), "main.py".into()],
            dir.path().join("l"),
        );
        spec.env.insert("FULL".into(), "1".into());
        let exec = ContainerExecutor::new(ResolvedRuntime::new("podman", Flavor::Podman));
        let args: Vec<String> = exec
            .run_args(&spec)
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect();
        let mount = format!("{}:/workdir", dir.path().display());
        assert_eq!(
            args,
            vec![
                "run",
                "--rm",
                "--userns=keep-id",
                "-v",
                &mount,
                "-w",
                "/workdir",
                "-e",
                "FULL=1",
                "doc-results",
                "python3",
                "main.py"
            ]
        );
        let docker = ContainerExecutor::new(ResolvedRuntime::new("docker", Flavor::Docker));
        let args = docker.run_args(&spec);
        assert_eq!(args[2], "--user");
    }

    #[test]
    fn logs_interleaved_output_and_reports_exit() {
        let dir = tempfile::tempdir().unwrap();
        let exec = ContainerExecutor::new(ResolvedRuntime::new(
            fake_runtime(dir.path(), 3),
            Flavor::Podman,
        ));
        let log = dir.path().join("logs/run.log");
        let spec = RunSpec::in_project("img", dir.path(), vec!["false".into()], log.clone());
        let res = exec.run(&spec).unwrap();
        assert_eq!(res.exit_code, 3);
        let text = fs::read_to_string(&log).unwrap();
        assert!(text.contains("arg:--rm"));
        assert!(text.contains("arg:img"));
        assert!(text.contains("oops"));
    }

    #[test]
    fn build_validates_before_spawning() {
        let outer = tempfile::tempdir().unwrap();
        let ctx = outer.path().join("ctx");
        fs::create_dir(&ctx).unwrap();
        fs::write(outer.path().join("Containerfile"), "FROM scratch\n").unwrap();
        let log = outer.path().join("build.log");
        let spec = ImageBuildSpec {
            context_dir: ctx,
            containerfile: outer.path().join("Containerfile"),
            tag: "t".into(),
            log_path: log.clone(),
        };
        let exec = ContainerExecutor::new(ResolvedRuntime::new(
            fake_runtime(outer.path(), 0),
            Flavor::Docker,
        ));
        assert!(matches!(
            exec.build_image(&spec),
            Err(ExecError::InvalidSpec(_))
        ));
        assert!(!log.exists());
    }

    #[test]
    fn build_invokes_runtime() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("Containerfile"), "FROM scratch\n").unwrap();
        let spec = ImageBuildSpec {
            context_dir: dir.path().to_path_buf(),
            containerfile: dir.path().join("Containerfile"),
            tag: "document-results".into(),
            log_path: dir.path().join("b.log"),
        };
        let exec = ContainerExecutor::new(ResolvedRuntime::new(
            fake_runtime(dir.path(), 0),
            Flavor::Docker,
        ));
        let res = exec.build_image(&spec).unwrap();
        assert!(res.success());
        let text = fs::read_to_string(dir.path().join("b.log")).unwrap();
        assert!(text.contains("arg:build\narg:-t\narg:document-results\narg:-f\n"));
    }

    #[test]
    fn missing_runtime_is_distinct() {
        // Only meaningful where no runtime is installed.
        if find_on_path("docker").is_none() && find_on_path("podman").is_none() {
            assert!(matches!(
                resolve_runtime(Runtime::Auto),
                Err(ExecError::RuntimeNotFound(_))
            ));
        }
        let dir = tempfile::tempdir().unwrap();
        let spec = RunSpec::in_project("i", dir.path(), vec![], dir.path().join("l.log"));
        assert!(matches!(
            ContainerExecutor::new(ResolvedRuntime::new("/nonexistent/docker", Flavor::Docker))
                .run(&spec),
            Err(ExecError::Spawn { .. })
        ));
    }
}
