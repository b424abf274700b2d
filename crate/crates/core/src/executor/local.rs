use std::process::Command;

use super::{spawn_logged, ExecError, Executor, ImageBuildSpec, RunResult, RunSpec};
use std::io::Write;

/// Variables a container would never inherit from the host. Dropping them
/// keeps host runs equivalent to container runs.
const SCRUBBED_ENV: &[&str] = &["FULL"];

/// Run `r.command` on the host, in the directory mounted at `r.workdir`.
pub fn run_local(r: &RunSpec) -> Result<RunResult, ExecError> {
    r.validate()?;
    let Some((program, args)) = r.command.split_first() else {
        return Err(ExecError::InvalidSpec(
            "the host backend needs an explicit command".into(),
        ));
    };
    let cwd = r.host_workdir().ok_or_else(|| {
        ExecError::InvalidSpec(format!(
            "nothing is mounted at the working directory {}",
            r.workdir
        ))
    })?;
    let mut cmd = Command::new(program);
    cmd.args(args).current_dir(cwd);
    for name in SCRUBBED_ENV {
        cmd.env_remove(name);
    }
    cmd.envs(&r.env);
    spawn_logged(cmd, &r.log_path)
}

/// Runs commands directly on the host. Image builds are no-ops.
#[derive(Debug, Clone, Default)]
pub struct LocalExecutor;

impl Executor for LocalExecutor {
    fn name(&self) -> String {
        "local".into()
    }

    fn build_image(&self, spec: &ImageBuildSpec) -> Result<RunResult, ExecError> {
        spec.validate()?;
        let mut log = super::open_log(&spec.log_path)?;
        writeln!(log, "local backend: image build for `{}` skipped", spec.tag).map_err(
            |source| ExecError::Io {
                path: spec.log_path.clone(),
                source,
            },
        )?;
        Ok(RunResult {
            exit_code: 0,
            log_path: spec.log_path.clone(),
        })
    }

    fn run(&self, spec: &RunSpec) -> Result<RunResult, ExecError> {
        run_local(spec)
    }

    fn uses_images(&self) -> bool {
        false
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use std::fs;

    fn spec(dir: &std::path::Path, cmd: &[&str]) -> RunSpec {
        RunSpec::in_project(
            "unused",
            dir,
            cmd.iter().map(|s| s.to_string()).collect(),
            dir.join("logs/x.log"),
        )
    }

    #[test]
    fn true_and_false() {
        let dir = tempfile::tempdir().unwrap();
        let ok = run_local(&spec(dir.path(), &["true"])).unwrap();
        assert_eq!(ok.exit_code, 0);
        assert_eq!(fs::read(&ok.log_path).unwrap(), b"");
        let bad = run_local(&spec(dir.path(), &["false"])).unwrap();
        assert_eq!(bad.exit_code, 1);
    }

    #[test]
    fn writes_into_mounted_dir() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("artifacts")).unwrap();
        let r = run_local(&spec(
            dir.path(),
            &["sh", "-c", "echo hi > artifacts/out.txt"],
        ))
        .unwrap();
        assert!(r.success());
        assert_eq!(
            fs::read_to_string(dir.path().join("artifacts/out.txt")).unwrap(),
            "hi\n"
        );
    }

    #[test]
    fn full_only_when_requested() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec(dir.path(), &["sh", "-c", "echo \"FULL=${FULL-unset}\""]);
        run_local(&s).unwrap();
        s.env.insert("FULL".into(), "1".into());
        run_local(&s).unwrap();
        assert_eq!(
            fs::read_to_string(&s.log_path).unwrap(),
            "FULL=unset\nFULL=1\n"
        );
    }

    #[test]
    fn errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            run_local(&spec(dir.path(), &[])),
            Err(ExecError::InvalidSpec(_))
        ));
        assert!(matches!(
            run_local(&spec(dir.path(), &["no-such-program-texbuild"])),
            Err(ExecError::Spawn { .. })
        ));
    }
}
