//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use texbuild_core::executor::find_on_path;

pub const STUB_PDFLATEX: &str = include_str!("pdflatex");
pub const STUB_BIBTEX: &str = include_str!("bibtex");

/// `PATH` for child processes, with the stand-in TeX tools first unless
/// a real installation is present and `prefer_real` is set.
pub struct TexPath {
    _dir: Option<tempfile::TempDir>,
    pub path: OsString,
    pub real: bool,
}

pub fn real_tex_available() -> bool {
    find_on_path("pdflatex").is_some() && find_on_path("bibtex").is_some()
}

pub fn tex_path(prefer_real: bool) -> TexPath {
    let inherited = std::env::var_os("PATH").unwrap_or_default();
    if prefer_real && real_tex_available() {
        return TexPath {
            _dir: None,
            path: inherited,
            real: true,
        };
    }
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [("pdflatex", STUB_PDFLATEX), ("bibtex", STUB_BIBTEX)] {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        fs::set_permissions(&p, fs::Permissions::from_mode(0o755)).unwrap();
    }
    let mut paths = vec![dir.path().to_path_buf()];
    paths.extend(std::env::split_paths(&inherited));
    TexPath {
        path: std::env::join_paths(paths).unwrap(),
        _dir: Some(dir),
        real: false,
    }
}

pub fn texbuild_cmd(project: &Path, path: &OsString) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_texbuild"));
    c.arg("--project")
        .arg(project)
        .env_remove("FULL")
        .env_remove("RUST_LOG")
        .env("PATH", path);
    c
}

pub fn texbuild(project: &Path, path: &OsString, args: &[&str]) -> Output {
    texbuild_cmd(project, path).args(args).output().unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Steps reported as executed by `build`, in order.
pub fn executed(o: &Output) -> Vec<String> {
    stderr(o)
        .lines()
        .filter_map(|l| l.strip_prefix("executed "))
        .map(|l| l.split_whitespace().next().unwrap_or("").to_string())
        .collect()
}

/// Every regular file under `dir` with its bytes, keyed by relative path.
pub fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let Ok(entries) = fs::read_dir(dir) else {
            return;
        };
        for e in entries {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Files, directories and their modification times under `dir`.
pub fn listing(dir: &Path) -> BTreeMap<PathBuf, (bool, std::time::SystemTime, u64)> {
    fn walk(
        root: &Path,
        dir: &Path,
        out: &mut BTreeMap<PathBuf, (bool, std::time::SystemTime, u64)>,
    ) {
        let Ok(entries) = fs::read_dir(dir) else {
            return;
        };
        for e in entries {
            let p = e.unwrap().path();
            let meta = fs::metadata(&p).unwrap();
            out.insert(
                p.strip_prefix(root).unwrap().to_path_buf(),
                (meta.is_dir(), meta.modified().unwrap(), meta.len()),
            );
            if meta.is_dir() {
                walk(root, &p, out);
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn append(path: &Path, text: &str) {
    let mut s = fs::read_to_string(path).unwrap();
    s.push_str(text);
    fs::write(path, s).unwrap();
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pdf")
}
