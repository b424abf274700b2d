//! Project description: which files play which role in a document build.
//!
//! A project with no configuration file is described entirely by naming
//! conventions (`ms.tex`, `ms.bib`, `main.py`, `Containerfile`,
//! `requirements.txt`, `artifacts/`). The optional `document.conf` file only
//! overrides those defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Name of the optional per-project configuration file.
pub const CONFIG_FILE_NAME: &str = "document.conf";

/// Default LaTeX image. A frozen TeX Live release, so repeated pulls yield the
/// same toolchain.
pub const DEFAULT_LATEX_IMAGE: &str = "docker.io/texlive/texlive:TL2023-historic";

/// Placeholder expanded to the artifacts directory in engine argument vectors.
pub const ARTIFACTS_PLACEHOLDER: &str = "{artifacts_dir}";
/// Placeholder expanded to the stem of `latex_main` in engine argument vectors.
pub const STEM_PLACEHOLDER: &str = "{stem}";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is not a directory")]
    NotADirectory(PathBuf),
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: malformed line, expected `key = value`")]
    Malformed { line: usize },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

/// Draft (fast) or full (slow, publication quality) results generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum BuildMode {
    #[default]
    Draft,
    Full,
}

impl BuildMode {
    /// Environment the results program sees: `FULL=1` in full mode, nothing
    /// in draft mode.
    pub fn env(self) -> Option<(&'static str, &'static str)> {
        match self {
            BuildMode::Draft => None,
            BuildMode::Full => Some(("FULL", "1")),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BuildMode::Draft => "draft",
            BuildMode::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "draft" => Some(BuildMode::Draft),
            "full" => Some(BuildMode::Full),
            _ => None,
        }
    }
}

impl fmt::Display for BuildMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectManifest {
    /// Absolute project directory; every other path is relative to it.
    pub root: PathBuf,
    pub latex_main: String,
    pub bibliography: Option<String>,
    pub results_sources: Vec<String>,
    pub containerfile: String,
    /// Files besides the containerfile that define the results image.
    pub container_context_extras: Vec<String>,
    pub artifacts_dir: String,
    pub image_tag: String,
    /// Empty means "the image's default command".
    pub results_command: Vec<String>,
    /// Engine argument prefix; the document input argument is appended.
    pub latex_engine_command: Vec<String>,
    pub bibliography_command: Vec<String>,
    pub latex_image: String,
}

impl ProjectManifest {
    /// All-defaults manifest rooted at `root` (no filesystem access).
    pub fn with_defaults(root: PathBuf) -> Self {
        let image_tag = default_image_tag(&root);
        ProjectManifest {
            root,
            latex_main: "ms.tex".into(),
            bibliography: Some("ms.bib".into()),
            results_sources: vec!["main.py".into()],
            containerfile: "Containerfile".into(),
            container_context_extras: vec!["requirements.txt".into()],
            artifacts_dir: "artifacts".into(),
            image_tag,
            results_command: Vec::new(),
            latex_engine_command: default_engine_command(),
            bibliography_command: default_bibliography_command(),
            latex_image: DEFAULT_LATEX_IMAGE.into(),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn artifacts_path(&self) -> PathBuf {
        self.root.join(&self.artifacts_dir)
    }

    /// File stem of `latex_main`, e.g. `ms` for `ms.tex`.
    pub fn stem(&self) -> String {
        Path::new(&self.latex_main)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.latex_main.clone())
    }

    /// Project-relative path of the produced PDF.
    pub fn pdf_rel(&self) -> String {
        format!("{}/{}.pdf", self.artifacts_dir, self.stem())
    }

    pub fn state_store_path(&self) -> PathBuf {
        self.artifacts_path().join(".build-state")
    }

    pub fn lock_path(&self) -> PathBuf {
        self.artifacts_path().join(".lock")
    }

    pub fn logs_path(&self) -> PathBuf {
        self.artifacts_path().join("logs")
    }

    /// Replace `{artifacts_dir}` and `{stem}` in an argument vector.
    pub fn expand(&self, argv: &[String]) -> Vec<String> {
        let stem = self.stem();
        argv.iter()
            .map(|a| {
                a.replace(ARTIFACTS_PLACEHOLDER, &self.artifacts_dir)
                    .replace(STEM_PLACEHOLDER, &stem)
            })
            .collect()
    }

    /// Serialize to the `document.conf` format. Every field is written, so
    /// loading the result reproduces this manifest exactly.
    pub fn to_conf_string(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            if v.is_empty() {
                out.push_str(" =\n");
            } else {
                out.push_str(" = ");
                out.push_str(&v);
                out.push('\n');
            }
        };
        kv("latex_main", self.latex_main.clone());
        kv(
            "bibliography",
            self.bibliography.clone().unwrap_or_default(),
        );
        kv("results_sources", self.results_sources.join(", "));
        kv("containerfile", self.containerfile.clone());
        kv(
            "container_context_extras",
            self.container_context_extras.join(", "),
        );
        kv("artifacts_dir", self.artifacts_dir.clone());
        kv("image_tag", self.image_tag.clone());
        kv("results_command", self.results_command.join(", "));
        kv("latex_engine_command", self.latex_engine_command.join(", "));
        kv("bibliography_command", self.bibliography_command.join(", "));
        kv("latex_image", self.latex_image.clone());
        out
    }
}

pub fn default_engine_command() -> Vec<String> {
    [
        "pdflatex",
        "-interaction=nonstopmode",
        "-halt-on-error",
        "-jobname={stem}",
        "-output-directory",
        "{artifacts_dir}",
    ]
    .map(String::from)
    .to_vec()
}

pub fn default_bibliography_command() -> Vec<String> {
    vec!["bibtex".into(), "{artifacts_dir}/{stem}".into()]
}

/// `<dir-name>-results`, lowercased and restricted to characters container
/// runtimes accept in a repository name.
fn default_image_tag(root: &Path) -> String {
    let name = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "document".into());
    let cleaned: String = name
        .chars()
        .map(|c| {
            let c = c.to_ascii_lowercase();
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '-'
            }
        })
        .collect();
    let cleaned = cleaned.trim_matches(|c| matches!(c, '.' | '_' | '-'));
    if cleaned.is_empty() {
        "document-results".into()
    } else {
        format!("{cleaned}-results")
    }
}

fn absolute_dir(dir: &Path) -> Result<PathBuf, ManifestError> {
    let meta = fs::metadata(dir).map_err(|source| ManifestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    if !meta.is_dir() {
        return Err(ManifestError::NotADirectory(dir.to_path_buf()));
    }
    dir.canonicalize().map_err(|source| ManifestError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// The all-defaults manifest for `dir`. File presence is not checked here.
pub fn infer_manifest(dir: &Path) -> Result<ProjectManifest, ManifestError> {
    Ok(ProjectManifest::with_defaults(absolute_dir(dir)?))
}

/// Load `document.conf`-style overrides from `path`; omitted keys keep their
/// defaults and the project root is the file's directory.
pub fn load_manifest(path: &Path) -> Result<ProjectManifest, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let root = absolute_dir(&parent)?;
    parse_manifest(&text, root)
}

/// Locate the project in `dir`: load its `document.conf` if present,
/// otherwise infer the conventional layout.
pub fn discover(dir: &Path) -> Result<ProjectManifest, ManifestError> {
    let conf = dir.join(CONFIG_FILE_NAME);
    if conf.is_file() {
        load_manifest(&conf)
    } else {
        infer_manifest(dir)
    }
}

pub fn parse_manifest(text: &str, root: PathBuf) -> Result<ProjectManifest, ManifestError> {
    let mut m = ProjectManifest::with_defaults(root);
    let mut seen: Vec<String> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ManifestError::Malformed { line });
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ManifestError::Malformed { line });
        }
        if seen.iter().any(|k| k == key) {
            return Err(ManifestError::DuplicateKey {
                line,
                key: key.into(),
            });
        }
        seen.push(key.into());

        let invalid = |message: &str| ManifestError::Invalid {
            line,
            message: message.into(),
        };
        match key {
            "latex_main" => {
                m.latex_main =
                    non_empty(value).ok_or_else(|| invalid("latex_main must not be empty"))?
            }
            "bibliography" => m.bibliography = non_empty(value),
            "results_sources" => m.results_sources = split_list(value),
            "containerfile" => {
                m.containerfile =
                    non_empty(value).ok_or_else(|| invalid("containerfile must not be empty"))?
            }
            "container_context_extras" => m.container_context_extras = split_list(value),
            "artifacts_dir" => {
                if !is_single_component(value) {
                    return Err(invalid("artifacts_dir must be a single path component"));
                }
                m.artifacts_dir = value.into();
            }
            "image_tag" => {
                if !is_valid_tag(value) {
                    return Err(invalid(
                        "image_tag must be non-empty and contain no whitespace",
                    ));
                }
                m.image_tag = value.into();
            }
            "results_command" => m.results_command = split_list(value),
            "latex_engine_command" => {
                m.latex_engine_command = split_list(value);
                if m.latex_engine_command.is_empty() {
                    return Err(invalid("latex_engine_command must not be empty"));
                }
            }
            "bibliography_command" => m.bibliography_command = split_list(value),
            "latex_image" => {
                m.latex_image =
                    non_empty(value).ok_or_else(|| invalid("latex_image must not be empty"))?
            }
            other => {
                return Err(ManifestError::UnknownKey {
                    line,
                    key: other.into(),
                })
            }
        }
    }
    Ok(m)
}

fn non_empty(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn is_single_component(value: &str) -> bool {
    !value.is_empty() && value != "." && value != ".." && !value.contains(['/', '\\'])
}

fn is_valid_tag(value: &str) -> bool {
    !value.is_empty() && !value.contains(char::is_whitespace)
}

/// One failed manifest invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub path: Option<PathBuf>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.path {
            Some(p) => write!(f, "{}: {} ({})", self.field, self.message, p.display()),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Check every manifest invariant against the filesystem. An empty list
/// means the project is buildable. The bibliography is optional and never
/// reported.
pub fn validate_manifest(m: &ProjectManifest) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut require_file = |field: &'static str, rel: &str| {
        let p = m.path(rel);
        if !p.is_file() {
            out.push(Violation {
                field,
                path: Some(p),
                message: "file not found".into(),
            });
        }
    };
    require_file("latex_main", &m.latex_main);
    require_file("containerfile", &m.containerfile);
    for src in &m.results_sources {
        require_file("results_sources", src);
    }
    if !is_single_component(&m.artifacts_dir) {
        out.push(Violation {
            field: "artifacts_dir",
            path: None,
            message: "artifacts_dir must be a single path component".into(),
        });
    }
    if !is_valid_tag(&m.image_tag) {
        out.push(Violation {
            field: "image_tag",
            path: None,
            message: "image_tag must be non-empty and contain no whitespace".into(),
        });
    }
    out
}
