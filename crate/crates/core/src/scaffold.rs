//! `init`: a new project that builds reproducibly with the defaults.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// File name and contents of every scaffold file, in creation order.
pub const TEMPLATES: &[(&str, &str)] = &[
    ("document.conf", include_str!("../templates/document.conf")),
    ("Makefile", include_str!("../templates/Makefile")),
    ("ms.tex", include_str!("../templates/ms.tex")),
    ("ms.bib", include_str!("../templates/ms.bib")),
    ("main.py", include_str!("../templates/main.py")),
    ("Containerfile", include_str!("../templates/Containerfile")),
    (
        "requirements.txt",
        include_str!("../templates/requirements.txt"),
    ),
];

#[derive(Debug, Error)]
pub enum ScaffoldError {
    #[error("{} is not empty; refusing to overwrite", .0.display())]
    NotEmpty(PathBuf),
    #[error("{} exists and is not a directory", .0.display())]
    NotADirectory(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Write the template project into `dir`, which must be missing or empty.
///
/// `name` replaces the placeholder document title. Returns the created
/// paths in creation order.
pub fn init_project(dir: &Path, name: Option<&str>) -> Result<Vec<PathBuf>, ScaffoldError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ScaffoldError::Io { path, source }
    };
    match fs::metadata(dir) {
        Ok(meta) if !meta.is_dir() => return Err(ScaffoldError::NotADirectory(dir.to_path_buf())),
        Ok(_) => {
            let mut entries = fs::read_dir(dir).map_err(io_err(dir))?;
            if entries.next().is_some() {
                return Err(ScaffoldError::NotEmpty(dir.to_path_buf()));
            }
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        Err(e) => return Err(io_err(dir)(e)),
    }

    let mut created = Vec::with_capacity(TEMPLATES.len());
    for (file, contents) in TEMPLATES {
        let path = dir.join(file);
        let contents = match (*file, name) {
            ("ms.tex", Some(title)) => contents.replace("Document Title", title),
            _ => contents.to_string(),
        };
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .and_then(|mut f| io::Write::write_all(&mut f, contents.as_bytes()))
            .map_err(io_err(&path))?;
        created.push(path);
    }
    Ok(created)
}
