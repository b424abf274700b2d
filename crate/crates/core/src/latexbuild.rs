//! Deterministic multi-pass LaTeX compilation.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::depgraph::{digest_if_exists, strip_comment, ContentDigest};
use crate::executor::{ExecError, Executor, RunSpec};
use crate::manifest::ProjectManifest;

/// pdfTeX primitives that drop the creation date, the banner and the
/// randomized trailer ID from the output.
pub const REPRODUCIBILITY_PRIMITIVES: [&str; 3] = [
    r"\pdfinfoomitdate=1",
    r"\pdfsuppressptexinfo=-1",
    r"\pdftrailerid{}",
];

pub const DEFAULT_MAX_PASSES: u32 = 5;

/// Intermediate files removed before the first pass so every compilation
/// starts from the same state.
const SCRATCH_EXTENSIONS: &[&str] = &["aux", "bbl", "blg", "out", "toc", "lof", "lot"];

#[derive(Debug, Error)]
pub enum CompileError {
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("missing input {0}")]
    MissingInput(PathBuf),
    #[error("LaTeX engine failed on pass {pass} with exit code {exit_code}; see {}", log.display())]
    EngineFailed {
        pass: u32,
        exit_code: i32,
        log: PathBuf,
    },
    #[error("bibliography processor failed with exit code {exit_code}; see {}", log.display())]
    BibliographyFailed { exit_code: i32, log: PathBuf },
    #[error("{} still changing after {passes} passes", aux.display())]
    NoFixedPoint { aux: PathBuf, passes: u32 },
    #[error("engine finished but {} was not produced", .0.display())]
    PdfMissing(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileRecipe {
    pub engine: Vec<String>,
    pub bibliography: Vec<String>,
    pub pre_commands: String,
    pub env: BTreeMap<String, String>,
    pub max_passes: u32,
}

impl CompileRecipe {
    pub fn deterministic(m: &ProjectManifest) -> Self {
        let env = [
            ("SOURCE_DATE_EPOCH", "0"),
            ("FORCE_SOURCE_DATE", "1"),
            ("TZ", "UTC"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        CompileRecipe {
            engine: m.expand(&m.latex_engine_command),
            bibliography: m.expand(&m.bibliography_command),
            pre_commands: REPRODUCIBILITY_PRIMITIVES.concat(),
            env,
            max_passes: DEFAULT_MAX_PASSES,
        }
    }

    /// Same engine and passes with every determinism setting removed. Only
    /// useful to demonstrate what the settings protect against.
    pub fn without_reproducibility_flags(m: &ProjectManifest) -> Self {
        CompileRecipe {
            pre_commands: String::new(),
            env: BTreeMap::new(),
            ..Self::deterministic(m)
        }
    }

    pub fn is_deterministic(&self) -> bool {
        REPRODUCIBILITY_PRIMITIVES
            .iter()
            .all(|p| self.pre_commands.contains(p))
    }

    /// Final engine argument: the primitives followed by `\input{main}`.
    pub fn document_argument(&self, latex_main: &str) -> String {
        format!("{}\\input{{{latex_main}}}", self.pre_commands)
    }

    pub fn engine_argv(&self, latex_main: &str) -> Vec<String> {
        let mut argv = self.engine.clone();
        argv.push(self.document_argument(latex_main));
        argv
    }
}

/// Whether the source asks for a bibliography at all.
pub fn references_bibliography(tex: &str) -> bool {
    tex.lines()
        .map(strip_comment)
        .any(|l| l.contains(r"\bibliography{") || l.contains(r"\addbibresource"))
}

fn has_citations(aux: &[u8]) -> bool {
    aux.windows(b"\\citation".len()).any(|w| w == b"\\citation")
}

/// Compile `m.latex_main` into `<artifacts_dir>/<stem>.pdf`, appending the
/// engine and bibliography output to `log`.
///
/// The engine runs in `m.latex_image` with the project mounted at the
/// working directory (the host backend ignores the image).
pub fn compile_document(
    m: &ProjectManifest,
    executor: &dyn Executor,
    recipe: &CompileRecipe,
    log: &Path,
) -> Result<PathBuf, CompileError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CompileError::Io { path, source }
    };
    let main = m.path(&m.latex_main);
    let tex = match fs::read(&main) {
        Ok(b) => String::from_utf8_lossy(&b).into_owned(),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(CompileError::MissingInput(main))
        }
        Err(e) => return Err(io_err(&main)(e)),
    };
    let out_dir = m.artifacts_path();
    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let stem = m.stem();
    for ext in SCRATCH_EXTENSIONS {
        let p = out_dir.join(format!("{stem}.{ext}"));
        match fs::remove_file(&p) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(io_err(&p)(e)),
            _ => {}
        }
    }
    let aux = out_dir.join(format!("{stem}.aux"));
    let pdf = out_dir.join(format!("{stem}.pdf"));

    let spec = |command: Vec<String>| {
        let mut s = RunSpec::in_project(&m.latex_image, &m.root, command, log.to_path_buf());
        s.env = recipe.env.clone();
        s
    };
    let engine = spec(recipe.engine_argv(&m.latex_main));
    let aux_digest = || -> Result<Option<ContentDigest>, CompileError> {
        digest_if_exists(&aux).map_err(io_err(&aux))
    };
    let run_engine = |pass: u32| -> Result<Option<ContentDigest>, CompileError> {
        log::debug!("latex pass {pass}");
        let r = executor.run(&engine)?;
        if !r.success() {
            return Err(CompileError::EngineFailed {
                pass,
                exit_code: r.exit_code,
                log: r.log_path,
            });
        }
        aux_digest()
    };

    let max = recipe.max_passes.max(2);
    let mut previous = run_engine(1)?;
    let mut pass = 1;

    if !recipe.bibliography.is_empty() && references_bibliography(&tex) {
        let aux_bytes = fs::read(&aux).unwrap_or_default();
        if has_citations(&aux_bytes) {
            let r = executor.run(&spec(recipe.bibliography.clone()))?;
            if !r.success() {
                return Err(CompileError::BibliographyFailed {
                    exit_code: r.exit_code,
                    log: r.log_path,
                });
            }
        }
    }

    loop {
        pass += 1;
        let current = run_engine(pass)?;
        if current == previous {
            break;
        }
        if pass >= max {
            return Err(CompileError::NoFixedPoint { aux, passes: pass });
        }
        previous = current;
    }

    if !pdf.is_file() {
        return Err(CompileError::PdfMissing(pdf));
    }
    Ok(pdf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{ImageBuildSpec, RunResult};
    use std::cell::RefCell;

    #[test]
    fn recipe_contents() {
        let m = ProjectManifest::with_defaults(PathBuf::from("/p"));
        let r = CompileRecipe::deterministic(&m);
        assert_eq!(
            r.pre_commands,
            r"\pdfinfoomitdate=1\pdfsuppressptexinfo=-1\pdftrailerid{}"
        );
        assert!(r.is_deterministic());
        assert_eq!(r.env["SOURCE_DATE_EPOCH"], "0");
        assert_eq!(r.env["FORCE_SOURCE_DATE"], "1");
        assert_eq!(r.env["TZ"], "UTC");
        assert_eq!(r.max_passes, 5);
        let argv = r.engine_argv("ms.tex");
        assert_eq!(argv[0], "pdflatex");
        assert!(argv.contains(&"-output-directory".to_string()));
        assert!(argv.contains(&"artifacts".to_string()));
        assert_eq!(
            argv.last().unwrap(),
            r"\pdfinfoomitdate=1\pdfsuppressptexinfo=-1\pdftrailerid{}\input{ms.tex}"
        );
        assert_eq!(r.bibliography, ["bibtex", "artifacts/ms"]);
        let plain = CompileRecipe::without_reproducibility_flags(&m);
        assert!(!plain.is_deterministic());
        assert_eq!(
            plain.engine_argv("ms.tex").last().unwrap(),
            r"\input{ms.tex}"
        );
    }

    #[test]
    fn bibliography_detection() {
        assert!(references_bibliography("\\bibliography{ms}\n"));
        assert!(references_bibliography("\\addbibresource{ms.bib}"));
        assert!(!references_bibliography("% \\bibliography{ms}\n"));
        assert!(!references_bibliography("\\bibliographystyle{plain}"));
        assert!(has_citations(b"\\relax\n\\citation{knuth}\n"));
        assert!(!has_citations(b"\\relax\n"));
    }

    /// Scripted engine: each call runs the next closure on the project root.
    struct Scripted {
        root: PathBuf,
        calls: RefCell<Vec<Vec<String>>>,
        aux_per_pass: Vec<&'static str>,
        fail_on: Option<usize>,
    }

    impl Executor for Scripted {
        fn name(&self) -> String {
            "scripted".into()
        }
        fn build_image(&self, _: &ImageBuildSpec) -> Result<RunResult, ExecError> {
            unreachable!()
        }
        fn run(&self, spec: &RunSpec) -> Result<RunResult, ExecError> {
            let mut calls = self.calls.borrow_mut();
            calls.push(spec.command.clone());
            let engine_calls = calls.iter().filter(|c| c[0] == "pdflatex").count();
            let failed = self.fail_on == Some(calls.len());
            if spec.command[0] == "pdflatex" && !failed {
                let i = (engine_calls - 1).min(self.aux_per_pass.len() - 1);
                fs::write(self.root.join("artifacts/ms.aux"), self.aux_per_pass[i]).unwrap();
                fs::write(self.root.join("artifacts/ms.pdf"), "%PDF-1.5\n").unwrap();
            }
            Ok(RunResult {
                exit_code: i32::from(failed),
                log_path: spec.log_path.clone(),
            })
        }
    }

    fn project(tex: &str) -> (tempfile::TempDir, ProjectManifest) {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("ms.tex"), tex).unwrap();
        let m = ProjectManifest::with_defaults(dir.path().to_path_buf());
        (dir, m)
    }

    fn scripted(m: &ProjectManifest, aux: Vec<&'static str>, fail_on: Option<usize>) -> Scripted {
        Scripted {
            root: m.root.clone(),
            calls: RefCell::new(Vec::new()),
            aux_per_pass: aux,
            fail_on,
        }
    }

    #[test]
    fn no_citations_skips_bibliography() {
        let (_d, m) = project("\\bibliography{ms}\n");
        let ex = scripted(&m, vec!["\\relax\n"], None);
        let log = m.logs_path().join("compile-latex.log");
        let pdf = compile_document(&m, &ex, &CompileRecipe::deterministic(&m), &log).unwrap();
        assert_eq!(pdf, m.root.join("artifacts/ms.pdf"));
        let calls = ex.calls.borrow();
        assert_eq!(calls.len(), 2);
        assert!(calls.iter().all(|c| c[0] == "pdflatex"));
    }

    #[test]
    fn citations_trigger_bibliography_and_extra_passes() {
        let (_d, m) = project("\\cite{k}\\bibliography{ms}\n");
        let ex = scripted(
            &m,
            vec!["\\citation{k}\n", "\\citation{k}\n\\bibcite{k}{1}\n"],
            None,
        );
        let log = m.logs_path().join("compile-latex.log");
        compile_document(&m, &ex, &CompileRecipe::deterministic(&m), &log).unwrap();
        let programs: Vec<String> = ex.calls.borrow().iter().map(|c| c[0].clone()).collect();
        assert_eq!(programs, ["pdflatex", "bibtex", "pdflatex", "pdflatex"]);
    }

    #[test]
    fn oscillating_aux_is_reported() {
        let (_d, m) = project("x\n");
        let ex = scripted(&m, vec!["1", "2", "3", "4", "5", "6"], None);
        let log = m.logs_path().join("compile-latex.log");
        let err = compile_document(&m, &ex, &CompileRecipe::deterministic(&m), &log).unwrap_err();
        match err {
            CompileError::NoFixedPoint { aux, passes } => {
                assert!(aux.ends_with("artifacts/ms.aux"));
                assert_eq!(passes, 5);
            }
            other => panic!("{other}"),
        }
        assert_eq!(ex.calls.borrow().len(), 5);
    }

    #[test]
    fn engine_failure_surfaces_log() {
        let (_d, m) = project("x\n");
        let ex = scripted(&m, vec!["1"], Some(2));
        let log = m.logs_path().join("compile-latex.log");
        match compile_document(&m, &ex, &CompileRecipe::deterministic(&m), &log).unwrap_err() {
            CompileError::EngineFailed {
                pass,
                exit_code,
                log: l,
            } => {
                assert_eq!((pass, exit_code), (2, 1));
                assert_eq!(l, log);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn stale_aux_is_removed_first() {
        let (_d, m) = project("x\n");
        fs::create_dir_all(m.artifacts_path()).unwrap();
        fs::write(m.artifacts_path().join("ms.bbl"), "old").unwrap();
        let ex = scripted(&m, vec!["same"], None);
        let log = m.logs_path().join("compile-latex.log");
        compile_document(&m, &ex, &CompileRecipe::deterministic(&m), &log).unwrap();
        assert!(!m.artifacts_path().join("ms.bbl").exists());
    }

    #[test]
    fn missing_main() {
        let dir = tempfile::tempdir().unwrap();
        let m = ProjectManifest::with_defaults(dir.path().to_path_buf());
        let ex = scripted(&m, vec!["x"], None);
        let err = compile_document(
            &m,
            &ex,
            &CompileRecipe::deterministic(&m),
            &dir.path().join("l"),
        )
        .unwrap_err();
        assert!(matches!(err, CompileError::MissingInput(_)));
    }
}
