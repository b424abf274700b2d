//! The build DAG and content-addressed staleness.
//!
//! Three fixed steps form the pipeline: the results image is built from the
//! containerfile and its context files, the results program runs in that
//! image and writes into the artifacts directory, and LaTeX compiles the
//! document from the LaTeX sources plus every artifact it references.

mod digest;
mod scan;
mod state;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::manifest::{BuildMode, ProjectManifest};

pub use digest::{compute_digest, digest_if_exists, ContentDigest, InvalidDigest};
pub use scan::scan_latex_dependencies;
pub(crate) use scan::strip_comment;
pub use state::{StateError, StateStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Source,
    Image,
    ResultsArtifact,
    DocumentPdf,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Source => "source",
            NodeKind::Image => "image",
            NodeKind::ResultsArtifact => "results_artifact",
            NodeKind::DocumentPdf => "document_pdf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "source" => NodeKind::Source,
            "image" => NodeKind::Image,
            "results_artifact" => NodeKind::ResultsArtifact,
            "document_pdf" => NodeKind::DocumentPdf,
            _ => return None,
        })
    }
}

/// A node: a project-relative file path, or the image tag for the image node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub kind: NodeKind,
    pub key: String,
}

impl NodeId {
    pub fn new(kind: NodeKind, key: impl Into<String>) -> Self {
        NodeId {
            kind,
            key: key.into(),
        }
    }

    pub fn is_file(&self) -> bool {
        self.kind != NodeKind::Image
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.key)
    }
}

/// The three pipeline steps, declared in their only valid execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepKind {
    BuildImage,
    RunResults,
    CompileLatex,
}

impl StepKind {
    pub const ALL: [StepKind; 3] = [
        StepKind::BuildImage,
        StepKind::RunResults,
        StepKind::CompileLatex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StepKind::BuildImage => "BuildImage",
            StepKind::RunResults => "RunResults",
            StepKind::CompileLatex => "CompileLatex",
        }
    }

    /// File name stem used for the step's log.
    pub fn log_name(self) -> &'static str {
        match self {
            StepKind::BuildImage => "build-image",
            StepKind::RunResults => "run-results",
            StepKind::CompileLatex => "compile-latex",
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub kind: StepKind,
    pub inputs: Vec<NodeId>,
    pub outputs: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildGraph {
    pub nodes: BTreeSet<NodeId>,
    /// (prerequisite, dependent) pairs.
    pub edges: BTreeSet<(NodeId, NodeId)>,
    /// Steps in topological order.
    pub steps: Vec<Step>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("dependency cycle: {0}")]
    Cycle(String),
    #[error("{0} is referenced by the document but lies outside the artifacts directory")]
    OutsideArtifacts(String),
    #[error("{node} is produced by both {first} and {second}")]
    ConflictingProducers {
        node: String,
        first: StepKind,
        second: StepKind,
    },
}

impl BuildGraph {
    pub fn step(&self, kind: StepKind) -> &Step {
        self.steps
            .iter()
            .find(|s| s.kind == kind)
            .expect("every graph has all three steps")
    }

    /// Steps whose outputs `kind` consumes.
    pub fn prerequisites(&self, kind: StepKind) -> Vec<StepKind> {
        let step = self.step(kind);
        self.steps
            .iter()
            .filter(|s| s.kind != kind && s.outputs.iter().any(|o| step.inputs.contains(o)))
            .map(|s| s.kind)
            .collect()
    }

    /// Graphviz rendering with a stable node and edge order.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph build {\n  rankdir=LR;\n");
        for n in &self.nodes {
            let shape = match n.kind {
                NodeKind::Source => "note",
                NodeKind::Image => "box3d",
                NodeKind::ResultsArtifact => "folder",
                NodeKind::DocumentPdf => "doubleoctagon",
            };
            out.push_str(&format!("  \"{n}\" [shape={shape}];\n"));
        }
        for step in &self.steps {
            for i in &step.inputs {
                for o in &step.outputs {
                    out.push_str(&format!(
                        "  \"{i}\" -> \"{o}\" [label=\"{}\"];\n",
                        step.kind
                    ));
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Wire the three steps for manifest `m`; every path in `latex_deps` becomes
/// a results artifact produced by the results run and consumed by LaTeX.
pub fn build_graph(m: &ProjectManifest, latex_deps: &[String]) -> Result<BuildGraph, GraphError> {
    let prefix = format!("{}/", m.artifacts_dir);
    let source = |p: &str| NodeId::new(NodeKind::Source, p);
    let pdf = NodeId::new(NodeKind::DocumentPdf, m.pdf_rel());
    let image = NodeId::new(NodeKind::Image, m.image_tag.clone());

    let mut sources: BTreeSet<String> = BTreeSet::new();
    sources.insert(m.latex_main.clone());
    sources.extend(m.bibliography.iter().cloned());
    sources.extend(m.results_sources.iter().cloned());
    sources.insert(m.containerfile.clone());
    sources.extend(m.container_context_extras.iter().cloned());

    let mut artifacts: Vec<NodeId> = Vec::new();
    for dep in latex_deps {
        if !dep.starts_with(&prefix) {
            return Err(GraphError::OutsideArtifacts(dep.clone()));
        }
        if *dep == m.latex_main {
            return Err(GraphError::Cycle(format!(
                "{dep} is both the LaTeX entry point and a generated artifact"
            )));
        }
        if sources.contains(dep) {
            return Err(GraphError::Cycle(format!(
                "{dep} is both a source file and a generated artifact"
            )));
        }
        if *dep == pdf.key {
            return Err(GraphError::ConflictingProducers {
                node: dep.clone(),
                first: StepKind::RunResults,
                second: StepKind::CompileLatex,
            });
        }
        let node = NodeId::new(NodeKind::ResultsArtifact, dep.clone());
        if !artifacts.contains(&node) {
            artifacts.push(node);
        }
    }

    let mut build_inputs = vec![source(&m.containerfile)];
    build_inputs.extend(m.container_context_extras.iter().map(|p| source(p)));
    dedup(&mut build_inputs);

    let mut run_inputs = vec![image.clone()];
    run_inputs.extend(m.results_sources.iter().map(|p| source(p)));
    dedup(&mut run_inputs);

    let mut compile_inputs = vec![source(&m.latex_main)];
    compile_inputs.extend(m.bibliography.iter().map(|p| source(p)));
    compile_inputs.extend(artifacts.iter().cloned());
    dedup(&mut compile_inputs);

    let steps = vec![
        Step {
            kind: StepKind::BuildImage,
            inputs: build_inputs,
            outputs: vec![image],
        },
        Step {
            kind: StepKind::RunResults,
            inputs: run_inputs,
            outputs: artifacts,
        },
        Step {
            kind: StepKind::CompileLatex,
            inputs: compile_inputs,
            outputs: vec![pdf],
        },
    ];

    let mut nodes = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for s in &steps {
        nodes.extend(s.inputs.iter().cloned());
        nodes.extend(s.outputs.iter().cloned());
        for i in &s.inputs {
            for o in &s.outputs {
                edges.insert((i.clone(), o.clone()));
            }
        }
    }
    let graph = BuildGraph {
        nodes,
        edges,
        steps,
    };
    check_acyclic(&graph)?;
    Ok(graph)
}

fn dedup(v: &mut Vec<NodeId>) {
    let mut seen = BTreeSet::new();
    v.retain(|n| seen.insert(n.clone()));
}

fn check_acyclic(g: &BuildGraph) -> Result<(), GraphError> {
    let mut producers: BTreeMap<&NodeId, StepKind> = BTreeMap::new();
    for s in &g.steps {
        for o in &s.outputs {
            if let Some(first) = producers.insert(o, s.kind) {
                return Err(GraphError::ConflictingProducers {
                    node: o.to_string(),
                    first,
                    second: s.kind,
                });
            }
        }
    }
    // Kahn's algorithm over node edges.
    let mut indegree: BTreeMap<&NodeId, usize> = g.nodes.iter().map(|n| (n, 0)).collect();
    for (_, to) in &g.edges {
        *indegree.get_mut(to).expect("edge endpoints are nodes") += 1;
    }
    let mut ready: Vec<&NodeId> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(n, _)| *n)
        .collect();
    let mut visited = 0usize;
    while let Some(n) = ready.pop() {
        visited += 1;
        for (from, to) in g
            .edges
            .range((n.clone(), NodeId::new(NodeKind::Source, ""))..)
        {
            if from != n {
                break;
            }
            let d = indegree.get_mut(to).expect("edge endpoints are nodes");
            *d -= 1;
            if *d == 0 {
                ready.push(to);
            }
        }
    }
    if visited != g.nodes.len() {
        return Err(GraphError::Cycle(
            "the dependency graph contains a cycle".into(),
        ));
    }
    Ok(())
}

/// Current digests of every node in the graph.
///
/// File nodes map to `None` when the file does not exist. The image node's
/// identity is a digest over the digests of the files that define the image.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Snapshot {
    pub digests: BTreeMap<NodeId, Option<ContentDigest>>,
}

impl Snapshot {
    pub fn take(g: &BuildGraph, root: &Path) -> io::Result<Snapshot> {
        let mut digests = BTreeMap::new();
        for n in g.nodes.iter().filter(|n| n.is_file()) {
            digests.insert(n.clone(), digest_if_exists(&root.join(&n.key))?);
        }
        let build = g.step(StepKind::BuildImage);
        let mut identity = String::new();
        for input in &build.inputs {
            let d = digests.get(input).cloned().flatten();
            let d = d.as_ref().map(ContentDigest::as_str).unwrap_or("absent");
            identity.push_str(&format!("{d} {input}\n"));
        }
        for image in &build.outputs {
            digests.insert(
                image.clone(),
                Some(ContentDigest::of_bytes(identity.as_bytes())),
            );
        }
        Ok(Snapshot { digests })
    }

    pub fn get(&self, n: &NodeId) -> Option<&ContentDigest> {
        self.digests.get(n).and_then(Option::as_ref)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StaleReason {
    Forced,
    InputChanged(NodeId),
    OutputMissing(NodeId),
    UpstreamStale(StepKind),
    ModeChanged {
        previous: Option<BuildMode>,
        requested: BuildMode,
    },
}

impl fmt::Display for StaleReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StaleReason::Forced => f.write_str("forced"),
            StaleReason::InputChanged(n) => write!(f, "input changed: {}", n.key),
            StaleReason::OutputMissing(n) => write!(f, "output missing: {}", n.key),
            StaleReason::UpstreamStale(s) => write!(f, "upstream step stale: {s}"),
            StaleReason::ModeChanged {
                previous: Some(p),
                requested,
            } => write!(f, "mode changed: {p} -> {requested}"),
            StaleReason::ModeChanged {
                previous: None,
                requested,
            } => write!(f, "no previous results run ({requested} requested)"),
        }
    }
}

/// Reasons each step must run; a step with no reasons is fresh.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Staleness {
    pub steps: Vec<(StepKind, Vec<StaleReason>)>,
}

impl Staleness {
    pub fn stale_set(&self) -> BTreeSet<StepKind> {
        self.steps
            .iter()
            .filter(|(_, r)| !r.is_empty())
            .map(|(k, _)| *k)
            .collect()
    }

    pub fn reasons(&self, kind: StepKind) -> &[StaleReason] {
        self.steps
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, r)| r.as_slice())
            .unwrap_or(&[])
    }
}

/// Evaluate the staleness rules against a filesystem snapshot.
///
/// A step is stale when an input digest differs from the store, an output is
/// missing, a prerequisite step is stale, `force` is set, or (results run
/// only) the requested mode differs from the mode of the last results run.
pub fn staleness(
    g: &BuildGraph,
    snapshot: &Snapshot,
    store: &StateStore,
    mode: BuildMode,
    force: bool,
) -> Staleness {
    let mut result: Vec<(StepKind, Vec<StaleReason>)> = Vec::new();
    for step in &g.steps {
        let mut reasons = Vec::new();
        if force {
            reasons.push(StaleReason::Forced);
        }
        for input in &step.inputs {
            if snapshot.get(input) != store.get(input) {
                reasons.push(StaleReason::InputChanged(input.clone()));
            }
        }
        for output in &step.outputs {
            let missing = if output.is_file() {
                snapshot.get(output).is_none()
            } else {
                store.get(output).is_none()
            };
            if missing {
                reasons.push(StaleReason::OutputMissing(output.clone()));
            }
        }
        for pre in g.prerequisites(step.kind) {
            let pre_stale = result.iter().any(|(k, r)| *k == pre && !r.is_empty());
            if pre_stale {
                reasons.push(StaleReason::UpstreamStale(pre));
            }
        }
        if step.kind == StepKind::RunResults && store.mode != Some(mode) {
            reasons.push(StaleReason::ModeChanged {
                previous: store.mode,
                requested: mode,
            });
        }
        result.push((step.kind, reasons));
    }
    Staleness { steps: result }
}

/// Set-valued form of [`staleness`].
pub fn stale_steps(
    g: &BuildGraph,
    snapshot: &Snapshot,
    store: &StateStore,
    mode: BuildMode,
    force: bool,
) -> BTreeSet<StepKind> {
    staleness(g, snapshot, store, mode, force).stale_set()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BuildPlan {
    pub steps: Vec<StepKind>,
}

impl BuildPlan {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn contains(&self, kind: StepKind) -> bool {
        self.steps.contains(&kind)
    }
}

/// Order the stale steps topologically.
pub fn plan(g: &BuildGraph, stale: &BTreeSet<StepKind>) -> BuildPlan {
    BuildPlan {
        steps: g
            .steps
            .iter()
            .map(|s| s.kind)
            .filter(|k| stale.contains(k))
            .collect(),
    }
}

/// Record the executed steps in `store` from a post-execution snapshot and
/// persist it atomically at `path`.
pub fn commit_state(
    store: &StateStore,
    executed: &BuildPlan,
    g: &BuildGraph,
    root: &Path,
    mode: BuildMode,
    path: &Path,
) -> Result<StateStore, StateError> {
    let snapshot = Snapshot::take(g, root).map_err(|source| StateError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let mut next = store.clone();
    next.record(executed, g, &snapshot, mode);
    next.save(path)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::fs;

    fn fig1(dir: &Path) -> ProjectManifest {
        for f in [
            "ms.tex",
            "ms.bib",
            "main.py",
            "Containerfile",
            "requirements.txt",
        ] {
            fs::write(dir.join(f), f).unwrap();
        }
        crate::manifest::infer_manifest(dir).unwrap()
    }

    fn kv_deps() -> Vec<String> {
        vec!["artifacts/keys-values.csv".into()]
    }

    #[test]
    fn fig1_graph_has_eight_nodes() {
        let dir = tempfile::tempdir().unwrap();
        let m = fig1(dir.path());
        let g = build_graph(&m, &kv_deps()).unwrap();
        let keys: Vec<String> = g.nodes.iter().map(|n| n.key.clone()).collect();
        assert_eq!(g.nodes.len(), 8, "{keys:?}");
        for k in [
            "ms.tex",
            "ms.bib",
            "main.py",
            "Containerfile",
            "requirements.txt",
            "artifacts/keys-values.csv",
            "artifacts/ms.pdf",
            m.image_tag.as_str(),
        ] {
            assert!(keys.iter().any(|x| x == k), "missing {k}");
        }
        let order: Vec<StepKind> = g.steps.iter().map(|s| s.kind).collect();
        assert_eq!(order, StepKind::ALL);
        assert_eq!(
            g.prerequisites(StepKind::CompileLatex),
            vec![StepKind::RunResults]
        );
        assert_eq!(
            g.prerequisites(StepKind::RunResults),
            vec![StepKind::BuildImage]
        );
    }

    #[test]
    fn no_artifacts_disconnects_latex_from_results() {
        let dir = tempfile::tempdir().unwrap();
        let g = build_graph(&fig1(dir.path()), &[]).unwrap();
        assert!(g.prerequisites(StepKind::CompileLatex).is_empty());
        assert!(g.step(StepKind::RunResults).outputs.is_empty());
        assert_eq!(
            g.step(StepKind::CompileLatex).outputs,
            vec![NodeId::new(NodeKind::DocumentPdf, "artifacts/ms.pdf")]
        );
    }

    #[test]
    fn structural_errors() {
        let mut m = ProjectManifest::with_defaults("/p".into());
        m.latex_main = "artifacts/ms.tex".into();
        assert!(matches!(
            build_graph(&m, &["artifacts/ms.tex".into()]),
            Err(GraphError::Cycle(_))
        ));
        let m = ProjectManifest::with_defaults("/p".into());
        assert!(matches!(
            build_graph(&m, &["artifacts/ms.pdf".into()]),
            Err(GraphError::ConflictingProducers { .. })
        ));
        assert!(matches!(
            build_graph(&m, &["figs/a.png".into()]),
            Err(GraphError::OutsideArtifacts(_))
        ));
    }

    #[test]
    fn plan_orders_topologically() {
        let g = build_graph(&ProjectManifest::with_defaults("/p".into()), &kv_deps()).unwrap();
        let set = |v: &[StepKind]| v.iter().copied().collect::<BTreeSet<_>>();
        assert_eq!(
            plan(&g, &set(&[StepKind::CompileLatex])).steps,
            vec![StepKind::CompileLatex]
        );
        assert_eq!(
            plan(
                &g,
                &set(&[
                    StepKind::CompileLatex,
                    StepKind::BuildImage,
                    StepKind::RunResults
                ])
            )
            .steps,
            StepKind::ALL.to_vec()
        );
        assert!(plan(&g, &BTreeSet::new()).is_empty());
    }

    fn quiescent(dir: &Path) -> (ProjectManifest, BuildGraph, StateStore) {
        let m = fig1(dir);
        let g = build_graph(&m, &kv_deps()).unwrap();
        fs::create_dir_all(dir.join("artifacts")).unwrap();
        fs::write(dir.join("artifacts/keys-values.csv"), "key,value\n").unwrap();
        fs::write(dir.join("artifacts/ms.pdf"), "%PDF-").unwrap();
        let all = BuildPlan {
            steps: StepKind::ALL.to_vec(),
        };
        let store = commit_state(
            &StateStore::default(),
            &all,
            &g,
            dir,
            BuildMode::Draft,
            &m.state_store_path(),
        )
        .unwrap();
        (m, g, store)
    }

    fn stale_now(
        dir: &Path,
        g: &BuildGraph,
        s: &StateStore,
        mode: BuildMode,
        force: bool,
    ) -> BTreeSet<StepKind> {
        stale_steps(g, &Snapshot::take(g, dir).unwrap(), s, mode, force)
    }

    #[test]
    fn quiescence_after_commit() {
        let dir = tempfile::tempdir().unwrap();
        let (m, g, store) = quiescent(dir.path());
        assert!(stale_now(dir.path(), &g, &store, BuildMode::Draft, false).is_empty());
        let reloaded = StateStore::load(&m.state_store_path()).unwrap();
        assert_eq!(reloaded, store);
        assert_eq!(reloaded.mode, Some(BuildMode::Draft));
    }

    #[test]
    fn editing_latex_only_recompiles() {
        let dir = tempfile::tempdir().unwrap();
        let (_, g, store) = quiescent(dir.path());
        fs::write(dir.path().join("ms.tex"), "edited").unwrap();
        assert_eq!(
            stale_now(dir.path(), &g, &store, BuildMode::Draft, false),
            [StepKind::CompileLatex].into()
        );
    }

    #[test]
    fn editing_results_code_propagates() {
        let dir = tempfile::tempdir().unwrap();
        let (_, g, store) = quiescent(dir.path());
        fs::write(dir.path().join("main.py"), "edited").unwrap();
        assert_eq!(
            stale_now(dir.path(), &g, &store, BuildMode::Draft, false),
            [StepKind::RunResults, StepKind::CompileLatex].into()
        );
    }

    #[test]
    fn containerfile_edit_rebuilds_everything() {
        let dir = tempfile::tempdir().unwrap();
        let (_, g, store) = quiescent(dir.path());
        fs::write(dir.path().join("requirements.txt"), "numpy").unwrap();
        assert_eq!(
            stale_now(dir.path(), &g, &store, BuildMode::Draft, false),
            StepKind::ALL.into()
        );
    }

    #[test]
    fn rewriting_identical_bytes_is_not_a_change() {
        let dir = tempfile::tempdir().unwrap();
        let (_, g, store) = quiescent(dir.path());
        let p = dir.path().join("main.py");
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, bytes).unwrap();
        assert!(stale_now(dir.path(), &g, &store, BuildMode::Draft, false).is_empty());
    }

    #[test]
    fn missing_output_and_mode_switch() {
        let dir = tempfile::tempdir().unwrap();
        let (_, g, store) = quiescent(dir.path());
        assert_eq!(
            stale_now(dir.path(), &g, &store, BuildMode::Full, false),
            [StepKind::RunResults, StepKind::CompileLatex].into()
        );
        fs::remove_file(dir.path().join("artifacts/ms.pdf")).unwrap();
        let s = staleness(
            &g,
            &Snapshot::take(&g, dir.path()).unwrap(),
            &store,
            BuildMode::Draft,
            false,
        );
        assert_eq!(s.stale_set(), [StepKind::CompileLatex].into());
        assert_eq!(
            s.reasons(StepKind::CompileLatex),
            &[StaleReason::OutputMissing(NodeId::new(
                NodeKind::DocumentPdf,
                "artifacts/ms.pdf"
            ))]
        );
    }

    #[test]
    fn empty_store_is_all_stale() {
        let dir = tempfile::tempdir().unwrap();
        let (_, g, _) = quiescent(dir.path());
        assert_eq!(
            stale_now(
                dir.path(),
                &g,
                &StateStore::default(),
                BuildMode::Draft,
                false
            ),
            StepKind::ALL.into()
        );
    }

    #[test]
    fn failed_downstream_step_stays_stale() {
        let dir = tempfile::tempdir().unwrap();
        let (_, g, store) = quiescent(dir.path());
        fs::write(dir.path().join("main.py"), "edited").unwrap();
        fs::write(
            dir.path().join("artifacts/keys-values.csv"),
            "key,value\nx,1\n",
        )
        .unwrap();
        // results ran, compile failed
        let mut next = store.clone();
        let snap = Snapshot::take(&g, dir.path()).unwrap();
        next.record(
            &BuildPlan {
                steps: vec![StepKind::RunResults],
            },
            &g,
            &snap,
            BuildMode::Draft,
        );
        next.invalidate(&g, StepKind::CompileLatex);
        assert_eq!(
            stale_now(dir.path(), &g, &next, BuildMode::Draft, false),
            [StepKind::CompileLatex].into()
        );
    }

    proptest! {
        #[test]
        fn graph_is_acyclic_for_random_deps(
            names in prop::collection::vec("[a-z]{1,6}(\\.(csv|png|tex|pdf))?", 0..12)
        ) {
            let m = ProjectManifest::with_defaults("/p".into());
            let deps: Vec<String> = names.iter().map(|n| format!("artifacts/{n}")).collect();
            match build_graph(&m, &deps) {
                Ok(g) => {
                    prop_assert!(check_acyclic(&g).is_ok());
                    prop_assert_eq!(g.steps.len(), 3);
                }
                Err(e) => prop_assert!(deps.iter().any(|d| d == "artifacts/ms.pdf"), "{e}"),
            }
        }

        #[test]
        fn force_is_monotone(edit in 0usize..6, mode_full: bool) {
            let dir = tempfile::tempdir().unwrap();
            let (_, g, store) = quiescent(dir.path());
            let files = ["ms.tex", "ms.bib", "main.py", "Containerfile", "requirements.txt", "artifacts/ms.pdf"];
            if edit < 5 {
                fs::write(dir.path().join(files[edit]), "changed").unwrap();
            } else {
                fs::remove_file(dir.path().join(files[edit])).unwrap();
            }
            let mode = if mode_full { BuildMode::Full } else { BuildMode::Draft };
            let lazy = stale_now(dir.path(), &g, &store, mode, false);
            let forced = stale_now(dir.path(), &g, &store, mode, true);
            prop_assert!(forced.is_superset(&lazy));
            prop_assert_eq!(forced, StepKind::ALL.into());
        }
    }
}
