//! The results-to-document contract: a `key,value` CSV table read by LaTeX's
//! datatool package, and a sanity check for generated `.tex` fragments.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const KV_HEADER: &str = "key,value";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KvError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("line 1: expected header `key,value`")]
    MissingHeader,
    #[error("line {line}: expected exactly two comma-separated fields")]
    FieldCount { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: empty key")]
    EmptyKey { line: usize },
    #[error("key `{0}` not found")]
    KeyNotFound(String),
    #[error("invalid row ({key:?}, {value:?}): fields must not contain commas, double quotes or line breaks")]
    InvalidField { key: String, value: String },
}

/// Ordered `(key, value)` rows with unique, non-empty keys.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeyValueTable {
    rows: Vec<(String, String)>,
}

fn field_ok(s: &str) -> bool {
    !s.contains([',', '"', '\n', '\r'])
}

impl KeyValueTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[(String, String)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Append a row, rejecting anything that would break the unquoted format.
    pub fn insert(
        &mut self,
        key: impl Into<String>,
        value: impl Into<String>,
    ) -> Result<(), KvError> {
        let (key, value) = (key.into(), value.into());
        if key.is_empty() || !field_ok(&key) || !field_ok(&value) {
            return Err(KvError::InvalidField { key, value });
        }
        if self.rows.iter().any(|(k, _)| *k == key) {
            return Err(KvError::DuplicateKey {
                line: self.rows.len() + 2,
                key,
            });
        }
        self.rows.push((key, value));
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut lines = text.split('\n');
        // A trailing LF leaves one empty element at the end.
        let header = lines.next().unwrap_or("");
        if header.trim_end_matches('\r') != KV_HEADER {
            return Err(KvError::MissingHeader);
        }
        let mut table = KeyValueTable::new();
        let mut seen = HashSet::new();
        for (idx, raw) in lines.enumerate() {
            let line = idx + 2;
            let raw = raw.strip_suffix('\r').unwrap_or(raw);
            if raw.is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split(',').collect();
            let [key, value] = fields[..] else {
                return Err(KvError::FieldCount { line });
            };
            if key.is_empty() {
                return Err(KvError::EmptyKey { line });
            }
            if key.contains('"') || value.contains('"') {
                return Err(KvError::InvalidField {
                    key: key.into(),
                    value: value.into(),
                });
            }
            if !seen.insert(key) {
                return Err(KvError::DuplicateKey {
                    line,
                    key: key.into(),
                });
            }
            table.rows.push((key.into(), value.into()));
        }
        Ok(table)
    }

    /// Exact lookup, as `\DTLfetch{db}{key}{<key>}{value}` performs it.
    pub fn fetch(&self, key: &str) -> Result<&str, KvError> {
        self.rows
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| KvError::KeyNotFound(key.into()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(KV_HEADER);
        out.push('\n');
        for (k, v) in &self.rows {
            out.push_str(k);
            out.push(',');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

pub fn read_kv(path: &Path) -> Result<KeyValueTable, KvError> {
    let text = fs::read_to_string(path).map_err(|e| KvError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    KeyValueTable::parse(&text)
}

pub fn fetch<'a>(t: &'a KeyValueTable, key: &str) -> Result<&'a str, KvError> {
    t.fetch(key)
}

pub fn write_kv(t: &KeyValueTable, path: &Path) -> Result<(), KvError> {
    for (k, v) in &t.rows {
        if k.is_empty() || !field_ok(k) || !field_ok(v) {
            return Err(KvError::InvalidField {
                key: k.clone(),
                value: v.clone(),
            });
        }
    }
    fs::write(path, t.to_csv()).map_err(|e| KvError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FindingKind {
    UnbalancedBrace,
    UnbalancedEnvironment,
    NonUtf8,
    Unreadable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub kind: FindingKind,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Check that a generated fragment can be `\input` safely. Never fails: an
/// unreadable file is itself a finding.
pub fn lint_tex_fragment(path: &Path) -> Vec<Finding> {
    match fs::read(path) {
        Ok(bytes) => lint_tex_bytes(&bytes),
        Err(e) => vec![Finding {
            kind: FindingKind::Unreadable,
            line: 0,
            message: match e.kind() {
                io::ErrorKind::NotFound => format!("{} not found", path.display()),
                _ => e.to_string(),
            },
        }],
    }
}

pub fn lint_tex_bytes(bytes: &[u8]) -> Vec<Finding> {
    let mut findings = Vec::new();
    if let Err(e) = std::str::from_utf8(bytes) {
        let offset = e.valid_up_to();
        let line = 1 + bytes[..offset].iter().filter(|&&b| b == b'\n').count();
        findings.push(Finding {
            kind: FindingKind::NonUtf8,
            line,
            message: format!("invalid UTF-8 at byte {offset}"),
        });
    }
    let text = String::from_utf8_lossy(bytes);

    let mut open_braces: Vec<usize> = Vec::new();
    let mut envs: Vec<(String, usize)> = Vec::new();
    for (idx, line) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let b = line.as_bytes();
        let mut i = 0;
        while i < b.len() {
            match b[i] {
                b'%' => break,
                b'\\' => {
                    let start = i + 1;
                    let mut j = start;
                    while j < b.len() && b[j].is_ascii_alphabetic() {
                        j += 1;
                    }
                    if j == start {
                        // control symbol: \{ \} \% \\ ...
                        i = start + 1;
                        continue;
                    }
                    let name = &line[start..j];
                    if name == "begin" || name == "end" {
                        if let Some(env) = env_name(&line[j..]) {
                            if name == "begin" {
                                envs.push((env, line_no));
                            } else {
                                match envs.pop() {
                                    Some((open, _)) if open == env => {}
                                    Some((open, open_line)) => findings.push(Finding {
                                        kind: FindingKind::UnbalancedEnvironment,
                                        line: line_no,
                                        message: format!(
                                            "\\end{{{env}}} closes \\begin{{{open}}} from line {open_line}"
                                        ),
                                    }),
                                    None => findings.push(Finding {
                                        kind: FindingKind::UnbalancedEnvironment,
                                        line: line_no,
                                        message: format!("\\end{{{env}}} without matching \\begin"),
                                    }),
                                }
                            }
                        }
                    }
                    i = j;
                    continue;
                }
                b'{' => open_braces.push(line_no),
                b'}' if open_braces.pop().is_none() => {
                    findings.push(Finding {
                        kind: FindingKind::UnbalancedBrace,
                        line: line_no,
                        message: "unmatched `}`".into(),
                    });
                }
                _ => {}
            }
            i += 1;
        }
    }
    for line in open_braces {
        findings.push(Finding {
            kind: FindingKind::UnbalancedBrace,
            line,
            message: "unclosed `{`".into(),
        });
    }
    for (env, line) in envs {
        findings.push(Finding {
            kind: FindingKind::UnbalancedEnvironment,
            line,
            message: format!("\\begin{{{env}}} is never closed"),
        });
    }
    findings
}

/// Name in `{name}` directly following `\begin`/`\end`.
fn env_name(rest: &str) -> Option<String> {
    let rest = rest.trim_start();
    let inner = rest.strip_prefix('{')?;
    let end = inner.find('}')?;
    Some(inner[..end].to_string())
}
