use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::bytes::ByteCompareResult;
use super::classify::{ClassifiedDiff, DiffClass, Locator};

pub const REPORT_FILE_NAME: &str = "repro-report.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReproReport {
    pub byte_result: ByteCompareResult,
    pub diffs: Vec<ClassifiedDiff>,
    /// Parser complaints about either file, prefixed with `a:` or `b:`.
    pub parse_issues: Vec<String>,
}

#[derive(Serialize)]
struct JsonDiff<'a> {
    object: Option<u32>,
    generation: Option<u16>,
    trailer: Option<usize>,
    class: DiffClass,
    detail: &'a str,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    identical: bool,
    first_diff_offset: Option<u64>,
    sizes: [u64; 2],
    diffs: Vec<JsonDiff<'a>>,
    parse_issues: &'a [String],
}

impl ReproReport {
    pub fn identical(&self) -> bool {
        self.byte_result.identical
    }

    pub fn to_json(&self) -> String {
        let diffs = self
            .diffs
            .iter()
            .map(|d| {
                let (object, generation, trailer) = match d.locator {
                    Locator::Object { number, generation } => {
                        (Some(number), Some(generation), None)
                    }
                    Locator::Trailer { index } => (None, None, Some(index)),
                };
                JsonDiff {
                    object,
                    generation,
                    trailer,
                    class: d.class,
                    detail: &d.detail,
                }
            })
            .collect();
        let r = JsonReport {
            identical: self.byte_result.identical,
            first_diff_offset: self.byte_result.first_diff_offset,
            sizes: [self.byte_result.size_a, self.byte_result.size_b],
            diffs,
            parse_issues: &self.parse_issues,
        };
        let mut s = serde_json::to_string_pretty(&r).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write_json(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_json())
    }

    /// Multi-line summary for terminals and CI logs.
    pub fn to_text(&self) -> String {
        let b = &self.byte_result;
        let mut out = String::new();
        if b.identical {
            let _ = writeln!(out, "identical ({} bytes)", b.size_a);
            return out;
        }
        let _ = writeln!(
            out,
            "differ: first difference at byte {} (sizes {} and {})",
            b.first_diff_offset.unwrap_or(0),
            b.size_a,
            b.size_b
        );
        if self.diffs.is_empty() {
            let _ = writeln!(out, "  no object-level difference located");
        }
        for d in &self.diffs {
            let _ = writeln!(
                out,
                "  {:<15} {}: {}",
                d.class.as_str(),
                d.locator,
                d.detail
            );
        }
        for issue in &self.parse_issues {
            let _ = writeln!(out, "  parse issue {issue}");
        }
        out
    }
}
