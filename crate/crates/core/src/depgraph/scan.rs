//! Extraction of generated-file references from LaTeX source.

use std::collections::HashSet;

/// Commands whose last mandatory argument names a file, with the number of
/// mandatory arguments to skip before it.
const FILE_COMMANDS: &[(&str, usize)] = &[
    ("DTLloaddb", 1),
    ("includegraphics", 0),
    ("input", 0),
    ("include", 0),
    ("addbibresource", 0),
    ("bibliography", 0),
];

/// Every file path the document reads from `artifacts_dir`, in document order
/// without duplicates.
///
/// Text after an unescaped `%` is ignored. A line with unbalanced braces is
/// abandoned from the point where scanning lost track. Arguments containing
/// macros cannot be resolved and are skipped. `\bibliography{x}` yields
/// `x.bib`; `\input`/`\include` without an extension yield `.tex` files,
/// matching how TeX resolves them.
pub fn scan_latex_dependencies(tex_text: &str, artifacts_dir: &str) -> Vec<String> {
    let prefix = format!("{artifacts_dir}/");
    let mut out: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    for line in tex_text.lines() {
        scan_line(strip_comment(line), &mut |path| {
            if path.starts_with(&prefix) && path.len() > prefix.len() && seen.insert(path.clone()) {
                out.push(path);
            }
        });
    }
    out
}

pub(crate) fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    let mut backslashes = 0usize;
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'\\' {
            backslashes += 1;
            continue;
        }
        if b == b'%' && backslashes.is_multiple_of(2) {
            return &line[..i];
        }
        backslashes = 0;
    }
    line
}

fn scan_line(line: &str, emit: &mut impl FnMut(String)) {
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'\\' {
            i += 1;
            continue;
        }
        let name_start = i + 1;
        let mut j = name_start;
        while j < bytes.len() && bytes[j].is_ascii_alphabetic() {
            j += 1;
        }
        if j == name_start {
            // control symbol such as \% or \\
            i = j + 1;
            continue;
        }
        let name = &line[name_start..j];
        i = j;
        let Some(&(_, skip)) = FILE_COMMANDS.iter().find(|(n, _)| *n == name) else {
            continue;
        };
        match parse_arguments(bytes, i, skip) {
            Args::Found { arg, end } => {
                for path in resolve(name, arg) {
                    emit(path);
                }
                i = end;
            }
            Args::NotACall => {}
            Args::Unbalanced => return,
        }
    }
}

enum Args<'a> {
    Found { arg: &'a str, end: usize },
    NotACall,
    Unbalanced,
}

fn parse_arguments(bytes: &[u8], mut i: usize, skip: usize) -> Args<'_> {
    let skip_ws = |i: &mut usize| {
        while *i < bytes.len() && bytes[*i].is_ascii_whitespace() {
            *i += 1;
        }
    };
    skip_ws(&mut i);
    if i < bytes.len() && bytes[i] == b'*' {
        i += 1;
    }
    loop {
        skip_ws(&mut i);
        if i < bytes.len() && bytes[i] == b'[' {
            match close_group(bytes, i, b'[', b']') {
                Some(end) => i = end + 1,
                None => return Args::Unbalanced,
            }
        } else {
            break;
        }
    }
    let mut remaining = skip;
    loop {
        skip_ws(&mut i);
        if i >= bytes.len() || bytes[i] != b'{' {
            return Args::NotACall;
        }
        let Some(end) = close_group(bytes, i, b'{', b'}') else {
            return Args::Unbalanced;
        };
        if remaining == 0 {
            // Safe: braces are ASCII so the slice falls on char boundaries.
            let arg = std::str::from_utf8(&bytes[i + 1..end]).unwrap_or("");
            return Args::Found { arg, end: end + 1 };
        }
        remaining -= 1;
        i = end + 1;
    }
}

/// Index of the delimiter closing the group opened at `start`, honoring
/// nested braces and escaped delimiters.
fn close_group(bytes: &[u8], start: usize, open: u8, close: u8) -> Option<usize> {
    let mut depth = 0usize;
    let mut brace_depth = 0usize;
    let mut i = start;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'\\' {
            i += 2;
            continue;
        }
        if open == b'[' {
            // brackets inside a braced group do not close the option list
            match b {
                b'{' => brace_depth += 1,
                b'}' => {
                    if brace_depth == 0 {
                        return None;
                    }
                    brace_depth -= 1;
                }
                _ if brace_depth > 0 => {}
                b'[' => depth += 1,
                b']' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(i);
                    }
                }
                _ => {}
            }
        } else if b == open {
            depth += 1;
        } else if b == close {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
        }
        i += 1;
    }
    None
}

fn resolve(command: &str, arg: &str) -> Vec<String> {
    let arg = arg.trim();
    if arg.is_empty() || arg.ends_with('/') || arg.contains('\\') || arg.contains('#') {
        return Vec::new();
    }
    match command {
        "bibliography" => arg
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                if s.ends_with(".bib") {
                    s.to_string()
                } else {
                    format!("{s}.bib")
                }
            })
            .collect(),
        "input" | "include" => {
            let has_ext = std::path::Path::new(arg).extension().is_some();
            if has_ext {
                vec![arg.to_string()]
            } else {
                vec![format!("{arg}.tex")]
            }
        }
        _ => vec![arg.to_string()],
    }
}
