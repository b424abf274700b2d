//! Recovery-style PDF object scanner.
//!
//! Cross-reference tables are not trusted. Objects are found by lexically
//! locating `N G obj` headers and parsing up to the matching `endobj`. The
//! scanner is total: malformed regions become [`ParseIssue`]s and scanning
//! resumes at the next header.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::sync::OnceLock;

use regex::bytes::Regex;
use thiserror::Error;

const MAX_DEPTH: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PdfError {
    #[error("not a PDF file (missing %PDF- header)")]
    NotAPdf,
}

pub type PdfDict = BTreeMap<Vec<u8>, PdfValue>;

#[derive(Debug, Clone, PartialEq)]
pub enum PdfValue {
    Null,
    Bool(bool),
    Integer(i64),
    Real(f64),
    /// Literal or hexadecimal string, decoded to bytes.
    String(Vec<u8>),
    /// Name without the leading slash, `#xx` escapes decoded.
    Name(Vec<u8>),
    Array(Vec<PdfValue>),
    Dict(PdfDict),
    Reference {
        number: u32,
        generation: u16,
    },
    Stream {
        dict: PdfDict,
        data: Vec<u8>,
    },
}

impl PdfValue {
    pub fn dict(&self) -> Option<&PdfDict> {
        match self {
            PdfValue::Dict(d) | PdfValue::Stream { dict: d, .. } => Some(d),
            _ => None,
        }
    }

    pub fn get(&self, key: &str) -> Option<&PdfValue> {
        self.dict()?.get(key.as_bytes())
    }

    pub fn is_name(&self, name: &str) -> bool {
        matches!(self, PdfValue::Name(n) if n == name.as_bytes())
    }
}

impl fmt::Display for PdfValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PdfValue::Null => f.write_str("null"),
            PdfValue::Bool(b) => write!(f, "{b}"),
            PdfValue::Integer(i) => write!(f, "{i}"),
            PdfValue::Real(r) => write!(f, "{r}"),
            PdfValue::String(s) => {
                if s.iter().all(|b| (0x20..0x7f).contains(b)) {
                    write!(f, "({})", String::from_utf8_lossy(s))
                } else {
                    write!(f, "<{}>", hex::encode(s))
                }
            }
            PdfValue::Name(n) => write!(f, "/{}", String::from_utf8_lossy(n)),
            PdfValue::Array(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            PdfValue::Dict(d) => fmt_dict(f, d),
            PdfValue::Reference { number, generation } => write!(f, "{number} {generation} R"),
            PdfValue::Stream { dict, data } => {
                fmt_dict(f, dict)?;
                write!(f, " stream[{} bytes]", data.len())
            }
        }
    }
}

fn fmt_dict(f: &mut fmt::Formatter<'_>, d: &PdfDict) -> fmt::Result {
    f.write_str("<<")?;
    for (k, v) in d {
        write!(f, " /{} {v}", String::from_utf8_lossy(k))?;
    }
    f.write_str(" >>")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdfObject {
    pub number: u32,
    pub generation: u16,
    pub body: PdfValue,
    /// From the first digit of the header to the end of `endobj`.
    pub span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trailer {
    pub offset: usize,
    pub dict: PdfDict,
    /// Dictionary of a `/Type /XRef` stream rather than a `trailer` keyword.
    pub from_xref_stream: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseIssue {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "offset {}: {}", self.offset, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PdfParse {
    pub objects: Vec<PdfObject>,
    pub trailers: Vec<Trailer>,
    pub issues: Vec<ParseIssue>,
}

fn header_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?-u)(\d{1,10})[\x00\t\n\x0c\r ]+\d{1,5}[\x00\t\n\x0c\r ]+obj")
            .expect("valid regex")
    })
}

fn find_all(haystack: &[u8], needle: &[u8]) -> Vec<usize> {
    let mut out = Vec::new();
    if needle.is_empty() || haystack.len() < needle.len() {
        return out;
    }
    let first = needle[0];
    let mut i = 0;
    while i + needle.len() <= haystack.len() {
        match haystack[i..=haystack.len() - needle.len()]
            .iter()
            .position(|&b| b == first)
        {
            Some(p) => {
                let at = i + p;
                if &haystack[at..at + needle.len()] == needle {
                    out.push(at);
                }
                i = at + 1;
            }
            None => break,
        }
    }
    out
}

/// Scan a whole file for indirect objects and trailer dictionaries.
pub fn parse_pdf_objects(bytes: &[u8]) -> Result<PdfParse, PdfError> {
    if !bytes.starts_with(b"%PDF-") {
        return Err(PdfError::NotAPdf);
    }
    let marks = Marks::new(bytes);
    let headers: Vec<usize> = header_regex()
        .captures_iter(bytes)
        .map(|cap| cap.get(1).expect("group 1").start())
        .collect();
    let mut out = PdfParse::default();
    let mut covered = 0usize;
    // Bytes that failed attempts may re-scan, which keeps hostile inputs
    // with many unterminated objects linear.
    let mut retry_budget = bytes.len().saturating_mul(4).saturating_add(1 << 16);

    for (i, &start) in headers.iter().enumerate() {
        if start < covered {
            continue;
        }
        let full = marks.bound_after(start);
        let next_header = headers.get(i + 1).copied().unwrap_or(bytes.len());
        let mut result = parse_object_at(bytes, start, full.min(next_header), &marks);
        if result.is_err() && next_header < full && retry_budget >= full - start {
            // The body may legitimately contain text that looks like a header.
            retry_budget -= full - start;
            result = parse_object_at(bytes, start, full, &marks);
        }
        match result {
            Ok(obj) => {
                covered = obj.span.end;
                if let PdfValue::Stream { dict, .. } = &obj.body {
                    if dict
                        .get(b"Type".as_slice())
                        .is_some_and(|t| t.is_name("XRef"))
                    {
                        out.trailers.push(Trailer {
                            offset: obj.span.start,
                            dict: dict.clone(),
                            from_xref_stream: true,
                        });
                    }
                }
                out.objects.push(obj);
            }
            Err(issue) => out.issues.push(issue),
        }
    }

    let trailers = find_all(bytes, b"trailer");
    for (i, &at) in trailers.iter().enumerate() {
        let j = out.objects.partition_point(|o| o.span.end <= at);
        if out.objects.get(j).is_some_and(|o| o.span.contains(&at)) {
            continue;
        }
        let next_header = headers[headers.partition_point(|&h| h <= at)..]
            .first()
            .copied();
        let bound = [next_header, trailers.get(i + 1).copied()]
            .into_iter()
            .flatten()
            .min()
            .unwrap_or(bytes.len());
        let mut lx = Lexer::new(bytes, at + b"trailer".len(), bound);
        match lx.parse_value(0) {
            Ok(PdfValue::Dict(dict)) => out.trailers.push(Trailer {
                offset: at,
                dict,
                from_xref_stream: false,
            }),
            Ok(_) => out.issues.push(ParseIssue {
                offset: at,
                message: "trailer is not followed by a dictionary".into(),
            }),
            Err(e) => out.issues.push(e),
        }
    }
    out.trailers.sort_by_key(|t| t.offset);
    Ok(out)
}

/// Parse one indirect object that starts at the beginning of `bytes`.
pub fn parse_indirect_object(bytes: &[u8]) -> Result<PdfObject, ParseIssue> {
    let marks = Marks::new(bytes);
    parse_object_at(bytes, 0, marks.bound_after(0), &marks)
}

/// Sorted positions of the keywords that delimit objects and streams.
struct Marks {
    endobj: Vec<usize>,
    endstream: Vec<usize>,
    len: usize,
}

impl Marks {
    fn new(bytes: &[u8]) -> Self {
        Marks {
            endobj: find_all(bytes, b"endobj"),
            endstream: find_all(bytes, b"endstream"),
            len: bytes.len(),
        }
    }

    /// End of the first `endobj` at or after `from`, or end of input.
    fn bound_after(&self, from: usize) -> usize {
        let i = self.endobj.partition_point(|&p| p < from);
        self.endobj
            .get(i)
            .map(|p| p + b"endobj".len())
            .unwrap_or(self.len)
    }

    fn endstream_after(&self, from: usize) -> Option<usize> {
        let i = self.endstream.partition_point(|&p| p < from);
        self.endstream.get(i).copied()
    }
}

fn parse_object_at(
    bytes: &[u8],
    start: usize,
    bound: usize,
    marks: &Marks,
) -> Result<PdfObject, ParseIssue> {
    let truncated = |offset: usize, what: &str| ParseIssue {
        offset,
        message: format!("truncated object: {what}"),
    };
    let mut lx = Lexer::new(bytes, start, bound);
    let number = match lx.next_token()? {
        Some(Token::Integer(n)) if (0..=u32::MAX as i64).contains(&n) => n as u32,
        _ => return Err(truncated(start, "bad object number")),
    };
    let generation = match lx.next_token()? {
        Some(Token::Integer(n)) if (0..=u16::MAX as i64).contains(&n) => n as u16,
        _ => return Err(truncated(start, "bad generation number")),
    };
    match lx.next_token()? {
        Some(Token::Keyword(k)) if k == b"obj" => {}
        _ => return Err(truncated(start, "missing `obj`")),
    }
    let wrap = |e: ParseIssue| ParseIssue {
        offset: start,
        message: format!(
            "truncated object {number} {generation}: {} at offset {}",
            e.message, e.offset
        ),
    };
    let mut body = lx.parse_value(0).map_err(wrap)?;
    let after_value = lx.pos;
    let mut tok = lx.next_token().map_err(wrap)?;

    if matches!(tok, Some(Token::Keyword(k)) if k == b"stream") {
        let PdfValue::Dict(dict) = body else {
            return Err(truncated(after_value, "stream without dictionary"));
        };
        let mut data_start = lx.pos;
        if bytes.get(data_start) == Some(&b'\r') {
            data_start += 1;
        }
        if bytes.get(data_start) == Some(&b'\n') {
            data_start += 1;
        }
        let declared = match dict.get(b"Length".as_slice()) {
            Some(PdfValue::Integer(n)) if *n >= 0 => usize::try_from(*n).ok(),
            _ => None,
        };
        let data_end = declared
            .and_then(|len| data_start.checked_add(len))
            .filter(|&end| end <= bytes.len() && followed_by_endstream(bytes, end))
            .or_else(|| {
                marks
                    .endstream_after(data_start)
                    .map(|p| strip_eol_before(bytes, data_start, p))
            })
            .ok_or_else(|| truncated(data_start, "unterminated stream"))?;
        let data = bytes[data_start..data_end].to_vec();
        let mut rest = Lexer::new(bytes, data_end, marks.bound_after(data_end));
        match rest.next_token().map_err(wrap)? {
            Some(Token::Keyword(k)) if k == b"endstream" => {}
            _ => return Err(truncated(data_end, "missing `endstream`")),
        }
        body = PdfValue::Stream { dict, data };
        tok = rest.next_token().map_err(wrap)?;
        lx = rest;
    }

    match tok {
        Some(Token::Keyword(k)) if k == b"endobj" => Ok(PdfObject {
            number,
            generation,
            body,
            span: start..lx.pos,
        }),
        _ => Err(truncated(start, "missing `endobj`")),
    }
}

fn followed_by_endstream(bytes: &[u8], at: usize) -> bool {
    let gap = bytes[at..]
        .iter()
        .take(64)
        .take_while(|&&b| is_whitespace(b))
        .count();
    bytes[at + gap..].starts_with(b"endstream")
}

fn strip_eol_before(bytes: &[u8], floor: usize, mut end: usize) -> usize {
    if end > floor && bytes[end - 1] == b'\n' {
        end -= 1;
    }
    if end > floor && bytes[end - 1] == b'\r' {
        end -= 1;
    }
    end
}

fn is_whitespace(b: u8) -> bool {
    matches!(b, b'\0' | b'\t' | b'\n' | b'\x0c' | b'\r' | b' ')
}

fn is_delimiter(b: u8) -> bool {
    matches!(
        b,
        b'(' | b')' | b'<' | b'>' | b'[' | b']' | b'{' | b'}' | b'/' | b'%'
    )
}

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    Integer(i64),
    Real(f64),
    Name(Vec<u8>),
    String(Vec<u8>),
    ArrayOpen,
    ArrayClose,
    DictOpen,
    DictClose,
    Keyword(&'a [u8]),
}

struct Lexer<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> Lexer<'a> {
    fn new(bytes: &'a [u8], pos: usize, end: usize) -> Self {
        Lexer {
            bytes,
            pos,
            end: end.min(bytes.len()),
        }
    }

    fn issue(&self, message: impl Into<String>) -> ParseIssue {
        ParseIssue {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        (self.pos < self.end).then(|| self.bytes[self.pos])
    }

    fn skip_ws(&mut self) {
        while let Some(b) = self.peek() {
            if is_whitespace(b) {
                self.pos += 1;
            } else if b == b'%' {
                while let Some(c) = self.peek() {
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn next_token(&mut self) -> Result<Option<Token<'a>>, ParseIssue> {
        self.skip_ws();
        let Some(b) = self.peek() else {
            return Ok(None);
        };
        let tok = match b {
            b'[' => {
                self.pos += 1;
                Token::ArrayOpen
            }
            b']' => {
                self.pos += 1;
                Token::ArrayClose
            }
            b'<' if self.bytes.get(self.pos + 1) == Some(&b'<') && self.pos + 1 < self.end => {
                self.pos += 2;
                Token::DictOpen
            }
            b'>' if self.bytes.get(self.pos + 1) == Some(&b'>') && self.pos + 1 < self.end => {
                self.pos += 2;
                Token::DictClose
            }
            b'<' => Token::String(self.hex_string()?),
            b'(' => Token::String(self.literal_string()?),
            b'/' => {
                self.pos += 1;
                Token::Name(self.name())
            }
            b'+' | b'-' | b'.' | b'0'..=b'9' => self.number()?,
            _ if is_delimiter(b) => {
                return Err(self.issue(format!("unexpected delimiter `{}`", b as char)))
            }
            _ => {
                let start = self.pos;
                while let Some(c) = self.peek() {
                    if is_whitespace(c) || is_delimiter(c) {
                        break;
                    }
                    self.pos += 1;
                }
                Token::Keyword(&self.bytes[start..self.pos])
            }
        };
        Ok(Some(tok))
    }

    fn regular_run(&mut self) -> &'a [u8] {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if is_whitespace(c) || is_delimiter(c) {
                break;
            }
            self.pos += 1;
        }
        &self.bytes[start..self.pos]
    }

    fn number(&mut self) -> Result<Token<'a>, ParseIssue> {
        let start = self.pos;
        let run = self.regular_run();
        let text = std::str::from_utf8(run).map_err(|_| ParseIssue {
            offset: start,
            message: "invalid number".into(),
        })?;
        let body = text.trim_start_matches(['+', '-']);
        let valid = !body.is_empty()
            && text.len() - body.len() <= 1
            && body.bytes().all(|c| c.is_ascii_digit() || c == b'.')
            && body.bytes().filter(|&c| c == b'.').count() <= 1
            && body != ".";
        if !valid {
            return Err(ParseIssue {
                offset: start,
                message: format!("invalid number `{text}`"),
            });
        }
        if !body.contains('.') {
            if let Ok(i) = text.parse::<i64>() {
                return Ok(Token::Integer(i));
            }
        }
        let mut normalized = text.to_string();
        if normalized.ends_with('.') {
            normalized.push('0');
        }
        normalized
            .replace("-.", "-0.")
            .replace("+.", "0.")
            .trim_start_matches('+')
            .parse::<f64>()
            .map(Token::Real)
            .map_err(|_| ParseIssue {
                offset: start,
                message: format!("invalid number `{text}`"),
            })
    }

    fn name(&mut self) -> Vec<u8> {
        let run = self.regular_run();
        let mut out = Vec::with_capacity(run.len());
        let mut i = 0;
        while i < run.len() {
            if run[i] == b'#' && i + 2 < run.len() {
                if let (Some(h), Some(l)) = (hex_val(run[i + 1]), hex_val(run[i + 2])) {
                    out.push(h << 4 | l);
                    i += 3;
                    continue;
                }
            }
            out.push(run[i]);
            i += 1;
        }
        out
    }

    fn hex_string(&mut self) -> Result<Vec<u8>, ParseIssue> {
        let start = self.pos;
        self.pos += 1;
        let mut digits = Vec::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(ParseIssue {
                    offset: start,
                    message: "unterminated hex string".into(),
                });
            };
            self.pos += 1;
            if c == b'>' {
                break;
            }
            if is_whitespace(c) {
                continue;
            }
            match hex_val(c) {
                Some(v) => digits.push(v),
                None => {
                    return Err(ParseIssue {
                        offset: self.pos - 1,
                        message: "invalid hex digit".into(),
                    })
                }
            }
        }
        if digits.len() % 2 == 1 {
            digits.push(0);
        }
        Ok(digits.chunks(2).map(|p| p[0] << 4 | p[1]).collect())
    }

    fn literal_string(&mut self) -> Result<Vec<u8>, ParseIssue> {
        let start = self.pos;
        self.pos += 1;
        let mut out = Vec::new();
        let mut depth = 1usize;
        let unterminated = || ParseIssue {
            offset: start,
            message: "unterminated literal string".into(),
        };
        loop {
            let c = self.peek().ok_or_else(unterminated)?;
            self.pos += 1;
            match c {
                b'(' => {
                    depth += 1;
                    out.push(c);
                }
                b')' => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(out);
                    }
                    out.push(c);
                }
                b'\\' => {
                    let e = self.peek().ok_or_else(unterminated)?;
                    self.pos += 1;
                    match e {
                        b'n' => out.push(b'\n'),
                        b'r' => out.push(b'\r'),
                        b't' => out.push(b'\t'),
                        b'b' => out.push(0x08),
                        b'f' => out.push(0x0c),
                        b'0'..=b'7' => {
                            let mut v = u32::from(e - b'0');
                            for _ in 0..2 {
                                match self.peek() {
                                    Some(d @ b'0'..=b'7') => {
                                        v = v * 8 + u32::from(d - b'0');
                                        self.pos += 1;
                                    }
                                    _ => break,
                                }
                            }
                            out.push((v & 0xff) as u8);
                        }
                        b'\r' => {
                            if self.peek() == Some(b'\n') {
                                self.pos += 1;
                            }
                        }
                        b'\n' => {}
                        other => out.push(other),
                    }
                }
                _ => out.push(c),
            }
        }
    }

    fn parse_value(&mut self, depth: usize) -> Result<PdfValue, ParseIssue> {
        if depth > MAX_DEPTH {
            return Err(self.issue("nesting too deep"));
        }
        let at = self.pos;
        let tok = self
            .next_token()?
            .ok_or_else(|| self.issue("unexpected end of object"))?;
        Ok(match tok {
            Token::Integer(n) => {
                // `N G R` indirect reference?
                let save = self.pos;
                if let (Ok(Some(Token::Integer(g))), Ok(Some(Token::Keyword(b"R")))) =
                    (self.next_token(), self.next_token())
                {
                    if let (Ok(number), Ok(generation)) = (u32::try_from(n), u16::try_from(g)) {
                        return Ok(PdfValue::Reference { number, generation });
                    }
                }
                self.pos = save;
                PdfValue::Integer(n)
            }
            Token::Real(r) => PdfValue::Real(r),
            Token::Name(n) => PdfValue::Name(n),
            Token::String(s) => PdfValue::String(s),
            Token::ArrayOpen => {
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    if self.peek() == Some(b']') {
                        self.pos += 1;
                        break;
                    }
                    if self.peek().is_none() {
                        return Err(ParseIssue {
                            offset: at,
                            message: "unterminated array".into(),
                        });
                    }
                    items.push(self.parse_value(depth + 1)?);
                }
                PdfValue::Array(items)
            }
            Token::DictOpen => {
                let mut dict = PdfDict::new();
                loop {
                    match self.next_token()? {
                        Some(Token::DictClose) => break,
                        Some(Token::Name(key)) => {
                            let value = self.parse_value(depth + 1)?;
                            dict.insert(key, value);
                        }
                        None => {
                            return Err(ParseIssue {
                                offset: at,
                                message: "unterminated dictionary".into(),
                            })
                        }
                        Some(_) => return Err(self.issue("dictionary key must be a name")),
                    }
                }
                PdfValue::Dict(dict)
            }
            Token::Keyword(b"true") => PdfValue::Bool(true),
            Token::Keyword(b"false") => PdfValue::Bool(false),
            Token::Keyword(b"null") => PdfValue::Null,
            Token::Keyword(k) => {
                return Err(ParseIssue {
                    offset: at,
                    message: format!("unexpected keyword `{}`", String::from_utf8_lossy(k)),
                })
            }
            Token::ArrayClose | Token::DictClose => {
                return Err(ParseIssue {
                    offset: at,
                    message: "unexpected closing delimiter".into(),
                })
            }
        })
    }
}

fn hex_val(c: u8) -> Option<u8> {
    match c {
        b'0'..=b'9' => Some(c - b'0'),
        b'a'..=b'f' => Some(c - b'a' + 10),
        b'A'..=b'F' => Some(c - b'A' + 10),
        _ => None,
    }
}
