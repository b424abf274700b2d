//! Pairing of objects from two parses and attribution of each difference to
//! a likely source of non-determinism.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::pdf::{PdfDict, PdfObject, PdfParse, PdfValue, Trailer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffClass {
    MetadataDate,
    TrailerId,
    PtexBanner,
    ContentStream,
    Structure,
    Other,
}

impl DiffClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DiffClass::MetadataDate => "metadata-date",
            DiffClass::TrailerId => "trailer-id",
            DiffClass::PtexBanner => "ptex-banner",
            DiffClass::ContentStream => "content-stream",
            DiffClass::Structure => "structure",
            DiffClass::Other => "other",
        }
    }
}

impl fmt::Display for DiffClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Locator {
    Object {
        number: u32,
        generation: u16,
    },
    /// Index among the `trailer` dictionaries of the file.
    Trailer {
        index: usize,
    },
}

impl fmt::Display for Locator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locator::Object { number, generation } => write!(f, "object {number} {generation}"),
            Locator::Trailer { index } => write!(f, "trailer #{index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifiedDiff {
    pub locator: Locator,
    pub class: DiffClass,
    pub detail: String,
}

const DATE_KEYS: &[&str] = &["CreationDate", "ModDate"];
const BANNER_KEYS: &[&str] = &["PTEX.Fullbanner", "Producer"];

/// Pair objects by (number, generation) and classify every differing pair.
/// Later definitions of the same object replace earlier ones, as in an
/// incrementally updated file.
pub fn classify_diffs(a: &PdfParse, b: &PdfParse) -> Vec<ClassifiedDiff> {
    let (left, right) = (index(a), index(b));
    let mut keys: Vec<(u32, u16)> = left.keys().chain(right.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();

    let mut diffs = Vec::new();
    for key in keys {
        let locator = Locator::Object {
            number: key.0,
            generation: key.1,
        };
        match (left.get(&key), right.get(&key)) {
            (Some(x), Some(y)) => {
                if x.body != y.body {
                    let (class, detail) = classify_pair(&x.body, &y.body);
                    diffs.push(ClassifiedDiff {
                        locator,
                        class,
                        detail,
                    });
                }
            }
            (Some(_), None) => diffs.push(ClassifiedDiff {
                locator,
                class: DiffClass::Structure,
                detail: "object present only in the first file".into(),
            }),
            (None, Some(_)) => diffs.push(ClassifiedDiff {
                locator,
                class: DiffClass::Structure,
                detail: "object present only in the second file".into(),
            }),
            (None, None) => unreachable!("key came from one of the maps"),
        }
    }

    let plain = |p: &'_ PdfParse| -> Vec<Trailer> {
        p.trailers
            .iter()
            .filter(|t| !t.from_xref_stream)
            .cloned()
            .collect()
    };
    let (ta, tb) = (plain(a), plain(b));
    for index in 0..ta.len().max(tb.len()) {
        let locator = Locator::Trailer { index };
        match (ta.get(index), tb.get(index)) {
            (Some(x), Some(y)) if x.dict != y.dict => {
                let (class, detail) = classify_trailer(&x.dict, &y.dict);
                diffs.push(ClassifiedDiff {
                    locator,
                    class,
                    detail,
                });
            }
            (Some(_), None) | (None, Some(_)) => diffs.push(ClassifiedDiff {
                locator,
                class: DiffClass::Structure,
                detail: "trailer present in only one file".into(),
            }),
            _ => {}
        }
    }
    diffs
}

fn index(p: &PdfParse) -> BTreeMap<(u32, u16), &PdfObject> {
    p.objects
        .iter()
        .map(|o| ((o.number, o.generation), o))
        .collect()
}

/// `(key, value)` pairs for `keys` anywhere inside `v`, in traversal order.
fn collect_keyed<'a>(v: &'a PdfValue, keys: &[&str], out: &mut Vec<(&'a [u8], &'a PdfValue)>) {
    match v {
        PdfValue::Dict(d) | PdfValue::Stream { dict: d, .. } => {
            for (k, val) in d {
                if keys.iter().any(|want| want.as_bytes() == k.as_slice()) {
                    out.push((k, val));
                }
                collect_keyed(val, keys, out);
            }
        }
        PdfValue::Array(items) => {
            for item in items {
                collect_keyed(item, keys, out);
            }
        }
        _ => {}
    }
}

fn keyed_difference(x: &PdfValue, y: &PdfValue, keys: &[&str]) -> Option<String> {
    let (mut kx, mut ky) = (Vec::new(), Vec::new());
    collect_keyed(x, keys, &mut kx);
    collect_keyed(y, keys, &mut ky);
    if kx == ky {
        return None;
    }
    for i in 0..kx.len().max(ky.len()) {
        match (kx.get(i), ky.get(i)) {
            (Some((k, a)), Some((_, b))) if a != b => {
                return Some(format!("/{}: {a} vs {b}", String::from_utf8_lossy(k)));
            }
            (Some((k, a)), None) => {
                return Some(format!(
                    "/{} only in first: {a}",
                    String::from_utf8_lossy(k)
                ))
            }
            (None, Some((k, b))) => {
                return Some(format!(
                    "/{} only in second: {b}",
                    String::from_utf8_lossy(k)
                ))
            }
            _ => {}
        }
    }
    Some("keys differ".into())
}

fn is_type(v: &PdfValue, ty: &str) -> bool {
    v.get("Type").is_some_and(|t| t.is_name(ty))
}

fn classify_pair(x: &PdfValue, y: &PdfValue) -> (DiffClass, String) {
    if let Some(d) = keyed_difference(x, y, DATE_KEYS) {
        return (DiffClass::MetadataDate, d);
    }
    if (is_type(x, "XRef") || is_type(y, "XRef")) && x.get("ID") != y.get("ID") {
        return (DiffClass::TrailerId, id_detail(x.get("ID"), y.get("ID")));
    }
    if let Some(d) = keyed_difference(x, y, BANNER_KEYS) {
        return (DiffClass::PtexBanner, d);
    }
    if let (PdfValue::Stream { data: da, .. }, PdfValue::Stream { data: db, .. }) = (x, y) {
        if da != db {
            let first = da
                .iter()
                .zip(db.iter())
                .position(|(p, q)| p != q)
                .unwrap_or(da.len().min(db.len()));
            let mut detail = format!(
                "stream bytes differ at offset {first} ({} vs {} bytes)",
                da.len(),
                db.len()
            );
            if is_type(x, "ObjStm") {
                detail.push_str("; compressed object stream, contained objects not decoded");
            }
            return (DiffClass::ContentStream, detail);
        }
    }
    (DiffClass::Other, other_detail(x, y))
}

fn classify_trailer(x: &PdfDict, y: &PdfDict) -> (DiffClass, String) {
    let id = |d: &PdfDict| d.get(b"ID".as_slice()).cloned();
    if id(x) != id(y) {
        return (
            DiffClass::TrailerId,
            id_detail(id(x).as_ref(), id(y).as_ref()),
        );
    }
    (
        DiffClass::Other,
        other_detail(&PdfValue::Dict(x.clone()), &PdfValue::Dict(y.clone())),
    )
}

fn id_detail(x: Option<&PdfValue>, y: Option<&PdfValue>) -> String {
    let show = |v: Option<&PdfValue>| v.map(|v| v.to_string()).unwrap_or_else(|| "absent".into());
    format!("/ID: {} vs {}", show(x), show(y))
}

fn other_detail(x: &PdfValue, y: &PdfValue) -> String {
    if let (Some(dx), Some(dy)) = (x.dict(), y.dict()) {
        for k in dx.keys().chain(dy.keys()) {
            if dx.get(k) != dy.get(k) {
                return format!("dictionary key /{} differs", String::from_utf8_lossy(k));
            }
        }
    }
    let (sx, sy) = (x.to_string(), y.to_string());
    let clip = |s: String| {
        if s.len() > 80 {
            format!("{}...", &s[..s.floor_char_boundary(80)])
        } else {
            s
        }
    };
    format!("{} vs {}", clip(sx), clip(sy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reprocheck::pdf::parse_pdf_objects;

    fn doc(date: &str, id: &str, producer: &str, content: &str) -> Vec<u8> {
        format!(
            "%PDF-1.5\n1 0 obj\n<< /Type /Catalog /Pages 2 0 R >>\nendobj\n\
             2 0 obj\n<< /Type /Pages /Kids [3 0 R] /Count 1 >>\nendobj\n\
             3 0 obj\n<< /Type /Page /Parent 2 0 R /Contents 4 0 R >>\nendobj\n\
             4 0 obj\n<< /Length {} >>\nstream\n{content}\nendstream\nendobj\n\
             5 0 obj\n<< /Producer ({producer}) /CreationDate ({date}) /ModDate ({date}) >>\nendobj\n\
             xref\n0 6\ntrailer\n<< /Size 6 /Root 1 0 R /Info 5 0 R /ID [<{id}> <{id}>] >>\nstartxref\n0\n%%EOF\n",
            content.len()
        )
        .into_bytes()
    }

    fn parse(b: &[u8]) -> PdfParse {
        parse_pdf_objects(b).unwrap()
    }

    const D1: &str = "D:20240101000000Z";
    const D2: &str = "D:20240102000000Z";

    #[test]
    fn identical_parses_have_no_diffs() {
        let p = parse(&doc(D1, "aa", "pdfTeX-1.40.25", "BT ET"));
        assert_eq!(p.objects.len(), 5);
        assert!(classify_diffs(&p, &p).is_empty());
    }

    #[test]
    fn creation_date() {
        let a = parse(&doc(D1, "aa", "pdfTeX", "BT ET"));
        let b = parse(&doc(D2, "aa", "pdfTeX", "BT ET"));
        let d = classify_diffs(&a, &b);
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].class, DiffClass::MetadataDate);
        assert_eq!(
            d[0].locator,
            Locator::Object {
                number: 5,
                generation: 0
            }
        );
        assert!(d[0].detail.contains("20240102"));
    }

    #[test]
    fn trailer_id() {
        let a = parse(&doc(D1, "aa", "pdfTeX", "BT ET"));
        let b = parse(&doc(D1, "bb", "pdfTeX", "BT ET"));
        let d = classify_diffs(&a, &b);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].class, DiffClass::TrailerId);
        assert_eq!(d[0].locator, Locator::Trailer { index: 0 });
    }

    #[test]
    fn banner_content_and_structure() {
        let a = parse(&doc(D1, "aa", "pdfTeX-1.40.25", "BT ET"));
        let b = parse(&doc(D1, "aa", "pdfTeX-1.40.26", "BT ET"));
        assert_eq!(classify_diffs(&a, &b)[0].class, DiffClass::PtexBanner);

        let b = parse(&doc(D1, "aa", "pdfTeX-1.40.25", "BT XT"));
        let d = classify_diffs(&a, &b);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].class, DiffClass::ContentStream);
        assert!(d[0].detail.contains("offset 3"));

        let mut fewer = a.clone();
        fewer.objects.retain(|o| o.number != 3);
        let d = classify_diffs(&a, &fewer);
        assert_eq!(d[0].class, DiffClass::Structure);
    }

    #[test]
    fn xref_stream_id() {
        let x = |id: &str| {
            format!("%PDF-1.5\n9 0 obj\n<< /Type /XRef /Size 10 /ID [<{id}><{id}>] /Length 2 >>\nstream\n\x01\x02\nendstream\nendobj\n").into_bytes()
        };
        let d = classify_diffs(&parse(&x("01")), &parse(&x("02")));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].class, DiffClass::TrailerId);
    }

    #[test]
    fn date_wins_over_stream() {
        let s = |date: &str, body: &str| {
            format!("%PDF-1.5\n1 0 obj\n<< /CreationDate ({date}) /Length {} >>\nstream\n{body}\nendstream\nendobj\n", body.len()).into_bytes()
        };
        let d = classify_diffs(&parse(&s(D1, "a")), &parse(&s(D2, "b")));
        assert_eq!(d[0].class, DiffClass::MetadataDate);
    }

    #[test]
    fn other_for_plain_values() {
        let s = |n: i32| format!("%PDF-1.5\n1 0 obj\n<< /Count {n} >>\nendobj\n").into_bytes();
        let d = classify_diffs(&parse(&s(1)), &parse(&s(2)));
        assert_eq!(d[0].class, DiffClass::Other);
        assert!(d[0].detail.contains("/Count"));
    }
}
