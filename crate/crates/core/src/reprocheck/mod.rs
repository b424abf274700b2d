//! Byte comparison of two builds and object-level diagnosis of differences.

mod bytes;
mod classify;
pub mod pdf;
mod report;

pub use bytes::{compare_bytes, compare_slices, ByteCompareResult};
pub use classify::{classify_diffs, ClassifiedDiff, DiffClass, Locator};
pub use pdf::{
    parse_indirect_object, parse_pdf_objects, PdfError, PdfObject, PdfParse, PdfValue, Trailer,
};
pub use report::{ReproReport, REPORT_FILE_NAME};

pub use crate::pipeline::verify_reproducibility;

/// Compare two files' contents and, when they differ, classify the
/// differing PDF objects.
pub fn diagnose(a: &[u8], b: &[u8]) -> Result<ReproReport, PdfError> {
    let byte_result = compare_slices(a, b);
    if byte_result.identical {
        return Ok(ReproReport {
            byte_result,
            diffs: Vec::new(),
            parse_issues: Vec::new(),
        });
    }
    let pa = parse_pdf_objects(a)?;
    let pb = parse_pdf_objects(b)?;
    let parse_issues = pa
        .issues
        .iter()
        .map(|i| format!("a: {} (offset {})", i.message, i.offset))
        .chain(
            pb.issues
                .iter()
                .map(|i| format!("b: {} (offset {})", i.message, i.offset)),
        )
        .collect();
    Ok(ReproReport {
        byte_result,
        diffs: classify_diffs(&pa, &pb),
        parse_issues,
    })
}
