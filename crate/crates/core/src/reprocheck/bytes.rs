use std::fs;
use std::io;
use std::path::Path;

/// Outcome of a `cmp`-style comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteCompareResult {
    pub identical: bool,
    /// 0-based index of the first difference. When one file is a prefix of
    /// the other this is the shorter length.
    pub first_diff_offset: Option<u64>,
    pub size_a: u64,
    pub size_b: u64,
}

pub fn compare_slices(a: &[u8], b: &[u8]) -> ByteCompareResult {
    let common = a.len().min(b.len());
    let first = a[..common]
        .iter()
        .zip(&b[..common])
        .position(|(x, y)| x != y)
        .or((a.len() != b.len()).then_some(common));
    ByteCompareResult {
        identical: first.is_none(),
        first_diff_offset: first.map(|o| o as u64),
        size_a: a.len() as u64,
        size_b: b.len() as u64,
    }
}

pub fn compare_bytes(a: &Path, b: &Path) -> io::Result<ByteCompareResult> {
    let left = fs::read(a)?;
    let right = fs::read(b)?;
    Ok(compare_slices(&left, &right))
}
