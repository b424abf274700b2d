use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

/// SHA-256 of a file's bytes as 64 lowercase hex characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentDigest(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid content digest `{0}`: expected 64 lowercase hex characters")]
pub struct InvalidDigest(pub String);

impl ContentDigest {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        ContentDigest(hex::encode(Sha256::digest(bytes)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for ContentDigest {
    type Err = InvalidDigest;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            Ok(ContentDigest(s.to_string()))
        } else {
            Err(InvalidDigest(s.to_string()))
        }
    }
}

impl fmt::Display for ContentDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn compute_digest(path: &Path) -> io::Result<ContentDigest> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    io::copy(&mut file, &mut hasher)?;
    Ok(ContentDigest(hex::encode(hasher.finalize())))
}

/// Digest of a file, or `None` when it does not exist.
pub fn digest_if_exists(path: &Path) -> io::Result<Option<ContentDigest>> {
    match compute_digest(path) {
        Ok(d) => Ok(Some(d)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}
