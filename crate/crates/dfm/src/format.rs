//! Errors and header tokenizing shared by the binary formats.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: {0}")]
    BadMagic(String),
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("truncated data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl FormatError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }
}

/// Whitespace-separated ASCII header tokens with `#` comments, as used by
/// the Netpbm family and PFM.
pub(crate) struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    pub(crate) fn token(&mut self) -> Result<&'a str, FormatError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(FormatError::TruncatedData { expected: self.pos + 1, found: self.bytes.len() });
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| FormatError::BadHeader("non-ASCII header".into()))
    }

    pub(crate) fn dimension(&mut self) -> Result<usize, FormatError> {
        let t = self.token()?;
        match t.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(FormatError::BadHeader(format!("invalid dimension {t:?}"))),
        }
    }

    /// Raster bytes: the header ends with exactly one whitespace byte.
    pub(crate) fn payload_after_single_whitespace(&mut self) -> Result<&'a [u8], FormatError> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(&self.bytes[self.pos + 1..]),
            _ => Err(FormatError::TruncatedData { expected: self.pos + 1, found: self.bytes.len() }),
        }
    }
}
