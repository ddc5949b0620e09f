//! Binary dataset (`FDS1`) and checkpoint (`FCK1`) files, plus atomic writes.
//!
//! All integers and floats are little-endian.

mod checkpoint;
mod dataset;

use std::io::Write;
use std::path::Path;

pub use checkpoint::{
    load_concat_model, load_model, read_model, save_concat_model, save_model, write_model,
    ConcatManifest, CHECKPOINT_MAGIC,
};
pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_MAGIC};

use crate::error::{FormatError, Result, RunError};

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`, so readers never see a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| RunError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| RunError::io(path, e))?;
    tmp.persist(path).map_err(|e| RunError::io(path, e.error))?;
    Ok(())
}

/// Little-endian reader that remembers where it is, for error offsets.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.error(format!(
                "truncated {what}: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn magic(&mut self, magic: &[u8; 4]) -> Result<(), FormatError> {
        let got = self.take(4, "magic")?;
        if got != magic {
            self.pos = 0;
            return Err(self.error(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u16(&mut self, what: &str) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, FormatError> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| self.error(format!("{what} too large")))?;
        let raw = self.take(len, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<(), FormatError> {
        if self.pos != self.bytes.len() {
            return Err(self.error(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }

    fn error(&self, what: String) -> FormatError {
        FormatError {
            offset: self.pos,
            what,
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| RunError::io(path, e))
}
