use std::path::Path;

use fedlab_core::data::Dataset;
use fedlab_core::Matrix;

use super::{read_file, write_atomic, Cursor};
use crate::error::{FormatError, Result, RunError};

pub const DATASET_MAGIC: &[u8; 4] = b"FDS1";

/// `FDS1`, u32 n, u32 d, u32 m, n·d f64 row-major, n u16 labels.
pub fn write_dataset(ds: &Dataset) -> Result<Vec<u8>, FormatError> {
    if ds.classes() > usize::from(u16::MAX) + 1 {
        return Err(FormatError {
            offset: 12,
            what: format!("{} classes do not fit u16 labels", ds.classes()),
        });
    }
    let mut out = Vec::with_capacity(16 + ds.len() * (ds.dim() * 8 + 2));
    out.extend_from_slice(DATASET_MAGIC);
    for v in [ds.len(), ds.dim(), ds.classes()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for x in ds.inputs().as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for &y in ds.labels() {
        out.extend_from_slice(&(y as u16).to_le_bytes());
    }
    Ok(out)
}

pub fn read_dataset(bytes: &[u8]) -> Result<Dataset, FormatError> {
    let mut c = Cursor::new(bytes);
    c.magic(DATASET_MAGIC)?;
    let n = c.u32("row count")? as usize;
    let d = c.u32("feature width")? as usize;
    let m = c.u32("class count")? as usize;
    if n == 0 || d == 0 {
        return Err(FormatError {
            offset: 4,
            what: "dataset needs at least one row and one feature".into(),
        });
    }
    if m < 2 {
        return Err(FormatError {
            offset: 12,
            what: format!("class count {m} is below 2"),
        });
    }
    let features = c.f64s(n.saturating_mul(d), "features")?;
    let mut labels = Vec::with_capacity(n);
    for row in 0..n {
        let at = c.pos;
        let y = c.u16("labels")? as usize;
        if y >= m {
            return Err(FormatError {
                offset: at,
                what: format!("label {y} of row {row} is not below {m}"),
            });
        }
        labels.push(y);
    }
    c.finish()?;
    Dataset::new(Matrix::from_vec(n, d, features), labels, m).map_err(|e| FormatError {
        offset: 0,
        what: e.to_string(),
    })
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let bytes = write_dataset(ds).map_err(|source| RunError::Format {
        path: path.display().to_string(),
        source,
    })?;
    write_atomic(path, &bytes)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(&read_file(path)?).map_err(|source| RunError::Format {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedlab_core::data::gen_blobs;

    #[test]
    fn round_trip() {
        let ds = gen_blobs(3, 4, 5, 0.2, 1).unwrap();
        let bytes = write_dataset(&ds).unwrap();
        assert_eq!(bytes.len(), 16 + 15 * 34);
        let back = read_dataset(&bytes).unwrap();
        assert_eq!(back, ds);
        assert_eq!(write_dataset(&back).unwrap(), bytes);
    }

    #[test]
    fn label_equal_to_class_count_is_rejected() {
        let ds = gen_blobs(2, 2, 1, 0.2, 1).unwrap();
        let mut bytes = write_dataset(&ds).unwrap();
        let at = bytes.len() - 2;
        bytes[at..].copy_from_slice(&2u16.to_le_bytes());
        let err = read_dataset(&bytes).unwrap_err();
        assert_eq!(err.offset, at);
    }

    #[test]
    fn empty_and_truncated_inputs() {
        assert_eq!(read_dataset(&[]).unwrap_err().offset, 0);
        let ds = gen_blobs(2, 2, 2, 0.2, 1).unwrap();
        let bytes = write_dataset(&ds).unwrap();
        let err = read_dataset(&bytes[..20]).unwrap_err();
        assert_eq!(err.offset, 16);
        assert!(read_dataset(b"FDS2xxxxxxxxxxxx")
            .unwrap_err()
            .what
            .contains("magic"));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(read_dataset(&long).unwrap_err().offset, bytes.len());
    }
}
