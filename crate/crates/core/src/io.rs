//! On-disk formats. Matrices are row-major nested arrays of `[re, im]`
//! pairs; floats are written in shortest round-trip form, so a load/save
//! cycle is bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PencilError, Result};
use crate::instances::InstanceDescriptor;
use crate::linalg::{c64, CMat, HermitianTuple};

pub const TUPLE_VERSION: &str = "pencil-tuple/1";
pub const REPORT_VERSION: &str = "pencil-report/1";

pub type MatrixData = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_data(m: &CMat) -> MatrixData {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_data(rows: &MatrixData) -> Result<CMat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PencilError::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(CMat::from_fn(nrows, ncols, |i, j| c64(rows[i][j][0], rows[i][j][1])))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TupleMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<InstanceDescriptor>,
    /// Diagonal shifts already applied to the generators.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shifts: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TupleFile {
    pub version: String,
    pub dim: usize,
    pub m: usize,
    pub matrices: Vec<MatrixData>,
    #[serde(default)]
    pub metadata: TupleMetadata,
}

impl TupleFile {
    pub fn from_tuple(tuple: &HermitianTuple, metadata: TupleMetadata) -> Self {
        Self {
            version: TUPLE_VERSION.into(),
            dim: tuple.dim(),
            m: tuple.len(),
            matrices: tuple.matrices().iter().map(matrix_to_data).collect(),
            metadata,
        }
    }

    /// Builds the tuple, enforcing Hermiticity unless `allow_nonhermitian`.
    pub fn to_tuple(&self, allow_nonhermitian: bool) -> Result<HermitianTuple> {
        if self.version != TUPLE_VERSION {
            return Err(PencilError::InvalidArgument(format!(
                "unsupported tuple version `{}`",
                self.version
            )));
        }
        if self.matrices.len() != self.m {
            return Err(PencilError::DimensionMismatch(format!(
                "header says m = {}, file holds {} matrices",
                self.m,
                self.matrices.len()
            )));
        }
        let mats = self.matrices.iter().map(matrix_from_data).collect::<Result<Vec<_>>>()?;
        if mats.iter().any(|a| a.nrows() != self.dim || a.ncols() != self.dim) {
            return Err(PencilError::DimensionMismatch(format!("matrices must be {0}x{0}", self.dim)));
        }
        if allow_nonhermitian {
            HermitianTuple::from_matrices_unchecked(mats)
        } else {
            HermitianTuple::new(mats)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json_atomic(path, self)
    }
}

/// Pretty JSON with a trailing newline, written to a temporary file in the
/// target directory and renamed into place.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| PencilError::Io(e.error))?;
    Ok(())
}
