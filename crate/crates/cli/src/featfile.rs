//! FEATMAT1 binary feature files with a class-name sidecar, plus a CSV fallback.
//!
//! Layout: the 8 magic bytes `FEATMAT1`, row and column counts as `u32`
//! little-endian, then `rows × cols` little-endian `f32` values in row-major
//! order. The sidecar `<file>.names` holds one class name per line and may
//! start with a `# kind=<kind>` comment.

use std::fs;
use std::path::{Path, PathBuf};

use lowrank_adapt::decomp::FeatureKind;
use lowrank_adapt::numkit::Mat;
use lowrank_adapt::{Error, FeatureMatrix, Result};

pub const MAGIC: &[u8; 8] = b"FEATMAT1";
const HEADER_LEN: usize = 16;

/// Contents of a feature file before normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct RawFeatures {
    pub matrix: Mat<f32>,
    pub names: Vec<String>,
    /// Kind declared in the sidecar header, if any.
    pub kind: Option<FeatureKind>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".names");
    PathBuf::from(s)
}

pub fn encode_featmat(matrix: &Mat<f32>) -> Result<Vec<u8>> {
    let (rows, cols) = matrix.shape();
    let to_u32 = |n: usize| {
        u32::try_from(n).map_err(|_| Error::Format(format!("dimension {n} exceeds u32")))
    };
    let mut bytes = Vec::with_capacity(HEADER_LEN + 4 * matrix.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&to_u32(rows)?.to_le_bytes());
    bytes.extend_from_slice(&to_u32(cols)?.to_le_bytes());
    for v in matrix.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    Ok(bytes)
}

pub fn decode_featmat(bytes: &[u8]) -> Result<Mat<f32>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("missing FEATMAT1 magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Consistency {
            expected: format!("{HEADER_LEN} header bytes"),
            actual: format!("{} bytes", bytes.len()),
        });
    }
    let word = |at: usize| {
        u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as usize
    };
    let (rows, cols) = (word(8), word(12));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("{rows}×{cols} payload overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Consistency {
            expected: format!("{expected} payload bytes for {rows}×{cols}"),
            actual: format!("{} payload bytes", payload.len()),
        });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("feature payload entry {i}")));
    }
    Mat::new(rows, cols, data)
}

fn read_sidecar(path: &Path) -> Result<(Vec<String>, Option<FeatureKind>)> {
    let text = fs::read_to_string(sidecar_path(path))?;
    let mut kind = None;
    let mut names = Vec::new();
    for line in text.lines() {
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(k) = comment.trim().strip_prefix("kind=") {
                kind = Some(FeatureKind::parse(k)?);
            }
            continue;
        }
        names.push(line.to_string());
    }
    Ok((names, kind))
}

/// Writes the binary file and its sidecar.
pub fn write_featmat(
    path: &Path,
    matrix: &Mat<f32>,
    names: &[String],
    kind: Option<FeatureKind>,
) -> Result<()> {
    if names.len() != matrix.rows() {
        return Err(Error::Consistency {
            expected: format!("{} class names", matrix.rows()),
            actual: format!("{} class names", names.len()),
        });
    }
    fs::write(path, encode_featmat(matrix)?)?;
    let mut side = String::new();
    if let Some(k) = kind {
        side.push_str(&format!("# kind={}\n", k.as_str()));
    }
    for n in names {
        side.push_str(n);
        side.push('\n');
    }
    fs::write(sidecar_path(path), side)?;
    Ok(())
}

pub fn read_featmat(path: &Path) -> Result<RawFeatures> {
    let matrix = decode_featmat(&fs::read(path)?)?;
    let (names, kind) = read_sidecar(path)?;
    if names.len() != matrix.rows() {
        return Err(Error::Consistency {
            expected: format!("{} sidecar names", matrix.rows()),
            actual: format!("{} sidecar names", names.len()),
        });
    }
    Ok(RawFeatures {
        matrix,
        names,
        kind,
    })
}

/// CSV with one column per class: the header row holds the class names and
/// each following row one feature dimension.
pub fn read_csv(path: &Path) -> Result<RawFeatures> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Io(e.to_string()))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut dims: Vec<Vec<f32>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        let row = record
            .iter()
            .map(|v| {
                v.trim()
                    .parse::<f32>()
                    .map_err(|e| Error::Format(format!("csv row {}: {e}", line + 2)))
            })
            .collect::<Result<Vec<f32>>>()?;
        dims.push(row);
    }
    let d = dims.len();
    let matrix = Mat::from_fn(names.len(), d, |i, j| dims[j][i]);
    if !matrix.all_finite() {
        return Err(Error::Numeric("csv feature values".into()));
    }
    Ok(RawFeatures {
        matrix,
        names,
        kind: None,
    })
}

/// Writes `matrix` in the CSV layout read by [`read_csv`].
pub fn write_csv(path: &Path, matrix: &Mat<f32>, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(names).map_err(io)?;
    for j in 0..matrix.cols() {
        w.write_record(matrix.col(j).iter().map(|v| v.to_string()))
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a feature file (`.csv` or FEATMAT1), upcasts to `f64` and
/// re-normalizes rows. `kind` overrides the sidecar declaration.
pub fn load_features(path: &Path, kind: Option<FeatureKind>) -> Result<FeatureMatrix> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let raw = if is_csv {
        read_csv(path)?
    } else {
        read_featmat(path)?
    };
    let kind = kind.or(raw.kind).ok_or_else(|| {
        Error::Config(format!(
            "feature kind of {} is not declared",
            path.display()
        ))
    })?;
    FeatureMatrix::new(raw.matrix.cast(), raw.names, kind)
}

/// Stores an `f64` feature matrix at 32-bit precision.
pub fn save_features(path: &Path, features: &FeatureMatrix) -> Result<()> {
    write_featmat(
        path,
        &features.features().cast(),
        features.class_names(),
        Some(features.kind()),
    )
}
