//! Binary PPM images and atomic file writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed PPM: {reason}")]
    Ppm { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| IoError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

/// Encodes planar RGB (`3 × height × width`) as binary P6.
pub fn encode_ppm(width: usize, height: usize, planar: &[u8]) -> Vec<u8> {
    assert_eq!(planar.len(), 3 * width * height, "planar buffer size");
    let plane = width * height;
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.reserve(3 * plane);
    for i in 0..plane {
        out.extend_from_slice(&[planar[i], planar[plane + i], planar[2 * plane + i]]);
    }
    out
}

/// Decodes binary P6 with maxval 255 into `(width, height, planar RGB)`.
pub fn decode_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| "non-ascii header")?.to_string());
    }
    if fields[0] != "P6" {
        return Err(format!("magic {:?}, expected P6", fields[0]));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header field {s:?}"));
    let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(format!("maxval {maxval}, expected 255"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let plane = width * height;
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != 3 * plane {
        return Err(format!("raster has {} bytes, expected {}", body.len(), 3 * plane));
    }
    let mut planar = vec![0; 3 * plane];
    for i in 0..plane {
        for c in 0..3 {
            planar[c * plane + i] = body[3 * i + c];
        }
    }
    Ok((width, height, planar))
}

pub fn write_ppm(path: &Path, width: usize, height: usize, planar: &[u8]) -> Result<(), IoError> {
    write_atomic(path, &encode_ppm(width, height, planar))
}

pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<u8>), IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_ppm(&bytes).map_err(|reason| IoError::Ppm { path: path.to_path_buf(), reason })
}

/// Serializes `value` as pretty JSON with a trailing newline and writes it atomically.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
