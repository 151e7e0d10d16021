use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{SpectrogramError, SpectrogramImage};
use crate::signal_io::Label;

const MAGIC: &[u8; 4] = b"SPCG";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 4 + 4;
const UNLABELED: u8 = 0xFF;

pub fn spectrogram_file_name(image: &SpectrogramImage) -> String {
    format!("{}.spcg", image.id)
}

pub fn encode_spectrogram(image: &SpectrogramImage) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * image.pixels.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(image.label.map(Label::as_u8).unwrap_or(UNLABELED));
    buf.extend_from_slice(&(image.rows as u32).to_le_bytes());
    buf.extend_from_slice(&(image.cols as u32).to_le_bytes());
    for p in &image.pixels {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    buf
}

/// Decodes a cache payload. `id` supplies the provenance the format does not carry.
pub fn decode_spectrogram(
    bytes: &[u8],
    id: &str,
    path: &Path,
) -> Result<SpectrogramImage, SpectrogramError> {
    let corrupt = |reason: &str| SpectrogramError::CacheCorrupt {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(corrupt("unsupported version"));
    }
    let label = match bytes[8] {
        UNLABELED => None,
        b => Some(Label::from_u8(b).ok_or_else(|| corrupt("bad label byte"))?),
    };
    let rows = u32_at(9) as usize;
    let cols = u32_at(13) as usize;
    let body = &bytes[HEADER_LEN..];
    if rows == 0 || cols == 0 || body.len() != 4 * rows * cols {
        return Err(corrupt("payload length disagrees with header"));
    }
    let pixels = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(SpectrogramImage {
        pixels,
        rows,
        cols,
        id: id.to_string(),
        label,
    })
}

/// Writes `<dir>/<id>.spcg`.
pub fn write_spectrogram(
    dir: impl AsRef<Path>,
    image: &SpectrogramImage,
) -> Result<PathBuf, SpectrogramError> {
    let path = dir.as_ref().join(spectrogram_file_name(image));
    fs::write(&path, encode_spectrogram(image)).map_err(|source| SpectrogramError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

pub fn read_spectrogram(path: impl AsRef<Path>) -> Result<SpectrogramImage, SpectrogramError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| SpectrogramError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_spectrogram(&bytes, &id, path)
}

/// Every `.spcg` file in `dir`, sorted by file name.
pub fn read_spectrogram_dir(
    dir: impl AsRef<Path>,
) -> Result<Vec<SpectrogramImage>, SpectrogramError> {
    let dir = dir.as_ref();
    let io = |source| SpectrogramError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "spcg").unwrap_or(false))
        .collect();
    paths.sort();
    paths.iter().map(read_spectrogram).collect()
}

/// 8-bit binary PGM with the highest frequency on top, for eyeballing.
pub fn write_pgm(path: impl AsRef<Path>, image: &SpectrogramImage) -> Result<(), SpectrogramError> {
    let path = path.as_ref();
    let io = |source| SpectrogramError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    write!(f, "P5\n{} {}\n255\n", image.cols, image.rows).map_err(io)?;
    let mut body = Vec::with_capacity(image.pixels.len());
    for r in (0..image.rows).rev() {
        for c in 0..image.cols {
            body.push((image.get(r, c).clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    f.write_all(&body).map_err(io)
}
