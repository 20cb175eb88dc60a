//! On-disk formats: waveform and feature containers, label files and
//! manifests.
//!
//! Both binary containers share a 16-byte header of four little-endian
//! words: a magic tag, a format version, and two size fields. The payload is
//! row-major little-endian `f32`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};

pub const WAVEFORM_MAGIC: [u8; 4] = *b"JBWV";
pub const FEATURE_MAGIC: [u8; 4] = *b"JBFT";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

/// Write `bytes` to `path` through a sibling temp file and a rename, so a
/// reader never observes a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn header(magic: [u8; 4], a: u32, b: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&a.to_le_bytes());
    out.extend_from_slice(&b.to_le_bytes());
    out
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn parse_header(path: &Path, bytes: &[u8], magic: [u8; 4]) -> Result<(u32, u32)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "truncated header"));
    }
    if bytes[..4] != magic {
        return Err(Error::format(path, "bad magic"));
    }
    let version = le_u32(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    Ok((le_u32(bytes, 8), le_u32(bytes, 12)))
}

fn f32_payload(path: &Path, bytes: &[u8], count: usize) -> Result<Vec<f32>> {
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * 4 {
        return Err(Error::format(
            path,
            format!("expected {} payload bytes, found {}", count * 4, body.len()),
        ));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Which container a file holds, decided by its magic tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Waveform,
    Features,
}

pub fn sniff(path: &Path, bytes: &[u8]) -> Result<ContainerKind> {
    match bytes.get(..4) {
        Some(m) if m == WAVEFORM_MAGIC => Ok(ContainerKind::Waveform),
        Some(m) if m == FEATURE_MAGIC => Ok(ContainerKind::Features),
        _ => Err(Error::format(path, "unknown container magic")),
    }
}

pub fn encode_waveform(samples: &[f32], sample_rate: u32) -> Vec<u8> {
    let mut out = header(WAVEFORM_MAGIC, sample_rate, samples.len() as u32);
    out.reserve(samples.len() * 4);
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Returns `(samples, sample_rate)`.
pub fn decode_waveform(path: &Path, bytes: &[u8]) -> Result<(Vec<f32>, u32)> {
    let (rate, len) = parse_header(path, bytes, WAVEFORM_MAGIC)?;
    Ok((f32_payload(path, bytes, len as usize)?, rate))
}

pub fn encode_features(frames: &Array2<f32>) -> Vec<u8> {
    let (rows, cols) = frames.dim();
    let mut out = header(FEATURE_MAGIC, rows as u32, cols as u32);
    out.reserve(rows * cols * 4);
    for v in frames.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_features(path: &Path, bytes: &[u8]) -> Result<Array2<f32>> {
    let (rows, cols) = parse_header(path, bytes, FEATURE_MAGIC)?;
    let data = f32_payload(path, bytes, rows as usize * cols as usize)?;
    Ok(Array2::from_shape_vec((rows as usize, cols as usize), data).expect("sized above"))
}

pub fn encode_labels(labels: &[usize]) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}

pub fn decode_labels(path: &Path, text: &str) -> Result<Vec<usize>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse()
                .map_err(|_| Error::format(path, format!("line {}: bad label {l:?}", i + 1)))
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_labels(path, &text)
}

/// One manifest line: utterance id plus noisy, clean and label paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub noisy: PathBuf,
    pub clean: PathBuf,
    pub labels: PathBuf,
}

/// Parsed manifest. Relative paths are resolved against the manifest's
/// directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::format(
                    path,
                    format!("line {}: expected 4 fields, found {}", i + 1, fields.len()),
                ));
            }
            entries.push(ManifestEntry {
                id: fields[0].to_string(),
                noisy: base.join(fields[1]),
                clean: base.join(fields[2]),
                labels: base.join(fields[3]),
            });
        }
        Ok(Manifest { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    /// Render with paths relative to `base` where possible.
    pub fn render(&self, base: &Path) -> String {
        let rel = |p: &Path| -> String {
            p.strip_prefix(base)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        };
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{} {} {} {}\n",
                e.id,
                rel(&e.noisy),
                rel(&e.clean),
                rel(&e.labels)
            ));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        write_atomic(path, self.render(base).as_bytes())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waveform_header_layout() {
        let bytes = encode_waveform(&[0.5, -1.0], 16000);
        assert_eq!(bytes.len(), HEADER_LEN + 8);
        assert_eq!(&bytes[..4], b"JBWV");
        assert_eq!(le_u32(&bytes, 8), 16000);
        assert_eq!(le_u32(&bytes, 12), 2);
        let (s, r) = decode_waveform(Path::new("x"), &bytes).unwrap();
        assert_eq!((s, r), (vec![0.5, -1.0], 16000));
    }

    #[test]
    fn feature_payload_is_row_major() {
        let m = Array2::from_shape_vec((2, 3), vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bytes = encode_features(&m);
        assert_eq!(le_u32(&bytes, 8), 2);
        assert_eq!(le_u32(&bytes, 12), 3);
        assert_eq!(f32::from_le_bytes(bytes[16 + 4..16 + 8].try_into().unwrap()), 2.0);
        assert_eq!(decode_features(Path::new("x"), &bytes).unwrap(), m);
    }

    #[test]
    fn truncated_and_foreign_files_are_rejected() {
        let p = Path::new("f");
        assert!(decode_features(p, b"JBFT").is_err());
        let mut bytes = encode_features(&Array2::zeros((1, 2)));
        bytes.pop();
        assert!(decode_features(p, &bytes).is_err());
        assert!(decode_features(p, &encode_waveform(&[1.0], 8)).is_err());
        assert!(sniff(p, b"XXXX").is_err());
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let m = Manifest::parse(
            Path::new("/data/train.list"),
            "# comment\nu1 wav/u1.n wav/u1.c lab/u1.txt\n\n",
        )
        .unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.entries[0].noisy, PathBuf::from("/data/wav/u1.n"));
        assert_eq!(m.render(Path::new("/data")), "u1 wav/u1.n wav/u1.c lab/u1.txt\n");
        assert!(Manifest::parse(Path::new("m"), "u1 a b").is_err());
    }

    #[test]
    fn labels_parse_one_per_line() {
        let p = Path::new("l");
        assert_eq!(decode_labels(p, &encode_labels(&[3, 0, 19])).unwrap(), vec![3, 0, 19]);
        assert!(decode_labels(p, "1\nx\n").is_err());
    }
}
