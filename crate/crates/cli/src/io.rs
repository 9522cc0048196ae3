//! File plumbing for the CLI: atomic writes, 16-bit depth PGMs and TUM association lists.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tempfile::NamedTempFile;

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("creating temporary file in {}", dir.display()))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, |w| Ok(w.write_all(bytes)?))
}

/// 16-bit P5 PGM, big-endian samples.
pub fn depth_pgm_bytes(width: usize, height: usize, depth: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for d in depth {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out
}

pub fn parse_depth_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            bail!("truncated depth PGM header");
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        bail!("depth image is not a binary PGM");
    }
    let w: usize = token()?.parse().context("depth width")?;
    let h: usize = token()?.parse().context("depth height")?;
    let maxval: u32 = token()?.parse().context("depth maxval")?;
    if !(256..=65535).contains(&maxval) {
        bail!("depth PGM must be 16-bit, maxval {maxval}");
    }
    let body = &bytes[pos + 1..];
    if body.len() != 2 * w * h {
        bail!("depth payload has {} bytes, expected {}", body.len(), 2 * w * h);
    }
    let depth = body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((w, h, depth))
}

/// One association line: `ts_rgb path_rgb ts_depth path_depth`.
#[derive(Clone, Debug, PartialEq)]
pub struct Association {
    pub ts_rgb: f64,
    pub rgb: PathBuf,
    pub ts_depth: f64,
    pub depth: PathBuf,
}

/// Parses an association file; relative paths are resolved against `root`.
pub fn parse_associations(text: &str, root: &Path) -> Result<Vec<Association>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            bail!("associations line {}: expected 4 fields, found {}", i + 1, f.len());
        }
        let ts = |s: &str| s.parse::<f64>().with_context(|| format!("associations line {}: bad timestamp {s:?}", i + 1));
        out.push(Association {
            ts_rgb: ts(f[0])?,
            rgb: root.join(f[1]),
            ts_depth: ts(f[2])?,
            depth: root.join(f[3]),
        });
    }
    Ok(out)
}

/// `.pgm` files of a directory in name order.
pub fn list_pgms(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    v.sort();
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_roundtrip() {
        let d = vec![0u16, 1, 256, 65535, 20000, 7];
        let bytes = depth_pgm_bytes(3, 2, &d);
        assert_eq!(parse_depth_pgm(&bytes).unwrap(), (3, 2, d));
        assert!(parse_depth_pgm(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn associations_parse() {
        let text = "# comment\n1.0 rgb/0.pgm 1.001 depth/0.pgm\n\n2.0 rgb/1.pgm 2.0 depth/1.pgm\n";
        let a = parse_associations(text, Path::new("/seq")).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[1].depth, PathBuf::from("/seq/depth/1.pgm"));
        assert!(parse_associations("1.0 a.pgm 1.0\n", Path::new(".")).is_err());
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_bytes(&p, b"one").unwrap();
        write_bytes(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
