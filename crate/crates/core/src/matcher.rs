//! Brute-force Hamming nearest-neighbour matching of 256-bit descriptors.

use std::io::Write;

use crate::brief::Descriptor256;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_DISTANCE: u32 = 50;

#[inline]
pub fn hamming(a: &Descriptor256, b: &Descriptor256) -> u32 {
    let (wa, wb) = (a.words(), b.words());
    wa.iter().zip(wb.iter()).map(|(x, y)| (x ^ y).count_ones()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatchConfig {
    pub max_distance: u32,
    pub mutual: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            max_distance: DEFAULT_MAX_DISTANCE,
            mutual: true,
        }
    }
}

/// Nearest entry of `set` to `query`; ties go to the lowest index.
pub fn nearest(query: &Descriptor256, set: &[Descriptor256]) -> Option<(usize, u32)> {
    let mut best: Option<(usize, u32)> = None;
    for (i, d) in set.iter().enumerate() {
        let dist = hamming(query, d);
        if best.is_none_or(|(_, b)| dist < b) {
            best = Some((i, dist));
        }
    }
    best
}

/// For every descriptor of `a`, its nearest neighbour in `b`, kept when the
/// distance is at most `max_distance` (and, in mutual mode, when `a` is also the
/// nearest neighbour of that `b`). Output is ordered by `index_a`.
pub fn match_descriptors(a: &[Descriptor256], b: &[Descriptor256], cfg: MatchConfig) -> Vec<Match> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let reverse: Vec<Option<usize>> = if cfg.mutual {
        b.iter().map(|d| nearest(d, a).map(|(i, _)| i)).collect()
    } else {
        Vec::new()
    };
    a.iter()
        .enumerate()
        .filter_map(|(ia, da)| {
            let (ib, distance) = nearest(da, b)?;
            if distance > cfg.max_distance {
                return None;
            }
            if cfg.mutual && reverse[ib] != Some(ia) {
                return None;
            }
            Some(Match {
                index_a: ia,
                index_b: ib,
                distance,
            })
        })
        .collect()
}

pub fn write_matches_csv(mut w: impl Write, matches: &[Match], comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "index_a,index_b,distance")?;
    for m in matches {
        writeln!(w, "{},{},{}", m.index_a, m.index_b, m.distance)?;
    }
    Ok(())
}

pub fn parse_matches_csv(text: &str) -> Result<Vec<Match>> {
    let mut out = Vec::new();
    let mut header_seen = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line.starts_with("index_a") {
                continue;
            }
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |msg: String| Error::CsvParse { line: idx + 1, msg };
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", fields.len())));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| bad(e.to_string()));
        out.push(Match {
            index_a: num(fields[0])?,
            index_b: num(fields[1])?,
            distance: num(fields[2])? as u32,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_desc(rng: &mut ChaCha8Rng) -> Descriptor256 {
        let mut d = [0u8; 32];
        rng.fill(&mut d);
        Descriptor256(d)
    }

    fn bitloop(a: &Descriptor256, b: &Descriptor256) -> u32 {
        (0..256).filter(|&i| a.bit(i) != b.bit(i)).count() as u32
    }

    #[test]
    fn hamming_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_desc(&mut rng);
        assert_eq!(hamming(&d, &d), 0);
        let mut c = d;
        for b in c.0.iter_mut() {
            *b = !*b;
        }
        assert_eq!(hamming(&d, &c), 256);
        for _ in 0..1000 {
            let (x, y) = (random_desc(&mut rng), random_desc(&mut rng));
            assert_eq!(hamming(&x, &y), bitloop(&x, &y));
        }
    }

    #[test]
    fn identical_sets_match_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let set: Vec<_> = (0..50).map(|_| random_desc(&mut rng)).collect();
        let m = match_descriptors(&set, &set, MatchConfig::default());
        assert_eq!(m.len(), 50);
        assert!(m.iter().all(|m| m.index_a == m.index_b && m.distance == 0));
        assert!(match_descriptors(&set, &[], MatchConfig::default()).is_empty());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let z = Descriptor256::default();
        let mut one = z;
        one.set_bit(3, true);
        let mut other = z;
        other.set_bit(7, true);
        assert_eq!(nearest(&z, &[one, other]), Some((0, 1)));
    }

    #[test]
    fn mutual_symmetry_and_threshold_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a: Vec<_> = (0..40).map(|_| random_desc(&mut rng)).collect();
            let mut b: Vec<_> = a[..20].to_vec();
            for d in b.iter_mut() {
                for _ in 0..rng.random_range(0..40) {
                    let i = rng.random_range(0..256);
                    d.set_bit(i, !d.bit(i));
                }
            }
            b.extend((0..20).map(|_| random_desc(&mut rng)));
            let cfg = MatchConfig { max_distance: 256, mutual: true };
            let mut ab: Vec<_> = match_descriptors(&a, &b, cfg)
                .iter()
                .map(|m| (m.index_a, m.index_b))
                .collect();
            let mut ba: Vec<_> = match_descriptors(&b, &a, cfg)
                .iter()
                .map(|m| (m.index_b, m.index_a))
                .collect();
            ab.sort();
            ba.sort();
            assert_eq!(ab, ba);

            let mut prev: Vec<Match> = Vec::new();
            for t in (0..=256).step_by(16) {
                let cur = match_descriptors(&a, &b, MatchConfig { max_distance: t, mutual: false });
                assert!(prev.iter().all(|p| cur.contains(p)));
                prev = cur;
            }
        }
    }

    #[test]
    fn csv_roundtrip() {
        let m = vec![
            Match { index_a: 0, index_b: 3, distance: 12 },
            Match { index_a: 4, index_b: 1, distance: 0 },
        ];
        let mut buf = Vec::new();
        write_matches_csv(&mut buf, &m, Some("max_distance=50")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# max_distance=50\nindex_a,index_b,distance\n"));
        assert_eq!(parse_matches_csv(&text).unwrap(), m);
        assert!(parse_matches_csv("index_a,index_b,distance\n1,2\n").is_err());
    }
}
