//! Rotated BRIEF: comparison pattern, fixed-point pair rotation, 256-bit descriptors
//! and the multi-unit dispatch model that drops keypoints when every unit is busy.

use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::orient::{TrigFx, Window37, HALF};

pub const PAIRS: usize = 256;
/// Pattern coordinates live in a 27x27 patch.
pub const PATTERN_RADIUS: i8 = 13;

/// Cycles a unit stays busy per keypoint: one rotated pair per cycle, one lookup
/// cycle, one generate cycle, then 37 cycles to reload the window.
pub const ROTATE_CYCLES: u64 = PAIRS as u64;
pub const LOOKUP_CYCLES: u64 = 1;
pub const GENERATE_CYCLES: u64 = 1;
pub const RELOAD_CYCLES: u64 = 37;
pub const BRIEF_OCCUPANCY: u64 = ROTATE_CYCLES + LOOKUP_CYCLES + GENERATE_CYCLES + RELOAD_CYCLES;

pub const DEFAULT_BRIEF_UNITS: usize = 4;
pub const DEFAULT_PATTERN_SEED: u64 = 0x0B5E_ED27;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PointPair {
    pub ax: i8,
    pub ay: i8,
    pub bx: i8,
    pub by: i8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BriefPattern {
    pairs: Vec<PointPair>,
}

impl BriefPattern {
    pub fn new(pairs: Vec<PointPair>) -> Result<Self> {
        if pairs.len() != PAIRS {
            return Err(Error::InvalidArgument(format!(
                "pattern needs {PAIRS} pairs, got {}",
                pairs.len()
            )));
        }
        for (i, p) in pairs.iter().enumerate() {
            if [p.ax, p.ay, p.bx, p.by]
                .iter()
                .any(|c| c.abs() > PATTERN_RADIUS)
            {
                return Err(Error::InvalidArgument(format!(
                    "pair {i} leaves the 27x27 patch"
                )));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[PointPair] {
        &self.pairs
    }

    /// Fixed-seed Gaussian pattern (sigma = 27/5) clipped to the 27x27 patch.
    pub fn default_pattern() -> &'static BriefPattern {
        static PATTERN: OnceLock<BriefPattern> = OnceLock::new();
        PATTERN.get_or_init(|| Self::gaussian(DEFAULT_PATTERN_SEED))
    }

    pub fn gaussian(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 27.0 / 5.0).expect("valid sigma");
        let r = PATTERN_RADIUS as f64;
        let sample = |rng: &mut ChaCha8Rng| -> i8 {
            let v: f64 = normal.sample(rng);
            v.round().clamp(-r, r) as i8
        };
        let mut pairs = Vec::with_capacity(PAIRS);
        while pairs.len() < PAIRS {
            let p = PointPair {
                ax: sample(&mut rng),
                ay: sample(&mut rng),
                bx: sample(&mut rng),
                by: sample(&mut rng),
            };
            if (p.ax, p.ay) != (p.bx, p.by) {
                pairs.push(p);
            }
        }
        Self { pairs }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// One `xA yA xB yB` line per pair; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::with_capacity(PAIRS);
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let coords: Vec<i32> = line
                .split_whitespace()
                .map(|t| t.parse::<i32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::PatternParse {
                    line: line_no,
                    msg: e.to_string(),
                })?;
            if coords.len() != 4 {
                return Err(Error::PatternParse {
                    line: line_no,
                    msg: format!("expected 4 coordinates, found {}", coords.len()),
                });
            }
            if let Some(c) = coords.iter().find(|c| c.abs() > PATTERN_RADIUS as i32) {
                return Err(Error::PatternParse {
                    line: line_no,
                    msg: format!("coordinate {c} exceeds the 27x27 patch"),
                });
            }
            pairs.push(PointPair {
                ax: coords[0] as i8,
                ay: coords[1] as i8,
                bx: coords[2] as i8,
                by: coords[3] as i8,
            });
        }
        if pairs.len() != PAIRS {
            return Err(Error::PatternParse {
                line: text.lines().count(),
                msg: format!("expected {PAIRS} pairs, found {}", pairs.len()),
            });
        }
        Ok(Self { pairs })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# xA yA xB yB\n");
        for p in &self.pairs {
            s.push_str(&format!("{} {} {} {}\n", p.ax, p.ay, p.bx, p.by));
        }
        s
    }
}

/// 256-bit descriptor; bit `i` lives in byte `i / 8` at position `i % 8`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Descriptor256(pub [u8; 32]);

impl Descriptor256 {
    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 8] >> (i % 8) & 1 == 1
    }

    #[inline]
    pub fn set_bit(&mut self, i: usize, v: bool) {
        if v {
            self.0[i / 8] |= 1 << (i % 8);
        } else {
            self.0[i / 8] &= !(1 << (i % 8));
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.0.iter().map(|b| b.count_ones()).sum()
    }

    pub fn words(&self) -> [u64; 4] {
        let mut w = [0u64; 4];
        for (i, chunk) in self.0.chunks_exact(8).enumerate() {
            w[i] = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        w
    }
}

impl fmt::Debug for Descriptor256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Descriptor256(")?;
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

/// Pair coordinates after rotation, clipped to the 37x37 window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RotatedPair {
    pub ax: i8,
    pub ay: i8,
    pub bx: i8,
    pub by: i8,
}

#[inline]
fn rotate_point(x: i8, y: i8, trig: &TrigFx) -> (i8, i8) {
    let (x, y) = (x as i32, y as i32);
    let (c, s) = (trig.cos(), trig.sin());
    // round half up on the 1/256 scale
    let xr = (x * c - y * s + 128) >> 8;
    let yr = (x * s + y * c + 128) >> 8;
    (xr.clamp(-HALF, HALF) as i8, yr.clamp(-HALF, HALF) as i8)
}

pub fn rotate_pair(pair: &PointPair, trig: &TrigFx) -> RotatedPair {
    let (ax, ay) = rotate_point(pair.ax, pair.ay, trig);
    let (bx, by) = rotate_point(pair.bx, pair.by, trig);
    RotatedPair { ax, ay, bx, by }
}

pub fn describe(window: &Window37, pattern: &BriefPattern, trig: &TrigFx) -> Descriptor256 {
    let mut d = Descriptor256::default();
    for (i, pair) in pattern.pairs().iter().enumerate() {
        let r = rotate_pair(pair, trig);
        let a = window.get(r.ax as i32, r.ay as i32);
        let b = window.get(r.bx as i32, r.by as i32);
        d.set_bit(i, a > b);
    }
    d
}

/// One BRIEF unit: free once the level-local cycle reaches `busy_until`.
#[derive(Clone, Debug, Default)]
pub struct BriefUnitState {
    pub busy_until: u64,
    pub window: Option<Window37>,
}

/// Arbiter over `k` BRIEF units; `None` models an unlimited pool.
#[derive(Clone, Debug)]
pub struct Dispatcher {
    units: Option<Vec<u64>>,
}

impl Dispatcher {
    pub fn new(k_units: Option<usize>) -> Result<Self> {
        match k_units {
            Some(0) => Err(Error::InvalidArgument("at least one BRIEF unit is required".into())),
            Some(k) => Ok(Self {
                units: Some(vec![0; k]),
            }),
            None => Ok(Self { units: None }),
        }
    }

    /// Offers a keypoint arriving at `cycle`; returns the accepting unit index or
    /// `None` when all units are busy and the keypoint is dropped.
    pub fn offer(&mut self, cycle: u64) -> Option<usize> {
        match &mut self.units {
            None => Some(0),
            Some(units) => {
                let idx = units.iter().position(|&busy_until| cycle >= busy_until)?;
                units[idx] = cycle + BRIEF_OCCUPANCY;
                Some(idx)
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DispatchOutcome {
    /// `(arrival index, unit)` for accepted keypoints, in arrival order.
    pub accepted: Vec<(usize, usize)>,
    pub dropped: Vec<usize>,
}

/// Discrete-event model of the arbiter over a stream of arrival cycles.
pub fn dispatch(arrivals: &[u64], k_units: Option<usize>) -> Result<DispatchOutcome> {
    let mut d = Dispatcher::new(k_units)?;
    let mut out = DispatchOutcome::default();
    for (i, &t) in arrivals.iter().enumerate() {
        debug_assert!(i == 0 || t >= arrivals[i - 1], "arrivals must be time-ordered");
        match d.offer(t) {
            Some(u) => out.accepted.push((i, u)),
            None => out.dropped.push(i),
        }
    }
    Ok(out)
}
