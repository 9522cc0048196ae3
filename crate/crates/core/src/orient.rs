//! Intensity-centroid orientation: recursive 37x37 moments, sector quantization of
//! the centroid angle with power-of-two tangent comparators, and 8-bit trig tables.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const WINDOW: usize = 37;
pub const HALF: i32 = 18;
pub const DEFAULT_SECTORS: u16 = 64;

/// Relative error at which a shorter power-of-two expansion is accepted.
const TAN_REL_TOLERANCE: f64 = 0.06;
const MAX_TAN_TERMS: u32 = 4;

/// A 37x37 patch addressed by offsets in `[-18, 18]` from its center.
#[derive(Clone, PartialEq, Eq)]
pub struct Window37 {
    data: [u8; WINDOW * WINDOW],
}

impl std::fmt::Debug for Window37 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Window37 {{ center: {} }}", self.get(0, 0))
    }
}

impl Window37 {
    pub fn from_fn(mut f: impl FnMut(i32, i32) -> u8) -> Self {
        let mut data = [0u8; WINDOW * WINDOW];
        for dy in -HALF..=HALF {
            for dx in -HALF..=HALF {
                data[Self::index(dx, dy)] = f(dx, dy);
            }
        }
        Self { data }
    }

    /// Patch centered on `(cx, cy)`; the center must be at least 18 pixels inside.
    pub fn from_image(img: &GrayImage, cx: usize, cy: usize) -> Self {
        let h = HALF as usize;
        assert!(
            cx >= h && cy >= h && cx + h < img.width() && cy + h < img.height(),
            "window at ({cx}, {cy}) leaves the image"
        );
        let mut data = [0u8; WINDOW * WINDOW];
        for (r, dst) in data.chunks_exact_mut(WINDOW).enumerate() {
            let start = (cy - h + r) * img.width() + cx - h;
            dst.copy_from_slice(&img.data()[start..start + WINDOW]);
        }
        Self { data }
    }

    #[inline]
    fn index(dx: i32, dy: i32) -> usize {
        ((dy + HALF) as usize) * WINDOW + (dx + HALF) as usize
    }

    #[inline]
    pub fn get(&self, dx: i32, dy: i32) -> u8 {
        self.data[Self::index(dx, dy)]
    }

    /// Direct evaluation of `m_pq = sum x^p y^q I(x, y)` for (m00, m10, m01).
    pub fn moments(&self) -> Moments {
        let mut m = Moments::default();
        let mut col = [0i64; WINDOW];
        for (row, dy) in self.data.chunks_exact(WINDOW).zip(-HALF as i64..) {
            let mut sum = 0i64;
            for (c, &v) in col.iter_mut().zip(row) {
                *c += v as i64;
                sum += v as i64;
            }
            m.m00 += sum;
            m.m01 += dy * sum;
        }
        m.m10 = col.iter().zip(-HALF as i64..).map(|(&c, dx)| dx * c).sum();
        m
    }

    /// Rotates the patch content by +90 degrees (x -> -y, y -> x).
    pub fn rotated90(&self) -> Self {
        Self::from_fn(|dx, dy| self.get(dy, -dx))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Moments {
    pub m00: i64,
    pub m10: i64,
    pub m01: i64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct ColumnStats {
    sum: i64,
    ymom: i64,
}

/// Sliding-window moment accumulator fed one 37-pixel column per step.
///
/// The x-moment accumulator runs the hardware recursion
/// `acc' = acc - 18 S(C_in) - 19 S(C_out) + m00`, which tracks the moment with the
/// incoming column at x = -18; [`MomentState::moments`] reports it in image
/// orientation (incoming column at x = +18).
#[derive(Clone, Debug)]
pub struct MomentState {
    m00: i64,
    m10_acc: i64,
    m01: i64,
    delay: [ColumnStats; WINDOW],
    head: usize,
}

impl Default for MomentState {
    fn default() -> Self {
        Self::new()
    }
}

impl MomentState {
    pub fn new() -> Self {
        Self {
            m00: 0,
            m10_acc: 0,
            m01: 0,
            delay: [ColumnStats::default(); WINDOW],
            head: 0,
        }
    }

    /// Pushes the newest column (top to bottom) and retires the oldest one.
    pub fn update(&mut self, column: &[u8; WINDOW]) {
        let mut incoming = ColumnStats::default();
        for (i, &p) in column.iter().enumerate() {
            let p = p as i64;
            incoming.sum += p;
            incoming.ymom += (i as i64 - HALF as i64) * p;
        }
        let outgoing = self.delay[self.head];
        self.delay[self.head] = incoming;
        self.head = (self.head + 1) % WINDOW;

        let half = HALF as i64;
        self.m10_acc = self.m10_acc - half * incoming.sum - (half + 1) * outgoing.sum + self.m00;
        self.m00 += incoming.sum - outgoing.sum;
        self.m01 += incoming.ymom - outgoing.ymom;
    }

    pub fn moments(&self) -> Moments {
        Moments {
            m00: self.m00,
            m10: -self.m10_acc,
            m01: self.m01,
        }
    }
}

/// Q8.8 tangent coefficients of the first-quadrant sector centers.
pub fn tanfx_table(nd: u16) -> Result<Vec<u16>> {
    validate_sectors(nd)?;
    let per_quadrant = nd / 4;
    Ok((0..per_quadrant)
        .map(|k| power_of_two_approx(sector_center_deg(k, nd).to_radians().tan()))
        .collect())
}

fn validate_sectors(nd: u16) -> Result<()> {
    if !(4..=256).contains(&nd) || nd % 4 != 0 {
        return Err(Error::InvalidArgument(format!(
            "sector count must be a multiple of 4 in [4, 256], got {nd}"
        )));
    }
    Ok(())
}

fn sector_center_deg(k: u16, nd: u16) -> f64 {
    (2 * k as u32 + 1) as f64 * 180.0 / nd as f64
}

/// Nearest Q8.8 value using as few power-of-two terms as keep the relative error
/// within tolerance, capped at four terms.
fn power_of_two_approx(target: f64) -> u16 {
    static CANDIDATES: OnceLock<Vec<u16>> = OnceLock::new();
    let candidates = CANDIDATES.get_or_init(|| {
        (1..=u16::MAX)
            .filter(|v| v.count_ones() <= MAX_TAN_TERMS)
            .collect()
    });
    let scaled = target * 256.0;
    let mut best = 0u16;
    for terms in 1..=MAX_TAN_TERMS {
        best = candidates
            .iter()
            .copied()
            .filter(|v| v.count_ones() <= terms)
            .min_by(|a, b| {
                let da = (*a as f64 - scaled).abs();
                let db = (*b as f64 - scaled).abs();
                da.total_cmp(&db)
            })
            .unwrap_or(0);
        if ((best as f64 - scaled) / scaled).abs() <= TAN_REL_TOLERANCE {
            break;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SectorAngle {
    /// 0: m10 >= 0, m01 >= 0; 1: m10 < 0, m01 >= 0; 2: both < 0; 3: m10 >= 0, m01 < 0.
    pub quadrant: u8,
    /// Comparator index on |m01| / |m10|, 0 nearest the x-axis.
    pub sector_in_quadrant: u16,
    /// Index in `0..nd`, increasing with `atan2(m01, m10)`; center at `(2g + 1) * pi / nd`.
    pub global_sector: u16,
    pub degenerate: bool,
}

impl SectorAngle {
    pub fn from_global(global_sector: u16, nd: u16) -> Self {
        let q = nd / 4;
        let quadrant = (global_sector / q) as u8;
        let within = global_sector % q;
        let sector_in_quadrant = if quadrant % 2 == 0 { within } else { q - 1 - within };
        Self {
            quadrant,
            sector_in_quadrant,
            global_sector,
            degenerate: false,
        }
    }

    pub fn center_rad(&self, nd: u16) -> f64 {
        (2 * self.global_sector as u32 + 1) as f64 * PI / nd as f64
    }
}

/// Fixed-point sine/cosine of a sector center: 8-bit magnitudes (scale 1/256) and signs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrigFx {
    pub sin_mag: u8,
    pub cos_mag: u8,
    pub sin_sign: i8,
    pub cos_sign: i8,
}

impl TrigFx {
    #[inline]
    pub fn sin(&self) -> i32 {
        self.sin_sign as i32 * self.sin_mag as i32
    }

    #[inline]
    pub fn cos(&self) -> i32 {
        self.cos_sign as i32 * self.cos_mag as i32
    }
}

/// Angle quantizer for a fixed sector count: comparator coefficients plus trig LUTs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SectorQuantizer {
    nd: u16,
    tan_q8: Vec<u16>,
    sin_mag: Vec<u8>,
    cos_mag: Vec<u8>,
}

impl SectorQuantizer {
    pub fn new(nd: u16) -> Result<Self> {
        let tan_q8 = tanfx_table(nd)?;
        let mag = |v: f64| (v.abs() * 256.0).round().min(255.0) as u8;
        let centers: Vec<f64> = (0..nd / 4)
            .map(|k| sector_center_deg(k, nd).to_radians())
            .collect();
        Ok(Self {
            nd,
            tan_q8,
            sin_mag: centers.iter().map(|a| mag(a.sin())).collect(),
            cos_mag: centers.iter().map(|a| mag(a.cos())).collect(),
        })
    }

    pub fn sectors(&self) -> u16 {
        self.nd
    }

    pub fn tan_coefficients(&self) -> &[u16] {
        &self.tan_q8
    }

    /// Picks the first comparator whose `|m10| * tan(center)` exceeds `|m01|`;
    /// when none fires, the last sector of the quadrant.
    pub fn quantize(&self, m10: i64, m01: i64) -> SectorAngle {
        if m10 == 0 && m01 == 0 {
            return SectorAngle {
                degenerate: true,
                ..SectorAngle::from_global(0, self.nd)
            };
        }
        let quadrant = match (m10 >= 0, m01 >= 0) {
            (true, true) => 0u8,
            (false, true) => 1,
            (false, false) => 2,
            (true, false) => 3,
        };
        let ax = m10.unsigned_abs() as u128;
        let ay = (m01.unsigned_abs() as u128) << 8;
        let last = self.nd / 4 - 1;
        let k = self
            .tan_q8
            .iter()
            .position(|&c| ax * c as u128 > ay)
            .map_or(last, |k| k as u16);
        let q = self.nd / 4;
        let within = if quadrant % 2 == 0 { k } else { q - 1 - k };
        SectorAngle {
            quadrant,
            sector_in_quadrant: k,
            global_sector: quadrant as u16 * q + within,
            degenerate: false,
        }
    }

    pub fn trig(&self, sector: SectorAngle) -> TrigFx {
        let k = sector.sector_in_quadrant as usize;
        let (sin_sign, cos_sign) = match sector.quadrant {
            0 => (1, 1),
            1 => (1, -1),
            2 => (-1, -1),
            _ => (-1, 1),
        };
        TrigFx {
            sin_mag: self.sin_mag[k],
            cos_mag: self.cos_mag[k],
            sin_sign,
            cos_sign,
        }
    }
}
