//! Floating-point reference extractor and the metrics that compare the
//! fixed-point pipeline against it.
//!
//! The reference follows the same stage order as the hardware model but keeps
//! every approximated stage exact: a real-valued pyramid, a sampled sigma = 2
//! Gaussian, `atan2` orientation and unquantized pattern rotation. FAST and NMS
//! run on 8-bit rounded levels, so any keypoint difference comes from the
//! pyramid arithmetic alone.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;

use crate::brief::{BriefPattern, Descriptor256};
use crate::error::Result;
use crate::fast::{nms3x3, score_map, score_window};
use crate::image::GrayImage;
use crate::matcher::{hamming, match_descriptors, MatchConfig};
use crate::orient::{SectorAngle, HALF, WINDOW};
use crate::pipeline::{to_level0, top_k, FrameOutput, Keypoint, BORDER};
use crate::pyramid::{scaled_len, MIN_LEVEL_SIDE, PYRAMID_LEVELS};

pub const REF_SIGMA: f64 = 2.0;

/// Real-valued image with clamp-replicated reads.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl FloatImage {
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.data().iter().map(|&p| p as f64).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| self.get(x, y).round().clamp(0.0, 255.0) as u8)
    }
}

/// Exact bilinear resampling by 5/6: output `(X, Y)` samples the source at
/// `(6X/5, 6Y/5)`.
pub fn ref_downscale(img: &FloatImage) -> FloatImage {
    let (w, h) = (img.width(), img.height());
    FloatImage::from_fn(scaled_len(w), scaled_len(h), |ox, oy| {
        let (sx, sy) = (ox as f64 * 1.2, oy as f64 * 1.2);
        let (x, y) = (sx.floor(), sy.floor());
        let (fx, fy) = (sx - x, sy - y);
        let (x, y) = (x as isize, y as isize);
        let p00 = img.get_clamped(x, y);
        let p01 = img.get_clamped(x + 1, y);
        let p10 = img.get_clamped(x, y + 1);
        let p11 = img.get_clamped(x + 1, y + 1);
        (1.0 - fy) * ((1.0 - fx) * p00 + fx * p01) + fy * ((1.0 - fx) * p10 + fx * p11)
    })
}

/// Rounded 8-bit result of [`ref_downscale`] on an 8-bit image.
pub fn ref_downscale_u8(img: &GrayImage) -> GrayImage {
    ref_downscale(&FloatImage::from_gray(img)).to_gray()
}

/// Sampled 7-tap Gaussian normalized to unit sum.
pub fn gaussian_taps(sigma: f64) -> [f64; 7] {
    let mut t = [0.0; 7];
    for (i, v) in t.iter_mut().enumerate() {
        let d = i as f64 - 3.0;
        *v = (-d * d / (2.0 * sigma * sigma)).exp();
    }
    let s: f64 = t.iter().sum();
    t.map(|v| v / s)
}

/// Separable 7x7 Gaussian with clamp-replicated borders.
pub fn ref_gaussian(img: &FloatImage, sigma: f64) -> FloatImage {
    let taps = gaussian_taps(sigma);
    let (w, h) = (img.width(), img.height());
    let horiz = FloatImage::from_fn(w, h, |x, y| {
        (0..7)
            .map(|i| taps[i] * img.get_clamped(x as isize + i as isize - 3, y as isize))
            .sum()
    });
    FloatImage::from_fn(w, h, |x, y| {
        (0..7)
            .map(|i| taps[i] * horiz.get_clamped(x as isize, y as isize + i as isize - 3))
            .sum()
    })
}

/// Orientation of a window by the exact centroid angle `atan2(m01, m10)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefOrientation {
    pub angle: f64,
    pub degenerate: bool,
}

pub fn ref_orientation(window: impl Fn(i32, i32) -> f64) -> RefOrientation {
    let (mut m10, mut m01) = (0.0, 0.0);
    for dy in -HALF..=HALF {
        for dx in -HALF..=HALF {
            let v = window(dx, dy);
            m10 += dx as f64 * v;
            m01 += dy as f64 * v;
        }
    }
    if m10 == 0.0 && m01 == 0.0 {
        RefOrientation { angle: 0.0, degenerate: true }
    } else {
        RefOrientation {
            angle: m01.atan2(m10),
            degenerate: false,
        }
    }
}

/// Pattern point rotated by `angle` and rounded to the nearest pixel, clipped to the window.
pub fn ref_rotate(x: i8, y: i8, angle: f64) -> (i32, i32) {
    rotate_sc(x, y, angle.sin_cos())
}

#[inline]
fn rotate_sc(x: i8, y: i8, (s, c): (f64, f64)) -> (i32, i32) {
    let (x, y) = (x as f64, y as f64);
    let xr = (x * c - y * s).round() as i32;
    let yr = (x * s + y * c).round() as i32;
    (xr.clamp(-HALF, HALF), yr.clamp(-HALF, HALF))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefKeypoint {
    pub x: u16,
    pub y: u16,
    pub level: u8,
    pub score: u16,
    pub angle: f64,
    pub degenerate: bool,
    pub x0: u16,
    pub y0: u16,
    pub descriptor: Descriptor256,
}

#[derive(Clone, Debug)]
pub struct RefConfig {
    pub threshold: u8,
    pub n_max: usize,
    pub sigma: f64,
}

impl Default for RefConfig {
    fn default() -> Self {
        Self {
            threshold: crate::fast::DEFAULT_THRESHOLD,
            n_max: crate::pipeline::DEFAULT_NMAX,
            sigma: REF_SIGMA,
        }
    }
}

fn ref_level(level: &FloatImage, l: u8, cfg: &RefConfig, pattern: &BriefPattern) -> Vec<RefKeypoint> {
    let gray = level.to_gray();
    let (w, h) = (gray.width(), gray.height());
    let scores = score_map(&gray, cfg.threshold);
    let smooth = ref_gaussian(level, cfg.sigma);
    let mut out = Vec::new();
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            let win = score_window(&scores, w, h, x, y);
            if !nms3x3(&win) {
                continue;
            }
            let at = |dx: i32, dy: i32| smooth.get((x as i32 + dx) as usize, (y as i32 + dy) as usize);
            let o = ref_orientation(at);
            let sc = o.angle.sin_cos();
            let mut d = Descriptor256::default();
            for (i, p) in pattern.pairs().iter().enumerate() {
                let (ax, ay) = rotate_sc(p.ax, p.ay, sc);
                let (bx, by) = rotate_sc(p.bx, p.by, sc);
                d.set_bit(i, at(ax, ay) > at(bx, by));
            }
            let (x0, y0) = to_level0(x, y, l);
            out.push(RefKeypoint {
                x: x as u16,
                y: y as u16,
                level: l,
                score: win[1][1],
                angle: o.angle,
                degenerate: o.degenerate,
                x0,
                y0,
                descriptor: d,
            });
        }
    }
    out
}

/// Reference keypoints for a frame, strongest `n_max` in (level, y, x) order.
pub fn ref_pipeline(img: &GrayImage, cfg: &RefConfig, pattern: &BriefPattern) -> Result<Vec<RefKeypoint>> {
    crate::pyramid::build_pyramid(img)?;
    let mut levels = vec![FloatImage::from_gray(img)];
    for _ in 1..PYRAMID_LEVELS {
        let next = ref_downscale(levels.last().expect("non-empty"));
        debug_assert!(next.width() >= MIN_LEVEL_SIDE && next.height() >= MIN_LEVEL_SIDE);
        levels.push(next);
    }
    let per_level: Vec<Vec<RefKeypoint>> = levels
        .par_iter()
        .enumerate()
        .map(|(l, lvl)| ref_level(lvl, l as u8, cfg, pattern))
        .collect();
    let all: Vec<RefKeypoint> = per_level.into_iter().flatten().collect();

    // rank through the shared selector so ties break identically
    let proxies: Vec<Keypoint> = all
        .iter()
        .map(|k| Keypoint {
            x: k.x,
            y: k.y,
            level: k.level,
            score: k.score,
            sector: 0,
            degenerate: k.degenerate,
            x0: k.x0,
            y0: k.y0,
            descriptor: None,
        })
        .collect();
    let index: HashMap<(u8, u16, u16), usize> = all
        .iter()
        .enumerate()
        .map(|(i, k)| ((k.level, k.y, k.x), i))
        .collect();
    Ok(top_k(proxies, cfg.n_max)
        .iter()
        .map(|k| all[index[&(k.level, k.y, k.x)]].clone())
        .collect())
}

/// Signed smallest difference between two angles, in `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    if d > PI {
        d - 2.0 * PI
    } else {
        d
    }
}

/// Agreement between a fixed-point frame and the reference on the same image.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Agreement {
    pub fixed: usize,
    pub reference: usize,
    /// Keypoints present in both sets at the same (level, x, y).
    pub common: usize,
    /// `|A xor B| / |A union B|` over keypoint locations.
    pub symdiff_rate: f64,
    /// Mean fraction of equal descriptor bits over common keypoints.
    pub bit_agreement: f64,
    pub mean_hamming: f64,
    /// Mean |sector center - reference angle| in radians over common non-degenerate keypoints.
    pub mean_angle_error: f64,
    pub max_angle_error: f64,
    /// Fraction of fixed keypoints whose mutual descriptor match lands on the
    /// reference keypoint at the same level-0 location (within 2 px).
    pub match_inlier_rate: f64,
    /// Hamming distance histogram over common keypoints, bins of 8 bits (the last holds 248..=256).
    pub hamming_histogram: [usize; 32],
}

pub fn compare(fixed: &FrameOutput, reference: &[RefKeypoint], sectors: u16) -> Agreement {
    let fixed_kps: Vec<&Keypoint> = fixed.keypoints.iter().filter(|k| k.descriptor.is_some()).collect();
    let ref_index: HashMap<(u8, u16, u16), &RefKeypoint> =
        reference.iter().map(|k| ((k.level, k.x, k.y), k)).collect();

    let mut a = Agreement {
        fixed: fixed_kps.len(),
        reference: reference.len(),
        ..Agreement::default()
    };
    let (mut ham_sum, mut ang_sum, mut ang_n) = (0u64, 0.0, 0usize);
    for k in &fixed_kps {
        let Some(r) = ref_index.get(&(k.level, k.x, k.y)) else {
            continue;
        };
        a.common += 1;
        let d = hamming(&k.descriptor.expect("filtered"), &r.descriptor);
        ham_sum += d as u64;
        a.hamming_histogram[(d / 8).min(31) as usize] += 1;
        if !k.degenerate && !r.degenerate {
            let center = SectorAngle::from_global(k.sector, sectors).center_rad(sectors);
            let e = angle_diff(center, r.angle).abs();
            ang_sum += e;
            ang_n += 1;
            a.max_angle_error = a.max_angle_error.max(e);
        }
    }
    let union = a.fixed + a.reference - a.common;
    a.symdiff_rate = if union == 0 { 0.0 } else { (union - a.common) as f64 / union as f64 };
    if a.common > 0 {
        a.mean_hamming = ham_sum as f64 / a.common as f64;
        a.bit_agreement = 1.0 - a.mean_hamming / 256.0;
    }
    if ang_n > 0 {
        a.mean_angle_error = ang_sum / ang_n as f64;
    }

    let da: Vec<Descriptor256> = fixed_kps.iter().map(|k| k.descriptor.expect("filtered")).collect();
    let db: Vec<Descriptor256> = reference.iter().map(|k| k.descriptor).collect();
    let inliers = match_descriptors(&da, &db, MatchConfig::default())
        .iter()
        .filter(|m| {
            let (p, q) = (fixed_kps[m.index_a], &reference[m.index_b]);
            let dx = p.x0 as f64 - q.x0 as f64;
            let dy = p.y0 as f64 - q.y0 as f64;
            dx * dx + dy * dy <= 4.0
        })
        .count();
    if a.fixed > 0 {
        a.match_inlier_rate = inliers as f64 / a.fixed as f64;
    }
    a
}

pub const DEGRADATION_HEADER: &str = "frame,sectors,pixel_bits,fixed,reference,common,symdiff_rate,bit_agreement,mean_hamming,mean_angle_error_deg,max_angle_error_deg,match_inlier_rate";

#[derive(Clone, Debug, PartialEq)]
pub struct DegradationRow {
    pub frame: String,
    pub sectors: u16,
    pub pixel_bits: u8,
    pub agreement: Agreement,
}

pub fn write_degradation_csv(mut w: impl Write, rows: &[DegradationRow], comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{DEGRADATION_HEADER}")?;
    for r in rows {
        let a = &r.agreement;
        writeln!(
            w,
            "{},{},{},{},{},{},{:.6},{:.6},{:.4},{:.4},{:.4},{:.6}",
            r.frame,
            r.sectors,
            r.pixel_bits,
            a.fixed,
            a.reference,
            a.common,
            a.symdiff_rate,
            a.bit_agreement,
            a.mean_hamming,
            a.mean_angle_error.to_degrees(),
            a.max_angle_error.to_degrees(),
            a.match_inlier_rate
        )?;
    }
    Ok(())
}

/// Hamming histogram rows: `bin_start,count`.
pub fn write_histogram_csv(mut w: impl Write, hist: &[usize; 32], comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "hamming_from,count")?;
    for (i, n) in hist.iter().enumerate() {
        writeln!(w, "{},{n}", i * 8)?;
    }
    Ok(())
}

/// Window sampler over a float image, for callers that hold a center.
pub fn float_window(img: &FloatImage, cx: usize, cy: usize) -> impl Fn(i32, i32) -> f64 + '_ {
    assert!(cx + (HALF as usize) < img.width() && cy + (HALF as usize) < img.height());
    assert!(cx >= HALF as usize && cy >= HALF as usize);
    move |dx, dy| img.get((cx as i32 + dx) as usize, (cy as i32 + dy) as usize)
}

const _: () = assert!(WINDOW == 2 * HALF as usize + 1);
