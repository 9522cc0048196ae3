//! Streaming ORB extractor.
//!
//! Each pyramid level is driven one pixel per cycle in raster order through four
//! line buffers: raw pixels for FAST (7 rows), quantized pixels for the binomial
//! filter (7 rows), corner scores for NMS (3 rows) and smoothed pixels for the
//! orientation/BRIEF window (37 rows). Stage latencies in stream indices:
//!
//! * FAST score and smoothed pixel of index `s`: cycle `s + 3w + 3`
//! * NMS decision for index `c`: when the score of `c + w + 1` is produced
//! * orientation window for center `c`: when the smoothed pixel `c + 18w + 18` is produced
//!
//! The batch path composes the same stages over whole images and must agree bit
//! for bit with the streaming path when no keypoints are dropped.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::brief::{describe, BriefPattern, Descriptor256, Dispatcher, BRIEF_OCCUPANCY, DEFAULT_BRIEF_UNITS};
use crate::error::{Error, Result};
use crate::fast::{classify, nms3x3, score_map, score_window, RingSample, DEFAULT_THRESHOLD, RING_OFFSETS, RING_RADIUS};
use crate::image::{quantize_pixels, GrayImage, QuantSpec};
use crate::orient::{MomentState, SectorQuantizer, Window37, DEFAULT_SECTORS, HALF, WINDOW};
use crate::pyramid::{build_pyramid, MIN_LEVEL_SIDE};
use crate::smooth::{gaussian7, smooth_pixel};

pub const DEFAULT_PIXEL_BITS: u8 = 6;
pub const DEFAULT_NMAX: usize = 1000;
/// Keypoints closer than this to a level border have no full 37x37 window.
pub const BORDER: usize = HALF as usize;

const FAST_ROWS: usize = 7;
const GAUSS_ROWS: usize = 7;
const SCORE_ROWS: usize = 3;
const WINDOW_ROWS: usize = WINDOW;

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub threshold: u8,
    pub sectors: u16,
    pub pixel_bits: u8,
    /// `None` models an unlimited pool of BRIEF units (no drops).
    pub brief_units: Option<usize>,
    pub n_max: usize,
    pub pattern: Arc<BriefPattern>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            sectors: DEFAULT_SECTORS,
            pixel_bits: DEFAULT_PIXEL_BITS,
            brief_units: Some(DEFAULT_BRIEF_UNITS),
            n_max: DEFAULT_NMAX,
            pattern: Arc::new(BriefPattern::default_pattern().clone()),
        }
    }
}

impl PipelineConfig {
    pub fn describe(&self) -> String {
        format!(
            "threshold={} sectors={} pixel_bits={} brief_units={} nmax={}",
            self.threshold,
            self.sectors,
            self.pixel_bits,
            self.brief_units
                .map_or_else(|| "unlimited".to_string(), |k| k.to_string()),
            self.n_max
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Keypoint {
    pub x: u16,
    pub y: u16,
    pub level: u8,
    pub score: u16,
    pub sector: u16,
    /// Both first moments were zero; the keypoint keeps sector 0.
    pub degenerate: bool,
    /// Position scaled to the level-0 frame.
    pub x0: u16,
    pub y0: u16,
    /// `None` when every BRIEF unit was busy and the keypoint was dropped.
    pub descriptor: Option<Descriptor256>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LevelStats {
    pub level: u8,
    pub width: usize,
    pub height: usize,
    pub pixels: u64,
    pub cycles: u64,
    pub corners: u64,
    pub keypoints: u64,
    pub in_border: u64,
    pub descriptors: u64,
    pub dropped: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PipelineStats {
    pub levels: Vec<LevelStats>,
    pub retained: usize,
    /// Frame latency in level-0 cycles: every level streams while level 0 does,
    /// then drains its own fill overhead.
    pub level0_cycles: u64,
}

impl PipelineStats {
    pub fn totals(&self) -> LevelStats {
        let mut t = LevelStats::default();
        for l in &self.levels {
            t.pixels += l.pixels;
            t.cycles += l.cycles;
            t.corners += l.corners;
            t.keypoints += l.keypoints;
            t.in_border += l.in_border;
            t.descriptors += l.descriptors;
            t.dropped += l.dropped;
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelOutput {
    /// In-border keypoints in raster order, including dropped ones.
    pub keypoints: Vec<Keypoint>,
    pub stats: LevelStats,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameOutput {
    /// Retained keypoints in (level, y, x) order.
    pub keypoints: Vec<Keypoint>,
    pub stats: PipelineStats,
}

/// Extra cycles after the last input pixel: the smoothing/FAST latency plus one
/// full BRIEF occupancy to flush the last descriptor.
pub fn fill_overhead(width: usize) -> u64 {
    stage_latency(width) + BRIEF_OCCUPANCY
}

#[inline]
fn stage_latency(width: usize) -> u64 {
    3 * width as u64 + 3
}

/// Delay line over a raster stream holding the last `rows * width` entries.
#[derive(Clone, Debug)]
pub struct LineBuffer<T> {
    width: usize,
    buf: Vec<T>,
    written: u64,
}

impl<T: Copy + Default> LineBuffer<T> {
    pub fn new(rows: usize, width: usize) -> Self {
        Self {
            width,
            buf: vec![T::default(); rows * width],
            written: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.buf.len()
    }

    #[inline]
    pub fn push(&mut self, v: T) {
        let cap = self.buf.len() as u64;
        self.buf[(self.written % cap) as usize] = v;
        self.written += 1;
    }

    /// Entry at stream index `idx`; valid for `capacity()` pushes after it was written.
    #[inline]
    pub fn at(&self, idx: u64) -> T {
        let cap = self.buf.len() as u64;
        assert!(
            idx < self.written && self.written - idx <= cap,
            "stream index {idx} not resident (written {})",
            self.written
        );
        self.buf[(idx % cap) as usize]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.at((y * self.width + x) as u64)
    }
}

/// Shared state for running the extractor with one configuration.
#[derive(Clone, Debug)]
pub struct Extractor {
    cfg: PipelineConfig,
    quant: QuantSpec,
    quantizer: SectorQuantizer,
}

impl Extractor {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        if cfg.threshold == 0 {
            return Err(Error::InvalidArgument("FAST threshold must be at least 1".into()));
        }
        if cfg.n_max == 0 {
            return Err(Error::InvalidArgument("n_max must be at least 1".into()));
        }
        Dispatcher::new(cfg.brief_units)?;
        Ok(Self {
            quant: QuantSpec::new(cfg.pixel_bits)?,
            quantizer: SectorQuantizer::new(cfg.sectors)?,
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    fn check_level(img: &GrayImage) -> Result<()> {
        if img.width() < MIN_LEVEL_SIDE || img.height() < MIN_LEVEL_SIDE {
            return Err(Error::ImageTooSmall {
                width: img.width(),
                height: img.height(),
                reason: "a pyramid level must be at least 41x41",
            });
        }
        Ok(())
    }

    fn new_keypoint(&self, x: usize, y: usize, level: u8, score: u16, window: &Window37) -> Keypoint {
        let m = window.moments();
        let sector = self.quantizer.quantize(m.m10, m.m01);
        let (x0, y0) = to_level0(x, y, level);
        Keypoint {
            x: x as u16,
            y: y as u16,
            level,
            score,
            sector: sector.global_sector,
            degenerate: sector.degenerate,
            x0,
            y0,
            descriptor: Some(describe(window, &self.cfg.pattern, &self.quantizer.trig(sector))),
        }
    }

    /// Cycle-level streaming model of one pyramid level.
    pub fn run_level(&self, img: &GrayImage, level: u8) -> Result<LevelOutput> {
        Self::check_level(img)?;
        let (w, h) = (img.width(), img.height());
        let n = (w * h) as u64;
        let latency = stage_latency(w);
        let nms_delay = w as u64 + 1;
        let window_delay = (BORDER * w + BORDER) as u64;
        let t = self.cfg.threshold;

        let mut raw = LineBuffer::<u8>::new(FAST_ROWS, w);
        let mut quant = LineBuffer::<u8>::new(GAUSS_ROWS, w);
        let mut scores = LineBuffer::<u16>::new(SCORE_ROWS, w);
        let mut smooth = LineBuffer::<u8>::new(WINDOW_ROWS, w);
        let mut moments = MomentState::new();
        let mut fifo: VecDeque<(usize, usize, u16)> = VecDeque::new();
        let mut dispatcher = Dispatcher::new(self.cfg.brief_units)?;

        let mut stats = LevelStats {
            level,
            width: w,
            height: h,
            pixels: n,
            cycles: n + fill_overhead(w),
            ..LevelStats::default()
        };
        let mut keypoints = Vec::new();
        let r = RING_RADIUS;

        for cycle in 0..n + latency {
            if cycle < n {
                let p = img.data()[cycle as usize];
                raw.push(p);
                quant.push(self.quant.apply(p));
            }
            if cycle < latency {
                continue;
            }
            let s = cycle - latency;
            let (sx, sy) = ((s % w as u64) as usize, (s / w as u64) as usize);

            // FAST on raw pixels
            let score = if sx >= r && sy >= r && sx + r < w && sy + r < h {
                let mut ring = [0u8; 16];
                for (v, &(dx, dy)) in ring.iter_mut().zip(RING_OFFSETS.iter()) {
                    *v = raw.get((sx as i32 + dx) as usize, (sy as i32 + dy) as usize);
                }
                classify(&RingSample { center: raw.get(sx, sy), ring }, t).score
            } else {
                0
            };
            if score > 0 {
                stats.corners += 1;
            }
            scores.push(score);

            // binomial smoothing of quantized pixels, clamp-replicated borders
            let fetch = |x: isize, y: isize| {
                let cx = x.clamp(0, w as isize - 1) as usize;
                let cy = y.clamp(0, h as isize - 1) as usize;
                quant.get(cx, cy) as u32
            };
            smooth.push(smooth_pixel(fetch, sx as isize, sy as isize) as u8);

            // NMS one row behind the score stream
            if s >= nms_delay {
                let c = s - nms_delay;
                let (cx, cy) = ((c % w as u64) as usize, (c / w as u64) as usize);
                let mut win = [[0u16; 3]; 3];
                for (dy, row) in win.iter_mut().enumerate() {
                    for (dx, v) in row.iter_mut().enumerate() {
                        let (xx, yy) = (cx as isize + dx as isize - 1, cy as isize + dy as isize - 1);
                        if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                            *v = scores.get(xx as usize, yy as usize);
                        }
                    }
                }
                if nms3x3(&win) {
                    stats.keypoints += 1;
                    if in_border(cx, cy, w, h) {
                        stats.in_border += 1;
                        fifo.push_back((cx, cy, win[1][1]));
                    }
                }
            }

            // orientation moments over the 37-row window
            let mut column = [0u8; WINDOW];
            for (i, v) in column.iter_mut().enumerate() {
                let row = sy as isize - (WINDOW as isize - 1) + i as isize;
                if row >= 0 {
                    *v = smooth.get(sx, row as usize);
                }
            }
            moments.update(&column);

            if s < window_delay {
                continue;
            }
            let c = s - window_delay;
            let (cx, cy) = ((c % w as u64) as usize, (c / w as u64) as usize);
            if fifo.front().is_some_and(|&(fx, fy, _)| (fx, fy) == (cx, cy)) {
                let (_, _, kscore) = fifo.pop_front().expect("front checked");
                let window = Window37::from_fn(|dx, dy| {
                    smooth.get((cx as i32 + dx) as usize, (cy as i32 + dy) as usize)
                });
                let m = moments.moments();
                debug_assert_eq!(m, window.moments());
                let mut kp = self.new_keypoint(cx, cy, level, kscore, &window);
                if dispatcher.offer(cycle).is_some() {
                    stats.descriptors += 1;
                } else {
                    kp.descriptor = None;
                    stats.dropped += 1;
                }
                keypoints.push(kp);
            }
        }
        debug_assert!(fifo.is_empty());
        Ok(LevelOutput { keypoints, stats })
    }

    /// Whole-image composition of the same stages, used as the streaming reference.
    pub fn run_level_batch(&self, img: &GrayImage, level: u8) -> Result<LevelOutput> {
        Self::check_level(img)?;
        let (w, h) = (img.width(), img.height());
        let n = (w * h) as u64;
        let scores = score_map(img, self.cfg.threshold);
        let smoothed = gaussian7(&quantize_pixels(img, self.quant))?;
        let mut dispatcher = Dispatcher::new(self.cfg.brief_units)?;
        let mut stats = LevelStats {
            level,
            width: w,
            height: h,
            pixels: n,
            cycles: n + fill_overhead(w),
            corners: scores.iter().filter(|&&s| s > 0).count() as u64,
            ..LevelStats::default()
        };
        let window_cycle_offset = stage_latency(w) + (BORDER * w + BORDER) as u64;
        let mut keypoints = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let win = score_window(&scores, w, h, x, y);
                if !nms3x3(&win) {
                    continue;
                }
                stats.keypoints += 1;
                if !in_border(x, y, w, h) {
                    continue;
                }
                stats.in_border += 1;
                let window = Window37::from_image(&smoothed, x, y);
                let mut kp = self.new_keypoint(x, y, level, win[1][1], &window);
                let cycle = (y * w + x) as u64 + window_cycle_offset;
                if dispatcher.offer(cycle).is_some() {
                    stats.descriptors += 1;
                } else {
                    kp.descriptor = None;
                    stats.dropped += 1;
                }
                keypoints.push(kp);
            }
        }
        Ok(LevelOutput { keypoints, stats })
    }

    /// Extracts every pyramid level (levels run concurrently) and keeps the
    /// `n_max` strongest described keypoints.
    pub fn run_frame(&self, img: &GrayImage) -> Result<FrameOutput> {
        self.frame_with(img, |lvl, l| self.run_level(lvl, l))
    }

    pub fn run_frame_batch(&self, img: &GrayImage) -> Result<FrameOutput> {
        self.frame_with(img, |lvl, l| self.run_level_batch(lvl, l))
    }

    fn frame_with(
        &self,
        img: &GrayImage,
        run: impl Fn(&GrayImage, u8) -> Result<LevelOutput> + Sync,
    ) -> Result<FrameOutput> {
        let pyramid = build_pyramid(img)?;
        let outputs: Vec<LevelOutput> = pyramid
            .levels()
            .par_iter()
            .enumerate()
            .map(|(l, lvl)| run(lvl, l as u8))
            .collect::<Result<_>>()?;
        let mut levels = Vec::with_capacity(outputs.len());
        let mut merged = Vec::new();
        for out in outputs {
            levels.push(out.stats);
            merged.extend(out.keypoints.into_iter().filter(|k| k.descriptor.is_some()));
        }
        let keypoints = top_k(merged, self.cfg.n_max);
        let level0_cycles = levels[0].pixels
            + levels
                .iter()
                .map(|l| l.cycles - l.pixels)
                .max()
                .unwrap_or(0);
        Ok(FrameOutput {
            stats: PipelineStats {
                levels,
                retained: keypoints.len(),
                level0_cycles,
            },
            keypoints,
        })
    }
}

#[inline]
fn in_border(x: usize, y: usize, w: usize, h: usize) -> bool {
    x >= BORDER && y >= BORDER && x + BORDER < w && y + BORDER < h
}

/// Level-`l` coordinates scaled by `(6/5)^l` and rounded to nearest.
pub fn to_level0(x: usize, y: usize, level: u8) -> (u16, u16) {
    let num = 6u64.pow(level as u32);
    let den = 5u64.pow(level as u32);
    let scale = |v: usize| ((2 * v as u64 * num + den) / (2 * den)) as u16;
    (scale(x), scale(y))
}

pub fn run_level(img: &GrayImage, level: u8, cfg: &PipelineConfig) -> Result<LevelOutput> {
    Extractor::new(cfg.clone())?.run_level(img, level)
}

pub fn run_frame(img: &GrayImage, cfg: &PipelineConfig) -> Result<FrameOutput> {
    Extractor::new(cfg.clone())?.run_frame(img)
}

/// Keeps the `n_max` highest-score keypoints; ties prefer lower (level, y, x).
/// Output is in (level, y, x) order.
pub fn top_k(keypoints: Vec<Keypoint>, n_max: usize) -> Vec<Keypoint> {
    assert!(n_max >= 1, "n_max must be at least 1");
    type Rank = (u16, Reverse<(u8, u16, u16)>);
    let rank = |k: &Keypoint| -> Rank { (k.score, Reverse((k.level, k.y, k.x))) };
    // min-heap of the best n_max seen so far
    let mut heap: BinaryHeap<Reverse<(Rank, usize)>> = BinaryHeap::with_capacity(n_max.min(keypoints.len()) + 1);
    for (i, k) in keypoints.iter().enumerate() {
        heap.push(Reverse((rank(k), i)));
        if heap.len() > n_max {
            heap.pop();
        }
    }
    let mut keep: Vec<usize> = heap.into_iter().map(|Reverse((_, i))| i).collect();
    keep.sort_unstable_by_key(|&i| (keypoints[i].level, keypoints[i].y, keypoints[i].x));
    let mut slots: Vec<Option<Keypoint>> = keypoints.into_iter().map(Some).collect();
    keep.into_iter()
        .map(|i| slots[i].take().expect("unique index"))
        .collect()
}

pub const FEATURE_MAGIC: &[u8; 4] = b"ORBX";
pub const FEATURE_VERSION: u8 = 1;
const RECORD_LEN: usize = 2 + 2 + 1 + 1 + 2 + 2 + 2 + 32;

/// Little-endian feature dump: header `ORBX`, version, count, then fixed records.
pub fn write_features(mut w: impl Write, keypoints: &[Keypoint]) -> Result<()> {
    let mut buf = Vec::with_capacity(9 + keypoints.len() * RECORD_LEN);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.push(FEATURE_VERSION);
    buf.extend_from_slice(&(keypoints.len() as u32).to_le_bytes());
    for k in keypoints {
        let d = k.descriptor.ok_or_else(|| {
            Error::FeatureDump(format!("keypoint ({}, {}) level {} has no descriptor", k.x, k.y, k.level))
        })?;
        let sector = u8::try_from(k.sector)
            .map_err(|_| Error::FeatureDump(format!("sector {} does not fit in a byte", k.sector)))?;
        buf.extend_from_slice(&k.x.to_le_bytes());
        buf.extend_from_slice(&k.y.to_le_bytes());
        buf.push(k.level);
        buf.push(sector);
        buf.extend_from_slice(&k.score.to_le_bytes());
        buf.extend_from_slice(&k.x0.to_le_bytes());
        buf.extend_from_slice(&k.y0.to_le_bytes());
        buf.extend_from_slice(&d.0);
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_features(bytes: &[u8]) -> Result<Vec<Keypoint>> {
    if bytes.len() < 9 || &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::FeatureDump("missing ORBX header".into()));
    }
    if bytes[4] != FEATURE_VERSION {
        return Err(Error::FeatureDump(format!("unsupported version {}", bytes[4])));
    }
    let count = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let body = &bytes[9..];
    if body.len() != count * RECORD_LEN {
        return Err(Error::FeatureDump(format!(
            "expected {} record bytes for {count} keypoints, found {}",
            count * RECORD_LEN,
            body.len()
        )));
    }
    let u16_at = |r: &[u8], o: usize| u16::from_le_bytes([r[o], r[o + 1]]);
    Ok(body
        .chunks_exact(RECORD_LEN)
        .map(|r| {
            let mut d = [0u8; 32];
            d.copy_from_slice(&r[12..44]);
            Keypoint {
                x: u16_at(r, 0),
                y: u16_at(r, 2),
                level: r[4],
                sector: r[5] as u16,
                degenerate: false,
                score: u16_at(r, 6),
                x0: u16_at(r, 8),
                y0: u16_at(r, 10),
                descriptor: Some(Descriptor256(d)),
            }
        })
        .collect())
}

pub const STATS_HEADER: &str = "level,width,height,pixels,cycles,corners,keypoints,in_border,descriptors,dropped";

/// One row per level plus a `total` row.
pub fn write_stats_csv(mut w: impl Write, stats: &PipelineStats, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{STATS_HEADER}")?;
    let row = |label: String, s: &LevelStats| {
        format!(
            "{label},{},{},{},{},{},{},{},{},{}",
            s.width, s.height, s.pixels, s.cycles, s.corners, s.keypoints, s.in_border, s.descriptors, s.dropped
        )
    };
    for l in &stats.levels {
        writeln!(w, "{}", row(l.level.to_string(), l))?;
    }
    let t = stats.totals();
    writeln!(w, "{}", row("total".into(), &LevelStats { width: 0, height: 0, ..t }))?;
    Ok(())
}
