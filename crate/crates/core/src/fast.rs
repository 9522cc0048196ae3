//! FAST-9/16 corner test on the radius-3 Bresenham ring, SAD scoring and 3x3 NMS.
//!
//! The contiguity decision follows the bitmask formulation: the ring comparison
//! produces a bright and a dark 16-bit vector, and a pixel is a corner when either
//! vector covers one of the sixteen cyclic 9-bit arc masks.

use crate::image::GrayImage;

pub const RING_LEN: usize = 16;
pub const ARC_LEN: usize = 9;
/// Pixels closer than this to the border are never classified.
pub const RING_RADIUS: usize = 3;
pub const DEFAULT_THRESHOLD: u8 = 20;

/// Ring offsets `(dx, dy)`, clockwise from the top with `y` pointing down.
pub const RING_OFFSETS: [(i32, i32); RING_LEN] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

pub fn ring_offsets() -> [(i32, i32); RING_LEN] {
    RING_OFFSETS
}

/// The sixteen 9-bit cyclic arc masks; mask `i` covers ring indices `i..i+9 (mod 16)`.
pub const ARC_MASKS: [u16; RING_LEN] = arc_masks();

const fn arc_masks() -> [u16; RING_LEN] {
    let mut masks = [0u16; RING_LEN];
    let mut i = 0;
    while i < RING_LEN {
        let mut m = 0u16;
        let mut k = 0;
        while k < ARC_LEN {
            m |= 1 << ((i + k) % RING_LEN);
            k += 1;
        }
        masks[i] = m;
        i += 1;
    }
    masks
}

/// True when `bits` covers any cyclic run of nine set ring positions.
#[inline]
pub fn has_arc(bits: u16) -> bool {
    ARC_MASKS.iter().any(|&m| bits & m == m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RingSample {
    pub center: u8,
    pub ring: [u8; RING_LEN],
}

impl RingSample {
    /// Samples the ring around `(x, y)`; the caller keeps the ring inside the image.
    pub fn from_image(img: &GrayImage, x: usize, y: usize) -> Self {
        let mut ring = [0u8; RING_LEN];
        for (r, &(dx, dy)) in ring.iter_mut().zip(RING_OFFSETS.iter()) {
            *r = img.get((x as i32 + dx) as usize, (y as i32 + dy) as usize);
        }
        Self {
            center: img.get(x, y),
            ring,
        }
    }

    /// Bright and dark comparison vectors; bit `i` refers to ring index `i`.
    pub fn masks(&self, threshold: u8) -> (u16, u16) {
        let c = self.center as i16;
        let t = threshold as i16;
        let mut bright = 0u16;
        let mut dark = 0u16;
        for (i, &p) in self.ring.iter().enumerate() {
            let p = p as i16;
            if p > c + t {
                bright |= 1 << i;
            } else if p < c - t {
                dark |= 1 << i;
            }
        }
        (bright, dark)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CornerResult {
    pub is_corner: bool,
    /// Sum of absolute ring differences, 0 for non-corners. At most 16 * 255.
    pub score: u16,
}

pub fn classify(sample: &RingSample, threshold: u8) -> CornerResult {
    debug_assert!(threshold >= 1);
    let (bright, dark) = sample.masks(threshold);
    if !(has_arc(bright) || has_arc(dark)) {
        return CornerResult::default();
    }
    let score = sample
        .ring
        .iter()
        .map(|&p| (p as i16 - sample.center as i16).unsigned_abs())
        .sum();
    CornerResult {
        is_corner: true,
        score,
    }
}

/// Score at `(x, y)`, 0 within the ring radius of the border.
#[inline]
pub fn score_at(img: &GrayImage, x: usize, y: usize, threshold: u8) -> u16 {
    let r = RING_RADIUS;
    if x < r || y < r || x + r >= img.width() || y + r >= img.height() {
        return 0;
    }
    classify(&RingSample::from_image(img, x, y), threshold).score
}

/// Dense corner-score map over the whole image, row-major.
pub fn score_map(img: &GrayImage, threshold: u8) -> Vec<u16> {
    let (w, h) = (img.width(), img.height());
    let mut scores = vec![0u16; w * h];
    for y in 0..h {
        for x in 0..w {
            scores[y * w + x] = score_at(img, x, y, threshold);
        }
    }
    scores
}

/// 3x3 suppression: strictly greater than the four raster-earlier neighbours and
/// greater than or equal to the four raster-later ones. `scores[r][c]` with the
/// center at `[1][1]`.
pub fn nms3x3(scores: &[[u16; 3]; 3]) -> bool {
    let c = scores[1][1];
    if c == 0 {
        return false;
    }
    let before = [scores[0][0], scores[0][1], scores[0][2], scores[1][0]];
    let after = [scores[1][2], scores[2][0], scores[2][1], scores[2][2]];
    before.iter().all(|&n| c > n) && after.iter().all(|&n| c >= n)
}

/// 3x3 window of a dense score map around `(x, y)`; out-of-image entries are 0.
pub fn score_window(scores: &[u16], width: usize, height: usize, x: usize, y: usize) -> [[u16; 3]; 3] {
    let mut win = [[0u16; 3]; 3];
    for (r, row) in win.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let (xx, yy) = (x as isize + c as isize - 1, y as isize + r as isize - 1);
            if xx >= 0 && yy >= 0 && (xx as usize) < width && (yy as usize) < height {
                *v = scores[yy as usize * width + xx as usize];
            }
        }
    }
    win
}
