//! 5/6 integer bilinear downscaler and the 4-level image pyramid.
//!
//! A source pixel at `(x, y)` with `x mod 6 != 5` and `y mod 6 != 5` produces one
//! output pixel. Its position in source space is `x + x6/5`, so the four
//! neighbour weights are products of `(5 - x6, x6)` and `(5 - y6, y6)`.

use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const PYRAMID_LEVELS: usize = 4;

/// Smallest level-3 side that still holds a 37x37 window plus margin.
pub const MIN_LEVEL_SIDE: usize = 41;

/// Integer interpolation weights in 25ths; `wYX` names the `(x + X, y + Y)` neighbour.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BilinearWeights {
    pub w00: u8,
    pub w01: u8,
    pub w10: u8,
    pub w11: u8,
}

impl BilinearWeights {
    pub fn sum(&self) -> u32 {
        self.w00 as u32 + self.w01 as u32 + self.w10 as u32 + self.w11 as u32
    }
}

pub fn bilinear_weights(x6: u8, y6: u8) -> Result<BilinearWeights> {
    if x6 > 4 || y6 > 4 {
        return Err(Error::InvalidSamplePosition { x6, y6 });
    }
    Ok(BilinearWeights {
        w00: (5 - x6) * (5 - y6),
        w01: x6 * (5 - y6),
        w10: (5 - x6) * y6,
        w11: x6 * y6,
    })
}

/// Number of source coordinates in `0..len` that survive the mod-6 rule.
#[inline]
pub fn scaled_len(len: usize) -> usize {
    len - len / 6
}

pub fn downscale(img: &GrayImage) -> Result<GrayImage> {
    let (w, h) = (img.width(), img.height());
    if w < 7 || h < 7 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            reason: "downscaling needs at least 7x7",
        });
    }
    let (ow, oh) = (scaled_len(w), scaled_len(h));
    let mut out = Vec::with_capacity(ow * oh);
    for y in (0..h).filter(|y| y % 6 != 5) {
        let y1 = (y + 1).min(h - 1);
        let y6 = (y % 6) as u8;
        for x in (0..w).filter(|x| x % 6 != 5) {
            let x1 = (x + 1).min(w - 1);
            let wt = bilinear_weights((x % 6) as u8, y6)?;
            let acc = wt.w00 as u32 * img.get(x, y) as u32
                + wt.w01 as u32 * img.get(x1, y) as u32
                + wt.w10 as u32 * img.get(x, y1) as u32
                + wt.w11 as u32 * img.get(x1, y1) as u32;
            out.push(((acc + 12) / 25) as u8);
        }
    }
    GrayImage::new(ow, oh, out)
}

#[derive(Clone, Debug)]
pub struct Pyramid {
    levels: Vec<GrayImage>,
}

impl Pyramid {
    pub fn levels(&self) -> &[GrayImage] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> &GrayImage {
        &self.levels[l]
    }

    pub fn into_levels(self) -> Vec<GrayImage> {
        self.levels
    }
}

/// Dimensions of every pyramid level for a `width x height` input.
pub fn pyramid_dims(width: usize, height: usize) -> [(usize, usize); PYRAMID_LEVELS] {
    let mut dims = [(width, height); PYRAMID_LEVELS];
    for l in 1..PYRAMID_LEVELS {
        let (pw, ph) = dims[l - 1];
        dims[l] = (scaled_len(pw), scaled_len(ph));
    }
    dims
}

pub fn build_pyramid(img: &GrayImage) -> Result<Pyramid> {
    let (w3, h3) = pyramid_dims(img.width(), img.height())[PYRAMID_LEVELS - 1];
    if w3 < MIN_LEVEL_SIDE || h3 < MIN_LEVEL_SIDE {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            reason: "coarsest pyramid level would be smaller than 41x41",
        });
    }
    let mut levels = Vec::with_capacity(PYRAMID_LEVELS);
    levels.push(img.clone());
    for l in 1..PYRAMID_LEVELS {
        let next = downscale(&levels[l - 1])?;
        levels.push(next);
    }
    Ok(Pyramid { levels })
}
