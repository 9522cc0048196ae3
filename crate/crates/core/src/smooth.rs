//! 7x7 binomial smoothing applied to the quantized image before orientation and BRIEF.

use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const BINOMIAL7: [u32; 7] = [1, 6, 15, 20, 15, 6, 1];
pub const KERNEL_SHIFT: u32 = 12;
const ROUND: u32 = 1 << (KERNEL_SHIFT - 1);

/// Outer product of [`BINOMIAL7`] with itself; sums to 4096.
pub fn binomial_kernel7() -> [[u32; 7]; 7] {
    let mut k = [[0u32; 7]; 7];
    for (r, row) in k.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = BINOMIAL7[r] * BINOMIAL7[c];
        }
    }
    k
}

/// Full 2-D binomial convolution of one pixel with clamp-replicated borders.
#[inline]
pub(crate) fn smooth_pixel(fetch: impl Fn(isize, isize) -> u32, x: isize, y: isize) -> u32 {
    let mut acc = 0u32;
    for (r, &wy) in BINOMIAL7.iter().enumerate() {
        let yy = y + r as isize - 3;
        for (c, &wx) in BINOMIAL7.iter().enumerate() {
            acc += wy * wx * fetch(x + c as isize - 3, yy);
        }
    }
    (acc + ROUND) >> KERNEL_SHIFT
}

/// Binomial filter over an arbitrary-range plane; used for the impulse response.
pub fn binomial7_plane(width: usize, height: usize, plane: &[u32]) -> Vec<u32> {
    assert_eq!(plane.len(), width * height);
    let fetch = |x: isize, y: isize| {
        let cx = x.clamp(0, width as isize - 1) as usize;
        let cy = y.clamp(0, height as isize - 1) as usize;
        plane[cy * width + cx]
    };
    let mut out = Vec::with_capacity(plane.len());
    for y in 0..height as isize {
        for x in 0..width as isize {
            out.push(smooth_pixel(fetch, x, y));
        }
    }
    out
}

pub fn gaussian7(img: &GrayImage) -> Result<GrayImage> {
    let (w, h) = (img.width(), img.height());
    if w < 7 || h < 7 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            reason: "7x7 smoothing needs at least 7x7",
        });
    }
    // separable integer passes; no rounding until the end, so equal to the 2-D sum
    let px = img.data();
    let mut vert = vec![0u32; w * h];
    for y in 0..h {
        let out = &mut vert[y * w..(y + 1) * w];
        for (r, &wy) in BINOMIAL7.iter().enumerate() {
            let yy = (y as isize + r as isize - 3).clamp(0, h as isize - 1) as usize;
            for (o, &p) in out.iter_mut().zip(&px[yy * w..(yy + 1) * w]) {
                *o += wy * p as u32;
            }
        }
    }
    let mut data = Vec::with_capacity(w * h);
    for row in vert.chunks_exact(w) {
        for x in 0..w {
            let mut acc = 0u32;
            for (c, &wx) in BINOMIAL7.iter().enumerate() {
                let xx = (x as isize + c as isize - 3).clamp(0, w as isize - 1) as usize;
                acc += wx * row[xx];
            }
            data.push(((acc + ROUND) >> KERNEL_SHIFT) as u8);
        }
    }
    GrayImage::new(w, h, data)
}
