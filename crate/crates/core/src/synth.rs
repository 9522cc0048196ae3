//! Procedural test imagery: checkerboards, 1/f-like textured frames and a
//! two-plane scene rendered from a known camera path with exact depth.

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::Rng;

use crate::image::GrayImage;
use crate::pose::{Intrinsics, PoseSE3};

pub fn checkerboard(width: usize, height: usize, cell: usize, dark: u8, light: u8) -> GrayImage {
    assert!(cell > 0, "cell size must be positive");
    GrayImage::from_fn(width, height, |x, y| {
        if (x / cell + y / cell) % 2 == 0 {
            dark
        } else {
            light
        }
    })
}

#[inline]
fn hash2(seed: u64, x: i64, y: i64) -> f64 {
    let mut h = seed ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    h = h.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[inline]
fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Lattice value noise in `[0, 1)` with cell size 1.
fn value_noise(seed: u64, u: f64, v: f64) -> f64 {
    let (fu, fv) = (u.floor(), v.floor());
    let (iu, iv) = (fu as i64, fv as i64);
    let (tu, tv) = (smoothstep(u - fu), smoothstep(v - fv));
    let a = hash2(seed, iu, iv);
    let b = hash2(seed, iu + 1, iv);
    let c = hash2(seed, iu, iv + 1);
    let d = hash2(seed, iu + 1, iv + 1);
    let top = a + (b - a) * tu;
    let bot = c + (d - c) * tu;
    top + (bot - top) * tv
}

/// Continuous texture on the plane: octaves of value noise with amplitude
/// proportional to wavelength (a 1/f spectrum), contrast-stretched to `[0, 255]`.
#[derive(Clone, Copy, Debug)]
pub struct Texture {
    pub seed: u64,
    /// Wavelength of the coarsest octave, in texture units.
    pub scale: f64,
    pub octaves: u32,
}

impl Texture {
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let mut sum = 0.0;
        let mut norm = 0.0;
        let mut wavelength = self.scale;
        for o in 0..self.octaves {
            let amp = wavelength;
            sum += amp * value_noise(self.seed.wrapping_add(o as u64 * 7919), u / wavelength, v / wavelength);
            norm += amp;
            wavelength *= 0.5;
        }
        let n = sum / norm;
        // value noise clusters near 0.5; stretch for a usable dynamic range
        (255.0 * (0.5 + 2.2 * (n - 0.5))).clamp(0.0, 255.0)
    }
}

/// A textured frame with 1/f-like statistics plus a few hard-edged shapes, standing
/// in for natural imagery.
pub fn textured_scene(rng: &mut impl Rng, width: usize, height: usize) -> GrayImage {
    let tex = Texture {
        seed: rng.random(),
        scale: rng.random_range(24.0..64.0),
        octaves: 5,
    };
    let mut pix: Vec<f64> = (0..width * height)
        .map(|i| tex.sample((i % width) as f64, (i / width) as f64))
        .collect();
    let shapes = rng.random_range(6..14);
    for _ in 0..shapes {
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let rx = rng.random_range(6.0..width as f64 / 6.0);
        let ry = rng.random_range(6.0..height as f64 / 6.0);
        let value = rng.random_range(0.0..255.0);
        let disk = rng.random_bool(0.5);
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                let inside = if disk { dx * dx + dy * dy <= 1.0 } else { dx.abs() <= 1.0 && dy.abs() <= 1.0 };
                if inside {
                    let p = &mut pix[y * width + x];
                    *p = 0.35 * *p + 0.65 * value;
                }
            }
        }
    }
    GrayImage::from_fn(width, height, |x, y| pix[y * width + x].round() as u8)
}

/// Plane `n . X = d` in world coordinates with a texture parameterized by two
/// in-plane axes.
#[derive(Clone, Copy, Debug)]
pub struct TexturedPlane {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub axis_u: Vector3<f64>,
    pub axis_v: Vector3<f64>,
    pub texture: Texture,
    /// Texture units per meter.
    pub density: f64,
}

#[derive(Clone, Debug)]
pub struct PlaneScene {
    pub planes: Vec<TexturedPlane>,
}

/// Rendered intensity and metric depth (camera z) per pixel; depth 0 means no hit.
#[derive(Clone, Debug)]
pub struct RenderedFrame {
    pub image: GrayImage,
    pub depth: Vec<f64>,
}

impl RenderedFrame {
    pub fn depth_at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.image.width() + x]
    }
}

impl PlaneScene {
    /// A fronto-parallel wall 2 m ahead and a floor 0.6 m below the origin (y down).
    pub fn wall_and_floor(seed: u64) -> Self {
        let tex = |s| Texture {
            seed: s,
            scale: 48.0,
            octaves: 4,
        };
        Self {
            planes: vec![
                TexturedPlane {
                    normal: Vector3::z(),
                    offset: 2.0,
                    axis_u: Vector3::x(),
                    axis_v: Vector3::y(),
                    texture: tex(seed),
                    density: 400.0,
                },
                TexturedPlane {
                    normal: Vector3::y(),
                    offset: 0.6,
                    axis_u: Vector3::x(),
                    axis_v: Vector3::z(),
                    texture: tex(seed ^ 0x5A5A),
                    density: 400.0,
                },
            ],
        }
    }

    /// First plane hit along the ray through `pixel`: world point and camera depth.
    pub fn intersect(
        &self,
        k: &Intrinsics,
        camera_from_world: &PoseSE3,
        pixel: Vector2<f64>,
    ) -> Option<(usize, Vector3<f64>, f64)> {
        let world_from_camera = camera_from_world.inverse();
        let origin = world_from_camera.translation;
        let dir_cam = Vector3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0);
        let dir = world_from_camera.rotation * dir_cam;
        let mut best: Option<(usize, Vector3<f64>, f64)> = None;
        for (i, p) in self.planes.iter().enumerate() {
            let denom = p.normal.dot(&dir);
            if denom.abs() < 1e-12 {
                continue;
            }
            // with dir_cam.z == 1 the ray parameter equals camera depth
            let t = (p.offset - p.normal.dot(&origin)) / denom;
            if t > 1e-6 && best.is_none_or(|(_, _, bt)| t < bt) {
                best = Some((i, origin + dir * t, t));
            }
        }
        best
    }

    pub fn render(&self, k: &Intrinsics, camera_from_world: &PoseSE3, width: usize, height: usize) -> RenderedFrame {
        let mut depth = vec![0.0; width * height];
        let image = GrayImage::from_fn(width, height, |x, y| {
            match self.intersect(k, camera_from_world, Vector2::new(x as f64, y as f64)) {
                Some((i, xw, t)) => {
                    depth[y * width + x] = t;
                    let p = &self.planes[i];
                    let (u, v) = (p.axis_u.dot(&xw) * p.density, p.axis_v.dot(&xw) * p.density);
                    p.texture.sample(u, v).round() as u8
                }
                None => 0,
            }
        });
        RenderedFrame { image, depth }
    }
}

/// Smooth camera path starting at the origin: translation drifting right and
/// forward with a slow yaw and roll. Returns camera-from-world poses.
pub fn camera_path(frames: usize) -> Vec<PoseSE3> {
    (0..frames)
        .map(|i| {
            let s = i as f64;
            let center = Vector3::new(0.01 * s, -0.002 * s, 0.008 * s);
            let rot = UnitQuaternion::from_euler_angles(0.0015 * s, 0.003 * s, 0.001 * s);
            let world_from_camera = PoseSE3::from_quaternion(&rot, center);
            world_from_camera.inverse()
        })
        .collect()
}

/// Depth in TUM convention: 16-bit, 5000 units per meter, 0 for invalid.
pub const DEPTH_SCALE: f64 = 5000.0;

pub fn encode_depth(depth: &[f64]) -> Vec<u16> {
    depth
        .iter()
        .map(|&d| (d * DEPTH_SCALE).round().clamp(0.0, u16::MAX as f64) as u16)
        .collect()
}
