//! Camera pose: pinhole projection, motion-only bundle adjustment (Gauss-Newton on
//! a left-multiplied SE(3) twist) and absolute trajectory error evaluation.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix2x6, Matrix3, Matrix6, Quaternion, SymmetricEigen, UnitQuaternion, Vector2, Vector3, Vector6};

use crate::error::{Error, Result};

pub const MIN_DEPTH: f64 = 1e-6;
const MAX_CONDITION: f64 = 1e12;
const STEP_TOLERANCE: f64 = 1e-8;
const MAX_HALVINGS: usize = 8;

/// Camera-from-world rigid transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if orth > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "rotation is not in SO(3): |R^T R - I| = {orth:e}, det = {det}"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.rotation)
    }

    #[inline]
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Closed-form exponential of a twist `(rho, phi)`: translation part first.
    pub fn exp(xi: &Vector6<f64>) -> PoseSE3 {
        let rho = Vector3::new(xi[0], xi[1], xi[2]);
        let phi = Vector3::new(xi[3], xi[4], xi[5]);
        let theta = phi.norm();
        let k = skew(&phi);
        let k2 = k * k;
        let (a, b, c) = if theta < 1e-8 {
            (1.0 - theta * theta / 6.0, 0.5 - theta * theta / 24.0, 1.0 / 6.0 - theta * theta / 120.0)
        } else {
            let t2 = theta * theta;
            (theta.sin() / theta, (1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
        };
        let rotation = Matrix3::identity() + k * a + k2 * b;
        let v = Matrix3::identity() + k * b + k2 * c;
        PoseSE3 {
            rotation,
            translation: v * rho,
        }
    }

    /// Rotation angle of `self^-1 * other`, radians.
    pub fn rotation_distance(&self, other: &PoseSE3) -> f64 {
        let r = self.rotation.transpose() * other.rotation;
        ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Pinhole defaults commonly used for 640x480 RGB-D sequences.
    pub fn vga_default() -> Self {
        Self {
            fx: 525.0,
            fy: 525.0,
            cx: 319.5,
            cy: 239.5,
        }
    }

    pub fn project_camera(&self, pc: &Vector3<f64>) -> Result<Vector2<f64>> {
        if pc.z <= MIN_DEPTH {
            return Err(Error::BehindCamera { depth: pc.z });
        }
        Ok(Vector2::new(
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
        ))
    }

    /// Camera-frame point at `depth` along the ray through `pixel`.
    pub fn unproject(&self, pixel: &Vector2<f64>, depth: f64) -> Vector3<f64> {
        Vector3::new(
            (pixel.x - self.cx) / self.fx * depth,
            (pixel.y - self.cy) / self.fy * depth,
            depth,
        )
    }
}

pub fn project(k: &Intrinsics, pose: &PoseSE3, x: &Vector3<f64>) -> Result<Vector2<f64>> {
    k.project_camera(&pose.transform(x))
}

/// Jacobian of the residual `observed - project(exp(xi) * pose, X)` with respect to
/// the twist `xi = (rho, phi)` at zero.
pub fn reprojection_jacobian(k: &Intrinsics, pose: &PoseSE3, x: &Vector3<f64>) -> Result<Matrix2x6<f64>> {
    let pc = pose.transform(x);
    if pc.z <= MIN_DEPTH {
        return Err(Error::BehindCamera { depth: pc.z });
    }
    let iz = 1.0 / pc.z;
    let iz2 = iz * iz;
    let dproj = nalgebra::Matrix2x3::new(
        k.fx * iz,
        0.0,
        -k.fx * pc.x * iz2,
        0.0,
        k.fy * iz,
        -k.fy * pc.y * iz2,
    );
    // d(exp(xi) pc)/dxi = [I | -[pc]x]
    let mut dpc = nalgebra::Matrix3x6::zeros();
    dpc.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    dpc.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&pc)));
    Ok(-(dproj * dpc))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub point: Vector3<f64>,
    pub pixel: Vector2<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaConfig {
    pub max_iterations: usize,
    pub huber_delta: Option<f64>,
}

impl Default for BaConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            huber_delta: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaResult {
    pub pose: PoseSE3,
    /// Reprojection RMSE in pixels over the usable observations.
    pub rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted iteration, starting with the initial value.
    pub cost_history: Vec<f64>,
}

fn huber_weight(norm: f64, delta: Option<f64>) -> f64 {
    match delta {
        Some(d) if norm > d => d / norm,
        _ => 1.0,
    }
}

fn huber_cost(sq: f64, delta: Option<f64>) -> f64 {
    match delta {
        Some(d) if sq.sqrt() > d => 2.0 * d * sq.sqrt() - d * d,
        _ => sq,
    }
}

/// Robust objective over the observations; points behind the camera are skipped.
pub fn ba_cost(obs: &[Observation], k: &Intrinsics, pose: &PoseSE3, huber_delta: Option<f64>) -> (f64, usize) {
    let mut cost = 0.0;
    let mut used = 0;
    for o in obs {
        if let Ok(p) = project(k, pose, &o.point) {
            cost += huber_cost((o.pixel - p).norm_squared(), huber_delta);
            used += 1;
        }
    }
    (cost, used)
}

/// Normal equations `(H, g)` with `H = J^T W J` and `g = J^T W r`.
fn normal_equations(
    obs: &[Observation],
    k: &Intrinsics,
    pose: &PoseSE3,
    huber_delta: Option<f64>,
) -> (Matrix6<f64>, Vector6<f64>, usize) {
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    let mut used = 0;
    for o in obs {
        let (Ok(p), Ok(j)) = (project(k, pose, &o.point), reprojection_jacobian(k, pose, &o.point)) else {
            continue;
        };
        let r = o.pixel - p;
        let w = huber_weight(r.norm(), huber_delta);
        h += j.transpose() * j * w;
        g += j.transpose() * r * w;
        used += 1;
    }
    (h, g, used)
}

fn condition_number(h: &Matrix6<f64>) -> f64 {
    let eig = SymmetricEigen::new(*h);
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Refines the camera pose against fixed 3-D points by minimizing reprojection error.
pub fn motion_ba(obs: &[Observation], k: &Intrinsics, init: &PoseSE3, cfg: BaConfig) -> Result<BaResult> {
    let usable = obs
        .iter()
        .filter(|o| init.transform(&o.point).z > MIN_DEPTH)
        .count();
    if usable < 3 {
        return Err(Error::Underdetermined { usable });
    }
    let mut pose = *init;
    let (mut cost, _) = ba_cost(obs, k, &pose, cfg.huber_delta);
    let mut history = vec![cost];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let (h, g, used) = normal_equations(obs, k, &pose, cfg.huber_delta);
        if used < 3 {
            return Err(Error::Underdetermined { usable: used });
        }
        let cond = condition_number(&h);
        if cond > MAX_CONDITION {
            return Err(Error::DegenerateGeometry(cond));
        }
        let Some(chol) = h.cholesky() else {
            return Err(Error::DegenerateGeometry(cond));
        };
        let step = -chol.solve(&g);
        if step.norm() < STEP_TOLERANCE {
            converged = true;
            break;
        }
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate = PoseSE3::exp(&(step * scale)).compose(&pose);
            let (c, used) = ba_cost(obs, k, &candidate, cfg.huber_delta);
            if used >= 3 && c <= cost {
                accepted = Some((candidate, c));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((p, c)) => {
                pose = p;
                cost = c;
                history.push(c);
                if (step * scale).norm() < STEP_TOLERANCE {
                    converged = true;
                    break;
                }
            }
            None => {
                // no descent along the step: already at a minimum to working precision
                converged = true;
                break;
            }
        }
    }
    let mut sq = 0.0;
    let mut n = 0usize;
    for o in obs {
        if let Ok(p) = project(k, &pose, &o.point) {
            sq += (o.pixel - p).norm_squared();
            n += 1;
        }
    }
    Ok(BaResult {
        pose,
        rmse: if n > 0 { (sq / n as f64).sqrt() } else { 0.0 },
        iterations,
        converged,
        cost_history: history,
    })
}

/// One stamped pose: camera position in the world frame and its orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryEntry {
    pub timestamp: f64,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl TrajectoryEntry {
    /// World-from-camera pose as stored in TUM files.
    pub fn world_from_camera(&self) -> PoseSE3 {
        PoseSE3::from_quaternion(&self.orientation, self.position)
    }

    pub fn from_camera_pose(timestamp: f64, camera_from_world: &PoseSE3) -> Self {
        let wc = camera_from_world.inverse();
        Self {
            timestamp,
            position: wc.translation,
            orientation: wc.quaternion(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    entries: Vec<TrajectoryEntry>,
}

impl Trajectory {
    pub fn new(entries: Vec<TrajectoryEntry>) -> Result<Self> {
        for (i, w) in entries.windows(2).enumerate() {
            if w[1].timestamp <= w[0].timestamp {
                return Err(Error::TrajectoryParse {
                    line: i + 2,
                    msg: format!(
                        "timestamps must increase strictly ({} after {})",
                        w[1].timestamp, w[0].timestamp
                    ),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[TrajectoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Applies `world' = T * world` to every pose.
    pub fn transformed(&self, t: &PoseSE3) -> Self {
        let rq = UnitQuaternion::from_matrix(&t.rotation);
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| TrajectoryEntry {
                    timestamp: e.timestamp,
                    position: t.transform(&e.position),
                    orientation: rq * e.orientation,
                })
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_tum(&std::fs::read_to_string(path)?)
    }

    /// Lines `timestamp tx ty tz qx qy qz qw`; `#` lines are comments.
    /// Quaternions are renormalized.
    pub fn parse_tum(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::TrajectoryParse { line: idx + 1, msg };
            let v: Vec<f64> = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(e.to_string()))?;
            if v.len() != 8 {
                return Err(bad(format!("expected 8 fields, found {}", v.len())));
            }
            let q = Quaternion::new(v[7], v[4], v[5], v[6]);
            if !(q.norm() > 1e-3) {
                return Err(bad("zero-norm quaternion".into()));
            }
            entries.push(TrajectoryEntry {
                timestamp: v[0],
                position: Vector3::new(v[1], v[2], v[3]),
                orientation: UnitQuaternion::from_quaternion(q),
            });
        }
        Self::new(entries)
    }

    pub fn to_tum(&self) -> String {
        let mut s = String::from("# timestamp tx ty tz qx qy qz qw\n");
        for e in &self.entries {
            let q = e.orientation.quaternion();
            let _ = writeln!(
                s,
                "{:.6} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
                e.timestamp, e.position.x, e.position.y, e.position.z, q.i, q.j, q.k, q.w
            );
        }
        s
    }

    /// Index of the entry nearest to `t`, if within `max_dt`.
    pub fn nearest(&self, t: f64, max_dt: f64) -> Option<usize> {
        let i = self.entries.partition_point(|e| e.timestamp < t);
        let cand = [i.checked_sub(1), (i < self.entries.len()).then_some(i)];
        cand.into_iter()
            .flatten()
            .map(|j| (j, (self.entries[j].timestamp - t).abs()))
            .filter(|&(_, dt)| dt <= max_dt)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(j, _)| j)
    }
}

pub const DEFAULT_MAX_DT: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AteStats {
    pub rmse: f64,
    pub mean: f64,
    pub median: f64,
    pub stddev: f64,
    pub pairs: usize,
}

/// Rigid transform `(R, t)` minimizing `sum |R a_i + t - b_i|^2` (orthogonal Procrustes).
pub fn rigid_align(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> PoseSE3 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ca = a.iter().sum::<Vector3<f64>>() / n;
    let cb = b.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for (pa, pb) in a.iter().zip(b) {
        cov += (pb - cb) * (pa - ca).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * vt;
    PoseSE3 {
        rotation: r,
        translation: cb - r * ca,
    }
}

/// Absolute trajectory error over timestamp-associated positions.
pub fn ate(est: &Trajectory, gt: &Trajectory, max_dt: f64, align: bool) -> Result<AteStats> {
    let (mut pe, mut pg) = (Vec::new(), Vec::new());
    for e in est.entries() {
        if let Some(j) = gt.nearest(e.timestamp, max_dt) {
            pe.push(e.position);
            pg.push(gt.entries()[j].position);
        }
    }
    if pe.is_empty() {
        return Err(Error::DisjointTrajectories);
    }
    if pe.len() < 2 {
        return Err(Error::InvalidArgument(
            "ATE needs at least 2 associated pairs".into(),
        ));
    }
    if align {
        let t = rigid_align(&pe, &pg);
        for p in pe.iter_mut() {
            *p = t.transform(p);
        }
    }
    let mut d: Vec<f64> = pe.iter().zip(&pg).map(|(a, b)| (a - b).norm()).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let rmse = (d.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let stddev = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    d.sort_by(f64::total_cmp);
    let median = if d.len() % 2 == 1 {
        d[d.len() / 2]
    } else {
        0.5 * (d[d.len() / 2 - 1] + d[d.len() / 2])
    };
    debug_assert!((rmse * rmse - (mean * mean + stddev * stddev)).abs() <= 1e-9 * (1.0 + rmse * rmse));
    Ok(AteStats {
        rmse,
        mean,
        median,
        stddev,
        pairs: d.len(),
    })
}
