//! Rigid-motion algebra: vectors, 3x3 matrices, transforms, pose-error
//! metrics and random pose sampling.

use crate::{real, Real};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Neg, Sub};

/// A 3-D point or vector in scene units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    pub fn zeros() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    pub fn dot(&self, other: &Vec3<T>) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &Vec3<T>) -> Vec3<T> {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn distance(&self, other: &Vec3<T>) -> T {
        (*self - *other).norm()
    }

    pub fn scale(&self, s: T) -> Vec3<T> {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    /// Returns the zero vector unchanged; anything else is normalized.
    pub fn normalized(&self) -> Vec3<T> {
        let n = self.norm();
        if n > T::zero() {
            self.scale(T::one() / n)
        } else {
            *self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Vec3<T>;
    fn add(self, rhs: Vec3<T>) -> Vec3<T> {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Vec3<T>;
    fn sub(self, rhs: Vec3<T>) -> Vec3<T> {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Vec3<T>;
    fn neg(self) -> Vec3<T> {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub fn from_rows(r0: [T; 3], r1: [T; 3], r2: [T; 3]) -> Self {
        Mat3 { m: [r0, r1, r2] }
    }

    pub fn identity() -> Self {
        let o = T::one();
        let z = T::zero();
        Mat3::from_rows([o, z, z], [z, o, z], [z, z, o])
    }

    pub fn zeros() -> Self {
        Mat3 {
            m: [[T::zero(); 3]; 3],
        }
    }

    pub fn diagonal(d0: T, d1: T, d2: T) -> Self {
        let z = T::zero();
        Mat3::from_rows([d0, z, z], [z, d1, z], [z, z, d2])
    }

    /// Outer product `a * b^T`.
    pub fn outer(a: &Vec3<T>, b: &Vec3<T>) -> Self {
        let av = a.as_array();
        let bv = b.as_array();
        let mut m = [[T::zero(); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = av[i] * bv[j];
            }
        }
        Mat3 { m }
    }

    pub fn transpose(&self) -> Mat3<T> {
        let mut t = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                t.m[j][i] = self.m[i][j];
            }
        }
        t
    }

    pub fn mul(&self, rhs: &Mat3<T>) -> Mat3<T> {
        let mut out = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = T::zero();
                for (k, rhs_row) in rhs.m.iter().enumerate() {
                    acc += self.m[i][k] * rhs_row[j];
                }
                out.m[i][j] = acc;
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let a = v.as_array();
        Vec3::new(
            self.m[0][0] * a[0] + self.m[0][1] * a[1] + self.m[0][2] * a[2],
            self.m[1][0] * a[0] + self.m[1][1] * a[1] + self.m[1][2] * a[2],
            self.m[2][0] * a[0] + self.m[2][1] * a[1] + self.m[2][2] * a[2],
        )
    }

    pub fn add(&self, rhs: &Mat3<T>) -> Mat3<T> {
        let mut out = *self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] += rhs.m[i][j];
            }
        }
        out
    }

    pub fn sub(&self, rhs: &Mat3<T>) -> Mat3<T> {
        let mut out = *self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] -= rhs.m[i][j];
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Mat3<T> {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for cell in row.iter_mut() {
                *cell *= s;
            }
        }
        out
    }

    pub fn det(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn frobenius_norm(&self) -> T {
        let mut acc = T::zero();
        for row in &self.m {
            for &v in row {
                acc += v * v;
            }
        }
        acc.sqrt()
    }

    pub fn column(&self, j: usize) -> Vec3<T> {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn set_column(&mut self, j: usize, v: &Vec3<T>) {
        self.m[0][j] = v.x;
        self.m[1][j] = v.y;
        self.m[2][j] = v.z;
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    /// Rodrigues rotation about a unit `axis` by `angle` radians.
    pub fn rotation_axis_angle(axis: &Vec3<T>, angle: T) -> Mat3<T> {
        let a = axis.normalized();
        let (s, c) = (angle.sin(), angle.cos());
        let one_c = T::one() - c;
        let (x, y, z) = (a.x, a.y, a.z);
        Mat3::from_rows(
            [
                c + x * x * one_c,
                x * y * one_c - z * s,
                x * z * one_c + y * s,
            ],
            [
                y * x * one_c + z * s,
                c + y * y * one_c,
                y * z * one_c - x * s,
            ],
            [
                z * x * one_c - y * s,
                z * y * one_c + x * s,
                c + z * z * one_c,
            ],
        )
    }

    /// Frobenius distance from a proper rotation: `max(|R^T R - I|_F, |det - 1|)`.
    pub fn rotation_defect(&self) -> T {
        let gram_defect = self
            .transpose()
            .mul(self)
            .sub(&Mat3::identity())
            .frobenius_norm();
        let det_defect = (self.det() - T::one()).abs();
        gram_defect.max(det_defect)
    }
}

/// A rigid motion `p -> R p + t` with `R` in SO(3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> RigidTransform<T> {
    pub fn new(rotation: Mat3<T>, translation: Vec3<T>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        RigidTransform::new(Mat3::identity(), Vec3::zeros())
    }

    pub fn apply(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p) + self.translation
    }

    /// `compose(a, b)` applies `b` first, then `a`.
    pub fn compose(&self, inner: &RigidTransform<T>) -> RigidTransform<T> {
        RigidTransform::new(
            self.rotation.mul(&inner.rotation),
            self.rotation.mul_vec(&inner.translation) + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform<T> {
        let rt = self.rotation.transpose();
        RigidTransform::new(rt, -rt.mul_vec(&self.translation))
    }

    /// True when the rotation block is orthonormal with determinant +1
    /// within `tol` (Frobenius / absolute).
    pub fn is_valid(&self, tol: T) -> bool {
        self.rotation.is_finite()
            && self.translation.is_finite()
            && self.rotation.rotation_defect() <= tol
    }
}

/// Rotation/translation error of an estimate against a reference pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError<T> {
    /// Rotation error in radians, in `[0, pi]`.
    pub re: T,
    /// Translation error in scene units.
    pub te: T,
}

impl<T: Real> PoseError<T> {
    pub fn re_degrees(&self) -> T {
        self.re * real::<T>(180.0 / std::f64::consts::PI)
    }
}

/// Angle of the relative rotation `r_est^T r_gt`, in `[0, pi]`.
///
/// Definitionally this is `arccos(clamp((trace - 1)/2))`, but that expression
/// cannot resolve angles below ~1.5e-8 in f64 (`acos(1 - ulp)` jumps there),
/// so the angle is evaluated as `atan2(sin, cos)` with the sine taken from
/// the skew part, which is algebraically identical for rotations and fully accurate
/// near zero. The cosine argument is still clamped to `[-1, 1]`.
pub fn rotation_error<T: Real>(r_est: &Mat3<T>, r_gt: &Mat3<T>) -> T {
    let rel = r_est.transpose().mul(r_gt);
    let cos = ((rel.trace() - T::one()) / real::<T>(2.0))
        .min(T::one())
        .max(-T::one());
    let half = real::<T>(2.0);
    let ax = (rel.m[2][1] - rel.m[1][2]) / half;
    let ay = (rel.m[0][2] - rel.m[2][0]) / half;
    let az = (rel.m[1][0] - rel.m[0][1]) / half;
    let sin = (ax * ax + ay * ay + az * az).sqrt();
    sin.atan2(cos)
}

pub fn translation_error<T: Real>(t_est: &Vec3<T>, t_gt: &Vec3<T>) -> T {
    (*t_est - *t_gt).norm()
}

pub fn pose_error<T: Real>(est: &RigidTransform<T>, gt: &RigidTransform<T>) -> PoseError<T> {
    PoseError {
        re: rotation_error(&est.rotation, &gt.rotation),
        te: translation_error(&est.translation, &gt.translation),
    }
}

/// Uniform direction on the unit sphere.
pub fn random_unit_vector<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Vec3<T> {
    let z = 2.0 * rng.random::<f64>() - 1.0;
    let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(
        real::<T>(r * phi.cos()),
        real::<T>(r * phi.sin()),
        real::<T>(z),
    )
}

/// Rotation about a uniformly random axis by a uniform angle in `[0, 2pi)`.
pub fn random_rotation<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Mat3<T> {
    let axis = random_unit_vector::<T, R>(rng);
    let angle = real::<T>(2.0 * std::f64::consts::PI * rng.random::<f64>());
    Mat3::rotation_axis_angle(&axis, angle)
}

/// Random rotation plus a translation uniform in `[-range, range]^3`.
pub fn random_transform<T: Real, R: Rng + ?Sized>(rng: &mut R, range: T) -> RigidTransform<T> {
    let rotation = random_rotation::<T, R>(rng);
    let mut coords = [T::zero(); 3];
    for c in coords.iter_mut() {
        *c = real::<T>(2.0 * rng.random::<f64>() - 1.0) * range;
    }
    RigidTransform::new(rotation, Vec3::new(coords[0], coords[1], coords[2]))
}
