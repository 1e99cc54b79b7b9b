//! Nuclear-spin rotations in half-angle form.
//!
//! A rotation by `theta` about the unit axis `n` is stored as
//! `(w, v) = (cos(theta/2), sin(theta/2) n)`, i.e. as an element of SU(2).
//! Rotations by `theta` and `theta + 2pi` therefore differ by an overall
//! sign, which is physically meaningful for the electron coherence.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * o.z - self.z * o.y,
            y: self.z * o.x - self.x * o.z,
            z: self.x * o.y - self.y * o.x,
        }
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3 {
            x: self.x * s,
            y: self.y * s,
            z: self.z * s,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Element of SU(2) acting on a nuclear spin-1/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    /// `cos(theta/2)`
    pub w: f64,
    /// `sin(theta/2) * axis`
    pub v: Vec3,
}

impl Default for Rotation {
    fn default() -> Self {
        Rotation::IDENTITY
    }
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation { w: 1.0, v: Vec3::ZERO };

    /// Rotation by `angle` (rad) about `axis`. The axis is normalized; a zero
    /// axis yields the identity.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Rotation::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        Rotation {
            w: c,
            v: axis.scale(s / n),
        }
    }

    /// Applies `first`, then `second`.
    ///
    /// The scalar part is `cos(t2/2)cos(t1/2) - sin(t2/2)sin(t1/2) n2.n1` and the
    /// vector part `cos(t2/2)v1 + cos(t1/2)v2 + v2 x v1`.
    pub fn compose(second: Rotation, first: Rotation) -> Rotation {
        Rotation {
            w: second.w * first.w - second.v.dot(first.v),
            v: first.v.scale(second.w) + second.v.scale(first.w) + second.v.cross(first.v),
        }
    }

    /// `self` applied after `first`.
    pub fn after(self, first: Rotation) -> Rotation {
        Rotation::compose(self, first)
    }

    pub fn inverse(self) -> Rotation {
        Rotation { w: self.w, v: -self.v }
    }

    /// `self` applied `n` times, by repeated squaring.
    pub fn powi(self, n: u32) -> Rotation {
        let mut acc = Rotation::IDENTITY;
        let mut base = self;
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc = Rotation::compose(base, acc);
            }
            base = Rotation::compose(base, base);
            k >>= 1;
        }
        acc
    }

    /// Rotation angle in `[0, 2pi]`.
    pub fn angle(self) -> f64 {
        2.0 * self.v.norm().atan2(self.w)
    }

    /// Unit rotation axis; `+z` when the rotation is trivial.
    pub fn axis(self) -> Vec3 {
        let s = self.v.norm();
        if s == 0.0 {
            Vec3::Z
        } else {
            self.v.scale(1.0 / s)
        }
    }

    pub fn norm_sqr(self) -> f64 {
        self.w * self.w + self.v.dot(self.v)
    }

    /// Rescales onto the unit sphere.
    pub fn normalized(self) -> Rotation {
        let n = self.norm_sqr().sqrt();
        Rotation {
            w: self.w / n,
            v: self.v.scale(1.0 / n),
        }
    }

    /// Angle as a fraction of pi, handy for reporting.
    pub fn angle_over_pi(self) -> f64 {
        self.angle() / PI
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    /// Operator product: `a * b` applies `b` first.
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation::compose(self, rhs)
    }
}
