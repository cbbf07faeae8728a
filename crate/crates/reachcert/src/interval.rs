//! Closed f64 intervals with outward-sloppy arithmetic.
//!
//! Endpoints are computed in plain f64 and transcendental results are inflated
//! by [`TRANSCENDENTAL_SLACK`]; verification margins in this crate are many
//! orders of magnitude above f64 round-off, which is what makes that
//! acceptable. Invariants: `lo <= hi`, both finite.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

/// Absolute inflation applied to each endpoint of `sin`/`cos` images to cover
/// argument-reduction and libm round-off.
pub const TRANSCENDENTAL_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo.is_finite() && hi.is_finite(), "interval endpoints must be finite");
        assert!(lo <= hi, "interval endpoints out of order: [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval::new(v, v)
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn width(self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Largest absolute value attained on the interval.
    pub fn mag(self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn contains(self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn hull(self, other: Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn abs(self) -> Interval {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            Interval::new(-self.hi, -self.lo)
        } else {
            Interval::new(0.0, self.mag())
        }
    }

    /// Integer power with the even-power tightening `x^2 >= 0`.
    pub fn powi(self, n: u32) -> Interval {
        match n {
            0 => Interval::point(1.0),
            1 => self,
            _ => {
                let a = self.lo.powi(n as i32);
                let b = self.hi.powi(n as i32);
                if n % 2 == 0 && self.contains(0.0) {
                    Interval::new(0.0, a.max(b))
                } else {
                    Interval::new(a.min(b), a.max(b))
                }
            }
        }
    }

    /// Image under cosine. Width `>= 2*pi` collapses to `[-1, 1]`; otherwise
    /// endpoint values plus interior extrema at multiples of `pi`.
    pub fn cos(self) -> Interval {
        let w = self.width();
        if w >= 2.0 * PI {
            return Interval::new(-1.0, 1.0);
        }
        let a = self.lo.rem_euclid(2.0 * PI);
        let b = a + w;
        let ca = a.cos();
        let cb = b.cos();
        let mut lo = ca.min(cb);
        let mut hi = ca.max(cb);
        // cos attains -1 at odd multiples of pi, +1 at even multiples.
        if (a <= PI && PI <= b) || 3.0 * PI <= b {
            lo = -1.0;
        }
        if a == 0.0 || 2.0 * PI <= b {
            hi = 1.0;
        }
        Interval::new(
            (lo - TRANSCENDENTAL_SLACK).max(-1.0 - TRANSCENDENTAL_SLACK),
            (hi + TRANSCENDENTAL_SLACK).min(1.0 + TRANSCENDENTAL_SLACK),
        )
    }

    pub fn sin(self) -> Interval {
        // sin(t) = cos(t - pi/2)
        (self - Interval::point(PI / 2.0)).cos()
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval::new(self.lo + rhs.lo, self.hi + rhs.hi)
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval::new(self.lo - rhs.hi, self.hi - rhs.lo)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        let c = [
            self.lo * rhs.lo,
            self.lo * rhs.hi,
            self.hi * rhs.lo,
            self.hi * rhs.hi,
        ];
        let mut lo = c[0];
        let mut hi = c[0];
        for &v in &c[1..] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Interval::new(lo, hi)
    }
}

impl Mul<f64> for Interval {
    type Output = Interval;
    fn mul(self, k: f64) -> Interval {
        if k >= 0.0 {
            Interval::new(self.lo * k, self.hi * k)
        } else {
            Interval::new(self.hi * k, self.lo * k)
        }
    }
}
