use std::fmt;

use serde::{Deserialize, Serialize};

/// Closed interval `[lo, hi]` with outward-agnostic (round-to-nearest)
/// endpoint arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    /// Smallest interval holding every value of `values`.
    pub fn hull(values: &[f64]) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(lo, hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn magnitude(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    /// Strictly inside the open interval `(lo, hi)`.
    pub fn is_inside_open(&self, lo: f64, hi: f64) -> bool {
        lo < self.lo && self.hi < hi
    }

    pub fn add(&self, o: &Interval) -> Interval {
        Interval::new(self.lo + o.lo, self.hi + o.hi)
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        Interval::new(self.lo - o.hi, self.hi - o.lo)
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        Interval::hull(&c)
    }

    pub fn scale(&self, k: f64) -> Interval {
        if k >= 0.0 {
            Interval::new(self.lo * k, self.hi * k)
        } else {
            Interval::new(self.hi * k, self.lo * k)
        }
    }

    pub fn shift(&self, k: f64) -> Interval {
        Interval::new(self.lo + k, self.hi + k)
    }

    /// Image under `v -> v^2`.
    pub fn square(&self) -> Interval {
        self.pow(2)
    }

    /// Image under `v -> v^p`.
    pub fn pow(&self, p: u32) -> Interval {
        let (a, b) = (self.lo.powi(p as i32), self.hi.powi(p as i32));
        if p % 2 == 1 || self.lo >= 0.0 {
            Interval::new(a, b)
        } else if self.hi <= 0.0 {
            Interval::new(b, a)
        } else {
            Interval::new(0.0, a.max(b))
        }
    }

    /// Image under `v -> sqrt(v)`; the interval must be non-negative.
    pub fn sqrt(&self) -> Interval {
        Interval::new(self.lo.max(0.0).sqrt(), self.hi.sqrt())
    }

    /// Image under `v -> 1/v`; the interval must be strictly positive.
    pub fn recip(&self) -> Interval {
        Interval::new(1.0 / self.hi, 1.0 / self.lo)
    }

    pub fn intersect(&self, o: &Interval) -> Option<Interval> {
        let lo = self.lo.max(o.lo);
        let hi = self.hi.min(o.hi);
        (lo <= hi).then(|| Interval::new(lo, hi))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_rules() {
        let a = Interval::new(-1.0, 2.0);
        let b = Interval::new(3.0, 4.0);
        assert_eq!(a.add(&b), Interval::new(2.0, 6.0));
        assert_eq!(a.sub(&b), Interval::new(-5.0, -1.0));
        assert_eq!(a.mul(&b), Interval::new(-4.0, 8.0));
        assert_eq!(a.scale(-2.0), Interval::new(-4.0, 2.0));
        assert_eq!(a.square(), Interval::new(0.0, 4.0));
        assert_eq!(a.pow(3), Interval::new(-1.0, 8.0));
        assert_eq!(Interval::new(-3.0, -2.0).pow(2), Interval::new(4.0, 9.0));
        assert_eq!(b.recip(), Interval::new(0.25, 1.0 / 3.0));
        assert!(a.intersect(&b).is_none());
    }
}
