//! A metered stand-in for a packed CKKS ciphertext.
//!
//! [`SlotVector`] holds `s` plaintext lanes but only exposes the operations an
//! encrypted vector supports: lane-wise add and multiply, plaintext-scalar
//! ops, and cyclic rotation. Every operation is charged to the [`CostLedger`]
//! of the owning [`HeContext`].
//!
//! The ledger keeps two depth views. The headline `mults`/`depth` count only
//! ciphertext-ciphertext products. The leveled view additionally charges a
//! multiplication and a level for every product with a non-integer plaintext,
//! which is what a rescaling scheme actually consumes. Integer scalars and
//! 0/1 masks are free in both views.

use std::cell::RefCell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NoiseModel {
    pub enabled: bool,
    pub eps_std: f64,
}

impl NoiseModel {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn gaussian(eps_std: f64) -> Result<Self> {
        if !(eps_std >= 0.0 && eps_std.is_finite()) {
            return Err(Error::InvalidParams(format!("noise std {eps_std} must be >= 0")));
        }
        Ok(Self {
            enabled: true,
            eps_std,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CostLedger {
    /// Ciphertext-ciphertext multiplications.
    pub mults: usize,
    /// Deepest chain of ciphertext-ciphertext multiplications.
    pub depth: usize,
    pub rotations: usize,
    /// Plaintext-scalar and plaintext-vector multiplications and additions.
    pub pt_ops: usize,
    /// Ciphertext additions and subtractions.
    pub adds: usize,
    /// `mults` plus products with non-integer plaintexts.
    pub leveled_mults: usize,
    /// Deepest chain in the leveled view.
    pub leveled_depth: usize,
    /// Sequential comparison stages recorded by comparison-based circuits.
    pub sign_stages: usize,
}

impl CostLedger {
    /// Counter-wise difference `self - earlier`.
    pub fn since(&self, earlier: &CostLedger) -> CostLedger {
        CostLedger {
            mults: self.mults - earlier.mults,
            depth: self.depth.saturating_sub(earlier.depth),
            rotations: self.rotations - earlier.rotations,
            pt_ops: self.pt_ops - earlier.pt_ops,
            adds: self.adds - earlier.adds,
            leveled_mults: self.leveled_mults - earlier.leveled_mults,
            leveled_depth: self.leveled_depth.saturating_sub(earlier.leveled_depth),
            sign_stages: self.sign_stages - earlier.sign_stages,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("ledger serializes")
    }
}

/// Owns the slot width, the noise model and the ledger shared by every
/// [`SlotVector`] created from it. Single-threaded by design.
#[derive(Debug)]
pub struct HeContext {
    slots: usize,
    noise: NoiseModel,
    ledger: RefCell<CostLedger>,
    rng: RefCell<ChaCha8Rng>,
}

impl HeContext {
    pub fn new(slots: usize) -> Result<Self> {
        Self::with_noise(slots, NoiseModel::off(), 0)
    }

    pub fn with_noise(slots: usize, noise: NoiseModel, seed: u64) -> Result<Self> {
        if !slots.is_power_of_two() {
            return Err(Error::InvalidParams(format!(
                "slot count {slots} must be a power of two"
            )));
        }
        if noise.enabled && !(noise.eps_std >= 0.0) {
            return Err(Error::InvalidParams("noise std must be >= 0".into()));
        }
        Ok(Self {
            slots,
            noise,
            ledger: RefCell::new(CostLedger::default()),
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
        })
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn log_slots(&self) -> usize {
        self.slots.trailing_zeros() as usize
    }

    pub fn ledger(&self) -> CostLedger {
        *self.ledger.borrow()
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    /// Records one sequential comparison stage.
    pub fn mark_sign_stage(&self) {
        self.ledger.borrow_mut().sign_stages += 1;
    }

    /// A fresh ciphertext at depth 0. `values` must fill every slot.
    pub fn encrypt(&self, values: &[f64]) -> Result<SlotVector<'_>> {
        if values.len() != self.slots {
            return Err(Error::WidthMismatch {
                left: values.len(),
                right: self.slots,
            });
        }
        Ok(SlotVector {
            ctx: self,
            slots: values.to_vec(),
            depth: 0,
            level: 0,
        })
    }

    /// Splits `values` into `ceil(n / s)` ciphertexts, padding the tail with
    /// `pad`.
    pub fn pack(&self, values: &[f64], pad: f64) -> Result<Packed<'_>> {
        if values.is_empty() {
            return Err(Error::InvalidInput("cannot pack an empty vector".into()));
        }
        let s = self.slots;
        let parts = values
            .chunks(s)
            .map(|chunk| {
                let mut lanes = chunk.to_vec();
                lanes.resize(s, pad);
                self.encrypt(&lanes)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Packed {
            parts,
            len: values.len(),
        })
    }

    /// Plaintext 0/1 mask marking the first `len` lanes of each part.
    pub fn valid_mask(&self, len: usize, parts: usize) -> Vec<Vec<f64>> {
        (0..parts)
            .map(|k| {
                (0..self.slots)
                    .map(|i| if k * self.slots + i < len { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    fn charge(&self, f: impl FnOnce(&mut CostLedger)) {
        f(&mut self.ledger.borrow_mut());
    }

    fn perturb(&self, lanes: &mut [f64]) {
        if !self.noise.enabled || self.noise.eps_std == 0.0 {
            return;
        }
        let normal = Normal::new(0.0, self.noise.eps_std).expect("validated std");
        let mut rng = self.rng.borrow_mut();
        for v in lanes {
            *v += normal.sample(&mut *rng);
        }
    }
}

fn is_integer(k: f64) -> bool {
    k.fract() == 0.0
}

/// A simulated ciphertext. Cloning is free and does not touch the ledger.
#[derive(Debug, Clone)]
pub struct SlotVector<'c> {
    ctx: &'c HeContext,
    slots: Vec<f64>,
    depth: usize,
    level: usize,
}

impl<'c> SlotVector<'c> {
    pub fn context(&self) -> &'c HeContext {
        self.ctx
    }

    /// Decrypts. Reading lanes is free.
    pub fn slots(&self) -> &[f64] {
        &self.slots
    }

    pub fn width(&self) -> usize {
        self.slots.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn level(&self) -> usize {
        self.level
    }

    fn check(&self, other: &SlotVector<'_>) -> Result<()> {
        if self.slots.len() != other.slots.len() {
            return Err(Error::WidthMismatch {
                left: self.slots.len(),
                right: other.slots.len(),
            });
        }
        if !std::ptr::eq(self.ctx, other.ctx) {
            return Err(Error::InvalidInput(
                "operands belong to different contexts".into(),
            ));
        }
        Ok(())
    }

    fn derive(&self, mut slots: Vec<f64>, depth: usize, level: usize) -> SlotVector<'c> {
        self.ctx.perturb(&mut slots);
        self.ctx.charge(|l| {
            l.depth = l.depth.max(depth);
            l.leveled_depth = l.leveled_depth.max(level);
        });
        SlotVector {
            ctx: self.ctx,
            slots,
            depth,
            level,
        }
    }

    fn zip(&self, other: &SlotVector<'_>, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.slots.iter().zip(&other.slots).map(|(&a, &b)| f(a, b)).collect()
    }

    pub fn add(&self, other: &SlotVector<'c>) -> Result<SlotVector<'c>> {
        self.check(other)?;
        self.ctx.charge(|l| l.adds += 1);
        Ok(self.derive(
            self.zip(other, |a, b| a + b),
            self.depth.max(other.depth),
            self.level.max(other.level),
        ))
    }

    pub fn sub(&self, other: &SlotVector<'c>) -> Result<SlotVector<'c>> {
        self.check(other)?;
        self.ctx.charge(|l| l.adds += 1);
        Ok(self.derive(
            self.zip(other, |a, b| a - b),
            self.depth.max(other.depth),
            self.level.max(other.level),
        ))
    }

    pub fn mul(&self, other: &SlotVector<'c>) -> Result<SlotVector<'c>> {
        self.check(other)?;
        self.ctx.charge(|l| {
            l.mults += 1;
            l.leveled_mults += 1;
        });
        Ok(self.derive(
            self.zip(other, |a, b| a * b),
            self.depth.max(other.depth) + 1,
            self.level.max(other.level) + 1,
        ))
    }

    pub fn square(&self) -> SlotVector<'c> {
        self.mul(self).expect("same operand")
    }

    /// Plaintext-scalar product. Free in the headline view; costs a level in
    /// the leveled view unless `k` is an integer.
    pub fn scalar_mul(&self, k: f64) -> SlotVector<'c> {
        let rescale = !is_integer(k);
        self.ctx.charge(|l| {
            l.pt_ops += 1;
            if rescale {
                l.leveled_mults += 1;
            }
        });
        let slots = self.slots.iter().map(|v| v * k).collect();
        self.derive(slots, self.depth, self.level + rescale as usize)
    }

    pub fn scalar_add(&self, k: f64) -> SlotVector<'c> {
        self.ctx.charge(|l| l.pt_ops += 1);
        let slots = self.slots.iter().map(|v| v + k).collect();
        self.derive(slots, self.depth, self.level)
    }

    /// Lane-wise product with a plaintext vector, e.g. a 0/1 mask.
    pub fn mul_plain(&self, plain: &[f64]) -> Result<SlotVector<'c>> {
        if plain.len() != self.slots.len() {
            return Err(Error::WidthMismatch {
                left: self.slots.len(),
                right: plain.len(),
            });
        }
        let rescale = !plain.iter().all(|&k| is_integer(k));
        self.ctx.charge(|l| {
            l.pt_ops += 1;
            if rescale {
                l.leveled_mults += 1;
            }
        });
        let slots = self.slots.iter().zip(plain).map(|(a, b)| a * b).collect();
        Ok(self.derive(slots, self.depth, self.level + rescale as usize))
    }

    pub fn add_plain(&self, plain: &[f64]) -> Result<SlotVector<'c>> {
        if plain.len() != self.slots.len() {
            return Err(Error::WidthMismatch {
                left: self.slots.len(),
                right: plain.len(),
            });
        }
        self.ctx.charge(|l| l.pt_ops += 1);
        let slots = self.slots.iter().zip(plain).map(|(a, b)| a + b).collect();
        Ok(self.derive(slots, self.depth, self.level))
    }

    /// Cyclic left rotation by `by` lanes. Rotation by 0 is free.
    pub fn rotate(&self, by: usize) -> Result<SlotVector<'c>> {
        let s = self.slots.len();
        if by >= s {
            return Err(Error::BadRotation { by, slots: s });
        }
        if by == 0 {
            return Ok(self.clone());
        }
        self.ctx.charge(|l| l.rotations += 1);
        let mut slots = self.slots.clone();
        slots.rotate_left(by);
        Ok(self.derive(slots, self.depth, self.level))
    }

    /// Every lane receives the sum of all lanes, using `log2 s` rotations and
    /// additions.
    pub fn rotate_and_sum(&self) -> SlotVector<'c> {
        let mut acc = self.clone();
        let mut step = 1;
        while step < self.slots.len() {
            let rotated = acc.rotate(step).expect("step < width");
            acc = acc.add(&rotated).expect("same context");
            step <<= 1;
        }
        acc
    }

    /// `self^p` by repeated squaring, combining partial powers shallowest
    /// first so the depth is `ceil(log2 p)`.
    pub fn pow(&self, p: u32) -> Result<SlotVector<'c>> {
        if p == 0 {
            return Err(Error::InvalidParams("power must be >= 1".into()));
        }
        Ok(Arith::pow(self, p))
    }
}

/// Operations shared by plaintext scalars and simulated ciphertexts, so an
/// approximation is written once and metered when run on slots.
pub trait Arith: Clone {
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn scale(&self, k: f64) -> Self;
    fn shift(&self, k: f64) -> Self;

    /// The plaintext value, or `None` for encrypted data whose range cannot be
    /// checked at run time.
    fn plain(&self) -> Option<f64>;

    fn square(&self) -> Self {
        self.mul(self)
    }

    /// `self^p` for `p >= 1`. Squarings produce `x^(2^i)` for every set bit;
    /// the selected powers are then multiplied pairwise, shallowest first.
    fn pow(&self, p: u32) -> Self {
        assert!(p >= 1, "power must be >= 1");
        let mut terms: Vec<(usize, Self)> = Vec::new();
        let mut base = self.clone();
        let mut bit = 0;
        loop {
            if p >> bit & 1 == 1 {
                terms.push((bit, base.clone()));
            }
            if p >> (bit + 1) == 0 {
                break;
            }
            base = base.square();
            bit += 1;
        }
        while terms.len() > 1 {
            terms.sort_by_key(|t| std::cmp::Reverse(t.0));
            let (da, a) = terms.pop().expect("len > 1");
            let (db, b) = terms.pop().expect("len > 1");
            terms.push((da.max(db) + 1, a.mul(&b)));
        }
        terms.pop().expect("p >= 1").1
    }
}

impl Arith for f64 {
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn scale(&self, k: f64) -> Self {
        self * k
    }
    fn shift(&self, k: f64) -> Self {
        self + k
    }
    fn plain(&self) -> Option<f64> {
        Some(*self)
    }
}

impl Arith for SlotVector<'_> {
    fn add(&self, other: &Self) -> Self {
        SlotVector::add(self, other).expect("operands share a context")
    }
    fn sub(&self, other: &Self) -> Self {
        SlotVector::sub(self, other).expect("operands share a context")
    }
    fn mul(&self, other: &Self) -> Self {
        SlotVector::mul(self, other).expect("operands share a context")
    }
    fn scale(&self, k: f64) -> Self {
        self.scalar_mul(k)
    }
    fn shift(&self, k: f64) -> Self {
        self.scalar_add(k)
    }
    fn plain(&self) -> Option<f64> {
        None
    }
}

/// Multiplications and depth of [`Arith::pow`] for exponent `p`.
pub fn pow_cost(p: u32) -> (usize, usize) {
    assert!(p >= 1, "power must be >= 1");
    let bits = 32 - p.leading_zeros() as usize;
    let mults = (bits - 1) + p.count_ones() as usize - 1;
    let depth = (p as f64).log2().ceil() as usize;
    (mults, depth)
}

/// A logical vector spread over several ciphertexts of one context.
#[derive(Debug, Clone)]
pub struct Packed<'c> {
    pub parts: Vec<SlotVector<'c>>,
    /// Logical length; lanes past it are padding.
    pub len: usize,
}

impl<'c> Packed<'c> {
    pub fn context(&self) -> &'c HeContext {
        self.parts[0].ctx
    }

    /// Decrypts and drops the padding lanes.
    pub fn decode(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.parts.iter().flat_map(|p| p.slots.iter().copied()).collect();
        out.truncate(self.len);
        out
    }

    pub fn depth(&self) -> usize {
        self.parts.iter().map(|p| p.depth).max().unwrap_or(0)
    }

    /// Sum of all lanes of all parts, broadcast to every lane. Parts are added
    /// lane-wise first, so only one rotate-and-sum is paid.
    pub fn total(&self) -> SlotVector<'c> {
        let mut acc = self.parts[0].clone();
        for part in &self.parts[1..] {
            acc = Arith::add(&acc, part);
        }
        acc.rotate_and_sum()
    }

    pub fn map(&self, f: impl Fn(&SlotVector<'c>) -> SlotVector<'c>) -> Packed<'c> {
        Packed {
            parts: self.parts.iter().map(f).collect(),
            len: self.len,
        }
    }

    pub fn map_indexed(&self, f: impl Fn(usize, &SlotVector<'c>) -> SlotVector<'c>) -> Packed<'c> {
        Packed {
            parts: self.parts.iter().enumerate().map(|(k, p)| f(k, p)).collect(),
            len: self.len,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mul_charges_one() {
        let ctx = HeContext::new(2).unwrap();
        let a = ctx.encrypt(&[1.0, 2.0]).unwrap();
        let b = ctx.encrypt(&[3.0, 4.0]).unwrap();
        let c = a.mul(&b).unwrap();
        assert_eq!(c.slots(), &[3.0, 8.0]);
        assert_eq!(ctx.ledger().mults, 1);
        assert_eq!(c.depth(), 1);
    }

    #[test]
    fn add_keeps_depth() {
        let ctx = HeContext::new(4).unwrap();
        let a = ctx.encrypt(&[1.0; 4]).unwrap();
        let deep = a.square().square();
        let sum = deep.add(&a).unwrap();
        assert_eq!(sum.depth(), 2);
        assert_eq!(ctx.ledger().adds, 1);
    }

    #[test]
    fn mul_chain_depth() {
        let ctx = HeContext::new(4).unwrap();
        let a = ctx.encrypt(&[1.1; 4]).unwrap();
        let mut x = a.clone();
        for _ in 0..5 {
            x = x.mul(&a).unwrap();
        }
        assert_eq!(x.depth(), 5);
        assert_eq!(ctx.ledger().depth, 5);
        assert_eq!(ctx.ledger().mults, 5);
    }

    #[test]
    fn scalar_ops_are_cheap() {
        let ctx = HeContext::new(4).unwrap();
        let a = ctx.encrypt(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = a.scalar_mul(0.5).scalar_add(1.0).scalar_mul(-2.0);
        assert_eq!(b.slots(), &[-3.0, -4.0, -5.0, -6.0]);
        let l = ctx.ledger();
        assert_eq!((l.mults, l.depth, l.pt_ops), (0, 0, 3));
        // Only the 0.5 product needs a rescale.
        assert_eq!((l.leveled_mults, l.leveled_depth), (1, 1));
    }

    #[test]
    fn rotation() {
        let ctx = HeContext::new(4).unwrap();
        let a = ctx.encrypt(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a.rotate(1).unwrap().slots(), &[2.0, 3.0, 4.0, 1.0]);
        assert_eq!(ctx.ledger().rotations, 1);
        assert_eq!(a.rotate(0).unwrap().slots(), a.slots());
        assert_eq!(ctx.ledger().rotations, 1);
        let twice = a.rotate(3).unwrap().rotate(2).unwrap();
        assert_eq!(twice.slots(), a.rotate(1).unwrap().slots());
        assert_eq!(a.rotate(4).unwrap_err(), Error::BadRotation { by: 4, slots: 4 });
    }

    #[test]
    fn rotate_and_sum_cases() {
        let ctx = HeContext::new(4).unwrap();
        let a = ctx.encrypt(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a.rotate_and_sum().slots(), &[10.0; 4]);
        assert_eq!(ctx.ledger().rotations, 2);
        assert_eq!(ctx.ledger().adds, 2);
        let zero = ctx.encrypt(&[0.0; 4]).unwrap();
        assert_eq!(zero.rotate_and_sum().slots(), &[0.0; 4]);
        let onehot = ctx.encrypt(&[0.0, 0.0, 2.5, 0.0]).unwrap();
        assert_eq!(onehot.rotate_and_sum().slots(), &[2.5; 4]);
    }

    #[test]
    fn pow_costs() {
        for (p, mults, depth) in [(1, 0, 0), (2, 1, 1), (3, 2, 2), (11, 5, 4), (16, 4, 4)] {
            let ctx = HeContext::new(2).unwrap();
            let a = ctx.encrypt(&[1.01, -0.7]).unwrap();
            let r = a.pow(p).unwrap();
            assert_eq!(ctx.ledger().mults, mults, "p={p}");
            assert_eq!(r.depth(), depth, "p={p}");
            assert_eq!(pow_cost(p), (mults, depth));
            assert!((r.slots()[0] - 1.01f64.powi(p as i32)).abs() < 1e-12);
            assert!((r.slots()[1] - (-0.7f64).powi(p as i32)).abs() < 1e-12);
        }
        let ctx = HeContext::new(2).unwrap();
        assert!(ctx.encrypt(&[1.0, 1.0]).unwrap().pow(0).is_err());
    }

    #[test]
    fn width_and_context_checks() {
        let ctx = HeContext::new(4).unwrap();
        let other = HeContext::new(2).unwrap();
        let a = ctx.encrypt(&[1.0; 4]).unwrap();
        let b = other.encrypt(&[1.0; 2]).unwrap();
        assert!(matches!(a.add(&b), Err(Error::WidthMismatch { .. })));
        assert!(ctx.encrypt(&[1.0; 3]).is_err());
        assert!(HeContext::new(6).is_err());
    }

    #[test]
    fn packing_and_total() {
        let ctx = HeContext::new(4).unwrap();
        let values: Vec<f64> = (1..=10).map(f64::from).collect();
        let packed = ctx.pack(&values, 0.0).unwrap();
        assert_eq!(packed.parts.len(), 3);
        assert_eq!(packed.decode(), values);
        assert_eq!(packed.total().slots(), &[55.0; 4]);
        assert_eq!(ctx.ledger().rotations, 2);
        let mask = ctx.valid_mask(10, 3);
        assert_eq!(mask[2], vec![1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn noise_is_seeded() {
        let run = || {
            let ctx = HeContext::with_noise(4, NoiseModel::gaussian(1e-3).unwrap(), 7).unwrap();
            let a = ctx.encrypt(&[1.0; 4]).unwrap();
            a.square().slots().to_vec()
        };
        let first = run();
        assert_eq!(first, run());
        assert!(first.iter().any(|v| *v != 1.0));
        assert!(first.iter().all(|v| (v - 1.0).abs() < 1e-2));
    }

    #[test]
    fn ledger_json_keys() {
        let json = CostLedger::default().to_json();
        for key in ["mults", "depth", "rotations", "ptOps"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
