//! Seeded synthetic logit generators.
//!
//! Specs are written `kind:key=value,...`, for example
//! `normal:mu=170,sigma=10,n=10000`, `peaked:gap=3,sigma=1,n=1024,count=100`
//! or `two-level:s=0.9,n=5`. `n` defaults to 1024 and `count` to 1.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cutmax::{two_level, LogitVector};
use crate::error::{Error, Result};

pub const DEFAULT_N: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Dist {
    /// i.i.d. `Normal(mu, sigma)`.
    Normal { mu: f64, sigma: f64 },
    /// `n - 1` tail entries from `Normal(0, sigma)` and one top entry exactly
    /// `gap` above the largest of them, at a random position.
    Peaked { gap: f64, sigma: f64 },
    /// Top entry `s` at a random position, the rest `(1 - s) / (n - 1)`.
    TwoLevel { s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub dist: Dist,
    pub n: usize,
    pub count: usize,
}

impl GenSpec {
    pub fn new(dist: Dist, n: usize, count: usize) -> Result<Self> {
        let spec = Self { dist, n, count };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadSpec(m));
        if self.n < 2 {
            return bad(format!("n must be >= 2, got {}", self.n));
        }
        if self.count == 0 {
            return bad("count must be >= 1".into());
        }
        match self.dist {
            Dist::Normal { mu, sigma } if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) => {
                bad(format!("normal needs finite mu and sigma > 0, got ({mu}, {sigma})"))
            }
            Dist::Peaked { gap, sigma } if !(gap.is_finite() && gap > 0.0 && sigma.is_finite() && sigma > 0.0) => {
                bad(format!("peaked needs gap > 0 and sigma > 0, got ({gap}, {sigma})"))
            }
            Dist::TwoLevel { s } if !(s > 0.0 && s < 1.0) => bad(format!("two-level needs 0 < s < 1, got {s}")),
            _ => Ok(()),
        }
    }
}

impl FromStr for GenSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
        let mut keys: Vec<(String, f64)> = Vec::new();
        for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::BadSpec(format!("expected key=value, got {item:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::BadSpec(format!("{k}: not a number: {v:?}")))?;
            keys.push((k.trim().to_string(), v));
        }
        let mut take = |name: &str| keys.iter().position(|(k, _)| k == name).map(|i| keys.remove(i).1);
        let count_of = |v: Option<f64>, name: &str, default: usize| -> Result<usize> {
            match v {
                None => Ok(default),
                Some(v) if v >= 0.0 && v.fract() == 0.0 => Ok(v as usize),
                Some(v) => Err(Error::BadSpec(format!("{name} must be a non-negative integer, got {v}"))),
            }
        };
        let n = count_of(take("n"), "n", DEFAULT_N)?;
        let count = count_of(take("count"), "count", 1)?;
        let mut need = |name: &str| take(name).ok_or_else(|| Error::BadSpec(format!("{kind} needs {name}")));
        let dist = match kind.trim() {
            "normal" => Dist::Normal {
                mu: need("mu")?,
                sigma: need("sigma")?,
            },
            "peaked" => Dist::Peaked {
                gap: need("gap")?,
                sigma: need("sigma")?,
            },
            "two-level" => Dist::TwoLevel { s: need("s")? },
            other => return Err(Error::BadSpec(format!("unknown generator {other:?}"))),
        };
        if let Some((k, _)) = keys.first() {
            return Err(Error::BadSpec(format!("unknown key {k:?}")));
        }
        Self::new(dist, n, count)
    }
}

impl fmt::Display for GenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dist {
            Dist::Normal { mu, sigma } => write!(f, "normal:mu={mu},sigma={sigma}")?,
            Dist::Peaked { gap, sigma } => write!(f, "peaked:gap={gap},sigma={sigma}")?,
            Dist::TwoLevel { s } => write!(f, "two-level:s={s}")?,
        }
        write!(f, ",n={},count={}", self.n, self.count)
    }
}

fn one<R: Rng>(dist: Dist, n: usize, rng: &mut R) -> Vec<f64> {
    match dist {
        Dist::Normal { mu, sigma } => {
            let d = Normal::new(mu, sigma).expect("validated");
            (0..n).map(|_| d.sample(rng)).collect()
        }
        Dist::Peaked { gap, sigma } => {
            let d = Normal::new(0.0, sigma).expect("validated");
            let mut v: Vec<f64> = (0..n - 1).map(|_| d.sample(rng)).collect();
            let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + gap;
            v.insert(rng.random_range(0..n), top);
            v
        }
        Dist::TwoLevel { s } => two_level(n, rng.random_range(0..n), s),
    }
}

/// `spec.count` vectors of length `spec.n`, identical for identical seeds.
pub fn synthesize(spec: &GenSpec, seed: u64) -> Result<Vec<LogitVector>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.count).map(|_| LogitVector::new(one(spec.dist, spec.n, &mut rng))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutmax::top_two_gap;

    #[test]
    fn parses_and_prints() {
        let s: GenSpec = "peaked:gap=3,sigma=1,n=64,count=5".parse().unwrap();
        assert_eq!(s, GenSpec::new(Dist::Peaked { gap: 3.0, sigma: 1.0 }, 64, 5).unwrap());
        assert_eq!(s.to_string().parse::<GenSpec>().unwrap(), s);
        let d: GenSpec = "two-level:s=0.5".parse().unwrap();
        assert_eq!((d.n, d.count), (DEFAULT_N, 1));
    }

    #[test]
    fn rejects_bad_specs() {
        for bad in [
            "cauchy:s=1",
            "normal:mu=0",
            "normal:mu=0,sigma=-1",
            "peaked:gap=3,sigma=1,n=1",
            "two-level:s=1.5",
            "two-level:s=0.5,extra=1",
            "two-level:s",
            "normal:mu=0,sigma=1,count=0",
            "normal:mu=0,sigma=1,n=2.5",
        ] {
            assert!(matches!(bad.parse::<GenSpec>(), Err(Error::BadSpec(_))), "{bad}");
        }
    }

    #[test]
    fn normal_mean_within_clt_bound() {
        let v = synthesize(&"normal:mu=170,sigma=10,n=10000".parse().unwrap(), 3).unwrap();
        let mean = v[0].values().iter().sum::<f64>() / 1e4;
        // Five standard errors of 10 / sqrt(1e4).
        assert!((mean - 170.0).abs() < 0.5, "{mean}");
    }

    #[test]
    fn two_level_values() {
        let v = synthesize(&"two-level:s=0.9,n=5".parse().unwrap(), 0).unwrap();
        let mut x = v[0].values().to_vec();
        x.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(x[0], 0.9);
        assert!(x[1..].iter().all(|r| (r - 0.025).abs() < 1e-15));
    }

    #[test]
    fn peaked_gap_holds() {
        for v in synthesize(&"peaked:gap=3,sigma=1,n=200,count=20".parse().unwrap(), 8).unwrap() {
            assert!(top_two_gap(v.values()) >= 3.0 - 1e-12);
        }
    }

    #[test]
    fn seeded() {
        let spec: GenSpec = "normal:mu=0,sigma=1,n=16,count=3".parse().unwrap();
        assert_eq!(synthesize(&spec, 4).unwrap(), synthesize(&spec, 4).unwrap());
        assert_ne!(synthesize(&spec, 4).unwrap(), synthesize(&spec, 5).unwrap());
    }
}
