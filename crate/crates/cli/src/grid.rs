//! Parameter grids and schedules.
//!
//! A grid is `key=values` groups separated by `;`, for example
//! `T=4,5;p=7..19:2;c=3..39:2`. Values are comma lists whose items are
//! numbers or inclusive ranges `a..b` with an optional `:step` (default 1).
//! A schedule is `p=16,4,4,6;c=5,3,3,3`, one entry per iteration; a single
//! `c` or `p` is repeated.

use polyargmax::CutMaxParams;
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub t: Vec<usize>,
    pub p: Vec<u32>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub t: usize,
    pub p: u32,
    pub c: f64,
}

impl Cell {
    pub fn params(&self) -> CutMaxParams {
        CutMaxParams::new(self.p, self.c, self.t)
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::BadSpec(msg.into())
}

fn number(key: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| bad(format!("{key}: not a number: {s:?}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(format!("{key}: not finite: {s:?}")))
    }
}

/// Expands one comma list of numbers and ranges.
fn values(key: &str, list: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once("..") {
            None => out.push(number(key, item)?),
            Some((a, rest)) => {
                let (b, step) = match rest.split_once(':') {
                    Some((b, s)) => (b, number(key, s)?),
                    None => (rest, 1.0),
                };
                let (a, b) = (number(key, a)?, number(key, b)?);
                if !(step > 0.0) {
                    return Err(bad(format!("{key}: step must be positive in {item:?}")));
                }
                let count = ((b - a) / step + 1e-9).floor();
                if count > 1e6 {
                    return Err(bad(format!("{key}: range {item:?} is too long")));
                }
                if count >= 0.0 {
                    out.extend((0..=count as usize).map(|k| a + k as f64 * step));
                }
            }
        }
    }
    if out.is_empty() {
        return Err(bad(format!("{key}: no values")));
    }
    Ok(out)
}

fn integers<T: TryFrom<u64>>(key: &str, v: Vec<f64>) -> Result<Vec<T>> {
    v.into_iter()
        .map(|x| {
            if x < 0.0 || x.fract() != 0.0 {
                return Err(bad(format!("{key}: {x} is not a non-negative integer")));
            }
            T::try_from(x as u64).map_err(|_| bad(format!("{key}: {x} out of range")))
        })
        .collect()
}

fn groups(spec: &str) -> Result<Vec<(&str, &str)>> {
    let mut out: Vec<(&str, &str)> = Vec::new();
    for group in spec.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = group
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=values, got {group:?}")))?;
        let k = k.trim();
        if out.iter().any(|(seen, _)| *seen == k) {
            return Err(bad(format!("{k} given twice")));
        }
        out.push((k, v));
    }
    Ok(out)
}

impl Grid {
    pub fn parse(spec: &str) -> Result<Self> {
        let (mut t, mut p, mut c) = (None, None, None);
        for (k, v) in groups(spec)? {
            match k {
                "T" | "t" => t = Some(integers::<usize>(k, values(k, v)?)?),
                "p" => p = Some(integers::<u32>(k, values(k, v)?)?),
                "c" => c = Some(values(k, v)?),
                other => return Err(bad(format!("unknown grid key {other:?}"))),
            }
        }
        let missing = |k: &str| bad(format!("grid needs {k}"));
        let grid = Self {
            t: t.ok_or_else(|| missing("T"))?,
            p: p.ok_or_else(|| missing("p"))?,
            c: c.ok_or_else(|| missing("c"))?,
        };
        if grid.t.contains(&0) || grid.p.contains(&0) || grid.c.iter().any(|c| *c <= 0.0) {
            return Err(bad("T, p and c must be positive"));
        }
        Ok(grid)
    }

    /// Cells sorted by `(T, p, c)`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut t = self.t.clone();
        let mut p = self.p.clone();
        let mut c = self.c.clone();
        t.sort_unstable();
        t.dedup();
        p.sort_unstable();
        p.dedup();
        c.sort_by(f64::total_cmp);
        c.dedup();
        let mut out = Vec::with_capacity(t.len() * p.len() * c.len());
        for &t in &t {
            for &p in &p {
                for &c in &c {
                    out.push(Cell { t, p, c });
                }
            }
        }
        out
    }

    /// The single cell of a one-point grid.
    pub fn single(&self) -> Result<Cell> {
        match self.cells().as_slice() {
            [cell] => Ok(*cell),
            cells => Err(bad(format!("this task takes one (T, p, c), the grid has {}", cells.len()))),
        }
    }
}

pub fn parse_schedule(spec: &str) -> Result<CutMaxParams> {
    let (mut p, mut c) = (None, None);
    for (k, v) in groups(spec)? {
        match k {
            "p" => p = Some(integers::<u32>(k, values(k, v)?)?),
            "c" => c = Some(values(k, v)?),
            other => return Err(bad(format!("unknown schedule key {other:?}"))),
        }
    }
    let (p, c) = (
        p.ok_or_else(|| bad("schedule needs p"))?,
        c.ok_or_else(|| bad("schedule needs c"))?,
    );
    let t = p.len().max(c.len());
    let stretch = |len: usize, what: &str| {
        if len == 1 || len == t {
            Ok(())
        } else {
            Err(bad(format!("{what} has {len} entries, expected 1 or {t}")))
        }
    };
    stretch(p.len(), "p")?;
    stretch(c.len(), "c")?;
    let p = if p.len() == 1 { vec![p[0]; t] } else { p };
    let c = if c.len() == 1 { vec![c[0]; t] } else { c };
    if p.contains(&0) || c.iter().any(|c| *c <= 0.0) {
        return Err(bad("p and c must be positive"));
    }
    Ok(CutMaxParams::schedule(p, c))
}
