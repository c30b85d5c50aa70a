//! Polynomially growing block partition of the time axis.
//!
//! Block `n` has length `⌊n^c⌋`. Inside it sit `c_n = ⌊n^{c(1−a)}⌋`
//! sub-blocks of length `⌊n^{ca}⌋` followed by a remainder sub-block. With
//! the exponents coming out of the parameter chain (`c` in the hundreds)
//! these numbers overflow every machine type, so all lengths are big
//! integers and the floors are computed to enough bits to be exact.

use dashu::float::FBig;
use dashu::integer::{IBig, UBig};

use crate::error::{param, Result};

/// Extra working bits beyond the size of the result.
const GUARD_BITS: usize = 128;

/// `⌊n^x⌋` for `n ≥ 1`, `x ≥ 0`, exact.
pub fn floor_pow(n: u64, x: f64) -> UBig {
    assert!(n >= 1 && x >= 0.0 && x.is_finite());
    if n == 1 || x == 0.0 {
        return UBig::ONE;
    }
    if x.fract() == 0.0 && x <= u32::MAX as f64 {
        return UBig::from(n).pow(x as usize);
    }
    let approx = (n as f64).powf(x);
    if approx < 1e6 && (approx - approx.round()).abs() > 1e-6 {
        return UBig::from(approx.floor() as u64);
    }
    floor_pow_exact(n, &exact(x, 64))
}

/// `⌊n^x⌋` with `x` given as a binary float (so `x = c·a` can be formed
/// without rounding).
fn floor_pow_exact(n: u64, x: &FBig) -> UBig {
    let bits = x.to_f64().value() * (n as f64).log2();
    let prec = bits.max(0.0).ceil() as usize + GUARD_BITS;
    let x = x.clone().with_precision(prec).value();
    let ln = FBig::from(n).with_precision(prec).value().ln();
    let v = (x * ln).exp();
    let nearest = v.round();
    let gap = if v >= nearest { &v - &nearest } else { &nearest - &v };
    let eps: FBig = FBig::from_parts(IBig::ONE, -64);
    let f = if gap < eps { nearest } else { v.floor() };
    UBig::try_from(f.to_int().value()).expect("n^x is positive")
}

fn exact(x: f64, extra: usize) -> FBig {
    FBig::try_from(x).expect("finite").with_precision(53 + extra).value()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub n: u64,
    /// First time index (times start at 1).
    pub start: UBig,
    pub len: UBig,
    /// `⌊n^{ca}⌋`.
    pub sub_len: UBig,
    /// `c_n = ⌊n^{c(1−a)}⌋`.
    pub sub_count: UBig,
    /// Length of sub-block `c_n + 1`.
    pub remainder: UBig,
}

impl Block {
    /// `a_n`, the last index of the block.
    pub fn end(&self) -> UBig {
        &self.start + &self.len - UBig::ONE
    }

    /// `(start, len)` of sub-block `i ∈ [1, c_n + 1]`.
    pub fn subblock(&self, i: &UBig) -> Option<(UBig, UBig)> {
        if *i == UBig::ZERO || *i > &self.sub_count + UBig::ONE {
            return None;
        }
        let start = &self.start + (i - UBig::ONE) * &self.sub_len;
        let len = if *i == &self.sub_count + UBig::ONE { self.remainder.clone() } else { self.sub_len.clone() };
        Some((start, len))
    }
}

#[derive(Clone, Debug)]
pub struct BlockPlan {
    pub c: f64,
    pub a: f64,
    pub blocks: Vec<Block>,
}

/// Blocks `1..=horizon` for exponents `c > 1`, `a ∈ (1/2, 1)`.
pub fn block_plan(c: f64, a: f64, horizon: u64) -> Result<BlockPlan> {
    if !(c > 1.0 && c.is_finite()) {
        return Err(param(format!("block exponent c must exceed 1, got {c}")));
    }
    if !(a > 0.5 && a < 1.0) {
        return Err(param(format!("sub-block exponent a must lie in (1/2, 1), got {a}")));
    }
    // c·a and c − c·a are exact in 106 bits, so the two sub-exponents add up to c.
    let cx = exact(c, 64);
    let ca = &cx * exact(a, 64);
    let cb = &cx - &ca;
    let ca_f = ca.to_f64().value();
    let cb_f = cb.to_f64().value();
    let mut blocks = Vec::with_capacity(horizon as usize);
    let mut next = UBig::ONE;
    for n in 1..=horizon {
        let len = floor_pow(n, c);
        let sub_len = floor_pow_checked(n, &ca, ca_f);
        let sub_count = floor_pow_checked(n, &cb, cb_f);
        let used = &sub_len * &sub_count;
        let remainder = &len - &used;
        let start = next.clone();
        next = &next + &len;
        blocks.push(Block { n, start, len, sub_len, sub_count, remainder });
    }
    Ok(BlockPlan { c, a, blocks })
}

fn floor_pow_checked(n: u64, x: &FBig, xf: f64) -> UBig {
    if n == 1 {
        return UBig::ONE;
    }
    let approx = (n as f64).powf(xf);
    if approx < 1e6 && (approx - approx.round()).abs() > 1e-6 {
        return UBig::from(approx.floor() as u64);
    }
    floor_pow_exact(n, x)
}

impl BlockPlan {
    pub fn horizon(&self) -> u64 {
        self.blocks.len() as u64
    }

    /// Check every partition law exactly; returns the first violation.
    pub fn verify(&self) -> std::result::Result<(), String> {
        let mut expected = UBig::ONE;
        for b in &self.blocks {
            if b.start != expected {
                return Err(format!("block {} starts at {} instead of {}", b.n, b.start, expected));
            }
            if b.len == UBig::ZERO {
                return Err(format!("block {} is empty", b.n));
            }
            if &b.sub_len * &b.sub_count + &b.remainder != b.len {
                return Err(format!("sub-blocks of block {} do not cover it", b.n));
            }
            if b.remainder > UBig::from(2u8) * &b.sub_len {
                return Err(format!("remainder of block {} exceeds twice the sub-block length", b.n));
            }
            let last = b.subblock(&(&b.sub_count + UBig::ONE)).expect("remainder exists");
            if &last.0 + &last.1 != &b.start + &b.len {
                return Err(format!("last sub-block of block {} does not end with the block", b.n));
            }
            expected = &b.start + &b.len;
        }
        Ok(())
    }

    /// CSV `n,start,len,subblock_index,sub_start,sub_len`. At most
    /// `max_subblocks` regular sub-blocks are listed per block; the
    /// remainder sub-block is always listed.
    pub fn to_csv(&self, max_subblocks: u64) -> String {
        let mut out = String::from("n,start,len,subblock_index,sub_start,sub_len\n");
        for b in &self.blocks {
            let shown = if b.sub_count > UBig::from(max_subblocks) { UBig::from(max_subblocks) } else { b.sub_count.clone() };
            let mut i = UBig::ONE;
            while i <= shown {
                let (s, l) = b.subblock(&i).expect("in range");
                out.push_str(&format!("{},{},{},{},{},{}\n", b.n, b.start, b.len, i, s, l));
                i += UBig::ONE;
            }
            let last = &b.sub_count + UBig::ONE;
            let (s, l) = b.subblock(&last).expect("in range");
            out.push_str(&format!("{},{},{},{},{},{}\n", b.n, b.start, b.len, last, s, l));
        }
        out
    }
}
