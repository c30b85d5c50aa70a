//! Rational oracles shared by the integration tests.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn max_of(v: Vec<BigRational>) -> BigRational {
    v.into_iter().reduce(|a, b| if b > a { b } else { a }).unwrap()
}

/// Exact rational evaluation of (eps0, excess, a, c, gamma_inf).
pub fn exact_chain(alpha: BigRational, d: i64) -> [BigRational; 5] {
    let one = BigRational::one();
    let two = q(2, 1);
    let e = {
        let cand = &two - &two * &alpha / (&one - &alpha);
        if cand < one { cand } else { one.clone() }
    };
    let m = {
        let cand = q(3, 1) - &one / &alpha;
        if cand > BigRational::zero() { cand } else { BigRational::zero() }
    };
    let a = max_of(vec![
        (&e + &two * &alpha) / ((&one - &alpha) * (&two * &e + &two)),
        (&two + &two * &e) / (q(3, 1) * &e + q(4, 1)),
        ((&two + &e) * (&one + &m) - &two) / (&two + &two * &e),
    ]);
    let c = max_of(vec![
        (&two + &e * &a + (&two + &e) * q(8 * d + 12, 1) - &two) / (&e * (&one - &a)),
        (&one - &two / (&two + &e) + &m) / (&one - &m),
    ]);
    let g = &c / (&c + &one) + &two / ((&c + &one) * (&two + &e));
    [e, m, a, c, g]
}

pub fn f(x: &BigRational) -> f64 {
    x.to_f64().unwrap()
}

/// `γ₁ = (2 + aε)/(2 + ε)` with `a` the largest of three rational branches.
pub fn exact_clt_gamma1(alpha: BigRational) -> BigRational {
    let one = BigRational::one();
    let two = q(2, 1);
    let e = {
        let cand = &two - &two * &alpha / (&one - &alpha);
        if cand < one { cand } else { one.clone() }
    };
    let m = {
        let cand = q(3, 1) - &one / &alpha;
        if cand > BigRational::zero() { cand } else { BigRational::zero() }
    };
    let r = &e / (&two + &e);
    let a = max_of(vec![
        (&e + (&two + &e) * &m) / (&two + &two * &e),
        &r / (&r + (&one - &two * &alpha) / (&one - &alpha)),
        (&two + &two * &e) / (q(4, 1) + q(5, 1) * &e),
    ]);
    (&two + &a * &e) / (&two + &e)
}
