//! Rational-integer helpers: primality, factoring, integer roots, modular square roots.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'outer: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// Primality of an arbitrary integer. Exact below 2^64, Miller-Rabin with
/// 40 fixed bases above.
pub fn is_prime(n: &BigInt) -> bool {
    if n.is_negative() {
        return false;
    }
    if let Some(v) = n.to_u64() {
        return is_prime_u64(v);
    }
    let one = BigInt::one();
    let nm1 = n - &one;
    let mut d = nm1.clone();
    let mut s = 0u32;
    while d.is_even() {
        d >>= 1;
        s += 1;
    }
    let small = primes_up_to(200);
    'outer: for &a in small.iter().take(40) {
        let mut x = BigInt::from(a).modpow(&d, n);
        if x.is_one() || x == nm1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == nm1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

pub fn primes_up_to(n: u64) -> Vec<u64> {
    if n < 2 {
        return Vec::new();
    }
    let n = n as usize;
    let mut sieve = vec![true; n + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= n {
        if sieve[i] {
            let mut j = i * i;
            while j <= n {
                sieve[j] = false;
                j += i;
            }
        }
        i += 1;
    }
    (0..=n).filter(|&k| sieve[k]).map(|k| k as u64).collect()
}

fn gcd_u64(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn pollard_brent(n: u64) -> u64 {
    if n % 2 == 0 {
        return 2;
    }
    let mut c = 1u64;
    loop {
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let (mut x, mut y, mut g) = (2u64, 2u64, 1u64);
        let mut q = 1u64;
        let mut r = 1u64;
        let mut ys = 0;
        while g == 1 {
            x = y;
            for _ in 0..r {
                y = f(y);
            }
            let mut k = 0;
            while k < r && g == 1 {
                ys = y;
                for _ in 0..std::cmp::min(128, r - k) {
                    y = f(y);
                    q = mul_mod(q, x.abs_diff(y), n);
                }
                g = gcd_u64(q, n);
                k += 128;
            }
            r *= 2;
        }
        if g == n {
            g = 1;
            while g == 1 {
                ys = f(ys);
                g = gcd_u64(x.abs_diff(ys), n);
            }
        }
        if g != n {
            return g;
        }
        c += 1;
    }
}

/// Prime factorization of a positive 64-bit integer, sorted by prime.
pub fn factor_u64(n: u64) -> Vec<(u64, u32)> {
    let mut out: Vec<(u64, u32)> = Vec::new();
    if n <= 1 {
        return out;
    }
    let mut m = n;
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47] {
        let mut e = 0;
        while m % p == 0 {
            m /= p;
            e += 1;
        }
        if e > 0 {
            out.push((p, e));
        }
    }
    let mut stack = vec![m];
    let mut primes = Vec::new();
    while let Some(k) = stack.pop() {
        if k == 1 {
            continue;
        }
        if is_prime_u64(k) {
            primes.push(k);
            continue;
        }
        let f = pollard_brent(k);
        stack.push(f);
        stack.push(k / f);
    }
    primes.sort_unstable();
    for p in primes {
        match out.last_mut() {
            Some((q, e)) if *q == p => *e += 1,
            _ => out.push((p, 1)),
        }
    }
    out.sort_unstable();
    out
}

/// Pollard–Brent on an odd composite beyond 64 bits.
fn pollard_brent_big(n: &BigInt) -> BigInt {
    let mut c = BigInt::one();
    loop {
        let f = |x: &BigInt| (x * x + &c) % n;
        let (mut x, mut y, mut g) = (BigInt::from(2), BigInt::from(2), BigInt::one());
        let mut q = BigInt::one();
        let mut ys = BigInt::zero();
        let mut r = 1u64;
        while g.is_one() {
            x = y.clone();
            for _ in 0..r {
                y = f(&y);
            }
            let mut k = 0;
            while k < r && g.is_one() {
                ys = y.clone();
                for _ in 0..std::cmp::min(128, r - k) {
                    y = f(&y);
                    q = (&q * (&x - &y).abs()) % n;
                }
                g = q.gcd(n);
                k += 128;
            }
            r *= 2;
        }
        if &g == n {
            g = BigInt::one();
            while g.is_one() {
                ys = f(&ys);
                g = (&x - &ys).abs().gcd(n);
            }
        }
        if &g != n {
            return g;
        }
        c += 1;
    }
}

/// Factorization of |n| for n ≠ 0. Every prime factor must fit in 64 bits.
pub fn factor(n: &BigInt) -> Result<Vec<(u64, u32)>> {
    let a = n.abs();
    if let Some(v) = a.to_u64() {
        return Ok(factor_u64(v));
    }
    let mut primes: Vec<u64> = Vec::new();
    let mut stack = vec![a];
    while let Some(m) = stack.pop() {
        if let Some(v) = m.to_u64() {
            for (p, e) in factor_u64(v) {
                primes.extend(std::iter::repeat(p).take(e as usize));
            }
        } else if m.is_even() {
            primes.push(2);
            stack.push(m >> 1);
        } else if is_prime(&m) {
            return Err(Error::Overflow(format!("prime factor {m} of {n} exceeds 64 bits")));
        } else {
            let f = pollard_brent_big(&m);
            stack.push(&m / &f);
            stack.push(f);
        }
    }
    primes.sort_unstable();
    let mut out: Vec<(u64, u32)> = Vec::new();
    for p in primes {
        match out.last_mut() {
            Some((q, e)) if *q == p => *e += 1,
            _ => out.push((p, 1)),
        }
    }
    Ok(out)
}

/// floor(sqrt(n)) for n ≥ 0.
pub fn isqrt(n: &BigInt) -> BigInt {
    iroot(n, 1 << 1)
}

/// floor(n^(1/k)) for n ≥ 0, k ≥ 1, by binary search.
pub fn iroot(n: &BigInt, k: u32) -> BigInt {
    assert!(!n.is_negative() && k >= 1);
    if k == 1 || n.is_zero() {
        return n.clone();
    }
    let bits = n.bits();
    let mut lo = BigInt::zero();
    let mut hi = BigInt::one() << ((bits / k as u64) + 1);
    while lo < hi {
        let mid: BigInt = (&lo + &hi + 1) >> 1;
        if num_traits::pow(mid.clone(), k as usize) <= *n {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

pub fn is_square(n: &BigInt) -> bool {
    if n.is_negative() {
        return false;
    }
    let r = isqrt(n);
    &r * &r == *n
}

/// Square root of a modulo an odd prime p (Tonelli-Shanks), if one exists.
pub fn sqrt_mod_prime(a: u64, p: u64) -> Option<u64> {
    let a = a % p;
    if p == 2 || a == 0 {
        return Some(a);
    }
    if pow_mod(a, (p - 1) / 2, p) != 1 {
        return None;
    }
    let mut q = p - 1;
    let mut s = 0;
    while q % 2 == 0 {
        q /= 2;
        s += 1;
    }
    let mut z = 2;
    while pow_mod(z, (p - 1) / 2, p) != p - 1 {
        z += 1;
    }
    let mut m = s;
    let mut c = pow_mod(z, q, p);
    let mut t = pow_mod(a, q, p);
    let mut r = pow_mod(a, (q + 1) / 2, p);
    while t != 1 {
        let mut i = 0;
        let mut tt = t;
        while tt != 1 {
            tt = mul_mod(tt, tt, p);
            i += 1;
        }
        let b = pow_mod(c, 1 << (m - i - 1), p);
        m = i;
        c = mul_mod(b, b, p);
        t = mul_mod(t, c, p);
        r = mul_mod(r, b, p);
    }
    Some(r)
}

/// Kronecker symbol (D / n) for n ≥ 1.
pub fn kronecker(d: i64, n: u64) -> i32 {
    let mut result = 1i32;
    let mut n = n;
    let a = d;
    if n == 0 {
        return if a.abs() == 1 { 1 } else { 0 };
    }
    while n % 2 == 0 {
        n /= 2;
        let r = a.rem_euclid(8);
        if r == 0 || r == 2 || r == 4 || r == 6 {
            return 0;
        }
        if r == 3 || r == 5 {
            result = -result;
        }
    }
    // Jacobi (a / n), n odd
    let mut a = a.rem_euclid(n as i64) as u64;
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            let r = n % 8;
            if r == 3 || r == 5 {
                result = -result;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            result = -result;
        }
        a %= n;
    }
    if n == 1 {
        result
    } else {
        0
    }
}

/// Squarefree test for |n| ≥ 1.
pub fn is_squarefree(n: u64) -> bool {
    factor_u64(n).iter().all(|&(_, e)| e == 1)
}

/// Smallest prime strictly greater than n.
pub fn next_prime(n: u64) -> u64 {
    let mut k = n + 1;
    while !is_prime_u64(k) {
        k += 1;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primality_small() {
        let ps: Vec<u64> = (0..100).filter(|&n| is_prime_u64(n)).collect();
        assert_eq!(ps, primes_up_to(99));
        assert!(is_prime_u64(18446744073709551557));
        assert!(!is_prime_u64(3215031751));
    }

    #[test]
    fn factor_round_trip() {
        for n in [1u64, 2, 12, 97, 1445, 36125, 600851475143, 999999000001 * 7] {
            let f = factor_u64(n);
            let prod: u64 = f.iter().map(|&(p, e)| p.pow(e)).product();
            assert_eq!(prod, n);
            assert!(f.iter().all(|&(p, _)| is_prime_u64(p)));
        }
    }

    #[test]
    fn factor_beyond_64_bits() {
        let n = BigInt::parse_bytes(b"4762069133132406246772961", 10).unwrap();
        let f = factor(&n).unwrap();
        let prod: BigInt = f.iter().map(|&(p, e)| BigInt::from(p).pow(e)).product();
        assert_eq!(prod, n);
        assert!(f.iter().all(|&(p, _)| is_prime_u64(p)));
        let big = BigInt::from(18446744073709551557u64) * BigInt::from(1_000_000_007u64);
        assert_eq!(factor(&big).unwrap(), vec![(1_000_000_007, 1), (18446744073709551557, 1)]);
        let too_big = BigInt::from(18446744073709551557u64) * BigInt::from(18446744073709551557u64) + 2;
        if is_prime(&too_big) {
            assert!(factor(&too_big).is_err());
        }
    }

    #[test]
    fn roots() {
        assert_eq!(iroot(&BigInt::from(400), 2), BigInt::from(20));
        assert_eq!(iroot(&BigInt::from(400), 4), BigInt::from(4));
        assert_eq!(iroot(&BigInt::from(115600), 4), BigInt::from(18));
        assert_eq!(iroot(&BigInt::from(80), 4), BigInt::from(2));
        assert_eq!(iroot(&BigInt::from(81), 4), BigInt::from(3));
    }

    #[test]
    fn tonelli() {
        for p in primes_up_to(200).into_iter().skip(1) {
            for a in 1..p {
                if let Some(r) = sqrt_mod_prime(a, p) {
                    assert_eq!(r * r % p, a);
                } else {
                    assert_eq!(kronecker(a as i64, p), -1);
                }
            }
        }
    }

    #[test]
    fn kronecker_values() {
        assert_eq!(kronecker(-4, 3), -1);
        assert_eq!(kronecker(-4, 5), 1);
        assert_eq!(kronecker(-7, 2), 1);
        assert_eq!(kronecker(-3, 2), -1);
        assert_eq!(kronecker(-4, 2), 0);
    }
}
