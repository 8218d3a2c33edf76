//! Integer lattices: Hermite normal form, membership, intersection, Smith normal
//! form, LLL reduction of Gram matrices and Fincke-Pohst enumeration.
//!
//! Row convention throughout: a lattice is spanned by the rows of a matrix. The
//! Hermite form used here is lower triangular: row `i` has its pivot in column
//! `i` and zeros to the right of it, entries left of a pivot are reduced into
//! `[0, pivot)` by the rows above. Consequently rows `0..k` span the
//! intersection of the lattice with the first `k` coordinates.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Mat = Vec<Vec<BigInt>>;

fn axpy(dst: &mut [BigInt], q: &BigInt, src: &[BigInt]) {
    // dst -= q * src
    for (d, s) in dst.iter_mut().zip(src) {
        if !s.is_zero() {
            *d -= q * s;
        }
    }
}

/// Hermite normal form of a full-rank lattice in Z^n given by generating rows.
/// Returns `None` if the rows do not span a rank-n lattice.
pub fn hnf(rows: &[Vec<BigInt>], n: usize) -> Option<Mat> {
    hnf_impl(rows, n, false).map(|(h, _)| h)
}

/// Hermite normal form together with, for every output row, its expression as
/// an integer combination of the input rows.
pub fn hnf_with_transform(rows: &[Vec<BigInt>], n: usize) -> Option<(Mat, Mat)> {
    hnf_impl(rows, n, true)
}

fn hnf_impl(rows: &[Vec<BigInt>], n: usize, track: bool) -> Option<(Mat, Mat)> {
    let k = rows.len();
    let mut work: Vec<(Vec<BigInt>, Vec<BigInt>)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            debug_assert_eq!(r.len(), n);
            let mut u = Vec::new();
            if track {
                u = vec![BigInt::zero(); k];
                u[i] = BigInt::one();
            }
            (r.clone(), u)
        })
        .filter(|(r, _)| r.iter().any(|x| !x.is_zero()))
        .collect();
    let mut h: Vec<Option<(Vec<BigInt>, Vec<BigInt>)>> = vec![None; n];
    for col in (0..n).rev() {
        loop {
            let nz: Vec<usize> = (0..work.len())
                .filter(|&i| !work[i].0[col].is_zero())
                .collect();
            if nz.is_empty() {
                return None;
            }
            if nz.len() == 1 {
                let (mut r, mut u) = work.swap_remove(nz[0]);
                if r[col].is_negative() {
                    r.iter_mut().for_each(|x| *x = -&*x);
                    u.iter_mut().for_each(|x| *x = -&*x);
                }
                h[col] = Some((r, u));
                break;
            }
            let piv = *nz
                .iter()
                .min_by(|&&a, &&b| work[a].0[col].abs().cmp(&work[b].0[col].abs()))
                .unwrap();
            let (pr, pu) = work[piv].clone();
            for &i in &nz {
                if i == piv {
                    continue;
                }
                let q = work[i].0[col].div_floor(&pr[col]);
                if !q.is_zero() {
                    axpy(&mut work[i].0, &q, &pr);
                    if track {
                        axpy(&mut work[i].1, &q, &pu);
                    }
                }
            }
            work.retain(|(r, _)| r.iter().any(|x| !x.is_zero()));
        }
    }
    let (mut hm, mut um): (Mat, Mat) = h.into_iter().map(|x| x.unwrap()).unzip();
    for j in 0..n {
        for c in (0..j).rev() {
            let q = hm[j][c].div_floor(&hm[c][c]);
            if !q.is_zero() {
                let (top, bot) = hm.split_at_mut(j);
                axpy(&mut bot[0], &q, &top[c]);
                if track {
                    let (top, bot) = um.split_at_mut(j);
                    axpy(&mut bot[0], &q, &top[c]);
                }
            }
        }
    }
    Some((hm, um))
}

/// Coordinates of `v` with respect to a lower-triangular basis, if `v` lies in
/// the lattice.
pub fn solve(h: &Mat, v: &[BigInt]) -> Option<Vec<BigInt>> {
    let n = h.len();
    let mut v = v.to_vec();
    let mut c = vec![BigInt::zero(); n];
    for col in (0..n).rev() {
        if v[col].is_zero() {
            continue;
        }
        let (q, r) = v[col].div_rem(&h[col][col]);
        if !r.is_zero() {
            return None;
        }
        axpy(&mut v, &q, &h[col]);
        c[col] = q;
    }
    Some(c)
}

pub fn contains(h: &Mat, v: &[BigInt]) -> bool {
    solve(h, v).is_some()
}

/// `a ⊆ b` for lattices given by rows, `b` in Hermite form.
pub fn is_sublattice(a: &Mat, b: &Mat) -> bool {
    a.iter().all(|r| contains(b, r))
}

pub fn det_triangular(h: &Mat) -> BigInt {
    h.iter().enumerate().map(|(i, r)| r[i].clone()).product()
}

/// Determinant of a square integer matrix (fraction-free elimination).
pub fn det(m: &Mat) -> BigInt {
    let n = m.len();
    let mut a = m.clone();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&i| !a[i][k].is_zero()) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                a[i][j] = v / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    sign * prev
}

/// Intersection of two full-rank lattices in Z^n.
pub fn intersect(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut rows = Vec::with_capacity(2 * n);
    for r in a {
        let mut v = r.clone();
        v.extend(r.iter().cloned());
        rows.push(v);
    }
    for r in b {
        let mut v = vec![BigInt::zero(); n];
        v.extend(r.iter().cloned());
        rows.push(v);
    }
    let h = hnf(&rows, 2 * n).expect("full rank");
    hnf(&h[..n].iter().map(|r| r[..n].to_vec()).collect::<Vec<_>>(), n).expect("full rank")
}

/// Sum of two lattices (Hermite form of the union of generators).
pub fn sum(a: &Mat, b: &Mat) -> Mat {
    let n = a[0].len();
    let rows: Vec<_> = a.iter().chain(b.iter()).cloned().collect();
    hnf(&rows, n).expect("full rank")
}

/// Smith normal form data for the quotient Z^k / rowspace(R).
#[derive(Debug, Clone)]
pub struct Smith {
    /// Elementary divisors d_0 | d_1 | ... (zero for free factors), length k.
    pub diag: Vec<BigInt>,
    /// Column transform: the class of e ∈ Z^k has coordinates e·V reduced
    /// modulo `diag`.
    pub v: Mat,
}

pub fn smith(relations: &[Vec<BigInt>], k: usize) -> Smith {
    let mut a: Mat = relations.to_vec();
    let r = a.len();
    let mut v: Mat = (0..k)
        .map(|i| (0..k).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect())
        .collect();
    let mut diag = vec![BigInt::zero(); k];
    let col_op = |m: &mut Mat, dst: usize, q: &BigInt, src: usize| {
        for row in m.iter_mut() {
            let s = row[src].clone();
            if !s.is_zero() {
                row[dst] -= q * s;
            }
        }
    };
    let swap_cols = |m: &mut Mat, i: usize, j: usize| {
        for row in m.iter_mut() {
            row.swap(i, j);
        }
    };
    for t in 0..k.min(r) {
        loop {
            // minimal nonzero entry in the trailing block
            let mut best: Option<(usize, usize)> = None;
            for i in t..r {
                for j in t..k {
                    if !a[i][j].is_zero()
                        && best.is_none_or(|(bi, bj)| a[i][j].abs() < a[bi][bj].abs())
                    {
                        best = Some((i, j));
                    }
                }
            }
            let Some((bi, bj)) = best else {
                return finish(a, v, diag, t, k);
            };
            a.swap(t, bi);
            swap_cols(&mut a, t, bj);
            swap_cols(&mut v, t, bj);
            let mut clean = true;
            for i in t + 1..r {
                if !a[i][t].is_zero() {
                    let q = a[i][t].div_floor(&a[t][t]);
                    let pr = a[t].clone();
                    axpy(&mut a[i], &q, &pr);
                    if !a[i][t].is_zero() {
                        clean = false;
                    }
                }
            }
            for j in t + 1..k {
                if !a[t][j].is_zero() {
                    let q = a[t][j].div_floor(&a[t][t]);
                    col_op(&mut a, j, &q, t);
                    col_op(&mut v, j, &q, t);
                    if !a[t][j].is_zero() {
                        clean = false;
                    }
                }
            }
            if !clean {
                continue;
            }
            // divisibility condition
            let mut bad = None;
            'scan: for i in t + 1..r {
                for j in t + 1..k {
                    if !(&a[i][j] % &a[t][t]).is_zero() {
                        bad = Some(i);
                        break 'scan;
                    }
                }
            }
            match bad {
                Some(i) => {
                    let row = a[i].clone();
                    for (x, y) in a[t].iter_mut().zip(row) {
                        *x += y;
                    }
                }
                None => break,
            }
        }
        diag[t] = a[t][t].abs();
    }
    finish(a, v, diag, k.min(r), k)
}

fn finish(_a: Mat, v: Mat, diag: Vec<BigInt>, _t: usize, _k: usize) -> Smith {
    Smith { diag, v }
}

pub fn to_i128(x: &BigInt) -> Result<i128> {
    x.to_i128()
        .ok_or_else(|| Error::Overflow(format!("{x} exceeds 128 bits")))
}

/// LLL reduction (δ = 0.99) of a positive definite integral Gram matrix.
/// Returns the transform `U` (rows = new basis in old coordinates) and the
/// reduced Gram matrix `U G Uᵀ`.
pub fn lll_gram(g: &[Vec<i128>]) -> (Vec<Vec<i128>>, Vec<Vec<i128>>) {
    let n = g.len();
    let mut g: Vec<Vec<i128>> = g.to_vec();
    let mut u: Vec<Vec<i128>> = (0..n)
        .map(|i| (0..n).map(|j| i128::from(i == j)).collect())
        .collect();
    if n <= 1 {
        return (u, g);
    }
    let gso = |g: &Vec<Vec<i128>>| {
        let mut mu = vec![vec![0f64; n]; n];
        let mut b = vec![0f64; n];
        for i in 0..n {
            for j in 0..i {
                let mut s = g[i][j] as f64;
                for l in 0..j {
                    s -= mu[j][l] * mu[i][l] * b[l];
                }
                mu[i][j] = s / b[j];
            }
            let mut s = g[i][i] as f64;
            for l in 0..i {
                s -= mu[i][l] * mu[i][l] * b[l];
            }
            b[i] = s;
        }
        (mu, b)
    };
    let mut k = 1;
    let mut iters = 0usize;
    while k < n {
        iters += 1;
        if iters > 100_000 {
            break;
        }
        for j in (0..k).rev() {
            let (mu, _) = gso(&g);
            let r = mu[k][j].round();
            if r != 0.0 {
                let r = r as i128;
                // b_k -= r b_j
                let gkj = g[k][j];
                let gjj = g[j][j];
                for i in 0..n {
                    if i != k {
                        let v = g[k][i] - r * g[j][i];
                        g[k][i] = v;
                        g[i][k] = v;
                    }
                }
                g[k][k] = g[k][k] - 2 * r * gkj + r * r * gjj;
                for c in 0..n {
                    u[k][c] -= r * u[j][c];
                }
            }
        }
        let (mu, b) = gso(&g);
        if b[k] >= (0.99 - mu[k][k - 1] * mu[k][k - 1]) * b[k - 1] {
            k += 1;
        } else {
            g.swap(k, k - 1);
            for row in g.iter_mut() {
                row.swap(k, k - 1);
            }
            u.swap(k, k - 1);
            k = if k > 1 { k - 1 } else { 1 };
        }
    }
    (u, g)
}

fn quad(g: &[Vec<i128>], x: &[i128]) -> i128 {
    let n = x.len();
    let mut s = 0i128;
    for i in 0..n {
        if x[i] == 0 {
            continue;
        }
        let mut t = 0i128;
        for j in 0..n {
            t += g[i][j] * x[j];
        }
        s += x[i] * t;
    }
    s
}

/// Enumerate every integer vector `x` (including zero) with `xᵀ G x ≤ bound`
/// for a positive definite integral Gram matrix `G`. The callback receives the
/// vector and its exact value; returning `false` stops the enumeration.
///
/// The search is guided by a floating point Cholesky decomposition of the
/// LLL-reduced form with widened intervals; every reported vector is checked
/// with exact integer arithmetic.
pub fn enumerate_short<F>(g: &[Vec<i128>], bound: i128, mut f: F)
where
    F: FnMut(&[i128], i128) -> bool,
{
    let n = g.len();
    if bound < 0 {
        return;
    }
    if n == 0 {
        f(&[], 0);
        return;
    }
    let (u, gr) = lll_gram(g);
    // Cholesky-style decomposition Q(x) = Σ q_i (x_i + Σ_{j>i} m_ij x_j)^2
    let mut a: Vec<Vec<f64>> = gr.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    for i in 0..n {
        for j in i + 1..n {
            a[j][i] = a[i][j];
            a[i][j] /= a[i][i];
        }
        for k in i + 1..n {
            for l in k..n {
                a[k][l] -= a[k][i] * a[i][l];
            }
        }
    }
    let q: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    let bf = bound as f64;
    let mut x = vec![0i128; n];
    let mut orig = vec![0i128; n];
    let mut budget = vec![0f64; n + 1];
    let mut center = vec![0f64; n];
    let mut hi = vec![0i128; n];
    budget[n] = bf * (1.0 + 1e-9) + 1e-6;
    // iterative DFS
    let mut i = n - 1;
    let set_range = |i: usize,
                     x: &Vec<i128>,
                     budget: &Vec<f64>,
                     center: &mut Vec<f64>,
                     hi: &mut Vec<i128>|
     -> i128 {
        let mut c = 0f64;
        for j in i + 1..n {
            c -= a[i][j] * x[j] as f64;
        }
        center[i] = c;
        let t = budget[i + 1].max(0.0);
        let r = (t / q[i]).sqrt() * (1.0 + 1e-9) + 1e-6;
        hi[i] = (c + r).floor() as i128;
        (c - r).ceil() as i128
    };
    x[i] = set_range(i, &x, &budget, &mut center, &mut hi);
    loop {
        if x[i] > hi[i] {
            if i == n - 1 {
                return;
            }
            i += 1;
            x[i] += 1;
            continue;
        }
        let d = x[i] as f64 - center[i];
        budget[i] = budget[i + 1] - q[i] * d * d;
        if budget[i] < -1e-6 * (1.0 + bf) {
            // outside the widened ellipsoid; still advance
            x[i] += 1;
            continue;
        }
        if i == 0 {
            for (c, o) in orig.iter_mut().enumerate() {
                let mut s = 0i128;
                for k in 0..n {
                    s += x[k] * u[k][c];
                }
                *o = s;
            }
            let val = quad(&gr, &x);
            if val <= bound && !f(&orig, val) {
                return;
            }
            x[i] += 1;
        } else {
            i -= 1;
            x[i] = set_range(i, &x, &budget, &mut center, &mut hi);
        }
    }
}

/// Gram matrix of a set of integer vectors under a symmetric integral form.
pub fn gram_of(basis: &[Vec<i128>], form: &[Vec<i128>]) -> Vec<Vec<i128>> {
    let n = basis.len();
    let m = form.len();
    let mut out = vec![vec![0i128; n]; n];
    for i in 0..n {
        let mut t = vec![0i128; m];
        for c in 0..m {
            for d in 0..m {
                t[c] += basis[i][d] * form[d][c];
            }
        }
        for j in 0..n {
            out[i][j] = (0..m).map(|c| t[c] * basis[j][c]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bi(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn hnf_shape_and_membership() {
        let rows = vec![bi(&[4, 6, 2]), bi(&[2, 8, 10]), bi(&[6, 0, 4]), bi(&[1, 1, 1])];
        let h = hnf(&rows, 3).unwrap();
        for (i, r) in h.iter().enumerate() {
            assert!(r[i] > BigInt::zero());
            for j in i + 1..3 {
                assert!(r[j].is_zero());
            }
            for (j, row) in h.iter().enumerate().skip(i + 1) {
                assert!(row[i] >= BigInt::zero() && row[i] < r[i], "{j}");
            }
        }
        for r in &rows {
            assert!(contains(&h, r));
        }
        assert!(!contains(&h, &bi(&[0, 0, 1])) || det_triangular(&h) == BigInt::one());
    }

    #[test]
    fn transform_reproduces_rows() {
        let rows = vec![bi(&[6, 4]), bi(&[10, 0]), bi(&[3, 9])];
        let (h, u) = hnf_with_transform(&rows, 2).unwrap();
        for (hr, ur) in h.iter().zip(&u) {
            let mut acc = vec![BigInt::zero(); 2];
            for (c, r) in ur.iter().zip(&rows) {
                for k in 0..2 {
                    acc[k] += c * &r[k];
                }
            }
            assert_eq!(&acc, hr);
        }
    }

    #[test]
    fn intersection_of_scaled_lattices() {
        let a = hnf(&[bi(&[2, 0]), bi(&[0, 3])], 2).unwrap();
        let b = hnf(&[bi(&[3, 0]), bi(&[0, 2])], 2).unwrap();
        let c = intersect(&a, &b);
        assert_eq!(det_triangular(&c), BigInt::from(36));
        assert!(contains(&c, &bi(&[6, 6])));
    }

    #[test]
    fn smith_cyclic() {
        let s = smith(&[bi(&[2, 4]), bi(&[6, 8])], 2);
        let d: Vec<_> = s.diag.iter().map(|x| x.to_i64().unwrap()).collect();
        assert_eq!(d, vec![2, 4]);
    }

    #[test]
    fn enumeration_matches_box() {
        let g = vec![vec![10i128, 7, 1], vec![7, 6, 2], vec![1, 2, 5]];
        let bound = 30;
        let mut found = std::collections::BTreeSet::new();
        enumerate_short(&g, bound, |x, _| {
            found.insert(x.to_vec());
            true
        });
        let mut brute = std::collections::BTreeSet::new();
        for a in -20..=20i128 {
            for b in -20..=20i128 {
                for c in -20..=20i128 {
                    if quad(&g, &[a, b, c]) <= bound {
                        brute.insert(vec![a, b, c]);
                    }
                }
            }
        }
        assert_eq!(found, brute);
    }
}
