//! Full-rank `O_p`-lattices in `Q_p^n` with exact rational bases.
//!
//! Canonical form: upper triangular, diagonal `p^{a_1}, ..., p^{a_n}`, and each
//! off-diagonal entry `h_ij` (`i < j`) reduced modulo the diagonal entry of its
//! row, `p^{a_i}`, to the representative `p^v u` with `0 <= u < p^{a_i - v}`.
//! Column operations over `O_p` can only change `h_ij` by multiples of
//! `p^{a_i}`, so this representative is unique.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::error::{HuaError, Result};
use crate::linalg::PadicMatrix;
use crate::measures::{hua_series, vol_gl, Flavor};
use crate::padic::{format_rational, p_power, rational_valuation, strip_bigint};
use crate::real::{big_to_f64, Real};

type RatMatrix = Vec<Vec<BigRational>>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Lattice {
    p: u64,
    /// Canonical basis, columns generating the lattice.
    h: RatMatrix,
}

fn valuation(p: u64, x: &BigRational) -> Option<i64> {
    (!x.is_zero()).then(|| rational_valuation(p, x))
}

/// The representative of `x mod p^a` described in the module docs.
fn reduce_mod_power(p: u64, x: &BigRational, a: i64) -> BigRational {
    let Some(v) = valuation(p, x) else {
        return BigRational::zero();
    };
    if v >= a {
        return BigRational::zero();
    }
    let (_, num) = strip_bigint(p, x.numer());
    let (_, den) = strip_bigint(p, x.denom());
    let m = BigInt::from(p).pow((a - v) as u32);
    let den_inv = den.mod_floor(&m).extended_gcd(&m).x;
    let u = (num * den_inv).mod_floor(&m);
    p_power(p, v) * BigRational::from_integer(u)
}

/// Column Hermite reduction of an `n x m` rational matrix of rank `n`.
fn hermite(p: u64, mut cols: Vec<Vec<BigRational>>, n: usize) -> Result<RatMatrix> {
    // `cols[j]` is column j as a vector of length n.
    let mut out: Vec<Vec<BigRational>> = vec![Vec::new(); n];
    for i in (0..n).rev() {
        let mut best: Option<(i64, usize)> = None;
        for (j, c) in cols.iter().enumerate() {
            if let Some(v) = valuation(p, &c[i]) {
                if best.is_none_or(|(bv, _)| v < bv) {
                    best = Some((v, j));
                }
            }
        }
        let Some((a, j)) = best else {
            return Err(HuaError::SingularMatrix);
        };
        let mut pivot = cols.swap_remove(j);
        let scale = p_power(p, a) / &pivot[i];
        for x in pivot.iter_mut() {
            *x = &*x * &scale;
        }
        for c in cols.iter_mut() {
            if c[i].is_zero() {
                continue;
            }
            let f = &c[i] / &pivot[i];
            for (x, y) in c.iter_mut().zip(&pivot) {
                *x = &*x - &f * y;
            }
        }
        cols.retain(|c| c.iter().any(|x| !x.is_zero()));
        out[i] = pivot;
    }
    // Reduce each column j against the columns to its left, bottom row first.
    for j in 1..n {
        for i in (0..j).rev() {
            let a = valuation(p, &out[i][i]).unwrap();
            let r = reduce_mod_power(p, &out[j][i], a);
            let f = (&out[j][i] - &r) / &out[i][i];
            if !f.is_zero() {
                let ci = out[i].clone();
                for (x, y) in out[j].iter_mut().zip(&ci) {
                    *x = &*x - &f * y;
                }
            }
            out[j][i] = r;
        }
    }
    Ok((0..n)
        .map(|r| (0..n).map(|c| out[c][r].clone()).collect())
        .collect())
}

fn columns(m: &RatMatrix) -> Vec<Vec<BigRational>> {
    let n = m.len();
    let w = m.first().map_or(0, Vec::len);
    (0..w)
        .map(|j| (0..n).map(|i| m[i][j].clone()).collect())
        .collect()
}

/// Exact inverse over `Q`.
fn rat_inverse(m: &RatMatrix) -> Result<RatMatrix> {
    let n = m.len();
    let mut a: RatMatrix = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| {
                if i == j {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            }));
            r
        })
        .collect();
    for t in 0..n {
        let Some(pi) = (t..n).find(|&i| !a[i][t].is_zero()) else {
            return Err(HuaError::SingularMatrix);
        };
        a.swap(t, pi);
        let inv = a[t][t].recip();
        for x in a[t].iter_mut() {
            *x = &*x * &inv;
        }
        let prow = a[t].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i == t || row[t].is_zero() {
                continue;
            }
            let f = row[t].clone();
            for (x, y) in row.iter_mut().zip(&prow) {
                *x = &*x - &f * y;
            }
        }
    }
    Ok(a.into_iter().map(|r| r[n..].to_vec()).collect())
}

impl Lattice {
    /// Column span over `O_p` of an exact rational basis.
    pub fn from_rational_basis(p: u64, basis: &RatMatrix) -> Result<Self> {
        let n = basis.len();
        if basis.iter().any(|r| r.len() != n) {
            return Err(HuaError::ShapeMismatch(
                "lattice basis must be square".into(),
            ));
        }
        Ok(Lattice {
            p,
            h: hermite(p, columns(basis), n)?,
        })
    }

    /// Column span of a p-adic basis. Inexact entries are replaced by their
    /// canonical representatives, which generate the same lattice whenever
    /// the basis is known to more digits than its Hermite diagonal needs.
    pub fn from_basis(z: &PadicMatrix) -> Result<Self> {
        if !z.is_square() {
            return Err(HuaError::ShapeMismatch(
                "lattice basis must be square".into(),
            ));
        }
        let rows: RatMatrix = (0..z.rows())
            .map(|i| {
                (0..z.cols())
                    .map(|j| z.get(i, j).representative())
                    .collect()
            })
            .collect();
        Self::from_rational_basis(z.prime(), &rows)
    }

    /// `O_p^n`.
    pub fn standard(p: u64, n: usize) -> Self {
        let h = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            BigRational::one()
                        } else {
                            BigRational::zero()
                        }
                    })
                    .collect()
            })
            .collect();
        Lattice { p, h }
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    /// The canonical basis.
    pub fn basis(&self) -> &RatMatrix {
        &self.h
    }

    /// Exponents `a_i` of the canonical diagonal.
    pub fn diagonal_exponents(&self) -> Vec<i64> {
        (0..self.dim())
            .map(|i| rational_valuation(self.p, &self.h[i][i]))
            .collect()
    }

    /// `vol(L) = |det basis| = p^{-sum a_i}`.
    pub fn volume(&self) -> BigRational {
        p_power(self.p, -self.diagonal_exponents().iter().sum::<i64>())
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.p != other.p {
            return Err(HuaError::PrimeMismatch(self.p, other.p));
        }
        if self.dim() != other.dim() {
            return Err(HuaError::ShapeMismatch(format!(
                "dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut cols = columns(&self.h);
        cols.extend(columns(&other.h));
        Ok(Lattice {
            p: self.p,
            h: hermite(self.p, cols, self.dim())?,
        })
    }

    /// `L* = {x : x . L in O_p}`, with basis `(B^t)^{-1}`.
    pub fn dual(&self) -> Result<Self> {
        let n = self.dim();
        let t: RatMatrix = (0..n)
            .map(|i| (0..n).map(|j| self.h[j][i].clone()).collect())
            .collect();
        Self::from_rational_basis(self.p, &rat_inverse(&t)?)
    }

    /// `(L1 ∩ L2)* = L1* + L2*`.
    pub fn intersect(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        self.dual()?.sum(&other.dual()?)?.dual()
    }

    pub fn contains(&self, other: &Self) -> Result<bool> {
        Ok(self.sum(other)? == *self)
    }

    /// `p^k L`.
    pub fn scaled(&self, k: i64) -> Self {
        let f = p_power(self.p, k);
        let h = self
            .h
            .iter()
            .map(|r| r.iter().map(|x| x * &f).collect())
            .collect();
        Lattice::from_rational_basis(self.p, &h).expect("scaling keeps full rank")
    }
}

impl fmt::Display for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .h
            .iter()
            .map(|r| r.iter().map(format_rational).collect::<Vec<_>>().join(", "))
            .collect();
        write!(f, "span[{}]", rows.join("; "))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BetaSum {
    pub partial_sum: Real,
    pub tail_bound: f64,
    pub lattices: u64,
}

/// All canonical forms with diagonal exponents `a` and entries in `p^{-depth} O^n`.
fn hermite_forms_with_diagonal(p: u64, a: &[i64], depth: i64) -> Vec<RatMatrix> {
    let n = a.len();
    let mut slots = Vec::new();
    for j in 0..n {
        for i in 0..j {
            slots.push((i, j));
        }
    }
    // h_ij ranges over p^{-depth} O / p^{a_i} O: the numbers u p^{-depth},
    // 0 <= u < p^{a_i + depth}.
    let counts: Vec<u64> = slots
        .iter()
        .map(|&(i, _)| p.pow((a[i] + depth) as u32))
        .collect();
    let unit = p_power(p, -depth);
    let mut out = Vec::new();
    let mut digits = vec![0u64; slots.len()];
    loop {
        let mut h: RatMatrix = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            p_power(p, a[i])
                        } else {
                            BigRational::zero()
                        }
                    })
                    .collect()
            })
            .collect();
        for (&(i, j), &u) in slots.iter().zip(&digits) {
            h[i][j] = &unit * BigRational::from_integer(BigInt::from(u));
        }
        out.push(h);
        let mut k = 0;
        loop {
            if k == digits.len() {
                return out;
            }
            digits[k] += 1;
            if digits[k] < counts[k] {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

/// `sum_Q vol(Q)^{n-t} vol(Q ∩ O^n)^t` over lattices `p^M O^n ⊆ Q ⊆ p^{-M} O^n`.
///
/// The full sum over all lattices equals `c(n, t) / vol(GL(n, O_p))`. A
/// lattice `Q = z O^n` lies in the box exactly when every singular exponent
/// of `z` lies in `[-M, M]`, so the omitted mass is the omitted mass of the
/// stratified Hua series with both cutoffs `M`, divided by `vol(GL(n, O_p))`.
pub fn lattice_beta_partial_sum(n: usize, t: Rational64, depth: i64, p: u64) -> Result<BetaSum> {
    if t <= Rational64::from(2 * n as i64 - 1) {
        return Err(HuaError::ConvergenceDomain(format!(
            "t = {t} <= {}",
            2 * n as i64 - 1
        )));
    }
    if depth < 1 || n == 0 || !crate::measures::is_prime(p) {
        return Err(HuaError::InvalidInput(
            "need n >= 1, depth >= 1 and p prime".into(),
        ));
    }
    let standard = Lattice::standard(p, n);
    let ni = n as i64;
    let mut diagonals = vec![vec![]];
    for _ in 0..n {
        diagonals = diagonals
            .into_iter()
            .flat_map(|d: Vec<i64>| {
                (-depth..=depth).map(move |a| {
                    let mut d = d.clone();
                    d.push(a);
                    d
                })
            })
            .collect();
    }
    let shard = |a: &Vec<i64>| -> Result<(Real, u64)> {
        let mut acc = Real::zero();
        let mut count = 0;
        for h in hermite_forms_with_diagonal(p, a, depth) {
            // p^M O ⊆ Q iff p^M h^{-1} is integral.
            let hinv = rat_inverse(&h)?;
            if hinv
                .iter()
                .flatten()
                .any(|x| valuation(p, x).is_some_and(|v| v + depth < 0))
            {
                continue;
            }
            let q = Lattice { p, h };
            let vq = q.volume();
            let vi = q.intersect(&standard)?.volume();
            let term = Real::Exact(vq)
                .pow_rational(Rational64::from(ni) - t)
                .mul(&Real::Exact(vi).pow_rational(t));
            acc = acc.add(&term);
            count += 1;
        }
        Ok((acc, count))
    };
    let shards: Vec<Result<(Real, u64)>> = diagonals.par_iter().map(shard).collect();
    let mut partial = Real::zero();
    let mut lattices = 0;
    for s in shards {
        let (x, c) = s?;
        partial = partial.add(&x);
        lattices += c;
    }
    let series = hua_series(n, t, p, depth, depth, Flavor::Gl)?;
    let tail_bound = series.tail_bound / big_to_f64(&vol_gl(n, p)) * (1.0 + 1e-12);
    Ok(BetaSum {
        partial_sum: partial,
        tail_bound,
        lattices,
    })
}
