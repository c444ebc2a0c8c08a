//! Matrices over Q_p, singular profiles, determinants and inverses.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde_json::{json, Value};

use crate::error::{HuaError, Result};
use crate::padic::{format_rational, p_power, parse_rational, PadicScalar, Valuation};

#[derive(Clone, Debug)]
pub struct PadicMatrix {
    p: u64,
    rows: usize,
    cols: usize,
    entries: Vec<PadicScalar>,
}

impl PadicMatrix {
    pub fn new(p: u64, rows: usize, cols: usize, entries: Vec<PadicScalar>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(HuaError::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if let Some(x) = entries.iter().find(|x| x.prime() != p) {
            return Err(HuaError::PrimeMismatch(p, x.prime()));
        }
        Ok(PadicMatrix {
            p,
            rows,
            cols,
            entries,
        })
    }

    pub fn from_fn(
        p: u64,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> PadicScalar,
    ) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        PadicMatrix {
            p,
            rows,
            cols,
            entries,
        }
    }

    pub fn zeros(p: u64, rows: usize, cols: usize) -> Self {
        Self::from_fn(p, rows, cols, |_, _| PadicScalar::zero(p))
    }

    pub fn identity(p: u64, n: usize) -> Self {
        Self::from_fn(p, n, n, |i, j| {
            if i == j {
                PadicScalar::one(p)
            } else {
                PadicScalar::zero(p)
            }
        })
    }

    pub fn diagonal(p: u64, diag: &[PadicScalar]) -> Self {
        let n = diag.len();
        Self::from_fn(p, n, n, |i, j| {
            if i == j {
                diag[i].clone()
            } else {
                PadicScalar::zero(p)
            }
        })
    }

    /// Exact matrix from rational rows.
    pub fn from_rationals(p: u64, rows: &[Vec<BigRational>]) -> Result<Self> {
        if !crate::measures::is_prime(p) {
            return Err(HuaError::InvalidInput(format!("{p} is not prime")));
        }
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(HuaError::ShapeMismatch("ragged rows".into()));
        }
        Ok(Self::from_fn(p, r, c, |i, j| {
            PadicScalar::exact(rows[i][j].clone(), p)
        }))
    }

    /// Exact matrix from integer rows.
    pub fn from_ints(p: u64, rows: &[Vec<i64>]) -> Result<Self> {
        let rows: Vec<Vec<BigRational>> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&x| BigRational::from_integer(BigInt::from(x)))
                    .collect()
            })
            .collect();
        Self::from_rationals(p, &rows)
    }

    /// Exact matrix from `"num/den"` strings.
    pub fn from_strs(p: u64, rows: &[Vec<&str>]) -> Result<Self> {
        let rows = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|s| parse_rational(s))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rationals(p, &rows)
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[PadicScalar] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> &PadicScalar {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: PadicScalar) {
        assert_eq!(x.prime(), self.p, "mixed primes in p-adic matrix");
        self.entries[i * self.cols + j] = x;
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.p != other.p {
            return Err(HuaError::PrimeMismatch(self.p, other.p));
        }
        if self.rows != other.rows || self.cols != other.cols {
            return Err(HuaError::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// Matrix product. Cancellation inside a dot product is tolerated and
    /// shows up as a vanishing entry.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.p != other.p {
            return Err(HuaError::PrimeMismatch(self.p, other.p));
        }
        if self.cols != other.rows {
            return Err(HuaError::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let p = self.p;
        Ok(Self::from_fn(p, self.rows, other.cols, |i, j| {
            let mut acc = PadicScalar::zero(p);
            for k in 0..self.cols {
                let a = self.get(i, k);
                let b = other.get(k, j);
                if a.is_zero() || b.is_zero() {
                    continue;
                }
                acc = acc.add_or_vanish(&a.mul(b));
            }
            acc
        }))
    }

    /// Entrywise sum; a fully cancelled entry is an error.
    pub fn matadd(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.add(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.with_entries(entries))
    }

    /// Entrywise sum keeping fully cancelled entries as `O(p^a)`.
    pub fn matadd_lenient(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.add_or_vanish(b))
            .collect();
        Ok(self.with_entries(entries))
    }

    pub fn matsub(&self, other: &Self) -> Result<Self> {
        self.matadd(&other.neg())
    }

    fn with_entries(&self, entries: Vec<PadicScalar>) -> Self {
        PadicMatrix {
            p: self.p,
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn neg(&self) -> Self {
        self.map(|x| x.neg())
    }

    pub fn scale(&self, c: &PadicScalar) -> Self {
        self.map(|x| x.mul(c))
    }

    pub fn map(&self, f: impl Fn(&PadicScalar) -> PadicScalar) -> Self {
        self.with_entries(self.entries.iter().map(f).collect())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.p, self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    /// The `h x w` block whose top-left entry is `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, h: usize, w: usize) -> Result<Self> {
        if r0 + h > self.rows || c0 + w > self.cols {
            return Err(HuaError::ShapeMismatch(format!(
                "block {h}x{w} at ({r0},{c0}) outside {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(Self::from_fn(self.p, h, w, |i, j| {
            self.get(r0 + i, c0 + j).clone()
        }))
    }

    /// Assembles `(a b; c d)` from four blocks.
    pub fn from_blocks(a: &Self, b: &Self, c: &Self, d: &Self) -> Result<Self> {
        if a.rows != b.rows || c.rows != d.rows || a.cols != c.cols || b.cols != d.cols {
            return Err(HuaError::ShapeMismatch("incompatible blocks".into()));
        }
        let (h, w) = (a.rows, a.cols);
        Ok(Self::from_fn(
            a.p,
            a.rows + c.rows,
            a.cols + b.cols,
            |i, j| match (i < h, j < w) {
                (true, true) => a.get(i, j).clone(),
                (true, false) => b.get(i, j - w).clone(),
                (false, true) => c.get(i - h, j).clone(),
                (false, false) => d.get(i - h, j - w).clone(),
            },
        ))
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hcat(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(HuaError::ShapeMismatch(
                "hcat with different row counts".into(),
            ));
        }
        let w = self.cols;
        Ok(Self::from_fn(self.p, self.rows, w + other.cols, |i, j| {
            if j < w {
                self.get(i, j).clone()
            } else {
                other.get(i, j - w).clone()
            }
        }))
    }

    pub fn eq_at_precision(&self, other: &Self) -> bool {
        self.p == other.p
            && self.rows == other.rows
            && self.cols == other.cols
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.eq_at_precision(b))
    }

    /// All entries have nonnegative valuation.
    pub fn is_integral(&self) -> bool {
        self.entries.iter().all(PadicScalar::is_integral)
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square() && self.eq_at_precision(&self.transpose())
    }

    pub fn is_antisymmetric(&self) -> bool {
        self.is_square() && self.eq_at_precision(&self.transpose().neg())
    }

    pub fn is_exact(&self) -> bool {
        self.entries.iter().all(PadicScalar::is_exact)
    }

    pub fn with_precision(&self, prec: u32) -> Self {
        self.map(|x| x.with_precision(prec))
    }

    /// Smallest known valuation among the entries; `None` for an exact zero matrix.
    pub fn min_valuation(&self) -> Option<i64> {
        self.entries
            .iter()
            .filter_map(|x| match x.valuation() {
                Valuation::Finite(v) | Valuation::AtLeast(v) => Some(v),
                Valuation::Infinite => None,
            })
            .min()
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Vec<String>> = (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| format_rational(&self.get(i, j).representative()))
                    .collect()
            })
            .collect();
        json!({"p": self.p, "rows": self.rows, "cols": self.cols, "entries": rows})
    }

    /// Reads `{"p", "rows", "cols", "entries": [["num/den", ...], ...]}` as an exact matrix.
    pub fn from_json(value: &Value) -> Result<Self> {
        let bad = |m: &str| HuaError::InvalidInput(format!("matrix JSON: {m}"));
        let p = value
            .get("p")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("missing p"))?;
        let rows = value
            .get("entries")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing entries"))?;
        let mut parsed = Vec::with_capacity(rows.len());
        for row in rows {
            let row = row.as_array().ok_or_else(|| bad("rows must be arrays"))?;
            let mut out = Vec::with_capacity(row.len());
            for x in row {
                let q = match x {
                    Value::String(s) => parse_rational(s)?,
                    Value::Number(n) => BigRational::from_integer(BigInt::from(
                        n.as_i64().ok_or_else(|| bad("entry"))?,
                    )),
                    _ => return Err(bad("entries must be strings or integers")),
                };
                out.push(q);
            }
            parsed.push(out);
        }
        let m = Self::from_rationals(p, &parsed)?;
        let declared = |k: &str| value.get(k).and_then(Value::as_u64).map(|x| x as usize);
        if declared("rows").is_some_and(|r| r != m.rows)
            || declared("cols").is_some_and(|c| c != m.cols)
        {
            return Err(HuaError::ShapeMismatch(
                "declared shape disagrees with entries".into(),
            ));
        }
        Ok(m)
    }
}

impl fmt::Display for PadicMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Exponents `k_1 >= ... >= k_n` with `z = A diag(p^{-k_j}) B`, `A, B` in
/// `GL(n, O_p)`. `None` stands for `-inf` (rank deficiency) and sorts last.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SingularProfile {
    pub p: u64,
    pub ks: Vec<Option<i64>>,
}

impl SingularProfile {
    /// Sorts the exponents into nonincreasing order.
    pub fn new(p: u64, mut ks: Vec<Option<i64>>) -> Self {
        ks.sort_by(|a, b| b.cmp(a));
        SingularProfile { p, ks }
    }

    pub fn finite(p: u64, ks: &[i64]) -> Self {
        Self::new(p, ks.iter().map(|&k| Some(k)).collect())
    }

    pub fn n(&self) -> usize {
        self.ks.len()
    }

    pub fn is_full_rank(&self) -> bool {
        self.ks.iter().all(Option::is_some)
    }

    /// Finite exponents, or `None` if any is `-inf`.
    pub fn finite_ks(&self) -> Option<Vec<i64>> {
        self.ks.iter().copied().collect()
    }

    /// `log_p gamma = sum of the positive k_j`.
    pub fn gamma_exponent(&self) -> i64 {
        self.ks.iter().flatten().filter(|&&k| k > 0).sum()
    }

    pub fn gamma(&self) -> BigRational {
        p_power(self.p, self.gamma_exponent())
    }

    /// `|det z| = p^{sum k_j}`, zero when rank deficient.
    pub fn det_norm(&self) -> BigRational {
        match self.finite_ks() {
            Some(ks) => p_power(self.p, ks.iter().sum()),
            None => BigRational::zero(),
        }
    }

    /// Profile of `p^{-m} z`.
    pub fn shifted(&self, m: i64) -> Self {
        SingularProfile {
            p: self.p,
            ks: self.ks.iter().map(|k| k.map(|k| k + m)).collect(),
        }
    }

    /// Profile of `z^{-1}`.
    pub fn inverse(&self) -> Option<Self> {
        let ks = self.finite_ks()?;
        Some(Self::finite(
            self.p,
            &ks.iter().map(|k| -k).collect::<Vec<_>>(),
        ))
    }

    pub fn to_json(&self) -> Value {
        let ks: Vec<Value> = self
            .ks
            .iter()
            .map(|k| k.map_or(json!("-inf"), |k| json!(k)))
            .collect();
        json!({"p": self.p, "ks": ks})
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let bad = |m: &str| HuaError::InvalidInput(format!("profile JSON: {m}"));
        let p = value
            .get("p")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("missing p"))?;
        let ks = value
            .get("ks")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing ks"))?;
        let ks = ks
            .iter()
            .map(|k| match k {
                Value::String(s) if s == "-inf" => Ok(None),
                _ => k
                    .as_i64()
                    .map(Some)
                    .ok_or_else(|| bad("ks must be integers or \"-inf\"")),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(p, ks))
    }
}

impl fmt::Display for SingularProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ks: Vec<String> = self
            .ks
            .iter()
            .map(|k| k.map_or("-inf".to_string(), |k| k.to_string()))
            .collect();
        write!(f, "({})", ks.join(", "))
    }
}

struct Elimination {
    /// Pivot values in elimination order; `None` once the residual is exactly zero.
    pivots: Vec<Option<PadicScalar>>,
    /// Parity of the row and column swaps performed.
    odd: bool,
}

/// Gaussian elimination with full pivoting on a minimal-valuation entry (ties
/// broken by smallest `(row, col)`). Every multiplier is integral, so the
/// pivot valuations are the negated singular exponents.
///
/// A residual block of size at most `corank` that is indistinguishable from
/// zero is taken to be exactly zero; callers pass the structural corank of a
/// space whose points are known to be rank deficient.
fn eliminate(z: &PadicMatrix, corank: usize) -> Result<Elimination> {
    if !z.is_square() {
        return Err(HuaError::ShapeMismatch(format!(
            "{}x{} is not square",
            z.rows, z.cols
        )));
    }
    let n = z.rows;
    let mut m: Vec<Vec<PadicScalar>> = (0..n)
        .map(|i| (0..n).map(|j| z.get(i, j).clone()).collect())
        .collect();
    let mut pivots = Vec::with_capacity(n);
    let mut odd = false;
    for t in 0..n {
        let mut best: Option<(i64, usize, usize)> = None;
        let mut floor: Option<i64> = None;
        for (i, row) in m.iter().enumerate().skip(t) {
            for (j, x) in row.iter().enumerate().skip(t) {
                match x.valuation() {
                    Valuation::Finite(v) => {
                        if best.is_none_or(|(bv, _, _)| v < bv) {
                            best = Some((v, i, j));
                        }
                    }
                    Valuation::AtLeast(a) => floor = Some(floor.map_or(a, |f| f.min(a))),
                    Valuation::Infinite => {}
                }
            }
        }
        let (_, pi, pj) = match (best, floor) {
            (None, None) => {
                pivots.extend((t..n).map(|_| None));
                break;
            }
            (Some(b), None) => b,
            (Some(b), Some(f)) if b.0 < f => b,
            (None, Some(_)) if n - t <= corank => {
                pivots.extend((t..n).map(|_| None));
                break;
            }
            _ => {
                return Err(HuaError::PrecisionExhausted(format!(
                    "residual block of size {} is indistinguishable from zero",
                    n - t
                )))
            }
        };
        if pi != t {
            m.swap(pi, t);
            odd = !odd;
        }
        if pj != t {
            for row in m.iter_mut() {
                row.swap(pj, t);
            }
            odd = !odd;
        }
        let pivot_inv = m[t][t].inv()?;
        let (head, tail) = m.split_at_mut(t + 1);
        let prow = &head[t];
        for row in tail.iter_mut() {
            if row[t].is_zero() {
                continue;
            }
            let f = row[t].mul(&pivot_inv);
            for j in t + 1..n {
                if prow[j].is_zero() {
                    continue;
                }
                row[j] = row[j].sub_or_vanish(&f.mul(&prow[j]));
            }
            row[t] = PadicScalar::zero(z.p);
        }
        pivots.push(Some(m[t][t].clone()));
    }
    Ok(Elimination { pivots, odd })
}

/// Singular profile of a square matrix.
pub fn smith_profile(z: &PadicMatrix) -> Result<SingularProfile> {
    smith_profile_with_corank(z, 0)
}

/// Singular profile of a matrix known to have rank at most `n - corank`, such
/// as an alternating matrix of odd size.
pub fn smith_profile_with_corank(z: &PadicMatrix, corank: usize) -> Result<SingularProfile> {
    let e = eliminate(z, corank)?;
    let ks = e
        .pivots
        .iter()
        .map(|x| {
            x.as_ref().map(|x| {
                -x.valuation()
                    .finite()
                    .expect("pivots have certified valuation")
            })
        })
        .collect();
    Ok(SingularProfile::new(z.p, ks))
}

/// `gamma(z) = prod_{k_j > 0} p^{k_j}`.
pub fn gamma(z: &PadicMatrix) -> Result<BigRational> {
    Ok(smith_profile(z)?.gamma())
}

/// `log_p gamma(z)`.
pub fn gamma_exponent(z: &PadicMatrix) -> Result<i64> {
    Ok(smith_profile(z)?.gamma_exponent())
}

pub fn det(z: &PadicMatrix) -> Result<PadicScalar> {
    let e = eliminate(z, 0)?;
    let mut acc = PadicScalar::one(z.p);
    for x in &e.pivots {
        match x {
            Some(x) => acc = acc.mul(x),
            None => return Ok(PadicScalar::zero(z.p)),
        }
    }
    Ok(if e.odd { acc.neg() } else { acc })
}

pub fn det_norm(z: &PadicMatrix) -> Result<BigRational> {
    Ok(smith_profile(z)?.det_norm())
}

/// Gauss-Jordan inverse with partial pivoting on minimal valuation.
pub fn inverse(z: &PadicMatrix) -> Result<PadicMatrix> {
    if !z.is_square() {
        return Err(HuaError::ShapeMismatch(format!(
            "{}x{} is not square",
            z.rows, z.cols
        )));
    }
    let n = z.rows;
    let p = z.p;
    let mut m: Vec<Vec<PadicScalar>> = (0..n)
        .map(|i| {
            (0..2 * n)
                .map(|j| {
                    if j < n {
                        z.get(i, j).clone()
                    } else if j - n == i {
                        PadicScalar::one(p)
                    } else {
                        PadicScalar::zero(p)
                    }
                })
                .collect()
        })
        .collect();
    for t in 0..n {
        let mut best: Option<(i64, usize)> = None;
        let mut vanishing = false;
        for (i, row) in m.iter().enumerate().skip(t) {
            match row[t].valuation() {
                Valuation::Finite(v) => {
                    if best.is_none_or(|(bv, _)| v < bv) {
                        best = Some((v, i));
                    }
                }
                Valuation::AtLeast(_) => vanishing = true,
                Valuation::Infinite => {}
            }
        }
        let pi = match best {
            Some((_, i)) => i,
            None if vanishing => {
                return Err(HuaError::PrecisionExhausted(
                    "pivot column indistinguishable from zero".into(),
                ))
            }
            None => return Err(HuaError::SingularMatrix),
        };
        m.swap(pi, t);
        let pinv = m[t][t].inv()?;
        for j in t..2 * n {
            m[t][j] = m[t][j].mul(&pinv);
        }
        let prow = m[t].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i == t || row[t].is_zero() {
                continue;
            }
            let f = row[t].clone();
            for j in t..2 * n {
                if prow[j].is_zero() {
                    continue;
                }
                row[j] = row[j].sub_or_vanish(&f.mul(&prow[j]));
            }
            row[t] = PadicScalar::zero(p);
        }
    }
    Ok(PadicMatrix::from_fn(p, n, n, |i, j| m[i][n + j].clone()))
}

/// `x^{-1} y` without forming the inverse separately.
pub fn solve_left(x: &PadicMatrix, y: &PadicMatrix) -> Result<PadicMatrix> {
    inverse(x)?.matmul(y)
}

/// Rank over `F_p` of a matrix of residues, eliminating in place.
pub fn rank_mod_p(m: &mut [Vec<u64>], p: u64) -> usize {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(pr) = (rank..rows).find(|&r| m[r][c] % p != 0) else {
            continue;
        };
        m.swap(rank, pr);
        let inv = inv_mod(m[rank][c] % p, p);
        for j in c..cols {
            m[rank][j] = m[rank][j] % p * inv % p;
        }
        for r in 0..rows {
            if r != rank && m[r][c] % p != 0 {
                let f = m[r][c] % p;
                for j in c..cols {
                    m[r][j] = (m[r][j] % p + p * p - f * m[rank][j] % p) % p;
                }
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

fn inv_mod(a: u64, p: u64) -> u64 {
    // p is prime, so a^(p-2) inverts a.
    let (mut base, mut e, mut acc) = (a % p, p - 2, 1u64);
    while e > 0 {
        if e & 1 == 1 {
            acc = (acc as u128 * base as u128 % p as u128) as u64;
        }
        base = (base as u128 * base as u128 % p as u128) as u64;
        e >>= 1;
    }
    acc
}

/// Convenience for tests and callers working with exact rationals.
pub fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::rational_valuation;
    use num_traits::One;

    fn m(p: u64, rows: &[Vec<&str>]) -> PadicMatrix {
        PadicMatrix::from_strs(p, rows).unwrap()
    }

    fn exact_det(rows: &[Vec<BigRational>]) -> BigRational {
        let n = rows.len();
        if n == 0 {
            return BigRational::one();
        }
        let mut acc = BigRational::zero();
        for j in 0..n {
            let minor: Vec<Vec<BigRational>> = rows[1..]
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .filter(|(c, _)| *c != j)
                        .map(|(_, x)| x.clone())
                        .collect()
                })
                .collect();
            let term = &rows[0][j] * exact_det(&minor);
            if j % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        acc
    }

    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        if n < k {
            return vec![];
        }
        let mut out = subsets(n - 1, k);
        for mut s in subsets(n - 1, k - 1) {
            s.push(n - 1);
            out.push(s);
        }
        out
    }

    /// Profile from determinantal divisors: the k-th divisor has valuation
    /// equal to the minimal valuation of the k x k minors.
    fn profile_by_minors(p: u64, rows: &[Vec<BigRational>]) -> SingularProfile {
        let n = rows.len();
        let mut prev = 0i64;
        let mut ks = Vec::new();
        for k in 1..=n {
            let mut best: Option<i64> = None;
            for r in subsets(n, k) {
                for c in subsets(n, k) {
                    let minor: Vec<Vec<BigRational>> = r
                        .iter()
                        .map(|&i| c.iter().map(|&j| rows[i][j].clone()).collect())
                        .collect();
                    let d = exact_det(&minor);
                    if !d.is_zero() {
                        let v = rational_valuation(p, &d);
                        best = Some(best.map_or(v, |b| b.min(v)));
                    }
                }
            }
            match best {
                Some(v) => {
                    ks.push(Some(-(v - prev)));
                    prev = v;
                }
                None => {
                    ks.extend((k..=n).map(|_| None));
                    break;
                }
            }
        }
        SingularProfile::new(p, ks)
    }

    #[test]
    fn products() {
        let x = m(2, &[vec!["1/2", "3"], vec!["5", "7/4"]]);
        assert!(x
            .matmul(&PadicMatrix::identity(2, 2))
            .unwrap()
            .eq_at_precision(&x));
        let a = m(2, &[vec!["2", "0"], vec!["0", "4"]]);
        let b = m(2, &[vec!["1/2", "0"], vec!["0", "1/4"]]);
        assert!(a
            .matmul(&b)
            .unwrap()
            .eq_at_precision(&PadicMatrix::identity(2, 2)));
        assert!(x.transpose().transpose().eq_at_precision(&x));
        assert_eq!(x.matmul(&PadicMatrix::zeros(2, 2, 3)).unwrap().cols(), 3);
        assert!(matches!(
            PadicMatrix::zeros(2, 2, 3).matmul(&x),
            Err(HuaError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn profile_examples() {
        let z = m(
            2,
            &[
                vec!["1/4", "0", "0"],
                vec!["0", "2", "0"],
                vec!["0", "0", "3"],
            ],
        );
        let prof = smith_profile(&z).unwrap();
        assert_eq!(prof, SingularProfile::finite(2, &[2, 0, -1]));
        assert_eq!(prof.gamma(), rational(4, 1));
        assert_eq!(det_norm(&z).unwrap(), rational(2, 1));
        assert_eq!(
            smith_profile(&PadicMatrix::identity(3, 4)).unwrap(),
            SingularProfile::finite(3, &[0; 4])
        );
        let t = m(2, &[vec!["2", "1"], vec!["0", "2"]]);
        assert_eq!(
            smith_profile(&t).unwrap(),
            SingularProfile::finite(2, &[0, -2])
        );
        let d = det(&t).unwrap();
        assert_eq!(d.valuation(), Valuation::Finite(2));
        assert_eq!(d.representative(), rational(4, 1));
        let half = m(2, &[vec!["1/2", "1/2"], vec!["1/2", "1/2"]]);
        let prof = smith_profile(&half).unwrap();
        assert_eq!(prof.ks, vec![Some(1), None]);
        assert_eq!(prof.gamma(), rational(2, 1));
        assert_eq!(prof.det_norm(), rational(0, 1));
        assert!(gamma(&m(3, &[vec!["5", "1"], vec!["9", "1/1"]]))
            .unwrap()
            .is_one());
    }

    #[test]
    fn profile_json() {
        let prof = SingularProfile::new(2, vec![Some(2), None, Some(-1)]);
        assert_eq!(prof.to_json(), json!({"p": 2, "ks": [2, -1, "-inf"]}));
        assert_eq!(SingularProfile::from_json(&prof.to_json()).unwrap(), prof);
    }

    #[test]
    fn matrix_json_roundtrip() {
        let x = m(3, &[vec!["1/3", "-2"], vec!["0", "7/9"]]);
        let back = PadicMatrix::from_json(&x.to_json()).unwrap();
        assert!(back.eq_at_precision(&x));
        assert_eq!(x.to_json()["entries"][0][0], json!("1/3"));
    }

    #[test]
    fn ranks_mod_p() {
        let mut a = vec![vec![1, 2], vec![2, 4]];
        assert_eq!(rank_mod_p(&mut a, 5), 1);
        let mut b = vec![vec![1, 1], vec![1, 0]];
        assert_eq!(rank_mod_p(&mut b, 2), 2);
        let mut c = vec![vec![0, 0, 0], vec![0, 3, 0]];
        assert_eq!(rank_mod_p(&mut c, 3), 0);
    }

    #[test]
    fn inverse_and_det() {
        let x = m(
            3,
            &[
                vec!["1/3", "2", "0"],
                vec!["1", "9", "3"],
                vec!["0", "1", "1/9"],
            ],
        );
        let xi = inverse(&x).unwrap();
        assert!(x
            .matmul(&xi)
            .unwrap()
            .eq_at_precision(&PadicMatrix::identity(3, 3)));
        let rows: Vec<Vec<BigRational>> = (0..3)
            .map(|i| (0..3).map(|j| x.get(i, j).representative()).collect())
            .collect();
        assert_eq!(det(&x).unwrap().representative(), exact_det(&rows));
        let sing = m(2, &[vec!["1", "2"], vec!["2", "4"]]);
        assert_eq!(inverse(&sing).unwrap_err(), HuaError::SingularMatrix);
        assert!(det(&sing).unwrap().is_zero());
    }

    #[test]
    fn inexact_singular_residual_is_reported() {
        let x = m(2, &[vec!["1", "1"], vec!["1", "1"]]).with_precision(8);
        assert!(matches!(
            smith_profile(&x),
            Err(HuaError::PrecisionExhausted(_))
        ));
    }

    #[test]
    fn brute_force_agreement_small_entries() {
        // Every 2x2 matrix with entries in {0, ..., p^2 - 1} / p.
        for p in [2u64, 3] {
            let vals: Vec<BigRational> = (0..p * p).map(|a| rational(a as i64, p as i64)).collect();
            for a in &vals {
                for b in &vals {
                    for c in &vals {
                        for d in &vals {
                            let rows = vec![vec![a.clone(), b.clone()], vec![c.clone(), d.clone()]];
                            let z = PadicMatrix::from_rationals(p, &rows).unwrap();
                            assert_eq!(smith_profile(&z).unwrap(), profile_by_minors(p, &rows));
                            let d = det(&z).unwrap().representative();
                            assert_eq!(d, exact_det(&rows));
                        }
                    }
                }
            }
            for a in &vals {
                let z = PadicMatrix::from_rationals(p, &[vec![a.clone()]]).unwrap();
                assert_eq!(
                    smith_profile(&z).unwrap(),
                    profile_by_minors(p, &[vec![a.clone()]])
                );
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rat() -> impl Strategy<Value = BigRational> {
            (-40i64..40, 1i64..30).prop_map(|(a, b)| rational(a, b))
        }

        fn rat_matrix(n: usize) -> impl Strategy<Value = Vec<Vec<BigRational>>> {
            proptest::collection::vec(proptest::collection::vec(rat(), n), n)
        }

        /// A unimodular integer matrix built from elementary row operations.
        fn unimodular(n: usize) -> impl Strategy<Value = Vec<Vec<i64>>> {
            proptest::collection::vec((0..n, 0..n, -5i64..6), 0..8).prop_map(move |ops| {
                let mut u: Vec<Vec<i64>> = (0..n)
                    .map(|i| (0..n).map(|j| (i == j) as i64).collect())
                    .collect();
                for (i, j, c) in ops {
                    if i != j {
                        for k in 0..n {
                            u[i][k] += c * u[j][k];
                        }
                    }
                }
                u
            })
        }

        proptest! {
            #[test]
            fn two_sided_unit_invariance(
                (z, a, b, p) in (1usize..4).prop_flat_map(|n| (rat_matrix(n), unimodular(n), unimodular(n), prop_oneof![Just(2u64), Just(3)]))
            ) {
                let z = PadicMatrix::from_rationals(p, &z).unwrap();
                let a = PadicMatrix::from_ints(p, &a).unwrap();
                let b = PadicMatrix::from_ints(p, &b).unwrap();
                let azb = a.matmul(&z).unwrap().matmul(&b).unwrap();
                prop_assert_eq!(smith_profile(&azb).unwrap(), smith_profile(&z).unwrap());
            }

            #[test]
            fn agrees_with_minors(z in (1usize..4).prop_flat_map(rat_matrix), p in prop_oneof![Just(2u64), Just(3), Just(5)]) {
                let m = PadicMatrix::from_rationals(p, &z).unwrap();
                prop_assert_eq!(smith_profile(&m).unwrap(), profile_by_minors(p, &z));
            }

            #[test]
            fn gamma_ratio_is_det_norm(z in (1usize..4).prop_flat_map(rat_matrix), p in prop_oneof![Just(2u64), Just(3)]) {
                let m = PadicMatrix::from_rationals(p, &z).unwrap();
                let prof = smith_profile(&m).unwrap();
                prop_assume!(prof.is_full_rank());
                let inv = inverse(&m).unwrap();
                let dn = det_norm(&m).unwrap();
                prop_assert_eq!(gamma(&m).unwrap() / gamma(&inv).unwrap(), dn.clone());
                let ks = prof.finite_ks().unwrap();
                prop_assert_eq!(dn, p_power(p, ks.iter().sum()));
                prop_assert_eq!(smith_profile(&inv).unwrap(), prof.inverse().unwrap());
            }

            #[test]
            fn scaling_law(z in (1usize..4).prop_flat_map(rat_matrix), p in prop_oneof![Just(2u64), Just(3)]) {
                let m = PadicMatrix::from_rationals(p, &z).unwrap();
                let scaled = m.scale(&PadicScalar::from_int(p as i64, p));
                prop_assert_eq!(smith_profile(&scaled).unwrap(), smith_profile(&m).unwrap().shifted(-1));
            }

            #[test]
            fn inexact_inverse_roundtrip(z in (1usize..4).prop_flat_map(rat_matrix), p in prop_oneof![Just(2u64), Just(3)]) {
                let m = PadicMatrix::from_rationals(p, &z).unwrap();
                prop_assume!(!det(&m).unwrap().is_zero());
                let approx = m.with_precision(32);
                let inv = inverse(&approx).unwrap();
                let id = approx.matmul(&inv).unwrap();
                prop_assert!(id.eq_at_precision(&PadicMatrix::identity(p, m.rows())));
                prop_assert!(det(&approx).unwrap().eq_at_precision(&det(&m).unwrap()));
            }
        }
    }
}
