//! Hua constants, strata volumes, the stratified series for the Hua integral,
//! and the measures `mu_s^n` on the three matrix spaces.
//!
//! Strata are counted with a Schur-complement chain: if an integral `z` has
//! rank `r` modulo `p`, it is `GL(n, O_p)`-equivalent to `diag(1_r, p z')`
//! with `z'` again Haar distributed on the same kind of space of size `n - r`.
//! A profile therefore has volume `prod_t N(s_t, r_t) / p^{d(s_t)}`, where
//! `N(s, r)` counts rank-`r` matrices of size `s` over `F_p`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock, RwLock};

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{HuaError, Result};
use crate::linalg::{rank_mod_p, smith_profile, PadicMatrix, SingularProfile};
use crate::padic::p_power;
use crate::real::{ratio_f64, Real};

/// Enumeration budget for rank counts of symmetric and alternating matrices.
const MAX_ENUMERATION: u64 = 20_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    #[serde(rename = "gl")]
    Gl,
    Symm,
    #[serde(rename = "asymm")]
    ASymm,
}

impl Flavor {
    /// Dimension of the flavor's space of `n x n` matrices.
    pub fn dim(self, n: usize) -> u64 {
        let n = n as u64;
        match self {
            Flavor::Gl => n * n,
            Flavor::Symm => n * (n + 1) / 2,
            Flavor::ASymm => n * n.saturating_sub(1) / 2,
        }
    }

    /// Number of `-inf` exponents every matrix of the space carries.
    pub fn structural_corank(self, n: usize) -> usize {
        match self {
            Flavor::ASymm => n % 2,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Flavor::Gl => "gl",
            Flavor::Symm => "symm",
            Flavor::ASymm => "asymm",
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Flavor {
    type Err = HuaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gl" => Ok(Flavor::Gl),
            "symm" | "sym" | "sp" => Ok(Flavor::Symm),
            "asymm" | "asym" | "o" => Ok(Flavor::ASymm),
            _ => Err(HuaError::InvalidInput(format!("unknown flavor {s:?}"))),
        }
    }
}

pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Parameters of a Hua measure `mu_s^n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MeasureSpec {
    pub p: u64,
    pub n: usize,
    pub s: Rational64,
    pub flavor: Flavor,
}

impl MeasureSpec {
    pub fn new(p: u64, n: usize, s: Rational64, flavor: Flavor) -> Result<Self> {
        if !is_prime(p) {
            return Err(HuaError::InvalidInput(format!("{p} is not prime")));
        }
        if n == 0 {
            return Err(HuaError::InvalidInput("n must be positive".into()));
        }
        let ok = match flavor {
            Flavor::Gl => s > Rational64::from(-1),
            Flavor::Symm | Flavor::ASymm => s >= Rational64::zero(),
        };
        if !ok {
            return Err(HuaError::ConvergenceDomain(format!(
                "s = {s} is not allowed for the {flavor} flavor"
            )));
        }
        Ok(MeasureSpec { p, n, s, flavor })
    }

    pub fn gl(p: u64, n: usize, s: i64) -> Result<Self> {
        Self::new(p, n, Rational64::from(s), Flavor::Gl)
    }

    /// Exponent `e` of the density `gamma^{-e}`.
    pub fn exponent(&self) -> Rational64 {
        let n = self.n as i64;
        match self.flavor {
            Flavor::Gl => self.s + 2 * n,
            Flavor::Symm => self.s + n + 1,
            Flavor::ASymm => self.s + n - 1,
        }
    }

    pub fn dim(&self) -> u64 {
        self.flavor.dim(self.n)
    }

    /// Total mass of `gamma^{-e} dvol`: the Hua constant for GL, the
    /// certified series value for the other flavors.
    pub fn normalization(&self) -> Result<Real> {
        match self.flavor {
            Flavor::Gl => hua_constant(self.n, self.exponent(), self.p),
            _ => {
                let (value, err) = normalization_numeric(self)?;
                Ok(Real::Approx { value, err })
            }
        }
    }

    /// Density of `mu_s^n` at `z` against the additive Haar measure.
    pub fn density(&self, z: &PadicMatrix) -> Result<Real> {
        let g = smith_profile(z)?.gamma_exponent();
        Ok(Real::p_pow(self.p, -self.exponent() * g).div(&self.normalization()?))
    }

    /// `mu_s^n` of the stratum with the given profile.
    pub fn profile_mass(&self, profile: &SingularProfile) -> Result<Real> {
        let vol = Real::Exact(stratum_volume(profile, self.flavor)?);
        let w = Real::p_pow(self.p, -self.exponent() * profile.gamma_exponent());
        Ok(vol.mul(&w).div(&self.normalization()?))
    }
}

impl Serialize for MeasureSpec {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = ser.serialize_struct("MeasureSpec", 4)?;
        st.serialize_field("p", &self.p)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("s", &self.s.to_string())?;
        st.serialize_field("flavor", &self.flavor)?;
        st.end()
    }
}

impl fmt::Display for MeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}(p={}, n={}, s={})",
            self.flavor, self.p, self.n, self.s
        )
    }
}

/// `c(n, alpha) = prod_{j=1}^n (1 - p^{-alpha+n-j}) / (1 - p^{-alpha+n+j-1})`,
/// the total mass of `gamma^{-alpha} dvol` on `Mat(n, Q_p)`.
pub fn hua_constant(n: usize, alpha: Rational64, p: u64) -> Result<Real> {
    if n == 0 || !is_prime(p) {
        return Err(HuaError::InvalidInput("need n >= 1 and p prime".into()));
    }
    let ni = n as i64;
    if alpha <= Rational64::from(2 * ni - 1) {
        return Err(HuaError::ConvergenceDomain(format!(
            "the Hua integral diverges for alpha = {alpha} <= {}",
            2 * ni - 1
        )));
    }
    if alpha.is_integer() {
        let a = alpha.to_integer();
        let mut c = BigRational::one();
        for j in 1..=ni {
            let num = BigRational::one() - p_power(p, -a + ni - j);
            let den = BigRational::one() - p_power(p, -a + ni + j - 1);
            c = c * num / den;
        }
        Ok(Real::Exact(c))
    } else {
        let a = ratio_f64(alpha);
        let pf = p as f64;
        let mut c = Real::one();
        for j in 1..=ni {
            let num = Real::from_f64(-(pf.ln() * (-a + (ni - j) as f64)).exp_m1());
            let den = Real::from_f64(-(pf.ln() * (-a + (ni + j - 1) as f64)).exp_m1());
            c = c.mul(&num).div(&den);
        }
        Ok(c)
    }
}

/// `vol(GL(n, O_p)) = prod_{j=1}^n (1 - p^{-j})`.
pub fn vol_gl(n: usize, p: u64) -> BigRational {
    (1..=n as i64).fold(BigRational::one(), |acc, j| {
        acc * (BigRational::one() - p_power(p, -j))
    })
}

/// Counts invertible `n x n` matrices over `F_p` by enumerating all of them.
pub fn count_invertible_mod_p(n: usize, p: u64) -> Result<u64> {
    let total = checked_count(p, (n * n) as u64)?;
    let mut count = 0;
    let mut digits = vec![0u64; n * n];
    for _ in 0..total {
        let mut m: Vec<Vec<u64>> = digits.chunks(n).map(<[u64]>::to_vec).collect();
        if rank_mod_p(&mut m, p) == n {
            count += 1;
        }
        increment(&mut digits, p);
    }
    Ok(count)
}

fn checked_count(p: u64, d: u64) -> Result<u64> {
    match p.checked_pow(d as u32) {
        Some(t) if t <= MAX_ENUMERATION => Ok(t),
        _ => Err(HuaError::Unsupported(format!(
            "enumerating {p}^{d} matrices is too expensive"
        ))),
    }
}

fn increment(digits: &mut [u64], p: u64) {
    for x in digits.iter_mut() {
        *x += 1;
        if *x < p {
            return;
        }
        *x = 0;
    }
}

type RankKey = (Flavor, u64, usize);

fn rank_cache() -> &'static RwLock<HashMap<RankKey, Arc<Vec<BigInt>>>> {
    static CACHE: OnceLock<RwLock<HashMap<RankKey, Arc<Vec<BigInt>>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// `N(m, r)` for `r = 0..=m`: the number of rank-`r` matrices of size `m`
/// over `F_p` in the flavor's space.
pub fn rank_counts(flavor: Flavor, p: u64, m: usize) -> Result<Arc<Vec<BigInt>>> {
    let key = (flavor, p, m);
    if let Some(v) = rank_cache().read().unwrap().get(&key) {
        return Ok(v.clone());
    }
    let counts = Arc::new(match flavor {
        Flavor::Gl => gl_rank_counts(p, m),
        _ => enumerate_rank_counts(flavor, p, m)?,
    });
    rank_cache().write().unwrap().insert(key, counts.clone());
    Ok(counts)
}

/// Row-by-row recurrence: a new row either lies in the current row space
/// (`p^r` choices) or raises the rank (`p^m - p^r` choices).
fn gl_rank_counts(p: u64, m: usize) -> Vec<BigInt> {
    let pb = BigInt::from(p);
    let mut counts = vec![BigInt::zero(); m + 1];
    counts[0] = BigInt::one();
    for _ in 0..m {
        let mut next = vec![BigInt::zero(); m + 1];
        for r in 0..=m {
            if counts[r].is_zero() {
                continue;
            }
            next[r] += &counts[r] * pb.pow(r as u32);
            if r < m {
                next[r + 1] += &counts[r] * (pb.pow(m as u32) - pb.pow(r as u32));
            }
        }
        counts = next;
    }
    counts
}

fn enumerate_rank_counts(flavor: Flavor, p: u64, m: usize) -> Result<Vec<BigInt>> {
    let d = flavor.dim(m);
    let total = checked_count(p, d)?;
    let slots: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (i..m).map(move |j| (i, j)))
        .filter(|&(i, j)| flavor != Flavor::ASymm || i < j)
        .collect();
    let mut counts = vec![0u64; m + 1];
    let mut digits = vec![0u64; slots.len()];
    for _ in 0..total {
        let mut a = vec![vec![0u64; m]; m];
        for (&(i, j), &x) in slots.iter().zip(&digits) {
            a[i][j] = x;
            a[j][i] = if flavor == Flavor::ASymm {
                (p - x) % p
            } else {
                x
            };
        }
        counts[rank_mod_p(&mut a, p)] += 1;
        increment(&mut digits, p);
    }
    Ok(counts.into_iter().map(BigInt::from).collect())
}

/// Volume of `{z in flavor space : profile(z) = ks}`.
///
/// Profiles whose `-inf` entries exceed the structural corank describe
/// lower-dimensional sets and get volume zero.
pub fn stratum_volume(profile: &SingularProfile, flavor: Flavor) -> Result<BigRational> {
    let p = profile.p;
    let n = profile.n();
    let finite: Vec<i64> = profile.ks.iter().flatten().copied().collect();
    let rem = n - finite.len();
    if flavor.dim(rem) != 0 {
        return Ok(BigRational::zero());
    }
    let Some(&k1) = finite.first() else {
        return Ok(BigRational::one());
    };
    let shift = k1.max(0);
    let a: Vec<i64> = finite.iter().map(|k| shift - k).collect();
    let top = *a.last().unwrap();
    let mut vol = BigRational::one();
    let mut size = n;
    for t in 0..=top {
        let r = a.iter().filter(|&&x| x == t).count();
        let counts = rank_counts(flavor, p, size)?;
        vol *= BigRational::new(
            counts[r].clone(),
            BigInt::from(p).pow(flavor.dim(size) as u32),
        );
        if vol.is_zero() {
            return Ok(vol);
        }
        size -= r;
    }
    debug_assert_eq!(size, rem);
    Ok(vol * p_power(p, shift * flavor.dim(n) as i64))
}

/// `g(l) = d(n) - d(n-l) - alpha l`: log_p of the per-level weight once `l`
/// exponents are positive. The series converges iff `g < 0` for every
/// admissible `l >= 1`.
fn level_exponent(flavor: Flavor, n: usize, alpha: f64, l: usize) -> f64 {
    (flavor.dim(n) - flavor.dim(n - l)) as f64 - alpha * l as f64
}

fn admissible_levels(flavor: Flavor, n: usize) -> impl Iterator<Item = usize> {
    let top = n - flavor.structural_corank(n);
    (1..=top).filter(move |l| flavor != Flavor::ASymm || l % 2 == 0)
}

/// Largest `g(l)` over admissible `l`; `None` when the space has no room for
/// positive exponents at all (alternating `1 x 1`).
fn growth_rate(flavor: Flavor, n: usize, alpha: f64) -> Option<f64> {
    admissible_levels(flavor, n)
        .map(|l| level_exponent(flavor, n, alpha, l))
        .reduce(f64::max)
}

/// Masses `W(L)` of the profiles with `k_1 = L`, for `L = 1..=lmax`, weighted
/// by `p^{-alpha * (sum of positive k)}`.
fn level_masses(
    flavor: Flavor,
    n: usize,
    alpha: Rational64,
    p: u64,
    lmax: usize,
    exact: bool,
) -> Result<Vec<Real>> {
    let dn = flavor.dim(n) as i64;
    // Per-step factor N(s, r) p^{d(n) - d(s) - alpha (n - s + r)}.
    let mut step: Vec<Vec<Real>> = Vec::with_capacity(n + 1);
    for s in 0..=n {
        let counts = rank_counts(flavor, p, s)?;
        let row = (0..=s)
            .map(|r| {
                let e = Rational64::from(dn - flavor.dim(s) as i64) - alpha * (n - s + r) as i64;
                let w = Real::p_pow(p, e)
                    .mul(&Real::Exact(BigRational::from_integer(counts[r].clone())));
                if exact {
                    w
                } else {
                    Real::from_f64(w.value())
                }
            })
            .collect();
        step.push(row);
    }
    let mut state: Vec<Real> = vec![Real::zero(); n + 1];
    for r in 1..=n {
        state[n - r] = step[n][r].clone();
    }
    let mut out = Vec::with_capacity(lmax);
    for _ in 0..lmax {
        out.push(state.iter().fold(Real::zero(), |acc, x| acc.add(x)));
        let mut next = vec![Real::zero(); n + 1];
        for (s, w) in state.iter().enumerate() {
            if w.value() == 0.0 && w.as_exact().is_some_and(Zero::is_zero) {
                continue;
            }
            for r in 0..=s {
                next[s - r] = next[s - r].add(&w.mul(&step[s][r]));
            }
        }
        state = next;
    }
    Ok(out)
}

/// Upper bound on `sum_{L > l0} W(L)` from `W(L) <= c^n C(L+m-2, m-1) p^{G L}`.
fn remainder_bound(flavor: Flavor, n: usize, alpha: f64, p: u64, l0: usize) -> Result<f64> {
    let Some(g) = growth_rate(flavor, n, alpha) else {
        return Ok(0.0);
    };
    let m = admissible_levels(flavor, n).count().max(1) as f64;
    let mut c: f64 = 1.0;
    for s in 1..=n {
        let counts = rank_counts(flavor, p, s)?;
        for (r, count) in counts.iter().enumerate().skip(1) {
            let e = flavor.dim(s - r) as f64 - flavor.dim(s) as f64;
            let x = crate::real::big_to_f64(&BigRational::from_integer(count.clone()))
                * (p as f64).powf(e);
            c = c.max(x);
        }
    }
    let ln_p = (p as f64).ln();
    // ln of C(L+m-2, m-1) p^{gL}, evaluated through the term ratio.
    let ln_term = |l: f64| -> f64 {
        let mut acc = g * l * ln_p;
        for i in 1..(m as usize) {
            acc += ((l + i as f64 - 1.0) / i as f64).ln();
        }
        acc
    };
    // Term ratios decrease toward p^g < 1; once below the midpoint of
    // [p^g, 1] the rest is dominated by a geometric series.
    let cutoff = 0.5 * (1.0 + (g * ln_p).exp());
    let mut total = 0.0;
    let mut l = l0 as f64 + 1.0;
    loop {
        let ratio = (l + m - 1.0) / l * (g * ln_p).exp();
        let term = ln_term(l).exp();
        if ratio < cutoff {
            total += term / (1.0 - ratio);
            break;
        }
        total += term;
        l += 1.0;
        if l > l0 as f64 + 1e6 {
            return Ok(f64::INFINITY);
        }
    }
    Ok(c.powi(n as i32) * total * (1.0 + 1e-9))
}

fn check_convergence(flavor: Flavor, n: usize, alpha: Rational64) -> Result<()> {
    if let Some(g) = growth_rate(flavor, n, ratio_f64(alpha)) {
        let diverges = match flavor {
            Flavor::Gl => alpha <= Rational64::from(2 * n as i64 - 1),
            _ => g >= 0.0,
        };
        if diverges {
            return Err(HuaError::ConvergenceDomain(format!(
                "the {flavor} series diverges for n = {n}, alpha = {alpha}"
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesResult {
    pub partial_sum: Real,
    /// Bound on the mass outside the summed box.
    pub tail_bound: f64,
}

/// `sum_{kmax >= k_1 >= ... >= k_n >= -depth} vol(S_k) p^{-alpha * sum k_j^+}`
/// over the flavor's space, with a bound on the omitted mass.
///
/// The omitted mass splits into profiles with `k_1 <= kmax` but some
/// `k_j < -depth`, which is computed exactly from the level masses, and
/// profiles with `k_1 > kmax`, bounded through the level masses plus a
/// geometric remainder.
pub fn hua_series(
    n: usize,
    alpha: Rational64,
    p: u64,
    kmax: i64,
    depth: i64,
    flavor: Flavor,
) -> Result<SeriesResult> {
    if n == 0 || !is_prime(p) {
        return Err(HuaError::InvalidInput("need n >= 1 and p prime".into()));
    }
    if kmax < 0 || depth < 0 {
        return Err(HuaError::InvalidInput("cutoffs must be nonnegative".into()));
    }
    check_convergence(flavor, n, alpha)?;
    let exact = alpha.is_integer();
    let rem = flavor.structural_corank(n);
    let len = n - rem;
    let mut partial = Real::zero();
    let mut ks = vec![0i64; len];
    enumerate_profiles(&mut ks, 0, kmax, -depth, &mut |ks| {
        let mut full: Vec<Option<i64>> = ks.iter().map(|&k| Some(k)).collect();
        full.extend((0..rem).map(|_| None));
        let prof = SingularProfile::new(p, full);
        let vol = stratum_volume(&prof, flavor)?;
        if vol.is_zero() {
            return Ok(());
        }
        let w = Real::p_pow(p, -alpha * prof.gamma_exponent());
        partial = partial.add(&Real::Exact(vol).mul(&w));
        Ok(())
    })?;
    if !exact {
        partial = Real::Approx {
            value: partial.value(),
            err: partial.error(),
        };
    }
    let kmax_u = kmax as usize;
    let extra = 200usize;
    let inside = level_masses(flavor, n, alpha, p, kmax_u, exact)?
        .iter()
        .fold(Real::one(), |acc, w| acc.add(w));
    let lower = inside.sub(&partial);
    let masses = level_masses(flavor, n, alpha, p, kmax_u + extra, false)?;
    let upper: f64 = masses[kmax_u..]
        .iter()
        .map(|w| w.value() + w.error())
        .sum::<f64>()
        * (1.0 + 1e-12)
        + remainder_bound(flavor, n, ratio_f64(alpha), p, kmax_u + extra)?;
    // Rounded outward so that the bound survives conversion to f64.
    let tail_bound = (lower.value().max(0.0) + lower.error() + upper) * (1.0 + 1e-12);
    Ok(SeriesResult {
        partial_sum: partial,
        tail_bound,
    })
}

fn enumerate_profiles(
    ks: &mut [i64],
    idx: usize,
    hi: i64,
    lo: i64,
    f: &mut dyn FnMut(&[i64]) -> Result<()>,
) -> Result<()> {
    if idx == ks.len() {
        return f(ks);
    }
    let mut k = hi;
    while k >= lo {
        ks[idx] = k;
        enumerate_profiles(ks, idx + 1, k, lo, f)?;
        k -= 1;
    }
    Ok(())
}

/// Profiles of the flavor's space with `kmax >= k_1 >= ... >= k_n >= -depth`
/// (besides structural `-inf` entries) whose stratum is nonempty.
pub fn box_profiles(
    flavor: Flavor,
    n: usize,
    p: u64,
    kmax: i64,
    depth: i64,
) -> Result<Vec<SingularProfile>> {
    let rem = flavor.structural_corank(n);
    let mut out = Vec::new();
    let mut ks = vec![0i64; n - rem];
    enumerate_profiles(&mut ks, 0, kmax, -depth, &mut |ks| {
        let mut full: Vec<Option<i64>> = ks.iter().map(|&k| Some(k)).collect();
        full.extend((0..rem).map(|_| None));
        let prof = SingularProfile::new(p, full);
        if !stratum_volume(&prof, flavor)?.is_zero() {
            out.push(prof);
        }
        Ok(())
    })?;
    Ok(out)
}

/// Total mass of `gamma^{-alpha} dvol` on the flavor's space, as a value and
/// a bound on the truncation error.
pub fn total_mass(flavor: Flavor, n: usize, alpha: Rational64, p: u64) -> Result<(Real, f64)> {
    check_convergence(flavor, n, alpha)?;
    let a = ratio_f64(alpha);
    let mut lmax = 64usize;
    while lmax < 20_000 && remainder_bound(flavor, n, a, p, lmax)? > 1e-18 {
        lmax *= 2;
    }
    let masses = level_masses(flavor, n, alpha, p, lmax, false)?;
    let total = masses.iter().fold(Real::one(), |acc, w| acc.add(w));
    Ok((total, remainder_bound(flavor, n, a, p, lmax)?))
}

/// Exact `G = max_l [d(n) - d(n-l) - alpha l]` over admissible `l`: the level
/// masses decay like `p^{G L}`. `None` when no positive exponent is possible.
pub fn growth_exponent(flavor: Flavor, n: usize, alpha: Rational64) -> Option<Rational64> {
    admissible_levels(flavor, n)
        .map(|l| Rational64::from((flavor.dim(n) - flavor.dim(n - l)) as i64) - alpha * l as i64)
        .max()
}

/// Upper bound on the `mu_s^n` mass of `{z : k_1(z) > b}`, i.e. of the
/// complement of `p^{-b}` times the integral points of the flavor's space.
pub fn mass_beyond_level(spec: &MeasureSpec, b: usize) -> Result<f64> {
    let alpha = spec.exponent();
    check_convergence(spec.flavor, spec.n, alpha)?;
    if growth_exponent(spec.flavor, spec.n, alpha).is_none() {
        return Ok(0.0);
    }
    let a = ratio_f64(alpha);
    let mut lmax = (2 * b).max(64);
    while lmax < 20_000 && remainder_bound(spec.flavor, spec.n, a, spec.p, lmax)? > 1e-18 {
        lmax *= 2;
    }
    let masses = level_masses(spec.flavor, spec.n, alpha, spec.p, lmax, false)?;
    let beyond: f64 = masses.iter().skip(b).map(|w| w.value() + w.error()).sum();
    let total = spec.normalization()?;
    let rem = remainder_bound(spec.flavor, spec.n, a, spec.p, lmax)?;
    Ok((beyond + rem) * (1.0 + 1e-12) / (total.value() - total.error()))
}

fn normalization_cache() -> &'static RwLock<HashMap<MeasureSpec, (f64, f64)>> {
    static CACHE: OnceLock<RwLock<HashMap<MeasureSpec, (f64, f64)>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Normalizing constant of `gamma^{-e} dvol` for the symmetric and
/// alternating flavors, as `(value, error bound)`. Memoized per spec.
pub fn normalization_numeric(spec: &MeasureSpec) -> Result<(f64, f64)> {
    if spec.flavor == Flavor::Gl {
        return Err(HuaError::InvalidInput(
            "GL normalizations are given by the Hua constant".into(),
        ));
    }
    if spec.s < Rational64::zero() {
        return Err(HuaError::ConvergenceDomain(format!("s = {} < 0", spec.s)));
    }
    if let Some(v) = normalization_cache().read().unwrap().get(spec) {
        return Ok(*v);
    }
    let (total, rem) = total_mass(spec.flavor, spec.n, spec.exponent(), spec.p)?;
    let v = (total.value(), total.error() + rem);
    normalization_cache().write().unwrap().insert(*spec, v);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rational;

    fn r64(n: i64) -> Rational64 {
        Rational64::from(n)
    }

    fn exact(r: Real) -> BigRational {
        r.as_exact().cloned().expect("exact value")
    }

    #[test]
    fn hua_constant_examples() {
        assert_eq!(exact(hua_constant(1, r64(3), 2).unwrap()), rational(7, 6));
        assert_eq!(exact(hua_constant(2, r64(4), 2).unwrap()), rational(35, 16));
        let c60 = hua_constant(2, r64(60), 2).unwrap().value();
        assert!((c60 - 1.0).abs() < 2f64.powi(-50));
        assert!(matches!(
            hua_constant(2, r64(3), 2),
            Err(HuaError::ConvergenceDomain(_))
        ));
        for p in [2u64, 3, 5] {
            for a in 2..8 {
                let closed = exact(hua_constant(1, r64(a), p).unwrap());
                let geometric = (BigRational::one() - p_power(p, -a))
                    / (BigRational::one() - p_power(p, 1 - a));
                assert_eq!(closed, geometric);
            }
        }
    }

    #[test]
    fn fractional_alpha_matches_neighbours() {
        let lo = hua_constant(1, r64(3), 2).unwrap().value();
        let hi = hua_constant(1, r64(4), 2).unwrap().value();
        let mid = hua_constant(1, Rational64::new(7, 2), 2).unwrap();
        assert!(mid.value() < lo && mid.value() > hi);
        let direct = (1.0 - 2f64.powf(-3.5)) / (1.0 - 2f64.powf(-2.5));
        assert!((mid.value() - direct).abs() <= mid.error() + 1e-15);
    }

    #[test]
    fn vol_gl_examples() {
        assert_eq!(vol_gl(1, 2), rational(1, 2));
        assert_eq!(vol_gl(2, 2), rational(3, 8));
        assert_eq!(vol_gl(2, 3), rational(16, 27));
        assert_eq!(count_invertible_mod_p(2, 2).unwrap(), 6);
        assert_eq!(count_invertible_mod_p(2, 3).unwrap(), 48);
    }

    #[test]
    fn gl_rank_counts_match_enumeration() {
        for p in [2u64, 3] {
            for m in 1..=3 {
                let total = p.pow((m * m) as u32);
                let mut counts = vec![0u64; m + 1];
                let mut digits = vec![0u64; m * m];
                for _ in 0..total {
                    let mut a: Vec<Vec<u64>> = digits.chunks(m).map(<[u64]>::to_vec).collect();
                    counts[rank_mod_p(&mut a, p)] += 1;
                    increment(&mut digits, p);
                }
                let want: Vec<BigInt> = counts.into_iter().map(BigInt::from).collect();
                assert_eq!(*rank_counts(Flavor::Gl, p, m).unwrap(), want);
            }
        }
    }

    #[test]
    fn alternating_ranks_are_even() {
        let c = rank_counts(Flavor::ASymm, 3, 3).unwrap();
        assert!(c[1].is_zero() && c[3].is_zero());
        assert_eq!(c.iter().sum::<BigInt>(), BigInt::from(27));
        let s = rank_counts(Flavor::Symm, 2, 2).unwrap();
        assert_eq!(*s, vec![BigInt::from(1), BigInt::from(3), BigInt::from(4)]);
    }

    #[test]
    fn stratum_examples() {
        let v =
            |ks: &[i64], p| stratum_volume(&SingularProfile::finite(p, ks), Flavor::Gl).unwrap();
        assert_eq!(v(&[0], 2), rational(1, 2));
        assert_eq!(v(&[1], 2), rational(1, 1));
        assert_eq!(v(&[0, 0], 2), rational(3, 8));
        // Scaling law.
        for ks in [[0i64, -1], [2, -3], [1, 1]] {
            let base = v(&ks, 3);
            let shifted = v(&[ks[0] + 2, ks[1] + 2], 3);
            assert_eq!(shifted, base * p_power(3, 2 * 4));
        }
        let asym = SingularProfile::new(2, vec![Some(0), Some(0), None]);
        assert_eq!(
            stratum_volume(&asym, Flavor::ASymm).unwrap(),
            rational(7, 8)
        );
        let deficient = SingularProfile::new(2, vec![Some(0), None]);
        assert!(stratum_volume(&deficient, Flavor::Gl).unwrap().is_zero());
    }

    /// Counts integral matrices mod p^M by their profile, directly.
    fn brute_force_strata(
        flavor: Flavor,
        n: usize,
        p: u64,
        m: u32,
    ) -> HashMap<SingularProfile, u64> {
        let modulus = p.pow(m);
        let slots: Vec<(usize, usize)> = match flavor {
            Flavor::Gl => (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect(),
            Flavor::Symm => (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect(),
            Flavor::ASymm => (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect(),
        };
        let mut out = HashMap::new();
        let mut digits = vec![0u64; slots.len()];
        for _ in 0..modulus.pow(slots.len() as u32) {
            let mut rows = vec![vec![0i64; n]; n];
            for (&(i, j), &x) in slots.iter().zip(&digits) {
                rows[i][j] = x as i64;
                if i != j && flavor != Flavor::Gl {
                    rows[j][i] = if flavor == Flavor::ASymm {
                        -(x as i64)
                    } else {
                        x as i64
                    };
                }
            }
            let z = PadicMatrix::from_ints(p, &rows).unwrap();
            let prof = smith_profile(&z).unwrap();
            // Only exponents above -M are determined modulo p^M.
            if prof.ks.iter().flatten().all(|&k| k > -(m as i64)) {
                *out.entry(prof).or_insert(0) += 1;
            }
            increment(&mut digits, modulus);
        }
        out
    }

    #[test]
    fn chain_counting_matches_brute_force() {
        for (flavor, n, p, m) in [
            (Flavor::Gl, 2, 2, 2),
            (Flavor::Gl, 2, 3, 2),
            (Flavor::Gl, 2, 2, 3),
            (Flavor::Symm, 2, 2, 3),
            (Flavor::Symm, 2, 3, 2),
            (Flavor::Symm, 3, 2, 2),
            (Flavor::ASymm, 2, 2, 3),
            (Flavor::ASymm, 3, 2, 2),
            (Flavor::ASymm, 4, 2, 1),
        ] {
            let d = flavor.dim(n) as i64;
            for (prof, count) in brute_force_strata(flavor, n, p, m) {
                // Structural -inf entries are certain; count only full-rank-up-to-structure profiles.
                if prof.ks.iter().filter(|k| k.is_none()).count() != flavor.structural_corank(n) {
                    continue;
                }
                let want = BigRational::new(
                    BigInt::from(count),
                    BigInt::from(p).pow((m as i64 * d) as u32),
                );
                assert_eq!(
                    stratum_volume(&prof, flavor).unwrap(),
                    want,
                    "{flavor} {prof}"
                );
            }
        }
    }

    #[test]
    fn series_examples() {
        let r = hua_series(1, r64(3), 2, 12, 6, Flavor::Gl).unwrap();
        let c = exact(hua_constant(1, r64(3), 2).unwrap());
        let diff = crate::real::big_to_f64(&(c - exact(r.partial_sum.clone())));
        assert!(diff >= 0.0 && diff <= r.tail_bound);
        assert!(r.tail_bound < 1e-2);

        let r = hua_series(2, r64(4), 2, 8, 3, Flavor::Gl).unwrap();
        let c = exact(hua_constant(2, r64(4), 2).unwrap());
        let diff = crate::real::big_to_f64(&(c - exact(r.partial_sum)));
        assert!(diff.abs() <= r.tail_bound);

        assert!(matches!(
            hua_series(2, r64(3), 2, 4, 4, Flavor::Gl),
            Err(HuaError::ConvergenceDomain(_))
        ));
        let big = hua_series(2, r64(40), 3, 3, 6, Flavor::Symm).unwrap();
        assert!((big.partial_sum.value() - 1.0).abs() <= big.tail_bound + 1e-12);
    }

    #[test]
    fn integral_strata_have_unit_mass() {
        for flavor in [Flavor::Gl, Flavor::Symm, Flavor::ASymm] {
            for n in 1..=3 {
                let p = 2;
                let len = n - flavor.structural_corank(n);
                let depth = 7;
                let mut total = BigRational::zero();
                let mut ks = vec![0i64; len];
                enumerate_profiles(&mut ks, 0, 0, -depth, &mut |ks| {
                    let mut full: Vec<Option<i64>> = ks.iter().map(|&k| Some(k)).collect();
                    full.extend((0..n - len).map(|_| None));
                    total += stratum_volume(&SingularProfile::new(p, full), flavor)?;
                    Ok(())
                })
                .unwrap();
                let missing = BigRational::one() - total;
                assert!(missing >= BigRational::zero(), "{flavor} n={n}");
                assert!(crate::real::big_to_f64(&missing) < 2f64.powi(-(depth as i32)) * 8.0);
            }
        }
    }

    #[test]
    fn total_mass_matches_closed_form() {
        for (n, p) in [(1usize, 2u64), (1, 3), (2, 2), (2, 3), (3, 2)] {
            for extra in 0..3 {
                let a = r64(2 * n as i64 + extra);
                let (t, rem) = total_mass(Flavor::Gl, n, a, p).unwrap();
                let c = hua_constant(n, a, p).unwrap().value();
                assert!(
                    (t.value() - c).abs() <= rem + 1e-12 * c,
                    "n={n} p={p} a={a}"
                );
            }
        }
    }

    #[test]
    fn flavor_normalizations() {
        let symm1 = MeasureSpec::new(2, 1, r64(0), Flavor::Symm).unwrap();
        let (v, e) = normalization_numeric(&symm1).unwrap();
        assert!((v - 1.5).abs() <= e + 1e-15);
        let asym1 = MeasureSpec::new(5, 1, r64(0), Flavor::ASymm).unwrap();
        let (v, e) = normalization_numeric(&asym1).unwrap();
        assert!((v - 1.0).abs() <= e && e < 1e-12);
        let symm2 = MeasureSpec::new(2, 2, r64(0), Flavor::Symm).unwrap();
        let (v, e) = normalization_numeric(&symm2).unwrap();
        let a = hua_series(2, symm2.exponent(), 2, 10, 10, Flavor::Symm).unwrap();
        let b = hua_series(2, symm2.exponent(), 2, 14, 6, Flavor::Symm).unwrap();
        for r in [a, b] {
            assert!((r.partial_sum.value() - v).abs() <= r.tail_bound + e + 1e-12);
        }
        assert!(MeasureSpec::new(2, 2, Rational64::new(-1, 2), Flavor::Symm).is_err());
        assert!(MeasureSpec::new(2, 2, Rational64::new(-1, 2), Flavor::Gl).is_ok());
        assert!(MeasureSpec::new(4, 2, r64(0), Flavor::Gl).is_err());
    }

    #[test]
    fn density_examples() {
        let spec = MeasureSpec::gl(2, 1, 1).unwrap();
        let z = PadicMatrix::from_strs(2, &[vec!["1/2"]]).unwrap();
        assert_eq!(exact(spec.density(&z).unwrap()), rational(3, 28));
        let one = PadicMatrix::from_strs(2, &[vec!["3"]]).unwrap();
        assert_eq!(exact(spec.density(&one).unwrap()), rational(6, 7));
        let m = spec
            .profile_mass(&SingularProfile::finite(2, &[1]))
            .unwrap();
        assert_eq!(exact(m), rational(3, 28));
    }
}
