//! Seedable samplers: Haar measure on `GL(n, O_p)`, the invariant measure
//! `mu_0^n` and the Hua measures `mu_s^n`.
//!
//! Every entry is drawn digit by digit, so a sample at precision `N` is the
//! exact measure pushed to `O_p / p^N`. When a computation runs out of digits
//! the same draw is extended with fresh higher digits, which leaves the
//! distribution untouched.

use num_bigint::BigUint;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Pow, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{HuaError, Result};
use crate::linalg::{
    rank_mod_p, smith_profile_with_corank, solve_left, PadicMatrix, SingularProfile,
};
use crate::measures::{growth_exponent, mass_beyond_level, Flavor, MeasureSpec};
use crate::padic::{format_rational, p_power, PadicScalar};
use crate::real::ratio_f64;
use crate::rng::RandomStream;

pub const MAX_PRECISION: u32 = 256;

/// Default truncation level for the symmetric and alternating flavors.
pub const DEFAULT_BAND: usize = 8;

/// Uniform integer in `[0, p^k)`.
fn uniform_power(p: u64, k: u32, rs: &mut RandomStream) -> BigUint {
    if let Some(q) = p.checked_pow(k) {
        return BigUint::from(rs.below(q));
    }
    let mut e = 1u32;
    while p.checked_pow(e + 1).is_some_and(|q| q < 1 << 62) {
        e += 1;
    }
    let q = p.pow(e);
    let mut acc = BigUint::zero();
    let mut scale = BigUint::one();
    let mut left = k;
    while left > 0 {
        let step = left.min(e);
        let bound = if step == e { q } else { p.pow(step) };
        acc += &scale * BigUint::from(rs.below(bound));
        scale *= bound;
        left -= step;
    }
    acc
}

/// Integers known modulo `p^m`, one per matrix entry, that can be refined.
struct Draws {
    p: u64,
    m: u32,
    xs: Vec<BigUint>,
}

impl Draws {
    fn uniform(p: u64, m: u32, count: usize, rs: &mut RandomStream) -> Self {
        Draws {
            p,
            m,
            xs: (0..count).map(|_| uniform_power(p, m, rs)).collect(),
        }
    }

    /// Lifts of the given residues mod `p`.
    fn lifting(p: u64, m: u32, residues: &[u64], rs: &mut RandomStream) -> Self {
        let xs = residues
            .iter()
            .map(|&r| BigUint::from(r) + uniform_power(p, m - 1, rs) * p)
            .collect();
        Draws { p, m, xs }
    }

    /// Appends digits up to precision `m_new`.
    fn extend(&mut self, m_new: u32, rs: &mut RandomStream) {
        let scale = BigUint::from(self.p).pow(self.m);
        for x in &mut self.xs {
            *x += uniform_power(self.p, m_new - self.m, rs) * &scale;
        }
        self.m = m_new;
    }

    fn scalar(&self, idx: usize) -> PadicScalar {
        PadicScalar::from_residue_big(self.p, &self.xs[idx], self.m)
    }
}

fn next_precision(m: u32) -> Result<u32> {
    if m >= MAX_PRECISION {
        Err(HuaError::PrecisionEscalation(m))
    } else {
        Ok((2 * m).min(MAX_PRECISION))
    }
}

fn check_args(n: usize, p: u64, prec: u32) -> Result<()> {
    if n == 0 {
        return Err(HuaError::InvalidInput("n must be positive".into()));
    }
    if !crate::measures::is_prime(p) {
        return Err(HuaError::InvalidInput(format!("{p} is not prime")));
    }
    if prec == 0 || prec > MAX_PRECISION {
        return Err(HuaError::InvalidInput(format!(
            "precision must lie in 1..={MAX_PRECISION}"
        )));
    }
    Ok(())
}

/// `n x n` matrix with i.i.d. entries uniform on `O_p / p^prec`.
pub fn sample_integral_matrix(
    n: usize,
    p: u64,
    prec: u32,
    rs: &mut RandomStream,
) -> Result<PadicMatrix> {
    check_args(n, p, prec)?;
    let d = Draws::uniform(p, prec, n * n, rs);
    Ok(PadicMatrix::from_fn(p, n, n, |i, j| d.scalar(i * n + j)))
}

/// Residues of a `rows x cols` matrix of rank `rows` over `F_p`, by rejection
/// from uniform residues, with the number of attempts.
fn full_rank_residues(rows: usize, cols: usize, p: u64, rs: &mut RandomStream) -> (Vec<u64>, u64) {
    let mut attempts = 0;
    loop {
        attempts += 1;
        let r: Vec<u64> = (0..rows * cols).map(|_| rs.below(p)).collect();
        let mut m: Vec<Vec<u64>> = r.chunks(cols).map(<[u64]>::to_vec).collect();
        if rank_mod_p(&mut m, p) == rows {
            return (r, attempts);
        }
    }
}

#[derive(Clone, Debug)]
pub struct HaarDraw {
    pub g: PadicMatrix,
    /// Uniform integral matrices drawn until one was invertible mod `p`.
    pub attempts: u64,
}

/// Haar measure on `GL(n, O_p)` by rejection: a uniform integral matrix is
/// kept iff it is invertible mod `p`. The residues are drawn and tested first
/// and the higher digits only for the accepted one, which is the same law.
pub fn sample_haar_gl_counted(
    n: usize,
    p: u64,
    prec: u32,
    rs: &mut RandomStream,
) -> Result<HaarDraw> {
    check_args(n, p, prec)?;
    let (res, attempts) = full_rank_residues(n, n, p, rs);
    let d = Draws::lifting(p, prec, &res, rs);
    Ok(HaarDraw {
        g: PadicMatrix::from_fn(p, n, n, |i, j| d.scalar(i * n + j)),
        attempts,
    })
}

pub fn sample_haar_gl(n: usize, p: u64, prec: u32, rs: &mut RandomStream) -> Result<PadicMatrix> {
    Ok(sample_haar_gl_counted(n, p, prec, rs)?.g)
}

#[derive(Clone, Debug)]
pub struct Mu0Draw {
    pub z: PadicMatrix,
    pub profile: SingularProfile,
    /// Digits per entry of the group element after any escalation.
    pub precision: u32,
}

/// `z = a^{-1} b` for `g = (a b; c d)` Haar on `GL(2n, O_p)`: the image of the
/// base point `0` under `g`, distributed as `mu_0^n`. Only the top block row
/// of `g` enters, and it is a uniform `n x 2n` matrix of full rank mod `p`.
pub fn sample_mu0_profiled(n: usize, p: u64, prec: u32, rs: &mut RandomStream) -> Result<Mu0Draw> {
    check_args(n, p, prec)?;
    let (res, _) = full_rank_residues(n, 2 * n, p, rs);
    let mut d = Draws::lifting(p, prec, &res, rs);
    loop {
        let a = PadicMatrix::from_fn(p, n, n, |i, j| d.scalar(i * 2 * n + j));
        let b = PadicMatrix::from_fn(p, n, n, |i, j| d.scalar(i * 2 * n + n + j));
        let outcome =
            solve_left(&a, &b).and_then(|z| smith_profile_with_corank(&z, 0).map(|k| (z, k)));
        match outcome {
            Ok((z, profile)) => {
                return Ok(Mu0Draw {
                    z,
                    profile,
                    precision: d.m,
                })
            }
            Err(HuaError::PrecisionExhausted(_)) => {
                let m = next_precision(d.m)?;
                d.extend(m, rs);
            }
            Err(e) => return Err(e),
        }
    }
}

pub fn sample_mu0(n: usize, p: u64, prec: u32, rs: &mut RandomStream) -> Result<PadicMatrix> {
    Ok(sample_mu0_profiled(n, p, prec, rs)?.z)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Accepted,
    Rejected,
    Exhausted,
}

/// One proposal of a `mu_s^n` sampler. The importance weight is
/// `p^{log_weight} * factor`, unnormalized: estimators divide by the total
/// weight. Exact-rejection samplers always report weight `1`.
#[derive(Clone, Debug)]
pub struct WeightedSample {
    pub z: PadicMatrix,
    pub profile: SingularProfile,
    pub log_weight: Rational64,
    pub factor: BigRational,
    pub status: SampleStatus,
    pub precision: u32,
}

impl WeightedSample {
    pub fn weight(&self) -> f64 {
        let f = self.factor.to_f64().unwrap_or(f64::NAN);
        f * (self.z.prime() as f64).powf(ratio_f64(self.log_weight))
    }

    pub fn is_weighted(&self) -> bool {
        !self.log_weight.is_zero() || !self.factor.is_one()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "z": self.z.to_json(),
            "profile": self.profile.to_json(),
            "log_p_weight": self.log_weight.to_string(),
            "factor": format_rational(&self.factor),
            "status": self.status,
            "precision": self.precision,
        })
    }
}

/// Accept with probability `p^{-x}` for rational `x >= 0`, exactly: with
/// `U = k / 2^53` and `x = a/b`, accept iff `k^b p^a < 2^{53 b}`.
fn accept_with(p: u64, x: Rational64, rs: &mut RandomStream) -> bool {
    debug_assert!(!x.is_negative());
    let k = BigUint::from(rs.bits53());
    let (a, b) = (*x.numer() as u32, *x.denom() as u32);
    Pow::pow(&k, b) * BigUint::from(p).pow(a) < BigUint::one() << (53 * b as usize)
}

/// One proposal for `mu_s^n`.
///
/// * GL, `s >= 0`: `z ~ mu_0^n` accepted with probability `gamma(z)^{-s}`.
/// * GL, `-1 < s < 0`: `z ~ mu_0^n` with weight `gamma(z)^{-s}`.
/// * Symmetric and alternating: a shell `b <= band` is drawn with probability
///   proportional to `p^{-rho b}`, where `p^{-rho}` is the decay rate of the
///   level masses, then `z` uniform on `p^{-b} X \ p^{1-b} X` for the integral
///   points `X` of the space (all of `X` when `b = 0`). The weight is the
///   density over the proposal density. Mass beyond the band is dropped; see
///   [`truncation_bias`].
pub fn sample_mu_s(
    spec: &MeasureSpec,
    prec: u32,
    band: usize,
    rs: &mut RandomStream,
) -> Result<WeightedSample> {
    check_args(spec.n, spec.p, prec)?;
    match spec.flavor {
        Flavor::Gl => {
            let d = sample_mu0_profiled(spec.n, spec.p, prec, rs)?;
            let g = Rational64::from(d.profile.gamma_exponent());
            let (status, log_weight) = if spec.s.is_negative() {
                (SampleStatus::Accepted, -spec.s * g)
            } else if spec.s.is_zero() || accept_with(spec.p, spec.s * g, rs) {
                (SampleStatus::Accepted, Rational64::zero())
            } else {
                (SampleStatus::Rejected, Rational64::zero())
            };
            Ok(WeightedSample {
                z: d.z,
                profile: d.profile,
                log_weight,
                factor: BigRational::one(),
                status,
                precision: d.precision,
            })
        }
        Flavor::Symm | Flavor::ASymm => shell_sample(spec, prec, band, rs),
    }
}

/// Draws proposals until one is accepted.
pub fn draw_mu_s(
    spec: &MeasureSpec,
    prec: u32,
    band: usize,
    rs: &mut RandomStream,
) -> Result<WeightedSample> {
    loop {
        let w = sample_mu_s(spec, prec, band, rs)?;
        if w.status == SampleStatus::Accepted {
            return Ok(w);
        }
    }
}

/// Upper bound on the `mu_s^n` mass the shell proposal never reaches.
pub fn truncation_bias(spec: &MeasureSpec, band: usize) -> Result<f64> {
    match spec.flavor {
        Flavor::Gl => Ok(0.0),
        _ => mass_beyond_level(spec, band),
    }
}

/// Free coordinates `(i, j)` of the flavor's space.
fn free_entries(flavor: Flavor, n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            if flavor == Flavor::Symm || i != j {
                out.push((i, j));
            }
        }
    }
    out
}

fn shell_sample(
    spec: &MeasureSpec,
    prec: u32,
    band: usize,
    rs: &mut RandomStream,
) -> Result<WeightedSample> {
    let (p, n, flavor) = (spec.p, spec.n, spec.flavor);
    let e = spec.exponent();
    let corank = flavor.structural_corank(n);
    let Some(growth) = growth_exponent(flavor, n, e) else {
        // Only the zero matrix lives here.
        let z = PadicMatrix::zeros(p, n, n);
        let profile = SingularProfile::new(p, vec![None; n]);
        return Ok(WeightedSample {
            z,
            profile,
            log_weight: Rational64::zero(),
            factor: BigRational::one(),
            status: SampleStatus::Accepted,
            precision: prec,
        });
    };
    if !growth.is_negative() {
        return Err(HuaError::ConvergenceDomain(format!(
            "{spec} is not normalizable"
        )));
    }
    let rho = -growth;
    let pf = p as f64;
    let probs: Vec<f64> = (0..=band)
        .map(|b| pf.powf(-ratio_f64(rho) * b as f64))
        .collect();
    let total: f64 = probs.iter().sum();
    let u = rs.unit_f64() * total;
    let mut b = band;
    let mut acc = 0.0;
    for (i, w) in probs.iter().enumerate() {
        acc += w;
        if u < acc {
            b = i;
            break;
        }
    }
    let free = free_entries(flavor, n);
    let residues: Vec<u64> = loop {
        let r: Vec<u64> = free.iter().map(|_| rs.below(p)).collect();
        if b == 0 || r.iter().any(|&x| x != 0) {
            break r;
        }
    };
    let mut d = Draws::lifting(p, prec, &residues, rs);
    loop {
        let mut z = PadicMatrix::zeros(p, n, n);
        for (idx, &(i, j)) in free.iter().enumerate() {
            let x = d.scalar(idx).shift(-(b as i64));
            if i != j {
                let y = if flavor == Flavor::Symm {
                    x.clone()
                } else {
                    x.neg()
                };
                z.set(j, i, y);
            }
            z.set(i, j, x);
        }
        match smith_profile_with_corank(&z, corank) {
            Ok(profile) => {
                let dim = flavor.dim(n) as i64;
                let g = Rational64::from(profile.gamma_exponent());
                let log_weight = -e * g + (rho + dim) * b as i64;
                let factor = if b == 0 {
                    BigRational::one()
                } else {
                    BigRational::one() - p_power(p, -dim)
                };
                return Ok(WeightedSample {
                    z,
                    profile,
                    log_weight,
                    factor,
                    status: SampleStatus::Accepted,
                    precision: d.m,
                });
            }
            Err(HuaError::PrecisionExhausted(_)) => {
                let m = next_precision(d.m)?;
                d.extend(m, rs);
            }
            Err(e) => return Err(e),
        }
    }
}
