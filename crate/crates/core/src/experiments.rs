//! Randomized checks of the group action: exact identities on random words
//! and paired Monte Carlo estimators for transport and unitarity.

use num_rational::Rational64;
use serde::Serialize;
use serde_json::Value;

use crate::actions::{
    cocycle_check, denominator, denominator_valuation, group_name, moebius, random_group_element,
    rep_apply, rn_exponent, BlockGroupElement, Cylinder,
};
use crate::error::{HuaError, Result};
use crate::linalg::{det, smith_profile_with_corank, PadicMatrix};
use crate::measures::{Flavor, MeasureSpec};
use crate::real::ratio_f64;
use crate::rng::{par_draws, RandomStream};
use crate::samplers::{draw_mu_s, DEFAULT_BAND};
use crate::stats::MeanEstimate;

/// Largest fraction of draws allowed to end in precision exhaustion.
pub const MAX_EXHAUSTED: f64 = 1e-4;
/// Largest fraction of exact trials allowed to hit the singular set or run
/// out of digits.
pub const MAX_SKIPPED: f64 = 1e-2;

/// Draws that exhaust the working precision are counted rather than redrawn,
/// which would bias the law toward well-conditioned points.
pub fn exhausted_as_none<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(HuaError::PrecisionExhausted(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Like [`exhausted_as_none`], also skipping points off the chart of `g`.
pub fn skipped_as_none<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Err(HuaError::BasePointSingular) => Ok(None),
        r => exhausted_as_none(r),
    }
}

pub fn collect_draws<T: Send, F>(rs: &RandomStream, count: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(&mut RandomStream) -> Result<T> + Sync,
{
    par_draws(rs, count, f).into_iter().collect()
}

/// A random point of the flavor's space, drawn from its `s = 0` measure.
pub fn random_point(
    n: usize,
    p: u64,
    flavor: Flavor,
    prec: u32,
    rs: &mut RandomStream,
) -> Result<PadicMatrix> {
    Ok(draw_mu_s(
        &MeasureSpec::new(p, n, Rational64::from(0), flavor)?,
        prec,
        DEFAULT_BAND,
        rs,
    )?
    .z)
}

/// A random word with a flip in the middle, redrawn until it is not
/// parabolic. For odd antisymmetric sizes only even flips exist and the flip
/// covers `n - 1` coordinates.
pub fn non_parabolic(
    n: usize,
    p: u64,
    flavor: Flavor,
    prec: u32,
    rs: &mut RandomStream,
) -> Result<BlockGroupElement> {
    let flip = if flavor == Flavor::ASymm && n % 2 == 1 {
        let mask: Vec<bool> = (0..n).map(|i| i + 1 < n).collect();
        BlockGroupElement::partial_flip(p, &mask, flavor)
    } else {
        BlockGroupElement::flip(p, n, flavor)
    };
    loop {
        let left = random_group_element(n, p, flavor, 2, prec, rs)?;
        let right = random_group_element(n, p, flavor, 2, prec, rs)?;
        let g = left.compose(&flip)?.compose(&right)?;
        if !g.is_parabolic() {
            return Ok(g);
        }
    }
}

/// `gamma(z) = |det(a + zc)| gamma(z * g)`: integral `g` preserves the height
/// of the row space of `(1 z)`.
pub fn height_check(z: &PadicMatrix, g: &BlockGroupElement) -> Result<bool> {
    let corank = g.flavor.structural_corank(z.rows());
    let w = moebius(z, g)?;
    let before = smith_profile_with_corank(z, corank)?.gamma();
    let after = smith_profile_with_corank(&w, corank)?.gamma();
    Ok(before == det(&denominator(z, g)?)?.norm()? * after)
}

/// `(z * g) * g^{-1} = z` at the tracked precision.
pub fn round_trip_check(z: &PadicMatrix, g: &BlockGroupElement) -> Result<bool> {
    Ok(moebius(&moebius(z, g)?, &g.inverse()?)?.eq_at_precision(z))
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityTally {
    pub identity: &'static str,
    pub checked: usize,
    pub failed: usize,
    pub skipped: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RnCheckReport {
    pub group: &'static str,
    pub n: usize,
    pub p: u64,
    pub s: String,
    pub words: usize,
    pub trials: usize,
    pub identities: Vec<IdentityTally>,
    pub passed: bool,
}

pub const IDENTITIES: [&str; 3] = ["chain_rule", "height", "round_trip"];

/// Checks the chain rule, the height identity and the inverse round trip on
/// random words `g1`, `g2` of length `words` and random points `z`.
#[allow(clippy::too_many_arguments)]
pub fn rn_check(
    flavor: Flavor,
    n: usize,
    p: u64,
    s: Rational64,
    words: usize,
    trials: usize,
    prec: u32,
    rs: &RandomStream,
) -> Result<RnCheckReport> {
    let results = collect_draws(rs, trials, |r| -> Result<[Option<bool>; 3]> {
        let g1 = random_group_element(n, p, flavor, words, prec, r)?;
        let g2 = random_group_element(n, p, flavor, words, prec, r)?;
        let z = random_point(n, p, flavor, prec, r)?;
        Ok([
            skipped_as_none(cocycle_check(&g1, &g2, &z, s))?,
            skipped_as_none(height_check(&z, &g1))?,
            skipped_as_none(round_trip_check(&z, &g1))?,
        ])
    })?;
    let identities: Vec<IdentityTally> = IDENTITIES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let checked: Vec<bool> = results.iter().filter_map(|x| x[i]).collect();
            let failed = checked.iter().filter(|x| !**x).count();
            let skipped = trials - checked.len();
            IdentityTally {
                identity: name,
                checked: checked.len(),
                failed,
                skipped,
                passed: failed == 0 && skipped as f64 <= MAX_SKIPPED * trials as f64,
            }
        })
        .collect();
    let passed = identities.iter().all(|t| t.passed);
    Ok(RnCheckReport {
        group: group_name(flavor),
        n,
        p,
        s: s.to_string(),
        words,
        trials,
        identities,
        passed,
    })
}

/// A mean of paired differences that should vanish.
#[derive(Clone, Debug, Serialize)]
pub struct PairedEstimate {
    pub f: Value,
    pub estimate: MeanEstimate,
    pub sigmas: f64,
    pub exhausted: usize,
    pub passed: bool,
}

fn paired(fs: &[Cylinder], results: Vec<Option<Vec<f64>>>, sigmas: f64) -> Vec<PairedEstimate> {
    let kept: Vec<Vec<f64>> = results.iter().flatten().cloned().collect();
    let exhausted = results.len() - kept.len();
    fs.iter()
        .enumerate()
        .map(|(i, f)| {
            let xs: Vec<f64> = kept.iter().map(|v| v[i]).collect();
            let estimate = MeanEstimate::from_samples(&xs);
            let dev = estimate.sigmas_from(0.0);
            PairedEstimate {
                f: f.to_json(),
                estimate,
                sigmas: dev,
                exhausted,
                passed: dev <= sigmas && exhausted as f64 <= MAX_EXHAUSTED * results.len() as f64,
            }
        })
        .collect()
}

/// `f(w)` cut off where `|det(a + zc)| > p^3` for `w = z * g`, which keeps
/// the weighted transport estimator square integrable at `s = 1`. By the
/// chain rule `v(det(a + zc)) = -v(det(a' + w c'))` with `g^{-1} = (a' b'; c' d')`.
pub fn truncated(f: &Cylinder, ginv: &BlockGroupElement, w: &PadicMatrix) -> Result<f64> {
    if denominator_valuation(w, ginv)? > 3 {
        return Ok(0.0);
    }
    Ok(f.eval(w)?.re)
}

/// Paired estimates of `E[F(z * g) |det(a + zc)|^s] - E[F(z)]` under `mu_s`
/// for the truncations `F` of each `f`.
pub fn transport_test(
    spec: &MeasureSpec,
    g: &BlockGroupElement,
    fs: &[Cylinder],
    samples: usize,
    prec: u32,
    sigmas: f64,
    rs: &RandomStream,
) -> Result<Vec<PairedEstimate>> {
    let ginv = g.inverse()?;
    let p = spec.p as f64;
    let results = collect_draws(rs, samples, |r| -> Result<Option<Vec<f64>>> {
        let z = draw_mu_s(spec, prec, 0, r)?.z;
        exhausted_as_none((|| {
            let w = moebius(&z, g)?;
            let rn = p.powf(ratio_f64(rn_exponent(&z, g, spec.s)?));
            fs.iter()
                .map(|f| Ok(truncated(f, &ginv, &w)? * rn - truncated(f, &ginv, &z)?))
                .collect()
        })())
    })?;
    Ok(paired(fs, results, sigmas))
}

/// Paired estimates of `E|rho(g) f|^2 - E|f|^2` under `mu_s`.
#[allow(clippy::too_many_arguments)]
pub fn unitarity_test(
    spec: &MeasureSpec,
    g: &BlockGroupElement,
    fs: &[Cylinder],
    theta: f64,
    samples: usize,
    prec: u32,
    sigmas: f64,
    rs: &RandomStream,
) -> Result<Vec<PairedEstimate>> {
    let results = collect_draws(rs, samples, |r| -> Result<Option<Vec<f64>>> {
        let z = draw_mu_s(spec, prec, 0, r)?.z;
        exhausted_as_none(
            fs.iter()
                .map(|f| {
                    let rho = rep_apply(|w: &PadicMatrix| f.eval(w), g, spec.s, theta);
                    Ok(rho(&z)?.norm_sqr() - f.eval(&z)?.norm_sqr())
                })
                .collect(),
        )
    })?;
    Ok(paired(fs, results, sigmas))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities_hold_on_short_words() {
        let rs = RandomStream::new(3);
        for flavor in [Flavor::Gl, Flavor::Symm, Flavor::ASymm] {
            let rep = rn_check(flavor, 2, 3, Rational64::new(3, 2), 3, 60, 48, &rs).unwrap();
            assert!(rep.passed, "{rep:?}");
        }
        let rep = rn_check(Flavor::ASymm, 3, 2, Rational64::from(1), 2, 40, 48, &rs).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn non_parabolic_words_move_the_origin() {
        let mut rs = RandomStream::new(4);
        for flavor in [Flavor::Gl, Flavor::Symm, Flavor::ASymm] {
            let g = non_parabolic(3, 2, flavor, 32, &mut rs).unwrap();
            assert!(g.is_member());
            assert!(!g.is_parabolic(), "{flavor:?} {}", g.matrix());
        }
    }
}
