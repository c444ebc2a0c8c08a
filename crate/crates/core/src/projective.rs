//! Corner projections between matrix sizes, level-wise actions of infinite
//! band elements, and the Monte Carlo checks that the Hua measures form a
//! projective system.

use std::collections::HashMap;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::actions::{moebius, random_group_element, rn_exponent, BlockGroupElement};
use crate::error::{HuaError, Result};
use crate::linalg::{det, smith_profile_with_corank, PadicMatrix, SingularProfile};
use crate::measures::{box_profiles, Flavor, MeasureSpec};
use crate::padic::{PadicScalar, Valuation};
use crate::rng::{par_draws, RandomStream};
use crate::samplers::{draw_mu_s, sample_integral_matrix, truncation_bias};
use crate::stats::{chi_square_gof, two_sample_chi_square, weighted_chi_square, ChiSquareReport};

/// Top-left `k x k` block.
pub fn corner(z: &PadicMatrix, k: usize) -> Result<PadicMatrix> {
    if k > z.rows() || k > z.cols() {
        return Err(HuaError::ShapeMismatch(format!(
            "corner {k} of a {}x{} matrix",
            z.rows(),
            z.cols()
        )));
    }
    z.block(0, 0, k, k)
}

fn pad(m: &PadicMatrix, size: usize, fill: bool) -> PadicMatrix {
    let p = m.prime();
    PadicMatrix::from_fn(p, size, size, |i, j| {
        if i < m.rows() && j < m.cols() {
            m.get(i, j).clone()
        } else if fill && i == j {
            PadicScalar::one(p)
        } else {
            PadicScalar::zero(p)
        }
    })
}

/// `(a b; c d) -> (diag(a, 1) diag(b, 0); diag(c, 0) diag(d, 1))` at size
/// `size`: the element acting on the first `n` coordinates of each half.
/// The corner of `z * g~` is then `corner(z) * g`.
pub fn embed_generator(g: &BlockGroupElement, size: usize) -> Result<BlockGroupElement> {
    if size < g.n() {
        return Err(HuaError::ShapeMismatch(format!(
            "cannot embed size {} into {size}",
            g.n()
        )));
    }
    BlockGroupElement::unchecked(
        g.flavor,
        pad(&g.a, size, true),
        pad(&g.b, size, false),
        pad(&g.c, size, false),
        pad(&g.d, size, true),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    /// `g - 1` has finitely many nonzero entries.
    FiniteSupport,
    /// Beyond the core, `a` is lower and `d` upper triangular with unit
    /// diagonal.
    UnitDiagonal,
    /// As `UnitDiagonal`, with diagonals that are units but not necessarily 1.
    UnitNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailBlock {
    A,
    B,
    D,
}

/// Entries `(i, i + offset)` of one block outside the core, cycling through
/// `values` with `i`.
#[derive(Clone, Debug)]
pub struct BandRule {
    pub block: TailBlock,
    pub offset: i64,
    pub values: Vec<PadicScalar>,
}

/// An infinite block matrix `(a b; c d)` given by a finite core plus
/// periodic band rules. `c` is supported in the core; beyond it `a` has
/// entries only on and below the diagonal and `d` only on and above it.
#[derive(Clone, Debug)]
pub struct BandElement {
    pub core: BlockGroupElement,
    pub kind: BandKind,
    pub rules: Vec<BandRule>,
    /// Cyclic diagonal units of `a` and `d` beyond the core (`UnitNorm` only).
    pub diag_a: Vec<PadicScalar>,
    pub diag_d: Vec<PadicScalar>,
}

fn is_unit(x: &PadicScalar) -> bool {
    matches!(x.valuation(), Valuation::Finite(0))
}

impl BandElement {
    pub fn new(
        core: BlockGroupElement,
        kind: BandKind,
        rules: Vec<BandRule>,
        diag_a: Vec<PadicScalar>,
        diag_d: Vec<PadicScalar>,
    ) -> Result<Self> {
        if core.flavor != Flavor::Gl {
            return Err(HuaError::Unsupported(
                "band elements are defined for the GL flavor".into(),
            ));
        }
        core.check_membership()?;
        if kind == BandKind::FiniteSupport && !rules.is_empty() {
            return Err(HuaError::InvalidInput(
                "finite-support elements carry no band rules".into(),
            ));
        }
        if kind == BandKind::UnitNorm {
            if diag_a.is_empty() || diag_d.is_empty() || !diag_a.iter().chain(&diag_d).all(is_unit)
            {
                return Err(HuaError::InvalidInput(
                    "unit-norm tails need nonempty lists of unit diagonals".into(),
                ));
            }
        } else if !diag_a.is_empty() || !diag_d.is_empty() {
            return Err(HuaError::InvalidInput(
                "only unit-norm tails take diagonal lists".into(),
            ));
        }
        for r in &rules {
            let ok = match r.block {
                TailBlock::A => r.offset < 0,
                TailBlock::D => r.offset > 0,
                TailBlock::B => true,
            };
            if !ok || r.values.is_empty() || !r.values.iter().all(PadicScalar::is_integral) {
                return Err(HuaError::InvalidInput(format!(
                    "invalid band rule at offset {}",
                    r.offset
                )));
            }
        }
        Ok(BandElement {
            core,
            kind,
            rules,
            diag_a,
            diag_d,
        })
    }

    pub fn finite(core: BlockGroupElement) -> Result<Self> {
        Self::new(
            core,
            BandKind::FiniteSupport,
            Vec::new(),
            Vec::new(),
            Vec::new(),
        )
    }

    pub fn k0(&self) -> usize {
        self.core.n()
    }

    pub fn prime(&self) -> u64 {
        self.core.prime()
    }

    /// Entry `(i, j)` of block `which` of the infinite matrix; `c` is read
    /// from the core only.
    fn entry(&self, which: char, i: usize, j: usize) -> PadicScalar {
        let k0 = self.k0();
        let p = self.prime();
        if i < k0 && j < k0 {
            let m = match which {
                'a' => &self.core.a,
                'b' => &self.core.b,
                'c' => &self.core.c,
                _ => &self.core.d,
            };
            return m.get(i, j).clone();
        }
        if which == 'c' {
            return PadicScalar::zero(p);
        }
        if i == j && which != 'b' {
            let diag = if which == 'a' {
                &self.diag_a
            } else {
                &self.diag_d
            };
            return if diag.is_empty() {
                PadicScalar::one(p)
            } else {
                diag[(i - k0) % diag.len()].clone()
            };
        }
        let block = match which {
            'a' => TailBlock::A,
            'b' => TailBlock::B,
            _ => TailBlock::D,
        };
        let offset = j as i64 - i as i64;
        // `a` rules are indexed by their row beyond the core, `d` rules by
        // their column, `b` rules by the later of the two.
        let anchor = match block {
            TailBlock::A => i,
            TailBlock::D => j,
            TailBlock::B => i.max(j),
        };
        if anchor < k0 {
            return PadicScalar::zero(p);
        }
        for r in &self.rules {
            if r.block == block && r.offset == offset {
                return r.values[(anchor - k0) % r.values.len()].clone();
            }
        }
        PadicScalar::zero(p)
    }

    /// The truncation `g_[k] = (a11 b11; c11 d11)` to the first `k`
    /// coordinates of each half.
    pub fn level(&self, k: usize) -> Result<BlockGroupElement> {
        if k < self.k0() {
            return Err(HuaError::LevelTooSmall {
                level: k,
                core: self.k0(),
            });
        }
        let p = self.prime();
        let block = |w: char| PadicMatrix::from_fn(p, k, k, |i, j| self.entry(w, i, j));
        BlockGroupElement::unchecked(Flavor::Gl, block('a'), block('b'), block('c'), block('d'))
    }

    pub fn to_json(&self) -> Value {
        let rules: Vec<Value> = self
            .rules
            .iter()
            .map(|r| {
                json!({
                    "block": r.block,
                    "offset": r.offset,
                    "values": r.values.iter().map(PadicScalar::to_json).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "core": self.core.to_json(),
            "kind": self.kind,
            "band": rules,
            "diag_a": self.diag_a.iter().map(PadicScalar::to_json).collect::<Vec<_>>(),
            "diag_d": self.diag_d.iter().map(PadicScalar::to_json).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let core = BlockGroupElement::from_json(&value["core"])?;
        let p = core.prime();
        let bad = |what: &str| HuaError::InvalidInput(format!("band element: {what}"));
        let kind: BandKind =
            serde_json::from_value(value["kind"].clone()).map_err(|e| bad(&e.to_string()))?;
        let scalars = |v: &Value| -> Result<Vec<PadicScalar>> {
            match v {
                Value::Null => Ok(Vec::new()),
                Value::Array(xs) => xs.iter().map(|x| PadicScalar::from_json(x, p)).collect(),
                _ => Err(bad("expected a list of scalars")),
            }
        };
        let mut rules = Vec::new();
        if let Some(rs) = value["band"].as_array() {
            for r in rs {
                let block: TailBlock =
                    serde_json::from_value(r["block"].clone()).map_err(|e| bad(&e.to_string()))?;
                let offset = r["offset"].as_i64().ok_or_else(|| bad("offset"))?;
                rules.push(BandRule {
                    block,
                    offset,
                    values: scalars(&r["values"])?,
                });
            }
        }
        Self::new(
            core,
            kind,
            rules,
            scalars(&value["diag_a"])?,
            scalars(&value["diag_d"])?,
        )
    }
}

/// `g_[k]` applied to a `k x k` matrix, with the cocycle exponent
/// `-v(det(a11 + z c11)) s`.
pub fn act_level(
    g: &BandElement,
    z: &PadicMatrix,
    s: Rational64,
) -> Result<(PadicMatrix, Rational64)> {
    let gk = g.level(z.rows())?;
    Ok((moebius(z, &gk)?, rn_exponent(z, &gk, s)?))
}

/// `det(a11 + z11 c11)` at level `k`, with `z11` the corner of `z`.
pub fn stabilized_det(g: &BandElement, z: &PadicMatrix, k: usize) -> Result<PadicScalar> {
    let gk = g.level(k)?;
    let zk = corner(z, k)?;
    det(&gk.a.matadd_lenient(&zk.matmul(&gk.c)?)?)
}

/// Level independence of one band element at one point.
#[derive(Clone, Debug, Serialize)]
pub struct StabilizationReport {
    pub levels: Vec<usize>,
    pub dets: Vec<Value>,
    /// Cocycle exponents of `act_level` at `k0, ..., k0 + extra - 1`.
    pub exponents: Vec<String>,
    /// Stabilized determinants agree (in valuation for unit-norm bands).
    pub dets_agree: bool,
    /// `corner(g_[k+1] z) = g_[k] corner(z)` with equal exponents.
    pub compatible: bool,
    pub passed: bool,
}

/// Compares `stabilized_det` at `k0`, `k0 + 1` and `k0 + extra` and the level
/// actions at consecutive levels up to `k0 + extra`, for `z` of size at least
/// `k0 + extra`.
pub fn stabilization_check(
    g: &BandElement,
    z: &PadicMatrix,
    extra: usize,
    s: Rational64,
) -> Result<StabilizationReport> {
    let k0 = g.k0();
    if extra == 0 || z.rows() < k0 + extra {
        return Err(HuaError::InvalidInput(format!(
            "need a point of size at least {}",
            k0 + extra.max(1)
        )));
    }
    let mut levels = vec![k0, k0 + 1, k0 + extra];
    levels.dedup();
    let dets: Vec<PadicScalar> = levels
        .iter()
        .map(|&k| stabilized_det(g, z, k))
        .collect::<Result<_>>()?;
    let dets_agree = if g.kind == BandKind::UnitNorm {
        dets.iter().all(|d| d.valuation() == dets[0].valuation())
    } else {
        dets.iter().all(|d| d.eq_at_precision(&dets[0]))
    };
    let mut compatible = true;
    let mut exponents = Vec::new();
    for k in k0..k0 + extra {
        let (big, eb) = act_level(g, &corner(z, k + 1)?, s)?;
        let (small, es) = act_level(g, &corner(z, k)?, s)?;
        compatible &= corner(&big, k)?.eq_at_precision(&small) && eb == es;
        exponents.push(es);
    }
    let det_exponent = dets[0].valuation().finite().map(|v| -s * v);
    compatible &= exponents.iter().all(|e| Some(*e) == det_exponent);
    Ok(StabilizationReport {
        levels,
        dets: dets.iter().map(PadicScalar::to_json).collect(),
        exponents: exponents.iter().map(|e| e.to_string()).collect(),
        dets_agree,
        compatible,
        passed: dets_agree && compatible,
    })
}

/// A random band element: core a random word in `GL(2 k0, O_p)`, band rules
/// at offsets up to `width` with `period` random integral values each.
pub fn random_band_element(
    k0: usize,
    p: u64,
    kind: BandKind,
    width: usize,
    period: usize,
    prec: u32,
    rs: &mut RandomStream,
) -> Result<BandElement> {
    let core = random_group_element(k0, p, Flavor::Gl, 4, prec, rs)?;
    let mut rules = Vec::new();
    let (mut diag_a, mut diag_d) = (Vec::new(), Vec::new());
    if kind != BandKind::FiniteSupport {
        let values = |rs: &mut RandomStream| -> Result<Vec<PadicScalar>> {
            let m = sample_integral_matrix(period.max(1), p, prec, rs)?;
            Ok(m.entries()[..period.max(1)].to_vec())
        };
        for w in 1..=width as i64 {
            rules.push(BandRule {
                block: TailBlock::A,
                offset: -w,
                values: values(rs)?,
            });
            rules.push(BandRule {
                block: TailBlock::D,
                offset: w,
                values: values(rs)?,
            });
        }
        for w in -(width as i64)..=width as i64 {
            rules.push(BandRule {
                block: TailBlock::B,
                offset: w,
                values: values(rs)?,
            });
        }
        if kind == BandKind::UnitNorm {
            let units = |rs: &mut RandomStream| -> Result<Vec<PadicScalar>> {
                let g = crate::samplers::sample_haar_gl(1, p, prec, rs)?;
                Ok(vec![g.get(0, 0).clone()])
            };
            for _ in 0..period.max(1) {
                diag_a.extend(units(rs)?);
                diag_d.extend(units(rs)?);
            }
        }
    }
    BandElement::new(core, kind, rules, diag_a, diag_d)
}

/// Singular profiles of `n x n` matrices with every exponent in `[-kmax, kmax]`,
/// plus one overflow bin for everything else.
#[derive(Clone, Debug)]
pub struct ProfileBins {
    pub flavor: Flavor,
    pub n: usize,
    pub p: u64,
    pub profiles: Vec<SingularProfile>,
    index: HashMap<SingularProfile, usize>,
}

pub const BIN_RANGE: i64 = 3;

impl ProfileBins {
    pub fn new(flavor: Flavor, n: usize, p: u64, kmax: i64) -> Result<Self> {
        let profiles = box_profiles(flavor, n, p, kmax, kmax)?;
        let index = profiles
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
        Ok(ProfileBins {
            flavor,
            n,
            p,
            profiles,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.profiles.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overflow(&self) -> usize {
        self.profiles.len()
    }

    pub fn bin_of(&self, profile: &SingularProfile) -> usize {
        self.index.get(profile).copied().unwrap_or(self.overflow())
    }

    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self.profiles.iter().map(ToString::to_string).collect();
        out.push("overflow".into());
        out
    }

    /// Exact bin probabilities under `spec`; the overflow takes the rest.
    pub fn expected(&self, spec: &MeasureSpec) -> Result<Vec<f64>> {
        if spec.n != self.n || spec.p != self.p || spec.flavor != self.flavor {
            return Err(HuaError::InvalidInput(format!(
                "bins for n = {} do not match {spec}",
                self.n
            )));
        }
        let mut out = Vec::with_capacity(self.len());
        for k in &self.profiles {
            out.push(spec.profile_mass(k)?.value());
        }
        let inside: f64 = out.iter().sum();
        out.push((1.0 - inside).max(0.0));
        Ok(out)
    }
}

/// A draw from `mu_s^n` reduced to a bin and a weight.
fn binned_draw<F, T>(
    spec: &MeasureSpec,
    prec: u32,
    band: usize,
    rs: &mut RandomStream,
    f: F,
) -> Result<(T, f64)>
where
    F: Fn(&PadicMatrix) -> Result<T>,
{
    let w = draw_mu_s(spec, prec, band, rs)?;
    Ok((f(&w.z)?, w.weight()))
}

/// Chi-square of binned samples against probabilities, weighted when the
/// sampler is.
fn binned_test(draws: &[(usize, f64)], probs: &[f64], labels: &[String]) -> ChiSquareReport {
    if draws.iter().all(|(_, w)| *w == 1.0) {
        let mut counts = vec![0u64; probs.len()];
        for (b, _) in draws {
            counts[*b] += 1;
        }
        chi_square_gof(&counts, probs, labels)
    } else {
        let bins: Vec<usize> = draws.iter().map(|d| d.0).collect();
        let weights: Vec<f64> = draws.iter().map(|d| d.1).collect();
        weighted_chi_square(&bins, &weights, probs, labels)
    }
}

fn collect<T>(xs: Vec<Result<T>>) -> Result<Vec<T>> {
    xs.into_iter().collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct PushforwardReport {
    pub top: MeasureSpec,
    pub target: MeasureSpec,
    pub samples: usize,
    pub chi_square: ChiSquareReport,
    pub labels: Vec<String>,
    pub expected_probabilities: Vec<f64>,
    pub observed_frequencies: Vec<f64>,
    /// `mu_s^n(Mat(n, O_p))`, which is `1 / normalization`.
    pub integral_expected: f64,
    pub integral_observed: f64,
    /// Bound on the bias from truncating the symmetric and alternating
    /// proposals.
    pub truncation_bias: f64,
    pub passed: bool,
}

/// Draws `samples` points of `mu_s^{n+1}` (`top.n = n + 1`), projects each to
/// its `n x n` corner and tests the profile bins against `mu_s^n`.
pub fn pushforward_test(
    top: &MeasureSpec,
    samples: usize,
    prec: u32,
    band: usize,
    rs: &RandomStream,
) -> Result<PushforwardReport> {
    if top.n < 2 {
        return Err(HuaError::InvalidInput("the top level needs n >= 2".into()));
    }
    let n = top.n - 1;
    let target = MeasureSpec::new(top.p, n, top.s, top.flavor)?;
    projection_test(top, &target, samples, prec, band, rs)
}

/// As [`pushforward_test`] for an arbitrary target size `k <= top.n`.
pub fn projection_test(
    top: &MeasureSpec,
    target: &MeasureSpec,
    samples: usize,
    prec: u32,
    band: usize,
    rs: &RandomStream,
) -> Result<PushforwardReport> {
    let bins = ProfileBins::new(target.flavor, target.n, target.p, BIN_RANGE)?;
    let probs = bins.expected(target)?;
    let labels = bins.labels();
    let corank = target.flavor.structural_corank(target.n);
    let tagged = collect(par_draws(rs, samples, |r| {
        binned_draw(top, prec, band, r, |z| {
            let c = corner(z, target.n)?;
            let k = smith_profile_with_corank(&c, corank)?;
            Ok((bins.bin_of(&k), k.gamma_exponent() == 0))
        })
    }))?;
    let draws: Vec<(usize, f64)> = tagged.iter().map(|((b, _), w)| (*b, *w)).collect();
    let chi_square = binned_test(&draws, &probs, &labels);
    let total: f64 = draws.iter().map(|d| d.1).sum();
    let mut freq = vec![0.0; bins.len()];
    for (b, w) in &draws {
        freq[*b] += w;
    }
    freq.iter_mut().for_each(|f| *f /= total);
    let integral_observed = tagged
        .iter()
        .filter(|((_, i), _)| *i)
        .map(|(_, w)| w)
        .sum::<f64>()
        / total;
    let integral_expected = 1.0 / target.normalization()?.value();
    let passed = chi_square.passed();
    Ok(PushforwardReport {
        top: *top,
        target: *target,
        samples,
        chi_square,
        labels,
        expected_probabilities: probs,
        observed_frequencies: freq,
        integral_expected,
        integral_observed,
        truncation_bias: truncation_bias(top, band)?,
        passed,
    })
}

/// `z^(levels)` drawn from `mu_s^{levels}` and its corners
/// `z^(1), ..., z^(levels)`, coherent by construction.
pub fn sample_tower(
    spec: &MeasureSpec,
    levels: usize,
    prec: u32,
    rs: &mut RandomStream,
) -> Result<Vec<PadicMatrix>> {
    if spec.flavor != Flavor::Gl || spec.s < Rational64::from(0) {
        return Err(HuaError::ConvergenceDomain(
            "towers are sampled for the GL flavor with s >= 0".into(),
        ));
    }
    if levels == 0 {
        return Err(HuaError::InvalidInput(
            "a tower needs at least one level".into(),
        ));
    }
    let top = MeasureSpec::new(spec.p, levels, spec.s, spec.flavor)?;
    let z = draw_mu_s(&top, prec, 0, rs)?.z;
    (1..=levels).map(|k| corner(&z, k)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct TowerLevelReport {
    pub level: usize,
    /// Tower marginal against the exact bins.
    pub exact: ChiSquareReport,
    /// Tower marginal against direct samples of the same level.
    pub versus_direct: ChiSquareReport,
    pub passed: bool,
}

/// For each level of `samples` towers, chi-square of the marginal against the
/// exact `mu_s^k` bins and two-sample chi-square against direct draws.
pub fn tower_test(
    spec: &MeasureSpec,
    levels: usize,
    samples: usize,
    prec: u32,
    rs: &RandomStream,
) -> Result<Vec<TowerLevelReport>> {
    let towers = collect(par_draws(&rs.split(0), samples, |r| {
        sample_tower(spec, levels, prec, r)
    }))?;
    let mut out = Vec::new();
    for k in 1..=levels {
        let level = MeasureSpec::new(spec.p, k, spec.s, spec.flavor)?;
        let bins = ProfileBins::new(Flavor::Gl, k, spec.p, BIN_RANGE)?;
        let labels = bins.labels();
        let mut tower_counts = vec![0u64; bins.len()];
        for t in &towers {
            tower_counts[bins.bin_of(&smith_profile_with_corank(&t[k - 1], 0)?)] += 1;
        }
        let direct = collect(par_draws(&rs.split(k as u64), samples, |r| {
            binned_draw(&level, prec, 0, r, |z| {
                Ok(bins.bin_of(&smith_profile_with_corank(z, 0)?))
            })
        }))?;
        let mut direct_counts = vec![0u64; bins.len()];
        for (b, _) in direct {
            direct_counts[b] += 1;
        }
        let exact = chi_square_gof(&tower_counts, &bins.expected(&level)?, &labels);
        let versus_direct = two_sample_chi_square(&tower_counts, &direct_counts, &labels);
        let passed = exact.passed() && versus_direct.passed();
        out.push(TowerLevelReport {
            level: k,
            exact,
            versus_direct,
            passed,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inverse;
    use crate::samplers::{sample_haar_gl, sample_mu0};

    fn random_matrix(n: usize, p: u64, rs: &mut RandomStream) -> PadicMatrix {
        let k = rs.below(3) as i64;
        sample_integral_matrix(n, p, 32, rs)
            .unwrap()
            .map(|x| x.shift(-k))
    }

    #[test]
    fn corners() {
        let mut rs = RandomStream::new(1);
        let z = random_matrix(4, 2, &mut rs);
        assert!(corner(&z, 4).unwrap().eq_at_precision(&z));
        assert!(corner(&corner(&z, 3).unwrap(), 2)
            .unwrap()
            .eq_at_precision(&corner(&z, 2).unwrap()));
        assert!(corner(&z, 5).is_err());
        let d = PadicMatrix::from_ints(3, &[vec![1, 0, 0], vec![0, 3, 0], vec![0, 0, 9]]).unwrap();
        let expect = PadicMatrix::from_ints(3, &[vec![1, 0], vec![0, 3]]).unwrap();
        assert!(corner(&d, 2).unwrap().eq_at_precision(&expect));
    }

    #[test]
    fn embedded_generators_commute_with_corners() {
        let mut rs = RandomStream::new(2);
        for n in 1..=3 {
            let a = sample_haar_gl(n, 2, 32, &mut rs).unwrap();
            let d = sample_haar_gl(n, 2, 32, &mut rs).unwrap();
            let g1 = BlockGroupElement::block_diagonal(a, d, Flavor::Gl).unwrap();
            let g2 = BlockGroupElement::translation(
                sample_integral_matrix(n, 2, 32, &mut rs).unwrap(),
                Flavor::Gl,
            )
            .unwrap();
            let g3 = BlockGroupElement::flip(2, n, Flavor::Gl);
            for g in [g1, g2, g3] {
                let big = embed_generator(&g, n + 1).unwrap();
                assert!(big.is_member());
                for _ in 0..20 {
                    let z = random_matrix(n + 1, 2, &mut rs);
                    let lhs = corner(&moebius(&z, &big).unwrap(), n).unwrap();
                    let rhs = moebius(&corner(&z, n).unwrap(), &g).unwrap();
                    assert!(lhs.eq_at_precision(&rhs));
                }
            }
        }
        let id = embed_generator(&BlockGroupElement::identity(2, 2, Flavor::Gl), 3).unwrap();
        assert!(id.matrix().eq_at_precision(&PadicMatrix::identity(2, 6)));
    }

    #[test]
    fn flip_embedding_inverts_the_corner() {
        let mut rs = RandomStream::new(3);
        let g3 = embed_generator(&BlockGroupElement::flip(3, 1, Flavor::Gl), 2).unwrap();
        let z = random_matrix(2, 3, &mut rs);
        let w = moebius(&z, &g3).unwrap();
        let expect = inverse(&corner(&z, 1).unwrap()).unwrap();
        assert!(corner(&w, 1).unwrap().eq_at_precision(&expect));
    }

    #[test]
    fn band_levels_are_compatible() {
        let mut rs = RandomStream::new(4);
        let s = Rational64::from(1);
        for kind in [
            BandKind::FiniteSupport,
            BandKind::UnitDiagonal,
            BandKind::UnitNorm,
        ] {
            let mut done = 0;
            while done < 30 {
                let g = random_band_element(2, 2, kind, 2, 2, 32, &mut rs).unwrap();
                let k0 = g.k0();
                let z = random_matrix(k0 + 3, 2, &mut rs);
                let dets: Vec<PadicScalar> = match [k0, k0 + 1, k0 + 3]
                    .iter()
                    .map(|&k| stabilized_det(&g, &z, k))
                    .collect()
                {
                    Ok(d) => d,
                    Err(_) => continue,
                };
                if kind == BandKind::UnitNorm {
                    let v0 = dets[0].valuation();
                    assert!(dets.iter().all(|d| d.valuation() == v0));
                } else {
                    assert!(dets.iter().all(|d| d.eq_at_precision(&dets[0])));
                }
                for k in [k0, k0 + 1, k0 + 2] {
                    let big = corner(&z, k + 1).unwrap();
                    let small = corner(&z, k).unwrap();
                    let (Ok((wb, eb)), Ok((ws, es))) =
                        (act_level(&g, &big, s), act_level(&g, &small, s))
                    else {
                        panic!("level action undefined although the determinant is not");
                    };
                    assert!(corner(&wb, k).unwrap().eq_at_precision(&ws));
                    assert_eq!(eb, es);
                }
                done += 1;
            }
        }
    }

    #[test]
    fn band_element_edge_cases() {
        let id = BandElement::finite(BlockGroupElement::identity(2, 2, Flavor::Gl)).unwrap();
        let z = random_matrix(4, 2, &mut RandomStream::new(5));
        for k in 2..=4 {
            assert!(stabilized_det(&id, &z, k)
                .unwrap()
                .eq_at_precision(&PadicScalar::one(2)));
        }
        assert!(matches!(
            act_level(&id, &corner(&z, 1).unwrap(), Rational64::from(1)),
            Err(HuaError::LevelTooSmall { .. })
        ));
        let (w, e) = act_level(&id, &z, Rational64::from(1)).unwrap();
        assert!(w.eq_at_precision(&z));
        assert_eq!(e, Rational64::from(0));
        let mut rs = RandomStream::new(6);
        let g = random_band_element(2, 3, BandKind::UnitDiagonal, 1, 3, 32, &mut rs).unwrap();
        let back = BandElement::from_json(&g.to_json()).unwrap();
        let z = random_matrix(5, 3, &mut rs);
        let (w1, _) = act_level(&g, &z, Rational64::from(1)).unwrap();
        let (w2, _) = act_level(&back, &z, Rational64::from(1)).unwrap();
        assert!(w1.eq_at_precision(&w2));
    }

    #[test]
    fn parabolic_band_determinant_is_det_a() {
        let mut rs = RandomStream::new(7);
        let a = sample_haar_gl(2, 2, 32, &mut rs).unwrap();
        let d = sample_haar_gl(2, 2, 32, &mut rs).unwrap();
        let core = BlockGroupElement::block_diagonal(a.clone(), d, Flavor::Gl).unwrap();
        let rules = vec![BandRule {
            block: TailBlock::A,
            offset: -1,
            values: vec![PadicScalar::from_int(5, 2)],
        }];
        let g = BandElement::new(core, BandKind::UnitDiagonal, rules, vec![], vec![]).unwrap();
        let z = sample_mu0(4, 2, 32, &mut rs).unwrap();
        let da = det(&a).unwrap();
        for k in 2..=4 {
            assert!(stabilized_det(&g, &z, k).unwrap().eq_at_precision(&da));
        }
    }

    #[test]
    fn bins_cover_the_box() {
        let bins = ProfileBins::new(Flavor::Gl, 1, 2, 3).unwrap();
        assert_eq!(bins.len(), 8);
        let probs = bins.expected(&MeasureSpec::gl(2, 1, 1).unwrap()).unwrap();
        let zero = bins.bin_of(&SingularProfile::finite(2, &[0]));
        let one = bins.bin_of(&SingularProfile::finite(2, &[1]));
        let integral: f64 = (0..=3)
            .map(|j| probs[bins.bin_of(&SingularProfile::finite(2, &[-j]))])
            .sum();
        assert!((integral - 6.0 / 7.0 * 15.0 / 16.0).abs() < 1e-15);
        assert!((probs[zero] - 3.0 / 7.0).abs() < 1e-15);
        assert!((probs[one] - 3.0 / 28.0).abs() < 1e-15);
        assert_eq!(
            bins.bin_of(&SingularProfile::finite(2, &[4])),
            bins.overflow()
        );
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(ProfileBins::new(Flavor::Gl, 2, 2, 3).unwrap().len(), 29);
    }

    #[test]
    fn small_pushforward_runs() {
        let rs = RandomStream::new(8);
        let top = MeasureSpec::gl(2, 2, 1).unwrap();
        let r = pushforward_test(&top, 4000, 32, 0, &rs).unwrap();
        assert!(r.passed, "{:?}", r.chi_square);
        let noop = projection_test(
            &MeasureSpec::gl(3, 1, 1).unwrap(),
            &MeasureSpec::gl(3, 1, 1).unwrap(),
            4000,
            32,
            0,
            &rs,
        )
        .unwrap();
        assert!(noop.passed);
        let towers = tower_test(&MeasureSpec::gl(2, 1, 0).unwrap(), 3, 2000, 32, &rs).unwrap();
        assert!(towers.iter().all(|t| t.passed));
    }
}
