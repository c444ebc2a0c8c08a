//! The linear-fractional action `z * g = (a + zc)^{-1} (b + zd)` of block
//! matrices `g = (a b; c d)`, its Radon-Nikodym cocycle and the unitary
//! representation built from it.
//!
//! The group flavor reuses [`Flavor`]: `Gl` acts on all square matrices,
//! `Symm` stands for the symplectic group acting on symmetric matrices and
//! `ASymm` for the orthogonal group acting on alternating ones.

use std::f64::consts::PI;

use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::ToPrimitive;
use serde_json::{json, Value};

use crate::error::{HuaError, Result};
use crate::linalg::{det, inverse, solve_left, PadicMatrix};
use crate::measures::Flavor;
use crate::padic::{PadicScalar, Valuation};
use crate::real::ratio_f64;
use crate::rng::RandomStream;
use crate::samplers::{sample_haar_gl, sample_integral_matrix};

/// `(a b; c d)` with `n x n` integral blocks.
#[derive(Clone, Debug)]
pub struct BlockGroupElement {
    pub flavor: Flavor,
    pub a: PadicMatrix,
    pub b: PadicMatrix,
    pub c: PadicMatrix,
    pub d: PadicMatrix,
}

pub fn group_name(flavor: Flavor) -> &'static str {
    match flavor {
        Flavor::Gl => "GL",
        Flavor::Symm => "Sp",
        Flavor::ASymm => "O",
    }
}

/// The form `(0 1; eps 1 0)` preserved by the flavor: `eps = -1` for Sp,
/// `+1` for O.
fn form(p: u64, n: usize, flavor: Flavor) -> Option<PadicMatrix> {
    let eps = match flavor {
        Flavor::Gl => return None,
        Flavor::Symm => -1,
        Flavor::ASymm => 1,
    };
    let z = PadicMatrix::zeros(p, n, n);
    let one = PadicMatrix::identity(p, n);
    Some(
        PadicMatrix::from_blocks(&z, &one, &one.scale(&PadicScalar::from_int(eps, p)), &z).unwrap(),
    )
}

/// Diagonal 0/1 projector onto the coordinates in `set`.
fn projector(p: u64, n: usize, set: &[bool]) -> PadicMatrix {
    PadicMatrix::from_fn(p, n, n, |i, j| {
        if i == j && set[i] {
            PadicScalar::one(p)
        } else {
            PadicScalar::zero(p)
        }
    })
}

impl BlockGroupElement {
    /// Checks the blocks and the flavor's membership condition at precision.
    pub fn new(
        flavor: Flavor,
        a: PadicMatrix,
        b: PadicMatrix,
        c: PadicMatrix,
        d: PadicMatrix,
    ) -> Result<Self> {
        let g = Self::unchecked(flavor, a, b, c, d)?;
        g.check_membership()?;
        Ok(g)
    }

    pub(crate) fn unchecked(
        flavor: Flavor,
        a: PadicMatrix,
        b: PadicMatrix,
        c: PadicMatrix,
        d: PadicMatrix,
    ) -> Result<Self> {
        let n = a.rows();
        for m in [&a, &b, &c, &d] {
            if m.rows() != n || m.cols() != n {
                return Err(HuaError::ShapeMismatch("blocks must all be n x n".into()));
            }
            if m.prime() != a.prime() {
                return Err(HuaError::PrimeMismatch(a.prime(), m.prime()));
            }
        }
        Ok(BlockGroupElement { flavor, a, b, c, d })
    }

    pub fn from_matrix(flavor: Flavor, g: &PadicMatrix) -> Result<Self> {
        if g.rows() != g.cols() || g.rows() % 2 != 0 {
            return Err(HuaError::ShapeMismatch(format!(
                "{}x{} is not a 2n x 2n matrix",
                g.rows(),
                g.cols()
            )));
        }
        let n = g.rows() / 2;
        Self::new(
            flavor,
            g.block(0, 0, n, n)?,
            g.block(0, n, n, n)?,
            g.block(n, 0, n, n)?,
            g.block(n, n, n, n)?,
        )
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn prime(&self) -> u64 {
        self.a.prime()
    }

    pub fn matrix(&self) -> PadicMatrix {
        PadicMatrix::from_blocks(&self.a, &self.b, &self.c, &self.d).unwrap()
    }

    pub fn identity(p: u64, n: usize, flavor: Flavor) -> Self {
        let (z, one) = (PadicMatrix::zeros(p, n, n), PadicMatrix::identity(p, n));
        BlockGroupElement {
            flavor,
            a: one.clone(),
            b: z.clone(),
            c: z,
            d: one,
        }
    }

    /// Exchanges the coordinates in `set` between the two halves:
    /// `(0 1; 1 0)` for GL and O, `(0 1; -1 0)` for Sp, restricted to `set`.
    pub fn partial_flip(p: u64, set: &[bool], flavor: Flavor) -> Self {
        let n = set.len();
        let on = projector(p, n, set);
        let off = projector(p, n, &set.iter().map(|x| !x).collect::<Vec<_>>());
        let c = if flavor == Flavor::Symm {
            on.neg()
        } else {
            on.clone()
        };
        BlockGroupElement {
            flavor,
            a: off.clone(),
            b: on,
            c,
            d: off,
        }
    }

    /// The full flip; for GL and O it acts as `z -> z^{-1}`, for Sp as
    /// `z -> -z^{-1}`.
    pub fn flip(p: u64, n: usize, flavor: Flavor) -> Self {
        Self::partial_flip(p, &vec![true; n], flavor)
    }

    /// `(1 b; 0 1)`, acting as `z -> z + b`.
    pub fn translation(bm: PadicMatrix, flavor: Flavor) -> Result<Self> {
        let (p, n) = (bm.prime(), bm.rows());
        let (z, one) = (PadicMatrix::zeros(p, n, n), PadicMatrix::identity(p, n));
        Self::new(flavor, one.clone(), bm, z, one)
    }

    /// `(a 0; 0 d)`; for Sp and O `d` must be `(a^t)^{-1}`.
    pub fn block_diagonal(a: PadicMatrix, d: PadicMatrix, flavor: Flavor) -> Result<Self> {
        let z = PadicMatrix::zeros(a.prime(), a.rows(), a.rows());
        Self::new(flavor, a, z.clone(), z, d)
    }

    /// `(a 0; 0 (a^t)^{-1})`, a member of every flavor.
    pub fn levi(a: PadicMatrix, flavor: Flavor) -> Result<Self> {
        let d = inverse(&a.transpose())?;
        Self::block_diagonal(a, d, flavor)
    }

    /// Upper block triangular, the subgroup under which every `mu_s` is
    /// invariant.
    pub fn is_parabolic(&self) -> bool {
        self.c
            .entries()
            .iter()
            .all(|x| x.is_zero() || x.is_vanishing())
    }

    /// Membership in the flavor's group over `O_p`, at precision.
    pub fn check_membership(&self) -> Result<()> {
        let g = self.matrix();
        if !g.is_integral() {
            return Err(HuaError::InvalidInput(
                "group elements must be integral".into(),
            ));
        }
        match form(self.prime(), self.n(), self.flavor) {
            None => match det(&g)?.valuation() {
                Valuation::Finite(0) => Ok(()),
                _ => Err(HuaError::InvalidInput("determinant is not a unit".into())),
            },
            Some(j) => {
                let gjg = g.matmul(&j)?.matmul(&g.transpose())?;
                if gjg.eq_at_precision(&j) {
                    Ok(())
                } else {
                    Err(HuaError::InvalidInput(format!(
                        "element does not preserve the {} form",
                        group_name(self.flavor)
                    )))
                }
            }
        }
    }

    pub fn is_member(&self) -> bool {
        self.check_membership().is_ok()
    }

    /// `self * other`, so that `z * (g1 g2) = (z * g1) * g2`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        let m = self.matrix().matmul(&other.matrix())?;
        let n = self.n();
        Self::unchecked(
            self.flavor,
            m.block(0, 0, n, n)?,
            m.block(0, n, n, n)?,
            m.block(n, 0, n, n)?,
            m.block(n, n, n, n)?,
        )
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = inverse(&self.matrix())?;
        let n = self.n();
        Self::unchecked(
            self.flavor,
            m.block(0, 0, n, n)?,
            m.block(0, n, n, n)?,
            m.block(n, 0, n, n)?,
            m.block(n, n, n, n)?,
        )
    }

    pub fn to_json(&self) -> Value {
        json!({
            "flavor": group_name(self.flavor),
            "a": self.a.to_json(),
            "b": self.b.to_json(),
            "c": self.c.to_json(),
            "d": self.d.to_json(),
        })
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let flavor: Flavor = value["flavor"]
            .as_str()
            .ok_or_else(|| HuaError::InvalidInput("missing flavor".into()))?
            .parse()?;
        let block = |k: &str| PadicMatrix::from_json(&value[k]);
        Self::new(flavor, block("a")?, block("b")?, block("c")?, block("d")?)
    }
}

fn check_point(z: &PadicMatrix, g: &BlockGroupElement) -> Result<()> {
    if z.rows() != g.n() || z.cols() != g.n() {
        return Err(HuaError::ShapeMismatch(format!(
            "{}x{} point for a {}-block element",
            z.rows(),
            z.cols(),
            g.n()
        )));
    }
    if z.prime() != g.prime() {
        return Err(HuaError::PrimeMismatch(g.prime(), z.prime()));
    }
    let ok = match g.flavor {
        Flavor::Gl => true,
        Flavor::Symm => z.is_symmetric(),
        Flavor::ASymm => z.is_antisymmetric(),
    };
    if !ok {
        return Err(HuaError::InvalidInput(format!(
            "point is not in the domain of {}",
            group_name(g.flavor)
        )));
    }
    Ok(())
}

/// `a + zc`, the matrix whose determinant drives the cocycle.
pub fn denominator(z: &PadicMatrix, g: &BlockGroupElement) -> Result<PadicMatrix> {
    check_point(z, g)?;
    g.a.matadd_lenient(&z.matmul(&g.c)?)
}

fn singular_as_base_point(e: HuaError) -> HuaError {
    match e {
        HuaError::SingularMatrix => HuaError::BasePointSingular,
        e => e,
    }
}

/// `z * g = (a + zc)^{-1} (b + zd)`.
pub fn moebius(z: &PadicMatrix, g: &BlockGroupElement) -> Result<PadicMatrix> {
    let den = denominator(z, g)?;
    let num = g.b.matadd_lenient(&z.matmul(&g.d)?)?;
    solve_left(&den, &num).map_err(singular_as_base_point)
}

/// `v_p(det(a + zc))`.
pub fn denominator_valuation(z: &PadicMatrix, g: &BlockGroupElement) -> Result<i64> {
    let x = det(&denominator(z, g)?)?;
    match x.valuation() {
        Valuation::Finite(v) => Ok(v),
        Valuation::Infinite => Err(HuaError::BasePointSingular),
        Valuation::AtLeast(_) => Err(HuaError::PrecisionExhausted(
            "det(a + zc) indistinguishable from zero".into(),
        )),
    }
}

/// Exponent `e` with `|det(a + zc)|^s = p^e`, i.e. `e = -v(det(a + zc)) s`.
pub fn rn_exponent(z: &PadicMatrix, g: &BlockGroupElement, s: Rational64) -> Result<Rational64> {
    Ok(-s * denominator_valuation(z, g)?)
}

/// Chain rule `c(g1 g2, z) = c(g1, z) c(g2, z * g1)`, compared exactly on
/// exponents.
pub fn cocycle_check(
    g1: &BlockGroupElement,
    g2: &BlockGroupElement,
    z: &PadicMatrix,
    s: Rational64,
) -> Result<bool> {
    let lhs = rn_exponent(z, &g1.compose(g2)?, s)?;
    let w = moebius(z, g1)?;
    let rhs = rn_exponent(z, g1, s)? + rn_exponent(&w, g2, s)?;
    Ok(lhs == rhs)
}

/// A uniform integral matrix of the flavor's space: all, symmetric or
/// alternating.
fn space_matrix(
    n: usize,
    p: u64,
    prec: u32,
    flavor: Flavor,
    rs: &mut RandomStream,
) -> Result<PadicMatrix> {
    let m = sample_integral_matrix(n, p, prec, rs)?;
    Ok(match flavor {
        Flavor::Gl => m,
        Flavor::Symm => PadicMatrix::from_fn(p, n, n, |i, j| m.get(i.min(j), i.max(j)).clone()),
        Flavor::ASymm => PadicMatrix::from_fn(p, n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Less => m.get(i, j).clone(),
            std::cmp::Ordering::Equal => PadicScalar::zero(p),
            std::cmp::Ordering::Greater => m.get(j, i).neg(),
        }),
    })
}

/// One random generator: a parabolic element `(a 0; 0 d)(1 b; 0 1)` or a
/// partial flip on a random coordinate set (of even size for O, where odd
/// flips leave the orbit of alternating graphs).
pub fn random_generator(
    n: usize,
    p: u64,
    flavor: Flavor,
    prec: u32,
    rs: &mut RandomStream,
) -> Result<BlockGroupElement> {
    let flip_ok = flavor != Flavor::ASymm || n >= 2;
    if flip_ok && rs.below(2) == 0 {
        loop {
            let set: Vec<bool> = (0..n).map(|_| rs.below(2) == 1).collect();
            let size = set.iter().filter(|x| **x).count();
            if size > 0 && (flavor != Flavor::ASymm || size % 2 == 0) {
                return Ok(BlockGroupElement::partial_flip(p, &set, flavor));
            }
        }
    }
    let a = sample_haar_gl(n, p, prec, rs)?;
    let levi = match flavor {
        Flavor::Gl => {
            BlockGroupElement::block_diagonal(a, sample_haar_gl(n, p, prec, rs)?, flavor)?
        }
        _ => BlockGroupElement::levi(a, flavor)?,
    };
    let t = BlockGroupElement::translation(space_matrix(n, p, prec, flavor, rs)?, flavor)?;
    levi.compose(&t)
}

/// Product of `len` random generators; membership is verified on the result.
pub fn random_group_element(
    n: usize,
    p: u64,
    flavor: Flavor,
    len: usize,
    prec: u32,
    rs: &mut RandomStream,
) -> Result<BlockGroupElement> {
    let mut g = BlockGroupElement::identity(p, n, flavor);
    for _ in 0..len {
        g = g.compose(&random_generator(n, p, flavor, prec, rs)?)?;
    }
    g.check_membership()?;
    Ok(g)
}

/// Functions on matrix space depending on finitely many entries.
#[derive(Clone, Debug, PartialEq)]
pub enum Cylinder {
    Constant,
    /// `1` if `v(z_ij) >= k`.
    EntryValuationAtLeast {
        i: usize,
        j: usize,
        k: i64,
    },
    /// `1` if every entry has valuation `>= k`.
    BallIndicator {
        k: i64,
    },
    /// `psi(z_ij)` on `v(z_ij) >= -depth`, zero outside, where
    /// `psi(x) = exp(2 pi i {x})` is the standard additive character.
    Character {
        i: usize,
        j: usize,
        depth: i64,
    },
}

fn at_least(x: &PadicScalar, k: i64) -> Result<bool> {
    match x.valuation() {
        Valuation::Infinite => Ok(true),
        Valuation::Finite(v) => Ok(v >= k),
        Valuation::AtLeast(a) if a >= k => Ok(true),
        Valuation::AtLeast(_) => Err(HuaError::PrecisionExhausted(
            "entry valuation unresolved".into(),
        )),
    }
}

/// Fractional part `{x}` in `[0, 1)`.
fn fractional_part(x: &PadicScalar) -> Result<f64> {
    let v = match x.valuation() {
        Valuation::Finite(v) => v,
        _ => return Ok(0.0),
    };
    if v >= 0 {
        return Ok(0.0);
    }
    let k = (-v) as u32;
    let digits = x
        .unit_mod(k)
        .ok_or_else(|| HuaError::PrecisionExhausted("fractional part beyond precision".into()))?;
    let scale = num_bigint::BigUint::from(x.prime()).pow(k);
    let q = num_rational::BigRational::new(digits.into(), scale.into());
    Ok(q.to_f64().unwrap_or(0.0))
}

impl Cylinder {
    pub fn eval(&self, z: &PadicMatrix) -> Result<Complex64> {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let entry = |i: usize, j: usize| -> Result<&PadicScalar> {
            if i < z.rows() && j < z.cols() {
                Ok(z.get(i, j))
            } else {
                Err(HuaError::ShapeMismatch(format!(
                    "entry ({i},{j}) outside {}x{}",
                    z.rows(),
                    z.cols()
                )))
            }
        };
        match *self {
            Cylinder::Constant => Ok(one),
            Cylinder::EntryValuationAtLeast { i, j, k } => Ok(if at_least(entry(i, j)?, k)? {
                one
            } else {
                zero
            }),
            Cylinder::BallIndicator { k } => {
                for x in z.entries() {
                    if !at_least(x, k)? {
                        return Ok(zero);
                    }
                }
                Ok(one)
            }
            Cylinder::Character { i, j, depth } => {
                let x = entry(i, j)?;
                if !at_least(x, -depth)? {
                    return Ok(zero);
                }
                Ok(Complex64::from_polar(1.0, 2.0 * PI * fractional_part(x)?))
            }
        }
    }

    pub fn to_json(&self) -> Value {
        match *self {
            Cylinder::Constant => json!({"kind": "constant"}),
            Cylinder::EntryValuationAtLeast { i, j, k } => {
                json!({"kind": "entry_valuation_at_least", "i": i, "j": j, "k": k})
            }
            Cylinder::BallIndicator { k } => json!({"kind": "ball_indicator", "k": k}),
            Cylinder::Character { i, j, depth } => {
                json!({"kind": "character", "i": i, "j": j, "depth": depth})
            }
        }
    }
}

/// `(rho f)(z) = f(z * g) |det(a + zc)|^{s/2} chi(det(a + zc))` for the
/// unramified character `chi(x) = exp(i theta v_p(x))`.
pub fn rep_apply<'a, F>(
    f: F,
    g: &'a BlockGroupElement,
    s: Rational64,
    theta: f64,
) -> impl Fn(&PadicMatrix) -> Result<Complex64> + 'a
where
    F: Fn(&PadicMatrix) -> Result<Complex64> + 'a,
{
    move |z: &PadicMatrix| {
        let v = denominator_valuation(z, g)?;
        let w = moebius(z, g)?;
        let modulus = (g.prime() as f64).powf(-(v as f64) * ratio_f64(s) / 2.0);
        Ok(f(&w)? * Complex64::from_polar(modulus, theta * v as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rational;
    use crate::samplers::sample_mu0;

    fn m(p: u64, rows: &[Vec<&str>]) -> PadicMatrix {
        PadicMatrix::from_strs(p, rows).unwrap()
    }

    fn random_point(n: usize, p: u64, flavor: Flavor, rs: &mut RandomStream) -> PadicMatrix {
        let z = space_matrix(n, p, 32, flavor, rs).unwrap();
        let k = rs.below(3) as i64;
        z.map(|x| x.shift(-k))
    }

    #[test]
    fn basic_actions() {
        let z = m(2, &[vec!["3", "1/2"], vec!["4", "5"]]);
        let id = BlockGroupElement::identity(2, 2, Flavor::Gl);
        assert!(moebius(&z, &id).unwrap().eq_at_precision(&z));
        let flip = BlockGroupElement::flip(2, 2, Flavor::Gl);
        assert!(moebius(&z, &flip)
            .unwrap()
            .eq_at_precision(&inverse(&z).unwrap()));
        let b = m(2, &[vec!["1", "2"], vec!["0", "7"]]);
        let t = BlockGroupElement::translation(b.clone(), Flavor::Gl).unwrap();
        assert!(moebius(&z, &t)
            .unwrap()
            .eq_at_precision(&z.matadd(&b).unwrap()));
        let singular = m(2, &[vec!["1", "1"], vec!["1", "1"]]);
        assert!(matches!(
            moebius(&singular, &flip),
            Err(HuaError::BasePointSingular)
        ));
    }

    #[test]
    fn rn_examples() {
        let z = m(2, &[vec!["1/4"]]);
        let flip = BlockGroupElement::flip(2, 1, Flavor::Gl);
        let e = rn_exponent(&z, &flip, Rational64::from(1)).unwrap();
        assert_eq!(e, Rational64::from(2));
        assert_eq!(crate::padic::p_power(2, e.to_integer()), rational(4, 1));
        assert_eq!(
            rn_exponent(&z, &flip, Rational64::from(0)).unwrap(),
            Rational64::from(0)
        );
        let mut rs = RandomStream::new(1);
        for _ in 0..50 {
            let a = sample_haar_gl(2, 3, 32, &mut rs).unwrap();
            let d = sample_haar_gl(2, 3, 32, &mut rs).unwrap();
            let g = BlockGroupElement::block_diagonal(a, d, Flavor::Gl).unwrap();
            let z = sample_mu0(2, 3, 32, &mut rs).unwrap();
            assert!(g.is_parabolic());
            assert_eq!(
                rn_exponent(&z, &g, Rational64::from(1)).unwrap(),
                Rational64::from(0)
            );
        }
    }

    #[test]
    fn generators_preserve_forms() {
        let mut rs = RandomStream::new(2);
        for flavor in [Flavor::Gl, Flavor::Symm, Flavor::ASymm] {
            for n in 1..=3 {
                for _ in 0..20 {
                    let g = random_group_element(n, 2, flavor, 4, 32, &mut rs).unwrap();
                    assert!(g.is_member(), "{flavor} n={n}");
                    assert!(g.matrix().is_integral());
                }
            }
        }
        let g = random_group_element(2, 3, Flavor::Gl, 0, 32, &mut rs).unwrap();
        assert!(g.matrix().eq_at_precision(&PadicMatrix::identity(3, 4)));
        let bad = BlockGroupElement::from_matrix(
            Flavor::Symm,
            &PadicMatrix::identity(2, 2).scale(&PadicScalar::from_int(3, 2)),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn action_law_and_flavor_closure() {
        let mut rs = RandomStream::new(3);
        for flavor in [Flavor::Gl, Flavor::Symm, Flavor::ASymm] {
            for n in 1..=3 {
                let mut done = 0;
                while done < 20 {
                    let g1 = random_group_element(n, 3, flavor, 3, 32, &mut rs).unwrap();
                    let g2 = random_group_element(n, 3, flavor, 3, 32, &mut rs).unwrap();
                    let z = random_point(n, 3, flavor, &mut rs);
                    let (Ok(w), Ok(w12)) =
                        (moebius(&z, &g1), moebius(&z, &g1.compose(&g2).unwrap()))
                    else {
                        continue;
                    };
                    let Ok(w2) = moebius(&w, &g2) else { continue };
                    assert!(w2.eq_at_precision(&w12), "{flavor} n={n}");
                    match flavor {
                        Flavor::Symm => assert!(w.is_symmetric()),
                        Flavor::ASymm => assert!(w.is_antisymmetric()),
                        Flavor::Gl => {}
                    }
                    done += 1;
                }
            }
        }
    }

    #[test]
    fn chain_rule() {
        let mut rs = RandomStream::new(4);
        let s = Rational64::new(3, 2);
        for flavor in [Flavor::Gl, Flavor::Symm, Flavor::ASymm] {
            let mut done = 0;
            while done < 30 {
                let g1 = random_group_element(2, 2, flavor, 3, 32, &mut rs).unwrap();
                let g2 = random_group_element(2, 2, flavor, 3, 32, &mut rs).unwrap();
                let z = random_point(2, 2, flavor, &mut rs);
                match cocycle_check(&g1, &g2, &z, s) {
                    Ok(ok) => assert!(ok),
                    Err(HuaError::BasePointSingular) => continue,
                    Err(e) => panic!("{e}"),
                }
                let inv = g1.inverse().unwrap();
                let w = moebius(&z, &g1).unwrap();
                assert_eq!(
                    rn_exponent(&z, &g1, s).unwrap() + rn_exponent(&w, &inv, s).unwrap(),
                    Rational64::from(0)
                );
                done += 1;
            }
        }
    }

    #[test]
    fn representation_multiplier() {
        let mut rs = RandomStream::new(5);
        let z = sample_mu0(2, 2, 32, &mut rs).unwrap();
        let id = BlockGroupElement::identity(2, 2, Flavor::Gl);
        let f = Cylinder::Character {
            i: 0,
            j: 1,
            depth: 3,
        };
        let rho = rep_apply(|w: &PadicMatrix| f.eval(w), &id, Rational64::from(1), 0.0);
        assert!((rho(&z).unwrap() - f.eval(&z).unwrap()).norm() < 1e-12);
        let g = random_group_element(2, 2, Flavor::Gl, 4, 32, &mut rs).unwrap();
        let s = Rational64::from(1);
        let rho1 = rep_apply(|w: &PadicMatrix| Cylinder::Constant.eval(w), &g, s, 0.7);
        for _ in 0..20 {
            let z = sample_mu0(2, 2, 32, &mut rs).unwrap();
            let rn = 2f64.powf(ratio_f64(rn_exponent(&z, &g, s).unwrap()));
            assert!((rho1(&z).unwrap().norm() - rn.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn characters() {
        let x = PadicScalar::exact(rational(3, 4), 2);
        assert!((fractional_part(&x).unwrap() - 0.75).abs() < 1e-15);
        let z = m(2, &[vec!["1/2"]]);
        let psi = Cylinder::Character {
            i: 0,
            j: 0,
            depth: 2,
        }
        .eval(&z)
        .unwrap();
        assert!((psi - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
        assert_eq!(
            Cylinder::BallIndicator { k: 0 }.eval(&z).unwrap(),
            Complex64::new(0.0, 0.0)
        );
    }
}
