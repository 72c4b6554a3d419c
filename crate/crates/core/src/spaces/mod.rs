//! Norm kernels for the sequence spaces used throughout the crate.
//!
//! Every kind is 1-unconditional, so kernels work on `|x|`. Internally each
//! kernel returns the norm together with a norming functional `u >= 0`
//! (`<u, a> = ||a||`), which the factorization solver uses as a subgradient.

mod dual;
mod tsirelson;

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::interpolate::{self, CoupleSpec};
use crate::vector::{IndexSet, Partition, Vector};

pub(crate) use dual::exact_dual;
pub use dual::{dual_norm, DualNorm, DUAL_BUDGET, DUAL_RESTARTS};
pub use tsirelson::tsirelson_norm;

/// Immutable description of a norm on finitely supported sequences.
#[derive(Clone, Debug, PartialEq)]
pub enum SpaceSpec {
    /// `l_p`, `p` in `[1, inf]`.
    Lp(f64),
    /// `(sum |x_i|^p w_i)^(1/p)` with strictly positive weights, `p` finite.
    WeightedLp {
        p: f64,
        weight: Vector,
    },
    /// `l_{p,q}` with the exterior `p/q` factor; `q` may be infinite.
    Lorentz {
        p: f64,
        q: f64,
    },
    TsirelsonT,
    /// 2-convexification of `TsirelsonT`.
    Tsirelson2,
    /// `||x|| = || |x|^p ||_base^(1/p)`.
    Convexified {
        base: Box<SpaceSpec>,
        p: f64,
    },
    /// Outer norm applied to the block norms `||x|_{A_n}||_{X_n}`. Each block
    /// is relabeled to coordinates `1..=|A_n|` before the inner norm sees it.
    Amalgam {
        outer: Box<SpaceSpec>,
        inner: Vec<SpaceSpec>,
        partition: Partition,
    },
    /// The finite dimensional space `L(A)`: vectors supported in `block`.
    Restricted {
        base: Box<SpaceSpec>,
        block: IndexSet,
    },
    DualOf(Box<SpaceSpec>),
    /// Calderón product of a couple, evaluated by factorization.
    Interpolated(Box<CoupleSpec>),
}

fn check_exponent(name: &'static str, p: f64, allow_inf: bool) -> Result<()> {
    if p.is_nan() || p < 1.0 || (!allow_inf && p.is_infinite()) {
        let range = if allow_inf { "[1, inf]" } else { "[1, inf)" };
        return Err(invalid(name, format!("{p} outside {range}")));
    }
    Ok(())
}

impl SpaceSpec {
    pub fn lp(p: f64) -> Result<Self> {
        let s = SpaceSpec::Lp(p);
        s.validate()?;
        Ok(s)
    }

    pub fn weighted(p: f64, weight: Vector) -> Result<Self> {
        let s = SpaceSpec::WeightedLp { p, weight };
        s.validate()?;
        Ok(s)
    }

    pub fn lorentz(p: f64, q: f64) -> Result<Self> {
        let s = SpaceSpec::Lorentz { p, q };
        s.validate()?;
        Ok(s)
    }

    pub fn convexified(base: SpaceSpec, p: f64) -> Result<Self> {
        let s = SpaceSpec::Convexified {
            base: Box::new(base),
            p,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn amalgam(outer: SpaceSpec, inner: Vec<SpaceSpec>, partition: Partition) -> Result<Self> {
        let s = SpaceSpec::Amalgam {
            outer: Box::new(outer),
            inner,
            partition,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn restricted(base: SpaceSpec, block: IndexSet) -> Result<Self> {
        let s = SpaceSpec::Restricted {
            base: Box::new(base),
            block,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn dual(base: SpaceSpec) -> Result<Self> {
        let s = SpaceSpec::DualOf(Box::new(base));
        s.validate()?;
        Ok(s)
    }

    pub fn interpolated(couple: CoupleSpec) -> Self {
        SpaceSpec::Interpolated(Box::new(couple))
    }

    /// Checks parameter ranges recursively.
    pub fn validate(&self) -> Result<()> {
        match self {
            SpaceSpec::Lp(p) => check_exponent("p", *p, true),
            SpaceSpec::WeightedLp { p, weight } => {
                check_exponent("p", *p, false)?;
                if let Some(i) = weight.as_slice().iter().position(|w| *w <= 0.0) {
                    return Err(invalid(
                        "weight",
                        format!("entry {} is {}, must be > 0", i + 1, weight.as_slice()[i]),
                    ));
                }
                Ok(())
            }
            SpaceSpec::Lorentz { p, q } => {
                check_exponent("p", *p, false)?;
                check_exponent("q", *q, true)
            }
            SpaceSpec::TsirelsonT | SpaceSpec::Tsirelson2 => Ok(()),
            SpaceSpec::Convexified { base, p } => {
                check_exponent("p", *p, false)?;
                base.validate()
            }
            SpaceSpec::Amalgam {
                outer,
                inner,
                partition,
            } => {
                if inner.len() != partition.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "{} inner spaces for {} blocks",
                        inner.len(),
                        partition.len()
                    )));
                }
                outer.validate()?;
                inner.iter().try_for_each(|s| s.validate())
            }
            SpaceSpec::Restricted { base, block } => {
                if block.is_empty() {
                    return Err(invalid("block", "empty block"));
                }
                base.validate()
            }
            SpaceSpec::DualOf(base) => base.validate(),
            SpaceSpec::Interpolated(c) => c.validate(),
        }
    }

    /// Checks that `x` lives where this space can measure it.
    pub fn check_vector(&self, x: &Vector) -> Result<()> {
        self.check_slice(x.as_slice())
    }

    fn check_slice(&self, x: &[f64]) -> Result<()> {
        let outside = |set: &IndexSet| {
            x.iter()
                .enumerate()
                .find(|(i, v)| **v != 0.0 && !set.contains(i + 1))
                .map(|(i, _)| i + 1)
        };
        match self {
            SpaceSpec::WeightedLp { weight, .. } if x.len() > weight.dim() => {
                Err(Error::ShapeMismatch(format!(
                    "vector dimension {} exceeds weight length {}",
                    x.len(),
                    weight.dim()
                )))
            }
            SpaceSpec::Amalgam { partition, .. } => match outside(&partition.union()) {
                Some(i) => Err(Error::DimensionMismatch(format!(
                    "coordinate {i} is not covered by the partition"
                ))),
                None => Ok(()),
            },
            SpaceSpec::Restricted { base, block } => match outside(block) {
                Some(i) => Err(Error::DimensionMismatch(format!(
                    "coordinate {i} lies outside the block {block}"
                ))),
                None => base.check_slice(x),
            },
            SpaceSpec::Convexified { base, .. } | SpaceSpec::DualOf(base) => base.check_slice(x),
            SpaceSpec::Interpolated(c) => {
                c.x0.check_slice(x)?;
                c.x1.check_slice(x)
            }
            _ => Ok(()),
        }
    }

    /// Whether the functionals returned by the kernel are guaranteed to have
    /// dual norm at most one (so they certify lower bounds).
    pub(crate) fn exact_functional(&self) -> bool {
        match self {
            SpaceSpec::Lorentz { p, q } => q <= p,
            SpaceSpec::DualOf(_) => self.exact_value(),
            SpaceSpec::Interpolated(_) => false,
            SpaceSpec::Convexified { base, .. } | SpaceSpec::Restricted { base, .. } => {
                base.exact_functional()
            }
            SpaceSpec::Amalgam { outer, inner, .. } => {
                outer.exact_functional() && inner.iter().all(|s| s.exact_functional())
            }
            _ => true,
        }
    }

    /// Whether `norm` returns the exact value rather than a solver estimate.
    pub(crate) fn exact_value(&self) -> bool {
        match self {
            SpaceSpec::DualOf(base) => {
                matches!(
                    base.as_ref(),
                    SpaceSpec::Lp(_) | SpaceSpec::WeightedLp { .. }
                ) || matches!(base.as_ref(), SpaceSpec::DualOf(b) if b.exact_value())
                    || matches!(base.as_ref(), SpaceSpec::Restricted { base, block } if dual::lacunary_t2(base, block))
                    || matches!(base.as_ref(), SpaceSpec::Lorentz { p, q } if dual::convex_lorentz(*p, *q))
            }
            SpaceSpec::Interpolated(_) => false,
            SpaceSpec::Convexified { base, .. } | SpaceSpec::Restricted { base, .. } => {
                base.exact_value()
            }
            SpaceSpec::Amalgam { outer, inner, .. } => {
                outer.exact_value() && inner.iter().all(|s| s.exact_value())
            }
            _ => true,
        }
    }

    /// Closed form of an interpolated space when one is known: `l_p` scales,
    /// weighted scales with a common exponent, and equal couples.
    pub fn simplified(&self) -> SpaceSpec {
        let SpaceSpec::Interpolated(c) = self else {
            return self.clone();
        };
        let x0 = c.x0.simplified();
        let x1 = c.x1.simplified();
        let t = c.theta;
        match (&x0, &x1) {
            _ if x0 == x1 => x0,
            (SpaceSpec::Lp(p0), SpaceSpec::Lp(p1)) => {
                let inv = (1.0 - t) / p0 + t / p1;
                SpaceSpec::Lp(if inv == 0.0 { f64::INFINITY } else { 1.0 / inv })
            }
            (
                SpaceSpec::WeightedLp { p: p0, weight: w0 },
                SpaceSpec::WeightedLp { p: p1, weight: w1 },
            ) if p0 == p1 && w0.dim() == w1.dim() => SpaceSpec::WeightedLp {
                p: *p0,
                weight: Vector::from_slice(
                    &w0.as_slice()
                        .iter()
                        .zip(w1.as_slice())
                        .map(|(a, b)| a.powf(1.0 - t) * b.powf(t))
                        .collect::<Vec<_>>(),
                ),
            },
            _ => SpaceSpec::Interpolated(Box::new(CoupleSpec { x0, x1, theta: t })),
        }
    }
}

impl fmt::Display for SpaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let num = |v: f64| {
            if v.is_infinite() {
                "inf".to_string()
            } else {
                format!("{v}")
            }
        };
        match self {
            SpaceSpec::Lp(p) => write!(f, "Lp({})", num(*p)),
            SpaceSpec::WeightedLp { p, weight } => write!(f, "WeightedLp({}, {})", num(*p), weight),
            SpaceSpec::Lorentz { p, q } => write!(f, "Lorentz({}, {})", num(*p), num(*q)),
            SpaceSpec::TsirelsonT => write!(f, "TsirelsonT"),
            SpaceSpec::Tsirelson2 => write!(f, "Tsirelson2"),
            SpaceSpec::Convexified { base, p } => write!(f, "Convexified({base}, {})", num(*p)),
            SpaceSpec::Amalgam {
                outer,
                inner,
                partition,
            } => {
                write!(f, "Amalgam({outer}; [")?;
                for (k, s) in inner.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{s}")?;
                }
                write!(f, "]; {partition})")
            }
            SpaceSpec::Restricted { base, block } => write!(f, "Restricted({base}, {block})"),
            SpaceSpec::DualOf(base) => write!(f, "DualOf({base})"),
            SpaceSpec::Interpolated(c) => {
                write!(f, "Interpolated({}, {}, {})", c.x0, c.x1, c.theta)
            }
        }
    }
}

/// Norm of `x` in `space`.
pub fn norm(space: &SpaceSpec, x: &Vector) -> Result<f64> {
    space.validate()?;
    space.check_vector(x)?;
    let a: Vec<f64> = x.as_slice().iter().map(|v| v.abs()).collect();
    Ok(eval(space, &a)?.0)
}

/// Norm together with a norming functional `u >= 0`, `<u, |x|> = ||x||`.
///
/// The functional is a subgradient of the norm at `|x|`. For the kinds where
/// `exact_functional` is false it is only a first-order estimate.
pub fn norm_with_functional(space: &SpaceSpec, x: &Vector) -> Result<(f64, Vector)> {
    space.validate()?;
    space.check_vector(x)?;
    let a: Vec<f64> = x.as_slice().iter().map(|v| v.abs()).collect();
    let (n, u) = eval(space, &a)?;
    Ok((n, Vector::new(u)?))
}

/// Kernel on a nonnegative slice. Assumes validated parameters.
pub(crate) fn eval(space: &SpaceSpec, a: &[f64]) -> Result<(f64, Vec<f64>)> {
    let d = a.len();
    match space {
        SpaceSpec::Lp(p) => Ok(lp_eval(*p, a)),
        SpaceSpec::WeightedLp { p, weight } => {
            let w = weight.as_slice();
            if d > w.len() {
                return Err(Error::ShapeMismatch(format!(
                    "vector dimension {d} exceeds weight length {}",
                    w.len()
                )));
            }
            let scaled: Vec<f64> = a
                .iter()
                .zip(w)
                .map(|(x, wi)| x * wi.powf(1.0 / p))
                .collect();
            let (n, g) = lp_eval(*p, &scaled);
            Ok((
                n,
                g.iter()
                    .zip(w)
                    .map(|(gi, wi)| gi * wi.powf(1.0 / p))
                    .collect(),
            ))
        }
        SpaceSpec::Lorentz { p, q } => Ok(lorentz_eval(*p, *q, a)),
        SpaceSpec::TsirelsonT => Ok(tsirelson::eval(a)),
        SpaceSpec::Tsirelson2 => {
            let sq: Vec<f64> = a.iter().map(|v| v * v).collect();
            let (t, c) = tsirelson::eval(&sq);
            let n = t.sqrt();
            if n == 0.0 {
                return Ok((0.0, vec![0.0; d]));
            }
            Ok((n, c.iter().zip(a).map(|(ci, ai)| ci * ai / n).collect()))
        }
        SpaceSpec::Convexified { base, p } => {
            let pw: Vec<f64> = a.iter().map(|v| v.powf(*p)).collect();
            let (b, g) = eval(base, &pw)?;
            let n = b.powf(1.0 / p);
            if n == 0.0 {
                return Ok((0.0, vec![0.0; d]));
            }
            Ok((
                n,
                g.iter()
                    .zip(a)
                    .map(|(gi, ai)| gi * (ai / n).powf(p - 1.0))
                    .collect(),
            ))
        }
        SpaceSpec::Amalgam {
            outer,
            inner,
            partition,
        } => {
            let mut norms = Vec::with_capacity(inner.len());
            let mut grads = Vec::with_capacity(inner.len());
            for (block, sp) in partition.blocks().iter().zip(inner) {
                let local: Vec<f64> = block
                    .iter()
                    .map(|i| a.get(i - 1).copied().unwrap_or(0.0))
                    .collect();
                let (n, g) = eval(sp, &local)?;
                norms.push(n);
                grads.push(g);
            }
            let (n, go) = eval(outer, &norms)?;
            let mut u = vec![0.0; d];
            for (k, block) in partition.blocks().iter().enumerate() {
                for (j, i) in block.iter().enumerate() {
                    if i <= d {
                        u[i - 1] = go[k] * grads[k][j];
                    }
                }
            }
            Ok((n, u))
        }
        SpaceSpec::Restricted { base, block } => {
            let masked: Vec<f64> = a
                .iter()
                .enumerate()
                .map(|(i, v)| if block.contains(i + 1) { *v } else { 0.0 })
                .collect();
            let (n, mut g) = eval(base, &masked)?;
            for (i, gi) in g.iter_mut().enumerate() {
                if !block.contains(i + 1) {
                    *gi = 0.0;
                }
            }
            Ok((n, g))
        }
        SpaceSpec::DualOf(base) => dual::dual_eval(base, a, &dual::DualOptions::internal()),
        SpaceSpec::Interpolated(c) => interpolate::interpolated_eval(c, a),
    }
}

fn lp_eval(p: f64, a: &[f64]) -> (f64, Vec<f64>) {
    let d = a.len();
    let m = a.iter().copied().fold(0.0, f64::max);
    if m == 0.0 {
        return (0.0, vec![0.0; d]);
    }
    if p.is_infinite() {
        let k = a.iter().position(|v| *v == m).unwrap();
        let mut g = vec![0.0; d];
        g[k] = 1.0;
        return (m, g);
    }
    if p == 1.0 {
        return (a.iter().sum(), vec![1.0; d]);
    }
    let s: f64 = a.iter().map(|v| (v / m).powf(p)).sum();
    let n = m * s.powf(1.0 / p);
    (n, a.iter().map(|v| (v / n).powf(p - 1.0)).collect())
}

/// Relative gap below which two rearranged coordinates count as tied.
const TIE_TOL: f64 = 1e-10;

pub(crate) fn lorentz_eval(p: f64, q: f64, a: &[f64]) -> (f64, Vec<f64>) {
    let d = a.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|i, j| a[*j].partial_cmp(&a[*i]).unwrap());
    let m = a[order[0]];
    let mut g = vec![0.0; d];
    if m == 0.0 {
        return (0.0, g);
    }
    if q.is_infinite() {
        let (k, n) = order
            .iter()
            .enumerate()
            .map(|(k, i)| (k, ((k + 1) as f64).powf(1.0 / p) * a[*i]))
            .fold((0, 0.0), |best, c| if c.1 > best.1 { c } else { best });
        g[order[k]] = ((k + 1) as f64).powf(1.0 / p);
        return (n, g);
    }
    let e = q / p;
    let w = |k: usize| (k as f64).powf(e) - ((k - 1) as f64).powf(e);
    let s: f64 = order
        .iter()
        .enumerate()
        .map(|(k, i)| (a[*i] / m).powf(q) * w(k + 1))
        .sum();
    let n = p / q * m * s.powf(1.0 / q);
    // d/da_i of (p/q) (sum w_k a_(k)^q)^(1/q), written relative to m for range safety.
    // Ties (up to rounding) share the mean weight of their group: the
    // symmetric subgradient, which an optimizer can certify at a kink.
    let c = p / q * s.powf(1.0 / q - 1.0);
    let mut k = 0;
    while k < d {
        let top = a[order[k]];
        let end = k + order[k..]
            .iter()
            .take_while(|i| top - a[**i] <= TIE_TOL * top)
            .count();
        let wm = (k + 1..=end).map(w).sum::<f64>() / (end - k) as f64;
        for i in &order[k..end] {
            g[*i] = c * wm * (a[*i] / m).powf(q - 1.0);
        }
        k = end;
    }
    (n, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> Vector {
        Vector::from_slice(c)
    }

    #[test]
    fn worked_norm_examples() {
        assert!((norm(&SpaceSpec::Lp(2.0), &v(&[3.0, 4.0])).unwrap() - 5.0).abs() < 1e-12);
        let l22 = SpaceSpec::lorentz(2.0, 2.0).unwrap();
        assert!((norm(&l22, &v(&[3.0, 4.0])).unwrap() - 5.0).abs() < 1e-12);
        let l21 = SpaceSpec::lorentz(2.0, 1.0).unwrap();
        assert!((norm(&l21, &v(&[1.0])).unwrap() - 2.0).abs() < 1e-12);
        let w = SpaceSpec::weighted(2.0, v(&[4.0, 1.0])).unwrap();
        assert!((norm(&w, &v(&[1.0, 1.0])).unwrap() - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lorentz_weak_type() {
        // ||(3,1)||_{2,inf} = max(3, sqrt(2)*1)
        let s = SpaceSpec::lorentz(2.0, f64::INFINITY).unwrap();
        assert!((norm(&s, &v(&[1.0, 3.0])).unwrap() - 3.0).abs() < 1e-12);
        let x = v(&[1.0, 1.0, 1.0, 1.0]);
        assert!((norm(&s, &x).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(SpaceSpec::lp(0.5).is_err());
        assert!(SpaceSpec::weighted(2.0, v(&[1.0, -1.0])).is_err());
        assert!(SpaceSpec::lorentz(f64::INFINITY, 2.0).is_err());
        let part = Partition::uniform(2, 2);
        assert!(SpaceSpec::amalgam(SpaceSpec::Lp(2.0), vec![SpaceSpec::Lp(2.0)], part).is_err());
    }

    #[test]
    fn shape_errors() {
        let w = SpaceSpec::weighted(2.0, v(&[1.0, 1.0])).unwrap();
        assert!(matches!(
            norm(&w, &v(&[1.0, 1.0, 1.0])),
            Err(Error::ShapeMismatch(_))
        ));
        let r = SpaceSpec::restricted(SpaceSpec::Lp(2.0), IndexSet::interval(1, 2)).unwrap();
        assert!(matches!(
            norm(&r, &v(&[1.0, 0.0, 1.0])),
            Err(Error::DimensionMismatch(_))
        ));
        assert!((norm(&r, &v(&[3.0, 4.0, 0.0])).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn amalgam_of_l2_is_l2() {
        let part = Partition::uniform(2, 3);
        let s = SpaceSpec::amalgam(SpaceSpec::Lp(2.0), vec![SpaceSpec::Lp(2.0); 3], part).unwrap();
        let x = v(&[1.0, -2.0, 3.0, 0.5, 0.0, 4.0]);
        assert!((norm(&s, &x).unwrap() - x.l2()).abs() < 1e-12);
    }

    #[test]
    fn convexification_of_l1() {
        let s = SpaceSpec::convexified(SpaceSpec::Lp(1.0), 3.0).unwrap();
        let x = v(&[1.0, -2.0, 0.5]);
        let want = (1.0f64 + 8.0 + 0.125).powf(1.0 / 3.0);
        assert!((norm(&s, &x).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn functionals_norm_the_vector() {
        let x = v(&[0.3, -1.2, 2.0, 0.0, 0.7]);
        let spaces = [
            SpaceSpec::Lp(1.0),
            SpaceSpec::Lp(2.5),
            SpaceSpec::Lp(f64::INFINITY),
            SpaceSpec::lorentz(2.0, 1.5).unwrap(),
            SpaceSpec::lorentz(2.0, 4.0).unwrap(),
            SpaceSpec::lorentz(1.5, f64::INFINITY).unwrap(),
            SpaceSpec::TsirelsonT,
            SpaceSpec::Tsirelson2,
            SpaceSpec::convexified(SpaceSpec::TsirelsonT, 2.0).unwrap(),
        ];
        for s in &spaces {
            let (n, u) = norm_with_functional(s, &x).unwrap();
            assert!((u.dot(&x.abs()) - n).abs() < 1e-9 * n, "{s}");
        }
    }

    #[test]
    fn lorentz_gradient_matches_finite_difference() {
        let s = SpaceSpec::lorentz(2.0, 3.0).unwrap();
        let a = [0.4, 1.3, 0.9, 2.2];
        let (_, g) = eval(&s, &a).unwrap();
        for i in 0..4 {
            let mut b = a;
            b[i] += 1e-6;
            let fd = (eval(&s, &b).unwrap().0 - eval(&s, &a).unwrap().0) / 1e-6;
            assert!((fd - g[i]).abs() < 1e-4, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn simplified_closed_forms() {
        let c = CoupleSpec::new(SpaceSpec::Lp(1.0), SpaceSpec::Lp(f64::INFINITY), 0.5).unwrap();
        assert_eq!(SpaceSpec::interpolated(c).simplified(), SpaceSpec::Lp(2.0));
        let c = CoupleSpec::new(SpaceSpec::TsirelsonT, SpaceSpec::TsirelsonT, 0.3).unwrap();
        assert_eq!(
            SpaceSpec::interpolated(c).simplified(),
            SpaceSpec::TsirelsonT
        );
    }
}
