//! Closed-form and numerical derivations (centralizers) and the derived-space quasi-norm.
//!
//! Sign convention: the numerical derivation of a couple is `x log(a1/a0)`
//! from its balanced optimal factorization. Under that convention the
//! couple `(l_p0, l_p1)` at `theta` has derivation `(p/p0 - p/p1) K` where
//! `K(x) = x log(||x|| / |x|)` is the Kalton-Peck map.

use crate::error::{invalid, Error, Result};
use crate::interpolate::{numerical_derivation, CoupleSpec};
use crate::spaces::{norm, SpaceSpec};
use crate::vector::{restrict, IndexSet, Partition, Vector};

/// A homogeneous map evaluable on vectors.
#[derive(Clone, Debug, PartialEq)]
pub enum DerivationSpec {
    /// `coeff * x log(||x||_space / |x|)`.
    KaltonPeck {
        coeff: f64,
        space: SpaceSpec,
    },
    /// `x -> f x`.
    LinearDiagonal(Vector),
    /// Derivation of an interpolated amalgam; see [`amalgam_phi`].
    AmalgamPhi {
        coeff: f64,
        partition: Partition,
        inner: Vec<DerivationSpec>,
        inner_spaces: Vec<SpaceSpec>,
        outer: SpaceSpec,
    },
    /// `sum_n 1_{A_n} base(1_{A_n} x)`.
    Fragmented {
        base: Box<DerivationSpec>,
        partition: Partition,
    },
    /// Lorentz-scale combination of `K` (in `l_{p,q}`) and a supplied `kappa`.
    LorentzComposite {
        p0: f64,
        q0: f64,
        p1: f64,
        q1: f64,
        theta: f64,
        kappa: Box<DerivationSpec>,
    },
    /// Kalton map extracted numerically from `(l_{p0,q}, l_{p1,q})_theta`.
    KaltonMap {
        p0: f64,
        p1: f64,
        q: f64,
        theta: f64,
        eps: f64,
    },
    Numerical {
        couple: CoupleSpec,
        eps: f64,
    },
    Scaled {
        coeff: f64,
        base: Box<DerivationSpec>,
    },
}

impl DerivationSpec {
    pub fn kalton_peck(coeff: f64, space: SpaceSpec) -> Self {
        DerivationSpec::KaltonPeck { coeff, space }
    }

    pub fn numerical(couple: CoupleSpec, eps: f64) -> Self {
        DerivationSpec::Numerical { couple, eps }
    }

    pub fn fragmented(base: DerivationSpec, partition: Partition) -> Self {
        DerivationSpec::Fragmented {
            base: Box::new(base),
            partition,
        }
    }

    pub fn scaled(coeff: f64, base: DerivationSpec) -> Self {
        DerivationSpec::Scaled {
            coeff,
            base: Box::new(base),
        }
    }

    /// True for maps that are linear, whose Cauchy differences and
    /// commutators with multipliers vanish identically.
    pub fn is_linear(&self) -> bool {
        match self {
            DerivationSpec::LinearDiagonal(_) => true,
            DerivationSpec::Scaled { coeff, base } => *coeff == 0.0 || base.is_linear(),
            DerivationSpec::Fragmented { base, .. } => base.is_linear(),
            _ => false,
        }
    }

    /// `Omega(x)`, with the dimension of `x`.
    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        match self {
            DerivationSpec::KaltonPeck { coeff, space } => kalton_peck(x, space, *coeff),
            DerivationSpec::LinearDiagonal(f) => {
                if let Some(i) = (f.dim() + 1..=x.dim()).find(|i| x.get(*i) != 0.0) {
                    return Err(Error::ShapeMismatch(format!(
                        "coordinate {i} is beyond the multiplier length {}",
                        f.dim()
                    )));
                }
                Ok(x.hadamard(f).resized(x.dim()))
            }
            DerivationSpec::AmalgamPhi {
                coeff,
                partition,
                inner,
                inner_spaces,
                outer,
            } => phi(x, *coeff, partition, inner, inner_spaces, outer),
            DerivationSpec::Fragmented { base, partition } => {
                check_layout(x, partition)?;
                let mut out = Vector::zeros(x.dim());
                for block in partition.blocks() {
                    out = out.add(&fragment_derivation(base, block, x)?);
                }
                Ok(out.resized(x.dim()))
            }
            DerivationSpec::LorentzComposite {
                p0,
                q0,
                p1,
                q1,
                theta,
                kappa,
            } => lorentz_derivation(x, *p0, *q0, *p1, *q1, *theta, kappa),
            DerivationSpec::KaltonMap {
                p0,
                p1,
                q,
                theta,
                eps,
            } => kalton_map_numeric(x, *p0, *p1, *q, *theta, *eps),
            DerivationSpec::Numerical { couple, eps } => numerical_derivation(couple, x, *eps),
            DerivationSpec::Scaled { coeff, base } => Ok(base.eval(x)?.scale(*coeff)),
        }
    }
}

fn check_layout(x: &Vector, partition: &Partition) -> Result<()> {
    let covered = partition.union();
    match x.support().iter().find(|i| !covered.contains(*i)) {
        Some(i) => Err(Error::ShapeMismatch(format!(
            "coordinate {i} is not covered by the partition"
        ))),
        None => Ok(()),
    }
}

/// `coeff * x_i log(||x|| / |x_i|)` on the support of `x`, zero elsewhere.
pub fn kalton_peck(x: &Vector, space: &SpaceSpec, coeff: f64) -> Result<Vector> {
    if x.is_zero() {
        return Ok(Vector::zeros(x.dim()));
    }
    let n = norm(space, x)?;
    Ok(x.map(|v| {
        if v == 0.0 {
            0.0
        } else {
            coeff * v * (n / v.abs()).ln()
        }
    }))
}

/// `1_A Omega(1_A x)`.
pub fn fragment_derivation(base: &DerivationSpec, block: &IndexSet, x: &Vector) -> Result<Vector> {
    let local = restrict(x, block);
    Ok(restrict(&base.eval(&local)?, block))
}

fn block_vector(x: &Vector, block: &IndexSet) -> Vector {
    Vector::from_slice(&block.iter().map(|i| x.get(i)).collect::<Vec<_>>())
}

fn phi(
    a: &Vector,
    coeff: f64,
    partition: &Partition,
    inner: &[DerivationSpec],
    inner_spaces: &[SpaceSpec],
    outer: &SpaceSpec,
) -> Result<Vector> {
    if inner.len() != partition.len() || inner_spaces.len() != partition.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} blocks, {} inner derivations, {} inner spaces",
            partition.len(),
            inner.len(),
            inner_spaces.len()
        )));
    }
    check_layout(a, partition)?;
    let blocks: Vec<Vector> = partition
        .blocks()
        .iter()
        .map(|b| block_vector(a, b))
        .collect();
    let norms = blocks
        .iter()
        .zip(inner_spaces)
        .map(|(b, s)| norm(s, b))
        .collect::<Result<Vec<f64>>>()?;
    let total = norm(outer, &Vector::new(norms.clone())?)?;
    let mut out = vec![0.0; a.dim()];
    for (k, block) in partition.blocks().iter().enumerate() {
        if norms[k] == 0.0 {
            continue;
        }
        let log_term = coeff * (norms[k] / total).ln();
        let inner_val = inner[k].eval(&blocks[k])?;
        for (j, i) in block.iter().enumerate() {
            if i <= a.dim() {
                out[i - 1] = blocks[k].get(j + 1) * log_term + inner_val.get(j + 1);
            }
        }
    }
    Vector::new(out)
}

/// Derivation of the amalgam scale `(lambda_{p0}(X0_n), lambda_{p1}(X1_n))_theta`:
///
/// `(p/p1 - p/p0) sum_n a_n log(||a_n|| / ||a||) + sum_n Omega_n(a_n)`,
///
/// where `||a_n||` is taken in `inner_spaces[n]`, `||a||` in `outer` applied
/// to the block norms, and `1/p = (1-theta)/p0 + theta/p1`. Blocks are
/// relabeled to `1..=|A_n|` before the inner maps see them. Blocks with
/// `a_n = 0` contribute zero.
#[allow(clippy::too_many_arguments)]
pub fn amalgam_phi(
    a: &Vector,
    p0: f64,
    p1: f64,
    theta: f64,
    partition: &Partition,
    inner: &[DerivationSpec],
    inner_spaces: &[SpaceSpec],
    outer: &SpaceSpec,
) -> Result<Vector> {
    phi(
        a,
        amalgam_coeff(p0, p1, theta)?,
        partition,
        inner,
        inner_spaces,
        outer,
    )
}

/// `p/p1 - p/p0` for the interpolated exponent `p`.
pub fn amalgam_coeff(p0: f64, p1: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid("theta", format!("{theta} outside (0, 1)")));
    }
    for (name, v) in [("p0", p0), ("p1", p1)] {
        if v.is_nan() || v < 1.0 {
            return Err(invalid(name, format!("{v} outside [1, inf]")));
        }
    }
    let inv = (1.0 - theta) / p0 + theta / p1;
    Ok((1.0 / p1 - 1.0 / p0) / inv)
}

/// Interpolated exponents `(p, q)` of a Lorentz couple.
pub fn lorentz_exponents(p0: f64, q0: f64, p1: f64, q1: f64, theta: f64) -> (f64, f64) {
    let p = 1.0 / ((1.0 - theta) / p0 + theta / p1);
    let q = 1.0 / ((1.0 - theta) / q0 + theta / q1);
    (p, q)
}

/// `q (1/q1 - 1/q0) K(x) + (q/p (1/q0 - 1/q1) - (1/p0 - 1/p1)) kappa(x)`
/// with `K` taken in `l_{p,q}`.
#[allow(clippy::too_many_arguments)]
pub fn lorentz_derivation(
    x: &Vector,
    p0: f64,
    q0: f64,
    p1: f64,
    q1: f64,
    theta: f64,
    kappa: &DerivationSpec,
) -> Result<Vector> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid("theta", format!("{theta} outside (0, 1)")));
    }
    let (p, q) = lorentz_exponents(p0, q0, p1, q1, theta);
    let space = SpaceSpec::lorentz(p, q)?;
    let ck = q * (1.0 / q1 - 1.0 / q0);
    let ckappa = q / p * (1.0 / q0 - 1.0 / q1) - (1.0 / p0 - 1.0 / p1);
    let mut out = Vector::zeros(x.dim());
    if ck != 0.0 {
        out = out.add(&kalton_peck(x, &space, ck)?);
    }
    if ckappa != 0.0 {
        out = out.add(&kappa.eval(x)?.scale(ckappa));
    }
    Ok(out.resized(x.dim()))
}

/// Numerical derivation of `(l_{p0,q}, l_{p1,q})_theta` divided by `-(1/p0 - 1/p1)`.
pub fn kalton_map_numeric(
    x: &Vector,
    p0: f64,
    p1: f64,
    q: f64,
    theta: f64,
    eps: f64,
) -> Result<Vector> {
    if p0 == p1 {
        return Err(invalid("p1", "must differ from p0"));
    }
    let couple = CoupleSpec::new(
        SpaceSpec::lorentz(p0, q)?,
        SpaceSpec::lorentz(p1, q)?,
        theta,
    )?;
    let omega = numerical_derivation(&couple, x, eps)?;
    Ok(omega.scale(-1.0 / (1.0 / p0 - 1.0 / p1)))
}

/// A point `(y, z)` of the derived space.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivedVector {
    pub y: Vector,
    pub z: Vector,
}

impl DerivedVector {
    pub fn new(y: Vector, z: Vector) -> Result<Self> {
        if y.dim() != z.dim() {
            return Err(Error::ShapeMismatch(format!(
                "y has dimension {}, z has {}",
                y.dim(),
                z.dim()
            )));
        }
        Ok(Self { y, z })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            y: self.y.scale(c),
            z: self.z.scale(c),
        }
    }
}

/// `||y - Omega(z)|| + ||z||`.
pub fn derived_norm(omega: &DerivationSpec, v: &DerivedVector, space: &SpaceSpec) -> Result<f64> {
    let oz = omega.eval(&v.z)?;
    Ok(norm(space, &v.y.sub(&oz))? + norm(space, &v.z)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> Vector {
        Vector::from_slice(c)
    }

    fn close(a: &Vector, b: &Vector, tol: f64) -> bool {
        a.sub(b).max_abs() <= tol
    }

    #[test]
    fn kalton_peck_examples() {
        let l2 = SpaceSpec::Lp(2.0);
        assert!(kalton_peck(&Vector::basis(1, 3), &l2, 1.0)
            .unwrap()
            .is_zero());
        let k = kalton_peck(&v(&[1.0, 1.0]), &l2, 1.0).unwrap();
        let h = 0.5 * 2f64.ln();
        assert!(close(&k, &v(&[h, h]), 1e-15));
        let x = v(&[0.3, -2.0, 0.0, 1.1]);
        let k1 = kalton_peck(&x, &l2, 1.0).unwrap();
        let k2 = kalton_peck(&x.scale(2.0), &l2, 1.0).unwrap();
        assert!(close(&k2, &k1.scale(2.0), 1e-14));
        assert_eq!(k1.get(3), 0.0);
        assert!(kalton_peck(&Vector::zeros(2), &l2, 1.0).unwrap().is_zero());
    }

    #[test]
    fn fragment_examples() {
        let kp = DerivationSpec::kalton_peck(1.0, SpaceSpec::Lp(2.0));
        let x = v(&[1.0, 1.0, 5.0]);
        let h = 0.5 * 2f64.ln();
        let got = fragment_derivation(&kp, &IndexSet::interval(1, 2), &x).unwrap();
        assert!(close(&got, &v(&[h, h, 0.0]), 1e-15));
        let full = fragment_derivation(&kp, &IndexSet::interval(1, 3), &x).unwrap();
        assert_eq!(full, kp.eval(&x).unwrap());
        let none = fragment_derivation(&kp, &IndexSet::interval(4, 6), &x).unwrap();
        assert!(none.is_zero());
    }

    #[test]
    fn amalgam_single_block_reduces_to_inner() {
        let part = Partition::uniform(3, 2);
        let inner = vec![DerivationSpec::kalton_peck(0.7, SpaceSpec::Lp(2.0)); 2];
        let spaces = vec![SpaceSpec::Lp(2.0); 2];
        let a = v(&[1.0, -2.0, 0.5, 0.0, 0.0, 0.0]);
        let got = amalgam_phi(
            &a,
            1.0,
            4.0,
            0.5,
            &part,
            &inner,
            &spaces,
            &SpaceSpec::Lp(2.0),
        )
        .unwrap();
        let want = inner[0].eval(&v(&[1.0, -2.0, 0.5])).unwrap().resized(6);
        assert!(close(&got, &want, 1e-14));
    }

    #[test]
    fn amalgam_with_scalar_blocks_is_kalton_peck() {
        // Singleton blocks and zero inner maps give (p/p1 - p/p0) sum a_n log(|a_n|/||a||).
        let part = Partition::uniform(1, 4);
        let inner = vec![DerivationSpec::LinearDiagonal(v(&[0.0])); 4];
        let spaces = vec![SpaceSpec::Lp(2.0); 4];
        let a = v(&[1.0, -3.0, 0.25, 2.0]);
        let (p0, p1, t) = (1.0, f64::INFINITY, 0.5);
        let got = amalgam_phi(&a, p0, p1, t, &part, &inner, &spaces, &SpaceSpec::Lp(2.0)).unwrap();
        let want = kalton_peck(&a, &SpaceSpec::Lp(2.0), 2.0).unwrap();
        assert!(close(&got, &want, 1e-14));
    }

    #[test]
    fn lorentz_coefficients_vanish() {
        let x = v(&[1.0, 0.5, -0.25]);
        let kappa = DerivationSpec::LinearDiagonal(v(&[1.0, 1.0, 1.0]));
        // p0 = p1, q0 = q1: zero.
        let z = lorentz_derivation(&x, 2.0, 3.0, 2.0, 3.0, 0.4, &kappa).unwrap();
        assert!(z.max_abs() < 1e-15);
        // q0/p0 = q1/p1: only the K term survives.
        let r = lorentz_derivation(&x, 2.0, 4.0, 4.0, 8.0, 0.5, &kappa).unwrap();
        let (p, q) = lorentz_exponents(2.0, 4.0, 4.0, 8.0, 0.5);
        let k = kalton_peck(
            &x,
            &SpaceSpec::lorentz(p, q).unwrap(),
            q * (1.0 / 8.0 - 1.0 / 4.0),
        )
        .unwrap();
        assert!(close(&r, &k, 1e-14));
        // q0 = q1: only kappa survives.
        let r = lorentz_derivation(&x, 2.0, 3.0, 4.0, 3.0, 0.5, &kappa).unwrap();
        assert!(close(&r, &x.scale(-(0.5 - 0.25)), 1e-14));
    }

    #[test]
    fn derived_norm_examples() {
        let kp = DerivationSpec::kalton_peck(1.0, SpaceSpec::Lp(2.0));
        let l2 = SpaceSpec::Lp(2.0);
        let y = v(&[1.0, 2.0, 2.0]);
        let zero = Vector::zeros(3);
        let p = DerivedVector::new(y.clone(), zero.clone()).unwrap();
        assert!((derived_norm(&kp, &p, &l2).unwrap() - 3.0).abs() < 1e-15);
        let z = v(&[0.5, -1.0, 3.0]);
        let p = DerivedVector::new(kp.eval(&z).unwrap(), z.clone()).unwrap();
        assert!((derived_norm(&kp, &p, &l2).unwrap() - z.l2()).abs() < 1e-12);
        let p = DerivedVector::new(y, z).unwrap();
        let a = derived_norm(&kp, &p.scale(-2.5), &l2).unwrap();
        let b = derived_norm(&kp, &p, &l2).unwrap();
        assert!((a - 2.5 * b).abs() < 1e-12);
        assert!(DerivedVector::new(v(&[1.0]), v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn layout_errors() {
        let f = DerivationSpec::fragmented(
            DerivationSpec::kalton_peck(1.0, SpaceSpec::Lp(2.0)),
            Partition::uniform(2, 1),
        );
        assert!(matches!(
            f.eval(&v(&[1.0, 1.0, 1.0])),
            Err(Error::ShapeMismatch(_))
        ));
        let d = DerivationSpec::LinearDiagonal(v(&[1.0]));
        assert!(d.eval(&v(&[1.0, 2.0])).is_err());
        assert!(kalton_map_numeric(&v(&[1.0]), 2.0, 2.0, 2.0, 0.5, 1e-6).is_err());
    }
}
