//! Sampled estimates of quasi-linearity, centralizer and triviality
//! constants, A-parameters of sequence spaces and scale predicates.
//!
//! Every constant is a supremum over a finite sample, hence a lower bound.
//! Sample `k` is drawn from its own ChaCha stream `(seed, k)`, so enlarging
//! `samples` only adds candidates and never lowers a reported value. The
//! first samples are fixed structured vectors (flat, spikes, geometric and
//! harmonic decay) that stress the logarithmic terms; the rest are sparse
//! vectors with heavy-tailed coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::derivations::{derived_norm, DerivationSpec, DerivedVector};
use crate::error::{invalid, Error, Result};
use crate::interpolate::CoupleSpec;
use crate::report::{Measured, Provenance, Report, Table};
use crate::spaces::{norm, SpaceSpec};
use crate::vector::{IndexSet, Partition, Vector};

fn stream(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

const STRUCTURED: usize = 8;

/// Structured profile `kind` on `m` coordinates.
fn profile(kind: usize, m: usize) -> Vec<f64> {
    let half = m.div_ceil(2);
    (0..m)
        .map(|j| match kind {
            0 => 1.0,
            1 => f64::from(j == 0),
            2 => f64::from(j + 1 == m),
            3 => f64::from(j < half),
            4 => 0.5f64.powi(j as i32),
            5 => {
                if j % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            6 => 1.0 / ((j + 1) as f64).sqrt(),
            _ => {
                if j == 0 {
                    1.0
                } else {
                    1.0 / (m as f64).sqrt()
                }
            }
        })
        .collect()
}

fn random_profile(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let cauchy = Cauchy::new(0.0, 1.0).expect("valid scale");
    let density = rng.random_range(0.2..=1.0);
    let mut c: Vec<f64> = (0..m)
        .map(|_| {
            if rng.random_bool(density) {
                let v: f64 = cauchy.sample(rng);
                v.clamp(-1e6, 1e6)
            } else {
                0.0
            }
        })
        .collect();
    if c.iter().all(|v| *v == 0.0) {
        c[rng.random_range(0..m)] = 1.0;
    }
    c
}

/// Coefficients of sample `k` on `m` coordinates.
fn coefficients(k: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if k < STRUCTURED {
        profile(k, m)
    } else {
        random_profile(rng, m)
    }
}

fn place(block: &IndexSet, coeffs: &[f64]) -> Vector {
    let mut v = vec![0.0; block.max().unwrap_or(0)];
    for (i, c) in block.iter().zip(coeffs) {
        v[i - 1] = *c;
    }
    Vector::from_slice(&v)
}

fn check_block(block: &IndexSet) -> Result<()> {
    if block.is_empty() {
        return Err(invalid("block", "must be nonempty"));
    }
    Ok(())
}

fn check_samples(samples: usize) -> Result<()> {
    if samples == 0 {
        return Err(invalid("samples", "must be >= 1"));
    }
    Ok(())
}

/// Runs `ratio` over samples in parallel and keeps the largest value,
/// ties resolved by the lowest sample index.
fn sup<F>(samples: usize, ratio: F) -> Result<(f64, usize)>
where
    F: Fn(usize) -> Result<f64> + Sync,
{
    let values = (0..samples)
        .into_par_iter()
        .map(&ratio)
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().enumerate().fold(
        (0.0, 0),
        |(b, bk), (k, v)| if *v > b { (*v, k) } else { (b, bk) },
    ))
}

/// Sampled `sup ||Omega(x + y) - Omega(x) - Omega(y)|| / (||x|| + ||y||)`
/// over pairs supported in `block`.
pub fn quasilinearity_constant(
    omega: &DerivationSpec,
    space: &SpaceSpec,
    block: &IndexSet,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_block(block)?;
    check_samples(samples)?;
    if omega.is_linear() {
        return Ok(0.0);
    }
    let m = block.len();
    let half = m.div_ceil(2);
    let s2 = STRUCTURED * STRUCTURED;
    let (value, _) = sup(samples, |k| {
        let mut rng = stream(seed, k);
        let (x, y) = if k < 2 * s2 {
            // Overlapping structured pairs, then the same profiles on disjoint halves.
            let (a, b) = (profile(k % s2 / STRUCTURED, m), profile(k % STRUCTURED, m));
            if k < s2 {
                (a, b.iter().map(|v| -0.5 * v).collect())
            } else {
                let mut x = vec![0.0; m];
                let mut y = vec![0.0; m];
                x[..half].copy_from_slice(&a[..half]);
                y[half..].copy_from_slice(&b[..m - half]);
                (x, y)
            }
        } else {
            (random_profile(&mut rng, m), random_profile(&mut rng, m))
        };
        let (x, y) = (place(block, &x), place(block, &y));
        let denom = norm(space, &x)? + norm(space, &y)?;
        if denom == 0.0 {
            return Ok(0.0);
        }
        let d = omega
            .eval(&x.add(&y))?
            .sub(&omega.eval(&x)?)
            .sub(&omega.eval(&y)?);
        Ok(norm(space, &d)? / denom)
    })?;
    Ok(value)
}

/// Sampled `sup ||Omega(xi x) - xi Omega(x)|| / (||xi||_inf ||x||)` over
/// bounded multipliers: sign patterns, log-uniform magnitudes, indicators
/// and constants.
pub fn centralizer_constant(
    omega: &DerivationSpec,
    space: &SpaceSpec,
    block: &IndexSet,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_block(block)?;
    check_samples(samples)?;
    if omega.is_linear() {
        return Ok(0.0);
    }
    let m = block.len();
    let (value, _) = sup(samples, |k| {
        let mut rng = stream(seed, k);
        let x = place(block, &coefficients(k / 4, m, &mut rng));
        let xi: Vec<f64> = match k % 4 {
            0 => (0..m)
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                .collect(),
            1 => (0..m)
                .map(|_| {
                    let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    s * 10f64.powf(rng.random_range(-3.0..=0.0))
                })
                .collect(),
            2 => (0..m).map(|_| f64::from(rng.random_bool(0.5))).collect(),
            _ => vec![rng.random_range(-2.0..=2.0); m],
        };
        let xi = place(block, &xi);
        let (nx, nxi) = (norm(space, &x)?, xi.max_abs());
        if nx == 0.0 || nxi == 0.0 {
            return Ok(0.0);
        }
        let d = omega
            .eval(&xi.hadamard(&x))?
            .sub(&xi.hadamard(&omega.eval(&x)?));
        Ok(norm(space, &d)? / (nx * nxi))
    })?;
    Ok(value)
}

/// Triviality gap on one block, with the vector attaining it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Gap {
    pub value: f64,
    pub witness: Vector,
}

/// Diagonal part `f_i = Omega(e_i)_i` over `block`.
pub fn diagonal_part(omega: &DerivationSpec, block: &IndexSet) -> Result<Vector> {
    let dim = block.max().unwrap_or(0);
    let mut f = vec![0.0; dim];
    for i in block.iter() {
        f[i - 1] = omega.eval(&Vector::basis(i, dim))?.get(i);
    }
    Ok(Vector::from_slice(&f))
}

/// Sampled `sup ||Omega(x) - f x|| / ||x||` over `x` supported in `block`,
/// with `f` the diagonal part of `Omega`.
pub fn triviality_gap(
    omega: &DerivationSpec,
    space: &SpaceSpec,
    block: &IndexSet,
    samples: usize,
    seed: u64,
) -> Result<Gap> {
    check_block(block)?;
    check_samples(samples)?;
    let f = diagonal_part(omega, block)?;
    let m = block.len();
    let sample = |k: usize| place(block, &coefficients(k, m, &mut stream(seed, k)));
    let (value, at) = sup(samples, |k| {
        let x = sample(k);
        let nx = norm(space, &x)?;
        if nx == 0.0 {
            return Ok(0.0);
        }
        Ok(norm(space, &omega.eval(&x)?.sub(&f.hadamard(&x)))? / nx)
    })?;
    Ok(Gap {
        value,
        witness: sample(at),
    })
}

/// Triviality gaps over a family of blocks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    pub dims: Vec<usize>,
    pub gaps: Vec<f64>,
    pub witnesses: Vec<Vector>,
    pub samples: usize,
    pub seed: u64,
}

/// Gap of each `(block, derivation)` pair, measured in `space`.
pub fn gap_report(
    items: &[(IndexSet, DerivationSpec)],
    space: &SpaceSpec,
    samples: usize,
    seed: u64,
) -> Result<GapReport> {
    let gaps = items
        .iter()
        .map(|(b, o)| triviality_gap(o, space, b, samples, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(GapReport {
        dims: items.iter().map(|(b, _)| b.len()).collect(),
        gaps: gaps.iter().map(|g| g.value).collect(),
        witnesses: gaps.into_iter().map(|g| g.witness).collect(),
        samples,
        seed,
    })
}

/// Sampled `sup ||Omega1(x) - Omega2(x)|| / ||x||` over `x` supported in `block`.
pub fn bounded_equivalence(
    omega1: &DerivationSpec,
    omega2: &DerivationSpec,
    space: &SpaceSpec,
    block: &IndexSet,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_block(block)?;
    check_samples(samples)?;
    let m = block.len();
    let (value, _) = sup(samples, |k| {
        let x = place(block, &coefficients(k, m, &mut stream(seed, k)));
        let nx = norm(space, &x)?;
        if nx == 0.0 {
            return Ok(0.0);
        }
        Ok(norm(space, &omega1.eval(&x)?.sub(&omega2.eval(&x)?))? / nx)
    })?;
    Ok(value)
}

/// Sampled quasi-triangle constant of the derived quasi-norm,
/// `sup ||u + v|| / (||u|| + ||v||)`.
pub fn quasi_triangle_constant(
    omega: &DerivationSpec,
    space: &SpaceSpec,
    block: &IndexSet,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_block(block)?;
    check_samples(samples)?;
    let m = block.len();
    let (value, _) = sup(samples, |k| {
        let mut rng = stream(seed, k);
        // Points (Omega(z), z) on the graph make the quasi-triangle defect visible.
        let z1 = place(block, &coefficients(k, m, &mut rng));
        let z2 = place(block, &random_profile(&mut rng, m));
        let u = DerivedVector::new(omega.eval(&z1)?, z1)?;
        let v = DerivedVector::new(omega.eval(&z2)?, z2)?;
        let denom = derived_norm(omega, &u, space)? + derived_norm(omega, &v, space)?;
        if denom == 0.0 {
            return Ok(0.0);
        }
        let w = DerivedVector::new(u.y.add(&v.y), u.z.add(&v.z))?;
        Ok(derived_norm(omega, &w, space)? / denom)
    })?;
    Ok(value)
}

/// Heuristic singularity evidence over the blocks of `partition`: for the
/// first `m` blocks, the gap on the last full block and the gap on the
/// span of the normalized flat block vectors `u_1..u_m`, measured against
/// the linear map `u_j -> Omega(u_j)`.
pub fn singularity_probe(
    omega: &DerivationSpec,
    space: &SpaceSpec,
    partition: &Partition,
    samples: usize,
    seed: u64,
) -> Result<Report> {
    check_samples(samples)?;
    let dim = partition.max_index();
    let units = partition
        .blocks()
        .iter()
        .map(|b| {
            let v = Vector::indicator(b, dim);
            Ok(v.scale(1.0 / norm(space, &v)?))
        })
        .collect::<Result<Vec<Vector>>>()?;
    let images = units
        .iter()
        .map(|u| omega.eval(u))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(["blocks", "block_size", "full_gap", "diagonal_gap"]);
    let (mut worst_full, mut worst_diag) = (0.0f64, 0.0f64);
    for (m, block) in partition.blocks().iter().enumerate() {
        let full = triviality_gap(omega, space, block, samples, seed)?.value;
        let (diag, _) = if omega.is_linear() {
            (0.0, 0)
        } else {
            sup(samples, |k| {
                let c = coefficients(k, m + 1, &mut stream(seed, k));
                let x = c
                    .iter()
                    .zip(&units)
                    .fold(Vector::zeros(dim), |acc, (c, u)| acc.add(&u.scale(*c)));
                let lx = c
                    .iter()
                    .zip(&images)
                    .fold(Vector::zeros(dim), |acc, (c, u)| acc.add(&u.scale(*c)));
                let nx = norm(space, &x)?;
                if nx == 0.0 {
                    return Ok(0.0);
                }
                Ok(norm(space, &omega.eval(&x)?.sub(&lx).resized(dim))? / nx)
            })?
        };
        worst_full = worst_full.max(full);
        worst_diag = worst_diag.max(diag);
        table.push(vec![(m + 1) as f64, block.len() as f64, full, diag]);
    }
    let mut report = Report::new("singularity-probe");
    report.heuristic = true;
    report.scalar(
        "max_full_gap",
        Measured::new(worst_full, 0.0, Provenance::Sampled),
    );
    report.scalar(
        "max_diagonal_gap",
        Measured::new(worst_diag, 0.0, Provenance::Sampled),
    );
    report.table("gaps", table);
    report.note(format!("samples={samples} seed={seed}"));
    report.note("finite-scale evidence only: bounded diagonal gaps hint at strict non-singularity, growing full gaps at non-triviality");
    Ok(report)
}

/// Closed-form value of the A-parameter.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Analytic {
    pub value: f64,
    pub formula: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AParamResult {
    pub n: usize,
    /// `||x_1 + ... + x_n||` for the witness blocks.
    pub lower_bound: f64,
    /// The sum `x_1 + ... + x_n` of normalized successive blocks.
    pub witness: Vector,
    pub analytic: Option<Analytic>,
}

pub fn analytic_a(space: &SpaceSpec, n: usize) -> Option<Analytic> {
    let n = n as f64;
    match space {
        SpaceSpec::Lp(p) => Some(Analytic {
            value: n.powf(1.0 / p),
            formula: "n^(1/p)",
        }),
        SpaceSpec::WeightedLp { p, .. } => Some(Analytic {
            value: n.powf(1.0 / p),
            formula: "n^(1/p)",
        }),
        SpaceSpec::Lorentz { p, q } => Some(Analytic {
            value: n.powf(1.0 / p.min(*q)),
            formula: "n^(1/min(p,q))",
        }),
        _ => None,
    }
}

/// Largest support hull for spaces whose norm is costly to evaluate.
const COSTLY_HULL: usize = 64;

fn costly(space: &SpaceSpec) -> bool {
    match space {
        SpaceSpec::TsirelsonT | SpaceSpec::Tsirelson2 | SpaceSpec::Interpolated(_) => true,
        SpaceSpec::DualOf(_) => !space.exact_value(),
        SpaceSpec::Convexified { base, .. } | SpaceSpec::Restricted { base, .. } => costly(base),
        SpaceSpec::Amalgam { outer, inner, .. } => costly(outer) || inner.iter().any(costly),
        _ => false,
    }
}

/// Successive blocks `n < B_1 < ... < B_n` with widths `widths`, block `i`
/// carrying the profile `j^(-beta_i)`.
#[derive(Clone, Debug)]
struct Layout {
    widths: Vec<usize>,
    betas: Vec<f64>,
}

impl Layout {
    fn hull(&self, n: usize) -> usize {
        n + self.widths.iter().sum::<usize>()
    }

    /// Sum of the normalized blocks, or `None` when a block cannot be normed.
    fn witness(&self, space: &SpaceSpec, n: usize) -> Result<Option<Vector>> {
        let dim = self.hull(n);
        let mut out = vec![0.0; dim];
        let mut start = n;
        for (w, beta) in self.widths.iter().zip(&self.betas) {
            let mut block = vec![0.0; dim];
            for j in 0..*w {
                block[start + j] = ((j + 1) as f64).powf(-beta);
            }
            let v = Vector::from_slice(&block);
            if space.check_vector(&v).is_err() {
                return Ok(None);
            }
            let nv = norm(space, &v)?;
            if nv == 0.0 || !nv.is_finite() {
                return Ok(None);
            }
            for j in 0..*w {
                out[start + j] = block[start + j] / nv;
            }
            start += w;
        }
        Ok(Some(Vector::from_slice(&out)))
    }

    fn value(&self, space: &SpaceSpec, n: usize) -> Result<Option<(f64, Vector)>> {
        match self.witness(space, n)? {
            Some(x) => Ok(Some((norm(space, &x)?, x))),
            None => Ok(None),
        }
    }
}

fn flat(widths: Vec<usize>) -> Layout {
    let betas = vec![0.0; widths.len()];
    Layout { widths, betas }
}

fn initial_layouts(n: usize, room: usize) -> Vec<Layout> {
    let mut out = Vec::new();
    let mut w = 1;
    while n * w <= room {
        out.push(flat(vec![w; n]));
        w *= 2;
    }
    for r in [1.5f64, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 32.0] {
        let widths: Vec<f64> = (0..n).map(|i| r.powi(i as i32).round()).collect();
        if widths.iter().sum::<f64>() <= room as f64 {
            let widths: Vec<usize> = widths.iter().map(|w| *w as usize).collect();
            let mut rev = widths.clone();
            rev.reverse();
            out.push(flat(widths));
            out.push(flat(rev));
        }
    }
    out
}

/// Searches `n` normalized successive blocks, all supported in `1..=dim`,
/// maximizing the norm of their sum: flat blocks of equal widths,
/// geometrically growing or shrinking widths, then `budget` steps of
/// randomized ascent over widths and decay profiles.
pub fn a_param(
    space: &SpaceSpec,
    n: usize,
    dim: usize,
    budget: usize,
    seed: u64,
) -> Result<AParamResult> {
    space.validate()?;
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let mut dim = dim;
    if let SpaceSpec::WeightedLp { weight, .. } = space {
        dim = dim.min(weight.dim());
    }
    if costly(space) {
        dim = dim.min(COSTLY_HULL.max(2 * n));
    }
    if dim < 2 * n {
        return Err(Error::InsufficientDimension {
            needed: 2 * n,
            available: dim,
        });
    }
    let room = dim - n;
    let mut best: Option<(f64, Vector, Layout)> = None;
    for layout in initial_layouts(n, room) {
        if let Some((v, x)) = layout.value(space, n)? {
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, x, layout));
            }
        }
    }
    let (mut value, mut witness, mut layout) = best.ok_or_else(|| {
        Error::NotEvaluable(format!(
            "no admissible block layout for {space} in dimension {dim}"
        ))
    })?;
    let mut rng = stream(seed, 0);
    for _ in 0..budget {
        let mut next = layout.clone();
        let i = rng.random_range(0..n);
        if rng.random_bool(0.5) {
            let f: f64 = rng.random_range(0.5..2.0);
            next.widths[i] = ((next.widths[i] as f64 * f).round() as usize).clamp(1, room);
            if next.hull(n) > dim {
                continue;
            }
        } else {
            next.betas[i] = (next.betas[i] + rng.random_range(-0.3..0.3)).clamp(0.0, 1.5);
        }
        if let Some((v, x)) = next.value(space, n)? {
            if v > value {
                (value, witness, layout) = (v, x, next);
            }
        }
    }
    Ok(AParamResult {
        n,
        lower_bound: value,
        witness,
        analytic: analytic_a(space, n),
    })
}

/// Least-squares fit of `log y = alpha log n + c`; with a single point the
/// line passes through the origin.
pub fn fit_exponent(ns: &[usize], ys: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|n| (*n as f64).ln()).collect();
    let ls: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    if xs.len() == 1 {
        return if xs[0] == 0.0 { 0.0 } else { ls[0] / xs[0] };
    }
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ls.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Search settings shared by the A-parameter runs of a scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AParamOptions {
    pub dim: usize,
    pub budget: usize,
    pub seed: u64,
}

impl Default for AParamOptions {
    fn default() -> Self {
        Self {
            dim: 4096,
            budget: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalePredicates {
    pub a_different: bool,
    pub a_interpolates: bool,
    /// Fitted exponents of `X0`, `X1` and `X_theta`.
    pub exponents: [f64; 3],
    /// Rows `n, A_X0(n), A_X1(n), A_Xtheta(n)`.
    pub table: Table,
    pub heuristic: bool,
}

/// Fits A-parameter exponents of `X0`, `X1` and `X_theta` over `n_range`.
pub fn scale_predicates(
    couple: &CoupleSpec,
    n_range: &[usize],
    tol: f64,
    opts: &AParamOptions,
) -> Result<ScalePredicates> {
    couple.validate()?;
    if n_range.is_empty() {
        return Err(invalid("n_range", "must be nonempty"));
    }
    let spaces = [
        couple.x0.clone(),
        couple.x1.clone(),
        couple.space_at(couple.theta)?,
    ];
    let mut table = Table::new(["n", "a_x0", "a_x1", "a_xtheta"]);
    let mut curves = [Vec::new(), Vec::new(), Vec::new()];
    for &n in n_range {
        let mut row = vec![n as f64];
        for (k, s) in spaces.iter().enumerate() {
            let a = a_param(s, n, opts.dim, opts.budget, opts.seed)?.lower_bound;
            curves[k].push(a);
            row.push(a);
        }
        table.push(row);
    }
    let exponents = curves.map(|c| fit_exponent(n_range, &c));
    let t = couple.theta;
    Ok(ScalePredicates {
        a_different: (exponents[0] - exponents[1]).abs() > tol,
        a_interpolates: ((1.0 - t) * exponents[0] + t * exponents[1] - exponents[2]).abs() <= tol,
        exponents,
        table,
        heuristic: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivations::kalton_peck;

    fn kp() -> DerivationSpec {
        DerivationSpec::kalton_peck(1.0, SpaceSpec::Lp(2.0))
    }

    #[test]
    fn linear_diagonal_is_trivial() {
        let f = DerivationSpec::LinearDiagonal(Vector::from_slice(&[0.3, -1.0, 2.0, 0.0, 5.0]));
        let b = IndexSet::interval(1, 5);
        let l2 = SpaceSpec::Lp(2.0);
        assert_eq!(triviality_gap(&f, &l2, &b, 50, 1).unwrap().value, 0.0);
        assert_eq!(quasilinearity_constant(&f, &l2, &b, 50, 1).unwrap(), 0.0);
        assert_eq!(centralizer_constant(&f, &l2, &b, 50, 1).unwrap(), 0.0);
        let r = singularity_probe(&f, &l2, &Partition::uniform(1, 5), 20, 1).unwrap();
        assert_eq!(r.value("max_full_gap"), Some(0.0));
        assert_eq!(r.value("max_diagonal_gap"), Some(0.0));
    }

    #[test]
    fn kalton_peck_gap_grows() {
        let l2 = SpaceSpec::Lp(2.0);
        let gaps: Vec<f64> = (2..=7)
            .map(|k| {
                triviality_gap(&kp(), &l2, &Partition::dyadic_block(k), 100, 3)
                    .unwrap()
                    .value
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] > w[0]), "{gaps:?}");
        // The flat vector attains log(sqrt(m)).
        assert!((gaps[5] - 0.5 * 64f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn constants_scale_and_extend() {
        let l2 = SpaceSpec::Lp(2.0);
        let b = IndexSet::interval(1, 16);
        let q = quasilinearity_constant(&kp(), &l2, &b, 200, 9).unwrap();
        let q3 =
            quasilinearity_constant(&DerivationSpec::scaled(-3.0, kp()), &l2, &b, 200, 9).unwrap();
        assert!(q > 0.0 && q.is_finite());
        assert!((q3 - 3.0 * q).abs() < 1e-9 * q3);
        let more = quasilinearity_constant(&kp(), &l2, &b, 400, 9).unwrap();
        assert!(more >= q);
        let c = centralizer_constant(&kp(), &l2, &b, 200, 9).unwrap();
        assert!(c > 0.0 && c.is_finite());
        assert_eq!(
            bounded_equivalence(&kp(), &kp(), &l2, &b, 50, 0).unwrap(),
            0.0
        );
    }

    #[test]
    fn quasi_triangle_is_at_least_one() {
        let l2 = SpaceSpec::Lp(2.0);
        let q = quasi_triangle_constant(&kp(), &l2, &IndexSet::interval(1, 8), 100, 2).unwrap();
        assert!((1.0..10.0).contains(&q), "{q}");
    }

    #[test]
    fn constant_multiplier_commutes() {
        let x = Vector::from_slice(&[1.0, 0.5, -3.0]);
        let l2 = SpaceSpec::Lp(2.0);
        let a = kalton_peck(&x.scale(-1.7), &l2, 1.0).unwrap();
        let b = kalton_peck(&x, &l2, 1.0).unwrap().scale(-1.7);
        assert!(a.sub(&b).max_abs() < 1e-14);
    }

    #[test]
    fn a_param_closed_forms() {
        let w = Vector::new((1..=64).map(|i| 1.0 + (i as f64).sin().abs()).collect()).unwrap();
        let spaces = [
            SpaceSpec::Lp(2.0),
            SpaceSpec::Lp(1.0),
            SpaceSpec::Lp(f64::INFINITY),
            SpaceSpec::weighted(3.0, w).unwrap(),
            SpaceSpec::lorentz(2.0, 4.0).unwrap(),
        ];
        for s in &spaces {
            for n in 1..=8 {
                let r = a_param(s, n, 64, 20, 0).unwrap();
                let a = r.analytic.unwrap().value;
                assert!(
                    (r.lower_bound - a).abs() < 1e-9,
                    "{s} n={n}: {} vs {a}",
                    r.lower_bound
                );
            }
        }
        assert!(
            (a_param(&SpaceSpec::Lp(2.0), 4, 64, 0, 0)
                .unwrap()
                .lower_bound
                - 2.0)
                .abs()
                < 1e-12
        );
        assert!(matches!(
            a_param(&SpaceSpec::Lp(2.0), 8, 15, 0, 0),
            Err(Error::InsufficientDimension {
                needed: 16,
                available: 15
            })
        ));
    }

    #[test]
    fn a_param_never_exceeds_lorentz_value() {
        let s = SpaceSpec::lorentz(3.0, 1.5).unwrap();
        for n in [2, 4] {
            let r = a_param(&s, n, 512, 100, 4).unwrap();
            assert!(r.lower_bound <= r.analytic.unwrap().value + 1e-9);
            assert!(r.lower_bound >= (n as f64).powf(1.0 / 3.0) - 1e-9);
        }
    }

    #[test]
    fn fit_recovers_power_laws() {
        let ns = [2, 4, 8, 16];
        let ys: Vec<f64> = ns.iter().map(|n| 0.7 * (*n as f64).powf(0.5)).collect();
        assert!((fit_exponent(&ns, &ys) - 0.5).abs() < 1e-12);
        assert!((fit_exponent(&[4], &[2.0]) - 0.5).abs() < 1e-12);
    }
}
