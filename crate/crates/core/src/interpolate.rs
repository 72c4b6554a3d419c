//! Calderón-product norms by Lozanovskii factorization.
//!
//! For `x != 0` the factors are parameterized by a log-ratio `s` on the
//! support of `x`:
//!
//! ```text
//! a0 = |x| exp(theta s),   a1 = |x| exp(-(1 - theta) s),
//! G(s) = (1 - theta) log ||a0||_0 + theta log ||a1||_1,
//! ```
//!
//! so `|x| = a0^(1-theta) a1^theta` holds exactly and `exp G` is the Calderón
//! bound of the factorization. `G` is convex and invariant under adding a
//! constant to `s`; the returned factorization fixes that constant so that
//! `||a0||_0 = ||a1||_1`.
//!
//! Optimality is certified by a duality gap when both norms have closed-form
//! functionals: for any `u0`, `u1` in the dual unit balls,
//! `sum |x_i| u0_i^(1-theta) u1_i^theta` is a lower bound for the Calderón norm.
//! Otherwise the certificate is a first-order stationarity residual.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::optim::{self, Evaluation};
use crate::report::{Measured, Provenance, Report, Table};
use crate::spaces::{eval, exact_dual, norm, SpaceSpec};
use crate::vector::Vector;

pub const DEFAULT_EPS: f64 = 1e-6;

/// Total BFGS iterations allowed per factorization.
const ITERATION_CAP: usize = 100_000;
const ROUNDS: usize = 8;
const MAX_SCALE: f64 = 1e4;
/// Oracle calls and local pairwise steps per call for duality couples.
const FW_CAP: usize = 20_000;
const LOCAL_STEPS: usize = 1000;
/// Local steps continue while the pairwise gap exceeds this share of the last oracle gap.
const LAZY: f64 = 0.25;

#[derive(Clone, Debug, PartialEq)]
pub struct CoupleSpec {
    pub x0: SpaceSpec,
    pub x1: SpaceSpec,
    pub theta: f64,
}

impl CoupleSpec {
    pub fn new(x0: SpaceSpec, x1: SpaceSpec, theta: f64) -> Result<Self> {
        let c = Self { x0, x1, theta };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(invalid("theta", format!("{} outside (0, 1)", self.theta)));
        }
        self.x0.validate()?;
        self.x1.validate()
    }

    /// The same pair of spaces at another parameter.
    pub fn at(&self, theta: f64) -> Result<Self> {
        Self::new(self.x0.clone(), self.x1.clone(), theta)
    }

    /// The interpolation space at `theta` in `[0, 1]`, in closed form when known.
    pub fn space_at(&self, theta: f64) -> Result<SpaceSpec> {
        if theta == 0.0 {
            Ok(self.x0.clone())
        } else if theta == 1.0 {
            Ok(self.x1.clone())
        } else {
            Ok(SpaceSpec::interpolated(self.at(theta)?).simplified())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Certificate {
    /// Closed-form optimum (equal couple).
    Exact,
    /// Relative duality gap at most `eps`.
    DualityGap,
    /// Stationarity residual at most `sqrt(eps)`; no closed-form lower bound available.
    Stationarity,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Factorization {
    pub a0: Vector,
    pub a1: Vector,
    /// Log-ratio parameter, zero off the support of `x`.
    pub s: Vector,
    /// `||a0||_0^(1-theta) ||a1||_1^theta`.
    pub bound: f64,
    pub eps: f64,
    pub lower_bound: Option<f64>,
    /// Euclidean norm of the smallest convex combination of `pi0 - pi1` over
    /// nearby iterates, where `pi_k = a_k u_k / ||a_k||`.
    pub residual: f64,
    pub certificate: Certificate,
    pub iterations: usize,
}

struct Problem<'a> {
    couple: &'a CoupleSpec,
    dim: usize,
    support: Vec<usize>,
    absx: Vec<f64>,
}

struct Point {
    g: f64,
    n0: f64,
    n1: f64,
    a0: Vec<f64>,
    a1: Vec<f64>,
    u0: Vec<f64>,
    u1: Vec<f64>,
}

impl Point {
    /// `pi0 - pi1` restricted to the support.
    fn pis(&self, support: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let p0 = support
            .iter()
            .map(|i| self.a0[*i] * self.u0[*i] / self.n0)
            .collect();
        let p1 = support
            .iter()
            .map(|i| self.a1[*i] * self.u1[*i] / self.n1)
            .collect();
        (p0, p1)
    }
}

impl<'a> Problem<'a> {
    fn new(couple: &'a CoupleSpec, x: &Vector) -> Self {
        let support: Vec<usize> = (0..x.dim()).filter(|i| x.as_slice()[*i] != 0.0).collect();
        let absx = support.iter().map(|i| x.as_slice()[*i].abs()).collect();
        Self {
            couple,
            dim: x.dim(),
            support,
            absx,
        }
    }

    fn theta(&self) -> f64 {
        self.couple.theta
    }

    /// Best start of the form `s = beta log(|x| / max |x|)`; `l_p` couples
    /// are optimal at `beta = p/p0 - p/p1`.
    fn warm_start(&self) -> Result<Vec<f64>> {
        let top = self.absx.iter().copied().fold(0.0, f64::max);
        let logs: Vec<f64> = self.absx.iter().map(|v| (v / top).ln()).collect();
        let mut best = (f64::INFINITY, vec![0.0; logs.len()]);
        for beta in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, -0.5, -1.0, -2.0, -4.0, -8.0] {
            let s: Vec<f64> = logs.iter().map(|l| beta * l).collect();
            let g = self.point(&s)?.g;
            if g < best.0 {
                best = (g, s);
            }
        }
        Ok(best.1)
    }

    fn factors(&self, s: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let t = self.theta();
        let mut a0 = vec![0.0; self.dim];
        let mut a1 = vec![0.0; self.dim];
        for ((i, x), si) in self.support.iter().zip(&self.absx).zip(s) {
            a0[*i] = x * (t * si).exp();
            a1[*i] = x * (-(1.0 - t) * si).exp();
        }
        (a0, a1)
    }

    fn point(&self, s: &[f64]) -> Result<Point> {
        let t = self.theta();
        let (a0, a1) = self.factors(s);
        let (n0, u0) = eval(&self.couple.x0, &a0)?;
        let (n1, u1) = eval(&self.couple.x1, &a1)?;
        let g = (1.0 - t) * n0.ln() + t * n1.ln();
        Ok(Point {
            g: if g.is_finite() { g } else { f64::INFINITY },
            n0,
            n1,
            a0,
            a1,
            u0,
            u1,
        })
    }

    /// Diagonal change of variables `s = c v` with `c_j = (max mu / mu_j)^(1/2)`.
    fn scaling(&self, s: &[f64]) -> Result<Vec<f64>> {
        let p = self.point(s)?;
        if !p.g.is_finite() {
            return Ok(vec![1.0; s.len()]);
        }
        let t = self.theta();
        let (p0, p1) = p.pis(&self.support);
        let mu: Vec<f64> = p0
            .iter()
            .zip(&p1)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect();
        let top = mu.iter().copied().fold(0.0, f64::max);
        Ok(mu
            .iter()
            .map(|m| {
                if *m > 0.0 {
                    (top / m).sqrt().min(MAX_SCALE)
                } else {
                    1.0
                }
            })
            .collect())
    }

    fn objective(&self, s: &[f64]) -> Result<Evaluation> {
        let t = self.theta();
        let p = self.point(s)?;
        if !p.g.is_finite() {
            return Ok(Evaluation {
                f: f64::INFINITY,
                grad: vec![0.0; s.len()],
            });
        }
        let (p0, p1) = p.pis(&self.support);
        let grad = p0
            .iter()
            .zip(&p1)
            .map(|(a, b)| t * (1.0 - t) * (a - b))
            .collect();
        Ok(Evaluation { f: p.g, grad })
    }

    fn certifiable(&self) -> bool {
        self.couple.x0.exact_value() && self.couple.x1.exact_value()
    }

    /// Lower bound from rescaling mixtures of the two measures into each
    /// dual ball, when both duals have closed forms.
    fn projected_bound(&self, at: &Point) -> Option<f64> {
        let c = self.couple;
        let t = self.theta();
        let mut best: Option<f64> = None;
        let (p0, p1) = at.pis(&self.support);
        for w in [0.0, 0.25, 0.5, 0.75, 1.0, 1.0 - t] {
            let pi: Vec<f64> = p0
                .iter()
                .zip(&p1)
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect();
            let mut v0 = vec![0.0; self.dim];
            let mut v1 = vec![0.0; self.dim];
            for (k, i) in self.support.iter().enumerate() {
                v0[*i] = pi[k] / at.a0[*i];
                v1[*i] = pi[k] / at.a1[*i];
            }
            let (d0, d1) = (exact_dual(&c.x0, &v0)?, exact_dual(&c.x1, &v1)?);
            let v = pi.iter().sum::<f64>() / (d0.powf(1.0 - t) * d1.powf(t));
            if v.is_finite() && v > 0.0 {
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        best
    }

    /// Best lower bound available from closed-form duals and bundle functionals.
    fn lower_bound(&self, m: &optim::Minimum, at: &Point) -> Result<Option<f64>> {
        let c = self.couple;
        if !self.certifiable() {
            return Ok(None);
        }
        let t = self.theta();
        let mut best: Option<f64> = self.projected_bound(at);
        let mut offer = |v: f64| {
            if v.is_finite() && v > 0.0 {
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        };

        if c.x0.exact_functional() && c.x1.exact_functional() {
            let mut u0s = Vec::new();
            let mut u1s = Vec::new();
            for x in &m.bundle {
                let p = self.point(x)?;
                u0s.push(self.support.iter().map(|i| p.u0[*i]).collect::<Vec<f64>>());
                u1s.push(self.support.iter().map(|i| p.u1[*i]).collect::<Vec<f64>>());
            }
            if !u0s.is_empty() {
                offer(bundle_bound(&self.absx, &u0s, &u1s, &m.weights, t));
            }
        }
        Ok(best)
    }
}

/// Maximizes `sum x_i (U0 l)_i^(1-t) (U1 m)_i^t` over pairs of simplex
/// weights by exponentiated-gradient ascent, starting from `start`.
fn bundle_bound(x: &[f64], u0s: &[Vec<f64>], u1s: &[Vec<f64>], start: &[f64], t: f64) -> f64 {
    let k = u0s.len();
    let n = x.len();
    let mix = |w: &[f64], us: &[Vec<f64>]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..k).map(|j| w[j] * us[j][i]).sum())
            .collect()
    };
    let value = |l: &[f64], m: &[f64]| -> f64 {
        let (v0, v1) = (mix(l, u0s), mix(m, u1s));
        (0..n)
            .map(|i| x[i] * v0[i].powf(1.0 - t) * v1[i].powf(t))
            .sum()
    };
    let uniform = 1.0 / k as f64;
    let mut l: Vec<f64> = start.iter().map(|w| 0.9 * w + 0.1 * uniform).collect();
    let mut m = l.clone();
    let mut best = value(&l, &m).max(value(start, start));
    let mut eta = 0.5;
    for _ in 0..150 {
        let (v0, v1) = (mix(&l, u0s), mix(&m, u1s));
        let mut gl = vec![0.0; k];
        let mut gm = vec![0.0; k];
        for i in 0..n {
            if v0[i] <= 0.0 || v1[i] <= 0.0 {
                continue;
            }
            let r = v1[i] / v0[i];
            let c0 = x[i] * (1.0 - t) * r.powf(t);
            let c1 = x[i] * t * r.powf(t - 1.0);
            for j in 0..k {
                gl[j] += c0 * u0s[j][i];
                gm[j] += c1 * u1s[j][i];
            }
        }
        let scale = gl
            .iter()
            .chain(&gm)
            .fold(0.0f64, |a, b| a.max(b.abs()))
            .max(1e-300);
        let step = |w: &[f64], g: &[f64]| -> Vec<f64> {
            let raw: Vec<f64> = w
                .iter()
                .zip(g)
                .map(|(wi, gi)| wi * (eta * gi / scale).exp())
                .collect();
            let z: f64 = raw.iter().sum();
            raw.iter().map(|r| r / z).collect()
        };
        let (nl, nm) = (step(&l, &gl), step(&m, &gm));
        let v = value(&nl, &nm);
        if v >= best {
            best = v;
            l = nl;
            m = nm;
            eta *= 1.2;
        } else {
            eta *= 0.5;
            if eta < 1e-8 {
                break;
            }
        }
    }
    best
}

/// Optimal factorization of `x` together with the mixed measure
/// `(1-theta) pi0 + theta pi1` on the full index range.
fn solve(
    couple: &CoupleSpec,
    x: &Vector,
    eps: f64,
    strict: bool,
    polish: bool,
) -> Result<(Factorization, Vec<f64>)> {
    couple.validate()?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(invalid("eps", format!("{eps} must be > 0")));
    }
    couple.x0.check_vector(x)?;
    couple.x1.check_vector(x)?;
    if x.is_zero() {
        return Err(Error::ZeroVector);
    }
    let t = couple.theta;
    let prob = Problem::new(couple, x);

    if couple.x0 == couple.x1 {
        let a = x.abs();
        let (n, u) = eval(&couple.x0, a.as_slice())?;
        let measure = a
            .as_slice()
            .iter()
            .zip(&u)
            .map(|(ai, ui)| ai * ui / n)
            .collect();
        return Ok((
            Factorization {
                a0: a.clone(),
                a1: a,
                s: Vector::zeros(x.dim()),
                bound: n,
                eps,
                lower_bound: Some(n),
                residual: 0.0,
                certificate: Certificate::Exact,
                iterations: 0,
            },
            measure,
        ));
    }

    if let Some((primal, swapped)) = duality_couple(couple) {
        return solve_duality(primal, swapped, x, eps, strict);
    }

    let opts = optim::Options {
        max_iter: 4000,
        ftol: 1e-15,
        gtol: 1e-14,
        window: 10,
        bundle_radius: 1e-3,
    };
    // Searched dual norms are too noisy for the start scan.
    let mut s = if couple.x0.exact_value() && couple.x1.exact_value() {
        prob.warm_start()?
    } else {
        vec![0.0; prob.support.len()]
    };
    let mut iterations = 0;
    let mut outcome = None;
    let mut last_f = f64::INFINITY;
    for _ in 0..ROUNDS {
        let done = |v: &[f64]| -> Result<bool> {
            if !prob.certifiable() {
                return Ok(false);
            }
            let at = prob.point(v)?;
            Ok(prob
                .projected_bound(&at)
                .is_some_and(|lb| at.g.exp() / lb - 1.0 <= eps))
        };
        // Jacobi scaling: the curvature in s_j is proportional to the
        // measure at j, which can span many orders of magnitude.
        let scale = prob.scaling(&s)?;
        let to_s = |v: &[f64]| -> Vec<f64> { v.iter().zip(&scale).map(|(a, c)| a * c).collect() };
        let scaled = |v: &[f64]| -> Result<Evaluation> {
            let mut e = prob.objective(&to_s(v))?;
            e.grad.iter_mut().zip(&scale).for_each(|(g, c)| *g *= c);
            Ok(e)
        };
        let v0: Vec<f64> = s.iter().zip(&scale).map(|(a, c)| a / c).collect();
        let mut m = optim::minimize_until(scaled, v0, &opts, |v: &[f64]| done(&to_s(v)))?;
        m.x = to_s(&m.x);
        m.bundle = m.bundle.iter().map(|v| to_s(v)).collect();
        iterations += m.iterations;
        s = m.x.clone();
        let at = prob.point(&s)?;
        let ub = at.g.exp();
        let lb = prob.lower_bound(&m, &at)?;
        let residual = m.residual / (t * (1.0 - t));
        let gap_ok = lb.is_some_and(|lb| ub / lb - 1.0 <= eps);
        let stalled = last_f - m.f <= 1e-15 * m.f.abs().max(1.0);
        last_f = m.f;
        outcome = Some((lb, residual, ub));
        if gap_ok || (lb.is_none() && residual <= eps.sqrt() * 1e-2) || iterations > ITERATION_CAP {
            break;
        }
        if stalled && lb.is_none() {
            break;
        }
        let (s2, f2) = optim::coordinate_sweep(|v: &[f64]| Ok(prob.point(v)?.g), s, m.f)?;
        s = s2;
        last_f = last_f.min(f2);
    }
    let (lb, residual, ub) = outcome.unwrap();
    let certificate = if lb.is_some_and(|lb| ub / lb - 1.0 <= eps) {
        Some(Certificate::DualityGap)
    } else if residual <= eps.sqrt() {
        Some(Certificate::Stationarity)
    } else {
        None
    };
    if certificate.is_none() && strict {
        return Err(Error::NonConvergence {
            iterations,
            residual,
            gap: lb.map_or(f64::NAN, |lb| ub / lb - 1.0),
        });
    }

    // Derivations need s itself, not only G, to be accurate.
    if polish && certificate.is_some() {
        let before = prob.point(&s)?.g;
        let m = optim::minimize(
            |v: &[f64]| prob.objective(v),
            s.clone(),
            &optim::Options {
                max_iter: 400,
                ..opts
            },
        )?;
        iterations += m.iterations;
        if m.f <= before {
            s = m.x;
        }
    }

    // Balance the two norms.
    let at = prob.point(&s)?;
    let shift = (at.n1 / at.n0).ln();
    let s: Vec<f64> = s.iter().map(|v| v + shift).collect();
    let at = prob.point(&s)?;
    let (p0, p1) = at.pis(&prob.support);
    let mut full_s = vec![0.0; x.dim()];
    let mut measure = vec![0.0; x.dim()];
    for (j, i) in prob.support.iter().enumerate() {
        full_s[*i] = s[j];
        measure[*i] = (1.0 - t) * p0[j] + t * p1[j];
    }
    Ok((
        Factorization {
            a0: Vector::new(at.a0)?,
            a1: Vector::new(at.a1)?,
            s: Vector::new(full_s)?,
            bound: at.g.exp(),
            eps,
            lower_bound: lb,
            residual,
            certificate: certificate.unwrap_or(Certificate::Stationarity),
            iterations,
        },
        measure,
    ))
}

/// `(X, X*)` or `(X*, X)` at `1/2` with an exact norm on `X` and either no
/// closed form for `X*` or a rearrangement-kinked `X` (Lorentz), where the
/// generic solver stalls. Returns `X` and whether it sits second.
fn duality_couple(couple: &CoupleSpec) -> Option<(&SpaceSpec, bool)> {
    if couple.theta != 0.5 {
        return None;
    }
    let fits = |p: &SpaceSpec, d: &SpaceSpec| {
        matches!(d, SpaceSpec::DualOf(b) if b.as_ref() == p)
            && p.exact_value()
            && p.exact_functional()
            && (!d.exact_value() || matches!(p, SpaceSpec::Lorentz { .. }))
    };
    if fits(&couple.x0, &couple.x1) {
        Some((&couple.x0, false))
    } else if fits(&couple.x1, &couple.x0) {
        Some((&couple.x1, true))
    } else {
        None
    }
}

/// Factorization for a duality couple using only the primal norm.
///
/// With `mu = x^2` and `M = sum mu`, maximize `sum mu_i log u_i` over the
/// dual unit ball, which is the convex hull of the norming functionals the
/// kernel returns; the linear oracle at `u` is the norming functional of
/// `mu / u`. For `N = ||mu / u||` the factors `mu / (u sqrt N)` and `u sqrt N`
/// give the upper bound `sqrt N`, and pairing `u` with `mu / (u N)` gives the
/// lower bound `M / sqrt N`. Steps are pairwise Frank-Wolfe. The gap also
/// bounds the suboptimality of `u`, so `s` is accurate to about `sqrt(2 eps)`
/// in the `mu`-weighted mean square.
fn solve_duality(
    primal: &SpaceSpec,
    swapped: bool,
    x: &Vector,
    eps: f64,
    strict: bool,
) -> Result<(Factorization, Vec<f64>)> {
    let dim = x.dim();
    let support: Vec<usize> = (0..dim).filter(|i| x.as_slice()[*i] != 0.0).collect();
    let mu: Vec<f64> = support.iter().map(|i| x.as_slice()[*i].powi(2)).collect();
    let total: f64 = mu.iter().sum();

    let restrict = |f: &[f64]| -> Vec<f64> { support.iter().map(|i| f[*i]).collect() };
    let mut atoms: Vec<Vec<f64>> = Vec::new();
    for i in &support {
        let mut e = vec![0.0; dim];
        e[*i] = 1.0;
        atoms.push(restrict(&eval(primal, &e)?.1));
    }
    let mut weights = vec![1.0 / atoms.len() as f64; atoms.len()];
    let mix = |atoms: &[Vec<f64>], w: &[f64]| -> Vec<f64> {
        (0..mu.len())
            .map(|k| atoms.iter().zip(w).map(|(f, wj)| wj * f[k]).sum())
            .collect()
    };
    let oracle = |u: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut g = vec![0.0; dim];
        for (k, i) in support.iter().enumerate() {
            g[*i] = mu[k] / u[k];
        }
        let (n, f) = eval(primal, &g)?;
        Ok((n, restrict(&f)))
    };

    let mut iterations = 0;
    let mut u = mix(&atoms, &weights);
    let (mut n, mut next) = oracle(&u)?;
    while n / total - 1.0 > eps && iterations < FW_CAP {
        iterations += 1;
        if !atoms.contains(&next) {
            atoms.push(next);
            weights.push(0.0);
        }
        // Pairwise steps between the best and worst active atoms; the
        // oracle atom is among the candidates.
        for _ in 0..LOCAL_STEPS {
            let grad: Vec<f64> = mu.iter().zip(&u).map(|(m, ui)| m / ui).collect();
            let score = |f: &[f64]| -> f64 { f.iter().zip(&grad).map(|(a, b)| a * b).sum() };
            let scores: Vec<f64> = atoms.iter().map(|f| score(f)).collect();
            let to = (0..atoms.len())
                .max_by(|i, j| scores[*i].total_cmp(&scores[*j]))
                .unwrap();
            let from = (0..atoms.len())
                .filter(|j| weights[*j] > 0.0)
                .min_by(|i, j| scores[*i].total_cmp(&scores[*j]))
                .unwrap();
            if to == from || scores[to] - scores[from] <= LAZY * (n - total) {
                break;
            }
            let d: Vec<f64> = atoms[to]
                .iter()
                .zip(&atoms[from])
                .map(|(a, b)| a - b)
                .collect();
            let step = line_max(&mu, &u, &d, weights[from]);
            if step <= 0.0 {
                break;
            }
            weights[to] += step;
            weights[from] -= step;
            u = mix(&atoms, &weights);
        }
        (atoms, weights) = atoms
            .into_iter()
            .zip(weights)
            .filter(|(_, w)| *w > 0.0)
            .unzip();
        u = mix(&atoms, &weights);
        (n, next) = oracle(&u)?;
    }
    let gap = n / total - 1.0;
    let certificate = (gap <= eps).then_some(Certificate::DualityGap);
    if certificate.is_none() && strict {
        return Err(Error::NonConvergence {
            iterations,
            residual: gap,
            gap,
        });
    }

    let root = n.sqrt();
    let mut fa = vec![0.0; dim];
    let mut fb = vec![0.0; dim];
    let mut s = vec![0.0; dim];
    let mut measure = vec![0.0; dim];
    for (k, i) in support.iter().enumerate() {
        fa[*i] = mu[k] / (u[k] * root);
        fb[*i] = u[k] * root;
        measure[*i] = mu[k] / total;
    }
    let (a0, a1) = if swapped { (fb, fa) } else { (fa, fb) };
    for i in &support {
        s[*i] = 2.0 * (a0[*i] / x.as_slice()[*i].abs()).ln();
    }
    Ok((
        Factorization {
            a0: Vector::new(a0)?,
            a1: Vector::new(a1)?,
            s: Vector::new(s)?,
            bound: root,
            eps,
            lower_bound: Some(total / root),
            residual: gap,
            certificate: certificate.unwrap_or(Certificate::Stationarity),
            iterations,
        },
        measure,
    ))
}

/// Maximizer in `[0, cap]` of `sum mu log(u + g d)`, by bisection on the
/// derivative.
fn line_max(mu: &[f64], u: &[f64], d: &[f64], cap: f64) -> f64 {
    let slope = |g: f64| -> f64 {
        mu.iter()
            .zip(u)
            .zip(d)
            .map(|((m, ui), di)| m * di / (ui + g * di))
            .sum()
    };
    if slope(0.0) <= 0.0 {
        return 0.0;
    }
    // Stay strictly inside the domain so the logs remain finite.
    let room = u
        .iter()
        .zip(d)
        .filter(|(_, di)| **di < 0.0)
        .map(|(ui, di)| -ui / di)
        .fold(f64::INFINITY, f64::min);
    let hi_cap = cap.min(0.999_999 * room);
    if slope(hi_cap) >= 0.0 {
        return hi_cap;
    }
    let (mut lo, mut hi) = (0.0, hi_cap);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Almost optimal Lozanovskii factorization of `x` for the couple.
pub fn lozanovskii_factor(couple: &CoupleSpec, x: &Vector, eps: f64) -> Result<Factorization> {
    solve(couple, x, eps, true, false).map(|r| r.0)
}

/// Calderón-product norm `inf ||y||_0^(1-theta) ||z||_1^theta` over `|x| = |y|^(1-theta) |z|^theta`.
pub fn calderon_norm(couple: &CoupleSpec, x: &Vector, eps: f64) -> Result<f64> {
    if x.is_zero() {
        couple.validate()?;
        return Ok(0.0);
    }
    Ok(lozanovskii_factor(couple, x, eps)?.bound)
}

/// `x log(a1/a0) = -x s` from an almost optimal factorization; zero for `x = 0`.
///
/// Determined only up to a bounded perturbation, so compare results with
/// `diagnostics::bounded_equivalence` rather than pointwise.
pub fn numerical_derivation(couple: &CoupleSpec, x: &Vector, eps: f64) -> Result<Vector> {
    if x.is_zero() {
        couple.validate()?;
        return Ok(Vector::zeros(x.dim()));
    }
    let (f, _) = solve(couple, x, eps, true, true)?;
    Ok(x.hadamard(&f.s).scale(-1.0))
}

/// The objective `G(s)`; entries of `s` off the support of `x` are ignored.
pub fn factorization_objective(couple: &CoupleSpec, x: &Vector, s: &Vector) -> Result<f64> {
    couple.validate()?;
    if x.is_zero() {
        return Err(Error::ZeroVector);
    }
    let prob = Problem::new(couple, x);
    let sv: Vec<f64> = prob.support.iter().map(|i| s.get(i + 1)).collect();
    Ok(prob.point(&sv)?.g)
}

/// Norm and norming functional of an interpolated space, used by `SpaceSpec::Interpolated`.
pub(crate) fn interpolated_eval(couple: &CoupleSpec, a: &[f64]) -> Result<(f64, Vec<f64>)> {
    let x = Vector::new(a.to_vec())?;
    if x.is_zero() {
        return Ok((0.0, vec![0.0; a.len()]));
    }
    let (f, measure) = solve(couple, &x, DEFAULT_EPS, false, false)?;
    let u = a
        .iter()
        .zip(&measure)
        .map(|(ai, mi)| if *ai > 0.0 { f.bound * mi / ai } else { 0.0 })
        .collect();
    Ok((f.bound, u))
}

/// Compares the derivation of `(X_theta0, X_theta1)_eta` with
/// `(theta1 - theta0) Omega_theta`, `theta = (1-eta) theta0 + eta theta1`,
/// on the given samples. Endpoint parameters select the base spaces, and
/// interpolated spaces with known closed forms are used in that form.
pub fn reiteration_check(
    base: &CoupleSpec,
    theta0: f64,
    theta1: f64,
    eta: f64,
    samples: &[Vector],
    eps: f64,
) -> Result<Report> {
    base.validate()?;
    for (name, v) in [("theta0", theta0), ("theta1", theta1)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(invalid(name, format!("{v} outside [0, 1]")));
        }
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(invalid("eta", format!("{eta} outside (0, 1)")));
    }
    let theta = (1.0 - eta) * theta0 + eta * theta1;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid("theta", format!("{theta} outside (0, 1)")));
    }
    let y0 = base.space_at(theta0)?;
    let y1 = base.space_at(theta1)?;
    let reiterated = CoupleSpec::new(y0.clone(), y1.clone(), eta)?;
    let target = base.at(theta)?;
    let x_theta = base.space_at(theta)?;

    let mut report = Report::new("reiteration");
    report.heuristic = true;
    let mut table = Table::new(["sample", "distance"]);
    let mut worst = 0.0f64;
    for (k, x) in samples.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        let got = numerical_derivation(&reiterated, x, eps)?;
        let want = numerical_derivation(&target, x, eps)?.scale(theta1 - theta0);
        let d = norm(&x_theta, &got.sub(&want))? / norm(&x_theta, x)?;
        worst = worst.max(d);
        table.push(vec![k as f64, d]);
    }
    report.scalar("distance", Measured::new(worst, eps, Provenance::Sampled));
    report.scalar("theta", Measured::new(theta, 0.0, Provenance::ClosedForm));
    report.table("samples", table);
    report.note(format!("X_theta0 = {y0}"));
    report.note(format!("X_theta1 = {y1}"));
    report.note(format!("X_theta = {x_theta}"));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::IndexSet;

    fn l1_linf() -> CoupleSpec {
        CoupleSpec::new(SpaceSpec::Lp(1.0), SpaceSpec::Lp(f64::INFINITY), 0.5).unwrap()
    }

    #[test]
    fn l1_linf_closed_form_factors() {
        let x = Vector::from_slice(&[1.0, -2.0, 0.0, 0.5, 3.0]);
        let f = lozanovskii_factor(&l1_linf(), &x, 1e-8).unwrap();
        let n = x.l2();
        for i in 1..=5 {
            let xi = x.get(i);
            assert!((f.a0.get(i) - xi * xi / n).abs() < 1e-5, "a0 {i}");
            let want = if xi != 0.0 { n } else { 0.0 };
            assert!((f.a1.get(i) - want).abs() < 1e-5, "a1 {i}");
        }
        assert!((f.bound - n).abs() < 1e-7 * n);
        assert_eq!(f.certificate, Certificate::DualityGap);
    }

    #[test]
    fn duality_couples_give_l2() {
        let x = Vector::from_slice(&[
            0.3, -1.2, 0.0, 2.5, 0.7, -0.1, 1.9, 0.0, 0.4, -3.1, 0.8, 1.1, -0.6, 0.2, 0.9,
        ]);
        let t2 = SpaceSpec::restricted(SpaceSpec::Tsirelson2, IndexSet::interval(1, 15)).unwrap();
        let lorentz = SpaceSpec::lorentz(2.0, 1.0).unwrap();
        for base in [t2, lorentz] {
            let dual = SpaceSpec::dual(base.clone()).unwrap();
            let c = CoupleSpec::new(base.clone(), dual.clone(), 0.5).unwrap();
            let f = lozanovskii_factor(&c, &x, 1e-7).unwrap();
            let n = x.l2();
            assert_eq!(f.certificate, Certificate::DualityGap);
            assert!(f.lower_bound.unwrap() <= n * (1.0 + 1e-12) && n <= f.bound * (1.0 + 1e-12));
            assert!(f.bound / n - 1.0 <= 1e-7, "{base}: {} vs {n}", f.bound);
            for i in 1..=x.dim() {
                let (a0, a1, xi) = (f.a0.get(i), f.a1.get(i), x.get(i).abs());
                assert!(((a0 * a1).sqrt() - xi).abs() <= 1e-12 * xi.max(1.0));
            }
            let swapped = CoupleSpec::new(dual, base, 0.5).unwrap();
            let g = lozanovskii_factor(&swapped, &x, 1e-7).unwrap();
            assert!((g.bound - f.bound).abs() <= 1e-12 * n);
            assert_eq!(g.a0, f.a1);
        }
    }

    #[test]
    fn calderon_examples() {
        let x = Vector::from_slice(&[1.0, 1.0]);
        let v = calderon_norm(&l1_linf(), &x, 1e-6).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-6);
        assert_eq!(
            calderon_norm(&l1_linf(), &Vector::zeros(3), 1e-6).unwrap(),
            0.0
        );
        assert!(matches!(
            lozanovskii_factor(&l1_linf(), &Vector::zeros(3), 1e-6),
            Err(Error::ZeroVector)
        ));
        assert!(calderon_norm(&l1_linf(), &x, 0.0).is_err());
    }

    #[test]
    fn equal_couple_is_trivial() {
        let c = CoupleSpec::new(SpaceSpec::Tsirelson2, SpaceSpec::Tsirelson2, 0.3).unwrap();
        let x = Vector::from_slice(&[0.0, 1.0, 2.0, -1.0]);
        let f = lozanovskii_factor(&c, &x, 1e-6).unwrap();
        assert_eq!(f.a0, x.abs());
        assert_eq!(f.a1, x.abs());
        assert!(f.s.is_zero());
        assert_eq!(f.bound, norm(&SpaceSpec::Tsirelson2, &x).unwrap());
        assert!(numerical_derivation(&c, &x, 1e-6).unwrap().is_zero());
    }

    #[test]
    fn weighted_factors() {
        let w0 = Vector::from_slice(&[1.0, 2.0, 0.5]);
        let w1 = Vector::from_slice(&[3.0, 0.25, 1.0]);
        let p = 2.0;
        let t = 0.3;
        let c = CoupleSpec::new(
            SpaceSpec::weighted(p, w0.clone()).unwrap(),
            SpaceSpec::weighted(p, w1.clone()).unwrap(),
            t,
        )
        .unwrap();
        let x = Vector::from_slice(&[1.0, -0.5, 2.0]);
        let f = lozanovskii_factor(&c, &x, 1e-9).unwrap();
        for i in 1..=3 {
            let r = w1.get(i) / w0.get(i);
            let want0 = x.get(i).abs() * r.powf(t / p);
            let want1 = x.get(i).abs() * r.powf((t - 1.0) / p);
            assert!((f.a0.get(i) - want0).abs() < 1e-4 * want0, "a0 {i}");
            assert!((f.a1.get(i) - want1).abs() < 1e-4 * want1, "a1 {i}");
        }
        let omega = numerical_derivation(&c, &x, 1e-9).unwrap();
        for i in 1..=3 {
            let want = -x.get(i) * (w1.get(i) / w0.get(i)).ln() / p;
            assert!((omega.get(i) - want).abs() < 1e-4, "omega {i}");
        }
    }

    #[test]
    fn reiteration_degenerate() {
        let base = l1_linf();
        let xs = vec![Vector::from_slice(&[1.0, 2.0, -0.5])];
        let r = reiteration_check(&base, 0.4, 0.4, 0.5, &xs, 1e-6).unwrap();
        assert!(r.value("distance").unwrap() < 1e-12);
    }
}
