//! Dual norms `sup { <x, y> : ||x|| <= 1 }`.
//!
//! Closed forms are used for the `l_p` and weighted `l_p` kinds and for
//! biduals. Otherwise the supremum is searched on the positive orthant by
//! maximizing `log <e^t, |y|> - log ||e^t||` over log-coordinates `t`, with
//! BFGS from several seeded starts followed by a coordinate polish. The
//! reported value is attained by the returned witness, so it is a lower
//! bound for the true dual norm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::optim::{self, Evaluation};
use crate::vector::{IndexSet, Vector};

use super::{eval, SpaceSpec};

pub const DUAL_RESTARTS: usize = 16;
pub const DUAL_BUDGET: usize = 500;

#[derive(Clone, Debug, PartialEq)]
pub struct DualNorm {
    pub value: f64,
    /// Unit vector of the base space with `<witness, y> = value`.
    pub witness: Vector,
}

#[derive(Clone, Debug)]
pub(crate) struct DualOptions {
    pub restarts: usize,
    pub budget: usize,
    pub seed: u64,
}

impl DualOptions {
    /// Lighter settings for dual norms evaluated inside other solvers.
    pub fn internal() -> Self {
        Self {
            restarts: 2,
            budget: 300,
            seed: 0,
        }
    }
}

/// Dual norm of `y` with respect to `space`, using `16` restarts.
pub fn dual_norm(space: &SpaceSpec, y: &Vector, budget: usize, seed: u64) -> Result<DualNorm> {
    space.validate()?;
    let opts = DualOptions {
        restarts: DUAL_RESTARTS,
        budget: budget.max(1),
        seed,
    };
    let a: Vec<f64> = y.as_slice().iter().map(|v| v.abs()).collect();
    let (value, w) = dual_eval(space, &a, &opts)?;
    let witness: Vec<f64> = w
        .iter()
        .zip(y.as_slice())
        .map(|(wi, yi)| if *yi < 0.0 { -wi } else { *wi })
        .collect();
    Ok(DualNorm {
        value,
        witness: Vector::new(witness)?,
    })
}

/// Dual norm on a nonnegative slice; the witness is nonnegative.
pub(crate) fn dual_eval(
    space: &SpaceSpec,
    a: &[f64],
    opts: &DualOptions,
) -> Result<(f64, Vec<f64>)> {
    let d = a.len();
    if a.iter().all(|v| *v == 0.0) {
        return Ok((0.0, vec![0.0; d]));
    }
    match space {
        SpaceSpec::Lp(p) => Ok(lp_dual(*p, a)),
        SpaceSpec::WeightedLp { p, weight } => {
            // x = w^(-1/p) z turns the weighted ball into the l_p ball.
            let w = weight.as_slice();
            let scaled: Vec<f64> = a
                .iter()
                .zip(w)
                .map(|(y, wi)| y * wi.powf(-1.0 / p))
                .collect();
            let (v, z) = lp_dual(*p, &scaled);
            Ok((
                v,
                z.iter()
                    .zip(w)
                    .map(|(zi, wi)| zi * wi.powf(-1.0 / p))
                    .collect(),
            ))
        }
        SpaceSpec::DualOf(base) => {
            let (n, u) = eval(base, a)?;
            Ok((n, u))
        }
        SpaceSpec::Lorentz { p, q } if convex_lorentz(*p, *q) => Ok(lorentz_dual(*p, *q, a)),
        SpaceSpec::Restricted { base, block } if lacunary_t2(base, block) => {
            let masked: Vec<f64> = a
                .iter()
                .enumerate()
                .map(|(i, v)| if block.contains(i + 1) { *v } else { 0.0 })
                .collect();
            Ok(t2_block_dual(&masked))
        }
        _ => search(space, a, opts),
    }
}

fn lp_dual(p: f64, a: &[f64]) -> (f64, Vec<f64>) {
    let d = a.len();
    if p == 1.0 {
        let m = a.iter().copied().fold(0.0, f64::max);
        let k = a.iter().position(|v| *v == m).unwrap();
        let mut w = vec![0.0; d];
        w[k] = 1.0;
        return (m, w);
    }
    if p.is_infinite() {
        return (
            a.iter().sum(),
            a.iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect(),
        );
    }
    let q = p / (p - 1.0);
    let m = a.iter().copied().fold(0.0, f64::max);
    let n = m * a.iter().map(|v| (v / m).powf(q)).sum::<f64>().powf(1.0 / q);
    (n, a.iter().map(|v| (v / n).powf(q - 1.0)).collect())
}

/// `l_{p,q}` with `q <= p` has decreasing rearrangement weights, hence a
/// level-function dual.
pub(crate) fn convex_lorentz(p: f64, q: f64) -> bool {
    p.is_finite() && q <= p
}

/// Dual of `l_{p,q}`, `q <= p`. With `W_k` the cumulative weights and `Y_k`
/// the partial sums of the decreasing rearrangement of `a`, the maximizer is
/// `sigma_k^(q'-1)` where `sigma` is the slope of the least concave majorant
/// of `(W_k, Y_k)`; for `q = 1` it is flat on the first hull segment.
fn lorentz_dual(p: f64, q: f64, a: &[f64]) -> (f64, Vec<f64>) {
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|i, j| a[*j].total_cmp(&a[*i]));
    let e = q / p;
    let mut pts = vec![(0.0, 0.0)];
    for (k, i) in order.iter().enumerate() {
        let last = pts[k];
        pts.push((((k + 1) as f64).powf(e), last.1 + a[*i]));
    }
    let mut hull: Vec<usize> = vec![0];
    for c in 1..pts.len() {
        while let [.., h0, h1] = hull[..] {
            let (a0, b0, c0) = (pts[h0], pts[h1], pts[c]);
            if (b0.1 - a0.1) * (c0.0 - a0.0) <= (c0.1 - a0.1) * (b0.0 - a0.0) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(c);
    }
    let mut x = vec![0.0; a.len()];
    for seg in hull.windows(2) {
        let (h0, h1) = (seg[0], seg[1]);
        let slope = (pts[h1].1 - pts[h0].1) / (pts[h1].0 - pts[h0].0);
        let v = if q == 1.0 {
            f64::from(h0 == 0)
        } else {
            slope.powf(1.0 / (q - 1.0))
        };
        for i in &order[h0..h1] {
            x[*i] = v;
        }
    }
    let (n, _) = super::lorentz_eval(p, q, &x);
    x.iter_mut().for_each(|v| *v /= n);
    (x.iter().zip(a).map(|(xi, ai)| xi * ai).sum(), x)
}

/// On a block `B` with `min B >= |B|` every family of singletons is
/// admissible, so there `T2` is exactly `max(||x||_inf, ||x||_2 / sqrt 2)`.
pub(crate) fn lacunary_t2(base: &SpaceSpec, block: &IndexSet) -> bool {
    matches!(base, SpaceSpec::Tsirelson2) && block.min().is_some_and(|m| m >= block.len())
}

/// Dual of `max(||x||_inf, ||x||_2 / sqrt 2)`: the supremum over
/// `|x_i| <= 1, ||x||_2^2 <= 2` is attained at `min(1, lambda a_i)`.
fn t2_block_dual(a: &[f64]) -> (f64, Vec<f64>) {
    let mut order: Vec<usize> = (0..a.len()).filter(|i| a[*i] > 0.0).collect();
    order.sort_by(|i, j| a[*j].total_cmp(&a[*i]));
    let mut x = vec![0.0; a.len()];
    if order.len() <= 2 {
        for i in &order {
            x[*i] = 1.0;
        }
    } else {
        // At most one coordinate saturates: the second largest always fits
        // under the l_2 budget left by the first.
        let total: f64 = order.iter().map(|i| a[*i] * a[*i]).sum();
        let top = a[order[0]];
        let mut lambda = (2.0 / total).sqrt();
        let mut clipped = 0;
        if lambda * top > 1.0 {
            lambda = (1.0 / (total - top * top)).sqrt();
            clipped = 1;
        }
        for (k, i) in order.iter().enumerate() {
            x[*i] = if k < clipped {
                1.0
            } else {
                (lambda * a[*i]).min(1.0)
            };
        }
    }
    let value = x.iter().zip(a).map(|(xi, ai)| xi * ai).sum();
    (value, x)
}

/// Dual norm of a nonnegative functional when it has a closed form.
pub(crate) fn exact_dual(space: &SpaceSpec, u: &[f64]) -> Option<f64> {
    if u.iter().all(|v| *v == 0.0) {
        return Some(0.0);
    }
    match space {
        SpaceSpec::Lp(_) | SpaceSpec::WeightedLp { .. } => {
            dual_eval(space, u, &DualOptions::internal())
                .ok()
                .map(|r| r.0)
        }
        SpaceSpec::Lorentz { p, q } if convex_lorentz(*p, *q) => {
            dual_eval(space, u, &DualOptions::internal())
                .ok()
                .map(|r| r.0)
        }
        SpaceSpec::Convexified { base, p } => match base.as_ref() {
            SpaceSpec::Lp(r) => Some(lp_dual(r * p, u).0),
            _ => None,
        },
        SpaceSpec::DualOf(base) if base.exact_value() => eval(base, u).ok().map(|r| r.0),
        SpaceSpec::Restricted { base, block } if lacunary_t2(base, block) => {
            dual_eval(space, u, &DualOptions::internal())
                .ok()
                .map(|r| r.0)
        }
        SpaceSpec::Restricted { base, block } => {
            let masked: Vec<f64> = u
                .iter()
                .enumerate()
                .map(|(i, v)| if block.contains(i + 1) { *v } else { 0.0 })
                .collect();
            exact_dual(base, &masked)
        }
        SpaceSpec::Amalgam {
            outer,
            inner,
            partition,
        } => {
            let mut norms = Vec::with_capacity(inner.len());
            for (block, sp) in partition.blocks().iter().zip(inner) {
                let local: Vec<f64> = block
                    .iter()
                    .map(|i| u.get(i - 1).copied().unwrap_or(0.0))
                    .collect();
                norms.push(exact_dual(sp, &local)?);
            }
            exact_dual(outer, &norms)
        }
        _ => None,
    }
}

fn search(space: &SpaceSpec, a: &[f64], opts: &DualOptions) -> Result<(f64, Vec<f64>)> {
    let d = a.len();
    let support: Vec<usize> = (0..d).filter(|i| a[*i] > 0.0).collect();
    let ys: Vec<f64> = support.iter().map(|i| a[*i]).collect();
    let lift = |t: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; d];
        for (k, i) in support.iter().enumerate() {
            x[*i] = t[k].exp();
        }
        x
    };
    // Negative log-ratio and its gradient in t.
    let objective = |t: &[f64]| -> Result<Evaluation> {
        let x = lift(t);
        let (n, u) = eval(space, &x)?;
        if n <= 0.0 || !n.is_finite() {
            return Err(Error::NotEvaluable(format!("{space} returned {n}")));
        }
        let ip: f64 = support.iter().zip(&ys).map(|(i, y)| x[*i] * y).sum();
        let grad = support
            .iter()
            .zip(&ys)
            .map(|(i, y)| x[*i] * u[*i] / n - x[*i] * y / ip)
            .collect();
        Ok(Evaluation {
            f: n.ln() - ip.ln(),
            grad,
        })
    };
    let value_of = |t: &[f64]| -> Result<f64> { objective(t).map(|e| e.f) };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<Vec<f64>> = vec![ys.iter().map(|y| y.ln()).collect(), vec![0.0; ys.len()]];
    while starts.len() < opts.restarts.max(1) {
        let base = &starts[0];
        starts.push(
            base.iter()
                .map(|b| b * rng.random_range(0.0..2.0) + rng.random_range(-1.0..1.0))
                .collect(),
        );
    }
    starts.truncate(opts.restarts.max(1));
    let run_opts = optim::Options {
        max_iter: opts.budget,
        ftol: 1e-15,
        gtol: 1e-10,
        ..optim::Options::default()
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    for t0 in starts {
        let m = optim::minimize(objective, t0, &run_opts)?;
        let (t, f) = optim::coordinate_sweep(value_of, m.x, m.f)?;
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, t));
        }
    }
    let (_, t) = best.unwrap();
    let x = lift(&t);
    let (n, _) = eval(space, &x)?;
    let w: Vec<f64> = x.iter().map(|v| v / n).collect();
    let value = w.iter().zip(a).map(|(wi, ai)| wi * ai).sum();
    Ok((value, w))
}
