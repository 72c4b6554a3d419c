//! Unconstrained minimization of convex, possibly nonsmooth objectives.
//!
//! The engine is BFGS with a weak Wolfe bisection line search, which keeps
//! making progress on piecewise-smooth objectives (max-type norms) where
//! plain gradient or coordinate methods stall on kinks. Stationarity is
//! measured by the smallest convex combination of gradients gathered at
//! nearby iterates, which is the usual certificate for nonsmooth problems.
//! A derivative-free coordinate sweep is available as a polishing step.

use std::collections::VecDeque;

use crate::error::Result;

#[derive(Clone, Debug)]
pub(crate) struct Evaluation {
    pub f: f64,
    pub grad: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Options {
    pub max_iter: usize,
    /// Stop when `f` decreases by less than this over `window` iterations.
    pub ftol: f64,
    /// Target for the bundle stationarity residual (Euclidean norm).
    pub gtol: f64,
    pub window: usize,
    /// Gradients at iterates within this distance of the current point enter the bundle.
    pub bundle_radius: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            ftol: 1e-13,
            gtol: 1e-9,
            window: 8,
            bundle_radius: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    /// Norm of the min-norm convex combination of bundle gradients.
    pub residual: f64,
    /// Bundle points and their min-norm weights.
    pub bundle: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

struct LineStep {
    x: Vec<f64>,
    eval: Evaluation,
    wolfe: bool,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

fn line_search<F>(
    oracle: &mut F,
    x: &[f64],
    cur: &Evaluation,
    d: &[f64],
) -> Result<Option<LineStep>>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    let gd = dot(&cur.grad, d);
    let mut t = 1.0;
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut fallback: Option<LineStep> = None;
    for _ in 0..60 {
        let xt = axpy(x, t, d);
        let ev = oracle(&xt)?;
        if !ev.f.is_finite() || ev.f > cur.f + C1 * t * gd {
            hi = t;
        } else if dot(&ev.grad, d) < C2 * gd {
            lo = t;
            let better = fallback.as_ref().is_none_or(|fb| ev.f < fb.eval.f);
            if ev.f < cur.f && better {
                fallback = Some(LineStep {
                    x: xt,
                    eval: ev,
                    wolfe: false,
                });
            }
        } else {
            return Ok(Some(LineStep {
                x: xt,
                eval: ev,
                wolfe: true,
            }));
        }
        t = if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            2.0 * lo
        };
        if hi.is_finite() && hi - lo < 1e-14 * hi.max(1e-300) {
            break;
        }
        if t > 1e12 {
            break;
        }
    }
    Ok(fallback)
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut rho = 0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        css += uj;
        let t = (css - 1.0) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            rho = j;
            theta = t;
        }
    }
    let _ = rho;
    for vi in v.iter_mut() {
        *vi = (*vi - theta).max(0.0);
    }
}

/// Minimum-norm point of the convex hull of `points`: returns weights and the norm.
pub(crate) fn min_norm_combination(points: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let k = points.len();
    if k == 0 {
        return (vec![], f64::INFINITY);
    }
    if k == 1 {
        return (vec![1.0], norm2(&points[0]));
    }
    let mut gram = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let v = dot(&points[i], &points[j]);
            gram[i * k + j] = v;
            gram[j * k + i] = v;
        }
    }
    let lip = (0..k)
        .map(|i| (0..k).map(|j| gram[i * k + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-300);
    let quad = |w: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..k {
            let mut r = 0.0;
            for j in 0..k {
                r += gram[i * k + j] * w[j];
            }
            s += w[i] * r;
        }
        s
    };
    // Start from the best single point.
    let best = (0..k)
        .min_by(|a, b| gram[a * k + a].partial_cmp(&gram[b * k + b]).unwrap())
        .unwrap();
    let mut w = vec![0.0; k];
    w[best] = 1.0;
    let mut y = w.clone();
    let mut tk: f64 = 1.0;
    let mut best_w = w.clone();
    let mut best_val = quad(&w);
    for _ in 0..400 {
        let mut grad = vec![0.0; k];
        for i in 0..k {
            grad[i] = 2.0 * (0..k).map(|j| gram[i * k + j] * y[j]).sum::<f64>();
        }
        let mut next: Vec<f64> = y
            .iter()
            .zip(&grad)
            .map(|(a, g)| a - g / (2.0 * lip))
            .collect();
        project_simplex(&mut next);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        y = next
            .iter()
            .zip(&w)
            .map(|(a, b)| a + (tk - 1.0) / tn * (a - b))
            .collect();
        project_simplex(&mut y);
        w = next;
        tk = tn;
        let val = quad(&w);
        if val < best_val {
            best_val = val;
            best_w = w.clone();
        }
    }
    (best_w, best_val.max(0.0).sqrt())
}

struct Bundle {
    cap: usize,
    items: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl Bundle {
    fn push(&mut self, x: &[f64], g: &[f64]) {
        if self.items.len() == self.cap {
            self.items.pop_front();
        }
        self.items.push_back((x.to_vec(), g.to_vec()));
    }

    fn residual(&self, x: &[f64], radius: f64) -> (Vec<Vec<f64>>, Vec<f64>, f64) {
        let near: Vec<&(Vec<f64>, Vec<f64>)> = self
            .items
            .iter()
            .filter(|(p, _)| {
                p.iter()
                    .zip(x)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
                    <= radius
            })
            .collect();
        let grads: Vec<Vec<f64>> = near.iter().map(|(_, g)| g.clone()).collect();
        let (w, r) = min_norm_combination(&grads);
        (near.iter().map(|(p, _)| p.clone()).collect(), w, r)
    }
}

/// Minimizes `oracle` from `x0`.
///
/// Never fails for lack of convergence; callers decide whether the returned
/// residual certifies the point.
pub(crate) fn minimize<F>(oracle: F, x0: Vec<f64>, opts: &Options) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    minimize_until(oracle, x0, opts, |_| Ok(false))
}

/// As `minimize`, additionally stopping when `done` accepts the current
/// point. `done` is consulted every few iterations.
pub(crate) fn minimize_until<F, D>(
    mut oracle: F,
    x0: Vec<f64>,
    opts: &Options,
    mut done: D,
) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
    D: FnMut(&[f64]) -> Result<bool>,
{
    let n = x0.len();
    let mut x = x0;
    let mut cur = oracle(&x)?;
    let mut bundle = Bundle {
        cap: (n + 1).clamp(2, 80),
        items: VecDeque::new(),
    };
    bundle.push(&x, &cur.grad);
    if n == 0 {
        return Ok(Minimum {
            x,
            f: cur.f,
            iterations: 0,
            residual: 0.0,
            bundle: vec![],
            weights: vec![],
        });
    }
    let identity = |n: usize| {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
        h
    };
    let mut h = identity(n);
    let mut fresh = true;
    let mut history: VecDeque<f64> = VecDeque::new();
    history.push_back(cur.f);
    let mut iterations = 0;
    let mut failures = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        if norm2(&cur.grad) <= opts.gtol {
            break;
        }
        let mut d: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| h[i * n + j] * cur.grad[j]).sum::<f64>())
            .collect();
        if dot(&d, &cur.grad) >= 0.0 {
            h = identity(n);
            fresh = true;
            d = cur.grad.iter().map(|g| -g).collect();
        }
        let step = line_search(&mut oracle, &x, &cur, &d)?;
        let Some(step) = step else {
            failures += 1;
            if fresh || failures > 2 {
                break;
            }
            h = identity(n);
            fresh = true;
            continue;
        };
        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step
            .eval
            .grad
            .iter()
            .zip(&cur.grad)
            .map(|(a, b)| a - b)
            .collect();
        let sy = dot(&s, &y);
        if step.wolfe && sy > 1e-14 * norm2(&s) * norm2(&y) {
            if fresh {
                let scale = sy / dot(&y, &y);
                for v in h.iter_mut() {
                    *v *= scale;
                }
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum::<f64>())
                .collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        x = step.x;
        cur = step.eval;
        bundle.push(&x, &cur.grad);
        history.push_back(cur.f);
        if history.len() > opts.window + 1 {
            history.pop_front();
        }
        let stalled = history.len() > opts.window && history.front().unwrap() - cur.f < opts.ftol;
        if stalled || iterations % 10 == 0 {
            let (_, _, r) = bundle.residual(&x, opts.bundle_radius);
            if r <= opts.gtol || stalled {
                break;
            }
        }
        if iterations % 5 == 0 && done(&x)? {
            break;
        }
    }
    let (points, weights, residual) = bundle.residual(&x, opts.bundle_radius);
    Ok(Minimum {
        x,
        f: cur.f,
        iterations,
        residual: residual.min(norm2(&cur.grad)),
        bundle: points,
        weights,
    })
}

/// One derivative-free sweep of exact coordinate line searches (golden
/// section on an expanding bracket). Returns the improved point and value.
pub(crate) fn coordinate_sweep<F>(mut f: F, x0: Vec<f64>, f0: f64) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut x = x0;
    let mut fx = f0;
    for i in 0..x.len() {
        let base = x[i];
        let mut eval = |t: f64, x: &mut Vec<f64>| -> Result<f64> {
            x[i] = base + t;
            let v = f(x)?;
            Ok(if v.is_finite() { v } else { f64::INFINITY })
        };
        // Bracket a minimum of the convex 1-D restriction around t = 0.
        let mut step = 1e-3;
        let (a, b);
        let fp = eval(step, &mut x)?;
        let dir = if fp < fx {
            1.0
        } else {
            let fm = eval(-step, &mut x)?;
            if fm < fx {
                -1.0
            } else {
                x[i] = base;
                // Minimum lies within [-step, step]; refine there.
                a = -step;
                b = step;
                let (t, v) = golden(&mut eval, &mut x, a, b)?;
                if v < fx {
                    x[i] = base + t;
                    fx = v;
                } else {
                    x[i] = base;
                }
                continue;
            }
        };
        let mut prev = 0.0;
        let mut fprev = fx;
        let mut t = dir * step;
        let mut ft = eval(t, &mut x)?;
        while ft < fprev && step < 1e6 {
            prev = t;
            fprev = ft;
            step *= 2.0;
            t = prev + dir * step;
            ft = eval(t, &mut x)?;
        }
        a = (prev - dir * step / 2.0).min(t);
        b = (prev - dir * step / 2.0).max(t);
        let (tbest, vbest) = golden(&mut eval, &mut x, a, b)?;
        let (tbest, vbest) = if fprev < vbest {
            (prev, fprev)
        } else {
            (tbest, vbest)
        };
        if vbest < fx {
            x[i] = base + tbest;
            fx = vbest;
        } else {
            x[i] = base;
        }
    }
    Ok((x, fx))
}

fn golden<E>(eval: &mut E, x: &mut Vec<f64>, mut a: f64, mut b: f64) -> Result<(f64, f64)>
where
    E: FnMut(f64, &mut Vec<f64>) -> Result<f64>,
{
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = eval(c, x)?;
    let mut fd = eval(d, x)?;
    for _ in 0..80 {
        if (b - a).abs() < 1e-12 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = eval(c, x)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = eval(d, x)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(x: &[f64]) -> Result<Evaluation> {
        let f = (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2);
        Ok(Evaluation {
            f,
            grad: vec![2.0 * (x[0] - 1.0), 20.0 * (x[1] + 2.0)],
        })
    }

    #[test]
    fn bfgs_solves_quadratic() {
        let m = minimize(quad, vec![5.0, 5.0], &Options::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6);
        assert!((m.x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn bfgs_handles_max_kink() {
        // f = max(|x0|, |x1|) + 0.1 (x0 + x1)^2 has its minimum at the origin.
        let f = |x: &[f64]| -> Result<Evaluation> {
            let (a, b) = (x[0].abs(), x[1].abs());
            let mut g = vec![0.2 * (x[0] + x[1]), 0.2 * (x[0] + x[1])];
            if a >= b {
                g[0] += x[0].signum();
            } else {
                g[1] += x[1].signum();
            }
            Ok(Evaluation {
                f: a.max(b) + 0.1 * (x[0] + x[1]).powi(2),
                grad: g,
            })
        };
        let m = minimize(f, vec![3.0, -1.7], &Options::default()).unwrap();
        assert!(m.f < 1e-6, "f = {}", m.f);
    }

    #[test]
    fn min_norm_of_opposite_points_is_zero() {
        let (w, r) = min_norm_combination(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 3.0]]);
        assert!(r < 1e-8);
        assert!((w[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn coordinate_sweep_improves_separable() {
        let f = |x: &[f64]| -> Result<f64> { Ok((x[0] - 3.0).powi(2) + (x[1] + 0.5).abs()) };
        let (x, v) = coordinate_sweep(f, vec![0.0, 0.0], 9.5).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-5, "{x:?}");
        assert!(v < 1e-5);
    }
}
