//! Exact evaluation of the Tsirelson norm on finitely supported vectors.
//!
//! `nu(x) = max(||x||_inf, 1/2 sup sum_j nu(E_j x))` over families
//! `k <= E_1 < ... < E_k`. Restricting to interval families is enough, and
//! since `nu` is subadditive on disjoint pieces, a family starting at index
//! `s` is best split into as many pieces as allowed, `min(s, len)`. This
//! gives a dynamic program over intervals `[c, j]` of the support hull:
//!
//! * `Q_m(c, j)`: best sum over splits of `[c, j]` into `m` consecutive intervals,
//! * `T(c, j) = max_{s >= c} Q_{K(s)}(s, j)` with `K(s) = min(s, j - s + 1)`,
//! * `nu[c][j] = max(max_{c..j} x, T(c, j) / 2)`.
//!
//! Back-pointers recover the admissible tree attaining the norm, whose
//! coefficients form a norming functional.

use crate::error::{invalid, Result};
use crate::vector::Vector;

/// Tsirelson norm of `x`. The dynamic program is exact; `tol` is accepted
/// for interface symmetry with the iterative kernels and must be positive.
pub fn tsirelson_norm(x: &Vector, tol: f64) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(invalid("tol", format!("{tol} must be > 0")));
    }
    let a: Vec<f64> = x.as_slice().iter().map(|v| v.abs()).collect();
    Ok(eval(&a).0)
}

#[derive(Clone, Copy)]
enum Choice {
    Max(usize),
    Split(usize),
}

struct Table {
    lo: usize,
    len: usize,
    nu: Vec<f64>,
    choice: Vec<Choice>,
    // q[(m * len + c) * len + j] and its last cut position.
    q: Vec<f64>,
    cut: Vec<usize>,
    // Start s attaining T(c, j), if any split is possible.
    best_start: Vec<Option<usize>>,
}

impl Table {
    fn ix(&self, c: usize, j: usize) -> usize {
        c * self.len + j
    }

    fn qx(&self, m: usize, c: usize, j: usize) -> usize {
        (m * self.len + c) * self.len + j
    }

    /// Number of pieces used by a family starting at local index `s` and ending at `j`.
    fn pieces(&self, s: usize, j: usize) -> usize {
        (self.lo + s).min(j - s + 1)
    }
}

/// Norm and tree coefficients for a nonnegative slice (coordinate `i` is index `i + 1`).
pub(crate) fn eval(a: &[f64]) -> (f64, Vec<f64>) {
    let d = a.len();
    let mut coeff = vec![0.0; d];
    let Some(first) = a.iter().position(|v| *v != 0.0) else {
        return (0.0, coeff);
    };
    let last = a.iter().rposition(|v| *v != 0.0).unwrap();
    let x = &a[first..=last];
    let len = x.len();
    let lo = first + 1;
    let mut t = Table {
        lo,
        len,
        nu: vec![0.0; len * len],
        choice: vec![Choice::Max(0); len * len],
        q: vec![f64::NEG_INFINITY; (len + 1) * len * len],
        cut: vec![0; (len + 1) * len * len],
        best_start: vec![None; len * len],
    };
    // Running argmax of x on [c, j].
    let mut arg = vec![0usize; len * len];
    let mut tbest = vec![f64::NEG_INFINITY; len * len];

    for l in 1..=len {
        for c in 0..=len - l {
            let j = c + l - 1;
            let ij = t.ix(c, j);
            arg[ij] = if l == 1 {
                c
            } else {
                let k = arg[t.ix(c, j - 1)];
                if x[j] > x[k] {
                    j
                } else {
                    k
                }
            };
            let kmax = t.pieces(c, j);
            for m in 2..=kmax.min(l) {
                let mut best = f64::NEG_INFINITY;
                let mut at = 0;
                for k in (c + m - 2)..j {
                    let prev = t.q[t.qx(m - 1, c, k)];
                    let v = prev + t.nu[t.ix(k + 1, j)];
                    if v > best {
                        best = v;
                        at = k;
                    }
                }
                let qi = t.qx(m, c, j);
                t.q[qi] = best;
                t.cut[qi] = at;
            }
            // T(c, j) = max(P(c, j, K(c)), T(c + 1, j)).
            let mut tv = f64::NEG_INFINITY;
            let mut ts = None;
            if kmax >= 2 {
                tv = t.q[t.qx(kmax, c, j)];
                ts = Some(c);
            }
            if c < j {
                let other = tbest[t.ix(c + 1, j)];
                if other > tv {
                    tv = other;
                    ts = t.best_start[t.ix(c + 1, j)];
                }
            }
            tbest[ij] = tv;
            t.best_start[ij] = ts;
            let mx = x[arg[ij]];
            if let Some(split) = ts.filter(|_| 0.5 * tv > mx) {
                t.nu[ij] = 0.5 * tv;
                t.choice[ij] = Choice::Split(split);
            } else {
                t.nu[ij] = mx;
                t.choice[ij] = Choice::Max(arg[ij]);
            }
            let q1 = t.qx(1, c, j);
            t.q[q1] = t.nu[ij];
        }
    }

    let mut local = vec![0.0; len];
    assign(&t, 0, len - 1, 1.0, &mut local);
    coeff[first..=last].copy_from_slice(&local);
    (t.nu[t.ix(0, len - 1)], coeff)
}

fn assign(t: &Table, c: usize, j: usize, f: f64, out: &mut [f64]) {
    match t.choice[t.ix(c, j)] {
        Choice::Max(i) => out[i] += f,
        Choice::Split(s) => {
            let mut m = t.pieces(s, j);
            let mut end = j;
            while m >= 2 {
                let k = t.cut[t.qx(m, s, end)];
                assign(t, k + 1, end, 0.5 * f, out);
                end = k;
                m -= 1;
            }
            assign(t, s, end, 0.5 * f, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed-point iteration over arbitrary (not necessarily interval) set
    /// families, for small dimensions.
    fn brute(x: &[f64]) -> f64 {
        let d = x.len();
        let full = (1usize << d) - 1;
        let maxes: Vec<f64> = (0..=full)
            .map(|e| {
                (0..d)
                    .filter(|i| e >> i & 1 == 1)
                    .map(|i| x[i])
                    .fold(0.0, f64::max)
            })
            .collect();
        let mut nu = maxes.clone();
        loop {
            let mut next = maxes.clone();
            for (e, slot) in next.iter_mut().enumerate().skip(1) {
                let mut best = 0.0f64;
                // Families of k successive nonempty subsets of e with min index >= k.
                fn dfs(
                    e: usize,
                    d: usize,
                    after: usize,
                    left: usize,
                    acc: f64,
                    nu: &[f64],
                    best: &mut f64,
                ) {
                    if left == 0 {
                        *best = best.max(acc);
                        return;
                    }
                    // Choose the next subset among elements of e with index > after.
                    let avail: usize = (after..d).filter(|i| e >> i & 1 == 1).map(|i| 1 << i).sum();
                    let mut sub = avail;
                    while sub > 0 {
                        let top = usize::BITS as usize - 1 - sub.leading_zeros() as usize;
                        dfs(e, d, top + 1, left - 1, acc + nu[sub], nu, best);
                        sub = (sub - 1) & avail;
                    }
                }
                for k in 2..=d {
                    // first set min index (1-based) >= k, i.e. 0-based >= k - 1
                    dfs(e, d, k - 1, k, 0.0, &nu, &mut best);
                }
                *slot = slot.max(0.5 * best);
            }
            if next == nu {
                return nu[full];
            }
            nu = next;
        }
    }

    #[test]
    fn worked_examples() {
        let e5 = Vector::basis(5, 6);
        assert_eq!(tsirelson_norm(&e5, 1e-9).unwrap(), 1.0);
        let x = Vector::from_slice(&[0.0, 1.0, 1.0]);
        assert_eq!(tsirelson_norm(&x, 1e-9).unwrap(), 1.0);
        for n in 1..8usize {
            let mut c = vec![0.0; 2 * n];
            for v in c.iter_mut().skip(n) {
                *v = 1.0;
            }
            let v = tsirelson_norm(&Vector::from_slice(&c), 1e-9).unwrap();
            assert!(v >= n as f64 / 2.0 && v <= n as f64, "n={n} v={v}");
        }
        assert!(tsirelson_norm(&e5, 0.0).is_err());
    }

    #[test]
    fn matches_brute_force() {
        let samples: [&[f64]; 6] = [
            &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            &[0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            &[3.0, 0.5, 0.2, 0.9, 0.9, 0.4, 0.7],
            &[0.0, 0.3, 0.0, 2.0, 0.1, 1.5, 1.4],
            &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        ];
        for x in samples {
            let (v, _) = eval(x);
            let b = brute(x);
            assert!((v - b).abs() < 1e-12, "{x:?}: dp {v} brute {b}");
        }
    }

    #[test]
    fn tree_is_norming() {
        let x = [0.0, 0.3, 1.0, 2.0, 0.1, 1.5, 1.4, 0.8, 0.9, 1.1];
        let (v, c) = eval(&x);
        let dot: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((dot - v).abs() < 1e-12);
    }

    #[test]
    fn dyadic_block_closed_form() {
        // On A_4 = {8..15} every partition into singletons is admissible.
        let mut x = vec![0.0; 15];
        let vals = [0.2, 0.9, 0.4, 0.4, 0.1, 0.7, 0.3, 0.5];
        x[7..].copy_from_slice(&vals);
        let want = vals
            .iter()
            .copied()
            .fold(0.0, f64::max)
            .max(0.5 * vals.iter().sum::<f64>());
        assert!((eval(&x).0 - want).abs() < 1e-12);
    }
}
