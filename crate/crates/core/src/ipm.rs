//! Log-barrier interior-point method for separable convex objectives over an
//! ordered box `lo ≤ x_1`, `x_{l} − x_{l−1} ≥ gap`, `x_L ≤ hi`.

use crate::error::{PassError, Result};

/// Ordered-box polytope.
#[derive(Clone, Copy, Debug)]
pub struct OrderedBox {
    pub lo: f64,
    pub hi: f64,
    pub gap: f64,
}

impl OrderedBox {
    /// Width left over after packing every point at the minimum gap.
    pub fn free_width(&self, len: usize) -> f64 {
        self.hi - self.lo - (len.saturating_sub(1)) as f64 * self.gap
    }

    /// Slacks of the `len + 1` inequalities; all non-negative iff feasible.
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut s = Vec::with_capacity(n + 1);
        s.push(x[0] - self.lo);
        for j in 1..n {
            s.push(x[j] - x[j - 1] - self.gap);
        }
        s.push(self.hi - x[n - 1]);
        s
    }

    /// The point with all slacks equal.
    pub fn center(&self, len: usize) -> Vec<f64> {
        let w = self.free_width(len) / (len + 1) as f64;
        (0..len)
            .map(|i| self.lo + (i + 1) as f64 * w + i as f64 * self.gap)
            .collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IpmOptions {
    /// Barrier parameter growth factor.
    pub mu: f64,
    /// Stop once the duality measure `m / t` falls below this value.
    pub gap_tol: f64,
    pub armijo: f64,
    pub max_newton: usize,
    /// Objective normalization length: the objective is divided by
    /// `Σ f''(x_start) · length_scale²` (or `Σ |f'(x_start)| · length_scale`
    /// when that vanishes) before the barrier is applied.
    pub length_scale: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            mu: 10.0,
            gap_tol: 1e-9,
            armijo: 1e-4,
            max_newton: 100,
            length_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IpmResult {
    pub x: Vec<f64>,
    pub newton_steps: usize,
    /// The Newton-step cap was hit; `x` is the best strictly feasible iterate.
    pub capped: bool,
}

/// Solves a tridiagonal symmetric positive definite system in place.
fn solve_tridiagonal(diag: &mut [f64], off: &mut [f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    for i in 1..n {
        if !(diag[i - 1] > 0.0) {
            return Err(PassError::Numerical(
                "barrier Hessian lost definiteness".into(),
            ));
        }
        let w = off[i - 1] / diag[i - 1];
        diag[i] -= w * off[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    if !(diag[n - 1] > 0.0) {
        return Err(PassError::Numerical(
            "barrier Hessian lost definiteness".into(),
        ));
    }
    rhs[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - off[i] * rhs[i + 1]) / diag[i];
    }
    Ok(())
}

/// Minimizes `Σ_l f(l, x_l)` over the ordered box, where `f` returns the
/// value, first and second derivative of term `l` and is convex on the box.
///
/// `start` must be strictly interior.
pub fn minimize_ordered_box<F>(
    f: F,
    bx: &OrderedBox,
    start: &[f64],
    opts: &IpmOptions,
) -> Result<IpmResult>
where
    F: Fn(usize, f64) -> (f64, f64, f64),
{
    let n = start.len();
    if n == 0 {
        return Ok(IpmResult {
            x: Vec::new(),
            newton_steps: 0,
            capped: false,
        });
    }
    if bx.slacks(start).iter().any(|&s| !(s > 0.0)) {
        return Err(PassError::InvalidInput(
            "interior-point start is not strictly feasible".into(),
        ));
    }
    let m = (n + 1) as f64;
    let curv: f64 = (0..n).map(|l| f(l, start[l]).2.abs()).sum::<f64>() * opts.length_scale.powi(2);
    let slope: f64 = (0..n).map(|l| f(l, start[l]).1.abs()).sum::<f64>() * opts.length_scale;
    let norm = if curv > 0.0 {
        curv
    } else if slope > 0.0 {
        slope
    } else {
        1.0
    };
    let scale = 1.0 / norm;
    let objective = |x: &[f64]| -> f64 { (0..n).map(|l| f(l, x[l]).0).sum::<f64>() * scale };
    let barrier = |x: &[f64]| -> Option<f64> {
        let mut acc = 0.0;
        for s in bx.slacks(x) {
            if !(s > 0.0) {
                return None;
            }
            acc -= s.ln();
        }
        Some(acc)
    };

    let mut x = start.to_vec();
    // Start where objective and barrier gradients have comparable size.
    let (g_obj, g_bar) = {
        let s = bx.slacks(&x);
        let mut gb = vec![0.0; n];
        gb[0] -= 1.0 / s[0];
        for j in 1..n {
            gb[j] -= 1.0 / s[j];
            gb[j - 1] += 1.0 / s[j];
        }
        gb[n - 1] += 1.0 / s[n];
        let go: f64 = (0..n)
            .map(|l| (f(l, x[l]).1 * scale).powi(2))
            .sum::<f64>()
            .sqrt();
        (go, gb.iter().map(|v| v * v).sum::<f64>().sqrt())
    };
    let mut t = if g_obj > 0.0 {
        (g_bar / g_obj).clamp(1e-3, 1e6)
    } else {
        1.0
    };

    let mut best_x = x.clone();
    let mut best_val = objective(&x);
    let mut steps = 0;
    let mut capped = false;

    'outer: loop {
        loop {
            if steps >= opts.max_newton {
                capped = true;
                break 'outer;
            }
            let s = bx.slacks(&x);
            let mut grad = vec![0.0; n];
            let mut diag = vec![0.0; n];
            let mut off = vec![0.0; n.saturating_sub(1)];
            for l in 0..n {
                let (_, d1, d2) = f(l, x[l]);
                grad[l] = t * d1 * scale;
                diag[l] = t * d2 * scale;
            }
            grad[0] -= 1.0 / s[0];
            diag[0] += 1.0 / (s[0] * s[0]);
            for j in 1..n {
                let inv = 1.0 / s[j];
                grad[j] -= inv;
                grad[j - 1] += inv;
                diag[j] += inv * inv;
                diag[j - 1] += inv * inv;
                off[j - 1] -= inv * inv;
            }
            grad[n - 1] += 1.0 / s[n];
            diag[n - 1] += 1.0 / (s[n] * s[n]);

            let mut step: Vec<f64> = grad.iter().map(|g| -g).collect();
            solve_tridiagonal(&mut diag, &mut off, &mut step)?;
            let decrement: f64 = -grad.iter().zip(&step).map(|(g, d)| g * d).sum::<f64>();
            steps += 1;
            if decrement / 2.0 <= 1e-12 {
                break;
            }

            let phi0 = t * objective(&x) + barrier(&x).unwrap();
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + alpha * d).collect();
                if let Some(b) = barrier(&trial) {
                    let phi = t * objective(&trial) + b;
                    if phi <= phi0 - opts.armijo * alpha * decrement {
                        x = trial;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let val = objective(&x);
            if val < best_val {
                best_val = val;
                best_x.clone_from(&x);
            }
            if !moved {
                break;
            }
        }
        if m / t <= opts.gap_tol {
            break;
        }
        t *= opts.mu;
    }

    let val = objective(&x);
    let x = if capped && best_val < val { best_x } else { x };
    Ok(IpmResult {
        x,
        newton_steps: steps,
        capped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_quadratic_minimum_inside() {
        let bx = OrderedBox {
            lo: 0.0,
            hi: 10.0,
            gap: 0.5,
        };
        let targets = [1.0, 4.0, 7.0];
        let start = bx.center(3);
        let r = minimize_ordered_box(
            |l, x| ((x - targets[l]).powi(2), 2.0 * (x - targets[l]), 2.0),
            &bx,
            &start,
            &IpmOptions::default(),
        )
        .unwrap();
        assert!(!r.capped);
        for (a, b) in r.x.iter().zip(targets) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn clustered_targets_pack_at_min_gap() {
        let bx = OrderedBox {
            lo: 0.0,
            hi: 10.0,
            gap: 1.0,
        };
        let start = bx.center(3);
        let r = minimize_ordered_box(
            |_, x| ((x - 5.0).powi(2), 2.0 * (x - 5.0), 2.0),
            &bx,
            &start,
            &IpmOptions::default(),
        )
        .unwrap();
        // symmetric packing around 5 with unit gaps
        for (a, b) in r.x.iter().zip([4.0, 5.0, 6.0]) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn bound_active_at_upper_end() {
        let bx = OrderedBox {
            lo: 0.0,
            hi: 2.0,
            gap: 0.1,
        };
        let start = bx.center(1);
        let r = minimize_ordered_box(|_, x| (-x, -1.0, 0.0), &bx, &start, &IpmOptions::default())
            .unwrap();
        assert!((r.x[0] - 2.0).abs() < 1e-6);
        assert!(r.x[0] < 2.0);
    }

    #[test]
    fn center_is_strictly_feasible() {
        let bx = OrderedBox {
            lo: 0.0,
            hi: 1.0,
            gap: 0.2,
        };
        let c = bx.center(4);
        assert!(bx.slacks(&c).iter().all(|&s| s > 0.0));
    }

    #[test]
    fn rejects_infeasible_start() {
        let bx = OrderedBox {
            lo: 0.0,
            hi: 1.0,
            gap: 0.2,
        };
        assert!(minimize_ordered_box(
            |_, x| (x * x, 2.0 * x, 2.0),
            &bx,
            &[0.0, 0.5],
            &IpmOptions::default()
        )
        .is_err());
    }
}
