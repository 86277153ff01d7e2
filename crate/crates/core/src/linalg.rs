//! Small dense complex linear algebra on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{PassError, Result};
use crate::model::C64;

/// Solution of a power-constrained quadratic.
#[derive(Clone, Debug)]
pub struct BallSolution {
    pub d: DMatrix<C64>,
    /// Multiplier `η ≥ 0` of the power constraint.
    pub multiplier: f64,
    pub active: bool,
}

/// Minimizes `tr(Dᴴ G D) − 2 Re tr(Cᴴ D)` subject to `‖D‖_F² ≤ power`,
/// with `G` Hermitian positive semidefinite.
///
/// The stationary point for multiplier `η` is `D(η) = (G + ηI)⁻¹ C`. When the
/// unconstrained minimizer (minimum-norm if `G` is singular) already meets the
/// budget it is returned with `η = 0`; otherwise `η` is bisected until the
/// power matches the budget to `1e-12` relative, approaching from below.
pub fn ball_constrained_quadratic(
    gram: &DMatrix<C64>,
    rhs: &DMatrix<C64>,
    power: f64,
) -> Result<BallSolution> {
    let n = gram.nrows();
    if gram.ncols() != n || rhs.nrows() != n {
        return Err(PassError::InvalidInput("gram/rhs shape mismatch".into()));
    }
    if !(power > 0.0) {
        return Err(PassError::InvalidInput(
            "power budget must be positive".into(),
        ));
    }
    let eig = SymmetricEigen::new(gram.clone());
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    let rot = eig.eigenvectors.adjoint() * rhs;
    if rot.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(PassError::Numerical("non-finite quadratic data".into()));
    }
    let weights: Vec<f64> = (0..n)
        .map(|i| rot.row(i).iter().map(|z| z.norm_sqr()).sum())
        .collect();
    let lam_max = lam.iter().cloned().fold(0.0, f64::max);
    let null_tol = 1e-13 * lam_max.max(f64::MIN_POSITIVE);

    let power_at = |eta: f64| -> f64 {
        (0..n)
            .map(|i| {
                let den = lam[i] + eta;
                if eta == 0.0 && lam[i] <= null_tol {
                    0.0
                } else {
                    weights[i] / (den * den)
                }
            })
            .sum()
    };

    let (eta, active) = if power_at(0.0) <= power {
        (0.0, false)
    } else {
        let total: f64 = weights.iter().sum();
        let mut hi = (total / power).sqrt().max(f64::MIN_POSITIVE);
        while power_at(hi) > power {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if power_at(mid) > power {
                lo = mid;
            } else {
                hi = mid;
            }
            if (power - power_at(hi)) <= 1e-12 * power {
                break;
            }
        }
        (hi, true)
    };

    let mut scaled = rot;
    for i in 0..n {
        let den = lam[i] + eta;
        let f = if eta == 0.0 && lam[i] <= null_tol {
            0.0
        } else {
            1.0 / den
        };
        for j in 0..scaled.ncols() {
            scaled[(i, j)] *= f;
        }
    }
    let mut d = &eig.eigenvectors * scaled;
    let p: f64 = d.iter().map(|z| z.norm_sqr()).sum();
    if p > power {
        d *= C64::from((power / p).sqrt());
    }
    Ok(BallSolution {
        d,
        multiplier: eta,
        active,
    })
}

/// Solves `A X = B` for Hermitian positive definite `A`.
pub fn solve_hpd(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| PassError::Numerical("matrix is not Hermitian positive definite".into()))?;
    Ok(chol.solve(b))
}

/// `|aᴴ b| / (‖a‖ ‖b‖)`, insensitive to a common phase.
pub fn abs_cosine(a: &[C64], b: &[C64]) -> f64 {
    let dot: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot.norm() / (na * nb)
}

pub fn frobenius_sq(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / (1u64 << 53) as f64 - 0.5
    }

    fn random_matrix(r: usize, col: usize, seed: &mut u64) -> DMatrix<C64> {
        DMatrix::from_fn(r, col, |_, _| c(lcg(seed), lcg(seed)))
    }

    fn objective(g: &DMatrix<C64>, cm: &DMatrix<C64>, d: &DMatrix<C64>) -> f64 {
        ((d.adjoint() * g * d).trace() - (cm.adjoint() * d).trace() * 2.0).re
    }

    #[test]
    fn inactive_ball_returns_least_squares() {
        let mut seed = 7;
        let a = random_matrix(4, 3, &mut seed);
        let b = random_matrix(4, 2, &mut seed);
        let g = a.adjoint() * &a;
        let cm = a.adjoint() * &b;
        let sol = ball_constrained_quadratic(&g, &cm, 1e9).unwrap();
        assert!(!sol.active);
        let ls = solve_hpd(&g, &cm).unwrap();
        assert!((sol.d - ls).norm() < 1e-10);
    }

    #[test]
    fn active_ball_hits_budget_and_beats_feasible_points() {
        let mut seed = 11;
        let a = random_matrix(3, 3, &mut seed);
        let b = random_matrix(3, 3, &mut seed) * c(10.0, 0.0);
        let g = a.adjoint() * &a;
        let cm = a.adjoint() * &b;
        let p = 0.5;
        let sol = ball_constrained_quadratic(&g, &cm, p).unwrap();
        assert!(sol.active && sol.multiplier > 0.0);
        let pw = frobenius_sq(&sol.d);
        assert!(pw <= p && (p - pw) <= 1e-10 * p, "power {pw}");
        let best = objective(&g, &cm, &sol.d);
        for _ in 0..200 {
            let mut cand = &sol.d + random_matrix(3, 3, &mut seed) * c(0.05, 0.0);
            let cp = frobenius_sq(&cand);
            if cp > p {
                cand *= c((p / cp).sqrt(), 0.0);
            }
            assert!(objective(&g, &cm, &cand) >= best - 1e-9);
        }
    }

    #[test]
    fn singular_gram_uses_minimum_norm() {
        // G = diag(1, 0): the second coordinate is free and must stay zero.
        let g =
            DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let cm = DMatrix::from_row_slice(2, 1, &[c(0.3, 0.1), c(0.0, 0.0)]);
        let sol = ball_constrained_quadratic(&g, &cm, 10.0).unwrap();
        assert!((sol.d[(0, 0)] - c(0.3, 0.1)).norm() < 1e-12);
        assert!(sol.d[(1, 0)].norm() < 1e-12);
    }

    #[test]
    fn cosine_ignores_common_phase() {
        let a = vec![c(1.0, 2.0), c(-0.5, 0.3)];
        let rot = C64::from_polar(1.0, 0.7);
        let b: Vec<C64> = a.iter().map(|z| z * rot * 3.0).collect();
        assert!((abs_cosine(&a, &b) - 1.0).abs() < 1e-14);
    }
}
