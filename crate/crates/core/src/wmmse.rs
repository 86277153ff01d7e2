//! Weighted MMSE quantities for a multi-user downlink.
//!
//! All functions take the channel as a `K × N_t` row matrix (row `k` is the
//! conjugated channel of user `k`), so they apply equally to PASS effective
//! channels and to fixed antenna arrays.
//!
//! Two forms of the weighted objective are exposed. [`wmmse_objective`] uses
//! `log2 α`, under which `Σ(α e − log2 α) = K − sum_rate` at the optimal
//! equalizers and weights. [`wmmse_objective_nats`] uses `ln α`; the weight
//! update `α = 1/e` is its exact minimizer, so block-coordinate descent is
//! monotone in that form.

use nalgebra::DMatrix;

use crate::error::{PassError, Result};
use crate::linalg::ball_constrained_quadratic;
use crate::model::{TransmitBeam, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct WmmseState {
    pub v: Vec<C64>,
    pub alpha: Vec<f64>,
    pub e: Vec<f64>,
    pub j_cov: Vec<f64>,
}

/// `J_k = Σ_i |q_{k,i}|² + σ²` from a response matrix `q = rows · D`.
pub fn covariance_from_responses(q: &DMatrix<C64>, k: usize, noise: f64) -> f64 {
    q.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>() + noise
}

pub fn mse_from_responses(q: &DMatrix<C64>, v: C64, k: usize, noise: f64) -> f64 {
    let j = covariance_from_responses(q, k, noise);
    v.norm_sqr() * j + 1.0 - 2.0 * (v * q[(k, k)]).re
}

/// Mean square error of user `k` with equalizer `v`.
pub fn mse(rows: &DMatrix<C64>, beam: &TransmitBeam, v: C64, k: usize, noise: f64) -> f64 {
    let q = rows * &beam.d;
    mse_from_responses(&q, v, k, noise)
}

pub fn equalizer_from_responses(q: &DMatrix<C64>, k: usize, noise: f64) -> C64 {
    q[(k, k)].conj() / covariance_from_responses(q, k, noise)
}

/// MMSE equalizer `v_k = J_k⁻¹ d_kᴴ h̃_k`.
pub fn optimal_equalizer(rows: &DMatrix<C64>, beam: &TransmitBeam, k: usize, noise: f64) -> C64 {
    let q = rows * &beam.d;
    equalizer_from_responses(&q, k, noise)
}

pub fn weight_from_responses(q: &DMatrix<C64>, k: usize, noise: f64) -> Result<f64> {
    let j = covariance_from_responses(q, k, noise);
    let e = 1.0 - q[(k, k)].norm_sqr() / j;
    if !(e > 0.0) || !e.is_finite() {
        return Err(PassError::Numerical(format!(
            "minimum MSE of user {k} is {e}, expected (0, 1]"
        )));
    }
    Ok(1.0 / e)
}

/// Optimal weight `α_k = 1 / e_k^MSE = 1 + SINR_k`.
pub fn optimal_weight(
    rows: &DMatrix<C64>,
    beam: &TransmitBeam,
    k: usize,
    noise: f64,
) -> Result<f64> {
    let q = rows * &beam.d;
    weight_from_responses(&q, k, noise)
}

/// Equalizers, weights, MSEs and covariances at the MMSE optimum.
pub fn optimal_state(rows: &DMatrix<C64>, beam: &TransmitBeam, noise: f64) -> Result<WmmseState> {
    let q = rows * &beam.d;
    state_from_responses(&q, noise)
}

pub fn state_from_responses(q: &DMatrix<C64>, noise: f64) -> Result<WmmseState> {
    let k_users = q.nrows();
    let mut st = WmmseState {
        v: Vec::with_capacity(k_users),
        alpha: Vec::with_capacity(k_users),
        e: Vec::with_capacity(k_users),
        j_cov: Vec::with_capacity(k_users),
    };
    for k in 0..k_users {
        let v = equalizer_from_responses(q, k, noise);
        let e = mse_from_responses(q, v, k, noise);
        st.j_cov.push(covariance_from_responses(q, k, noise));
        st.alpha.push(weight_from_responses(q, k, noise)?);
        st.v.push(v);
        st.e.push(e);
    }
    Ok(st)
}

fn objective_with(
    rows: &DMatrix<C64>,
    beam: &TransmitBeam,
    v: &[C64],
    alpha: &[f64],
    noise: f64,
    log: fn(f64) -> f64,
) -> f64 {
    let q = rows * &beam.d;
    (0..q.nrows())
        .map(|k| alpha[k] * mse_from_responses(&q, v[k], k, noise) - log(alpha[k]))
        .sum()
}

/// `Σ_k (α_k e_k − log2 α_k)` with the MSE recomputed at the given equalizers.
pub fn wmmse_objective(
    rows: &DMatrix<C64>,
    beam: &TransmitBeam,
    state: &WmmseState,
    noise: f64,
) -> f64 {
    objective_with(rows, beam, &state.v, &state.alpha, noise, f64::log2)
}

/// `Σ_k (α_k e_k − ln α_k)`.
pub fn wmmse_objective_nats(
    rows: &DMatrix<C64>,
    beam: &TransmitBeam,
    v: &[C64],
    alpha: &[f64],
    noise: f64,
) -> f64 {
    objective_with(rows, beam, v, alpha, noise, f64::ln)
}

/// Transmit-beam block of the weighted MMSE problem under a total power
/// budget: minimizes `Σ_k α_k e_k` over `D` for fixed `v`, `α`.
///
/// Returns the beam and the power multiplier.
pub fn beam_update(
    rows: &DMatrix<C64>,
    v: &[C64],
    alpha: &[f64],
    power: f64,
) -> Result<(TransmitBeam, f64)> {
    let k_users = rows.nrows();
    let nt = rows.ncols();
    let mut gram = DMatrix::<C64>::zeros(nt, nt);
    let mut rhs = DMatrix::<C64>::zeros(nt, k_users);
    for i in 0..k_users {
        let w = alpha[i] * v[i].norm_sqr();
        let h = rows.row(i).adjoint();
        gram += &h * h.adjoint() * C64::from(w);
        let coef = C64::from(alpha[i]) * v[i].conj();
        for n in 0..nt {
            rhs[(n, i)] = coef * h[n];
        }
    }
    let sol = ball_constrained_quadratic(&gram, &rhs, power)?;
    Ok((TransmitBeam::new(sol.d), sol.multiplier))
}

/// Outcome of the alternating WMMSE algorithm.
#[derive(Clone, Debug)]
pub struct WmmseRun {
    pub beam: TransmitBeam,
    pub state: WmmseState,
    /// Power-constraint multiplier of the last beam update.
    pub multiplier: f64,
    /// Natural-log objective after each full sweep (non-increasing).
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Classic alternating WMMSE: equalizers, weights, then the power-constrained
/// beam, repeated until the relative objective change drops below `tol`.
pub fn classic_wmmse(
    rows: &DMatrix<C64>,
    initial: &TransmitBeam,
    power: f64,
    noise: f64,
    tol: f64,
    max_iter: usize,
) -> Result<WmmseRun> {
    let mut beam = initial.clone();
    let mut state = optimal_state(rows, &beam, noise)?;
    let mut trace = vec![wmmse_objective_nats(
        rows,
        &beam,
        &state.v,
        &state.alpha,
        noise,
    )];
    let mut multiplier = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let (next, eta) = beam_update(rows, &state.v, &state.alpha, power)?;
        beam = next;
        multiplier = eta;
        state = optimal_state(rows, &beam, noise)?;
        let obj = wmmse_objective_nats(rows, &beam, &state.v, &state.alpha, noise);
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if (prev - obj).abs() <= tol * prev.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    Ok(WmmseRun {
        beam,
        state,
        multiplier,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Regularized zero-forcing `H (Hᴴ H + reg I)⁻¹` scaled to the full budget,
/// where `H` has the users' channels as columns.
pub fn regularized_zero_forcing(rows: &DMatrix<C64>, reg: f64, power: f64) -> Result<TransmitBeam> {
    let h = rows.adjoint();
    let k_users = rows.nrows();
    let a = rows * &h + DMatrix::<C64>::identity(k_users, k_users) * C64::from(reg);
    let inv = crate::linalg::solve_hpd(&a, &DMatrix::identity(k_users, k_users))?;
    let mut d = h * inv;
    let p = crate::linalg::frobenius_sq(&d);
    if p > 0.0 {
        d *= C64::from((power / p).sqrt());
    }
    Ok(TransmitBeam::new(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rates_from_rows;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(rng: &mut ChaCha8Rng, k: usize, n: usize, scale: f64) -> DMatrix<C64> {
        DMatrix::from_fn(k, n, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * scale
        })
    }

    fn random_beam(rng: &mut ChaCha8Rng, n: usize, k: usize, scale: f64) -> TransmitBeam {
        TransmitBeam::new(DMatrix::from_fn(n, k, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * scale
        }))
    }

    #[test]
    fn zero_equalizer_gives_unit_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = random_rows(&mut rng, 3, 3, 1.0);
        let beam = random_beam(&mut rng, 3, 3, 1.0);
        for k in 0..3 {
            assert_eq!(mse(&rows, &beam, C64::new(0.0, 0.0), k, 0.1), 1.0);
        }
    }

    #[test]
    fn interference_free_mse_equals_inverse_one_plus_sinr() {
        let rows = DMatrix::from_row_slice(1, 1, &[C64::new(0.3, -0.4)]);
        let beam = TransmitBeam::new(DMatrix::from_row_slice(1, 1, &[C64::new(2.0, 1.0)]));
        let noise = 0.2;
        let v = optimal_equalizer(&rows, &beam, 0, noise);
        let hd = rows[(0, 0)] * beam.d[(0, 0)];
        // scalar reduction: v = (h d)* / (|h d|² + σ²)
        let expected = hd.conj() / (hd.norm_sqr() + noise);
        assert!((v - expected).norm() < 1e-15);
        let snr = hd.norm_sqr() / noise;
        assert!((mse(&rows, &beam, v, 0, noise) - 1.0 / (1.0 + snr)).abs() < 1e-14);
    }

    #[test]
    fn zero_beam_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = random_rows(&mut rng, 2, 2, 1.0);
        let mut beam = random_beam(&mut rng, 2, 2, 1.0);
        beam.d.column_mut(0).fill(C64::new(0.0, 0.0));
        assert_eq!(optimal_equalizer(&rows, &beam, 0, 0.1), C64::new(0.0, 0.0));
        assert!((optimal_weight(&rows, &beam, 0, 0.1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equalizer_is_the_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let rows = random_rows(&mut rng, 3, 3, 1.0);
            let beam = random_beam(&mut rng, 3, 3, 1.0);
            for k in 0..3 {
                let v = optimal_equalizer(&rows, &beam, k, 0.05);
                let e0 = mse(&rows, &beam, v, k, 0.05);
                let j = covariance_from_responses(&(&rows * &beam.d), k, 0.05);
                let hd = (&rows * &beam.d)[(k, k)];
                assert!(e0 >= 1.0 - hd.norm_sqr() / j - 1e-12);
                for _ in 0..100 {
                    let dv = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 0.1;
                    assert!(mse(&rows, &beam, v + dv, k, 0.05) >= e0 - 1e-14);
                }
            }
        }
    }

    #[test]
    fn weight_identity_and_objective_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let rows = random_rows(&mut rng, 4, 4, 1.0);
            let beam = random_beam(&mut rng, 4, 4, 2.0);
            let noise = 0.01;
            let st = optimal_state(&rows, &beam, noise).unwrap();
            let rep = rates_from_rows(&rows, &beam, noise);
            for k in 0..4 {
                assert!((st.alpha[k] - 1.0 - rep.sinr[k]).abs() <= 1e-9 * rep.sinr[k].max(1.0));
                assert!((st.alpha[k] * st.e[k] - 1.0).abs() < 1e-12);
            }
            let obj = wmmse_objective(&rows, &beam, &st, noise);
            assert!((obj + rep.sum_rate - 4.0).abs() <= 1e-9 * 4.0);
        }
    }

    #[test]
    fn unit_weight_zero_equalizer_objective_is_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = random_rows(&mut rng, 3, 3, 1.0);
        let beam = random_beam(&mut rng, 3, 3, 1.0);
        let st = WmmseState {
            v: vec![C64::new(0.0, 0.0); 3],
            alpha: vec![1.0; 3],
            e: vec![1.0; 3],
            j_cov: vec![0.0; 3],
        };
        assert_eq!(wmmse_objective(&rows, &beam, &st, 0.1), 3.0);
    }

    #[test]
    fn weight_grows_with_beam_norm() {
        let rows = DMatrix::from_row_slice(1, 2, &[C64::new(0.3, 0.1), C64::new(-0.2, 0.5)]);
        let dir = DMatrix::from_row_slice(2, 1, &[C64::new(1.0, 0.0), C64::new(0.5, -0.5)]);
        let mut prev = 0.0;
        for s in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let a = optimal_weight(&rows, &TransmitBeam::new(&dir * C64::from(s)), 0, 0.1).unwrap();
            assert!(a > prev);
            prev = a;
        }
    }

    #[test]
    fn each_block_update_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let noise = 0.05;
        for _ in 0..20 {
            let rows = random_rows(&mut rng, 3, 4, 1.0);
            let mut beam = random_beam(&mut rng, 4, 3, 0.3);
            let mut v: Vec<C64> = (0..3)
                .map(|_| C64::new(rng.random(), rng.random()))
                .collect();
            let mut alpha: Vec<f64> = (0..3).map(|_| 0.5 + rng.random::<f64>()).collect();
            for _ in 0..5 {
                let f0 = wmmse_objective_nats(&rows, &beam, &v, &alpha, noise);
                let q = &rows * &beam.d;
                v = (0..3)
                    .map(|k| equalizer_from_responses(&q, k, noise))
                    .collect();
                let f1 = wmmse_objective_nats(&rows, &beam, &v, &alpha, noise);
                alpha = (0..3)
                    .map(|k| 1.0 / mse_from_responses(&q, v[k], k, noise))
                    .collect();
                let f2 = wmmse_objective_nats(&rows, &beam, &v, &alpha, noise);
                beam = beam_update(&rows, &v, &alpha, 1.0).unwrap().0;
                let f3 = wmmse_objective_nats(&rows, &beam, &v, &alpha, noise);
                assert!(f1 <= f0 + 1e-12 && f2 <= f1 + 1e-12 && f3 <= f2 + 1e-12);
            }
        }
    }

    #[test]
    fn single_user_converges_to_mrt() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows = random_rows(&mut rng, 1, 4, 1.0);
        let p = 2.0;
        let noise = 0.1;
        let init = random_beam(&mut rng, 4, 1, 0.1);
        let run = classic_wmmse(&rows, &init, p, noise, 1e-14, 500).unwrap();
        let h2: f64 = rows.iter().map(|z| z.norm_sqr()).sum();
        let expected = (1.0 + p * h2 / noise).log2();
        let got = rates_from_rows(&rows, &run.beam, noise).sum_rate;
        assert!((got / expected - 1.0).abs() < 1e-6, "{got} vs {expected}");
        for w in run.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn rzf_meets_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows = random_rows(&mut rng, 3, 3, 1.0);
        let b = regularized_zero_forcing(&rows, 0.1, 0.7).unwrap();
        assert!((b.power() - 0.7).abs() < 1e-12);
    }
}
