//! Residuals, augmented Lagrangian and the block updates of the inner loop.

use nalgebra::DMatrix;

use super::surrogates::{cc_gap, dist, l_ex_grad, l_ex_lipschitz, nc_gap, nc_majorizer_derivs};
use super::{Problem, SolverState};
use crate::error::Result;
use crate::ipm::{minimize_ordered_box, IpmOptions, OrderedBox};
use crate::linalg::{ball_constrained_quadratic, solve_hpd};
use crate::model::{TransmitBeam, C64};

/// `UΣ`: per-user sums of `u` over each waveguide's PAs, `K × N`.
pub(crate) fn sigma_sum(problem: &Problem, u: &DMatrix<C64>) -> DMatrix<C64> {
    let l_count = problem.pas_per_waveguide();
    DMatrix::from_fn(u.nrows(), problem.n_waveguides(), |k, n| {
        (0..l_count).map(|l| u[(k, n * l_count + l)]).sum()
    })
}

/// `uₖᵀ Σ d_{k'}` for all `k, k'`.
pub(crate) fn pinched_responses(problem: &Problem, state: &SolverState) -> DMatrix<C64> {
    sigma_sum(problem, &state.u) * &state.beam.d
}

/// Equality-constraint residuals.
#[derive(Clone, Debug)]
pub struct Residuals {
    /// `u r − φ e^{−iθ}`, `K × M`.
    pub bu: DMatrix<C64>,
    /// `θ − κ (r + n_eff x)`, `K × M`.
    pub btheta: DMatrix<f64>,
    /// `Q − UΣD`, `K × K`.
    pub bq: DMatrix<C64>,
    pub inf_norm: f64,
}

pub fn residuals(problem: &Problem, state: &SolverState) -> Residuals {
    let k = problem.n_users();
    let mm = problem.n_pas();
    let mut bu = DMatrix::zeros(k, mm);
    let mut btheta = DMatrix::zeros(k, mm);
    for kk in 0..k {
        for m in 0..mm {
            let x = state.placement.flat(m);
            let r = problem.distance(kk, m, x);
            let th = state.theta[(kk, m)];
            bu[(kk, m)] = state.u[(kk, m)] * r - C64::from_polar(problem.phi, -th);
            btheta[(kk, m)] = th - problem.kappa * (r + problem.n_eff * x);
        }
    }
    let bq = &state.q - pinched_responses(problem, state);
    let inf_norm = bu
        .iter()
        .map(|z| z.norm())
        .chain(btheta.iter().map(|v| v.abs()))
        .chain(bq.iter().map(|z| z.norm()))
        .fold(0.0, f64::max);
    Residuals {
        bu,
        btheta,
        bq,
        inf_norm,
    }
}

fn mse_row(q: &DMatrix<C64>, v: C64, k: usize, noise: f64) -> f64 {
    let j: f64 = q.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>() + noise;
    v.norm_sqr() * j + 1.0 - 2.0 * (v * q[(k, k)]).re
}

/// `Σ_k (α_k e_k(Q, v_k) − ln α_k)`.
pub fn wmmse_part(problem: &Problem, state: &SolverState) -> f64 {
    (0..problem.n_users())
        .map(|k| {
            state.alpha[k] * mse_row(&state.q, state.v[k], k, problem.noise) - state.alpha[k].ln()
        })
        .sum()
}

/// Augmented Lagrangian: weighted MSE term plus
/// `(1/2ρ)(‖Bᵘ + ρλᵘ‖² + ‖Bᶿ + ρλᶿ‖² + ‖Bᵠ + ρλᵠ‖²)`.
pub fn al_objective(problem: &Problem, state: &SolverState) -> f64 {
    let res = residuals(problem, state);
    let d = &state.duals;
    let rho = d.rho;
    let pu: f64 = res
        .bu
        .iter()
        .zip(d.lambda_u.iter())
        .map(|(b, l)| (b + l * rho).norm_sqr())
        .sum();
    let pt: f64 = res
        .btheta
        .iter()
        .zip(d.lambda_theta.iter())
        .map(|(b, l)| (b + l * rho).powi(2))
        .sum();
    let pq: f64 = res
        .bq
        .iter()
        .zip(d.lambda_q.iter())
        .map(|(b, l)| (b + l * rho).norm_sqr())
        .sum();
    wmmse_part(problem, state) + (pu + pt + pq) / (2.0 * rho)
}

/// Equalizers and weights at their optimum for the current `Q`.
pub fn update_vw(problem: &Problem, state: &mut SolverState) {
    for k in 0..problem.n_users() {
        let j: f64 = state.q.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>() + problem.noise;
        let v = state.q[(k, k)].conj() / j;
        let e = mse_row(&state.q, v, k, problem.noise);
        state.v[k] = v;
        state.alpha[k] = 1.0 / e;
    }
}

/// Joint `(D, Q)` minimization: `Q` is eliminated in closed form, leaving a
/// row-weighted least-squares problem in `D` over the power ball.
pub fn update_dq(problem: &Problem, state: &mut SolverState) -> Result<()> {
    let k_users = problem.n_users();
    let rho = state.duals.rho;
    let t = 1.0 / (2.0 * rho);
    let a_mat = sigma_sum(problem, &state.u);
    let mut weights = vec![0.0; k_users];
    let mut target = DMatrix::<C64>::zeros(k_users, k_users);
    for k in 0..k_users {
        let a = state.alpha[k] * state.v[k].norm_sqr();
        weights[k] = if a > 0.0 { a * t / (a + t) } else { 0.0 };
        for kp in 0..k_users {
            target[(k, kp)] = state.duals.lambda_q[(k, kp)] * rho;
        }
        if a > 0.0 {
            target[(k, k)] += state.v[k].conj() / state.v[k].norm_sqr();
        }
    }
    let mut weighted_a = a_mat.clone();
    for (k, &w) in weights.iter().enumerate() {
        weighted_a
            .row_mut(k)
            .iter_mut()
            .for_each(|z| *z *= C64::from(w));
    }
    let gram = a_mat.adjoint() * &weighted_a;
    let rhs = weighted_a.adjoint() * &target;
    let sol = ball_constrained_quadratic(&gram, &rhs, problem.power)?;
    state.beam = TransmitBeam::new(sol.d);

    let c = &a_mat * &state.beam.d;
    for k in 0..k_users {
        let a = state.alpha[k] * state.v[k].norm_sqr();
        let den = 2.0 * a + 1.0 / rho;
        for kp in 0..k_users {
            let mut num = c[(k, kp)] / rho - state.duals.lambda_q[(k, kp)];
            if k == kp {
                num += state.v[k].conj() * (2.0 * state.alpha[k]);
            }
            state.q[(k, kp)] = num / den;
        }
    }
    Ok(())
}

/// Augmented-Lagrangian contribution of one (user, PA) pair as a function of
/// that PA's position, with the surrogate built at `x0`.
#[derive(Clone, Copy, Debug)]
pub struct PaTerm {
    pub xu: f64,
    pub psi: f64,
    pub x0: f64,
    pub u: C64,
    /// `ρλᵘ − φ e^{−iθ}`.
    pub zeta: C64,
    /// `θ + ρλᶿ`.
    pub a: f64,
    pub kappa: f64,
    pub n_eff: f64,
    pub rho: f64,
    /// `(Re{ū ζ} − κ a) / ρ`, coefficient of `r(x)` in the expansion.
    pub omega: f64,
}

impl PaTerm {
    /// `(1/2ρ)(|u r + ζ|² + (a − κ r − κ n x)²)`.
    pub fn exact(&self, x: f64) -> f64 {
        let r = dist(x, self.xu, self.psi);
        let ph = self.a - self.kappa * (r + self.n_eff * x);
        ((self.u * r + self.zeta).norm_sqr() + ph * ph) / (2.0 * self.rho)
    }

    /// Coefficient of `x r(x)`.
    pub fn nc_coef(&self) -> f64 {
        self.kappa * self.kappa * self.n_eff / self.rho
    }

    /// Surrogate minus exact value; zero at `x0` and non-negative.
    pub fn gap(&self, x: f64) -> f64 {
        let cc = if self.omega > 0.0 {
            0.0
        } else {
            cc_gap(self.omega, x, self.x0, self.xu, self.psi)
        };
        cc + self.nc_coef() * nc_gap(x, self.x0, self.xu, self.psi)
    }

    pub fn surrogate(&self, x: f64) -> f64 {
        self.exact(x) + self.gap(x)
    }

    /// `(f', f'')` of the surrogate from its expanded form.
    pub fn surrogate_derivs(&self, x: f64) -> (f64, f64) {
        let inv2 = 1.0 / (2.0 * self.rho);
        let k2 = self.kappa * self.kappa;
        let quad = (self.u.norm_sqr() + k2) * inv2;
        let lin_sq = k2 * self.n_eff * self.n_eff * inv2;
        let c = self.a * self.kappa * self.n_eff / self.rho;
        let mut d1 = 2.0 * quad * (x - self.xu) + 2.0 * lin_sq * x - c;
        let mut d2 = 2.0 * quad + 2.0 * lin_sq;
        if self.omega > 0.0 {
            let r = dist(x, self.xu, self.psi);
            d1 += self.omega * (x - self.xu) / r;
            d2 += self.omega * self.psi * self.psi / (r * r * r);
        } else {
            let r0 = dist(self.x0, self.xu, self.psi);
            d1 += self.omega * (self.x0 - self.xu) / r0;
        }
        let (n1, n2) = nc_majorizer_derivs(x, self.x0, self.xu, self.psi);
        let e = self.nc_coef();
        (d1 + e * n1, d2 + e * n2)
    }
}

/// X-subproblem terms for PA `m`, one per user, expanded at the current
/// placement.
pub fn pa_terms(problem: &Problem, state: &SolverState, m: usize) -> Vec<PaTerm> {
    let rho = state.duals.rho;
    let n = problem.waveguide_of(m);
    let x0 = state.placement.flat(m);
    (0..problem.n_users())
        .map(|k| {
            let th = state.theta[(k, m)];
            let u = state.u[(k, m)];
            let zeta = state.duals.lambda_u[(k, m)] * rho - C64::from_polar(problem.phi, -th);
            let a = th + rho * state.duals.lambda_theta[(k, m)];
            PaTerm {
                xu: problem.user_x[k],
                psi: problem.psi[(k, n)],
                x0,
                u,
                zeta,
                a,
                kappa: problem.kappa,
                n_eff: problem.n_eff,
                rho,
                omega: ((u.conj() * zeta).re - problem.kappa * a) / rho,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct XUpdate {
    /// Waveguides whose new positions were accepted.
    pub accepted: usize,
    /// Waveguides whose interior-point solve hit the step cap.
    pub capped: bool,
}

/// Fraction of the way from the current placement towards the box center
/// used as the strictly interior starting point.
const INTERIOR_PULL: f64 = 1e-4;

/// Minimizes the placement surrogate per waveguide; a waveguide keeps its
/// previous positions unless the surrogate strictly decreases.
pub fn update_x(problem: &Problem, state: &mut SolverState) -> Result<XUpdate> {
    let l_count = problem.pas_per_waveguide();
    let sc = &problem.scenario;
    let bx = OrderedBox {
        lo: 0.0,
        hi: sc.span_x,
        gap: sc.min_spacing,
    };
    let opts = IpmOptions {
        length_scale: sc.guided_wavelength(),
        ..IpmOptions::default()
    };
    let center = bx.center(l_count);
    let mut out = XUpdate::default();
    for n in 0..problem.n_waveguides() {
        let terms: Vec<Vec<PaTerm>> = (0..l_count)
            .map(|l| pa_terms(problem, state, n * l_count + l))
            .collect();
        let x0: Vec<f64> = (0..l_count).map(|l| state.placement.x[(n, l)]).collect();
        let start: Vec<f64> = x0
            .iter()
            .zip(&center)
            .map(|(a, c)| a + INTERIOR_PULL * (c - a))
            .collect();
        let total = |x: &[f64]| -> f64 {
            x.iter()
                .enumerate()
                .map(|(l, &xl)| terms[l].iter().map(|t| t.surrogate(xl)).sum::<f64>())
                .sum()
        };
        let f = |l: usize, x: f64| -> (f64, f64, f64) {
            terms[l].iter().fold((0.0, 0.0, 0.0), |acc, t| {
                let (d1, d2) = t.surrogate_derivs(x);
                (acc.0 + t.surrogate(x), acc.1 + d1, acc.2 + d2)
            })
        };
        let res = minimize_ordered_box(f, &bx, &start, &opts)?;
        out.capped |= res.capped;
        if total(&res.x) < total(&x0) {
            for (l, &xl) in res.x.iter().enumerate() {
                state.placement.x[(n, l)] = xl;
            }
            out.accepted += 1;
        }
    }
    Ok(out)
}

/// Closed-form `U` update: for each user,
/// `(R² + conj(ΣD)(ΣD)ᵀ) u = conj(ΣD)(q + ρλᵠ) − R ζ`.
pub fn update_u(problem: &Problem, state: &mut SolverState) -> Result<()> {
    let k_users = problem.n_users();
    let mm = problem.n_pas();
    let rho = state.duals.rho;
    let l_count = problem.pas_per_waveguide();
    let w = DMatrix::from_fn(mm, k_users, |m, k| state.beam.d[(m / l_count, k)]);
    let w_conj = w.map(|z| z.conj());
    let cross = &w_conj * w.transpose();
    for k in 0..k_users {
        let mut lhs = cross.clone();
        let mut rhs = DMatrix::<C64>::zeros(mm, 1);
        let p = DMatrix::from_fn(k_users, 1, |kp, _| {
            state.q[(k, kp)] + state.duals.lambda_q[(k, kp)] * rho
        });
        let wp = &w_conj * p;
        for m in 0..mm {
            let r = problem.distance(k, m, state.placement.flat(m));
            lhs[(m, m)] += C64::from(r * r);
            let zeta = state.duals.lambda_u[(k, m)] * rho
                - C64::from_polar(problem.phi, -state.theta[(k, m)]);
            rhs[(m, 0)] = wp[(m, 0)] - zeta * r;
        }
        let sol = solve_hpd(&lhs, &rhs)?;
        for m in 0..mm {
            state.u[(k, m)] = sol[(m, 0)];
        }
    }
    Ok(())
}

/// `c = λᵘ + u r / ρ` for the phase block.
fn phase_coef(problem: &Problem, state: &SolverState, k: usize, m: usize) -> C64 {
    let r = problem.distance(k, m, state.placement.flat(m));
    state.duals.lambda_u[(k, m)] + state.u[(k, m)] * (r / state.duals.rho)
}

/// Lipschitz constants `φ |λᵘ + u r / ρ|`, `K × M`.
pub fn lipschitz_theta(problem: &Problem, state: &SolverState) -> DMatrix<f64> {
    DMatrix::from_fn(problem.n_users(), problem.n_pas(), |k, m| {
        l_ex_lipschitz(phase_coef(problem, state, k, m), problem.phi)
    })
}

/// Closed-form phase update from the Lipschitz gradient surrogate.
pub fn update_theta(problem: &Problem, state: &mut SolverState) {
    let rho = state.duals.rho;
    for k in 0..problem.n_users() {
        for m in 0..problem.n_pas() {
            let x = state.placement.flat(m);
            let r = problem.distance(k, m, x);
            let c = phase_coef(problem, state, k, m);
            let lip = l_ex_lipschitz(c, problem.phi);
            let th0 = state.theta[(k, m)];
            let g = l_ex_grad(th0, c, problem.phi);
            let num = lip * th0 - state.duals.lambda_theta[(k, m)]
                + problem.kappa * (r + problem.n_eff * x) / rho
                - g;
            state.theta[(k, m)] = num / (lip + 1.0 / rho);
        }
    }
}
