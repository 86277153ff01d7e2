//! Majorization-minimization penalty dual decomposition (MM-PDD) solver for
//! joint transmit and pinching beamforming.
//!
//! The solver works on scaled copies of the channel and beam (see
//! [`Units`]); placements are always in meters and returned beams in the
//! scenario's units.

mod blocks;
pub mod surrogates;

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PassError, Result};
use crate::model::{evaluate, Placement, Scenario, TransmitBeam, C64};
use crate::wmmse::regularized_zero_forcing;

pub use blocks::{PaTerm, Residuals};

/// Internal scaling of channel amplitudes and beams.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    /// Beam divided by `sqrt(P)`, channel multiplied by `sqrt(P)/σ`: unit
    /// power budget and unit noise.
    #[default]
    NoiseNormalized,
    /// Watts and raw channel amplitudes.
    Si,
    /// Channel amplitudes multiplied by `amp`, beams by `beam`.
    Custom { amp: f64, beam: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub rho0: f64,
    pub gamma: f64,
    pub sigma_shrink: f64,
    pub eps_final: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub inner_tol: f64,
    pub units: Units,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho0: 1e-4,
            gamma: 0.9,
            sigma_shrink: 0.85,
            eps_final: 1e-6,
            max_outer: 200,
            max_inner: 30,
            inner_tol: 1e-4,
            units: Units::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.rho0 > 0.0) || !unit(self.gamma) || !unit(self.sigma_shrink) {
            return Err(PassError::InvalidInput(
                "need rho0 > 0 and gamma, sigma_shrink in (0, 1)".into(),
            ));
        }
        if !(self.eps_final > 0.0) || !(self.inner_tol >= 0.0) || self.max_inner == 0 {
            return Err(PassError::InvalidInput("invalid tolerances".into()));
        }
        Ok(())
    }
}

/// Penalty below which the solve is aborted.
pub const RHO_FLOOR: f64 = 1e-16;

/// Scenario constants in solver units.
#[derive(Clone, Debug)]
pub struct Problem {
    pub scenario: Scenario,
    pub kappa: f64,
    pub n_eff: f64,
    /// `sqrt(β/L)` scaled by the amplitude factor.
    pub phi: f64,
    /// Transverse offsets, `K × N`.
    pub psi: DMatrix<f64>,
    pub user_x: Vec<f64>,
    pub noise: f64,
    pub power: f64,
    /// Channel amplitude scale.
    pub amp_scale: f64,
    /// Beam scale.
    pub beam_scale: f64,
}

impl Problem {
    pub fn new(scenario: &Scenario, units: Units) -> Result<Self> {
        scenario.validate()?;
        let (a, b) = match units {
            Units::NoiseNormalized => {
                let sp = scenario.max_power.sqrt();
                (sp / scenario.noise_power.sqrt(), 1.0 / sp)
            }
            Units::Si => (1.0, 1.0),
            Units::Custom { amp, beam } => {
                if !(amp > 0.0 && beam > 0.0) {
                    return Err(PassError::InvalidInput(
                        "unit scales must be positive".into(),
                    ));
                }
                (amp, beam)
            }
        };
        let k = scenario.n_users;
        let n = scenario.n_waveguides;
        Ok(Self {
            kappa: scenario.wavenumber(),
            n_eff: scenario.refractive_index,
            phi: scenario.phi() * a,
            psi: DMatrix::from_fn(k, n, |kk, nn| scenario.psi(kk, nn)),
            user_x: scenario.users.iter().map(|u| u[0]).collect(),
            noise: scenario.noise_power * (a * b) * (a * b),
            power: scenario.max_power * b * b,
            amp_scale: a,
            beam_scale: b,
            scenario: scenario.clone(),
        })
    }

    pub fn n_users(&self) -> usize {
        self.scenario.n_users
    }

    pub fn n_waveguides(&self) -> usize {
        self.scenario.n_waveguides
    }

    pub fn pas_per_waveguide(&self) -> usize {
        self.scenario.pas_per_waveguide
    }

    pub fn n_pas(&self) -> usize {
        self.scenario.n_pas()
    }

    pub fn waveguide_of(&self, m: usize) -> usize {
        m / self.pas_per_waveguide()
    }

    /// Distance from PA `m` at position `x` to user `k`.
    pub fn distance(&self, k: usize, m: usize, x: f64) -> f64 {
        (x - self.user_x[k]).hypot(self.psi[(k, self.waveguide_of(m))])
    }

    /// Distances `K × M` at a placement.
    pub fn distances(&self, placement: &Placement) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_users(), self.n_pas(), |k, m| {
            self.distance(k, m, placement.flat(m))
        })
    }

    /// Effective channel rows (`K × N`, row `k` is `h̃_kᴴ`) in solver units.
    pub fn rows(&self, placement: &Placement) -> Result<DMatrix<C64>> {
        let l_count = self.pas_per_waveguide();
        let mut rows = DMatrix::<C64>::zeros(self.n_users(), self.n_waveguides());
        for k in 0..self.n_users() {
            for m in 0..self.n_pas() {
                let x = placement.flat(m);
                let r = self.distance(k, m, x);
                if !(r > 0.0) {
                    return Err(PassError::CoLocated {
                        user: k,
                        waveguide: m / l_count,
                        pa: m % l_count,
                    });
                }
                let theta = self.kappa * (r + self.n_eff * x);
                rows[(k, m / l_count)] += C64::from_polar(self.phi / r, -theta);
            }
        }
        Ok(rows)
    }

    pub fn to_solver_beam(&self, beam: &TransmitBeam) -> TransmitBeam {
        TransmitBeam::new(&beam.d * C64::from(self.beam_scale))
    }

    pub fn to_scenario_beam(&self, beam: &TransmitBeam) -> TransmitBeam {
        TransmitBeam::new(&beam.d * C64::from(1.0 / self.beam_scale))
    }
}

/// Dual variables and penalty.
#[derive(Clone, Debug, PartialEq)]
pub struct PddDuals {
    /// `K × M`.
    pub lambda_u: DMatrix<C64>,
    /// `K × M`.
    pub lambda_theta: DMatrix<f64>,
    /// `K × K`.
    pub lambda_q: DMatrix<C64>,
    pub rho: f64,
}

/// Primal, auxiliary and dual variables of the augmented Lagrangian.
///
/// Per-PA quantities are `K × M` with column `m = n·L + l`.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub placement: Placement,
    /// Solver-unit beam.
    pub beam: TransmitBeam,
    pub theta: DMatrix<f64>,
    pub u: DMatrix<C64>,
    pub q: DMatrix<C64>,
    pub v: Vec<C64>,
    pub alpha: Vec<f64>,
    pub duals: PddDuals,
}

/// Equally spaced PAs around the mean user x-coordinate.
pub fn initial_placement(scenario: &Scenario) -> Placement {
    let l = scenario.pas_per_waveguide;
    let spacing = scenario
        .min_spacing
        .max((5.0 * scenario.guided_wavelength()).min(scenario.span_x / l as f64));
    let width = (l - 1) as f64 * spacing;
    let start =
        (scenario.mean_user_x() - 0.5 * width).clamp(0.0, (scenario.span_x - width).max(0.0));
    let x = DMatrix::from_fn(scenario.n_waveguides, l, |_, j| start + j as f64 * spacing);
    Placement::new(x)
}

/// Auxiliary variables consistent with `(X, D)`, equalizers and weights at
/// their optimum, zero duals.
pub fn init_solver(scenario: &Scenario, config: &SolverConfig) -> Result<(Problem, SolverState)> {
    config.validate()?;
    let problem = Problem::new(scenario, config.units)?;
    let placement = initial_placement(scenario);
    let rows = problem.rows(&placement)?;
    let reg = problem.n_users() as f64 * problem.noise / problem.power;
    let beam = regularized_zero_forcing(&rows, reg, problem.power)?;
    let state = consistent_state(&problem, placement, beam, config.rho0)?;
    Ok((problem, state))
}

/// Builds a state with zero residuals and zero duals at `(X, D)`.
pub fn consistent_state(
    problem: &Problem,
    placement: Placement,
    beam: TransmitBeam,
    rho: f64,
) -> Result<SolverState> {
    let k = problem.n_users();
    let mm = problem.n_pas();
    let dist = problem.distances(&placement);
    let mut theta = DMatrix::zeros(k, mm);
    let mut u = DMatrix::zeros(k, mm);
    for kk in 0..k {
        for m in 0..mm {
            let r = dist[(kk, m)];
            if !(r > 0.0) {
                return Err(PassError::CoLocated {
                    user: kk,
                    waveguide: problem.waveguide_of(m),
                    pa: m % problem.pas_per_waveguide(),
                });
            }
            let th = problem.kappa * (r + problem.n_eff * placement.flat(m));
            theta[(kk, m)] = th;
            u[(kk, m)] = C64::from_polar(problem.phi / r, -th);
        }
    }
    let mut state = SolverState {
        placement,
        beam,
        theta,
        u,
        q: DMatrix::zeros(k, k),
        v: vec![C64::new(0.0, 0.0); k],
        alpha: vec![1.0; k],
        duals: PddDuals {
            lambda_u: DMatrix::zeros(k, mm),
            lambda_theta: DMatrix::zeros(k, mm),
            lambda_q: DMatrix::zeros(k, k),
            rho,
        },
    };
    state.q = blocks::pinched_responses(problem, &state);
    blocks::update_vw(problem, &mut state);
    Ok(state)
}

/// One row of the outer-iteration trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer_iter: usize,
    pub inner_sweeps: usize,
    pub sum_rate: f64,
    pub al_value: f64,
    pub residual_inf: f64,
    pub rho: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub placement: Placement,
    /// Beam in scenario units.
    pub beam: TransmitBeam,
    pub sum_rate: f64,
    pub rates: Vec<f64>,
    pub status: SolveStatus,
    pub residual_inf: f64,
    pub outer_iterations: usize,
    pub trace: Vec<TraceRow>,
    /// Augmented Lagrangian after each inner sweep, per outer iteration; the
    /// first entry of each list is the value before the first sweep.
    pub inner_al: Vec<Vec<f64>>,
    /// Number of X-updates that hit the Newton-step cap.
    pub ipm_capped: usize,
}

impl SolveOutcome {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Outcome of an outer (dual or penalty) update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OuterStep {
    DualAscent,
    PenaltyShrink,
}

/// Dual ascent `λ ← λ + B/ρ` if `‖B‖∞ ≤ threshold`, otherwise `ρ ← ςρ`.
pub fn outer_update(
    duals: &mut PddDuals,
    residuals: &Residuals,
    threshold: f64,
    config: &SolverConfig,
) -> Result<OuterStep> {
    if residuals.inf_norm <= threshold {
        let inv = 1.0 / duals.rho;
        duals.lambda_u += &residuals.bu * C64::from(inv);
        duals.lambda_theta += &residuals.btheta * inv;
        duals.lambda_q += &residuals.bq * C64::from(inv);
        Ok(OuterStep::DualAscent)
    } else {
        duals.rho *= config.sigma_shrink;
        if duals.rho < RHO_FLOOR {
            return Err(PassError::PenaltyCollapse(duals.rho));
        }
        Ok(OuterStep::PenaltyShrink)
    }
}

pub use blocks::{
    al_objective, lipschitz_theta, pa_terms, residuals, update_dq, update_theta, update_u,
    update_vw, update_x, wmmse_part, XUpdate,
};

/// Runs the inner block-coordinate loop; returns the AL after each sweep
/// (preceded by the starting value) and the number of capped X-updates.
pub fn inner_loop(
    problem: &Problem,
    state: &mut SolverState,
    config: &SolverConfig,
) -> Result<(Vec<f64>, usize)> {
    let mut values = vec![al_objective(problem, state)];
    let mut capped = 0;
    for _ in 0..config.max_inner {
        update_vw(problem, state);
        update_dq(problem, state)?;
        if update_x(problem, state)?.capped {
            capped += 1;
        }
        update_u(problem, state)?;
        update_theta(problem, state);
        let val = al_objective(problem, state);
        let prev = *values.last().unwrap();
        values.push(val);
        if (prev - val).abs() <= config.inner_tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok((values, capped))
}

/// Solves the joint problem from the standard initialization.
pub fn solve(scenario: &Scenario, config: &SolverConfig) -> Result<SolveOutcome> {
    let (problem, mut state) = init_solver(scenario, config)?;
    solve_from(&problem, &mut state, config)
}

/// Solves the joint problem from a given state.
pub fn solve_from(
    problem: &Problem,
    state: &mut SolverState,
    config: &SolverConfig,
) -> Result<SolveOutcome> {
    config.validate()?;
    let mut trace = Vec::new();
    let mut inner_al = Vec::new();
    let mut prev_inf = f64::INFINITY;
    let mut ipm_capped = 0;
    let mut best: Option<(f64, Placement, TransmitBeam, f64)> = None;
    let mut status = SolveStatus::MaxIterations;
    let mut last_inf = f64::INFINITY;
    let mut outer = 0;

    for i in 1..=config.max_outer {
        outer = i;
        let (values, capped) = inner_loop(problem, state, config)?;
        ipm_capped += capped;
        let res = residuals(problem, state);
        let beam = problem.to_scenario_beam(&state.beam);
        let rate = evaluate(&problem.scenario, &state.placement, &beam)?.sum_rate;
        trace.push(TraceRow {
            outer_iter: i,
            inner_sweeps: values.len() - 1,
            sum_rate: rate,
            al_value: *values.last().unwrap(),
            residual_inf: res.inf_norm,
            rho: state.duals.rho,
        });
        inner_al.push(values);
        last_inf = res.inf_norm;
        if best.as_ref().is_none_or(|b| rate > b.0) {
            best = Some((rate, state.placement.clone(), beam, res.inf_norm));
        }
        if res.inf_norm <= config.eps_final {
            status = SolveStatus::Converged;
            break;
        }
        outer_update(&mut state.duals, &res, config.gamma * prev_inf, config)?;
        prev_inf = res.inf_norm;
    }

    let (placement, beam, residual_inf) = match status {
        SolveStatus::Converged => (
            state.placement.clone(),
            problem.to_scenario_beam(&state.beam),
            last_inf,
        ),
        SolveStatus::MaxIterations => {
            let (_, p, b, r) = best.expect("at least one outer iteration");
            (p, b, r)
        }
    };
    let report = evaluate(&problem.scenario, &placement, &beam)?;
    Ok(SolveOutcome {
        placement,
        beam,
        sum_rate: report.sum_rate,
        rates: report.rates,
        status,
        residual_inf,
        outer_iterations: outer,
        trace,
        inner_al,
        ipm_capped,
    })
}

/// Writes a trace as CSV with header
/// `outer_iter,inner_sweeps,sum_rate,al_value,residual_inf,rho`.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
