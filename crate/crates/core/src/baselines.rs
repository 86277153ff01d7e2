//! Reference solutions: a fully digital array at the feed, uniformly spread
//! PAs, and an exhaustive grid search over PA positions for tiny instances.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{PassError, Result};
use crate::model::{effective_channel, rates_from_rows, Placement, Scenario, TransmitBeam, C64};
use crate::wmmse::{classic_wmmse, regularized_zero_forcing};

/// Relative objective tolerance of the baseline WMMSE runs.
pub const WMMSE_TOL: f64 = 1e-8;
pub const WMMSE_MAX_ITER: usize = 500;

/// Largest `N·L` and `K` accepted by [`grid_oracle`].
pub const ORACLE_MAX_PAS: usize = 3;
pub const ORACLE_MAX_USERS: usize = 2;

/// A baseline's beamformer and its sum rate (bits/s/Hz).
#[derive(Clone, Debug)]
pub struct BeamSolution {
    pub beam: TransmitBeam,
    pub sum_rate: f64,
    pub rates: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// A baseline's placement, beamformer and sum rate.
#[derive(Clone, Debug)]
pub struct PassSolution {
    pub placement: Placement,
    pub beam: TransmitBeam,
    pub sum_rate: f64,
    pub rates: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// WMMSE beamforming for fixed channel rows, started from RZF.
///
/// Runs in noise-normalized units (`rows·√P/σ`, unit power and noise) so the
/// iteration is insensitive to the physical scale.
pub fn wmmse_beam(rows: &DMatrix<C64>, power: f64, noise: f64) -> Result<BeamSolution> {
    let amp = (power / noise).sqrt();
    let scaled = rows * C64::from(amp);
    let k = rows.nrows() as f64;
    let init = regularized_zero_forcing(&scaled, k, 1.0)?;
    let run = classic_wmmse(&scaled, &init, 1.0, 1.0, WMMSE_TOL, WMMSE_MAX_ITER)?;
    let beam = TransmitBeam::new(run.beam.d * C64::from(power.sqrt()));
    let report = rates_from_rows(rows, &beam, noise);
    Ok(BeamSolution {
        beam,
        sum_rate: report.sum_rate,
        rates: report.rates,
        iterations: run.iterations,
        converged: run.converged,
    })
}

/// Element positions `(y, z)` of the fixed array: `N·L` elements at `x = 0`,
/// half a free-space wavelength apart along y, centered at `S_y / 2`.
pub fn fd_array(scenario: &Scenario) -> Vec<[f64; 2]> {
    let count = scenario.n_pas();
    let spacing = 0.5 * scenario.wavelength();
    let y0 = 0.5 * scenario.span_y - 0.5 * (count as f64 - 1.0) * spacing;
    (0..count)
        .map(|i| [y0 + i as f64 * spacing, scenario.pass_height])
        .collect()
}

/// `K × N·L` channel rows from the fixed array to every user.
pub fn fd_channel_rows(scenario: &Scenario) -> Result<DMatrix<C64>> {
    let array = fd_array(scenario);
    let sqrt_beta = scenario.path_gain_beta().sqrt();
    let kappa = scenario.wavenumber();
    let mut rows = DMatrix::zeros(scenario.n_users, array.len());
    for (k, user) in scenario.users.iter().enumerate() {
        for (m, [y, z]) in array.iter().enumerate() {
            let r = (user[0].powi(2) + (y - user[1]).powi(2) + z * z).sqrt();
            if !(r > 0.0) {
                return Err(PassError::InvalidInput(format!(
                    "user {k} coincides with array element {m}"
                )));
            }
            rows[(k, m)] = C64::from_polar(sqrt_beta / r, -kappa * r);
        }
    }
    Ok(rows)
}

/// Fully digital WMMSE with `N·L` antennas at the feed.
pub fn fd_wmmse(scenario: &Scenario) -> Result<BeamSolution> {
    scenario.validate()?;
    wmmse_beam(
        &fd_channel_rows(scenario)?,
        scenario.max_power,
        scenario.noise_power,
    )
}

/// PAs spread evenly over `[0, S_x]` on every waveguide (`S_x / 2` when `L = 1`).
pub fn uniform_placement(scenario: &Scenario) -> Placement {
    let l = scenario.pas_per_waveguide;
    let x = DMatrix::from_fn(scenario.n_waveguides, l, |_, j| {
        if l == 1 {
            0.5 * scenario.span_x
        } else {
            j as f64 * scenario.span_x / (l - 1) as f64
        }
    });
    Placement::new(x)
}

/// WMMSE beamforming for a given PA placement.
pub fn beam_for_placement(scenario: &Scenario, placement: &Placement) -> Result<PassSolution> {
    let ch = effective_channel(scenario, placement)?;
    let sol = wmmse_beam(&ch.rows, scenario.max_power, scenario.noise_power)?;
    Ok(PassSolution {
        placement: placement.clone(),
        beam: sol.beam,
        sum_rate: sol.sum_rate,
        rates: sol.rates,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

pub fn uniform_pass(scenario: &Scenario) -> Result<PassSolution> {
    scenario.validate()?;
    beam_for_placement(scenario, &uniform_placement(scenario))
}

/// Grid-search context: PA contributions per (user, waveguide, grid point).
struct Grid<'a> {
    contrib: &'a [Vec<Vec<C64>>],
    points: usize,
    min_steps: usize,
    n_wg: usize,
    l: usize,
    k_users: usize,
    power: f64,
    noise: f64,
    /// Largest single-PA amplitude per waveguide (single-user bound).
    amax: Vec<f64>,
    /// Rate of a known grid placement; subtrees bounded strictly below it are skipped.
    incumbent: f64,
}

impl Grid<'_> {
    fn score(&self, flat: &[usize]) -> f64 {
        if self.k_users == 1 {
            let gain: f64 = (0..self.n_wg)
                .map(|n| {
                    flat[n * self.l..(n + 1) * self.l]
                        .iter()
                        .map(|&i| self.contrib[0][n][i])
                        .sum::<C64>()
                        .norm_sqr()
                })
                .sum();
            return (self.power * gain / self.noise).ln_1p() / std::f64::consts::LN_2;
        }
        let rows = DMatrix::from_fn(self.k_users, self.n_wg, |k, n| {
            flat[n * self.l..(n + 1) * self.l]
                .iter()
                .map(|&i| self.contrib[k][n][i])
                .sum::<C64>()
        });
        wmmse_beam(&rows, self.power, self.noise).map_or(f64::NEG_INFINITY, |s| s.sum_rate)
    }

    /// Single-user gain bound `Σ_n (|partial sum| + remaining · amax_n)²`.
    fn gain_bound(&self, flat: &[usize]) -> f64 {
        (0..self.n_wg)
            .map(|n| {
                let lo = (n * self.l).min(flat.len());
                let hi = ((n + 1) * self.l).min(flat.len());
                let partial: C64 = flat[lo..hi].iter().map(|&i| self.contrib[0][n][i]).sum();
                (partial.norm() + (self.l - (hi - lo)) as f64 * self.amax[n]).powi(2)
            })
            .sum()
    }

    /// Depth-first enumeration in lexicographic order; keeps the first maximum.
    /// Single-user subtrees whose gain bound cannot beat the incumbent are skipped.
    fn search(&self, flat: &mut Vec<usize>, best: &mut (f64, Vec<usize>), count: &mut usize) {
        let depth = flat.len();
        if self.k_users == 1 && depth > 0 && depth < self.n_wg * self.l {
            let bound =
                (self.power * self.gain_bound(flat) / self.noise).ln_1p() / std::f64::consts::LN_2;
            if bound < self.incumbent || bound <= best.0 {
                return;
            }
        }
        if depth == self.n_wg * self.l {
            *count += 1;
            let v = self.score(flat);
            if v > best.0 {
                *best = (v, flat.clone());
            }
            return;
        }
        let j = depth % self.l;
        let from = if j == 0 {
            0
        } else {
            flat[depth - 1] + self.min_steps
        };
        let tail = (self.l - 1 - j) * self.min_steps;
        for i in from..self.points.saturating_sub(tail) {
            flat.push(i);
            self.search(flat, best, count);
            flat.pop();
        }
    }
}

/// The equally spaced starting placement snapped to grid indices, if the
/// snapped layout still fits.
fn snapped_initial(
    scenario: &Scenario,
    resolution: f64,
    points: usize,
    min_steps: usize,
) -> Option<Vec<usize>> {
    let init = crate::mmpdd::initial_placement(scenario);
    let l = scenario.pas_per_waveguide;
    let mut flat = Vec::with_capacity(scenario.n_pas());
    for n in 0..scenario.n_waveguides {
        let mut prev: Option<usize> = None;
        for j in 0..l {
            let mut i = (init.x[(n, j)] / resolution).round() as usize;
            if let Some(p) = prev {
                i = i.max(p + min_steps);
            }
            if i >= points {
                return None;
            }
            flat.push(i);
            prev = Some(i);
        }
    }
    Some(flat)
}

/// Exhaustive search over PA positions on a grid of step `resolution`.
///
/// Beamforming is MRT for one user and WMMSE for two. Ties go to the
/// lexicographically first placement, so the result does not depend on the
/// thread count.
pub fn grid_oracle(scenario: &Scenario, resolution: f64) -> Result<PassSolution> {
    scenario.validate()?;
    let (n_wg, l, k_users) = (
        scenario.n_waveguides,
        scenario.pas_per_waveguide,
        scenario.n_users,
    );
    if n_wg * l > ORACLE_MAX_PAS || k_users > ORACLE_MAX_USERS {
        return Err(PassError::TooLarge(format!(
            "grid oracle supports N·L ≤ {ORACLE_MAX_PAS} and K ≤ {ORACLE_MAX_USERS}, got N·L = {} and K = {k_users}",
            n_wg * l
        )));
    }
    if !(resolution > 0.0) {
        return Err(PassError::InvalidInput(
            "grid resolution must be positive".into(),
        ));
    }
    let points = (scenario.span_x / resolution + 1e-9).floor() as usize + 1;
    let min_steps = ((scenario.min_spacing / resolution) - 1e-9).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..points).map(|i| i as f64 * resolution).collect();

    // Per-(user, waveguide) contribution of one PA at each grid point.
    let kappa = scenario.wavenumber();
    let n_eff = scenario.refractive_index;
    let phi = scenario.phi();
    let contrib: Vec<Vec<Vec<C64>>> = (0..k_users)
        .map(|k| {
            (0..n_wg)
                .map(|n| {
                    grid.iter()
                        .map(|&x| {
                            let r = scenario.distance(k, n, x);
                            C64::from_polar(phi / r, -kappa * (r + n_eff * x))
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let (power, noise) = (scenario.max_power, scenario.noise_power);
    let ctx = Grid {
        contrib: &contrib,
        points,
        min_steps,
        n_wg,
        l,
        k_users,
        power,
        noise,
        amax: (0..n_wg)
            .map(|n| contrib[0][n].iter().map(|c| c.norm()).fold(0.0, f64::max))
            .collect(),
        incumbent: f64::NEG_INFINITY,
    };
    let ctx = Grid {
        incumbent: snapped_initial(scenario, resolution, points, min_steps)
            .map_or(f64::NEG_INFINITY, |flat| ctx.score(&flat)),
        ..ctx
    };
    // Subtrees rooted at the first PA's grid index are disjoint and ordered,
    // so the reduction prefers the lower root on ties.
    let (best_rate, best, combos) = (0..points)
        .into_par_iter()
        .map(|root| {
            let mut best = (f64::NEG_INFINITY, Vec::new());
            let mut count = 0;
            let mut flat = vec![root];
            if l == 1 || root + (l - 1) * min_steps < points {
                ctx.search(&mut flat, &mut best, &mut count);
            }
            (best.0, best.1, count)
        })
        .reduce(
            || (f64::NEG_INFINITY, Vec::new(), 0),
            |a, b| {
                let count = a.2 + b.2;
                let take_b =
                    b.0 > a.0 || (b.0 == a.0 && !b.1.is_empty() && (a.1.is_empty() || b.1 < a.1));
                if take_b {
                    (b.0, b.1, count)
                } else {
                    (a.0, a.1, count)
                }
            },
        );
    if best.is_empty() || !best_rate.is_finite() {
        return Err(PassError::InvalidScenario(
            "no grid placement satisfies the spacing constraint".into(),
        ));
    }

    let placement = Placement::new(DMatrix::from_fn(n_wg, l, |n, j| grid[best[n * l + j]]));
    if k_users == 1 {
        let ch = effective_channel(scenario, &placement)?;
        let h = ch.rows.adjoint();
        let norm = h.norm();
        let beam = TransmitBeam::new(h * C64::from(power.sqrt() / norm));
        let report = rates_from_rows(&ch.rows, &beam, noise);
        Ok(PassSolution {
            placement,
            beam,
            sum_rate: report.sum_rate,
            rates: report.rates,
            iterations: combos,
            converged: true,
        })
    } else {
        beam_for_placement(scenario, &placement)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::ScenarioParams;

    fn scenario(users: Vec<[f64; 2]>, l: usize) -> Scenario {
        let n = users.len();
        ScenarioParams {
            n_users: n,
            pas_per_waveguide: l,
            ..Default::default()
        }
        .build(users)
        .unwrap()
    }

    #[test]
    fn fd_single_user_reaches_mrt_rate() {
        let s = scenario(vec![[6.0, 3.0]], 4);
        let rows = fd_channel_rows(&s).unwrap();
        let sol = fd_wmmse(&s).unwrap();
        let exact = (1.0 + s.max_power * rows.norm_squared() / s.noise_power).log2();
        assert!(
            (sol.sum_rate - exact).abs() <= 1e-6 * exact,
            "{} vs {exact}",
            sol.sum_rate
        );
    }

    #[test]
    fn fd_rate_invariant_to_user_order() {
        let a = fd_wmmse(&scenario(vec![[6.0, 3.0], [14.0, 8.0]], 2)).unwrap();
        let b = fd_wmmse(&scenario(vec![[14.0, 8.0], [6.0, 3.0]], 2)).unwrap();
        assert!((a.sum_rate - b.sum_rate).abs() <= 1e-6 * a.sum_rate);
    }

    #[test]
    fn fd_array_is_centered_and_half_wavelength_spaced() {
        let s = scenario(vec![[6.0, 3.0], [14.0, 8.0]], 4);
        let a = fd_array(&s);
        assert_eq!(a.len(), 8);
        let mean = a.iter().map(|p| p[0]).sum::<f64>() / a.len() as f64;
        assert!((mean - 0.5 * s.span_y).abs() < 1e-12);
        assert!((a[1][0] - a[0][0] - 0.005).abs() < 1e-12);
    }

    #[test]
    fn uniform_placement_spacing_and_feasibility() {
        let s = scenario(vec![[6.0, 3.0], [14.0, 8.0]], 4);
        let p = uniform_placement(&s);
        assert!((p.x[(0, 1)] - p.x[(0, 0)] - 20.0 / 3.0).abs() < 1e-12);
        let sol = uniform_pass(&s).unwrap();
        assert!(crate::check_feasibility(&s, &sol.placement, &sol.beam).is_empty());
        let one = uniform_placement(&scenario(vec![[6.0, 3.0]], 1));
        assert_eq!(one.x[(0, 0)], 10.0);
    }

    #[test]
    fn oracle_places_single_pa_above_user() {
        let s = scenario(vec![[7.3, 5.0]], 1);
        let sol = grid_oracle(&s, 1e-3).unwrap();
        assert!((sol.placement.x[(0, 0)] - 7.3).abs() <= 1e-3 + 1e-12);
    }

    #[test]
    fn oracle_refuses_large_instances() {
        let s = scenario(vec![[7.3, 5.0]], 4);
        assert!(matches!(grid_oracle(&s, 1e-2), Err(PassError::TooLarge(_))));
    }

    #[test]
    fn oracle_refinement_never_decreases() {
        let s = scenario(vec![[7.31, 4.0]], 2);
        let coarse = grid_oracle(&s, 0.02).unwrap();
        let fine = grid_oracle(&s, 0.01).unwrap();
        assert!(fine.sum_rate >= coarse.sum_rate - 1e-12);
    }

    #[test]
    fn oracle_dominates_uniform() {
        let s = scenario(vec![[3.0, 2.0], [15.0, 7.0]], 1);
        let oracle = grid_oracle(&s, 0.25).unwrap();
        let uni = uniform_pass(&s).unwrap();
        assert!(oracle.sum_rate >= uni.sum_rate - 1e-9);
    }
}
