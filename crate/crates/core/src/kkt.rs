//! KKT-structured beamforming: a transmit beamformer rebuilt from `2K` dual
//! and power parameters, feasibility projections for the PA placement, and a
//! derivative-free search over those parameters.

use nalgebra::{Cholesky, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PassError, Result};
use crate::model::{effective_channel, rates_from_rows, Placement, Scenario, TransmitBeam, C64};
use crate::wmmse::WmmseRun;

/// `log(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Beamformer columns `d_k = μ_k (I + H̃ diag(λ) H̃ᴴ)⁻¹ h̃_k`, where `h̃_k`
/// is the conjugate of row `k` of `rows`. One Cholesky factorization serves
/// all `K` columns.
pub fn reconstruct_beam(rows: &DMatrix<C64>, lambda: &[f64], mu: &[f64]) -> Result<TransmitBeam> {
    let (k_users, n) = rows.shape();
    if lambda.len() != k_users || mu.len() != k_users {
        return Err(PassError::InvalidInput(format!(
            "expected {k_users} duals and power weights, got {} and {}",
            lambda.len(),
            mu.len()
        )));
    }
    if let Some(k) = lambda.iter().position(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(PassError::InvalidInput(format!(
            "dual λ_{k} must be positive and finite"
        )));
    }
    let h = rows.adjoint();
    let mut weighted = h.clone();
    for (k, &l) in lambda.iter().enumerate() {
        weighted.column_mut(k).scale_mut(l);
    }
    let a = DMatrix::<C64>::identity(n, n) + &weighted * h.adjoint();
    let chol = Cholesky::new(a)
        .ok_or_else(|| PassError::Numerical("KKT system is not positive definite".into()))?;
    let mut d = chol.solve(&h);
    for (k, &m) in mu.iter().enumerate() {
        d.column_mut(k).scale_mut(m);
    }
    Ok(TransmitBeam::new(d))
}

/// `x_end = LΔ_min + sigmoid(raw)(S_x − LΔ_min)` for every waveguide.
pub fn project_x_end(raw: &[f64], scenario: &Scenario) -> Vec<f64> {
    let lo = scenario.pas_per_waveguide as f64 * scenario.min_spacing;
    raw.iter()
        .map(|&r| lo + sigmoid(r) * (scenario.span_x - lo))
        .collect()
}

/// `ε 1 + (1 − Lε) z / Σz`: entries at least `ε`, summing to one. A zero or
/// non-finite sum falls back to uniform weights.
pub fn project_spacings(z: &[f64], eps: f64) -> Vec<f64> {
    let len = z.len() as f64;
    let total: f64 = z.iter().sum();
    let free = (1.0 - len * eps).max(0.0);
    if !(total > 0.0) || !total.is_finite() {
        return vec![eps + free / len; z.len()];
    }
    z.iter().map(|&v| eps + free * v / total).collect()
}

/// Scales column `k` by `√(μ_k P / Σμ)`, divides by `Σ‖d_k‖²`, then rescales
/// so the total power is exactly `P`. An all-zero beam is returned unchanged.
pub fn normalize_power(beam: &TransmitBeam, mu: &[f64], power: f64) -> TransmitBeam {
    let total_mu: f64 = mu.iter().sum();
    let mut d = beam.d.clone();
    if total_mu > 0.0 && total_mu.is_finite() {
        for (k, &m) in mu.iter().enumerate() {
            d.column_mut(k).scale_mut((m * power / total_mu).sqrt());
        }
    }
    let p = crate::linalg::frobenius_sq(&d);
    if !(p > 0.0) || !p.is_finite() {
        return TransmitBeam::zeros(beam.d.nrows(), beam.d.ncols());
    }
    d /= C64::from(p);
    let p = crate::linalg::frobenius_sq(&d);
    d *= C64::from((power / p).sqrt());
    TransmitBeam::new(d)
}

/// Parameters of a KKT-structured solution, as exchanged with learners.
///
/// `x_end` holds the pre-sigmoid last-PA coordinate of each waveguide and
/// `omega` the unnormalized spacing weights (row `n`, entry 0 is the offset
/// from the feed); both are mapped to a feasible placement by
/// [`KktParams::placement`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktParams {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub x_end: Vec<f64>,
    pub omega: Vec<Vec<f64>>,
}

impl KktParams {
    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        let (k, n, l) = (
            scenario.n_users,
            scenario.n_waveguides,
            scenario.pas_per_waveguide,
        );
        let bad = |m: String| Err(PassError::InvalidInput(m));
        if self.lambda.len() != k || self.mu.len() != k {
            return bad(format!("lambda and mu need {k} entries"));
        }
        if self.x_end.len() != n || self.omega.len() != n || self.omega.iter().any(|r| r.len() != l)
        {
            return bad(format!("x_end needs {n} entries and omega {n}x{l}"));
        }
        if self.lambda.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return bad("lambda must be positive and finite".into());
        }
        if self.mu.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return bad("mu must be non-negative and finite".into());
        }
        if self.x_end.iter().any(|v| v.is_nan()) {
            return bad("x_end must not be NaN".into());
        }
        if self
            .omega
            .iter()
            .flatten()
            .any(|&v| !(v >= 0.0) || !v.is_finite())
        {
            return bad("omega must be non-negative and finite".into());
        }
        Ok(())
    }

    /// Feasible placement: projected `x_end`, projected spacings, cumulative sums.
    pub fn placement(&self, scenario: &Scenario) -> Placement {
        let ends = project_x_end(&self.x_end, scenario);
        let l = scenario.pas_per_waveguide;
        let mut x = DMatrix::zeros(scenario.n_waveguides, l);
        for (n, &end) in ends.iter().enumerate() {
            let w = project_spacings(&self.omega[n], scenario.min_spacing / end);
            let mut acc = 0.0;
            for j in 0..l {
                acc += end * w[j];
                x[(n, j)] = acc;
            }
            x[(n, l - 1)] = end;
        }
        Placement::new(x)
    }

    /// Placement plus normalized KKT beamformer.
    pub fn solution(&self, scenario: &Scenario) -> Result<(Placement, TransmitBeam)> {
        self.validate(scenario)?;
        let placement = self.placement(scenario);
        let ch = effective_channel(scenario, &placement)?;
        let beam = reconstruct_beam(&ch.rows, &self.lambda, &self.mu)?;
        Ok((
            placement,
            normalize_power(&beam, &self.mu, scenario.max_power),
        ))
    }

    pub fn sum_rate(&self, scenario: &Scenario) -> Result<f64> {
        let (placement, beam) = self.solution(scenario)?;
        Ok(crate::model::evaluate(scenario, &placement, &beam)?.sum_rate)
    }
}

/// Length of the raw parameter vector `[x_end (N), ω (N·L), λ (K), μ (K)]`.
pub fn raw_len(scenario: &Scenario) -> usize {
    scenario.n_waveguides * (1 + scenario.pas_per_waveguide) + 2 * scenario.n_users
}

/// Unconstrained vector to parameters: ω and μ through softplus, λ through
/// softplus scaled by `P/σ²`.
pub fn decode_raw(raw: &[f64], scenario: &Scenario) -> Result<KktParams> {
    let (k, n, l) = (
        scenario.n_users,
        scenario.n_waveguides,
        scenario.pas_per_waveguide,
    );
    if raw.len() != raw_len(scenario) {
        return Err(PassError::InvalidInput(format!(
            "raw vector has {} entries, expected {}",
            raw.len(),
            raw_len(scenario)
        )));
    }
    let snr = scenario.max_power / scenario.noise_power;
    let (x_end, rest) = raw.split_at(n);
    let (omega, rest) = rest.split_at(n * l);
    let (lambda, mu) = rest.split_at(k);
    Ok(KktParams {
        lambda: lambda
            .iter()
            .map(|&v| (softplus(v) * snr).max(f64::MIN_POSITIVE))
            .collect(),
        mu: mu.iter().map(|&v| softplus(v)).collect(),
        x_end: x_end.to_vec(),
        omega: omega
            .chunks(l)
            .map(|c| c.iter().map(|&v| softplus(v)).collect())
            .collect(),
    })
}

/// Raw vector whose decoded placement matches `placement` (up to the
/// projections' ranges) with `λ_k = P/(Kσ²)` and equal `μ`.
pub fn encode_raw(placement: &Placement, scenario: &Scenario) -> Vec<f64> {
    let (k, n, l) = (
        scenario.n_users,
        scenario.n_waveguides,
        scenario.pas_per_waveguide,
    );
    let lo = l as f64 * scenario.min_spacing;
    let logit = |p: f64| {
        let p = p.clamp(1e-9, 1.0 - 1e-9);
        (p / (1.0 - p)).ln()
    };
    let mut raw = Vec::with_capacity(raw_len(scenario));
    for row in 0..n {
        let end = placement.x[(row, l - 1)];
        raw.push(logit((end - lo) / (scenario.span_x - lo)));
    }
    for row in 0..n {
        let end = project_x_end(&[raw[row]], scenario)[0];
        let eps = scenario.min_spacing / end;
        for j in 0..l {
            let prev = if j == 0 {
                0.0
            } else {
                placement.x[(row, j - 1)]
            };
            let w = (placement.x[(row, j)] - prev) / end - eps;
            raw.push(softplus_inv(w.max(1e-6)));
        }
    }
    raw.extend(std::iter::repeat_n(softplus_inv(1.0 / k as f64), k));
    raw.extend(std::iter::repeat_n(0.0, k));
    raw
}

/// KKT duals `λ_k = α_k |v_k|² / η` at a converged WMMSE run, with `η` the
/// power multiplier of its last beam update.
pub fn fixed_point_duals(run: &WmmseRun) -> Result<Vec<f64>> {
    if !(run.multiplier > 0.0) {
        return Err(PassError::InvalidInput(
            "power constraint inactive at the WMMSE fixed point".into(),
        ));
    }
    Ok(run
        .state
        .alpha
        .iter()
        .zip(&run.state.v)
        .map(|(a, v)| a * v.norm_sqr() / run.multiplier)
        .collect())
}

/// Cross-entropy search settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Total objective evaluations, including the initial mean.
    pub budget: usize,
    pub population: usize,
    pub elite: usize,
    /// Weight of the new elite statistics in the mean/variance update.
    pub smoothing: f64,
    pub init_std: f64,
    pub min_std: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: 2000,
            population: 64,
            elite: 8,
            smoothing: 0.9,
            init_std: 1.0,
            min_std: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub params: KktParams,
    pub placement: Placement,
    pub beam: TransmitBeam,
    pub sum_rate: f64,
    pub rates: Vec<f64>,
    /// Best rate after the initial mean and after each generation.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

fn score(raw: &[f64], scenario: &Scenario) -> f64 {
    decode_raw(raw, scenario)
        .and_then(|p| p.sum_rate(scenario))
        .ok()
        .filter(|v| v.is_finite())
        .unwrap_or(f64::NEG_INFINITY)
}

/// Cross-entropy search over the raw KKT parameters, started from the
/// equally spaced placement around the users.
///
/// Samples are drawn sequentially from a seeded generator and scored in
/// parallel, so the result depends only on `(scenario, config, seed)`.
pub fn dual_search(scenario: &Scenario, config: &SearchConfig, seed: u64) -> Result<SearchOutcome> {
    scenario.validate()?;
    if config.budget == 0
        || config.population == 0
        || config.elite == 0
        || config.elite > config.population
    {
        return Err(PassError::InvalidInput(
            "search needs budget ≥ 1 and 1 ≤ elite ≤ population".into(),
        ));
    }
    if !(config.smoothing > 0.0 && config.smoothing <= 1.0) {
        return Err(PassError::InvalidInput(
            "smoothing must lie in (0, 1]".into(),
        ));
    }
    let dim = raw_len(scenario);
    let mut mean = encode_raw(&crate::mmpdd::initial_placement(scenario), scenario);
    let mut std = vec![config.init_std; dim];
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let mut best_raw = mean.clone();
    let mut best = score(&mean, scenario);
    let mut trace = vec![best];
    let mut used = 1;
    while used < config.budget {
        let count = config.population.min(config.budget - used);
        let samples: Vec<Vec<f64>> = (0..count)
            .map(|_| {
                (0..dim)
                    .map(|i| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        mean[i] + std[i] * z
                    })
                    .collect()
            })
            .collect();
        let scores: Vec<f64> = samples.par_iter().map(|s| score(s, scenario)).collect();
        used += count;

        let mut order: Vec<usize> = (0..count).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        if scores[order[0]] > best {
            best = scores[order[0]];
            best_raw.clone_from(&samples[order[0]]);
        }
        trace.push(best);

        let elite: Vec<&Vec<f64>> = order
            .iter()
            .take(config.elite.min(count))
            .filter(|&&i| scores[i].is_finite())
            .map(|&i| &samples[i])
            .collect();
        if elite.is_empty() {
            continue;
        }
        let e = elite.len() as f64;
        for i in 0..dim {
            let m = elite.iter().map(|s| s[i]).sum::<f64>() / e;
            let var = elite.iter().map(|s| (s[i] - m).powi(2)).sum::<f64>() / e;
            mean[i] = config.smoothing * m + (1.0 - config.smoothing) * mean[i];
            std[i] = (config.smoothing * var.sqrt() + (1.0 - config.smoothing) * std[i])
                .max(config.min_std);
        }
    }

    let params = decode_raw(&best_raw, scenario)?;
    let (placement, beam) = params.solution(scenario)?;
    let ch = effective_channel(scenario, &placement)?;
    let report = rates_from_rows(&ch.rows, &beam, scenario.noise_power);
    Ok(SearchOutcome {
        params,
        placement,
        beam,
        sum_rate: report.sum_rate,
        rates: report.rates,
        trace,
        evaluations: used,
    })
}
