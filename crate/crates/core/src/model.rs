//! Physical model of a pinching-antenna downlink.
//!
//! `N` dielectric waveguides run along the x-axis at height `h_PA`, each
//! carrying `L` pinching antennas (PAs). The PA at `x` on waveguide `n` sees
//! the feed signal with phase `-κ n_eff x` and radiates to users on the
//! floor through a line-of-sight spherical-wavefront channel. Everything here
//! is a pure function of its inputs.
//!
//! Index conventions: users `k`, waveguides `n`, PAs `l`; a flat PA index is
//! `m = n * L + l`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PassError, Result};

pub type C64 = Complex64;

/// Rounded speed of light; gives β = 7.9577e-4 and λ_f/2 = 5 mm at 30 GHz.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Absolute tolerance (meters / watts) used by [`check_feasibility`].
pub const FEASIBILITY_TOL: f64 = 1e-9;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// How the reference gain `β` is derived from the carrier frequency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaConvention {
    /// `β = c / (4π f_c)`, taken literally.
    #[default]
    PaperLinear,
    /// `β = (c / (4π f_c))²`, the Friis power gain at 1 m.
    Squared,
}

/// Immutable physical configuration of one downlink instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_waveguides: usize,
    pub n_users: usize,
    pub pas_per_waveguide: usize,
    pub span_x: f64,
    pub span_y: f64,
    pub pass_height: f64,
    pub carrier_freq: f64,
    pub refractive_index: f64,
    #[serde(default)]
    pub beta_convention: BetaConvention,
    /// Watts.
    pub max_power: f64,
    /// Watts.
    pub noise_power: f64,
    pub min_spacing: f64,
    pub waveguide_y: Vec<f64>,
    /// `(x, y)` per user; users sit at height zero.
    pub users: Vec<[f64; 2]>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PassError::InvalidScenario(m));
        if self.n_users == 0 || self.n_waveguides != self.n_users {
            return bad(format!(
                "need N = K >= 1, got N = {}, K = {}",
                self.n_waveguides, self.n_users
            ));
        }
        if self.pas_per_waveguide == 0 {
            return bad("L must be at least 1".into());
        }
        let positive = [
            ("span_x", self.span_x),
            ("span_y", self.span_y),
            ("carrier_freq", self.carrier_freq),
            ("refractive_index", self.refractive_index),
            ("max_power", self.max_power),
            ("noise_power", self.noise_power),
            ("min_spacing", self.min_spacing),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and positive, got {v}"));
            }
        }
        if !(self.pass_height.is_finite() && self.pass_height >= 0.0) {
            return bad(format!(
                "pass_height must be >= 0, got {}",
                self.pass_height
            ));
        }
        if self.pas_per_waveguide as f64 * self.min_spacing > self.span_x + FEASIBILITY_TOL {
            return bad(format!(
                "L * min_spacing = {} exceeds span_x = {}",
                self.pas_per_waveguide as f64 * self.min_spacing,
                self.span_x
            ));
        }
        if self.waveguide_y.len() != self.n_waveguides {
            return bad("waveguide_y length must equal N".into());
        }
        for (i, &y) in self.waveguide_y.iter().enumerate() {
            if !(0.0..=self.span_y).contains(&y) {
                return bad(format!("waveguide {i} at y = {y} outside [0, S_y]"));
            }
            if i > 0 && y <= self.waveguide_y[i - 1] {
                return bad("waveguide_y must be strictly increasing".into());
            }
        }
        if self.users.len() != self.n_users {
            return bad("user count must equal K".into());
        }
        for (k, u) in self.users.iter().enumerate() {
            if !(0.0..=self.span_x).contains(&u[0]) || !(0.0..=self.span_y).contains(&u[1]) {
                return bad(format!("user {k} at ({}, {}) outside the area", u[0], u[1]));
            }
        }
        Ok(())
    }

    pub fn n_pas(&self) -> usize {
        self.n_waveguides * self.pas_per_waveguide
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    pub fn guided_wavelength(&self) -> f64 {
        self.wavelength() / self.refractive_index
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength()
    }

    pub fn path_gain_beta(&self) -> f64 {
        let amp = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * self.carrier_freq);
        match self.beta_convention {
            BetaConvention::PaperLinear => amp,
            BetaConvention::Squared => amp * amp,
        }
    }

    /// `φ = sqrt(β / L)`, the amplitude of one PA's contribution at unit distance.
    pub fn phi(&self) -> f64 {
        (self.path_gain_beta() / self.pas_per_waveguide as f64).sqrt()
    }

    /// Transverse (y, z) offset between waveguide `n` and user `k`.
    pub fn psi(&self, k: usize, n: usize) -> f64 {
        let dy = self.waveguide_y[n] - self.users[k][1];
        dy.hypot(self.pass_height)
    }

    /// Distance from a PA at `x` on waveguide `n` to user `k`.
    pub fn distance(&self, k: usize, n: usize, x: f64) -> f64 {
        (x - self.users[k][0]).hypot(self.psi(k, n))
    }

    pub fn mean_user_x(&self) -> f64 {
        self.users.iter().map(|u| u[0]).sum::<f64>() / self.n_users as f64
    }
}

/// PA positions along each waveguide, `N × L` meters.
#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub x: DMatrix<f64>,
}

impl Placement {
    pub fn new(x: DMatrix<f64>) -> Self {
        Self { x }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let l = rows.first().map_or(0, Vec::len);
        if n == 0 || l == 0 || rows.iter().any(|r| r.len() != l) {
            return Err(PassError::InvalidInput("ragged or empty placement".into()));
        }
        Ok(Self {
            x: DMatrix::from_fn(n, l, |i, j| rows[i][j]),
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.x.nrows())
            .map(|n| self.x.row(n).iter().copied().collect())
            .collect()
    }

    pub fn n_waveguides(&self) -> usize {
        self.x.nrows()
    }

    pub fn pas_per_waveguide(&self) -> usize {
        self.x.ncols()
    }

    /// Flat PA index `m = n * L + l` to position.
    pub fn flat(&self, m: usize) -> f64 {
        let l = self.x.ncols();
        self.x[(m / l, m % l)]
    }
}

/// Digital precoder `D`, `N × K`; column `k` feeds user `k`'s stream.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmitBeam {
    pub d: DMatrix<C64>,
}

impl TransmitBeam {
    pub fn new(d: DMatrix<C64>) -> Self {
        Self { d }
    }

    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            d: DMatrix::zeros(n, k),
        }
    }

    pub fn power(&self) -> f64 {
        self.d.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Effective channels `h̃_k^H = h_k^H G(X)` plus the per-link geometry.
#[derive(Clone, Debug)]
pub struct EffectiveChannel {
    /// `K × N`; row `k` is `h̃_k^H`.
    pub rows: DMatrix<C64>,
    /// `K × M` PA-to-user distances.
    pub distances: DMatrix<f64>,
    /// `K × N` transverse offsets.
    pub psi: DMatrix<f64>,
}

impl EffectiveChannel {
    /// `N × K` matrix whose column `k` is `h̃_k`.
    pub fn h_tilde(&self) -> DMatrix<C64> {
        self.rows.adjoint()
    }

    pub fn n_users(&self) -> usize {
        self.rows.nrows()
    }

    /// Received amplitudes `q_{k,k'} = h̃_k^H d_{k'}`.
    pub fn responses(&self, beam: &TransmitBeam) -> DMatrix<C64> {
        &self.rows * &beam.d
    }
}

/// Block-diagonal feed response `G(X)`, `M × N`.
pub fn guided_response(scenario: &Scenario, placement: &Placement) -> DMatrix<C64> {
    let (n_wg, l) = (placement.n_waveguides(), placement.pas_per_waveguide());
    let kn = scenario.wavenumber() * scenario.refractive_index;
    let amp = 1.0 / (l as f64).sqrt();
    let mut g = DMatrix::zeros(n_wg * l, n_wg);
    for n in 0..n_wg {
        for j in 0..l {
            g[(n * l + j, n)] = C64::from_polar(amp, -kn * placement.x[(n, j)]);
        }
    }
    g
}

/// Row `h_k^H(X)` of free-space channels from every PA to user `k`.
pub fn user_channel(scenario: &Scenario, placement: &Placement, k: usize) -> Result<Vec<C64>> {
    let (n_wg, l) = (placement.n_waveguides(), placement.pas_per_waveguide());
    let sqrt_beta = scenario.path_gain_beta().sqrt();
    let kappa = scenario.wavenumber();
    let mut row = Vec::with_capacity(n_wg * l);
    for n in 0..n_wg {
        for j in 0..l {
            let r = scenario.distance(k, n, placement.x[(n, j)]);
            if r <= 0.0 {
                return Err(PassError::CoLocated {
                    user: k,
                    waveguide: n,
                    pa: j,
                });
            }
            row.push(C64::from_polar(sqrt_beta / r, -kappa * r));
        }
    }
    Ok(row)
}

/// Effective channels for all users.
///
/// Computed entry-wise as `Σ_l φ e^{-iκ(r + n_eff x)} / r`, which equals the
/// product `h_k^H G(X)`.
pub fn effective_channel(scenario: &Scenario, placement: &Placement) -> Result<EffectiveChannel> {
    let (n_wg, l) = (placement.n_waveguides(), placement.pas_per_waveguide());
    let k_users = scenario.n_users;
    let kappa = scenario.wavenumber();
    let n_eff = scenario.refractive_index;
    let phi = scenario.phi();
    let mut rows = DMatrix::zeros(k_users, n_wg);
    let mut distances = DMatrix::zeros(k_users, n_wg * l);
    let mut psi = DMatrix::zeros(k_users, n_wg);
    for k in 0..k_users {
        let xu = scenario.users[k][0];
        for n in 0..n_wg {
            let ps = scenario.psi(k, n);
            psi[(k, n)] = ps;
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..l {
                let x = placement.x[(n, j)];
                let r = (x - xu).hypot(ps);
                if r <= 0.0 {
                    return Err(PassError::CoLocated {
                        user: k,
                        waveguide: n,
                        pa: j,
                    });
                }
                distances[(k, n * l + j)] = r;
                acc += C64::from_polar(phi / r, -kappa * (r + n_eff * x));
            }
            rows[(k, n)] = acc;
        }
    }
    Ok(EffectiveChannel {
        rows,
        distances,
        psi,
    })
}

/// Per-user link quality for one `(X, D)` pair.
#[derive(Clone, Debug)]
pub struct RateReport {
    pub sinr: Vec<f64>,
    pub rates: Vec<f64>,
    pub sum_rate: f64,
}

/// SINR, per-user rates (bits/s/Hz) and sum rate from a channel-row matrix.
///
/// `rows` is `K × N_t` with row `k` equal to user `k`'s conjugated channel, so
/// the same routine scores both PASS and fixed-array baselines.
pub fn rates_from_rows(rows: &DMatrix<C64>, beam: &TransmitBeam, noise_power: f64) -> RateReport {
    let q = rows * &beam.d;
    let k_users = rows.nrows();
    let mut sinr = Vec::with_capacity(k_users);
    let mut rates = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let signal = q[(k, k)].norm_sqr();
        let interference: f64 = (0..q.ncols())
            .filter(|&j| j != k)
            .map(|j| q[(k, j)].norm_sqr())
            .sum();
        let s = signal / (interference + noise_power);
        sinr.push(s);
        rates.push(s.ln_1p() / std::f64::consts::LN_2);
    }
    let sum_rate = rates.iter().sum();
    RateReport {
        sinr,
        rates,
        sum_rate,
    }
}

pub fn sinr_and_rate(
    channel: &EffectiveChannel,
    beam: &TransmitBeam,
    scenario: &Scenario,
) -> RateReport {
    rates_from_rows(&channel.rows, beam, scenario.noise_power)
}

/// Convenience: evaluate the sum rate of `(X, D)` from scratch.
pub fn evaluate(
    scenario: &Scenario,
    placement: &Placement,
    beam: &TransmitBeam,
) -> Result<RateReport> {
    let ch = effective_channel(scenario, placement)?;
    Ok(sinr_and_rate(&ch, beam, scenario))
}

/// Effective gain `E_k` and interference `I_{k,k'}` via the explicit
/// double sum over waveguides and PAs. Returns a `K × K` matrix whose
/// diagonal holds `E_k`.
pub fn gains_by_summation(
    scenario: &Scenario,
    placement: &Placement,
    beam: &TransmitBeam,
) -> DMatrix<f64> {
    let (n_wg, l) = (placement.n_waveguides(), placement.pas_per_waveguide());
    let k_users = scenario.n_users;
    let kappa = scenario.wavenumber();
    let n_eff = scenario.refractive_index;
    let scale = scenario.path_gain_beta() / l as f64;
    DMatrix::from_fn(k_users, beam.d.ncols(), |k, kp| {
        let mut acc = C64::new(0.0, 0.0);
        for n in 0..n_wg {
            for j in 0..l {
                let x = placement.x[(n, j)];
                let r = scenario.distance(k, n, x);
                acc += C64::from_polar(1.0 / r, -kappa * (r + n_eff * x)) * beam.d[(n, kp)];
            }
        }
        scale * acc.norm_sqr()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// Spacing between PA `l-1` and `l` on waveguide `n` is short by `margin`.
    Spacing {
        waveguide: usize,
        pa: usize,
        margin: f64,
    },
    /// PA lies outside `[0, S_x]` by `margin`.
    Range {
        waveguide: usize,
        pa: usize,
        margin: f64,
    },
    /// Total transmit power exceeds `P` by `margin` watts.
    Power {
        margin: f64,
    },
    Shape(String),
}

/// Lists every violated constraint (minimum spacing, waveguide range, power).
pub fn check_feasibility(
    scenario: &Scenario,
    placement: &Placement,
    beam: &TransmitBeam,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let (n_wg, l) = (placement.n_waveguides(), placement.pas_per_waveguide());
    if n_wg != scenario.n_waveguides || l != scenario.pas_per_waveguide {
        out.push(Violation::Shape(format!(
            "placement is {n_wg}x{l}, scenario expects {}x{}",
            scenario.n_waveguides, scenario.pas_per_waveguide
        )));
        return out;
    }
    if beam.d.nrows() != scenario.n_waveguides || beam.d.ncols() != scenario.n_users {
        out.push(Violation::Shape(format!(
            "beam is {}x{}, scenario expects {}x{}",
            beam.d.nrows(),
            beam.d.ncols(),
            scenario.n_waveguides,
            scenario.n_users
        )));
        return out;
    }
    for n in 0..n_wg {
        for j in 0..l {
            let x = placement.x[(n, j)];
            if !x.is_finite() {
                out.push(Violation::Range {
                    waveguide: n,
                    pa: j,
                    margin: f64::INFINITY,
                });
                continue;
            }
            if x < -FEASIBILITY_TOL {
                out.push(Violation::Range {
                    waveguide: n,
                    pa: j,
                    margin: -x,
                });
            } else if x > scenario.span_x + FEASIBILITY_TOL {
                out.push(Violation::Range {
                    waveguide: n,
                    pa: j,
                    margin: x - scenario.span_x,
                });
            }
            if j > 0 {
                let gap = x - placement.x[(n, j - 1)];
                if gap < scenario.min_spacing - FEASIBILITY_TOL {
                    out.push(Violation::Spacing {
                        waveguide: n,
                        pa: j,
                        margin: scenario.min_spacing - gap,
                    });
                }
            }
        }
    }
    let p = beam.power();
    if !p.is_finite() || p > scenario.max_power + FEASIBILITY_TOL {
        out.push(Violation::Power {
            margin: p - scenario.max_power,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    pub(crate) fn single_link(x_user: f64) -> Scenario {
        Scenario {
            n_waveguides: 1,
            n_users: 1,
            pas_per_waveguide: 1,
            span_x: 20.0,
            span_y: 10.0,
            pass_height: 2.5,
            carrier_freq: 30e9,
            refractive_index: 1.4,
            beta_convention: BetaConvention::PaperLinear,
            max_power: dbm_to_watts(10.0),
            noise_power: dbm_to_watts(-90.0),
            min_spacing: 0.005,
            waveguide_y: vec![2.0],
            users: vec![[x_user, 2.0]],
        }
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(10.0) - 0.01).abs() < 1e-15);
        assert!((dbm_to_watts(-90.0) - 1e-12).abs() < 1e-25);
        assert!((watts_to_dbm(0.01) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn guided_response_examples() {
        let mut s = single_link(5.0);
        s.pas_per_waveguide = 4;
        let lw = s.guided_wavelength();
        let p = Placement::new(DMatrix::from_row_slice(
            1,
            4,
            &[0.0, lw, 2.0 * lw, 3.0 * lw],
        ));
        let g = guided_response(&s, &p);
        assert!((g[(0, 0)] - C64::new(0.5, 0.0)).norm() < 1e-12);
        assert!((g[(1, 0)] - C64::new(0.5, 0.0)).norm() < 1e-9);

        let s1 = single_link(5.0);
        let p1 = Placement::new(DMatrix::from_element(1, 1, lw / 4.0));
        let g1 = guided_response(&s1, &p1);
        assert!((g1[(0, 0)] - C64::new(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn guided_response_is_block_diagonal() {
        let mut s = single_link(5.0);
        s.n_waveguides = 3;
        s.n_users = 3;
        s.pas_per_waveguide = 2;
        s.waveguide_y = vec![1.0, 4.0, 7.0];
        s.users = vec![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let p = Placement::new(DMatrix::from_fn(3, 2, |n, l| {
            1.0 + n as f64 + 0.3 * l as f64
        }));
        let g = guided_response(&s, &p);
        for m in 0..6 {
            for n in 0..3 {
                if m / 2 == n {
                    assert!((g[(m, n)].norm() * 2f64.sqrt() - 1.0).abs() < 1e-12);
                } else {
                    assert_eq!(g[(m, n)], C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn beta_and_vertical_link() {
        let s = single_link(5.0);
        // c / (4π f_c) at 30 GHz
        let beta = s.path_gain_beta();
        assert!((beta - 7.957_747e-4).abs() < 1e-9, "beta = {beta}");
        let p = Placement::new(DMatrix::from_element(1, 1, 5.0));
        let h = user_channel(&s, &p, 0).unwrap();
        let r = 2.5;
        assert!((h[0].norm() - beta.sqrt() / r).abs() < 1e-15);
        assert!((h[0].norm() - 1.128_379e-2).abs() < 1e-8);
        let phase = (-s.wavenumber() * r).rem_euclid(2.0 * PI);
        assert!((h[0].arg().rem_euclid(2.0 * PI) - phase).abs() < 1e-9);

        let mut sq = s.clone();
        sq.beta_convention = BetaConvention::Squared;
        assert!((sq.path_gain_beta() - beta * beta).abs() < 1e-20);
    }

    #[test]
    fn inverse_distance_law() {
        let mut s = single_link(0.0);
        s.pass_height = 0.0;
        s.waveguide_y = vec![0.0];
        s.users = vec![[0.0, 0.0]];
        let near = Placement::new(DMatrix::from_element(1, 1, 3.0));
        let far = Placement::new(DMatrix::from_element(1, 1, 6.0));
        let a = user_channel(&s, &near, 0).unwrap()[0];
        let b = user_channel(&s, &far, 0).unwrap()[0];
        assert!((a.norm() / b.norm() - 2.0).abs() < 1e-12);
        let dphase = (a / b).arg();
        let expected = (s.wavenumber() * 3.0 + PI).rem_euclid(2.0 * PI) - PI;
        assert!((dphase - expected).abs() < 1e-9);
    }

    #[test]
    fn co_located_user_is_an_error() {
        let mut s = single_link(5.0);
        s.pass_height = 0.0;
        let p = Placement::new(DMatrix::from_element(1, 1, 5.0));
        assert!(matches!(
            user_channel(&s, &p, 0),
            Err(PassError::CoLocated { .. })
        ));
        assert!(effective_channel(&s, &p).is_err());
    }

    #[test]
    fn single_link_collapse() {
        let s = single_link(7.0);
        let x = 9.0;
        let p = Placement::new(DMatrix::from_element(1, 1, x));
        let ch = effective_channel(&s, &p).unwrap();
        let r = s.distance(0, 0, x);
        let expected = C64::from_polar(
            s.path_gain_beta().sqrt() / r,
            -s.wavenumber() * (r + s.refractive_index * x),
        );
        assert!((ch.rows[(0, 0)] - expected).norm() < 1e-15);
    }

    #[test]
    fn single_user_snr_at_best_position() {
        let s = single_link(10.0);
        let p = Placement::new(DMatrix::from_element(1, 1, 10.0));
        let ch = effective_channel(&s, &p).unwrap();
        let h = ch.rows[(0, 0)];
        let beam = TransmitBeam::new(DMatrix::from_element(
            1,
            1,
            h.conj() / h.norm() * s.max_power.sqrt(),
        ));
        let rep = sinr_and_rate(&ch, &beam, &s);
        let snr = s.max_power * s.path_gain_beta() / (6.25 * s.noise_power);
        assert!((rep.sinr[0] / snr - 1.0).abs() < 1e-12);
        assert!((snr - 1.273_24e6).abs() < 1e1);
        assert!(
            (rep.sum_rate - 20.280).abs() < 1e-3,
            "rate {}",
            rep.sum_rate
        );
    }

    #[test]
    fn zero_beam_gives_zero_rate() {
        let s = single_link(10.0);
        let p = Placement::new(DMatrix::from_element(1, 1, 3.0));
        let rep = evaluate(&s, &p, &TransmitBeam::zeros(1, 1)).unwrap();
        assert_eq!(rep.sinr, vec![0.0]);
        assert_eq!(rep.sum_rate, 0.0);
    }

    #[test]
    fn feasibility_examples() {
        let mut s = single_link(10.0);
        s.pas_per_waveguide = 2;
        let beam = TransmitBeam::zeros(1, 1);
        let ok = Placement::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0 + s.min_spacing]));
        assert!(check_feasibility(&s, &ok, &beam).is_empty());

        let out = Placement::new(DMatrix::from_row_slice(1, 2, &[1.0, s.span_x + 0.01]));
        let v = check_feasibility(&s, &out, &beam);
        assert_eq!(v.len(), 1);
        match &v[0] {
            Violation::Range { margin, .. } => assert!((margin - 0.01).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }

        let close = Placement::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.001]));
        assert!(matches!(
            check_feasibility(&s, &close, &beam)[0],
            Violation::Spacing { .. }
        ));

        let hot = TransmitBeam::new(DMatrix::from_element(
            1,
            1,
            C64::new((s.max_power * (1.0 + 1e-6)).sqrt(), 0.0),
        ));
        assert!(matches!(
            check_feasibility(&s, &ok, &hot)[0],
            Violation::Power { .. }
        ));
    }

    #[test]
    fn validate_rejects_bad_scenarios() {
        let mut s = single_link(1.0);
        assert!(s.validate().is_ok());
        s.n_waveguides = 2;
        assert!(s.validate().is_err());
        let mut s = single_link(1.0);
        s.users[0][0] = 25.0;
        assert!(s.validate().is_err());
        let mut s = single_link(1.0);
        s.pas_per_waveguide = 5000;
        assert!(s.validate().is_err());
    }
}
