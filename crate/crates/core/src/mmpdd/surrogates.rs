//! Majorization surrogates used by the placement and phase blocks.
//!
//! Notation: `xu` is the user's x-coordinate, `psi` the transverse offset,
//! `x0` the expansion point and `r(x) = sqrt((x − xu)² + psi²)`.

#[inline]
pub fn dist(x: f64, xu: f64, psi: f64) -> f64 {
    (x - xu).hypot(psi)
}

/// Upper bound on `r(x)` from `sqrt(z) ≤ (z + z0) / (2 sqrt(z0))`.
pub fn jensen_sqrt_bound(x: f64, x0: f64, xu: f64, psi: f64) -> f64 {
    let r0 = dist(x0, xu, psi);
    ((x - xu).powi(2) + (x0 - xu).powi(2) + 2.0 * psi * psi) / (2.0 * r0)
}

/// First-order expansion of `Ω r(x)` at `x0`; an upper bound when `Ω ≤ 0`.
pub fn cc_linearization(omega: f64, x: f64, x0: f64, xu: f64, psi: f64) -> f64 {
    let r0 = dist(x0, xu, psi);
    omega * r0 + omega * (x0 - xu) / r0 * (x - x0)
}

/// `cc_linearization − Ω r(x)` in a cancellation-free form (valid for `Ω ≤ 0`).
pub fn cc_gap(omega: f64, x: f64, x0: f64, xu: f64, psi: f64) -> f64 {
    let d = x - xu;
    let d0 = x0 - xu;
    let r = dist(x, xu, psi);
    let r0 = dist(x0, xu, psi);
    let den = r * r0 + d * d0 + psi * psi;
    if den <= 0.0 {
        return cc_linearization(omega, x, x0, xu, psi) - omega * r;
    }
    -omega * psi * psi * (x - x0).powi(2) / (r0 * den)
}

/// Convex majorizer of `x r(x)` on `x ≥ 0` (requires `xu ≥ 0`): the Jensen
/// bound on `r` followed by linearizing `−x²` at `x0`.
pub fn nc_majorizer(x: f64, x0: f64, xu: f64, psi: f64) -> f64 {
    let r0 = dist(x0, xu, psi);
    let b = xu * xu + psi * psi + r0 * r0 - 4.0 * xu * x0;
    (x.powi(3) + b * x + 2.0 * xu * x0 * x0) / (2.0 * r0)
}

/// `nc_majorizer − x r(x) = x (r − r0)² / (2 r0) + xu (x − x0)² / r0`.
pub fn nc_gap(x: f64, x0: f64, xu: f64, psi: f64) -> f64 {
    let r = dist(x, xu, psi);
    let r0 = dist(x0, xu, psi);
    x * (r - r0).powi(2) / (2.0 * r0) + xu * (x - x0).powi(2) / r0
}

/// Derivatives `(f', f'')` of [`nc_majorizer`].
pub fn nc_majorizer_derivs(x: f64, x0: f64, xu: f64, psi: f64) -> (f64, f64) {
    let r0 = dist(x0, xu, psi);
    let b = xu * xu + psi * psi + r0 * r0 - 4.0 * xu * x0;
    ((3.0 * x * x + b) / (2.0 * r0), 3.0 * x / r0)
}

/// `L^ex(θ) = −φ Re{c e^{iθ}}`.
pub fn l_ex(theta: f64, c: num_complex::Complex64, phi: f64) -> f64 {
    -phi * (c * num_complex::Complex64::from_polar(1.0, theta)).re
}

/// `∇L^ex(θ) = φ (Re c sin θ + Im c cos θ)`.
pub fn l_ex_grad(theta: f64, c: num_complex::Complex64, phi: f64) -> f64 {
    phi * (c.re * theta.sin() + c.im * theta.cos())
}

/// Lipschitz constant `φ |c|` of `∇L^ex`.
pub fn l_ex_lipschitz(c: num_complex::Complex64, phi: f64) -> f64 {
    phi * c.norm()
}

/// Quadratic upper bound of `L^ex` at `θ0` with curvature `φ |c|`.
pub fn theta_surrogate(theta: f64, theta0: f64, c: num_complex::Complex64, phi: f64) -> f64 {
    let d = theta - theta0;
    l_ex(theta0, c, phi) + l_ex_grad(theta0, c, phi) * d + 0.5 * l_ex_lipschitz(c, phi) * d * d
}
