//! Coordinate, velocity and time maps between the damped systems, their
//! autonomous equivalents, and the regularized oscillators.
//!
//! Three layers of maps are provided:
//!
//! 1. the time-dependent point transform `X = x e^{λt/2}` that removes the
//!    explicit time dependence of a damped system (and its exact inverse);
//! 2. the regularizing coordinate maps: Levi-Civita squaring `Z = γU²`, its
//!    power-law generalization `Z = Û_N U` (complex power `U^{N+1}`), the
//!    Kustaanheimo-Stiefel map `X = A(U)U`, and the Bohlin squaring `Z = ω²`;
//! 3. the associated time reparametrizations `dt/dτ` and the velocity maps
//!    they induce.
//!
//! Inverse coordinate maps pick a fixed branch (principal root, gauge
//! section); `*_near` variants pick the branch or fiber point closest to a
//! previous value, for continuity along trajectories.

use serde::{Deserialize, Serialize};

use crate::algebra::{gen_lc_matrix, ks_matrix, Coord2, Coord3, Coord4, CoordVec};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Parameters and states
// ---------------------------------------------------------------------------

/// Physical constants defining one scenario.
///
/// `m` is the reduced mass, `k` the potential strength, `lambda` the damping
/// coefficient, `n_power` the integer `N ≥ 0` selecting the potential
/// `r^(-2N/(N+1))`, `c` the Levi-Civita time-reparametrization constant,
/// `gamma` the LC scale constant, and `omega` the oscillator frequency used
/// by the Bohlin chain. `m1`, `m2`, `G` are never inputs; callers supply `m`
/// and `k` directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub m: f64,
    pub k: f64,
    pub lambda: f64,
    pub n_power: u32,
    pub c: f64,
    pub gamma: f64,
    pub omega: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            k: 1.0,
            lambda: 0.0,
            n_power: 1,
            // With c = 1/4 the Levi-Civita and N = 1 power-law pictures use
            // the same fictitious time.
            c: 0.25,
            gamma: 1.0,
            omega: 1.0,
        }
    }
}

impl SystemParams {
    /// `μ = k/m`.
    pub fn mu(&self) -> f64 {
        self.k / self.m
    }

    /// Shifted oscillator frequency squared, `Ω̃² = Ω² - λ²/4`.
    pub fn shifted_omega_sq(&self) -> f64 {
        self.omega * self.omega - 0.25 * self.lambda * self.lambda
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.m > 0.0) {
            return bad(format!("m must be positive, got {}", self.m));
        }
        if !(self.k > 0.0) {
            return bad(format!("k must be positive, got {}", self.k));
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.c > 0.0) {
            return bad(format!("c must be positive, got {}", self.c));
        }
        if !(self.gamma > 0.0) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        for (name, v) in [("m", self.m), ("k", self.k), ("lambda", self.lambda), ("c", self.c), ("gamma", self.gamma), ("omega", self.omega)] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        Ok(())
    }
}

/// Position, velocity and physical time of a damped or autonomous system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState<C: CoordVec> {
    pub q: C,
    pub v: C,
    pub t: f64,
}

impl<C: CoordVec> PhaseState<C> {
    pub fn new(q: C, v: C, t: f64) -> Self {
        Self { q, v, t }
    }

    pub fn r(&self) -> f64 {
        self.q.norm()
    }
}

/// Regularized coordinates `U`, fictitious-time derivative `U′`, fictitious
/// time `τ`, and the co-integrated physical time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedState<C: CoordVec> {
    pub u: C,
    pub u_prime: C,
    pub tau: f64,
    pub t: f64,
}

impl<C: CoordVec> RegularizedState<C> {
    pub fn new(u: C, u_prime: C, tau: f64, t: f64) -> Self {
        Self { u, u_prime, tau, t }
    }
}

// ---------------------------------------------------------------------------
// Point transform between damped and autonomous pictures
// ---------------------------------------------------------------------------

/// Map a damped-system state to the autonomous picture:
/// `X = x e^{λt/2}`, `Ẋ = (ẋ + (λ/2)x) e^{λt/2}`; `t` is unchanged.
pub fn damp_to_autonomous<C: CoordVec>(s: &PhaseState<C>, p: &SystemParams) -> PhaseState<C> {
    let f = (0.5 * p.lambda * s.t).exp();
    let q = s.q.scale(f);
    let v = s.v.add(&s.q.scale(0.5 * p.lambda)).scale(f);
    PhaseState::new(q, v, s.t)
}

/// Exact inverse of [`damp_to_autonomous`].
pub fn autonomous_to_damp<C: CoordVec>(s: &PhaseState<C>, p: &SystemParams) -> PhaseState<C> {
    let f = (-0.5 * p.lambda * s.t).exp();
    let q = s.q.scale(f);
    let v = s.v.sub(&s.q.scale(0.5 * p.lambda)).scale(f);
    PhaseState::new(q, v, s.t)
}

// ---------------------------------------------------------------------------
// Levi-Civita map
// ---------------------------------------------------------------------------

/// Levi-Civita squaring `Z = γ U²` (complex square scaled by `γ`).
pub fn lc_forward(u: Coord2, gamma: f64) -> Coord2 {
    u.cmul(u).scale(gamma)
}

/// Principal branch of the inverse LC map: the square root of `Z/γ` with
/// `U1 ≥ 0`, and `U2 ≥ 0` when `U1 = 0`.
pub fn lc_inverse(z: Coord2, gamma: f64) -> Coord2 {
    z.scale(1.0 / gamma).croot(2)
}

/// Branch of the inverse LC map closest to `prev` (the two branches differ
/// by sign).
pub fn lc_inverse_near(z: Coord2, gamma: f64, prev: Coord2) -> Coord2 {
    let u = lc_inverse(z, gamma);
    if u.sub(&prev).norm_sq() <= u.scale(-1.0).sub(&prev).norm_sq() {
        u
    } else {
        u.scale(-1.0)
    }
}

/// Generalized Levi-Civita map `Z = Û_N U`, computed as the complex power
/// `U^{N+1}`; `|Z| = |U|^{N+1}`. The matrix route `gen_lc_matrix(U, N)·U`
/// produces the same point and is kept as an independent test oracle.
pub fn gen_lc_forward(u: Coord2, n: u32) -> Coord2 {
    u.cpow(n + 1)
}

/// Principal `(N+1)`-th root branch of the inverse generalized LC map.
pub fn gen_lc_inverse(z: Coord2, n: u32) -> Coord2 {
    z.croot(n + 1)
}

/// Branch of the inverse generalized LC map closest to `prev`; candidates
/// are the principal root times the `(N+1)`-th roots of unity.
pub fn gen_lc_inverse_near(z: Coord2, n: u32, prev: Coord2) -> Coord2 {
    let base = gen_lc_inverse(z, n);
    let mut best = base;
    let mut best_d = base.sub(&prev).norm_sq();
    let m = n + 1;
    for j in 1..m {
        let phi = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
        let rot = Coord2::new(phi.cos(), phi.sin());
        let cand = base.cmul(rot);
        let d = cand.sub(&prev).norm_sq();
        if d < best_d {
            best_d = d;
            best = cand;
        }
    }
    best
}

/// Map a physical velocity `Ż` to the fictitious-time derivative `U′`:
/// `dZ/dτ = (r/c) Ż` with `r = γ|U|²`, then `U′ = (dZ/dτ) / (2γU)`.
pub fn lc_velocity_map(u: Coord2, zdot: Coord2, p: &SystemParams) -> Result<Coord2> {
    if u.norm_sq() == 0.0 {
        return Err(Error::Singular("LC velocity map at U = 0"));
    }
    let r = p.gamma * u.norm_sq();
    let dz_dtau = zdot.scale(r / p.c);
    dz_dtau.cdiv(u.scale(2.0 * p.gamma))
}

/// Physical velocity recovered from a regularized state:
/// `Ż = (c/r)·2γU U′`.
pub fn lc_physical_velocity(u: Coord2, u_prime: Coord2, p: &SystemParams) -> Result<Coord2> {
    let r = p.gamma * u.norm_sq();
    if r == 0.0 {
        return Err(Error::Singular("LC physical velocity at U = 0"));
    }
    Ok(u.cmul(u_prime).scale(2.0 * p.gamma * p.c / r))
}

/// Velocity map of the generalized LC picture:
/// `U′ = (N+1) Û_Nᵀ Ż` (from `Z′ = (N+1)Û_N U′` and `dt/dτ = (N+1)²R^{2N}`).
pub fn gen_lc_velocity_map(u: Coord2, zdot: Coord2, n: u32) -> Result<Coord2> {
    if u.norm_sq() == 0.0 {
        return Err(Error::Singular("generalized LC velocity map at U = 0"));
    }
    let uhat_t = gen_lc_matrix(u, n).transpose();
    Ok(uhat_t.mul_vec(&zdot).scale((n + 1) as f64))
}

/// Physical velocity of the generalized LC picture:
/// `Ż = (N+1) Û_N U′ / ((N+1)² R^{2N})`.
pub fn gen_lc_physical_velocity(u: Coord2, u_prime: Coord2, n: u32) -> Result<Coord2> {
    let r2 = u.norm_sq();
    if r2 == 0.0 {
        return Err(Error::Singular("generalized LC physical velocity at U = 0"));
    }
    let g = ((n + 1) * (n + 1)) as f64 * r2.powi(n as i32);
    let zprime = gen_lc_matrix(u, n).mul_vec(&u_prime).scale((n + 1) as f64);
    Ok(zprime.scale(1.0 / g))
}

// ---------------------------------------------------------------------------
// Kustaanheimo-Stiefel map
// ---------------------------------------------------------------------------

/// K-S map from the four-dimensional regularized space to positions:
/// `X0 = U0²-U1²-U2²+U3²`, `X1 = 2(U0U1-U2U3)`, `X2 = 2(U0U2+U1U3)`;
/// `|X| = |U|²`.
pub fn ks_forward(u: Coord4) -> Coord3 {
    let [u0, u1, u2, u3] = u.0;
    Coord3::new(
        u0 * u0 - u1 * u1 - u2 * u2 + u3 * u3,
        2.0 * (u0 * u1 - u2 * u3),
        2.0 * (u0 * u2 + u1 * u3),
    )
}

/// One point on the K-S fiber over `X` (the full preimage is a circle).
///
/// For `X0 ≥ 0` the section `U3 = 0` is used, for `X0 < 0` the section
/// `U2 = 0`; the split keeps the leading square root away from cancellation
/// near `X0 = ±r`.
pub fn ks_inverse(x: Coord3) -> Coord4 {
    let r = x.norm();
    if r == 0.0 {
        return Coord4::zero();
    }
    if x.x >= 0.0 {
        let u0 = (0.5 * (r + x.x)).sqrt();
        Coord4::new(u0, x.y / (2.0 * u0), x.z / (2.0 * u0), 0.0)
    } else {
        let u1 = (0.5 * (r - x.x)).sqrt();
        Coord4::new(x.y / (2.0 * u1), u1, 0.0, x.z / (2.0 * u1))
    }
}

/// Shift a K-S point along its fiber: `U(θ) = cos θ·U + sin θ·P⁽³⁾U`.
/// `ks_forward` is invariant under this motion.
pub fn ks_fiber_shift(u: Coord4, theta: f64) -> Coord4 {
    let [u0, u1, u2, u3] = u.0;
    let tangent = Coord4::new(u3, -u2, u1, -u0);
    u.scale(theta.cos()).add(&tangent.scale(theta.sin()))
}

/// Point on the K-S fiber over `X` closest to `prev`.
pub fn ks_inverse_near(x: Coord3, prev: Coord4) -> Coord4 {
    let u = ks_inverse(x);
    let [u0, u1, u2, u3] = u.0;
    let tangent = Coord4::new(u3, -u2, u1, -u0);
    let a = prev.dot(&u);
    let b = prev.dot(&tangent);
    if a == 0.0 && b == 0.0 {
        return u;
    }
    ks_fiber_shift(u, b.atan2(a))
}

/// Map a physical velocity `Ẋ` to the fictitious-time derivative
/// `U′ = 2 A(U)ᵀ Ẋ` (with `Ẋ` embedded as a four-vector with vanishing
/// last component). The result satisfies the bilinear constraint exactly.
pub fn ks_velocity_map(u: Coord4, xdot: Coord3) -> Result<Coord4> {
    if u.norm_sq() == 0.0 {
        return Err(Error::Singular("K-S velocity map at U = 0"));
    }
    let x4 = Coord4::new(xdot.x, xdot.y, xdot.z, 0.0);
    Ok(ks_matrix(u).transpose().mul_vec(&x4).scale(2.0))
}

/// Physical velocity recovered from a regularized K-S state:
/// `Ẋ = X′/(4r)` with `X′ = 2A(U)U′` and `r = |U|²`.
///
/// The fourth component of `X′` vanishes when the bilinear constraint holds;
/// it is dropped here.
pub fn ks_physical_velocity(u: Coord4, u_prime: Coord4) -> Result<Coord4> {
    let r = u.norm_sq();
    if r == 0.0 {
        return Err(Error::Singular("K-S physical velocity at U = 0"));
    }
    Ok(ks_matrix(u).mul_vec(&u_prime).scale(0.5 / r))
}

/// Canonical momentum map `P = (1/2r) A(U) p̃`, `r = |U|²`. Returns the
/// spatial part; the fourth component of the product vanishes whenever
/// `(U, p̃)` satisfies the bilinear constraint.
pub fn ks_momentum_map(u: Coord4, p_tilde: Coord4) -> Result<Coord3> {
    let r = u.norm_sq();
    if r == 0.0 {
        return Err(Error::Singular("K-S momentum map at U = 0"));
    }
    let p = ks_matrix(u).mul_vec(&p_tilde).scale(0.5 / r);
    Ok(Coord3::new(p.get(0), p.get(1), p.get(2)))
}

/// Bilinear constraint `U0 U3′ - U3 U0′ + U2 U1′ - U1 U2′`.
///
/// It vanishes identically for derivatives produced by [`ks_velocity_map`]
/// and is preserved by the regularized K-S flow.
pub fn bilinear_constraint(u: Coord4, du: Coord4) -> f64 {
    let [u0, u1, u2, u3] = u.0;
    let [d0, d1, d2, d3] = du.0;
    u0 * d3 - u3 * d0 + u2 * d1 - u1 * d2
}

// ---------------------------------------------------------------------------
// Bohlin-Sundman map
// ---------------------------------------------------------------------------

/// Bohlin squaring `Z = ω²` carrying oscillator orbits to Kepler orbits.
pub fn bohlin_forward(omega_c: Coord2) -> Coord2 {
    omega_c.cmul(omega_c)
}

/// Kepler-side velocity of the Bohlin map: `Ż = ω′ / (2ω̄)`.
pub fn bohlin_velocity_map(omega_c: Coord2, omega_prime: Coord2) -> Result<Coord2> {
    if omega_c.norm_sq() == 0.0 {
        return Err(Error::Singular("Bohlin velocity map at ω = 0"));
    }
    omega_prime.cdiv(omega_c.conj().scale(2.0))
}

// ---------------------------------------------------------------------------
// Time reparametrizations
// ---------------------------------------------------------------------------

/// Which `dt/dτ` law a regularized picture uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeFamily {
    /// `dt/dτ = r/c`.
    LeviCivita,
    /// `dt/dτ = (N+1)² r^{2N/(N+1)}`.
    PowerLaw,
    /// `dt/dτ = 4r`.
    KustaanheimoStiefel,
    /// `dt/dτ = 4r` with `r = ω̄ω = |Z|`.
    Bohlin,
}

/// Physical-time rate `dt/dτ` of the selected reparametrization, used to
/// co-integrate `t` along regularized flows. The rate vanishes with `r`
/// (time freezes at collision) for every family except the power law at
/// `N = 0`, where the exponent is zero and the rate is the constant 1.
pub fn time_rate(family: TimeFamily, r: f64, p: &SystemParams) -> Result<f64> {
    if r < 0.0 {
        return Err(Error::NegativeRadius(r));
    }
    Ok(match family {
        TimeFamily::LeviCivita => r / p.c,
        TimeFamily::PowerLaw => {
            let n = p.n_power as f64;
            let np1 = n + 1.0;
            np1 * np1 * r.powf(2.0 * n / np1)
        }
        TimeFamily::KustaanheimoStiefel | TimeFamily::Bohlin => 4.0 * r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const P: SystemParams = SystemParams {
        m: 1.0,
        k: 1.0,
        lambda: 0.0,
        n_power: 1,
        c: 0.25,
        gamma: 1.0,
        omega: 1.0,
    };

    fn c2(x: f64, y: f64) -> Coord2 {
        Coord2::new(x, y)
    }

    #[test]
    fn point_transform_examples() {
        let mut p = P;
        p.lambda = 2.0;
        let s = PhaseState::new(c2(1.0, 0.0), c2(0.0, 0.0), 0.0);
        let a = damp_to_autonomous(&s, &p);
        assert_eq!(a.q, c2(1.0, 0.0));
        assert_eq!(a.v, c2(1.0, 0.0));

        // λ = 0 is the identity map.
        let s = PhaseState::new(c2(0.3, -0.4), c2(1.0, 2.0), 5.0);
        let a = damp_to_autonomous(&s, &P);
        assert_eq!(a, s);

        // At t = 0 the exponential is 1 for any λ.
        let s = PhaseState::new(c2(2.0, 1.0), c2(-1.0, 0.5), 0.0);
        let a = damp_to_autonomous(&s, &p);
        assert_eq!(a.q, s.q);
        assert_eq!(a.v, c2(-1.0 + 2.0, 0.5 + 1.0));

        let back = autonomous_to_damp(&a, &p);
        assert_relative_eq!(back.q.x, s.q.x, max_relative = 1e-14);
        assert_relative_eq!(back.v.y, s.v.y, max_relative = 1e-14);
    }

    #[test]
    fn lc_forward_examples() {
        assert_eq!(lc_forward(c2(1.0, 0.0), 1.0), c2(1.0, 0.0));
        assert_eq!(lc_forward(c2(0.0, 1.0), 1.0), c2(-1.0, 0.0));
        assert_eq!(lc_forward(c2(1.0, 1.0), 1.0), c2(0.0, 2.0));
    }

    #[test]
    fn lc_inverse_examples() {
        assert_eq!(lc_inverse(c2(1.0, 0.0), 1.0), c2(1.0, 0.0));
        let u = lc_inverse(c2(-1.0, 0.0), 1.0);
        assert_relative_eq!(u.x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(u.y, 1.0, epsilon = 1e-15);
        let u = lc_inverse(c2(0.0, 2.0), 1.0);
        assert_relative_eq!(u.x, 1.0, epsilon = 1e-14);
        assert_relative_eq!(u.y, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn gen_lc_reduces_to_lc() {
        let u = c2(0.7, -1.3);
        assert_eq!(gen_lc_forward(u, 1), lc_forward(u, 1.0));
        assert_eq!(gen_lc_forward(u, 0), u);
    }

    #[test]
    fn gen_lc_norm_scaling() {
        let u = c2(1.17, -0.39);
        let z = gen_lc_forward(u, 3);
        assert_relative_eq!(z.norm(), u.norm().powi(4), max_relative = 1e-13);
    }

    #[test]
    fn lc_velocity_map_example() {
        // U = (1,0), Ż = (0, 2c): dZ/dτ = (0,2), U′ = (0,1).
        let u = c2(1.0, 0.0);
        let zdot = c2(0.0, 2.0 * P.c);
        let up = lc_velocity_map(u, zdot, &P).unwrap();
        assert_relative_eq!(up.x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(up.y, 1.0, epsilon = 1e-15);

        assert_eq!(lc_velocity_map(u, c2(0.0, 0.0), &P).unwrap(), c2(0.0, 0.0));
        assert!(lc_velocity_map(c2(0.0, 0.0), zdot, &P).is_err());
    }

    #[test]
    fn lc_velocity_roundtrip() {
        let u = c2(0.6, -1.1);
        let zdot = c2(0.4, 0.9);
        let up = lc_velocity_map(u, zdot, &P).unwrap();
        let back = lc_physical_velocity(u, up, &P).unwrap();
        assert_relative_eq!(back.x, zdot.x, max_relative = 1e-14);
        assert_relative_eq!(back.y, zdot.y, max_relative = 1e-14);
    }

    #[test]
    fn ks_forward_examples() {
        assert_eq!(ks_forward(Coord4::new(1.0, 0.0, 0.0, 0.0)), Coord3::new(1.0, 0.0, 0.0));
        assert_eq!(ks_forward(Coord4::new(0.0, 1.0, 0.0, 0.0)), Coord3::new(-1.0, 0.0, 0.0));
        let x = ks_forward(Coord4::new(1.0, 1.0, 1.0, 1.0));
        assert_eq!(x, Coord3::new(0.0, 0.0, 4.0));
        assert_relative_eq!(x.norm(), 4.0);
    }

    #[test]
    fn ks_inverse_examples() {
        assert_eq!(ks_inverse(Coord3::new(1.0, 0.0, 0.0)), Coord4::new(1.0, 0.0, 0.0, 0.0));
        let r = 2.89;
        let u = ks_inverse(Coord3::new(r, 0.0, 0.0));
        assert_relative_eq!(u.get(0), r.sqrt(), max_relative = 1e-15);
        assert_eq!(ks_inverse(Coord3::new(0.0, 0.0, 0.0)), Coord4::zero());
    }

    #[test]
    fn ks_velocity_map_examples() {
        let e = Coord4::new(1.0, 0.0, 0.0, 0.0);
        assert_eq!(
            ks_velocity_map(e, Coord3::new(0.0, 0.0, 0.0)).unwrap(),
            Coord4::zero()
        );
        assert_eq!(
            ks_velocity_map(e, Coord3::new(1.0, 0.0, 0.0)).unwrap(),
            Coord4::new(2.0, 0.0, 0.0, 0.0)
        );
        assert!(ks_velocity_map(Coord4::zero(), Coord3::new(1.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn ks_momentum_map_examples() {
        let e = Coord4::new(1.0, 0.0, 0.0, 0.0);
        assert_eq!(ks_momentum_map(e, Coord4::zero()).unwrap(), Coord3::new(0.0, 0.0, 0.0));
        assert_eq!(
            ks_momentum_map(e, Coord4::new(2.0, 0.0, 0.0, 0.0)).unwrap(),
            Coord3::new(1.0, 0.0, 0.0)
        );
    }

    #[test]
    fn bilinear_examples() {
        let u = Coord4::new(0.3, -0.8, 1.1, 0.2);
        assert!(bilinear_constraint(u, u.scale(2.7)).abs() < 1e-15);
        assert_eq!(
            bilinear_constraint(Coord4::new(1.0, 0.0, 0.0, 0.0), Coord4::new(0.0, 0.0, 0.0, 1.0)),
            1.0
        );
    }

    #[test]
    fn bohlin_examples() {
        assert_eq!(bohlin_forward(c2(1.0, 0.0)), c2(1.0, 0.0));
        assert_eq!(bohlin_forward(c2(0.0, 1.0)), c2(-1.0, 0.0));
        let zdot = bohlin_velocity_map(c2(1.0, 0.0), c2(0.0, 2.0)).unwrap();
        assert_relative_eq!(zdot.x, 0.0);
        assert_relative_eq!(zdot.y, 1.0);
        assert!(bohlin_velocity_map(c2(0.0, 0.0), c2(1.0, 0.0)).is_err());
    }

    #[test]
    fn time_rate_values() {
        assert_eq!(time_rate(TimeFamily::KustaanheimoStiefel, 1.0, &P).unwrap(), 4.0);
        assert_eq!(time_rate(TimeFamily::Bohlin, 1.0, &P).unwrap(), 4.0);
        // Power law with N = 1 matches LC with c = 1/4 for all r.
        for r in [0.0, 0.01, 0.5, 1.0, 7.3, 1e3] {
            let a = time_rate(TimeFamily::PowerLaw, r, &P).unwrap();
            let b = time_rate(TimeFamily::LeviCivita, r, &P).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
        for fam in [
            TimeFamily::LeviCivita,
            TimeFamily::PowerLaw,
            TimeFamily::KustaanheimoStiefel,
            TimeFamily::Bohlin,
        ] {
            assert_eq!(time_rate(fam, 0.0, &P).unwrap(), 0.0, "{fam:?}");
            assert!(time_rate(fam, -1.0, &P).is_err());
        }
    }

    #[test]
    fn ks_fiber_invariance_and_nearest_point() {
        let u = Coord4::new(0.9, -0.2, 0.5, 0.35);
        let x = ks_forward(u);
        for theta in [0.3, 1.2, 2.8, -0.7] {
            let v = ks_fiber_shift(u, theta);
            let xv = ks_forward(v);
            assert_relative_eq!(xv.x, x.x, max_relative = 1e-13, epsilon = 1e-14);
            assert_relative_eq!(xv.y, x.y, max_relative = 1e-13, epsilon = 1e-14);
            assert_relative_eq!(xv.z, x.z, max_relative = 1e-13, epsilon = 1e-14);
        }
        // The nearest-fiber-point recovers a shifted copy of u itself.
        let shifted = ks_fiber_shift(u, 0.4);
        let near = ks_inverse_near(x, shifted);
        for i in 0..4 {
            assert_relative_eq!(near.get(i), shifted.get(i), max_relative = 1e-12, epsilon = 1e-13);
        }
    }

    #[test]
    fn lc_inverse_near_follows_branch() {
        let u = c2(-0.8, 0.3);
        let z = lc_forward(u, 1.0);
        let got = lc_inverse_near(z, 1.0, u);
        assert_relative_eq!(got.x, u.x, max_relative = 1e-13);
        assert_relative_eq!(got.y, u.y, max_relative = 1e-13);
    }

    proptest! {
        #[test]
        fn lc_roundtrip(x in -50.0f64..50.0, y in -50.0f64..50.0, gamma in 0.1f64..10.0) {
            let z = c2(x, y);
            let u = lc_inverse(z, gamma);
            prop_assert!(u.x >= 0.0 || u.x.abs() < 1e-300);
            let back = lc_forward(u, gamma);
            prop_assert!(back.sub(&z).norm() <= 1e-13 * (z.norm() + 1e-12));
            // |Z| = γ|U|².
            prop_assert!((lc_forward(u, gamma).norm() - gamma * u.norm_sq()).abs()
                <= 1e-13 * (z.norm() + 1e-12));
        }

        #[test]
        fn ks_roundtrip(x in -50.0f64..50.0, y in -50.0f64..50.0, z in -50.0f64..50.0) {
            let p = Coord3::new(x, y, z);
            let u = ks_inverse(p);
            let back = ks_forward(u);
            let tol = 1e-13 * (p.norm() + 1e-12);
            prop_assert!((back.x - p.x).abs() <= tol);
            prop_assert!((back.y - p.y).abs() <= tol);
            prop_assert!((back.z - p.z).abs() <= tol);
            // |X| = |U|².
            prop_assert!((p.norm() - u.norm_sq()).abs() <= tol);
        }

        #[test]
        fn ks_velocity_map_satisfies_bilinear(
            u in proptest::array::uniform4(-10.0f64..10.0),
            v in proptest::array::uniform3(-10.0f64..10.0),
        ) {
            let u = Coord4::new(u[0], u[1], u[2], u[3]);
            prop_assume!(u.norm_sq() > 1e-6);
            let xdot = Coord3::new(v[0], v[1], v[2]);
            let up = ks_velocity_map(u, xdot).unwrap();
            let scale = u.norm() * up.norm() + 1e-12;
            prop_assert!(bilinear_constraint(u, up).abs() <= 1e-13 * scale);
        }

        #[test]
        fn ks_velocity_roundtrip(
            u in proptest::array::uniform4(-10.0f64..10.0),
            v in proptest::array::uniform3(-10.0f64..10.0),
        ) {
            let u = Coord4::new(u[0], u[1], u[2], u[3]);
            prop_assume!(u.norm_sq() > 1e-6);
            let xdot = Coord3::new(v[0], v[1], v[2]);
            let up = ks_velocity_map(u, xdot).unwrap();
            let back = ks_physical_velocity(u, up).unwrap();
            let tol = 1e-12 * (xdot.norm() + 1.0);
            prop_assert!((back.get(0) - xdot.x).abs() <= tol);
            prop_assert!((back.get(1) - xdot.y).abs() <= tol);
            prop_assert!((back.get(2) - xdot.z).abs() <= tol);
            prop_assert!(back.get(3).abs() <= tol);
        }

        #[test]
        fn point_transform_roundtrip(
            qx in -10.0f64..10.0, qy in -10.0f64..10.0,
            vx in -10.0f64..10.0, vy in -10.0f64..10.0,
            t in -5.0f64..5.0, lambda in 0.0f64..1.0,
        ) {
            let mut p = P;
            p.lambda = lambda;
            let s = PhaseState::new(c2(qx, qy), c2(vx, vy), t);
            let back = autonomous_to_damp(&damp_to_autonomous(&s, &p), &p);
            let scale = s.q.norm() + s.v.norm() + 1.0;
            prop_assert!(back.q.sub(&s.q).norm() <= 1e-14 * scale);
            prop_assert!(back.v.sub(&s.v).norm() <= 1e-13 * scale);
        }

        #[test]
        fn momentum_map_kills_constrained_component(
            u in proptest::array::uniform4(-5.0f64..5.0),
            p in proptest::array::uniform4(-5.0f64..5.0),
        ) {
            let u = Coord4::new(u[0], u[1], u[2], u[3]);
            prop_assume!(u.norm_sq() > 1e-4);
            // Project the fiber component out of p̃ so the constraint holds.
            let [u0, u1, u2, u3] = u.0;
            let fiber = Coord4::new(u3, -u2, u1, -u0);
            let p_raw = Coord4::new(p[0], p[1], p[2], p[3]);
            let p_con = p_raw.sub(&fiber.scale(p_raw.dot(&fiber) / fiber.norm_sq()));
            let full = ks_matrix(u).mul_vec(&p_con).scale(0.5 / u.norm_sq());
            prop_assert!(full.get(3).abs() <= 1e-13 * (p_con.norm() + 1.0));
            // And the public map reproduces the spatial part.
            let p3 = ks_momentum_map(u, p_con).unwrap();
            prop_assert!((p3.x - full.get(0)).abs() == 0.0);
        }
    }
}
