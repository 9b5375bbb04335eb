//! Right-hand sides (vector fields) for every system: the singular damped
//! originals, their autonomous equivalents, the regularized oscillators, and
//! the Bohlin chain members.
//!
//! States are flat arrays laid out as `[q | v]` for position-space systems
//! and `[u | u' | t]` for regularized systems, where the trailing slot is the
//! co-integrated physical time advanced with the appropriate `dt/dτ` rate.
//! The damped central-force systems depend explicitly on the time argument
//! through the exponential decay of their force term; every other system
//! (including the damped oscillator, whose damping is velocity-only) is
//! autonomous in its own time variable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transforms::{SystemParams, TimeFamily};

/// Radius below which the singular force laws are considered to have
/// collided; inverse-cube force evaluations below this exceed the useful
/// dynamic range of doubles.
pub const COLLISION_RADIUS_RHS: f64 = 1e-10;

/// Catalog of the systems the integrator can drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemId {
    /// Damped planar Kepler motion: `mẍ + λmẋ + (k e^{-3λt/2}/r̃³)x = 0`.
    DampedKepler2D,
    /// Its autonomous equivalent: `mẌ - (mλ²/4)X + kX/r³ = 0`.
    AutonomousKepler2D,
    /// Damped planar motion in the potential `r^(-2N/(N+1))`.
    DampedPowerLaw2D,
    /// Autonomous equivalent of the damped power-law system.
    AutonomousPowerLaw2D,
    /// Levi-Civita regularized oscillator:
    /// `U″ + (1/2c²)(ℰ - (3/8)λ²|U|⁴)U = 0` plus time co-integration.
    RegularizedLC,
    /// Generalized (power-law) LC oscillator:
    /// `U″ = (λ²/4)(2N+1)(N+1)²R^{4N}U - 2N(N+1)²ℰR^{2N-2}U`.
    RegularizedGenLC,
    /// Damped spatial Kepler motion.
    DampedKepler3D,
    /// Its autonomous equivalent.
    AutonomousKepler3D,
    /// K-S regularized oscillator: `U″ + (8ℰ - 3λ²|U|⁴)U = 0`.
    RegularizedKS,
    /// Damped planar harmonic oscillator: `q̈ + λq̇ + Ω²q = 0`.
    DampedHO2D,
    /// Shifted oscillator `ẍ + Ω̃²x = 0`, `Ω̃² = Ω² - λ²/4`.
    ShiftedHO2D,
    /// Kepler image of the shifted oscillator under the Bohlin map:
    /// `Z̈ = -(E/4m) Z/|Z|³`.
    BohlinKepler2D,
}

impl SystemId {
    pub const ALL: [SystemId; 12] = [
        SystemId::DampedKepler2D,
        SystemId::AutonomousKepler2D,
        SystemId::DampedPowerLaw2D,
        SystemId::AutonomousPowerLaw2D,
        SystemId::RegularizedLC,
        SystemId::RegularizedGenLC,
        SystemId::DampedKepler3D,
        SystemId::AutonomousKepler3D,
        SystemId::RegularizedKS,
        SystemId::DampedHO2D,
        SystemId::ShiftedHO2D,
        SystemId::BohlinKepler2D,
    ];

    /// Number of coordinate components (2, 3 or 4).
    pub fn coord_dim(self) -> usize {
        match self {
            SystemId::DampedKepler3D | SystemId::AutonomousKepler3D => 3,
            SystemId::RegularizedKS => 4,
            _ => 2,
        }
    }

    /// Full flat-state dimension, including the co-integrated physical time
    /// for regularized systems.
    pub fn dim(self) -> usize {
        2 * self.coord_dim() + usize::from(self.is_regularized())
    }

    pub fn is_regularized(self) -> bool {
        matches!(
            self,
            SystemId::RegularizedLC | SystemId::RegularizedGenLC | SystemId::RegularizedKS
        )
    }

    /// Systems whose right-hand side depends explicitly on time.
    pub fn is_damped(self) -> bool {
        matches!(
            self,
            SystemId::DampedKepler2D
                | SystemId::DampedPowerLaw2D
                | SystemId::DampedKepler3D
                | SystemId::DampedHO2D
        )
    }

    /// Whether the force law diverges at `r = 0` for the given parameters.
    pub fn is_singular(self, p: &SystemParams) -> bool {
        match self {
            SystemId::DampedKepler2D
            | SystemId::AutonomousKepler2D
            | SystemId::DampedKepler3D
            | SystemId::AutonomousKepler3D
            | SystemId::BohlinKepler2D => true,
            SystemId::DampedPowerLaw2D | SystemId::AutonomousPowerLaw2D => p.n_power >= 1,
            _ => false,
        }
    }

    /// Time reparametrization family of a regularized system.
    pub fn time_family(self) -> Option<TimeFamily> {
        match self {
            SystemId::RegularizedLC => Some(TimeFamily::LeviCivita),
            SystemId::RegularizedGenLC => Some(TimeFamily::PowerLaw),
            SystemId::RegularizedKS => Some(TimeFamily::KustaanheimoStiefel),
            _ => None,
        }
    }

    /// Column names for the flat state, used by trajectory writers.
    pub fn state_names(self) -> Vec<&'static str> {
        match self.dim() {
            4 => vec!["q1", "q2", "v1", "v2"],
            6 => vec!["q1", "q2", "q3", "v1", "v2", "v3"],
            5 => vec!["u1", "u2", "du1", "du2", "t_phys"],
            9 => vec!["u0", "u1", "u2", "u3", "du0", "du1", "du2", "du3", "t_phys"],
            _ => unreachable!(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SystemId::DampedKepler2D => "DampedKepler2D",
            SystemId::AutonomousKepler2D => "AutonomousKepler2D",
            SystemId::DampedPowerLaw2D => "DampedPowerLaw2D",
            SystemId::AutonomousPowerLaw2D => "AutonomousPowerLaw2D",
            SystemId::RegularizedLC => "RegularizedLC",
            SystemId::RegularizedGenLC => "RegularizedGenLC",
            SystemId::DampedKepler3D => "DampedKepler3D",
            SystemId::AutonomousKepler3D => "AutonomousKepler3D",
            SystemId::RegularizedKS => "RegularizedKS",
            SystemId::DampedHO2D => "DampedHO2D",
            SystemId::ShiftedHO2D => "ShiftedHO2D",
            SystemId::BohlinKepler2D => "BohlinKepler2D",
        }
    }
}

/// Immutable context for right-hand-side evaluations.
///
/// The conserved energy is injected rather than recomputed from the state:
/// the regularized equations live on a fixed constant-energy surface, and
/// recomputing the label from a drifting state would mask integration error.
#[derive(Debug, Clone, Copy)]
pub struct RhsContext {
    pub params: SystemParams,
    /// Per-mass conserved energy `ℰ = E/m` of the autonomous system; required
    /// by the regularized systems.
    pub specific_energy: Option<f64>,
    /// Conserved shifted-oscillator energy `E` (with mass factors); required
    /// by `BohlinKepler2D`, whose Kepler strength is `E/4`.
    pub kepler_energy: Option<f64>,
}

impl RhsContext {
    pub fn new(params: SystemParams) -> Self {
        Self {
            params,
            specific_energy: None,
            kepler_energy: None,
        }
    }

    pub fn with_energy(params: SystemParams, specific_energy: f64) -> Self {
        Self {
            params,
            specific_energy: Some(specific_energy),
            kepler_energy: None,
        }
    }

    fn energy(&self) -> Result<f64> {
        self.specific_energy
            .ok_or(Error::MissingContext("specific_energy (conserved ℰ)"))
    }

    fn kepler(&self) -> Result<f64> {
        self.kepler_energy
            .ok_or(Error::MissingContext("kepler_energy (shifted-oscillator E)"))
    }
}

fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}

fn radius(q: &[f64]) -> f64 {
    q.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn guard_collision(r: f64) -> Result<()> {
    if r < COLLISION_RADIUS_RHS {
        return Err(Error::Collision { r });
    }
    Ok(())
}

/// Time derivative of the full flat state of `sys` at time `t`.
///
/// For regularized systems the trailing slot of `out` receives `dt/dτ`.
/// Singular systems return [`Error::Collision`] inside the collision radius.
pub fn rhs(sys: SystemId, t: f64, state: &[f64], ctx: &RhsContext, out: &mut [f64]) -> Result<()> {
    let dim = sys.dim();
    check_dim("rhs state", dim, state.len())?;
    check_dim("rhs output", dim, out.len())?;
    let p = &ctx.params;
    let d = sys.coord_dim();
    let (q, v) = (&state[..d], &state[d..2 * d]);
    out[..d].copy_from_slice(v);

    match sys {
        SystemId::DampedKepler2D | SystemId::DampedKepler3D => {
            let r = radius(q);
            guard_collision(r)?;
            let f = p.mu() * (-1.5 * p.lambda * t).exp() / (r * r * r);
            for i in 0..d {
                out[d + i] = -p.lambda * v[i] - f * q[i];
            }
        }
        SystemId::AutonomousKepler2D | SystemId::AutonomousKepler3D => {
            let r = radius(q);
            guard_collision(r)?;
            let f = p.mu() / (r * r * r);
            let l2 = 0.25 * p.lambda * p.lambda;
            for i in 0..d {
                out[d + i] = l2 * q[i] - f * q[i];
            }
        }
        SystemId::DampedPowerLaw2D => {
            let n = p.n_power as f64;
            if p.n_power == 0 {
                for i in 0..d {
                    out[d + i] = -p.lambda * v[i];
                }
            } else {
                let r = radius(q);
                guard_collision(r)?;
                let decay = (-(2.0 * n + 1.0) / (n + 1.0) * p.lambda * t).exp();
                let f = 2.0 * n / (n + 1.0) * p.mu() * decay / r.powf((4.0 * n + 2.0) / (n + 1.0));
                for i in 0..d {
                    out[d + i] = -p.lambda * v[i] - f * q[i];
                }
            }
        }
        SystemId::AutonomousPowerLaw2D => {
            let n = p.n_power as f64;
            let l2 = 0.25 * p.lambda * p.lambda;
            if p.n_power == 0 {
                for i in 0..d {
                    out[d + i] = l2 * q[i];
                }
            } else {
                let r = radius(q);
                guard_collision(r)?;
                let f = 2.0 * n / (n + 1.0) * p.mu() / r.powf((4.0 * n + 2.0) / (n + 1.0));
                for i in 0..d {
                    out[d + i] = l2 * q[i] - f * q[i];
                }
            }
        }
        SystemId::RegularizedLC => {
            if p.gamma != 1.0 {
                return Err(Error::InvalidParams(
                    "the regularized LC field is derived at gamma = 1".into(),
                ));
            }
            let e = ctx.energy()?;
            let r = q[0] * q[0] + q[1] * q[1]; // r = |U|²
            let coeff = (e - 0.375 * p.lambda * p.lambda * r * r) / (2.0 * p.c * p.c);
            for i in 0..d {
                out[d + i] = -coeff * q[i];
            }
            out[2 * d] = r / p.c;
        }
        SystemId::RegularizedGenLC => {
            let e = ctx.energy()?;
            let n = p.n_power;
            let nf = n as f64;
            let np1sq = (nf + 1.0) * (nf + 1.0);
            let r2 = q[0] * q[0] + q[1] * q[1]; // R²
            let sextic = 0.25 * p.lambda * p.lambda * (2.0 * nf + 1.0) * np1sq * r2.powi(2 * n as i32);
            let linear = if n == 0 {
                0.0
            } else {
                2.0 * nf * np1sq * e * r2.powi(n as i32 - 1)
            };
            for i in 0..d {
                out[d + i] = (sextic - linear) * q[i];
            }
            out[2 * d] = np1sq * r2.powi(n as i32);
        }
        SystemId::RegularizedKS => {
            let e = ctx.energy()?;
            let r = q.iter().map(|x| x * x).sum::<f64>(); // r = |U|²
            let coeff = 8.0 * e - 3.0 * p.lambda * p.lambda * r * r;
            for i in 0..d {
                out[d + i] = -coeff * q[i];
            }
            out[2 * d] = 4.0 * r;
        }
        SystemId::DampedHO2D => {
            let w2 = p.omega * p.omega;
            for i in 0..d {
                out[d + i] = -p.lambda * v[i] - w2 * q[i];
            }
        }
        SystemId::ShiftedHO2D => {
            let w2 = p.shifted_omega_sq();
            for i in 0..d {
                out[d + i] = -w2 * q[i];
            }
        }
        SystemId::BohlinKepler2D => {
            let r = radius(q);
            guard_collision(r)?;
            let mu_b = ctx.kepler()? / (4.0 * p.m);
            let f = mu_b / (r * r * r);
            for i in 0..d {
                out[d + i] = -f * q[i];
            }
        }
    }
    Ok(())
}

/// Allocating convenience wrapper around [`rhs`].
pub fn rhs_vec(sys: SystemId, t: f64, state: &[f64], ctx: &RhsContext) -> Result<Vec<f64>> {
    let mut out = vec![0.0; sys.dim()];
    rhs(sys, t, state, ctx, &mut out)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Lagrangians and the Euler-Lagrange residual oracle
// ---------------------------------------------------------------------------

/// The Lagrangian of `sys` evaluated at `(t, q, v)`.
///
/// For regularized systems `q` and `v` are the regularized coordinates and
/// their fictitious-time derivatives; the damped systems carry their
/// explicitly time-dependent (BCK-type) Lagrangians.
pub fn lagrangian(sys: SystemId, t: f64, q: &[f64], v: &[f64], ctx: &RhsContext) -> Result<f64> {
    let d = sys.coord_dim();
    check_dim("lagrangian position", d, q.len())?;
    check_dim("lagrangian velocity", d, v.len())?;
    let p = &ctx.params;
    let v2: f64 = v.iter().map(|x| x * x).sum();
    let q2: f64 = q.iter().map(|x| x * x).sum();
    let qv: f64 = q.iter().zip(v).map(|(a, b)| a * b).sum();
    let kinetic = 0.5 * p.m * v2;

    Ok(match sys {
        SystemId::DampedKepler2D | SystemId::DampedKepler3D => {
            let r = q2.sqrt();
            (p.lambda * t).exp() * (kinetic + p.k * (-1.5 * p.lambda * t).exp() / r)
        }
        SystemId::AutonomousKepler2D | SystemId::AutonomousKepler3D => {
            let r = q2.sqrt();
            kinetic + 0.125 * p.m * p.lambda * p.lambda * q2 - 0.5 * p.m * p.lambda * qv + p.k / r
        }
        SystemId::DampedPowerLaw2D => {
            let n = p.n_power as f64;
            let r = q2.sqrt();
            let pot = p.k * (-(2.0 * n + 1.0) / (n + 1.0) * p.lambda * t).exp()
                / r.powf(2.0 * n / (n + 1.0));
            (p.lambda * t).exp() * (kinetic + pot)
        }
        SystemId::AutonomousPowerLaw2D => {
            let n = p.n_power as f64;
            let r = q2.sqrt();
            kinetic + 0.125 * p.m * p.lambda * p.lambda * q2 - 0.5 * p.m * p.lambda * qv
                + p.k / r.powf(2.0 * n / (n + 1.0))
        }
        SystemId::RegularizedLC => {
            let e = ctx.energy()?;
            let c2 = p.c * p.c;
            kinetic - 0.25 * p.m * e / c2 * q2
                + p.m * p.lambda * p.lambda / (32.0 * c2) * q2.powi(3)
        }
        SystemId::RegularizedGenLC => {
            let e = ctx.energy()?;
            let n = p.n_power;
            let np1sq = ((n + 1) * (n + 1)) as f64;
            kinetic - e * p.m * np1sq * q2.powi(n as i32)
                + 0.125 * p.lambda * p.lambda * p.m * np1sq * q2.powi(2 * n as i32 + 1)
        }
        SystemId::RegularizedKS => {
            let e = ctx.energy()?;
            kinetic - 4.0 * p.m * e * q2 + 0.5 * p.m * p.lambda * p.lambda * q2.powi(3)
        }
        SystemId::DampedHO2D => {
            0.5 * p.m * (p.lambda * t).exp() * (v2 - p.omega * p.omega * q2)
        }
        SystemId::ShiftedHO2D => {
            kinetic - 0.5 * p.m * p.shifted_omega_sq() * q2 - 0.5 * p.m * p.lambda * qv
        }
        SystemId::BohlinKepler2D => {
            let r = q2.sqrt();
            kinetic + ctx.kepler()? / 4.0 / r
        }
    })
}

/// Fourth-order central difference of `f` at `x` with step `h`.
fn central_diff(mut f: impl FnMut(f64) -> Result<f64>, x: f64, h: f64) -> Result<f64> {
    Ok((-f(x + 2.0 * h)? + 8.0 * f(x + h)? - 8.0 * f(x - h)? + f(x - 2.0 * h)?) / (12.0 * h))
}

/// Euler-Lagrange residual `d/dt(∂L/∂v) - ∂L/∂q` evaluated at a trajectory
/// sample `(t, q, v, a)`, reduced to its max-norm over components.
///
/// All derivatives of the Lagrangian are taken numerically, so this is an
/// independent cross-check that each implemented right-hand side is the
/// Euler-Lagrange flow of its Lagrangian: along true trajectories (with `a`
/// from the field or from finite-differenced velocities) the residual is
/// zero up to differencing error, roughly `1e-9` for unit-scale states.
pub fn lagrangian_residual(
    sys: SystemId,
    t: f64,
    q: &[f64],
    v: &[f64],
    a: &[f64],
    ctx: &RhsContext,
) -> Result<f64> {
    let d = sys.coord_dim();
    check_dim("residual acceleration", d, a.len())?;
    // ∂L/∂v_i along the second-order path through the sample.
    let momentum_on_path = |i: usize, h: f64| -> Result<f64> {
        let th = t + h;
        let qh: Vec<f64> = (0..d).map(|j| q[j] + h * v[j] + 0.5 * h * h * a[j]).collect();
        let vh: Vec<f64> = (0..d).map(|j| v[j] + h * a[j]).collect();
        central_diff(
            |vi| {
                let mut vv = vh.clone();
                vv[i] = vi;
                lagrangian(sys, th, &qh, &vv, ctx)
            },
            vh[i],
            1e-3 * (1.0 + vh[i].abs()),
        )
    };

    let mut worst = 0.0_f64;
    for i in 0..d {
        let dt_momentum = central_diff(|h| momentum_on_path(i, h), 0.0, 5e-3)?;
        let dl_dq = central_diff(
            |qi| {
                let mut qq = q.to_vec();
                qq[i] = qi;
                lagrangian(sys, t, &qq, v, ctx)
            },
            q[i],
            1e-3 * (1.0 + q[i].abs()),
        )?;
        worst = worst.max((dt_momentum - dl_dq).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(lambda: f64) -> SystemParams {
        SystemParams {
            lambda,
            ..SystemParams::default()
        }
    }

    #[test]
    fn circular_orbit_balance() {
        // X = (1,0), Ẋ = (0,1), μ = 1, λ = 0: acceleration (-1, 0).
        let ctx = RhsContext::new(params(0.0));
        let out = rhs_vec(SystemId::AutonomousKepler2D, 0.0, &[1.0, 0.0, 0.0, 1.0], &ctx).unwrap();
        assert_eq!(out, vec![0.0, 1.0, -1.0, 0.0]);
    }

    #[test]
    fn regularized_ks_is_sho_at_lambda_zero() {
        let ctx = RhsContext::with_energy(params(0.0), 1.0);
        let state = [0.3, -0.7, 0.2, 0.9, 0.0, 0.0, 0.0, 0.0, 0.0];
        let out = rhs_vec(SystemId::RegularizedKS, 0.0, &state, &ctx).unwrap();
        for i in 0..4 {
            assert_relative_eq!(out[4 + i], -8.0 * state[i], max_relative = 1e-15);
        }
    }

    #[test]
    fn regularized_lc_is_finite_at_collision() {
        let ctx = RhsContext::with_energy(params(0.3), 0.5);
        let out = rhs_vec(SystemId::RegularizedLC, 0.0, &[0.0, 0.0, 1.0, -2.0, 3.0], &ctx).unwrap();
        assert_eq!(&out[2..4], &[0.0, 0.0]);
        assert_eq!(out[4], 0.0); // time freezes at r = 0
    }

    #[test]
    fn gen_lc_n1_matches_lc_quarter_c() {
        // For N = 1 the generalized field coincides with the LC field at c = 1/4.
        let mut p = params(0.37);
        p.n_power = 1;
        p.c = 0.25;
        let ctx = RhsContext::with_energy(p, 0.8);
        let state = [0.4, -1.2, 0.3, 0.7, 0.0];
        let a = rhs_vec(SystemId::RegularizedGenLC, 0.0, &state, &ctx).unwrap();
        let b = rhs_vec(SystemId::RegularizedLC, 0.0, &state, &ctx).unwrap();
        for i in 0..5 {
            assert_relative_eq!(a[i], b[i], max_relative = 1e-12, epsilon = 1e-13);
        }
    }

    #[test]
    fn only_damped_central_forces_depend_on_time() {
        // The explicit exponential decay of the force appears in the damped
        // central-force systems; everything else (including the damped
        // oscillator, whose damping is velocity-only) is autonomous.
        let ctx = RhsContext {
            params: params(0.2),
            specific_energy: Some(0.7),
            kepler_energy: Some(0.5),
        };
        let time_dependent = [
            SystemId::DampedKepler2D,
            SystemId::DampedPowerLaw2D,
            SystemId::DampedKepler3D,
        ];
        for sys in SystemId::ALL {
            let state: Vec<f64> = (0..sys.dim()).map(|i| 0.3 + 0.1 * i as f64).collect();
            let a = rhs_vec(sys, 0.0, &state, &ctx).unwrap();
            let b = rhs_vec(sys, 1.7, &state, &ctx).unwrap();
            let same = a
                .iter()
                .zip(&b)
                .all(|(x, y)| (x - y).abs() <= 1e-15 * (x.abs() + 1.0));
            assert_eq!(!same, time_dependent.contains(&sys), "{sys:?}");
        }
    }

    #[test]
    fn collision_and_dimension_errors() {
        let ctx = RhsContext::new(params(0.0));
        let r = rhs_vec(SystemId::AutonomousKepler2D, 0.0, &[1e-11, 0.0, 0.0, 0.0], &ctx);
        assert!(matches!(r, Err(Error::Collision { .. })));
        let r = rhs_vec(SystemId::AutonomousKepler2D, 0.0, &[1.0, 0.0, 0.0], &ctx);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn damped_kepler_lambda_zero_is_classical_kepler() {
        let ctx = RhsContext::new(params(0.0));
        let state = [0.8, -0.6, 0.3, 0.4];
        let out = rhs_vec(SystemId::DampedKepler2D, 2.5, &state, &ctx).unwrap();
        let r = (state[0] * state[0] + state[1] * state[1]).sqrt();
        let f = 1.0 / (r * r * r);
        assert_relative_eq!(out[2], -f * state[0], max_relative = 1e-15);
        assert_relative_eq!(out[3], -f * state[1], max_relative = 1e-15);
    }

    #[test]
    fn rotational_equivariance_planar() {
        let ctx = RhsContext::new(params(0.15));
        let theta = 0.83_f64;
        let (s, c) = theta.sin_cos();
        let rot = |x: f64, y: f64| (c * x - s * y, s * x + c * y);
        for sys in [
            SystemId::AutonomousKepler2D,
            SystemId::AutonomousPowerLaw2D,
            SystemId::DampedHO2D,
            SystemId::ShiftedHO2D,
        ] {
            let state = [0.9, -0.4, 0.2, 0.6];
            let (qx, qy) = rot(state[0], state[1]);
            let (vx, vy) = rot(state[2], state[3]);
            let base = rhs_vec(sys, 0.0, &state, &ctx).unwrap();
            let rotated = rhs_vec(sys, 0.0, &[qx, qy, vx, vy], &ctx).unwrap();
            let (ax, ay) = rot(base[2], base[3]);
            assert_relative_eq!(rotated[2], ax, max_relative = 1e-13, epsilon = 1e-14);
            assert_relative_eq!(rotated[3], ay, max_relative = 1e-13, epsilon = 1e-14);
        }
    }

    #[test]
    fn gen_lc_sign_structure() {
        // λ²-term pushes outward (inverted potential), ℰ-term pulls inward.
        let mut p = params(0.5);
        p.n_power = 2;
        let u = [0.7, -0.3];
        let dot = |acc: &[f64]| acc[2] * u[0] + acc[3] * u[1];

        let ctx = RhsContext::with_energy(p, 0.0);
        let state = [u[0], u[1], 0.0, 0.0, 0.0];
        let field = rhs_vec(SystemId::RegularizedGenLC, 0.0, &state, &ctx).unwrap();
        assert!(dot(&field) > 0.0, "pure λ² term must be destabilizing");

        p.lambda = 0.0;
        let ctx = RhsContext::with_energy(p, 0.9);
        let field = rhs_vec(SystemId::RegularizedGenLC, 0.0, &state, &ctx).unwrap();
        assert!(dot(&field) < 0.0, "pure ℰ term must be restoring");
    }

    #[test]
    fn residual_zero_state_and_exact_sho_sample() {
        let ctx = RhsContext::with_energy(params(0.0), 0.125);
        // Zero state: residual identically zero.
        let r = lagrangian_residual(
            SystemId::RegularizedKS,
            0.0,
            &[0.0; 4],
            &[0.0; 4],
            &[0.0; 4],
            &ctx,
        )
        .unwrap();
        assert!(r.abs() < 1e-12);

        // ℰ = 1/8 makes the λ=0 K-S field a unit-frequency oscillator;
        // sample the closed-form cosine solution.
        let tau = 0.83_f64;
        let amp = [0.6, -0.2, 0.3, 0.1];
        let q: Vec<f64> = amp.iter().map(|a| a * tau.cos()).collect();
        let v: Vec<f64> = amp.iter().map(|a| -a * tau.sin()).collect();
        let a: Vec<f64> = amp.iter().map(|a| -a * tau.cos()).collect();
        let r = lagrangian_residual(SystemId::RegularizedKS, tau, &q, &v, &a, &ctx).unwrap();
        assert!(r < 1e-8, "residual {r}");
    }

    #[test]
    fn residual_matches_rhs_for_all_systems() {
        // Feed the field's own acceleration: the residual measures the
        // agreement between each RHS and its Lagrangian.
        let ctx = RhsContext {
            params: SystemParams {
                lambda: 0.12,
                n_power: 2,
                ..SystemParams::default()
            },
            specific_energy: Some(0.45),
            kepler_energy: Some(0.3),
        };
        for sys in SystemId::ALL {
            let d = sys.coord_dim();
            let state: Vec<f64> = (0..sys.dim())
                .map(|i| 0.8 - 0.13 * i as f64)
                .collect();
            let t = 0.9;
            let deriv = rhs_vec(sys, t, &state, &ctx).unwrap();
            let res =
                lagrangian_residual(sys, t, &state[..d], &state[d..2 * d], &deriv[d..2 * d], &ctx)
                    .unwrap();
            assert!(res < 5e-8, "{sys:?}: residual {res}");
        }
    }
}
