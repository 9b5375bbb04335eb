//! Conserved quantities: the per-mass energy of the autonomous systems,
//! angular momentum, the regularized oscillator Hamiltonians, the
//! homogeneous-Hamiltonian identity, and the Bohlin-chain energy
//! identifications.
//!
//! All energies are normalized per unit mass (`ℰ = E/m`) so that every
//! family shares one comparison contract; the planar Kepler expressions
//! carry their mass factors internally before normalizing. The sign
//! convention makes bound orbits carry `ℰ > 0`: `-ℰ` equals kinetic minus
//! the `λ²` and potential wells, which is negative for bound motion. For
//! scattering states `ℰ < 0` and the regularized "oscillator" is hyperbolic;
//! the maps remain valid in either regime.

use serde::Serialize;

use crate::algebra::{Coord2, Coord4, CoordVec};
use crate::dynamics::{RhsContext, SystemId};
use crate::error::{Error, Result};
use crate::transforms::{damp_to_autonomous, PhaseState, SystemParams};

/// Central-force family selector for [`specific_energy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyFamily {
    Kepler2D,
    PowerLaw2D,
    Kepler3D,
}

/// Regularized-oscillator family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OscFamily {
    LeviCivita,
    GenLeviCivita,
    KustaanheimoStiefel,
}

/// Per-mass conserved energy `ℰ` of an autonomous system, from position and
/// velocity:
/// `ℰ = μ/r^s + (λ²/8)|X|² - |Ẋ|²/2`, where `s = 1` for Kepler and
/// `s = 2N/(N+1)` for the power law.
pub fn specific_energy(family: EnergyFamily, q: &[f64], v: &[f64], p: &SystemParams) -> Result<f64> {
    let expected = match family {
        EnergyFamily::Kepler3D => 3,
        _ => 2,
    };
    if q.len() != expected || v.len() != expected {
        return Err(Error::DimensionMismatch {
            context: "specific_energy",
            expected,
            got: q.len(),
        });
    }
    let q2: f64 = q.iter().map(|x| x * x).sum();
    let v2: f64 = v.iter().map(|x| x * x).sum();
    let r = q2.sqrt();
    let potential = match family {
        EnergyFamily::Kepler2D | EnergyFamily::Kepler3D => {
            if r == 0.0 {
                return Err(Error::Singular("specific_energy at r = 0"));
            }
            p.mu() / r
        }
        EnergyFamily::PowerLaw2D => {
            let n = p.n_power as f64;
            if p.n_power == 0 {
                p.mu()
            } else {
                if r == 0.0 {
                    return Err(Error::Singular("specific_energy at r = 0"));
                }
                p.mu() / r.powf(2.0 * n / (n + 1.0))
            }
        }
    };
    Ok(potential + 0.125 * p.lambda * p.lambda * q2 - 0.5 * v2)
}

/// Planar angular momentum `L = X1 P2 - X2 P1` with `P = m Ẋ - (λ/2) m X`;
/// the damping contribution cancels, leaving `m (X1 Ẋ2 - X2 Ẋ1)`.
pub fn angular_momentum_planar(q: &[f64], v: &[f64], m: f64) -> f64 {
    m * (q[0] * v[1] - q[1] * v[0])
}

/// Spatial angular momentum `X × P = m X × Ẋ`.
pub fn angular_momentum_spatial(q: &[f64], v: &[f64], m: f64) -> [f64; 3] {
    [
        m * (q[1] * v[2] - q[2] * v[1]),
        m * (q[2] * v[0] - q[0] * v[2]),
        m * (q[0] * v[1] - q[1] * v[0]),
    ]
}

/// Hamiltonian of a regularized oscillator evaluated with momenta `p = mU′`.
///
/// All three families share the structure
/// `H = |p|²/2m + (oscillator strength)·|U|^a - (λ² coupling)·|U|^b`
/// with the strength set by the conserved energy `ℰ` (per mass) and the
/// inverted-sextic coupling by `λ²`:
/// - LC: `H = |p|²/2m + (mℰ/4c²)|U|² - (mλ²/32c²)|U|⁶`
/// - generalized LC: `H = |p|²/2m + ℰm(N+1)²R^{2N} - (λ²/8)m(N+1)²R^{4N+2}`
/// - K-S: `H = |p|²/2m + 4mℰ|U|² - (mλ²/2)|U|⁶`
pub fn oscillator_hamiltonian(
    family: OscFamily,
    u: &[f64],
    u_prime: &[f64],
    e: f64,
    p: &SystemParams,
) -> f64 {
    let q2: f64 = u.iter().map(|x| x * x).sum();
    let p2: f64 = u_prime.iter().map(|x| x * x).sum::<f64>() * p.m * p.m;
    let kinetic = 0.5 * p2 / p.m;
    match family {
        OscFamily::LeviCivita => {
            let c2 = p.c * p.c;
            kinetic + 0.25 * p.m * e / c2 * q2
                - p.m * p.lambda * p.lambda / (32.0 * c2) * q2.powi(3)
        }
        OscFamily::GenLeviCivita => {
            let n = p.n_power;
            let np1sq = ((n + 1) * (n + 1)) as f64;
            kinetic + e * p.m * np1sq * q2.powi(n as i32)
                - 0.125 * p.lambda * p.lambda * p.m * np1sq * q2.powi(2 * n as i32 + 1)
        }
        OscFamily::KustaanheimoStiefel => {
            kinetic + 4.0 * p.m * e * q2 - 0.5 * p.m * p.lambda * p.lambda * q2.powi(3)
        }
    }
}

/// Per-mass conserved energy recovered purely from regularized coordinates:
/// - LC: `ℰ = μ/r + (λ²/8)r² - (2c²/r)|U′|²`, `r = γ|U|²`
/// - generalized LC: `ℰ = μ/R^{2N} + (λ²/8)R^{2N+2} - |U′|²/(2(N+1)²R^{2N})`
/// - K-S: `ℰ = μ/r + (λ²/8)r² - |U′|²/(8r)`, `r = |U|²`
///
/// Must agree with [`specific_energy`] of the mapped-back state.
pub fn specific_energy_regularized(
    family: OscFamily,
    u: &[f64],
    u_prime: &[f64],
    p: &SystemParams,
) -> Result<f64> {
    let q2: f64 = u.iter().map(|x| x * x).sum();
    let du2: f64 = u_prime.iter().map(|x| x * x).sum();
    match family {
        OscFamily::LeviCivita => {
            let r = p.gamma * q2;
            if r == 0.0 {
                return Err(Error::Singular("regularized energy at r = 0"));
            }
            Ok(p.mu() / r + 0.125 * p.lambda * p.lambda * r * r - 2.0 * p.c * p.c / r * du2)
        }
        OscFamily::GenLeviCivita => {
            if q2 == 0.0 {
                return Err(Error::Singular("regularized energy at R = 0"));
            }
            let n = p.n_power;
            let np1sq = ((n + 1) * (n + 1)) as f64;
            let r2n = q2.powi(n as i32); // R^{2N}
            Ok(p.mu() / r2n + 0.125 * p.lambda * p.lambda * r2n * q2 - du2 / (2.0 * np1sq * r2n))
        }
        OscFamily::KustaanheimoStiefel => {
            let r = q2;
            if r == 0.0 {
                return Err(Error::Singular("regularized energy at r = 0"));
            }
            Ok(p.mu() / r + 0.125 * p.lambda * p.lambda * r * r - du2 / (8.0 * r))
        }
    }
}

/// K-S oscillator Hamiltonian written in the homogeneous-formalism variables
/// `(U, p̃)` with the full energy `E` as input:
/// `H̄ = Σp̃²/2m + 4E ΣU² - (λ²m/2)(ΣU²)³`.
///
/// Under `p̃ = mU′`, `E = mℰ` it coincides with the K-S branch of
/// [`oscillator_hamiltonian`], and along a regularized K-S trajectory it is
/// constant with value `4k`.
pub fn ks_homogeneous_hamiltonian(u: &[f64], p_tilde: &[f64], e_full: f64, p: &SystemParams) -> f64 {
    let q2: f64 = u.iter().map(|x| x * x).sum();
    let p2: f64 = p_tilde.iter().map(|x| x * x).sum();
    0.5 * p2 / p.m + 4.0 * e_full * q2 - 0.5 * p.lambda * p.lambda * p.m * q2.powi(3)
}

/// Report of the homogeneous-Hamiltonian equivalence along a K-S trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct HomogeneousReport {
    /// Largest gap between the homogeneous and direct Hamiltonian routes.
    pub max_identity_gap: f64,
    /// Largest relative deviation of the Hamiltonian from its value `4k`.
    pub max_value_deviation: f64,
    /// The predicted constant, `4k`.
    pub predicted: f64,
}

/// Verify along `(U, U′)` samples of a regularized K-S trajectory that
/// (a) the homogeneous Hamiltonian with `p̃ = mU′`, `E = mℰ` equals the
/// direct oscillator Hamiltonian at every sample, and (b) both stay constant
/// with value `4k`.
pub fn homogeneous_equivalence_check(
    samples: &[(Coord4, Coord4)],
    e: f64,
    p: &SystemParams,
) -> HomogeneousReport {
    let predicted = 4.0 * p.k;
    let mut max_identity_gap = 0.0_f64;
    let mut max_value_deviation = 0.0_f64;
    for (u, du) in samples {
        let uu = u.to_vec();
        let duv = du.to_vec();
        let direct = oscillator_hamiltonian(OscFamily::KustaanheimoStiefel, &uu, &duv, e, p);
        let p_tilde: Vec<f64> = duv.iter().map(|x| p.m * x).collect();
        let homog = ks_homogeneous_hamiltonian(&uu, &p_tilde, p.m * e, p);
        max_identity_gap = max_identity_gap.max((direct - homog).abs());
        max_value_deviation = max_value_deviation.max((homog - predicted).abs() / predicted.abs());
    }
    HomogeneousReport {
        max_identity_gap,
        max_value_deviation,
        predicted,
    }
}

/// Energies of the Bohlin chain evaluated at a shifted-oscillator state.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BohlinEnergies {
    /// Conserved shifted-oscillator energy
    /// `E = (m/2)|x′|² + (mΩ̃²/2)|x|²`.
    pub e_shifted: f64,
    /// Kepler energy of the Bohlin image orbit,
    /// `E_K = -(m/8)(Ω² - λ²/4)`, independent of the initial condition.
    pub e_kepler_predicted: f64,
    /// Kepler potential strength identified as `k = E/4`.
    pub k_identified: f64,
}

/// Evaluate the Bohlin-chain energy identifications at one shifted-oscillator
/// state.
pub fn bohlin_energies(state: &PhaseState<Coord2>, p: &SystemParams) -> BohlinEnergies {
    let w2 = p.shifted_omega_sq();
    let e_shifted = 0.5 * p.m * state.v.norm_sq() + 0.5 * p.m * w2 * state.q.norm_sq();
    BohlinEnergies {
        e_shifted,
        e_kepler_predicted: -0.125 * p.m * w2,
        k_identified: 0.25 * e_shifted,
    }
}

/// Kepler energy of a planar orbit sample: `(m/2)|Ż|² - k/|Z|`.
pub fn kepler_energy(z: Coord2, zdot: Coord2, k: f64, m: f64) -> Result<f64> {
    let r = z.norm();
    if r == 0.0 {
        return Err(Error::Singular("Kepler energy at r = 0"));
    }
    Ok(0.5 * m * zdot.norm_sq() - k / r)
}

/// Oscillator frequency from the identification `4E = (1/2)mω₀²`,
/// i.e. `ω₀ = √(8E/m)`; requires `E > 0` (bound orbits in this sign
/// convention).
pub fn oscillator_frequency_from_energy(e_full: f64, m: f64) -> Result<f64> {
    if e_full <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "oscillator identification needs E > 0, got {e_full}"
        )));
    }
    Ok((8.0 * e_full / m).sqrt())
}

// ---------------------------------------------------------------------------
// Per-sample conserved diagnostics
// ---------------------------------------------------------------------------

/// Angular momentum, scalar in the plane or a vector in space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AngularMomentum {
    Planar(f64),
    Spatial([f64; 3]),
}

impl AngularMomentum {
    pub fn max_abs_diff(&self, other: &AngularMomentum) -> f64 {
        match (self, other) {
            (AngularMomentum::Planar(a), AngularMomentum::Planar(b)) => (a - b).abs(),
            (AngularMomentum::Spatial(a), AngularMomentum::Spatial(b)) => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
            _ => f64::NAN,
        }
    }
}

/// Conserved-quantity evaluations at a single state. Fields that do not
/// apply to a system are `None`; fields that apply but are momentarily
/// undefined (energy exactly at a collision point) are `NaN`.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ConservedSet {
    /// Per-mass conserved energy of the (autonomous equivalent) system.
    pub energy: Option<f64>,
    pub ang_mom: Option<AngularMomentum>,
    /// Regularized oscillator Hamiltonian.
    pub h_oscillator: Option<f64>,
    /// K-S bilinear constraint value.
    pub bilinear: Option<f64>,
}

impl ConservedSet {
    /// Names of the quantities applicable to `sys`, in CSV column order.
    pub fn column_names(sys: SystemId) -> Vec<&'static str> {
        match sys {
            SystemId::RegularizedLC | SystemId::RegularizedGenLC => vec!["energy", "h_osc"],
            SystemId::RegularizedKS => vec!["energy", "h_osc", "bilinear"],
            SystemId::DampedKepler3D | SystemId::AutonomousKepler3D => {
                vec!["energy", "ang_mom_x", "ang_mom_y", "ang_mom_z"]
            }
            _ => vec!["energy", "ang_mom"],
        }
    }

    pub fn column_values(&self, sys: SystemId) -> Vec<f64> {
        let nan = f64::NAN;
        match sys {
            SystemId::RegularizedLC | SystemId::RegularizedGenLC => {
                vec![self.energy.unwrap_or(nan), self.h_oscillator.unwrap_or(nan)]
            }
            SystemId::RegularizedKS => vec![
                self.energy.unwrap_or(nan),
                self.h_oscillator.unwrap_or(nan),
                self.bilinear.unwrap_or(nan),
            ],
            SystemId::DampedKepler3D | SystemId::AutonomousKepler3D => {
                let l = match self.ang_mom {
                    Some(AngularMomentum::Spatial(l)) => l,
                    _ => [nan; 3],
                };
                vec![self.energy.unwrap_or(nan), l[0], l[1], l[2]]
            }
            _ => {
                let l = match self.ang_mom {
                    Some(AngularMomentum::Planar(l)) => l,
                    _ => nan,
                };
                vec![self.energy.unwrap_or(nan), l]
            }
        }
    }
}

/// Evaluate every conserved quantity applicable to `sys` at one flat state.
///
/// Damped systems are first carried to the autonomous picture, where the
/// conserved quantities live; for oscillator systems the energy is the
/// per-mass shifted-oscillator energy, and for the Bohlin-Kepler system the
/// per-mass Kepler energy with strength `E/4`.
pub fn evaluate(sys: SystemId, t: f64, state: &[f64], ctx: &RhsContext) -> ConservedSet {
    let p = &ctx.params;
    let d = sys.coord_dim();
    let (q, v) = (&state[..d], &state[d..2 * d]);
    let mut out = ConservedSet::default();

    match sys {
        SystemId::DampedKepler2D | SystemId::AutonomousKepler2D => {
            let (q, v) = autonomous_qv2(sys, t, q, v, p);
            out.energy = Some(
                specific_energy(EnergyFamily::Kepler2D, &q, &v, p).unwrap_or(f64::NAN),
            );
            out.ang_mom = Some(AngularMomentum::Planar(angular_momentum_planar(&q, &v, p.m)));
        }
        SystemId::DampedPowerLaw2D | SystemId::AutonomousPowerLaw2D => {
            let (q, v) = autonomous_qv2(sys, t, q, v, p);
            out.energy = Some(
                specific_energy(EnergyFamily::PowerLaw2D, &q, &v, p).unwrap_or(f64::NAN),
            );
            out.ang_mom = Some(AngularMomentum::Planar(angular_momentum_planar(&q, &v, p.m)));
        }
        SystemId::DampedKepler3D | SystemId::AutonomousKepler3D => {
            let (q, v) = autonomous_qv3(sys, t, q, v, p);
            out.energy = Some(
                specific_energy(EnergyFamily::Kepler3D, &q, &v, p).unwrap_or(f64::NAN),
            );
            out.ang_mom = Some(AngularMomentum::Spatial(angular_momentum_spatial(&q, &v, p.m)));
        }
        SystemId::RegularizedLC | SystemId::RegularizedGenLC | SystemId::RegularizedKS => {
            let family = match sys {
                SystemId::RegularizedLC => OscFamily::LeviCivita,
                SystemId::RegularizedGenLC => OscFamily::GenLeviCivita,
                _ => OscFamily::KustaanheimoStiefel,
            };
            out.energy = Some(specific_energy_regularized(family, q, v, p).unwrap_or(f64::NAN));
            if let Some(e) = ctx.specific_energy {
                out.h_oscillator = Some(oscillator_hamiltonian(family, q, v, e, p));
            }
            if sys == SystemId::RegularizedKS {
                let u = Coord4::new(q[0], q[1], q[2], q[3]);
                let du = Coord4::new(v[0], v[1], v[2], v[3]);
                out.bilinear = Some(crate::transforms::bilinear_constraint(u, du));
            }
        }
        SystemId::DampedHO2D | SystemId::ShiftedHO2D => {
            let (q, v) = autonomous_qv2(sys, t, q, v, p);
            let s = PhaseState::new(Coord2::new(q[0], q[1]), Coord2::new(v[0], v[1]), t);
            out.energy = Some(bohlin_energies(&s, p).e_shifted / p.m);
            out.ang_mom = Some(AngularMomentum::Planar(angular_momentum_planar(&q, &v, p.m)));
        }
        SystemId::BohlinKepler2D => {
            let z = Coord2::new(q[0], q[1]);
            let zdot = Coord2::new(v[0], v[1]);
            let k = ctx.kepler_energy.map(|e| 0.25 * e).unwrap_or(f64::NAN);
            out.energy = Some(kepler_energy(z, zdot, k, p.m).map(|e| e / p.m).unwrap_or(f64::NAN));
            out.ang_mom = Some(AngularMomentum::Planar(angular_momentum_planar(&q, &v, p.m)));
        }
    }
    out
}

fn autonomous_qv2(sys: SystemId, t: f64, q: &[f64], v: &[f64], p: &SystemParams) -> (Vec<f64>, Vec<f64>) {
    if sys.is_damped() {
        let s = PhaseState::new(Coord2::new(q[0], q[1]), Coord2::new(v[0], v[1]), t);
        let a = damp_to_autonomous(&s, p);
        (a.q.to_vec(), a.v.to_vec())
    } else {
        (q.to_vec(), v.to_vec())
    }
}

fn autonomous_qv3(sys: SystemId, t: f64, q: &[f64], v: &[f64], p: &SystemParams) -> (Vec<f64>, Vec<f64>) {
    if sys.is_damped() {
        let s = PhaseState::new(
            crate::algebra::Coord3::new(q[0], q[1], q[2]),
            crate::algebra::Coord3::new(v[0], v[1], v[2]),
            t,
        );
        let a = damp_to_autonomous(&s, p);
        (a.q.to_vec(), a.v.to_vec())
    } else {
        (q.to_vec(), v.to_vec())
    }
}
