//! The oracle harness: every equivalence the library claims is encoded as an
//! executable check with an explicit tolerance, and the results are emitted
//! as a structured JSON report.
//!
//! Checks are pure functions of their scenario plus a seed; randomized
//! identity checks draw from a per-check ChaCha stream derived from the
//! global seed, so two runs of the suite produce identical measured values.
//! A failing check never aborts the suite, and panics inside a check are
//! demoted to failed entries.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{
    gen_lc_matrix, ks_matrix, lc_matrix, perm2_apply, perm2_matrix, perm4_apply, perm4_matrix,
    Coord2, Coord3, Coord4, CoordVec, Matrix2, Matrix4, Quaternion,
};
use crate::conserved::{
    self, kepler_energy, specific_energy, specific_energy_regularized, EnergyFamily, OscFamily,
};
use crate::dynamics::{rhs_vec, RhsContext, SystemId};
use crate::error::{Error, Result};
use crate::integrate::{
    integrate, integrate_pair, regularized_initial_state, resample_state, IntegratorConfig,
    PairScenario, Status,
};
use crate::transforms::{
    bilinear_constraint, bohlin_forward, bohlin_velocity_map, damp_to_autonomous, gen_lc_forward,
    gen_lc_inverse, gen_lc_inverse_near, ks_forward, ks_inverse, ks_inverse_near, ks_velocity_map,
    lc_forward, lc_inverse, lc_inverse_near, time_rate, PhaseState, SystemParams, TimeFamily,
};

/// Default seed of the randomized property checks.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;

/// Number of random samples per algebraic identity check.
pub const ALGEBRA_SAMPLES: usize = 1000;

// ---------------------------------------------------------------------------
// Check catalog types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckKind {
    RoundTrip,
    ConservationDrift,
    LimitReduction,
    CollisionPassage,
    AlgebraicIdentity,
    HamiltonianEquivalence,
    BohlinEnergy,
}

/// What a check measures; every variant reduces to a single scalar deviation
/// compared against the tolerance.
#[derive(Debug, Clone)]
pub enum CheckTask {
    /// `A(U)ᵀA(U) = |U|²I` for the planar LC matrix.
    LcMatrixOrthogonality,
    /// `A(U)ᵀA(U) = |U|²I` for the K-S matrix.
    KsMatrixOrthogonality,
    /// `Û_NᵀÛ_N = R^{2N}I` for `N ≤ 4`.
    GenLcMatrixScaling,
    /// The planar permutation operators commute.
    Perm2Commutation,
    /// The spatial pair `(P⁽¹⁾, P⁽²⁾)` anticommutes (so it does not commute).
    Perm4NonCommutingPair,
    /// `(P⁽ⁱ⁾U)·(P⁽ʲ⁾U) = δ_ij |U|²` in both families.
    PermColumnOrthogonality,
    /// Quaternion multiplication is associative with multiplicative norm.
    QuaternionAlgebra,
    /// Matrix route `Û_N U` equals the complex-power route.
    GenLcDualRoute,
    /// `lc_forward ∘ lc_inverse = id` and `|Z| = γ|U|²`.
    LcMapRoundTrip,
    /// `ks_forward ∘ ks_inverse = id` and `|X| = |U|²`.
    KsMapRoundTrip,
    /// Velocity-map outputs satisfy the bilinear constraint.
    KsVelocityBilinear,
    /// Power-law time rate at `N = 1` equals the LC rate at `c = 1/4`.
    TimeRatePowerLawMatchesLc,
    /// Branch-continuous inverse maps along a direct trajectory.
    BranchContinuity { family: OscFamily },
    /// Energy evaluated in regularized vs position coordinates, per sample.
    EnergyCrossCoordinates { family: OscFamily },
    /// Direct vs regularized-and-mapped-back integration.
    PairRoundTrip { scenario: PairScenario },
    /// Bilinear constraint drift along the regularized K-S leg.
    KsBilinearDrift,
    /// Damped leg mapped by the point transform vs the autonomous leg.
    PointTransformConsistency { damped: SystemId },
    /// Conserved-energy drift along an autonomous flow.
    EnergyDrift { sys: SystemId },
    /// Angular-momentum drift along an autonomous flow.
    AngularMomentumDrift { sys: SystemId },
    /// Oscillator-Hamiltonian drift along the regularized K-S leg.
    OscillatorHamiltonianDrift,
    /// λ=0 regularized LC field equals a pure oscillator field.
    LcShoField,
    /// λ=0 regularized K-S field equals a pure oscillator field.
    KsShoField,
    /// Generalized LC at N=1 equals the LC field at c = 1/4, pointwise.
    GenLcN1EqualsLc,
    /// λ=0 damped Kepler field equals the classical Kepler field.
    DampedKeplerClassicalLimit,
    /// λ=0 mapped orbit vs the analytic Kepler ellipse.
    AnalyticEllipse { family: OscFamily },
    /// Radial-fall scenario: direct leg aborts, regularized leg passes r = 0.
    CollisionPassage { spatial: bool },
    /// Homogeneous vs direct K-S Hamiltonian, per sample.
    HomogeneousIdentity,
    /// K-S oscillator Hamiltonian is constant with value 4k.
    Homogeneous4kValue,
    /// Measured Kepler energy of the Bohlin image orbit vs the prediction.
    BohlinKeplerEnergy,
    /// The strength identification k = E/4 is constant along the chain.
    BohlinStrengthIdentification,
    /// Bohlin-mapped oscillator orbit vs direct Kepler integration.
    BohlinOrbitMatch,
    /// Damped oscillator mapped by the point transform vs the shifted
    /// oscillator (numeric and closed form).
    ShiftedHoMatch,
}

#[derive(Debug, Clone)]
pub struct CheckSpec {
    pub name: String,
    pub kind: CheckKind,
    pub tolerance: f64,
    pub task: CheckTask,
}

impl CheckSpec {
    fn new(name: &str, kind: CheckKind, tolerance: f64, task: CheckTask) -> Self {
        Self {
            name: name.to_string(),
            kind,
            tolerance,
            task,
        }
    }

    /// Systems a check integrates or evaluates, for coverage accounting.
    pub fn systems(&self) -> Vec<SystemId> {
        use CheckTask::*;
        match &self.task {
            PairRoundTrip { scenario } => {
                let mut v = vec![scenario.direct];
                if let Ok((reg, _, _)) = crate::integrate::regularized_counterpart(scenario.direct)
                {
                    v.push(reg);
                }
                v
            }
            KsBilinearDrift | OscillatorHamiltonianDrift | HomogeneousIdentity
            | Homogeneous4kValue => {
                vec![SystemId::DampedKepler3D, SystemId::RegularizedKS]
            }
            PointTransformConsistency { damped } => {
                let auto = match damped {
                    SystemId::DampedKepler2D => SystemId::AutonomousKepler2D,
                    SystemId::DampedPowerLaw2D => SystemId::AutonomousPowerLaw2D,
                    _ => SystemId::AutonomousKepler3D,
                };
                vec![*damped, auto]
            }
            EnergyDrift { sys } | AngularMomentumDrift { sys } => vec![*sys],
            LcShoField => vec![SystemId::RegularizedLC],
            KsShoField => vec![SystemId::RegularizedKS],
            GenLcN1EqualsLc => vec![SystemId::RegularizedGenLC, SystemId::RegularizedLC],
            DampedKeplerClassicalLimit => vec![SystemId::DampedKepler2D],
            AnalyticEllipse { family } => match family {
                OscFamily::KustaanheimoStiefel => {
                    vec![SystemId::DampedKepler3D, SystemId::RegularizedKS]
                }
                _ => vec![SystemId::AutonomousKepler2D, SystemId::RegularizedLC],
            },
            CollisionPassage { spatial } => {
                if *spatial {
                    vec![SystemId::DampedKepler3D, SystemId::RegularizedKS]
                } else {
                    vec![SystemId::DampedKepler2D, SystemId::RegularizedLC]
                }
            }
            EnergyCrossCoordinates { family } | BranchContinuity { family } => match family {
                OscFamily::LeviCivita => {
                    vec![SystemId::AutonomousKepler2D, SystemId::RegularizedLC]
                }
                OscFamily::GenLeviCivita => {
                    vec![SystemId::AutonomousPowerLaw2D, SystemId::RegularizedGenLC]
                }
                OscFamily::KustaanheimoStiefel => {
                    vec![SystemId::AutonomousKepler3D, SystemId::RegularizedKS]
                }
            },
            BohlinKeplerEnergy | BohlinStrengthIdentification => {
                vec![SystemId::DampedHO2D, SystemId::ShiftedHO2D]
            }
            BohlinOrbitMatch => vec![SystemId::ShiftedHO2D, SystemId::BohlinKepler2D],
            ShiftedHoMatch => vec![SystemId::DampedHO2D, SystemId::ShiftedHO2D],
            _ => vec![],
        }
    }
}

/// Result entry of one executed check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub kind: CheckKind,
    /// Measured worst deviation; `null` when the check errored out.
    pub measured: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// The emitted document is the plain array of check entries.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.checks).expect("report serializes")
    }
}

// ---------------------------------------------------------------------------
// Scenario constructors (shared with the acceptance suite)
// ---------------------------------------------------------------------------

/// Elliptic planar scenario: `m = k = 1`, `X = (1,0)`, `Ẋ = (0,0.8)`.
pub fn lc_scenario(lambda: f64) -> PairScenario {
    PairScenario {
        params: SystemParams {
            lambda,
            ..SystemParams::default()
        },
        direct: SystemId::AutonomousKepler2D,
        position: vec![1.0, 0.0],
        velocity: vec![0.0, 0.8],
        t_end: 20.0,
        cfg: IntegratorConfig::default(),
    }
}

/// Same protocol against the power-law system with exponent index `n`.
pub fn powerlaw_scenario(n: u32, lambda: f64) -> PairScenario {
    PairScenario {
        params: SystemParams {
            lambda,
            n_power: n,
            ..SystemParams::default()
        },
        direct: SystemId::AutonomousPowerLaw2D,
        position: vec![1.0, 0.0],
        velocity: vec![0.0, 0.8],
        t_end: 20.0,
        cfg: IntegratorConfig::default(),
    }
}

/// Spatial elliptic scenario starting from the damped picture:
/// `x = (1,0,0)`, `ẋ = (0,0.7,0.3)`.
pub fn ks_scenario(lambda: f64) -> PairScenario {
    PairScenario {
        params: SystemParams {
            lambda,
            ..SystemParams::default()
        },
        direct: SystemId::DampedKepler3D,
        position: vec![1.0, 0.0, 0.0],
        velocity: vec![0.0, 0.7, 0.3],
        t_end: 20.0,
        cfg: IntegratorConfig::default(),
    }
}

/// Bohlin-chain parameters: `m = 1`, `Ω = 1`, `λ = 0.2`, damped-oscillator
/// initial condition `q = (1,0)`, `q̇ = (0,0.6)`.
pub fn bohlin_params() -> (SystemParams, [f64; 2], [f64; 2]) {
    let p = SystemParams {
        lambda: 0.2,
        omega: 1.0,
        ..SystemParams::default()
    };
    (p, [1.0, 0.0], [0.0, 0.6])
}

// ---------------------------------------------------------------------------
// Analytic reference solutions
// ---------------------------------------------------------------------------

/// Closed-form reference solutions used by the limit checks.
pub mod oracle {
    /// Propagate an elliptic Kepler state `(q0, v0)` by `dt` using the
    /// Lagrange f-g solution with the eccentric anomaly; dimension-agnostic.
    pub fn kepler_propagate(mu: f64, q0: &[f64], v0: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
        let r0 = q0.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v2 = v0.iter().map(|x| x * x).sum::<f64>();
        let energy = 0.5 * v2 - mu / r0;
        assert!(energy < 0.0, "f-g oracle requires an elliptic state");
        let a = -0.5 * mu / energy;
        let n = (mu / (a * a * a)).sqrt();
        let qdotv: f64 = q0.iter().zip(v0).map(|(q, v)| q * v).sum();

        // e·(cos E0, sin E0), never dividing by the eccentricity.
        let ecos0 = 1.0 - r0 / a;
        let esin0 = qdotv / (mu * a).sqrt();
        let e = (ecos0 * ecos0 + esin0 * esin0).sqrt();
        let e0 = esin0.atan2(ecos0);
        let m0 = e0 - esin0;
        let m = m0 + n * dt;

        // Newton iteration for the eccentric anomaly.
        let mut ea = m + e * m.sin();
        for _ in 0..60 {
            let f = ea - e * ea.sin() - m;
            let fp = 1.0 - e * ea.cos();
            let step = f / fp;
            ea -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }

        let de = ea - e0;
        let (sde, cde) = de.sin_cos();
        let r = a * (1.0 - e * ea.cos());
        let f = 1.0 - a / r0 * (1.0 - cde);
        let g = dt + (sde - de) / n;
        let fdot = -(mu * a).sqrt() * sde / (r * r0);
        let gdot = 1.0 - a / r * (1.0 - cde);

        let q = q0.iter().zip(v0).map(|(q, v)| f * q + g * v).collect();
        let v = q0.iter().zip(v0).map(|(q, v)| fdot * q + gdot * v).collect();
        (q, v)
    }

    /// Closed form of the shifted oscillator `x″ = -Ω̃²x` together with the
    /// Kepler time `t_K(τ) = ∫ 4|x|² dτ` of its Bohlin image.
    pub struct ShiftedHo {
        pub omega_t: f64,
        a: [f64; 2],
        b: [f64; 2],
    }

    impl ShiftedHo {
        pub fn new(omega_t: f64, x0: [f64; 2], v0: [f64; 2]) -> Self {
            Self {
                omega_t,
                a: x0,
                b: [v0[0] / omega_t, v0[1] / omega_t],
            }
        }

        pub fn position(&self, t: f64) -> [f64; 2] {
            let (s, c) = (self.omega_t * t).sin_cos();
            [self.a[0] * c + self.b[0] * s, self.a[1] * c + self.b[1] * s]
        }

        pub fn velocity(&self, t: f64) -> [f64; 2] {
            let (s, c) = (self.omega_t * t).sin_cos();
            [
                self.omega_t * (-self.a[0] * s + self.b[0] * c),
                self.omega_t * (-self.a[1] * s + self.b[1] * c),
            ]
        }

        /// `t_K(τ) = 4∫₀^τ |x|² ds`, integrated in closed form.
        pub fn kepler_time(&self, t: f64) -> f64 {
            let w = self.omega_t;
            let a2: f64 = self.a.iter().map(|x| x * x).sum();
            let b2: f64 = self.b.iter().map(|x| x * x).sum();
            let ab: f64 = self.a.iter().zip(&self.b).map(|(x, y)| x * y).sum();
            let s = (w * t).sin();
            4.0 * (0.5 * (a2 + b2) * t
                + 0.25 * (a2 - b2) * (2.0 * w * t).sin() / w
                + ab * s * s / w)
        }
    }
}

// ---------------------------------------------------------------------------
// Random sampling
// ---------------------------------------------------------------------------

fn check_rng(seed: u64, name: &str) -> ChaCha8Rng {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    name.hash(&mut h);
    ChaCha8Rng::seed_from_u64(seed ^ h.finish())
}

/// A random vector whose magnitude spans `1e-3 .. 1e3` log-uniformly.
fn sample_components<const N: usize>(rng: &mut ChaCha8Rng) -> [f64; N] {
    let scale = 10.0_f64.powf(rng.random_range(-3.0..3.0));
    loop {
        let mut out = [0.0; N];
        let mut norm2 = 0.0;
        for v in &mut out {
            *v = rng.random_range(-1.0..1.0);
            norm2 += *v * *v;
        }
        if norm2 > 0.09 {
            for v in &mut out {
                *v *= scale;
            }
            return out;
        }
    }
}

// ---------------------------------------------------------------------------
// Check implementations
// ---------------------------------------------------------------------------

fn matrix2_identity_dev(m: &Matrix2, scale: f64) -> f64 {
    m.sub(&Matrix2::identity().scale(scale)).max_abs() / scale
}

fn matrix4_identity_dev(m: &Matrix4, scale: f64) -> f64 {
    m.sub(&Matrix4::identity().scale(scale)).max_abs() / scale
}

fn run_task(task: &CheckTask, rng: &mut ChaCha8Rng) -> Result<f64> {
    use CheckTask::*;
    match task {
        LcMatrixOrthogonality => {
            let mut worst = 0.0_f64;
            for _ in 0..ALGEBRA_SAMPLES {
                let c = sample_components::<2>(rng);
                let u = Coord2::new(c[0], c[1]);
                let a = lc_matrix(u);
                worst = worst.max(matrix2_identity_dev(&a.transpose().mul_mat(&a), u.norm_sq()));
            }
            Ok(worst)
        }
        KsMatrixOrthogonality => {
            let mut worst = 0.0_f64;
            for _ in 0..ALGEBRA_SAMPLES {
                let u = Coord4(sample_components::<4>(rng));
                let a = ks_matrix(u);
                worst = worst.max(matrix4_identity_dev(&a.transpose().mul_mat(&a), u.norm_sq()));
            }
            Ok(worst)
        }
        GenLcMatrixScaling => {
            let mut worst = 0.0_f64;
            for _ in 0..ALGEBRA_SAMPLES {
                let c = sample_components::<2>(rng);
                let u = Coord2::new(c[0], c[1]);
                for n in 0..=4u32 {
                    let m = gen_lc_matrix(u, n);
                    let scale = u.norm_sq().powi(n as i32);
                    worst = worst.max(matrix2_identity_dev(&m.transpose().mul_mat(&m), scale));
                }
            }
            Ok(worst)
        }
        Perm2Commutation => {
            let p1 = perm2_matrix(1)?;
            let p2 = perm2_matrix(2)?;
            Ok(p1.mul_mat(&p2).sub(&p2.mul_mat(&p1)).max_abs())
        }
        Perm4NonCommutingPair => {
            // Exhibit (P¹, P²): their commutator has max entry exactly 2
            // (they anticommute), so they do not commute.
            let p1 = perm4_matrix(1)?;
            let p2 = perm4_matrix(2)?;
            let commutator = p1.mul_mat(&p2).sub(&p2.mul_mat(&p1)).max_abs();
            if commutator < 1.0 {
                return Err(Error::CheckFailed(format!(
                    "pair (1,2) unexpectedly commutes (commutator norm {commutator})"
                )));
            }
            Ok((commutator - 2.0).abs())
        }
        PermColumnOrthogonality => {
            let mut worst = 0.0_f64;
            for _ in 0..ALGEBRA_SAMPLES {
                let c2 = sample_components::<2>(rng);
                let u2 = Coord2::new(c2[0], c2[1]);
                for i in 1..=2 {
                    for j in 1..=2 {
                        let dot = perm2_apply(i, u2)?.dot(&perm2_apply(j, u2)?);
                        let expect = if i == j { u2.norm_sq() } else { 0.0 };
                        worst = worst.max((dot - expect).abs() / u2.norm_sq());
                    }
                }
                let u4 = Coord4(sample_components::<4>(rng));
                for i in 0..4 {
                    for j in 0..4 {
                        let dot = perm4_apply(i, u4)?.dot(&perm4_apply(j, u4)?);
                        let expect = if i == j { u4.norm_sq() } else { 0.0 };
                        worst = worst.max((dot - expect).abs() / u4.norm_sq());
                    }
                }
            }
            Ok(worst)
        }
        QuaternionAlgebra => {
            let mut worst = 0.0_f64;
            for _ in 0..ALGEBRA_SAMPLES {
                let a = Quaternion::from(Coord4(sample_components::<4>(rng)));
                let b = Quaternion::from(Coord4(sample_components::<4>(rng)));
                let c = Quaternion::from(Coord4(sample_components::<4>(rng)));
                let lhs = (a * b) * c;
                let rhs = a * (b * c);
                let scale = a.norm() * b.norm() * c.norm();
                worst = worst.max(Coord4::from(lhs).sub(&Coord4::from(rhs)).norm() / scale);
                let nd = ((a * b).norm() - a.norm() * b.norm()).abs() / (a.norm() * b.norm());
                worst = worst.max(nd);
            }
            Ok(worst)
        }
        GenLcDualRoute => {
            let mut worst = 0.0_f64;
            for _ in 0..ALGEBRA_SAMPLES {
                let c = sample_components::<2>(rng);
                let u = Coord2::new(c[0], c[1]);
                for n in 0..=4u32 {
                    let via_matrix = gen_lc_matrix(u, n).mul_vec(&u);
                    let via_power = gen_lc_forward(u, n);
                    let scale = u.norm().powi(n as i32 + 1).max(1e-300);
                    worst = worst.max(via_matrix.sub(&via_power).norm() / scale);
                }
            }
            Ok(worst)
        }
        LcMapRoundTrip => {
            let mut worst = 0.0_f64;
            for _ in 0..ALGEBRA_SAMPLES {
                let c = sample_components::<2>(rng);
                let z = Coord2::new(c[0], c[1]);
                let gamma = rng.random_range(0.5..2.0);
                let u = lc_inverse(z, gamma);
                worst = worst.max(lc_forward(u, gamma).sub(&z).norm() / z.norm());
                worst = worst.max((gamma * u.norm_sq() - z.norm()).abs() / z.norm());
            }
            Ok(worst)
        }
        KsMapRoundTrip => {
            let mut worst = 0.0_f64;
            for _ in 0..ALGEBRA_SAMPLES {
                let c = sample_components::<3>(rng);
                let x = Coord3::new(c[0], c[1], c[2]);
                let u = ks_inverse(x);
                let back = ks_forward(u);
                let dev = ((back.x - x.x).powi(2)
                    + (back.y - x.y).powi(2)
                    + (back.z - x.z).powi(2))
                .sqrt();
                worst = worst.max(dev / x.norm());
                worst = worst.max((u.norm_sq() - x.norm()).abs() / x.norm());
            }
            Ok(worst)
        }
        KsVelocityBilinear => {
            let mut worst = 0.0_f64;
            for _ in 0..ALGEBRA_SAMPLES {
                let u = Coord4(sample_components::<4>(rng));
                let c = sample_components::<3>(rng);
                let xdot = Coord3::new(c[0], c[1], c[2]);
                let du = ks_velocity_map(u, xdot)?;
                let scale = (u.norm() * du.norm()).max(1e-300);
                worst = worst.max(bilinear_constraint(u, du).abs() / scale);
            }
            Ok(worst)
        }
        TimeRatePowerLawMatchesLc => {
            let p = SystemParams::default(); // n_power = 1, c = 1/4
            let mut worst = 0.0_f64;
            for _ in 0..ALGEBRA_SAMPLES {
                let r = 10.0_f64.powf(rng.random_range(-3.0..3.0));
                let a = time_rate(TimeFamily::PowerLaw, r, &p)?;
                let b = time_rate(TimeFamily::LeviCivita, r, &p)?;
                worst = worst.max((a - b).abs() / b.abs());
            }
            Ok(worst)
        }
        BranchContinuity { family } => branch_continuity(*family),
        EnergyCrossCoordinates { family } => energy_cross_coordinates(*family),
        PairRoundTrip { scenario } => {
            let out = integrate_pair(scenario)?;
            let cmp = out.comparison.ok_or_else(|| {
                Error::CheckFailed(format!(
                    "legs did not both complete: direct {:?}, regularized {:?}",
                    out.direct.status, out.regularized.status
                ))
            })?;
            Ok(cmp.max_position_error)
        }
        KsBilinearDrift => {
            let out = integrate_pair(&ks_scenario(0.01))?;
            let mut worst = 0.0_f64;
            for s in &out.regularized.samples {
                let u = Coord4::new(s.state[0], s.state[1], s.state[2], s.state[3]);
                let du = Coord4::new(s.state[4], s.state[5], s.state[6], s.state[7]);
                worst = worst.max(bilinear_constraint(u, du).abs());
            }
            Ok(worst)
        }
        PointTransformConsistency { damped } => point_transform_consistency(*damped),
        EnergyDrift { sys } => {
            let traj = conservation_run(*sys)?;
            let d = traj
                .drift_of(|s| s.conserved.energy)
                .ok_or(Error::CheckFailed("no energy recorded".into()))?;
            Ok(d.max_rel_drift)
        }
        AngularMomentumDrift { sys } => {
            let traj = conservation_run(*sys)?;
            let first = traj.samples[0]
                .conserved
                .ang_mom
                .ok_or(Error::CheckFailed("no angular momentum recorded".into()))?;
            let mut worst = 0.0_f64;
            for s in &traj.samples {
                let l = s.conserved.ang_mom.expect("recorded along the whole run");
                worst = worst.max(l.max_abs_diff(&first));
            }
            Ok(worst)
        }
        OscillatorHamiltonianDrift => {
            let out = integrate_pair(&ks_scenario(0.01))?;
            let d = out
                .regularized
                .drift_of(|s| s.conserved.h_oscillator)
                .ok_or(Error::CheckFailed("no Hamiltonian recorded".into()))?;
            Ok(d.max_rel_drift)
        }
        LcShoField => {
            let p = SystemParams::default();
            let e = 0.68;
            let ctx = RhsContext::with_energy(p, e);
            let omega_sq = e / (2.0 * p.m * p.c * p.c);
            let mut worst = 0.0_f64;
            for _ in 0..200 {
                let c = sample_components::<4>(rng);
                let state = [c[0], c[1], c[2], c[3], 0.0];
                let out = rhs_vec(SystemId::RegularizedLC, 0.0, &state, &ctx)?;
                let scale = omega_sq * (state[0].abs() + state[1].abs()).max(1e-300);
                for i in 0..2 {
                    let expect = -omega_sq * state[i];
                    worst = worst.max((out[2 + i] - expect).abs() / scale);
                }
            }
            Ok(worst)
        }
        KsShoField => {
            let p = SystemParams::default();
            let e = 0.68;
            let ctx = RhsContext::with_energy(p, e);
            let mut worst = 0.0_f64;
            for _ in 0..200 {
                let u = sample_components::<4>(rng);
                let du = sample_components::<4>(rng);
                let mut state = u.to_vec();
                state.extend(du);
                state.push(0.0);
                let out = rhs_vec(SystemId::RegularizedKS, 0.0, &state, &ctx)?;
                let scale = 8.0 * e * u.iter().map(|x| x.abs()).sum::<f64>().max(1e-300);
                for i in 0..4 {
                    let expect = -8.0 * e * state[i];
                    worst = worst.max((out[4 + i] - expect).abs() / scale);
                }
            }
            Ok(worst)
        }
        GenLcN1EqualsLc => {
            let p = SystemParams {
                lambda: 0.1,
                n_power: 1,
                c: 0.25,
                ..SystemParams::default()
            };
            let ctx = RhsContext::with_energy(p, 0.68);
            let mut worst = 0.0_f64;
            for _ in 0..200 {
                let c = sample_components::<4>(rng);
                let state = [c[0], c[1], c[2], c[3], 0.0];
                let a = rhs_vec(SystemId::RegularizedGenLC, 0.0, &state, &ctx)?;
                let b = rhs_vec(SystemId::RegularizedLC, 0.0, &state, &ctx)?;
                let scale: f64 = b.iter().map(|x| x.abs()).sum::<f64>().max(1e-300);
                for i in 0..5 {
                    worst = worst.max((a[i] - b[i]).abs() / scale);
                }
            }
            Ok(worst)
        }
        DampedKeplerClassicalLimit => {
            let p = SystemParams::default(); // λ = 0
            let ctx = RhsContext::new(p);
            let mut worst = 0.0_f64;
            for _ in 0..200 {
                let c = sample_components::<4>(rng);
                let state = [c[0], c[1], c[2], c[3]];
                let out = rhs_vec(SystemId::DampedKepler2D, 1.7, &state, &ctx)?;
                let r = (state[0] * state[0] + state[1] * state[1]).sqrt();
                let f = p.mu() / (r * r * r);
                let scale = (f * r).max(1e-300);
                worst = worst.max((out[2] + f * state[0]).abs() / scale);
                worst = worst.max((out[3] + f * state[1]).abs() / scale);
            }
            Ok(worst)
        }
        AnalyticEllipse { family } => analytic_ellipse(*family),
        CollisionPassage { spatial } => collision_passage(*spatial),
        HomogeneousIdentity => Ok(homogeneous_report()?.max_identity_gap),
        Homogeneous4kValue => Ok(homogeneous_report()?.max_value_deviation),
        BohlinKeplerEnergy => bohlin_chain().map(|r| r.max_energy_error),
        BohlinStrengthIdentification => bohlin_chain().map(|r| r.max_strength_drift),
        BohlinOrbitMatch => bohlin_orbit_match(),
        ShiftedHoMatch => shifted_ho_match(),
    }
}

// Multi-step checks, factored out for readability.

fn conservation_run(sys: SystemId) -> Result<crate::integrate::Trajectory> {
    let p = SystemParams {
        lambda: 0.05,
        n_power: 2,
        ..SystemParams::default()
    };
    let ctx = RhsContext::new(p);
    // The window covers ≥ 10 orbital/radial periods for these initial
    // conditions (the Kepler period here is ≈ 4).
    let (state, t_end): (Vec<f64>, f64) = match sys.coord_dim() {
        2 => (vec![1.0, 0.0, 0.0, 0.8], 40.0),
        _ => (vec![1.0, 0.0, 0.0, 0.0, 0.7, 0.3], 40.0),
    };
    let cfg = IntegratorConfig {
        t_end,
        ..IntegratorConfig::default()
    };
    let traj = integrate(sys, 0.0, &state, &ctx, &cfg)?;
    if traj.status != Status::Completed {
        return Err(Error::CheckFailed(format!(
            "conservation run ended with {:?}",
            traj.status
        )));
    }
    Ok(traj)
}

fn point_transform_consistency(damped: SystemId) -> Result<f64> {
    let auto = match damped {
        SystemId::DampedKepler2D => SystemId::AutonomousKepler2D,
        SystemId::DampedPowerLaw2D => SystemId::AutonomousPowerLaw2D,
        SystemId::DampedKepler3D => SystemId::AutonomousKepler3D,
        other => {
            return Err(Error::CheckFailed(format!(
                "{} is not a damped central-force system",
                other.name()
            )))
        }
    };
    let p = SystemParams {
        lambda: 0.08,
        n_power: 2,
        ..SystemParams::default()
    };
    let ctx = RhsContext::new(p);
    let d = damped.coord_dim();
    let (q0, v0): (Vec<f64>, Vec<f64>) = if d == 2 {
        (vec![1.0, 0.0], vec![0.0, 0.8])
    } else {
        (vec![1.0, 0.0, 0.0], vec![0.0, 0.7, 0.3])
    };
    let cfg = IntegratorConfig {
        t_end: 15.0,
        ..IntegratorConfig::default()
    };
    let mut s0 = q0.clone();
    s0.extend(&v0);
    let damped_traj = integrate(damped, 0.0, &s0, &ctx, &cfg)?;
    if damped_traj.status != Status::Completed {
        return Err(Error::CheckFailed(format!(
            "damped leg ended with {:?}",
            damped_traj.status
        )));
    }

    // Autonomous leg from the transformed initial condition.
    let shift = 0.5 * p.lambda;
    let mut a0 = q0.clone();
    a0.extend(v0.iter().zip(&q0).map(|(v, q)| v + shift * q));
    let auto_traj = integrate(auto, 0.0, &a0, &ctx, &cfg)?;
    if auto_traj.status != Status::Completed {
        return Err(Error::CheckFailed(format!(
            "autonomous leg ended with {:?}",
            auto_traj.status
        )));
    }

    // Map each damped sample through the point transform and compare
    // positions against the autonomous leg.
    let mut worst = 0.0_f64;
    for s in &damped_traj.samples {
        let Some(auto_state) = resample_state(&auto_traj, s.time) else {
            continue;
        };
        let f = (0.5 * p.lambda * s.time).exp();
        for i in 0..d {
            worst = worst.max((s.state[i] * f - auto_state[i]).abs());
        }
    }
    Ok(worst)
}

fn branch_continuity(family: OscFamily) -> Result<f64> {
    // Integrate the direct system, then walk the inverse map along the
    // trajectory keeping the branch/fiber point continuous; the forward map
    // must reproduce every sample and consecutive points must stay close.
    let p = SystemParams {
        lambda: 0.05,
        n_power: 2,
        ..SystemParams::default()
    };
    let ctx = RhsContext::new(p);
    let (sys, s0): (SystemId, Vec<f64>) = match family {
        OscFamily::LeviCivita => (SystemId::AutonomousKepler2D, vec![1.0, 0.0, 0.0, 0.8]),
        OscFamily::GenLeviCivita => (SystemId::AutonomousPowerLaw2D, vec![1.0, 0.0, 0.0, 0.8]),
        OscFamily::KustaanheimoStiefel => (
            SystemId::AutonomousKepler3D,
            vec![1.0, 0.0, 0.0, 0.0, 0.7, 0.3],
        ),
    };
    let cfg = IntegratorConfig {
        t_end: 15.0,
        ..IntegratorConfig::default()
    };
    let traj = integrate(sys, 0.0, &s0, &ctx, &cfg)?;
    let mut worst = 0.0_f64;
    let mut prev2: Option<Coord2> = None;
    let mut prev4: Option<Coord4> = None;
    for s in &traj.samples {
        match family {
            OscFamily::LeviCivita | OscFamily::GenLeviCivita => {
                let z = Coord2::new(s.state[0], s.state[1]);
                let u = match (family, prev2) {
                    (OscFamily::LeviCivita, None) => lc_inverse(z, p.gamma),
                    (OscFamily::LeviCivita, Some(prev)) => lc_inverse_near(z, p.gamma, prev),
                    (_, None) => gen_lc_inverse(z, p.n_power),
                    (_, Some(prev)) => gen_lc_inverse_near(z, p.n_power, prev),
                };
                if let Some(prev) = prev2 {
                    if u.sub(&prev).norm() > 0.5 * u.norm() {
                        return Err(Error::CheckFailed("branch flip along trajectory".into()));
                    }
                }
                let back = match family {
                    OscFamily::LeviCivita => lc_forward(u, p.gamma),
                    _ => gen_lc_forward(u, p.n_power),
                };
                worst = worst.max(back.sub(&z).norm() / z.norm().max(1e-300));
                prev2 = Some(u);
            }
            OscFamily::KustaanheimoStiefel => {
                let x = Coord3::new(s.state[0], s.state[1], s.state[2]);
                let u = match prev4 {
                    None => ks_inverse(x),
                    Some(prev) => ks_inverse_near(x, prev),
                };
                if let Some(prev) = prev4 {
                    if u.sub(&prev).norm() > 0.5 * u.norm() {
                        return Err(Error::CheckFailed("fiber jump along trajectory".into()));
                    }
                }
                let back = ks_forward(u);
                let dev = ((back.x - x.x).powi(2)
                    + (back.y - x.y).powi(2)
                    + (back.z - x.z).powi(2))
                .sqrt();
                worst = worst.max(dev / x.norm().max(1e-300));
                prev4 = Some(u);
            }
        }
    }
    Ok(worst)
}

fn family_coord_dim(family: OscFamily) -> usize {
    match family {
        OscFamily::KustaanheimoStiefel => 4,
        _ => 2,
    }
}

fn energy_cross_coordinates(family: OscFamily) -> Result<f64> {
    // Along the regularized leg, compare the energy evaluated from (U, U′)
    // against the energy of the mapped-back position-space state.
    let (scenario, e_family) = match family {
        OscFamily::LeviCivita => (lc_scenario(0.1), EnergyFamily::Kepler2D),
        OscFamily::GenLeviCivita => (powerlaw_scenario(2, 0.05), EnergyFamily::PowerLaw2D),
        OscFamily::KustaanheimoStiefel => (ks_scenario(0.01), EnergyFamily::Kepler3D),
    };
    let out = integrate_pair(&scenario)?;
    let p = scenario.params;
    let d = scenario.direct.coord_dim();
    let dim = family_coord_dim(family);
    let mut worst = 0.0_f64;
    for s in &out.regularized.samples {
        let (u, du) = (&s.state[..dim], &s.state[dim..2 * dim]);
        let e_u = specific_energy_regularized(family, u, du, &p)?;
        let Some((_, q, v)) = crate::integrate::map_back(family, &s.state, &p) else {
            continue;
        };
        let e_x = specific_energy(e_family, &q[..d], &v[..d], &p)?;
        worst = worst.max((e_u - e_x).abs());
    }
    Ok(worst)
}

fn analytic_ellipse(family: OscFamily) -> Result<f64> {
    // λ = 0: the mapped-back regularized orbit must trace the analytic
    // Kepler ellipse of the initial condition.
    let scenario = match family {
        OscFamily::KustaanheimoStiefel => ks_scenario(0.0),
        _ => lc_scenario(0.0),
    };
    let out = integrate_pair(&scenario)?;
    let mu = scenario.params.mu();
    let d = scenario.direct.coord_dim();
    let mut worst = 0.0_f64;
    for m in &out.mapped {
        let (q_ref, _) = oracle::kepler_propagate(mu, &scenario.position, &scenario.velocity, m.t);
        let dev = (0..d)
            .map(|i| (m.position[i] - q_ref[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(dev);
    }
    Ok(worst)
}

fn collision_passage(spatial: bool) -> Result<f64> {
    let p = SystemParams {
        lambda: 0.01,
        ..SystemParams::default()
    };
    let (direct, family) = if spatial {
        (SystemId::DampedKepler3D, OscFamily::KustaanheimoStiefel)
    } else {
        (SystemId::DampedKepler2D, OscFamily::LeviCivita)
    };
    let d = direct.coord_dim();
    let mut q0 = vec![0.0; d];
    q0[0] = 1.0;
    let v0 = vec![0.0; d];

    // Direct leg: radial fall must fail in finite time.
    let mut s0 = q0.clone();
    s0.extend(&v0);
    let cfg = IntegratorConfig {
        t_end: 3.0,
        ..IntegratorConfig::default()
    };
    let direct_traj = integrate(direct, 0.0, &s0, &RhsContext::new(p), &cfg)?;
    if !matches!(
        direct_traj.status,
        Status::CollisionAbort | Status::StepUnderflow
    ) {
        return Err(Error::CheckFailed(format!(
            "direct radial fall ended with {:?} instead of aborting",
            direct_traj.status
        )));
    }

    // Regularized leg: same state on the autonomous energy surface, run over
    // a fixed fictitious-time window that crosses r = 0.
    let shift = 0.5 * p.lambda;
    let v_auto: Vec<f64> = v0.iter().zip(&q0).map(|(v, q)| v + shift * q).collect();
    let e_family = if spatial {
        EnergyFamily::Kepler3D
    } else {
        EnergyFamily::Kepler2D
    };
    let e = specific_energy(e_family, &q0, &v_auto, &p)?;
    let reg_state = regularized_initial_state(family, &q0, &v_auto, &p)?;
    let reg_sys = if spatial {
        SystemId::RegularizedKS
    } else {
        SystemId::RegularizedLC
    };
    let reg_cfg = IntegratorConfig {
        t_end: 4.0,
        ..IntegratorConfig::default()
    };
    let traj = integrate(
        reg_sys,
        0.0,
        &reg_state,
        &RhsContext::with_energy(p, e),
        &reg_cfg,
    )?;
    if traj.status != Status::Completed {
        return Err(Error::CheckFailed(format!(
            "regularized leg ended with {:?}",
            traj.status
        )));
    }
    let dim = family_coord_dim(family);
    let mut min_r = f64::INFINITY;
    let mut max_norm = 0.0_f64;
    for s in &traj.samples {
        let r: f64 = s.state[..dim].iter().map(|x| x * x).sum();
        let dn: f64 = s.state[dim..2 * dim]
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        min_r = min_r.min(r);
        max_norm = max_norm.max(r.sqrt().max(dn));
    }
    if min_r > 1e-3 {
        return Err(Error::CheckFailed(format!(
            "regularized leg stayed away from the collision (min r = {min_r:.2e})"
        )));
    }
    if max_norm > 100.0 {
        return Err(Error::CheckFailed(format!(
            "regularized coordinates blew up (max norm {max_norm:.2e})"
        )));
    }
    let drift = traj
        .drift_of(|s| s.conserved.h_oscillator)
        .ok_or(Error::CheckFailed("no Hamiltonian recorded".into()))?;
    Ok(drift.max_abs_drift)
}

fn homogeneous_report() -> Result<conserved::HomogeneousReport> {
    let scenario = ks_scenario(0.01);
    let out = integrate_pair(&scenario)?;
    let samples: Vec<(Coord4, Coord4)> = out
        .regularized
        .samples
        .iter()
        .map(|s| {
            (
                Coord4::new(s.state[0], s.state[1], s.state[2], s.state[3]),
                Coord4::new(s.state[4], s.state[5], s.state[6], s.state[7]),
            )
        })
        .collect();
    Ok(conserved::homogeneous_equivalence_check(
        &samples,
        out.specific_energy,
        &scenario.params,
    ))
}

struct BohlinChain {
    max_energy_error: f64,
    max_strength_drift: f64,
}

fn bohlin_chain() -> Result<BohlinChain> {
    let (p, q0, v0) = bohlin_params();
    let ctx = RhsContext::new(p);
    let cfg = IntegratorConfig {
        t_end: 20.0,
        ..IntegratorConfig::default()
    };
    let traj = integrate(
        SystemId::DampedHO2D,
        0.0,
        &[q0[0], q0[1], v0[0], v0[1]],
        &ctx,
        &cfg,
    )?;
    if traj.status != Status::Completed {
        return Err(Error::CheckFailed(format!(
            "damped oscillator leg ended with {:?}",
            traj.status
        )));
    }

    let mut k_first = None;
    let mut max_energy_error = 0.0_f64;
    let mut max_strength_drift = 0.0_f64;
    for s in &traj.samples {
        // Damped → shifted oscillator.
        let damped = PhaseState::new(
            Coord2::new(s.state[0], s.state[1]),
            Coord2::new(s.state[2], s.state[3]),
            s.time,
        );
        let shifted = damp_to_autonomous(&damped, &p);
        let energies = conserved::bohlin_energies(&shifted, &p);
        let k0 = *k_first.get_or_insert(energies.k_identified);
        max_strength_drift = max_strength_drift.max((energies.e_shifted / 4.0 - k0).abs());

        // Shifted oscillator → Kepler image.
        let z = bohlin_forward(shifted.q);
        let zdot = bohlin_velocity_map(shifted.q, shifted.v)?;
        let e_k = kepler_energy(z, zdot, k0, p.m)?;
        max_energy_error = max_energy_error.max((e_k - energies.e_kepler_predicted).abs());
    }
    Ok(BohlinChain {
        max_energy_error,
        max_strength_drift,
    })
}

fn bohlin_orbit_match() -> Result<f64> {
    // Compare the Bohlin image of the (numerically integrated) shifted
    // oscillator with a direct integration of the Kepler image, resampled at
    // the closed-form Kepler times.
    let (p, q0, v0) = bohlin_params();
    let shift = 0.5 * p.lambda;
    let x0 = q0;
    let xv0 = [v0[0] + shift * q0[0], v0[1] + shift * q0[1]];
    let omega_t = p.shifted_omega_sq().sqrt();
    let reference = oracle::ShiftedHo::new(omega_t, x0, xv0);

    let cfg = IntegratorConfig {
        t_end: 20.0,
        ..IntegratorConfig::default()
    };
    let shifted = integrate(
        SystemId::ShiftedHO2D,
        0.0,
        &[x0[0], x0[1], xv0[0], xv0[1]],
        &RhsContext::new(p),
        &cfg,
    )?;

    // Direct Kepler leg with strength E/4 from the chain identification.
    let s0 = PhaseState::new(Coord2::new(x0[0], x0[1]), Coord2::new(xv0[0], xv0[1]), 0.0);
    let e_shifted = conserved::bohlin_energies(&s0, &p).e_shifted;
    let z0 = bohlin_forward(s0.q);
    let zdot0 = bohlin_velocity_map(s0.q, s0.v)?;
    let mut kepler_ctx = RhsContext::new(p);
    kepler_ctx.kepler_energy = Some(e_shifted);
    let kepler_cfg = IntegratorConfig {
        t_end: reference.kepler_time(20.0),
        ..IntegratorConfig::default()
    };
    let kepler = integrate(
        SystemId::BohlinKepler2D,
        0.0,
        &[z0.x, z0.y, zdot0.x, zdot0.y],
        &kepler_ctx,
        &kepler_cfg,
    )?;
    if kepler.status != Status::Completed {
        return Err(Error::CheckFailed(format!(
            "Kepler leg ended with {:?}",
            kepler.status
        )));
    }

    let mut worst = 0.0_f64;
    for s in &shifted.samples {
        let omega = Coord2::new(s.state[0], s.state[1]);
        let z = bohlin_forward(omega);
        let Some(direct) = resample_state(&kepler, reference.kepler_time(s.time)) else {
            continue;
        };
        let dev = ((z.x - direct[0]).powi(2) + (z.y - direct[1]).powi(2)).sqrt();
        worst = worst.max(dev);
    }
    Ok(worst)
}

fn shifted_ho_match() -> Result<f64> {
    // Two routes to the shifted oscillator: the damped leg carried through
    // the point transform, and a direct numeric integration; both against
    // the closed form.
    let (p, q0, v0) = bohlin_params();
    let shift = 0.5 * p.lambda;
    let x0 = q0;
    let xv0 = [v0[0] + shift * q0[0], v0[1] + shift * q0[1]];
    let reference = oracle::ShiftedHo::new(p.shifted_omega_sq().sqrt(), x0, xv0);
    let cfg = IntegratorConfig {
        t_end: 20.0,
        ..IntegratorConfig::default()
    };

    let mut worst = 0.0_f64;
    let damped = integrate(
        SystemId::DampedHO2D,
        0.0,
        &[q0[0], q0[1], v0[0], v0[1]],
        &RhsContext::new(p),
        &cfg,
    )?;
    for s in &damped.samples {
        let mapped = damp_to_autonomous(
            &PhaseState::new(
                Coord2::new(s.state[0], s.state[1]),
                Coord2::new(s.state[2], s.state[3]),
                s.time,
            ),
            &p,
        );
        let q_ref = reference.position(s.time);
        worst =
            worst.max(((mapped.q.x - q_ref[0]).powi(2) + (mapped.q.y - q_ref[1]).powi(2)).sqrt());
    }

    let shifted = integrate(
        SystemId::ShiftedHO2D,
        0.0,
        &[x0[0], x0[1], xv0[0], xv0[1]],
        &RhsContext::new(p),
        &cfg,
    )?;
    for s in &shifted.samples {
        let q_ref = reference.position(s.time);
        worst = worst.max(((s.state[0] - q_ref[0]).powi(2) + (s.state[1] - q_ref[1]).powi(2)).sqrt());
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Suite assembly and execution
// ---------------------------------------------------------------------------

/// Run one check with the given global seed.
pub fn run_check(spec: &CheckSpec, seed: u64) -> CheckResult {
    let start = Instant::now();
    let mut rng = check_rng(seed, &spec.name);
    let outcome = catch_unwind(AssertUnwindSafe(|| run_task(&spec.task, &mut rng)));
    let seconds = start.elapsed().as_secs_f64();
    let (measured, error) = match outcome {
        Ok(Ok(v)) => (Some(v), None),
        Ok(Err(e)) => (None, Some(e.to_string())),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            (None, Some(format!("panicked: {msg}")))
        }
    };
    let pass = matches!(measured, Some(v) if v.is_finite() && v <= spec.tolerance);
    CheckResult {
        name: spec.name.clone(),
        kind: spec.kind,
        measured,
        tolerance: spec.tolerance,
        pass,
        seconds,
        error,
    }
}

/// The canonical suite: algebraic identities, the three integration
/// round-trips (with the damping and exponent sweeps), collision passage,
/// λ→0 reductions, the homogeneous-Hamiltonian equivalence, the Bohlin
/// chain, and the conservation checks.
pub fn standard_suite() -> Vec<CheckSpec> {
    use CheckKind::*;
    use CheckTask::*;
    let mut v = vec![
        CheckSpec::new("algebra_lc_matrix_orthogonality", AlgebraicIdentity, 1e-13, LcMatrixOrthogonality),
        CheckSpec::new("algebra_ks_matrix_orthogonality", AlgebraicIdentity, 1e-13, KsMatrixOrthogonality),
        CheckSpec::new("algebra_gen_lc_matrix_scaling", AlgebraicIdentity, 1e-13, GenLcMatrixScaling),
        CheckSpec::new("algebra_perm2_commute", AlgebraicIdentity, 1e-15, Perm2Commutation),
        CheckSpec::new("algebra_perm4_noncommuting_pair_1_2", AlgebraicIdentity, 1e-15, Perm4NonCommutingPair),
        CheckSpec::new("algebra_perm_column_orthogonality", AlgebraicIdentity, 1e-13, PermColumnOrthogonality),
        CheckSpec::new("algebra_quaternion_product", AlgebraicIdentity, 1e-13, QuaternionAlgebra),
        CheckSpec::new("algebra_gen_lc_dual_route", AlgebraicIdentity, 1e-13, GenLcDualRoute),
        CheckSpec::new("map_roundtrip_lc", AlgebraicIdentity, 1e-13, LcMapRoundTrip),
        CheckSpec::new("map_roundtrip_ks", AlgebraicIdentity, 1e-13, KsMapRoundTrip),
        CheckSpec::new("ks_velocity_map_bilinear", AlgebraicIdentity, 1e-13, KsVelocityBilinear),
        CheckSpec::new("time_rate_powerlaw_n1_equals_lc", AlgebraicIdentity, 1e-14, TimeRatePowerLawMatchesLc),
        CheckSpec::new("branch_continuity_lc", AlgebraicIdentity, 1e-12, BranchContinuity { family: OscFamily::LeviCivita }),
        CheckSpec::new("branch_continuity_gen_lc", AlgebraicIdentity, 1e-12, BranchContinuity { family: OscFamily::GenLeviCivita }),
        CheckSpec::new("branch_continuity_ks", AlgebraicIdentity, 1e-12, BranchContinuity { family: OscFamily::KustaanheimoStiefel }),
        CheckSpec::new("energy_cross_coordinates_lc", AlgebraicIdentity, 1e-10, EnergyCrossCoordinates { family: OscFamily::LeviCivita }),
        CheckSpec::new("energy_cross_coordinates_gen_lc", AlgebraicIdentity, 1e-10, EnergyCrossCoordinates { family: OscFamily::GenLeviCivita }),
        CheckSpec::new("energy_cross_coordinates_ks", AlgebraicIdentity, 1e-10, EnergyCrossCoordinates { family: OscFamily::KustaanheimoStiefel }),
        CheckSpec::new("roundtrip_lc_lambda_0", RoundTrip, 1e-8, PairRoundTrip { scenario: lc_scenario(0.0) }),
        CheckSpec::new("roundtrip_lc_lambda_0.01", RoundTrip, 1e-6, PairRoundTrip { scenario: lc_scenario(0.01) }),
        CheckSpec::new("roundtrip_lc_lambda_0.1", RoundTrip, 1e-6, PairRoundTrip { scenario: lc_scenario(0.1) }),
        CheckSpec::new("roundtrip_ks_lambda_0.01", RoundTrip, 1e-6, PairRoundTrip { scenario: ks_scenario(0.01) }),
        CheckSpec::new("ks_bilinear_drift", RoundTrip, 1e-10, KsBilinearDrift),
        CheckSpec::new("point_transform_consistency_kepler2d", RoundTrip, 1e-7, PointTransformConsistency { damped: SystemId::DampedKepler2D }),
        CheckSpec::new("point_transform_consistency_powerlaw2d", RoundTrip, 1e-7, PointTransformConsistency { damped: SystemId::DampedPowerLaw2D }),
        CheckSpec::new("point_transform_consistency_kepler3d", RoundTrip, 1e-7, PointTransformConsistency { damped: SystemId::DampedKepler3D }),
        CheckSpec::new("conservation_energy_kepler2d", ConservationDrift, 1e-9, EnergyDrift { sys: SystemId::AutonomousKepler2D }),
        CheckSpec::new("conservation_angmom_kepler2d", ConservationDrift, 1e-10, AngularMomentumDrift { sys: SystemId::AutonomousKepler2D }),
        CheckSpec::new("conservation_energy_powerlaw2d", ConservationDrift, 1e-9, EnergyDrift { sys: SystemId::AutonomousPowerLaw2D }),
        CheckSpec::new("conservation_angmom_powerlaw2d", ConservationDrift, 1e-10, AngularMomentumDrift { sys: SystemId::AutonomousPowerLaw2D }),
        CheckSpec::new("conservation_energy_kepler3d", ConservationDrift, 1e-9, EnergyDrift { sys: SystemId::AutonomousKepler3D }),
        CheckSpec::new("conservation_angmom_kepler3d", ConservationDrift, 1e-10, AngularMomentumDrift { sys: SystemId::AutonomousKepler3D }),
        CheckSpec::new("conservation_h_oscillator_ks", ConservationDrift, 1e-9, OscillatorHamiltonianDrift),
        CheckSpec::new("limit_lc_sho_field", LimitReduction, 1e-13, LcShoField),
        CheckSpec::new("limit_ks_sho_field", LimitReduction, 1e-13, KsShoField),
        CheckSpec::new("limit_gen_lc_n1_equals_lc", LimitReduction, 1e-12, GenLcN1EqualsLc),
        CheckSpec::new("limit_damped_kepler_classical", LimitReduction, 1e-13, DampedKeplerClassicalLimit),
        CheckSpec::new("limit_analytic_ellipse_lc", LimitReduction, 1e-6, AnalyticEllipse { family: OscFamily::LeviCivita }),
        CheckSpec::new("limit_analytic_ellipse_ks", LimitReduction, 1e-6, AnalyticEllipse { family: OscFamily::KustaanheimoStiefel }),
        CheckSpec::new("collision_passage_2d", CollisionPassage, 1e-6, CheckTask::CollisionPassage { spatial: false }),
        CheckSpec::new("collision_passage_3d", CollisionPassage, 1e-6, CheckTask::CollisionPassage { spatial: true }),
        CheckSpec::new("hamiltonian_homogeneous_identity", HamiltonianEquivalence, 1e-13, HomogeneousIdentity),
        CheckSpec::new("hamiltonian_sextic_value_4k", HamiltonianEquivalence, 1e-8, Homogeneous4kValue),
        CheckSpec::new("bohlin_kepler_energy", BohlinEnergy, 1e-8, BohlinKeplerEnergy),
        CheckSpec::new("bohlin_strength_identification", BohlinEnergy, 1e-8, BohlinStrengthIdentification),
        CheckSpec::new("bohlin_orbit_match", BohlinEnergy, 1e-6, BohlinOrbitMatch),
        CheckSpec::new("bohlin_shifted_ho_match", BohlinEnergy, 1e-8, ShiftedHoMatch),
    ];
    for n in 0..=3u32 {
        for lambda in [0.0, 0.01, 0.1] {
            v.push(CheckSpec::new(
                &format!("roundtrip_powerlaw_n{n}_lambda_{lambda}"),
                CheckKind::RoundTrip,
                1e-6,
                CheckTask::PairRoundTrip {
                    scenario: powerlaw_scenario(n, lambda),
                },
            ));
        }
    }
    v
}

/// Execute checks (optionally in parallel) and assemble the report in suite
/// order. Measured values depend only on the seed, never on thread count.
pub fn run_suite(specs: &[CheckSpec], seed: u64, threads: usize) -> VerificationReport {
    let threads = threads.max(1).min(specs.len().max(1));
    let results: Vec<Mutex<Option<CheckResult>>> =
        specs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= specs.len() {
                    break;
                }
                let result = run_check(&specs[i], seed);
                *results[i].lock().expect("result slot") = Some(result);
            });
        }
    });

    let checks = results
        .into_iter()
        .map(|m| m.into_inner().expect("slot").expect("check executed"))
        .collect();
    VerificationReport { seed, checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kepler_oracle_matches_integration() {
        let p = SystemParams::default();
        let ctx = RhsContext::new(p);
        let cfg = IntegratorConfig {
            t_end: 7.0,
            ..IntegratorConfig::default()
        };
        let q0 = [1.0, 0.0];
        let v0 = [0.0, 0.8];
        let traj = integrate(
            SystemId::AutonomousKepler2D,
            0.0,
            &[q0[0], q0[1], v0[0], v0[1]],
            &ctx,
            &cfg,
        )
        .unwrap();
        let end = traj.final_sample();
        let (q_ref, v_ref) = oracle::kepler_propagate(1.0, &q0, &v0, 7.0);
        for i in 0..2 {
            assert!((end.state[i] - q_ref[i]).abs() < 1e-9, "position {i}");
            assert!((end.state[2 + i] - v_ref[i]).abs() < 1e-9, "velocity {i}");
        }
    }

    #[test]
    fn shifted_ho_oracle_kepler_time_rate() {
        let sol = oracle::ShiftedHo::new(0.99499, [1.0, 0.0], [0.1, 0.6]);
        // dt_K/dτ = 4|x|², checked by finite differences.
        for tau in [0.3, 1.1, 2.7] {
            let h = 1e-6;
            let rate = (sol.kepler_time(tau + h) - sol.kepler_time(tau - h)) / (2.0 * h);
            let x = sol.position(tau);
            let expect = 4.0 * (x[0] * x[0] + x[1] * x[1]);
            assert!((rate - expect).abs() < 1e-7, "τ = {tau}");
        }
    }

    #[test]
    fn suite_covers_every_system_and_is_large_enough() {
        let suite = standard_suite();
        assert!(suite.len() >= 20, "suite has {} checks", suite.len());
        let mut names = std::collections::HashSet::new();
        for spec in &suite {
            assert!(names.insert(spec.name.clone()), "duplicate name {}", spec.name);
        }
        for sys in SystemId::ALL {
            let covered = suite.iter().any(|c| c.systems().contains(&sys));
            assert!(covered, "{sys:?} not covered by any check");
        }
    }

    #[test]
    fn failing_check_is_reported_not_fatal() {
        // The K-S inverse goes through square roots, so its round-trip error
        // is tiny but never exactly zero; 1e-300 is unreachable.
        let impossible = CheckSpec::new(
            "impossible_tolerance",
            CheckKind::AlgebraicIdentity,
            1e-300,
            CheckTask::KsMapRoundTrip,
        );
        let report = run_suite(&[impossible], DEFAULT_SEED, 1);
        assert_eq!(report.checks.len(), 1);
        assert!(!report.checks[0].pass);
        assert!(!report.all_pass());
    }

    #[test]
    fn reports_are_deterministic_modulo_runtime() {
        let suite: Vec<CheckSpec> = standard_suite()
            .into_iter()
            .filter(|c| matches!(c.kind, CheckKind::AlgebraicIdentity))
            .take(6)
            .collect();
        let a = run_suite(&suite, DEFAULT_SEED, 1);
        let b = run_suite(&suite, DEFAULT_SEED, 3);
        for (x, y) in a.checks.iter().zip(&b.checks) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.measured, y.measured, "{}", x.name);
            assert_eq!(x.pass, y.pass);
        }
    }
}
