//! Quaternion arithmetic, the Levi-Civita and Kustaanheimo-Stiefel coordinate
//! matrices, signed permutation operators, and the iterated LC matrix
//! recursion. Everything here is a pure function of its inputs.

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Coordinate vectors
// ---------------------------------------------------------------------------

/// A planar coordinate pair, also read as the complex number `x + i y`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Coord2 {
    pub x: f64,
    pub y: f64,
}

/// A spatial coordinate triple.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Coord3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// A four-component coordinate vector (the regularized K-S position).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Coord4(pub [f64; 4]);

impl Coord2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Complex product of `self` and `rhs`.
    pub fn cmul(self, rhs: Coord2) -> Coord2 {
        Coord2::new(self.x * rhs.x - self.y * rhs.y, self.x * rhs.y + self.y * rhs.x)
    }

    /// Complex conjugate.
    pub fn conj(self) -> Coord2 {
        Coord2::new(self.x, -self.y)
    }

    /// Complex quotient `self / rhs`.
    pub fn cdiv(self, rhs: Coord2) -> Result<Coord2> {
        let d = rhs.norm_sq();
        if d == 0.0 {
            return Err(Error::Singular("complex division by zero"));
        }
        Ok(self.cmul(rhs.conj()).scale(1.0 / d))
    }

    /// Integer complex power `self^n`.
    pub fn cpow(self, n: u32) -> Coord2 {
        let mut acc = Coord2::new(1.0, 0.0);
        for _ in 0..n {
            acc = acc.cmul(self);
        }
        acc
    }

    /// Principal `n`-th complex root: argument in `(-π/n, π/n]`.
    ///
    /// The branch is fixed so that for `n = 2` the result has a non-negative
    /// real part, with a non-negative imaginary part when the real part
    /// vanishes.
    pub fn croot(self, n: u32) -> Coord2 {
        assert!(n >= 1);
        let r = self.norm();
        if r == 0.0 {
            return Coord2::default();
        }
        // Collapse -0.0 so the negative real axis maps to the upper branch.
        let y = if self.y == 0.0 { 0.0 } else { self.y };
        let theta = y.atan2(self.x) / n as f64;
        let rho = r.powf(1.0 / n as f64);
        Coord2::new(rho * theta.cos(), rho * theta.sin())
    }
}

impl Coord3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn cross(self, o: Coord3) -> Coord3 {
        Coord3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }
}

impl Coord4 {
    pub fn new(u0: f64, u1: f64, u2: f64, u3: f64) -> Self {
        Self([u0, u1, u2, u3])
    }
}

/// Shared small-vector interface for the fixed-dimension coordinate types.
pub trait CoordVec: Copy {
    const DIM: usize;
    fn zero() -> Self;
    fn get(&self, i: usize) -> f64;
    fn set(&mut self, i: usize, v: f64);

    fn from_slice(s: &[f64]) -> Self {
        assert_eq!(s.len(), Self::DIM);
        let mut out = Self::zero();
        for (i, v) in s.iter().enumerate() {
            out.set(i, *v);
        }
        out
    }

    fn write_to(&self, s: &mut [f64]) {
        for i in 0..Self::DIM {
            s[i] = self.get(i);
        }
    }

    fn to_vec(&self) -> Vec<f64> {
        (0..Self::DIM).map(|i| self.get(i)).collect()
    }

    fn scale(&self, f: f64) -> Self {
        let mut out = *self;
        for i in 0..Self::DIM {
            out.set(i, self.get(i) * f);
        }
        out
    }

    fn add(&self, o: &Self) -> Self {
        let mut out = *self;
        for i in 0..Self::DIM {
            out.set(i, self.get(i) + o.get(i));
        }
        out
    }

    fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    fn dot(&self, o: &Self) -> f64 {
        (0..Self::DIM).map(|i| self.get(i) * o.get(i)).sum()
    }

    fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

impl CoordVec for Coord2 {
    const DIM: usize = 2;
    fn zero() -> Self {
        Coord2::default()
    }
    fn get(&self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => panic!("Coord2 index {i}"),
        }
    }
    fn set(&mut self, i: usize, v: f64) {
        match i {
            0 => self.x = v,
            1 => self.y = v,
            _ => panic!("Coord2 index {i}"),
        }
    }
}

impl CoordVec for Coord3 {
    const DIM: usize = 3;
    fn zero() -> Self {
        Coord3::default()
    }
    fn get(&self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("Coord3 index {i}"),
        }
    }
    fn set(&mut self, i: usize, v: f64) {
        match i {
            0 => self.x = v,
            1 => self.y = v,
            2 => self.z = v,
            _ => panic!("Coord3 index {i}"),
        }
    }
}

impl CoordVec for Coord4 {
    const DIM: usize = 4;
    fn zero() -> Self {
        Coord4::default()
    }
    fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
    fn set(&mut self, i: usize, v: f64) {
        self.0[i] = v;
    }
}

// ---------------------------------------------------------------------------
// Quaternions
// ---------------------------------------------------------------------------

/// A quaternion `u0 + u1 i + u2 j + u3 k` with `i² = j² = k² = -1` and
/// `i·j = k`, `j·k = i`, `k·i = j`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quaternion {
    pub u0: f64,
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
}

impl Quaternion {
    pub fn new(u0: f64, u1: f64, u2: f64, u3: f64) -> Self {
        Self { u0, u1, u2, u3 }
    }

    pub fn norm_sq(self) -> f64 {
        self.u0 * self.u0 + self.u1 * self.u1 + self.u2 * self.u2 + self.u3 * self.u3
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Quaternion conjugate: negates all three imaginary components.
    pub fn conj(self) -> Self {
        Self::new(self.u0, -self.u1, -self.u2, -self.u3)
    }

    /// Star involution: negates only the `k` component.
    pub fn star(self) -> Self {
        Self::new(self.u0, self.u1, self.u2, -self.u3)
    }
}

impl std::ops::Mul for Quaternion {
    type Output = Quaternion;

    /// Hamilton product.
    fn mul(self, r: Quaternion) -> Quaternion {
        Quaternion::new(
            self.u0 * r.u0 - self.u1 * r.u1 - self.u2 * r.u2 - self.u3 * r.u3,
            self.u0 * r.u1 + self.u1 * r.u0 + self.u2 * r.u3 - self.u3 * r.u2,
            self.u0 * r.u2 - self.u1 * r.u3 + self.u2 * r.u0 + self.u3 * r.u1,
            self.u0 * r.u3 + self.u1 * r.u2 - self.u2 * r.u1 + self.u3 * r.u0,
        )
    }
}

impl From<Coord4> for Quaternion {
    fn from(c: Coord4) -> Self {
        Quaternion::new(c.0[0], c.0[1], c.0[2], c.0[3])
    }
}

impl From<Quaternion> for Coord4 {
    fn from(q: Quaternion) -> Self {
        Coord4::new(q.u0, q.u1, q.u2, q.u3)
    }
}

// ---------------------------------------------------------------------------
// Small dense matrices
// ---------------------------------------------------------------------------

/// Row-major 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix2(pub [[f64; 2]; 2]);

/// Row-major 4x4 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix4(pub [[f64; 4]; 4]);

macro_rules! impl_matrix {
    ($name:ident, $vec:ident, $n:expr) => {
        impl $name {
            pub fn identity() -> Self {
                let mut m = [[0.0; $n]; $n];
                for i in 0..$n {
                    m[i][i] = 1.0;
                }
                Self(m)
            }

            pub fn transpose(&self) -> Self {
                let mut m = [[0.0; $n]; $n];
                for i in 0..$n {
                    for j in 0..$n {
                        m[i][j] = self.0[j][i];
                    }
                }
                Self(m)
            }

            pub fn mul_vec(&self, v: &$vec) -> $vec {
                let mut out = $vec::zero();
                for i in 0..$n {
                    let mut acc = 0.0;
                    for j in 0..$n {
                        acc += self.0[i][j] * v.get(j);
                    }
                    out.set(i, acc);
                }
                out
            }

            pub fn mul_mat(&self, o: &Self) -> Self {
                let mut m = [[0.0; $n]; $n];
                for i in 0..$n {
                    for j in 0..$n {
                        let mut acc = 0.0;
                        for k in 0..$n {
                            acc += self.0[i][k] * o.0[k][j];
                        }
                        m[i][j] = acc;
                    }
                }
                Self(m)
            }

            pub fn scale(&self, f: f64) -> Self {
                let mut m = self.0;
                for row in m.iter_mut() {
                    for v in row.iter_mut() {
                        *v *= f;
                    }
                }
                Self(m)
            }

            pub fn sub(&self, o: &Self) -> Self {
                let mut m = self.0;
                for i in 0..$n {
                    for j in 0..$n {
                        m[i][j] -= o.0[i][j];
                    }
                }
                Self(m)
            }

            /// Largest absolute entry; handy for identity checks.
            pub fn max_abs(&self) -> f64 {
                self.0
                    .iter()
                    .flatten()
                    .fold(0.0_f64, |a, v| a.max(v.abs()))
            }
        }
    };
}

impl_matrix!(Matrix2, Coord2, 2);
impl_matrix!(Matrix4, Coord4, 4);

// ---------------------------------------------------------------------------
// Coordinate matrices and permutation operators
// ---------------------------------------------------------------------------

/// The planar Levi-Civita coordinate matrix
/// `A(U) = [[U1, -U2], [U2, U1]]`, i.e. the matrix of complex
/// multiplication by `U`. Satisfies `A(U)ᵀ A(U) = |U|² I`.
pub fn lc_matrix(u: Coord2) -> Matrix2 {
    Matrix2([[u.x, -u.y], [u.y, u.x]])
}

/// The K-S coordinate matrix whose columns are the four signed permutations
/// of `U`. Satisfies `A(U)ᵀ A(U) = |U|² I`.
pub fn ks_matrix(u: Coord4) -> Matrix4 {
    let [u0, u1, u2, u3] = u.0;
    Matrix4([
        [u0, -u1, -u2, u3],
        [u1, u0, -u3, -u2],
        [u2, u3, u0, u1],
        [u3, -u2, u1, -u0],
    ])
}

/// Planar signed permutation `P⁽ⁱ⁾U`, `index ∈ {1, 2}`:
/// `P⁽¹⁾U = (U1, U2)`, `P⁽²⁾U = (-U2, U1)`.
pub fn perm2_apply(index: usize, u: Coord2) -> Result<Coord2> {
    match index {
        1 => Ok(u),
        2 => Ok(Coord2::new(-u.y, u.x)),
        _ => Err(Error::PermutationIndex { family: "2D", index }),
    }
}

/// Matrix form of [`perm2_apply`].
pub fn perm2_matrix(index: usize) -> Result<Matrix2> {
    match index {
        1 => Ok(Matrix2::identity()),
        2 => Ok(Matrix2([[0.0, -1.0], [1.0, 0.0]])),
        _ => Err(Error::PermutationIndex { family: "2D", index }),
    }
}

/// Spatial signed permutation `P⁽ⁱ⁾U`, `index ∈ {0..3}`; these are exactly
/// the columns of [`ks_matrix`]. Unlike the planar pair, the four operators
/// do not all commute.
pub fn perm4_apply(index: usize, u: Coord4) -> Result<Coord4> {
    let [u0, u1, u2, u3] = u.0;
    match index {
        0 => Ok(Coord4::new(u0, u1, u2, u3)),
        1 => Ok(Coord4::new(-u1, u0, u3, -u2)),
        2 => Ok(Coord4::new(-u2, -u3, u0, u1)),
        3 => Ok(Coord4::new(u3, -u2, u1, -u0)),
        _ => Err(Error::PermutationIndex { family: "4D", index }),
    }
}

/// Matrix form of [`perm4_apply`].
pub fn perm4_matrix(index: usize) -> Result<Matrix4> {
    // Build columns by applying the permutation to basis vectors.
    let mut m = [[0.0; 4]; 4];
    for j in 0..4 {
        let mut e = Coord4::zero();
        e.set(j, 1.0);
        let col = perm4_apply(index, e)?;
        for i in 0..4 {
            m[i][j] = col.get(i);
        }
    }
    Ok(Matrix4(m))
}

/// The iterated Levi-Civita matrix `Û_N` defined by the recursion
/// `Û_0 = I`, `U⁽ᴺ⁾ = Û_{N-1} U`, `Û_N = (P⁽¹⁾U⁽ᴺ⁾, P⁽²⁾U⁽ᴺ⁾)`
/// (columns). `Û_1 = A(U)` and `Û_Nᵀ Û_N = R^{2N} I` with `R = |U|`.
pub fn gen_lc_matrix(u: Coord2, n: u32) -> Matrix2 {
    let mut uhat = Matrix2::identity();
    for _ in 0..n {
        let un = uhat.mul_vec(&u);
        let c1 = perm2_apply(1, un).expect("index 1 is valid");
        let c2 = perm2_apply(2, un).expect("index 2 is valid");
        uhat = Matrix2([[c1.x, c2.x], [c1.y, c2.y]]);
    }
    uhat
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn q(a: f64, b: f64, c: f64, d: f64) -> Quaternion {
        Quaternion::new(a, b, c, d)
    }

    #[test]
    fn quaternion_unit_products() {
        let i = q(0.0, 1.0, 0.0, 0.0);
        let j = q(0.0, 0.0, 1.0, 0.0);
        let k = q(0.0, 0.0, 0.0, 1.0);
        assert_eq!(i * j, k);
        assert_eq!(j * k, i);
        assert_eq!(k * i, j);
        assert_eq!(i * i, q(-1.0, 0.0, 0.0, 0.0));
        assert_eq!(j * j, q(-1.0, 0.0, 0.0, 0.0));
        assert_eq!(k * k, q(-1.0, 0.0, 0.0, 0.0));
        // i·j = -j·i
        assert_eq!(j * i, q(0.0, 0.0, 0.0, -1.0));
    }

    #[test]
    fn quaternion_identity_element() {
        let one = q(1.0, 0.0, 0.0, 0.0);
        let v = q(0.3, -1.2, 2.5, 0.7);
        assert_eq!(one * v, v);
        assert_eq!(v * one, v);
    }

    #[test]
    fn conj_and_star() {
        let v = q(1.0, 2.0, 3.0, 4.0);
        assert_eq!(v.conj(), q(1.0, -2.0, -3.0, -4.0));
        assert_eq!(v.star(), q(1.0, 2.0, 3.0, -4.0));
        assert_eq!(q(1.0, 0.0, 0.0, 0.0).conj(), q(1.0, 0.0, 0.0, 0.0));
        assert_eq!(v.conj().conj(), v);
        assert_eq!(v.star().star(), v);
    }

    #[test]
    fn lc_matrix_examples() {
        assert_eq!(lc_matrix(Coord2::new(1.0, 0.0)), Matrix2::identity());
        assert_eq!(
            lc_matrix(Coord2::new(0.0, 1.0)),
            Matrix2([[0.0, -1.0], [1.0, 0.0]])
        );
    }

    #[test]
    fn lc_matrix_orthogonality_scaling() {
        // Oracle: explicit AᵀA against |U|² I.
        let u = Coord2::new(0.37, -1.91);
        let a = lc_matrix(u);
        let prod = a.transpose().mul_mat(&a);
        let expected = Matrix2::identity().scale(u.norm_sq());
        assert!(prod.sub(&expected).max_abs() < 1e-15 * u.norm_sq());
    }

    #[test]
    fn ks_matrix_at_unit_quaternion() {
        // The classical K-S matrix is orthogonal but not the identity at the
        // unit quaternion: its last column is the fiber direction.
        let a = ks_matrix(Coord4::new(1.0, 0.0, 0.0, 0.0));
        let mut expect = Matrix4::identity();
        expect.0[3][3] = -1.0;
        assert_eq!(a, expect);
        assert_eq!(a.transpose().mul_mat(&a), Matrix4::identity());
    }

    #[test]
    fn ks_matrix_columns_are_permutations() {
        let u = Coord4::new(0.4, -1.3, 2.2, 0.9);
        let a = ks_matrix(u);
        for j in 0..4 {
            let col = perm4_apply(j, u).unwrap();
            for i in 0..4 {
                assert_eq!(a.0[i][j], col.get(i), "column {j}, row {i}");
            }
        }
    }

    #[test]
    fn perm_examples_and_range_errors() {
        let u = Coord2::new(3.0, 7.0);
        assert_eq!(perm2_apply(1, u).unwrap(), u);
        assert_eq!(perm2_apply(2, u).unwrap(), Coord2::new(-7.0, 3.0));
        assert!(perm2_apply(0, u).is_err());
        assert!(perm2_apply(3, u).is_err());

        let e0 = Coord4::new(1.0, 0.0, 0.0, 0.0);
        assert_eq!(perm4_apply(3, e0).unwrap(), Coord4::new(0.0, 0.0, 0.0, -1.0));
        assert!(perm4_apply(4, e0).is_err());
    }

    #[test]
    fn perm_orthonormality() {
        // The permutation images of any U are mutually orthogonal with norm
        // |U| — the column-orthogonality behind AᵀA = |U|²I. Each operator is
        // itself orthogonal, and for i ≠ j the product P⁽ⁱ⁾ᵀP⁽ʲ⁾ is
        // antisymmetric (which is exactly why U·(P⁽ⁱ⁾ᵀP⁽ʲ⁾U) = 0 for all U).
        let u2 = Coord2::new(0.83, -1.44);
        for i in 1..=2 {
            let pi = perm2_matrix(i).unwrap();
            assert_eq!(pi.transpose().mul_mat(&pi), Matrix2::identity());
            for j in 1..=2 {
                let dot = perm2_apply(i, u2).unwrap().dot(&perm2_apply(j, u2).unwrap());
                let expect = if i == j { u2.norm_sq() } else { 0.0 };
                assert!((dot - expect).abs() <= 1e-15 * u2.norm_sq(), "2D pair ({i},{j})");
            }
        }
        let u4 = Coord4::new(0.5, -1.2, 0.9, 2.1);
        for i in 0..4 {
            let pi = perm4_matrix(i).unwrap();
            assert_eq!(pi.transpose().mul_mat(&pi), Matrix4::identity());
            for j in 0..4 {
                let dot = perm4_apply(i, u4).unwrap().dot(&perm4_apply(j, u4).unwrap());
                let expect = if i == j { u4.norm_sq() } else { 0.0 };
                assert!((dot - expect).abs() <= 1e-15 * u4.norm_sq(), "4D pair ({i},{j})");
                if i != j {
                    let m = pi.transpose().mul_mat(&perm4_matrix(j).unwrap());
                    let sym = m.sub(&m.transpose().scale(-1.0));
                    assert_eq!(sym.max_abs(), 0.0, "product ({i},{j}) must be antisymmetric");
                }
            }
        }
    }

    #[test]
    fn perm2_commute_perm4_do_not() {
        let p1 = perm2_matrix(1).unwrap();
        let p2 = perm2_matrix(2).unwrap();
        assert_eq!(p1.mul_mat(&p2), p2.mul_mat(&p1));

        // Exhibit a specific non-commuting spatial pair: (1, 2) anticommute.
        let q1 = perm4_matrix(1).unwrap();
        let q2 = perm4_matrix(2).unwrap();
        let ab = q1.mul_mat(&q2);
        let ba = q2.mul_mat(&q1);
        assert!(ab.sub(&ba).max_abs() > 1.0);
        assert!(ab.sub(&ba.scale(-1.0)).max_abs() == 0.0);
    }

    #[test]
    fn gen_lc_matrix_base_cases() {
        let u = Coord2::new(0.8, -0.45);
        assert_eq!(gen_lc_matrix(u, 0), Matrix2::identity());
        assert_eq!(gen_lc_matrix(u, 1), lc_matrix(u));
    }

    #[test]
    fn gen_lc_matrix_scaling() {
        let u = Coord2::new(-1.2, 0.7);
        let r2 = u.norm_sq();
        for n in 0..=4u32 {
            let m = gen_lc_matrix(u, n);
            let prod = m.transpose().mul_mat(&m);
            let scale = r2.powi(n as i32);
            let dev = prod.sub(&Matrix2::identity().scale(scale)).max_abs();
            assert!(dev <= 1e-13 * scale.max(1e-300), "N={n}: dev {dev}");
            // Û_N Û_Nᵀ carries the same scaling.
            let prod2 = m.mul_mat(&m.transpose());
            assert!(prod2.sub(&Matrix2::identity().scale(scale)).max_abs() <= 1e-13 * scale);
        }
    }

    proptest! {
        #[test]
        fn quat_mul_is_associative_and_norm_multiplicative(
            a in proptest::array::uniform4(-10.0f64..10.0),
            b in proptest::array::uniform4(-10.0f64..10.0),
            c in proptest::array::uniform4(-10.0f64..10.0),
        ) {
            let qa = q(a[0], a[1], a[2], a[3]);
            let qb = q(b[0], b[1], b[2], b[3]);
            let qc = q(c[0], c[1], c[2], c[3]);
            let lhs = (qa * qb) * qc;
            let rhs = qa * (qb * qc);
            let scale = qa.norm() * qb.norm() * qc.norm() + 1.0;
            prop_assert!((lhs.u0 - rhs.u0).abs() <= 1e-12 * scale);
            prop_assert!((lhs.u1 - rhs.u1).abs() <= 1e-12 * scale);
            prop_assert!((lhs.u2 - rhs.u2).abs() <= 1e-12 * scale);
            prop_assert!((lhs.u3 - rhs.u3).abs() <= 1e-12 * scale);

            let n = (qa * qb).norm();
            prop_assert!((n - qa.norm() * qb.norm()).abs() <= 1e-12 * (n + 1.0));
        }

        #[test]
        fn ks_matrix_orthogonality(u in proptest::array::uniform4(-100.0f64..100.0)) {
            let u = Coord4::new(u[0], u[1], u[2], u[3]);
            let a = ks_matrix(u);
            let prod = a.transpose().mul_mat(&a);
            let dev = prod.sub(&Matrix4::identity().scale(u.norm_sq())).max_abs();
            prop_assert!(dev <= 1e-13 * u.norm_sq().max(1e-12));
        }

        #[test]
        fn croot_inverts_cpow(x in -5.0f64..5.0, y in -5.0f64..5.0, n in 1u32..5) {
            let z = Coord2::new(x, y);
            let u = z.croot(n);
            let back = u.cpow(n);
            prop_assert!((back.x - z.x).abs() <= 1e-12 * (z.norm() + 1.0));
            prop_assert!((back.y - z.y).abs() <= 1e-12 * (z.norm() + 1.0));
        }
    }

    #[test]
    fn croot_principal_branch() {
        // Square root of -1 must sit on the positive imaginary axis.
        let u = Coord2::new(-1.0, 0.0).croot(2);
        assert_relative_eq!(u.x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(u.y, 1.0, epsilon = 1e-15);
        // Same for a negative real carried with a -0.0 imaginary part.
        let u = Coord2::new(-4.0, -0.0).croot(2);
        assert_relative_eq!(u.y, 2.0, epsilon = 1e-14);
    }
}
