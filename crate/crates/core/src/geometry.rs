//! Vectors, rotation matrices, and the two angle parameterizations the model
//! runs on.
//!
//! Conventions (right-handed, world frame x/y/z):
//!
//! * a direction with azimuth `alpha` and elevation `beta` maps to the unit
//!   vector `[cos(beta)cos(alpha), cos(beta)sin(alpha), sin(beta)]`;
//! * fuselage attitude is roll `omega` about z, yaw `phi` about y and pitch
//!   `gamma` about x, composed as `R_z(omega) * R_y(phi) * R_x(gamma)`;
//! * a terminal's travel frame is described by the velocity rotation matrix
//!   built from the heading azimuth and elevation.

use crate::{Error, Real, Result};

/// Dense 3-vector.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        debug_assert!(
            x.is_finite() && y.is_finite() && z.is_finite(),
            "vector components must be finite"
        );
        Vec3 { x, y, z }
    }

    pub fn zero() -> Self {
        Vec3 {
            x: T::zero(),
            y: T::zero(),
            z: T::zero(),
        }
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn scale(self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unit vector along `self`. Zero-length input is degenerate.
    pub fn normalized(self) -> Result<Self> {
        let n = self.norm();
        if n <= T::zero() || !n.is_finite() {
            return Err(Error::DegenerateGeometry(
                "cannot normalize a zero-length vector".into(),
            ));
        }
        Ok(self.scale(n.recip()))
    }
}

impl<T: Real> std::ops::Add for Vec3<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl<T: Real> std::ops::Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl<T: Real> std::ops::Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major proper rotation matrix.
///
/// Instances produced by the constructors in this module are orthonormal with
/// determinant +1 up to floating-point rounding (hard bound 1e-12 in f64,
/// checked by the test suite over random angle sweeps).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatrix3<T> {
    m: [[T; 3]; 3],
}

impl<T: Real> RotationMatrix3<T> {
    pub fn identity() -> Self {
        let o = T::one();
        let z = T::zero();
        RotationMatrix3 {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    /// Builds from rows, rejecting matrices that are not proper rotations.
    pub fn from_rows(rows: [[T; 3]; 3]) -> Result<Self> {
        let candidate = RotationMatrix3 { m: rows };
        let tol = T::of(1e-9);
        if candidate.orthonormality_error() > tol {
            return Err(Error::invalid("matrix rows are not orthonormal"));
        }
        if (candidate.determinant() - T::one()).abs() > tol {
            return Err(Error::invalid("matrix is not a proper rotation (det != 1)"));
        }
        Ok(candidate)
    }

    pub(crate) fn from_rows_unchecked(rows: [[T; 3]; 3]) -> Self {
        RotationMatrix3 { m: rows }
    }

    pub fn rows(&self) -> &[[T; 3]; 3] {
        &self.m
    }

    pub fn entry(&self, row: usize, col: usize) -> T {
        self.m[row][col]
    }

    pub fn transpose(&self) -> Self {
        let m = &self.m;
        RotationMatrix3 {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn determinant(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn apply(&self, v: Vec3<T>) -> Vec3<T> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// Largest absolute entry of `R * R^T - I`; zero for a perfectly
    /// orthonormal matrix.
    pub fn orthonormality_error(&self) -> T {
        let gram = *self * self.transpose();
        let mut worst = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { T::one() } else { T::zero() };
                let err = (gram.m[i][j] - target).abs();
                if err > worst {
                    worst = err;
                }
            }
        }
        worst
    }
}

impl<T: Real> std::ops::Mul for RotationMatrix3<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = [[T::zero(); 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.m[i][0] * rhs.m[0][j]
                    + self.m[i][1] * rhs.m[1][j]
                    + self.m[i][2] * rhs.m[2][j];
            }
        }
        RotationMatrix3 { m: out }
    }
}

impl<T: Real> std::ops::Mul<Vec3<T>> for RotationMatrix3<T> {
    type Output = Vec3<T>;
    fn mul(self, rhs: Vec3<T>) -> Vec3<T> {
        self.apply(rhs)
    }
}

/// Direction on the sphere: azimuth in `[0, 2*pi)` measured from +x toward
/// +y, elevation in `[-pi/2, pi/2]` measured from the horizontal plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalAngles<T> {
    azimuth: T,
    elevation: T,
}

impl<T: Real> SphericalAngles<T> {
    /// Azimuth is wrapped into `[0, 2*pi)`; elevation outside
    /// `[-pi/2, pi/2]` is rejected.
    pub fn new(azimuth: T, elevation: T) -> Result<Self> {
        if !azimuth.is_finite() || !elevation.is_finite() {
            return Err(Error::invalid("angles must be finite"));
        }
        let half_pi = T::FRAC_PI_2();
        if elevation < -half_pi || elevation > half_pi {
            return Err(Error::out_of_range(format!(
                "elevation {elevation} outside [-pi/2, pi/2]"
            )));
        }
        let tau = T::TAU();
        let mut az = azimuth % tau;
        if az < T::zero() {
            az = az + tau;
        }
        if az >= tau {
            // a tiny negative input can round back up to exactly 2*pi
            az = T::zero();
        }
        Ok(SphericalAngles {
            azimuth: az,
            elevation,
        })
    }

    pub fn azimuth(&self) -> T {
        self.azimuth
    }

    pub fn elevation(&self) -> T {
        self.elevation
    }

    /// Unit vector `[cos(el)cos(az), cos(el)sin(az), sin(el)]`.
    pub fn unit_vector(&self) -> Vec3<T> {
        angle_unit_vector(*self)
    }

    /// Recovers angles from a direction vector (not necessarily unit length).
    pub fn from_vector(v: Vec3<T>) -> Result<Self> {
        let u = v.normalized()?;
        let az = u.y.atan2(u.x);
        let el = u.z.max(-T::one()).min(T::one()).asin();
        SphericalAngles::new(az, el)
    }
}

/// Fuselage attitude: roll about z in `[-pi, pi]`, yaw about y in
/// `[0, 2*pi)`, pitch about x in `[-pi, pi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PostureAngles<T> {
    roll: T,
    yaw: T,
    pitch: T,
}

impl<T: Real> PostureAngles<T> {
    pub fn new(roll: T, yaw: T, pitch: T) -> Result<Self> {
        if !roll.is_finite() || !yaw.is_finite() || !pitch.is_finite() {
            return Err(Error::invalid("posture angles must be finite"));
        }
        let pi = T::PI();
        if roll < -pi || roll > pi {
            return Err(Error::out_of_range(format!("roll {roll} outside [-pi, pi]")));
        }
        if yaw < T::zero() || yaw >= T::TAU() {
            return Err(Error::out_of_range(format!("yaw {yaw} outside [0, 2*pi)")));
        }
        if pitch < -pi || pitch > pi {
            return Err(Error::out_of_range(format!(
                "pitch {pitch} outside [-pi, pi]"
            )));
        }
        Ok(PostureAngles { roll, yaw, pitch })
    }

    pub fn zero() -> Self {
        PostureAngles {
            roll: T::zero(),
            yaw: T::zero(),
            pitch: T::zero(),
        }
    }

    pub fn roll(&self) -> T {
        self.roll
    }

    pub fn yaw(&self) -> T {
        self.yaw
    }

    pub fn pitch(&self) -> T {
        self.pitch
    }

    pub fn is_zero(&self) -> bool {
        self.roll == T::zero() && self.yaw == T::zero() && self.pitch == T::zero()
    }
}

/// Elementary rotation about the x axis by `gamma`.
pub fn rotation_about_x<T: Real>(gamma: T) -> Result<RotationMatrix3<T>> {
    if !gamma.is_finite() {
        return Err(Error::invalid("rotation angle must be finite"));
    }
    let (s, c) = gamma.sin_cos();
    let o = T::one();
    let z = T::zero();
    Ok(RotationMatrix3::from_rows_unchecked([
        [o, z, z],
        [z, c, -s],
        [z, s, c],
    ]))
}

/// Elementary rotation about the y axis by `phi`.
pub fn rotation_about_y<T: Real>(phi: T) -> Result<RotationMatrix3<T>> {
    if !phi.is_finite() {
        return Err(Error::invalid("rotation angle must be finite"));
    }
    let (s, c) = phi.sin_cos();
    let o = T::one();
    let z = T::zero();
    Ok(RotationMatrix3::from_rows_unchecked([
        [c, z, s],
        [z, o, z],
        [-s, z, c],
    ]))
}

/// Elementary rotation about the z axis by `omega`.
pub fn rotation_about_z<T: Real>(omega: T) -> Result<RotationMatrix3<T>> {
    if !omega.is_finite() {
        return Err(Error::invalid("rotation angle must be finite"));
    }
    let (s, c) = omega.sin_cos();
    let o = T::one();
    let z = T::zero();
    Ok(RotationMatrix3::from_rows_unchecked([
        [c, -s, z],
        [s, c, z],
        [z, z, o],
    ]))
}

/// Attitude matrix `R_z(roll) * R_y(yaw) * R_x(pitch)`.
///
/// Zero posture yields the exact identity (the sines evaluate to exactly 0
/// and the cosines to exactly 1), which the posture-off compatibility path
/// relies on.
pub fn posture_matrix<T: Real>(posture: &PostureAngles<T>) -> RotationMatrix3<T> {
    let rz = rotation_about_z(posture.roll).expect("validated angle");
    let ry = rotation_about_y(posture.yaw).expect("validated angle");
    let rx = rotation_about_x(posture.pitch).expect("validated angle");
    rz * ry * rx
}

/// Travel-frame rotation for a terminal moving with the given heading.
///
/// With heading azimuth `phi` and elevation `theta` the rows are
///
/// ```text
/// [ cos(theta)cos(phi)  -sin(phi)  -sin(theta)cos(phi) ]
/// [ cos(theta)sin(phi)   cos(phi)  -sin(theta)sin(phi) ]
/// [ sin(theta)           0          cos(theta)         ]
/// ```
pub fn velocity_rotation_matrix<T: Real>(heading: &SphericalAngles<T>) -> RotationMatrix3<T> {
    let (sp, cp) = heading.azimuth.sin_cos();
    let (st, ct) = heading.elevation.sin_cos();
    RotationMatrix3::from_rows_unchecked([
        [ct * cp, -sp, -st * cp],
        [ct * sp, cp, -st * sp],
        [st, T::zero(), ct],
    ])
}

/// Unit direction vector for the given azimuth/elevation pair.
pub fn angle_unit_vector<T: Real>(angles: SphericalAngles<T>) -> Vec3<T> {
    let (sa, ca) = angles.azimuth.sin_cos();
    let (se, ce) = angles.elevation.sin_cos();
    Vec3::new(ce * ca, ce * sa, se)
}

/// Maps a fuselage-frame vector into the world frame under the attitude.
pub fn fuselage_to_world<T: Real>(posture: &PostureAngles<T>, v: Vec3<T>) -> Vec3<T> {
    posture_matrix(posture).apply(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-12;

    fn assert_matrix_eq(a: &RotationMatrix3<f64>, b: &[[f64; 3]; 3], tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (a.entry(i, j) - b[i][j]).abs() <= tol,
                    "entry ({i},{j}): {} vs {}",
                    a.entry(i, j),
                    b[i][j]
                );
            }
        }
    }

    /// Closed-form expansion of R_z(roll) * R_y(yaw) * R_x(pitch), coded
    /// independently of the matrix product used by the implementation.
    fn posture_closed_form(roll: f64, yaw: f64, pitch: f64) -> [[f64; 3]; 3] {
        let (sw, cw) = roll.sin_cos();
        let (sp, cp) = yaw.sin_cos();
        let (sg, cg) = pitch.sin_cos();
        [
            [cw * cp, cw * sp * sg - sw * cg, sw * sg + cw * sp * cg],
            [sw * cp, cw * cg + sw * sp * sg, sw * sp * cg - cw * sg],
            [-sp, cp * sg, cp * cg],
        ]
    }

    #[test]
    fn elementary_rotations_match_elementwise_forms() {
        let g = 0.3f64;
        let rx = rotation_about_x(g).unwrap();
        assert_matrix_eq(
            &rx,
            &[
                [1.0, 0.0, 0.0],
                [0.0, g.cos(), -g.sin()],
                [0.0, g.sin(), g.cos()],
            ],
            0.0,
        );

        let ry = rotation_about_y(std::f64::consts::FRAC_PI_2).unwrap();
        assert_matrix_eq(
            &ry,
            &[[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]],
            1e-15,
        );

        let rz = rotation_about_z(std::f64::consts::PI).unwrap();
        assert_matrix_eq(
            &rz,
            &[[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]],
            1e-15,
        );
    }

    #[test]
    fn rotation_about_y_transpose_is_negative_angle() {
        let phi = 0.77f64;
        let a = rotation_about_y(phi).unwrap().transpose();
        let b = rotation_about_y(-phi).unwrap();
        assert_matrix_eq(&a, b.rows(), 0.0);
    }

    #[test]
    fn quarter_turn_about_x_is_exact() {
        let rx = rotation_about_x(std::f64::consts::FRAC_PI_2).unwrap();
        assert_matrix_eq(
            &rx,
            &[[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]],
            1e-15,
        );
    }

    #[test]
    fn non_finite_angle_is_rejected() {
        assert!(rotation_about_x(f64::NAN).is_err());
        assert!(rotation_about_y(f64::INFINITY).is_err());
        assert!(rotation_about_z(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn posture_matrix_equals_triple_product_and_closed_form() {
        let p = PostureAngles::new(0.4, 1.1, -0.7).unwrap();
        let m = posture_matrix(&p);
        let explicit = rotation_about_z(0.4).unwrap()
            * rotation_about_y(1.1).unwrap()
            * rotation_about_x(-0.7).unwrap();
        assert_matrix_eq(&m, explicit.rows(), 0.0);
        assert_matrix_eq(&m, &posture_closed_form(0.4, 1.1, -0.7), TOL);
    }

    #[test]
    fn pure_pitch_posture_is_x_rotation() {
        let p = PostureAngles::new(0.0, 0.0, std::f64::consts::FRAC_PI_2).unwrap();
        let m = posture_matrix(&p);
        let rx = rotation_about_x(std::f64::consts::FRAC_PI_2).unwrap();
        assert_matrix_eq(&m, rx.rows(), 0.0);
    }

    #[test]
    fn zero_posture_is_exact_identity() {
        let m = posture_matrix(&PostureAngles::<f64>::zero());
        let id = RotationMatrix3::<f64>::identity();
        for i in 0..3 {
            for j in 0..3 {
                // up to the sign of zero, which compares equal
                assert_eq!(m.entry(i, j), id.entry(i, j));
            }
        }
    }

    #[test]
    fn random_postures_are_proper_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
        let start = std::time::Instant::now();
        for _ in 0..1000 {
            let roll = rng.gen_range(-std::f64::consts::PI..=std::f64::consts::PI);
            let yaw = rng.gen_range(0.0..std::f64::consts::TAU);
            let pitch = rng.gen_range(-std::f64::consts::PI..=std::f64::consts::PI);
            let p = PostureAngles::new(roll, yaw, pitch).unwrap();
            let m = posture_matrix(&p);
            assert!(m.orthonormality_error() <= TOL);
            assert!((m.determinant() - 1.0).abs() <= TOL);
            assert_matrix_eq(&m, &posture_closed_form(roll, yaw, pitch), TOL);
        }
        assert!(start.elapsed().as_secs_f64() < 1.0);
    }

    #[test]
    fn velocity_rotation_matches_stated_rows() {
        let heading = SphericalAngles::new(std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        let m = velocity_rotation_matrix(&heading);
        assert_matrix_eq(
            &m,
            &[[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
            1e-15,
        );
    }

    #[test]
    fn velocity_rotation_is_orthonormal_on_grid() {
        for i in 0..10 {
            for j in 0..10 {
                let az = i as f64 / 10.0 * std::f64::consts::TAU;
                let el = -std::f64::consts::FRAC_PI_2 + j as f64 / 9.0 * std::f64::consts::PI;
                let m = velocity_rotation_matrix(&SphericalAngles::new(az, el).unwrap());
                assert!(m.orthonormality_error() <= TOL);
                assert!((m.determinant() - 1.0).abs() <= TOL);
            }
        }
    }

    #[test]
    fn unit_vector_at_45_degrees() {
        let a = SphericalAngles::new(std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4)
            .unwrap();
        let v = angle_unit_vector(a);
        assert_abs_diff_eq!(v.x, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(v.y, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(v.z, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn elevation_out_of_range_is_rejected() {
        assert!(SphericalAngles::new(0.0, 1.9).is_err());
        assert!(SphericalAngles::new(0.0, -1.9).is_err());
        assert!(SphericalAngles::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn azimuth_wraps_into_principal_range() {
        let a = SphericalAngles::new(-0.5, 0.0).unwrap();
        assert_abs_diff_eq!(a.azimuth(), std::f64::consts::TAU - 0.5, epsilon = 1e-12);
        let b = SphericalAngles::new(-1e-18, 0.0).unwrap();
        assert!(b.azimuth() >= 0.0 && b.azimuth() < std::f64::consts::TAU);
    }

    #[test]
    fn posture_angle_ranges_are_enforced() {
        assert!(PostureAngles::new(3.2, 0.0, 0.0).is_err());
        assert!(PostureAngles::new(0.0, -0.1, 0.0).is_err());
        assert!(PostureAngles::new(0.0, 0.0, -3.2).is_err());
        assert!(PostureAngles::new(0.0, 6.2, 0.0).is_ok());
    }

    #[test]
    fn fuselage_to_world_zero_posture_is_identity() {
        let v = Vec3::new(0.3, -0.4, 0.5);
        let w = fuselage_to_world(&PostureAngles::zero(), v);
        assert_eq!(v, w);
    }

    #[test]
    fn fuselage_to_world_quarter_pitch_maps_y_to_z() {
        let p = PostureAngles::new(0.0, 0.0, std::f64::consts::FRAC_PI_2).unwrap();
        let w = fuselage_to_world(&p, Vec3::new(0.0, 1.0, 0.0));
        assert_abs_diff_eq!(w.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.z, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_vector_cannot_be_normalized() {
        assert!(Vec3::<f64>::zero().normalized().is_err());
    }

    #[test]
    fn f32_instantiation_behaves() {
        let p = PostureAngles::<f32>::new(0.25, 0.5, -0.25).unwrap();
        let m = posture_matrix(&p);
        assert!(m.orthonormality_error() <= 1e-6);
    }

    proptest! {
        #[test]
        fn rotation_preserves_norm(
            roll in -std::f64::consts::PI..std::f64::consts::PI,
            yaw in 0.0..std::f64::consts::TAU,
            pitch in -std::f64::consts::PI..std::f64::consts::PI,
            x in -100.0f64..100.0,
            y in -100.0f64..100.0,
            z in -100.0f64..100.0,
        ) {
            let p = PostureAngles::new(roll, yaw, pitch).unwrap();
            let v = Vec3::new(x, y, z);
            let w = fuselage_to_world(&p, v);
            prop_assert!((w.norm() - v.norm()).abs() <= 1e-10 * (1.0 + v.norm()));
        }

        #[test]
        fn unit_vector_angle_roundtrip(
            az in 0.0..std::f64::consts::TAU,
            el in -1.5f64..1.5,
        ) {
            let a = SphericalAngles::new(az, el).unwrap();
            let v = angle_unit_vector(a);
            prop_assert!((v.norm() - 1.0).abs() <= 1e-12);
            let b = SphericalAngles::from_vector(v).unwrap();
            let mut daz = (b.azimuth() - a.azimuth()).abs();
            daz = daz.min(std::f64::consts::TAU - daz);
            // azimuth is unobservable at the poles
            if el.abs() < 1.4 {
                prop_assert!(daz <= 1e-10);
            }
            prop_assert!((b.elevation() - a.elevation()).abs() <= 1e-10);
        }

        #[test]
        fn inverse_composition_recovers_identity(
            roll in -std::f64::consts::PI..std::f64::consts::PI,
            yaw in 0.0..std::f64::consts::TAU,
            pitch in -std::f64::consts::PI..std::f64::consts::PI,
        ) {
            let m = posture_matrix(&PostureAngles::new(roll, yaw, pitch).unwrap());
            let round = m.transpose() * m;
            for i in 0..3 {
                for j in 0..3 {
                    let target = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((round.entry(i, j) - target).abs() <= 1e-10);
                }
            }
        }
    }
}
