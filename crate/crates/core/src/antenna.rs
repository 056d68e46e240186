//! Carrier constants, element field patterns, and antenna array geometry.

use crate::geometry::{RotationMatrix3, SphericalAngles, Vec3};
use crate::{Error, Real, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Carrier frequency and propagation speed; wave number is always derived,
/// never stored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CarrierConfig<T> {
    f0: T,
    c0: T,
}

impl<T: Real> CarrierConfig<T> {
    pub fn new(f0: T) -> Result<Self> {
        CarrierConfig::with_c0(f0, T::of(SPEED_OF_LIGHT))
    }

    pub fn with_c0(f0: T, c0: T) -> Result<Self> {
        if !f0.is_finite() || f0 <= T::zero() {
            return Err(Error::invalid("carrier frequency must be positive"));
        }
        if !c0.is_finite() || c0 <= T::zero() {
            return Err(Error::invalid("propagation speed must be positive"));
        }
        Ok(CarrierConfig { f0, c0 })
    }

    pub fn f0(&self) -> T {
        self.f0
    }

    pub fn c0(&self) -> T {
        self.c0
    }

    /// k = 2*pi*f0/c0, rad/m.
    pub fn wave_number(&self) -> T {
        T::TAU() * self.f0 / self.c0
    }

    pub fn wavelength(&self) -> T {
        self.c0 / self.f0
    }
}

/// Per-element field pattern returning the vertical and horizontal field
/// components for a propagation direction given in the element's local frame.
#[derive(Clone, Debug)]
pub enum FieldPattern<T> {
    /// Unit vertical response in every direction.
    Isotropic,
    /// Sectorized single-element pattern: parabolic attenuation in the
    /// pattern frame's azimuth and elevation with 65-degree half-power
    /// beamwidth and a 30 dB floor, polarized by a slant angle (0 = pure
    /// vertical).
    Directional {
        /// Maps element-local directions into the pattern frame, whose +x
        /// axis is the boresight.
        mount: RotationMatrix3<T>,
        slant: T,
    },
}

impl<T: Real> FieldPattern<T> {
    /// Directional pattern whose boresight points along `boresight` (in the
    /// element's local frame) with the pattern's vertical plane anchored to
    /// the local +z axis.
    pub fn directional(boresight: Vec3<T>, slant: T) -> Result<Self> {
        if !slant.is_finite() {
            return Err(Error::invalid("slant angle must be finite"));
        }
        let x = boresight.normalized()?;
        let z_ref = Vec3::new(T::zero(), T::zero(), T::one());
        let yineq = Vec3::new(
            z_ref.y * x.z - z_ref.z * x.y,
            z_ref.z * x.x - z_ref.x * x.z,
            z_ref.x * x.y - z_ref.y * x.x,
        );
        let y = yineq.normalized().map_err(|_| {
            Error::DegenerateGeometry(
                "boresight along the local z axis leaves the pattern frame unconstrained".into(),
            )
        })?;
        let z = Vec3::new(
            x.y * y.z - x.z * y.y,
            x.z * y.x - x.x * y.z,
            x.x * y.y - x.y * y.x,
        );
        // rows of the mount matrix are the pattern-frame basis vectors, so
        // applying it maps local coordinates into the pattern frame
        let mount = RotationMatrix3::from_rows([
            [x.x, x.y, x.z],
            [y.x, y.y, y.z],
            [z.x, z.y, z.z],
        ])?;
        Ok(FieldPattern::Directional { mount, slant })
    }

    /// Field components (F_V, F_H) for a unit direction in the element's
    /// local frame.
    pub fn evaluate(&self, direction: Vec3<T>) -> (T, T) {
        match self {
            FieldPattern::Isotropic => (T::one(), T::zero()),
            FieldPattern::Directional { mount, slant } => {
                let p = mount.apply(direction);
                let az = p.y.atan2(p.x);
                let el = p.z.max(-T::one()).min(T::one()).asin();
                let amp = directional_amplitude(az, el);
                (amp * slant.cos(), amp * slant.sin())
            }
        }
    }

    /// Same pattern evaluated via spherical angles.
    pub fn evaluate_angles(&self, angles: SphericalAngles<T>) -> (T, T) {
        self.evaluate(crate::geometry::angle_unit_vector(angles))
    }
}

/// Parabolic attenuation with 65-degree HPBW per axis and a 30 dB floor,
/// returned as a linear field amplitude.
fn directional_amplitude<T: Real>(az: T, el: T) -> T {
    let deg = T::of(180.0) / T::PI();
    let hpbw = T::of(65.0);
    let cap = T::of(30.0);
    let az_term = (T::of(12.0) * (az * deg / hpbw).powi(2)).min(cap);
    let el_term = (T::of(12.0) * (el * deg / hpbw).powi(2)).min(cap);
    let att_db = (az_term + el_term).min(cap);
    T::of(10.0).powf(-att_db / T::of(20.0))
}

/// Antenna element positions in the terminal's local frame plus the shared
/// element pattern.
#[derive(Clone, Debug)]
pub struct AntennaArray<T> {
    elements: Vec<Vec3<T>>,
    pattern: FieldPattern<T>,
}

impl<T: Real> AntennaArray<T> {
    pub fn new(elements: Vec<Vec3<T>>, pattern: FieldPattern<T>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::invalid("array needs at least one element"));
        }
        if elements.iter().any(|e| !e.is_finite()) {
            return Err(Error::invalid("element positions must be finite"));
        }
        Ok(AntennaArray { elements, pattern })
    }

    /// Uniform linear array of `n` elements spaced `spacing` apart along
    /// `axis`, centered on the origin.
    pub fn uniform_linear(n: usize, spacing: T, axis: Vec3<T>, pattern: FieldPattern<T>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("array needs at least one element"));
        }
        if !spacing.is_finite() || spacing < T::zero() {
            return Err(Error::invalid("element spacing must be non-negative"));
        }
        let unit = if n == 1 { Vec3::new(T::one(), T::zero(), T::zero()) } else { axis.normalized()? };
        let half = T::of(0.5) * T::from_usize(n - 1).expect("element count fits scalar");
        let elements = (0..n)
            .map(|i| {
                let offset = T::from_usize(i).expect("element index fits scalar") - half;
                unit.scale(spacing * offset)
            })
            .collect();
        Ok(AntennaArray { elements, pattern })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, i: usize) -> Result<Vec3<T>> {
        self.elements
            .get(i)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("element index {i} out of bounds")))
    }

    pub fn elements(&self) -> &[Vec3<T>] {
        &self.elements
    }

    pub fn pattern(&self) -> &FieldPattern<T> {
        &self.pattern
    }
}
