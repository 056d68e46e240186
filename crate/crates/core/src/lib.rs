//! Geometry-based stochastic channel model for air-to-ground MIMO links.
//!
//! The crate builds time-variant channel impulse responses for a link between
//! an aerial transmitter and a ground vehicle. Both ends follow
//! three-dimensional trajectories, the airframe additionally rotates through
//! roll/yaw/pitch posture angles, and scattering is organized in twin-cluster
//! sets with per-cluster delays and powers. On top of the raw coefficients
//! the crate computes analytic and Monte-Carlo correlation statistics (time
//! autocorrelation and antenna cross-correlation) that quantify how motion
//! and posture dynamics shape the fading process.
//!
//! All numerics are generic over the scalar type through the [`Real`] trait;
//! `f64` aliases are exported for the common case.

use std::fmt::{Debug, Display};

pub mod antenna;
pub mod channel;
pub mod error;
pub mod geometry;
pub mod mobility;
pub mod scenario;
pub mod stats;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Scalar abstraction: every floating type the model can run on.
///
/// The supertraits pull in arithmetic, transcendental functions, and the
/// float constants; the two helpers move literals across the generic
/// boundary without sprinkling `unwrap` at call sites.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts a finite `f64` literal into this scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any Real")
    }

    /// Widens to `f64` (exact for f32 and f64).
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real widens to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex number over a [`Real`] scalar.
pub type Cplx<T> = num_complex::Complex<T>;

pub type Vec3f64 = geometry::Vec3<f64>;
pub type RotationMatrix3f64 = geometry::RotationMatrix3<f64>;
pub type SphericalAngles64 = geometry::SphericalAngles<f64>;
pub type PostureAngles64 = geometry::PostureAngles<f64>;
pub type Cplx64 = Cplx<f64>;

pub type Schedule64 = mobility::Schedule<f64>;
pub type MobilityProfile64 = mobility::MobilityProfile<f64>;
pub type KinematicState64 = mobility::KinematicState<f64>;

pub type CarrierConfig64 = antenna::CarrierConfig<f64>;
pub type FieldPattern64 = antenna::FieldPattern<f64>;
pub type AntennaArray64 = antenna::AntennaArray<f64>;

pub type ClusterGenParams64 = scenario::ClusterGenParams<f64>;
pub type ClusterSet64 = scenario::ClusterSet<f64>;
pub type RiceanProcess64 = scenario::RiceanProcess<f64>;
pub type KFactorTrack64 = scenario::KFactorTrack<f64>;

pub type BounceGeometry64 = channel::BounceGeometry<f64>;
pub type TimeGrid64 = channel::TimeGrid<f64>;
pub type ChannelModelConfig64 = channel::ChannelModelConfig<f64>;
pub type ChannelModel64 = channel::ChannelModel<f64>;
pub type Scene64 = channel::Scene<f64>;
pub type PhaseDraw64 = channel::PhaseDraw<f64>;
pub type SceneEvaluator64<'a> = channel::SceneEvaluator<'a, f64>;
pub type CirSample64 = channel::CirSample<f64>;
pub type ChannelRealization64 = channel::ChannelRealization<f64>;

pub type CorrelationCurve64 = stats::CorrelationCurve<f64>;
pub type CurveComparison64 = stats::CurveComparison<f64>;
pub type CorrelationAnalyzer64<'m> = stats::CorrelationAnalyzer<'m, f64>;
