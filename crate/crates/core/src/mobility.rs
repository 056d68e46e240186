//! Time-parameterized motion: speed, heading, and posture schedules for each
//! terminal, sampled kinematic states, and bundled scenario presets.
//!
//! Positions are obtained by trapezoidal integration of the velocity implied
//! by the speed/heading schedules, so curved trajectories need no closed-form
//! position; headings and posture angles are read directly from their
//! schedules.

use crate::geometry::{angle_unit_vector, PostureAngles, SphericalAngles, Vec3};
use crate::{Error, Real, Result};

/// Default integration step for position and phase integrals, in seconds.
///
/// An eighth of the 1 ms output grid: fine enough that halving it moves
/// integrated phases by well under 1e-6 rad on the bundled presets.
pub const DEFAULT_INTEGRATION_STEP: f64 = 1.25e-4;

/// Piecewise-linear scalar schedule over time.
///
/// Knot times are finite, strictly increasing, and start at 0; values are
/// interpolated between knots and held constant after the last knot.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule<T> {
    knots: Vec<(T, T)>,
}

impl<T: Real> Schedule<T> {
    pub fn constant(value: T) -> Self {
        Schedule {
            knots: vec![(T::zero(), value)],
        }
    }

    pub fn from_knots(knots: Vec<(T, T)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::invalid("schedule needs at least one knot"));
        }
        if knots[0].0 != T::zero() {
            return Err(Error::invalid("first schedule knot must be at t = 0"));
        }
        for pair in &knots {
            if !pair.0.is_finite() || !pair.1.is_finite() {
                return Err(Error::invalid("schedule knots must be finite"));
            }
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invalid("schedule knot times must strictly increase"));
            }
        }
        Ok(Schedule { knots })
    }

    /// Holds `from` until `t_start`, ramps linearly to `to` at `t_end`,
    /// then holds `to`.
    pub fn hold_then_ramp(t_start: T, t_end: T, from: T, to: T) -> Result<Self> {
        if t_start < T::zero() || t_end <= t_start {
            return Err(Error::invalid("ramp interval must be ordered and non-negative"));
        }
        if t_start == T::zero() {
            Schedule::from_knots(vec![(T::zero(), from), (t_end, to)])
        } else {
            Schedule::from_knots(vec![(T::zero(), from), (t_start, from), (t_end, to)])
        }
    }

    /// Linear interpolation with clamping beyond the knot range.
    pub fn value_at(&self, t: T) -> T {
        let first = self.knots[0];
        if t <= first.0 {
            return first.1;
        }
        let last = self.knots[self.knots.len() - 1];
        if t >= last.0 {
            return last.1;
        }
        // invariant: first.0 < t < last.0, so a bracketing window exists
        for w in self.knots.windows(2) {
            let (t0, v0) = w[0];
            let (t1, v1) = w[1];
            if t <= t1 {
                let frac = (t - t0) / (t1 - t0);
                return v0 + (v1 - v0) * frac;
            }
        }
        last.1
    }

    /// Smallest and largest scheduled value; piecewise-linear curves attain
    /// their extremes at knots.
    pub fn extremes(&self) -> (T, T) {
        let mut lo = self.knots[0].1;
        let mut hi = lo;
        for &(_, v) in &self.knots {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        (lo, hi)
    }

    pub fn knots(&self) -> &[(T, T)] {
        &self.knots
    }
}

/// Full motion description of one terminal over `[0, duration]`.
#[derive(Clone, Debug)]
pub struct MobilityProfile<T> {
    initial_position: Vec3<T>,
    speed: Schedule<T>,
    heading_azimuth: Schedule<T>,
    heading_elevation: Schedule<T>,
    roll: Schedule<T>,
    yaw: Schedule<T>,
    pitch: Schedule<T>,
    duration: T,
}

impl<T: Real> MobilityProfile<T> {
    /// Validates every schedule against the ranges its consumer enforces, so
    /// range errors surface at construction instead of mid-simulation.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        initial_position: Vec3<T>,
        duration: T,
        speed: Schedule<T>,
        heading_azimuth: Schedule<T>,
        heading_elevation: Schedule<T>,
        roll: Schedule<T>,
        yaw: Schedule<T>,
        pitch: Schedule<T>,
    ) -> Result<Self> {
        if !duration.is_finite() || duration <= T::zero() {
            return Err(Error::invalid("duration must be positive and finite"));
        }
        if !initial_position.is_finite() {
            return Err(Error::invalid("initial position must be finite"));
        }
        if speed.extremes().0 < T::zero() {
            return Err(Error::out_of_range("speed schedule goes negative"));
        }
        let half_pi = T::FRAC_PI_2();
        let (el_lo, el_hi) = heading_elevation.extremes();
        if el_lo < -half_pi || el_hi > half_pi {
            return Err(Error::out_of_range(
                "heading elevation schedule leaves [-pi/2, pi/2]",
            ));
        }
        let pi = T::PI();
        for (name, sched, lo, hi, open_hi) in [
            ("roll", &roll, -pi, pi, false),
            ("yaw", &yaw, T::zero(), T::TAU(), true),
            ("pitch", &pitch, -pi, pi, false),
        ] {
            let (a, b) = sched.extremes();
            let high_bad = if open_hi { b >= hi } else { b > hi };
            if a < lo || high_bad {
                return Err(Error::out_of_range(format!(
                    "{name} schedule leaves its valid range"
                )));
            }
        }
        Ok(MobilityProfile {
            initial_position,
            speed,
            heading_azimuth,
            heading_elevation,
            roll,
            yaw,
            pitch,
            duration,
        })
    }

    /// Constant speed and heading, zero posture.
    pub fn uniform(
        initial_position: Vec3<T>,
        speed: T,
        heading: SphericalAngles<T>,
        duration: T,
    ) -> Result<Self> {
        MobilityProfile::new(
            initial_position,
            duration,
            Schedule::constant(speed),
            Schedule::constant(heading.azimuth()),
            Schedule::constant(heading.elevation()),
            Schedule::constant(T::zero()),
            Schedule::constant(T::zero()),
            Schedule::constant(T::zero()),
        )
    }

    /// Copy of this profile with all posture schedules pinned to zero.
    pub fn with_zero_posture(&self) -> Self {
        let mut out = self.clone();
        out.roll = Schedule::constant(T::zero());
        out.yaw = Schedule::constant(T::zero());
        out.pitch = Schedule::constant(T::zero());
        out
    }

    pub fn initial_position(&self) -> Vec3<T> {
        self.initial_position
    }

    pub fn duration(&self) -> T {
        self.duration
    }

    pub fn speed_at(&self, t: T) -> T {
        self.speed.value_at(t)
    }

    pub fn heading_at(&self, t: T) -> Result<SphericalAngles<T>> {
        SphericalAngles::new(
            self.heading_azimuth.value_at(t),
            self.heading_elevation.value_at(t),
        )
    }

    pub fn posture_at(&self, t: T) -> Result<PostureAngles<T>> {
        PostureAngles::new(
            self.roll.value_at(t),
            self.yaw.value_at(t),
            self.pitch.value_at(t),
        )
    }

    /// True when posture is identically zero over the whole schedule.
    pub fn posture_is_zero(&self) -> bool {
        let zero = |s: &Schedule<T>| {
            let (lo, hi) = s.extremes();
            lo == T::zero() && hi == T::zero()
        };
        zero(&self.roll) && zero(&self.yaw) && zero(&self.pitch)
    }

    pub fn velocity_at(&self, t: T) -> Result<Vec3<T>> {
        let heading = self.heading_at(t)?;
        Ok(angle_unit_vector(heading).scale(self.speed_at(t)))
    }

    /// Position by trapezoidal integration of the velocity from 0 to `t`
    /// with panels no wider than `max_step`.
    pub fn position_at_with_step(&self, t: T, max_step: T) -> Result<Vec3<T>> {
        if t < T::zero() || t > self.duration {
            return Err(Error::out_of_range(format!(
                "t = {t} outside [0, {}]",
                self.duration
            )));
        }
        if !max_step.is_finite() || max_step <= T::zero() {
            return Err(Error::invalid("integration step must be positive"));
        }
        if t == T::zero() {
            return Ok(self.initial_position);
        }
        let panels = (t / max_step).ceil().max(T::one());
        let n = panels
            .to_usize()
            .ok_or_else(|| Error::invalid("integration step too small for span"))?;
        let h = t / T::from_usize(n).expect("panel count fits scalar");
        let mut acc = Vec3::zero();
        let mut prev = self.velocity_at(T::zero())?;
        for i in 1..=n {
            let ti = h * T::from_usize(i).expect("index fits scalar");
            let cur = self.velocity_at(ti)?;
            acc = acc + (prev + cur).scale(h * T::of(0.5));
            prev = cur;
        }
        Ok(self.initial_position + acc)
    }

    pub fn position_at(&self, t: T) -> Result<Vec3<T>> {
        self.position_at_with_step(t, T::of(DEFAULT_INTEGRATION_STEP))
    }
}

/// Snapshot of one terminal's motion at a given time.
#[derive(Clone, Copy, Debug)]
pub struct KinematicState<T> {
    pub time: T,
    pub position: Vec3<T>,
    pub velocity: Vec3<T>,
    pub heading: SphericalAngles<T>,
    pub posture: PostureAngles<T>,
}

impl<T: Real> KinematicState<T> {
    pub fn velocity_rotation(&self) -> crate::geometry::RotationMatrix3<T> {
        crate::geometry::velocity_rotation_matrix(&self.heading)
    }

    pub fn posture_matrix(&self) -> crate::geometry::RotationMatrix3<T> {
        crate::geometry::posture_matrix(&self.posture)
    }
}

/// Samples position, velocity, heading, and posture at time `t`.
pub fn sample_state<T: Real>(profile: &MobilityProfile<T>, t: T) -> Result<KinematicState<T>> {
    let position = profile.position_at(t)?;
    let heading = profile.heading_at(t)?;
    let posture = profile.posture_at(t)?;
    Ok(KinematicState {
        time: t,
        position,
        velocity: angle_unit_vector(heading).scale(profile.speed_at(t)),
        heading,
        posture,
    })
}

/// Bundled transmitter/receiver profile pairs.
///
/// `paper-fig3`: aerial terminal at 150 m altitude flying +x at 50 m/s with
/// a pitch ramp (rate pi/2 rad/s over [0.25 s, 1.25 s]) followed by a roll
/// ramp (same rate over [1.25 s, 2.25 s]); ground terminal at 20 m/s along
/// +y. The ramps start 0.25 s late on purpose: posture is exactly zero over
/// the whole first correlation window, which keeps the posture-on and
/// posture-off statistics identical at the t = 0 anchor.
///
/// `paper-fig7`: 40 m/s vs 10 m/s, initial separation 1000 m at elevation
/// pi/3, travel azimuths pi and pi/4, no posture dynamics.
///
/// `paper-fig8`: as `paper-fig7` but separation 500 m at elevation pi/6.
///
/// `static`: both terminals at rest; `straight-line`: constant velocities,
/// no posture.
pub fn preset_scenario<T: Real>(
    name: &str,
) -> Result<(MobilityProfile<T>, MobilityProfile<T>)> {
    let half_pi = T::FRAC_PI_2();
    match name {
        "paper-fig3" => {
            let duration = T::of(2.5);
            let tx = MobilityProfile::new(
                Vec3::new(T::zero(), T::zero(), T::of(150.0)),
                duration,
                Schedule::constant(T::of(50.0)),
                Schedule::constant(T::zero()),
                Schedule::constant(T::zero()),
                Schedule::hold_then_ramp(T::of(1.25), T::of(2.25), T::zero(), half_pi)?,
                Schedule::constant(T::zero()),
                Schedule::hold_then_ramp(T::of(0.25), T::of(1.25), T::zero(), half_pi)?,
            )?;
            let rx = MobilityProfile::uniform(
                Vec3::new(T::of(517.2), T::of(1075.5), T::zero()),
                T::of(20.0),
                SphericalAngles::new(half_pi, T::zero())?,
                duration,
            )?;
            Ok((tx, rx))
        }
        "paper-fig7" | "paper-fig8" => {
            let (range, elevation) = if name == "paper-fig7" {
                (T::of(1000.0), T::FRAC_PI_3())
            } else {
                (T::of(500.0), T::of(std::f64::consts::FRAC_PI_6))
            };
            let duration = T::of(2.5);
            let rx_pos = Vec3::zero();
            let los = SphericalAngles::new(T::zero(), elevation)?;
            let tx_pos = rx_pos + angle_unit_vector(los).scale(range);
            let tx = MobilityProfile::uniform(
                tx_pos,
                T::of(40.0),
                SphericalAngles::new(T::PI(), T::zero())?,
                duration,
            )?;
            let rx = MobilityProfile::uniform(
                rx_pos,
                T::of(10.0),
                SphericalAngles::new(T::FRAC_PI_4(), T::zero())?,
                duration,
            )?;
            Ok((tx, rx))
        }
        "static" => {
            let duration = T::of(5.0);
            let tx = MobilityProfile::uniform(
                Vec3::new(T::zero(), T::zero(), T::of(100.0)),
                T::zero(),
                SphericalAngles::new(T::zero(), T::zero())?,
                duration,
            )?;
            let rx = MobilityProfile::uniform(
                Vec3::new(T::of(60.0), T::of(80.0), T::zero()),
                T::zero(),
                SphericalAngles::new(T::zero(), T::zero())?,
                duration,
            )?;
            Ok((tx, rx))
        }
        "straight-line" => {
            let duration = T::of(5.0);
            let tx = MobilityProfile::uniform(
                Vec3::new(T::zero(), T::zero(), T::of(120.0)),
                T::of(30.0),
                SphericalAngles::new(T::zero(), T::zero())?,
                duration,
            )?;
            let rx = MobilityProfile::uniform(
                Vec3::new(T::of(300.0), T::of(200.0), T::zero()),
                T::of(15.0),
                SphericalAngles::new(half_pi, T::zero())?,
                duration,
            )?;
            Ok((tx, rx))
        }
        other => Err(Error::NotFound(format!("unknown scenario preset `{other}`"))),
    }
}
