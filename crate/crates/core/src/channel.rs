//! Time-variant MIMO channel coefficient synthesis.
//!
//! A [`ChannelModel`] binds two mobility profiles, two antenna arrays, a
//! carrier, and cluster-generation parameters. From it, deterministic
//! [`Scene`]s are drawn (cluster geometry anchored around the terminals at
//! t = 0 plus one Ricean K-factor track per scene), and per-scene
//! [`SceneEvaluator`]s integrate Doppler phases along the trajectories and
//! cache orientation-dependent pattern and element-phase terms so that
//! individual channel realizations are cheap to synthesize.
//!
//! Conventions:
//!
//! - Doppler phases are cumulative path-length-rate integrals (positive
//!   while a path is shrinking), start at zero at t = 0, and never depend
//!   on posture. Integration uses the trapezoid rule on a fixed substep
//!   grid with compensated summation.
//! - The spatial phase of Tx element `p` toward a path with world departure
//!   direction `s` is `k * r_p . (R_v * R_p * s)`, where `R_v` is the
//!   velocity rotation, `R_p` the posture rotation, and `r_p` the
//!   body-frame element offset. The field pattern is evaluated at the same
//!   rotated direction, so phase and pattern always see one consistent
//!   array orientation. The receive side applies its velocity rotation
//!   only; receive posture is ignored by design.
//! - Initial phases (one for the LoS path, one per cluster, four
//!   polarization phases per ray) are redrawn per realization from a
//!   dedicated stream, so scene geometry randomness and fast-fading
//!   randomness never mix. Cluster death times, when enabled, are drawn
//!   after all phases; disabling the death process therefore leaves every
//!   phase sequence unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::antenna::{AntennaArray, CarrierConfig};
use crate::error::Error;
use crate::geometry::{posture_matrix, velocity_rotation_matrix, RotationMatrix3, SphericalAngles, Vec3};
use crate::mobility::{sample_state, MobilityProfile};
use crate::scenario::{generate_clusters_with_rng, ClusterGenParams, ClusterSet, KFactorTrack, RiceanProcess};
use crate::{Cplx, Real, Result};

/// Default output sample spacing, seconds.
pub const DEFAULT_OUTPUT_STEP: f64 = 1e-3;

/// Default number of integration substeps per output sample. Chosen so that
/// halving the substep moves fully integrated Doppler phases by well under
/// 1e-6 rad even for close-in bounce geometry.
pub const DEFAULT_SUBSTEPS: usize = 32;

const SCENE_STREAM_BASE: u64 = 0x5343_454e_0000_0000;
const DRAW_STREAM_BASE: u64 = 0x5245_414c_0000_0000;

pub(crate) fn cis<T: Real>(phase: T) -> Cplx<T> {
    Cplx::new(phase.cos(), phase.sin())
}

/// Whether the Tx posture rotation participates in spatial phases and
/// pattern orientation. `Removed` is the reference pipeline used to isolate
/// posture effects; everything else (trajectories, Doppler, K process) is
/// identical between the two modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PostureMode {
    Active,
    Removed,
}

/// Path selector for per-path queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathRef {
    Los,
    SubPath { cluster: usize, ray: usize },
}

/// Ricean amplitude weights `(sqrt(K/(K+1)), sqrt(1/(K+1)))` applied to the
/// LoS and scattered components. `k = 0` recovers the pure-Rayleigh limit
/// (zero LoS weight).
pub fn ricean_weights<T: Real>(k: T) -> Result<(T, T)> {
    if !k.is_finite() || k < T::zero() {
        return Err(Error::invalid("K factor must be finite and >= 0"));
    }
    let denom = k + T::one();
    Ok(((k / denom).sqrt(), (T::one() / denom).sqrt()))
}

/// Distances from each terminal's t = 0 position to the bounce points of
/// its local scattering clusters.
#[derive(Clone, Copy, Debug)]
pub struct BounceGeometry<T> {
    tx_radius: T,
    rx_radius: T,
}

impl<T: Real> BounceGeometry<T> {
    pub fn new(tx_radius: T, rx_radius: T) -> Result<Self> {
        for r in [tx_radius, rx_radius] {
            if !r.is_finite() || r <= T::zero() {
                return Err(Error::invalid("bounce radius must be finite and > 0"));
            }
        }
        Ok(BounceGeometry { tx_radius, rx_radius })
    }

    pub fn tx_radius(&self) -> T {
        self.tx_radius
    }

    pub fn rx_radius(&self) -> T {
        self.rx_radius
    }
}

impl<T: Real> Default for BounceGeometry<T> {
    fn default() -> Self {
        BounceGeometry {
            tx_radius: T::of(40.0),
            rx_radius: T::of(25.0),
        }
    }
}

/// Output grid: samples every `dt` seconds, phase integration on a substep
/// grid `substeps` times finer. All queried times must land on the substep
/// grid.
#[derive(Clone, Copy, Debug)]
pub struct TimeGrid<T> {
    dt: T,
    substeps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(dt: T, substeps: usize) -> Result<Self> {
        if !dt.is_finite() || dt <= T::zero() {
            return Err(Error::invalid("output step must be finite and > 0"));
        }
        if substeps == 0 {
            return Err(Error::invalid("substep count must be >= 1"));
        }
        Ok(TimeGrid { dt, substeps })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Integration step, `dt / substeps`.
    pub fn substep(&self) -> T {
        self.dt / T::of(self.substeps as f64)
    }

    /// Maps `t` to its substep index, rejecting negative or off-grid times.
    pub(crate) fn substep_index(&self, t: T) -> Result<usize> {
        if !t.is_finite() || t < T::zero() {
            return Err(Error::invalid("time must be finite and >= 0"));
        }
        let h = self.substep();
        let idx = (t / h).round();
        let tol = T::of(1e-9).max(T::epsilon() * T::of(32.0) * t.abs().max(T::one()));
        if (t - idx * h).abs() > tol {
            return Err(Error::invalid(format!(
                "time {} does not lie on the integration grid (substep {})",
                t, h,
            )));
        }
        Ok(idx.as_f64() as usize)
    }
}

impl<T: Real> Default for TimeGrid<T> {
    fn default() -> Self {
        TimeGrid {
            dt: T::of(DEFAULT_OUTPUT_STEP),
            substeps: DEFAULT_SUBSTEPS,
        }
    }
}

/// One frozen scattering environment: cluster set, bounce anchors, virtual
/// path lengths, and the K-factor track. Deterministic given the model seed
/// and the scene index.
#[derive(Clone, Debug)]
pub struct Scene<T> {
    pub(crate) index: u64,
    pub(crate) clusters: ClusterSet<T>,
    /// First-bounce points at t = 0, `[cluster][ray]`.
    pub(crate) tx_anchors: Vec<Vec<Vec3<T>>>,
    /// Last-bounce points at t = 0, `[cluster][ray]`.
    pub(crate) rx_anchors: Vec<Vec<Vec3<T>>>,
    /// Cluster-mean bounce points, used for delays.
    pub(crate) tx_mean_anchor: Vec<Vec3<T>>,
    pub(crate) rx_mean_anchor: Vec<Vec3<T>>,
    /// Non-negative virtual link length between the bounce points, meters.
    pub(crate) virtual_length: Vec<T>,
    pub(crate) k_track: KFactorTrack<T>,
}

impl<T: Real> Scene<T> {
    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn clusters(&self) -> &ClusterSet<T> {
        &self.clusters
    }

    /// Linear K factor at time `t` (clipped at generation, never below the
    /// process floor).
    pub fn k_factor_at(&self, t: T) -> T {
        self.k_track.value_at(t)
    }

    /// Virtual link lengths per cluster, meters.
    pub fn virtual_lengths(&self) -> &[T] {
        &self.virtual_length
    }
}

/// Per-realization random draw: initial phases and optional cluster death
/// times. Field order matches the draw order from the realization stream.
#[derive(Clone, Debug)]
pub struct PhaseDraw<T> {
    /// LoS initial phase, (-pi, pi].
    pub(crate) los: T,
    /// Per-cluster initial phase, (0, 2*pi].
    pub(crate) cluster_init: Vec<T>,
    /// Per-ray polarization phases, `[cluster * rays + ray] -> [VV, VH, HV, HH]`,
    /// each in (-pi, pi].
    pub(crate) pol: Vec<[T; 4]>,
    /// Per-cluster death time, seconds; infinite when the death process is
    /// disabled.
    pub(crate) death_time: Vec<T>,
}

impl<T: Real> PhaseDraw<T> {
    fn draw(rng: &mut ChaCha8Rng, n_clusters: usize, rays: usize, lambda_death: T) -> Self {
        let pi = T::PI();
        let tau = T::TAU();
        let los = pi - tau * T::of(rng.gen::<f64>());
        let cluster_init: Vec<T> = (0..n_clusters)
            .map(|_| tau * (T::one() - T::of(rng.gen::<f64>())))
            .collect();
        let mut pol = Vec::with_capacity(n_clusters * rays);
        for _ in 0..n_clusters * rays {
            let mut phases = [T::zero(); 4];
            for slot in &mut phases {
                *slot = pi - tau * T::of(rng.gen::<f64>());
            }
            pol.push(phases);
        }
        let death_time: Vec<T> = if lambda_death > T::zero() {
            (0..n_clusters)
                .map(|_| {
                    let u = rng.gen::<f64>();
                    T::of(-(1.0 - u).ln()) / lambda_death
                })
                .collect()
        } else {
            vec![T::infinity(); n_clusters]
        };
        PhaseDraw {
            los,
            cluster_init,
            pol,
            death_time,
        }
    }

    /// True when cluster `n` is still alive at time `t`.
    pub fn alive(&self, cluster: usize, t: T) -> bool {
        self.death_time[cluster] > t
    }
}

/// Everything needed to construct a [`ChannelModel`]. All fields are public;
/// validation happens in [`ChannelModel::new`].
#[derive(Clone, Debug)]
pub struct ChannelModelConfig<T> {
    pub tx_profile: MobilityProfile<T>,
    pub rx_profile: MobilityProfile<T>,
    pub tx_array: AntennaArray<T>,
    pub rx_array: AntennaArray<T>,
    pub carrier: CarrierConfig<T>,
    pub cluster_params: ClusterGenParams<T>,
    pub bounce: BounceGeometry<T>,
    pub ricean: RiceanProcess<T>,
    /// NLoS cluster death rate, 1/s; 0 disables the death process.
    pub lambda_death: T,
    /// Cluster birth rate, 1/s. Must be 0 here: coefficient synthesis relies
    /// on phase tables precomputed for a fixed cluster list, so clusters can
    /// die mid-run but cannot be born. Standalone cluster-set evolution with
    /// births is available via `scenario::birth_death_step`.
    pub lambda_birth: T,
    pub grid: TimeGrid<T>,
    pub posture_mode: PostureMode,
    pub seed: u64,
}

/// Validated channel model. The simulated span is the shorter of the two
/// profile durations.
#[derive(Clone, Debug)]
pub struct ChannelModel<T> {
    cfg: ChannelModelConfig<T>,
    duration: T,
}

impl<T: Real> ChannelModel<T> {
    pub fn new(cfg: ChannelModelConfig<T>) -> Result<Self> {
        cfg.cluster_params.validate()?;
        if !cfg.lambda_death.is_finite() || cfg.lambda_death < T::zero() {
            return Err(Error::invalid("cluster death rate must be finite and >= 0"));
        }
        if cfg.lambda_birth != T::zero() {
            return Err(Error::invalid(
                "cluster births during coefficient synthesis are unsupported; \
                 evolve standalone cluster sets with birth_death_step instead",
            ));
        }
        let separation = (cfg.rx_profile.initial_position() - cfg.tx_profile.initial_position()).norm();
        if separation <= T::of(1e-6) {
            return Err(Error::degenerate("terminals coincide at t = 0"));
        }
        let duration = cfg.tx_profile.duration().min(cfg.rx_profile.duration());
        Ok(ChannelModel { cfg, duration })
    }

    pub fn config(&self) -> &ChannelModelConfig<T> {
        &self.cfg
    }

    pub fn duration(&self) -> T {
        self.duration
    }

    pub fn seed(&self) -> u64 {
        self.cfg.seed
    }

    pub fn posture_mode(&self) -> PostureMode {
        self.cfg.posture_mode
    }

    pub fn carrier(&self) -> &CarrierConfig<T> {
        &self.cfg.carrier
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.cfg.grid
    }

    pub fn n_tx_elements(&self) -> usize {
        self.cfg.tx_array.len()
    }

    pub fn n_rx_elements(&self) -> usize {
        self.cfg.rx_array.len()
    }

    /// Draws scene `index`: cluster set, bounce anchors, and the K track.
    /// Uses a stream derived from the model seed and the index only, so any
    /// scene can be rebuilt independently of the others.
    pub fn scene(&self, index: u64) -> Result<Scene<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(SCENE_STREAM_BASE.wrapping_add(index));

        let tx0 = sample_state(&self.cfg.tx_profile, T::zero())?;
        let rx0 = sample_state(&self.cfg.rx_profile, T::zero())?;
        let los_vec = rx0.position - tx0.position;
        let separation = los_vec.norm();
        let los_departure = SphericalAngles::from_vector(los_vec)?;
        let los_arrival = SphericalAngles::from_vector(-los_vec)?;

        let clusters = generate_clusters_with_rng(&self.cfg.cluster_params, los_departure, los_arrival, &mut rng)?;
        let k_track = KFactorTrack::generate(&self.cfg.ricean, self.duration, self.cfg.grid.dt(), &mut rng)?;

        let c0 = self.cfg.carrier.c0();
        let r_tx = self.cfg.bounce.tx_radius();
        let r_rx = self.cfg.bounce.rx_radius();
        let mut tx_anchors = Vec::with_capacity(clusters.clusters().len());
        let mut rx_anchors = Vec::with_capacity(clusters.clusters().len());
        let mut tx_mean_anchor = Vec::with_capacity(clusters.clusters().len());
        let mut rx_mean_anchor = Vec::with_capacity(clusters.clusters().len());
        let mut virtual_length = Vec::with_capacity(clusters.clusters().len());
        for (idx, cluster) in clusters.clusters().iter().enumerate() {
            let d_virt = separation + c0 * cluster.excess_delay - r_tx - r_rx;
            if d_virt < T::zero() {
                return Err(Error::degenerate(format!(
                    "bounce radii exceed the total path length for cluster {idx}",
                )));
            }
            virtual_length.push(d_virt);
            tx_mean_anchor.push(tx0.position + cluster.mean_departure.unit_vector().scale(r_tx));
            rx_mean_anchor.push(rx0.position + cluster.mean_arrival.unit_vector().scale(r_rx));
            let mut tx_row = Vec::with_capacity(cluster.subpaths.len());
            let mut rx_row = Vec::with_capacity(cluster.subpaths.len());
            for sub in &cluster.subpaths {
                tx_row.push(tx0.position + sub.departure.unit_vector().scale(r_tx));
                rx_row.push(rx0.position + sub.arrival.unit_vector().scale(r_rx));
            }
            tx_anchors.push(tx_row);
            rx_anchors.push(rx_row);
        }

        Ok(Scene {
            index,
            clusters,
            tx_anchors,
            rx_anchors,
            tx_mean_anchor,
            rx_mean_anchor,
            virtual_length,
            k_track,
        })
    }

    /// Draws the initial phases (and death times, when enabled) for one
    /// realization. Independent of scene geometry.
    pub fn phase_draw(&self, realization: u64) -> PhaseDraw<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(DRAW_STREAM_BASE.wrapping_add(realization));
        PhaseDraw::draw(
            &mut rng,
            self.cfg.cluster_params.n_clusters,
            self.cfg.cluster_params.m_subpaths,
            self.cfg.lambda_death,
        )
    }

    /// Builds a per-scene evaluator for the given output times (which must
    /// lie on the substep grid, within the simulated span). The evaluator
    /// owns the integrated phase tables; one evaluator serves any number of
    /// realizations over its scene.
    pub fn evaluator<'a>(&'a self, scene: &'a Scene<T>, times: &[T]) -> Result<SceneEvaluator<'a, T>> {
        SceneEvaluator::new(self, scene, times)
    }

    /// Convenience path: build an evaluator and synthesize one realization
    /// at the configured posture mode. Batch work should hold one evaluator
    /// and loop `phase_draw` indices instead, which amortizes the phase
    /// tables.
    pub fn realize(&self, scene: &Scene<T>, realization: u64, times: &[T]) -> Result<ChannelRealization<T>> {
        let evaluator = self.evaluator(scene, times)?;
        let draw = self.phase_draw(realization);
        let samples = evaluator.synthesize(self.cfg.posture_mode, &draw)?;
        Ok(ChannelRealization {
            samples,
            scene_index: scene.index,
            realization_index: realization,
        })
    }
}

/// Compensated (Kahan) accumulator; keeps cumulative trapezoid sums at
/// rounding-level accuracy over tens of thousands of substeps.
#[derive(Clone, Copy)]
struct Kahan<T> {
    sum: T,
    carry: T,
}

impl<T: Real> Kahan<T> {
    fn zero() -> Self {
        Kahan {
            sum: T::zero(),
            carry: T::zero(),
        }
    }

    fn add(&mut self, x: T) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> T {
        self.sum
    }
}

struct TerminalTrack<T> {
    positions: Vec<Vec3<T>>,
    velocities: Vec<Vec3<T>>,
}

fn build_track<T: Real>(profile: &MobilityProfile<T>, h: T, n_sub: usize) -> Result<TerminalTrack<T>> {
    let mut velocities = Vec::with_capacity(n_sub + 1);
    for k in 0..=n_sub {
        velocities.push(profile.velocity_at(T::of(k as f64) * h)?);
    }
    let mut positions = Vec::with_capacity(n_sub + 1);
    positions.push(profile.initial_position());
    let half = T::of(0.5);
    for k in 1..=n_sub {
        let step = (velocities[k - 1] + velocities[k]).scale(h * half);
        positions.push(positions[k - 1] + step);
    }
    Ok(TerminalTrack { positions, velocities })
}

/// Orientation-dependent caches for one posture mode.
struct ModeCache<T> {
    /// Combined Tx rotation (velocity rotation times posture, or velocity
    /// rotation alone for `Removed`) per output time.
    tx_rotation: Vec<RotationMatrix3<T>>,
    /// LoS polarization bilinear `FtV*FrV - FtH*FrH` per output time.
    los_bilinear: Vec<T>,
    /// Per-ray combo amplitudes `[VV, VH, HV, HH]`, `[path * nt + ti]`.
    /// Cross terms carry the 1/sqrt(XPR) factor.
    combos: Vec<[T; 4]>,
    /// Spatial phases of the model's own elements, `[p * (paths * nt) + path * nt + ti]`
    /// (the LoS path is stored separately below).
    tx_projection: Vec<T>,
    rx_projection: Vec<T>,
    tx_projection_los: Vec<T>,
    rx_projection_los: Vec<T>,
}

/// Phase tables and orientation caches for one scene, valid at a fixed set
/// of output times. Construction integrates Doppler phases once; all
/// per-realization work afterwards is trigonometry on cached values.
pub struct SceneEvaluator<'a, T: Real> {
    model: &'a ChannelModel<T>,
    scene: &'a Scene<T>,
    times: Vec<T>,
    slots: Vec<usize>,
    n_clusters: usize,
    rays: usize,
    k_wave: T,
    /// Integrated LoS Doppler phase per output time, rad.
    los_doppler: Vec<T>,
    /// Integrated per-ray Doppler phase, `[path * nt + ti]`, rad.
    nlos_doppler: Vec<T>,
    /// Propagation delays, seconds.
    los_delay: Vec<T>,
    cluster_delay: Vec<T>,
    /// World-frame unit directions at the output times.
    los_dir: Vec<Vec3<T>>,
    tx_dir: Vec<Vec3<T>>,
    rx_dir: Vec<Vec3<T>>,
    /// Rx velocity rotation per output time (shared by both posture modes).
    rx_rotation: Vec<RotationMatrix3<T>>,
    active: ModeCache<T>,
    removed: ModeCache<T>,
}

impl<'a, T: Real> SceneEvaluator<'a, T> {
    fn new(model: &'a ChannelModel<T>, scene: &'a Scene<T>, times: &[T]) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("at least one output time is required"));
        }
        let grid = model.cfg.grid;
        let h = grid.substep();
        let mut slots = Vec::with_capacity(times.len());
        for &t in times {
            if t > model.duration + T::of(1e-9) {
                return Err(Error::out_of_range(format!(
                    "time {} exceeds the simulated span {}",
                    t, model.duration,
                )));
            }
            slots.push(grid.substep_index(t)?);
        }
        slots.sort_unstable();
        slots.dedup();
        let times: Vec<T> = slots.iter().map(|&k| T::of(k as f64) * h).collect();
        let n_sub = *slots.last().expect("nonempty");

        let tx_track = build_track(&model.cfg.tx_profile, h, n_sub)?;
        let rx_track = build_track(&model.cfg.rx_profile, h, n_sub)?;

        let clusters = scene.clusters.clusters();
        let n_clusters = clusters.len();
        let rays = scene.clusters.m_subpaths();
        let nm = n_clusters * rays;
        let nt = times.len();
        let k_wave = model.cfg.carrier.wave_number();
        let c0 = model.cfg.carrier.c0();
        let half = T::of(0.5);

        let mut los_acc = Kahan::zero();
        let mut los_prev = T::zero();
        let mut acc = vec![Kahan::zero(); nm];
        let mut prev = vec![T::zero(); nm];
        let mut cur_tx_dir = vec![Vec3::zero(); nm];
        let mut cur_rx_dir = vec![Vec3::zero(); nm];

        let mut los_doppler = vec![T::zero(); nt];
        let mut nlos_doppler = vec![T::zero(); nm * nt];
        let mut los_delay = vec![T::zero(); nt];
        let mut cluster_delay = vec![T::zero(); n_clusters * nt];
        let mut los_dir = vec![Vec3::zero(); nt];
        let mut tx_dir = vec![Vec3::zero(); nm * nt];
        let mut rx_dir = vec![Vec3::zero(); nm * nt];

        for k in 0..=n_sub {
            let t = T::of(k as f64) * h;
            let tx_pos = tx_track.positions[k];
            let tx_vel = tx_track.velocities[k];
            let rx_pos = rx_track.positions[k];
            let rx_vel = rx_track.velocities[k];

            let sep = rx_pos - tx_pos;
            let dist = sep.norm();
            let s_los = sep.normalized().map_err(|_| {
                Error::degenerate(format!("terminals coincide at t = {}", t.as_f64()))
            })?;
            let g_los = (tx_vel - rx_vel).dot(s_los);
            if k > 0 {
                los_acc.add(h * half * (los_prev + g_los));
            }
            los_prev = g_los;

            for (n_i, cluster) in clusters.iter().enumerate() {
                let v_s = cluster.scatterer_velocity;
                let drift = v_s.scale(t);
                let rel_tx = tx_vel - v_s;
                let rel_rx = rx_vel - v_s;
                for m_i in 0..rays {
                    let idx = n_i * rays + m_i;
                    let s_tx = (scene.tx_anchors[n_i][m_i] + drift - tx_pos).normalized()?;
                    let s_rx = (scene.rx_anchors[n_i][m_i] + drift - rx_pos).normalized()?;
                    let g = rel_tx.dot(s_tx) + rel_rx.dot(s_rx);
                    if k > 0 {
                        acc[idx].add(h * half * (prev[idx] + g));
                    }
                    prev[idx] = g;
                    cur_tx_dir[idx] = s_tx;
                    cur_rx_dir[idx] = s_rx;
                }
            }

            if let Ok(ti) = slots.binary_search(&k) {
                los_doppler[ti] = k_wave * los_acc.value();
                los_delay[ti] = dist / c0;
                los_dir[ti] = s_los;
                for (n_i, cluster) in clusters.iter().enumerate() {
                    let drift = cluster.scatterer_velocity.scale(t);
                    let to_first = (scene.tx_mean_anchor[n_i] + drift - tx_pos).norm();
                    let from_last = (scene.rx_mean_anchor[n_i] + drift - rx_pos).norm();
                    cluster_delay[n_i * nt + ti] =
                        (to_first + scene.virtual_length[n_i] + from_last) / c0;
                }
                for idx in 0..nm {
                    nlos_doppler[idx * nt + ti] = k_wave * acc[idx].value();
                    tx_dir[idx * nt + ti] = cur_tx_dir[idx];
                    rx_dir[idx * nt + ti] = cur_rx_dir[idx];
                }
            }
        }

        let mut rx_rotation = Vec::with_capacity(nt);
        for &t in &times {
            let state = sample_state(&model.cfg.rx_profile, t)?;
            rx_rotation.push(state.velocity_rotation());
        }

        let active = build_mode_cache(
            model, scene, &times, &los_dir, &tx_dir, &rx_dir, &rx_rotation, k_wave, true,
        )?;
        let removed = build_mode_cache(
            model, scene, &times, &los_dir, &tx_dir, &rx_dir, &rx_rotation, k_wave, false,
        )?;

        Ok(SceneEvaluator {
            model,
            scene,
            times,
            slots,
            n_clusters,
            rays,
            k_wave,
            los_doppler,
            nlos_doppler,
            los_delay,
            cluster_delay,
            los_dir,
            tx_dir,
            rx_dir,
            rx_rotation,
            active,
            removed,
        })
    }

    /// The output times this evaluator serves, sorted and deduplicated.
    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn scene(&self) -> &Scene<T> {
        self.scene
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn rays_per_cluster(&self) -> usize {
        self.rays
    }

    pub fn wave_number(&self) -> T {
        self.k_wave
    }

    fn mode_cache(&self, mode: PostureMode) -> &ModeCache<T> {
        match mode {
            PostureMode::Active => &self.active,
            PostureMode::Removed => &self.removed,
        }
    }

    /// Index of `t` in `times()`, or an error if `t` was not requested.
    pub fn time_index(&self, t: T) -> Result<usize> {
        let slot = self.model.cfg.grid.substep_index(t)?;
        self.slots
            .binary_search(&slot)
            .map_err(|_| Error::invalid(format!("time {} was not requested when the evaluator was built", t)))
    }

    fn check_path(&self, path: PathRef) -> Result<()> {
        if let PathRef::SubPath { cluster, ray } = path {
            if cluster >= self.n_clusters || ray >= self.rays {
                return Err(Error::out_of_range(format!(
                    "path ({cluster}, {ray}) outside {} clusters x {} rays",
                    self.n_clusters, self.rays,
                )));
            }
        }
        Ok(())
    }

    fn check_elements(&self, q: usize, p: usize) -> Result<()> {
        if q >= self.model.cfg.rx_array.len() || p >= self.model.cfg.tx_array.len() {
            return Err(Error::out_of_range(format!(
                "element pair ({q}, {p}) outside {} x {} arrays",
                self.model.cfg.rx_array.len(),
                self.model.cfg.tx_array.len(),
            )));
        }
        Ok(())
    }

    /// Integrated Doppler phase of the direct path at `t`, rad.
    pub fn doppler_phase_los(&self, t: T) -> Result<T> {
        Ok(self.los_doppler[self.time_index(t)?])
    }

    /// Integrated Doppler phase of ray `ray` in cluster `cluster` at `t`, rad.
    pub fn doppler_phase_nlos(&self, cluster: usize, ray: usize, t: T) -> Result<T> {
        self.check_path(PathRef::SubPath { cluster, ray })?;
        let ti = self.time_index(t)?;
        Ok(self.nlos_doppler[(cluster * self.rays + ray) * self.times.len() + ti])
    }

    /// Propagation delay of the chosen path at `t`, seconds.
    pub fn path_delay(&self, path: PathRef, t: T) -> Result<T> {
        self.check_path(path)?;
        let ti = self.time_index(t)?;
        Ok(match path {
            PathRef::Los => self.los_delay[ti],
            PathRef::SubPath { cluster, .. } => self.cluster_delay[cluster * self.times.len() + ti],
        })
    }

    /// World-frame departure/arrival unit directions of a path at `t`.
    pub fn world_directions(&self, path: PathRef, t: T) -> Result<(Vec3<T>, Vec3<T>)> {
        self.check_path(path)?;
        let ti = self.time_index(t)?;
        Ok(match path {
            PathRef::Los => (self.los_dir[ti], -self.los_dir[ti]),
            PathRef::SubPath { cluster, ray } => {
                let idx = (cluster * self.rays + ray) * self.times.len() + ti;
                (self.tx_dir[idx], self.rx_dir[idx])
            }
        })
    }

    /// Array-frame effective directions (after velocity and, for `Active`,
    /// posture rotation) of a path at `t`. Spatial phases and patterns are
    /// both evaluated at these vectors.
    pub fn effective_directions(&self, mode: PostureMode, path: PathRef, t: T) -> Result<(Vec3<T>, Vec3<T>)> {
        let (s_tx, s_rx) = self.world_directions(path, t)?;
        let ti = self.time_index(t)?;
        let cache = self.mode_cache(mode);
        Ok((cache.tx_rotation[ti].apply(s_tx), self.rx_rotation[ti].apply(s_rx)))
    }

    /// Field-pattern factors `((FtV, FtH), (FrV, FrH))` of a path at `t`.
    pub fn pattern_factors(&self, mode: PostureMode, path: PathRef, t: T) -> Result<((T, T), (T, T))> {
        let (d_tx, d_rx) = self.effective_directions(mode, path, t)?;
        Ok((
            self.model.cfg.tx_array.pattern().evaluate(d_tx),
            self.model.cfg.rx_array.pattern().evaluate(d_rx),
        ))
    }

    /// Combined element phase `k * (r_p . d_tx) + k * (r_q . d_rx)` for one
    /// element pair and path at `t`, rad.
    pub fn spatial_phase(&self, mode: PostureMode, path: PathRef, q: usize, p: usize, t: T) -> Result<T> {
        self.check_elements(q, p)?;
        self.check_path(path)?;
        let ti = self.time_index(t)?;
        let cache = self.mode_cache(mode);
        let nt = self.times.len();
        Ok(match path {
            PathRef::Los => cache.tx_projection_los[p * nt + ti] + cache.rx_projection_los[q * nt + ti],
            PathRef::SubPath { cluster, ray } => {
                let path_idx = cluster * self.rays + ray;
                let nm = self.n_clusters * self.rays;
                cache.tx_projection[p * nm * nt + path_idx * nt + ti]
                    + cache.rx_projection[q * nm * nt + path_idx * nt + ti]
            }
        })
    }

    /// Polarization combo amplitudes `[VV, VH, HV, HH]` of one ray at `t`;
    /// cross terms already carry the 1/sqrt(XPR) factor.
    pub fn combo_amplitudes(&self, mode: PostureMode, cluster: usize, ray: usize, t: T) -> Result<[T; 4]> {
        self.check_path(PathRef::SubPath { cluster, ray })?;
        let ti = self.time_index(t)?;
        Ok(self.mode_cache(mode).combos[(cluster * self.rays + ray) * self.times.len() + ti])
    }

    /// Direct-path coefficient (unit power: no Ricean weight) for element
    /// pair `(q, p)` at `t`.
    pub fn los_coefficient(&self, mode: PostureMode, draw: &PhaseDraw<T>, q: usize, p: usize, t: T) -> Result<Cplx<T>> {
        self.check_elements(q, p)?;
        let ti = self.time_index(t)?;
        Ok(self.los_at(mode, draw, q, p, ti))
    }

    fn los_at(&self, mode: PostureMode, draw: &PhaseDraw<T>, q: usize, p: usize, ti: usize) -> Cplx<T> {
        let cache = self.mode_cache(mode);
        let nt = self.times.len();
        let phase = draw.los
            + self.los_doppler[ti]
            + cache.tx_projection_los[p * nt + ti]
            + cache.rx_projection_los[q * nt + ti];
        cis(phase) * cache.los_bilinear[ti]
    }

    /// Scattered coefficient of one cluster (unit power: includes the
    /// 1/sqrt(rays) normalization but neither cluster power nor Ricean or
    /// survival weights) for element pair `(q, p)` at `t`.
    pub fn nlos_coefficient(
        &self,
        mode: PostureMode,
        draw: &PhaseDraw<T>,
        cluster: usize,
        q: usize,
        p: usize,
        t: T,
    ) -> Result<Cplx<T>> {
        self.check_elements(q, p)?;
        self.check_path(PathRef::SubPath { cluster, ray: 0 })?;
        let ti = self.time_index(t)?;
        Ok(self.nlos_at(mode, draw, cluster, q, p, ti))
    }

    fn nlos_at(&self, mode: PostureMode, draw: &PhaseDraw<T>, cluster: usize, q: usize, p: usize, ti: usize) -> Cplx<T> {
        let cache = self.mode_cache(mode);
        let nt = self.times.len();
        let nm = self.n_clusters * self.rays;
        let init = draw.cluster_init[cluster];
        let mut sum = Cplx::new(T::zero(), T::zero());
        for ray in 0..self.rays {
            let path_idx = cluster * self.rays + ray;
            let base = init
                + self.nlos_doppler[path_idx * nt + ti]
                + cache.tx_projection[p * nm * nt + path_idx * nt + ti]
                + cache.rx_projection[q * nm * nt + path_idx * nt + ti];
            let combos = cache.combos[path_idx * nt + ti];
            let pol = draw.pol[path_idx];
            for c in 0..4 {
                sum = sum + cis(base + pol[c]) * combos[c];
            }
        }
        sum * (T::one() / T::of(self.rays as f64)).sqrt()
    }

    /// Full coefficient matrix at `t`: Ricean-weighted LoS term plus one
    /// power-, survival-, and Ricean-weighted term per cluster, with delays.
    pub fn cir_matrix(&self, mode: PostureMode, draw: &PhaseDraw<T>, t: T) -> Result<CirSample<T>> {
        let ti = self.time_index(t)?;
        let t = self.times[ti];
        let n_tx = self.model.cfg.tx_array.len();
        let n_rx = self.model.cfg.rx_array.len();
        let k_factor = self.scene.k_factor_at(t);
        let (w_los, w_nlos) = ricean_weights(k_factor)?;
        let nt = self.times.len();

        let mut los_term = Vec::with_capacity(n_rx * n_tx);
        for q in 0..n_rx {
            for p in 0..n_tx {
                los_term.push(self.los_at(mode, draw, q, p, ti) * w_los);
            }
        }

        let clusters = self.scene.clusters.clusters();
        let mut cluster_terms = Vec::with_capacity(self.n_clusters);
        let mut cluster_delays = Vec::with_capacity(self.n_clusters);
        let mut alive = Vec::with_capacity(self.n_clusters);
        for n_i in 0..self.n_clusters {
            cluster_delays.push(self.cluster_delay[n_i * nt + ti]);
            let is_alive = draw.alive(n_i, t) && clusters[n_i].alive;
            alive.push(is_alive);
            if !is_alive {
                cluster_terms.push(vec![Cplx::new(T::zero(), T::zero()); n_rx * n_tx]);
                continue;
            }
            let amp = w_nlos * clusters[n_i].power.sqrt();
            let mut term = Vec::with_capacity(n_rx * n_tx);
            for q in 0..n_rx {
                for p in 0..n_tx {
                    term.push(self.nlos_at(mode, draw, n_i, q, p, ti) * amp);
                }
            }
            cluster_terms.push(term);
        }

        Ok(CirSample {
            time: t,
            n_rx,
            n_tx,
            los_term,
            cluster_terms,
            los_delay: self.los_delay[ti],
            cluster_delays,
            k_factor,
            alive,
        })
    }

    /// Synthesizes one realization at every evaluator time.
    pub fn synthesize(&self, mode: PostureMode, draw: &PhaseDraw<T>) -> Result<Vec<CirSample<T>>> {
        if draw.cluster_init.len() != self.n_clusters || draw.pol.len() != self.n_clusters * self.rays {
            return Err(Error::invalid("phase draw shape does not match the scene"));
        }
        self.times
            .iter()
            .map(|&t| self.cir_matrix(mode, draw, t))
            .collect()
    }

    pub(crate) fn los_doppler_table(&self) -> &[T] {
        &self.los_doppler
    }

    pub(crate) fn nlos_doppler_table(&self) -> &[T] {
        &self.nlos_doppler
    }

    pub(crate) fn combos_table(&self, mode: PostureMode) -> &[[T; 4]] {
        &self.mode_cache(mode).combos
    }

    pub(crate) fn los_bilinear_table(&self, mode: PostureMode) -> &[T] {
        &self.mode_cache(mode).los_bilinear
    }

    pub(crate) fn tx_projection_table(&self, mode: PostureMode) -> &[T] {
        &self.mode_cache(mode).tx_projection
    }

    pub(crate) fn rx_projection_table(&self, mode: PostureMode) -> &[T] {
        &self.mode_cache(mode).rx_projection
    }

    pub(crate) fn tx_projection_los_table(&self, mode: PostureMode) -> &[T] {
        &self.mode_cache(mode).tx_projection_los
    }

    pub(crate) fn rx_projection_los_table(&self, mode: PostureMode) -> &[T] {
        &self.mode_cache(mode).rx_projection_los
    }






}

#[allow(clippy::too_many_arguments)]
fn build_mode_cache<T: Real>(
    model: &ChannelModel<T>,
    scene: &Scene<T>,
    times: &[T],
    los_dir: &[Vec3<T>],
    tx_dir: &[Vec3<T>],
    rx_dir: &[Vec3<T>],
    rx_rotation: &[RotationMatrix3<T>],
    k_wave: T,
    use_posture: bool,
) -> Result<ModeCache<T>> {
    let nt = times.len();
    let clusters = scene.clusters.clusters();
    let rays = scene.clusters.m_subpaths();
    let nm = clusters.len() * rays;
    let n_tx = model.cfg.tx_array.len();
    let n_rx = model.cfg.rx_array.len();

    let mut tx_rotation = Vec::with_capacity(nt);
    for &t in times {
        let state = sample_state(&model.cfg.tx_profile, t)?;
        let base = velocity_rotation_matrix(&state.heading);
        let combined = if use_posture {
            base * posture_matrix(&state.posture)
        } else {
            base * RotationMatrix3::identity()
        };
        tx_rotation.push(combined);
    }

    let tx_pattern = model.cfg.tx_array.pattern();
    let rx_pattern = model.cfg.rx_array.pattern();
    let tx_elements = model.cfg.tx_array.elements();
    let rx_elements = model.cfg.rx_array.elements();

    let mut los_bilinear = vec![T::zero(); nt];
    let mut tx_projection_los = vec![T::zero(); n_tx * nt];
    let mut rx_projection_los = vec![T::zero(); n_rx * nt];
    let mut combos = vec![[T::zero(); 4]; nm * nt];
    let mut tx_projection = vec![T::zero(); n_tx * nm * nt];
    let mut rx_projection = vec![T::zero(); n_rx * nm * nt];

    for ti in 0..nt {
        let d_tx = tx_rotation[ti].apply(los_dir[ti]);
        let d_rx = rx_rotation[ti].apply(-los_dir[ti]);
        let (ftv, fth) = tx_pattern.evaluate(d_tx);
        let (frv, frh) = rx_pattern.evaluate(d_rx);
        los_bilinear[ti] = ftv * frv - fth * frh;
        for (p, r_p) in tx_elements.iter().enumerate() {
            tx_projection_los[p * nt + ti] = k_wave * r_p.dot(d_tx);
        }
        for (q, r_q) in rx_elements.iter().enumerate() {
            rx_projection_los[q * nt + ti] = k_wave * r_q.dot(d_rx);
        }

        for (n_i, cluster) in clusters.iter().enumerate() {
            for (m_i, sub) in cluster.subpaths.iter().enumerate() {
                let path_idx = n_i * rays + m_i;
                let d_tx = tx_rotation[ti].apply(tx_dir[path_idx * nt + ti]);
                let d_rx = rx_rotation[ti].apply(rx_dir[path_idx * nt + ti]);
                let (ftv, fth) = tx_pattern.evaluate(d_tx);
                let (frv, frh) = rx_pattern.evaluate(d_rx);
                let cross = (T::one() / sub.xpr).sqrt();
                combos[path_idx * nt + ti] = [ftv * frv, cross * ftv * frh, cross * fth * frv, fth * frh];
                for (p, r_p) in tx_elements.iter().enumerate() {
                    tx_projection[p * nm * nt + path_idx * nt + ti] = k_wave * r_p.dot(d_tx);
                }
                for (q, r_q) in rx_elements.iter().enumerate() {
                    rx_projection[q * nm * nt + path_idx * nt + ti] = k_wave * r_q.dot(d_rx);
                }
            }
        }
    }

    Ok(ModeCache {
        tx_rotation,
        los_bilinear,
        combos,
        tx_projection,
        rx_projection,
        tx_projection_los,
        rx_projection_los,
    })
}

/// One output-time sample of the channel: the weighted LoS term, one
/// weighted term per cluster, and the per-path delays. `matrix()` collapses
/// the terms into the composite coefficient matrix; `transfer_function`
/// applies the delay phasors instead.
#[derive(Clone, Debug)]
pub struct CirSample<T> {
    pub time: T,
    pub n_rx: usize,
    pub n_tx: usize,
    /// Ricean-weighted LoS term, row-major `[q * n_tx + p]`.
    pub los_term: Vec<Cplx<T>>,
    /// Ricean-, power-, and survival-weighted cluster terms.
    pub cluster_terms: Vec<Vec<Cplx<T>>>,
    /// Direct-path delay, seconds.
    pub los_delay: T,
    /// Per-cluster delay, seconds.
    pub cluster_delays: Vec<T>,
    /// Linear K factor in effect at this time.
    pub k_factor: T,
    /// Survival indicator per cluster.
    pub alive: Vec<bool>,
}

impl<T: Real> CirSample<T> {
    /// Composite coefficient matrix, row-major `[q * n_tx + p]`.
    pub fn matrix(&self) -> Vec<Cplx<T>> {
        let mut out = self.los_term.clone();
        for term in &self.cluster_terms {
            for (slot, value) in out.iter_mut().zip(term) {
                *slot = *slot + *value;
            }
        }
        out
    }

    /// Composite entry for element pair `(q, p)`.
    pub fn entry(&self, q: usize, p: usize) -> Result<Cplx<T>> {
        if q >= self.n_rx || p >= self.n_tx {
            return Err(Error::out_of_range(format!(
                "element pair ({q}, {p}) outside {} x {} matrix",
                self.n_rx, self.n_tx,
            )));
        }
        let idx = q * self.n_tx + p;
        let mut value = self.los_term[idx];
        for term in &self.cluster_terms {
            value = value + term[idx];
        }
        Ok(value)
    }

    /// Frequency response at `f` Hz (relative to the carrier): each path
    /// term rotated by `exp(-j * 2 * pi * f * delay)`. At `f = 0` this is
    /// exactly the composite matrix.
    pub fn transfer_function(&self, f: T) -> Result<Vec<Cplx<T>>> {
        if !f.is_finite() {
            return Err(Error::invalid("frequency must be finite"));
        }
        let tau = T::TAU();
        let mut out = Vec::with_capacity(self.n_rx * self.n_tx);
        let los_rot = cis(-tau * f * self.los_delay);
        for value in &self.los_term {
            out.push(*value * los_rot);
        }
        for (term, &delay) in self.cluster_terms.iter().zip(&self.cluster_delays) {
            let rot = cis(-tau * f * delay);
            for (slot, value) in out.iter_mut().zip(term) {
                *slot = *slot + *value * rot;
            }
        }
        Ok(out)
    }
}

/// A full synthesized realization: one [`CirSample`] per output time plus
/// the indices that reproduce it.
#[derive(Clone, Debug)]
pub struct ChannelRealization<T> {
    samples: Vec<CirSample<T>>,
    scene_index: u64,
    realization_index: u64,
}

impl<T: Real> ChannelRealization<T> {
    pub fn samples(&self) -> &[CirSample<T>] {
        &self.samples
    }

    pub fn scene_index(&self) -> u64 {
        self.scene_index
    }

    pub fn realization_index(&self) -> u64 {
        self.realization_index
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        self.samples.iter().map(|s| s.time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::antenna::{FieldPattern, SPEED_OF_LIGHT};
    use crate::mobility::preset_scenario;
    use approx::assert_relative_eq;

    fn isotropic_array(n: usize, spacing: f64) -> AntennaArray<f64> {
        AntennaArray::uniform_linear(n, spacing, Vec3::new(1.0, 0.0, 0.0), FieldPattern::Isotropic).unwrap()
    }

    fn small_params(n: usize, m: usize) -> ClusterGenParams<f64> {
        ClusterGenParams {
            n_clusters: n,
            m_subpaths: m,
            ..ClusterGenParams::default()
        }
    }

    fn base_config(
        tx: MobilityProfile<f64>,
        rx: MobilityProfile<f64>,
        params: ClusterGenParams<f64>,
    ) -> ChannelModelConfig<f64> {
        ChannelModelConfig {
            tx_profile: tx,
            rx_profile: rx,
            tx_array: isotropic_array(1, 0.0),
            rx_array: isotropic_array(1, 0.0),
            carrier: CarrierConfig::new(2.4e9).unwrap(),
            cluster_params: params,
            bounce: BounceGeometry::default(),
            ricean: RiceanProcess::new(7.0, 0.0, 0.1, 77).unwrap(),
            lambda_death: 0.0,
            lambda_birth: 0.0,
            grid: TimeGrid::default(),
            posture_mode: PostureMode::Active,
            seed: 0x0ddba11,
        }
    }

    fn static_model(n: usize, m: usize) -> ChannelModel<f64> {
        let (tx, rx) = preset_scenario::<f64>("static").unwrap();
        ChannelModel::new(base_config(tx, rx, small_params(n, m))).unwrap()
    }

    #[test]
    fn doppler_phases_vanish_for_static_terminals() {
        let model = static_model(3, 4);
        let scene = model.scene(0).unwrap();
        let evaluator = model.evaluator(&scene, &[0.0, 0.5, 1.0]).unwrap();
        for &t in evaluator.times() {
            assert!(evaluator.doppler_phase_los(t).unwrap().abs() <= 1e-12);
            for n in 0..3 {
                for m in 0..4 {
                    assert!(evaluator.doppler_phase_nlos(n, m, t).unwrap().abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn los_doppler_matches_closed_form_for_radial_motion() {
        // Tx closes on a distant static Rx along +x; the LoS direction stays
        // (1, 0, 0) to within 1/separation, so the phase is k * v * t.
        let tx = MobilityProfile::uniform(Vec3::new(0.0, 0.0, 0.0), 50.0, SphericalAngles::new(0.0, 0.0).unwrap(), 2.5).unwrap();
        let rx = MobilityProfile::uniform(Vec3::new(1.0e7, 0.0, 0.0), 0.0, SphericalAngles::new(0.0, 0.0).unwrap(), 2.5).unwrap();
        let model = ChannelModel::new(base_config(tx, rx, small_params(1, 1))).unwrap();
        let scene = model.scene(0).unwrap();
        let times = [0.0, 0.001, 0.5, 1.0, 2.0];
        let evaluator = model.evaluator(&scene, &times).unwrap();
        let k = model.carrier().wave_number();
        let mut worst = 0.0f64;
        for &t in evaluator.times() {
            let expected = k * 50.0 * t;
            let err = (evaluator.doppler_phase_los(t).unwrap() - expected).abs();
            worst = worst.max(err);
        }
        println!("closed-form LoS Doppler worst error: {worst:.3e} rad");
        assert!(worst <= 1e-9, "worst error {worst}");
        assert_relative_eq!(
            evaluator.doppler_phase_los(0.001).unwrap(),
            2.5147,
            max_relative = 1e-3
        );
    }

    #[test]
    fn nlos_doppler_vanishes_for_comoving_scatterers() {
        let heading = SphericalAngles::new(0.0, 0.0).unwrap();
        let tx = MobilityProfile::uniform(Vec3::new(0.0, 0.0, 120.0), 10.0, heading, 2.0).unwrap();
        let rx = MobilityProfile::uniform(Vec3::new(300.0, 200.0, 0.0), 10.0, heading, 2.0).unwrap();
        let model = ChannelModel::new(base_config(tx, rx, small_params(2, 3))).unwrap();
        let mut scene = model.scene(0).unwrap();
        let shared = Vec3::new(10.0, 0.0, 0.0);
        for cluster in scene.clusters.clusters_mut() {
            cluster.scatterer_velocity = shared;
        }
        let evaluator = model.evaluator(&scene, &[0.0, 1.0, 2.0]).unwrap();
        for &t in evaluator.times() {
            for n in 0..2 {
                for m in 0..3 {
                    let phase = evaluator.doppler_phase_nlos(n, m, t).unwrap();
                    assert!(phase.abs() <= 1e-9, "phase {phase} at t = {t}");
                }
            }
        }
    }

    #[test]
    fn doppler_phase_starts_at_zero() {
        let (tx, rx) = preset_scenario::<f64>("paper-fig3").unwrap();
        let model = ChannelModel::new(base_config(tx, rx, small_params(2, 2))).unwrap();
        let scene = model.scene(0).unwrap();
        let evaluator = model.evaluator(&scene, &[0.0, 1.0]).unwrap();
        assert_eq!(evaluator.doppler_phase_los(0.0).unwrap(), 0.0);
        assert_eq!(evaluator.doppler_phase_nlos(1, 1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn doppler_step_halving_stays_below_tolerance() {
        let (tx, rx) = preset_scenario::<f64>("paper-fig3").unwrap();
        let mut cfg = base_config(tx, rx, small_params(4, 4));
        cfg.grid = TimeGrid::new(1e-3, 32).unwrap();
        let coarse = ChannelModel::new(cfg.clone()).unwrap();
        cfg.grid = TimeGrid::new(1e-3, 64).unwrap();
        let fine = ChannelModel::new(cfg).unwrap();
        let scene_c = coarse.scene(0).unwrap();
        let scene_f = fine.scene(0).unwrap();
        let times = [0.5, 1.0, 2.0];
        let ev_c = coarse.evaluator(&scene_c, &times).unwrap();
        let ev_f = fine.evaluator(&scene_f, &times).unwrap();
        let mut worst = 0.0f64;
        for &t in &times {
            worst = worst.max((ev_c.doppler_phase_los(t).unwrap() - ev_f.doppler_phase_los(t).unwrap()).abs());
            for n in 0..4 {
                for m in 0..4 {
                    let a = ev_c.doppler_phase_nlos(n, m, t).unwrap();
                    let b = ev_f.doppler_phase_nlos(n, m, t).unwrap();
                    worst = worst.max((a - b).abs());
                }
            }
        }
        println!("substep halving worst phase change: {worst:.3e} rad");
        assert!(worst < 1e-6, "worst change {worst}");
    }

    #[test]
    fn phase_increments_respect_speed_bound() {
        let (tx, rx) = preset_scenario::<f64>("paper-fig3").unwrap();
        let model = ChannelModel::new(base_config(tx, rx, small_params(3, 3))).unwrap();
        let scene = model.scene(1).unwrap();
        let times: Vec<f64> = (0..=200).map(|i| i as f64 * 1e-3).collect();
        let evaluator = model.evaluator(&scene, &times).unwrap();
        let k = model.carrier().wave_number();
        let bound = k * (50.0 + 20.0) * 1e-3 * 1.0001;
        for w in evaluator.times().windows(2) {
            let d_los =
                (evaluator.doppler_phase_los(w[1]).unwrap() - evaluator.doppler_phase_los(w[0]).unwrap()).abs();
            assert!(d_los <= bound, "LoS increment {d_los} exceeds {bound}");
            for n in 0..3 {
                for m in 0..3 {
                    let a = evaluator.doppler_phase_nlos(n, m, w[0]).unwrap();
                    let b = evaluator.doppler_phase_nlos(n, m, w[1]).unwrap();
                    assert!((b - a).abs() <= bound, "increment {} exceeds {bound}", (b - a).abs());
                }
            }
        }
    }

    #[test]
    fn spatial_phase_is_zero_for_single_centered_element() {
        let model = static_model(2, 2);
        let scene = model.scene(0).unwrap();
        let evaluator = model.evaluator(&scene, &[0.0, 1.0]).unwrap();
        for &t in evaluator.times() {
            for path in [PathRef::Los, PathRef::SubPath { cluster: 1, ray: 0 }] {
                for mode in [PostureMode::Active, PostureMode::Removed] {
                    assert_eq!(evaluator.spatial_phase(mode, path, 0, 0, t).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn spatial_phase_matches_hand_formula_without_rotation() {
        // Static terminals, zero heading and posture: rotations are exact
        // identities, so the phase is k * (r_p . s_tx + r_q . s_rx).
        let (tx, rx) = preset_scenario::<f64>("static").unwrap();
        let mut cfg = base_config(tx, rx, small_params(1, 1));
        cfg.tx_array =
            AntennaArray::uniform_linear(2, 0.25, Vec3::new(0.0, 0.0, 1.0), FieldPattern::Isotropic).unwrap();
        cfg.rx_array =
            AntennaArray::uniform_linear(2, 0.125, Vec3::new(0.0, 1.0, 0.0), FieldPattern::Isotropic).unwrap();
        let model = ChannelModel::new(cfg).unwrap();
        let scene = model.scene(0).unwrap();
        let evaluator = model.evaluator(&scene, &[0.5]).unwrap();
        let k = model.carrier().wave_number();
        // Geometry of the `static` preset: Tx (0, 0, 100), Rx (60, 80, 0).
        let s = Vec3::new(60.0, 80.0, -100.0).normalized().unwrap();
        let r_p = Vec3::new(0.0, 0.0, 0.125);
        let r_q = Vec3::new(0.0, 0.0625, 0.0);
        let expected = k * (r_p.dot(s) + r_q.dot(-s));
        let got = evaluator
            .spatial_phase(PostureMode::Active, PathRef::Los, 1, 1, 0.5)
            .unwrap();
        assert_relative_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn posture_rotation_moves_spatial_phase() {
        let (tx, rx) = preset_scenario::<f64>("paper-fig3").unwrap();
        let mut cfg = base_config(tx, rx, small_params(1, 1));
        cfg.tx_array =
            AntennaArray::uniform_linear(2, 0.25, Vec3::new(1.0, 0.0, 0.0), FieldPattern::Isotropic).unwrap();
        let model = ChannelModel::new(cfg).unwrap();
        let scene = model.scene(0).unwrap();
        let evaluator = model.evaluator(&scene, &[0.0, 1.5]).unwrap();
        // Posture is still zero at t = 0: both modes agree exactly.
        let on0 = evaluator.spatial_phase(PostureMode::Active, PathRef::Los, 0, 1, 0.0).unwrap();
        let off0 = evaluator.spatial_phase(PostureMode::Removed, PathRef::Los, 0, 1, 0.0).unwrap();
        assert_eq!(on0, off0);
        // At t = 1.5 the pitch ramp has completed: modes must differ.
        let on = evaluator.spatial_phase(PostureMode::Active, PathRef::Los, 0, 1, 1.5).unwrap();
        let off = evaluator.spatial_phase(PostureMode::Removed, PathRef::Los, 0, 1, 1.5).unwrap();
        assert!((on - off).abs() > 1e-3, "expected a posture-induced shift, got {}", (on - off).abs());
    }

    #[test]
    fn los_coefficient_is_unit_modulus_for_isotropic_patterns() {
        let model = static_model(2, 2);
        let scene = model.scene(0).unwrap();
        let evaluator = model.evaluator(&scene, &[0.0, 0.5, 1.0]).unwrap();
        let draw = model.phase_draw(0);
        for &t in evaluator.times() {
            let h = evaluator.los_coefficient(PostureMode::Active, &draw, 0, 0, t).unwrap();
            assert_relative_eq!(h.norm(), 1.0, epsilon = 1e-12);
            let phase = draw.los
                + evaluator.doppler_phase_los(t).unwrap()
                + evaluator.spatial_phase(PostureMode::Active, PathRef::Los, 0, 0, t).unwrap();
            let aligned = h * cis(-phase);
            assert_relative_eq!(aligned.re, 1.0, epsilon = 1e-12);
            assert!(aligned.im.abs() <= 1e-12);
        }
    }

    #[test]
    fn pure_horizontal_patterns_flip_the_los_sign() {
        // Slant pi/2 on both sides puts all power in the H port; the
        // LoS polarization coupling is diag(1, -1), so the product flips sign.
        let (tx, rx) = preset_scenario::<f64>("static").unwrap();
        let mut cfg = base_config(tx, rx, small_params(1, 1));
        let horizontal = |boresight| FieldPattern::directional(boresight, std::f64::consts::FRAC_PI_2).unwrap();
        // Boresight along the LoS so the amplitude stays at 1.
        let s = Vec3::new(60.0, 80.0, -100.0).normalized().unwrap();
        cfg.tx_array = AntennaArray::new(vec![Vec3::zero()], horizontal(s)).unwrap();
        cfg.rx_array = AntennaArray::new(vec![Vec3::zero()], horizontal(-s)).unwrap();
        let model = ChannelModel::new(cfg).unwrap();
        let scene = model.scene(0).unwrap();
        let evaluator = model.evaluator(&scene, &[0.0]).unwrap();
        let draw = model.phase_draw(3);
        let h = evaluator.los_coefficient(PostureMode::Active, &draw, 0, 0, 0.0).unwrap();
        let phase = draw.los; // Doppler and spatial phases are zero here.
        let aligned = h * cis(-phase);
        assert_relative_eq!(aligned.re, -1.0, epsilon = 1e-12);
        assert!(aligned.im.abs() <= 1e-12);
    }

    #[test]
    fn single_ray_cluster_has_unit_modulus() {
        let model = static_model(1, 1);
        let scene = model.scene(0).unwrap();
        let evaluator = model.evaluator(&scene, &[0.0, 1.0]).unwrap();
        let draw = model.phase_draw(1);
        for &t in evaluator.times() {
            let h = evaluator.nlos_coefficient(PostureMode::Active, &draw, 0, 0, 0, t).unwrap();
            assert_relative_eq!(h.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cluster_power_is_unit_on_average() {
        let model = static_model(1, 20);
        let scene = model.scene(0).unwrap();
        let evaluator = model.evaluator(&scene, &[0.0]).unwrap();
        let n_draws = 10_000u64;
        let mut sum = 0.0f64;
        for r in 0..n_draws {
            let draw = model.phase_draw(r);
            let h = evaluator.nlos_coefficient(PostureMode::Active, &draw, 0, 0, 0, 0.0).unwrap();
            sum += h.norm_sqr();
        }
        let mean = sum / n_draws as f64;
        println!("mean cluster power over {n_draws} draws: {mean:.4}");
        assert!((mean - 1.0).abs() <= 0.05, "mean power {mean}");
    }

    #[test]
    fn many_ray_amplitude_is_rayleigh() {
        // 20 independent unit rays: the amplitude must pass a KS test
        // against Rayleigh with E[r^2] = 1 at the 1% level.
        let model = static_model(1, 20);
        let scene = model.scene(0).unwrap();
        let evaluator = model.evaluator(&scene, &[0.0]).unwrap();
        let n_draws = 10_000usize;
        let mut amps: Vec<f64> = (0..n_draws)
            .map(|r| {
                let draw = model.phase_draw(r as u64);
                evaluator
                    .nlos_coefficient(PostureMode::Active, &draw, 0, 0, 0, 0.0)
                    .unwrap()
                    .norm()
            })
            .collect();
        amps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d = 0.0f64;
        for (i, &a) in amps.iter().enumerate() {
            let cdf = 1.0 - (-a * a).exp();
            let lo = i as f64 / n_draws as f64;
            let hi = (i + 1) as f64 / n_draws as f64;
            d = d.max((cdf - lo).abs()).max((cdf - hi).abs());
        }
        let critical = 1.628 / (n_draws as f64).sqrt();
        println!("KS statistic {d:.5}, critical {critical:.5}");
        assert!(d < critical, "KS statistic {d} >= {critical}");
    }

    #[test]
    fn composite_mean_power_is_unit() {
        let (tx, rx) = preset_scenario::<f64>("straight-line").unwrap();
        let mut cfg = base_config(tx, rx, small_params(6, 8));
        cfg.ricean = RiceanProcess::new(7.0, 4.0, 0.1, 9).unwrap();
        let model = ChannelModel::new(cfg).unwrap();
        let scene = model.scene(0).unwrap();
        let times: Vec<f64> = (0..10).map(|i| i as f64 * 0.05).collect();
        let evaluator = model.evaluator(&scene, &times).unwrap();
        let n_real = 200u64;
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for r in 0..n_real {
            let draw = model.phase_draw(r);
            for sample in evaluator.synthesize(PostureMode::Active, &draw).unwrap() {
                sum += sample.entry(0, 0).unwrap().norm_sqr();
                count += 1;
            }
        }
        let mean = sum / count as f64;
        println!("mean composite power over {n_real} realizations: {mean:.4}");
        assert!((mean - 1.0).abs() <= 0.05, "mean power {mean}");
    }

    #[test]
    fn ricean_weights_cover_limits() {
        let (w_los, w_nlos) = ricean_weights(0.0).unwrap();
        assert_eq!(w_los, 0.0);
        assert_eq!(w_nlos, 1.0);
        let (w_los, w_nlos) = ricean_weights(1.0).unwrap();
        assert_relative_eq!(w_los, 0.5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(w_nlos, 0.5f64.sqrt(), epsilon = 1e-15);
        let (w_los, w_nlos) = ricean_weights(1e12).unwrap();
        assert!(w_los > 0.9999999);
        assert!(w_nlos < 1e-5);
        assert!(ricean_weights(-1.0).is_err());
        assert!(ricean_weights(f64::NAN).is_err());
    }

    #[test]
    fn cir_matrix_is_the_sum_of_its_terms() {
        let model = static_model(4, 3);
        let scene = model.scene(2).unwrap();
        let evaluator = model.evaluator(&scene, &[0.25]).unwrap();
        let draw = model.phase_draw(5);
        let sample = evaluator.cir_matrix(PostureMode::Active, &draw, 0.25).unwrap();
        let matrix = sample.matrix();
        let mut expected = sample.los_term.clone();
        for term in &sample.cluster_terms {
            for (slot, v) in expected.iter_mut().zip(term) {
                *slot = *slot + *v;
            }
        }
        for (a, b) in matrix.iter().zip(&expected) {
            assert_eq!(a, b);
        }
        assert_eq!(sample.entry(0, 0).unwrap(), matrix[0]);
        assert_eq!(sample.k_factor, scene.k_factor_at(0.25));
    }

    #[test]
    fn delays_equal_path_length_over_c0() {
        let model = static_model(3, 2);
        let scene = model.scene(0).unwrap();
        let evaluator = model.evaluator(&scene, &[0.0]).unwrap();
        let draw = model.phase_draw(0);
        let sample = evaluator.cir_matrix(PostureMode::Active, &draw, 0.0).unwrap();
        // `static` preset separation: |(60, 80, -100)| = sqrt(20000).
        let expected_los = 20_000.0f64.sqrt() / SPEED_OF_LIGHT;
        assert_relative_eq!(sample.los_delay, expected_los, epsilon = 1e-18, max_relative = 1e-12);
        for (n, cluster) in scene.clusters().clusters().iter().enumerate() {
            let excess = sample.cluster_delays[n] - sample.los_delay;
            assert_relative_eq!(excess, cluster.excess_delay, epsilon = 1e-15, max_relative = 1e-9);
            assert!(sample.cluster_delays[n] > sample.los_delay);
        }
    }

    #[test]
    fn transfer_function_at_zero_frequency_matches_matrix() {
        let model = static_model(3, 2);
        let scene = model.scene(1).unwrap();
        let evaluator = model.evaluator(&scene, &[0.5]).unwrap();
        let draw = model.phase_draw(2);
        let sample = evaluator.cir_matrix(PostureMode::Active, &draw, 0.5).unwrap();
        let h0 = sample.transfer_function(0.0).unwrap();
        for (a, b) in h0.iter().zip(sample.matrix()) {
            assert_relative_eq!(a.re, b.re, epsilon = 1e-15);
            assert_relative_eq!(a.im, b.im, epsilon = 1e-15);
        }
    }

    #[test]
    fn transfer_function_nulls_for_two_equal_paths() {
        let c = Cplx::new(0.6, -0.3);
        let delta = 0.4e-6;
        let sample = CirSample {
            time: 0.0,
            n_rx: 1,
            n_tx: 1,
            los_term: vec![Cplx::new(0.0, 0.0)],
            cluster_terms: vec![vec![c], vec![c]],
            los_delay: 1e-6,
            cluster_delays: vec![1.2e-6, 1.2e-6 + delta],
            k_factor: 0.0,
            alive: vec![true, true],
        };
        for m in 0..3 {
            let f = (2.0 * m as f64 + 1.0) / (2.0 * delta);
            let h = sample.transfer_function(f).unwrap();
            assert!(h[0].norm() <= 1e-9 * c.norm(), "no null at {f} Hz: {}", h[0].norm());
        }
    }

    #[test]
    fn removed_posture_equals_zero_posture_bitwise() {
        let (tx, rx) = preset_scenario::<f64>("paper-fig3").unwrap();
        let mut cfg = base_config(tx.with_zero_posture(), rx, small_params(3, 3));
        cfg.tx_array =
            AntennaArray::uniform_linear(2, 0.25, Vec3::new(1.0, 0.0, 0.0), FieldPattern::Isotropic).unwrap();
        let model = ChannelModel::new(cfg).unwrap();
        let scene = model.scene(0).unwrap();
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let evaluator = model.evaluator(&scene, &times).unwrap();
        let draw = model.phase_draw(0);
        let on = evaluator.synthesize(PostureMode::Active, &draw).unwrap();
        let off = evaluator.synthesize(PostureMode::Removed, &draw).unwrap();
        for (a, b) in on.iter().zip(&off) {
            for (x, y) in a.matrix().iter().zip(b.matrix()) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
    }

    #[test]
    fn realizations_are_deterministic() {
        let model = static_model(2, 3);
        let scene = model.scene(0).unwrap();
        let times = [0.0, 0.5];
        let a = model.realize(&scene, 7, &times).unwrap();
        let b = model.realize(&scene, 7, &times).unwrap();
        let c = model.realize(&scene, 8, &times).unwrap();
        let entry = |r: &ChannelRealization<f64>| r.samples()[1].entry(0, 0).unwrap();
        assert_eq!(entry(&a).re.to_bits(), entry(&b).re.to_bits());
        assert_eq!(entry(&a).im.to_bits(), entry(&b).im.to_bits());
        assert_ne!(entry(&a), entry(&c));
        assert_eq!(a.scene_index(), 0);
        assert_eq!(a.realization_index(), 7);
    }

    #[test]
    fn evaluator_rejects_bad_times() {
        let model = static_model(1, 1);
        let scene = model.scene(0).unwrap();
        assert!(model.evaluator(&scene, &[]).is_err());
        assert!(model.evaluator(&scene, &[0.5000004]).is_err());
        assert!(model.evaluator(&scene, &[-0.1]).is_err());
        assert!(model.evaluator(&scene, &[11.0]).is_err());
        let evaluator = model.evaluator(&scene, &[0.5]).unwrap();
        assert!(evaluator.doppler_phase_los(0.25).is_err());
        assert!(evaluator.doppler_phase_nlos(5, 0, 0.5).is_err());
        assert!(evaluator.spatial_phase(PostureMode::Active, PathRef::Los, 2, 0, 0.5).is_err());
    }

    #[test]
    fn model_rejects_birth_rate_and_coincident_terminals() {
        let (tx, rx) = preset_scenario::<f64>("static").unwrap();
        let mut cfg = base_config(tx.clone(), rx, small_params(1, 1));
        cfg.lambda_birth = 0.5;
        assert!(ChannelModel::new(cfg.clone()).is_err());
        cfg.lambda_birth = 0.0;
        cfg.rx_profile = tx;
        assert!(ChannelModel::new(cfg).is_err());
    }

    #[test]
    fn death_times_follow_the_exponential_law() {
        let (tx, rx) = preset_scenario::<f64>("static").unwrap();
        let mut cfg = base_config(tx, rx, small_params(20, 1));
        cfg.lambda_death = 5.0;
        let model = ChannelModel::new(cfg).unwrap();
        let t_probe = 0.2;
        let expected = (-5.0f64 * t_probe).exp();
        let n_draws = 2000u64;
        let mut alive = 0usize;
        for r in 0..n_draws {
            let draw = model.phase_draw(r);
            alive += (0..20).filter(|&n| draw.alive(n, t_probe)).count();
        }
        let fraction = alive as f64 / (n_draws as f64 * 20.0);
        println!("alive fraction {fraction:.4}, expected {expected:.4}");
        assert!((fraction - expected).abs() <= 0.01, "fraction {fraction}");
    }

    #[test]
    fn dead_clusters_contribute_nothing() {
        let (tx, rx) = preset_scenario::<f64>("static").unwrap();
        let mut cfg = base_config(tx, rx, small_params(4, 2));
        cfg.lambda_death = 50.0;
        let model = ChannelModel::new(cfg).unwrap();
        let scene = model.scene(0).unwrap();
        let evaluator = model.evaluator(&scene, &[1.0]).unwrap();
        let draw = model.phase_draw(0);
        let sample = evaluator.cir_matrix(PostureMode::Active, &draw, 1.0).unwrap();
        // With rate 50 every cluster is dead at t = 1 s for this draw.
        assert!(sample.alive.iter().all(|&a| !a), "alive flags: {:?}", sample.alive);
        for term in &sample.cluster_terms {
            for v in term {
                assert_eq!(v.norm_sqr(), 0.0);
            }
        }
        // Phase draws are unchanged by enabling the death process.
        let mut cfg2 = base_config(
            preset_scenario::<f64>("static").unwrap().0,
            preset_scenario::<f64>("static").unwrap().1,
            small_params(4, 2),
        );
        cfg2.lambda_death = 0.0;
        let model2 = ChannelModel::new(cfg2).unwrap();
        let draw2 = model2.phase_draw(0);
        assert_eq!(draw.los, draw2.los);
        assert_eq!(draw.pol, draw2.pol);
        assert!(draw2.death_time.iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn f32_instantiation_synthesizes_finite_samples() {
        let (tx, rx) = preset_scenario::<f32>("static").unwrap();
        let cfg = ChannelModelConfig {
            tx_profile: tx,
            rx_profile: rx,
            tx_array: AntennaArray::uniform_linear(1, 0.0f32, Vec3::new(1.0, 0.0, 0.0), FieldPattern::Isotropic)
                .unwrap(),
            rx_array: AntennaArray::uniform_linear(1, 0.0f32, Vec3::new(1.0, 0.0, 0.0), FieldPattern::Isotropic)
                .unwrap(),
            carrier: CarrierConfig::new(2.4e9f32).unwrap(),
            cluster_params: ClusterGenParams {
                n_clusters: 2,
                m_subpaths: 2,
                ..ClusterGenParams::default()
            },
            bounce: BounceGeometry::default(),
            ricean: RiceanProcess::new(7.0f32, 0.0, 0.1, 3).unwrap(),
            lambda_death: 0.0,
            lambda_birth: 0.0,
            grid: TimeGrid::new(1e-3f32, 4).unwrap(),
            posture_mode: PostureMode::Active,
            seed: 11,
        };
        let model = ChannelModel::new(cfg).unwrap();
        let scene = model.scene(0).unwrap();
        let realization = model.realize(&scene, 0, &[0.0f32, 0.004]).unwrap();
        for sample in realization.samples() {
            let h = sample.entry(0, 0).unwrap();
            assert!(h.re.is_finite() && h.im.is_finite());
            assert!(h.norm() > 0.0);
        }
    }
}
