//! Scenario file schema, preset catalog, and resolution into channel models.
//!
//! The on-disk format is TOML with a mandatory `schema = 1` marker. Every
//! section and field is optional in the file; missing values are filled from
//! the named preset (when `preset` is set) and then from the documented
//! defaults, field by field. Unknown keys anywhere are rejected. After
//! resolution the config is fully concrete, serializes to a canonical TOML
//! string (angles in degrees, exactly as written in files), and hashes to a
//! stable identifier recorded in run summaries.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use skyfade_core::antenna::{AntennaArray, CarrierConfig, FieldPattern};
use skyfade_core::channel::{
    BounceGeometry, ChannelModel, ChannelModelConfig, PostureMode, TimeGrid,
};
use skyfade_core::geometry::Vec3;
use skyfade_core::mobility::{preset_scenario, MobilityProfile, Schedule};
use skyfade_core::scenario::{ClusterGenParams, RiceanProcess};
use skyfade_core::stats::{ArraySide, Component};
use skyfade_core::Error as CoreError;
use std::fmt;
use std::path::Path;

/// Names accepted by `preset = "..."` in scenario files and on the command
/// line. The `fig*` entries are the fully tuned figure scenarios; the rest
/// select a trajectory with neutral defaults.
pub const PRESET_NAMES: &[&str] = &[
    "fig3",
    "fig4",
    "fig5",
    "fig6",
    "paper-fig3",
    "paper-fig7",
    "paper-fig8",
    "static",
    "straight-line",
];

/// Configuration or validation failure with the offending field path.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl ConfigError {
    fn at(path: &str, message: impl fmt::Display) -> Self {
        ConfigError(format!("{path}: {message}"))
    }
}

type CResult<T> = Result<T, ConfigError>;

// ---------------------------------------------------------------------------
// Raw file schema (all optional, strict keys)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub schema: Option<u32>,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub posture: Option<String>,
    pub carrier: Option<RawCarrier>,
    pub tx_array: Option<RawArray>,
    pub rx_array: Option<RawArray>,
    pub mobility: Option<RawMobility>,
    pub clusters: Option<RawClusters>,
    pub ricean: Option<RawRicean>,
    pub birth_death: Option<RawBirthDeath>,
    pub bounce: Option<RawBounce>,
    pub grid: Option<RawGrid>,
    pub output: Option<RawOutput>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCarrier {
    pub f0: Option<f64>,
    pub c0: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawArray {
    pub elements: Option<usize>,
    /// Element spacing in carrier wavelengths.
    pub spacing: Option<f64>,
    pub axis: Option<[f64; 3]>,
    /// "isotropic" or "directional".
    pub pattern: Option<String>,
    /// Boresight direction in the terminal's local frame (directional only).
    pub boresight: Option<[f64; 3]>,
    /// Polarization slant in degrees (directional only; 0 = vertical).
    pub slant: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMobility {
    pub preset: Option<String>,
    pub tx: Option<RawProfile>,
    pub rx: Option<RawProfile>,
}

/// One terminal's motion: uniform-speed defaults with piecewise-linear
/// schedules available per quantity. Angles are degrees, speeds m/s.
#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawProfile {
    pub position: [f64; 3],
    pub duration: f64,
    pub speed: ScheduleSpec,
    pub heading_azimuth: ScheduleSpec,
    pub heading_elevation: ScheduleSpec,
    pub roll: ScheduleSpec,
    pub yaw: ScheduleSpec,
    pub pitch: ScheduleSpec,
}

/// A constant value or a hold-then-ramp segment.
#[derive(Debug, Clone, Copy, Deserialize, Serialize, PartialEq)]
#[serde(untagged, deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant(f64),
    Ramp {
        hold_until: f64,
        ramp_until: f64,
        from: f64,
        to: f64,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawClusters {
    pub n: Option<usize>,
    pub m: Option<usize>,
    /// Angle spreads in degrees.
    pub departure_azimuth_spread: Option<f64>,
    pub departure_elevation_spread: Option<f64>,
    pub arrival_azimuth_spread: Option<f64>,
    pub arrival_elevation_spread: Option<f64>,
    pub ray_azimuth_spread: Option<f64>,
    pub ray_elevation_spread: Option<f64>,
    /// Mean excess delay, seconds.
    pub delay_spread: Option<f64>,
    /// Exponential power decay rate over excess delay, 1/s.
    pub power_decay: Option<f64>,
    /// Cross-polarization power ratio, linear.
    pub xpr: Option<f64>,
    pub scatterer_speed: Option<f64>,
    pub isotropic_arrival: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRicean {
    pub mean_k: Option<f64>,
    pub std_k: Option<f64>,
    pub correlation_time: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBirthDeath {
    pub lambda_death: Option<f64>,
    pub lambda_birth: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBounce {
    pub tx_radius: Option<f64>,
    pub rx_radius: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub output_step: Option<f64>,
    pub substeps: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub cir: Option<bool>,
    pub acf: Option<bool>,
    pub ccf: Option<bool>,
    pub summary: Option<bool>,
    pub anchor_times: Option<Vec<f64>>,
    pub acf_span: Option<f64>,
    pub acf_step: Option<f64>,
    /// CCF sweep extent in wavelengths.
    pub ccf_span: Option<f64>,
    pub ccf_step: Option<f64>,
    /// "tx" or "rx".
    pub ccf_side: Option<String>,
    pub ccf_axis: Option<[f64; 3]>,
    /// "full", "los", or "nlos".
    pub component: Option<String>,
    /// Monte-Carlo realizations; 0 keeps the run analytic-only.
    pub realizations: Option<usize>,
    /// Scene-ensemble size for the correlation estimators.
    pub scenes: Option<usize>,
}

// ---------------------------------------------------------------------------
// Resolved configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub seed: u64,
    /// "active" or "removed".
    pub posture: String,
    pub carrier: CarrierSection,
    pub tx_array: ArraySection,
    pub rx_array: ArraySection,
    pub mobility: MobilitySection,
    pub clusters: ClusterSection,
    pub ricean: RiceanSection,
    pub birth_death: BirthDeathSection,
    pub bounce: BounceSection,
    pub grid: GridSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CarrierSection {
    pub f0: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    pub elements: usize,
    pub spacing: f64,
    pub axis: [f64; 3],
    pub pattern: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boresight: Option<[f64; 3]>,
    pub slant: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MobilitySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx: Option<RawProfile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rx: Option<RawProfile>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClusterSection {
    pub n: usize,
    pub m: usize,
    pub departure_azimuth_spread: f64,
    pub departure_elevation_spread: f64,
    pub arrival_azimuth_spread: f64,
    pub arrival_elevation_spread: f64,
    pub ray_azimuth_spread: f64,
    pub ray_elevation_spread: f64,
    pub delay_spread: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_decay: Option<f64>,
    pub xpr: f64,
    pub scatterer_speed: f64,
    pub isotropic_arrival: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RiceanSection {
    pub mean_k: f64,
    pub std_k: f64,
    pub correlation_time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BirthDeathSection {
    pub lambda_death: f64,
    pub lambda_birth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BounceSection {
    pub tx_radius: f64,
    pub rx_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub output_step: f64,
    pub substeps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub cir: bool,
    pub acf: bool,
    pub ccf: bool,
    pub summary: bool,
    pub anchor_times: Vec<f64>,
    pub acf_span: f64,
    pub acf_step: f64,
    pub ccf_span: f64,
    pub ccf_step: f64,
    pub ccf_side: String,
    pub ccf_axis: [f64; 3],
    pub component: String,
    pub realizations: usize,
    pub scenes: usize,
}

// ---------------------------------------------------------------------------
// Parsing, merging, resolving
// ---------------------------------------------------------------------------

/// Parses and fully resolves a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> CResult<ScenarioConfig> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
        ConfigError(format!("cannot read {}: {e}", path.as_ref().display()))
    })?;
    parse_scenario_str(&text)
}

/// Parses and fully resolves scenario TOML from a string.
pub fn parse_scenario_str(text: &str) -> CResult<ScenarioConfig> {
    let raw: RawScenario =
        toml::from_str(text).map_err(|e| ConfigError(format!("scenario parse error: {e}")))?;
    resolve(raw)
}

/// Resolves a raw scenario against its preset and the defaults, then
/// validates every field.
pub fn resolve(raw: RawScenario) -> CResult<ScenarioConfig> {
    match raw.schema {
        Some(1) => {}
        Some(other) => {
            return Err(ConfigError::at(
                "schema",
                format!("unsupported schema version {other}, expected 1"),
            ))
        }
        None => return Err(ConfigError::at("schema", "missing; add `schema = 1`")),
    }
    let preset = match raw.preset.as_deref() {
        Some(name) => Some(preset_raw(name)?),
        None => None,
    };
    let cfg = overlay(raw, preset)?;
    validate(&cfg)?;
    Ok(cfg)
}

fn or<T>(file: Option<T>, preset: Option<T>, default: T) -> T {
    file.or(preset).unwrap_or(default)
}

fn overlay(file: RawScenario, preset: Option<RawScenario>) -> CResult<ScenarioConfig> {
    let p = preset.unwrap_or_default();
    let fc = file.carrier.unwrap_or_default();
    let pc = p.carrier.unwrap_or_default();
    let carrier = CarrierSection {
        f0: or(fc.f0, pc.f0, 2.4e9),
        c0: or(fc.c0, pc.c0, 2.997_924_58e8),
    };

    let merge_array = |f: Option<RawArray>, q: Option<RawArray>, dflt: ArraySection| {
        let f = f.unwrap_or_default();
        let q = q.unwrap_or_default();
        ArraySection {
            elements: or(f.elements, q.elements, dflt.elements),
            spacing: or(f.spacing, q.spacing, dflt.spacing),
            axis: or(f.axis, q.axis, dflt.axis),
            pattern: or(f.pattern, q.pattern, dflt.pattern),
            boresight: f.boresight.or(q.boresight).or(dflt.boresight),
            slant: or(f.slant, q.slant, dflt.slant),
        }
    };
    let iso = ArraySection {
        elements: 2,
        spacing: 0.5,
        axis: [1.0, 0.0, 0.0],
        pattern: "isotropic".into(),
        boresight: None,
        slant: 0.0,
    };
    let tx_array = merge_array(file.tx_array, p.tx_array, iso.clone());
    let rx_array = merge_array(file.rx_array, p.rx_array, iso);

    let fm = file.mobility.unwrap_or_default();
    let pm = p.mobility.unwrap_or_default();
    // Explicit profiles in the file take the whole mobility section over;
    // otherwise preset-provided motion fills in. Naming a trajectory preset
    // next to explicit profiles is ambiguous and refused outright.
    if fm.preset.is_some() && (fm.tx.is_some() || fm.rx.is_some()) {
        return Err(ConfigError::at(
            "mobility",
            "give either `preset` or explicit `tx`/`rx` profiles, not both",
        ));
    }
    let mobility = if fm.tx.is_some() || fm.rx.is_some() {
        MobilitySection {
            preset: None,
            tx: fm.tx,
            rx: fm.rx,
        }
    } else {
        MobilitySection {
            preset: fm.preset.or(pm.preset).or(Some("paper-fig3".into())),
            tx: pm.tx,
            rx: pm.rx,
        }
    };

    let fk = file.clusters.unwrap_or_default();
    let pk = p.clusters.unwrap_or_default();
    let d = default_cluster_section();
    let clusters = ClusterSection {
        n: or(fk.n, pk.n, d.n),
        m: or(fk.m, pk.m, d.m),
        departure_azimuth_spread: or(
            fk.departure_azimuth_spread,
            pk.departure_azimuth_spread,
            d.departure_azimuth_spread,
        ),
        departure_elevation_spread: or(
            fk.departure_elevation_spread,
            pk.departure_elevation_spread,
            d.departure_elevation_spread,
        ),
        arrival_azimuth_spread: or(
            fk.arrival_azimuth_spread,
            pk.arrival_azimuth_spread,
            d.arrival_azimuth_spread,
        ),
        arrival_elevation_spread: or(
            fk.arrival_elevation_spread,
            pk.arrival_elevation_spread,
            d.arrival_elevation_spread,
        ),
        ray_azimuth_spread: or(fk.ray_azimuth_spread, pk.ray_azimuth_spread, d.ray_azimuth_spread),
        ray_elevation_spread: or(
            fk.ray_elevation_spread,
            pk.ray_elevation_spread,
            d.ray_elevation_spread,
        ),
        delay_spread: or(fk.delay_spread, pk.delay_spread, d.delay_spread),
        power_decay: fk.power_decay.or(pk.power_decay).or(d.power_decay),
        xpr: or(fk.xpr, pk.xpr, d.xpr),
        scatterer_speed: or(fk.scatterer_speed, pk.scatterer_speed, d.scatterer_speed),
        isotropic_arrival: or(fk.isotropic_arrival, pk.isotropic_arrival, d.isotropic_arrival),
    };

    let fr = file.ricean.unwrap_or_default();
    let pr = p.ricean.unwrap_or_default();
    let ricean = RiceanSection {
        mean_k: or(fr.mean_k, pr.mean_k, 7.0),
        std_k: or(fr.std_k, pr.std_k, 4.0),
        correlation_time: or(fr.correlation_time, pr.correlation_time, 0.1),
    };

    let fb = file.birth_death.unwrap_or_default();
    let pb = p.birth_death.unwrap_or_default();
    let birth_death = BirthDeathSection {
        lambda_death: or(fb.lambda_death, pb.lambda_death, 0.0),
        lambda_birth: or(fb.lambda_birth, pb.lambda_birth, 0.0),
    };

    let fo = file.bounce.unwrap_or_default();
    let po = p.bounce.unwrap_or_default();
    let bounce = BounceSection {
        tx_radius: or(fo.tx_radius, po.tx_radius, 40.0),
        rx_radius: or(fo.rx_radius, po.rx_radius, 25.0),
    };

    let fg = file.grid.unwrap_or_default();
    let pg = p.grid.unwrap_or_default();
    let grid = GridSection {
        output_step: or(fg.output_step, pg.output_step, 1e-3),
        substeps: or(fg.substeps, pg.substeps, 32),
    };

    let fu = file.output.unwrap_or_default();
    let pu = p.output.unwrap_or_default();
    let output = OutputSection {
        cir: or(fu.cir, pu.cir, false),
        acf: or(fu.acf, pu.acf, true),
        ccf: or(fu.ccf, pu.ccf, false),
        summary: or(fu.summary, pu.summary, true),
        anchor_times: or(fu.anchor_times, pu.anchor_times, vec![0.0, 1.0, 2.0]),
        acf_span: or(fu.acf_span, pu.acf_span, 0.1),
        acf_step: or(fu.acf_step, pu.acf_step, 1e-3),
        ccf_span: or(fu.ccf_span, pu.ccf_span, 2.0),
        ccf_step: or(fu.ccf_step, pu.ccf_step, 0.05),
        ccf_side: or(fu.ccf_side, pu.ccf_side, "rx".into()),
        ccf_axis: or(fu.ccf_axis, pu.ccf_axis, [1.0, 0.0, 0.0]),
        component: or(fu.component, pu.component, "full".into()),
        realizations: or(fu.realizations, pu.realizations, 0),
        scenes: or(fu.scenes, pu.scenes, 50),
    };

    Ok(ScenarioConfig {
        schema: 1,
        seed: or(file.seed, p.seed, 0),
        posture: or(file.posture, p.posture, "active".into()),
        carrier,
        tx_array,
        rx_array,
        mobility,
        clusters,
        ricean,
        birth_death,
        bounce,
        grid,
        output,
    })
}

fn default_cluster_section() -> ClusterSection {
    let d = ClusterGenParams::<f64>::default();
    let deg = |r: f64| r.to_degrees();
    ClusterSection {
        n: d.n_clusters,
        m: d.m_subpaths,
        departure_azimuth_spread: deg(d.departure_azimuth_spread),
        departure_elevation_spread: deg(d.departure_elevation_spread),
        arrival_azimuth_spread: deg(d.arrival_azimuth_spread),
        arrival_elevation_spread: deg(d.arrival_elevation_spread),
        ray_azimuth_spread: deg(d.ray_azimuth_spread),
        ray_elevation_spread: deg(d.ray_elevation_spread),
        delay_spread: d.delay_spread,
        power_decay: d.power_decay,
        xpr: d.xpr,
        scatterer_speed: d.scatterer_speed,
        isotropic_arrival: d.isotropic_arrival,
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

fn require(cond: bool, path: &str, msg: impl fmt::Display) -> CResult<()> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::at(path, msg))
    }
}

fn finite_pos(v: f64, path: &str) -> CResult<()> {
    require(v.is_finite() && v > 0.0, path, format!("must be positive and finite, got {v}"))
}

fn finite_nonneg(v: f64, path: &str) -> CResult<()> {
    require(
        v.is_finite() && v >= 0.0,
        path,
        format!("must be non-negative and finite, got {v}"),
    )
}

fn validate_array(a: &ArraySection, path: &str) -> CResult<()> {
    require(a.elements >= 1, &format!("{path}.elements"), "needs at least one element")?;
    finite_nonneg(a.spacing, &format!("{path}.spacing"))?;
    let ax = a.axis;
    let norm = (ax[0] * ax[0] + ax[1] * ax[1] + ax[2] * ax[2]).sqrt();
    require(
        norm.is_finite() && (a.elements == 1 || norm > 0.0),
        &format!("{path}.axis"),
        "must be a nonzero finite vector",
    )?;
    match a.pattern.as_str() {
        "isotropic" => {}
        "directional" => {
            let b = a.boresight.ok_or_else(|| {
                ConfigError::at(
                    &format!("{path}.boresight"),
                    "required when pattern = \"directional\"",
                )
            })?;
            let bn = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
            require(
                bn.is_finite() && bn > 0.0,
                &format!("{path}.boresight"),
                "must be a nonzero finite vector",
            )?;
        }
        other => {
            return Err(ConfigError::at(
                &format!("{path}.pattern"),
                format!("unknown pattern {other:?}, expected \"isotropic\" or \"directional\""),
            ))
        }
    }
    require(a.slant.is_finite(), &format!("{path}.slant"), "must be finite")?;
    Ok(())
}

fn validate_schedule(s: &ScheduleSpec, path: &str) -> CResult<()> {
    match s {
        ScheduleSpec::Constant(v) => require(v.is_finite(), path, format!("must be finite, got {v}")),
        ScheduleSpec::Ramp {
            hold_until,
            ramp_until,
            from,
            to,
        } => {
            require(
                hold_until.is_finite() && ramp_until.is_finite() && from.is_finite() && to.is_finite(),
                path,
                "ramp endpoints must be finite",
            )?;
            require(
                ramp_until > hold_until,
                path,
                format!("ramp_until ({ramp_until}) must exceed hold_until ({hold_until})"),
            )
        }
    }
}

fn validate_profile(p: &RawProfile, path: &str) -> CResult<()> {
    require(
        p.position.iter().all(|v| v.is_finite()),
        &format!("{path}.position"),
        "must be finite",
    )?;
    finite_pos(p.duration, &format!("{path}.duration"))?;
    validate_schedule(&p.speed, &format!("{path}.speed"))?;
    validate_schedule(&p.heading_azimuth, &format!("{path}.heading_azimuth"))?;
    validate_schedule(&p.heading_elevation, &format!("{path}.heading_elevation"))?;
    validate_schedule(&p.roll, &format!("{path}.roll"))?;
    validate_schedule(&p.yaw, &format!("{path}.yaw"))?;
    validate_schedule(&p.pitch, &format!("{path}.pitch"))?;
    Ok(())
}

fn validate(cfg: &ScenarioConfig) -> CResult<()> {
    match cfg.posture.as_str() {
        "active" | "removed" => {}
        other => {
            return Err(ConfigError::at(
                "posture",
                format!("unknown mode {other:?}, expected \"active\" or \"removed\""),
            ))
        }
    }
    finite_pos(cfg.carrier.f0, "carrier.f0")?;
    finite_pos(cfg.carrier.c0, "carrier.c0")?;
    validate_array(&cfg.tx_array, "tx_array")?;
    validate_array(&cfg.rx_array, "rx_array")?;

    match (&cfg.mobility.preset, &cfg.mobility.tx, &cfg.mobility.rx) {
        (Some(name), None, None) => {
            let known = ["paper-fig3", "paper-fig7", "paper-fig8", "static", "straight-line"];
            require(
                known.contains(&name.as_str()),
                "mobility.preset",
                format!("unknown trajectory preset {name:?}"),
            )?;
        }
        (None, Some(tx), Some(rx)) => {
            validate_profile(tx, "mobility.tx")?;
            validate_profile(rx, "mobility.rx")?;
        }
        (None, None, None) => {
            return Err(ConfigError::at(
                "mobility",
                "set either mobility.preset or both mobility.tx and mobility.rx",
            ))
        }
        (Some(_), _, _) => {
            return Err(ConfigError::at(
                "mobility",
                "preset and explicit profiles are mutually exclusive",
            ))
        }
        _ => {
            return Err(ConfigError::at(
                "mobility",
                "explicit motion needs both mobility.tx and mobility.rx",
            ))
        }
    }

    let c = &cfg.clusters;
    require(c.n >= 1, "clusters.n", "needs at least one cluster")?;
    require(c.m >= 1, "clusters.m", "needs at least one sub-path per cluster")?;
    finite_nonneg(c.departure_azimuth_spread, "clusters.departure_azimuth_spread")?;
    finite_nonneg(c.departure_elevation_spread, "clusters.departure_elevation_spread")?;
    finite_nonneg(c.arrival_azimuth_spread, "clusters.arrival_azimuth_spread")?;
    finite_nonneg(c.arrival_elevation_spread, "clusters.arrival_elevation_spread")?;
    finite_nonneg(c.ray_azimuth_spread, "clusters.ray_azimuth_spread")?;
    finite_nonneg(c.ray_elevation_spread, "clusters.ray_elevation_spread")?;
    finite_pos(c.delay_spread, "clusters.delay_spread")?;
    if let Some(rate) = c.power_decay {
        finite_nonneg(rate, "clusters.power_decay")?;
    }
    finite_pos(c.xpr, "clusters.xpr")?;
    finite_nonneg(c.scatterer_speed, "clusters.scatterer_speed")?;

    finite_pos(cfg.ricean.mean_k, "ricean.mean_k")?;
    finite_nonneg(cfg.ricean.std_k, "ricean.std_k")?;
    finite_pos(cfg.ricean.correlation_time, "ricean.correlation_time")?;

    finite_nonneg(cfg.birth_death.lambda_death, "birth_death.lambda_death")?;
    require(
        cfg.birth_death.lambda_birth == 0.0,
        "birth_death.lambda_birth",
        "cluster births are not part of coefficient synthesis; only death rates apply",
    )?;

    finite_pos(cfg.bounce.tx_radius, "bounce.tx_radius")?;
    finite_pos(cfg.bounce.rx_radius, "bounce.rx_radius")?;

    finite_pos(cfg.grid.output_step, "grid.output_step")?;
    require(cfg.grid.substeps >= 1, "grid.substeps", "needs at least one substep")?;

    let o = &cfg.output;
    require(!o.anchor_times.is_empty(), "output.anchor_times", "needs at least one anchor")?;
    for (i, t) in o.anchor_times.iter().enumerate() {
        require(
            t.is_finite() && *t >= 0.0,
            &format!("output.anchor_times[{i}]"),
            format!("must be non-negative and finite, got {t}"),
        )?;
    }
    finite_pos(o.acf_span, "output.acf_span")?;
    finite_pos(o.acf_step, "output.acf_step")?;
    finite_pos(o.ccf_span, "output.ccf_span")?;
    finite_pos(o.ccf_step, "output.ccf_step")?;
    match o.ccf_side.as_str() {
        "tx" | "rx" => {}
        other => {
            return Err(ConfigError::at(
                "output.ccf_side",
                format!("unknown side {other:?}, expected \"tx\" or \"rx\""),
            ))
        }
    }
    let ax = o.ccf_axis;
    let norm = (ax[0] * ax[0] + ax[1] * ax[1] + ax[2] * ax[2]).sqrt();
    require(norm.is_finite() && norm > 0.0, "output.ccf_axis", "must be a nonzero finite vector")?;
    match o.component.as_str() {
        "full" | "los" | "nlos" => {}
        other => {
            return Err(ConfigError::at(
                "output.component",
                format!("unknown component {other:?}, expected \"full\", \"los\", or \"nlos\""),
            ))
        }
    }
    require(o.scenes >= 1, "output.scenes", "needs at least one scene")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Canonical serialization and hashing
// ---------------------------------------------------------------------------

impl ScenarioConfig {
    /// Canonical TOML form: every field explicit, angles in degrees. Parsing
    /// this text reproduces the config exactly.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("resolved config serializes")
    }

    /// SHA-256 of the canonical TOML form, hex-encoded.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn posture_mode(&self) -> PostureMode {
        if self.posture == "removed" {
            PostureMode::Removed
        } else {
            PostureMode::Active
        }
    }

    pub fn component(&self) -> Component {
        match self.output.component.as_str() {
            "los" => Component::LosOnly,
            "nlos" => Component::NlosOnly,
            _ => Component::Full,
        }
    }

    pub fn ccf_side(&self) -> ArraySide {
        if self.output.ccf_side == "tx" {
            ArraySide::Tx
        } else {
            ArraySide::Rx
        }
    }

    pub fn ccf_axis(&self) -> Vec3<f64> {
        Vec3::new(self.output.ccf_axis[0], self.output.ccf_axis[1], self.output.ccf_axis[2])
    }

    /// Builds the channel model this config describes.
    pub fn build_model(&self) -> CResult<ChannelModel<f64>> {
        fn map(section: &'static str) -> impl Fn(CoreError) -> ConfigError {
            move |e| ConfigError(format!("{section}: {e}"))
        }
        let carrier = CarrierConfig::with_c0(self.carrier.f0, self.carrier.c0)
            .map_err(map("carrier"))?;
        let lambda = carrier.wavelength();

        let build_array = |a: &ArraySection, path: &str| -> CResult<AntennaArray<f64>> {
            let pattern = match a.pattern.as_str() {
                "directional" => {
                    let b = a.boresight.expect("validated");
                    FieldPattern::directional(
                        Vec3::new(b[0], b[1], b[2]),
                        a.slant.to_radians(),
                    )
                    .map_err(|e| ConfigError(format!("{path}: {e}")))?
                }
                _ => FieldPattern::Isotropic,
            };
            AntennaArray::uniform_linear(
                a.elements,
                a.spacing * lambda,
                Vec3::new(a.axis[0], a.axis[1], a.axis[2]),
                pattern,
            )
            .map_err(|e| ConfigError(format!("{path}: {e}")))
        };
        let tx_array = build_array(&self.tx_array, "tx_array")?;
        let rx_array = build_array(&self.rx_array, "rx_array")?;

        let (tx_profile, rx_profile) = match &self.mobility.preset {
            Some(name) => preset_scenario(name).map_err(map("mobility.preset"))?,
            None => {
                let tx = build_profile(self.mobility.tx.as_ref().expect("validated"), "mobility.tx")?;
                let rx = build_profile(self.mobility.rx.as_ref().expect("validated"), "mobility.rx")?;
                (tx, rx)
            }
        };

        let rad = |deg: f64| deg.to_radians();
        let c = &self.clusters;
        let cluster_params = ClusterGenParams {
            n_clusters: c.n,
            m_subpaths: c.m,
            departure_azimuth_spread: rad(c.departure_azimuth_spread),
            departure_elevation_spread: rad(c.departure_elevation_spread),
            arrival_azimuth_spread: rad(c.arrival_azimuth_spread),
            arrival_elevation_spread: rad(c.arrival_elevation_spread),
            ray_azimuth_spread: rad(c.ray_azimuth_spread),
            ray_elevation_spread: rad(c.ray_elevation_spread),
            delay_spread: c.delay_spread,
            power_decay: c.power_decay,
            xpr: c.xpr,
            scatterer_speed: c.scatterer_speed,
            isotropic_arrival: c.isotropic_arrival,
        };

        let ricean = RiceanProcess::new(
            self.ricean.mean_k,
            self.ricean.std_k,
            self.ricean.correlation_time,
            self.seed,
        )
        .map_err(map("ricean"))?;

        let grid = TimeGrid::new(self.grid.output_step, self.grid.substeps)
            .map_err(map("grid"))?;
        let bounce = BounceGeometry::new(self.bounce.tx_radius, self.bounce.rx_radius)
            .map_err(map("bounce"))?;

        ChannelModel::new(ChannelModelConfig {
            tx_profile,
            rx_profile,
            tx_array,
            rx_array,
            carrier,
            cluster_params,
            bounce,
            ricean,
            lambda_death: self.birth_death.lambda_death,
            lambda_birth: self.birth_death.lambda_birth,
            grid,
            posture_mode: self.posture_mode(),
            seed: self.seed,
        })
        .map_err(|e| ConfigError(format!("scenario: {e}")))
    }
}

fn build_schedule(s: &ScheduleSpec, degrees: bool, path: &str) -> CResult<Schedule<f64>> {
    let conv = |v: f64| if degrees { v.to_radians() } else { v };
    match *s {
        ScheduleSpec::Constant(v) => Ok(Schedule::constant(conv(v))),
        ScheduleSpec::Ramp {
            hold_until,
            ramp_until,
            from,
            to,
        } => Schedule::hold_then_ramp(hold_until, ramp_until, conv(from), conv(to))
            .map_err(|e| ConfigError(format!("{path}: {e}"))),
    }
}

fn build_profile(p: &RawProfile, path: &str) -> CResult<MobilityProfile<f64>> {
    MobilityProfile::new(
        Vec3::new(p.position[0], p.position[1], p.position[2]),
        p.duration,
        build_schedule(&p.speed, false, &format!("{path}.speed"))?,
        build_schedule(&p.heading_azimuth, true, &format!("{path}.heading_azimuth"))?,
        build_schedule(&p.heading_elevation, true, &format!("{path}.heading_elevation"))?,
        build_schedule(&p.roll, true, &format!("{path}.roll"))?,
        build_schedule(&p.yaw, true, &format!("{path}.yaw"))?,
        build_schedule(&p.pitch, true, &format!("{path}.pitch"))?,
    )
    .map_err(|e| ConfigError(format!("{path}: {e}")))
}

// ---------------------------------------------------------------------------
// Preset catalog
// ---------------------------------------------------------------------------

/// Boresight of the airborne directional element in the fuselage frame: an
/// oblique rear-left, upward mount. At rest the scattering cloud sits in the
/// pattern's flat outer region, so the weights are near-uniform; the
/// scheduled pitch and roll maneuvers sweep the beam onto the cloud, which
/// concentrates the sub-path weights around the anchor times and slows the
/// multipath decorrelation.
fn figure_boresight() -> [f64; 3] {
    [-0.404, -0.839, 0.364]
}

/// Shared physical setup of the four figure scenarios: the posture-swept
/// trajectory, a two-element directional airborne array, and a two-element
/// ground array at half-wavelength spacing.
fn figure_base() -> RawScenario {
    RawScenario {
        schema: Some(1),
        preset: None,
        seed: Some(2024),
        posture: Some("active".into()),
        carrier: Some(RawCarrier {
            f0: Some(2.4e9),
            c0: None,
        }),
        tx_array: Some(RawArray {
            elements: Some(2),
            spacing: Some(2.0),
            // Oblique fuselage mount: couples the element offsets to both
            // the pitch sweep (active around t = 1 s) and the roll sweep
            // (active around t = 2 s) with a consistent sign, so attitude
            // rotation speeds up the direct path's phase rotation at both
            // anchors.
            axis: Some([-0.8164965809277261, 0.4082482904638631, -0.4082482904638631]),
            pattern: Some("directional".into()),
            boresight: Some(figure_boresight()),
            slant: Some(0.0),
        }),
        rx_array: Some(RawArray {
            elements: Some(2),
            spacing: Some(0.5),
            axis: Some([1.0, 0.0, 0.0]),
            pattern: Some("isotropic".into()),
            boresight: None,
            slant: None,
        }),
        mobility: Some(RawMobility {
            preset: Some("paper-fig3".into()),
            tx: None,
            rx: None,
        }),
        clusters: None,
        ricean: Some(RawRicean {
            mean_k: Some(7.0),
            std_k: Some(4.0),
            correlation_time: Some(0.1),
        }),
        birth_death: None,
        bounce: None,
        grid: None,
        output: None,
    }
}

/// Returns the fully populated raw scenario for a preset name.
pub fn preset_raw(name: &str) -> CResult<RawScenario> {
    let mut raw = match name {
        "fig3" => {
            let mut r = figure_base();
            r.output = Some(RawOutput {
                acf: Some(true),
                ccf: Some(false),
                anchor_times: Some(vec![0.0, 1.0, 2.0]),
                component: Some("los".into()),
                // The normalized direct-path correlation carries no scene
                // randomness (cluster draws and the K track cancel), so a
                // single scene is exact.
                scenes: Some(1),
                ..Default::default()
            });
            r
        }
        "fig4" => {
            let mut r = figure_base();
            r.output = Some(RawOutput {
                acf: Some(true),
                ccf: Some(false),
                anchor_times: Some(vec![0.0, 1.0, 2.0]),
                component: Some("nlos".into()),
                // The multipath coherence time near the end of the run sits
                // around 90 ms; a 200 ms lag span keeps the 0.5 crossing well
                // inside the evaluated window in both posture modes.
                acf_span: Some(0.2),
                ..Default::default()
            });
            r
        }
        "fig5" => {
            let mut r = figure_base();
            r.output = Some(RawOutput {
                acf: Some(false),
                ccf: Some(true),
                anchor_times: Some(vec![0.0, 1.0, 2.0]),
                component: Some("los".into()),
                ccf_side: Some("tx".into()),
                ccf_axis: Some([0.0, 0.0, 1.0]),
                // Scene randomness cancels in the direct-path correlation.
                scenes: Some(1),
                ..Default::default()
            });
            r
        }
        "fig6" => {
            let mut r = figure_base();
            r.output = Some(RawOutput {
                acf: Some(false),
                ccf: Some(true),
                anchor_times: Some(vec![0.0, 1.0, 2.0]),
                component: Some("nlos".into()),
                ccf_side: Some("rx".into()),
                ccf_axis: Some([1.0, 0.0, 0.0]),
                ..Default::default()
            });
            r
        }
        "paper-fig3" | "static" | "straight-line" => RawScenario {
            schema: Some(1),
            mobility: Some(RawMobility {
                preset: Some(name.into()),
                tx: None,
                rx: None,
            }),
            ..Default::default()
        },
        "paper-fig7" | "paper-fig8" => RawScenario {
            schema: Some(1),
            carrier: Some(RawCarrier {
                f0: Some(if name == "paper-fig7" { 2.5e9 } else { 2.6e9 }),
                c0: None,
            }),
            mobility: Some(RawMobility {
                preset: Some(name.into()),
                tx: None,
                rx: None,
            }),
            output: Some(RawOutput {
                anchor_times: Some(vec![1.0]),
                ..Default::default()
            }),
            ..Default::default()
        },
        other => {
            return Err(ConfigError::at(
                "preset",
                format!("unknown preset {other:?}, expected one of {PRESET_NAMES:?}"),
            ))
        }
    };
    raw.preset = None;
    Ok(raw)
}

/// Resolves a preset name directly into a full configuration.
pub fn preset_config(name: &str) -> CResult<ScenarioConfig> {
    let mut raw = preset_raw(name)?;
    raw.schema = Some(1);
    resolve(raw)
}
