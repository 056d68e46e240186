//! Space-time correlation statistics for the synthesized channel.
//!
//! Two estimator families live here and are built to agree with each other:
//!
//! * **Analytic** correlation takes the expectation over the per-realization
//!   randomness (initial phases, polarization phases, cluster death times) in
//!   closed form, per scene, and averages the per-scene results over a shared
//!   scene ensemble. Cross terms between distinct sub-paths vanish under the
//!   uniform-phase expectation, so the per-scene value is a weighted sum of
//!   per-sub-path phasors.
//! * **Monte-Carlo** correlation averages `conj(h(t)) * h(t + dt)` over
//!   realizations drawn from the same phase streams, cycling realization `j`
//!   onto scene `j mod S` so both families see the same geometry ensemble.
//!
//! Both report the correlation normalized pointwise by
//! `sqrt(P(t) * P(t + dt))`, the geometric mean of the channel powers at the
//! two probe instants. This keeps `rho(0) = 1` exactly and guarantees
//! `|rho| <= 1` by the Cauchy-Schwarz inequality even when the instantaneous
//! power drifts (posture sweeps of a directional pattern do that), which a
//! plain zero-lag division would not.
//!
//! Orientation convention: `rho(t, dt) = E[conj(h(t)) * h(t + dt)]`, so a
//! positive Doppler phase advance at `t + dt` shows up with a positive
//! imaginary part. Negative `dt` is allowed; the identity
//! `stcf(t, -dt) = conj(stcf(t - dt, +dt))` holds structurally.
//!
//! Autocorrelation curves carry their lag axis in seconds. Spatial
//! cross-correlation curves carry their lag axis in carrier wavelengths; the
//! scalar space-time op takes literal displacement vectors in meters.
//!
//! Scene-level work is parallelized with rayon, collected in scene order, and
//! reduced sequentially, so results are byte-identical for any worker count.

use crate::channel::{cis, ChannelModel, PathRef, PostureMode, SceneEvaluator};
use crate::error::Error;
use crate::Result;
use crate::geometry::Vec3;
use crate::{Cplx, Real};
use rayon::prelude::*;
use std::fmt;
use std::path::Path;

/// Default number of scenes in the correlation ensemble.
pub const DEFAULT_ENSEMBLE_SCENES: usize = 50;

/// Tolerance on the `|value(0)| = 1` and `|value| <= 1` curve invariants.
pub const CURVE_UNIT_TOLERANCE: f64 = 1e-9;

/// What a correlation curve measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    /// Temporal autocorrelation; lag axis in seconds.
    Acf,
    /// Spatial cross-correlation; lag axis in carrier wavelengths.
    Ccf,
    /// General space-time correlation (used for ingested references).
    Stcf,
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CurveKind::Acf => "acf",
            CurveKind::Ccf => "ccf",
            CurveKind::Stcf => "stcf",
        };
        f.write_str(name)
    }
}

/// Which part of the channel contributes to a correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Component {
    /// Specular and scattered parts combined with their Ricean weights.
    #[default]
    Full,
    /// Specular (line-of-sight) part alone.
    LosOnly,
    /// Scattered (cluster) part alone.
    NlosOnly,
}

/// Which terminal's array a spatial correlation sweep displaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArraySide {
    Tx,
    Rx,
}

/// How a coherence readout collapses a complex correlation value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    /// `|value|` (the default definition of coherence time).
    Magnitude,
    /// `Re(value)`; sensitive to pure phase rotation of a specular path.
    RealPart,
}

/// A sampled correlation curve with optional per-lag standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCurve<T: Real> {
    kind: CurveKind,
    anchor: T,
    lags: Vec<T>,
    values: Vec<Cplx<T>>,
    normalized: bool,
    std_err: Option<Vec<T>>,
}

impl<T: Real> CorrelationCurve<T> {
    /// Builds a curve, enforcing the shared invariants: non-empty, strictly
    /// increasing finite lags, finite values, and for normalized curves
    /// `|value| <= 1 + 1e-9` everywhere with `|value(0)| = 1` within `1e-9`
    /// when a zero lag is present.
    pub fn new(
        kind: CurveKind,
        anchor: T,
        lags: Vec<T>,
        values: Vec<Cplx<T>>,
        normalized: bool,
        std_err: Option<Vec<T>>,
    ) -> Result<Self> {
        if lags.is_empty() {
            return Err(Error::invalid("correlation curve needs at least one lag"));
        }
        if lags.len() != values.len() {
            return Err(Error::invalid(format!(
                "lag/value length mismatch: {} lags vs {} values",
                lags.len(),
                values.len()
            )));
        }
        if let Some(se) = &std_err {
            if se.len() != lags.len() {
                return Err(Error::invalid(format!(
                    "standard-error length {} does not match {} lags",
                    se.len(),
                    lags.len()
                )));
            }
            if se.iter().any(|s| !s.is_finite() || *s < T::zero()) {
                return Err(Error::invalid(
                    "standard errors must be finite and non-negative",
                ));
            }
        }
        if !anchor.is_finite() {
            return Err(Error::invalid("curve anchor must be finite"));
        }
        for pair in lags.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::invalid(format!(
                    "lags must be strictly increasing (violated near lag {})",
                    pair[1].as_f64()
                )));
            }
        }
        if lags.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("lags must be finite"));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::invalid("curve values must be finite"));
        }
        if normalized {
            let tol = T::of(CURVE_UNIT_TOLERANCE);
            let bound = T::one() + tol;
            for (lag, v) in lags.iter().zip(&values) {
                if v.norm() > bound {
                    return Err(Error::invalid(format!(
                        "normalized curve exceeds unit modulus at lag {}: |v| = {}",
                        lag.as_f64(),
                        v.norm().as_f64()
                    )));
                }
            }
            if lags[0] == T::zero() && (values[0].norm() - T::one()).abs() > tol {
                return Err(Error::invalid(format!(
                    "normalized curve must have unit modulus at zero lag, got {}",
                    values[0].norm().as_f64()
                )));
            }
        }
        Ok(Self {
            kind,
            anchor,
            lags,
            values,
            normalized,
            std_err,
        })
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    /// The absolute time (seconds) the curve is anchored at.
    pub fn anchor(&self) -> T {
        self.anchor
    }

    /// Lag axis: seconds for [`CurveKind::Acf`], wavelengths for
    /// [`CurveKind::Ccf`].
    pub fn lags(&self) -> &[T] {
        &self.lags
    }

    pub fn values(&self) -> &[Cplx<T>] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Per-lag standard errors (Monte-Carlo curves only).
    pub fn std_err(&self) -> Option<&[T]> {
        self.std_err.as_deref()
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    /// `|value|` per lag.
    pub fn magnitudes(&self) -> Vec<T> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// `Re(value)` per lag.
    pub fn real_projection(&self) -> Vec<T> {
        self.values.iter().map(|v| v.re).collect()
    }

    /// Linear interpolation of the complex value at an arbitrary lag inside
    /// the curve's span.
    pub fn interpolate(&self, lag: T) -> Result<Cplx<T>> {
        let first = self.lags[0];
        let last = *self.lags.last().expect("curve is non-empty");
        if lag < first || lag > last {
            return Err(Error::out_of_range(format!(
                "lag {} outside curve span [{}, {}]",
                lag.as_f64(),
                first.as_f64(),
                last.as_f64()
            )));
        }
        match self
            .lags
            .binary_search_by(|probe| probe.partial_cmp(&lag).expect("finite lags"))
        {
            Ok(i) => Ok(self.values[i]),
            Err(i) => {
                let (l0, l1) = (self.lags[i - 1], self.lags[i]);
                let w = (lag - l0) / (l1 - l0);
                let (v0, v1) = (self.values[i - 1], self.values[i]);
                Ok(v0 + (v1 - v0).scale(w))
            }
        }
    }
}

/// Smallest lag at which a readout of a normalized autocorrelation first
/// drops below `threshold`, linearly interpolated between samples. Returns
/// `Ok(None)` when the curve never crosses. The conventional coherence time
/// uses the magnitude readout and a threshold of one half.
pub fn coherence_time<T: Real>(curve: &CorrelationCurve<T>, threshold: T) -> Result<Option<T>> {
    coherence_time_by(curve, threshold, Readout::Magnitude)
}

/// [`coherence_time`] with an explicit readout. The real-part readout detects
/// decorrelation by phase rotation that leaves the magnitude at one, which is
/// what a single dominant specular path exhibits.
pub fn coherence_time_by<T: Real>(
    curve: &CorrelationCurve<T>,
    threshold: T,
    readout: Readout,
) -> Result<Option<T>> {
    if curve.kind() != CurveKind::Acf {
        return Err(Error::invalid(format!(
            "coherence time is defined on autocorrelation curves, got {}",
            curve.kind()
        )));
    }
    if !curve.is_normalized() {
        return Err(Error::invalid(
            "coherence time needs a normalized autocorrelation curve",
        ));
    }
    if !(threshold > T::zero() && threshold < T::one()) {
        return Err(Error::invalid(format!(
            "threshold must lie strictly between 0 and 1, got {}",
            threshold.as_f64()
        )));
    }
    if curve.lags()[0] != T::zero() {
        return Err(Error::invalid(
            "coherence time needs a curve that starts at zero lag",
        ));
    }
    let trace: Vec<T> = match readout {
        Readout::Magnitude => curve.magnitudes(),
        Readout::RealPart => curve.real_projection(),
    };
    let lags = curve.lags();
    if trace[0] < threshold {
        return Ok(Some(T::zero()));
    }
    for i in 1..trace.len() {
        if trace[i] < threshold {
            let (l0, l1) = (lags[i - 1], lags[i]);
            let (v0, v1) = (trace[i - 1], trace[i]);
            let w = (v0 - threshold) / (v0 - v1);
            return Ok(Some(l0 + (l1 - l0) * w));
        }
    }
    Ok(None)
}

/// Deviation report between two curves of the same kind, evaluated on the
/// coarser curve's lags restricted to the overlap of the two spans. The finer
/// curve is linearly interpolated; no other resampling happens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveComparison<T: Real> {
    /// Largest `|a - b|` over the comparison grid.
    pub max_deviation: T,
    /// Root-mean-square of `|a - b|` over the comparison grid.
    pub rms_deviation: T,
    /// Number of lags compared.
    pub points: usize,
}

/// Compares two curves of the same kind on the coarser grid. Errors when the
/// kinds differ or the lag spans do not overlap.
pub fn compare_curves<T: Real>(
    a: &CorrelationCurve<T>,
    b: &CorrelationCurve<T>,
) -> Result<CurveComparison<T>> {
    if a.kind() != b.kind() {
        return Err(Error::invalid(format!(
            "cannot compare a {} curve against a {} curve",
            a.kind(),
            b.kind()
        )));
    }
    let (coarse, fine) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let lo = if a.lags()[0] > b.lags()[0] {
        a.lags()[0]
    } else {
        b.lags()[0]
    };
    let hi = {
        let la = *a.lags().last().expect("non-empty");
        let lb = *b.lags().last().expect("non-empty");
        if la < lb {
            la
        } else {
            lb
        }
    };
    if lo > hi {
        return Err(Error::invalid("curve lag spans do not overlap"));
    }
    let mut max_dev = T::zero();
    let mut sum_sq = T::zero();
    let mut points = 0usize;
    for (&lag, &cv) in coarse.lags().iter().zip(coarse.values()) {
        if lag < lo || lag > hi {
            continue;
        }
        let fv = fine.interpolate(lag)?;
        let dev = (cv - fv).norm();
        if dev > max_dev {
            max_dev = dev;
        }
        sum_sq = sum_sq + dev * dev;
        points += 1;
    }
    if points == 0 {
        return Err(Error::invalid(
            "no lags of the coarser curve fall inside the overlap",
        ));
    }
    Ok(CurveComparison {
        max_deviation: max_dev,
        rms_deviation: (sum_sq / T::of(points as f64)).sqrt(),
        points,
    })
}

// ---------------------------------------------------------------------------
// CSV exchange
// ---------------------------------------------------------------------------

/// Serializes a curve to the reference CSV format:
///
/// ```text
/// # kind: acf
/// # anchor: 1e0
/// # normalized: true
/// lag,re,im,abs
/// 0e0,1e0,0e0,1e0
/// ```
///
/// Metadata lines are `#`-prefixed, the header row is fixed, numbers are
/// written in shortest round-trip scientific notation, and lines end with a
/// bare line feed. Standard errors are not serialized.
pub fn curve_to_csv<T: Real>(curve: &CorrelationCurve<T>) -> String {
    let mut out = String::new();
    out.push_str(&format!("# kind: {}\n", curve.kind()));
    out.push_str(&format!("# anchor: {:e}\n", curve.anchor().as_f64()));
    out.push_str(&format!("# normalized: {}\n", curve.is_normalized()));
    out.push_str("lag,re,im,abs\n");
    for (lag, v) in curve.lags().iter().zip(curve.values()) {
        out.push_str(&format!(
            "{:e},{:e},{:e},{:e}\n",
            lag.as_f64(),
            v.re.as_f64(),
            v.im.as_f64(),
            v.norm().as_f64()
        ));
    }
    out
}

/// Parses the CSV format produced by [`curve_to_csv`]. Errors carry 1-based
/// line numbers. The `abs` column is validated against `re` and `im`, and the
/// lag column must be strictly increasing.
pub fn curve_from_csv<T: Real>(text: &str) -> Result<CorrelationCurve<T>> {
    let mut kind = CurveKind::Stcf;
    let mut anchor = T::zero();
    let mut normalized = true;
    let mut lags: Vec<T> = Vec::new();
    let mut values: Vec<Cplx<T>> = Vec::new();
    let mut seen_header = false;

    let parse_num = |field: &str, line_no: usize, what: &str| -> Result<f64> {
        field.trim().parse::<f64>().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("cannot parse {what} from {field:?}"),
        })
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let meta = meta.trim();
            if let Some((key, value)) = meta.split_once(':') {
                let value = value.trim();
                match key.trim() {
                    "kind" => {
                        kind = match value {
                            "acf" => CurveKind::Acf,
                            "ccf" => CurveKind::Ccf,
                            "stcf" => CurveKind::Stcf,
                            other => {
                                return Err(Error::Parse {
                                    line: line_no,
                                    message: format!("unknown curve kind {other:?}"),
                                })
                            }
                        };
                    }
                    "anchor" => anchor = T::of(parse_num(value, line_no, "anchor")?),
                    "normalized" => {
                        normalized = match value {
                            "true" => true,
                            "false" => false,
                            other => {
                                return Err(Error::Parse {
                                    line: line_no,
                                    message: format!(
                                        "normalized must be true or false, got {other:?}"
                                    ),
                                })
                            }
                        };
                    }
                    _ => {} // unknown metadata is ignored for forward compatibility
                }
            }
            continue;
        }
        if !seen_header {
            if line.trim() != "lag,re,im,abs" {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected header \"lag,re,im,abs\", got {line:?}"),
                });
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 comma-separated fields, got {}", fields.len()),
            });
        }
        let lag = parse_num(fields[0], line_no, "lag")?;
        let re = parse_num(fields[1], line_no, "re")?;
        let im = parse_num(fields[2], line_no, "im")?;
        let abs = parse_num(fields[3], line_no, "abs")?;
        let recomputed = (re * re + im * im).sqrt();
        if (recomputed - abs).abs() > 1e-6 * abs.abs().max(1.0) {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "abs column {abs} disagrees with |re + j im| = {recomputed}"
                ),
            });
        }
        if let Some(last) = lags.last() {
            if T::of(lag) <= *last {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "lag column must be strictly increasing, got {} after {}",
                        lag,
                        last.as_f64()
                    ),
                });
            }
        }
        lags.push(T::of(lag));
        values.push(Cplx::new(T::of(re), T::of(im)));
    }
    if !seen_header {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: "missing \"lag,re,im,abs\" header".into(),
        });
    }
    CorrelationCurve::new(kind, anchor, lags, values, normalized, None)
}

/// Writes a curve to a file in the reference CSV format.
pub fn export_curve<T: Real>(path: impl AsRef<Path>, curve: &CorrelationCurve<T>) -> Result<()> {
    std::fs::write(path, curve_to_csv(curve))?;
    Ok(())
}

/// Reads a reference curve from a CSV file written by [`export_curve`] (or by
/// hand in the same format).
pub fn ingest_reference_curve<T: Real>(path: impl AsRef<Path>) -> Result<CorrelationCurve<T>> {
    let text = std::fs::read_to_string(path)?;
    curve_from_csv(&text)
}

// ---------------------------------------------------------------------------
// Correlation engine
// ---------------------------------------------------------------------------

/// One correlation probe: a time lag plus optional element displacement
/// vectors (meters, array frame) applied at the lagged instant.
#[derive(Debug, Clone, Copy)]
struct Probe<T: Real> {
    dt: T,
    dr_tx: Vec3<T>,
    dr_rx: Vec3<T>,
    has_offset: bool,
}

impl<T: Real> Probe<T> {
    fn time_only(dt: T) -> Self {
        Self {
            dt,
            dr_tx: Vec3::zero(),
            dr_rx: Vec3::zero(),
            has_offset: false,
        }
    }

    fn general(dt: T, dr_tx: Vec3<T>, dr_rx: Vec3<T>) -> Self {
        let has_offset = dr_tx.norm() > T::zero() || dr_rx.norm() > T::zero();
        Self {
            dt,
            dr_tx,
            dr_rx,
            has_offset,
        }
    }
}

/// Per-scene analytic output: un-normalized correlation per probe plus the
/// channel power at the anchor and at every probe instant.
struct AnalyticPartial<T: Real> {
    num: Vec<Cplx<T>>,
    p_anchor: T,
    p_probe: Vec<T>,
}

/// Per-scene Monte-Carlo sums over the realizations assigned to the scene.
struct McPartial<T: Real> {
    num: Vec<Cplx<T>>,
    sum_sq: Vec<T>,
    den_anchor: T,
    den_probe: Vec<T>,
    count: usize,
}

/// Computes analytic and Monte-Carlo space-time correlations for a channel
/// model over a shared scene ensemble.
///
/// The analyzer is a lightweight view; construction does no work. Component,
/// posture mode, observed element pair, and ensemble size have builder-style
/// setters. All estimates are normalized pointwise by the geometric mean of
/// the channel powers at the two instants involved.
#[derive(Debug, Clone, Copy)]
pub struct CorrelationAnalyzer<'m, T: Real> {
    model: &'m ChannelModel<T>,
    n_scenes: usize,
    component: Component,
    mode: PostureMode,
    rx_element: usize,
    tx_element: usize,
}

impl<'m, T: Real> CorrelationAnalyzer<'m, T> {
    /// Analyzer over the default ensemble of [`DEFAULT_ENSEMBLE_SCENES`]
    /// scenes, observing element pair (0, 0) in the model's posture mode.
    pub fn new(model: &'m ChannelModel<T>) -> Self {
        Self {
            model,
            n_scenes: DEFAULT_ENSEMBLE_SCENES,
            component: Component::Full,
            mode: model.posture_mode(),
            rx_element: 0,
            tx_element: 0,
        }
    }

    pub fn with_scenes(mut self, n_scenes: usize) -> Self {
        self.n_scenes = n_scenes;
        self
    }

    pub fn with_component(mut self, component: Component) -> Self {
        self.component = component;
        self
    }

    pub fn with_mode(mut self, mode: PostureMode) -> Self {
        self.mode = mode;
        self
    }

    /// Observes receive element `q` and transmit element `p`.
    pub fn with_element(mut self, q: usize, p: usize) -> Self {
        self.rx_element = q;
        self.tx_element = p;
        self
    }

    pub fn model(&self) -> &'m ChannelModel<T> {
        self.model
    }

    pub fn n_scenes(&self) -> usize {
        self.n_scenes
    }

    fn validate(&self) -> Result<()> {
        if self.n_scenes == 0 {
            return Err(Error::invalid("correlation ensemble needs at least one scene"));
        }
        if self.rx_element >= self.model.n_rx_elements() {
            return Err(Error::out_of_range(format!(
                "receive element {} out of range for {} elements",
                self.rx_element,
                self.model.n_rx_elements()
            )));
        }
        if self.tx_element >= self.model.n_tx_elements() {
            return Err(Error::out_of_range(format!(
                "transmit element {} out of range for {} elements",
                self.tx_element,
                self.model.n_tx_elements()
            )));
        }
        Ok(())
    }

    // -- scalar ops ---------------------------------------------------------

    /// Normalized analytic space-time correlation between the observed
    /// element pair at time `t` and the pair displaced by `dr_tx` / `dr_rx`
    /// (meters, element frame) at time `t + dt`.
    pub fn analytic_stcf(&self, t: T, dt: T, dr_tx: Vec3<T>, dr_rx: Vec3<T>) -> Result<Cplx<T>> {
        let probes = [Probe::general(dt, dr_tx, dr_rx)];
        let (values, _) = self.analytic_over_probes(t, &probes)?;
        Ok(values[0])
    }

    /// Normalized analytic temporal autocorrelation at anchor `t`, lag `dt`.
    pub fn analytic_acf(&self, t: T, dt: T) -> Result<Cplx<T>> {
        self.analytic_stcf(t, dt, Vec3::zero(), Vec3::zero())
    }

    /// Normalized analytic spatial cross-correlation at time `t` for literal
    /// displacement vectors (meters).
    pub fn analytic_ccf(&self, t: T, dr_tx: Vec3<T>, dr_rx: Vec3<T>) -> Result<Cplx<T>> {
        self.analytic_stcf(t, T::zero(), dr_tx, dr_rx)
    }

    // -- curve ops ----------------------------------------------------------

    /// Analytic autocorrelation curve over a strictly increasing grid of time
    /// lags (seconds), anchored at `t`.
    pub fn analytic_acf_curve(&self, t: T, lags: &[T]) -> Result<CorrelationCurve<T>> {
        let probes: Vec<Probe<T>> = lags.iter().map(|&dt| Probe::time_only(dt)).collect();
        let (values, _) = self.analytic_over_probes(t, &probes)?;
        CorrelationCurve::new(CurveKind::Acf, t, lags.to_vec(), values, true, None)
    }

    /// Analytic spatial cross-correlation curve at time `t`. `lags` are
    /// element displacements in carrier wavelengths along `axis` (element
    /// frame) applied to one terminal's side.
    pub fn analytic_ccf_curve(
        &self,
        t: T,
        lags: &[T],
        side: ArraySide,
        axis: Vec3<T>,
    ) -> Result<CorrelationCurve<T>> {
        let probes = self.ccf_probes(lags, side, axis)?;
        let (values, _) = self.analytic_over_probes(t, &probes)?;
        CorrelationCurve::new(CurveKind::Ccf, t, lags.to_vec(), values, true, None)
    }

    /// Monte-Carlo autocorrelation curve over `n_realizations` channel
    /// realizations. `seed` offsets the realization phase stream so disjoint
    /// seeds give independent estimates; the scene ensemble is unaffected.
    pub fn mc_acf(
        &self,
        t: T,
        lags: &[T],
        n_realizations: usize,
        seed: u64,
    ) -> Result<CorrelationCurve<T>> {
        let probes: Vec<Probe<T>> = lags.iter().map(|&dt| Probe::time_only(dt)).collect();
        let (values, se) = self.mc_over_probes(t, &probes, n_realizations, seed)?;
        CorrelationCurve::new(CurveKind::Acf, t, lags.to_vec(), values, true, Some(se))
    }

    /// Monte-Carlo spatial cross-correlation curve; `lags` in carrier
    /// wavelengths along `axis` on the chosen side.
    pub fn mc_ccf(
        &self,
        t: T,
        lags: &[T],
        side: ArraySide,
        axis: Vec3<T>,
        n_realizations: usize,
        seed: u64,
    ) -> Result<CorrelationCurve<T>> {
        let probes = self.ccf_probes(lags, side, axis)?;
        let (values, se) = self.mc_over_probes(t, &probes, n_realizations, seed)?;
        CorrelationCurve::new(CurveKind::Ccf, t, lags.to_vec(), values, true, Some(se))
    }

    fn ccf_probes(&self, lags: &[T], side: ArraySide, axis: Vec3<T>) -> Result<Vec<Probe<T>>> {
        let norm = axis.norm();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::invalid("spacing axis must be a nonzero finite vector"));
        }
        let unit = axis.scale(T::one() / norm);
        let lambda = self.model.carrier().wavelength();
        Ok(lags
            .iter()
            .map(|&wl| {
                let shift = unit.scale(wl * lambda);
                match side {
                    ArraySide::Tx => Probe::general(T::zero(), shift, Vec3::zero()),
                    ArraySide::Rx => Probe::general(T::zero(), Vec3::zero(), shift),
                }
            })
            .collect())
    }

    // -- engine -------------------------------------------------------------

    fn analytic_over_probes(&self, anchor: T, probes: &[Probe<T>]) -> Result<(Vec<Cplx<T>>, Vec<T>)> {
        self.validate()?;
        if probes.is_empty() {
            return Err(Error::invalid("no correlation probes requested"));
        }
        let partials: Vec<AnalyticPartial<T>> = (0..self.n_scenes)
            .into_par_iter()
            .map(|s| self.per_scene_analytic(s as u64, anchor, probes))
            .collect::<Result<Vec<_>>>()?;

        let n = probes.len();
        let inv_s = T::one() / T::of(self.n_scenes as f64);
        let mut num = vec![Cplx::new(T::zero(), T::zero()); n];
        let mut p_anchor = T::zero();
        let mut p_probe = vec![T::zero(); n];
        for part in &partials {
            p_anchor = p_anchor + part.p_anchor * inv_s;
            for i in 0..n {
                num[i] = num[i] + part.num[i].scale(inv_s);
                p_probe[i] = p_probe[i] + part.p_probe[i] * inv_s;
            }
        }
        if !(p_anchor > T::zero()) {
            return Err(Error::degenerate(
                "channel power vanishes at the anchor instant; cannot normalize",
            ));
        }
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            if !(p_probe[i] > T::zero()) {
                return Err(Error::degenerate(
                    "channel power vanishes at a probe instant; cannot normalize",
                ));
            }
            values.push(num[i].unscale((p_anchor * p_probe[i]).sqrt()));
        }
        Ok((values, p_probe))
    }

    fn mc_over_probes(
        &self,
        anchor: T,
        probes: &[Probe<T>],
        n_realizations: usize,
        seed: u64,
    ) -> Result<(Vec<Cplx<T>>, Vec<T>)> {
        self.validate()?;
        if probes.is_empty() {
            return Err(Error::invalid("no correlation probes requested"));
        }
        if n_realizations < 2 {
            return Err(Error::invalid(format!(
                "Monte-Carlo estimation needs at least 2 realizations, got {n_realizations}"
            )));
        }
        let partials: Vec<McPartial<T>> = (0..self.n_scenes)
            .into_par_iter()
            .map(|s| {
                let assigned: Vec<u64> = (s..n_realizations)
                    .step_by(self.n_scenes)
                    .map(|j| j as u64)
                    .collect();
                self.per_scene_mc(s as u64, anchor, probes, &assigned, seed)
            })
            .collect::<Result<Vec<_>>>()?;

        let n = probes.len();
        let mut num = vec![Cplx::new(T::zero(), T::zero()); n];
        let mut sum_sq = vec![T::zero(); n];
        let mut den_anchor = T::zero();
        let mut den_probe = vec![T::zero(); n];
        let mut count = 0usize;
        for part in &partials {
            den_anchor = den_anchor + part.den_anchor;
            count += part.count;
            for i in 0..n {
                num[i] = num[i] + part.num[i];
                sum_sq[i] = sum_sq[i] + part.sum_sq[i];
                den_probe[i] = den_probe[i] + part.den_probe[i];
            }
        }
        debug_assert_eq!(count, n_realizations);
        if !(den_anchor > T::zero()) {
            return Err(Error::degenerate(
                "all realizations have zero power at the anchor instant",
            ));
        }
        let r = T::of(count as f64);
        let mut values = Vec::with_capacity(n);
        let mut std_err = Vec::with_capacity(n);
        for i in 0..n {
            if !(den_probe[i] > T::zero()) {
                return Err(Error::degenerate(
                    "all realizations have zero power at a probe instant",
                ));
            }
            let den = (den_anchor * den_probe[i]).sqrt();
            values.push(num[i].unscale(den));
            // Unbiased variance of the per-realization products, mapped
            // through the (fixed-denominator) normalization.
            let var = ((sum_sq[i] - num[i].norm_sqr() / r) / (r - T::one())).max(T::zero());
            std_err.push((var * r).sqrt() / den);
        }
        Ok((values, std_err))
    }

    /// Unique evaluation times for an anchor and probe set, plus the probe
    /// instants themselves (anchor + dt, in probe order).
    fn probe_times(&self, anchor: T, probes: &[Probe<T>]) -> (Vec<T>, Vec<T>) {
        let mut times = Vec::with_capacity(probes.len() + 1);
        times.push(anchor);
        let mut instants = Vec::with_capacity(probes.len());
        for pr in probes {
            let tau = anchor + pr.dt;
            instants.push(tau);
            times.push(tau);
        }
        (times, instants)
    }

    /// Ricean amplitude weights per unique time index, already filtered by
    /// component: (specular weight, scattered weight).
    fn component_weights(
        &self,
        ev: &SceneEvaluator<'_, T>,
    ) -> Result<(Vec<T>, Vec<T>)> {
        let times = ev.times();
        let mut w_los = Vec::with_capacity(times.len());
        let mut w_nlos = Vec::with_capacity(times.len());
        for &tau in times {
            let k = ev.scene().k_factor_at(tau);
            let (wl, wn) = crate::channel::ricean_weights(k)?;
            let (wl, wn) = match self.component {
                Component::Full => (wl, wn),
                Component::LosOnly => (wl, T::zero()),
                Component::NlosOnly => (T::zero(), wn),
            };
            w_los.push(wl);
            w_nlos.push(wn);
        }
        Ok((w_los, w_nlos))
    }

    /// Extra spatial phase a probe's displacement adds to a path at a given
    /// evaluation-time index.
    fn offset_phase(
        &self,
        ev: &SceneEvaluator<'_, T>,
        path: PathRef,
        ti: usize,
        probe: &Probe<T>,
    ) -> Result<T> {
        let t = ev.times()[ti];
        let (d_tx, d_rx) = ev.effective_directions(self.mode, path, t)?;
        Ok(ev.wave_number() * (probe.dr_tx.dot(d_tx) + probe.dr_rx.dot(d_rx)))
    }

    fn per_scene_analytic(
        &self,
        scene_index: u64,
        anchor: T,
        probes: &[Probe<T>],
    ) -> Result<AnalyticPartial<T>> {
        let model = self.model;
        let scene = model.scene(scene_index)?;
        let (times, instants) = self.probe_times(anchor, probes);
        let ev = model.evaluator(&scene, &times)?;
        let nt = ev.times().len();
        let ti_a = ev.time_index(anchor)?;
        let lambda = model.config().lambda_death;
        let (w_los, w_nlos) = self.component_weights(&ev)?;

        let q = self.rx_element;
        let p = self.tx_element;
        let los_d = ev.los_doppler_table();
        let nlos_d = ev.nlos_doppler_table();
        let combos = ev.combos_table(self.mode);
        let bil = ev.los_bilinear_table(self.mode);
        let txp = ev.tx_projection_table(self.mode);
        let rxp = ev.rx_projection_table(self.mode);
        let txp_los = ev.tx_projection_los_table(self.mode);
        let rxp_los = ev.rx_projection_los_table(self.mode);

        let n_clusters = ev.n_clusters();
        let rays = ev.rays_per_cluster();
        let nm = n_clusters * rays;
        let inv_m = T::one() / T::of(rays.max(1) as f64);

        let los_phase =
            |ti: usize| los_d[ti] + txp_los[p * nt + ti] + rxp_los[q * nt + ti];
        let path_phase = |path: usize, ti: usize| {
            nlos_d[path * nt + ti] + txp[p * nm * nt + path * nt + ti] + rxp[q * nm * nt + path * nt + ti]
        };

        // Channel power at a time index: specular + scattered contributions
        // weighted by the component-filtered Ricean weights and the mean
        // cluster survival probability.
        let power_at = |ti: usize, tau: T| -> T {
            let mut pw = w_los[ti] * w_los[ti] * bil[ti] * bil[ti];
            let mut scat = T::zero();
            for (n, cluster) in scene.clusters().clusters().iter().enumerate() {
                if !cluster.alive {
                    continue;
                }
                let mut ray_sum = T::zero();
                for m in 0..rays {
                    let c = combos[(n * rays + m) * nt + ti];
                    ray_sum = ray_sum + c[0] * c[0] + c[1] * c[1] + c[2] * c[2] + c[3] * c[3];
                }
                scat = scat + cluster.power * ray_sum * inv_m;
            }
            let survival = (-lambda * tau).exp();
            pw = pw + w_nlos[ti] * w_nlos[ti] * scat * survival;
            pw
        };

        let p_anchor = power_at(ti_a, anchor);
        let mut p_probe = Vec::with_capacity(probes.len());
        let mut num = Vec::with_capacity(probes.len());

        for (i, probe) in probes.iter().enumerate() {
            let tau_b = instants[i];
            let ti_b = ev.time_index(tau_b)?;
            p_probe.push(power_at(ti_b, tau_b));

            // Specular term: the per-realization global phase cancels in the
            // conjugate product, leaving deterministic phase evolution.
            let mut value = Cplx::new(T::zero(), T::zero());
            if w_los[ti_a] > T::zero() && w_los[ti_b] > T::zero() {
                let mut extra = T::zero();
                if probe.has_offset {
                    extra = self.offset_phase(&ev, PathRef::Los, ti_b, probe)?;
                }
                let amp = w_los[ti_a] * w_los[ti_b] * bil[ti_a] * bil[ti_b];
                value = value + cis(los_phase(ti_b) + extra - los_phase(ti_a)).scale(amp);
            }

            // Scattered terms: only same-sub-path, same-polarization-branch
            // products survive the expectation over the uniform phases, and
            // the joint survival probability is exp(-lambda * max(t, t')).
            if w_nlos[ti_a] > T::zero() && w_nlos[ti_b] > T::zero() {
                let joint_tau = if tau_b > anchor { tau_b } else { anchor };
                let survival = (-lambda * joint_tau).exp();
                let w2 = w_nlos[ti_a] * w_nlos[ti_b] * survival * inv_m;
                for (n, cluster) in scene.clusters().clusters().iter().enumerate() {
                    if !cluster.alive {
                        continue;
                    }
                    let mut csum = Cplx::new(T::zero(), T::zero());
                    for m in 0..rays {
                        let path = n * rays + m;
                        let ca = combos[path * nt + ti_a];
                        let cb = combos[path * nt + ti_b];
                        let branch =
                            ca[0] * cb[0] + ca[1] * cb[1] + ca[2] * cb[2] + ca[3] * cb[3];
                        let mut extra = T::zero();
                        if probe.has_offset {
                            extra = self.offset_phase(
                                &ev,
                                PathRef::SubPath { cluster: n, ray: m },
                                ti_b,
                                probe,
                            )?;
                        }
                        let dphi = path_phase(path, ti_b) + extra - path_phase(path, ti_a);
                        csum = csum + cis(dphi).scale(branch);
                    }
                    value = value + csum.scale(w2 * cluster.power);
                }
            }
            num.push(value);
        }

        Ok(AnalyticPartial {
            num,
            p_anchor,
            p_probe,
        })
    }

    fn per_scene_mc(
        &self,
        scene_index: u64,
        anchor: T,
        probes: &[Probe<T>],
        realizations: &[u64],
        seed: u64,
    ) -> Result<McPartial<T>> {
        if realizations.is_empty() {
            return Ok(McPartial {
                num: vec![Cplx::new(T::zero(), T::zero()); probes.len()],
                sum_sq: vec![T::zero(); probes.len()],
                den_anchor: T::zero(),
                den_probe: vec![T::zero(); probes.len()],
                count: 0,
            });
        }
        let model = self.model;
        let scene = model.scene(scene_index)?;
        let (times, instants) = self.probe_times(anchor, probes);
        let ev = model.evaluator(&scene, &times)?;
        let nt = ev.times().len();
        let ti_a = ev.time_index(anchor)?;
        let (w_los, w_nlos) = self.component_weights(&ev)?;

        let q = self.rx_element;
        let p = self.tx_element;
        let los_d = ev.los_doppler_table();
        let nlos_d = ev.nlos_doppler_table();
        let combos = ev.combos_table(self.mode);
        let bil = ev.los_bilinear_table(self.mode);
        let txp = ev.tx_projection_table(self.mode);
        let rxp = ev.rx_projection_table(self.mode);
        let txp_los = ev.tx_projection_los_table(self.mode);
        let rxp_los = ev.rx_projection_los_table(self.mode);

        let n_clusters = ev.n_clusters();
        let rays = ev.rays_per_cluster();
        let nm = n_clusters * rays;
        let inv_sqrt_m = (T::one() / T::of(rays.max(1) as f64)).sqrt();

        let ti_b: Vec<usize> = instants
            .iter()
            .map(|&tau| ev.time_index(tau))
            .collect::<Result<Vec<_>>>()?;

        // Realization-independent phasors: deterministic phase (Doppler +
        // element projections) per path and unique time, and the specular
        // amplitude including the Ricean weight.
        let mut path_phasor = vec![Cplx::new(T::zero(), T::zero()); nm * nt];
        for path in 0..nm {
            for ti in 0..nt {
                let phase = nlos_d[path * nt + ti]
                    + txp[p * nm * nt + path * nt + ti]
                    + rxp[q * nm * nt + path * nt + ti];
                path_phasor[path * nt + ti] = cis(phase);
            }
        }
        let mut los_phasor = Vec::with_capacity(nt);
        let mut los_amp = Vec::with_capacity(nt);
        for ti in 0..nt {
            los_phasor.push(cis(los_d[ti] + txp_los[p * nt + ti] + rxp_los[q * nt + ti]));
            los_amp.push(w_los[ti] * bil[ti]);
        }

        // Spatial-displacement phasors per probe and path (realization
        // independent), evaluated at each probe's own instant.
        let offset_needed = probes.iter().any(|pr| pr.has_offset);
        let mut off_path = vec![Cplx::new(T::one(), T::zero()); probes.len() * nm];
        let mut off_los = vec![Cplx::new(T::one(), T::zero()); probes.len()];
        if offset_needed {
            for (i, probe) in probes.iter().enumerate() {
                if !probe.has_offset {
                    continue;
                }
                off_los[i] = cis(self.offset_phase(&ev, PathRef::Los, ti_b[i], probe)?);
                for n in 0..n_clusters {
                    for m in 0..rays {
                        let path = n * rays + m;
                        let phase = self.offset_phase(
                            &ev,
                            PathRef::SubPath { cluster: n, ray: m },
                            ti_b[i],
                            probe,
                        )?;
                        off_path[i * nm + path] = cis(phase);
                    }
                }
            }
        }

        let cluster_amp: Vec<T> = scene
            .clusters()
            .clusters()
            .iter()
            .map(|c| if c.alive { c.power.sqrt() * inv_sqrt_m } else { T::zero() })
            .collect();

        let n = probes.len();
        let mut num = vec![Cplx::new(T::zero(), T::zero()); n];
        let mut sum_sq = vec![T::zero(); n];
        let mut den_anchor = T::zero();
        let mut den_probe = vec![T::zero(); n];

        // Reused per-realization buffers.
        let mut path_term = vec![Cplx::new(T::zero(), T::zero()); nm * nt];
        let mut h_u = vec![Cplx::new(T::zero(), T::zero()); nt];

        for &j in realizations {
            let draw = model.phase_draw(seed.wrapping_add(j));

            // Per-cluster: initial phase phasor and survival at each
            // evaluation time; per-sub-path: polarization branch phasors.
            let init_phasor: Vec<Cplx<T>> = (0..n_clusters)
                .map(|ncl| cis(draw.cluster_init[ncl]))
                .collect();

            for x in h_u.iter_mut() {
                *x = Cplx::new(T::zero(), T::zero());
            }
            for ncl in 0..n_clusters {
                let amp_n = cluster_amp[ncl];
                if !(amp_n > T::zero()) {
                    continue;
                }
                for m in 0..rays {
                    let path = ncl * rays + m;
                    let pol = draw.pol[path];
                    let e0 = cis(pol[0]);
                    let e1 = cis(pol[1]);
                    let e2 = cis(pol[2]);
                    let e3 = cis(pol[3]);
                    for ti in 0..nt {
                        let c = combos[path * nt + ti];
                        let branch = e0.scale(c[0]) + e1.scale(c[1]) + e2.scale(c[2]) + e3.scale(c[3]);
                        let alive = draw.alive(ncl, ev.times()[ti]);
                        let amp = if alive { amp_n * w_nlos[ti] } else { T::zero() };
                        let z = branch * path_phasor[path * nt + ti] * init_phasor[ncl];
                        let z = z.scale(amp);
                        path_term[path * nt + ti] = z;
                        h_u[ti] = h_u[ti] + z;
                    }
                }
            }
            let los_global = cis(draw.los);
            let mut los_term = Vec::with_capacity(nt);
            for ti in 0..nt {
                let z = (los_phasor[ti] * los_global).scale(los_amp[ti]);
                h_u[ti] = h_u[ti] + z;
                los_term.push(z);
            }

            let h_a = h_u[ti_a];
            den_anchor = den_anchor + h_a.norm_sqr();
            for i in 0..n {
                let h_b = if probes[i].has_offset {
                    let mut acc = los_term[ti_b[i]] * off_los[i];
                    for path in 0..nm {
                        acc = acc + path_term[path * nt + ti_b[i]] * off_path[i * nm + path];
                    }
                    acc
                } else {
                    h_u[ti_b[i]]
                };
                let z = h_a.conj() * h_b;
                num[i] = num[i] + z;
                sum_sq[i] = sum_sq[i] + z.norm_sqr();
                den_probe[i] = den_probe[i] + h_b.norm_sqr();
            }
        }

        Ok(McPartial {
            num,
            sum_sq,
            den_anchor,
            den_probe,
            count: realizations.len(),
        })
    }
}
