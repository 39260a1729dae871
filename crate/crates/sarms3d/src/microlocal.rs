//! Artefact prediction and time gating.
//!
//! Two scene points `x` and `y` are indistinguishable to the pair `(s, r)`
//! when they share the bistatic range sum and both antenna direction
//! cosines; [`intersection_residuals`] measures the mismatch of those three
//! equations. In prolate coordinates the matching conditions reduce to a
//! linear system in the differences `A`, `B`, `C` of direction terms, and
//! the system's determinant [`determinant`] is strictly positive once the
//! radial coordinate exceeds [`rho_min`]. Above that radius only the true
//! point and its mirror across the transceiver plane survive, which turns
//! into a per-pair fast-time gate: discard samples earlier than
//! [`min_gate_time`].

use crate::error::{Error, Result};
use crate::geometry::{ellipse_frame, Aabb, AcquisitionGeometry};
use crate::vec3::{self, Vec3};
use crate::C0;
use rayon::prelude::*;

/// Distance below which a queried point is considered to sit on a focus.
pub const EPS_FOCUS: f64 = 1e-9;

/// Safety margin added to the sufficient lower bounds on `rho`.
pub const RHO_MARGIN: f64 = 1e-6;

/// Default per-face sampling density for ROI gating.
pub const DEFAULT_FACE_SAMPLES: usize = 32;

/// Half-width of the transceiver-plane neighbourhood that triggers the
/// gating report warning flag, metres.
pub const PLANE_NEIGHBORHOOD: f64 = 1e-6;

/// Mismatch of the three intersection equations between two scene points.
///
/// All three components vanish exactly when `y = x` and when `y` is the
/// mirror of `x` across the transceiver plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualTriple {
    /// Bistatic range-sum mismatch, metres.
    pub range_sum: f64,
    /// Transmitter direction-cosine mismatch, dimensionless.
    pub tx_cosine: f64,
    /// Receiver direction-cosine mismatch, dimensionless.
    pub rx_cosine: f64,
}

/// Evaluates the three intersection residuals for scene points `x`, `y`
/// and the pair `(s, r)`.
///
/// Fails with [`Error::DegenerateGeometry`] when either point lies within
/// [`EPS_FOCUS`] of an antenna, where the direction cosines blow up.
pub fn intersection_residuals(
    x: Vec3,
    y: Vec3,
    s: f64,
    r: f64,
    g: &AcquisitionGeometry,
) -> Result<ResidualTriple> {
    let tx = g.transmitter_position(s);
    let rx = g.receiver_position(r);
    let delta = g.delta();

    let d1x = vec3::dist(x, tx);
    let d2x = vec3::dist(x, rx);
    let d1y = vec3::dist(y, tx);
    let d2y = vec3::dist(y, rx);
    for (d, label) in [(d1x, "x/tx"), (d2x, "x/rx"), (d1y, "y/tx"), (d2y, "y/rx")] {
        if d < EPS_FOCUS {
            return Err(Error::DegenerateGeometry(format!(
                "point coincides with an antenna position ({label}, distance {d:.3e} m)"
            )));
        }
    }

    // Mismatch of the range sums.
    let range_sum = (d1x + d2x) - (d1y + d2y);
    // Direction cosine along the transmitter line: the tangent is
    // proportional to (cot beta, 1, 0).
    let tx_num = |p: Vec3| delta * (p[0] - tx[0]) + (p[1] - tx[1]);
    let tx_cosine = tx_num(x) / d1x - tx_num(y) / d1y;
    // Direction cosine along the receiver line (tangent (1, 0, 0)).
    let rx_cosine = (x[0] - rx[0]) / d2x - (y[0] - rx[0]) / d2y;

    Ok(ResidualTriple {
        range_sum,
        tx_cosine,
        rx_cosine,
    })
}

/// Differences of the prolate direction terms between two candidate points
/// with equal radial coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbcTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// `A = cos φ − cos φ'`, `B = sin φ cos θ − sin φ' cos θ'`,
/// `C = sin φ' cos θ' cos φ − sin φ cos φ' cos θ`.
pub fn abc(phi: f64, theta: f64, phi_p: f64, theta_p: f64) -> AbcTriple {
    let (sin_phi, cos_phi) = phi.sin_cos();
    let (sin_phi_p, cos_phi_p) = phi_p.sin_cos();
    let cos_theta = theta.cos();
    let cos_theta_p = theta_p.cos();
    AbcTriple {
        a: cos_phi - cos_phi_p,
        b: sin_phi * cos_theta - sin_phi_p * cos_theta_p,
        c: sin_phi_p * cos_theta_p * cos_phi - sin_phi * cos_phi_p * cos_theta,
    }
}

impl AbcTriple {
    /// `C` recomputed through the algebraic identity
    /// `C = sin φ' cos θ' · A − B cos φ'`; must agree with the definition.
    pub fn c_from_identity(&self, phi_p: f64, theta_p: f64) -> f64 {
        phi_p.sin() * theta_p.cos() * self.a - self.b * phi_p.cos()
    }
}

/// Determinant of the linear system coupling `A`, `B`, `C`:
///
/// ```text
/// Δ = cosh ρ sinh ρ
///   + sinh ρ cos φ' (δ sin 2α + cos 2α)
///   + cosh ρ sin φ' cos θ' (sin 2α + 2 δ sin² α)
/// ```
///
/// Strict positivity of Δ forces `A = B = C = 0`, i.e. candidate points can
/// only be the true scatterer or its mirror.
pub fn determinant(rho: f64, alpha: f64, phi_p: f64, theta_p: f64, delta: f64) -> f64 {
    let (sinh_rho, cosh_rho) = (rho.sinh(), rho.cosh());
    let sin_a = alpha.sin();
    let sin_2a = (2.0 * alpha).sin();
    let cos_2a = (2.0 * alpha).cos();
    cosh_rho * sinh_rho
        + sinh_rho * phi_p.cos() * (delta * sin_2a + cos_2a)
        + cosh_rho * phi_p.sin() * theta_p.cos() * (sin_2a + 2.0 * delta * sin_a * sin_a)
}

/// Pointwise lower bound on [`determinant`]:
/// `Δ ≥ cosh ρ sinh ρ − (1 + |δ|) sinh ρ − (1 + 2|δ|) cosh ρ`.
pub fn determinant_lower_bound(rho: f64, delta: f64) -> f64 {
    let (sinh_rho, cosh_rho) = (rho.sinh(), rho.cosh());
    cosh_rho * sinh_rho - (1.0 + delta.abs()) * sinh_rho - (1.0 + 2.0 * delta.abs()) * cosh_rho
}

/// Sufficient radial bound for determinant positivity at line angle
/// `δ = cot β`: `ln(5 + 8|δ|)` plus [`RHO_MARGIN`].
pub fn rho_min(delta: f64) -> f64 {
    (5.0 + 8.0 * delta.abs()).ln() + RHO_MARGIN
}

/// The coarser `ln 6` bound specific to perpendicular trajectories,
/// retained alongside the general bound for comparison.
pub fn rho_min_perpendicular() -> f64 {
    6.0_f64.ln()
}

/// Radial prolate coordinate of a world point for the pair `(s, r)`:
/// `arccosh((|x−γ1| + |x−γ2|) / (2D))`.
pub fn rho_of_point(x: Vec3, s: f64, r: f64, g: &AcquisitionGeometry) -> Result<f64> {
    let frame = ellipse_frame(g, s, r)?;
    let sum = vec3::dist(x, g.transmitter_position(s)) + vec3::dist(x, g.receiver_position(r));
    Ok((sum / (2.0 * frame.d)).max(1.0).acosh())
}

/// Earliest admissible fast time for the pair `(s, r)` at radial bound
/// `rho_min`: `t_min = (2D / c0) cosh(rho_min)`. Data samples at or before
/// `t_min` must be discarded for the artefact-free guarantee.
pub fn min_gate_time(s: f64, r: f64, g: &AcquisitionGeometry, rho_min: f64) -> Result<f64> {
    let frame = ellipse_frame(g, s, r)?;
    Ok(2.0 * frame.d / C0 * rho_min.cosh())
}

/// Per-pair gate parameters for one transmitter/receiver combination.
#[derive(Debug, Clone, PartialEq)]
pub struct GateEntry {
    pub s: f64,
    pub r: f64,
    /// Half focal distance of the pair, metres.
    pub d: f64,
    /// Earliest admissible fast time, seconds.
    pub t_min: f64,
    /// Whether the whole ROI sits beyond the radial bound for this pair.
    pub roi_compliant: bool,
}

/// Gating report over all sampled pairs of a geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingReport {
    /// Radial bound the report was computed for.
    pub rho_min: f64,
    /// One entry per pair, transmitter-major (`j * n_rx + k`).
    pub entries: Vec<GateEntry>,
    /// Smallest ROI radial coordinate over all pairs; `None` when the report
    /// was reloaded from CSV, which does not store it.
    pub global_min_rho_over_roi: Option<f64>,
    /// Set when the ROI touches the transceiver-plane neighbourhood, where
    /// gating cannot separate a point from its mirror.
    pub plane_warning: bool,
}

/// Smallest radial coordinate of the box for the pair `(s, r)`.
///
/// The radial coordinate is quasi-convex with its zero set on the focal
/// segment, so the minimum over a box lies on the boundary unless the
/// segment itself enters the box; both cases are handled.
pub fn min_rho_over_box(
    g: &AcquisitionGeometry,
    s: f64,
    r: f64,
    roi: &Aabb,
    face_samples: usize,
) -> Result<f64> {
    let tx = g.transmitter_position(s);
    let rx = g.receiver_position(r);
    if roi.intersects_segment(tx, rx) {
        return Ok(0.0);
    }
    let n = face_samples.max(2);
    let lerp = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * (i as f64) / ((n - 1) as f64);
    let mut min_rho = f64::INFINITY;
    for axis in 0..3 {
        let (u_axis, v_axis) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for &fixed in &[roi.min[axis], roi.max[axis]] {
            for iu in 0..n {
                for iv in 0..n {
                    let mut p = [0.0; 3];
                    p[axis] = fixed;
                    p[u_axis] = lerp(roi.min[u_axis], roi.max[u_axis], iu);
                    p[v_axis] = lerp(roi.min[v_axis], roi.max[v_axis], iv);
                    let rho = rho_of_point(p, s, r, g)?;
                    if rho < min_rho {
                        min_rho = rho;
                    }
                }
            }
        }
    }
    Ok(min_rho)
}

/// Builds the gating report for a region of interest at per-face sampling
/// density `face_samples`.
pub fn roi_gating_report_with_density(
    g: &AcquisitionGeometry,
    roi: &Aabb,
    rho_min: f64,
    face_samples: usize,
) -> Result<GatingReport> {
    if roi.is_empty() {
        return Err(Error::EmptyRoi);
    }
    let plane_warning =
        roi.min[2] <= g.z0 + PLANE_NEIGHBORHOOD && roi.max[2] >= g.z0 - PLANE_NEIGHBORHOOD;

    let pairs: Vec<(f64, f64)> = (0..g.n_tx)
        .flat_map(|j| (0..g.n_rx).map(move |k| (j, k)))
        .map(|(j, k)| (g.tx_sample(j), g.rx_sample(k)))
        .collect();

    let computed: Result<Vec<(GateEntry, f64)>> = pairs
        .par_iter()
        .map(|&(s, r)| {
            let frame = ellipse_frame(g, s, r)?;
            let min_rho = min_rho_over_box(g, s, r, roi, face_samples)?;
            let entry = GateEntry {
                s,
                r,
                d: frame.d,
                t_min: 2.0 * frame.d / C0 * rho_min.cosh(),
                roi_compliant: min_rho > rho_min,
            };
            Ok((entry, min_rho))
        })
        .collect();
    let computed = computed?;

    let global = computed
        .iter()
        .map(|(_, m)| *m)
        .fold(f64::INFINITY, f64::min);
    Ok(GatingReport {
        rho_min,
        entries: computed.into_iter().map(|(e, _)| e).collect(),
        global_min_rho_over_roi: Some(global),
        plane_warning,
    })
}

/// [`roi_gating_report_with_density`] at the default density.
pub fn roi_gating_report(
    g: &AcquisitionGeometry,
    roi: &Aabb,
    rho_min: f64,
) -> Result<GatingReport> {
    roi_gating_report_with_density(g, roi, rho_min, DEFAULT_FACE_SAMPLES)
}

/// Deterministic angle sampler for determinant sweeps (SplitMix64 based, so
/// results are identical across platforms and thread counts).
#[derive(Debug, Clone)]
pub struct AngleSampler {
    state: u64,
}

impl AngleSampler {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Next `(alpha, phi', theta')` over `[0,2π) × [0,π] × [0,2π)`.
    pub fn next_angles(&mut self) -> (f64, f64, f64) {
        let two_pi = 2.0 * std::f64::consts::PI;
        (
            self.next_f64() * two_pi,
            self.next_f64() * std::f64::consts::PI,
            self.next_f64() * two_pi,
        )
    }
}

/// Outcome of a determinant positivity sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSummary {
    pub n_samples: usize,
    /// Count of samples with `Δ <= 0`.
    pub n_nonpositive: usize,
    pub min_value: f64,
    /// `(alpha, phi', theta')` attaining the minimum.
    pub argmin: (f64, f64, f64),
}

/// Evaluates the determinant at `n_samples` random angle triples for fixed
/// `(delta, rho)` and reports the minimum.
pub fn determinant_sweep(delta: f64, rho: f64, n_samples: usize, seed: u64) -> SweepSummary {
    let mut sampler = AngleSampler::new(seed);
    let mut summary = SweepSummary {
        n_samples,
        n_nonpositive: 0,
        min_value: f64::INFINITY,
        argmin: (0.0, 0.0, 0.0),
    };
    for _ in 0..n_samples {
        let (alpha, phi_p, theta_p) = sampler.next_angles();
        let v = determinant(rho, alpha, phi_p, theta_p, delta);
        if v <= 0.0 {
            summary.n_nonpositive += 1;
        }
        if v < summary.min_value {
            summary.min_value = v;
            summary.argmin = (alpha, phi_p, theta_p);
        }
    }
    summary
}

/// Mirror of `x` across the transceiver plane `z = z0`.
pub fn mirror_across_plane(x: Vec3, z0: f64) -> Vec3 {
    [x[0], x[1], 2.0 * z0 - x[2]]
}
