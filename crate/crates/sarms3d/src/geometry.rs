//! Acquisition geometry and coordinate transforms.
//!
//! The transmitter moves along `(2s·cot β, 2s, z0)` and the receiver along
//! `(2r, 0, z0)`; the two lines lie in the horizontal plane `z = z0` and meet
//! at an angle `beta`. For a fixed pair `(s, r)` the iso-delay surfaces are
//! ellipsoids with foci at the two antenna positions. This module provides
//! the translation+rotation into the frame where those foci sit at
//! `(∓D, 0, 0)`, and the prolate spheroidal coordinates `(rho, phi, theta)`
//! adapted to the confocal family.

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

/// Default degeneracy threshold on the half focal distance, metres.
pub const EPS_HALF_FOCAL: f64 = 1e-12;

/// Cylindrical radius below which the azimuth `theta` is pinned to 0,
/// as a fraction of the half focal distance.
const EPS_AXIS_REL: f64 = 1e-12;

/// Two line apertures (angle `beta`, altitude `z0`, parameter extents and
/// sample counts) plus nothing else; the frequency grid lives with the
/// simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionGeometry {
    /// Angle between the two aperture lines, radians, in (0, pi).
    pub beta: f64,
    /// Altitude of the transceiver plane, metres.
    pub z0: f64,
    /// Slow-time extent of the transmitter line.
    pub s_min: f64,
    pub s_max: f64,
    /// Slow-time extent of the receiver line.
    pub r_min: f64,
    pub r_max: f64,
    /// Transmitter and receiver sample counts.
    pub n_tx: usize,
    pub n_rx: usize,
}

impl AcquisitionGeometry {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        beta: f64,
        z0: f64,
        s_min: f64,
        s_max: f64,
        r_min: f64,
        r_max: f64,
        n_tx: usize,
        n_rx: usize,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta < std::f64::consts::PI) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie strictly inside (0, pi), got {beta}"
            )));
        }
        if n_tx < 1 || n_rx < 1 {
            return Err(Error::InvalidParameter(
                "sample counts must be at least 1".into(),
            ));
        }
        if !(s_max > s_min) || !(r_max > r_min) {
            return Err(Error::InvalidParameter(
                "aperture extents must satisfy s_max > s_min and r_max > r_min".into(),
            ));
        }
        if ![beta, z0, s_min, s_max, r_min, r_max]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidParameter(
                "geometry fields must be finite".into(),
            ));
        }
        Ok(Self {
            beta,
            z0,
            s_min,
            s_max,
            r_min,
            r_max,
            n_tx,
            n_rx,
        })
    }

    /// `cot beta`; computed as cos/sin, which is well behaved on (0, pi).
    #[inline]
    pub fn delta(&self) -> f64 {
        self.beta.cos() / self.beta.sin()
    }

    /// Transmitter position at slow time `s`: `(2s·cot β, 2s, z0)`.
    #[inline]
    pub fn transmitter_position(&self, s: f64) -> Vec3 {
        [2.0 * s * self.delta(), 2.0 * s, self.z0]
    }

    /// Receiver position at slow time `r`: `(2r, 0, z0)`.
    #[inline]
    pub fn receiver_position(&self, r: f64) -> Vec3 {
        [2.0 * r, 0.0, self.z0]
    }

    /// j-th transmitter slow-time sample, uniform over `[s_min, s_max]`.
    /// A single sample sits at the midpoint.
    #[inline]
    pub fn tx_sample(&self, j: usize) -> f64 {
        sample_uniform(self.s_min, self.s_max, self.n_tx, j)
    }

    /// k-th receiver slow-time sample, uniform over `[r_min, r_max]`.
    #[inline]
    pub fn rx_sample(&self, k: usize) -> f64 {
        sample_uniform(self.r_min, self.r_max, self.n_rx, k)
    }

    pub fn tx_samples(&self) -> Vec<f64> {
        (0..self.n_tx).map(|j| self.tx_sample(j)).collect()
    }

    pub fn rx_samples(&self) -> Vec<f64> {
        (0..self.n_rx).map(|k| self.rx_sample(k)).collect()
    }

    /// Number of bistatic pairs.
    #[inline]
    pub fn n_pairs(&self) -> usize {
        self.n_tx * self.n_rx
    }
}

#[inline]
fn sample_uniform(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if n == 1 {
        0.5 * (lo + hi)
    } else {
        lo + (hi - lo) * (i as f64) / ((n - 1) as f64)
    }
}

/// Ellipsoid-centred frame for one `(s, r)` pair: translation to the foci
/// midpoint followed by a rotation through `alpha` about the vertical axis,
/// after which the transmitter sits at `(-D, 0, 0)` and the receiver at
/// `(+D, 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseFrame {
    /// `cot beta` of the generating geometry.
    pub delta: f64,
    /// Rotation angle, radians.
    pub alpha: f64,
    /// Half focal distance, metres.
    pub d: f64,
    /// Foci midpoint `(s·cot β + r, s, z0)` in world coordinates.
    pub center: Vec3,
}

/// Builds the ellipsoid-centred frame for the pair `(s, r)`.
///
/// `delta = cot β`, `alpha = atan2(s, r − s·δ)`, `D = √(s² + (δs − r)²)`.
/// Fails with [`Error::DegenerateGeometry`] when the two antennas coincide
/// (`D` below `eps_d`).
pub fn ellipse_frame_with_tolerance(
    g: &AcquisitionGeometry,
    s: f64,
    r: f64,
    eps_d: f64,
) -> Result<EllipseFrame> {
    let delta = g.delta();
    let d = (s * s + (delta * s - r) * (delta * s - r)).sqrt();
    if d < eps_d {
        return Err(Error::DegenerateGeometry(format!(
            "coincident foci for (s, r) = ({s}, {r}): half focal distance {d:.3e} m"
        )));
    }
    let alpha = s.atan2(r - s * delta);
    let center = [s * delta + r, s, g.z0];
    Ok(EllipseFrame {
        delta,
        alpha,
        d,
        center,
    })
}

/// [`ellipse_frame_with_tolerance`] at the default threshold.
pub fn ellipse_frame(g: &AcquisitionGeometry, s: f64, r: f64) -> Result<EllipseFrame> {
    ellipse_frame_with_tolerance(g, s, r, EPS_HALF_FOCAL)
}

/// World point into the ellipsoid-centred frame.
pub fn to_local(x: Vec3, frame: &EllipseFrame) -> Vec3 {
    let (sin_a, cos_a) = frame.alpha.sin_cos();
    let u = x[0] - frame.center[0];
    let v = x[1] - frame.center[1];
    [
        cos_a * u - sin_a * v,
        sin_a * u + cos_a * v,
        x[2] - frame.center[2],
    ]
}

/// Exact inverse of [`to_local`].
pub fn from_local(xt: Vec3, frame: &EllipseFrame) -> Vec3 {
    let (sin_a, cos_a) = frame.alpha.sin_cos();
    [
        frame.center[0] + cos_a * xt[0] + sin_a * xt[1],
        frame.center[1] - sin_a * xt[0] + cos_a * xt[1],
        frame.center[2] + xt[2],
    ]
}

/// Prolate spheroidal coordinates adapted to foci at `(∓D, 0, 0)`:
///
/// ```text
/// x1 = D cosh rho cos phi
/// x2 = D sinh rho sin phi cos theta
/// x3 = D sinh rho sin phi sin theta
/// ```
///
/// with `rho >= 0`, `phi in [0, pi]`, `theta in [0, 2pi)`. Surfaces of
/// constant `rho` are the confocal iso-delay ellipsoids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProlatePoint {
    pub rho: f64,
    pub phi: f64,
    pub theta: f64,
}

/// Local point to prolate coordinates.
///
/// Uses the focal distances `d∓`: `cosh rho = (d⁻ + d⁺)/(2D)` and
/// `cos phi = (d⁻ − d⁺)/(2D)` (clamped into [-1, 1] to absorb rounding
/// noise near the focal axis). On the axis itself `theta` is pinned to 0.
pub fn to_prolate(xt: Vec3, d: f64) -> Result<ProlatePoint> {
    if !(d > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "half focal distance must be positive, got {d}"
        )));
    }
    let d_minus = vec3::dist(xt, [-d, 0.0, 0.0]);
    let d_plus = vec3::dist(xt, [d, 0.0, 0.0]);
    let cosh_rho = ((d_minus + d_plus) / (2.0 * d)).max(1.0);
    let cos_phi = ((d_minus - d_plus) / (2.0 * d)).clamp(-1.0, 1.0);
    let rho = cosh_rho.acosh();
    let phi = cos_phi.acos();
    let r_cyl = (xt[1] * xt[1] + xt[2] * xt[2]).sqrt();
    let theta = if r_cyl < EPS_AXIS_REL * d {
        0.0
    } else {
        normalize_angle(xt[2].atan2(xt[1]))
    };
    Ok(ProlatePoint { rho, phi, theta })
}

/// Prolate coordinates to a local point; literal evaluation of the
/// parameterisation above.
pub fn from_prolate(p: &ProlatePoint, d: f64) -> Vec3 {
    let (sinh_rho, cosh_rho) = (p.rho.sinh(), p.rho.cosh());
    let (sin_phi, cos_phi) = p.phi.sin_cos();
    let (sin_theta, cos_theta) = p.theta.sin_cos();
    [
        d * cosh_rho * cos_phi,
        d * sinh_rho * sin_phi * cos_theta,
        d * sinh_rho * sin_phi * sin_theta,
    ]
}

#[inline]
fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut a = a % two_pi;
    if a < 0.0 {
        a += two_pi;
    }
    if a >= two_pi {
        a = 0.0;
    }
    a
}

/// Axis-aligned box, used both for gating regions of interest and for
/// oracle search domains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    /// True when the box has no volume on some axis.
    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| !(self.max[i] > self.min[i]))
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vec3 {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    pub fn size(&self) -> Vec3 {
        vec3::sub(self.max, self.min)
    }

    pub fn diagonal(&self) -> f64 {
        vec3::norm(self.size())
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let mut out = [[0.0; 3]; 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = [
                if i & 1 == 0 { self.min[0] } else { self.max[0] },
                if i & 2 == 0 { self.min[1] } else { self.max[1] },
                if i & 4 == 0 { self.min[2] } else { self.max[2] },
            ];
        }
        out
    }

    /// Whether the segment `a`-`b` meets the box (slab clipping).
    pub fn intersects_segment(&self, a: Vec3, b: Vec3) -> bool {
        let dir = vec3::sub(b, a);
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for i in 0..3 {
            if dir[i].abs() < 1e-300 {
                if a[i] < self.min[i] || a[i] > self.max[i] {
                    return false;
                }
            } else {
                let inv = 1.0 / dir[i];
                let mut ta = (self.min[i] - a[i]) * inv;
                let mut tb = (self.max[i] - a[i]) * inv;
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }
}
