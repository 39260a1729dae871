//! Backprojection image formation and rendering.
//!
//! The direct path evaluates, for every voxel `v`,
//!
//! ```text
//! I(v) = (1 / (Nf·Ntx·Nrx)) Σ_{j,k} Σ_l w_l P(f_l, s_j, r_k)
//!        · exp(+2πi f_l (|v − γ1(s_j)| + |v − γ2(r_k)|) / c0)
//! ```
//!
//! so a unit scatterer sitting exactly on a voxel centre focuses to
//! magnitude 1 under the rectangular window. The fast path range-compresses
//! each pair onto an oversampled delay axis once and interpolates per voxel.

use crate::error::{Error, Result};
use crate::geometry::AcquisitionGeometry;
use crate::simulator::PhaseHistory;
use crate::vec3::{self, Vec3};
use crate::C0;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// Isotropic voxel lattice; voxel `(i, j, k)` is centred at
/// `origin + spacing · (i, j, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl VoxelGrid {
    pub fn new(origin: Vec3, spacing: f64, dims: [usize; 3]) -> Result<Self> {
        if !(spacing > 0.0) || dims.contains(&0) {
            return Err(Error::InvalidParameter(
                "voxel grid needs positive spacing and nonzero dims".into(),
            ));
        }
        Ok(Self {
            origin,
            spacing,
            dims,
        })
    }

    /// Cube of `n³` voxels whose centre lands on `center`.
    pub fn centered_cube(center: Vec3, spacing: f64, n: usize) -> Result<Self> {
        let half = spacing * (n as f64 - 1.0) / 2.0;
        Self::new(vec3::sub(center, [half, half, half]), spacing, [n, n, n])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn world(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            self.origin[0] + self.spacing * i as f64,
            self.origin[1] + self.spacing * j as f64,
            self.origin[2] + self.spacing * k as f64,
        ]
    }

    /// Flat index, x-major: `(i · ny + j) · nz + k`.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    /// Inverse of [`VoxelGrid::index`].
    #[inline]
    pub fn unravel(&self, flat: usize) -> (usize, usize, usize) {
        let k = flat % self.dims[2];
        let j = (flat / self.dims[2]) % self.dims[1];
        let i = flat / (self.dims[1] * self.dims[2]);
        (i, j, k)
    }

    /// Voxel index nearest to a world point.
    pub fn nearest(&self, p: Vec3) -> (usize, usize, usize) {
        let clamp = |v: f64, n: usize| -> usize { (v.round().max(0.0) as usize).min(n - 1) };
        (
            clamp((p[0] - self.origin[0]) / self.spacing, self.dims[0]),
            clamp((p[1] - self.origin[1]) / self.spacing, self.dims[1]),
            clamp((p[2] - self.origin[2]) / self.spacing, self.dims[2]),
        )
    }
}

/// Complex voxel image with its world mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageVolume {
    pub grid: VoxelGrid,
    pub values: Vec<Complex64>,
}

impl ImageVolume {
    pub fn zeros(grid: VoxelGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![Complex64::ZERO; n],
        }
    }

    pub fn max_magnitude(&self) -> f64 {
        self.values.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Frequency window applied at image formation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rect,
    Hann,
}

impl Window {
    /// Window weights over `n` frequency samples.
    pub fn weights(&self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => {
                if n == 1 {
                    vec![1.0]
                } else {
                    (0..n)
                        .map(|l| 0.5 - 0.5 * (2.0 * PI * l as f64 / (n as f64 - 1.0)).cos())
                        .collect()
                }
            }
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rect" => Ok(Window::Rect),
            "hann" => Ok(Window::Hann),
            other => Err(Error::InvalidParameter(format!("unknown window `{other}`"))),
        }
    }
}

/// Pair-major windowed copy of the data plus the per-pair bistatic geometry.
struct PairData {
    /// `wp[p * n_freq + l] = w_l · P(f_l, pair p)`.
    wp: Vec<Complex64>,
    tx_positions: Vec<Vec3>,
    rx_positions: Vec<Vec3>,
}

fn pair_major(ph: &PhaseHistory, window: Window) -> PairData {
    let (n_freq, n_tx, n_rx) = (ph.n_freq(), ph.n_tx(), ph.n_rx());
    let w = window.weights(n_freq);
    let mut wp = vec![Complex64::ZERO; n_freq * n_tx * n_rx];
    for l in 0..n_freq {
        for p in 0..n_tx * n_rx {
            wp[p * n_freq + l] = ph.data[l * n_tx * n_rx + p] * w[l];
        }
    }
    let g = &ph.geometry;
    PairData {
        wp,
        tx_positions: (0..n_tx)
            .map(|j| g.transmitter_position(g.tx_sample(j)))
            .collect(),
        rx_positions: (0..n_rx)
            .map(|k| g.receiver_position(g.rx_sample(k)))
            .collect(),
    }
}

/// Direct backprojection of the phase history onto the voxel grid.
///
/// Deterministic regardless of thread count: voxels are independent and
/// each accumulates pairs and frequencies in a fixed order.
pub fn backproject(ph: &PhaseHistory, grid: &VoxelGrid, window: Window) -> ImageVolume {
    let (n_freq, n_tx, n_rx) = (ph.n_freq(), ph.n_tx(), ph.n_rx());
    let pd = pair_major(ph, window);
    let f_lo = ph.freqs.f_lo();
    let df = ph.freqs.df();
    let norm = 1.0 / (n_freq * n_tx * n_rx) as f64;

    let mut out = ImageVolume::zeros(*grid);
    out.values
        .par_iter_mut()
        .enumerate()
        .for_each(|(flat, value)| {
            let (i, j, k) = grid.unravel(flat);
            let v = grid.world(i, j, k);
            let d_tx: Vec<f64> = pd.tx_positions.iter().map(|p| vec3::dist(v, *p)).collect();
            let d_rx: Vec<f64> = pd.rx_positions.iter().map(|p| vec3::dist(v, *p)).collect();
            let mut acc = Complex64::ZERO;
            for (j_tx, d1) in d_tx.iter().enumerate() {
                for (k_rx, d2) in d_rx.iter().enumerate() {
                    let tau = (d1 + d2) / C0;
                    // Σ_l c_l z^l via Horner on z = e^{2πi df τ}, then the
                    // carrier at the lowest grid frequency.
                    let z = Complex64::cis(2.0 * PI * df * tau);
                    let col =
                        &pd.wp[(j_tx * n_rx + k_rx) * n_freq..(j_tx * n_rx + k_rx + 1) * n_freq];
                    let mut poly = Complex64::ZERO;
                    for &c in col.iter().rev() {
                        poly = poly * z + c;
                    }
                    acc += poly * Complex64::cis(2.0 * PI * f_lo * tau);
                }
            }
            *value = acc * norm;
        });
    out
}

/// Range-compressed backprojection.
///
/// Each pair's windowed spectrum is zero-padded to `oversample × n_freq`
/// and inverse transformed once; voxels then linearly interpolate the
/// compressed profile at their bistatic delay and restore the carrier.
/// Matches [`backproject`] to better than -40 dB peak-normalised RMS error
/// at `oversample >= 8` on desk-scale scenes.
pub fn fast_backproject(
    ph: &PhaseHistory,
    grid: &VoxelGrid,
    window: Window,
    oversample: usize,
) -> Result<ImageVolume> {
    if oversample < 4 {
        return Err(Error::InvalidParameter(format!(
            "oversample must be at least 4, got {oversample}"
        )));
    }
    let (n_freq, n_tx, n_rx) = (ph.n_freq(), ph.n_tx(), ph.n_rx());
    let n_pairs = n_tx * n_rx;
    let pd = pair_major(ph, window);
    let f_lo = ph.freqs.f_lo();
    let df = ph.freqs.df();
    let m = oversample * n_freq;
    let norm = 1.0 / (n_freq * n_tx * n_rx) as f64;

    // Compressed profiles, batched to bound memory on large apertures.
    let batch_pairs = (256usize << 20) / (m * std::mem::size_of::<Complex64>());
    let batch_pairs = batch_pairs.clamp(1, n_pairs);
    let mut planner = FftPlanner::new();
    let fft_inv = planner.plan_fft_inverse(m);

    let mut out = ImageVolume::zeros(*grid);
    let mut batch_start = 0;
    while batch_start < n_pairs {
        let batch_end = (batch_start + batch_pairs).min(n_pairs);
        let profiles: Vec<Complex64> = (batch_start..batch_end)
            .into_par_iter()
            .flat_map_iter(|p| {
                let mut buf = vec![Complex64::ZERO; m];
                buf[..n_freq].copy_from_slice(&pd.wp[p * n_freq..(p + 1) * n_freq]);
                fft_inv.process(&mut buf);
                buf
            })
            .collect();

        out.values
            .par_iter_mut()
            .enumerate()
            .for_each(|(flat, value)| {
                let (i, j, k) = grid.unravel(flat);
                let v = grid.world(i, j, k);
                let mut acc = Complex64::ZERO;
                for p in batch_start..batch_end {
                    let (j_tx, k_rx) = (p / n_rx, p % n_rx);
                    let tau = (vec3::dist(v, pd.tx_positions[j_tx])
                        + vec3::dist(v, pd.rx_positions[k_rx]))
                        / C0;
                    // Profile bin position: delay modulo the unambiguous window.
                    let u = (tau * df).fract() * m as f64;
                    let i0 = u as usize % m;
                    let i1 = (i0 + 1) % m;
                    let t = u - u.floor();
                    let profile = &profiles[(p - batch_start) * m..(p - batch_start + 1) * m];
                    let interp = profile[i0] * (1.0 - t) + profile[i1] * t;
                    acc += interp * Complex64::cis(2.0 * PI * f_lo * tau);
                }
                *value += acc * norm;
            });
        batch_start = batch_end;
    }
    Ok(out)
}

/// Bistatic-equivalent-monostatic virtual transceiver point for one pair:
/// from the scene centre `c`, walk along the bisector of the unit vectors
/// toward transmitter and receiver for `range_factor · (|tx−c| + |rx−c|)`.
pub fn bem_point(tx: Vec3, rx: Vec3, center: Vec3, range_factor: f64) -> Result<Vec3> {
    let to_tx = vec3::sub(tx, center);
    let to_rx = vec3::sub(rx, center);
    let u = vec3::unit(to_tx, 1e-12).ok_or_else(|| {
        Error::DegenerateGeometry("scene centre coincides with the transmitter".into())
    })?;
    let v = vec3::unit(to_rx, 1e-12).ok_or_else(|| {
        Error::DegenerateGeometry("scene centre coincides with the receiver".into())
    })?;
    let bisector = vec3::unit(vec3::add(u, v), 1e-9).ok_or_else(|| {
        Error::DegenerateGeometry("antipodal antennas: bisector undefined".into())
    })?;
    let range = range_factor * (vec3::norm(to_tx) + vec3::norm(to_rx));
    Ok(vec3::add(center, vec3::scale(bisector, range)))
}

/// Virtual two-dimensional aperture formed by the BEM points of every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BemAperture {
    /// Transmitter-major: point for pair `(j, k)` at `j * n_rx + k`.
    pub points: Vec<Vec3>,
    pub n_tx: usize,
    pub n_rx: usize,
    pub scene_center: Vec3,
}

/// BEM aperture over all sampled pairs. `range_factor = 1.0` sets the BEM
/// range to the full bistatic range; 0.5 gives the monostatic-equivalent
/// convention.
pub fn bem_aperture(
    g: &AcquisitionGeometry,
    scene_center: Vec3,
    range_factor: f64,
) -> Result<BemAperture> {
    let mut points = Vec::with_capacity(g.n_pairs());
    for j in 0..g.n_tx {
        let tx = g.transmitter_position(g.tx_sample(j));
        for k in 0..g.n_rx {
            let rx = g.receiver_position(g.rx_sample(k));
            points.push(bem_point(tx, rx, scene_center, range_factor)?);
        }
    }
    Ok(BemAperture {
        points,
        n_tx: g.n_tx,
        n_rx: g.n_rx,
        scene_center,
    })
}

/// Projection axis for maximum-intensity projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::InvalidParameter(format!("unknown axis `{other}`"))),
        }
    }
}

/// Real-valued 2D image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Image2D {
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// Maximum-intensity projection of voxel magnitudes along one axis.
/// Projecting along z yields an (x, y) image, along y an (x, z) image and
/// along x a (y, z) image; the first index is the row.
pub fn mip(vol: &ImageVolume, axis: Axis) -> Image2D {
    let [nx, ny, nz] = vol.grid.dims;
    let (rows, cols) = match axis {
        Axis::X => (ny, nz),
        Axis::Y => (nx, nz),
        Axis::Z => (nx, ny),
    };
    let mut data = vec![0.0; rows * cols];
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let mag = vol.values[vol.grid.index(i, j, k)].norm();
                let (r, c) = match axis {
                    Axis::X => (j, k),
                    Axis::Y => (i, k),
                    Axis::Z => (i, j),
                };
                let cell = &mut data[r * cols + c];
                if mag > *cell {
                    *cell = mag;
                }
            }
        }
    }
    Image2D { rows, cols, data }
}

/// Logarithmic normalisation into `[0, 1]` over `dynamic_range_db`:
/// `out = clamp(1 + 20·log10(v / max) / range, 0, 1)`, so the maximum maps
/// to 1 and anything `range` dB down (or more) maps to 0.
pub fn db_normalize(img: &Image2D, dynamic_range_db: f64) -> Result<Image2D> {
    let max = img.max();
    if !(max > 0.0) {
        return Err(Error::AllZeroImage);
    }
    let data = img
        .data
        .iter()
        .map(|&v| {
            if v <= 0.0 {
                0.0
            } else {
                (1.0 + 20.0 * (v / max).log10() / dynamic_range_db).clamp(0.0, 1.0)
            }
        })
        .collect();
    Ok(Image2D {
        rows: img.rows,
        cols: img.cols,
        data,
    })
}

/// One detected image peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub position: Vec3,
    /// Linear magnitude.
    pub magnitude: f64,
    /// Magnitude relative to the global maximum, dB (so the strongest peak
    /// sits at 0).
    pub magnitude_db: f64,
}

/// Local maxima of `|values|` above `threshold_db` relative to the global
/// maximum, non-maximum-suppressed so surviving peaks are at least
/// `min_separation` apart (greedy from the strongest; ties broken by voxel
/// index for determinism).
pub fn extract_peaks(vol: &ImageVolume, min_separation: f64, threshold_db: f64) -> Vec<Peak> {
    let [nx, ny, nz] = vol.grid.dims;
    let global_max = vol.max_magnitude();
    if !(global_max > 0.0) {
        return Vec::new();
    }
    let floor = global_max * 10f64.powf(threshold_db / 20.0);

    let mut candidates: Vec<(usize, f64)> = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let mag = vol.values[vol.grid.index(i, j, k)].norm();
                if mag < floor {
                    continue;
                }
                let mut is_max = true;
                'scan: for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        for dk in -1i64..=1 {
                            if (di, dj, dk) == (0, 0, 0) {
                                continue;
                            }
                            let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                            if ni < 0
                                || nj < 0
                                || nk < 0
                                || ni >= nx as i64
                                || nj >= ny as i64
                                || nk >= nz as i64
                            {
                                continue;
                            }
                            let nmag = vol.values
                                [vol.grid.index(ni as usize, nj as usize, nk as usize)]
                            .norm();
                            if nmag > mag {
                                is_max = false;
                                break 'scan;
                            }
                        }
                    }
                }
                if is_max {
                    candidates.push((vol.grid.index(i, j, k), mag));
                }
            }
        }
    }

    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut peaks: Vec<Peak> = Vec::new();
    for (flat, mag) in candidates {
        let (i, j, k) = vol.grid.unravel(flat);
        let pos = vol.grid.world(i, j, k);
        if peaks
            .iter()
            .any(|p| vec3::dist(p.position, pos) < min_separation)
        {
            continue;
        }
        peaks.push(Peak {
            position: pos,
            magnitude: mag,
            magnitude_db: 20.0 * (mag / global_max).log10(),
        });
    }
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{phase_history, FrequencyGrid, Scatterer, Scene};
    use std::f64::consts::FRAC_PI_2;

    fn desk_mini_geometry(n_tx: usize, n_rx: usize) -> AcquisitionGeometry {
        AcquisitionGeometry::new(FRAC_PI_2, 4.0, 6.5, 7.5, 6.5, 7.5, n_tx, n_rx).unwrap()
    }

    fn unit_scene(pos: [f64; 3]) -> Scene {
        Scene::new(
            vec![Scatterer {
                position: pos,
                amplitude: Complex64::new(1.0, 0.0),
            }],
            [0.0; 3],
        )
    }

    #[test]
    fn voxel_grid_mapping() {
        let g = VoxelGrid::new([-1.0, 0.0, 2.0], 0.5, [4, 3, 2]).unwrap();
        assert_eq!(g.len(), 24);
        assert_eq!(g.world(0, 0, 0), [-1.0, 0.0, 2.0]);
        assert_eq!(g.world(2, 1, 1), [0.0, 0.5, 2.5]);
        let flat = g.index(3, 2, 1);
        assert_eq!(g.unravel(flat), (3, 2, 1));
        assert_eq!(g.nearest([0.1, 0.6, 2.4]), (2, 1, 1));
        assert!(VoxelGrid::new([0.0; 3], 0.0, [2, 2, 2]).is_err());
        assert!(VoxelGrid::new([0.0; 3], 0.1, [0, 2, 2]).is_err());

        let c = VoxelGrid::centered_cube([1.0, 2.0, 3.0], 0.5, 5).unwrap();
        assert_eq!(c.world(2, 2, 2), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn matched_filter_peak_is_one() {
        // Scatterer exactly on a voxel centre: phases cancel, magnitude 1.
        let g = desk_mini_geometry(4, 4);
        let freqs = FrequencyGrid::new(10e9, 1e9, 16).unwrap();
        let grid = VoxelGrid::centered_cube([0.5, -0.5, 0.5], 0.25, 9).unwrap();
        let target = grid.world(4, 4, 4);
        let ph = phase_history(&unit_scene(target), &g, &freqs);
        let img = backproject(&ph, &grid, Window::Rect);
        let peak = img.values[grid.index(4, 4, 4)].norm();
        assert!((peak - 1.0).abs() < 1e-6, "peak {peak}");
        let max = img.max_magnitude();
        assert!((max - peak).abs() < 1e-12, "peak is not the global max");
    }

    #[test]
    fn backprojection_is_linear() {
        let g = desk_mini_geometry(3, 3);
        let freqs = FrequencyGrid::new(10e9, 1e9, 8).unwrap();
        let grid = VoxelGrid::centered_cube([0.0, 0.0, 0.0], 0.5, 5).unwrap();
        let pa = phase_history(&unit_scene([0.2, 0.0, -0.4]), &g, &freqs);
        let pb = phase_history(&unit_scene([-0.7, 0.5, 0.3]), &g, &freqs);
        let mut sum = pa.clone();
        for i in 0..sum.data.len() {
            sum.data[i] += pb.data[i];
        }
        let ia = backproject(&pa, &grid, Window::Rect);
        let ib = backproject(&pb, &grid, Window::Rect);
        let isum = backproject(&sum, &grid, Window::Rect);
        for i in 0..isum.values.len() {
            let expect = ia.values[i] + ib.values[i];
            assert!((isum.values[i] - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn mirror_peak_matches_true_peak() {
        // Scatterer below the transceiver plane produces an equal-magnitude
        // focus at its mirror across z = z0; grid symmetric about z0.
        let g = desk_mini_geometry(4, 4);
        let freqs = FrequencyGrid::new(10e9, 1e9, 16).unwrap();
        let grid = VoxelGrid::new([0.0, 0.0, 4.0 - 3.0], 0.5, [3, 3, 13]).unwrap();
        let target = grid.world(1, 1, 2); // z = 2, mirror z = 6 at k = 10
        let ph = phase_history(&unit_scene(target), &g, &freqs);
        let img = backproject(&ph, &grid, Window::Rect);
        let true_mag = img.values[grid.index(1, 1, 2)].norm();
        let mirror_mag = img.values[grid.index(1, 1, 10)].norm();
        assert!((true_mag - mirror_mag).abs() <= 1e-6 * true_mag);
        // Energy sanity: rect-window peak cannot exceed the amplitude sum.
        assert!(img.max_magnitude() <= 1.0 + 1e-9);
    }

    #[test]
    fn hann_window_weights() {
        let w = Window::Hann.weights(5);
        assert!((w[0]).abs() < 1e-15);
        assert!((w[2] - 1.0).abs() < 1e-15);
        assert!((w[4]).abs() < 1e-15);
        assert_eq!(Window::Hann.weights(1), vec![1.0]);
        assert_eq!(Window::Rect.weights(3), vec![1.0; 3]);
    }

    #[test]
    fn fast_path_matches_direct() {
        let g = desk_mini_geometry(8, 8);
        let freqs = FrequencyGrid::new(10e9, 1e9, 32).unwrap();
        let grid = VoxelGrid::centered_cube([0.0, 0.0, 1.0], 0.4, 16).unwrap();
        let scene = Scene::new(
            vec![
                Scatterer {
                    position: [0.4, -0.8, 0.0],
                    amplitude: Complex64::new(1.0, 0.0),
                },
                Scatterer {
                    position: [-1.2, 1.6, 2.0],
                    amplitude: Complex64::new(0.0, 0.8),
                },
            ],
            [0.0; 3],
        );
        let ph = phase_history(&scene, &g, &freqs);
        let direct = backproject(&ph, &grid, Window::Rect);
        let peak = direct.max_magnitude();

        let mut prev_err = f64::INFINITY;
        for os in [4usize, 8, 16] {
            let fast = fast_backproject(&ph, &grid, Window::Rect, os).unwrap();
            let mse: f64 = direct
                .values
                .iter()
                .zip(&fast.values)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                / direct.values.len() as f64;
            let rel_db = 10.0 * (mse / (peak * peak)).log10();
            if os == 8 {
                assert!(rel_db < -40.0, "oversample 8 error {rel_db:.1} dB");
            }
            assert!(
                mse <= prev_err * 1.0001,
                "error not monotone at oversample {os}"
            );
            prev_err = mse;
        }
    }

    #[test]
    fn fast_path_zero_input_and_validation() {
        let g = desk_mini_geometry(2, 2);
        let freqs = FrequencyGrid::new(10e9, 1e9, 8).unwrap();
        let ph = phase_history(&Scene::new(vec![], [0.0; 3]), &g, &freqs);
        let grid = VoxelGrid::centered_cube([0.0; 3], 0.5, 4).unwrap();
        let img = fast_backproject(&ph, &grid, Window::Rect, 4).unwrap();
        assert!(img.values.iter().all(|c| c.norm() == 0.0));
        assert!(fast_backproject(&ph, &grid, Window::Rect, 3).is_err());
    }

    #[test]
    fn bem_point_examples() {
        // Co-located antennas: bisector of identical vectors, and the
        // half-range convention walks exactly back to the antenna.
        let p = [0.0, 10.0, 4.0];
        let c = [0.0, 0.0, 0.0];
        let b = bem_point(p, p, c, 0.5).unwrap();
        assert!(vec3::dist(b, p) < 1e-12);
        // Full bistatic-range factor 1.0 doubles the walk.
        let b = bem_point(p, p, c, 1.0).unwrap();
        assert!(vec3::dist(b, vec3::scale(p, 2.0)) < 1e-12);

        // Swapping transmitter and receiver leaves the point unchanged.
        let tx = [0.0, 14.0, 4.0];
        let rx = [14.0, 0.0, 4.0];
        let b1 = bem_point(tx, rx, c, 1.0).unwrap();
        let b2 = bem_point(rx, tx, c, 1.0).unwrap();
        assert!(vec3::dist(b1, b2) < 1e-12);

        // Antipodal antennas have no bisector.
        assert!(bem_point([1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], c, 1.0).is_err());
    }

    #[test]
    fn bem_aperture_spans_pairs() {
        let g = desk_mini_geometry(3, 5);
        let ap = bem_aperture(&g, [0.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(ap.points.len(), 15);
        assert_eq!((ap.n_tx, ap.n_rx), (3, 5));
        // Every BEM range equals the bistatic range to the scene centre.
        for j in 0..3 {
            for k in 0..5 {
                let tx = g.transmitter_position(g.tx_sample(j));
                let rx = g.receiver_position(g.rx_sample(k));
                let expect = vec3::norm(tx) + vec3::norm(rx);
                let got = vec3::norm(ap.points[j * 5 + k]);
                assert!((got - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mip_examples() {
        let grid = VoxelGrid::new([0.0; 3], 1.0, [2, 3, 4]).unwrap();
        let mut vol = ImageVolume::zeros(grid);
        // Constant magnitude projects to a constant image.
        for v in vol.values.iter_mut() {
            *v = Complex64::new(0.0, 2.0);
        }
        let m = mip(&vol, Axis::Z);
        assert_eq!((m.rows, m.cols), (2, 3));
        assert!(m.data.iter().all(|&v| (v - 2.0).abs() < 1e-15));

        // A single hot voxel lands on a single pixel per projection.
        let mut vol = ImageVolume::zeros(grid);
        vol.values[grid.index(1, 2, 3)] = Complex64::new(5.0, 0.0);
        let mz = mip(&vol, Axis::Z);
        assert_eq!(mz.at(1, 2), 5.0);
        assert_eq!(mz.data.iter().filter(|&&v| v != 0.0).count(), 1);
        let mx = mip(&vol, Axis::X);
        assert_eq!((mx.rows, mx.cols), (3, 4));
        assert_eq!(mx.at(2, 3), 5.0);
        let my = mip(&vol, Axis::Y);
        assert_eq!((my.rows, my.cols), (2, 4));
        assert_eq!(my.at(1, 3), 5.0);
    }

    #[test]
    fn db_normalize_mapping() {
        let img = Image2D {
            rows: 1,
            cols: 4,
            data: vec![1.0, 0.1, 10f64.sqrt().recip(), 0.01],
        };
        let out = db_normalize(&img, 20.0).unwrap();
        assert!((out.data[0] - 1.0).abs() < 1e-12); // max -> 1
        assert!(out.data[1].abs() < 1e-12); // -20 dB -> 0
        assert!((out.data[2] - 0.5).abs() < 1e-12); // -10 dB -> 0.5
        assert_eq!(out.data[3], 0.0); // below the range clamps
        let zero = Image2D {
            rows: 1,
            cols: 2,
            data: vec![0.0, 0.0],
        };
        assert!(matches!(
            db_normalize(&zero, 20.0),
            Err(Error::AllZeroImage)
        ));
    }

    #[test]
    fn extract_peaks_from_backprojection() {
        let g = desk_mini_geometry(6, 6);
        let freqs = FrequencyGrid::new(10e9, 1e9, 24).unwrap();
        // Grid symmetric about z0 = 4 so the mirror is in view.
        let grid = VoxelGrid::new([-1.0, -1.0, -1.0], 0.5, [5, 5, 21]).unwrap();
        let target = grid.world(2, 2, 2); // (0, 0, 0), mirror at (0, 0, 8)
        let ph = phase_history(&unit_scene(target), &g, &freqs);
        let img = backproject(&ph, &grid, Window::Rect);
        let peaks = extract_peaks(&img, 1.0, -3.0);
        assert!(
            peaks.len() >= 2,
            "expected true and mirror peak, got {peaks:?}"
        );
        let near_true = peaks
            .iter()
            .any(|p| vec3::dist(p.position, [0.0, 0.0, 0.0]) < 0.51);
        let near_mirror = peaks
            .iter()
            .any(|p| vec3::dist(p.position, [0.0, 0.0, 8.0]) < 0.51);
        assert!(near_true && near_mirror);

        // A threshold above 0 dB excludes even the global maximum.
        assert!(extract_peaks(&img, 1.0, 0.5).is_empty());
    }

    #[test]
    fn extract_peaks_separation() {
        let grid = VoxelGrid::new([0.0; 3], 1.0, [8, 1, 1]).unwrap();
        let mut vol = ImageVolume::zeros(grid);
        vol.values[grid.index(1, 0, 0)] = Complex64::new(1.0, 0.0);
        vol.values[grid.index(3, 0, 0)] = Complex64::new(0.9, 0.0);
        vol.values[grid.index(6, 0, 0)] = Complex64::new(0.8, 0.0);
        // Wide suppression radius keeps only the two outer peaks.
        let peaks = extract_peaks(&vol, 2.5, -6.0);
        assert_eq!(peaks.len(), 2);
        assert_eq!(peaks[0].position, [1.0, 0.0, 0.0]);
        assert_eq!(peaks[1].position, [6.0, 0.0, 0.0]);
        assert!((peaks[0].magnitude_db - 0.0).abs() < 1e-12);
    }
}
