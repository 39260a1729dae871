//! File formats and run configuration.
//!
//! Binary layout (all little-endian, independent of host):
//!
//! ```text
//! offset  size  field
//!      0     8  magic "SARMS3D\0"
//!      8     4  version (u32, currently 1)
//!     12     4  payload kind (u32: 0 phase history, 1 volume)
//!     16    24  dims (3 × u64)
//!     40    48  geometry block: beta, z0, s_min, s_max, r_min, r_max (f64)
//!     88    16  geometry counts: n_tx, n_rx (u64)
//!    104    24  frequency block: center_hz, bandwidth_hz (f64), n_freq (u64)
//!    128    32  grid block: origin x/y/z, spacing (f64; zero for phase histories)
//!    160    96  zero padding
//!    256     —  payload: interleaved (re, im) f64 pairs
//! ```
//!
//! Phase-history payloads are frequency-major then transmitter then
//! receiver; volume payloads follow the voxel grid's x-major flat index.
//! `read ∘ write` is bit-exact for both.

use crate::error::{Error, Result};
use crate::geometry::AcquisitionGeometry;
use crate::imager::{BemAperture, Image2D, ImageVolume, VoxelGrid};
use crate::microlocal::{GateEntry, GatingReport};
use crate::oracle::{ArtefactSolution, SolutionClass};
use crate::simulator::{FrequencyGrid, PhaseHistory, Scatterer, Scene};
use crate::vec3::Vec3;
use crate::C0;
use num_complex::Complex64;
use std::io::{BufRead, BufReader, BufWriter, Read as _, Write as _};
use std::path::{Path, PathBuf};

pub const MAGIC: [u8; 8] = *b"SARMS3D\0";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 256;

/// Payload discriminant stored in the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    PhaseHistory,
    Volume,
}

impl PayloadKind {
    fn code(self) -> u32 {
        match self {
            PayloadKind::PhaseHistory => 0,
            PayloadKind::Volume => 1,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(PayloadKind::PhaseHistory),
            1 => Ok(PayloadKind::Volume),
            _ => Err(Error::BadMagic),
        }
    }
}

/// Decoded fixed-size header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FileHeader {
    pub kind: PayloadKind,
    pub dims: [u64; 3],
    pub beta: f64,
    pub z0: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub n_tx: u64,
    pub n_rx: u64,
    pub fc_hz: f64,
    pub bw_hz: f64,
    pub n_freq: u64,
    pub grid_origin: Vec3,
    pub grid_spacing: f64,
}

pub fn encode_header(h: &FileHeader) -> [u8; HEADER_LEN] {
    let mut buf = [0u8; HEADER_LEN];
    buf[0..8].copy_from_slice(&MAGIC);
    buf[8..12].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf[12..16].copy_from_slice(&h.kind.code().to_le_bytes());
    let mut off = 16;
    for d in h.dims {
        buf[off..off + 8].copy_from_slice(&d.to_le_bytes());
        off += 8;
    }
    for v in [h.beta, h.z0, h.s_min, h.s_max, h.r_min, h.r_max] {
        buf[off..off + 8].copy_from_slice(&v.to_le_bytes());
        off += 8;
    }
    for c in [h.n_tx, h.n_rx] {
        buf[off..off + 8].copy_from_slice(&c.to_le_bytes());
        off += 8;
    }
    for v in [h.fc_hz, h.bw_hz] {
        buf[off..off + 8].copy_from_slice(&v.to_le_bytes());
        off += 8;
    }
    buf[off..off + 8].copy_from_slice(&h.n_freq.to_le_bytes());
    off += 8;
    for v in [
        h.grid_origin[0],
        h.grid_origin[1],
        h.grid_origin[2],
        h.grid_spacing,
    ] {
        buf[off..off + 8].copy_from_slice(&v.to_le_bytes());
        off += 8;
    }
    debug_assert_eq!(off, 160);
    buf
}

pub fn decode_header(buf: &[u8; HEADER_LEN]) -> Result<FileHeader> {
    if buf[0..8] != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let kind = PayloadKind::from_code(u32::from_le_bytes(buf[12..16].try_into().unwrap()))?;
    let u64_at = |off: usize| u64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
    let f64_at = |off: usize| f64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
    Ok(FileHeader {
        kind,
        dims: [u64_at(16), u64_at(24), u64_at(32)],
        beta: f64_at(40),
        z0: f64_at(48),
        s_min: f64_at(56),
        s_max: f64_at(64),
        r_min: f64_at(72),
        r_max: f64_at(80),
        n_tx: u64_at(88),
        n_rx: u64_at(96),
        fc_hz: f64_at(104),
        bw_hz: f64_at(112),
        n_freq: u64_at(120),
        grid_origin: [f64_at(128), f64_at(136), f64_at(144)],
        grid_spacing: f64_at(152),
    })
}

fn payload_len(dims: [u64; 3]) -> Result<usize> {
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or(Error::DimsOverflow)?;
    let bytes = n.checked_mul(16).ok_or(Error::DimsOverflow)?;
    usize::try_from(bytes).map_err(|_| Error::DimsOverflow)?;
    usize::try_from(n).map_err(|_| Error::DimsOverflow)
}

fn write_payload(w: &mut impl std::io::Write, data: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len().min(1 << 16) * 16);
    for chunk in data.chunks(1 << 12) {
        buf.clear();
        for c in chunk {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_payload(r: &mut impl std::io::Read, n: usize) -> Result<Vec<Complex64>> {
    let mut data = Vec::with_capacity(n);
    let mut buf = vec![0u8; 16 << 12];
    let mut remaining = n;
    while remaining > 0 {
        let take = remaining.min(1 << 12);
        let bytes = &mut buf[..take * 16];
        r.read_exact(bytes).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::DimsOverflow
            } else {
                Error::Io(e)
            }
        })?;
        for pair in bytes.chunks_exact(16) {
            data.push(Complex64::new(
                f64::from_le_bytes(pair[0..8].try_into().unwrap()),
                f64::from_le_bytes(pair[8..16].try_into().unwrap()),
            ));
        }
        remaining -= take;
    }
    // Trailing garbage counts as a malformed file.
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(data),
        _ => Err(Error::DimsOverflow),
    }
}

pub fn write_phase_history(path: impl AsRef<Path>, ph: &PhaseHistory) -> Result<()> {
    let g = &ph.geometry;
    let header = FileHeader {
        kind: PayloadKind::PhaseHistory,
        dims: [ph.n_freq() as u64, g.n_tx as u64, g.n_rx as u64],
        beta: g.beta,
        z0: g.z0,
        s_min: g.s_min,
        s_max: g.s_max,
        r_min: g.r_min,
        r_max: g.r_max,
        n_tx: g.n_tx as u64,
        n_rx: g.n_rx as u64,
        fc_hz: ph.freqs.center_hz,
        bw_hz: ph.freqs.bandwidth_hz,
        n_freq: ph.freqs.n_freq as u64,
        grid_origin: [0.0; 3],
        grid_spacing: 0.0,
    };
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&encode_header(&header))?;
    write_payload(&mut w, &ph.data)?;
    w.flush()?;
    Ok(())
}

pub fn read_phase_history(path: impl AsRef<Path>) -> Result<PhaseHistory> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut hbuf = [0u8; HEADER_LEN];
    r.read_exact(&mut hbuf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::DimsOverflow
        } else {
            Error::Io(e)
        }
    })?;
    let h = decode_header(&hbuf)?;
    if h.kind != PayloadKind::PhaseHistory {
        return Err(Error::ShapeMismatch(
            "file holds a volume, not a phase history".into(),
        ));
    }
    if h.dims[0] != h.n_freq || h.dims[1] != h.n_tx || h.dims[2] != h.n_rx {
        return Err(Error::DimsOverflow);
    }
    let n = payload_len(h.dims)?;
    let geometry = AcquisitionGeometry::new(
        h.beta,
        h.z0,
        h.s_min,
        h.s_max,
        h.r_min,
        h.r_max,
        usize::try_from(h.n_tx).map_err(|_| Error::DimsOverflow)?,
        usize::try_from(h.n_rx).map_err(|_| Error::DimsOverflow)?,
    )?;
    let freqs = FrequencyGrid::new(
        h.fc_hz,
        h.bw_hz,
        usize::try_from(h.n_freq).map_err(|_| Error::DimsOverflow)?,
    )?;
    let data = read_payload(&mut r, n)?;
    Ok(PhaseHistory {
        data,
        geometry,
        freqs,
    })
}

pub fn write_volume(path: impl AsRef<Path>, vol: &ImageVolume) -> Result<()> {
    let header = FileHeader {
        kind: PayloadKind::Volume,
        dims: [
            vol.grid.dims[0] as u64,
            vol.grid.dims[1] as u64,
            vol.grid.dims[2] as u64,
        ],
        beta: 0.0,
        z0: 0.0,
        s_min: 0.0,
        s_max: 0.0,
        r_min: 0.0,
        r_max: 0.0,
        n_tx: 0,
        n_rx: 0,
        fc_hz: 0.0,
        bw_hz: 0.0,
        n_freq: 0,
        grid_origin: vol.grid.origin,
        grid_spacing: vol.grid.spacing,
    };
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&encode_header(&header))?;
    write_payload(&mut w, &vol.values)?;
    w.flush()?;
    Ok(())
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<ImageVolume> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut hbuf = [0u8; HEADER_LEN];
    r.read_exact(&mut hbuf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::DimsOverflow
        } else {
            Error::Io(e)
        }
    })?;
    let h = decode_header(&hbuf)?;
    if h.kind != PayloadKind::Volume {
        return Err(Error::ShapeMismatch(
            "file holds a phase history, not a volume".into(),
        ));
    }
    let n = payload_len(h.dims)?;
    let grid = VoxelGrid::new(
        h.grid_origin,
        h.grid_spacing,
        [
            usize::try_from(h.dims[0]).map_err(|_| Error::DimsOverflow)?,
            usize::try_from(h.dims[1]).map_err(|_| Error::DimsOverflow)?,
            usize::try_from(h.dims[2]).map_err(|_| Error::DimsOverflow)?,
        ],
    )?;
    let values = read_payload(&mut r, n)?;
    Ok(ImageVolume { grid, values })
}

/// 8-bit binary PGM ("P5", maxval 255). Input values are clamped into
/// `[0, 1]` and quantised with round-half-to-even, so `{0, 1/3, 2/3, 1}`
/// maps to `{0, 85, 170, 255}`.
pub fn write_pgm(path: impl AsRef<Path>, img: &Image2D) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", img.cols, img.rows)?;
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8)
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Gating report to CSV: `s,r,D,t_min_seconds,roi_compliant`.
pub fn write_gating_csv(path: impl AsRef<Path>, report: &GatingReport) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "s,r,D,t_min_seconds,roi_compliant")?;
    for e in &report.entries {
        writeln!(w, "{},{},{},{},{}", e.s, e.r, e.d, e.t_min, e.roi_compliant)?;
    }
    w.flush()?;
    Ok(())
}

/// Reloads a gating report from its CSV form. The radial bound is
/// reconstructed from the first row (`t_min = (2D/c0)·cosh(rho_min)`);
/// the global minimum over the ROI is not stored in the CSV and comes
/// back as `None`.
pub fn read_gating_csv(path: impl AsRef<Path>) -> Result<GatingReport> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut lines = r.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => {
            return Err(Error::Config {
                line: 1,
                msg: "empty gating CSV".into(),
            });
        }
    };
    if header.trim() != "s,r,D,t_min_seconds,roi_compliant" {
        return Err(Error::Config {
            line: 1,
            msg: format!("unexpected CSV header `{header}`"),
        });
    }
    let mut entries = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Config {
                line: i + 1,
                msg: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let parse = |f: &str, what: &str| -> Result<f64> {
            f.trim().parse::<f64>().map_err(|_| Error::Config {
                line: i + 1,
                msg: format!("bad {what} value `{f}`"),
            })
        };
        let compliant = match fields[4].trim() {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Config {
                    line: i + 1,
                    msg: format!("bad roi_compliant value `{other}`"),
                })
            }
        };
        entries.push(GateEntry {
            s: parse(fields[0], "s")?,
            r: parse(fields[1], "r")?,
            d: parse(fields[2], "D")?,
            t_min: parse(fields[3], "t_min")?,
            roi_compliant: compliant,
        });
    }
    let rho_min = entries
        .first()
        .map(|e| (e.t_min * C0 / (2.0 * e.d)).max(1.0).acosh())
        .unwrap_or(0.0);
    Ok(GatingReport {
        rho_min,
        entries,
        global_min_rho_over_roi: None,
        plane_warning: false,
    })
}

/// Oracle solutions to CSV:
/// `y1,y2,y3,residual_norm,classification,degenerate_band`.
pub fn write_oracle_csv(path: impl AsRef<Path>, solutions: &[ArtefactSolution]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "y1,y2,y3,residual_norm,classification,degenerate_band")?;
    for sol in solutions {
        let class = match sol.classification {
            SolutionClass::TruePoint => "true_point",
            SolutionClass::Mirror => "mirror",
            SolutionClass::Extra => "extra",
        };
        writeln!(
            w,
            "{},{},{},{},{},{}",
            sol.y[0], sol.y[1], sol.y[2], sol.residual_norm, class, sol.degenerate_band
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Image peaks to CSV: `x,y,z,magnitude,magnitude_db`.
pub fn write_peaks_csv(path: impl AsRef<Path>, peaks: &[crate::imager::Peak]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x,y,z,magnitude,magnitude_db")?;
    for pk in peaks {
        writeln!(
            w,
            "{},{},{},{},{}",
            pk.position[0], pk.position[1], pk.position[2], pk.magnitude, pk.magnitude_db
        )?;
    }
    w.flush()?;
    Ok(())
}

/// BEM point cloud to CSV: `tx_index,rx_index,x,y,z`.
pub fn write_bem_csv(path: impl AsRef<Path>, ap: &BemAperture) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "tx_index,rx_index,x,y,z")?;
    for j in 0..ap.n_tx {
        for k in 0..ap.n_rx {
            let p = ap.points[j * ap.n_rx + k];
            writeln!(w, "{},{},{},{},{}", j, k, p[0], p[1], p[2])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Determinant sweep rows to CSV:
/// `sample,alpha,phi_prime,theta_prime,determinant`.
pub fn write_delta_sweep_csv(path: impl AsRef<Path>, rows: &[(f64, f64, f64, f64)]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "sample,alpha,phi_prime,theta_prime,determinant")?;
    for (i, (alpha, phi_p, theta_p, det)) in rows.iter().enumerate() {
        writeln!(w, "{},{},{},{},{}", i, alpha, phi_p, theta_p, det)?;
    }
    w.flush()?;
    Ok(())
}

/// Scene selection in a run configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneSource {
    Default,
    Path(PathBuf),
}

/// Radial-bound selection in a run configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoMinMode {
    /// `ln(5 + 8|cot beta|)` plus the safety margin.
    Auto,
    Value(f64),
}

/// Parsed flat `key = value` run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub beta_deg: f64,
    pub z0_m: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub fc_hz: f64,
    pub bw_hz: f64,
    pub n_freq: usize,
    pub origin_m: Vec3,
    pub spacing_m: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub scene: SceneSource,
    pub rho_min: RhoMinMode,
}

const CONFIG_KEYS: &[&str] = &[
    "beta_deg",
    "z0_m",
    "s_min",
    "s_max",
    "r_min",
    "r_max",
    "n_tx",
    "n_rx",
    "fc_hz",
    "bw_hz",
    "n_freq",
    "origin_x_m",
    "origin_y_m",
    "origin_z_m",
    "spacing_m",
    "nx",
    "ny",
    "nz",
    "scene",
    "rho_min_mode",
    "rho_min_value",
];

/// Parses a run configuration; every diagnostic carries its 1-based line.
/// Unknown and duplicate keys are rejected, as are missing required keys.
pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let mut seen: std::collections::HashMap<&str, (usize, String)> =
        std::collections::HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            line: line_no,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let canon = CONFIG_KEYS
            .iter()
            .find(|&&k| k == key)
            .ok_or_else(|| Error::Config {
                line: line_no,
                msg: format!("unknown key `{key}`"),
            })?;
        if value.is_empty() {
            return Err(Error::Config {
                line: line_no,
                msg: format!("empty value for `{key}`"),
            });
        }
        if seen.insert(canon, (line_no, value.to_string())).is_some() {
            return Err(Error::Config {
                line: line_no,
                msg: format!("duplicate key `{key}`"),
            });
        }
    }

    let get = |key: &str| -> Result<(usize, String)> {
        seen.get(key).cloned().ok_or_else(|| Error::Config {
            line: 0,
            msg: format!("missing required key `{key}`"),
        })
    };
    let get_f64 = |key: &str| -> Result<f64> {
        let (line, v) = get(key)?;
        v.parse::<f64>().map_err(|_| Error::Config {
            line,
            msg: format!("bad number for `{key}`: `{v}`"),
        })
    };
    let get_usize = |key: &str| -> Result<usize> {
        let (line, v) = get(key)?;
        v.parse::<usize>().map_err(|_| Error::Config {
            line,
            msg: format!("bad integer for `{key}`: `{v}`"),
        })
    };

    let scene = match seen.get("scene") {
        None => SceneSource::Default,
        Some((_, v)) if v == "default" => SceneSource::Default,
        Some((_, v)) => SceneSource::Path(PathBuf::from(v)),
    };
    let rho_min = match seen.get("rho_min_mode").map(|(l, v)| (*l, v.as_str())) {
        None | Some((_, "auto")) => RhoMinMode::Auto,
        Some((line, "value")) => {
            let (vline, v) = seen.get("rho_min_value").cloned().ok_or(Error::Config {
                line,
                msg: "rho_min_mode = value requires rho_min_value".into(),
            })?;
            RhoMinMode::Value(v.parse::<f64>().map_err(|_| Error::Config {
                line: vline,
                msg: format!("bad number for `rho_min_value`: `{v}`"),
            })?)
        }
        Some((line, other)) => {
            return Err(Error::Config {
                line,
                msg: format!("rho_min_mode must be `auto` or `value`, got `{other}`"),
            })
        }
    };

    Ok(RunConfig {
        beta_deg: get_f64("beta_deg")?,
        z0_m: get_f64("z0_m")?,
        s_min: get_f64("s_min")?,
        s_max: get_f64("s_max")?,
        r_min: get_f64("r_min")?,
        r_max: get_f64("r_max")?,
        n_tx: get_usize("n_tx")?,
        n_rx: get_usize("n_rx")?,
        fc_hz: get_f64("fc_hz")?,
        bw_hz: get_f64("bw_hz")?,
        n_freq: get_usize("n_freq")?,
        origin_m: [
            get_f64("origin_x_m")?,
            get_f64("origin_y_m")?,
            get_f64("origin_z_m")?,
        ],
        spacing_m: get_f64("spacing_m")?,
        nx: get_usize("nx")?,
        ny: get_usize("ny")?,
        nz: get_usize("nz")?,
        scene,
        rho_min,
    })
}

pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    parse_run_config(&std::fs::read_to_string(path)?)
}

impl RunConfig {
    pub fn geometry(&self) -> Result<AcquisitionGeometry> {
        AcquisitionGeometry::new(
            self.beta_deg.to_radians(),
            self.z0_m,
            self.s_min,
            self.s_max,
            self.r_min,
            self.r_max,
            self.n_tx,
            self.n_rx,
        )
    }

    pub fn frequency_grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.fc_hz, self.bw_hz, self.n_freq)
    }

    pub fn voxel_grid(&self) -> Result<VoxelGrid> {
        VoxelGrid::new(self.origin_m, self.spacing_m, [self.nx, self.ny, self.nz])
    }

    pub fn load_scene(&self) -> Result<Scene> {
        match &self.scene {
            SceneSource::Default => Ok(crate::simulator::default_scene()),
            SceneSource::Path(p) => read_scene(p),
        }
    }

    /// Resolved radial bound for this configuration's line angle.
    pub fn rho_min_value(&self) -> Result<f64> {
        match self.rho_min {
            RhoMinMode::Value(v) => Ok(v),
            RhoMinMode::Auto => {
                let g = self.geometry()?;
                Ok(crate::microlocal::rho_min(g.delta()))
            }
        }
    }
}

/// Scene file: one scatterer per line as whitespace-separated
/// `x y z [amp_re [amp_im]]`; `#` starts a comment. The first
/// non-comment line may name the scene centre as `center x y z`.
pub fn read_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut scatterers = Vec::new();
    let mut center = [0.0; 3];
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim().to_string();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        let parse = |f: &str| -> Result<f64> {
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Config {
                    line: line_no,
                    msg: format!("bad number `{f}`"),
                }),
            }
        };
        if fields[0] == "center" {
            if fields.len() != 4 {
                return Err(Error::Config {
                    line: line_no,
                    msg: "center needs exactly 3 coordinates".into(),
                });
            }
            center = [parse(fields[1])?, parse(fields[2])?, parse(fields[3])?];
            continue;
        }
        let (re, im) = match fields.len() {
            3 => (1.0, 0.0),
            4 => (parse(fields[3])?, 0.0),
            5 => (parse(fields[3])?, parse(fields[4])?),
            n => {
                return Err(Error::Config {
                    line: line_no,
                    msg: format!("expected 3-5 fields, got {n}"),
                })
            }
        };
        scatterers.push(Scatterer {
            position: [parse(fields[0])?, parse(fields[1])?, parse(fields[2])?],
            amplitude: Complex64::new(re, im),
        });
    }
    Ok(Scene::new(scatterers, center))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{default_scene, phase_history};
    use std::f64::consts::FRAC_PI_2;

    fn tiny_phase_history() -> PhaseHistory {
        let g = AcquisitionGeometry::new(FRAC_PI_2, 4.0, 6.5, 7.5, 6.5, 7.5, 2, 2).unwrap();
        let freqs = FrequencyGrid::new(10e9, 1e9, 2).unwrap();
        phase_history(&default_scene(), &g, &freqs)
    }

    #[test]
    fn phase_history_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ph.bin");
        let ph = tiny_phase_history();
        write_phase_history(&path, &ph).unwrap();
        let back = read_phase_history(&path).unwrap();
        assert_eq!(back.geometry, ph.geometry);
        assert_eq!(back.freqs, ph.freqs);
        assert_eq!(back.data.len(), ph.data.len());
        for (a, b) in ph.data.iter().zip(&back.data) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ph.bin");
        let ph = tiny_phase_history();
        write_phase_history(&path, &ph).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 7]).unwrap();
        assert!(matches!(
            read_phase_history(&path),
            Err(Error::DimsOverflow)
        ));
        // Header-only truncation too.
        std::fs::write(&path, &full[..100]).unwrap();
        assert!(matches!(
            read_phase_history(&path),
            Err(Error::DimsOverflow)
        ));
    }

    #[test]
    fn bad_magic_and_version_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ph.bin");
        let ph = tiny_phase_history();
        write_phase_history(&path, &ph).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mut evil = bytes.clone();
        evil[0] = b'X';
        std::fs::write(&path, &evil).unwrap();
        assert!(matches!(read_phase_history(&path), Err(Error::BadMagic)));
        bytes[8] = 99;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_phase_history(&path),
            Err(Error::VersionMismatch(99))
        ));
    }

    #[test]
    fn full_scale_header_fields() {
        // Header for a full-scale acquisition records the documented counts.
        let h = FileHeader {
            kind: PayloadKind::PhaseHistory,
            dims: [512, 128, 128],
            beta: FRAC_PI_2,
            z0: 4.0,
            s_min: 6.5,
            s_max: 7.5,
            r_min: 6.5,
            r_max: 7.5,
            n_tx: 128,
            n_rx: 128,
            fc_hz: 10e9,
            bw_hz: 1e9,
            n_freq: 512,
            grid_origin: [0.0; 3],
            grid_spacing: 0.0,
        };
        let back = decode_header(&encode_header(&h)).unwrap();
        assert_eq!(back, h);
        assert_eq!(back.n_freq, 512);
        assert_eq!(back.n_tx, 128);
        assert_eq!(back.n_rx, 128);
    }

    #[test]
    fn volume_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.bin");
        let grid = VoxelGrid::new([-1.0, 0.5, 2.0], 0.25, [3, 2, 4]).unwrap();
        let mut vol = ImageVolume::zeros(grid);
        for (i, v) in vol.values.iter_mut().enumerate() {
            *v = Complex64::new(i as f64 * 0.1, -(i as f64) * 0.2);
        }
        write_volume(&path, &vol).unwrap();
        let back = read_volume(&path).unwrap();
        assert_eq!(back.grid, vol.grid);
        for (a, b) in vol.values.iter().zip(&back.values) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn pgm_quantisation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = Image2D {
            rows: 2,
            cols: 2,
            data: vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0],
        };
        write_pgm(&path, &img).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0u8, 85, 170, 255]);
    }

    #[test]
    fn gating_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gate.csv");
        let rho_min = 1.75;
        let report = GatingReport {
            rho_min,
            entries: vec![
                GateEntry {
                    s: 6.5,
                    r: 7.5,
                    d: 9.899,
                    t_min: 2.0 * 9.899 / C0 * rho_min.cosh(),
                    roi_compliant: false,
                },
                GateEntry {
                    s: 7.5,
                    r: 6.5,
                    d: 9.899,
                    t_min: 2.0 * 9.899 / C0 * rho_min.cosh(),
                    roi_compliant: true,
                },
            ],
            global_min_rho_over_roi: Some(0.9),
            plane_warning: false,
        };
        write_gating_csv(&path, &report).unwrap();
        let back = read_gating_csv(&path).unwrap();
        assert_eq!(back.entries, report.entries);
        assert!((back.rho_min - rho_min).abs() < 1e-9);
        assert_eq!(back.global_min_rho_over_roi, None);

        // Empty report: header row only.
        let empty = GatingReport {
            rho_min: 0.0,
            entries: vec![],
            global_min_rho_over_roi: None,
            plane_warning: false,
        };
        write_gating_csv(&path, &empty).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "s,r,D,t_min_seconds,roi_compliant\n");
        assert!(read_gating_csv(&path).unwrap().entries.is_empty());
    }

    fn sample_config() -> String {
        "\
# desk-ish run
beta_deg = 90
z0_m = 4
s_min = 6.5
s_max = 7.5
r_min = 6.5
r_max = 7.5
n_tx = 4
n_rx = 4
fc_hz = 10e9
bw_hz = 1e9
n_freq = 8
origin_x_m = -2
origin_y_m = -2
origin_z_m = -1
spacing_m = 0.5
nx = 9
ny = 9
nz = 9
scene = default
rho_min_mode = auto
"
        .to_string()
    }

    #[test]
    fn config_parses_and_builds_objects() {
        let cfg = parse_run_config(&sample_config()).unwrap();
        assert_eq!(cfg.n_tx, 4);
        assert_eq!(cfg.scene, SceneSource::Default);
        assert_eq!(cfg.rho_min, RhoMinMode::Auto);
        let g = cfg.geometry().unwrap();
        assert!((g.beta - FRAC_PI_2).abs() < 1e-12);
        assert_eq!(cfg.frequency_grid().unwrap().n_freq, 8);
        assert_eq!(cfg.voxel_grid().unwrap().dims, [9, 9, 9]);
        assert_eq!(cfg.load_scene().unwrap().scatterers.len(), 7);
        // Auto bound at beta = 90 deg is ln 5 plus margin.
        assert!((cfg.rho_min_value().unwrap() - 5.0_f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn config_diagnostics_carry_line_numbers() {
        let bad = sample_config() + "mystery_key = 3\n";
        match parse_run_config(&bad) {
            Err(Error::Config { line, msg }) => {
                assert_eq!(line, 22);
                assert!(msg.contains("mystery_key"));
            }
            other => panic!("expected config error, got {other:?}"),
        }

        let missing = sample_config().replace("n_freq = 8\n", "");
        match parse_run_config(&missing) {
            Err(Error::Config { msg, .. }) => assert!(msg.contains("n_freq")),
            other => panic!("expected config error, got {other:?}"),
        }

        let dup = sample_config() + "nx = 10\n";
        assert!(matches!(
            parse_run_config(&dup),
            Err(Error::Config { line: 22, .. })
        ));

        let bad_value = sample_config().replace("n_tx = 4", "n_tx = four");
        match parse_run_config(&bad_value) {
            Err(Error::Config { line, msg }) => {
                assert_eq!(line, 8);
                assert!(msg.contains("n_tx"));
            }
            other => panic!("expected config error, got {other:?}"),
        }

        let bad_mode = sample_config().replace("rho_min_mode = auto", "rho_min_mode = value");
        match parse_run_config(&bad_mode) {
            Err(Error::Config { msg, .. }) => assert!(msg.contains("rho_min_value")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn scene_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.txt");
        std::fs::write(
            &path,
            "# two scatterers\ncenter 0 0 1\n-2 0 0.5 2.0 -0.5\n1 1 0 # unit amplitude\n",
        )
        .unwrap();
        let scene = read_scene(&path).unwrap();
        assert_eq!(scene.scene_center, [0.0, 0.0, 1.0]);
        assert_eq!(scene.scatterers.len(), 2);
        assert_eq!(scene.scatterers[0].amplitude, Complex64::new(2.0, -0.5));
        assert_eq!(scene.scatterers[1].amplitude, Complex64::new(1.0, 0.0));

        std::fs::write(&path, "1 2 NaN\n").unwrap();
        assert!(matches!(
            read_scene(&path),
            Err(Error::Config { line: 1, .. })
        ));

        std::fs::write(&path, "1 2\n").unwrap();
        assert!(matches!(
            read_scene(&path),
            Err(Error::Config { line: 1, .. })
        ));
    }
}
