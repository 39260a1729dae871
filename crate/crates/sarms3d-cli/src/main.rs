//! Command-line front end: simulation, imaging, gating, oracle and
//! determinant sweeps over the library pipeline.

use clap::{Args, Parser, Subcommand};
use sarms3d::geometry::Aabb;
use sarms3d::imager::{
    backproject, bem_aperture, db_normalize, extract_peaks, fast_backproject, mip, Axis,
    ImageVolume, Window,
};
use sarms3d::microlocal::{
    determinant, rho_min, roi_gating_report_with_density, AngleSampler, GatingReport,
};
use sarms3d::oracle::{find_artifacts, OracleConfig};
use sarms3d::persistence::{self, RunConfig};
use sarms3d::presets;
use sarms3d::simulator::{gate_phase_history, phase_history_with_progress, PhaseHistory, Scene};
use sarms3d::vec3::Vec3;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "sarms3d",
    about = "Multistatic 3D SAR simulation, backprojection imaging and artefact gating",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a phase history from a run configuration.
    Simulate(SimulateArgs),
    /// Backproject a phase-history file onto the configured voxel grid.
    Image(ImageArgs),
    /// Render maximum-intensity projections of a volume as PGM images.
    Mip(MipArgs),
    /// Compute the per-pair gating report for a region of interest.
    Gate(GateArgs),
    /// Search for every point indistinguishable from a planted scatterer.
    Oracle(OracleArgs),
    /// Export the virtual bistatic-equivalent-monostatic aperture.
    Bem(BemArgs),
    /// Sweep the direction-matching determinant for positivity.
    CheckDelta(CheckDeltaArgs),
    /// Simulate, gate, image and render end to end for a preset case.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Run configuration file (flat key = value).
    #[arg(long)]
    config: PathBuf,
    /// Output phase-history file.
    #[arg(long, default_value = "phase_history.bin")]
    out: PathBuf,
    /// Print completion percentage to stderr.
    #[arg(long)]
    progress: bool,
    /// Print the resolved plan without computing.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct ImageArgs {
    /// Input phase-history file.
    #[arg(long)]
    input: PathBuf,
    /// Run configuration file providing the voxel grid.
    #[arg(long)]
    config: PathBuf,
    /// Output volume file.
    #[arg(long, default_value = "volume.bin")]
    out: PathBuf,
    /// Use the range-compressed fast path.
    #[arg(long)]
    fast: bool,
    /// Delay oversampling for the fast path.
    #[arg(long, default_value_t = 8)]
    oversample: usize,
    /// Frequency window: rect or hann.
    #[arg(long, default_value = "rect")]
    window: String,
    /// Apply the gating report at this path before imaging.
    #[arg(long)]
    gated: Option<PathBuf>,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct MipArgs {
    /// Input volume file.
    #[arg(long)]
    input: PathBuf,
    /// Output prefix; writes PREFIX_x.pgm, PREFIX_y.pgm, PREFIX_z.pgm.
    #[arg(long, default_value = "mip")]
    out_prefix: String,
    /// Dynamic range of the logarithmic scaling, dB.
    #[arg(long, default_value_t = 20.0)]
    dynamic_range_db: f64,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct GateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Region of interest as x0,y0,z0,x1,y1,z1.
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
    roi: Aabb,
    #[arg(long, default_value = "gating.csv")]
    out: PathBuf,
    /// Radial bound: `auto` or a number (overrides the config).
    #[arg(long)]
    rho_min: Option<String>,
    /// Boundary sampling density per face.
    #[arg(long, default_value_t = 32)]
    face_samples: usize,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    config: PathBuf,
    /// Planted scatterer position x,y,z.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    point: Vec3,
    /// Slow-time pair s,r.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    slow_time: (f64, f64),
    /// Search box as x0,y0,z0,x1,y1,z1.
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
    search_box: Aabb,
    #[arg(long, default_value = "oracle.csv")]
    out: PathBuf,
    #[arg(long, default_value_t = 48)]
    grid_n: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Cluster radius in metres; defaults to twice the cell diagonal.
    #[arg(long)]
    cluster_radius: Option<f64>,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct BemArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "bem.csv")]
    out: PathBuf,
    /// BEM range as a multiple of the bistatic range (1.0 follows the
    /// bistatic-range convention; 0.5 the monostatic-equivalent one).
    #[arg(long, default_value_t = 1.0)]
    range_factor: f64,
    /// Scene centre x,y,z; defaults to the configured scene's centre.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    scene_center: Option<Vec3>,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct CheckDeltaArgs {
    /// Line-angle parameter cot(beta) directly.
    #[arg(long, conflicts_with = "beta_deg", allow_hyphen_values = true)]
    delta: Option<f64>,
    /// Line angle in degrees (delta = cot beta).
    #[arg(long)]
    beta_deg: Option<f64>,
    /// Radial coordinate: a number, `ln6`, or `auto` (the sufficient bound).
    #[arg(long, default_value = "auto")]
    rho: String,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Optional CSV of every sampled point.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct PipelineArgs {
    /// Line angle in degrees (30, 60, 90 and 120 are the validated cases).
    #[arg(long)]
    beta: f64,
    /// Scale preset: desk or paper.
    #[arg(long, default_value = "desk")]
    scale: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Use the range-compressed fast path for imaging.
    #[arg(long)]
    fast: bool,
    #[arg(long, default_value_t = 8)]
    oversample: usize,
    #[arg(long, default_value = "rect")]
    window: String,
    /// Zero non-compliant pairs and gated fast-time bins before imaging.
    /// Off by default: the default scene sits inside the radial bound at
    /// desk standoff, so a blind gate would zero all data.
    #[arg(long)]
    apply_gate: bool,
    #[arg(long, default_value_t = 20.0)]
    dynamic_range_db: f64,
    #[arg(long)]
    progress: bool,
    #[arg(long)]
    dry_run: bool,
}

fn parse_csv_floats(s: &str, n: usize, what: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != n {
        return Err(format!(
            "{what} needs {n} comma-separated numbers, got {}",
            parts.len()
        ));
    }
    parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number `{p}` in {what}"))
        })
        .collect()
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let v = parse_csv_floats(s, 3, "point")?;
    Ok([v[0], v[1], v[2]])
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v = parse_csv_floats(s, 2, "pair")?;
    Ok((v[0], v[1]))
}

fn parse_box(s: &str) -> Result<Aabb, String> {
    let v = parse_csv_floats(s, 6, "box")?;
    Ok(Aabb::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]))
}

fn parse_window(s: &str) -> Result<Window, sarms3d::Error> {
    Window::from_str(s)
}

fn mib(bytes: usize) -> f64 {
    bytes as f64 / (1024.0 * 1024.0)
}

fn progress_printer(enabled: bool) -> Option<Box<dyn Fn(f64) + Sync>> {
    if !enabled {
        return None;
    }
    let last = std::sync::atomic::AtomicUsize::new(0);
    Some(Box::new(move |frac: f64| {
        let pct = (frac * 10.0) as usize;
        if last.fetch_max(pct, std::sync::atomic::Ordering::Relaxed) < pct {
            eprintln!("progress: {}%", pct * 10);
        }
    }))
}

fn simulate_to_file(
    cfg: &RunConfig,
    scene: &Scene,
    out: &Path,
    progress: bool,
) -> Result<PhaseHistory, sarms3d::Error> {
    let g = cfg.geometry()?;
    let freqs = cfg.frequency_grid()?;
    let cb = progress_printer(progress);
    let ph = phase_history_with_progress(scene, &g, &freqs, cb.as_deref());
    persistence::write_phase_history(out, &ph)?;
    Ok(ph)
}

fn image_volume(
    ph: &PhaseHistory,
    grid: &sarms3d::imager::VoxelGrid,
    window: Window,
    fast: bool,
    oversample: usize,
    report: Option<&GatingReport>,
) -> Result<ImageVolume, sarms3d::Error> {
    let gated;
    let data = match report {
        Some(rep) => {
            gated = gate_phase_history(ph, rep)?;
            &gated
        }
        None => ph,
    };
    if fast {
        fast_backproject(data, grid, window, oversample)
    } else {
        Ok(backproject(data, grid, window))
    }
}

fn write_mips(
    vol: &ImageVolume,
    prefix: &str,
    out_dir: &Path,
    dynamic_range_db: f64,
) -> Result<[PathBuf; 3], sarms3d::Error> {
    let mut paths = [PathBuf::new(), PathBuf::new(), PathBuf::new()];
    for (i, axis) in [Axis::X, Axis::Y, Axis::Z].into_iter().enumerate() {
        let img = mip(vol, axis);
        let norm = db_normalize(&img, dynamic_range_db)?;
        let suffix = match axis {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        };
        let path = out_dir.join(format!("{prefix}_{suffix}.pgm"));
        persistence::write_pgm(&path, &norm)?;
        paths[i] = path;
    }
    Ok(paths)
}

fn resolve_rho_min(cfg: &RunConfig, flag: Option<&str>) -> Result<f64, sarms3d::Error> {
    match flag {
        None => cfg.rho_min_value(),
        Some("auto") => {
            let g = cfg.geometry()?;
            Ok(rho_min(g.delta()))
        }
        Some(v) => v.parse::<f64>().map_err(|_| {
            sarms3d::Error::InvalidParameter(format!(
                "--rho-min must be `auto` or a number, got `{v}`"
            ))
        }),
    }
}

fn run(cli: Cli) -> Result<(), sarms3d::Error> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = persistence::load_run_config(&args.config)?;
            let g = cfg.geometry()?;
            let freqs = cfg.frequency_grid()?;
            let scene = cfg.load_scene()?;
            let n = freqs.n_freq * g.n_tx * g.n_rx;
            if args.dry_run {
                println!("simulate plan:");
                println!(
                    "  dims: {} freqs x {} tx x {} rx = {} samples",
                    freqs.n_freq, g.n_tx, g.n_rx, n
                );
                println!("  scatterers: {}", scene.scatterers.len());
                println!(
                    "  output: {} ({:.1} MiB)",
                    args.out.display(),
                    mib(n * 16 + 256)
                );
                println!(
                    "  op count: {} phase evaluations",
                    n * scene.scatterers.len().max(1)
                );
                return Ok(());
            }
            simulate_to_file(&cfg, &scene, &args.out, args.progress)?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Image(args) => {
            let cfg = persistence::load_run_config(&args.config)?;
            let grid = cfg.voxel_grid()?;
            let window = parse_window(&args.window)?;
            let ph = persistence::read_phase_history(&args.input)?;
            let report = match &args.gated {
                Some(path) => Some(persistence::read_gating_csv(path)?),
                None => None,
            };
            if args.dry_run {
                let pairs = ph.n_tx() * ph.n_rx();
                println!("image plan:");
                println!("  input dims: {} freqs x {} pairs", ph.n_freq(), pairs);
                println!(
                    "  grid: {:?} voxels ({:.1} MiB)",
                    grid.dims,
                    mib(grid.len() * 16 + 256)
                );
                println!(
                    "  path: {}",
                    if args.fast {
                        "fast (range compressed)"
                    } else {
                        "direct"
                    }
                );
                println!("  gated: {}", report.is_some());
                let ops = grid.len() * pairs * if args.fast { 1 } else { ph.n_freq() };
                println!("  op count: ~{ops} accumulations");
                return Ok(());
            }
            let vol = image_volume(
                &ph,
                &grid,
                window,
                args.fast,
                args.oversample,
                report.as_ref(),
            )?;
            persistence::write_volume(&args.out, &vol)?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Mip(args) => {
            let vol = persistence::read_volume(&args.input)?;
            if args.dry_run {
                println!("mip plan:");
                println!("  volume: {:?} voxels", vol.grid.dims);
                println!("  outputs: {0}_x.pgm {0}_y.pgm {0}_z.pgm", args.out_prefix);
                println!("  dynamic range: {} dB", args.dynamic_range_db);
                return Ok(());
            }
            let paths = write_mips(
                &vol,
                &args.out_prefix,
                Path::new("."),
                args.dynamic_range_db,
            )?;
            for p in paths {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Gate(args) => {
            let cfg = persistence::load_run_config(&args.config)?;
            let g = cfg.geometry()?;
            let bound = resolve_rho_min(&cfg, args.rho_min.as_deref())?;
            if args.dry_run {
                println!("gate plan:");
                println!("  pairs: {} x {} = {}", g.n_tx, g.n_rx, g.n_pairs());
                println!("  rho_min: {bound}");
                println!("  roi: {:?} .. {:?}", args.roi.min, args.roi.max);
                println!(
                    "  op count: ~{} radial evaluations",
                    g.n_pairs() * 6 * args.face_samples * args.face_samples
                );
                return Ok(());
            }
            let report = roi_gating_report_with_density(&g, &args.roi, bound, args.face_samples)?;
            persistence::write_gating_csv(&args.out, &report)?;
            let n_ok = report.entries.iter().filter(|e| e.roi_compliant).count();
            println!(
                "wrote {} ({} of {} pairs compliant, min rho over ROI {:.4}{})",
                args.out.display(),
                n_ok,
                report.entries.len(),
                report.global_min_rho_over_roi.unwrap_or(f64::NAN),
                if report.plane_warning {
                    ", WARNING: ROI touches the transceiver plane"
                } else {
                    ""
                }
            );
            Ok(())
        }
        Command::Oracle(args) => {
            let cfg = persistence::load_run_config(&args.config)?;
            let g = cfg.geometry()?;
            let oracle_cfg = OracleConfig {
                grid_n: args.grid_n,
                tol: args.tol,
                cluster_radius: args.cluster_radius,
                ..OracleConfig::default()
            };
            if args.dry_run {
                println!("oracle plan:");
                println!(
                    "  lattice: {}^3 = {} residual evaluations",
                    args.grid_n,
                    args.grid_n.pow(3)
                );
                println!(
                    "  box: {:?} .. {:?}",
                    args.search_box.min, args.search_box.max
                );
                println!("  tol: {}", args.tol);
                return Ok(());
            }
            let (s, r) = args.slow_time;
            let outcome = find_artifacts(args.point, s, r, &g, &args.search_box, &oracle_cfg)?;
            persistence::write_oracle_csv(&args.out, &outcome.solutions)?;
            println!(
                "wrote {} ({} solutions: {} true, {} mirror, {} extra; {} seeds, {} dropped)",
                args.out.display(),
                outcome.solutions.len(),
                outcome.count(sarms3d::oracle::SolutionClass::TruePoint),
                outcome.count(sarms3d::oracle::SolutionClass::Mirror),
                outcome.count(sarms3d::oracle::SolutionClass::Extra),
                outcome.seeds_total,
                outcome.seeds_dropped,
            );
            Ok(())
        }
        Command::Bem(args) => {
            let cfg = persistence::load_run_config(&args.config)?;
            let g = cfg.geometry()?;
            let center = match args.scene_center {
                Some(c) => c,
                None => cfg.load_scene()?.scene_center,
            };
            if args.dry_run {
                println!("bem plan:");
                println!("  pairs: {}", g.n_pairs());
                println!(
                    "  scene centre: {center:?}, range factor {}",
                    args.range_factor
                );
                return Ok(());
            }
            let ap = bem_aperture(&g, center, args.range_factor)?;
            persistence::write_bem_csv(&args.out, &ap)?;
            println!("wrote {} ({} points)", args.out.display(), ap.points.len());
            Ok(())
        }
        Command::CheckDelta(args) => {
            let delta = match (args.delta, args.beta_deg) {
                (Some(d), _) => d,
                (None, Some(b)) => 1.0 / b.to_radians().tan(),
                (None, None) => 0.0,
            };
            let rho = match args.rho.as_str() {
                "auto" => rho_min(delta),
                "ln6" => 6.0f64.ln(),
                v => v.parse::<f64>().map_err(|_| {
                    sarms3d::Error::InvalidParameter(format!(
                        "--rho must be a number, `ln6` or `auto`, got `{v}`"
                    ))
                })?,
            };
            if args.dry_run {
                println!("check-delta plan:");
                println!(
                    "  delta {delta}, rho {rho}, {} samples, seed {}",
                    args.samples, args.seed
                );
                return Ok(());
            }
            let summary =
                sarms3d::microlocal::determinant_sweep(delta, rho, args.samples, args.seed);
            if let Some(path) = &args.out {
                let mut sampler = AngleSampler::new(args.seed);
                let rows: Vec<(f64, f64, f64, f64)> = (0..args.samples)
                    .map(|_| {
                        let (alpha, phi_p, theta_p) = sampler.next_angles();
                        (
                            alpha,
                            phi_p,
                            theta_p,
                            determinant(rho, alpha, phi_p, theta_p, delta),
                        )
                    })
                    .collect();
                persistence::write_delta_sweep_csv(path, &rows)?;
                println!("wrote {}", path.display());
            }
            println!(
                "delta {delta:.6}, rho {rho:.6}: {} samples, {} non-positive, min {:.6e} at (alpha, phi', theta') = {:?}",
                summary.n_samples, summary.n_nonpositive, summary.min_value, summary.argmin
            );
            if summary.n_nonpositive > 0 {
                return Err(sarms3d::Error::InvalidParameter(format!(
                    "determinant not positive at {} of {} samples",
                    summary.n_nonpositive, summary.n_samples
                )));
            }
            Ok(())
        }
        Command::Pipeline(args) => {
            let preset = presets::by_name(&args.scale, args.beta)?;
            let window = parse_window(&args.window)?;
            let scene = sarms3d::simulator::default_scene();
            let g = &preset.geometry;
            let n_samples = preset.freqs.n_freq * g.n_pairs();
            if args.dry_run {
                println!("pipeline plan ({} at beta {}):", preset.name, args.beta);
                println!(
                    "  simulate: {} freqs x {} tx x {} rx ({:.1} MiB), {} scatterers",
                    preset.freqs.n_freq,
                    g.n_tx,
                    g.n_rx,
                    mib(n_samples * 16 + 256),
                    scene.scatterers.len()
                );
                println!(
                    "  radio: centre {:.3} GHz, bandwidth {:.0} MHz",
                    preset.freqs.center_hz / 1e9,
                    preset.freqs.bandwidth_hz / 1e6
                );
                println!(
                    "  gate: {} pairs over ROI {:?} .. {:?}",
                    g.n_pairs(),
                    preset.roi.min,
                    preset.roi.max
                );
                println!(
                    "  image: {:?} voxels ({:.1} MiB), {} path, gate applied: {}",
                    preset.grid.dims,
                    mib(preset.grid.len() * 16 + 256),
                    if args.fast { "fast" } else { "direct" },
                    args.apply_gate
                );
                let ops = preset.grid.len()
                    * g.n_pairs()
                    * if args.fast { 1 } else { preset.freqs.n_freq };
                println!("  op count: ~{ops} accumulations");
                println!("  outputs under {}", args.out_dir.display());
                return Ok(());
            }
            std::fs::create_dir_all(&args.out_dir)?;

            let cb = progress_printer(args.progress);
            let ph = phase_history_with_progress(&scene, g, &preset.freqs, cb.as_deref());
            let ph_path = args.out_dir.join("phase_history.bin");
            persistence::write_phase_history(&ph_path, &ph)?;
            println!("wrote {}", ph_path.display());

            let bound = rho_min(g.delta());
            let report = roi_gating_report_with_density(g, &preset.roi, bound, 32)?;
            let gate_path = args.out_dir.join("gating.csv");
            persistence::write_gating_csv(&gate_path, &report)?;
            let n_ok = report.entries.iter().filter(|e| e.roi_compliant).count();
            println!(
                "wrote {} ({} of {} pairs compliant)",
                gate_path.display(),
                n_ok,
                report.entries.len()
            );

            let report_for_image = if args.apply_gate { Some(&report) } else { None };
            let vol = image_volume(
                &ph,
                &preset.grid,
                window,
                args.fast,
                args.oversample,
                report_for_image,
            )?;
            let vol_path = args.out_dir.join("volume.bin");
            persistence::write_volume(&vol_path, &vol)?;
            println!("wrote {}", vol_path.display());

            let mips = write_mips(&vol, "mip", &args.out_dir, args.dynamic_range_db)?;
            for p in &mips {
                println!("wrote {}", p.display());
            }

            // Peak list plus a quick-look summary of the strongest.
            let peaks = extract_peaks(&vol, 3.0 * preset.grid.spacing, -15.0);
            let peaks_path = args.out_dir.join("peaks.csv");
            persistence::write_peaks_csv(&peaks_path, &peaks)?;
            println!("wrote {}", peaks_path.display());
            println!("{} peaks above -15 dB; strongest:", peaks.len());
            for pk in peaks.iter().take(6) {
                println!(
                    "  {:>7.2} dB at ({:+.2}, {:+.2}, {:+.2})",
                    pk.magnitude_db, pk.position[0], pk.position[1], pk.position[2]
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("SARMS3D_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                eprintln!("error: SARMS3D_THREADS must be a positive integer, got `{threads}`");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
