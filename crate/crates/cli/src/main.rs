//! `dplane`: command-line driver for the d-plane transform library.

mod input;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dplane::constants::{dimension_report, gamma_ratio_constant, grassmannian_volume, grassmannian_volume_so};
use dplane::geometry::sample_subspace;
use dplane::grid::relative_l2_error_mean_subtracted;
use dplane::mc::chunked_draws;
use dplane::spectral::{fbp_reconstruct, sample_phantom, symbol_estimate_grid, FbpConfig, SymbolConfig};
use dplane::transform::{backproject_mc, forward_analytic, ConstantSinogram, GridSinogram, PoolMode, SinogramFunction};
use dplane::{ConstantMode, GaussianMixture, GridField, GridSpec, Substreams};

use input::{angular_lines, csv_row, fmt_f64, parse_planes, parse_points, read_text, IntRange};

const MAX_DIM: usize = 16;
const MAX_TABLE_DIM: usize = 64;

#[derive(Parser, Debug)]
#[command(name = "dplane", version, about = "The d-plane transform on R^n: constants, forward and adjoint transforms, symbol measurement, inversion")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "DPLANE_THREADS")]
    threads: Option<usize>,
    /// Log one line per stage to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Grassmannian volumes, excess and operator orders for ranges of (d, n).
    Constants(ConstantsArgs),
    /// Haar-random d-dimensional subspaces of R^n, one orthonormal frame per row.
    Sample(SampleArgs),
    /// Evaluate the d-plane transform of a phantom or sampled field on planes.
    Forward(ForwardArgs),
    /// Monte Carlo backprojection R*φ at a list of points.
    Backproject(BackprojectArgs),
    /// Measure the symbol of R*R on a grid and compare candidate constants.
    SymbolEstimate(SymbolArgs),
    /// Filtered-backprojection reconstruction of a phantom.
    Reconstruct(ReconstructArgs),
}

#[derive(Args, Debug)]
struct ConstantsArgs {
    /// Plane dimensions, inclusive: `a..b` or a single value.
    #[arg(long, default_value = "1..3")]
    d: IntRange,
    /// Ambient dimensions, inclusive: `a..b` or a single value.
    #[arg(long, default_value = "2..4")]
    n: IntRange,
    /// Output CSV (default: stdout).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Source {
    /// Gaussian-mixture phantom file; its exact transform is used.
    #[arg(long, group = "source")]
    phantom: Option<PathBuf>,
    /// Sampled field (DPLF); integrated by quadrature along planes.
    #[arg(long, group = "source")]
    field: Option<PathBuf>,
    /// Quadrature spacing along planes, for --field.
    #[arg(long, default_value_t = 0.02)]
    step: f64,
    /// Quadrature patch half-width along planes, for --field.
    #[arg(long, default_value_t = 8.0)]
    radius: f64,
}

#[derive(Args, Debug)]
struct ForwardArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    d: usize,
    /// Plane list: per line the n·d frame entries column by column, then n offset coordinates.
    #[arg(long, conflicts_with = "angles")]
    planes: Option<PathBuf>,
    /// Parallel-beam line grid (d=1, n=2): number of directions in [0, π).
    #[arg(long)]
    angles: Option<usize>,
    /// Offsets per direction for --angles.
    #[arg(long, default_value_t = 65)]
    offsets: usize,
    /// Largest |offset| for --angles.
    #[arg(long, default_value_t = 4.0)]
    max_offset: f64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BackprojectArgs {
    #[command(flatten)]
    source: Source,
    /// Constant sinogram value instead of a phantom or field.
    #[arg(long, group = "source")]
    constant: Option<f64>,
    #[arg(long)]
    d: usize,
    /// Ambient dimension; needed only with --constant.
    #[arg(long)]
    n: Option<usize>,
    /// Points file: one point per line.
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SymbolArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    /// Points per axis (default 128 for n=2, 48 otherwise).
    #[arg(long)]
    size: Option<usize>,
    /// Grid spacing (default 1/8 for n=2, 1/4 otherwise).
    #[arg(long)]
    h: Option<f64>,
    /// Probe Gaussian width (default 1.5 h).
    #[arg(long)]
    width: Option<f64>,
    /// Haar samples per grid point.
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    /// Relative tolerance (default 0.02 for n=2, 0.05 otherwise).
    #[arg(long)]
    tolerance: Option<f64>,
    /// Fresh samples at every grid point instead of one shared pool.
    #[arg(long)]
    independent: bool,
    /// Per-shell CSV (default: stdout, after the summary).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Summary text (default: stdout).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Paper,
    Calibrated,
    Explicit,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[arg(long)]
    phantom: PathBuf,
    #[arg(long)]
    d: usize,
    /// Points per axis (default 128 for n=2, 64 otherwise).
    #[arg(long)]
    size: Option<usize>,
    /// Grid spacing (default 16/size).
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, value_enum, default_value_t = Mode::Calibrated)]
    mode: Mode,
    /// Constant for --mode explicit.
    #[arg(long)]
    kappa: Option<f64>,
    /// Haar samples (one pool shared by all grid points).
    #[arg(long, default_value_t = 40_000)]
    samples: usize,
    /// Padding in grid points (default size/8).
    #[arg(long)]
    margin: Option<usize>,
    /// Fresh samples at every grid point instead of one shared pool.
    #[arg(long)]
    independent: bool,
    /// Reconstruction (DPLF).
    #[arg(long, short)]
    output: PathBuf,
    /// 8-bit PGM of the (central) slice.
    #[arg(long)]
    pgm: Option<PathBuf>,
    /// Error summary (default: stdout).
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(threads) = cli.threads {
        ensure!(threads >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    let streams = Substreams::new(cli.seed);
    match cli.command {
        Command::Constants(a) => constants(a),
        Command::Sample(a) => sample(a, &streams),
        Command::Forward(a) => forward(a),
        Command::Backproject(a) => backproject(a, &streams),
        Command::SymbolEstimate(a) => symbol(a, &streams),
        Command::Reconstruct(a) => reconstruct(a, &streams),
    }
}

fn check_dims(d: usize, n: usize) -> Result<()> {
    ensure!(d >= 1 && d < n && n <= MAX_DIM, "need 1 <= d < n <= {MAX_DIM}, got d={d}, n={n}");
    Ok(())
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_phantom(path: &Path) -> Result<GaussianMixture> {
    GaussianMixture::parse(&read_text(path)?).with_context(|| format!("in phantom file {}", path.display()))
}

fn load_field(path: &Path) -> Result<GridField> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    GridField::read_from(std::io::BufReader::new(file)).with_context(|| format!("in field file {}", path.display()))
}

fn constants(a: ConstantsArgs) -> Result<ExitCode> {
    for r in [a.d, a.n] {
        ensure!(r.start >= 1 || r.start > r.end, "dimensions start at 1");
        ensure!(r.end <= MAX_TABLE_DIM || r.start > r.end, "dimensions above {MAX_TABLE_DIM} are not tabulated");
    }
    let mut out = String::new();
    csv_row(
        &mut out,
        [
            "d", "n", "vol_sphere_product", "vol_so_quotient", "excess", "fio_order", "psdo_order",
            "dim_grassmannian", "dim_affine_grassmannian", "dim_lambda", "dim_e", "gamma_ratio_constant",
        ]
        .map(String::from),
    );
    for n in a.n.iter() {
        for d in a.d.iter().filter(|&d| d >= 1 && d < n) {
            let r = dimension_report(d, n)?;
            csv_row(
                &mut out,
                [
                    d.to_string(),
                    n.to_string(),
                    fmt_f64(grassmannian_volume(d, n)?),
                    fmt_f64(grassmannian_volume_so(d, n)?),
                    r.excess.to_string(),
                    r.fio_order.to_string(),
                    r.psdo_order.to_string(),
                    r.dim_grassmannian.to_string(),
                    r.dim_affine_grassmannian.to_string(),
                    r.dim_lambda.to_string(),
                    r.dim_e.to_string(),
                    fmt_f64(gamma_ratio_constant(d, n)?),
                ],
            );
        }
    }
    emit(a.output.as_deref(), &out)?;
    Ok(ExitCode::SUCCESS)
}

fn sample(a: SampleArgs, streams: &Substreams) -> Result<ExitCode> {
    check_dims(a.d, a.n)?;
    let (d, n) = (a.d, a.n);
    let frames = chunked_draws(a.count, &streams.derive("sample"), |rng| {
        sample_subspace(d, n, rng).expect("dimensions checked")
    });
    let mut out = String::new();
    let mut header = vec!["index".to_string()];
    for j in 1..=d {
        header.extend((1..=n).map(|i| format!("w{j}_{i}")));
    }
    csv_row(&mut out, header);
    for (k, f) in frames.iter().enumerate() {
        csv_row(&mut out, std::iter::once(k.to_string()).chain(f.basis().iter().map(|&v| fmt_f64(v))));
    }
    emit(a.output.as_deref(), &out)?;
    Ok(ExitCode::SUCCESS)
}

fn sinogram_source(source: &Source, d: usize) -> Result<Option<Box<dyn SinogramFunction>>> {
    if let Some(p) = &source.phantom {
        let f = load_phantom(p)?;
        check_dims(d, f.ambient_dim())?;
        return Ok(Some(Box::new(forward_analytic(&f, d)?)));
    }
    if let Some(p) = &source.field {
        let field = load_field(p)?;
        check_dims(d, field.ambient_dim())?;
        return Ok(Some(Box::new(GridSinogram::new(field, d, source.step, source.radius)?)));
    }
    Ok(None)
}

fn forward(a: ForwardArgs) -> Result<ExitCode> {
    let phi = sinogram_source(&a.source, a.d)?.context("one of --phantom or --field is required")?;
    let (d, n) = (phi.sub_dim(), phi.ambient_dim());
    let planes = match (&a.planes, a.angles) {
        (Some(p), _) => parse_planes(&read_text(p)?, d, n).with_context(|| format!("in plane file {}", p.display()))?,
        (None, Some(k)) => {
            ensure!((d, n) == (1, 2), "--angles needs d=1 and a planar source");
            angular_lines(k, a.offsets, a.max_offset)?
        }
        (None, None) => bail!("one of --planes or --angles is required"),
    };
    log::info!("forward: {} planes, d={d}, n={n}", planes.len());
    let mut out = String::new();
    let mut header = Vec::new();
    for j in 1..=d {
        header.extend((1..=n).map(|i| format!("w{j}_{i}")));
    }
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.push("value".into());
    csv_row(&mut out, header);
    for plane in &planes {
        let value = phi.eval(plane)?;
        let fields = plane
            .frame()
            .basis()
            .iter()
            .chain(plane.offset().iter())
            .map(|&v| fmt_f64(v))
            .chain(std::iter::once(fmt_f64(value)));
        csv_row(&mut out, fields);
    }
    emit(a.output.as_deref(), &out)?;
    Ok(ExitCode::SUCCESS)
}

fn backproject(a: BackprojectArgs, streams: &Substreams) -> Result<ExitCode> {
    let phi: Box<dyn SinogramFunction> = match (sinogram_source(&a.source, a.d)?, a.constant) {
        (Some(phi), _) => phi,
        (None, Some(c)) => {
            let n = a.n.context("--constant needs --n")?;
            check_dims(a.d, n)?;
            Box::new(ConstantSinogram::new(a.d, n, c)?)
        }
        (None, None) => bail!("one of --phantom, --field or --constant is required"),
    };
    let n = phi.ambient_dim();
    ensure!(a.samples >= 2, "--samples must be at least 2");
    let points = parse_points(&read_text(&a.points)?, n).with_context(|| format!("in points file {}", a.points.display()))?;
    log::info!("backproject: {} points, {} samples each", points.len(), a.samples);
    let mut out = String::new();
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend(["value", "std_error", "samples"].map(String::from));
    csv_row(&mut out, header);
    let base = streams.derive("backproject");
    for (i, x) in points.iter().enumerate() {
        let est = backproject_mc(phi.as_ref(), x, a.samples, &base.derive_index(i as u64))?;
        let fields = x
            .iter()
            .map(|&v| fmt_f64(v))
            .chain([fmt_f64(est.value), fmt_f64(est.std_error), est.samples.to_string()]);
        csv_row(&mut out, fields);
    }
    emit(a.output.as_deref(), &out)?;
    Ok(ExitCode::SUCCESS)
}

fn symbol(a: SymbolArgs, streams: &Substreams) -> Result<ExitCode> {
    check_dims(a.d, a.n)?;
    let mut config = SymbolConfig::standard(a.d, a.n)?;
    if let Some(size) = a.size {
        config.size = size;
    }
    if let Some(h) = a.h {
        config.h = h;
        config.width = 1.5 * h;
    }
    if let Some(w) = a.width {
        config.width = w;
    }
    if let Some(t) = a.tolerance {
        ensure!(t > 0.0, "--tolerance must be positive");
        config.tolerance = t;
    }
    ensure!(a.samples >= 2, "--samples must be at least 2");
    config.samples = a.samples;
    config.pool = if a.independent { PoolMode::Independent } else { PoolMode::Shared };
    log::info!("symbol-estimate: d={} n={} grid {}^{} h={} samples={}", a.d, a.n, config.size, a.n, config.h, config.samples);
    let report = symbol_estimate_grid(&config, &streams.derive("symbol"))?;
    let summary = report.summary();
    match (&a.csv, &a.summary) {
        (None, None) => emit(None, &format!("{summary}\n{}", report.to_csv()))?,
        (csv, sum) => {
            emit(sum.as_deref(), &summary)?;
            emit(csv.as_deref(), &report.to_csv())?;
        }
    }
    if report.passes() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("tolerance not met: {}", summary.lines().filter(|l| l.contains("FAILED") || l.contains("insufficient")).collect::<Vec<_>>().join("; "));
        Ok(ExitCode::from(2))
    }
}

fn reconstruct(a: ReconstructArgs, streams: &Substreams) -> Result<ExitCode> {
    let f = load_phantom(&a.phantom)?;
    let n = f.ambient_dim();
    check_dims(a.d, n)?;
    let size = a.size.unwrap_or(if n == 2 { 128 } else { 64 });
    let h = a.h.unwrap_or(16.0 / size as f64);
    let spec = GridSpec::centered(n, size, h)?;
    let mode = match a.mode {
        Mode::Paper => ConstantMode::Paper,
        Mode::Calibrated => ConstantMode::Calibrated,
        Mode::Explicit => ConstantMode::Explicit(a.kappa.context("--mode explicit needs --kappa")?),
    };
    let kappa = mode.kappa(a.d, n)?;
    let config = FbpConfig {
        samples: a.samples,
        margin: a.margin,
        pool: if a.independent { PoolMode::Independent } else { PoolMode::Shared },
    };
    let phi = forward_analytic(&f, a.d)?;
    log::info!("reconstruct: d={} n={n} grid {size}^{n} h={h} samples={}", a.d, a.samples);
    let recon = fbp_reconstruct(&phi, &spec, mode, &config, &streams.derive("reconstruct"))?;
    let truth = sample_phantom(&f, &spec)?;
    let error = relative_l2_error_mean_subtracted(&recon, &truth)?;

    let file = File::create(&a.output).with_context(|| format!("cannot write {}", a.output.display()))?;
    let mut w = BufWriter::new(file);
    recon.write_to(&mut w)?;
    w.flush()?;
    if let Some(p) = &a.pgm {
        let mut w = BufWriter::new(File::create(p).with_context(|| format!("cannot write {}", p.display()))?);
        recon.write_pgm(&mut w)?;
        w.flush()?;
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "d={} n={n} grid={size} h={} samples={} seed={}", a.d, fmt_f64(h), a.samples, streams.seed());
    let _ = writeln!(summary, "mode={:?} kappa={}", a.mode, fmt_f64(kappa));
    let _ = writeln!(summary, "relative_l2_error={}", fmt_f64(error));
    emit(a.summary.as_deref(), &summary)?;
    Ok(ExitCode::SUCCESS)
}
