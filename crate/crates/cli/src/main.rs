use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use cdlfuse::decomposition::DecompositionResult;
use cdlfuse::fusion::{fuse_color_detailed, fuse_images_detailed, FusionOutput};
use cdlfuse::image_io::{load_image, save_gray, save_image};
use cdlfuse::metrics::build_report;
use cdlfuse::patches::{assemble_image, assemble_unclipped, PatchMatrix};
use cdlfuse::validation::{run_validation, ValidationOptions};
use cdlfuse::{decompose, Dictionary, FusionConfig, FusionError, GrayImage, LoadedImage};
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "cdlfuse", version, about = "Multimodal image fusion by coupled dictionary learning")]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse two co-registered images into DIR/fused.png and DIR/report.json.
    Fuse(PairArgs),
    /// Write the correlated, independent and residual components of both images.
    Decompose(PairArgs),
    /// Run the synthetic self-checks and print a pass/fail table.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Smaller instances.
        #[arg(long)]
        quick: bool,
    },
    /// Print the version.
    Version,
}

#[derive(Args)]
struct PairArgs {
    /// First input (PNG). For a gray/color pair, the gray image is the anatomical one.
    first: PathBuf,
    /// Second input (PNG).
    second: PathBuf,
    #[arg(short, long, value_name = "DIR")]
    out: PathBuf,
    #[arg(short, long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Also write D1.png and D2.png atom mosaics.
    #[arg(long)]
    dump_dicts: bool,
    /// Also write the component images (implied by `decompose`).
    #[arg(long)]
    dump_components: bool,
}

enum CliError {
    Usage(String),
    Processing(String),
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        CliError::Processing(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Processing(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Fuse(args) => cmd_fuse(&args),
        Command::Decompose(args) => cmd_decompose(&args),
        Command::Validate { seed, quick } => cmd_validate(seed, quick),
        Command::Version => {
            println!("cdlfuse {}", env!("CARGO_PKG_VERSION"));
            Ok(ExitCode::SUCCESS)
        }
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Processing(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// The two inputs after argument checks. `color` is set when the second
/// image of the fused pair is an RGB functional image.
enum Inputs {
    Gray(GrayImage, GrayImage),
    Color(GrayImage, cdlfuse::ColorImage),
}

fn load_config(args: &PairArgs) -> Result<FusionConfig, CliError> {
    match &args.config {
        None => Ok(FusionConfig::default()),
        Some(path) => FusionConfig::load(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display()))),
    }
}

fn load_input(path: &Path) -> Result<LoadedImage, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("{}: no such file", path.display())));
    }
    Ok(load_image(path)?)
}

fn load_inputs(args: &PairArgs) -> Result<Inputs, CliError> {
    let a = load_input(&args.first)?;
    let b = load_input(&args.second)?;
    if a.dims() != b.dims() {
        let (ah, aw) = a.dims();
        let (bh, bw) = b.dims();
        return Err(CliError::Usage(format!(
            "input sizes differ: {} is {ah}x{aw}, {} is {bh}x{bw}",
            args.first.display(),
            args.second.display()
        )));
    }
    match (a, b) {
        (LoadedImage::Gray(a), LoadedImage::Gray(b)) => Ok(Inputs::Gray(a, b)),
        (LoadedImage::Gray(g), LoadedImage::Color(c)) | (LoadedImage::Color(c), LoadedImage::Gray(g)) => {
            Ok(Inputs::Color(g, c))
        }
        (LoadedImage::Color(_), LoadedImage::Color(_)) => {
            Err(CliError::Usage("at most one color input is supported".into()))
        }
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Processing(format!("cannot create {}: {e}", dir.display())))
}

fn write_report(dir: &Path, report: Map<String, Value>) -> Result<(), CliError> {
    let path = dir.join("report.json");
    let text = serde_json::to_string_pretty(&Value::Object(report)).map_err(FusionError::from)?;
    fs::write(&path, text + "\n")?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn save(img: &GrayImage, path: PathBuf) -> Result<(), CliError> {
    save_gray(img, &path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// Maps `[min, max]` to `[0, 1]`. A flat field maps to 0 with scale 0.
fn affine_image(values: Array2<f64>) -> (GrayImage, f64, f64) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mapped = if span > 0.0 {
        values.mapv(|v| (v - min) / span)
    } else {
        Array2::zeros(values.dim())
    };
    (GrayImage::from_array(mapped), min, max)
}

fn dump_components(
    dir: &Path,
    decomp: &DecompositionResult,
    report: &mut Map<String, Value>,
) -> Result<(), CliError> {
    save(&assemble_image(&decomp.z1)?, dir.join("Z1.png"))?;
    save(&assemble_image(&decomp.z2)?, dir.join("Z2.png"))?;
    let signed: [(&str, &PatchMatrix); 4] = [
        ("E1", &decomp.e1),
        ("E2", &decomp.e2),
        ("res1", &decomp.residual1),
        ("res2", &decomp.residual2),
    ];
    for (name, patches) in signed {
        let (img, min, max) = affine_image(assemble_unclipped(patches)?);
        save(&img, dir.join(format!("{name}.png")))?;
        report.insert(format!("{name}_min"), json!(min));
        report.insert(format!("{name}_max"), json!(max));
        report.insert(format!("{name}_norm"), json!(patches.frobenius_norm()));
    }
    Ok(())
}

/// Tiles the atoms into a near-square grid, each min-max normalized, with
/// one-pixel white separators.
fn atom_mosaic(dict: &Dictionary, side: usize) -> GrayImage {
    let n = dict.atoms();
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let cell = side + 1;
    let mut out = Array2::from_elem((rows * cell + 1, cols * cell + 1), 1.0);
    for t in 0..n {
        let atom = dict.atom(t);
        let lo = atom.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = atom.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let (r0, c0) = (1 + (t / cols) * cell, 1 + (t % cols) * cell);
        for c in 0..side {
            for r in 0..side {
                out[[r0 + r, c0 + c]] = (atom[c * side + r] - lo) / span;
            }
        }
    }
    GrayImage::from_array(out)
}

fn dump_dicts(dir: &Path, decomp: &DecompositionResult, cfg: &FusionConfig) -> Result<(), CliError> {
    let side = cfg.patch_side();
    save(&atom_mosaic(&decomp.dictionaries.first, side), dir.join("D1.png"))?;
    save(&atom_mosaic(&decomp.dictionaries.second, side), dir.join("D2.png"))
}

fn report_base(fused: &GrayImage, decomp: &DecompositionResult, seconds: f64) -> Result<Map<String, Value>, CliError> {
    match serde_json::to_value(build_report(fused, decomp, seconds)).map_err(FusionError::from)? {
        Value::Object(map) => Ok(map),
        _ => unreachable!("report serializes to an object"),
    }
}

fn cmd_fuse(args: &PairArgs) -> Result<ExitCode, CliError> {
    let cfg = load_config(args)?;
    let inputs = load_inputs(args)?;
    prepare_out(&args.out)?;
    let start = Instant::now();
    let (fused, detail): (LoadedImage, FusionOutput) = match inputs {
        Inputs::Gray(a, b) => {
            let out = fuse_images_detailed(&a, &b, &cfg)?;
            (out.image.clone().into(), out)
        }
        Inputs::Color(gray, color) => {
            let out = fuse_color_detailed(&gray, &color, &cfg)?;
            (out.rgb.into(), out.luminance)
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let path = args.out.join("fused.png");
    save_image(&fused, &path)?;
    eprintln!("wrote {}", path.display());
    let mut report = report_base(&detail.image, &detail.decomposition, seconds)?;
    if args.dump_components {
        dump_components(&args.out, &detail.decomposition, &mut report)?;
    }
    if args.dump_dicts {
        dump_dicts(&args.out, &detail.decomposition, &cfg)?;
    }
    write_report(&args.out, report)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_decompose(args: &PairArgs) -> Result<ExitCode, CliError> {
    let cfg = load_config(args)?;
    let (a, b) = match load_inputs(args)? {
        Inputs::Gray(a, b) => (a, b),
        // Same pairing as color fusion: functional luminance first.
        Inputs::Color(gray, color) => (cdlfuse::image_io::rgb_to_ycbcr(&color)?.luminance(), gray),
    };
    prepare_out(&args.out)?;
    let start = Instant::now();
    let decomp = decompose(&a, &b, &cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    let mut report = Map::new();
    report.insert("Z1_norm".into(), json!(decomp.z1.frobenius_norm()));
    report.insert("Z2_norm".into(), json!(decomp.z2.frobenius_norm()));
    dump_components(&args.out, &decomp, &mut report)?;
    report.insert("pearson_cost".into(), json!(decomp.pearson_cost()));
    report.insert("objective_trace".into(), json!(decomp.objective_trace));
    report.insert("runtime_seconds".into(), json!(seconds));
    if args.dump_dicts {
        dump_dicts(&args.out, &decomp, &cfg)?;
    }
    write_report(&args.out, report)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(seed: u64, quick: bool) -> Result<ExitCode, CliError> {
    let results = run_validation(ValidationOptions { seed, quick });
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        println!("{:<width$}  {verdict}  {:>7.2}s  {}", r.name, r.seconds, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        eprintln!("{failed} of {} checks failed", results.len());
        Ok(ExitCode::from(1))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}
