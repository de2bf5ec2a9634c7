//! `fsmmr`: color upsampling, evaluation sweeps and inspection tools for
//! colored point clouds.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 on data
//! errors (unreadable files, malformed PLY, clouds a method cannot handle).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fsmmr_core::evaluation::{random_downsample, run_experiment, ExperimentSpec};
use fsmmr_core::parallel::with_threads;
use fsmmr_core::synthetic::{self, ColorField, Shape, SyntheticConfig};
use fsmmr_core::{
    flatten_block, partition_into_blocks, read_ply, reconstruct, write_ply, ColorPointCloud, Error,
    FsmmrConfig, InterpolatorKind, MethodParams, PlyFormat, Rgb, RootPolicy, Window,
};

#[derive(Parser)]
#[command(name = "fsmmr", version, about = "Color upsampling for 3D point clouds")]
struct Cli {
    /// Worker threads for blocks and experiment records (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct the colors of uncolored points in a PLY file.
    Upsample {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value = "fsmmr", value_parser = parse_method)]
        method: InterpolatorKind,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = FormatArg::Binary)]
        format: FormatArg,
    },
    /// Run a downsample-and-reconstruct sweep on a fully colored PLY file.
    Evaluate {
        input: PathBuf,
        /// CSV report destination.
        output: PathBuf,
        /// Comma-separated methods to compare.
        #[arg(long = "method", value_delimiter = ',', value_parser = parse_method,
              default_value = "fsmmr,nn3,idw3,idw2,lin2")]
        methods: Vec<InterpolatorKind>,
        /// Comma-separated densities: integers are percents, decimals are fractions.
        #[arg(long, value_delimiter = ',', value_parser = parse_density,
              default_value = "10,20,30,40,50,60,70,80")]
        densities: Vec<f64>,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
        runs: u64,
        /// Write measured wall time instead of 0 (makes the CSV non-reproducible).
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Dump the flattened 2D layout of one block as CSV.
    Flatten {
        input: PathBuf,
        output: PathBuf,
        /// Position of the block in cell-index order.
        #[arg(long, default_value_t = 0)]
        block: usize,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Write a synthetic colored cloud.
    Synth {
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = ShapeArg::Sphere)]
        shape: ShapeArg,
        #[arg(long, default_value_t = 20_000)]
        points: usize,
        /// Sphere radius, or side length of the plane and dihedral patches.
        #[arg(long, default_value_t = 10.0)]
        size: f64,
        /// Color frequency in cycles per unit length.
        #[arg(long, default_value_t = ColorField::default().frequency)]
        frequency: f64,
        /// Height of a sharp color step across x = 0.
        #[arg(long)]
        edge: Option<f64>,
        /// Keep only this fraction (or integer percent) of the colors.
        #[arg(long, value_parser = parse_density)]
        density: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FormatArg::Binary)]
        format: FormatArg,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Edge length of the cubic blocks.
    #[arg(long, default_value_t = MethodParams::default().block_size)]
    block_size: f64,
    /// Model window size M = N.
    #[arg(long, default_value_t = FsmmrConfig::default().window.m)]
    model_size: usize,
    /// Frequency weight decay, in (0, 1).
    #[arg(long, default_value_t = FsmmrConfig::default().sigma)]
    sigma: f64,
    /// Spatial weight decay, in (0, 1).
    #[arg(long, default_value_t = FsmmrConfig::default().rho)]
    rho: f64,
    /// Coefficient damping, in (0, 1].
    #[arg(long, default_value_t = FsmmrConfig::default().gamma)]
    gamma: f64,
    #[arg(long, default_value_t = FsmmrConfig::default().max_iterations)]
    max_iters: usize,
    #[arg(long, default_value_t = FsmmrConfig::default().energy_threshold)]
    energy_threshold: f64,
    /// Flattening root inside each block.
    #[arg(long, value_enum, default_value_t = RootArg::Deterministic)]
    root: RootArg,
    /// Seed for random roots and downsampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn params(&self) -> MethodParams {
        MethodParams {
            block_size: self.block_size,
            fsmmr: FsmmrConfig {
                window: Window::new(self.model_size, self.model_size),
                sigma: self.sigma,
                rho: self.rho,
                gamma: self.gamma,
                max_iterations: self.max_iters,
                energy_threshold: self.energy_threshold,
                ..FsmmrConfig::default()
            },
            root_policy: match self.root {
                RootArg::Deterministic => RootPolicy::Deterministic,
                RootArg::Random => RootPolicy::SeededRandom(self.seed),
            },
            ..MethodParams::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RootArg {
    Deterministic,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Ascii,
    Binary,
}

impl From<FormatArg> for PlyFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Ascii => PlyFormat::Ascii,
            FormatArg::Binary => PlyFormat::BinaryLittleEndian,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Sphere,
    Plane,
    Dihedral,
}

fn parse_method(s: &str) -> Result<InterpolatorKind, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = InterpolatorKind::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method '{s}', expected one of {}", names.join(", "))
    })
}

fn parse_density(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if s.contains('.') || s.contains('e') {
        let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
        if v > 0.0 && v <= 1.0 {
            Ok(v)
        } else {
            Err(format!("fractional density {v} is outside (0, 1]"))
        }
    } else {
        match s.parse::<u32>() {
            Ok(p @ 1..=100) => Ok(p as f64 / 100.0),
            _ => Err(format!("percent density '{s}' is not an integer in 1..=100")),
        }
    }
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn read_cloud(path: &Path) -> Result<ColorPointCloud, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    read_ply(&bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Upsample {
            input,
            output,
            method,
            model,
            format,
        } => {
            let params = model.params();
            params.validate()?;
            let cloud = read_cloud(&input)?;
            let mut result = reconstruct(&cloud, method, &params)?;
            if !result.uncolored.is_empty() {
                eprintln!(
                    "warning: {method} left {} point(s) without a value; writing them black",
                    result.uncolored.len()
                );
                for &id in &result.uncolored {
                    result.cloud.points[id].color = Some(Rgb::new(0, 0, 0));
                }
            }
            write_file(&output, &write_ply(&result.cloud, format.into(), false)?)
        }
        Command::Evaluate {
            input,
            output,
            methods,
            densities,
            runs,
            timing,
            model,
        } => {
            let spec = ExperimentSpec {
                methods,
                densities,
                runs: runs as usize,
                base_seed: model.seed,
                params: model.params(),
                timing,
            };
            spec.validate()?;
            let cloud = read_cloud(&input)?;
            let report = run_experiment(&cloud, &spec)?;
            let failed = report
                .records
                .iter()
                .filter(|r| matches!(r.status, fsmmr_core::evaluation::RecordStatus::Failed(_)))
                .count();
            if failed > 0 {
                eprintln!("warning: {failed} record(s) failed; see the flags column");
            }
            write_file(&output, report.to_csv().as_bytes())
        }
        Command::Flatten {
            input,
            output,
            block,
            model,
        } => {
            let params = model.params();
            params.validate()?;
            let cloud = read_cloud(&input)?;
            let blocks = partition_into_blocks(&cloud, params.block_size)?;
            let Some(chosen) = blocks.get(block) else {
                return Err(Failure::Usage(format!(
                    "block {block} does not exist; the cloud has {} block(s)",
                    blocks.len()
                )));
            };
            eprintln!(
                "block {block}: cell {:?}, {} point(s)",
                chosen.cell_index,
                chosen.len()
            );
            let mesh = flatten_block(chosen, &cloud, params.root_policy)?;
            write_file(&output, mesh.to_csv(&cloud).as_bytes())
        }
        Command::Synth {
            output,
            shape,
            points,
            size,
            frequency,
            edge,
            density,
            seed,
            format,
        } => {
            let config = SyntheticConfig {
                shape: match shape {
                    ShapeArg::Sphere => Shape::Sphere { radius: size },
                    ShapeArg::Plane => Shape::Plane { side: size },
                    ShapeArg::Dihedral => Shape::Dihedral {
                        side: size,
                        angle_deg: 120.0,
                    },
                },
                points,
                color: ColorField {
                    frequency,
                    edge_step: edge,
                    ..ColorField::default()
                },
                seed,
            };
            let mut cloud = synthetic::generate(&config)?;
            if let Some(d) = density {
                cloud = random_downsample(&cloud, d, seed)?;
            }
            write_file(&output, &write_ply(&cloud, format.into(), true)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(1);
    }
    match with_threads(cli.threads, || run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run with --help for usage");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
