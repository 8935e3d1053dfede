use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use np_corner::parse::{parse_eps_range, parse_n_list, parse_real};
use np_corner_cli::config::{ExperimentConfig, Format};
use np_corner_cli::run::run;

fn real(s: &str) -> Result<f64, String> {
    parse_real(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone)]
struct NList(Vec<usize>);

#[derive(Debug, Clone)]
struct EpsList(Vec<f64>);

fn n_list(s: &str) -> Result<NList, String> {
    parse_n_list(s).map(NList).map_err(|e| e.to_string())
}

fn eps_list(s: &str) -> Result<EpsList, String> {
    parse_eps_range(s).map(EpsList).map_err(|e| e.to_string())
}

/// Corner singularities of two-phase conductivity problems: dispersion
/// roots, boundary-integral and finite-element spectra, Weyl sequences,
/// coercivity certificates.
#[derive(Parser, Debug)]
#[command(name = "np-corner", version)]
struct Cli {
    /// TOML file with run parameters; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for outputs and manifest.json (default: current directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Seed for randomized checks.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write JSON output.
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    /// Write CSV output.
    #[arg(long, global = true)]
    csv: bool,
    /// Also write a gnuplot script next to CSV output.
    #[arg(long, global = true)]
    plot: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Default)]
struct Contrasts {
    #[arg(long, allow_hyphen_values = true, value_parser = real)]
    k: Option<f64>,
    #[arg(long, allow_hyphen_values = true, value_parser = real)]
    lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true, value_parser = real)]
    beta: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct Angle {
    /// Interior corner angle in radians; `pi/2` style values are accepted.
    #[arg(long, value_parser = real)]
    alpha: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct Out {
    /// Output file, relative to --out-dir unless absolute.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct BoundaryArgs {
    /// `drop:alpha=..,R0=..`, `disk:r=..` or `ellipse:a=..,b=..`.
    #[arg(long)]
    shape: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_parser = real)]
    grading: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct FemArgs {
    /// `disk-in-disk:r=..,R=..`, `ellipse-in-disk:a=..,b=..,R=..` or `drop-in-disk:alpha=..,R0=..,R=..`.
    #[arg(long)]
    geometry: Option<String>,
    /// Triangle mesh in the text format instead of a generated one.
    #[arg(long)]
    mesh_file: Option<PathBuf>,
    /// Write the mesh used in the text format.
    #[arg(long)]
    save_mesh: Option<PathBuf>,
    #[arg(long, value_parser = real)]
    h: Option<f64>,
    /// Number of nontrivial eigenvalues to report.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Singular exponent of the corner for one contrast or a sweep.
    Dispersion {
        #[command(flatten)]
        angle: Angle,
        #[command(flatten)]
        contrast: Contrasts,
        /// `k=start:stop:count` (also `lambda=` or `beta=`).
        #[arg(long, allow_hyphen_values = true)]
        sweep: Option<String>,
        /// Add a column with the opposite sign convention for F.
        #[arg(long)]
        paper_sign: bool,
        #[command(flatten)]
        out: Out,
    },
    /// Boundary quadrature nodes, weights, normals and curvature.
    Mesh {
        #[command(flatten)]
        boundary: BoundaryArgs,
        #[command(flatten)]
        out: Out,
    },
    /// Eigenvalues of the discretized Neumann-Poincare operator.
    SpectrumBem {
        #[command(flatten)]
        boundary: BoundaryArgs,
        /// `free` or `disk:R=..`.
        #[arg(long)]
        mode: Option<String>,
        #[command(flatten)]
        out: Out,
    },
    /// Eigenvalue counts inside and outside the critical interval under refinement.
    EssStudy {
        #[command(flatten)]
        angle: Angle,
        #[arg(long)]
        shape: Option<String>,
        #[arg(long, value_parser = n_list)]
        n_list: Option<NList>,
        #[arg(long, value_parser = real)]
        grading: Option<f64>,
        #[arg(long, value_parser = real)]
        delta: Option<f64>,
        #[command(flatten)]
        out: Out,
    },
    /// Spectrum of the finite-element operator T_D.
    SpectrumFem {
        #[command(flatten)]
        fem: FemArgs,
        #[command(flatten)]
        out: Out,
    },
    /// Finite-element and boundary-integral spectra side by side.
    CrossValidate {
        #[command(flatten)]
        fem: FemArgs,
        /// Boundary nodes of the inclusion.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_parser = real)]
        grading: Option<f64>,
        #[command(flatten)]
        out: Out,
    },
    /// Residuals of the corner Weyl sequence over a range of eps.
    Weyl {
        #[command(flatten)]
        angle: Angle,
        #[command(flatten)]
        contrast: Contrasts,
        /// `2^-4:2^-9` or a comma list.
        #[arg(long, value_parser = eps_list)]
        eps: Option<EpsList>,
        #[arg(long, value_parser = real)]
        r0: Option<f64>,
        #[arg(long, value_parser = real)]
        h: Option<f64>,
        /// Evaluate the same fields on a drop without a corner.
        #[arg(long)]
        flat_control: bool,
        #[command(flatten)]
        out: Out,
    },
    /// Coercivity parameters (p, q, d) and discriminants.
    Certificate {
        #[command(flatten)]
        angle: Angle,
        #[command(flatten)]
        contrast: Contrasts,
        /// Random unit vectors for the quadratic-form check.
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        out: Out,
    },
    /// Manufactured-solution study of the coupled sector system.
    Sector {
        #[command(flatten)]
        angle: Angle,
        #[command(flatten)]
        contrast: Contrasts,
        #[arg(long, value_parser = real)]
        rho: Option<f64>,
        #[arg(long, value_parser = real)]
        h: Option<f64>,
        #[arg(long)]
        levels: Option<usize>,
        #[command(flatten)]
        out: Out,
    },
}

fn flag(b: bool) -> Option<bool> {
    b.then_some(true)
}

impl Cli {
    fn flags(self) -> ExperimentConfig {
        let mut c = ExperimentConfig {
            out_dir: self.out_dir,
            seed: self.seed,
            threads: self.threads,
            format: if self.json {
                Some(Format::Json)
            } else if self.csv {
                Some(Format::Csv)
            } else {
                None
            },
            plot: flag(self.plot),
            ..Default::default()
        };
        let Some(cmd) = self.command else { return c };
        let set_contrast = |c: &mut ExperimentConfig, x: Contrasts| {
            c.k = x.k;
            c.lambda = x.lambda;
            c.beta = x.beta;
        };
        let set_boundary = |c: &mut ExperimentConfig, b: BoundaryArgs| {
            c.shape = b.shape;
            c.n = b.n;
            c.grading = b.grading;
        };
        let set_fem = |c: &mut ExperimentConfig, f: FemArgs| {
            c.geometry = f.geometry;
            c.mesh_file = f.mesh_file;
            c.save_mesh = f.save_mesh;
            c.h = f.h;
            c.count = f.count;
        };
        let (name, out) = match cmd {
            Command::Dispersion { angle, contrast, sweep, paper_sign, out } => {
                c.alpha = angle.alpha;
                set_contrast(&mut c, contrast);
                c.sweep = sweep;
                c.paper_sign = flag(paper_sign);
                ("dispersion", out)
            }
            Command::Mesh { boundary, out } => {
                set_boundary(&mut c, boundary);
                ("mesh", out)
            }
            Command::SpectrumBem { boundary, mode, out } => {
                set_boundary(&mut c, boundary);
                c.mode = mode;
                ("spectrum-bem", out)
            }
            Command::EssStudy { angle, shape, n_list, grading, delta, out } => {
                c.alpha = angle.alpha;
                c.shape = shape;
                c.n_list = n_list.map(|l| l.0);
                c.grading = grading;
                c.delta = delta;
                ("ess-study", out)
            }
            Command::SpectrumFem { fem, out } => {
                set_fem(&mut c, fem);
                ("spectrum-fem", out)
            }
            Command::CrossValidate { fem, n, grading, out } => {
                set_fem(&mut c, fem);
                c.n = n;
                c.grading = grading;
                ("cross-validate", out)
            }
            Command::Weyl { angle, contrast, eps, r0, h, flat_control, out } => {
                c.alpha = angle.alpha;
                set_contrast(&mut c, contrast);
                c.eps = eps.map(|l| l.0);
                c.r0 = r0;
                c.h = h;
                c.flat_control = flag(flat_control);
                ("weyl", out)
            }
            Command::Certificate { angle, contrast, samples, out } => {
                c.alpha = angle.alpha;
                set_contrast(&mut c, contrast);
                c.samples = samples;
                ("certificate", out)
            }
            Command::Sector { angle, contrast, rho, h, levels, out } => {
                c.alpha = angle.alpha;
                set_contrast(&mut c, contrast);
                c.rho = rho;
                c.h = h;
                c.levels = levels;
                ("sector", out)
            }
        };
        c.command = Some(name.to_string());
        c.out = out.out;
        c
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        },
        None => ExperimentConfig::default(),
    };
    let cfg = file.overlay(&cli.flags());
    let manifest = run(&cfg);
    for path in &manifest.outputs {
        println!("{}", path.display());
    }
    if let Some(err) = &manifest.error {
        eprintln!("error: {err}");
    }
    ExitCode::from(manifest.exit_code as u8)
}
