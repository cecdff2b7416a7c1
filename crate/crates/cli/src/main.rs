use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sls::bench::{
    construct_fig1_instance, fig1_report, run_campaign_on, BuiltinSolver, CampaignOptions,
    CampaignSpec, DictionarySource, MethodSpec, SparseSolver,
};
use sls::dictionary::{
    build_convolution_dictionary, mutual_coherence, pulse_convolution_spec, read_matrix_text,
    Dictionary, GaussianPulse, DEFAULT_N_ATOMS, DEFAULT_N_OBS, DEFAULT_UPSAMPLING,
};
use sls::greedy::DEFAULT_SLS_MULTIPLIER;

#[derive(Parser)]
#[command(
    name = "sls-bench",
    version,
    about = "Greedy sparse approximation benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a convolution dictionary, write it and print its mutual coherence.
    Gen {
        #[command(flatten)]
        geometry: Geometry,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark campaign.
    Run(RunArgs),
    /// Solve a single instance.
    Solve {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_SLS_MULTIPLIER)]
        sls_multiplier: usize,
    },
    /// Build the two-spike instance where correlation-based selection fails
    /// and dump every method's scores and solutions as JSON.
    Fig1 {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        geometry: Geometry,
    },
}

#[derive(Args, Clone)]
struct Geometry {
    #[arg(long, default_value_t = DEFAULT_N_OBS)]
    n_obs: usize,
    #[arg(long, default_value_t = DEFAULT_N_ATOMS)]
    n_atoms: usize,
    #[arg(long, default_value_t = DEFAULT_UPSAMPLING)]
    upsampling: usize,
    #[arg(long, default_value_t = GaussianPulse::default().sigma)]
    pulse_sigma: f64,
    #[arg(long, default_value_t = GaussianPulse::default().freq)]
    pulse_freq: f64,
}

impl Geometry {
    fn spec(&self) -> sls::dictionary::ConvolutionSpec {
        let pulse = GaussianPulse {
            sigma: self.pulse_sigma,
            freq: self.pulse_freq,
        };
        pulse_convolution_spec(pulse, self.n_obs, self.n_atoms, self.upsampling)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Dictionary file written by `gen`.
    #[arg(long, conflicts_with = "default", required_unless_present = "default")]
    dict: Option<PathBuf>,
    /// Use the default convolution dictionary (see the geometry flags).
    #[arg(long)]
    default: bool,
    #[command(flatten)]
    geometry: Geometry,
    #[arg(long, default_value = "omp,ols,sls,bpdn", value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long, default_value = "5,10,20,30,40", value_delimiter = ',')]
    k_grid: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 20.0)]
    snr_db: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_SLS_MULTIPLIER)]
    sls_multiplier: usize,
    /// Minimum distance between spikes on the atom grid.
    #[arg(long, default_value_t = 1)]
    min_gap: usize,
    /// Output directory for trials.csv, aggregate.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

fn load_dictionary(path: &Path) -> Result<Dictionary> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let d = Dictionary::read_text(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))?;
    if d.is_normalized() {
        Ok(d)
    } else {
        Ok(sls::dictionary::normalize_columns(&d)?.0)
    }
}

fn load_vector(path: &Path) -> Result<Vec<f64>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let m = read_matrix_text(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))?;
    if m.rows() != 1 && m.cols() != 1 {
        bail!(
            "{} holds a {}x{} matrix, expected a vector",
            path.display(),
            m.rows(),
            m.cols()
        );
    }
    Ok(m.as_col_major().to_vec())
}

fn gen(geometry: &Geometry, out: &Path) -> Result<()> {
    let built = build_convolution_dictionary(&geometry.spec())?;
    let d = &built.dictionary;
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    d.write_text(BufWriter::new(file))?;
    if built.signal_length < geometry.n_atoms {
        eprintln!(
            "note: {} trailing positions fall outside the observation window; kept {} atoms",
            geometry.n_atoms - built.signal_length,
            built.signal_length
        );
    }
    println!("dictionary {} x {}", d.n_obs(), d.n_atoms());
    println!("mutual coherence {:.6}", mutual_coherence(d)?);
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let methods = args
        .methods
        .iter()
        .map(|m| m.parse::<MethodSpec>())
        .collect::<Result<Vec<_>, _>>()?;
    let (dictionary, source) = match &args.dict {
        Some(path) => (
            load_dictionary(path)?,
            DictionarySource::External {
                source: path.display().to_string(),
            },
        ),
        None => {
            let spec = args.geometry.spec();
            (
                build_convolution_dictionary(&spec)?.dictionary,
                (&spec).into(),
            )
        }
    };
    let spec = CampaignSpec {
        dictionary: source,
        k_grid: args.k_grid.clone(),
        trials: args.trials,
        snr_db: args.snr_db,
        methods,
        master_seed: args.seed,
        sls_multiplier: args.sls_multiplier,
        min_gap: args.min_gap,
    };
    let options = CampaignOptions {
        threads: args.threads,
        trace_dir: args.trace_dir.clone(),
    };
    let report = run_campaign_on(Arc::new(dictionary), &spec, &spec.solvers(), &options)?;

    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("trials.csv"), report.trials_csv())?;
    fs::write(args.out.join("aggregate.csv"), report.aggregate_csv())?;
    fs::write(args.out.join("summary.json"), report.summary_json())?;
    println!("mutual coherence {:.6}", report.header.mutual_coherence);
    print!("{}", report.aggregate_csv());
    Ok(())
}

fn solve(dict: &Path, y: &Path, method: &str, k: usize, sls_multiplier: usize) -> Result<()> {
    let d = load_dictionary(dict)?;
    let y = load_vector(y)?;
    if y.len() != d.n_obs() {
        bail!(
            "y has {} samples, dictionary has {} rows",
            y.len(),
            d.n_obs()
        );
    }
    let solver = BuiltinSolver {
        method: method.parse()?,
        sls_multiplier,
    };
    let out = solver.solve(&d, &y, k, false)?;
    let r = &out.result;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    writeln!(w, "support {:?}", r.support.indices())?;
    writeln!(w, "amplitudes {:?}", r.amplitudes)?;
    writeln!(w, "residual_norm {:e}", r.residual_norm_sq().sqrt())?;
    if r.early_termination {
        writeln!(w, "early_termination true")?;
    }
    Ok(())
}

fn fig1(out: &Path, seed: u64, geometry: &Geometry) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instance = construct_fig1_instance(&geometry.spec(), &mut rng)?;
    let report = fig1_report(&instance)?;
    fs::write(out, serde_json::to_string_pretty(&report)?)?;
    println!(
        "spikes {:?}, separation {}, correlation peak {}",
        report.true_support, report.separation, report.correlation_argmax
    );
    for m in &report.methods {
        println!(
            "{}: support {:?} exact_recovery {}",
            m.method, m.support, m.exact_recovery
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Gen { geometry, out } => gen(geometry, out),
        Command::Run(args) => run(args),
        Command::Solve {
            dict,
            y,
            method,
            k,
            sls_multiplier,
        } => solve(dict, y, method, *k, *sls_multiplier),
        Command::Fig1 {
            out,
            seed,
            geometry,
        } => fig1(out, *seed, geometry),
    }
}
