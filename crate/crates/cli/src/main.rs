// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use isoquant::collapse::maximal_collapse_observed;
use isoquant::inference::{compare_designs, credible_interval, posterior_sample, DesignSpec, InfoVariant};
use isoquant::io::{
    insert_histogram_to_tsv, parse_gene_file, parse_insert_histogram, parse_reads_file, render_report, EstimateReport,
    Format, ParsedReads,
};
use isoquant::model::{CountsVector, GeneModel, ReadKind};
use isoquant::rates::{estimate_insert_distribution, rate_row_sums, RateModel};
use isoquant::simulate::{run_experiment, SimConfig};
use isoquant::{CategorySet, Error, Method, SolverOptions};

const EXIT_INPUT: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "isoquant", version, about = "Isoform abundance estimation from RNA-Seq read positions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate isoform abundances from a gene model and a reads table.
    Estimate(EstimateArgs),
    /// Print the maximal collapsing of the observed read types.
    Collapse(ModelArgs),
    /// Run a simulation study described by a JSON config.
    Simulate(SimulateArgs),
    /// Compare single- and paired-end designs by Fisher information.
    Fisher(FisherArgs),
    /// Estimate the insert-length histogram from paired records.
    InsertDist(InsertDistArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Uniform,
    Insert,
}

#[derive(clap::Args)]
struct ModelArgs {
    /// Gene model JSON.
    #[arg(long)]
    gene: PathBuf,
    /// Reads TSV.
    #[arg(long)]
    reads: PathBuf,
    #[arg(long)]
    read_length: u32,
    #[arg(long, value_enum, default_value = "uniform")]
    model: ModelKind,
    /// Insert-length histogram TSV; estimated from the reads when omitted.
    #[arg(long)]
    insert_hist: Option<PathBuf>,
    /// Central mass kept when estimating the insert histogram from reads.
    #[arg(long, default_value_t = 0.99)]
    trim: f64,
    /// Experiment-wide read total `n`; defaults to the accepted records.
    #[arg(long)]
    total: Option<u64>,
    /// Fail on any rejected reads line instead of skipping it.
    #[arg(long)]
    strict: bool,
}

#[derive(clap::Args)]
struct EstimateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "projected-newton")]
    method: Method,
    #[arg(long, default_value_t = 1e-8)]
    kkt_tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Add posterior credible intervals on RPKM.
    #[arg(long, requires = "seed")]
    intervals: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 20_000)]
    draws: usize,
    #[arg(long, default_value_t = 2_000)]
    burn_in: usize,
    #[arg(long, default_value = "json")]
    format: Format,
    /// Output file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct FisherArgs {
    /// Length of each flanking exon.
    #[arg(long)]
    flank: u32,
    /// Length of the alternative exon.
    #[arg(long)]
    exon: u32,
    /// Read length.
    #[arg(long)]
    read: u32,
    /// Insert (fragment) length.
    #[arg(long)]
    insert: u32,
    #[arg(long)]
    theta1: f64,
    #[arg(long, default_value = "printed")]
    variant: InfoVariant,
}

#[derive(clap::Args)]
struct InsertDistArgs {
    #[arg(long)]
    gene: PathBuf,
    #[arg(long)]
    reads: PathBuf,
    #[arg(long)]
    read_length: u32,
    #[arg(long, default_value_t = 0.99)]
    trim: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Input(Error),
    NotConverged,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_INPUT);
    }
    let outcome = match cli.command {
        Command::Estimate(args) => estimate(args),
        Command::Collapse(args) => collapse(args),
        Command::Simulate(args) => simulate(args),
        Command::Fisher(args) => fisher(args),
        Command::InsertDist(args) => insert_dist(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::NotConverged) => {
            eprintln!("error: solver did not converge");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("ISOQUANT_THREADS") else {
        return Ok(());
    };
    let threads: usize =
        value.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::InvalidArgument(format!("ISOQUANT_THREADS must be a positive integer, got {value:?}"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| Error::Io { path: p.display().to_string(), source }),
        None => {
            std::io::stdout().write_all(text.as_bytes()).map_err(|source| Error::Io { path: "<stdout>".into(), source })
        }
    }
}

fn load_reads(gene: &GeneModel, path: &Path, read_length: u32, strict: bool) -> Result<ParsedReads, Error> {
    let parsed = parse_reads_file(path, gene, read_length)?;
    if strict {
        return parsed.into_strict(&path.display().to_string());
    }
    for r in &parsed.rejected {
        eprintln!("warning: {}: skipped {r}", path.display());
    }
    Ok(parsed)
}

struct Prepared {
    gene: GeneModel,
    cats: CategorySet,
    w: Vec<f64>,
}

fn prepare(args: &ModelArgs) -> Result<Prepared, Error> {
    let gene = parse_gene_file(&args.gene)?;
    let parsed = load_reads(&gene, &args.reads, args.read_length, args.strict)?;
    let wanted = match args.model {
        ModelKind::Uniform => ReadKind::Single,
        ModelKind::Insert => ReadKind::Paired,
    };
    if let Some(bad) = parsed.counts.read_types().find(|r| r.kind() != wanted) {
        return Err(Error::InvalidArgument(format!(
            "read type {bad} does not match the {} model",
            match args.model {
                ModelKind::Uniform => "uniform (single-end)",
                ModelKind::Insert => "insert (paired-end)",
            }
        )));
    }
    let model = match args.model {
        ModelKind::Uniform => RateModel::Uniform { read_length: args.read_length },
        ModelKind::Insert => {
            let q = match &args.insert_hist {
                Some(path) => parse_insert_histogram(path)?,
                None => estimate_insert_distribution(&parsed.primary_lengths(), args.trim)?,
            };
            RateModel::Insert { q, read_length: args.read_length }
        }
    };
    let mapped = parsed.counts.mapped();
    let n = args.total.unwrap_or(parsed.counts.total());
    if n < mapped {
        return Err(Error::InvalidArgument(format!("--total {n} is smaller than the {mapped} mapped reads")));
    }
    let counts = CountsVector::new(parsed.counts.iter().map(|(r, c)| (r.clone(), c)).collect(), n)?;
    let observed: Vec<_> = counts.read_types().cloned().collect();
    let rates = model.rates(&gene, &observed, n)?;
    let cats = maximal_collapse_observed(&rates, &counts)?;
    let w = rate_row_sums(&gene, &model, n);
    if let Some(i) = w.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "isoform {} cannot produce any read under this model",
            gene.isoforms()[i].id
        )));
    }
    Ok(Prepared { gene, cats, w })
}

fn estimate(args: EstimateArgs) -> Outcome {
    let Prepared { gene, cats, w } = prepare(&args.model)?;
    let opts = SolverOptions {
        kkt_tol: args.kkt_tol,
        max_iters: args.max_iters,
        method: args.method,
        ..SolverOptions::default()
    };
    let est = isoquant::solve_mle(&cats, &w, &opts)?;
    let intervals = match (args.intervals, args.seed) {
        (true, Some(seed)) => {
            let sample = posterior_sample(&cats, &w, seed, args.draws, args.burn_in)?;
            Some(credible_interval(&sample, args.level)?)
        }
        _ => None,
    };
    let report = EstimateReport::new(&gene, &est, intervals.as_deref(), &cats);
    write_output(args.output.as_deref(), &render_report(&report, args.format))?;
    if est.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}

fn collapse(args: ModelArgs) -> Outcome {
    let Prepared { gene, cats, .. } = prepare(&args)?;
    let ids: Vec<&str> = gene.isoforms().iter().map(|i| i.id.as_str()).collect();
    let mut out = String::from("category\tmembers\tcount");
    for prefix in ["d", "a"] {
        for id in &ids {
            out.push_str(&format!("\t{prefix}_{id}"));
        }
    }
    out.push('\n');
    for (k, (c, a)) in cats.categories().iter().zip(cats.rates()).enumerate() {
        out.push_str(&format!("{}\t{}\t{}", k + 1, c.members, c.count));
        for d in &c.direction {
            out.push_str(&format!("\t{d}"));
        }
        for x in a {
            out.push_str(&format!("\t{x}"));
        }
        out.push('\n');
    }
    write_output(None, &out)?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Outcome {
    let text = fs::read_to_string(&args.config)
        .map_err(|source| Error::Io { path: args.config.display().to_string(), source })?;
    let mut config: SimConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Parse { path: args.config.display().to_string(), message: e.to_string() })?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let result = run_experiment(&config)?;
    let mut out = String::from("sample_size\tmean_error\tse\treplicates\tfailures\n");
    for c in &result.cells {
        out.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", c.sample_size, c.mean_error, c.se, c.replicates, c.failures));
    }
    write_output(args.output.as_deref(), &out)?;
    Ok(())
}

fn fisher(args: FisherArgs) -> Outcome {
    let spec = DesignSpec {
        flank: args.flank,
        exon: args.exon,
        read_length: args.read,
        insert: args.insert,
        theta1: args.theta1,
    };
    let cmp = compare_designs(&spec, args.variant)?;
    let json = serde_json::to_string_pretty(&cmp).expect("comparison serializes");
    write_output(None, &(json + "\n"))?;
    Ok(())
}

fn insert_dist(args: InsertDistArgs) -> Outcome {
    let gene = parse_gene_file(&args.gene)?;
    let parsed = load_reads(&gene, &args.reads, args.read_length, false)?;
    let lengths = parsed.primary_lengths();
    if lengths.is_empty() {
        return Err(Error::InvalidArgument("no paired records to estimate insert lengths from".into()).into());
    }
    let q = estimate_insert_distribution(&lengths, args.trim)?;
    write_output(args.output.as_deref(), &insert_histogram_to_tsv(&q))?;
    Ok(())
}
