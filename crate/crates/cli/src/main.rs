use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wivi_cli::error::exit;
use wivi_cli::{pipeline, CliError, Config, Ctx, Method, Result};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  other failure (training, numerical)
  2  invalid command-line usage
  3  missing input file
  4  malformed input file
  5  invalid configuration
  6  segmentation mismatch between model and test set
  7  I/O error";

#[derive(Parser, Debug)]
#[command(name = "wivi", version, about = "WiFi CSI activity recognition pipeline", after_help = EXIT_CODES)]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for simulation, split, shuffling and initialization.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores). Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Segment length in seconds; all configured lengths when omitted.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..=3))]
    segmentation: Option<u32>,
    /// Classifier; all three when omitted.
    #[arg(long, global = true)]
    method: Option<Method>,
    /// Output root.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Suppress progress on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write synthetic captures, labels and skeleton heatmaps to <out>/raw.
    Simulate,
    /// Decode captures into amplitude streams.
    Parse,
    /// Denoise and smooth amplitude streams.
    Preprocess,
    /// Cut, average, split and augment into sample sets.
    Segment,
    /// Fit models on the training split.
    Train,
    /// Predict the test split.
    Eval {
        /// Model file to use instead of the default under <out>/models.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Render tables, confusion matrices and the occlusion probe.
    Report,
    /// Every stage in order.
    Run,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.validate()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(CliError::other)?;
    let mut ctx = Ctx::new(cfg, cli.seed, cli.out);
    ctx.verbose = !cli.quiet;
    if let Some(s) = cli.segmentation {
        ctx.cfg.segment.segmentations = vec![s];
    }
    let segs = ctx.cfg.segment.segmentations.clone();
    let methods: Vec<Method> = cli.method.map_or(Method::ALL.to_vec(), |m| vec![m]);
    match cli.cmd {
        Cmd::Simulate => {
            pipeline::simulate(&ctx)?;
        }
        Cmd::Parse => {
            pipeline::parse(&ctx)?;
        }
        Cmd::Preprocess => {
            pipeline::preprocess(&ctx)?;
        }
        Cmd::Segment => {
            for s in segs {
                pipeline::segment(&ctx, s)?;
            }
        }
        Cmd::Train => {
            for s in segs {
                for &m in &methods {
                    pipeline::train(&ctx, m, s)?;
                }
            }
        }
        Cmd::Eval { model } => {
            if model.is_some() && (segs.len() != 1 || methods.len() != 1) {
                return Err(CliError::Config("--model needs exactly one --segmentation and --method".into()));
            }
            for s in segs {
                for &m in &methods {
                    let r = pipeline::eval(&ctx, m, s, model.as_deref())?;
                    println!("{} {}s OA {:.4}", r.method, r.segmentation_s, r.oa);
                }
            }
        }
        Cmd::Report => {
            for r in pipeline::report(&ctx)? {
                println!("{} {}s OA {:.4}", r.method, r.segmentation_s, r.oa);
            }
        }
        Cmd::Run => {
            for r in pipeline::run_all(&ctx, &methods)? {
                println!("{} {}s OA {:.4}", r.method, r.segmentation_s, r.oa);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
