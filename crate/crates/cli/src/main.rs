use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use tspmgs_cli::commands::ablate::{cmd_ablate, render_ablation, AblateAxis};
use tspmgs_cli::commands::benchmark::{cmd_benchmark, render_summary};
use tspmgs_cli::commands::score::{cmd_score, render_score};
use tspmgs_cli::commands::synth::cmd_synth;
use tspmgs_cli::config::{
    parse_alpha_mode, parse_image_input, parse_scheme, parse_task, RunConfig,
};
use tspmgs_cli::exit_code;

/// Quality assessment of AI-generated images: task-specific prompts plus
/// multi-granularity image-text similarity.
#[derive(Parser)]
#[command(name = "tspmgs", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Field-level configuration overrides shared by the data-driven commands.
#[derive(Args, Default)]
struct Overrides {
    /// Assessment task: perception | alignment
    #[arg(long)]
    task: Option<String>,
    /// Prompt scheme: antonym | adjective | adverb
    #[arg(long)]
    scheme: Option<String>,
    /// Alpha mode: fixed_0 | fixed_1 | learned
    #[arg(long)]
    alpha_mode: Option<String>,
    /// Number of image patches
    #[arg(long)]
    patches_n: Option<usize>,
    /// Image-tower input: only_image | only_patches | both
    #[arg(long)]
    image_input: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Force deterministic backend execution
    #[arg(long)]
    deterministic: Option<bool>,
    /// Skip fine-tuning; score with the pretrained behavior
    #[arg(long)]
    zero_shot: bool,
    /// Softmax temperature override
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    repetitions: Option<u32>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(task) = &self.task {
            cfg.run.task = parse_task(task)?;
        }
        if let Some(scheme) = &self.scheme {
            cfg.run.scheme = parse_scheme(scheme)?;
        }
        if let Some(mode) = &self.alpha_mode {
            cfg.run.alpha_mode = parse_alpha_mode(mode)?;
        }
        if let Some(n) = self.patches_n {
            cfg.run.patches_n = n;
        }
        if let Some(mode) = &self.image_input {
            cfg.run.image_input = parse_image_input(mode)?;
        }
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(det) = self.deterministic {
            cfg.run.deterministic = det;
        }
        if self.zero_shot {
            cfg.run.zero_shot = true;
        }
        if let Some(t) = self.temperature {
            cfg.run.temperature = Some(t);
        }
        if let Some(epochs) = self.epochs {
            cfg.train.epochs = epochs;
        }
        if let Some(reps) = self.repetitions {
            cfg.train.repetitions = reps;
        }
        if let Some(dir) = &self.output_dir {
            cfg.data.output_dir = dir.clone();
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Score one image against its initial prompt (JSON on stdout).
    Score {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint directory from a training run
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Repeated split/train/evaluate over the configured dataset.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Sweep one axis (prompt_scheme | image_input | alpha) and compare.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Generate a synthetic corpus plus a ready-to-run config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        joint_dim: usize,
    },
}

fn load_config(path: Option<&PathBuf>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Score { image, prompt, config, checkpoint, overrides } => {
            let cfg = load_config(config.as_ref(), &overrides)?;
            let out = cmd_score(&cfg, &image, &prompt, checkpoint.as_deref())?;
            eprint!("{}", render_score(&out));
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Benchmark { config, overrides } => {
            let cfg = load_config(Some(&config), &overrides)?;
            let report = cmd_benchmark(&cfg)?;
            print!("{}", render_summary(&report.rows));
            eprintln!("artifacts written to {}", report.output_dir.display());
        }
        Command::Ablate { config, axis, overrides } => {
            let cfg = load_config(Some(&config), &overrides)?;
            let axis: AblateAxis = axis.parse()?;
            let report = cmd_ablate(&cfg, axis)?;
            print!("{}", render_ablation(&report));
            eprintln!("table written to {}", report.output_path.display());
        }
        Command::Synth { out, samples, seed, joint_dim } => {
            let config_path = cmd_synth(&out, samples, seed, joint_dim)?;
            println!("{}", config_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
