use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pushfore::control::TargetSet;
use pushfore::harness::{
    cmd_collect, cmd_eval, cmd_kernels, cmd_rollout, cmd_step_response, cmd_train, load_linear_model, Planner, RunConfig,
};
use pushfore::lsq::FitMode;

const AFTER_HELP: &str = "\
Output files (UTF-8 CSV with a header row):
  train_errors.csv   mode,bucket,length,n_train,n_test,train_err,test_err
  eval.csv           model,n_test,mean_err   (model = linear | transport | identity)
  rollout_<p>.csv    run,step,V_pred,V_real,status
                     step 0 holds the initial value; status is the run's final
                     status (converged | max_steps | stalled)
  kernel_k<K>_i<I>_j<J>.csv, step_response_k<K>.csv
                     raw N x N grids, one image row per line
Binary files: data_<bucket>.slds datasets, model_<mode>.slvf models, P5 PGM images.";

#[derive(Parser)]
#[command(name = "pushfore", version, about = "Learn switched-linear pushing models and run greedy Lyapunov control", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra config overrides, key=value
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => RunConfig::default(),
        };
        for kv in &self.overrides {
            let Some((k, v)) = kv.split_once('=') else { bail!("override {kv:?} is not key=value") };
            cfg.set(k, v)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate pushes and write one SLDS dataset per push length
    Collect {
        #[command(flatten)]
        common: Common,
    },
    /// Fit per-length transition matrices and write SLVF models plus train_errors.csv
    Train {
        #[command(flatten)]
        common: Common,
        /// Fit modes, comma separated: ols, nonneg, rowsum
        #[arg(long, default_value = "ols,nonneg,rowsum")]
        mode: String,
    },
    /// Compare linear, transport and identity predictors on fresh transitions
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Number of transitions (defaults to eval_samples)
        #[arg(long)]
        n_test: Option<usize>,
    },
    /// Greedy closed-loop runs toward a target set
    Rollout {
        #[command(flatten)]
        common: Common,
        /// SLVF model file, or the words `transport` or `oracle`
        #[arg(long)]
        model: String,
        /// Target PGM (nonzero = target); defaults to a centered square
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        max_steps: Option<usize>,
        /// Write one PGM per step
        #[arg(long)]
        frames: bool,
    },
    /// Export kernels (matrix rows) as PGM and CSV
    Kernels {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Pixels as i,j pairs separated by semicolons, e.g. "4,4;16,20"
        #[arg(long, default_value = "16,16")]
        pixels: String,
    },
    /// Export the response of each matrix to a uniform 0.5 image
    StepResponse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
}

fn parse_pixels(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (i, j) = p.split_once(',').with_context(|| format!("pixel {p:?} is not i,j"))?;
            Ok((i.trim().parse()?, j.trim().parse()?))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect { common } => {
            let cfg = common.config()?;
            for p in cmd_collect(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Train { common, mode } => {
            let cfg = common.config()?;
            let modes = mode.split(',').map(|m| m.trim().parse::<FitMode>()).collect::<Result<Vec<_>, _>>()?;
            let rows = cmd_train(&cfg, &modes)?;
            print!("{}", pushfore::harness::train_csv(&rows));
        }
        Command::Eval { common, model, n_test } => {
            let cfg = common.config()?;
            let m = load_linear_model(&model).with_context(|| format!("loading {}", model.display()))?;
            let rows = cmd_eval(&cfg, &m, n_test.unwrap_or(cfg.eval_samples), cfg.seed)?;
            print!("{}", pushfore::harness::eval_csv(&rows));
        }
        Command::Rollout { common, model, target, runs, max_steps, frames } => {
            let mut cfg = common.config()?;
            if let Some(r) = runs {
                cfg.runs = r;
            }
            if let Some(s) = max_steps {
                cfg.max_steps = s;
            }
            cfg.save_frames |= frames;
            cfg.validate()?;
            let planner = match model.as_str() {
                "oracle" => Planner::Oracle,
                "transport" => Planner::Transport,
                path => Planner::Linear(load_linear_model(path).with_context(|| format!("loading {path}"))?),
            };
            let target = match target {
                Some(p) => TargetSet::load_pgm(&p).with_context(|| format!("loading target {}", p.display()))?,
                None => TargetSet::centered_square(cfg.n, cfg.target_side)?,
            };
            let logs = cmd_rollout(&cfg, &planner, &target)?;
            print!("{}", pushfore::harness::rollout_csv(&logs));
        }
        Command::Kernels { common, model, pixels } => {
            let cfg = common.config()?;
            let m = load_linear_model(&model).with_context(|| format!("loading {}", model.display()))?;
            for p in cmd_kernels(&m, &parse_pixels(&pixels)?, &cfg.out_dir)? {
                println!("{}", p.display());
            }
        }
        Command::StepResponse { common, model } => {
            let cfg = common.config()?;
            let m = load_linear_model(&model).with_context(|| format!("loading {}", model.display()))?;
            for p in cmd_step_response(&m, &cfg.out_dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
