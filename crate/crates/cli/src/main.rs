use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use monocvar_cli::commands::{self, RobustnessMode};
use monocvar_cli::error::{CliError, CliResult, EXIT_CONFIG, EXIT_OK};
use monocvar_cli::manifest::k;
use monocvar_cli::props;
use monocvar_cli::RunConfig;

/// Mean-CVaR allocation experiments: kernel training, scheme solves,
/// frontiers, Monte Carlo validation and robustness reruns.
#[derive(Parser)]
#[command(name = "monocvar", version)]
struct Cli {
    /// Worker threads (0 = all cores; overrides `run.threads`).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log level filter (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file; built-in defaults are used when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set problem.gamma=3`. Repeatable; later wins.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (overrides `run.out_dir`).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the Gaussian-mixture kernel and report CF error metrics.
    TrainKernel {
        #[command(flatten)]
        common: Common,
    },
    /// Outer threshold search at every configured level; writes policies.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kernel: PathBuf,
    },
    /// One outer search per scalarisation weight.
    Frontier {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kernel: PathBuf,
        /// Comma-separated weights (overrides `frontier.gammas`).
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
    },
    /// Monte Carlo rollout of stored policies against the scheme.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy_dir: PathBuf,
        /// Dump up to this many raw terminal-wealth samples per level.
        #[arg(long)]
        dump_samples: Option<usize>,
    },
    /// Rerun the solve under a modified domain or boundary treatment.
    Robustness {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kernel: PathBuf,
        /// larger-domain, smaller-domain, constant-bc or constant-bc-large.
        #[arg(long)]
        mode: String,
    },
    /// Fast built-in property checks; with a kernel, also its mass and Plancherel checks.
    TestProperties {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kernel: Option<PathBuf>,
    },
}

fn load(common: &Common, threads: Option<usize>) -> CliResult<(RunConfig, PathBuf)> {
    let mut sets = common.sets.clone();
    if let Some(t) = threads {
        sets.push(format!("run.threads={t}"));
    }
    let cfg = RunConfig::load(common.config.as_deref(), &sets)?;
    if cfg.run.threads > 0 {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.run.threads).build_global();
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.run.out_dir.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::TrainKernel { common } => {
            let (cfg, out) = load(&common, cli.threads)?;
            let o = commands::cmd_train_kernel(&cfg, &out)?;
            println!("final loss {:.6e}", o.report.final_loss);
            println!("L2 error Re {:.6e} Im {:.6e}", o.metrics.l2_re, o.metrics.l2_im);
            println!("kernel written to {}", out.join("kernel.txt").display());
        }
        Command::Solve { common, kernel } => {
            let (cfg, out) = load(&common, cli.threads)?;
            for s in commands::cmd_solve(&cfg, &kernel, &out)? {
                let r = &s.result;
                println!(
                    "level {}: E[W_T] {} CVaR {} w* {} objective {} (thousands)",
                    s.level,
                    k(r.expected_wealth),
                    k(r.cvar),
                    k(r.w_star),
                    k(r.value)
                );
            }
        }
        Command::Frontier { common, kernel, gammas } => {
            let (cfg, out) = load(&common, cli.threads)?;
            let gs = gammas.unwrap_or_else(|| cfg.frontier.gammas.clone());
            for p in commands::cmd_frontier(&cfg, &kernel, &gs, &out)? {
                println!("gamma {}: CVaR {} E[W_T] {}", p.gamma, k(p.result.cvar), k(p.result.expected_wealth));
            }
        }
        Command::Validate { common, policy_dir, dump_samples } => {
            let (mut cfg, out) = load(&common, cli.threads)?;
            if let Some(n) = dump_samples {
                cfg.mc.dump_samples = n;
            }
            for c in commands::cmd_validate(&cfg, &policy_dir, &out)? {
                println!(
                    "level {}: MC E[W_T] {} ({}) scheme {} within CI: {}; MC CVaR {} scheme {} within tolerance: {}",
                    c.level,
                    k(c.stats.mean),
                    k(c.stats.ci99_halfwidth),
                    k(c.scheme_mean),
                    c.mean_within_ci(),
                    k(c.stats.cvar),
                    k(c.scheme_cvar),
                    c.cvar_within_tol()
                );
            }
        }
        Command::Robustness { common, kernel, mode } => {
            let mode = RobustnessMode::parse(&mode)?;
            let (cfg, out) = load(&common, cli.threads)?;
            for r in commands::cmd_robustness(&cfg, &kernel, mode, &out)? {
                println!(
                    "level {}: {} objective {} vs baseline {} (relative change {:.3e})",
                    r.level,
                    mode.name(),
                    k(r.variant.result.value),
                    k(r.baseline_value),
                    r.objective_rel_diff()
                );
            }
        }
        Command::TestProperties { common, kernel } => {
            let (cfg, _) = load(&common, cli.threads)?;
            let mut checks = props::quick_suite();
            if let Some(path) = kernel {
                let theta = commands::load_kernel(&path)?;
                let level = cfg.lattice.levels[0];
                let params = cfg.model_params()?;
                checks.push(props::kernel_mass(&theta, &cfg.grid(level)?, &params));
                checks.push(props::plancherel(&theta, &params));
            }
            for c in &checks {
                println!("{}", c.line());
            }
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
            if !failed.is_empty() {
                return Err(CliError::Check(failed.join(", ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { EXIT_OK as u8 });
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
