use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use pphi2_cli::commands::{self, InteractArgs, PropagatorArgs, SampleArgs};
use pphi2_cli::config::{FockConfig, InteractionConfig, LatticeConfig, McConfig};
use pphi2_cli::{exit, CliError, Result, RunConfig, Suite};
use pphi2_core::{Method, SpatialSymbol};

/// Thermal P(φ)₂ laboratory: lattice path integrals, the truncated circle
/// Hamiltonian and their cross-checks.
///
/// Exit codes: 0 success, 1 failed checks or numerical failure, 2 invalid
/// configuration or arguments, 3 unwritable output.
#[derive(Parser)]
#[command(name = "pphi2", version)]
struct Cli {
    /// Seed for every random stream (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output location. For `run` and `crosscheck` a `.json` path names the
    /// report and anything else is a directory; other commands write their
    /// files into this directory (default: the current one).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw free-field samples and compare with exact second moments.
    Sample {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Write the first N sampled fields to `fields.bin`.
        #[arg(long, default_value_t = 0)]
        dump: usize,
        /// Write the Fourier multiplier to `kernel.csv` (n, j, multiplier).
        #[arg(long)]
        kernel_dump: bool,
    },
    /// Estimate observables under the interacting measure.
    Interact {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[command(flatten)]
        interaction: InteractionArgs,
        #[command(flatten)]
        mc: McArgs,
        /// Write the first N Gaussian proposals to `fields.bin` and all
        /// log-weights to `weights.csv` (reweighting only).
        #[arg(long, default_value_t = 0)]
        dump: usize,
    },
    /// Low spectrum of the circle Hamiltonian (`spectrum.csv`,
    /// `ground_state.json`).
    Fock {
        #[command(flatten)]
        fock: FockArgs,
    },
    /// Vacuum matrix element of the driven heat-equation propagator.
    Propagator {
        #[command(flatten)]
        fock: FockArgs,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        s: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        t: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        amplitude: f64,
        /// Half-width of the spatial bump carrying the drive.
        #[arg(long, default_value_t = 1.0)]
        width: f64,
    },
    /// Run check suites on the default configuration.
    Crosscheck {
        /// free-identities, full, schwinger, spectrum or criterion-N;
        /// repeatable.
        #[arg(long = "suite", default_value = "full")]
        suites: Vec<Suite>,
        /// Multiplies the Monte Carlo sample counts of the criteria.
        #[arg(long)]
        sample_scale: Option<f64>,
    },
    /// Run a JSON configuration file.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Replaces the suites of the configuration; repeatable.
        #[arg(long = "suite")]
        suites: Vec<Suite>,
    },
}

#[derive(Args)]
struct LatticeArgs {
    #[arg(long)]
    beta: Option<f64>,
    /// Half-length L of the box [-L, L].
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    mass: Option<f64>,
    /// continuum, finite_difference or transfer.
    #[arg(long, value_parser = parse_symbol)]
    symbol: Option<SpatialSymbol>,
}

impl LatticeArgs {
    fn apply(&self, mut c: LatticeConfig) -> LatticeConfig {
        c.beta = self.beta.unwrap_or(c.beta);
        c.length = self.length.unwrap_or(c.length);
        c.nt = self.nt.unwrap_or(c.nt);
        c.nx = self.nx.unwrap_or(c.nx);
        c.mass = self.mass.unwrap_or(c.mass);
        c.symbol = self.symbol.unwrap_or(c.symbol);
        c
    }
}

#[derive(Args)]
struct InteractionArgs {
    /// Polynomial P, e.g. "x^4" or "1*x^4+0.5*x^2".
    #[arg(long)]
    poly: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Spatial cutoff: the interaction acts on [-l, l].
    #[arg(long)]
    l: Option<f64>,
}

impl InteractionArgs {
    fn apply(&self, mut c: InteractionConfig) -> InteractionConfig {
        if let Some(p) = &self.poly {
            c.poly = p.clone();
        }
        c.lambda = self.lambda.unwrap_or(c.lambda);
        c.l = self.l.unwrap_or(c.l);
        c
    }
}

#[derive(Args)]
struct McArgs {
    /// reweight or metropolis.
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
}

impl McArgs {
    fn apply(&self, mut c: McConfig) -> McConfig {
        c.method = self.method.unwrap_or(c.method);
        c.samples = self.samples.unwrap_or(c.samples);
        let m = &mut c.metropolis;
        m.burn_in = self.burn_in.unwrap_or(m.burn_in);
        m.thin = self.thin.unwrap_or(m.thin);
        m.chains = self.chains.unwrap_or(m.chains);
        c
    }
}

#[derive(Args)]
struct FockArgs {
    /// Circle cutoff K: modes |n| <= K.
    #[arg(long)]
    modes: Option<usize>,
    /// Total occupation cap.
    #[arg(long)]
    nmax: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    mass: Option<f64>,
    #[arg(long)]
    poly: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
}

impl FockArgs {
    fn config(&self, seed: Option<u64>) -> RunConfig {
        let mut c = RunConfig::default();
        let d = FockConfig::default();
        c.fock = FockConfig {
            modes: self.modes.unwrap_or(d.modes),
            n_max: self.nmax.unwrap_or(d.n_max),
            levels: self.levels.unwrap_or(d.levels),
        };
        c.lattice.beta = self.beta.unwrap_or(c.lattice.beta);
        c.lattice.mass = self.mass.unwrap_or(c.lattice.mass);
        if let Some(p) = &self.poly {
            c.interaction.poly = p.clone();
        }
        c.interaction.lambda = self.lambda.unwrap_or(c.interaction.lambda);
        c.seed = seed.unwrap_or(c.seed);
        c
    }
}

fn parse_symbol(s: &str) -> std::result::Result<SpatialSymbol, String> {
    serde_json::from_value(Value::String(s.into())).map_err(|_| format!("unknown symbol `{s}`; expected continuum, finite_difference or transfer"))
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    serde_json::from_value(Value::String(s.into())).map_err(|_| format!("unknown method `{s}`; expected reweight or metropolis"))
}

fn print(v: &Value) -> Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout(), "{text}") {
        // A closed reader is not our failure.
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r.map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn finish_report(report: &pphi2_cli::Report) -> Result<()> {
    for s in &report.suites {
        let timing = s.timing.map(|t| format!(" ({:.1} s)", t.seconds)).unwrap_or_default();
        eprintln!("{} {}{timing}", if s.pass { "PASS" } else { "FAIL" }, s.name);
    }
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Failed(report.failing.clone()))
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let save = |name: &str, v: &Value| -> Result<()> {
        if cli.out.is_some() {
            commands::ensure_dir(&dir)?;
            commands::write_json(&dir.join(name), v)?;
        }
        print(v)
    };
    match &cli.cmd {
        Cmd::Sample {
            lattice,
            samples,
            dump,
            kernel_dump,
        } => {
            let args = SampleArgs {
                lattice: lattice.apply(LatticeConfig::default()),
                samples: *samples,
                seed: cli.seed.unwrap_or(RunConfig::default().seed),
                dump: *dump,
                kernel_dump: *kernel_dump,
            };
            save("sample.json", &commands::sample(&args, &dir)?)
        }
        Cmd::Interact { lattice, interaction, mc, dump } => {
            let mut config = RunConfig::default();
            config.lattice = lattice.apply(config.lattice);
            config.interaction = interaction.apply(config.interaction);
            config.mc = mc.apply(config.mc);
            config.seed = cli.seed.unwrap_or(config.seed);
            save("interact.json", &commands::interact(&InteractArgs { config, dump: *dump }, &dir)?)
        }
        Cmd::Fock { fock } => print(&commands::fock(&fock.config(cli.seed), &dir)?),
        Cmd::Propagator {
            fock,
            s,
            t,
            tol,
            amplitude,
            width,
        } => {
            let args = PropagatorArgs {
                config: fock.config(cli.seed),
                s: *s,
                t: *t,
                tol: *tol,
                amplitude: *amplitude,
                width: *width,
            };
            save("propagator.json", &commands::propagator(&args)?)
        }
        Cmd::Crosscheck { suites, sample_scale } => {
            let mut config = RunConfig::default();
            config.suites = suites.clone();
            config.sample_scale = sample_scale.unwrap_or(config.sample_scale);
            config.seed = cli.seed.unwrap_or(config.seed);
            finish_report(&commands::run(&config, cli.out.as_deref())?)
        }
        Cmd::Run { config, suites } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(Path::new(p))?,
                None => RunConfig::default(),
            };
            if !suites.is_empty() {
                cfg.suites = suites.clone();
            }
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            finish_report(&commands::run(&cfg, cli.out.as_deref())?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(exit::CONFIG as u8);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Failed(list) = &e {
                for f in list {
                    eprintln!("  failed: {f}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
