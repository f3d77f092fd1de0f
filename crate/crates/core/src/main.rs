use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use matchbandit::experiment::{reproduce, run_experiment, ExperimentConfig, Figure, REPRODUCE_SEED};
use matchbandit::market::{
    decompose_detailed, deferred_acceptance, is_alpha_reducible_bruteforce, make_benchmark, super_optimal_set,
    Market, Matching, ProposingSide,
};
use matchbandit::market_file::read_market;
use matchbandit::oracle::{run_suite, Suite};
use matchbandit::Result;

#[derive(Parser)]
#[command(name = "matchbandit", version, about = "Bandit learning in two-sided matching markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded replications and write runs.csv, aggregate.csv and summary.json.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Inspect a market file.
    Market {
        #[command(subcommand)]
        command: MarketCommand,
    },
    /// Run an oracle suite: md, estimator, da or alpha.
    Oracle {
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Regenerate the four panels of fig1 (S1 markets) or fig2 (S2 markets).
    Reproduce {
        figure: Figure,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Market seeds are `seed` and `seed + 1`.
        #[arg(long, default_value_t = REPRODUCE_SEED)]
        seed: u64,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Subcommand)]
enum MarketCommand {
    /// Stable matchings, α-reducibility and decomposition of a market.
    Check { file: PathBuf },
}

/// One flag per config key; each overrides the config file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    setting: Option<String>,
    #[arg(long)]
    n_agents: Option<String>,
    #[arg(long)]
    n_firms: Option<String>,
    #[arg(long)]
    market_seed: Option<String>,
    #[arg(long)]
    market_file: Option<String>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
    #[arg(long)]
    replications: Option<String>,
    #[arg(long)]
    master_seed: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    lambda_bar: Option<String>,
    #[arg(long)]
    noise_std: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    grid_size: Option<String>,
    #[arg(long)]
    tail_len: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    ts_variance: Option<String>,
    #[arg(long)]
    tie_break: Option<String>,
    #[arg(long)]
    fallback_pull_update: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> [(&'static str, &Option<String>); 19] {
        [
            ("setting", &self.setting),
            ("n_agents", &self.n_agents),
            ("n_firms", &self.n_firms),
            ("market_seed", &self.market_seed),
            ("market_file", &self.market_file),
            ("policy", &self.policy),
            ("horizon", &self.horizon),
            ("replications", &self.replications),
            ("master_seed", &self.master_seed),
            ("eta", &self.eta),
            ("lambda_bar", &self.lambda_bar),
            ("noise_std", &self.noise_std),
            ("output_dir", &self.output_dir),
            ("grid_size", &self.grid_size),
            ("tail_len", &self.tail_len),
            ("workers", &self.workers),
            ("ts_variance", &self.ts_variance),
            ("tie_break", &self.tie_break),
            ("fallback_pull_update", &self.fallback_pull_update),
        ]
    }

    fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        for (key, value) in self.pairs() {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        Ok(())
    }
}

fn load_config(path: Option<&PathBuf>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    overrides.apply(&mut config)?;
    config.validate()?;
    Ok(config)
}

fn show_matching(m: &Matching) -> String {
    m.assign()
        .iter()
        .enumerate()
        .map(|(a, f)| match f {
            Some(f) => format!("a{a}-f{f}"),
            None => format!("a{a}-none"),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn market_report(market: &Market) -> Result<String> {
    let brute = is_alpha_reducible_bruteforce(market)?;
    let agent_da = deferred_acceptance(market, ProposingSide::Agents);
    let firm_da = deferred_acceptance(market, ProposingSide::Firms);
    let decomposition = decompose_detailed(market);

    let mut out = format!("market: {} agents, {} firms\n", market.n_agents(), market.n_firms());
    out += &format!("agent-proposing DA: {}\n", show_matching(&agent_da));
    out += &format!("firm-proposing DA:  {}\n", show_matching(&firm_da));
    out += &format!(
        "unique stable matching: {}\n",
        if agent_da == firm_da { "yes" } else { "no" }
    );
    let verdict = if brute { "yes" } else { "no" };
    match &decomposition {
        Ok(d) if brute => out += &format!("α-reducible: yes; levels: {}\n", d.levels.len()),
        Ok(d) => out += &format!("α-reducible: no; decomposition: succeeds with {} levels\n", d.levels.len()),
        Err(e) => out += &format!("α-reducible: {verdict}; decomposition: fails at level {}\n", e.level),
    }
    if let Ok(d) = &decomposition {
        for (i, level) in d.levels.iter().enumerate() {
            let pairs: Vec<String> = level.pairs.iter().map(|(a, f)| format!("a{a}-f{f}")).collect();
            out += &format!("level {i}: {}\n", pairs.join(" "));
        }
        let benchmark = make_benchmark(market)?;
        for a in 0..market.n_agents() {
            let set = super_optimal_set(&benchmark, d, a)?;
            let firms: Vec<String> = set.iter().map(|f| format!("f{f}")).collect();
            out += &format!("super-optimal firms of a{a}: {{{}}}\n", firms.join(", "));
        }
    }
    Ok(out)
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, overrides } => {
            let config = load_config(config.as_ref(), &overrides)?;
            let result = run_experiment(&config)?;
            let rates = result.aggregate.mean_tail_stable_rate();
            println!(
                "{} runs written to {} in {:.2}s",
                result.runs.len(),
                config.output_dir.display(),
                result.wall_clock_secs
            );
            for (a, r) in rates.iter().enumerate() {
                println!("agent {a}: tail stable-match rate {r:.4}");
            }
            Ok(true)
        }
        Command::Market {
            command: MarketCommand::Check { file },
        } => {
            print!("{}", market_report(&read_market(&file)?)?);
            Ok(true)
        }
        Command::Oracle { suite, seed } => {
            let report = run_suite(suite, seed);
            println!("{report}");
            Ok(report.passed())
        }
        Command::Reproduce {
            figure,
            config,
            seed,
            overrides,
        } => {
            let mut base = load_config(config.as_ref(), &overrides)?;
            if overrides.output_dir.is_none() && config.is_none() {
                base.output_dir = PathBuf::from(match figure {
                    Figure::Fig1 => "fig1",
                    Figure::Fig2 => "fig2",
                });
            }
            for (name, result) in reproduce(figure, seed, &base)? {
                let rates = result.aggregate.mean_tail_stable_rate();
                let shown: Vec<String> = rates.iter().map(|r| format!("{r:.3}")).collect();
                println!("{name}: tail stable-match rates [{}]", shown.join(", "));
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
