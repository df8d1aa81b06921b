use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dualpolicy::experiment::{
    evaluate_run_dir, overlay_toml, run_ablation, run_many, run_regret, scripted_corpus, RegretRunConfig, RunConfig,
    Scenario,
};
use dualpolicy::ontology::{build_cooccurrence, load_corpus};
use dualpolicy::{Error, Result};

#[derive(Parser)]
#[command(name = "dualpolicy", version, about = "Fast/slow dialog policy experiments")]
struct Cli {
    /// Output root. Runs land in <out>/<scenario>/<mode>/seed-<n>.
    #[arg(long, global = true, env = "DUALPOLICY_OUT", default_value = "runs")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per seed.
    Train(RunArgs),
    /// Re-evaluate finished runs from their saved files.
    Evaluate(RunArgs),
    /// Every controller variant on every seed, plus a summary table.
    Ablate(RunArgs),
    /// Regret of the count explorer and the uniform baseline on a synthetic bandit.
    Regret(RegretArgs),
    /// Slot co-occurrence matrix from a corpus file or scripted rollouts.
    BuildCooccurrence(CooccurrenceArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file; its keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    episodes_per_epoch: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// full, no_EC, no_CC, random_p or s1_only.
    #[arg(long)]
    mode: Option<String>,
    /// tabular, scripted or tcp://host:port.
    #[arg(long)]
    s1_backend: Option<String>,
    /// planner or tcp://host:port.
    #[arg(long)]
    s2_backend: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    bins: Option<u32>,
    #[arg(long)]
    random_p: Option<f64>,
    #[arg(long)]
    distill_period: Option<usize>,
    #[arg(long)]
    distill_step: Option<f64>,
    #[arg(long)]
    buffer_capacity: Option<usize>,
    /// avg_pairwise or max_unfilled.
    #[arg(long)]
    dependency: Option<String>,
    #[arg(long)]
    p_noise: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    corpus_episodes: Option<usize>,
    #[arg(long)]
    no_episode_logs: bool,
}

#[derive(Args)]
struct RegretArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    arms: Option<usize>,
    #[arg(long)]
    lipschitz: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    walk_step: Option<f64>,
    #[arg(long)]
    bins: Option<u32>,
    #[arg(long)]
    bonus_scale: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    fit_min: Option<usize>,
    #[arg(long)]
    fit_max: Option<usize>,
    #[arg(long)]
    trace_stride: Option<usize>,
}

#[derive(Args)]
struct CooccurrenceArgs {
    #[arg(long, default_value = "restaurant")]
    scenario: String,
    /// Line-delimited corpus; without one, scripted rollouts are used.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; defaults to <out>/cooccurrence-<scenario>.tsv.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

impl RunArgs {
    fn into_config(self, out: &Path) -> Result<RunConfig> {
        let mut c = RunConfig {
            out_dir: Some(out.to_path_buf()),
            ..RunConfig::default()
        };
        if let Some(s) = &self.scenario {
            c.scenario = s.parse()?;
        }
        if let Some(m) = &self.mode {
            c.mode = m.parse()?;
        }
        if let Some(d) = &self.dependency {
            c.dependency = d.parse()?;
        }
        set(&mut c.epochs, self.epochs);
        set(&mut c.episodes_per_epoch, self.episodes_per_epoch);
        set(&mut c.eval_episodes, self.eval_episodes);
        set(&mut c.eval_every, self.eval_every);
        set(&mut c.seeds, self.seeds);
        set(&mut c.s1_backend, self.s1_backend);
        set(&mut c.s2_backend, self.s2_backend);
        set(&mut c.tau, self.tau);
        set(&mut c.kappa, self.kappa);
        set(&mut c.bins, self.bins);
        set(&mut c.random_p, self.random_p);
        set(&mut c.distill_period, self.distill_period);
        set(&mut c.distill_step, self.distill_step);
        set(&mut c.buffer_capacity, self.buffer_capacity);
        set(&mut c.p_noise, self.p_noise);
        set(&mut c.gamma, self.gamma);
        set(&mut c.corpus_episodes, self.corpus_episodes);
        if self.corpus.is_some() {
            c.corpus = self.corpus;
        }
        if self.no_episode_logs {
            c.log_episodes = false;
        }
        if let Some(path) = &self.config {
            c = overlay_toml(&c, &read_file(path)?)?;
        }
        c.validate()?;
        Ok(c)
    }
}

impl RegretArgs {
    fn into_config(self, out: &Path) -> Result<RegretRunConfig> {
        let mut c = RegretRunConfig {
            out_dir: Some(out.join("regret")),
            ..RegretRunConfig::default()
        };
        set(&mut c.arms, self.arms);
        set(&mut c.lipschitz, self.lipschitz);
        set(&mut c.noise, self.noise);
        set(&mut c.walk_step, self.walk_step);
        set(&mut c.bins, self.bins);
        set(&mut c.bonus_scale, self.bonus_scale);
        set(&mut c.horizon, self.horizon);
        set(&mut c.seeds, self.seeds);
        set(&mut c.fit_min, self.fit_min);
        set(&mut c.fit_max, self.fit_max);
        set(&mut c.trace_stride, self.trace_stride);
        if let Some(path) = &self.config {
            c = overlay_toml(&c, &read_file(path)?)?;
        }
        c.validate()?;
        Ok(c)
    }
}

fn train(config: &RunConfig) -> Result<()> {
    let jobs: Vec<(RunConfig, u64)> = config.seeds.iter().map(|&s| (config.clone(), s)).collect();
    let results = run_many(&jobs)?;
    println!("seed\tsuccess\tinform\tbook\tturns\ts2_rate");
    for r in results {
        let e = &r.summary.final_eval;
        println!(
            "{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.3}",
            r.seed, e.success, e.inform, e.book, e.avg_turns, r.summary.s2_rate
        );
    }
    Ok(())
}

fn evaluate(config: &RunConfig) -> Result<()> {
    let root = config.out_dir.clone().unwrap_or_default();
    for &seed in &config.seeds {
        let dir = config.run_dir(&root, seed);
        let e = evaluate_run_dir(config, seed, &dir)?;
        let text = serde_json::to_string(&e).expect("evaluation serializes");
        std::fs::write(dir.join("evaluation.json"), format!("{text}\n")).map_err(|err| Error::Io {
            path: dir.join("evaluation.json"),
            source: err,
        })?;
        println!("{text}");
    }
    Ok(())
}

fn ablate(config: &RunConfig) -> Result<()> {
    let table = run_ablation(config)?;
    print!("{}", table.to_tsv());
    Ok(())
}

fn regret(config: &RegretRunConfig) -> Result<()> {
    let report = run_regret(config)?;
    println!("seed\texplorer_slope\tuniform_slope\texplorer_regret\tuniform_regret");
    for s in &report.seeds {
        println!(
            "{}\t{:.3}\t{:.3}\t{:.1}\t{:.1}",
            s.seed, s.explorer_slope, s.uniform_slope, s.explorer_regret, s.uniform_regret
        );
    }
    Ok(())
}

fn cooccurrence(args: CooccurrenceArgs, out: &Path) -> Result<()> {
    let scenario: Scenario = args.scenario.parse()?;
    let ontology = scenario.ontology()?;
    let turns = match &args.corpus {
        Some(path) => load_corpus(path, &ontology)?,
        None => scripted_corpus(scenario, args.episodes, args.seed)?,
    };
    let matrix = build_cooccurrence(&turns, &ontology);
    let path = args
        .output
        .unwrap_or_else(|| out.join(format!("cooccurrence-{}.tsv", scenario.as_str())));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(&path, matrix.to_tsv()).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    println!("{} turns, {} slots -> {}", turns.len(), matrix.len(), path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out;
    match cli.command {
        Command::Train(a) => train(&a.into_config(&out)?),
        Command::Evaluate(a) => evaluate(&a.into_config(&out)?),
        Command::Ablate(a) => ablate(&a.into_config(&out)?),
        Command::Regret(a) => regret(&a.into_config(&out)?),
        Command::BuildCooccurrence(a) => cooccurrence(a, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
