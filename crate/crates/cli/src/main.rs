//! `cape`: headless experiments, effect-graph preparation and the
//! interactive server.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use cape_core::data::load_interventional_csv;
use cape_core::io::save_binary_graph;
use cape_core::metrics::MetricsRow;
use cape_core::oracle::{build_effect_graph, EffectGraphParams};
use cape_core::Policy;
use cape_session::server::{serve, spawn};
use cape_session::{OracleSpec, RoundRecord, Session, SessionConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cape", version, about = "Expert-in-the-loop Bayesian causal discovery")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run sessions against a simulated oracle, one per seed.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Number of consecutive seeds starting at the config seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Continue from a checkpoint instead of starting fresh.
        #[arg(long, conflicts_with = "seeds")]
        resume: Option<PathBuf>,
    },
    /// Run matched-seed sessions for several policies from shared priors.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Comma-separated policies (eig, unc, rnd, ste).
        #[arg(long, value_delimiter = ',', default_value = "eig,rnd")]
        policies: Vec<Policy>,
    },
    /// Build a perturbation effect graph from an interventional CSV.
    PrepareEffectGraph {
        /// CSV with a `perturbation` column; `control` marks unperturbed rows.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        top_variance: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.3)]
        min_effect: f64,
        #[arg(long, default_value_t = 25)]
        min_group_n: usize,
    },
    /// Serve a session over HTTP for the elicitation UI.
    Serve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Serve the API only.
        #[arg(long)]
        no_ui: bool,
        /// Directory of built UI assets.
        #[arg(long, default_value = "ui/dist")]
        ui_dir: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    policy: Option<Policy>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<SessionConfig> {
        let path = self.config.as_ref().context("--config is required")?;
        let mut cfg =
            SessionConfig::load(path).with_context(|| format!("reading config {}", path.display()))?;
        if let Some(p) = self.policy {
            cfg.policy = p;
        }
        if let Some(t) = self.rounds {
            cfg.rounds = t;
        }
        if let Some(s) = self.particles {
            cfg.particles = s;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.out_dir {
            cfg.output.dir = Some(d.clone());
        }
        cfg.validate().context("invalid config after overrides")?;
        Ok(cfg)
    }

    /// Config for a headless run, which cannot wait on a person.
    fn headless_config(&self) -> Result<SessionConfig> {
        let cfg = self.config()?;
        if matches!(cfg.oracle, OracleSpec::Human { .. }) {
            bail!("a human oracle needs `cape serve`");
        }
        Ok(cfg)
    }

    fn out_root(cfg: &SessionConfig) -> PathBuf {
        cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("runs"))
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CAPE_LOG_LEVEL", "info"))
        .format_timestamp_secs()
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate { run, seeds, resume } => match resume {
            Some(cp) => {
                let mut s = Session::resume(&cp).with_context(|| format!("resuming {}", cp.display()))?;
                if matches!(s.config().oracle, OracleSpec::Human { .. }) {
                    bail!("a human oracle needs `cape serve --resume`");
                }
                s.run()?;
                report(&s);
                Ok(())
            }
            None => simulate(&run, seeds),
        },
        Cmd::Compare { run, seeds, policies } => compare(&run, seeds, &policies),
        Cmd::PrepareEffectGraph { data, out, top_variance, alpha, min_effect, min_group_n } => {
            prepare_effect_graph(&data, &out, top_variance, EffectGraphParams { alpha, min_effect, min_group_n })
        }
        Cmd::Serve { run, bind, no_ui, ui_dir, resume } => {
            let session = match resume {
                Some(cp) => Session::resume(&cp)?,
                None => Session::new(run.config()?)?,
            };
            let ui = if no_ui {
                None
            } else if ui_dir.is_dir() {
                Some(ui_dir)
            } else {
                log::warn!("UI directory {} not found; serving the API only", ui_dir.display());
                None
            };
            let rt = tokio::runtime::Runtime::new()?;
            let handle = spawn(session, Duration::from_millis(200));
            let s = rt.block_on(serve(handle, bind, ui))?;
            log::info!("stopped at round {} ({})", s.round(), s.status().as_str());
            Ok(())
        }
    }
}

fn report(s: &Session) {
    let m = s.records().last().map(|r| r.metrics);
    match m {
        Some(m) => println!(
            "seed {} policy {}: {} after {} rounds; entropy {:.4} etcp {:.4} shd {:.3}",
            s.config().seed,
            s.config().policy,
            s.status().as_str(),
            s.round(),
            m.entropy,
            m.etcp,
            m.shd
        ),
        None => println!("seed {}: {} with no rounds", s.config().seed, s.status().as_str()),
    }
}

fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed_{seed}"))
}

fn simulate(args: &RunArgs, seeds: u64) -> Result<()> {
    let base = args.headless_config()?;
    let root = RunArgs::out_root(&base);
    let mut runs = Vec::new();
    for k in 0..seeds {
        let mut cfg = base.clone();
        cfg.seed = base.seed + k;
        cfg.output.dir = Some(seed_dir(&root, cfg.seed));
        let mut s = Session::new(cfg)?;
        s.run()?;
        report(&s);
        runs.push(s.records().to_vec());
    }
    let path = root.join("aggregate.csv");
    write_aggregate(&path, &runs)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Per-round mean and sample standard deviation across seeds.
fn write_aggregate(path: &Path, runs: &[Vec<RoundRecord>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["round".to_string(), "n_seeds".to_string()];
    for m in MetricsRow::NAMES {
        head.push(format!("{m}_mean"));
        head.push(format!("{m}_std"));
    }
    w.write_record(&head)?;
    let rounds = runs.iter().map(Vec::len).max().unwrap_or(0);
    for t in 0..rounds {
        let rows: Vec<[f64; 9]> = runs.iter().filter_map(|r| r.get(t)).map(|r| r.metrics.values()).collect();
        let mut line = vec![(t + 1).to_string(), rows.len().to_string()];
        for k in 0..9 {
            let v: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            line.push(mean.to_string());
            line.push(sd.to_string());
        }
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}

fn compare(args: &RunArgs, seeds: u64, policies: &[Policy]) -> Result<()> {
    if policies.len() < 2 {
        bail!("compare needs at least two policies");
    }
    let base = args.headless_config()?;
    let root = RunArgs::out_root(&base);
    std::fs::create_dir_all(&root)?;
    let path = root.join("compare.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["policy", "seed", "round", "metric", "value"])?;
    for k in 0..seeds {
        let seed = base.seed + k;
        // one prior per seed, shared by every policy
        let mut cfg0 = base.clone();
        cfg0.seed = seed;
        cfg0.output.dir = None;
        let prior = Session::new(cfg0)?.particles().clone();
        let mut hash: Option<String> = None;
        for &policy in policies {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.policy = policy;
            cfg.output.dir = Some(root.join(policy.as_str()).join(format!("seed_{seed}")));
            let mut s = Session::from_particles(cfg, prior.clone())?;
            match &hash {
                None => hash = Some(s.prior_hash().to_string()),
                Some(h) if h != s.prior_hash() => bail!("seed {seed}: policy {policy} started from a different prior"),
                Some(_) => {}
            }
            s.run()?;
            report(&s);
            for r in s.records() {
                for (name, v) in MetricsRow::NAMES.iter().zip(r.metrics.values()) {
                    w.write_record([policy.as_str(), &seed.to_string(), &r.round.to_string(), name, &v.to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn prepare_effect_graph(data: &Path, out: &Path, top_variance: Option<usize>, params: EffectGraphParams) -> Result<()> {
    let mut x = load_interventional_csv(data).with_context(|| format!("reading {}", data.display()))?;
    if let Some(k) = top_variance {
        x = x.select_columns(&x.control.top_variance_columns(k));
    }
    let built = build_effect_graph(&x, &params)?;
    save_binary_graph(&built.graph, out)?;
    let k = built.graph.d();
    let edges = built.graph.edge_count();
    let density = if k > 1 { edges as f64 / (k * (k - 1)) as f64 } else { 0.0 };
    println!("nodes {k}");
    println!("edges {edges}");
    println!("density {edges}/({k}*{}) = {density:.4}", k.saturating_sub(1));
    println!("ambiguous pairs {}", built.graph.ambiguous_pairs().len());
    println!("tests {}", built.tests.len());
    if !built.dropped.is_empty() {
        println!("dropped groups {}", built.dropped.len());
    }
    println!("wrote {}", out.display());
    Ok(())
}
