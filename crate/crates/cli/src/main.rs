use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amod::demand::ScenarioFile;
use amod::harness::{compare, emit, run, Controller, ExperimentConfig};
use amod::network::{check_strong_connectivity, complete, partition_zones, read_network, WeightedPoint};
use amod::reference::{solve_reference, CostKind};
use amod::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "amod", version, about = "Fleet rebalancing simulator and controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Cost {
    Linear,
    Quadratic,
}

impl From<Cost> for CostKind {
    fn from(c: Cost) -> Self {
        match c {
            Cost::Linear => CostKind::Linear,
            Cost::Quadratic => CostKind::Quadratic,
        }
    }
}

/// Overrides applied on top of a config file.
#[derive(Args, Debug, Clone)]
struct Overrides {
    /// Derives all three seeds from one value.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    step_minutes: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    fleet: Option<u32>,
    #[arg(long)]
    perturb: Option<f64>,
}

impl Overrides {
    fn apply(&self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        if let Some(s) = self.seed {
            cfg = cfg.with_seed(s);
        }
        if let Some(v) = self.step_minutes {
            cfg.step_minutes = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.fleet {
            cfg.fleet = v;
        }
        if let Some(v) = self.perturb {
            cfg.perturbation = v;
        }
        cfg
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one closed-loop experiment and write its report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        controller: Option<Controller>,
        #[command(flatten)]
        overrides: Overrides,
        /// Format of the summary printed to stdout.
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Solve the equilibrium reference for one set of rates.
    Reference {
        #[arg(long)]
        network: PathBuf,
        /// Demand file; the rates of `--block` are used.
        #[arg(long, conflicts_with = "rates")]
        demand: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        block: usize,
        /// CSV matrix of requests per hour, row = origin, column = destination.
        #[arg(long)]
        rates: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "linear")]
        cost: Cost,
        #[arg(long, default_value_t = 2.0)]
        step_minutes: f64,
        /// Fleet size used for the idle-vehicle split; defaults to the minimum fleet.
        #[arg(long)]
        fleet: Option<f64>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Run configs that differ only in the controller on a shared arrival stream.
    Compare {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        /// Comma-separated controllers; each one is run with the first config.
        #[arg(long, value_delimiter = ',')]
        controller: Vec<Controller>,
        #[command(flatten)]
        overrides: Overrides,
        /// Directory for `comparison.csv` and `comparison.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Group weighted points into zones with k-means.
    Partition {
        /// CSV with columns x, y and optionally weight.
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Check that a network file parses and is strongly connected.
    Validate {
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        step_minutes: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", envelope("usage", first));
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", envelope(e.kind(), &e.to_string()));
            ExitCode::from(1)
        }
    }
}

fn envelope(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            config,
            out,
            controller,
            overrides,
            format,
        } => {
            let mut cfg = overrides.apply(ExperimentConfig::read(&config)?);
            if let Some(c) = controller {
                cfg.controller = c;
            }
            let report = run(&cfg)?;
            emit(&report, &out)?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report.summary)?),
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    w.serialize(&report.summary)?;
                    w.flush()?;
                }
            }
            Ok(())
        }
        Command::Reference {
            network,
            demand,
            block,
            rates,
            cost,
            step_minutes,
            fleet,
            format,
        } => {
            let net = complete(&read_network(&network)?, step_minutes)?;
            let lambda = match (demand, rates) {
                (Some(path), None) => {
                    let scenario = ScenarioFile::read(&path)?.to_scenario(step_minutes, 0)?;
                    let blocks = scenario.blocks();
                    blocks
                        .get(block)
                        .ok_or_else(|| Error::Config(format!("block {block} out of range, the file has {}", blocks.len())))?
                        .rates
                        .clone()
                }
                (None, Some(path)) => read_rate_matrix(&path, net.zone_count(), step_minutes)?,
                _ => return Err(Error::Config("pass one of --demand or --rates".into())),
            };
            let first = solve_reference(&net, &lambda, cost.into(), 0.0)?;
            let reference = match fleet {
                Some(m) => solve_reference(&net, &lambda, cost.into(), m)?,
                None => solve_reference(&net, &lambda, cost.into(), first.m_min)?,
            };
            match format {
                Format::Json => println!("{}", reference.to_json()?),
                Format::Csv => {
                    println!("# m_min = {} fleet = {} cost = {}", reference.m_min, reference.fleet, reference.cost);
                    let ids = net.zone_ids();
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    w.write_record(["origin", "destination", "lambda", "r_bar", "f_bar"])?;
                    for (k, &(r, s)) in net.links().iter().enumerate() {
                        w.write_record([
                            ids[r].to_string(),
                            ids[s].to_string(),
                            reference.lambda[k].to_string(),
                            reference.r_bar[k].to_string(),
                            reference.f_bar[k].to_string(),
                        ])?;
                    }
                    w.flush()?;
                }
            }
            Ok(())
        }
        Command::Compare {
            configs,
            controller,
            overrides,
            out,
            format,
        } => {
            let mut loaded = configs
                .iter()
                .map(|p| ExperimentConfig::read(p).map(|c| overrides.apply(c)))
                .collect::<Result<Vec<_>>>()?;
            if !controller.is_empty() {
                let base = loaded[0].clone();
                loaded = controller
                    .iter()
                    .map(|&c| ExperimentConfig {
                        controller: c,
                        ..base.clone()
                    })
                    .collect();
            }
            let seed = loaded[0].seeds.demand;
            let table = compare(&loaded, Some(seed))?;
            let csv_text = table.to_csv()?;
            let json_text = serde_json::to_string_pretty(&table)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("comparison.csv"), &csv_text)?;
                std::fs::write(dir.join("comparison.json"), format!("{json_text}\n"))?;
            }
            match format {
                Format::Csv => print!("{csv_text}"),
                Format::Json => println!("{json_text}"),
            }
            Ok(())
        }
        Command::Partition {
            points,
            k,
            seed,
            max_iters,
            format,
        } => {
            let pts = read_points(&points)?;
            let p = partition_zones(&pts, k, max_iters, seed)?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&p)?),
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    w.write_record(["x", "y", "weight", "zone"])?;
                    for (pt, z) in pts.iter().zip(&p.assignment) {
                        w.write_record([pt.x.to_string(), pt.y.to_string(), pt.weight.to_string(), z.to_string()])?;
                    }
                    w.flush()?;
                }
            }
            Ok(())
        }
        Command::Validate { network, step_minutes } => {
            let road = read_network(&network)?;
            let connected = check_strong_connectivity(&road);
            println!("strongly connected: {connected}");
            // Fails with the disconnected pair when not connected.
            let net = complete(&road, step_minutes)?;
            println!("zones: {}", net.zone_count());
            println!("links: {}", net.link_count());
            Ok(())
        }
    }
}

fn read_rate_matrix(path: &Path, n: usize, step_minutes: f64) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    message: format!("{f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Parse {
            path: path.display().to_string(),
            message: format!("expected a {n}x{n} matrix"),
        });
    }
    let mut lambda = Vec::with_capacity(n * (n - 1));
    for (r, row) in rows.iter().enumerate() {
        for (s, &v) in row.iter().enumerate() {
            if r != s {
                lambda.push(v * step_minutes / 60.0);
            }
        }
    }
    Ok(lambda)
}

fn read_points(path: &Path) -> Result<Vec<WeightedPoint>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut pts = Vec::new();
    for rec in reader.deserialize() {
        pts.push(rec?);
    }
    Ok(pts)
}
