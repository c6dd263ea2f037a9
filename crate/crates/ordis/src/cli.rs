//! `ordis` command line.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data or
//! integrity error, 3 numeric failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ordis_core::experiments::{
    ablation_variants, comparison_variants, no_adversarial_control, sequence_strips, strips_csv, strips_svg, Table,
    Variant,
};
use ordis_core::gradcheck::randomized_suite;
use ordis_core::metrics::{format_percent, metrics, MetricsReport};
use ordis_core::seqgen::{generate, Dataset, Split};
use ordis_core::trainer::{evaluate_split, train, Method, TrainConfig};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::dataset_io;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::run::train_run;

#[derive(Debug, Parser)]
#[command(name = "ordis", version, about = "Order-guided disentangled sequence classification")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Train one model and write a run directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Override the configured method.
        #[arg(long)]
        method: Option<String>,
    },
    /// Score a checkpoint on one split of a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Method comparison table.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Ablation table plus the no-adversarial control.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Per-sequence label strips with and without the ordinal term.
    Strips {
        #[command(flatten)]
        common: Common,
        /// Sequence ids; defaults to the first three test sequences.
        #[arg(long, value_delimiter = ',')]
        sequences: Vec<u32>,
    },
    /// Randomized finite-difference check of the loss gradients.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory; generated from the configuration when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Data seed for `gen`, training seed otherwise.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated training seeds for grid commands.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn dataset(&self, cfg: &RunConfig) -> Result<Dataset> {
        match &self.data {
            Some(dir) => dataset_io::load(dir),
            None => Ok(generate(&cfg.generator(), cfg.data_seed)?),
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(Error::io(path))
}

fn create(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))
}

fn report_lines(report: &MetricsReport) -> String {
    let mut s = String::new();
    for (name, v) in MetricsReport::COLUMNS.iter().zip(report.values()) {
        let _ = writeln!(s, "{name:<12} {}", format_percent(v));
    }
    s
}

/// Validation accuracy and probe columns of a grid table.
fn probe_csv(table: &Table) -> String {
    let mut s = String::from("method,R,val_accuracy,val_accuracy_std,probe,probe_std\n");
    let f = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.name,
            r.labeled_ratio,
            f(r.val_accuracy.mean),
            f(r.val_accuracy.std),
            f(r.probe.mean),
            f(r.probe.std)
        );
    }
    s
}

fn run_grid(common: &Common, stem: &str, build: impl Fn(&TrainConfig, f64) -> Vec<Variant>) -> Result<Table> {
    let cfg = common.config()?;
    let dataset = common.dataset(&cfg)?;
    let base = cfg.train()?;
    let variants = build(&base, dataset.manifest.labeled_ratio);
    let grid = Grid::new(cfg.workers)?;
    let table = grid.run(&dataset, &cfg.network(), &variants, &cfg.seeds)?;
    create(&common.out)?;
    write(&common.out.join(format!("{stem}.csv")), &table.to_csv())?;
    write(&common.out.join(format!("{stem}.txt")), &table.render())?;
    write(&common.out.join(format!("{stem}_probe.csv")), &probe_csv(&table))?;
    write(&common.out.join("config.toml"), &cfg.to_toml())?;
    print!("{}", table.render());
    Ok(table)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Gen { common } => {
            let mut cfg = common.config()?;
            if let Some(s) = common.seed {
                cfg.data_seed = s;
            }
            let dataset = generate(&cfg.generator(), cfg.data_seed)?;
            dataset_io::save(&dataset, &common.out)?;
            println!(
                "{} sequences, {} records, records hash {}",
                dataset.manifest.n_sequences(),
                dataset.manifest.record_count(),
                dataset.manifest.records_hash
            );
        }
        Command::Train { common, method } => {
            let mut cfg = common.config()?;
            if let Some(m) = method {
                cfg.method = m;
            }
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let dataset = common.dataset(&cfg)?;
            let summary = train_run(&cfg, &dataset, &common.out)?;
            match summary.result.selected_epoch {
                Some(e) => println!("selected epoch {e}"),
                None => println!("no epoch selected"),
            }
            print!("{}", report_lines(&summary.test));
        }
        Command::Eval { data, checkpoint: ckpt, split } => {
            let split = Split::parse(&split).ok_or_else(|| Error::Usage(format!("unknown split `{split}`")))?;
            let dataset = dataset_io::load(&data)?;
            let params = checkpoint::load(&ckpt)?;
            print!("{}", report_lines(&metrics(&evaluate_split(&params, &dataset, split)?)));
        }
        Command::Compare { common } => {
            run_grid(&common, "compare", comparison_variants)?;
        }
        Command::Ablate { common } => {
            run_grid(&common, "ablation", |base, ratio| {
                let mut v = ablation_variants(base, ratio);
                v.push(no_adversarial_control(base, ratio));
                v
            })?;
        }
        Command::Strips { common, sequences } => {
            let mut cfg = common.config()?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            let dataset = common.dataset(&cfg)?;
            let net = cfg.network();
            let base = cfg.train()?;
            let with = train(&dataset, &net, &TrainConfig { method: Method::Proposed, ..base.clone() })?;
            let without = train(&dataset, &net, &TrainConfig { method: Method::ProposedNoOrder, ..base })?;
            let ids = if sequences.is_empty() {
                dataset.sequences_in(Split::Test).into_iter().take(3).collect()
            } else {
                sequences
            };
            let strips = sequence_strips(&dataset, &with.params, &without.params, &ids)?;
            create(&common.out)?;
            write(&common.out.join("strips.csv"), &strips_csv(&strips))?;
            write(&common.out.join("strips.svg"), &strips_svg(&strips))?;
            println!("{} strips written to {}", strips.len(), common.out.display());
        }
        Command::Gradcheck { n, seed, h, tol } => {
            let r = randomized_suite(n, seed, h)?;
            println!(
                "{} configs, {} entries, max relative error {:.3e} ({} adversarial, {} ordinal, {} discriminator)",
                r.configs, r.entries_checked, r.max_rel_error, r.with_adversarial, r.with_order, r.discriminator_steps
            );
            if !(r.max_rel_error < tol) {
                return Err(Error::GradCheck(r.max_rel_error));
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
