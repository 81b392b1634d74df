use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use autoaug::config::parse_config;
use autoaug::cost::{paper_preset, render_table, CostRow};
use autoaug::data::{load_cifar10, read_records, RecordShape, SplitTag};
use autoaug::engine::run_search;
use autoaug::learner::{load_checkpoint, save_checkpoint};
use autoaug::policy::{read_theta_csv, write_marginal_csv, write_probabilities_csv, write_theta_csv};

/// Online augmentation policy search.
#[derive(Parser)]
#[command(name = "autoaug", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a policy search described by a config file.
    Search {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress per-step progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Report the accuracy of a checkpoint on a labelled record file or a
    /// CIFAR-10 directory (its test batch is used).
    Eval { checkpoint: PathBuf, dataset: PathBuf },
    /// Print the search-cost comparison table.
    Cost {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Custom row `method,dataset,models,images,epochs`; repeatable.
        #[arg(long = "row", value_name = "ROW")]
        rows: Vec<String>,
    },
    /// Write operation probabilities and first-element marginals from a
    /// logit snapshot.
    ExportDist {
        snapshot: PathBuf,
        /// Output directory; defaults to the snapshot's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Paper,
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

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Search { config, out, quiet } => cmd_search(&config, out, quiet),
        Command::Eval {
            checkpoint,
            dataset,
        } => cmd_eval(&checkpoint, &dataset),
        Command::Cost { preset, rows } => cmd_cost(preset, &rows),
        Command::ExportDist { snapshot, out } => cmd_export_dist(&snapshot, out),
    }
}

fn cmd_search(config: &Path, out: Option<PathBuf>, quiet: bool) -> Result<()> {
    let mut cfg = parse_config(config)?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.resolved.toml"), cfg.render_resolved())?;
    let snapshots = cfg.export_snapshots.then(|| dir.join("snapshots"));
    if let Some(s) = &snapshots {
        fs::create_dir_all(s)?;
    }
    let metrics_path = dir.join("metrics.jsonl");
    let mut metrics = BufWriter::new(File::create(&metrics_path)?);
    let outcome = run_search(cfg, |search, record| {
        let written = writeln!(metrics, "{}", record.to_json_line()).and_then(|_| metrics.flush());
        written.map_err(|e| autoaug::Error::Io {
            path: metrics_path.clone(),
            source: e,
        })?;
        if let Some(s) = &snapshots {
            write_theta_csv(&s.join(format!("theta_{:05}.csv", record.t)), &search.state().theta)?;
        }
        if !quiet {
            let best = record.accs[record.broadcast_source];
            eprintln!(
                "T {:>5}  best acc {best:.4} (trajectory {})  entropy {:.4}",
                record.t, record.broadcast_source, record.policy_entropy
            );
        }
        Ok(())
    })?;
    drop(metrics);
    save_checkpoint(&dir.join("final.ckpt"), &outcome.checkpoint)?;
    write_theta_csv(&dir.join("theta_final.csv"), &outcome.theta)?;
    let last = outcome.history.last().map(|r| r.accs[r.broadcast_source]);
    println!(
        "finished {} outer steps; final best val acc {}; artifacts in {}",
        outcome.history.len(),
        last.map_or("n/a".into(), |a| format!("{a:.4}")),
        dir.display()
    );
    Ok(())
}

fn cmd_eval(checkpoint: &Path, dataset: &Path) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let net = ckpt.network()?;
    let ds = if dataset.is_dir() {
        load_cifar10(dataset)?.1
    } else {
        let shape = RecordShape {
            height: ckpt.input.height,
            width: ckpt.input.width,
            channels: ckpt.input.channels,
            classes: ckpt.classes,
        };
        read_records(dataset, shape, SplitTag::Test)?
    };
    let batch = ckpt.standardizer.batch(&ds.images, &ds.labels)?;
    let acc = net.evaluate_accuracy(&ckpt.weights, &batch)?;
    println!("accuracy {acc:.6} on {} images", ds.len());
    Ok(())
}

fn parse_row(spec: &str) -> Result<CostRow> {
    let f: Vec<&str> = spec.split(',').map(str::trim).collect();
    if f.len() != 5 {
        bail!("row {spec:?}: expected method,dataset,models,images,epochs");
    }
    let num = |i: usize, name: &str| -> Result<u64> {
        f[i].parse()
            .with_context(|| format!("row {spec:?}: {name} must be a non-negative integer"))
    };
    Ok(CostRow::new(
        f[0],
        f[1],
        num(2, "models")?,
        num(3, "images")?,
        num(4, "epochs")?,
    )?)
}

fn cmd_cost(preset: Option<Preset>, rows: &[String]) -> Result<()> {
    let mut table = match (preset, rows.is_empty()) {
        (Some(Preset::Paper), _) | (None, true) => paper_preset(),
        (None, false) => Vec::new(),
    };
    for r in rows {
        table.push(parse_row(r)?);
    }
    print!("{}", render_table(&table));
    Ok(())
}

fn cmd_export_dist(snapshot: &Path, out: Option<PathBuf>) -> Result<()> {
    let theta = read_theta_csv(snapshot)?;
    let dir = out.unwrap_or_else(|| {
        snapshot
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    });
    let dir = if dir.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        dir
    };
    fs::create_dir_all(&dir)?;
    let stem = snapshot
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("theta");
    let probs = dir.join(format!("{stem}.probabilities.csv"));
    let marginal = dir.join(format!("{stem}.marginal.csv"));
    write_probabilities_csv(&probs, &theta)?;
    write_marginal_csv(&marginal, &theta)?;
    println!("wrote {} and {}", probs.display(), marginal.display());
    Ok(())
}
