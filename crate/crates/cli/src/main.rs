//! Command-line front end. One process runs one command; parallelism lives
//! inside a command (rayon over candidates or replicates) and is sized by
//! --workers. Outputs are deterministic for a given configuration, so every
//! command can be re-run idempotently.

mod manifest;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use varsearch_core::analysis::{consistency, summarize_records, summary_csv, sweep};
use varsearch_core::costmodel::{compare_schedules, comparison_csv};
use varsearch_core::orchestrator::{execute, replay_lineage};
use varsearch_core::record::RunRecord;
use varsearch_core::rng::replicate_seed;
use varsearch_core::tensor::write_pgm;

use manifest::Manifest;

/// Path search over a scale-by-scale synthetic image generator.
#[derive(Parser)]
#[command(name = "varsearch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a strategy and write one run record per replicate.
    Run(ConfigArgs),
    /// Evaluate one tunable across values with paired replicates.
    Sweep(ConfigArgs),
    /// Agreement between intermediate rankings and the final one.
    Consistency(ConfigArgs),
    /// Fixed versus descending batch cost, as CSV.
    Cost(ConfigArgs),
    /// Rebuild a final image from a stored record, bit for bit.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file with `key = value` lines (dotted keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides VARSEARCH_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// raw | bon | is | ttsvar.
    #[arg(long)]
    strategy: Option<String>,
    /// Path count for bon/is, batch multiplier otherwise.
    #[arg(long)]
    n: Option<usize>,
    /// Resampling temperature.
    #[arg(long)]
    lambda: Option<f64>,
    /// value | diff | max | sum.
    #[arg(long)]
    potential: Option<String>,
    /// Comma-separated scales for diversity clustering.
    #[arg(long)]
    cluster_scales: Option<String>,
    /// Comma-separated scales for reward resampling.
    #[arg(long)]
    resample_scales: Option<String>,
    /// patch_pca | pooled | raw.
    #[arg(long)]
    extractor: Option<String>,
    /// Replicate count.
    #[arg(long)]
    replicates: Option<usize>,
    /// Extra dotted-key overrides, e.g. generator.drift=0.5.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Record file written by `run`.
    #[arg(long)]
    record: PathBuf,
    /// Final-slot index to rebuild; defaults to the recorded winner.
    #[arg(long)]
    lineage: Option<usize>,
    /// Also write the rebuilt image as a 16-bit PGM.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Worker threads; replay itself follows a single path.
    #[arg(long)]
    workers: Option<usize>,
}

impl ConfigArgs {
    /// Apply the precedence order: config file, then VARSEARCH_SEED, then
    /// positional overrides, then named flags.
    fn manifest(&self) -> Result<Manifest> {
        let mut m = Manifest::default();
        if let Some(path) = &self.config {
            m.load_file(path)?;
        }
        if let Ok(seed) = std::env::var("VARSEARCH_SEED") {
            seed.parse::<u64>()
                .with_context(|| format!("VARSEARCH_SEED must be a u64, got {seed:?}"))?;
            m.set("seed", &seed)?;
        }
        for pair in &self.overrides {
            m.set_override(pair)?;
        }
        if let Some(v) = &self.strategy {
            m.set("strategy", v)?;
        }
        if let Some(v) = self.n {
            m.set("n", &v.to_string())?;
        }
        if let Some(v) = self.seed {
            m.set("seed", &v.to_string())?;
        }
        if let Some(v) = self.lambda {
            m.set("search.lambda", &v.to_string())?;
        }
        if let Some(v) = &self.potential {
            m.set("search.potential", v)?;
        }
        if let Some(v) = &self.cluster_scales {
            m.set("search.cluster_scales", v)?;
        }
        if let Some(v) = &self.resample_scales {
            m.set("search.resample_scales", v)?;
        }
        if let Some(v) = &self.extractor {
            m.set("search.extractor", v)?;
        }
        if let Some(v) = self.replicates {
            m.set("replicates", &v.to_string())?;
        }
        Ok(m)
    }

    fn out_file(&self, name: &str, text: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn init_workers(workers: Option<usize>) -> Result<()> {
    if let Some(w) = workers {
        if w == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .context("initializing the worker pool")?;
    }
    Ok(())
}

fn cmd_run(args: ConfigArgs) -> Result<()> {
    init_workers(args.workers)?;
    let spec = args.manifest()?.spec(1)?;
    spec.validate()?;
    let master = spec.search.master_seed;
    let reps = spec.search.replicates;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let records: Vec<RunRecord> = (0..reps)
        .into_par_iter()
        .map(|rep| Ok(execute(&spec.with_seed(replicate_seed(master, rep)))?.record))
        .collect::<varsearch_core::Result<_>>()?;
    for (rep, record) in records.iter().enumerate() {
        record.write_atomic(&args.out.join(format!("run_{rep:04}.json")))?;
    }
    let mean = records.iter().map(|r| r.outcome_reward).sum::<f64>() / reps as f64;
    println!(
        "{}: {} record(s) at master seed {}, mean outcome {:.6} -> {}",
        spec.strategy,
        reps,
        master,
        mean,
        args.out.display()
    );
    if reps > 1 {
        let path = args.out_file("summary.csv", &summary_csv(&summarize_records(&records)?))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_sweep(args: ConfigArgs) -> Result<()> {
    init_workers(args.workers)?;
    let m = args.manifest()?;
    let spec = m.spec(100)?;
    let axis = m.sweep_axis()?;
    let table = sweep(&spec, &axis, spec.search.replicates)?;
    let csv = table.csv();
    print!("{csv}");
    let path = args.out_file("sweep.csv", &csv)?;
    println!("wrote {} ({} replicates per point)", path.display(), table.replicates);
    Ok(())
}

fn cmd_consistency(args: ConfigArgs) -> Result<()> {
    init_workers(args.workers)?;
    let m = args.manifest()?;
    let spec = m.spec(500)?;
    let reps = spec.search.replicates;
    if reps < 100 {
        bail!("consistency needs at least 100 replicates to be meaningful, got {reps}");
    }
    let width = m.width(4)?;
    let curve = consistency(&spec, width, reps)?;
    let csv = curve.csv();
    print!("{csv}");
    let path = args.out_file("consistency.csv", &csv)?;
    println!("wrote {} (width {width}, {reps} replicates)", path.display());
    Ok(())
}

fn cmd_cost(args: ConfigArgs) -> Result<()> {
    let (schedule, fixed, adaptive, dims) = args.manifest()?.cost_setup()?;
    let cmp = compare_schedules(&schedule, &fixed, &adaptive, &dims)?;
    let csv = comparison_csv(&cmp);
    print!("{csv}");
    let path = args.out_file("cost.csv", &csv)?;
    println!(
        "wrote {}: fixed {} flops (last scale {:.1}%), adaptive {} flops, ratio {:.4}",
        path.display(),
        cmp.fixed_total_flops,
        100.0 * cmp.fixed_last_scale_share,
        cmp.adaptive_total_flops,
        cmp.flops_ratio
    );
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<()> {
    init_workers(args.workers)?;
    let record = RunRecord::load(&args.record)?;
    let slot = args.lineage.unwrap_or(record.selected_slot);
    let image = replay_lineage(&record, slot)?;
    match record.final_rewards.get(slot) {
        Some(r) => println!(
            "rebuilt final slot {slot} ({}x{}), recorded reward {r:.6}",
            image.nrows(),
            image.ncols()
        ),
        None => println!("rebuilt final slot {slot} ({}x{})", image.nrows(), image.ncols()),
    }
    if slot == record.selected_slot {
        let stored = record.final_image()?;
        let same = image.dim() == stored.dim()
            && image.iter().zip(stored.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            bail!("replayed image differs from the stored one");
        }
        println!("matches the stored image bit for bit");
    }
    if let Some(path) = &args.image {
        write_pgm(&image, path, 65535)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Consistency(a) => cmd_consistency(a),
        Command::Cost(a) => cmd_cost(a),
        Command::Replay(a) => cmd_replay(a),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
