use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairnorm::data::write_csv;
use fairnorm::metrics::FairnessReport;
use fairnorm::pipeline::{mc_skew, render, Scatter, SkewPoint};
use fairnorm::{fmt_f64, synthesize, Error, ExperimentConfig, SynthSpec};
use serde::{Deserialize, Serialize};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "fairnorm", version, about = "Fair regression experiments")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV plus manifest.
    Synth(Common),
    /// Run a full experiment.
    Run(Common),
    /// Monte Carlo of statistical parity against label skewness.
    McSkew(Common),
    /// Render a saved report into CSV tables and a scatter plot.
    Report {
        /// `report.json`, or the directory holding it.
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct SkewConfig {
    shapes: Vec<f64>,
    n: usize,
    trials: usize,
    seed: u64,
}

impl Default for SkewConfig {
    fn default() -> Self {
        SkewConfig {
            shapes: vec![1.0, 10.0, 100.0],
            n: 10_000,
            trials: 50,
            seed: 0,
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> fairnorm::Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn out_dir(out: Option<PathBuf>, fallback: &str) -> fairnorm::Result<PathBuf> {
    let dir = out.unwrap_or_else(|| PathBuf::from(fallback));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write(path: PathBuf, text: &str) -> fairnorm::Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn synth(args: Common) -> fairnorm::Result<()> {
    let mut spec: SynthSpec = read_json(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let dir = out_dir(args.out, "synth")?;
    let data = synthesize(&spec)?;
    let manifest = write_csv(&data, dir.join("data.csv"))?;
    manifest.save(dir.join("manifest.json"))?;
    println!("wrote {} rows to {}", data.n(), dir.join("data.csv").display());
    Ok(())
}

fn run(args: Common) -> fairnorm::Result<()> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.output_dir = Some(out);
    }
    if config.output_dir.is_none() {
        config.output_dir = Some(PathBuf::from("out"));
    }
    let output = fairnorm::run_experiment(&config)?;
    for label in &output.report.labels {
        println!("{} maa {}", label.label, fmt_f64(label.maa_global));
        for attr in &label.attrs {
            let pcc = attr.max_abs_pcc();
            println!(
                "  {} max|pcc| {} p {} sp {}",
                attr.attr,
                pcc.map(|p| fmt_f64(p.r.abs())).unwrap_or_else(|| "-".into()),
                pcc.map(|p| fmt_f64(p.p_value)).unwrap_or_else(|| "-".into()),
                attr.sp.map(fmt_f64).unwrap_or_else(|| "-".into())
            );
        }
    }
    if let Some(dir) = &config.output_dir {
        println!("artifacts in {}", dir.display());
    }
    Ok(())
}

fn skew_csv(points: &[SkewPoint]) -> String {
    let mut out = String::from("shape,skewness,mean_sp,std_sp,trials\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(p.shape),
            fmt_f64(p.skewness),
            fmt_f64(p.mean_sp),
            fmt_f64(p.std_sp),
            p.trials
        ));
    }
    out
}

fn skew(args: Common) -> fairnorm::Result<()> {
    let mut config: SkewConfig = read_json(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let dir = out_dir(args.out, "mc_skew")?;
    let points = mc_skew(&config.shapes, config.n, config.trials, config.seed)?;
    let csv = skew_csv(&points);
    write(dir.join("mc_skew.csv"), &csv)?;
    write(dir.join("mc_skew.json"), &(serde_json::to_string_pretty(&points)? + "\n"))?;
    print!("{csv}");
    Ok(())
}

fn report(path: PathBuf, out: Option<PathBuf>) -> fairnorm::Result<()> {
    let (file, dir) = if path.is_dir() {
        (path.join("report.json"), path)
    } else {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (path, dir)
    };
    let report = FairnessReport::load(&file)?;
    let scatter_path = dir.join("scatter.json");
    let scatter = if scatter_path.exists() {
        Some(Scatter::load(&scatter_path)?)
    } else {
        None
    };
    let out = out_dir(out.or(Some(dir)), ".")?;
    render::write_all(&report, scatter.as_ref(), &out)?;
    println!("tables in {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let result = match cli.command {
        Command::Synth(args) => synth(args),
        Command::Run(args) => run(args),
        Command::McSkew(args) => skew(args),
        Command::Report { report: path, out } => report(path, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { EXIT_NUMERIC } else { EXIT_CONFIG })
        }
    }
}
