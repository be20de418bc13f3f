use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use sideband_core::config::{parse_config, CampaignConfig};
use sideband_core::filter::sweep_table;
use sideband_core::harness::{
    list_presets, preset_config, preset_text, run_campaign, CampaignOutput, Manifest, RecordFormat,
};
use sideband_core::inference::{
    bootstrap_occupancy, estimate_occupancy, estimate_occupancy_subtraction, fit_lorentzian_doublet,
    fit_mechanical_spectrum, CountSample, OccupancyEstimate, Spectrum,
};
use sideband_core::{CountLabel, CountRecord};

#[derive(Parser)]
#[command(
    name = "sideband",
    version,
    about = "Pulsed sideband thermometry simulator and estimator"
)]
struct Cli {
    /// Campaign configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for RecordFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => RecordFormat::Csv,
            Format::Json => RecordFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Profile,
    Bootstrap,
    Subtraction,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Doublet,
    Mechanical,
}

#[derive(Subcommand)]
enum Command {
    /// Run the campaign given by --config.
    Simulate,
    /// Estimate the occupancy from a count record.
    Estimate {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Profile)]
        method: Method,
        /// Dark-count rate in Hz; taken from --config when omitted.
        #[arg(long)]
        dark_rate: Option<f64>,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        #[arg(long, default_value_t = 2000)]
        resamples: usize,
    },
    /// Fit a spectrum file (two or three columns: frequency, value, sigma).
    Fit {
        #[arg(long)]
        spectrum: PathBuf,
        #[arg(long, value_enum)]
        model: ModelKind,
    },
    /// Noiseless filter throughput versus probe detuning.
    Sweep {
        #[arg(long, default_value_t = 1.0e9, allow_hyphen_values = true)]
        start: f64,
        #[arg(long, default_value_t = 1.17e9, allow_hyphen_values = true)]
        stop: f64,
        #[arg(long, default_value_t = 171)]
        points: usize,
    },
    /// List, show or run a shipped campaign.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Verify a campaign directory against its manifest.
    Report {
        /// Campaign directory; defaults to --out.
        dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    Show { name: String },
    Run { name: String },
}

fn load_config(cli: &Cli) -> Result<CampaignConfig> {
    let path = cli.config.as_ref().context("--config is required")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
    Ok(match cli.seed {
        Some(s) => config.with_seed(s),
        None => config,
    })
}

fn run(config: &CampaignConfig, cli: &Cli) -> Result<ExitCode> {
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(&config.name));
    let output = run_campaign(config, &out, cli.format.into())?;
    summarize(&output, &out);
    let failed = output.manifest.analyses.iter().any(|a| !a.ok);
    Ok(if failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn summarize(output: &CampaignOutput, out: &Path) {
    let m = &output.manifest;
    println!("campaign {} (seed {}) -> {}", m.campaign, m.seed, out.display());
    println!("{} files, config digest {}", m.files.len(), &m.config_digest[..16]);
    for a in &m.analyses {
        match &a.error {
            None => println!("  {:<14} ok", a.name),
            Some(e) => {
                println!("  {:<14} FAILED", a.name);
                eprintln!("warning: analysis {} failed: {e}", a.name);
            }
        }
    }
    let r = &output.results;
    for row in r.occupancy.iter().take(12) {
        let e = &row.estimate;
        let at = row.value.map(|v| format!(" at {v:e}")).unwrap_or_default();
        println!("  n_b{at} = {:.3} [{:.3}, {:.3}]", e.n_b, e.ci_low, e.ci_high);
    }
    if let Some(p) = &r.power_law {
        println!(
            "  rate exponent {:.3} ± {:.3}",
            p.sum.exponent, p.sum.exponent_uncertainty
        );
    }
    if let Some(g) = &r.g0 {
        println!(
            "  g0/2π = {:.1} ± {:.1} kHz",
            g.joint.g0 / 1e3,
            g.joint.uncertainty / 1e3
        );
    }
    for p in &r.peaks {
        println!(
            "  peaks at {:.4} / {:.4} GHz, amplitude asymmetry {:.2}σ",
            p.blue.center / 1e9,
            p.red.center / 1e9,
            p.asymmetry_z
        );
    }
    if let Some(d) = &r.delay_slope {
        println!("  probe rate slope {:e} Hz/s ({:.2}σ)", d.line.slope, d.z);
    }
    if let Some(f) = &r.spectral_fit {
        for d in &f.derived {
            println!("  {} = {:.6e} ± {:.2e}", d.name, d.value, d.uncertainty);
        }
    }
}

fn read_record(path: &Path) -> Result<CountRecord> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let record = if text.trim_start().starts_with('{') {
        CountRecord::from_json(&text)
    } else {
        CountRecord::from_csv(&text)
    };
    record.with_context(|| format!("parsing {}", path.display()))
}

fn estimate_line(e: &OccupancyEstimate, format: Format) -> Result<String> {
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(e)? + "\n",
        Format::Csv => format!(
            "n_b,ci_low,ci_high,confidence\n{:e},{:e},{:e},{:e}\n",
            e.n_b, e.ci_low, e.ci_high, e.confidence
        ),
    })
}

fn emit(cli: &Cli, file: &str, body: &str) -> Result<()> {
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(file), body)?;
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Simulate => {
            let config = load_config(cli)?;
            run(&config, cli)
        }
        Command::Estimate {
            counts,
            method,
            dark_rate,
            confidence,
            resamples,
        } => {
            let record = read_record(counts)?;
            let dark = match dark_rate {
                Some(d) => *d,
                None => match load_config(cli)?.plan {
                    Some(p) => p.detector.dark_rate,
                    None => bail!("--dark-rate is required without a counting --config"),
                },
            };
            let sample = |l| {
                let (c, t) = record.totals(l);
                CountSample::new(c, t)
            };
            let (blue, red) = (sample(CountLabel::Blue), sample(CountLabel::Red));
            let e = match method {
                Method::Profile => estimate_occupancy(blue, red, dark, *confidence)?,
                Method::Subtraction => estimate_occupancy_subtraction(blue, red, dark, *confidence)?,
                Method::Bootstrap => {
                    bootstrap_occupancy(blue, red, dark, *confidence, *resamples, cli.seed.unwrap_or(0))?
                }
            };
            let ext = if matches!(cli.format, Format::Json) {
                "json"
            } else {
                "csv"
            };
            emit(cli, &format!("estimate.{ext}"), &estimate_line(&e, cli.format)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit { spectrum, model } => {
            let text = fs::read_to_string(spectrum).with_context(|| format!("reading {}", spectrum.display()))?;
            let s = Spectrum::parse(&text).with_context(|| format!("parsing {}", spectrum.display()))?;
            let fit = match model {
                ModelKind::Doublet => fit_lorentzian_doublet(&s)?,
                ModelKind::Mechanical => fit_mechanical_spectrum(&s)?,
            };
            match &cli.out {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    fs::write(dir.join("fit.json"), fit.to_json()? + "\n")?;
                    fs::write(dir.join("residuals.csv"), fit.residual_csv(&s))?;
                }
                None => match cli.format {
                    Format::Json => println!("{}", fit.to_json()?),
                    Format::Csv => {
                        println!("name,value,uncertainty");
                        for p in &fit.parameters {
                            println!("{},{:e},{:e}", p.name, p.value, p.uncertainty);
                        }
                        for d in &fit.derived {
                            println!("{},{:e},{:e}", d.name, d.value, d.uncertainty);
                        }
                    }
                },
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { start, stop, points } => {
            if *points < 2 {
                bail!("--points must be >= 2");
            }
            let config = load_config(cli)?;
            let plan = config.plan.context("sweep needs a counting configuration")?;
            let detunings: Vec<f64> = (0..*points)
                .map(|i| start + (stop - start) * i as f64 / (*points - 1) as f64)
                .collect();
            let mut body = String::from("detuning_hz,response\n");
            for (d, r) in sweep_table(&plan.chain, &plan.device.mechanical, &detunings)? {
                body.push_str(&format!("{d:e},{r:e}\n"));
            }
            emit(cli, "sweep_response.csv", &body)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { action } => match action {
            PresetAction::List => {
                for p in list_presets() {
                    println!("{:<10} {}", p.name, p.description);
                }
                Ok(ExitCode::SUCCESS)
            }
            PresetAction::Show { name } => {
                print!("{}", preset_text(name)?);
                Ok(ExitCode::SUCCESS)
            }
            PresetAction::Run { name } => {
                let mut config = preset_config(name)?;
                if let Some(s) = cli.seed {
                    config = config.with_seed(s);
                }
                run(&config, cli)
            }
        },
        Command::Report { dir } => {
            let dir = dir
                .clone()
                .or_else(|| cli.out.clone())
                .context("give a campaign directory")?;
            let path = dir.join("manifest.json");
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let manifest = Manifest::from_json(&text)?;
            println!(
                "campaign {} ({:?}), seed {}, version {}",
                manifest.campaign, manifest.kind, manifest.seed, manifest.version
            );
            for a in &manifest.analyses {
                match &a.error {
                    None => println!("  {:<14} ok", a.name),
                    Some(e) => println!("  {:<14} FAILED: {e}", a.name),
                }
            }
            let bad = manifest.verify(&dir)?;
            println!("{} files, {} modified or missing", manifest.files.len(), bad.len());
            for b in &bad {
                println!("  mismatch: {b}");
            }
            Ok(if bad.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
