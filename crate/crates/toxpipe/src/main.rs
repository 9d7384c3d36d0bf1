use std::error::Error;
use std::fmt::Write as _;
use std::io::{BufRead, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};
use toxpipe::assays::{assay_index, ASSAYS};
use toxpipe::bundle::{bundle_checksum, load_bundle, save_bundle};
use toxpipe::config::PipelineConfig;
use toxpipe::dataset::load_tox21_csv;
use toxpipe::metrics::metrics_csv;
use toxpipe::pipeline::{bundle_split, evaluate, predict_report, smiles_image, train, write_explanation, PredictOptions};
use toxpipe_core::depict::depict;
use toxpipe_core::{morgan_fingerprint, parse, Molecule};

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "toxpipe", version, about = "Tox21 toxicity prediction from 2D structure images")]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads; overrides the configured count.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print atoms and bonds of each SMILES.
    Parse {
        /// Read from stdin, one per line, when none are given.
        smiles: Vec<String>,
    },
    /// Print Morgan fingerprints as hex, one line per input (blank if it
    /// does not parse).
    Fingerprint {
        #[arg(long, default_value_t = 2)]
        radius: usize,
        #[arg(long, default_value_t = 2048)]
        nbits: usize,
        /// Read from stdin, one per line, when none are given.
        smiles: Vec<String>,
    },
    /// Render each SMILES to `<out>/<sha256 of SMILES>.png`.
    Depict {
        #[arg(long, default_value_t = 224)]
        size: usize,
        /// Read from stdin, one per line, when none are given.
        smiles: Vec<String>,
    },
    /// Split a Tox21 CSV, train, and write a model bundle.
    Train {
        /// Tox21 CSV with a `smiles` column and assay columns.
        data: PathBuf,
    },
    /// Per-assay metrics of a bundle on a CSV.
    Evaluate {
        /// Model bundle written by `train`.
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Tox21-format CSV.
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Subset::Auto)]
        subset: Subset,
    },
    /// Prediction reports, one per SMILES.
    Predict {
        /// Model bundle written by `train`.
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Write per-assay Grad-CAM overlays under this directory.
        #[arg(long, value_name = "DIR")]
        explain_dir: Option<PathBuf>,
        /// Augmented renderings for the feature-spread score.
        #[arg(long, value_name = "N")]
        augment_runs: Option<usize>,
        /// Read from stdin, one per line, when none are given.
        smiles: Vec<String>,
    },
    /// Grad-CAM overlay of one assay for one SMILES, written as PNG.
    Explain {
        /// Model bundle written by `train`.
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "NAME")]
        label: String,
        smiles: String,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Subset {
    /// The test part when the CSV is the training dataset, else every record.
    Auto,
    Train,
    Val,
    Test,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Settings after applying flags over the config file.
fn settings(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            PipelineConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Positional inputs, or stdin lines when there are none.
fn inputs(args: &[String]) -> Result<Vec<String>> {
    if !args.is_empty() {
        return Ok(args.to_vec());
    }
    let mut out = Vec::new();
    for line in std::io::stdin().lock().lines() {
        let line = line?;
        let s = line.trim();
        if !s.is_empty() {
            out.push(s.to_string());
        }
    }
    Ok(out)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn require_out(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().ok_or_else(|| "this command needs --out".into())
}

fn parse_or_report(smiles: &str) -> Option<Molecule> {
    match parse(smiles) {
        Ok(m) => Some(m),
        Err(e) => {
            eprintln!("{smiles}: {e}");
            None
        }
    }
}

fn adjacency(mol: &Molecule) -> String {
    let mut s = String::new();
    for (i, a) in mol.atoms.iter().enumerate() {
        let sym = if a.aromatic { a.symbol().to_lowercase() } else { a.symbol().to_string() };
        let _ = writeln!(s, "atom {i} {sym} {} {}", a.formal_charge, mol.total_h(i));
    }
    for b in &mol.bonds {
        let _ = writeln!(s, "bond {} {} {}", b.endpoints.0, b.endpoints.1, b.order.symbol());
    }
    s
}

/// Returns whether every input was processed.
fn run(cli: Cli) -> Result<bool> {
    let cfg = settings(&cli)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global()?;
    }
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Parse { smiles } => {
            let mut text = String::new();
            let mut ok = true;
            for s in inputs(smiles)? {
                match parse_or_report(&s) {
                    Some(m) => {
                        let _ = writeln!(text, "# {s}");
                        text.push_str(&adjacency(&m));
                    }
                    None => ok = false,
                }
            }
            emit(out, &text)?;
            Ok(ok)
        }
        Command::Fingerprint { radius, nbits, smiles } => {
            let mut text = String::new();
            let mut ok = true;
            for s in inputs(smiles)? {
                // A blank line keeps output lines aligned with inputs.
                let Some(m) = parse_or_report(&s) else {
                    text.push('\n');
                    ok = false;
                    continue;
                };
                let fp = morgan_fingerprint(&m, *radius, *nbits)?;
                let _ = writeln!(text, "{}", fp.to_hex());
            }
            emit(out, &text)?;
            Ok(ok)
        }
        Command::Depict { size, smiles } => {
            let dir = require_out(&cli)?;
            std::fs::create_dir_all(dir)?;
            let mut ok = true;
            for s in inputs(smiles)? {
                let Some(m) = parse_or_report(&s) else {
                    ok = false;
                    continue;
                };
                let path = dir.join(format!("{}.png", hex::encode(Sha256::digest(s.as_bytes()))));
                match depict(&m, *size).and_then(|img| img.save_png(&path)) {
                    Ok(()) => println!("{}", path.display()),
                    Err(e) => {
                        eprintln!("{s}: {e}");
                        ok = false;
                    }
                }
            }
            Ok(ok)
        }
        Command::Train { data } => {
            let dataset = load_tox21_csv(data)?;
            for q in &dataset.quarantine {
                eprintln!("quarantined line {}: {} ({})", q.line, q.smiles, q.reason);
            }
            eprintln!("{} rows, {} usable", dataset.rows_in, dataset.records.len());
            let (bundle, parts) = train(&dataset.records, &cfg, |line| eprintln!("{line}"))?;
            eprintln!("split train {} val {} test {}", parts.train.len(), parts.val.len(), parts.test.len());
            let path = out.unwrap_or(Path::new("model.toxb"));
            save_bundle(&bundle, path)?;
            println!("{} {}", path.display(), bundle_checksum(&bundle));
            Ok(true)
        }
        Command::Evaluate { model, data, subset } => {
            let bundle = load_bundle(model)?;
            let dataset = load_tox21_csv(data)?;
            let records = &dataset.records;
            let parts = bundle_split(&bundle, records);
            let all: Vec<usize> = (0..records.len()).collect();
            let idx = match (subset, &parts) {
                (Subset::All, _) | (Subset::Auto, None) => all,
                (Subset::Auto | Subset::Test, Some(p)) => p.test.clone(),
                (Subset::Val, Some(p)) => p.val.clone(),
                (Subset::Train, Some(p)) => p.train.clone(),
                (_, None) => return Err("this CSV is not the model's training dataset, so it has no split; use --subset all".into()),
            };
            let rows = evaluate(&bundle, records, &idx)?;
            emit(out, &metrics_csv(&rows))?;
            Ok(true)
        }
        Command::Predict {
            model,
            format,
            explain_dir,
            augment_runs,
            smiles,
        } => {
            let bundle = load_bundle(model)?;
            if let Some(d) = explain_dir {
                std::fs::create_dir_all(d)?;
            }
            let mut text = String::new();
            let mut ok = true;
            for (n, s) in inputs(smiles)?.iter().enumerate() {
                // Overlays of each molecule go to their own numbered folder.
                let opts = PredictOptions {
                    explain_dir: explain_dir.as_ref().map(|d| d.join(format!("{n:04}"))),
                    augment_runs: *augment_runs,
                    seed: cfg.seed,
                };
                if let Some(d) = &opts.explain_dir {
                    std::fs::create_dir_all(d)?;
                }
                match predict_report(&bundle, s, &opts) {
                    Ok(r) => match format {
                        Format::Text => {
                            text.push_str(&r.to_text());
                            text.push('\n');
                        }
                        Format::Json => {
                            text.push_str(&r.to_json_line());
                            text.push('\n');
                        }
                    },
                    Err(e) => {
                        eprintln!("{s}: {e}");
                        ok = false;
                    }
                }
            }
            emit(out, &text)?;
            Ok(ok)
        }
        Command::Explain { model, label, smiles } => {
            let path = require_out(&cli)?;
            let assay = assay_index(label).ok_or_else(|| format!("unknown label `{label}`; expected one of {}", ASSAYS.join(", ")))?;
            let bundle = load_bundle(model)?;
            let image = smiles_image(&bundle, smiles)?;
            write_explanation(&bundle, &image, assay, path)?;
            Ok(true)
        }
    }
}
