use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use iotguard::calibration::{calibrate, load_profile, save_profile, HyperSearchSpace, TrialOutcome};
use iotguard::dataset::{
    label_at, read_events, read_feature_csv, read_label_segments, split_chronological, write_events, write_feature_csv,
    write_label_segments, AttackLabel, EventFormat, FeatureRecord, HeaderMapping, PacketEvent,
};
use iotguard::detector::{monitor, NdjsonSink};
use iotguard::eval::{evaluate, write_plot_csv};
use iotguard::stats::FeatureExtractor;
use iotguard::synth::{synthesize, SynthConfig};
use iotguard::{Error, Result};

#[derive(Parser)]
#[command(name = "iotguard", version, about = "Autoencoder-based IoT botnet detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a packet-event file into one 115-slot feature row per packet.
    Extract {
        events: PathBuf,
        #[arg(long)]
        device_ip: IpAddr,
        #[arg(long)]
        out: PathBuf,
        /// Label sidecar (`onset,end,label_family,label_vector`).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// `csv` or `jsonl`; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<String>,
    },
    /// Split benign features chronologically, search hyperparameters and
    /// calibrate a detector profile.
    Train {
        features: PathBuf,
        /// JSON search space; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mapping: Option<String>,
        #[arg(long, default_value = "device")]
        device_id: String,
    },
    /// Run a profile over labeled feature files and report TPR, FPR and
    /// detection latency.
    Eval {
        /// Feature files, concatenated in the order given.
        #[arg(required = true)]
        features: Vec<PathBuf>,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Plot-ready CSV; defaults to the report path with a `.csv` extension.
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long)]
        mapping: Option<String>,
    },
    /// Monitor a packet-event file and write alerts as NDJSON.
    Detect {
        events: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        device_ip: IpAddr,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Generate a seeded synthetic event file and its label sidecar.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to `<out>.labels.csv`.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Extract {
            events,
            device_ip,
            out,
            labels,
            format,
        } => {
            let records = extract_file(&events, device_ip, labels.as_deref(), format.as_deref())?;
            write_feature_csv(&out, &records)?;
            eprintln!("wrote {} feature rows to {}", records.len(), out.display());
            Ok(())
        }
        Command::Train {
            features,
            config,
            out,
            seed,
            mapping,
            device_id,
        } => cmd_train(&features, config.as_deref(), &out, seed, mapping.as_deref(), &device_id),
        Command::Eval {
            features,
            profile,
            out,
            plot,
            mapping,
        } => cmd_eval(&features, &profile, &out, plot, mapping.as_deref()),
        Command::Detect {
            events,
            profile,
            device_ip,
            out,
            labels,
        } => {
            let profile = load_profile(&profile)?;
            let records = extract_file(&events, device_ip, labels.as_deref(), None)?;
            let file = File::create(&out).map_err(|e| io_error(&out, e))?;
            let mut sink = NdjsonSink::new(BufWriter::new(file));
            let summary = monitor(&profile, records.into_iter().map(Ok), &mut sink).map_err(|a| {
                eprintln!("aborted: {a}");
                a.error
            })?;
            println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            Ok(())
        }
        Command::Synth {
            config,
            out,
            seed,
            labels,
        } => {
            let mut cfg = SynthConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let generated = synthesize(&cfg)?;
            write_events(&out, &generated.events, EventFormat::from_path(&out))?;
            let labels = labels.unwrap_or_else(|| sidecar_path(&out));
            write_label_segments(&labels, &generated.labels)?;
            eprintln!(
                "wrote {} events and {} attack segments ({})",
                generated.events.len(),
                generated.labels.len(),
                labels.display()
            );
            Ok(())
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".labels.csv");
    PathBuf::from(name)
}

fn extract_file(
    path: &Path,
    device_ip: IpAddr,
    labels: Option<&Path>,
    format: Option<&str>,
) -> Result<Vec<FeatureRecord>> {
    let format = match format {
        Some(f) => f.parse()?,
        None => EventFormat::from_path(path),
    };
    let mut log = read_events(path, format)?;
    if log.non_monotonic > 0 {
        eprintln!(
            "warning: {} timestamps go backwards; sorting events by time",
            log.non_monotonic
        );
        log.events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    }
    let segments = match labels {
        Some(p) => read_label_segments(p)?,
        None => Vec::new(),
    };
    let mut extractor = FeatureExtractor::new();
    log.events
        .iter_mut()
        .map(|e: &mut PacketEvent| {
            e.orient_to(device_ip);
            let r = extractor.extract(e)?;
            Ok(r.with_label(label_at(&segments, e.timestamp)))
        })
        .collect()
}

/// `nbaiot` selects the built-in public-dataset mapping; anything else is a
/// mapping file. Without a flag the canonical layout is assumed.
fn resolve_mapping(spec: Option<&str>) -> Result<HeaderMapping> {
    match spec {
        None => Ok(HeaderMapping::canonical()),
        Some("nbaiot") => Ok(HeaderMapping::nbaiot()),
        Some(path) => HeaderMapping::load(path),
    }
}

fn read_labeled(path: &Path, mapping: &HeaderMapping) -> Result<Vec<FeatureRecord>> {
    if mapping.label_rule().is_some() {
        return read_feature_csv(path, mapping);
    }
    let label = AttackLabel::from_dataset_path(path).ok_or_else(|| {
        Error::Config(format!(
            "{} is unlabeled: the mapping has no label rule and the file name names no attack",
            path.display()
        ))
    })?;
    read_feature_csv(path, &mapping.clone().with_label(label))
}

fn cmd_train(
    features: &Path,
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    mapping: Option<&str>,
    device_id: &str,
) -> Result<()> {
    let mut space = match config {
        Some(p) => HyperSearchSpace::load(p)?,
        None => HyperSearchSpace::default(),
    };
    if let Some(seed) = seed {
        space.seed = seed;
    }
    let mapping = resolve_mapping(mapping)?;
    let records = read_labeled(features, &mapping)?;
    let split = split_chronological(&records)?;
    let (n_trn, n_opt, n_tst) = split.sizes();
    println!("split: trn {n_trn}, opt {n_opt}, tst {n_tst} (tst held out)");

    let cal = calibrate(
        &records[split.trn.clone()],
        &records[split.opt.clone()],
        &space,
        device_id,
    )?;
    let mut training_seconds = 0.0;
    for (i, trial) in cal.trials.iter().enumerate() {
        match &trial.outcome {
            TrialOutcome::Trained(o) => {
                training_seconds += o.seconds;
                let history: Vec<String> = o.history.iter().map(|m| format!("{m:.6e}")).collect();
                println!(
                    "eta {}: best epoch {} of {}, opt mse {:.6e}, {:.2}s{}",
                    trial.eta,
                    o.best_epoch,
                    o.epochs_run(),
                    o.best_opt_mse(),
                    o.seconds,
                    if i == cal.selected { " [selected]" } else { "" }
                );
                println!("  history: [{}]", history.join(", "));
            }
            TrialOutcome::Diverged { epoch } => {
                println!("eta {}: diverged at epoch {epoch}, skipped", trial.eta);
            }
        }
    }
    let selected = cal.selected_outcome();
    println!(
        "training time: selected run {:.2}s, all runs {:.2}s, whole calibration {:.2}s",
        selected.seconds, training_seconds, cal.seconds
    );
    println!("tr* = {:.6e}, ws* = {}", cal.profile.tr_star(), cal.profile.ws_star());
    save_profile(&cal.profile, out)
}

fn cmd_eval(
    features: &[PathBuf],
    profile: &Path,
    out: &Path,
    plot: Option<PathBuf>,
    mapping: Option<&str>,
) -> Result<()> {
    let profile = load_profile(profile)?;
    let mapping = resolve_mapping(mapping)?;
    let mut records = Vec::new();
    for path in features {
        records.extend(read_labeled(path, &mapping)?);
    }
    let report = evaluate(&profile, &records)?;
    let json = serde_json::to_vec_pretty(&report).expect("report serializes");
    std::fs::write(out, json).map_err(|e| io_error(out, e))?;
    let plot = plot.unwrap_or_else(|| out.with_extension("csv"));
    let file = File::create(&plot).map_err(|e| io_error(&plot, e))?;
    let mut w = BufWriter::new(file);
    write_plot_csv(&mut w, &report)
        .and_then(|_| w.flush())
        .map_err(|e| io_error(&plot, e))?;
    let show = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    println!(
        "instances {} (benign {}, malicious {}), segment TPR {}, instance TPR {}, FPR {:.4}, alerts {}",
        report.counts.total,
        report.counts.benign,
        report.counts.malicious,
        show(report.segment_tpr),
        show(report.instance_tpr),
        report.fpr,
        report.alerts
    );
    Ok(())
}
