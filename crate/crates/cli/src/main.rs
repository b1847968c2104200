use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;

use soenet_core::network::{plan, Descriptor};
use soenet_core::recognition::{load_gallery, loo_eval_with, Similarity};
use soenet_core::synth::{make_dataset, DatasetSpec};
use soenet_core::volume::{is_frame_file, load_volume, write_pgm_frames, FrameSource};
use soenet_core::{describe, icosa_directions, Classifier, Error, NetworkConfig};

#[derive(Debug, Parser)]
#[command(
    name = "soenet",
    version,
    about = "Spatiotemporal oriented-energy features for video volumes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset as PGM frame directories.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the spec file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute one descriptor per sequence under the input path.
    Extract {
        #[arg(long)]
        input: PathBuf,
        /// Pipeline configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
        threads: Option<u16>,
    },
    /// Leave-one-out evaluation over a descriptor directory or manifest.
    Eval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum, default_value_t = ClassifierArg::Nn)]
        classifier: ClassifierArg,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = SimilarityArg::L1)]
        similarity: SimilarityArg,
    },
    /// Print the channel table of a descriptor file.
    Inspect {
        #[arg(long)]
        descriptor: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ClassifierArg {
    Nn,
    Ncc,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SimilarityArg {
    L1,
    L2,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Synth { spec, out, seed } => cmd_synth(&spec, &out, seed),
        Command::Extract {
            input,
            config,
            out,
            threads,
        } => cmd_extract(&input, config.as_deref(), &out, threads.map(usize::from)),
        Command::Eval {
            features,
            classifier,
            report,
            similarity,
        } => {
            let classifier = match classifier {
                ClassifierArg::Nn => Classifier::Nn,
                ClassifierArg::Ncc => Classifier::Ncc,
            };
            let similarity = match similarity {
                SimilarityArg::L1 => Similarity::L1,
                SimilarityArg::L2 => Similarity::L2,
            };
            cmd_eval(&features, classifier, similarity, &report)
        }
        Command::Inspect { descriptor } => cmd_inspect(&descriptor),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<(), Error> {
    let spec = DatasetSpec::load(spec_path)?;
    let seed = seed.unwrap_or(spec.seed);
    let samples = make_dataset(&spec.classes, seed)?;
    fs::create_dir_all(out)?;
    let mut manifest = String::from("path,label\n");
    for (sample, volume) in &samples {
        let rel = sample.id();
        write_pgm_frames(volume, out.join(&rel))?;
        writeln!(manifest, "{rel},{}", sample.label).unwrap();
    }
    fs::write(out.join("manifest.csv"), manifest)?;
    println!("wrote {} sequences to {}", samples.len(), out.display());
    Ok(())
}

/// A sequence found under the input root and its output path relative to
/// the output root.
struct Sequence {
    source: FrameSource,
    rel: PathBuf,
}

fn discover(input: &Path) -> Result<Vec<Sequence>, Error> {
    if !input.exists() {
        return Err(Error::Ingestion {
            path: input.to_path_buf(),
            reason: "no such file or directory".into(),
        });
    }
    if input.is_file() {
        let rel = PathBuf::from(input.file_stem().unwrap_or_default());
        return Ok(vec![Sequence {
            source: FrameSource::Raw(input.to_path_buf()),
            rel,
        }]);
    }
    let mut out = Vec::new();
    walk(input, input, &mut out)?;
    out.sort_by(|a, b| a.rel.cmp(&b.rel));
    Ok(out)
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<Sequence>) -> Result<(), Error> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    if entries.iter().any(|p| p.is_file() && is_frame_file(p)) {
        let rel = match dir.strip_prefix(root) {
            Ok(r) if !r.as_os_str().is_empty() => r.to_path_buf(),
            _ => PathBuf::from(dir.file_name().unwrap_or_default()),
        };
        out.push(Sequence {
            source: FrameSource::from_dir(dir)?,
            rel,
        });
        return Ok(());
    }
    for path in entries {
        if path.is_dir() {
            walk(root, &path, out)?;
        } else if path.extension().is_some_and(|e| e == "soev") {
            out.push(Sequence {
                source: FrameSource::Raw(path.clone()),
                rel: path.strip_prefix(root).unwrap().with_extension(""),
            });
        }
    }
    Ok(())
}

enum Outcome {
    Written(String),
    Skipped(String),
}

fn cmd_extract(input: &Path, config: Option<&Path>, out: &Path, threads: Option<usize>) -> Result<(), Error> {
    let cfg = match config {
        Some(path) => NetworkConfig::load(path)?,
        None => NetworkConfig::default(),
    };
    cfg.validate()?;
    let sequences = discover(input)?;
    if sequences.is_empty() {
        return Err(Error::NoFrames(input.to_path_buf()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    info!(
        "extracting {} sequences on {} threads",
        sequences.len(),
        pool.current_num_threads()
    );

    let outcomes: Vec<Outcome> = pool.install(|| {
        sequences
            .par_iter()
            .map(|seq| extract_one(seq, &cfg, out))
            .collect::<Result<_, Error>>()
    })?;

    let mut written = 0;
    for outcome in outcomes {
        match outcome {
            Outcome::Written(line) => {
                println!("{line}");
                written += 1;
            }
            Outcome::Skipped(msg) => warn!("{msg}"),
        }
    }
    if written == 0 {
        return Err(Error::InvalidParameter("every input sequence was skipped".into()));
    }
    Ok(())
}

fn extract_one(seq: &Sequence, cfg: &NetworkConfig, out: &Path) -> Result<Outcome, Error> {
    let volume = load_volume(&seq.source)?;
    let dims = volume.dims();
    let name = seq.rel.display();
    let p = match plan(dims, cfg) {
        Ok(p) => p,
        Err(e @ Error::VolumeTooSmall { .. }) => return Ok(Outcome::Skipped(format!("skipping {name}: {e}"))),
        Err(e) => return Err(e),
    };
    let descriptor = describe(&volume, cfg)?;
    let mut path = out.join(&seq.rel).into_os_string();
    path.push(".soed");
    let path = PathBuf::from(path);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    descriptor.save(&path)?;
    Ok(Outcome::Written(format!(
        "{name}: dims {}x{}x{} scales {} layers {:?} D {}",
        dims[0],
        dims[1],
        dims[2],
        p.scale_count,
        descriptor.layers,
        descriptor.len()
    )))
}

fn cmd_eval(features: &Path, classifier: Classifier, similarity: Similarity, report: &Path) -> Result<(), Error> {
    let gallery = load_gallery(features)?;
    let result = loo_eval_with(&gallery, classifier, similarity)?;
    let json = serde_json::to_string_pretty(&result).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    if let Some(parent) = report.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(report, json + "\n")?;
    println!(
        "{classifier} accuracy {:.4} ({}/{})",
        result.accuracy, result.correct, result.samples
    );
    Ok(())
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> Result<(), Error> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn cmd_inspect(path: &Path) -> Result<(), Error> {
    let d = Descriptor::load(path)?;
    let dirs = icosa_directions();
    let mut out = String::new();
    writeln!(out, "D {} scales {} layers {:?}", d.len(), d.scale_count(), d.layers).unwrap();
    writeln!(
        out,
        "{:>6} {:>5} {:<8} {:<8} {:>6} {:>26} {:>12}",
        "index", "scale", "signs", "parents", "orient", "direction (x, y, t)", "value"
    )
    .unwrap();
    for (i, (tag, value)) in d.tags.iter().zip(&d.values).enumerate() {
        let parents = if tag.parents.is_empty() {
            ".".to_string()
        } else {
            tag.parents.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")
        };
        let (orient, vector) = match tag.orientation {
            Some(o) => {
                let v = dirs.get(o as usize);
                (o.to_string(), format!("({:+.4}, {:+.4}, {:+.4})", v[0], v[1], v[2]))
            }
            None => (".".to_string(), "-".to_string()),
        };
        writeln!(
            out,
            "{i:>6} {:>5} {:<8} {parents:<8} {orient:>6} {vector:>26} {value:>12.6e}",
            tag.scale,
            tag.sign_path.to_string()
        )
        .unwrap();
    }
    writeln!(out, "directions").unwrap();
    for (i, v) in dirs.as_slice().iter().enumerate() {
        writeln!(out, "{i:>6} ({:+.6}, {:+.6}, {:+.6})", v[0], v[1], v[2]).unwrap();
    }
    emit(&out)
}
