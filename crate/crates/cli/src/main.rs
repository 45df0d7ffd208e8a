use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use log::{info, warn};

use placerec::config::Settings;
use placerec::database::KeyframeDatabase;
use placerec::dataset::{read_pairs, read_poses, read_poses_if_present, read_sequence, INTRINSICS_FILE, LOOPS_FILE, POSES_FILE};
use placerec::eval::{bench_csv, lcd_outcomes_for, pr_csv, pr_sweep, reloc_csv, run_benchmark, run_reloc_eval, success_rate};
use placerec::features::CameraIntrinsics;
use placerec::geometry::Pose;
use placerec::synth::generate_synthetic_to;
use placerec::vocabulary::{load_vocab, save_vocab, train_incremental_detailed};

#[derive(Parser)]
#[command(name = "placerec", version, about = "Bag-of-words place recognition and re-localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a vocabulary tree from a frame sequence.
    TrainVocab {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        top_matches: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        merge_eps: Option<f32>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build a keyframe database from a frame sequence.
    BuildDb {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Loop-closure precision/recall sweep.
    DetectLoops {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-localize query frames against a database.
    Relocalize {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        intrinsics: Option<PathBuf>,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the per-frame stages.
    Bench {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        intrinsics: Option<PathBuf>,
    },
}

fn settings(path: Option<&Path>) -> anyhow::Result<Settings> {
    match path {
        Some(p) => Settings::from_file(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(Settings::default()),
    }
}

fn intrinsics(explicit: Option<&Path>, dirs: &[&Path]) -> anyhow::Result<CameraIntrinsics> {
    if let Some(p) = explicit {
        return CameraIntrinsics::from_file(p).with_context(|| format!("reading {}", p.display()));
    }
    for dir in dirs {
        let p = dir.join(INTRINSICS_FILE);
        if p.exists() {
            return CameraIntrinsics::from_file(&p).with_context(|| format!("reading {}", p.display()));
        }
    }
    bail!(placerec::Error::MissingGroundTruth(format!(
        "no {INTRINSICS_FILE} found and --intrinsics not given"
    )))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::TrainVocab { input, out, k, levels, top_matches, seed, merge_eps, config } => {
            let mut params = settings(config.as_deref())?.train;
            if let Some(k) = k {
                params.tree.branching = k;
            }
            if let Some(l) = levels {
                params.tree.max_levels = l;
            }
            if let Some(t) = top_matches {
                params.matching.max_pairs_kept = t;
            }
            if let Some(s) = seed {
                params.seed = s;
            }
            if merge_eps.is_some() {
                params.merge_epsilon = merge_eps;
            }
            let seq = read_sequence(&input).with_context(|| format!("reading {}", input.display()))?;
            let outcome = train_incremental_detailed(&seq, &params)?;
            info!("trained {} words over {} levels from {} frames", outcome.vocab.num_words(), outcome.vocab.levels(), seq.len());
            save_vocab(&outcome.vocab, &out)?;
        }
        Command::BuildDb { input, vocab, out } => {
            let vocab = Arc::new(load_vocab(&vocab)?);
            let seq = read_sequence(&input)?;
            let poses = read_poses_if_present(&input)?;
            if poses.is_empty() {
                warn!("no {POSES_FILE} in {}, storing identity poses", input.display());
            }
            let mut db = KeyframeDatabase::new(vocab);
            for frame in seq {
                let pose = match poses.get(&frame.frame_id) {
                    Some(p) => *p,
                    None if poses.is_empty() => Pose::identity(),
                    None => bail!(placerec::Error::MissingGroundTruth(format!("no pose for frame {}", frame.frame_id))),
                };
                db.add_keyframe(frame, pose)?;
            }
            db.save(&out)?;
            let k = input.join(INTRINSICS_FILE);
            if k.exists() {
                std::fs::copy(&k, out.join(INTRINSICS_FILE)).with_context(|| format!("copying {}", k.display()))?;
            }
            info!("stored {} keyframes in {}", db.len(), out.display());
        }
        Command::DetectLoops { db, queries, config, out } => {
            let cfg = settings(config.as_deref())?.lcd;
            let db = KeyframeDatabase::load(&db)?;
            let loops_path = queries.join(LOOPS_FILE);
            if !loops_path.exists() {
                bail!(placerec::Error::MissingGroundTruth(format!("{} not found", loops_path.display())));
            }
            let loops = read_pairs(&loops_path)?;
            let frames = read_sequence(&queries)?;
            let outcomes = lcd_outcomes_for(&db, &frames, &cfg.lcd)?;
            let points = pr_sweep(&outcomes, &loops, &cfg);
            write_text(&out, &pr_csv(&points))?;
            info!("{} queries, {} planted loops, {} PR points", frames.len(), loops.len(), points.len());
        }
        Command::Relocalize { db, queries, out, config, intrinsics: k } => {
            let cfg = settings(config.as_deref())?.reloc;
            let k = intrinsics(k.as_deref(), &[&queries, &db])?;
            let db = KeyframeDatabase::load(&db)?;
            let poses_path = queries.join(POSES_FILE);
            if !poses_path.exists() {
                bail!(placerec::Error::MissingGroundTruth(format!("{} not found", poses_path.display())));
            }
            let truth = read_poses(&poses_path)?;
            let frames = read_sequence(&queries)?;
            let records = run_reloc_eval(&db, &frames, &truth, &k, &cfg)?;
            write_text(&out, &reloc_csv(&records))?;
            info!("success rate {:?} over {} queries", success_rate(&records), records.len());
        }
        Command::Synth { config, out } => {
            let cfg = settings(config.as_deref())?.synth;
            let ds = generate_synthetic_to(&cfg, &out)?;
            info!(
                "wrote {} sequence frames, {} loops, {} aliases to {}",
                ds.sequence.len(),
                ds.loops.len(),
                ds.aliases.len(),
                out.display()
            );
        }
        Command::Bench { vocab, db, out, config, intrinsics: k } => {
            let s = settings(config.as_deref())?;
            let k = intrinsics(k.as_deref(), &[&db])?;
            let db = KeyframeDatabase::load(&db)?;
            let rows = run_benchmark(&vocab, &db, &k, &s.lcd.lcd, &s.reloc, &s.bench)?;
            write_text(&out, &bench_csv(&rows))?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<placerec::Error>() {
        Some(placerec::Error::Config(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
