use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use seer_core::commands::{
    cmd_evaluate, cmd_explain, cmd_gen_synthetic, cmd_prepare, cmd_recommend, cmd_tag_matching,
    cmd_train, cmd_validate_explanations, EvaluateArgs, ExplainArgs, GenSyntheticArgs, ModelKind,
    PrepareArgs, RecommendArgs, TagMatchingArgs, TrainArgs, ValidateArgs,
};
use seer_core::dataset::Thresholds;
use seer_core::nn::CellType;
use seer_core::synth::SyntheticSpec;

/// Hybrid MIDI song recommender: prepare data, train, recommend, explain,
/// evaluate.
#[derive(Parser)]
#[command(name = "seer", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a training corpus from a MIDI directory and a play-count
    /// triplets file.
    Prepare(PrepareCli),
    /// Train a model over a prepared directory.
    Train(TrainCli),
    /// Top-K recommendations for one user.
    Recommend(RecommendCli),
    /// Explain a recommendation with its best 10-second segment.
    Explain(ExplainCli),
    /// MAP@K over the held-out fold.
    Evaluate(EvaluateCli),
    /// DTW validation of explanation similarity.
    ValidateExplanations(ValidateCli),
    /// Percentage matching of recommendations/explanations against
    /// preferred tags.
    TagMatching(TagMatchingCli),
    /// Generate a synthetic planted-preference corpus.
    GenSynthetic(GenSyntheticCli),
}

#[derive(Args)]
struct PrepareCli {
    /// Directory of .mid/.midi/.smf/.csv files named by song id.
    #[arg(long)]
    midi_dir: PathBuf,
    /// Tab-separated user_id, song_id, play_count file.
    #[arg(long)]
    triplets: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Drop users with fewer unique songs than this.
    #[arg(long, default_value_t = 20)]
    min_unique: usize,
    /// Normalized step count; "median" or a fixed integer.
    #[arg(long, default_value = "median")]
    timesteps: String,
    /// Four ascending play-count breakpoints for the 1–5 rating map.
    #[arg(long, default_value = "1,2,4,8", value_parser = parse_thresholds)]
    thresholds: Thresholds,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exclude note-ons with velocity 0.
    #[arg(long, default_value_t = false)]
    drop_zero_velocity: bool,
}

fn parse_thresholds(s: &str) -> Result<Thresholds, String> {
    let values: Vec<u64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| format!("bad threshold {p:?}"))
        })
        .collect::<Result<_, _>>()?;
    let array: [u64; 4] = values
        .try_into()
        .map_err(|_| "expected exactly 4 thresholds".to_string())?;
    Thresholds::new(array).map_err(|e| e.to_string())
}

#[derive(Args)]
struct TrainCli {
    /// Prepared data directory.
    #[arg(long)]
    data: PathBuf,
    /// seer or mf.
    #[arg(long, default_value = "seer")]
    model: ModelKind,
    /// rnn, gru or lstm.
    #[arg(long, default_value = "gru")]
    cell: CellType,
    /// Latent features (and hidden-state size).
    #[arg(long, default_value_t = 150)]
    latent: usize,
    #[arg(long, default_value_t = 500)]
    batch: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint destination.
    #[arg(long)]
    out: PathBuf,
    /// Global gradient-norm clip.
    #[arg(long, default_value_t = 5.0)]
    clip: f32,
    /// Disable gradient clipping.
    #[arg(long, default_value_t = false)]
    no_clip: bool,
    /// Warm-start from an existing checkpoint (dimensions must match).
    #[arg(long)]
    init: Option<PathBuf>,
    /// Epoch-MSE log path (default: train_log.csv next to --out).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct RecommendCli {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    user: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Also score songs the user already rated in train.
    #[arg(long, default_value_t = false)]
    include_rated: bool,
}

#[derive(Args)]
struct ExplainCli {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    user: String,
    #[arg(long)]
    song: String,
    /// Window length in seconds.
    #[arg(long, default_value_t = 10)]
    window: u64,
    /// Stride in seconds.
    #[arg(long, default_value_t = 1)]
    stride: u64,
    #[arg(long)]
    out_midi: PathBuf,
    #[arg(long)]
    out_meta: PathBuf,
}

#[derive(Args)]
struct EvaluateCli {
    /// Checkpoint to evaluate (omit when using --baseline).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Baseline name: itempop.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Minimum held-out rating that counts as relevant.
    #[arg(long, default_value_t = 1)]
    relevance_min_rating: u8,
    /// Per-user AP report path (default: eval_report.csv in the data dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateCli {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Sample size.
    #[arg(long, default_value_t = 100)]
    users: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "dtw_validation.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct TagMatchingCli {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// song_id,tag file.
    #[arg(long)]
    tags: PathBuf,
    /// Tag sets for explanation segments (defaults to --tags).
    #[arg(long)]
    explanation_tags: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    users: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "tag_matching.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct GenSyntheticCli {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30)]
    users: usize,
    #[arg(long, default_value_t = 40)]
    songs: usize,
    #[arg(long, default_value_t = 2)]
    archetypes: usize,
    #[arg(long, default_value_t = 30)]
    min_events: usize,
    #[arg(long, default_value_t = 90)]
    max_events: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(a) => {
            let timesteps = match a.timesteps.as_str() {
                "median" => None,
                other => Some(other.parse::<usize>().map_err(|_| {
                    anyhow::anyhow!(
                        "--timesteps must be \"median\" or a positive integer, got {other:?}"
                    )
                })?),
            };
            let summary = cmd_prepare(&PrepareArgs {
                midi_dir: a.midi_dir,
                triplets: a.triplets,
                out: a.out,
                min_unique: a.min_unique,
                timesteps,
                thresholds: a.thresholds,
                test_fraction: a.test_fraction,
                seed: a.seed,
                drop_zero_velocity: a.drop_zero_velocity,
            })?;
            println!(
                "prepared {} users, {} songs, {} train / {} test ratings, T={}",
                summary.n_users,
                summary.n_songs,
                summary.n_train,
                summary.n_test,
                summary.target_steps
            );
        }
        Command::Train(a) => {
            let log = cmd_train(&TrainArgs {
                data: a.data,
                model: a.model,
                cell: a.cell,
                latent: a.latent,
                batch: a.batch,
                epochs: a.epochs,
                learning_rate: a.lr,
                seed: a.seed,
                out: a.out,
                clip: if a.no_clip { None } else { Some(a.clip) },
                init: a.init,
                log: a.log,
            })?;
            if let Some((epoch, mse)) = log.last() {
                println!("trained {} epochs, final mse {:.6}", epoch + 1, mse);
            }
        }
        Command::Recommend(a) => {
            let recs = cmd_recommend(&RecommendArgs {
                model: a.model,
                data: a.data,
                user: a.user,
                k: a.k,
                include_rated: a.include_rated,
            })?;
            for (song, score) in recs {
                println!("{song}\t{score:.6}");
            }
        }
        Command::Explain(a) => {
            let summary = cmd_explain(&ExplainArgs {
                model: a.model,
                data: a.data,
                user: a.user,
                song: a.song,
                window_s: a.window,
                stride_s: a.stride,
                out_midi: a.out_midi,
                out_meta: a.out_meta,
            })?;
            println!(
                "explanation ({}, {}) rating {:.6} ({} segments scored)",
                summary.start_us, summary.end_us, summary.predicted_rating, summary.n_segments
            );
        }
        Command::Evaluate(a) => {
            let (name, map) = cmd_evaluate(&EvaluateArgs {
                model: a.model,
                baseline: a.baseline,
                data: a.data,
                k: a.k,
                relevance_min_rating: a.relevance_min_rating,
                out: a.out,
            })?;
            println!("{name} MAP@{} = {:.6}", a.k, map);
        }
        Command::ValidateExplanations(a) => {
            let rows = cmd_validate_explanations(&ValidateArgs {
                model: a.model,
                data: a.data,
                users: a.users,
                seed: a.seed,
                out: a.out.clone(),
            })?;
            println!("wrote {} rows to {}", rows, a.out.display());
        }
        Command::TagMatching(a) => {
            let averages = cmd_tag_matching(&TagMatchingArgs {
                model: a.model,
                data: a.data,
                tags: a.tags,
                explanation_tags: a.explanation_tags,
                users: a.users,
                seed: a.seed,
                out: a.out,
            })?;
            for (k, rec, exp) in averages {
                println!("k={k}: avg%matching rec {rec:.2}% exp {exp:.2}%");
            }
        }
        Command::GenSynthetic(a) => {
            let (songs, users, interactions) = cmd_gen_synthetic(&GenSyntheticArgs {
                out: a.out,
                spec: SyntheticSpec {
                    n_users: a.users,
                    n_songs: a.songs,
                    n_archetypes: a.archetypes,
                    min_events: a.min_events,
                    max_events: a.max_events,
                    seed: a.seed,
                },
            })?;
            println!("generated {songs} songs, {users} users, {interactions} interactions");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
