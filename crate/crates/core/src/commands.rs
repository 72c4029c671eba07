//! Implementations behind the `seer` binary's subcommands. Kept as library
//! functions so the whole pipeline can be driven in-process by tests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use crate::dataset::{
    assemble, build_indices, filter_users, load_split, load_triplets, playcounts_to_ratings,
    save_split, split_ratings, Dataset, Thresholds,
};
use crate::eval::{
    avg_percentage_matching, load_song_tags, map_at_k, percentage_matching, ranked_tags,
    save_dtw_validation, save_eval_report, validate_explanations, TagSet,
};
use crate::explain::{export_explanation, segment_forward_propagation};
use crate::midi::{parse_file, MidiSong, ParseOptions};
use crate::models::{
    load_checkpoint, recommend, save_checkpoint, to_examples, train_mf_epoch, train_seer_epoch,
    Checkpoint, ItemPop, MfModel, MfTrainer, SeerConfig, SeerModel, SeerRanker, SeerTrainer,
    TrainOptions,
};
use crate::pool::thread_pool;
use crate::rng::sub_rng;
use crate::synth::{generate, write_corpus, SyntheticSpec};
use crate::timeseries::{
    build_lookup, compute_target_t, events_to_timeseries, load_corpus, normalize_length,
    save_corpus, RawSeries, SongLookup,
};

/// Scan a directory for MIDI sources (`.mid`, `.midi`, `.smf`, `.csv`),
/// keyed by file stem.
fn scan_midi_dir(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut map = BTreeMap::new();
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        if !matches!(ext.as_str(), "mid" | "midi" | "smf" | "csv") {
            continue;
        }
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if let Some(previous) = map.insert(stem.clone(), path.clone()) {
            bail!(
                "two MIDI sources share the stem {stem:?}: {} and {}",
                previous.display(),
                path.display()
            );
        }
    }
    Ok(map)
}

#[derive(Debug, Clone)]
pub struct PrepareArgs {
    pub midi_dir: PathBuf,
    pub triplets: PathBuf,
    pub out: PathBuf,
    pub min_unique: usize,
    /// Fixed step count, or `None` to use the corpus median.
    pub timesteps: Option<usize>,
    pub thresholds: Thresholds,
    pub test_fraction: f64,
    pub seed: u64,
    pub drop_zero_velocity: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrepareSummary {
    pub n_users: usize,
    pub n_songs: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub target_steps: usize,
}

/// Intersect the triplets with the MIDI corpus, filter sparse users, map
/// play counts to ratings, split, and write `lookup.bin`, `songs.idx`,
/// `split.csv` and the `midi/` copies into the output directory.
pub fn cmd_prepare(args: &PrepareArgs) -> Result<PrepareSummary> {
    let midi_files = scan_midi_dir(&args.midi_dir)?;
    let interactions = load_triplets(&args.triplets)?;
    let triplet_songs: std::collections::BTreeSet<&str> =
        interactions.iter().map(|i| i.song_id.as_str()).collect();

    let corpus_ids: Vec<String> = midi_files
        .keys()
        .filter(|stem| triplet_songs.contains(stem.as_str()))
        .cloned()
        .collect();
    if corpus_ids.is_empty() {
        bail!(
            "no overlapping songs: {} triplet songs, {} MIDI files, empty intersection",
            triplet_songs.len(),
            midi_files.len()
        );
    }

    let in_corpus: std::collections::BTreeSet<&str> =
        corpus_ids.iter().map(|s| s.as_str()).collect();
    let interactions: Vec<_> = interactions
        .into_iter()
        .filter(|it| in_corpus.contains(it.song_id.as_str()))
        .collect();
    let interactions = filter_users(interactions, args.min_unique);
    if interactions.is_empty() {
        bail!(
            "no users left after requiring {} unique songs each",
            args.min_unique
        );
    }

    let opts = ParseOptions {
        drop_zero_velocity: args.drop_zero_velocity,
    };
    let raw: Vec<RawSeries> = thread_pool().install(|| {
        corpus_ids
            .par_iter()
            .map(|id| {
                let song = parse_file(&midi_files[id], &opts)?;
                Ok(events_to_timeseries(&song))
            })
            .collect::<Result<_>>()
    })?;

    let target_steps = match args.timesteps {
        Some(t) => t,
        None => compute_target_t(&raw)?,
    };
    if target_steps == 0 {
        bail!("normalized step count is zero (most songs have no note-on events)");
    }
    let normalized: Vec<_> = raw
        .iter()
        .map(|r| normalize_length(r, target_steps))
        .collect();
    let lookup = build_lookup(&normalized)?;
    let durations: Vec<u64> = raw.iter().map(|r| r.duration_us()).collect();

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    save_corpus(&args.out, &lookup, &durations)?;
    let midi_out = args.out.join("midi");
    std::fs::create_dir_all(&midi_out)?;
    for id in &corpus_ids {
        let src = &midi_files[id];
        let ext = src
            .extension()
            .map(|e| e.to_string_lossy().into_owned())
            .unwrap_or_default();
        std::fs::copy(src, midi_out.join(format!("{id}.{ext}")))
            .with_context(|| format!("copying {}", src.display()))?;
    }

    let (user_index, _) = build_indices(&interactions, &[]);
    let song_index = lookup.index.clone();
    let ratings = playcounts_to_ratings(&interactions, &args.thresholds, &user_index, &song_index);
    let (train, test) = split_ratings(&ratings, user_index.len(), args.test_fraction, args.seed);
    let dataset = assemble(user_index, song_index, train, test);
    save_split(&args.out.join("split.csv"), &dataset)?;

    Ok(PrepareSummary {
        n_users: dataset.n_users(),
        n_songs: lookup.n_songs(),
        n_train: dataset.train.len(),
        n_test: dataset.test.len(),
        target_steps,
    })
}

/// Everything a prepared directory holds.
pub struct PreparedData {
    pub dir: PathBuf,
    pub lookup: SongLookup,
    pub durations: Vec<u64>,
    pub dataset: Dataset,
}

pub fn load_prepared(dir: &Path) -> Result<PreparedData> {
    let (lookup, durations) = load_corpus(dir)?;
    let dataset = load_split(&dir.join("split.csv"), &lookup.index)?;
    Ok(PreparedData {
        dir: dir.to_path_buf(),
        lookup,
        durations,
        dataset,
    })
}

impl PreparedData {
    pub fn user_of(&self, id: &str) -> Result<usize> {
        self.dataset
            .user_index
            .get(id)
            .copied()
            .ok_or_else(|| anyhow!("unknown user id {id:?}"))
    }

    pub fn song_of(&self, id: &str) -> Result<usize> {
        self.lookup
            .index
            .get(id)
            .copied()
            .ok_or_else(|| anyhow!("unknown song id {id:?}"))
    }

    pub fn song_ids(&self) -> Vec<&str> {
        self.lookup.ids_by_row()
    }

    /// Parse one song's original MIDI copy back out of the prepared dir.
    pub fn midi_song(&self, song_id: &str) -> Result<MidiSong> {
        let midi_dir = self.dir.join("midi");
        let files = scan_midi_dir(&midi_dir)?;
        let path = files
            .get(song_id)
            .ok_or_else(|| anyhow!("{} has no MIDI copy for {song_id:?}", midi_dir.display()))?;
        Ok(parse_file(path, &ParseOptions::default())?)
    }

    /// Parse every song's MIDI copy into event series, indexed by lookup row.
    pub fn all_raw_series(&self) -> Result<Vec<RawSeries>> {
        let files = scan_midi_dir(&self.dir.join("midi"))?;
        let ids = self.song_ids();
        thread_pool().install(|| {
            ids.par_iter()
                .map(|id| {
                    let path = files
                        .get(*id)
                        .ok_or_else(|| anyhow!("missing MIDI copy for {id:?}"))?;
                    let song = parse_file(path, &ParseOptions::default())?;
                    Ok(events_to_timeseries(&song))
                })
                .collect()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Seer,
    Mf,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "seer" => Ok(ModelKind::Seer),
            "mf" => Ok(ModelKind::Mf),
            other => Err(format!("unknown model {other:?} (expected seer or mf)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub data: PathBuf,
    pub model: ModelKind,
    pub cell: crate::nn::CellType,
    pub latent: usize,
    pub batch: usize,
    pub epochs: usize,
    pub learning_rate: f32,
    pub seed: u64,
    pub out: PathBuf,
    pub clip: Option<f32>,
    /// Warm-start checkpoint; must match the data and flags dimensionally.
    pub init: Option<PathBuf>,
    /// Epoch-MSE log destination; defaults to `train_log.csv` next to `out`.
    pub log: Option<PathBuf>,
}

fn check_seer_dims(
    model: &SeerModel,
    data: &PreparedData,
    latent: usize,
    cell: crate::nn::CellType,
) -> Result<()> {
    let c = &model.config;
    if model.n_users() != data.dataset.n_users()
        || c.n_songs != data.lookup.n_songs()
        || c.target_steps != data.lookup.target_steps
        || c.latent != latent
        || c.cell_type != cell
    {
        bail!(
            "dimension mismatch with existing checkpoint: checkpoint is {} users × d={} ({}, T={}, {} songs), \
             requested d={} {} over {} users, {} songs, T={}",
            model.n_users(),
            c.latent,
            c.cell_type,
            c.target_steps,
            c.n_songs,
            latent,
            cell,
            data.dataset.n_users(),
            data.lookup.n_songs(),
            data.lookup.target_steps
        );
    }
    Ok(())
}

fn check_mf_dims(model: &MfModel, data: &PreparedData, latent: usize) -> Result<()> {
    if model.user_embedding.rows != data.dataset.n_users()
        || model.item_embedding.rows != data.lookup.n_songs()
        || model.latent() != latent
    {
        bail!(
            "dimension mismatch with existing checkpoint: checkpoint is {}×{} users, {}×{} songs, requested d={} \
             over {} users, {} songs",
            model.user_embedding.rows,
            model.latent(),
            model.item_embedding.rows,
            model.latent(),
            latent,
            data.dataset.n_users(),
            data.lookup.n_songs()
        );
    }
    Ok(())
}

/// Train a model over a prepared directory, logging one `epoch,mse` row per
/// epoch and writing the checkpoint to `out`.
pub fn cmd_train(args: &TrainArgs) -> Result<Vec<(usize, f32)>> {
    let data = load_prepared(&args.data)?;
    let examples = to_examples(&data.dataset.train);
    if examples.is_empty() {
        bail!("train fold is empty");
    }
    let opts = TrainOptions {
        batch_size: args.batch,
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        seed: args.seed,
        clip_norm: args.clip,
    };

    let mut log: Vec<(usize, f32)> = Vec::with_capacity(args.epochs);
    let checkpoint = match args.model {
        ModelKind::Seer => {
            let mut model = match &args.init {
                Some(path) => match load_checkpoint(path)? {
                    Checkpoint::Seer(m) => {
                        check_seer_dims(&m, &data, args.latent, args.cell)?;
                        m
                    }
                    Checkpoint::Mf(_) => bail!("--init checkpoint is an mf model, expected seer"),
                },
                None => SeerModel::init(
                    data.dataset.n_users(),
                    SeerConfig {
                        cell_type: args.cell,
                        latent: args.latent,
                        target_steps: data.lookup.target_steps,
                        n_songs: data.lookup.n_songs(),
                    },
                    args.seed,
                ),
            };
            let mut trainer = SeerTrainer::new(&model);
            for epoch in 0..args.epochs {
                let mse = train_seer_epoch(
                    &mut model,
                    &data.lookup,
                    &examples,
                    &mut trainer,
                    &opts,
                    epoch,
                );
                eprintln!("epoch {epoch}: mse {mse:.6}");
                log.push((epoch, mse));
            }
            Checkpoint::Seer(model)
        }
        ModelKind::Mf => {
            let mut model = match &args.init {
                Some(path) => match load_checkpoint(path)? {
                    Checkpoint::Mf(m) => {
                        check_mf_dims(&m, &data, args.latent)?;
                        m
                    }
                    Checkpoint::Seer(_) => bail!("--init checkpoint is a seer model, expected mf"),
                },
                None => MfModel::init(
                    data.dataset.n_users(),
                    data.lookup.n_songs(),
                    args.latent,
                    args.seed,
                ),
            };
            let mut trainer = MfTrainer::new(&model);
            for epoch in 0..args.epochs {
                let mse = train_mf_epoch(&mut model, &examples, &mut trainer, &opts, epoch);
                eprintln!("epoch {epoch}: mse {mse:.6}");
                log.push((epoch, mse));
            }
            Checkpoint::Mf(model)
        }
    };

    save_checkpoint(&args.out, &checkpoint)?;
    let log_path = args.log.clone().unwrap_or_else(|| {
        args.out
            .parent()
            .unwrap_or(Path::new("."))
            .join("train_log.csv")
    });
    let mut text = String::from("epoch,mse\n");
    for (epoch, mse) in &log {
        text.push_str(&format!("{epoch},{mse:.8}\n"));
    }
    std::fs::write(&log_path, text).with_context(|| format!("writing {}", log_path.display()))?;
    Ok(log)
}

#[derive(Debug, Clone)]
pub struct RecommendArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub user: String,
    pub k: usize,
    pub include_rated: bool,
}

/// Top-K songs for one user as `(song_id, score)` pairs, scores descending.
pub fn cmd_recommend(args: &RecommendArgs) -> Result<Vec<(String, f32)>> {
    let data = load_prepared(&args.data)?;
    let user = data.user_of(&args.user)?;
    let candidates = data.dataset.candidates(user, args.include_rated);
    let ranked = match load_checkpoint(&args.model)? {
        Checkpoint::Seer(model) => {
            check_seer_dims(&model, &data, model.config.latent, model.config.cell_type)?;
            let ranker = SeerRanker {
                model: &model,
                lookup: &data.lookup,
            };
            recommend(&ranker, user, &candidates, args.k)
        }
        Checkpoint::Mf(model) => {
            check_mf_dims(&model, &data, model.latent())?;
            recommend(&model, user, &candidates, args.k)
        }
    };
    let ids = data.song_ids();
    Ok(ranked
        .items
        .into_iter()
        .map(|(song, score)| (ids[song].to_string(), score))
        .collect())
}

#[derive(Debug, Clone)]
pub struct ExplainArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub user: String,
    pub song: String,
    pub window_s: u64,
    pub stride_s: u64,
    pub out_midi: PathBuf,
    pub out_meta: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainSummary {
    pub start_us: u64,
    pub end_us: u64,
    pub predicted_rating: f32,
    pub n_segments: usize,
}

/// Explain one (user, song) pair: write the winning 10-second segment as a
/// playable MIDI file plus its metadata CSV line.
pub fn cmd_explain(args: &ExplainArgs) -> Result<ExplainSummary> {
    let data = load_prepared(&args.data)?;
    let user = data.user_of(&args.user)?;
    data.song_of(&args.song)?;
    let model = match load_checkpoint(&args.model)? {
        Checkpoint::Seer(model) => model,
        Checkpoint::Mf(_) => bail!("explanations need a seer checkpoint, got an mf model"),
    };
    check_seer_dims(&model, &data, model.config.latent, model.config.cell_type)?;
    let song = data.midi_song(&args.song)?;
    let series = events_to_timeseries(&song);
    let explanation =
        segment_forward_propagation(&model, user, &series, args.window_s, args.stride_s)?;
    export_explanation(
        &explanation,
        &song,
        &args.user,
        &args.out_midi,
        &args.out_meta,
    )?;
    Ok(ExplainSummary {
        start_us: explanation.segment.start_us,
        end_us: explanation.segment.end_us,
        predicted_rating: explanation.predicted_rating,
        n_segments: explanation.all_segment_scores.len(),
    })
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    /// Checkpoint path; `None` means `baseline` is used instead.
    pub model: Option<PathBuf>,
    /// Currently only "itempop".
    pub baseline: Option<String>,
    pub data: PathBuf,
    pub k: usize,
    pub relevance_min_rating: u8,
    /// Per-user AP report; defaults to `eval_report.csv` in the data dir.
    pub out: Option<PathBuf>,
}

/// MAP@K over the held-out fold. Returns (model name, MAP).
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(String, f64)> {
    let data = load_prepared(&args.data)?;
    let checkpoint = match (&args.model, &args.baseline) {
        (Some(path), None) => Some(load_checkpoint(path)?),
        (None, Some(name)) if name == "itempop" => None,
        (None, Some(other)) => bail!("unknown baseline {other:?} (expected itempop)"),
        _ => bail!("pass exactly one of --model or --baseline"),
    };
    let report = match &checkpoint {
        Some(Checkpoint::Seer(model)) => {
            check_seer_dims(model, &data, model.config.latent, model.config.cell_type)?;
            let ranker = SeerRanker {
                model,
                lookup: &data.lookup,
            };
            map_at_k(
                &ranker,
                &data.dataset,
                args.k,
                args.relevance_min_rating,
                "seer",
                model.seed,
            )
        }
        Some(Checkpoint::Mf(model)) => {
            check_mf_dims(model, &data, model.latent())?;
            map_at_k(
                model,
                &data.dataset,
                args.k,
                args.relevance_min_rating,
                "mf",
                model.seed,
            )
        }
        None => {
            let pop = ItemPop::from_train(&data.dataset.train, data.lookup.n_songs());
            map_at_k(
                &pop,
                &data.dataset,
                args.k,
                args.relevance_min_rating,
                "itempop",
                0,
            )
        }
    };
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.data.join("eval_report.csv"));
    save_eval_report(&out, &report, &data.dataset.user_ids())?;
    Ok((report.model_name.clone(), report.map))
}

#[derive(Debug, Clone)]
pub struct ValidateArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub users: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// DTW validation rows for a user sample; writes `user,dtw_e,dtw_r`.
pub fn cmd_validate_explanations(args: &ValidateArgs) -> Result<usize> {
    let data = load_prepared(&args.data)?;
    let model = match load_checkpoint(&args.model)? {
        Checkpoint::Seer(model) => model,
        Checkpoint::Mf(_) => bail!("explanation validation needs a seer checkpoint"),
    };
    check_seer_dims(&model, &data, model.config.latent, model.config.cell_type)?;
    let series = data.all_raw_series()?;
    let rows = validate_explanations(
        &model,
        &data.dataset,
        &data.lookup,
        &series,
        args.users,
        args.seed,
    )?;
    save_dtw_validation(&args.out, &rows, &data.dataset.user_ids())?;
    Ok(rows.len())
}

#[derive(Debug, Clone)]
pub struct TagMatchingArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub tags: PathBuf,
    /// Tag sets to use for explanation segments; defaults to `tags`.
    pub explanation_tags: Option<PathBuf>,
    pub users: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// Per-user percentage matching of top-5 recommendations and explanations
/// against the user's top-k preferred tags, k ∈ {1, 2, 3}. Returns the
/// averages `(k, avg_rec, avg_exp)`.
pub fn cmd_tag_matching(args: &TagMatchingArgs) -> Result<Vec<(usize, f64, f64)>> {
    let data = load_prepared(&args.data)?;
    let model = match load_checkpoint(&args.model)? {
        Checkpoint::Seer(model) => model,
        Checkpoint::Mf(_) => bail!("tag matching needs a seer checkpoint"),
    };
    check_seer_dims(&model, &data, model.config.latent, model.config.cell_type)?;
    let song_tags = load_song_tags(&args.tags)?;
    let exp_tags = match &args.explanation_tags {
        Some(path) => load_song_tags(path)?,
        None => song_tags.clone(),
    };
    let song_ids = data.song_ids();
    let empty = TagSet::new();
    let tags_of = |song: usize| song_tags.get(song_ids[song]).unwrap_or(&empty);
    let exp_tags_of = |song: usize| exp_tags.get(song_ids[song]).unwrap_or(&empty);

    // Preferred tags come from every song the user rated above 3.
    let mut liked: Vec<Vec<usize>> = vec![Vec::new(); data.dataset.n_users()];
    for r in data.dataset.train.iter().chain(&data.dataset.test) {
        if r.rating > 3 {
            liked[r.user].push(r.song);
        }
    }

    use rand::seq::SliceRandom;
    let mut users: Vec<usize> = (0..data.dataset.n_users()).collect();
    users.shuffle(&mut sub_rng(args.seed, "sampling", 0));
    let mut sampled: Vec<usize> = users
        .into_iter()
        .take(args.users.min(data.dataset.n_users()))
        .collect();
    sampled.sort_unstable();

    let ranker = SeerRanker {
        model: &model,
        lookup: &data.lookup,
    };
    let mut out = String::from("user,k,pct_rec,pct_exp\n");
    let user_ids = data.dataset.user_ids();
    let mut per_k: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); 3];
    for &user in &sampled {
        let preferred = ranked_tags(liked[user].iter().map(|&s| tags_of(s)));
        if preferred.is_empty() {
            eprintln!(
                "tag-matching: user {} has no tagged liked songs, skipping",
                user_ids[user]
            );
            continue;
        }
        let candidates = data.dataset.candidates(user, false);
        if candidates.len() < 5 {
            eprintln!(
                "tag-matching: user {} has too few candidates, skipping",
                user_ids[user]
            );
            continue;
        }
        let top = recommend(&ranker, user, &candidates, 5);
        let rec_sets: Vec<&TagSet> = top.items.iter().map(|&(s, _)| tags_of(s)).collect();
        let exp_sets: Vec<&TagSet> = top.items.iter().map(|&(s, _)| exp_tags_of(s)).collect();
        for k in 1..=3usize {
            let t_k: TagSet = preferred.iter().take(k).cloned().collect();
            let pct_rec = percentage_matching(&rec_sets, &t_k)?;
            let pct_exp = percentage_matching(&exp_sets, &t_k)?;
            out.push_str(&format!(
                "{},{},{:.6},{:.6}\n",
                user_ids[user], k, pct_rec, pct_exp
            ));
            per_k[k - 1].0.push(pct_rec);
            per_k[k - 1].1.push(pct_exp);
        }
    }
    std::fs::write(&args.out, out).with_context(|| format!("writing {}", args.out.display()))?;
    Ok((1..=3)
        .map(|k| {
            let (rec, exp) = &per_k[k - 1];
            (
                k,
                avg_percentage_matching(rec),
                avg_percentage_matching(exp),
            )
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct GenSyntheticArgs {
    pub out: PathBuf,
    pub spec: SyntheticSpec,
}

/// Generate the planted-preference corpus: `midi/`, `triplets.tsv`,
/// `manifest.csv`.
pub fn cmd_gen_synthetic(args: &GenSyntheticArgs) -> Result<(usize, usize, usize)> {
    let corpus = generate(&args.spec)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_corpus(&args.out, &corpus)?;
    Ok((
        corpus.songs.len(),
        args.spec.n_users,
        corpus.interactions.len(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen_and_prepare(dir: &Path, seed: u64) -> (PathBuf, PrepareSummary) {
        let corpus_dir = dir.join(format!("corpus{seed}"));
        cmd_gen_synthetic(&GenSyntheticArgs {
            out: corpus_dir.clone(),
            spec: SyntheticSpec {
                n_users: 8,
                n_songs: 10,
                n_archetypes: 2,
                min_events: 20,
                max_events: 40,
                seed,
            },
        })
        .unwrap();
        let out = dir.join(format!("prepared{seed}"));
        let summary = cmd_prepare(&PrepareArgs {
            midi_dir: corpus_dir.join("midi"),
            triplets: corpus_dir.join("triplets.tsv"),
            out: out.clone(),
            min_unique: 4,
            timesteps: None,
            thresholds: Thresholds::default(),
            test_fraction: 0.2,
            seed,
            drop_zero_velocity: false,
        })
        .unwrap();
        (out, summary)
    }

    #[test]
    fn prepare_intersects_and_splits() {
        let dir = tempfile::tempdir().unwrap();
        let (out, summary) = gen_and_prepare(dir.path(), 1);
        assert_eq!(summary.n_users, 8);
        assert_eq!(summary.n_songs, 10);
        assert!(summary.n_train > 0 && summary.n_test > 0);
        let data = load_prepared(&out).unwrap();
        assert_eq!(data.lookup.n_songs(), 10);
        assert_eq!(data.dataset.n_users(), 8);
        // songs without a train rating can still appear in the lookup
        assert_eq!(data.durations.len(), 10);
    }

    #[test]
    fn prepare_requires_an_intersection() {
        let dir = tempfile::tempdir().unwrap();
        let midi_dir = dir.path().join("midi");
        std::fs::create_dir_all(&midi_dir).unwrap();
        let triplets = dir.path().join("t.tsv");
        std::fs::write(&triplets, "u1\tsX\t3\n").unwrap();
        let err = cmd_prepare(&PrepareArgs {
            midi_dir,
            triplets,
            out: dir.path().join("out"),
            min_unique: 1,
            timesteps: None,
            thresholds: Thresholds::default(),
            test_fraction: 0.2,
            seed: 0,
            drop_zero_velocity: false,
        })
        .unwrap_err();
        assert!(err.to_string().contains("no overlapping songs"), "{err}");
    }

    #[test]
    fn train_recommend_explain_evaluate_pipeline() {
        let dir = tempfile::tempdir().unwrap();
        let (out, _) = gen_and_prepare(dir.path(), 2);
        let ckpt = dir.path().join("m.ckpt");
        let log = cmd_train(&TrainArgs {
            data: out.clone(),
            model: ModelKind::Seer,
            cell: crate::nn::CellType::Gru,
            latent: 6,
            batch: 16,
            epochs: 2,
            learning_rate: 0.01,
            seed: 2,
            out: ckpt.clone(),
            clip: Some(5.0),
            init: None,
            log: None,
        })
        .unwrap();
        assert_eq!(log.len(), 2);
        assert!(ckpt.exists());
        assert!(dir.path().join("train_log.csv").exists());

        let recs = cmd_recommend(&RecommendArgs {
            model: ckpt.clone(),
            data: out.clone(),
            user: "u000".into(),
            k: 5,
            include_rated: false,
        })
        .unwrap();
        assert_eq!(recs.len(), 5);
        for w in recs.windows(2) {
            assert!(w[0].1 >= w[1].1);
        }

        let midi_path = dir.path().join("exp.mid");
        let meta_path = dir.path().join("exp.csv");
        let summary = cmd_explain(&ExplainArgs {
            model: ckpt.clone(),
            data: out.clone(),
            user: "u000".into(),
            song: recs[0].0.clone(),
            window_s: 10,
            stride_s: 1,
            out_midi: midi_path.clone(),
            out_meta: meta_path.clone(),
        })
        .unwrap();
        assert!(summary.end_us - summary.start_us <= 10_000_000);
        assert!(midi_path.exists() && meta_path.exists());

        let (name, map) = cmd_evaluate(&EvaluateArgs {
            model: Some(ckpt.clone()),
            baseline: None,
            data: out.clone(),
            k: 10,
            relevance_min_rating: 1,
            out: None,
        })
        .unwrap();
        assert_eq!(name, "seer");
        assert!((0.0..=1.0).contains(&map));
        assert!(out.join("eval_report.csv").exists());

        let (name, pop_map) = cmd_evaluate(&EvaluateArgs {
            model: None,
            baseline: Some("itempop".into()),
            data: out.clone(),
            k: 10,
            relevance_min_rating: 1,
            out: Some(dir.path().join("pop.csv")),
        })
        .unwrap();
        assert_eq!(name, "itempop");
        assert!((0.0..=1.0).contains(&pop_map));

        // Unknown ids surface as errors.
        assert!(cmd_recommend(&RecommendArgs {
            model: ckpt.clone(),
            data: out.clone(),
            user: "nobody".into(),
            k: 3,
            include_rated: false,
        })
        .is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (out_a, _) = gen_and_prepare(dir.path(), 3);
        let ckpt = dir.path().join("a.ckpt");
        cmd_train(&TrainArgs {
            data: out_a.clone(),
            model: ModelKind::Seer,
            cell: crate::nn::CellType::Rnn,
            latent: 4,
            batch: 16,
            epochs: 1,
            learning_rate: 0.01,
            seed: 3,
            out: ckpt.clone(),
            clip: Some(5.0),
            init: None,
            log: None,
        })
        .unwrap();
        // Warm start with a different latent size must fail.
        let err = cmd_train(&TrainArgs {
            data: out_a.clone(),
            model: ModelKind::Seer,
            cell: crate::nn::CellType::Rnn,
            latent: 8,
            batch: 16,
            epochs: 1,
            learning_rate: 0.01,
            seed: 3,
            out: dir.path().join("b.ckpt"),
            clip: Some(5.0),
            init: Some(ckpt),
            log: None,
        })
        .unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{err}");
    }

    #[test]
    fn validate_and_tag_matching_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let (out, _) = gen_and_prepare(dir.path(), 4);
        let ckpt = dir.path().join("m.ckpt");
        cmd_train(&TrainArgs {
            data: out.clone(),
            model: ModelKind::Seer,
            cell: crate::nn::CellType::Gru,
            latent: 4,
            batch: 16,
            epochs: 1,
            learning_rate: 0.01,
            seed: 4,
            out: ckpt.clone(),
            clip: Some(5.0),
            init: None,
            log: None,
        })
        .unwrap();

        let dtw_out = dir.path().join("dtw.csv");
        let n = cmd_validate_explanations(&ValidateArgs {
            model: ckpt.clone(),
            data: out.clone(),
            users: 4,
            seed: 4,
            out: dtw_out.clone(),
        })
        .unwrap();
        assert!(n > 0);
        let text = std::fs::read_to_string(&dtw_out).unwrap();
        assert!(text.starts_with("user,dtw_e,dtw_r\n"));
        assert_eq!(text.lines().count(), n + 1);

        // Tag file: tag songs by archetype parity.
        let tags_path = dir.path().join("song_tags.csv");
        let mut tags = String::new();
        for s in 0..10 {
            let tag = if s % 2 == 0 { "even" } else { "odd" };
            tags.push_str(&format!("s{s:03},{tag}\n"));
        }
        std::fs::write(&tags_path, tags).unwrap();
        let averages = cmd_tag_matching(&TagMatchingArgs {
            model: ckpt,
            data: out.clone(),
            tags: tags_path,
            explanation_tags: None,
            users: 4,
            seed: 4,
            out: dir.path().join("tags_out.csv"),
        })
        .unwrap();
        assert_eq!(averages.len(), 3);
        for (k, rec, exp) in averages {
            assert!((1..=3).contains(&k));
            assert!((0.0..=100.0).contains(&rec));
            assert!((0.0..=100.0).contains(&exp));
        }
    }
}
