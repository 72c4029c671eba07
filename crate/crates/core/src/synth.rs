//! Synthetic corpus generator for desk-scale experiments.
//!
//! Songs are sampled from archetype motif pools with disjoint channel and
//! note ranges; each user is assigned one archetype and plays songs of that
//! archetype far more, so a content-aware model has a planted preference
//! structure to recover. The ground truth is recorded in a manifest.

use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::dataset::Interaction;
use crate::midi::{write_segment_midi, MidiEvent, MidiSong, TempoChange};
use crate::rng::sub_rng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Midi(#[from] crate::midi::MidiError),
    #[error("invalid spec: {0}")]
    BadSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_songs: usize,
    pub n_archetypes: usize,
    pub min_events: usize,
    pub max_events: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_users: 30,
            n_songs: 40,
            n_archetypes: 2,
            min_events: 30,
            max_events: 90,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub songs: Vec<MidiSong>,
    pub interactions: Vec<Interaction>,
    pub song_archetype: Vec<usize>,
    pub user_archetype: Vec<usize>,
}

const DIVISION: u16 = 480;

pub fn user_id(u: usize) -> String {
    format!("u{u:03}")
}

pub fn song_id(s: usize) -> String {
    format!("s{s:03}")
}

fn archetype_channels(archetype: usize) -> [u8; 4] {
    let base = ((archetype * 4) % 16) as u8;
    [base, base + 1, base + 2, base + 3]
}

/// Archetypes differ by which channels (feature columns) they play, not by
/// pitch statistics: identical note ranges keep per-archetype score offsets
/// out of the planted signal.
fn archetype_note_range(_archetype: usize) -> (u8, u8) {
    (36, 84)
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus, SynthError> {
    if spec.n_users == 0 || spec.n_songs == 0 || spec.n_archetypes == 0 {
        return Err(SynthError::BadSpec("counts must be positive".into()));
    }
    if spec.min_events == 0 || spec.min_events > spec.max_events {
        return Err(SynthError::BadSpec("bad events-per-song range".into()));
    }

    let song_archetype: Vec<usize> = (0..spec.n_songs).map(|s| s % spec.n_archetypes).collect();
    let user_archetype: Vec<usize> = (0..spec.n_users).map(|u| u % spec.n_archetypes).collect();

    let mut songs = Vec::with_capacity(spec.n_songs);
    let mut rng = sub_rng(spec.seed, "synth-songs", 0);
    for (s, &archetype) in song_archetype.iter().enumerate() {
        let channels = archetype_channels(archetype);
        let (lo, hi) = archetype_note_range(archetype);
        let n_events = rng.gen_range(spec.min_events..=spec.max_events);
        let mut tick = 0u64;
        let mut events = Vec::with_capacity(n_events);
        for _ in 0..n_events {
            tick += rng.gen_range(48..=480u64);
            events.push(MidiEvent {
                tick,
                channel: channels[rng.gen_range(0..channels.len())],
                note: rng.gen_range(lo..=hi),
                velocity: rng.gen_range(60..=110),
            });
        }
        // A mid-song tempo change on every third song, for tempo-map coverage.
        let tempo_map = if s % 3 == 2 {
            vec![TempoChange {
                tick: events[n_events / 2].tick,
                tempo: if s % 2 == 0 { 400_000 } else { 600_000 },
            }]
        } else {
            Vec::new()
        };
        songs.push(MidiSong {
            division: DIVISION,
            events,
            tempo_map,
            source_id: song_id(s),
        });
    }

    let mut interactions = Vec::new();
    let mut rng = sub_rng(spec.seed, "synth-users", 0);
    for (u, &archetype) in user_archetype.iter().enumerate() {
        let n_take = rng
            .gen_range((spec.n_songs * 3 / 5)..=(spec.n_songs * 17 / 20).max(spec.n_songs * 3 / 5));
        // Weighted sampling without replacement (larger key wins): matched
        // songs get weight 6, mismatched weight 1.
        let mut keyed: Vec<(f64, usize)> = (0..spec.n_songs)
            .map(|s| {
                let w = if song_archetype[s] == archetype {
                    6.0
                } else {
                    1.0
                };
                let k: f64 = rng.gen_range(0.0f64..1.0).powf(1.0 / w);
                (k, s)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut picked: Vec<usize> = keyed.into_iter().take(n_take).map(|(_, s)| s).collect();
        picked.sort_unstable();
        for s in picked {
            // Counts land cleanly on both sides of the default thresholds:
            // matched songs rate 5, mismatched rate 1.
            let play_count = if song_archetype[s] == archetype {
                rng.gen_range(9..=40)
            } else {
                1
            };
            interactions.push(Interaction {
                user_id: user_id(u),
                song_id: song_id(s),
                play_count,
            });
        }
    }

    Ok(SyntheticCorpus {
        songs,
        interactions,
        song_archetype,
        user_archetype,
    })
}

/// Write the corpus to disk: `midi/<song_id>.mid`, `triplets.tsv`, and the
/// planted-structure `manifest.csv` (`kind,id,archetype` rows).
pub fn write_corpus(dir: &Path, corpus: &SyntheticCorpus) -> Result<(), SynthError> {
    let io = |path: &Path, source: std::io::Error| SynthError::Io {
        path: path.display().to_string(),
        source,
    };
    let midi_dir = dir.join("midi");
    std::fs::create_dir_all(&midi_dir).map_err(|e| io(&midi_dir, e))?;
    for song in &corpus.songs {
        let bytes = write_segment_midi(song, (0, song.events.len() - 1))?;
        let path = midi_dir.join(format!("{}.mid", song.source_id));
        std::fs::write(&path, bytes).map_err(|e| io(&path, e))?;
    }

    let mut triplets = String::new();
    for it in &corpus.interactions {
        triplets.push_str(&format!(
            "{}\t{}\t{}\n",
            it.user_id, it.song_id, it.play_count
        ));
    }
    let path = dir.join("triplets.tsv");
    std::fs::write(&path, triplets).map_err(|e| io(&path, e))?;

    let mut manifest = String::from("kind,id,archetype\n");
    for (s, &a) in corpus.song_archetype.iter().enumerate() {
        manifest.push_str(&format!("song,{},{}\n", song_id(s), a));
    }
    for (u, &a) in corpus.user_archetype.iter().enumerate() {
        manifest.push_str(&format!("user,{},{}\n", user_id(u), a));
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest).map_err(|e| io(&path, e))
}

pub type ArchetypeMap = std::collections::BTreeMap<String, usize>;

/// Read `manifest.csv` back into (song_id → archetype, user_id → archetype).
pub fn load_manifest(path: &Path) -> Result<(ArchetypeMap, ArchetypeMap), SynthError> {
    let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut songs = std::collections::BTreeMap::new();
    let mut users = std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(SynthError::BadSpec(format!(
                "manifest line {}: {line:?}",
                i + 1
            )));
        }
        let archetype: usize = parts[2]
            .parse()
            .map_err(|_| SynthError::BadSpec(format!("manifest line {}: bad archetype", i + 1)))?;
        match parts[0] {
            "song" => songs.insert(parts[1].to_string(), archetype),
            "user" => users.insert(parts[1].to_string(), archetype),
            _ => {
                return Err(SynthError::BadSpec(format!(
                    "manifest line {}: bad kind",
                    i + 1
                )))
            }
        };
    }
    Ok((songs, users))
}
