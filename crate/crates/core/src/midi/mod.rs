//! Standard MIDI File and MIDICSV ingestion.
//!
//! Only note-on messages survive parsing: they are what the downstream
//! time-series transform consumes. Tempo meta events are kept separately so
//! ticks can be converted to absolute time. Everything else (control changes,
//! program changes, pitch bends, other meta) is parsed for framing and
//! discarded.

mod midicsv;
mod smf;
pub mod vlq;
mod writer;

pub use midicsv::parse_midicsv;
pub use smf::parse_smf;
pub use writer::write_segment_midi;

use std::path::Path;

use thiserror::Error;

/// Microseconds per quarter note before the first tempo change.
pub const DEFAULT_TEMPO: u32 = 500_000;

#[derive(Debug, Error)]
pub enum MidiError {
    #[error("byte {offset}: {what}")]
    Malformed { offset: usize, what: String },
    #[error("row {row}: {what}")]
    CsvRow { row: usize, what: String },
    #[error("empty segment")]
    EmptySegment,
    #[error("step range {start}..={end} out of bounds for {len} events")]
    RangeOutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("unsupported file extension {0:?} (expected .mid, .midi, .smf or .csv)")]
    UnknownExtension(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn malformed(offset: usize, what: impl Into<String>) -> MidiError {
    MidiError::Malformed {
        offset,
        what: what.into(),
    }
}

/// One note-on message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MidiEvent {
    /// Absolute time in pulses.
    pub tick: u64,
    pub channel: u8,
    pub note: u8,
    pub velocity: u8,
}

/// A tempo meta event: `tempo` microseconds per quarter note from `tick` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TempoChange {
    pub tick: u64,
    pub tempo: u32,
}

/// A parsed song: tick-sorted note-on events plus the tempo map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiSong {
    /// Pulses per quarter note.
    pub division: u16,
    /// Note-on events, sorted by tick; ties keep file order.
    pub events: Vec<MidiEvent>,
    /// Tempo changes, sorted by tick. [`DEFAULT_TEMPO`] applies before the first.
    pub tempo_map: Vec<TempoChange>,
    pub source_id: String,
}

impl MidiSong {
    /// The tempo in effect at `tick`.
    pub fn tempo_at(&self, tick: u64) -> u32 {
        let mut tempo = DEFAULT_TEMPO;
        for tc in &self.tempo_map {
            if tc.tick > tick {
                break;
            }
            tempo = tc.tempo;
        }
        tempo
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Exclude note-ons with velocity 0 (semantically note-offs). Off by
    /// default: the event-type filter keeps them.
    pub drop_zero_velocity: bool,
}

/// Parse a MIDI file by extension: `.mid`/`.midi`/`.smf` as binary SMF,
/// `.csv` as MIDICSV text. The file stem becomes the song id.
pub fn parse_file(path: &Path, opts: &ParseOptions) -> Result<MidiSong, MidiError> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    let bytes = std::fs::read(path).map_err(|source| MidiError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match ext.as_str() {
        "mid" | "midi" | "smf" => parse_smf(&bytes, &id, opts),
        "csv" => parse_midicsv(&String::from_utf8_lossy(&bytes), &id, opts),
        other => Err(MidiError::UnknownExtension(other.to_string())),
    }
}

fn sort_and_filter(song: &mut MidiSong, opts: &ParseOptions) {
    if opts.drop_zero_velocity {
        song.events.retain(|e| e.velocity > 0);
    }
    song.events.sort_by_key(|e| e.tick);
    song.tempo_map.sort_by_key(|t| t.tick);
}
