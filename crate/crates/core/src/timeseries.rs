//! MIDI events to multidimensional time series.
//!
//! Each note-on event becomes one row of 32 features: columns 0–15 carry
//! note/127 for the event's channel, columns 16–31 carry velocity/127, all
//! other entries zero. Per-row tick and microsecond timestamps ride along so
//! 10-second segments can be cut later.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::midi::{MidiSong, DEFAULT_TEMPO};

/// Feature columns per row: 16 channels × (note, velocity).
pub const FEATURES: usize = 32;

pub const MICROS_PER_SEC: u64 = 1_000_000;

/// Default explanation window length in seconds.
pub const WINDOW_SECONDS: u64 = 10;

const LOOKUP_MAGIC: &[u8; 8] = b"SEERLKP1";

#[derive(Debug, Error)]
pub enum TimeseriesError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty series")]
    EmptySeries,
    #[error("duplicate song id {0:?}")]
    DuplicateSongId(String),
    #[error("series for {song:?} has {got} steps, lookup expects {expected}")]
    MismatchedSteps {
        song: String,
        got: usize,
        expected: usize,
    },
    #[error("window and stride must be at least 1 second")]
    BadWindow,
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {what}")]
    BadStore { path: String, what: String },
}

fn io_err(path: &Path, source: std::io::Error) -> TimeseriesError {
    TimeseriesError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn store_err(path: &Path, what: impl Into<String>) -> TimeseriesError {
    TimeseriesError::BadStore {
        path: path.display().to_string(),
        what: what.into(),
    }
}

/// One row per note-on event, with timestamps: the per-song series before
/// length normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    /// Row-major `n_rows × FEATURES`, values in [0, 1].
    pub data: Vec<f32>,
    /// Event time in pulses, one per row, non-decreasing.
    pub ticks: Vec<u64>,
    /// Event time in microseconds, one per row, non-decreasing.
    pub micros: Vec<u64>,
    pub song_id: String,
}

impl RawSeries {
    pub fn n_rows(&self) -> usize {
        self.ticks.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * FEATURES..(i + 1) * FEATURES]
    }

    /// Microseconds of the last event (0 for an empty series).
    pub fn duration_us(&self) -> u64 {
        self.micros.last().copied().unwrap_or(0)
    }
}

/// A length-normalized series: exactly `T` rows, zero padding past
/// `valid_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct SongTimeSeries {
    /// Row-major `T × FEATURES`.
    pub data: Vec<f32>,
    pub valid_steps: usize,
    pub song_id: String,
}

impl SongTimeSeries {
    pub fn target_steps(&self) -> usize {
        self.data.len() / FEATURES
    }
}

/// Flattened song rows: one `T·32` row per song, plus the id→row index.
#[derive(Debug, Clone, PartialEq)]
pub struct SongLookup {
    /// Row-major `n_songs × (T·FEATURES)`.
    pub matrix: Vec<f32>,
    /// Normalized step count shared by every row.
    pub target_steps: usize,
    pub index: BTreeMap<String, usize>,
    /// Per-row count of real (non-padding) steps.
    pub valid_steps: Vec<usize>,
}

impl SongLookup {
    pub fn n_songs(&self) -> usize {
        self.valid_steps.len()
    }

    /// Row `s` viewed as a `T × FEATURES` series.
    pub fn series(&self, row: usize) -> (&[f32], usize) {
        let w = self.target_steps * FEATURES;
        (&self.matrix[row * w..(row + 1) * w], self.valid_steps[row])
    }

    /// Song ids ordered by row.
    pub fn ids_by_row(&self) -> Vec<&str> {
        let mut ids = vec![""; self.n_songs()];
        for (id, &row) in &self.index {
            ids[row] = id;
        }
        ids
    }
}

/// A 10-second (or shorter) slice of a song, bounded by event rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub song_id: String,
    /// Inclusive event-row range.
    pub start_step: usize,
    pub end_step: usize,
    /// Microseconds of the first and last event inside the window.
    pub start_us: u64,
    pub end_us: u64,
}

/// Convert `tick` to absolute microseconds by piecewise accumulation over the
/// tempo map: each span contributes span_ticks / division × tempo. The sum is
/// kept as an exact integer numerator; one division rounds to nearest at the
/// end.
pub fn tick_to_micros(song: &MidiSong, tick: u64) -> u64 {
    let division = song.division as u128;
    let mut numerator: u128 = 0;
    let mut span_start: u64 = 0;
    let mut tempo: u32 = DEFAULT_TEMPO;
    for tc in &song.tempo_map {
        if tc.tick >= tick {
            break;
        }
        if tc.tick > span_start {
            numerator += (tc.tick - span_start) as u128 * tempo as u128;
            span_start = tc.tick;
        }
        tempo = tc.tempo;
    }
    numerator += (tick - span_start) as u128 * tempo as u128;
    ((numerator + division / 2) / division) as u64
}

/// One row per note-on event; see the module docs for the layout.
pub fn events_to_timeseries(song: &MidiSong) -> RawSeries {
    let n = song.events.len();
    let mut data = vec![0.0f32; n * FEATURES];
    let mut ticks = Vec::with_capacity(n);
    let mut micros = Vec::with_capacity(n);
    for (i, event) in song.events.iter().enumerate() {
        let row = &mut data[i * FEATURES..(i + 1) * FEATURES];
        row[event.channel as usize] = event.note as f32 / 127.0;
        row[16 + event.channel as usize] = event.velocity as f32 / 127.0;
        ticks.push(event.tick);
        micros.push(tick_to_micros(song, event.tick));
    }
    RawSeries {
        data,
        ticks,
        micros,
        song_id: song.source_id.clone(),
    }
}

/// The corpus-wide normalized step count: the lower median of row counts.
pub fn compute_target_t(corpus: &[RawSeries]) -> Result<usize, TimeseriesError> {
    if corpus.is_empty() {
        return Err(TimeseriesError::EmptyCorpus);
    }
    let mut counts: Vec<usize> = corpus.iter().map(|s| s.n_rows()).collect();
    counts.sort_unstable();
    Ok(counts[(counts.len() - 1) / 2])
}

/// Truncate to the first `target` rows or pad with zero rows at the tail.
pub fn normalize_length(series: &RawSeries, target: usize) -> SongTimeSeries {
    assert!(target >= 1, "target step count must be at least 1");
    let keep = series.n_rows().min(target);
    let mut data = vec![0.0f32; target * FEATURES];
    data[..keep * FEATURES].copy_from_slice(&series.data[..keep * FEATURES]);
    SongTimeSeries {
        data,
        valid_steps: keep,
        song_id: series.song_id.clone(),
    }
}

/// Flatten each normalized series into one lookup row.
pub fn build_lookup(corpus: &[SongTimeSeries]) -> Result<SongLookup, TimeseriesError> {
    if corpus.is_empty() {
        return Err(TimeseriesError::EmptyCorpus);
    }
    let target_steps = corpus[0].target_steps();
    let width = target_steps * FEATURES;
    let mut matrix = Vec::with_capacity(corpus.len() * width);
    let mut index = BTreeMap::new();
    let mut valid_steps = Vec::with_capacity(corpus.len());
    for (row, series) in corpus.iter().enumerate() {
        if series.target_steps() != target_steps {
            return Err(TimeseriesError::MismatchedSteps {
                song: series.song_id.clone(),
                got: series.target_steps(),
                expected: target_steps,
            });
        }
        if index.insert(series.song_id.clone(), row).is_some() {
            return Err(TimeseriesError::DuplicateSongId(series.song_id.clone()));
        }
        matrix.extend_from_slice(&series.data);
        valid_steps.push(series.valid_steps);
    }
    Ok(SongLookup {
        matrix,
        target_steps,
        index,
        valid_steps,
    })
}

/// Enumerate sliding windows of `window_s` seconds at `stride_s` strides.
///
/// With `L = ceil(last event μs / 1s)`, window `i` covers absolute time
/// `[(i−1)s, (i+window_s−1)s]` for `i = 1, 1+stride, ... ≤ L−window_s+1`.
/// Windows containing no events are dropped. A song no longer than the
/// window yields a single whole-song segment.
pub fn extract_segments(
    series: &RawSeries,
    window_s: u64,
    stride_s: u64,
) -> Result<Vec<Segment>, TimeseriesError> {
    if series.n_rows() == 0 {
        return Err(TimeseriesError::EmptySeries);
    }
    if window_s == 0 || stride_s == 0 {
        return Err(TimeseriesError::BadWindow);
    }
    let n = series.n_rows();
    let last = series.duration_us();
    let l_seconds = last.div_ceil(MICROS_PER_SEC);
    if l_seconds <= window_s {
        return Ok(vec![Segment {
            song_id: series.song_id.clone(),
            start_step: 0,
            end_step: n - 1,
            start_us: series.micros[0],
            end_us: last,
        }]);
    }

    let mut out = Vec::new();
    let mut i = 1u64;
    while i + window_s - 1 <= l_seconds {
        let lo = (i - 1) * MICROS_PER_SEC;
        let hi = (i + window_s - 1) * MICROS_PER_SEC;
        let a = series.micros.partition_point(|&m| m < lo);
        let b = series.micros.partition_point(|&m| m <= hi);
        if b > a {
            out.push(Segment {
                song_id: series.song_id.clone(),
                start_step: a,
                end_step: b - 1,
                start_us: series.micros[a],
                end_us: series.micros[b - 1],
            });
        }
        i += stride_s;
    }
    Ok(out)
}

/// Write `lookup.bin` and `songs.idx` into `dir`. `durations[row]` is the
/// song's last-event microsecond stamp.
pub fn save_corpus(
    dir: &Path,
    lookup: &SongLookup,
    durations: &[u64],
) -> Result<(), TimeseriesError> {
    assert_eq!(durations.len(), lookup.n_songs());
    let bin_path = dir.join("lookup.bin");
    let mut bin = std::io::BufWriter::new(
        std::fs::File::create(&bin_path).map_err(|e| io_err(&bin_path, e))?,
    );
    let mut write = |buf: &[u8]| bin.write_all(buf).map_err(|e| io_err(&bin_path, e));
    write(LOOKUP_MAGIC)?;
    write(&(lookup.target_steps as u32).to_le_bytes())?;
    write(&(FEATURES as u32).to_le_bytes())?;
    write(&(lookup.n_songs() as u32).to_le_bytes())?;
    for value in &lookup.matrix {
        write(&value.to_le_bytes())?;
    }
    bin.flush().map_err(|e| io_err(&bin_path, e))?;

    let idx_path = dir.join("songs.idx");
    let mut idx = String::new();
    for (id, &row) in &lookup.index {
        idx.push_str(&format!(
            "{id},{row},{},{}\n",
            lookup.valid_steps[row], durations[row]
        ));
    }
    std::fs::write(&idx_path, idx).map_err(|e| io_err(&idx_path, e))
}

/// Load what [`save_corpus`] wrote. Returns the lookup and per-row durations.
pub fn load_corpus(dir: &Path) -> Result<(SongLookup, Vec<u64>), TimeseriesError> {
    let bin_path = dir.join("lookup.bin");
    let mut file = std::fs::File::open(&bin_path).map_err(|e| io_err(&bin_path, e))?;
    let mut header = [0u8; 20];
    file.read_exact(&mut header)
        .map_err(|e| io_err(&bin_path, e))?;
    if &header[..8] != LOOKUP_MAGIC {
        return Err(store_err(&bin_path, "bad magic"));
    }
    let target_steps = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let features = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let n_songs = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
    if features != FEATURES {
        return Err(store_err(
            &bin_path,
            format!("feature count {features}, expected {FEATURES}"),
        ));
    }
    let mut raw = Vec::new();
    file.read_to_end(&mut raw)
        .map_err(|e| io_err(&bin_path, e))?;
    let expected = n_songs * target_steps * FEATURES * 4;
    if raw.len() != expected {
        return Err(store_err(
            &bin_path,
            format!("payload is {} bytes, expected {expected}", raw.len()),
        ));
    }
    let matrix: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let idx_path = dir.join("songs.idx");
    let text = std::fs::read_to_string(&idx_path).map_err(|e| io_err(&idx_path, e))?;
    let mut index = BTreeMap::new();
    let mut valid_steps = vec![0usize; n_songs];
    let mut durations = vec![0u64; n_songs];
    let mut seen = vec![false; n_songs];
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let fail = |what: &str| store_err(&idx_path, format!("line {}: {what}", i + 1));
        if parts.len() != 4 {
            return Err(fail("expected song_id,row,valid_steps,duration_us"));
        }
        let row: usize = parts[1].parse().map_err(|_| fail("bad row"))?;
        if row >= n_songs || seen[row] {
            return Err(fail("row out of range or repeated"));
        }
        seen[row] = true;
        valid_steps[row] = parts[2].parse().map_err(|_| fail("bad valid_steps"))?;
        durations[row] = parts[3].parse().map_err(|_| fail("bad duration_us"))?;
        index.insert(parts[0].to_string(), row);
    }
    if seen.iter().any(|s| !s) {
        return Err(store_err(&idx_path, "missing rows"));
    }
    Ok((
        SongLookup {
            matrix,
            target_steps,
            index,
            valid_steps,
        },
        durations,
    ))
}
