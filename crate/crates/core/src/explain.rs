//! Segment forward propagation: explain a recommendation by scoring every
//! 10-second window of the song with the trained model and returning the
//! window the user is predicted to like most, exportable as a playable MIDI
//! snippet.

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::midi::{write_segment_midi, MidiError, MidiSong};
use crate::models::SeerModel;
use crate::pool::thread_pool;
use crate::timeseries::{extract_segments, RawSeries, Segment, TimeseriesError, FEATURES};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("no events to explain")]
    NoEvents,
    #[error(transparent)]
    Midi(#[from] MidiError),
    #[error(transparent)]
    Timeseries(#[from] TimeseriesError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// The winning segment for one (user, song) pair, with the full score table
/// for audit.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub user: usize,
    pub segment: Segment,
    pub predicted_rating: f32,
    pub all_segment_scores: Vec<(Segment, f32)>,
}

/// Enumerate the song's windows, score each at its natural length (no
/// padding) with the user's latent vector, and return the argmax. Ties break
/// toward the earliest segment.
pub fn segment_forward_propagation(
    model: &SeerModel,
    user: usize,
    series: &RawSeries,
    window_s: u64,
    stride_s: u64,
) -> Result<Explanation, ExplainError> {
    if series.n_rows() == 0 {
        return Err(ExplainError::NoEvents);
    }
    let segments = extract_segments(series, window_s, stride_s)?;
    let scores: Vec<f32> = thread_pool().install(|| {
        segments
            .par_iter()
            .map(|seg| {
                let rows = &series.data[seg.start_step * FEATURES..(seg.end_step + 1) * FEATURES];
                model.predict_series(user, rows, seg.end_step - seg.start_step + 1)
            })
            .collect()
    });
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let all_segment_scores: Vec<(Segment, f32)> = segments.into_iter().zip(scores).collect();
    Ok(Explanation {
        user,
        segment: all_segment_scores[best].0.clone(),
        predicted_rating: all_segment_scores[best].1,
        all_segment_scores,
    })
}

/// Write the explanation as a playable SMF plus a one-line CSV record
/// `user,song,start_us,end_us,predicted_rating` (rating at 6 decimals).
pub fn export_explanation(
    explanation: &Explanation,
    song: &MidiSong,
    user_id: &str,
    out_midi: &Path,
    out_meta: &Path,
) -> Result<(), ExplainError> {
    let bytes = write_segment_midi(
        song,
        (explanation.segment.start_step, explanation.segment.end_step),
    )?;
    std::fs::write(out_midi, bytes).map_err(|source| ExplainError::Io {
        path: out_midi.display().to_string(),
        source,
    })?;
    let line = format!(
        "{},{},{},{},{:.6}\n",
        user_id,
        song.source_id,
        explanation.segment.start_us,
        explanation.segment.end_us,
        explanation.predicted_rating
    );
    std::fs::write(out_meta, line).map_err(|source| ExplainError::Io {
        path: out_meta.display().to_string(),
        source,
    })
}
