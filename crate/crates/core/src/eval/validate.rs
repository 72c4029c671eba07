//! Content-based validation of explanations: are a user's five explanation
//! segments closer to each other (DTW) than five random segments drawn from
//! the same recommended songs?

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::Dataset;
use crate::explain::segment_forward_propagation;
use crate::models::{recommend, SeerModel, SeerRanker};
use crate::rng::sub_rng;
use crate::timeseries::{extract_segments, RawSeries, SongLookup, FEATURES, WINDOW_SECONDS};

use super::dtw::avg_pairwise_dtw;
use super::EvalError;

#[derive(Debug, Clone, PartialEq)]
pub struct DtwValidationRow {
    pub user: usize,
    /// Mean pairwise DTW among the user's 5 explanation series.
    pub dtw_e: f64,
    /// Mean pairwise DTW among 5 random 10-second segments, one per
    /// recommended song.
    pub dtw_r: f64,
}

/// Sample `n_users` users, generate each one's top-5 recommendations with
/// explanations, and emit one (dtw_e, dtw_r) row per user. Users with fewer
/// than 5 scorable candidates are skipped with a notice on stderr. Random
/// comparison segments are drawn uniformly over the song's populated
/// windows, seeded per user.
pub fn validate_explanations(
    model: &SeerModel,
    dataset: &Dataset,
    lookup: &SongLookup,
    series_by_row: &[RawSeries],
    n_users: usize,
    seed: u64,
) -> Result<Vec<DtwValidationRow>, EvalError> {
    let total = dataset.n_users();
    let mut all_users: Vec<usize> = (0..total).collect();
    all_users.shuffle(&mut sub_rng(seed, "sampling", 0));
    let mut sampled: Vec<usize> = all_users.into_iter().take(n_users.min(total)).collect();
    sampled.sort_unstable();

    let ranker = SeerRanker { model, lookup };
    let mut rows = Vec::new();
    'users: for &user in &sampled {
        let candidates = dataset.candidates(user, false);
        if candidates.len() < 5 {
            eprintln!(
                "validate: user {user} has {} scorable candidates, skipping",
                candidates.len()
            );
            continue;
        }
        let top = recommend(&ranker, user, &candidates, 5);
        let mut explanation_series: Vec<Vec<f32>> = Vec::with_capacity(5);
        let mut random_series: Vec<Vec<f32>> = Vec::with_capacity(5);
        let mut rng = sub_rng(seed, "sampling", 1 + user as u64);
        for &(song, _) in &top.items {
            let series = &series_by_row[song];
            if series.n_rows() == 0 {
                eprintln!("validate: song row {song} has no events, skipping user {user}");
                continue 'users;
            }
            let explanation = segment_forward_propagation(model, user, series, WINDOW_SECONDS, 1)
                .expect("non-empty series must explain");
            let seg = &explanation.segment;
            explanation_series.push(
                series.data[seg.start_step * FEATURES..(seg.end_step + 1) * FEATURES].to_vec(),
            );

            let windows = extract_segments(series, WINDOW_SECONDS, 1).expect("non-empty series");
            let pick = &windows[rng.gen_range(0..windows.len())];
            random_series.push(
                series.data[pick.start_step * FEATURES..(pick.end_step + 1) * FEATURES].to_vec(),
            );
        }
        let e_refs: Vec<&[f32]> = explanation_series.iter().map(|s| s.as_slice()).collect();
        let r_refs: Vec<&[f32]> = random_series.iter().map(|s| s.as_slice()).collect();
        rows.push(DtwValidationRow {
            user,
            dtw_e: avg_pairwise_dtw(&e_refs, FEATURES)?,
            dtw_r: avg_pairwise_dtw(&r_refs, FEATURES)?,
        });
    }
    Ok(rows)
}

/// Write `user,dtw_e,dtw_r` rows, user ids in text form.
pub fn save_dtw_validation(
    path: &Path,
    rows: &[DtwValidationRow],
    user_ids: &[&str],
) -> Result<(), EvalError> {
    let mut out = String::from("user,dtw_e,dtw_r\n");
    for row in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6}\n",
            user_ids[row.user], row.dtw_e, row.dtw_r
        ));
    }
    std::fs::write(path, out).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}
